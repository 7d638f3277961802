//! Convolution layer: `X_out = act(‖_p E_p X Wᵀ)`.

use alloc::vec::Vec;
use rand::Rng;

use super::{
    activation_backward, check_shapes, edge_value_grad, linear_backward, Activation, ConvCache,
    ForwardOptions, GradientBundle, LayerCache, LayerOutput, LayerParameters,
};
use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::sparse::EdgeTensor;

pub fn egnn_c_forward<R: Rng + ?Sized>(
    x: &Dense,
    e: &EdgeTensor,
    params: &LayerParameters,
    act: Activation,
    opts: &ForwardOptions,
    rng: &mut R,
) -> Result<LayerOutput> {
    check_shapes("egnn_c_forward", x, e, params)?;
    let (x_in, input_mask) = super::dropout(x, opts.input_dropout, rng, opts.training)?;
    let h = x_in.matmul_t(&params.w)?;
    let f_out = params.out_dim();
    let p_count = e.channel_count();
    let mut z = Dense::zeros(x.rows(), p_count * f_out);
    for (p, channel) in e.channels().iter().enumerate() {
        let y = channel.spmm(&h)?;
        for i in 0..x.rows() {
            z.row_mut(i)[p * f_out..(p + 1) * f_out].copy_from_slice(y.row(i));
        }
    }
    let x_out = z.map(|v| act.apply(v));
    let cache = opts.keep_cache.then(|| {
        LayerCache::Conv(ConvCache {
            x_in,
            input_mask,
            h,
            z,
            act,
        })
    });
    Ok(LayerOutput {
        x_out,
        e_out: e.clone(),
        cache,
    })
}

pub fn egnn_c_backward(
    params: &LayerParameters,
    out: &LayerOutput,
    d_x_out: &Dense,
    want_input_grad: bool,
) -> Result<GradientBundle> {
    let cache = match &out.cache {
        Some(LayerCache::Conv(c)) => c,
        _ => return Err(Error::MissingCache),
    };
    let dz = activation_backward(&cache.z, cache.act, d_x_out)?;
    let f_out = params.out_dim();
    let mut dh = Dense::zeros(cache.h.rows(), f_out);
    let mut d_e_in = Vec::with_capacity(out.e_out.channel_count());
    for (p, channel) in out.e_out.channels().iter().enumerate() {
        let dy = dz.column_block(p * f_out, f_out);
        dh.add_assign(&channel.spmm_t(&dy)?)?;
        d_e_in.push(edge_value_grad(channel, &dz, p, f_out, &cache.h));
    }
    let (d_w, d_x_in) = linear_backward(
        &dh,
        &cache.x_in,
        &params.w,
        cache.input_mask.as_deref(),
        want_input_grad,
    )?;
    Ok(GradientBundle {
        d_x_in,
        d_w,
        d_a: None,
        d_e_in,
    })
}
