//! Model assembly: layer stack, prediction heads, initialization and the
//! end-to-end forward/backward pass.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::data::TaskKind;
use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::layers::{
    egnn_a_backward, egnn_a_forward, egnn_c_backward, egnn_c_forward, global_max_pool,
    global_max_pool_backward, Activation, DenseHead, ForwardOptions, LayerKind, LayerOutput,
    LayerParameters,
};
use crate::normalize::NormScheme;
use crate::rng;
use crate::sparse::EdgeTensor;

/// Shape and wiring of a model.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Architecture {
    pub task: TaskKind,
    pub layer_kind: LayerKind,
    pub layers: usize,
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Edge channels `P`.
    pub channels: usize,
    /// Class count for node tasks, label count or 1 for graph tasks.
    pub output_dim: usize,
    pub attention_norm: NormScheme,
    /// Feed each attention layer's coefficients to the next layer as edges.
    pub adaptive_edges: bool,
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("layers", self.layers),
            ("input_dim", self.input_dim),
            ("hidden_dim", self.hidden_dim),
            ("channels", self.channels),
            ("output_dim", self.output_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// `(F_in, F_out)` per layer. Layer `l > 0` consumes the `P * F_out`
    /// concatenation of layer `l - 1`.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.layers);
        let mut f_in = self.input_dim;
        for l in 0..self.layers {
            let last = l + 1 == self.layers;
            let f_out = if last && self.task == TaskKind::NodeClassification {
                self.output_dim
            } else {
                self.hidden_dim
            };
            dims.push((f_in, f_out));
            f_in = self.channels * f_out;
        }
        dims
    }

    pub fn head_dims(&self) -> Option<(usize, usize)> {
        match self.task {
            TaskKind::NodeClassification => None,
            _ => Some((self.output_dim, self.channels * self.hidden_dim)),
        }
    }

    pub fn activation(&self, layer: usize) -> Activation {
        if self.task == TaskKind::NodeClassification && layer + 1 == self.layers {
            Activation::Identity
        } else {
            Activation::Elu
        }
    }

    /// Stable 64-bit FNV-1a digest of the architecture.
    pub fn fingerprint(&self) -> u64 {
        let desc = format!(
            "egnn-arch-v1|{}|{}|{}|{}|{}|{}|{}|{}|{}",
            self.task.as_str(),
            self.layer_kind.as_str(),
            self.layers,
            self.input_dim,
            self.hidden_dim,
            self.channels,
            self.output_dim,
            self.attention_norm.as_str(),
            self.adaptive_edges
        );
        fnv1a(desc.as_bytes())
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub arch: Architecture,
    pub layers: Vec<LayerParameters>,
    pub head: Option<DenseHead>,
    pub seed: u64,
    /// Digest of the dataset the model was trained on, 0 if unknown.
    pub dataset_fingerprint: u64,
}

fn glorot(rows: usize, cols: usize, rng: &mut rng::ModelRng) -> Dense {
    let bound = libm::sqrt(6.0 / (rows + cols) as f64);
    Dense::from_fn(rows, cols, |_, _| rng.gen_range(-bound..bound))
}

/// Glorot-uniform weights, zero biases, deterministic per seed.
pub fn init_params(arch: &Architecture, seed: u64) -> Result<ModelState> {
    arch.validate()?;
    let mut rng = rng::seeded(seed);
    let mut layers = Vec::with_capacity(arch.layers);
    for (f_in, f_out) in arch.layer_dims() {
        let w = glorot(f_out, f_in, &mut rng);
        layers.push(match arch.layer_kind {
            LayerKind::Convolution => LayerParameters::convolution(w),
            LayerKind::Attention => {
                let a = glorot(2 * f_out, 1, &mut rng).into_vec();
                LayerParameters::attention(w, a)?
            }
        });
    }
    let head = match arch.head_dims() {
        Some((out, inp)) => Some(DenseHead::new(glorot(out, inp, &mut rng), vec![0.0; out])?),
        None => None,
    };
    Ok(ModelState {
        arch: arch.clone(),
        layers,
        head,
        seed,
        dataset_fingerprint: 0,
    })
}

/// Model-level forward switches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassOptions {
    pub training: bool,
    pub input_dropout: f64,
    pub attn_dropout: f64,
    pub keep_cache: bool,
}

impl PassOptions {
    pub fn train(dropout: f64) -> Self {
        PassOptions {
            training: true,
            input_dropout: dropout,
            attn_dropout: dropout,
            keep_cache: true,
        }
    }

    pub fn eval() -> Self {
        PassOptions {
            training: false,
            input_dropout: 0.0,
            attn_dropout: 0.0,
            keep_cache: false,
        }
    }

    /// Deterministic pass with caches, for gradient checks.
    pub fn exact() -> Self {
        PassOptions {
            keep_cache: true,
            ..Self::eval()
        }
    }
}

#[derive(Debug, Clone)]
pub enum ModelOutput {
    /// `n x K` logits (channel blocks averaged).
    NodeLogits(Dense),
    Graph {
        pooled: Vec<f64>,
        argmax: Vec<usize>,
        /// Head output: logits or regression prediction.
        out: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct ModelPass {
    pub layer_outputs: Vec<LayerOutput>,
    pub output: ModelOutput,
    n: usize,
}

impl ModelPass {
    pub fn node_logits(&self) -> Option<&Dense> {
        match &self.output {
            ModelOutput::NodeLogits(l) => Some(l),
            ModelOutput::Graph { .. } => None,
        }
    }

    pub fn graph_output(&self) -> Option<&[f64]> {
        match &self.output {
            ModelOutput::Graph { out, .. } => Some(out),
            ModelOutput::NodeLogits(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub d_w: Dense,
    pub d_a: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub layers: Vec<LayerGrads>,
    pub head: Option<(Dense, Vec<f64>)>,
}

impl ModelGrads {
    /// Flat views in [`ModelState::param_specs`] order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.layers {
            out.push(l.d_w.as_slice());
            if let Some(a) = &l.d_a {
                out.push(a);
            }
        }
        if let Some((w, b)) = &self.head {
            out.push(w.as_slice());
            out.push(b);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            out.push(l.d_w.as_mut_slice());
            if let Some(a) = &mut l.d_a {
                out.push(a);
            }
        }
        if let Some((w, b)) = &mut self.head {
            out.push(w.as_mut_slice());
            out.push(b);
        }
        out
    }

    /// Accumulates `other` into `self`.
    pub fn add_assign(&mut self, other: &ModelGrads) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v *= c;
            }
        }
    }
}

/// Name, length and whether weight decay applies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub len: usize,
    pub decay: bool,
}

impl ModelState {
    pub fn fingerprint(&self) -> u64 {
        self.arch.fingerprint()
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut out = Vec::new();
        for (l, p) in self.layers.iter().enumerate() {
            out.push(ParamSpec {
                name: format!("layer{l}.w"),
                len: p.w.as_slice().len(),
                decay: true,
            });
            if let Some(a) = &p.a {
                out.push(ParamSpec {
                    name: format!("layer{l}.a"),
                    len: a.len(),
                    decay: true,
                });
            }
        }
        if let Some(h) = &self.head {
            out.push(ParamSpec {
                name: "head.w".into(),
                len: h.w.as_slice().len(),
                decay: true,
            });
            out.push(ParamSpec {
                name: "head.b".into(),
                len: h.b.len(),
                decay: false,
            });
        }
        out
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for p in &self.layers {
            out.push(p.w.as_slice());
            if let Some(a) = &p.a {
                out.push(a);
            }
        }
        if let Some(h) = &self.head {
            out.push(h.w.as_slice());
            out.push(&h.b);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for p in &mut self.layers {
            out.push(p.w.as_mut_slice());
            if let Some(a) = &mut p.a {
                out.push(a);
            }
        }
        if let Some(h) = &mut self.head {
            out.push(h.w.as_mut_slice());
            out.push(&mut h.b);
        }
        out
    }

    /// Rejects parameter shapes that do not chain per the architecture.
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let dims = self.arch.layer_dims();
        if dims.len() != self.layers.len() {
            return Err(Error::InvalidConfig(format!(
                "expected {} layers, found {}",
                dims.len(),
                self.layers.len()
            )));
        }
        for (l, ((f_in, f_out), p)) in dims.iter().zip(&self.layers).enumerate() {
            if p.w.shape() != (*f_out, *f_in) {
                return Err(Error::Shape {
                    op: "ModelState layer",
                    expected: (*f_out, *f_in),
                    found: p.w.shape(),
                });
            }
            let wants_a = self.arch.layer_kind == LayerKind::Attention;
            match (&p.a, wants_a) {
                (Some(a), true) if a.len() == 2 * f_out => {}
                (None, false) => {}
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "layer {l} attention vector does not match the layer kind"
                    )))
                }
            }
        }
        match (self.arch.head_dims(), &self.head) {
            (None, None) => Ok(()),
            (Some(dims), Some(h)) if h.w.shape() == dims && h.b.len() == dims.0 => Ok(()),
            _ => Err(Error::InvalidConfig("head does not match the task".into())),
        }
    }

    fn layer_options(&self, opts: &PassOptions) -> ForwardOptions {
        ForwardOptions {
            training: opts.training,
            input_dropout: opts.input_dropout,
            attn_dropout: opts.attn_dropout,
            attention_norm: self.arch.attention_norm,
            keep_cache: opts.keep_cache,
        }
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        x0: &Dense,
        e0: &EdgeTensor,
        opts: &PassOptions,
        rng: &mut R,
    ) -> Result<ModelPass> {
        if e0.channel_count() != self.arch.channels {
            return Err(Error::Shape {
                op: "model forward channels",
                expected: (self.arch.channels, 1),
                found: (e0.channel_count(), 1),
            });
        }
        let layer_opts = self.layer_options(opts);
        let adaptive =
            self.arch.adaptive_edges && self.arch.layer_kind == LayerKind::Attention;
        let mut outputs: Vec<LayerOutput> = Vec::with_capacity(self.layers.len());
        for (l, params) in self.layers.iter().enumerate() {
            let x = outputs.last().map_or(x0, |o| &o.x_out);
            let e = match outputs.last() {
                Some(prev) if adaptive => &prev.e_out,
                _ => e0,
            };
            let act = self.arch.activation(l);
            let out = match self.arch.layer_kind {
                LayerKind::Convolution => egnn_c_forward(x, e, params, act, &layer_opts, rng)?,
                LayerKind::Attention => egnn_a_forward(x, e, params, act, &layer_opts, rng)?,
            };
            outputs.push(out);
        }
        let last = &outputs.last().expect("at least one layer").x_out;
        let n = x0.rows();
        let output = match self.arch.task {
            TaskKind::NodeClassification => {
                let k = self.arch.output_dim;
                let p = self.arch.channels;
                let mut logits = Dense::zeros(n, k);
                for i in 0..n {
                    let row = last.row(i);
                    for (c, out) in logits.row_mut(i).iter_mut().enumerate() {
                        *out = (0..p).map(|b| row[b * k + c]).sum::<f64>() / p as f64;
                    }
                }
                ModelOutput::NodeLogits(logits)
            }
            _ => {
                let (pooled, argmax) = global_max_pool(last)?;
                let head = self.head.as_ref().ok_or(Error::MissingCache)?;
                let out = head.forward(&pooled)?;
                ModelOutput::Graph {
                    pooled,
                    argmax,
                    out,
                }
            }
        };
        Ok(ModelPass {
            layer_outputs: outputs,
            output,
            n,
        })
    }

    /// Backpropagates `d_output` (w.r.t. node logits, or w.r.t. the head
    /// output for graph tasks) through the whole stack, including the
    /// edge path `E^l = α^l` when edges are adaptive.
    pub fn backward(&self, pass: &ModelPass, d_output: &[f64]) -> Result<ModelGrads> {
        let p = self.arch.channels;
        let (mut d_x, head_grads) = match &pass.output {
            ModelOutput::NodeLogits(logits) => {
                let k = self.arch.output_dim;
                if d_output.len() != logits.as_slice().len() {
                    return Err(Error::Shape {
                        op: "model backward",
                        expected: logits.shape(),
                        found: (d_output.len(), 1),
                    });
                }
                let mut d = Dense::zeros(pass.n, p * k);
                for i in 0..pass.n {
                    for c in 0..k {
                        let g = d_output[i * k + c] / p as f64;
                        for b in 0..p {
                            d.set(i, b * k + c, g);
                        }
                    }
                }
                (d, None)
            }
            ModelOutput::Graph { pooled, argmax, .. } => {
                let head = self.head.as_ref().ok_or(Error::MissingCache)?;
                let hg = head.backward(pooled, d_output)?;
                let d = global_max_pool_backward(argmax, pass.n, &hg.d_v);
                (d, Some((hg.d_w, hg.d_b)))
            }
        };
        let adaptive =
            self.arch.adaptive_edges && self.arch.layer_kind == LayerKind::Attention;
        let mut layer_grads = vec![None; self.layers.len()];
        let mut d_e: Option<Vec<Vec<f64>>> = None;
        for l in (0..self.layers.len()).rev() {
            let out = &pass.layer_outputs[l];
            let params = &self.layers[l];
            let want_input = l > 0;
            let bundle = match self.arch.layer_kind {
                LayerKind::Convolution => egnn_c_backward(params, out, &d_x, want_input)?,
                LayerKind::Attention => {
                    egnn_a_backward(params, out, &d_x, d_e.as_deref(), want_input)?
                }
            };
            layer_grads[l] = Some(LayerGrads {
                d_w: bundle.d_w,
                d_a: bundle.d_a,
            });
            if want_input {
                d_x = bundle.d_x_in.expect("requested");
                d_e = adaptive.then_some(bundle.d_e_in);
            }
        }
        Ok(ModelGrads {
            layers: layer_grads.into_iter().map(|g| g.expect("filled")).collect(),
            head: head_grads,
        })
    }
}
