//! Binary model files.
//!
//! ```text
//! magic  "EGNNMODL"           8 bytes
//! version                     u8 (= 1)
//! architecture fingerprint    u64
//! dataset fingerprint         u64
//! seed                        u64
//! task, layer kind            u8, u8 (0 attn, 1 conv)
//! layers, input, hidden,
//! channels, output            5 x u64
//! attention norm, adaptive    u8, u8
//! tensors                     len-prefixed f64s, in parameter order
//! ```

use std::path::Path;

use egnn_core::data::TaskKind;
use egnn_core::layers::LayerKind;
use egnn_core::model::{init_params, Architecture, ModelState};

use crate::binio::{Reader, Writer};
use crate::bundle::{norm_code, norm_from_code, task_from_code, task_to_code};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"EGNNMODL";
pub const MODEL_VERSION: u8 = 1;

pub fn model_to_bytes(model: &ModelState) -> Vec<u8> {
    let a = &model.arch;
    let mut w = Writer::new();
    w.bytes(MODEL_MAGIC);
    w.u8(MODEL_VERSION);
    w.u64(a.fingerprint());
    w.u64(model.dataset_fingerprint);
    w.u64(model.seed);
    w.u8(task_to_code(a.task));
    w.u8(match a.layer_kind {
        LayerKind::Attention => 0,
        LayerKind::Convolution => 1,
    });
    for v in [a.layers, a.input_dim, a.hidden_dim, a.channels, a.output_dim] {
        w.usize(v);
    }
    w.u8(norm_code(a.attention_norm));
    w.u8(a.adaptive_edges as u8);
    for t in model.tensors() {
        w.f64s(t);
    }
    w.buf
}

pub fn model_from_bytes(data: &[u8]) -> Result<ModelState> {
    let mut r = Reader::new("model", data);
    if r.bytes(8)? != MODEL_MAGIC {
        return Err(r.corrupt("not an EGNN model (bad magic)"));
    }
    let version = r.u8()?;
    if version != MODEL_VERSION {
        return Err(r.corrupt(format!("unsupported version {version}")));
    }
    let stored = r.u64()?;
    let dataset_fingerprint = r.u64()?;
    let seed = r.u64()?;
    let task = task_from_code(r.u8()?).ok_or_else(|| r.corrupt("unknown task code"))?;
    let layer_kind = match r.u8()? {
        0 => LayerKind::Attention,
        1 => LayerKind::Convolution,
        c => return Err(r.corrupt(format!("unknown layer kind {c}"))),
    };
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = r.usize()?;
    }
    let attention_norm = norm_from_code(r.u8()?).ok_or_else(|| r.corrupt("unknown normalization code"))?;
    let adaptive_edges = match r.u8()? {
        0 => false,
        1 => true,
        b => return Err(r.corrupt(format!("invalid flag byte {b}"))),
    };
    let arch = Architecture {
        task,
        layer_kind,
        layers: dims[0],
        input_dim: dims[1],
        hidden_dim: dims[2],
        channels: dims[3],
        output_dim: dims[4],
        attention_norm,
        adaptive_edges,
    };
    let found = arch.fingerprint();
    if found != stored {
        return Err(Error::Fingerprint {
            what: "model architecture",
            expected: stored,
            found,
        });
    }
    arch.validate()?;
    if param_count(&arch).map_or(true, |c| c.saturating_mul(8) > data.len()) {
        return Err(r.corrupt("architecture larger than the file"));
    }
    let mut model = init_params(&arch, 0)?;
    for (t, spec) in model.tensors_mut().into_iter().zip(arch_specs(&arch)?) {
        let values = r.f64s()?;
        if values.len() != t.len() {
            return Err(r.corrupt(format!(
                "{spec} holds {} values, expected {}",
                values.len(),
                t.len()
            )));
        }
        t.copy_from_slice(&values);
    }
    r.finish()?;
    model.seed = seed;
    model.dataset_fingerprint = dataset_fingerprint;
    model.validate()?;
    Ok(model)
}

/// Lower bound on the stored scalars, `None` on overflow.
fn param_count(arch: &Architecture) -> Option<usize> {
    let mut total = 0usize;
    let mut f_in = arch.input_dim;
    for l in 0..arch.layers {
        let last = l + 1 == arch.layers;
        let f_out = if last && arch.task == TaskKind::NodeClassification {
            arch.output_dim
        } else {
            arch.hidden_dim
        };
        total = total.checked_add(f_out.checked_mul(f_in)?)?;
        f_in = arch.channels.checked_mul(f_out)?;
    }
    if arch.task != TaskKind::NodeClassification {
        total = total.checked_add(arch.output_dim.checked_mul(f_in)?.checked_add(arch.output_dim)?)?;
    }
    Some(total)
}

fn arch_specs(arch: &Architecture) -> Result<Vec<String>> {
    Ok(init_params(arch, 0)?.param_specs().into_iter().map(|s| s.name).collect())
}

pub fn save_model(model: &ModelState, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelState> {
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&data)
}
