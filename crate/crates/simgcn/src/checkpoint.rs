//! Versioned binary checkpoint: run configuration, every named tensor with
//! its group and shape, and the three Adam states.
//!
//! ```text
//! magic  b"SGCNCKPT" | u32 version (= 1)
//! u64 seed
//! u32 input_dim | u32 hidden | u32 proj_dim | u32 gcn_out | u32 head_hidden
//! f64 margin | f64 l2 | f64 lr_triplet | f64 lr_regression | f64 lr_sparsity
//! f64 beta1 | f64 beta2 | f64 eps
//! u32 batch_size | u32 epochs | u32 timesteps | u32 triplets_per_epoch (0 = all)
//! u32 n_thresholds | f64 × n_thresholds
//! u32 n_tensors, then per tensor:
//!   u8 group | u32 name_len | name (UTF-8) | u32 rows | u32 cols | f64 × rows·cols
//! 3 × optimiser, in sparsity, triplet, regression order:
//!   u8 group | u64 step | f64 lr | f64 beta1 | f64 beta2 | f64 eps
//!   u32 n_slots, then per slot: u32 rows | u32 cols | f64 × m | f64 × v
//! ```
//!
//! Group codes: 0 triplet, 1 regression, 2 sparsity. Everything little-endian.

use std::path::Path;

use simgcn_core::linalg::Matrix;
use simgcn_core::model::{Model, ModelConfig, ParamGroup};
use simgcn_core::optim::{Adam, Hyperparameters};
use simgcn_core::pipeline::{Optimizers, RunConfig};

use crate::error::AppError;
use crate::wire::{Reader, Writer};

pub const MAGIC: &[u8; 8] = b"SGCNCKPT";
pub const VERSION: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub model: Model,
    pub optimizers: Optimizers,
}

fn bad(msg: String) -> AppError {
    AppError::Data(format!("checkpoint: {msg}"))
}

pub fn encode(ck: &Checkpoint) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u32(VERSION);
    let c = &ck.config;
    w.u64(c.seed);
    let m = &c.model;
    for d in [m.input_dim, m.hidden, m.proj_dim, m.gcn_out, m.head_hidden] {
        w.u32(d);
    }
    let h = &c.hyper;
    w.f64s(&[
        h.margin,
        h.l2,
        h.lr_triplet,
        h.lr_regression,
        h.lr_sparsity,
        h.beta1,
        h.beta2,
        h.eps,
    ]);
    w.u32(h.batch_size);
    w.u32(h.epochs);
    w.u32(h.timesteps);
    w.u32(c.triplets_per_epoch.unwrap_or(0));
    w.u32(c.thresholds.len());
    w.f64s(&c.thresholds);

    let tensors = ck.model.named_tensors();
    w.u32(tensors.len());
    for (group, name, t) in tensors {
        w.u8(group.code());
        w.u32(name.len());
        w.bytes(name.as_bytes());
        w.u32(t.rows());
        w.u32(t.cols());
        w.f64s(t.as_slice());
    }
    for group in ParamGroup::ALL {
        let a = ck.optimizers.get(group);
        w.u8(group.code());
        w.u64(a.step);
        w.f64s(&[a.lr, a.beta1, a.beta2, a.eps]);
        w.u32(a.m.len());
        for (m, v) in a.m.iter().zip(&a.v) {
            w.u32(m.rows());
            w.u32(m.cols());
            w.f64s(m.as_slice());
            w.f64s(v.as_slice());
        }
    }
    w.buf
}

fn read_matrix(
    r: &mut Reader<'_>,
    rows: usize,
    cols: usize,
    what: &str,
) -> Result<Matrix, AppError> {
    let values = r.f64s(rows.saturating_mul(cols), what)?;
    Matrix::from_vec(rows, cols, values).map_err(|e| bad(format!("{what}: {e}")))
}

fn read_group(r: &mut Reader<'_>) -> Result<ParamGroup, AppError> {
    let code = r.u8("group")?;
    ParamGroup::from_code(code).ok_or_else(|| bad(format!("unknown group code {code}")))
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, AppError> {
    let mut r = Reader::new(bytes);
    if r.take(8, "magic")? != MAGIC {
        return Err(bad("bad magic; not a checkpoint".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let seed = r.u64("seed")?;
    let model_cfg = ModelConfig {
        input_dim: r.u32("input_dim")?,
        hidden: r.u32("hidden")?,
        proj_dim: r.u32("proj_dim")?,
        gcn_out: r.u32("gcn_out")?,
        head_hidden: r.u32("head_hidden")?,
    };
    let f = r.f64s(8, "hyperparameters")?;
    let hyper = Hyperparameters {
        margin: f[0],
        l2: f[1],
        lr_triplet: f[2],
        lr_regression: f[3],
        lr_sparsity: f[4],
        beta1: f[5],
        beta2: f[6],
        eps: f[7],
        batch_size: r.u32("batch_size")?,
        epochs: r.u32("epochs")?,
        timesteps: r.u32("timesteps")?,
    };
    let cap = r.u32("triplets_per_epoch")?;
    let nt = r.u32("threshold count")?;
    let thresholds = r.f64s(nt, "thresholds")?;
    let config = RunConfig {
        hyper,
        model: model_cfg,
        thresholds,
        triplets_per_epoch: (cap > 0).then_some(cap),
        seed,
    };
    config.validate().map_err(|e| bad(e.to_string()))?;

    // The architecture fixes names, order and shapes; the file must match it.
    let mut model = Model::init(model_cfg, 0).map_err(|e| bad(e.to_string()))?;
    let expected: Vec<(ParamGroup, String, (usize, usize))> = model
        .named_tensors()
        .into_iter()
        .map(|(g, n, t)| (g, n, t.shape()))
        .collect();
    let n = r.u32("tensor count")?;
    if n != expected.len() {
        return Err(bad(format!(
            "{n} tensors, architecture has {}",
            expected.len()
        )));
    }
    let mut loaded = Vec::with_capacity(n);
    for (group, name, shape) in &expected {
        let g = read_group(&mut r)?;
        let len = r.u32("name length")?;
        let got =
            String::from_utf8(r.take(len, "name")?.to_vec()).map_err(|e| bad(e.to_string()))?;
        let (rows, cols) = (r.u32("rows")?, r.u32("cols")?);
        if g != *group || got != *name || (rows, cols) != *shape {
            return Err(bad(format!(
                "tensor {got:?} ({g:?}, {rows}x{cols}) where {name:?} ({group:?}, {}x{}) was expected",
                shape.0, shape.1
            )));
        }
        loaded.push(read_matrix(&mut r, rows, cols, name)?);
    }
    for ((_, t), v) in model.tensors_mut().into_iter().zip(loaded) {
        *t = v;
    }

    let mut optimizers = Optimizers::new(&model, &config.hyper);
    for group in ParamGroup::ALL {
        let g = read_group(&mut r)?;
        if g != group {
            return Err(bad(format!("optimiser {g:?} where {group:?} was expected")));
        }
        let step = r.u64("step")?;
        let p = r.f64s(4, "optimiser settings")?;
        let slots = r.u32("slot count")?;
        let shapes: Vec<(usize, usize)> = model
            .group_tensors(group)
            .iter()
            .map(|t| t.shape())
            .collect();
        if slots != shapes.len() {
            return Err(bad(format!(
                "{group:?} optimiser has {slots} slots, group has {}",
                shapes.len()
            )));
        }
        let (mut m, mut v) = (Vec::with_capacity(slots), Vec::with_capacity(slots));
        for &shape in &shapes {
            let (rows, cols) = (r.u32("rows")?, r.u32("cols")?);
            if (rows, cols) != shape {
                return Err(bad(format!(
                    "{group:?} moment {rows}x{cols}, parameter {shape:?}"
                )));
            }
            m.push(read_matrix(&mut r, rows, cols, "first moment")?);
            v.push(read_matrix(&mut r, rows, cols, "second moment")?);
        }
        *optimizers.get_mut(group) = Adam {
            lr: p[0],
            beta1: p[1],
            beta2: p[2],
            eps: p[3],
            step,
            m,
            v,
        };
    }
    r.finish("checkpoint")?;
    Ok(Checkpoint {
        config,
        model,
        optimizers,
    })
}

pub fn save(path: &Path, ck: &Checkpoint) -> Result<(), AppError> {
    std::fs::write(path, encode(ck)).map_err(|e| AppError::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint, AppError> {
    decode(&std::fs::read(path).map_err(|e| AppError::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut config = RunConfig::new(3, 21);
        config.model.hidden = 5;
        config.triplets_per_epoch = Some(7);
        let model = Model::init(config.model, 21).unwrap();
        let mut optimizers = Optimizers::new(&model, &config.hyper);
        optimizers.triplet.step = 3;
        optimizers.sparsity.m[1] = Matrix::filled(1, model.config.proj_dim, 0.25);
        Checkpoint {
            config,
            model,
            optimizers,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        let bytes = encode(&ck);
        assert_eq!(&bytes[..8], MAGIC);
        let back = decode(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn damage_is_detected() {
        let bytes = encode(&sample());
        assert!(decode(&bytes[..bytes.len() - 8]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(decode(&magic).is_err());
        assert!(decode(b"").is_err());
    }
}
