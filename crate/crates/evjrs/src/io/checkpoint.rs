//! Model checkpoint: magic, `u32` version, then `u64` fields
//! (d_model, heads, ffn_hidden, classifier_hidden, n_per_ev, horizon,
//! encoder layers, token types, parameter count), then f64 normalization
//! minima and maxima (4 each), thresholds `thr_0`, `thr_1`, and every
//! parameter tensor in declared order. All little-endian.

use std::path::Path;

use evjrs_core::instances::NormStats;
use evjrs_core::learner::{
    ModelConfig, Thresholds, TransformerParams, ENCODER_LAYERS, TOKEN_TYPES,
};

use super::{read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::pipeline::Predictor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"EVJRSCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(p: &Predictor) -> Vec<u8> {
    let c = &p.params.config;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let ints = [
        c.d_model,
        c.heads,
        c.ffn_hidden,
        c.classifier_hidden,
        c.n_per_ev,
        c.horizon,
        ENCODER_LAYERS,
        TOKEN_TYPES,
        p.params.parameter_count(),
    ];
    for v in ints {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    let floats = p
        .stats
        .min
        .iter()
        .chain(&p.stats.max)
        .chain([&p.thresholds.thr_0, &p.thresholds.thr_1]);
    for v in floats {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for t in p.params.tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.path,
                Some(self.pos),
                "truncated checkpoint",
            ));
        }
        self.pos += n;
        Ok(&self.bytes[self.pos - n..self.pos])
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v)
            .map_err(|_| Error::format(self.path, Some(self.pos - 8), "integer field out of range"))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(path: &Path, bytes: &[u8]) -> Result<Predictor> {
    let mut r = Reader {
        path,
        bytes,
        pos: 0,
    };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::format(path, Some(0), "not a checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(
            path,
            Some(8),
            format!("unsupported checkpoint version {version}"),
        ));
    }
    let mut ints = [0usize; 9];
    for v in &mut ints {
        *v = r.u64()?;
    }
    let [d_model, heads, ffn_hidden, classifier_hidden, n_per_ev, horizon, layers, types, count] =
        ints;
    if layers != ENCODER_LAYERS || types != TOKEN_TYPES {
        return Err(Error::format(
            path,
            Some(12),
            format!("checkpoint has {layers} layers and {types} token types"),
        ));
    }
    let config = ModelConfig {
        d_model,
        heads,
        ffn_hidden,
        classifier_hidden,
        n_per_ev,
        horizon,
    };
    let mut params = TransformerParams::init(&config, 0)?;
    if params.parameter_count() != count {
        return Err(Error::format(
            path,
            Some(12),
            format!(
                "parameter count {count} does not match the config ({})",
                params.parameter_count()
            ),
        ));
    }
    let mut stats = NormStats {
        min: [0.0; 4],
        max: [0.0; 4],
    };
    for v in stats.min.iter_mut().chain(stats.max.iter_mut()) {
        *v = r.f64()?;
    }
    let thresholds = Thresholds {
        thr_0: r.f64()?,
        thr_1: r.f64()?,
    };
    thresholds.validate()?;
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v = r.f64()?;
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::format(
            path,
            Some(r.pos),
            "trailing bytes after parameters",
        ));
    }
    if !params.is_finite() {
        return Err(Error::format(path, None, "non-finite parameter"));
    }
    Ok(Predictor {
        params,
        thresholds,
        stats,
    })
}

pub fn read_checkpoint(path: &Path) -> Result<Predictor> {
    decode_checkpoint(path, &read_bytes(path)?)
}

pub fn write_checkpoint(path: &Path, p: &Predictor) -> Result<()> {
    write_bytes(path, &encode_checkpoint(p))
}
