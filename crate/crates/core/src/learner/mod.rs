//! Fleet-size-agnostic transformer that predicts the binary block of a
//! deterministic solve, one token per load, PV unit and EV.
//!
//! Attention runs across tokens, so the same parameters accept any number of
//! EV rows; the classifier reads only the EV tokens and emits `n_per_ev`
//! probabilities for each.

mod mat;
mod model;
mod train;

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use mat::Mat;
pub use model::{attention_weights, backward, bce_loss, encode, forward, Cache, LAYER_NORM_EPS};
pub use train::{
    calibrate_thresholds, class_accuracy, predict, predict_and_filter, thresholds_from_pairs,
    train, train_from, Adam, Epoch, LabeledExample, TrainConfig,
};

/// Encoder depth.
pub const ENCODER_LAYERS: usize = 2;
pub const TOKEN_TYPES: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub heads: usize,
    /// Width of the position-wise feed-forward sublayer.
    pub ffn_hidden: usize,
    /// Widths of the two hidden classifier layers.
    pub classifier_hidden: usize,
    pub n_per_ev: usize,
    pub horizon: usize,
}

impl ModelConfig {
    pub fn new(n_per_ev: usize, horizon: usize) -> ModelConfig {
        ModelConfig {
            d_model: 64,
            heads: 4,
            ffn_hidden: 128,
            classifier_hidden: 64,
            n_per_ev,
            horizon,
        }
    }

    pub fn d_k(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        if self.heads == 0 || self.d_model == 0 || self.d_model % self.heads != 0 {
            return Err(LearnError::Config(alloc::format!(
                "d_model {} not divisible by heads {}",
                self.d_model,
                self.heads
            )));
        }
        if self.n_per_ev == 0
            || self.horizon == 0
            || self.ffn_hidden == 0
            || self.classifier_hidden == 0
        {
            return Err(LearnError::Config(String::from(
                "every width must be positive",
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderLayer {
    pub wq: Mat,
    pub wk: Mat,
    pub wv: Mat,
    pub wm: Mat,
    pub ln1_gain: Vec<f64>,
    pub ln1_bias: Vec<f64>,
    pub ffn_w1: Mat,
    pub ffn_b1: Vec<f64>,
    pub ffn_w2: Mat,
    pub ffn_b2: Vec<f64>,
    pub ln2_gain: Vec<f64>,
    pub ln2_bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformerParams {
    pub config: ModelConfig,
    /// `horizon x d_model`
    pub embed_w: Mat,
    pub embed_b: Vec<f64>,
    /// `TOKEN_TYPES x d_model`
    pub type_embed: Mat,
    pub layers: Vec<EncoderLayer>,
    pub cls_w1: Mat,
    pub cls_b1: Vec<f64>,
    pub cls_w2: Mat,
    pub cls_b2: Vec<f64>,
    pub cls_w3: Mat,
    pub cls_b3: Vec<f64>,
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    let limit = libm::sqrt(6.0 / (rows + cols) as f64);
    Mat::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.gen_range(-limit..limit))
            .collect(),
    )
}

impl TransformerParams {
    pub fn init(config: &ModelConfig, seed: u64) -> Result<TransformerParams, LearnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d_model;
        let z = |n: usize| alloc::vec![0.0; n];
        let one = |n: usize| alloc::vec![1.0; n];
        let embed_w = glorot(&mut rng, config.horizon, d);
        let type_embed = Mat::from_vec(
            TOKEN_TYPES,
            d,
            (0..TOKEN_TYPES * d)
                .map(|_| rng.gen_range(-0.1..0.1))
                .collect(),
        );
        let mut layers = Vec::new();
        for _ in 0..ENCODER_LAYERS {
            layers.push(EncoderLayer {
                wq: glorot(&mut rng, d, d),
                wk: glorot(&mut rng, d, d),
                wv: glorot(&mut rng, d, d),
                wm: glorot(&mut rng, d, d),
                ln1_gain: one(d),
                ln1_bias: z(d),
                ffn_w1: glorot(&mut rng, d, config.ffn_hidden),
                ffn_b1: z(config.ffn_hidden),
                ffn_w2: glorot(&mut rng, config.ffn_hidden, d),
                ffn_b2: z(d),
                ln2_gain: one(d),
                ln2_bias: z(d),
            });
        }
        let h = config.classifier_hidden;
        Ok(TransformerParams {
            config: config.clone(),
            embed_w,
            embed_b: z(d),
            type_embed,
            layers,
            cls_w1: glorot(&mut rng, d, h),
            cls_b1: z(h),
            cls_w2: glorot(&mut rng, h, h),
            cls_b2: z(h),
            cls_w3: glorot(&mut rng, h, config.n_per_ev),
            cls_b3: z(config.n_per_ev),
        })
    }

    /// Same shapes, every entry zero. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> TransformerParams {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
        out
    }

    /// Every parameter tensor as a flat slice, in the declared order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> =
            alloc::vec![&self.embed_w.data, &self.embed_b, &self.type_embed.data];
        for l in &self.layers {
            v.extend([
                &l.wq.data[..],
                &l.wk.data,
                &l.wv.data,
                &l.wm.data,
                &l.ln1_gain,
                &l.ln1_bias,
                &l.ffn_w1.data,
                &l.ffn_b1,
                &l.ffn_w2.data,
                &l.ffn_b2,
                &l.ln2_gain,
                &l.ln2_bias,
            ]);
        }
        v.extend([
            &self.cls_w1.data[..],
            &self.cls_b1,
            &self.cls_w2.data,
            &self.cls_b2,
            &self.cls_w3.data,
            &self.cls_b3,
        ]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = alloc::vec![
            &mut self.embed_w.data[..],
            &mut self.embed_b[..],
            &mut self.type_embed.data[..]
        ];
        for l in &mut self.layers {
            v.extend([
                &mut l.wq.data[..],
                &mut l.wk.data[..],
                &mut l.wv.data[..],
                &mut l.wm.data[..],
                &mut l.ln1_gain[..],
                &mut l.ln1_bias[..],
                &mut l.ffn_w1.data[..],
                &mut l.ffn_b1[..],
                &mut l.ffn_w2.data[..],
                &mut l.ffn_b2[..],
                &mut l.ln2_gain[..],
                &mut l.ln2_bias[..],
            ]);
        }
        v.extend([
            &mut self.cls_w1.data[..],
            &mut self.cls_b1[..],
            &mut self.cls_w2.data[..],
            &mut self.cls_b2[..],
            &mut self.cls_w3.data[..],
            &mut self.cls_b3[..],
        ]);
        v
    }

    /// Names aligned with [`tensors`](Self::tensors).
    pub fn tensor_names() -> Vec<String> {
        let mut v: Vec<String> = ["embed_w", "embed_b", "type_embed"]
            .iter()
            .map(|s| String::from(*s))
            .collect();
        for i in 0..ENCODER_LAYERS {
            for n in [
                "wq", "wk", "wv", "wm", "ln1_gain", "ln1_bias", "ffn_w1", "ffn_b1", "ffn_w2",
                "ffn_b2", "ln2_gain", "ln2_bias",
            ] {
                v.push(alloc::format!("layer{i}.{n}"));
            }
        }
        v.extend(
            ["cls_w1", "cls_b1", "cls_w2", "cls_b2", "cls_w3", "cls_b3"]
                .iter()
                .map(|s| String::from(*s)),
        );
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub thr_0: f64,
    pub thr_1: f64,
}

impl Thresholds {
    /// Thresholds no probability below 1 can meet.
    pub const VACUOUS: Thresholds = Thresholds {
        thr_0: 1.0,
        thr_1: 1.0,
    };

    pub fn validate(&self) -> Result<(), LearnError> {
        if (0.0..=1.0).contains(&self.thr_0) && (0.0..=1.0).contains(&self.thr_1) {
            Ok(())
        } else {
            Err(LearnError::Config(alloc::format!(
                "thresholds {:?} outside [0, 1]",
                self
            )))
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum LearnError {
    #[error("shape mismatch in {dimension}: expected {expected}, got {got}")]
    Shape {
        dimension: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("class {0} absent from validation labels")]
    MissingClass(u8),
    #[error(transparent)]
    Instance(#[from] crate::instances::InstanceError),
}
