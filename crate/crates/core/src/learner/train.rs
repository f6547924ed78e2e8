use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{backward, bce_loss, forward};
use super::{LearnError, Mat, ModelConfig, Thresholds, TransformerParams};
use crate::instances::{encode_features, FeatureTensor, NormStats, ProblemInstance};
use crate::mip::PartialAssignment;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub features: FeatureTensor,
    /// `e x n_per_ev` bits, EV-major.
    pub labels: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            epochs: 60,
            learning_rate: 1e-3,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Epoch {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` without a validation split.
    pub validation_loss: Option<f64>,
}

pub struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(params: &TransformerParams, cfg: &TrainConfig) -> Adam {
        let zeros: Vec<Vec<f64>> = params
            .tensors()
            .iter()
            .map(|t| vec![0.0; t.len()])
            .collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            step: 0,
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
        }
    }

    pub fn step(&mut self, params: &mut TransformerParams, grads: &TransformerParams) {
        self.step += 1;
        let c1 = 1.0 - libm::pow(self.beta1, f64::from(self.step));
        let c2 = 1.0 - libm::pow(self.beta2, f64::from(self.step));
        for (i, (p, g)) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .enumerate()
        {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                p[j] -= self.lr * (m[j] / c1) / (libm::sqrt(v[j] / c2) + self.eps);
            }
        }
    }
}

/// Mean per-bit loss over a set of examples.
fn dataset_loss(params: &TransformerParams, data: &[LabeledExample]) -> Result<f64, LearnError> {
    let mut total = 0.0;
    let mut bits = 0usize;
    for ex in data {
        let (p, _) = forward(params, &ex.features)?;
        total += bce_loss(&p.data, &ex.labels)? * ex.labels.len() as f64;
        bits += ex.labels.len();
    }
    Ok(if bits == 0 { 0.0 } else { total / bits as f64 })
}

/// Seeded mini-batch training. Each batch is processed sample by sample, with
/// gradients accumulated and the loss averaged over every bit in the batch,
/// so samples with different fleet sizes mix without padding.
pub fn train(
    data: &[LabeledExample],
    validation: &[LabeledExample],
    model: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(TransformerParams, Vec<Epoch>), LearnError> {
    let params = TransformerParams::init(model, cfg.seed)?;
    train_from(params, data, validation, cfg)
}

pub fn train_from(
    mut params: TransformerParams,
    data: &[LabeledExample],
    validation: &[LabeledExample],
    cfg: &TrainConfig,
) -> Result<(TransformerParams, Vec<Epoch>), LearnError> {
    if data.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    if cfg.batch_size == 0 {
        return Err(LearnError::Config(alloc::string::String::from(
            "batch size must be at least 1",
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0000_0000_0001);
    let mut adam = Adam::new(&params, cfg);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut bit_sum = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let bits: usize = batch.iter().map(|&i| data[i].labels.len()).sum();
            let mut grads = params.zeros_like();
            for &i in batch {
                let ex = &data[i];
                let (p, cache) = forward(&params, &ex.features)?;
                let share = ex.labels.len() as f64 / bits as f64;
                loss_sum += bce_loss(&p.data, &ex.labels)? * ex.labels.len() as f64;
                backward(&params, &cache, &ex.labels, share, &mut grads)?;
            }
            bit_sum += bits;
            adam.step(&mut params, &grads);
        }
        let validation_loss = if validation.is_empty() {
            None
        } else {
            Some(dataset_loss(&params, validation)?)
        };
        history.push(Epoch {
            epoch: epoch + 1,
            train_loss: loss_sum / bit_sum as f64,
            validation_loss,
        });
    }
    Ok((params, history))
}

pub fn predict(params: &TransformerParams, features: &FeatureTensor) -> Result<Mat, LearnError> {
    Ok(forward(params, features)?.0)
}

/// Class-mean prediction probabilities over every validation bit.
pub fn calibrate_thresholds(
    params: &TransformerParams,
    validation: &[LabeledExample],
) -> Result<Thresholds, LearnError> {
    let mut pairs = Vec::new();
    for ex in validation {
        let p = predict(params, &ex.features)?;
        if p.data.len() != ex.labels.len() {
            return Err(LearnError::Shape {
                dimension: "label bits",
                expected: p.data.len(),
                got: ex.labels.len(),
            });
        }
        pairs.extend(p.data.iter().copied().zip(ex.labels.iter().copied()));
    }
    thresholds_from_pairs(&pairs)
}

/// Thresholds from `(probability, label)` pairs.
pub fn thresholds_from_pairs(pairs: &[(f64, u8)]) -> Result<Thresholds, LearnError> {
    let mut sum = [0.0; 2];
    let mut count = [0usize; 2];
    for &(p, y) in pairs {
        let c = usize::from(y == 1);
        sum[c] += if y == 1 { p } else { 1.0 - p };
        count[c] += 1;
    }
    for c in 0..2 {
        if count[c] == 0 {
            return Err(LearnError::MissingClass(c as u8));
        }
    }
    Ok(Thresholds {
        thr_0: sum[0] / count[0] as f64,
        thr_1: sum[1] / count[1] as f64,
    })
}

/// Fixes confident bits of every scenario, laid out as the stochastic
/// model's scenario-major binary block.
pub fn predict_and_filter(
    params: &TransformerParams,
    thresholds: &Thresholds,
    stats: &NormStats,
    inst: &ProblemInstance,
) -> Result<PartialAssignment, LearnError> {
    let n = params.config.n_per_ev;
    let tsn = inst.tsn().map_err(crate::instances::InstanceError::from)?;
    let expected =
        tsn.arcs.len() + 2 * inst.network.transport.cs_nodes.len() * inst.horizon as usize;
    if expected != n {
        return Err(LearnError::Shape {
            dimension: "bits per EV",
            expected: n,
            got: expected,
        });
    }
    let per_scenario = inst.ev_count() * n;
    let mut fixed = BTreeMap::new();
    for sc in 0..inst.scenarios.len() {
        let f = encode_features(inst, sc, Some(stats))?;
        let p = predict(params, &f)?;
        for (j, &y) in p.data.iter().enumerate() {
            let col = sc * per_scenario + j;
            if y >= thresholds.thr_1 {
                fixed.insert(col, true);
            } else if 1.0 - y >= thresholds.thr_0 {
                fixed.insert(col, false);
            }
        }
    }
    Ok(PartialAssignment { fixed })
}

/// Percentage of bits of each class predicted correctly at the 0.5 cutoff;
/// `None` for a class with no bits.
pub fn class_accuracy(pairs: &[(f64, u8)]) -> [Option<f64>; 2] {
    let mut hit = [0usize; 2];
    let mut count = [0usize; 2];
    for &(p, y) in pairs {
        let c = usize::from(y == 1);
        count[c] += 1;
        if (p >= 0.5) == (y == 1) {
            hit[c] += 1;
        }
    }
    [0, 1].map(|c| {
        if count[c] == 0 {
            None
        } else {
            Some(100.0 * hit[c] as f64 / count[c] as f64)
        }
    })
}
