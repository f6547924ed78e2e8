//! Labeling, training, pruned solving with fallback, and evaluation.
//!
//! All timings come from a caller-supplied [`Clock`], so the pruned and the
//! plain path of one sample are always measured by the same source.

use std::fmt::Write;

use evjrs_core::hash::instance_hash;
use evjrs_core::instances::{
    child_seed, encode_features, ev_counts, generate_batch, presets, raw_features,
    split_train_validation, FeatureTensor, GenConfig, NormStats, ProblemInstance,
};
use evjrs_core::learner::{
    calibrate_thresholds, class_accuracy, predict, predict_and_filter, train, Epoch,
    LabeledExample, ModelConfig, Thresholds, TrainConfig, TransformerParams,
};
use evjrs_core::mip::{apply_fixings, binary_labels, build_model, verify_solution, MipModel, Mode};
use evjrs_core::solver::{solve_mip_with, Clock, MipResult, SolveConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Everything inference needs: weights, fixing thresholds and the feature
/// normalization fitted on the training split.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictor {
    pub params: TransformerParams,
    pub thresholds: Thresholds,
    pub stats: NormStats,
}

/// One deterministic solve of one scenario of an instance.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    /// Unnormalized.
    pub features: FeatureTensor,
    /// `e x n_per_ev` optimal binaries, EV-major.
    pub labels: Vec<u8>,
    /// Position of the source instance in the labeled set.
    pub instance: usize,
    pub scenario: usize,
    pub instance_hash: String,
    pub objective: f64,
    pub solve_time: f64,
}

fn solve_timed(model: &MipModel, cfg: &SolveConfig, clock: &dyn Clock) -> (MipResult, f64) {
    let t0 = clock.now();
    let r = solve_mip_with(model, cfg, clock, &mut |_| {});
    (r, clock.now() - t0)
}

fn check_clean(inst: &ProblemInstance, mode: Mode, x: &[f64]) -> Result<()> {
    let report = verify_solution(inst, mode, x);
    if report.is_feasible() {
        Ok(())
    } else {
        Err(Error::Verification {
            count: report.violations.len(),
            max_residual: report.max_residual,
        })
    }
}

/// Solves every scenario of every instance deterministically and keeps the
/// rounded binaries as labels. Solves that stop at a limit are skipped and
/// reported through `log`.
pub fn label_dataset(
    instances: &[ProblemInstance],
    cfg: &SolveConfig,
    clock: &dyn Clock,
    log: &mut dyn FnMut(&str),
) -> Result<Vec<LabeledSample>> {
    cfg.validate().map_err(Error::Config)?;
    let mut out = Vec::new();
    for (i, inst) in instances.iter().enumerate() {
        let hash = instance_hash(inst);
        for sc in 0..inst.scenarios.len() {
            let mode = Mode::Deterministic(sc);
            let model = build_model(inst, mode)?;
            let (r, t) = solve_timed(&model, cfg, clock);
            if r.status != evjrs_core::solver::MipStatus::Optimal {
                log(&format!(
                    "skip instance {i} scenario {sc}: {:?} after {} nodes",
                    r.status, r.nodes
                ));
                continue;
            }
            check_clean(inst, mode, &r.values)?;
            out.push(LabeledSample {
                features: raw_features(inst, sc)?,
                labels: binary_labels(&model, &r.values),
                instance: i,
                scenario: sc,
                instance_hash: hash.clone(),
                objective: r.objective,
                solve_time: t,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::Solve(String::from("no labeling solve finished")));
    }
    Ok(out)
}

/// Samples as normalized training examples.
pub fn examples(samples: &[LabeledSample], stats: &NormStats) -> Vec<LabeledExample> {
    samples
        .iter()
        .map(|s| {
            let mut features = s.features.clone();
            stats.apply(&mut features);
            LabeledExample {
                features,
                labels: s.labels.clone(),
            }
        })
        .collect()
}

/// Bits per EV implied by a sample set; all samples must agree.
pub fn bits_per_ev(samples: &[LabeledSample]) -> Result<usize> {
    let mut n = None;
    for s in samples {
        let e = s.features.ev_count;
        if e == 0 || s.labels.len() % e != 0 {
            return Err(Error::Config(format!(
                "sample with {} bits for {e} EVs",
                s.labels.len()
            )));
        }
        match n {
            None => n = Some(s.labels.len() / e),
            Some(k) if k != s.labels.len() / e => {
                return Err(Error::Config(String::from(
                    "samples disagree on bits per EV",
                )))
            }
            _ => {}
        }
    }
    n.ok_or(Error::Learn(evjrs_core::learner::LearnError::EmptyDataset))
}

/// Width settings of the transformer; `n_per_ev` and the horizon come from
/// the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelWidths {
    pub d_model: usize,
    pub heads: usize,
    pub ffn_hidden: usize,
    pub classifier_hidden: usize,
}

impl Default for ModelWidths {
    fn default() -> Self {
        let c = ModelConfig::new(1, 1);
        ModelWidths {
            d_model: c.d_model,
            heads: c.heads,
            ffn_hidden: c.ffn_hidden,
            classifier_hidden: c.classifier_hidden,
        }
    }
}

impl ModelWidths {
    pub fn config(&self, n_per_ev: usize, horizon: usize) -> ModelConfig {
        ModelConfig {
            d_model: self.d_model,
            heads: self.heads,
            ffn_hidden: self.ffn_hidden,
            classifier_hidden: self.classifier_hidden,
            n_per_ev,
            horizon,
        }
    }
}

/// Fits normalization on `train_set`, trains, and leaves the thresholds
/// vacuous until [`calibrate`] runs.
pub fn fit(
    train_set: &[LabeledSample],
    validation: &[LabeledSample],
    widths: &ModelWidths,
    cfg: &TrainConfig,
) -> Result<(Predictor, Vec<Epoch>)> {
    let n = bits_per_ev(train_set)?;
    let horizon = train_set[0].features.cols;
    let stats = NormStats::fit(train_set.iter().map(|s| &s.features));
    let (params, history) = train(
        &examples(train_set, &stats),
        &examples(validation, &stats),
        &widths.config(n, horizon),
        cfg,
    )?;
    Ok((
        Predictor {
            params,
            thresholds: Thresholds::VACUOUS,
            stats,
        },
        history,
    ))
}

pub fn calibrate(p: &mut Predictor, validation: &[LabeledSample]) -> Result<Thresholds> {
    p.thresholds = calibrate_thresholds(&p.params, &examples(validation, &p.stats))?;
    Ok(p.thresholds)
}

/// Train on one split and calibrate on the other.
pub fn fit_and_calibrate(
    train_set: &[LabeledSample],
    validation: &[LabeledSample],
    widths: &ModelWidths,
    cfg: &TrainConfig,
) -> Result<(Predictor, Vec<Epoch>)> {
    let (mut p, history) = fit(train_set, validation, widths, cfg)?;
    calibrate(&mut p, validation)?;
    Ok((p, history))
}

/// Seeded 90/10 split of samples, grouped by source instance so scenarios of
/// one instance never straddle the split.
pub fn split_samples(
    samples: &[LabeledSample],
    seed: u64,
) -> (Vec<LabeledSample>, Vec<LabeledSample>) {
    let n_inst = samples.iter().map(|s| s.instance + 1).max().unwrap_or(0);
    let (_, val) = split_train_validation(n_inst, seed);
    samples
        .iter()
        .cloned()
        .partition(|s| !val.contains(&s.instance))
}

/// Outcome of [`prune_and_solve`].
#[derive(Clone, Debug)]
pub struct PrunedSolve {
    /// Final solution; from the unfixed model when the fallback ran.
    pub result: MipResult,
    pub fixed_bits: usize,
    pub total_bits: usize,
    /// The fixed model was infeasible (or found nothing) and the unfixed
    /// model was solved instead.
    pub fallback: bool,
    pub inference_time: f64,
    pub pruned_time: f64,
    pub fallback_time: f64,
}

impl PrunedSolve {
    /// Time of the learned path: inference, the pruned solve, and the full
    /// re-solve when it was needed.
    pub fn t_a(&self) -> f64 {
        self.inference_time + self.pruned_time + self.fallback_time
    }
}

/// Builds the stochastic model, fixes the confident predicted bits, solves,
/// and falls back to the unfixed model when the fixed one yields nothing.
/// The returned solution always passes `verify_solution`.
pub fn prune_and_solve(
    inst: &ProblemInstance,
    predictor: &Predictor,
    cfg: &SolveConfig,
    clock: &dyn Clock,
) -> Result<PrunedSolve> {
    let model = build_model(inst, Mode::Stochastic)?;
    prune_and_solve_model(inst, &model, predictor, cfg, clock)
}

fn prune_and_solve_model(
    inst: &ProblemInstance,
    model: &MipModel,
    predictor: &Predictor,
    cfg: &SolveConfig,
    clock: &dyn Clock,
) -> Result<PrunedSolve> {
    let t0 = clock.now();
    let pa = predict_and_filter(
        &predictor.params,
        &predictor.thresholds,
        &predictor.stats,
        inst,
    )?;
    let inference_time = clock.now() - t0;
    let total_bits = model.binary_cols().count();
    let t1 = clock.now();
    let fixed = apply_fixings(model, &pa)?;
    let pruned = solve_mip_with(&fixed, cfg, clock, &mut |_| {});
    let pruned_time = clock.now() - t1;
    let (result, fallback, fallback_time) = if pruned.has_solution() {
        (pruned, false, 0.0)
    } else {
        let (r, t) = solve_timed(model, cfg, clock);
        (r, true, t)
    };
    if !result.has_solution() {
        return Err(Error::Solve(format!(
            "{:?} after {} nodes",
            result.status, result.nodes
        )));
    }
    check_clean(inst, Mode::Stochastic, &result.values)?;
    Ok(PrunedSolve {
        result,
        fixed_bits: pa.len(),
        total_bits,
        fallback,
        inference_time,
        pruned_time,
        fallback_time,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub instance_hash: String,
    pub ev_count: usize,
    /// Seconds on the learned path.
    pub t_a: f64,
    /// Seconds of the plain solve.
    pub t_g: f64,
    pub v_a: f64,
    pub v_g: f64,
    /// The pruned model produced the final solution.
    pub dl_feasible: bool,
    pub fixed_bits: usize,
    pub total_bits: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    /// Percent of label-0 / label-1 bits predicted correctly at the 0.5
    /// cutoff; `None` without a model or without bits of that class.
    pub acc_0: Option<f64>,
    pub acc_1: Option<f64>,
    /// Mean percent runtime reduction, (t^g - t^a) / t^g.
    pub r_bar: f64,
    /// Mean percent objective loss, (v^a - v^g) / |v^g|.
    pub l_bar: f64,
    /// Percent of samples whose pruned solve was feasible.
    pub feas: f64,
    pub n: usize,
    pub n_dl: usize,
    pub samples: Vec<SampleRecord>,
}

/// Smallest `|v^g|` used as the denominator of the objective loss.
const OBJECTIVE_FLOOR: f64 = 1e-9;

impl EvalMetrics {
    pub fn from_records(samples: Vec<SampleRecord>, acc: [Option<f64>; 2]) -> Result<EvalMetrics> {
        if samples.is_empty() {
            return Err(Error::Config(String::from("empty test set")));
        }
        let n = samples.len();
        let n_dl = samples.iter().filter(|s| s.dl_feasible).count();
        let r_bar = samples
            .iter()
            .map(|s| {
                if s.t_a == s.t_g {
                    0.0
                } else {
                    100.0 * (s.t_g - s.t_a) / s.t_g
                }
            })
            .sum::<f64>()
            / n as f64;
        let l_bar = samples
            .iter()
            .map(|s| {
                if s.v_a == s.v_g {
                    0.0
                } else {
                    100.0 * (s.v_a - s.v_g) / s.v_g.abs().max(OBJECTIVE_FLOOR)
                }
            })
            .sum::<f64>()
            / n as f64;
        Ok(EvalMetrics {
            acc_0: acc[0],
            acc_1: acc[1],
            r_bar,
            l_bar,
            feas: 100.0 * n_dl as f64 / n as f64,
            n,
            n_dl,
            samples,
        })
    }

    /// Summary line plus a per-sample appendix, comma separated.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| {
            v.map(|x| format!("{x}"))
                .unwrap_or_else(|| String::from("NA"))
        };
        let mut s = String::from("ACC_0,ACC_1,r_bar,l_bar,feas,N,N_DL\n");
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            opt(self.acc_0),
            opt(self.acc_1),
            self.r_bar,
            self.l_bar,
            self.feas,
            self.n,
            self.n_dl
        );
        s.push_str(
            "\nsample,instance_hash,ev_count,t_a,t_g,v_a,v_g,dl_feasible,fixed_bits,total_bits\n",
        );
        for (i, r) in self.samples.iter().enumerate() {
            let _ = writeln!(
                s,
                "{i},{},{},{:e},{:e},{},{},{},{},{}",
                r.instance_hash,
                r.ev_count,
                r.t_a,
                r.t_g,
                r.v_a,
                r.v_g,
                r.dl_feasible,
                r.fixed_bits,
                r.total_bits
            );
        }
        s
    }
}

/// Plain solve of every test instance, then the learned path when a
/// predictor is given. Without one the learned path is the plain path, so
/// `t^a = t^g` and `v^a = v^g` exactly.
pub fn evaluate(
    instances: &[ProblemInstance],
    predictor: Option<&Predictor>,
    cfg: &SolveConfig,
    clock: &dyn Clock,
) -> Result<EvalMetrics> {
    if instances.is_empty() {
        return Err(Error::Config(String::from("empty test set")));
    }
    cfg.validate().map_err(Error::Config)?;
    let mut records = Vec::with_capacity(instances.len());
    let mut pairs = Vec::new();
    for inst in instances {
        let model = build_model(inst, Mode::Stochastic)?;
        let (plain, t_g) = solve_timed(&model, cfg, clock);
        if !plain.has_solution() {
            return Err(Error::Solve(format!(
                "plain solve: {:?} after {} nodes",
                plain.status, plain.nodes
            )));
        }
        check_clean(inst, Mode::Stochastic, &plain.values)?;
        let total_bits = model.binary_cols().count();
        let mut rec = SampleRecord {
            instance_hash: instance_hash(inst),
            ev_count: inst.ev_count(),
            t_a: t_g,
            t_g,
            v_a: plain.objective,
            v_g: plain.objective,
            dl_feasible: true,
            fixed_bits: 0,
            total_bits,
        };
        if let Some(p) = predictor {
            let labels = binary_labels(&model, &plain.values);
            let per_scenario = total_bits / inst.scenarios.len();
            for sc in 0..inst.scenarios.len() {
                let y = predict(&p.params, &encode_features(inst, sc, Some(&p.stats))?)?;
                pairs.extend(
                    y.data.iter().copied().zip(
                        labels[sc * per_scenario..(sc + 1) * per_scenario]
                            .iter()
                            .copied(),
                    ),
                );
            }
            let pr = prune_and_solve_model(inst, &model, p, cfg, clock)?;
            rec.t_a = pr.t_a();
            rec.v_a = pr.result.objective;
            rec.dl_feasible = !pr.fallback;
            rec.fixed_bits = pr.fixed_bits;
        }
        records.push(rec);
    }
    let acc = if predictor.is_some() {
        class_accuracy(&pairs)
    } else {
        [None, None]
    };
    EvalMetrics::from_records(records, acc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Tiny,
    Paper,
}

impl Preset {
    pub fn config(self) -> GenConfig {
        match self {
            Preset::Tiny => presets::tiny_config(),
            Preset::Paper => presets::paper_config(),
        }
    }
}

/// Multiplier study: one model per multiplier `m`, trained on EV counts
/// `lo, lo + m, ..., hi`, all tested on the counts no model saw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub preset: Preset,
    pub ev_min: usize,
    pub ev_max: usize,
    pub multipliers: Vec<usize>,
    pub train_instances: usize,
    pub test_instances: usize,
    /// Solar scenarios per test instance; training instances have one.
    pub test_scenarios: usize,
    pub model: ModelWidths,
    pub train: TrainConfig,
    pub solve: SolveConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            preset: Preset::Tiny,
            ev_min: 2,
            ev_max: 6,
            multipliers: vec![2, 4],
            train_instances: 40,
            test_instances: 10,
            test_scenarios: 1,
            model: ModelWidths::default(),
            train: TrainConfig {
                epochs: 30,
                ..TrainConfig::default()
            },
            solve: SolveConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn train_counts(&self, m: usize) -> Vec<usize> {
        ev_counts(self.ev_min, self.ev_max, m)
    }

    /// Counts in range that no multiplier trains on.
    pub fn test_counts(&self) -> Vec<usize> {
        let seen: Vec<usize> = self
            .multipliers
            .iter()
            .flat_map(|&m| self.train_counts(m))
            .collect();
        (self.ev_min..=self.ev_max)
            .filter(|e| !seen.contains(e))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(String::from(m)));
        if self.ev_min == 0 || self.ev_min > self.ev_max {
            return bad("EV range must satisfy 1 <= ev_min <= ev_max");
        }
        if self.multipliers.is_empty() || self.multipliers.contains(&0) {
            return bad("multipliers must be a non-empty list of positive integers");
        }
        if self.train_instances < 2 || self.test_instances == 0 || self.test_scenarios == 0 {
            return bad("need at least 2 training instances, 1 test instance and 1 test scenario");
        }
        if self.test_counts().is_empty() {
            return bad(
                "every EV count in range is used for training; no unseen counts remain for testing",
            );
        }
        self.solve.validate().map_err(Error::Config)?;
        self.model.config(1, 1).validate()?;
        if self.train.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub multiplier: usize,
    pub train_counts: Vec<usize>,
    pub train_samples: usize,
    pub final_train_loss: f64,
    pub metrics: EvalMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub test_counts: Vec<usize>,
    pub rows: Vec<ExperimentRow>,
}

impl ExperimentReport {
    /// One row per model, columns as in the usual results table.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| {
            v.map(|x| format!("{x:.4}"))
                .unwrap_or_else(|| String::from("NA"))
        };
        let counts = |c: &[usize]| c.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
        let mut s = String::from("model,train_counts,test_counts,ACC_0,ACC_1,r_bar,l_bar,feas\n");
        for r in &self.rows {
            let m = &r.metrics;
            let _ = writeln!(
                s,
                "TF_{},{},{},{},{},{:.4},{:.6},{:.2}",
                r.multiplier,
                counts(&r.train_counts),
                counts(&self.test_counts),
                opt(m.acc_0),
                opt(m.acc_1),
                m.r_bar,
                m.l_bar,
                m.feas
            );
        }
        s
    }
}

pub fn run_experiment(
    cfg: &ExperimentConfig,
    clock: &dyn Clock,
    log: &mut dyn FnMut(&str),
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let base = cfg.preset.config();
    let test_gen = GenConfig {
        scenarios: cfg.test_scenarios,
        ..base.clone()
    };
    let train_gen = GenConfig {
        scenarios: 1,
        ..base
    };
    let test_counts = cfg.test_counts();
    let test = generate_batch(
        child_seed(cfg.seed, u64::MAX),
        cfg.test_instances,
        &test_counts,
        &test_gen,
    )?;
    let mut rows = Vec::new();
    for &m in &cfg.multipliers {
        let counts = cfg.train_counts(m);
        log(&format!(
            "m={m}: labeling {} instances over EV counts {counts:?}",
            cfg.train_instances
        ));
        let instances = generate_batch(
            child_seed(cfg.seed, m as u64),
            cfg.train_instances,
            &counts,
            &train_gen,
        )?;
        let samples = label_dataset(&instances, &cfg.solve, clock, log)?;
        let (tr, val) = split_samples(&samples, cfg.seed);
        let (p, history) = fit_and_calibrate(&tr, &val, &cfg.model, &cfg.train)?;
        log(&format!("m={m}: trained, thresholds {:?}", p.thresholds));
        let metrics = evaluate(&test, Some(&p), &cfg.solve, clock)?;
        rows.push(ExperimentRow {
            multiplier: m,
            train_counts: counts,
            train_samples: tr.len(),
            final_train_loss: history.last().map_or(f64::NAN, |e| e.train_loss),
            metrics,
        });
    }
    Ok(ExperimentReport { test_counts, rows })
}
