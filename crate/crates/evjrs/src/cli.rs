//! `evjrs` command line.
//!
//! Exit codes: 0 success, 1 verification failed, 2 usage error, 3 I/O,
//! 4 malformed file, 5 invalid input or config, 6 model or solve failure,
//! 7 learner failure. Failures print one line `error: <category>: <message>`
//! on stderr. Every subcommand prints `input`/`output` lines with the
//! content hash of each file it reads or writes.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use evjrs_core::hash::{content_hash, instance_hash};
use evjrs_core::instances::{generate_batch, GenConfig, ProblemInstance};
use evjrs_core::learner::TrainConfig;
use evjrs_core::mip::{build_model, verify_solution, Mode};
use evjrs_core::solver::{solve_mip_with, SolveConfig};

use crate::clock::WallClock;
use crate::config::{load_config, CONFIG_ENV};
use crate::error::{Error, Result};
use crate::io::{self, dataset_hash, dir_hash, file_hash};
use crate::pipeline::{self, ExperimentConfig, ModelWidths, Predictor, Preset};

#[derive(Parser, Debug)]
#[command(
    name = "evjrs",
    version,
    about = "EV joint routing and scheduling: generate, label, train, solve, evaluate"
)]
pub struct Cli {
    /// TOML config file; flags override its keys.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate seeded instances into a directory.
    Gen(GenArgs),
    /// Solve instances deterministically and write a labeled dataset.
    Label(LabelArgs),
    /// Train a model on the training split of a dataset.
    Train(TrainArgs),
    /// Set fixing thresholds from the validation split of a dataset.
    Calibrate(CalibrateArgs),
    /// Solve one instance, optionally pruned by a model.
    Solve(SolveArgs),
    /// Compare pruned and plain solves over a set of instances.
    Evaluate(EvaluateArgs),
    /// Train one model per multiplier and test on unseen fleet sizes.
    Experiment(ExperimentArgs),
    /// Check a solution file against its instance.
    Verify(VerifyArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum PresetArg {
    Tiny,
    Paper,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Preset {
        match p {
            PresetArg::Tiny => Preset::Tiny,
            PresetArg::Paper => Preset::Paper,
        }
    }
}

#[derive(Args, Debug, Default)]
pub struct SolveFlags {
    #[arg(long)]
    pub feasibility_tol: Option<f64>,
    #[arg(long)]
    pub integrality_tol: Option<f64>,
    #[arg(long)]
    pub mip_gap: Option<f64>,
    #[arg(long)]
    pub node_limit: Option<u64>,
    /// Seconds.
    #[arg(long)]
    pub time_limit: Option<f64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub lp_iteration_limit: Option<u64>,
}

impl SolveFlags {
    fn apply(&self, mut c: SolveConfig) -> Result<SolveConfig> {
        set(&mut c.feasibility_tol, self.feasibility_tol);
        set(&mut c.integrality_tol, self.integrality_tol);
        set(&mut c.mip_gap, self.mip_gap);
        set(&mut c.node_limit, self.node_limit);
        set(&mut c.workers, self.workers);
        set(&mut c.lp_iteration_limit, self.lp_iteration_limit);
        if self.time_limit.is_some() {
            c.time_limit = self.time_limit;
        }
        c.validate().map_err(Error::Config)?;
        Ok(c)
    }
}

#[derive(Args, Debug, Default)]
pub struct TrainFlags {
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Initialization and shuffling seed (`train.seed`).
    #[arg(id = "train_seed", long = "train-seed")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub ffn_hidden: Option<usize>,
    #[arg(long)]
    pub classifier_hidden: Option<usize>,
}

impl TrainFlags {
    fn apply(&self, mut t: TrainConfig, mut m: ModelWidths) -> (TrainConfig, ModelWidths) {
        set(&mut t.batch_size, self.batch_size);
        set(&mut t.epochs, self.epochs);
        set(&mut t.learning_rate, self.learning_rate);
        set(&mut t.seed, self.seed);
        set(&mut m.d_model, self.d_model);
        set(&mut m.heads, self.heads);
        set(&mut m.ffn_hidden, self.ffn_hidden);
        set(&mut m.classifier_hidden, self.classifier_hidden);
        (t, m)
    }
}

fn set<T: Copy>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Master seed; instance i uses a child seed of it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// EVs per instance.
    #[arg(long)]
    pub fleet: usize,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, value_enum, default_value_t = PresetArg::Tiny)]
    pub preset: PresetArg,
    /// Solar scenarios per instance (preset default when omitted).
    #[arg(long)]
    pub scenarios: Option<usize>,
    /// Network description (TOML) replacing the preset's network.
    #[arg(long)]
    pub network: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct LabelArgs {
    /// Instance file or directory of instance files.
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub solve: SolveFlags,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Seed of the 90/10 train/validation split.
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Calibrated checkpoint to write; must differ from `--model`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Prune with this checkpoint.
    #[arg(long, conflicts_with = "no_model")]
    pub model: Option<PathBuf>,
    /// Plain solve (the default).
    #[arg(long)]
    pub no_model: bool,
    /// Solve only this scenario instead of the stochastic model.
    #[arg(long, conflicts_with = "model")]
    pub scenario: Option<usize>,
    /// Solution file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Export the model in LP format.
    #[arg(long)]
    pub lp: Option<PathBuf>,
    /// Print one log line per branch-and-bound node.
    #[arg(long)]
    pub verbose: bool,
    #[command(flatten)]
    pub solve: SolveFlags,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long, conflicts_with = "no_model")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub no_model: bool,
    /// Metrics report (CSV) to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub solve: SolveFlags,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
    #[arg(long)]
    pub ev_min: Option<usize>,
    #[arg(long)]
    pub ev_max: Option<usize>,
    /// Comma-separated multipliers.
    #[arg(long, value_delimiter = ',')]
    pub multipliers: Option<Vec<usize>>,
    #[arg(long)]
    pub train_instances: Option<usize>,
    #[arg(long)]
    pub test_instances: Option<usize>,
    #[arg(long)]
    pub test_scenarios: Option<usize>,
    /// Report (CSV) to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub solve: SolveFlags,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long)]
    pub solution: PathBuf,
}

/// Parses `argv` and runs the subcommand; returns the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(
                err,
                "error: {}: {}",
                e.category(),
                single_line(&e.to_string())
            );
            e.exit_code()
        }
    }
}

fn single_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn say(out: &mut dyn Write, line: impl AsRef<str>) {
    let _ = writeln!(out, "{}", line.as_ref());
}

fn hash_line(out: &mut dyn Write, role: &str, path: &Path, hash: &str) {
    say(out, format!("{role} {} {hash}", path.display()));
}

fn input_file(out: &mut dyn Write, path: &Path) -> Result<()> {
    let h = file_hash(path)?;
    hash_line(out, "input", path, &h);
    Ok(())
}

fn output_file(out: &mut dyn Write, path: &Path) -> Result<()> {
    let h = file_hash(path)?;
    hash_line(out, "output", path, &h);
    Ok(())
}

/// Instance files of `path`: the file itself or every `*.json` in the
/// directory, sorted by name.
fn instance_paths(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut v = Vec::new();
    for entry in std::fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let p = entry.map_err(|e| Error::io(path, e))?.path();
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if p.is_file() && name.ends_with(".json") && name != io::MANIFEST {
            v.push(p);
        }
    }
    v.sort();
    if v.is_empty() {
        return Err(Error::Config(format!(
            "no instance files in {}",
            path.display()
        )));
    }
    Ok(v)
}

fn read_instances(out: &mut dyn Write, path: &Path) -> Result<Vec<ProblemInstance>> {
    let mut v = Vec::new();
    for p in instance_paths(path)? {
        input_file(out, &p)?;
        v.push(io::read_instance(&p)?);
    }
    Ok(v)
}

fn read_model(out: &mut dyn Write, path: &Path) -> Result<Predictor> {
    input_file(out, path)?;
    io::read_checkpoint(path)
}

fn read_dataset(out: &mut dyn Write, dir: &Path) -> Result<io::Dataset> {
    let ds = io::read_dataset(dir)?;
    hash_line(out, "input", dir, &dataset_hash(dir)?);
    Ok(ds)
}

fn distinct_output(input: &Path, output: &Path) -> Result<()> {
    let same = match (input.canonicalize(), output.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => input == output,
    };
    if same {
        return Err(Error::Config(format!(
            "output {} would overwrite an input",
            output.display()
        )));
    }
    Ok(())
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let file = load_config(cli.config.as_ref())?;
    if let Some(p) = &cli.config {
        input_file(out, p)?;
    }
    let clock = WallClock::new();
    match &cli.command {
        Command::Gen(a) => {
            let mut cfg: GenConfig = Preset::from(a.preset).config();
            if let Some(s) = a.scenarios {
                cfg.scenarios = s;
            }
            if let Some(n) = &a.network {
                input_file(out, n)?;
                cfg.network = io::read_network(n)?;
            }
            cfg.validate()?;
            let instances = generate_batch(a.seed, a.count, &[a.fleet], &cfg)?;
            for (i, inst) in instances.iter().enumerate() {
                let p = a.out.join(format!("instance-{i:05}.json"));
                io::write_instance(&p, inst)?;
                output_file(out, &p)?;
            }
            hash_line(out, "output", &a.out, &dir_hash(&a.out, &[])?);
        }
        Command::Label(a) => {
            let cfg = a.solve.apply(file.solve)?;
            let instances = read_instances(out, &a.instances)?;
            let mut notes = Vec::new();
            let samples = pipeline::label_dataset(&instances, &cfg, &clock, &mut |m| {
                notes.push(m.to_string())
            })?;
            for n in notes {
                say(out, n);
            }
            say(
                out,
                format!(
                    "labeled {} samples from {} instances",
                    samples.len(),
                    instances.len()
                ),
            );
            io::write_dataset(&a.out, &io::Dataset { instances, samples })?;
            hash_line(out, "output", &a.out, &dataset_hash(&a.out)?);
        }
        Command::Train(a) => {
            let (tc, widths) = a.train.apply(file.train, file.model);
            let ds = read_dataset(out, &a.dataset)?;
            let (tr, val) = pipeline::split_samples(&ds.samples, a.split_seed);
            let (p, history) = pipeline::fit(&tr, &val, &widths, &tc)?;
            for e in &history {
                let v = e
                    .validation_loss
                    .map(|v| format!("{v:.9e}"))
                    .unwrap_or_else(|| String::from("NA"));
                say(
                    out,
                    format!(
                        "epoch {} train_loss {:.9e} validation_loss {v}",
                        e.epoch, e.train_loss
                    ),
                );
            }
            io::write_checkpoint(&a.out, &p)?;
            output_file(out, &a.out)?;
        }
        Command::Calibrate(a) => {
            distinct_output(&a.model, &a.out)?;
            let mut p = read_model(out, &a.model)?;
            let ds = read_dataset(out, &a.dataset)?;
            let (_, val) = pipeline::split_samples(&ds.samples, a.split_seed);
            let t = pipeline::calibrate(&mut p, if val.is_empty() { &ds.samples } else { &val })?;
            say(out, format!("thr_0 {:.9} thr_1 {:.9}", t.thr_0, t.thr_1));
            io::write_checkpoint(&a.out, &p)?;
            output_file(out, &a.out)?;
        }
        Command::Solve(a) => return solve(a, &file.solve, &clock, out),
        Command::Evaluate(a) => {
            let cfg = a.solve.apply(file.solve)?;
            let instances = read_instances(out, &a.instances)?;
            let p = a.model.as_ref().map(|m| read_model(out, m)).transpose()?;
            let m = pipeline::evaluate(&instances, p.as_ref(), &cfg, &clock)?;
            let csv = m.to_csv();
            match &a.out {
                Some(path) => {
                    io::write_bytes(path, csv.as_bytes())?;
                    say(out, csv.lines().take(2).collect::<Vec<_>>().join("\n"));
                    output_file(out, path)?;
                }
                None => say(out, csv.trim_end()),
            }
        }
        Command::Experiment(a) => {
            let mut cfg: ExperimentConfig = file.experiment;
            set(&mut cfg.seed, a.seed);
            if let Some(p) = a.preset {
                cfg.preset = p.into();
            }
            set(&mut cfg.ev_min, a.ev_min);
            set(&mut cfg.ev_max, a.ev_max);
            if let Some(m) = &a.multipliers {
                cfg.multipliers = m.clone();
            }
            set(&mut cfg.train_instances, a.train_instances);
            set(&mut cfg.test_instances, a.test_instances);
            set(&mut cfg.test_scenarios, a.test_scenarios);
            cfg.solve = a.solve.apply(cfg.solve)?;
            (cfg.train, cfg.model) = a.train.apply(cfg.train, cfg.model);
            let mut notes = Vec::new();
            let report = pipeline::run_experiment(&cfg, &clock, &mut |m| notes.push(m.to_string()));
            for n in notes {
                say(out, n);
            }
            let csv = report?.to_csv();
            say(out, csv.trim_end());
            if let Some(path) = &a.out {
                io::write_bytes(path, csv.as_bytes())?;
                output_file(out, path)?;
            }
        }
        Command::Verify(a) => {
            input_file(out, &a.instance)?;
            input_file(out, &a.solution)?;
            let inst = io::read_instance(&a.instance)?;
            let sol = io::read_solution(&a.solution)?;
            if sol.instance_hash != instance_hash(&inst) {
                say(
                    out,
                    "warning: solution was produced for a different instance hash",
                );
            }
            let report = verify_solution(&inst, sol.mode, &sol.values);
            if let Some((expected, got)) = report.length_mismatch {
                say(
                    out,
                    format!("violation length expected {expected} got {got}"),
                );
            }
            for (tag, r) in &report.violations {
                say(out, format!("violation {} {r:e}", tag.name()));
            }
            if !report.is_feasible() {
                return Err(Error::Verification {
                    count: report.violations.len().max(1),
                    max_residual: report.max_residual,
                });
            }
            say(
                out,
                format!("feasible max_residual {:e}", report.max_residual),
            );
        }
    }
    Ok(0)
}

fn solve(a: &SolveArgs, base: &SolveConfig, clock: &WallClock, out: &mut dyn Write) -> Result<i32> {
    let cfg = a.solve.apply(base.clone())?;
    input_file(out, &a.instance)?;
    let inst = io::read_instance(&a.instance)?;
    let mode = a.scenario.map_or(Mode::Stochastic, Mode::Deterministic);
    let model = build_model(&inst, mode)?;
    if let Some(lp) = &a.lp {
        io::write_bytes(lp, io::render_lp(&model).as_bytes())?;
        output_file(out, lp)?;
    }
    let (result, wall) = match &a.model {
        Some(m) => {
            let p = read_model(out, m)?;
            let pr = pipeline::prune_and_solve(&inst, &p, &cfg, clock)?;
            say(
                out,
                format!(
                    "fixed {} of {} binaries, fallback {}",
                    pr.fixed_bits, pr.total_bits, pr.fallback
                ),
            );
            let t = pr.t_a();
            (pr.result, t)
        }
        None => {
            let t0 = evjrs_core::solver::Clock::now(clock);
            let mut lines = Vec::new();
            let r = solve_mip_with(&model, &cfg, clock, &mut |n| {
                if a.verbose {
                    lines.push(n.to_string());
                }
            });
            for l in lines {
                say(out, l);
            }
            (r, evjrs_core::solver::Clock::now(clock) - t0)
        }
    };
    say(out, format!("status {:?}", result.status));
    if !result.has_solution() {
        return Err(Error::Solve(format!(
            "{:?} after {} nodes",
            result.status, result.nodes
        )));
    }
    say(out, format!("objective {:.12e}", result.objective));
    say(
        out,
        format!(
            "nodes {} branched {} seconds {wall:.6}",
            result.nodes, result.branched
        ),
    );
    say(
        out,
        format!("solution {}", content_hash(&values_bytes(&result.values))),
    );
    if let Some(path) = &a.out {
        let sol = io::SolutionFile::new(
            instance_hash(&inst),
            mode,
            format!("{:?}", result.status),
            result.objective,
            result.values,
        );
        io::write_solution(path, &sol)?;
        output_file(out, path)?;
    }
    Ok(0)
}

fn values_bytes(v: &[f64]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    #[test]
    fn argument_definitions_are_consistent() {
        super::Cli::command().debug_assert();
    }
}
