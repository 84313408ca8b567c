//! The `spikedict` command line.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use spikedict_core::eval::best_of;
use spikedict_core::preprocess::init_dictionary_from_data;
use spikedict_core::signal::{Dictionary, Signal};
use spikedict_core::simulate::{simulate, SimConfig};
use spikedict_core::theory::{
    format_duration, recording_length, sample_complexity, ComplexityParams, LogBase, TABLE_NEURONS, TABLE_RATES_HZ,
};

use crate::config::{CodingSection, RunConfig};
use crate::error::{Error, Result, EXIT_OK, EXIT_USAGE};
use crate::formats::{
    load_dictionary, load_signal, read_events, save_dictionary, save_signal, write_events, write_history, write_report,
};
use crate::pipeline::{
    default_window_length, estimate_noise, evaluate_sweep, learn_config, learn_signal, preprocess, run_baseline,
    sort_signal, stopping_rule,
};
use crate::templates;

#[derive(Debug, Parser)]
#[command(name = "spikedict", version, about = "Convolutional dictionary learning for spike sorting")]
pub struct Cli {
    /// RunConfig JSON; command-line flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for window-parallel coding (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic recording and its ground-truth events.
    Simulate(SimulateArgs),
    /// Highpass a recording and report its noise level.
    Preprocess(PreprocessArgs),
    /// Learn a dictionary by alternating cOMP and cKSVD.
    Learn(LearnArgs),
    /// Sparse-code a recording with a fixed dictionary.
    Sort(SortArgs),
    /// Score detections against ground truth.
    Eval(EvalArgs),
    /// Recording-length bounds.
    Bound(BoundArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Dictionary file of templates to render.
    #[arg(long, conflicts_with = "templates")]
    pub dictionary: Option<PathBuf>,
    /// Bundled template set (three_45, two_30).
    #[arg(long)]
    pub templates: Option<String>,
    #[arg(long)]
    pub windows: Option<usize>,
    #[arg(long)]
    pub window_length: Option<usize>,
    #[arg(long)]
    pub sampling_rate: Option<f64>,
    /// Firing rate in Hz, shared by every neuron.
    #[arg(long)]
    pub rate: Option<f64>,
    /// Peak amplitude range `LO:HI` in mV.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    pub amplitude: Option<[f64; 2]>,
    #[arg(long, allow_hyphen_values = true, conflicts_with = "no_noise")]
    pub snr_db: Option<f64>,
    #[arg(long)]
    pub no_noise: bool,
    #[arg(long)]
    pub silent_windows: Option<usize>,
    /// Noisy recording output (`.meta.json` sidecar written alongside).
    #[arg(long)]
    pub signal: PathBuf,
    /// Ground-truth events CSV output.
    #[arg(long)]
    pub truth: PathBuf,
    /// Noise-free recording output.
    #[arg(long)]
    pub clean: Option<PathBuf>,
    /// Copy of the dictionary used.
    #[arg(long)]
    pub dictionary_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Highpass cutoff in Hz.
    #[arg(long)]
    pub cutoff: Option<f64>,
    /// Remove `START:END` seconds before filtering (repeatable).
    #[arg(long, value_parser = parse_pair)]
    pub exclude: Vec<[f64; 2]>,
    #[arg(long)]
    pub quiet_ms: Option<f64>,
    #[arg(long)]
    pub threshold_multiplier: Option<f64>,
    /// Also write an initial dictionary picked from threshold crossings.
    #[arg(long, requires_all = ["neurons", "template_length"])]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub neurons: Option<usize>,
    #[arg(long)]
    pub template_length: Option<usize>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct CodingArgs {
    #[arg(long)]
    pub window_length: Option<usize>,
    /// Maximum events per window.
    #[arg(long)]
    pub max_sparsity: Option<usize>,
    /// Stop once the window residual norm is at most this.
    #[arg(long)]
    pub residual_threshold: Option<f64>,
    /// Noise standard deviation σ; the residual threshold becomes σ·√W.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
}

impl CodingArgs {
    fn over(&self, base: &CodingSection) -> CodingSection {
        CodingSection {
            window_length: self.window_length.or(base.window_length),
            max_sparsity: self.max_sparsity.or(base.max_sparsity),
            residual_threshold: self.residual_threshold.or(base.residual_threshold),
            noise_sigma: self.noise_sigma.or(base.noise_sigma),
        }
    }
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    #[arg(long)]
    pub signal: PathBuf,
    /// Initial dictionary; seeded from the data when absent.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub neurons: Option<usize>,
    #[arg(long)]
    pub template_length: Option<usize>,
    #[command(flatten)]
    pub coding: CodingArgs,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Run every iteration even after convergence.
    #[arg(long)]
    pub no_early_stop: bool,
    /// Re-seed templates of neurons with no events.
    #[arg(long)]
    pub reseed_unused: bool,
    /// Learned dictionary output.
    #[arg(long)]
    pub dictionary: PathBuf,
    /// History CSV output.
    #[arg(long)]
    pub history: PathBuf,
    /// Final code output.
    #[arg(long)]
    pub events: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SortArgs {
    #[arg(long)]
    pub signal: PathBuf,
    #[arg(long)]
    pub dictionary: PathBuf,
    #[command(flatten)]
    pub coding: CodingArgs,
    /// Events CSV output.
    #[arg(long)]
    pub events: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub truth: PathBuf,
    /// Detections CSV (from `sort`).
    #[arg(long, required_unless_present = "baseline")]
    pub detections: Option<PathBuf>,
    /// Dictionary the detections were coded with.
    #[arg(long, required_unless_present = "baseline")]
    pub dictionary: Option<PathBuf>,
    /// Report CSV output.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub tolerance: Option<usize>,
    /// Number of thresholds in the sweep.
    #[arg(long)]
    pub thresholds: Option<usize>,
    /// Keep detected labels as they are.
    #[arg(long)]
    pub no_align: bool,
    /// Run the PCA + K-means baseline on `--signal` instead.
    #[arg(long, requires = "signal")]
    pub baseline: bool,
    #[arg(long)]
    pub signal: Option<PathBuf>,
    /// Clusters for the baseline (default: neurons in the truth).
    #[arg(long)]
    pub neurons: Option<usize>,
    #[arg(long)]
    pub snippet_length: Option<usize>,
    #[arg(long)]
    pub baseline_threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LogArg {
    Natural,
    #[value(name = "10")]
    Base10,
    #[value(name = "2")]
    Base2,
}

impl From<LogArg> for LogBase {
    fn from(v: LogArg) -> Self {
        match v {
            LogArg::Natural => LogBase::Natural,
            LogArg::Base10 => LogBase::Base10,
            LogArg::Base2 => LogBase::Base2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Text,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    /// Neuron counts (default: 5,10,20).
    #[arg(long = "C", value_delimiter = ',')]
    pub neurons: Vec<usize>,
    /// Simultaneity bound.
    #[arg(long = "s", default_value_t = 3)]
    pub simultaneity: usize,
    /// Firing-rate bounds in Hz (default: 5,10,20).
    #[arg(long = "lambda", value_delimiter = ',')]
    pub rates: Vec<f64>,
    #[arg(long, default_value_t = 0.001)]
    pub delta: f64,
    /// Normalized amplitude bound.
    #[arg(long = "M", default_value_t = 1.0)]
    pub amplitude_bound: f64,
    #[arg(long, value_enum, default_value_t = LogArg::Natural)]
    pub log: LogArg,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

fn parse_pair(s: &str) -> std::result::Result<[f64; 2], String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected START:END, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok([p(a)?, p(b)?])
}

/// Parses `args` (program name first) and runs the command. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                EXIT_USAGE
            } else {
                let _ = write!(out, "{}", e.render());
                EXIT_OK
            };
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        // Fails only if a pool exists already, which then stays in use.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a, cfg, out),
        Command::Preprocess(a) => cmd_preprocess(a, cfg, out),
        Command::Learn(a) => cmd_learn(a, cfg, out),
        Command::Sort(a) => cmd_sort(a, cfg, out),
        Command::Eval(a) => cmd_eval(a, cfg, out),
        Command::Bound(a) => cmd_bound(a, out),
    }
}

fn print_json<T: Serialize>(out: &mut dyn Write, v: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(v).map_err(|e| Error::Format(e.to_string()))?;
    writeln!(out, "{s}").map_err(|e| Error::io("<stdout>", e))
}

fn signal_of(x: &[f64], fs: f64) -> Result<Signal> {
    Ok(Signal::new(x.to_vec(), fs)?)
}

#[derive(Serialize)]
struct SimulateSummary {
    num_samples: usize,
    num_windows: usize,
    num_events: usize,
    noise_sigma: f64,
}

fn cmd_simulate(a: SimulateArgs, cfg: RunConfig, out: &mut dyn Write) -> Result<()> {
    let s = cfg.simulate;
    let dictionary = match (&a.dictionary, &a.templates, &s.dictionary) {
        (Some(p), _, _) => load_dictionary(p)?,
        (None, Some(name), _) => templates::by_name(name)?,
        (None, None, Some(p)) => load_dictionary(p)?,
        (None, None, None) => templates::three_45(),
    };
    let rates = match a.rate {
        Some(r) => vec![r; dictionary.num_atoms()],
        None => s.firing_rate_hz.expand(dictionary.num_atoms())?,
    };
    let amplitude = a.amplitude.unwrap_or(s.amplitude_range);
    let snr_db = if a.no_noise {
        f64::INFINITY
    } else {
        a.snr_db.or(s.snr_db).unwrap_or(f64::INFINITY)
    };
    let sim = SimConfig {
        dictionary,
        num_windows: a.windows.unwrap_or(s.num_windows),
        window_length: a.window_length.unwrap_or(s.window_length),
        sampling_rate_hz: a.sampling_rate.unwrap_or(s.sampling_rate_hz),
        firing_rate_hz: rates,
        amplitude_range: (amplitude[0], amplitude[1]),
        snr_db,
        seed: cfg.seed,
        silent_leading_windows: a.silent_windows.unwrap_or(s.silent_leading_windows),
    };
    sim.validate().map_err(|e| Error::Config(e.to_string()))?;
    let truth = simulate(&sim)?;
    let fs = sim.sampling_rate_hz;
    save_signal(&a.signal, &signal_of(truth.noisy.concatenated(), fs)?, "mV")?;
    if let Some(p) = &a.clean {
        save_signal(p, &signal_of(truth.clean.concatenated(), fs)?, "mV")?;
    }
    write_events(&a.truth, &truth.events)?;
    if let Some(p) = &a.dictionary_out {
        save_dictionary(p, &sim.dictionary)?;
    }
    print_json(
        out,
        &SimulateSummary {
            num_samples: sim.num_samples(),
            num_windows: sim.num_windows,
            num_events: truth.events.len(),
            noise_sigma: truth.noise_sigma,
        },
    )
}

fn cmd_preprocess(a: PreprocessArgs, mut cfg: RunConfig, out: &mut dyn Write) -> Result<()> {
    let p = &mut cfg.preprocess;
    if let Some(c) = a.cutoff {
        p.highpass_hz = c;
    }
    if !a.exclude.is_empty() {
        p.exclude = a.exclude.clone();
    }
    if let Some(q) = a.quiet_ms {
        p.quiet_ms = q;
    }
    if let Some(m) = a.threshold_multiplier {
        p.threshold_multiplier = m;
    }
    cfg.validate()?;
    let (signal, _) = load_signal(&a.input)?;
    let (filtered, report) = preprocess(&signal, &cfg.preprocess)?;
    save_signal(&a.output, &filtered, "mV")?;
    if let (Some(path), Some(c), Some(l)) = (&a.init, a.neurons, a.template_length) {
        let d = init_dictionary_from_data(filtered.samples(), c, l, report.threshold, cfg.seed)?;
        save_dictionary(path, &d)?;
    }
    print_json(out, &report)
}

fn window_length_for(coding: &CodingSection, signal: &Signal) -> usize {
    coding.window_length.unwrap_or_else(|| default_window_length(signal))
}

#[derive(Serialize)]
struct LearnSummary {
    iterations: usize,
    converged_at: Option<usize>,
    objective: Option<f64>,
    error_distance_to_init: Option<f64>,
    num_events: usize,
    window_length: usize,
    residual_threshold: f64,
    noise_sigma: Option<f64>,
}

fn initial_dictionary(a: &LearnArgs, cfg: &RunConfig, signal: &Signal) -> Result<Dictionary> {
    if let Some(p) = &a.init {
        return load_dictionary(p);
    }
    let (c, l) = match (
        a.neurons.or(cfg.learn.neurons),
        a.template_length.or(cfg.learn.template_length),
    ) {
        (Some(c), Some(l)) => (c, l),
        _ => {
            return Err(Error::Config(
                "learn needs --init, or --neurons and --template-length to seed from the data".into(),
            ))
        }
    };
    let noise = estimate_noise(signal, cfg.preprocess.threshold_multiplier, cfg.preprocess.quiet_ms)?;
    Ok(init_dictionary_from_data(signal.samples(), c, l, noise.threshold, cfg.seed)?)
}

fn cmd_learn(a: LearnArgs, mut cfg: RunConfig, out: &mut dyn Write) -> Result<()> {
    if let Some(n) = a.iterations {
        cfg.learn.iterations = n;
    }
    if let Some(t) = a.tolerance {
        cfg.learn.tolerance = t;
    }
    if a.no_early_stop {
        cfg.learn.early_stop = false;
    }
    if a.reseed_unused {
        cfg.learn.reseed_unused = true;
    }
    let coding = a.coding.over(&cfg.learn.coding());
    coding.validate("learn")?;
    cfg.validate()?;
    let (signal, _) = load_signal(&a.signal)?;
    let d0 = initial_dictionary(&a, &cfg, &signal)?;
    let w = window_length_for(&coding, &signal);
    let (stop, sigma) = stopping_rule(&coding, &signal, &cfg.preprocess, w)?;
    let lc = learn_config(&cfg.learn, stop)?;
    let result = learn_signal(&signal, &d0, w, &lc)?;
    save_dictionary(&a.dictionary, &result.dictionary)?;
    write_history(&a.history, &result.history)?;
    if let Some(p) = &a.events {
        write_events(p, &result.code)?;
    }
    let last = result.history.last();
    print_json(
        out,
        &LearnSummary {
            iterations: result.history.len(),
            converged_at: result.converged_at,
            objective: last.map(|h| h.objective),
            error_distance_to_init: last.map(|h| h.error_distance_to_init),
            num_events: result.code.len(),
            window_length: w,
            residual_threshold: stop.residual_threshold,
            noise_sigma: sigma,
        },
    )
}

#[derive(Serialize)]
struct SortSummary {
    num_events: usize,
    window_length: usize,
    num_windows: usize,
    residual_threshold: f64,
    noise_sigma: Option<f64>,
}

fn cmd_sort(a: SortArgs, cfg: RunConfig, out: &mut dyn Write) -> Result<()> {
    let coding = a.coding.over(&cfg.sort);
    coding.validate("sort")?;
    let (signal, _) = load_signal(&a.signal)?;
    let d = load_dictionary(&a.dictionary)?;
    let w = window_length_for(&coding, &signal);
    let (stop, sigma) = stopping_rule(&coding, &signal, &cfg.preprocess, w)?;
    let events = sort_signal(&signal, &d, w, &stop)?;
    write_events(&a.events, &events)?;
    print_json(
        out,
        &SortSummary {
            num_events: events.len(),
            window_length: w,
            num_windows: signal.len() / w,
            residual_threshold: stop.residual_threshold,
            noise_sigma: sigma,
        },
    )
}

#[derive(Serialize)]
struct EvalSummary {
    method: &'static str,
    threshold: Option<f64>,
    true_miss: f64,
    false_alarm: f64,
    num_true: usize,
    num_detected: usize,
    num_matched: usize,
}

fn cmd_eval(a: EvalArgs, mut cfg: RunConfig, out: &mut dyn Write) -> Result<()> {
    let e = &mut cfg.eval;
    if let Some(t) = a.tolerance {
        e.tolerance = t;
    }
    if let Some(n) = a.thresholds {
        e.thresholds = n;
    }
    if a.no_align {
        e.align = false;
    }
    if let Some(l) = a.snippet_length {
        e.baseline.snippet_length = l;
    }
    if let Some(t) = a.baseline_threshold {
        e.baseline.threshold = Some(t);
    }
    cfg.validate()?;
    let truth = read_events(&a.truth)?;
    let (method, reports) = if a.baseline {
        let path = a.signal.as_deref().expect("clap enforces --signal");
        let (signal, _) = load_signal(path)?;
        let clusters = a.neurons.unwrap_or_else(|| truth.neuron_count().max(1));
        let r = run_baseline(
            &signal,
            &truth,
            &cfg.eval.baseline,
            clusters,
            cfg.eval.tolerance,
            cfg.preprocess.threshold_multiplier,
            cfg.seed,
        )?;
        ("baseline", vec![r.report])
    } else {
        let det_path = a.detections.as_deref().expect("clap enforces --detections");
        let dict_path = a.dictionary.as_deref().expect("clap enforces --dictionary");
        let detected = read_events(det_path)?;
        let d = load_dictionary(dict_path)?;
        let reports = evaluate_sweep(&truth, &detected, &d, cfg.eval.thresholds, cfg.eval.tolerance, cfg.eval.align)?;
        ("comp", reports)
    };
    write_report(&a.report, &reports)?;
    let best = best_of(&reports).expect("at least one report");
    print_json(
        out,
        &EvalSummary {
            method,
            threshold: best.threshold,
            true_miss: best.pooled.true_miss,
            false_alarm: best.pooled.false_alarm,
            num_true: best.pooled.num_true,
            num_detected: best.pooled.num_detected,
            num_matched: best.pooled.num_matched,
        },
    )
}

fn log_name(b: LogBase) -> &'static str {
    match b {
        LogBase::Natural => "natural",
        LogBase::Base10 => "10",
        LogBase::Base2 => "2",
    }
}

fn cmd_bound(a: BoundArgs, out: &mut dyn Write) -> Result<()> {
    let neurons = if a.neurons.is_empty() {
        TABLE_NEURONS.to_vec()
    } else {
        a.neurons.clone()
    };
    let rates = if a.rates.is_empty() {
        TABLE_RATES_HZ.to_vec()
    } else {
        a.rates.clone()
    };
    let base = LogBase::from(a.log);
    let mut grid = Vec::with_capacity(rates.len());
    for &rate in &rates {
        let mut row = Vec::with_capacity(neurons.len());
        for &c in &neurons {
            let p = ComplexityParams::new(c, a.simultaneity, a.amplitude_bound, a.delta, rate)
                .map_err(|e| Error::Config(e.to_string()))?
                .with_log_base(base);
            row.push((p, sample_complexity(&p)?, recording_length(&p)?));
        }
        grid.push(row);
    }
    let io = |e| Error::io("<stdout>", e);
    match a.format {
        Format::Csv => {
            writeln!(
                out,
                "neurons,simultaneity,amplitude_bound,delta,max_rate_hz,log_base,sample_complexity,recording_length_s,recording_length"
            )
            .map_err(io)?;
            for (p, j, t) in grid.iter().flatten() {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    p.neurons,
                    p.simultaneity,
                    p.amplitude_bound,
                    p.delta,
                    p.max_rate_hz,
                    log_name(base),
                    j,
                    t,
                    format_duration(*t)
                )
                .map_err(io)?;
            }
        }
        Format::Text => {
            write!(out, "{:>10}", "rate \\ C").map_err(io)?;
            for c in &neurons {
                write!(out, " {:>18}", c).map_err(io)?;
            }
            writeln!(out).map_err(io)?;
            for (rate, row) in rates.iter().zip(&grid) {
                write!(out, "{:>7} Hz", rate).map_err(io)?;
                for (_, _, t) in row {
                    write!(out, " {:>18}", format_duration(*t)).map_err(io)?;
                }
                writeln!(out).map_err(io)?;
            }
            writeln!(
                out,
                "s = {}, M = {}, delta = {}, log base {}. Published grid values are not reproduced exactly by any log base with M = 1.",
                a.simultaneity,
                a.amplitude_bound,
                a.delta,
                log_name(base)
            )
            .map_err(io)?;
        }
    }
    Ok(())
}
