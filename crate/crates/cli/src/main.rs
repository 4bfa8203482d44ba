use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use unireg::bounds::{self, random_test_pairs, Regime, TheoremSuite};
use unireg::datagen::CausalSpec;
use unireg::dependence::{self, coordinates, DepConfig, Observable};
use unireg::experiments::{self, RateConfig, TailConfig};
use unireg::linalg::SymmetricMatrix;
use unireg::mest::{check_mest_bounds, LogisticDesign, Loss, LossSpec};
use unireg::models::ModelClass;
use unireg::net;
use unireg::par::{with_threads, workers};
use unireg::RegressionPair;

#[derive(Parser)]
#[command(name = "unireg", version, about = "Uniform-in-model regression bounds: verification and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker cap; defaults to all cores. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Deterministic inequalities on a pair of regression pairs.
    CheckBounds,
    /// Convergence-rate sweep with log-log slope fits.
    Rates,
    /// Tail-bound violation frequencies.
    Tailcheck,
    /// Functional dependence measures of a causal process.
    Depnorm,
    /// Sparse ε-nets: cardinality, covering and discretization.
    Net,
    /// M-estimator sandwich and representation checks.
    Mest,
    /// Appendix constants and summation inequalities.
    AppendixVerify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::CheckBounds => "check-bounds",
            Command::Rates => "rates",
            Command::Tailcheck => "tailcheck",
            Command::Depnorm => "depnorm",
            Command::Net => "net",
            Command::Mest => "mest",
            Command::AppendixVerify => "appendix-verify",
        }
    }
}

/// Configuration problems exit with 2; everything else that goes wrong is a
/// failed run.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(e: impl std::fmt::Display) -> anyhow::Error {
    ConfigError(e.to_string()).into()
}

/// Library errors raised by validation are configuration errors.
fn lib(e: unireg::Error) -> anyhow::Error {
    match e {
        unireg::Error::Input(_)
        | unireg::Error::Domain(_)
        | unireg::Error::DimensionMismatch { .. }
        | unireg::Error::IndexOutOfRange { .. }
        | unireg::Error::InvalidModel(_)
        | unireg::Error::NonFinite => config_err(e),
        other => other.into(),
    }
}

#[derive(Serialize)]
struct RunManifest {
    command: &'static str,
    config: Option<PathBuf>,
    seed: Option<u64>,
    version: &'static str,
    threads: usize,
    outputs: Vec<String>,
    passed: bool,
    wall_clock_secs: f64,
}

struct Outcome {
    seed: Option<u64>,
    outputs: Vec<String>,
    passed: bool,
    summary: String,
}

fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> anyhow::Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", p.display())))
        }
    }
}

/// Writes through a temporary file in the same directory, then renames.
fn write_atomic(dir: &Path, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> anyhow::Result<()>) -> anyhow::Result<String> {
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut w = BufWriter::new(File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?);
    f(&mut w)?;
    w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    fs::rename(&tmp, dir.join(name))?;
    Ok(name.to_string())
}

// ---------------------------------------------------------------------------
// check-bounds

#[derive(Deserialize)]
struct PairSpec {
    sigma: Vec<Vec<f64>>,
    gamma: Vec<f64>,
}

impl PairSpec {
    fn build(&self) -> anyhow::Result<RegressionPair> {
        let sigma = SymmetricMatrix::from_rows(&self.sigma).map_err(lib)?;
        RegressionPair::new(sigma, self.gamma.clone()).map_err(lib)
    }
}

#[derive(Deserialize, Clone, Copy, Default)]
#[serde(rename_all = "snake_case")]
enum RegimeName {
    #[default]
    Half,
    Full,
    Definite,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsConfig {
    k: usize,
    /// Random pairs with the precondition enforced by construction.
    #[serde(default)]
    p: Option<usize>,
    #[serde(default)]
    regime: RegimeName,
    #[serde(default)]
    seed: u64,
    /// Explicit pairs; overrides `p`.
    #[serde(default)]
    pair1: Option<PairSpec>,
    #[serde(default)]
    pair2: Option<PairSpec>,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self { k: 3, p: Some(8), regime: RegimeName::Half, seed: 7, pair1: None, pair2: None }
    }
}

fn check_bounds(c: &Common) -> anyhow::Result<Outcome> {
    let mut cfg: BoundsConfig = load(c.config.as_deref())?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let (p1, p2) = match (&cfg.pair1, &cfg.pair2, cfg.p) {
        (Some(a), Some(b), _) => (a.build()?, b.build()?),
        (None, None, Some(p)) => {
            let regime = match cfg.regime {
                RegimeName::Half => Regime::Half,
                RegimeName::Full => Regime::Full,
                RegimeName::Definite => Regime::Definite,
            };
            random_test_pairs(p, cfg.k, cfg.seed, regime).map_err(lib)?
        }
        _ => return Err(config_err("give either both pair1 and pair2, or p")),
    };
    let suite = TheoremSuite::run(cfg.k, &p1, &p2).map_err(lib)?;
    let name = write_atomic(&c.out, "check-bounds.csv", |w| Ok(bounds::write_csv(&suite.reports, w)?))?;
    let mut summary = String::new();
    for r in &suite.reports {
        summary.push_str(&format!(
            "{:<18} checked {:>4}  violations {:>3}\n",
            r.theorem.id(),
            r.checked(),
            r.violations()
        ));
    }
    summary.push_str(&format!("identity max error {:.3e}", suite.identity_max_err));
    Ok(Outcome { seed: Some(cfg.seed), outputs: vec![name], passed: suite.violations() == 0, summary })
}

// ---------------------------------------------------------------------------
// rates

#[derive(Deserialize, Serialize, Clone, Copy)]
struct SlopeWindows {
    l2: [f64; 2],
    rep: [f64; 2],
}

impl Default for SlopeWindows {
    fn default() -> Self {
        Self { l2: [-0.6, -0.4], rep: [-1.15, -0.85] }
    }
}

#[derive(Deserialize)]
struct RatesFile {
    #[serde(flatten)]
    rates: RateConfig,
    /// `null` disables the acceptance windows (smoke runs).
    #[serde(default = "default_windows")]
    windows: Option<SlopeWindows>,
}

fn default_windows() -> Option<SlopeWindows> {
    Some(SlopeWindows::default())
}

impl Default for RatesFile {
    fn default() -> Self {
        Self { rates: RateConfig::independent_default(), windows: default_windows() }
    }
}

fn rates(c: &Common) -> anyhow::Result<Outcome> {
    let mut cfg: RatesFile = load(c.config.as_deref())?;
    if let Some(s) = c.seed {
        cfg.rates.seed = s;
    }
    let rep = experiments::rate_sweep(&cfg.rates).map_err(lib)?;
    let csv = write_atomic(&c.out, "rates.csv", |w| Ok(rep.write_csv(w)?))?;
    let svg = write_atomic(&c.out, "rates.svg", |w| Ok(w.write_all(rep.svg().as_bytes())?))?;
    let passed = cfg.windows.is_none_or(|win| rep.l2.within(win.l2[0], win.l2[1]) && rep.rep.within(win.rep[0], win.rep[1]));
    let summary = format!(
        "sup-L2 slope {:.3} ± {:.3}\nsup-L1 slope {:.3} ± {:.3}\nrepresentation slope {:.3} ± {:.3}",
        rep.l2.slope, rep.l2.stderr, rep.l1.slope, rep.l1.stderr, rep.rep.slope, rep.rep.stderr
    );
    Ok(Outcome { seed: Some(cfg.rates.seed), outputs: vec![csv, svg], passed, summary })
}

// ---------------------------------------------------------------------------
// tailcheck

#[derive(Deserialize)]
struct TailFile(TailConfig);

impl Default for TailFile {
    fn default() -> Self {
        Self(TailConfig::independent_max_default())
    }
}

fn tailcheck(c: &Common) -> anyhow::Result<Outcome> {
    let TailFile(mut cfg) = load(c.config.as_deref())?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let rep = experiments::tail_check(&cfg).map_err(lib)?;
    let name = write_atomic(&c.out, "tailcheck.csv", |w| Ok(rep.write_csv(w)?))?;
    let summary = rep
        .rows
        .iter()
        .map(|r| format!("t={} frequency {:.4} allowed {:.4} {}", r.t, r.frequency, r.allowed, if r.holds { "ok" } else { "EXCEEDED" }))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Outcome { seed: Some(cfg.seed), outputs: vec![name], passed: rep.all_hold(), summary })
}

// ---------------------------------------------------------------------------
// depnorm

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DepFile {
    spec: CausalSpec,
    /// Defaults to every covariate and the response.
    #[serde(default)]
    observables: Option<Vec<Observable>>,
    #[serde(default)]
    dep: DepConfig,
    /// Run the moment-inequality checks and fail on violations.
    #[serde(default)]
    check: bool,
}

impl Default for DepFile {
    fn default() -> Self {
        Self { spec: CausalSpec::geometric(3, 0.5), observables: None, dep: DepConfig::default(), check: true }
    }
}

fn depnorm(c: &Common) -> anyhow::Result<Outcome> {
    let mut cfg: DepFile = load(c.config.as_deref())?;
    if let Some(s) = c.seed {
        cfg.dep.seed = s;
    }
    let obs = cfg.observables.clone().unwrap_or_else(|| coordinates(cfg.spec.p));
    let prof = dependence::profile(&cfg.spec, &obs, &cfg.dep).map_err(lib)?;
    let mut outputs = vec![write_atomic(&c.out, "depnorm.csv", |w| Ok(prof.write_delta_csv(w)?))?];
    outputs.push(write_atomic(&c.out, "depnorm_tail.csv", |w| Ok(prof.write_tail_csv(w)?))?);
    let mut summary = format!("horizon {} ({} replications)", prof.horizon(), prof.reps);
    let mut passed = true;
    if cfg.check {
        let mut reports = vec![dependence::check_prop_converse(&cfg.spec, &obs, &cfg.dep).map_err(lib)?];
        let k = cfg.spec.p.min(3);
        reports.push(dependence::check_combination_norms(&cfg.spec, k, 20, &cfg.dep).map_err(lib)?);
        let pairs: Vec<(usize, usize)> = (0..cfg.spec.p).map(|j| (j, cfg.spec.p)).collect();
        reports.push(dependence::check_product_norms(&cfg.spec, &pairs, &cfg.dep).map_err(lib)?);
        if cfg.spec.response.c == 0.0 {
            reports.push(dependence::check_linear_deltas(&cfg.spec, &cfg.dep).map_err(lib)?);
        }
        outputs.push(write_atomic(&c.out, "depnorm_checks.csv", |w| Ok(dependence::write_reports_csv(&reports, w)?))?);
        for r in &reports {
            summary.push_str(&format!("\n{:<22} rows {:>4}  violations {:>3}", r.name, r.rows.len(), r.violations()));
            passed &= r.all_hold();
        }
    }
    Ok(Outcome { seed: Some(cfg.dep.seed), outputs, passed, summary })
}

// ---------------------------------------------------------------------------
// net

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NetFile {
    p: usize,
    k: usize,
    #[serde(default = "default_eps")]
    eps: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_samples")]
    samples: usize,
    /// Random inputs for the discretization inequalities (`k ≤ 2`).
    #[serde(default = "default_trials")]
    trials: usize,
}

fn default_eps() -> f64 {
    0.5
}
fn default_samples() -> usize {
    10_000
}
fn default_trials() -> usize {
    100
}

impl Default for NetFile {
    fn default() -> Self {
        Self { p: 8, k: 2, eps: 0.5, seed: 0, samples: default_samples(), trials: default_trials() }
    }
}

fn net_cmd(c: &Common) -> anyhow::Result<Outcome> {
    let mut cfg: NetFile = load(c.config.as_deref())?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let sparse = net::build_net(cfg.p, cfg.k, cfg.eps, cfg.seed).map_err(lib)?;
    let cov = net::validate_covering(&sparse, cfg.samples, cfg.seed).map_err(lib)?;
    let mut outputs = vec![write_atomic(&c.out, "net.csv", |w| Ok(sparse.write_csv(w)?))?];
    let mut summary = format!(
        "{} points <= {:.1} <= {:.1}\ncovering: {} of {} samples beyond eps (max distance {:.4})",
        sparse.len(),
        sparse.cardinality_bound(),
        sparse.closed_form_bound(),
        cov.failures,
        cov.samples,
        cov.max_distance
    );
    let mut passed = cov.failures == 0;
    if cfg.trials > 0 && cfg.k <= 2 {
        let rows = net::check_discretization(cfg.p, cfg.k, cfg.trials, cfg.seed).map_err(lib)?;
        let bad = rows.iter().filter(|r| !r.holds).count();
        passed &= bad == 0;
        summary.push_str(&format!("\ndiscretization: {bad} of {} inputs violate", rows.len()));
        outputs.push(write_atomic(&c.out, "net_discretization.csv", |w| Ok(net::write_discretization_csv(&rows, w)?))?);
    }
    Ok(Outcome { seed: Some(cfg.seed), outputs, passed, summary })
}

// ---------------------------------------------------------------------------
// mest

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MestFile {
    n: usize,
    k: usize,
    #[serde(default = "default_loss")]
    loss: Loss,
    #[serde(default)]
    design: Option<LogisticDesign>,
    #[serde(default)]
    p: Option<usize>,
    #[serde(default)]
    seed: u64,
}

fn default_loss() -> Loss {
    Loss::Logistic
}

impl Default for MestFile {
    fn default() -> Self {
        Self { n: 5000, k: 2, loss: Loss::Logistic, design: None, p: Some(6), seed: 7 }
    }
}

fn mest(c: &Common) -> anyhow::Result<Outcome> {
    let mut cfg: MestFile = load(c.config.as_deref())?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let design = match (cfg.design.take(), cfg.p) {
        (Some(d), _) => d,
        (None, Some(p)) => LogisticDesign::default_for(p),
        (None, None) => return Err(config_err("give either design or p")),
    };
    let spec = LossSpec::new(cfg.loss);
    let data = design.sample(cfg.n, cfg.seed).map_err(lib)?;
    let class = ModelClass::up_to(design.p, cfg.k).map_err(lib)?;
    let rep = check_mest_bounds(&data, &spec, &class, design.targets(&spec).map_err(lib)?).map_err(lib)?;
    let name = write_atomic(&c.out, "mest.csv", |w| Ok(rep.write_csv(w)?))?;
    let summary = format!(
        "{} models, event on all: {}, checked {}, violations {}",
        rep.records.len(),
        rep.event_all(),
        rep.checked(),
        rep.violations()
    );
    Ok(Outcome { seed: Some(cfg.seed), outputs: vec![name], passed: rep.event_all() && rep.violations() == 0, summary })
}

// ---------------------------------------------------------------------------
// appendix-verify

fn appendix(c: &Common) -> anyhow::Result<Outcome> {
    if let Some(p) = &c.config {
        return Err(config_err(format!("appendix-verify takes no configuration (got {})", p.display())));
    }
    let rep = experiments::appendix_numerics();
    let sums = write_atomic(&c.out, "appendix-verify.csv", |w| Ok(rep.write_sums_csv(w)?))?;
    let consts = write_atomic(&c.out, "constants.csv", |w| Ok(rep.write_constants_csv(w)?))?;
    let bad = rep.sums.iter().filter(|s| !s.holds).count();
    let summary = format!(
        "{} summation checks, {bad} violations; max sum of lambda {:.6}",
        rep.sums.len(),
        rep.lambda_sums.iter().map(|x| x.1).fold(0.0, f64::max)
    );
    Ok(Outcome { seed: None, outputs: vec![sums, consts], passed: rep.all_hold(), summary })
}

// ---------------------------------------------------------------------------

fn run(cli: &Cli) -> anyhow::Result<(Outcome, usize)> {
    fs::create_dir_all(&cli.common.out).map_err(|e| config_err(format!("{}: {e}", cli.common.out.display())))?;
    let go = || {
        let out = match cli.command {
            Command::CheckBounds => check_bounds(&cli.common),
            Command::Rates => rates(&cli.common),
            Command::Tailcheck => tailcheck(&cli.common),
            Command::Depnorm => depnorm(&cli.common),
            Command::Net => net_cmd(&cli.common),
            Command::Mest => mest(&cli.common),
            Command::AppendixVerify => appendix(&cli.common),
        };
        (out, workers())
    };
    let (out, threads) = match cli.common.threads {
        Some(0) => return Err(config_err("--threads must be positive")),
        Some(t) => with_threads(t, go),
        None => go(),
    };
    Ok((out?, threads))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    match run(&cli) {
        Ok((outcome, threads)) => {
            println!("{}", outcome.summary);
            let manifest = RunManifest {
                command: cli.command.name(),
                config: cli.common.config.clone(),
                seed: outcome.seed,
                version: env!("CARGO_PKG_VERSION"),
                threads,
                outputs: outcome.outputs,
                passed: outcome.passed,
                wall_clock_secs: start.elapsed().as_secs_f64(),
            };
            let written = write_atomic(&cli.common.out, "manifest.json", |w| {
                serde_json::to_writer_pretty(&mut *w, &manifest)?;
                Ok(w.write_all(b"\n")?)
            });
            if let Err(e) = written {
                eprintln!("error: {e:#}");
                return ExitCode::from(2);
            }
            if outcome.passed {
                println!("{}: PASS", manifest.command);
                ExitCode::SUCCESS
            } else {
                println!("{}: FAIL", manifest.command);
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
