use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use lowdeg_core::distinguishability::{dist_cutoff, dist_prob_exact};
use lowdeg_core::gaussian::{
    exact_prob_general, noisy_prob_analytic, select_cutoff, truncated_prob, GaussianNoiseSpec,
};
use lowdeg_core::loss::{lossy_prob_ordered, lossy_truncated_ordered, LossSpec};
use lowdeg_core::marginal::{sample_many, CollisionRule, MarginalOracle};
use lowdeg_core::outcome::parse_modes;
use lowdeg_core::unitary::haar_unitary;
use lowdeg_core::validation::{self, ValidationReport};
use lowdeg_core::{OutcomeOrdered, RngStream, UnitaryMatrix};

#[derive(Parser)]
#[command(name = "lowdeg", version, about = "Low-degree simulation of noisy Boson Sampling")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON file whose keys supply defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Haar-random unitaries.
    Unitary {
        #[command(subcommand)]
        action: UnitaryAction,
    },
    /// Outcome probabilities.
    Prob {
        kind: ProbKind,
        #[command(flatten)]
        args: ProbArgs,
    },
    /// Truncated marginal of a prefix.
    Marginal(MarginalArgs),
    /// Draw samples from the truncated distribution.
    Sample(SampleArgs),
    /// Smallest cutoff meeting an error target.
    Cutoff(CutoffArgs),
    /// Run a validation experiment and write its report.
    Validate {
        kind: ValidateKind,
        #[command(flatten)]
        args: ValidateArgs,
    },
    /// Timing experiments.
    Bench {
        #[command(subcommand)]
        action: BenchAction,
    },
}

#[derive(Subcommand)]
enum UnitaryAction {
    Gen {
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProbKind {
    Exact,
    Noisy,
    Dist,
    Loss,
}

#[derive(Args)]
struct ProbArgs {
    #[arg(long)]
    unitary: Option<PathBuf>,
    #[arg(long)]
    outcome: Option<String>,
    #[arg(long)]
    x: Option<f64>,
    #[arg(long)]
    x1: Option<f64>,
    #[arg(long)]
    gamma: Option<u32>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    eta1: Option<f64>,
    #[arg(long)]
    depth: Option<u32>,
    /// Photon number, needed for the loss model where clicks may be fewer.
    #[arg(long)]
    n: Option<usize>,
    #[arg(short = 'l', long = "cutoff")]
    l: Option<usize>,
}

#[derive(Args)]
struct MarginalArgs {
    #[arg(long)]
    unitary: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    prefix: Option<String>,
    #[arg(long)]
    x: Option<f64>,
    #[arg(short = 'l', long = "cutoff")]
    l: Option<usize>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    unitary: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    x: Option<f64>,
    #[arg(short = 'l', long = "cutoff")]
    l: Option<usize>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write every conditional step as JSON lines to `<out>.audit.jsonl`.
    #[arg(long)]
    audit: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CutoffArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    x: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, value_enum)]
    model: Option<Model>,
}

#[derive(Clone, Copy, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
enum Model {
    Gaussian,
    Dist,
}

#[derive(Clone, Copy, ValueEnum)]
enum ValidateKind {
    Decomposition,
    Orthogonality,
    Telescoping,
    Sampler,
    Decay,
    LossBarrier,
    DistBarrier,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    x: Option<f64>,
    #[arg(short = 'l', long = "cutoff")]
    l: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    /// Report path; the table, if any, goes next to it with a `.csv` extension.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BenchAction {
    Marginal {
        #[arg(long)]
        n: Option<usize>,
        #[arg(short = 'l', long = "cutoff")]
        l: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Flag values fall back to the config file, then fail if still missing.
struct Settings(Value);

impl Settings {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Settings(json!({})));
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if !v.is_object() {
            bail!("config {} must be a JSON object", path.display());
        }
        Ok(Settings(v))
    }

    fn opt<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.0.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .with_context(|| format!("config key `{key}` has the wrong type")),
        }
    }

    fn req<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Result<T> {
        self.opt(flag, key)?.ok_or_else(|| anyhow!("missing required option --{key}"))
    }
}

fn read_unitary(path: &Path) -> Result<UnitaryMatrix> {
    let text = fs::read_to_string(path).with_context(|| format!("reading unitary {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing unitary {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn number(v: f64) -> String {
    serde_json::to_string(&v).expect("finite value")
}

fn gaussian_x(s: &Settings, x: Option<f64>, x1: Option<f64>, gamma: Option<u32>) -> Result<f64> {
    let spec = match (s.opt(x, "x")?, s.opt(x1, "x1")?, s.opt(gamma, "gamma")?) {
        (Some(x), None, None) => GaussianNoiseSpec::Direct { x },
        (None, Some(x1), Some(gamma)) => GaussianNoiseSpec::Scaled { x1, gamma },
        _ => bail!("give either --x or both --x1 and --gamma"),
    };
    Ok(spec.effective_x()?)
}

fn prob(s: &Settings, kind: ProbKind, a: ProbArgs) -> Result<bool> {
    let u = read_unitary(&s.req(a.unitary, "unitary")?)?;
    let modes = parse_modes(&s.req(a.outcome, "outcome")?)?;
    let mut sorted = modes.clone();
    sorted.sort_unstable();
    let z = OutcomeOrdered::new(u.dim(), sorted)?;
    let l = s.opt(a.l, "l")?;
    let p = match kind {
        ProbKind::Exact => exact_prob_general(&u, &z)?,
        ProbKind::Noisy => {
            let x = gaussian_x(s, a.x, a.x1, a.gamma)?;
            match l {
                Some(l) => truncated_prob(&u, &z, x, l)?,
                None => noisy_prob_analytic(&u, &z, x)?,
            }
        }
        ProbKind::Dist => dist_prob_exact(&u, &z, s.req(a.x, "x")?)?,
        ProbKind::Loss => {
            let n = s.req(a.n, "n")?;
            let spec = match (s.opt(a.eta, "eta")?, s.opt(a.eta1, "eta1")?, s.opt(a.depth, "depth")?) {
                (Some(eta), None, None) => LossSpec::Direct { eta },
                (None, Some(eta1), Some(depth)) => LossSpec::Layered { eta1, depth },
                _ => bail!("give either --eta or both --eta1 and --depth"),
            };
            let eta = spec.eta()?;
            match l {
                Some(l) => lossy_truncated_ordered(&u, n, &z, eta, l)?.value(),
                None => lossy_prob_ordered(&u, n, &z, eta)?,
            }
        }
    };
    println!("{}", number(p));
    Ok(true)
}

fn marginal(s: &Settings, a: MarginalArgs) -> Result<bool> {
    let u = read_unitary(&s.req(a.unitary, "unitary")?)?;
    let n = s.req(a.n, "n")?;
    let prefix = parse_modes(&s.req(a.prefix, "prefix")?)?;
    let x = s.req(a.x, "x")?;
    let l = s.req(a.l, "l")?;
    let rule = if l == 0 { CollisionRule::Zero } else { CollisionRule::Leftover };
    let oracle = MarginalOracle::new(u.rescaled_rows(n)?, x, l, rule)?;
    println!("{}", number(oracle.value(&prefix)?));
    Ok(true)
}

fn sample(s: &Settings, a: SampleArgs) -> Result<bool> {
    let u = read_unitary(&s.req(a.unitary, "unitary")?)?;
    let n = s.req(a.n, "n")?;
    let x = s.req(a.x, "x")?;
    let l = s.req(a.l, "l")?;
    let count = s.req(a.count, "count")?;
    let seed = s.req(a.seed, "seed")?;
    let audit = a.audit || s.opt(None, "audit")?.unwrap_or(false);
    let rule = if l == 0 { CollisionRule::Zero } else { CollisionRule::Leftover };
    let oracle = MarginalOracle::new(u.rescaled_rows(n)?, x, l, rule)?;
    let records = sample_many(&oracle, count, seed)?;
    let out = s.opt(a.out, "out")?;
    if audit && out.is_none() {
        bail!("--audit needs --out");
    }
    let mut text = String::from("sample_id,outcome\n");
    for (i, r) in records.iter().enumerate() {
        text.push_str(&format!("{i},{}\n", r.sorted_outcome()));
    }
    emit(out.as_deref(), &text)?;
    if audit {
        let path = out.expect("checked").with_extension("audit.jsonl");
        let mut lines = String::new();
        for (i, r) in records.iter().enumerate() {
            let mut v = serde_json::to_value(r)?;
            v["sample_id"] = json!(i);
            lines.push_str(&serde_json::to_string(&v)?);
            lines.push('\n');
        }
        fs::write(&path, lines).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(true)
}

fn cutoff(s: &Settings, a: CutoffArgs) -> Result<bool> {
    let n = s.req(a.n, "n")?;
    let x = s.req(a.x, "x")?;
    let eps = s.req(a.eps, "eps")?;
    let delta = s.req(a.delta, "delta")?;
    let l = match s.opt(a.model, "model")?.unwrap_or(Model::Gaussian) {
        Model::Gaussian => select_cutoff(n, x, eps, delta)?,
        Model::Dist => dist_cutoff(n, x, eps, delta)?,
    };
    println!("{l}");
    Ok(true)
}

/// Overlays the experiment keys given on the command line onto the config.
fn experiment_config<T: DeserializeOwned>(s: &Settings, a: &ValidateArgs) -> Result<T> {
    let mut v = s.0.clone();
    let obj = v.as_object_mut().expect("object");
    let flags = [
        ("seed", a.seed.map(|v| json!(v))),
        ("n", a.n.map(|v| json!(v))),
        ("m", a.m.map(|v| json!(v))),
        ("x", a.x.map(|v| json!(v))),
        ("l", a.l.map(|v| json!(v))),
        ("delta", a.delta.map(|v| json!(v))),
        ("eta", a.eta.map(|v| json!(v))),
        ("draws", a.draws.map(|v| json!(v))),
        ("samples", a.samples.map(|v| json!(v))),
    ];
    for (k, val) in flags {
        if let Some(val) = val {
            obj.insert(k.to_string(), val);
        }
    }
    serde_json::from_value(v).context("invalid experiment configuration")
}

fn write_report(report: &ValidationReport, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    if let Some(p) = out {
        fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?;
        if let Some(table) = &report.table {
            let csv = p.with_extension("csv");
            fs::write(&csv, table.to_csv()).with_context(|| format!("writing {}", csv.display()))?;
        }
    }
    emit(None, &text)
}

fn validate(s: &Settings, kind: ValidateKind, a: ValidateArgs) -> Result<bool> {
    let report = match kind {
        ValidateKind::Decomposition => validation::validate_decomposition(&experiment_config(s, &a)?)?,
        ValidateKind::Orthogonality => validation::mc_orthogonality_suite(&experiment_config(s, &a)?)?,
        ValidateKind::Telescoping => validation::validate_telescoping(&experiment_config(s, &a)?)?,
        ValidateKind::Sampler => validation::validate_sampler(&experiment_config(s, &a)?)?,
        ValidateKind::Decay => validation::decay_experiment(&experiment_config(s, &a)?)?,
        ValidateKind::LossBarrier => validation::validate_loss(&experiment_config(s, &a)?)?,
        ValidateKind::DistBarrier => validation::validate_dist_barrier(&experiment_config(s, &a)?)?,
    };
    let out = s.opt(a.out, "out")?;
    write_report(&report, out.as_deref())?;
    Ok(report.pass)
}

fn bench(s: &Settings, action: BenchAction) -> Result<bool> {
    let BenchAction::Marginal { n, l, seed, out } = action;
    let n = s.req(n, "n")?;
    let l = s.req(l, "l")?;
    if n < 2 {
        bail!("need --n >= 2 for a scaling fit");
    }
    let cfg = validation::ScalingConfig {
        ns: (n.div_ceil(2).max(l.max(1))..=n).collect(),
        l,
        seed: s.opt(seed, "seed")?.unwrap_or(0),
        ..Default::default()
    };
    if cfg.ns.len() < 2 {
        bail!("scaling fit needs at least two sizes; increase --n");
    }
    let report = validation::marginal_scaling(&cfg)?;
    let out = s.opt(out, "out")?;
    write_report(&report, out.as_deref())?;
    Ok(report.pass)
}

fn run(cli: Cli) -> Result<bool> {
    let s = Settings::load(cli.config.as_deref())?;
    if let Some(t) = s.opt(cli.threads, "threads")? {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    match cli.command {
        Command::Unitary { action: UnitaryAction::Gen { m, seed, out } } => {
            let u = haar_unitary(s.req(m, "m")?, &RngStream::new(s.req(seed, "seed")?))?;
            let mut text = serde_json::to_string(&u)?;
            text.push('\n');
            emit(s.opt(out, "out")?.as_deref(), &text)?;
            Ok(true)
        }
        Command::Prob { kind, args } => prob(&s, kind, args),
        Command::Marginal(a) => marginal(&s, a),
        Command::Sample(a) => sample(&s, a),
        Command::Cutoff(a) => cutoff(&s, a),
        Command::Validate { kind, args } => validate(&s, kind, args),
        Command::Bench { action } => bench(&s, action),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("check failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
