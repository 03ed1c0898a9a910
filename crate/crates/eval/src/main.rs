use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::Value;
use weavematch_core::solvers::DEFAULT_ENUMERATION_LIMIT;
use weavematch_core::{
    cost_report, is_stable, CoreError, CostKind, Dataset, DatasetSpec, Manifest, PreferenceInstance, Setting,
};
use weavematch_eval::{run_benchmark, solve, Binarize, EvalError, EvalReport, Method};
use weavematch_nn::{
    train, LossKind, LossWeights, MatrixLoss, ModelConfig, NnError, TrainConfig, Variant, WeaveNet,
};

#[derive(Parser)]
#[command(name = "weavematch", version, about = "Stable matching solvers, network training, and benchmarks")]
#[command(args_override_self = true)]
struct Cli {
    /// JSON object whose keys mirror the subcommand's long flags; flags given
    /// on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a dataset manifest (and optionally every instance).
    Generate(GenerateArgs),
    /// Solve one instance with a classical algorithm.
    Solve(SolveArgs),
    /// Train a network on freshly generated instances.
    Train(TrainArgs),
    /// Evaluate one checkpoint against the classical baselines.
    Eval(EvalArgs),
    /// Run a list of methods over a manifest.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// UU, DD, GG, UD, or Lib.
    #[arg(long, default_value = "UU")]
    dist: Setting,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Joint rank histogram, required by the Lib setting.
    #[arg(long)]
    histogram: Option<PathBuf>,
    /// Also write every instance to <out>/instances/<id>.json.
    #[arg(long)]
    instances: bool,
    #[arg(long, env = "WEAVEMATCH_OUT", default_value = "weavematch-out")]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// gs, gs_best, dacc, powerbalance, polymin, or oracle.
    #[arg(long, value_parser = parse_method)]
    algo: Method,
    #[arg(long, default_value = "seq")]
    cost: CostKind,
    /// Instance JSON file.
    #[arg(long)]
    instance: PathBuf,
    /// Where to write the matching JSON; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value = "UU")]
    dist: Setting,
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long)]
    histogram: Option<PathBuf>,
    /// Layers, width, and optional pooling width: L,D[,Dp].
    #[arg(long, default_value = "18,32,64")]
    arch: String,
    #[arg(long, default_value = "sym")]
    variant: Variant,
    /// sm, fsm, or bsm.
    #[arg(long, default_value = "sm")]
    loss: LossKind,
    #[arg(long, default_value = "cosine")]
    matrix_loss: MatrixLoss,
    #[arg(long)]
    lambda_m: Option<f64>,
    #[arg(long)]
    lambda_s: Option<f64>,
    #[arg(long)]
    lambda_f: Option<f64>,
    #[arg(long)]
    lambda_b: Option<f64>,
    #[arg(long, default_value_t = 200_000)]
    iters: usize,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 1000)]
    val_every: usize,
    /// Size of the generated validation set.
    #[arg(long, default_value_t = 1000)]
    val_count: usize,
    /// Seed of the generated validation set; defaults to seed + 1.
    #[arg(long)]
    val_seed: Option<u64>,
    /// Use this manifest as the validation set instead of generating one.
    #[arg(long)]
    val_manifest: Option<PathBuf>,
    /// Seeds both the training stream and the weight initialisation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rescale gradients whose global norm exceeds this value.
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long, env = "WEAVEMATCH_OUT", default_value = "weavematch-out")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "argmax")]
    binarize: Binarize,
    #[arg(long, default_value = "seq")]
    cost: CostKind,
    /// Name of the network in the report.
    #[arg(long, default_value = "weavenet")]
    label: String,
    /// Comma-separated baselines; defaults to every classical method that fits the instance size.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    baselines: Vec<Method>,
    #[arg(long, env = "WEAVEMATCH_OUT", default_value = "weavematch-out")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Comma-separated classical methods; defaults to every one that fits the instance size.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Vec<Method>,
    /// Network checkpoint as PATH or LABEL=PATH; repeatable.
    #[arg(long)]
    checkpoint: Vec<String>,
    #[arg(long, default_value = "argmax")]
    binarize: Binarize,
    #[arg(long, default_value = "seq")]
    cost: CostKind,
    #[arg(long, env = "WEAVEMATCH_OUT", default_value = "weavematch-out")]
    out: PathBuf,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: EvalError| e.to_string())
}

const SUBCOMMANDS: [&str; 6] = ["generate", "solve", "train", "eval", "bench", "help"];

/// A problem with the invocation rather than with the work itself.
#[derive(Debug)]
struct ConfigError(String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn json_scalar(key: &str, v: &Value) -> Result<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        _ => Err(config_err(format!("config key '{key}' must hold a scalar or a list of scalars"))),
    }
}

/// Splices the flags of a `--config` file in front of the command-line
/// flags. The subcommand comes from the command line or, failing that,
/// from the file's "command" key.
fn expand_config(mut args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path: Option<OsString> = None;
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy().into_owned();
        if a == "--config" {
            if i + 1 >= args.len() {
                return Err(config_err("--config needs a file"));
            }
            path = Some(args.remove(i + 1));
            args.remove(i);
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.into());
            args.remove(i);
        } else {
            i += 1;
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| config_err(format!("reading config {}: {e}", path.to_string_lossy())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| config_err(format!("config is not JSON: {e}")))?;
    let Value::Object(map) = value else { return Err(config_err("config must be a JSON object")) };

    let mut command = None;
    let mut flags: Vec<OsString> = Vec::new();
    for (key, v) in &map {
        if key == "command" {
            command = Some(json_scalar(key, v)?);
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        match v {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => flags.push(flag.into()),
            Value::Array(items) => {
                for item in items {
                    flags.push(flag.clone().into());
                    flags.push(json_scalar(key, item)?.into());
                }
            }
            other => {
                flags.push(flag.into());
                flags.push(json_scalar(key, other)?.into());
            }
        }
    }
    let mut out = vec![args[0].clone()];
    match args.iter().skip(1).position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref())) {
        Some(p) => {
            out.extend(args[1..=p + 1].iter().cloned());
            out.extend(flags);
            out.extend(args[p + 2..].iter().cloned());
        }
        None => {
            let cmd = command.ok_or_else(|| config_err("no subcommand on the command line or in the config"))?;
            out.push(cmd.into());
            out.extend(flags);
            out.extend(args[1..].iter().cloned());
        }
    }
    Ok(out)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let nn = |e: &NnError| match e {
        NnError::Diverged { .. } => Some(3),
        NnError::Config(_) | NnError::Input(_) => Some(2),
        _ => None,
    };
    let core = |e: &CoreError| match e {
        CoreError::InvalidDataset(_)
        | CoreError::InvalidHistogram(_)
        | CoreError::InvalidScale(_)
        | CoreError::TooLarge { .. }
        | CoreError::NotSquare { .. } => Some(2),
        _ => None,
    };
    for cause in err.chain() {
        let code = if cause.is::<ConfigError>() {
            Some(2)
        } else if let Some(e) = cause.downcast_ref::<NnError>() {
            nn(e)
        } else if let Some(e) = cause.downcast_ref::<CoreError>() {
            core(e)
        } else if let Some(e) = cause.downcast_ref::<EvalError>() {
            match e {
                EvalError::UnknownMethod(_) | EvalError::Input(_) => Some(2),
                EvalError::Nn(inner) | EvalError::Checkpoint { source: inner, .. } => nn(inner),
                EvalError::Core(inner) => core(inner),
                _ => None,
            }
        } else {
            None
        };
        if let Some(c) = code {
            return c;
        }
    }
    1
}

fn main() -> ExitCode {
    let args = match expand_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve_one(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Bench(a) => bench_cmd(a),
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let histogram = match &a.histogram {
        Some(p) => Some(std::fs::canonicalize(p).with_context(|| format!("histogram {}", p.display()))?),
        None => None,
    };
    let spec = DatasetSpec::named(a.dist, a.n, a.seed, a.count, histogram.as_deref())?;
    let ds = Dataset::new(spec)?;
    std::fs::create_dir_all(&a.out)?;
    let path = a.out.join("manifest.json");
    std::fs::write(&path, ds.manifest().to_json()?)?;
    if a.instances {
        let dir = a.out.join("instances");
        std::fs::create_dir_all(&dir)?;
        for (k, inst) in ds.instances().enumerate() {
            inst.save(dir.join(format!("{k}.json")))?;
        }
    }
    println!("wrote {} ({} {} instances, n={})", path.display(), a.count, ds.spec().label(), a.n);
    Ok(())
}

fn solve_one(a: SolveArgs) -> Result<()> {
    let inst = PreferenceInstance::load(&a.instance).with_context(|| format!("instance {}", a.instance.display()))?;
    let m = solve(&a.algo, &inst, a.cost)?;
    let json = m.to_json()?;
    match &a.out {
        Some(p) => std::fs::write(p, &json)?,
        None => println!("{json}"),
    }
    let c = cost_report(&inst, &m)?;
    eprintln!(
        "{}: stable={} seq={} bal={} egal={} reg={}",
        a.algo.name(),
        is_stable(&inst, &m),
        c.seq,
        c.bal,
        c.egal,
        c.reg
    );
    Ok(())
}

fn manifest_instances(path: &Path) -> Result<Vec<(u64, PreferenceInstance)>> {
    let m = Manifest::load(path).with_context(|| format!("manifest {}", path.display()))?;
    let instances = m.instances()?;
    if instances.is_empty() {
        return Err(config_err(format!("manifest {} lists no instances", path.display())));
    }
    Ok(instances)
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let model_config = ModelConfig::from_arch(&a.arch)?.with_variant(a.variant);
    model_config.validate()?;
    let defaults = LossWeights::default();
    let weights = LossWeights {
        lambda_m: a.lambda_m.unwrap_or(defaults.lambda_m),
        lambda_s: a.lambda_s.unwrap_or(defaults.lambda_s),
        lambda_f: a.lambda_f.unwrap_or(defaults.lambda_f),
        lambda_b: a.lambda_b.unwrap_or(defaults.lambda_b),
    };
    let spec = DatasetSpec::named(a.dist, a.n, a.seed, 0, a.histogram.as_deref())?;
    let mut cfg = TrainConfig::new(spec, a.loss, a.iters, a.seed);
    cfg.batch_size = a.batch;
    cfg.lr = a.lr;
    cfg.matrix_loss = a.matrix_loss;
    cfg.weights = weights;
    cfg.val_every = a.val_every;
    cfg.clip_norm = a.clip_norm;
    cfg.validate()?;

    let validation: Vec<PreferenceInstance> = match &a.val_manifest {
        Some(p) => manifest_instances(p)?.into_iter().map(|(_, i)| i).collect(),
        None => {
            let seed = a.val_seed.unwrap_or(a.seed.wrapping_add(1));
            let spec = DatasetSpec::named(a.dist, a.n, seed, a.val_count, a.histogram.as_deref())?;
            Dataset::new(spec)?.instances().collect()
        }
    };

    std::fs::create_dir_all(&a.out)?;
    let record = serde_json::json!({ "model": &model_config, "train": &cfg });
    std::fs::write(a.out.join("train_config.json"), serde_json::to_string_pretty(&record)?)?;
    let model = WeaveNet::<f32>::new(model_config, a.seed)?;
    eprintln!("training {} parameters for {} iterations", model.num_params(), a.iters);
    let outcome = train(model, &cfg, &validation, |r| {
        eprintln!(
            "iter {:>7}  lm {:.3e}  ls {:.3e}  lf/lb {:.3e}  stable {:5.1}%  seq {:.2}  bal {:.2}",
            r.iteration, r.lm, r.ls, r.lf_or_lb, r.stable_rate, r.mean_seq, r.mean_bal
        )
    })?;
    outcome.best.save(a.out.join("best.ck"))?;
    outcome.log.write_csv(a.out.join("train_log.csv"))?;
    if let Some(b) = outcome.best_record {
        println!(
            "best checkpoint from iteration {}: stable {:.1}%, mean seq {:.3}, mean bal {:.3}; written to {}",
            b.iteration,
            b.stable_rate,
            b.mean_seq,
            b.mean_bal,
            a.out.join("best.ck").display()
        );
    }
    Ok(())
}

/// Classical methods that can run on instances of at most `max_n` agents.
fn default_methods(max_n: usize) -> Vec<Method> {
    Method::algorithms().into_iter().filter(|m| !m.enumerates() || max_n <= DEFAULT_ENUMERATION_LIMIT).collect()
}

fn report_and_write(report: &EvalReport, out: &Path) -> Result<()> {
    report.write(out)?;
    println!(
        "{:<16} {:>8} {:>8} {:>10} {:>8} {:>20} {:>24}",
        "method",
        "stable%",
        "valid%",
        format!("mean {}", report.cost_kind),
        "opt%",
        "win/tie/loss %",
        "bp 0/1/2/3+/fail"
    );
    let f = |v: Option<f64>, p: usize| v.map(|x| format!("{x:.p$}")).unwrap_or_else(|| "-".into());
    for s in &report.summaries {
        let wtl = match s.win_tie_loss {
            Some(w) => format!("{:.1}/{:.1}/{:.1}", w.win, w.tie, w.loss),
            None if report.baseline.as_deref() == Some(s.method.as_str()) => "baseline".into(),
            None => "-".into(),
        };
        let h = s.histogram;
        println!(
            "{:<16} {:>8.1} {:>8.1} {:>10} {:>8} {:>20} {:>24}",
            s.method,
            s.stable_rate,
            s.valid_rate,
            f(s.mean_cost(report.cost_kind), 3),
            f(s.optimal_hit_rate, 1),
            wtl,
            format!("{}/{}/{}/{}/{}", h.zero, h.one, h.two, h.three_plus, h.fail)
        );
    }
    println!("reports written to {}", out.display());
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let instances = manifest_instances(&a.manifest)?;
    let max_n = instances.iter().map(|(_, i)| i.n()).max().unwrap_or(0);
    let mut methods =
        vec![Method::Network { label: a.label.clone(), checkpoint: a.checkpoint.clone(), binarize: a.binarize }];
    methods.extend(if a.baselines.is_empty() { default_methods(max_n) } else { a.baselines });
    let report = run_benchmark(&instances, &methods, a.cost)?;
    report_and_write(&report, &a.out)
}

fn bench_cmd(a: BenchArgs) -> Result<()> {
    let instances = manifest_instances(&a.manifest)?;
    let max_n = instances.iter().map(|(_, i)| i.n()).max().unwrap_or(0);
    let mut methods = if a.methods.is_empty() { default_methods(max_n) } else { a.methods };
    for spec in &a.checkpoint {
        let (label, path) = match spec.split_once('=') {
            Some((l, p)) => (l.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(spec);
                let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| spec.clone());
                (stem, p)
            }
        };
        methods.push(Method::Network { label, checkpoint: path, binarize: a.binarize });
    }
    let report = run_benchmark(&instances, &methods, a.cost)?;
    report_and_write(&report, &a.out)
}
