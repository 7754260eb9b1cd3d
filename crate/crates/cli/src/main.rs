//! Command-line front end: fit a robust location/scatter model on CSV data,
//! score new data against a stored fit, run simulation scenarios, and
//! benchmark the estimator variants.
//!
//! Exit codes: 0 success, 2 input error (unreadable/malformed files or
//! invalid flags), 3 estimation failure.

mod csvio;
mod fitfile;
mod manifest;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

use rtmcd::estimator::{destandardized_fit, fit_serial, flag, EstimatorConfig, ReweightedFit, StartTag, Variant};
use rtmcd::parallel::{choose_q, fit_parallel, ParallelConfig};
use rtmcd::sim::{run_scenario, Contamination, Scenario, ScenarioVariant, SigmaType};
use rtmcd::DataMatrix;

use fitfile::parse_variant;
use manifest::RunManifest;

/// Errors split by exit code: input problems (2) versus estimation
/// failures (3).
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Estimation(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(msg) => write!(f, "input error: {msg}"),
            CliError::Estimation(msg) => write!(f, "estimation failed: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<rtmcd::Error> for CliError {
    fn from(e: rtmcd::Error) -> Self {
        CliError::Estimation(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "rtmcd", version, about = "Robust covariance fitting and real-time outlier scoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a robust model to a CSV file and report outliers in it.
    Fit(FitArgs),
    /// Score a CSV file against a stored fit, without refitting.
    Score(ScoreArgs),
    /// Run a synthetic accuracy/detection scenario.
    Simulate(SimulateArgs),
    /// Time the estimator variants on synthetic data.
    Bench(BenchArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Input CSV (numeric columns; header auto-detected).
    input: PathBuf,
    /// Coverage fraction α in [0.5, 1); h = ⌊αn⌋ rows are covered.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Chi-square quantile for the reweighting/flagging cutoff.
    #[arg(long, default_value_t = 0.975)]
    quantile: f64,
    /// Condition-number threshold treated as singular.
    #[arg(long, default_value_t = 1000.0)]
    kappa_max: f64,
    /// Target rows-per-dimension per block for the block-count rule.
    #[arg(long, default_value_t = 4096)]
    omega: usize,
    /// Override the number of parallel blocks (q); implies the block engine.
    #[arg(long)]
    blocks: Option<usize>,
    /// Cap on worker threads (also caps the block count).
    #[arg(long)]
    threads: Option<usize>,
    /// Execution variant: i, id, idc (serial) or idcp (block-parallel).
    #[arg(long, default_value = "idc")]
    variant: String,
    /// Seed for the block partition shuffle.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Previous fit file used as a warm start (block engine only).
    #[arg(long)]
    warm_start: Option<PathBuf>,
    /// Output prefix; defaults to the input file stem.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    /// Input CSV to score.
    input: PathBuf,
    /// Fit file produced by `rtmcd fit`.
    #[arg(long)]
    fit: PathBuf,
    /// Override the flagging quantile stored in the fit.
    #[arg(long)]
    quantile: Option<f64>,
    /// Cap on worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Output prefix; defaults to the input file stem plus "-scores".
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 16384)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    p: usize,
    /// True scatter family: a09 (strong correlations) or alyz (random weak).
    #[arg(long, default_value = "a09")]
    sigma: String,
    /// Outlier placement: none, point, shift, or cluster.
    #[arg(long, default_value = "point")]
    contamination: String,
    /// Fraction of contaminated rows.
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// Outlier distance γ along the hardest direction.
    #[arg(long, default_value_t = 50.0)]
    gamma: f64,
    /// Variant to run; repeat the flag for several rows.
    #[arg(long = "variant", default_value = "idc")]
    variants: Vec<String>,
    /// Block-count override for idcp rows.
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long, default_value_t = 4096)]
    omega: usize,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix for the results CSV and manifest; stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 65536)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    p: usize,
    /// Timed runs per variant; the median is reported.
    #[arg(long, default_value_t = 5)]
    runs: usize,
    /// Comma-separated variants to time.
    #[arg(long, default_value = "i,id,idc,idcp")]
    variants: String,
    /// Variant whose median time anchors the speedup column.
    #[arg(long, default_value = "idc")]
    baseline: String,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long, default_value_t = 4096)]
    omega: usize,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional manifest output prefix.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Score(args) => cmd_score(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Bench(args) => cmd_bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rtmcd: {e}");
            match e {
                CliError::Input(_) => ExitCode::from(2),
                CliError::Estimation(_) => ExitCode::from(3),
            }
        }
    }
}

fn init_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Input(format!("--threads: {e}")))?;
    }
    Ok(())
}

fn out_prefix(out: &Option<PathBuf>, input: &Path, suffix: &str) -> PathBuf {
    out.clone().unwrap_or_else(|| {
        let stem = input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "rtmcd".to_string());
        input.with_file_name(format!("{stem}{suffix}"))
    })
}

fn with_extension(prefix: &Path, ext: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_os_string();
    name.push(ext);
    PathBuf::from(name)
}

fn max_threads(threads: Option<usize>) -> usize {
    threads.unwrap_or_else(|| {
        std::thread::available_parallelism().map_or(1, |c| c.get())
    })
}

fn cmd_fit(args: FitArgs) -> Result<(), CliError> {
    init_threads(args.threads)?;
    let config = EstimatorConfig {
        alpha: args.alpha,
        kappa_max: args.kappa_max,
        flag_quantile: args.quantile,
        variant: if args.variant == "idcp" {
            Variant::Idc
        } else {
            parse_variant(&args.variant)?
        },
        ..EstimatorConfig::default()
    };
    config
        .validated()
        .map_err(|e| CliError::Input(e.to_string()))?;
    let use_blocks =
        args.variant == "idcp" || args.blocks.is_some() || args.warm_start.is_some();

    let mut manifest = RunManifest::new(
        "fit",
        json!({
            "alpha": args.alpha,
            "quantile": args.quantile,
            "kappa_max": args.kappa_max,
            "variant": args.variant,
            "omega": args.omega,
            "blocks": args.blocks,
            "threads": args.threads,
            "warm_start": args.warm_start.as_ref().map(|p| p.display().to_string()),
        }),
    );
    manifest.seed = Some(args.seed);
    manifest.record_input(&args.input)?;

    let start = Instant::now();
    let x = csvio::read_matrix(&args.input)?;
    manifest.phase("read", start.elapsed().as_secs_f64());

    let warm = match &args.warm_start {
        Some(path) => Some(fitfile::read_fit(path)?.0),
        None => None,
    };

    let start = Instant::now();
    let (fit, report) = if use_blocks {
        let pcfg = ParallelConfig {
            base: config.clone(),
            omega: args.omega,
            q_override: args.blocks,
            max_threads: max_threads(args.threads),
            seed: args.seed,
        };
        let q = args
            .blocks
            .unwrap_or_else(|| choose_q(x.rows(), x.cols(), pcfg.omega, pcfg.max_threads));
        manifest
            .extra
            .insert("blocks_used".into(), json!(q));
        fit_parallel(&x, &pcfg, warm.as_ref())?
    } else {
        let fit = fit_serial(&x, &config)?;
        let report = flag(&x, &fit, &config)?;
        (fit, report)
    };
    manifest.phase("fit", start.elapsed().as_secs_f64());
    manifest.extra.insert(
        "chosen_start".into(),
        json!(match fit.chosen_start {
            StartTag::Wrapped => "wrapped",
            StartTag::Gsscm => "gsscm",
            StartTag::Warm => "warm",
        }),
    );
    manifest.extra.insert("rows".into(), json!(x.rows()));
    manifest.extra.insert("columns".into(), json!(x.cols()));

    let prefix = out_prefix(&args.out, &args.input, "");
    let start = Instant::now();
    fitfile::write_fit(&with_extension(&prefix, ".fit"), &fit, &config)?;
    csvio::write_report(&with_extension(&prefix, ".report.csv"), &report)?;
    manifest.phase("write", start.elapsed().as_secs_f64());
    manifest.write(&with_extension(&prefix, ".manifest.json"))?;
    Ok(())
}

fn cmd_score(args: ScoreArgs) -> Result<(), CliError> {
    init_threads(args.threads)?;
    let (fit, mut config) = fitfile::read_fit(&args.fit)?;
    if let Some(q) = args.quantile {
        config.flag_quantile = q;
    }
    config
        .validated()
        .map_err(|e| CliError::Input(e.to_string()))?;

    let mut manifest = RunManifest::new(
        "score",
        json!({
            "fit": args.fit.display().to_string(),
            "quantile": config.flag_quantile,
            "threads": args.threads,
        }),
    );
    manifest.record_input(&args.input)?;

    let start = Instant::now();
    let x = csvio::read_matrix(&args.input)?;
    manifest.phase("read", start.elapsed().as_secs_f64());

    let start = Instant::now();
    let report = match flag(&x, &fit, &config) {
        Ok(r) => r,
        // A width mismatch against the stored fit is an input problem.
        Err(e @ rtmcd::Error::WidthMismatch { .. }) => {
            return Err(CliError::Input(e.to_string()))
        }
        Err(e) => return Err(e.into()),
    };
    let score_s = start.elapsed().as_secs_f64();
    manifest.phase("score", score_s);
    manifest
        .extra
        .insert("rows_per_second".into(), json!(x.rows() as f64 / score_s));
    manifest.extra.insert("rows".into(), json!(x.rows()));

    let prefix = out_prefix(&args.out, &args.input, "-scores");
    csvio::write_report(&with_extension(&prefix, ".report.csv"), &report)?;
    manifest.write(&with_extension(&prefix, ".manifest.json"))?;
    Ok(())
}

fn scenario_variant(name: &str, blocks: Option<usize>) -> Result<ScenarioVariant, CliError> {
    if name == "idcp" {
        Ok(ScenarioVariant::Parallel { q: blocks })
    } else {
        Ok(ScenarioVariant::Serial(parse_variant(name)?))
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    init_threads(args.threads)?;
    let sigma_type = match args.sigma.as_str() {
        "a09" => SigmaType::A09,
        "alyz" => SigmaType::Alyz,
        other => return Err(CliError::Input(format!("unknown sigma family '{other}'"))),
    };
    let contamination = match args.contamination.as_str() {
        "none" => Contamination::None,
        "point" => Contamination::Point,
        "shift" => Contamination::Shift,
        "cluster" => Contamination::Cluster,
        other => return Err(CliError::Input(format!("unknown contamination '{other}'"))),
    };

    let mut lines = vec![
        "variant,n,p,sigma,contamination,eps,gamma,omega,reps,seed,mean_kl,mean_kl_raw,mean_runtime_s,recall,fpr,alyz_fallback"
            .to_string(),
    ];
    for name in &args.variants {
        let scenario = Scenario {
            n: args.n,
            p: args.p,
            sigma_type,
            contamination,
            eps: args.eps,
            gamma: args.gamma,
            variant: scenario_variant(name, args.blocks)?,
            omega: args.omega,
            max_threads: max_threads(args.threads),
            replications: args.reps,
            seed: args.seed,
        };
        scenario
            .validated()
            .map_err(|e| CliError::Input(e.to_string()))?;
        let r = run_scenario(&scenario)?;
        lines.push(format!(
            "{name},{},{},{},{},{},{},{},{},{},{:.6e},{:.6e},{:.6},{},{:.6},{}",
            args.n,
            args.p,
            args.sigma,
            args.contamination,
            args.eps,
            args.gamma,
            args.omega,
            args.reps,
            args.seed,
            r.mean_kl,
            r.mean_kl_raw,
            r.mean_runtime,
            r.detection_recall
                .map_or_else(|| "NA".to_string(), |v| format!("{v:.6}")),
            r.false_positive_rate,
            r.alyz_fallback,
        ));
    }
    let table = lines.join("\n");
    println!("{table}");

    if let Some(prefix) = &args.out {
        std::fs::write(with_extension(prefix, ".csv"), format!("{table}\n"))
            .map_err(|e| CliError::Input(format!("{}: {e}", prefix.display())))?;
        let mut manifest = RunManifest::new(
            "simulate",
            json!({
                "n": args.n, "p": args.p, "sigma": args.sigma,
                "contamination": args.contamination, "eps": args.eps,
                "gamma": args.gamma, "variants": args.variants,
                "blocks": args.blocks, "omega": args.omega,
                "threads": args.threads, "reps": args.reps,
            }),
        );
        manifest.seed = Some(args.seed);
        manifest.write(&with_extension(prefix, ".manifest.json"))?;
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), CliError> {
    init_threads(args.threads)?;
    let variants: Vec<String> = args
        .variants
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if !variants.contains(&args.baseline) {
        return Err(CliError::Input(format!(
            "baseline '{}' is not among the timed variants",
            args.baseline
        )));
    }
    if args.runs == 0 {
        return Err(CliError::Input("--runs must be positive".into()));
    }

    // Clean synthetic data is enough for timing; contamination does not
    // change the per-iteration cost profile.
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let data: Vec<f64> = (0..args.n * args.p)
        .map(|_| Distribution::<f64>::sample(&StandardNormal, &mut rng))
        .collect();
    let x = DataMatrix::new(args.n, args.p, data);

    let time_variant = |name: &str| -> Result<f64, CliError> {
        let mut times = Vec::with_capacity(args.runs);
        for run in 0..args.runs {
            let start = Instant::now();
            let fit: ReweightedFit = if name == "idcp" {
                let pcfg = ParallelConfig {
                    omega: args.omega,
                    q_override: args.blocks,
                    max_threads: max_threads(args.threads),
                    seed: args.seed.wrapping_add(run as u64),
                    ..ParallelConfig::default()
                };
                fit_parallel(&x, &pcfg, None)?.0
            } else {
                let config = EstimatorConfig {
                    variant: parse_variant(name)?,
                    ..EstimatorConfig::default()
                };
                fit_serial(&x, &config)?
            };
            times.push(start.elapsed().as_secs_f64());
            // Keep the optimizer from discarding the fit.
            std::hint::black_box(destandardized_fit(&fit));
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(if times.len() % 2 == 1 {
            times[times.len() / 2]
        } else {
            0.5 * (times[times.len() / 2 - 1] + times[times.len() / 2])
        })
    };

    let mut medians = BTreeMap::new();
    for name in &variants {
        medians.insert(name.clone(), time_variant(name)?);
    }
    let base = medians[&args.baseline];
    println!("variant,median_s,speedup_vs_{}", args.baseline);
    for name in &variants {
        let t = medians[name];
        println!("{name},{t:.6},{:.4}", base / t);
    }

    if let Some(prefix) = &args.out {
        let mut manifest = RunManifest::new(
            "bench",
            json!({
                "n": args.n, "p": args.p, "runs": args.runs,
                "variants": variants, "baseline": args.baseline,
                "blocks": args.blocks, "omega": args.omega,
                "threads": args.threads,
            }),
        );
        manifest.seed = Some(args.seed);
        for (name, t) in &medians {
            manifest.extra.insert(format!("median_s_{name}"), json!(t));
        }
        manifest.write(&with_extension(prefix, ".manifest.json"))?;
    }
    Ok(())
}
