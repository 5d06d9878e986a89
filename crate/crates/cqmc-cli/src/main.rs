//! `cqmc` -- benchmark CLI for conditional quasi-Monte Carlo studies.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cqmc::harness::{
    self, ExperimentConfig, Execution, ReduceKind, ReferenceSpec, SamplerKind, Smoothing,
};
use cqmc::anova::AnovaTermSet;
use cqmc::path::Construction;
use cqmc::payoff::{Example, IntegrandSpec};
use cqmc::smooth;
use cqmc::{GeneratingMatrix, MarketParams};

#[derive(Parser)]
#[command(
    name = "cqmc",
    version,
    about = "Convergence benchmarks for conditional quasi-Monte Carlo option pricing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a replicated convergence study and emit CSV/SVG reports.
    Run(Box<RunArgs>),
    /// Compute and print the reference value for a configuration.
    Reference(ReferenceArgs),
    /// ANOVA identities and per-term convergence rates (d <= 3).
    AnovaCheck(AnovaArgs),
    /// Finite-difference smoothness scan of the conditioned integrand.
    ProbeSmoothness(ProbeArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Plain `key = value` config file mirroring the long flags below;
    /// explicit flags win over file entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Integrand: payoff|delta|gamma|rho|theta|vega|binary.
    #[arg(long)]
    example: Option<String>,
    /// Number of monitoring dates.
    #[arg(long)]
    d: Option<usize>,
    /// Path construction: standard|brownian-bridge|pca.
    #[arg(long)]
    construction: Option<String>,
    /// Smoothing: none | cond:<j> | cond:first | cond:last (j is 1-based).
    #[arg(long)]
    smoothing: Option<String>,
    /// Dimension reduction: none|gpca.
    #[arg(long)]
    reduce: Option<String>,
    /// Sampler: rqmc|mc.
    #[arg(long)]
    sampler: Option<String>,
    /// log2 sample sizes: inclusive range `8..18` or list `8,10,12`.
    #[arg(long)]
    n: Option<String>,
    /// Replicates per sample size.
    #[arg(long)]
    reps: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Initial asset price.
    #[arg(long)]
    s0: Option<f64>,
    /// Strike.
    #[arg(long)]
    strike: Option<f64>,
    /// Risk-free rate.
    #[arg(long)]
    mu: Option<f64>,
    /// Volatility.
    #[arg(long)]
    sigma: Option<f64>,
    /// Maturity in years.
    #[arg(long)]
    maturity: Option<f64>,
    /// Run replicates on a single thread.
    #[arg(long)]
    sequential: bool,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// SVG plot output path.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct ReferenceArgs {
    #[arg(long)]
    example: String,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 20_240_601)]
    seed: u64,
}

#[derive(Args)]
struct AnovaArgs {
    #[arg(long)]
    example: String,
    #[arg(long)]
    d: usize,
    /// Term subset, comma-separated 1-based coordinates (e.g. `1,2`).
    #[arg(long)]
    v: String,
    /// log2 sample sizes (range or list), capped at 12.
    #[arg(long, default_value = "8..12")]
    n: String,
    /// Replicates, capped at 20.
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, default_value_t = 20_240_601)]
    seed: u64,
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long)]
    example: String,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value = "standard")]
    construction: String,
    /// Conditioning column, 1-based.
    #[arg(long)]
    j: usize,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
    /// Number of path points.
    #[arg(long, default_value_t = 21)]
    points: usize,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(*args),
        Command::Reference(args) => reference(args),
        Command::AnovaCheck(args) => anova_check(args),
        Command::ProbeSmoothness(args) => probe_smoothness(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

/// Loads a plain `key = value` file (hash comments and blank lines
/// ignored).
fn load_key_values(path: &Path) -> Result<HashMap<String, String>, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let mut map = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("{}:{}: expected `key = value`", path.display(), lineno + 1))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Flag value, else file value, else default.
fn pick<T, F>(flag: Option<T>, file: Option<&String>, default: T, parse: F) -> Result<T, String>
where
    F: FnOnce(&str) -> Result<T, String>,
{
    match flag {
        Some(v) => Ok(v),
        None => match file {
            Some(s) => parse(s),
            None => Ok(default),
        },
    }
}

/// Parses `8..18` (inclusive) or a comma list of exponents.
fn parse_exponents(s: &str) -> Result<Vec<u32>, String> {
    if let Some((a, b)) = s.split_once("..") {
        let lo: u32 = a.trim().parse().map_err(|_| format!("bad exponent {a:?}"))?;
        let hi: u32 = b.trim().parse().map_err(|_| format!("bad exponent {b:?}"))?;
        if lo > hi {
            return Err(format!("empty exponent range {s:?}"));
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',')
        .map(|t| t.trim().parse().map_err(|_| format!("bad exponent {t:?}")))
        .collect()
}

fn run(args: RunArgs) -> Result<(), String> {
    let file = match &args.config {
        Some(path) => load_key_values(path)?,
        None => HashMap::new(),
    };
    let get = |key: &str| file.get(key);

    let example: Example = pick(
        args.example.map(|s| s.parse()).transpose()?,
        get("example"),
        Example::Delta,
        |s| s.parse(),
    )?;
    let d = pick(args.d, get("d"), 4, |s| {
        s.parse().map_err(|_| format!("bad dimension {s:?}"))
    })?;
    let construction: Construction = pick(
        args.construction.map(|s| s.parse()).transpose()?,
        get("construction"),
        Construction::Standard,
        |s| s.parse(),
    )?;
    let s0 = pick(args.s0, get("s0"), 100.0, parse_f64)?;
    let strike = pick(args.strike, get("strike"), 100.0, parse_f64)?;
    let mu = pick(args.mu, get("mu"), 0.01, parse_f64)?;
    let sigma = pick(args.sigma, get("sigma"), 0.4, parse_f64)?;
    let maturity = pick(args.maturity, get("maturity"), 1.0, parse_f64)?;
    let params = MarketParams::new(s0, strike, mu, sigma, maturity, d).map_err(|e| e.to_string())?;

    let smoothing = {
        let text = match (&args.smoothing, get("smoothing")) {
            (Some(s), _) => s.clone(),
            (None, Some(s)) => s.clone(),
            (None, None) => "cond:first".to_string(),
        };
        Smoothing::parse(&text, d)?
    };
    let reduce: ReduceKind = pick(
        args.reduce.map(|s| s.parse()).transpose()?,
        get("reduce"),
        ReduceKind::None,
        |s| s.parse(),
    )?;
    let sampler: SamplerKind = pick(
        args.sampler.map(|s| s.parse()).transpose()?,
        get("sampler"),
        SamplerKind::Rqmc,
        |s| s.parse(),
    )?;
    let n_exponents = pick(
        args.n.as_deref().map(parse_exponents).transpose()?,
        get("n"),
        (8..=18).collect(),
        parse_exponents,
    )?;
    let replicates = pick(args.reps, get("reps"), 200, |s| {
        s.parse().map_err(|_| format!("bad replicate count {s:?}"))
    })?;
    let master_seed = pick(args.seed, get("seed"), 20_240_601, |s| {
        s.parse().map_err(|_| format!("bad seed {s:?}"))
    })?;
    let sequential = args.sequential
        || get("sequential").map(|s| s == "true") == Some(true);

    let cfg = ExperimentConfig {
        example,
        params,
        construction,
        smoothing,
        reduce,
        sampler,
        n_exponents,
        replicates,
        master_seed,
        execution: if sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        },
        reference: ReferenceSpec::Auto,
    };

    eprintln!(
        "running {} d={d} {} smoothing={:?} reduce={:?} sampler={:?} reps={replicates}",
        example.name(),
        construction.name(),
        cfg.smoothing,
        cfg.reduce,
        cfg.sampler
    );
    let report = harness::convergence_study(&cfg).map_err(|e| e.to_string())?;

    println!("reference = {} ({})", report.reference, report.reference_provenance);
    println!("{:>10} {:>14} {:>14} {:>12}", "n", "mean_abs_err", "rmse", "stderr");
    for row in &report.rows {
        println!(
            "{:>10} {:>14.6e} {:>14.6e} {:>12.2e}",
            row.n, row.mean_abs_error, row.rmse, row.std_err
        );
    }
    println!(
        "fitted slope {:.4} +- {:.4} (first {} rows excluded)",
        report.slope, report.slope_std_err, report.fit_skip
    );

    let out = args.out.or_else(|| get("out").map(PathBuf::from));
    if let Some(path) = out {
        report.emit_csv(&path).map_err(|e| e.to_string())?;
        println!("wrote {}", path.display());
    }
    let plot = args.plot.or_else(|| get("plot").map(PathBuf::from));
    if let Some(path) = plot {
        report.emit_svg(&path).map_err(|e| e.to_string())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.parse().map_err(|_| format!("bad number {s:?}"))
}

fn reference(args: ReferenceArgs) -> Result<(), String> {
    let example: Example = args.example.parse()?;
    let mut cfg = ExperimentConfig::desk(example, args.d);
    cfg.master_seed = args.seed;
    let r = harness::reference_value(&cfg).map_err(|e| e.to_string())?;
    println!("reference = {} +- {} ({})", r.value, r.std_err, r.provenance);
    Ok(())
}

fn anova_check(args: AnovaArgs) -> Result<(), String> {
    let example: Example = args.example.parse()?;
    let params = MarketParams::benchmark(args.d);
    let spec = IntegrandSpec::new(example, params, GeneratingMatrix::standard(&params));
    let set = AnovaTermSet::new(spec).map_err(|e| e.to_string())?;

    let v: Vec<usize> = args
        .v
        .split(',')
        .map(|t| -> Result<usize, String> {
            let k: usize = t.trim().parse().map_err(|_| format!("bad coordinate {t:?}"))?;
            if k == 0 || k > args.d {
                return Err(format!("coordinate {k} out of 1..={}", args.d));
            }
            Ok(k - 1)
        })
        .collect::<Result<_, _>>()?;
    let mut v = v;
    v.sort_unstable();
    v.dedup();

    let integral = set.integral().map_err(|e| e.to_string())?;
    println!("I(f) = {integral} (tensor quadrature)");

    // Pointwise reconstruction check at a few deterministic points.
    let probe: [f64; 4] = [-1.2, -0.3, 0.4, 1.5];
    let mut worst: f64 = 0.0;
    for k in 0..probe.len() {
        let x: Vec<f64> = (0..args.d).map(|i| probe[(k + i) % probe.len()]).collect();
        let f = set.spec().f(&x);
        let mut sum = 0.0;
        for mask in 0u32..(1 << args.d) {
            let sub: Vec<usize> = (0..args.d).filter(|&i| mask >> i & 1 == 1).collect();
            let x_sub: Vec<f64> = sub.iter().map(|&i| x[i]).collect();
            sum += set.term(&sub, &x_sub).map_err(|e| e.to_string())?;
        }
        worst = worst.max((sum - f).abs() / (1.0 + f.abs()));
    }
    println!("max relative reconstruction defect over {} points: {worst:.3e}", probe.len());

    let exps = parse_exponents(&args.n)?;
    let report = set
        .term_rate_study(&v, &exps, args.reps, args.seed)
        .map_err(|e| e.to_string())?;
    let label: Vec<String> = v.iter().map(|k| (k + 1).to_string()).collect();
    println!("term v = {{{}}} rate study:", label.join(","));
    println!("{:>10} {:>14} {:>14}", "n", "mean_abs_err", "stderr");
    for row in &report.rows {
        println!("{:>10} {:>14.6e} {:>12.2e}", row.n, row.mean_abs_error, row.std_err);
    }
    println!("fitted slope {:.4}", report.slope);
    Ok(())
}

fn probe_smoothness(args: ProbeArgs) -> Result<(), String> {
    let example: Example = args.example.parse()?;
    let construction: Construction = args.construction.parse()?;
    if args.j == 0 || args.j > args.d {
        return Err(format!("column {} out of 1..={}", args.j, args.d));
    }
    let j = args.j - 1;
    let params = MarketParams::benchmark(args.d);
    let matrix = GeneratingMatrix::build(construction, &params);
    let sign_ok = matrix.sign_ok(j);
    let spec = IntegrandSpec::new(example, params, matrix);

    // Scan along the first reduced coordinate. For a sign-violating
    // column, center the path on a grazing point when one exists; the
    // derivative blow-up concentrates there.
    let center = if sign_ok {
        None
    } else {
        smooth::find_grazing_point(&spec, j, 0, 0.0, 8.0)
    };
    let mid = center.as_ref().map_or(0.0, |y| y[0]);
    let path: Vec<Vec<f64>> = (0..args.points)
        .map(|k| {
            let t = mid - 1.0 + 2.0 * k as f64 / (args.points - 1).max(1) as f64;
            let mut y = vec![0.0; args.d - 1];
            y[0] = t;
            y
        })
        .collect();
    let mut direction = vec![0.0; args.d - 1];
    direction[0] = 1.0;
    let report = smooth::smoothness_probe(&spec, j, &path, &direction, args.step)
        .map_err(|e| e.to_string())?;

    println!(
        "column {} ({}) sign_ok={sign_ok} step={}",
        args.j,
        construction.name(),
        args.step
    );
    if let Some(y) = &center {
        println!("grazing point at y[0] = {:.6}", y[0]);
    }
    println!("{:>10} {:>14} {:>14}", "y[0]", "dP/dy", "d2P/dy2");
    for (k, p) in path.iter().enumerate() {
        println!(
            "{:>10.4} {:>14.6e} {:>14.6e}",
            p[0], report.first_derivative[k], report.second_derivative[k]
        );
    }
    println!(
        "max first-derivative jump {:.3e}, max second-derivative jump {:.3e}",
        report.max_first_jump, report.max_second_jump
    );
    Ok(())
}
