use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use grama::datasets::{dataset_hash, read_dataset, write_dataset, Dataset, DatasetSpec, Split};
use grama::harness::{
    evaluate, format_metric, load_model, mean_std, metric_value, read_record, train, write_run, GramaConfig, Metric,
};
use grama::ssm::{build_ssm, parse_coefficients, propagation_horizon, StabilityReport};
use grama::{Error, Result};

#[derive(Parser)]
#[command(name = "grama", version, about = "Graph adaptive ARMA networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a key=value spec.
    Gen {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write the run directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Train this many consecutive seeds into `seed-<k>` subdirectories.
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Recompute a split's metric from a saved run.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Metric to report; must be the task's metric.
        #[arg(long)]
        metric: Option<Metric>,
        /// Dataset directory; defaults to the one recorded in the run.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Stability report for ARMA coefficients (`phi:` / `theta:` lines).
    Analyze {
        #[arg(long)]
        coeffs: PathBuf,
        /// Also report the propagation horizon at this tolerance.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Run fast built-in invariant checks.
    Selftest,
}

#[derive(Serialize)]
struct EvalOutput {
    split: String,
    metric: Metric,
    #[serde(with = "metric_value")]
    value: f64,
}

#[derive(Serialize)]
struct SeedSummary {
    metric: Metric,
    seeds: Vec<u64>,
    values: Vec<f64>,
    mean: f64,
    std: f64,
}

#[derive(Serialize)]
struct AnalyzeOutput {
    #[serde(flatten)]
    report: StabilityReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    propagation_horizon: Option<String>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn gen(spec: &Path, out: &Path) -> Result<()> {
    let spec = DatasetSpec::parse(&read_text(spec)?)?;
    let ds = Dataset::generate(&spec)?;
    write_dataset(&ds, out)?;
    println!(
        "{}: {} / {} / {} graphs, sha256 {}",
        out.display(),
        ds.train.len(),
        ds.val.len(),
        ds.test.len(),
        dataset_hash(out)?
    );
    Ok(())
}

fn train_one(config: &GramaConfig, ds: &Dataset, data: &Path, hash: &str, out: &Path) -> Result<f64> {
    let mut outcome = train(config, ds)?;
    outcome.record.dataset_hash = Some(hash.to_string());
    outcome.record.data_dir = Some(fs::canonicalize(data)?);
    write_run(out, &outcome)?;
    let r = &outcome.record;
    println!(
        "seed {}: test {} = {} (best epoch {}, {} epochs, {:.1}s)",
        r.seed,
        r.metric,
        format_metric(r.test_metric),
        r.best_epoch,
        r.epochs_run,
        r.wall_clock_secs
    );
    Ok(r.test_metric)
}

fn train_cmd(config: &Path, data: &Path, out: &Path, seeds: Option<usize>) -> Result<()> {
    let config = GramaConfig::parse(&read_text(config)?)?;
    let ds = read_dataset(data)?;
    let hash = dataset_hash(data)?;
    let Some(n) = seeds else {
        train_one(&config, &ds, data, &hash, out)?;
        return Ok(());
    };
    if n == 0 {
        return Err(Error::Config("--seeds must be at least 1".into()));
    }
    let seeds: Vec<u64> = (0..n as u64).map(|k| config.seed.wrapping_add(k)).collect();
    let mut values = Vec::with_capacity(n);
    for &seed in &seeds {
        let cfg = GramaConfig { seed, ..config.clone() };
        values.push(train_one(&cfg, &ds, data, &hash, &out.join(format!("seed-{seed}")))?);
    }
    let (mean, std) = mean_std(&values);
    let metric = Metric::for_spec(&ds.spec);
    println!("test {metric}: {} ± {} over {n} seeds", format_metric(mean), format_metric(std));
    let summary = SeedSummary { metric, seeds, values, mean, std };
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(())
}

fn eval_cmd(run: &Path, split: Split, metric: Option<Metric>, data: Option<PathBuf>) -> Result<()> {
    let record = read_record(run)?;
    let data = data
        .or(record.data_dir.clone())
        .ok_or_else(|| Error::Config("run has no recorded dataset; pass --data".into()))?;
    let ds = read_dataset(&data)?;
    let metric = metric.unwrap_or(record.metric);
    metric.check(&ds.spec)?;
    let model = load_model(run, &ds)?;
    let value = evaluate(&model, ds.split(split), metric)?;
    let out = EvalOutput { split: split.to_string(), metric, value };
    println!("{}", serde_json::to_string(&out)?);
    Ok(())
}

fn analyze(coeffs: &Path, eps: Option<f64>) -> Result<()> {
    let c = parse_coefficients(&read_text(coeffs)?)?;
    let horizon = match eps {
        Some(e) if e > 0.0 => Some(propagation_horizon(&build_ssm(&c), e).to_string()),
        Some(e) => return Err(Error::Config(format!("--eps must be positive, got {e}"))),
        None => None,
    };
    let out = AnalyzeOutput { report: StabilityReport::new(&c.phi), propagation_horizon: horizon };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn selftest() -> Result<()> {
    let checks = grama::selftest::run();
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Error::Config(format!("{failed} self-test check(s) failed")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen { spec, out } => gen(&spec, &out),
        Command::Train { config, data, out, seeds } => train_cmd(&config, &data, &out, seeds),
        Command::Eval { run, split, metric, data } => eval_cmd(&run, split, metric, data),
        Command::Analyze { coeffs, eps } => analyze(&coeffs, eps),
        Command::Selftest => selftest(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
