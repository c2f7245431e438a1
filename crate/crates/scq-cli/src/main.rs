//! Command-line front end: simulation sweeps, bound reports, dataset ingestion and log replay.

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use scq_core::bounds::{bound_report, usable_sample_size, sufficient_s, BoundExtras, Scenario};
use scq_core::harness::emit::{counts_svg, sweep_svg, write_counts_csv, write_results_csv, write_results_json};
use scq_core::harness::ingest::{ingest_labels, write_labels};
use scq_core::harness::instances::genre_corpus;
use scq_core::harness::{recover, run_sweep, run_trial, summarize, ExperimentConfig, TrialOptions};
use scq_core::model::Params;
use scq_core::oracle::{read_response_log, write_response_log, PairOracle, ReplayOracle};
use scq_core::quantized::RecoveryOptions;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "scq", version, about = "Same-cluster query recovery experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded sweep and write per-trial results.
    Simulate(SimulateArgs),
    /// Print the sufficient and necessary query counts for one scenario as JSON.
    Bounds(BoundsArgs),
    /// Read an element_id,label CSV and print ground-truth statistics as JSON.
    Ingest(IngestArgs),
    /// Run a recovery algorithm on a recorded response log.
    Replay(ReplayArgs),
    /// Write the synthetic genre-label corpus as an element_id,label CSV.
    MakeCorpus(MakeCorpusArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML file with the config keys; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    /// Comma-separated list or single value.
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long = "s-size")]
    s_size: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// CSV path; the JSON goes next to it with a .json extension. CSV to stdout if absent.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long = "alpha-override")]
    alpha_override: Option<String>,
    #[arg(long = "exclusive-fraction")]
    exclusive_fraction: Option<String>,
    #[arg(long)]
    retries: Option<String>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Write an SVG chart of the sweep.
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Write the triangle counts of the first trial (i,j,count,true_ell,inferred_ell).
    #[arg(long)]
    counts: Option<PathBuf>,
    /// Write the response log of the first trial.
    #[arg(long = "record-log")]
    record_log: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    scenario: Scenario,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    delta: usize,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value_t = 0.0)]
    q: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    /// Target error of the lower bounds.
    #[arg(long = "target-error", default_value_t = 0.01)]
    target_error: f64,
    #[arg(long = "n-min")]
    n_min: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    #[arg(long)]
    c3: Option<f64>,
}

#[derive(Args)]
struct IngestArgs {
    path: PathBuf,
    #[arg(long = "delta-max", default_value_t = 2)]
    delta_max: usize,
    /// Also write the membership matrix in text form.
    #[arg(long = "matrix-out")]
    matrix_out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    /// Lines of `i j response`.
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    scenario: Scenario,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    delta: usize,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value_t = 0.0)]
    q: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    #[arg(long = "s-size")]
    s_size: Option<usize>,
    #[arg(long = "n-min")]
    n_min: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Seed of the recorded trial, which fixes the sample.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the recovered similarity matrix, one row per line.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MakeCorpusArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    if let Some(t) = a.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    let file = match &a.config {
        Some(p) => Some(std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let flags = [
        ("scenario", &a.scenario),
        ("n", &a.n),
        ("k", &a.k),
        ("delta", &a.delta),
        ("p", &a.p),
        ("q", &a.q),
        ("sigma", &a.sigma),
        ("s_size", &a.s_size),
        ("trials", &a.trials),
        ("seed", &a.seed),
        ("out", &a.out),
        ("dataset", &a.dataset),
        ("epsilon", &a.epsilon),
        ("alpha_override", &a.alpha_override),
        ("exclusive_fraction", &a.exclusive_fraction),
        ("retries", &a.retries),
    ];
    let overrides: Vec<(String, String)> =
        flags.iter().filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone()))).collect();
    let cfg = ExperimentConfig::load(file.as_deref(), &overrides)?;
    let dataset = match &cfg.dataset {
        Some(path) => {
            let delta_max = cfg.delta.values()[0];
            let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let ing = ingest_labels(BufReader::new(f), delta_max)?;
            eprintln!("dataset: n = {}, k = {}, triplet alpha = {:.5}", ing.stats.n, ing.stats.k, ing.stats.alpha_triplet);
            Some(Arc::new(ing.truth))
        }
        None => None,
    };
    let start = Instant::now();
    let results = run_sweep(&cfg, dataset.as_ref());
    let summary = summarize(&results);
    match &cfg.out {
        Some(path) => {
            write_results_csv(create(path)?, &results)?;
            write_results_json(create(&path.with_extension("json"))?, &results, &summary)?;
        }
        None => write_results_csv(std::io::stdout().lock(), &results)?,
    }
    if let Some(path) = &a.svg {
        create(path)?.write_all(sweep_svg(&summary).as_bytes())?;
    }
    if a.counts.is_some() || a.record_log.is_some() {
        let points = cfg.points();
        let opts = TrialOptions { keep_counts: a.counts.is_some(), keep_log: a.record_log.is_some() };
        let out = run_trial(&cfg, &points[0], 0, 0, dataset.as_ref(), &opts);
        if let Some(path) = &a.counts {
            let rows = out.counts.unwrap_or_default();
            write_counts_csv(create(path)?, &rows)?;
            create(&path.with_extension("svg"))?.write_all(counts_svg(&rows).as_bytes())?;
        }
        if let (Some(path), Some(log)) = (&a.record_log, &out.log) {
            write_response_log(create(path)?, log)?;
        }
    }
    let ok = results.iter().filter(|r| r.success).count();
    eprintln!("{} trials, {} exact recoveries, {:.2}s", results.len(), ok, start.elapsed().as_secs_f64());
    Ok(())
}

fn params_of(n: usize, k: usize, delta: usize, p: f64, q: f64, sigma: f64, epsilon: f64) -> Params {
    Params { n, k, delta, p, q, sigma, epsilon, ..Default::default() }
}

fn bounds(a: BoundsArgs) -> Result<()> {
    let mut params = params_of(a.n, a.k, a.delta, a.p, a.q, a.sigma, a.epsilon);
    if let Some(c) = a.c1 {
        params.c1 = c;
    }
    if let Some(c) = a.c2 {
        params.c2 = c;
    }
    if let Some(c) = a.c3 {
        params.c3 = c;
    }
    let extras = BoundExtras { n_min: a.n_min, alpha: a.alpha };
    let report = bound_report(a.scenario, &params, &extras, a.target_error)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<()> {
    let f = File::open(&a.path).with_context(|| format!("opening {}", a.path.display()))?;
    let ing = ingest_labels(BufReader::new(f), a.delta_max)?;
    for w in &ing.stats.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(path) = &a.matrix_out {
        create(path)?.write_all(ing.truth.to_text().as_bytes())?;
    }
    println!("{}", serde_json::to_string_pretty(&ing.stats)?);
    Ok(())
}

fn replay(a: ReplayArgs) -> Result<()> {
    let f = File::open(&a.log).with_context(|| format!("opening {}", a.log.display()))?;
    let log = read_response_log(BufReader::new(f))?;
    let available = log.len();
    let mut oracle = ReplayOracle::new(a.n, log)?;
    let params = params_of(a.n, a.k, a.delta, a.p, a.q, a.sigma, a.epsilon);
    let extras = BoundExtras { n_min: a.n_min, alpha: a.alpha };
    let s_size = match a.s_size {
        Some(s) => s.min(a.n),
        None => usable_sample_size(sufficient_s(a.scenario, &params, &extras)?, a.n),
    };
    let rec = recover(a.scenario, &mut oracle, &params, s_size, a.seed, &RecoveryOptions::default(), 0);
    if let (Some(path), Some(sim)) = (&a.out, &rec.similarity) {
        let mut w = create(path)?;
        for i in 0..sim.n() {
            let row: Vec<String> = sim.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
    }
    let summary = serde_json::json!({
        "scenario": a.scenario,
        "s_size": s_size,
        "responses_available": available,
        "responses_used": oracle.ledger_size(),
        "recovered": rec.similarity.is_some(),
        "failure": rec.failure.as_ref().map(|e| e.to_string()),
        "clusters": rec.assignment.as_ref().map(|x| &x.clusters),
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn make_corpus(a: MakeCorpusArgs) -> Result<()> {
    write_labels(create(&a.out)?, &genre_corpus(a.seed))?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Bounds(a) => bounds(a),
        Command::Ingest(a) => ingest(a),
        Command::Replay(a) => replay(a),
        Command::MakeCorpus(a) => make_corpus(a),
    }
}
