use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use rsp_core::adaptivity::write_metrics_csv;
use rsp_core::generator::{generate_stream, GeneratorParams, MixSchedule};
use rsp_core::query::{parse_continuous_query, ContinuousQuerySpec};
use rsp_core::rdf::{format_replay_line, read_replay};
use rsp_core::runtime::{run, EngineConfig, Mode, RunOptions, RunReport, Source};

#[derive(Parser)]
#[command(name = "rsp", version, about = "Adaptive continuous SPARQL over RDF streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run continuous queries over a replayed or generated stream.
    Run(RunArgs),
    /// Write a generated stream as a replay file.
    Generate(GenerateArgs),
    /// Print the heuristic plan of a query.
    Explain {
        #[arg(long)]
        query: PathBuf,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Query file; repeat for several queries.
    #[arg(long = "query", required = true)]
    queries: Vec<PathBuf>,
    /// `replay:<file>` or `generate:<schedule file>`.
    #[arg(long)]
    source: String,
    #[arg(long)]
    windows: u64,
    #[arg(long, default_value = "auto")]
    mode: Mode,
    /// Metrics CSV; with several queries one file per query id.
    #[arg(long)]
    metrics_out: PathBuf,
    /// Per-window result rows.
    #[arg(long)]
    results_out: Option<PathBuf>,
    #[arg(long)]
    explain: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    simulated_clock: bool,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(clap::Args)]
struct GenerateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    schedule: PathBuf,
    /// Query whose window, slide and batch set the time grid.
    #[arg(long)]
    query: PathBuf,
    #[arg(long)]
    windows: u64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

/// Input problems exit with 2, runtime failures with 1.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: error.into() }
}

fn runtime(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, error: error.into() }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Generate(args) => cmd_generate(args),
        Command::Explain { query } => cmd_explain(&query),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<EngineConfig, Failure> {
    match path {
        None => Ok(EngineConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).map_err(usage)?;
            EngineConfig::parse(&text).with_context(|| format!("in {}", p.display())).map_err(usage)
        }
    }
}

fn load_query(path: &Path) -> Result<ContinuousQuerySpec, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(usage)?;
    parse_continuous_query(&text).with_context(|| format!("in {}", path.display())).map_err(usage)
}

fn load_schedule(path: &Path) -> Result<MixSchedule, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(usage)?;
    MixSchedule::parse(&text).with_context(|| format!("in {}", path.display())).map_err(usage)
}

fn load_source(spec: &str) -> Result<Source, Failure> {
    let (kind, path) = spec.split_once(':').ok_or_else(|| usage(anyhow!("source must be replay:<file> or generate:<file>")))?;
    let path = Path::new(path);
    match kind {
        "replay" => {
            let f = File::open(path).with_context(|| format!("opening {}", path.display())).map_err(usage)?;
            let triples = read_replay(BufReader::new(f)).with_context(|| format!("in {}", path.display())).map_err(usage)?;
            Ok(Source::Replay(triples))
        }
        "generate" => Ok(Source::Generate(load_schedule(path)?)),
        _ => Err(usage(anyhow!("unknown source kind {kind:?}"))),
    }
}

/// `metrics.csv` with query `q1` becomes `metrics_q1.csv`.
fn per_query_path(base: &Path, id: &str) -> PathBuf {
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match base.extension() {
        Some(ext) => format!("{stem}_{id}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{id}"),
    };
    base.with_file_name(name)
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(w) = args.workers {
        config.workers = w;
    }
    if args.simulated_clock {
        config.simulated_clock = true;
    }
    config.validate().map_err(|e| usage(anyhow!(e)))?;
    let specs = args.queries.iter().map(|q| load_query(q)).collect::<Result<Vec<_>, _>>()?;
    let source = load_source(&args.source)?;
    if args.windows == 0 {
        return Err(usage(anyhow!("--windows must be at least 1")));
    }

    eprintln!("seed = {}", config.seed);
    eprint!("{}", config.to_text());

    let opts = RunOptions { windows: args.windows, mode: args.mode, keep_results: args.results_out.is_some() };
    let report = run(&config, specs, source, &opts).map_err(|e| if e.is_setup() { usage(e) } else { runtime(e) })?;
    write_outputs(&args, &report).map_err(runtime)?;

    if args.explain {
        for q in &report.queries {
            println!("query {} heuristic plan:\n{}", q.id, q.static_plan);
            for (window, plan) in &q.plan_changes {
                println!("query {} window {window} plan:\n{plan}", q.id);
            }
        }
    }
    for q in &report.queries {
        let n = q.records.len() as f64;
        let mean = |f: fn(&rsp_core::adaptivity::MetricsRecord) -> f64| q.records.iter().map(f).sum::<f64>() / n;
        println!(
            "{}: windows={} mean_exec_ms={:.3} mean_latency_ms={:.3} late_dropped={}",
            q.id,
            q.records.len(),
            mean(|r| r.exec_ms),
            mean(|r| r.latency_ms),
            q.records.iter().map(|r| r.late_dropped).sum::<u64>()
        );
    }
    Ok(())
}

fn write_outputs(args: &RunArgs, report: &RunReport) -> anyhow::Result<()> {
    let single = report.queries.len() == 1;
    for q in &report.queries {
        let path = if single { args.metrics_out.clone() } else { per_query_path(&args.metrics_out, &q.id) };
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write_metrics_csv(BufWriter::new(f), &q.records)?;

        if let Some(base) = &args.results_out {
            let path = if single { base.clone() } else { per_query_path(base, &q.id) };
            let mut out = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
            for w in &q.results {
                writeln!(out, "# window {}", w.window)?;
                out.write_all(w.rows.as_bytes())?;
            }
            out.flush()?;
        }
    }
    let mut meta = String::new();
    meta.push_str(&format!("seed = {}\n", report.seed));
    meta.push_str(&format!("mode = {:?}\n", args.mode).to_lowercase());
    meta.push_str(&format!("windows = {}\n", args.windows));
    meta.push_str(&format!("source = {}\n", args.source));
    for q in &args.queries {
        meta.push_str(&format!("query = {}\n", q.display()));
    }
    meta.push_str(&format!("emitted_triples = {}\n", report.emitted_triples));
    meta.push_str(&format!("wall_clock_ms = {:.3}\n", report.wall_clock_ms));
    meta.push_str("# config\n");
    meta.push_str(&report.config_echo);
    let path = sidecar(&args.metrics_out);
    fs::write(&path, meta).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> Result<(), Failure> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let schedule = load_schedule(&args.schedule)?;
    let spec = load_query(&args.query)?;
    let params = GeneratorParams {
        rate: config.rate,
        windows: args.windows,
        window_ms: spec.window_ms,
        slide_ms: spec.slide_ms,
        batch_ms: spec.batch_ms,
        sensors: config.sensors,
        seed: config.seed,
    };
    let triples = generate_stream(&schedule, &params);
    let write = || -> anyhow::Result<()> {
        let mut out = BufWriter::new(File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?);
        for t in &triples {
            writeln!(out, "{}", format_replay_line(t))?;
        }
        out.flush()?;
        Ok(())
    };
    write().map_err(runtime)?;
    eprintln!("seed = {}", config.seed);
    println!("wrote {} triples to {}", triples.len(), args.out.display());
    Ok(())
}

fn cmd_explain(path: &Path) -> Result<(), Failure> {
    let spec = load_query(path)?;
    let planner = rsp_core::optimizer::QueryPlanner::new(&spec.algebra, Default::default()).map_err(usage)?;
    print!("{}", planner.static_plan().explain());
    Ok(())
}
