mod config;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use atkde::evaluate::{benchmark_run, BenchmarkTable, ModelSpec};
use atkde::eventlog::{derive_arrivals, parse_event_log, temporal_split};
use atkde::time::{format_timestamp, parse_timestamp};
use atkde::{
    cadd, fit_best_distribution, fit_mean, ArrivalDataset, ArrivalSimulator, AtKdeModel, GenerationConfig, Horizon,
    ModelFile, SimulationWindow,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use config::{Settings, KEYS};

const INPUT_ERROR: u8 = 2;
const EVALUATION_ERROR: u8 = 3;
const INTERNAL_ERROR: u8 = 4;

#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

type CmdResult<T = ()> = Result<T, Failure>;

fn code_of(e: &atkde::Error) -> u8 {
    use atkde::Error::*;
    match e {
        Config(_) | Parse { .. } | Open { .. } | Io(_) | Csv(_) | Json(_) | EmptyInput(_) | Split(_)
        | InsufficientData { .. } => INPUT_ERROR,
        EmptyArrivals(_) | BeforeOrigin { .. } => EVALUATION_ERROR,
        Generation(_) | Model(_) => INTERNAL_ERROR,
    }
}

/// Tags a library error with the stage it came from.
fn stage<T>(name: &str, result: atkde::Result<T>) -> CmdResult<T> {
    result.map_err(|e| Failure {
        code: code_of(&e),
        error: anyhow!(e).context(format!("{name} failed")),
    })
}

fn input<T>(result: anyhow::Result<T>) -> CmdResult<T> {
    result.map_err(|error| Failure {
        code: INPUT_ERROR,
        error,
    })
}

fn internal<T>(result: anyhow::Result<T>) -> CmdResult<T> {
    result.map_err(|error| Failure {
        code: INTERNAL_ERROR,
        error,
    })
}

fn keys_help() -> String {
    let mut s = String::from("Config file keys (flat `key = value`; flags override):\n");
    for (key, default) in KEYS {
        s.push_str(&format!("  {key:<22} default: {default}\n"));
    }
    s
}

#[derive(Parser)]
#[command(
    name = "atkde",
    version,
    about = "Case-arrival modeling with adaptive, time-dependent KDE ensembles",
    after_help = keys_help()
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive case arrivals from an event log.
    Ingest(IngestArgs),
    /// Split an event log and fit a model on the training part.
    Fit(FitArgs),
    /// Generate arrivals from a model file.
    Generate(GenerateArgs),
    /// Compare two arrival files by CADD.
    Evaluate(EvaluateArgs),
    /// Fit and score AT-KDE, Mean, and Best Distribution over several seeds.
    Benchmark(BenchmarkArgs),
}

#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Smoothing window and minimum segment length in days [default: 7].
    #[arg(long)]
    window: Option<usize>,
    /// Change-point sensitivities, comma separated [default: 0.1,0.2,...,1.0].
    #[arg(long)]
    sensitivities: Option<String>,
    /// Reject solutions with this many segment clusters or more [default: 6].
    #[arg(long)]
    kmax: Option<usize>,
    /// Intraday bins [default: 3].
    #[arg(long)]
    bins: Option<usize>,
    /// Bandwidth factors to try, comma separated [default: 0.25,0.5,1,2,4,8,16,32,64,128,200].
    #[arg(long)]
    factor_grid: Option<String>,
    /// Share of the training data held out for the bandwidth search [default: 0.2].
    #[arg(long)]
    validation_fraction: Option<f64>,
    /// Generation runs per bandwidth candidate [default: 3].
    #[arg(long)]
    seeds_per_candidate: Option<u32>,
    /// Random seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Share of arrivals used for training [default: 0.8].
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Days to simulate [default: length of the test window].
    #[arg(long)]
    horizon_days: Option<u32>,
    /// Cases to simulate instead of a day count.
    #[arg(long, conflicts_with = "horizon_days")]
    num_cases: Option<u64>,
    /// First instant of the simulation, ISO-8601 [default: start of the test window].
    #[arg(long)]
    start: Option<String>,
    /// Benchmark runs per model [default: 10].
    #[arg(long)]
    runs: Option<u32>,
    /// Case id column [default: case_id].
    #[arg(long)]
    case_column: Option<String>,
    /// Timestamp column [default: timestamp].
    #[arg(long)]
    timestamp_column: Option<String>,
    /// Activity column [default: unset].
    #[arg(long)]
    activity_column: Option<String>,
}

impl ConfigArgs {
    fn settings(&self) -> CmdResult<Settings> {
        let mut s = Settings::default();
        if let Some(path) = &self.config {
            input(s.apply_file(path))?;
        }
        let mut flags: Vec<(&str, String)> = Vec::new();
        macro_rules! flag {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field {
                    flags.push((stringify!($field), v.to_string()));
                })*
            };
        }
        flag!(
            window,
            sensitivities,
            kmax,
            bins,
            factor_grid,
            validation_fraction,
            seeds_per_candidate,
            seed,
            train_fraction,
            horizon_days,
            num_cases,
            start,
            runs,
            case_column,
            timestamp_column,
            activity_column
        );
        for (key, value) in flags {
            input(s.set(key, &value).with_context(|| format!("--{}", key.replace('_', "-"))))?;
        }
        Ok(s)
    }
}

#[derive(Args)]
struct IngestArgs {
    /// Event log CSV.
    #[arg(long)]
    input: PathBuf,
    /// Arrivals CSV (`date,timestamp`, one row per arrival, empty days kept).
    #[arg(long)]
    output: PathBuf,
    /// Also write the training part of the split as `case_id,timestamp`.
    #[arg(long)]
    train_output: Option<PathBuf>,
    /// Also write the test part of the split as `case_id,timestamp`.
    #[arg(long)]
    test_output: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelKind {
    AtKde,
    Mean,
    BestDistribution,
}

#[derive(Args)]
struct FitArgs {
    /// Event log CSV.
    #[arg(long)]
    input: PathBuf,
    /// Model JSON to write.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "at-kde")]
    kind: ModelKind,
    /// Diagnostics JSON to write.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
    /// Write the held-out test arrivals as `case_id,timestamp`.
    #[arg(long)]
    test_output: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct GenerateArgs {
    /// Model JSON written by `fit`.
    #[arg(long)]
    model: PathBuf,
    /// Arrivals CSV to write.
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Reference arrivals (`case_id,timestamp`).
    #[arg(long)]
    test: PathBuf,
    /// Simulated arrivals (`case_id,timestamp`).
    #[arg(long)]
    sim: PathBuf,
    /// Report JSON to write.
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Event log CSV.
    #[arg(long)]
    input: PathBuf,
    /// Directory for benchmark.csv, benchmark.json and the heatmap CSVs.
    #[arg(long)]
    output_dir: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, write: impl FnOnce(&mut dyn Write) -> anyhow::Result<()>) -> CmdResult {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let result = (|| -> anyhow::Result<()> {
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        {
            let mut w = BufWriter::new(tmp.as_file_mut());
            write(&mut w)?;
            w.flush()?;
        }
        tmp.persist(path)?;
        Ok(())
    })();
    result
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(|error| Failure {
            code: INPUT_ERROR,
            error,
        })
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CmdResult {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

fn write_cases(path: &Path, dataset: &ArrivalDataset, prefix: &str) -> CmdResult {
    write_atomic(path, |w| {
        writeln!(w, "case_id,timestamp")?;
        for (n, t) in dataset.arrivals().enumerate() {
            writeln!(w, "{prefix}_{},{}", n + 1, format_timestamp(t))?;
        }
        Ok(())
    })
}

fn read_arrivals(path: &Path, settings: &Settings) -> CmdResult<ArrivalDataset> {
    let records = stage("read", parse_event_log(path, &settings.columns()))?;
    stage("read", derive_arrivals(&records))
}

fn read_split(path: &Path, settings: &Settings) -> CmdResult<(ArrivalDataset, ArrivalDataset)> {
    let dataset = read_arrivals(path, settings)?;
    let spec = input(settings.split())?;
    stage("split", temporal_split(&dataset, spec))
}

fn split_summary(train: &ArrivalDataset, test: &ArrivalDataset) -> serde_json::Value {
    json!({
        "train_arrivals": train.total_arrivals(),
        "train_days": train.num_days(),
        "test_arrivals": test.total_arrivals(),
        "test_days": test.num_days(),
        "test_first_date": test.first_date(),
    })
}

fn cmd_ingest(args: IngestArgs) -> CmdResult {
    let settings = args.config.settings()?;
    let dataset = read_arrivals(&args.input, &settings)?;
    write_atomic(&args.output, |w| Ok(dataset.write_csv(w)?))?;
    if args.train_output.is_some() || args.test_output.is_some() {
        let spec = input(settings.split())?;
        let (train, test) = stage("split", temporal_split(&dataset, spec))?;
        if let Some(p) = &args.train_output {
            write_cases(p, &train, "train")?;
        }
        if let Some(p) = &args.test_output {
            write_cases(p, &test, "test")?;
        }
    }
    println!(
        "{} arrivals over {} days",
        dataset.total_arrivals(),
        dataset.num_days()
    );
    Ok(())
}

fn cmd_fit(args: FitArgs) -> CmdResult {
    let settings = args.config.settings()?;
    let (train, test) = read_split(&args.input, &settings)?;
    let window = SimulationWindow::following(&train, &test);
    let (mut model, fit_diagnostics) = match args.kind {
        ModelKind::AtKde => {
            let (m, d) = stage("fit", AtKdeModel::fit(&train, &settings.fit_config(), settings.seed))?;
            (ModelFile::AtKde(m), internal(serde_json::to_value(d).map_err(Into::into))?)
        }
        ModelKind::Mean => {
            let m = stage("fit", fit_mean(&train))?;
            (ModelFile::Mean(m), serde_json::Value::Null)
        }
        ModelKind::BestDistribution => {
            let m = stage("fit", fit_best_distribution(&train))?;
            let d = json!({ "candidates": m.candidates });
            (ModelFile::BestDistribution(m), d)
        }
    };
    model.set_default_window(window);
    write_json(&args.model, &model)?;
    if let Some(path) = &args.diagnostics {
        let diagnostics = json!({
            "settings": settings.as_map(),
            "model": model.name(),
            "split": split_summary(&train, &test),
            "fit": fit_diagnostics,
        });
        write_json(path, &diagnostics)?;
    }
    if let Some(path) = &args.test_output {
        write_cases(path, &test, "test")?;
    }
    match &model {
        ModelFile::AtKde(m) => println!(
            "fitted at_kde: {} global clusters, {} cells, bandwidth factor {}",
            m.num_global_clusters(),
            m.ensemble.len(),
            m.ensemble.bandwidth_factor
        ),
        other => println!("fitted {}", other.name()),
    }
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> CmdResult {
    let settings = args.config.settings()?;
    let file = input(File::open(&args.model).with_context(|| format!("cannot read {}", args.model.display())))?;
    let model = input(
        ModelFile::read_json(BufReader::new(file))
            .map_err(anyhow::Error::from)
            .with_context(|| format!("{} is not a valid model file", args.model.display())),
    )?;
    let default = model.default_window();
    let start = match &settings.start {
        Some(raw) => input(parse_timestamp(raw).ok_or_else(|| anyhow!("--start: cannot parse {raw:?}")))?,
        None => input(
            default
                .map(|w| w.start)
                .ok_or_else(|| anyhow!("model has no default window; pass --start")),
        )?,
    };
    let horizon = match (settings.num_cases, settings.horizon_days) {
        (Some(n), _) => Horizon::Cases(n),
        (None, Some(d)) => Horizon::Days(d),
        (None, None) => Horizon::Days(input(
            default
                .map(|w| w.days)
                .ok_or_else(|| anyhow!("model has no default window; pass --horizon-days or --num-cases")),
        )?),
    };
    let config = GenerationConfig {
        start,
        horizon,
        seed: settings.seed,
    };
    let generated = stage("generate", model.simulate(&config))?;
    write_atomic(&args.output, |w| Ok(generated.write_csv(w)?))?;
    println!(
        "{} arrivals over {} days from {}",
        generated.total(),
        generated.days.len(),
        format_timestamp(start)
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> CmdResult {
    let settings = args.config.settings()?;
    let read = |path: &Path| -> CmdResult<Vec<i64>> {
        match read_arrivals(path, &settings) {
            Ok(ds) => Ok(ds.arrivals().collect()),
            Err(f) => {
                let empty = f
                    .error
                    .downcast_ref::<atkde::Error>()
                    .is_some_and(|e| matches!(e, atkde::Error::EmptyInput(_)));
                if empty {
                    Err(Failure {
                        code: EVALUATION_ERROR,
                        error: anyhow!("{} has no arrivals", path.display()),
                    })
                } else {
                    Err(f)
                }
            }
        }
    };
    let test = read(&args.test)?;
    let sim = read(&args.sim)?;
    let report = stage("evaluate", cadd(&test, &sim))?;
    println!("cadd = {}", report.cadd);
    println!("sqrt_cadd = {}", report.sqrt_cadd);
    if let Some(path) = &args.output {
        write_json(path, &report)?;
    }
    Ok(())
}

fn heatmap_csv(w: &mut dyn Write, matrix: &[[u64; 24]; 7]) -> anyhow::Result<()> {
    const DAYS: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];
    write!(w, "weekday")?;
    for h in 0..24 {
        write!(w, ",h{h:02}")?;
    }
    writeln!(w)?;
    for (day, row) in DAYS.iter().zip(matrix) {
        write!(w, "{day}")?;
        for c in row {
            write!(w, ",{c}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn write_benchmark(dir: &Path, table: &BenchmarkTable) -> CmdResult {
    input(std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display())))?;
    write_atomic(&dir.join("benchmark.csv"), |w| {
        writeln!(w, "model,mean_sqrt_cadd,std_sqrt_cadd,fit_seconds,gen_seconds")?;
        for r in &table.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.model, r.mean_sqrt_cadd, r.std_sqrt_cadd, r.fit_seconds, r.gen_seconds
            )?;
        }
        Ok(())
    })?;
    write_json(&dir.join("benchmark.json"), table)?;
    write_atomic(&dir.join("heatmap_test.csv"), |w| heatmap_csv(w, &table.test_weekday_hour))?;
    for row in &table.rows {
        if let Some(m) = &row.weekday_hour {
            write_atomic(&dir.join(format!("heatmap_{}.csv", row.model)), |w| heatmap_csv(w, m))?;
        }
    }
    Ok(())
}

fn cmd_benchmark(args: BenchmarkArgs) -> CmdResult {
    let settings = args.config.settings()?;
    let (train, test) = read_split(&args.input, &settings)?;
    let models = [
        ModelSpec::AtKde(settings.fit_config()),
        ModelSpec::Mean,
        ModelSpec::BestDistribution,
    ];
    let table = stage("benchmark", benchmark_run(&train, &test, &models, settings.runs, settings.seed))?;
    write_benchmark(&args.output_dir, &table)?;
    println!("model                 mean_sqrt_cadd  std_sqrt_cadd");
    for r in &table.rows {
        match &r.error {
            None => println!("{:<20} {:>15.4} {:>14.4}", r.model, r.mean_sqrt_cadd, r.std_sqrt_cadd),
            Some(e) => println!("{:<20} failed: {e}", r.model),
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Benchmark(a) => cmd_benchmark(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
