use std::fs::File;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tokencast::bench::{run_bench, write_outputs, BenchDataset, BenchOptions, Method};
use tokencast::config::{self, load_config, PredictorKind, PredictorSection, Rounding, RunConfig};
use tokencast::external::{format_frame, WireRequest};
use tokencast::io::read_series;
use tokencast::race::{run_race, Clock, RaceReport};
use tokencast::stream::{FrameSink, Role};
use tokencast::tokfile;
use tokencast_core::{
    encode, encode_unfiltered, ForecastRequest, ForecastResult, Frame, NormalizationRecord,
    TokenSequence,
};

/// Anti-aliased tokenization and race decoding for token-based forecasters.
#[derive(Parser)]
#[command(name = "tokencast", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter, normalize and tokenize a CSV column into a token file.
    Quantize(QuantizeArgs),
    /// Decode a token file back to a CSV column.
    Dequantize(DequantizeArgs),
    /// Forecast from a token file with a reference predictor.
    Forecast(ForecastArgs),
    /// Race a main and a draft predictor on the tail of a CSV series.
    Race(RaceArgs),
    /// Score every method on every dataset and write metrics files.
    Bench(BenchArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration (.json or .toml). Unset fields take defaults.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Butterworth order, overriding filter.order.
    #[arg(long)]
    order: Option<usize>,
    /// Cutoff frequency in Hz, overriding filter.cutoff_hz.
    #[arg(long)]
    cutoff_hz: Option<f64>,
    /// Sampling rate in Hz, overriding filter.sample_rate_hz.
    #[arg(long)]
    sample_rate_hz: Option<f64>,
    /// Quantization factor Q, overriding quant.quant_factor.
    #[arg(long)]
    quant_factor: Option<u32>,
    /// Quantization rounding, overriding quant.rounding.
    #[arg(long, value_enum)]
    rounding: Option<Rounding>,
}

#[derive(Args)]
struct SeriesArgs {
    /// Value column, overriding dataset.value_column.
    #[arg(long)]
    column: Option<String>,
    /// Timestamp column that every row must carry, overriding
    /// dataset.timestamp_column.
    #[arg(long)]
    timestamp_column: Option<String>,
}

#[derive(Args)]
struct QuantizeArgs {
    /// Input CSV with a header row.
    #[arg(long, short)]
    input: PathBuf,
    /// Output token file.
    #[arg(long, short)]
    output: PathBuf,
    /// Skip the anti-aliasing filter.
    #[arg(long)]
    no_filter: bool,
    /// Value column, overriding dataset.value_column.
    #[arg(long)]
    column: Option<String>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct DequantizeArgs {
    /// Input token file.
    #[arg(long, short)]
    input: PathBuf,
    /// Output CSV; stdout when omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Header of the value column written.
    #[arg(long, default_value = "value")]
    column: String,
}

#[derive(Args)]
struct ForecastArgs {
    /// Context token file. Required unless --serve is given.
    #[arg(
        long,
        short,
        required_unless_present = "serve",
        conflicts_with = "serve"
    )]
    input: Option<PathBuf>,
    /// Output CSV of decoded sample paths; stdout when omitted.
    #[arg(long, short, conflicts_with = "serve")]
    output: Option<PathBuf>,
    /// Read one JSON request line on stdin and stream token frames to
    /// stdout, one comma-separated line per step.
    #[arg(long)]
    serve: bool,
    /// Reference predictor.
    #[arg(long, value_enum, default_value_t = ModelArg::Ar)]
    model: ModelArg,
    /// AR order.
    #[arg(long, default_value_t = 3)]
    ar_order: usize,
    /// Seasonal-naive period.
    #[arg(long, default_value_t = 1)]
    period: usize,
    /// Disable Gaussian innovations on AR sample paths.
    #[arg(long)]
    no_innovations: bool,
    /// Simulated per-frame latency in milliseconds.
    #[arg(long, default_value_t = 0.0)]
    latency_ms: f64,
    /// Forecast horizon in steps [default: 64].
    #[arg(long, conflicts_with = "serve")]
    horizon: Option<usize>,
    /// Sample paths per step [default: 20].
    #[arg(long, conflicts_with = "serve")]
    num_samples: Option<usize>,
    /// RNG seed [default: 0].
    #[arg(long, conflicts_with = "serve")]
    seed: Option<u64>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModelArg {
    Persistence,
    SeasonalNaive,
    Ar,
}

#[derive(Args)]
struct RaceArgs {
    /// Input CSV; the last horizon values are held out as ground truth.
    #[arg(long, short)]
    input: PathBuf,
    /// Directory for race.json and forecast.csv. Falls back to
    /// TOKENCAST_OUT_DIR, then ./out.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Timing model.
    #[arg(long, value_enum, default_value_t = Clock::Wall)]
    clock: Clock,
    /// Tolerance, overriding race.gamma.
    #[arg(long)]
    gamma: Option<f64>,
    /// Forecast horizon, overriding dataset.horizon.
    #[arg(long)]
    horizon: Option<usize>,
    /// Context length, overriding dataset.context_length.
    #[arg(long)]
    context_length: Option<usize>,
    /// Main predictor as kind[:param][@latency_ms], e.g. ar:8@20,
    /// overriding predictors.main.
    #[arg(long, value_parser = PredictorSection::parse_spec)]
    main: Option<PredictorSection>,
    /// Draft predictor in the same form, e.g. ar:3@2, overriding
    /// predictors.draft.
    #[arg(long, value_parser = PredictorSection::parse_spec)]
    draft: Option<PredictorSection>,
    /// Main frames required before the check, overriding race.min_overlap.
    #[arg(long)]
    min_overlap: Option<usize>,
    /// Sample paths per step, overriding eval.num_samples.
    #[arg(long)]
    samples: Option<usize>,
    /// RNG seed, overriding eval.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Skip the anti-aliasing filter.
    #[arg(long)]
    no_filter: bool,
    #[command(flatten)]
    series: SeriesArgs,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// Dataset CSV files; each file's stem names the dataset.
    #[arg(long = "data", short, required = true, num_args = 1..)]
    data: Vec<PathBuf>,
    /// Output directory. Falls back to TOKENCAST_OUT_DIR, then ./out.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads. Falls back to TOKENCAST_THREADS, then the CPU count.
    #[arg(long)]
    workers: Option<usize>,
    /// Timing model. The virtual clock makes outputs reproducible.
    #[arg(long, value_enum, default_value_t = Clock::Virtual)]
    clock: Clock,
    /// Methods to run, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = Method::ALL)]
    methods: Vec<Method>,
    /// Baseline method for aggregates, overriding eval.baseline.
    #[arg(long, value_enum)]
    baseline: Option<Method>,
    #[command(flatten)]
    series: SeriesArgs,
    #[command(flatten)]
    config: ConfigArgs,
}

enum Failure {
    Input(String),
    Config(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Config(_) => 3,
            Failure::Runtime(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Config(m) | Failure::Runtime(m) => m,
        }
    }
}

fn input<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Input(e.to_string())
}

fn runtime<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Runtime(e.to_string())
}

fn load(args: &ConfigArgs, series: Option<&SeriesArgs>) -> Result<RunConfig, Failure> {
    let mut cfg = match &args.config {
        Some(p) => load_config(p).map_err(|e| Failure::Config(e.to_string()))?,
        None => RunConfig::default(),
    };
    if let Some(v) = args.order {
        cfg.filter.order = v;
    }
    if let Some(v) = args.cutoff_hz {
        cfg.filter.cutoff_hz = v;
    }
    if let Some(v) = args.sample_rate_hz {
        cfg.filter.sample_rate_hz = v;
    }
    if let Some(v) = args.quant_factor {
        cfg.quant.quant_factor = v;
    }
    if let Some(v) = args.rounding {
        cfg.quant.rounding = v;
    }
    if let Some(s) = series {
        if let Some(c) = &s.column {
            cfg.dataset.value_column = c.clone();
        }
        if s.timestamp_column.is_some() {
            cfg.dataset.timestamp_column = s.timestamp_column.clone();
        }
    }
    Ok(cfg)
}

fn validated(cfg: RunConfig) -> Result<RunConfig, Failure> {
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| input(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn quantize(args: QuantizeArgs) -> Result<(), Failure> {
    let mut cfg = load(&args.config, None)?;
    if let Some(c) = args.column {
        cfg.dataset.value_column = c;
    }
    let cfg = validated(cfg)?;
    let series = read_series(
        &args.input,
        &cfg.dataset.value_column,
        None,
        cfg.filter.sample_rate_hz,
    )
    .map_err(input)?;
    let seq = if args.no_filter {
        encode_unfiltered(&series.values, &cfg.quant_config())
    } else {
        encode(&series.values, &cfg.filter_spec(), &cfg.quant_config())
    }
    .map_err(input)?;
    let file =
        File::create(&args.output).map_err(|e| input(format!("{}: {e}", args.output.display())))?;
    tokfile::write(&seq, BufWriter::new(file)).map_err(runtime)?;
    log::info!("wrote {} tokens to {}", seq.len(), args.output.display());
    Ok(())
}

fn read_tokens(path: &Path) -> Result<TokenSequence, Failure> {
    let file = File::open(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    tokfile::read(io::BufReader::new(file)).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn dequantize(args: DequantizeArgs) -> Result<(), Failure> {
    let seq = read_tokens(&args.input)?;
    let mut w = csv::Writer::from_writer(open_output(args.output.as_deref())?);
    w.write_record([args.column.as_str()]).map_err(runtime)?;
    for v in seq.decode() {
        w.write_record([v.to_string()]).map_err(runtime)?;
    }
    w.flush().map_err(runtime)
}

fn forecast_section(args: &ForecastArgs) -> PredictorSection {
    PredictorSection {
        kind: match args.model {
            ModelArg::Persistence => PredictorKind::Persistence,
            ModelArg::SeasonalNaive => PredictorKind::SeasonalNaive,
            ModelArg::Ar => PredictorKind::Ar,
        },
        order: Some(args.ar_order),
        period: Some(args.period),
        innovations: !args.no_innovations,
        command: None,
        latency_ms: args.latency_ms,
        jitter_ms: 0.0,
    }
}

fn write_paths(w: impl Write, result: &ForecastResult, ctx: &TokenSequence) -> Result<(), Failure> {
    let paths = result.decode(ctx);
    let mut w = csv::Writer::from_writer(w);
    let mut header = vec!["step".to_string()];
    header.extend((0..paths.len()).map(|s| format!("sample_{s}")));
    w.write_record(&header).map_err(runtime)?;
    for step in 0..result.horizon() {
        let mut rec = vec![step.to_string()];
        rec.extend(paths.iter().map(|p| p[step].to_string()));
        w.write_record(&rec).map_err(runtime)?;
    }
    w.flush().map_err(runtime)
}

/// Prints each frame as it is published.
struct LineSink(std::sync::Mutex<io::Stdout>);

impl FrameSink for LineSink {
    fn publish(&self, _: usize, frame: &Frame, _: f64) {
        let mut out = self.0.lock().unwrap_or_else(|e| e.into_inner());
        let _ = writeln!(out, "{}", format_frame(frame));
        let _ = out.flush();
    }
}

fn forecast(args: ForecastArgs) -> Result<(), Failure> {
    let section = forecast_section(&args);
    let handle = section
        .build(&section.label(), Role::Main)
        .map_err(|e| Failure::Config(e.to_string()))?;
    if args.serve {
        let mut line = String::new();
        io::stdin().lock().read_line(&mut line).map_err(input)?;
        let wire: WireRequest = serde_json::from_str(&line).map_err(input)?;
        let config = tokencast_core::QuantizationConfig {
            quant_factor: wire.quant_factor,
            ..Default::default()
        };
        // only the tokens matter to the predictor
        let norm = NormalizationRecord::new(0.0, 1.0).map_err(input)?;
        let ctx = TokenSequence::new(wire.context, norm, config).map_err(input)?;
        let req = ForecastRequest::new(ctx, wire.horizon, wire.num_samples, wire.seed);
        let sink = LineSink(std::sync::Mutex::new(io::stdout()));
        tokencast::stream::predict_stream(&handle, &req, &sink).map_err(runtime)?;
        return Ok(());
    }
    let path = args.input.as_deref().expect("clap enforces --input");
    let ctx = read_tokens(path)?;
    let req = ForecastRequest::new(
        ctx,
        args.horizon.unwrap_or(64),
        args.num_samples.unwrap_or(20),
        args.seed.unwrap_or(0),
    );
    req.validate().map_err(|e| Failure::Config(e.to_string()))?;
    let result = tokencast::stream::predict_stream(&handle, &req, &tokencast::stream::NullSink)
        .map_err(runtime)?;
    write_paths(open_output(args.output.as_deref())?, &result, &req.context)
}

fn race(args: RaceArgs) -> Result<(), Failure> {
    let mut cfg = load(&args.config, Some(&args.series))?;
    if let Some(g) = args.gamma {
        cfg.race.gamma = g;
    }
    if let Some(h) = args.horizon {
        cfg.dataset.horizon = h;
    }
    if let Some(l) = args.context_length {
        cfg.dataset.context_length = l;
    }
    if let Some(m) = args.main {
        cfg.predictors.main = m;
    }
    if let Some(d) = args.draft {
        cfg.predictors.draft = d;
    }
    if args.min_overlap.is_some() {
        cfg.race.min_overlap = args.min_overlap;
    }
    if let Some(s) = args.samples {
        cfg.eval.num_samples = s;
    }
    if let Some(s) = args.seed {
        cfg.eval.seed = s;
    }
    let cfg = validated(cfg)?;
    let series = read_series(
        &args.input,
        &cfg.dataset.value_column,
        cfg.dataset.timestamp_column.as_deref(),
        cfg.filter.sample_rate_hz,
    )
    .map_err(input)?;
    let d = &cfg.dataset;
    if series.len() < d.context_length {
        return Err(input(format!(
            "{}: {} values, context_length is {}",
            args.input.display(),
            series.len(),
            d.context_length
        )));
    }
    let context = &series.values[series.len() - d.context_length..];
    let ctx = if args.no_filter {
        encode_unfiltered(context, &cfg.quant_config())
    } else {
        encode(context, &cfg.filter_spec(), &cfg.quant_config())
    }
    .map_err(input)?;
    let main = cfg
        .main_handle()
        .map_err(|e| Failure::Config(e.to_string()))?;
    let draft = cfg
        .draft_handle()
        .map_err(|e| Failure::Config(e.to_string()))?;
    let req = ForecastRequest::new(ctx, d.horizon, cfg.eval.num_samples, cfg.eval.seed);
    let outcome = run_race(&main, &draft, &req, &cfg.race_config(), args.clock).map_err(runtime)?;

    let dir = config::output_dir(args.out_dir);
    std::fs::create_dir_all(&dir).map_err(|e| input(format!("{}: {e}", dir.display())))?;
    let report = RaceReport::new(&outcome, &main, &draft).to_json();
    std::fs::write(dir.join("race.json"), format!("{report}\n"))
        .map_err(|e| input(format!("{}: {e}", dir.display())))?;
    let file = File::create(dir.join("forecast.csv"))
        .map_err(|e| input(format!("{}: {e}", dir.display())))?;
    write_paths(BufWriter::new(file), &outcome.forecast, &req.context)?;
    println!("{report}");
    Ok(())
}

fn bench(args: BenchArgs) -> Result<(), Failure> {
    let mut cfg = load(&args.config, Some(&args.series))?;
    if let Some(b) = args.baseline {
        cfg.eval.baseline = b.name().to_string();
    }
    let cfg = validated(cfg)?;
    let mut datasets = Vec::with_capacity(args.data.len());
    for path in &args.data {
        let series = read_series(
            path,
            &cfg.dataset.value_column,
            cfg.dataset.timestamp_column.as_deref(),
            cfg.filter.sample_rate_hz,
        )
        .map_err(input)?;
        let name = path.file_stem().map_or_else(
            || path.display().to_string(),
            |s| s.to_string_lossy().into_owned(),
        );
        datasets.push(BenchDataset { name, series });
    }
    let opts = BenchOptions {
        clock: args.clock,
        workers: config::worker_count(args.workers),
        methods: args.methods,
    };
    let report = run_bench(&cfg, &datasets, &opts).map_err(|e| match e {
        tokencast::bench::BenchError::Config(c) => Failure::Config(c.to_string()),
        tokencast::bench::BenchError::UnknownBaseline(_)
        | tokencast::bench::BenchError::NoMethods => Failure::Config(e.to_string()),
        other => runtime(other),
    })?;
    let dir = config::output_dir(args.out_dir);
    let files = write_outputs(&report, &dir).map_err(runtime)?;
    for f in files {
        println!("{}", f.display());
    }
    for fail in &report.failures {
        eprintln!("failed: {} / {}: {}", fail.dataset, fail.method, fail.error);
    }
    if report.failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(format!(
            "{} of {} runs failed",
            report.failures.len(),
            report.failures.len() + report.rows.len()
        )))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Quantize(a) => quantize(a),
        Command::Dequantize(a) => dequantize(a),
        Command::Forecast(a) => forecast(a),
        Command::Race(a) => race(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("tokencast: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
