mod output;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::warn;
use rayon::prelude::*;

use rrcif::evaluation::{benchmark, sweep, threshold_grid, SubjectData};
use rrcif::signal_io::{load_dataset, read_record, read_record_json, save_record, save_reference, synthesize, ModDepths, RecordFormat};
use rrcif::spectral::{estimate_rr, fit_power_law, WindowOutcome, DEFAULT_THRESHOLD};
use rrcif::{Method, Pipeline, PpgRecord, RivKind, SynthSpec};

const EXIT_DATA: u8 = 2;
const EXIT_USAGE: u8 = 64;

/// Respiratory rate from PPG by covariance intersection fusion.
#[derive(Debug, Parser)]
#[command(name = "rrcif", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-window fused rates for one record
    Estimate(EstimateArgs),
    /// Score every method on a dataset directory
    Benchmark(BenchmarkArgs),
    /// CIF threshold sweep over a dataset directory
    Sweep(SweepArgs),
    /// Write a synthetic record and its reference
    Synth(SynthArgs),
}

fn parse_t(s: &str) -> Result<f64, String> {
    let t: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&t) {
        Ok(t)
    } else {
        Err(format!("{t} is outside [0, 1]"))
    }
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Record file (.csv with header `t,ppg`, or .json)
    input: PathBuf,
    #[arg(long, default_value = "cif")]
    method: Method,
    /// Noise index threshold
    #[arg(long, default_value_t = DEFAULT_THRESHOLD, value_parser = parse_t)]
    t: f64,
    /// Output CSV (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write detected beats to this CSV
    #[arg(long, value_name = "FILE")]
    dump_beats: Option<PathBuf>,
    /// Write the five variation series into this directory
    #[arg(long, value_name = "DIR")]
    dump_riv: Option<PathBuf>,
    /// Write one window spectrum to this CSV
    #[arg(long, value_name = "FILE")]
    dump_spectrum: Option<PathBuf>,
    /// Window index for --dump-spectrum
    #[arg(long, default_value_t = 0, requires = "dump_spectrum")]
    window: usize,
    /// Variation for --dump-spectrum
    #[arg(long, default_value = "riiv", requires = "dump_spectrum")]
    kind: RivKind,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    /// Directory of `<id>.ppg.csv` + `<id>.rr.csv` or `<id>.json`
    dataset: PathBuf,
    /// Methods to compare
    #[arg(long = "method", value_delimiter = ',', default_values = ["cif", "sf3", "sf5"])]
    methods: Vec<Method>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD, value_parser = parse_t)]
    t: f64,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    dataset: PathBuf,
    #[arg(long, default_value_t = 0.0, value_parser = parse_t)]
    t_min: f64,
    #[arg(long, default_value_t = 0.3, value_parser = parse_t)]
    t_max: f64,
    #[arg(long, default_value_t = 0.01)]
    t_step: f64,
    /// Output CSV (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Respiratory rate (breaths/min)
    #[arg(long)]
    rr: f64,
    /// Heart rate (beats/min)
    #[arg(long)]
    hr: f64,
    #[arg(long, default_value_t = 480.0)]
    duration: f64,
    #[arg(long, default_value_t = 100.0)]
    fs: f64,
    /// Modulation depth for all five variations
    #[arg(long, default_value_t = 0.1)]
    depth: f64,
    #[arg(long)]
    depth_intensity: Option<f64>,
    #[arg(long)]
    depth_amplitude: Option<f64>,
    #[arg(long)]
    depth_frequency: Option<f64>,
    #[arg(long)]
    depth_width: Option<f64>,
    #[arg(long)]
    depth_slope: Option<f64>,
    /// Noise SD relative to pulse amplitude
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Record path; `.json` embeds the reference, `.csv` gets a sibling `.rr.csv`
    #[arg(long)]
    out: PathBuf,
    /// Reference CSV path for CSV output
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

type CmdResult = Result<(), Failure>;

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn with_output(out: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            let mut w = create(path)?;
            f(&mut w).and_then(|_| w.flush()).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            match f(&mut lock).and_then(|_| lock.flush()) {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                r => r.context("writing to stdout"),
            }
        }
    }
}

fn load_record(path: &Path) -> anyhow::Result<PpgRecord> {
    let record = match RecordFormat::from_path(path) {
        Some(RecordFormat::Json) => read_record_json(path).map(|(r, _)| r),
        _ => read_record(path, RecordFormat::Csv),
    };
    record.with_context(|| format!("reading {}", path.display()))
}

fn cmd_estimate(args: &EstimateArgs) -> CmdResult {
    let record = load_record(&args.input)?;
    let analysis = Pipeline::new()
        .analyze(&record)
        .with_context(|| format!("analysing {}", args.input.display()))?;
    let fused = analysis.fuse(args.method, args.t).map_err(anyhow::Error::from)?;
    let header = output::header(&format!("method={} t={}", args.method, args.t));
    with_output(args.out.as_deref(), |w| output::write_estimates(w, &header, &analysis.grid, &fused))?;

    if let Some(path) = &args.dump_beats {
        with_output(Some(path), |w| output::write_beats(w, &header, &analysis.beats))?;
    }
    if let Some(dir) = &args.dump_riv {
        let name = args.input.file_name().and_then(|s| s.to_str()).unwrap_or(record.id());
        let stem = name.split('.').next().unwrap_or(name);
        for series in &analysis.rivs {
            let path = dir.join(format!("{stem}.{}.csv", series.kind.name().to_ascii_lowercase()));
            with_output(Some(&path), |w| output::write_riv(w, &header, series))?;
        }
    }
    if let Some(path) = &args.dump_spectrum {
        let Some(&window) = analysis.grid.windows.get(args.window) else {
            return Err(Failure::Usage(format!(
                "window {} out of range (record has {})",
                args.window,
                analysis.grid.len()
            )));
        };
        let series = &analysis.rivs[args.kind.index()];
        match Pipeline::new().analyzer().window_spectrum(series, window).map_err(anyhow::Error::from)? {
            WindowOutcome::Spectrum(s) => {
                let s = fit_power_law(&s);
                let est = estimate_rr(&s);
                let note = format!(
                    "method={} t={} window={} kind={} rr={} ni={}",
                    args.method,
                    args.t,
                    args.window,
                    args.kind,
                    est.rr.map_or_else(String::new, |r| r.to_string()),
                    est.ni
                );
                with_output(Some(path), |w| output::write_spectrum(w, &output::header(&note), &s))?;
            }
            WindowOutcome::ArtifactSkip => {
                return Err(Failure::Data(anyhow::anyhow!(
                    "window {} of {} is artifact-skipped; no spectrum",
                    args.window,
                    args.kind
                )))
            }
        }
    }
    Ok(())
}

/// Loads and analyses every subject; unreadable or unanalysable subjects are
/// returned as `(id, reason)`.
fn load_subjects(dir: &Path) -> anyhow::Result<(Vec<SubjectData>, Vec<(String, String)>)> {
    let ds = load_dataset(dir).with_context(|| format!("reading dataset {}", dir.display()))?;
    let pipeline = Pipeline::new();
    let analysed: Vec<Result<SubjectData, (String, String)>> = ds
        .subjects
        .par_iter()
        .map(|s| match pipeline.analyze(&s.record) {
            Ok(a) => Ok(SubjectData {
                id: s.id.clone(),
                grid: a.grid,
                estimates: a.estimates,
                reference: s.reference.clone(),
            }),
            Err(e) => Err((s.id.clone(), e.to_string())),
        })
        .collect();
    let mut skipped = ds.skipped;
    let mut subjects = Vec::new();
    for r in analysed {
        match r {
            Ok(s) => subjects.push(s),
            Err(skip) => skipped.push(skip),
        }
    }
    skipped.sort();
    for (id, reason) in &skipped {
        warn!("skipping {id}: {reason}");
    }
    if subjects.is_empty() {
        bail!("no usable subjects in {}", dir.display());
    }
    Ok((subjects, skipped))
}

fn cmd_benchmark(args: &BenchmarkArgs) -> CmdResult {
    let (subjects, skipped) = load_subjects(&args.dataset)?;
    let mut report = benchmark(&subjects, &args.methods, args.t).map_err(anyhow::Error::from)?;
    report.skipped = skipped;
    let names: Vec<&str> = args.methods.iter().map(|m| m.name()).collect();
    let header = output::header(&format!("method={} t={}", names.join(","), args.t));
    with_output(Some(&args.out.join("subjects.csv")), |w| output::write_subjects(w, &header, &report.results))?;
    let json = output::report_json(&report);
    with_output(Some(&args.out.join("benchmark.json")), |w| output::write_json(w, &json))?;
    let agreement = serde_json::to_value(report.agreement).map_err(anyhow::Error::from)?;
    with_output(Some(&args.out.join("agreement.json")), |w| output::write_json(w, &agreement))?;
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> CmdResult {
    if args.t_min > args.t_max {
        return Err(Failure::Usage(format!("--t-min {} exceeds --t-max {}", args.t_min, args.t_max)));
    }
    if !(args.t_step > 0.0) {
        return Err(Failure::Usage("--t-step must be positive".into()));
    }
    let grid = threshold_grid(args.t_min, args.t_max, args.t_step).map_err(|e| Failure::Usage(e.to_string()))?;
    let (subjects, _) = load_subjects(&args.dataset)?;
    let rows = sweep(&subjects, &grid).map_err(anyhow::Error::from)?;
    let header = output::header(&format!(
        "method=cif t={}..{} step={}",
        args.t_min, args.t_max, args.t_step
    ));
    with_output(args.out.as_deref(), |w| output::write_sweep(w, &header, &rows))?;
    Ok(())
}

fn reference_path(out: &Path) -> PathBuf {
    let name = out.file_name().and_then(|s| s.to_str()).unwrap_or("record.csv");
    let stem = name.split('.').next().unwrap_or(name);
    out.with_file_name(format!("{stem}.rr.csv"))
}

fn cmd_synth(args: &SynthArgs) -> CmdResult {
    let mut spec = SynthSpec::new(args.rr, args.hr, args.duration, args.fs);
    let d = ModDepths::uniform(args.depth);
    spec.mod_depths = ModDepths {
        intensity: args.depth_intensity.unwrap_or(d.intensity),
        amplitude: args.depth_amplitude.unwrap_or(d.amplitude),
        frequency: args.depth_frequency.unwrap_or(d.frequency),
        width: args.depth_width.unwrap_or(d.width),
        slope: args.depth_slope.unwrap_or(d.slope),
    };
    spec.noise_sd = args.noise;
    spec.seed = args.seed;
    let (record, reference) = synthesize(&spec).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(Failure::Data)?;
    }
    let note = format!(
        "rrcif {} synth rr={} hr={} seed={}",
        rrcif::VERSION,
        args.rr,
        args.hr,
        args.seed
    );
    match RecordFormat::from_path(&args.out) {
        Some(RecordFormat::Json) => {
            let w = create(&args.out)?;
            rrcif::signal_io::write_record_json(w, &record, Some(&reference))
                .with_context(|| format!("writing {}", args.out.display()))?;
        }
        _ => {
            save_record(&args.out, &record, Some(&note)).map_err(anyhow::Error::from)?;
            let ref_path = args.reference.clone().unwrap_or_else(|| reference_path(&args.out));
            save_reference(&ref_path, &reference, Some(&note)).map_err(anyhow::Error::from)?;
        }
    }
    Ok(())
}

/// Error chain joined by `: `, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn init_threads() {
    let threads = std::env::var("RRCIF_THREADS").ok().and_then(|v| v.parse::<usize>().ok());
    if let Some(n) = threads.filter(|&n| n > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            warn!("could not size worker pool: {e}");
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    init_threads();
    let result = match &cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(EXIT_DATA)
        }
    }
}
