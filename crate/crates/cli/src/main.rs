use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use g2scan::analysis::{detect_peaks, detect_peaks_in, PeakOptions};
use g2scan::analytic::{evaluate_surface, AnalyticOptions};
use g2scan::config::{parse_length, Setup};
use g2scan::frames::{correlate_frames_with, synthesize_frames, FrameStack, NoiseModel};
use g2scan::geometry::{DetectorGrid, SourceGrid};
use g2scan::montecarlo::{estimate_g2, EnsembleConfig};
use g2scan::report::{reproduce_paper, ReproduceOptions};
use g2scan::scanline::{
    analytic_cross_section, extract_cross_section, predict_fringe_spacing, CrossSection, ScanLine,
};
use g2scan::{CorrelationSurface, Normalization, SourceKind};

const DEFAULT_SEED: u64 = 2024;

#[derive(Parser, Debug)]
#[command(
    name = "g2scan",
    version,
    about = "Second-order correlation behind a double slit"
)]
struct Cli {
    /// Config file, or `paper` for the preset.
    #[arg(long, global = true, default_value = "paper")]
    config: String,
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads, 0 for all cores.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form correlation surface.
    Analytic(AnalyticArgs),
    /// Monte-Carlo estimate of the thermal surface.
    Montecarlo(MonteCarloArgs),
    /// Cross-section along a scan line, with predicted and measured spacing.
    Scan(ScanArgs),
    /// Fringe analysis of a CSV section.
    Peaks(PeaksArgs),
    /// Synthetic detector frames.
    #[command(subcommand)]
    Frames(FramesCommand),
    /// Runs every preset case and prints the report table.
    ReproducePaper(ReproduceArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SourceArg {
    Thermal,
    Entangled,
    CoherentReference,
}

impl From<SourceArg> for SourceKind {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Thermal => SourceKind::Thermal,
            SourceArg::Entangled => SourceKind::Entangled,
            SourceArg::CoherentReference => SourceKind::CoherentReference,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum NormArg {
    Raw,
    BackgroundSubtracted,
    UnitPeak,
}

impl From<NormArg> for Normalization {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::Raw => Normalization::Raw,
            NormArg::BackgroundSubtracted => Normalization::BackgroundSubtracted,
            NormArg::UnitPeak => Normalization::UnitPeak,
        }
    }
}

#[derive(Args, Debug, Default, Clone)]
struct GridArgs {
    /// Detector pixel count.
    #[arg(long)]
    pixels: Option<usize>,
    /// Detector pixel pitch, e.g. `4.65um`.
    #[arg(long)]
    pitch: Option<String>,
    /// Source grid sample count.
    #[arg(long)]
    source_samples: Option<usize>,
    /// Source grid half extent, e.g. `80um`.
    #[arg(long)]
    source_half_extent: Option<String>,
}

#[derive(Args, Debug)]
struct AnalyticArgs {
    #[arg(long, value_enum, default_value = "thermal")]
    source: SourceArg,
    #[arg(long, value_enum, default_value = "unit-peak")]
    normalization: NormArg,
    /// Include the single-slit envelope in the entangled model.
    #[arg(long)]
    envelope: bool,
    /// Also write `x1,x2,value` CSV.
    #[arg(long)]
    csv: bool,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value = "analytic.txt")]
    name: String,
}

#[derive(Args, Debug)]
struct MonteCarloArgs {
    #[arg(long, default_value_t = 20_000)]
    realizations: usize,
    #[arg(long, value_enum, default_value = "raw")]
    normalization: NormArg,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value = "montecarlo.txt")]
    name: String,
}

#[derive(Args, Debug)]
struct ScanArgs {
    /// Surface in matrix text format; omit with `--analytic`.
    surface: Option<PathBuf>,
    #[arg(long, conflicts_with = "surface")]
    analytic: bool,
    #[arg(long, value_enum, default_value = "thermal")]
    source: SourceArg,
    #[arg(long, value_parser = ["a", "b", "c", "d"], conflicts_with = "alpha")]
    preset: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    /// Offset of `x2`, e.g. `0.2mm`.
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    beta: String,
    #[arg(long, allow_hyphen_values = true)]
    x_min: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    x_max: Option<String>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long, default_value_t = g2scan::analysis::DEFAULT_MIN_PROMINENCE)]
    prominence: f64,
    #[arg(long, default_value = "section.csv")]
    name: String,
}

#[derive(Args, Debug)]
struct PeaksArgs {
    /// CSV with `x,value` columns.
    input: PathBuf,
    #[arg(long, default_value_t = g2scan::analysis::DEFAULT_MIN_PROMINENCE)]
    prominence: f64,
    /// Full analysis window, e.g. `2mm`.
    #[arg(long)]
    window: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    background: Option<f64>,
    /// Classical spacing for the resolution factor, e.g. `0.876mm`.
    #[arg(long)]
    classical: Option<String>,
}

#[derive(Subcommand, Debug)]
enum FramesCommand {
    /// Writes two frame stacks sharing one speckle field per frame.
    Synth(SynthArgs),
    /// Correlates two stored stacks into a surface.
    Correlate(CorrelateArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 2_000)]
    realizations: usize,
    /// `none` or `poisson:<mean photons per pixel>`.
    #[arg(long, default_value = "none")]
    noise: String,
    #[arg(long)]
    csv: bool,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args, Debug)]
struct CorrelateArgs {
    stack1: PathBuf,
    stack2: PathBuf,
    #[arg(long, default_value = "frames_g2.txt")]
    name: String,
}

#[derive(Args, Debug)]
struct ReproduceArgs {
    #[arg(long, default_value_t = g2scan::report::MC_REALIZATIONS)]
    realizations: usize,
    /// Also write `report.txt` and `report.jsonl` to the output directory.
    #[arg(long)]
    save: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Analytic(a) => analytic(cli, a),
        Command::Montecarlo(a) => montecarlo(cli, a),
        Command::Scan(a) => scan(cli, a),
        Command::Peaks(a) => peaks(a),
        Command::Frames(FramesCommand::Synth(a)) => frames_synth(cli, a),
        Command::Frames(FramesCommand::Correlate(a)) => frames_correlate(cli, a),
        Command::ReproducePaper(a) => reproduce(cli, a),
    }
    .map(|ok| {
        if ok {
            ExitCode::SUCCESS
        } else {
            ExitCode::FAILURE
        }
    })
}

fn load_setup(cli: &Cli, grid: &GridArgs) -> Result<Setup> {
    let mut setup = Setup::load(&cli.config)?;
    let det = *setup.optics.detector();
    let detector = DetectorGrid {
        pixel_pitch: grid
            .pitch
            .as_deref()
            .map(parse_length)
            .transpose()?
            .unwrap_or(det.pixel_pitch),
        n_pixels: grid.pixels.unwrap_or(det.n_pixels),
    };
    let src = *setup.optics.source();
    let source = SourceGrid {
        half_extent: grid
            .source_half_extent
            .as_deref()
            .map(parse_length)
            .transpose()?
            .unwrap_or(src.half_extent),
        n_samples: grid.source_samples.unwrap_or(src.n_samples),
    };
    setup.optics = setup.optics.with_source(source)?.with_detector(detector)?;
    Ok(setup)
}

fn create(cli: &Cli, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let path = cli.out.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok((path, BufWriter::new(file)))
}

fn analytic(cli: &Cli, args: &AnalyticArgs) -> Result<bool> {
    let setup = load_setup(cli, &args.grid)?;
    let options = AnalyticOptions {
        entangled_envelope: args.envelope,
        ..Default::default()
    };
    let surface = evaluate_surface(
        &setup.optics,
        &setup.aperture,
        args.source.into(),
        args.normalization.into(),
        &options,
    )?;
    let (path, mut w) = create(cli, &args.name)?;
    surface.write_matrix(&mut w)?;
    w.flush()?;
    println!("{}", path.display());
    if args.csv {
        let (path, mut w) = create(cli, &format!("{}.csv", stem(&args.name)))?;
        surface.write_csv(&mut w)?;
        w.flush()?;
        println!("{}", path.display());
    }
    Ok(true)
}

fn stem(name: &str) -> &str {
    Path::new(name)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(name)
}

fn montecarlo(cli: &Cli, args: &MonteCarloArgs) -> Result<bool> {
    let setup = load_setup(cli, &args.grid)?;
    let ensemble = EnsembleConfig::new(args.realizations, cli.seed).with_workers(cli.workers);
    let start = Instant::now();
    let estimate = estimate_g2(&setup.aperture, &setup.optics, &ensemble)?;
    let wall = start.elapsed().as_secs_f64();
    let surface = match Normalization::from(args.normalization) {
        Normalization::Raw => estimate.correlation.clone(),
        Normalization::BackgroundSubtracted => estimate.correlation.background_subtracted(),
        _ => estimate.correlation.background_subtracted().to_unit_peak(),
    };
    let (path, mut w) = create(cli, &args.name)?;
    surface.write_matrix(&mut w)?;
    w.flush()?;
    let meta = json!({
        "seed": cli.seed,
        "n_realizations": estimate.n_used,
        "workers": cli.workers,
        "wall_time_s": wall,
        "config_hash": setup.digest(),
        "normalization": surface.normalization.tag(),
        "surface": path.file_name().and_then(|s| s.to_str()),
    });
    let (meta_path, mut w) = create(cli, &format!("{}.json", stem(&args.name)))?;
    writeln!(w, "{}", serde_json::to_string_pretty(&meta)?)?;
    w.flush()?;
    println!("{}", path.display());
    println!("{}", meta_path.display());
    Ok(true)
}

fn scan(cli: &Cli, args: &ScanArgs) -> Result<bool> {
    let setup = load_setup(cli, &GridArgs::default())?;
    let kind: SourceKind = args.source.into();
    let surface = match (&args.surface, args.analytic) {
        (Some(path), _) => {
            let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            Some(CorrelationSurface::read_matrix(BufReader::new(f))?)
        }
        (None, true) => None,
        (None, false) => bail!("give a surface file or --analytic"),
    };
    let kind = surface.as_ref().map_or(kind, |s| s.source_kind);
    let half = setup.optics.detector().half_extent();
    let (default_min, default_max, default_n) = match &surface {
        Some(s) => (s.axis_x1.min(), s.axis_x1.max(), s.axis_x1.len),
        None => (-half, half, setup.optics.detector().n_pixels),
    };
    let x_min = args
        .x_min
        .as_deref()
        .map(parse_length)
        .transpose()?
        .unwrap_or(default_min);
    let x_max = args
        .x_max
        .as_deref()
        .map(parse_length)
        .transpose()?
        .unwrap_or(default_max);
    let n = args.points.unwrap_or(default_n);
    let beta = parse_length(&args.beta)?;
    let line = match (&args.preset, args.alpha) {
        (Some(p), _) => {
            let name = p.chars().next().expect("non-empty preset");
            let alpha = ScanLine::preset_alpha(kind, name)?;
            ScanLine::affine(alpha, beta, x_min, x_max, n)?.with_label(p.clone())
        }
        (None, Some(alpha)) => ScanLine::affine(alpha, beta, x_min, x_max, n)?,
        (None, None) => bail!("give --preset or --alpha"),
    };
    let section = match &surface {
        Some(s) => extract_cross_section(s, &line)?,
        None => analytic_cross_section(
            &setup.optics,
            &setup.aperture,
            kind,
            &line,
            &AnalyticOptions::default(),
        )?,
    };
    let (path, mut w) = create(cli, &args.name)?;
    section.write_csv(&mut w)?;
    w.flush()?;

    let predicted = predict_fringe_spacing(&line, &setup.optics, &setup.aperture, kind)?;
    let mut options = match predicted.spacing() {
        Some(p) => PeakOptions::for_period(p),
        None => PeakOptions::default(),
    };
    options.min_prominence = args.prominence;
    options.classical_spacing =
        g2scan::scanline::classical_baseline(&setup.optics, &setup.aperture).ok();
    let measured = measure(&section, &options);
    let record = json!({
        "source": kind.tag(),
        "line": line,
        "section": path.display().to_string(),
        "points": section.len(),
        "excluded": section.excluded,
        "predicted": predicted,
        "measured": measured,
    });
    println!("{record}");
    Ok(true)
}

fn measure(section: &CrossSection, options: &PeakOptions) -> serde_json::Value {
    match detect_peaks(section, options) {
        Ok(r) => serde_json::to_value(r).expect("report serializes"),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

fn peaks(args: &PeaksArgs) -> Result<bool> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(&args.input)
        .with_context(|| format!("opening {}", args.input.display()))?;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() < 2 {
            bail!("row {} has {} columns, expected x,value", i + 2, rec.len());
        }
        x.push(
            rec[0]
                .parse::<f64>()
                .with_context(|| format!("row {}", i + 2))?,
        );
        y.push(
            rec[1]
                .parse::<f64>()
                .with_context(|| format!("row {}", i + 2))?,
        );
    }
    let options = PeakOptions {
        min_prominence: args.prominence,
        window: args.window.as_deref().map(parse_length).transpose()?,
        background: args.background,
        classical_spacing: args.classical.as_deref().map(parse_length).transpose()?,
    };
    match detect_peaks_in(&x, &y, &options) {
        Ok(r) => {
            println!("{}", serde_json::to_string(&r)?);
            Ok(true)
        }
        Err(g2scan::Error::TooFewPeaks { peaks }) => {
            println!(
                "{}",
                json!({ "error": "too few peaks", "peak_positions": peaks })
            );
            Ok(false)
        }
        Err(e) => Err(e.into()),
    }
}

fn parse_noise(text: &str) -> Result<NoiseModel> {
    if text == "none" {
        return Ok(NoiseModel::None);
    }
    match text.split_once(':') {
        Some(("poisson", m)) => Ok(NoiseModel::Poisson {
            mean_photons_per_pixel: m
                .parse()
                .with_context(|| format!("bad photon number {m:?}"))?,
        }),
        _ => bail!("noise must be `none` or `poisson:<mean>`, got {text:?}"),
    }
}

fn frames_synth(cli: &Cli, args: &SynthArgs) -> Result<bool> {
    let setup = load_setup(cli, &args.grid)?;
    let ensemble = EnsembleConfig::new(args.realizations, cli.seed).with_workers(cli.workers);
    let (s1, s2) = synthesize_frames(
        &setup.aperture,
        &setup.optics,
        &ensemble,
        parse_noise(&args.noise)?,
    )?;
    for (name, stack) in [("frames1", &s1), ("frames2", &s2)] {
        let (path, mut w) = create(cli, &format!("{name}.g2f"))?;
        stack.write_binary(&mut w)?;
        w.flush()?;
        println!("{}", path.display());
        if args.csv {
            let (path, mut w) = create(cli, &format!("{name}.csv"))?;
            stack.write_csv(&mut w)?;
            w.flush()?;
            println!("{}", path.display());
        }
    }
    Ok(true)
}

fn read_stack(path: &Path) -> Result<FrameStack> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(FrameStack::read_binary(BufReader::new(f))?)
}

fn frames_correlate(cli: &Cli, args: &CorrelateArgs) -> Result<bool> {
    let s1 = read_stack(&args.stack1)?;
    let s2 = read_stack(&args.stack2)?;
    let surface = correlate_frames_with(&s1, &s2, cli.workers)?;
    let (path, mut w) = create(cli, &args.name)?;
    surface.write_matrix(&mut w)?;
    w.flush()?;
    println!("{}", path.display());
    Ok(true)
}

fn reproduce(cli: &Cli, args: &ReproduceArgs) -> Result<bool> {
    let options = ReproduceOptions {
        seed: cli.seed,
        workers: cli.workers,
        mc_realizations: args.realizations,
    };
    let report = reproduce_paper(&options)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    report.write_table(&mut out)?;
    writeln!(out)?;
    report.write_json_lines(&mut out)?;
    if args.save {
        let (_, mut w) = create(cli, "report.txt")?;
        report.write_table(&mut w)?;
        w.flush()?;
        let (_, mut w) = create(cli, "report.jsonl")?;
        report.write_json_lines(&mut w)?;
        w.flush()?;
    }
    let failed: Vec<&str> = report.failures().map(|r| r.label.as_str()).collect();
    if !failed.is_empty() {
        eprintln!(
            "{} case(s) outside tolerance: {}",
            failed.len(),
            failed.join(", ")
        );
    }
    Ok(report.all_passed())
}
