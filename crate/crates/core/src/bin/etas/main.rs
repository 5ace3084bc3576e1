//! `etas` command-line front end.

mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{BackgroundFile, RunConfig};
use etas_core::catalog::{fetch_comcat, parse_catalog, write_catalog, ColumnMap, ComcatQuery, FetchOptions, UreqTransport};
use etas_core::decluster::{classify, isdm_fit, sample_realization, MagnitudeKind, OptimizerKind};
use etas_core::diagnostics::diagnose;
use etas_core::error::EtasError;
use etas_core::intensity::{clustering_coefficient, total_spatial_intensity, BandwidthConfig};
use etas_core::likelihood::Variant;
use etas_core::model::{EtasParams, MagnitudeModel, ParamName};
use etas_core::optimize::{grid_search_omega, ScaleFamily};
use etas_core::output::{write_json, write_outer_trace_csv, FitReport};
use etas_core::simulate::{simulate, simulate_thinning, SimConfig};
use etas_core::timescale::{apply_scale, build_usage_series, TimeScale, UsageMode};
use etas_core::{Catalog, Event, FitResult, Region};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Etas(#[from] EtasError),
    #[error("{0}")]
    NotConverged(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::NotConverged(_) => 3,
            CliError::Etas(e) => match e {
                EtasError::Io(_) | EtasError::Http { .. } | EtasError::Transport(_) | EtasError::Csv(_) => 2,
                EtasError::Optim(_) | EtasError::ZeroIntensity { .. } => 3,
                _ => 1,
            },
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Etas(e.into())
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "etas", version, about = "Time-scaled spatio-temporal ETAS modelling")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download a catalog from ComCat.
    Fetch(FetchArgs),
    /// Fit the model and write fit.json with its artifacts.
    Fit(FitArgs),
    /// Fit, then label events as background or triggered.
    Decluster(DeclusterArgs),
    /// Residual diagnostics for a fitted model.
    Diagnose(DiagnoseArgs),
    /// Simulate a synthetic catalog with genealogy.
    Simulate(SimulateArgs),
    /// Apply a time scale to a catalog.
    Scale(ScaleArgs),
}

#[derive(Args)]
struct FetchArgs {
    /// lon_min,lon_max,lat_min,lat_max
    #[arg(long)]
    region: String,
    /// YYYY-MM-DD
    #[arg(long)]
    start: String,
    /// YYYY-MM-DD
    #[arg(long)]
    end: String,
    #[arg(long)]
    minmag: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = ".etas-cache")]
    cache_dir: PathBuf,
    /// Refresh cached responses older than this many hours.
    #[arg(long)]
    max_age_hours: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Isdm,
    Ground,
}

#[derive(Clone, Copy, ValueEnum)]
enum MagArg {
    Exp,
    Gamma,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Dfp,
    Nm,
}

#[derive(Args, Clone)]
struct FitArgs {
    /// JSON run file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Catalog CSV (ComCat or the canonical format).
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// lon_min,lon_max,lat_min,lat_max
    #[arg(long)]
    region: Option<String>,
    #[arg(long)]
    m0: Option<f64>,
    #[arg(long)]
    t_start: Option<f64>,
    #[arg(long)]
    duration: Option<f64>,
    /// ideal | calib:W | ph | log | power:W
    #[arg(long)]
    scale: Option<String>,
    /// Comma-separated omega values searched for calib/power scales.
    #[arg(long, value_delimiter = ',')]
    omega_grid: Option<Vec<f64>>,
    /// Catalog with minor events for the proportional-hazards scale.
    #[arg(long)]
    minor_catalog: Option<PathBuf>,
    /// Events above this magnitude are major (default: m0).
    #[arg(long)]
    major_threshold: Option<f64>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    #[arg(long, value_enum)]
    mag: Option<MagArg>,
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerArg>,
    /// Comma-separated parameters held at their initial values.
    #[arg(long, value_delimiter = ',')]
    fix: Option<Vec<String>>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct DeclusterArgs {
    #[command(flatten)]
    fit: FitArgs,
    /// Probability needed for a background or triggered label.
    #[arg(long)]
    threshold: Option<f64>,
    /// Also draw one random declustering with this seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Directory written by `etas fit`.
    #[arg(long)]
    fit_dir: PathBuf,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Output directory (default: the fit directory).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimMethod {
    Branching,
    Thinning,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    mu: f64,
    #[arg(long)]
    a: f64,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    c: f64,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    d: f64,
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    q: f64,
    /// Exponential magnitude decay rate.
    #[arg(long)]
    beta: f64,
    /// lon_min,lon_max,lat_min,lat_max
    #[arg(long)]
    region: String,
    #[arg(long)]
    duration: f64,
    #[arg(long, default_value_t = 0.0)]
    t_start: f64,
    #[arg(long)]
    m0: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1_000_000)]
    max_events: usize,
    #[arg(long, value_enum, default_value_t = SimMethod::Branching)]
    method: SimMethod,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ScaleArgs {
    #[arg(long)]
    catalog: PathBuf,
    /// ideal | calib:W | ph | log | power:W
    #[arg(long)]
    scale: String,
    #[arg(long)]
    minor_catalog: Option<PathBuf>,
    #[arg(long)]
    major_threshold: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Fetch(a) => cmd_fetch(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Decluster(a) => cmd_decluster(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Scale(a) => cmd_scale(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn parse_region(s: &str) -> CliResult<Region> {
    s.parse::<Region>().map_err(|e| CliError::Usage(e.to_string()))
}

fn parse_date(s: &str) -> CliResult<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| CliError::Usage(format!("date '{s}': {e}")))
}

fn read_catalog(path: &Path) -> CliResult<Catalog> {
    let file = File::open(path).map_err(|e| EtasError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let outcome = parse_catalog(file, &ColumnMap::default())?;
    if outcome.dropped_missing + outcome.duplicates > 0 {
        log::warn!(
            "{}: dropped {} rows with missing fields and {} duplicates",
            path.display(),
            outcome.dropped_missing,
            outcome.duplicates
        );
    }
    Ok(outcome.catalog)
}

fn cmd_fetch(a: FetchArgs) -> CliResult<()> {
    let query = ComcatQuery::new(parse_region(&a.region)?, parse_date(&a.start)?, parse_date(&a.end)?, a.minmag)?;
    let opts = FetchOptions {
        cache_dir: a.cache_dir,
        max_age: a.max_age_hours.map(|h| std::time::Duration::from_secs(h * 3600)),
    };
    let fetched = fetch_comcat(&query, &opts, &UreqTransport)?;
    if let Some(n) = &fetched.notice {
        eprintln!("notice: {n}");
    }
    let outcome = parse_catalog(fetched.body.as_bytes(), &ColumnMap::default())?;
    let mut out = create(&a.out)?;
    write_catalog(&outcome.catalog, &mut out)?;
    out.flush()?;
    println!(
        "{} events from {:?} written to {}",
        outcome.catalog.len(),
        fetched.source,
        a.out.display()
    );
    Ok(())
}

/// Shifts `minor` onto `cat`'s time origin so both share one axis.
fn align_minor(minor: Catalog, cat: &Catalog) -> CliResult<Catalog> {
    let offset = match (minor.origin(), cat.origin()) {
        (Some(m), Some(c)) => (m - c).num_milliseconds() as f64 / 86_400e3,
        _ => 0.0,
    };
    let events: Vec<Event> = minor
        .events()
        .iter()
        .map(|e| Event::new(e.t + offset, e.lon, e.lat, e.depth, e.mag))
        .filter(|e| e.t >= 0.0)
        .collect();
    let end = events.iter().map(|e| e.t).fold(0.0, f64::max) + 1.0;
    let m0 = events.iter().map(|e| e.mag).fold(f64::INFINITY, f64::min);
    if events.is_empty() {
        return Err(CliError::Etas(EtasError::UsageUndefined("minor catalog has no events after the origin".into())));
    }
    Ok(Catalog::new(events, Region::WORLD, 0.0, end, m0)?)
}

fn build_scale(spec: &str, cat: &Catalog, minor: Option<&Path>, major_threshold: Option<f64>) -> CliResult<TimeScale> {
    if spec == "ph" || spec == "ph-pointwise" {
        let path = minor.ok_or_else(|| CliError::Usage("--scale ph needs --minor-catalog".into()))?;
        let full = align_minor(read_catalog(path)?, cat)?;
        let usage = build_usage_series(&full, major_threshold.unwrap_or(cat.m0()))?;
        let mode = if spec == "ph" { UsageMode::Cumulative } else { UsageMode::Pointwise };
        return Ok(TimeScale::ProportionalHazards { usage, mode });
    }
    spec.parse::<TimeScale>().map_err(|e| CliError::Usage(e.to_string()))
}

/// Merges the run file with command-line flags.
fn resolve(args: &FitArgs) -> CliResult<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(c) = &args.catalog {
        cfg.catalog = Some(c.clone());
    }
    if let Some(r) = &args.region {
        cfg.region = Some(parse_region(r)?);
    }
    cfg.m0 = args.m0.or(cfg.m0);
    cfg.t_start = args.t_start.or(cfg.t_start);
    cfg.duration = args.duration.or(cfg.duration);
    if let Some(s) = &args.scale {
        cfg.scale = s.clone();
    }
    if let Some(g) = &args.omega_grid {
        cfg.omega_grid = Some(g.clone());
    }
    if let Some(m) = &args.minor_catalog {
        cfg.minor_catalog = Some(m.clone());
    }
    cfg.major_threshold = args.major_threshold.or(cfg.major_threshold);
    if let Some(v) = args.variant {
        cfg.fit.variant = match v {
            VariantArg::Isdm => Variant::SpatioTemporal,
            VariantArg::Ground => Variant::GroundTemporal,
        };
    }
    if let Some(m) = args.mag {
        cfg.fit.magnitude = match m {
            MagArg::Exp => MagnitudeKind::Exponential,
            MagArg::Gamma => MagnitudeKind::Gamma,
        };
    }
    if let Some(o) = args.optimizer {
        cfg.fit.optimizer = match o {
            OptimizerArg::Dfp => OptimizerKind::Dfp,
            OptimizerArg::Nm => OptimizerKind::NelderMead,
        };
    }
    if let Some(names) = &args.fix {
        cfg.fit.fixed = names
            .iter()
            .filter(|n| !n.is_empty())
            .map(|n| n.parse::<ParamName>().map_err(|e| CliError::Usage(e.to_string())))
            .collect::<CliResult<_>>()?;
    }
    if let Some(d) = &args.out_dir {
        cfg.out_dir = d.clone();
    }
    if !cfg.scale.starts_with("ph") {
        cfg.scale.parse::<TimeScale>().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and windows the catalog named by the run config.
fn load_windowed(cfg: &RunConfig) -> CliResult<Catalog> {
    let path = cfg.catalog.as_ref().ok_or_else(|| CliError::Usage("no catalog given (--catalog or config)".into()))?;
    let cat = read_catalog(path)?;
    if cfg.region.is_none() && cfg.m0.is_none() && cfg.t_start.is_none() && cfg.duration.is_none() {
        return Ok(cat);
    }
    let region = cfg.region.unwrap_or(cat.region());
    let m0 = cfg.m0.unwrap_or(cat.m0());
    let t_start = cfg.t_start.unwrap_or(cat.t_start());
    let duration = match cfg.duration {
        Some(d) => d,
        // open-ended: keep everything up to just past the last event
        None if cat.region() == Region::WORLD => cat.events().last().map_or(1.0, |e| e.t - t_start + 1e-9),
        None => cat.t_end() - t_start,
    };
    Ok(cat.filter(region, m0, t_start, duration)?)
}

struct FitRun {
    cat: Catalog,
    scale: TimeScale,
    fit: FitResult,
}

fn run_fit(cfg: &RunConfig) -> CliResult<FitRun> {
    let natural = load_windowed(cfg)?;
    let minor = cfg.minor_catalog.as_deref();
    let initial = |cat: &Catalog| cfg.initial.unwrap_or_else(|| EtasParams::initial(cat.n_target(), cat.duration()));

    if let Some(grid) = &cfg.omega_grid {
        let family = match cfg.scale.split_once(':').map(|s| s.0).unwrap_or(cfg.scale.as_str()) {
            "calib" => ScaleFamily::Calibration,
            "power" => ScaleFamily::Power,
            other => return Err(CliError::Usage(format!("omega grid needs a calib or power scale, got '{other}'"))),
        };
        let search = grid_search_omega(&natural, family, grid, |cat, _| {
            let fit = isdm_fit(cat, &initial(cat), &cfg.fit)?;
            let ll = fit.loglik.total;
            Ok((fit, ll))
        })?;
        let scale = family.with_omega(search.best_omega);
        let cat = apply_scale(&natural, &scale)?;
        fs::create_dir_all(&cfg.out_dir)?;
        write_json(&cfg.out_dir.join("omega_scores.json"), &search.scores)?;
        return Ok(FitRun {
            cat,
            scale,
            fit: search.best,
        });
    }

    let scale = build_scale(&cfg.scale, &natural, minor, cfg.major_threshold)?;
    let cat = apply_scale(&natural, &scale)?;
    let fit = isdm_fit(&cat, &initial(&cat), &cfg.fit)?;
    Ok(FitRun { cat, scale, fit })
}

fn write_fit_artifacts(cfg: &RunConfig, run: &FitRun) -> CliResult<()> {
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir)?;
    write_json(&dir.join("config.json"), cfg)?;
    let report = FitReport::new(&run.fit, &run.cat, &run.scale.label());
    write_json(&dir.join("fit.json"), &report)?;
    if let TimeScale::ProportionalHazards { usage, .. } = &run.scale {
        let mut out = create(&dir.join("usage.csv"))?;
        usage.write_csv(&mut out)?;
        out.flush()?;
    }

    let mut out = create(&dir.join("catalog.csv"))?;
    write_catalog(&run.cat, &mut out)?;
    out.flush()?;
    let mut out = create(&dir.join("probs.csv"))?;
    run.fit.probs.write_csv(&mut out)?;
    out.flush()?;
    let mut out = create(&dir.join("trace.csv"))?;
    write_outer_trace_csv(&run.fit.trace, &mut out)?;
    out.flush()?;

    let bg = &run.fit.background;
    write_json(&dir.join("background.json"), &BackgroundFile::from_field(bg, cfg.fit.bandwidth.cell))?;
    let mut out = create(&dir.join("background.csv"))?;
    bg.to_grid().write_csv(&mut out)?;
    out.flush()?;
    if run.fit.options.variant == Variant::SpatioTemporal {
        let lambda = total_spatial_intensity(&run.cat, &run.fit.params, bg);
        let mut out = create(&dir.join("total_intensity.csv"))?;
        lambda.write_csv(&mut out)?;
        out.flush()?;
        let omega = clustering_coefficient(bg, run.fit.params.mu, &lambda)?;
        let mut out = create(&dir.join("clustering.csv"))?;
        omega.write_csv(&mut out)?;
        out.flush()?;
    }
    Ok(())
}

fn summary_line(run: &FitRun) -> String {
    let f = &run.fit;
    format!(
        "loglik {:.6}  AIC {:.6}  branching ratio {}  ({} target events, {} iterations{})",
        f.loglik.total,
        f.aic,
        f.branching_ratio.map_or("n/a".into(), |n| format!("{n:.4}")),
        run.cat.n_target(),
        f.iterations,
        if f.converged { "" } else { ", NOT converged" }
    )
}

fn check_converged(run: &FitRun) -> CliResult<()> {
    if run.fit.converged {
        Ok(())
    } else {
        Err(CliError::NotConverged(format!(
            "fit did not converge; artifacts written with converged=false ({})",
            run.fit.warnings.join("; ")
        )))
    }
}

fn cmd_fit(a: FitArgs) -> CliResult<()> {
    let cfg = resolve(&a)?;
    let run = run_fit(&cfg)?;
    write_fit_artifacts(&cfg, &run)?;
    println!("{}", summary_line(&run));
    check_converged(&run)
}

fn cmd_decluster(a: DeclusterArgs) -> CliResult<()> {
    let mut cfg = resolve(&a.fit)?;
    cfg.threshold = a.threshold.or(cfg.threshold);
    cfg.seed = a.seed.or(cfg.seed);
    let threshold = cfg.threshold.unwrap_or(0.95);
    let run = run_fit(&cfg)?;
    write_fit_artifacts(&cfg, &run)?;
    let labels = classify(&run.fit.probs, threshold)?;
    let mut out = create(&cfg.out_dir.join("labels.csv"))?;
    writeln!(out, "# etas-labels v1 threshold={threshold}")?;
    writeln!(out, "index,t,lon,lat,mag,bg_prob,label")?;
    for (j, (e, l)) in run.cat.events().iter().zip(&labels).enumerate() {
        writeln!(out, "{j},{},{},{},{},{},{}", e.t, e.lon, e.lat, e.mag, run.fit.probs.bg[j], l.as_str())?;
    }
    out.flush()?;
    if let Some(seed) = cfg.seed {
        let draw = sample_realization(&run.fit.probs, seed);
        let mut out = create(&cfg.out_dir.join("realization.csv"))?;
        writeln!(out, "# etas-realization v1 seed={seed}")?;
        writeln!(out, "child_idx,parent_idx")?;
        for (j, p) in draw.iter().enumerate() {
            writeln!(out, "{j},{}", p.map_or(-1, |i| i as i64))?;
        }
        out.flush()?;
    }
    let count = |want| labels.iter().filter(|l| **l == want).count();
    println!(
        "{}; labels at {threshold}: {} background, {} triggered, {} uncertain",
        summary_line(&run),
        count(etas_core::decluster::Label::Background),
        count(etas_core::decluster::Label::Triggered),
        count(etas_core::decluster::Label::Uncertain)
    );
    check_converged(&run)
}

fn cmd_diagnose(a: DiagnoseArgs) -> CliResult<()> {
    let cat = read_catalog(&a.fit_dir.join("catalog.csv"))?;
    let report = FitReport::read(&a.fit_dir.join("fit.json"))?;
    let bandwidth: BandwidthConfig = report.options.bandwidth;
    let bg = match report.variant {
        Variant::SpatioTemporal => Some(BackgroundFile::read(&a.fit_dir.join("background.json"))?.into_field()),
        Variant::GroundTemporal => None,
    };
    let diag = diagnose(&cat, &report.params, bg.as_ref(), a.bins, &bandwidth)?;
    let dir = a.out_dir.unwrap_or(a.fit_dir);
    fs::create_dir_all(&dir)?;
    write_json(&dir.join("diagnostics.json"), &serde_json::json!({
        "schema": "etas-diagnostics v1",
        "summary": diag.summary(),
        "ks": diag.ks,
    }))?;
    let mut out = create(&dir.join("tau.csv"))?;
    diag.write_tau_csv(&mut out)?;
    out.flush()?;
    let mut out = create(&dir.join("uniform_residuals.csv"))?;
    diag.write_u_csv(&mut out)?;
    out.flush()?;
    let mut out = create(&dir.join("temporal_residuals.csv"))?;
    diag.write_temporal_csv(&mut out)?;
    out.flush()?;
    if let Some(grid) = &diag.spatial {
        let mut out = create(&dir.join("spatial_residuals.csv"))?;
        grid.write_csv(&mut out)?;
        out.flush()?;
    }
    println!(
        "KS statistic {:.6}  p-value {}  ({} transformed times)",
        diag.ks.statistic,
        diag.ks.p_value.map_or("n/a (fewer than 10 events)".into(), |p| format!("{p:.6}")),
        diag.ks.n
    );
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> CliResult<()> {
    let params = EtasParams {
        mu: a.mu,
        a: a.a,
        alpha: a.alpha,
        c: a.c,
        p: a.p,
        d: a.d,
        gamma: a.gamma,
        q: a.q,
    };
    let mut cfg = SimConfig::new(
        params,
        MagnitudeModel::Exponential { beta: a.beta },
        parse_region(&a.region)?,
        a.duration,
        a.m0,
        a.seed,
    )?;
    cfg.t_start = a.t_start;
    cfg.max_events = a.max_events;
    let sim = match a.method {
        SimMethod::Branching => simulate(&cfg)?,
        SimMethod::Thinning => simulate_thinning(&cfg)?,
    };
    fs::create_dir_all(&a.out_dir)?;
    let mut out = create(&a.out_dir.join("catalog.csv"))?;
    write_catalog(&sim.catalog, &mut out)?;
    out.flush()?;
    let mut out = create(&a.out_dir.join("genealogy.csv"))?;
    sim.write_genealogy_csv(&mut out)?;
    out.flush()?;
    write_json(&a.out_dir.join("simulation.json"), &serde_json::json!({
        "schema": "etas-simulation v1",
        "params": params,
        "magnitude": cfg.magnitude,
        "region": cfg.region,
        "duration": cfg.duration,
        "t_start": cfg.t_start,
        "m0": cfg.m0,
        "seed": cfg.seed,
        "method": match a.method { SimMethod::Branching => "branching", SimMethod::Thinning => "thinning" },
        "n_events": sim.catalog.len(),
        "n_generated": sim.all.len(),
        "n_background": sim.n_background(),
        "overflow": sim.overflow,
    }))?;
    println!(
        "{} events in region ({} background, {} generated in total){}",
        sim.catalog.len(),
        sim.n_background(),
        sim.all.len(),
        if sim.overflow { "; stopped at --max-events" } else { "" }
    );
    Ok(())
}

fn cmd_scale(a: ScaleArgs) -> CliResult<()> {
    let cat = read_catalog(&a.catalog)?;
    let scale = build_scale(&a.scale, &cat, a.minor_catalog.as_deref(), a.major_threshold)?;
    let scaled = apply_scale(&cat, &scale)?;
    let mut out = create(&a.out)?;
    write_catalog(&scaled, &mut out)?;
    out.flush()?;
    if let TimeScale::ProportionalHazards { usage, .. } = &scale {
        let path = a.out.with_extension("usage.csv");
        let mut out = create(&path)?;
        usage.write_csv(&mut out)?;
        out.flush()?;
    }
    println!("{} events rescaled with {}", scaled.len(), scale.label());
    Ok(())
}
