use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use radar_densify::check::{run_checks, CheckOptions};
use radar_densify::config::{ConfigError, PillarConfig, PillarPreset, ToolkitConfig};
use radar_densify::density::{bandwidth, grid_density_surface, kde_surface_3d, pillarize, DensityGrid, Lattice};
use radar_densify::densify::{densify_frame, DensifyError};
use radar_densify::geometry::{associate_masks, project_points, GeometryError};
use radar_densify::io::{self, CloudFormat, IoError};
use radar_densify::{CalibratedFrame, InstanceMask};

/// Exit codes.
const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "radar-densify", version, about = "Mask-guided radar point densification and diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Add simulated points to every masked instance of a frame.
    Densify(DensifyArgs),
    /// Emit density diagnostics as a CSV grid.
    Analyze(AnalyzeArgs),
    /// Run the fusion arithmetic self-checks.
    FusionCheck(FusionCheckArgs),
}

#[derive(clap::Args)]
struct DensifyArgs {
    /// Calibration JSON.
    #[arg(long)]
    calib: PathBuf,
    /// Input cloud (`.csv`, otherwise binary f32 records).
    #[arg(long)]
    cloud: PathBuf,
    /// Instance masks: label PNG or run-length JSON.
    #[arg(long)]
    masks: PathBuf,
    /// Output cloud, written in the input's format.
    #[arg(long)]
    out: PathBuf,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `simden.rng_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Where to write the JSON report; stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    /// KDE of radar positions over a BEV lattice.
    Kde3d,
    /// Projected point counts per image cell.
    Grid2d,
    /// BEV pillar point counts.
    Pillars,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Vod,
    Tj4d,
    Astyx,
    Bev1m,
}

impl From<Preset> for PillarPreset {
    fn from(p: Preset) -> Self {
        match p {
            Preset::Vod => PillarPreset::Vod,
            Preset::Tj4d => PillarPreset::Tj4d,
            Preset::Astyx => PillarPreset::Astyx,
            Preset::Bev1m => PillarPreset::Bev1m,
        }
    }
}

#[derive(clap::Args)]
struct AnalyzeArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    #[arg(long)]
    calib: PathBuf,
    #[arg(long)]
    cloud: PathBuf,
    /// Masks, needed with `--instance`.
    #[arg(long)]
    masks: Option<PathBuf>,
    /// Restrict to points projecting into this instance's mask.
    #[arg(long, requires = "masks")]
    instance: Option<u32>,
    /// Pillar geometry; also bounds the KDE lattice. Overrides `[pillars]` in the config.
    #[arg(long, value_enum)]
    pillar_preset: Option<Preset>,
    /// Image cell size in pixels for `grid2d`.
    #[arg(long, default_value_t = 32)]
    grid_cell: u32,
    /// KDE lattice step in meters.
    #[arg(long, default_value_t = 0.5)]
    lattice_step: f64,
    /// Report capped pillar counts instead of raw counts.
    #[arg(long)]
    capped: bool,
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct FusionCheckArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Comma-separated feature-map side lengths.
    #[arg(long, value_delimiter = ',', default_values_t = [4usize, 8])]
    sizes: Vec<usize>,
    /// Random systems per state-space property.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Multiplies every tolerance; 0 demands exact agreement.
    #[arg(long, default_value_t = 1.0)]
    tolerance_scale: f64,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn invalid(message: impl ToString) -> Self {
        Self {
            code: EXIT_INVALID,
            message: message.to_string(),
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Self {
            code: if e.is_io() { EXIT_IO } else { EXIT_INVALID },
            message: e.to_string(),
        }
    }
}

impl From<DensifyError> for Failure {
    fn from(e: DensifyError) -> Self {
        Self::invalid(e)
    }
}

impl From<GeometryError> for Failure {
    fn from(e: GeometryError) -> Self {
        Self::invalid(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::invalid(format!("configuration: {e}"))
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    }
}

fn load_config(path: Option<&Path>) -> Result<ToolkitConfig, Failure> {
    match path {
        None => Ok(ToolkitConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| io_failure(p, e))?;
            Ok(ToolkitConfig::from_toml_str(&text)?)
        }
    }
}

/// Writes to `path` atomically, or to stdout.
fn emit(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => Ok(io::write_atomic(p, |w| w.write_all(text.as_bytes()))?),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| io_failure(Path::new("<stdout>"), e))
        }
    }
}

fn densify(args: &DensifyArgs) -> Result<(), Failure> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.simden.rng_seed = seed;
    }
    cfg.validate()?;
    let frame = io::load_frame(&args.calib, &args.cloud)?;
    let masks = io::read_masks(&args.masks, (frame.image_width(), frame.image_height()))?;
    let (out, report) = densify_frame(&frame, &masks, &cfg.simden)?;
    io::write_cloud_as(&args.out, CloudFormat::from_path(&args.cloud), out.schema(), out.points())?;
    let mut json = serde_json::to_string_pretty(&report).map_err(Failure::invalid)?;
    json.push('\n');
    emit(args.report.as_deref(), &json)?;
    for r in report.instances.iter().filter(|r| r.reason.is_some()) {
        eprintln!(
            "instance {}: {:?}: {}",
            r.instance_id,
            r.status,
            r.reason.as_deref().unwrap_or_default()
        );
    }
    Ok(())
}

/// Indices of frame points selected by the analysis scope.
fn scoped_points(frame: &CalibratedFrame, masks: &[InstanceMask], instance: Option<u32>) -> Result<Vec<usize>, Failure> {
    let Some(id) = instance else {
        return Ok((0..frame.points().len()).collect());
    };
    let mask = masks
        .iter()
        .find(|m| m.instance_id() == id)
        .ok_or_else(|| Failure::invalid(format!("no mask with instance id {id}")))?;
    let projected = project_points(frame)?;
    let assoc = associate_masks(&projected, std::slice::from_ref(mask), (frame.image_width(), frame.image_height()))?;
    Ok(assoc[0].points.iter().map(|p| p.source_index).collect())
}

fn analyze(args: &AnalyzeArgs) -> Result<(), Failure> {
    let cfg = load_config(args.config.as_deref())?;
    let pillars = match args.pillar_preset {
        Some(p) => PillarConfig::preset(p.into()),
        None => cfg.pillars.clone(),
    };
    let frame = io::load_frame(&args.calib, &args.cloud)?;
    let masks = match &args.masks {
        Some(p) => io::read_masks(p, (frame.image_width(), frame.image_height()))?,
        None => Vec::new(),
    };
    let selected = scoped_points(&frame, &masks, args.instance)?;
    let grid: DensityGrid = match args.mode {
        Mode::Kde3d => {
            if !(args.lattice_step > 0.0 && args.lattice_step.is_finite()) {
                return Err(Failure::invalid("--lattice-step must be positive"));
            }
            let pts: Vec<[f64; 3]> = selected.iter().map(|&i| frame.points()[i].position()).collect();
            let lattice = Lattice::covering(pillars.x_range, pillars.y_range, args.lattice_step);
            let bw = bandwidth(cfg.simden.bandwidth_rule, pts.len().max(1), 3);
            kde_surface_3d(&pts, &bw, cfg.simden.kernel, cfg.simden.gamma, &lattice)
        }
        Mode::Grid2d => {
            if args.grid_cell == 0 {
                return Err(Failure::invalid("--grid-cell must be at least 1"));
            }
            let projected = project_points(&frame)?;
            let keep: std::collections::HashSet<usize> = selected.into_iter().collect();
            let pts: Vec<[f64; 2]> =
                projected.iter().filter(|p| keep.contains(&p.source_index)).map(|p| [p.u, p.v]).collect();
            grid_density_surface(&pts, (frame.image_width(), frame.image_height()), args.grid_cell)
        }
        Mode::Pillars => {
            let pts: Vec<_> = selected.iter().map(|&i| frame.points()[i].clone()).collect();
            pillarize(&pts, &pillars).to_grid(args.capped)
        }
    };
    emit(args.out.as_deref(), &grid.to_csv())
}

fn fusion_check(args: &FusionCheckArgs) -> Result<bool, Failure> {
    if !(args.tolerance_scale >= 0.0 && args.tolerance_scale.is_finite()) {
        return Err(Failure::invalid("--tolerance-scale must be a finite non-negative number"));
    }
    if args.sizes.is_empty() || args.sizes.contains(&0) {
        return Err(Failure::invalid("--sizes must list positive side lengths"));
    }
    let report = run_checks(&CheckOptions {
        seed: args.seed,
        sizes: args.sizes.clone(),
        trials: args.trials,
        tolerance_scale: args.tolerance_scale,
    });
    let mut text = String::new();
    for r in &report.records {
        text.push_str(&serde_json::to_string(r).map_err(Failure::invalid)?);
        text.push('\n');
    }
    emit(None, &text)?;
    let failed: Vec<&str> = report.failures().map(|r| r.property.as_str()).collect();
    if failed.is_empty() {
        eprintln!("fusion-check: {} properties passed (seed {})", report.records.len(), report.seed);
    } else {
        eprintln!("fusion-check: {} of {} properties failed: {}", failed.len(), report.records.len(), failed.join(", "));
    }
    Ok(failed.is_empty())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Densify(a) => densify(a).map(|_| true),
        Command::Analyze(a) => analyze(a).map(|_| true),
        Command::FusionCheck(a) => fusion_check(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
