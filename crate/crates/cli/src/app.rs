//! The `smokeflow` command line.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use smokeflow_core::color::{colorize, MaxMagnitude};
use smokeflow_core::eval::{evaluate, predict_second_frame, Region};
use smokeflow_core::imaging::threshold_mask;
use smokeflow_core::pipeline::{estimate_with, Stage, Status};
use smokeflow_core::sparse_flow::SparseFlow;
use smokeflow_core::synth::{advect, make_density, FlowKind, FlowSpec};
use smokeflow_core::{FlowField, Vec2};

use crate::config::{sha256_hex, ConfigError, ConfigLayer, PipelineConfig, Variant};
use crate::flo::{self, FloError};
use crate::imageio::{self, ImageError};

#[derive(Debug, Parser)]
#[command(name = "smokeflow", version, about = "Dense motion estimation for smoke from skeletal attraction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the flow between two frames.
    Estimate(EstimateArgs),
    /// Generate a synthetic frame pair with ground truth.
    Synth(SynthArgs),
    /// Score a flow against frames and/or ground truth.
    Eval(EvalArgs),
    /// Render a flow file with the colour wheel.
    Viz(VizArgs),
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub frame1: PathBuf,
    #[arg(long)]
    pub frame2: PathBuf,
    /// Output `.flo` path.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Blur scales in pixels, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub scales: Option<Vec<f64>>,
    /// Segmentation threshold on the 0..255 scale.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub sigma_spatial: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub sigma_v: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_enum)]
    pub tensor_variant: Option<Variant>,
    /// Stop after interpolation.
    #[arg(long)]
    pub no_refine: bool,
    #[arg(long)]
    pub outer_iters: Option<usize>,
    /// Directory for the stability maps `skeleton1.png` and `skeleton2.png`.
    #[arg(long)]
    pub dump_skeleton: Option<PathBuf>,
    /// CSV of the sparse samples.
    #[arg(long)]
    pub dump_sparse: Option<PathBuf>,
    /// `.flo` of the interpolated field before refinement.
    #[arg(long)]
    pub dump_interp: Option<PathBuf>,
    /// Colour-coded flow PNG.
    #[arg(long)]
    pub color: Option<PathBuf>,
    /// Magnitude shown at full saturation; default is the 99th percentile.
    #[arg(long)]
    pub color_max: Option<f64>,
    /// PNG of frame one transported by the flow.
    #[arg(long)]
    pub warped: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Translate,
    Rotate,
    Vortex,
    Shear,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: Kind,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub tx: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub ty: f64,
    /// Rotation angle in degrees.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub angle: f64,
    /// Peak vortex rotation in degrees.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub strength: f64,
    /// Vortex radius in pixels; default is a fifth of the smaller side.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Shear rate, pixels of horizontal motion per row.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub rate: f64,
    /// Rotation centre; default is the image centre.
    #[arg(long, allow_negative_numbers = true)]
    pub center_x: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub center_y: Option<f64>,
    /// Blur after every advection step, pixels.
    #[arg(long, default_value_t = 0.0)]
    pub diffusion: f64,
    #[arg(long, default_value_t = 1)]
    pub steps: usize,
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    #[arg(long, default_value_t = 256)]
    pub height: usize,
    #[arg(long, default_value_t = 5)]
    pub blobs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving f1.png, f2.png, gt.flo and synth.json.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegionArg {
    Full,
    Mask,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub flow: PathBuf,
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub frame1: Option<PathBuf>,
    #[arg(long)]
    pub frame2: Option<PathBuf>,
    /// `mask` averages over the segmented smoke of frame one.
    #[arg(long, value_enum, default_value_t = RegionArg::Full)]
    pub region: RegionArg,
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    /// Reports `ie / value` as `ie_ratio`, for tables normalized by a best result.
    #[arg(long)]
    pub normalize_ie: Option<f64>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VizArgs {
    pub flow: PathBuf,
    pub out: PathBuf,
    /// Magnitude shown at full saturation; default is the 99th percentile.
    #[arg(long)]
    pub max: Option<f64>,
}

/// Failure with a stable machine-readable kind.
#[derive(Debug)]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Failure {
            kind,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::new("config", e.to_string())
    }
}

impl From<FloError> for Failure {
    fn from(e: FloError) -> Self {
        let kind = match e {
            FloError::Io(_) => "io",
            _ => "flo",
        };
        Failure::new(kind, e.to_string())
    }
}

impl From<ImageError> for Failure {
    fn from(e: ImageError) -> Self {
        Failure::new("image", e.to_string())
    }
}

impl From<smokeflow_core::Error> for Failure {
    fn from(e: smokeflow_core::Error) -> Self {
        let kind = match e {
            smokeflow_core::Error::DimensionMismatch { .. } => "dimension-mismatch",
            smokeflow_core::Error::InvalidParameter(_) => "invalid-parameter",
            _ => "pipeline",
        };
        Failure::new(kind, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new("io", e.to_string())
    }
}

type Outcome<T> = Result<T, Failure>;

/// Parses `args` (program name first) and runs the command. Errors go to
/// stderr as `{"error": {"kind": ..., "message": ...}}`.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report_failure(&Failure::new("usage", e.to_string().trim_end()));
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            report_failure(&f);
            ExitCode::FAILURE
        }
    }
}

fn report_failure(f: &Failure) {
    let body = json!({ "error": { "kind": f.kind, "message": f.message } });
    let _ = writeln!(std::io::stderr(), "{body}");
}

pub fn run(command: Command) -> Outcome<()> {
    match command {
        Command::Estimate(a) => {
            let report = run_estimate(&a)?;
            emit(&report, a.report.as_deref())
        }
        Command::Synth(a) => {
            let report = run_synth(&a)?;
            emit(&report, None)
        }
        Command::Eval(a) => {
            let report = run_eval(&a)?;
            emit(&report, a.report.as_deref())
        }
        Command::Viz(a) => run_viz(&a),
    }
}

fn emit(value: &impl Serialize, path: Option<&Path>) -> Outcome<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    match path {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

/// Configuration for an `estimate` invocation: defaults, then the file,
/// then flags.
pub fn resolve_config(a: &EstimateArgs) -> Outcome<PipelineConfig> {
    let mut layer = ConfigLayer::default();
    if let Some(path) = &a.config {
        layer = layer.overlay(&ConfigLayer::load(path)?);
    }
    let mut flags = ConfigLayer {
        epsilon: a.epsilon,
        scales: a.scales.clone(),
        ..ConfigLayer::default()
    };
    flags.attraction.sigma_spatial = a.sigma_spatial;
    flags.attraction.eta = a.eta;
    flags.attraction.sigma_v = a.sigma_v;
    flags.interp.lambda = a.lambda;
    flags.interp.tensor_variant = a.tensor_variant;
    flags.refine.outer_iters = a.outer_iters;
    if a.no_refine {
        flags.refine.enabled = Some(false);
    }
    flags.debug.dump_skeleton = a.dump_skeleton.clone();
    flags.debug.dump_sparse = a.dump_sparse.clone();
    flags.debug.dump_interp = a.dump_interp.clone();
    Ok(layer.overlay(&flags).resolve()?)
}

#[derive(Debug, Serialize)]
pub struct StageTimings {
    pub load_ms: f64,
    pub segmentation_ms: f64,
    pub skeletons_ms: f64,
    pub sparse_flow_ms: f64,
    pub interpolation_ms: f64,
    pub refinement_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Serialize)]
pub struct Counts {
    pub mask1_pixels: usize,
    pub mask2_pixels: usize,
    pub skeleton1_points: usize,
    pub skeleton2_points: usize,
    pub sparse_samples: usize,
    pub filtered_points: usize,
}

#[derive(Debug, Serialize)]
pub struct EstimateReport {
    pub status: &'static str,
    pub mode: &'static str,
    pub warning: Option<String>,
    pub width: usize,
    pub height: usize,
    pub timings: StageTimings,
    pub counts: Counts,
    pub interp_iterations: [usize; 2],
    pub energies: Vec<f64>,
    pub max_flow_magnitude: f64,
    pub config: PipelineConfig,
    pub config_hash: String,
    pub outputs: Vec<PathBuf>,
}

fn ms(d: std::time::Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

pub fn run_estimate(a: &EstimateArgs) -> Outcome<EstimateReport> {
    let config = resolve_config(a)?;
    let params = config.params()?;
    let start = Instant::now();
    let f1 = imageio::read_frame(&a.frame1)?;
    let f2 = imageio::read_frame(&a.frame2)?;
    if f1.dims() != f2.dims() {
        return Err(smokeflow_core::Error::DimensionMismatch {
            expected: f1.dims(),
            found: f2.dims(),
        }
        .into());
    }
    let load_ms = ms(start.elapsed());

    let mut marks: Vec<(Stage, Instant)> = Vec::new();
    let t0 = Instant::now();
    let est = estimate_with(&f1, &f2, &params, |s| marks.push((s, Instant::now())))?;
    let mut timings = StageTimings {
        load_ms,
        segmentation_ms: 0.0,
        skeletons_ms: 0.0,
        sparse_flow_ms: 0.0,
        interpolation_ms: 0.0,
        refinement_ms: 0.0,
        total_ms: 0.0,
    };
    let mut last = t0;
    for (stage, at) in &marks {
        let d = ms(at.duration_since(last));
        last = *at;
        match stage {
            Stage::Segmentation => timings.segmentation_ms = d,
            Stage::Skeletons => timings.skeletons_ms = d,
            Stage::SparseFlow => timings.sparse_flow_ms = d,
            Stage::Interpolation => timings.interpolation_ms = d,
            Stage::Refinement => timings.refinement_ms = d,
        }
    }

    let mut outputs = vec![a.out.clone()];
    flo::write_flo(&a.out, &est.flow)?;
    if let Some(dir) = &config.debug.dump_skeleton {
        std::fs::create_dir_all(dir)?;
        for (name, s) in [("skeleton1.png", &est.skeleton1), ("skeleton2.png", &est.skeleton2)] {
            let path = dir.join(name);
            imageio::write_gray_png(&path, s.width(), s.height(), s.stability_u8())?;
            outputs.push(path);
        }
    }
    if let Some(path) = &config.debug.dump_sparse {
        let empty = SparseFlow {
            width: f1.width(),
            height: f1.height(),
            samples: Vec::new(),
            filtered: 0,
        };
        std::fs::write(path, sparse_csv(est.sparse.as_ref().unwrap_or(&empty)))?;
        outputs.push(path.clone());
    }
    if let Some(path) = &config.debug.dump_interp {
        let zero = FlowField::zeros(f1.width(), f1.height());
        flo::write_flo(path, est.interpolated.as_ref().unwrap_or(&zero))?;
        outputs.push(path.clone());
    }
    if let Some(path) = &a.color {
        let max = a.color_max.map_or(MaxMagnitude::Auto, MaxMagnitude::Fixed);
        imageio::write_colors(path, &colorize(&est.flow, max)?)?;
        outputs.push(path.clone());
    }
    if let Some(path) = &a.warped {
        imageio::write_frame(path, &predict_second_frame(&f1, &est.flow)?)?;
        outputs.push(path.clone());
    }
    timings.total_ms = ms(start.elapsed());

    let sparse = est.sparse.as_ref();
    let (status, warning) = match est.status {
        Status::Ok => ("ok", None),
        Status::NoSmoke => ("no-smoke", Some("no smoke detected; the flow is zero".to_string())),
    };
    Ok(EstimateReport {
        status,
        mode: if config.refine.enabled { "full" } else { "noEF" },
        warning,
        width: f1.width(),
        height: f1.height(),
        timings,
        counts: Counts {
            mask1_pixels: est.mask1.count(),
            mask2_pixels: est.mask2.count(),
            skeleton1_points: est.skeleton1.points().len(),
            skeleton2_points: est.skeleton2.points().len(),
            sparse_samples: sparse.map_or(0, |s| s.len()),
            filtered_points: sparse.map_or(0, |s| s.filtered),
        },
        interp_iterations: est.interp_iterations,
        energies: est.energies.clone(),
        max_flow_magnitude: est.flow.iter().map(|d| d.norm()).fold(0.0, f64::max),
        config_hash: config.hash(),
        config,
        outputs,
    })
}

/// `x,y,u,v,stability`, one sample per line after a header.
pub fn sparse_csv(sparse: &SparseFlow) -> String {
    let mut out = String::from("x,y,u,v,stability\n");
    for s in &sparse.samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            s.anchor.x, s.anchor.y, s.displacement.x, s.displacement.y, s.stability
        );
    }
    out
}

/// Motion model for `synth` flags.
pub fn flow_kind(a: &SynthArgs) -> FlowKind {
    let center = Vec2::new(
        a.center_x.unwrap_or((a.width as f64 - 1.0) / 2.0),
        a.center_y.unwrap_or((a.height as f64 - 1.0) / 2.0),
    );
    match a.kind {
        Kind::Translate => FlowKind::Translate { tx: a.tx, ty: a.ty },
        Kind::Rotate => FlowKind::Rotate {
            center,
            angle: a.angle.to_radians(),
        },
        Kind::Vortex => FlowKind::Vortex {
            center,
            strength: a.strength.to_radians(),
            radius: a.radius.unwrap_or(a.width.min(a.height) as f64 / 5.0),
        },
        Kind::Shear => FlowKind::Shear { rate: a.rate },
    }
}

pub fn run_synth(a: &SynthArgs) -> Outcome<serde_json::Value> {
    let kind = flow_kind(a);
    let f = make_density(a.width, a.height, a.seed, a.blobs)?;
    let spec = FlowSpec {
        kind,
        diffusion: a.diffusion,
        steps: a.steps,
    };
    let case = advect(&f, &spec)?;
    std::fs::create_dir_all(&a.out_dir)?;
    let paths = ["f1.png", "f2.png", "gt.flo", "synth.json"].map(|n| a.out_dir.join(n));
    imageio::write_frame(&paths[0], &case.f1)?;
    imageio::write_frame(&paths[1], &case.f2)?;
    flo::write_flo(&paths[2], &case.gt)?;
    let params = match kind {
        FlowKind::Translate { tx, ty } => json!({ "tx": tx, "ty": ty }),
        FlowKind::Rotate { center, angle } => {
            json!({ "center": [center.x, center.y], "angle_degrees": a.angle, "angle_radians": angle })
        }
        FlowKind::Vortex {
            center,
            strength,
            radius,
        } => json!({
            "center": [center.x, center.y],
            "strength_degrees": a.strength,
            "strength_radians": strength,
            "radius": radius,
        }),
        FlowKind::Shear { rate } => json!({ "rate": rate }),
    };
    let descriptor = json!({
        "kind": a.kind.to_possible_value().map(|v| v.get_name().to_string()),
        "params": params,
        "diffusion": a.diffusion,
        "steps": a.steps,
        "width": a.width,
        "height": a.height,
        "blobs": a.blobs,
        "seed": a.seed,
        "max_displacement": case.gt.iter().map(|d| d.norm()).fold(0.0, f64::max),
        "files": { "frame1": "f1.png", "frame2": "f2.png", "ground_truth": "gt.flo" },
    });
    std::fs::write(&paths[3], serde_json::to_string_pretty(&descriptor).expect("serializes") + "\n")?;
    Ok(descriptor)
}

#[derive(Debug, Serialize)]
pub struct EvalReport {
    pub ie: Option<f64>,
    pub ee_mean: Option<f64>,
    pub ee_max: Option<f64>,
    pub ae_mean: Option<f64>,
    pub region: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ie_ratio: Option<f64>,
    pub params_hash: String,
}

fn file_digest(path: &Path) -> Outcome<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

pub fn run_eval(a: &EvalArgs) -> Outcome<EvalReport> {
    let v = flo::read_flo(&a.flow)?;
    let gt = a.gt.as_ref().map(flo::read_flo).transpose()?;
    let frames = match (&a.frame1, &a.frame2) {
        (Some(p1), Some(p2)) => Some((imageio::read_frame(p1)?, imageio::read_frame(p2)?)),
        (None, None) => None,
        _ => return Err(Failure::new("usage", "--frame1 and --frame2 must be given together")),
    };
    if gt.is_none() && frames.is_none() {
        return Err(Failure::new("usage", "nothing to evaluate: give --gt and/or both frames"));
    }
    let mask = match a.region {
        RegionArg::Full => None,
        RegionArg::Mask => match &frames {
            Some((f1, _)) => Some(threshold_mask(f1, a.epsilon)),
            None => return Err(Failure::new("usage", "--region mask needs the frames")),
        },
    };
    let region = mask.as_ref().map_or(Region::Full, Region::Mask);
    let report = evaluate(&v, frames.as_ref().map(|(f1, f2)| (f1, f2)), gt.as_ref(), region)?;

    let mut inputs = vec![("flow", file_digest(&a.flow)?)];
    for (name, p) in [("gt", &a.gt), ("frame1", &a.frame1), ("frame2", &a.frame2)] {
        if let Some(p) = p {
            inputs.push((name, file_digest(p)?));
        }
    }
    let fingerprint = json!({
        "region": report.region,
        "epsilon": a.epsilon,
        "normalize_ie": a.normalize_ie,
        "inputs": inputs,
    });
    Ok(EvalReport {
        ie: report.ie,
        ee_mean: report.ee_mean,
        ee_max: report.ee_max,
        ae_mean: report.ae_mean,
        region: report.region,
        ie_ratio: match (report.ie, a.normalize_ie) {
            (Some(ie), Some(n)) if n > 0.0 => Some(ie / n),
            (_, Some(_)) => return Err(Failure::new("usage", "--normalize-ie needs both frames and a positive value")),
            _ => None,
        },
        params_hash: sha256_hex(fingerprint.to_string().as_bytes()),
    })
}

pub fn run_viz(a: &VizArgs) -> Outcome<()> {
    let v = flo::read_flo(&a.flow)?;
    let max = a.max.map_or(MaxMagnitude::Auto, MaxMagnitude::Fixed);
    imageio::write_colors(&a.out, &colorize(&v, max)?)?;
    Ok(())
}
