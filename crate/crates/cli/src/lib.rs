//! Command-line front end for the `fbvo` binary.
//!
//! Each subcommand is a plain function over an argument struct so that tests
//! can drive it in-process.

pub mod scenario;
pub mod svg;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use fbvo_core::io::{
    format_calibration, read_poses, read_text, save_pgm, write_diagnostics_csv, write_evaluation_csv,
    write_reliability_csv, write_text, write_trajectory, DatasetHandle,
};
use fbvo_core::metrics::{
    ate_rmse, evaluate, reliability_report, EvaluationReport, ReliabilityReport, DEFAULT_SEGMENT_LENGTHS,
};
use fbvo_core::pipeline::{FrameDiagnostics, Mode, Odometry, PipelineConfig};
use fbvo_core::synth::{generate_scenario, Scenario, RENDERED_DETECTION_THRESHOLD};
use fbvo_core::{StereoRig, Trajectory};

use crate::scenario::{load_scenario, parse_scenario_config};
use crate::svg::{Plot, Series};

#[derive(Debug, Parser)]
#[command(name = "fbvo", version, about = "Joint forward-backward stereo visual odometry")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run odometry on a KITTI-layout sequence or a synthetic scenario.
    Run(RunArgs),
    /// Compare an estimated trajectory against ground truth.
    Eval(EvalArgs),
    /// Forward-backward consistency of two trajectories, no ground truth needed.
    Selfcheck(SelfcheckArgs),
    /// Generate a synthetic scenario, optionally rendered as a KITTI-layout sequence.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
#[command(group(ArgGroup::new("input").required(true).args(["dataset", "scenario"])))]
pub struct RunArgs {
    #[arg(long, default_value = "joint")]
    pub mode: Mode,
    /// Dataset root containing `sequences/` and optionally `poses/`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, default_value = "00")]
    pub seq: String,
    /// Scenario generator config (TOML) or scenario dump.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Render the scenario and run the full image front end on it.
    #[arg(long, conflicts_with = "dataset")]
    pub render: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Seeds RANSAC and, for generator configs, the scenario.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write a top-down (x-z) trajectory plot.
    #[arg(long)]
    pub plot: bool,
    #[command(flatten)]
    pub tuning: Tuning,
}

/// Estimator and front-end overrides.
#[derive(Debug, Clone, Default, Args)]
pub struct Tuning {
    #[arg(long)]
    pub ransac_iters: Option<usize>,
    /// Inlier residual threshold, pixels.
    #[arg(long)]
    pub inlier_thresh: Option<f64>,
    #[arg(long)]
    pub gn_iters: Option<usize>,
    #[arg(long)]
    pub min_matches: Option<usize>,
    /// Detector response threshold (default 50, or 800 on rendered scenarios).
    #[arg(long)]
    pub detect_threshold: Option<i32>,
    #[arg(long)]
    pub nms_radius: Option<usize>,
    #[arg(long)]
    pub max_features: Option<usize>,
    /// Stereo row tolerance, pixels.
    #[arg(long)]
    pub epipolar_tol: Option<f64>,
    /// Temporal search half-window, pixels.
    #[arg(long)]
    pub match_window: Option<f64>,
}

impl Tuning {
    /// Applies the overrides; `rendered` selects the rendered-scene detector threshold.
    pub fn apply(&self, base: PipelineConfig, seed: Option<u64>, rendered: bool) -> PipelineConfig {
        let mut c = base;
        let e = &mut c.estimator;
        e.ransac_iterations = self.ransac_iters.unwrap_or(e.ransac_iterations);
        e.inlier_threshold = self.inlier_thresh.unwrap_or(e.inlier_threshold);
        e.gn_max_iterations = self.gn_iters.unwrap_or(e.gn_max_iterations);
        e.min_matches = self.min_matches.unwrap_or(e.min_matches);
        e.rng_seed = seed.unwrap_or(e.rng_seed);
        let d = &mut c.detector;
        if rendered {
            d.threshold = RENDERED_DETECTION_THRESHOLD;
        }
        d.threshold = self.detect_threshold.unwrap_or(d.threshold);
        d.nms_radius = self.nms_radius.unwrap_or(d.nms_radius);
        d.max_count = self.max_features.unwrap_or(d.max_count);
        let m = &mut c.matcher;
        m.epipolar_tol = self.epipolar_tol.unwrap_or(m.epipolar_tol);
        m.temporal_window = self.match_window.unwrap_or(m.temporal_window);
        c
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub est: PathBuf,
    /// Segment lengths in metres.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SEGMENT_LENGTHS)]
    pub distances: Vec<f64>,
    /// Per-length CSV report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Error-versus-length SVG plot.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum BackwardSense {
    /// Each pose maps the current frame back to the start (`B_i ≈ F_i⁻¹`).
    #[default]
    Native,
    /// Camera-to-world like the forward file; inverted before comparison.
    Forward,
}

#[derive(Debug, Clone, Args)]
pub struct SelfcheckArgs {
    #[arg(long)]
    pub forward: PathBuf,
    #[arg(long)]
    pub backward: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    pub backward_sense: BackwardSense,
    /// Keep every `stride`-th frame in the CSV and plot.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub stride: u64,
    /// Per-frame CSV report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Error-versus-frame SVG plot.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Generator config (TOML); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write PGM frames and calib.txt in KITTI layout.
    #[arg(long)]
    pub render: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(a) => {
            let s = cmd_run(&a)?;
            println!("{}", s.summary_line());
            if let Some(ate) = s.ate {
                println!("ATE {ate:.4} m");
            }
            if s.frame_pairs > 0 && s.failed_frames == s.frame_pairs {
                bail!("motion estimation failed on all {} frame pairs", s.frame_pairs);
            }
        }
        Command::Eval(a) => println!("{}", eval_summary_line(&cmd_eval(&a)?)),
        Command::Selfcheck(a) => println!("{}", selfcheck_summary_line(&cmd_selfcheck(&a)?)),
        Command::Synth(a) => {
            let s = cmd_synth(&a)?;
            println!("wrote {} frames to {}", s.frame_count(), a.out.display());
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub mode: Mode,
    pub frame_pairs: usize,
    pub failed_frames: usize,
    pub diagnostics: Vec<FrameDiagnostics>,
    pub trajectory: Trajectory,
    /// Unaligned RMSE against ground truth when it is available.
    pub ate: Option<f64>,
}

impl RunSummary {
    pub fn mean_total_ms(&self) -> f64 {
        mean(self.diagnostics.iter().map(|d| d.total_ms))
    }

    pub fn mean_estimate_ms(&self) -> f64 {
        mean(self.diagnostics.iter().map(|d| d.estimate_ms))
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{}: {} frame pairs, {} failed, {:.3} ms per frame ({:.3} ms estimation)",
            self.mode,
            self.frame_pairs,
            self.failed_frames,
            self.mean_total_ms(),
            self.mean_estimate_ms()
        )
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

enum Source {
    Dataset(DatasetHandle),
    Rendered(Scenario),
    Matches(Scenario),
}

impl Source {
    fn rig(&self) -> StereoRig {
        match self {
            Source::Dataset(h) => h.rig,
            Source::Rendered(s) | Source::Matches(s) => s.rig,
        }
    }

    fn ground_truth(&self) -> Option<&Trajectory> {
        match self {
            Source::Dataset(h) => h.ground_truth.as_ref(),
            Source::Rendered(s) | Source::Matches(s) => Some(&s.ground_truth),
        }
    }
}

fn open_source(args: &RunArgs) -> Result<Source> {
    if let Some(root) = &args.dataset {
        let h = DatasetHandle::open(root, &args.seq)
            .with_context(|| format!("cannot open sequence {} under {}", args.seq, root.display()))?;
        return Ok(Source::Dataset(h));
    }
    let path = args.scenario.as_ref().context("no input given")?;
    let text = read_text(path)?;
    let s = load_scenario(&text, args.seed).with_context(|| format!("cannot load scenario {}", path.display()))?;
    Ok(if args.render {
        Source::Rendered(s)
    } else {
        Source::Matches(s)
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    Ok(write_text(path, text)?)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// Runs odometry and writes `trajectory.txt`, `diagnostics.csv` and, when the
/// mode produces them, `forward.txt`, `backward.txt` (forward sense) and
/// `backward_native.txt` into the output directory.
///
/// Trajectory files are only written when at least one frame pair produced
/// a motion estimate.
pub fn cmd_run(args: &RunArgs) -> Result<RunSummary> {
    let source = open_source(args)?;
    let rendered = matches!(source, Source::Rendered(_));
    let config = args.tuning.apply(PipelineConfig::default(), args.seed, rendered);
    let mut odo = Odometry::new(source.rig(), args.mode, config)?;
    match &source {
        Source::Dataset(h) => {
            for k in 0..h.frame_count {
                let (l, r) = h.load_stereo(k)?;
                odo.process_images(&l, &r);
            }
        }
        Source::Rendered(s) => {
            for k in 0..s.frame_count() {
                let (l, r) = s.render_stereo(k);
                odo.process_images(&l, &r);
            }
        }
        Source::Matches(s) => {
            for f in &s.frames {
                odo.process_matches(&f.quad_matches);
            }
        }
    }

    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    write_diagnostics_csv(create(&args.out.join("diagnostics.csv"))?, odo.diagnostics())?;
    let frame_pairs = odo.diagnostics().len();
    let failed_frames = odo.failed_frames();
    let trajectory = odo.trajectory().clone();
    let gt = source.ground_truth();
    let ate = gt.and_then(|g| match ate_rmse(g, &trajectory) {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("ground truth not comparable: {e}");
            None
        }
    });

    if frame_pairs == 0 || failed_frames < frame_pairs {
        write_file(&args.out.join("trajectory.txt"), &write_trajectory(&trajectory))?;
        if let Some(f) = odo.forward_trajectory() {
            write_file(&args.out.join("forward.txt"), &write_trajectory(f))?;
        }
        if let Some(b) = odo.backward_trajectory() {
            write_file(&args.out.join("backward.txt"), &write_trajectory(b))?;
            write_file(&args.out.join("backward_native.txt"), &write_trajectory(&b.inverted()))?;
        }
        if let Some(g) = gt {
            write_file(&args.out.join("ground_truth.txt"), &write_trajectory(g))?;
        }
        if args.plot {
            let xz = |t: &Trajectory| t.poses().iter().map(|p| (p.translation.x, p.translation.z)).collect();
            let mut series = vec![Series::new(args.mode.to_string(), xz(&trajectory))];
            if let Some(g) = gt {
                series.push(Series::new("ground truth", xz(g)));
            }
            let plot = Plot {
                title: format!("trajectory ({} mode)", args.mode),
                x_label: "x [m]".into(),
                y_label: "z [m]".into(),
                equal_aspect: true,
                series,
            };
            write_file(&args.out.join("trajectory.svg"), &plot.render())?;
        }
    }

    Ok(RunSummary {
        mode: args.mode,
        frame_pairs,
        failed_frames,
        diagnostics: odo.diagnostics().to_vec(),
        trajectory,
        ate,
    })
}

fn load_trajectory(path: &Path) -> Result<Trajectory> {
    let text = read_text(path)?;
    read_poses(&text).with_context(|| format!("cannot parse {}", path.display()))
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvaluationReport> {
    let gt = load_trajectory(&args.gt)?;
    let est = load_trajectory(&args.est)?;
    let report = evaluate(&gt, &est, &args.distances)
        .with_context(|| format!("cannot compare {} with {}", args.est.display(), args.gt.display()))?;
    if let Some(out) = &args.out {
        write_evaluation_csv(create(out)?, &report.segments)?;
    }
    if let Some(path) = &args.plot {
        let per = &report.segments.per_length;
        let plot = Plot {
            title: "segment errors".into(),
            x_label: "path length [m]".into(),
            y_label: "t_rel [%] / r_rel [deg/100m]".into(),
            equal_aspect: false,
            series: vec![
                Series::new("t_rel [%]", per.iter().map(|l| (l.length, l.t_rel)).collect()),
                Series::new("r_rel [deg/100m]", per.iter().map(|l| (l.length, l.r_rel)).collect()),
            ],
        };
        write_file(path, &plot.render())?;
    }
    Ok(report)
}

/// `t_rel r_rel t_abs` in percent, degrees per 100 m and metres; `n/a` when
/// no segment fits in the trajectory.
pub fn eval_summary_line(r: &EvaluationReport) -> String {
    let t = r.segments.t_rel.map_or_else(|| "n/a".to_owned(), |v| format!("{v:.2}"));
    let rot = r.segments.r_rel.map_or_else(|| "n/a".to_owned(), |v| format!("{v:.3}"));
    format!("{t} {rot} {:.2}", r.t_abs)
}

pub fn cmd_selfcheck(args: &SelfcheckArgs) -> Result<ReliabilityReport> {
    let forward = load_trajectory(&args.forward)?;
    let mut backward = load_trajectory(&args.backward)?;
    if args.backward_sense == BackwardSense::Forward {
        backward = backward.inverted();
    }
    let report = reliability_report(&forward, &backward).with_context(|| {
        format!(
            "cannot compare {} with {}",
            args.backward.display(),
            args.forward.display()
        )
    })?;
    let stride = args.stride as usize;
    if let Some(out) = &args.out {
        write_reliability_csv(create(out)?, &report, stride)?;
    }
    if let Some(path) = &args.plot {
        let pick = |v: &[fbvo_core::metrics::FrameError]| {
            v.iter()
                .step_by(stride)
                .map(|e| (e.frame as f64, e.translation))
                .collect()
        };
        let plot = Plot {
            title: "forward-backward consistency".into(),
            x_label: "frame".into(),
            y_label: "translation error [m]".into(),
            equal_aspect: false,
            series: vec![
                Series::new("FB-RPE", pick(&report.relative)),
                Series::new("FB-APE", pick(&report.absolute)),
            ],
        };
        write_file(path, &plot.render())?;
    }
    Ok(report)
}

pub fn selfcheck_summary_line(r: &ReliabilityReport) -> String {
    let max = |v: &[fbvo_core::metrics::FrameError]| v.iter().map(|e| e.translation).fold(0.0, f64::max);
    format!(
        "FB-RPE mean {:.6} m max {:.6} m; FB-APE mean {:.6} m max {:.6} m",
        r.mean_relative_translation(),
        max(&r.relative),
        r.mean_absolute_translation(),
        max(&r.absolute)
    )
}

/// Writes `scenario.txt` and `poses/00.txt`; with `render`, also
/// `sequences/00/{calib.txt,image_0,image_1}` so that `run --dataset` reads
/// the output directly.
pub fn cmd_synth(args: &SynthArgs) -> Result<Scenario> {
    let text = match &args.config {
        Some(p) => read_text(p)?,
        None => String::new(),
    };
    let mut file = parse_scenario_config(&text)?;
    if let Some(s) = args.seed {
        file.config.rng_seed = s;
    }
    let scenario = generate_scenario(&file.rig, &file.config)?;

    let poses_dir = args.out.join("poses");
    fs::create_dir_all(&poses_dir).with_context(|| format!("cannot create {}", poses_dir.display()))?;
    write_file(&args.out.join("scenario.txt"), &scenario.to_text())?;
    write_file(&poses_dir.join("00.txt"), &write_trajectory(&scenario.ground_truth))?;
    if args.render {
        let seq = args.out.join("sequences").join("00");
        for cam in ["image_0", "image_1"] {
            fs::create_dir_all(seq.join(cam)).with_context(|| format!("cannot create {}", seq.join(cam).display()))?;
        }
        write_file(&seq.join("calib.txt"), &format_calibration(&scenario.rig))?;
        for k in 0..scenario.frame_count() {
            let (l, r) = scenario.render_stereo(k);
            save_pgm(&seq.join("image_0").join(format!("{k:06}.pgm")), &l)?;
            save_pgm(&seq.join("image_1").join(format!("{k:06}.pgm")), &r)?;
        }
    }
    Ok(scenario)
}
