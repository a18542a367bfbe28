//! The four subcommands as library functions over files.

use std::path::{Path, PathBuf};
use std::time::Instant;

use deformtrack_core::correspond::{DepthImage, Observation, PixelRect};
use deformtrack_core::solver::{Clock, EnergyReport, PhaseTimings};
use deformtrack_core::synth::{evaluate, generate_frame, metrics_of, Metrics, SceneSpec};
use deformtrack_core::tracker::{self, Tracker};
use deformtrack_core::warp::Template;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::depth::{read_depth, write_depth, DepthFormat};
use crate::error::{Error, Result};
use crate::matches::{read_matches, records, write_json, MatchDocument, MatchRecord};
use crate::ply::{normals_from_depth, normals_from_faces, read_ply, write_ply};

/// Wall clock for phase timings.
pub struct WallClock(Instant);

impl WallClock {
    pub fn start() -> Self {
        Self(Instant::now())
    }
}

impl Clock for WallClock {
    fn now_seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Runs `f` on a pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Files in `dir` with extension `ext`, sorted by file name.
fn files_with_extension(dir: &Path, exts: &[&str]) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let matches = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| exts.iter().any(|x| x.eq_ignore_ascii_case(e)));
        if path.is_file() && matches {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn observation(path: &Path, depth: DepthImage, cfg: &RunConfig, frame_id: usize) -> Result<Observation> {
    let cam = &cfg.camera;
    if depth.width != cam.width || depth.height != cam.height {
        return Err(Error::format(
            path,
            format!("depth map is {}x{} but the camera is {}x{}", depth.width, depth.height, cam.width, cam.height),
        ));
    }
    Ok(Observation::new(depth, *cam, cfg.depth_range, frame_id))
}

#[derive(Debug, Clone, Default)]
pub struct TrackArgs {
    pub config: Option<PathBuf>,
    pub template: Option<PathBuf>,
    pub frames: Option<PathBuf>,
    pub matches: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

/// Per-frame report: solver diagnostics plus the configuration that
/// produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    #[serde(flatten)]
    pub energy: EnergyReport,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub frames: Vec<String>,
    pub warnings: Vec<String>,
    pub config: RunConfig,
}

/// Config file (or defaults) with command-line overrides applied.
pub fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.ransac.seed = s;
    }
    Ok(cfg)
}

fn required(value: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    value.ok_or_else(|| Error::Missing(format!("{what} path: pass it as a flag or set it under `paths` in the config")))
}

/// Tracks every frame in order. Outputs of a frame are written before the
/// next frame is read, so a failure leaves earlier frames intact.
pub fn track(args: &TrackArgs) -> Result<RunSummary> {
    let mut cfg = load_config(args.config.as_deref(), args.seed)?;
    let paths = &mut cfg.paths;
    paths.template = args.template.clone().or(paths.template.take());
    paths.frames = args.frames.clone().or(paths.frames.take());
    paths.matches = args.matches.clone().or(paths.matches.take());
    paths.out = args.out.clone().or(paths.out.take());
    let threads = args.threads.or(cfg.threads);
    let cfg = cfg.materialized();
    with_threads(threads, || run_track(&cfg))?
}

fn run_track(cfg: &RunConfig) -> Result<RunSummary> {
    let template_path = required(cfg.paths.template.clone(), "template")?;
    let frames_dir = required(cfg.paths.frames.clone(), "frames")?;
    let out_dir = required(cfg.paths.out.clone(), "output")?;
    create_dir(&out_dir)?;
    let frames = files_with_extension(&frames_dir, &["pfm", "csv"])?;
    if frames.is_empty() {
        return Err(Error::Missing(format!("no .pfm or .csv frames in {}", frames_dir.display())));
    }

    let mut warnings = Vec::new();
    let surface = read_ply(&template_path)?;
    let normals = match surface.normals {
        Some(n) => n,
        None => match normals_from_faces(&surface.points, &surface.faces) {
            Some(n) => {
                warnings.push(format!("{}: no vertex normals, computed from faces", template_path.display()));
                n
            }
            None => {
                let first = &frames[0];
                let obs = observation(first, read_depth(first)?, cfg, 0)?;
                warnings.push(format!(
                    "{}: no vertex normals, taken from depth of {}",
                    template_path.display(),
                    first.display()
                ));
                normals_from_depth(&surface.points, &obs)
            }
        },
    };
    let template = Template::new(surface.points, normals).map_err(|e| Error::format(&template_path, e.to_string()))?;
    let mut tracker = Tracker::new(&template, cfg.tracker()).map_err(|e| Error::format(&template_path, e.to_string()))?;
    if cfg.paths.matches.is_none() {
        warnings.push("no matches given: tracking with depth and regularization only".to_string());
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    log::info!("{} template points, {} control points, {} frames", tracker.template().len(), tracker.graph().len(), frames.len());

    let mut names = Vec::with_capacity(frames.len());
    for (i, frame) in frames.iter().enumerate() {
        let name = stem(frame);
        let obs = observation(frame, read_depth(frame)?, cfg, i + 1)?;
        let mut frame_warnings = warnings.clone();
        let matches = match &cfg.paths.matches {
            None => None,
            Some(dir) => {
                let path = dir.join(format!("{name}.json"));
                if path.is_file() {
                    Some(read_matches(&path)?)
                } else {
                    let w = format!("no match file {}: matching term dropped for this frame", path.display());
                    log::warn!("{w}");
                    frame_warnings.push(w);
                    None
                }
            }
        };
        let clock = WallClock::start();
        let tracked = tracker.track(&obs, matches.as_ref(), &clock);
        let mut report = tracked.result.report;
        report.warnings.splice(0..0, frame_warnings);
        log::info!(
            "{name}: {} iterations, cost {:.6} -> {:.6}, stop {:?}",
            report.iterations,
            report.initial.total,
            report.final_costs.total,
            report.stop_reason
        );
        let deformed = &tracked.result.deformed;
        write_ply(&out_dir.join(format!("{name}.ply")), &deformed.points, &deformed.normals)?;
        write_json(
            &out_dir.join(format!("{name}.report.json")),
            &FrameReport {
                energy: report,
                config: cfg.clone(),
            },
        )?;
        let weights: Vec<MatchRecord> = tracked.matches.as_ref().map(records).unwrap_or_default();
        write_json(&out_dir.join(format!("{name}.matches.json")), &weights)?;
        write_json(&out_dir.join(format!("{name}.timing.json")), &tracked.result.timings)?;
        names.push(name);
    }
    let summary = RunSummary {
        frames: names,
        warnings,
        config: cfg.clone(),
    };
    write_json(&out_dir.join("run.json"), &summary)?;
    Ok(summary)
}

/// Synthetic sequence description for `synth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub scene: SceneSpec,
    /// Frames `1..=frames` of the motion are generated.
    pub frames: usize,
    /// Keep every `stride`-th frame (faster apparent motion).
    pub stride: usize,
    pub depth_format: DepthFormat,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            scene: SceneSpec::default(),
            frames: 20,
            stride: 1,
            depth_format: DepthFormat::Pfm,
        }
    }
}

/// Ground truth for one synthetic frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub frame: usize,
    /// Per match: true for a genuine correspondence.
    pub inliers: Vec<bool>,
    /// Per template point: unit dual quaternion `[w, x, y, z]` real then
    /// dual part.
    pub warps: Vec<[f64; 8]>,
    pub occlusion: Option<PixelRect>,
}

/// Writes `template.ply`, `frames/`, `matches/`, `truth/` and a ready-to-run
/// `config.json` under `out`.
pub fn synth(spec_path: &Path, out: &Path, seed: Option<u64>) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(spec_path).map_err(|e| Error::io(spec_path, e))?;
    let mut spec: SynthSpec = serde_json::from_str(&text).map_err(|e| Error::format(spec_path, e.to_string()))?;
    if let Some(s) = seed {
        spec.scene.seed = s;
    }
    if spec.frames == 0 || spec.stride == 0 {
        return Err(Error::format(spec_path, "frames and stride must be at least 1"));
    }
    spec.scene.validate().map_err(|e| Error::format(spec_path, e.to_string()))?;
    write_synth(&spec, out)
}

pub fn write_synth(spec: &SynthSpec, out: &Path) -> Result<Vec<String>> {
    let (frames_dir, matches_dir, truth_dir) = (out.join("frames"), out.join("matches"), out.join("truth"));
    for d in [out, &frames_dir, &matches_dir, &truth_dir] {
        create_dir(d)?;
    }
    let scene = &spec.scene;
    let template = scene.template();
    write_ply(&out.join("template.ply"), &template.points, &template.normals)?;
    let mut names = Vec::new();
    for t in (spec.stride..=spec.frames).step_by(spec.stride) {
        let f = generate_frame(scene, &template, t);
        let name = format!("frame_{t:04}");
        write_depth(&frames_dir.join(format!("{name}.{}", spec.depth_format.extension())), &f.observation.depth)?;
        let recs: Vec<MatchRecord> = records(&f.matches)
            .into_iter()
            .map(|r| MatchRecord {
                weight: None,
                preselected: None,
                ..r
            })
            .collect();
        write_json(&matches_dir.join(format!("{name}.json")), &recs)?;
        write_ply(&truth_dir.join(format!("{name}.ply")), &f.truth_points, &f.truth_normals)?;
        write_json(
            &truth_dir.join(format!("{name}.json")),
            &FrameTruth {
                frame: t,
                inliers: f.inliers,
                warps: f.truth_warps.iter().map(|w| w.to_array()).collect(),
                occlusion: scene.occlusion,
            },
        )?;
        names.push(name);
    }
    let mut cfg = RunConfig {
        camera: scene.camera,
        ..RunConfig::default()
    };
    cfg.paths.template = Some(out.join("template.ply"));
    cfg.paths.frames = Some(frames_dir);
    cfg.paths.matches = Some(matches_dir);
    write_json(&out.join("config.json"), &cfg.materialized())?;
    Ok(names)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub frame: String,
    pub metrics: Metrics,
}

/// Compares `recovered/<name>.ply` with `truth/<name>.ply` for every truth
/// surface. The last row, `all`, pools the distances of every frame.
pub fn eval(recovered: &Path, truth: &Path, out: &Path, distances: Option<&Path>) -> Result<Vec<EvalRow>> {
    let truths = files_with_extension(truth, &["ply"])?;
    if truths.is_empty() {
        return Err(Error::Missing(format!("no truth surfaces in {}", truth.display())));
    }
    let mut rows = Vec::with_capacity(truths.len() + 1);
    for t in &truths {
        let name = stem(t);
        let r = recovered.join(format!("{name}.ply"));
        if !r.is_file() {
            return Err(Error::Missing(format!("recovered frame {}", r.display())));
        }
        let metrics = evaluate(&read_ply(&r)?.points, &read_ply(t)?.points).map_err(|e| Error::format(&r, e.to_string()))?;
        rows.push(EvalRow { frame: name, metrics });
    }
    let pooled = rows.iter().flat_map(|r| r.metrics.distances.iter().copied()).collect();
    rows.push(EvalRow {
        frame: "all".to_string(),
        metrics: metrics_of(pooled),
    });

    let csv_err = |path: &Path, e: csv::Error| Error::format(path, e.to_string());
    let mut w = csv::Writer::from_path(out).map_err(|e| csv_err(out, e))?;
    w.write_record(["frame", "rmse_mm", "mean_mm", "max_mm", "std_mm"]).map_err(|e| csv_err(out, e))?;
    for row in &rows {
        let m = &row.metrics;
        w.write_record([row.frame.clone(), m.rmse.to_string(), m.mean.to_string(), m.max.to_string(), m.std.to_string()])
            .map_err(|e| csv_err(out, e))?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;

    if let Some(dir) = distances {
        create_dir(dir)?;
        for row in rows.iter().filter(|r| r.frame != "all") {
            let path = dir.join(format!("{}.distances.csv", row.frame));
            let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
            w.write_record(["point", "distance_mm"]).map_err(|e| csv_err(&path, e))?;
            for (i, d) in row.metrics.distances.iter().enumerate() {
                w.write_record([i.to_string(), d.to_string()]).map_err(|e| csv_err(&path, e))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(rows)
}

/// Standalone inlier preselection. Failure and empty input both produce a
/// document with a warning rather than an error.
pub fn preselect(matches: &Path, config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<MatchDocument> {
    let cfg = load_config(config, seed)?;
    let input = read_matches(matches)?;
    let (weighted, warning) = if input.is_empty() {
        (input, Some("no matches in input".to_string()))
    } else {
        let (w, e) = with_threads(cfg.threads, || tracker::preselect(&input, &cfg.ransac))?;
        (w, e.map(|e| format!("preselection failed, all weights set to 0: {e}")))
    };
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    let doc = MatchDocument {
        matches: records(&weighted),
        warning,
    };
    write_json(out, &doc)?;
    Ok(doc)
}

/// Reads a per-frame timing sidecar.
pub fn read_timings(path: &Path) -> Result<PhaseTimings> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}
