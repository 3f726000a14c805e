use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use acmm_core::engine::View;
use acmm_core::eval::DepthErrorReport;
use acmm_core::io::{self, Dataset};
use acmm_core::synth::SceneSpec;
use acmm_core::{
    depth_error, fuse, generate_scene, relative_depth_error, run_acmh_all, run_acmm, source_views, FusionView,
    HypothesisMap,
};

use crate::config::{ConfigError, PipelineConfig, SceneKind};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] acmm_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Acmh,
    Acmm,
    Fuse,
    Eval,
    All,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Acmh => "acmh",
            Stage::Acmm => "acmm",
            Stage::Fuse => "fuse",
            Stage::Eval => "eval",
            Stage::All => "all",
        }
    }
}

/// Files and directories created by a stage, removed again if it fails.
#[derive(Default)]
struct Outputs {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
}

impl Outputs {
    fn dir(&mut self, path: &Path) -> Result<()> {
        let mut missing = Vec::new();
        let mut p = Some(path);
        while let Some(d) = p {
            if d.as_os_str().is_empty() || d.exists() {
                break;
            }
            missing.push(d.to_path_buf());
            p = d.parent();
        }
        fs::create_dir_all(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.dirs.extend(missing.into_iter().rev());
        Ok(())
    }

    fn file(&mut self, path: PathBuf) -> PathBuf {
        self.files.push(path.clone());
        path
    }

    fn write(&mut self, path: PathBuf, contents: &str) -> Result<()> {
        let path = self.file(path);
        fs::write(&path, contents).map_err(|source| PipelineError::Io { path, source })
    }

    fn rollback(self) {
        for f in self.files.iter().rev() {
            let _ = fs::remove_file(f);
        }
        for d in self.dirs.iter().rev() {
            let _ = fs::remove_dir(d);
        }
    }
}

pub struct Pipeline {
    cfg: PipelineConfig,
    log: String,
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

fn scene_spec(cfg: &PipelineConfig) -> SceneSpec {
    let s = &cfg.synth;
    match s.scene {
        SceneKind::Plane => SceneSpec::textured_plane(s.width, s.height, s.views),
        SceneKind::ThreePlanes => SceneSpec::three_planes(s.width, s.height, s.views),
        SceneKind::Band => SceneSpec::textureless_band(s.width, s.height, s.views, s.band_ratio),
        SceneKind::Strip => SceneSpec::thin_strip(s.width, s.height, s.views, s.strip_px),
    }
}

fn save_maps(out: &mut Outputs, dir: &Path, names: &[String], maps: &[HypothesisMap]) -> Result<()> {
    out.dir(dir)?;
    for (name, m) in names.iter().zip(maps) {
        io::save_scalar(&out.file(io::depth_path(dir, name)), &m.depth)?;
        io::save_normal(&out.file(io::normal_path(dir, name)), &m.normal)?;
        io::save_scalar(&out.file(io::cost_path(dir, name)), &m.cost)?;
    }
    Ok(())
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Self {
        Self { cfg, log: String::new() }
    }

    fn output(&self) -> Result<PathBuf> {
        self.cfg
            .output
            .clone()
            .ok_or_else(|| PipelineError::Usage("--output is required".into()))
    }

    fn input(&self) -> Result<PathBuf> {
        self.cfg
            .input
            .clone()
            .ok_or_else(|| PipelineError::Usage("--input is required".into()))
    }

    fn record(&mut self, stage: &str, start: Instant) {
        let s = secs(start);
        log::info!("{stage} finished in {s:.2} s");
        let _ = writeln!(self.log, "stage {stage} seconds {s:.3}");
    }

    /// Runs `stage` inside the configured thread pool and writes `run.log`.
    pub fn run(&mut self, stage: Stage) -> Result<()> {
        let output = self.output()?;
        let pool = rayon::ThreadPoolBuilder::new().num_threads(self.cfg.threads).build()?;
        let _ = writeln!(self.log, "command {}\nthreads {}", stage.name(), pool.current_num_threads());
        self.log += &self.cfg.dump();
        let start = Instant::now();
        let result = pool.install(|| self.dispatch(stage, &output));
        self.record("total", start);
        if let Err(e) = &result {
            let _ = writeln!(self.log, "error {e}");
        }
        if output.is_dir() {
            let path = output.join("run.log");
            fs::write(&path, &self.log).map_err(|source| PipelineError::Io { path, source })?;
        }
        result
    }

    fn dispatch(&mut self, stage: Stage, output: &Path) -> Result<()> {
        match stage {
            Stage::Synth => self.guarded(|p, out| p.synth(out, output)),
            Stage::Acmh => {
                let input = self.input()?;
                self.guarded(|p, out| p.estimate(out, &input, output, false))
            }
            Stage::Acmm => {
                let input = self.input()?;
                self.guarded(|p, out| p.estimate(out, &input, output, true))
            }
            Stage::Fuse => {
                let input = self.input()?;
                self.guarded(|p, out| p.fuse(out, &input, output))
            }
            Stage::Eval => {
                let input = self.input()?;
                self.guarded(|p, out| p.eval(out, &input, output))
            }
            Stage::All => {
                let input = match self.cfg.input.clone() {
                    Some(i) => i,
                    None => {
                        let scene = output.join("scene");
                        self.guarded(|p, out| p.synth(out, &scene))?;
                        scene
                    }
                };
                self.guarded(|p, out| p.estimate(out, &input, output, true))?;
                self.guarded(|p, out| p.fuse(out, &input, output))?;
                if input.join("gt").is_dir() {
                    self.guarded(|p, out| p.eval(out, &input, output))?;
                }
                Ok(())
            }
        }
    }

    fn guarded(&mut self, f: impl FnOnce(&mut Self, &mut Outputs) -> Result<()>) -> Result<()> {
        let mut out = Outputs::default();
        let r = f(self, &mut out);
        if r.is_err() {
            out.rollback();
        }
        r
    }

    fn synth(&mut self, out: &mut Outputs, dir: &Path) -> Result<()> {
        let start = Instant::now();
        let spec = scene_spec(&self.cfg);
        let scene = generate_scene(&spec, self.cfg.seed)?;
        out.dir(dir)?;
        for sub in ["images", "cams", "gt"] {
            out.dir(&dir.join(sub))?;
        }
        for v in &scene.views {
            out.file(dir.join("images").join(format!("{}.pgm", v.name)));
            out.file(dir.join("cams").join(format!("{}.txt", v.name)));
            out.file(io::depth_path(&dir.join("gt"), &v.name));
            out.file(io::normal_path(&dir.join("gt"), &v.name));
        }
        out.file(dir.join("scene.json"));
        io::save_scene(dir, &scene)?;
        self.record("synth", start);
        Ok(())
    }

    fn load(&mut self, input: &Path) -> Result<(Dataset, Vec<Vec<usize>>)> {
        let start = Instant::now();
        let ds = io::load_dataset(input)?;
        if ds.len() < 2 {
            return Err(PipelineError::Usage(format!(
                "{}: at least two images are required",
                input.display()
            )));
        }
        let sources = source_views(&ds.cameras, self.cfg.max_src_views);
        self.record("load", start);
        Ok((ds, sources))
    }

    fn estimate(&mut self, out: &mut Outputs, input: &Path, output: &Path, multiscale: bool) -> Result<()> {
        let (ds, sources) = self.load(input)?;
        let engine = self.cfg.engine();
        let start = Instant::now();
        let maps = if multiscale {
            let dump = self.cfg.dump_scales;
            let names = ds.names.clone();
            let mut dumped = Outputs::default();
            let mut dump_err = None;
            let mut cb = |l: usize, maps: &[HypothesisMap]| -> acmm_core::Result<()> {
                if dump {
                    if let Err(e) = save_maps(&mut dumped, &output.join(format!("scale_{l}")), &names, maps) {
                        let msg = e.to_string();
                        dump_err = Some(e);
                        return Err(acmm_core::Error::InvalidParameter(msg));
                    }
                }
                Ok(())
            };
            let res = run_acmm(
                &ds.images,
                &ds.cameras,
                &sources,
                &engine,
                &self.cfg.multiscale,
                Some(&mut cb),
            );
            out.files.append(&mut dumped.files);
            out.dirs.append(&mut dumped.dirs);
            if let Some(e) = dump_err {
                return Err(e);
            }
            res?.maps
        } else {
            let views: Vec<View> = ds.images.iter().zip(&ds.cameras).map(|(i, c)| View::new(i, c)).collect();
            run_acmh_all(&views, &sources, &engine)?
        };
        self.record(if multiscale { "acmm" } else { "acmh" }, start);
        save_maps(out, &output.join("maps"), &ds.names, &maps)
    }

    fn fuse(&mut self, out: &mut Outputs, input: &Path, output: &Path) -> Result<()> {
        let (ds, _) = self.load(input)?;
        let maps_dir = self.cfg.maps.clone().unwrap_or_else(|| output.join("maps"));
        let start = Instant::now();
        let mut depths = Vec::with_capacity(ds.len());
        let mut normals = Vec::with_capacity(ds.len());
        for name in &ds.names {
            depths.push(io::load_scalar(&io::depth_path(&maps_dir, name))?);
            normals.push(io::load_normal(&io::normal_path(&maps_dir, name))?);
        }
        let views: Vec<FusionView> = (0..ds.len())
            .map(|i| FusionView {
                camera: &ds.cameras[i],
                depth: &depths[i],
                normal: &normals[i],
                image: Some(&ds.images[i]),
            })
            .collect();
        let fused = fuse(&views, &self.cfg.fusion)?;
        log::info!("fused {} points", fused.cloud.len());
        let _ = writeln!(self.log, "points {}", fused.cloud.len());
        out.dir(output)?;
        let path = out.file(output.join("fused.ply"));
        acmm_core::fusion::save_ply(&fused.cloud, &path, self.cfg.ascii)?;
        self.record("fuse", start);
        Ok(())
    }

    fn eval(&mut self, out: &mut Outputs, input: &Path, output: &Path) -> Result<()> {
        let gt_dir = input.join("gt");
        if !gt_dir.is_dir() {
            return Err(PipelineError::Usage(format!(
                "{}: no ground truth directory",
                gt_dir.display()
            )));
        }
        let names = match io::load_manifest(input) {
            Ok(m) => m.names,
            Err(_) => io::load_dataset(input)?.names,
        };
        let maps_dir = self.cfg.maps.clone().unwrap_or_else(|| output.join("maps"));
        let start = Instant::now();
        let mut txt = String::new();
        let mut csv = String::from("image,metric,threshold,fraction,evaluated,mean_abs_error\n");
        let mut all: Vec<(&str, Vec<DepthErrorReport>)> = vec![("absolute", Vec::new()), ("relative", Vec::new())];
        for name in &names {
            let gt = io::load_scalar(&io::depth_path(&gt_dir, name))?;
            let est = io::load_scalar(&io::depth_path(&maps_dir, name))?;
            let reports = [
                depth_error(&est, &gt, &self.cfg.abs_thresholds)?,
                relative_depth_error(&est, &gt, None, &self.cfg.rel_thresholds)?,
            ];
            for (r, slot) in reports.into_iter().zip(all.iter_mut()) {
                push_report(&mut txt, &mut csv, name, slot.0, &r);
                slot.1.push(r);
            }
        }
        for (metric, reports) in &all {
            if let Some(pooled) = pool_reports(reports) {
                push_report(&mut txt, &mut csv, "all", metric, &pooled);
            }
        }
        out.dir(output)?;
        out.write(output.join("eval.txt"), &txt)?;
        out.write(output.join("eval.csv"), &csv)?;
        self.record("eval", start);
        Ok(())
    }
}

fn push_report(txt: &mut String, csv: &mut String, image: &str, metric: &str, r: &DepthErrorReport) {
    let _ = writeln!(txt, "{image}.{metric}.evaluated = {}", r.evaluated);
    let _ = writeln!(txt, "{image}.{metric}.mean_abs_error = {}", r.mean_abs_error);
    for (t, f) in r.thresholds.iter().zip(&r.fractions) {
        let _ = writeln!(txt, "{image}.{metric}.fraction_below_{t} = {f}");
        let _ = writeln!(csv, "{image},{metric},{t},{f},{},{}", r.evaluated, r.mean_abs_error);
    }
}

/// Pixel-weighted combination of per-image reports.
fn pool_reports(reports: &[DepthErrorReport]) -> Option<DepthErrorReport> {
    let first = reports.first()?;
    let total: usize = reports.iter().map(|r| r.evaluated).sum();
    let w = |r: &DepthErrorReport| r.evaluated as f64 / total.max(1) as f64;
    Some(DepthErrorReport {
        thresholds: first.thresholds.clone(),
        fractions: (0..first.thresholds.len())
            .map(|i| reports.iter().map(|r| w(r) * r.fractions[i]).sum())
            .collect(),
        mean_abs_error: reports.iter().map(|r| w(r) * r.mean_abs_error).sum(),
        evaluated: total,
        relative: first.relative,
    })
}
