use std::path::{Path, PathBuf};
use std::str::FromStr;

use acmm_core::{EngineConfig, FusionParams, MultiScaleParams};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}:{line}: expected `key = value`")]
    Syntax { path: PathBuf, line: usize },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value {value:?} for `{key}`: {reason}")]
    Value {
        key: String,
        value: String,
        reason: String,
    },
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Synthetic scene selection for the `synth` stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SceneKind {
    Plane,
    ThreePlanes,
    Band,
    Strip,
}

impl FromStr for SceneKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "plane" => Ok(Self::Plane),
            "three_planes" => Ok(Self::ThreePlanes),
            "band" => Ok(Self::Band),
            "strip" => Ok(Self::Strip),
            _ => Err("expected plane, three_planes, band or strip".into()),
        }
    }
}

impl SceneKind {
    fn name(self) -> &'static str {
        match self {
            Self::Plane => "plane",
            Self::ThreePlanes => "three_planes",
            Self::Band => "band",
            Self::Strip => "strip",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOptions {
    pub scene: SceneKind,
    pub width: usize,
    pub height: usize,
    pub views: usize,
    pub band_ratio: f64,
    pub strip_px: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            scene: SceneKind::ThreePlanes,
            width: 160,
            height: 120,
            views: 3,
            band_ratio: 0.3,
            strip_px: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Depth maps to evaluate instead of `<output>/maps`.
    pub maps: Option<PathBuf>,
    pub seed: u64,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
    pub dump_scales: bool,
    pub ascii: bool,
    pub max_src_views: Option<usize>,
    pub engine: EngineConfig,
    pub multiscale: MultiScaleParams,
    pub fusion: FusionParams,
    pub synth: SynthOptions,
    pub abs_thresholds: Vec<f64>,
    pub rel_thresholds: Vec<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: None,
            output: None,
            maps: None,
            seed: 0,
            threads: 0,
            dump_scales: false,
            ascii: false,
            max_src_views: None,
            engine: EngineConfig::default(),
            multiscale: MultiScaleParams::default(),
            fusion: FusionParams::default(),
            synth: SynthOptions::default(),
            abs_thresholds: vec![0.02, 0.1],
            rel_thresholds: vec![0.005, 0.01],
        }
    }
}

/// Every configuration key with its help text. Each one is also a
/// command-line flag (underscores become dashes).
pub const KEYS: &[(&str, &str)] = &[
    ("input", "Dataset directory with images/ and cams/"),
    ("output", "Output directory"),
    ("maps", "Depth map directory for eval (default <output>/maps)"),
    ("seed", "Random seed"),
    ("threads", "Worker threads (0 = one per core)"),
    ("dump_scales", "Write per-scale maps to <output>/scale_<l>/"),
    ("ascii", "Write ASCII instead of binary PLY"),
    ("max_src_views", "Cap on source views per image (0 = all)"),
    ("tau0", "Initial good matching cost threshold"),
    ("tau1", "Bad matching cost threshold"),
    ("alpha", "Decay constant of the good threshold"),
    ("beta", "Confidence bandwidth"),
    ("n1", "Good costs needed to select a view (strictly more than)"),
    ("n2", "Bad costs tolerated by a selected view (strictly fewer than)"),
    ("window_radius", "Matching window radius, pixels"),
    ("sigma_spatial", "Bilateral spatial sigma, pixels"),
    ("sigma_color", "Bilateral intensity sigma"),
    ("sparse_sampling", "Use every other row and column of the window"),
    ("iterations", "ACMH red-black sweeps"),
    ("top_k_init", "Per-view costs averaged at initialisation (0 = min(4, N-1))"),
    ("perturbation", "Initial relative perturbation for refinement"),
    ("k", "Number of scales"),
    ("eta", "Downsampling ratio between scales"),
    ("delta", "Reprojection error truncation, pixels"),
    ("lambda", "Weight of the geometric term"),
    ("xi", "Detail restorer threshold"),
    ("geom_passes", "Geometric consistency passes per scale"),
    ("coarse_iterations", "Sweeps of the coarsest photometric pass"),
    ("geometric_iterations", "Sweeps of each geometric pass"),
    ("restorer_iterations", "Sweeps of the restorer's photometric pass"),
    ("restorer", "Enable the detail restorer"),
    ("jacobi", "Run images of a geometric pass concurrently"),
    ("epsilon", "Fusion relative depth threshold"),
    ("theta", "Fusion normal angle threshold, degrees"),
    ("psi", "Fusion reprojection threshold, pixels"),
    ("min_consistent", "Consistent neighbours required by fusion"),
    ("scene", "Synthetic scene: plane, three_planes, band, strip"),
    ("width", "Synthetic image width"),
    ("height", "Synthetic image height"),
    ("views", "Synthetic camera count"),
    ("band_ratio", "Textureless band width ratio (band scene)"),
    ("strip_px", "Foreground strip width in pixels (strip scene)"),
    ("abs_thresholds", "Absolute depth error thresholds, comma separated"),
    ("rel_thresholds", "Relative depth error thresholds, comma separated"),
];

/// Keys that act as switches on the command line.
pub const BOOL_KEYS: &[&str] = &["dump_scales", "ascii", "sparse_sampling", "restorer", "jacobi"];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| ConfigError::Value {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse::<f64>(key, s))
        .collect()
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl PipelineConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let vs = &mut self.engine.view_selection;
        let ncc = &mut self.engine.ncc;
        let ms = &mut self.multiscale;
        let fu = &mut self.fusion;
        let sy = &mut self.synth;
        match key {
            "input" => self.input = Some(PathBuf::from(value)),
            "output" => self.output = Some(PathBuf::from(value)),
            "maps" => self.maps = Some(PathBuf::from(value)),
            "seed" => self.seed = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            "dump_scales" => self.dump_scales = parse(key, value)?,
            "ascii" => self.ascii = parse(key, value)?,
            "max_src_views" => {
                let v: usize = parse(key, value)?;
                self.max_src_views = (v > 0).then_some(v);
            }
            "tau0" => vs.tau0 = parse(key, value)?,
            "tau1" => vs.tau1 = parse(key, value)?,
            "alpha" => vs.alpha = parse(key, value)?,
            "beta" => vs.beta = parse(key, value)?,
            "n1" => vs.n1 = parse(key, value)?,
            "n2" => vs.n2 = parse(key, value)?,
            "window_radius" => ncc.window_radius = parse(key, value)?,
            "sigma_spatial" => ncc.sigma_spatial = parse(key, value)?,
            "sigma_color" => ncc.sigma_color = parse(key, value)?,
            "sparse_sampling" => ncc.sparse_sampling = parse(key, value)?,
            "iterations" => self.engine.iterations = parse(key, value)?,
            "top_k_init" => {
                let v: usize = parse(key, value)?;
                self.engine.top_k_init = (v > 0).then_some(v);
            }
            "perturbation" => self.engine.perturbation = parse(key, value)?,
            "k" => ms.k = parse(key, value)?,
            "eta" => ms.eta = parse(key, value)?,
            "delta" => ms.delta = parse(key, value)?,
            "lambda" => ms.lambda = parse(key, value)?,
            "xi" => ms.xi = parse(key, value)?,
            "geom_passes" => ms.geom_passes_per_scale = parse(key, value)?,
            "coarse_iterations" => ms.coarse_iterations = parse(key, value)?,
            "geometric_iterations" => ms.geometric_iterations = parse(key, value)?,
            "restorer_iterations" => ms.restorer_iterations = parse(key, value)?,
            "restorer" => ms.restorer = parse(key, value)?,
            "jacobi" => ms.jacobi = parse(key, value)?,
            "epsilon" => fu.epsilon = parse(key, value)?,
            "theta" => fu.theta_degrees = parse(key, value)?,
            "psi" => fu.psi = parse(key, value)?,
            "min_consistent" => fu.min_consistent = parse(key, value)?,
            "scene" => sy.scene = parse(key, value)?,
            "width" => sy.width = parse(key, value)?,
            "height" => sy.height = parse(key, value)?,
            "views" => sy.views = parse(key, value)?,
            "band_ratio" => sy.band_ratio = parse(key, value)?,
            "strip_px" => sy.strip_px = parse(key, value)?,
            "abs_thresholds" => self.abs_thresholds = parse_list(key, value)?,
            "rel_thresholds" => self.rel_thresholds = parse_list(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let vs = &self.engine.view_selection;
        let ncc = &self.engine.ncc;
        let ms = &self.multiscale;
        let fu = &self.fusion;
        let sy = &self.synth;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        Some(match key {
            "input" => path(&self.input),
            "output" => path(&self.output),
            "maps" => path(&self.maps),
            "seed" => self.seed.to_string(),
            "threads" => self.threads.to_string(),
            "dump_scales" => self.dump_scales.to_string(),
            "ascii" => self.ascii.to_string(),
            "max_src_views" => self.max_src_views.unwrap_or(0).to_string(),
            "tau0" => vs.tau0.to_string(),
            "tau1" => vs.tau1.to_string(),
            "alpha" => vs.alpha.to_string(),
            "beta" => vs.beta.to_string(),
            "n1" => vs.n1.to_string(),
            "n2" => vs.n2.to_string(),
            "window_radius" => ncc.window_radius.to_string(),
            "sigma_spatial" => ncc.sigma_spatial.to_string(),
            "sigma_color" => ncc.sigma_color.to_string(),
            "sparse_sampling" => ncc.sparse_sampling.to_string(),
            "iterations" => self.engine.iterations.to_string(),
            "top_k_init" => self.engine.top_k_init.unwrap_or(0).to_string(),
            "perturbation" => self.engine.perturbation.to_string(),
            "k" => ms.k.to_string(),
            "eta" => ms.eta.to_string(),
            "delta" => ms.delta.to_string(),
            "lambda" => ms.lambda.to_string(),
            "xi" => ms.xi.to_string(),
            "geom_passes" => ms.geom_passes_per_scale.to_string(),
            "coarse_iterations" => ms.coarse_iterations.to_string(),
            "geometric_iterations" => ms.geometric_iterations.to_string(),
            "restorer_iterations" => ms.restorer_iterations.to_string(),
            "restorer" => ms.restorer.to_string(),
            "jacobi" => ms.jacobi.to_string(),
            "epsilon" => fu.epsilon.to_string(),
            "theta" => fu.theta_degrees.to_string(),
            "psi" => fu.psi.to_string(),
            "min_consistent" => fu.min_consistent.to_string(),
            "scene" => sy.scene.name().to_string(),
            "width" => sy.width.to_string(),
            "height" => sy.height.to_string(),
            "views" => sy.views.to_string(),
            "band_ratio" => sy.band_ratio.to_string(),
            "strip_px" => sy.strip_px.to_string(),
            "abs_thresholds" => join(&self.abs_thresholds),
            "rel_thresholds" => join(&self.rel_thresholds),
            _ => return None,
        })
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_str(&mut self, text: &str, path: &Path) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    path: path.to_path_buf(),
                    line: i + 1,
                });
            };
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        self.apply_str(&text, path)
    }

    /// The effective configuration as `key = value` lines.
    pub fn dump(&self) -> String {
        KEYS.iter()
            .map(|(k, _)| format!("{k} = {}\n", self.get(k).unwrap_or_default()))
            .collect()
    }

    /// Engine settings with the pipeline seed applied.
    pub fn engine(&self) -> EngineConfig {
        EngineConfig {
            seed: self.seed,
            ..self.engine.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_round_trips() {
        let cfg = PipelineConfig::default();
        for (k, _) in KEYS {
            let v = cfg.get(k).unwrap_or_else(|| panic!("no getter for {k}"));
            if v.is_empty() {
                continue;
            }
            let mut other = PipelineConfig::default();
            other.set(k, &v).unwrap();
            assert_eq!(other, cfg, "{k}");
        }
    }

    #[test]
    fn defaults_match_published_settings() {
        let c = PipelineConfig::default();
        let vs = &c.engine.view_selection;
        assert_eq!((vs.tau0, vs.tau1, vs.alpha, vs.beta, vs.n1, vs.n2), (0.8, 1.2, 90.0, 0.3, 2, 3));
        let m = &c.multiscale;
        assert_eq!((m.k, m.eta, m.delta, m.lambda, m.xi), (3, 0.5, 3.0, 0.2, 0.1));
        let f = &c.fusion;
        assert_eq!((f.epsilon, f.theta_degrees, f.psi, f.min_consistent), (0.01, 30.0, 2.0, 2));
    }

    #[test]
    fn file_parsing() {
        let mut c = PipelineConfig::default();
        c.apply_str("# comment\n tau0 = 0.7 # trailing\n\nrestorer=false\n", Path::new("a.cfg"))
            .unwrap();
        assert_eq!(c.engine.view_selection.tau0, 0.7);
        assert!(!c.multiscale.restorer);
        assert!(matches!(
            c.apply_str("bogus = 1", Path::new("a.cfg")),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            c.apply_str("tau0", Path::new("a.cfg")),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(matches!(c.apply_str("k = x", Path::new("a.cfg")), Err(ConfigError::Value { .. })));
    }
}
