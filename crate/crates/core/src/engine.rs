//! PatchMatch driver with adaptive checkerboard propagation and joint view
//! selection.
//!
//! One sweep updates all red pixels against a frozen snapshot of the black
//! ones, then the reverse. Each pixel update scores eight propagated
//! candidates plus its incumbent with shared view weights, adopts the best,
//! and refines it with random and perturbed depths and normals. All
//! randomness comes from per-pixel counter-keyed streams, so results do not
//! depend on the thread count.

use nalgebra::{Rotation3, Unit, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{reprojection_error, CameraModel, Hypothesis, ViewPair};
use crate::grid::{is_valid_depth, DepthGrid, Grid, NormalGrid};
use crate::imaging::{hypothesis_cost, median_filter_5x5, GrayImage, NccParams, RefWindow, MAX_COST};
use crate::sampler::{sample_sources, CheckerboardPhase, NUM_REGIONS};
use crate::viewsel::{
    aggregate_row, aggregate_row_geometric, fallback_weights, select_views, CostMatrix,
    ViewSelectionParams,
};

/// RNG stage used for random initialisation; sweeps use their index.
pub const INIT_STAGE: u64 = u64::MAX;

/// An image together with its (possibly scaled) camera.
#[derive(Clone, Copy, Debug)]
pub struct View<'a> {
    pub image: &'a GrayImage,
    pub camera: &'a CameraModel,
}

impl<'a> View<'a> {
    pub fn new(image: &'a GrayImage, camera: &'a CameraModel) -> Self {
        Self { image, camera }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeometricParams {
    /// Weight of the reprojection term.
    pub lambda: f64,
    /// Reprojection error truncation, pixels.
    pub delta: f64,
}

impl Default for GeometricParams {
    fn default() -> Self {
        Self {
            lambda: 0.2,
            delta: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EngineConfig {
    /// Red-black sweeps per run.
    pub iterations: usize,
    /// Number of smallest per-view costs averaged at initialisation;
    /// `None` means `min(4, N - 1)`.
    pub top_k_init: Option<usize>,
    pub seed: u64,
    /// Enables the geometric consistency term.
    pub geometric: Option<GeometricParams>,
    pub view_selection: ViewSelectionParams,
    pub ncc: NccParams,
    /// Initial relative perturbation, halved after every sweep.
    pub perturbation: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            iterations: 6,
            top_k_init: None,
            seed: 0,
            geometric: None,
            view_selection: ViewSelectionParams::default(),
            ncc: NccParams::default(),
            perturbation: 0.25,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self, num_sources: usize) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::InvalidParameter("iterations must be >= 1".into()));
        }
        if num_sources < 1 {
            return Err(Error::InvalidParameter("need at least one source view".into()));
        }
        if let Some(k) = self.top_k_init {
            if k < 1 || k > num_sources {
                return Err(Error::InvalidParameter(format!(
                    "top_k_init {k} must lie in 1..={num_sources}"
                )));
            }
        }
        if !(self.perturbation > 0.0 && self.perturbation <= 1.0) {
            return Err(Error::InvalidParameter("perturbation must lie in (0, 1]".into()));
        }
        if let Some(g) = &self.geometric {
            if !(g.lambda >= 0.0 && g.delta > 0.0) {
                return Err(Error::InvalidParameter("need lambda >= 0 and delta > 0".into()));
            }
        }
        self.view_selection.validate()?;
        self.ncc.validate()
    }

    pub fn top_k(&self, num_sources: usize) -> usize {
        self.top_k_init.unwrap_or(4).min(num_sources)
    }
}

/// Per-pixel depth, normal, aggregated cost and best view of one image.
#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisMap {
    pub depth: DepthGrid,
    pub normal: NormalGrid,
    pub cost: Grid<f64>,
    pub best_view: Grid<Option<usize>>,
}

impl HypothesisMap {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            depth: DepthGrid::new(width, height, 0.0),
            normal: NormalGrid::new(width, height, Vector3::new(0.0, 0.0, -1.0)),
            cost: Grid::new(width, height, MAX_COST),
            best_view: Grid::new(width, height, None),
        }
    }

    pub fn from_grids(depth: DepthGrid, normal: NormalGrid) -> Result<Self> {
        normal.ensure_dims(depth.dims())?;
        let (w, h) = depth.dims();
        Ok(Self {
            depth,
            normal,
            cost: Grid::new(w, h, MAX_COST),
            best_view: Grid::new(w, h, None),
        })
    }

    pub fn width(&self) -> usize {
        self.depth.width()
    }

    pub fn height(&self) -> usize {
        self.depth.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.depth.dims()
    }

    pub fn hypothesis(&self, x: usize, y: usize) -> Hypothesis {
        Hypothesis::new(self.depth.at(x, y), *self.normal.get(x, y))
    }

    pub fn set_hypothesis(&mut self, x: usize, y: usize, h: &Hypothesis) {
        self.depth.set(x, y, h.depth);
        self.normal.set(x, y, h.normal);
    }
}

/// Result of updating one pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelUpdate {
    pub hypothesis: Hypothesis,
    pub cost: f64,
    /// Aggregated cost of the incumbent under this update's view weights.
    pub incumbent_cost: f64,
    pub best_view: Option<usize>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with a list of stream identifiers.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Random stream for pixel `(x, y)` at `stage` (sweep index or
/// [`INIT_STAGE`]).
pub fn pixel_rng(seed: u64, stage: u64, x: usize, y: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[stage, x as u64, y as u64]))
}

fn orthonormal_basis(a: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if a.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let u = a.cross(&helper).normalize();
    let v = a.cross(&u);
    (u, v)
}

/// Cosine-weighted random normal in the hemisphere facing the camera along
/// `ray`.
pub fn random_normal<R: Rng>(rng: &mut R, ray: &Vector3<f64>) -> Vector3<f64> {
    let axis = -ray.normalize();
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let r = u1.sqrt();
    let phi = std::f64::consts::TAU * u2;
    let up = (1.0 - u1).sqrt().max(1e-6);
    let (bu, bv) = orthonormal_basis(&axis);
    (bu * (r * phi.cos()) + bv * (r * phi.sin()) + axis * up).normalize()
}

/// Uniform depth in the camera range and a cosine-weighted facing normal.
pub fn random_hypothesis<R: Rng>(rng: &mut R, cam: &CameraModel, pixel: &Vector2<f64>) -> Hypothesis {
    let depth = rng.random_range(cam.depth_min()..=cam.depth_max());
    let normal = random_normal(rng, &cam.ray(pixel));
    Hypothesis::new(depth, normal)
}

/// Scales the depth by `U[1 - rho, 1 + rho]` (clamped to the range) and
/// rotates the normal about a random axis by up to `rho * 90` degrees. A
/// rotated normal that no longer faces the camera is discarded.
pub fn perturb_hypothesis<R: Rng>(
    rng: &mut R,
    cam: &CameraModel,
    pixel: &Vector2<f64>,
    h: &Hypothesis,
    rho: f64,
) -> Hypothesis {
    let factor: f64 = rng.random_range(1.0 - rho..=1.0 + rho);
    let depth = cam.clamp_depth(h.depth * factor);
    let axis = Vector3::new(
        rng.random_range(-1.0..=1.0),
        rng.random_range(-1.0..=1.0),
        rng.random_range(-1.0..=1.0),
    );
    let angle: f64 = rng.random_range(0.0..=rho * std::f64::consts::FRAC_PI_2);
    let normal = match Unit::try_new(axis, 1e-9) {
        Some(axis) => {
            let n = (Rotation3::from_axis_angle(&axis, angle) * h.normal).normalize();
            if n.dot(&cam.ray(pixel)) < 0.0 {
                n
            } else {
                h.normal
            }
        }
        None => h.normal,
    };
    Hypothesis::new(depth, normal)
}

/// A reference view, its sources and the run configuration, with per-pair
/// geometry precomputed.
pub struct AcmhContext<'a> {
    reference: View<'a>,
    sources: Vec<View<'a>>,
    pairs: Vec<ViewPair>,
    source_depths: Option<Vec<&'a DepthGrid>>,
    cfg: &'a EngineConfig,
    top_k: usize,
}

impl<'a> AcmhContext<'a> {
    pub fn new(
        reference: View<'a>,
        sources: &[View<'a>],
        cfg: &'a EngineConfig,
        source_depths: Option<&[&'a DepthGrid]>,
    ) -> Result<Self> {
        cfg.validate(sources.len())?;
        let ref_dims = reference.camera.dims();
        if reference.image.dims() != ref_dims {
            return Err(Error::DimensionMismatch {
                expected: ref_dims,
                found: reference.image.dims(),
            });
        }
        for s in sources {
            if s.image.dims() != s.camera.dims() {
                return Err(Error::DimensionMismatch {
                    expected: s.camera.dims(),
                    found: s.image.dims(),
                });
            }
        }
        let source_depths = match (&cfg.geometric, source_depths) {
            (Some(_), None) => {
                return Err(Error::InvalidParameter(
                    "geometric mode requires source depth maps".into(),
                ))
            }
            (Some(_), Some(d)) => {
                if d.len() != sources.len() {
                    return Err(Error::InvalidParameter(format!(
                        "{} source depth maps for {} sources",
                        d.len(),
                        sources.len()
                    )));
                }
                for (dm, s) in d.iter().zip(sources) {
                    dm.ensure_dims(s.camera.dims())?;
                }
                Some(d.to_vec())
            }
            (None, _) => None,
        };
        let pairs = sources
            .iter()
            .map(|s| ViewPair::new(reference.camera, s.camera))
            .collect();
        Ok(Self {
            reference,
            sources: sources.to_vec(),
            pairs,
            source_depths,
            top_k: cfg.top_k(sources.len()),
            cfg,
        })
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn camera(&self) -> &CameraModel {
        self.reference.camera
    }

    pub fn config(&self) -> &EngineConfig {
        self.cfg
    }

    pub fn window(&self, x: usize, y: usize) -> Option<RefWindow> {
        RefWindow::new(self.reference.image, x, y, &self.cfg.ncc)
    }

    /// Per-view photometric costs of `h` at `(x, y)`.
    pub fn cost_row(&self, window: Option<&RefWindow>, x: usize, y: usize, h: &Hypothesis, out: &mut [f64]) {
        match window {
            Some(win) => {
                for (j, slot) in out.iter_mut().enumerate() {
                    *slot = hypothesis_cost(win, &self.pairs[j], self.sources[j].image, (x, y), h);
                }
            }
            None => out.fill(MAX_COST),
        }
    }

    /// Per-view truncated reprojection errors at depth `depth`; zeros in
    /// photometric mode.
    pub fn error_row(&self, x: usize, y: usize, depth: f64, out: &mut [f64]) {
        match (&self.cfg.geometric, &self.source_depths) {
            (Some(g), Some(depths)) => {
                let p = Vector2::new(x as f64, y as f64);
                for (j, slot) in out.iter_mut().enumerate() {
                    *slot = reprojection_error(
                        self.reference.camera,
                        self.sources[j].camera,
                        &p,
                        depth,
                        depths[j],
                        g.delta,
                    );
                }
            }
            _ => out.fill(0.0),
        }
    }

    /// Aggregated cost with the given view weights.
    #[inline]
    pub fn score(&self, costs: &[f64], errors: &[f64], weights: &[f64]) -> f64 {
        match &self.cfg.geometric {
            Some(g) => aggregate_row_geometric(costs, errors, weights, g.lambda),
            None => aggregate_row(costs, weights),
        }
    }

    /// Mean of the `K` smallest per-view costs (plus the weighted
    /// reprojection error in geometric mode).
    pub fn initial_cost(&self, window: Option<&RefWindow>, x: usize, y: usize, h: &Hypothesis) -> f64 {
        let n = self.num_sources();
        let mut costs = vec![0.0; n];
        let mut errors = vec![0.0; n];
        self.cost_row(window, x, y, h, &mut costs);
        self.error_row(x, y, h.depth, &mut errors);
        if let Some(g) = &self.cfg.geometric {
            for (c, e) in costs.iter_mut().zip(&errors) {
                *c += g.lambda * e;
            }
        }
        costs.sort_by(f64::total_cmp);
        costs[..self.top_k].iter().sum::<f64>() / self.top_k as f64
    }

    /// Hypothesis propagated from `(sx, sy)` to `(x, y)`: same plane, depth
    /// re-intersected along the target ray. Falls back to the source depth
    /// (clamped) when the plane misses the target ray inside the depth range.
    pub fn propagate(&self, map: &HypothesisMap, sx: usize, sy: usize, x: usize, y: usize) -> Hypothesis {
        let cam = self.reference.camera;
        let src = map.hypothesis(sx, sy);
        let from = Vector2::new(sx as f64, sy as f64);
        let to = Vector2::new(x as f64, y as f64);
        let depth = match src.transfer_depth(cam, &from, &to) {
            Some(d) if d >= cam.depth_min() && d <= cam.depth_max() => d,
            _ => cam.clamp_depth(src.depth),
        };
        Hypothesis::new(depth, src.normal)
    }

    /// Refinement: every combination of the current, a random and a
    /// perturbed depth with the current, random and perturbed normal, scored
    /// with `weights`. The incumbent competes with `current_cost`.
    #[allow(clippy::too_many_arguments)]
    pub fn refine(
        &self,
        window: Option<&RefWindow>,
        x: usize,
        y: usize,
        current: &Hypothesis,
        current_cost: f64,
        weights: &[f64],
        rng: &mut ChaCha8Rng,
        rho: f64,
    ) -> (Hypothesis, f64) {
        let cam = self.reference.camera;
        let p = Vector2::new(x as f64, y as f64);
        let random = random_hypothesis(rng, cam, &p);
        let perturbed = perturb_hypothesis(rng, cam, &p, current, rho);
        let depths = [current.depth, random.depth, perturbed.depth];
        let normals = [current.normal, random.normal, perturbed.normal];
        let n = self.num_sources();
        let mut errors = vec![0.0; 3 * n];
        for (di, &d) in depths.iter().enumerate() {
            self.error_row(x, y, d, &mut errors[di * n..(di + 1) * n]);
        }
        let mut costs = vec![0.0; n];
        let mut best = (*current, current_cost);
        for (di, &d) in depths.iter().enumerate() {
            for (ni, nrm) in normals.iter().enumerate() {
                if di == 0 && ni == 0 {
                    continue;
                }
                let h = Hypothesis::new(d, *nrm);
                self.cost_row(window, x, y, &h, &mut costs);
                let s = self.score(&costs, &errors[di * n..(di + 1) * n], weights);
                if s < best.1 {
                    best = (h, s);
                }
            }
        }
        best
    }

    /// Propagation, view selection and refinement for one pixel during sweep
    /// `t`. Reads only the opposite colour and the pixel's own state.
    pub fn update_pixel(&self, map: &HypothesisMap, x: usize, y: usize, t: usize) -> PixelUpdate {
        let n = self.num_sources();
        let window = self.window(x, y);
        let win = window.as_ref();
        let sources = sample_sources(x, y, &map.cost);
        let candidates: [Hypothesis; NUM_REGIONS] =
            sources.map(|(sx, sy)| self.propagate(map, sx, sy, x, y));

        let mut m = CostMatrix::new(NUM_REGIONS, n);
        let mut e = CostMatrix::new(NUM_REGIONS, n);
        for (i, h) in candidates.iter().enumerate() {
            self.cost_row(win, x, y, h, m.row_mut(i));
            self.error_row(x, y, h.depth, e.row_mut(i));
        }
        let incumbent = map.hypothesis(x, y);
        let mut inc_costs = vec![0.0; n];
        let mut inc_errors = vec![0.0; n];
        self.cost_row(win, x, y, &incumbent, &mut inc_costs);
        self.error_row(x, y, incumbent.depth, &mut inc_errors);

        let state = select_views(&m, t, *map.best_view.get(x, y), &self.cfg.view_selection);
        let weights = if state.total_weight() > 0.0 {
            state.weights.clone()
        } else {
            fallback_weights(&m)
        };

        let incumbent_cost = self.score(&inc_costs, &inc_errors, &weights);
        let mut best = (incumbent, incumbent_cost);
        for (i, h) in candidates.iter().enumerate() {
            let s = self.score(m.row(i), e.row(i), &weights);
            if s < best.1 {
                best = (*h, s);
            }
        }

        let mut rng = pixel_rng(self.cfg.seed, t as u64, x, y);
        let rho = self.cfg.perturbation * 0.5f64.powi(t as i32);
        let (hypothesis, cost) = self.refine(win, x, y, &best.0, best.1, &weights, &mut rng, rho);
        PixelUpdate {
            hypothesis,
            cost,
            incumbent_cost,
            best_view: state.best_view,
        }
    }

    /// Updates every pixel of `phase` against a snapshot of the other colour.
    pub fn half_sweep(&self, map: &mut HypothesisMap, t: usize, phase: CheckerboardPhase) {
        let (w, h) = map.dims();
        let snapshot: &HypothesisMap = map;
        let updates: Vec<Vec<(usize, PixelUpdate)>> = (0..h)
            .into_par_iter()
            .map(|y| {
                let start = if phase.contains(0, y) { 0 } else { 1 };
                (start..w)
                    .step_by(2)
                    .map(|x| (x, self.update_pixel(snapshot, x, y, t)))
                    .collect()
            })
            .collect();
        for (y, row) in updates.into_iter().enumerate() {
            for (x, u) in row {
                map.set_hypothesis(x, y, &u.hypothesis);
                map.cost.set(x, y, u.cost);
                map.best_view.set(x, y, u.best_view);
            }
        }
    }

    /// One full red-black sweep.
    pub fn sweep(&self, map: &mut HypothesisMap, t: usize) {
        self.half_sweep(map, t, CheckerboardPhase::Red);
        self.half_sweep(map, t, CheckerboardPhase::Black);
    }

    /// Random hypotheses with top-K initial costs.
    pub fn random_init(&self) -> HypothesisMap {
        let cam = self.reference.camera;
        let (w, h) = cam.dims();
        let rows: Vec<Vec<(Hypothesis, f64)>> = (0..h)
            .into_par_iter()
            .map(|y| {
                (0..w)
                    .map(|x| {
                        let mut rng = pixel_rng(self.cfg.seed, INIT_STAGE, x, y);
                        let hyp = random_hypothesis(&mut rng, cam, &Vector2::new(x as f64, y as f64));
                        let win = self.window(x, y);
                        (hyp, self.initial_cost(win.as_ref(), x, y, &hyp))
                    })
                    .collect()
            })
            .collect();
        self.collect_map(w, h, rows)
    }

    /// Starts from an existing map: depths clamped into range, invalid or
    /// back-facing normals replaced by the fronto-parallel normal, costs
    /// recomputed and best views cleared.
    pub fn init_from(&self, init: &HypothesisMap) -> Result<HypothesisMap> {
        let cam = self.reference.camera;
        init.depth.ensure_dims(cam.dims())?;
        let (w, h) = cam.dims();
        let mid = 0.5 * (cam.depth_min() + cam.depth_max());
        let rows: Vec<Vec<(Hypothesis, f64)>> = (0..h)
            .into_par_iter()
            .map(|y| {
                (0..w)
                    .map(|x| {
                        let p = Vector2::new(x as f64, y as f64);
                        let src = init.hypothesis(x, y);
                        let depth = if is_valid_depth(src.depth) {
                            cam.clamp_depth(src.depth)
                        } else {
                            mid
                        };
                        let ray = cam.ray(&p);
                        let normal = match src.normal.try_normalize(1e-12) {
                            Some(n) if n.dot(&ray) < 0.0 => n,
                            _ => -ray.normalize(),
                        };
                        let hyp = Hypothesis::new(depth, normal);
                        let win = self.window(x, y);
                        (hyp, self.initial_cost(win.as_ref(), x, y, &hyp))
                    })
                    .collect()
            })
            .collect();
        Ok(self.collect_map(w, h, rows))
    }

    fn collect_map(&self, w: usize, h: usize, rows: Vec<Vec<(Hypothesis, f64)>>) -> HypothesisMap {
        let mut map = HypothesisMap::new(w, h);
        for (y, row) in rows.into_iter().enumerate() {
            for (x, (hyp, c)) in row.into_iter().enumerate() {
                map.set_hypothesis(x, y, &hyp);
                map.cost.set(x, y, c);
            }
        }
        map
    }

    /// Full run: initialise, sweep, then median-filter the depths.
    pub fn run(&self, init: Option<&HypothesisMap>) -> Result<HypothesisMap> {
        let mut map = match init {
            Some(m) => self.init_from(m)?,
            None => self.random_init(),
        };
        for t in 0..self.cfg.iterations {
            self.sweep(&mut map, t);
            if log::log_enabled!(log::Level::Debug) {
                let mean = map.cost.data().iter().sum::<f64>() / map.cost.data().len() as f64;
                log::debug!("sweep {t}: mean aggregated cost {mean:.4}");
            }
        }
        map.depth = median_filter_5x5(&map.depth);
        Ok(map)
    }
}

/// Random initialisation of the reference view.
pub fn random_init(reference: View<'_>, sources: &[View<'_>], cfg: &EngineConfig) -> Result<HypothesisMap> {
    if cfg.geometric.is_some() {
        return Err(Error::InvalidParameter(
            "random_init is photometric; use run_acmh for geometric runs".into(),
        ));
    }
    Ok(AcmhContext::new(reference, sources, cfg, None)?.random_init())
}

/// Estimates the reference depth/normal map. Geometric mode (set in `cfg`)
/// requires one depth map per source view.
pub fn run_acmh(
    reference: View<'_>,
    sources: &[View<'_>],
    cfg: &EngineConfig,
    init: Option<&HypothesisMap>,
    source_depths: Option<&[&DepthGrid]>,
) -> Result<HypothesisMap> {
    AcmhContext::new(reference, sources, cfg, source_depths)?.run(init)
}

/// Source views per image: every other image, or the `max` closest camera
/// centres (lowest index on ties) when capped.
pub fn source_views(cameras: &[CameraModel], max: Option<usize>) -> Vec<Vec<usize>> {
    (0..cameras.len())
        .map(|i| {
            let ci = cameras[i].center();
            let mut others: Vec<usize> = (0..cameras.len()).filter(|&j| j != i).collect();
            if let Some(max) = max {
                others.sort_by(|&a, &b| {
                    let da = (cameras[a].center() - ci).norm();
                    let db = (cameras[b].center() - ci).norm();
                    da.total_cmp(&db).then(a.cmp(&b))
                });
                others.truncate(max.max(1));
                others.sort_unstable();
            }
            others
        })
        .collect()
}

/// Seed of run `run` (an arbitrary tag) for image `image`.
pub fn run_seed(seed: u64, run: &[u64], image: usize) -> u64 {
    let mut parts = run.to_vec();
    parts.push(image as u64);
    derive_seed(seed, &parts)
}

/// Photometric ACMH for every image against its source views.
pub fn run_acmh_all(views: &[View<'_>], sources: &[Vec<usize>], cfg: &EngineConfig) -> Result<Vec<HypothesisMap>> {
    if sources.len() != views.len() {
        return Err(Error::InvalidParameter("one source list per view required".into()));
    }
    views
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let srcs: Vec<View> = sources[i].iter().map(|&j| views[j]).collect();
            let cfg = EngineConfig {
                seed: run_seed(cfg.seed, &[0], i),
                geometric: None,
                ..cfg.clone()
            };
            log::info!("acmh: image {i} with {} sources", srcs.len());
            run_acmh(*v, &srcs, &cfg, None, None)
        })
        .collect()
}
