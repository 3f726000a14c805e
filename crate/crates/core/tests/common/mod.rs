#![allow(dead_code)]

use acmm_core::engine::{perturb_hypothesis, pixel_rng, random_hypothesis, HypothesisMap};
use acmm_core::geometry::{reprojection_error, CameraModel, Hypothesis};
use acmm_core::grid::{DepthGrid, Grid};
use acmm_core::imaging::{matching_cost, GrayImage};
use acmm_core::sampler::{sample_sources, CheckerboardPhase};
use acmm_core::synth::SyntheticScene;
use acmm_core::viewsel::{aggregate_row, aggregate_row_geometric, fallback_weights, select_views, CostMatrix};
use acmm_core::EngineConfig;
use nalgebra::Vector2;

/// Everything a straight-line sweep needs, kept apart from the engine.
pub struct OracleInput<'a> {
    pub ref_img: &'a GrayImage,
    pub ref_cam: &'a CameraModel,
    pub src_imgs: Vec<&'a GrayImage>,
    pub src_cams: Vec<&'a CameraModel>,
    pub src_depths: Option<Vec<&'a DepthGrid>>,
    pub cfg: &'a EngineConfig,
}

impl OracleInput<'_> {
    fn costs(&self, x: usize, y: usize, h: &Hypothesis) -> Vec<f64> {
        (0..self.src_imgs.len())
            .map(|j| {
                matching_cost(
                    self.ref_img,
                    self.src_imgs[j],
                    self.ref_cam,
                    self.src_cams[j],
                    (x, y),
                    h,
                    &self.cfg.ncc,
                )
            })
            .collect()
    }

    fn errors(&self, x: usize, y: usize, depth: f64) -> Vec<f64> {
        let n = self.src_imgs.len();
        match (&self.cfg.geometric, &self.src_depths) {
            (Some(g), Some(ds)) => (0..n)
                .map(|j| {
                    reprojection_error(
                        self.ref_cam,
                        self.src_cams[j],
                        &Vector2::new(x as f64, y as f64),
                        depth,
                        ds[j],
                        g.delta,
                    )
                })
                .collect(),
            _ => vec![0.0; n],
        }
    }

    fn score(&self, costs: &[f64], errors: &[f64], weights: &[f64]) -> f64 {
        match &self.cfg.geometric {
            Some(g) => aggregate_row_geometric(costs, errors, weights, g.lambda),
            None => aggregate_row(costs, weights),
        }
    }

    fn pixel(&self, snap: &HypothesisMap, x: usize, y: usize, t: usize) -> (Hypothesis, f64, Option<usize>) {
        let cam = self.ref_cam;
        let to = Vector2::new(x as f64, y as f64);
        let mut cands = Vec::new();
        for (sx, sy) in sample_sources(x, y, &snap.cost) {
            let src = snap.hypothesis(sx, sy);
            let from = Vector2::new(sx as f64, sy as f64);
            let d = match src.transfer_depth(cam, &from, &to) {
                Some(d) if d >= cam.depth_min() && d <= cam.depth_max() => d,
                _ => cam.clamp_depth(src.depth),
            };
            cands.push(Hypothesis::new(d, src.normal));
        }
        let rows: Vec<Vec<f64>> = cands.iter().map(|h| self.costs(x, y, h)).collect();
        let errs: Vec<Vec<f64>> = cands.iter().map(|h| self.errors(x, y, h.depth)).collect();
        let m = CostMatrix::from_rows(&rows);
        let state = select_views(&m, t, snap.best_view.at(x, y), &self.cfg.view_selection);
        let weights = if state.weights.iter().sum::<f64>() > 0.0 {
            state.weights.clone()
        } else {
            fallback_weights(&m)
        };

        let inc = snap.hypothesis(x, y);
        let mut best = (inc, self.score(&self.costs(x, y, &inc), &self.errors(x, y, inc.depth), &weights));
        for i in 0..cands.len() {
            let s = self.score(&rows[i], &errs[i], &weights);
            if s < best.1 {
                best = (cands[i], s);
            }
        }

        let mut rng = pixel_rng(self.cfg.seed, t as u64, x, y);
        let rho = self.cfg.perturbation * 0.5f64.powi(t as i32);
        let random = random_hypothesis(&mut rng, cam, &to);
        let perturbed = perturb_hypothesis(&mut rng, cam, &to, &best.0, rho);
        let depths = [best.0.depth, random.depth, perturbed.depth];
        let normals = [best.0.normal, random.normal, perturbed.normal];
        let mut out = best;
        for (di, d) in depths.iter().enumerate() {
            for (ni, n) in normals.iter().enumerate() {
                if di == 0 && ni == 0 {
                    continue;
                }
                let h = Hypothesis::new(*d, *n);
                let s = self.score(&self.costs(x, y, &h), &self.errors(x, y, *d), &weights);
                if s < out.1 {
                    out = (h, s);
                }
            }
        }
        (out.0, out.1, state.best_view)
    }

    /// One red-black sweep, pixel by pixel in raster order.
    pub fn sweep(&self, map: &mut HypothesisMap, t: usize) {
        for phase in [CheckerboardPhase::Red, CheckerboardPhase::Black] {
            let snap = map.clone();
            let (w, h) = map.dims();
            for y in 0..h {
                for x in 0..w {
                    if !phase.contains(x, y) {
                        continue;
                    }
                    let (hyp, cost, best_view) = self.pixel(&snap, x, y, t);
                    map.set_hypothesis(x, y, &hyp);
                    map.cost.set(x, y, cost);
                    map.best_view.set(x, y, best_view);
                }
            }
        }
    }
}

/// Bit patterns of every field of a map.
pub fn map_bits(m: &HypothesisMap) -> Vec<u64> {
    let mut v: Vec<u64> = m.depth.data().iter().map(|d| d.to_bits()).collect();
    for n in m.normal.data() {
        v.extend([n.x.to_bits(), n.y.to_bits(), n.z.to_bits()]);
    }
    v.extend(m.cost.data().iter().map(|c| c.to_bits()));
    v.extend(m.best_view.data().iter().map(|b| b.map_or(u64::MAX, |b| b as u64)));
    v
}

/// Pixels of view `i` at least `margin` from the border and seen by every
/// other view.
pub fn interior_covisible(scene: &SyntheticScene, i: usize, margin: usize) -> Grid<bool> {
    let mut mask = scene.interior_mask(i, margin);
    for j in 0..scene.len() {
        if j != i {
            let c = scene.covisibility(i, j);
            for (m, c) in mask.data_mut().iter_mut().zip(c.data()) {
                *m &= *c;
            }
        }
    }
    mask
}

pub fn and(a: &Grid<bool>, b: &Grid<bool>) -> Grid<bool> {
    Grid::from_fn(a.width(), a.height(), |x, y| a.at(x, y) && b.at(x, y))
}

/// Fraction of `mask` pixels with relative depth error strictly below `tol`.
pub fn fraction_within(est: &DepthGrid, gt: &DepthGrid, mask: &Grid<bool>, tol: f64) -> f64 {
    let (mut n, mut ok) = (0usize, 0usize);
    for y in 0..gt.height() {
        for x in 0..gt.width() {
            if mask.at(x, y) {
                n += 1;
                if ((est.at(x, y) - gt.at(x, y)) / gt.at(x, y)).abs() < tol {
                    ok += 1;
                }
            }
        }
    }
    assert!(n > 0, "empty mask");
    ok as f64 / n as f64
}
