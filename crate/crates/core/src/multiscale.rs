//! Coarse-to-fine driver with geometric consistency guidance and detail
//! restoration.

use rayon::prelude::*;
use nalgebra::Vector2;

use crate::engine::{run_acmh, run_seed, AcmhContext, EngineConfig, GeometricParams, HypothesisMap, View};
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, ScaledCamera};
use crate::grid::{DepthGrid, Grid};
use crate::imaging::{build_pyramid, joint_bilateral_upsample, GrayImage, ImagePyramid};
use crate::sampler::{sample_sources, NUM_REGIONS};
use crate::viewsel::{aggregate_row, fallback_weights, select_views, CostMatrix};

const TAG_BOOTSTRAP: u64 = 1;
const TAG_GEOMETRIC: u64 = 2;
const TAG_RESTORE: u64 = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct MultiScaleParams {
    /// Number of scales.
    pub k: usize,
    /// Downsampling ratio between consecutive scales.
    pub eta: f64,
    /// Reprojection error truncation, pixels.
    pub delta: f64,
    pub lambda: f64,
    /// Restorer threshold on the photometric cost gap.
    pub xi: f64,
    pub geom_passes_per_scale: usize,
    pub coarse_iterations: usize,
    pub geometric_iterations: usize,
    pub restorer_iterations: usize,
    pub restorer: bool,
    /// Run the images of a geometric round concurrently against the
    /// round-start depth maps.
    pub jacobi: bool,
}

impl Default for MultiScaleParams {
    fn default() -> Self {
        Self {
            k: 3,
            eta: 0.5,
            delta: 3.0,
            lambda: 0.2,
            xi: 0.1,
            geom_passes_per_scale: 2,
            coarse_iterations: 7,
            geometric_iterations: 6,
            restorer_iterations: 6,
            restorer: true,
            jacobi: false,
        }
    }
}

impl MultiScaleParams {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::InvalidParameter("eta must lie in (0, 1)".into()));
        }
        if !(self.xi > 0.0 && self.delta > 0.0 && self.lambda >= 0.0) {
            return Err(Error::InvalidParameter("need xi > 0, delta > 0, lambda >= 0".into()));
        }
        if self.coarse_iterations < 1 || self.geometric_iterations < 1 || self.restorer_iterations < 1 {
            return Err(Error::InvalidParameter("iteration counts must be >= 1".into()));
        }
        Ok(())
    }

    pub fn geometric(&self) -> GeometricParams {
        GeometricParams {
            lambda: self.lambda,
            delta: self.delta,
        }
    }
}

/// One step of the executed schedule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleEvent {
    PhotometricBootstrap { scale: usize },
    Upsample { scale: usize },
    DetailRestore { scale: usize },
    GeometricRound { scale: usize, round: usize },
}

#[derive(Clone, Debug)]
pub struct AcmmOutput {
    /// Native-scale maps, one per image.
    pub maps: Vec<HypothesisMap>,
    pub trace: Vec<ScheduleEvent>,
}

/// Restorer result for one image.
#[derive(Clone, Debug)]
pub struct RestoreOutput {
    pub map: HypothesisMap,
    pub c_init: Grid<f64>,
    pub c_photo: Grid<f64>,
    pub replaced: Grid<bool>,
}

/// Photometric cost of every hypothesis of `map`, aggregated with weights
/// from a view-selection vote over the eight hypotheses sampled around each
/// pixel (as in a final sweep, with the map's own best views as history).
pub fn score_map(ctx: &AcmhContext<'_>, map: &HypothesisMap) -> Grid<f64> {
    let (w, h) = map.dims();
    let n = ctx.num_sources();
    let proxy_rows: Vec<Vec<f64>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let win = ctx.window(x, y);
                    ctx.initial_cost(win.as_ref(), x, y, &map.hypothesis(x, y))
                })
                .collect()
        })
        .collect();
    let proxy = Grid::from_vec(w, h, proxy_rows.concat()).expect("dimensions match");
    let t = ctx.config().iterations - 1;
    let params = &ctx.config().view_selection;
    let rows: Vec<Vec<f64>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut own = vec![0.0; n];
            (0..w)
                .map(|x| {
                    let win = ctx.window(x, y);
                    let mut m = CostMatrix::new(NUM_REGIONS, n);
                    for (i, (sx, sy)) in sample_sources(x, y, &proxy).into_iter().enumerate() {
                        let cand = ctx.propagate(map, sx, sy, x, y);
                        ctx.cost_row(win.as_ref(), x, y, &cand, m.row_mut(i));
                    }
                    let state = select_views(&m, t, *map.best_view.get(x, y), params);
                    let weights = if state.total_weight() > 0.0 {
                        state.weights
                    } else {
                        fallback_weights(&m)
                    };
                    ctx.cost_row(win.as_ref(), x, y, &map.hypothesis(x, y), &mut own);
                    aggregate_row(&own, &weights)
                })
                .collect()
        })
        .collect();
    Grid::from_vec(w, h, rows.concat()).expect("dimensions match")
}

/// Replaces the upsampled hypothesis wherever `c_init - c_photo > xi`.
pub fn restore_merge(
    upsampled: &HypothesisMap,
    c_init: &Grid<f64>,
    candidate: &HypothesisMap,
    c_photo: &Grid<f64>,
    xi: f64,
) -> Result<(HypothesisMap, Grid<bool>)> {
    let dims = upsampled.dims();
    candidate.depth.ensure_dims(dims)?;
    c_init.ensure_dims(dims)?;
    c_photo.ensure_dims(dims)?;
    let (w, h) = dims;
    let mut out = upsampled.clone();
    let mut replaced = Grid::new(w, h, false);
    for y in 0..h {
        for x in 0..w {
            if c_init.at(x, y) - c_photo.at(x, y) > xi {
                out.set_hypothesis(x, y, &candidate.hypothesis(x, y));
                out.cost.set(x, y, c_photo.at(x, y));
                out.best_view.set(x, y, candidate.best_view.at(x, y));
                replaced.set(x, y, true);
            } else {
                out.cost.set(x, y, c_init.at(x, y));
                out.best_view.set(x, y, None);
            }
        }
    }
    Ok((out, replaced))
}

/// Detail restorer: a fresh photometric run (random init) competes with the
/// upsampled map pixel by pixel.
pub fn detail_restore(
    upsampled: &HypothesisMap,
    reference: View<'_>,
    sources: &[View<'_>],
    cfg: &EngineConfig,
    xi: f64,
) -> Result<RestoreOutput> {
    let cfg = EngineConfig {
        geometric: None,
        ..cfg.clone()
    };
    let ctx = AcmhContext::new(reference, sources, &cfg, None)?;
    upsampled.depth.ensure_dims(ctx.camera().dims())?;
    let fresh = ctx.run(None)?;
    let c_init = score_map(&ctx, upsampled);
    let c_photo = score_map(&ctx, &fresh);
    let (map, replaced) = restore_merge(upsampled, &c_init, &fresh, &c_photo, xi)?;
    Ok(RestoreOutput {
        map,
        c_init,
        c_photo,
        replaced,
    })
}

struct Scale {
    images: Vec<GrayImage>,
    cameras: Vec<CameraModel>,
}

impl Scale {
    fn views(&self) -> Vec<View<'_>> {
        self.images.iter().zip(&self.cameras).map(|(i, c)| View::new(i, c)).collect()
    }
}

fn build_scales(images: &[GrayImage], cameras: &[CameraModel], params: &MultiScaleParams, window_radius: usize) -> Result<Vec<Scale>> {
    let pyramids: Vec<ImagePyramid> = images
        .iter()
        .map(|img| build_pyramid(img, params.k, params.eta, window_radius))
        .collect::<Result<_>>()?;
    (0..params.k)
        .map(|l| {
            let cameras = cameras
                .iter()
                .map(|c| ScaledCamera::new(c, l, params.k, params.eta).map(|s| s.camera))
                .collect::<Result<Vec<_>>>()?;
            let images: Vec<GrayImage> = pyramids.iter().map(|p| p.level(l).clone()).collect();
            for (img, cam) in images.iter().zip(&cameras) {
                if img.dims() != cam.dims() {
                    return Err(Error::DimensionMismatch {
                        expected: cam.dims(),
                        found: img.dims(),
                    });
                }
            }
            Ok(Scale { images, cameras })
        })
        .collect()
}

fn geometric_round(
    scale: &Scale,
    sources: &[Vec<usize>],
    maps: &mut [HypothesisMap],
    cfg: &EngineConfig,
    params: &MultiScaleParams,
    tag: &[u64],
) -> Result<()> {
    let views = scale.views();
    let run_one = |i: usize, maps: &[HypothesisMap], init: &HypothesisMap| -> Result<HypothesisMap> {
        let srcs: Vec<View> = sources[i].iter().map(|&j| views[j]).collect();
        let depths: Vec<&DepthGrid> = sources[i].iter().map(|&j| &maps[j].depth).collect();
        let cfg = EngineConfig {
            iterations: params.geometric_iterations,
            geometric: Some(params.geometric()),
            seed: run_seed(cfg.seed, tag, i),
            ..cfg.clone()
        };
        run_acmh(views[i], &srcs, &cfg, Some(init), Some(&depths))
    };
    if params.jacobi {
        let snapshot = maps.to_vec();
        let updated: Vec<HypothesisMap> = (0..maps.len())
            .into_par_iter()
            .map(|i| run_one(i, &snapshot, &snapshot[i]))
            .collect::<Result<_>>()?;
        maps.clone_from_slice(&updated);
    } else {
        for i in 0..maps.len() {
            let updated = run_one(i, maps, &maps[i])?;
            maps[i] = updated;
        }
    }
    Ok(())
}

/// Multi-scale estimation of every image's depth and normal map.
/// `sources[i]` lists the source views of image `i`.
pub fn run_acmm(
    images: &[GrayImage],
    cameras: &[CameraModel],
    sources: &[Vec<usize>],
    cfg: &EngineConfig,
    params: &MultiScaleParams,
    mut on_scale: Option<&mut dyn FnMut(usize, &[HypothesisMap]) -> Result<()>>,
) -> Result<AcmmOutput> {
    params.validate()?;
    if images.len() < 2 || images.len() != cameras.len() || sources.len() != images.len() {
        return Err(Error::InvalidParameter(
            "need at least two images with one camera and one source list each".into(),
        ));
    }
    for (i, s) in sources.iter().enumerate() {
        if s.is_empty() || s.iter().any(|&j| j == i || j >= images.len()) {
            return Err(Error::InvalidParameter(format!("invalid source list for image {i}")));
        }
    }
    cfg.validate(1)?;
    let scales = build_scales(images, cameras, params, cfg.ncc.window_radius)?;
    let mut trace = Vec::new();

    let coarse = &scales[0];
    let views = coarse.views();
    let mut maps: Vec<HypothesisMap> = (0..images.len())
        .map(|i| {
            let srcs: Vec<View> = sources[i].iter().map(|&j| views[j]).collect();
            let cfg = EngineConfig {
                iterations: params.coarse_iterations,
                geometric: None,
                seed: run_seed(cfg.seed, &[TAG_BOOTSTRAP], i),
                ..cfg.clone()
            };
            run_acmh(views[i], &srcs, &cfg, None, None)
        })
        .collect::<Result<_>>()?;
    trace.push(ScheduleEvent::PhotometricBootstrap { scale: 0 });

    for (l, scale) in scales.iter().enumerate() {
        if l > 0 {
            maps = maps
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    let (d, n) = joint_bilateral_upsample(&m.depth, &m.normal, &scale.images[i], params.eta)?;
                    HypothesisMap::from_grids(d, n)
                })
                .collect::<Result<_>>()?;
            trace.push(ScheduleEvent::Upsample { scale: l });
            if params.restorer {
                let views = scale.views();
                for i in 0..maps.len() {
                    let srcs: Vec<View> = sources[i].iter().map(|&j| views[j]).collect();
                    let cfg = EngineConfig {
                        iterations: params.restorer_iterations,
                        seed: run_seed(cfg.seed, &[TAG_RESTORE, l as u64], i),
                        ..cfg.clone()
                    };
                    let out = detail_restore(&maps[i], views[i], &srcs, &cfg, params.xi)?;
                    let count = out.replaced.data().iter().filter(|&&r| r).count();
                    log::debug!("scale {l} image {i}: restorer replaced {count} pixels");
                    maps[i] = out.map;
                }
                trace.push(ScheduleEvent::DetailRestore { scale: l });
            }
        }
        for round in 0..params.geom_passes_per_scale {
            geometric_round(
                scale,
                sources,
                &mut maps,
                cfg,
                params,
                &[TAG_GEOMETRIC, l as u64, round as u64],
            )?;
            trace.push(ScheduleEvent::GeometricRound { scale: l, round });
        }
        log::info!("acmm: scale {l} done ({}x{})", scale.images[0].width(), scale.images[0].height());
        if let Some(cb) = on_scale.as_mut() {
            cb(l, &maps)?;
        }
    }
    Ok(AcmmOutput { maps, trace })
}

/// Back-projects pixel `(x, y)` at scale `coarse` and reprojects it into the
/// next finer camera, returning the fine pixel position.
pub fn coarse_to_fine_pixel(coarse: &CameraModel, fine: &CameraModel, x: usize, y: usize, depth: f64) -> Vector2<f64> {
    let world = coarse.back_project(&Vector2::new(x as f64, y as f64), depth);
    fine.project(&world).0
}
