//! Grayscale images, pyramids, the bilateral-weighted NCC matching cost,
//! 5x5 median filtering and joint bilateral upsampling.

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Hypothesis, ViewPair};
use crate::grid::{is_valid_depth, DepthGrid, Grid, NormalGrid};

/// Matching cost reported for windows that carry no evidence.
pub const MAX_COST: f64 = 2.0;
/// Weighted variance below which a window is treated as textureless.
pub const MIN_VARIANCE: f64 = 1e-5;

const JBU_SIGMA_SPATIAL: f64 = 1.0;
const JBU_SIGMA_RANGE: f64 = 0.1;

/// Row-major luminance image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                found: (data.len(), 1),
            });
        }
        if let Some(v) = data.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
            return Err(Error::InvalidParameter(format!(
                "intensity {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image from a function; values are clamped into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                data.push(if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn constant(width: usize, height: usize, value: f32) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Bilinear sample; `None` outside `[0, w-1] x [0, h-1]`.
    #[inline]
    pub fn bilinear(&self, u: f64, v: f64) -> Option<f64> {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        if !(u >= 0.0 && v >= 0.0 && u <= max_x && v <= max_y) {
            return None;
        }
        Some(self.bilinear_unchecked(u, v))
    }

    /// Bilinear sample with coordinates clamped into the image.
    pub fn bilinear_clamped(&self, u: f64, v: f64) -> f64 {
        let u = u.clamp(0.0, (self.width - 1) as f64);
        let v = v.clamp(0.0, (self.height - 1) as f64);
        self.bilinear_unchecked(u, v)
    }

    #[inline]
    fn bilinear_unchecked(&self, u: f64, v: f64) -> f64 {
        let x0 = (u.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (v.floor() as usize).min(self.height.saturating_sub(2));
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = u - x0 as f64;
        let fy = v - y0 as f64;
        let row0 = y0 * self.width;
        let row1 = y1 * self.width;
        let a = self.data[row0 + x0] as f64;
        let b = self.data[row0 + x1] as f64;
        let c = self.data[row1 + x0] as f64;
        let d = self.data[row1 + x1] as f64;
        let top = a + (b - a) * fx;
        let bottom = c + (d - c) * fx;
        top + (bottom - top) * fy
    }
}

/// Separable Gaussian blur with edge clamping.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
    let (w, h) = img.dims();
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;

    let mut tmp = vec![0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                let sx = clamp(x as i64 + i as i64 - radius, w);
                acc += k * img.get(sx, y) as f64;
            }
            tmp[y * w + x] = acc;
        }
    }
    GrayImage::from_fn(w, h, |x, y| {
        let mut acc = 0.0;
        for (i, k) in kernel.iter().enumerate() {
            let sy = clamp(y as i64 + i as i64 - radius, h);
            acc += k * tmp[sy * w + x];
        }
        acc as f32
    })
}

/// Images at `k` scales; index 0 is the coarsest, `k - 1` the input.
#[derive(Clone, Debug)]
pub struct ImagePyramid {
    pub levels: Vec<GrayImage>,
    pub eta: f64,
}

impl ImagePyramid {
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, l: usize) -> &GrayImage {
        &self.levels[l]
    }

    pub fn native(&self) -> &GrayImage {
        self.levels.last().expect("pyramid has at least one level")
    }
}

/// Dimension of pyramid level `level` for a native dimension `native`.
pub fn level_dim(native: usize, level: usize, levels: usize, eta: f64) -> usize {
    let factor = eta.powi((levels - 1 - level) as i32);
    ((native as f64) * factor).round().max(1.0) as usize
}

/// Builds a `k`-level pyramid. Each coarser level is the native image blurred
/// with `sigma = 0.5 / s` and bilinearly resampled at `x / s`, where `s` is
/// the level's total scale factor, so that level coordinates agree with
/// [`CameraModel::scaled`].
pub fn build_pyramid(
    img: &GrayImage,
    k: usize,
    eta: f64,
    window_radius: usize,
) -> Result<ImagePyramid> {
    if k == 0 {
        return Err(Error::InvalidParameter("pyramid needs k >= 1".into()));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "downsampling factor {eta} outside (0, 1)"
        )));
    }
    let min_dim = 2 * window_radius + 1;
    let (w, h) = img.dims();
    let cw = level_dim(w, 0, k, eta);
    let ch = level_dim(h, 0, k, eta);
    if cw < min_dim || ch < min_dim {
        return Err(Error::PyramidDepth {
            width: w,
            height: h,
            levels: k,
            min_dim,
        });
    }
    let mut levels = Vec::with_capacity(k);
    for l in 0..k - 1 {
        let s = eta.powi((k - 1 - l) as i32);
        let blurred = gaussian_blur(img, 0.5 / s);
        let lw = level_dim(w, l, k, eta);
        let lh = level_dim(h, l, k, eta);
        levels.push(GrayImage::from_fn(lw, lh, |x, y| {
            blurred.bilinear_clamped(x as f64 / s, y as f64 / s) as f32
        }));
    }
    levels.push(img.clone());
    Ok(ImagePyramid { levels, eta })
}

/// Parameters of the bilateral-weighted NCC window.
#[derive(Clone, Debug, PartialEq)]
pub struct NccParams {
    pub window_radius: usize,
    pub sigma_spatial: f64,
    pub sigma_color: f64,
    /// Use only every other row and column of the window.
    pub sparse_sampling: bool,
}

impl Default for NccParams {
    fn default() -> Self {
        Self {
            window_radius: 5,
            sigma_spatial: 2.5,
            sigma_color: 0.1,
            sparse_sampling: true,
        }
    }
}

impl NccParams {
    pub fn validate(&self) -> Result<()> {
        if self.window_radius < 1 {
            return Err(Error::InvalidParameter("window_radius must be >= 1".into()));
        }
        if !(self.sigma_spatial > 0.0 && self.sigma_color > 0.0) {
            return Err(Error::InvalidParameter("NCC sigmas must be positive".into()));
        }
        Ok(())
    }

    /// Window offsets in row-major order.
    pub fn offsets(&self) -> Vec<(i64, i64)> {
        let r = self.window_radius as i64;
        let step = if self.sparse_sampling { 2 } else { 1 };
        let axis: Vec<i64> = (-r..=r).step_by(step).collect();
        axis.iter()
            .flat_map(|&dy| axis.iter().map(move |&dx| (dx, dy)))
            .collect()
    }
}

/// Reference side of the NCC window at one pixel: sample positions,
/// bilateral weights and weighted statistics. Built once per pixel and
/// reused for every hypothesis and source view.
#[derive(Clone, Debug)]
pub struct RefWindow {
    positions: Vec<(f64, f64)>,
    weights: Vec<f64>,
    values: Vec<f64>,
    weight_sum: f64,
    mean: f64,
    variance: f64,
}

impl RefWindow {
    /// `None` when the window leaves the image or the reference patch is
    /// textureless.
    pub fn new(img: &GrayImage, x: usize, y: usize, params: &NccParams) -> Option<Self> {
        let r = params.window_radius;
        if x < r || y < r || x + r >= img.width() || y + r >= img.height() {
            return None;
        }
        let center = img.get(x, y) as f64;
        let two_ss = 2.0 * params.sigma_spatial * params.sigma_spatial;
        let two_sc = 2.0 * params.sigma_color * params.sigma_color;
        let offsets = params.offsets();
        let mut positions = Vec::with_capacity(offsets.len());
        let mut weights = Vec::with_capacity(offsets.len());
        let mut values = Vec::with_capacity(offsets.len());
        let mut weight_sum = 0.0;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for (dx, dy) in offsets {
            let sx = (x as i64 + dx) as usize;
            let sy = (y as i64 + dy) as usize;
            let v = img.get(sx, sy) as f64;
            let dc = v - center;
            let w = (-((dx * dx + dy * dy) as f64) / two_ss).exp() * (-(dc * dc) / two_sc).exp();
            positions.push((sx as f64, sy as f64));
            weights.push(w);
            values.push(v);
            weight_sum += w;
            sum += w * v;
            sum_sq += w * v * v;
        }
        let mean = sum / weight_sum;
        let variance = sum_sq / weight_sum - mean * mean;
        if !(variance >= MIN_VARIANCE) {
            return None;
        }
        Some(Self {
            positions,
            weights,
            values,
            weight_sum,
            mean,
            variance,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// `1 - NCC` against `src` warped by `h`, in `[0, 2]`. Any sample outside
    /// the source or a textureless source patch yields [`MAX_COST`].
    #[inline]
    pub fn cost(&self, src: &GrayImage, h: &Matrix3<f64>) -> f64 {
        let (h00, h01, h02) = (h[(0, 0)], h[(0, 1)], h[(0, 2)]);
        let (h10, h11, h12) = (h[(1, 0)], h[(1, 1)], h[(1, 2)]);
        let (h20, h21, h22) = (h[(2, 0)], h[(2, 1)], h[(2, 2)]);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut sum_cross = 0.0;
        for i in 0..self.positions.len() {
            let (px, py) = self.positions[i];
            let z = h20 * px + h21 * py + h22;
            if !(z > 0.0) {
                return MAX_COST;
            }
            let u = (h00 * px + h01 * py + h02) / z;
            let v = (h10 * px + h11 * py + h12) / z;
            let Some(s) = src.bilinear(u, v) else {
                return MAX_COST;
            };
            let w = self.weights[i];
            sum += w * s;
            sum_sq += w * s * s;
            sum_cross += w * self.values[i] * s;
        }
        let mean = sum / self.weight_sum;
        let variance = sum_sq / self.weight_sum - mean * mean;
        if !(variance >= MIN_VARIANCE) {
            return MAX_COST;
        }
        let covariance = sum_cross / self.weight_sum - self.mean * mean;
        let ncc = covariance / (self.variance * variance).sqrt();
        (1.0 - ncc).clamp(0.0, MAX_COST)
    }
}

/// Photometric cost of hypothesis `h` at `pixel` between a reference and a
/// source view.
pub fn matching_cost(
    ref_img: &GrayImage,
    src_img: &GrayImage,
    ref_cam: &CameraModel,
    src_cam: &CameraModel,
    pixel: (usize, usize),
    h: &Hypothesis,
    params: &NccParams,
) -> f64 {
    let Some(window) = RefWindow::new(ref_img, pixel.0, pixel.1, params) else {
        return MAX_COST;
    };
    let pair = ViewPair::new(ref_cam, src_cam);
    hypothesis_cost(&window, &pair, src_img, pixel, h)
}

/// Cost of one hypothesis given a prepared reference window and view pair.
#[inline]
pub fn hypothesis_cost(
    window: &RefWindow,
    pair: &ViewPair,
    src_img: &GrayImage,
    pixel: (usize, usize),
    h: &Hypothesis,
) -> f64 {
    let p = Vector2::new(pixel.0 as f64, pixel.1 as f64);
    match pair.homography(&p, h) {
        Some(hm) => window.cost(src_img, &hm),
        None => MAX_COST,
    }
}

/// Lower median of the valid depths in each clipped 5x5 neighbourhood.
/// Pixels without any valid neighbour become 0.
pub fn median_filter_5x5(depth: &DepthGrid) -> DepthGrid {
    let (w, h) = depth.dims();
    Grid::from_fn(w, h, |x, y| {
        let mut buf = [0f64; 25];
        let mut n = 0;
        for yy in y.saturating_sub(2)..(y + 3).min(h) {
            for xx in x.saturating_sub(2)..(x + 3).min(w) {
                let d = depth.at(xx, yy);
                if is_valid_depth(d) {
                    buf[n] = d;
                    n += 1;
                }
            }
        }
        if n == 0 {
            return 0.0;
        }
        let vals = &mut buf[..n];
        let mid = (n - 1) / 2;
        *vals
            .select_nth_unstable_by(mid, |a, b| a.total_cmp(b))
            .1
    })
}

/// Joint bilateral upsampling of a coarse depth/normal map guided by the
/// fine image. `factor` is the coarse/fine resolution ratio (`eta`).
pub fn joint_bilateral_upsample(
    coarse_depth: &DepthGrid,
    coarse_normal: &NormalGrid,
    fine_guide: &GrayImage,
    factor: f64,
) -> Result<(DepthGrid, NormalGrid)> {
    coarse_normal.ensure_dims(coarse_depth.dims())?;
    let (cw, ch) = coarse_depth.dims();
    let (fw, fh) = fine_guide.dims();
    let expected = (
        ((fw as f64) * factor).round() as usize,
        ((fh as f64) * factor).round() as usize,
    );
    if expected != (cw, ch) {
        return Err(Error::DimensionMismatch {
            expected,
            found: (cw, ch),
        });
    }
    let two_ss = 2.0 * JBU_SIGMA_SPATIAL * JBU_SIGMA_SPATIAL;
    let two_sr = 2.0 * JBU_SIGMA_RANGE * JBU_SIGMA_RANGE;
    // Guide intensity at the fine location of each coarse sample.
    let coarse_guide = Grid::from_fn(cw, ch, |qx, qy| {
        let gx = ((qx as f64 / factor).round() as usize).min(fw - 1);
        let gy = ((qy as f64 / factor).round() as usize).min(fh - 1);
        fine_guide.get(gx, gy) as f64
    });

    let mut depth = DepthGrid::new(fw, fh, 0.0);
    let mut normal = NormalGrid::new(fw, fh, Vector3::new(0.0, 0.0, -1.0));
    for y in 0..fh {
        for x in 0..fw {
            let pcx = x as f64 * factor;
            let pcy = y as f64 * factor;
            let bx = pcx.floor() as i64;
            let by = pcy.floor() as i64;
            let g = fine_guide.get(x, y) as f64;
            let mut wsum = 0.0;
            let mut dsum = 0.0;
            let mut nsum = Vector3::zeros();
            for qy in by - 1..=by + 2 {
                for qx in bx - 1..=bx + 2 {
                    if !coarse_depth.contains(qx, qy) {
                        continue;
                    }
                    let (qx, qy) = (qx as usize, qy as usize);
                    let d = coarse_depth.at(qx, qy);
                    if !is_valid_depth(d) {
                        continue;
                    }
                    let ddx = qx as f64 - pcx;
                    let ddy = qy as f64 - pcy;
                    let dg = coarse_guide.at(qx, qy) - g;
                    let w = (-(ddx * ddx + ddy * ddy) / two_ss).exp() * (-(dg * dg) / two_sr).exp();
                    wsum += w;
                    dsum += w * d;
                    nsum += coarse_normal.get(qx, qy) * w;
                }
            }
            let nearest = || nearest_valid(coarse_depth, pcx, pcy);
            if wsum > 0.0 {
                depth.set(x, y, dsum / wsum);
                match nsum.try_normalize(1e-12) {
                    Some(n) => normal.set(x, y, n),
                    None => {
                        if let Some((nx, ny)) = nearest() {
                            normal.set(x, y, *coarse_normal.get(nx, ny));
                        }
                    }
                }
            } else if let Some((nx, ny)) = nearest() {
                depth.set(x, y, coarse_depth.at(nx, ny));
                normal.set(x, y, *coarse_normal.get(nx, ny));
            }
        }
    }
    Ok((depth, normal))
}

fn nearest_valid(depth: &DepthGrid, cx: f64, cy: f64) -> Option<(usize, usize)> {
    let (w, h) = depth.dims();
    let x0 = (cx.round() as i64).clamp(0, w as i64 - 1);
    let y0 = (cy.round() as i64).clamp(0, h as i64 - 1);
    let max_r = w.max(h) as i64;
    for r in 0..=max_r {
        let mut best: Option<(f64, usize, usize)> = None;
        for y in y0 - r..=y0 + r {
            for x in x0 - r..=x0 + r {
                if (x - x0).abs() != r && (y - y0).abs() != r {
                    continue;
                }
                if !depth.contains(x, y) || !is_valid_depth(depth.at(x as usize, y as usize)) {
                    continue;
                }
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                if best.is_none_or(|(bd, _, _)| d2 < bd) {
                    best = Some((d2, x as usize, y as usize));
                }
            }
        }
        if let Some((_, x, y)) = best {
            return Some((x, y));
        }
    }
    None
}
