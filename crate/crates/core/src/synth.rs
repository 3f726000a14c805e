//! Synthetic piecewise-planar scenes with exact ground truth.
//!
//! Surfaces carry band-limited sinusoid textures under constant Lambertian
//! shading. Cameras sit on a horizontal arc looking at a common target; the
//! world `y` axis points down to match image rows.

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::derive_seed;
use crate::error::{Error, Result};
use crate::geometry::{look_at_rotation, CameraModel};
use crate::grid::{is_valid_depth, DepthGrid, Grid, NormalGrid};
use crate::imaging::GrayImage;

const TEXTURE_COMPONENTS: usize = 12;

/// A planar surface, optionally bounded to a rectangle around `point`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneSpec {
    pub point: [f64; 3],
    pub normal: [f64; 3],
    /// Half extents along the in-plane axes; unbounded when absent.
    pub half_extents: Option<[f64; 2]>,
    pub albedo: f64,
    pub contrast: f64,
    /// Shortest and longest texture wavelength, world units.
    pub wavelength: [f64; 2],
}

impl PlaneSpec {
    pub fn new(point: [f64; 3], normal: [f64; 3]) -> Self {
        Self {
            point,
            normal,
            half_extents: None,
            albedo: 0.5,
            contrast: 0.35,
            wavelength: [0.1, 0.6],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TextureProfile {
    FullyTextured,
    /// Vertical band around the look-at target, `width_ratio` of the view
    /// width at the target distance, rendered without texture.
    CentralTexturelessBand { width_ratio: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraRing {
    pub count: usize,
    pub radius: f64,
    /// Total angular spread of the arc, degrees.
    pub arc_degrees: f64,
    pub target: [f64; 3],
    pub width: usize,
    pub height: usize,
    pub focal: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub planes: Vec<PlaneSpec>,
    pub ring: CameraRing,
    pub profile: TextureProfile,
}

fn arr(v: [f64; 3]) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

impl SceneSpec {
    fn ring(width: usize, height: usize, views: usize, arc_degrees: f64) -> CameraRing {
        CameraRing {
            count: views,
            radius: 5.0,
            arc_degrees,
            target: [0.0, 0.0, 0.0],
            width,
            height,
            focal: 0.9 * width as f64,
        }
    }

    /// World size of one pixel at the ring's target distance.
    pub fn pixel_size(&self) -> f64 {
        self.ring.radius / self.ring.focal
    }

    fn with_pixel_wavelengths(mut self, short_px: f64, long_px: f64) -> Self {
        let s = self.pixel_size();
        for p in &mut self.planes {
            p.wavelength = [short_px * s, long_px * s];
        }
        self
    }

    /// One slightly slanted textured plane through the target.
    pub fn textured_plane(width: usize, height: usize, views: usize) -> Self {
        Self {
            planes: vec![PlaneSpec::new([0.0, 0.0, 0.0], [0.15, -0.1, -1.0])],
            ring: Self::ring(width, height, views, 12.0),
            profile: TextureProfile::FullyTextured,
        }
        .with_pixel_wavelengths(6.0, 30.0)
    }

    /// A back wall, a tilted floor and a box face in front.
    pub fn three_planes(width: usize, height: usize, views: usize) -> Self {
        let mut front = PlaneSpec::new([-0.6, -0.2, -0.8], [0.3, 0.0, -1.0]);
        front.half_extents = Some([0.6, 0.5]);
        front.albedo = 0.6;
        let mut floor = PlaneSpec::new([0.0, 0.9, 0.0], [0.0, -1.0, -0.35]);
        floor.albedo = 0.45;
        Self {
            planes: vec![PlaneSpec::new([0.0, 0.0, 0.6], [0.0, 0.0, -1.0]), floor, front],
            ring: Self::ring(width, height, views, 32.0),
            profile: TextureProfile::FullyTextured,
        }
        .with_pixel_wavelengths(6.0, 36.0)
    }

    /// Two planes meeting at a shallow crease, with a central textureless
    /// band covering `width_ratio` of the view.
    pub fn textureless_band(width: usize, height: usize, views: usize, width_ratio: f64) -> Self {
        let mut left = PlaneSpec::new([0.0, 0.0, 0.0], [0.25, 0.0, -1.0]);
        left.half_extents = Some([3.0, 3.0]);
        let right = PlaneSpec::new([0.0, 0.0, 0.0], [-0.2, -0.05, -1.0]);
        Self {
            planes: vec![left, right],
            ring: Self::ring(width, height, views, 48.0),
            profile: TextureProfile::CentralTexturelessBand { width_ratio },
        }
        .with_pixel_wavelengths(6.0, 30.0)
    }

    /// A textured back wall with a thin bright vertical strip in front,
    /// `strip_px` pixels wide in the central view.
    pub fn thin_strip(width: usize, height: usize, views: usize, strip_px: f64) -> Self {
        let ring = Self::ring(width, height, views, 48.0);
        let strip_depth = ring.radius - 1.0;
        let mut strip = PlaneSpec::new([0.15, 0.0, -1.0], [0.0, 0.0, -1.0]);
        strip.half_extents = Some([0.5 * strip_px * strip_depth / ring.focal, 10.0]);
        strip.albedo = 0.9;
        strip.contrast = 0.1;
        let mut wall = PlaneSpec::new([0.0, 0.0, 0.0], [0.1, 0.0, -1.0]);
        wall.albedo = 0.3;
        wall.contrast = 0.25;
        let mut spec = Self {
            planes: vec![wall, strip],
            ring,
            profile: TextureProfile::FullyTextured,
        }
        .with_pixel_wavelengths(6.0, 30.0);
        // Vertical variation only, so the strip keeps its texture when it is
        // a few pixels wide.
        let s = spec.pixel_size();
        spec.planes[1].wavelength = [4.0 * s, 12.0 * s];
        spec
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.ring;
        if r.count < 2 {
            return Err(Error::Scene("need at least two cameras".into()));
        }
        if self.planes.is_empty() {
            return Err(Error::Scene("need at least one plane".into()));
        }
        if !(r.radius > 0.0 && r.focal > 0.0) || r.width < 2 || r.height < 2 {
            return Err(Error::Scene("camera ring needs positive radius, focal and size".into()));
        }
        for (i, p) in self.planes.iter().enumerate() {
            if arr(p.normal).norm() < 1e-12 {
                return Err(Error::Scene(format!("plane {i} has a zero normal")));
            }
            if !(p.wavelength[0] > 0.0 && p.wavelength[1] >= p.wavelength[0]) {
                return Err(Error::Scene(format!("plane {i} has an invalid wavelength range")));
            }
        }
        if let TextureProfile::CentralTexturelessBand { width_ratio } = self.profile {
            if !(width_ratio > 0.0 && width_ratio < 1.0) {
                return Err(Error::Scene("band width ratio must lie in (0, 1)".into()));
            }
        }
        Ok(())
    }

    /// Camera centres along the arc.
    pub fn camera_centers(&self) -> Vec<Vector3<f64>> {
        let r = &self.ring;
        let target = arr(r.target);
        (0..r.count)
            .map(|i| {
                let phi = if r.count == 1 {
                    0.0
                } else {
                    (r.arc_degrees * (i as f64 / (r.count - 1) as f64 - 0.5)).to_radians()
                };
                target + r.radius * Vector3::new(phi.sin(), 0.0, -phi.cos())
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
struct SineComponent {
    k: Vector2<f64>,
    phase: f64,
    amplitude: f64,
}

#[derive(Clone, Debug)]
struct Surface {
    point: Vector3<f64>,
    normal: Vector3<f64>,
    u: Vector3<f64>,
    v: Vector3<f64>,
    half_extents: Option<[f64; 2]>,
    albedo: f64,
    contrast: f64,
    shade: f64,
    components: Vec<SineComponent>,
}

impl Surface {
    fn new(spec: &PlaneSpec, seed: u64, index: usize) -> Self {
        let normal = arr(spec.normal).normalize();
        let helper = if normal.y.abs() < 0.9 {
            Vector3::y()
        } else {
            Vector3::x()
        };
        let u = normal.cross(&helper).normalize();
        let v = normal.cross(&u);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[index as u64]));
        let (lo, hi) = (spec.wavelength[0].ln(), spec.wavelength[1].ln());
        let bounded_strip = spec.half_extents.is_some_and(|e| e[0] < 0.1 * e[1]);
        let components = (0..TEXTURE_COMPONENTS)
            .map(|_| {
                let lambda = if hi > lo { rng.random_range(lo..hi) } else { lo }.exp();
                let theta = if bounded_strip {
                    std::f64::consts::FRAC_PI_2 + rng.random_range(-0.3..0.3)
                } else {
                    rng.random_range(0.0..std::f64::consts::PI)
                };
                let freq = std::f64::consts::TAU / lambda;
                SineComponent {
                    k: Vector2::new(theta.cos(), theta.sin()) * freq,
                    phase: rng.random_range(0.0..std::f64::consts::TAU),
                    amplitude: rng.random_range(0.5..1.0),
                }
            })
            .collect();
        let light = Vector3::new(0.3, -0.4, -1.0).normalize();
        Self {
            point: arr(spec.point),
            normal,
            u,
            v,
            half_extents: spec.half_extents,
            albedo: spec.albedo,
            contrast: spec.contrast,
            shade: 0.6 + 0.4 * normal.dot(&light).abs(),
            components,
        }
    }

    /// Ray parameter of the hit, if inside the plane's bounds.
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let denom = self.normal.dot(dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = self.normal.dot(&(self.point - origin)) / denom;
        if !(t > 0.0) {
            return None;
        }
        if let Some([eu, ev]) = self.half_extents {
            let rel = origin + dir * t - self.point;
            if rel.dot(&self.u).abs() > eu || rel.dot(&self.v).abs() > ev {
                return None;
            }
        }
        Some(t)
    }

    fn intensity(&self, x: &Vector3<f64>, textured: bool) -> f64 {
        if !textured {
            return (self.shade * self.albedo).clamp(0.0, 1.0);
        }
        let rel = x - self.point;
        let uv = Vector2::new(rel.dot(&self.u), rel.dot(&self.v));
        let mut sum = 0.0;
        let mut norm = 0.0;
        for c in &self.components {
            sum += c.amplitude * (c.k.dot(&uv) + c.phase).sin();
            norm += c.amplitude;
        }
        let value = self.albedo + self.contrast * 2.0 * sum / norm;
        (self.shade * value).clamp(0.0, 1.0)
    }
}

/// One rendered camera with its ground truth.
#[derive(Clone, Debug)]
pub struct SceneView {
    pub name: String,
    pub camera: CameraModel,
    pub image: GrayImage,
    /// Camera-frame depth; 0 where no surface is hit.
    pub depth: DepthGrid,
    /// Camera-frame unit normals facing the camera.
    pub normal: NormalGrid,
    /// Index of the visible plane per pixel.
    pub plane: Grid<Option<usize>>,
    /// Pixels inside the textureless band.
    pub band: Grid<bool>,
}

#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub seed: u64,
    pub views: Vec<SceneView>,
}

/// Renders every camera of `spec`. Deterministic in `seed`.
pub fn generate_scene(spec: &SceneSpec, seed: u64) -> Result<SyntheticScene> {
    spec.validate()?;
    let surfaces: Vec<Surface> = spec
        .planes
        .iter()
        .enumerate()
        .map(|(i, p)| Surface::new(p, seed, i))
        .collect();
    let r = &spec.ring;
    let target = arr(r.target);
    let band_half_width = match spec.profile {
        TextureProfile::FullyTextured => None,
        TextureProfile::CentralTexturelessBand { width_ratio } => {
            Some(0.5 * width_ratio * r.width as f64 * r.radius / r.focal)
        }
    };
    let k = Matrix3::new(
        r.focal,
        0.0,
        0.5 * (r.width as f64 - 1.0),
        0.0,
        r.focal,
        0.5 * (r.height as f64 - 1.0),
        0.0,
        0.0,
        1.0,
    );
    let mut views = Vec::with_capacity(r.count);
    for (i, c) in spec.camera_centers().into_iter().enumerate() {
        for (j, s) in surfaces.iter().enumerate() {
            if s.normal.dot(&(c - s.point)).abs() < 1e-9 {
                return Err(Error::Scene(format!("camera {i} lies in the plane of surface {j}")));
            }
        }
        let rot = look_at_rotation(&c, &target)?;
        let t = -(rot * c);
        // Temporary range; replaced by the ground-truth range below.
        let probe = CameraModel::new(k, rot, t, r.width, r.height, 1e-6, 1e12)?;
        let rows: Vec<Vec<(f64, Vector3<f64>, Option<usize>, bool, f32)>> = (0..r.height)
            .into_par_iter()
            .map(|y| {
                (0..r.width)
                    .map(|x| {
                        let ray = probe.ray(&Vector2::new(x as f64, y as f64));
                        let dir = rot.transpose() * ray;
                        let mut hit: Option<(f64, usize)> = None;
                        for (j, s) in surfaces.iter().enumerate() {
                            if let Some(tt) = s.intersect(&c, &dir) {
                                if hit.is_none_or(|(bt, _)| tt < bt) {
                                    hit = Some((tt, j));
                                }
                            }
                        }
                        match hit {
                            None => (0.0, Vector3::new(0.0, 0.0, -1.0), None, false, 0.0),
                            Some((tt, j)) => {
                                let x_world = c + dir * tt;
                                let in_band = band_half_width
                                    .is_some_and(|hw| (x_world.x - target.x).abs() < hw);
                                let value = surfaces[j].intensity(&x_world, !in_band);
                                let mut n = rot * surfaces[j].normal;
                                if n.dot(&ray) > 0.0 {
                                    n = -n;
                                }
                                // The ray has unit z, so the ray parameter is the depth.
                                (tt, n, Some(j), in_band, value as f32)
                            }
                        }
                    })
                    .collect()
            })
            .collect();
        let mut depth = DepthGrid::new(r.width, r.height, 0.0);
        let mut normal = NormalGrid::new(r.width, r.height, Vector3::new(0.0, 0.0, -1.0));
        let mut plane = Grid::new(r.width, r.height, None);
        let mut band = Grid::new(r.width, r.height, false);
        let mut pixels = vec![0f32; r.width * r.height];
        for (y, row) in rows.into_iter().enumerate() {
            for (x, (d, n, p, b, v)) in row.into_iter().enumerate() {
                depth.set(x, y, d);
                normal.set(x, y, n);
                plane.set(x, y, p);
                band.set(x, y, b);
                pixels[y * r.width + x] = v;
            }
        }
        let valid: Vec<f64> = depth.data().iter().copied().filter(|&d| is_valid_depth(d)).collect();
        if valid.is_empty() {
            return Err(Error::Scene(format!("camera {i} sees no surface")));
        }
        let dmin = valid.iter().copied().fold(f64::INFINITY, f64::min);
        let dmax = valid.iter().copied().fold(0.0, f64::max);
        let camera = probe.with_depth_range(0.8 * dmin, 1.2 * dmax)?;
        views.push(SceneView {
            name: format!("view_{i:03}"),
            camera,
            image: GrayImage::new(r.width, r.height, pixels)?,
            depth,
            normal,
            plane,
            band,
        });
    }
    Ok(SyntheticScene {
        spec: spec.clone(),
        seed,
        views,
    })
}

impl SyntheticScene {
    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    pub fn images(&self) -> Vec<GrayImage> {
        self.views.iter().map(|v| v.image.clone()).collect()
    }

    pub fn cameras(&self) -> Vec<CameraModel> {
        self.views.iter().map(|v| v.camera.clone()).collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.views.iter().map(|v| v.name.clone()).collect()
    }

    /// Pixels of view `i` whose surface point is visible and unoccluded in
    /// view `j`.
    pub fn covisibility(&self, i: usize, j: usize) -> Grid<bool> {
        let a = &self.views[i];
        let b = &self.views[j];
        Grid::from_fn(a.depth.width(), a.depth.height(), |x, y| {
            let d = a.depth.at(x, y);
            if !is_valid_depth(d) {
                return false;
            }
            let world = a.camera.back_project(&Vector2::new(x as f64, y as f64), d);
            let (q, z) = b.camera.project(&world);
            if !(z > 0.0) || !b.camera.contains_pixel(&q) {
                return false;
            }
            match b.camera.nearest_pixel(&q) {
                Some((qx, qy)) => {
                    let db = b.depth.at(qx, qy);
                    is_valid_depth(db) && (db - z).abs() <= 0.02 * z
                }
                None => false,
            }
        })
    }

    /// Fraction of view `i`'s valid pixels covisible in view `j`.
    pub fn covisible_fraction(&self, i: usize, j: usize) -> f64 {
        let mask = self.covisibility(i, j);
        let valid = self.views[i].depth.data().iter().filter(|&&d| is_valid_depth(d)).count();
        if valid == 0 {
            return 0.0;
        }
        mask.data().iter().filter(|&&b| b).count() as f64 / valid as f64
    }

    /// Pixels of view `i` showing plane `plane`.
    pub fn plane_mask(&self, i: usize, plane: usize) -> Grid<bool> {
        self.views[i].plane.map(|p| *p == Some(plane))
    }

    /// Pixels of view `i` at least `margin` pixels from the border with
    /// valid ground truth.
    pub fn interior_mask(&self, i: usize, margin: usize) -> Grid<bool> {
        let v = &self.views[i];
        let (w, h) = v.depth.dims();
        Grid::from_fn(w, h, |x, y| {
            x >= margin && y >= margin && x + margin < w && y + margin < h && is_valid_depth(v.depth.at(x, y))
        })
    }
}
