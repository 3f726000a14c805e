//! Consistency-checked fusion of depth maps into a point cloud, and PLY
//! output.

use std::io::Write;
use std::path::Path;

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geometry::CameraModel;
use crate::grid::{is_valid_depth, DepthGrid, Grid, NormalGrid};
use crate::imaging::GrayImage;

#[derive(Clone, Debug, PartialEq)]
pub struct FusionParams {
    /// Maximum relative depth difference.
    pub epsilon: f64,
    /// Maximum normal angle, degrees.
    pub theta_degrees: f64,
    /// Maximum forward-backward reprojection error, pixels.
    pub psi: f64,
    /// Consistent neighbours required besides the reference.
    pub min_consistent: usize,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            theta_degrees: 30.0,
            psi: 2.0,
            min_consistent: 2,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.theta_degrees > 0.0 && self.psi > 0.0 && self.min_consistent > 0) {
            return Err(Error::InvalidParameter("fusion thresholds must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusedPoint {
    pub position: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub color: [u8; 3],
    /// Number of agreeing views, reference included.
    pub support: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<FusedPoint>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One depth map with its camera and (optionally) image for colour.
#[derive(Clone, Copy, Debug)]
pub struct FusionView<'a> {
    pub camera: &'a CameraModel,
    pub depth: &'a DepthGrid,
    pub normal: &'a NormalGrid,
    pub image: Option<&'a GrayImage>,
}

#[derive(Clone, Debug)]
pub struct FusionOutput {
    pub cloud: PointCloud,
    /// Pixels that contributed to some point, per view.
    pub consumed: Vec<Grid<bool>>,
}

struct Match {
    /// Not yet part of another point; only fresh matches are averaged.
    fresh: bool,
    view: usize,
    x: usize,
    y: usize,
    point: Vector3<f64>,
    normal: Vector3<f64>,
}

/// Greedy fusion: references in input order, pixels in raster order. A pixel
/// becomes a point when at least `min_consistent` other views agree on depth,
/// normal and reprojection. The point averages the reference with the agreeing
/// pixels not already used by an earlier point, and those pixels are consumed.
pub fn fuse(views: &[FusionView<'_>], params: &FusionParams) -> Result<FusionOutput> {
    params.validate()?;
    for v in views {
        v.depth.ensure_dims(v.camera.dims())?;
        v.normal.ensure_dims(v.camera.dims())?;
        if let Some(img) = v.image {
            if img.dims() != v.camera.dims() {
                return Err(Error::DimensionMismatch {
                    expected: v.camera.dims(),
                    found: img.dims(),
                });
            }
        }
    }
    let cos_theta = params.theta_degrees.to_radians().cos();
    let mut consumed: Vec<Grid<bool>> = views
        .iter()
        .map(|v| Grid::new(v.camera.width(), v.camera.height(), false))
        .collect();
    let mut cloud = PointCloud::default();
    let mut matches: Vec<Match> = Vec::new();
    for (r, rv) in views.iter().enumerate() {
        let (w, h) = rv.camera.dims();
        for y in 0..h {
            for x in 0..w {
                let d = rv.depth.at(x, y);
                if consumed[r].at(x, y) || !is_valid_depth(d) {
                    continue;
                }
                let p = Vector2::new(x as f64, y as f64);
                let point = rv.camera.back_project(&p, d);
                let normal = rv.camera.normal_to_world(rv.normal.get(x, y)).normalize();
                matches.clear();
                for (j, nv) in views.iter().enumerate() {
                    if j == r {
                        continue;
                    }
                    let (q, z) = nv.camera.project(&point);
                    if !(z > 0.0) {
                        continue;
                    }
                    let Some((qx, qy)) = nv.camera.nearest_pixel(&q) else {
                        continue;
                    };
                    let dj = nv.depth.at(qx, qy);
                    if !is_valid_depth(dj) || (dj - z).abs() / z > params.epsilon {
                        continue;
                    }
                    let nj = nv.camera.normal_to_world(nv.normal.get(qx, qy)).normalize();
                    if normal.dot(&nj) < cos_theta {
                        continue;
                    }
                    let back = nv.camera.back_project(&Vector2::new(qx as f64, qy as f64), dj);
                    let (pb, zb) = rv.camera.project(&back);
                    if !(zb > 0.0) || (pb - p).norm() > params.psi {
                        continue;
                    }
                    matches.push(Match {
                        fresh: !consumed[j].at(qx, qy),
                        view: j,
                        x: qx,
                        y: qy,
                        point: back,
                        normal: nj,
                    });
                }
                if matches.len() < params.min_consistent {
                    continue;
                }
                let mut pos = point;
                let mut nrm = normal;
                let mut grey = rv.image.map_or(0.5, |img| img.get(x, y) as f64);
                let mut count = 1;
                consumed[r].set(x, y, true);
                for m in matches.iter().filter(|m| m.fresh) {
                    pos += m.point;
                    nrm += m.normal;
                    grey += views[m.view].image.map_or(0.5, |img| img.get(m.x, m.y) as f64);
                    consumed[m.view].set(m.x, m.y, true);
                    count += 1;
                }
                let g = (grey / count as f64 * 255.0).round().clamp(0.0, 255.0) as u8;
                cloud.points.push(FusedPoint {
                    position: pos / count as f64,
                    normal: nrm.try_normalize(1e-12).unwrap_or(normal),
                    color: [g, g, g],
                    support: matches.len() + 1,
                });
            }
        }
    }
    Ok(FusionOutput { cloud, consumed })
}

fn ply_header(n: usize, format: &str) -> String {
    format!(
        "ply\nformat {format} 1.0\nelement vertex {n}\n\
         property float x\nproperty float y\nproperty float z\n\
         property float nx\nproperty float ny\nproperty float nz\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n"
    )
}

/// Writes the cloud as PLY (binary little-endian unless `ascii`).
pub fn write_ply<W: Write>(cloud: &PointCloud, mut out: W, ascii: bool) -> Result<()> {
    if ascii {
        out.write_all(ply_header(cloud.len(), "ascii").as_bytes())?;
        for p in &cloud.points {
            writeln!(
                out,
                "{} {} {} {} {} {} {} {} {}",
                p.position.x as f32,
                p.position.y as f32,
                p.position.z as f32,
                p.normal.x as f32,
                p.normal.y as f32,
                p.normal.z as f32,
                p.color[0],
                p.color[1],
                p.color[2]
            )?;
        }
    } else {
        out.write_all(ply_header(cloud.len(), "binary_little_endian").as_bytes())?;
        let mut buf = Vec::with_capacity(cloud.len() * 27);
        for p in &cloud.points {
            for v in [p.position.x, p.position.y, p.position.z, p.normal.x, p.normal.y, p.normal.z] {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
            buf.extend_from_slice(&p.color);
        }
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_ply(cloud: &PointCloud, path: &Path, ascii: bool) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_ply(cloud, std::io::BufWriter::new(file), ascii)
}

/// Reads back a PLY written by [`write_ply`].
pub fn read_ply(bytes: &[u8]) -> Result<PointCloud> {
    let bad = |msg: &str| Error::format("<ply>", msg);
    let end = b"end_header\n";
    let pos = bytes
        .windows(end.len())
        .position(|w| w == end)
        .ok_or_else(|| bad("missing end_header"))?;
    let header = std::str::from_utf8(&bytes[..pos]).map_err(|_| bad("header is not UTF-8"))?;
    let body = &bytes[pos + end.len()..];
    let n: usize = header
        .lines()
        .find_map(|l| l.strip_prefix("element vertex "))
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| bad("missing vertex count"))?;
    let mut points = Vec::with_capacity(n);
    if header.contains("format ascii") {
        let text = std::str::from_utf8(body).map_err(|_| bad("body is not UTF-8"))?;
        for line in text.lines().take(n) {
            let f: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("malformed vertex"))?;
            if f.len() != 9 {
                return Err(bad("expected 9 vertex properties"));
            }
            points.push(FusedPoint {
                position: Vector3::new(f[0], f[1], f[2]),
                normal: Vector3::new(f[3], f[4], f[5]),
                color: [f[6] as u8, f[7] as u8, f[8] as u8],
                support: 0,
            });
        }
    } else {
        if body.len() < n * 27 {
            return Err(bad("truncated vertex data"));
        }
        for chunk in body.chunks_exact(27).take(n) {
            let f = |i: usize| f32::from_le_bytes(chunk[4 * i..4 * i + 4].try_into().unwrap()) as f64;
            points.push(FusedPoint {
                position: Vector3::new(f(0), f(1), f(2)),
                normal: Vector3::new(f(3), f(4), f(5)),
                color: [chunk[24], chunk[25], chunk[26]],
                support: 0,
            });
        }
    }
    if points.len() != n {
        return Err(bad("vertex count mismatch"));
    }
    Ok(PointCloud { points })
}
