//! File formats: binary grids, camera text files, images and scene
//! directories.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma};
use nalgebra::{Matrix3x4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CameraModel;
use crate::grid::{DepthGrid, Grid, NormalGrid};
use crate::imaging::GrayImage;
use crate::synth::{SceneSpec, SyntheticScene};

const MAGIC: &[u8; 4] = b"ACMM";

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::format(path, e.to_string()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::format(parent, e.to_string()))?;
    }
    fs::write(path, bytes).map_err(|e| Error::format(path, e.to_string()))
}

/// A multi-channel grid as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct RawGrid {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

pub fn encode_grid(grid: &RawGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * grid.data.len());
    out.extend_from_slice(MAGIC);
    for v in [grid.width, grid.height, grid.channels] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in &grid.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_grid(bytes: &[u8], path: &Path) -> Result<RawGrid> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(Error::format(path, "missing ACMM header"));
    }
    let field = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (width, height, channels) = (field(0), field(1), field(2));
    let n = width
        .checked_mul(height)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| Error::format(path, "header dimensions overflow"))?;
    if bytes.len() != 16 + 4 * n {
        return Err(Error::format(
            path,
            format!("expected {} data bytes for {width}x{height}x{channels}, found {}", 4 * n, bytes.len() - 16),
        ));
    }
    let data = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(RawGrid {
        width,
        height,
        channels,
        data,
    })
}

pub fn save_grid(path: &Path, grid: &RawGrid) -> Result<()> {
    write_file(path, &encode_grid(grid))
}

pub fn load_grid(path: &Path) -> Result<RawGrid> {
    decode_grid(&read_file(path)?, path)
}

pub fn save_scalar(path: &Path, grid: &Grid<f64>) -> Result<()> {
    save_grid(
        path,
        &RawGrid {
            width: grid.width(),
            height: grid.height(),
            channels: 1,
            data: grid.data().iter().map(|&v| v as f32).collect(),
        },
    )
}

pub fn load_scalar(path: &Path) -> Result<DepthGrid> {
    let raw = load_grid(path)?;
    if raw.channels != 1 {
        return Err(Error::format(path, format!("expected 1 channel, found {}", raw.channels)));
    }
    Grid::from_vec(raw.width, raw.height, raw.data.iter().map(|&v| v as f64).collect())
}

pub fn save_normal(path: &Path, grid: &NormalGrid) -> Result<()> {
    save_grid(
        path,
        &RawGrid {
            width: grid.width(),
            height: grid.height(),
            channels: 3,
            data: grid.data().iter().flat_map(|n| [n.x as f32, n.y as f32, n.z as f32]).collect(),
        },
    )
}

pub fn load_normal(path: &Path) -> Result<NormalGrid> {
    let raw = load_grid(path)?;
    if raw.channels != 3 {
        return Err(Error::format(path, format!("expected 3 channels, found {}", raw.channels)));
    }
    let data = raw
        .data
        .chunks_exact(3)
        .map(|c| Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64))
        .collect();
    Grid::from_vec(raw.width, raw.height, data)
}

/// `P` row-major followed by the depth range.
pub fn format_camera(cam: &CameraModel) -> String {
    let p = cam.projection();
    let mut s = String::new();
    for r in 0..3 {
        let row: Vec<String> = (0..4).map(|c| format!("{:e}", p[(r, c)])).collect();
        s += &row.join(" ");
        s.push('\n');
    }
    s += &format!("{:e} {:e}\n", cam.depth_min(), cam.depth_max());
    s
}

pub fn parse_camera(text: &str, width: usize, height: usize, path: &Path) -> Result<CameraModel> {
    let values: Vec<f64> = text
        .split_whitespace()
        .enumerate()
        .map(|(i, t)| {
            t.parse::<f64>()
                .map_err(|_| Error::format(path, format!("field {}: cannot parse {t:?} as a number", i + 1)))
        })
        .collect::<Result<_>>()?;
    if values.len() != 14 {
        return Err(Error::format(
            path,
            format!("expected 14 numbers (3x4 projection, depth_min, depth_max), found {}", values.len()),
        ));
    }
    let p = Matrix3x4::from_row_slice(&values[..12]);
    CameraModel::from_projection(&p, width, height, values[12], values[13])
        .map_err(|e| Error::format(path, e.to_string()))
}

pub fn save_camera(path: &Path, cam: &CameraModel) -> Result<()> {
    write_file(path, format_camera(cam).as_bytes())
}

pub fn load_camera(path: &Path, width: usize, height: usize) -> Result<CameraModel> {
    let bytes = read_file(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| Error::format(path, "not UTF-8 text"))?;
    parse_camera(text, width, height, path)
}

/// Decodes PNG or PGM/PPM (8 or 16 bit) to grey values in `[0, 1]`; colour
/// is converted with luminance weights (0.299, 0.587, 0.114).
pub fn load_image(path: &Path) -> Result<GrayImage> {
    let img = image::open(path).map_err(|e| Error::format(path, e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f32> = match &img {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) => {
            img.to_luma8().into_raw().into_iter().map(|v| v as f32 / 255.0).collect()
        }
        DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) => {
            img.to_luma16().into_raw().into_iter().map(|v| v as f32 / 65535.0).collect()
        }
        _ => img
            .to_rgb32f()
            .pixels()
            .map(|p| (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).clamp(0.0, 1.0))
            .collect(),
    };
    GrayImage::new(w, h, data).map_err(|e| Error::format(path, e.to_string()))
}

fn to_u16(img: &GrayImage) -> Vec<u16> {
    img.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16).collect()
}

/// Saves as 16-bit grey; the format follows the extension (`pgm`, `png`).
pub fn save_image(path: &Path, img: &GrayImage) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::format(parent, e.to_string()))?;
    }
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, to_u16(img))
            .ok_or_else(|| Error::format(path, "image buffer size mismatch"))?;
    buf.save(path).map_err(|e| Error::format(path, e.to_string()))
}

/// Images and cameras of a dataset directory (`images/`, `cams/`).
#[derive(Clone, Debug)]
pub struct Dataset {
    pub names: Vec<String>,
    pub images: Vec<GrayImage>,
    pub cameras: Vec<CameraModel>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

fn list_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::format(dir, e.to_string()))?;
    let mut paths = Vec::new();
    for e in entries {
        let e = e.map_err(|e| Error::format(dir, e.to_string()))?;
        if e.path().is_file() {
            paths.push(e.path());
        }
    }
    paths.sort();
    Ok(paths)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Loads every image in `dir/images` with its camera `dir/cams/<name>.txt`,
/// in name order.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let image_dir = dir.join("images");
    let cam_dir = dir.join("cams");
    let mut ds = Dataset {
        names: Vec::new(),
        images: Vec::new(),
        cameras: Vec::new(),
    };
    for path in list_dir(&image_dir)? {
        let ext = path
            .extension()
            .map(|e| e.to_string_lossy().to_ascii_lowercase())
            .unwrap_or_default();
        if !matches!(ext.as_str(), "png" | "pgm" | "ppm") {
            continue;
        }
        let name = stem(&path);
        let img = load_image(&path)?;
        let cam_path = cam_dir.join(format!("{name}.txt"));
        if !cam_path.is_file() {
            return Err(Error::format(&cam_path, format!("missing camera for image {name}")));
        }
        let cam = load_camera(&cam_path, img.width(), img.height())?;
        ds.names.push(name);
        ds.images.push(img);
        ds.cameras.push(cam);
    }
    if ds.is_empty() {
        return Err(Error::format(&image_dir, "no images found"));
    }
    Ok(ds)
}

/// Manifest stored as `scene.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub seed: u64,
    pub names: Vec<String>,
    pub spec: SceneSpec,
}

pub fn depth_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.depth.bin"))
}

pub fn normal_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.normal.bin"))
}

pub fn cost_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.cost.bin"))
}

/// Writes `images/*.pgm`, `cams/*.txt`, `gt/*.bin` and `scene.json`.
pub fn save_scene(dir: &Path, scene: &SyntheticScene) -> Result<()> {
    let gt = dir.join("gt");
    for v in &scene.views {
        save_image(&dir.join("images").join(format!("{}.pgm", v.name)), &v.image)?;
        save_camera(&dir.join("cams").join(format!("{}.txt", v.name)), &v.camera)?;
        save_scalar(&depth_path(&gt, &v.name), &v.depth)?;
        save_normal(&normal_path(&gt, &v.name), &v.normal)?;
    }
    let manifest = SceneManifest {
        seed: scene.seed,
        names: scene.names(),
        spec: scene.spec.clone(),
    };
    write_file(&dir.join("scene.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())
}

pub fn load_manifest(dir: &Path) -> Result<SceneManifest> {
    let path = dir.join("scene.json");
    serde_json::from_slice(&read_file(&path)?).map_err(|e| Error::format(&path, e.to_string()))
}
