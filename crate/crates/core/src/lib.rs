//! Multi-scale PatchMatch multi-view stereo with adaptive checkerboard
//! sampling, multi-hypothesis joint view selection, geometric consistency
//! guidance and a detail restorer.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: cameras, plane-induced homographies, reprojection error.
//! * [`imaging`]: grey images, pyramids, bilateral NCC, median filter, joint
//!   bilateral upsampling.
//! * [`sampler`] and [`viewsel`]: candidate sampling and view selection.
//! * [`engine`]: the single-scale PatchMatch driver.
//! * [`multiscale`]: the coarse-to-fine driver.
//! * [`fusion`]: depth map fusion into a point cloud.
//! * [`synth`] and [`eval`]: synthetic scenes and error metrics.
//! * [`io`]: file formats.

pub mod engine;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod grid;
pub mod imaging;
pub mod io;
pub mod multiscale;
pub mod sampler;
pub mod synth;
pub mod viewsel;

pub use engine::{run_acmh, run_acmh_all, source_views, EngineConfig, GeometricParams, HypothesisMap, View};
pub use error::{Error, Result};
pub use eval::{depth_error, relative_depth_error, DepthErrorReport};
pub use fusion::{fuse, FusionParams, FusionView, PointCloud};
pub use geometry::{CameraModel, Hypothesis};
pub use grid::{DepthGrid, Grid, NormalGrid};
pub use imaging::{GrayImage, NccParams};
pub use multiscale::{run_acmm, AcmmOutput, MultiScaleParams, ScheduleEvent};
pub use synth::{generate_scene, SceneSpec, SyntheticScene};
pub use viewsel::ViewSelectionParams;
