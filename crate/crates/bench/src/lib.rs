//! Fixtures shared by the benchmarks.

use acmm_core::synth::{generate_scene, SceneSpec, SyntheticScene};

/// Three-plane scene used by every benchmark.
pub fn scene(width: usize, height: usize, views: usize) -> SyntheticScene {
    generate_scene(&SceneSpec::three_planes(width, height, views), 1).expect("valid scene")
}
