mod common;

use acmm_core::engine::{run_acmh, source_views, HypothesisMap, View};
use acmm_core::geometry::ScaledCamera;
use acmm_core::multiscale::{coarse_to_fine_pixel, detail_restore};
use acmm_core::synth::{generate_scene, SceneSpec};
use acmm_core::{run_acmm, EngineConfig, GeometricParams, MultiScaleParams, ScheduleEvent};
use common::{fraction_within, interior_covisible};
use proptest::prelude::*;

fn quick(k: usize, restorer: bool) -> MultiScaleParams {
    MultiScaleParams {
        k,
        restorer,
        coarse_iterations: 1,
        geometric_iterations: 1,
        restorer_iterations: 1,
        ..MultiScaleParams::default()
    }
}

fn trace_for(k: usize, restorer: bool) -> Vec<ScheduleEvent> {
    let scene = generate_scene(&SceneSpec::three_planes(64, 48, 3), 1).unwrap();
    let cams = scene.cameras();
    let srcs = source_views(&cams, None);
    let out = run_acmm(&scene.images(), &cams, &srcs, &EngineConfig::default(), &quick(k, restorer), None).unwrap();
    for m in &out.maps {
        assert_eq!(m.dims(), (64, 48));
    }
    out.trace
}

#[test]
fn schedule_shape() {
    for k in [1, 2, 3] {
        let trace = trace_for(k, true);
        let count = |f: fn(&ScheduleEvent) -> bool| trace.iter().filter(|e| f(e)).count();
        assert_eq!(count(|e| matches!(e, ScheduleEvent::PhotometricBootstrap { .. })), 1);
        assert_eq!(count(|e| matches!(e, ScheduleEvent::Upsample { .. })), k - 1);
        assert_eq!(count(|e| matches!(e, ScheduleEvent::DetailRestore { .. })), k - 1);
        assert_eq!(count(|e| matches!(e, ScheduleEvent::GeometricRound { .. })), 2 * k);
        assert_eq!(trace[0], ScheduleEvent::PhotometricBootstrap { scale: 0 });
    }
    assert_eq!(
        trace_for(1, true),
        vec![
            ScheduleEvent::PhotometricBootstrap { scale: 0 },
            ScheduleEvent::GeometricRound { scale: 0, round: 0 },
            ScheduleEvent::GeometricRound { scale: 0, round: 1 },
        ]
    );
    let no_restore = trace_for(2, false);
    assert!(!no_restore.iter().any(|e| matches!(e, ScheduleEvent::DetailRestore { .. })));
}

#[test]
fn per_scale_callback_sees_growing_maps() {
    let scene = generate_scene(&SceneSpec::three_planes(64, 48, 3), 1).unwrap();
    let cams = scene.cameras();
    let srcs = source_views(&cams, None);
    let mut dims = Vec::new();
    let mut cb = |l: usize, maps: &[HypothesisMap]| {
        dims.push((l, maps[0].dims()));
        Ok(())
    };
    run_acmm(&scene.images(), &cams, &srcs, &EngineConfig::default(), &quick(3, true), Some(&mut cb)).unwrap();
    assert_eq!(dims, vec![(0, (16, 12)), (1, (32, 24)), (2, (64, 48))]);
}

#[test]
fn restorer_replaces_exactly_the_trigger_set() {
    let scene = generate_scene(&SceneSpec::three_planes(64, 48, 3), 3).unwrap();
    let imgs = scene.images();
    let cams = scene.cameras();
    let gt = &scene.views[1];
    // Ground truth with a corrupted block.
    let mut up = HypothesisMap::from_grids(gt.depth.clone(), gt.normal.clone()).unwrap();
    for y in 15..35 {
        for x in 20..45 {
            let d = up.depth.at(x, y) * 1.15;
            up.depth.set(x, y, d);
        }
    }
    let srcs = [View::new(&imgs[0], &cams[0]), View::new(&imgs[2], &cams[2])];
    let cfg = EngineConfig {
        seed: 9,
        ..EngineConfig::default()
    };
    let out = detail_restore(&up, View::new(&imgs[1], &cams[1]), &srcs, &cfg, 0.1).unwrap();
    let mut inside = 0;
    for y in 0..48 {
        for x in 0..64 {
            let trigger = out.c_init.at(x, y) - out.c_photo.at(x, y) > 0.1;
            assert_eq!(out.replaced.at(x, y), trigger, "({x}, {y})");
            if !trigger {
                assert_eq!(out.map.depth.at(x, y).to_bits(), up.depth.at(x, y).to_bits());
            }
            if trigger && (20..45).contains(&x) && (15..35).contains(&y) {
                inside += 1;
            }
        }
    }
    let total = out.replaced.data().iter().filter(|&&r| r).count();
    assert!(inside * 2 > total, "replacements concentrate in the corrupted block: {inside}/{total}");
    assert!(inside > 100, "corrupted block mostly detected: {inside}");
}

#[test]
fn ground_truth_is_nearly_a_fixed_point_of_geometric_passes() {
    let scene = generate_scene(&SceneSpec::three_planes(80, 60, 3), 6).unwrap();
    let imgs = scene.images();
    let cams = scene.cameras();
    let r = 1;
    let init = HypothesisMap::from_grids(scene.views[r].depth.clone(), scene.views[r].normal.clone()).unwrap();
    let srcs = [View::new(&imgs[0], &cams[0]), View::new(&imgs[2], &cams[2])];
    let depths = [&scene.views[0].depth, &scene.views[2].depth];
    let cfg = EngineConfig {
        seed: 2,
        geometric: Some(GeometricParams::default()),
        ..EngineConfig::default()
    };
    let out = run_acmh(View::new(&imgs[r], &cams[r]), &srcs, &cfg, Some(&init), Some(&depths)).unwrap();
    let mask = interior_covisible(&scene, r, 6);
    let before = fraction_within(&init.depth, &scene.views[r].depth, &mask, 0.01);
    let after = fraction_within(&out.depth, &scene.views[r].depth, &mask, 0.01);
    assert_eq!(before, 1.0);
    assert!(after >= 0.98, "{after}");
}

proptest! {
    #[test]
    fn coarse_pixels_land_on_their_fine_counterparts(
        x in 0usize..40, y in 0usize..30, depth in 3.0f64..8.0, level in 0usize..2,
    ) {
        let scene_cams = generate_scene(&SceneSpec::textured_plane(160, 120, 2), 1).unwrap().cameras();
        let base = &scene_cams[0];
        let coarse = ScaledCamera::new(base, level, 3, 0.5).unwrap().camera;
        let fine = ScaledCamera::new(base, level + 1, 3, 0.5).unwrap().camera;
        let p = coarse_to_fine_pixel(&coarse, &fine, x, y, depth);
        prop_assert!((p.x - 2.0 * x as f64).abs() < 1.0);
        prop_assert!((p.y - 2.0 * y as f64).abs() < 1.0);
    }
}
