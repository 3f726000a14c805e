mod common;

use acmm_core::engine::{run_acmh_all, source_views, View};
use acmm_core::synth::{generate_scene, SceneSpec};
use acmm_core::EngineConfig;
use common::{fraction_within, interior_covisible};
use nalgebra::Vector2;

#[test]
fn textured_plane_is_recovered() {
    let scene = generate_scene(&SceneSpec::textured_plane(96, 72, 3), 3).unwrap();
    let imgs = scene.images();
    let cams = scene.cameras();
    let views: Vec<View> = imgs.iter().zip(&cams).map(|(i, c)| View::new(i, c)).collect();
    let cfg = EngineConfig {
        seed: 1,
        ..EngineConfig::default()
    };
    let maps = run_acmh_all(&views, &source_views(&cams, None), &cfg).unwrap();
    for (i, m) in maps.iter().enumerate() {
        let mask = interior_covisible(&scene, i, 6);
        let f = fraction_within(&m.depth, &scene.views[i].depth, &mask, 0.01);
        assert!(f >= 0.95, "view {i}: {f}");

        let cam = &cams[i];
        for y in 0..72 {
            for x in 0..96 {
                let d = m.depth.at(x, y);
                assert!(d >= cam.depth_min() && d <= cam.depth_max());
                let n = m.normal.get(x, y);
                assert!((n.norm() - 1.0).abs() < 1e-9);
                assert!(n.dot(&cam.ray(&Vector2::new(x as f64, y as f64))) < 0.0);
            }
        }
    }
}

#[test]
fn capped_source_lists_pick_nearest_cameras() {
    let scene = generate_scene(&SceneSpec::textured_plane(32, 24, 5), 1).unwrap();
    let s = source_views(&scene.cameras(), Some(2));
    assert_eq!(s[0], vec![1, 2]);
    assert_eq!(s[2], vec![1, 3]);
    assert_eq!(s[4], vec![2, 3]);
}
