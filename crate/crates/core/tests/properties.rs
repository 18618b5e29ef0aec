mod common;

use std::f64::consts::{PI, TAU};

use facedir::evalkit::{fde, fie, random_scene, SceneParams};
use facedir::facing::match_pattern;
use facedir::locate::{dbscan, triangulate_angles, DeviceLayout, PairwiseAoas};
use facedir::num::{wrap_pi, wrap_two_pi};
use facedir::scene::{DevicePose, PatternId, Point, Scene};
use proptest::prelude::*;
use rand::SeedableRng;

fn layout() -> impl Strategy<Value = DeviceLayout> {
    prop::collection::vec((0.0f64..6.0, 0.0f64..6.0, 0.0f64..TAU), 3..8).prop_map(|v| {
        DeviceLayout::from_devices(v.into_iter().map(|(x, y, o)| DevicePose::new(Point::new(x, y), o)).collect())
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn fft_convolution_matches_direct(a in common::samples(17..300), b in common::samples(17..200)) {
        common::fft_convolution_matches_direct(a, b)?;
    }

    #[test]
    fn correlation_matches_direct(a in common::samples(2..200), b in common::samples(2..200), l in 0usize..60) {
        common::correlation_matches_direct(a, b, l)?;
    }

    #[test]
    fn deconvolution_round_trip(v in common::samples(256..600), h in common::samples(1..32)) {
        common::deconvolution_round_trip(v, h)?;
    }

    #[test]
    fn gcc_phat_recovers_shift(a in common::samples(512..1024), s in -30i64..30) {
        common::gcc_phat_recovers_shift(a, s)?;
    }

    #[test]
    fn fractional_shifts_compose(x in common::samples(256..512), a in -5.0f64..5.0, b in -5.0f64..5.0) {
        common::fractional_shifts_compose(x, a, b)?;
    }

    #[test]
    fn delay_sum_coherent_gain(s in common::samples(512..1024), m in 4usize..9, r in 0.03f64..0.06, a in 0.0f64..TAU) {
        common::delay_sum_coherent_gain(s, m, r, a)?;
    }

    #[test]
    fn wrapping_ranges(a in -100.0f64..100.0) {
        let p = wrap_pi(a);
        let t = wrap_two_pi(a);
        prop_assert!((-PI..PI).contains(&p));
        prop_assert!((0.0..TAU).contains(&t));
        prop_assert!(((p - a) / TAU).fract().abs().min(1.0 - ((p - a) / TAU).fract().abs()) < 1e-9);
    }

    #[test]
    fn facing_metrics(l in layout(), ux in 0.0f64..6.0, uy in 0.0f64..6.0, i in 0usize..8, j in 0usize..8) {
        let (i, j) = (i % l.len(), j % l.len());
        let user = Point::new(ux, uy);
        prop_assume!(l.devices.iter().all(|d| d.position.dist(user) > 1e-3));
        let e = fde(&l, user, i, j);
        prop_assert!((0.0..=180.0).contains(&e));
        prop_assert_eq!(e, fde(&l, user, j, i));
        let f = fie(&l, user, i, j);
        prop_assert_eq!(f == 0, i == j);
        prop_assert!(f < l.len());
    }

    #[test]
    fn noiseless_triangulation_is_exact(l in layout(), ux in 0.0f64..6.0, uy in 0.0f64..6.0) {
        let user = Point::new(ux, uy);
        prop_assume!(l.devices.iter().all(|d| d.position.dist(user) > 0.2));
        let bearings: Vec<f64> = l.devices.iter().map(|d| (user - d.position).angle()).collect();
        // generic geometry: no two rays nearly parallel
        for a in 0..bearings.len() {
            for b in a + 1..bearings.len() {
                prop_assume!(wrap_pi(bearings[a] - bearings[b]).sin().abs() > 0.05);
            }
        }
        let angles: Vec<f64> = l.devices.iter().zip(&bearings).map(|(d, b)| wrap_two_pi(b - d.orientation)).collect();
        let loc = triangulate_angles(&l, &angles).unwrap();
        prop_assert!(loc.position.dist(user) < 1e-6, "{:?} vs {:?}", loc.position, user);
    }

    #[test]
    fn pairwise_directions_are_reciprocal(l in layout()) {
        let p = PairwiseAoas::from_poses(&l.devices);
        for (&(i, j), &theta) in p.iter() {
            let back = p.get(j, i).unwrap();
            let gi = l.devices[i].orientation + theta;
            let gj = l.devices[j].orientation + back;
            prop_assert!(wrap_pi(gi - gj - PI).abs() < 1e-9);
        }
    }

    #[test]
    fn pattern_match_ignores_loudness(l in layout(), ux in 0.0f64..6.0, uy in 0.0f64..6.0,
                                      p in prop::collection::vec(0.01f64..1.0, 8), gain in 0.001f64..1000.0) {
        let user = Point::new(ux, uy);
        prop_assume!(l.devices.iter().all(|d| d.position.dist(user) > 0.1));
        let p = &p[..l.len()];
        let scaled: Vec<f64> = p.iter().map(|v| v * gain).collect();
        let pattern = PatternId::Cardioid.pattern();
        let a = match_pattern(p, &l, user, &pattern, 2.0).unwrap();
        let b = match_pattern(&scaled, &l, user, &pattern, 2.0).unwrap();
        prop_assert_eq!(a.device_index, b.device_index);
    }

    #[test]
    fn dbscan_labels_are_consistent(pts in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 1..40)) {
        let coords: Vec<[f64; 2]> = pts.iter().map(|&(x, y)| [x, y]).collect();
        let labels = dbscan(&coords, 0.5, 2);
        let clusters = labels.iter().flatten().max().map_or(0, |m| m + 1);
        for c in 0..clusters {
            prop_assert!(labels.contains(&Some(c)));
        }
        // a point with a neighbour within eps is never noise
        for (i, a) in coords.iter().enumerate() {
            let has_neighbour = coords.iter().enumerate().any(|(j, b)| j != i && (a[0] - b[0]).hypot(a[1] - b[1]) <= 0.5);
            if has_neighbour {
                prop_assert!(labels[i].is_some());
            }
        }
    }

    #[test]
    fn generated_scenes_round_trip(seed in 0u64..1000, n in 2usize..7) {
        let params = SceneParams { devices: n, ..SceneParams::default() };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let scene = random_scene(&params, seed, &mut rng);
        scene.validate().unwrap();
        let back = Scene::from_toml_str(&scene.to_toml_string().unwrap()).unwrap();
        prop_assert_eq!(back, scene);
    }
}
