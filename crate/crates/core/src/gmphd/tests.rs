use nalgebra::{Matrix4, Vector4};
use proptest::prelude::*;

use super::*;

fn comp(weight: f64, mean: [f64; 4], label: u64) -> Component {
    Component {
        weight,
        mean: Vector4::from(mean),
        cov: Matrix4::identity() * 4.0,
        label,
    }
}

fn quiet() -> PhdConfig {
    PhdConfig {
        sigma_q: 0.0,
        ..PhdConfig::default()
    }
}

fn assert_spd(c: &Matrix4<f64>) {
    assert!((c - c.transpose()).abs().max() < 1e-9, "asymmetric {c}");
    let min = c.symmetric_eigen().eigenvalues.min();
    assert!(min > 0.0, "min eigenvalue {min}");
}

#[test]
fn process_noise_examples() {
    #[rustfmt::skip]
    let unit = Matrix4::new(
        1.0 / 3.0, 0.0, 0.5, 0.0,
        0.0, 1.0 / 3.0, 0.0, 0.5,
        0.5, 0.0, 1.0, 0.0,
        0.0, 0.5, 0.0, 1.0,
    );
    assert_eq!(process_noise(1.0, 1.0).unwrap(), unit);
    assert!((process_noise(1.0, 3.0).unwrap() - unit * 9.0).abs().max() < 1e-12);
    assert_eq!(process_noise(1.0, 0.0).unwrap(), Matrix4::zeros());
    assert!(process_noise(0.0, 1.0).is_err());
    assert!(process_noise(-1.0, 1.0).is_err());
}

#[test]
fn predict_examples() {
    let id = Homography::identity();
    let p = predict(&[comp(1.0, [10.0, 20.0, 0.0, 0.0], 1)], &quiet(), &id).unwrap();
    assert_eq!(p[0].mean, Vector4::new(10.0, 20.0, 0.0, 0.0));
    assert!((p[0].weight - 0.95).abs() < 1e-15);
    let p = predict(&[comp(1.0, [10.0, 20.0, 2.0, 0.0], 1)], &quiet(), &id).unwrap();
    assert!((p[0].mean[0] - 12.0).abs() < 1e-12);
    let p = predict(&[comp(1.0, [10.0, 20.0, 0.0, 0.0], 1)], &quiet(), &Homography::translation(5.0, 0.0)).unwrap();
    assert!((p[0].mean[0] - 15.0).abs() < 1e-12 && (p[0].mean[1] - 20.0).abs() < 1e-12);
    // Rotation turns the velocity with the frame.
    let rot = Homography::similarity((0.0, 0.0), std::f64::consts::FRAC_PI_2, 1.0, (0.0, 0.0));
    let p = predict(&[comp(1.0, [10.0, 0.0, 1.0, 0.0], 1)], &quiet(), &rot).unwrap();
    assert!((p[0].mean - Vector4::new(0.0, 11.0, 0.0, 1.0)).abs().max() < 1e-9);
    assert!(matches!(
        Homography::from_rows([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]]),
        Err(Error::Degenerate(_))
    ));
}

#[test]
fn update_examples() {
    let cfg = PhdConfig::default();
    let c = comp(0.7, [30.0, 40.0, 1.0, 0.0], 3);
    let u = update(std::slice::from_ref(&c), &[], &cfg);
    assert_eq!(u.len(), 1);
    assert!((u[0].weight - 0.7 * 0.2).abs() < 1e-15);

    let one = comp(1.0, [30.0, 40.0, 1.0, 0.0], 3);
    let negligible = PhdConfig { clutter: 1e-12, ..cfg };
    let u = update(std::slice::from_ref(&one), &[(30.0, 40.0)], &negligible);
    assert_eq!(u.len(), 2);
    assert!((u[1].weight - 1.0).abs() < 1e-8);
    assert!((u[1].mean - one.mean).abs().max() < 1e-12);
    assert!((u[0].weight - 0.2).abs() < 1e-15);

    assert!(update(&[], &[(1.0, 1.0), (5.0, 5.0)], &cfg).is_empty());
}

#[test]
fn mass_scales_per_step_without_births_or_detections() {
    let cfg = PhdConfig::default();
    let mut comps = vec![
        comp(0.9, [50.0, 50.0, 1.0, 2.0], 1),
        comp(0.4, [80.0, 20.0, -1.0, 0.0], 2),
        comp(0.05, [10.0, 10.0, 0.0, 0.0], 3),
    ];
    let w0: f64 = comps.iter().map(|c| c.weight).sum();
    let h = Homography::translation(1.0, -0.5);
    for k in 1..=10 {
        comps = update(&predict(&comps, &cfg, &h).unwrap(), &[], &cfg);
        let w: f64 = comps.iter().map(|c| c.weight).sum();
        assert!((w - w0 * (0.95f64 * 0.2).powi(k)).abs() < 1e-12);
    }
}

#[test]
fn birth_examples() {
    let cfg = PhdConfig::default();
    let id = Homography::identity();
    let mut next = 1;
    let b = birth(&[(100.0, 100.0)], &[(110.0, 100.0)], &id, &cfg, &mut next);
    assert_eq!(b.len(), 1);
    assert_eq!(b[0].mean, Vector4::new(110.0, 100.0, 10.0, 0.0));
    assert_eq!((b[0].weight, b[0].label, next), (0.25, 1, 2));
    assert_eq!(b[0].cov, cfg.birth_covariance());
    assert!(birth(&[(100.0, 100.0)], &[(135.0, 100.0)], &id, &cfg, &mut next).is_empty());
    assert!(birth(&[(100.0, 100.0)], &[(200.0, 100.0)], &id, &cfg, &mut next).is_empty());
    // The previous detection is carried into the current frame first.
    let b = birth(&[(100.0, 100.0)], &[(140.0, 100.0)], &Homography::translation(30.0, 0.0), &cfg, &mut next);
    assert_eq!(b[0].mean, Vector4::new(140.0, 100.0, 10.0, 0.0));
}

#[test]
fn prune_merge_examples() {
    let cfg = PhdConfig::default();
    let m = prune_merge(
        vec![comp(0.2, [20.0, 20.0, 1.0, 1.0], 7), comp(0.3, [20.0, 20.0, 1.0, 1.0], 4)],
        &cfg,
        100,
        100,
    );
    assert_eq!(m.len(), 1);
    assert!((m[0].weight - 0.5).abs() < 1e-15);
    assert!((m[0].mean - Vector4::new(20.0, 20.0, 1.0, 1.0)).abs().max() < 1e-12);
    assert_eq!(m[0].label, 4);
    assert!(prune_merge(vec![comp(0.04, [20.0, 20.0, 0.0, 0.0], 1)], &cfg, 100, 100).is_empty());
    assert!(prune_merge(vec![comp(0.9, [-5.0, 50.0, 0.0, 0.0], 1)], &cfg, 100, 100).is_empty());
    let far = prune_merge(
        vec![comp(0.6, [20.0, 20.0, 0.0, 0.0], 1), comp(0.6, [60.0, 20.0, 0.0, 0.0], 2)],
        &cfg,
        100,
        100,
    );
    assert_eq!(far.len(), 2);
    let capped = prune_merge(
        (0..5).map(|i| comp(0.1 + 0.1 * i as f64, [10.0 + 20.0 * i as f64, 50.0, 0.0, 0.0], i)).collect(),
        &PhdConfig {
            max_components: 2,
            ..cfg
        },
        100,
        100,
    );
    assert_eq!(capped.iter().map(|c| c.label).collect::<Vec<_>>(), vec![4, 3]);
}

#[test]
fn extract_examples() {
    let cfg = PhdConfig::default();
    assert!(extract_tracks(&[comp(0.5, [1.0, 1.0, 0.0, 0.0], 1)], &cfg).is_empty());
    assert_eq!(extract_tracks(&[comp(0.51, [1.0, 1.0, 0.0, 0.0], 1)], &cfg).len(), 1);
    assert!(extract_tracks(&[], &cfg).is_empty());
}

fn line_target(t: usize) -> (f64, f64) {
    (40.0 + 3.0 * t as f64, 60.0 + 1.5 * t as f64)
}

#[test]
fn single_target_is_tracked_with_one_label() {
    let mut f = PhdFilter::new(PhdConfig::default(), 300, 200).unwrap();
    let id = Homography::identity();
    let mut labels = std::collections::BTreeSet::new();
    let (mut se, mut n) = (0.0, 0);
    for t in 0..50 {
        let truth = line_target(t);
        let out = f.step(t, &[truth], &id).unwrap();
        for c in &f.components {
            assert_spd(&c.cov);
        }
        labels.extend(out.iter().map(|p| p.track_id));
        if t >= 5 {
            assert_eq!(out.len(), 1, "frame {t}");
            se += (out[0].x - truth.0).powi(2) + (out[0].y - truth.1).powi(2);
            n += 1;
        }
    }
    assert!((se / n as f64).sqrt() < 1.0);
    assert_eq!(labels.len(), 1);
}

#[test]
fn translating_camera_matches_stabilised_tracks() {
    let cam = |t: usize| (4.0 * (t as f64 * 0.7).sin() + 1.5 * t as f64, 3.0 * (t as f64 * 0.4).cos());
    let targets = |t: usize| vec![line_target(t), (250.0 - 2.0 * t as f64, 150.0)];
    let cfg = PhdConfig::default();
    let mut still = PhdFilter::new(cfg, 400, 300).unwrap();
    let mut moving = PhdFilter::new(cfg, 400, 300).unwrap();
    let mut max_diff: f64 = 0.0;
    let mut confirmed = 0;
    for t in 0..40 {
        let scene = targets(t);
        let (cx, cy) = cam(t);
        let image: Vec<(f64, f64)> = scene.iter().map(|&(x, y)| (x + cx, y + cy)).collect();
        let h = if t == 0 {
            Homography::identity()
        } else {
            let (px, py) = cam(t - 1);
            Homography::translation(cx - px, cy - py)
        };
        let a = still.step(t, &scene, &Homography::identity()).unwrap();
        let b = moving.step(t, &image, &h).unwrap();
        assert_eq!(a.len(), b.len(), "frame {t}");
        confirmed += a.len();
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p.track_id, q.track_id);
            max_diff = max_diff.max((p.x - (q.x - cx)).hypot(p.y - (q.y - cy)));
        }
    }
    assert!(confirmed > 40);
    assert!(max_diff < 0.5, "{max_diff}");
}

#[test]
fn run_tracker_checks_transform_count() {
    let d = Detection {
        frame: 5,
        x: 1.0,
        y: 1.0,
        score: 1.0,
        source: crate::records::Source::Direct,
        bbox: Vec::new(),
    };
    let cfg = PhdConfig::default();
    assert!(matches!(
        run_tracker(std::slice::from_ref(&d), &[Homography::identity(); 3], 10, 10, &cfg),
        Err(Error::MissingData(_))
    ));
    assert!(run_tracker(&[d], &[], 10, 10, &cfg).unwrap().is_empty());
}

fn arb_component() -> impl Strategy<Value = Component> {
    (
        0.01f64..1.0,
        (10.0f64..90.0, 10.0f64..90.0, -5.0f64..5.0, -5.0f64..5.0),
        proptest::collection::vec(-2.0f64..2.0, 16),
        0u64..50,
    )
        .prop_map(|(w, (x, y, vx, vy), a, label)| {
            let a = Matrix4::from_row_slice(&a);
            Component {
                weight: w,
                mean: Vector4::new(x, y, vx, vy),
                cov: a * a.transpose() + Matrix4::identity() * 0.5,
                label,
            }
        })
}

proptest! {
    #[test]
    fn covariances_stay_spd(
        comps in proptest::collection::vec(arb_component(), 1..8),
        dets in proptest::collection::vec((0.0f64..100.0, 0.0f64..100.0), 0..6),
        angle in -0.1f64..0.1,
        scale in 0.95f64..1.05,
        shift in (-5.0f64..5.0, -5.0f64..5.0),
    ) {
        let cfg = PhdConfig::default();
        let h = Homography::similarity((50.0, 50.0), angle, scale, shift);
        let p = predict(&comps, &cfg, &h).unwrap();
        for c in &p { assert_spd(&c.cov); }
        let u = update(&p, &dets, &cfg);
        for c in &u { assert_spd(&c.cov); }
        for c in prune_merge(u, &cfg, 100, 100) { assert_spd(&c.cov); }
    }

    #[test]
    fn birth_ignores_detection_order(
        prev in proptest::collection::vec((0.0f64..100.0, 0.0f64..100.0), 0..8),
        curr in proptest::collection::vec((0.0f64..100.0, 0.0f64..100.0), 0..8),
        k in 0usize..8,
    ) {
        let cfg = PhdConfig::default();
        let h = Homography::translation(2.0, -1.0);
        let (mut a, mut b) = (1, 1);
        let base = birth(&prev, &curr, &h, &cfg, &mut a);
        let mut p2 = prev.clone();
        p2.reverse();
        let mut c2 = curr.clone();
        if !c2.is_empty() {
            let k = k % c2.len();
            c2.rotate_left(k);
        }
        prop_assert_eq!(base, birth(&p2, &c2, &h, &cfg, &mut b));
        prop_assert_eq!(a, b);
    }
}
