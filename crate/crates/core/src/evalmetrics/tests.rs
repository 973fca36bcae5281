use proptest::prelude::*;

use super::*;

fn gt_line(id: u64, frames: std::ops::Range<usize>, step_m: impl Fn(usize) -> f64) -> Vec<GtPoint> {
    let mut x = 0.0;
    frames
        .map(|f| {
            x += step_m(f);
            GtPoint {
                frame: f,
                id,
                x: x / 0.25,
                y: 10.0,
                world: Some((x, 2.5)),
            }
        })
        .collect()
}

#[test]
fn stationary_filter_examples() {
    let fast = gt_line(1, 0..10, |_| 1.0);
    assert_eq!(filter_stationary(&fast, 0.8).unwrap(), fast);
    let slow = gt_line(2, 0..10, |_| 0.5);
    assert!(filter_stationary(&slow, 0.8).unwrap().is_empty());
    let parks = gt_line(3, 0..10, |f| if f < 5 { 1.0 } else { 0.0 });
    let kept: Vec<usize> = filter_stationary(&parks, 0.8).unwrap().iter().map(|g| g.frame).collect();
    assert_eq!(kept, vec![0, 1, 2, 3, 4]);
    let mut bare = fast.clone();
    bare[3].world = None;
    assert!(matches!(filter_stationary(&bare, 0.8), Err(Error::MissingData(_))));
}

#[test]
fn matching_examples() {
    let m = match_detections(&[(5.0, 5.0)], &[(5.0, 5.0)], 10.0);
    assert_eq!((m.true_positives, m.false_positives, m.false_negatives), (1, 0, 0));
    let m = match_detections(&[(15.1, 5.0)], &[(5.0, 5.0)], 10.0);
    assert_eq!((m.true_positives, m.false_positives, m.false_negatives), (0, 1, 1));
    let m = match_detections(&[(15.0, 5.0)], &[(5.0, 5.0)], 10.0);
    assert_eq!(m.true_positives, 1);
    let m = match_detections(&[(4.0, 5.0), (6.5, 5.0)], &[(5.0, 5.0)], 10.0);
    assert_eq!((m.true_positives, m.false_positives, m.false_negatives), (1, 1, 0));
    assert_eq!(m.pairs, vec![(0, 0)]);
}

#[test]
fn prf_examples() {
    let p = prf(9, 1, 1);
    assert!((p.precision - 0.9).abs() < 1e-12 && (p.recall - 0.9).abs() < 1e-12 && (p.f1 - 0.9).abs() < 1e-12);
    assert_eq!(prf(0, 0, 0), Prf { precision: 0.0, recall: 0.0, f1: 0.0 });
    // Counts matching P = 0.941, R = 0.891.
    let (tp, fn_) = (891, 109);
    let fp = (tp as f64 / 0.941 - tp as f64).round() as usize;
    let p = prf(tp, fp, fn_);
    assert!((p.precision - 0.941).abs() < 5e-4 && (p.recall - 0.891).abs() < 5e-4);
    assert!((p.f1 - 0.915).abs() < 1e-3);
}

fn obs(id: u64, frames: impl IntoIterator<Item = usize>, pos: impl Fn(usize) -> (f64, f64)) -> Vec<Obs> {
    frames
        .into_iter()
        .map(|f| {
            let (x, y) = pos(f);
            Obs { frame: f, id, x, y }
        })
        .collect()
}

/// 40 moving frames, 25 stationary, 60 moving; tracks of 26, 5 and 64 frames.
fn footnote_case() -> (Vec<Obs>, Vec<Obs>) {
    let path = |f: usize| {
        let x = if f < 40 {
            4.0 * f as f64
        } else if f < 65 {
            156.0
        } else {
            156.0 + 4.0 * (f - 64) as f64
        };
        (x, 50.0)
    };
    let gt: Vec<GtPoint> = (0..125)
        .map(|f| {
            let (x, y) = path(f);
            GtPoint {
                frame: f,
                id: 1,
                x,
                y,
                world: Some((0.25 * x, 0.25 * y)),
            }
        })
        .collect();
    let moving: Vec<Obs> = filter_stationary(&gt, STATIONARY_METRES).unwrap().iter().map(Obs::from).collect();
    assert_eq!(moving.len(), 100);
    let mut tracks = obs(10, 0..26, path);
    tracks.extend(obs(11, 38..43, path));
    tracks.extend(obs(12, (34..38).chain(65..125), path));
    (tracks, moving)
}

#[test]
fn footnote_example() {
    let (tracks, targets) = footnote_case();
    let m = track_metrics(&tracks, &targets, &TrackMetricsConfig::default());
    assert_eq!(m.targets, 1);
    assert!((m.target_purity - 0.64).abs() < 1e-12);
    assert_eq!(m.target_continuity, 2.0);

    let all = TrackMetricsConfig {
        continuity_min_assigned: None,
        ..TrackMetricsConfig::default()
    };
    assert_eq!(track_metrics(&tracks, &targets, &all).target_continuity, 3.0);
}

#[test]
fn exact_track_is_pure_and_continuous() {
    let t = obs(1, 0..20, |f| (f as f64 * 3.0, 7.0));
    let g = obs(9, 0..20, |f| (f as f64 * 3.0, 7.0));
    let m = track_metrics(&t, &g, &TrackMetricsConfig::default());
    assert_eq!(
        (m.target_purity, m.target_continuity, m.track_purity, m.track_continuity),
        (1.0, 1.0, 1.0, 1.0)
    );
}

#[test]
fn track_spanning_two_targets() {
    let a = obs(1, 0..10, |f| (f as f64, 0.0));
    let b = obs(2, 10..20, |f| (f as f64, 100.0));
    let targets: Vec<Obs> = a.iter().chain(&b).copied().collect();
    let track = obs(7, 0..20, |f| if f < 10 { (f as f64, 0.0) } else { (f as f64, 100.0) });
    let m = track_metrics(&track, &targets, &TrackMetricsConfig::default());
    assert_eq!((m.track_purity, m.track_continuity), (0.5, 2.0));
    assert_eq!((m.target_purity, m.target_continuity), (1.0, 1.0));
}

#[test]
fn short_entities_are_ignored() {
    let t = obs(1, 0..4, |f| (f as f64, 0.0));
    let g = obs(2, 0..20, |f| (f as f64, 0.0));
    let m = track_metrics(&t, &g, &TrackMetricsConfig::default());
    assert_eq!((m.tracks, m.targets, m.target_purity, m.target_continuity), (0, 1, 0.0, 0.0));
}

#[test]
fn report_formats() {
    let c = Counts { tp: 9, fp: 1, fn_: 1 };
    let r = detection_report("clean", 47, &c);
    assert!(r.contains("precision=0.9000\n") && r.contains("tp=9\n") && r.starts_with("name=clean\n"));
    assert_eq!(detection_csv_row("clean", 47, &c), "clean,47,9,1,1,0.9000,0.9000,0.9000");
    assert_eq!(DETECTION_CSV_HEADER.split(',').count(), 8);
    let m = TrackMetrics {
        target_purity: 0.64,
        target_continuity: 2.0,
        track_purity: 1.0,
        track_continuity: 1.0,
        targets: 1,
        tracks: 3,
    };
    assert!(tracking_report("x", &m).contains("target_purity=64.00\n"));
    assert_eq!(tracking_csv_row("x", &m), "x,1,3,64.00,2.000,100.00,1.000");
}

#[test]
fn overlay_marks_both_sets() {
    let f = crate::imgcore::Frame::filled(20, 20, 100.0);
    let rgb = render_overlay(&f, &[(10.0, 10.0)], &[(5.0, 5.0)]);
    assert_eq!(rgb.len(), 20 * 20 * 3);
    let px = |x: usize, y: usize| &rgb[3 * (y * 20 + x)..3 * (y * 20 + x) + 3];
    assert_eq!(px(5, 5), &[0, 255, 0]);
    assert_eq!(px(7, 7), &[255, 0, 0]);
    assert_eq!(px(0, 19), &[100, 100, 100]);
    let dir = tempfile::tempdir().unwrap();
    write_overlay(&dir.path().join("o.png"), &f, &[], &[]).unwrap();
}

fn points(max: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    proptest::collection::vec((0.0f64..60.0, 0.0f64..60.0), 0..max)
}

proptest! {
    #[test]
    fn matching_is_order_invariant_and_consistent(dets in points(12), gt in points(12), rot in 0usize..12) {
        let m = match_detections(&dets, &gt, 10.0);
        prop_assert_eq!(m.true_positives + m.false_negatives, gt.len());
        prop_assert_eq!(m.true_positives + m.false_positives, dets.len());
        let mut shuffled = dets.clone();
        if !shuffled.is_empty() {
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
        }
        let s = match_detections(&shuffled, &gt, 10.0);
        prop_assert_eq!(s.true_positives, m.true_positives);
        for (i, j) in m.pairs {
            let (d, g) = (dets[i], gt[j]);
            prop_assert!((d.0 - g.0).hypot(d.1 - g.1) <= 10.0);
        }
    }

    #[test]
    fn f1_is_harmonic_mean(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50) {
        let p = prf(tp, fp, fn_);
        if p.precision + p.recall > 0.0 {
            prop_assert!((p.f1 - 2.0 * p.precision * p.recall / (p.precision + p.recall)).abs() < 1e-12);
        }
    }

    #[test]
    fn swapping_roles_swaps_metrics(
        a in proptest::collection::vec((0usize..12, 1u64..4, 0.0f64..40.0, 0.0f64..40.0), 0..40),
        b in proptest::collection::vec((0usize..12, 1u64..4, 0.0f64..40.0, 0.0f64..40.0), 0..40),
    ) {
        let to_obs = |v: &[(usize, u64, f64, f64)]| {
            // One point per (id, frame).
            let mut m = BTreeMap::new();
            for &(f, id, x, y) in v {
                m.insert((id, f), Obs { frame: f, id, x, y });
            }
            m.into_values().collect::<Vec<_>>()
        };
        let (a, b) = (to_obs(&a), to_obs(&b));
        let cfg = TrackMetricsConfig::default();
        let ab = track_metrics(&a, &b, &cfg);
        let ba = track_metrics(&b, &a, &cfg);
        prop_assert_eq!(ab.target_purity, ba.track_purity);
        prop_assert_eq!(ab.target_continuity, ba.track_continuity);
        prop_assert_eq!(ab.track_purity, ba.target_purity);
        prop_assert_eq!(ab.track_continuity, ba.target_continuity);
        for v in [ab.target_purity, ab.track_purity] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
