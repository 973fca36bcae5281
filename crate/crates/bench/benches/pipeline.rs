use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use wami_bench::preset_video;
use wami_core::background::{build_background, foreground, SubtractionConfig};
use wami_core::detector::{chain_at, classifier_training_set, history_at, DetectorConfig};
use wami_core::gmphd::{PhdConfig, PhdFilter};
use wami_core::nn::{classifier, Tensor4};
use wami_core::pipeline::{detect_video, GateSource};
use wami_core::registration::{register_pair, Homography, RegistrationMode, RegistrationParams};

fn background(c: &mut Criterion) {
    let (video, _) = preset_video("clean", 6);
    let sub = SubtractionConfig::full();
    let chain = chain_at(&video.homographies, 5, 3);
    let history = history_at(&video.frames, 5, 3);
    c.bench_function("background/model+foreground 320x256", |b| {
        b.iter(|| {
            let model = build_background(black_box(&history), &chain, sub.history, 5).unwrap();
            foreground(&video.frames[5], &model, &sub).unwrap()
        })
    });
}

fn registration(c: &mut Criterion) {
    let (video, _) = preset_video("unstable-camera", 2);
    let p = RegistrationParams::default();
    let mut g = c.benchmark_group("registration");
    g.sample_size(20);
    for mode in [RegistrationMode::Direct, RegistrationMode::Feature] {
        g.bench_function(mode.to_string(), |b| {
            b.iter(|| register_pair(&video.frames[0], black_box(&video.frames[1]), mode, &p).unwrap())
        });
    }
    g.finish();
}

fn detection(c: &mut Criterion) {
    let (video, gt) = preset_video("dense", 8);
    let sub = SubtractionConfig::full();
    let cfg = DetectorConfig::default();
    let net = classifier::<f32>(1);
    let mut g = c.benchmark_group("detection");
    g.sample_size(10);
    g.bench_function("oracle gate, 5 frames", |b| {
        b.iter(|| detect_video(&video, GateSource::Oracle(&gt), None, &sub, &cfg).unwrap())
    });
    g.bench_function("classifier gate, 5 frames", |b| {
        b.iter(|| detect_video(&video, GateSource::Network(&net), None, &sub, &cfg).unwrap())
    });
    g.bench_function("classifier training set, 5 frames", |b| {
        b.iter(|| classifier_training_set(&video.frames, &video.homographies, &gt, &sub, &cfg, 0).unwrap())
    });
    g.finish();
}

fn inference(c: &mut Criterion) {
    let net = classifier::<f32>(2);
    let x = Tensor4::from_fn([64, 4, 21, 21], |i| (i % 17) as f32 / 17.0);
    c.bench_function("classifier/64 windows", |b| b.iter(|| net.infer_batched(black_box(&x)).unwrap()));
}

fn tracking(c: &mut Criterion) {
    let targets: Vec<Vec<(f64, f64)>> = (0..30)
        .map(|t| (0..20).map(|k| (20.0 + 3.0 * t as f64 + 7.0 * k as f64, 15.0 + 12.0 * k as f64)).collect())
        .collect();
    c.bench_function("gmphd/30 frames, 20 targets", |b| {
        b.iter(|| {
            let mut f = PhdFilter::new(PhdConfig::default(), 400, 300).unwrap();
            for (t, z) in targets.iter().enumerate() {
                black_box(f.step(t, z, &Homography::identity()).unwrap());
            }
        })
    });
}

criterion_group!(benches, background, registration, detection, inference, tracking);
criterion_main!(benches);
