use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use wami_core::config::PipelineConfig;
use wami_core::detector::{calibrate_phi, classifier_training_set, regression_training_set};
use wami_core::evalmetrics::{
    detection_csv_row, detection_report, evaluate_detections, filter_stationary, tracking_csv_row, tracking_metrics,
    tracking_report, write_overlay, TrackMetricsConfig, DETECTION_CSV_HEADER, MATCH_RADIUS, STATIONARY_METRES,
    TRACKING_CSV_HEADER,
};
use wami_core::gmphd::run_tracker;
use wami_core::imgcore::io::{read_frame, write_mask};
use wami_core::nn::{
    classifier, evaluate, load_weights_file, regressor_with_hidden, save_weights_file, train, write_training_log,
    Dataset, Network, TrainConfig,
};
use wami_core::pipeline::{detect_video_frames, frame_paths, load_video, video_evidence, GateSource, Video};
use wami_core::records::{read_detections, read_gt, read_tracks, write_detections, write_tracks, GtPoint};
use wami_core::registration::read_homographies;
use wami_core::synth::{preset, render_video, write_output, SceneSpec};
use wami_core::Error;

use crate::{
    CalibrateArgs, Cli, Command, DetectArgs, EvalArgs, EvalMode, Failure, ReportArgs, SynthArgs, TrackArgs, TrainArgs,
};

type Outcome = Result<(), Failure>;

/// Frame bound for tracking when the frame size is unknown.
const UNBOUNDED: usize = 1 << 24;

pub fn run(cli: &Cli) -> Outcome {
    let mut cfg = load_config(cli)?;
    if let Some(mode) = cli.registration {
        cfg.registration.mode = mode;
    }
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::TrainClassifier(a) => train_classifier(a, &cfg),
        Command::TrainRegressor(a) => train_regressor(a, &cfg),
        Command::Calibrate(a) => calibrate(a, cli.config.as_deref(), cfg),
        Command::Detect(a) => detect(a, cfg),
        Command::Track(a) => track(a, &cfg),
        Command::Eval(a) => eval(a),
        Command::Report(a) => report(a),
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Failure> {
    match &cli.config {
        None => Ok(PipelineConfig::default()),
        // Calibration may create the file it is pointed at.
        Some(p) if !p.exists() && matches!(cli.command, Command::Calibrate(_)) => Ok(PipelineConfig::default()),
        Some(p) if !p.exists() => Err(Error::MissingData(format!("config {} does not exist", p.display())).into()),
        Some(p) => Ok(PipelineConfig::load(p)?),
    }
}

fn gt_path(video: &Path, gt: Option<&PathBuf>) -> PathBuf {
    gt.cloned().unwrap_or_else(|| video.join("gt.csv"))
}

fn open_video(dir: &Path, cfg: &PipelineConfig) -> Result<Video, Failure> {
    Ok(load_video(dir, cfg.registration.mode, &cfg.registration_params())?)
}

fn synth(a: &SynthArgs) -> Outcome {
    let mut spec = match (&a.preset, &a.spec) {
        (Some(name), _) => preset(name, a.seed.unwrap_or(0))?,
        (None, Some(path)) => SceneSpec::load(path)?,
        (None, None) => return Err(Failure::Usage("one of --preset or --spec is required".into())),
    };
    if let (Some(seed), Some(_)) = (a.seed, &a.spec) {
        spec.seed = seed;
    }
    if let Some(n) = a.frames {
        spec.frames = n;
    }
    let out = render_video(&spec)?;
    write_output(&spec, &out, &a.out)?;
    println!(
        "scene={} frames={} size={}x{} gt_points={}",
        spec.name,
        out.frames.len(),
        spec.width,
        spec.height,
        out.gt.len()
    );
    Ok(())
}

/// Videos paired with their ground truth.
fn training_inputs(a: &TrainArgs) -> Result<Vec<(PathBuf, PathBuf)>, Failure> {
    if !a.gts.is_empty() && a.gts.len() != a.videos.len() {
        return Err(Failure::Usage(format!(
            "{} --video but {} --gt; give one --gt per video or none",
            a.videos.len(),
            a.gts.len()
        )));
    }
    Ok(a.videos
        .iter()
        .enumerate()
        .map(|(i, v)| (v.clone(), gt_path(v, a.gts.get(i))))
        .collect())
}

fn fit(
    net: &mut Network<f32>,
    data: &Dataset<f32>,
    epochs: usize,
    seed: u64,
    cfg: &PipelineConfig,
    log: Option<&Path>,
) -> Outcome {
    let (kept, held) = data.split(cfg.training.holdout, seed);
    let mut tc = TrainConfig::new(epochs, seed);
    tc.batch_size = cfg.training.batch_size;
    tc.learning_rate = cfg.training.learning_rate;
    tc.momentum = cfg.training.momentum;
    println!("samples={} held_out={}", kept.len(), held.len());
    let stats = train(net, &kept, &tc, |s| {
        println!("epoch={} loss={:.6} accuracy={:.4}", s.epoch, s.loss, s.accuracy);
    })?;
    if let Some(path) = log {
        write_training_log(path, &stats)?;
    }
    if !held.is_empty() {
        println!("held_out_accuracy={:.4}", evaluate(net, &held)?);
    }
    Ok(())
}

fn train_classifier(a: &TrainArgs, cfg: &PipelineConfig) -> Outcome {
    let seed = a.seed.unwrap_or(cfg.seed);
    let (sub, det) = (cfg.subtraction(), cfg.detector());
    let mut data = Dataset::new(wami_core::nn::CLASSIFIER_INPUT, 2);
    for (k, (video, gt)) in training_inputs(a)?.iter().enumerate() {
        let v = open_video(video, cfg)?;
        let gt = read_gt(gt)?;
        let (d, s) = classifier_training_set(&v.frames, &v.homographies, &gt, &sub, &det, seed.wrapping_add(k as u64))?;
        println!(
            "video={} positives={} negatives={} kept_negatives={} discarded={}",
            video.display(),
            s.positives,
            s.negatives_found,
            s.negatives_kept,
            s.discarded
        );
        data.extend(&d)?;
    }
    let mut net = classifier::<f32>(seed);
    let epochs = a.epochs.unwrap_or(cfg.training.classifier_epochs);
    fit(&mut net, &data, epochs, seed, cfg, a.log.as_deref())?;
    save_weights_file(&a.out, &net)?;
    Ok(())
}

fn train_regressor(a: &TrainArgs, cfg: &PipelineConfig) -> Outcome {
    let seed = a.seed.unwrap_or(cfg.seed);
    let (sub, det) = (cfg.subtraction(), cfg.detector());
    let mut data = Dataset::new(wami_core::nn::REGRESSOR_INPUT, wami_core::nn::REGRESSOR_OUTPUTS);
    for (k, (video, gt)) in training_inputs(a)?.iter().enumerate() {
        let v = open_video(video, cfg)?;
        let gt = read_gt(gt)?;
        let d = regression_training_set(&v.frames, &v.homographies, &gt, &sub, &det, seed.wrapping_add(k as u64))?;
        println!("video={} windows={}", video.display(), d.len());
        data.extend(&d)?;
    }
    let mut net = regressor_with_hidden::<f32>(seed, cfg.training.regressor_hidden);
    let epochs = a.epochs.unwrap_or(cfg.training.regressor_epochs);
    fit(&mut net, &data, epochs, seed, cfg, a.log.as_deref())?;
    save_weights_file(&a.out, &net)?;
    Ok(())
}

/// Ground truth of moving objects only, unless stationary ones are kept.
fn moving_gt(path: &Path, keep_stationary: bool) -> Result<Vec<GtPoint>, Failure> {
    let gt = read_gt(path)?;
    if keep_stationary {
        return Ok(gt);
    }
    filter_stationary(&gt, STATIONARY_METRES).map_err(|e| match e {
        Error::MissingData(m) => Error::MissingData(format!("{m}; pass --keep-stationary to score all points")).into(),
        e => e.into(),
    })
}

fn calibrate(a: &CalibrateArgs, config_path: Option<&Path>, mut cfg: PipelineConfig) -> Outcome {
    let out = a
        .out
        .as_deref()
        .or(config_path)
        .ok_or_else(|| Failure::Usage("calibrate needs --out or --config to write the result".into()))?
        .to_path_buf();
    let video = open_video(&a.video, &cfg)?;
    let gt = moving_gt(&gt_path(&a.video, a.gt.as_ref()), false)?;
    let net: Network<f32> = load_weights_file(&a.classifier)?;
    let reg: Option<Network<f32>> = a.regressor.as_deref().map(load_weights_file).transpose()?;
    let det = cfg.detector();
    let evidence = video_evidence(&video, GateSource::Network(&net), &cfg.subtraction(), &det)?;
    let (phi, sweep) = calibrate_phi(&evidence, &gt, reg.as_ref(), &det, MATCH_RADIUS)?;
    for (p, f1, n) in &sweep {
        println!("phi={p:.2} f1={f1:.4} detections={n}");
    }
    println!("chosen_phi={phi:.2}");
    cfg.active_mut().phi = phi;
    cfg.save(&out)?;
    Ok(())
}

fn detect(a: &DetectArgs, mut cfg: PipelineConfig) -> Outcome {
    if let Some(phi) = a.phi {
        cfg.active_mut().phi = phi;
        cfg.validate()?;
    }
    let video = open_video(&a.video, &cfg)?;
    let reg: Option<Network<f32>> = a.regressor.as_deref().map(load_weights_file).transpose()?;
    let (sub, det) = (cfg.subtraction(), cfg.detector());
    let (net, gt);
    let gate = if a.oracle_classifier {
        gt = read_gt(&gt_path(&a.video, a.gt.as_ref()))?;
        GateSource::Oracle(&gt)
    } else {
        let path = a.classifier.as_ref().ok_or_else(|| Failure::Usage("--classifier is required".into()))?;
        net = load_weights_file::<f32>(path)?;
        GateSource::Network(&net)
    };
    let results = detect_video_frames(&video, gate, reg.as_ref(), &sub, &det)?;
    if let Some(dir) = &a.dump_masks {
        std::fs::create_dir_all(dir)?;
        for r in &results {
            write_mask(&dir.join(format!("foreground_{:05}.pgm", r.frame)), &r.foreground)?;
            write_mask(&dir.join(format!("accepted_{:05}.pgm", r.frame)), &r.output.accepted)?;
        }
    }
    let dets: Vec<_> = results.into_iter().flat_map(|r| r.output.detections).collect();
    write_detections(&a.out, &dets)?;
    println!("frames={} detections={}", video.frames.len(), dets.len());
    Ok(())
}

fn track(a: &TrackArgs, cfg: &PipelineConfig) -> Outcome {
    let dets = read_detections(&a.detections)?;
    let hs = match &a.homographies {
        Some(p) => read_homographies(p)?,
        None => Vec::new(),
    };
    let (w, h) = match (&a.video, a.width, a.height) {
        (Some(v), _, _) => {
            let first = read_frame(&frame_paths(v)?[0], 0)?;
            (first.width(), first.height())
        }
        (None, Some(w), Some(h)) => (w, h),
        _ => (UNBOUNDED, UNBOUNDED),
    };
    let tracks = run_tracker(&dets, &hs, w, h, &cfg.tracker)?;
    write_tracks(&a.out, &tracks)?;
    let ids: std::collections::BTreeSet<u64> = tracks.iter().map(|t| t.track_id).collect();
    println!("track_points={} tracks={}", tracks.len(), ids.len());
    Ok(())
}

fn append_csv(path: &Path, header: &str, row: &str) -> Outcome {
    let fresh = std::fs::metadata(path).map_or(true, |m| m.len() == 0);
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{header}")?;
    }
    writeln!(f, "{row}")?;
    Ok(())
}

fn eval(a: &EvalArgs) -> Outcome {
    let gt = moving_gt(&a.gt, a.keep_stationary)?;
    let name = a.name.clone().unwrap_or_else(|| {
        a.input.file_stem().and_then(|s| s.to_str()).unwrap_or("run").to_string()
    });
    let in_range = |f: usize| f >= a.first_frame && a.last_frame.is_none_or(|l| f <= l);
    let gt: Vec<GtPoint> = gt.into_iter().filter(|g| in_range(g.frame)).collect();
    let (text, header, row) = match a.mode {
        EvalMode::Detection => {
            let dets: Vec<_> = read_detections(&a.input)?.into_iter().filter(|d| in_range(d.frame)).collect();
            let last = a.last_frame.unwrap_or_else(|| {
                let d = dets.iter().map(|d| d.frame);
                let g = gt.iter().map(|g| g.frame);
                d.chain(g).max().unwrap_or(a.first_frame)
            });
            let frames: Vec<usize> = (a.first_frame..=last).collect();
            let counts = evaluate_detections(&dets, &gt, frames.iter().copied(), MATCH_RADIUS);
            if let Some(dir) = &a.render_overlays {
                let video = a.video.as_ref().ok_or_else(|| Failure::Usage("--render-overlays needs --video".into()))?;
                std::fs::create_dir_all(dir)?;
                let paths = frame_paths(video)?;
                for &f in frames.iter().filter(|&&f| f < paths.len()) {
                    let frame = read_frame(&paths[f], f as i64)?;
                    let dp: Vec<_> = dets.iter().filter(|d| d.frame == f).map(|d| d.position()).collect();
                    let gp: Vec<_> = gt.iter().filter(|g| g.frame == f).map(|g| (g.x, g.y)).collect();
                    write_overlay(&dir.join(format!("overlay_{f:05}.png")), &frame, &dp, &gp)?;
                }
            }
            (
                detection_report(&name, frames.len(), &counts),
                DETECTION_CSV_HEADER,
                detection_csv_row(&name, frames.len(), &counts),
            )
        }
        EvalMode::Tracking => {
            if a.render_overlays.is_some() {
                return Err(Failure::Usage("--render-overlays applies to detection mode".into()));
            }
            let tracks: Vec<_> = read_tracks(&a.input)?.into_iter().filter(|t| in_range(t.frame)).collect();
            let mut tm = TrackMetricsConfig::default();
            if a.all_continuity {
                tm.continuity_min_assigned = None;
            }
            let m = tracking_metrics(&tracks, &gt, &tm);
            (tracking_report(&name, &m), TRACKING_CSV_HEADER, tracking_csv_row(&name, &m))
        }
    };
    print!("{text}");
    if let Some(p) = &a.report {
        std::fs::write(p, &text)?;
    }
    if let Some(p) = &a.csv {
        append_csv(p, header, &row)?;
    }
    Ok(())
}

/// Column-aligned rendering of one CSV table.
fn table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let width: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = width[c]) } else { format!("{s:>w$}", w = width[c]) })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn report(a: &ReportArgs) -> Outcome {
    let mut out = String::new();
    for (i, path) in a.inputs.iter().enumerate() {
        let mut rd = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let rows = rd
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect::<Vec<_>>()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if rows.is_empty() {
            return Err(Error::MissingData(format!("{} is empty", path.display())).into());
        }
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("# {}\n", path.display()));
        out.push_str(&table(&rows));
    }
    print!("{out}");
    if let Some(p) = &a.out {
        std::fs::write(p, &out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_aligns_columns() {
        let rows = vec![
            vec!["name".to_string(), "f1".to_string()],
            vec!["clean".to_string(), "1.0000".to_string()],
        ];
        assert_eq!(table(&rows), "name       f1\nclean  1.0000\n");
    }
}
