//! `wami`: synthetic data, training, calibration, detection, tracking and
//! evaluation from the command line.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use wami_core::registration::RegistrationMode;
use wami_core::Error;

#[derive(Parser, Debug)]
#[command(name = "wami", version, about = "Small moving-object detection and tracking for aerial video")]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Pipeline configuration (TOML). Defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Registration mode overriding the configuration: feature, direct or
    /// truth (read `<name>.homographies.txt` from the video directory).
    #[arg(long, global = true, value_parser = parse_mode)]
    registration: Option<RegistrationMode>,

    #[command(subcommand)]
    command: Command,
}

fn parse_mode(s: &str) -> Result<RegistrationMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic scene to frames, ground truth and true transforms.
    Synth(SynthArgs),
    /// Train the window classifier.
    TrainClassifier(TrainArgs),
    /// Train the merged-blob regression network.
    TrainRegressor(TrainArgs),
    /// Choose the acceptance threshold phi that maximises F1 on a video.
    Calibrate(CalibrateArgs),
    /// Detect moving objects in a video.
    Detect(DetectArgs),
    /// Run the GM-PHD tracker over detections.
    Track(TrackArgs),
    /// Score detections or tracks against ground truth.
    Eval(EvalArgs),
    /// Tabulate metric CSV files.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Named preset scene.
    #[arg(long, required_unless_present = "spec", conflicts_with = "spec")]
    pub preset: Option<String>,
    /// Scene description file (TOML).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the number of frames.
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Video directory; repeat to train on several.
    #[arg(long = "video", required = true)]
    pub videos: Vec<PathBuf>,
    /// Ground truth per video, in the same order (default `<video>/gt.csv`).
    #[arg(long = "gt")]
    pub gts: Vec<PathBuf>,
    /// Output weights (.wtz).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-epoch loss/accuracy CSV.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub video: PathBuf,
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub classifier: PathBuf,
    #[arg(long)]
    pub regressor: Option<PathBuf>,
    /// Configuration to write (default: the `--config` file).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    #[arg(long)]
    pub video: PathBuf,
    #[arg(long, required_unless_present = "oracle_classifier")]
    pub classifier: Option<PathBuf>,
    /// Score windows by distance to ground truth instead of the classifier.
    #[arg(long, conflicts_with = "classifier")]
    pub oracle_classifier: bool,
    /// Ground truth for the oracle (default `<video>/gt.csv`).
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub regressor: Option<PathBuf>,
    /// Override phi of the active profile.
    #[arg(long)]
    pub phi: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Write foreground and accepted-cell masks per frame here.
    #[arg(long)]
    pub dump_masks: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrackArgs {
    #[arg(long)]
    pub detections: PathBuf,
    /// Frame-to-frame transforms, one row-major line per frame.
    #[arg(long)]
    pub homographies: Option<PathBuf>,
    /// Video directory, used for the frame size.
    #[arg(long)]
    pub video: Option<PathBuf>,
    #[arg(long, requires = "height", conflicts_with = "video")]
    pub width: Option<usize>,
    #[arg(long, requires = "width")]
    pub height: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    Detection,
    Tracking,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub mode: EvalMode,
    /// Detections or tracks CSV.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// First scored frame; earlier frames lack a full background history.
    #[arg(long, default_value_t = 3)]
    pub first_frame: usize,
    #[arg(long)]
    pub last_frame: Option<usize>,
    /// Keep ground-truth points of (almost) stationary objects.
    #[arg(long)]
    pub keep_stationary: bool,
    /// Count every assigned counterpart in the continuities.
    #[arg(long)]
    pub all_continuity: bool,
    #[arg(long)]
    pub name: Option<String>,
    /// Write the key=value report here as well as to stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Append a metrics row to this CSV (header written when new).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Write one overlay PNG per scored frame into this directory.
    #[arg(long, requires = "video")]
    pub render_overlays: Option<PathBuf>,
    #[arg(long)]
    pub video: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Metric CSV files written by `eval --csv`.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Why a command stopped.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(Error::Io(e))
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Core(e) if e.is_numerical() => 3,
            Failure::Core(_) => 2,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Usage(_) => "usage",
            Failure::Core(e) => e.kind(),
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) => m.clone(),
            Failure::Core(e) => e.to_string(),
        }
    }
}

fn error_line(kind: &str, message: &str) -> String {
    let escaped: String = message
        .trim()
        .chars()
        .flat_map(|c| match c {
            '"' => vec!['\\', '"'],
            '\\' => vec!['\\', '\\'],
            '\n' => vec!['\\', 'n'],
            c => vec![c],
        })
        .collect();
    format!("error: kind={kind} message=\"{escaped}\"")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind::*;
            if matches!(e.kind(), DisplayHelp | DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid usage");
            eprintln!("{}", error_line("usage", first.trim_start_matches("error: ")));
            return ExitCode::from(1);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("{}", error_line("usage", "--threads must be at least 1"));
            return ExitCode::from(1);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("thread pool is configured once");
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", error_line(f.kind(), &f.message()));
            ExitCode::from(f.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_line_escapes() {
        assert_eq!(
            error_line("format", "bad \"x\"\nnext"),
            r#"error: kind=format message="bad \"x\"\nnext""#
        );
    }

    #[test]
    fn exit_codes() {
        assert_eq!(Failure::Usage("x".into()).code(), 1);
        assert_eq!(Failure::Core(Error::Format("x".into())).code(), 2);
        assert_eq!(Failure::Core(Error::Degenerate("x".into())).code(), 3);
        assert_eq!(Failure::Core(Error::Numerical("x".into())).code(), 3);
    }

    #[test]
    fn cli_shape_is_valid() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
