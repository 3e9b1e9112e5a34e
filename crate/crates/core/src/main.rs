//! `exocap` command line: drive the capture pipeline end to end.
//!
//! ```text
//! exocap simulate  --scenario FILE --out DIR
//! exocap record    --config FILE --out DIR
//! exocap calibrate --pairs FILE [--min-pairs N]
//! exocap validate  DIR
//! exocap stats     DIR --task NAME
//! exocap replay    DIR --envelope FILE [--chunk-len N] [--sink recording|log]
//! ```
//!
//! Every failure exits nonzero after printing a single machine-parsable
//! line to stderr: `error: <Category>: <detail>`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use exocap::config::Document;
use exocap::replay::{
    continuity_check, replay_policy, stream_chunk, LogSink, RecordingSink, ReplayError,
    ReplayReport, RobotSink, SafetyEnvelope, DEFAULT_CHUNK_LEN,
};
use exocap::se3::{
    calibration_residual, estimate_calibration, Pose, PosePair, Se3Error,
};
use exocap::sim::{load_scenario, run_scenario, SimError};
use exocap::store::{load_episode, task_stats, DatasetIndex, StoreError, MANIFEST_NAME};

#[derive(Parser)]
#[command(name = "exocap", version, about = "Demonstration-capture pipeline tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulated scenario and record it as an episode.
    Simulate {
        /// Scenario file (key: value dialect).
        #[arg(long)]
        scenario: PathBuf,
        /// Dataset root; the episode directory is created underneath.
        #[arg(long)]
        out: PathBuf,
    },
    /// Record from configured producer sources (this build ships the
    /// simulated sources; the config must say `source: sim`).
    Record {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the SLAM-to-robot calibration from a pose-pair file.
    Calibrate {
        /// Pair file: one `pair:` line per observation, 14 floats
        /// (slam tx ty tz qw qx qy qz, then robot tx ty tz qw qx qy qz).
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long = "min-pairs", default_value_t = 3)]
        min_pairs: usize,
    },
    /// Audit an episode directory (or every episode under a dataset root):
    /// chunk headers, checksums, structure, tick order.
    Validate { dir: PathBuf },
    /// Per-task collection statistics over a dataset root.
    Stats {
        dir: PathBuf,
        #[arg(long)]
        task: String,
    },
    /// Cut a recorded episode into action chunks and stream them into a
    /// sink under a safety envelope.
    Replay {
        dir: PathBuf,
        #[arg(long)]
        envelope: PathBuf,
        #[arg(long = "chunk-len", default_value_t = DEFAULT_CHUNK_LEN)]
        chunk_len: usize,
        #[arg(long, value_enum, default_value_t = SinkChoice::Recording)]
        sink: SinkChoice,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SinkChoice {
    Recording,
    Log,
}

struct CliError {
    category: String,
    message: String,
}

impl CliError {
    fn new(category: impl Into<String>, message: impl Into<String>) -> Self {
        CliError {
            category: category.into(),
            message: message.into(),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::new(e.category(), e.to_string())
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        CliError::new(e.category(), e.to_string())
    }
}

impl From<ReplayError> for CliError {
    fn from(e: ReplayError) -> Self {
        CliError::new(e.category(), e.to_string())
    }
}

impl From<Se3Error> for CliError {
    fn from(e: Se3Error) -> Self {
        CliError::new(e.category(), e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new("IoError", e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.category, e.message);
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate { scenario, out } => {
            let (scn, pipeline) = load_scenario(&scenario)?;
            let dir = run_scenario(&scn, &pipeline, &out)?;
            println!("{}", dir.display());
            Ok(())
        }
        Command::Record { config, out } => {
            let (scn, pipeline) = load_scenario(&config)?;
            if pipeline.source != "sim" {
                return Err(CliError::new(
                    "UnsupportedSource",
                    format!(
                        "source {:?} is not available in this build (only \"sim\")",
                        pipeline.source
                    ),
                ));
            }
            let dir = run_scenario(&scn, &pipeline, &out)?;
            println!("{}", dir.display());
            Ok(())
        }
        Command::Calibrate { pairs, min_pairs } => calibrate(&pairs, min_pairs),
        Command::Validate { dir } => validate(&dir),
        Command::Stats { dir, task } => {
            let index = DatasetIndex::scan(&dir)?;
            let stats = task_stats(&index, &task)?;
            println!("task  avg_time_s  succ/trials  rate");
            println!("{}  {}", stats.task, stats.row());
            Ok(())
        }
        Command::Replay {
            dir,
            envelope,
            chunk_len,
            sink,
        } => replay(&dir, &envelope, chunk_len, sink),
    }
}

fn calibrate(pairs_path: &Path, min_pairs: usize) -> Result<(), CliError> {
    let text = std::fs::read_to_string(pairs_path)?;
    let doc = Document::parse(&text).map_err(|e| CliError::new(e.category(), e.to_string()))?;
    let mut pairs = Vec::new();
    for entry in doc.get_all("pair") {
        let v = entry
            .parse_f64s(14)
            .map_err(|e| CliError::new(e.category(), e.to_string()))?;
        pairs.push(PosePair {
            slam: Pose::from_parts([v[0], v[1], v[2]], [v[3], v[4], v[5], v[6]]),
            robot: Pose::from_parts([v[7], v[8], v[9]], [v[10], v[11], v[12], v[13]]),
        });
    }
    let calib = estimate_calibration(&pairs, min_pairs)?;
    let q = calib.rotation.quaternion();
    println!("pairs: {}", pairs.len());
    println!(
        "t_calib translation_m: {} {} {}",
        calib.translation.x, calib.translation.y, calib.translation.z
    );
    println!("t_calib quaternion_wxyz: {} {} {} {}", q.w, q.i, q.j, q.k);
    let residual = calibration_residual(&calib, &pairs);
    println!(
        "residual translation_m: mean={:.3e} max={:.3e}",
        residual.mean_translation_m, residual.max_translation_m
    );
    println!(
        "residual rotation_rad: mean={:.3e} max={:.3e}",
        residual.mean_rotation_rad, residual.max_rotation_rad
    );
    Ok(())
}

fn validate(dir: &Path) -> Result<(), CliError> {
    // A single episode directory validates directly; anything else is
    // treated as a dataset root and every episode under it must pass.
    if dir.join(MANIFEST_NAME).exists() {
        let check = exocap::store::validate_episode(dir)?;
        println!(
            "ok {} records={} gaps={} streams={}",
            check.path.display(),
            check.records,
            check.gaps,
            check.meta.roster.len()
        );
        return Ok(());
    }
    let index = DatasetIndex::scan(dir)?;
    if index.entries.is_empty() {
        return Err(CliError::new(
            "NoEpisodes",
            format!("no episode directories under {}", dir.display()),
        ));
    }
    let mut first_failure: Option<CliError> = None;
    for entry in &index.entries {
        if entry.checksum_ok {
            println!("ok {} records={}", entry.path.display(), entry.records);
        } else {
            let category = entry.error.clone().unwrap_or_else(|| "FormatError".into());
            println!("bad {} ({category})", entry.path.display());
            if first_failure.is_none() {
                // Re-run for the full message of the first failing episode.
                let err = exocap::store::validate_episode(&entry.path)
                    .err()
                    .map(|e| CliError::new(e.category(), e.to_string()))
                    .unwrap_or_else(|| CliError::new(category, "validation failed"));
                first_failure = Some(err);
            }
        }
    }
    match first_failure {
        Some(err) => Err(err),
        None => Ok(()),
    }
}

fn replay(
    dir: &Path,
    envelope_path: &Path,
    chunk_len: usize,
    sink: SinkChoice,
) -> Result<(), CliError> {
    let envelope = SafetyEnvelope::parse(&std::fs::read_to_string(envelope_path)?)?;
    let (meta, records) = load_episode(dir)?;
    let records: Vec<_> = records.collect();
    let chunks = replay_policy(&meta, &records, chunk_len)?;
    println!(
        "episode {}: {} records -> {} chunks of <= {} steps at {} Hz",
        dir.display(),
        records.len(),
        chunks.len(),
        chunk_len,
        meta.tick_rate_hz
    );

    let mut recording = RecordingSink::new();
    let mut log = LogSink::default();
    let output_rate = 1.0 / chunks[0].dt_s();

    let mut total = ReplayReport {
        steps_emitted: 0,
        samples_emitted: 0,
        abort: None,
        stopped_by_sink: false,
        completed: true,
    };
    for (i, chunk) in chunks.iter().enumerate() {
        if i > 0 {
            continuity_check(&chunks[i - 1], chunk, &envelope)?;
        }
        let sink_ref: &mut dyn RobotSink = match sink {
            SinkChoice::Recording => &mut recording,
            SinkChoice::Log => &mut log,
        };
        let report = stream_chunk(chunk, &envelope, sink_ref, output_rate)?;
        println!(
            "chunk {i}: steps={} samples={} completed={}{}",
            report.steps_emitted,
            report.samples_emitted,
            report.completed,
            match report.abort {
                Some(a) => format!(" abort={{step: {}, reason: {}}}", a.step, a.reason),
                None => String::new(),
            }
        );
        total.steps_emitted += report.steps_emitted;
        total.samples_emitted += report.samples_emitted;
        total.completed &= report.completed;
        if let Some(abort) = report.abort {
            return Err(CliError::new(
                "SafetyAbort",
                format!(
                    "chunk {i} step {} violated the {} limit; emission halted",
                    abort.step, abort.reason
                ),
            ));
        }
    }
    if let SinkChoice::Recording = sink {
        println!("recording sink stored {} samples", recording.samples.len());
    }
    println!(
        "replayed {} steps ({} samples) across {} chunks",
        total.steps_emitted,
        total.samples_emitted,
        chunks.len()
    );
    Ok(())
}
