//! Simulated sensor sources and the end-to-end scenario runner.
//!
//! Stands in for the physical rig: a tracking-camera pose stream following
//! a circular arc (optionally with seeded Gaussian noise), a glove whose
//! channels are sinusoids retargeted onto a configured hand, and a camera
//! producing solid-pattern frames stamped with their sample index. The
//! runner drives the [`crate::sync`] session from these generators
//! (sequentially or with one thread per producer), records the aligned
//! frames through [`crate::store`], and returns the episode path.
//!
//! Everything is a pure function of (scenario, pipeline config, seed);
//! wall clock is only read once, for the manifest's `start_time_unix_ns`.
//!
//! Scenario files use the shared `key: value` dialect. All keys are
//! optional unless noted:
//!
//! ```text
//! duration_s: 3            seed: 42                 master_rate_hz: 30
//! task: demo               operator: sim            success: true
//! slam_radius_m: 0.35      slam_angular_rate_rad_s: 0.8
//! slam_noise_translation_m: 0    slam_noise_rotation_rad: 0
//! pose_rate_hz: 200        joints_rate_hz: 120      frame_rate_hz: 30
//! frame_width: 32          frame_height: 24
//! hand_config: hands/hand6.txt   # path relative to the scenario file
//! glove_channels: 6
//! glove: 0 1.0 0.40 0.0          # channel amplitude frequency_hz phase_rad
//! assign: 0 0                    # hand joint <- glove channel
//! camera: side_cam_a 30 64 48    # extra frame stream: id rate_hz width height
//! stall: wrist_cam 1.0 2.0       # stream silent for t in [from_s, to_s)
//! concurrent: false
//! episode_name: run-001
//! buffer_capacity: 2048
//! source: sim                    # required by `record`, ignored here
//! ```

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::config::{ConfigError, Document};
use crate::retarget::{
    calibrate_map, load_hand_model, retarget, GloveFrame, HandModel, RetargetError, RetargetMap,
};
use crate::se3::{compose, Pose};
use crate::store::{begin_episode, EpisodeMeta, EpisodeRecord, StoreError};
use crate::sync::{
    period_ns, FrameBlob, Sample, SamplePayload, StreamDescriptor, StreamKind, SyncError,
    SyncSession, ENCODING_RAW_GRAY8,
};

/// Built-in six-joint hand used when a scenario names no `hand_config`.
const DEFAULT_HAND_CONFIG: &str = include_str!("../fixtures/hands/hand6.txt");

/// Salt mixed into the scenario seed for the pose-noise generator, so the
/// noise stream stays independent of any future per-stream generators.
const POSE_NOISE_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Retarget(#[from] RetargetError),
    #[error(transparent)]
    Sync(#[from] SyncError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("scenario: {msg}")]
    Scenario { msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SimError {
    pub fn category(&self) -> &'static str {
        match self {
            SimError::Config(e) => e.category(),
            SimError::Retarget(e) => e.category(),
            SimError::Sync(e) => e.category(),
            SimError::Store(e) => e.category(),
            SimError::Scenario { .. } => "ScenarioError",
            SimError::Io(_) => "IoError",
        }
    }
}

fn scenario_err(msg: impl Into<String>) -> SimError {
    SimError::Scenario { msg: msg.into() }
}

/// One glove channel: `angle(t) = amplitude * sin(2 pi f t + phase)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GloveChannel {
    pub amplitude: f64,
    pub frequency_hz: f64,
    pub phase_rad: f64,
}

/// Circular-arc tracking path in the xy plane: at time `t` the pose sits
/// at angle `omega * t` on a circle of the given radius, yawed to match.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlamPath {
    pub radius_m: f64,
    pub angular_rate_rad_s: f64,
}

/// Silence window for one stream: samples with `from_s <= t < to_s` are
/// never produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StallWindow {
    pub stream_id: String,
    pub from_s: f64,
    pub to_s: f64,
}

/// Everything the generators need. See the module docs for the file keys.
#[derive(Debug, Clone)]
pub struct SimScenario {
    pub duration_s: f64,
    pub seed: u64,
    pub slam: SlamPath,
    pub noise_translation_m: f64,
    pub noise_rotation_rad: f64,
    pub glove: Vec<GloveChannel>,
    pub assignment: Vec<usize>,
    pub hand: HandModel,
    pub frame_width: u32,
    pub frame_height: u32,
    pub stalls: Vec<StallWindow>,
}

/// An additional camera stream beyond the wrist camera (the physical rig
/// carries two third-view cameras as well).
#[derive(Debug, Clone, PartialEq)]
pub struct CameraSpec {
    pub id: String,
    pub rate_hz: f64,
    pub width: u32,
    pub height: u32,
}

/// Everything the pipeline needs that is not signal shape.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub master_rate_hz: f64,
    pub pose_rate_hz: f64,
    pub joints_rate_hz: f64,
    pub frame_rate_hz: f64,
    pub pose_stream_id: String,
    pub joints_stream_id: String,
    pub frame_stream_id: String,
    /// Extra frame streams recorded alongside the wrist camera.
    pub cameras: Vec<CameraSpec>,
    pub task: String,
    pub operator: String,
    pub success: bool,
    /// Drive producers from one thread per stream instead of sequentially.
    pub concurrent: bool,
    pub episode_name: Option<String>,
    pub buffer_capacity: Option<usize>,
    pub start_time_unix_ns: Option<u64>,
    /// Source kind named by the config file (`record` accepts only "sim").
    pub source: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            master_rate_hz: 30.0,
            pose_rate_hz: 200.0,
            joints_rate_hz: 120.0,
            frame_rate_hz: 30.0,
            pose_stream_id: "ee_pose".into(),
            joints_stream_id: "hand".into(),
            frame_stream_id: "wrist_cam".into(),
            cameras: Vec::new(),
            task: "demo".into(),
            operator: "sim".into(),
            success: true,
            concurrent: false,
            episode_name: None,
            buffer_capacity: None,
            start_time_unix_ns: None,
            source: "sim".into(),
        }
    }
}

/// Parse a scenario + pipeline config from text. Relative `hand_config`
/// paths resolve against `base_dir`.
pub fn parse_scenario(
    text: &str,
    base_dir: Option<&Path>,
) -> Result<(SimScenario, PipelineConfig), SimError> {
    let doc = Document::parse(text)?;
    let mut pipeline = PipelineConfig {
        master_rate_hz: doc.f64_or("master_rate_hz", 30.0)?,
        pose_rate_hz: doc.f64_or("pose_rate_hz", 200.0)?,
        joints_rate_hz: doc.f64_or("joints_rate_hz", 120.0)?,
        frame_rate_hz: doc.f64_or("frame_rate_hz", 30.0)?,
        ..PipelineConfig::default()
    };
    if let Some(v) = doc.get_str("pose_stream") {
        pipeline.pose_stream_id = v.to_string();
    }
    if let Some(v) = doc.get_str("joints_stream") {
        pipeline.joints_stream_id = v.to_string();
    }
    if let Some(v) = doc.get_str("frame_stream") {
        pipeline.frame_stream_id = v.to_string();
    }
    if let Some(v) = doc.get_str("task") {
        pipeline.task = v.to_string();
    }
    if let Some(v) = doc.get_str("operator") {
        pipeline.operator = v.to_string();
    }
    pipeline.success = doc.bool_or("success", true)?;
    pipeline.concurrent = doc.bool_or("concurrent", false)?;
    pipeline.episode_name = doc.get_str("episode_name").map(str::to_string);
    pipeline.buffer_capacity = doc.get_u64("buffer_capacity")?.map(|v| v as usize);
    pipeline.start_time_unix_ns = doc.get_u64("start_time_unix_ns")?;
    if let Some(v) = doc.get_str("source") {
        pipeline.source = v.to_string();
    }

    let hand = match doc.get_str("hand_config") {
        Some(rel) => {
            let path = match base_dir {
                Some(base) if Path::new(rel).is_relative() => base.join(rel),
                _ => PathBuf::from(rel),
            };
            let text = std::fs::read_to_string(&path)?;
            load_hand_model(&text)?
        }
        None => load_hand_model(DEFAULT_HAND_CONFIG)?,
    };

    let channels = doc.u64_or("glove_channels", hand.dof() as u64)? as usize;
    if channels == 0 {
        return Err(scenario_err("glove_channels must be at least 1"));
    }
    let mut glove: Vec<GloveChannel> = (0..channels)
        .map(|c| GloveChannel {
            amplitude: 1.0,
            frequency_hz: 0.4 + 0.07 * c as f64,
            phase_rad: 0.3 * c as f64,
        })
        .collect();
    for entry in doc.get_all("glove") {
        let v = entry.parse_f64s(4)?;
        let c = v[0] as usize;
        if v[0].fract() != 0.0 || c >= channels {
            return Err(scenario_err(format!(
                "glove line {}: channel {} out of range 0..{channels}",
                entry.line, v[0]
            )));
        }
        glove[c] = GloveChannel {
            amplitude: v[1],
            frequency_hz: v[2],
            phase_rad: v[3],
        };
    }

    let mut assignment: Vec<usize> = (0..hand.dof()).map(|j| j % channels).collect();
    for entry in doc.get_all("assign") {
        let fields = entry.fields();
        if fields.len() != 2 {
            return Err(scenario_err(format!(
                "assign line {}: expected `joint channel`",
                entry.line
            )));
        }
        let joint: usize = fields[0]
            .parse()
            .map_err(|_| scenario_err(format!("assign line {}: bad joint index", entry.line)))?;
        let channel: usize = fields[1]
            .parse()
            .map_err(|_| scenario_err(format!("assign line {}: bad channel index", entry.line)))?;
        if joint >= hand.dof() {
            return Err(scenario_err(format!(
                "assign line {}: joint {joint} out of range for {}-joint hand",
                entry.line,
                hand.dof()
            )));
        }
        if channel >= channels {
            return Err(scenario_err(format!(
                "assign line {}: channel {channel} out of range 0..{channels}",
                entry.line
            )));
        }
        assignment[joint] = channel;
    }

    for entry in doc.get_all("camera") {
        let fields = entry.fields();
        if fields.len() != 4 {
            return Err(scenario_err(format!(
                "camera line {}: expected `id rate_hz width height`",
                entry.line
            )));
        }
        let parse_num = |s: &str, what: &str| -> Result<f64, SimError> {
            s.parse().map_err(|_| {
                scenario_err(format!("camera line {}: bad {what}", entry.line))
            })
        };
        let id = fields[0].to_string();
        let taken = id == pipeline.pose_stream_id
            || id == pipeline.joints_stream_id
            || id == pipeline.frame_stream_id
            || pipeline.cameras.iter().any(|c| c.id == id);
        if taken {
            return Err(scenario_err(format!(
                "camera line {}: stream id {id} already in use",
                entry.line
            )));
        }
        pipeline.cameras.push(CameraSpec {
            id,
            rate_hz: parse_num(fields[1], "rate")?,
            width: parse_num(fields[2], "width")? as u32,
            height: parse_num(fields[3], "height")? as u32,
        });
    }

    let mut stalls = Vec::new();
    for entry in doc.get_all("stall") {
        let fields = entry.fields();
        if fields.len() != 3 {
            return Err(scenario_err(format!(
                "stall line {}: expected `stream from_s to_s`",
                entry.line
            )));
        }
        let from_s: f64 = fields[1]
            .parse()
            .map_err(|_| scenario_err(format!("stall line {}: bad from_s", entry.line)))?;
        let to_s: f64 = fields[2]
            .parse()
            .map_err(|_| scenario_err(format!("stall line {}: bad to_s", entry.line)))?;
        if !(from_s < to_s) {
            return Err(scenario_err(format!(
                "stall line {}: from_s must be < to_s",
                entry.line
            )));
        }
        let stream_id = fields[0].to_string();
        let known = stream_id == pipeline.pose_stream_id
            || stream_id == pipeline.joints_stream_id
            || stream_id == pipeline.frame_stream_id
            || pipeline.cameras.iter().any(|c| c.id == stream_id);
        if !known {
            return Err(scenario_err(format!(
                "stall line {}: unknown stream {stream_id}",
                entry.line
            )));
        }
        stalls.push(StallWindow {
            stream_id,
            from_s,
            to_s,
        });
    }

    let scenario = SimScenario {
        duration_s: doc.f64_or("duration_s", 3.0)?,
        seed: doc.u64_or("seed", 42)?,
        slam: SlamPath {
            radius_m: doc.f64_or("slam_radius_m", 0.35)?,
            angular_rate_rad_s: doc.f64_or("slam_angular_rate_rad_s", 0.8)?,
        },
        noise_translation_m: doc.f64_or("slam_noise_translation_m", 0.0)?,
        noise_rotation_rad: doc.f64_or("slam_noise_rotation_rad", 0.0)?,
        glove,
        assignment,
        hand,
        frame_width: doc.u64_or("frame_width", 32)? as u32,
        frame_height: doc.u64_or("frame_height", 24)? as u32,
        stalls,
    };
    validate(&scenario, &pipeline)?;
    Ok((scenario, pipeline))
}

/// Parse a scenario file; relative hand-config paths resolve against the
/// file's directory.
pub fn load_scenario(path: &Path) -> Result<(SimScenario, PipelineConfig), SimError> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text, path.parent())
}

fn validate(scenario: &SimScenario, pipeline: &PipelineConfig) -> Result<(), SimError> {
    if !(scenario.duration_s > 0.0) || !scenario.duration_s.is_finite() {
        return Err(scenario_err("duration_s must be positive"));
    }
    if scenario.noise_translation_m < 0.0 || scenario.noise_rotation_rad < 0.0 {
        return Err(scenario_err("noise sigmas must be >= 0"));
    }
    for (c, ch) in scenario.glove.iter().enumerate() {
        if !ch.amplitude.is_finite() || !ch.frequency_hz.is_finite() || !ch.phase_rad.is_finite() {
            return Err(scenario_err(format!(
                "glove channel {c} has non-finite parameters"
            )));
        }
    }
    for &c in &scenario.assignment {
        if scenario.glove[c].amplitude == 0.0 {
            return Err(scenario_err(format!(
                "glove channel {c} is assigned to a joint but has zero amplitude"
            )));
        }
    }
    if (scenario.frame_width as u64) * (scenario.frame_height as u64) < 8 {
        return Err(scenario_err(
            "frame must hold at least 8 pixels for the index stamp",
        ));
    }
    for rate in [
        pipeline.master_rate_hz,
        pipeline.pose_rate_hz,
        pipeline.joints_rate_hz,
        pipeline.frame_rate_hz,
    ] {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(scenario_err(format!("rates must be positive, got {rate}")));
        }
    }
    for cam in &pipeline.cameras {
        if !(cam.rate_hz > 0.0) || !cam.rate_hz.is_finite() {
            return Err(scenario_err(format!(
                "camera {}: rate must be positive",
                cam.id
            )));
        }
        if (cam.width as u64) * (cam.height as u64) < 8 {
            return Err(scenario_err(format!(
                "camera {}: frame must hold at least 8 pixels",
                cam.id
            )));
        }
    }
    Ok(())
}

/// Nominal (noise-free) tracking pose at time `t`: the closed-form point
/// on the arc with yaw equal to the arc angle.
pub fn slam_pose_at(path: &SlamPath, t_s: f64) -> Pose {
    let theta = path.angular_rate_rad_s * t_s;
    Pose::from_axis_angle(
        Vector3::z(),
        theta,
        Vector3::new(path.radius_m * theta.cos(), path.radius_m * theta.sin(), 0.0),
    )
}

/// Glove channel angles at time `t`.
pub fn glove_angles_at(channels: &[GloveChannel], t_s: f64) -> Vec<f64> {
    channels
        .iter()
        .map(|c| c.amplitude * (std::f64::consts::TAU * c.frequency_hz * t_s + c.phase_rad).sin())
        .collect()
}

/// Calibration frames spanning each channel's full range: open at the
/// sinusoid minimum, closed at the maximum.
pub fn calibration_frames(
    channels: &[GloveChannel],
) -> Result<(GloveFrame, GloveFrame), RetargetError> {
    let open = GloveFrame::new(channels.iter().map(|c| -c.amplitude.abs()).collect())?;
    let closed = GloveFrame::new(channels.iter().map(|c| c.amplitude.abs()).collect())?;
    Ok((open, closed))
}

fn stalled(stalls: &[StallWindow], stream_id: &str, t_s: f64) -> bool {
    stalls
        .iter()
        .any(|s| s.stream_id == stream_id && t_s >= s.from_s && t_s < s.to_s)
}

fn sample_count(duration_s: f64, rate_hz: f64) -> u64 {
    (duration_s * rate_hz).round().max(1.0) as u64
}

fn unit_axis(rng: &mut impl Rng) -> Vector3<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    loop {
        let v = Vector3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Pose samples along the arc. With both sigmas zero the samples are the
/// closed-form path exactly (the noise composition is skipped entirely).
pub fn generate_pose_samples(scenario: &SimScenario, config: &PipelineConfig) -> Vec<Sample> {
    let period = period_ns(config.pose_rate_hz);
    let count = sample_count(scenario.duration_s, config.pose_rate_hz);
    let noisy = scenario.noise_translation_m > 0.0 || scenario.noise_rotation_rad > 0.0;
    let mut rng = ChaCha12Rng::seed_from_u64(scenario.seed ^ POSE_NOISE_SALT);
    let t_noise = Normal::new(0.0, scenario.noise_translation_m.max(0.0)).expect("sigma >= 0");
    let r_noise = Normal::new(0.0, scenario.noise_rotation_rad.max(0.0)).expect("sigma >= 0");
    let mut samples = Vec::with_capacity(count as usize);
    for k in 0..count {
        let ts = k * period;
        let t_s = ts as f64 * 1e-9;
        if stalled(&scenario.stalls, &config.pose_stream_id, t_s) {
            continue;
        }
        let nominal = slam_pose_at(&scenario.slam, t_s);
        let pose = if noisy {
            let offset = Pose::from_axis_angle(
                unit_axis(&mut rng),
                r_noise.sample(&mut rng),
                Vector3::new(
                    t_noise.sample(&mut rng),
                    t_noise.sample(&mut rng),
                    t_noise.sample(&mut rng),
                ),
            );
            compose(&nominal, &offset)
        } else {
            nominal
        };
        samples.push(Sample {
            stream_id: config.pose_stream_id.clone(),
            timestamp_ns: ts,
            payload: SamplePayload::Pose(pose),
        });
    }
    samples
}

/// Hand-joint samples: glove sinusoids retargeted through `map`.
pub fn generate_joint_samples(
    scenario: &SimScenario,
    config: &PipelineConfig,
    map: &RetargetMap,
) -> Result<Vec<Sample>, RetargetError> {
    let period = period_ns(config.joints_rate_hz);
    let count = sample_count(scenario.duration_s, config.joints_rate_hz);
    let mut samples = Vec::with_capacity(count as usize);
    for k in 0..count {
        let ts = k * period;
        let t_s = ts as f64 * 1e-9;
        if stalled(&scenario.stalls, &config.joints_stream_id, t_s) {
            continue;
        }
        let frame = GloveFrame::new(glove_angles_at(&scenario.glove, t_s))?;
        let command = retarget(&frame, map, &scenario.hand)?;
        samples.push(Sample {
            stream_id: config.joints_stream_id.clone(),
            timestamp_ns: ts,
            payload: SamplePayload::Joints(command.angles),
        });
    }
    Ok(samples)
}

fn generate_frames(
    stream_id: &str,
    rate_hz: f64,
    width: u32,
    height: u32,
    fill_salt: u64,
    duration_s: f64,
    stalls: &[StallWindow],
) -> Vec<Sample> {
    let period = period_ns(rate_hz);
    let count = sample_count(duration_s, rate_hz);
    let pixels = (width as usize) * (height as usize);
    let mut samples = Vec::with_capacity(count as usize);
    for k in 0..count {
        let ts = k * period;
        let t_s = ts as f64 * 1e-9;
        if stalled(stalls, stream_id, t_s) {
            continue;
        }
        let mut data = vec![((k + fill_salt) % 251) as u8; pixels];
        data[0..8].copy_from_slice(&k.to_le_bytes());
        samples.push(Sample {
            stream_id: stream_id.to_string(),
            timestamp_ns: ts,
            payload: SamplePayload::Frame(FrameBlob {
                encoding: ENCODING_RAW_GRAY8,
                width,
                height,
                data,
            }),
        });
    }
    samples
}

/// Wrist-camera frames: solid fill derived from the sample index, with the
/// index stamped into the first 8 bytes.
pub fn generate_frame_samples(scenario: &SimScenario, config: &PipelineConfig) -> Vec<Sample> {
    generate_frames(
        &config.frame_stream_id,
        config.frame_rate_hz,
        scenario.frame_width,
        scenario.frame_height,
        0,
        scenario.duration_s,
        &scenario.stalls,
    )
}

/// Frames for one extra camera; `fill_salt` keeps cameras visually
/// distinct in the solid pattern.
pub fn generate_camera_samples(
    scenario: &SimScenario,
    cam: &CameraSpec,
    fill_salt: u64,
) -> Vec<Sample> {
    generate_frames(
        &cam.id,
        cam.rate_hz,
        cam.width,
        cam.height,
        fill_salt,
        scenario.duration_s,
        &scenario.stalls,
    )
}

/// Drive the full pipeline: generators -> sync session -> episode store.
/// Returns the recorded episode directory.
pub fn run_scenario(
    scenario: &SimScenario,
    config: &PipelineConfig,
    out_root: &Path,
) -> Result<PathBuf, SimError> {
    validate(scenario, config)?;
    let (open, closed) = calibration_frames(&scenario.glove)?;
    let map = calibrate_map(&open, &closed, &scenario.assignment, &scenario.hand)?;

    // Roster order: pose, joints, wrist camera, then extra cameras.
    let mut streams: Vec<(StreamDescriptor, Vec<Sample>)> = vec![
        (
            StreamDescriptor::new(&config.pose_stream_id, StreamKind::Pose, config.pose_rate_hz),
            generate_pose_samples(scenario, config),
        ),
        (
            StreamDescriptor::new(
                &config.joints_stream_id,
                StreamKind::Joints,
                config.joints_rate_hz,
            ),
            generate_joint_samples(scenario, config, &map)?,
        ),
        (
            StreamDescriptor::new(
                &config.frame_stream_id,
                StreamKind::Frame,
                config.frame_rate_hz,
            ),
            generate_frame_samples(scenario, config),
        ),
    ];
    for (i, cam) in config.cameras.iter().enumerate() {
        streams.push((
            StreamDescriptor::new(&cam.id, StreamKind::Frame, cam.rate_hz),
            generate_camera_samples(scenario, cam, (i + 1) as u64 * 97),
        ));
    }

    let capacity = config.buffer_capacity.unwrap_or_else(|| {
        streams.iter().map(|(_, s)| s.len()).max().unwrap_or(0) + 8
    });

    let mut session = SyncSession::with_capacity(capacity);
    let mut handles = Vec::with_capacity(streams.len());
    for (desc, _) in &streams {
        handles.push(session.register_stream(desc.clone())?);
    }
    session.start()?;

    if config.concurrent {
        std::thread::scope(|scope| -> Result<(), SyncError> {
            let mut workers = Vec::new();
            for (handle, (_, batch)) in handles.iter().zip(&streams) {
                let session = &session;
                workers.push(scope.spawn(move || -> Result<(), SyncError> {
                    for sample in batch {
                        session.push(*handle, sample.clone())?;
                    }
                    Ok(())
                }));
            }
            for worker in workers {
                worker.join().expect("producer thread panicked")?;
            }
            Ok(())
        })?;
    } else {
        for (handle, (_, batch)) in handles.iter().zip(&streams) {
            for sample in batch {
                session.push(*handle, sample.clone())?;
            }
        }
    }

    let roster: Vec<StreamDescriptor> = streams.iter().map(|(d, _)| d.clone()).collect();
    let mut meta = EpisodeMeta::new(
        &config.task,
        &config.operator,
        config.master_rate_hz,
        config.success,
        roster,
    )
    .with_hand_model(scenario.hand.clone());
    if let Some(start) = config.start_time_unix_ns {
        meta = meta.with_start_time(start);
    }
    let name = config
        .episode_name
        .clone()
        .unwrap_or_else(|| format!("{}-{}", config.task, meta.start_time_unix_ns));
    let dir = out_root.join(name);

    let mut writer = begin_episode(meta, &dir)?;
    let master_period = period_ns(config.master_rate_hz);
    let ticks = sample_count(scenario.duration_s, config.master_rate_hz);
    for k in 0..ticks {
        let frame = session.align_at(k * master_period);
        writer.append(&EpisodeRecord {
            tick_index: frame.tick_index,
            entries: frame.entries,
        })?;
    }
    writer.finalize()?;
    Ok(dir)
}
