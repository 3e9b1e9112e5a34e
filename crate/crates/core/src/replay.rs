//! Fixed-rate streaming of action chunks into a robot sink under a safety
//! envelope.
//!
//! An [`ActionChunk`] is a short sequence of (end-effector pose, hand
//! command) steps at a fixed step interval — the unit a chunked policy
//! emits and the unit [`replay_policy`] cuts recorded episodes into.
//! [`stream_chunk`] walks the chunk at the requested output rate,
//! interpolating between steps when the output rate exceeds the step rate,
//! and refuses to emit anything that violates the envelope: workspace
//! containment is checked on every emitted sample (knots and interpolants),
//! speed and per-joint deltas on every step transition. On a violation at
//! step `k`, exactly the first `k` steps have been delivered.
//!
//! Emission is paced by synthesized timestamps, not wall-clock sleeps: the
//! sink receives the tick time each sample is due. A sink driving real
//! hardware is the place to block on a clock; the in-repo sinks (recording,
//! logging) never skew tests this way.

use thiserror::Error;

use crate::retarget::{HandCommand, HandModel};
use crate::se3::{self, Pose};
use crate::store::{EpisodeMeta, EpisodeRecord};
use crate::sync::{StreamKind, StreamValue};

/// Default steps per chunk cut by [`replay_policy`]: one second at the
/// default 30 Hz master tick.
pub const DEFAULT_CHUNK_LEN: usize = 30;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("action chunk must be non-empty")]
    EmptyChunk,
    #[error("step interval must be positive, got {dt}")]
    InvalidDt { dt: f64 },
    #[error("step {step}: hand command outside the limits of hand {hand}")]
    InvalidHandCommand { step: usize, hand: String },
    #[error("output rate {rate} Hz is below the chunk step rate {min} Hz")]
    RateTooLow { rate: f64, min: f64 },
    #[error("invalid envelope: {msg}")]
    InvalidEnvelope { msg: String },
    #[error("gap marker inside action streams at tick {tick}")]
    GapInActions { tick: u64 },
    #[error("episode records are not contiguous at tick {tick}")]
    NonContiguousTicks { tick: u64 },
    #[error("episode has no {kind} stream")]
    MissingStream { kind: &'static str },
    #[error("episode manifest declares no hand model; replay cannot validate commands")]
    MissingHandModel,
    #[error("chunk seam violates {reason} limit: {detail}")]
    SeamViolation { reason: AbortReason, detail: String },
}

impl ReplayError {
    pub fn category(&self) -> &'static str {
        match self {
            ReplayError::EmptyChunk => "EmptyChunk",
            ReplayError::InvalidDt { .. } => "InvalidDt",
            ReplayError::InvalidHandCommand { .. } => "InvalidHandCommand",
            ReplayError::RateTooLow { .. } => "RateTooLow",
            ReplayError::InvalidEnvelope { .. } => "InvalidEnvelope",
            ReplayError::GapInActions { .. } => "GapInActions",
            ReplayError::NonContiguousTicks { .. } => "NonContiguousTicks",
            ReplayError::MissingStream { .. } => "MissingStream",
            ReplayError::MissingHandModel => "MissingHandModel",
            ReplayError::SeamViolation { .. } => "SeamViolation",
        }
    }
}

/// One replay step: where the arm should be and what the hand should do.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionStep {
    pub pose: Pose,
    pub hand: HandCommand,
}

/// Fixed-rate action sequence, validated against one hand model at
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionChunk {
    dt_s: f64,
    steps: Vec<ActionStep>,
}

impl ActionChunk {
    pub fn new(dt_s: f64, steps: Vec<ActionStep>, hand: &HandModel) -> Result<Self, ReplayError> {
        if !(dt_s > 0.0) || !dt_s.is_finite() {
            return Err(ReplayError::InvalidDt { dt: dt_s });
        }
        if steps.is_empty() {
            return Err(ReplayError::EmptyChunk);
        }
        for (i, step) in steps.iter().enumerate() {
            if !hand.admits(&step.hand.angles) {
                return Err(ReplayError::InvalidHandCommand {
                    step: i,
                    hand: hand.name.clone(),
                });
            }
        }
        Ok(ActionChunk { dt_s, steps })
    }

    pub fn dt_s(&self) -> f64 {
        self.dt_s
    }

    pub fn steps(&self) -> &[ActionStep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn first(&self) -> &ActionStep {
        &self.steps[0]
    }

    pub fn last(&self) -> &ActionStep {
        self.steps.last().expect("chunk is non-empty")
    }
}

/// Axis-aligned workspace box plus motion limits.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyEnvelope {
    pub workspace_min: [f64; 3],
    pub workspace_max: [f64; 3],
    pub max_speed_mps: f64,
    pub max_joint_delta_rad: f64,
}

impl SafetyEnvelope {
    /// Parse from the shared `key: value` dialect. All four keys are
    /// required; there are no default safety limits.
    ///
    /// ```text
    /// workspace_min: -0.8 -0.8 -0.2
    /// workspace_max: 0.8 0.8 1.2
    /// max_speed_mps: 2.0
    /// max_joint_delta_rad: 0.5
    /// ```
    pub fn parse(text: &str) -> Result<Self, ReplayError> {
        let invalid = |msg: String| ReplayError::InvalidEnvelope { msg };
        let doc = crate::config::Document::parse(text).map_err(|e| invalid(e.to_string()))?;
        let vec3 = |key: &str| -> Result<[f64; 3], ReplayError> {
            let entry = doc.require(key).map_err(|e| invalid(e.to_string()))?;
            let v = entry.parse_f64s(3).map_err(|e| invalid(e.to_string()))?;
            Ok([v[0], v[1], v[2]])
        };
        let scalar = |key: &str| -> Result<f64, ReplayError> {
            doc.require(key)
                .and_then(|e| e.parse_f64())
                .map_err(|e| invalid(e.to_string()))
        };
        let envelope = SafetyEnvelope {
            workspace_min: vec3("workspace_min")?,
            workspace_max: vec3("workspace_max")?,
            max_speed_mps: scalar("max_speed_mps")?,
            max_joint_delta_rad: scalar("max_joint_delta_rad")?,
        };
        envelope.validate()?;
        Ok(envelope)
    }

    pub fn validate(&self) -> Result<(), ReplayError> {
        for axis in 0..3 {
            if !(self.workspace_min[axis] < self.workspace_max[axis]) {
                return Err(ReplayError::InvalidEnvelope {
                    msg: format!(
                        "workspace min {} must be < max {} on axis {axis}",
                        self.workspace_min[axis], self.workspace_max[axis]
                    ),
                });
            }
        }
        if !(self.max_speed_mps > 0.0) || !(self.max_joint_delta_rad > 0.0) {
            return Err(ReplayError::InvalidEnvelope {
                msg: "speed and joint-delta limits must be positive".into(),
            });
        }
        Ok(())
    }

    pub fn contains(&self, pose: &Pose) -> bool {
        let t = &pose.translation;
        (0..3).all(|a| t[a] >= self.workspace_min[a] && t[a] <= self.workspace_max[a])
    }
}

/// Why emission stopped early.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbortReason {
    Workspace,
    Speed,
    JointDelta,
}

impl std::fmt::Display for AbortReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AbortReason::Workspace => "workspace",
            AbortReason::Speed => "speed",
            AbortReason::JointDelta => "joint-delta",
        })
    }
}

/// Envelope violation: the first unsafe step and what it violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SafetyAbort {
    pub step: usize,
    pub reason: AbortReason,
}

/// Outcome of one [`stream_chunk`] run.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    /// Chunk steps delivered (knots, not interpolants).
    pub steps_emitted: usize,
    /// Total samples delivered, interpolants included.
    pub samples_emitted: usize,
    /// Set when the envelope stopped emission; `steps_emitted` then equals
    /// the abort's step index.
    pub abort: Option<SafetyAbort>,
    /// True when the sink refused a sample and emission stopped there.
    pub stopped_by_sink: bool,
    /// True when the whole chunk was delivered.
    pub completed: bool,
}

/// Consumer of replayed samples. A recording sink must store exactly what
/// it receives; a hardware sink is expected to block until `tick_time_ns`.
pub trait RobotSink {
    /// Deliver one sample; returning false stops the replay.
    fn deliver(&mut self, tick_time_ns: u64, pose: &Pose, hand: &HandCommand) -> bool;
}

/// Sink that stores every sample verbatim.
#[derive(Debug, Default)]
pub struct RecordingSink {
    pub samples: Vec<(u64, Pose, HandCommand)>,
}

impl RecordingSink {
    pub fn new() -> Self {
        Self::default()
    }
}

impl RobotSink for RecordingSink {
    fn deliver(&mut self, tick_time_ns: u64, pose: &Pose, hand: &HandCommand) -> bool {
        self.samples.push((tick_time_ns, pose.clone(), hand.clone()));
        true
    }
}

/// Sink that prints one line per sample.
#[derive(Debug, Default)]
pub struct LogSink {
    pub delivered: usize,
}

impl RobotSink for LogSink {
    fn deliver(&mut self, tick_time_ns: u64, pose: &Pose, hand: &HandCommand) -> bool {
        let t = &pose.translation;
        println!(
            "t={:.4}s pose=({:.4}, {:.4}, {:.4}) hand={:?}",
            tick_time_ns as f64 * 1e-9,
            t.x,
            t.y,
            t.z,
            hand.angles
        );
        self.delivered += 1;
        true
    }
}

/// Check the transition between two consecutive steps against the
/// envelope's speed and joint-delta limits over interval `dt_s`.
fn check_transition(
    prev: &ActionStep,
    next: &ActionStep,
    envelope: &SafetyEnvelope,
    dt_s: f64,
) -> Result<(), AbortReason> {
    let dist = prev.pose.translation_distance_to(&next.pose);
    if dist / dt_s > envelope.max_speed_mps {
        return Err(AbortReason::Speed);
    }
    let deltas = prev.hand.angles.iter().zip(&next.hand.angles);
    for (a, b) in deltas {
        if (b - a).abs() > envelope.max_joint_delta_rad {
            return Err(AbortReason::JointDelta);
        }
    }
    Ok(())
}

/// Stream one chunk into a sink at `output_rate_hz`.
///
/// `output_rate_hz` must be at least the chunk's step rate (`1/dt`). When
/// the rate is an integer multiple of the step rate the schedule is exact:
/// knots are delivered bit-identical to the chunk steps, with evenly
/// spaced interpolants between them. Non-integer multiples fall back to a
/// floating-point schedule.
pub fn stream_chunk(
    chunk: &ActionChunk,
    envelope: &SafetyEnvelope,
    sink: &mut dyn RobotSink,
    output_rate_hz: f64,
) -> Result<ReplayReport, ReplayError> {
    envelope.validate()?;
    let step_rate = 1.0 / chunk.dt_s;
    if !(output_rate_hz > 0.0) || !output_rate_hz.is_finite() {
        return Err(ReplayError::RateTooLow {
            rate: output_rate_hz,
            min: step_rate,
        });
    }
    // Tolerate rounding in rates derived from integer tick periods.
    if output_rate_hz < step_rate * (1.0 - 1e-9) {
        return Err(ReplayError::RateTooLow {
            rate: output_rate_hz,
            min: step_rate,
        });
    }

    let ratio = output_rate_hz * chunk.dt_s;
    let per_step = if (ratio - ratio.round()).abs() <= 1e-9 {
        ratio.round().max(1.0) as usize
    } else {
        0 // float schedule
    };
    let dt_ns = (chunk.dt_s * 1e9).round() as u64;

    let mut report = ReplayReport {
        steps_emitted: 0,
        samples_emitted: 0,
        abort: None,
        stopped_by_sink: false,
        completed: false,
    };

    // First knot: workspace only, no transition to check.
    match emit_sample(
        &mut report,
        envelope,
        sink,
        0,
        &chunk.steps[0].pose,
        &chunk.steps[0].hand,
        0,
    ) {
        Err(abort) => {
            report.abort = Some(abort);
            return Ok(report);
        }
        Ok(false) => return Ok(report),
        Ok(true) => report.steps_emitted = 1,
    }

    for k in 1..chunk.steps.len() {
        let prev = &chunk.steps[k - 1];
        let next = &chunk.steps[k];
        // Validate the whole segment before emitting anything inside it.
        if let Err(reason) = check_transition(prev, next, envelope, chunk.dt_s) {
            report.abort = Some(SafetyAbort { step: k, reason });
            return Ok(report);
        }
        if !envelope.contains(&next.pose) {
            report.abort = Some(SafetyAbort {
                step: k,
                reason: AbortReason::Workspace,
            });
            return Ok(report);
        }

        let result = if per_step > 0 {
            emit_segment_exact(&mut report, envelope, sink, prev, next, k, per_step, dt_ns)
        } else {
            emit_segment_float(
                &mut report,
                envelope,
                sink,
                prev,
                next,
                k,
                chunk.dt_s,
                output_rate_hz,
            )
        };
        match result {
            Err(abort) => {
                report.abort = Some(abort);
                return Ok(report);
            }
            Ok(false) => return Ok(report),
            Ok(true) => report.steps_emitted = k + 1,
        }
    }
    report.completed = true;
    Ok(report)
}

/// Deliver one sample after the per-sample workspace check. `Ok(false)`
/// means the sink stopped the replay.
fn emit_sample(
    report: &mut ReplayReport,
    envelope: &SafetyEnvelope,
    sink: &mut dyn RobotSink,
    time_ns: u64,
    pose: &Pose,
    hand: &HandCommand,
    step_index: usize,
) -> Result<bool, SafetyAbort> {
    // Workspace applies to every emitted sample, interpolants included.
    if !envelope.contains(pose) {
        return Err(SafetyAbort {
            step: step_index,
            reason: AbortReason::Workspace,
        });
    }
    if !sink.deliver(time_ns, pose, hand) {
        report.stopped_by_sink = true;
        return Ok(false);
    }
    report.samples_emitted += 1;
    Ok(true)
}

fn lerp_hand(a: &HandCommand, b: &HandCommand, u: f64) -> HandCommand {
    HandCommand {
        angles: a
            .angles
            .iter()
            .zip(&b.angles)
            .map(|(x, y)| x + (y - x) * u)
            .collect(),
    }
}

/// Interior samples plus the far knot, integer schedule. The far knot is
/// delivered as-is (no interpolation round-off).
#[allow(clippy::too_many_arguments)]
fn emit_segment_exact(
    report: &mut ReplayReport,
    envelope: &SafetyEnvelope,
    sink: &mut dyn RobotSink,
    prev: &ActionStep,
    next: &ActionStep,
    k: usize,
    per_step: usize,
    dt_ns: u64,
) -> Result<bool, SafetyAbort> {
    let base_ns = (k as u64 - 1) * dt_ns;
    for i in 1..per_step {
        let u = i as f64 / per_step as f64;
        let pose = se3::interpolate(&prev.pose, &next.pose, u).expect("u in range");
        let hand = lerp_hand(&prev.hand, &next.hand, u);
        let t = base_ns + (i as u64 * dt_ns) / per_step as u64;
        if !emit_sample(report, envelope, sink, t, &pose, &hand, k)? {
            return Ok(false);
        }
    }
    emit_sample(
        report,
        envelope,
        sink,
        k as u64 * dt_ns,
        &next.pose,
        &next.hand,
        k,
    )
}

/// Float schedule for non-integer rate ratios.
#[allow(clippy::too_many_arguments)]
fn emit_segment_float(
    report: &mut ReplayReport,
    envelope: &SafetyEnvelope,
    sink: &mut dyn RobotSink,
    prev: &ActionStep,
    next: &ActionStep,
    k: usize,
    dt_s: f64,
    rate_hz: f64,
) -> Result<bool, SafetyAbort> {
    let seg_start = (k - 1) as f64 * dt_s;
    let seg_end = k as f64 * dt_s;
    let period = 1.0 / rate_hz;
    let mut j = (seg_start / period).floor() as u64 + 1;
    loop {
        let t = j as f64 * period;
        if t >= seg_end - 1e-12 {
            break;
        }
        let u = ((t - seg_start) / dt_s).clamp(0.0, 1.0);
        let pose = se3::interpolate(&prev.pose, &next.pose, u).expect("u in range");
        let hand = lerp_hand(&prev.hand, &next.hand, u);
        if !emit_sample(
            report,
            envelope,
            sink,
            (t * 1e9).round() as u64,
            &pose,
            &hand,
            k,
        )? {
            return Ok(false);
        }
        j += 1;
    }
    emit_sample(
        report,
        envelope,
        sink,
        (seg_end * 1e9).round() as u64,
        &next.pose,
        &next.hand,
        k,
    )
}

/// Check the seam between two consecutive chunks: the jump from the last
/// step of `prev` to the first step of `next` must respect the speed and
/// joint-delta limits over `next`'s step interval.
pub fn continuity_check(
    prev: &ActionChunk,
    next: &ActionChunk,
    envelope: &SafetyEnvelope,
) -> Result<(), ReplayError> {
    envelope.validate()?;
    check_transition(prev.last(), next.first(), envelope, next.dt_s()).map_err(|reason| {
        let detail = match reason {
            AbortReason::Speed => format!(
                "{:.4} m over {} s",
                prev.last().pose.translation_distance_to(&next.first().pose),
                next.dt_s()
            ),
            _ => "joint jump across the seam".to_string(),
        };
        ReplayError::SeamViolation { reason, detail }
    })
}

/// Cut a recorded episode into fixed-length action chunks, preserving tick
/// timing (`dt = ` the episode's master tick period).
///
/// The episode must carry a pose stream and a joints stream without gaps,
/// contiguous ticks, and a hand model in its manifest; the first stream of
/// each kind in the roster is used.
pub fn replay_policy(
    meta: &EpisodeMeta,
    records: &[EpisodeRecord],
    chunk_len: usize,
) -> Result<Vec<ActionChunk>, ReplayError> {
    let hand = meta
        .hand_model
        .as_ref()
        .ok_or(ReplayError::MissingHandModel)?;
    let pose_idx = meta
        .roster
        .iter()
        .position(|d| d.kind == StreamKind::Pose)
        .ok_or(ReplayError::MissingStream { kind: "pose" })?;
    let joints_idx = meta
        .roster
        .iter()
        .position(|d| d.kind == StreamKind::Joints)
        .ok_or(ReplayError::MissingStream { kind: "joints" })?;
    if records.is_empty() {
        return Err(ReplayError::EmptyChunk);
    }
    let chunk_len = chunk_len.max(1);
    let dt_s = meta.period_ns() as f64 * 1e-9;

    let mut steps = Vec::with_capacity(records.len());
    let first_tick = records[0].tick_index;
    for (i, record) in records.iter().enumerate() {
        if record.tick_index != first_tick + i as u64 {
            return Err(ReplayError::NonContiguousTicks {
                tick: record.tick_index,
            });
        }
        let pose = match &record.entries[pose_idx] {
            StreamValue::Pose(p) => p.clone(),
            _ => {
                return Err(ReplayError::GapInActions {
                    tick: record.tick_index,
                })
            }
        };
        let hand_cmd = match &record.entries[joints_idx] {
            StreamValue::Joints(v) => HandCommand { angles: v.clone() },
            _ => {
                return Err(ReplayError::GapInActions {
                    tick: record.tick_index,
                })
            }
        };
        steps.push(ActionStep {
            pose,
            hand: hand_cmd,
        });
    }

    let mut chunks = Vec::with_capacity(steps.len().div_ceil(chunk_len));
    let mut iter = steps.into_iter().peekable();
    while iter.peek().is_some() {
        let batch: Vec<ActionStep> = iter.by_ref().take(chunk_len).collect();
        chunks.push(ActionChunk::new(dt_s, batch, hand)?);
    }
    Ok(chunks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retarget::load_hand_model;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn hand3() -> HandModel {
        load_hand_model("hand: h3\njoint: a -1 1\njoint: b -1 1\njoint: c -1 1\n").unwrap()
    }

    fn wide_envelope() -> SafetyEnvelope {
        SafetyEnvelope {
            workspace_min: [-10.0, -10.0, -10.0],
            workspace_max: [10.0, 10.0, 10.0],
            max_speed_mps: 100.0,
            max_joint_delta_rad: 10.0,
        }
    }

    fn line_chunk(n: usize, dx_per_step: f64, dt: f64) -> ActionChunk {
        let hand = hand3();
        let steps = (0..n)
            .map(|k| ActionStep {
                pose: Pose::from_parts([k as f64 * dx_per_step, 0.0, 0.5], [1.0, 0.0, 0.0, 0.0]),
                hand: HandCommand {
                    angles: vec![0.1 * k as f64 % 1.0, 0.0, -0.2],
                },
            })
            .collect();
        ActionChunk::new(dt, steps, &hand).unwrap()
    }

    #[test]
    fn chunk_construction_validates() {
        let hand = hand3();
        assert!(matches!(
            ActionChunk::new(0.1, vec![], &hand),
            Err(ReplayError::EmptyChunk)
        ));
        assert!(matches!(
            ActionChunk::new(0.0, vec![], &hand),
            Err(ReplayError::InvalidDt { .. })
        ));
        let bad = vec![ActionStep {
            pose: Pose::identity(),
            hand: HandCommand {
                angles: vec![5.0, 0.0, 0.0],
            },
        }];
        assert!(matches!(
            ActionChunk::new(0.1, bad, &hand),
            Err(ReplayError::InvalidHandCommand { step: 0, .. })
        ));
    }

    #[test]
    fn knot_rate_replay_is_bit_exact() {
        let chunk = line_chunk(10, 0.01, 0.1);
        let mut sink = RecordingSink::new();
        let report = stream_chunk(&chunk, &wide_envelope(), &mut sink, 10.0).unwrap();
        assert!(report.completed);
        assert_eq!(report.steps_emitted, 10);
        assert_eq!(report.samples_emitted, 10);
        assert!(report.abort.is_none());
        for (got, want) in sink.samples.iter().zip(chunk.steps()) {
            assert_eq!(got.1, want.pose);
            assert_eq!(got.2, want.hand);
        }
    }

    #[test]
    fn oversampled_replay_keeps_knots_exact_and_interpolates() {
        let chunk = line_chunk(4, 0.1, 0.1);
        let mut sink = RecordingSink::new();
        let report = stream_chunk(&chunk, &wide_envelope(), &mut sink, 30.0).unwrap();
        assert!(report.completed);
        assert_eq!(report.steps_emitted, 4);
        // 1 first knot + 3 segments x 3 samples.
        assert_eq!(report.samples_emitted, 10);
        assert_eq!(sink.samples[0].1, chunk.steps()[0].pose);
        assert_eq!(sink.samples[3].1, chunk.steps()[1].pose);
        // Interior sample sits strictly between knots.
        let x = sink.samples[1].1.translation.x;
        assert!(x > 0.0 && x < 0.1);
    }

    #[test]
    fn workspace_violation_aborts_at_offending_step() {
        let hand = hand3();
        let mut steps: Vec<ActionStep> = (0..5)
            .map(|k| ActionStep {
                pose: Pose::from_parts([k as f64 * 0.1, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]),
                hand: HandCommand { angles: vec![0.0; 3] },
            })
            .collect();
        steps[3].pose.translation.x = 99.0; // outside the box
        let chunk = ActionChunk::new(0.1, steps, &hand).unwrap();
        let mut envelope = wide_envelope();
        envelope.workspace_max = [1.0, 1.0, 1.0];
        envelope.workspace_min = [-1.0, -1.0, -1.0];
        envelope.max_speed_mps = 10_000.0;
        let mut sink = RecordingSink::new();
        let report = stream_chunk(&chunk, &envelope, &mut sink, 10.0).unwrap();
        assert_eq!(
            report.abort,
            Some(SafetyAbort {
                step: 3,
                reason: AbortReason::Workspace
            })
        );
        assert_eq!(report.steps_emitted, 3);
        assert_eq!(sink.samples.len(), 3);
        assert!(!report.completed);
    }

    #[test]
    fn speed_violation_from_half_meter_jump() {
        // Two steps 0.5 m apart with dt = 0.1 s is 5 m/s against a 1 m/s cap.
        let hand = hand3();
        let steps = vec![
            ActionStep {
                pose: Pose::identity(),
                hand: HandCommand { angles: vec![0.0; 3] },
            },
            ActionStep {
                pose: Pose::from_parts([0.5, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]),
                hand: HandCommand { angles: vec![0.0; 3] },
            },
        ];
        let chunk = ActionChunk::new(0.1, steps, &hand).unwrap();
        let mut envelope = wide_envelope();
        envelope.max_speed_mps = 1.0;
        let mut sink = RecordingSink::new();
        let report = stream_chunk(&chunk, &envelope, &mut sink, 10.0).unwrap();
        assert_eq!(
            report.abort,
            Some(SafetyAbort {
                step: 1,
                reason: AbortReason::Speed
            })
        );
        assert_eq!(report.steps_emitted, 1);
        assert_eq!(sink.samples.len(), 1);
    }

    #[test]
    fn joint_delta_violation() {
        let hand = hand3();
        let steps = vec![
            ActionStep {
                pose: Pose::identity(),
                hand: HandCommand { angles: vec![0.0; 3] },
            },
            ActionStep {
                pose: Pose::identity(),
                hand: HandCommand {
                    angles: vec![0.9, 0.0, 0.0],
                },
            },
        ];
        let chunk = ActionChunk::new(0.1, steps, &hand).unwrap();
        let mut envelope = wide_envelope();
        envelope.max_joint_delta_rad = 0.1;
        let mut sink = RecordingSink::new();
        let report = stream_chunk(&chunk, &envelope, &mut sink, 10.0).unwrap();
        assert_eq!(
            report.abort,
            Some(SafetyAbort {
                step: 1,
                reason: AbortReason::JointDelta
            })
        );
    }

    #[test]
    fn first_step_outside_box_emits_nothing() {
        let hand = hand3();
        let steps = vec![ActionStep {
            pose: Pose::from_parts([50.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]),
            hand: HandCommand { angles: vec![0.0; 3] },
        }];
        let chunk = ActionChunk::new(0.1, steps, &hand).unwrap();
        let mut sink = RecordingSink::new();
        let mut envelope = wide_envelope();
        envelope.workspace_max = [1.0, 1.0, 1.0];
        envelope.workspace_min = [-1.0, -1.0, -1.0];
        let report = stream_chunk(&chunk, &envelope, &mut sink, 10.0).unwrap();
        assert_eq!(
            report.abort,
            Some(SafetyAbort {
                step: 0,
                reason: AbortReason::Workspace
            })
        );
        assert_eq!(report.steps_emitted, 0);
        assert!(sink.samples.is_empty());
    }

    #[test]
    fn rate_below_step_rate_rejected() {
        let chunk = line_chunk(3, 0.01, 0.1);
        let mut sink = RecordingSink::new();
        let err = stream_chunk(&chunk, &wide_envelope(), &mut sink, 5.0).unwrap_err();
        assert!(matches!(err, ReplayError::RateTooLow { .. }));
    }

    #[test]
    fn continuity_ok_when_chunks_touch() {
        let a = line_chunk(5, 0.01, 0.1);
        // Next chunk starts exactly where a ends.
        let hand = hand3();
        let steps = vec![a.last().clone(), a.last().clone()];
        let b = ActionChunk::new(0.1, steps, &hand).unwrap();
        assert!(continuity_check(&a, &b, &wide_envelope()).is_ok());
        // Identical chunks back-to-back with zero terminal velocity.
        let still = ActionChunk::new(0.1, vec![a.last().clone(); 3], &hand).unwrap();
        assert!(continuity_check(&still, &still, &wide_envelope()).is_ok());
    }

    #[test]
    fn continuity_flags_joint_jump() {
        let hand = hand3();
        let a = ActionChunk::new(
            0.1,
            vec![ActionStep {
                pose: Pose::identity(),
                hand: HandCommand { angles: vec![0.0; 3] },
            }],
            &hand,
        )
        .unwrap();
        let b = ActionChunk::new(
            0.1,
            vec![ActionStep {
                pose: Pose::identity(),
                hand: HandCommand {
                    angles: vec![1.0, 0.0, 0.0],
                },
            }],
            &hand,
        )
        .unwrap();
        let mut envelope = wide_envelope();
        envelope.max_joint_delta_rad = 0.1;
        let err = continuity_check(&a, &b, &envelope).unwrap_err();
        assert!(matches!(
            err,
            ReplayError::SeamViolation {
                reason: AbortReason::JointDelta,
                ..
            }
        ));
    }

    fn episode_fixture(n: u64) -> (EpisodeMeta, Vec<EpisodeRecord>) {
        use crate::sync::StreamDescriptor;
        let mut meta = EpisodeMeta::new(
            "fixture",
            "test",
            30.0,
            true,
            vec![
                StreamDescriptor::new("ee_pose", StreamKind::Pose, 200.0),
                StreamDescriptor::new("hand", StreamKind::Joints, 120.0),
            ],
        );
        meta.hand_model = Some(hand3());
        let records = (0..n)
            .map(|tick| EpisodeRecord {
                tick_index: tick,
                entries: vec![
                    StreamValue::Pose(Pose::from_parts(
                        [tick as f64 * 0.001, 0.0, 0.5],
                        [1.0, 0.0, 0.0, 0.0],
                    )),
                    StreamValue::Joints(vec![(tick as f64 * 0.01) % 1.0, 0.0, 0.0]),
                ],
            })
            .collect();
        (meta, records)
    }

    #[test]
    fn replay_policy_partitions_evenly() {
        let (meta, records) = episode_fixture(90);
        let chunks = replay_policy(&meta, &records, 30).unwrap();
        assert_eq!(chunks.len(), 3);
        assert!(chunks.iter().all(|c| c.len() == 30));
        // Concatenation preserves the original sequence.
        let rebuilt: Vec<&ActionStep> = chunks.iter().flat_map(|c| c.steps()).collect();
        for (i, step) in rebuilt.iter().enumerate() {
            match &records[i].entries[0] {
                StreamValue::Pose(p) => assert_eq!(&step.pose, p),
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn replay_policy_leaves_short_tail() {
        let (meta, records) = episode_fixture(100);
        let chunks = replay_policy(&meta, &records, 30).unwrap();
        assert_eq!(chunks.len(), 4);
        assert_eq!(chunks[3].len(), 10);
    }

    #[test]
    fn replay_policy_flags_gaps() {
        let (meta, mut records) = episode_fixture(10);
        records[4].entries[0] = StreamValue::Gap;
        let err = replay_policy(&meta, &records, 30).unwrap_err();
        assert!(matches!(err, ReplayError::GapInActions { tick: 4 }));
    }

    #[test]
    fn replay_policy_requires_hand_model() {
        let (mut meta, records) = episode_fixture(10);
        meta.hand_model = None;
        let err = replay_policy(&meta, &records, 30).unwrap_err();
        assert!(matches!(err, ReplayError::MissingHandModel));
    }

    #[test]
    fn fuzz_no_emitted_sample_violates_envelope() {
        let mut rng = ChaCha12Rng::seed_from_u64(88);
        let hand = hand3();
        for _ in 0..200 {
            let n = rng.random_range(1..12);
            let steps: Vec<ActionStep> = (0..n)
                .map(|_| ActionStep {
                    pose: Pose::from_parts(
                        [
                            rng.random_range(-1.0..1.0),
                            rng.random_range(-1.0..1.0),
                            rng.random_range(-1.0..1.0),
                        ],
                        [1.0, 0.0, 0.0, 0.0],
                    ),
                    hand: HandCommand {
                        angles: vec![
                            rng.random_range(-1.0..1.0),
                            rng.random_range(-1.0..1.0),
                            rng.random_range(-1.0..1.0),
                        ],
                    },
                })
                .collect();
            let chunk = ActionChunk::new(0.05, steps, &hand).unwrap();
            let envelope = SafetyEnvelope {
                workspace_min: [-0.8, -0.8, -0.8],
                workspace_max: [0.8, 0.8, 0.8],
                max_speed_mps: rng.random_range(1.0..30.0),
                max_joint_delta_rad: rng.random_range(0.1..2.0),
            };
            let rate = [20.0, 40.0, 60.0][rng.random_range(0..3)];
            let mut sink = RecordingSink::new();
            let report = stream_chunk(&chunk, &envelope, &mut sink, rate).unwrap();
            for (_, pose, _) in &sink.samples {
                assert!(envelope.contains(pose));
            }
            if let Some(abort) = report.abort {
                assert_eq!(abort.step, report.steps_emitted);
            } else {
                assert!(report.completed);
                assert_eq!(report.steps_emitted, chunk.len());
            }
        }
    }
}
