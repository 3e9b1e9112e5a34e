//! Multi-rate sensor multiplexer: several producers push timestamped
//! samples, one consumer pulls time-aligned [`SyncedFrame`]s at a master
//! tick.
//!
//! Alignment policy per stream kind:
//!
//! - **pose**: shortest-arc interpolation between the bracketing samples;
//! - **joints**: per-element linear interpolation between brackets;
//! - **frame**: zero-order hold of the latest sample at or before the tick
//!   (images cannot be meaningfully interpolated).
//!
//! A tick that lands exactly on a sample timestamp returns that sample
//! bit-exactly. When only one bracket exists (start-up, stream silence),
//! pose/joints hold the nearest sample. A stream contributes a gap marker
//! iff it has no usable sample within its staleness budget of the tick —
//! for frames only past samples are usable; values are never fabricated.
//!
//! Buffers are bounded (default [`DEFAULT_BUFFER_CAPACITY`]); a full buffer
//! rejects the newest sample and counts the drop rather than silently
//! shedding old data. One producer per stream may push concurrently with
//! the single consumer; the emitted frames are a pure function of the
//! per-stream sample sequences present at alignment time, never of
//! cross-stream arrival order.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;

use thiserror::Error;

use crate::se3::{self, Pose};

/// Default bound on buffered samples per stream.
pub const DEFAULT_BUFFER_CAPACITY: usize = 1024;

#[derive(Debug, Error)]
pub enum SyncError {
    #[error("duplicate stream id {id}")]
    DuplicateId { id: String },
    #[error("session already started")]
    SessionAlreadyStarted,
    #[error("session not started")]
    SessionNotStarted,
    #[error("stream {id}: timestamp {ts} not after last accepted {last}")]
    NonMonotonicTimestamp { id: String, ts: u64, last: u64 },
    #[error("stream {id}: payload kind {got} does not match descriptor kind {expected}")]
    KindMismatch {
        id: String,
        got: &'static str,
        expected: &'static str,
    },
    #[error("sample carries stream id {got}, handle refers to {expected}")]
    StreamIdMismatch { got: String, expected: String },
    #[error("stream {id}: joints length changed from {expected} to {got}")]
    JointsLengthChanged { id: String, expected: usize, got: usize },
    #[error("invalid stream descriptor: {msg}")]
    InvalidDescriptor { msg: String },
}

impl SyncError {
    pub fn category(&self) -> &'static str {
        match self {
            SyncError::DuplicateId { .. } => "DuplicateId",
            SyncError::SessionAlreadyStarted => "SessionAlreadyStarted",
            SyncError::SessionNotStarted => "SessionNotStarted",
            SyncError::NonMonotonicTimestamp { .. } => "NonMonotonicTimestamp",
            SyncError::KindMismatch { .. } => "KindMismatch",
            SyncError::StreamIdMismatch { .. } => "StreamIdMismatch",
            SyncError::JointsLengthChanged { .. } => "JointsLengthChanged",
            SyncError::InvalidDescriptor { .. } => "InvalidDescriptor",
        }
    }
}

/// The three payload kinds the pipeline records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Pose,
    Joints,
    Frame,
}

impl StreamKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StreamKind::Pose => "pose",
            StreamKind::Joints => "joints",
            StreamKind::Frame => "frame",
        }
    }

    pub fn parse(s: &str) -> Option<StreamKind> {
        match s {
            "pose" => Some(StreamKind::Pose),
            "joints" => Some(StreamKind::Joints),
            "frame" => Some(StreamKind::Frame),
            _ => None,
        }
    }

    /// On-disk kind byte used in chunk headers.
    pub fn wire_code(self) -> u8 {
        match self {
            StreamKind::Pose => 0,
            StreamKind::Joints => 1,
            StreamKind::Frame => 2,
        }
    }

    pub fn from_wire_code(code: u8) -> Option<StreamKind> {
        match code {
            0 => Some(StreamKind::Pose),
            1 => Some(StreamKind::Joints),
            2 => Some(StreamKind::Frame),
            _ => None,
        }
    }
}

/// Static description of one stream in a session.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamDescriptor {
    pub id: String,
    pub kind: StreamKind,
    pub nominal_rate_hz: f64,
    pub staleness_budget_ns: u64,
}

impl StreamDescriptor {
    /// Descriptor with the default staleness budget of two nominal periods.
    pub fn new(id: impl Into<String>, kind: StreamKind, nominal_rate_hz: f64) -> Self {
        let period = period_ns(nominal_rate_hz);
        StreamDescriptor {
            id: id.into(),
            kind,
            nominal_rate_hz,
            staleness_budget_ns: period.saturating_mul(2),
        }
    }

    pub fn with_staleness(mut self, budget_ns: u64) -> Self {
        self.staleness_budget_ns = budget_ns;
        self
    }

    fn validate(&self) -> Result<(), SyncError> {
        if self.id.is_empty() || self.id.chars().any(char::is_whitespace) {
            return Err(SyncError::InvalidDescriptor {
                msg: format!("stream id {:?} must be non-empty without whitespace", self.id),
            });
        }
        if !(self.nominal_rate_hz > 0.0) || !self.nominal_rate_hz.is_finite() {
            return Err(SyncError::InvalidDescriptor {
                msg: format!("nominal rate must be positive, got {}", self.nominal_rate_hz),
            });
        }
        if self.staleness_budget_ns == 0 {
            return Err(SyncError::InvalidDescriptor {
                msg: "staleness budget must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Nominal sample period in nanoseconds for a rate in Hz.
pub fn period_ns(rate_hz: f64) -> u64 {
    (1e9 / rate_hz).round() as u64
}

/// Opaque image payload: the pipeline never decodes frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBlob {
    /// Encoding tag; 0 is the fixture raw 8-bit grayscale.
    pub encoding: u32,
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

/// Raw 8-bit grayscale, `width * height` bytes.
pub const ENCODING_RAW_GRAY8: u32 = 0;

#[derive(Debug, Clone, PartialEq)]
pub enum SamplePayload {
    Pose(Pose),
    Joints(Vec<f64>),
    Frame(FrameBlob),
}

impl SamplePayload {
    pub fn kind(&self) -> StreamKind {
        match self {
            SamplePayload::Pose(_) => StreamKind::Pose,
            SamplePayload::Joints(_) => StreamKind::Joints,
            SamplePayload::Frame(_) => StreamKind::Frame,
        }
    }
}

/// One timestamped reading from a producer. Timestamps are nanoseconds on
/// the session's monotonic clock and must strictly increase per stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub stream_id: String,
    pub timestamp_ns: u64,
    pub payload: SamplePayload,
}

/// Per-stream value inside a synced frame; `Gap` marks "no usable sample
/// within the staleness budget".
#[derive(Debug, Clone, PartialEq)]
pub enum StreamValue {
    Pose(Pose),
    Joints(Vec<f64>),
    Frame(FrameBlob),
    Gap,
}

impl StreamValue {
    pub fn is_gap(&self) -> bool {
        matches!(self, StreamValue::Gap)
    }
}

/// Time-aligned tuple across all registered streams at one master tick.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncedFrame {
    pub tick_index: u64,
    pub tick_time_ns: u64,
    /// One entry per registered stream, roster order.
    pub entries: Vec<StreamValue>,
}

/// Handle returned by [`SyncSession::register_stream`]; index into the
/// roster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamHandle(usize);

impl StreamHandle {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Whether a push entered the buffer or was shed by the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PushOutcome {
    Accepted,
    /// Buffer full; the sample was dropped and the stream's drop counter
    /// incremented.
    RejectedFull,
}

struct StreamState {
    samples: VecDeque<(u64, SamplePayload)>,
    last_accepted_ts: Option<u64>,
    joints_len: Option<usize>,
    dropped: u64,
}

/// The multiplexer. Register streams, start, push from one producer per
/// stream, align from a single consumer.
pub struct SyncSession {
    descriptors: Vec<StreamDescriptor>,
    streams: Vec<Mutex<StreamState>>,
    started: AtomicBool,
    tick_counter: AtomicU64,
    capacity: usize,
}

impl SyncSession {
    pub fn new() -> Self {
        Self::with_capacity(DEFAULT_BUFFER_CAPACITY)
    }

    /// Session whose per-stream buffers hold at most `capacity` samples.
    pub fn with_capacity(capacity: usize) -> Self {
        SyncSession {
            descriptors: Vec::new(),
            streams: Vec::new(),
            started: AtomicBool::new(false),
            tick_counter: AtomicU64::new(0),
            capacity: capacity.max(1),
        }
    }

    pub fn register_stream(&mut self, desc: StreamDescriptor) -> Result<StreamHandle, SyncError> {
        if self.started.load(Ordering::Acquire) {
            return Err(SyncError::SessionAlreadyStarted);
        }
        desc.validate()?;
        if self.descriptors.iter().any(|d| d.id == desc.id) {
            return Err(SyncError::DuplicateId { id: desc.id });
        }
        self.descriptors.push(desc);
        self.streams.push(Mutex::new(StreamState {
            samples: VecDeque::new(),
            last_accepted_ts: None,
            joints_len: None,
            dropped: 0,
        }));
        Ok(StreamHandle(self.descriptors.len() - 1))
    }

    /// Freeze the roster and open the session for pushes.
    pub fn start(&mut self) -> Result<(), SyncError> {
        if self.started.swap(true, Ordering::AcqRel) {
            return Err(SyncError::SessionAlreadyStarted);
        }
        Ok(())
    }

    pub fn is_started(&self) -> bool {
        self.started.load(Ordering::Acquire)
    }

    pub fn descriptors(&self) -> &[StreamDescriptor] {
        &self.descriptors
    }

    pub fn handle_for(&self, id: &str) -> Option<StreamHandle> {
        self.descriptors
            .iter()
            .position(|d| d.id == id)
            .map(StreamHandle)
    }

    /// Samples shed by the buffer bound so far for this stream.
    pub fn dropped(&self, handle: StreamHandle) -> u64 {
        self.streams[handle.0].lock().unwrap().dropped
    }

    pub fn push(&self, handle: StreamHandle, sample: Sample) -> Result<PushOutcome, SyncError> {
        if !self.started.load(Ordering::Acquire) {
            return Err(SyncError::SessionNotStarted);
        }
        let desc = &self.descriptors[handle.0];
        if sample.stream_id != desc.id {
            return Err(SyncError::StreamIdMismatch {
                got: sample.stream_id,
                expected: desc.id.clone(),
            });
        }
        if sample.payload.kind() != desc.kind {
            return Err(SyncError::KindMismatch {
                id: desc.id.clone(),
                got: sample.payload.kind().as_str(),
                expected: desc.kind.as_str(),
            });
        }
        let mut state = self.streams[handle.0].lock().unwrap();
        if let SamplePayload::Joints(v) = &sample.payload {
            match state.joints_len {
                None => state.joints_len = Some(v.len()),
                Some(expected) if expected != v.len() => {
                    return Err(SyncError::JointsLengthChanged {
                        id: desc.id.clone(),
                        expected,
                        got: v.len(),
                    })
                }
                _ => {}
            }
        }
        if let Some(last) = state.last_accepted_ts {
            if sample.timestamp_ns <= last {
                return Err(SyncError::NonMonotonicTimestamp {
                    id: desc.id.clone(),
                    ts: sample.timestamp_ns,
                    last,
                });
            }
        }
        if state.samples.len() >= self.capacity {
            state.dropped += 1;
            return Ok(PushOutcome::RejectedFull);
        }
        state.last_accepted_ts = Some(sample.timestamp_ns);
        state.samples.push_back((sample.timestamp_ns, sample.payload));
        Ok(PushOutcome::Accepted)
    }

    /// Produce the synced frame for `tick_time_ns`. Gaps are in-band
    /// markers, never failures. Consumed history older than the tick is
    /// pruned as a side effect; the single consumer must align with
    /// non-decreasing tick times.
    pub fn align_at(&self, tick_time_ns: u64) -> SyncedFrame {
        let tick_index = self.tick_counter.fetch_add(1, Ordering::AcqRel);
        let entries = self
            .descriptors
            .iter()
            .zip(&self.streams)
            .map(|(desc, m)| {
                let mut state = m.lock().unwrap();
                let value = resolve(desc, &state.samples, tick_time_ns);
                prune(&mut state.samples, tick_time_ns);
                value
            })
            .collect();
        SyncedFrame {
            tick_index,
            tick_time_ns,
            entries,
        }
    }
}

impl Default for SyncSession {
    fn default() -> Self {
        Self::new()
    }
}

/// Drop history no future tick (>= the current one) can reference: a front
/// sample is dead once the next sample is also at or before the tick.
fn prune(samples: &mut VecDeque<(u64, SamplePayload)>, tick_time_ns: u64) {
    while samples.len() >= 2 && samples[1].0 <= tick_time_ns {
        samples.pop_front();
    }
}

fn resolve(
    desc: &StreamDescriptor,
    samples: &VecDeque<(u64, SamplePayload)>,
    tick: u64,
) -> StreamValue {
    let budget = desc.staleness_budget_ns;
    // Latest sample at or before the tick, earliest strictly after.
    let before = samples.iter().take_while(|(ts, _)| *ts <= tick).last();
    let after = samples.iter().find(|(ts, _)| *ts > tick);

    if desc.kind == StreamKind::Frame {
        return match before {
            Some((ts, SamplePayload::Frame(blob))) if tick - ts <= budget => {
                StreamValue::Frame(blob.clone())
            }
            _ => StreamValue::Gap,
        };
    }

    match (before, after) {
        (Some((t0, p0)), _) if *t0 == tick => payload_value(p0),
        (Some((t0, p0)), Some((t1, p1))) => {
            if tick - t0 <= budget || t1 - tick <= budget {
                let u = (tick - t0) as f64 / (t1 - t0) as f64;
                interpolate_payloads(p0, p1, u)
            } else {
                StreamValue::Gap
            }
        }
        (Some((t0, p0)), None) if tick - t0 <= budget => payload_value(p0),
        (None, Some((t1, p1))) if t1 - tick <= budget => payload_value(p1),
        _ => StreamValue::Gap,
    }
}

fn payload_value(p: &SamplePayload) -> StreamValue {
    match p {
        SamplePayload::Pose(pose) => StreamValue::Pose(pose.clone()),
        SamplePayload::Joints(v) => StreamValue::Joints(v.clone()),
        SamplePayload::Frame(b) => StreamValue::Frame(b.clone()),
    }
}

fn interpolate_payloads(a: &SamplePayload, b: &SamplePayload, u: f64) -> StreamValue {
    match (a, b) {
        (SamplePayload::Pose(pa), SamplePayload::Pose(pb)) => {
            // u is in [0, 1] by construction of the brackets.
            StreamValue::Pose(se3::interpolate(pa, pb, u).expect("bracket fraction in range"))
        }
        (SamplePayload::Joints(va), SamplePayload::Joints(vb)) => StreamValue::Joints(
            va.iter()
                .zip(vb)
                .map(|(x, y)| x + (y - x) * u)
                .collect(),
        ),
        // Kind consistency is enforced at push time.
        _ => unreachable!("mixed payload kinds within one stream"),
    }
}
