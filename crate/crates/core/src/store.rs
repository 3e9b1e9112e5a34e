//! Verifiable on-disk episode storage and dataset statistics.
//!
//! An episode is a directory:
//!
//! ```text
//! <episode>/
//!   manifest.txt        text metadata, `key: value` dialect
//!   <stream_id>.chunk   one binary chunk per roster stream
//! ```
//!
//! Chunk layout (all integers little-endian):
//!
//! ```text
//! header   4 bytes magic "EXVH" | u16 version (1) | u8 stream kind
//! records  { u64 timestamp_ns | u32 payload_len | payload } *
//! footer   u32 CRC32 (IEEE) over the records region
//! ```
//!
//! A record with `payload_len = 0` is a gap marker. Payload layouts:
//! pose = 7 f64 (tx ty tz qw qx qy qz); joints = n f64; frame = u32
//! encoding | u32 width | u32 height | bytes (encoding 0 is raw 8-bit
//! grayscale, `width * height` bytes).
//!
//! Record timestamps are master-tick times, `tick_index * period`, with
//! the period derived from the manifest tick rate; every stream chunk in
//! an episode carries the same timestamp sequence. Readers verify the CRC
//! before parsing any record, so corruption fails fast and deterministically.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{ConfigError, Document};
use crate::retarget::{HandModel, Joint};
use crate::se3::{Pose, POSE_WIRE_BYTES};
use crate::sync::{
    period_ns, FrameBlob, StreamDescriptor, StreamKind, StreamValue, ENCODING_RAW_GRAY8,
};

/// Chunk magic bytes.
pub const CHUNK_MAGIC: [u8; 4] = *b"EXVH";
/// Current chunk format version.
pub const FORMAT_VERSION: u16 = 1;
/// Chunk header size: magic + version + kind.
pub const CHUNK_HEADER_BYTES: usize = 7;
/// Manifest file name inside an episode directory.
pub const MANIFEST_NAME: &str = "manifest.txt";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid roster: {msg}")]
    InvalidRoster { msg: String },
    #[error("tick {tick} not after last written tick {last}")]
    TickOrderError { tick: u64, last: u64 },
    #[error("stream {stream}: {msg}")]
    SizeMismatch { stream: String, msg: String },
    #[error("stream {stream}: payload kind {got} does not match roster kind {expected}")]
    KindMismatch {
        stream: String,
        expected: &'static str,
        got: &'static str,
    },
    #[error("episode already finalized")]
    AlreadyFinalized,
    #[error("episode at {path} is not finalized")]
    NotFinalized { path: PathBuf },
    #[error(
        "chunk {chunk}: checksum mismatch at footer offset {offset} \
         (stored {stored:#010x}, computed {computed:#010x})"
    )]
    ChecksumMismatch {
        chunk: String,
        offset: u64,
        stored: u32,
        computed: u32,
    },
    #[error("chunk {chunk}: {detail}")]
    FormatVersionUnsupported { chunk: String, detail: String },
    #[error("{msg}")]
    Format { msg: String },
    #[error("no episodes recorded for task {task}")]
    NoSuchTask { task: String },
}

impl From<ConfigError> for StoreError {
    fn from(e: ConfigError) -> Self {
        StoreError::Format {
            msg: format!("manifest: {e}"),
        }
    }
}

impl StoreError {
    pub fn category(&self) -> &'static str {
        match self {
            StoreError::Io(_) => "IoError",
            StoreError::InvalidRoster { .. } => "InvalidRoster",
            StoreError::TickOrderError { .. } => "TickOrderError",
            StoreError::SizeMismatch { .. } => "SizeMismatch",
            StoreError::KindMismatch { .. } => "KindMismatch",
            StoreError::AlreadyFinalized => "AlreadyFinalized",
            StoreError::NotFinalized { .. } => "NotFinalized",
            StoreError::ChecksumMismatch { .. } => "ChecksumMismatch",
            StoreError::FormatVersionUnsupported { .. } => "FormatVersionUnsupported",
            StoreError::Format { .. } => "FormatError",
            StoreError::NoSuchTask { .. } => "NoSuchTask",
        }
    }
}

/// Episode metadata. Counters (`duration_s`, `records`, `empty`,
/// `finalized`) are filled in by [`EpisodeWriter::finalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMeta {
    pub task: String,
    pub operator: String,
    pub start_time_unix_ns: u64,
    pub tick_rate_hz: f64,
    pub success: bool,
    pub roster: Vec<StreamDescriptor>,
    /// Hand the joints stream was retargeted for, when known; replay needs
    /// it to validate commands against limits.
    pub hand_model: Option<HandModel>,
    pub duration_s: f64,
    pub records: u64,
    pub empty: bool,
    pub finalized: bool,
}

impl EpisodeMeta {
    pub fn new(
        task: impl Into<String>,
        operator: impl Into<String>,
        tick_rate_hz: f64,
        success: bool,
        roster: Vec<StreamDescriptor>,
    ) -> Self {
        let start = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0);
        EpisodeMeta {
            task: task.into(),
            operator: operator.into(),
            start_time_unix_ns: start,
            tick_rate_hz,
            success,
            roster,
            hand_model: None,
            duration_s: 0.0,
            records: 0,
            empty: true,
            finalized: false,
        }
    }

    pub fn with_hand_model(mut self, model: HandModel) -> Self {
        self.hand_model = Some(model);
        self
    }

    pub fn with_start_time(mut self, unix_ns: u64) -> Self {
        self.start_time_unix_ns = unix_ns;
        self
    }

    /// Master tick period in nanoseconds.
    pub fn period_ns(&self) -> u64 {
        period_ns(self.tick_rate_hz)
    }

    fn validate(&self) -> Result<(), StoreError> {
        if self.roster.is_empty() {
            return Err(StoreError::InvalidRoster {
                msg: "stream roster is empty".into(),
            });
        }
        let mut seen = HashSet::new();
        for d in &self.roster {
            if d.id.is_empty() || d.id.chars().any(|c| c.is_whitespace() || c == '/') {
                return Err(StoreError::InvalidRoster {
                    msg: format!("stream id {:?} is not a valid chunk name", d.id),
                });
            }
            if !seen.insert(d.id.as_str()) {
                return Err(StoreError::InvalidRoster {
                    msg: format!("duplicate stream id {:?}", d.id),
                });
            }
            if !(d.nominal_rate_hz > 0.0) || d.staleness_budget_ns == 0 {
                return Err(StoreError::InvalidRoster {
                    msg: format!("stream {:?} has invalid rate or staleness", d.id),
                });
            }
        }
        if !(self.tick_rate_hz > 0.0) || !self.tick_rate_hz.is_finite() {
            return Err(StoreError::InvalidRoster {
                msg: format!("tick rate must be positive, got {}", self.tick_rate_hz),
            });
        }
        Ok(())
    }
}

/// One persisted tick: the synced-frame payloads in roster order.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub tick_index: u64,
    pub entries: Vec<StreamValue>,
}

#[derive(Debug)]
struct ChunkWriter {
    file: BufWriter<File>,
    hasher: crc32fast::Hasher,
}

impl ChunkWriter {
    fn write_record(&mut self, timestamp_ns: u64, payload: &[u8]) -> Result<(), StoreError> {
        let mut buf = Vec::with_capacity(12 + payload.len());
        buf.extend_from_slice(&timestamp_ns.to_le_bytes());
        buf.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        buf.extend_from_slice(payload);
        self.hasher.update(&buf);
        self.file.write_all(&buf)?;
        Ok(())
    }
}

/// Streaming episode writer: one per episode directory.
#[derive(Debug)]
pub struct EpisodeWriter {
    dir: PathBuf,
    meta: EpisodeMeta,
    chunks: Vec<ChunkWriter>,
    joints_len: Vec<Option<usize>>,
    first_tick: Option<u64>,
    last_tick: Option<u64>,
    records: u64,
    period_ns: u64,
    finalized: bool,
}

/// Create the episode directory, write the manifest stub, and open one
/// chunk per roster stream.
pub fn begin_episode(meta: EpisodeMeta, dir: &Path) -> Result<EpisodeWriter, StoreError> {
    meta.validate()?;
    fs::create_dir_all(dir)?;
    let manifest_path = dir.join(MANIFEST_NAME);
    if manifest_path.exists() {
        return Err(StoreError::Io(std::io::Error::new(
            std::io::ErrorKind::AlreadyExists,
            format!("episode already exists at {}", dir.display()),
        )));
    }
    write_manifest(&manifest_path, &meta)?;
    let mut chunks = Vec::with_capacity(meta.roster.len());
    for desc in &meta.roster {
        let mut file = BufWriter::new(File::create(chunk_path(dir, &desc.id))?);
        file.write_all(&CHUNK_MAGIC)?;
        file.write_all(&FORMAT_VERSION.to_le_bytes())?;
        file.write_all(&[desc.kind.wire_code()])?;
        chunks.push(ChunkWriter {
            file,
            hasher: crc32fast::Hasher::new(),
        });
    }
    let period = meta.period_ns();
    let joints_len = vec![None; meta.roster.len()];
    Ok(EpisodeWriter {
        dir: dir.to_path_buf(),
        meta,
        chunks,
        joints_len,
        first_tick: None,
        last_tick: None,
        records: 0,
        period_ns: period,
        finalized: false,
    })
}

impl EpisodeWriter {
    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn append(&mut self, record: &EpisodeRecord) -> Result<(), StoreError> {
        if self.finalized {
            return Err(StoreError::AlreadyFinalized);
        }
        if let Some(last) = self.last_tick {
            if record.tick_index <= last {
                return Err(StoreError::TickOrderError {
                    tick: record.tick_index,
                    last,
                });
            }
        }
        if record.entries.len() != self.meta.roster.len() {
            return Err(StoreError::SizeMismatch {
                stream: "*".into(),
                msg: format!(
                    "record has {} entries, roster has {}",
                    record.entries.len(),
                    self.meta.roster.len()
                ),
            });
        }
        // Validate every entry before writing any byte, so a bad record
        // cannot leave the chunks out of step with each other.
        let mut payloads = Vec::with_capacity(record.entries.len());
        for (i, (entry, desc)) in record.entries.iter().zip(&self.meta.roster).enumerate() {
            payloads.push(encode_payload(entry, desc, &mut self.joints_len[i])?);
        }
        let timestamp = record.tick_index * self.period_ns;
        for (chunk, payload) in self.chunks.iter_mut().zip(&payloads) {
            chunk.write_record(timestamp, payload)?;
        }
        self.first_tick.get_or_insert(record.tick_index);
        self.last_tick = Some(record.tick_index);
        self.records += 1;
        Ok(())
    }

    /// Write chunk footers and the completed manifest; returns the final
    /// metadata. A second call is an error.
    pub fn finalize(&mut self) -> Result<EpisodeMeta, StoreError> {
        if self.finalized {
            return Err(StoreError::AlreadyFinalized);
        }
        for chunk in &mut self.chunks {
            let crc = chunk.hasher.clone().finalize();
            chunk.file.write_all(&crc.to_le_bytes())?;
            chunk.file.flush()?;
        }
        let span_ticks = match (self.first_tick, self.last_tick) {
            (Some(first), Some(last)) => last - first,
            _ => 0,
        };
        self.meta.duration_s = span_ticks as f64 * self.period_ns as f64 * 1e-9;
        self.meta.records = self.records;
        self.meta.empty = self.records == 0;
        self.meta.finalized = true;
        write_manifest(&self.dir.join(MANIFEST_NAME), &self.meta)?;
        self.finalized = true;
        Ok(self.meta.clone())
    }
}

fn chunk_path(dir: &Path, stream_id: &str) -> PathBuf {
    dir.join(format!("{stream_id}.chunk"))
}

fn encode_payload(
    entry: &StreamValue,
    desc: &StreamDescriptor,
    joints_len: &mut Option<usize>,
) -> Result<Vec<u8>, StoreError> {
    let check_kind = |got: StreamKind| -> Result<(), StoreError> {
        if got != desc.kind {
            return Err(StoreError::KindMismatch {
                stream: desc.id.clone(),
                expected: desc.kind.as_str(),
                got: got.as_str(),
            });
        }
        Ok(())
    };
    match entry {
        StreamValue::Gap => Ok(Vec::new()),
        StreamValue::Pose(p) => {
            check_kind(StreamKind::Pose)?;
            Ok(p.to_le_bytes().to_vec())
        }
        StreamValue::Joints(v) => {
            check_kind(StreamKind::Joints)?;
            match joints_len {
                None => *joints_len = Some(v.len()),
                Some(expected) if *expected != v.len() => {
                    return Err(StoreError::SizeMismatch {
                        stream: desc.id.clone(),
                        msg: format!("joints payload length {} != {}", v.len(), expected),
                    })
                }
                _ => {}
            }
            let mut out = Vec::with_capacity(v.len() * 8);
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
            Ok(out)
        }
        StreamValue::Frame(b) => {
            check_kind(StreamKind::Frame)?;
            if b.encoding == ENCODING_RAW_GRAY8
                && b.data.len() != (b.width as usize) * (b.height as usize)
            {
                return Err(StoreError::SizeMismatch {
                    stream: desc.id.clone(),
                    msg: format!(
                        "raw gray8 frame of {}x{} needs {} bytes, got {}",
                        b.width,
                        b.height,
                        b.width as usize * b.height as usize,
                        b.data.len()
                    ),
                });
            }
            let mut out = Vec::with_capacity(12 + b.data.len());
            out.extend_from_slice(&b.encoding.to_le_bytes());
            out.extend_from_slice(&b.width.to_le_bytes());
            out.extend_from_slice(&b.height.to_le_bytes());
            out.extend_from_slice(&b.data);
            Ok(out)
        }
    }
}

fn decode_payload(
    bytes: &[u8],
    kind: StreamKind,
    chunk: &str,
    offset: usize,
) -> Result<StreamValue, StoreError> {
    if bytes.is_empty() {
        return Ok(StreamValue::Gap);
    }
    let bad = |msg: String| StoreError::Format {
        msg: format!("chunk {chunk} at offset {offset}: {msg}"),
    };
    match kind {
        StreamKind::Pose => {
            if bytes.len() != POSE_WIRE_BYTES {
                return Err(bad(format!(
                    "pose payload must be {POSE_WIRE_BYTES} bytes, got {}",
                    bytes.len()
                )));
            }
            Ok(StreamValue::Pose(Pose::from_le_bytes(bytes).unwrap()))
        }
        StreamKind::Joints => {
            if !bytes.len().is_multiple_of(8) {
                return Err(bad(format!(
                    "joints payload of {} bytes is not a whole number of f64",
                    bytes.len()
                )));
            }
            Ok(StreamValue::Joints(
                bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ))
        }
        StreamKind::Frame => {
            if bytes.len() < 12 {
                return Err(bad("frame payload shorter than its header".into()));
            }
            let encoding = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
            let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
            let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
            let data = bytes[12..].to_vec();
            if encoding == ENCODING_RAW_GRAY8
                && data.len() != (width as usize) * (height as usize)
            {
                return Err(bad(format!(
                    "raw gray8 frame of {width}x{height} needs {} bytes, got {}",
                    width as usize * height as usize,
                    data.len()
                )));
            }
            Ok(StreamValue::Frame(FrameBlob {
                encoding,
                width,
                height,
                data,
            }))
        }
    }
}

fn write_manifest(path: &Path, meta: &EpisodeMeta) -> Result<(), StoreError> {
    let mut out = String::new();
    out.push_str(&format!("format: {FORMAT_VERSION}\n"));
    out.push_str(&format!("task: {}\n", meta.task));
    out.push_str(&format!("operator: {}\n", meta.operator));
    out.push_str(&format!("start_time_unix_ns: {}\n", meta.start_time_unix_ns));
    out.push_str(&format!("tick_rate_hz: {}\n", meta.tick_rate_hz));
    out.push_str(&format!("duration_s: {}\n", meta.duration_s));
    out.push_str(&format!("records: {}\n", meta.records));
    out.push_str(&format!("success: {}\n", meta.success));
    out.push_str(&format!("empty: {}\n", meta.empty));
    out.push_str(&format!("finalized: {}\n", meta.finalized));
    for d in &meta.roster {
        out.push_str(&format!(
            "stream: {} {} {} {}\n",
            d.id,
            d.kind.as_str(),
            d.nominal_rate_hz,
            d.staleness_budget_ns
        ));
    }
    if let Some(hand) = &meta.hand_model {
        out.push_str(&format!("hand: {}\n", hand.name));
        for j in &hand.joints {
            out.push_str(&format!("hand_joint: {} {} {}\n", j.name, j.lower, j.upper));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Parse a manifest back into metadata.
pub fn read_manifest(path: &Path) -> Result<EpisodeMeta, StoreError> {
    let text = fs::read_to_string(path)?;
    let doc = Document::parse(&text)?;
    let format = doc.require("format")?.parse_u64()?;
    if format != FORMAT_VERSION as u64 {
        return Err(StoreError::FormatVersionUnsupported {
            chunk: path.display().to_string(),
            detail: format!("manifest format {format} unsupported (expected {FORMAT_VERSION})"),
        });
    }
    let mut roster = Vec::new();
    for entry in doc.get_all("stream") {
        let fields = entry.fields();
        if fields.len() != 4 {
            return Err(StoreError::Format {
                msg: format!("manifest line {}: bad stream entry", entry.line),
            });
        }
        let kind = StreamKind::parse(fields[1]).ok_or_else(|| StoreError::Format {
            msg: format!(
                "manifest line {}: unknown stream kind {}",
                entry.line, fields[1]
            ),
        })?;
        let rate: f64 = fields[2].parse().map_err(|_| StoreError::Format {
            msg: format!("manifest line {}: bad rate", entry.line),
        })?;
        let staleness: u64 = fields[3].parse().map_err(|_| StoreError::Format {
            msg: format!("manifest line {}: bad staleness", entry.line),
        })?;
        roster.push(StreamDescriptor::new(fields[0], kind, rate).with_staleness(staleness));
    }
    let hand_model = match doc.get_str("hand") {
        Some(name) => {
            let mut joints = Vec::new();
            for entry in doc.get_all("hand_joint") {
                let fields = entry.fields();
                if fields.len() != 3 {
                    return Err(StoreError::Format {
                        msg: format!("manifest line {}: bad hand_joint entry", entry.line),
                    });
                }
                let lower: f64 = fields[1].parse().map_err(|_| StoreError::Format {
                    msg: format!("manifest line {}: bad joint limit", entry.line),
                })?;
                let upper: f64 = fields[2].parse().map_err(|_| StoreError::Format {
                    msg: format!("manifest line {}: bad joint limit", entry.line),
                })?;
                joints.push(Joint {
                    name: fields[0].to_string(),
                    lower,
                    upper,
                });
            }
            Some(
                HandModel::new(name, joints).map_err(|e| StoreError::Format {
                    msg: format!("manifest hand model: {e}"),
                })?,
            )
        }
        None => None,
    };
    Ok(EpisodeMeta {
        task: doc.require("task")?.value.clone(),
        operator: doc.require("operator")?.value.clone(),
        start_time_unix_ns: doc.require("start_time_unix_ns")?.parse_u64()?,
        tick_rate_hz: doc.require("tick_rate_hz")?.parse_f64()?,
        success: doc.require("success")?.parse_bool()?,
        roster,
        hand_model,
        duration_s: doc.f64_or("duration_s", 0.0)?,
        records: doc.u64_or("records", 0)?,
        empty: doc.bool_or("empty", true)?,
        finalized: doc.bool_or("finalized", false)?,
    })
}

/// Load an episode: verify every chunk (header, CRC, structure) up front,
/// then hand back the metadata and a lazy record iterator in tick order.
pub fn load_episode(dir: &Path) -> Result<(EpisodeMeta, RecordIter), StoreError> {
    let meta = read_manifest(&dir.join(MANIFEST_NAME))?;
    if !meta.finalized {
        return Err(StoreError::NotFinalized {
            path: dir.to_path_buf(),
        });
    }
    if meta.roster.is_empty() {
        return Err(StoreError::InvalidRoster {
            msg: "manifest roster is empty".into(),
        });
    }
    let period = meta.period_ns();
    let mut per_stream: Vec<Vec<(u64, StreamValue)>> = Vec::with_capacity(meta.roster.len());
    for desc in &meta.roster {
        per_stream.push(read_chunk(dir, desc)?);
    }
    let n = per_stream[0].len();
    for (desc, recs) in meta.roster.iter().zip(&per_stream) {
        if recs.len() != n {
            return Err(StoreError::Format {
                msg: format!(
                    "chunk {}.chunk has {} records, {}.chunk has {n}",
                    desc.id,
                    recs.len(),
                    meta.roster[0].id
                ),
            });
        }
    }
    if n as u64 != meta.records {
        return Err(StoreError::Format {
            msg: format!("manifest declares {} records, chunks hold {n}", meta.records),
        });
    }
    let mut records = Vec::with_capacity(n);
    let mut last_tick: Option<u64> = None;
    for i in 0..n {
        let ts = per_stream[0][i].0;
        for (desc, recs) in meta.roster.iter().zip(&per_stream) {
            if recs[i].0 != ts {
                return Err(StoreError::Format {
                    msg: format!(
                        "record {i}: chunk {}.chunk timestamp {} disagrees with {}",
                        desc.id, recs[i].0, ts
                    ),
                });
            }
        }
        if !ts.is_multiple_of(period) {
            return Err(StoreError::Format {
                msg: format!("record {i}: timestamp {ts} is not on the {period} ns tick grid"),
            });
        }
        let tick = ts / period;
        if let Some(last) = last_tick {
            if tick <= last {
                return Err(StoreError::TickOrderError { tick, last });
            }
        }
        last_tick = Some(tick);
        let entries = per_stream
            .iter_mut()
            .map(|s| std::mem::replace(&mut s[i].1, StreamValue::Gap));
        records.push(EpisodeRecord {
            tick_index: tick,
            entries: entries.collect(),
        });
    }
    Ok((
        meta,
        RecordIter {
            inner: records.into_iter(),
        },
    ))
}

/// Iterator over validated episode records, tick order.
#[derive(Debug)]
pub struct RecordIter {
    inner: std::vec::IntoIter<EpisodeRecord>,
}

impl Iterator for RecordIter {
    type Item = EpisodeRecord;

    fn next(&mut self) -> Option<EpisodeRecord> {
        self.inner.next()
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        self.inner.size_hint()
    }
}

fn read_chunk(dir: &Path, desc: &StreamDescriptor) -> Result<Vec<(u64, StreamValue)>, StoreError> {
    let name = format!("{}.chunk", desc.id);
    let bytes = fs::read(chunk_path(dir, &desc.id))?;
    if bytes.len() < CHUNK_HEADER_BYTES + 4 {
        return Err(StoreError::Format {
            msg: format!("chunk {name}: truncated ({} bytes)", bytes.len()),
        });
    }
    if bytes[0..4] != CHUNK_MAGIC {
        return Err(StoreError::FormatVersionUnsupported {
            chunk: name,
            detail: format!("unknown magic bytes {:02x?}", &bytes[0..4]),
        });
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(StoreError::FormatVersionUnsupported {
            chunk: name,
            detail: format!("version {version} unsupported (expected {FORMAT_VERSION})"),
        });
    }
    let kind = StreamKind::from_wire_code(bytes[6]).ok_or_else(|| StoreError::Format {
        msg: format!("chunk {name}: unknown stream kind byte {:#04x}", bytes[6]),
    })?;
    if kind != desc.kind {
        return Err(StoreError::Format {
            msg: format!(
                "chunk {name}: kind {} disagrees with manifest kind {}",
                kind.as_str(),
                desc.kind.as_str()
            ),
        });
    }

    // Checksum before structure: corrupted bodies fail here, deterministically.
    let body = &bytes[CHUNK_HEADER_BYTES..bytes.len() - 4];
    let footer_offset = (bytes.len() - 4) as u64;
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(StoreError::ChecksumMismatch {
            chunk: name,
            offset: footer_offset,
            stored,
            computed,
        });
    }

    let mut records = Vec::new();
    let mut pos = 0usize;
    while pos < body.len() {
        if body.len() - pos < 12 {
            return Err(StoreError::Format {
                msg: format!("chunk {name}: truncated record header at offset {pos}"),
            });
        }
        let ts = u64::from_le_bytes(body[pos..pos + 8].try_into().unwrap());
        let len = u32::from_le_bytes(body[pos + 8..pos + 12].try_into().unwrap()) as usize;
        pos += 12;
        if body.len() - pos < len {
            return Err(StoreError::Format {
                msg: format!("chunk {name}: payload overruns chunk at offset {pos}"),
            });
        }
        let value = decode_payload(&body[pos..pos + len], desc.kind, &name, pos)?;
        pos += len;
        records.push((ts, value));
    }
    Ok(records)
}

/// Per-episode summary produced by [`validate_episode`].
#[derive(Debug, Clone)]
pub struct EpisodeCheck {
    pub path: PathBuf,
    pub meta: EpisodeMeta,
    pub records: u64,
    pub gaps: u64,
}

/// Full audit of one episode: header/CRC/structure checks plus the record
/// iteration itself. Returns checked totals.
pub fn validate_episode(dir: &Path) -> Result<EpisodeCheck, StoreError> {
    let (meta, records) = load_episode(dir)?;
    let mut count = 0u64;
    let mut gaps = 0u64;
    for record in records {
        count += 1;
        gaps += record.entries.iter().filter(|e| e.is_gap()).count() as u64;
    }
    Ok(EpisodeCheck {
        path: dir.to_path_buf(),
        meta,
        records: count,
        gaps,
    })
}

/// One dataset entry: an episode directory and the result of checking it.
#[derive(Debug, Clone)]
pub struct DatasetEntry {
    pub path: PathBuf,
    pub meta: EpisodeMeta,
    pub records: u64,
    pub checksum_ok: bool,
    /// Error category when the check failed.
    pub error: Option<String>,
}

/// Index of all episodes under a dataset root.
#[derive(Debug, Clone, Default)]
pub struct DatasetIndex {
    pub entries: Vec<DatasetEntry>,
}

impl DatasetIndex {
    /// Scan `root` for episode directories (anything holding a manifest)
    /// and validate each. The scan itself only fails on I/O trouble at the
    /// root; per-episode failures are carried in the entries.
    pub fn scan(root: &Path) -> Result<DatasetIndex, StoreError> {
        let mut dirs: Vec<PathBuf> = Vec::new();
        if root.join(MANIFEST_NAME).exists() {
            dirs.push(root.to_path_buf());
        } else {
            for entry in fs::read_dir(root)? {
                let path = entry?.path();
                if path.is_dir() && path.join(MANIFEST_NAME).exists() {
                    dirs.push(path);
                }
            }
        }
        dirs.sort();
        let mut entries = Vec::with_capacity(dirs.len());
        for dir in dirs {
            match validate_episode(&dir) {
                Ok(check) => entries.push(DatasetEntry {
                    path: dir,
                    meta: check.meta,
                    records: check.records,
                    checksum_ok: true,
                    error: None,
                }),
                Err(err) => {
                    // Keep whatever metadata is readable so the entry stays
                    // addressable in reports.
                    match read_manifest(&dir.join(MANIFEST_NAME)) {
                        Ok(meta) => entries.push(DatasetEntry {
                            path: dir,
                            records: meta.records,
                            meta,
                            checksum_ok: false,
                            error: Some(err.category().to_string()),
                        }),
                        Err(_) => entries.push(DatasetEntry {
                            path: dir,
                            meta: EpisodeMeta::new(
                                "unknown",
                                "unknown",
                                1.0,
                                false,
                                vec![StreamDescriptor::new("unknown", StreamKind::Pose, 1.0)],
                            ),
                            records: 0,
                            checksum_ok: false,
                            error: Some(err.category().to_string()),
                        }),
                    }
                }
            }
        }
        Ok(DatasetIndex { entries })
    }
}

/// Collection statistics for one task, in the shape of the usual
/// per-task table row: mean +/- std duration and successes/trials.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskStats {
    pub task: String,
    pub trials: u64,
    pub successes: u64,
    pub mean_duration_s: f64,
    pub std_duration_s: f64,
    pub success_rate: f64,
}

impl TaskStats {
    /// Table row rendering, e.g. `4.8 ± 0.9  29/30  0.967`.
    pub fn row(&self) -> String {
        format!(
            "{:.1} ± {:.1}  {}/{}  {:.3}",
            self.mean_duration_s,
            self.std_duration_s,
            self.successes,
            self.trials,
            self.success_rate
        )
    }
}

/// Sample mean and standard deviation (n-1 denominator; 0 for n < 2).
pub fn sample_stats(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Duration/success statistics over every checksum-clean episode of a
/// task.
pub fn task_stats(index: &DatasetIndex, task: &str) -> Result<TaskStats, StoreError> {
    let episodes: Vec<&DatasetEntry> = index
        .entries
        .iter()
        .filter(|e| e.checksum_ok && e.meta.task == task)
        .collect();
    if episodes.is_empty() {
        return Err(StoreError::NoSuchTask {
            task: task.to_string(),
        });
    }
    let durations: Vec<f64> = episodes.iter().map(|e| e.meta.duration_s).collect();
    let (mean, std) = sample_stats(&durations);
    let successes = episodes.iter().filter(|e| e.meta.success).count() as u64;
    let trials = episodes.len() as u64;
    Ok(TaskStats {
        task: task.to_string(),
        trials,
        successes,
        mean_duration_s: mean,
        std_duration_s: std,
        success_rate: successes as f64 / trials as f64,
    })
}
