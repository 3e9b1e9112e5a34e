//! Glove-to-hand retargeting for configurable dexterous hands.
//!
//! A [`HandModel`] is loaded from a plain-text config (one joint per line),
//! a [`RetargetMap`] is fitted from an open-hand and a closed-hand glove
//! frame so the glove's range spans each joint's limits, and [`retarget`]
//! applies the per-joint affine map and clamps. The same [`HandCommand`]
//! type flows through recording and replay, so deployment sees exactly the
//! joint-space data that was collected.
//!
//! Hand config format (shared `key: value` dialect):
//!
//! ```text
//! hand: dex6
//! joint: thumb_rot   0.0  1.3
//! joint: thumb_bend  0.0  0.6
//! ...
//! ```

use crate::config::{ConfigError, Document};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RetargetError {
    #[error("hand config: {0}")]
    ParseError(#[from] ConfigError),
    #[error("hand config: no joint lines")]
    EmptyModel,
    #[error("joint {joint}: lower limit {lower} must be < upper {upper}")]
    LimitOrderError { joint: String, lower: f64, upper: f64 },
    #[error("duplicate joint name {joint}")]
    DuplicateJoint { joint: String },
    #[error("glove angle {index} is not finite")]
    NonFiniteAngle { index: usize },
    #[error("open and closed frames are identical on source channel {channel}")]
    DegenerateRange { channel: usize },
    #[error("source index {index} out of range for glove with {len} channels")]
    SourceIndexOutOfRange { index: usize, len: usize },
    #[error("assignment has {got} entries but the hand has {dof} joints")]
    AssignmentLength { got: usize, dof: usize },
    #[error("calibration frames differ in length: {open} vs {closed}")]
    FrameLengthMismatch { open: usize, closed: usize },
    #[error("map targets {map} joints but the hand has {dof}")]
    MapModelMismatch { map: usize, dof: usize },
}

impl RetargetError {
    pub fn category(&self) -> &'static str {
        match self {
            RetargetError::ParseError(e) => e.category(),
            RetargetError::EmptyModel => "ParseError",
            RetargetError::LimitOrderError { .. } => "LimitOrderError",
            RetargetError::DuplicateJoint { .. } => "DuplicateJoint",
            RetargetError::NonFiniteAngle { .. } => "NonFiniteAngle",
            RetargetError::DegenerateRange { .. } => "DegenerateRange",
            RetargetError::SourceIndexOutOfRange { .. } => "SourceIndexOutOfRange",
            RetargetError::AssignmentLength { .. } => "AssignmentLength",
            RetargetError::FrameLengthMismatch { .. } => "FrameLengthMismatch",
            RetargetError::MapModelMismatch { .. } => "MapModelMismatch",
        }
    }
}

/// One actuated joint: name plus limits in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

/// A target hand: ordered joint roster with limits.
#[derive(Debug, Clone, PartialEq)]
pub struct HandModel {
    pub name: String,
    pub joints: Vec<Joint>,
}

impl HandModel {
    pub fn new(name: impl Into<String>, joints: Vec<Joint>) -> Result<Self, RetargetError> {
        let model = HandModel {
            name: name.into(),
            joints,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<(), RetargetError> {
        if self.joints.is_empty() {
            return Err(RetargetError::EmptyModel);
        }
        for (i, j) in self.joints.iter().enumerate() {
            if !(j.lower < j.upper) {
                return Err(RetargetError::LimitOrderError {
                    joint: j.name.clone(),
                    lower: j.lower,
                    upper: j.upper,
                });
            }
            if self.joints[..i].iter().any(|prev| prev.name == j.name) {
                return Err(RetargetError::DuplicateJoint {
                    joint: j.name.clone(),
                });
            }
        }
        Ok(())
    }

    /// Degrees of freedom (joint count).
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn clamp(&self, joint: usize, value: f64) -> f64 {
        let j = &self.joints[joint];
        value.clamp(j.lower, j.upper)
    }

    /// True when every angle sits inside its joint's limits.
    pub fn admits(&self, angles: &[f64]) -> bool {
        angles.len() == self.dof()
            && angles
                .iter()
                .zip(&self.joints)
                .all(|(a, j)| a.is_finite() && *a >= j.lower && *a <= j.upper)
    }
}

/// Parse a hand model from config text. `hand:` names the model (default
/// "unnamed"); each `joint:` line is `name lower upper`.
pub fn load_hand_model(text: &str) -> Result<HandModel, RetargetError> {
    let doc = Document::parse(text)?;
    let name = doc.get_str("hand").unwrap_or("unnamed").to_string();
    let mut joints = Vec::new();
    for entry in doc.get_all("joint") {
        let fields = entry.fields();
        if fields.len() != 3 {
            return Err(ConfigError::InvalidValue {
                line: entry.line,
                key: entry.key.clone(),
                msg: format!("expected `name lower upper`, got {:?}", entry.value),
            }
            .into());
        }
        let parse = |s: &str| -> Result<f64, RetargetError> {
            let v: f64 = s.parse().map_err(|_| {
                RetargetError::ParseError(ConfigError::InvalidValue {
                    line: entry.line,
                    key: entry.key.clone(),
                    msg: format!("not a number: {s:?}"),
                })
            })?;
            if !v.is_finite() {
                return Err(ConfigError::InvalidValue {
                    line: entry.line,
                    key: entry.key.clone(),
                    msg: "limit must be finite".into(),
                }
                .into());
            }
            Ok(v)
        };
        joints.push(Joint {
            name: fields[0].to_string(),
            lower: parse(fields[1])?,
            upper: parse(fields[2])?,
        });
    }
    HandModel::new(name, joints)
}

/// Raw glove reading: one angle per sensor channel, radians.
#[derive(Debug, Clone, PartialEq)]
pub struct GloveFrame {
    angles: Vec<f64>,
}

impl GloveFrame {
    pub fn new(angles: Vec<f64>) -> Result<Self, RetargetError> {
        if let Some(index) = angles.iter().position(|a| !a.is_finite()) {
            return Err(RetargetError::NonFiniteAngle { index });
        }
        Ok(GloveFrame { angles })
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }
}

/// Per-target-joint affine map: `target_j = clamp(gain_j * source + offset_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RetargetMap {
    pub entries: Vec<MapEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapEntry {
    /// Glove channel feeding this joint.
    pub source: usize,
    pub gain: f64,
    pub offset: f64,
}

/// Hand-space command: one angle per model joint, always inside limits.
#[derive(Debug, Clone, PartialEq)]
pub struct HandCommand {
    pub angles: Vec<f64>,
}

impl HandCommand {
    /// Wire form: one little-endian f64 per joint, model order.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.angles.len() * 8);
        for a in &self.angles {
            out.extend_from_slice(&a.to_le_bytes());
        }
        out
    }
}

/// Fit the affine coefficients from a two-pose calibration: the open frame
/// maps every joint to its lower limit, the closed frame to its upper
/// limit. Swapped extremes just produce a negative gain.
pub fn calibrate_map(
    open_frame: &GloveFrame,
    closed_frame: &GloveFrame,
    assignment: &[usize],
    model: &HandModel,
) -> Result<RetargetMap, RetargetError> {
    if open_frame.len() != closed_frame.len() {
        return Err(RetargetError::FrameLengthMismatch {
            open: open_frame.len(),
            closed: closed_frame.len(),
        });
    }
    if assignment.len() != model.dof() {
        return Err(RetargetError::AssignmentLength {
            got: assignment.len(),
            dof: model.dof(),
        });
    }
    let mut entries = Vec::with_capacity(model.dof());
    for (joint, &source) in model.joints.iter().zip(assignment) {
        if source >= open_frame.len() {
            return Err(RetargetError::SourceIndexOutOfRange {
                index: source,
                len: open_frame.len(),
            });
        }
        let open = open_frame.angles[source];
        let closed = closed_frame.angles[source];
        let span = closed - open;
        if span == 0.0 {
            return Err(RetargetError::DegenerateRange { channel: source });
        }
        let gain = (joint.upper - joint.lower) / span;
        if !gain.is_finite() || gain == 0.0 {
            return Err(RetargetError::DegenerateRange { channel: source });
        }
        entries.push(MapEntry {
            source,
            gain,
            offset: joint.lower - gain * open,
        });
    }
    Ok(RetargetMap { entries })
}

/// Map a glove frame onto the hand: per-joint affine, then clamp to
/// limits. The output always satisfies the model's limits.
pub fn retarget(
    frame: &GloveFrame,
    map: &RetargetMap,
    model: &HandModel,
) -> Result<HandCommand, RetargetError> {
    if map.entries.len() != model.dof() {
        return Err(RetargetError::MapModelMismatch {
            map: map.entries.len(),
            dof: model.dof(),
        });
    }
    let mut angles = Vec::with_capacity(model.dof());
    for (j, entry) in map.entries.iter().enumerate() {
        if entry.source >= frame.len() {
            return Err(RetargetError::SourceIndexOutOfRange {
                index: entry.source,
                len: frame.len(),
            });
        }
        let raw = entry.gain * frame.angles[entry.source] + entry.offset;
        angles.push(model.clamp(j, raw));
    }
    Ok(HandCommand { angles })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use std::f64::consts::FRAC_PI_2;

    const SIX_JOINT: &str = "\
hand: six
joint: thumb_rot  0.0 1.3
joint: thumb_bend 0.0 0.6
joint: index      0.0 1.7
joint: middle     0.0 1.7
joint: ring       0.0 1.7
joint: pinky      0.0 1.7
";

    #[test]
    fn loads_six_joint_model() {
        let model = load_hand_model(SIX_JOINT).unwrap();
        assert_eq!(model.name, "six");
        assert_eq!(model.dof(), 6);
        assert_eq!(model.joints[2].name, "index");
    }

    #[test]
    fn loads_one_joint_gripper() {
        let model = load_hand_model("hand: gripper\njoint: grip 0.0 0.8\n").unwrap();
        assert_eq!(model.dof(), 1);
    }

    #[test]
    fn rejects_equal_limits() {
        let err = load_hand_model("joint: j 0.5 0.5\n").unwrap_err();
        assert!(matches!(err, RetargetError::LimitOrderError { .. }));
    }

    #[test]
    fn rejects_duplicate_joint() {
        let err = load_hand_model("joint: j 0 1\njoint: j 0 2\n").unwrap_err();
        assert!(matches!(err, RetargetError::DuplicateJoint { .. }));
    }

    #[test]
    fn rejects_empty_and_malformed() {
        assert!(matches!(
            load_hand_model("hand: x\n"),
            Err(RetargetError::EmptyModel)
        ));
        assert!(load_hand_model("joint: j 0\n").is_err());
        assert!(load_hand_model("joint: j zero one\n").is_err());
    }

    fn uniform_model(n: usize, lower: f64, upper: f64) -> HandModel {
        HandModel::new(
            "test",
            (0..n)
                .map(|i| Joint {
                    name: format!("j{i}"),
                    lower,
                    upper,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn two_point_fit_zero_to_one() {
        // open all 0, closed all 1, limits [0, pi/2] -> gain pi/2, offset 0.
        let model = uniform_model(4, 0.0, FRAC_PI_2);
        let open = GloveFrame::new(vec![0.0; 4]).unwrap();
        let closed = GloveFrame::new(vec![1.0; 4]).unwrap();
        let map = calibrate_map(&open, &closed, &[0, 1, 2, 3], &model).unwrap();
        for e in &map.entries {
            assert!((e.gain - FRAC_PI_2).abs() <= 1e-12);
            assert!(e.offset.abs() <= 1e-12);
        }
    }

    #[test]
    fn degenerate_range_on_equal_extremes() {
        let model = uniform_model(2, 0.0, 1.0);
        let open = GloveFrame::new(vec![0.3, 0.0]).unwrap();
        let closed = GloveFrame::new(vec![0.3, 1.0]).unwrap();
        let err = calibrate_map(&open, &closed, &[0, 1], &model).unwrap_err();
        assert!(matches!(err, RetargetError::DegenerateRange { channel: 0 }));
    }

    #[test]
    fn swapped_extremes_give_negative_gain() {
        let model = uniform_model(1, -0.5, 0.5);
        let open = GloveFrame::new(vec![1.0]).unwrap();
        let closed = GloveFrame::new(vec![-1.0]).unwrap();
        let map = calibrate_map(&open, &closed, &[0], &model).unwrap();
        assert!(map.entries[0].gain < 0.0);
        // Extremes still land on the limits.
        let at_open = retarget(&open, &map, &model).unwrap();
        let at_closed = retarget(&closed, &map, &model).unwrap();
        assert!((at_open.angles[0] - (-0.5)).abs() <= 1e-12);
        assert!((at_closed.angles[0] - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn open_frame_maps_to_lower_limits() {
        let model = load_hand_model(SIX_JOINT).unwrap();
        let open = GloveFrame::new(vec![-0.2; 6]).unwrap();
        let closed = GloveFrame::new(vec![0.9; 6]).unwrap();
        let map = calibrate_map(&open, &closed, &[0, 1, 2, 3, 4, 5], &model).unwrap();
        let cmd = retarget(&open, &map, &model).unwrap();
        for (a, j) in cmd.angles.iter().zip(&model.joints) {
            assert!((a - j.lower).abs() <= 1e-12);
        }
    }

    #[test]
    fn midpoint_frame_maps_to_limit_midpoints() {
        let model = load_hand_model(SIX_JOINT).unwrap();
        let open = GloveFrame::new(vec![0.0; 6]).unwrap();
        let closed = GloveFrame::new(vec![1.0; 6]).unwrap();
        let map = calibrate_map(&open, &closed, &[0, 1, 2, 3, 4, 5], &model).unwrap();
        let mid = GloveFrame::new(vec![0.5; 6]).unwrap();
        let cmd = retarget(&mid, &map, &model).unwrap();
        for (a, j) in cmd.angles.iter().zip(&model.joints) {
            assert!((a - 0.5 * (j.lower + j.upper)).abs() <= 1e-12);
        }
    }

    #[test]
    fn overshoot_clamps_to_upper_limits() {
        let model = load_hand_model(SIX_JOINT).unwrap();
        let open = GloveFrame::new(vec![0.0; 6]).unwrap();
        let closed = GloveFrame::new(vec![1.0; 6]).unwrap();
        let map = calibrate_map(&open, &closed, &[0, 1, 2, 3, 4, 5], &model).unwrap();
        let beyond = GloveFrame::new(vec![1.5; 6]).unwrap();
        let cmd = retarget(&beyond, &map, &model).unwrap();
        for (a, j) in cmd.angles.iter().zip(&model.joints) {
            assert_eq!(*a, j.upper);
        }
        // Clamping is idempotent: feeding an extreme twice changes nothing.
        let again = retarget(&beyond, &map, &model).unwrap();
        assert_eq!(cmd, again);
    }

    #[test]
    fn source_index_out_of_range() {
        let model = uniform_model(1, 0.0, 1.0);
        let open = GloveFrame::new(vec![0.0, 0.0]).unwrap();
        let closed = GloveFrame::new(vec![1.0, 1.0]).unwrap();
        let map = calibrate_map(&open, &closed, &[1], &model).unwrap();
        let short = GloveFrame::new(vec![0.5]).unwrap();
        let err = retarget(&short, &map, &model).unwrap_err();
        assert!(matches!(err, RetargetError::SourceIndexOutOfRange { .. }));
    }

    #[test]
    fn hand_command_wire_form_is_le_f64_in_joint_order() {
        let cmd = HandCommand {
            angles: vec![0.25, -1.5],
        };
        let bytes = cmd.to_le_bytes();
        assert_eq!(bytes.len(), 16);
        assert_eq!(f64::from_le_bytes(bytes[0..8].try_into().unwrap()), 0.25);
        assert_eq!(f64::from_le_bytes(bytes[8..16].try_into().unwrap()), -1.5);
    }

    #[test]
    fn glove_frame_rejects_non_finite() {
        assert!(matches!(
            GloveFrame::new(vec![0.0, f64::NAN]),
            Err(RetargetError::NonFiniteAngle { index: 1 })
        ));
    }

    #[test]
    fn random_frames_always_yield_valid_commands() {
        let model = load_hand_model(SIX_JOINT).unwrap();
        let open = GloveFrame::new(vec![-1.0; 6]).unwrap();
        let closed = GloveFrame::new(vec![1.0; 6]).unwrap();
        let map = calibrate_map(&open, &closed, &[0, 1, 2, 3, 4, 5], &model).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        for _ in 0..1000 {
            let frame = GloveFrame::new(
                (0..6).map(|_| rng.random_range(-10.0..10.0)).collect(),
            )
            .unwrap();
            let cmd = retarget(&frame, &map, &model).unwrap();
            assert!(model.admits(&cmd.angles));
        }
    }

    #[test]
    fn positive_gain_is_monotone() {
        let model = load_hand_model(SIX_JOINT).unwrap();
        let open = GloveFrame::new(vec![0.0; 6]).unwrap();
        let closed = GloveFrame::new(vec![1.0; 6]).unwrap();
        let map = calibrate_map(&open, &closed, &[0, 1, 2, 3, 4, 5], &model).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(22);
        for _ in 0..500 {
            let base: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            let channel = rng.random_range(0..6);
            let mut bumped = base.clone();
            bumped[channel] += rng.random_range(0.0..1.0);
            let lo = retarget(&GloveFrame::new(base).unwrap(), &map, &model).unwrap();
            let hi = retarget(&GloveFrame::new(bumped).unwrap(), &map, &model).unwrap();
            assert!(hi.angles[channel] >= lo.angles[channel]);
        }
    }
}
