//! Rigid-body pose algebra: composition, inversion, shortest-arc
//! interpolation, and the SLAM-to-robot calibration solve.
//!
//! A [`Pose`] is a translation in meters plus a unit quaternion, the frame
//! alignment `T_robot = T_calib * T_slam` is [`apply_calibration`], and
//! [`estimate_calibration`] recovers `T_calib` from measured pose pairs by
//! averaging the per-pair candidates `robot * slam^-1` (largest-eigenvector
//! quaternion averaging for the rotation, candidate mean for the
//! translation).

use nalgebra::{Matrix4, Quaternion, UnitQuaternion, Vector3, Vector4};
use thiserror::Error;

/// Number of bytes in the wire form of a pose: 7 little-endian f64.
pub const POSE_WIRE_BYTES: usize = 56;

/// Default minimum pair count for [`estimate_calibration`]; one pair is
/// mathematically enough but three make the degeneracy check meaningful.
pub const DEFAULT_MIN_PAIRS: usize = 3;

/// Default cap on how far any per-pair rotation candidate may sit from the
/// averaged rotation before the input is declared degenerate (mispaired
/// data scatters candidates by radians; measurement noise stays well under
/// this).
pub const DEFAULT_MAX_ROTATION_SPREAD: f64 = 0.2;

#[derive(Debug, Error)]
pub enum Se3Error {
    #[error("interpolation fraction {u} outside [0, 1]")]
    OutOfRange { u: f64 },
    #[error("need at least {min} pose pairs, got {got}")]
    TooFewPairs { got: usize, min: usize },
    #[error(
        "rotation candidates disagree by {spread:.6} rad (max {max:.6}); \
         pairs are likely mismatched"
    )]
    DegenerateInput { spread: f64, max: f64 },
    #[error("pose wire form must be {POSE_WIRE_BYTES} bytes, got {got}")]
    WireSize { got: usize },
}

impl Se3Error {
    pub fn category(&self) -> &'static str {
        match self {
            Se3Error::OutOfRange { .. } => "OutOfRange",
            Se3Error::TooFewPairs { .. } => "TooFewPairs",
            Se3Error::DegenerateInput { .. } => "DegenerateInput",
            Se3Error::WireSize { .. } => "WireSize",
        }
    }
}

/// Rigid transform in SE(3): rotation as a unit quaternion, translation in
/// meters.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub translation: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            translation: Vector3::zeros(),
            rotation: UnitQuaternion::identity(),
        }
    }

    pub fn new(translation: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Self {
        Pose {
            translation,
            rotation,
        }
    }

    /// Build from raw parts, normalizing the quaternion. Component order is
    /// (w, x, y, z).
    pub fn from_parts(translation: [f64; 3], quat_wxyz: [f64; 4]) -> Self {
        let [w, x, y, z] = quat_wxyz;
        Pose {
            translation: Vector3::new(translation[0], translation[1], translation[2]),
            rotation: UnitQuaternion::new_normalize(Quaternion::new(w, x, y, z)),
        }
    }

    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        Pose {
            translation,
            rotation: UnitQuaternion::from_scaled_axis(axis.normalize() * angle),
        }
    }

    /// Map a point from this pose's frame into the parent frame.
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Rotation angle (radians, in [0, pi]) separating two poses.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        self.rotation.angle_to(&other.rotation)
    }

    /// Translation distance (meters) separating two poses.
    pub fn translation_distance_to(&self, other: &Pose) -> f64 {
        (self.translation - other.translation).norm()
    }

    /// Wire form: tx, ty, tz, qw, qx, qy, qz as little-endian f64.
    pub fn to_le_bytes(&self) -> [u8; POSE_WIRE_BYTES] {
        let q = self.rotation.quaternion();
        let vals = [
            self.translation.x,
            self.translation.y,
            self.translation.z,
            q.w,
            q.i,
            q.j,
            q.k,
        ];
        let mut out = [0u8; POSE_WIRE_BYTES];
        for (i, v) in vals.iter().enumerate() {
            out[i * 8..i * 8 + 8].copy_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Inverse of [`Pose::to_le_bytes`]. The quaternion is taken verbatim
    /// (no renormalization) so byte round-trips are exact.
    pub fn from_le_bytes(bytes: &[u8]) -> Result<Pose, Se3Error> {
        if bytes.len() != POSE_WIRE_BYTES {
            return Err(Se3Error::WireSize { got: bytes.len() });
        }
        let mut vals = [0.0f64; 7];
        for (i, v) in vals.iter_mut().enumerate() {
            *v = f64::from_le_bytes(bytes[i * 8..i * 8 + 8].try_into().unwrap());
        }
        Ok(Pose {
            translation: Vector3::new(vals[0], vals[1], vals[2]),
            rotation: UnitQuaternion::new_unchecked(Quaternion::new(
                vals[3], vals[4], vals[5], vals[6],
            )),
        })
    }
}

/// One calibration observation: the same physical end-effector pose seen in
/// the SLAM frame and in the robot frame.
#[derive(Debug, Clone)]
pub struct PosePair {
    pub slam: Pose,
    pub robot: Pose,
}

/// Group product `a ∘ b`. The quaternion is renormalized so repeated
/// composition cannot drift off the unit sphere.
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    let rotation =
        UnitQuaternion::new_normalize(a.rotation.quaternion() * b.rotation.quaternion());
    Pose {
        translation: a.rotation * b.translation + a.translation,
        rotation,
    }
}

/// Group inverse: `compose(p, invert(p))` is the identity.
pub fn invert(p: &Pose) -> Pose {
    let rot_inv = p.rotation.inverse();
    Pose {
        translation: -(rot_inv * p.translation),
        rotation: rot_inv,
    }
}

/// Map a SLAM-frame pose into the robot workspace frame:
/// `T_robot = T_calib ∘ T_slam`.
pub fn apply_calibration(t_calib: &Pose, t_slam: &Pose) -> Pose {
    compose(t_calib, t_slam)
}

/// Knobs for [`estimate_calibration_with`].
#[derive(Debug, Clone)]
pub struct CalibrationOptions {
    pub min_pairs: usize,
    /// Max angular deviation (rad) of any candidate rotation from the
    /// average before the input counts as degenerate.
    pub max_rotation_spread: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            min_pairs: DEFAULT_MIN_PAIRS,
            max_rotation_spread: DEFAULT_MAX_ROTATION_SPREAD,
        }
    }
}

/// Residual statistics of a calibration against the pairs that produced it.
#[derive(Debug, Clone, Copy)]
pub struct CalibrationResidual {
    pub mean_translation_m: f64,
    pub max_translation_m: f64,
    pub mean_rotation_rad: f64,
    pub max_rotation_rad: f64,
}

/// Estimate `T_calib` from pose pairs with the given minimum pair count and
/// the default degeneracy threshold.
pub fn estimate_calibration(pairs: &[PosePair], min_pairs: usize) -> Result<Pose, Se3Error> {
    estimate_calibration_with(
        pairs,
        &CalibrationOptions {
            min_pairs,
            ..CalibrationOptions::default()
        },
    )
}

/// Closed-form calibration estimate.
///
/// Each pair yields a candidate `C_i = robot_i ∘ slam_i^-1`. The rotation
/// is the largest eigenvector of the summed outer products of the candidate
/// quaternions (sign-invariant, so the double cover needs no handling); the
/// translation is the mean of `robot_i.t - R_avg * slam_i.t`.
pub fn estimate_calibration_with(
    pairs: &[PosePair],
    options: &CalibrationOptions,
) -> Result<Pose, Se3Error> {
    let min = options.min_pairs.max(1);
    if pairs.len() < min {
        return Err(Se3Error::TooFewPairs {
            got: pairs.len(),
            min,
        });
    }

    let candidates: Vec<Pose> = pairs
        .iter()
        .map(|p| compose(&p.robot, &invert(&p.slam)))
        .collect();

    let mut outer = Matrix4::<f64>::zeros();
    for c in &candidates {
        let q = c.rotation.quaternion();
        let v = Vector4::new(q.w, q.i, q.j, q.k);
        outer += v * v.transpose();
    }

    let eigen = nalgebra::SymmetricEigen::new(outer);
    let mut best = 0;
    for i in 1..4 {
        if eigen.eigenvalues[i] > eigen.eigenvalues[best] {
            best = i;
        }
    }
    let v = eigen.eigenvectors.column(best);
    let rotation =
        UnitQuaternion::new_normalize(Quaternion::new(v[0], v[1], v[2], v[3]));

    let avg = Pose::new(Vector3::zeros(), rotation);
    let mut spread = 0.0f64;
    for c in &candidates {
        spread = spread.max(avg.rotation_angle_to(c));
    }
    if spread > options.max_rotation_spread {
        return Err(Se3Error::DegenerateInput {
            spread,
            max: options.max_rotation_spread,
        });
    }

    let mut translation = Vector3::zeros();
    for pair in pairs {
        translation += pair.robot.translation - rotation * pair.slam.translation;
    }
    translation /= pairs.len() as f64;

    Ok(Pose::new(translation, rotation))
}

/// Residuals of `robot_i` against `t_calib ∘ slam_i`.
pub fn calibration_residual(t_calib: &Pose, pairs: &[PosePair]) -> CalibrationResidual {
    let mut res = CalibrationResidual {
        mean_translation_m: 0.0,
        max_translation_m: 0.0,
        mean_rotation_rad: 0.0,
        max_rotation_rad: 0.0,
    };
    if pairs.is_empty() {
        return res;
    }
    for pair in pairs {
        let predicted = apply_calibration(t_calib, &pair.slam);
        let dt = predicted.translation_distance_to(&pair.robot);
        let dr = predicted.rotation_angle_to(&pair.robot);
        res.mean_translation_m += dt;
        res.mean_rotation_rad += dr;
        res.max_translation_m = res.max_translation_m.max(dt);
        res.max_rotation_rad = res.max_rotation_rad.max(dr);
    }
    res.mean_translation_m /= pairs.len() as f64;
    res.mean_rotation_rad /= pairs.len() as f64;
    res
}

/// Interpolate between two poses: linear translation, shortest-arc
/// spherical rotation. `u = 0` returns `a` and `u = 1` returns `b`
/// bit-exactly.
pub fn interpolate(a: &Pose, b: &Pose, u: f64) -> Result<Pose, Se3Error> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Se3Error::OutOfRange { u });
    }
    if u == 0.0 {
        return Ok(a.clone());
    }
    if u == 1.0 {
        return Ok(b.clone());
    }
    Ok(Pose {
        translation: a.translation + (b.translation - a.translation) * u,
        rotation: slerp_shortest(&a.rotation, &b.rotation, u),
    })
}

/// Shortest-arc slerp. Antipodal representations of the same rotation give
/// identical results; nearly-parallel endpoints fall back to a normalized
/// lerp for stability.
fn slerp_shortest(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>, u: f64) -> UnitQuaternion<f64> {
    let qa = a.quaternion();
    let mut qb = *b.quaternion();
    let mut dot = qa.dot(&qb);
    if dot < 0.0 {
        qb = -qb;
        dot = -dot;
    }
    let dot = dot.min(1.0);
    if dot > 1.0 - 1e-12 {
        return UnitQuaternion::new_normalize(qa * (1.0 - u) + qb * u);
    }
    let theta = dot.acos();
    let sin_theta = theta.sin();
    let wa = ((1.0 - u) * theta).sin() / sin_theta;
    let wb = (u * theta).sin() / sin_theta;
    UnitQuaternion::new_normalize(qa * wa + qb * wb)
}
