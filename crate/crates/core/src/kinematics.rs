//! Forward kinematics, Jacobians and closed-loop inverse kinematics (CLIK)
//! for a 7-joint revolute arm described by standard Denavit–Hartenberg rows.
//!
//! Poses are position plus ZYX Euler angles `[roll, pitch, yaw]`, i.e.
//! `R = Rz(yaw) · Ry(pitch) · Rx(roll)`.

use nalgebra::{Matrix3, Matrix4, Matrix6, SMatrix, SVector, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

use crate::{wrap_angle, N_JOINTS};

pub type JointVector = SVector<f64, N_JOINTS>;
pub type Jacobian = SMatrix<f64, 6, N_JOINTS>;
pub type JacobianPinv = SMatrix<f64, N_JOINTS, 6>;

/// `|cos(pitch)|` below this makes the Euler-rate map singular.
pub const EULER_SINGULARITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("ZYX Euler singularity: |cos(pitch)| = {cos_pitch:e}")]
    EulerSingularity { cos_pitch: f64 },
    #[error("J Jᵀ + λ² I is singular")]
    SolveFailure,
    #[error("invalid kinematics configuration: {0}")]
    InvalidConfig(String),
}

/// One standard DH row; all joints are revolute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DhRow {
    /// Link length, m.
    pub a: f64,
    /// Link twist, rad.
    pub alpha: f64,
    /// Link offset, m.
    pub d: f64,
    /// Joint angle offset, rad.
    pub theta_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DhTable {
    pub rows: [DhRow; N_JOINTS],
}

impl Default for DhTable {
    /// Lightweight-arm-like geometry with a vertical first joint axis.
    fn default() -> Self {
        let d = [0.36, 0.0, 0.42, 0.0, 0.40, 0.0, 0.126];
        let alpha = [
            -FRAC_PI_2, FRAC_PI_2, FRAC_PI_2, -FRAC_PI_2, -FRAC_PI_2, FRAC_PI_2, 0.0,
        ];
        let mut rows = [DhRow {
            a: 0.0,
            alpha: 0.0,
            d: 0.0,
            theta_offset: 0.0,
        }; N_JOINTS];
        for i in 0..N_JOINTS {
            rows[i].d = d[i];
            rows[i].alpha = alpha[i];
        }
        Self { rows }
    }
}

impl DhTable {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        let finite = self.rows.iter().all(|r| {
            r.a.is_finite() && r.alpha.is_finite() && r.d.is_finite() && r.theta_offset.is_finite()
        });
        if finite {
            Ok(())
        } else {
            Err(KinematicsError::InvalidConfig("non-finite DH entry".into()))
        }
    }

    fn link_transform(row: &DhRow, q: f64) -> Matrix4<f64> {
        let (st, ct) = (q + row.theta_offset).sin_cos();
        let (sa, ca) = row.alpha.sin_cos();
        Matrix4::new(
            ct,
            -st * ca,
            st * sa,
            row.a * ct,
            st,
            ct * ca,
            -ct * sa,
            row.a * st,
            0.0,
            sa,
            ca,
            row.d,
            0.0,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Base-to-frame transforms `T_0 … T_7` (`T_0` is the identity).
    pub fn frames(&self, q: &JointVector) -> [Matrix4<f64>; N_JOINTS + 1] {
        let mut frames = [Matrix4::identity(); N_JOINTS + 1];
        for i in 0..N_JOINTS {
            frames[i + 1] = frames[i] * Self::link_transform(&self.rows[i], q[i]);
        }
        frames
    }

    /// Base-to-tool transform.
    pub fn tool_transform(&self, q: &JointVector) -> Matrix4<f64> {
        self.frames(q)[N_JOINTS]
    }
}

/// Cartesian pose with ZYX Euler angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseEuler {
    /// m
    pub position: [f64; 3],
    /// `[roll, pitch, yaw]`, rad
    pub euler: [f64; 3],
}

impl PoseEuler {
    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            position: [v[0], v[1], v[2]],
            euler: [v[3], v[4], v[5]],
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.position[0],
            self.position[1],
            self.position[2],
            self.euler[0],
            self.euler[1],
            self.euler[2],
        )
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_from_euler(&Vector3::from(self.euler))
    }
}

/// `Rz(yaw) · Ry(pitch) · Rx(roll)`.
pub fn rotation_from_euler(euler: &Vector3<f64>) -> Matrix3<f64> {
    let (sr, cr) = euler[0].sin_cos();
    let (sp, cp) = euler[1].sin_cos();
    let (sy, cy) = euler[2].sin_cos();
    Matrix3::new(
        cy * cp,
        cy * sp * sr - sy * cr,
        cy * sp * cr + sy * sr,
        sy * cp,
        sy * sp * sr + cy * cr,
        sy * sp * cr - cy * sr,
        -sp,
        cp * sr,
        cp * cr,
    )
}

/// ZYX Euler angles of a rotation matrix, pitch in `[-π/2, π/2]`.
pub fn euler_from_rotation(r: &Matrix3<f64>) -> Result<Vector3<f64>, KinematicsError> {
    let cos_pitch = r[(0, 0)].hypot(r[(1, 0)]);
    if cos_pitch < EULER_SINGULARITY_TOL {
        return Err(KinematicsError::EulerSingularity { cos_pitch });
    }
    Ok(Vector3::new(
        r[(2, 1)].atan2(r[(2, 2)]),
        (-r[(2, 0)]).atan2(cos_pitch),
        r[(1, 0)].atan2(r[(0, 0)]),
    ))
}

/// Maps ZYX Euler rates `[roll˙, pitch˙, yaw˙]` to the world-frame angular velocity.
pub fn euler_rate_matrix(euler: &Vector3<f64>) -> Matrix3<f64> {
    let (sp, cp) = euler[1].sin_cos();
    let (sy, cy) = euler[2].sin_cos();
    Matrix3::new(cy * cp, -sy, 0.0, sy * cp, cy, 0.0, -sp, 0.0, 1.0)
}

pub fn forward_kinematics(dh: &DhTable, q: &JointVector) -> Result<PoseEuler, KinematicsError> {
    let t = dh.tool_transform(q);
    let r: Matrix3<f64> = t.fixed_view::<3, 3>(0, 0).into_owned();
    let e = euler_from_rotation(&r)?;
    Ok(PoseEuler {
        position: [t[(0, 3)], t[(1, 3)], t[(2, 3)]],
        euler: [e[0], e[1], e[2]],
    })
}

/// Geometric Jacobian: linear velocity rows over angular velocity rows.
pub fn geometric_jacobian(dh: &DhTable, q: &JointVector) -> Jacobian {
    let frames = dh.frames(q);
    let p_e: Vector3<f64> = frames[N_JOINTS].fixed_view::<3, 1>(0, 3).into_owned();
    let mut j = Jacobian::zeros();
    for i in 0..N_JOINTS {
        let z: Vector3<f64> = frames[i].fixed_view::<3, 1>(0, 2).into_owned();
        let p: Vector3<f64> = frames[i].fixed_view::<3, 1>(0, 3).into_owned();
        j.fixed_view_mut::<3, 1>(0, i)
            .copy_from(&z.cross(&(p_e - p)));
        j.fixed_view_mut::<3, 1>(3, i).copy_from(&z);
    }
    j
}

fn analytic_from_geometric(
    jg: &Jacobian,
    euler: &Vector3<f64>,
) -> Result<Jacobian, KinematicsError> {
    let cos_pitch = euler[1].cos().abs();
    if cos_pitch < EULER_SINGULARITY_TOL {
        return Err(KinematicsError::EulerSingularity { cos_pitch });
    }
    let t_inv = euler_rate_matrix(euler)
        .try_inverse()
        .ok_or(KinematicsError::EulerSingularity { cos_pitch })?;
    let mut ja = *jg;
    let ang = t_inv * jg.fixed_view::<3, N_JOINTS>(3, 0);
    ja.fixed_view_mut::<3, N_JOINTS>(3, 0).copy_from(&ang);
    Ok(ja)
}

/// Analytic Jacobian mapping joint rates to `(position rate, Euler rate)`.
pub fn analytic_jacobian(dh: &DhTable, q: &JointVector) -> Result<Jacobian, KinematicsError> {
    let pose = forward_kinematics(dh, q)?;
    analytic_from_geometric(&geometric_jacobian(dh, q), &Vector3::from(pose.euler))
}

/// `Jᵀ (J Jᵀ + λ² I)⁻¹`.
pub fn damped_pseudoinverse(j: &Jacobian, lambda: f64) -> Result<JacobianPinv, KinematicsError> {
    if !(lambda >= 0.0) {
        return Err(KinematicsError::InvalidConfig(format!(
            "damping {lambda} must be non-negative"
        )));
    }
    let jjt: Matrix6<f64> = j * j.transpose() + Matrix6::identity() * (lambda * lambda);
    let chol = jjt.cholesky().ok_or(KinematicsError::SolveFailure)?;
    // (J Jᵀ + λ²I)⁻¹ J = (Jᵀ (J Jᵀ + λ²I)⁻¹)ᵀ
    Ok(chol.solve(j).transpose())
}

/// Pose difference `desired − actual` with angle components wrapped to `(-π, π]`.
pub fn pose_error(desired: &Vector6<f64>, actual: &Vector6<f64>) -> Vector6<f64> {
    let mut e = desired - actual;
    for k in 3..6 {
        e[k] = wrap_angle(e[k]);
    }
    e
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IkConfig {
    /// Diagonal of the CLIK gain matrix, 1/s.
    pub gain: [f64; 6],
    /// Pseudoinverse damping λ.
    pub damping: f64,
    /// Integration step, s.
    pub dt: f64,
}

impl Default for IkConfig {
    fn default() -> Self {
        Self {
            gain: [20.0; 6],
            damping: 1e-4,
            dt: 0.005,
        }
    }
}

impl IkConfig {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        if self.gain.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            return Err(KinematicsError::InvalidConfig(
                "CLIK gains must be positive".into(),
            ));
        }
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            return Err(KinematicsError::InvalidConfig(
                "damping must be non-negative".into(),
            ));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(KinematicsError::InvalidConfig("dt must be positive".into()));
        }
        Ok(())
    }
}

/// Result of one CLIK update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClikStep {
    /// Integrated joint reference `q_r + dt · q̇_r`.
    pub q_next: JointVector,
    /// Joint velocity reference `q̇_r`.
    pub qdot: JointVector,
    /// Pose error `p − f_fk(q_r)` before the update.
    pub error: Vector6<f64>,
}

/// One CLIK update:
/// `q̇_r = J_A†(q_r)(ṗ + K e) + (I − J_A† J_A) q̇_path`, explicit Euler in time.
pub fn clik_step(
    dh: &DhTable,
    q_r: &JointVector,
    qdot_path: &JointVector,
    p: &Vector6<f64>,
    pdot: &Vector6<f64>,
    cfg: &IkConfig,
) -> Result<ClikStep, KinematicsError> {
    let pose = forward_kinematics(dh, q_r)?;
    let error = pose_error(p, &pose.to_vector());
    let ja = analytic_from_geometric(&geometric_jacobian(dh, q_r), &Vector3::from(pose.euler))?;
    let pinv = damped_pseudoinverse(&ja, cfg.damping)?;
    let task = pdot + Vector6::from(cfg.gain).component_mul(&error);
    let null = SMatrix::<f64, N_JOINTS, N_JOINTS>::identity() - pinv * ja;
    let qdot = pinv * task + null * qdot_path;
    Ok(ClikStep {
        q_next: q_r + qdot * cfg.dt,
        qdot,
        error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn nominal() -> JointVector {
        JointVector::from_column_slice(&[0.1, 0.6, -0.2, -1.3, 0.3, 0.8, 0.2])
    }

    #[test]
    fn zero_configuration_stacks_link_offsets() {
        let pose = forward_kinematics(&DhTable::default(), &JointVector::zeros()).unwrap();
        let expected = [0.0, 0.0, 0.36 + 0.42 + 0.40 + 0.126];
        for k in 0..3 {
            assert!((pose.position[k] - expected[k]).abs() < 1e-12);
            assert!(pose.euler[k].abs() < 1e-12);
        }
    }

    #[test]
    fn base_rotation_keeps_height() {
        let dh = DhTable::default();
        let q = nominal();
        let mut q2 = q;
        q2[0] += std::f64::consts::PI;
        let a = forward_kinematics(&dh, &q).unwrap();
        let b = forward_kinematics(&dh, &q2).unwrap();
        assert!((a.position[2] - b.position[2]).abs() < 1e-12);
        assert!((a.position[0] + b.position[0]).abs() < 1e-12);
    }

    #[test]
    fn first_jacobian_column_is_base_axis() {
        let j = geometric_jacobian(&DhTable::default(), &nominal());
        assert_eq!(j[(3, 0)], 0.0);
        assert_eq!(j[(4, 0)], 0.0);
        assert_eq!(j[(5, 0)], 1.0);
    }

    #[test]
    fn euler_rate_map_is_identity_at_zero() {
        let t = euler_rate_matrix(&Vector3::zeros());
        assert!((t - Matrix3::identity()).amax() < 1e-12);
    }

    #[test]
    fn singular_pitch_is_rejected() {
        let r = rotation_from_euler(&Vector3::new(0.2, FRAC_PI_2 - 1e-8, 0.1));
        assert!(matches!(
            euler_from_rotation(&r),
            Err(KinematicsError::EulerSingularity { .. })
        ));
        let jg = geometric_jacobian(&DhTable::default(), &nominal());
        assert!(analytic_from_geometric(&jg, &Vector3::new(0.0, FRAC_PI_2 - 1e-8, 0.0)).is_err());
    }

    #[test]
    fn canonical_block_pseudoinverse() {
        let mut j = Jacobian::zeros();
        for i in 0..6 {
            j[(i, i)] = 1.0;
        }
        let p = damped_pseudoinverse(&j, 0.0).unwrap();
        for r in 0..7 {
            for c in 0..6 {
                let expect = if r == c { 1.0 } else { 0.0 };
                assert!((p[(r, c)] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn heavy_damping_scales_transpose() {
        let j = geometric_jacobian(&DhTable::default(), &nominal());
        let lambda = 1e5;
        let p = damped_pseudoinverse(&j, lambda).unwrap();
        let approx = j.transpose() / (lambda * lambda);
        assert!((p - approx).amax() < 1e-6 * approx.amax());
    }

    #[test]
    fn rank_deficient_undamped_fails() {
        let j = Jacobian::zeros();
        assert_eq!(
            damped_pseudoinverse(&j, 0.0),
            Err(KinematicsError::SolveFailure)
        );
    }

    #[test]
    fn angle_error_wraps() {
        let desired = Vector6::new(0.0, 0.0, 0.0, 0.0, 0.0, std::f64::consts::PI - 0.01);
        let actual = Vector6::new(0.0, 0.0, 0.0, 0.0, 0.0, -std::f64::consts::PI + 0.01);
        let e = pose_error(&desired, &actual);
        assert!((e[5] + 0.02).abs() < 1e-12);
    }

    #[test]
    fn clik_fixed_point() {
        let dh = DhTable::default();
        let q = nominal();
        let p = forward_kinematics(&dh, &q).unwrap().to_vector();
        let step = clik_step(
            &dh,
            &q,
            &JointVector::zeros(),
            &p,
            &Vector6::zeros(),
            &IkConfig::default(),
        )
        .unwrap();
        assert!(step.qdot.amax() < 1e-12);
        assert!((step.q_next - q).amax() < 1e-14);
    }

    #[test]
    fn clik_passes_null_space_motion() {
        let dh = DhTable::default();
        let q = nominal();
        let cfg = IkConfig::default();
        let ja = analytic_jacobian(&dh, &q).unwrap();
        // Null direction from the SVD of J padded to a square matrix.
        let mut sq = SMatrix::<f64, 7, 7>::zeros();
        sq.fixed_view_mut::<6, 7>(0, 0).copy_from(&ja);
        let svd = sq.svd(false, true);
        let vt = svd.v_t.unwrap();
        let (imin, _) =
            svd.singular_values
                .iter()
                .enumerate()
                .fold(
                    (0, f64::INFINITY),
                    |acc, (i, s)| if *s < acc.1 { (i, *s) } else { acc },
                );
        let null: JointVector = vt.row(imin).transpose() * 0.2;
        assert!((ja * null).norm() < 1e-10);

        let p = forward_kinematics(&dh, &q).unwrap().to_vector();
        let step = clik_step(&dh, &q, &null, &p, &Vector6::zeros(), &cfg).unwrap();
        assert!((step.qdot - null).amax() < 1e-7);
        let moved = forward_kinematics(&dh, &step.q_next).unwrap().to_vector();
        // First-order motion vanishes; what remains is O(dt²).
        assert!(pose_error(&moved, &p).amax() < 10.0 * (cfg.dt * 0.2).powi(2));
    }

    proptest! {
        #[test]
        fn euler_roundtrip(q in prop::array::uniform7(-2.5..2.5f64)) {
            let dh = DhTable::default();
            let q = JointVector::from(q);
            let t = dh.tool_transform(&q);
            let r: Matrix3<f64> = t.fixed_view::<3, 3>(0, 0).into_owned();
            prop_assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-10);
            if let Ok(pose) = forward_kinematics(&dh, &q) {
                prop_assert!((pose.rotation() - r).amax() < 1e-10);
            }
        }
    }
}
