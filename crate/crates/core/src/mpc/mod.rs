//! Tracking MPC for a chain of double integrators.
//!
//! The state is `x = [q; q̇]` and the input is the joint acceleration. The
//! horizon problem is condensed onto the input sequence `U = [u_0; …; u_{N-1}]`
//! with the predicted states `X = [x_1; …; x_N] = F x_0 + G U` and solved as a
//! dense QP by [`qp::solve_qp_with`].
//!
//! Cost, with `e_x = x − x_r` and `e_u = u − u_r`:
//!
//! ```text
//! ½ Σ_{k=0}^{N-1} (e_x,kᵀ Q e_x,k + e_u,kᵀ R e_u,k) + ½ e_x,Nᵀ Q_F e_x,N
//! ```

pub mod qp;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use qp::{solve_qp, solve_qp_with, QpProblem, QpSettings, QpSolution, QpWorkspace};

use crate::N_JOINTS;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MpcError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid MPC configuration: {0}")]
    InvalidConfig(String),
    #[error("QP Hessian or KKT matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("constraint bounds are crossed (l > u)")]
    Infeasible,
    #[error(
        "QP solver hit the iteration cap ({} iterations, primal {:e}, dual {:e})",
        solution.iterations, solution.primal_residual, solution.dual_residual
    )]
    MaxIterations { solution: Box<QpSolution> },
}

/// Discrete-time `x⁺ = A x + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub ts: f64,
}

impl LtiModel {
    /// Exact zero-order-hold discretization of `n_joints` double integrators.
    pub fn double_integrator(n_joints: usize, ts: f64) -> Result<Self, MpcError> {
        if !(ts > 0.0 && ts.is_finite()) {
            return Err(MpcError::InvalidConfig(format!(
                "sampling time {ts} must be positive"
            )));
        }
        let n = n_joints;
        let mut a = DMatrix::identity(2 * n, 2 * n);
        let mut b = DMatrix::zeros(2 * n, n);
        for i in 0..n {
            a[(i, n + i)] = ts;
            b[(i, i)] = 0.5 * ts * ts;
            b[(n + i, i)] = ts;
        }
        Ok(Self { a, b, ts })
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }
}

/// The 14-state model of the 7-joint arm.
pub fn discretize(ts: f64) -> Result<LtiModel, MpcError> {
    LtiModel::double_integrator(N_JOINTS, ts)
}

/// Diagonal weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcWeights {
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub q_terminal: Vec<f64>,
}

impl Default for MpcWeights {
    fn default() -> Self {
        let mut q = vec![1e6; N_JOINTS];
        q.extend([2e-3; N_JOINTS]);
        let mut q_terminal = vec![1e-3; N_JOINTS];
        q_terminal.extend([1e-4; N_JOINTS]);
        Self {
            q,
            r: vec![2e-3; N_JOINTS],
            q_terminal,
        }
    }
}

impl MpcWeights {
    pub fn validate(&self, n_states: usize, n_inputs: usize) -> Result<(), MpcError> {
        if self.q.len() != n_states || self.q_terminal.len() != n_states || self.r.len() != n_inputs
        {
            return Err(MpcError::DimensionMismatch(format!(
                "weights sized Q {}, R {}, Q_F {} for {n_states} states / {n_inputs} inputs",
                self.q.len(),
                self.r.len(),
                self.q_terminal.len()
            )));
        }
        if self
            .q
            .iter()
            .chain(&self.q_terminal)
            .any(|w| !(*w >= 0.0 && w.is_finite()))
        {
            return Err(MpcError::InvalidConfig(
                "state weights must be non-negative".into(),
            ));
        }
        if self.r.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(MpcError::InvalidConfig(
                "input weights must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Box limits on joint positions, velocities and accelerations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub q_min: Vec<f64>,
    pub q_max: Vec<f64>,
    pub qd_min: Vec<f64>,
    pub qd_max: Vec<f64>,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
}

impl Default for Bounds {
    fn default() -> Self {
        Self::symmetric(N_JOINTS, 2.9, 1.7, 5.0)
    }
}

impl Bounds {
    pub fn symmetric(n_joints: usize, q: f64, qd: f64, u: f64) -> Self {
        Self {
            q_min: vec![-q; n_joints],
            q_max: vec![q; n_joints],
            qd_min: vec![-qd; n_joints],
            qd_max: vec![qd; n_joints],
            u_min: vec![-u; n_joints],
            u_max: vec![u; n_joints],
        }
    }

    pub fn validate(&self, n_joints: usize) -> Result<(), MpcError> {
        let pairs = [
            (&self.q_min, &self.q_max),
            (&self.qd_min, &self.qd_max),
            (&self.u_min, &self.u_max),
        ];
        for (lo, hi) in pairs {
            if lo.len() != n_joints || hi.len() != n_joints {
                return Err(MpcError::DimensionMismatch(format!(
                    "bounds must have {n_joints} entries"
                )));
            }
            if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                return Err(MpcError::InvalidConfig(
                    "bounds require min < max componentwise".into(),
                ));
            }
        }
        Ok(())
    }

    fn state_lower(&self) -> Vec<f64> {
        self.q_min.iter().chain(&self.qd_min).copied().collect()
    }

    fn state_upper(&self) -> Vec<f64> {
        self.q_max.iter().chain(&self.qd_max).copied().collect()
    }
}

/// State reference over `N + 1` grid points and input reference over `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointReferenceTrajectory {
    /// `2n × (N+1)`, stacked `q_r` over `q̇_r`.
    pub x_r: DMatrix<f64>,
    /// `n × N`.
    pub u_r: DMatrix<f64>,
}

impl JointReferenceTrajectory {
    /// Builds the trajectory with `u_r` from forward differences of `q̇_r`.
    pub fn from_joint_path(q_r: &DMatrix<f64>, qd_r: &DMatrix<f64>, ts: f64) -> Self {
        let n = q_r.nrows();
        let mut x_r = DMatrix::zeros(2 * n, q_r.ncols());
        x_r.rows_mut(0, n).copy_from(q_r);
        x_r.rows_mut(n, n).copy_from(qd_r);
        Self {
            x_r,
            u_r: reference_input(qd_r, ts),
        }
    }

    pub fn horizon(&self) -> usize {
        self.u_r.ncols()
    }
}

/// `u_r[k] = (q̇_r[k+1] − q̇_r[k]) / T_s`.
pub fn reference_input(qd_r: &DMatrix<f64>, ts: f64) -> DMatrix<f64> {
    let n = qd_r.nrows();
    let steps = qd_r.ncols().saturating_sub(1);
    DMatrix::from_fn(n, steps, |i, k| (qd_r[(i, k + 1)] - qd_r[(i, k)]) / ts)
}

/// Prediction matrices and Hessian for a fixed model, weights, bounds and horizon.
#[derive(Debug, Clone)]
pub struct CondensedMpc {
    model: LtiModel,
    weights: MpcWeights,
    horizon: usize,
    /// `nx·N × nx`
    f: DMatrix<f64>,
    /// `nx·N × nu·N`
    g: DMatrix<f64>,
    /// `Gᵀ Q̄`
    gt_qbar: DMatrix<f64>,
    qbar: DVector<f64>,
    rbar: DVector<f64>,
    h: DMatrix<f64>,
    a_con: DMatrix<f64>,
    l_base: DVector<f64>,
    u_base: DVector<f64>,
    settings: QpSettings,
    workspace: QpWorkspace,
}

impl CondensedMpc {
    pub fn new(
        model: &LtiModel,
        weights: &MpcWeights,
        bounds: &Bounds,
        horizon: usize,
        settings: QpSettings,
    ) -> Result<Self, MpcError> {
        let nx = model.n_states();
        let nu = model.n_inputs();
        if horizon == 0 {
            return Err(MpcError::InvalidConfig("horizon must be at least 1".into()));
        }
        weights.validate(nx, nu)?;
        bounds.validate(nu)?;
        if nx != 2 * nu {
            return Err(MpcError::DimensionMismatch(
                "model must have 2·n_inputs states".into(),
            ));
        }
        let n = horizon;

        let mut f = DMatrix::zeros(nx * n, nx);
        let mut a_pow = model.a.clone();
        for k in 0..n {
            f.view_mut((k * nx, 0), (nx, nx)).copy_from(&a_pow);
            a_pow = &model.a * a_pow;
        }
        // Block (k, j) of G, k ≥ j, is A^{k-j} B.
        let mut ab = vec![model.b.clone()];
        for p in 1..n {
            let next = &model.a * &ab[p - 1];
            ab.push(next);
        }
        let mut g = DMatrix::zeros(nx * n, nu * n);
        for k in 0..n {
            for j in 0..=k {
                g.view_mut((k * nx, j * nu), (nx, nu)).copy_from(&ab[k - j]);
            }
        }

        let mut qbar = DVector::zeros(nx * n);
        for k in 0..n {
            let w = if k + 1 == n {
                &weights.q_terminal
            } else {
                &weights.q
            };
            qbar.rows_mut(k * nx, nx)
                .copy_from(&DVector::from_column_slice(w));
        }
        let rbar = DVector::from_iterator(nu * n, (0..n).flat_map(|_| weights.r.iter().copied()));

        let mut gt_qbar = g.transpose();
        for (c, w) in qbar.iter().enumerate() {
            gt_qbar.column_mut(c).scale_mut(*w);
        }
        let mut h = &gt_qbar * &g;
        for i in 0..nu * n {
            h[(i, i)] += rbar[i];
        }
        // Exact symmetry for the Cholesky routines.
        let h = (&h + h.transpose()) * 0.5;

        let rows = nu * n + nx * n;
        let mut a_con = DMatrix::zeros(rows, nu * n);
        a_con
            .view_mut((0, 0), (nu * n, nu * n))
            .fill_with_identity();
        a_con.view_mut((nu * n, 0), (nx * n, nu * n)).copy_from(&g);
        let (xl, xu) = (bounds.state_lower(), bounds.state_upper());
        let l_base = DVector::from_iterator(
            rows,
            (0..n)
                .flat_map(|_| bounds.u_min.iter().copied())
                .chain((0..n).flat_map(|_| xl.iter().copied())),
        );
        let u_base = DVector::from_iterator(
            rows,
            (0..n)
                .flat_map(|_| bounds.u_max.iter().copied())
                .chain((0..n).flat_map(|_| xu.iter().copied())),
        );

        Ok(Self {
            model: model.clone(),
            weights: weights.clone(),
            horizon,
            f,
            g,
            gt_qbar,
            qbar,
            rbar,
            h,
            a_con,
            l_base,
            u_base,
            settings,
            workspace: QpWorkspace::new(),
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn model(&self) -> &LtiModel {
        &self.model
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn prediction_matrices(&self) -> (&DMatrix<f64>, &DMatrix<f64>) {
        (&self.f, &self.g)
    }

    fn check_reference(
        &self,
        x0: &DVector<f64>,
        r: &JointReferenceTrajectory,
    ) -> Result<(), MpcError> {
        let nx = self.model.n_states();
        let nu = self.model.n_inputs();
        let n = self.horizon;
        if x0.len() != nx
            || r.x_r.nrows() != nx
            || r.x_r.ncols() != n + 1
            || r.u_r.nrows() != nu
            || r.u_r.ncols() != n
        {
            return Err(MpcError::DimensionMismatch(format!(
                "x0 {}, x_r {}x{}, u_r {}x{} for nx {nx}, nu {nu}, N {n}",
                x0.len(),
                r.x_r.nrows(),
                r.x_r.ncols(),
                r.u_r.nrows(),
                r.u_r.ncols()
            )));
        }
        if x0
            .iter()
            .chain(r.x_r.iter())
            .chain(r.u_r.iter())
            .any(|v| !v.is_finite())
        {
            return Err(MpcError::InvalidConfig(
                "non-finite state or reference".into(),
            ));
        }
        Ok(())
    }

    /// Linear term, constraint bounds and constant for one initial state and reference.
    fn data(
        &self,
        x0: &DVector<f64>,
        r: &JointReferenceTrajectory,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>, f64) {
        let nx = self.model.n_states();
        let nu = self.model.n_inputs();
        let n = self.horizon;
        let free = &self.f * x0;
        let mut dx = free.clone();
        for k in 0..n {
            let mut blk = dx.rows_mut(k * nx, nx);
            blk -= r.x_r.column(k + 1);
        }
        let ur = DVector::from_iterator(nu * n, r.u_r.iter().copied());
        let g = &self.gt_qbar * &dx - self.rbar.component_mul(&ur);

        let e0 = x0 - r.x_r.column(0);
        let stage0: f64 = e0.iter().zip(&self.weights.q).map(|(e, w)| w * e * e).sum();
        let constant = 0.5
            * (dx.dot(&self.qbar.component_mul(&dx))
                + ur.dot(&self.rbar.component_mul(&ur))
                + stage0);

        let mut l = self.l_base.clone();
        let mut u = self.u_base.clone();
        let off = nu * n;
        for i in 0..nx * n {
            l[off + i] -= free[i];
            u[off + i] -= free[i];
        }
        (g, l, u, constant)
    }

    /// The condensed QP for one initial state and reference.
    pub fn qp(
        &self,
        x0: &DVector<f64>,
        r: &JointReferenceTrajectory,
    ) -> Result<QpProblem, MpcError> {
        self.check_reference(x0, r)?;
        let (g, l, u, constant) = self.data(x0, r);
        Ok(QpProblem {
            h: self.h.clone(),
            g,
            a: self.a_con.clone(),
            l,
            u,
            constant,
        })
    }

    /// Solves the horizon problem from `x0` and returns the full solution.
    pub fn solve(
        &mut self,
        x0: &DVector<f64>,
        r: &JointReferenceTrajectory,
        warm_start: Option<&DVector<f64>>,
    ) -> Result<MpcSolution, MpcError> {
        self.check_reference(x0, r)?;
        let (g, l, u, constant) = self.data(x0, r);
        let sol = solve_qp_with(
            &self.h,
            &self.a_con,
            &g,
            &l,
            &u,
            &self.settings,
            warm_start,
            &mut self.workspace,
        )?;
        let objective = 0.5 * sol.x.dot(&(&self.h * &sol.x)) + g.dot(&sol.x) + constant;
        Ok(self.package(x0, sol, objective))
    }

    fn package(&self, x0: &DVector<f64>, sol: QpSolution, objective: f64) -> MpcSolution {
        let nu = self.model.n_inputs();
        let n = self.horizon;
        let inputs = DMatrix::from_column_slice(nu, n, sol.x.as_slice());
        let mut states = DMatrix::zeros(self.model.n_states(), n + 1);
        states.set_column(0, x0);
        for k in 0..n {
            let next = self.model.step(
                &states.column(k).into_owned(),
                &inputs.column(k).into_owned(),
            );
            states.set_column(k + 1, &next);
        }
        MpcSolution {
            inputs,
            states,
            objective,
            iterations: sol.iterations,
            primal_residual: sol.primal_residual,
            dual_residual: sol.dual_residual,
            multipliers: sol.y,
        }
    }
}

/// Builds the condensed QP `{H, g, A, l, u}` from scratch.
pub fn condense(
    model: &LtiModel,
    weights: &MpcWeights,
    x0: &DVector<f64>,
    reference: &JointReferenceTrajectory,
    bounds: &Bounds,
    horizon: usize,
) -> Result<QpProblem, MpcError> {
    CondensedMpc::new(model, weights, bounds, horizon, QpSettings::default())?.qp(x0, reference)
}

/// Result of one horizon solve.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    /// `nu × N`, rad/s².
    pub inputs: DMatrix<f64>,
    /// `nx × (N+1)`, rolled out through the model from `x0`.
    pub states: DMatrix<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub multipliers: DVector<f64>,
}

impl MpcSolution {
    /// Input sequence as the stacked vector `U`.
    pub fn stacked_inputs(&self) -> DVector<f64> {
        DVector::from_column_slice(self.inputs.as_slice())
    }
}

/// Previous solution shifted one step, with the last block repeated.
pub fn shift_warm_start(previous: &DVector<f64>, n_inputs: usize) -> DVector<f64> {
    let len = previous.len();
    let mut out = DVector::zeros(len);
    if len < n_inputs {
        return out;
    }
    out.rows_mut(0, len - n_inputs)
        .copy_from(&previous.rows(n_inputs, len - n_inputs));
    out.rows_mut(len - n_inputs, n_inputs)
        .copy_from(&previous.rows(len - n_inputs, n_inputs));
    out
}

/// One receding-horizon step: solves from `x_t` and returns the first input.
pub fn mpc_step(
    controller: &mut CondensedMpc,
    x_t: &DVector<f64>,
    reference: &JointReferenceTrajectory,
    warm_start: Option<&DVector<f64>>,
) -> Result<(DVector<f64>, MpcSolution), MpcError> {
    let sol = controller.solve(x_t, reference, warm_start)?;
    Ok((sol.inputs.column(0).into_owned(), sol))
}
