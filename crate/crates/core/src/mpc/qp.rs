//! Operator-splitting (ADMM) solver for
//!
//! ```text
//! minimize   ½ xᵀ H x + gᵀ x
//! subject to l ≤ A x ≤ u
//! ```
//!
//! The x-update solves `(H + σI + ρAᵀA) x = σx − g + Aᵀ(ρz − y)`; the
//! z-update projects onto `[l, u]`. `ρ` is rebalanced against the residual
//! ratio and every `ρ` seen keeps its Cholesky factor in a small cache.
//!
//! Whenever the active set guessed from the iterate changes, the solver tries
//! to polish: it solves the equality-constrained KKT system of that set and
//! accepts the result if it is primal feasible with correctly signed
//! multipliers, which makes it the exact optimum.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::MpcError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    /// Absolute and relative residual tolerance.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation factor in (0, 2).
    pub relaxation: f64,
    /// Iterations between ρ rebalancing checks and polishing attempts. The
    /// rebalancing wait doubles after every change of ρ.
    pub adapt_interval: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 20_000,
            rho: 0.1,
            sigma: 1e-6,
            relaxation: 1.6,
            adapt_interval: 25,
        }
    }
}

/// A dense QP in the form solved by [`solve_qp`].
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a: DMatrix<f64>,
    pub l: DVector<f64>,
    pub u: DVector<f64>,
    /// Objective offset so that `½xᵀHx + gᵀx + constant` is the full cost.
    pub constant: f64,
}

impl QpProblem {
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.g.dot(x) + self.constant
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Constraint multipliers (positive on upper bounds, negative on lower).
    pub y: DVector<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

/// Factorizations reusable across solves that share `H` and `A`.
#[derive(Debug, Clone, Default)]
pub struct QpWorkspace {
    ata: Option<DMatrix<f64>>,
    h_chol: Option<Cholesky<f64, Dyn>>,
    kkt: Vec<(f64, Cholesky<f64, Dyn>)>,
    rho: Option<f64>,
}

const KKT_CACHE: usize = 12;

impl QpWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    fn prepare(&mut self, h: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<(), MpcError> {
        if self.h_chol.is_none() {
            self.h_chol = Some(Cholesky::new(h.clone()).ok_or(MpcError::NotPositiveDefinite)?);
        }
        if self.ata.is_none() {
            self.ata = Some(a.tr_mul(a));
        }
        Ok(())
    }

    fn kkt(
        &mut self,
        h: &DMatrix<f64>,
        rho: f64,
        sigma: f64,
    ) -> Result<&Cholesky<f64, Dyn>, MpcError> {
        if let Some(pos) = self.kkt.iter().position(|(r, _)| *r == rho) {
            return Ok(&self.kkt[pos].1);
        }
        let ata = self.ata.as_ref().expect("prepared");
        let mut m = h + ata * rho;
        for i in 0..m.nrows() {
            m[(i, i)] += sigma;
        }
        let chol = Cholesky::new(m).ok_or(MpcError::NotPositiveDefinite)?;
        if self.kkt.len() == KKT_CACHE {
            self.kkt.remove(0);
        }
        self.kkt.push((rho, chol));
        Ok(&self.kkt.last().unwrap().1)
    }
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

const POLISH_DELTA: f64 = 1e-9;
const POLISH_REFINEMENTS: usize = 5;

/// Rows guessed active from the ADMM iterate: `-1` lower, `1` upper, `0` free.
fn guess_active(z: &DVector<f64>, y: &DVector<f64>, l: &DVector<f64>, u: &DVector<f64>) -> Vec<i8> {
    (0..z.len())
        .map(|i| {
            if u[i] - z[i] < y[i] {
                1
            } else if z[i] - l[i] < -y[i] {
                -1
            } else {
                0
            }
        })
        .collect()
}

/// Exact solve on a fixed active set, or `None` if it fails the KKT checks.
#[allow(clippy::too_many_arguments)]
fn polish(
    h: &DMatrix<f64>,
    a: &DMatrix<f64>,
    g: &DVector<f64>,
    l: &DVector<f64>,
    u: &DVector<f64>,
    active: &[i8],
    tol: f64,
) -> Option<QpSolution> {
    let n = h.nrows();
    let m = a.nrows();
    let rows: Vec<usize> = (0..m).filter(|i| active[*i] != 0).collect();
    let k = rows.len();
    let mut kkt = DMatrix::zeros(n + k, n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(h);
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(&(-g));
    for (c, &i) in rows.iter().enumerate() {
        for j in 0..n {
            kkt[(n + c, j)] = a[(i, j)];
            kkt[(j, n + c)] = a[(i, j)];
        }
        rhs[n + c] = if active[i] > 0 { u[i] } else { l[i] };
    }
    // Regularized factor plus refinement tolerates dependent active rows.
    let mut reg = kkt.clone();
    for i in 0..n + k {
        reg[(i, i)] += if i < n { POLISH_DELTA } else { -POLISH_DELTA };
    }
    let lu = reg.lu();
    let mut sol = lu.solve(&rhs)?;
    for _ in 0..POLISH_REFINEMENTS {
        let r = &rhs - &kkt * &sol;
        sol += lu.solve(&r)?;
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let x = sol.rows(0, n).into_owned();
    let mut y = DVector::zeros(m);
    for (c, &i) in rows.iter().enumerate() {
        y[i] = sol[n + c];
    }

    let ax = a * &x;
    let hx = h * &x;
    let aty = a.tr_mul(&y);
    let prim = (0..m)
        .map(|i| (ax[i] - ax[i].clamp(l[i], u[i])).abs())
        .fold(0.0, f64::max);
    let dual = inf_norm(&(&hx + g + &aty));
    let prim_tol = tol + tol * inf_norm(&ax);
    let dual_scale = inf_norm(&hx).max(inf_norm(&aty)).max(inf_norm(g));
    let dual_tol = tol + tol * dual_scale;
    let signs_ok = rows
        .iter()
        .all(|&i| (active[i] > 0 && y[i] >= -dual_tol) || (active[i] < 0 && y[i] <= dual_tol));
    (prim <= prim_tol && dual <= dual_tol && signs_ok).then_some(QpSolution {
        x,
        y,
        iterations: 0,
        primal_residual: prim,
        dual_residual: dual,
    })
}

/// Solves a dense box/linear-constrained QP. Convenience wrapper around
/// [`solve_qp_with`] using a fresh workspace and no warm start.
pub fn solve_qp(problem: &QpProblem, settings: &QpSettings) -> Result<QpSolution, MpcError> {
    let mut ws = QpWorkspace::new();
    solve_qp_with(
        &problem.h, &problem.a, &problem.g, &problem.l, &problem.u, settings, None, &mut ws,
    )
}

/// Solves the QP, reusing factorizations from `ws`.
///
/// The unconstrained minimizer `−H⁻¹g` is returned directly when it already
/// satisfies every constraint row (zero iterations); otherwise ADMM starts
/// from `warm_start`, or from the unconstrained minimizer when none is given.
#[allow(clippy::too_many_arguments)]
pub fn solve_qp_with(
    h: &DMatrix<f64>,
    a: &DMatrix<f64>,
    g: &DVector<f64>,
    l: &DVector<f64>,
    u: &DVector<f64>,
    settings: &QpSettings,
    warm_start: Option<&DVector<f64>>,
    ws: &mut QpWorkspace,
) -> Result<QpSolution, MpcError> {
    let n = h.nrows();
    let m = a.nrows();
    if h.ncols() != n || g.len() != n || a.ncols() != n || l.len() != m || u.len() != m {
        return Err(MpcError::DimensionMismatch(format!(
            "H {}x{}, g {}, A {}x{}, l {}, u {}",
            h.nrows(),
            h.ncols(),
            g.len(),
            a.nrows(),
            a.ncols(),
            l.len(),
            u.len()
        )));
    }
    if l.iter().zip(u.iter()).any(|(lo, hi)| lo > hi) {
        return Err(MpcError::Infeasible);
    }
    ws.prepare(h, a)?;
    let tol = settings.tolerance;

    let x_unc = -ws.h_chol.as_ref().unwrap().solve(g);
    let ax_unc = a * &x_unc;
    let feasible = ax_unc
        .iter()
        .zip(l.iter().zip(u.iter()))
        .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi);
    if feasible {
        let dual = inf_norm(&(h * &x_unc + g));
        return Ok(QpSolution {
            x: x_unc,
            y: DVector::zeros(m),
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: dual,
        });
    }

    let mut x = warm_start.cloned().unwrap_or(x_unc);
    if x.len() != n {
        return Err(MpcError::DimensionMismatch("warm start length".into()));
    }
    let project = |v: &DVector<f64>| -> DVector<f64> {
        DVector::from_iterator(
            m,
            v.iter()
                .zip(l.iter().zip(u.iter()))
                .map(|(x, (lo, hi))| x.clamp(*lo, *hi)),
        )
    };
    let mut z = project(&(a * &x));
    let mut y = DVector::zeros(m);
    let mut rho = ws.rho.unwrap_or(settings.rho);
    let alpha = settings.relaxation;
    let sigma = settings.sigma;

    let mut iterations = 0;
    let mut last_active: Option<Vec<i8>> = None;
    let mut adapt_wait = settings.adapt_interval.max(1);
    let mut next_adapt = adapt_wait;
    let (mut prim, mut dual);
    loop {
        iterations += 1;
        let rhs = &x * sigma - g + a.tr_mul(&(&z * rho - &y));
        let x_tilde = ws.kkt(h, rho, sigma)?.solve(&rhs);
        let z_tilde = a * &x_tilde;
        x = &x_tilde * alpha + &x * (1.0 - alpha);
        let z_relaxed = &z_tilde * alpha + &z * (1.0 - alpha);
        let z_new = project(&(&z_relaxed + &y / rho));
        y += (&z_relaxed - &z_new) * rho;
        z = z_new;

        let ax = a * &x;
        let hx = h * &x;
        let aty = a.tr_mul(&y);
        prim = inf_norm(&(&ax - &z));
        dual = inf_norm(&(&hx + g + &aty));
        let prim_scale = inf_norm(&ax).max(inf_norm(&z));
        let dual_scale = inf_norm(&hx).max(inf_norm(&aty)).max(inf_norm(g));
        if prim <= tol + tol * prim_scale && dual <= tol + tol * dual_scale {
            break;
        }
        if iterations >= settings.max_iterations {
            ws.rho = Some(rho);
            return Err(MpcError::MaxIterations {
                solution: Box::new(QpSolution {
                    x,
                    y,
                    iterations,
                    primal_residual: prim,
                    dual_residual: dual,
                }),
            });
        }
        if iterations % settings.adapt_interval == 0 {
            let active = guess_active(&z, &y, l, u);
            if last_active.as_ref() != Some(&active) {
                if let Some(sol) = polish(h, a, g, l, u, &active, tol) {
                    ws.rho = Some(rho);
                    return Ok(QpSolution { iterations, ..sol });
                }
                last_active = Some(active);
            }
        }
        if iterations >= next_adapt {
            let rp = prim / prim_scale.max(1e-300);
            let rd = dual / dual_scale.max(1e-300);
            let before = rho;
            if rp > 10.0 * rd {
                rho *= 2.0;
            } else if rd > 10.0 * rp {
                rho *= 0.5;
            }
            // Each change doubles the wait so that ρ cannot cycle.
            if rho != before {
                adapt_wait *= 2;
            }
            next_adapt = iterations + adapt_wait;
        }
    }
    ws.rho = Some(rho);
    Ok(QpSolution {
        x,
        y,
        iterations,
        primal_residual: prim,
        dual_residual: dual,
    })
}
