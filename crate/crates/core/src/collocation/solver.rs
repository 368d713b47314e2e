//! Self-contained augmented-Lagrangian NLP solver for the collocation
//! problem.
//!
//! Defect equalities carry explicit multipliers; path inequalities
//! `g >= 0` enter through the slack-free max-form penalty
//! `psi(g) = (max(0, eta - mu g)^2 - eta^2) / (2 mu)`; pinned knots and the
//! final time are handled exactly as (possibly equal) box bounds by
//! projection. The inner subproblems are minimized by projected L-BFGS
//! with Armijo backtracking.
//!
//! Derivative information comes from forward finite differences of the
//! dynamics (relative step 1e-6): per-knot and per-midpoint Jacobians of F
//! are estimated column by column, and the merit gradient is assembled
//! from them analytically through the Hermite-Simpson defect formulas.
//! Differencing F rather than the merit keeps the finite-difference bias
//! proportional to the defects themselves, so it vanishes as the iterates
//! become feasible and tight stationarity tolerances stay reachable.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::rk4_vec;
use crate::error::{Result, SimError};

use super::{hermite_midpoint, CollocationProblem};

/// Tolerances and iteration limits of [`solve_nlp`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub max_outer: usize,
    pub max_inner: usize,
    /// Required |defect| and boundary residual bound.
    pub eq_tol: f64,
    /// Allowed path-inequality violation.
    pub ineq_tol: f64,
    /// Projected-gradient norm defining first-order stationarity.
    pub stationarity_tol: f64,
    /// Relative forward-difference step for dynamics Jacobians.
    pub fd_step: f64,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_penalty: f64,
    pub lbfgs_memory: usize,
    pub armijo_slope: f64,
    pub min_step: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_outer: 30,
            max_inner: 200,
            eq_tol: 1e-6,
            ineq_tol: 1e-8,
            stationarity_tol: 1e-5,
            fd_step: 1e-6,
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            max_penalty: 1e8,
            lbfgs_memory: 8,
            armijo_slope: 1e-4,
            min_step: 1e-12,
        }
    }
}

/// Lagrange-multiplier estimates, kept across receding-horizon solves for
/// warm starting.
#[derive(Debug, Clone)]
pub struct Multipliers {
    /// Per interval, one multiplier per defect component.
    pub defects: Vec<DVector<f64>>,
    /// Per knot, one nonnegative multiplier per path inequality.
    pub path: Vec<DVector<f64>>,
}

impl Multipliers {
    pub fn zeros(problem: &CollocationProblem<'_>) -> Self {
        Multipliers {
            defects: vec![DVector::zeros(problem.dim_state()); problem.n_knots - 1],
            path: vec![DVector::zeros(2 * problem.dim_control()); problem.n_knots],
        }
    }
}

/// Warm-start data: previous decision and multipliers.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub decision: DVector<f64>,
    pub multipliers: Multipliers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    LineSearchFailure,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub decision: DVector<f64>,
    pub status: SolveStatus,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// Tracking cost at the returned decision.
    pub objective: f64,
    pub max_equality_violation: f64,
    pub max_inequality_violation: f64,
    /// Projected-gradient infinity norm of the merit at exit.
    pub stationarity: f64,
    pub multipliers: Multipliers,
}

impl SolveResult {
    /// The returned trajectory respects the dynamics and stroke limits,
    /// whether or not full stationarity was reached.
    pub fn is_feasible(&self, opts: &SolverOptions) -> bool {
        self.max_equality_violation <= opts.eq_tol
            && self.max_inequality_violation <= opts.ineq_tol
    }
}

/// Cached pieces of one merit evaluation.
struct EvalCache {
    f_knots: Vec<DVector<f64>>,
    f_mids: Vec<DVector<f64>>,
    z_knots: Vec<DVector<f64>>,
    cost_terms: Vec<f64>,
    defects: Vec<DVector<f64>>,
    path_values: Vec<DVector<f64>>,
    total: f64,
}

impl EvalCache {
    fn max_equality_violation(&self) -> f64 {
        self.defects.iter().map(|d| d.amax()).fold(0.0, f64::max)
    }

    fn max_inequality_violation(&self) -> f64 {
        self.path_values
            .iter()
            .flat_map(|g| g.iter())
            .map(|&gi| (-gi).max(0.0))
            .fold(0.0, f64::max)
    }

    fn objective(&self) -> f64 {
        self.cost_terms.iter().sum()
    }
}

/// Merit function (augmented Lagrangian) for a fixed multiplier/penalty
/// pair.
struct Merit<'p, 'a> {
    problem: &'p CollocationProblem<'a>,
    multipliers: &'p Multipliers,
    mu: f64,
    fd_step: f64,
    /// lower == upper here means the entry is fixed and excluded from
    /// differentiation.
    bounds: &'p [(f64, f64)],
}

impl Merit<'_, '_> {
    fn defect_term(&self, interval: usize, defect: &DVector<f64>) -> f64 {
        let lambda = &self.multipliers.defects[interval];
        let mut sum = 0.0;
        for i in 0..defect.len() {
            sum += -lambda[i] * defect[i] + 0.5 * self.mu * defect[i] * defect[i];
        }
        sum
    }

    fn path_term(&self, knot: usize, g: &DVector<f64>) -> f64 {
        let eta = &self.multipliers.path[knot];
        let mut sum = 0.0;
        for i in 0..g.len() {
            let shifted = (eta[i] - self.mu * g[i]).max(0.0);
            sum += (shifted * shifted - eta[i] * eta[i]) / (2.0 * self.mu);
        }
        sum
    }

    fn dynamics_at(&self, y: &DVector<f64>, u: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
        let f = self
            .problem
            .dynamics
            .derivative(y, u)
            .map_err(|e| SimError::domain("solve_nlp", format!("dynamics failed at {what}: {e}")))?;
        if !f.iter().all(|v| v.is_finite()) {
            return Err(SimError::NonFinite { context: format!("dynamics at {what}") });
        }
        Ok(f)
    }

    fn eval_full(&self, decision: &DVector<f64>) -> Result<EvalCache> {
        let p = self.problem;
        let n = p.n_knots;
        let times = p.knot_times(decision);
        let mut f_knots = Vec::with_capacity(n);
        let mut z_knots = Vec::with_capacity(n);
        let mut cost_terms = Vec::with_capacity(n);
        let mut path_values = Vec::with_capacity(n);
        let mut total = 0.0;
        for j in 0..n {
            let y = p.knot_state(decision, j);
            let u = p.knot_control(decision, j);
            f_knots.push(self.dynamics_at(&y, &u, &format!("knot {j}"))?);
            let z = p.dynamics.output(&y);
            cost_terms.push(p.cost.term(&z, &p.reference[j]));
            z_knots.push(z);
            let g = p.path_inequalities(decision, j);
            total += cost_terms[j] + self.path_term(j, &g);
            path_values.push(g);
        }
        let mut f_mids = Vec::with_capacity(n - 1);
        let mut defects = Vec::with_capacity(n - 1);
        for j in 0..n - 1 {
            let h = times[j + 1] - times[j];
            let y_j = p.knot_state(decision, j);
            let y_next = p.knot_state(decision, j + 1);
            let (mid_state, mid_slope) =
                hermite_midpoint(&y_j, &y_next, &f_knots[j], &f_knots[j + 1], h);
            let mid_control =
                (p.knot_control(decision, j) + p.knot_control(decision, j + 1)) * 0.5;
            let f_mid = self.dynamics_at(&mid_state, &mid_control, &format!("interval {j} midpoint"))?;
            let d = mid_slope - &f_mid;
            total += self.defect_term(j, &d);
            defects.push(d);
            f_mids.push(f_mid);
        }
        if !total.is_finite() {
            return Err(SimError::NonFinite { context: "collocation merit".into() });
        }
        Ok(EvalCache { f_knots, f_mids, z_knots, cost_terms, defects, path_values, total })
    }

    /// Forward-difference Jacobian of the dynamics at `(y, u)` with respect
    /// to the state (columns over state entries).
    fn state_jacobian(
        &self,
        y: &DVector<f64>,
        u: &DVector<f64>,
        f0: &DVector<f64>,
    ) -> Result<DMatrix<f64>> {
        let ns = y.len();
        let mut jac = DMatrix::zeros(ns, ns);
        let mut y_pert = y.clone();
        for i in 0..ns {
            let step = self.fd_step * y[i].abs().max(1.0);
            y_pert[i] = y[i] + step;
            let f = self.dynamics_at(&y_pert, u, "jacobian probe")?;
            jac.column_mut(i).copy_from(&((f - f0) / step));
            y_pert[i] = y[i];
        }
        Ok(jac)
    }

    fn control_jacobian(
        &self,
        y: &DVector<f64>,
        u: &DVector<f64>,
        f0: &DVector<f64>,
    ) -> Result<DMatrix<f64>> {
        let (ns, nc) = (y.len(), u.len());
        let mut jac = DMatrix::zeros(ns, nc);
        let mut u_pert = u.clone();
        for i in 0..nc {
            let step = self.fd_step * u[i].abs().max(1.0);
            u_pert[i] = u[i] + step;
            let f = self.dynamics_at(y, &u_pert, "jacobian probe")?;
            jac.column_mut(i).copy_from(&((f - f0) / step));
            u_pert[i] = u[i];
        }
        Ok(jac)
    }

    /// Forward-difference Jacobian of the tracked output at one knot.
    fn output_jacobian(&self, y: &DVector<f64>, z0: &DVector<f64>) -> DMatrix<f64> {
        let ns = y.len();
        let nz = z0.len();
        let mut jac = DMatrix::zeros(nz, ns);
        let mut y_pert = y.clone();
        for i in 0..ns {
            let step = self.fd_step * y[i].abs().max(1.0);
            y_pert[i] = y[i] + step;
            let z = self.problem.dynamics.output(&y_pert);
            jac.column_mut(i).copy_from(&((z - z0) / step));
            y_pert[i] = y[i];
        }
        jac
    }

    /// All dynamics and output Jacobians at one iterate, shared between the
    /// gradient and the Gauss-Newton Hessian.
    fn jacobians(&self, decision: &DVector<f64>, cache: &EvalCache) -> Result<Jacobians> {
        let p = self.problem;
        let n = p.n_knots;
        let times = p.knot_times(decision);
        let mut a_knots = Vec::with_capacity(n);
        let mut b_knots = Vec::with_capacity(n);
        let mut z_knots = Vec::with_capacity(n);
        for j in 0..n {
            let y = p.knot_state(decision, j);
            let u = p.knot_control(decision, j);
            a_knots.push(self.state_jacobian(&y, &u, &cache.f_knots[j])?);
            b_knots.push(self.control_jacobian(&y, &u, &cache.f_knots[j])?);
            z_knots.push(self.output_jacobian(&y, &cache.z_knots[j]));
        }
        let mut a_mids = Vec::with_capacity(n - 1);
        let mut b_mids = Vec::with_capacity(n - 1);
        for j in 0..n - 1 {
            let h = times[j + 1] - times[j];
            let y_j = p.knot_state(decision, j);
            let y_next = p.knot_state(decision, j + 1);
            let (mid_state, _) =
                hermite_midpoint(&y_j, &y_next, &cache.f_knots[j], &cache.f_knots[j + 1], h);
            let mid_control =
                (p.knot_control(decision, j) + p.knot_control(decision, j + 1)) * 0.5;
            a_mids.push(self.state_jacobian(&mid_state, &mid_control, &cache.f_mids[j])?);
            b_mids.push(self.control_jacobian(&mid_state, &mid_control, &cache.f_mids[j])?);
        }
        Ok(Jacobians { a_knots, b_knots, z_knots, a_mids, b_mids })
    }

    /// Merit gradient assembled from precomputed Jacobians. The free-t_f
    /// entry is left for the caller; fixed entries are zeroed so descent
    /// directions stay consistent with the projection.
    fn gradient_with(
        &self,
        decision: &DVector<f64>,
        cache: &EvalCache,
        jacs: &Jacobians,
    ) -> DVector<f64> {
        let p = self.problem;
        let n = p.n_knots;
        let nc = p.dim_control();
        let times = p.knot_times(decision);
        let mut grad = DVector::zeros(decision.len());

        // Tracking-cost terms: d/dY [ (z - r)' W (z - r) ] = 2 Z' W (z - r).
        for j in 0..n {
            let mut weighted = DVector::zeros(cache.z_knots[j].len());
            for i in 0..weighted.len() {
                weighted[i] =
                    2.0 * p.cost.weights[i] * (cache.z_knots[j][i] - p.reference[j][i]);
            }
            let contribution = jacs.z_knots[j].transpose() * weighted;
            add_rows(&mut grad, p.y_index(j), &contribution);
        }

        // Path terms: d psi/d g_i = -max(0, eta_i - mu g_i); g = [u-lo, hi-u].
        for j in 0..n {
            let eta = &self.multipliers.path[j];
            let g = &cache.path_values[j];
            for c in 0..nc {
                let sigma_lo = (eta[2 * c] - self.mu * g[2 * c]).max(0.0);
                let sigma_hi = (eta[2 * c + 1] - self.mu * g[2 * c + 1]).max(0.0);
                grad[p.u_index(j) + c] += -sigma_lo + sigma_hi;
            }
        }

        // Defect terms. With w = mu d - lambda (the gradient of the AL term
        // in d) and t1 = A_mid' w:
        //   dY_j   += -(1.5/h) w - A_j'   (w/4 + h/8 t1) - t1/2
        //   dY_j+1 += +(1.5/h) w - A_j+1' (w/4 - h/8 t1) - t1/2
        //   dU_j   += -B_j'  (w/4 + h/8 t1) - B_mid' w / 2
        //   dU_j+1 += -B_j+1'(w/4 - h/8 t1) - B_mid' w / 2
        for j in 0..n - 1 {
            let h = times[j + 1] - times[j];
            let lambda = &self.multipliers.defects[j];
            let w = &cache.defects[j] * self.mu - lambda;
            if w.amax() == 0.0 {
                continue;
            }
            let t1 = jacs.a_mids[j].transpose() * &w;
            let b_mid_w_half = jacs.b_mids[j].transpose() * &w * 0.5;

            let lead = &w * (1.5 / h);
            let probe_j = &w * 0.25 + &t1 * (h / 8.0);
            let probe_next = &w * 0.25 - &t1 * (h / 8.0);

            let gy_j = -&lead - jacs.a_knots[j].transpose() * &probe_j - &t1 * 0.5;
            let gy_next = &lead - jacs.a_knots[j + 1].transpose() * &probe_next - &t1 * 0.5;
            let gu_j = -(jacs.b_knots[j].transpose() * &probe_j) - &b_mid_w_half;
            let gu_next = -(jacs.b_knots[j + 1].transpose() * &probe_next) - &b_mid_w_half;

            add_rows(&mut grad, p.y_index(j), &gy_j);
            add_rows(&mut grad, p.y_index(j + 1), &gy_next);
            add_rows(&mut grad, p.u_index(j), &gu_j);
            add_rows(&mut grad, p.u_index(j + 1), &gu_next);
        }

        for (i, &(lo, hi)) in self.bounds.iter().enumerate() {
            if lo == hi {
                grad[i] = 0.0;
            }
        }
        grad
    }

    /// Merit gradient; computes Jacobians internally and handles a free
    /// final time by differencing the whole merit (receding-horizon mode
    /// pins t_f, so that path is rare).
    fn gradient(&self, decision: &DVector<f64>, cache: &EvalCache) -> Result<DVector<f64>> {
        let jacs = self.jacobians(decision, cache)?;
        let mut grad = self.gradient_with(decision, cache, &jacs);
        let tf_idx = self.problem.t_f_index();
        if self.bounds[tf_idx].0 < self.bounds[tf_idx].1 {
            let step = self.fd_step * decision[tf_idx].abs().max(1.0);
            let mut trial = decision.clone();
            trial[tf_idx] += step;
            grad[tf_idx] = (self.eval_full(&trial)?.total - cache.total) / step;
        }
        Ok(grad)
    }

    /// Gauss-Newton Hessian of the merit: 2 Z'WZ from the tracking cost,
    /// mu D'D per defect (D the defect Jacobian assembled from the dynamics
    /// Jacobians), and mu on the control diagonal per active inequality.
    /// Terms carrying second derivatives of the dynamics are dropped, which
    /// keeps the model positive semidefinite.
    fn gauss_newton_hessian(
        &self,
        decision: &DVector<f64>,
        cache: &EvalCache,
        jacs: &Jacobians,
    ) -> DMatrix<f64> {
        let p = self.problem;
        let n = p.n_knots;
        let ns = p.dim_state();
        let nc = p.dim_control();
        let times = p.knot_times(decision);
        let dim = decision.len();
        let mut hess = DMatrix::zeros(dim, dim);

        for j in 0..n {
            let z = &jacs.z_knots[j];
            let y0 = p.y_index(j);
            for out in 0..z.nrows() {
                let weight = 2.0 * p.cost.weights[out];
                if weight == 0.0 {
                    continue;
                }
                for r in 0..ns {
                    let zr = z[(out, r)];
                    if zr == 0.0 {
                        continue;
                    }
                    for c in 0..ns {
                        hess[(y0 + r, y0 + c)] += weight * zr * z[(out, c)];
                    }
                }
            }
            let eta = &self.multipliers.path[j];
            let g = &cache.path_values[j];
            for c in 0..nc {
                let mut active = 0.0;
                if eta[2 * c] - self.mu * g[2 * c] > 0.0 {
                    active += self.mu;
                }
                if eta[2 * c + 1] - self.mu * g[2 * c + 1] > 0.0 {
                    active += self.mu;
                }
                let idx = p.u_index(j) + c;
                hess[(idx, idx)] += active;
            }
        }

        let identity = DMatrix::<f64>::identity(ns, ns);
        for j in 0..n - 1 {
            let h = times[j + 1] - times[j];
            let a_m = &jacs.a_mids[j];
            let b_m = &jacs.b_mids[j];
            let d_yj = &identity * (-1.5 / h)
                - &jacs.a_knots[j] * 0.25
                - a_m * 0.5
                - a_m * &jacs.a_knots[j] * (h / 8.0);
            let d_yn = &identity * (1.5 / h)
                - &jacs.a_knots[j + 1] * 0.25
                - a_m * 0.5
                + a_m * &jacs.a_knots[j + 1] * (h / 8.0);
            let d_uj = -(&jacs.b_knots[j] * 0.25) - a_m * &jacs.b_knots[j] * (h / 8.0) - b_m * 0.5;
            let d_un = -(&jacs.b_knots[j + 1] * 0.25) + a_m * &jacs.b_knots[j + 1] * (h / 8.0)
                - b_m * 0.5;
            let blocks: [(usize, &DMatrix<f64>); 4] = [
                (p.y_index(j), &d_yj),
                (p.u_index(j), &d_uj),
                (p.y_index(j + 1), &d_yn),
                (p.u_index(j + 1), &d_un),
            ];
            for &(r0, dr) in &blocks {
                for &(c0, dc) in &blocks {
                    let product = dr.transpose() * dc * self.mu;
                    for r in 0..product.nrows() {
                        for c in 0..product.ncols() {
                            hess[(r0 + r, c0 + c)] += product[(r, c)];
                        }
                    }
                }
            }
        }
        hess
    }
}

struct Jacobians {
    a_knots: Vec<DMatrix<f64>>,
    b_knots: Vec<DMatrix<f64>>,
    z_knots: Vec<DMatrix<f64>>,
    a_mids: Vec<DMatrix<f64>>,
    b_mids: Vec<DMatrix<f64>>,
}

fn add_rows(grad: &mut DVector<f64>, start: usize, rhs: &DVector<f64>) {
    for (i, v) in rhs.iter().enumerate() {
        grad[start + i] += v;
    }
}

fn project(x: &mut DVector<f64>, bounds: &[(f64, f64)]) {
    for (xi, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *xi = xi.clamp(lo, hi);
    }
}

fn projected_gradient_norm(x: &DVector<f64>, grad: &DVector<f64>, bounds: &[(f64, f64)]) -> f64 {
    let mut step = x - grad;
    project(&mut step, bounds);
    (step - x).amax()
}

/// L-BFGS two-loop recursion; returns the quasi-Newton descent direction.
fn lbfgs_direction(
    grad: &DVector<f64>,
    history: &VecDeque<(DVector<f64>, DVector<f64>)>,
) -> DVector<f64> {
    let mut q = grad.clone();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y) in history.iter().rev() {
        let rho = 1.0 / y.dot(s);
        let alpha = rho * s.dot(&q);
        q -= y * alpha;
        alphas.push((rho, alpha));
    }
    if let Some((s, y)) = history.back() {
        q *= s.dot(y) / y.dot(y);
    }
    for ((s, y), &(rho, alpha)) in history.iter().zip(alphas.iter().rev()) {
        let beta = rho * y.dot(&q);
        q += s * (alpha - beta);
    }
    -q
}

enum InnerStatus {
    Stationary,
    IterationsExhausted,
    LineSearchFailed,
}

struct InnerOutcome {
    decision: DVector<f64>,
    cache: EvalCache,
    stationarity: f64,
    iterations: usize,
    status: InnerStatus,
}

/// Armijo backtracking along `direction` from `x`; `None` when no
/// acceptable step exists above `opts.min_step`. Trial points that throw
/// the dynamics into non-finite territory just shrink the step.
fn armijo_search(
    merit: &Merit<'_, '_>,
    x: &DVector<f64>,
    cache_total: f64,
    grad: &DVector<f64>,
    direction: &DVector<f64>,
    opts: &SolverOptions,
) -> Option<(DVector<f64>, EvalCache)> {
    let mut alpha = 1.0;
    while alpha >= opts.min_step {
        let mut trial = x + direction * alpha;
        project(&mut trial, merit.bounds);
        let step = &trial - x;
        let slope = grad.dot(&step);
        match merit.eval_full(&trial) {
            Ok(trial_cache)
                if slope < 0.0
                    && trial_cache.total <= cache_total + opts.armijo_slope * slope =>
            {
                return Some((trial, trial_cache));
            }
            _ => alpha *= 0.5,
        }
    }
    None
}

/// Entries allowed to move in the Newton step: inside their bounds, or at a
/// bound with the gradient pulling inward.
fn free_entries(x: &DVector<f64>, grad: &DVector<f64>, bounds: &[(f64, f64)]) -> Vec<usize> {
    let mut free = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let (lo, hi) = bounds[i];
        if lo >= hi {
            continue;
        }
        let margin = 1e-10 * x[i].abs().max(1.0);
        let at_lower = x[i] <= lo + margin && grad[i] >= 0.0;
        let at_upper = x[i] >= hi - margin && grad[i] <= 0.0;
        if !at_lower && !at_upper {
            free.push(i);
        }
    }
    free
}

/// Projected Gauss-Newton for a fixed final time: the defect Jacobians are
/// already available, so each iteration solves the reduced normal equations
/// on the free set. Newton steps are invariant to the penalty scale, which
/// keeps large `mu` subproblems well conditioned.
fn minimize_newton(
    merit: &Merit<'_, '_>,
    start: DVector<f64>,
    tol: f64,
    opts: &SolverOptions,
) -> Result<InnerOutcome> {
    let mut x = start;
    project(&mut x, merit.bounds);
    let mut cache = merit.eval_full(&x)?;
    // Levenberg-Marquardt damping, dimensionless relative to the Hessian
    // diagonal. Adapted every step by the gain ratio (actual merit decrease
    // over the decrease the quadratic model predicted), so full Gauss-Newton
    // steps are only taken where the model has earned trust.
    let mut lambda = 0.0_f64;
    for iteration in 0..opts.max_inner {
        let jacs = merit.jacobians(&x, &cache)?;
        let grad = merit.gradient_with(&x, &cache, &jacs);
        let stationarity = projected_gradient_norm(&x, &grad, merit.bounds);
        if stationarity <= tol {
            return Ok(InnerOutcome {
                decision: x,
                cache,
                stationarity,
                iterations: iteration,
                status: InnerStatus::Stationary,
            });
        }

        let hessian = merit.gauss_newton_hessian(&x, &cache, &jacs);
        let free = free_entries(&x, &grad, merit.bounds);
        if free.is_empty() {
            // Nothing may move, yet the projected gradient is above the
            // tolerance: the active-set margin disagrees with the projection.
            return Ok(InnerOutcome {
                decision: x,
                cache,
                stationarity,
                iterations: iteration,
                status: InnerStatus::LineSearchFailed,
            });
        }
        let nf = free.len();
        let mut h_ff = DMatrix::zeros(nf, nf);
        let mut g_f = DVector::zeros(nf);
        for (r, &i) in free.iter().enumerate() {
            g_f[r] = grad[i];
            for (c, &k) in free.iter().enumerate() {
                h_ff[(r, c)] = hessian[(i, k)];
            }
        }
        let scale = h_ff.diagonal().amax().max(1.0);

        // Retry with stronger damping until a step both factorizes and
        // lowers the merit; the ceiling turns hopeless models into an
        // explicit no-progress exit instead of an endless spin.
        loop {
            if lambda > 1e12 {
                return Ok(InnerOutcome {
                    decision: x,
                    cache,
                    stationarity,
                    iterations: iteration,
                    status: InnerStatus::LineSearchFailed,
                });
            }
            let mut damped = h_ff.clone();
            for d in 0..nf {
                damped[(d, d)] += lambda * scale;
            }
            let step_f = match damped.cholesky().map(|chol| chol.solve(&(-&g_f))) {
                Some(p) if p.iter().all(|v| v.is_finite()) => p,
                _ => {
                    lambda = escalate(lambda);
                    continue;
                }
            };
            let mut trial = x.clone();
            for (r, &i) in free.iter().enumerate() {
                trial[i] += step_f[r];
            }
            project(&mut trial, merit.bounds);
            let step = &trial - &x;
            // Model decrease for the step actually taken (post-projection),
            // judged against the undamped quadratic model.
            let predicted = -(grad.dot(&step) + 0.5 * step.dot(&(&hessian * &step)));
            let trial_cache = match merit.eval_full(&trial) {
                Ok(c) => c,
                Err(_) => {
                    lambda = escalate(lambda);
                    continue;
                }
            };
            let actual = cache.total - trial_cache.total;
            let rho = if predicted > 0.0 { actual / predicted } else { -1.0 };
            log::trace!(
                "newton inner {iteration}: merit {:.6e} -> {:.6e} stat={:.3e} |step|={:.3e} free={nf} lambda={lambda:.1e} rho={rho:.2e}",
                cache.total,
                trial_cache.total,
                stationarity,
                step.norm(),
            );
            if actual > 0.0 && rho > 1e-4 {
                x = trial;
                cache = trial_cache;
                if rho > 0.75 {
                    lambda /= 3.0;
                    if lambda < 1e-12 {
                        lambda = 0.0;
                    }
                } else if rho < 0.25 {
                    lambda = escalate(lambda);
                }
                break;
            }
            lambda = escalate(lambda);
        }
    }
    let jacs = merit.jacobians(&x, &cache)?;
    let grad = merit.gradient_with(&x, &cache, &jacs);
    let stationarity = projected_gradient_norm(&x, &grad, merit.bounds);
    Ok(InnerOutcome {
        decision: x,
        cache,
        stationarity,
        iterations: opts.max_inner,
        status: InnerStatus::IterationsExhausted,
    })
}

fn escalate(lambda: f64) -> f64 {
    if lambda == 0.0 {
        1e-8
    } else {
        lambda * 10.0
    }
}

/// Projected L-BFGS fallback used when the final time is free (the Newton
/// model does not cover the t_f column).
fn minimize_lbfgs(
    merit: &Merit<'_, '_>,
    start: DVector<f64>,
    tol: f64,
    opts: &SolverOptions,
) -> Result<InnerOutcome> {
    let mut x = start;
    project(&mut x, merit.bounds);
    let mut cache = merit.eval_full(&x)?;
    let mut grad = merit.gradient(&x, &cache)?;
    let mut history: VecDeque<(DVector<f64>, DVector<f64>)> = VecDeque::new();
    for iteration in 0..opts.max_inner {
        let stationarity = projected_gradient_norm(&x, &grad, merit.bounds);
        if stationarity <= tol {
            return Ok(InnerOutcome {
                decision: x,
                cache,
                stationarity,
                iterations: iteration,
                status: InnerStatus::Stationary,
            });
        }
        let mut direction = lbfgs_direction(&grad, &history);
        if grad.dot(&direction) >= -1e-14 * grad.norm() * direction.norm() {
            direction = -&grad;
        }

        let Some((trial, trial_cache)) = armijo_search(merit, &x, cache.total, &grad, &direction, opts)
        else {
            return Ok(InnerOutcome {
                decision: x,
                cache,
                stationarity,
                iterations: iteration,
                status: InnerStatus::LineSearchFailed,
            });
        };

        let grad_new = merit.gradient(&trial, &trial_cache)?;
        let s = &trial - &x;
        let y = &grad_new - &grad;
        if s.dot(&y) > 1e-10 * s.norm() * y.norm() {
            history.push_back((s, y));
            if history.len() > opts.lbfgs_memory {
                history.pop_front();
            }
        }
        x = trial;
        cache = trial_cache;
        grad = grad_new;
    }
    let stationarity = projected_gradient_norm(&x, &grad, merit.bounds);
    Ok(InnerOutcome {
        decision: x,
        cache,
        stationarity,
        iterations: opts.max_inner,
        status: InnerStatus::IterationsExhausted,
    })
}

/// Default starting decision: hold the controls at (clamped) zero and roll
/// the dynamics out from the pinned initial state.
pub fn cold_start_decision(problem: &CollocationProblem<'_>) -> Result<DVector<f64>> {
    let ns = problem.dim_state();
    let nc = problem.dim_control();
    let (lo_t, hi_t) = problem.t_f_bounds;
    let t_f = if hi_t.is_finite() { 0.5 * (lo_t + hi_t) } else { lo_t };
    let mut decision = DVector::zeros(problem.decision_len());
    decision[problem.t_f_index()] = t_f;

    let u0 = DVector::from_iterator(
        nc,
        problem.control_bounds.iter().map(|&(lo, hi)| 0.0_f64.clamp(lo, hi)),
    );
    for j in 0..problem.n_knots {
        decision.rows_mut(problem.u_index(j), nc).copy_from(&u0);
    }

    let mut state = match &problem.initial_state {
        Some(x0) => x0.clone(),
        None => DVector::zeros(ns),
    };
    decision.rows_mut(problem.y_index(0), ns).copy_from(&state);
    for j in 0..problem.n_knots - 1 {
        let h = (problem.fractions[j + 1] - problem.fractions[j]) * t_f;
        state = rk4_vec(|y| problem.dynamics.derivative(y, &u0), &state, h)?;
        decision.rows_mut(problem.y_index(j + 1), ns).copy_from(&state);
    }
    Ok(decision)
}

/// Solve the transcribed problem with an augmented-Lagrangian outer loop.
///
/// Returns the best decision found together with independently measured
/// feasibility and stationarity; `status` explains early exits. `Err` is
/// reserved for dynamics failures (non-finite evaluations at an accepted
/// point, dimension mismatches).
pub fn solve_nlp(
    problem: &CollocationProblem<'_>,
    warm_start: Option<WarmStart>,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    problem.validate()?;
    let bounds = problem.decision_bounds();
    let (mut decision, mut multipliers) = match warm_start {
        Some(w) => (w.decision, w.multipliers),
        None => (cold_start_decision(problem)?, Multipliers::zeros(problem)),
    };
    if decision.len() != problem.decision_len()
        || multipliers.defects.len() != problem.n_knots - 1
        || multipliers.path.len() != problem.n_knots
    {
        return Err(SimError::config("warm start dimensions do not match the problem"));
    }
    project(&mut decision, &bounds);

    let mut mu = opts.initial_penalty;
    let mut inner_tol = (1e-2_f64).max(opts.stationarity_tol);
    let mut best_feasibility = f64::INFINITY;
    let mut stalls = 0;
    let mut total_inner = 0;
    let mut status = SolveStatus::MaxIterations;
    let mut stationarity = f64::INFINITY;
    let mut eq_viol = f64::INFINITY;
    let mut ineq_viol = f64::INFINITY;

    let tf_idx = problem.t_f_index();
    let t_f_fixed = bounds[tf_idx].0 >= bounds[tf_idx].1;

    let mut outer = 0;
    while outer < opts.max_outer {
        outer += 1;
        let merit = Merit {
            problem,
            multipliers: &multipliers,
            mu,
            fd_step: opts.fd_step,
            bounds: &bounds,
        };
        let inner = if t_f_fixed {
            minimize_newton(&merit, decision, inner_tol, opts)?
        } else {
            minimize_lbfgs(&merit, decision, inner_tol, opts)?
        };
        decision = inner.decision;
        stationarity = inner.stationarity;
        total_inner += inner.iterations;
        eq_viol = inner.cache.max_equality_violation();
        ineq_viol = inner.cache.max_inequality_violation();
        let feasibility = eq_viol.max(ineq_viol);
        log::debug!(
            "solve_nlp outer {outer}: J={:.6e} eq={eq_viol:.3e} ineq={ineq_viol:.3e} \
             stat={stationarity:.3e} mu={mu:.1e} inner={}",
            inner.cache.objective(),
            inner.iterations,
        );

        let feasible = eq_viol <= opts.eq_tol && ineq_viol <= opts.ineq_tol;
        if feasible && stationarity <= opts.stationarity_tol {
            status = SolveStatus::Converged;
            break;
        }
        if matches!(inner.status, InnerStatus::LineSearchFailed)
            && !feasible
            && mu >= opts.max_penalty
        {
            status = SolveStatus::LineSearchFailure;
            break;
        }

        // "Good enough" progress never demands contraction below the
        // feasibility tolerances themselves, otherwise rounding noise at
        // machine-level feasibility triggers pointless penalty growth.
        let progress_floor = (0.25 * best_feasibility).max(opts.eq_tol.min(opts.ineq_tol));
        if feasibility <= progress_floor || feasible {
            // Good progress: first-order multiplier update, tighter inner
            // tolerance.
            for (lambda, defect) in multipliers.defects.iter_mut().zip(&inner.cache.defects) {
                *lambda -= defect * mu;
            }
            for (eta, g) in multipliers.path.iter_mut().zip(&inner.cache.path_values) {
                for i in 0..eta.len() {
                    eta[i] = (eta[i] - mu * g[i]).max(0.0);
                }
            }
            best_feasibility = feasibility.min(best_feasibility);
            inner_tol = (inner_tol * 0.2).max(opts.stationarity_tol);
            stalls = 0;
        } else {
            if mu >= opts.max_penalty {
                stalls += 1;
                if stalls >= 3 {
                    status = SolveStatus::Infeasible;
                    break;
                }
            }
            mu = (mu * opts.penalty_growth).min(opts.max_penalty);
        }
    }

    Ok(SolveResult {
        objective: problem.evaluate_cost(&decision),
        decision,
        status,
        outer_iterations: outer,
        inner_iterations: total_inner,
        max_equality_violation: eq_viol,
        max_inequality_violation: ineq_viol,
        stationarity,
        multipliers,
    })
}
