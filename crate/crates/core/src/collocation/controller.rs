//! Receding-horizon wrapper around the collocation solver.
//!
//! Every control period the controller transcribes a short horizon
//! starting at the measured state, warm-starts from the previous solution
//! shifted by one knot, solves, and applies the first knot's control. The
//! final time is pinned to `(horizon_knots - 1) * control_dt`, matching a
//! fixed-rate control loop.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dynamics::rk4_vec;
use crate::error::{Result, SimError};

use super::solver::{solve_nlp, SolveStatus, SolverOptions, WarmStart};
use super::{CollocationProblem, Dynamics, TrackingCost};

/// Receding-horizon parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    /// Knots per horizon (the horizon spans `(horizon_knots - 1)` control
    /// periods).
    pub horizon_knots: usize,
    /// Control update period [s].
    pub control_dt: f64,
    /// Diagonal tracking weights over z = [roll, pitch, omega].
    pub weights: Vec<f64>,
    /// Consecutive solver failures tolerated before declaring a fault.
    pub max_consecutive_failures: usize,
    pub solver: SolverOptions,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            horizon_knots: 5,
            control_dt: 0.005,
            weights: vec![10.0, 10.0, 1.0, 1.0, 1.0],
            max_consecutive_failures: 3,
            solver: SolverOptions::default(),
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon_knots < 2 {
            return Err(SimError::config("controller.horizon_knots must be >= 2"));
        }
        if !(self.control_dt > 0.0) {
            return Err(SimError::config("controller.control_dt must be positive"));
        }
        if self.weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(SimError::config("controller.weights must be nonnegative"));
        }
        Ok(())
    }

    pub fn horizon_duration(&self) -> f64 {
        (self.horizon_knots as f64 - 1.0) * self.control_dt
    }
}

/// Result of one controller update.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// Regulator inputs to hold until the next update.
    pub input: DVector<f64>,
    /// False when the solver failed and the previous input was reused.
    pub solver_ok: bool,
    pub objective: f64,
    pub inner_iterations: usize,
    pub max_equality_violation: f64,
    pub status: SolveStatus,
}

/// Stateful receding-horizon controller.
pub struct RecedingHorizonController<'a> {
    dynamics: &'a dyn Dynamics,
    config: ControllerConfig,
    control_bounds: Vec<(f64, f64)>,
    warm: Option<WarmStart>,
    prev_input: DVector<f64>,
    consecutive_failures: usize,
}

impl<'a> RecedingHorizonController<'a> {
    pub fn new(
        dynamics: &'a dyn Dynamics,
        config: ControllerConfig,
        control_bounds: Vec<(f64, f64)>,
    ) -> Result<Self> {
        config.validate()?;
        if config.weights.len() != dynamics.dim_output() {
            return Err(SimError::config("controller.weights length must match the tracked output"));
        }
        if control_bounds.len() != dynamics.dim_control() {
            return Err(SimError::config("control bound count must match the control dimension"));
        }
        let prev_input = DVector::zeros(dynamics.dim_control());
        Ok(RecedingHorizonController {
            dynamics,
            config,
            control_bounds,
            warm: None,
            prev_input,
            consecutive_failures: 0,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    /// Drop warm-start data (e.g. after an external state reset).
    pub fn reset(&mut self) {
        self.warm = None;
        self.prev_input.fill(0.0);
        self.consecutive_failures = 0;
    }

    /// Shift the previous solution one knot earlier and extrapolate the
    /// freed final knot by integrating the dynamics under the held last
    /// control.
    fn shifted_warm(&self, problem: &CollocationProblem<'_>, x0: &DVector<f64>) -> WarmStart {
        let prev = self.warm.as_ref().expect("shifted_warm requires a stored solution");
        let n = problem.n_knots;
        let ns = problem.dim_state();
        let nc = problem.dim_control();
        let mut decision = prev.decision.clone();
        for j in 0..n - 1 {
            let y_next = prev.decision.rows(problem.y_index(j + 1), ns).into_owned();
            decision.rows_mut(problem.y_index(j), ns).copy_from(&y_next);
            let u_next = prev.decision.rows(problem.u_index(j + 1), nc).into_owned();
            decision.rows_mut(problem.u_index(j), nc).copy_from(&u_next);
        }
        let last_y = decision.rows(problem.y_index(n - 2), ns).into_owned();
        let last_u = decision.rows(problem.u_index(n - 1), nc).into_owned();
        let h = self.config.control_dt;
        let extrapolated = rk4_vec(|y| self.dynamics.derivative(y, &last_u), &last_y, h)
            .unwrap_or_else(|_| last_y.clone());
        decision.rows_mut(problem.y_index(n - 1), ns).copy_from(&extrapolated);
        decision.rows_mut(problem.y_index(0), ns).copy_from(x0);

        let mut multipliers = prev.multipliers.clone();
        multipliers.defects.rotate_left(1);
        if let Some(last) = multipliers.defects.last_mut() {
            *last = DVector::zeros(ns);
        }
        multipliers.path.rotate_left(1);
        WarmStart { decision, multipliers }
    }

    /// Compute the regulator inputs for the current state against a
    /// per-knot reference (length `horizon_knots`).
    pub fn step(&mut self, x0: &DVector<f64>, reference: &[DVector<f64>]) -> Result<StepOutcome> {
        if reference.len() != self.config.horizon_knots {
            return Err(SimError::config(format!(
                "reference length {} != horizon_knots {}",
                reference.len(),
                self.config.horizon_knots
            )));
        }
        let mut problem = CollocationProblem::fixed_time(
            self.dynamics,
            self.config.horizon_knots,
            self.config.horizon_duration(),
            reference.to_vec(),
            TrackingCost::new(self.config.weights.clone())?,
            self.control_bounds.clone(),
        )?;
        problem.initial_state = Some(x0.clone());

        let warm = self.warm.as_ref().map(|_| self.shifted_warm(&problem, x0));
        // A solve that wanders into non-finite dynamics (e.g. the plant is
        // already diverging) is a failed update, not a hard error: the
        // supervisor below decides when repeated failures become a fault.
        let solve = match solve_nlp(&problem, warm, &self.config.solver) {
            Ok(result) => Some(result),
            Err(e @ SimError::NonFinite { .. }) => {
                log::warn!("receding-horizon solve aborted: {e}");
                None
            }
            Err(e) => return Err(e),
        };

        match solve {
            Some(result) if result.is_feasible(&self.config.solver) => {
                let mut input = problem.knot_control(&result.decision, 0);
                // The solver leaves stroke constraints satisfied only to
                // ineq_tol; the actuator interface saturates exactly.
                for (c, &(lo, hi)) in self.control_bounds.iter().enumerate() {
                    input[c] = input[c].clamp(lo, hi);
                }
                self.warm = Some(WarmStart {
                    decision: result.decision.clone(),
                    multipliers: result.multipliers.clone(),
                });
                self.prev_input = input.clone();
                self.consecutive_failures = 0;
                Ok(StepOutcome {
                    input,
                    solver_ok: true,
                    objective: result.objective,
                    inner_iterations: result.inner_iterations,
                    max_equality_violation: result.max_equality_violation,
                    status: result.status,
                })
            }
            result => {
                self.consecutive_failures += 1;
                self.warm = None;
                let status =
                    result.as_ref().map_or(SolveStatus::LineSearchFailure, |r| r.status);
                log::warn!(
                    "receding-horizon solve failed ({:?}), reusing previous input ({} consecutive)",
                    status,
                    self.consecutive_failures
                );
                if self.consecutive_failures > self.config.max_consecutive_failures {
                    return Err(SimError::ControllerFault(format!(
                        "{} consecutive solver failures, last status {status:?}",
                        self.consecutive_failures
                    )));
                }
                Ok(StepOutcome {
                    input: self.prev_input.clone(),
                    solver_ok: false,
                    objective: result.as_ref().map_or(f64::INFINITY, |r| r.objective),
                    inner_iterations: result.as_ref().map_or(0, |r| r.inner_iterations),
                    max_equality_violation: result
                        .as_ref()
                        .map_or(f64::INFINITY, |r| r.max_equality_violation),
                    status,
                })
            }
        }
    }
}
