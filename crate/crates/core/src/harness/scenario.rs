//! Closed-loop scenario execution: dynamics at `sim_dt`, receding-horizon
//! controller at `control_dt` with zero-order-held inputs, trace recording
//! at a configurable decimation.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::aero::circulation;
use crate::collocation::RecedingHorizonController;
use crate::dynamics::{euler_angles, FlyerModel, FullState};
use crate::error::{Result, SimError};

use super::config::ScenarioConfig;
use super::trace::RunTrace;

/// Any flattened state component beyond this magnitude aborts the run as a
/// numerical blow-up.
pub const BLOWUP_LIMIT: f64 = 1e6;

/// How a run ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    /// The run stopped early; the trace holds everything recorded up to the
    /// failure.
    Aborted { step: usize, reason: String },
}

impl RunStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, RunStatus::Completed)
    }
}

/// A finished (or aborted) run: the recorded trace plus summary facts.
#[derive(Debug)]
pub struct RunOutcome {
    pub trace: RunTrace,
    pub status: RunStatus,
    pub final_state: FullState,
    /// Net inertial displacement (x, y) over the run [m].
    pub displacement: [f64; 2],
    /// Controller updates where the solver failed and the previous input
    /// was held.
    pub failed_solves: usize,
    /// Total controller updates.
    pub controller_updates: usize,
}

fn trace_columns(n_controls: usize, n_stations: usize) -> Vec<String> {
    let mut columns: Vec<String> = [
        "t", "px", "py", "pz", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "wx", "wy", "wz",
        "roll", "pitch", "yaw", "fx", "fy", "fz", "mx", "my", "mz", "ref_roll", "ref_pitch",
        "ref_wx", "ref_wy", "ref_wz",
    ]
    .map(str::to_owned)
    .to_vec();
    for c in 0..n_controls {
        columns.push(format!("u_{c:02}"));
    }
    for k in 0..n_stations {
        columns.push(format!("gamma_{k:02}"));
    }
    columns.extend(
        ["span", "phase", "saturated", "solver_ok", "solver_objective", "solver_iterations",
         "solver_eq_violation"]
        .map(str::to_owned),
    );
    columns
}

/// Solver diagnostics carried between controller updates (zero-order hold,
/// like the inputs themselves).
struct HeldDiagnostics {
    solver_ok: f64,
    objective: f64,
    iterations: f64,
    eq_violation: f64,
}

/// Run one scenario to completion or abort.
///
/// Deterministic: the same configuration (including `rng_seed`) produces a
/// bitwise-identical trace. Wall-clock time never enters the trace.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunOutcome> {
    config.validate()?;
    let model = config.build_model()?;
    let controller_config = config.controller_config();
    let horizon_knots = controller_config.horizon_knots;
    let mut controller =
        RecedingHorizonController::new(&model, controller_config, config.control_bounds())?;

    let mut state = config.initial_state(model.modes());
    if config.initial.perturbation > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let p = config.initial.perturbation;
        for i in 0..3 {
            state.body.v[i] += rng.gen_range(-p..=p);
        }
        for i in 0..3 {
            state.body.omega[i] += rng.gen_range(-p..=p);
        }
    }
    let start_position = state.body.p;

    let n_controls = model.gait().num_regulators();
    let n_stations = model.modes();
    let mut trace = RunTrace::new(trace_columns(n_controls, n_stations))?;

    let steps_per_control = config.steps_per_control();
    let total_steps = config.total_steps();
    let control_dt = config.control_dt;

    let mut inputs = DVector::<f64>::zeros(n_controls);
    let mut held = HeldDiagnostics {
        solver_ok: 1.0,
        objective: 0.0,
        iterations: 0.0,
        eq_violation: 0.0,
    };
    let mut failed_solves = 0usize;
    let mut controller_updates = 0usize;
    let mut status = RunStatus::Completed;

    let mut step = 0usize;
    while step <= total_steps {
        let t = state.t;

        // Controller update on its own grid (including t = 0), except at
        // the terminal sample where no further step follows.
        if step % steps_per_control == 0 && step < total_steps {
            let reference: Vec<DVector<f64>> = (0..horizon_knots)
                .map(|k| {
                    let (roll, pitch) = config.reference.sample(t + k as f64 * control_dt);
                    DVector::from_vec(vec![roll, pitch, 0.0, 0.0, 0.0])
                })
                .collect();
            let x0 = model.flatten(&state);
            match controller.step(&x0, &reference) {
                Ok(outcome) => {
                    controller_updates += 1;
                    if !outcome.solver_ok {
                        failed_solves += 1;
                    }
                    inputs = outcome.input;
                    held = HeldDiagnostics {
                        solver_ok: if outcome.solver_ok { 1.0 } else { 0.0 },
                        objective: outcome.objective,
                        iterations: outcome.inner_iterations as f64,
                        eq_violation: outcome.max_equality_violation,
                    };
                }
                Err(SimError::ControllerFault(reason)) => {
                    status = RunStatus::Aborted { step, reason: format!("controller fault: {reason}") };
                    break;
                }
                Err(e) => return Err(e),
            }
        }

        if step % config.decimate == 0 {
            trace.push_row(record_row(&model, config, &state, &inputs, &held)?)?;
        }

        if step == total_steps {
            break;
        }

        let next = match model.rk4_step(&state, inputs.as_slice(), config.sim_dt) {
            Ok(next) => next,
            Err(SimError::NonFinite { .. }) => {
                status = RunStatus::Aborted {
                    step: step + 1,
                    reason: format!(
                        "dynamics exceeded the representable range at t = {:.4}",
                        state.t + config.sim_dt
                    ),
                };
                break;
            }
            Err(e) => return Err(e),
        };
        let blown = !next.is_finite()
            || model.flatten(&next).iter().any(|v| v.abs() > BLOWUP_LIMIT);
        if blown {
            status = RunStatus::Aborted {
                step: step + 1,
                reason: format!("state magnitude exceeded {BLOWUP_LIMIT:e} at t = {:.4}", next.t),
            };
            break;
        }
        state = next;
        step += 1;
    }

    let displacement = [
        state.body.p.x - start_position.x,
        state.body.p.y - start_position.y,
    ];
    Ok(RunOutcome {
        trace,
        status,
        final_state: state,
        displacement,
        failed_solves,
        controller_updates,
    })
}

fn record_row(
    model: &FlyerModel,
    config: &ScenarioConfig,
    state: &FullState,
    inputs: &DVector<f64>,
    held: &HeldDiagnostics,
) -> Result<Vec<f64>> {
    let evaluation = model.evaluate(state, inputs.as_slice())?;
    let angles = euler_angles(&state.body.q);
    let (ref_roll, ref_pitch) = config.reference.sample(state.t);
    let b = &state.body;
    let mut row = Vec::with_capacity(35 + inputs.len() + model.modes());
    row.extend([state.t, b.p.x, b.p.y, b.p.z, b.q[0], b.q[1], b.q[2], b.q[3]]);
    row.extend([b.v.x, b.v.y, b.v.z, b.omega.x, b.omega.y, b.omega.z]);
    row.extend([angles.roll, angles.pitch, angles.yaw]);
    let f = &evaluation.aero_wrench.force;
    let m = &evaluation.aero_wrench.moment;
    row.extend([f.x, f.y, f.z, m.x, m.y, m.z]);
    row.extend([ref_roll, ref_pitch, 0.0, 0.0, 0.0]);
    row.extend(inputs.iter().copied());
    let cfg = model.aero().config();
    for &theta in model.aero().station_thetas() {
        row.push(circulation(&state.aero.a, cfg, theta)?);
    }
    row.extend([
        evaluation.span,
        state.wing_phase,
        if evaluation.saturated { 1.0 } else { 0.0 },
        held.solver_ok,
        held.objective,
        held.iterations,
        held.eq_violation,
    ]);
    Ok(row)
}
