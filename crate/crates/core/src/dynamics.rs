//! Coupled rigid-body / aerodynamic dynamics and fixed-step integration.
//!
//! The full state couples a six-degree-of-freedom rigid body (position and
//! velocity in an inertial frame with z pointing down, attitude as a
//! body-to-inertial quaternion, body-frame angular velocity) with the
//! lifting-line aerodynamic state and the wing-stroke phase. One monolithic
//! derivative function assembles, in order: joint gait sample, station
//! geometry, body-motion airflow, the aerodynamic coefficient/lag rates,
//! the integrated aerodynamic wrench, optional flapping-recoil reactions,
//! and the Newton-Euler equations. Everything integrates together under
//! classical RK4 so the aerodynamic lag states see the same stage
//! evaluations as the body.
//!
//! Quaternions are stored as raw 4-vectors (w, x, y, z): derivative
//! evaluation tolerates slightly non-unit quaternions by normalizing only
//! where a rotation matrix is formed, which keeps the dynamics smooth for
//! gradient-based trajectory optimization; the integrator renormalizes
//! once per accepted step.

use nalgebra::{DVector, Matrix3, Quaternion, UnitQuaternion, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::aero::{AeroConfig, AeroModel, AeroRates, AeroState, ForceMoment};
use crate::error::{Result, SimError};
use crate::kinematics::{
    apply_body_motion, current_span, gait_sample_at_phase, segment_states, station_geometry,
    GaitConfig, SpanConfig, TAU,
};

/// Rigid-body state. `q` maps body coordinates into the inertial frame and
/// is kept within 1e-9 of unit length by the stepper.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyState {
    /// Inertial position [m]; z is positive downward.
    pub p: Vector3<f64>,
    /// Body-to-inertial quaternion as (w, x, y, z).
    pub q: Vector4<f64>,
    /// Inertial velocity [m/s].
    pub v: Vector3<f64>,
    /// Body-frame angular velocity [rad/s].
    pub omega: Vector3<f64>,
}

impl BodyState {
    pub fn at_rest() -> Self {
        BodyState {
            p: Vector3::zeros(),
            q: Vector4::new(1.0, 0.0, 0.0, 0.0),
            v: Vector3::zeros(),
            omega: Vector3::zeros(),
        }
    }

    /// Unit rotation for the stored quaternion (normalizes defensively).
    pub fn rotation(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_quaternion(quat_from_wxyz(&self.q))
    }

    pub fn normalize_quaternion(&mut self) {
        let n = self.q.norm();
        if n > 0.0 {
            self.q /= n;
        }
    }
}

fn quat_from_wxyz(q: &Vector4<f64>) -> Quaternion<f64> {
    Quaternion::new(q[0], q[1], q[2], q[3])
}

/// Complete simulation state.
#[derive(Debug, Clone, PartialEq)]
pub struct FullState {
    pub body: BodyState,
    pub aero: AeroState,
    /// Wing-stroke phase [rad], unwrapped (monotone in time).
    pub wing_phase: f64,
    /// Simulation time [s].
    pub t: f64,
}

impl FullState {
    pub fn at_rest(modes: usize) -> Self {
        FullState { body: BodyState::at_rest(), aero: AeroState::zeros(modes), wing_phase: 0.0, t: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.body.p.iter().all(|v| v.is_finite())
            && self.body.q.iter().all(|v| v.is_finite())
            && self.body.v.iter().all(|v| v.is_finite())
            && self.body.omega.iter().all(|v| v.is_finite())
            && self.aero.a.iter().all(|v| v.is_finite())
            && self.aero.lag_states.iter().all(|v| v.is_finite())
            && self.aero.t_norm.iter().all(|v| v.is_finite())
            && self.wing_phase.is_finite()
            && self.t.is_finite()
    }
}

/// Time derivative of [`FullState`] (the time channel itself is implicit).
#[derive(Debug, Clone)]
pub struct StateRates {
    pub p_dot: Vector3<f64>,
    pub q_dot: Vector4<f64>,
    pub v_dot: Vector3<f64>,
    pub omega_dot: Vector3<f64>,
    pub aero: AeroRates,
    pub phase_rate: f64,
}

/// Mass properties and force-model switches of the body.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InertiaConfig {
    /// Total vehicle mass [kg].
    pub mass: f64,
    /// Principal moments of inertia (Ixx, Iyy, Izz) [kg·m^2].
    pub inertia_diag: [f64; 3],
    /// Products of inertia (Ixy, Ixz, Iyz) [kg·m^2].
    pub inertia_offdiag: [f64; 3],
    /// Gravitational acceleration [m/s^2], along inertial +z (down).
    pub gravity: f64,
    /// Apply wing inertial-reaction (recoil) forces to the body.
    pub recoil_forces: bool,
    /// Point-mass of each inner wing segment for the recoil model [kg].
    pub humerus_mass: f64,
    /// Point-mass of each outer wing segment for the recoil model [kg].
    pub radius_mass: f64,
}

impl Default for InertiaConfig {
    fn default() -> Self {
        InertiaConfig {
            mass: 0.04,
            inertia_diag: [2e-4, 1e-4, 2.5e-4],
            inertia_offdiag: [0.0; 3],
            gravity: 9.81,
            recoil_forces: true,
            humerus_mass: 0.003,
            radius_mass: 0.002,
        }
    }
}

impl InertiaConfig {
    pub fn inertia_matrix(&self) -> Matrix3<f64> {
        let [ixx, iyy, izz] = self.inertia_diag;
        let [ixy, ixz, iyz] = self.inertia_offdiag;
        Matrix3::new(ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) || !self.mass.is_finite() {
            return Err(SimError::config("body.mass must be positive"));
        }
        if !(self.gravity >= 0.0) || !self.gravity.is_finite() {
            return Err(SimError::config("body.gravity must be nonnegative"));
        }
        if self.humerus_mass < 0.0 || self.radius_mass < 0.0 {
            return Err(SimError::config("segment masses must be nonnegative"));
        }
        if self.inertia_matrix().cholesky().is_none() {
            return Err(SimError::config("body inertia tensor must be symmetric positive-definite"));
        }
        Ok(())
    }
}

/// One derivative evaluation with its force breakdown, for trace recording.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub rates: StateRates,
    /// Aerodynamic wrench alone, body frame.
    pub aero_wrench: ForceMoment,
    /// Wing inertial-reaction wrench, body frame (zero when disabled).
    pub recoil_wrench: ForceMoment,
    /// Instantaneous wingspan [m].
    pub span: f64,
    /// True if any regulator input was clipped to the stroke bound.
    pub saturated: bool,
}

/// The assembled vehicle model: gait, wing geometry, aerodynamics, and
/// mass properties.
#[derive(Debug)]
pub struct FlyerModel {
    gait: GaitConfig,
    wing: SpanConfig,
    inertia: InertiaConfig,
    aero: AeroModel,
    inertia_matrix: Matrix3<f64>,
    inertia_inverse: Matrix3<f64>,
    /// Disable the aerodynamic wrench and coefficient dynamics (used by
    /// conservation checks).
    pub aero_enabled: bool,
}

impl FlyerModel {
    pub fn new(
        gait: GaitConfig,
        wing: SpanConfig,
        inertia: InertiaConfig,
        aero_cfg: AeroConfig,
    ) -> Result<Self> {
        gait.validate()?;
        wing.validate()?;
        inertia.validate()?;
        let aero = AeroModel::new(aero_cfg)?;
        let inertia_matrix = inertia.inertia_matrix();
        let inertia_inverse = inertia_matrix
            .try_inverse()
            .ok_or_else(|| SimError::config("body inertia tensor is not invertible"))?;
        Ok(FlyerModel { gait, wing, inertia, aero, inertia_matrix, inertia_inverse, aero_enabled: true })
    }

    pub fn gait(&self) -> &GaitConfig {
        &self.gait
    }

    pub fn wing(&self) -> &SpanConfig {
        &self.wing
    }

    pub fn inertia(&self) -> &InertiaConfig {
        &self.inertia
    }

    pub fn aero(&self) -> &AeroModel {
        &self.aero
    }

    pub fn modes(&self) -> usize {
        self.aero.config().fourier_modes
    }

    /// Dimension of the flattened state vector.
    pub fn state_dim(&self) -> usize {
        14 + 4 * self.modes()
    }

    /// Evaluate the full dynamics, returning the state rates together with
    /// the force breakdown.
    pub fn evaluate(&self, state: &FullState, inputs: &[f64]) -> Result<Evaluation> {
        let m = self.modes();
        let sample = gait_sample_at_phase(&self.gait, state.wing_phase, inputs);
        let mut stations = station_geometry(&sample.wing, &self.wing, m)?;

        let rotation = state.body.rotation();
        let v_body = rotation.inverse_transform_vector(&state.body.v);
        apply_body_motion(&mut stations, &v_body, &state.body.omega);

        for (k, st) in stations.iter().enumerate() {
            if !(st.v_e.is_finite() && st.w_motion.is_finite() && st.flow_chordwise.is_finite()) {
                return Err(SimError::domain(
                    "full_dynamics",
                    format!("non-finite airflow at station {k} (theta = {:.4})", st.theta),
                ));
            }
        }

        let span = current_span(&self.wing, &sample.wing);

        let (aero_rates, aero_wrench) = if self.aero_enabled {
            let w_motion = DVector::from_fn(m, |k, _| stations[k].w_motion);
            let rates = self.aero.rhs(&state.aero, &stations, &w_motion, span)?;
            if !rates.a_dot.iter().all(|v| v.is_finite()) {
                return Err(SimError::NonFinite { context: "aero coefficient rates".into() });
            }
            let wrench = self.aero.integrate_wrench(
                &stations,
                &state.aero.a,
                &rates.a_dot,
                span,
                &Vector3::zeros(),
            )?;
            (rates, wrench)
        } else {
            (
                AeroRates {
                    a_dot: DVector::zeros(m),
                    lag_rates: nalgebra::DMatrix::zeros(m, 2),
                    t_norm_rate: DVector::zeros(m),
                },
                ForceMoment::zero(),
            )
        };

        let recoil_wrench = if self.inertia.recoil_forces {
            let segments = segment_states(&self.wing, &sample.wing, &sample.accel);
            let masses = [
                self.inertia.humerus_mass,
                self.inertia.radius_mass,
                self.inertia.humerus_mass,
                self.inertia.radius_mass,
            ];
            let mut force = Vector3::zeros();
            let mut moment = Vector3::zeros();
            for (seg, mass) in segments.iter().zip(masses) {
                let reaction = -seg.accel * mass;
                force += reaction;
                moment += seg.position.cross(&reaction);
            }
            ForceMoment { force, moment }
        } else {
            ForceMoment::zero()
        };

        let force_body = aero_wrench.force + recoil_wrench.force;
        let moment_body = aero_wrench.moment + recoil_wrench.moment;

        let gravity = Vector3::new(0.0, 0.0, self.inertia.gravity);
        let v_dot = rotation.transform_vector(&force_body) / self.inertia.mass + gravity;
        let omega = state.body.omega;
        let omega_dot =
            self.inertia_inverse * (moment_body - omega.cross(&(self.inertia_matrix * omega)));

        // q_dot = 1/2 q ⊗ (0, omega); evaluated on the raw quaternion so
        // d|q|^2/dt = 0 holds exactly even between renormalizations.
        let q = quat_from_wxyz(&state.body.q);
        let q_dot = q * Quaternion::from_imag(omega) * 0.5;

        let rates = StateRates {
            p_dot: state.body.v,
            q_dot: Vector4::new(q_dot.w, q_dot.i, q_dot.j, q_dot.k),
            v_dot,
            omega_dot,
            aero: aero_rates,
            phase_rate: TAU * self.gait.flap_frequency,
        };

        Ok(Evaluation { rates, aero_wrench, recoil_wrench, span, saturated: sample.saturated })
    }

    /// Full time derivative of the state (thin wrapper over [`Self::evaluate`]).
    pub fn full_dynamics(&self, state: &FullState, inputs: &[f64]) -> Result<StateRates> {
        Ok(self.evaluate(state, inputs)?.rates)
    }

    /// Derivative in flattened coordinates, for the integrator and the
    /// trajectory optimizer.
    pub fn derivative_vec(&self, x: &DVector<f64>, inputs: &[f64]) -> Result<DVector<f64>> {
        let state = self.unflatten(x, 0.0);
        let rates = self.full_dynamics(&state, inputs)?;
        Ok(self.flatten_rates(&rates))
    }

    /// One classical RK4 step with held inputs, renormalizing the attitude
    /// quaternion afterwards.
    pub fn rk4_step(&self, state: &FullState, inputs: &[f64], dt: f64) -> Result<FullState> {
        if !(dt > 0.0) {
            return Err(SimError::domain("rk4_step", format!("dt = {dt} must be positive")));
        }
        let x = self.flatten(state);
        let x_next = rk4_vec(|y| self.derivative_vec(y, inputs), &x, dt)?;
        let mut next = self.unflatten(&x_next, state.t + dt);
        next.body.normalize_quaternion();
        Ok(next)
    }

    /// Flatten a state into the integrator layout:
    /// `[p(3), q(4), v(3), omega(3), a(m), lag1(m), lag2(m), t_norm(m), phase]`.
    /// Simulation time is carried separately (the dynamics are
    /// time-invariant; the gait reads the phase channel).
    pub fn flatten(&self, state: &FullState) -> DVector<f64> {
        let m = self.modes();
        let mut x = DVector::zeros(self.state_dim());
        x.fixed_rows_mut::<3>(0).copy_from(&state.body.p);
        x.fixed_rows_mut::<4>(3).copy_from(&state.body.q);
        x.fixed_rows_mut::<3>(7).copy_from(&state.body.v);
        x.fixed_rows_mut::<3>(10).copy_from(&state.body.omega);
        x.rows_mut(13, m).copy_from(&state.aero.a);
        x.rows_mut(13 + m, m).copy_from(&state.aero.lag_states.column(0));
        x.rows_mut(13 + 2 * m, m).copy_from(&state.aero.lag_states.column(1));
        x.rows_mut(13 + 3 * m, m).copy_from(&state.aero.t_norm);
        x[13 + 4 * m] = state.wing_phase;
        x
    }

    /// Inverse of [`Self::flatten`]; the quaternion is taken as stored
    /// (not renormalized).
    pub fn unflatten(&self, x: &DVector<f64>, t: f64) -> FullState {
        let m = self.modes();
        debug_assert_eq!(x.len(), self.state_dim());
        let mut lag_states = nalgebra::DMatrix::zeros(m, 2);
        lag_states.column_mut(0).copy_from(&x.rows(13 + m, m));
        lag_states.column_mut(1).copy_from(&x.rows(13 + 2 * m, m));
        FullState {
            body: BodyState {
                p: x.fixed_rows::<3>(0).into(),
                q: x.fixed_rows::<4>(3).into(),
                v: x.fixed_rows::<3>(7).into(),
                omega: x.fixed_rows::<3>(10).into(),
            },
            aero: AeroState {
                a: x.rows(13, m).into(),
                lag_states,
                t_norm: x.rows(13 + 3 * m, m).into(),
            },
            wing_phase: x[13 + 4 * m],
            t,
        }
    }

    pub fn flatten_rates(&self, rates: &StateRates) -> DVector<f64> {
        let m = self.modes();
        let mut x = DVector::zeros(self.state_dim());
        x.fixed_rows_mut::<3>(0).copy_from(&rates.p_dot);
        x.fixed_rows_mut::<4>(3).copy_from(&rates.q_dot);
        x.fixed_rows_mut::<3>(7).copy_from(&rates.v_dot);
        x.fixed_rows_mut::<3>(10).copy_from(&rates.omega_dot);
        x.rows_mut(13, m).copy_from(&rates.aero.a_dot);
        x.rows_mut(13 + m, m).copy_from(&rates.aero.lag_rates.column(0));
        x.rows_mut(13 + 2 * m, m).copy_from(&rates.aero.lag_rates.column(1));
        x.rows_mut(13 + 3 * m, m).copy_from(&rates.aero.t_norm_rate);
        x[13 + 4 * m] = rates.phase_rate;
        x
    }
}

/// Classical fourth-order Runge-Kutta step on a flat vector.
pub fn rk4_vec<F>(f: F, x: &DVector<f64>, dt: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let k1 = f(x)?;
    let k2 = f(&(x + &k1 * (0.5 * dt)))?;
    let k3 = f(&(x + &k2 * (0.5 * dt)))?;
    let k4 = f(&(x + &k3 * dt))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Euler angles extracted in Z-Y-X (yaw, pitch, roll) order, with a flag
/// raised near the pitch singularity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    /// |pitch| within one degree of the +-90 deg gimbal singularity; yaw
    /// is set to zero by convention and roll absorbs the coupled angle.
    pub near_gimbal: bool,
}

/// Extract Z-Y-X Euler angles from a body-to-inertial quaternion
/// (w, x, y, z). Roll and yaw lie in (-pi, pi], pitch in [-pi/2, pi/2].
pub fn euler_angles(q: &Vector4<f64>) -> EulerAngles {
    let n = q.norm();
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    let sin_pitch = (2.0 * (w * y - x * z)).clamp(-1.0, 1.0);
    let pitch = sin_pitch.asin();
    let gimbal_limit = (89.0_f64).to_radians();
    if pitch.abs() > gimbal_limit {
        // Only roll -/+ yaw is observable; report it as roll.
        EulerAngles { roll: 2.0 * x.atan2(w), pitch, yaw: 0.0, near_gimbal: true }
    } else {
        EulerAngles {
            roll: (2.0 * (w * x + y * z)).atan2(1.0 - 2.0 * (x * x + y * y)),
            pitch,
            yaw: (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z)),
            near_gimbal: false,
        }
    }
}

/// Compose a body-to-inertial quaternion from Z-Y-X Euler angles.
pub fn quaternion_from_euler(roll: f64, pitch: f64, yaw: f64) -> Vector4<f64> {
    let q = UnitQuaternion::from_euler_angles(roll, pitch, yaw);
    Vector4::new(q.w, q.i, q.j, q.k)
}
