//! Scenario configuration: the TOML schema tying gait, wing, mass,
//! aerodynamics, controller, and reference schedule together.
//!
//! Required fields are exactly the ones without physical defaults —
//! `gait.flap_frequency` and `aero.airspeed` (and their sections). Every
//! other field carries the calibrated default, so a minimal scenario file
//! is:
//!
//! ```toml
//! [gait]
//! flap_frequency = 3.5
//!
//! [aero]
//! airspeed = 0.8
//! ```
//!
//! Frames: body x forward, y right, z down; inertial z down, so gravity is
//! +z and sustained lift shows up as negative `fz`. Angles in the file are
//! degrees; everything internal is radians and SI.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aero::AeroConfig;
use crate::collocation::{ControllerConfig, SolverOptions};
use crate::dynamics::{quaternion_from_euler, BodyState, FlyerModel, FullState, InertiaConfig};
use crate::error::{Result, SimError};
use crate::kinematics::{GaitConfig, SpanConfig};

/// Attitude/rate reference schedule driving the controller.
///
/// Pitch is held constant; roll starts at `roll_initial_deg` and switches to
/// `roll_final_deg` at `roll_switch_time`. Angular-rate references are zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceSchedule {
    pub pitch_deg: f64,
    pub roll_initial_deg: f64,
    pub roll_final_deg: f64,
    /// Time [s] at which the roll reference switches.
    pub roll_switch_time: f64,
}

impl Default for ReferenceSchedule {
    fn default() -> Self {
        ReferenceSchedule {
            pitch_deg: -15.0,
            roll_initial_deg: 0.0,
            roll_final_deg: 15.0,
            roll_switch_time: 1.0,
        }
    }
}

impl ReferenceSchedule {
    /// (roll, pitch) reference at time `t` [rad].
    pub fn sample(&self, t: f64) -> (f64, f64) {
        let roll_deg =
            if t < self.roll_switch_time { self.roll_initial_deg } else { self.roll_final_deg };
        (roll_deg.to_radians(), self.pitch_deg.to_radians())
    }
}

/// Initial rigid-body state of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialState {
    /// Inertial position [m].
    pub position: [f64; 3],
    /// Inertial velocity [m/s]; omitted → level flight at `aero.airspeed`
    /// along +x.
    pub velocity: Option<[f64; 3]>,
    /// Roll/pitch/yaw [deg]; the default matches the pitch reference so the
    /// controller starts near its attitude setpoint.
    pub euler_deg: [f64; 3],
    /// Body angular rate [rad/s].
    pub omega: [f64; 3],
    /// Half-width of the uniform perturbation applied to velocity and
    /// angular rate [m/s, rad/s]; drawn from the seeded generator, so runs
    /// stay reproducible. Zero disables perturbation entirely.
    pub perturbation: f64,
}

impl Default for InitialState {
    fn default() -> Self {
        InitialState {
            position: [0.0; 3],
            velocity: None,
            euler_deg: [0.0, -15.0, 0.0],
            omega: [0.0; 3],
            perturbation: 0.0,
        }
    }
}

fn default_sim_dt() -> f64 {
    1e-4
}
fn default_control_dt() -> f64 {
    5e-3
}
fn default_duration() -> f64 {
    5.0
}
fn default_decimate() -> usize {
    10
}

/// Complete description of one simulation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Integrator step [s].
    #[serde(default = "default_sim_dt")]
    pub sim_dt: f64,
    /// Controller update period [s]; must be an integer multiple of
    /// `sim_dt`.
    #[serde(default = "default_control_dt")]
    pub control_dt: f64,
    /// Simulated duration [s].
    #[serde(default = "default_duration")]
    pub duration: f64,
    /// Trace rows are written every `decimate` integrator steps.
    #[serde(default = "default_decimate")]
    pub decimate: usize,
    /// Seed for the initial-state perturbation draw.
    #[serde(default)]
    pub rng_seed: u64,
    pub gait: GaitConfig,
    pub aero: AeroConfig,
    #[serde(default)]
    pub wing: SpanConfig,
    #[serde(default)]
    pub inertia: InertiaConfig,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub reference: ReferenceSchedule,
    #[serde(default)]
    pub initial: InitialState,
}

impl ScenarioConfig {
    /// A banking scenario with every field at its calibrated default.
    ///
    /// Three calibration choices pin down what the model itself cannot:
    ///
    /// * the mass properties are sized for trim: at this airspeed and gait
    ///   the wing's cycle-mean lift is roughly 0.16 N, so the default build
    ///   weighs that much. A heavier vehicle cannot trim inside the
    ///   peak-force envelope the wing actually produces — it dives, gains
    ///   dynamic pressure, and the pitch authority of the stroke regulators
    ///   saturates;
    /// * the circulation series is truncated at 6 modes rather than the
    ///   aero module's standalone default of 16 — solver cost scales
    ///   steeply with the state dimension, and above 6 modes the
    ///   integrated wrench moves by far less than the scenario's
    ///   acceptance bands (see the truncation-sensitivity test in `aero`);
    /// * the controller runs a real-time solver profile: feasibility at
    ///   1e-6 is still demanded (defects and stroke bounds), but
    ///   stationarity only to 1e-3, the penalty capped at 1e6, and the
    ///   iteration budget bounded. A feasible, mildly suboptimal input
    ///   every 5 ms beats a fully polished one that arrives late; the
    ///   runner clamps the applied input to the stroke bounds exactly.
    pub fn default_banking() -> Self {
        ScenarioConfig {
            sim_dt: default_sim_dt(),
            control_dt: default_control_dt(),
            duration: default_duration(),
            decimate: default_decimate(),
            rng_seed: 0,
            gait: GaitConfig::default(),
            aero: AeroConfig { fourier_modes: 6, ..AeroConfig::default() },
            wing: SpanConfig::default(),
            inertia: InertiaConfig {
                mass: 0.016,
                inertia_diag: [8e-5, 4e-5, 1e-4],
                humerus_mass: 0.001,
                radius_mass: 0.0005,
                ..InertiaConfig::default()
            },
            controller: ControllerConfig {
                solver: SolverOptions {
                    ineq_tol: 1e-6,
                    stationarity_tol: 1e-3,
                    max_penalty: 1e6,
                    max_outer: 12,
                    max_inner: 100,
                    ..SolverOptions::default()
                },
                ..ControllerConfig::default()
            },
            reference: ReferenceSchedule::default(),
            initial: InitialState::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ScenarioConfig =
            toml::from_str(text).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let text = std::fs::read_to_string(&path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| SimError::InvalidConfig(e.to_string()))
    }

    /// Integrator steps per controller update.
    pub fn steps_per_control(&self) -> usize {
        (self.control_dt / self.sim_dt).round() as usize
    }

    /// Total integrator steps in the run.
    pub fn total_steps(&self) -> usize {
        (self.duration / self.sim_dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sim_dt", self.sim_dt),
            ("control_dt", self.control_dt),
            ("duration", self.duration),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SimError::config(format!("{name} must be positive and finite")));
            }
        }
        let ratio = self.control_dt / self.sim_dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
            return Err(SimError::config(format!(
                "control_dt ({}) must be an integer multiple of sim_dt ({})",
                self.control_dt, self.sim_dt
            )));
        }
        if self.decimate == 0 {
            return Err(SimError::config("decimate must be at least 1"));
        }
        if !(self.initial.perturbation >= 0.0) {
            return Err(SimError::config("initial.perturbation must be nonnegative"));
        }
        self.gait.validate()?;
        self.aero.validate()?;
        self.wing.validate()?;
        self.inertia.validate()?;
        self.controller.validate()?;
        if self.controller.weights.len() != 5 {
            return Err(SimError::config(
                "controller.weights must have 5 entries (roll, pitch, wx, wy, wz)",
            ));
        }
        Ok(())
    }

    /// Build the vehicle model. The aerodynamic reference geometry (span,
    /// root chord) is derived from the wing configuration so the two blocks
    /// cannot drift apart; `aero.span`/`aero.root_chord` in the file are
    /// ignored in favor of the wing geometry.
    pub fn build_model(&self) -> Result<FlyerModel> {
        let mut aero = self.aero.clone();
        aero.span = self.wing.reference_span();
        aero.root_chord = self.wing.planform.root_chord();
        FlyerModel::new(self.gait.clone(), self.wing.clone(), self.inertia.clone(), aero)
    }

    /// Controller configuration with the scenario's control period folded
    /// in (the scenario file is the single source of truth for timing).
    pub fn controller_config(&self) -> ControllerConfig {
        let mut config = self.controller.clone();
        config.control_dt = self.control_dt;
        config
    }

    /// Per-regulator control bounds from the gait's stroke bound.
    pub fn control_bounds(&self) -> Vec<(f64, f64)> {
        vec![(-self.gait.stroke_bound, self.gait.stroke_bound); self.gait.num_regulators()]
    }

    /// Assemble the initial [`FullState`] (without perturbation; the
    /// scenario runner applies the seeded draw).
    pub fn initial_state(&self, modes: usize) -> FullState {
        let [roll, pitch, yaw] = self.initial.euler_deg.map(f64::to_radians);
        let velocity = self.initial.velocity.unwrap_or([self.aero.airspeed, 0.0, 0.0]);
        let mut state = FullState::at_rest(modes);
        state.body = BodyState {
            p: nalgebra::Vector3::from(self.initial.position),
            q: quaternion_from_euler(roll, pitch, yaw),
            v: nalgebra::Vector3::from(velocity),
            omega: nalgebra::Vector3::from(self.initial.omega),
        };
        state
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\n[gait]\nflap_frequency = 3.5\n\n[aero]\nairspeed = 0.8\n";

    #[test]
    fn minimal_config_fills_defaults() {
        let config = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(config.sim_dt, 1e-4);
        assert_eq!(config.control_dt, 5e-3);
        assert_eq!(config.duration, 5.0);
        assert_eq!(config.steps_per_control(), 50);
        assert_eq!(config.total_steps(), 50_000);
        assert_eq!(config.gait.plunge_amplitude, 0.5);
        assert_eq!(config.reference.pitch_deg, -15.0);
        assert_eq!(config.reference.roll_switch_time, 1.0);
        assert_eq!(config.controller.horizon_knots, 5);
    }

    #[test]
    fn missing_required_field_names_it() {
        let err = ScenarioConfig::from_toml_str("[gait]\n\n[aero]\nairspeed = 0.8\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("flap_frequency"), "error was: {err}");

        let err = ScenarioConfig::from_toml_str("[gait]\nflap_frequency = 3.5\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("aero"), "error was: {err}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = format!("{MINIMAL}\nwarp_drive = true\n");
        assert!(ScenarioConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn non_integer_control_ratio_is_rejected() {
        let text = format!("sim_dt = 1e-4\ncontrol_dt = 2.5e-4\n{MINIMAL}");
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("integer multiple"), "error was: {err}");
    }

    #[test]
    fn reference_schedule_switches_roll() {
        let schedule = ReferenceSchedule::default();
        let (roll0, pitch0) = schedule.sample(0.5);
        assert_eq!(roll0, 0.0);
        assert!((pitch0 - (-15.0_f64).to_radians()).abs() < 1e-15);
        let (roll1, _) = schedule.sample(1.0);
        assert!((roll1 - 15.0_f64.to_radians()).abs() < 1e-15);
    }

    #[test]
    fn aero_geometry_follows_the_wing() {
        let text = format!("{MINIMAL}\n[wing]\nhumerus_length = 0.12\nradius_length = 0.1\n[wing.planform]\ntype = \"elliptic\"\nroot_chord = 0.08\n");
        let config = ScenarioConfig::from_toml_str(&text).unwrap();
        let model = config.build_model().unwrap();
        assert!((model.aero().config().span - 0.44).abs() < 1e-12);
        assert!((model.aero().config().root_chord - 0.08).abs() < 1e-12);
    }

    #[test]
    fn initial_state_defaults_to_level_flight_at_airspeed() {
        let config = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        let state = config.initial_state(4);
        assert_eq!(state.body.v.x, 0.8);
        let angles = crate::dynamics::euler_angles(&state.body.q);
        assert!((angles.pitch - (-15.0_f64).to_radians()).abs() < 1e-12);
        assert_eq!(state.aero.a.len(), 4);
    }

    #[test]
    fn round_trips_through_toml() {
        let config = ScenarioConfig::default_banking();
        let text = config.to_toml_string().unwrap();
        let reread = ScenarioConfig::from_toml_str(&text).unwrap();
        assert_eq!(reread.sim_dt, config.sim_dt);
        assert_eq!(reread.gait.flap_frequency, config.gait.flap_frequency);
        assert_eq!(reread.controller.weights, config.controller.weights);
    }
}
