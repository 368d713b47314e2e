//! Wing kinematics: flapping gait generation and lifting-line station geometry.
//!
//! Frames and conventions used throughout the crate:
//!
//! * Body frame: x forward, y right, z down, origin at the center of mass.
//! * The right wing spans +y, the left wing -y.
//! * Shoulder plunge angle `phi_s` is positive when the wing tip moves up
//!   (toward -z). Elbow flexion `phi_e` is positive when the outer segment
//!   folds toward the tail, shortening the projected span.
//! * The lifting line is parameterized by theta in (0, pi) with
//!   y = (S/2)·cos(theta), so theta = 0 maps to the right tip.
//!
//! Each wing is a two-segment rigid linkage (humerus + radius). Flexion
//! folds the outer segment in the wing plane, which is what shortens the
//! effective span during the upstroke; the elbow joint cannot hyperextend,
//! so the lower elbow limit (default 0) holds the wing straight through the
//! downstroke.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// 2*pi, used for phase arithmetic.
pub const TAU: f64 = std::f64::consts::TAU;

/// Flapping-gait parameters.
///
/// The base gait is sinusoidal: `shoulder = A·sin(2·pi·f·t)` and
/// `elbow = B·sin(2·pi·f·t + lag)`, with exact analytic rates and
/// accelerations — the waveform is deliberately smooth everywhere, since
/// the predictive controller differentiates through it. Regulator inputs
/// add slowly-varying joint offsets on top of the base gait; the mapping
/// of regulator index `i` to joints cycles through
///
/// * `i % 4 == 0`: differential elbow flexion (+ on the right, - on the
///   left) — rolls the vehicle toward positive input,
/// * `i % 4 == 1`: collective shoulder bias — shifts the mean stroke plane,
///   which modulates the pitch moment through the thrust lever arm,
/// * `i % 4 == 2`: differential shoulder bias,
/// * `i % 4 == 3`: collective elbow flexion.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitConfig {
    /// Flapping frequency [Hz].
    pub flap_frequency: f64,
    /// Shoulder plunge amplitude A [rad].
    #[serde(default = "defaults::plunge_amplitude")]
    pub plunge_amplitude: f64,
    /// Elbow flexion amplitude B [rad].
    #[serde(default = "defaults::flexion_amplitude")]
    pub flexion_amplitude: f64,
    /// Phase lead of the elbow relative to the shoulder [rad]. The default
    /// of +pi/2 centers peak fold on the upstroke.
    #[serde(default = "defaults::flexion_phase_lag")]
    pub flexion_phase_lag: f64,
    /// Gain per regulator input [rad per unit input]; the length of this
    /// vector is the number of regulator channels.
    #[serde(default = "defaults::asymmetry_gains")]
    pub asymmetry_gains: Vec<f64>,
    /// Saturation bound on each regulator input [unitless input units].
    #[serde(default = "defaults::stroke_bound")]
    pub stroke_bound: f64,
}

mod defaults {
    pub fn plunge_amplitude() -> f64 {
        0.5
    }
    pub fn flexion_amplitude() -> f64 {
        0.9
    }
    pub fn flexion_phase_lag() -> f64 {
        std::f64::consts::FRAC_PI_2
    }
    pub fn asymmetry_gains() -> Vec<f64> {
        vec![0.25, 0.25]
    }
    pub fn stroke_bound() -> f64 {
        1.0
    }
}

impl Default for GaitConfig {
    fn default() -> Self {
        GaitConfig {
            flap_frequency: 3.5,
            plunge_amplitude: defaults::plunge_amplitude(),
            flexion_amplitude: defaults::flexion_amplitude(),
            flexion_phase_lag: defaults::flexion_phase_lag(),
            asymmetry_gains: defaults::asymmetry_gains(),
            stroke_bound: defaults::stroke_bound(),
        }
    }
}

impl GaitConfig {
    /// Number of regulator channels this gait accepts.
    pub fn num_regulators(&self) -> usize {
        self.asymmetry_gains.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.flap_frequency > 0.0) {
            return Err(SimError::config("gait.flap_frequency must be positive"));
        }
        if self.plunge_amplitude < 0.0 || self.flexion_amplitude < 0.0 {
            return Err(SimError::config("gait amplitudes must be non-negative"));
        }
        if !(self.stroke_bound > 0.0) {
            return Err(SimError::config("gait.stroke_bound must be positive"));
        }
        Ok(())
    }
}

/// Instantaneous joint state of both wings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WingState {
    /// Shoulder plunge angles [rad].
    pub shoulder_angle_l: f64,
    pub shoulder_angle_r: f64,
    /// Elbow flexion angles [rad].
    pub elbow_angle_l: f64,
    pub elbow_angle_r: f64,
    /// Joint rates [rad/s].
    pub shoulder_rate_l: f64,
    pub shoulder_rate_r: f64,
    pub elbow_rate_l: f64,
    pub elbow_rate_r: f64,
    /// Gait phase in [0, 2*pi).
    pub phase: f64,
}

/// Joint accelerations [rad/s^2], used by the flapping-recoil model.
#[derive(Debug, Clone, Copy, Default)]
pub struct JointAccel {
    pub shoulder_l: f64,
    pub shoulder_r: f64,
    pub elbow_l: f64,
    pub elbow_r: f64,
}

/// One joint trajectory sample: angle plus its first two derivatives.
#[derive(Debug, Clone, Copy)]
struct JointSample {
    angle: f64,
    rate: f64,
    accel: f64,
}

/// Joint offsets produced by the regulator mapping [rad].
#[derive(Debug, Clone, Copy, Default)]
struct JointOffsets {
    shoulder_l: f64,
    shoulder_r: f64,
    elbow_l: f64,
    elbow_r: f64,
}

fn regulator_offsets(config: &GaitConfig, inputs: &[f64]) -> (JointOffsets, bool) {
    let mut off = JointOffsets::default();
    let mut saturated = false;
    for (i, (&gain, &raw)) in config.asymmetry_gains.iter().zip(inputs).enumerate() {
        let clipped = raw.clamp(-config.stroke_bound, config.stroke_bound);
        if clipped != raw {
            saturated = true;
        }
        let delta = gain * clipped;
        match i % 4 {
            0 => {
                off.elbow_r += delta;
                off.elbow_l -= delta;
            }
            1 => {
                off.shoulder_l += delta;
                off.shoulder_r += delta;
            }
            2 => {
                off.shoulder_r += delta;
                off.shoulder_l -= delta;
            }
            _ => {
                off.elbow_l += delta;
                off.elbow_r += delta;
            }
        }
    }
    (off, saturated)
}

/// Full gait sample including joint accelerations and the saturation flag.
#[derive(Debug, Clone, Copy)]
pub struct GaitSample {
    pub wing: WingState,
    pub accel: JointAccel,
    /// True when any regulator input exceeded the stroke bound and was
    /// clipped; callers should surface this in the run log.
    pub saturated: bool,
}

/// Sample the gait at a given phase [rad].
///
/// `inputs` carries the regulator values; entries beyond the configured
/// channel count are ignored, missing entries are treated as zero.
pub fn gait_sample_at_phase(config: &GaitConfig, phase: f64, inputs: &[f64]) -> GaitSample {
    let omega = TAU * config.flap_frequency;
    let phase = phase.rem_euclid(TAU);
    let (off, saturated) = regulator_offsets(config, inputs);

    let shoulder_base = JointSample {
        angle: config.plunge_amplitude * phase.sin(),
        rate: config.plunge_amplitude * omega * phase.cos(),
        accel: -config.plunge_amplitude * omega * omega * phase.sin(),
    };
    let elbow_phase = phase + config.flexion_phase_lag;
    let elbow_base = JointSample {
        angle: config.flexion_amplitude * elbow_phase.sin(),
        rate: config.flexion_amplitude * omega * elbow_phase.cos(),
        accel: -config.flexion_amplitude * omega * omega * elbow_phase.sin(),
    };

    let with_offset = |base: JointSample, offset: f64| JointSample {
        angle: base.angle + offset,
        ..base
    };

    let sh_l = clamp_joint(with_offset(shoulder_base, off.shoulder_l), config.shoulder_limits);
    let sh_r = clamp_joint(with_offset(shoulder_base, off.shoulder_r), config.shoulder_limits);
    let el_l = clamp_joint(with_offset(elbow_base, off.elbow_l), config.elbow_limits);
    let el_r = clamp_joint(with_offset(elbow_base, off.elbow_r), config.elbow_limits);

    GaitSample {
        wing: WingState {
            shoulder_angle_l: sh_l.angle,
            shoulder_angle_r: sh_r.angle,
            elbow_angle_l: el_l.angle,
            elbow_angle_r: el_r.angle,
            shoulder_rate_l: sh_l.rate,
            shoulder_rate_r: sh_r.rate,
            elbow_rate_l: el_l.rate,
            elbow_rate_r: el_r.rate,
            phase,
        },
        accel: JointAccel {
            shoulder_l: sh_l.accel,
            shoulder_r: sh_r.accel,
            elbow_l: el_l.accel,
            elbow_r: el_r.accel,
        },
        saturated,
    }
}

/// Sample the base gait plus regulator offsets at time `t` [s].
///
/// Returns the joint state and a flag indicating whether any regulator
/// input had to be saturated to the stroke bound.
pub fn gait_joint_state(config: &GaitConfig, t: f64, inputs: &[f64]) -> (WingState, bool) {
    let sample = gait_sample_at_phase(config, TAU * config.flap_frequency * t, inputs);
    (sample.wing, sample.saturated)
}

/// Spanwise chord law, fixed in the angular coordinate theta.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Planform {
    /// Elliptic planform c(theta) = root_chord * sin(theta).
    Elliptic {
        /// Root chord c0 [m].
        root_chord: f64,
    },
    /// Piecewise-linear chord over the normalized span coordinate
    /// xi = |cos(theta)| in [0, 1] (0 = root, 1 = tip).
    Tabulated {
        /// Breakpoints (xi, chord [m]) sorted by xi.
        points: Vec<(f64, f64)>,
    },
}

impl Planform {
    /// Reference (root) chord c0 [m] used to normalize the circulation
    /// series.
    pub fn root_chord(&self) -> f64 {
        match self {
            Planform::Elliptic { root_chord } => *root_chord,
            Planform::Tabulated { points } => {
                points.first().map(|&(_, c)| c).unwrap_or(0.0)
            }
        }
    }

    /// Chord at a lifting-line angle theta [m].
    pub fn chord_at(&self, theta: f64) -> f64 {
        match self {
            Planform::Elliptic { root_chord } => root_chord * theta.sin(),
            Planform::Tabulated { points } => {
                let xi = theta.cos().abs();
                if points.is_empty() {
                    return 0.0;
                }
                if xi <= points[0].0 {
                    return points[0].1;
                }
                for pair in points.windows(2) {
                    let (x0, c0) = pair[0];
                    let (x1, c1) = pair[1];
                    if xi <= x1 {
                        let s = (xi - x0) / (x1 - x0);
                        return c0 + s * (c1 - c0);
                    }
                }
                points.last().unwrap().1
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Planform::Elliptic { root_chord } => {
                if !(*root_chord > 0.0) {
                    return Err(SimError::config("planform root_chord must be positive"));
                }
            }
            Planform::Tabulated { points } => {
                if points.len() < 2 {
                    return Err(SimError::config(
                        "tabulated planform needs at least two breakpoints",
                    ));
                }
                if points.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(SimError::config(
                        "tabulated planform breakpoints must be strictly increasing in xi",
                    ));
                }
                if points.iter().any(|&(_, c)| c < 0.0) {
                    return Err(SimError::config("tabulated planform chords must be >= 0"));
                }
            }
        }
        Ok(())
    }
}

/// Linkage geometry and planform for both wings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpanConfig {
    /// Inner (humerus) segment length [m].
    pub humerus_length: f64,
    /// Outer (radius) segment length [m].
    pub radius_length: f64,
    /// Shoulder joint position in the body frame [m]; the y component is the
    /// lateral offset of each shoulder from the centerline (mirrored left
    /// and right).
    #[serde(default)]
    pub shoulder_offset: [f64; 3],
    pub planform: Planform,
}

impl Default for SpanConfig {
    fn default() -> Self {
        SpanConfig {
            humerus_length: 0.09,
            radius_length: 0.08,
            shoulder_offset: [0.0, 0.0, 0.0],
            planform: Planform::Elliptic { root_chord: 0.1 },
        }
    }
}

impl SpanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.humerus_length > 0.0) || !(self.radius_length > 0.0) {
            return Err(SimError::config("wing segment lengths must be positive"));
        }
        if self.shoulder_offset[1] < 0.0 {
            return Err(SimError::config("shoulder lateral offset must be >= 0"));
        }
        self.planform.validate()
    }

    /// Radial reach of one side [m] given its elbow flexion angle.
    pub fn side_reach(&self, elbow: f64) -> f64 {
        self.shoulder_offset[1] + self.humerus_length + self.radius_length * elbow.cos()
    }

    /// Fully extended wingspan [m].
    pub fn reference_span(&self) -> f64 {
        2.0 * self.side_reach(0.0)
    }
}

/// Geometry and local airflow of one lifting-line station.
///
/// `station_geometry` fills the kinematic fields with the airflow a hovering
/// body would see (joint motion only); [`apply_body_motion`] folds in rigid
/// body velocity, angular rate, and wind.
#[derive(Debug, Clone)]
pub struct StationGeometry {
    /// Spanwise coordinate y = (S/2)·cos(theta) [m].
    pub y: f64,
    /// Angular coordinate in (0, pi).
    pub theta: f64,
    /// Local chord [m].
    pub chord: f64,
    /// Quarter-chord position in the body frame [m].
    pub position_body: Vector3<f64>,
    /// Unit normal in the lift-positive (suction) direction.
    pub normal_body: Vector3<f64>,
    /// Unit span direction, pointing outboard.
    pub span_dir_body: Vector3<f64>,
    /// Station velocity from joint motion, body frame [m/s].
    pub joint_velocity_body: Vector3<f64>,
    /// In-plane relative airspeed [m/s].
    pub v_e: f64,
    /// Chordwise component of the relative airflow [m/s] (negative in
    /// forward flight: air moves toward the trailing edge).
    pub flow_chordwise: f64,
    /// Normal (lift-positive) component of the relative airflow [m/s]; this
    /// is the motion-induced upwash before any induced-downwash correction.
    pub w_motion: f64,
}

/// Current total span [m] covered by a station set (left reach + right
/// reach).
pub fn current_span(config: &SpanConfig, wing: &WingState) -> f64 {
    config.side_reach(wing.elbow_angle_l) + config.side_reach(wing.elbow_angle_r)
}

struct SideFrame {
    shoulder: Vector3<f64>,
    e_span: Vector3<f64>,
    e_span_dot: Vector3<f64>,
    normal: Vector3<f64>,
    elbow: f64,
    elbow_rate: f64,
    reach: f64,
    reach_rate: f64,
}

fn side_frame(config: &SpanConfig, wing: &WingState, right: bool) -> SideFrame {
    let (phi, phi_dot, elbow, elbow_rate) = if right {
        (wing.shoulder_angle_r, wing.shoulder_rate_r, wing.elbow_angle_r, wing.elbow_rate_r)
    } else {
        (wing.shoulder_angle_l, wing.shoulder_rate_l, wing.elbow_angle_l, wing.elbow_rate_l)
    };
    let side = if right { 1.0 } else { -1.0 };
    let (s, c) = phi.sin_cos();
    // Span direction tilts with plunge; the lift-positive normal stays
    // perpendicular to it within the y-z plane.
    let e_span = Vector3::new(0.0, side * c, -s);
    let normal = Vector3::new(0.0, -side * s, -c);
    let e_span_dot = normal * phi_dot;
    let [x0, y0, z0] = config.shoulder_offset;
    SideFrame {
        shoulder: Vector3::new(x0, side * y0, z0),
        e_span,
        e_span_dot,
        normal,
        elbow,
        elbow_rate,
        reach: config.side_reach(elbow),
        reach_rate: -config.radius_length * elbow.sin() * elbow_rate,
    }
}

/// Position and joint-motion velocity of the point at radial distance `r`
/// from the centerline along one side, together with `r`'s own rate from
/// span transport.
fn side_point(config: &SpanConfig, frame: &SideFrame, r: f64, r_dot: f64) -> (Vector3<f64>, Vector3<f64>) {
    let y_root = config.shoulder_offset[1];
    let rho = (r - y_root).max(0.0);
    let rho_dot = if r > y_root { r_dot } else { 0.0 };
    let mut pos = frame.shoulder + frame.e_span * rho;
    let mut vel = frame.e_span * rho_dot + frame.e_span_dot * rho;
    let outer = rho - config.humerus_length;
    if outer > 0.0 {
        let tan_e = frame.elbow.tan();
        let sec2 = 1.0 / (frame.elbow.cos() * frame.elbow.cos());
        pos.x -= outer * tan_e;
        vel.x -= rho_dot * tan_e + outer * sec2 * frame.elbow_rate;
    }
    (pos, vel)
}

/// Build the lifting-line stations for the current wing pose.
///
/// Stations sit at theta_k = k·pi/(n+1), k = 1..n, so none falls on a wing
/// tip. The airflow fields describe a hovering body: only joint motion
/// contributes. Call [`apply_body_motion`] afterwards to account for rigid
/// body motion and wind.
pub fn station_geometry(
    wing: &WingState,
    config: &SpanConfig,
    n_stations: usize,
) -> Result<Vec<StationGeometry>> {
    if n_stations < 1 {
        return Err(SimError::config("n_stations must be at least 1"));
    }
    let left = side_frame(config, wing, false);
    let right = side_frame(config, wing, true);
    let half_span = 0.5 * (left.reach + right.reach);
    if !(half_span > 0.0) {
        return Err(SimError::config("wing reach collapsed to zero"));
    }

    let d_theta = std::f64::consts::PI / (n_stations as f64 + 1.0);
    let mut stations = Vec::with_capacity(n_stations);
    for k in 1..=n_stations {
        let theta = d_theta * k as f64;
        let xi = theta.cos();
        let y = half_span * xi;
        let frame = if xi >= 0.0 { &right } else { &left };
        // Fractional position maps the shared theta grid onto each side's
        // instantaneous reach.
        let fraction = xi.abs();
        // The station index (and theta) is what is held fixed over time, so
        // the mapped point travels with the side's own reach rate.
        let r = fraction * frame.reach;
        let r_dot = fraction * frame.reach_rate;
        let (position, velocity) = side_point(config, frame, r, r_dot);
        let chord = config.planform.chord_at(theta);
        // Hovering-body airflow: the air is still, so relative flow is the
        // negated station velocity.
        let v_rel = -velocity;
        let w_motion = v_rel.dot(&frame.normal);
        let flow_chordwise = v_rel.x;
        let v_e = (flow_chordwise * flow_chordwise + w_motion * w_motion).sqrt();
        stations.push(StationGeometry {
            y,
            theta,
            chord,
            position_body: position,
            normal_body: frame.normal,
            span_dir_body: frame.e_span,
            joint_velocity_body: velocity,
            v_e,
            flow_chordwise,
            w_motion,
        });
    }
    Ok(stations)
}

/// Fold rigid-body motion and wind into the station airflow.
///
/// `velocity_body` is the body-frame velocity of the center of mass through
/// the air (body velocity minus wind), `omega_body` the body angular rate.
pub fn apply_body_motion(
    stations: &mut [StationGeometry],
    velocity_body: &Vector3<f64>,
    omega_body: &Vector3<f64>,
) {
    for st in stations.iter_mut() {
        let point_velocity =
            velocity_body + omega_body.cross(&st.position_body) + st.joint_velocity_body;
        let v_rel = -point_velocity;
        st.w_motion = v_rel.dot(&st.normal_body);
        st.flow_chordwise = v_rel.x;
        st.v_e = (st.flow_chordwise * st.flow_chordwise + st.w_motion * st.w_motion).sqrt();
    }
}

/// Point-mass state of one wing segment, used by the recoil model.
#[derive(Debug, Clone, Copy)]
pub struct SegmentState {
    /// Segment midpoint in the body frame [m].
    pub position: Vector3<f64>,
    /// Joint-driven acceleration of the midpoint [m/s^2].
    pub accel: Vector3<f64>,
}

/// Midpoint positions and joint-driven accelerations of all four wing
/// segments, ordered [humerus L, radius L, humerus R, radius R].
pub fn segment_states(
    config: &SpanConfig,
    wing: &WingState,
    accel: &JointAccel,
) -> [SegmentState; 4] {
    let mut out = [SegmentState { position: Vector3::zeros(), accel: Vector3::zeros() }; 4];
    for (idx, right) in [(0usize, false), (2usize, true)] {
        let frame = side_frame(config, wing, right);
        let (phi_dot, phi_dd, elbow_dd) = if right {
            (wing.shoulder_rate_r, accel.shoulder_r, accel.elbow_r)
        } else {
            (wing.shoulder_rate_l, accel.shoulder_l, accel.elbow_l)
        };
        let e = frame.e_span;
        let n = frame.normal;
        // e'' = phi_dd * n - phi_dot^2 * e (plunge rotation in the y-z plane).
        let e_ddot = n * phi_dd - e * (phi_dot * phi_dot);

        let half_h = 0.5 * config.humerus_length;
        out[idx] = SegmentState {
            position: frame.shoulder + e * half_h,
            accel: e_ddot * half_h,
        };

        let (sin_e, cos_e) = frame.elbow.sin_cos();
        let x = Vector3::x();
        let e_out = e * cos_e - x * sin_e;
        let ed = frame.elbow_rate;
        // First derivative: e_out' = cos_e*e' - ed*(sin_e*e + cos_e*x).
        // Second derivative expands by the product rule below.
        let e_dot = frame.e_span_dot;
        let e_out_ddot = e_dot * (-2.0 * sin_e * ed) + e_ddot * cos_e
            - (e * sin_e + x * cos_e) * elbow_dd
            - (e * cos_e - x * sin_e) * (ed * ed);
        let half_r = 0.5 * config.radius_length;
        out[idx + 1] = SegmentState {
            position: frame.shoulder + e * config.humerus_length + e_out * half_r,
            accel: e_ddot * config.humerus_length + e_out_ddot * half_r,
        };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn base_config() -> GaitConfig {
        GaitConfig { flap_frequency: 3.5, plunge_amplitude: 0.5, ..GaitConfig::default() }
    }

    #[test]
    fn gait_at_zero_phase_has_peak_shoulder_rate() {
        let cfg = base_config();
        let (wing, saturated) = gait_joint_state(&cfg, 0.0, &[0.0, 0.0]);
        assert!(!saturated);
        assert_abs_diff_eq!(wing.shoulder_angle_l, 0.0);
        assert_abs_diff_eq!(wing.shoulder_angle_r, 0.0);
        let expected = TAU * 3.5 * 0.5;
        assert_relative_eq!(wing.shoulder_rate_l, expected, max_relative = 1e-12);
        assert_relative_eq!(wing.shoulder_rate_r, expected, max_relative = 1e-12);
    }

    #[test]
    fn gait_at_quarter_period_tops_out() {
        let cfg = base_config();
        let t = 1.0 / (4.0 * cfg.flap_frequency);
        let (wing, _) = gait_joint_state(&cfg, t, &[0.0, 0.0]);
        assert_relative_eq!(wing.shoulder_angle_r, cfg.plunge_amplitude, max_relative = 1e-9);
        assert_abs_diff_eq!(wing.shoulder_rate_r, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn gait_is_periodic() {
        let cfg = base_config();
        let inputs = [0.1, -0.05];
        let (a, _) = gait_joint_state(&cfg, 0.37, &inputs);
        let (b, _) = gait_joint_state(&cfg, 0.37 + 1.0 / cfg.flap_frequency, &inputs);
        assert_abs_diff_eq!(a.shoulder_angle_l, b.shoulder_angle_l, epsilon = 1e-9);
        assert_abs_diff_eq!(a.elbow_angle_r, b.elbow_angle_r, epsilon = 1e-9);
        assert_abs_diff_eq!(a.shoulder_rate_r, b.shoulder_rate_r, epsilon = 1e-7);
    }

    #[test]
    fn zero_input_gait_is_left_right_symmetric() {
        let cfg = base_config();
        for i in 0..40 {
            let t = i as f64 * 0.011;
            let (w, _) = gait_joint_state(&cfg, t, &[0.0, 0.0]);
            assert_eq!(w.shoulder_angle_l, w.shoulder_angle_r);
            assert_eq!(w.elbow_angle_l, w.elbow_angle_r);
            assert_eq!(w.elbow_rate_l, w.elbow_rate_r);
        }
    }

    #[test]
    fn regulator_input_saturates_with_flag() {
        let cfg = base_config();
        let (sat_state, saturated) = gait_joint_state(&cfg, 0.1, &[10.0, 0.0]);
        assert!(saturated);
        let (bound_state, not_sat) = gait_joint_state(&cfg, 0.1, &[cfg.stroke_bound, 0.0]);
        assert!(!not_sat);
        assert_eq!(sat_state.elbow_angle_r, bound_state.elbow_angle_r);
    }

    #[test]
    fn differential_flexion_input_is_antisymmetric() {
        let cfg = base_config();
        // Sample during the upstroke where the elbow is away from its limits.
        let (w, _) = gait_joint_state(&cfg, 0.02, &[0.3, 0.0]);
        let (base, _) = gait_joint_state(&cfg, 0.02, &[0.0, 0.0]);
        let dl = w.elbow_angle_l - base.elbow_angle_l;
        let dr = w.elbow_angle_r - base.elbow_angle_r;
        assert_relative_eq!(dl, -dr, max_relative = 1e-12);
        assert_relative_eq!(dr, cfg.asymmetry_gains[0] * 0.3, max_relative = 1e-12);
    }

    #[test]
    fn elbow_never_hyperextends() {
        let cfg = base_config();
        for i in 0..200 {
            let t = i as f64 * 1.7e-3;
            let (w, _) = gait_joint_state(&cfg, t, &[0.0, 0.0]);
            assert!(w.elbow_angle_l >= 0.0);
            assert!(w.elbow_angle_r >= 0.0);
        }
    }

    #[test]
    fn stations_lie_on_the_cosine_grid() {
        let span = SpanConfig::default();
        let (wing, _) = gait_joint_state(&base_config(), 0.04, &[0.0, 0.0]);
        let stations = station_geometry(&wing, &span, 16).unwrap();
        let s = current_span(&span, &wing);
        for st in &stations {
            assert_abs_diff_eq!(st.y, 0.5 * s * st.theta.cos(), epsilon = 1e-12);
            assert!(st.theta > 0.0 && st.theta < std::f64::consts::PI);
            assert_relative_eq!(st.normal_body.norm(), 1.0, max_relative = 1e-12);
        }
        assert_eq!(stations.len(), 16);
    }

    #[test]
    fn station_count_must_be_positive() {
        let span = SpanConfig::default();
        let (wing, _) = gait_joint_state(&base_config(), 0.0, &[]);
        assert!(matches!(
            station_geometry(&wing, &span, 0),
            Err(SimError::InvalidConfig(_))
        ));
    }

    #[test]
    fn pure_plunge_station_speed_grows_linearly_with_radius() {
        // A wing rotating about the shoulder at rate w_p moves each station
        // at w_p * r perpendicular to the span.
        let span = SpanConfig {
            humerus_length: 0.1,
            radius_length: 0.1,
            shoulder_offset: [0.0, 0.0, 0.0],
            planform: Planform::Elliptic { root_chord: 0.08 },
        };
        let rate = 2.0;
        let wing = WingState {
            shoulder_angle_l: 0.0,
            shoulder_angle_r: 0.0,
            elbow_angle_l: 0.0,
            elbow_angle_r: 0.0,
            shoulder_rate_l: rate,
            shoulder_rate_r: rate,
            elbow_rate_l: 0.0,
            elbow_rate_r: 0.0,
            phase: 0.0,
        };
        let stations = station_geometry(&wing, &span, 9).unwrap();
        for st in &stations {
            let r = st.y.abs();
            assert_relative_eq!(st.v_e, rate * r, max_relative = 1e-9);
            // Upstroke motion produces negative upwash on both sides.
            assert_relative_eq!(st.w_motion, -rate * r, max_relative = 1e-9);
        }
    }

    #[test]
    fn folding_shortens_the_span() {
        let span = SpanConfig::default();
        let mut wing = gait_joint_state(&base_config(), 0.0, &[]).0;
        wing.elbow_angle_l = 0.0;
        wing.elbow_angle_r = 0.0;
        let extended = current_span(&span, &wing);
        wing.elbow_angle_l = 1.0;
        wing.elbow_angle_r = 1.0;
        let folded = current_span(&span, &wing);
        assert!(folded < extended);
        assert_relative_eq!(
            extended - folded,
            2.0 * span.radius_length * (1.0 - 1.0f64.cos()),
            max_relative = 1e-12
        );
    }

    #[test]
    fn folded_tip_sweeps_toward_the_tail() {
        let span = SpanConfig::default();
        let mut wing = gait_joint_state(&base_config(), 0.0, &[]).0;
        wing.elbow_angle_r = 0.8;
        let stations = station_geometry(&wing, &span, 31).unwrap();
        let tip = stations.first().unwrap(); // theta smallest -> right tip
        assert!(tip.position_body.x < -1e-3);
    }

    #[test]
    fn body_motion_shifts_station_airflow() {
        let span = SpanConfig::default();
        let (wing, _) = gait_joint_state(&base_config(), 0.0, &[]);
        let mut stations = station_geometry(&wing, &span, 8).unwrap();
        // Forward flight at 0.8 m/s plus a slow descent of 0.2 m/s.
        apply_body_motion(&mut stations, &Vector3::new(0.8, 0.0, 0.2), &Vector3::zeros());
        for st in &stations {
            assert!(st.flow_chordwise < 0.0);
            assert!(st.v_e > 0.8);
        }
    }

    #[test]
    fn segment_accelerations_match_finite_differences() {
        let cfg = base_config();
        let span = SpanConfig::default();
        let h = 1e-6;
        for &t in &[0.03, 0.11, 0.19] {
            let sample = |t: f64| gait_sample_at_phase(&cfg, TAU * cfg.flap_frequency * t, &[0.1, 0.05]);
            let s0 = sample(t - h);
            let s1 = sample(t);
            let s2 = sample(t + h);
            let p0 = segment_states(&span, &s0.wing, &s0.accel);
            let p1 = segment_states(&span, &s1.wing, &s1.accel);
            let p2 = segment_states(&span, &s2.wing, &s2.accel);
            for i in 0..4 {
                let fd = (p2[i].position - p1[i].position * 2.0 + p0[i].position) / (h * h);
                assert_abs_diff_eq!((fd - p1[i].accel).norm(), 0.0, epsilon = 2e-3);
            }
        }
    }
}
