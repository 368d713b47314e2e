//! Unsteady lifting-line aerodynamics.
//!
//! The bound circulation is a truncated Fourier series over the angular
//! span coordinate theta (y = (S/2)·cos(theta)):
//!
//! ```text
//! Gamma(t, theta) = 1/2 · a0 · c0 · U · sum_n a_n(t) · sin(n·theta)
//! ```
//!
//! Trailing vorticity induces the downwash
//!
//! ```text
//! w_y(t, theta) = -(a0·c0·U / (4S)) · sum_n n · a_n · sin(n·theta)/sin(theta)
//! ```
//!
//! and the unsteady Kutta-Joukowski theorem gives the sectional lift
//!
//! ```text
//! C_L(t, theta) = a0 · sum_n [ (c0/c)·a_n + (c0/U)·a_n' ] · sin(n·theta).
//! ```
//!
//! The series coefficients evolve by matching, at every collocation
//! station, this sectional lift against the indicial (Wagner) response of
//! the total effective downwash. The Wagner function uses Jones' classic
//! two-exponential approximation, so Duhamel's superposition integral
//! reduces to two exponential lag states per station, and the match
//! becomes an m-by-m linear solve for a'.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::kinematics::StationGeometry;

/// Coefficients of Jones' two-term exponential approximation of the Wagner
/// function.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WagnerCoefficients {
    pub psi1: f64,
    pub psi2: f64,
    pub eps1: f64,
    pub eps2: f64,
}

impl Default for WagnerCoefficients {
    fn default() -> Self {
        WagnerCoefficients { psi1: 0.165, psi2: 0.335, eps1: 0.0455, eps2: 0.3 }
    }
}

impl WagnerCoefficients {
    /// Value of the Wagner function at t_norm = 0 (0.5 for the defaults).
    pub fn phi0(&self) -> f64 {
        1.0 - (self.psi1 + self.psi2)
    }

    pub fn validate(&self) -> Result<()> {
        let phi0 = self.phi0();
        if !(phi0 > 0.0 && phi0 < 1.0) {
            return Err(SimError::config("wagner coefficients must satisfy 0 < 1 - psi1 - psi2 < 1"));
        }
        if self.eps1 <= 0.0 || self.eps2 <= 0.0 || self.psi1 < 0.0 || self.psi2 < 0.0 {
            return Err(SimError::config("wagner coefficients must be positive"));
        }
        Ok(())
    }
}

/// Wagner indicial lift response at normalized time `t_norm` (distance
/// traveled in semichords).
pub fn wagner(t_norm: f64, w: &WagnerCoefficients) -> Result<f64> {
    if t_norm < 0.0 {
        return Err(SimError::domain("wagner", format!("t_norm = {t_norm} is negative")));
    }
    Ok(1.0 - (w.psi1 * (-w.eps1 * t_norm).exp() + w.psi2 * (-w.eps2 * t_norm).exp()))
}

/// Lifting-line model parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AeroConfig {
    /// Free-stream airspeed U [m/s] used to normalize the circulation
    /// series.
    pub airspeed: f64,
    /// Sectional lift-curve slope a0 [1/rad].
    #[serde(default = "default_lift_slope")]
    pub lift_slope: f64,
    /// Root (reference) chord c0 [m].
    #[serde(default = "default_root_chord")]
    pub root_chord: f64,
    /// Reference total wingspan S [m] (fully extended).
    #[serde(default = "default_span")]
    pub span: f64,
    /// Air density [kg/m^3].
    #[serde(default = "default_density")]
    pub air_density: f64,
    /// Number of Fourier modes / collocation stations m.
    #[serde(default = "default_modes")]
    pub fourier_modes: usize,
    #[serde(default)]
    pub wagner: WagnerCoefficients,
}

fn default_lift_slope() -> f64 {
    std::f64::consts::TAU
}
fn default_root_chord() -> f64 {
    0.1
}
fn default_span() -> f64 {
    0.34
}
fn default_density() -> f64 {
    1.225
}
fn default_modes() -> usize {
    16
}

impl Default for AeroConfig {
    fn default() -> Self {
        AeroConfig {
            airspeed: 0.8,
            lift_slope: default_lift_slope(),
            root_chord: default_root_chord(),
            span: default_span(),
            air_density: default_density(),
            fourier_modes: default_modes(),
            wagner: WagnerCoefficients::default(),
        }
    }
}

impl AeroConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("aero.lift_slope", self.lift_slope),
            ("aero.root_chord", self.root_chord),
            ("aero.span", self.span),
            ("aero.air_density", self.air_density),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SimError::config(format!("{name} must be positive and finite")));
            }
        }
        // airspeed == 0 is the degenerate still-air case: circulation stays
        // frozen and the model produces no force, which keeps rest-state
        // scenarios representable.
        if !(self.airspeed >= 0.0) || !self.airspeed.is_finite() {
            return Err(SimError::config("aero.airspeed must be nonnegative and finite"));
        }
        if self.fourier_modes < 1 {
            return Err(SimError::config("aero.fourier_modes must be >= 1"));
        }
        self.wagner.validate()
    }
}

/// Aerodynamic state carried alongside the rigid-body state.
#[derive(Debug, Clone, PartialEq)]
pub struct AeroState {
    /// Fourier coefficients a_n, dimensionless.
    pub a: DVector<f64>,
    /// Duhamel deficiency states per station, columns are the two Jones
    /// terms [m/s].
    pub lag_states: DMatrix<f64>,
    /// Per-station normalized time (semichords traveled), nondecreasing.
    pub t_norm: DVector<f64>,
}

impl AeroState {
    pub fn zeros(modes: usize) -> Self {
        AeroState {
            a: DVector::zeros(modes),
            lag_states: DMatrix::zeros(modes, 2),
            t_norm: DVector::zeros(modes),
        }
    }

    pub fn modes(&self) -> usize {
        self.a.len()
    }
}

/// Time derivative of [`AeroState`].
#[derive(Debug, Clone)]
pub struct AeroRates {
    pub a_dot: DVector<f64>,
    pub lag_rates: DMatrix<f64>,
    pub t_norm_rate: DVector<f64>,
}

/// Aerodynamic wrench in the body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceMoment {
    /// Force [N].
    pub force: nalgebra::Vector3<f64>,
    /// Moment about the center of mass [N·m].
    pub moment: nalgebra::Vector3<f64>,
}

impl ForceMoment {
    pub fn zero() -> Self {
        ForceMoment { force: nalgebra::Vector3::zeros(), moment: nalgebra::Vector3::zeros() }
    }
}

/// Bound circulation at angular station theta [m^2/s].
pub fn circulation(a: &DVector<f64>, cfg: &AeroConfig, theta: f64) -> Result<f64> {
    check_theta("circulation", theta)?;
    let mut series = 0.0;
    for (i, &an) in a.iter().enumerate() {
        series += an * ((i as f64 + 1.0) * theta).sin();
    }
    Ok(0.5 * cfg.lift_slope * cfg.root_chord * cfg.airspeed * series)
}

/// Downwash induced by trailing vorticity at station theta [m/s], negative
/// for lift-producing loading.
///
/// Uses the reference span of `cfg`; [`AeroModel::rhs`] substitutes the
/// instantaneous span of the folded wing.
pub fn induced_downwash(a: &DVector<f64>, cfg: &AeroConfig, theta: f64) -> Result<f64> {
    check_theta("induced_downwash", theta)?;
    Ok(downwash_for_span(a, cfg, theta, cfg.span))
}

fn downwash_for_span(a: &DVector<f64>, cfg: &AeroConfig, theta: f64, span: f64) -> f64 {
    // sin(n·theta)/sin(theta) is the Chebyshev polynomial U_{n-1}(cos theta);
    // the recurrence below is finite at the tips where the naive quotient
    // degenerates to 0/0.
    let x = theta.cos();
    let mut ratio_prev = 0.0; // U_{-1}
    let mut ratio = 1.0; // U_0
    let mut series = 0.0;
    for (i, &an) in a.iter().enumerate() {
        let n = i as f64 + 1.0;
        series += n * an * ratio;
        let next = 2.0 * x * ratio - ratio_prev;
        ratio_prev = ratio;
        ratio = next;
    }
    -(cfg.lift_slope * cfg.root_chord * cfg.airspeed / (4.0 * span)) * series
}

/// Sectional lift coefficient from the circulation series and its rate.
pub fn sectional_lift_coefficient(
    a: &DVector<f64>,
    a_dot: &DVector<f64>,
    cfg: &AeroConfig,
    theta: f64,
    chord: f64,
) -> Result<f64> {
    check_theta("sectional_lift_coefficient", theta)?;
    if !(chord > 0.0) {
        return Err(SimError::domain(
            "sectional_lift_coefficient",
            format!("chord = {chord} must be positive"),
        ));
    }
    let chord_ratio = cfg.root_chord / chord;
    // In still air the coefficient rates are frozen at zero, so the
    // (infinite) rate normalization never contributes.
    let rate_scale = if cfg.airspeed > 0.0 { cfg.root_chord / cfg.airspeed } else { 0.0 };
    let mut series = 0.0;
    for i in 0..a.len() {
        let sin_n = ((i as f64 + 1.0) * theta).sin();
        series += (chord_ratio * a[i] + rate_scale * a_dot[i]) * sin_n;
    }
    Ok(cfg.lift_slope * series)
}

fn check_theta(operation: &'static str, theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta < std::f64::consts::PI) {
        return Err(SimError::domain(operation, format!("theta = {theta} outside (0, pi)")));
    }
    Ok(())
}

/// When the in-plane station speed drops below this fraction of the
/// free-stream speed, the normalized-time clock falls back to the
/// free-stream rate U/b so it cannot stall at flap reversal.
pub const FREESTREAM_DOMINANCE_FRACTION: f64 = 0.1;

/// Conditioning limit beyond which the collocation solve is rejected.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Precomputed lifting-line engine for a fixed station grid.
///
/// The linear system matched each step couples the unsteady series term
/// (c0/U)·a_n'·sin(n·theta_k) across stations; its matrix depends only on
/// the station grid, so it is factorized once at construction.
#[derive(Debug)]
pub struct AeroModel {
    cfg: AeroConfig,
    thetas: Vec<f64>,
    /// sin((n+1)·theta_k) with rows k, columns n.
    sin_table: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    condition: f64,
}

impl AeroModel {
    /// Build the engine on the uniform grid theta_k = k·pi/(m+1).
    pub fn new(cfg: AeroConfig) -> Result<Self> {
        cfg.validate()?;
        let m = cfg.fourier_modes;
        let d_theta = std::f64::consts::PI / (m as f64 + 1.0);
        let thetas = (1..=m).map(|k| d_theta * k as f64).collect();
        Self::with_stations(cfg, thetas)
    }

    /// Build the engine on an explicit station grid (exposed so degenerate
    /// placements can be exercised; the simulator always uses [`Self::new`]).
    pub fn with_stations(cfg: AeroConfig, thetas: Vec<f64>) -> Result<Self> {
        if thetas.len() != cfg.fourier_modes {
            return Err(SimError::config("station count must equal fourier_modes"));
        }
        for &theta in &thetas {
            check_theta("aero station grid", theta)?;
        }
        let m = cfg.fourier_modes;
        let mut sin_table = DMatrix::zeros(m, m);
        for (k, &theta) in thetas.iter().enumerate() {
            for n in 0..m {
                sin_table[(k, n)] = ((n as f64 + 1.0) * theta).sin();
            }
        }
        // Still air (U = 0) never reaches the linear solve — `rhs` freezes
        // the circulation instead — so factorize a placeholder identity.
        let matrix = if cfg.airspeed > 0.0 {
            &sin_table * (cfg.lift_slope * cfg.root_chord / cfg.airspeed)
        } else {
            DMatrix::identity(m, m)
        };
        let svd = matrix.clone().svd(false, false);
        let sigma_max = svd.singular_values.max();
        let sigma_min = svd.singular_values.min();
        let condition = if sigma_min > 0.0 { sigma_max / sigma_min } else { f64::INFINITY };
        if !condition.is_finite() || condition > CONDITION_LIMIT {
            return Err(SimError::SingularSystem { condition, limit: CONDITION_LIMIT });
        }
        let lu = matrix.lu();
        Ok(AeroModel { cfg, thetas, sin_table, lu, condition })
    }

    pub fn config(&self) -> &AeroConfig {
        &self.cfg
    }

    pub fn station_thetas(&self) -> &[f64] {
        &self.thetas
    }

    /// Condition estimate of the collocation matrix.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Total effective downwash (motion + induced) at each station [m/s].
    pub fn effective_downwash(
        &self,
        a: &DVector<f64>,
        downwash_motion: &DVector<f64>,
        span: f64,
    ) -> DVector<f64> {
        DVector::from_fn(self.thetas.len(), |k, _| {
            downwash_motion[k] + downwash_for_span(a, &self.cfg, self.thetas[k], span)
        })
    }

    /// Evolve the aerodynamic state: solve for the Fourier coefficient
    /// rates that keep the series lift equal to the Wagner-superposed lift
    /// of the total downwash at every station, and advance the Duhamel lag
    /// states.
    ///
    /// `downwash_motion[k]` is the motion-induced upwash at station k
    /// (positive increases lift); `span` is the instantaneous wingspan of
    /// the folded wing.
    pub fn rhs(
        &self,
        state: &AeroState,
        stations: &[StationGeometry],
        downwash_motion: &DVector<f64>,
        span: f64,
    ) -> Result<AeroRates> {
        let m = self.cfg.fourier_modes;
        if stations.len() != m || downwash_motion.len() != m || state.modes() != m {
            return Err(SimError::config("aero_rhs: station/state size mismatch"));
        }
        let w = &self.cfg.wagner;
        let a0 = self.cfg.lift_slope;
        let u = self.cfg.airspeed;
        if u == 0.0 {
            // Still air: the circulation normalization degenerates, and with
            // it the whole closure; hold every aerodynamic state frozen.
            return Ok(AeroRates {
                a_dot: DVector::zeros(m),
                lag_rates: DMatrix::zeros(m, 2),
                t_norm_rate: DVector::zeros(m),
            });
        }
        let phi0 = w.phi0();

        let w_eff = self.effective_downwash(&state.a, downwash_motion, span);

        // Residual: Wagner-superposed lift minus the quasi-steady part of
        // the series lift; what remains is the unsteady term in a_dot.
        let mut residual = DVector::zeros(m);
        for k in 0..m {
            let chord = stations[k].chord;
            if !(chord > 0.0) {
                return Err(SimError::domain("aero_rhs", format!("station {k} chord = {chord}")));
            }
            let wagner_lift = (a0 / u)
                * (phi0 * w_eff[k] + state.lag_states[(k, 0)] + state.lag_states[(k, 1)]);
            let mut steady = 0.0;
            for n in 0..m {
                steady += self.sin_table[(k, n)] * state.a[n];
            }
            residual[k] = wagner_lift - a0 * (self.cfg.root_chord / chord) * steady;
        }

        let a_dot = self
            .lu
            .solve(&residual)
            .ok_or(SimError::SingularSystem { condition: f64::INFINITY, limit: CONDITION_LIMIT })?;

        let mut lag_rates = DMatrix::zeros(m, 2);
        let mut t_norm_rate = DVector::zeros(m);
        for k in 0..m {
            let b = 0.5 * stations[k].chord;
            let v_e = stations[k].v_e;
            let clock = if v_e < FREESTREAM_DOMINANCE_FRACTION * u { u / b } else { v_e / b };
            t_norm_rate[k] = clock;
            lag_rates[(k, 0)] = w.eps1 * clock * (w.psi1 * w_eff[k] - state.lag_states[(k, 0)]);
            lag_rates[(k, 1)] = w.eps2 * clock * (w.psi2 * w_eff[k] - state.lag_states[(k, 1)]);
        }

        Ok(AeroRates { a_dot, lag_rates, t_norm_rate })
    }

    /// Integrate the sectional loads into a body-frame wrench about
    /// `about_body` (normally the center of mass, the body origin).
    ///
    /// Sectional lift is 1/2·rho·U_rel^2·c·C_L per unit span, applied
    /// perpendicular to the local relative flow within the section plane;
    /// the total normal flow (motion + induced) tilts the force, which is
    /// what produces the induced-drag and thrust components.
    pub fn integrate_wrench(
        &self,
        stations: &[StationGeometry],
        a: &DVector<f64>,
        a_dot: &DVector<f64>,
        span: f64,
        about_body: &nalgebra::Vector3<f64>,
    ) -> Result<ForceMoment> {
        let m = self.cfg.fourier_modes;
        if stations.len() != m {
            return Err(SimError::config("integrate_wrench: station count mismatch"));
        }
        let d_theta = std::f64::consts::PI / (m as f64 + 1.0);
        let rho = self.cfg.air_density;
        let mut force = nalgebra::Vector3::zeros();
        let mut moment = nalgebra::Vector3::zeros();
        for st in stations {
            let w_total = st.w_motion + downwash_for_span(a, &self.cfg, st.theta, span);
            let flow_sq = st.flow_chordwise * st.flow_chordwise + w_total * w_total;
            if flow_sq <= f64::EPSILON {
                continue;
            }
            let inv_norm = flow_sq.sqrt().recip();
            let d_c = st.flow_chordwise * inv_norm;
            let d_n = w_total * inv_norm;
            // Unit lift direction: the in-plane flow rotated a quarter turn
            // so that backward flow maps onto the section normal.
            let chord_dir = nalgebra::Vector3::x();
            let lift_dir = chord_dir * d_n - st.normal_body * d_c;
            let c_l = sectional_lift_coefficient(a, a_dot, &self.cfg, st.theta, st.chord)?;
            let lift_per_span = 0.5 * rho * st.v_e * st.v_e * st.chord * c_l;
            let weight = d_theta * 0.5 * span * st.theta.sin();
            let f = lift_dir * (lift_per_span * weight);
            force += f;
            moment += (st.position_body - about_body).cross(&f);
        }
        if !(force.iter().all(|v| v.is_finite()) && moment.iter().all(|v| v.is_finite())) {
            return Err(SimError::NonFinite { context: "integrate_wrench".into() });
        }
        Ok(ForceMoment { force, moment })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use nalgebra::Vector3;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn cfg(airspeed: f64, span: f64, modes: usize) -> AeroConfig {
        AeroConfig {
            airspeed,
            span,
            fourier_modes: modes,
            root_chord: 0.1,
            ..AeroConfig::default()
        }
    }

    /// Straight frozen wing flying at cfg.airspeed with uniform upwash `w`,
    /// chord law given by `chord`.
    fn frozen_stations(
        cfg: &AeroConfig,
        w_motion: f64,
        chord: impl Fn(f64) -> f64,
    ) -> Vec<StationGeometry> {
        let m = cfg.fourier_modes;
        let d_theta = std::f64::consts::PI / (m as f64 + 1.0);
        (1..=m)
            .map(|k| {
                let theta = d_theta * k as f64;
                let u = cfg.airspeed;
                StationGeometry {
                    y: 0.5 * cfg.span * theta.cos(),
                    theta,
                    chord: chord(theta),
                    position_body: Vector3::new(0.0, 0.5 * cfg.span * theta.cos(), 0.0),
                    normal_body: Vector3::new(0.0, 0.0, -1.0),
                    span_dir_body: Vector3::new(0.0, theta.cos().signum(), 0.0),
                    joint_velocity_body: Vector3::zeros(),
                    v_e: (u * u + w_motion * w_motion).sqrt(),
                    flow_chordwise: -u,
                    w_motion,
                }
            })
            .collect()
    }

    /// March the aero state with RK4 under frozen geometry.
    fn advance(
        model: &AeroModel,
        state: &mut AeroState,
        stations: &[StationGeometry],
        w_motion: &DVector<f64>,
        dt: f64,
        steps: usize,
    ) {
        let span = model.config().span;
        let add = |s: &AeroState, r: &AeroRates, h: f64| AeroState {
            a: &s.a + &r.a_dot * h,
            lag_states: &s.lag_states + &r.lag_rates * h,
            t_norm: &s.t_norm + &r.t_norm_rate * h,
        };
        for _ in 0..steps {
            let k1 = model.rhs(state, stations, w_motion, span).unwrap();
            let s2 = add(state, &k1, 0.5 * dt);
            let k2 = model.rhs(&s2, stations, w_motion, span).unwrap();
            let s3 = add(state, &k2, 0.5 * dt);
            let k3 = model.rhs(&s3, stations, w_motion, span).unwrap();
            let s4 = add(state, &k3, dt);
            let k4 = model.rhs(&s4, stations, w_motion, span).unwrap();
            state.a += (k1.a_dot + k2.a_dot * 2.0 + k3.a_dot * 2.0 + k4.a_dot) * (dt / 6.0);
            state.lag_states +=
                (k1.lag_rates + k2.lag_rates * 2.0 + k3.lag_rates * 2.0 + k4.lag_rates) * (dt / 6.0);
            state.t_norm += (k1.t_norm_rate + k2.t_norm_rate * 2.0 + k3.t_norm_rate * 2.0
                + k4.t_norm_rate)
                * (dt / 6.0);
        }
    }

    /// Independent steady lifting-line solve: series lift equals the
    /// quasi-steady downwash balance at every station.
    fn steady_oracle(cfg: &AeroConfig, thetas: &[f64], chord: impl Fn(f64) -> f64, alpha: f64) -> DVector<f64> {
        let m = thetas.len();
        let mut mat = DMatrix::zeros(m, m);
        for (k, &theta) in thetas.iter().enumerate() {
            let x = theta.cos();
            let mut ratio_prev = 0.0;
            let mut ratio = 1.0;
            for n in 0..m {
                let nn = n as f64 + 1.0;
                mat[(k, n)] = (cfg.root_chord / chord(theta)) * (nn * theta).sin()
                    + cfg.lift_slope * cfg.root_chord / (4.0 * cfg.span) * nn * ratio;
                let next = 2.0 * x * ratio - ratio_prev;
                ratio_prev = ratio;
                ratio = next;
            }
        }
        let rhs = DVector::from_element(m, alpha);
        mat.lu().solve(&rhs).unwrap()
    }

    #[test]
    fn circulation_single_mode_peak() {
        let cfg = cfg(1.0, 0.34, 3);
        let a = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let gamma = circulation(&a, &cfg, std::f64::consts::FRAC_PI_2).unwrap();
        assert_relative_eq!(gamma, 0.5 * std::f64::consts::TAU * 0.1, max_relative = 1e-12);
    }

    #[test]
    fn circulation_two_mode_series_value() {
        let cfg = cfg(2.0, 0.34, 2);
        let a = DVector::from_vec(vec![0.1, 0.05]);
        let gamma = circulation(&a, &cfg, std::f64::consts::FRAC_PI_4).unwrap();
        let expected = 0.2 * std::f64::consts::PI
            * (0.1 * std::f64::consts::FRAC_PI_4.sin() + 0.05 * std::f64::consts::FRAC_PI_2.sin());
        assert_relative_eq!(gamma, expected, max_relative = 1e-12);
        // 0.0758448 m^2/s to four significant figures.
        assert_abs_diff_eq!(gamma, 0.07585, epsilon = 1e-5);
    }

    #[test]
    fn circulation_vanishes_toward_the_tip() {
        let cfg = cfg(0.8, 0.34, 5);
        let a = DVector::from_vec(vec![0.3, -0.1, 0.05, 0.02, -0.01]);
        let gamma = circulation(&a, &cfg, 1e-9).unwrap();
        assert_abs_diff_eq!(gamma, 0.0, epsilon = 1e-9);
        assert!(circulation(&a, &cfg, 0.0).is_err());
        assert!(circulation(&a, &cfg, std::f64::consts::PI).is_err());
    }

    #[test]
    fn downwash_of_elliptic_loading_is_uniform() {
        let cfg = cfg(0.8, 0.4, 4);
        let a = DVector::from_vec(vec![0.2, 0.0, 0.0, 0.0]);
        let expected = -(cfg.lift_slope * cfg.root_chord * cfg.airspeed / (4.0 * cfg.span)) * 0.2;
        for &theta in &[0.03, 0.4, std::f64::consts::FRAC_PI_2, 2.9] {
            let w = induced_downwash(&a, &cfg, theta).unwrap();
            assert_relative_eq!(w, expected, max_relative = 1e-12);
        }
        let zero = induced_downwash(&DVector::zeros(4), &cfg, 1.0).unwrap();
        assert_abs_diff_eq!(zero, 0.0);
    }

    #[test]
    fn downwash_second_mode_matches_term_by_term_series() {
        let cfg = cfg(0.8, 0.4, 2);
        let a = DVector::from_vec(vec![0.0, 1.0]);
        let theta = std::f64::consts::FRAC_PI_3;
        let w = induced_downwash(&a, &cfg, theta).unwrap();
        // Direct evaluation of the quotient away from the tips.
        let expected = -(cfg.lift_slope * cfg.root_chord * cfg.airspeed / (4.0 * cfg.span))
            * 2.0
            * (2.0 * theta).sin()
            / theta.sin();
        assert_relative_eq!(w, expected, max_relative = 1e-12);
    }

    #[test]
    fn downwash_near_tips_uses_the_analytic_limit() {
        let cfg = cfg(0.8, 0.4, 3);
        let a = DVector::from_vec(vec![0.1, 0.0, 0.05]);
        // sin(n·theta)/sin(theta) -> n at theta -> 0, so the series tends to
        // sum n^2 a_n.
        let scale = cfg.lift_slope * cfg.root_chord * cfg.airspeed / (4.0 * cfg.span);
        let expected = -scale * (1.0 * 0.1 + 9.0 * 0.05);
        let w = induced_downwash(&a, &cfg, 1e-12).unwrap();
        assert_relative_eq!(w, expected, max_relative = 1e-6);
        assert!(w.is_finite());
    }

    #[test]
    fn lift_coefficient_steady_elliptic_is_constant() {
        let cfg = cfg(0.8, 0.34, 3);
        let a = DVector::from_vec(vec![0.25, 0.0, 0.0]);
        let a_dot = DVector::zeros(3);
        for &theta in &[0.2_f64, 1.0, 2.4] {
            let chord = cfg.root_chord * theta.sin();
            let cl = sectional_lift_coefficient(&a, &a_dot, &cfg, theta, chord).unwrap();
            assert_relative_eq!(cl, cfg.lift_slope * 0.25, max_relative = 1e-12);
        }
    }

    #[test]
    fn lift_coefficient_pure_unsteady_term() {
        let cfg = cfg(0.8, 0.34, 2);
        let a = DVector::zeros(2);
        let a_dot = DVector::from_vec(vec![3.0, 0.0]);
        let cl = sectional_lift_coefficient(&a, &a_dot, &cfg, std::f64::consts::FRAC_PI_2, 0.07)
            .unwrap();
        assert_relative_eq!(
            cl,
            cfg.lift_slope * (cfg.root_chord / cfg.airspeed) * 3.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn lift_coefficient_matches_circulation_form() {
        // C_L = 2*Gamma/(U*c) + 2*Gamma_dot/U^2 must agree with the series
        // form for arbitrary coefficients.
        let cfg = cfg(0.8, 0.4, 6);
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..500 {
            let a = DVector::from_fn(6, |_, _| rng.gen_range(-0.5..0.5));
            let a_dot = DVector::from_fn(6, |_, _| rng.gen_range(-20.0..20.0));
            let theta = rng.gen_range(0.05..std::f64::consts::PI - 0.05);
            let chord = rng.gen_range(0.02..0.15);
            let series = sectional_lift_coefficient(&a, &a_dot, &cfg, theta, chord).unwrap();
            let gamma = circulation(&a, &cfg, theta).unwrap();
            let gamma_dot = circulation(&a_dot, &cfg, theta).unwrap();
            let direct = 2.0 * gamma / (cfg.airspeed * chord)
                + 2.0 * gamma_dot / (cfg.airspeed * cfg.airspeed);
            assert_relative_eq!(series, direct, max_relative = 1e-11);
        }
    }

    #[test]
    fn wagner_reference_values() {
        let w = WagnerCoefficients::default();
        assert_eq!(wagner(0.0, &w).unwrap(), 0.5);
        assert_abs_diff_eq!(wagner(10.0, &w).unwrap(), 0.8786, epsilon = 5e-5);
        assert!((wagner(200.0, &w).unwrap() - 1.0).abs() < 1e-4);
        assert!(wagner(-1e-9, &w).is_err());
    }

    #[test]
    fn wagner_is_strictly_increasing_and_bounded() {
        let w = WagnerCoefficients::default();
        let mut prev = wagner(0.0, &w).unwrap();
        for i in 1..=400 {
            let t = i as f64 * 0.5;
            let phi = wagner(t, &w).unwrap();
            assert!(phi > prev, "Wagner function must increase (t={t})");
            assert!(phi < 1.0);
            prev = phi;
        }
    }

    #[test]
    fn rhs_keeps_zero_state_at_zero_downwash() {
        let cfg = cfg(0.8, 0.4, 8);
        let model = AeroModel::new(cfg.clone()).unwrap();
        let stations = frozen_stations(&cfg, 0.0, |t| 0.1 * t.sin());
        let mut state = AeroState::zeros(8);
        let w = DVector::zeros(8);
        advance(&model, &mut state, &stations, &w, 1e-3, 200);
        assert_abs_diff_eq!(state.a.norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(state.lag_states.norm(), 0.0, epsilon = 1e-14);
        // The normalized-time clock still runs.
        assert!(state.t_norm.min() > 0.0);
    }

    #[test]
    fn rhs_converges_to_the_static_lifting_line_solution() {
        let span = 0.4_f64;
        let cfg = cfg(0.8, span, 12);
        let model = AeroModel::new(cfg.clone()).unwrap();
        let alpha = 0.05;
        let w_uniform = cfg.airspeed * alpha;
        let chord = |theta: f64| 0.08 + 0.0 * theta; // rectangular
        let stations = frozen_stations(&cfg, w_uniform, chord);
        let mut state = AeroState::zeros(12);
        let w = DVector::from_element(12, w_uniform);
        // ~10 s of flight settles the slowest Jones mode.
        advance(&model, &mut state, &stations, &w, 2e-3, 5000);
        let expected = steady_oracle(&cfg, model.station_thetas(), chord, alpha);
        assert_relative_eq!(state.a.norm(), expected.norm(), max_relative = 1e-5);
        for n in 0..12 {
            assert_abs_diff_eq!(state.a[n], expected[n], epsilon = 1e-6 * expected.norm().max(1.0));
        }
    }

    #[test]
    fn symmetric_downwash_leaves_even_modes_empty() {
        let cfg = cfg(0.8, 0.4, 9);
        let model = AeroModel::new(cfg.clone()).unwrap();
        let stations = frozen_stations(&cfg, 0.0, |t| 0.09 * t.sin());
        // Symmetric (even in y, so symmetric about theta = pi/2) downwash.
        let w = DVector::from_fn(9, |k, _| 0.1 * (model.station_thetas()[k].sin()));
        let mut state = AeroState::zeros(9);
        advance(&model, &mut state, &stations, &w, 1e-3, 3000);
        let scale = state.a.amax();
        assert!(scale > 1e-4, "loading should develop");
        for n in (1..9).step_by(2) {
            // index n is mode n+1 (even mode numbers)
            assert!(state.a[n].abs() < 1e-10 * scale.max(1.0), "even mode {} = {}", n + 1, state.a[n]);
        }
        // Asymmetric downwash must excite them.
        let w_asym = DVector::from_fn(9, |k, _| {
            let theta: f64 = model.station_thetas()[k];
            0.1 * theta.sin() + 0.05 * theta.cos()
        });
        let mut state2 = AeroState::zeros(9);
        advance(&model, &mut state2, &stations, &w_asym, 1e-3, 3000);
        assert!(state2.a[1].abs() > 1e-6);
    }

    #[test]
    fn degenerate_station_grid_is_rejected() {
        let cfg = cfg(0.8, 0.4, 3);
        let err = AeroModel::with_stations(cfg, vec![0.5, 0.5, 1.0]);
        assert!(matches!(err, Err(SimError::SingularSystem { .. })));
    }

    #[test]
    fn wrench_is_zero_without_circulation() {
        let cfg = cfg(0.8, 0.4, 6);
        let model = AeroModel::new(cfg.clone()).unwrap();
        let stations = frozen_stations(&cfg, 0.0, |t| 0.1 * t.sin());
        let wrench = model
            .integrate_wrench(
                &stations,
                &DVector::zeros(6),
                &DVector::zeros(6),
                cfg.span,
                &Vector3::zeros(),
            )
            .unwrap();
        assert_abs_diff_eq!(wrench.force.norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(wrench.moment.norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn symmetric_loading_has_no_roll_or_side_force() {
        let cfg = cfg(0.8, 0.4, 10);
        let model = AeroModel::new(cfg.clone()).unwrap();
        let stations = frozen_stations(&cfg, 0.04, |t| 0.1 * t.sin());
        let mut a = DVector::zeros(10);
        a[0] = 0.2;
        a[2] = -0.03;
        let wrench = model
            .integrate_wrench(&stations, &a, &DVector::zeros(10), cfg.span, &Vector3::zeros())
            .unwrap();
        assert_abs_diff_eq!(wrench.force.y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(wrench.moment.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(wrench.moment.z, 0.0, epsilon = 1e-12);
        // Lift points up (-z) and produces no yaw for symmetric loading.
        assert!(wrench.force.z < -1e-4);
    }

    #[test]
    fn steady_elliptic_wing_matches_classical_lift_slope() {
        // AR = 4S/(pi c0) = 8 requires S = 2*pi*c0.
        let root_chord = 0.1;
        let span = 2.0 * std::f64::consts::PI * root_chord;
        let mut c = cfg(0.8, span, 16);
        c.root_chord = root_chord;
        let model = AeroModel::new(c.clone()).unwrap();
        let alpha = 0.03_f64;
        let w_uniform = c.airspeed * alpha;
        let stations = frozen_stations(&c, w_uniform, |t| root_chord * t.sin());
        let mut state = AeroState::zeros(16);
        let w = DVector::from_element(16, w_uniform);
        advance(&model, &mut state, &stations, &w, 2e-3, 6000);
        // For elliptic loading the total lift coefficient is a0*a1.
        let cl_total = c.lift_slope * state.a[0];
        let ar = 4.0 * span / (std::f64::consts::PI * root_chord);
        let expected = c.lift_slope * alpha / (1.0 + c.lift_slope / (std::f64::consts::PI * ar));
        assert_relative_eq!(cl_total, expected, max_relative = 0.01);
    }

    /// The closed-loop calibration truncates the circulation series at 6
    /// modes, while the module default keeps 16. Quantify what truncation
    /// costs on a settled asymmetric loading (the banking mechanism): lift
    /// and roll moment from 6 modes must sit within 2% of the 16-mode
    /// values for the same physical downwash field.
    #[test]
    fn six_mode_truncation_stays_within_two_percent_of_sixteen() {
        let span = 0.34;
        let run = |modes: usize| {
            let mut c = cfg(0.8, span, modes);
            c.root_chord = 0.1;
            let model = AeroModel::new(c.clone()).unwrap();
            let stations = frozen_stations(&c, 0.0, |t| 0.1 * t.sin());
            // Smooth downwash with a lateral gradient, the shape a
            // differential-flexion command produces.
            let w = DVector::from_fn(modes, |k, _| {
                let theta: f64 = model.station_thetas()[k];
                0.08 * theta.sin() + 0.04 * theta.cos()
            });
            let mut state = AeroState::zeros(modes);
            advance(&model, &mut state, &stations, &w, 2e-3, 5000);
            let rates = model.rhs(&state, &stations, &w, span).unwrap();
            model
                .integrate_wrench(&stations, &state.a, &rates.a_dot, span, &Vector3::zeros())
                .unwrap()
        };
        let coarse = run(6);
        let fine = run(16);
        assert!(fine.force.z < -1e-3, "reference lift should develop");
        assert!(fine.moment.x.abs() > 1e-5, "reference roll moment should develop");
        assert_relative_eq!(coarse.force.z, fine.force.z, max_relative = 0.02);
        assert_relative_eq!(coarse.moment.x, fine.moment.x, max_relative = 0.02);
    }
}
