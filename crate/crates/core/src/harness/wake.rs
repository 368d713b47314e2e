//! Shed-vorticity reconstruction from a recorded trace.
//!
//! This is a deliberately simple ribbon model, not a free-wake solver: per
//! trace interval and station, the circulation change sheds a vortex
//! element of strength `gamma = -dGamma/dt * dt = -(Gamma_i - Gamma_{i-1})`
//! at the trailing-edge position of that station at shedding time, which
//! then convects downstream at the free-stream speed. Coordinates are
//! body-carried wind axes: x points downstream of the trailing edge (so the
//! sheet trails off to negative x), y spanwise, z down.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::error::{Result, SimError};
use crate::kinematics::{gait_sample_at_phase, station_geometry};

use super::config::ScenarioConfig;
use super::trace::RunTrace;

/// One shed vortex element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WakePoint {
    /// Downstream coordinate at the end of the trace [m] (negative:
    /// behind the wing).
    pub x: f64,
    /// Spanwise position of the shedding station at shedding time [m].
    pub y: f64,
    /// Vertical position of the trailing edge at shedding time [m], body
    /// z-down.
    pub z: f64,
    /// Shed circulation increment [m^2/s].
    pub gamma: f64,
    /// Shedding time [s].
    pub shed_time: f64,
    /// Station index the element came from.
    pub station: usize,
}

/// Structured set of shed vortex elements, one per (interval, station).
#[derive(Debug, Clone)]
pub struct WakeDataset {
    pub points: Vec<WakePoint>,
    pub stations: usize,
    pub intervals: usize,
}

impl WakeDataset {
    /// Summed |gamma| over the left (y < 0) and right (y > 0) half-spans.
    pub fn half_span_magnitudes(&self) -> (f64, f64) {
        let mut left = 0.0;
        let mut right = 0.0;
        for p in &self.points {
            if p.y < 0.0 {
                left += p.gamma.abs();
            } else if p.y > 0.0 {
                right += p.gamma.abs();
            }
        }
        (left, right)
    }

    /// Left/right imbalance of shed vorticity, 0 for a perfectly symmetric
    /// sheet, up to 1 when one side sheds everything.
    pub fn asymmetry(&self) -> f64 {
        let (left, right) = self.half_span_magnitudes();
        let total = left + right;
        if total > 0.0 {
            (left - right).abs() / total
        } else {
            0.0
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "x,y,z,gamma,shed_time,station")?;
        for p in &self.points {
            writeln!(out, "{},{},{},{},{},{}", p.x, p.y, p.z, p.gamma, p.shed_time, p.station)?;
        }
        Ok(())
    }

    pub fn write_csv_file<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = fs::File::create(path)?;
        self.write_csv(BufWriter::new(file))?;
        Ok(())
    }
}

/// Reconstruct the shed-vorticity ribbon behind a run.
///
/// Needs the per-station circulation channels (`gamma_XX`), the wing phase,
/// and the regulator inputs that the scenario runner records; station
/// trailing-edge positions are rebuilt from the gait at each shedding time.
pub fn export_wake(trace: &RunTrace, config: &ScenarioConfig) -> Result<WakeDataset> {
    let time = trace.time()?;
    if time.len() < 2 {
        return Err(SimError::config("wake export needs at least two trace rows"));
    }
    let stations = config.aero.fourier_modes;
    let mut gamma_channels = Vec::with_capacity(stations);
    for k in 0..stations {
        gamma_channels.push(trace.channel(&format!("gamma_{k:02}"))?);
    }
    let phase = trace.channel("phase")?;
    let n_controls = config.gait.num_regulators();
    let mut input_channels = Vec::with_capacity(n_controls);
    for c in 0..n_controls {
        input_channels.push(trace.channel(&format!("u_{c:02}"))?);
    }
    let u_stream = config.aero.airspeed;
    let t_end = *time.last().expect("nonempty");

    let mut points = Vec::with_capacity((time.len() - 1) * stations);
    let mut inputs = vec![0.0; n_controls];
    for i in 1..time.len() {
        let t_shed = time[i];
        for (c, channel) in input_channels.iter().enumerate() {
            inputs[c] = channel[i];
        }
        let sample = gait_sample_at_phase(&config.gait, phase[i], &inputs);
        let geometry = station_geometry(&sample.wing, &config.wing, stations)?;
        for (k, st) in geometry.iter().enumerate() {
            let shed = -(gamma_channels[k][i] - gamma_channels[k][i - 1]);
            // Trailing edge sits three quarter-chords behind the
            // quarter-chord line; downstream convection then carries the
            // element for the remaining trace duration.
            let te_x = st.position_body.x - 0.75 * st.chord;
            points.push(WakePoint {
                x: te_x - u_stream * (t_end - t_shed),
                y: st.position_body.y,
                z: st.position_body.z,
                gamma: shed,
                shed_time: t_shed,
                station: k,
            });
        }
    }
    Ok(WakeDataset { points, stations, intervals: time.len() - 1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scenario::run_scenario;

    fn wake_config(modes: usize) -> ScenarioConfig {
        let mut config = ScenarioConfig::default_banking();
        config.aero.fourier_modes = modes;
        config
    }

    /// Hand-build a trace carrying only the channels the exporter needs.
    fn synthetic_trace(
        config: &ScenarioConfig,
        times: &[f64],
        gamma: impl Fn(usize, f64) -> f64,
        inputs: impl Fn(usize, f64) -> f64,
    ) -> RunTrace {
        let m = config.aero.fourier_modes;
        let nc = config.gait.num_regulators();
        let mut columns = vec!["t".to_owned(), "phase".to_owned()];
        for c in 0..nc {
            columns.push(format!("u_{c:02}"));
        }
        for k in 0..m {
            columns.push(format!("gamma_{k:02}"));
        }
        let mut trace = RunTrace::new(columns).unwrap();
        let omega = config.gait.flap_frequency * std::f64::consts::TAU;
        for &t in times {
            let mut row = vec![t, omega * t];
            for c in 0..nc {
                row.push(inputs(c, t));
            }
            for k in 0..m {
                row.push(gamma(k, t));
            }
            trace.push_row(row).unwrap();
        }
        trace
    }

    #[test]
    fn constant_circulation_sheds_nothing() {
        let config = wake_config(6);
        let times: Vec<f64> = (0..40).map(|i| i as f64 * 1e-3).collect();
        let trace = synthetic_trace(&config, &times, |k, _| 0.3 + 0.01 * k as f64, |_, _| 0.0);
        let wake = export_wake(&trace, &config).unwrap();
        assert_eq!(wake.points.len(), 39 * 6);
        assert!(wake.points.iter().all(|p| p.gamma == 0.0));
        assert_eq!(wake.asymmetry(), 0.0);
    }

    #[test]
    fn symmetric_flapping_sheds_a_mirror_symmetric_sheet() {
        let config = wake_config(8);
        let outcome = {
            let mut c = config.clone();
            c.duration = 0.4;
            c.decimate = 5;
            // Open-loop symmetric gait: disable the solver so every update
            // holds the zero input, without ever reaching the fault limit.
            c.controller.solver.max_outer = 0;
            c.controller.max_consecutive_failures = usize::MAX;
            c.gait.asymmetry_gains = vec![0.0, 0.0];
            c.aero.fourier_modes = 8;
            run_scenario(&c).unwrap()
        };
        let mut config = config;
        config.gait.asymmetry_gains = vec![0.0, 0.0];
        let wake = export_wake(&outcome.trace, &config).unwrap();
        // Station k at theta_k mirrors station m-1-k; compare every shed
        // element against its spanwise mirror.
        let m = wake.stations;
        for chunk in wake.points.chunks(m) {
            for k in 0..m {
                let a = &chunk[k];
                let b = &chunk[m - 1 - k];
                assert!((a.y + b.y).abs() < 1e-9, "y {} vs {}", a.y, b.y);
                assert!((a.z - b.z).abs() < 1e-9, "z {} vs {}", a.z, b.z);
                assert!((a.x - b.x).abs() < 1e-9, "x {} vs {}", a.x, b.x);
                assert!(
                    (a.gamma - b.gamma).abs() < 1e-9,
                    "gamma {} vs {}",
                    a.gamma,
                    b.gamma
                );
            }
        }
        assert!(wake.asymmetry() < 1e-9);
    }

    #[test]
    fn banked_circulation_history_reads_as_asymmetric() {
        let config = wake_config(6);
        let times: Vec<f64> = (0..60).map(|i| i as f64 * 1e-3).collect();
        // Left-half stations (theta > pi/2, y < 0) oscillate harder than the
        // right half, as in a rolling maneuver.
        let trace = synthetic_trace(
            &config,
            &times,
            |k, t| {
                let side = if k >= 3 { 1.0 } else { 0.4 };
                side * (30.0 * t).sin() * 0.05
            },
            |_, _| 0.0,
        );
        let wake = export_wake(&trace, &config).unwrap();
        let (left, right) = wake.half_span_magnitudes();
        assert!(left > 0.0 && right > 0.0);
        assert!(wake.asymmetry() > 0.1, "asymmetry = {}", wake.asymmetry());
    }

    #[test]
    fn downstream_coordinate_reflects_shedding_time() {
        let mut config = wake_config(4);
        // Freeze the wing so the trailing edge holds still and the only
        // x-variation left is the convection itself.
        config.gait.plunge_amplitude = 0.0;
        config.gait.flexion_amplitude = 0.0;
        let times = [0.0, 0.1, 0.2];
        let trace = synthetic_trace(&config, &times, |_, t| t, |_, _| 0.0);
        let wake = export_wake(&trace, &config).unwrap();
        // Elements shed earlier have drifted further downstream (more
        // negative x), spaced by U * dt.
        let first = wake.points[0].x;
        let second = wake.points[4].x;
        let drift = second - first;
        let expected = config.aero.airspeed * 0.1;
        assert!(
            (drift - expected).abs() < 1e-6,
            "drift {drift} vs expected {expected} (TE motion aside)"
        );
        assert!(wake.points.iter().all(|p| p.gamma == -0.1));
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let config = wake_config(4);
        let times = [0.0, 0.05];
        let trace = synthetic_trace(&config, &times, |_, t| t, |_, _| 0.0);
        let wake = export_wake(&trace, &config).unwrap();
        let mut bytes = Vec::new();
        wake.write_csv(&mut bytes).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x,y,z,gamma,shed_time,station");
        assert_eq!(lines.count(), 4);
    }
}
