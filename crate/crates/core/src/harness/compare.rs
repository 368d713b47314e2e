//! Trace-against-reference comparison: per-channel deviation statistics,
//! tolerance-band coverage, and period estimation via autocorrelation.
//!
//! The reference may come from another simulator run or from external data
//! exported to the same trace format. External frames that disagree with
//! the body convention (x forward, y right, z down) can be remapped by
//! listing sign-flipped channels in [`CompareOptions::flip_reference`].

use crate::error::{Result, SimError};

use super::trace::RunTrace;

#[derive(Debug, Clone)]
pub struct CompareOptions {
    /// Channels to compare; every name must exist in both traces.
    pub channels: Vec<String>,
    /// Half-width of the agreement band (same unit as the channel).
    pub band: f64,
    /// Linearly resample the reference onto the trace timeline when the
    /// sample grids differ; without it, differing grids are an error.
    pub resample: bool,
    /// Reference channels to negate before comparing (frame remap for
    /// external data with opposite sign conventions).
    pub flip_reference: Vec<String>,
    /// Samples before this time [s] are excluded from the period estimate
    /// (transient removal); deviation statistics always use the full
    /// overlap.
    pub period_skip: f64,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            channels: Vec::new(),
            band: 0.3,
            resample: false,
            flip_reference: Vec::new(),
            period_skip: 0.0,
        }
    }
}

/// Comparison result for a single channel.
#[derive(Debug, Clone)]
pub struct ChannelReport {
    pub channel: String,
    /// max |trace - reference| over the compared samples.
    pub max_deviation: f64,
    /// Fraction of samples with |trace - reference| <= band.
    pub band_fraction: f64,
    /// Dominant period of the trace channel [s], when one exists.
    pub period: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub channels: Vec<ChannelReport>,
    pub band: f64,
    pub samples: usize,
}

impl ComparisonReport {
    /// Worst channel by maximum deviation.
    pub fn max_deviation(&self) -> f64 {
        self.channels.iter().map(|c| c.max_deviation).fold(0.0, f64::max)
    }

    /// True when every compared sample of every channel stayed in band.
    pub fn all_in_band(&self) -> bool {
        self.channels.iter().all(|c| c.band_fraction >= 1.0)
    }
}

/// Compare selected channels of `trace` against `reference`.
pub fn compare_traces(
    trace: &RunTrace,
    reference: &RunTrace,
    options: &CompareOptions,
) -> Result<ComparisonReport> {
    if options.channels.is_empty() {
        return Err(SimError::config("compare: no channels requested"));
    }
    if !(options.band >= 0.0) {
        return Err(SimError::config("compare: band must be nonnegative"));
    }
    for name in &options.channels {
        for (label, t) in [("trace", trace), ("reference", reference)] {
            if t.column_index(name).is_none() {
                return Err(SimError::config(format!(
                    "compare: channel {name:?} missing from the {label}"
                )));
            }
        }
    }

    let t_trace = trace.time()?;
    let t_ref = reference.time()?;
    let aligned_ref_times = same_grid(&t_trace, &t_ref);
    if !aligned_ref_times && !options.resample {
        return Err(SimError::config(
            "compare: sample grids differ; enable resampling to proceed",
        ));
    }

    // Overlapping window on the trace timeline.
    let (lo, hi) = (
        t_trace.first().copied().unwrap_or(0.0).max(t_ref.first().copied().unwrap_or(0.0)),
        t_trace.last().copied().unwrap_or(0.0).min(t_ref.last().copied().unwrap_or(0.0)),
    );
    if !(hi > lo) && !aligned_ref_times {
        return Err(SimError::config("compare: traces do not overlap in time"));
    }

    let mut reports = Vec::with_capacity(options.channels.len());
    let mut samples = 0;
    for name in &options.channels {
        let a = trace.channel(name)?;
        let mut b = reference.channel(name)?;
        if options.flip_reference.iter().any(|f| f == name) {
            for v in &mut b {
                *v = -*v;
            }
        }

        let (values_a, values_b, times): (Vec<f64>, Vec<f64>, Vec<f64>) = if aligned_ref_times {
            (a, b, t_trace.clone())
        } else {
            let mut va = Vec::new();
            let mut vb = Vec::new();
            let mut ts = Vec::new();
            for (i, &t) in t_trace.iter().enumerate() {
                if t < lo || t > hi {
                    continue;
                }
                va.push(a[i]);
                vb.push(linear_sample(&t_ref, &b, t));
                ts.push(t);
            }
            (va, vb, ts)
        };
        if values_a.is_empty() {
            return Err(SimError::config("compare: empty overlap after alignment"));
        }
        samples = values_a.len();

        let mut max_deviation = 0.0_f64;
        let mut in_band = 0usize;
        for (&x, &y) in values_a.iter().zip(&values_b) {
            let dev = (x - y).abs();
            max_deviation = max_deviation.max(dev);
            if dev <= options.band {
                in_band += 1;
            }
        }

        let period_signal: Vec<f64> = values_a
            .iter()
            .zip(&times)
            .filter(|(_, &t)| t >= options.period_skip)
            .map(|(&v, _)| v)
            .collect();
        let dt = if times.len() >= 2 { times[1] - times[0] } else { 0.0 };
        let period = estimate_period(&period_signal, dt);

        reports.push(ChannelReport {
            channel: name.clone(),
            max_deviation,
            band_fraction: in_band as f64 / values_a.len() as f64,
            period,
        });
    }
    Ok(ComparisonReport { channels: reports, band: options.band, samples })
}

fn same_grid(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(1.0))
}

fn linear_sample(times: &[f64], values: &[f64], t: f64) -> f64 {
    match times.binary_search_by(|probe| probe.partial_cmp(&t).expect("finite times")) {
        Ok(i) => values[i],
        Err(i) => {
            if i == 0 {
                values[0]
            } else if i >= times.len() {
                values[times.len() - 1]
            } else {
                let (t0, t1) = (times[i - 1], times[i]);
                let alpha = (t - t0) / (t1 - t0);
                values[i - 1] * (1.0 - alpha) + values[i] * alpha
            }
        }
    }
}

/// Dominant period via the first significant autocorrelation peak,
/// refined by parabolic interpolation around the peak lag.
///
/// Returns `None` for constant or too-short signals and when no lag beats
/// the significance threshold (20% of the zero-lag power).
pub fn estimate_period(signal: &[f64], dt: f64) -> Option<f64> {
    let n = signal.len();
    if n < 8 || !(dt > 0.0) {
        return None;
    }
    let mean = signal.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = signal.iter().map(|v| v - mean).collect();
    let r0: f64 = centered.iter().map(|v| v * v).sum();
    if r0 <= 0.0 {
        return None;
    }
    let max_lag = n / 2;
    let mut r = Vec::with_capacity(max_lag + 1);
    r.push(r0);
    for lag in 1..=max_lag {
        let mut sum = 0.0;
        for i in lag..n {
            sum += centered[i] * centered[i - lag];
        }
        r.push(sum);
    }
    // First local maximum after the autocorrelation has dipped, strong
    // enough to be a real repetition rather than noise.
    let threshold = 0.2 * r0;
    let mut dipped = false;
    for lag in 1..max_lag {
        if !dipped && r[lag] < 0.5 * r0 {
            dipped = true;
        }
        if dipped && r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1] && r[lag] > threshold {
            // Parabolic refinement around the integer-lag peak.
            let (rm, r_peak, rp) = (r[lag - 1], r[lag], r[lag + 1]);
            let denom = rm - 2.0 * r_peak + rp;
            let delta = if denom.abs() > 0.0 { 0.5 * (rm - rp) / denom } else { 0.0 };
            return Some((lag as f64 + delta.clamp(-0.5, 0.5)) * dt);
        }
    }
    None
}
