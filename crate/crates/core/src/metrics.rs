//! Peak age and reconstruction error of a delivery trace.

use crate::des::DeliveryTrace;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("need at least {needed} {what}, trace has {found}")]
    TooShort {
        needed: usize,
        found: usize,
        what: &'static str,
    },
    #[error("trace spans no time")]
    EmptySpan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgeSummary {
    pub avg_peak_age: f64,
    pub peak_count: usize,
    /// Mean system time of the fresh packet preceding each peak.
    pub mean_system_time: f64,
    /// Mean time between consecutive fresh deliveries.
    pub mean_interdelivery: f64,
    pub peaks: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReSummary {
    pub avg_re: f64,
    /// Mean squared gap between consecutive delivered generation times.
    pub second_moment_z: f64,
    pub mean_z: f64,
    pub lambda_eff_empirical: f64,
    /// `T̃`, the last delivery time.
    pub last_delivery: f64,
}

fn peak_iter(trace: &DeliveryTrace) -> impl Iterator<Item = (f64, f64)> + '_ {
    // (T of previous fresh packet, Y to the next fresh delivery)
    let mut fresh = trace.deliveries.iter().filter(|d| d.fresh);
    let mut prev = fresh.next().copied();
    fresh.map(move |d| {
        let p = prev.replace(*d).expect("seeded by first fresh delivery");
        (p.delivery_time - p.gen_time, d.delivery_time - p.delivery_time)
    })
}

/// Peak ages over the fresh deliveries; the first one only seeds the
/// sequence.
pub fn peak_ages(trace: &DeliveryTrace) -> Result<AgeSummary, MetricError> {
    summarize_peaks(trace, false)
}

/// As [`peak_ages`], also returning every peak.
pub fn peak_ages_full(trace: &DeliveryTrace) -> Result<AgeSummary, MetricError> {
    summarize_peaks(trace, true)
}

fn summarize_peaks(trace: &DeliveryTrace, keep: bool) -> Result<AgeSummary, MetricError> {
    let mut peaks = keep.then(Vec::new);
    let (mut sum_t, mut sum_y, mut n) = (0.0, 0.0, 0usize);
    for (t, y) in peak_iter(trace) {
        sum_t += t;
        sum_y += y;
        n += 1;
        if let Some(p) = peaks.as_mut() {
            p.push(t + y);
        }
    }
    if n == 0 {
        return Err(MetricError::TooShort {
            needed: 2,
            found: trace.deliveries.iter().filter(|d| d.fresh).count(),
            what: "fresh deliveries",
        });
    }
    let mean_t = sum_t / n as f64;
    let mean_y = sum_y / n as f64;
    Ok(AgeSummary {
        avg_peak_age: mean_t + mean_y,
        peak_count: n,
        mean_system_time: mean_t,
        mean_interdelivery: mean_y,
        peaks,
    })
}

/// Sorted delivered generation times at or after the anchor, anchor first.
fn sample_points(trace: &DeliveryTrace) -> Vec<f64> {
    let mut pts: Vec<f64> = std::iter::once(trace.anchor_gen)
        .chain(
            trace
                .deliveries
                .iter()
                .map(|d| d.gen_time)
                .filter(|&g| g >= trace.anchor_gen),
        )
        .collect();
    pts.sort_by(f64::total_cmp);
    pts
}

/// Time-average squared error of linear interpolation through the
/// delivered samples of a standard Wiener process: the sum of squared
/// sample gaps over six, divided by the observed span.
pub fn reconstruction_error(trace: &DeliveryTrace) -> Result<ReSummary, MetricError> {
    let last = trace.deliveries.last().ok_or(MetricError::TooShort {
        needed: 1,
        found: 0,
        what: "deliveries",
    })?;
    let span = last.delivery_time - trace.window_start;
    if !(span > 0.0) {
        return Err(MetricError::EmptySpan);
    }
    let pts = sample_points(trace);
    let mut sum_sq = 0.0;
    let (mut inner_sq, mut inner, mut inner_n) = (0.0, 0.0, 0usize);
    for (k, w) in pts.windows(2).enumerate() {
        let gap = w[1] - w[0];
        sum_sq += gap * gap;
        if k > 0 {
            inner_sq += gap * gap;
            inner += gap;
            inner_n += 1;
        }
    }
    let (second_moment_z, mean_z) = if inner_n > 0 {
        (inner_sq / inner_n as f64, inner / inner_n as f64)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(ReSummary {
        avg_re: sum_sq / 6.0 / span,
        second_moment_z,
        mean_z,
        lambda_eff_empirical: trace.deliveries.len() as f64 / span,
        last_delivery: last.delivery_time,
    })
}

/// Mean squared gap between consecutive sorted delivered generation times,
/// excluding the interval from the anchor.
pub fn second_moment_intervals(trace: &DeliveryTrace) -> Result<f64, MetricError> {
    if trace.deliveries.len() < 2 {
        return Err(MetricError::TooShort {
            needed: 2,
            found: trace.deliveries.len(),
            what: "deliveries",
        });
    }
    let mut gens: Vec<f64> = trace.deliveries.iter().map(|d| d.gen_time).collect();
    gens.sort_by(f64::total_cmp);
    let n = gens.len() - 1;
    Ok(gens.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / n as f64)
}
