//! Standard Wiener paths, linear (LMMSE) reconstruction from samples, and
//! Monte Carlo measurement of the reconstruction error.

use crate::des::DeliveryTrace;
use crate::stochastic::RngStream;
use rand_distr::{Distribution, StandardNormal};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WienerError {
    #[error("times must be non-negative and strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("no samples")]
    Empty,
    #[error("time {t} lies beyond the last sample at {last}")]
    BeyondLastSample { t: f64, last: f64 },
    #[error("sample time {0} is not on the path grid")]
    OffGrid(f64),
    #[error("grid step must be positive, got {0}")]
    BadStep(f64),
    #[error("csv export failed: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplePoint {
    pub t: f64,
    pub value: f64,
}

/// Values of one path at increasing times. `W(0) = 0` is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl WienerPath {
    pub fn samples_at(&self, sample_times: &[f64]) -> Result<Vec<SamplePoint>, WienerError> {
        sample_times
            .iter()
            .map(|&t| {
                let i = self
                    .times
                    .binary_search_by(|x| x.total_cmp(&t))
                    .map_err(|_| WienerError::OffGrid(t))?;
                Ok(SamplePoint {
                    t,
                    value: self.values[i],
                })
            })
            .collect()
    }
}

fn check_increasing(times: &[f64]) -> Result<(), WienerError> {
    let mut prev = 0.0;
    for (i, &t) in times.iter().enumerate() {
        if !(t >= 0.0) || (i > 0 && t <= prev) {
            return Err(WienerError::NotIncreasing(i));
        }
        prev = t;
    }
    Ok(())
}

#[inline]
fn normal(stream: &mut RngStream) -> f64 {
    StandardNormal.sample(stream)
}

/// Exact joint sample of `W` at `times`, built from independent Gaussian
/// increments starting at `W(0) = 0`.
pub fn generate_path(times: &[f64], stream: &mut RngStream) -> Result<WienerPath, WienerError> {
    check_increasing(times)?;
    let mut values = Vec::with_capacity(times.len());
    let (mut t_prev, mut w) = (0.0, 0.0);
    for &t in times {
        w += (t - t_prev).sqrt() * normal(stream);
        values.push(w);
        t_prev = t;
    }
    Ok(WienerPath {
        times: times.to_vec(),
        values,
    })
}

/// Linear interpolation through the samples and the origin. Defined on
/// `[0, last sample time]` only.
pub fn lmmse_reconstruct(samples: &[SamplePoint], t: f64) -> Result<f64, WienerError> {
    let last = samples.last().ok_or(WienerError::Empty)?;
    if t > last.t || t < 0.0 {
        return Err(WienerError::BeyondLastSample { t, last: last.t });
    }
    let k = samples.partition_point(|s| s.t < t);
    let right = samples[k];
    if right.t == t {
        return Ok(right.value);
    }
    let left = if k == 0 {
        SamplePoint { t: 0.0, value: 0.0 }
    } else {
        samples[k - 1]
    };
    Ok(left.value + (t - left.t) / (right.t - left.t) * (right.value - left.value))
}

/// Refines a path so that no gap exceeds `max_step`, filling new points by
/// exact Brownian-bridge sampling between the existing ones.
pub fn refine_path(path: &WienerPath, max_step: f64, stream: &mut RngStream) -> Result<WienerPath, WienerError> {
    if !(max_step > 0.0) {
        return Err(WienerError::BadStep(max_step));
    }
    let mut times = Vec::with_capacity(path.times.len());
    let mut values = Vec::with_capacity(path.times.len());
    let (mut t0, mut w0) = (0.0, 0.0);
    for (&t1, &w1) in path.times.iter().zip(&path.values) {
        let pieces = ((t1 - t0) / max_step).ceil().max(1.0) as usize;
        bridge_fill(t0, w0, t1, w1, pieces, stream, |t, w| {
            times.push(t);
            values.push(w);
        });
        times.push(t1);
        values.push(w1);
        t0 = t1;
        w0 = w1;
    }
    Ok(WienerPath { times, values })
}

/// Samples the interior of `[t0, t1]` at `pieces − 1` equally spaced points,
/// conditioned on the endpoint values, and feeds each to `emit`.
fn bridge_fill(
    t0: f64,
    w0: f64,
    t1: f64,
    w1: f64,
    pieces: usize,
    stream: &mut RngStream,
    mut emit: impl FnMut(f64, f64),
) {
    let h = (t1 - t0) / pieces as f64;
    let (mut s, mut w) = (t0, w0);
    for j in 1..pieces {
        let u = t0 + j as f64 * h;
        let remaining = t1 - s;
        let mean = w + (u - s) / remaining * (w1 - w);
        let var = (u - s) * (t1 - u) / remaining;
        w = mean + var.sqrt() * normal(stream);
        s = u;
        emit(u, w);
    }
}

/// Trapezoidal integral of the squared interpolation error over
/// `[0, last sample time]`, evaluated on the path's own grid.
pub fn mc_integrated_squared_error(path: &WienerPath, sample_times: &[f64]) -> Result<f64, WienerError> {
    let samples = path.samples_at(sample_times)?;
    let last = samples.last().ok_or(WienerError::Empty)?.t;
    let (mut t_prev, mut e_prev, mut total) = (0.0, 0.0, 0.0);
    for (&t, &w) in path.times.iter().zip(&path.values) {
        if t > last {
            break;
        }
        let e = w - lmmse_reconstruct(&samples, t)?;
        total += 0.5 * (t - t_prev) * (e * e + e_prev * e_prev);
        t_prev = t;
        e_prev = e;
    }
    Ok(total)
}

/// [`mc_integrated_squared_error`] divided by the last sample time.
pub fn mc_reconstruction_error(path: &WienerPath, sample_times: &[f64]) -> Result<f64, WienerError> {
    let last = *sample_times.last().ok_or(WienerError::Empty)?;
    Ok(mc_integrated_squared_error(path, sample_times)? / last)
}

/// Union of `sample_times` with a grid fine enough that every gap between
/// consecutive samples (and from the origin) holds at least
/// `points_per_interval` steps of at most `max_step`.
pub fn fine_grid(sample_times: &[f64], max_step: f64, points_per_interval: usize) -> Result<Vec<f64>, WienerError> {
    check_increasing(sample_times)?;
    if !(max_step > 0.0) {
        return Err(WienerError::BadStep(max_step));
    }
    let mut grid = Vec::new();
    let mut t0 = 0.0;
    for &t1 in sample_times {
        let pieces = (((t1 - t0) / max_step).ceil() as usize).max(points_per_interval).max(1);
        let h = (t1 - t0) / pieces as f64;
        grid.extend((1..pieces).map(|j| t0 + j as f64 * h));
        grid.push(t1);
        t0 = t1;
    }
    Ok(grid)
}

/// Monte Carlo reconstruction error of the samples carried by a delivery
/// trace: a Wiener path is drawn at the delivered generation times, each
/// gap is filled with `points_per_interval` bridge steps, and the
/// trapezoidal squared error is divided by the trace's observed span.
/// Uses the same sample set and span as `metrics::reconstruction_error`.
pub fn end_to_end_reconstruction_error(
    trace: &DeliveryTrace,
    points_per_interval: usize,
    stream: &mut RngStream,
) -> Result<f64, WienerError> {
    let last = trace.deliveries.last().ok_or(WienerError::Empty)?;
    let mut gens: Vec<f64> = trace
        .deliveries
        .iter()
        .map(|d| d.gen_time)
        .filter(|&g| g > trace.anchor_gen)
        .collect();
    gens.sort_by(f64::total_cmp);
    let pieces = points_per_interval.max(1);

    let mut w0 = trace.anchor_gen.sqrt() * normal(stream);
    let mut t0 = trace.anchor_gen;
    let mut total = 0.0;
    for &t1 in &gens {
        let w1 = w0 + (t1 - t0).sqrt() * normal(stream);
        let h = (t1 - t0) / pieces as f64;
        let mut sum_sq = 0.0;
        bridge_fill(t0, w0, t1, w1, pieces, stream, |u, w| {
            let e = w - (w0 + (u - t0) / (t1 - t0) * (w1 - w0));
            sum_sq += e * e;
        });
        // endpoint errors are zero, so the trapezoid rule reduces to h·Σ
        total += h * sum_sq;
        t0 = t1;
        w0 = w1;
    }
    Ok(total / (last.delivery_time - trace.window_start))
}

/// Rows `(t, W(t), Ŵ(t))` on a fine grid for plotting a reconstruction.
pub fn reconstruction_demo(
    sample_times: &[f64],
    max_step: f64,
    stream: &mut RngStream,
) -> Result<Vec<(f64, f64, f64)>, WienerError> {
    let grid = fine_grid(sample_times, max_step, 1)?;
    let path = generate_path(&grid, stream)?;
    let samples = path.samples_at(sample_times)?;
    std::iter::once(Ok((0.0, 0.0, 0.0)))
        .chain(
            path.times
                .iter()
                .zip(&path.values)
                .map(|(&t, &w)| Ok((t, w, lmmse_reconstruct(&samples, t)?))),
        )
        .collect()
}

pub fn write_demo_csv<W: Write>(rows: &[(f64, f64, f64)], out: W) -> Result<(), WienerError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["t", "w", "w_hat"])?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}
