//! Closed-form peak age and reconstruction error for Markovian queues, and
//! the numerical invariant measure behind the heavy-traffic IaA limit.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("invalid parameters: {0}")]
    Invalid(String),
    #[error("formula is singular at lambda = mu (lambda={lambda}, mu={mu})")]
    Singular { lambda: f64, mu: f64 },
    #[error("invariant-measure iteration did not converge after {0} iterations")]
    NoConvergence(usize),
}

/// Arrival rate, service rate and buffer size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticParams {
    pub lambda: f64,
    pub mu: f64,
    pub buffer: usize,
}

impl AnalyticParams {
    pub fn new(lambda: f64, mu: f64, buffer: usize) -> Result<Self, AnalyticError> {
        if !(lambda > 0.0 && lambda.is_finite() && mu > 0.0 && mu.is_finite()) {
            return Err(AnalyticError::Invalid(format!(
                "rates must be positive and finite (lambda={lambda}, mu={mu})"
            )));
        }
        if buffer == 0 {
            return Err(AnalyticError::Invalid("buffer must be at least 1".into()));
        }
        Ok(Self { lambda, mu, buffer })
    }

    pub fn rho(&self) -> f64 {
        self.lambda / self.mu
    }

    fn require_single(&self) -> Result<(), AnalyticError> {
        if self.buffer == 1 {
            Ok(())
        } else {
            Err(AnalyticError::Invalid(format!(
                "two-place formula needs buffer 1, got {}",
                self.buffer
            )))
        }
    }

    fn require_off_diagonal(&self) -> Result<(), AnalyticError> {
        if (self.lambda - self.mu).abs() / self.mu > 1e-9 {
            Ok(())
        } else {
            Err(AnalyticError::Singular {
                lambda: self.lambda,
                mu: self.mu,
            })
        }
    }
}

/// Stationary occupancy `π_0..π_{B+1}` of the M/M/1/B+1 queue.
pub fn steady_probs(p: &AnalyticParams) -> Vec<f64> {
    let rho = p.rho();
    let n = p.buffer + 2;
    // scale by the largest weight so large B with rho > 1 cannot overflow
    let w: Vec<f64> = if rho > 1.0 {
        (0..n).map(|i| (1.0 / rho).powi((n - 1 - i) as i32)).collect()
    } else {
        (0..n).map(|i| rho.powi(i as i32)).collect()
    };
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Long-run rate of admitted (and hence delivered) packets.
pub fn lambda_eff(p: &AnalyticParams) -> f64 {
    let rho = p.rho();
    if rho == 1.0 {
        return p.lambda * (p.buffer + 1) as f64 / (p.buffer + 2) as f64;
    }
    // sum the non-blocking states directly; 1 − π_{B+1} cancels when rho ≫ 1
    let probs = steady_probs(p);
    p.lambda * probs[..=p.buffer].iter().sum::<f64>()
}

pub fn peak_age_ko_mm12(p: &AnalyticParams) -> Result<f64, AnalyticError> {
    p.require_single()?;
    let (l, m) = (p.lambda, p.mu);
    Ok(1.0 / l + 3.0 / m - 2.0 / (l + m))
}

pub fn peak_age_kf_mm12(p: &AnalyticParams) -> Result<f64, AnalyticError> {
    p.require_single()?;
    let (l, m) = (p.lambda, p.mu);
    Ok(1.0 / m + l / (l + m).powi(2) + 1.0 / l + l / (m * (l + m)))
}

pub fn ez2_ko_mm12(p: &AnalyticParams) -> Result<f64, AnalyticError> {
    p.require_single()?;
    Ok(2.0 / (p.mu * p.mu) + 2.0 / (p.lambda * p.lambda))
}

pub fn re_ko_mm12(p: &AnalyticParams) -> Result<f64, AnalyticError> {
    p.require_single()?;
    let (l, m) = (p.lambda, p.mu);
    Ok((l + m) * (l * l + m * m) / (3.0 * l * m * (l * l + l * m + m * m)))
}

pub fn ez2_kf_mm12(p: &AnalyticParams) -> Result<f64, AnalyticError> {
    p.require_single()?;
    let (l, m) = (p.lambda, p.mu);
    Ok(2.0 * (l * l + m * m) / (l * l * m * m) - 2.0 * l * (2.0 * l + m) / (l + m).powi(4))
}

pub fn re_kf_mm12(p: &AnalyticParams) -> Result<f64, AnalyticError> {
    Ok(lambda_eff(p) * ez2_kf_mm12(p)? / 6.0)
}

fn c1(p: &AnalyticParams) -> f64 {
    let (l, m) = (p.lambda, p.mu);
    let rb = p.rho().powi(p.buffer as i32);
    1.0 + l * m / (m * m - l * l) - l * l / (m * m - l * l) * rb
}

fn c2(p: &AnalyticParams) -> f64 {
    let (l, m) = (p.lambda, p.mu);
    let rb = p.rho().powi(p.buffer as i32);
    m / (m - l) - l / (m - l) * rb
}

fn peak_age_b(p: &AnalyticParams, rho_b_coeff: f64) -> f64 {
    let (l, m) = (p.lambda, p.mu);
    let rb = p.rho().powi(p.buffer as i32);
    let base = 1.0 / l + (1.0 + l * m / (l + m).powi(2)) / (m - l);
    1.0 / m + (base + rho_b_coeff * rb) / c1(p)
}

/// Keep-Old peak age in M/M/1/B+1.
pub fn peak_age_ko_b(p: &AnalyticParams) -> Result<f64, AnalyticError> {
    p.require_off_diagonal()?;
    let (l, m) = (p.lambda, p.mu);
    Ok(peak_age_b(p, 2.0 / m - (1.0 + m * m / (l + m).powi(2)) / (m - l)))
}

/// Keep-Fresh peak age in M/M/1/B+1.
pub fn peak_age_kf_b(p: &AnalyticParams) -> Result<f64, AnalyticError> {
    p.require_off_diagonal()?;
    let (l, m) = (p.lambda, p.mu);
    Ok(peak_age_b(p, 1.0 / m - (1.0 + l * l / (l + m).powi(2)) / (m - l)))
}

pub fn ez2_ko_b(p: &AnalyticParams) -> Result<f64, AnalyticError> {
    p.require_off_diagonal()?;
    let (l, m) = (p.lambda, p.mu);
    let rb = p.rho().powi(p.buffer as i32);
    Ok(2.0 / (c2(p) * (m - l)) * (m / (l * l) - l / (m * m) * rb))
}

pub fn re_ko_b(p: &AnalyticParams) -> Result<f64, AnalyticError> {
    Ok(lambda_eff(p) * ez2_ko_b(p)? / 6.0)
}

pub fn ez2_kf_b(p: &AnalyticParams) -> Result<f64, AnalyticError> {
    p.require_off_diagonal()?;
    let (l, m) = (p.lambda, p.mu);
    let rb = p.rho().powi(p.buffer as i32);
    let s = l + m;
    let z1 = (2.0 * m.powi(3) * (6.0 * l * l + 4.0 * l * m + m * m)
        + 2.0 * l.powi(3) * (l * l + 3.0 * l * m + 3.0 * m * m))
        / (l * l * m * m * s.powi(3));
    let z2 = 2.0 * m * m * (3.0 * l * l + 3.0 * l * m + m * m) / (l.powi(3) * s.powi(3)) + 2.0 / (m * s);
    let lead = 2.0 * m / ((m - l) * l * l);
    let tail = z1 + z2 - 2.0 * m * m / ((m - l) * l.powi(3));
    Ok((lead + tail * rb) / c2(p))
}

pub fn re_kf_b(p: &AnalyticParams) -> Result<f64, AnalyticError> {
    Ok(lambda_eff(p) * ez2_kf_b(p)? / 6.0)
}

/// Heavy-traffic peak-age limit of the inter-arrival-aware policy with a
/// single buffer slot.
pub fn peak_age_iaa_asymptote(mu: f64) -> f64 {
    2.375 / mu
}

/// Smallest `α ≥ 0` with `2^α·x > 0.5`, capped at 60.
pub fn iaa_alpha(x: f64) -> u32 {
    let mut alpha = 0;
    let mut y = x;
    while y <= 0.5 && alpha < 60 {
        y *= 2.0;
        alpha += 1;
    }
    alpha
}

/// Discretized stationary law on a uniform grid over `[lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantMeasure {
    pub lower: f64,
    pub upper: f64,
    /// Probability mass per bin, summing to 1.
    pub weights: Vec<f64>,
    pub mean: f64,
    pub iterations: usize,
}

impl InvariantMeasure {
    pub fn bins(&self) -> usize {
        self.weights.len()
    }

    pub fn bin_width(&self) -> f64 {
        (self.upper - self.lower) / self.weights.len() as f64
    }

    pub fn midpoints(&self) -> impl Iterator<Item = f64> + '_ {
        let h = self.bin_width();
        (0..self.weights.len()).map(move |i| self.lower + (i as f64 + 0.5) * h)
    }

    /// Mass on `[lower, x]`, interpolating linearly inside a bin.
    pub fn cdf(&self, x: f64) -> f64 {
        let h = self.bin_width();
        let pos = ((x - self.lower) / h).clamp(0.0, self.weights.len() as f64);
        let full = pos.floor() as usize;
        let mut mass: f64 = self.weights[..full].iter().sum();
        if full < self.weights.len() {
            mass += self.weights[full] * (pos - full as f64);
        }
        mass
    }
}

const MAX_ITERATIONS: usize = 1_000_000;

/// Upper end of the waiting-time grid, in units of the mean service time.
pub const WAIT_GRID_UPPER: f64 = 32.0;

const GAUSS4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

/// Stationary law of the normalized buffer wait for the single-slot
/// inter-arrival-aware policy under saturating Poisson arrivals.
///
/// A packet that waited `w` (in mean-service units) enters service; while
/// it is served, the buffered packet is replaced whenever the newcomer's
/// gap exceeds the buffered packet's gap, so the buffered generation
/// offsets follow `(2^k − 1)·w`. With service `S ~ Exp(1)` the next wait is
/// `S − (2^K − 1)·w`, `K` the last replacement before `S`. Its transition
/// density is `Σ_k e^{−(2^k−1)w} e^{−w'} 1{w' ≤ 2^k w}`, which this routine
/// iterates on a uniform grid over `(0, 32]` until the total-variation change
/// falls below `tol`. The returned mean is the limiting `E[W]·μ`.
pub fn iaa_invariant_measure(bins: usize, tol: f64) -> Result<InvariantMeasure, AnalyticError> {
    if bins < 1 << 12 {
        return Err(AnalyticError::Invalid(format!("need at least 4096 bins, got {bins}")));
    }
    if !(tol > 0.0) {
        return Err(AnalyticError::Invalid(format!("tolerance must be positive, got {tol}")));
    }
    let upper = WAIT_GRID_UPPER;
    let h = upper / bins as f64;
    let edge_exp: Vec<f64> = (0..=bins).map(|i| (-(i as f64) * h).exp()).collect();
    let full_mass: Vec<f64> = (0..bins).map(|i| edge_exp[i] - edge_exp[i + 1]).collect();

    // Quadrature nodes inside each source bin, with their fraction of the
    // bin's mass.
    let nodes: Vec<[(f64, f64); 4]> = (0..bins)
        .map(|i| {
            let mid = (i as f64 + 0.5) * h;
            GAUSS4.map(|(x, wt)| (mid + 0.5 * h * x, 0.5 * wt))
        })
        .collect();

    // Initial law: unit exponential, the wait distribution's natural scale.
    let mut density: Vec<f64> = full_mass.clone();
    normalize(&mut density);
    let mut next = vec![0.0; bins];
    let mut suffix = vec![0.0; bins + 1];

    for iteration in 1..=MAX_ITERATIONS {
        suffix.iter_mut().for_each(|x| *x = 0.0);
        next.iter_mut().for_each(|x| *x = 0.0);
        for (src, &mass) in density.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for &(w, frac) in &nodes[src] {
                let p = mass * frac;
                let mut reach = w; // 2^k w
                let mut offset = 0.0f64; // (2^k - 1) w
                loop {
                    let c = p * (-offset).exp();
                    if c < 1e-300 {
                        break;
                    }
                    if reach >= upper {
                        suffix[bins] += c;
                        break;
                    }
                    let cut = (reach / h) as usize;
                    suffix[cut] += c;
                    next[cut] += c * (edge_exp[cut] - (-reach).exp());
                    offset += reach;
                    reach *= 2.0;
                }
            }
        }
        // bins below each cut receive their full exponential mass
        let mut acc = 0.0;
        for i in (0..bins).rev() {
            acc += suffix[i + 1];
            next[i] += acc * full_mass[i];
        }
        normalize(&mut next);
        let tv: f64 = 0.5 * density.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum::<f64>();
        std::mem::swap(&mut density, &mut next);
        if tv < tol {
            return Ok(measure(0.0, upper, density, iteration));
        }
    }
    Err(AnalyticError::NoConvergence(MAX_ITERATIONS))
}

/// Stationary law of the deterministic map `x ↦ 1 − 2^{α(x)}·x` on (0,1),
/// by Ulam's method with exact overlap of each affine piece's image.
pub fn closure_map_invariant_measure(bins: usize, tol: f64) -> Result<InvariantMeasure, AnalyticError> {
    if bins < 2 {
        return Err(AnalyticError::Invalid(format!("need at least 2 bins, got {bins}")));
    }
    if !(tol > 0.0) {
        return Err(AnalyticError::Invalid(format!("tolerance must be positive, got {tol}")));
    }
    let h = 1.0 / bins as f64;
    let mut transitions: Vec<Vec<(u32, f64)>> = Vec::with_capacity(bins);
    for i in 0..bins {
        let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
        let mut row: Vec<(u32, f64)> = Vec::new();
        // piece alpha covers (0.5/2^alpha, 1/2^alpha]; alpha = 60 absorbs the rest
        for alpha in 0..=60u32 {
            let scale = 2f64.powi(alpha as i32);
            let hi = (1.0 / scale).min(b);
            let lo = if alpha == 60 { a } else { (0.5 / scale).max(a) };
            if hi <= lo {
                continue;
            }
            let share = (hi - lo) / h;
            let (img_lo, img_hi) = ((1.0 - scale * hi).max(0.0), (1.0 - scale * lo).min(1.0));
            spread_uniform(img_lo, img_hi, share, h, bins, &mut row);
            if lo <= a {
                break;
            }
        }
        transitions.push(row);
    }

    let mut density = vec![h; bins];
    let mut next = vec![0.0; bins];
    for iteration in 1..=MAX_ITERATIONS {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (row, &mass) in transitions.iter().zip(&density) {
            for &(j, w) in row {
                next[j as usize] += mass * w;
            }
        }
        normalize(&mut next);
        let tv: f64 = 0.5 * density.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum::<f64>();
        std::mem::swap(&mut density, &mut next);
        if tv < tol {
            return Ok(measure(0.0, 1.0, density, iteration));
        }
    }
    Err(AnalyticError::NoConvergence(MAX_ITERATIONS))
}

fn spread_uniform(lo: f64, hi: f64, mass: f64, h: f64, bins: usize, row: &mut Vec<(u32, f64)>) {
    if hi - lo <= 0.0 {
        let j = ((lo / h) as usize).min(bins - 1);
        row.push((j as u32, mass));
        return;
    }
    let first = ((lo / h) as usize).min(bins - 1);
    let last = ((hi / h) as usize).min(bins - 1);
    for j in first..=last {
        let overlap = (hi.min((j + 1) as f64 * h) - lo.max(j as f64 * h)).max(0.0);
        if overlap > 0.0 {
            row.push((j as u32, mass * overlap / (hi - lo)));
        }
    }
}

fn normalize(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
}

fn measure(lower: f64, upper: f64, weights: Vec<f64>, iterations: usize) -> InvariantMeasure {
    let h = (upper - lower) / weights.len() as f64;
    let mean = weights
        .iter()
        .enumerate()
        .map(|(i, w)| w * (lower + (i as f64 + 0.5) * h))
        .sum();
    InvariantMeasure {
        lower,
        upper,
        weights,
        mean,
        iterations,
    }
}
