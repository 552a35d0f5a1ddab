//! Seedable random-variate generation for arrival and service processes.
//!
//! A [`DistributionSpec`] is the validated, serializable description of a
//! distribution. It compiles into a [`Sampler`], which draws variates from an
//! [`RngStream`]. Streams are identified by `(seed, stream_id)`; each stream
//! id selects a non-overlapping block of the underlying xoshiro256++ sequence,
//! so the arrival and service processes of a run never share randomness.

use rand::RngCore;
use rand::SeedableRng;
use rand_distr::{Distribution, Exp, LogNormal, Pareto};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("{name} must be strictly positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("Erlang stage count must be at least 1")]
    ZeroStages,
    #[error("Pareto shape must exceed 1 for a finite mean, got {0}")]
    InfiniteMean(f64),
}

fn positive(name: &'static str, value: f64) -> Result<f64, ParamError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ParamError::NonPositive { name, value })
    }
}

/// One of the four distribution families used by the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DistributionSpec {
    Exponential {
        rate: f64,
    },
    /// Log-normal parameterized by its mean and the standard deviation of
    /// the underlying normal.
    LogNormal {
        mean: f64,
        sigma_log: f64,
    },
    Erlang {
        stages: u32,
        rate_per_stage: f64,
    },
    Pareto {
        scale: f64,
        shape: f64,
    },
}

impl DistributionSpec {
    pub fn exponential(rate: f64) -> Result<Self, ParamError> {
        let spec = Self::Exponential { rate };
        spec.validate()?;
        Ok(spec)
    }

    pub fn log_normal(mean: f64, sigma_log: f64) -> Result<Self, ParamError> {
        let spec = Self::LogNormal { mean, sigma_log };
        spec.validate()?;
        Ok(spec)
    }

    /// Log-normal given the location `m` of the underlying normal instead
    /// of the mean; the resulting mean is `exp(m + sigma²/2)`.
    pub fn log_normal_from_location(location: f64, sigma_log: f64) -> Result<Self, ParamError> {
        Self::log_normal((location + 0.5 * sigma_log * sigma_log).exp(), sigma_log)
    }

    pub fn erlang(stages: u32, rate_per_stage: f64) -> Result<Self, ParamError> {
        let spec = Self::Erlang {
            stages,
            rate_per_stage,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Erlang-k renewal process whose mean inter-event time is `1/rate`.
    pub fn erlang_with_rate(stages: u32, rate: f64) -> Result<Self, ParamError> {
        Self::erlang(stages, f64::from(stages) * positive("rate", rate)?)
    }

    pub fn pareto(scale: f64, shape: f64) -> Result<Self, ParamError> {
        let spec = Self::Pareto { scale, shape };
        spec.validate()?;
        Ok(spec)
    }

    /// Pareto inter-arrival law with the given shape, scaled so that the
    /// mean inter-arrival time is `1/rate`.
    pub fn pareto_with_rate(rate: f64, shape: f64) -> Result<Self, ParamError> {
        if !(shape > 1.0) {
            return Err(ParamError::InfiniteMean(shape));
        }
        let rate = positive("rate", rate)?;
        Self::pareto((shape - 1.0) / (shape * rate), shape)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        match *self {
            Self::Exponential { rate } => positive("rate", rate).map(drop),
            Self::LogNormal { mean, sigma_log } => {
                positive("mean", mean)?;
                positive("sigma_log", sigma_log).map(drop)
            }
            Self::Erlang {
                stages,
                rate_per_stage,
            } => {
                if stages == 0 {
                    return Err(ParamError::ZeroStages);
                }
                positive("rate_per_stage", rate_per_stage).map(drop)
            }
            Self::Pareto { scale, shape } => {
                positive("scale", scale)?;
                if !(shape > 1.0) || !shape.is_finite() {
                    return Err(ParamError::InfiniteMean(shape));
                }
                Ok(())
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Exponential { rate } => 1.0 / rate,
            Self::LogNormal { mean, .. } => mean,
            Self::Erlang {
                stages,
                rate_per_stage,
            } => f64::from(stages) / rate_per_stage,
            Self::Pareto { scale, shape } => shape * scale / (shape - 1.0),
        }
    }

    /// Closed-form variance; infinite for a Pareto law with shape ≤ 2.
    pub fn variance(&self) -> f64 {
        match *self {
            Self::Exponential { rate } => 1.0 / (rate * rate),
            Self::LogNormal { mean, sigma_log } => {
                mean * mean * ((sigma_log * sigma_log).exp() - 1.0)
            }
            Self::Erlang {
                stages,
                rate_per_stage,
            } => f64::from(stages) / (rate_per_stage * rate_per_stage),
            Self::Pareto { scale, shape } => {
                if shape <= 2.0 {
                    f64::INFINITY
                } else {
                    scale * scale * shape / ((shape - 1.0).powi(2) * (shape - 2.0))
                }
            }
        }
    }

    /// Nominal event rate, `1 / mean`.
    pub fn rate(&self) -> f64 {
        1.0 / self.mean()
    }

    pub fn sampler(&self) -> Result<Sampler, ParamError> {
        self.validate()?;
        let kind = match *self {
            Self::Exponential { rate } => SamplerKind::Exp(Exp::new(rate).expect("validated")),
            Self::LogNormal { mean, sigma_log } => {
                let location = mean.ln() - 0.5 * sigma_log * sigma_log;
                SamplerKind::LogNormal(LogNormal::new(location, sigma_log).expect("validated"))
            }
            Self::Erlang {
                stages,
                rate_per_stage,
            } => SamplerKind::Erlang {
                stages,
                stage: Exp::new(rate_per_stage).expect("validated"),
            },
            Self::Pareto { scale, shape } => {
                SamplerKind::Pareto(Pareto::new(scale, shape).expect("validated"))
            }
        };
        Ok(Sampler { kind })
    }
}

/// Closed-form mean of `spec`.
pub fn mean_of(spec: &DistributionSpec) -> f64 {
    spec.mean()
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Exp(Exp<f64>),
    LogNormal(LogNormal<f64>),
    Erlang { stages: u32, stage: Exp<f64> },
    Pareto(Pareto<f64>),
}

/// A compiled [`DistributionSpec`], ready to draw from.
#[derive(Debug, Clone)]
pub struct Sampler {
    kind: SamplerKind,
}

impl Sampler {
    #[inline]
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            SamplerKind::Exp(d) => d.sample(rng),
            SamplerKind::LogNormal(d) => d.sample(rng),
            SamplerKind::Erlang { stages, stage } => (0..*stages).map(|_| stage.sample(rng)).sum(),
            SamplerKind::Pareto(d) => d.sample(rng),
        }
    }
}

/// A reproducible random stream.
///
/// Identical `(seed, stream_id)` pairs yield identical sequences bit for bit.
/// Distinct stream ids start 2^128 draws apart in the xoshiro256++ sequence.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: Xoshiro256PlusPlus,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        for _ in 0..stream_id {
            rng.jump();
        }
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for RngStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Draws one variate of `spec` from `stream`.
///
/// Hot loops should compile the spec once with [`DistributionSpec::sampler`].
pub fn sample(spec: &DistributionSpec, stream: &mut RngStream) -> Result<f64, ParamError> {
    Ok(spec.sampler()?.sample(stream))
}
