//! Packet-dropping policies applied when an arrival finds the buffer full.
//!
//! Candidates are numbered 1..=B+1: slots 1..=B are the buffered packets
//! from head (oldest) to tail (newest), and B+1 is the new arrival. Every
//! policy names exactly one victim.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Snapshot of the queue handed to a policy on overflow.
#[derive(Debug, Clone, Copy)]
pub struct DropContext<'a> {
    /// Generation time of the packet in service.
    pub in_service_gen: f64,
    /// Buffered generation times, head first.
    pub buffered_gen: &'a [f64],
    pub new_gen: f64,
    /// For each candidate `i`, the generation time of its most recent
    /// predecessor among the in-service, buffered and delivered packets.
    /// Empty when the policy does not need it.
    pub last_prior_gen: &'a [f64],
}

impl DropContext<'_> {
    pub fn buffer_size(&self) -> usize {
        self.buffered_gen.len()
    }

    fn candidate_gen(&self, i: usize) -> f64 {
        if i <= self.buffered_gen.len() {
            self.buffered_gen[i - 1]
        } else {
            self.new_gen
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum PolicyKind {
    KeepOld,
    KeepFresh,
    Iaa,
    #[serde(rename = "th-iaa")]
    ThresholdIaa {
        epsilon: f64,
    },
}

impl PolicyKind {
    /// Parses the config-file names `keep-old`, `keep-fresh`, `iaa` and
    /// `th-iaa`; the latter takes its threshold from `epsilon`.
    pub fn from_name(name: &str, epsilon: Option<f64>) -> Result<Self, String> {
        match name {
            "keep-old" | "ko" => Ok(Self::KeepOld),
            "keep-fresh" | "kf" => Ok(Self::KeepFresh),
            "iaa" => Ok(Self::Iaa),
            "th-iaa" => {
                let epsilon = epsilon.ok_or("th-iaa requires an epsilon value")?;
                let kind = Self::ThresholdIaa { epsilon };
                kind.validate()?;
                Ok(kind)
            }
            other => Err(format!("unknown policy `{other}`")),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::KeepOld => "keep-old",
            Self::KeepFresh => "keep-fresh",
            Self::Iaa => "iaa",
            Self::ThresholdIaa { .. } => "th-iaa",
        }
    }

    pub fn epsilon(&self) -> f64 {
        match *self {
            Self::ThresholdIaa { epsilon } => epsilon,
            _ => 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let eps = self.epsilon();
        if eps >= 0.0 && eps.is_finite() {
            Ok(())
        } else {
            Err(format!("epsilon must be finite and non-negative, got {eps}"))
        }
    }

    /// Whether [`DropContext::last_prior_gen`] must be populated.
    pub fn needs_predecessors(&self, buffer_size: usize) -> bool {
        matches!(self, Self::Iaa | Self::ThresholdIaa { .. }) && buffer_size > 1
    }

    pub fn decide(&self, ctx: &DropContext<'_>) -> usize {
        match *self {
            Self::KeepOld => decide_keep_old(ctx),
            Self::KeepFresh => decide_keep_fresh(ctx),
            Self::Iaa | Self::ThresholdIaa { .. } => {
                let eps = self.epsilon();
                if ctx.buffer_size() == 1 {
                    decide_iaa_single(ctx, eps)
                } else {
                    decide_iaa_general(ctx, eps)
                }
            }
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ThresholdIaa { epsilon } => write!(f, "th-iaa({epsilon})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Any rule that picks a victim index in `1..=B+1`.
pub trait DroppingPolicy {
    fn decide(&self, ctx: &DropContext<'_>) -> usize;

    fn needs_predecessors(&self, _buffer_size: usize) -> bool {
        false
    }
}

impl DroppingPolicy for PolicyKind {
    fn decide(&self, ctx: &DropContext<'_>) -> usize {
        PolicyKind::decide(self, ctx)
    }

    fn needs_predecessors(&self, buffer_size: usize) -> bool {
        PolicyKind::needs_predecessors(self, buffer_size)
    }
}

/// Always drops the new arrival.
pub fn decide_keep_old(ctx: &DropContext<'_>) -> usize {
    ctx.buffer_size() + 1
}

/// Drops the buffered tail so the arrival takes its place.
pub fn decide_keep_fresh(ctx: &DropContext<'_>) -> usize {
    ctx.buffer_size()
}

/// Single-slot rule: replace the buffered packet when its gap to the
/// in-service packet is smaller than the new arrival's gap plus `epsilon`.
pub fn decide_iaa_single(ctx: &DropContext<'_>, epsilon: f64) -> usize {
    debug_assert_eq!(ctx.buffer_size(), 1);
    let t_b = ctx.buffered_gen[0];
    if t_b - ctx.in_service_gen < ctx.new_gen - t_b + epsilon {
        1
    } else {
        2
    }
}

/// Multi-slot rule: drop the candidate with the smallest gap to its
/// predecessor, the new arrival's gap being inflated by `epsilon`.
/// Ties go to the smallest index.
pub fn decide_iaa_general(ctx: &DropContext<'_>, epsilon: f64) -> usize {
    let candidates = ctx.buffer_size() + 1;
    assert_eq!(
        ctx.last_prior_gen.len(),
        candidates,
        "one predecessor per candidate required"
    );
    let mut victim = 1;
    let mut best = f64::INFINITY;
    for i in 1..=candidates {
        let mut gap = ctx.candidate_gen(i) - ctx.last_prior_gen[i - 1];
        if i == candidates {
            gap += epsilon;
        }
        if gap < best {
            best = gap;
            victim = i;
        }
    }
    victim
}

/// Fills `out` with the predecessor generation time of every candidate:
/// the largest generation time below the candidate's among the in-service
/// packet, the buffer, and `delivered_below(g)` (largest delivered
/// generation time below `g`). Falls back to 0, the known origin.
pub fn fill_predecessors(
    in_service_gen: f64,
    buffered_gen: &[f64],
    new_gen: f64,
    delivered_below: impl Fn(f64) -> Option<f64>,
    out: &mut Vec<f64>,
) {
    out.clear();
    for &g in buffered_gen.iter().chain(std::iter::once(&new_gen)) {
        let mut best = delivered_below(g).unwrap_or(0.0);
        if in_service_gen < g && in_service_gen > best {
            best = in_service_gen;
        }
        for &b in buffered_gen {
            if b < g && b > best {
                best = b;
            }
        }
        out.push(best);
    }
}
