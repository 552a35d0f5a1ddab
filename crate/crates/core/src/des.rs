//! Event-driven simulation of a single-server, non-preemptive LCFS queue
//! with a finite buffer and a pluggable dropping policy.
//!
//! The system holds at most one packet in service plus `B` buffered
//! packets. An arrival to an idle server starts service at once; an arrival
//! to a full buffer triggers the policy, which evicts exactly one candidate.
//! When service completes, the newest buffered packet (the tail) is served
//! next. Departures are processed before arrivals at identical timestamps.

use crate::policies::{fill_predecessors, DropContext, DroppingPolicy, PolicyKind};
use crate::stochastic::{DistributionSpec, ParamError, RngStream, Sampler};
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

pub const ARRIVAL_STREAM: u64 = 0;
pub const SERVICE_STREAM: u64 = 1;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("policy returned victim {victim}, outside 1..={candidates}")]
    VictimOutOfRange { victim: usize, candidates: usize },
    #[error("csv export failed: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Horizon {
    /// Simulated time span.
    Time(f64),
    /// Number of deliveries kept after warm-up.
    Deliveries(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub arrival: DistributionSpec,
    pub service: DistributionSpec,
    pub buffer_size: usize,
    pub policy: PolicyKind,
    pub horizon: Horizon,
    #[serde(default = "default_warmup")]
    pub warmup_fraction: f64,
    pub seed: u64,
    #[serde(default)]
    pub record_packets: bool,
}

fn default_warmup() -> f64 {
    0.05
}

impl SimConfig {
    /// Exponential inter-arrival and service times.
    pub fn markovian(
        lambda: f64,
        mu: f64,
        buffer_size: usize,
        policy: PolicyKind,
        horizon: Horizon,
        seed: u64,
    ) -> Result<Self, SimError> {
        let config = Self {
            arrival: DistributionSpec::exponential(lambda)?,
            service: DistributionSpec::exponential(mu)?,
            buffer_size,
            policy,
            horizon,
            warmup_fraction: default_warmup(),
            seed,
            record_packets: false,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.arrival.validate()?;
        self.service.validate()?;
        self.policy.validate().map_err(SimError::InvalidConfig)?;
        if self.buffer_size == 0 {
            return Err(SimError::InvalidConfig("buffer size must be at least 1".into()));
        }
        match self.horizon {
            Horizon::Time(t) if !(t > 0.0 && t.is_finite()) => {
                return Err(SimError::InvalidConfig(format!("time horizon must be positive, got {t}")))
            }
            Horizon::Deliveries(0) => {
                return Err(SimError::InvalidConfig("delivery horizon must be positive".into()))
            }
            _ => {}
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(SimError::InvalidConfig(format!(
                "warm-up fraction must lie in [0, 1), got {}",
                self.warmup_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fate {
    InSystem,
    Delivered,
    Dropped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub id: u64,
    pub gen_time: f64,
    pub delivery_time: Option<f64>,
    pub fate: Fate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delivery {
    pub gen_time: f64,
    pub delivery_time: f64,
    pub fresh: bool,
}

/// Deliveries observed in the measurement window, with the counters the
/// metrics need.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DeliveryTrace {
    pub deliveries: Vec<Delivery>,
    /// Arrivals inside the window.
    pub generated_count: u64,
    /// Drop events inside the window.
    pub dropped_count: u64,
    pub end_time: f64,
    /// Time at which the window opened (0 without warm-up).
    pub window_start: f64,
    /// Freshest generation time delivered before the window, or 0.
    pub anchor_gen: f64,
}

impl DeliveryTrace {
    pub fn delivered_count(&self) -> u64 {
        self.deliveries.len() as u64
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["gen_time", "delivery_time", "fresh"])?;
        for d in &self.deliveries {
            writer.serialize((d.gen_time, d.delivery_time, d.fresh))?;
        }
        writer.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Fraction of arrivals in the window that were dropped.
pub fn loss_probability(trace: &DeliveryTrace) -> Result<f64, SimError> {
    if trace.generated_count == 0 {
        return Err(SimError::InvalidConfig("trace has no generated packets".into()));
    }
    Ok(trace.dropped_count as f64 / trace.generated_count as f64)
}

/// Waiting statistics for packets that were buffered before service.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WaitStats {
    pub wait_sum: f64,
    pub wait_count: u64,
    pub service_sum: f64,
    pub service_count: u64,
}

impl WaitStats {
    pub fn mean_wait(&self) -> f64 {
        self.wait_sum / self.wait_count as f64
    }

    pub fn mean_service(&self) -> f64 {
        self.service_sum / self.service_count as f64
    }

    /// Mean buffer wait in units of the mean service time.
    pub fn normalized_wait(&self) -> f64 {
        self.mean_wait() / self.mean_service()
    }
}

/// Window-level queue statistics beyond the delivery trace.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QueueStats {
    /// Occupancy (0..=B+1) seen by each arrival in the window.
    pub arrival_occupancy: Vec<u64>,
    /// Time spent at each occupancy level in the window.
    pub time_in_state: Vec<f64>,
    pub in_system_at_start: u64,
    pub in_system_at_end: u64,
    pub waits: WaitStats,
    pub total_generated: u64,
    pub total_delivered: u64,
    pub total_dropped: u64,
}

impl QueueStats {
    pub fn time_average_occupancy(&self) -> Vec<f64> {
        let total: f64 = self.time_in_state.iter().sum();
        self.time_in_state.iter().map(|t| t / total).collect()
    }

    pub fn arrival_occupancy_distribution(&self) -> Vec<f64> {
        let total: u64 = self.arrival_occupancy.iter().sum();
        self.arrival_occupancy
            .iter()
            .map(|&c| c as f64 / total as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub trace: DeliveryTrace,
    pub stats: QueueStats,
    pub records: Option<Vec<PacketRecord>>,
}

/// Source of arrival epochs and service durations.
pub trait Workload {
    /// Next arrival epoch after `last`, or `None` when exhausted.
    fn next_arrival(&mut self, last: f64) -> Option<f64>;
    fn service_time(&mut self) -> f64;
}

/// Renewal arrivals and i.i.d. services drawn from independent streams.
pub struct StochasticWorkload {
    arrival: Sampler,
    service: Sampler,
    arrival_rng: RngStream,
    service_rng: RngStream,
}

impl StochasticWorkload {
    pub fn new(config: &SimConfig) -> Result<Self, SimError> {
        Ok(Self {
            arrival: config.arrival.sampler()?,
            service: config.service.sampler()?,
            arrival_rng: RngStream::new(config.seed, ARRIVAL_STREAM),
            service_rng: RngStream::new(config.seed, SERVICE_STREAM),
        })
    }
}

impl Workload for StochasticWorkload {
    #[inline]
    fn next_arrival(&mut self, last: f64) -> Option<f64> {
        Some(last + self.arrival.sample(&mut self.arrival_rng))
    }

    #[inline]
    fn service_time(&mut self) -> f64 {
        self.service.sample(&mut self.service_rng)
    }
}

/// Fixed arrival epochs and service durations, for hand-checked scenarios.
/// Services cycle when the list is shorter than the number of packets served.
#[derive(Debug, Clone)]
pub struct ScriptedWorkload {
    arrivals: Vec<f64>,
    services: Vec<f64>,
    next_arrival: usize,
    next_service: usize,
}

impl ScriptedWorkload {
    pub fn new(arrivals: Vec<f64>, services: Vec<f64>) -> Self {
        assert!(!services.is_empty(), "at least one service time required");
        Self {
            arrivals,
            services,
            next_arrival: 0,
            next_service: 0,
        }
    }
}

impl Workload for ScriptedWorkload {
    fn next_arrival(&mut self, _last: f64) -> Option<f64> {
        let t = self.arrivals.get(self.next_arrival).copied();
        self.next_arrival += 1;
        t
    }

    fn service_time(&mut self) -> f64 {
        let s = self.services[self.next_service % self.services.len()];
        self.next_service += 1;
        s
    }
}

/// Delivered generation times that can still be the predecessor of a live
/// or future packet. Only the largest mark in each gap between consecutive
/// live generation times matters, so the set stays O(B).
#[derive(Debug, Default)]
struct DeliveredMarks {
    marks: Vec<f64>,
}

impl DeliveredMarks {
    fn below(&self, g: f64) -> Option<f64> {
        self.marks.iter().copied().filter(|&m| m < g).reduce(f64::max)
    }

    fn insert_and_prune(&mut self, gen: f64, live: &[f64]) {
        let pos = self.marks.partition_point(|&m| m < gen);
        self.marks.insert(pos, gen);
        let marks = std::mem::take(&mut self.marks);
        for (k, &m) in marks.iter().enumerate() {
            let keep = match marks.get(k + 1) {
                None => true,
                Some(&next) => live.iter().any(|&x| x > m && x < next),
            };
            if keep {
                self.marks.push(m);
            }
        }
    }
}

#[derive(Clone, Copy)]
struct InService {
    id: u64,
    gen: f64,
    start: f64,
    duration: f64,
}

/// Runs `config` with its own policy and a stochastic workload.
pub fn simulate(config: &SimConfig) -> Result<SimOutput, SimError> {
    config.validate()?;
    let mut workload = StochasticWorkload::new(config)?;
    simulate_with(config, &config.policy, &mut workload)
}

/// Runs the queue with an arbitrary policy and workload. The arrival and
/// service fields of `config` are ignored in favour of `workload`.
pub fn simulate_with<P, W>(config: &SimConfig, policy: &P, workload: &mut W) -> Result<SimOutput, SimError>
where
    P: DroppingPolicy + ?Sized,
    W: Workload + ?Sized,
{
    config.validate()?;
    let b = config.buffer_size;
    let wants_prior = policy.needs_predecessors(b);

    let (time_limit, warmup_deliveries, target_deliveries, cutoff) = match config.horizon {
        Horizon::Time(t) => (t, u64::MAX, u64::MAX, config.warmup_fraction * t),
        Horizon::Deliveries(n) => {
            let warm = (config.warmup_fraction * n as f64).ceil() as u64;
            (f64::INFINITY, warm, n, f64::INFINITY)
        }
    };

    let mut trace = DeliveryTrace::default();
    let mut stats = QueueStats {
        arrival_occupancy: vec![0; b + 2],
        time_in_state: vec![0.0; b + 2],
        ..QueueStats::default()
    };
    let mut records: Option<Vec<PacketRecord>> = config.record_packets.then(Vec::new);

    let mut server: Option<InService> = None;
    let mut buf_ids: Vec<u64> = Vec::with_capacity(b + 1);
    let mut buf_gens: Vec<f64> = Vec::with_capacity(b + 1);
    let mut marks = DeliveredMarks::default();
    let mut prior: Vec<f64> = Vec::with_capacity(b + 1);
    let mut live: Vec<f64> = Vec::with_capacity(b + 1);

    let mut next_id: u64 = 0;
    let mut next_arrival = workload.next_arrival(0.0);
    let mut max_delivered_gen = f64::NEG_INFINITY;
    let mut warm_delivered: u64 = 0;

    let mut window_open = match config.horizon {
        Horizon::Time(_) => cutoff <= 0.0,
        Horizon::Deliveries(_) => warmup_deliveries == 0,
    };
    let mut last_event = 0.0;

    macro_rules! occupancy {
        () => {
            buf_gens.len() + usize::from(server.is_some())
        };
    }

    macro_rules! admit_arrival {
        ($t:expr) => {{
            let id = next_id;
            next_id += 1;
            stats.total_generated += 1;
            if window_open {
                trace.generated_count += 1;
                stats.arrival_occupancy[occupancy!()] += 1;
            }
            if let Some(recs) = records.as_mut() {
                recs.push(PacketRecord {
                    id,
                    gen_time: $t,
                    delivery_time: None,
                    fate: Fate::InSystem,
                });
            }
            id
        }};
    }

    loop {
        let dep_time = server.map_or(f64::INFINITY, |s| s.start + s.duration);
        let arr_time = next_arrival.unwrap_or(f64::INFINITY);
        let t = dep_time.min(arr_time);
        if t == f64::INFINITY && server.is_none() {
            break;
        }
        if t > time_limit {
            break;
        }

        if !window_open && t >= cutoff {
            window_open = true;
            last_event = cutoff;
            trace.window_start = cutoff;
            trace.anchor_gen = max_delivered_gen.max(0.0);
            stats.in_system_at_start = occupancy!() as u64;
        }
        if window_open {
            stats.time_in_state[occupancy!()] += t - last_event;
            last_event = t;
        }

        if dep_time <= arr_time {
            // departure
            let done = server.take().expect("departure requires a packet in service");
            let fresh = done.gen > max_delivered_gen;
            if fresh {
                max_delivered_gen = done.gen;
            }
            stats.total_delivered += 1;
            if let Some(recs) = records.as_mut() {
                let r = &mut recs[done.id as usize];
                r.fate = Fate::Delivered;
                r.delivery_time = Some(dep_time);
            }
            if let Some(id) = buf_ids.pop() {
                let gen = buf_gens.pop().expect("parallel buffer vectors");
                let duration = workload.service_time();
                if window_open {
                    stats.waits.wait_sum += dep_time - gen;
                    stats.waits.wait_count += 1;
                    stats.waits.service_sum += done.duration;
                    stats.waits.service_count += 1;
                }
                server = Some(InService {
                    id,
                    gen,
                    start: dep_time,
                    duration,
                });
            }
            if wants_prior {
                live.clear();
                live.extend_from_slice(&buf_gens);
                if let Some(s) = server {
                    live.push(s.gen);
                }
                marks.insert_and_prune(done.gen, &live);
            }

            if window_open {
                trace.deliveries.push(Delivery {
                    gen_time: done.gen,
                    delivery_time: dep_time,
                    fresh,
                });
                if trace.deliveries.len() as u64 >= target_deliveries {
                    trace.end_time = dep_time;
                    break;
                }
            } else if matches!(config.horizon, Horizon::Deliveries(_)) {
                warm_delivered += 1;
                if warm_delivered >= warmup_deliveries {
                    window_open = true;
                    last_event = dep_time;
                    trace.window_start = dep_time;
                    trace.anchor_gen = max_delivered_gen.max(0.0);
                    stats.in_system_at_start = occupancy!() as u64;
                }
            }
        } else {
            // arrival
            let mut id = admit_arrival!(arr_time);
            match server {
                None => {
                    debug_assert!(buf_gens.is_empty());
                    server = Some(InService {
                        id,
                        gen: arr_time,
                        start: arr_time,
                        duration: workload.service_time(),
                    });
                    next_arrival = workload.next_arrival(arr_time);
                }
                Some(s) if buf_gens.len() == b => {
                    // Overflow burst: every arrival before the departure
                    // finds the buffer full, so handle them in one pass.
                    let mut t_new = arr_time;
                    loop {
                        if wants_prior {
                            fill_predecessors(s.gen, &buf_gens, t_new, |g| marks.below(g), &mut prior);
                        }
                        let ctx = DropContext {
                            in_service_gen: s.gen,
                            buffered_gen: &buf_gens,
                            new_gen: t_new,
                            last_prior_gen: if wants_prior { &prior } else { &[] },
                        };
                        let victim = policy.decide(&ctx);
                        if victim == 0 || victim > b + 1 {
                            return Err(SimError::VictimOutOfRange {
                                victim,
                                candidates: b + 1,
                            });
                        }
                        let dropped_id = if victim == b + 1 {
                            id
                        } else if victim == b {
                            buf_gens[b - 1] = t_new;
                            std::mem::replace(&mut buf_ids[b - 1], id)
                        } else {
                            let gone = buf_ids.remove(victim - 1);
                            buf_gens.remove(victim - 1);
                            buf_ids.push(id);
                            buf_gens.push(t_new);
                            gone
                        };
                        stats.total_dropped += 1;
                        if window_open {
                            trace.dropped_count += 1;
                        }
                        if let Some(recs) = records.as_mut() {
                            recs[dropped_id as usize].fate = Fate::Dropped;
                        }

                        next_arrival = workload.next_arrival(t_new);
                        match next_arrival {
                            Some(tn) if tn < dep_time && tn <= time_limit && (window_open || tn < cutoff) => {
                                if window_open {
                                    stats.time_in_state[b + 1] += tn - last_event;
                                    last_event = tn;
                                }
                                id = admit_arrival!(tn);
                                t_new = tn;
                            }
                            _ => break,
                        }
                    }
                }
                Some(_) => {
                    buf_ids.push(id);
                    buf_gens.push(arr_time);
                    next_arrival = workload.next_arrival(arr_time);
                }
            }
        }
    }

    if let Horizon::Time(limit) = config.horizon {
        if !window_open {
            window_open = true;
            last_event = cutoff;
            trace.window_start = cutoff;
            trace.anchor_gen = max_delivered_gen.max(0.0);
            stats.in_system_at_start = occupancy!() as u64;
        }
        let end = if limit.is_finite() { limit } else { last_event };
        stats.time_in_state[occupancy!()] += end - last_event;
        trace.end_time = end;
    } else if trace.end_time == 0.0 {
        // scripted workload exhausted before the target count
        trace.end_time = last_event;
    }
    debug_assert!(window_open || trace.deliveries.is_empty());
    stats.in_system_at_end = occupancy!() as u64;

    Ok(SimOutput {
        trace,
        stats,
        records,
    })
}
