//! Slot-synchronous Monte Carlo simulation of `N` CSMA/CA nodes.
//!
//! Each slot runs, in order:
//!
//! 1. Bernoulli arrivals. A packet reaching an idle node starts contention at
//!    stage 0 with a counter drawn uniformly from `[0, w0 - 1]`; a counter of
//!    zero means the node transmits in this very slot.
//! 2. Every backlogged node whose counter is zero transmits. One transmitter
//!    is a success, two or more collide.
//! 3. The successful node pops its head-of-line packet and either goes idle
//!    or restarts stage 0 with a fresh counter for the next slot. Colliding
//!    nodes move one stage up (capped) and draw from the doubled window.
//! 4. Non-transmitting backlogged nodes decrement their counter only if the
//!    channel carried nothing; otherwise they freeze.
//! 5. Ages grow by one slot, except at the node that delivered a packet
//!    generated in slot `u`, whose age becomes `m - u + 1` at the end of slot
//!    `m` (the packet's system time).
//!
//! The time-averaged age reported in [`SimulationStats::mean_aoi`] samples
//! the age held during each slot, i.e. before an end-of-slot reset.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::NetworkParams;

pub const DEFAULT_STAGE_CAP: u32 = 24;

const AOI_BATCHES: u64 = 32;

/// Protocol state of one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeState {
    /// Backoff stage; `None` while the buffer is empty.
    pub stage: Option<u32>,
    /// Slots left before the next attempt. Meaningless while idle.
    pub counter: u64,
    /// Generation slots of the buffered packets, head of line first.
    pub queue: VecDeque<u64>,
    /// Age at the end of the last simulated slot.
    pub aoi: u64,
    pub last_delivered_generation: Option<u64>,
    /// First slot in which the head-of-line packet contended.
    pub service_start: u64,
}

impl NodeState {
    pub fn idle() -> Self {
        NodeState {
            stage: None,
            counter: 0,
            queue: VecDeque::new(),
            aoi: 0,
            last_delivered_generation: None,
            service_start: 0,
        }
    }

    pub fn is_idle(&self) -> bool {
        self.stage.is_none()
    }

    fn transmits(&self) -> bool {
        self.stage.is_some() && self.counter == 0
    }
}

/// What the channel carried in one slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SlotOutcome {
    Idle,
    Success(usize),
    Collision(Vec<usize>),
}

/// A packet that left the network in a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    pub node: usize,
    pub generation: u64,
    /// `W + S`, counting the delivery slot.
    pub system_time: u64,
    /// Slots spent as head of line, counting the delivery slot.
    pub service_time: u64,
}

/// Full record of one simulated slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotReport {
    pub slot: u64,
    pub outcome: SlotOutcome,
    pub delivery: Option<Delivery>,
    pub arrivals: u32,
    /// Nodes with an empty buffer after arrivals were applied.
    pub idle_nodes: u32,
}

/// All node states plus the slot clock.
#[derive(Debug, Clone)]
pub struct World {
    pub nodes: Vec<NodeState>,
    /// Index of the next slot to simulate.
    pub slot: u64,
    pub min_window: u32,
    pub stage_cap: u32,
    arrival_buf: Vec<usize>,
}

impl World {
    pub fn new(n_nodes: usize, min_window: u32, stage_cap: u32) -> Self {
        World::from_nodes(vec![NodeState::idle(); n_nodes], 0, min_window, stage_cap)
    }

    pub fn from_nodes(nodes: Vec<NodeState>, slot: u64, min_window: u32, stage_cap: u32) -> Self {
        World {
            nodes,
            slot,
            min_window,
            stage_cap,
            arrival_buf: Vec::new(),
        }
    }

    fn window(&self, stage: u32) -> u64 {
        (self.min_window as u64) << stage.min(self.stage_cap)
    }

    pub fn queue_total(&self) -> u64 {
        self.nodes.iter().map(|n| n.queue.len() as u64).sum()
    }

    /// Advances one slot with Bernoulli(`packet_rate`) arrivals at every node.
    pub fn step<R: Rng>(&mut self, packet_rate: f64, rng: &mut R) -> SlotReport {
        let mut arrivals = std::mem::take(&mut self.arrival_buf);
        arrivals.clear();
        for node in 0..self.nodes.len() {
            if rng.gen::<f64>() < packet_rate {
                arrivals.push(node);
            }
        }
        let report = self.step_with_arrivals(&arrivals, rng);
        self.arrival_buf = arrivals;
        report
    }

    /// Advances one slot with packets arriving exactly at `arrivals`.
    pub fn step_with_arrivals<R: Rng>(&mut self, arrivals: &[usize], rng: &mut R) -> SlotReport {
        let slot = self.slot;
        let w0 = self.min_window as u64;

        for &n in arrivals {
            let node = &mut self.nodes[n];
            node.queue.push_back(slot);
            if node.stage.is_none() {
                node.stage = Some(0);
                node.counter = rng.gen_range(0..w0);
                node.service_start = slot;
            }
        }
        let idle_nodes = self.nodes.iter().filter(|n| n.is_idle()).count() as u32;

        let mut first = None;
        let mut count = 0usize;
        for (i, node) in self.nodes.iter().enumerate() {
            if node.transmits() {
                count += 1;
                if first.is_none() {
                    first = Some(i);
                }
            }
        }

        let mut delivery = None;
        let outcome = match count {
            0 => {
                for node in self.nodes.iter_mut().filter(|n| n.stage.is_some()) {
                    node.counter -= 1;
                }
                SlotOutcome::Idle
            }
            1 => {
                let n = first.unwrap_or_default();
                let node = &mut self.nodes[n];
                let generation = node
                    .queue
                    .pop_front()
                    .expect("a transmitting node holds a packet");
                delivery = Some(Delivery {
                    node: n,
                    generation,
                    system_time: slot - generation + 1,
                    service_time: slot - node.service_start + 1,
                });
                if node.queue.is_empty() {
                    node.stage = None;
                    node.counter = 0;
                } else {
                    node.stage = Some(0);
                    node.counter = rng.gen_range(0..w0);
                    node.service_start = slot + 1;
                }
                SlotOutcome::Success(n)
            }
            _ => {
                let mut colliders = Vec::with_capacity(count);
                for n in 0..self.nodes.len() {
                    if self.nodes[n].transmits() {
                        let stage = (self.nodes[n].stage.unwrap_or(0) + 1).min(self.stage_cap);
                        let window = self.window(stage);
                        let node = &mut self.nodes[n];
                        node.stage = Some(stage);
                        node.counter = rng.gen_range(0..window);
                        colliders.push(n);
                    }
                }
                SlotOutcome::Collision(colliders)
            }
        };

        for node in self.nodes.iter_mut() {
            node.aoi += 1;
        }
        if let Some(d) = delivery {
            let node = &mut self.nodes[d.node];
            node.aoi = d.system_time;
            node.last_delivered_generation = Some(d.generation);
        }

        self.slot += 1;
        SlotReport {
            slot,
            outcome,
            delivery,
            arrivals: arrivals.len() as u32,
            idle_nodes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub params: NetworkParams,
    /// Total number of simulated slots.
    pub horizon: u64,
    /// Leading slots excluded from every average.
    pub warmup: u64,
    pub seed: u64,
    /// Stage beyond which the window stops doubling.
    pub stage_cap: u32,
}

impl SimulationConfig {
    pub fn new(params: NetworkParams, horizon: u64, warmup: u64, seed: u64) -> Self {
        SimulationConfig {
            params,
            horizon,
            warmup,
            seed,
            stage_cap: DEFAULT_STAGE_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.horizon <= self.warmup {
            return Err(Error::Config(format!(
                "horizon ({}) must exceed warmup ({})",
                self.horizon, self.warmup
            )));
        }
        if (self.params.min_window as u64).leading_zeros() <= self.stage_cap {
            return Err(Error::Config(format!(
                "stage cap {} overflows the window of w0 = {}",
                self.stage_cap, self.params.min_window
            )));
        }
        Ok(())
    }

    fn world(&self) -> World {
        World::new(
            self.params.n_nodes as usize,
            self.params.min_window,
            self.stage_cap,
        )
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Slot counts by channel outcome over the whole horizon.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelCounts {
    pub idle: u64,
    pub success: u64,
    pub collision: u64,
}

/// Empirical counterparts of the analytic quantities.
///
/// Rates, means and the histogram cover the slots after warmup; the
/// conservation counters (`arrivals`, `total_delivered`, `final_queue_total`,
/// `channel`) cover the whole horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationStats {
    /// Attempts per node-slot.
    pub empirical_p_tx: f64,
    /// Fraction of attempts that collided.
    pub empirical_p_cl: f64,
    /// Fraction of node-slots with an empty buffer.
    pub empirical_p_idle: f64,
    /// Successes per backlogged node-slot.
    pub empirical_mu: f64,
    /// Age averaged over slots, then over nodes.
    pub mean_aoi: f64,
    /// Batch-means standard error of `mean_aoi`.
    pub aoi_standard_error: f64,
    pub mean_system_time: f64,
    pub mean_service_time: f64,
    pub service_time_variance: f64,
    /// Packets delivered after warmup.
    pub delivered: u64,
    pub service_time_histogram: BTreeMap<u64, u64>,
    pub measured_slots: u64,
    pub arrivals: u64,
    pub total_delivered: u64,
    pub final_queue_total: u64,
    pub channel: ChannelCounts,
    /// False when the backlog keeps growing over the measured window.
    pub stable: bool,
}

#[derive(Default)]
struct Accumulator {
    node_slots: u64,
    attempts: u64,
    collided_attempts: u64,
    idle_node_slots: u64,
    backlogged_node_slots: u64,
    successes: u64,
    system_time_sum: u64,
    service_sum: u64,
    service_sq_sum: u128,
    histogram: BTreeMap<u64, u64>,
    aoi_sums: Vec<u64>,
    batch_sums: Vec<f64>,
    queue_halves: [f64; 2],
}

/// Runs `cfg.horizon` slots from the all-idle state.
pub fn simulate(cfg: &SimulationConfig) -> Result<SimulationStats> {
    run(cfg, |_, _| Ok(()))
}

/// Like [`simulate`], writing one `slot,event,queue_total` line per slot to
/// `trace`, where the event is `I`, `S:<node>` or `C:<count>`.
pub fn simulate_with_trace<W: Write>(
    cfg: &SimulationConfig,
    trace: &mut W,
) -> Result<SimulationStats> {
    let stats = run(cfg, |report, world| {
        let queue = world.queue_total();
        match &report.outcome {
            SlotOutcome::Idle => writeln!(trace, "{},I,{}", report.slot, queue)?,
            SlotOutcome::Success(n) => writeln!(trace, "{},S:{},{}", report.slot, n, queue)?,
            SlotOutcome::Collision(nodes) => {
                writeln!(trace, "{},C:{},{}", report.slot, nodes.len(), queue)?
            }
        }
        Ok(())
    })?;
    trace.flush()?;
    Ok(stats)
}

/// End-of-slot age of `node` for every slot of the horizon.
pub fn record_aoi_path(cfg: &SimulationConfig, node: usize) -> Result<Vec<(u64, u64)>> {
    if node >= cfg.params.n_nodes as usize {
        return Err(Error::Config(format!(
            "node {node} out of range for {} nodes",
            cfg.params.n_nodes
        )));
    }
    let mut path = Vec::with_capacity(cfg.horizon as usize);
    run(cfg, |report, world| {
        path.push((report.slot, world.nodes[node].aoi));
        Ok(())
    })?;
    Ok(path)
}

/// Writes an AoI path as a two-column `slot,age` CSV.
pub fn write_aoi_path<W: Write>(path: &[(u64, u64)], out: &mut W) -> Result<()> {
    writeln!(out, "slot,age")?;
    for (slot, age) in path {
        writeln!(out, "{slot},{age}")?;
    }
    out.flush()?;
    Ok(())
}

fn run<F>(cfg: &SimulationConfig, mut observe: F) -> Result<SimulationStats>
where
    F: FnMut(&SlotReport, &World) -> Result<()>,
{
    cfg.validate()?;
    let mut rng = cfg.rng();
    let mut world = cfg.world();
    let n = world.nodes.len();
    let p = cfg.params.packet_rate;
    let measured = cfg.horizon - cfg.warmup;
    let batch_len = (measured / AOI_BATCHES).max(1);

    let mut acc = Accumulator {
        aoi_sums: vec![0; n],
        batch_sums: vec![0.0; (measured / batch_len) as usize],
        ..Accumulator::default()
    };
    let mut channel = ChannelCounts::default();
    let mut arrivals = 0u64;
    let mut total_delivered = 0u64;

    for slot in 0..cfg.horizon {
        let measuring = slot >= cfg.warmup;
        if measuring {
            // age held during this slot, before any end-of-slot reset
            let mut slot_age = 0u64;
            for (sum, node) in acc.aoi_sums.iter_mut().zip(&world.nodes) {
                *sum += node.aoi + 1;
                slot_age += node.aoi + 1;
            }
            let batch = ((slot - cfg.warmup) / batch_len) as usize;
            if let Some(b) = acc.batch_sums.get_mut(batch) {
                *b += slot_age as f64 / n as f64;
            }
        }

        let report = world.step(p, &mut rng);
        arrivals += report.arrivals as u64;

        let attempts = match &report.outcome {
            SlotOutcome::Idle => {
                channel.idle += 1;
                0
            }
            SlotOutcome::Success(_) => {
                channel.success += 1;
                1
            }
            SlotOutcome::Collision(nodes) => {
                channel.collision += 1;
                nodes.len() as u64
            }
        };
        if report.delivery.is_some() {
            total_delivered += 1;
        }

        if measuring {
            acc.node_slots += n as u64;
            acc.idle_node_slots += report.idle_nodes as u64;
            acc.backlogged_node_slots += (n as u64) - report.idle_nodes as u64;
            acc.attempts += attempts;
            if attempts > 1 {
                acc.collided_attempts += attempts;
            }
            if let Some(d) = report.delivery {
                acc.successes += 1;
                acc.system_time_sum += d.system_time;
                acc.service_sum += d.service_time;
                acc.service_sq_sum += (d.service_time as u128) * (d.service_time as u128);
                *acc.histogram.entry(d.service_time).or_insert(0) += 1;
            }
            let half = usize::from(slot - cfg.warmup >= measured / 2);
            acc.queue_halves[half] += world.queue_total() as f64;
        }

        observe(&report, &world)?;
    }

    Ok(finish(
        acc,
        channel,
        arrivals,
        total_delivered,
        world.queue_total(),
        measured,
        n,
    ))
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn finish(
    acc: Accumulator,
    channel: ChannelCounts,
    arrivals: u64,
    total_delivered: u64,
    final_queue_total: u64,
    measured: u64,
    n: usize,
) -> SimulationStats {
    let mean_aoi = acc
        .aoi_sums
        .iter()
        .map(|&s| s as f64 / measured as f64)
        .sum::<f64>()
        / n as f64;

    let batch_len = (measured / AOI_BATCHES).max(1) as f64;
    let batch_means: Vec<f64> = acc.batch_sums.iter().map(|s| s / batch_len).collect();
    let aoi_standard_error = if batch_means.len() > 1 {
        let k = batch_means.len() as f64;
        let mean = batch_means.iter().sum::<f64>() / k;
        let var = batch_means.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    } else {
        0.0
    };

    let mean_service_time = ratio(acc.service_sum, acc.successes);
    let service_time_variance = if acc.successes > 1 {
        let s = acc.successes as f64;
        let second = acc.service_sq_sum as f64 / s;
        (second - mean_service_time * mean_service_time) * s / (s - 1.0)
    } else {
        0.0
    };

    let first_half = measured / 2;
    let second_half = measured - first_half;
    let q_first = if first_half > 0 {
        acc.queue_halves[0] / first_half as f64
    } else {
        0.0
    };
    let q_second = acc.queue_halves[1] / second_half as f64;
    let stable = q_second <= 1.5 * q_first + 1.0;

    SimulationStats {
        empirical_p_tx: ratio(acc.attempts, acc.node_slots),
        empirical_p_cl: ratio(acc.collided_attempts, acc.attempts),
        empirical_p_idle: ratio(acc.idle_node_slots, acc.node_slots),
        empirical_mu: ratio(acc.successes, acc.backlogged_node_slots),
        mean_aoi,
        aoi_standard_error,
        mean_system_time: ratio(acc.system_time_sum, acc.successes),
        mean_service_time,
        service_time_variance,
        delivered: acc.successes,
        service_time_histogram: acc.histogram,
        measured_slots: measured,
        arrivals,
        total_delivered,
        final_queue_total,
        channel,
        stable,
    }
}
