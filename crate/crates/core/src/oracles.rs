//! Brute-force counterparts of the closed forms, used to validate them.
//!
//! Nothing here reuses the closed-form code paths: the chain oracles start
//! from the per-node transition rules, the queue oracle from a slot-level
//! Geom/Geom/1 simulation, and the series oracle from stage-by-stage sums.
//!
//! Two chain oracles are provided. [`TruncatedChain`] enumerates every
//! `(stage, counter, buffer)` state and runs plain power iteration; it is
//! exact but only practical for small truncations. [`chain_stationary`]
//! solves the same truncated chain stage by stage with buffer-resolved
//! matrices, which makes deep truncations (windows of `2^30 * w0`) cheap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{check_collision_probability, check_open_probability, window};

/// Largest per-slot probability flow the truncation may redirect.
pub const BOUNDARY_FLUX_LIMIT: f64 = 1e-8;

/// Largest state space [`TruncatedChain::new`] will enumerate.
pub const EXPLICIT_STATE_LIMIT: usize = 2_000_000;

const POWER_TOLERANCE: f64 = 1e-12;
const ENTRY_TOLERANCE: f64 = 1e-15;
const MAX_POWER_ITERATIONS: usize = 2_000_000;

fn check_chain_inputs(p: f64, p_cl: f64, min_window: u32, max_buffer: u32) -> Result<()> {
    check_open_probability("p", p)?;
    check_collision_probability(p_cl)?;
    if min_window < 1 {
        return Err(Error::domain("min_window", min_window as f64, "w0 >= 1"));
    }
    if max_buffer < 1 {
        return Err(Error::domain("max_buffer", max_buffer as f64, "c_max >= 1"));
    }
    Ok(())
}

/// The per-node chain with every state enumerated.
///
/// State 0 is IDLE; the others are `(stage, counter, buffer)` with
/// `stage <= max_stage` and `1 <= buffer <= max_buffer`. Transitions that
/// would leave the region are folded onto its edge (stage `max_stage`,
/// buffer `max_buffer`) and their probability is remembered per row.
#[derive(Debug, Clone)]
pub struct TruncatedChain {
    pub packet_rate: f64,
    pub p_cl: f64,
    pub min_window: u32,
    pub max_stage: u32,
    pub max_buffer: u32,
    offsets: Vec<usize>,
    rows: Vec<Vec<(usize, f64)>>,
    /// Probability each row sends across the truncation boundary.
    folded: Vec<f64>,
}

/// Stationary vector of a [`TruncatedChain`].
#[derive(Debug, Clone)]
pub struct ExplicitStationary {
    pub pi: Vec<f64>,
    pub iterations: usize,
    /// Stationary probability per slot of a folded transition.
    pub boundary_flux: f64,
}

impl TruncatedChain {
    pub fn new(
        p: f64,
        p_cl: f64,
        min_window: u32,
        max_stage: u32,
        max_buffer: u32,
    ) -> Result<Self> {
        check_chain_inputs(p, p_cl, min_window, max_buffer)?;
        let c = max_buffer as usize;
        let mut offsets = Vec::with_capacity(max_stage as usize + 2);
        let mut total = 1usize;
        for i in 0..=max_stage {
            offsets.push(total);
            let w = window(min_window, i);
            let states = w * c as f64;
            if states + total as f64 > EXPLICIT_STATE_LIMIT as f64 {
                return Err(Error::Config(format!(
                    "explicit chain would exceed {EXPLICIT_STATE_LIMIT} states"
                )));
            }
            total += states as usize;
        }
        offsets.push(total);

        let mut chain = TruncatedChain {
            packet_rate: p,
            p_cl,
            min_window,
            max_stage,
            max_buffer,
            offsets,
            rows: vec![Vec::new(); total],
            folded: vec![0.0; total],
        };
        chain.build();
        Ok(chain)
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    fn stage_window(&self, stage: u32) -> usize {
        window(self.min_window, stage) as usize
    }

    /// Index of `(stage, counter, buffer)`; buffer counts from 1.
    pub fn index(&self, stage: u32, counter: usize, buffer: u32) -> usize {
        self.offsets[stage as usize] + counter * self.max_buffer as usize + (buffer as usize - 1)
    }

    fn build(&mut self) {
        let p = self.packet_rate;
        let c = self.max_buffer;
        let w0 = self.stage_window(0);

        let mut idle = vec![(0, 1.0 - p)];
        for j in 0..w0 {
            idle.push((self.index(0, j, 1), p / w0 as f64));
        }
        self.rows[0] = idle;

        for i in 0..=self.max_stage {
            let w = self.stage_window(i);
            for j in 0..w {
                for k in 1..=c {
                    let from = self.index(i, j, k);
                    let (row, folded) = if j >= 1 {
                        self.counting_row(i, j, k)
                    } else {
                        self.head_row(i, k)
                    };
                    self.rows[from] = row;
                    self.folded[from] = folded;
                }
            }
        }
    }

    /// Buffer after one arrival, and whether it was folded.
    fn grow(&self, k: u32) -> (u32, bool) {
        if k < self.max_buffer {
            (k + 1, false)
        } else {
            (k, true)
        }
    }

    fn counting_row(&self, i: u32, j: usize, k: u32) -> (Vec<(usize, f64)>, f64) {
        let p = self.packet_rate;
        let q = self.p_cl;
        let (k_up, folded) = self.grow(k);
        let row = vec![
            (self.index(i, j, k), (1.0 - p) * q),
            (self.index(i, j - 1, k), (1.0 - p) * (1.0 - q)),
            (self.index(i, j, k_up), p * q),
            (self.index(i, j - 1, k_up), p * (1.0 - q)),
        ];
        (row, if folded { p } else { 0.0 })
    }

    fn head_row(&self, i: u32, k: u32) -> (Vec<(usize, f64)>, f64) {
        let p = self.packet_rate;
        let q = self.p_cl;
        let w0 = self.stage_window(0);
        let mut row = Vec::new();
        let mut folded = 0.0;

        if k == 1 {
            row.push((0, (1.0 - q) * (1.0 - p)));
        } else {
            for j in 0..w0 {
                row.push((self.index(0, j, k - 1), (1.0 - q) * (1.0 - p) / w0 as f64));
            }
        }
        for j in 0..w0 {
            row.push((self.index(0, j, k), (1.0 - q) * p / w0 as f64));
        }

        let next = if i < self.max_stage {
            i + 1
        } else {
            folded += q;
            i
        };
        let (k_up, buffer_folded) = self.grow(k);
        if buffer_folded {
            folded += q * p;
        }
        let w_next = self.stage_window(next);
        for j in 0..w_next {
            row.push((self.index(next, j, k), q * (1.0 - p) / w_next as f64));
            row.push((self.index(next, j, k_up), q * p / w_next as f64));
        }
        (row, folded)
    }

    /// Largest `|row sum - 1|` over all states.
    pub fn row_sum_defect(&self) -> f64 {
        self.rows
            .iter()
            .map(|row| (row.iter().map(|&(_, v)| v).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Power iteration from the uniform vector until the L1 change per
    /// step drops below `1e-12`.
    pub fn power_iteration(&self) -> Result<ExplicitStationary> {
        let n = self.n_states();
        let mut pi = vec![1.0 / n as f64; n];
        let mut next = vec![0.0; n];
        for iteration in 1..=MAX_POWER_ITERATIONS {
            next.iter_mut().for_each(|v| *v = 0.0);
            for (from, row) in self.rows.iter().enumerate() {
                let mass = pi[from];
                if mass == 0.0 {
                    continue;
                }
                for &(to, prob) in row {
                    next[to] += mass * prob;
                }
            }
            let total: f64 = next.iter().sum();
            let mut change = 0.0;
            for (a, b) in pi.iter_mut().zip(&next) {
                let v = b / total;
                change += (v - *a).abs();
                *a = v;
            }
            if change < POWER_TOLERANCE {
                let boundary_flux = pi.iter().zip(&self.folded).map(|(a, b)| a * b).sum();
                return Ok(ExplicitStationary {
                    pi,
                    iterations: iteration,
                    boundary_flux,
                });
            }
        }
        Err(Error::NoConvergence {
            iterations: MAX_POWER_ITERATIONS,
            last_x: f64::NAN,
            residual: f64::NAN,
        })
    }

    /// `b[stage][counter]` aggregated over the buffer.
    pub fn marginal(&self, stationary: &ExplicitStationary, stage: u32, counter: usize) -> f64 {
        (1..=self.max_buffer)
            .map(|k| stationary.pi[self.index(stage, counter, k)])
            .sum()
    }
}

/// Buffer-aggregated stationary masses of one stage.
///
/// Countdown conserves probability, so the counter masses for `j >= 1` are
/// exactly `(w - j) * per_counter`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageMarginal {
    pub window: f64,
    pub head: f64,
    pub per_counter: f64,
}

impl StageMarginal {
    pub fn get(&self, counter: u64) -> f64 {
        if counter == 0 {
            self.head
        } else {
            (self.window - counter as f64) * self.per_counter
        }
    }

    pub fn mass(&self) -> f64 {
        self.head + self.per_counter * self.window * (self.window - 1.0) / 2.0
    }
}

/// Output of [`chain_stationary`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMarginals {
    pub packet_rate: f64,
    pub p_cl: f64,
    pub min_window: u32,
    pub max_buffer: u32,
    pub b_idle: f64,
    pub stages: Vec<StageMarginal>,
    /// Stationary mass per buffer level `1..=max_buffer`.
    pub buffer_profile: Vec<f64>,
    /// Stationary probability per slot of a folded transition.
    pub boundary_flux: f64,
    /// Arrivals per slot dropped at a full buffer.
    pub buffer_loss: f64,
    pub iterations: usize,
}

impl ChainMarginals {
    pub fn max_stage(&self) -> u32 {
        self.stages.len() as u32 - 1
    }

    pub fn get(&self, stage: u32, counter: u64) -> Option<f64> {
        let s = self.stages.get(stage as usize)?;
        if counter as f64 > s.window - 1.0 {
            return None;
        }
        Some(s.get(counter))
    }

    /// Attempt probability: the total head-of-stage mass.
    pub fn transmission_probability(&self) -> f64 {
        self.stages.iter().map(|s| s.head).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.b_idle + self.stages.iter().map(StageMarginal::mass).sum::<f64>()
    }

    /// L1 distance between these marginals and arbitrary per-stage
    /// `(head, per_counter)` references plus a reference idle mass.
    /// `outside` is reference mass the truncation has no states for.
    pub fn l1_distance<F>(&self, b_idle: f64, reference: F, outside: f64) -> f64
    where
        F: Fn(u32, f64) -> (f64, f64),
    {
        let mut d = (self.b_idle - b_idle).abs() + outside;
        for (i, s) in self.stages.iter().enumerate() {
            let (head, per_counter) = reference(i as u32, s.window);
            d += (s.head - head).abs();
            d += (s.per_counter - per_counter).abs() * s.window * (s.window - 1.0) / 2.0;
        }
        d
    }
}

/// Dense `n x n` row-major matrix; every one used here is lower triangular.
#[derive(Debug, Clone, PartialEq)]
struct Lower {
    n: usize,
    a: Vec<f64>,
}

impl Lower {
    fn zeros(n: usize) -> Self {
        Lower {
            n,
            a: vec![0.0; n * n],
        }
    }

    fn identity(n: usize) -> Self {
        let mut m = Lower::zeros(n);
        for i in 0..n {
            m.a[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.a[r * self.n + c]
    }

    fn mul(&self, other: &Lower) -> Lower {
        let n = self.n;
        let mut out = Lower::zeros(n);
        for r in 0..n {
            for k in 0..=r {
                let v = self.at(r, k);
                if v == 0.0 {
                    continue;
                }
                let row = &other.a[k * n..k * n + k + 1];
                let dst = &mut out.a[r * n..r * n + k + 1];
                for (d, o) in dst.iter_mut().zip(row) {
                    *d += v * o;
                }
            }
        }
        out
    }

    fn add(&self, other: &Lower) -> Lower {
        Lower {
            n: self.n,
            a: self.a.iter().zip(&other.a).map(|(x, y)| x + y).collect(),
        }
    }

    fn scale(&self, s: f64) -> Lower {
        Lower {
            n: self.n,
            a: self.a.iter().map(|x| x * s).collect(),
        }
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| (0..=r).map(|k| self.at(r, k) * v[k]).sum())
            .collect()
    }

    /// Solves `self * x = b` by forward substitution.
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for r in 0..self.n {
            let s: f64 = (0..r).map(|k| self.at(r, k) * x[k]).sum();
            x[r] = (b[r] - s) / self.at(r, r);
        }
        x
    }

    fn inverse(&self) -> Lower {
        let n = self.n;
        let mut inv = Lower::zeros(n);
        for col in 0..n {
            let mut e = vec![0.0; n];
            e[col] = 1.0;
            let x = self.solve(&e);
            for (r, v) in x.into_iter().enumerate() {
                inv.a[r * n + col] = v;
            }
        }
        inv
    }

    fn column_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|c| (0..self.n).map(|r| self.at(r, c)).sum())
            .collect()
    }
}

/// `(M^n, sum_{m<n} M^m, sum_{m<n} (n - m) M^m)` for a countdown of `n`
/// steps.
#[derive(Clone)]
struct Countdown {
    n: f64,
    power: Lower,
    sum: Lower,
    weighted: Lower,
}

impl Countdown {
    fn empty(dim: usize) -> Self {
        Countdown {
            n: 0.0,
            power: Lower::identity(dim),
            sum: Lower::zeros(dim),
            weighted: Lower::zeros(dim),
        }
    }

    fn single(step: &Lower) -> Self {
        Countdown {
            n: 1.0,
            power: step.clone(),
            sum: Lower::identity(step.n),
            weighted: Lower::identity(step.n),
        }
    }

    /// Countdown of `self.n + other.n` steps.
    fn then(&self, other: &Countdown) -> Countdown {
        Countdown {
            n: self.n + other.n,
            power: self.power.mul(&other.power),
            sum: self.sum.add(&self.power.mul(&other.sum)),
            weighted: self
                .weighted
                .add(&self.sum.scale(other.n))
                .add(&self.power.mul(&other.weighted)),
        }
    }

    fn of_length(step: &Lower, mut n: u64) -> Countdown {
        let mut acc = Countdown::empty(step.n);
        let mut base = Countdown::single(step);
        while n > 0 {
            if n & 1 == 1 {
                acc = acc.then(&base);
            }
            n >>= 1;
            if n > 0 {
                base = base.then(&base);
            }
        }
        acc
    }
}

/// Stationary buffer-aggregated marginals of the per-node chain truncated
/// at `max_stage` stages and `max_buffer` buffered packets.
///
/// Each stage is solved exactly with buffer-resolved matrices: for inflow
/// `z` spread over the `w` counters, the counter vectors obey
/// `x_j = S (z / w + T x_{j+1})` with `S = (I - p_cl A)^-1`,
/// `T = (1 - p_cl) A` and `A` the one-slot arrival operator, and the sums
/// over a whole countdown are formed by repeated doubling. Stage entries
/// feed the next stage through collisions and stage 0 through successes;
/// the stage-0 entry vector is the fixed point of that cycle, found by
/// power iteration.
///
/// Fails with [`Error::TruncationTooSmall`] when the stationary flow across
/// the truncation boundary exceeds [`BOUNDARY_FLUX_LIMIT`].
pub fn chain_stationary(
    p: f64,
    p_cl: f64,
    min_window: u32,
    max_stage: u32,
    max_buffer: u32,
) -> Result<ChainMarginals> {
    let marginals = solve_truncated(p, p_cl, min_window, max_stage, max_buffer)?;
    if marginals.boundary_flux > BOUNDARY_FLUX_LIMIT {
        return Err(Error::TruncationTooSmall {
            flux: marginals.boundary_flux,
            threshold: BOUNDARY_FLUX_LIMIT,
        });
    }
    Ok(marginals)
}

/// [`chain_stationary`] without the boundary check.
pub fn solve_truncated(
    p: f64,
    p_cl: f64,
    min_window: u32,
    max_stage: u32,
    max_buffer: u32,
) -> Result<ChainMarginals> {
    check_chain_inputs(p, p_cl, min_window, max_buffer)?;
    if max_stage > 60 {
        return Err(Error::domain("max_stage", max_stage as f64, "i_max <= 60"));
    }
    let c = max_buffer as usize;
    let q = p_cl;

    let mut arrival = Lower::zeros(c);
    for k in 0..c {
        arrival.a[k * c + k] = 1.0 - p;
        if k > 0 {
            arrival.a[k * c + k - 1] = p;
        }
    }
    arrival.a[c * c - 1] = 1.0;

    let stay = Lower::identity(c).add(&arrival.scale(-q));
    let s = stay.inverse();
    let step = s.mul(&arrival.scale(1.0 - q));
    let drift = step
        .column_sums()
        .iter()
        .map(|v| (v - 1.0).abs())
        .fold(0.0, f64::max);
    if drift > 1e-12 {
        return Err(Error::NoConvergence {
            iterations: 0,
            last_x: drift,
            residual: drift,
        });
    }

    // Per stage: head operator, counter operator and window.
    let mut heads = Vec::with_capacity(max_stage as usize + 1);
    let mut counters = Vec::with_capacity(max_stage as usize + 1);
    let mut windows = Vec::with_capacity(max_stage as usize + 1);
    let mut countdown = Countdown::of_length(&step, min_window as u64);
    for i in 0..=max_stage {
        let w = window(min_window, i);
        let inflow = s.scale(1.0 / w);
        heads.push(stay.mul(&countdown.sum).mul(&inflow));
        counters.push(
            countdown
                .weighted
                .add(&countdown.sum.scale(-1.0))
                .mul(&inflow),
        );
        windows.push(w);
        if i < max_stage {
            countdown = countdown.then(&countdown);
        }
    }

    // Stage-entry operators relative to the stage-0 entry vector.
    let collide = arrival.scale(q);
    let last = max_stage as usize;
    let mut entries = Vec::with_capacity(last + 1);
    let mut z = Lower::identity(c);
    for head in &heads[..last] {
        entries.push(z.clone());
        z = collide.mul(head).mul(&z);
    }
    let fold = Lower::identity(c).add(&collide.mul(&heads[last]).scale(-1.0));
    let fold_inv = fold.inverse();
    entries.push(fold_inv.mul(&z));

    let mut cycle = Lower::zeros(c);
    for (h, e) in heads.iter().zip(&entries) {
        cycle = cycle.add(&h.mul(e));
    }

    let mut z0 = vec![0.0; c];
    z0[0] = 1.0;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let x = cycle.apply(&z0);
        let mut next = vec![0.0; c];
        for k in 0..c {
            next[k] += p * x[k];
            if k + 1 < c {
                next[k] += (1.0 - p) * x[k + 1];
            }
        }
        next[0] += (1.0 - p) * x[0];
        let total: f64 = next.iter().sum();
        let mut change = 0.0;
        for (a, b) in z0.iter_mut().zip(&next) {
            let v = b / total;
            change += (v - *a).abs();
            *a = v;
        }
        if change < ENTRY_TOLERANCE {
            break;
        }
        if iterations >= MAX_POWER_ITERATIONS {
            return Err(Error::NoConvergence {
                iterations,
                last_x: f64::NAN,
                residual: change,
            });
        }
    }

    let mut stages = Vec::with_capacity(last + 1);
    let mut profile = vec![0.0; c];
    let mut served = vec![0.0; c];
    let mut last_head = 0.0;
    for i in 0..=last {
        let zi = entries[i].apply(&z0);
        let x0 = heads[i].apply(&zi);
        let rest = counters[i].apply(&zi);
        let per_counter = s.apply(&zi).iter().sum::<f64>() / windows[i];
        let head: f64 = x0.iter().sum();
        for k in 0..c {
            profile[k] += x0[k] + rest[k];
            served[k] += x0[k];
        }
        if i == last {
            last_head = head;
        }
        stages.push(StageMarginal {
            window: windows[i],
            head,
            per_counter,
        });
    }
    let b_idle = (1.0 - p) * (1.0 - q) * served[0] / p;

    let total = b_idle + stages.iter().map(StageMarginal::mass).sum::<f64>();
    for st in &mut stages {
        st.head /= total;
        st.per_counter /= total;
    }
    profile.iter_mut().for_each(|v| *v /= total);
    let full = profile[c - 1] - (1.0 - q) * served[c - 1] / total;
    let buffer_loss = p * full;
    let boundary_flux = q * last_head / total + buffer_loss;

    Ok(ChainMarginals {
        packet_rate: p,
        p_cl,
        min_window,
        max_buffer,
        b_idle: b_idle / total,
        stages,
        buffer_profile: profile,
        boundary_flux,
        buffer_loss,
        iterations,
    })
}

/// Idle probability as one minus the stage-by-stage sum of the backlogged
/// masses through `max_stage`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesIdle {
    pub value: f64,
    /// Mass of the stages beyond `max_stage`, summed analytically.
    pub tail_bound: f64,
}

pub fn series_idle_probability(
    p: f64,
    p_cl: f64,
    min_window: u32,
    max_stage: u32,
) -> Result<SeriesIdle> {
    check_open_probability("p", p)?;
    check_collision_probability(p_cl)?;
    if min_window < 1 {
        return Err(Error::domain("min_window", min_window as f64, "w0 >= 1"));
    }
    let w0 = min_window as f64;
    let one_minus = 1.0 - p_cl;
    let mut geometric = 1.0;
    let mut doubled = 1.0;
    let mut backlog = 0.0;
    for _ in 0..=max_stage {
        let head = p * geometric;
        let counting = p * (w0 * doubled - geometric) / (2.0 * one_minus);
        backlog += head + counting;
        geometric *= p_cl;
        doubled *= 2.0 * p_cl;
    }
    let tail_bound = p
        * (geometric / one_minus
            + (w0 * doubled / (1.0 - 2.0 * p_cl) - geometric / one_minus) / (2.0 * one_minus));
    Ok(SeriesIdle {
        value: 1.0 - backlog,
        tail_bound,
    })
}

/// Time averages of a simulated Geom/Geom/1 queue with an AoI monitor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueOracleStats {
    pub mean_system_time: f64,
    pub mean_waiting_time: f64,
    /// Age averaged over slots, sampled during each slot.
    pub mean_aoi: f64,
    /// Mean of interarrival time times waiting time of the same packet.
    pub mean_xw: f64,
    pub deliveries: u64,
}

/// Simulates `horizon` slots of a single Bernoulli(`p`) queue whose head of
/// line completes with probability `mu` in each slot, arrivals first.
pub fn queue_oracle(p: f64, mu: f64, horizon: u64, seed: u64) -> Result<QueueOracleStats> {
    check_open_probability("p", p)?;
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::domain("mu", mu, "0 < mu <= 1"));
    }
    if p >= mu {
        return Err(Error::Unstable { p, mu });
    }
    if horizon == 0 {
        return Err(Error::Config("horizon must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // (generation, interarrival, service start)
    let mut queue: std::collections::VecDeque<(u64, u64, u64)> = Default::default();
    let mut last_arrival: Option<u64> = None;
    let mut age = 0u64;
    let mut age_sum = 0u128;
    let mut system_sum = 0u64;
    let mut waiting_sum = 0u64;
    let mut xw_sum = 0u128;
    let mut xw_count = 0u64;
    let mut deliveries = 0u64;

    for slot in 0..horizon {
        if rng.gen::<f64>() < p {
            let gap = last_arrival.map_or(0, |u| slot - u);
            if queue.is_empty() {
                queue.push_back((slot, gap, slot));
            } else {
                queue.push_back((slot, gap, u64::MAX));
            }
            last_arrival = Some(slot);
        }
        age += 1;
        age_sum += age as u128;
        if !queue.is_empty() && rng.gen::<f64>() < mu {
            let (generation, gap, start) = queue.pop_front().unwrap_or_default();
            let waiting = start - generation;
            system_sum += slot - generation + 1;
            waiting_sum += waiting;
            if gap > 0 {
                xw_sum += gap as u128 * waiting as u128;
                xw_count += 1;
            }
            deliveries += 1;
            age = slot - generation + 1;
            if let Some(next) = queue.front_mut() {
                next.2 = slot + 1;
            }
        }
    }
    let per = |sum: f64, n: u64| if n == 0 { f64::NAN } else { sum / n as f64 };
    Ok(QueueOracleStats {
        mean_system_time: per(system_sum as f64, deliveries),
        mean_waiting_time: per(waiting_sum as f64, deliveries),
        mean_aoi: age_sum as f64 / horizon as f64,
        mean_xw: per(xw_sum as f64, xw_count),
        deliveries,
    })
}

/// Smaller root of `x (1 - x)^(n - 1) = p` by plain bisection on
/// `[0, 1/n]`; `None` when `p` exceeds the maximum of the left side.
pub fn fixed_point_bisection(n_nodes: u32, p: f64) -> Option<f64> {
    let n = n_nodes as f64;
    let f = |x: f64| x * (1.0 - x).powf(n - 1.0) - p;
    let (mut lo, mut hi) = (0.0, 1.0 / n);
    if f(hi) < 0.0 {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}
