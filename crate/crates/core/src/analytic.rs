//! Closed-form performance of a single node in the unsaturated network.
//!
//! Every function here is a direct evaluation: no iteration, no randomness.
//! The per-node backoff chain is summarised by its stationary masses
//! `b[i][j]` (stage `i`, counter `j`, aggregated over buffer occupancy) and
//! the idle mass; the queue at each node is treated as Geom/Geom/1 with
//! service rate `mu`, from which the system-time law and the average age
//! follow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{check_collision_probability, check_open_probability, window, NetworkParams};

/// Stationary probability `b[i][j]` of stage `stage`, counter `counter`,
/// aggregated over the buffer occupancy.
///
/// The head of each stage holds `p * p_cl^i`; counter `j >= 1` holds
/// `p * (w_i - j) * p_cl^i / (w_i * (1 - p_cl))`.
pub fn stationary_entry(
    p: f64,
    p_cl: f64,
    min_window: u32,
    stage: u32,
    counter: u64,
) -> Result<f64> {
    check_open_probability("p", p)?;
    if !(0.0..1.0).contains(&p_cl) {
        return Err(Error::domain("p_cl", p_cl, "0 <= p_cl < 1"));
    }
    if min_window < 1 {
        return Err(Error::domain("min_window", min_window as f64, "w0 >= 1"));
    }
    let w = window(min_window, stage);
    if counter as f64 > w - 1.0 {
        return Err(Error::domain(
            "counter",
            counter as f64,
            "0 <= j <= w_i - 1",
        ));
    }
    Ok(entry_unchecked(p, p_cl, w, stage, counter as f64))
}

#[inline]
fn entry_unchecked(p: f64, p_cl: f64, w: f64, stage: u32, counter: f64) -> f64 {
    let head = p * p_cl.powi(stage as i32);
    if counter == 0.0 {
        head
    } else {
        head * (w - counter) / (w * (1.0 - p_cl))
    }
}

/// Stationary probability that the node is backlogged (any stage, any
/// counter), summed in closed form over all stages.
fn backlog_probability(p: f64, p_cl: f64, min_window: u32) -> f64 {
    let w0 = min_window as f64;
    let one_minus = 1.0 - p_cl;
    p * (4.0 * p_cl * p_cl - (w0 + 4.0) * p_cl + w0 + 1.0)
        / (2.0 * one_minus * one_minus * (1.0 - 2.0 * p_cl))
}

/// Stationary probability that the node's buffer is empty.
///
/// A negative value means the backoff process cannot serve `p`; that is
/// reported as [`Error::InfeasibleLoad`] rather than clamped.
pub fn idle_probability(p: f64, p_cl: f64, min_window: u32) -> Result<f64> {
    check_open_probability("p", p)?;
    check_collision_probability(p_cl)?;
    if min_window < 1 {
        return Err(Error::domain("min_window", min_window as f64, "w0 >= 1"));
    }
    let p_idle = 1.0 - backlog_probability(p, p_cl, min_window);
    if p_idle < 0.0 {
        return Err(Error::InfeasibleLoad { p_idle });
    }
    Ok(p_idle)
}

/// `mu = p / (1 - p_idle)`.
pub fn service_rate(p: f64, p_idle: f64) -> Result<f64> {
    check_open_probability("p", p)?;
    if !(0.0..1.0).contains(&p_idle) {
        return Err(Error::domain("p_idle", p_idle, "0 <= p_idle < 1"));
    }
    let mu = p / (1.0 - p_idle);
    if mu > 1.0 {
        return Err(Error::InfeasibleModel {
            quantity: "mu",
            value: mu,
        });
    }
    Ok(mu)
}

fn check_stable(p: f64, mu: f64) -> Result<()> {
    check_open_probability("p", p)?;
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::domain("mu", mu, "0 < mu <= 1"));
    }
    if p >= mu {
        return Err(Error::Unstable { p, mu });
    }
    Ok(())
}

/// Parameter `beta = (mu - p) / (1 - p)` of the geometric system time.
pub fn system_time_parameter(p: f64, mu: f64) -> Result<f64> {
    check_stable(p, mu)?;
    Ok((mu - p) / (1.0 - p))
}

/// Probability generating function of the system time,
/// `G(z) = beta z / (1 - (1 - beta) z)`.
pub fn system_time_pgf(beta: f64, z: f64) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::domain("beta", beta, "0 < beta <= 1"));
    }
    if !(0.0..=1.0).contains(&z) {
        return Err(Error::domain("z", z, "0 <= z <= 1"));
    }
    Ok(beta * z / (1.0 - (1.0 - beta) * z))
}

/// Average age of information of one node, in slots.
pub fn average_aoi(p: f64, mu: f64) -> Result<f64> {
    check_stable(p, mu)?;
    Ok(1.0 / p + p / mu + (1.0 - p) / (mu - p) - p / (mu * mu))
}

/// Average age assembled from the sawtooth area decomposition:
/// `p * (E[X^2]/2 + E[X]/2 + E[X W] + E[X] E[S])`.
///
/// Algebraically identical to [`average_aoi`]; kept as an independent
/// assembly route.
pub fn aoi_from_area_decomposition(p: f64, mu: f64) -> Result<f64> {
    let moments = QueueMoments::new(p, mu)?;
    Ok(p * moments.mean_area)
}

/// Auxiliary generating function
/// `H(z) = sum_j z^j Pr{X = j} sum_i Pr{T > j + i}`, whose derivative at
/// `z -> 1-` is `E[X W]`.
pub fn auxiliary_h(p: f64, beta: f64, z: f64) -> f64 {
    (1.0 - beta) * p * z / (beta * (1.0 - (1.0 - beta) * (1.0 - p) * z))
}

/// Moments of one inter-arrival / service cycle of the Geom/Geom/1 queue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueMoments {
    /// `E[X]`
    pub mean_interarrival: f64,
    /// `E[X^2]`
    pub second_moment_interarrival: f64,
    /// `E[S] = 1 / mu`
    pub mean_service: f64,
    /// `E[X_k W_k]`
    pub mean_xw: f64,
    /// `E[A_k]`, the area under the age curve attributed to one packet.
    pub mean_area: f64,
}

impl QueueMoments {
    pub fn new(p: f64, mu: f64) -> Result<Self> {
        let beta = system_time_parameter(p, mu)?;
        let mean_interarrival = 1.0 / p;
        let second_moment_interarrival = (2.0 - p) / (p * p);
        let mean_service = 1.0 / mu;
        let overlap = 1.0 - (1.0 - p) * (1.0 - beta);
        let mean_xw = p * (1.0 - beta) / (beta * overlap * overlap);
        let mean_area = 0.5 * second_moment_interarrival
            + 0.5 * mean_interarrival
            + mean_xw
            + mean_interarrival * mean_service;
        Ok(QueueMoments {
            mean_interarrival,
            second_moment_interarrival,
            mean_service,
            mean_xw,
            mean_area,
        })
    }
}

/// Operating point of the network: the solution of the coupled
/// transmission/collision equations and everything derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSolution {
    pub params: NetworkParams,
    /// Probability that a node transmits in a slot.
    pub p_tx: f64,
    /// Probability that an attempt collides.
    pub p_cl: f64,
    pub p_idle: f64,
    /// Per-slot success probability of a backlogged node.
    pub mu: f64,
    /// System-time parameter; `None` when the queue is unstable.
    pub beta: Option<f64>,
    /// Average age in slots; `None` (unbounded) when the queue is unstable.
    pub avg_aoi: Option<f64>,
    pub stable: bool,
}

impl ProtocolSolution {
    /// Derives the full operating point from a transmission probability
    /// that solves the fixed point for `params`.
    pub fn from_transmission_probability(params: NetworkParams, p_tx: f64) -> Result<Self> {
        params.validate()?;
        check_open_probability("p_tx", p_tx)?;
        let p = params.packet_rate;
        let p_cl = collision_probability(p_tx, params.n_nodes);
        check_collision_probability(p_cl)?;
        let p_idle = idle_probability(p, p_cl, params.min_window)?;
        let mu = service_rate(p, p_idle)?;
        let stable = p < mu;
        let (beta, avg_aoi) = if stable {
            (
                Some(system_time_parameter(p, mu)?),
                Some(average_aoi(p, mu)?),
            )
        } else {
            (None, None)
        };
        Ok(ProtocolSolution {
            params,
            p_tx,
            p_cl,
            p_idle,
            mu,
            beta,
            avg_aoi,
            stable,
        })
    }
}

/// `1 - (1 - p_tx)^(N - 1)`, evaluated without cancellation for small `p_tx`.
pub fn collision_probability(p_tx: f64, n_nodes: u32) -> f64 {
    let others = n_nodes.saturating_sub(1) as f64;
    -(others * (-p_tx).ln_1p()).exp_m1()
}

/// Stationary distribution of the per-node chain, truncated at `stage_cap`
/// stages.
///
/// Windows grow as `2^i * w0`, so entries are evaluated on demand instead of
/// being materialised.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryDistribution {
    pub packet_rate: f64,
    pub p_cl: f64,
    pub min_window: u32,
    pub stage_cap: u32,
    pub b_idle: f64,
    /// Exact mass of the stages beyond `stage_cap`.
    pub tail_mass_bound: f64,
}

impl StationaryDistribution {
    pub fn new(p: f64, p_cl: f64, min_window: u32, stage_cap: u32) -> Result<Self> {
        let b_idle = idle_probability(p, p_cl, min_window)?;
        let mut dist = StationaryDistribution {
            packet_rate: p,
            p_cl,
            min_window,
            stage_cap,
            b_idle,
            tail_mass_bound: 0.0,
        };
        dist.tail_mass_bound = stage_tail(p, p_cl, min_window, stage_cap + 1);
        Ok(dist)
    }

    pub fn window(&self, stage: u32) -> f64 {
        window(self.min_window, stage)
    }

    /// `b[stage][counter]`; `None` outside the truncated table.
    pub fn get(&self, stage: u32, counter: u64) -> Option<f64> {
        if stage > self.stage_cap || counter as f64 > self.window(stage) - 1.0 {
            return None;
        }
        Some(entry_unchecked(
            self.packet_rate,
            self.p_cl,
            self.window(stage),
            stage,
            counter as f64,
        ))
    }

    /// Total mass of one stage, head plus every counter.
    pub fn stage_mass(&self, stage: u32) -> f64 {
        stage_mass(self.packet_rate, self.p_cl, self.window(stage), stage)
    }

    /// Sum of every entry in the truncated table.
    pub fn entries_sum(&self) -> f64 {
        (0..=self.stage_cap).map(|i| self.stage_mass(i)).sum()
    }
}

/// `b[i][0] + sum_{j>=1} b[i][j]` with the counter sum done as an arithmetic
/// series.
pub(crate) fn stage_mass(p: f64, p_cl: f64, w: f64, stage: u32) -> f64 {
    let head = p * p_cl.powi(stage as i32);
    head * (1.0 + (w - 1.0) / (2.0 * (1.0 - p_cl)))
}

/// Exact mass of all stages `>= from`.
pub(crate) fn stage_tail(p: f64, p_cl: f64, min_window: u32, from: u32) -> f64 {
    if p_cl == 0.0 {
        return if from == 0 {
            stage_mass(p, 0.0, min_window as f64, 0)
        } else {
            0.0
        };
    }
    let w0 = min_window as f64;
    let one_minus = 1.0 - p_cl;
    let geometric = p_cl.powi(from as i32) / one_minus;
    let doubled = w0 * (2.0 * p_cl).powi(from as i32) / (1.0 - 2.0 * p_cl);
    p * (geometric + (doubled - geometric) / (2.0 * one_minus))
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn stationary_entry_examples() {
        assert!(close(
            stationary_entry(0.1, 0.2, 8, 1, 0).unwrap(),
            0.02,
            1e-15
        ));
        assert!(close(
            stationary_entry(0.1, 0.0, 8, 0, 7).unwrap(),
            0.0125,
            1e-15
        ));
        // 40-digit reference evaluation of the same expression.
        let b = stationary_entry(0.01, 0.2167, 8, 2, 3).unwrap();
        assert!(close(b, 0.000543297511330269373, 1e-14));
    }

    #[test]
    fn stationary_entry_rejects_bad_indices() {
        assert!(stationary_entry(0.1, 0.2, 8, 0, 8).is_err());
        assert!(stationary_entry(0.1, 0.2, 8, 1, 15).is_ok());
        assert!(stationary_entry(0.1, 0.2, 8, 1, 16).is_err());
        assert!(stationary_entry(0.0, 0.2, 8, 0, 0).is_err());
        assert!(stationary_entry(0.1, 1.0, 8, 0, 0).is_err());
    }

    #[test]
    fn head_balance_is_exact() {
        for &p_cl in &[0.0, 0.1, 0.3, 0.49] {
            for i in 0..30 {
                let here = stationary_entry(0.02, p_cl, 8, i, 0).unwrap();
                let next = stationary_entry(0.02, p_cl, 8, i + 1, 0).unwrap();
                assert!(
                    (next - p_cl * here).abs() <= 4.0 * f64::EPSILON * next,
                    "stage {i}, p_cl {p_cl}"
                );
            }
        }
    }

    #[test]
    fn idle_probability_examples() {
        assert!(close(idle_probability(0.1, 0.0, 8).unwrap(), 0.55, 1e-15));
        let p_idle = idle_probability(0.01, 0.2167, 8).unwrap();
        assert!(close(p_idle, 0.905255597576377473, 1e-14));
        assert!(matches!(
            idle_probability(0.2, 0.5, 8),
            Err(Error::Divergence { .. })
        ));
        assert!(matches!(
            idle_probability(0.3, 0.0, 8),
            Err(Error::InfeasibleLoad { .. })
        ));
    }

    #[test]
    fn service_rate_examples() {
        assert_eq!(service_rate(0.3, 0.0).unwrap(), 0.3);
        assert!(close(service_rate(0.1, 0.55).unwrap(), 2.0 / 9.0, 1e-14));
        let mu = service_rate(0.01, 0.9053064825477757979).unwrap();
        assert!(close(mu, 0.10560384986274597, 1e-12));
        assert!(service_rate(0.1, 1.0).is_err());
        assert!(matches!(
            service_rate(0.5, 0.6),
            Err(Error::InfeasibleModel { .. })
        ));
    }

    #[test]
    fn system_time_parameter_examples() {
        assert_eq!(system_time_parameter(0.1, 1.0).unwrap(), 1.0);
        let beta = system_time_parameter(0.01, 0.10560384986274597).unwrap();
        assert!(close(beta, 0.096569545315905021, 1e-12));
        assert!(matches!(
            system_time_parameter(0.1, 0.1),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn pgf_examples() {
        assert_eq!(system_time_pgf(0.5, 1.0).unwrap(), 1.0);
        assert!(close(system_time_pgf(1.0, 0.7).unwrap(), 0.7, 1e-15));
        assert!(close(system_time_pgf(0.25, 0.5).unwrap(), 0.2, 1e-15));
        assert!(system_time_pgf(0.0, 0.5).is_err());
        assert!(system_time_pgf(0.5, 1.5).is_err());
    }

    #[test]
    fn pgf_mean_by_finite_difference() {
        for &beta in &[0.05, 0.2, 0.5, 0.9, 1.0] {
            // second-order one-sided difference at z = 1
            let h = 1e-4 * beta;
            let g = |z: f64| system_time_pgf(beta, z).unwrap();
            let slope = (3.0 * g(1.0) - 4.0 * g(1.0 - h) + g(1.0 - 2.0 * h)) / (2.0 * h);
            assert!((slope - 1.0 / beta).abs() < 1e-6, "beta {beta}: {slope}");
        }
    }

    #[test]
    fn average_aoi_examples() {
        assert!(close(average_aoi(0.5, 1.0).unwrap(), 3.0, 1e-15));
        assert!(close(
            average_aoi(0.01, 0.10560384986274597).unwrap(),
            109.55323881759938,
            1e-10
        ));
        assert!(close(
            average_aoi(0.05, 2.0 / 9.0).unwrap(),
            24.728629032258064516,
            1e-14
        ));
        assert!(matches!(average_aoi(0.2, 0.2), Err(Error::Unstable { .. })));
    }

    #[test]
    fn area_decomposition_matches_closed_form() {
        assert!(close(
            aoi_from_area_decomposition(0.5, 1.0).unwrap(),
            3.0,
            1e-15
        ));
        let a = aoi_from_area_decomposition(0.2, 0.4).unwrap();
        let b = average_aoi(0.2, 0.4).unwrap();
        assert!((a - b).abs() <= 1e-12 * b);
        assert!(aoi_from_area_decomposition(0.4, 0.4).is_err());
    }

    #[test]
    fn queue_moments_of_interarrival() {
        let m = QueueMoments::new(0.2, 0.5).unwrap();
        assert!(close(m.mean_interarrival, 5.0, 1e-15));
        assert!(close(m.second_moment_interarrival, 45.0, 1e-15));
        assert!(close(m.mean_service, 2.0, 1e-15));
        assert!(m.mean_xw > 0.0 && m.mean_area > 0.0);
    }

    #[test]
    fn cross_moment_is_derivative_of_h() {
        let (p, mu) = (0.05, 0.2);
        let beta = system_time_parameter(p, mu).unwrap();
        let h = 1e-6;
        let slope = (auxiliary_h(p, beta, 1.0) - auxiliary_h(p, beta, 1.0 - h)) / h;
        let m = QueueMoments::new(p, mu).unwrap();
        assert!((slope - m.mean_xw).abs() < 1e-4 * m.mean_xw);
    }

    #[test]
    fn single_node_solution() {
        let params = NetworkParams::new(1, 0.05, 8).unwrap();
        let s = ProtocolSolution::from_transmission_probability(params, 0.05).unwrap();
        assert_eq!(s.p_cl, 0.0);
        assert!(close(s.mu, 2.0 / 9.0, 1e-15));
        assert!(s.stable);
        assert!(close(s.avg_aoi.unwrap(), 24.728629032258064516, 1e-13));
    }

    #[test]
    fn collision_probability_small_argument() {
        let x = 1e-12;
        assert!(close(collision_probability(x, 20), 19e-12, 1e-9));
        assert_eq!(collision_probability(0.3, 1), 0.0);
        assert!(close(collision_probability(0.5, 3), 0.75, 1e-15));
    }

    #[test]
    fn truncated_distribution_bounds() {
        for &p_cl in &[0.0, 0.1, 0.3, 0.45] {
            let dist = StationaryDistribution::new(0.01, p_cl, 8, 40).unwrap();
            let kept = dist.b_idle + dist.entries_sum();
            assert!(kept <= 1.0 + 1e-12, "p_cl {p_cl}: {kept}");
            assert!(kept + dist.tail_mass_bound >= 1.0 - 1e-12, "p_cl {p_cl}");
            assert_eq!(dist.get(0, 0), Some(0.01));
            assert_eq!(dist.get(41, 0), None);
            assert_eq!(dist.get(1, 16), None);
        }
    }

    #[test]
    fn normalization_with_deep_truncation() {
        for &p_cl in &[0.0, 0.1, 0.2, 0.3] {
            for &w0 in &[4, 8, 16] {
                let dist = StationaryDistribution::new(0.01, p_cl, w0, 40).unwrap();
                let total = dist.b_idle + dist.entries_sum();
                assert!(
                    (1.0 - 1e-8..=1.0 + 1e-12).contains(&total),
                    "{p_cl} {w0}: {total}"
                );
            }
        }
    }

    #[test]
    fn aoi_grows_without_bound_near_capacity() {
        for &mu in &[0.1, 0.3, 0.6, 0.9] {
            let mut previous = 0.0;
            for k in 1..12 {
                let p = mu * (1.0 - 10f64.powi(-k));
                let aoi = average_aoi(p, mu).unwrap();
                assert!(aoi > previous, "mu {mu} k {k}");
                previous = aoi;
            }
            assert!(previous > 1e9);
        }
    }
}
