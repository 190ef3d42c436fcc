//! Root finding for the coupled transmission/collision fixed point and for
//! the capacity limits of the network.

use serde::{Deserialize, Serialize};

use crate::analytic::{collision_probability, ProtocolSolution};
use crate::error::{Error, Result};
use crate::params::{check_open_probability, NetworkParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Bound on the residual of the equation being solved.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Overrides the default search interval of the fixed-point solve.
    pub bracket: Option<(f64, f64)>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-12,
            max_iterations: 200,
            bracket: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::domain("tolerance", self.tolerance, "tolerance > 0"));
        }
        if self.max_iterations < 1 {
            return Err(Error::domain(
                "max_iterations",
                self.max_iterations as f64,
                "max_iterations >= 1",
            ));
        }
        if let Some((lo, hi)) = self.bracket {
            if lo.is_nan() || hi.is_nan() || lo >= hi {
                return Err(Error::Config(format!("empty bracket [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// Newton's method safeguarded by a sign-change bracket: any step that leaves
/// the bracket, or fails to halve it, is replaced by bisection.
///
/// `f` returns the value and the derivative. The bracket ends must not have
/// the same strict sign.
pub fn bracketed_newton<F>(f: F, lo: f64, hi: f64, cfg: &SolverConfig) -> Result<f64>
where
    F: Fn(f64) -> (f64, f64),
{
    let (f_lo, _) = f(lo);
    let (f_hi, _) = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::NoRoot(format!(
            "no sign change on [{lo}, {hi}] (f = {f_lo}, {f_hi})"
        )));
    }
    // orient so that f(neg) < 0 < f(pos)
    let (mut neg, mut pos) = if f_lo < 0.0 { (lo, hi) } else { (hi, lo) };
    let mut x = 0.5 * (lo + hi);
    let mut step_before = (hi - lo).abs();
    let mut step = step_before;
    let (mut fx, mut dfx) = f(x);

    for _ in 0..cfg.max_iterations {
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            neg = x;
        } else {
            pos = x;
        }
        let newton = x - fx / dfx;
        let inside = (newton - neg) * (newton - pos) < 0.0;
        let x_next = if dfx != 0.0
            && newton.is_finite()
            && inside
            && (2.0 * fx).abs() <= (step_before * dfx).abs()
        {
            step_before = step;
            newton
        } else {
            step_before = step;
            0.5 * (neg + pos)
        };
        step = (x_next - x).abs();
        x = x_next;
        let next = f(x);
        fx = next.0;
        dfx = next.1;
        if step <= 2.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE)
            || (pos - neg).abs() <= 2.0 * f64::EPSILON * x.abs()
        {
            break;
        }
    }

    if fx.abs() < cfg.tolerance {
        Ok(x)
    } else {
        Err(Error::NoConvergence {
            iterations: cfg.max_iterations,
            last_x: x,
            residual: fx,
        })
    }
}

/// Locates the first sign change of `f` on `[lo, hi]` by scanning `cells`
/// equal subintervals, then refines it.
fn smallest_root<F>(f: F, lo: f64, hi: f64, cells: usize, cfg: &SolverConfig) -> Result<f64>
where
    F: Fn(f64) -> (f64, f64),
{
    let width = (hi - lo) / cells as f64;
    let mut a = lo;
    let mut fa = f(a).0;
    for k in 1..=cells {
        let b = if k == cells {
            hi
        } else {
            lo + width * k as f64
        };
        let fb = f(b).0;
        if fa == 0.0 {
            return Ok(a);
        }
        if fa.signum() != fb.signum() {
            return bracketed_newton(&f, a, b, cfg);
        }
        a = b;
        fa = fb;
    }
    Err(Error::NoRoot(format!("no sign change on [{lo}, {hi}]")))
}

/// Solves `x (1 - x)^(N-1) = p` for the transmission probability on the
/// light-traffic branch `x <= 1/N`, then derives the full operating point.
pub fn solve_fixed_point(params: &NetworkParams, cfg: &SolverConfig) -> Result<ProtocolSolution> {
    params.validate()?;
    cfg.validate()?;
    let p = params.packet_rate;
    let n = params.n_nodes;
    let p_tx = if n == 1 {
        p
    } else {
        let peak = 1.0 / n as f64;
        let capacity = peak * (1.0 - peak).powi(n as i32 - 1);
        if p > capacity {
            return Err(Error::OverCapacity {
                p,
                capacity,
                n_nodes: n,
            });
        }
        let others = (n - 1) as f64;
        let residual = move |x: f64| {
            let stay = (1.0 - x).powf(others - 1.0);
            (x * stay * (1.0 - x) - p, stay * (1.0 - n as f64 * x))
        };
        let (lo, hi) = match cfg.bracket {
            Some((lo, hi)) => (lo.max(0.0), hi.min(peak)),
            None => (0.0, peak),
        };
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::Config(format!(
                "bracket [{lo}, {hi}] misses (0, 1/N]"
            )));
        }
        bracketed_newton(residual, lo, hi, cfg)?
    };
    ProtocolSolution::from_transmission_probability(*params, p_tx)
}

/// Backoff load factor `4 q^2 - (w0 + 4) q + w0 + 1` and its derivative.
fn load_factor(q: f64, w0: f64) -> (f64, f64) {
    (
        4.0 * q * q - (w0 + 4.0) * q + w0 + 1.0,
        8.0 * q - (w0 + 4.0),
    )
}

/// Largest packet rate that leaves the network unsaturated for `n_nodes`
/// nodes with minimum window `min_window`.
pub fn max_packet_rate(n_nodes: u32, min_window: u32, cfg: &SolverConfig) -> Result<f64> {
    cfg.validate()?;
    if n_nodes < 1 {
        return Err(Error::domain("n_nodes", n_nodes as f64, "N >= 1"));
    }
    if min_window < 1 {
        return Err(Error::domain("min_window", min_window as f64, "w0 >= 1"));
    }
    let w0 = min_window as f64;
    if n_nodes == 1 {
        return Ok(2.0 / (w0 + 1.0));
    }
    let others = (n_nodes - 1) as f64;
    // saturation condition with p_cl = 1 - (1 - x)^(N-1) substituted
    let saturation = move |x: f64| {
        let stay_m1 = (1.0 - x).powf(others - 1.0);
        let stay = stay_m1 * (1.0 - x);
        let q = 1.0 - stay;
        let dq = others * stay_m1;
        let (c, dc) = load_factor(q, w0);
        let value = x * c - 2.0 * stay * (1.0 - 2.0 * q);
        let slope = c + x * dc * dq + 2.0 * others * stay_m1 * (1.0 - 2.0 * q) + 4.0 * stay * dq;
        (value, slope)
    };
    // p_cl reaches 0.5 at x_half
    let x_half = -(0.5f64.ln() / others).exp_m1();
    let x_bar = smallest_root(saturation, 0.0, x_half, 4096, cfg).map_err(|_| {
        Error::NoRoot(format!(
            "no saturation point with p_cl < 0.5 for N = {n_nodes}"
        ))
    })?;
    Ok(x_bar * (1.0 - collision_probability(x_bar, n_nodes)))
}

/// Largest node count that keeps the network unsaturated at packet rate `p`.
pub fn max_node_count(p: f64, min_window: u32, cfg: &SolverConfig) -> Result<u32> {
    cfg.validate()?;
    check_open_probability("p", p)?;
    if min_window < 1 {
        return Err(Error::domain("min_window", min_window as f64, "w0 >= 1"));
    }
    let w0 = min_window as f64;
    if p >= 2.0 / (w0 + 1.0) {
        return Err(Error::domain("p", p, "p < 2 / (w0 + 1)"));
    }
    // idle probability reaches zero: 2 (1-x)^2 (1-2x) = p C(x)
    let cubic = move |x: f64| {
        let (c, dc) = load_factor(x, w0);
        let value = 2.0 * (1.0 - x) * (1.0 - x) * (1.0 - 2.0 * x) - p * c;
        let slope = -4.0 * (1.0 - x) * (1.0 - 2.0 * x) - 4.0 * (1.0 - x) * (1.0 - x) - p * dc;
        (value, slope)
    };
    let p_cl_bar = smallest_root(cubic, 0.0, 0.5, 1024, cfg).map_err(|_| {
        Error::NoRoot(format!(
            "idle probability never vanishes for p_cl in (0, 0.5) at p = {p}"
        ))
    })?;
    let p_tx = p / (1.0 - p_cl_bar);
    if p_tx >= 1.0 {
        return Err(Error::InfeasibleModel {
            quantity: "p_tx",
            value: p_tx,
        });
    }
    let raw = (-p_cl_bar).ln_1p() / (-p_tx).ln_1p() + 1.0;
    let nearest = raw.round();
    let n_max = if (raw - nearest).abs() < 1e-9 {
        nearest
    } else {
        raw.floor()
    };
    Ok(n_max.max(1.0) as u32)
}
