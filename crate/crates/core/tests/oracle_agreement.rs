use csma_aoi::analytic::{
    idle_probability, system_time_parameter, QueueMoments, StationaryDistribution,
};
use csma_aoi::oracles::{
    chain_stationary, fixed_point_bisection, queue_oracle, series_idle_probability,
    solve_truncated, ChainMarginals, TruncatedChain,
};
use csma_aoi::{solve_fixed_point, Error, NetworkParams, SolverConfig};

const GRID_P: [f64; 3] = [0.005, 0.01, 0.02];
const GRID_PCL: [f64; 4] = [0.0, 0.1, 0.2, 0.3];
const GRID_W0: [u32; 3] = [4, 8, 16];

fn distance_to_closed_form(m: &ChainMarginals) -> f64 {
    let closed =
        StationaryDistribution::new(m.packet_rate, m.p_cl, m.min_window, m.max_stage()).unwrap();
    m.l1_distance(
        closed.b_idle,
        |i, w| {
            let head = closed.get(i, 0).unwrap();
            (head, closed.get(i, 1).unwrap() / (w - 1.0))
        },
        closed.tail_mass_bound,
    )
}

#[test]
fn chain_agrees_wherever_the_truncation_holds() {
    let mut checked = 0;
    for p in GRID_P {
        for q in GRID_PCL {
            for w0 in GRID_W0 {
                match chain_stationary(p, q, w0, 30, 60) {
                    Ok(m) => {
                        let d = distance_to_closed_form(&m);
                        assert!(d < 1e-6, "p={p} p_cl={q} w0={w0}: L1 {d:e}");
                        let ptx = m.transmission_probability();
                        // Every arrival not dropped at the full buffer is
                        // eventually attempted 1 / (1 - p_cl) times.
                        assert!((ptx * (1.0 - q) + m.buffer_loss - p).abs() < 1e-14);
                        checked += 1;
                    }
                    Err(Error::TruncationTooSmall { flux, .. }) => assert!(flux > 1e-8),
                    Err(e) => panic!("p={p} p_cl={q} w0={w0}: {e}"),
                }
            }
        }
    }
    assert!(checked >= 18, "only {checked} grid points were checkable");
}

#[test]
fn truncation_error_shrinks_with_the_buffer() {
    let (p, q, w0) = (0.01, 0.2, 8);
    let mut last = f64::INFINITY;
    for c in [30, 60, 120] {
        let m = solve_truncated(p, q, w0, 30, c).unwrap();
        let d = distance_to_closed_form(&m);
        assert!(d < last);
        // The distance is governed by the redirected flow.
        assert!(d < 50.0 * m.boundary_flux + 1e-12);
        last = d;
    }
}

#[test]
fn explicit_chain_reproduces_closed_form_entries() {
    let (p, q, w0) = (0.01, 0.02, 4);
    let chain = TruncatedChain::new(p, q, w0, 5, 12).unwrap();
    assert!(chain.row_sum_defect() < 1e-12);
    let st = chain.power_iteration().unwrap();
    assert!(st.boundary_flux < 1e-8);
    let closed = StationaryDistribution::new(p, q, w0, 5).unwrap();
    assert!((st.pi[0] - closed.b_idle).abs() < 1e-8);
    for i in 0..=5 {
        for j in 0..(w0 << i) as usize {
            let a = chain.marginal(&st, i, j);
            let b = closed.get(i, j as u64).unwrap();
            assert!((a - b).abs() < 1e-8, "b[{i}][{j}]: {a} vs {b}");
        }
    }
}

#[test]
fn head_of_single_stage_chain_is_the_packet_rate() {
    let chain = TruncatedChain::new(0.1, 0.0, 4, 0, 8).unwrap();
    let st = chain.power_iteration().unwrap();
    assert!((chain.marginal(&st, 0, 0) - 0.1).abs() < 1e-8);
    let m = chain_stationary(0.1, 0.0, 4, 0, 8).unwrap();
    assert!((m.stages[0].head - 0.1).abs() < 1e-8);
}

#[test]
fn series_matches_closed_idle_probability() {
    let s = series_idle_probability(0.01, 0.2167, 8, 60).unwrap();
    let closed = idle_probability(0.01, 0.2167, 8).unwrap();
    assert!((s.value - closed).abs() < 1e-10);
    assert!(s.tail_bound < 1e-10);

    for p in [0.001, 0.01, 0.05] {
        for q in [0.0, 0.05, 0.2, 0.4, 0.45] {
            for w0 in [1, 8, 32] {
                let closed = idle_probability(p, q, w0);
                let Ok(closed) = closed else { continue };
                let s = series_idle_probability(p, q, w0, 20).unwrap();
                assert!((s.value - s.tail_bound - closed).abs() < 1e-12 + 1e-12 * s.tail_bound);
            }
        }
    }
}

#[test]
fn queue_oracle_matches_system_time_law() {
    let (p, mu) = (0.01, 0.1056);
    let stats = queue_oracle(p, mu, 10_000_000, 11).unwrap();
    let beta = system_time_parameter(p, mu).unwrap();
    assert!((stats.mean_system_time * beta - 1.0).abs() < 0.01);
    let waiting = 1.0 / beta - 1.0 / mu;
    assert!((stats.mean_waiting_time - waiting).abs() / waiting < 0.03);
}

#[test]
fn queue_oracle_matches_cross_moment() {
    let (p, mu) = (0.05, 0.2);
    let stats = queue_oracle(p, mu, 10_000_000, 5).unwrap();
    let moments = QueueMoments::new(p, mu).unwrap();
    assert!((stats.mean_xw / moments.mean_xw - 1.0).abs() < 0.02);
}

#[test]
fn bisection_agrees_with_newton() {
    for n in [2, 5, 10, 20, 50] {
        for p in [1e-4, 1e-3, 5e-3] {
            let params = NetworkParams::new(n, p, 8).unwrap();
            let Ok(sol) = solve_fixed_point(&params, &SolverConfig::default()) else {
                continue;
            };
            let x = fixed_point_bisection(n, p).unwrap();
            assert!((sol.p_tx - x).abs() < 1e-13 * x.max(1e-3));
        }
    }
}
