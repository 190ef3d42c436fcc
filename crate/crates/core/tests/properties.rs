use proptest::prelude::*;

use csma_aoi::analytic::{
    aoi_from_area_decomposition, average_aoi, system_time_parameter, system_time_pgf,
    StationaryDistribution,
};
use csma_aoi::{max_packet_rate, solve_fixed_point, NetworkParams, SolverConfig};

proptest! {
    #[test]
    fn fixed_point_residual(n in 2u32..60, frac in 0.01f64..0.999, w0 in 1u32..64) {
        let cfg = SolverConfig::default();
        let n1 = (n - 1) as f64;
        let p_peak = (1.0 / n as f64) * (1.0 - 1.0 / n as f64).powf(n1);
        let p = frac * p_peak;
        let params = NetworkParams::new(n, p, w0).unwrap();
        if let Ok(sol) = solve_fixed_point(&params, &cfg) {
            let residual = sol.p_tx * (1.0 - sol.p_tx).powf(n1) - p;
            prop_assert!(residual.abs() < 1e-12);
            prop_assert!((sol.p_tx * (1.0 - sol.p_cl) - p).abs() < 1e-12);
            prop_assert!(sol.p_tx <= 1.0 / n as f64);
        }
        let pmax = max_packet_rate(n, w0, &cfg).unwrap();
        prop_assert!(pmax > 0.0 && pmax <= p_peak);
    }

    #[test]
    fn aoi_identity(p in 1e-4f64..0.9, slack in 1e-3f64..1.0) {
        let mu = p + slack * (1.0 - p);
        let a = average_aoi(p, mu).unwrap();
        let b = aoi_from_area_decomposition(p, mu).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn pgf_is_a_probability_law(p in 1e-3f64..0.5, slack in 1e-2f64..1.0, z in 0.0f64..1.0) {
        let mu = p + slack * (1.0 - p);
        let beta = system_time_parameter(p, mu).unwrap();
        prop_assert!((system_time_pgf(beta, 1.0).unwrap() - 1.0).abs() < 1e-13);
        let g = system_time_pgf(beta, z).unwrap();
        prop_assert!((0.0..=1.0).contains(&g));
    }

    #[test]
    fn stationary_masses_sum_to_one(p in 1e-4f64..0.05, q in 0.0f64..0.3, w0 in 1u32..32) {
        let Ok(d) = StationaryDistribution::new(p, q, w0, 60) else { return Ok(()) };
        let total = d.b_idle + d.entries_sum() + d.tail_mass_bound;
        prop_assert!((total - 1.0).abs() < 1e-12);
    }
}
