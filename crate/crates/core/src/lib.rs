//! Closed-form and simulated performance of an unsaturated slotted CSMA/CA
//! network, with Age of Information as the headline metric.
//!
//! * [`analytic`]: per-node stationary masses, idle probability, service
//!   rate, system-time law and average age.
//! * [`solvers`]: the transmission/collision fixed point and the capacity
//!   limits `p_max` and `N_max`.
//! * [`simulator`]: a slot-level protocol simulator.
//! * [`oracles`]: brute-force counterparts used to validate the closed forms.
//! * [`sweep`]: parameter sweeps and their CSV/JSON tables.

pub mod analytic;
pub mod error;
pub mod oracles;
pub mod params;
pub mod simulator;
pub mod solvers;
pub mod sweep;

pub use analytic::{average_aoi, ProtocolSolution, StationaryDistribution};
pub use error::{Error, Result};
pub use params::NetworkParams;
pub use simulator::{simulate, SimulationConfig, SimulationStats};
pub use solvers::{max_node_count, max_packet_rate, solve_fixed_point, SolverConfig};
