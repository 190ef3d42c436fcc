use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The free variables of the network model: node count `N`, per-node
/// Bernoulli packet rate `p` and minimum contention window `w0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub n_nodes: u32,
    pub packet_rate: f64,
    pub min_window: u32,
}

impl NetworkParams {
    pub fn new(n_nodes: u32, packet_rate: f64, min_window: u32) -> Result<Self> {
        let params = NetworkParams {
            n_nodes,
            packet_rate,
            min_window,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 1 {
            return Err(Error::domain("n_nodes", self.n_nodes as f64, "N >= 1"));
        }
        check_open_probability("packet_rate", self.packet_rate)?;
        if self.min_window < 1 {
            return Err(Error::domain(
                "min_window",
                self.min_window as f64,
                "w0 >= 1",
            ));
        }
        Ok(())
    }

    /// Contention window at `stage`.
    pub fn window(&self, stage: u32) -> f64 {
        window(self.min_window, stage)
    }
}

/// `w_i = 2^i * w0`, as a float so that deep stages do not overflow.
pub fn window(min_window: u32, stage: u32) -> f64 {
    min_window as f64 * 2f64.powi(stage as i32)
}

pub(crate) fn check_open_probability(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(name, value, "0 < value < 1"))
    }
}

pub(crate) fn check_collision_probability(p_cl: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p_cl) {
        return Err(Error::domain("p_cl", p_cl, "0 <= p_cl < 1"));
    }
    if p_cl >= 0.5 {
        return Err(Error::Divergence { p_cl });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_fields() {
        assert!(NetworkParams::new(0, 0.1, 8).is_err());
        assert!(NetworkParams::new(3, 0.0, 8).is_err());
        assert!(NetworkParams::new(3, 1.0, 8).is_err());
        assert!(NetworkParams::new(3, f64::NAN, 8).is_err());
        assert!(NetworkParams::new(3, 0.1, 0).is_err());
        assert!(NetworkParams::new(1, 0.5, 1).is_ok());
    }

    #[test]
    fn window_doubles_per_stage() {
        let params = NetworkParams::new(2, 0.1, 8).unwrap();
        assert_eq!(params.window(0), 8.0);
        assert_eq!(params.window(3), 64.0);
        assert_eq!(window(16, 40), 16.0 * (1u64 << 40) as f64);
    }
}
