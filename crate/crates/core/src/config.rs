//! Default tolerances. Reports echo the block they ran with.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative accuracy asked of the Liouville quadrature.
    pub liouville_rel: f64,
    /// Acceptable series tail relative to |zeta|.
    pub series_tail: f64,
    /// Newton residual |L(z) - zeta| / |zeta| for the inverse map.
    pub inverse_rel: f64,
    /// Taylor terms below this fraction of the partial sum are dropped.
    pub taylor_term: f64,
    /// Rescale the ODE state once |f| + |f'| leaves [1/x, x].
    pub rescale_at: f64,
    /// Target of the Volterra increment bound.
    pub volterra: f64,
    /// Relative accuracy of tail integrals.
    pub tail_rel: f64,
    /// Box jitter as a fraction of box size.
    pub jitter: f64,
    pub jitter_retries: usize,
    /// Margin for sign decisions of r^{-q} log|f|.
    pub noise_margin: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            liouville_rel: 1e-13,
            series_tail: 1e-10,
            inverse_rel: 1e-12,
            taylor_term: 1e-16,
            rescale_at: 1e100,
            volterra: 1e-10,
            tail_rel: 1e-8,
            jitter: 1e-3,
            jitter_retries: 5,
            noise_margin: 10.0,
        }
    }
}

pub const SCHEMA_VERSION: &str = "1.0";
