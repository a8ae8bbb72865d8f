use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// User-supplied constants of the smoothness / variance assumptions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    /// Lipschitz constant of the loss gradient.
    pub lipschitz: f64,
    /// Bound on stochastic-gradient variance.
    pub sigma_sq: f64,
    /// Bound on the variation introduced by aggregation.
    pub delta_sq: f64,
    /// Target stationarity level.
    pub epsilon: f64,
    /// Local iterations per round.
    pub local_iters: usize,
}

/// Largest admissible learning rate, `2(ε − δ²) / (L₁ (ε + E σ²))`.
///
/// Fails when `ε ≤ δ²`, where no positive rate satisfies the condition.
pub fn lr_bound(c: &TheoryConstants) -> Result<f64> {
    let positive = [
        ("lipschitz", c.lipschitz),
        ("sigma_sq", c.sigma_sq),
        ("epsilon", c.epsilon),
    ];
    for (name, v) in positive {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::config(format!("{name}={v} must be positive")));
        }
    }
    if !(c.delta_sq >= 0.0 && c.delta_sq.is_finite()) {
        return Err(Error::config(format!(
            "delta_sq={} must be >= 0",
            c.delta_sq
        )));
    }
    if c.local_iters == 0 {
        return Err(Error::config("local_iters must be >= 1"));
    }
    if c.epsilon <= c.delta_sq {
        return Err(Error::NoAdmissibleLearningRate {
            epsilon: c.epsilon,
            delta_sq: c.delta_sq,
        });
    }
    Ok(2.0 * (c.epsilon - c.delta_sq)
        / (c.lipschitz * (c.epsilon + c.local_iters as f64 * c.sigma_sq)))
}
