//! Tolerance checks and the four layer acceptance rules.

use serde::{Deserialize, Serialize};

use crate::mutation::Layer;

/// Below this magnitude a parent decay rate counts as zero.
pub const K_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceParams {
    /// Absolute for ℓ̄, relative for k̄ and t̄.
    pub epsilon: f64,
    /// Improvement threshold, same convention.
    pub delta: f64,
}

impl Default for ToleranceParams {
    fn default() -> Self {
        Self {
            epsilon: 0.02,
            delta: 0.05,
        }
    }
}

impl ToleranceParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self, String> {
        let t = Self { epsilon, delta };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(format!("epsilon must be >= 0, got {}", self.epsilon));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(format!("delta must be > 0, got {}", self.delta));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Ell,
    K,
    T,
}

pub fn within_tolerance(x_prime: f64, x: f64, kind: MetricKind, eps: f64) -> bool {
    let d = (x_prime - x).abs();
    match kind {
        MetricKind::Ell => d <= eps,
        MetricKind::K if x.abs() <= K_FLOOR => x_prime.abs() <= K_FLOOR,
        MetricKind::K | MetricKind::T => d <= eps * x.abs(),
    }
}

/// `k′ ≥ (1+δ)k`; a zero parent rate is beaten by any positive one.
fn k_improves(k_prime: f64, k: f64, delta: f64) -> bool {
    if k.abs() <= K_FLOOR {
        k_prime > K_FLOOR
    } else {
        k_prime >= (1.0 + delta) * k
    }
}

/// Batch means compared by the acceptance rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Terminal log-residual at the common horizon.
    pub ell: f64,
    /// Terminal log-residual at each run's own end time.
    pub ell_run: f64,
    pub k: f64,
    pub t: f64,
}

pub fn accept(layer: Layer, parent: &Metrics, cand: &Metrics, tol: &ToleranceParams) -> bool {
    let (eps, delta) = (tol.epsilon, tol.delta);
    match layer {
        Layer::Mdl => {
            cand.ell <= parent.ell - delta
                || (within_tolerance(cand.ell, parent.ell, MetricKind::Ell, eps) && k_improves(cand.k, parent.k, delta))
        }
        Layer::Mcl => {
            within_tolerance(cand.ell, parent.ell, MetricKind::Ell, eps) && within_tolerance(cand.k, parent.k, MetricKind::K, eps)
        }
        Layer::Ssl1 => {
            cand.t <= (1.0 - delta) * parent.t && within_tolerance(cand.ell_run, parent.ell_run, MetricKind::Ell, eps)
        }
        Layer::Ssl2 => cand.ell <= parent.ell - delta && within_tolerance(cand.k, parent.k, MetricKind::K, eps),
    }
}
