//! Closed-form stopping-time bounds and likelihood floors.

use serde::{Deserialize, Serialize};

use crate::response::{QueryKind, ResponseParams};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInput {
    /// Ambient dimension `d`.
    pub d: usize,
    /// Half-width of the hypercube prior.
    pub m: f64,
    pub epsilon: f64,
    pub kind: QueryKind,
    pub set_size: usize,
    /// Per-query information floor in bits.
    pub l: f64,
}

impl BoundInput {
    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.5) {
            return Err(Error::InvalidArgument(format!("M must exceed 0.5, got {}", self.m)));
        }
        if !(self.epsilon > 0.0) || !(self.l > 0.0) || self.d == 0 {
            return Err(Error::InvalidArgument("epsilon, L and d must be positive".into()));
        }
        if outcome_space_size(self.kind, self.set_size) < 2.0 {
            return Err(Error::InvalidArgument("outcome space must have at least 2 answers".into()));
        }
        Ok(())
    }
}

/// Number of distinct answers `N`: `(|S|+1)!` for rankings, `2|S|` for
/// selections, 2 for a label.
pub fn outcome_space_size(kind: QueryKind, set_size: usize) -> f64 {
    match kind {
        QueryKind::Rank => (1..=set_size + 1).map(|v| v as f64).product(),
        QueryKind::SelectHigh | QueryKind::SelectLow => 2.0 * set_size as f64,
        QueryKind::Label => 2.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingBounds {
    /// Closed-form lower bound, possibly negative.
    pub lower_raw: f64,
    /// `max(lower_raw, 0)`.
    pub lower: f64,
    pub upper: f64,
}

/// Lower and upper bounds on the expected number of queries until
/// `|Sigma| <= epsilon^d`:
///
/// `lower = (d/2) log2(2 M^2 / (pi e epsilon)) / log2 N`,
/// `upper = (d / 2L) log2(e^4 d^2 M^2 / (2 sqrt(2) (d+2) epsilon)) - 1`.
pub fn stopping_bounds(input: &BoundInput) -> Result<StoppingBounds> {
    input.validate()?;
    let d = input.d as f64;
    let m2 = input.m * input.m;
    let e = std::f64::consts::E;
    let n = outcome_space_size(input.kind, input.set_size);
    let lower_raw = d / 2.0 * (2.0 * m2 / (std::f64::consts::PI * e * input.epsilon)).log2() / n.log2();
    let upper =
        d / (2.0 * input.l) * (e.powi(4) * d * d * m2 / (2.0 * 2f64.sqrt() * (d + 2.0) * input.epsilon)).log2() - 1.0;
    Ok(StoppingBounds { lower_raw, lower: lower_raw.max(0.0), upper })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodFloor {
    /// Smallest choice probability.
    pub gamma1: f64,
    /// Smallest label probability.
    pub gamma2: f64,
    /// `log2(gamma1^{|S|-1} gamma2^{|S|})`.
    pub gamma_l: f64,
}

/// Smallest probability any choice or label can have when
/// `|theta^T x| <= M sqrt(P_x d)`.
pub fn likelihood_floor<T: Scalar>(
    params: &ResponseParams<T>,
    m: f64,
    d: usize,
    set_size: usize,
    p_x: f64,
) -> Result<LikelihoodFloor> {
    if set_size == 0 || !(p_x > 0.0) || !(m > 0.0) {
        return Err(Error::InvalidArgument("likelihood floor needs |S| >= 1, P_x > 0, M > 0".into()));
    }
    let radius = m * (p_x * d as f64).sqrt();
    let c = params.k().as_f64().abs() * radius;
    // e^{-c} / (e^{-c} + (|S|-1) e^{c}) without overflow
    let gamma1 = 1.0 / (1.0 + (set_size as f64 - 1.0) * (2.0 * c).exp());
    let gamma2 = 1.0 / (1.0 + (params.w.as_f64().abs() * radius).exp());
    let s = set_size as f64;
    let gamma_l = (s - 1.0) * gamma1.log2() + s * gamma2.log2();
    Ok(LikelihoodFloor { gamma1, gamma2, gamma_l })
}
