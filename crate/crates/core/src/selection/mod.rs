//! Query-by-committee item selection.

mod disagreement;
mod greedy;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use disagreement::{disagreement, disagreement_from_scores, outcome_log_probs, Disagreement, McDraws};
pub use greedy::{greedy_build, greedy_build_vectors};

use crate::belief::GaussianBelief;
use crate::{Error, Result, Scalar};

/// Classifier particles drawn from the current belief.
#[derive(Debug, Clone, PartialEq)]
pub struct Committee<T: Scalar> {
    particles: Vec<DVector<T>>,
    identical: bool,
}

impl<T: Scalar> Committee<T> {
    pub fn new(particles: Vec<DVector<T>>) -> Result<Self> {
        if particles.len() < 2 {
            return Err(Error::InvalidArgument(format!("committee needs at least 2 particles, got {}", particles.len())));
        }
        let d = particles[0].len();
        for p in &particles {
            if p.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: p.len() });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("committee particle has non-finite entries".into()));
            }
        }
        let identical = particles.iter().all(|p| p == &particles[0]);
        Ok(Self { particles, identical })
    }

    pub fn particles(&self) -> &[DVector<T>] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.particles[0].len()
    }

    /// All particles are exactly equal, so no outcome can separate them.
    pub fn is_degenerate(&self) -> bool {
        self.identical
    }

    /// `theta_n^T x` for every particle (rows) and item (columns), particle-major.
    pub fn project(&self, xs: &[&DVector<T>]) -> Result<Vec<Vec<T>>> {
        for x in xs {
            if x.len() != self.dim() {
                return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
            }
        }
        Ok(self.particles.iter().map(|p| xs.iter().map(|x| p.dot(x)).collect()).collect())
    }
}

/// `n` i.i.d. draws `mu + L z`, `z ~ N(0, I)`, from a seeded ChaCha stream.
pub fn sample_committee<T: Scalar>(belief: &GaussianBelief<T>, n: usize, seed: u64) -> Result<Committee<T>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("committee needs at least 2 particles, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = belief.dim();
    let particles = (0..n)
        .map(|_| {
            let z = DVector::<T>::from_fn(d, |_, _| {
                T::lit(<StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            });
            belief.mu() + belief.factor() * z
        })
        .collect();
    Committee::new(particles)
}

/// Controls for ranking outcome spaces too large to enumerate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DisagreementSettings {
    /// Rankings of at most this many items are enumerated exactly.
    pub exact_rank_max: usize,
    /// Monte Carlo outcome draws per particle beyond that size.
    pub mc_draws: usize,
    pub seed: u64,
}

impl Default for DisagreementSettings {
    fn default() -> Self {
        Self { exact_rank_max: 5, mc_draws: 2000, seed: 0x0c0f_fee0 }
    }
}

#[cfg(test)]
mod tests {
    use nalgebra::{dvector, DMatrix};

    use super::*;

    #[test]
    fn tiny_covariance_collapses_to_mean() {
        let mu = dvector![0.3, -1.2, 0.5];
        let b = GaussianBelief::new(mu.clone(), DMatrix::identity(3, 3) * 1e-18).unwrap();
        let c = sample_committee(&b, 20, 4).unwrap();
        assert!(c.particles().iter().all(|p| (p - &mu).amax() < 1e-8));
    }

    #[test]
    fn seeded_and_concentrated() {
        let b = GaussianBelief::new(dvector![0.5, -0.25], DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 0.6])).unwrap();
        assert_eq!(sample_committee(&b, 30, 8).unwrap(), sample_committee(&b, 30, 8).unwrap());
        let n = 10000;
        let c = sample_committee(&b, n, 1).unwrap();
        let mean = c.particles().iter().fold(DVector::zeros(2), |a, p| a + p) / n as f64;
        for i in 0..2 {
            let se = (b.sigma()[(i, i)] / n as f64).sqrt();
            assert!((mean[i] - b.mu()[i]).abs() < 3.0 * se);
        }
    }

    #[test]
    fn too_small_committee_rejected() {
        let b = GaussianBelief::isotropic(2, 1.0_f64).unwrap();
        assert!(sample_committee(&b, 1, 0).is_err());
    }
}
