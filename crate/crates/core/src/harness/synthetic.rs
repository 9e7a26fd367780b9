use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{EmbeddedItem, GroundTruth, ItemPool, ScoreStats};
use crate::{Error, Result};

/// A pool of `(1, u)` items with `u` uniform on the unit sphere in `R^dim`, and
/// a uniformly random unit ground truth in `R^(dim+1)`.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub pool: ItemPool<f64>,
    pub gt: GroundTruth<f64>,
}

fn unit_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

impl SyntheticTask {
    /// Item score statistics are `a theta*^T x + b` with variance `noise_var`.
    pub fn generate(dim: usize, items: usize, a: f64, b: f64, noise_var: f64, seed: u64) -> Result<Self> {
        if dim == 0 || items == 0 {
            return Err(Error::InvalidArgument("synthetic task needs dim >= 1 and at least one item".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = unit_vector(&mut rng, dim + 1);
        let gt = GroundTruth::new(theta, None)?;
        let pool = (0..items)
            .map(|i| {
                let u = unit_vector(&mut rng, dim);
                let x = DVector::from_iterator(dim + 1, std::iter::once(1.0).chain(u.iter().copied()));
                let mean = a * gt.theta.dot(&x) + b;
                let scores = ScoreStats { mean: Some(mean), var: noise_var, samples: None };
                EmbeddedItem::new(format!("s{i:04}"), format!("item {i}"), x, scores)
            })
            .collect();
        Ok(Self { pool: ItemPool::new(pool)?, gt })
    }
}
