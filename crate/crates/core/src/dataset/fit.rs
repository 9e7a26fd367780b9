use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ItemPool;
use crate::math::sigmoid;
use crate::response::Label;
use crate::{Error, Result, Scalar};

/// Unit-norm linear classifier the learner is trying to recover.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth<T: Scalar> {
    pub theta: DVector<T>,
    /// Score threshold that defines labels (AVA-style corpora).
    pub threshold_tau: Option<T>,
}

impl<T: Scalar> GroundTruth<T> {
    pub fn new(theta: DVector<T>, threshold_tau: Option<T>) -> Result<Self> {
        let norm = theta.norm();
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(Error::InvalidArgument("ground truth must be a nonzero finite vector".into()));
        }
        Ok(Self { theta: theta / norm, threshold_tau })
    }

    pub fn predict(&self, x: &DVector<T>) -> Label {
        Label::from_sign(self.theta.dot(x))
    }
}

/// Least-squares affine relation `score = a * x^T theta + b + residual`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineScoreFit<T> {
    pub a: T,
    pub b: T,
    pub residuals: Vec<T>,
    pub r_squared: T,
}

const RIDGE: f64 = 1e-4;
const RANDOM_FLOOR_CANDIDATES: usize = 100;
const RANDOM_FLOOR_SEED: u64 = 0x5eed_0001;

/// Fits a separating hyperplane through a ridge-regularized logistic loss,
/// normalized to unit length.
///
/// The 0-1 training loss of the result is never worse than the best of a fixed
/// set of random unit directions; if one of those wins, it is returned instead.
pub fn fit_ground_truth<T: Scalar>(pool: &ItemPool<T>, labels: &[Label]) -> Result<GroundTruth<T>> {
    if labels.len() != pool.len() {
        return Err(Error::DimensionMismatch { expected: pool.len(), found: labels.len() });
    }
    let positives = labels.iter().filter(|l| **l == Label::Positive).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::DegenerateLabels);
    }
    let dim = pool.dim();
    let n = T::from_usize_lossy(pool.len());
    let ridge = T::lit(RIDGE);
    let ys: Vec<T> = labels.iter().map(|l| l.signed()).collect();
    let objective = |theta: &DVector<T>| {
        let loss = pool.items().iter().zip(&ys).fold(T::zero(), |acc, (it, &y)| {
            acc - crate::math::log_sigmoid(y * theta.dot(&it.x))
        });
        loss / n + ridge * T::lit(0.5) * theta.norm_squared()
    };

    let mut theta = DVector::<T>::zeros(dim);
    let mut current = objective(&theta);
    for _ in 0..200 {
        let mut grad = &theta * ridge;
        let mut hess = DMatrix::<T>::identity(dim, dim) * ridge;
        for (it, &y) in pool.items().iter().zip(&ys) {
            let z = theta.dot(&it.x);
            let p = sigmoid(-y * z);
            grad.axpy(-y * p / n, &it.x, T::one());
            let s = sigmoid(z) * sigmoid(-z) / n;
            hess.ger(s, &it.x, &it.x, T::one());
        }
        let chol = hess
            .cholesky()
            .ok_or_else(|| Error::NumericalDegeneracy("logistic Hessian not positive definite".into()))?;
        let step = chol.solve(&grad);
        let mut t = T::one();
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &theta - &step * t;
            let val = objective(&cand);
            if val <= current {
                theta = cand;
                current = val;
                accepted = true;
                break;
            }
            t *= T::lit(0.5);
        }
        if !accepted || step.amax() * t < T::lit(1e-10) {
            break;
        }
    }
    if theta.norm() == T::zero() {
        theta[0] = T::one();
    }
    let fitted = theta.normalize();

    let errors = |th: &DVector<T>| {
        pool.items()
            .iter()
            .zip(labels)
            .filter(|(it, l)| Label::from_sign(th.dot(&it.x)) != **l)
            .count()
    };
    let mut best = (errors(&fitted), fitted);
    let mut rng = ChaCha8Rng::seed_from_u64(RANDOM_FLOOR_SEED);
    for _ in 0..RANDOM_FLOOR_CANDIDATES {
        let v = DVector::<T>::from_fn(dim, |_, _| {
            T::lit(<StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        });
        let v = v.normalize();
        let e = errors(&v);
        if e < best.0 {
            best = (e, v);
        }
    }
    GroundTruth::new(best.1, None)
}

/// Ordinary least squares of item mean scores on `x^T theta`.
pub fn fit_affine_score<T: Scalar>(pool: &ItemPool<T>, gt: &GroundTruth<T>) -> Result<AffineScoreFit<T>> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let mut zs = Vec::with_capacity(pool.len());
    let mut ss = Vec::with_capacity(pool.len());
    for it in pool.items() {
        let s = it.scores.mean.ok_or_else(|| Error::MissingScoreStats(it.id.clone()))?;
        zs.push(gt.theta.dot(&it.x));
        ss.push(s);
    }
    let (a, b) = simple_ols(&zs, &ss).ok_or_else(|| {
        Error::RankDeficient("all projections x^T theta are identical; slope unidentifiable".into())
    })?;
    let residuals: Vec<T> = zs.iter().zip(&ss).map(|(&z, &s)| s - a * z - b).collect();
    let n = T::from_usize_lossy(ss.len());
    let smean = ss.iter().fold(T::zero(), |acc, &s| acc + s) / n;
    let ss_tot = ss.iter().fold(T::zero(), |acc, &s| acc + (s - smean) * (s - smean));
    let ss_res = residuals.iter().fold(T::zero(), |acc, &r| acc + r * r);
    let r_squared = if ss_tot > T::zero() {
        (T::one() - ss_res / ss_tot).max(T::zero()).min(T::one())
    } else {
        T::one()
    };
    Ok(AffineScoreFit { a, b, residuals, r_squared })
}

/// Returns `(slope, intercept)` or `None` if `x` has no spread.
pub(crate) fn simple_ols<T: Scalar>(x: &[T], y: &[T]) -> Option<(T, T)> {
    let n = T::from_usize_lossy(x.len());
    let xm = x.iter().fold(T::zero(), |a, &b| a + b) / n;
    let ym = y.iter().fold(T::zero(), |a, &b| a + b) / n;
    let (mut sxx, mut sxy) = (T::zero(), T::zero());
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - xm) * (xi - xm);
        sxy += (xi - xm) * (yi - ym);
    }
    let scale = x.iter().fold(T::zero(), |a, &b| a.max(b.abs())).max(T::one());
    if !(sxx > T::lit(1e-24) * scale * scale * n) {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, ym - slope * xm))
}
