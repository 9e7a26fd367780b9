//! Gaussian variational posterior over the classifier and its sequential
//! updates for label, selection and ranking answers.

mod joint;
mod label;
mod selection;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use joint::{joint_update, joint_update_vectors, ranking_update, ranking_update_vectors};
pub use label::{jj_lambda, label_update, label_update_fixed_xi};
pub use selection::{selection_objective, selection_update, selection_update_vectors, SelectionFit};

use crate::response::{Query, Response, ResponseParams};
use crate::{Error, Result, Scalar};

/// `N(mu, sigma)` with a cached Cholesky factor and log-determinant.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief<T: Scalar> {
    mu: DVector<T>,
    sigma: DMatrix<T>,
    factor: DMatrix<T>,
    log_det_sigma: T,
}

impl<T: Scalar> GaussianBelief<T> {
    /// Validates symmetry and positive definiteness.
    pub fn new(mu: DVector<T>, sigma: DMatrix<T>) -> Result<Self> {
        let d = mu.len();
        if sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: sigma.nrows() });
        }
        if d == 0 {
            return Err(Error::InvalidArgument("belief dimension must be positive".into()));
        }
        if mu.iter().chain(sigma.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NumericalDegeneracy("non-finite belief parameters".into()));
        }
        let scale = sigma.amax().max(T::one());
        let tol = T::lit(1e-9).max(T::default_epsilon() * T::lit(100.0)) * scale;
        if (&sigma - sigma.transpose()).amax() > tol {
            return Err(Error::InvalidArgument("covariance is not symmetric".into()));
        }
        let sigma = (&sigma + sigma.transpose()) * T::lit(0.5);
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NumericalDegeneracy("covariance is not positive definite".into()))?;
        let factor = chol.l();
        let log_det_sigma = log_det_from_factor(&factor);
        Ok(Self { mu, sigma, factor, log_det_sigma })
    }

    /// `N(0, variance * I)`.
    pub fn isotropic(dim: usize, variance: T) -> Result<Self> {
        Self::new(DVector::zeros(dim), DMatrix::identity(dim, dim) * variance)
    }

    /// Post-update constructor: symmetrizes and, if the factorization fails,
    /// retries once with a small diagonal jitter.
    pub(crate) fn from_update(mu: DVector<T>, sigma: DMatrix<T>) -> Result<Self> {
        let sigma = (&sigma + sigma.transpose()) * T::lit(0.5);
        if mu.iter().chain(sigma.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NumericalDegeneracy("update produced non-finite values".into()));
        }
        match Self::new(mu.clone(), sigma.clone()) {
            Ok(b) => Ok(b),
            Err(Error::NumericalDegeneracy(_)) => {
                let d = sigma.nrows();
                let jitter = sigma.trace() / T::from_usize_lossy(d) * T::lit(1e-10);
                let jittered = sigma + DMatrix::identity(d, d) * jitter;
                Self::new(mu, jittered).map_err(|_| {
                    Error::NumericalDegeneracy("posterior covariance lost positive definiteness".into())
                })
            }
            Err(e) => Err(e),
        }
    }

    pub fn mu(&self) -> &DVector<T> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<T> {
        &self.sigma
    }

    /// Lower Cholesky factor `L` with `L L^T = sigma`.
    pub fn factor(&self) -> &DMatrix<T> {
        &self.factor
    }

    pub fn log_det_sigma(&self) -> T {
        self.log_det_sigma
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn trace_sigma(&self) -> T {
        self.sigma.trace()
    }

    /// `d |Sigma|^{1/d}`, a lower bound on the posterior mean squared error (AM-GM).
    pub fn mse_floor(&self) -> T {
        let d = T::from_usize_lossy(self.dim());
        d * (self.log_det_sigma / d).exp()
    }
}

pub(crate) fn log_det_from_factor<T: Scalar>(l: &DMatrix<T>) -> T {
    l.diagonal().iter().fold(T::zero(), |acc, &v| acc + v.ln()) * T::lit(2.0)
}

/// `d |Sigma|^{1/d}`.
pub fn mse_floor<T: Scalar>(belief: &GaussianBelief<T>) -> T {
    belief.mse_floor()
}

/// Which remainder set each stage of a ranking update chooses from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankPoolMode {
    /// Stage `j` selects among the items not yet ranked.
    #[default]
    Shrinking,
    /// Every stage selects among the full query set.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar + serde::de::DeserializeOwned"))]
pub struct UpdateSettings<T: Scalar> {
    pub inner_tol: T,
    pub outer_tol: T,
    pub max_inner_iters: usize,
    pub max_outer_iters: usize,
    pub rank_pool: RankPoolMode,
}

impl<T: Scalar> Default for UpdateSettings<T> {
    fn default() -> Self {
        Self {
            inner_tol: T::lit(1e-6),
            outer_tol: T::lit(1e-5),
            max_inner_iters: 500,
            max_outer_iters: 50,
            rank_pool: RankPoolMode::Shrinking,
        }
    }
}

impl<T: Scalar> UpdateSettings<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.inner_tol > T::zero()) || !(self.outer_tol > T::zero()) {
            return Err(Error::InvalidArgument("update tolerances must be positive".into()));
        }
        if self.max_inner_iters == 0 || self.max_outer_iters == 0 {
            return Err(Error::InvalidArgument("iteration caps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Stop once `|Sigma| <= epsilon^dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule<T> {
    pub epsilon: T,
    pub dim: usize,
}

impl<T: Scalar> StoppingRule<T> {
    pub fn new(epsilon: T, dim: usize) -> Result<Self> {
        if !(epsilon > T::zero()) {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        Ok(Self { epsilon, dim })
    }

    /// `dim * ln(epsilon)`.
    pub fn log_threshold(&self) -> T {
        T::from_usize_lossy(self.dim) * self.epsilon.ln()
    }
}

/// True iff `log|Sigma| <= dim ln(epsilon)`. The comparison allows a few ulps of
/// slack so that a covariance exactly at the threshold stops despite rounding
/// in the factorization.
pub fn should_stop<T: Scalar>(belief: &GaussianBelief<T>, rule: &StoppingRule<T>) -> bool {
    let thr = rule.log_threshold();
    let slack = T::default_epsilon() * T::lit(64.0) * thr.abs().max(T::one());
    belief.log_det_sigma() <= thr + slack
}

/// Applies the update matching the answer's kind.
pub fn apply_response<T: Scalar>(
    belief: &GaussianBelief<T>,
    query: &Query<T>,
    resp: &Response,
    params: &ResponseParams<T>,
    settings: &UpdateSettings<T>,
) -> Result<GaussianBelief<T>> {
    resp.validate(query.kind(), query.len())?;
    match resp {
        Response::Label { y } => label_update(belief, &query.items()[0].x, *y, params.w, settings),
        Response::Selection { index, y } => joint_update(belief, query, *index, *y, params, settings),
        Response::Ranking { order, threshold } => ranking_update(belief, query, order, *threshold, params, settings),
    }
}

pub(crate) fn check_dim<T: Scalar>(belief: &GaussianBelief<T>, x: &DVector<T>) -> Result<()> {
    if x.len() != belief.dim() {
        return Err(Error::DimensionMismatch { expected: belief.dim(), found: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("item vector has non-finite entries".into()));
    }
    Ok(())
}
