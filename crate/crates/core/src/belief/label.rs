use nalgebra::DVector;

use super::{check_dim, GaussianBelief, UpdateSettings};
use crate::response::Label;
use crate::{Result, Scalar};

/// `lambda(xi) = tanh(xi / 2) / (4 xi)`, continuous at `xi = 0` with value `1/8`.
pub fn jj_lambda<T: Scalar>(xi: T) -> T {
    let xi = xi.abs();
    if xi < T::lit(1e-4) {
        T::lit(0.125) - xi * xi / T::lit(96.0)
    } else {
        (xi * T::lit(0.5)).tanh() / (T::lit(4.0) * xi)
    }
}

/// Rank-one quantities of a label observation against a fixed base belief.
struct Rank1<T: Scalar> {
    v: DVector<T>,
    s0: T,
    m0: T,
    /// `(y - 1/2)` times the effective label slope.
    h: T,
    w2: T,
}

impl<T: Scalar> Rank1<T> {
    fn new(belief: &GaussianBelief<T>, x: &DVector<T>, y: Label, w: T) -> Self {
        let v = belief.sigma() * x;
        let s0 = x.dot(&v);
        let m0 = x.dot(belief.mu());
        // P[y = 1] = sigmoid(-w x^T theta): the bound is taken on the logit -w x^T theta
        let h = (y.as_unit::<T>() - T::lit(0.5)) * (-w);
        Self { v, s0, m0, h, w2: w * w }
    }

    /// `(alpha, gamma)` with `mu = mu0 + alpha v`, `Sigma = Sigma0 - gamma v v^T`.
    fn coefficients(&self, xi: T) -> (T, T) {
        let c = T::lit(2.0) * jj_lambda(xi) * self.w2;
        let denom = T::one() + c * self.s0;
        ((self.h - c * self.m0) / denom, c / denom)
    }

    /// `xi` recomputed from the posterior implied by `(alpha, gamma)`.
    fn next_xi(&self, alpha: T, gamma: T) -> T {
        let s = self.s0 - gamma * self.s0 * self.s0;
        let m = self.m0 + alpha * self.s0;
        (self.w2 * (s.max(T::zero()) + m * m)).sqrt()
    }

    fn apply(&self, belief: &GaussianBelief<T>, alpha: T, gamma: T) -> Result<GaussianBelief<T>> {
        let mu = belief.mu() + &self.v * alpha;
        let mut sigma = belief.sigma().clone();
        sigma.ger(-gamma, &self.v, &self.v, T::one());
        GaussianBelief::from_update(mu, sigma)
    }
}

/// One Jaakkola–Jordan step at a fixed variational parameter `xi`:
/// `Sigma^{-1} += 2 lambda(xi) w^2 x x^T`, with the matching mean shift.
pub fn label_update_fixed_xi<T: Scalar>(
    belief: &GaussianBelief<T>,
    x: &DVector<T>,
    y: Label,
    w: T,
    xi: T,
) -> Result<GaussianBelief<T>> {
    check_dim(belief, x)?;
    let r = Rank1::new(belief, x, y, w);
    let (alpha, gamma) = r.coefficients(xi);
    r.apply(belief, alpha, gamma)
}

/// Variational posterior after observing label `y` on `x`.
///
/// `xi` starts from the input belief, `xi^2 = w^2 (x^T Sigma x + (x^T mu)^2)`,
/// and is re-estimated from each new posterior until the change in `(mu, Sigma)`
/// falls below `inner_tol` (max-norm) or `max_inner_iters` is reached. The
/// update is rank one, so each iteration costs `O(1)` after one
/// matrix-vector product.
pub fn label_update<T: Scalar>(
    belief: &GaussianBelief<T>,
    x: &DVector<T>,
    y: Label,
    w: T,
    settings: &UpdateSettings<T>,
) -> Result<GaussianBelief<T>> {
    check_dim(belief, x)?;
    let r = Rank1::new(belief, x, y, w);
    if r.s0 == T::zero() {
        return Ok(belief.clone());
    }
    let vmax = r.v.amax();
    let mut xi = (r.w2 * (r.s0 + r.m0 * r.m0)).sqrt();
    let (mut alpha, mut gamma) = r.coefficients(xi);
    for _ in 1..settings.max_inner_iters {
        xi = r.next_xi(alpha, gamma);
        let (a2, g2) = r.coefficients(xi);
        let change = ((a2 - alpha).abs() * vmax).max((g2 - gamma).abs() * vmax * vmax);
        alpha = a2;
        gamma = g2;
        if change < settings.inner_tol {
            break;
        }
    }
    r.apply(belief, alpha, gamma)
}
