use nalgebra::{DMatrix, DVector};

use super::{check_dim, GaussianBelief, UpdateSettings};
use crate::math::{log_sum_exp, softmax};
use crate::response::{Query, ResponseParams};
use crate::{Error, Result, Scalar};

/// Result of the selection-factor variational fit.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionFit<T: Scalar> {
    pub belief: GaussianBelief<T>,
    /// Objective after each accepted iterate; the first entry is the value at the prior.
    pub objective_trace: Vec<T>,
    pub converged: bool,
}

/// Upper bound on `KL(q || p) - E_q[log softmax_i(k X^T theta)]` obtained from
/// Jensen's inequality on the log-partition term:
///
/// `KL(q||p) - k x_i^T mu_q + log sum_j exp(k x_j^T mu_q + k^2/2 x_j^T Sigma_q x_j)`.
///
/// Evaluated directly in the full parameter space.
pub fn selection_objective<T: Scalar>(
    prior: &GaussianBelief<T>,
    q: &GaussianBelief<T>,
    xs: &[&DVector<T>],
    index: usize,
    k: T,
) -> T {
    let d = T::from_usize_lossy(prior.dim());
    let l = prior.factor();
    let chol = nalgebra::Cholesky::new(prior.sigma().clone()).expect("valid belief");
    let trace = chol.solve(q.sigma()).trace();
    let dm = q.mu() - prior.mu();
    let z = l.solve_lower_triangular(&dm).expect("triangular factor");
    let kl = T::lit(0.5) * (trace - d + z.norm_squared() + prior.log_det_sigma() - q.log_det_sigma());
    let terms: Vec<T> = xs
        .iter()
        .map(|x| k * x.dot(q.mu()) + T::lit(0.5) * k * k * x.dot(&(q.sigma() * *x)))
        .collect();
    kl - k * xs[index].dot(q.mu()) + log_sum_exp(&terms)
}

/// The objective in the coordinates
/// `mu_q = mu_p + Sigma_p X beta`, `Sigma_q^{-1} = Sigma_p^{-1} + X diag(lambda) X^T`,
/// which contain the minimizer. Only `n x n` quantities are needed.
struct Reduced<T: Scalar> {
    a: DMatrix<T>,
    mp: DVector<T>,
    index: usize,
    k: T,
}

struct Eval<T: Scalar> {
    f: T,
    pi: DVector<T>,
}

impl<T: Scalar> Reduced<T> {
    fn n(&self) -> usize {
        self.mp.len()
    }

    /// `(I + B)^{-1}` and `ln|I + B|` with `B = L^{1/2} A L^{1/2}`.
    fn inner(&self, lam: &DVector<T>) -> Option<(DMatrix<T>, DVector<T>, T)> {
        let n = self.n();
        let sq = lam.map(|v| v.max(T::zero()).sqrt());
        let mut m = DMatrix::identity(n, n);
        for r in 0..n {
            for c in 0..n {
                m[(r, c)] += sq[r] * self.a[(r, c)] * sq[c];
            }
        }
        let chol = m.cholesky()?;
        let ln_det = super::log_det_from_factor(&chol.l());
        Some((chol.inverse(), sq, ln_det))
    }

    /// `X^T Sigma_q X = A - A L^{1/2} (I+B)^{-1} L^{1/2} A`.
    fn s_matrix(&self, inv: &DMatrix<T>, sq: &DVector<T>) -> DMatrix<T> {
        let n = self.n();
        let c = DMatrix::from_fn(n, n, |r, k| sq[r] * inv[(r, k)] * sq[k]);
        &self.a - &self.a * c * &self.a
    }

    fn eval(&self, beta: &DVector<T>, lam: &DVector<T>) -> Option<Eval<T>> {
        let n = self.n();
        let (inv, sq, ln_det) = self.inner(lam)?;
        let s = self.s_matrix(&inv, &sq);
        let a_beta = &self.a * beta;
        let mq = &self.mp + &a_beta;
        let half = T::lit(0.5);
        let kl = half * (-(T::from_usize_lossy(n) - inv.trace()) + ln_det + beta.dot(&a_beta));
        let u: Vec<T> = (0..n).map(|j| self.k * mq[j] + half * self.k * self.k * s[(j, j)]).collect();
        let f = kl - self.k * mq[self.index] + log_sum_exp(&u);
        if !f.is_finite() {
            return None;
        }
        Some(Eval { f, pi: DVector::from_vec(softmax(&u)) })
    }

    /// Stationarity map: `beta = k (e_i - pi)`, `lambda = k^2 pi`.
    fn target(&self, pi: &DVector<T>) -> (DVector<T>, DVector<T>) {
        let mut beta = pi * (-self.k);
        beta[self.index] += self.k;
        (beta, pi * (self.k * self.k))
    }
}

/// Variational update for an exemplar-selection factor `softmax_i(k x_j^T theta)`
/// (`k = K` for highest-score choices, `-K` for lowest) given the prior `belief`.
///
/// Minimizes [`selection_objective`] by a damped fixed-point iteration on the
/// stationarity conditions: the step toward `(k (e_i - pi), k^2 pi)` is a
/// descent direction of the objective, and the step length is halved until
/// the objective does not increase. The returned fit records the objective
/// trace; `converged` is false if `max_inner_iters` ran out first.
pub fn selection_update_vectors<T: Scalar>(
    belief: &GaussianBelief<T>,
    xs: &[&DVector<T>],
    index: usize,
    k: T,
    settings: &UpdateSettings<T>,
) -> Result<SelectionFit<T>> {
    if index >= xs.len() {
        return Err(Error::InvalidResponse(format!("selected index {index} out of range for {} items", xs.len())));
    }
    for x in xs {
        check_dim(belief, x)?;
    }
    let n = xs.len();
    let x = DMatrix::from_columns(&xs.iter().map(|v| (*v).clone()).collect::<Vec<_>>());
    let v = belief.sigma() * &x;
    let red = Reduced { a: x.transpose() * &v, mp: x.transpose() * belief.mu(), index, k };
    let mut beta = DVector::zeros(n);
    let mut lam = DVector::zeros(n);
    let mut cur = red.eval(&beta, &lam).ok_or_else(|| Error::NumericalDegeneracy("selection objective".into()))?;
    let mut trace = vec![cur.f];
    if n <= 1 || k == T::zero() {
        return Ok(SelectionFit { belief: belief.clone(), objective_trace: trace, converged: true });
    }

    let mut converged = false;
    let mut t = T::one();
    for _ in 0..settings.max_inner_iters {
        let (tb, tl) = red.target(&cur.pi);
        let db = tb - &beta;
        let dl = tl - &lam;
        let dir_size = db.amax().max(dl.amax());
        if dir_size < settings.inner_tol {
            converged = true;
            break;
        }
        // be optimistic after a successful step, then backtrack
        t = (t * T::lit(2.0)).min(T::one());
        let mut accepted = None;
        for _ in 0..60 {
            let nb = &beta + &db * t;
            let nl = &lam + &dl * t;
            if let Some(e) = red.eval(&nb, &nl) {
                if e.f <= cur.f {
                    accepted = Some((nb, nl, e));
                    break;
                }
            }
            t *= T::lit(0.5);
        }
        let Some((nb, nl, e)) = accepted else {
            // no decrease representable in floating point: at the optimum
            converged = true;
            break;
        };
        beta = nb;
        lam = nl;
        cur = e;
        trace.push(cur.f);
    }

    let (inv, sq, _) = red.inner(&lam).ok_or_else(|| Error::NumericalDegeneracy("selection fit".into()))?;
    let c = DMatrix::from_fn(n, n, |r, k| sq[r] * inv[(r, k)] * sq[k]);
    let mu = belief.mu() + &v * &beta;
    let sigma = belief.sigma() - &v * c * v.transpose();
    let out = GaussianBelief::from_update(mu, sigma)?;
    Ok(SelectionFit { belief: out, objective_trace: trace, converged })
}

/// [`selection_update_vectors`] for a `SelectHigh` / `SelectLow` query.
pub fn selection_update<T: Scalar>(
    belief: &GaussianBelief<T>,
    query: &Query<T>,
    selected: usize,
    params: &ResponseParams<T>,
    settings: &UpdateSettings<T>,
) -> Result<SelectionFit<T>> {
    if !query.kind().is_selection() {
        return Err(Error::KindMismatch(query.kind().to_string()));
    }
    let k = query.kind().choice_sign::<T>() * params.k();
    selection_update_vectors(belief, &query.vectors(), selected, k, settings)
}
