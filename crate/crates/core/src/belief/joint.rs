use nalgebra::DVector;

use super::{label_update, label_update_fixed_xi, selection_update_vectors, GaussianBelief, RankPoolMode, UpdateSettings};
use crate::response::{validate_permutation, Label, Query, QueryKind, ResponseParams};
use crate::{Error, Result, Scalar};

/// Posterior after a selection answer `(index, y)`: choice factor times the
/// label factor of the chosen item.
///
/// Coordinate ascent on the combined bound. The label factor is first fitted
/// alone; afterwards each round sets the label bound's `xi` from the current
/// joint posterior, applies that bound to the input belief, and refits the
/// selection factor on top. Stops when `(mu, Sigma)` moves less than
/// `outer_tol` in max-norm.
pub fn joint_update_vectors<T: Scalar>(
    belief: &GaussianBelief<T>,
    xs: &[&DVector<T>],
    index: usize,
    y: Label,
    w: T,
    k: T,
    settings: &UpdateSettings<T>,
) -> Result<GaussianBelief<T>> {
    settings.validate()?;
    let x = *xs
        .get(index)
        .ok_or_else(|| Error::InvalidResponse(format!("selected index {index} out of range")))?;
    let labeled = label_update(belief, x, y, w, settings)?;
    if xs.len() == 1 || k == T::zero() {
        return Ok(labeled);
    }
    let mut q = selection_update_vectors(&labeled, xs, index, k, settings)?.belief;
    for _ in 1..settings.max_outer_iters {
        let xi = (w * w * (x.dot(&(q.sigma() * x)) + x.dot(q.mu()).powi(2))).sqrt();
        let base = label_update_fixed_xi(belief, x, y, w, xi)?;
        let next = selection_update_vectors(&base, xs, index, k, settings)?.belief;
        let change = (next.mu() - q.mu()).amax().max((next.sigma() - q.sigma()).amax());
        q = next;
        if change < settings.outer_tol {
            break;
        }
    }
    Ok(q)
}

/// [`joint_update_vectors`] for a `SelectHigh` / `SelectLow` query.
pub fn joint_update<T: Scalar>(
    belief: &GaussianBelief<T>,
    query: &Query<T>,
    index: usize,
    y: Label,
    params: &ResponseParams<T>,
    settings: &UpdateSettings<T>,
) -> Result<GaussianBelief<T>> {
    if !query.kind().is_selection() {
        return Err(Error::KindMismatch(query.kind().to_string()));
    }
    let k = query.kind().choice_sign::<T>() * params.k();
    joint_update_vectors(belief, &query.vectors(), index, y, params.w, k, settings)
}

/// Posterior after a ranking `order` (best first) with threshold `threshold`.
///
/// Applies one joint update per position, top item first: position `j` is a
/// highest-score selection of `order[j]` with label positive iff
/// `j < threshold`. Under [`RankPoolMode::Shrinking`] the choice set is the
/// not-yet-ranked remainder; under [`RankPoolMode::Full`] it is the whole set.
pub fn ranking_update_vectors<T: Scalar>(
    belief: &GaussianBelief<T>,
    xs: &[&DVector<T>],
    order: &[usize],
    threshold: usize,
    w: T,
    k: T,
    settings: &UpdateSettings<T>,
) -> Result<GaussianBelief<T>> {
    validate_permutation(order, xs.len())?;
    if threshold > xs.len() {
        return Err(Error::InvalidResponse(format!("threshold {threshold} out of range 0..={}", xs.len())));
    }
    let mut b = belief.clone();
    for (j, &item) in order.iter().enumerate() {
        let y = if j < threshold { Label::Positive } else { Label::Negative };
        b = match settings.rank_pool {
            RankPoolMode::Shrinking => {
                let pool: Vec<&DVector<T>> = order[j..].iter().map(|&i| xs[i]).collect();
                joint_update_vectors(&b, &pool, 0, y, w, k, settings)?
            }
            RankPoolMode::Full => joint_update_vectors(&b, xs, item, y, w, k, settings)?,
        };
    }
    Ok(b)
}

/// [`ranking_update_vectors`] for a `Rank` query.
pub fn ranking_update<T: Scalar>(
    belief: &GaussianBelief<T>,
    query: &Query<T>,
    order: &[usize],
    threshold: usize,
    params: &ResponseParams<T>,
    settings: &UpdateSettings<T>,
) -> Result<GaussianBelief<T>> {
    if query.kind() != QueryKind::Rank {
        return Err(Error::KindMismatch(query.kind().to_string()));
    }
    ranking_update_vectors(belief, &query.vectors(), order, threshold, params.w, params.k(), settings)
}
