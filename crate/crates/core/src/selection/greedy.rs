use nalgebra::DVector;
use rayon::prelude::*;

use super::disagreement::{disagreement_from_scores, mixture_information, outcome_log_probs_into, McDraws, Prepared};
use super::{Committee, DisagreementSettings};
use crate::dataset::ItemPool;
use crate::math::permutations;
use crate::response::{QueryKind, ResponseParams};
use crate::{Error, Result, Scalar};

/// Builds an item set one item at a time, each time adding the item that
/// maximizes the committee disagreement of the enlarged set. Candidates are
/// scored in parallel; ties go to the lowest pool index, so the result depends
/// only on the inputs.
pub fn greedy_build_vectors<T: Scalar>(
    xs: &[&DVector<T>],
    size: usize,
    kind: QueryKind,
    committee: &Committee<T>,
    params: &ResponseParams<T>,
    settings: &DisagreementSettings,
) -> Result<Vec<usize>> {
    if size == 0 {
        return Err(Error::InvalidArgument("set size must be at least 1".into()));
    }
    if xs.len() < size {
        return Err(Error::InvalidArgument(format!("pool has {} items, fewer than set size {size}", xs.len())));
    }
    if committee.is_degenerate() {
        return Ok((0..size).collect());
    }
    let table = committee.project(xs)?;
    let mc = kind == QueryKind::Rank && size > settings.exact_rank_max;
    let draws = mc.then(|| McDraws::new(committee.len(), settings.mc_draws, size, settings.seed));
    let prepared: Vec<Prepared<T>> = if mc { Vec::new() } else { table.iter().map(|z| Prepared::new(z, params)).collect() };
    let mut chosen: Vec<usize> = Vec::with_capacity(size);
    let mut taken = vec![false; xs.len()];
    for step in 0..size {
        let perms = if kind == QueryKind::Rank && !mc { permutations(step + 1) } else { Vec::new() };
        let score = |buf: &mut (Prepared<T>, Vec<T>, Vec<usize>), c: usize| -> T {
            let (local, lps, idx) = buf;
            idx.clear();
            idx.extend(chosen.iter().copied());
            idx.push(c);
            if mc {
                let scores: Vec<Vec<T>> = table.iter().map(|row| idx.iter().map(|&i| row[i]).collect()).collect();
                return disagreement_from_scores(&scores, kind, params, settings, draws.as_ref()).bits;
            }
            lps.clear();
            for p in &prepared {
                p.gather(idx, local);
                outcome_log_probs_into(&local.utils, &local.lp, &local.ln, kind, &perms, lps);
            }
            mixture_information(lps, lps.len() / prepared.len())
        };
        let gains: Vec<(usize, T)> = (0..xs.len())
            .into_par_iter()
            .filter(|&c| !taken[c])
            .map_init(|| (Prepared::empty(), Vec::new(), Vec::new()), |buf, c| (c, score(buf, c)))
            .collect();
        let mut best = gains[0];
        for &(c, g) in &gains[1..] {
            if g > best.1 {
                best = (c, g);
            }
        }
        chosen.push(best.0);
        taken[best.0] = true;
    }
    Ok(chosen)
}

/// [`greedy_build_vectors`] over an item pool; returns pool indices in the order chosen.
pub fn greedy_build<T: Scalar>(
    pool: &ItemPool<T>,
    size: usize,
    kind: QueryKind,
    committee: &Committee<T>,
    params: &ResponseParams<T>,
    settings: &DisagreementSettings,
) -> Result<Vec<usize>> {
    let xs: Vec<&DVector<T>> = pool.items().iter().map(|it| &it.x).collect();
    greedy_build_vectors(&xs, size, kind, committee, params, settings)
}
