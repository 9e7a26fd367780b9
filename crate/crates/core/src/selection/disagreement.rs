use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Committee, DisagreementSettings};
use crate::math::{log_sum_exp, permutations};
use crate::response::{
    label_log_prob, plackett_luce_log_prob, threshold_log_weights, Label, QueryKind, ResponseParams,
};
use crate::{Result, Scalar};

/// Committee disagreement `H(mean_n p_n) - mean_n H(p_n)` in bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disagreement<T> {
    pub bits: T,
    /// Standard error of a Monte Carlo estimate; `None` when enumerated exactly.
    pub std_error: Option<T>,
    /// Outcome draws per particle for a Monte Carlo estimate.
    pub draws: Option<usize>,
}

/// Log probabilities of every outcome of a query over items with projections
/// `z` (one particle), in a fixed enumeration order:
///
/// * `Label`: the product label space over the items, `2^|S|` outcomes;
/// * selections: `(index, label)` pairs, `2|S|` outcomes;
/// * `Rank`: `(permutation, threshold)` pairs, `|S|! (|S|+1)` outcomes, with
///   the label factor normalized over thresholds.
pub fn outcome_log_probs<T: Scalar>(z: &[T], kind: QueryKind, params: &ResponseParams<T>) -> Vec<T> {
    let p = Prepared::new(z, params);
    let perms = if kind == QueryKind::Rank { permutations(z.len()) } else { Vec::new() };
    let mut out = Vec::new();
    outcome_log_probs_into(&p.utils, &p.lp, &p.ln, kind, &perms, &mut out);
    out
}

/// `K z`, `log P[+1]` and `log P[-1]` for each item, for one particle.
#[derive(Debug, Clone)]
pub(crate) struct Prepared<T> {
    pub utils: Vec<T>,
    pub lp: Vec<T>,
    pub ln: Vec<T>,
}

impl<T: Scalar> Prepared<T> {
    pub fn new(z: &[T], params: &ResponseParams<T>) -> Self {
        let k = params.k();
        Self {
            utils: z.iter().map(|&v| k * v).collect(),
            lp: z.iter().map(|&v| label_log_prob(v, params.w, Label::Positive)).collect(),
            ln: z.iter().map(|&v| label_log_prob(v, params.w, Label::Negative)).collect(),
        }
    }

    /// Restriction to the items `idx`, written into `into`.
    pub fn gather(&self, idx: &[usize], into: &mut Prepared<T>) {
        for (dst, src) in [(&mut into.utils, &self.utils), (&mut into.lp, &self.lp), (&mut into.ln, &self.ln)] {
            dst.clear();
            dst.extend(idx.iter().map(|&i| src[i]));
        }
    }

    pub fn empty() -> Self {
        Self { utils: Vec::new(), lp: Vec::new(), ln: Vec::new() }
    }
}

/// Appends the outcome log probabilities of one particle to `out`; `perms`
/// must hold every permutation of the items for rankings.
pub(crate) fn outcome_log_probs_into<T: Scalar>(
    utils: &[T],
    lp: &[T],
    ln: &[T],
    kind: QueryKind,
    perms: &[Vec<usize>],
    out: &mut Vec<T>,
) {
    let n = utils.len();
    match kind {
        QueryKind::Label => out.extend(
            (0..1usize << n)
                .map(|mask| (0..n).fold(T::zero(), |acc, j| acc + if mask >> j & 1 == 1 { lp[j] } else { ln[j] })),
        ),
        QueryKind::SelectHigh | QueryKind::SelectLow => {
            let s = kind.choice_sign::<T>();
            let top = utils.iter().fold(s * utils[0], |m, &u| m.max(s * u));
            let lse = top + utils.iter().fold(T::zero(), |acc, &u| acc + (s * u - top).exp()).ln();
            for i in 0..n {
                let c = s * utils[i] - lse;
                out.push(c + lp[i]);
                out.push(c + ln[i]);
            }
        }
        QueryKind::Rank => {
            let mut weights: Vec<T> = Vec::with_capacity(n + 1);
            for perm in perms {
                let pl = plackett_luce_log_prob(utils, perm);
                weights.clear();
                let mut acc = perm.iter().fold(T::zero(), |a, &i| a + ln[i]);
                weights.push(acc);
                for &i in perm {
                    acc += lp[i] - ln[i];
                    weights.push(acc);
                }
                let z = log_sum_exp(&weights);
                out.extend(weights.iter().map(|&w| pl + w - z));
            }
        }
    }
}

fn normalized_thresholds<T: Scalar>(perm: &[usize], lp: &[T], ln: &[T]) -> Vec<T> {
    let p: Vec<T> = perm.iter().map(|&i| lp[i]).collect();
    let n: Vec<T> = perm.iter().map(|&i| ln[i]).collect();
    let w = threshold_log_weights(&p, &n);
    let z = log_sum_exp(&w);
    w.into_iter().map(|v| v - z).collect()
}

/// Shared random numbers for Monte Carlo ranking estimates, so candidate sets
/// are compared on the same draws.
#[derive(Debug, Clone)]
pub struct McDraws {
    particles: usize,
    draws: usize,
    max_size: usize,
    gumbel: Vec<f64>,
    uniform: Vec<f64>,
}

impl McDraws {
    pub fn new(particles: usize, draws: usize, max_size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gumbel = (0..particles * draws * max_size)
            .map(|_| {
                let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
                -(-u.ln()).ln()
            })
            .collect();
        let uniform = (0..particles * draws).map(|_| rng.random::<f64>()).collect();
        Self { particles, draws, max_size, gumbel, uniform }
    }

    pub fn draws(&self) -> usize {
        self.draws
    }

    fn gumbel(&self, particle: usize, draw: usize) -> &[f64] {
        let start = (particle * self.draws + draw) * self.max_size;
        &self.gumbel[start..start + self.max_size]
    }

    fn uniform(&self, particle: usize, draw: usize) -> f64 {
        self.uniform[particle * self.draws + draw]
    }
}

/// `(1/N) sum_n sum_o p_n(o) log2(p_n(o) / pbar(o))` for `N` rows of
/// `outcomes` log probabilities stored contiguously.
pub(crate) fn mixture_information<T: Scalar>(lps: &[T], outcomes: usize) -> T {
    let n = lps.len() / outcomes;
    let inv_n = T::one() / T::from_usize_lossy(n);
    let mut total = T::zero();
    let mut col = vec![T::zero(); n];
    for o in 0..outcomes {
        let mut mix = T::zero();
        for (p, c) in col.iter_mut().enumerate() {
            *c = lps[p * outcomes + o].exp();
            mix += *c;
        }
        if mix <= T::zero() {
            continue;
        }
        let log_mix = (mix * inv_n).ln();
        for (p, &c) in col.iter().enumerate() {
            if c > T::zero() {
                total += c * (lps[p * outcomes + o] - log_mix);
            }
        }
    }
    (total * inv_n / T::ln_2()).max(T::zero())
}

/// Disagreement from per-particle projections `scores[n][j] = theta_n^T x_j`
/// of the candidate items.
///
/// Enumerates the outcome space except for rankings longer than
/// `settings.exact_rank_max`, where it averages
/// `log2 p_n(o) - log2 mean_k p_k(o)` over outcomes `o ~ p_n` drawn with the
/// Gumbel-max trick from `draws` (generated from `settings.seed` if absent).
pub fn disagreement_from_scores<T: Scalar>(
    scores: &[Vec<T>],
    kind: QueryKind,
    params: &ResponseParams<T>,
    settings: &DisagreementSettings,
    draws: Option<&McDraws>,
) -> Disagreement<T> {
    let size = scores.first().map_or(0, |s| s.len());
    if kind == QueryKind::Rank && size > settings.exact_rank_max {
        let owned;
        let draws = match draws {
            Some(d) if d.particles >= scores.len() && d.max_size >= size => d,
            _ => {
                owned = McDraws::new(scores.len(), settings.mc_draws, size, settings.seed);
                &owned
            }
        };
        return monte_carlo_rank(scores, params, draws);
    }
    let perms = if kind == QueryKind::Rank { permutations(size) } else { Vec::new() };
    let mut lps = Vec::new();
    for z in scores {
        let p = Prepared::new(z, params);
        outcome_log_probs_into(&p.utils, &p.lp, &p.ln, kind, &perms, &mut lps);
    }
    let outcomes = lps.len() / scores.len().max(1);
    Disagreement { bits: mixture_information(&lps, outcomes.max(1)), std_error: None, draws: None }
}

fn monte_carlo_rank<T: Scalar>(scores: &[Vec<T>], params: &ResponseParams<T>, draws: &McDraws) -> Disagreement<T> {
    let n_particles = scores.len();
    let size = scores[0].len();
    let ln_n = T::from_usize_lossy(n_particles).ln();
    let prepared: Vec<Prepared<T>> = scores.iter().map(|z| Prepared::new(z, params)).collect();
    let m = draws.draws();
    let (mut sum, mut sum_sq) = (0.0_f64, 0.0_f64);
    let mut perm: Vec<usize> = Vec::with_capacity(size);
    let mut col = vec![T::zero(); n_particles];
    for n in 0..n_particles {
        let Prepared { utils, lp, ln } = &prepared[n];
        for d in 0..m {
            let g = draws.gumbel(n, d);
            let keys: Vec<f64> = (0..size).map(|j| utils[j].as_f64() + g[j]).collect();
            perm.clear();
            perm.extend(0..size);
            perm.sort_by(|&a, &b| keys[b].partial_cmp(&keys[a]).unwrap_or(std::cmp::Ordering::Equal));
            let thr = normalized_thresholds(&perm, lp, ln);
            let u = draws.uniform(n, d);
            let mut acc = 0.0;
            let mut ell = size;
            for (i, t) in thr.iter().enumerate() {
                acc += t.as_f64().exp();
                if u < acc {
                    ell = i;
                    break;
                }
            }
            for (c, pk) in col.iter_mut().zip(&prepared) {
                *c = plackett_luce_log_prob(&pk.utils, &perm) + normalized_thresholds(&perm, &pk.lp, &pk.ln)[ell];
            }
            let mix = log_sum_exp(&col) - ln_n;
            let term = ((col[n] - mix) / T::ln_2()).as_f64();
            sum += term;
            sum_sq += term * term;
        }
    }
    let count = (n_particles * m) as f64;
    let mean = sum / count;
    let var = (sum_sq / count - mean * mean).max(0.0) * count / (count - 1.0).max(1.0);
    Disagreement { bits: T::lit(mean), std_error: Some(T::lit((var / count).sqrt())), draws: Some(m) }
}

/// Disagreement of `committee` about the answer to a `kind` query over `items`.
pub fn disagreement<T: Scalar>(
    items: &[&DVector<T>],
    kind: QueryKind,
    committee: &Committee<T>,
    params: &ResponseParams<T>,
    settings: &DisagreementSettings,
) -> Result<Disagreement<T>> {
    if committee.is_degenerate() {
        return Ok(Disagreement { bits: T::zero(), std_error: None, draws: None });
    }
    let scores = committee.project(items)?;
    Ok(disagreement_from_scores(&scores, kind, params, settings, None))
}
