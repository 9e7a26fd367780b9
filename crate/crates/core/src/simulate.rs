//! Simulated annotators that answer queries from noisy perceived scores.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{EmbeddedItem, GroundTruth, Gumbel, GumbelFlavor};
use crate::response::{Label, Query, QueryKind, Response};
use crate::{Error, Result, Scalar};

/// How perceived scores are produced.
#[derive(Debug, Clone, PartialEq)]
pub enum AnnotatorMode<T: Scalar> {
    /// `score = a x^T theta* + b + noise`.
    GumbelScore {
        a: T,
        b: T,
        noise: Gumbel<T>,
        /// Answer `SelectLow` queries with Gumbel-Min noise of the same mean and
        /// scale, so that lowest-score choices follow the mirrored logit.
        mirror_for_low: bool,
    },
    /// Draw from the item's empirical score samples, or `N(mean, var)`.
    EmpiricalScore,
}

#[derive(Debug, Clone)]
pub struct SimulatedAnnotator<T: Scalar> {
    pub mode: AnnotatorMode<T>,
    pub gt: GroundTruth<T>,
    pub label_threshold: T,
    rng: ChaCha8Rng,
}

impl<T: Scalar> SimulatedAnnotator<T> {
    pub fn new(mode: AnnotatorMode<T>, gt: GroundTruth<T>, label_threshold: T, seed: u64) -> Self {
        Self { mode, gt, label_threshold, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Same configuration with a fresh RNG stream.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), ..self.clone() }
    }

    /// One perceived score per item.
    pub fn draw_scores(&mut self, items: &[EmbeddedItem<T>], kind: QueryKind) -> Result<Vec<T>> {
        items.iter().map(|it| self.draw_score(it, kind)).collect()
    }

    fn draw_score(&mut self, item: &EmbeddedItem<T>, kind: QueryKind) -> Result<T> {
        match &self.mode {
            AnnotatorMode::GumbelScore { a, b, noise, mirror_for_low } => {
                if item.x.len() != self.gt.theta.len() {
                    return Err(Error::DimensionMismatch { expected: self.gt.theta.len(), found: item.x.len() });
                }
                let noise = if *mirror_for_low && kind == QueryKind::SelectLow {
                    mirrored(noise)
                } else {
                    *noise
                };
                Ok(*a * self.gt.theta.dot(&item.x) + *b + noise.sample(&mut self.rng))
            }
            AnnotatorMode::EmpiricalScore => {
                let s = &item.scores;
                if let Some(samples) = s.samples.as_ref().filter(|v| !v.is_empty()) {
                    return Ok(samples[self.rng.random_range(0..samples.len())]);
                }
                let mean = s.mean.ok_or_else(|| Error::MissingScoreStats(item.id.clone()))?;
                let sd = s.var.max(T::zero()).sqrt().as_f64();
                let normal = Normal::new(mean.as_f64(), sd)
                    .map_err(|e| Error::InvalidArgument(format!("score distribution of {:?}: {e}", item.id)))?;
                Ok(T::lit(normal.sample(&mut self.rng)))
            }
        }
    }

    pub fn simulate_answer(&mut self, query: &Query<T>) -> Result<Response> {
        let scores = self.draw_scores(query.items(), query.kind())?;
        Ok(answer_from_scores(query.kind(), &scores, self.label_threshold))
    }
}

fn mirrored<T: Scalar>(g: &Gumbel<T>) -> Gumbel<T> {
    let flavor = match g.flavor {
        GumbelFlavor::Max => GumbelFlavor::Min,
        GumbelFlavor::Min => GumbelFlavor::Max,
    };
    // keep the mean: the two flavors shift it in opposite directions
    let location = T::lit(2.0) * g.mean() - g.location;
    Gumbel { flavor, location, scale: g.scale }
}

/// Deterministic answer given perceived scores. Ties go to the lower index;
/// a score equal to the threshold counts as positive.
pub fn answer_from_scores<T: Scalar>(kind: QueryKind, scores: &[T], label_threshold: T) -> Response {
    let label = |s: T| Label::from_sign(s - label_threshold);
    match kind {
        QueryKind::Label => Response::Label { y: label(scores[0]) },
        QueryKind::SelectHigh | QueryKind::SelectLow => {
            let better = |c: T, best: T| if kind == QueryKind::SelectHigh { c > best } else { c < best };
            let mut index = 0;
            for (i, &s) in scores.iter().enumerate().skip(1) {
                if better(s, scores[index]) {
                    index = i;
                }
            }
            Response::Selection { index, y: label(scores[index]) }
        }
        QueryKind::Rank => {
            let mut order: Vec<usize> = (0..scores.len()).collect();
            order.sort_by(|&i, &j| scores[j].partial_cmp(&scores[i]).unwrap_or(std::cmp::Ordering::Equal));
            let threshold = scores.iter().filter(|&&s| s >= label_threshold).count();
            Response::Ranking { order, threshold }
        }
    }
}
