use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::config::{AnnotatorKind, ExperimentConfig, ItemSelection, PolicyConfig, PolicyKind, PoolSource};
use super::synthetic::SyntheticTask;
use super::trace::{export_trace, TraceRecord};
use crate::belief::{apply_response, should_stop, GaussianBelief, StoppingRule};
use crate::dataset::{
    fit_affine_score, fit_ground_truth, fit_gumbel, load_pool, EmbeddedItem, GroundTruth, Gumbel, ItemPool,
};
use crate::policy::{
    estimate_info_ratios, predict_cost, select_query_config, CostModel, InfoRateTable, RatioEstimate, RatioSettings,
};
use crate::response::{Label, Query, QueryKind, ResponseParams};
use crate::selection::{greedy_build, sample_committee};
use crate::simulate::{AnnotatorMode, SimulatedAnnotator};
use crate::{Error, Result};

/// Gumbel scale of the synthetic annotator when the config leaves it unset.
pub const DEFAULT_SYNTHETIC_NOISE: f64 = 0.25;

// Independent random streams, all derived from the master seed.
const STREAM_TASK: u64 = 1;
const STREAM_COIN: u64 = 2;
const STREAM_COMMITTEE: u64 = 3;
const STREAM_ITEMS: u64 = 4;
const STREAM_ANNOTATOR: u64 = 5;
const STREAM_RATIOS: u64 = 6;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn derived_seed(seed: u64, id: u64) -> u64 {
    stream(seed, id).next_u64()
}

/// The ground truth and score model a simulated annotator answers from.
#[derive(Debug, Clone)]
pub struct Truth {
    pub gt: GroundTruth<f64>,
    pub mode: AnnotatorMode<f64>,
    pub label_threshold: f64,
    /// Score slope and noise scale, the defaults for the learner's `a` and `sigma`.
    pub a: f64,
    pub noise_scale: f64,
}

impl Truth {
    /// `P[Y = +1]` for an item: the chance its perceived score reaches the threshold.
    pub fn positive_probability(&self, item: &EmbeddedItem<f64>) -> f64 {
        match &self.mode {
            AnnotatorMode::GumbelScore { a, b, noise, .. } => {
                1.0 - noise.cdf(self.label_threshold - a * self.gt.theta.dot(&item.x) - b)
            }
            AnnotatorMode::EmpiricalScore => {
                let s = &item.scores;
                if let Some(samples) = s.samples.as_ref().filter(|v| !v.is_empty()) {
                    return samples.iter().filter(|&&v| v >= self.label_threshold).count() as f64 / samples.len() as f64;
                }
                let mean = s.mean.unwrap_or(self.label_threshold);
                match Normal::new(mean, s.var.max(0.0).sqrt()) {
                    Ok(n) => 1.0 - n.cdf(self.label_threshold),
                    Err(_) => f64::from(u8::from(mean >= self.label_threshold)),
                }
            }
        }
    }

    /// The sign of the item's expected score relative to the threshold.
    pub fn reference_label(&self, item: &EmbeddedItem<f64>) -> Label {
        let mean = match &self.mode {
            AnnotatorMode::GumbelScore { a, b, noise, .. } => a * self.gt.theta.dot(&item.x) + b + noise.mean(),
            AnnotatorMode::EmpiricalScore => item.scores.mean_or_sample_mean().unwrap_or(self.label_threshold),
        };
        Label::from_sign(mean - self.label_threshold)
    }
}

/// Pool, likelihood, prior and stopping rule resolved from a config.
#[derive(Debug, Clone)]
pub struct Learner {
    pub config: ExperimentConfig,
    pub pool: ItemPool<f64>,
    /// Absent when the pool carries no scores to simulate answers from.
    pub truth: Option<Truth>,
    pub params: ResponseParams<f64>,
    pub prior: GaussianBelief<f64>,
    pub stop: Option<StoppingRule<f64>>,
    pub costs: CostModel,
}

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config { field: field.into(), message: message.into() }
}

impl Learner {
    pub fn from_config(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let ann = &config.annotator;
        let (pool, truth) = match config.pool.as_ref().expect("validated") {
            PoolSource::Synthetic { dim, items } => {
                let a = ann.a.unwrap_or(1.0);
                let b = ann.b.unwrap_or(0.0);
                let scale = ann.noise_scale.unwrap_or(DEFAULT_SYNTHETIC_NOISE);
                let noise = Gumbel::centered(ann.flavor, scale)?;
                let var = (std::f64::consts::PI * scale).powi(2) / 6.0;
                let task = SyntheticTask::generate(*dim, *items, a, b, var, derived_seed(config.seed(), STREAM_TASK))?;
                let mode = match ann.mode {
                    AnnotatorKind::Gumbel => AnnotatorMode::GumbelScore { a, b, noise, mirror_for_low: ann.mirror_for_low },
                    AnnotatorKind::Empirical => AnnotatorMode::EmpiricalScore,
                };
                let truth = Truth { gt: task.gt, mode, label_threshold: b, a, noise_scale: scale };
                (task.pool, Some(truth))
            }
            PoolSource::File { path, format, label_threshold } => {
                let pool = load_pool::<f64>(path, *format)?;
                let truth = file_truth(config, &pool, *label_threshold).ok();
                (pool, truth)
            }
        };

        let r = &config.response;
        let a = r.a.or(ann.a).or(truth.as_ref().map(|t| t.a));
        let sigma = r.sigma.or(ann.noise_scale).or(truth.as_ref().map(|t| t.noise_scale));
        let (Some(a), Some(sigma)) = (a, sigma) else {
            return Err(config_err("response", "set a and sigma, or use a pool an annotator can be fitted to"));
        };
        let params = ResponseParams::new(r.w.unwrap_or(-a / sigma), a, sigma)?;

        let dim = pool.dim();
        let var = config.prior.variance.unwrap_or(config.prior.m * config.prior.m / 3.0);
        let mu0 = match &config.prior.mu0 {
            Some(v) if v.len() != dim => {
                return Err(config_err("prior.mu0", format!("expected {dim} entries, found {}", v.len())))
            }
            Some(v) => DVector::from_column_slice(v),
            None => DVector::zeros(dim),
        };
        let prior = GaussianBelief::new(mu0, DMatrix::identity(dim, dim) * var)?;
        let stop = config.epsilon.map(|e| StoppingRule::new(e, dim)).transpose()?;
        let costs = match &config.cost_model {
            Some(path) => {
                let f = std::fs::File::open(path).map_err(|source| Error::Io { path: path.clone(), source })?;
                CostModel::read_csv(f)?
            }
            None => CostModel::standard(),
        };
        Ok(Self { config: config.clone(), pool, truth, params, prior, stop, costs })
    }

    pub fn is_done(&self, belief: &GaussianBelief<f64>, interactions: usize) -> bool {
        self.stop.as_ref().is_some_and(|r| should_stop(belief, r))
            || self.config.max_interactions.is_some_and(|m| interactions >= m)
    }
}

fn file_truth(config: &ExperimentConfig, pool: &ItemPool<f64>, threshold: f64) -> Result<Truth> {
    let labels = pool
        .items()
        .iter()
        .map(|it| {
            let m = it.scores.mean_or_sample_mean().ok_or_else(|| Error::MissingScoreStats(it.id.clone()))?;
            Ok(Label::from_sign(m - threshold))
        })
        .collect::<Result<Vec<_>>>()?;
    let gt = fit_ground_truth(pool, &labels)?;
    let ann = &config.annotator;
    let fit = fit_affine_score(pool, &gt)?;
    let a = ann.a.unwrap_or(fit.a);
    let b = ann.b.unwrap_or(fit.b);
    let noise = match ann.noise_scale {
        Some(s) => Gumbel::centered(ann.flavor, s)?,
        None => fit_gumbel(&fit.residuals, ann.flavor)?.distribution(),
    };
    let mode = match ann.mode {
        AnnotatorKind::Gumbel => AnnotatorMode::GumbelScore { a, b, noise, mirror_for_low: ann.mirror_for_low },
        AnnotatorKind::Empirical => AnnotatorMode::EmpiricalScore,
    };
    Ok(Truth { gt, mode, label_threshold: threshold, a, noise_scale: noise.scale })
}

/// Items whose label is far enough from a coin flip, with their reference labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub indices: Vec<usize>,
    pub labels: Vec<Label>,
}

impl EvalSet {
    /// Keeps items with `|P[Y = 1] - 0.5| > filter`.
    pub fn build(pool: &ItemPool<f64>, truth: &Truth, filter: f64) -> Result<Self> {
        let (indices, labels) = pool
            .items()
            .iter()
            .enumerate()
            .filter(|(_, it)| (truth.positive_probability(it) - 0.5).abs() > filter)
            .map(|(i, it)| (i, truth.reference_label(it)))
            .unzip();
        let set = Self { indices, labels };
        if set.indices.is_empty() {
            return Err(Error::InvalidArgument("evaluation filter leaves no items".into()));
        }
        Ok(set)
    }

    pub fn ids<'a>(&'a self, pool: &'a ItemPool<f64>) -> impl Iterator<Item = &'a str> + 'a {
        self.indices.iter().map(|&i| pool.items()[i].id.as_str())
    }

    pub fn accuracy(&self, pool: &ItemPool<f64>, mu: &DVector<f64>) -> Result<f64> {
        let xs: Vec<&DVector<f64>> = self.indices.iter().map(|&i| &pool.items()[i].x).collect();
        evaluate_accuracy(mu, &xs, &self.labels)
    }
}

/// Fraction of items where `sign(mu^T x)` (with `sign(0) = +1`) matches the label.
pub fn evaluate_accuracy(mu: &DVector<f64>, xs: &[&DVector<f64>], labels: &[Label]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation set".into()));
    }
    if xs.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), found: labels.len() });
    }
    let hits = xs.iter().zip(labels).filter(|(x, &y)| Label::from_sign(mu.dot(x)) == y).count();
    Ok(hits as f64 / xs.len() as f64)
}

/// `||mu/||mu|| - theta*||^2`; a zero mean is compared as is.
pub fn mse_to_gt(mu: &DVector<f64>, theta: &DVector<f64>) -> f64 {
    let n = mu.norm();
    if n == 0.0 {
        return theta.norm_squared();
    }
    (mu / n - theta).norm_squared()
}

/// A query together with the pool indices it was built from.
#[derive(Debug, Clone)]
pub struct PlannedQuery {
    pub indices: Vec<usize>,
    pub query: Query<f64>,
}

/// Chooses the kind, size and items of each query.
///
/// Every call consumes the same random draws whatever the item-selection
/// mode, so active and random runs with one seed see the same kind sequence.
#[derive(Debug, Clone)]
pub struct QueryPlanner {
    coin: ChaCha8Rng,
    committee: ChaCha8Rng,
    items: ChaCha8Rng,
    ratio_seeds: ChaCha8Rng,
    current: Option<(PolicyKind, usize)>,
    last_ratios: Option<Vec<RatioEstimate>>,
    planned: usize,
}

impl QueryPlanner {
    pub fn new(seed: u64) -> Self {
        Self {
            coin: stream(seed, STREAM_COIN),
            committee: stream(seed, STREAM_COMMITTEE),
            items: stream(seed, STREAM_ITEMS),
            ratio_seeds: stream(seed, STREAM_RATIOS),
            current: None,
            last_ratios: None,
            planned: 0,
        }
    }

    /// The most recent ratio estimates of a rate-adaptive policy.
    pub fn last_ratios(&self) -> Option<&[RatioEstimate]> {
        self.last_ratios.as_deref()
    }

    pub fn plan(&mut self, learner: &Learner, belief: &GaussianBelief<f64>) -> Result<PlannedQuery> {
        let cfg = &learner.config;
        let coin: bool = self.coin.random();
        let committee_seed = self.committee.next_u64();
        let (policy_kind, size) = match cfg.policy.expect("validated") {
            PolicyConfig::Fixed { kind, set_size } => (kind, set_size.unwrap_or(1)),
            PolicyConfig::RateAdaptive { refresh_every, .. } => {
                let stale = refresh_every > 0 && self.planned > 0 && self.planned.is_multiple_of(refresh_every);
                if self.current.is_none() || stale {
                    self.current = Some(self.choose_config(learner, belief)?);
                }
                self.current.expect("just set")
            }
        };
        let kind = policy_kind.resolve(coin);
        let size = if kind == QueryKind::Label { 1 } else { size };
        if size > learner.pool.len() {
            return Err(Error::InvalidArgument(format!("set size {size} exceeds pool of {}", learner.pool.len())));
        }
        let indices = match cfg.item_selection {
            ItemSelection::Active => {
                let committee = sample_committee(belief, cfg.committee_size, committee_seed)?;
                greedy_build(&learner.pool, size, kind, &committee, &learner.params, &cfg.disagreement)?
            }
            ItemSelection::Random => sample(&mut self.items, learner.pool.len(), size).into_vec(),
        };
        let items = indices.iter().map(|&i| learner.pool.items()[i].clone()).collect();
        self.planned += 1;
        Ok(PlannedQuery { indices, query: Query::new(kind, items)? })
    }

    fn choose_config(&mut self, learner: &Learner, belief: &GaussianBelief<f64>) -> Result<(PolicyKind, usize)> {
        let cfg = &learner.config;
        let Some(PolicyConfig::RateAdaptive { min_set_size, max_set_size, probes, candidates, .. }) = cfg.policy else {
            unreachable!("only rate-adaptive policies estimate ratios");
        };
        // highest and lowest selections share a cost line and are asked with equal
        // probability, so one column stands for both
        let mut grid = vec![(QueryKind::Label, 1)];
        for kind in [QueryKind::SelectHigh, QueryKind::Rank] {
            grid.extend((min_set_size..=max_set_size).map(|s| (kind, s)));
        }
        let settings = RatioSettings {
            committee_size: cfg.committee_size,
            candidates: Some(candidates),
            disagreement: cfg.disagreement,
            seed: self.ratio_seeds.next_u64(),
        };
        let probes = vec![belief.clone(); probes];
        let ratios = estimate_info_ratios(&learner.pool, &probes, &grid, &learner.params, &settings)?;
        let table = InfoRateTable::from_ratios(&ratios, &learner.costs);
        let (kind, size) = select_query_config(&table)?;
        self.last_ratios = Some(ratios);
        let policy_kind = match kind {
            QueryKind::Label => PolicyKind::Label,
            QueryKind::SelectHigh | QueryKind::SelectLow => PolicyKind::Select,
            QueryKind::Rank => PolicyKind::Rank,
        };
        Ok((policy_kind, size))
    }
}

/// A learner with a simulated annotator and a frozen evaluation set.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub learner: Learner,
    pub truth: Truth,
    pub eval: EvalSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub records: Vec<TraceRecord>,
    /// Why the run stopped early, if it did.
    pub error: Option<String>,
}

impl Experiment {
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        let learner = Learner::from_config(config)?;
        let truth = match &learner.truth {
            Some(t) => t.clone(),
            None => {
                let PoolSource::File { label_threshold, .. } = config.pool.as_ref().expect("validated") else {
                    unreachable!("synthetic pools always have a truth")
                };
                file_truth(config, &learner.pool, *label_threshold)?
            }
        };
        let eval = EvalSet::build(&learner.pool, &truth, config.eval_filter)?;
        Ok(Self { learner, truth, eval })
    }

    pub fn run(&self) -> ExperimentOutcome {
        self.run_with(|_, _| {})
    }

    /// Beliefs after each of the interaction counts in `at` (0 is the prior),
    /// from one run of the configured policy.
    pub fn belief_snapshots(&self, at: &[usize]) -> Result<Vec<GaussianBelief<f64>>> {
        let mut snaps: Vec<Option<GaussianBelief<f64>>> = vec![None; at.len()];
        let outcome = self.run_with(|t, b| {
            for (slot, &want) in snaps.iter_mut().zip(at) {
                if want == t {
                    *slot = Some(b.clone());
                }
            }
        });
        snaps
            .into_iter()
            .zip(at)
            .map(|(s, &t)| {
                s.ok_or_else(|| match &outcome.error {
                    Some(e) => Error::InvalidArgument(format!("run ended before interaction {t}: {e}")),
                    None => Error::InvalidArgument(format!("run stopped before interaction {t}")),
                })
            })
            .collect()
    }

    /// [`run`](Self::run), calling `observe(t, belief)` on the prior and after every update.
    pub fn run_with(&self, mut observe: impl FnMut(usize, &GaussianBelief<f64>)) -> ExperimentOutcome {
        let l = &self.learner;
        let seed = l.config.seed();
        let mut planner = QueryPlanner::new(seed);
        let mut annotator = SimulatedAnnotator::new(
            self.truth.mode.clone(),
            self.truth.gt.clone(),
            self.truth.label_threshold,
            derived_seed(seed, STREAM_ANNOTATOR),
        );
        let mut belief = l.prior.clone();
        let mut records: Vec<TraceRecord> = Vec::new();
        let mut cum = 0.0;
        let mut error = None;
        observe(0, &belief);
        while !l.is_done(&belief, records.len()) {
            let step = (|| -> Result<TraceRecord> {
                let planned = planner.plan(l, &belief)?;
                let q = &planned.query;
                let response = annotator.simulate_answer(q)?;
                let seconds = predict_cost(&l.costs, q.kind(), q.len())?;
                belief = apply_response(&belief, q, &response, &l.params, &l.config.update)?;
                cum += seconds;
                Ok(TraceRecord {
                    t: records.len() + 1,
                    kind: q.kind(),
                    set_size: q.len(),
                    item_ids: q.items().iter().map(|it| it.id.clone()).collect(),
                    response,
                    mse_to_gt: mse_to_gt(belief.mu(), &self.truth.gt.theta),
                    trace_sigma: belief.trace_sigma(),
                    log_det_sigma: belief.log_det_sigma(),
                    accuracy: self.eval.accuracy(&l.pool, belief.mu())?,
                    cum_predicted_seconds: cum,
                })
            })();
            match step {
                Ok(r) => {
                    records.push(r);
                    observe(records.len(), &belief);
                }
                Err(e) => {
                    error = Some(e.to_string());
                    break;
                }
            }
        }
        ExperimentOutcome { records, error }
    }
}

/// Runs a config end to end and writes the trace to `config.output` if set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let outcome = Experiment::prepare(config)?.run();
    if let Some(path) = &config.output {
        export_trace(&outcome.records, path)?;
    }
    Ok(outcome)
}

/// Interaction index at which `mse_to_gt` first drops to `threshold`.
pub fn interactions_to_mse(records: &[TraceRecord], threshold: f64) -> Option<usize> {
    records.iter().find(|r| r.mse_to_gt <= threshold).map(|r| r.t)
}
