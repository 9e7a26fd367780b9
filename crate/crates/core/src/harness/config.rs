use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::belief::UpdateSettings;
use crate::dataset::{GumbelFlavor, PoolFormat};
use crate::response::QueryKind;
use crate::selection::DisagreementSettings;
use crate::{Error, Result};

/// Everything needed to run one experiment or serve one session.
///
/// Read from TOML; every section except `pool` and `policy` has defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every random stream of a run is derived from it.
    pub seed: Option<u64>,
    pub pool: Option<PoolSource>,
    #[serde(default)]
    pub annotator: AnnotatorConfig,
    /// Learner-side likelihood parameters; unset fields are taken from the annotator.
    #[serde(default)]
    pub response: ResponseConfig,
    pub policy: Option<PolicyConfig>,
    #[serde(default)]
    pub item_selection: ItemSelection,
    #[serde(default)]
    pub prior: PriorConfig,
    /// Stop once `|Sigma| <= epsilon^d`.
    pub epsilon: Option<f64>,
    pub max_interactions: Option<usize>,
    #[serde(default = "default_committee_size")]
    pub committee_size: usize,
    /// Items with `|P[Y = 1] - 0.5|` at or below this are left out of the eval set.
    #[serde(default = "default_eval_filter")]
    pub eval_filter: f64,
    /// Trace file written by `run`.
    pub output: Option<PathBuf>,
    /// Cost model csv (`kind,beta0,beta1`); the published coefficients otherwise.
    pub cost_model: Option<PathBuf>,
    #[serde(default)]
    pub update: UpdateSettings<f64>,
    #[serde(default)]
    pub disagreement: DisagreementSettings,
}

fn default_committee_size() -> usize {
    50
}

fn default_eval_filter() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum PoolSource {
    /// Random unit-sphere items scored by a random unit hyperplane.
    Synthetic {
        /// Raw embedding dimension `d`; items and theta live in `R^(d+1)`.
        dim: usize,
        items: usize,
    },
    File {
        path: PathBuf,
        format: PoolFormat,
        /// Scores at or above this are positive.
        label_threshold: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotatorKind {
    #[default]
    Gumbel,
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotatorConfig {
    pub mode: AnnotatorKind,
    /// Score slope; fitted from the pool for file sources when unset.
    pub a: Option<f64>,
    pub b: Option<f64>,
    /// Gumbel scale; fitted from residuals for file sources when unset.
    pub noise_scale: Option<f64>,
    pub flavor: GumbelFlavor,
    pub mirror_for_low: bool,
}

impl Default for AnnotatorConfig {
    fn default() -> Self {
        Self { mode: AnnotatorKind::Gumbel, a: None, b: None, noise_scale: None, flavor: GumbelFlavor::Max, mirror_for_low: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResponseConfig {
    /// Label slope; `-a / sigma` when unset.
    pub w: Option<f64>,
    pub a: Option<f64>,
    pub sigma: Option<f64>,
}

/// Kinds a fixed policy can ask. `Select` flips a fair coin between highest
/// and lowest every interaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Label,
    Select,
    SelectHigh,
    SelectLow,
    Rank,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyConfig {
    Fixed {
        kind: PolicyKind,
        /// Ignored for labels.
        #[serde(default)]
        set_size: Option<usize>,
    },
    /// Pick the `(kind, |S|)` with the best estimated information per second.
    RateAdaptive {
        #[serde(default = "default_min_size")]
        min_set_size: usize,
        #[serde(default = "default_max_size")]
        max_set_size: usize,
        /// Committees drawn per estimate.
        #[serde(default = "default_probes")]
        probes: usize,
        /// Candidate subsample per probe.
        #[serde(default = "default_candidates")]
        candidates: usize,
        /// Re-estimate from the current belief every this many interactions; 0 = once.
        #[serde(default)]
        refresh_every: usize,
    },
}

fn default_min_size() -> usize {
    2
}

fn default_max_size() -> usize {
    10
}

fn default_probes() -> usize {
    3
}

fn default_candidates() -> usize {
    200
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemSelection {
    /// Greedy committee disagreement.
    #[default]
    Active,
    /// Uniform without replacement within a query.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// Half-width of the hypercube the Gaussian prior stands in for: `Sigma0 = (M^2/3) I`.
    pub m: f64,
    pub mu0: Option<Vec<f64>>,
    /// Overrides the hypercube variance.
    pub variance: Option<f64>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self { m: 1.0, mu0: None, variance: None }
    }
}

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config { field: field.into(), message: message.into() }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err("toml", e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err("toml", e.to_string()))
    }

    fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let Some(PoolSource::File { path, .. }) = &mut self.pool {
            fix(path);
        }
        if let Some(p) = &mut self.output {
            fix(p);
        }
        if let Some(p) = &mut self.cost_model {
            fix(p);
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or_default()
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed.is_none() {
            return Err(config_err("seed", "an explicit seed is required"));
        }
        match &self.pool {
            None => return Err(config_err("pool", "missing pool source")),
            Some(PoolSource::Synthetic { dim, items }) => {
                if *dim == 0 {
                    return Err(config_err("pool.dim", "synthetic dimension must be at least 1"));
                }
                if *items == 0 {
                    return Err(config_err("pool.items", "synthetic pool must have items"));
                }
            }
            Some(PoolSource::File { label_threshold, .. }) => {
                if !label_threshold.is_finite() {
                    return Err(config_err("pool.label_threshold", "must be finite"));
                }
            }
        }
        match &self.policy {
            None => return Err(config_err("policy", "missing query policy")),
            Some(PolicyConfig::Fixed { kind, set_size }) => {
                if *kind != PolicyKind::Label && set_size.is_none_or(|s| s < 2) {
                    return Err(config_err("policy.set_size", "non-label queries need set_size >= 2"));
                }
            }
            Some(PolicyConfig::RateAdaptive { min_set_size, max_set_size, probes, candidates, .. }) => {
                if *min_set_size < 2 || min_set_size > max_set_size {
                    return Err(config_err("policy.min_set_size", "need 2 <= min_set_size <= max_set_size"));
                }
                if *probes == 0 || *candidates == 0 {
                    return Err(config_err("policy.probes", "probes and candidates must be positive"));
                }
            }
        }
        if self.epsilon.is_none() && self.max_interactions.is_none() {
            return Err(config_err("epsilon", "set epsilon and/or max_interactions"));
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0) {
                return Err(config_err("epsilon", "must be positive"));
            }
        }
        if self.committee_size < 2 {
            return Err(config_err("committee_size", "need at least 2 particles"));
        }
        if !(0.0..0.5).contains(&self.eval_filter) {
            return Err(config_err("eval_filter", "must lie in [0, 0.5)"));
        }
        if !(self.prior.m > 0.0) || self.prior.variance.is_some_and(|v| !(v > 0.0)) {
            return Err(config_err("prior", "prior scale must be positive"));
        }
        for (name, v) in [("annotator.noise_scale", self.annotator.noise_scale), ("response.sigma", self.response.sigma)] {
            if v.is_some_and(|s| !(s > 0.0)) {
                return Err(config_err(name, "must be positive"));
            }
        }
        self.update.validate().map_err(|e| config_err("update", e.to_string()))?;
        Ok(())
    }
}

impl PolicyKind {
    /// The concrete kind, given a fair coin for `Select`.
    pub fn resolve(self, coin: bool) -> QueryKind {
        match self {
            PolicyKind::Label => QueryKind::Label,
            PolicyKind::Select if coin => QueryKind::SelectHigh,
            PolicyKind::Select => QueryKind::SelectLow,
            PolicyKind::SelectHigh => QueryKind::SelectHigh,
            PolicyKind::SelectLow => QueryKind::SelectLow,
            PolicyKind::Rank => QueryKind::Rank,
        }
    }
}
