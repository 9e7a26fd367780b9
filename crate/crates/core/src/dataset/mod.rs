//! Item corpora: ingestion of embedding + score tables, the augmented item
//! pool, and the fits used to build and validate ground truth.

mod fit;
mod gumbel;

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

pub use fit::{fit_affine_score, fit_ground_truth, AffineScoreFit, GroundTruth};
pub(crate) use fit::simple_ols;
pub use gumbel::{fit_gumbel, ks_statistic, Gumbel, GumbelFit, GumbelFlavor};

/// Column layout of an item table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolFormat {
    /// `id,display,score_mean,score_var,v1..vd`
    WordCsv,
    /// Same as words, `display` is an image path and `s1..sk` hold raw score samples.
    ImageCsv,
}

impl std::str::FromStr for PoolFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word-csv" => Ok(PoolFormat::WordCsv),
            "image-csv" => Ok(PoolFormat::ImageCsv),
            other => Err(Error::InvalidArgument(format!("unknown pool format {other:?}"))),
        }
    }
}

/// One row of an item table before augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawItem {
    pub id: String,
    pub display: String,
    pub vector: Vec<f64>,
    pub score_mean: Option<f64>,
    pub score_var: f64,
    pub score_samples: Option<Vec<f64>>,
}

impl RawItem {
    fn validate(&self, row: usize) -> Result<()> {
        if self.vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse { row, message: "non-finite vector entry".into() });
        }
        if !(self.score_var >= 0.0) {
            return Err(Error::Parse { row, message: "score_var must be nonnegative".into() });
        }
        if self.score_mean.is_none() && self.score_samples.is_none() {
            return Err(Error::Parse { row, message: "needs score_mean or score samples".into() });
        }
        Ok(())
    }
}

/// Per-item score statistics carried along from the corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreStats<T> {
    pub mean: Option<T>,
    pub var: T,
    pub samples: Option<Vec<T>>,
}

impl<T: Scalar> ScoreStats<T> {
    /// Mean score, falling back to the sample average.
    pub fn mean_or_sample_mean(&self) -> Option<T> {
        self.mean.or_else(|| {
            let s = self.samples.as_ref()?;
            if s.is_empty() {
                return None;
            }
            Some(s.iter().fold(T::zero(), |a, &b| a + b) / T::from_usize_lossy(s.len()))
        })
    }
}

/// Item with augmented embedding `x = (1, v / |v|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedItem<T: Scalar> {
    pub id: String,
    pub display: String,
    pub x: DVector<T>,
    pub scores: ScoreStats<T>,
}

impl<T: Scalar> EmbeddedItem<T> {
    /// Unit-normalizes the raw vector and prepends a constant 1.
    pub fn from_raw(raw: &RawItem) -> Result<Self> {
        let norm = raw.vector.iter().map(|v| v * v).sum::<f64>().sqrt();
        if raw.vector.is_empty() || norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "item {:?}: raw vector cannot be normalized",
                raw.id
            )));
        }
        let x = DVector::from_iterator(
            raw.vector.len() + 1,
            std::iter::once(T::one()).chain(raw.vector.iter().map(|&v| T::lit(v / norm))),
        );
        Ok(Self {
            id: raw.id.clone(),
            display: raw.display.clone(),
            x,
            scores: ScoreStats {
                mean: raw.score_mean.map(T::lit),
                var: T::lit(raw.score_var),
                samples: raw.score_samples.as_ref().map(|s| s.iter().map(|&v| T::lit(v)).collect()),
            },
        })
    }

    /// Builds an item from an already augmented embedding.
    pub fn new(id: impl Into<String>, display: impl Into<String>, x: DVector<T>, scores: ScoreStats<T>) -> Self {
        Self { id: id.into(), display: display.into(), x, scores }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// The query universe: items sharing one augmented dimension, unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemPool<T: Scalar> {
    items: Vec<EmbeddedItem<T>>,
    dim: usize,
}

impl<T: Scalar> ItemPool<T> {
    pub fn new(items: Vec<EmbeddedItem<T>>) -> Result<Self> {
        let dim = items.first().ok_or(Error::EmptyPool)?.dim();
        let mut seen = HashSet::with_capacity(items.len());
        for item in &items {
            if item.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: item.dim() });
            }
            if !seen.insert(item.id.as_str()) {
                return Err(Error::DuplicateId(item.id.clone()));
            }
        }
        Ok(Self { items, dim })
    }

    pub fn items(&self) -> &[EmbeddedItem<T>] {
        &self.items
    }

    pub fn get(&self, index: usize) -> Option<&EmbeddedItem<T>> {
        self.items.get(index)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Augmented dimension `d + 1`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.items.iter().position(|it| it.id == id)
    }

    /// `max |x|^2` over the pool.
    pub fn max_sq_norm(&self) -> T {
        self.items.iter().map(|it| it.x.norm_squared()).fold(T::zero(), |a, b| a.max(b))
    }
}

/// Reads an item table from disk.
pub fn load_pool<T: Scalar>(path: impl AsRef<Path>, format: PoolFormat) -> Result<ItemPool<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    parse_pool(file, format)
}

/// Parses an item table; row indices in errors are 0-based data rows.
pub fn parse_pool<T: Scalar, R: Read>(reader: R, format: PoolFormat) -> Result<ItemPool<T>> {
    let raws = parse_raw_items(reader, format)?;
    let items = raws
        .iter()
        .enumerate()
        .map(|(row, raw)| {
            EmbeddedItem::from_raw(raw).map_err(|e| Error::Parse { row, message: e.to_string() })
        })
        .collect::<Result<Vec<_>>>()?;
    ItemPool::new(items)
}

pub fn parse_raw_items<R: Read>(reader: R, format: PoolFormat) -> Result<Vec<RawItem>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse { row: 0, message: format!("header: {e}") })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let missing = |name: &str| Error::Parse { row: 0, message: format!("header lacks column {name:?}") };
    let id_col = col("id").ok_or_else(|| missing("id"))?;
    let display_col = col("display").ok_or_else(|| missing("display"))?;
    let mean_col = col("score_mean").ok_or_else(|| missing("score_mean"))?;
    let var_col = col("score_var").ok_or_else(|| missing("score_var"))?;
    let numbered = |prefix: char| -> Vec<usize> {
        let mut cols: Vec<(usize, usize)> = headers
            .iter()
            .enumerate()
            .filter_map(|(i, h)| {
                let rest = h.strip_prefix(prefix)?;
                rest.parse::<usize>().ok().map(|k| (k, i))
            })
            .collect();
        cols.sort_unstable();
        cols.into_iter().map(|(_, i)| i).collect()
    };
    let v_cols = numbered('v');
    let s_cols = if format == PoolFormat::ImageCsv { numbered('s') } else { Vec::new() };
    if v_cols.is_empty() {
        return Err(missing("v1"));
    }

    let mut out = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Parse { row, message: e.to_string() })?;
        let field = |i: usize| record.get(i).filter(|s| !s.is_empty());
        let num = |i: usize, name: &str| -> Result<Option<f64>> {
            field(i)
                .map(|s| {
                    s.parse::<f64>().map_err(|_| Error::Parse {
                        row,
                        message: format!("{name}: cannot parse {s:?} as a number"),
                    })
                })
                .transpose()
        };
        let id = field(id_col).ok_or(Error::Parse { row, message: "missing id".into() })?;
        let display = field(display_col).unwrap_or(id);
        let mut vector = Vec::with_capacity(v_cols.len());
        for (k, &c) in v_cols.iter().enumerate() {
            match num(c, &format!("v{}", k + 1))? {
                Some(v) => vector.push(v),
                None => break,
            }
        }
        if vector.len() != v_cols.len() {
            return Err(Error::RowDimension { row, expected: v_cols.len(), found: vector.len() });
        }
        let mut samples = Vec::new();
        for &c in &s_cols {
            if let Some(v) = num(c, "sample")? {
                samples.push(v);
            }
        }
        let raw = RawItem {
            id: id.to_string(),
            display: display.to_string(),
            vector,
            score_mean: num(mean_col, "score_mean")?,
            score_var: num(var_col, "score_var")?.unwrap_or(0.0),
            score_samples: (!samples.is_empty()).then_some(samples),
        };
        raw.validate(row)?;
        out.push(raw);
    }
    if out.is_empty() {
        return Err(Error::EmptyPool);
    }
    Ok(out)
}
