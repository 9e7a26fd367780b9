//! Response-time cost models, information-gain ratios and the
//! information-rate query configuration choice.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::DVector;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::belief::GaussianBelief;
use crate::dataset::ItemPool;
use crate::response::{QueryKind, ResponseParams};
use crate::selection::{disagreement, greedy_build_vectors, sample_committee, DisagreementSettings};
use crate::{Error, Result, Scalar};

/// `seconds = beta0 + beta1 * |S|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostLine {
    pub beta0: f64,
    pub beta1: f64,
}

impl CostLine {
    pub fn at(&self, size: usize) -> f64 {
        self.beta0 + self.beta1 * size as f64
    }
}

/// Per-kind linear response-time model. `Label` is constant (`beta1 = 0`);
/// `SelectLow` falls back to the `SelectHigh` line when it has none of its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub lines: BTreeMap<QueryKind, CostLine>,
    pub min_set_size: usize,
    pub max_set_size: usize,
}

pub const LABEL_SECONDS: f64 = 4.37;

impl CostModel {
    /// Fitted human response times: selection `4.01 + 0.63|S|`, ranking
    /// `-0.32 + 4.41|S|`, single label `4.37`, for `2 <= |S| <= 10`.
    pub fn standard() -> Self {
        let mut lines = BTreeMap::new();
        lines.insert(QueryKind::Label, CostLine { beta0: LABEL_SECONDS, beta1: 0.0 });
        lines.insert(QueryKind::SelectHigh, CostLine { beta0: 4.01, beta1: 0.63 });
        lines.insert(QueryKind::Rank, CostLine { beta0: -0.32, beta1: 4.41 });
        Self { lines, min_set_size: 2, max_set_size: 10 }
    }

    pub fn line(&self, kind: QueryKind) -> Option<CostLine> {
        self.lines.get(&kind).copied().or_else(|| match kind {
            QueryKind::SelectLow => self.lines.get(&QueryKind::SelectHigh).copied(),
            _ => None,
        })
    }

    /// Writes `kind,beta0,beta1` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::InvalidArgument(format!("cost model output: {e}"));
        w.write_record(["kind", "beta0", "beta1"]).map_err(io)?;
        for (kind, line) in &self.lines {
            w.write_record([kind.as_str().to_string(), line.beta0.to_string(), line.beta1.to_string()])
                .map_err(io)?;
        }
        w.flush().map_err(|e| Error::InvalidArgument(format!("cost model output: {e}")))?;
        Ok(())
    }

    /// Reads `kind,beta0,beta1` rows; the feasible size range defaults to `2..=10`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut lines = BTreeMap::new();
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        for (row, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse { row: row + 1, message: e.to_string() })?;
            let field = |i: usize| rec.get(i).ok_or_else(|| Error::Parse { row: row + 1, message: "missing column".into() });
            let kind: QueryKind = field(0)?.parse()?;
            let num = |i: usize| -> Result<f64> {
                field(i)?.parse().map_err(|e| Error::Parse { row: row + 1, message: format!("{e}") })
            };
            lines.insert(kind, CostLine { beta0: num(1)?, beta1: num(2)? });
        }
        Ok(Self { lines, min_set_size: 2, max_set_size: 10 })
    }
}

/// Predicted seconds for a `kind` query over `set_size` items.
pub fn predict_cost(model: &CostModel, kind: QueryKind, set_size: usize) -> Result<f64> {
    let line = model
        .line(kind)
        .ok_or_else(|| Error::Infeasible(format!("no cost model for {kind}")))?;
    let t = if kind == QueryKind::Label {
        line.beta0
    } else {
        if set_size < model.min_set_size || set_size > model.max_set_size {
            return Err(Error::Infeasible(format!(
                "{kind} with |S| = {set_size} outside {}..={}",
                model.min_set_size, model.max_set_size
            )));
        }
        line.at(set_size)
    };
    if t > 0.0 {
        Ok(t)
    } else {
        Err(Error::Infeasible(format!("{kind} with |S| = {set_size} has predicted time {t}")))
    }
}

/// One timed answer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostObservation {
    pub kind: QueryKind,
    pub set_size: usize,
    pub seconds: f64,
}

/// Ordinary least squares of seconds on `|S|`, separately per kind.
///
/// `Label` observations give a constant model (their mean). Kinds without
/// observations are absent, except that a missing `Label` line defaults to
/// the constant 4.37 s.
pub fn fit_cost_model(observations: &[CostObservation]) -> Result<CostModel> {
    let mut by_kind: BTreeMap<QueryKind, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for o in observations {
        if !o.seconds.is_finite() {
            return Err(Error::InvalidArgument("response time must be finite".into()));
        }
        let e = by_kind.entry(o.kind).or_default();
        e.0.push(o.set_size as f64);
        e.1.push(o.seconds);
    }
    let mut lines = BTreeMap::new();
    let (mut lo, mut hi) = (usize::MAX, 0);
    for (kind, (sizes, secs)) in &by_kind {
        let line = if *kind == QueryKind::Label {
            CostLine { beta0: secs.iter().sum::<f64>() / secs.len() as f64, beta1: 0.0 }
        } else {
            let (beta1, beta0) = crate::dataset::simple_ols(sizes, secs).ok_or_else(|| {
                Error::RankDeficient(format!("{kind} observations need at least two distinct set sizes"))
            })?;
            for &s in sizes {
                lo = lo.min(s as usize);
                hi = hi.max(s as usize);
            }
            CostLine { beta0, beta1 }
        };
        lines.insert(*kind, line);
    }
    lines.entry(QueryKind::Label).or_insert(CostLine { beta0: LABEL_SECONDS, beta1: 0.0 });
    if hi == 0 {
        (lo, hi) = (2, 10);
    }
    Ok(CostModel { lines, min_set_size: lo, max_set_size: hi })
}

/// Reads `kind,set_size,seconds` rows.
pub fn read_cost_observations<R: Read>(reader: R) -> Result<Vec<CostObservation>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    r.deserialize()
        .enumerate()
        .map(|(row, rec)| rec.map_err(|e: csv::Error| Error::Parse { row: row + 1, message: e.to_string() }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoRateRow {
    pub kind: QueryKind,
    pub set_size: usize,
    /// Information proxy relative to a single label query.
    pub ratio: f64,
    pub cost: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoRateTable {
    pub rows: Vec<InfoRateRow>,
}

impl InfoRateTable {
    /// Attaches predicted costs to `(kind, size, ratio)` cells; infeasible cells are dropped.
    pub fn from_ratios(ratios: &[RatioEstimate], costs: &CostModel) -> Self {
        let rows = ratios
            .iter()
            .filter_map(|r| {
                let cost = predict_cost(costs, r.kind, r.set_size).ok()?;
                Some(InfoRateRow { kind: r.kind, set_size: r.set_size, ratio: r.ratio, cost, rate: r.ratio / cost })
            })
            .collect();
        Self { rows }
    }
}

/// Argmax of `ratio / cost`; ties go to the lower cost, then the smaller set.
pub fn select_query_config(table: &InfoRateTable) -> Result<(QueryKind, usize)> {
    let mut best: Option<&InfoRateRow> = None;
    for row in table.rows.iter().filter(|r| r.cost > 0.0 && r.ratio / r.cost > 0.0) {
        let better = match best {
            None => true,
            Some(b) => {
                let (ra, rb) = (row.ratio / row.cost, b.ratio / b.cost);
                ra > rb || (ra == rb && (row.cost < b.cost || (row.cost == b.cost && row.set_size < b.set_size)))
            }
        };
        if better {
            best = Some(row);
        }
    }
    best.map(|r| (r.kind, r.set_size)).ok_or(Error::NoFeasibleQuery)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub kind: QueryKind,
    pub set_size: usize,
    /// Mean disagreement in bits over the probes.
    pub bits: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioSettings {
    pub committee_size: usize,
    /// Random candidate subset per probe; `None` uses the whole pool.
    pub candidates: Option<usize>,
    pub disagreement: DisagreementSettings,
    pub seed: u64,
}

impl Default for RatioSettings {
    fn default() -> Self {
        Self { committee_size: 50, candidates: Some(200), disagreement: DisagreementSettings::default(), seed: 0x7a71_0000 }
    }
}

/// Average committee disagreement of greedily built sets for every
/// `(kind, size)` cell, relative to the single-label cell.
///
/// Each belief in `probes` gets one committee and one candidate subset, shared
/// by all cells so that cells are compared on the same draws.
pub fn estimate_info_ratios<T: Scalar>(
    pool: &ItemPool<T>,
    probes: &[GaussianBelief<T>],
    grid: &[(QueryKind, usize)],
    params: &ResponseParams<T>,
    settings: &RatioSettings,
) -> Result<Vec<RatioEstimate>> {
    if grid.is_empty() || probes.is_empty() {
        return Err(Error::InvalidArgument("ratio estimation needs a nonempty grid and probe set".into()));
    }
    if !grid.iter().any(|(k, _)| *k == QueryKind::Label) {
        return Err(Error::InvalidArgument("grid must contain a label cell".into()));
    }
    let mut sums = vec![0.0; grid.len()];
    for (p, belief) in probes.iter().enumerate() {
        let probe_seed = settings.seed.wrapping_add(p as u64);
        let committee = sample_committee(belief, settings.committee_size, probe_seed)?;
        let all: Vec<&DVector<T>> = pool.items().iter().map(|it| &it.x).collect();
        let xs: Vec<&DVector<T>> = match settings.candidates {
            Some(n) if n < all.len() => {
                let mut rng = ChaCha8Rng::seed_from_u64(probe_seed ^ 0x5151);
                let mut idx = sample(&mut rng, all.len(), n).into_vec();
                idx.sort_unstable();
                idx.into_iter().map(|i| all[i]).collect()
            }
            _ => all,
        };
        for (cell, &(kind, size)) in grid.iter().enumerate() {
            let size = if kind == QueryKind::Label { 1 } else { size };
            let set = greedy_build_vectors(&xs, size, kind, &committee, params, &settings.disagreement)?;
            let chosen: Vec<&DVector<T>> = set.iter().map(|&i| xs[i]).collect();
            sums[cell] += disagreement(&chosen, kind, &committee, params, &settings.disagreement)?.bits.as_f64();
        }
    }
    let n = probes.len() as f64;
    let label_bits = grid
        .iter()
        .zip(&sums)
        .find(|((k, _), _)| *k == QueryKind::Label)
        .map(|(_, s)| s / n)
        .unwrap_or(0.0);
    if !(label_bits > 1e-12) {
        return Err(Error::ZeroInformation);
    }
    Ok(grid
        .iter()
        .zip(&sums)
        .map(|(&(kind, set_size), s)| {
            let bits = s / n;
            let ratio = if kind == QueryKind::Label { 1.0 } else { bits / label_bits };
            RatioEstimate { kind, set_size: if kind == QueryKind::Label { 1 } else { set_size }, bits, ratio }
        })
        .collect())
}

/// All kinds over `sizes`, plus the single-label cell.
pub fn default_grid(sizes: std::ops::RangeInclusive<usize>) -> Vec<(QueryKind, usize)> {
    let mut g = vec![(QueryKind::Label, 1)];
    for kind in [QueryKind::SelectHigh, QueryKind::SelectLow, QueryKind::Rank] {
        g.extend(sizes.clone().map(|s| (kind, s)));
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_model_values() {
        let m = CostModel::standard();
        assert!((predict_cost(&m, QueryKind::SelectHigh, 4).unwrap() - 6.53).abs() < 1e-12);
        assert!((predict_cost(&m, QueryKind::SelectLow, 4).unwrap() - 6.53).abs() < 1e-12);
        assert!((predict_cost(&m, QueryKind::Rank, 4).unwrap() - 17.32).abs() < 1e-12);
        assert_eq!(predict_cost(&m, QueryKind::Label, 7).unwrap(), 4.37);
        assert!(matches!(predict_cost(&m, QueryKind::Rank, 11), Err(Error::Infeasible(_))));
    }

    #[test]
    fn nonpositive_prediction_is_infeasible() {
        let mut m = CostModel::standard();
        m.lines.insert(QueryKind::Rank, CostLine { beta0: -10.0, beta1: 1.0 });
        assert!(matches!(predict_cost(&m, QueryKind::Rank, 3), Err(Error::Infeasible(_))));
    }

    #[test]
    fn exact_recovery_and_rank_deficiency() {
        let obs: Vec<CostObservation> = (2..=10)
            .flat_map(|s| {
                [
                    CostObservation { kind: QueryKind::SelectHigh, set_size: s, seconds: 4.01 + 0.63 * s as f64 },
                    CostObservation { kind: QueryKind::Rank, set_size: s, seconds: -0.32 + 4.41 * s as f64 },
                ]
            })
            .collect();
        let m = fit_cost_model(&obs).unwrap();
        let sel = m.line(QueryKind::SelectHigh).unwrap();
        let rank = m.line(QueryKind::Rank).unwrap();
        assert!((sel.beta0 - 4.01).abs() < 1e-9 && (sel.beta1 - 0.63).abs() < 1e-9);
        assert!((rank.beta0 + 0.32).abs() < 1e-9 && (rank.beta1 - 4.41).abs() < 1e-9);
        let single = [CostObservation { kind: QueryKind::Rank, set_size: 3, seconds: 9.0 }; 4];
        assert!(matches!(fit_cost_model(&single), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn csv_round_trip() {
        let m = CostModel::standard();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("kind,beta0,beta1\n"));
        assert_eq!(CostModel::read_csv(&buf[..]).unwrap(), m);
    }

    fn row(kind: QueryKind, set_size: usize, ratio: f64, cost: f64) -> InfoRateRow {
        InfoRateRow { kind, set_size, ratio, cost, rate: ratio / cost }
    }

    #[test]
    fn argmax_and_tie_breaks() {
        let t = InfoRateTable {
            rows: vec![
                row(QueryKind::Label, 1, 1.0, 4.0),
                row(QueryKind::SelectHigh, 2, 2.0, 8.0),
                row(QueryKind::SelectHigh, 3, 1.5, 6.0),
            ],
        };
        // all three tie at 0.25; the cheapest wins
        assert_eq!(select_query_config(&t).unwrap(), (QueryKind::Label, 1));
        let empty = InfoRateTable { rows: vec![row(QueryKind::Rank, 3, 0.0, 5.0)] };
        assert!(matches!(select_query_config(&empty), Err(Error::NoFeasibleQuery)));
    }
}
