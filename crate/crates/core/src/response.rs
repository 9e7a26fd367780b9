//! Annotator response models: label logistic, exemplar-selection logit and
//! Plackett–Luce ranking with a positive/negative threshold.

use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dataset::EmbeddedItem;
use crate::math::{log_sigmoid, log_sum_exp};
use crate::{Error, Result, Scalar};

/// Binary label, `+1` or `-1` on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    /// `sign(v)` with `sign(0) = +1`.
    pub fn from_sign<T: Scalar>(v: T) -> Self {
        if v >= T::zero() {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn signed<T: Scalar>(self) -> T {
        match self {
            Label::Positive => T::one(),
            Label::Negative => -T::one(),
        }
    }

    /// `{0, 1}` encoding used by the variational label update.
    pub fn as_unit<T: Scalar>(self) -> T {
        match self {
            Label::Positive => T::one(),
            Label::Negative => T::zero(),
        }
    }
}

impl From<Label> for i8 {
    fn from(l: Label) -> i8 {
        match l {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }
}

impl TryFrom<i8> for Label {
    type Error = Error;

    fn try_from(v: i8) -> Result<Self> {
        match v {
            1 => Ok(Label::Positive),
            -1 => Ok(Label::Negative),
            other => Err(Error::InvalidResponse(format!("label must be -1 or 1, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Label,
    SelectHigh,
    SelectLow,
    Rank,
}

impl QueryKind {
    pub const ALL: [QueryKind; 4] = [QueryKind::Label, QueryKind::SelectHigh, QueryKind::SelectLow, QueryKind::Rank];

    pub fn as_str(self) -> &'static str {
        match self {
            QueryKind::Label => "label",
            QueryKind::SelectHigh => "select_high",
            QueryKind::SelectLow => "select_low",
            QueryKind::Rank => "rank",
        }
    }

    pub fn is_selection(self) -> bool {
        matches!(self, QueryKind::SelectHigh | QueryKind::SelectLow)
    }

    /// Sign applied to the choice utilities: `+1` for highest-score choices, `-1` for lowest.
    pub fn choice_sign<T: Scalar>(self) -> T {
        match self {
            QueryKind::SelectLow => -T::one(),
            _ => T::one(),
        }
    }
}

impl fmt::Display for QueryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for QueryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        QueryKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown query kind {s:?}")))
    }
}

/// Likelihood scales: `w` for labels, `K = a / sigma` for choices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseParams<T> {
    pub w: T,
    pub a: T,
    pub sigma: T,
}

impl<T: Scalar> ResponseParams<T> {
    pub fn new(w: T, a: T, sigma: T) -> Result<Self> {
        if !(sigma > T::zero()) || !w.is_finite() || !a.is_finite() {
            return Err(Error::InvalidArgument("response params need sigma > 0 and finite w, a".into()));
        }
        Ok(Self { w, a, sigma })
    }

    /// `K = a / sigma`.
    pub fn k(&self) -> T {
        self.a / self.sigma
    }
}

/// A question posed to the annotator over an ordered item set.
#[derive(Debug, Clone, PartialEq)]
pub struct Query<T: Scalar> {
    kind: QueryKind,
    items: Vec<EmbeddedItem<T>>,
}

impl<T: Scalar> Query<T> {
    pub fn new(kind: QueryKind, items: Vec<EmbeddedItem<T>>) -> Result<Self> {
        match (kind, items.len()) {
            (QueryKind::Label, 1) => {}
            (QueryKind::Label, n) => {
                return Err(Error::InvalidArgument(format!("label query takes one item, got {n}")))
            }
            (_, n) if n < 2 => {
                return Err(Error::InvalidArgument(format!("{kind} query needs at least two items, got {n}")))
            }
            _ => {}
        }
        for (i, it) in items.iter().enumerate() {
            if items[..i].iter().any(|o| o.id == it.id) {
                return Err(Error::DuplicateId(it.id.clone()));
            }
            if it.dim() != items[0].dim() {
                return Err(Error::DimensionMismatch { expected: items[0].dim(), found: it.dim() });
            }
        }
        Ok(Self { kind, items })
    }

    pub fn kind(&self) -> QueryKind {
        self.kind
    }

    pub fn items(&self) -> &[EmbeddedItem<T>] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn vectors(&self) -> Vec<&DVector<T>> {
        self.items.iter().map(|it| &it.x).collect()
    }

    /// `x_i^T theta` for every item.
    pub fn projections(&self, theta: &DVector<T>) -> Result<Vec<T>> {
        self.items.iter().map(|it| checked_dot(&it.x, theta)).collect()
    }
}

/// An annotator answer. Indices refer to positions in the query's item list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Response {
    Label { y: Label },
    Selection { index: usize, y: Label },
    /// `order` is best-first; positions `< threshold` are labeled positive.
    Ranking { order: Vec<usize>, threshold: usize },
}

impl Response {
    /// Checks the answer shape against the query it answers.
    pub fn validate(&self, kind: QueryKind, set_size: usize) -> Result<()> {
        match (self, kind) {
            (Response::Label { .. }, QueryKind::Label) => Ok(()),
            (Response::Selection { index, .. }, QueryKind::SelectHigh | QueryKind::SelectLow) => {
                if *index < set_size {
                    Ok(())
                } else {
                    Err(Error::InvalidResponse(format!("index {index} out of range for {set_size} items")))
                }
            }
            (Response::Ranking { order, threshold }, QueryKind::Rank) => {
                validate_permutation(order, set_size)?;
                if *threshold > set_size {
                    return Err(Error::InvalidResponse(format!(
                        "threshold {threshold} out of range 0..={set_size}"
                    )));
                }
                Ok(())
            }
            _ => Err(Error::KindMismatch(kind.to_string())),
        }
    }
}

pub fn validate_permutation(order: &[usize], n: usize) -> Result<()> {
    if order.len() != n {
        return Err(Error::InvalidResponse(format!("order has {} entries, expected {n}", order.len())));
    }
    let mut seen = vec![false; n];
    for &i in order {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidResponse(format!("order {order:?} is not a permutation of 0..{n}")));
        }
    }
    Ok(())
}

pub(crate) fn checked_dot<T: Scalar>(x: &DVector<T>, theta: &DVector<T>) -> Result<T> {
    if x.len() != theta.len() {
        return Err(Error::DimensionMismatch { expected: theta.len(), found: x.len() });
    }
    Ok(x.dot(theta))
}

/// `log P[y | x, theta]` from the projection `z = theta^T x`, with
/// `P[y = +1] = 1 / (1 + exp(w z))`.
pub fn label_log_prob<T: Scalar>(z: T, w: T, y: Label) -> T {
    match y {
        Label::Positive => log_sigmoid(-w * z),
        Label::Negative => log_sigmoid(w * z),
    }
}

/// `P[y | x, theta] = (1 + exp(w theta^T x))^{-1}` for `y = +1`, its complement for `y = -1`.
pub fn label_likelihood<T: Scalar>(x: &DVector<T>, theta: &DVector<T>, w: T, y: Label) -> Result<T> {
    Ok(label_log_prob(checked_dot(x, theta)?, w, y).exp())
}

/// Log choice probabilities over a set given utilities `u_j = s K x_j^T theta`.
pub fn choice_log_probs<T: Scalar>(utilities: &[T]) -> Vec<T> {
    let lse = log_sum_exp(utilities);
    utilities.iter().map(|&u| u - lse).collect()
}

/// Plackett–Luce log probability of `order` (best first) under `utilities`.
pub fn plackett_luce_log_prob<T: Scalar>(utilities: &[T], order: &[usize]) -> T {
    let mut total = T::zero();
    let remaining: Vec<T> = order.iter().map(|&i| utilities[i]).collect();
    // stage j chooses order[j] among order[j..]
    for j in 0..order.len().saturating_sub(1) {
        let lse = log_sum_exp(&remaining[j..]);
        total += remaining[j] - lse;
    }
    total
}

/// Unnormalized log weights `sum_{j<l} log p_j + sum_{j>=l} log(1-p_j)` for
/// every threshold `l = 0..=n`, given the positive-label log probabilities in
/// ranked order.
pub fn threshold_log_weights<T: Scalar>(log_pos: &[T], log_neg: &[T]) -> Vec<T> {
    let n = log_pos.len();
    let mut out = Vec::with_capacity(n + 1);
    let mut acc: T = log_neg.iter().fold(T::zero(), |a, &b| a + b);
    out.push(acc);
    for j in 0..n {
        acc += log_pos[j] - log_neg[j];
        out.push(acc);
    }
    out
}

/// Exemplar selection probability: softmax of `s K x_j^T theta` at `index`,
/// `s = +1` for `SelectHigh`, `-1` for `SelectLow`.
pub fn selection_likelihood<T: Scalar>(
    index: usize,
    query: &Query<T>,
    theta: &DVector<T>,
    params: &ResponseParams<T>,
) -> Result<T> {
    if !query.kind().is_selection() {
        return Err(Error::KindMismatch(query.kind().to_string()));
    }
    if index >= query.len() {
        return Err(Error::InvalidResponse(format!("index {index} out of range")));
    }
    let utils = choice_utilities(query, theta, params)?;
    Ok(choice_log_probs(&utils)[index].exp())
}

/// Plackett–Luce ranking probability with stage utilities `K x^T theta`.
pub fn ranking_likelihood<T: Scalar>(
    order: &[usize],
    query: &Query<T>,
    theta: &DVector<T>,
    params: &ResponseParams<T>,
) -> Result<T> {
    validate_permutation(order, query.len())?;
    let k = params.k();
    let utils: Vec<T> = query.projections(theta)?.into_iter().map(|z| k * z).collect();
    Ok(plackett_luce_log_prob(&utils, order).exp())
}

fn choice_utilities<T: Scalar>(query: &Query<T>, theta: &DVector<T>, params: &ResponseParams<T>) -> Result<Vec<T>> {
    let sk = query.kind().choice_sign::<T>() * params.k();
    Ok(query.projections(theta)?.into_iter().map(|z| sk * z).collect())
}

/// Probability of a complete answer.
///
/// Labels and selections multiply the choice probability by the label
/// probability of the chosen item. For rankings, the label part is the
/// product of per-item label probabilities over the threshold pattern,
/// renormalized over the `|S| + 1` thresholds so that the answer space
/// `(order, threshold)` carries total mass one.
pub fn response_likelihood<T: Scalar>(
    resp: &Response,
    query: &Query<T>,
    theta: &DVector<T>,
    params: &ResponseParams<T>,
) -> Result<T> {
    resp.validate(query.kind(), query.len())?;
    match resp {
        Response::Ranking { order, threshold } => {
            let z = query.projections(theta)?;
            let k = params.k();
            let utils: Vec<T> = z.iter().map(|&v| k * v).collect();
            let (lp, ln): (Vec<T>, Vec<T>) = order
                .iter()
                .map(|&i| (label_log_prob(z[i], params.w, Label::Positive), label_log_prob(z[i], params.w, Label::Negative)))
                .unzip();
            let weights = threshold_log_weights(&lp, &ln);
            let label_part = weights[*threshold] - log_sum_exp(&weights);
            Ok((plackett_luce_log_prob(&utils, order) + label_part).exp())
        }
        _ => response_factor(resp, query, theta, params),
    }
}

/// Product of the per-factor likelihoods as used by the sequential posterior
/// updates: for rankings this is the Plackett–Luce term times the unnormalized
/// label product. Equals [`response_likelihood`] for labels and selections.
pub fn response_factor<T: Scalar>(
    resp: &Response,
    query: &Query<T>,
    theta: &DVector<T>,
    params: &ResponseParams<T>,
) -> Result<T> {
    resp.validate(query.kind(), query.len())?;
    let z = query.projections(theta)?;
    let log_p = match resp {
        Response::Label { y } => label_log_prob(z[0], params.w, *y),
        Response::Selection { index, y } => {
            let sk = query.kind().choice_sign::<T>() * params.k();
            let utils: Vec<T> = z.iter().map(|&v| sk * v).collect();
            choice_log_probs(&utils)[*index] + label_log_prob(z[*index], params.w, *y)
        }
        Response::Ranking { order, threshold } => {
            let k = params.k();
            let utils: Vec<T> = z.iter().map(|&v| k * v).collect();
            let labels = order.iter().enumerate().fold(T::zero(), |acc, (pos, &i)| {
                let y = if pos < *threshold { Label::Positive } else { Label::Negative };
                acc + label_log_prob(z[i], params.w, y)
            });
            plackett_luce_log_prob(&utils, order) + labels
        }
    };
    Ok(log_p.exp())
}
