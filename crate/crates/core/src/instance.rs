//! Domain data model: query instances, subtopic judgments, rankings, measure
//! parameters and weight vectors.
//!
//! Documents are addressed by their dense index inside a [`QueryInstance`];
//! string ids only matter at I/O boundaries.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Tolerance used when checking that subtopic probabilities sum to one.
pub const PROB_SUM_TOLERANCE: f64 = 1e-9;

/// Bag of terms for one document field: term -> raw count.
pub type TermBag = BTreeMap<String, u32>;

/// An ODP-style category path such as `Arts/Movies/Awards`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CategoryPath(pub Vec<String>);

impl CategoryPath {
    pub fn segments(&self) -> &[String] {
        &self.0
    }
}

impl FromStr for CategoryPath {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(CategoryPath(
            s.split('/')
                .map(str::trim)
                .filter(|seg| !seg.is_empty())
                .map(str::to_string)
                .collect(),
        ))
    }
}

impl fmt::Display for CategoryPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("/"))
    }
}

impl Serialize for CategoryPath {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CategoryPath {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(s.parse().unwrap_or_else(|never| match never {}))
    }
}

/// Raw, pre-tokenized document inputs consumed by the diversity feature
/// extractors. Every part is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<TermBag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<TermBag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<TermBag>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<CategoryPath>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inlinks: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outlinks: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
}

impl DocumentMeta {
    pub fn is_empty(&self) -> bool {
        *self == DocumentMeta::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentRecord {
    pub doc_id: String,
    pub relevance_features: Vec<f64>,
    pub meta: DocumentMeta,
}

impl DocumentRecord {
    pub fn new(doc_id: impl Into<String>, relevance_features: Vec<f64>) -> Self {
        Self {
            doc_id: doc_id.into(),
            relevance_features,
            meta: DocumentMeta::default(),
        }
    }
}

/// Per-subtopic binary relevance plus subtopic probabilities.
///
/// `rel[i][j]` is true when document `j` is relevant to subtopic `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubtopicJudgments {
    pub probs: Vec<f64>,
    pub rel: Vec<Vec<bool>>,
}

impl SubtopicJudgments {
    /// Judgments with uniform subtopic probabilities.
    pub fn uniform(rel: Vec<Vec<bool>>) -> Self {
        let m = rel.len().max(1);
        Self {
            probs: vec![1.0 / m as f64; rel.len()],
            rel,
        }
    }

    pub fn num_subtopics(&self) -> usize {
        self.rel.len()
    }

    #[inline]
    pub fn is_relevant(&self, subtopic: usize, doc: usize) -> bool {
        self.rel[subtopic][doc]
    }

    /// True when at least one document is relevant to at least one subtopic
    /// with non-zero probability.
    pub fn has_relevant(&self) -> bool {
        self.rel
            .iter()
            .zip(&self.probs)
            .any(|(row, &p)| p > 0.0 && row.iter().any(|&g| g))
    }
}

/// Dense symmetric `n x n x F` tensor of pairwise diversity features.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseTensor {
    n: usize,
    channels: usize,
    data: Vec<f64>,
}

impl PairwiseTensor {
    pub fn zeros(n: usize, channels: usize) -> Self {
        Self {
            n,
            channels,
            data: vec![0.0; n * n * channels],
        }
    }

    pub fn num_docs(&self) -> usize {
        self.n
    }

    pub fn num_channels(&self) -> usize {
        self.channels
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        (i * self.n + j) * self.channels
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, channel: usize) -> f64 {
        self.data[self.offset(i, j) + channel]
    }

    /// All channels for the ordered pair `(i, j)`.
    #[inline]
    pub fn pair(&self, i: usize, j: usize) -> &[f64] {
        let o = self.offset(i, j);
        &self.data[o..o + self.channels]
    }

    /// Raw write of a single cell; callers are responsible for symmetry.
    pub fn set(&mut self, i: usize, j: usize, channel: usize, value: f64) {
        let o = self.offset(i, j) + channel;
        self.data[o] = value;
    }

    pub fn set_symmetric(&mut self, i: usize, j: usize, channel: usize, value: f64) {
        self.set(i, j, channel, value);
        self.set(j, i, channel, value);
    }

    /// Non-zero upper-triangular entries `(i, j, channel, value)` with `i < j`.
    pub fn upper_entries(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            (i + 1..self.n).flat_map(move |j| {
                (0..self.channels).filter_map(move |c| {
                    let v = self.get(i, j, c);
                    (v != 0.0).then_some((i, j, c, v))
                })
            })
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryInstance {
    pub query_id: String,
    pub docs: Vec<DocumentRecord>,
    pub pairwise: PairwiseTensor,
    pub judgments: SubtopicJudgments,
}

impl QueryInstance {
    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn relevance_dim(&self) -> usize {
        self.docs.first().map_or(0, |d| d.relevance_features.len())
    }

    pub fn diversity_dim(&self) -> usize {
        self.pairwise.num_channels()
    }

    pub fn doc_index(&self, doc_id: &str) -> Option<usize> {
        self.docs.iter().position(|d| d.doc_id == doc_id)
    }
}

/// An ordered list of distinct document indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ranking(Vec<usize>);

impl Ranking {
    /// Checks distinctness and range against a candidate set of `n` documents.
    pub fn new(positions: Vec<usize>, n: usize) -> Result<Self> {
        let ranking = Ranking(positions);
        ranking.check(n)?;
        Ok(ranking)
    }

    pub(crate) fn from_vec_unchecked(positions: Vec<usize>) -> Self {
        Ranking(positions)
    }

    pub fn empty() -> Self {
        Ranking(Vec::new())
    }

    pub fn check(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for (rank, &d) in self.0.iter().enumerate() {
            if d >= n {
                return Err(Error::InvalidRanking(format!(
                    "index {d} at rank {} out of range (n={n})",
                    rank + 1
                )));
            }
            if std::mem::replace(&mut seen[d], true) {
                return Err(Error::InvalidRanking(format!(
                    "duplicate index {d} at rank {}",
                    rank + 1
                )));
            }
        }
        Ok(())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, usize> {
        self.0.iter()
    }

    /// Prefix of at most `k` positions.
    pub fn truncated(&self, k: usize) -> Ranking {
        Ranking(self.0[..k.min(self.0.len())].to_vec())
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

impl<'a> IntoIterator for &'a Ranking {
    type Item = &'a usize;
    type IntoIter = std::slice::Iter<'a, usize>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// The cascade diversity measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Measure {
    #[serde(rename = "alpha-ndcg")]
    AlphaNdcg,
    #[serde(rename = "err-ia")]
    ErrIa,
    #[serde(rename = "nrbp")]
    Nrbp,
}

impl Measure {
    pub const ALL: [Measure; 3] = [Measure::ErrIa, Measure::AlphaNdcg, Measure::Nrbp];

    pub fn name(self) -> &'static str {
        match self {
            Measure::AlphaNdcg => "alpha-ndcg",
            Measure::ErrIa => "err-ia",
            Measure::Nrbp => "nrbp",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "alpha-ndcg" | "andcg" => Ok(Measure::AlphaNdcg),
            "err-ia" | "erria" => Ok(Measure::ErrIa),
            "nrbp" => Ok(Measure::Nrbp),
            other => Err(Error::InvalidParameter(format!("unknown measure `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureParams {
    pub measure: Measure,
    pub alpha: f64,
    pub beta: f64,
    pub cutoff: usize,
}

impl Default for MeasureParams {
    fn default() -> Self {
        Self {
            measure: Measure::ErrIa,
            alpha: 0.5,
            beta: 0.5,
            cutoff: 20,
        }
    }
}

impl MeasureParams {
    pub fn with_measure(measure: Measure) -> Self {
        Self {
            measure,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0,1], got {}",
                self.alpha
            )));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "beta must lie in (0,1), got {}",
                self.beta
            )));
        }
        if self.cutoff == 0 {
            return Err(Error::InvalidParameter("cutoff must be >= 1".into()));
        }
        Ok(())
    }
}

/// Linear model weights: one block for relevance features, one for
/// pairwise diversity channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub w_rel: Vec<f64>,
    pub w_div: Vec<f64>,
}

impl WeightVector {
    pub fn zeros(relevance_dim: usize, diversity_dim: usize) -> Self {
        Self {
            w_rel: vec![0.0; relevance_dim],
            w_div: vec![0.0; diversity_dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.w_rel.len() + self.w_div.len()
    }

    /// Splits a flat `[rel | div]` vector.
    pub fn from_flat(flat: &[f64], relevance_dim: usize) -> Self {
        Self {
            w_rel: flat[..relevance_dim].to_vec(),
            w_div: flat[relevance_dim..].to_vec(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.w_rel.iter().chain(&self.w_div).copied().collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            w_rel: self.w_rel.iter().map(|w| w * c).collect(),
            w_div: self.w_div.iter().map(|w| w * c).collect(),
        }
    }

    pub fn check_dims(&self, relevance_dim: usize, diversity_dim: usize) -> Result<()> {
        if self.w_rel.len() != relevance_dim {
            return Err(Error::DimensionMismatch {
                what: "relevance weights",
                expected: relevance_dim,
                actual: self.w_rel.len(),
            });
        }
        if self.w_div.len() != diversity_dim {
            return Err(Error::DimensionMismatch {
                what: "diversity weights",
                expected: diversity_dim,
                actual: self.w_div.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RelevanceDim {
        doc: usize,
        expected: usize,
        actual: usize,
    },
    RelevanceRange {
        doc: usize,
        feature: usize,
        value: f64,
    },
    PairwiseShape {
        expected_docs: usize,
        actual_docs: usize,
    },
    PairwiseChannels {
        expected: usize,
        actual: usize,
    },
    AsymmetricPairwise {
        i: usize,
        j: usize,
        channel: usize,
    },
    NonZeroDiagonal {
        doc: usize,
        channel: usize,
    },
    PairwiseRange {
        i: usize,
        j: usize,
        channel: usize,
        value: f64,
    },
    NoSubtopics,
    ProbsLength {
        expected: usize,
        actual: usize,
    },
    NegativeProb {
        subtopic: usize,
    },
    ProbsNotNormalized {
        sum: f64,
    },
    RelRowLength {
        subtopic: usize,
        expected: usize,
        actual: usize,
    },
    DuplicateDocId {
        doc_id: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RelevanceDim {
                doc,
                expected,
                actual,
            } => write!(
                f,
                "relevance feature length mismatch: doc {doc} has {actual}, expected {expected}"
            ),
            Violation::RelevanceRange {
                doc,
                feature,
                value,
            } => write!(
                f,
                "relevance feature out of [0,1]: doc {doc} feature {feature} = {value}"
            ),
            Violation::PairwiseShape {
                expected_docs,
                actual_docs,
            } => write!(
                f,
                "pairwise tensor covers {actual_docs} docs, expected {expected_docs}"
            ),
            Violation::PairwiseChannels { expected, actual } => {
                write!(f, "pairwise tensor has {actual} channels, expected {expected}")
            }
            Violation::AsymmetricPairwise { i, j, channel } => {
                write!(f, "asymmetric pairwise at ({i},{j}) channel {channel}")
            }
            Violation::NonZeroDiagonal { doc, channel } => {
                write!(f, "non-zero pairwise diagonal at doc {doc} channel {channel}")
            }
            Violation::PairwiseRange {
                i,
                j,
                channel,
                value,
            } => write!(
                f,
                "pairwise value out of [0,1] at ({i},{j}) channel {channel}: {value}"
            ),
            Violation::NoSubtopics => write!(f, "no subtopics"),
            Violation::ProbsLength { expected, actual } => {
                write!(f, "probs has {actual} entries, expected {expected}")
            }
            Violation::NegativeProb { subtopic } => {
                write!(f, "negative probability for subtopic {subtopic}")
            }
            Violation::ProbsNotNormalized { sum } => {
                write!(f, "probs not normalized (sum {sum})")
            }
            Violation::RelRowLength {
                subtopic,
                expected,
                actual,
            } => write!(
                f,
                "rel row for subtopic {subtopic} has {actual} entries, expected {expected}"
            ),
            Violation::DuplicateDocId { doc_id } => write!(f, "duplicate doc_id `{doc_id}`"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("ok");
        }
        let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&msgs.join("; "))
    }
}

/// Checks every structural invariant of a query instance. The relevance
/// dimension is taken from the first document.
pub fn validate_instance(q: &QueryInstance) -> ValidationReport {
    validate_instance_dims(q, q.relevance_dim(), q.diversity_dim())
}

/// Like [`validate_instance`] but against declared dimensions.
pub fn validate_instance_dims(
    q: &QueryInstance,
    relevance_dim: usize,
    diversity_dim: usize,
) -> ValidationReport {
    let mut violations = Vec::new();
    let n = q.num_docs();

    let mut ids = BTreeSet::new();
    for (d, doc) in q.docs.iter().enumerate() {
        if !ids.insert(doc.doc_id.as_str()) {
            violations.push(Violation::DuplicateDocId {
                doc_id: doc.doc_id.clone(),
            });
        }
        if doc.relevance_features.len() != relevance_dim {
            violations.push(Violation::RelevanceDim {
                doc: d,
                expected: relevance_dim,
                actual: doc.relevance_features.len(),
            });
        }
        for (f, &v) in doc.relevance_features.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                violations.push(Violation::RelevanceRange {
                    doc: d,
                    feature: f,
                    value: v,
                });
            }
        }
    }

    let pw = &q.pairwise;
    if pw.num_docs() != n {
        violations.push(Violation::PairwiseShape {
            expected_docs: n,
            actual_docs: pw.num_docs(),
        });
    } else {
        if pw.num_channels() != diversity_dim {
            violations.push(Violation::PairwiseChannels {
                expected: diversity_dim,
                actual: pw.num_channels(),
            });
        }
        for i in 0..n {
            for c in 0..pw.num_channels() {
                if pw.get(i, i, c) != 0.0 {
                    violations.push(Violation::NonZeroDiagonal { doc: i, channel: c });
                }
            }
            for j in i + 1..n {
                for c in 0..pw.num_channels() {
                    let a = pw.get(i, j, c);
                    let b = pw.get(j, i, c);
                    if a != b {
                        violations.push(Violation::AsymmetricPairwise { i, j, channel: c });
                    }
                    for (x, y, v) in [(i, j, a), (j, i, b)] {
                        if !(0.0..=1.0).contains(&v) {
                            violations.push(Violation::PairwiseRange {
                                i: x,
                                j: y,
                                channel: c,
                                value: v,
                            });
                        }
                    }
                }
            }
        }
    }

    let judg = &q.judgments;
    let m = judg.num_subtopics();
    if m == 0 {
        violations.push(Violation::NoSubtopics);
    }
    if judg.probs.len() != m {
        violations.push(Violation::ProbsLength {
            expected: m,
            actual: judg.probs.len(),
        });
    }
    for (i, &p) in judg.probs.iter().enumerate() {
        if p < 0.0 || p.is_nan() {
            violations.push(Violation::NegativeProb { subtopic: i });
        }
    }
    if m > 0 {
        let sum: f64 = judg.probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE || sum.is_nan() {
            violations.push(Violation::ProbsNotNormalized { sum });
        }
    }
    for (i, row) in judg.rel.iter().enumerate() {
        if row.len() != n {
            violations.push(Violation::RelRowLength {
                subtopic: i,
                expected: n,
                actual: row.len(),
            });
        }
    }

    ValidationReport { violations }
}
