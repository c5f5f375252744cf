//! Pairwise diversity features computed from raw document fields.

mod distance;
mod plsa;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use distance::{
    cosine_dissim, cosine_dissim_dense, link_dissim, odp_distance, registered_domain, tfidf_vectors,
    url_dissim, TermVector, ODP_NEUTRAL,
};
pub use plsa::{plsa_fit, topic_distance, Corpus, PlsaConfig, TopicModel};

use crate::error::{Error, Result};
use crate::instance::{DocumentRecord, PairwiseTensor, QueryInstance, TermBag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Topic,
    Text,
    Title,
    Anchor,
    Odp,
    Link,
    Url,
}

impl Channel {
    pub const ALL: [Channel; 7] = [
        Channel::Topic,
        Channel::Text,
        Channel::Title,
        Channel::Anchor,
        Channel::Odp,
        Channel::Link,
        Channel::Url,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Topic => "topic",
            Channel::Text => "text",
            Channel::Title => "title",
            Channel::Anchor => "anchor",
            Channel::Odp => "odp",
            Channel::Link => "link",
            Channel::Url => "url",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Channel::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown feature channel `{s}`")))
    }
}

pub fn channel_names(channels: &[Channel]) -> Vec<String> {
    channels.iter().map(|c| c.name().to_owned()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub channels: Vec<Channel>,
    /// Values kept per document and channel before symmetrization.
    pub top_t: usize,
    pub plsa: PlsaConfig,
    /// Fit a separate topic model on each query's candidates.
    pub plsa_per_query: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            channels: Channel::ALL.to_vec(),
            top_t: 100,
            plsa: PlsaConfig::default(),
            plsa_per_query: false,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::InvalidParameter("no feature channels enabled".into()));
        }
        let mut seen = self.channels.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.channels.len() {
            return Err(Error::InvalidParameter("duplicate feature channel".into()));
        }
        if self.top_t == 0 {
            return Err(Error::InvalidParameter("top-t must be at least 1".into()));
        }
        if self.plsa.num_topics == 0 {
            return Err(Error::InvalidParameter("number of topics must be at least 1".into()));
        }
        Ok(())
    }
}

/// Every term of a document, summed over body, title and anchor.
fn all_terms(doc: &DocumentRecord) -> TermBag {
    let mut out = TermBag::new();
    for bag in [&doc.meta.body, &doc.meta.title, &doc.meta.anchor].into_iter().flatten() {
        for (t, &c) in bag {
            *out.entry(t.clone()).or_default() += c;
        }
    }
    out
}

/// Builds a term-count matrix over `docs`, in order.
pub fn build_corpus<'a>(docs: impl IntoIterator<Item = &'a DocumentRecord>) -> Corpus {
    let bags: Vec<TermBag> = docs.into_iter().map(all_terms).collect();
    let mut vocab: BTreeMap<&str, usize> = BTreeMap::new();
    for bag in &bags {
        for t in bag.keys() {
            vocab.entry(t.as_str()).or_default();
        }
    }
    for (i, v) in vocab.values_mut().enumerate() {
        *v = i;
    }
    let rows = bags
        .iter()
        .map(|bag| {
            bag.iter()
                .filter(|(_, &c)| c > 0)
                .map(|(t, &c)| (vocab[t.as_str()], c as f64))
                .collect()
        })
        .collect();
    Corpus {
        vocab_size: vocab.len(),
        rows,
    }
}

/// Topic rows for each document of each query. Fitted once over the union
/// of all candidate sets (documents shared between queries by id count
/// once), or per query when configured.
pub fn topic_rows(queries: &[QueryInstance], cfg: &FeatureConfig) -> Result<Vec<Vec<Vec<f64>>>> {
    if cfg.plsa_per_query {
        return queries
            .par_iter()
            .map(|q| {
                if q.docs.is_empty() {
                    return Ok(Vec::new());
                }
                let corpus = build_corpus(&q.docs);
                Ok(plsa_fit(&corpus, &cfg.plsa)?.doc_topic)
            })
            .collect();
    }
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    let mut unique: Vec<&DocumentRecord> = Vec::new();
    for q in queries {
        for d in &q.docs {
            index.entry(d.doc_id.as_str()).or_insert_with(|| {
                unique.push(d);
                unique.len() - 1
            });
        }
    }
    if unique.is_empty() {
        return Ok(queries.iter().map(|_| Vec::new()).collect());
    }
    let tm = plsa_fit(&build_corpus(unique), &cfg.plsa)?;
    Ok(queries
        .iter()
        .map(|q| {
            q.docs
                .iter()
                .map(|d| tm.doc_topic[index[d.doc_id.as_str()]].clone())
                .collect()
        })
        .collect())
}

/// Unsparsified, unnormalized channel values for one candidate set.
pub fn raw_pairwise(docs: &[DocumentRecord], topics: &[Vec<f64>], channels: &[Channel]) -> Result<PairwiseTensor> {
    let n = docs.len();
    if channels.contains(&Channel::Topic) && topics.len() != n {
        return Err(Error::DimensionMismatch {
            what: "topic rows",
            expected: n,
            actual: topics.len(),
        });
    }
    let field_vectors = |pick: fn(&DocumentRecord) -> Option<&TermBag>| {
        tfidf_vectors(&docs.iter().map(pick).collect::<Vec<_>>())
    };
    let mut text = Vec::new();
    let mut title = Vec::new();
    let mut anchor = Vec::new();
    for c in channels {
        match c {
            Channel::Text => text = field_vectors(|d| d.meta.body.as_ref()),
            Channel::Title => title = field_vectors(|d| d.meta.title.as_ref()),
            Channel::Anchor => anchor = field_vectors(|d| d.meta.anchor.as_ref()),
            _ => {}
        }
    }
    let value = |c: Channel, i: usize, j: usize| -> f64 {
        match c {
            Channel::Topic => topic_distance(&topics[i], &topics[j]) / std::f64::consts::SQRT_2,
            Channel::Text => cosine_dissim(&text[i], &text[j]),
            Channel::Title => cosine_dissim(&title[i], &title[j]),
            Channel::Anchor => cosine_dissim(&anchor[i], &anchor[j]),
            Channel::Odp => odp_distance(&docs[i].meta.categories, &docs[j].meta.categories),
            Channel::Link => link_dissim(&docs[i], &docs[j]),
            Channel::Url => match (&docs[i].meta.url, &docs[j].meta.url) {
                (Some(a), Some(b)) => url_dissim(a, b),
                _ => 1.0,
            },
        }
    };
    let rows: Vec<Vec<(usize, usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = Vec::with_capacity((n - i) * channels.len());
            for j in i + 1..n {
                for (ci, &c) in channels.iter().enumerate() {
                    row.push((j, ci, value(c, i, j)));
                }
            }
            row
        })
        .collect();
    let mut out = PairwiseTensor::zeros(n, channels.len());
    for (i, row) in rows.into_iter().enumerate() {
        for (j, c, v) in row {
            out.set_symmetric(i, j, c, v);
        }
    }
    Ok(out)
}

/// Keeps, per document and channel, the `top_t` largest values (ties to
/// the lower index); a pair survives if either endpoint keeps it. Each
/// channel is then min-max scaled over the surviving pairs, with a zero
/// range mapping to 0.
pub fn sparsify_and_normalize(raw: &PairwiseTensor, top_t: usize) -> PairwiseTensor {
    let n = raw.num_docs();
    let f = raw.num_channels();
    let mut keep = vec![false; n * n * f];
    let idx = |i: usize, j: usize, c: usize| (i * n + j) * f + c;
    if n > top_t + 1 {
        let mut order: Vec<usize> = Vec::with_capacity(n);
        for i in 0..n {
            for c in 0..f {
                order.clear();
                order.extend((0..n).filter(|&j| j != i));
                order.sort_by(|&a, &b| raw.get(i, b, c).total_cmp(&raw.get(i, a, c)).then(a.cmp(&b)));
                for &j in order.iter().take(top_t) {
                    keep[idx(i, j, c)] = true;
                    keep[idx(j, i, c)] = true;
                }
            }
        }
    } else {
        keep.fill(true);
    }

    let mut out = PairwiseTensor::zeros(n, f);
    for c in 0..f {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            for j in i + 1..n {
                if keep[idx(i, j, c)] {
                    let v = raw.get(i, j, c);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
        let range = hi - lo;
        if !(range > 0.0) {
            continue;
        }
        for i in 0..n {
            for j in i + 1..n {
                if keep[idx(i, j, c)] {
                    let v = ((raw.get(i, j, c) - lo) / range).clamp(0.0, 1.0);
                    out.set_symmetric(i, j, c, v);
                }
            }
        }
    }
    out
}

/// Raw channels followed by sparsification and normalization.
pub fn assemble_pairwise(
    docs: &[DocumentRecord],
    topics: &[Vec<f64>],
    cfg: &FeatureConfig,
) -> Result<PairwiseTensor> {
    cfg.validate()?;
    let raw = raw_pairwise(docs, topics, &cfg.channels)?;
    Ok(sparsify_and_normalize(&raw, cfg.top_t))
}

/// Replaces every query's pairwise tensor with features computed from the
/// documents' raw fields.
pub fn extract_features(queries: &mut [QueryInstance], cfg: &FeatureConfig) -> Result<()> {
    cfg.validate()?;
    let topics = if cfg.channels.contains(&Channel::Topic) {
        topic_rows(queries, cfg)?
    } else {
        queries.iter().map(|_| Vec::new()).collect()
    };
    let tensors: Vec<PairwiseTensor> = queries
        .par_iter()
        .zip(topics.par_iter())
        .map(|(q, t)| assemble_pairwise(&q.docs, t, cfg))
        .collect::<Result<_>>()?;
    for (q, t) in queries.iter_mut().zip(tensors) {
        q.pairwise = t;
    }
    Ok(())
}
