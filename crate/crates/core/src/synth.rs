//! Synthetic diversification datasets with planted subtopic structure.
//!
//! Each document is either irrelevant or relevant to exactly one latent
//! subtopic. Subtopic 0 is over-represented (the redundancy rate), so a
//! ranking by relevance alone tends to repeat it. Relevance features carry
//! the relevant/irrelevant split, pairwise channels carry whether two
//! documents cover different subtopics, each channel with its own strength
//! and noise level. An irrelevant document counts as covering nothing new.
//! The first channel is noise-free, so the greedy targets are reachable
//! by some weight vector. Candidates are ordered by the sum of their
//! relevance features, which fixes how the targets break ties.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Channel;
use crate::instance::{DocumentRecord, PairwiseTensor, QueryInstance, SubtopicJudgments};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_queries: usize,
    pub docs_per_query: usize,
    pub num_subtopics: usize,
    pub relevance_dim: usize,
    /// Leading relevance features that depend on relevance; the rest are
    /// uniform noise.
    pub informative_features: usize,
    pub diversity_dim: usize,
    /// Standard deviation of the noise on every informative value.
    pub noise: f64,
    /// Scales the topic contrast of every pairwise channel, in `[0, 1]`.
    pub signal: f64,
    /// Share of relevant documents forced onto subtopic 0.
    pub redundancy: f64,
    pub relevant_rate: f64,
    /// Train and validation shares; the test split gets the remainder.
    pub split: (f64, f64),
    /// Also emit synthetic terms, categories, urls and links.
    pub raw_fields: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_queries: 100,
            docs_per_query: 50,
            num_subtopics: 4,
            relevance_dim: 8,
            informative_features: 5,
            diversity_dim: 7,
            noise: 0.2,
            signal: 1.0,
            redundancy: 0.5,
            relevant_rate: 0.4,
            split: (0.6, 0.2),
            raw_fields: false,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_queries", self.num_queries),
            ("docs_per_query", self.docs_per_query),
            ("num_subtopics", self.num_subtopics),
            ("relevance_dim", self.relevance_dim),
            ("diversity_dim", self.diversity_dim),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidParameter(format!("{name} must be at least 1")));
            }
        }
        if self.informative_features > self.relevance_dim {
            return Err(Error::InvalidParameter(
                "informative_features exceeds relevance_dim".into(),
            ));
        }
        let unit = [
            ("signal", self.signal),
            ("redundancy", self.redundancy),
            ("relevant_rate", self.relevant_rate),
            ("train share", self.split.0),
            ("validation share", self.split.1),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.split.0 + self.split.1 > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter("split shares exceed 1".into()));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::InvalidParameter("noise must be non-negative".into()));
        }
        Ok(())
    }
}

/// Per-channel `(strength, noise multiplier)`; channels past the seventh
/// repeat the pattern.
const CHANNEL_PROFILE: [(f64, f64); 7] = [
    (1.0, 0.0),
    (0.6, 1.5),
    (0.5, 1.5),
    (0.5, 1.5),
    (0.8, 1.2),
    (0.3, 2.0),
    (0.4, 2.0),
];

pub fn channel_names(f: usize) -> Vec<String> {
    (0..f)
        .map(|c| match Channel::ALL.get(c) {
            Some(ch) => ch.name().to_owned(),
            None => format!("extra{c}"),
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub channels: Vec<String>,
    pub train: Vec<QueryInstance>,
    pub validation: Vec<QueryInstance>,
    pub test: Vec<QueryInstance>,
}

impl SynthDataset {
    pub fn all(&self) -> impl Iterator<Item = &QueryInstance> {
        self.train.iter().chain(&self.validation).chain(&self.test)
    }
}

/// Topic label per document: `Some(t)` for subtopic `t`, `None` when
/// irrelevant.
fn draw_topics(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> Vec<Option<usize>> {
    let n = cfg.docs_per_query;
    let m = cfg.num_subtopics;
    let mut topics: Vec<Option<usize>> = (0..n)
        .map(|_| {
            if rng.random_bool(cfg.relevant_rate) {
                if rng.random_bool(cfg.redundancy) {
                    Some(0)
                } else {
                    Some(rng.random_range(0..m))
                }
            } else {
                None
            }
        })
        .collect();
    if topics.iter().all(Option::is_none) {
        let d = rng.random_range(0..n);
        topics[d] = Some(0);
    }
    topics
}

fn raw_fields(rng: &mut ChaCha8Rng, doc: &mut DocumentRecord, group: usize, qi: usize) {
    let mut body = crate::instance::TermBag::new();
    for _ in 0..12 {
        let word = format!("g{group}w{}", rng.random_range(0..6));
        *body.entry(word).or_default() += 1;
    }
    for _ in 0..4 {
        let word = format!("common{}", rng.random_range(0..10));
        *body.entry(word).or_default() += 1;
    }
    let title = body
        .iter()
        .filter(|(t, _)| t.starts_with('g'))
        .take(2)
        .map(|(t, &c)| (t.clone(), c))
        .collect();
    doc.meta.body = Some(body);
    doc.meta.title = Some(title);
    doc.meta.categories = vec![format!("Top/Q{qi}/G{group}").parse().expect("valid path")];
    doc.meta.url = Some(format!("g{group}.q{qi}.example.com/{}", doc.doc_id));
}

fn generate_query(cfg: &SynthConfig, qi: usize) -> QueryInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(qi as u64 + 1);
    let n = cfg.docs_per_query;
    let m = cfg.num_subtopics;
    let topics = draw_topics(&mut rng, cfg);
    // raw fields of irrelevant docs come from junk groups past the real ones
    let group: Vec<usize> = topics
        .iter()
        .map(|t| match t {
            Some(t) => *t,
            None => m + rng.random_range(0..m.max(2)),
        })
        .collect();

    let gauss = |rng: &mut ChaCha8Rng, sd: f64| -> f64 {
        if sd > 0.0 {
            Normal::new(0.0, sd).expect("finite sd").sample(rng)
        } else {
            0.0
        }
    };

    let qid = format!("q{:04}", qi + 1);
    let feats: Vec<Vec<f64>> = topics
        .iter()
        .map(|t| {
            let base = if t.is_some() { 0.75 } else { 0.25 };
            (0..cfg.relevance_dim)
                .map(|k| {
                    if k < cfg.informative_features {
                        (base + gauss(&mut rng, cfg.noise)).clamp(0.0, 1.0)
                    } else {
                        rng.random::<f64>()
                    }
                })
                .collect()
        })
        .collect();
    // candidates arrive ordered by a first-stage score, as a retriever
    // would return them
    let first_stage: Vec<f64> = feats.iter().map(|f| f.iter().sum::<f64>()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| first_stage[b].total_cmp(&first_stage[a]).then(a.cmp(&b)));
    let topics: Vec<Option<usize>> = order.iter().map(|&d| topics[d]).collect();
    let group: Vec<usize> = order.iter().map(|&d| group[d]).collect();

    let mut docs = Vec::with_capacity(n);
    for (d, &src) in order.iter().enumerate() {
        let mut doc = DocumentRecord::new(format!("{qid}-d{d:03}"), feats[src].clone());
        if cfg.raw_fields {
            raw_fields(&mut rng, &mut doc, group[d], qi);
        }
        docs.push(doc);
    }
    if cfg.raw_fields {
        // link consecutive same-topic documents
        for d in 1..n {
            if group[d] == group[d - 1] {
                let prev = docs[d - 1].doc_id.clone();
                docs[d].meta.outlinks.get_or_insert_with(Default::default).insert(prev);
            }
        }
    }

    let f = cfg.diversity_dim;
    let mut pairwise = PairwiseTensor::zeros(n, f);
    for i in 0..n {
        for j in i + 1..n {
            // +1/2 across subtopics, -1/2 otherwise: an irrelevant
            // document covers nothing new
            let shift = match (topics[i], topics[j]) {
                (Some(a), Some(b)) if a != b => 0.5,
                _ => -0.5,
            };
            for c in 0..f {
                let (strength, noise_mul) = CHANNEL_PROFILE[c % CHANNEL_PROFILE.len()];
                let contrast = strength * cfg.signal;
                let v = 0.5 + contrast * shift + gauss(&mut rng, cfg.noise * noise_mul);
                pairwise.set_symmetric(i, j, c, v.clamp(0.0, 1.0));
            }
        }
    }

    let rel = (0..m)
        .map(|t| topics.iter().map(|&x| x == Some(t)).collect())
        .collect();
    QueryInstance {
        query_id: qid,
        docs,
        pairwise,
        judgments: SubtopicJudgments::uniform(rel),
    }
}

/// Generates the dataset. Every query has its own random stream, so a
/// query's content depends only on the seed and its index.
pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut queries: Vec<QueryInstance> = (0..cfg.num_queries).map(|qi| generate_query(cfg, qi)).collect();
    let n = queries.len();
    let n_train = ((n as f64 * cfg.split.0).round() as usize).min(n);
    let n_valid = ((n as f64 * cfg.split.1).round() as usize).min(n - n_train);
    let test = queries.split_off(n_train + n_valid);
    let validation = queries.split_off(n_train);
    Ok(SynthDataset {
        channels: channel_names(cfg.diversity_dim),
        train: queries,
        validation,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{relevance_rank, relevance_scores};
    use crate::instance::{Measure, MeasureParams, WeightVector};
    use crate::{metrics, model, validate_instance};

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            num_queries: 10,
            docs_per_query: 20,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn instances_validate_and_split() {
        let ds = generate(&small(1)).unwrap();
        assert_eq!((ds.train.len(), ds.validation.len(), ds.test.len()), (6, 2, 2));
        for q in ds.all() {
            assert!(validate_instance(q).is_ok(), "{}", validate_instance(q));
            assert_eq!(q.relevance_dim(), 8);
            assert_eq!(q.diversity_dim(), 7);
        }
        assert_eq!(ds.channels[1], "text");
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&small(5)).unwrap();
        let b = generate(&small(5)).unwrap();
        let c = generate(&small(6)).unwrap();
        assert!(a.all().zip(b.all()).all(|(x, y)| x == y));
        assert!(a.all().zip(c.all()).any(|(x, y)| x != y));
        assert_eq!(a.channels, c.channels);
    }

    #[test]
    fn noiseless_data_is_fit_by_oracle_weights() {
        let cfg = SynthConfig {
            noise: 0.0,
            signal: 1.0,
            num_queries: 20,
            ..SynthConfig::default()
        };
        let ds = generate(&cfg).unwrap();
        let mut w = WeightVector::zeros(8, 7);
        for k in 0..5 {
            w.w_rel[k] = 100.0;
        }
        w.w_div[0] = 1.0;
        for measure in Measure::ALL {
            let p = MeasureParams::with_measure(measure);
            for q in ds.all() {
                let ideal = metrics::ideal_raw_dcem(q, &p);
                let y = model::predict(&w, q, p.cutoff).unwrap();
                let loss = metrics::dcem_loss(ideal, &y, q, &p).unwrap();
                assert!(loss < 1e-12, "{measure} {}: {loss}", q.query_id);
            }
        }
    }

    #[test]
    fn relevance_only_falls_short_of_ideal() {
        let ds = generate(&SynthConfig::default()).unwrap();
        let p = MeasureParams::default();
        let mean: f64 = ds
            .all()
            .map(|q| {
                let y = relevance_rank(&relevance_scores(q), p.cutoff);
                metrics::dcem(&y, q, &p).unwrap()
            })
            .sum::<f64>()
            / 100.0;
        assert!(mean < 0.95, "{mean}");
    }

    #[test]
    fn rejects_bad_config() {
        for cfg in [
            SynthConfig { num_queries: 0, ..small(0) },
            SynthConfig { redundancy: 1.5, ..small(0) },
            SynthConfig { informative_features: 9, ..small(0) },
            SynthConfig { noise: -1.0, ..small(0) },
        ] {
            assert!(generate(&cfg).is_err());
        }
    }
}
