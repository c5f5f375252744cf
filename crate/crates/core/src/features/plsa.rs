use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse term-count matrix: one row of `(term index, count)` per document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub vocab_size: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl Corpus {
    pub fn new(vocab_size: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        for row in &rows {
            for &(t, c) in row {
                if t >= vocab_size || !(c >= 0.0) || !c.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "bad corpus entry ({t}, {c}) for vocabulary of {vocab_size}"
                    )));
                }
            }
        }
        Ok(Self { vocab_size, rows })
    }

    pub fn num_docs(&self) -> usize {
        self.rows.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlsaConfig {
    pub num_topics: usize,
    pub max_iters: usize,
    /// Stop once the relative log-likelihood gain falls below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for PlsaConfig {
    fn default() -> Self {
        Self {
            num_topics: 20,
            max_iters: 200,
            tol: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub num_topics: usize,
    /// `p(z | d)`, one row per document.
    pub doc_topic: Vec<Vec<f64>>,
    /// `p(w | z)`, one row per term.
    pub word_topic: Vec<Vec<f64>>,
    pub log_likelihood_trace: Vec<f64>,
}

impl TopicModel {
    pub fn doc_row(&self, d: usize) -> &[f64] {
        &self.doc_topic[d]
    }
}

/// Fits pLSA by EM. Topic-document weights start uniform and term-topic
/// weights start random, so identical documents stay identical. Documents
/// without terms get a uniform topic distribution.
pub fn plsa_fit(corpus: &Corpus, cfg: &PlsaConfig) -> Result<TopicModel> {
    let m = cfg.num_topics;
    if m == 0 {
        return Err(Error::InvalidParameter("number of topics must be at least 1".into()));
    }
    if corpus.rows.is_empty() {
        return Err(Error::InvalidParameter("empty corpus".into()));
    }
    let v = corpus.vocab_size;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut doc_topic = vec![vec![1.0 / m as f64; m]; corpus.num_docs()];
    // column-major during EM: topic_word[z][w]
    let mut topic_word: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            let mut col: Vec<f64> = (0..v).map(|_| 0.5 + rng.random::<f64>()).collect();
            normalize(&mut col);
            col
        })
        .collect();

    let mut trace = Vec::new();
    let mut post = vec![0.0; m];
    let mut prev = log_likelihood(corpus, &doc_topic, &topic_word);
    trace.push(prev);

    for _ in 0..cfg.max_iters {
        let mut new_tw = vec![vec![0.0; v]; m];
        let mut new_dt = vec![vec![0.0; m]; corpus.num_docs()];
        for (d, row) in corpus.rows.iter().enumerate() {
            for &(w, count) in row {
                if count == 0.0 {
                    continue;
                }
                let mut total = 0.0;
                for z in 0..m {
                    post[z] = doc_topic[d][z] * topic_word[z][w];
                    total += post[z];
                }
                if total <= 0.0 {
                    continue;
                }
                for z in 0..m {
                    let r = count * post[z] / total;
                    new_tw[z][w] += r;
                    new_dt[d][z] += r;
                }
            }
        }
        for (z, col) in new_tw.iter_mut().enumerate() {
            if !normalize(col) {
                // a topic that lost all mass keeps its old distribution
                col.clone_from(&topic_word[z]);
            }
        }
        for row in new_dt.iter_mut() {
            if !normalize(row) {
                row.fill(1.0 / m as f64);
            }
        }
        doc_topic = new_dt;
        topic_word = new_tw;
        let ll = log_likelihood(corpus, &doc_topic, &topic_word);
        trace.push(ll);
        let gain = ll - prev;
        prev = ll;
        if gain < cfg.tol * ll.abs().max(1.0) {
            break;
        }
    }

    let word_topic = (0..v)
        .map(|w| (0..m).map(|z| topic_word[z][w]).collect())
        .collect();
    Ok(TopicModel {
        num_topics: m,
        doc_topic,
        word_topic,
        log_likelihood_trace: trace,
    })
}

fn normalize(xs: &mut [f64]) -> bool {
    let s: f64 = xs.iter().sum();
    if s > 0.0 && s.is_finite() {
        xs.iter_mut().for_each(|x| *x /= s);
        true
    } else {
        false
    }
}

fn log_likelihood(corpus: &Corpus, doc_topic: &[Vec<f64>], topic_word: &[Vec<f64>]) -> f64 {
    let mut ll = 0.0;
    for (d, row) in corpus.rows.iter().enumerate() {
        for &(w, count) in row {
            if count == 0.0 {
                continue;
            }
            let p: f64 = doc_topic[d]
                .iter()
                .zip(topic_word)
                .map(|(pz, col)| pz * col[w])
                .sum();
            ll += count * p.max(f64::MIN_POSITIVE).ln();
        }
    }
    ll
}

/// Euclidean distance between two documents' topic rows.
pub fn topic_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(m: usize, seed: u64) -> PlsaConfig {
        PlsaConfig {
            num_topics: m,
            max_iters: 200,
            tol: 1e-10,
            seed,
        }
    }

    #[test]
    fn identical_docs_get_identical_rows() {
        let row = vec![(0, 3.0), (1, 1.0), (4, 2.0)];
        let corpus = Corpus::new(5, vec![row.clone(), row.clone(), row]).unwrap();
        let tm = plsa_fit(&corpus, &cfg(2, 9)).unwrap();
        for d in 1..3 {
            assert!(topic_distance(tm.doc_row(0), tm.doc_row(d)) < 1e-6);
        }
    }

    #[test]
    fn disjoint_groups_separate() {
        let a = |k: f64| vec![(0, 2.0 + k), (1, 1.0), (2, 3.0)];
        let b = |k: f64| vec![(3, 1.0 + k), (4, 2.0), (5, 2.0)];
        let corpus = Corpus::new(6, vec![a(0.0), a(1.0), b(0.0), b(1.0)]).unwrap();
        let tm = plsa_fit(&corpus, &cfg(2, 1)).unwrap();
        let within = topic_distance(tm.doc_row(0), tm.doc_row(1))
            .max(topic_distance(tm.doc_row(2), tm.doc_row(3)));
        let cross = topic_distance(tm.doc_row(0), tm.doc_row(2));
        assert!(within < cross, "{within} vs {cross}");
    }

    #[test]
    fn empty_rows_are_uniform_and_trace_rises() {
        let corpus = Corpus::new(3, vec![vec![(0, 1.0), (2, 4.0)], vec![], vec![(1, 2.0)]]).unwrap();
        let tm = plsa_fit(&corpus, &cfg(3, 4)).unwrap();
        for p in &tm.doc_topic[1] {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
        for w in tm.log_likelihood_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs());
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(plsa_fit(&Corpus::default(), &cfg(2, 0)).is_err());
        let corpus = Corpus::new(1, vec![vec![(0, 1.0)]]).unwrap();
        assert!(plsa_fit(&corpus, &cfg(0, 0)).is_err());
        assert!(Corpus::new(1, vec![vec![(1, 1.0)]]).is_err());
    }

    #[test]
    fn topic_distance_examples() {
        assert_eq!(topic_distance(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
        assert!((topic_distance(&[1.0, 0.0], &[0.0, 1.0]) - 2f64.sqrt()).abs() < 1e-15);
        assert!((topic_distance(&[0.5, 0.5], &[1.0, 0.0]) - 0.5f64.sqrt()).abs() < 1e-15);
    }
}
