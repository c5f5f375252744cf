//! Dataset container: JSON Lines, a manifest on the first line and one
//! record per query after it.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{open_reader, schema_err, with_path};
use crate::error::{Error, Result};
use crate::instance::{
    validate_instance_dims, DocumentMeta, DocumentRecord, PairwiseTensor, QueryInstance,
    SubtopicJudgments, Violation,
};

pub const DATASET_FORMAT: &str = "divrank-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub relevance_dim: usize,
    pub channels: Vec<String>,
}

impl Manifest {
    pub fn new(relevance_dim: usize, channels: Vec<String>) -> Self {
        Self {
            format: DATASET_FORMAT.to_owned(),
            version: DATASET_VERSION,
            relevance_dim,
            channels,
        }
    }

    pub fn diversity_dim(&self) -> usize {
        self.channels.len()
    }

    /// Hash of the feature layout: relevance dimension and channel names in
    /// order. Models record it so they can refuse an incompatible dataset.
    pub fn schema_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("R={}\n", self.relevance_dim));
        for c in &self.channels {
            h.update(c.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub queries: Vec<QueryInstance>,
}

impl Dataset {
    /// Infers the manifest from the first query.
    pub fn new(channels: Vec<String>, queries: Vec<QueryInstance>) -> Self {
        let r = queries.first().map_or(0, QueryInstance::relevance_dim);
        Self {
            manifest: Manifest::new(r, channels),
            queries,
        }
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let mut buf = Vec::new();
        write_dataset(&mut buf, self).expect("writing to memory");
        hex::encode(Sha256::digest(&buf))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryRecord {
    query_id: String,
    doc_ids: Vec<String>,
    features: Vec<Vec<f64>>,
    /// `(i, j, channel, value)` with `i < j`; absent entries are 0.
    pairwise: Vec<(usize, usize, usize, f64)>,
    num_subtopics: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    probs: Option<Vec<f64>>,
    /// `rel[s][d]` is 1 when document `d` is relevant to subtopic `s`.
    rel: Vec<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<Vec<DocumentMeta>>,
}

impl QueryRecord {
    fn from_instance(q: &QueryInstance) -> Self {
        let j = &q.judgments;
        let m = j.num_subtopics();
        let uniform = j.probs.iter().all(|&p| p == 1.0 / m as f64);
        let has_meta = q.docs.iter().any(|d| !d.meta.is_empty());
        Self {
            query_id: q.query_id.clone(),
            doc_ids: q.docs.iter().map(|d| d.doc_id.clone()).collect(),
            features: q.docs.iter().map(|d| d.relevance_features.clone()).collect(),
            pairwise: q.pairwise.upper_entries().collect(),
            num_subtopics: m,
            probs: (!uniform).then(|| j.probs.clone()),
            rel: j.rel.iter().map(|row| row.iter().map(|&r| u8::from(r)).collect()).collect(),
            meta: has_meta.then(|| q.docs.iter().map(|d| d.meta.clone()).collect()),
        }
    }

    fn into_instance(self, manifest: &Manifest, line: usize) -> Result<QueryInstance> {
        let qid = self.query_id.clone();
        let err = |field: &str, message: String| schema_err(line, Some(&qid), field, message);
        let n = self.doc_ids.len();
        if self.features.len() != n {
            return Err(err(
                "features",
                format!("{} rows for {n} documents", self.features.len()),
            ));
        }
        if let Some(meta) = &self.meta {
            if meta.len() != n {
                return Err(err("meta", format!("{} entries for {n} documents", meta.len())));
            }
        }
        if self.rel.len() != self.num_subtopics {
            return Err(err(
                "rel",
                format!("{} rows for {} subtopics", self.rel.len(), self.num_subtopics),
            ));
        }
        let mut rel = Vec::with_capacity(self.rel.len());
        for (s, row) in self.rel.iter().enumerate() {
            if let Some(&bad) = row.iter().find(|&&v| v > 1) {
                return Err(err(&format!("rel[{s}]"), format!("value {bad} is not 0 or 1")));
            }
            rel.push(row.iter().map(|&v| v == 1).collect());
        }
        let f = manifest.diversity_dim();
        let mut pairwise = PairwiseTensor::zeros(n, f);
        let mut seen = BTreeSet::new();
        for (k, &(i, j, c, v)) in self.pairwise.iter().enumerate() {
            let field = format!("pairwise[{k}]");
            if !(i < j && j < n) {
                return Err(err(&field, format!("need i < j < {n}, got ({i}, {j})")));
            }
            if c >= f {
                return Err(err(&field, format!("channel {c} out of range for {f} channels")));
            }
            if !seen.insert((i, j, c)) {
                return Err(err(&field, format!("duplicate entry ({i}, {j}, {c})")));
            }
            pairwise.set_symmetric(i, j, c, v);
        }
        let judgments = match self.probs {
            Some(probs) => SubtopicJudgments { probs, rel },
            None => SubtopicJudgments::uniform(rel),
        };
        let mut meta = self.meta.unwrap_or_default().into_iter();
        let docs = self
            .doc_ids
            .into_iter()
            .zip(self.features)
            .map(|(id, feats)| DocumentRecord {
                doc_id: id,
                relevance_features: feats,
                meta: meta.next().unwrap_or_default(),
            })
            .collect();
        let q = QueryInstance {
            query_id: self.query_id,
            docs,
            pairwise,
            judgments,
        };
        let report = validate_instance_dims(&q, manifest.relevance_dim, f);
        if let Some(v) = report.violations.first() {
            return Err(err(violation_field(v), report.to_string()));
        }
        Ok(q)
    }
}

fn violation_field(v: &Violation) -> &'static str {
    match v {
        Violation::RelevanceDim { .. } | Violation::RelevanceRange { .. } => "features",
        Violation::PairwiseShape { .. }
        | Violation::PairwiseChannels { .. }
        | Violation::AsymmetricPairwise { .. }
        | Violation::NonZeroDiagonal { .. }
        | Violation::PairwiseRange { .. } => "pairwise",
        Violation::NoSubtopics => "num_subtopics",
        Violation::ProbsLength { .. }
        | Violation::NegativeProb { .. }
        | Violation::ProbsNotNormalized { .. } => "probs",
        Violation::RelRowLength { .. } => "rel",
        Violation::DuplicateDocId { .. } => "doc_ids",
    }
}

pub fn write_dataset<W: Write>(mut out: W, ds: &Dataset) -> Result<()> {
    serde_json::to_writer(&mut out, &ds.manifest)?;
    out.write_all(b"\n")?;
    for q in &ds.queries {
        serde_json::to_writer(&mut out, &QueryRecord::from_instance(q))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_dataset(std::io::BufWriter::new(file), ds)
}

fn parse_line<T: serde::de::DeserializeOwned>(
    text: &str,
    line: usize,
    query_id: Option<&str>,
) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        let field = if field == "." { "record".to_owned() } else { field };
        schema_err(line, query_id, &field, e.into_inner().to_string())
    })?;
    de.end().map_err(|e| Error::Parse {
        path: None,
        line,
        message: format!("trailing characters: {e}"),
    })?;
    Ok(value)
}

/// Best-effort id for error messages about a record that failed to parse.
fn peek_query_id(text: &str) -> Option<String> {
    let v: serde_json::Value = serde_json::from_str(text).ok()?;
    v.get("query_id")?.as_str().map(str::to_owned)
}

pub fn read_dataset<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut manifest: Option<Manifest> = None;
    let mut queries = Vec::new();
    let mut ids = BTreeSet::new();
    for (idx, text) in reader.lines().enumerate() {
        let line = idx + 1;
        let text = text?;
        if text.trim().is_empty() {
            return Err(Error::Parse {
                path: None,
                line,
                message: "blank line".into(),
            });
        }
        match &manifest {
            None => {
                let m: Manifest = parse_line(&text, line, None)?;
                if m.format != DATASET_FORMAT {
                    return Err(schema_err(line, None, "format", format!("expected `{DATASET_FORMAT}`, got `{}`", m.format)));
                }
                if m.version != DATASET_VERSION {
                    return Err(schema_err(line, None, "version", format!("unsupported version {}", m.version)));
                }
                manifest = Some(m);
            }
            Some(m) => {
                let qid = peek_query_id(&text);
                let record: QueryRecord = parse_line(&text, line, qid.as_deref())?;
                if !ids.insert(record.query_id.clone()) {
                    return Err(schema_err(line, Some(&record.query_id), "query_id", "duplicate query id".into()));
                }
                queries.push(record.into_instance(m, line)?);
            }
        }
    }
    let manifest = manifest.ok_or_else(|| Error::Parse {
        path: None,
        line: 1,
        message: "missing manifest line".into(),
    })?;
    Ok(Dataset { manifest, queries })
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    read_dataset(open_reader(path)?).map_err(|e| with_path(e, path))
}
