//! Run files: one `query_id rank doc_id score` line per ranked document.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use super::{open_reader, with_path};
use crate::error::{Error, Result};
use crate::instance::{QueryInstance, Ranking};

#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub doc_id: String,
    pub score: f64,
}

/// Ranked entries per query id.
pub type Run = BTreeMap<String, Vec<RunEntry>>;

/// Builds the run lines for one query from document indices and scores.
pub fn entries_for(q: &QueryInstance, ranking: &Ranking, scores: &[f64]) -> Vec<RunEntry> {
    ranking
        .iter()
        .zip(scores)
        .map(|(&d, &score)| RunEntry {
            doc_id: q.docs[d].doc_id.clone(),
            score,
        })
        .collect()
}

pub fn write_run<W: Write>(mut out: W, run: &Run) -> Result<()> {
    for (qid, entries) in run {
        for (rank, e) in entries.iter().enumerate() {
            writeln!(out, "{qid} {} {} {}", rank + 1, e.doc_id, e.score)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn parse_err(line: usize, message: String) -> Error {
    Error::Parse {
        path: None,
        line,
        message,
    }
}

/// Ranks must run 1, 2, ... within each query; a query's lines must be
/// contiguous.
pub fn read_run<R: BufRead>(reader: R) -> Result<Run> {
    let mut run = Run::new();
    let mut current: Option<String> = None;
    let mut docs_seen = BTreeSet::new();
    for (idx, text) in reader.lines().enumerate() {
        let line = idx + 1;
        let text = text?;
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let [qid, rank, doc, score] = fields[..] else {
            return Err(parse_err(line, format!("expected 4 fields, found {}", fields.len())));
        };
        let rank: usize = rank
            .parse()
            .map_err(|_| parse_err(line, format!("bad rank `{rank}`")))?;
        let score: f64 = score
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| parse_err(line, format!("bad score `{score}`")))?;
        if current.as_deref() != Some(qid) {
            if run.contains_key(qid) {
                return Err(parse_err(line, format!("query {qid} lines are not contiguous")));
            }
            current = Some(qid.to_owned());
            docs_seen.clear();
        }
        let entries = run.entry(qid.to_owned()).or_default();
        if rank != entries.len() + 1 {
            return Err(parse_err(line, format!("query {qid}: expected rank {}, found {rank}", entries.len() + 1)));
        }
        if !docs_seen.insert(doc.to_owned()) {
            return Err(parse_err(line, format!("query {qid}: document {doc} ranked twice")));
        }
        entries.push(RunEntry {
            doc_id: doc.to_owned(),
            score,
        });
    }
    Ok(run)
}

pub fn load_run(path: &Path) -> Result<Run> {
    read_run(open_reader(path)?).map_err(|e| with_path(e, path))
}

/// Maps a query's run entries back to document indices.
pub fn ranking_for(q: &QueryInstance, entries: &[RunEntry]) -> Result<Ranking> {
    let idx: std::collections::HashMap<&str, usize> =
        q.docs.iter().enumerate().map(|(i, d)| (d.doc_id.as_str(), i)).collect();
    let positions = entries
        .iter()
        .map(|e| {
            idx.get(e.doc_id.as_str()).copied().ok_or_else(|| {
                Error::InvalidRanking(format!("query {}: unknown document {}", q.query_id, e.doc_id))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ranking::new(positions, q.num_docs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let mut run = Run::new();
        run.insert(
            "q1".into(),
            vec![
                RunEntry { doc_id: "a".into(), score: 0.1 + 0.2 },
                RunEntry { doc_id: "b".into(), score: -3.0 },
            ],
        );
        run.insert("q2".into(), vec![RunEntry { doc_id: "c".into(), score: 1e-300 }]);
        let mut buf = Vec::new();
        write_run(&mut buf, &run).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().next(), Some("q1 1 a 0.30000000000000004"));
        assert_eq!(read_run(buf.as_slice()).unwrap(), run);
    }

    #[test]
    fn rejects_bad_lines() {
        for bad in [
            "q 1 a 1\nq 3 b 1\n",
            "q 1 a 1\nq 2 a 1\n",
            "q 1 a 1\nq 2 b nan\n",
            "q 1 a 1\nq 2 b 1 x\n",
            "q 1 a 1\nr 1 b 1\nq 2 c 1\n",
            "q 1 a 1\nq two b 1\n",
        ] {
            assert!(read_run(bad.as_bytes()).is_err(), "{bad:?}");
        }
    }
}
