//! Diversity qrels: whitespace-separated `topic subtopic docid judgment`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use super::{open_reader, with_path};
use crate::error::{Error, Result};
use crate::instance::SubtopicJudgments;

/// Relevant documents per subtopic id, for one topic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TopicQrels {
    pub subtopics: BTreeMap<u32, BTreeSet<String>>,
}

impl TopicQrels {
    /// Judgment matrix over `doc_ids`, subtopics in ascending id order with
    /// uniform probabilities. Documents never judged get all-zero rows.
    pub fn judgments<S: AsRef<str>>(&self, doc_ids: &[S]) -> SubtopicJudgments {
        let rel = self
            .subtopics
            .values()
            .map(|relevant| doc_ids.iter().map(|d| relevant.contains(d.as_ref())).collect())
            .collect();
        SubtopicJudgments::uniform(rel)
    }
}

pub type Qrels = BTreeMap<String, TopicQrels>;

fn parse_err(line: usize, message: String) -> Error {
    Error::Parse {
        path: None,
        line,
        message,
    }
}

pub fn read_diversity_qrels<R: BufRead>(reader: R) -> Result<Qrels> {
    let mut out = Qrels::new();
    for (idx, text) in reader.lines().enumerate() {
        let line = idx + 1;
        let text = text?;
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let [topic, subtopic, doc, judgment] = fields[..] else {
            return Err(parse_err(line, format!("expected 4 fields, found {}", fields.len())));
        };
        let subtopic: u32 = subtopic
            .parse()
            .map_err(|_| parse_err(line, format!("bad subtopic `{subtopic}`")))?;
        let judgment: i64 = judgment
            .parse()
            .map_err(|_| parse_err(line, format!("bad judgment `{judgment}`")))?;
        if subtopic == 0 {
            continue;
        }
        let relevant = out
            .entry(topic.to_owned())
            .or_default()
            .subtopics
            .entry(subtopic)
            .or_default();
        if judgment > 0 {
            relevant.insert(doc.to_owned());
        }
    }
    Ok(out)
}

pub fn parse_diversity_qrels(path: &Path) -> Result<Qrels> {
    read_diversity_qrels(open_reader(path)?).map_err(|e| with_path(e, path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binarizes_and_skips_topic_level() {
        let q = read_diversity_qrels("1 2 doc7 1\n1 2 doc8 -2\n1 0 doc9 1\n1 1 doc8 0\n".as_bytes()).unwrap();
        let t = &q["1"];
        assert_eq!(t.subtopics.len(), 2);
        let j = t.judgments(&["doc7", "doc8", "doc9", "unseen"]);
        assert_eq!(j.rel, vec![vec![false; 4], vec![true, false, false, false]]);
        assert_eq!(j.probs, vec![0.5, 0.5]);
    }

    #[test]
    fn uniform_probs_over_three_subtopics() {
        let q = read_diversity_qrels("7 1 a 1\n7 2 b 1\n7 3 c 2\n".as_bytes()).unwrap();
        assert_eq!(q["7"].judgments(&["a"]).probs, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn malformed_lines_report_line_number() {
        for bad in ["1 2 d 1\n1 x d 1\n", "1 2 d 1\n1 2 d\n", "1 2 d 1\n1 2 d 1 extra\n", "1 2 d 1\n1 2 d 1.5\n"] {
            let msg = read_diversity_qrels(bad.as_bytes()).unwrap_err().to_string();
            assert!(msg.contains(":2:"), "{msg}");
        }
    }
}
