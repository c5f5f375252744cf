//! File formats shared by the command-line tools.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

pub mod dataset;
pub mod model_file;
pub mod qrels;
pub mod run;
mod table;

pub use dataset::{load_dataset, read_dataset, save_dataset, write_dataset, Dataset, Manifest};
pub use model_file::{load_model, read_model, save_model, write_model, ModelFile, ModelMetadata};
pub use qrels::{parse_diversity_qrels, read_diversity_qrels, Qrels, TopicQrels};
pub use run::{entries_for, load_run, ranking_for, read_run, write_run, Run, RunEntry};
pub use table::Table;

fn open_reader(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Attaches `path` to parse and schema errors raised while reading it.
fn with_path(e: Error, path: &Path) -> Error {
    let p = Some(PathBuf::from(path));
    match e {
        Error::Parse { line, message, .. } => Error::Parse { path: p, line, message },
        Error::Schema {
            line,
            query_id,
            field,
            message,
            ..
        } => Error::Schema {
            path: p,
            line,
            query_id,
            field,
            message,
        },
        other => other,
    }
}

fn schema_err(line: usize, query_id: Option<&str>, field: &str, message: String) -> Error {
    Error::Schema {
        path: None,
        line,
        query_id: query_id.map(str::to_owned),
        field: field.to_owned(),
        message,
    }
}

/// One JSON value per line.
pub fn write_jsonl<W: Write, T: Serialize>(mut out: W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
