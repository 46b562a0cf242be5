//! Line-delimited JSON persistence for the three corpus files:
//! `news.jsonl`, `impressions.jsonl`, `feedback.jsonl`. One object per
//! line, UTF-8, canonical field order; write-then-read is the identity.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

use super::{FeedbackRecord, ImpressionLog, NewsArticle};

pub const NEWS_FILE: &str = "news.jsonl";
pub const IMPRESSIONS_FILE: &str = "impressions.jsonl";
pub const FEEDBACK_FILE: &str = "feedback.jsonl";

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        let line = serde_json::to_string(item)
            .map_err(|e| Error::Data(format!("serialize {}: {e}", path.display())))?;
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: T = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: format!("{} in {}", e, path.display()),
        })?;
        out.push(item);
    }
    Ok(out)
}

/// A corpus as read from disk.
#[derive(Clone, Debug, Default)]
pub struct Corpus {
    pub news: Vec<NewsArticle>,
    pub impressions: Vec<ImpressionLog>,
    pub feedback: Vec<FeedbackRecord>,
}

/// Read the three corpus files from a directory.
pub fn read_logs(dir: &Path) -> Result<Corpus> {
    let impressions: Vec<ImpressionLog> = read_jsonl(&dir.join(IMPRESSIONS_FILE))?;
    let feedback: Vec<FeedbackRecord> = read_jsonl(&dir.join(FEEDBACK_FILE))?;
    let news: Vec<NewsArticle> = read_jsonl(&dir.join(NEWS_FILE))?;
    for imp in &impressions {
        imp.validate()?;
    }
    for rec in &feedback {
        rec.validate()?;
    }
    Ok(Corpus {
        news,
        impressions,
        feedback,
    })
}

/// Write the three corpus files into a directory (created if missing).
pub fn write_logs(dir: &Path, corpus: &Corpus) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_jsonl(&dir.join(NEWS_FILE), &corpus.news)?;
    write_jsonl(&dir.join(IMPRESSIONS_FILE), &corpus.impressions)?;
    write_jsonl(&dir.join(FEEDBACK_FILE), &corpus.feedback)?;
    Ok(())
}
