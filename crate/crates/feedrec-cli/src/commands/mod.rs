pub mod ablate;
pub mod evaluate;
pub mod generate;
pub mod gradcheck;
pub mod rank;
pub mod train;

use std::path::Path;

use anyhow::{Context, Result};

use feedrec_core::feedlog::io::{read_logs, Corpus};

pub(crate) fn load_corpus(dir: &Path) -> Result<Corpus> {
    read_logs(dir).with_context(|| format!("reading corpus from {}", dir.display()))
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
