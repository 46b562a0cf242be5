use std::path::Path;

use anyhow::Result;

use feedrec_core::feedlog::io::write_logs;
use feedrec_core::synthgen::{corpus_stats, generate_corpus};

use crate::config::RunConfig;

use super::write_json;

pub fn run(config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.generator.seed = s;
    }
    cfg.echo_into(out)?;

    let corpus = generate_corpus(&cfg.generator)?;
    write_logs(out, &corpus)?;
    let stats = corpus_stats(&corpus);
    write_json(&out.join("stats.json"), &stats)?;

    println!(
        "generated {} news, {} impressions, {} feedback records → {}",
        corpus.news.len(),
        corpus.impressions.len(),
        corpus.feedback.len(),
        out.display()
    );
    for (ty, n) in &stats.counts {
        println!("  {ty:>12}: {n}");
    }
    Ok(())
}
