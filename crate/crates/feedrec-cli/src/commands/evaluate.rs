use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use feedrec_core::metrics::{
    click_metrics, engagement_metrics, ClickMetrics, CorpusTotals, EngagementMetrics,
};
use feedrec_core::trainer::{prepare_dataset, score_impressions, Checkpoint};

use super::{load_corpus, write_json};

#[derive(Serialize)]
struct EvalSummary {
    config_hash: String,
    test_impressions: usize,
    click: ClickMetrics,
    engagement: EngagementMetrics,
}

pub fn run(checkpoint: &Path, corpus_dir: &Path, out: &Path) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let (params, idx, dims) = ckpt.restore()?;
    let corpus = load_corpus(corpus_dir)?;
    let ds = prepare_dataset(&corpus, &ckpt.config)?;
    let abl = ckpt.config.ablation.to_ablation()?;

    let ranked = score_impressions(&params, &idx, &dims, &abl, &ds, &ds.test)?;
    let click = click_metrics(&ranked);
    let totals = CorpusTotals::from_impressions(&ranked);
    let engagement = engagement_metrics(&ranked, &totals);

    std::fs::create_dir_all(out)?;
    let cfg_text = toml::to_string_pretty(&ckpt.config)?;
    std::fs::write(out.join("config.resolved.toml"), cfg_text)?;

    let summary = EvalSummary {
        config_hash: ckpt.config.hash(),
        test_impressions: ds.test.len(),
        click,
        engagement,
    };
    write_json(&out.join("metrics.json"), &summary)?;

    let mut scores = std::io::BufWriter::new(std::fs::File::create(out.join("scores.jsonl"))?);
    for imp in &ranked {
        serde_json::to_writer(&mut scores, imp)?;
        scores.write_all(b"\n")?;
    }
    scores.flush()?;

    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into());
    println!("test impressions: {}", ds.test.len());
    println!(
        "  AUC {:.4}  MRR {:.4}  nDCG@5 {:.4}  HR@5 {:.4}  (skipped: {} no-positive, {} no-negative)",
        click.auc,
        click.mrr,
        click.ndcg5,
        click.hr5,
        click.skipped_no_positive,
        click.skipped_no_negative
    );
    println!(
        "  share ratio {}  dislike ratio {}  finish rate {}  mean dwell {}",
        fmt(engagement.share_ratio),
        fmt(engagement.dislike_ratio),
        fmt(engagement.finish_rate),
        fmt(engagement.mean_dwell)
    );
    Ok(())
}
