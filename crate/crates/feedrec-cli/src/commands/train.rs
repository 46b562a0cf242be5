use std::path::Path;

use anyhow::Result;

use feedrec_core::trainer;

use crate::config::RunConfig;

use super::{load_corpus, write_json};

pub fn run(config: Option<&Path>, corpus_dir: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.training.seed = s;
    }
    cfg.echo_into(out)?;

    let corpus = load_corpus(corpus_dir)?;
    let outcome = trainer::train(&corpus, &cfg.training)?;

    let ckpt_path = out.join("model.ckpt");
    outcome.checkpoint.save(&ckpt_path)?;
    write_json(&out.join("report.json"), &outcome.report)?;

    println!(
        "trained on {} samples (dropped {}, cold {}), config {}",
        outcome.report.train_samples,
        outcome.report.dropped_samples,
        outcome.report.cold_samples,
        outcome.report.config_hash
    );
    println!("initial loss {:.4}", outcome.report.initial_loss);
    for e in &outcome.report.epochs {
        println!(
            "epoch {:>2}: L {:.4}  L_R {:.4}  L_F {:.4}  L_T {:.4}  L_D {:+.4}  val AUC {}",
            e.epoch,
            e.total,
            e.click,
            e.finish,
            e.dwell,
            e.disentangle,
            e.validation_auc
                .map(|a| format!("{a:.4}"))
                .unwrap_or_else(|| "n/a".into())
        );
    }
    println!("checkpoint → {}", ckpt_path.display());
    Ok(())
}
