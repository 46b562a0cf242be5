//! Distribution-shape checks on generated corpora: explicit feedback
//! sparsity, dwell-time bimodality, and heavy-tailed per-user activity.

use feedrec_core::feedlog::{quantize_time, FeedbackType};
use feedrec_core::synthgen::{corpus_stats, generate_corpus, GeneratorConfig};

fn thousand_user_config() -> GeneratorConfig {
    GeneratorConfig {
        n_users: 1000,
        n_news: 4000,
        n_impressions: 6000,
        seed: 7,
        ..GeneratorConfig::default()
    }
}

#[test]
fn share_count_is_a_small_fraction_of_clicks() {
    let corpus = generate_corpus(&thousand_user_config()).unwrap();
    let stats = corpus_stats(&corpus);
    let clicks = *stats.counts.get("click").unwrap() as f64;
    let shares = *stats.counts.get("share").unwrap_or(&0) as f64;
    let ratio = shares / clicks;
    // dataset-shaped target: on the order of half a percent
    assert!(
        ratio > 0.001 && ratio < 0.02,
        "share/click ratio {ratio:.4} out of range (shares {shares}, clicks {clicks})"
    );
    // dislikes sparse but an order of magnitude more common than shares
    let dislikes = *stats.counts.get("dislike").unwrap_or(&0) as f64;
    assert!(dislikes / clicks < 0.12, "dislike ratio too high");
    assert!(dislikes > shares);
}

#[test]
fn dwell_histogram_is_bimodal_with_a_dip_before_16s() {
    let corpus = generate_corpus(&thousand_user_config()).unwrap();
    // log2 buckets of click dwell times
    let mut hist = vec![0u64; 14];
    for r in &corpus.feedback {
        if r.feedback == FeedbackType::Click {
            let b = quantize_time(r.dwell_time.unwrap() as f64).unwrap() as usize;
            hist[b] += 1;
        }
    }
    // local minimum in bucket 3 (t in [7, 15]) separating two modes
    let dip = hist[3];
    let left_peak = hist[..3].iter().copied().max().unwrap();
    let right_peak = hist[4..].iter().copied().max().unwrap();
    assert!(
        dip < left_peak && dip < right_peak,
        "no dip: hist {hist:?}"
    );
}

#[test]
fn per_user_skip_counts_are_heavy_tailed() {
    let corpus = generate_corpus(&thousand_user_config()).unwrap();
    let stats = corpus_stats(&corpus);
    let skips = stats.per_user.get("skip").expect("skip counts present");
    assert!(
        skips.p90 > 3.0 * skips.median,
        "p90 {} vs median {}",
        skips.p90,
        skips.median
    );
}

#[test]
fn click_volume_is_plausible() {
    let corpus = generate_corpus(&thousand_user_config()).unwrap();
    let stats = corpus_stats(&corpus);
    let clicks = *stats.counts.get("click").unwrap() as f64;
    let shown = (corpus.impressions.len() * 6) as f64;
    let rate = clicks / shown;
    assert!(rate > 0.1 && rate < 0.4, "click rate {rate:.3}");
    // finish and quick_close both present in quantity
    let finish = *stats.counts.get("finish").unwrap() as f64;
    let quick = *stats.counts.get("quick_close").unwrap() as f64;
    assert!(finish / clicks > 0.2 && finish / clicks < 0.8);
    assert!(quick / clicks > 0.08 && quick / clicks < 0.45);
}
