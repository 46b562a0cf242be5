//! Click-ranking metrics (AUC, MRR, nDCG@5, HR@5) and top-5 engagement
//! metrics, each macro-averaged over impressions. [`oracle_metrics`] is a
//! deliberately naive second implementation used to cross-check
//! [`click_metrics`] in tests and acceptance runs.
//!
//! Tie handling: tied click/skip score pairs contribute 0.5 to AUC; ranking
//! positions break ties by stable candidate order.

use serde::{Deserialize, Serialize};

/// One scored candidate with its ground-truth engagement labels.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub news_id: String,
    pub score: f64,
    pub clicked: bool,
    #[serde(default)]
    pub shared: bool,
    #[serde(default)]
    pub disliked: bool,
    #[serde(default)]
    pub finished: bool,
    #[serde(default)]
    pub dwell_time: Option<u64>,
}

/// A scored impression ready for evaluation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RankedImpression {
    pub impression_id: String,
    pub candidates: Vec<RankedCandidate>,
}

/// Macro-averaged click metrics plus exclusion counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClickMetrics {
    pub auc: f64,
    pub mrr: f64,
    pub ndcg5: f64,
    pub hr5: f64,
    /// Impressions without a clicked candidate (excluded everywhere).
    pub skipped_no_positive: usize,
    /// Impressions without an unclicked candidate (excluded from AUC only).
    pub skipped_no_negative: usize,
}

/// Indices sorted by score descending; equal scores keep input order.
fn ranking(c: &[RankedCandidate]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..c.len()).collect();
    idx.sort_by(|&a, &b| c[b].score.partial_cmp(&c[a].score).unwrap().then(a.cmp(&b)));
    idx
}

fn impression_auc(c: &[RankedCandidate]) -> Option<f64> {
    let pos: Vec<f64> = c.iter().filter(|x| x.clicked).map(|x| x.score).collect();
    let neg: Vec<f64> = c.iter().filter(|x| !x.clicked).map(|x| x.score).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut s = 0.0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                s += 1.0;
            } else if p == n {
                s += 0.5;
            }
        }
    }
    Some(s / (pos.len() * neg.len()) as f64)
}

fn impression_ranking_metrics(c: &[RankedCandidate]) -> Option<(f64, f64, f64)> {
    if !c.iter().any(|x| x.clicked) {
        return None;
    }
    let order = ranking(c);
    let first_click_rank = order
        .iter()
        .position(|&i| c[i].clicked)
        .expect("has a click")
        + 1;
    let mrr = 1.0 / first_click_rank as f64;

    let k = 5usize;
    let dcg: f64 = order
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, &i)| c[i].clicked)
        .map(|(rank, _)| 1.0 / ((rank + 2) as f64).log2())
        .sum();
    let n_pos = c.iter().filter(|x| x.clicked).count();
    let ideal: f64 = (0..n_pos.min(k))
        .map(|rank| 1.0 / ((rank + 2) as f64).log2())
        .sum();
    let ndcg5 = dcg / ideal;

    let hr5 = if order.iter().take(k).any(|&i| c[i].clicked) {
        1.0
    } else {
        0.0
    };
    Some((mrr, ndcg5, hr5))
}

/// Macro-averaged AUC, MRR, nDCG@5 and HR@5 over impressions.
pub fn click_metrics(impressions: &[RankedImpression]) -> ClickMetrics {
    let mut m = ClickMetrics::default();
    let (mut auc_sum, mut auc_n) = (0.0, 0usize);
    let (mut mrr_sum, mut ndcg_sum, mut hr_sum, mut rank_n) = (0.0, 0.0, 0.0, 0usize);
    for imp in impressions {
        let has_pos = imp.candidates.iter().any(|c| c.clicked);
        let has_neg = imp.candidates.iter().any(|c| !c.clicked);
        if !has_pos {
            m.skipped_no_positive += 1;
            continue;
        }
        if !has_neg {
            m.skipped_no_negative += 1;
        } else if let Some(a) = impression_auc(&imp.candidates) {
            auc_sum += a;
            auc_n += 1;
        }
        if let Some((mrr, ndcg, hr)) = impression_ranking_metrics(&imp.candidates) {
            mrr_sum += mrr;
            ndcg_sum += ndcg;
            hr_sum += hr;
            rank_n += 1;
        }
    }
    if auc_n > 0 {
        m.auc = auc_sum / auc_n as f64;
    }
    if rank_n > 0 {
        m.mrr = mrr_sum / rank_n as f64;
        m.ndcg5 = ndcg_sum / rank_n as f64;
        m.hr5 = hr_sum / rank_n as f64;
    }
    m
}

/// Exhaustive second implementation of [`click_metrics`]: explicit O(n²)
/// pair counting and a full selection-sorted rank scan. Must agree with the
/// fast path within 1e-9 on every fixture.
pub fn oracle_metrics(impressions: &[RankedImpression]) -> ClickMetrics {
    let mut m = ClickMetrics::default();
    let (mut auc_sum, mut auc_n) = (0.0, 0usize);
    let (mut mrr_sum, mut ndcg_sum, mut hr_sum, mut rank_n) = (0.0, 0.0, 0.0, 0usize);

    for imp in impressions {
        let c = &imp.candidates;
        let n_pos = c.iter().filter(|x| x.clicked).count();
        let n_neg = c.len() - n_pos;
        if n_pos == 0 {
            m.skipped_no_positive += 1;
            continue;
        }
        if n_neg == 0 {
            m.skipped_no_negative += 1;
        } else {
            let mut wins = 0.0;
            for a in c.iter() {
                if !a.clicked {
                    continue;
                }
                for b in c.iter() {
                    if b.clicked {
                        continue;
                    }
                    if a.score > b.score {
                        wins += 1.0;
                    }
                    if a.score == b.score {
                        wins += 0.5;
                    }
                }
            }
            auc_sum += wins / (n_pos * n_neg) as f64;
            auc_n += 1;
        }

        // selection sort by (score desc, original index asc)
        let mut order: Vec<usize> = (0..c.len()).collect();
        for i in 0..order.len() {
            let mut best = i;
            for j in i + 1..order.len() {
                let (a, b) = (order[j], order[best]);
                if c[a].score > c[b].score || (c[a].score == c[b].score && a < b) {
                    best = j;
                }
            }
            order.swap(i, best);
        }
        let mut mrr = 0.0;
        for (rank, &i) in order.iter().enumerate() {
            if c[i].clicked {
                mrr = 1.0 / (rank + 1) as f64;
                break;
            }
        }
        let mut dcg = 0.0;
        for (rank, &i) in order.iter().enumerate().take(5) {
            if c[i].clicked {
                dcg += 1.0 / ((rank + 2) as f64).log2();
            }
        }
        let mut ideal = 0.0;
        for rank in 0..n_pos.min(5) {
            ideal += 1.0 / ((rank + 2) as f64).log2();
        }
        let mut hr = 0.0;
        for &i in order.iter().take(5) {
            if c[i].clicked {
                hr = 1.0;
                break;
            }
        }
        mrr_sum += mrr;
        ndcg_sum += dcg / ideal;
        hr_sum += hr;
        rank_n += 1;
    }
    if auc_n > 0 {
        m.auc = auc_sum / auc_n as f64;
    }
    if rank_n > 0 {
        m.mrr = mrr_sum / rank_n as f64;
        m.ndcg5 = ndcg_sum / rank_n as f64;
        m.hr5 = hr_sum / rank_n as f64;
    }
    m
}

/// Dataset-level base rates used as engagement-ratio denominators,
/// measured per shown item.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct CorpusTotals {
    pub share_rate: f64,
    pub dislike_rate: f64,
}

impl CorpusTotals {
    /// Per-shown-item share/dislike frequency over all candidates.
    pub fn from_impressions(impressions: &[RankedImpression]) -> Self {
        let mut shown = 0usize;
        let (mut shares, mut dislikes) = (0usize, 0usize);
        for imp in impressions {
            for c in &imp.candidates {
                shown += 1;
                if c.shared {
                    shares += 1;
                }
                if c.disliked {
                    dislikes += 1;
                }
            }
        }
        if shown == 0 {
            return CorpusTotals::default();
        }
        CorpusTotals {
            share_rate: shares as f64 / shown as f64,
            dislike_rate: dislikes as f64 / shown as f64,
        }
    }
}

/// Top-5 engagement metrics. Ratios are top-5 frequency over the dataset
/// base rate; `None` when the base rate (or the clicked top-5 pool) is
/// empty.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct EngagementMetrics {
    pub share_ratio: Option<f64>,
    pub dislike_ratio: Option<f64>,
    pub finish_rate: Option<f64>,
    pub mean_dwell: Option<f64>,
}

/// Pool each impression's top-5 by predicted score, then measure share and
/// dislike concentration against the corpus base rates, the finished
/// fraction of clicked top-5 items, and their mean dwell time.
pub fn engagement_metrics(
    impressions: &[RankedImpression],
    totals: &CorpusTotals,
) -> EngagementMetrics {
    let mut top_n = 0usize;
    let (mut top_shares, mut top_dislikes) = (0usize, 0usize);
    let (mut clicked_n, mut finished_n) = (0usize, 0usize);
    let mut dwell_sum = 0.0;
    let mut dwell_n = 0usize;

    for imp in impressions {
        let order = ranking(&imp.candidates);
        for &i in order.iter().take(5) {
            let c = &imp.candidates[i];
            top_n += 1;
            if c.shared {
                top_shares += 1;
            }
            if c.disliked {
                top_dislikes += 1;
            }
            if c.clicked {
                clicked_n += 1;
                if c.finished {
                    finished_n += 1;
                }
                if let Some(d) = c.dwell_time {
                    dwell_sum += d as f64;
                    dwell_n += 1;
                }
            }
        }
    }

    let ratio = |hits: usize, base: f64| -> Option<f64> {
        if base > 0.0 && top_n > 0 {
            Some((hits as f64 / top_n as f64) / base)
        } else {
            None
        }
    };
    EngagementMetrics {
        share_ratio: ratio(top_shares, totals.share_rate),
        dislike_ratio: ratio(top_dislikes, totals.dislike_rate),
        finish_rate: if clicked_n > 0 {
            Some(finished_n as f64 / clicked_n as f64)
        } else {
            None
        },
        mean_dwell: if dwell_n > 0 {
            Some(dwell_sum / dwell_n as f64)
        } else {
            None
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn cand(score: f64, clicked: bool) -> RankedCandidate {
        RankedCandidate {
            news_id: String::new(),
            score,
            clicked,
            shared: false,
            disliked: false,
            finished: false,
            dwell_time: None,
        }
    }

    fn imp(scores: &[(f64, bool)]) -> RankedImpression {
        RankedImpression {
            impression_id: "i".into(),
            candidates: scores.iter().map(|&(s, c)| cand(s, c)).collect(),
        }
    }

    #[test]
    fn perfect_ranking_is_all_ones() {
        let m = click_metrics(&[imp(&[
            (0.9, true),
            (0.5, false),
            (0.4, false),
            (0.3, false),
            (0.2, false),
        ])]);
        assert_eq!(m.auc, 1.0);
        assert_eq!(m.mrr, 1.0);
        assert_eq!(m.ndcg5, 1.0);
        assert_eq!(m.hr5, 1.0);
    }

    #[test]
    fn positive_ranked_second() {
        let m = click_metrics(&[imp(&[
            (0.9, false),
            (0.8, true),
            (0.4, false),
            (0.3, false),
            (0.2, false),
        ])]);
        assert_eq!(m.mrr, 0.5);
        let want = 1.0 / 3.0_f64.log2();
        assert!((m.ndcg5 - want).abs() < 1e-12);
        assert!((want - 0.6309).abs() < 1e-4);
        assert_eq!(m.hr5, 1.0);
        assert_eq!(m.auc, 0.75);
    }

    #[test]
    fn single_pair_auc_values() {
        assert_eq!(click_metrics(&[imp(&[(1.0, true), (0.0, false)])]).auc, 1.0);
        assert_eq!(click_metrics(&[imp(&[(0.0, true), (1.0, false)])]).auc, 0.0);
        assert_eq!(click_metrics(&[imp(&[(0.5, true), (0.5, false)])]).auc, 0.5);
    }

    #[test]
    fn no_positive_and_no_negative_counters() {
        let m = click_metrics(&[
            imp(&[(0.5, false), (0.4, false)]),
            imp(&[(0.5, true), (0.4, true)]),
            imp(&[(0.9, true), (0.1, false)]),
        ]);
        assert_eq!(m.skipped_no_positive, 1);
        assert_eq!(m.skipped_no_negative, 1);
        assert_eq!(m.auc, 1.0);
        // the all-clicked impression still counts for ranking metrics
        assert_eq!(m.mrr, 1.0);
    }

    fn random_fixture(rng: &mut impl Rng, max_cands: usize) -> RankedImpression {
        let n = rng.gen_range(2..=max_cands);
        let mut c: Vec<RankedCandidate> = (0..n)
            .map(|_| {
                // coarse scores force ties regularly
                let s = (rng.gen_range(0..8) as f64) / 4.0;
                cand(s, rng.gen_bool(0.4))
            })
            .collect();
        if !c.iter().any(|x| x.clicked) {
            c[0].clicked = true;
        }
        RankedImpression {
            impression_id: "r".into(),
            candidates: c,
        }
    }

    #[test]
    fn oracle_equivalence_on_random_fixtures() {
        let mut rng = crate::rng::stream(42, "metrics-fixtures", 0);
        for _ in 0..100 {
            let fixture = vec![random_fixture(&mut rng, 10)];
            let fast = click_metrics(&fixture);
            let slow = oracle_metrics(&fixture);
            assert!((fast.auc - slow.auc).abs() < 1e-9);
            assert!((fast.mrr - slow.mrr).abs() < 1e-9);
            assert!((fast.ndcg5 - slow.ndcg5).abs() < 1e-9);
            assert!((fast.hr5 - slow.hr5).abs() < 1e-9);
            assert_eq!(fast.skipped_no_negative, slow.skipped_no_negative);
        }
    }

    #[test]
    fn monotone_transform_leaves_metrics_unchanged() {
        let mut rng = crate::rng::stream(7, "metrics-mono", 0);
        for _ in 0..20 {
            let fixture = random_fixture(&mut rng, 8);
            let base = click_metrics(&[fixture.clone()]);
            let mut transformed = fixture.clone();
            for c in &mut transformed.candidates {
                c.score = (c.score * 2.0).exp(); // strictly monotone
            }
            let t = click_metrics(&[transformed]);
            assert!((base.auc - t.auc).abs() < 1e-9);
            assert!((base.mrr - t.mrr).abs() < 1e-9);
            assert!((base.ndcg5 - t.ndcg5).abs() < 1e-9);
            assert!((base.hr5 - t.hr5).abs() < 1e-9);
        }
    }

    #[test]
    fn swapping_a_click_upward_never_hurts() {
        let mut rng = crate::rng::stream(9, "metrics-swap", 0);
        for _ in 0..50 {
            let fixture = random_fixture(&mut rng, 8);
            let c = &fixture.candidates;
            let order = super::ranking(c);
            // find an adjacent (non-click, click) pair in rank order
            for w in order.windows(2) {
                if !c[w[0]].clicked && c[w[1]].clicked {
                    let mut improved = fixture.clone();
                    let hi = c[w[0]].score;
                    let lo = c[w[1]].score;
                    improved.candidates[w[1]].score = hi;
                    improved.candidates[w[0]].score = lo;
                    let a = click_metrics(&[fixture.clone()]);
                    let b = click_metrics(&[improved]);
                    assert!(b.mrr >= a.mrr - 1e-12);
                    assert!(b.ndcg5 >= a.ndcg5 - 1e-12);
                    assert!(b.hr5 >= a.hr5 - 1e-12);
                    break;
                }
            }
        }
    }

    #[test]
    fn engagement_hand_fixture() {
        // three impressions of 6 candidates; one share per impression,
        // always inside the top 5
        let mut imps = Vec::new();
        for _ in 0..3 {
            let mut c: Vec<RankedCandidate> = (0..6)
                .map(|i| {
                    let mut x = cand(1.0 - i as f64 * 0.1, i == 0);
                    x.dwell_time = if i == 0 { Some(40) } else { None };
                    x.finished = i == 0;
                    x
                })
                .collect();
            c[1].shared = true;
            imps.push(RankedImpression {
                impression_id: "e".into(),
                candidates: c,
            });
        }
        let totals = CorpusTotals::from_impressions(&imps);
        // 3 shares over 18 shown
        assert!((totals.share_rate - 3.0 / 18.0).abs() < 1e-12);
        let eng = engagement_metrics(&imps, &totals);
        // top-5 pool: 15 items, 3 shares → (3/15) / (3/18) = 1.2
        assert!((eng.share_ratio.unwrap() - 1.2).abs() < 1e-12);
        assert_eq!(eng.dislike_ratio, None);
        assert_eq!(eng.finish_rate, Some(1.0));
        assert_eq!(eng.mean_dwell, Some(40.0));
    }

    #[test]
    fn engagement_absent_when_no_clicks_in_top5() {
        let mut c: Vec<RankedCandidate> =
            (0..6).map(|i| cand(1.0 - i as f64 * 0.1, false)).collect();
        c[5].clicked = true; // clicked item ranked last, outside top 5
        c[5].dwell_time = Some(30);
        let imps = vec![RankedImpression {
            impression_id: "x".into(),
            candidates: c,
        }];
        let totals = CorpusTotals::from_impressions(&imps);
        let eng = engagement_metrics(&imps, &totals);
        assert_eq!(eng.finish_rate, None);
        assert_eq!(eng.mean_dwell, None);
    }
}
