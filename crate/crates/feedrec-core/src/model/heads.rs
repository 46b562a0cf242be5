//! Prediction heads, the four training losses, and negative-sample
//! assembly.
//!
//! Click loss: sampled-softmax cross entropy over one clicked news and K
//! skipped news from the same impression. Finish loss: binary cross entropy
//! on the clicked news. Dwell loss: absolute error on the normalized dwell
//! label. Disentangling loss: cosine similarity of the weak-positive and
//! weak-negative interest vectors.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedlog::{FeedbackRecord, FeedbackType, ImpressionLog};
use crate::rng;
use crate::tape::{Tape, Var};

use super::{Forward, ModelIndex};

/// Loss mixing weights.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 0.2,
            beta: 0.15,
            gamma: 0.2,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.beta < 0.0 || self.gamma < 0.0 {
            return Err(Error::Config("loss weights must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Predicted click score, finish logit, and clamped dwell estimate.
#[derive(Clone, Copy, Debug)]
pub struct Scores {
    pub click: Var,
    pub finish_logit: Var,
    pub dwell: Var,
}

/// ŷ = u·e, ẑ = u·(W_z e), t̂ = max(0, u·(W_t e)).
pub fn score(fwd: &mut Forward, idx: &ModelIndex, u: Var, e: Var) -> Scores {
    let wz = fwd.bind(idx.head_finish);
    let wt = fwd.bind(idx.head_dwell);
    let t = &mut fwd.tape;
    assert_eq!(t.value(u).cols(), t.value(e).cols(), "dimension mismatch");
    let click = t.dot(u, e);
    let ez = t.matmul_nt(e, wz);
    let finish_logit = t.dot(u, ez);
    let et = t.matmul_nt(e, wt);
    let pre = t.dot(u, et);
    let dwell = t.relu(pre);
    Scores {
        click,
        finish_logit,
        dwell,
    }
}

/// log-transformed dwell label in [0, 1]: log2(min(t, t_max)+1) / log2(t_max+1).
pub fn normalize_dwell(t: f64, t_max: f64) -> f64 {
    assert!(t >= 0.0 && t_max > 0.0);
    (t.min(t_max) + 1.0).log2() / (t_max + 1.0).log2()
}

/// Sampled-softmax ranking loss over the positive and K negative scores,
/// computed as logsumexp(all) − positive for stability.
pub fn loss_click(t: &mut Tape, positive: Var, negatives: &[Var]) -> Var {
    let mut all = Vec::with_capacity(negatives.len() + 1);
    all.push(positive);
    all.extend_from_slice(negatives);
    let row = t.concat_cols(&all);
    let lse = t.logsumexp(row);
    t.sub(lse, positive)
}

/// Binary cross entropy of σ(logit) against a {0,1} label, in the stable
/// softplus form: softplus(logit) − label·logit.
pub fn loss_finish(t: &mut Tape, logit: Var, label: f64) -> Var {
    let sp = t.softplus(logit);
    if label == 0.0 {
        sp
    } else {
        let scaled = t.scale(logit, label);
        t.sub(sp, scaled)
    }
}

/// Absolute error against the normalized dwell label.
pub fn loss_dwell(t: &mut Tape, predicted: Var, label: f64) -> Var {
    let lab = t.leaf_mat(crate::mat::Mat::scalar(label));
    let diff = t.sub(predicted, lab);
    t.abs(diff)
}

/// Cosine similarity of the weak-positive and weak-negative vectors. If
/// either norm falls below 1e-8 the loss is a constant zero (empty weak
/// groups produce zero vectors).
pub fn loss_disentangle(t: &mut Tape, weak_pos: Var, weak_neg: Var) -> Var {
    let np2 = t.dot(weak_pos, weak_pos);
    let nn2 = t.dot(weak_neg, weak_neg);
    let (np, nn) = (t.value(np2).item().sqrt(), t.value(nn2).item().sqrt());
    if np < 1e-8 || nn < 1e-8 {
        return t.constant(0.0);
    }
    let dot = t.dot(weak_pos, weak_neg);
    let np_v = t.sqrt(np2);
    let nn_v = t.sqrt(nn2);
    let denom = t.mul(np_v, nn_v);
    t.div(dot, denom)
}

/// L = L_R + α·L_F + β·L_T + γ·L_D.
pub fn loss_total(
    t: &mut Tape,
    l_click: Var,
    l_finish: Var,
    l_dwell: Var,
    l_disentangle: Var,
    weights: &LossWeights,
) -> Var {
    let f = t.scale(l_finish, weights.alpha);
    let d = t.scale(l_dwell, weights.beta);
    let g = t.scale(l_disentangle, weights.gamma);
    let a = t.add(l_click, f);
    let b = t.add(a, d);
    t.add(b, g)
}

/// One training sample: a clicked news, K same-impression skipped news, and
/// the engagement labels of the click. The user state is addressed by
/// (user_id, timestamp) and resolved against the history index at encode
/// time.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample {
    pub user_id: String,
    pub impression_id: String,
    pub timestamp: u64,
    pub positive: String,
    pub negatives: Vec<String>,
    pub finish_label: bool,
    pub dwell_label: f64,
}

/// Build one sample per clicked news. Impressions with at least K skips
/// sample negatives without replacement; shorter ones sample with
/// replacement; impressions with zero skips are dropped and counted.
pub fn build_samples(
    impressions: &[ImpressionLog],
    feedback: &[FeedbackRecord],
    k: usize,
    t_max: f64,
    seed: u64,
) -> Result<(Vec<TrainingSample>, usize)> {
    if k == 0 {
        return Err(Error::Config("negative sampling ratio K must be >= 1".into()));
    }
    // (user, news, time) → (dwell, finished)
    let mut labels: HashMap<(&str, &str, u64), (u64, bool)> = HashMap::new();
    for r in feedback {
        match r.feedback {
            FeedbackType::Click => {
                let e = labels
                    .entry((r.user_id.as_str(), r.news_id.as_str(), r.event_time))
                    .or_insert((0, false));
                e.0 = r.dwell_time.expect("click carries dwell");
            }
            FeedbackType::Finish => {
                let e = labels
                    .entry((r.user_id.as_str(), r.news_id.as_str(), r.event_time))
                    .or_insert((0, false));
                e.1 = true;
            }
            _ => {}
        }
    }

    let mut out = Vec::new();
    let mut dropped = 0usize;
    for imp in impressions {
        let clicked: std::collections::HashSet<&str> =
            imp.clicked.iter().map(|s| s.as_str()).collect();
        let skips: Vec<&String> = imp
            .shown_news
            .iter()
            .filter(|n| !clicked.contains(n.as_str()))
            .collect();
        let mut rng = rng::stream_keyed(seed, "negatives", &imp.impression_id);
        for pos in &imp.clicked {
            if skips.is_empty() {
                dropped += 1;
                continue;
            }
            let negatives: Vec<String> = if skips.len() >= k {
                // partial Fisher–Yates over indices
                let mut idx: Vec<usize> = (0..skips.len()).collect();
                for i in 0..k {
                    let j = i + rng.gen_range(0..idx.len() - i);
                    idx.swap(i, j);
                }
                idx[..k].iter().map(|&i| skips[i].clone()).collect()
            } else {
                (0..k)
                    .map(|_| skips[rng.gen_range(0..skips.len())].clone())
                    .collect()
            };
            let (dwell, finished) = labels
                .get(&(imp.user_id.as_str(), pos.as_str(), imp.timestamp))
                .copied()
                .ok_or_else(|| {
                    Error::Data(format!(
                        "no click record for ({}, {}) at {}",
                        imp.user_id, pos, imp.timestamp
                    ))
                })?;
            out.push(TrainingSample {
                user_id: imp.user_id.clone(),
                impression_id: imp.impression_id.clone(),
                timestamp: imp.timestamp,
                positive: pos.clone(),
                negatives,
                finish_label: finished,
                dwell_label: normalize_dwell(dwell as f64, t_max),
            });
        }
    }
    Ok((out, dropped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat::Mat;
    use crate::model::{Ablation, Dims, ModelIndex, Params};

    fn setup() -> (Params, ModelIndex, Dims) {
        let dims = Dims {
            d: 4,
            heads: 2,
            d_ff: 4,
            title_len: 4,
            max_seq: 8,
            vocab: 10,
        };
        let mut params = Params::new();
        let idx = ModelIndex::init(&mut params, &dims, 44).unwrap();
        (params, idx, dims)
    }

    #[test]
    fn zero_user_scores_zero() {
        let (params, idx, _dims) = setup();
        let mut f = Forward::new(&params);
        let u = f.tape.leaf_mat(Mat::zeros(1, 4));
        let e = f.tape.leaf_mat(Mat::row_vec(vec![1.0, 2.0, 3.0, 4.0]));
        let s = score(&mut f, &idx, u, e);
        assert_eq!(f.tape.value(s.click).item(), 0.0);
        assert_eq!(f.tape.value(s.finish_logit).item(), 0.0);
        assert_eq!(f.tape.value(s.dwell).item(), 0.0);
    }

    #[test]
    fn dwell_head_clamps_at_zero() {
        let (mut params, idx, _dims) = setup();
        // W_t = -identity so u·(W_t e) = -(u·e)
        let mut wt = Mat::zeros(4, 4);
        for i in 0..4 {
            *wt.at_mut(i, i) = -1.0;
        }
        params.set(idx.head_dwell, wt);
        let mut f = Forward::new(&params);
        let u = f.tape.leaf_mat(Mat::row_vec(vec![1.0, 1.0, 1.0, 0.0]));
        let e = f.tape.leaf_mat(Mat::row_vec(vec![1.0, 1.0, 1.0, 0.0]));
        let s = score(&mut f, &idx, u, e);
        assert_eq!(f.tape.value(s.dwell).item(), 0.0);
        assert_eq!(f.tape.value(s.click).item(), 3.0);
    }

    #[test]
    fn identity_finish_head_on_basis_vector() {
        let (mut params, idx, _dims) = setup();
        let mut wz = Mat::zeros(4, 4);
        for i in 0..4 {
            *wz.at_mut(i, i) = 1.0;
        }
        params.set(idx.head_finish, wz);
        let mut f = Forward::new(&params);
        let u = f.tape.leaf_mat(Mat::row_vec(vec![1.0, 0.0, 0.0, 0.0]));
        let e = f.tape.leaf_mat(Mat::row_vec(vec![1.0, 0.0, 0.0, 0.0]));
        let s = score(&mut f, &idx, u, e);
        assert_eq!(f.tape.value(s.click).item(), 1.0);
        assert_eq!(f.tape.value(s.finish_logit).item(), 1.0);
    }

    #[test]
    fn click_loss_uniform_scores() {
        let mut t = Tape::new();
        let pos = t.constant(0.7);
        let negs: Vec<Var> = (0..4).map(|_| t.constant(0.7)).collect();
        let l = loss_click(&mut t, pos, &negs);
        assert!((t.value(l).item() - 5.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn click_loss_known_value_and_monotonicity() {
        let mut t = Tape::new();
        let pos = t.constant(1.0);
        let negs: Vec<Var> = (0..4).map(|_| t.constant(0.0)).collect();
        let l = loss_click(&mut t, pos, &negs);
        let expected = -(1.0_f64.exp() / (1.0_f64.exp() + 4.0)).ln();
        assert!((t.value(l).item() - expected).abs() < 1e-12);
        assert!((expected - 0.904832441554448).abs() < 1e-12);

        // strictly decreasing in the positive score on a grid
        let mut last = f64::INFINITY;
        for i in 0..20 {
            let y = -2.0 + i as f64 * 0.5;
            let mut t = Tape::new();
            let p = t.constant(y);
            let negs: Vec<Var> = (0..4).map(|_| t.constant(0.0)).collect();
            let l = loss_click(&mut t, p, &negs);
            let v = t.value(l).item();
            assert!(v < last && v >= 0.0);
            last = v;
        }
    }

    #[test]
    fn finish_loss_at_zero_logit_is_ln2() {
        for label in [0.0, 1.0] {
            let mut t = Tape::new();
            let z = t.constant(0.0);
            let l = loss_finish(&mut t, z, label);
            assert!((t.value(l).item() - 2.0_f64.ln()).abs() < 1e-12);
        }
        // large logit with positive label → loss near zero
        let mut t = Tape::new();
        let z = t.constant(30.0);
        let l = loss_finish(&mut t, z, 1.0);
        assert!(t.value(l).item() < 1e-12);
    }

    #[test]
    fn dwell_loss_is_symmetric_absolute_error() {
        let mut t = Tape::new();
        let a = t.constant(0.3);
        let l1 = loss_dwell(&mut t, a, 0.8);
        assert!((t.value(l1).item() - 0.5).abs() < 1e-12);
        let b = t.constant(0.8);
        let l2 = loss_dwell(&mut t, b, 0.3);
        assert_eq!(t.value(l1).item(), t.value(l2).item());
        let c = t.constant(0.4);
        let l3 = loss_dwell(&mut t, c, 0.4);
        assert_eq!(t.value(l3).item(), 0.0);
    }

    #[test]
    fn disentangle_extremes_and_guard() {
        let mut t = Tape::new();
        let a = t.leaf_mat(Mat::row_vec(vec![1.0, 0.0]));
        let b = t.leaf_mat(Mat::row_vec(vec![0.0, 2.0]));
        let l = loss_disentangle(&mut t, a, b);
        assert_eq!(t.value(l).item(), 0.0);

        let c = t.leaf_mat(Mat::row_vec(vec![0.5, 0.5]));
        let l2 = loss_disentangle(&mut t, c, c);
        assert!((t.value(l2).item() - 1.0).abs() < 1e-12);

        let d = t.leaf_mat(Mat::row_vec(vec![-0.5, -0.5]));
        let l3 = loss_disentangle(&mut t, c, d);
        assert!((t.value(l3).item() + 1.0).abs() < 1e-12);

        let z = t.leaf_mat(Mat::zeros(1, 2));
        let l4 = loss_disentangle(&mut t, c, z);
        assert_eq!(t.value(l4).item(), 0.0);
    }

    #[test]
    fn disentangle_scale_invariance() {
        let mut t = Tape::new();
        let a = t.leaf_mat(Mat::row_vec(vec![0.3, -0.2, 0.9]));
        let b = t.leaf_mat(Mat::row_vec(vec![-0.5, 0.1, 0.4]));
        let base = loss_disentangle(&mut t, a, b);
        let a2 = t.scale(a, 3.7);
        let b2 = t.scale(b, 0.01);
        let scaled = loss_disentangle(&mut t, a2, b2);
        assert!((t.value(base).item() - t.value(scaled).item()).abs() < 1e-12);
        let v = t.value(base).item();
        assert!((-1.0..=1.0).contains(&v));
    }

    #[test]
    fn total_is_weighted_sum_and_linear() {
        let mut t = Tape::new();
        let (r, f, d, g) = (
            t.constant(1.0),
            t.constant(2.0),
            t.constant(3.0),
            t.constant(4.0),
        );
        let ones = LossWeights {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
        };
        let total = loss_total(&mut t, r, f, d, g, &ones);
        assert_eq!(t.value(total).item(), 10.0);

        let zeros = LossWeights {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
        };
        let only_click = loss_total(&mut t, r, f, d, g, &zeros);
        assert_eq!(t.value(only_click).item(), 1.0);

        let defaults = LossWeights::default();
        let (r1, f1, d1, g1) = (
            t.constant(1.0),
            t.constant(1.0),
            t.constant(1.0),
            t.constant(1.0),
        );
        let def = loss_total(&mut t, r1, f1, d1, g1, &defaults);
        assert!((t.value(def).item() - 1.55).abs() < 1e-12);

        // superposition in the finish component
        let f2 = t.constant(5.0);
        let t1 = loss_total(&mut t, r, f, d, g, &defaults);
        let t2 = loss_total(&mut t, r, f2, d, g, &defaults);
        let diff = t.value(t2).item() - t.value(t1).item();
        assert!((diff - defaults.alpha * 3.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_dwell_fixed_points() {
        assert_eq!(normalize_dwell(0.0, 1800.0), 0.0);
        assert!((normalize_dwell(1800.0, 1800.0) - 1.0).abs() < 1e-12);
        assert!((normalize_dwell(5000.0, 1800.0) - 1.0).abs() < 1e-12);
        let v = normalize_dwell(84.0, 1800.0);
        let direct = 85.0_f64.log2() / 1801.0_f64.log2();
        assert!((v - direct).abs() < 1e-12);
        assert!((v - 0.5926).abs() < 5e-4);
    }

    fn imp(id: &str, shown: usize, clicked: &[usize], ts: u64) -> ImpressionLog {
        ImpressionLog {
            impression_id: id.into(),
            user_id: "u1".into(),
            shown_news: (0..shown).map(|i| format!("n{i}")).collect(),
            clicked: clicked.iter().map(|i| format!("n{i}")).collect(),
            timestamp: ts,
        }
    }

    fn click_record(news: &str, ts: u64, dwell: u64) -> FeedbackRecord {
        FeedbackRecord {
            user_id: "u1".into(),
            news_id: news.into(),
            feedback: FeedbackType::Click,
            event_time: ts,
            dwell_time: Some(dwell),
        }
    }

    #[test]
    fn build_samples_without_replacement_when_enough_skips() {
        let imps = vec![imp("i1", 6, &[0], 10)];
        let fb = vec![click_record("n0", 10, 30)];
        let (samples, dropped) = build_samples(&imps, &fb, 4, 1800.0, 7).unwrap();
        assert_eq!(dropped, 0);
        assert_eq!(samples.len(), 1);
        let negs = &samples[0].negatives;
        assert_eq!(negs.len(), 4);
        let unique: std::collections::HashSet<&String> = negs.iter().collect();
        assert_eq!(unique.len(), 4, "without replacement");
        assert!(!negs.contains(&"n0".to_string()));
    }

    #[test]
    fn build_samples_with_replacement_fallback() {
        let imps = vec![imp("i1", 2, &[0], 10)];
        let fb = vec![click_record("n0", 10, 12)];
        let (samples, dropped) = build_samples(&imps, &fb, 4, 1800.0, 7).unwrap();
        assert_eq!(dropped, 0);
        assert_eq!(samples[0].negatives, vec!["n1"; 4]);
    }

    #[test]
    fn build_samples_drops_zero_skip_impressions() {
        let imps = vec![imp("i1", 2, &[0, 1], 10)];
        let fb = vec![click_record("n0", 10, 12), click_record("n1", 10, 40)];
        let (samples, dropped) = build_samples(&imps, &fb, 4, 1800.0, 7).unwrap();
        assert!(samples.is_empty());
        assert_eq!(dropped, 2);
    }

    #[test]
    fn build_samples_is_deterministic() {
        let imps = vec![imp("i1", 8, &[0, 2], 10), imp("i2", 8, &[1], 20)];
        let fb = vec![
            click_record("n0", 10, 12),
            click_record("n2", 10, 40),
            click_record("n1", 20, 9),
        ];
        let a = build_samples(&imps, &fb, 3, 1800.0, 99).unwrap();
        let b = build_samples(&imps, &fb, 3, 1800.0, 99).unwrap();
        assert_eq!(a.0, b.0);
    }
}
