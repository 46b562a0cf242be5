//! Synthetic multi-feedback corpus generator.
//!
//! A latent-factor click model drives everything: topics and users get unit
//! vectors, news inherit a noisy copy of their topic vector, and the
//! user-news dot product (standardized, `z`) controls click probability,
//! the fast-vs-slow dwell mixture, the finish flag, and explicit feedback.
//! Clicks are deliberately noisy while finish/quick-close track affinity
//! closely, so models that read post-click signals have something real to
//! learn that click-only models cannot see.
//!
//! Generation is deterministic: every stage draws from its own
//! seed-derived stream and the output is canonically sorted.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::feedlog::io::Corpus;
use crate::feedlog::{
    self, derive_feedbacks, FeedbackRecord, FeedbackType, ImpressionLog, NewsArticle, RawClick,
    RawImpression,
};
use crate::rng;
use crate::tape::sigmoid;

/// Threshold used when deriving quick_close records at generation time.
/// Training re-derives from click dwell times if its own threshold differs.
pub const GENERATION_T: u64 = 10;

const TOKENS_PER_TOPIC: u32 = 40;
const SHARED_TOKENS: u32 = 80;
const BASE_TIMESTAMP: u64 = 1_600_000_000;
const IMPRESSION_SPACING: u64 = 37;

/// Two-component dwell mixture in log-space seconds.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DwellMixture {
    pub weight_fast: f64,
    pub mean_fast: f64,
    pub sd_fast: f64,
    pub weight_slow: f64,
    pub mean_slow: f64,
    pub sd_slow: f64,
}

impl Default for DwellMixture {
    fn default() -> Self {
        // fast mode ~4s, slow mode ~90s
        DwellMixture {
            weight_fast: 0.35,
            mean_fast: 4.0_f64.ln(),
            sd_fast: 0.5,
            weight_slow: 0.65,
            mean_slow: 90.0_f64.ln(),
            sd_slow: 0.8,
        }
    }
}

/// Per-user activity weights: impressions are allotted proportionally to
/// lognormal draws, which makes per-user feedback counts heavy-tailed.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SkipCountLognormal {
    pub mu: f64,
    pub sigma: f64,
}

impl Default for SkipCountLognormal {
    fn default() -> Self {
        SkipCountLognormal { mu: 0.0, sigma: 1.0 }
    }
}

/// Click decision model: P(click) = sigmoid(logit(base_rate) +
/// affinity_slope * z + N(0, noise_sd)), plus curiosity "decoy" clicks that
/// ignore affinity entirely (decoy_rate per shown item). Decoys read the
/// fast dwell mode and never finish, so post-click signals expose them
/// while raw click logs cannot.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ClickModel {
    pub base_rate: f64,
    pub affinity_slope: f64,
    pub noise_sd: f64,
    pub decoy_rate: f64,
}

impl Default for ClickModel {
    fn default() -> Self {
        ClickModel {
            base_rate: 0.2,
            affinity_slope: 3.0,
            noise_sd: 0.9,
            decoy_rate: 0.06,
        }
    }
}

/// Explicit feedback probabilities per qualifying event: shares qualify on
/// finished high-affinity clicks, dislikes on quick-closed or low-affinity
/// clicks.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ExplicitRates {
    pub share_prob: f64,
    pub dislike_prob: f64,
}

impl Default for ExplicitRates {
    fn default() -> Self {
        ExplicitRates {
            share_prob: 0.010,
            dislike_prob: 0.15,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub n_users: usize,
    pub n_news: usize,
    pub n_impressions: usize,
    pub shown_per_impression: usize,
    pub topic_count: usize,
    pub user_interest_dim: usize,
    pub title_len: usize,
    pub click_model: ClickModel,
    pub dwell_mixture: DwellMixture,
    pub skip_count_lognormal: SkipCountLognormal,
    pub explicit_rates: ExplicitRates,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_users: 1000,
            n_news: 4000,
            n_impressions: 12000,
            shown_per_impression: 6,
            topic_count: 6,
            user_interest_dim: 6,
            title_len: 8,
            click_model: ClickModel::default(),
            dwell_mixture: DwellMixture::default(),
            skip_count_lognormal: SkipCountLognormal::default(),
            explicit_rates: ExplicitRates::default(),
            seed: 7,
        }
    }
}

impl GeneratorConfig {
    pub fn vocab_size(&self) -> u32 {
        self.topic_count as u32 * TOKENS_PER_TOPIC + SHARED_TOKENS
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 || self.n_news == 0 || self.n_impressions == 0 {
            return Err(Error::Config(
                "n_users, n_news and n_impressions must be positive".into(),
            ));
        }
        if self.shown_per_impression < 2 || self.shown_per_impression > self.n_news {
            return Err(Error::Config(
                "shown_per_impression must be >= 2 and <= n_news".into(),
            ));
        }
        if self.topic_count == 0 || self.user_interest_dim == 0 || self.title_len == 0 {
            return Err(Error::Config(
                "topic_count, user_interest_dim and title_len must be positive".into(),
            ));
        }
        let m = &self.dwell_mixture;
        for (name, p) in [
            ("weight_fast", m.weight_fast),
            ("weight_slow", m.weight_slow),
            ("share_prob", self.explicit_rates.share_prob),
            ("dislike_prob", self.explicit_rates.dislike_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        if (m.weight_fast + m.weight_slow - 1.0).abs() > 1e-9 {
            return Err(Error::Config("dwell mixture weights must sum to 1".into()));
        }
        if m.sd_fast <= 0.0 || m.sd_slow <= 0.0 || self.skip_count_lognormal.sigma <= 0.0 {
            return Err(Error::Config("lognormal sigmas must be positive".into()));
        }
        let cm = &self.click_model;
        if !(cm.base_rate > 0.0 && cm.base_rate < 1.0) || cm.noise_sd < 0.0 {
            return Err(Error::Config(
                "click base_rate must be in (0, 1) and noise_sd nonnegative".into(),
            ));
        }
        if !(0.0..1.0).contains(&cm.decoy_rate) {
            return Err(Error::Config("decoy_rate must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Diagnostics for one generated click (used by distribution tests).
#[derive(Clone, Copy, Debug)]
pub struct ClickTrace {
    pub affinity_z: f64,
    pub dwell: u64,
    pub finished: bool,
}

/// Diagnostics for one shown (impression, news) pair: the latent affinity
/// an oracle ranker would score by.
#[derive(Clone, Debug)]
pub struct ShownTrace {
    pub impression_id: String,
    pub news_id: String,
    pub affinity_z: f64,
    pub clicked: bool,
}

fn unit_vec(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn user_id(i: usize) -> String {
    format!("u{i:05}")
}

fn news_id(i: usize) -> String {
    format!("n{i:06}")
}

/// Generate a corpus plus per-click traces.
pub fn generate_corpus_with_trace(config: &GeneratorConfig) -> Result<(Corpus, Vec<ClickTrace>)> {
    generate_corpus_full(config).map(|(c, t, _)| (c, t))
}

/// Generate a corpus plus click traces and per-shown-pair affinities.
pub fn generate_corpus_full(
    config: &GeneratorConfig,
) -> Result<(Corpus, Vec<ClickTrace>, Vec<ShownTrace>)> {
    config.validate()?;
    let seed = config.seed;
    let dim = config.user_interest_dim;
    let z_scale = (dim as f64).sqrt();

    // Latent topic, user and news vectors.
    let mut topic_rng = rng::stream(seed, "topics", 0);
    let topics: Vec<Vec<f64>> = (0..config.topic_count)
        .map(|_| unit_vec(&mut topic_rng, dim))
        .collect();

    let mut user_rng = rng::stream(seed, "users", 0);
    let users: Vec<Vec<f64>> = (0..config.n_users)
        .map(|_| unit_vec(&mut user_rng, dim))
        .collect();

    let mut news_rng = rng::stream(seed, "news", 0);
    let noise = Normal::new(0.0, 0.35).unwrap();
    let mut news = Vec::with_capacity(config.n_news);
    let mut news_vecs = Vec::with_capacity(config.n_news);
    for i in 0..config.n_news {
        let topic = news_rng.gen_range(0..config.topic_count);
        let mut v: Vec<f64> = topics[topic]
            .iter()
            .map(|&x| x + noise.sample(&mut news_rng))
            .collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        v.iter_mut().for_each(|x| *x /= n);
        news_vecs.push(v);

        // titles mix topic-specific tokens with a shared pool
        let topic_base = topic as u32 * TOKENS_PER_TOPIC;
        let shared_base = config.topic_count as u32 * TOKENS_PER_TOPIC;
        let title_tokens: Vec<u32> = (0..config.title_len)
            .map(|_| {
                if news_rng.gen::<f64>() < 0.7 {
                    topic_base + news_rng.gen_range(0..TOKENS_PER_TOPIC)
                } else {
                    shared_base + news_rng.gen_range(0..SHARED_TOKENS)
                }
            })
            .collect();
        news.push(NewsArticle {
            news_id: news_id(i),
            title_tokens,
            category_id: topic as u32,
        });
    }

    // Heavy-tailed user activity weights → cumulative distribution.
    let mut weight_rng = rng::stream(seed, "user-weights", 0);
    let ln = Normal::new(
        config.skip_count_lognormal.mu,
        config.skip_count_lognormal.sigma,
    )
    .unwrap();
    let weights: Vec<f64> = (0..config.n_users)
        .map(|_| ln.sample(&mut weight_rng).exp())
        .collect();
    let total_w: f64 = weights.iter().sum();
    let mut cumulative = Vec::with_capacity(config.n_users);
    let mut acc = 0.0;
    for w in &weights {
        acc += w / total_w;
        cumulative.push(acc);
    }

    let mix = &config.dwell_mixture;
    let fast_logit = (mix.weight_fast.max(1e-9) / (1.0 - mix.weight_fast).max(1e-9)).ln();
    let cm = &config.click_model;
    let click_base_logit = (cm.base_rate / (1.0 - cm.base_rate)).ln();

    let mut raw_impressions = Vec::with_capacity(config.n_impressions);
    let mut explicit = Vec::new();
    let mut traces = Vec::new();
    let mut shown_traces = Vec::new();

    for i in 0..config.n_impressions {
        let mut r = rng::stream(seed, "impression", i as u64);
        let timestamp = BASE_TIMESTAMP + i as u64 * IMPRESSION_SPACING;

        // pick the user by activity weight
        let draw: f64 = r.gen();
        let uid = cumulative
            .partition_point(|&c| c < draw)
            .min(config.n_users - 1);
        let uvec = &users[uid];

        // distinct shown news
        let mut shown_idx = Vec::with_capacity(config.shown_per_impression);
        let mut seen = std::collections::HashSet::new();
        while shown_idx.len() < config.shown_per_impression {
            let n = r.gen_range(0..config.n_news);
            if seen.insert(n) {
                shown_idx.push(n);
            }
        }

        let mut clicked = Vec::new();
        let mut clicks = Vec::new();
        let impression_id = format!("i{i:07}");
        for &n in &shown_idx {
            let z = dot(uvec, &news_vecs[n]) * z_scale;
            let noise: f64 = if cm.noise_sd > 0.0 {
                Normal::new(0.0, cm.noise_sd).unwrap().sample(&mut r)
            } else {
                0.0
            };
            let p_click = sigmoid(click_base_logit + cm.affinity_slope * z + noise);
            let decoy = r.gen::<f64>() < cm.decoy_rate;
            let was_clicked = decoy || r.gen::<f64>() < p_click;
            shown_traces.push(ShownTrace {
                impression_id: impression_id.clone(),
                news_id: news_id(n),
                affinity_z: z,
                clicked: was_clicked,
            });
            if !was_clicked {
                continue;
            }
            // dwell: affinity shifts the fast/slow component choice;
            // decoys almost always read the fast mode
            let p_fast = if decoy {
                0.92
            } else {
                sigmoid(fast_logit - 1.6 * z)
            };
            let (mu, sd) = if r.gen::<f64>() < p_fast {
                (mix.mean_fast, mix.sd_fast)
            } else {
                (mix.mean_slow, mix.sd_slow)
            };
            let dwell = Normal::new(mu, sd)
                .unwrap()
                .sample(&mut r)
                .exp()
                .round()
                .max(0.0) as u64;
            // finishing requires a real read and tracks affinity + dwell
            let finished = if dwell >= GENERATION_T {
                let p =
                    sigmoid(-0.8 + 1.8 * z + 0.3 * ((dwell as f64 + 1.0).ln() - 60.0_f64.ln()));
                r.gen::<f64>() < p
            } else {
                false
            };
            traces.push(ClickTrace {
                affinity_z: z,
                dwell,
                finished,
            });

            let id = news_id(n);
            clicked.push(id.clone());
            clicks.push(RawClick {
                news_id: id.clone(),
                dwell_time: dwell,
                finished,
            });

            // explicit feedback on qualifying clicks
            if finished && z > 0.25 && r.gen::<f64>() < config.explicit_rates.share_prob {
                explicit.push(FeedbackRecord {
                    user_id: user_id(uid),
                    news_id: id.clone(),
                    feedback: FeedbackType::Share,
                    event_time: timestamp + 1,
                    dwell_time: None,
                });
            }
            if (dwell < GENERATION_T || z < -0.25)
                && r.gen::<f64>() < config.explicit_rates.dislike_prob
            {
                explicit.push(FeedbackRecord {
                    user_id: user_id(uid),
                    news_id: id,
                    feedback: FeedbackType::Dislike,
                    event_time: timestamp + 1,
                    dwell_time: None,
                });
            }
        }

        raw_impressions.push(RawImpression {
            impression: ImpressionLog {
                impression_id,
                user_id: user_id(uid),
                shown_news: shown_idx.iter().map(|&n| news_id(n)).collect(),
                clicked,
                timestamp,
            },
            clicks,
        });
    }

    let feedback = derive_feedbacks(&raw_impressions, &explicit, GENERATION_T)?;
    let impressions = raw_impressions.into_iter().map(|r| r.impression).collect();
    Ok((
        Corpus {
            news,
            impressions,
            feedback,
        },
        traces,
        shown_traces,
    ))
}

/// Generate a corpus; deterministic for a given config.
pub fn generate_corpus(config: &GeneratorConfig) -> Result<Corpus> {
    generate_corpus_with_trace(config).map(|(c, _)| c)
}

/// Percentile summary plus a log2-bucketed histogram of per-user counts.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerUserCounts {
    pub p10: f64,
    pub median: f64,
    pub p90: f64,
    pub max: u64,
    /// histogram over quantize_time(count) buckets
    pub histogram: Vec<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_users: usize,
    pub n_news: usize,
    pub n_impressions: usize,
    pub counts: BTreeMap<String, u64>,
    pub mean_dwell: f64,
    pub per_user: BTreeMap<String, PerUserCounts>,
}

fn percentile(sorted: &[u64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] as f64 * (1.0 - frac) + sorted[hi] as f64 * frac
}

/// Exhaustive tally of a corpus: per-type counts, mean click dwell, and
/// per-user count distributions per type.
pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut per_user_raw: BTreeMap<FeedbackType, BTreeMap<&str, u64>> = BTreeMap::new();
    let mut dwell_sum = 0u64;
    let mut dwell_n = 0u64;
    for r in &corpus.feedback {
        *counts.entry(r.feedback.as_str().to_string()).or_insert(0) += 1;
        *per_user_raw
            .entry(r.feedback)
            .or_default()
            .entry(r.user_id.as_str())
            .or_insert(0) += 1;
        if r.feedback == FeedbackType::Click {
            dwell_sum += r.dwell_time.expect("click carries dwell");
            dwell_n += 1;
        }
    }
    let mut per_user = BTreeMap::new();
    for (ty, users) in per_user_raw {
        let mut vals: Vec<u64> = users.values().copied().collect();
        vals.sort_unstable();
        let mut histogram = vec![0u64; feedlog::BUCKET_CAP as usize + 1];
        for &v in &vals {
            histogram[feedlog::quantize_time(v as f64).unwrap() as usize] += 1;
        }
        per_user.insert(
            ty.as_str().to_string(),
            PerUserCounts {
                p10: percentile(&vals, 0.1),
                median: percentile(&vals, 0.5),
                p90: percentile(&vals, 0.9),
                max: vals.last().copied().unwrap_or(0),
                histogram,
            },
        );
    }
    let users: std::collections::HashSet<&str> = corpus
        .impressions
        .iter()
        .map(|i| i.user_id.as_str())
        .collect();
    CorpusStats {
        n_users: users.len(),
        n_news: corpus.news.len(),
        n_impressions: corpus.impressions.len(),
        counts,
        mean_dwell: if dwell_n > 0 {
            dwell_sum as f64 / dwell_n as f64
        } else {
            0.0
        },
        per_user,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> GeneratorConfig {
        GeneratorConfig {
            n_users: 60,
            n_news: 300,
            n_impressions: 500,
            seed: 11,
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small_config();
        let a = generate_corpus(&cfg).unwrap();
        let b = generate_corpus(&cfg).unwrap();
        assert_eq!(a.news, b.news);
        assert_eq!(a.impressions, b.impressions);
        assert_eq!(a.feedback, b.feedback);
    }

    #[test]
    fn zero_users_is_a_config_error() {
        let mut cfg = small_config();
        cfg.n_users = 0;
        assert!(generate_corpus(&cfg).is_err());
        let mut cfg2 = small_config();
        cfg2.n_news = 0;
        assert!(generate_corpus(&cfg2).is_err());
    }

    #[test]
    fn references_are_internally_consistent() {
        let cfg = small_config();
        let corpus = generate_corpus(&cfg).unwrap();
        let catalog: std::collections::HashSet<&str> =
            corpus.news.iter().map(|n| n.news_id.as_str()).collect();
        for r in &corpus.feedback {
            assert!(catalog.contains(r.news_id.as_str()));
            r.validate().unwrap();
        }
        for imp in &corpus.impressions {
            imp.validate().unwrap();
            for n in &imp.shown_news {
                assert!(catalog.contains(n.as_str()));
            }
        }
        for n in &corpus.news {
            assert!(!n.title_tokens.is_empty());
            assert!(n.title_tokens.iter().all(|&t| t < cfg.vocab_size()));
        }
    }

    #[test]
    fn quick_close_never_finishes_and_dwell_below_threshold() {
        let corpus = generate_corpus(&small_config()).unwrap();
        use std::collections::HashSet;
        let quick: HashSet<(&str, &str, u64)> = corpus
            .feedback
            .iter()
            .filter(|r| r.feedback == FeedbackType::QuickClose)
            .map(|r| (r.user_id.as_str(), r.news_id.as_str(), r.event_time))
            .collect();
        for r in &corpus.feedback {
            if r.feedback == FeedbackType::QuickClose {
                assert!(r.dwell_time.unwrap() < GENERATION_T);
            }
            if r.feedback == FeedbackType::Finish {
                let key = (r.user_id.as_str(), r.news_id.as_str(), r.event_time);
                assert!(!quick.contains(&key), "finish and quick_close co-occur");
            }
        }
    }

    #[test]
    fn stats_counts_match_exhaustive_tally() {
        let corpus = generate_corpus(&small_config()).unwrap();
        let stats = corpus_stats(&corpus);
        let clicks = corpus
            .feedback
            .iter()
            .filter(|r| r.feedback == FeedbackType::Click)
            .count() as u64;
        assert_eq!(stats.counts.get("click"), Some(&clicks));
        let dwells: Vec<u64> = corpus
            .feedback
            .iter()
            .filter(|r| r.feedback == FeedbackType::Click)
            .map(|r| r.dwell_time.unwrap())
            .collect();
        let mean = dwells.iter().sum::<u64>() as f64 / dwells.len() as f64;
        assert!((stats.mean_dwell - mean).abs() < 1e-9);
    }

    #[test]
    fn stats_tiny_fixture() {
        let corpus = Corpus {
            news: vec![],
            impressions: vec![],
            feedback: vec![
                FeedbackRecord {
                    user_id: "u1".into(),
                    news_id: "n1".into(),
                    feedback: FeedbackType::Click,
                    event_time: 1,
                    dwell_time: Some(10),
                },
                FeedbackRecord {
                    user_id: "u1".into(),
                    news_id: "n2".into(),
                    feedback: FeedbackType::Click,
                    event_time: 2,
                    dwell_time: Some(20),
                },
                FeedbackRecord {
                    user_id: "u2".into(),
                    news_id: "n3".into(),
                    feedback: FeedbackType::Click,
                    event_time: 3,
                    dwell_time: Some(30),
                },
                FeedbackRecord {
                    user_id: "u2".into(),
                    news_id: "n3".into(),
                    feedback: FeedbackType::Share,
                    event_time: 4,
                    dwell_time: None,
                },
            ],
        };
        let stats = corpus_stats(&corpus);
        assert_eq!(stats.counts.get("click"), Some(&3));
        assert_eq!(stats.counts.get("share"), Some(&1));
        assert_eq!(stats.mean_dwell, 20.0);
    }

    #[test]
    fn affinity_terciles_have_nondecreasing_finish_rate() {
        let cfg = GeneratorConfig {
            n_users: 300,
            n_news: 1500,
            n_impressions: 12_000,
            seed: 5,
            ..GeneratorConfig::default()
        };
        let (_, traces) = generate_corpus_with_trace(&cfg).unwrap();
        assert!(
            traces.len() >= 10_000,
            "need >=10k clicks, got {}",
            traces.len()
        );
        let mut sorted = traces.clone();
        sorted.sort_by(|a, b| a.affinity_z.partial_cmp(&b.affinity_z).unwrap());
        let third = sorted.len() / 3;
        let rate =
            |s: &[ClickTrace]| s.iter().filter(|t| t.finished).count() as f64 / s.len() as f64;
        let lo = rate(&sorted[..third]);
        let mid = rate(&sorted[third..2 * third]);
        let hi = rate(&sorted[2 * third..]);
        assert!(lo <= mid && mid <= hi, "terciles {lo:.3} {mid:.3} {hi:.3}");
    }
}
