//! End-to-end optimization: chronological splitting, per-sample forward and
//! backward passes, adaptive-moment updates, ablation switches, evaluation
//! scoring, gradient checking and checkpoints.
//!
//! Determinism: every random stage draws from a (seed, label, index)
//! derived stream, and batch gradients are accumulated in sample order no
//! matter how many threads computed them, so results are bit-reproducible
//! across runs and thread counts.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedlog::io::Corpus;
use crate::feedlog::{
    quantize_time, rederive_quick_close, subsample_skips, FeedbackRecord, FeedbackType,
    ImpressionLog, NewsArticle,
};
use crate::metrics::{click_metrics, RankedCandidate, RankedImpression};
use crate::model::heads::{
    self, build_samples, loss_click, loss_disentangle, loss_dwell, loss_finish, loss_total,
    LossWeights, TrainingSample,
};
use crate::model::news::{encode_candidate, CandidateInput, RecordInput};
use crate::model::user::encode_user;
use crate::model::{Ablation, Dims, Forward, GradAccum, ModelIndex, Params};
use crate::rng;
use crate::tape::Var;

pub use checkpoint::Checkpoint;
pub use gradcheck::{gradcheck, gradcheck_with_fault, GradCheckReport};

/// Model width settings (the user-model transformers share them).
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSize {
    pub d: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub title_len: usize,
}

impl Default for ModelSize {
    fn default() -> Self {
        ModelSize {
            d: 256,
            heads: 16,
            d_ff: 256,
            title_len: 30,
        }
    }
}

/// Ablation switches in config form (validated names).
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub drop_feedback: Vec<String>,
    pub disable_hetero: bool,
    pub disable_homo: bool,
    pub disable_strong_to_weak: bool,
    pub disable_embedding: Vec<String>,
    pub disable_loss: Vec<String>,
}

impl AblationConfig {
    pub fn to_ablation(&self) -> Result<Ablation> {
        let mut abl = Ablation {
            disable_hetero: self.disable_hetero,
            disable_homo: self.disable_homo,
            disable_strong_to_weak: self.disable_strong_to_weak,
            ..Ablation::default()
        };
        for name in &self.drop_feedback {
            abl.drop_feedback.insert(name.parse::<FeedbackType>()?);
        }
        for e in &self.disable_embedding {
            match e.as_str() {
                "position" => abl.disable_position_embedding = true,
                "type" => abl.disable_type_embedding = true,
                "dwell" => abl.disable_dwell_embedding = true,
                "interval" => abl.disable_interval_embedding = true,
                other => {
                    return Err(Error::Config(format!("unknown embedding `{other}`")));
                }
            }
        }
        for l in &self.disable_loss {
            match l.as_str() {
                "finish" => abl.disable_loss_finish = true,
                "dwell" => abl.disable_loss_dwell = true,
                "disentangle" => abl.disable_loss_disentangle = true,
                other => return Err(Error::Config(format!("unknown loss `{other}`"))),
            }
        }
        Ok(abl)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout: f64,
    /// Negative sampling ratio K.
    pub negative_k: usize,
    /// Dwell threshold T (seconds) for quick_close derivation.
    pub t_quick_close: u64,
    /// Fraction of skips kept in input sequences.
    pub skip_subsample: f64,
    pub max_seq: usize,
    /// Dwell normalization clamp (seconds).
    pub t_max_dwell: f64,
    pub seed: u64,
    pub loss_weights: LossWeights,
    pub model: ModelSize,
    pub ablation: AblationConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 32,
            epochs: 3,
            dropout: 0.2,
            negative_k: 4,
            t_quick_close: 10,
            skip_subsample: 0.1,
            max_seq: 50,
            t_max_dwell: 1800.0,
            seed: 17,
            loss_weights: LossWeights::default(),
            model: ModelSize::default(),
            ablation: AblationConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn dims(&self, vocab: usize) -> Dims {
        Dims {
            d: self.model.d,
            heads: self.model.heads,
            d_ff: self.model.d_ff,
            title_len: self.model.title_len,
            max_seq: self.max_seq,
            vocab,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 || self.negative_k == 0 {
            return Err(Error::Config(
                "batch_size, epochs and negative_k must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must be in [0, 1)".into()));
        }
        if self.learning_rate < 0.0 {
            return Err(Error::Config("learning_rate must be nonnegative".into()));
        }
        if self.t_quick_close == 0 {
            return Err(Error::Config("t_quick_close must be positive".into()));
        }
        if !(self.skip_subsample > 0.0 && self.skip_subsample <= 1.0) {
            return Err(Error::Config("skip_subsample must be in (0, 1]".into()));
        }
        if self.t_max_dwell <= 0.0 {
            return Err(Error::Config("t_max_dwell must be positive".into()));
        }
        self.loss_weights.validate()?;
        Ok(())
    }

    /// Short hex digest of the fully resolved configuration.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("config serializes");
        let d = Sha256::digest(&json);
        d.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Fast label lookup: (user, news) → events, for sample labels and
/// evaluation ground truth. Built from unfiltered derived records so
/// feedback ablations never change labels.
pub struct LabelIndex {
    map: HashMap<(String, String), Vec<(u64, FeedbackType, Option<u64>)>>,
}

impl LabelIndex {
    pub fn build(records: &[FeedbackRecord]) -> Self {
        let mut map: HashMap<(String, String), Vec<(u64, FeedbackType, Option<u64>)>> =
            HashMap::new();
        for r in records {
            map.entry((r.user_id.clone(), r.news_id.clone()))
                .or_default()
                .push((r.event_time, r.feedback, r.dwell_time));
        }
        LabelIndex { map }
    }

    fn events(&self, user: &str, news: &str) -> Option<&Vec<(u64, FeedbackType, Option<u64>)>> {
        self.map.get(&(user.to_string(), news.to_string()))
    }

    pub fn click_dwell(&self, user: &str, news: &str, ts: u64) -> Option<u64> {
        self.events(user, news)?
            .iter()
            .find(|(t, ty, _)| *t == ts && *ty == FeedbackType::Click)
            .and_then(|(_, _, d)| *d)
    }

    pub fn finished(&self, user: &str, news: &str, ts: u64) -> bool {
        self.events(user, news).is_some_and(|evs| {
            evs.iter()
                .any(|(t, ty, _)| *t == ts && *ty == FeedbackType::Finish)
        })
    }

    pub fn shared_at_or_after(&self, user: &str, news: &str, ts: u64) -> bool {
        self.events(user, news).is_some_and(|evs| {
            evs.iter()
                .any(|(t, ty, _)| *t >= ts && *ty == FeedbackType::Share)
        })
    }

    pub fn disliked_at_or_after(&self, user: &str, news: &str, ts: u64) -> bool {
        self.events(user, news).is_some_and(|evs| {
            evs.iter()
                .any(|(t, ty, _)| *t >= ts && *ty == FeedbackType::Dislike)
        })
    }
}

/// Chronologically split corpus with derived histories and train samples.
pub struct Dataset {
    pub news: HashMap<String, NewsArticle>,
    pub train: Vec<ImpressionLog>,
    pub validation: Vec<ImpressionLog>,
    pub test: Vec<ImpressionLog>,
    pub samples: Vec<TrainingSample>,
    /// Clicked news in impressions with zero skips (no negatives available).
    pub dropped_samples: usize,
    /// Train samples whose user had no usable history yet.
    pub cold_samples: usize,
    /// Per-user derived records after threshold re-derivation, skip
    /// subsampling, and feedback-type ablation; canonically sorted.
    pub histories: HashMap<String, Vec<FeedbackRecord>>,
    pub labels: LabelIndex,
    pub vocab: usize,
}

/// Fractions of the chronological split (most recent part is test).
const TEST_FRACTION: f64 = 0.25;
const VALIDATION_FRACTION: f64 = 0.05;

pub fn prepare_dataset(corpus: &Corpus, cfg: &TrainConfig) -> Result<Dataset> {
    cfg.validate()?;
    if corpus.impressions.is_empty() {
        return Err(Error::Config("corpus has no impressions".into()));
    }
    let mut impressions = corpus.impressions.clone();
    impressions.sort_by(|a, b| {
        (a.timestamp, a.impression_id.as_str()).cmp(&(b.timestamp, b.impression_id.as_str()))
    });
    let n = impressions.len();
    let test_n = ((n as f64 * TEST_FRACTION).round() as usize).min(n);
    let val_n = ((n as f64 * VALIDATION_FRACTION).round() as usize).min(n - test_n);
    let train_n = n - test_n - val_n;
    if train_n == 0 {
        return Err(Error::Config("empty training split".into()));
    }
    let test = impressions.split_off(n - test_n);
    let validation = impressions.split_off(train_n);
    let train = impressions;

    // Re-derive quick_close for this run's threshold, then thin skips.
    let records = rederive_quick_close(&corpus.feedback, cfg.t_quick_close);
    let records = subsample_skips(&records, cfg.skip_subsample, cfg.seed)?;

    let labels = LabelIndex::build(&records);

    let drop: &BTreeSet<FeedbackType> = &cfg.ablation.to_ablation()?.drop_feedback;
    let mut histories: HashMap<String, Vec<FeedbackRecord>> = HashMap::new();
    for r in &records {
        if drop.contains(&r.feedback) {
            continue;
        }
        histories.entry(r.user_id.clone()).or_default().push(r.clone());
    }

    let (mut samples, dropped_samples) = build_samples(
        &train,
        &records,
        cfg.negative_k,
        cfg.t_max_dwell,
        cfg.seed,
    )?;

    // Samples whose user has no prior history cannot be encoded.
    let before = samples.len();
    samples.retain(|s| {
        histories
            .get(&s.user_id)
            .map(|h| h.iter().any(|r| r.event_time < s.timestamp))
            .unwrap_or(false)
    });
    let cold_samples = before - samples.len();

    let news: HashMap<String, NewsArticle> = corpus
        .news
        .iter()
        .map(|a| (a.news_id.clone(), a.clone()))
        .collect();
    let vocab = corpus
        .news
        .iter()
        .flat_map(|a| a.title_tokens.iter())
        .max()
        .map(|&m| m as usize + 1)
        .ok_or_else(|| Error::Config("empty news catalog".into()))?;

    Ok(Dataset {
        news,
        train,
        validation,
        test,
        samples,
        dropped_samples,
        cold_samples,
        histories,
        labels,
        vocab,
    })
}

impl Dataset {
    /// The user's derived records strictly before `ts`, newest `max_seq` of
    /// them.
    pub fn history_window(&self, user: &str, ts: u64, max_seq: usize) -> &[FeedbackRecord] {
        let Some(h) = self.histories.get(user) else {
            return &[];
        };
        let end = h.partition_point(|r| r.event_time < ts);
        let start = end.saturating_sub(max_seq);
        &h[start..end]
    }

    /// Convert a history window into encoder inputs. Positions are
    /// window-relative; intervals are measured between adjacent retained
    /// records.
    pub fn to_record_inputs(
        &self,
        window: &[FeedbackRecord],
        title_len: usize,
    ) -> Result<Vec<RecordInput>> {
        let mut out = Vec::with_capacity(window.len());
        let mut prev_time: Option<u64> = None;
        for (i, r) in window.iter().enumerate() {
            let article = self.news.get(&r.news_id).ok_or_else(|| {
                Error::Data(format!("news {} missing from catalog", r.news_id))
            })?;
            let dwell_bucket = match r.dwell_time {
                Some(d) => quantize_time(d as f64)? as usize,
                None => 0,
            };
            let interval_bucket = match prev_time {
                Some(p) => quantize_time(r.event_time.saturating_sub(p) as f64)? as usize,
                None => 0,
            };
            prev_time = Some(r.event_time);
            out.push(RecordInput {
                tokens: article.title_tokens[..article.title_tokens.len().min(title_len)].to_vec(),
                type_index: r.feedback.index(),
                dwell_bucket,
                interval_bucket,
                position: i,
            });
        }
        Ok(out)
    }

    pub fn candidate_input(
        &self,
        news_id: &str,
        history_len: usize,
        dims: &Dims,
    ) -> Result<CandidateInput> {
        let article = self
            .news
            .get(news_id)
            .ok_or_else(|| Error::Data(format!("news {news_id} missing from catalog")))?;
        Ok(CandidateInput {
            tokens: article.title_tokens[..article.title_tokens.len().min(dims.title_len)]
                .to_vec(),
            position: history_len.min(dims.max_seq - 1),
        })
    }
}

/// Raw loss component values of one sample (f64 copies of tape nodes).
#[derive(Clone, Copy, Debug, Default)]
pub struct LossVals {
    pub total: f64,
    pub click: f64,
    pub finish: f64,
    pub dwell: f64,
    pub disentangle: f64,
}

/// Forward pass and loss graph of one training sample. Returns the tape
/// context, the backward root, and the component values.
fn sample_forward<'p>(
    params: &'p Params,
    idx: &ModelIndex,
    dims: &Dims,
    abl: &Ablation,
    cfg: &TrainConfig,
    ds: &Dataset,
    sample: &TrainingSample,
    dropout_rng: Option<rand_chacha::ChaCha8Rng>,
) -> Result<(Forward<'p>, Var, LossVals)> {
    let mut fwd = match dropout_rng {
        Some(rng) => Forward::with_dropout(params, cfg.dropout, rng),
        None => Forward::new(params),
    };
    let window = ds.history_window(&sample.user_id, sample.timestamp, dims.max_seq);
    let inputs = ds.to_record_inputs(window, dims.title_len)?;
    let rep = encode_user(&mut fwd, idx, dims, abl, &inputs)?;

    let pos_cand = ds.candidate_input(&sample.positive, inputs.len(), dims)?;
    let pos_e = encode_candidate(&mut fwd, idx, dims, abl, &pos_cand)?;
    let pos_scores = heads::score(&mut fwd, idx, rep.u, pos_e);

    let mut neg_click_scores = Vec::with_capacity(sample.negatives.len());
    for news in &sample.negatives {
        let cand = ds.candidate_input(news, inputs.len(), dims)?;
        let e = encode_candidate(&mut fwd, idx, dims, abl, &cand)?;
        neg_click_scores.push(fwd.tape.dot(rep.u, e));
    }

    let t = &mut fwd.tape;
    let l_click = loss_click(t, pos_scores.click, &neg_click_scores);
    let finish_label = if sample.finish_label { 1.0 } else { 0.0 };
    let l_finish = loss_finish(t, pos_scores.finish_logit, finish_label);
    let l_dwell = loss_dwell(t, pos_scores.dwell, sample.dwell_label);
    let l_dis = loss_disentangle(t, rep.weak_pos, rep.weak_neg);

    // Disabled losses keep their reported value but contribute no gradient.
    let eff = LossWeights {
        alpha: if abl.disable_loss_finish {
            0.0
        } else {
            cfg.loss_weights.alpha
        },
        beta: if abl.disable_loss_dwell {
            0.0
        } else {
            cfg.loss_weights.beta
        },
        gamma: if abl.disable_loss_disentangle {
            0.0
        } else {
            cfg.loss_weights.gamma
        },
    };
    let total = loss_total(t, l_click, l_finish, l_dwell, l_dis, &eff);

    let vals = LossVals {
        total: fwd.tape.value(total).item(),
        click: fwd.tape.value(l_click).item(),
        finish: fwd.tape.value(l_finish).item(),
        dwell: fwd.tape.value(l_dwell).item(),
        disentangle: fwd.tape.value(l_dis).item(),
    };
    Ok((fwd, total, vals))
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub total: f64,
    pub click: f64,
    pub finish: f64,
    pub dwell: f64,
    pub disentangle: f64,
    pub validation_auc: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochReport>,
    /// Mean training loss of the untrained model (dropout active), over up
    /// to 4,000 samples.
    pub initial_loss: f64,
    pub train_samples: usize,
    pub dropped_samples: usize,
    pub cold_samples: usize,
    pub config_hash: String,
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub report: TrainReport,
}

/// Train a model on the given corpus.
pub fn train(corpus: &Corpus, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let ds = prepare_dataset(corpus, cfg)?;
    if ds.samples.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let dims = cfg.dims(ds.vocab);
    let abl = cfg.ablation.to_ablation()?;

    let mut params = Params::new();
    let idx = ModelIndex::init(&mut params, &dims, cfg.seed)?;
    let mut optimizer = adam::Adam::new(cfg.learning_rate, &params);
    let mut accum = GradAccum::new(&params);

    let mut report = TrainReport {
        train_samples: ds.samples.len(),
        dropped_samples: ds.dropped_samples,
        cold_samples: ds.cold_samples,
        config_hash: cfg.hash(),
        ..TrainReport::default()
    };

    // Loss of the untrained model, for before/after comparisons.
    {
        let probe = ds.samples.len().min(4000);
        let totals: Vec<Result<f64>> = (0..probe)
            .into_par_iter()
            .map(|si| {
                let dropout_rng = rng::stream(cfg.seed, "dropout-init", si as u64);
                let (fwd, total, _) = sample_forward(
                    &params,
                    &idx,
                    &dims,
                    &abl,
                    cfg,
                    &ds,
                    &ds.samples[si],
                    Some(dropout_rng),
                )?;
                Ok(fwd.tape.value(total).item())
            })
            .collect();
        let mut acc = 0.0;
        for t in totals {
            acc += t?;
        }
        report.initial_loss = acc / probe as f64;
    }

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..ds.samples.len()).collect();
        shuffle(&mut order, &mut rng::stream(cfg.seed, "shuffle", epoch as u64));

        let mut sums = LossVals::default();
        let mut seen = 0usize;
        let chunk = rayon::current_num_threads().max(1);
        for batch in order.chunks(cfg.batch_size) {
            accum.reset();
            let scale = 1.0 / batch.len() as f64;
            for piece in batch.chunks(chunk) {
                let results: Vec<Result<(Forward, Var, LossVals)>> = piece
                    .par_iter()
                    .map(|&si| {
                        let dropout_rng = rng::stream(
                            cfg.seed,
                            "dropout",
                            ((epoch as u64) << 40) ^ si as u64,
                        );
                        sample_forward(
                            &params,
                            &idx,
                            &dims,
                            &abl,
                            cfg,
                            &ds,
                            &ds.samples[si],
                            Some(dropout_rng),
                        )
                    })
                    .collect();
                for r in results {
                    let (fwd, total, vals) = r?;
                    let grads = fwd.tape.backward(total);
                    fwd.accumulate(&grads, &mut accum, scale);
                    sums.total += vals.total;
                    sums.click += vals.click;
                    sums.finish += vals.finish;
                    sums.dwell += vals.dwell;
                    sums.disentangle += vals.disentangle;
                    seen += 1;
                }
            }
            optimizer.step(&mut params, &accum);
        }

        let validation_auc = if ds.validation.is_empty() {
            None
        } else {
            let ranked = score_impressions(&params, &idx, &dims, &abl, &ds, &ds.validation)?;
            Some(click_metrics(&ranked).auc)
        };

        let n = seen.max(1) as f64;
        report.epochs.push(EpochReport {
            epoch: epoch + 1,
            total: sums.total / n,
            click: sums.click / n,
            finish: sums.finish / n,
            dwell: sums.dwell / n,
            disentangle: sums.disentangle / n,
            validation_auc,
        });
    }

    let checkpoint = Checkpoint::from_params(cfg, cfg.epochs as u32, &params);
    Ok(TrainOutcome { checkpoint, report })
}

/// Fisher–Yates with the given stream.
fn shuffle(order: &mut [usize], rng: &mut rand_chacha::ChaCha8Rng) {
    use rand::Rng;
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}

/// Score impressions with the current parameters (inference mode). Users
/// with no prior history score every candidate 0.
pub fn score_impressions(
    params: &Params,
    idx: &ModelIndex,
    dims: &Dims,
    abl: &Ablation,
    ds: &Dataset,
    impressions: &[ImpressionLog],
) -> Result<Vec<RankedImpression>> {
    impressions
        .par_iter()
        .map(|imp| {
            let window = ds.history_window(&imp.user_id, imp.timestamp, dims.max_seq);
            let inputs = ds.to_record_inputs(window, dims.title_len)?;
            let mut fwd = Forward::new(params);
            let u = if inputs.is_empty() {
                None
            } else {
                Some(encode_user(&mut fwd, idx, dims, abl, &inputs)?.u)
            };
            let clicked: std::collections::HashSet<&str> =
                imp.clicked.iter().map(|s| s.as_str()).collect();
            let mut candidates = Vec::with_capacity(imp.shown_news.len());
            for news in &imp.shown_news {
                let score = match u {
                    Some(u) => {
                        let cand = ds.candidate_input(news, inputs.len(), dims)?;
                        let e = encode_candidate(&mut fwd, idx, dims, abl, &cand)?;
                        let y = fwd.tape.dot(u, e);
                        fwd.tape.value(y).item()
                    }
                    None => 0.0,
                };
                let is_clicked = clicked.contains(news.as_str());
                candidates.push(RankedCandidate {
                    news_id: news.clone(),
                    score,
                    clicked: is_clicked,
                    shared: ds.labels.shared_at_or_after(&imp.user_id, news, imp.timestamp),
                    disliked: ds
                        .labels
                        .disliked_at_or_after(&imp.user_id, news, imp.timestamp),
                    finished: ds.labels.finished(&imp.user_id, news, imp.timestamp),
                    dwell_time: ds.labels.click_dwell(&imp.user_id, news, imp.timestamp),
                });
            }
            Ok(RankedImpression {
                impression_id: imp.impression_id.clone(),
                candidates,
            })
        })
        .collect()
}

/// Score arbitrary candidates for a user at the end of their recorded
/// history: (news_id, click score, finish probability logit, dwell).
pub fn rank_candidates(
    params: &Params,
    idx: &ModelIndex,
    dims: &Dims,
    abl: &Ablation,
    ds: &Dataset,
    user_id: &str,
    news_ids: &[String],
) -> Result<Vec<(String, f64, f64, f64)>> {
    let end = u64::MAX;
    let window = ds.history_window(user_id, end, dims.max_seq);
    if window.is_empty() {
        return Err(Error::Input(format!("user {user_id} has no history")));
    }
    let inputs = ds.to_record_inputs(window, dims.title_len)?;
    let mut fwd = Forward::new(params);
    let rep = encode_user(&mut fwd, idx, dims, abl, &inputs)?;
    let mut rows = Vec::with_capacity(news_ids.len());
    for news in news_ids {
        let cand = ds.candidate_input(news, inputs.len(), dims)?;
        let e = encode_candidate(&mut fwd, idx, dims, abl, &cand)?;
        let s = heads::score(&mut fwd, idx, rep.u, e);
        rows.push((
            news.clone(),
            fwd.tape.value(s.click).item(),
            fwd.tape.value(s.finish_logit).item(),
            fwd.tape.value(s.dwell).item(),
        ));
    }
    rows.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate_corpus, GeneratorConfig};

    fn tiny_corpus() -> Corpus {
        generate_corpus(&GeneratorConfig {
            n_users: 20,
            n_news: 120,
            n_impressions: 300,
            seed: 3,
            ..GeneratorConfig::default()
        })
        .unwrap()
    }

    fn tiny_train_config() -> TrainConfig {
        TrainConfig {
            epochs: 1,
            max_seq: 10,
            model: ModelSize {
                d: 16,
                heads: 2,
                d_ff: 16,
                title_len: 6,
            },
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn split_fractions_are_chronological() {
        let corpus = tiny_corpus();
        let cfg = tiny_train_config();
        let ds = prepare_dataset(&corpus, &cfg).unwrap();
        let n = corpus.impressions.len();
        assert_eq!(ds.test.len(), (n as f64 * 0.25).round() as usize);
        assert_eq!(ds.validation.len(), (n as f64 * 0.05).round() as usize);
        assert_eq!(ds.train.len() + ds.validation.len() + ds.test.len(), n);
        let train_max = ds.train.iter().map(|i| i.timestamp).max().unwrap();
        let val_min = ds.validation.iter().map(|i| i.timestamp).min().unwrap();
        let test_min = ds.test.iter().map(|i| i.timestamp).min().unwrap();
        assert!(train_max <= val_min);
        assert!(val_min <= test_min);
    }

    #[test]
    fn history_window_is_strictly_before_and_capped() {
        let corpus = tiny_corpus();
        let cfg = tiny_train_config();
        let ds = prepare_dataset(&corpus, &cfg).unwrap();
        let sample = &ds.samples[0];
        let w = ds.history_window(&sample.user_id, sample.timestamp, 4);
        assert!(w.len() <= 4);
        assert!(w.iter().all(|r| r.event_time < sample.timestamp));
        let inputs = ds.to_record_inputs(w, 6).unwrap();
        assert_eq!(inputs.len(), w.len());
        assert!(inputs.iter().enumerate().all(|(i, r)| r.position == i));
        assert_eq!(inputs[0].interval_bucket, 0);
    }

    #[test]
    fn one_epoch_trains_and_reports() {
        let corpus = tiny_corpus();
        let cfg = tiny_train_config();
        let out = train(&corpus, &cfg).unwrap();
        assert_eq!(out.report.epochs.len(), 1);
        let e = &out.report.epochs[0];
        assert!(e.total.is_finite() && e.total > 0.0);
        assert!(e.click > 0.0);
        assert!(e.validation_auc.is_some());
        assert_eq!(out.checkpoint.epoch, 1);
    }

    #[test]
    fn zero_learning_rate_preserves_initial_parameters() {
        let corpus = tiny_corpus();
        let mut cfg = tiny_train_config();
        cfg.learning_rate = 0.0;
        cfg.dropout = 0.0;
        let out = train(&corpus, &cfg).unwrap();

        let ds = prepare_dataset(&corpus, &cfg).unwrap();
        let dims = cfg.dims(ds.vocab);
        let mut fresh = Params::new();
        let _ = ModelIndex::init(&mut fresh, &dims, cfg.seed).unwrap();
        for (name, m) in &out.checkpoint.tensors {
            assert_eq!(m, fresh.value(fresh.find(name).unwrap()), "{name} changed");
        }
    }

    #[test]
    fn training_is_deterministic_across_runs() {
        let corpus = tiny_corpus();
        let cfg = tiny_train_config();
        let a = train(&corpus, &cfg).unwrap();
        let b = train(&corpus, &cfg).unwrap();
        assert_eq!(a.report.epochs[0].total, b.report.epochs[0].total);
        assert_eq!(a.checkpoint.tensors, b.checkpoint.tensors);
    }

    #[test]
    fn disabled_loss_still_reported_but_not_trained() {
        let corpus = tiny_corpus();
        let mut cfg = tiny_train_config();
        cfg.ablation.disable_loss = vec!["disentangle".into()];
        let out = train(&corpus, &cfg).unwrap();
        // value is still computed and reported
        assert!(out.report.epochs[0].disentangle.abs() > 0.0);
    }

    #[test]
    fn empty_training_set_is_a_config_error() {
        let corpus = Corpus {
            news: vec![],
            impressions: vec![],
            feedback: vec![],
        };
        assert!(train(&corpus, &tiny_train_config()).is_err());
    }

    #[test]
    fn checkpoint_roundtrip_reproduces_scores() {
        let corpus = tiny_corpus();
        let cfg = tiny_train_config();
        let out = train(&corpus, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        out.checkpoint.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        let (params, idx, dims) = loaded.restore().unwrap();
        let abl = cfg.ablation.to_ablation().unwrap();
        let ds = prepare_dataset(&corpus, &cfg).unwrap();

        let (p0, i0, d0) = out.checkpoint.restore().unwrap();
        let a = score_impressions(&p0, &i0, &d0, &abl, &ds, &ds.test).unwrap();
        let b = score_impressions(&params, &idx, &dims, &abl, &ds, &ds.test).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            for (cx, cy) in x.candidates.iter().zip(y.candidates.iter()) {
                assert_eq!(cx.score, cy.score);
            }
        }
    }
}
