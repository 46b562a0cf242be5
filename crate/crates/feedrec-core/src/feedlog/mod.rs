//! Domain types for behavior logs: the feedback taxonomy, dwell-time
//! quantization, derivation of implicit feedback from raw click logs, and
//! skip subsampling. File I/O lives in [`io`].

pub mod io;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Dwell/interval buckets are capped here; covers ~68 minutes.
pub const BUCKET_CAP: u32 = 12;

/// The six feedback kinds. `finish` and `quick_close` are always derived
/// from click dwell data, never raw-logged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackType {
    Click,
    Skip,
    Share,
    Dislike,
    Finish,
    QuickClose,
}

impl FeedbackType {
    pub const ALL: [FeedbackType; 6] = [
        FeedbackType::Click,
        FeedbackType::Skip,
        FeedbackType::Share,
        FeedbackType::Dislike,
        FeedbackType::Finish,
        FeedbackType::QuickClose,
    ];

    /// Tie-break order for records sharing an event time.
    pub fn tie_order(self) -> u8 {
        match self {
            FeedbackType::Click => 0,
            FeedbackType::Finish => 1,
            FeedbackType::QuickClose => 2,
            FeedbackType::Share => 3,
            FeedbackType::Dislike => 4,
            FeedbackType::Skip => 5,
        }
    }

    /// Index into the feedback-type embedding table.
    pub fn index(self) -> usize {
        match self {
            FeedbackType::Share => 0,
            FeedbackType::Finish => 1,
            FeedbackType::Click => 2,
            FeedbackType::Skip => 3,
            FeedbackType::QuickClose => 4,
            FeedbackType::Dislike => 5,
        }
    }

    /// Whether records of this type carry a dwell time.
    pub fn has_dwell(self) -> bool {
        matches!(
            self,
            FeedbackType::Click | FeedbackType::Finish | FeedbackType::QuickClose
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeedbackType::Click => "click",
            FeedbackType::Skip => "skip",
            FeedbackType::Share => "share",
            FeedbackType::Dislike => "dislike",
            FeedbackType::Finish => "finish",
            FeedbackType::QuickClose => "quick_close",
        }
    }
}

impl std::str::FromStr for FeedbackType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "click" => Ok(FeedbackType::Click),
            "skip" => Ok(FeedbackType::Skip),
            "share" => Ok(FeedbackType::Share),
            "dislike" => Ok(FeedbackType::Dislike),
            "finish" => Ok(FeedbackType::Finish),
            "quick_close" => Ok(FeedbackType::QuickClose),
            other => Err(Error::Input(format!("unknown feedback type `{other}`"))),
        }
    }
}

/// One user action on one news item.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub user_id: String,
    pub news_id: String,
    #[serde(rename = "type")]
    pub feedback: FeedbackType,
    pub event_time: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dwell_time: Option<u64>,
}

impl FeedbackRecord {
    pub fn validate(&self) -> Result<()> {
        if self.feedback.has_dwell() != self.dwell_time.is_some() {
            return Err(Error::Data(format!(
                "record ({}, {}, {}): dwell_time must be present iff the type is click-derived",
                self.user_id,
                self.news_id,
                self.feedback.as_str()
            )));
        }
        Ok(())
    }

    fn sort_key(&self) -> (u64, &str, &str, u8) {
        (
            self.event_time,
            self.user_id.as_str(),
            self.news_id.as_str(),
            self.feedback.tie_order(),
        )
    }
}

/// Chronological canonical order: event time, then user, then the
/// documented (news_id, type) tie-break.
pub fn canonical_sort(records: &mut [FeedbackRecord]) {
    records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

/// A page view: the displayed news and which of them were clicked.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImpressionLog {
    pub impression_id: String,
    pub user_id: String,
    pub shown_news: Vec<String>,
    pub clicked: Vec<String>,
    pub timestamp: u64,
}

impl ImpressionLog {
    pub fn validate(&self) -> Result<()> {
        if self.shown_news.is_empty() {
            return Err(Error::Data(format!(
                "impression {}: shown_news is empty",
                self.impression_id
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for n in &self.shown_news {
            if !seen.insert(n) {
                return Err(Error::Data(format!(
                    "impression {}: duplicate shown news {}",
                    self.impression_id, n
                )));
            }
        }
        for c in &self.clicked {
            if !seen.contains(c) {
                return Err(Error::Data(format!(
                    "impression {}: clicked news {} not in shown_news",
                    self.impression_id, c
                )));
            }
        }
        Ok(())
    }
}

/// A news article as the model sees it: tokenized title plus a category tag.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewsArticle {
    pub news_id: String,
    pub title_tokens: Vec<u32>,
    pub category_id: u32,
}

/// A user's feedback history grouped by type; each group keeps chronological
/// order, and merging the groups reconstructs the full sequence.
#[derive(Clone, Debug, Default)]
pub struct UserState {
    pub share: Vec<FeedbackRecord>,
    pub finish: Vec<FeedbackRecord>,
    pub click: Vec<FeedbackRecord>,
    pub skip: Vec<FeedbackRecord>,
    pub quick_close: Vec<FeedbackRecord>,
    pub dislike: Vec<FeedbackRecord>,
}

impl UserState {
    /// Group a chronologically ordered slice of one user's records.
    pub fn from_records(records: &[FeedbackRecord]) -> UserState {
        let mut st = UserState::default();
        for r in records {
            match r.feedback {
                FeedbackType::Share => st.share.push(r.clone()),
                FeedbackType::Finish => st.finish.push(r.clone()),
                FeedbackType::Click => st.click.push(r.clone()),
                FeedbackType::Skip => st.skip.push(r.clone()),
                FeedbackType::QuickClose => st.quick_close.push(r.clone()),
                FeedbackType::Dislike => st.dislike.push(r.clone()),
            }
        }
        st
    }

    pub fn count(&self, ty: FeedbackType) -> usize {
        match ty {
            FeedbackType::Share => self.share.len(),
            FeedbackType::Finish => self.finish.len(),
            FeedbackType::Click => self.click.len(),
            FeedbackType::Skip => self.skip.len(),
            FeedbackType::QuickClose => self.quick_close.len(),
            FeedbackType::Dislike => self.dislike.len(),
        }
    }

    pub fn total(&self) -> usize {
        FeedbackType::ALL.iter().map(|&t| self.count(t)).sum()
    }

    /// Merge the groups back into one chronological sequence.
    pub fn reconstruct(&self) -> Vec<FeedbackRecord> {
        let mut all: Vec<FeedbackRecord> = self
            .share
            .iter()
            .chain(&self.finish)
            .chain(&self.click)
            .chain(&self.skip)
            .chain(&self.quick_close)
            .chain(&self.dislike)
            .cloned()
            .collect();
        canonical_sort(&mut all);
        all
    }
}

/// ⌊log2(t+1)⌋ capped at [`BUCKET_CAP`]; monotone nondecreasing in `t`.
pub fn quantize_time(t: f64) -> Result<u32> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::Input(format!(
            "quantize_time: t must be finite and nonnegative, got {t}"
        )));
    }
    let bucket = (t + 1.0).log2().floor() as u32;
    Ok(bucket.min(BUCKET_CAP))
}

/// One click inside a raw impression, with its reading outcome.
#[derive(Clone, Debug)]
pub struct RawClick {
    pub news_id: String,
    pub dwell_time: u64,
    pub finished: bool,
}

/// An impression plus the per-click reading outcomes; input to
/// [`derive_feedbacks`].
#[derive(Clone, Debug)]
pub struct RawImpression {
    pub impression: ImpressionLog,
    pub clicks: Vec<RawClick>,
}

/// Expand raw click logs into the full six-type record set:
/// click/skip per impression, finish from the finished flag, quick_close
/// from dwell strictly below `t_threshold`, and explicit records passed
/// through. Output is in canonical chronological order.
pub fn derive_feedbacks(
    raw: &[RawImpression],
    explicit: &[FeedbackRecord],
    t_threshold: u64,
) -> Result<Vec<FeedbackRecord>> {
    if t_threshold == 0 {
        return Err(Error::Config("dwell threshold T must be positive".into()));
    }
    let mut out = Vec::new();
    for ri in raw {
        let imp = &ri.impression;
        imp.validate()?;
        let click_by_news: std::collections::HashMap<&str, &RawClick> =
            ri.clicks.iter().map(|c| (c.news_id.as_str(), c)).collect();
        for clicked in &imp.clicked {
            let Some(c) = click_by_news.get(clicked.as_str()) else {
                return Err(Error::Data(format!(
                    "impression {}: click on {} lacks a dwell_time entry",
                    imp.impression_id, clicked
                )));
            };
            out.push(FeedbackRecord {
                user_id: imp.user_id.clone(),
                news_id: clicked.clone(),
                feedback: FeedbackType::Click,
                event_time: imp.timestamp,
                dwell_time: Some(c.dwell_time),
            });
            if c.finished {
                out.push(FeedbackRecord {
                    user_id: imp.user_id.clone(),
                    news_id: clicked.clone(),
                    feedback: FeedbackType::Finish,
                    event_time: imp.timestamp,
                    dwell_time: Some(c.dwell_time),
                });
            }
            if c.dwell_time < t_threshold {
                out.push(FeedbackRecord {
                    user_id: imp.user_id.clone(),
                    news_id: clicked.clone(),
                    feedback: FeedbackType::QuickClose,
                    event_time: imp.timestamp,
                    dwell_time: Some(c.dwell_time),
                });
            }
        }
        let clicked_set: std::collections::HashSet<&str> =
            imp.clicked.iter().map(|s| s.as_str()).collect();
        for shown in &imp.shown_news {
            if !clicked_set.contains(shown.as_str()) {
                out.push(FeedbackRecord {
                    user_id: imp.user_id.clone(),
                    news_id: shown.clone(),
                    feedback: FeedbackType::Skip,
                    event_time: imp.timestamp,
                    dwell_time: None,
                });
            }
        }
    }
    for r in explicit {
        r.validate()?;
        if r.feedback != FeedbackType::Share && r.feedback != FeedbackType::Dislike {
            return Err(Error::Data(format!(
                "explicit record ({}, {}) has non-explicit type {}",
                r.user_id,
                r.news_id,
                r.feedback.as_str()
            )));
        }
        out.push(r.clone());
    }
    canonical_sort(&mut out);
    Ok(out)
}

/// Re-derive quick_close membership for a new threshold: existing
/// quick_close records are dropped and re-emitted from click dwell times.
/// Click, skip, finish, share and dislike records pass through unchanged.
pub fn rederive_quick_close(records: &[FeedbackRecord], t_threshold: u64) -> Vec<FeedbackRecord> {
    let mut out: Vec<FeedbackRecord> = Vec::with_capacity(records.len());
    for r in records {
        match r.feedback {
            FeedbackType::QuickClose => {}
            FeedbackType::Click => {
                out.push(r.clone());
                let dwell = r.dwell_time.expect("click carries dwell");
                if dwell < t_threshold {
                    let mut qc = r.clone();
                    qc.feedback = FeedbackType::QuickClose;
                    out.push(qc);
                }
            }
            _ => out.push(r.clone()),
        }
    }
    canonical_sort(&mut out);
    out
}

/// Keep each skip independently with probability `rate`; all other records
/// are kept. Deterministic for a given seed.
pub fn subsample_skips(
    records: &[FeedbackRecord],
    rate: f64,
    seed: u64,
) -> Result<Vec<FeedbackRecord>> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::Config(format!(
            "skip subsample rate must be in (0, 1], got {rate}"
        )));
    }
    let mut rng = rng::stream(seed, "skip-subsample", 0);
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        if r.feedback == FeedbackType::Skip {
            if rng.gen::<f64>() < rate {
                out.push(r.clone());
            }
        } else {
            out.push(r.clone());
        }
    }
    Ok(out)
}
