//! Multi-feedback news feed recommendation at desk scale.
//!
//! The crate covers the full loop: behavior-log domain types and file I/O
//! ([`feedlog`]), a synthetic corpus generator ([`synthgen`]), the news and
//! user encoders with strong-to-weak attention ([`model`]), multi-task
//! training with gradient checking and checkpoints ([`trainer`]), and the
//! click/engagement evaluation harness ([`metrics`]).

pub mod error;
pub mod feedlog;
pub mod mat;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod synthgen;
pub mod tape;
pub mod trainer;

pub use error::{Error, Result};
pub use feedlog::io::Corpus;
pub use feedlog::{FeedbackRecord, FeedbackType, ImpressionLog, NewsArticle, UserState};
pub use mat::Mat;
