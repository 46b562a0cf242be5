//! Model parameters and the per-sample forward context.
//!
//! All learnable tensors live in a flat, name-indexed [`Params`] registry;
//! encoders address them through the typed handles in [`ModelIndex`]. A
//! [`Forward`] wraps one tape together with the bindings from parameters to
//! tape leaves, so gradients can be scattered back after `backward`.

pub mod heads;
pub mod news;
pub mod transformer;
pub mod user;

use std::collections::BTreeSet;
use std::collections::HashMap;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedlog::{FeedbackType, BUCKET_CAP};
use crate::mat::Mat;
use crate::tape::{Gradients, Tape, Var};

/// Model dimensions. `heads * (d / heads)` must equal `d`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Dims {
    pub d: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub title_len: usize,
    pub max_seq: usize,
    #[serde(skip)]
    pub vocab: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Dims {
            d: 256,
            heads: 16,
            d_ff: 256,
            title_len: 30,
            max_seq: 50,
            vocab: 0,
        }
    }
}

impl Dims {
    pub fn head_dim(&self) -> usize {
        self.d / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.heads == 0 || self.d % self.heads != 0 {
            return Err(Error::Config(format!(
                "head count {} must evenly divide d {}",
                self.heads, self.d
            )));
        }
        if self.title_len == 0 || self.max_seq == 0 || self.d_ff == 0 {
            return Err(Error::Config("dims must be positive".into()));
        }
        if self.vocab == 0 {
            return Err(Error::Config("vocabulary size not set".into()));
        }
        Ok(())
    }
}

/// Which parts of the model to switch off (mirrors the experiment matrix).
#[derive(Clone, Debug, Default)]
pub struct Ablation {
    pub drop_feedback: BTreeSet<FeedbackType>,
    pub disable_hetero: bool,
    pub disable_homo: bool,
    pub disable_strong_to_weak: bool,
    pub disable_position_embedding: bool,
    pub disable_type_embedding: bool,
    pub disable_dwell_embedding: bool,
    pub disable_interval_embedding: bool,
    pub disable_loss_finish: bool,
    pub disable_loss_dwell: bool,
    pub disable_loss_disentangle: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PId(pub(crate) usize);

/// Flat, ordered registry of named tensors.
#[derive(Clone)]
pub struct Params {
    names: Vec<String>,
    vals: Vec<Arc<Mat>>,
    by_name: HashMap<String, usize>,
}

impl Params {
    pub fn new() -> Self {
        Params {
            names: Vec::new(),
            vals: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn register(&mut self, name: &str, m: Mat) -> PId {
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter {name}"
        );
        self.names.push(name.to_string());
        self.vals.push(Arc::new(m));
        self.by_name.insert(name.to_string(), self.vals.len() - 1);
        PId(self.vals.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    pub fn name(&self, id: PId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<PId> {
        self.by_name.get(name).map(|&i| PId(i))
    }

    pub fn value(&self, id: PId) -> &Mat {
        &self.vals[id.0]
    }

    pub fn handle(&self, id: PId) -> Arc<Mat> {
        Arc::clone(&self.vals[id.0])
    }

    pub fn set(&mut self, id: PId, m: Mat) {
        let cur = self.value(id);
        assert_eq!((cur.rows(), cur.cols()), (m.rows(), m.cols()));
        self.vals[id.0] = Arc::new(m);
    }

    /// Mutable access; clones the tensor if it is shared.
    pub fn value_mut(&mut self, id: PId) -> &mut Mat {
        Arc::make_mut(&mut self.vals[id.0])
    }

    pub fn iter(&self) -> impl Iterator<Item = (PId, &str, &Mat)> {
        self.names
            .iter()
            .enumerate()
            .map(move |(i, n)| (PId(i), n.as_str(), &*self.vals[i]))
    }
}

impl Default for Params {
    fn default() -> Self {
        Self::new()
    }
}

/// Weights of one transformer block.
#[derive(Clone, Copy, Debug)]
pub struct TransformerIds {
    pub wq: PId,
    pub wk: PId,
    pub wv: PId,
    pub wo: PId,
    pub w1: PId,
    pub b1: PId,
    pub w2: PId,
    pub b2: PId,
}

/// Typed handles to every tensor of the model.
#[derive(Clone, Debug)]
pub struct ModelIndex {
    // news encoder
    pub token_table: PId,
    pub title_tf: TransformerIds,
    pub title_query: PId,
    pub pos_table: PId,
    pub type_table: PId,
    pub dwell_table: PId,
    pub interval_table: PId,
    // user encoder
    pub hetero_tf: TransformerIds,
    pub homo_tf: [TransformerIds; 6],
    pub q_share: PId,
    pub q_dislike: PId,
    pub gate_strong_pos: PId,
    pub gate_strong_neg: PId,
    pub gate_weak_pos: PId,
    pub gate_weak_neg: PId,
    pub agg_strong_pos: PId,
    pub agg_weak_pos: PId,
    pub agg_strong_neg: PId,
    pub agg_weak_neg: PId,
    /// Independent learned queries used when strong-to-weak attention is
    /// disabled: finish, quick_close, click+, skip+, click-, skip-.
    pub alt_queries: [PId; 6],
    // prediction heads
    pub head_finish: PId,
    pub head_dwell: PId,
}

/// Embedding tables and attention queries start at this scale; weight
/// matrices use fan-in scaling so activations neither vanish nor blow up
/// at any width.
fn table_sd() -> f64 {
    std::env::var("FEEDREC_INIT_TABLE_SD").ok().and_then(|v| v.parse().ok()).unwrap_or(0.1)
}

fn register_transformer(
    params: &mut Params,
    prefix: &str,
    dims: &Dims,
    rng: &mut ChaCha8Rng,
) -> TransformerIds {
    let d = dims.d;
    let dff = dims.d_ff;
    let sd_d = 1.0 / (d as f64).sqrt();
    let sd_ff = 1.0 / (dff as f64).sqrt();
    TransformerIds {
        wq: params.register(&format!("{prefix}.wq"), Mat::randn(d, d, sd_d, rng)),
        wk: params.register(&format!("{prefix}.wk"), Mat::randn(d, d, sd_d, rng)),
        wv: params.register(&format!("{prefix}.wv"), Mat::randn(d, d, sd_d, rng)),
        wo: params.register(&format!("{prefix}.wo"), Mat::randn(d, d, sd_d, rng)),
        w1: params.register(&format!("{prefix}.ffn_w1"), Mat::randn(d, dff, sd_d, rng)),
        b1: params.register(&format!("{prefix}.ffn_b1"), Mat::zeros(1, dff)),
        w2: params.register(&format!("{prefix}.ffn_w2"), Mat::randn(dff, d, sd_ff, rng)),
        b2: params.register(&format!("{prefix}.ffn_b2"), Mat::zeros(1, d)),
    }
}

/// Homogeneous-transformer naming order (matches `FeedbackType::index`).
pub const TYPE_NAMES: [&str; 6] = ["share", "finish", "click", "skip", "quick_close", "dislike"];

const ALT_QUERY_NAMES: [&str; 6] = [
    "finish",
    "quick_close",
    "click_pos",
    "skip_pos",
    "click_neg",
    "skip_neg",
];

impl ModelIndex {
    /// Register all tensors with their initial values.
    pub fn init(params: &mut Params, dims: &Dims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = crate::rng::stream(seed, "param-init", 0);
        let d = dims.d;
        let rng = &mut rng;

        let sd_table = table_sd();
        let sd_mat = 1.0 / (d as f64).sqrt();
        let token_table = params.register(
            "news.token_table",
            Mat::randn(dims.vocab, d, sd_table, rng),
        );
        let title_tf = register_transformer(params, "news.title", dims, rng);
        let title_query =
            params.register("news.title_query", Mat::randn(1, d, sd_table, rng));
        let pos_table = params.register(
            "news.position_table",
            Mat::randn(dims.max_seq, d, sd_table, rng),
        );
        let type_table = params.register("news.type_table", Mat::randn(6, d, sd_table, rng));
        let buckets = BUCKET_CAP as usize + 1;
        let dwell_table =
            params.register("news.dwell_table", Mat::randn(buckets, d, sd_table, rng));
        let interval_table =
            params.register("news.interval_table", Mat::randn(buckets, d, sd_table, rng));

        let hetero_tf = register_transformer(params, "user.hetero", dims, rng);
        let homo_tf = std::array::from_fn(|i| {
            register_transformer(params, &format!("user.homo.{}", TYPE_NAMES[i]), dims, rng)
        });
        let q_share = params.register("user.query_share", Mat::randn(1, d, sd_table, rng));
        let q_dislike = params.register("user.query_dislike", Mat::randn(1, d, sd_table, rng));

        // Gate vectors start at zero so every gate opens at 0.5.
        let gate_strong_pos = params.register("user.gate_strong_pos", Mat::zeros(1, 2 * d));
        let gate_strong_neg = params.register("user.gate_strong_neg", Mat::zeros(1, 2 * d));
        let gate_weak_pos = params.register("user.gate_weak_pos", Mat::zeros(1, 2 * d));
        let gate_weak_neg = params.register("user.gate_weak_neg", Mat::zeros(1, 2 * d));

        // Aggregation scalars: positive branches add, negative branches subtract.
        let agg_strong_pos = params.register("user.agg_strong_pos", Mat::scalar(1.0));
        let agg_weak_pos = params.register("user.agg_weak_pos", Mat::scalar(1.0));
        let agg_strong_neg = params.register("user.agg_strong_neg", Mat::scalar(-1.0));
        let agg_weak_neg = params.register("user.agg_weak_neg", Mat::scalar(-1.0));

        let alt_queries = std::array::from_fn(|i| {
            params.register(
                &format!("user.alt_query.{}", ALT_QUERY_NAMES[i]),
                Mat::randn(1, d, sd_table, rng),
            )
        });

        let head_finish = params.register("heads.finish", Mat::randn(d, d, sd_mat, rng));
        let head_dwell = params.register("heads.dwell", Mat::randn(d, d, sd_mat, rng));

        Ok(ModelIndex {
            token_table,
            title_tf,
            title_query,
            pos_table,
            type_table,
            dwell_table,
            interval_table,
            hetero_tf,
            homo_tf,
            q_share,
            q_dislike,
            gate_strong_pos,
            gate_strong_neg,
            gate_weak_pos,
            gate_weak_neg,
            agg_strong_pos,
            agg_weak_pos,
            agg_strong_neg,
            agg_weak_neg,
            alt_queries,
            head_finish,
            head_dwell,
        })
    }

    /// Rebuild from named tensors (checkpoint load). Registration order and
    /// shapes must reproduce `init` exactly, so forward outputs match.
    pub fn from_tensors(
        params: &mut Params,
        dims: &Dims,
        tensors: &[(String, Mat)],
    ) -> Result<Self> {
        let idx = Self::init(params, dims, 0)?;
        let mut seen = std::collections::HashSet::new();
        for (name, mat) in tensors {
            let Some(pid) = params.find(name) else {
                return Err(Error::Integrity(format!("unknown tensor `{name}`")));
            };
            let cur = params.value(pid);
            if (cur.rows(), cur.cols()) != (mat.rows(), mat.cols()) {
                return Err(Error::Integrity(format!(
                    "tensor `{name}` has shape {}x{}, expected {}x{}",
                    mat.rows(),
                    mat.cols(),
                    cur.rows(),
                    cur.cols()
                )));
            }
            params.set(pid, mat.clone());
            seen.insert(name.clone());
        }
        if seen.len() != params.len() {
            return Err(Error::Integrity(format!(
                "checkpoint holds {} tensors, model needs {}",
                seen.len(),
                params.len()
            )));
        }
        Ok(idx)
    }
}

/// Reporting group for a parameter name, e.g. `user.homo.click.wq` →
/// `user.homo`.
pub fn group_of(name: &str) -> String {
    let parts: Vec<&str> = name.split('.').collect();
    match parts.as_slice() {
        ["news", "title", _] => "news.title".to_string(),
        ["user", "hetero", _] => "user.hetero".to_string(),
        ["user", "homo", _, _] => "user.homo".to_string(),
        ["user", "alt_query", _] => "user.alt_query".to_string(),
        ["user", q] if q.starts_with("query_") => "user.queries".to_string(),
        ["user", g] if g.starts_with("gate_") => "user.gates".to_string(),
        ["user", a] if a.starts_with("agg_") => "user.agg_scalars".to_string(),
        _ => name.to_string(),
    }
}

/// Per-parameter gradient accumulator aligned with a [`Params`] registry.
pub struct GradAccum {
    mats: Vec<Mat>,
}

impl GradAccum {
    pub fn new(params: &Params) -> Self {
        GradAccum {
            mats: params
                .iter()
                .map(|(_, _, m)| Mat::zeros(m.rows(), m.cols()))
                .collect(),
        }
    }

    pub fn reset(&mut self) {
        for m in &mut self.mats {
            m.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn get(&self, id: PId) -> &Mat {
        &self.mats[id.0]
    }

    pub fn get_mut(&mut self, id: PId) -> &mut Mat {
        &mut self.mats[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Mat> {
        self.mats.iter()
    }
}

struct DropoutCtx {
    p: f64,
    rng: ChaCha8Rng,
}

/// One forward computation: a tape plus the parameter↔leaf bindings.
pub struct Forward<'p> {
    pub tape: Tape,
    params: &'p Params,
    dense: HashMap<usize, Var>,
    sparse: Vec<(PId, Vec<usize>, Var)>,
    dropout: Option<DropoutCtx>,
}

impl<'p> Forward<'p> {
    /// Inference-mode context (no dropout).
    pub fn new(params: &'p Params) -> Self {
        Forward {
            tape: Tape::new(),
            params,
            dense: HashMap::new(),
            sparse: Vec::new(),
            dropout: None,
        }
    }

    /// Training-mode context with inverted dropout of rate `p`.
    pub fn with_dropout(params: &'p Params, p: f64, rng: ChaCha8Rng) -> Self {
        let mut fwd = Forward::new(params);
        if p > 0.0 {
            fwd.dropout = Some(DropoutCtx { p, rng });
        }
        fwd
    }

    pub fn params(&self) -> &Params {
        self.params
    }

    /// Bind a whole parameter tensor (cached per tensor).
    pub fn bind(&mut self, id: PId) -> Var {
        if let Some(&v) = self.dense.get(&id.0) {
            return v;
        }
        let v = self.tape.leaf(self.params.handle(id));
        self.dense.insert(id.0, v);
        v
    }

    /// Bind selected rows of a tensor as their own leaf; gradients scatter
    /// back to those rows. Used for the token table so a sample never
    /// materializes a vocab-sized gradient.
    pub fn bind_rows(&mut self, id: PId, rows: &[usize]) -> Var {
        let sub = self.params.value(id).gather_rows(rows);
        let v = self.tape.leaf_mat(sub);
        self.sparse.push((id, rows.to_vec(), v));
        v
    }

    /// Apply inverted dropout when in training mode, identity otherwise.
    pub fn maybe_dropout(&mut self, x: Var) -> Var {
        let Some(ctx) = self.dropout.as_mut() else {
            return x;
        };
        use rand::Rng;
        let n = self.tape.value(x).len();
        let keep = 1.0 - ctx.p;
        let mask: Vec<f64> = (0..n)
            .map(|_| {
                if ctx.rng.gen::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        self.tape.dropout_mask(x, mask)
    }

    /// Scatter this sample's parameter gradients into `accum`, scaled.
    pub fn accumulate(&self, grads: &Gradients, accum: &mut GradAccum, scale: f64) {
        for (&pid, &var) in self.dense.iter() {
            if let Some(g) = grads.get(var) {
                accum.mats[pid].add_scaled(g, scale);
            }
        }
        for (pid, rows, var) in &self.sparse {
            if let Some(g) = grads.get(*var) {
                for (i, &r) in rows.iter().enumerate() {
                    accum.mats[pid.0].add_row_scaled(r, g.row(i), scale);
                }
            }
        }
    }

    /// A zero row vector; attention over an empty group returns this.
    pub fn zero_vec(&mut self, d: usize) -> Var {
        self.tape.leaf_mat(Mat::zeros(1, d))
    }
}
