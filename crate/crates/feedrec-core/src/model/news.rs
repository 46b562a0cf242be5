//! News encoder: a title transformer pooled by a learned query, plus
//! position, feedback-type, dwell-bucket and interval-bucket embeddings
//! summed into one vector per feedback.

use crate::error::{Error, Result};
use crate::tape::Var;

use super::transformer::{attend_query, transformer_block};
use super::{Ablation, Dims, Forward, ModelIndex};

/// Host-side inputs for encoding one history record. Buckets are computed
/// with `feedlog::quantize_time`; `interval_bucket` is 0 when the record has
/// no predecessor and `dwell_bucket` is 0 when the type carries no dwell.
#[derive(Clone, Debug)]
pub struct RecordInput {
    pub tokens: Vec<u32>,
    pub type_index: usize,
    pub dwell_bucket: usize,
    pub interval_bucket: usize,
    pub position: usize,
}

/// Inputs for a candidate news item at scoring time.
#[derive(Clone, Debug)]
pub struct CandidateInput {
    pub tokens: Vec<u32>,
    pub position: usize,
}

/// Encode a tokenized title into a d-vector: token embeddings → transformer
/// block → learned-query attention pooling. `pad_to` appends masked padding
/// (output is invariant to it).
pub fn encode_title(
    fwd: &mut Forward,
    idx: &ModelIndex,
    dims: &Dims,
    tokens: &[u32],
    pad_to: Option<usize>,
) -> Result<Var> {
    if tokens.is_empty() {
        return Err(Error::Input("empty title".into()));
    }
    let take = tokens.len().min(dims.title_len);
    let mut ids: Vec<usize> = tokens[..take].iter().map(|&t| t as usize).collect();
    for &id in &ids {
        if id >= dims.vocab {
            return Err(Error::Input(format!(
                "token id {id} out of vocabulary ({})",
                dims.vocab
            )));
        }
    }

    let mask: Option<Vec<bool>> = match pad_to {
        Some(target) if target > ids.len() => {
            let mut m = vec![true; ids.len()];
            m.resize(target, false);
            ids.resize(target, 0);
            Some(m)
        }
        _ => None,
    };

    let x = fwd.bind_rows(idx.token_table, &ids);
    let x = fwd.maybe_dropout(x);
    let h = transformer_block(fwd, x, &idx.title_tf, dims.heads, mask.as_deref());
    let q = fwd.bind(idx.title_query);
    Ok(attend_query(&mut fwd.tape, h, q, mask.as_deref()))
}

fn table_row(fwd: &mut Forward, table: super::PId, row: usize) -> Var {
    let t = fwd.bind(table);
    fwd.tape.select_rows(t, &[row])
}

/// Encode one history record: the sum of title, position, type, dwell and
/// interval embeddings (minus any disabled by ablation).
pub fn encode_feedback(
    fwd: &mut Forward,
    idx: &ModelIndex,
    dims: &Dims,
    abl: &Ablation,
    rec: &RecordInput,
) -> Result<Var> {
    if rec.position >= dims.max_seq {
        return Err(Error::Input(format!(
            "position {} out of range (max_seq {})",
            rec.position, dims.max_seq
        )));
    }
    let mut e = encode_title(fwd, idx, dims, &rec.tokens, None)?;
    if !abl.disable_position_embedding {
        let p = table_row(fwd, idx.pos_table, rec.position);
        e = fwd.tape.add(e, p);
    }
    if !abl.disable_type_embedding {
        let ty = table_row(fwd, idx.type_table, rec.type_index);
        e = fwd.tape.add(e, ty);
    }
    if !abl.disable_dwell_embedding {
        let dw = table_row(fwd, idx.dwell_table, rec.dwell_bucket);
        e = fwd.tape.add(e, dw);
    }
    if !abl.disable_interval_embedding {
        let iv = table_row(fwd, idx.interval_table, rec.interval_bucket);
        e = fwd.tape.add(e, iv);
    }
    Ok(e)
}

/// Encode a candidate news item. The type embedding is deactivated, and
/// dwell/interval embeddings are omitted as undefined before a click; the
/// candidate keeps its title and position components.
pub fn encode_candidate(
    fwd: &mut Forward,
    idx: &ModelIndex,
    dims: &Dims,
    abl: &Ablation,
    cand: &CandidateInput,
) -> Result<Var> {
    if cand.position >= dims.max_seq {
        return Err(Error::Input(format!(
            "candidate position {} out of range (max_seq {})",
            cand.position, dims.max_seq
        )));
    }
    let mut e = encode_title(fwd, idx, dims, &cand.tokens, None)?;
    if !abl.disable_position_embedding {
        let p = table_row(fwd, idx.pos_table, cand.position);
        e = fwd.tape.add(e, p);
    }
    Ok(e)
}
