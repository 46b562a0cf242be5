//! Multi-head self-attention block and learned-query attention pooling.
//!
//! Block layout: scaled dot-product self-attention with an output
//! projection, a residual connection into a two-layer ReLU feed-forward
//! whose output is the block output. With a zeroed output projection the
//! block reduces to the feed-forward applied to its input, which the unit
//! fixtures rely on.

use crate::tape::{Tape, Var};

use super::{Forward, TransformerIds};

/// Self-attention + feed-forward over an n×d sequence. `mask[i] == false`
/// marks padding; masked positions get zero attention weight as keys, and
/// their own outputs are meaningless and must be masked downstream.
pub fn transformer_block(
    fwd: &mut Forward,
    x: Var,
    ids: &TransformerIds,
    n_heads: usize,
    mask: Option<&[bool]>,
) -> Var {
    let d = fwd.tape.value(x).cols();
    assert_eq!(d % n_heads, 0);
    let dh = d / n_heads;

    let wq = fwd.bind(ids.wq);
    let wk = fwd.bind(ids.wk);
    let wv = fwd.bind(ids.wv);
    let wo = fwd.bind(ids.wo);
    let w1 = fwd.bind(ids.w1);
    let b1 = fwd.bind(ids.b1);
    let w2 = fwd.bind(ids.w2);
    let b2 = fwd.bind(ids.b2);

    let t = &mut fwd.tape;
    let q = t.matmul(x, wq);
    let k = t.matmul(x, wk);
    let v = t.matmul(x, wv);

    let mut head_outs = Vec::with_capacity(n_heads);
    let scale = 1.0 / (dh as f64).sqrt();
    for h in 0..n_heads {
        let qh = t.slice_cols(q, h * dh, dh);
        let kh = t.slice_cols(k, h * dh, dh);
        let vh = t.slice_cols(v, h * dh, dh);
        let scores = t.matmul_nt(qh, kh);
        let scaled = t.scale(scores, scale);
        let weights = t.softmax_rows(scaled, mask);
        head_outs.push(t.matmul(weights, vh));
    }
    let cat = if head_outs.len() == 1 {
        head_outs[0]
    } else {
        t.concat_cols(&head_outs)
    };
    let proj = t.matmul(cat, wo);
    let h = t.add(x, proj);

    let pre = t.matmul(h, w1);
    let pre = t.add_row(pre, b1);
    let act = t.relu(pre);
    let out = t.matmul(act, w2);
    t.add_row(out, b2)
}

/// Softmax attention pooling with an explicit query: weights are
/// softmax over q·rᵢ (no scaling), output is the weighted sum of rows.
pub fn attend_query(t: &mut Tape, rows: Var, query: Var, mask: Option<&[bool]>) -> Var {
    let logits = t.matmul_nt(query, rows); // 1×k
    let weights = t.softmax_rows(logits, mask);
    t.matmul(weights, rows)
}

/// Attention weights alone, for inspection in tests.
pub fn attend_weights(t: &mut Tape, rows: Var, query: Var, mask: Option<&[bool]>) -> Var {
    let logits = t.matmul_nt(query, rows);
    t.softmax_rows(logits, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat::Mat;
    use crate::model::{Dims, ModelIndex, Params};

    fn setup() -> (Params, ModelIndex, Dims) {
        let dims = Dims {
            d: 8,
            heads: 2,
            d_ff: 8,
            title_len: 5,
            max_seq: 6,
            vocab: 12,
        };
        let mut params = Params::new();
        let idx = ModelIndex::init(&mut params, &dims, 11).unwrap();
        (params, idx, dims)
    }

    #[test]
    fn padding_does_not_change_real_positions() {
        let (params, idx, dims) = setup();
        let rows = Mat::randn(3, dims.d, 0.5, &mut crate::rng::stream(5, "x", 0));

        let mut f1 = Forward::new(&params);
        let x1 = f1.tape.leaf_mat(rows.clone());
        let out1 = transformer_block(&mut f1, x1, &idx.hetero_tf, dims.heads, None);
        let real = f1.tape.value(out1).clone();

        let mut padded = Mat::zeros(5, dims.d);
        for r in 0..3 {
            padded.row_mut(r).copy_from_slice(rows.row(r));
        }
        let mask = [true, true, true, false, false];
        let mut f2 = Forward::new(&params);
        let x2 = f2.tape.leaf_mat(padded);
        let out2 = transformer_block(&mut f2, x2, &idx.hetero_tf, dims.heads, Some(&mask));
        let got = f2.tape.value(out2);

        for r in 0..3 {
            for c in 0..dims.d {
                assert!(
                    (real.at(r, c) - got.at(r, c)).abs() < 1e-9,
                    "row {r} col {c}"
                );
            }
        }
    }

    #[test]
    fn zero_output_projection_reduces_to_ffn() {
        let (mut params, idx, dims) = setup();
        params.set(idx.title_tf.wo, Mat::zeros(dims.d, dims.d));

        let x_row = Mat::randn(1, dims.d, 0.5, &mut crate::rng::stream(6, "x", 0));

        // Block output with W_O = 0.
        let mut f = Forward::new(&params);
        let x = f.tape.leaf_mat(x_row.clone());
        let out = transformer_block(&mut f, x, &idx.title_tf, dims.heads, None);
        let block = f.tape.value(out).clone();

        // FFN applied directly to the input row.
        let mut f2 = Forward::new(&params);
        let x2 = f2.tape.leaf_mat(x_row);
        let w1 = f2.bind(idx.title_tf.w1);
        let b1 = f2.bind(idx.title_tf.b1);
        let w2 = f2.bind(idx.title_tf.w2);
        let b2 = f2.bind(idx.title_tf.b2);
        let t = &mut f2.tape;
        let pre = t.matmul(x2, w1);
        let pre = t.add_row(pre, b1);
        let act = t.relu(pre);
        let o = t.matmul(act, w2);
        let ffn = t.add_row(o, b2);
        assert_eq!(&block, f2.tape.value(ffn));
    }

    #[test]
    fn attend_equal_scores_are_uniform() {
        let (params, _idx, _dims) = setup();
        let mut f = Forward::new(&params);
        let rows = f.tape.leaf_mat(Mat::from_vec(
            4,
            2,
            vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
        ));
        let q = f.tape.leaf_mat(Mat::row_vec(vec![3.0, -1.0]));
        let w = attend_weights(&mut f.tape, rows, q, None);
        for &v in f.tape.value(w).data() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn attend_single_row_returns_it() {
        let (params, _idx, _dims) = setup();
        let mut f = Forward::new(&params);
        let rows = f.tape.leaf_mat(Mat::row_vec(vec![0.3, -0.7, 2.0]));
        let q = f.tape.leaf_mat(Mat::row_vec(vec![9.0, 9.0, 9.0]));
        let out = attend_query(&mut f.tape, rows, q, None);
        assert_eq!(f.tape.value(out).data(), &[0.3, -0.7, 2.0]);
    }
}
