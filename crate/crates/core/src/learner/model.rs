use alloc::vec;
use alloc::vec::Vec;

use super::{LearnError, Mat, TransformerParams};
use crate::instances::FeatureTensor;

pub const LAYER_NORM_EPS: f64 = 1e-8;
const PROB_CLAMP: f64 = 1e-12;

struct NormCache {
    xhat: Mat,
    inv_std: Vec<f64>,
}

struct LayerCache {
    input: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    /// Attention weights per head, each `rows x rows`.
    attn: Vec<Mat>,
    heads_out: Mat,
    norm1: NormCache,
    z: Mat,
    ffn_pre: Mat,
    ffn_act: Mat,
    norm2: NormCache,
}

/// Activations kept for the backward pass.
pub struct Cache {
    x: Mat,
    types: Vec<usize>,
    embed_pre: Mat,
    layers: Vec<LayerCache>,
    first_ev: usize,
    ev_hidden: Mat,
    c1_pre: Mat,
    c1: Mat,
    c2_pre: Mat,
    c2: Mat,
    /// `e x n_per_ev` probabilities.
    pub probs: Mat,
}

fn layer_norm(x: &Mat, gain: &[f64], bias: &[f64]) -> (Mat, NormCache) {
    let d = x.cols as f64;
    let mut xhat = Mat::zeros_like(x);
    let mut out = Mat::zeros_like(x);
    let mut inv_std = Vec::with_capacity(x.rows);
    for r in 0..x.rows {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / d;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        let inv = 1.0 / libm::sqrt(var + LAYER_NORM_EPS);
        inv_std.push(inv);
        for c in 0..x.cols {
            let h = (row[c] - mean) * inv;
            *xhat.at_mut(r, c) = h;
            *out.at_mut(r, c) = gain[c] * h + bias[c];
        }
    }
    (out, NormCache { xhat, inv_std })
}

fn layer_norm_backward(
    dy: &Mat,
    cache: &NormCache,
    gain: &[f64],
    dgain: &mut [f64],
    dbias: &mut [f64],
) -> Mat {
    let d = dy.cols as f64;
    let mut dx = Mat::zeros_like(dy);
    for r in 0..dy.rows {
        let mut dxhat = vec![0.0; dy.cols];
        for c in 0..dy.cols {
            let g = dy.at(r, c);
            dgain[c] += g * cache.xhat.at(r, c);
            dbias[c] += g;
            dxhat[c] = g * gain[c];
        }
        let sum: f64 = dxhat.iter().sum();
        let dot: f64 = dxhat
            .iter()
            .zip(cache.xhat.row(r))
            .map(|(a, b)| a * b)
            .sum();
        let inv = cache.inv_std[r];
        for c in 0..dy.cols {
            *dx.at_mut(r, c) = inv / d * (d * dxhat[c] - sum - cache.xhat.at(r, c) * dot);
        }
    }
    dx
}

fn softmax_rows(s: &mut Mat) {
    for r in 0..s.rows {
        let row = s.row_mut(r);
        let mx = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = libm::exp(*v - mx);
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn check_shape(params: &TransformerParams, f: &FeatureTensor) -> Result<(), LearnError> {
    let cfg = &params.config;
    let shape = |dimension, expected, got| {
        if expected == got {
            Ok(())
        } else {
            Err(LearnError::Shape {
                dimension,
                expected,
                got,
            })
        }
    };
    shape("feature columns (timesteps)", cfg.horizon, f.cols)?;
    shape("feature data length", f.rows * f.cols, f.data.len())?;
    shape("token type count", f.rows, f.token_types.len())?;
    if f.ev_count == 0 || f.ev_count > f.rows {
        return Err(LearnError::Shape {
            dimension: "EV token count",
            expected: 1,
            got: f.ev_count,
        });
    }
    Ok(())
}

/// Final encoder hidden states, one row per token.
pub fn encode(params: &TransformerParams, features: &FeatureTensor) -> Result<Mat, LearnError> {
    let (_, cache) = forward(params, features)?;
    let last = cache.layers.last().expect("encoder has layers");
    let l = params.layers.last().expect("encoder has layers");
    let mut out = last.norm2.xhat.clone();
    for r in 0..out.rows {
        for (c, v) in out.row_mut(r).iter_mut().enumerate() {
            *v = l.ln2_gain[c] * *v + l.ln2_bias[c];
        }
    }
    Ok(out)
}

/// Attention weights of every head in every layer, for inspection.
pub fn attention_weights(
    params: &TransformerParams,
    features: &FeatureTensor,
) -> Result<Vec<Mat>, LearnError> {
    let (_, cache) = forward(params, features)?;
    Ok(cache.layers.into_iter().flat_map(|l| l.attn).collect())
}

pub fn forward(
    params: &TransformerParams,
    features: &FeatureTensor,
) -> Result<(Mat, Cache), LearnError> {
    check_shape(params, features)?;
    let cfg = &params.config;
    let dk = cfg.d_k();
    let scale = 1.0 / libm::sqrt(dk as f64);
    let x = Mat::from_vec(features.rows, features.cols, features.data.clone());
    let types: Vec<usize> = features.token_types.iter().map(|t| t.index()).collect();

    let mut embed_pre = x.matmul(&params.embed_w);
    embed_pre.add_row_vector(&params.embed_b);
    let mut h = embed_pre.relu();
    for (r, &t) in types.iter().enumerate() {
        for (v, e) in h.row_mut(r).iter_mut().zip(params.type_embed.row(t)) {
            *v += e;
        }
    }

    let mut layers = Vec::with_capacity(params.layers.len());
    for l in &params.layers {
        let q = h.matmul(&l.wq);
        let k = h.matmul(&l.wk);
        let v = h.matmul(&l.wv);
        let mut heads_out = Mat::zeros(h.rows, cfg.d_model);
        let mut attn = Vec::with_capacity(cfg.heads);
        for head in 0..cfg.heads {
            let (qh, kh, vh) = (
                q.columns(head * dk, dk),
                k.columns(head * dk, dk),
                v.columns(head * dk, dk),
            );
            let mut s = qh.matmul_t(&kh);
            s.data.iter_mut().for_each(|x| *x *= scale);
            softmax_rows(&mut s);
            heads_out.set_columns(head * dk, &s.matmul(&vh));
            attn.push(s);
        }
        let mut pre1 = heads_out.matmul(&l.wm);
        pre1.add_assign(&h);
        let (z, norm1) = layer_norm(&pre1, &l.ln1_gain, &l.ln1_bias);
        let mut ffn_pre = z.matmul(&l.ffn_w1);
        ffn_pre.add_row_vector(&l.ffn_b1);
        let ffn_act = ffn_pre.relu();
        let mut pre2 = ffn_act.matmul(&l.ffn_w2);
        pre2.add_row_vector(&l.ffn_b2);
        pre2.add_assign(&z);
        let (out, norm2) = layer_norm(&pre2, &l.ln2_gain, &l.ln2_bias);
        layers.push(LayerCache {
            input: h,
            q,
            k,
            v,
            attn,
            heads_out,
            norm1,
            z,
            ffn_pre,
            ffn_act,
            norm2,
        });
        h = out;
    }

    let first_ev = features.rows - features.ev_count;
    let ev_hidden = h.rows_range(first_ev, features.ev_count);
    let mut c1_pre = ev_hidden.matmul(&params.cls_w1);
    c1_pre.add_row_vector(&params.cls_b1);
    let c1 = c1_pre.relu();
    let mut c2_pre = c1.matmul(&params.cls_w2);
    c2_pre.add_row_vector(&params.cls_b2);
    let c2 = c2_pre.relu();
    let mut logits = c2.matmul(&params.cls_w3);
    logits.add_row_vector(&params.cls_b3);
    let probs = Mat {
        rows: logits.rows,
        cols: logits.cols,
        data: logits.data.iter().map(|&z| sigmoid(z)).collect(),
    };
    let cache = Cache {
        x,
        types,
        embed_pre,
        layers,
        first_ev,
        ev_hidden,
        c1_pre,
        c1,
        c2_pre,
        c2,
        probs: probs.clone(),
    };
    Ok((probs, cache))
}

/// Mean per-bit binary cross-entropy with probabilities clamped to
/// `[1e-12, 1 - 1e-12]`.
pub fn bce_loss(probs: &[f64], labels: &[u8]) -> Result<f64, LearnError> {
    if probs.len() != labels.len() {
        return Err(LearnError::Shape {
            dimension: "label bits",
            expected: probs.len(),
            got: labels.len(),
        });
    }
    if probs.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (&p, &y) in probs.iter().zip(labels) {
        let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        total -= if y == 1 {
            libm::log(p)
        } else {
            libm::log(1.0 - p)
        };
    }
    Ok(total / probs.len() as f64)
}

fn relu_mask(grad: &mut Mat, pre: &Mat) {
    for (g, &p) in grad.data.iter_mut().zip(&pre.data) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Accumulates into `grads` the gradient of `weight * bce_loss` with respect
/// to every parameter. The clamp is treated as inactive.
pub fn backward(
    params: &TransformerParams,
    cache: &Cache,
    labels: &[u8],
    weight: f64,
    grads: &mut TransformerParams,
) -> Result<(), LearnError> {
    let probs = &cache.probs;
    if labels.len() != probs.data.len() {
        return Err(LearnError::Shape {
            dimension: "label bits",
            expected: probs.data.len(),
            got: labels.len(),
        });
    }
    let cfg = &params.config;
    let dk = cfg.d_k();
    let scale = 1.0 / libm::sqrt(dk as f64);
    let n = labels.len() as f64;
    let dlogits = Mat {
        rows: probs.rows,
        cols: probs.cols,
        data: probs
            .data
            .iter()
            .zip(labels)
            .map(|(&p, &y)| weight * (p - f64::from(y)) / n)
            .collect(),
    };

    add_into(&mut grads.cls_w3.data, &cache.c2.t_matmul(&dlogits).data);
    add_into(&mut grads.cls_b3, &dlogits.column_sums());
    let mut dc2 = dlogits.matmul_t(&params.cls_w3);
    relu_mask(&mut dc2, &cache.c2_pre);
    add_into(&mut grads.cls_w2.data, &cache.c1.t_matmul(&dc2).data);
    add_into(&mut grads.cls_b2, &dc2.column_sums());
    let mut dc1 = dc2.matmul_t(&params.cls_w2);
    relu_mask(&mut dc1, &cache.c1_pre);
    add_into(&mut grads.cls_w1.data, &cache.ev_hidden.t_matmul(&dc1).data);
    add_into(&mut grads.cls_b1, &dc1.column_sums());
    let dev = dc1.matmul_t(&params.cls_w1);

    let rows = cache.x.rows;
    let mut dh = Mat::zeros(rows, cfg.d_model);
    for r in 0..dev.rows {
        dh.row_mut(cache.first_ev + r).copy_from_slice(dev.row(r));
    }

    for (li, l) in params.layers.iter().enumerate().rev() {
        let lc = &cache.layers[li];
        let g = &mut grads.layers[li];
        let dpre2 = layer_norm_backward(
            &dh,
            &lc.norm2,
            &l.ln2_gain,
            &mut g.ln2_gain,
            &mut g.ln2_bias,
        );
        add_into(&mut g.ffn_w2.data, &lc.ffn_act.t_matmul(&dpre2).data);
        add_into(&mut g.ffn_b2, &dpre2.column_sums());
        let mut dffn = dpre2.matmul_t(&l.ffn_w2);
        relu_mask(&mut dffn, &lc.ffn_pre);
        add_into(&mut g.ffn_w1.data, &lc.z.t_matmul(&dffn).data);
        add_into(&mut g.ffn_b1, &dffn.column_sums());
        let mut dz = dffn.matmul_t(&l.ffn_w1);
        dz.add_assign(&dpre2);
        let dpre1 = layer_norm_backward(
            &dz,
            &lc.norm1,
            &l.ln1_gain,
            &mut g.ln1_gain,
            &mut g.ln1_bias,
        );
        add_into(&mut g.wm.data, &lc.heads_out.t_matmul(&dpre1).data);
        let dheads = dpre1.matmul_t(&l.wm);
        let mut dq = Mat::zeros(rows, cfg.d_model);
        let mut dkm = Mat::zeros(rows, cfg.d_model);
        let mut dv = Mat::zeros(rows, cfg.d_model);
        for head in 0..cfg.heads {
            let a = &lc.attn[head];
            let doh = dheads.columns(head * dk, dk);
            let (qh, kh, vh) = (
                lc.q.columns(head * dk, dk),
                lc.k.columns(head * dk, dk),
                lc.v.columns(head * dk, dk),
            );
            let da = doh.matmul_t(&vh);
            dv.set_columns(head * dk, &a.t_matmul(&doh));
            let mut ds = Mat::zeros_like(a);
            for r in 0..a.rows {
                let dot: f64 = a.row(r).iter().zip(da.row(r)).map(|(x, y)| x * y).sum();
                for c in 0..a.cols {
                    *ds.at_mut(r, c) = a.at(r, c) * (da.at(r, c) - dot) * scale;
                }
            }
            dq.set_columns(head * dk, &ds.matmul(&kh));
            dkm.set_columns(head * dk, &ds.t_matmul(&qh));
        }
        add_into(&mut g.wq.data, &lc.input.t_matmul(&dq).data);
        add_into(&mut g.wk.data, &lc.input.t_matmul(&dkm).data);
        add_into(&mut g.wv.data, &lc.input.t_matmul(&dv).data);
        let mut din = dpre1;
        din.add_assign(&dq.matmul_t(&l.wq));
        din.add_assign(&dkm.matmul_t(&l.wk));
        din.add_assign(&dv.matmul_t(&l.wv));
        dh = din;
    }

    for (r, &t) in cache.types.iter().enumerate() {
        add_into(grads.type_embed.row_mut(t), dh.row(r));
    }
    relu_mask(&mut dh, &cache.embed_pre);
    add_into(&mut grads.embed_w.data, &cache.x.t_matmul(&dh).data);
    add_into(&mut grads.embed_b, &dh.column_sums());
    Ok(())
}
