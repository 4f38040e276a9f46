//! Forward and backward passes.
//!
//! Stage 1 is a shared per-point MLP (two GELU layers), a channel-wise max
//! over valid points and a linear projection. Stage 2 is a pre-norm GPT
//! decoder whose position-0 input is the start token plus the point-set
//! embedding. Gradients are written by hand; `gradient_check` tests compare
//! them against central differences.

use super::params::{LayerLayout, ModelParams};
use crate::seed::Rng;
use rand::Rng as _;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Signed log compression applied to raw point coordinates.
pub fn squash(v: f64) -> f64 {
    v.signum() * v.abs().ln_1p()
}

fn gelu(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * x * (1.0 + t)
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// `y = x w + b` for `rows` rows.
fn linear(x: &[f64], rows: usize, w: &[f64], b: &[f64], in_d: usize, out_d: usize) -> Vec<f64> {
    let mut y = Vec::with_capacity(rows * out_d);
    for r in 0..rows {
        y.extend_from_slice(b);
        let yr = &mut y[r * out_d..(r + 1) * out_d];
        for (i, &xv) in x[r * in_d..(r + 1) * in_d].iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let wr = &w[i * out_d..(i + 1) * out_d];
            for (yo, &wo) in yr.iter_mut().zip(wr) {
                *yo += xv * wo;
            }
        }
    }
    y
}

/// Accumulates `dw += x^T dy`, `db += sum dy`, and optionally `dx = dy w^T`.
#[allow(clippy::too_many_arguments)]
fn linear_backward(
    x: &[f64],
    rows: usize,
    w: &[f64],
    in_d: usize,
    out_d: usize,
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    dx: Option<&mut [f64]>,
) {
    for r in 0..rows {
        let dyr = &dy[r * out_d..(r + 1) * out_d];
        for (d, &g) in db.iter_mut().zip(dyr) {
            *d += g;
        }
        for (i, &xv) in x[r * in_d..(r + 1) * in_d].iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let dwr = &mut dw[i * out_d..(i + 1) * out_d];
            for (d, &g) in dwr.iter_mut().zip(dyr) {
                *d += xv * g;
            }
        }
    }
    if let Some(dx) = dx {
        for r in 0..rows {
            let dyr = &dy[r * out_d..(r + 1) * out_d];
            for i in 0..in_d {
                let wr = &w[i * out_d..(i + 1) * out_d];
                let s: f64 = wr.iter().zip(dyr).map(|(a, b)| a * b).sum();
                dx[r * in_d + i] = s;
            }
        }
    }
}

/// Mutable views of two disjoint ranges, `a` before `b`.
fn pair_mut<'a>(
    g: &'a mut [f64],
    a: &std::ops::Range<usize>,
    b: &std::ops::Range<usize>,
) -> (&'a mut [f64], &'a mut [f64]) {
    debug_assert!(a.end <= b.start);
    let (lo, hi) = g.split_at_mut(b.start);
    (&mut lo[a.clone()], &mut hi[..b.len()])
}

struct LnCache {
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

fn layer_norm(x: &[f64], rows: usize, d: usize, gain: &[f64], bias: &[f64]) -> (Vec<f64>, LnCache) {
    let mut y = vec![0.0; rows * d];
    let mut xhat = vec![0.0; rows * d];
    let mut rstd = vec![0.0; rows];
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let mean = xr.iter().sum::<f64>() / d as f64;
        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = rs;
        for c in 0..d {
            let h = (xr[c] - mean) * rs;
            xhat[r * d + c] = h;
            y[r * d + c] = h * gain[c] + bias[c];
        }
    }
    (y, LnCache { xhat, rstd })
}

/// Adds the input gradient into `dx`.
fn layer_norm_backward(
    cache: &LnCache,
    rows: usize,
    d: usize,
    gain: &[f64],
    dy: &[f64],
    dgain: &mut [f64],
    dbias: &mut [f64],
    dx: &mut [f64],
) {
    for r in 0..rows {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let mut mean_g = 0.0;
        let mut mean_gx = 0.0;
        for c in 0..d {
            dgain[c] += dyr[c] * xh[c];
            dbias[c] += dyr[c];
            let g = dyr[c] * gain[c];
            mean_g += g;
            mean_gx += g * xh[c];
        }
        mean_g /= d as f64;
        mean_gx /= d as f64;
        for c in 0..d {
            let g = dyr[c] * gain[c];
            dx[r * d + c] += cache.rstd[r] * (g - mean_g - xh[c] * mean_gx);
        }
    }
}

pub(crate) struct EncoderCache {
    feats: Vec<f64>,
    n: usize,
    pre1: Vec<f64>,
    h1: Vec<f64>,
    pre2: Vec<f64>,
    argmax: Vec<usize>,
    pool: Vec<f64>,
}

/// Stage 1 over the valid rows of a point set (`n` rows of `input_dim`).
pub(crate) fn encoder_forward(p: &ModelParams, feats: &[f64], n: usize) -> (Vec<f64>, EncoderCache) {
    let cfg = p.config();
    let d = cfg.embed_dim;
    let pin = cfg.input_dim();
    let l = &p.layout;
    let pre1 = linear(feats, n, p.get(&l.enc_w1), p.get(&l.enc_b1), pin, d);
    let h1: Vec<f64> = pre1.iter().map(|&v| gelu(v)).collect();
    let pre2 = linear(&h1, n, p.get(&l.enc_w2), p.get(&l.enc_b2), d, d);
    let mut pool = vec![f64::NEG_INFINITY; d];
    let mut argmax = vec![0; d];
    for r in 0..n {
        for c in 0..d {
            let v = gelu(pre2[r * d + c]);
            // strict comparison: the first maximal row wins
            if v > pool[c] {
                pool[c] = v;
                argmax[c] = r;
            }
        }
    }
    let emb = linear(&pool, 1, p.get(&l.enc_wp), p.get(&l.enc_bp), d, d);
    (
        emb,
        EncoderCache {
            feats: feats.to_vec(),
            n,
            pre1,
            h1,
            pre2,
            argmax,
            pool,
        },
    )
}

pub(crate) fn encoder_backward(p: &ModelParams, cache: &EncoderCache, d_emb: &[f64], grad: &mut [f64]) {
    let cfg = p.config();
    let d = cfg.embed_dim;
    let pin = cfg.input_dim();
    let l = &p.layout;
    let mut d_pool = vec![0.0; d];
    {
        let (dw, db) = pair_mut(grad, &l.enc_wp, &l.enc_bp);
        linear_backward(&cache.pool, 1, p.get(&l.enc_wp), d, d, d_emb, dw, db, Some(&mut d_pool));
    }
    // route the pooled gradient to the winning rows only
    let mut rows: Vec<usize> = cache.argmax.clone();
    rows.sort_unstable();
    rows.dedup();
    let m = rows.len();
    let mut d_pre2 = vec![0.0; m * d];
    let mut h1_rows = vec![0.0; m * d];
    let mut pre1_rows = vec![0.0; m * d];
    let mut feat_rows = vec![0.0; m * pin];
    for (k, &r) in rows.iter().enumerate() {
        for c in 0..d {
            if cache.argmax[c] == r {
                d_pre2[k * d + c] = d_pool[c] * gelu_grad(cache.pre2[r * d + c]);
            }
        }
        h1_rows[k * d..(k + 1) * d].copy_from_slice(&cache.h1[r * d..(r + 1) * d]);
        pre1_rows[k * d..(k + 1) * d].copy_from_slice(&cache.pre1[r * d..(r + 1) * d]);
        feat_rows[k * pin..(k + 1) * pin].copy_from_slice(&cache.feats[r * pin..(r + 1) * pin]);
    }
    let mut d_h1 = vec![0.0; m * d];
    {
        let (dw, db) = pair_mut(grad, &l.enc_w2, &l.enc_b2);
        linear_backward(&h1_rows, m, p.get(&l.enc_w2), d, d, &d_pre2, dw, db, Some(&mut d_h1));
    }
    let d_pre1: Vec<f64> = d_h1
        .iter()
        .zip(&pre1_rows)
        .map(|(g, &x)| g * gelu_grad(x))
        .collect();
    let (dw, db) = pair_mut(grad, &l.enc_w1, &l.enc_b1);
    linear_backward(&feat_rows, m, p.get(&l.enc_w1), pin, d, &d_pre1, dw, db, None);
    debug_assert!(cache.n >= m);
}

struct LayerCache {
    x_in: Vec<f64>,
    ln1: LnCache,
    xn1: Vec<f64>,
    qkv: Vec<f64>,
    probs: Vec<f64>,
    att: Vec<f64>,
    x_mid: Vec<f64>,
    ln2: LnCache,
    xn2: Vec<f64>,
    fc_pre: Vec<f64>,
    fc_act: Vec<f64>,
}

pub(crate) struct DecoderCache {
    s: usize,
    ids: Vec<u32>,
    drop_mask: Option<Vec<f64>>,
    layers: Vec<LayerCache>,
    lnf: LnCache,
    xnf: Vec<f64>,
}

fn layer_forward(p: &ModelParams, ll: &LayerLayout, x: Vec<f64>, s: usize) -> (Vec<f64>, LayerCache) {
    let cfg = p.config();
    let d = cfg.embed_dim;
    let h = cfg.heads;
    let dh = cfg.head_dim();
    let f = cfg.ffn_dim();
    let scale = 1.0 / (dh as f64).sqrt();

    let (xn1, ln1) = layer_norm(&x, s, d, p.get(&ll.ln1_g), p.get(&ll.ln1_b));
    let qkv = linear(&xn1, s, p.get(&ll.w_qkv), p.get(&ll.b_qkv), d, 3 * d);
    let mut probs = vec![0.0; h * s * s];
    let mut att = vec![0.0; s * d];
    for head in 0..h {
        let qo = head * dh;
        let ko = d + head * dh;
        let vo = 2 * d + head * dh;
        for t in 0..s {
            let q = &qkv[t * 3 * d + qo..t * 3 * d + qo + dh];
            let row = &mut probs[(head * s + t) * s..(head * s + t + 1) * s];
            let mut max = f64::NEG_INFINITY;
            for (u, slot) in row.iter_mut().enumerate().take(t + 1) {
                let k = &qkv[u * 3 * d + ko..u * 3 * d + ko + dh];
                let sc = q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() * scale;
                *slot = sc;
                max = max.max(sc);
            }
            let mut z = 0.0;
            for slot in row.iter_mut().take(t + 1) {
                *slot = (*slot - max).exp();
                z += *slot;
            }
            for slot in row.iter_mut().take(t + 1) {
                *slot /= z;
            }
            let out = &mut att[t * d + head * dh..t * d + head * dh + dh];
            for u in 0..=t {
                let w = row[u];
                let v = &qkv[u * 3 * d + vo..u * 3 * d + vo + dh];
                for (o, &vv) in out.iter_mut().zip(v) {
                    *o += w * vv;
                }
            }
        }
    }
    let attn_out = linear(&att, s, p.get(&ll.w_o), p.get(&ll.b_o), d, d);
    let x_mid: Vec<f64> = x.iter().zip(&attn_out).map(|(a, b)| a + b).collect();
    let (xn2, ln2) = layer_norm(&x_mid, s, d, p.get(&ll.ln2_g), p.get(&ll.ln2_b));
    let fc_pre = linear(&xn2, s, p.get(&ll.w_fc), p.get(&ll.b_fc), d, f);
    let fc_act: Vec<f64> = fc_pre.iter().map(|&v| gelu(v)).collect();
    let mlp_out = linear(&fc_act, s, p.get(&ll.w_proj), p.get(&ll.b_proj), f, d);
    let x_out: Vec<f64> = x_mid.iter().zip(&mlp_out).map(|(a, b)| a + b).collect();
    (
        x_out,
        LayerCache {
            x_in: x,
            ln1,
            xn1,
            qkv,
            probs,
            att,
            x_mid,
            ln2,
            xn2,
            fc_pre,
            fc_act,
        },
    )
}

/// Returns the gradient with respect to the layer input.
fn layer_backward(
    p: &ModelParams,
    ll: &LayerLayout,
    c: &LayerCache,
    s: usize,
    d_out: Vec<f64>,
    grad: &mut [f64],
) -> Vec<f64> {
    let cfg = p.config();
    let d = cfg.embed_dim;
    let h = cfg.heads;
    let dh = cfg.head_dim();
    let f = cfg.ffn_dim();
    let scale = 1.0 / (dh as f64).sqrt();

    // MLP branch
    let mut d_act = vec![0.0; s * f];
    {
        let (dw, db) = pair_mut(grad, &ll.w_proj, &ll.b_proj);
        linear_backward(&c.fc_act, s, p.get(&ll.w_proj), f, d, &d_out, dw, db, Some(&mut d_act));
    }
    let d_fc: Vec<f64> = d_act
        .iter()
        .zip(&c.fc_pre)
        .map(|(g, &x)| g * gelu_grad(x))
        .collect();
    let mut d_xn2 = vec![0.0; s * d];
    {
        let (dw, db) = pair_mut(grad, &ll.w_fc, &ll.b_fc);
        linear_backward(&c.xn2, s, p.get(&ll.w_fc), d, f, &d_fc, dw, db, Some(&mut d_xn2));
    }
    let mut d_mid = d_out;
    {
        let (dg, db) = pair_mut(grad, &ll.ln2_g, &ll.ln2_b);
        layer_norm_backward(&c.ln2, s, d, p.get(&ll.ln2_g), &d_xn2, dg, db, &mut d_mid);
    }

    // attention branch
    let mut d_att = vec![0.0; s * d];
    {
        let (dw, db) = pair_mut(grad, &ll.w_o, &ll.b_o);
        linear_backward(&c.att, s, p.get(&ll.w_o), d, d, &d_mid, dw, db, Some(&mut d_att));
    }
    let mut d_qkv = vec![0.0; s * 3 * d];
    let mut d_row = vec![0.0; s];
    for head in 0..h {
        let qo = head * dh;
        let ko = d + head * dh;
        let vo = 2 * d + head * dh;
        for t in 0..s {
            let prow = &c.probs[(head * s + t) * s..(head * s + t + 1) * s];
            let da = &d_att[t * d + head * dh..t * d + head * dh + dh];
            let mut dot = 0.0;
            for u in 0..=t {
                let v = &c.qkv[u * 3 * d + vo..u * 3 * d + vo + dh];
                let dp: f64 = da.iter().zip(v).map(|(a, b)| a * b).sum();
                d_row[u] = dp;
                dot += prow[u] * dp;
                let dv = &mut d_qkv[u * 3 * d + vo..u * 3 * d + vo + dh];
                for (g, &a) in dv.iter_mut().zip(da) {
                    *g += prow[u] * a;
                }
            }
            for u in 0..=t {
                let ds = prow[u] * (d_row[u] - dot) * scale;
                if ds == 0.0 {
                    continue;
                }
                for j in 0..dh {
                    let qv = c.qkv[t * 3 * d + qo + j];
                    let kv = c.qkv[u * 3 * d + ko + j];
                    d_qkv[t * 3 * d + qo + j] += ds * kv;
                    d_qkv[u * 3 * d + ko + j] += ds * qv;
                }
            }
        }
    }
    let mut d_xn1 = vec![0.0; s * d];
    {
        let (dw, db) = pair_mut(grad, &ll.w_qkv, &ll.b_qkv);
        linear_backward(&c.xn1, s, p.get(&ll.w_qkv), d, 3 * d, &d_qkv, dw, db, Some(&mut d_xn1));
    }
    let mut d_in = d_mid;
    {
        let (dg, db) = pair_mut(grad, &ll.ln1_g, &ll.ln1_b);
        layer_norm_backward(&c.ln1, s, d, p.get(&ll.ln1_g), &d_xn1, dg, db, &mut d_in);
    }
    debug_assert_eq!(c.x_in.len(), s * d);
    debug_assert_eq!(c.x_mid.len(), s * d);
    d_in
}

/// Decoder logits for every position. `ids[0]` is the start token; the
/// point-set embedding is added to position 0.
pub(crate) fn decoder_forward(
    p: &ModelParams,
    emb: &[f64],
    ids: &[u32],
    dropout: Option<&mut Rng>,
) -> (Vec<f64>, DecoderCache) {
    let cfg = p.config();
    let d = cfg.embed_dim;
    let v = p.vocab_size();
    let s = ids.len();
    let l = &p.layout;
    let tok = p.get(&l.tok);
    let pos = p.get(&l.pos);
    let mut x = vec![0.0; s * d];
    for (t, &id) in ids.iter().enumerate() {
        let id = id as usize;
        for c in 0..d {
            x[t * d + c] = tok[id * d + c] + pos[t * d + c];
        }
    }
    for c in 0..d {
        x[c] += emb[c];
    }
    let drop_mask = match dropout {
        Some(rng) if cfg.dropout > 0.0 => {
            let keep = 1.0 - cfg.dropout;
            let mask: Vec<f64> = (0..s * d)
                .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect();
            for (xv, m) in x.iter_mut().zip(&mask) {
                *xv *= m;
            }
            Some(mask)
        }
        _ => None,
    };
    let mut layers = Vec::with_capacity(cfg.layers);
    for ll in &l.layers {
        let (next, cache) = layer_forward(p, ll, x, s);
        layers.push(cache);
        x = next;
    }
    let (xnf, lnf) = layer_norm(&x, s, d, p.get(&l.lnf_g), p.get(&l.lnf_b));
    let logits = linear(&xnf, s, p.get(&l.w_out), p.get(&l.b_out), d, v);
    (
        logits,
        DecoderCache {
            s,
            ids: ids.to_vec(),
            drop_mask,
            layers,
            lnf,
            xnf,
        },
    )
}

/// Backpropagates logit gradients; returns the gradient for the embedding.
pub(crate) fn decoder_backward(
    p: &ModelParams,
    cache: &DecoderCache,
    d_logits: &[f64],
    grad: &mut [f64],
) -> Vec<f64> {
    let cfg = p.config();
    let d = cfg.embed_dim;
    let v = p.vocab_size();
    let s = cache.s;
    let l = &p.layout;
    let mut d_xnf = vec![0.0; s * d];
    {
        let (dw, db) = pair_mut(grad, &l.w_out, &l.b_out);
        linear_backward(&cache.xnf, s, p.get(&l.w_out), d, v, d_logits, dw, db, Some(&mut d_xnf));
    }
    let mut dx = vec![0.0; s * d];
    {
        let (dg, db) = pair_mut(grad, &l.lnf_g, &l.lnf_b);
        layer_norm_backward(&cache.lnf, s, d, p.get(&l.lnf_g), &d_xnf, dg, db, &mut dx);
    }
    for (ll, lc) in l.layers.iter().zip(&cache.layers).rev() {
        dx = layer_backward(p, ll, lc, s, dx, grad);
    }
    if let Some(mask) = &cache.drop_mask {
        for (g, m) in dx.iter_mut().zip(mask) {
            *g *= m;
        }
    }
    {
        let dtok = &mut grad[l.tok.clone()];
        for (t, &id) in cache.ids.iter().enumerate() {
            let id = id as usize;
            for c in 0..d {
                dtok[id * d + c] += dx[t * d + c];
            }
        }
    }
    {
        let dpos = &mut grad[l.pos.clone()];
        for (g, &x) in dpos.iter_mut().zip(&dx) {
            *g += x;
        }
    }
    dx[..d].to_vec()
}

/// Row-wise softmax of a `[rows, v]` logit matrix.
pub(crate) fn softmax_rows(logits: &[f64], v: usize) -> Vec<f64> {
    let mut out = logits.to_vec();
    for row in out.chunks_mut(v) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            z += *x;
        }
        for x in row.iter_mut() {
            *x /= z;
        }
    }
    out
}

/// Summed cross-entropy of `targets` under `logits`, and the gradient of
/// `scale * loss` with respect to the logits.
pub(crate) fn cross_entropy(logits: &[f64], v: usize, targets: &[u32], scale: f64) -> (f64, Vec<f64>) {
    let probs = softmax_rows(logits, v);
    let mut loss = 0.0;
    let mut grad = probs;
    for (t, &target) in targets.iter().enumerate() {
        let row = &mut grad[t * v..(t + 1) * v];
        let lrow = &logits[t * v..(t + 1) * v];
        let max = lrow.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + lrow.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        loss += lse - lrow[target as usize];
        row[target as usize] -= 1.0;
        for g in row.iter_mut() {
            *g *= scale;
        }
    }
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_derivative_matches_difference() {
        for &x in &[-3.0, -0.5, 0.0, 0.3, 2.0] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn squash_is_odd_and_monotone() {
        assert_eq!(squash(0.0), 0.0);
        assert_eq!(squash(-2.0), -squash(2.0));
        assert!(squash(10.0) > squash(9.0));
    }

    #[test]
    fn cross_entropy_micro_case() {
        // two positions, three classes
        let logits = [0.0, 1.0, 2.0, 1.0, 1.0, 1.0];
        let (loss, _) = cross_entropy(&logits, 3, &[2, 0], 1.0);
        let p0 = 2f64.exp() / (1.0 + 1f64.exp() + 2f64.exp());
        let expected = -p0.ln() + 3f64.ln();
        assert!((loss - expected).abs() < 1e-12);
    }
}
