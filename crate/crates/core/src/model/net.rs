//! Pre-norm encoder-decoder: forward pass with activation caches and the
//! matching hand-derived backward pass.
//!
//! Encoder layer: `x += attn(ln1(x)); x += ffn(ln2(x))`.
//! Decoder layer: `y += self_attn(ln1(y)); y += cross_attn(ln2(y), enc); y += ffn(ln3(y))`.
//! Output: `logits = final_ln(y) · tok_embᵀ`.
//!
//! Source PAD only ever appears as a trailing run, so masking PAD keys is the
//! same as running the encoder on the unpadded prefix, which is what happens
//! here.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::linalg::{self, gemm, Scalar, View, ViewMut};
use super::params::{AttnIdx, FfnIdx, ModelParams, NormIdx};
use super::ModelError;
use crate::tokenizer::{BOS, PAD};

const LN_EPS: f64 = 1e-5;

struct NormCache<F> {
    xhat: Vec<F>,
    rstd: Vec<F>,
}

fn norm_fwd<F: Scalar>(x: &[F], d: usize, gain: &[F], bias: &[F]) -> (Vec<F>, NormCache<F>) {
    let rows = x.len() / d;
    let mut y = vec![F::zero(); x.len()];
    let mut xhat = vec![F::zero(); x.len()];
    let mut rstd = vec![F::zero(); rows];
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().map(|v| v.as_f64()).sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = F::of(rs);
        for c in 0..d {
            let h = F::of((row[c].as_f64() - mean) * rs);
            xhat[r * d + c] = h;
            y[r * d + c] = h * gain[c] + bias[c];
        }
    }
    (y, NormCache { xhat, rstd })
}

fn norm_bwd<F: Scalar>(
    dy: &[F],
    cache: &NormCache<F>,
    d: usize,
    gain: &[F],
    dgain: &mut [F],
    dbias: &mut [F],
) -> Vec<F> {
    let rows = dy.len() / d;
    let mut dx = vec![F::zero(); dy.len()];
    let mut dxhat = vec![F::zero(); d];
    for r in 0..rows {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let mut mean_dxhat = 0.0f64;
        let mut mean_dxhat_xhat = 0.0f64;
        for c in 0..d {
            dgain[c] += dyr[c] * xh[c];
            dbias[c] += dyr[c];
            dxhat[c] = dyr[c] * gain[c];
            mean_dxhat += dxhat[c].as_f64();
            mean_dxhat_xhat += (dxhat[c] * xh[c]).as_f64();
        }
        mean_dxhat /= d as f64;
        mean_dxhat_xhat /= d as f64;
        let rs = cache.rstd[r].as_f64();
        for c in 0..d {
            dx[r * d + c] = F::of(rs * (dxhat[c].as_f64() - mean_dxhat - xh[c].as_f64() * mean_dxhat_xhat));
        }
    }
    dx
}

struct AttnCache<F> {
    q_in: Vec<F>,
    kv_in: Vec<F>,
    q: Vec<F>,
    k: Vec<F>,
    v: Vec<F>,
    /// `heads × tq × tk`, exactly zero on masked entries.
    probs: Vec<F>,
    ctx: Vec<F>,
    tq: usize,
    tk: usize,
}

struct Dims {
    d: usize,
    heads: usize,
    dh: usize,
}

fn attn_fwd<F: Scalar>(
    p: &ModelParams<F>,
    idx: AttnIdx,
    dims: &Dims,
    q_in: &[F],
    kv_in: &[F],
    causal: bool,
) -> (Vec<F>, AttnCache<F>) {
    let Dims { d, heads, dh } = *dims;
    let tq = q_in.len() / d;
    let tk = kv_in.len() / d;
    let q = linalg::matmul(q_in, p.get(idx.wq), tq, d, d);
    let k = linalg::matmul(kv_in, p.get(idx.wk), tk, d, d);
    let v = linalg::matmul(kv_in, p.get(idx.wv), tk, d, d);
    let scale = F::of(1.0 / (dh as f64).sqrt());
    let mut probs = vec![F::zero(); heads * tq * tk];
    let mut ctx = vec![F::zero(); tq * d];
    for h in 0..heads {
        let s = &mut probs[h * tq * tk..(h + 1) * tq * tk];
        gemm(
            scale,
            View::cols_of(&q, tq, d, h * dh, dh),
            View::cols_of(&k, tk, d, h * dh, dh).t(),
            F::zero(),
            ViewMut::new(s, tq, tk),
        );
        for i in 0..tq {
            let row = &mut s[i * tk..(i + 1) * tk];
            let valid = if causal { (i + 1).min(tk) } else { tk };
            let max = row[..valid].iter().fold(f64::NEG_INFINITY, |m, x| m.max(x.as_f64()));
            let mut sum = 0.0f64;
            for x in row[..valid].iter_mut() {
                let e = (x.as_f64() - max).exp();
                sum += e;
                *x = F::of(e);
            }
            let inv = F::of(1.0 / sum);
            for x in row[..valid].iter_mut() {
                *x *= inv;
            }
            row[valid..].fill(F::zero());
        }
        gemm(
            F::one(),
            View::new(s, tq, tk),
            View::cols_of(&v, tk, d, h * dh, dh),
            F::zero(),
            ViewMut::cols_of(&mut ctx, tq, d, h * dh, dh),
        );
    }
    let out = linalg::matmul(&ctx, p.get(idx.wo), tq, d, d);
    let cache = AttnCache { q_in: q_in.to_vec(), kv_in: kv_in.to_vec(), q, k, v, probs, ctx, tq, tk };
    (out, cache)
}

/// Returns `(d q_in, d kv_in)`.
fn attn_bwd<F: Scalar>(
    p: &ModelParams<F>,
    idx: AttnIdx,
    dims: &Dims,
    c: &AttnCache<F>,
    dout: &[F],
    g: &mut ModelParams<F>,
) -> (Vec<F>, Vec<F>) {
    let Dims { d, heads, dh } = *dims;
    let (tq, tk) = (c.tq, c.tk);
    let scale = F::of(1.0 / (dh as f64).sqrt());

    linalg::add_at_b(&mut g.tensors[idx.wo], &c.ctx, dout, tq, d, d);
    let dctx = linalg::matmul_bt(dout, p.get(idx.wo), tq, d, d);

    let mut dq = vec![F::zero(); tq * d];
    let mut dk = vec![F::zero(); tk * d];
    let mut dv = vec![F::zero(); tk * d];
    let mut dp = vec![F::zero(); tq * tk];
    for h in 0..heads {
        let probs = &c.probs[h * tq * tk..(h + 1) * tq * tk];
        // dP = dctx_h · v_hᵀ
        gemm(
            F::one(),
            View::cols_of(&dctx, tq, d, h * dh, dh),
            View::cols_of(&c.v, tk, d, h * dh, dh).t(),
            F::zero(),
            ViewMut::new(&mut dp, tq, tk),
        );
        // dv_h = Pᵀ · dctx_h
        gemm(
            F::one(),
            View::new(probs, tq, tk).t(),
            View::cols_of(&dctx, tq, d, h * dh, dh),
            F::zero(),
            ViewMut::cols_of(&mut dv, tk, d, h * dh, dh),
        );
        // softmax backward, in place: dS = P ⊙ (dP − Σ P⊙dP)
        for i in 0..tq {
            let pr = &probs[i * tk..(i + 1) * tk];
            let dr = &mut dp[i * tk..(i + 1) * tk];
            let dot: f64 = pr.iter().zip(dr.iter()).map(|(a, b)| (*a * *b).as_f64()).sum();
            let dot = F::of(dot);
            for (x, &pv) in dr.iter_mut().zip(pr) {
                *x = pv * (*x - dot);
            }
        }
        gemm(
            scale,
            View::new(&dp, tq, tk),
            View::cols_of(&c.k, tk, d, h * dh, dh),
            F::zero(),
            ViewMut::cols_of(&mut dq, tq, d, h * dh, dh),
        );
        gemm(
            scale,
            View::new(&dp, tq, tk).t(),
            View::cols_of(&c.q, tq, d, h * dh, dh),
            F::zero(),
            ViewMut::cols_of(&mut dk, tk, d, h * dh, dh),
        );
    }
    linalg::add_at_b(&mut g.tensors[idx.wq], &c.q_in, &dq, tq, d, d);
    linalg::add_at_b(&mut g.tensors[idx.wk], &c.kv_in, &dk, tk, d, d);
    linalg::add_at_b(&mut g.tensors[idx.wv], &c.kv_in, &dv, tk, d, d);
    let dq_in = linalg::matmul_bt(&dq, p.get(idx.wq), tq, d, d);
    let mut dkv_in = linalg::matmul_bt(&dk, p.get(idx.wk), tk, d, d);
    linalg::add_a_bt(&mut dkv_in, &dv, p.get(idx.wv), tk, d, d);
    (dq_in, dkv_in)
}

struct FfnCache<F> {
    x: Vec<F>,
    h: Vec<F>,
}

fn ffn_fwd<F: Scalar>(p: &ModelParams<F>, idx: FfnIdx, d: usize, f: usize, x: &[F]) -> (Vec<F>, FfnCache<F>) {
    let rows = x.len() / d;
    let mut h = linalg::matmul(x, p.get(idx.w1), rows, d, f);
    linalg::add_row_bias(&mut h, p.get(idx.b1));
    for v in h.iter_mut() {
        if *v < F::zero() {
            *v = F::zero();
        }
    }
    let mut out = linalg::matmul(&h, p.get(idx.w2), rows, f, d);
    linalg::add_row_bias(&mut out, p.get(idx.b2));
    (out, FfnCache { x: x.to_vec(), h })
}

fn ffn_bwd<F: Scalar>(
    p: &ModelParams<F>,
    idx: FfnIdx,
    d: usize,
    f: usize,
    c: &FfnCache<F>,
    dout: &[F],
    g: &mut ModelParams<F>,
) -> Vec<F> {
    let rows = dout.len() / d;
    linalg::add_at_b(&mut g.tensors[idx.w2], &c.h, dout, rows, f, d);
    linalg::add_col_sums(&mut g.tensors[idx.b2], dout, d);
    let mut dh = linalg::matmul_bt(dout, p.get(idx.w2), rows, d, f);
    for (x, &hv) in dh.iter_mut().zip(&c.h) {
        if hv <= F::zero() {
            *x = F::zero();
        }
    }
    linalg::add_at_b(&mut g.tensors[idx.w1], &c.x, &dh, rows, d, f);
    linalg::add_col_sums(&mut g.tensors[idx.b1], &dh, f);
    linalg::matmul_bt(&dh, p.get(idx.w1), rows, f, d)
}

/// Inverted dropout; returns the applied mask (already scaled).
fn dropout<F: Scalar>(x: &mut [F], rate: f64, rng: Option<&mut ChaCha8Rng>) -> Option<Vec<F>> {
    let rng = rng?;
    if rate <= 0.0 {
        return None;
    }
    let keep = F::of(1.0 / (1.0 - rate));
    let mask: Vec<F> = (0..x.len()).map(|_| if rng.random::<f64>() < rate { F::zero() } else { keep }).collect();
    for (v, m) in x.iter_mut().zip(&mask) {
        *v *= *m;
    }
    Some(mask)
}

fn apply_mask<F: Scalar>(dx: &[F], mask: &Option<Vec<F>>) -> Vec<F> {
    match mask {
        Some(m) => dx.iter().zip(m).map(|(a, b)| *a * *b).collect(),
        None => dx.to_vec(),
    }
}

fn norm<F: Scalar>(p: &ModelParams<F>, idx: NormIdx, d: usize, x: &[F]) -> (Vec<F>, NormCache<F>) {
    norm_fwd(x, d, p.get(idx.gain), p.get(idx.bias))
}

fn norm_back<F: Scalar>(
    p: &ModelParams<F>,
    idx: NormIdx,
    d: usize,
    c: &NormCache<F>,
    dy: &[F],
    g: &mut ModelParams<F>,
) -> Vec<F> {
    let (dgain, dbias) = two_mut(&mut g.tensors, idx.gain, idx.bias);
    norm_bwd(dy, c, d, p.get(idx.gain), dgain, dbias)
}

fn two_mut<T>(v: &mut [T], a: usize, b: usize) -> (&mut T, &mut T) {
    assert!(a != b);
    if a < b {
        let (l, r) = v.split_at_mut(b);
        (&mut l[a], &mut r[0])
    } else {
        let (l, r) = v.split_at_mut(a);
        (&mut r[0], &mut l[b])
    }
}

struct EncLayerCache<F> {
    ln1: NormCache<F>,
    attn: AttnCache<F>,
    drop1: Option<Vec<F>>,
    ln2: NormCache<F>,
    ffn: FfnCache<F>,
    drop2: Option<Vec<F>>,
}

struct DecLayerCache<F> {
    ln1: NormCache<F>,
    self_attn: AttnCache<F>,
    drop1: Option<Vec<F>>,
    ln2: NormCache<F>,
    cross: AttnCache<F>,
    drop2: Option<Vec<F>>,
    ln3: NormCache<F>,
    ffn: FfnCache<F>,
    drop3: Option<Vec<F>>,
}

/// Encoder states for one source, reusable across decoding steps.
#[derive(Debug, Clone)]
pub struct EncoderOutput<F> {
    pub states: Vec<F>,
    pub len: usize,
}

/// Everything the backward pass needs from one forward pass.
pub struct Tape<F> {
    src: Vec<u32>,
    tgt: Vec<u32>,
    enc_drop: Option<Vec<F>>,
    enc: Vec<EncLayerCache<F>>,
    dec_drop: Option<Vec<F>>,
    dec: Vec<DecLayerCache<F>>,
    final_ln: NormCache<F>,
    hidden: Vec<F>,
}

impl<F: Scalar> Tape<F> {
    /// Which hidden units of every feed-forward block were active, in layer
    /// order. Two passes with equal patterns lie on the same linear piece of
    /// every ReLU.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.enc
            .iter()
            .map(|c| &c.ffn.h)
            .chain(self.dec.iter().map(|c| &c.ffn.h))
            .flat_map(|h| h.iter().map(|&x| x > F::zero()))
            .collect()
    }
}

fn dims<F>(p: &ModelParams<F>) -> Dims {
    Dims { d: p.config.d_model, heads: p.config.n_heads, dh: p.config.d_model / p.config.n_heads }
}

/// Unpadded prefix of `source` after validation.
fn real_source<'a, F>(p: &ModelParams<F>, source: &'a [u32]) -> Result<&'a [u32], ModelError> {
    let v = p.config.vocab_size;
    if let Some(&id) = source.iter().find(|&&id| id as usize >= v) {
        return Err(ModelError::IdOutOfRange { id, vocab_size: v });
    }
    let len = source.iter().position(|&t| t == PAD).unwrap_or(source.len());
    if source[len..].iter().any(|&t| t != PAD) {
        return Err(ModelError::InteriorPad);
    }
    if len == 0 {
        return Err(ModelError::EmptySource);
    }
    if len > p.config.max_positions {
        return Err(ModelError::PositionOverflow { len, max: p.config.max_positions });
    }
    Ok(&source[..len])
}

fn check_target<F>(p: &ModelParams<F>, target_in: &[u32]) -> Result<(), ModelError> {
    let v = p.config.vocab_size;
    if target_in.first() != Some(&BOS) {
        return Err(ModelError::MissingBos);
    }
    if let Some(&id) = target_in.iter().find(|&&id| id as usize >= v) {
        return Err(ModelError::IdOutOfRange { id, vocab_size: v });
    }
    if target_in.len() > p.config.max_positions {
        return Err(ModelError::PositionOverflow { len: target_in.len(), max: p.config.max_positions });
    }
    Ok(())
}

fn embed<F: Scalar>(p: &ModelParams<F>, ids: &[u32], pos_idx: usize) -> Vec<F> {
    let d = p.config.d_model;
    let emb = p.get(p.layout.tok_emb);
    let pos = p.get(pos_idx);
    let mut x = vec![F::zero(); ids.len() * d];
    for (i, &id) in ids.iter().enumerate() {
        let row = &mut x[i * d..(i + 1) * d];
        let e = &emb[id as usize * d..(id as usize + 1) * d];
        let q = &pos[i * d..(i + 1) * d];
        for c in 0..d {
            row[c] = e[c] + q[c];
        }
    }
    x
}

fn encoder_fwd<F: Scalar>(
    p: &ModelParams<F>,
    src: &[u32],
    mut rng: Option<&mut ChaCha8Rng>,
) -> (Vec<F>, Option<Vec<F>>, Vec<EncLayerCache<F>>) {
    let dm = dims(p);
    let (d, f, rate) = (dm.d, p.config.d_ff, p.config.dropout);
    let mut x = embed(p, src, p.layout.enc_pos);
    let emb_drop = dropout(&mut x, rate, rng.as_deref_mut());
    let mut caches = Vec::with_capacity(p.layout.enc.len());
    for l in &p.layout.enc {
        let (n1, ln1) = norm(p, l.ln1, d, &x);
        let (mut a, attn) = attn_fwd(p, l.attn, &dm, &n1, &n1, false);
        let drop1 = dropout(&mut a, rate, rng.as_deref_mut());
        linalg::add_into(&mut x, &a);
        let (n2, ln2) = norm(p, l.ln2, d, &x);
        let (mut o, ffn) = ffn_fwd(p, l.ffn, d, f, &n2);
        let drop2 = dropout(&mut o, rate, rng.as_deref_mut());
        linalg::add_into(&mut x, &o);
        caches.push(EncLayerCache { ln1, attn, drop1, ln2, ffn, drop2 });
    }
    (x, emb_drop, caches)
}

#[allow(clippy::type_complexity)]
fn decoder_fwd<F: Scalar>(
    p: &ModelParams<F>,
    enc: &[F],
    tgt: &[u32],
    mut rng: Option<&mut ChaCha8Rng>,
) -> (Vec<F>, Option<Vec<F>>, Vec<DecLayerCache<F>>, NormCache<F>) {
    let dm = dims(p);
    let (d, f, rate) = (dm.d, p.config.d_ff, p.config.dropout);
    let mut y = embed(p, tgt, p.layout.dec_pos);
    let emb_drop = dropout(&mut y, rate, rng.as_deref_mut());
    let mut caches = Vec::with_capacity(p.layout.dec.len());
    for l in &p.layout.dec {
        let (n1, ln1) = norm(p, l.ln1, d, &y);
        let (mut a, self_attn) = attn_fwd(p, l.self_attn, &dm, &n1, &n1, true);
        let drop1 = dropout(&mut a, rate, rng.as_deref_mut());
        linalg::add_into(&mut y, &a);
        let (n2, ln2) = norm(p, l.ln2, d, &y);
        let (mut c, cross) = attn_fwd(p, l.cross_attn, &dm, &n2, enc, false);
        let drop2 = dropout(&mut c, rate, rng.as_deref_mut());
        linalg::add_into(&mut y, &c);
        let (n3, ln3) = norm(p, l.ln3, d, &y);
        let (mut o, ffn) = ffn_fwd(p, l.ffn, d, f, &n3);
        let drop3 = dropout(&mut o, rate, rng.as_deref_mut());
        linalg::add_into(&mut y, &o);
        caches.push(DecLayerCache { ln1, self_attn, drop1, ln2, cross, drop2, ln3, ffn, drop3 });
    }
    let (h, final_ln) = norm(p, p.layout.final_ln, d, &y);
    (h, emb_drop, caches, final_ln)
}

/// Run the encoder once for a source sequence.
pub fn encode<F: Scalar>(p: &ModelParams<F>, source: &[u32]) -> Result<EncoderOutput<F>, ModelError> {
    let src = real_source(p, source)?;
    let (states, _, _) = encoder_fwd(p, src, None);
    Ok(EncoderOutput { states, len: src.len() })
}

/// Logits for the position after the last token of `prefix` (which starts
/// with BOS), given precomputed encoder states.
pub fn next_token_logits<F: Scalar>(
    p: &ModelParams<F>,
    enc: &EncoderOutput<F>,
    prefix: &[u32],
) -> Result<Vec<F>, ModelError> {
    check_target(p, prefix)?;
    let d = p.config.d_model;
    let (h, _, _, _) = decoder_fwd(p, &enc.states, prefix, None);
    let last = &h[(prefix.len() - 1) * d..];
    Ok(linalg::matmul_bt(last, p.get(p.layout.tok_emb), 1, d, p.config.vocab_size))
}

/// Logits (`len(target_in) × vocab_size`, row-major) with dropout off.
pub fn forward<F: Scalar>(p: &ModelParams<F>, source: &[u32], target_in: &[u32]) -> Result<Vec<F>, ModelError> {
    forward_tape(p, source, target_in, None).map(|(logits, _)| logits)
}

/// Forward pass that keeps activations for [`backward`]. Dropout is active
/// only when `rng` is given.
pub fn forward_tape<F: Scalar>(
    p: &ModelParams<F>,
    source: &[u32],
    target_in: &[u32],
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<(Vec<F>, Tape<F>), ModelError> {
    let src = real_source(p, source)?;
    check_target(p, target_in)?;
    let d = p.config.d_model;
    let (enc_states, enc_drop, enc) = encoder_fwd(p, src, rng.as_deref_mut());
    let (hidden, dec_drop, dec, final_ln) = decoder_fwd(p, &enc_states, target_in, rng);
    let logits = linalg::matmul_bt(&hidden, p.get(p.layout.tok_emb), target_in.len(), d, p.config.vocab_size);
    let tape = Tape { src: src.to_vec(), tgt: target_in.to_vec(), enc_drop, enc, dec_drop, dec, final_ln, hidden };
    Ok((logits, tape))
}

fn embed_back<F: Scalar>(g: &mut ModelParams<F>, ids: &[u32], pos_idx: usize, dx: &[F], d: usize) {
    let tok = g.layout.tok_emb;
    for (i, &id) in ids.iter().enumerate() {
        let row = &dx[i * d..(i + 1) * d];
        linalg::add_into(&mut g.tensors[tok][id as usize * d..(id as usize + 1) * d], row);
        linalg::add_into(&mut g.tensors[pos_idx][i * d..(i + 1) * d], row);
    }
}

/// Accumulate into `g` the gradient of a loss whose derivative with respect
/// to the logits is `dlogits`.
pub fn backward<F: Scalar>(p: &ModelParams<F>, tape: &Tape<F>, dlogits: &[F], g: &mut ModelParams<F>) {
    let dm = dims(p);
    let (d, f, v) = (dm.d, p.config.d_ff, p.config.vocab_size);
    let t = tape.tgt.len();
    let s = tape.src.len();
    let layout = &p.layout;

    linalg::add_at_b(&mut g.tensors[layout.tok_emb], dlogits, &tape.hidden, t, v, d);
    let dh = linalg::matmul(dlogits, p.get(layout.tok_emb), t, v, d);
    let mut dy = norm_back(p, layout.final_ln, d, &tape.final_ln, &dh, g);

    let mut denc = vec![F::zero(); s * d];
    for (l, c) in layout.dec.iter().zip(&tape.dec).rev() {
        let df = apply_mask(&dy, &c.drop3);
        let dn3 = ffn_bwd(p, l.ffn, d, f, &c.ffn, &df, g);
        linalg::add_into(&mut dy, &norm_back(p, l.ln3, d, &c.ln3, &dn3, g));

        let dc = apply_mask(&dy, &c.drop2);
        let (dn2, de) = attn_bwd(p, l.cross_attn, &dm, &c.cross, &dc, g);
        linalg::add_into(&mut denc, &de);
        linalg::add_into(&mut dy, &norm_back(p, l.ln2, d, &c.ln2, &dn2, g));

        let da = apply_mask(&dy, &c.drop1);
        let (mut dn1, dkv) = attn_bwd(p, l.self_attn, &dm, &c.self_attn, &da, g);
        linalg::add_into(&mut dn1, &dkv);
        linalg::add_into(&mut dy, &norm_back(p, l.ln1, d, &c.ln1, &dn1, g));
    }
    let dy = apply_mask(&dy, &tape.dec_drop);
    embed_back(g, &tape.tgt, layout.dec_pos, &dy, d);

    let mut dx = denc;
    for (l, c) in layout.enc.iter().zip(&tape.enc).rev() {
        let df = apply_mask(&dx, &c.drop2);
        let dn2 = ffn_bwd(p, l.ffn, d, f, &c.ffn, &df, g);
        linalg::add_into(&mut dx, &norm_back(p, l.ln2, d, &c.ln2, &dn2, g));

        let da = apply_mask(&dx, &c.drop1);
        let (mut dn1, dkv) = attn_bwd(p, l.attn, &dm, &c.attn, &da, g);
        linalg::add_into(&mut dn1, &dkv);
        linalg::add_into(&mut dx, &norm_back(p, l.ln1, d, &c.ln1, &dn1, g));
    }
    let dx = apply_mask(&dx, &tape.enc_drop);
    embed_back(g, &tape.src, layout.enc_pos, &dx, d);
}
