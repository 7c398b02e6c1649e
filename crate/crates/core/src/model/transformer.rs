//! Decoder-only transformer with a hand-written backward pass.
//!
//! Pre-norm blocks: `x += attn(ln1(x)); x += mlp(ln2(x))`, learned positional
//! embeddings, causal multi-head attention, tanh-approximated GELU, final
//! layer norm and an untied output projection. [`forward`] records every
//! activation the backward pass needs on a [`Tape`]; [`backward`] takes the
//! gradient of a scalar loss with respect to the logits and accumulates exact
//! parameter gradients.

use super::params::{Gradients, LayerSlots, ModelParams};
use super::scalar::Scalar;
use super::vocab::{Token, VOCAB_SIZE};
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

struct NormTape<F> {
    xhat: Vec<F>,
    rstd: Vec<F>,
}

struct LayerTape<F> {
    ln1: NormTape<F>,
    ln1_out: Vec<F>,
    qkv: Vec<F>,
    att: Vec<F>,
    att_out: Vec<F>,
    ln2: NormTape<F>,
    ln2_out: Vec<F>,
    fc_pre: Vec<F>,
    fc_act: Vec<F>,
}

/// Activations recorded by one forward pass over one token sequence.
pub struct Tape<F: Scalar> {
    n_params: usize,
    tokens: Vec<Token>,
    layers: Vec<LayerTape<F>>,
    lnf: NormTape<F>,
    lnf_out: Vec<F>,
    log_probs: Vec<F>,
}

impl<F: Scalar> Tape<F> {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    /// Log-probabilities of the next token after position `t`.
    pub fn log_probs_at(&self, t: usize) -> &[F] {
        &self.log_probs[t * VOCAB_SIZE..(t + 1) * VOCAB_SIZE]
    }

    pub fn log_probs(&self) -> &[F] {
        &self.log_probs
    }
}

/// `out[m×n] = x[m×k] · w[k×n] + b[n]`
fn linear<F: Scalar>(x: &[F], w: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut out = Vec::with_capacity(m * n);
    for _ in 0..m {
        out.extend_from_slice(b);
    }
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let a = x[i * k + p];
            if a == F::zero() {
                continue;
            }
            let wrow = &w[p * n..(p + 1) * n];
            for (o, &wv) in row.iter_mut().zip(wrow) {
                *o += a * wv;
            }
        }
    }
    out
}

/// Backward of [`linear`]: returns `dx` and accumulates into `dw`, `db`.
#[allow(clippy::too_many_arguments)]
fn linear_backward<F: Scalar>(
    x: &[F],
    w: &[F],
    dout: &[F],
    m: usize,
    k: usize,
    n: usize,
    dw: &mut [F],
    db: &mut [F],
) -> Vec<F> {
    let mut dx = vec![F::zero(); m * k];
    for i in 0..m {
        let drow = &dout[i * n..(i + 1) * n];
        if drow.iter().all(|&v| v == F::zero()) {
            continue;
        }
        for (d, &g) in db.iter_mut().zip(drow) {
            *d += g;
        }
        for p in 0..k {
            let wrow = &w[p * n..(p + 1) * n];
            let mut acc = F::zero();
            for (&wv, &g) in wrow.iter().zip(drow) {
                acc += wv * g;
            }
            dx[i * k + p] = acc;
            let a = x[i * k + p];
            if a != F::zero() {
                let dwrow = &mut dw[p * n..(p + 1) * n];
                for (d, &g) in dwrow.iter_mut().zip(drow) {
                    *d += a * g;
                }
            }
        }
    }
    dx
}

fn layer_norm<F: Scalar>(x: &[F], g: &[F], b: &[F], t: usize, d: usize) -> (Vec<F>, NormTape<F>) {
    let mut out = vec![F::zero(); t * d];
    let mut xhat = vec![F::zero(); t * d];
    let mut rstd = vec![F::zero(); t];
    let dn = F::lit(d as f64);
    let eps = F::lit(LN_EPS);
    for i in 0..t {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().copied().sum::<F>() / dn;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / dn;
        let r = F::one() / (var + eps).sqrt();
        rstd[i] = r;
        for j in 0..d {
            let h = (row[j] - mean) * r;
            xhat[i * d + j] = h;
            out[i * d + j] = g[j] * h + b[j];
        }
    }
    (out, NormTape { xhat, rstd })
}

/// Backward of [`layer_norm`]; adds the input gradient into `dx`.
#[allow(clippy::too_many_arguments)]
fn layer_norm_backward<F: Scalar>(
    tape: &NormTape<F>,
    g: &[F],
    dout: &[F],
    t: usize,
    d: usize,
    dg: &mut [F],
    db: &mut [F],
    dx: &mut [F],
) {
    let dn = F::lit(d as f64);
    let mut dxhat = vec![F::zero(); d];
    for i in 0..t {
        let drow = &dout[i * d..(i + 1) * d];
        let xh = &tape.xhat[i * d..(i + 1) * d];
        let mut mean_dxhat = F::zero();
        let mut mean_dxhat_xhat = F::zero();
        for j in 0..d {
            dg[j] += drow[j] * xh[j];
            db[j] += drow[j];
            dxhat[j] = drow[j] * g[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xh[j];
        }
        mean_dxhat /= dn;
        mean_dxhat_xhat /= dn;
        let r = tape.rstd[i];
        for j in 0..d {
            dx[i * d + j] += r * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
}

fn gelu<F: Scalar>(x: F) -> F {
    let c = F::lit(GELU_C);
    let k = F::lit(GELU_K);
    let half = F::lit(0.5);
    half * x * (F::one() + (c * (x + k * x * x * x)).tanh())
}

fn gelu_grad<F: Scalar>(x: F) -> F {
    let c = F::lit(GELU_C);
    let k = F::lit(GELU_K);
    let half = F::lit(0.5);
    let th = (c * (x + k * x * x * x)).tanh();
    half * (F::one() + th)
        + half * x * (F::one() - th * th) * c * (F::one() + F::lit(3.0) * k * x * x)
}

struct Dims {
    t: usize,
    d: usize,
    h: usize,
    heads: usize,
    hd: usize,
}

fn attention<F: Scalar>(qkv: &[F], dims: &Dims) -> (Vec<F>, Vec<F>) {
    let Dims {
        t, d, heads, hd, ..
    } = *dims;
    let scale = F::lit(1.0 / (hd as f64).sqrt());
    let mut att = vec![F::zero(); heads * t * t];
    let mut out = vec![F::zero(); t * d];
    let stride = 3 * d;
    for head in 0..heads {
        let qo = head * hd;
        let ko = d + head * hd;
        let vo = 2 * d + head * hd;
        for i in 0..t {
            let q = &qkv[i * stride + qo..i * stride + qo + hd];
            let a = &mut att[(head * t + i) * t..(head * t + i + 1) * t];
            let mut max = F::neg_infinity();
            for j in 0..=i {
                let k = &qkv[j * stride + ko..j * stride + ko + hd];
                let s = q.iter().zip(k).map(|(&x, &y)| x * y).sum::<F>() * scale;
                a[j] = s;
                if s > max {
                    max = s;
                }
            }
            let mut z = F::zero();
            for aj in a.iter_mut().take(i + 1) {
                *aj = (*aj - max).exp();
                z += *aj;
            }
            let o = &mut out[i * d + head * hd..i * d + (head + 1) * hd];
            for j in 0..=i {
                a[j] /= z;
                let v = &qkv[j * stride + vo..j * stride + vo + hd];
                for (ov, &vv) in o.iter_mut().zip(v) {
                    *ov += a[j] * vv;
                }
            }
        }
    }
    (att, out)
}

fn attention_backward<F: Scalar>(qkv: &[F], att: &[F], dout: &[F], dims: &Dims) -> Vec<F> {
    let Dims {
        t, d, heads, hd, ..
    } = *dims;
    let scale = F::lit(1.0 / (hd as f64).sqrt());
    let stride = 3 * d;
    let mut dqkv = vec![F::zero(); t * stride];
    let mut da = vec![F::zero(); t];
    for head in 0..heads {
        let qo = head * hd;
        let ko = d + head * hd;
        let vo = 2 * d + head * hd;
        for i in 0..t {
            let a = &att[(head * t + i) * t..(head * t + i + 1) * t];
            let go = &dout[i * d + head * hd..i * d + (head + 1) * hd];
            let mut dot = F::zero();
            for j in 0..=i {
                let v = &qkv[j * stride + vo..j * stride + vo + hd];
                da[j] = go.iter().zip(v).map(|(&x, &y)| x * y).sum::<F>();
                dot += a[j] * da[j];
                let dv = &mut dqkv[j * stride + vo..j * stride + vo + hd];
                for (x, &g) in dv.iter_mut().zip(go) {
                    *x += a[j] * g;
                }
            }
            for j in 0..=i {
                let ds = a[j] * (da[j] - dot) * scale;
                if ds == F::zero() {
                    continue;
                }
                for c in 0..hd {
                    let qc = qkv[i * stride + qo + c];
                    let kc = qkv[j * stride + ko + c];
                    dqkv[i * stride + qo + c] += ds * kc;
                    dqkv[j * stride + ko + c] += ds * qc;
                }
            }
        }
    }
    dqkv
}

fn check_tokens(params_ctx: usize, tokens: &[Token]) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::contract("forward", "empty token sequence"));
    }
    if tokens.len() > params_ctx {
        return Err(Error::Length {
            len: tokens.len(),
            context: params_ctx,
        });
    }
    if let Some(t) = tokens.iter().find(|&&t| t as usize >= VOCAB_SIZE) {
        return Err(Error::Data(format!("token id {t} outside vocabulary")));
    }
    Ok(())
}

/// Run the model over `tokens`, recording activations for [`backward`].
pub fn forward<F: Scalar>(params: &ModelParams<F>, tokens: &[Token]) -> Result<Tape<F>> {
    let cfg = params.config();
    check_tokens(cfg.context_len, tokens)?;
    let w = params.flat();
    let s = &params.slots;
    let dims = Dims {
        t: tokens.len(),
        d: cfg.embed_dim,
        h: cfg.ffn_dim(),
        heads: cfg.n_heads,
        hd: cfg.head_dim(),
    };
    let (t, d, h) = (dims.t, dims.d, dims.h);

    let tok_emb = &w[s.tok_emb.clone()];
    let pos_emb = &w[s.pos_emb.clone()];
    let mut x = vec![F::zero(); t * d];
    for (i, &tok) in tokens.iter().enumerate() {
        let te = &tok_emb[tok as usize * d..(tok as usize + 1) * d];
        let pe = &pos_emb[i * d..(i + 1) * d];
        for j in 0..d {
            x[i * d + j] = te[j] + pe[j];
        }
    }

    let mut layers = Vec::with_capacity(s.layers.len());
    for ls in &s.layers {
        let (ln1_out, ln1) = layer_norm(&x, &w[ls.ln1_g.clone()], &w[ls.ln1_b.clone()], t, d);
        let qkv = linear(
            &ln1_out,
            &w[ls.w_qkv.clone()],
            &w[ls.b_qkv.clone()],
            t,
            d,
            3 * d,
        );
        let (att, att_out) = attention(&qkv, &dims);
        let proj = linear(&att_out, &w[ls.w_o.clone()], &w[ls.b_o.clone()], t, d, d);
        for (xv, p) in x.iter_mut().zip(&proj) {
            *xv += *p;
        }
        let (ln2_out, ln2) = layer_norm(&x, &w[ls.ln2_g.clone()], &w[ls.ln2_b.clone()], t, d);
        let fc_pre = linear(&ln2_out, &w[ls.w_fc.clone()], &w[ls.b_fc.clone()], t, d, h);
        let fc_act: Vec<F> = fc_pre.iter().map(|&v| gelu(v)).collect();
        let mlp = linear(
            &fc_act,
            &w[ls.w_proj.clone()],
            &w[ls.b_proj.clone()],
            t,
            h,
            d,
        );
        for (xv, p) in x.iter_mut().zip(&mlp) {
            *xv += *p;
        }
        layers.push(LayerTape {
            ln1,
            ln1_out,
            qkv,
            att,
            att_out,
            ln2,
            ln2_out,
            fc_pre,
            fc_act,
        });
    }

    let (lnf_out, lnf) = layer_norm(&x, &w[s.lnf_g.clone()], &w[s.lnf_b.clone()], t, d);
    let mut log_probs = linear(
        &lnf_out,
        &w[s.w_out.clone()],
        &w[s.b_out.clone()],
        t,
        d,
        VOCAB_SIZE,
    );
    for row in log_probs.chunks_mut(VOCAB_SIZE) {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<F>().ln();
        row.iter_mut().for_each(|v| *v -= lse);
    }
    if log_probs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite logits in forward pass".into()));
    }

    Ok(Tape {
        n_params: params.num_params(),
        tokens: tokens.to_vec(),
        layers,
        lnf,
        lnf_out,
        log_probs,
    })
}

/// Accumulate `dL/dθ` into `grads`, given `dlogits = dL/d(logits)` laid out
/// as `len × VOCAB_SIZE`.
pub fn backward<F: Scalar>(
    params: &ModelParams<F>,
    tape: &Tape<F>,
    dlogits: &[F],
    grads: &mut Gradients<F>,
) -> Result<()> {
    if !params.same_layout(tape.n_params) || grads.len() != params.num_params() {
        return Err(Error::State(
            "backward called with a tape or gradient buffer from a different model".into(),
        ));
    }
    let cfg = params.config();
    let dims = Dims {
        t: tape.len(),
        d: cfg.embed_dim,
        h: cfg.ffn_dim(),
        heads: cfg.n_heads,
        hd: cfg.head_dim(),
    };
    let (t, d, h) = (dims.t, dims.d, dims.h);
    if dlogits.len() != t * VOCAB_SIZE {
        return Err(Error::State(format!(
            "dlogits has {} entries, tape needs {}",
            dlogits.len(),
            t * VOCAB_SIZE
        )));
    }
    let w = params.flat();
    let s = &params.slots;
    let g = grads.flat_mut();

    let mut db_out = vec![F::zero(); VOCAB_SIZE];
    let dlnf_out = linear_backward(
        &tape.lnf_out,
        &w[s.w_out.clone()],
        dlogits,
        t,
        d,
        VOCAB_SIZE,
        &mut g[s.w_out.clone()],
        &mut db_out,
    );
    add_into(&mut g[s.b_out.clone()], &db_out);

    let mut dx = vec![F::zero(); t * d];
    let (mut dgain, mut dbias) = (vec![F::zero(); d], vec![F::zero(); d]);
    layer_norm_backward(
        &tape.lnf,
        &w[s.lnf_g.clone()],
        &dlnf_out,
        t,
        d,
        &mut dgain,
        &mut dbias,
        &mut dx,
    );
    add_into(&mut g[s.lnf_g.clone()], &dgain);
    add_into(&mut g[s.lnf_b.clone()], &dbias);

    for (ls, lt) in s.layers.iter().zip(&tape.layers).rev() {
        layer_backward(w, g, ls, lt, &dims, &mut dx, h);
    }

    for (i, &tok) in tape.tokens.iter().enumerate() {
        let row = &dx[i * d..(i + 1) * d];
        let te = s.tok_emb.start + tok as usize * d;
        add_into(&mut g[te..te + d], row);
        let pe = s.pos_emb.start + i * d;
        add_into(&mut g[pe..pe + d], row);
    }
    Ok(())
}

fn add_into<F: Scalar>(dst: &mut [F], src: &[F]) {
    for (a, &b) in dst.iter_mut().zip(src) {
        *a += b;
    }
}

fn layer_backward<F: Scalar>(
    w: &[F],
    g: &mut [F],
    ls: &LayerSlots,
    lt: &LayerTape<F>,
    dims: &Dims,
    dx: &mut [F],
    h: usize,
) {
    let (t, d) = (dims.t, dims.d);

    // MLP branch
    let mut db = vec![F::zero(); d];
    let dfc_act = linear_backward(
        &lt.fc_act,
        &w[ls.w_proj.clone()],
        dx,
        t,
        h,
        d,
        &mut g[ls.w_proj.clone()],
        &mut db,
    );
    add_into(&mut g[ls.b_proj.clone()], &db);
    let dfc_pre: Vec<F> = dfc_act
        .iter()
        .zip(&lt.fc_pre)
        .map(|(&dg, &x)| dg * gelu_grad(x))
        .collect();
    let mut db = vec![F::zero(); h];
    let dln2 = linear_backward(
        &lt.ln2_out,
        &w[ls.w_fc.clone()],
        &dfc_pre,
        t,
        d,
        h,
        &mut g[ls.w_fc.clone()],
        &mut db,
    );
    add_into(&mut g[ls.b_fc.clone()], &db);
    let (mut dgain, mut dbias) = (vec![F::zero(); d], vec![F::zero(); d]);
    layer_norm_backward(
        &lt.ln2,
        &w[ls.ln2_g.clone()],
        &dln2,
        t,
        d,
        &mut dgain,
        &mut dbias,
        dx,
    );
    add_into(&mut g[ls.ln2_g.clone()], &dgain);
    add_into(&mut g[ls.ln2_b.clone()], &dbias);

    // attention branch
    let mut db = vec![F::zero(); d];
    let datt_out = linear_backward(
        &lt.att_out,
        &w[ls.w_o.clone()],
        dx,
        t,
        d,
        d,
        &mut g[ls.w_o.clone()],
        &mut db,
    );
    add_into(&mut g[ls.b_o.clone()], &db);
    let dqkv = attention_backward(&lt.qkv, &lt.att, &datt_out, dims);
    let mut db = vec![F::zero(); 3 * d];
    let dln1 = linear_backward(
        &lt.ln1_out,
        &w[ls.w_qkv.clone()],
        &dqkv,
        t,
        d,
        3 * d,
        &mut g[ls.w_qkv.clone()],
        &mut db,
    );
    add_into(&mut g[ls.b_qkv.clone()], &db);
    let (mut dgain, mut dbias) = (vec![F::zero(); d], vec![F::zero(); d]);
    layer_norm_backward(
        &lt.ln1,
        &w[ls.ln1_g.clone()],
        &dln1,
        t,
        d,
        &mut dgain,
        &mut dbias,
        dx,
    );
    add_into(&mut g[ls.ln1_g.clone()], &dgain);
    add_into(&mut g[ls.ln1_b.clone()], &dbias);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::ModelConfig;

    fn tiny() -> ModelParams<f64> {
        ModelParams::init(&ModelConfig::tiny(11)).unwrap()
    }

    /// Loss = Σ_t Σ_v c[t,v]·log_probs[t,v] for fixed random c, so that
    /// dL/dlogits[t,v] = c[t,v] − p[t,v]·Σ_v' c[t,v'].
    fn probe_loss(p: &ModelParams<f64>, tokens: &[Token], coef: &[f64]) -> f64 {
        let tape = forward(p, tokens).unwrap();
        tape.log_probs().iter().zip(coef).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn backward_matches_central_differences() {
        let mut p = tiny();
        let tokens: Vec<Token> = vec![257, 72, 105, 33, 10, 72, 258];
        let t = tokens.len();
        let coef: Vec<f64> = (0..t * VOCAB_SIZE)
            .map(|i| ((i * 7919 % 1000) as f64 / 1000.0 - 0.5) * 0.1)
            .collect();
        let tape = forward(&p, &tokens).unwrap();
        let mut dlogits = vec![0.0; t * VOCAB_SIZE];
        for r in 0..t {
            let lp = tape.log_probs_at(r);
            let c = &coef[r * VOCAB_SIZE..(r + 1) * VOCAB_SIZE];
            let csum: f64 = c.iter().sum();
            for v in 0..VOCAB_SIZE {
                dlogits[r * VOCAB_SIZE + v] = c[v] - lp[v].exp() * csum;
            }
        }
        let mut grads = Gradients::zeros_like(&p);
        backward(&p, &tape, &dlogits, &mut grads).unwrap();

        let h = 1e-5;
        let mut max_err: f64 = 0.0;
        let mut num = Vec::new();
        for i in 0..p.num_params() {
            let orig = p.flat()[i];
            p.flat_mut()[i] = orig + h;
            let up = probe_loss(&p, &tokens, &coef);
            p.flat_mut()[i] = orig - h;
            let down = probe_loss(&p, &tokens, &coef);
            p.flat_mut()[i] = orig;
            num.push((up - down) / (2.0 * h));
        }
        let diff: f64 = num
            .iter()
            .zip(grads.flat())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let scale = grads.l2_norm().max(1e-12);
        for (a, b) in num.iter().zip(grads.flat()) {
            max_err = max_err.max((a - b).abs());
        }
        assert!(diff / scale < 1e-6, "relative error {}", diff / scale);
        assert!(max_err < 1e-7, "max abs error {max_err}");
    }

    #[test]
    fn forward_rejects_bad_sequences() {
        let p = tiny();
        assert!(matches!(forward(&p, &[]), Err(Error::Contract { .. })));
        let long = vec![65; p.config().context_len + 1];
        assert!(matches!(forward(&p, &long), Err(Error::Length { .. })));
        assert!(forward(&p, &[300]).is_err());
    }

    #[test]
    fn backward_rejects_foreign_tape() {
        let p = tiny();
        let other = ModelParams::<f64>::init(&ModelConfig {
            embed_dim: 16,
            ..ModelConfig::tiny(1)
        })
        .unwrap();
        let tape = forward(&other, &[257, 65]).unwrap();
        let mut grads = Gradients::zeros_like(&p);
        let d = vec![0.0; 2 * VOCAB_SIZE];
        assert!(matches!(
            backward(&p, &tape, &d, &mut grads),
            Err(Error::State(_))
        ));
    }
}
