//! Forward and reverse-mode passes of the causal transformer.
//!
//! Each sequence of a batch is processed independently. Attention is causal,
//! and PAD keys are masked out, so a position's outputs depend only on the
//! non-PAD tokens at or before it.

use rand::Rng;

use super::params::{Block, ModelParams};
use super::ModelError;
use crate::Scalar;

const LN_EPS: f64 = 1e-5;

type NoRng = rand_xoshiro::SplitMix64;

/// Rectangular batch of token ids. Shorter rows are right-padded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenBatch {
    ids: Vec<u32>,
    batch: usize,
    seq_len: usize,
    pad: Option<u32>,
}

impl TokenBatch {
    /// Pads `rows` to the longest one with `pad`. Ragged rows without a pad
    /// id are rejected.
    pub fn new(rows: &[Vec<u32>], pad: Option<u32>) -> Result<Self, ModelError> {
        if rows.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let seq_len = rows.iter().map(Vec::len).max().unwrap_or(0);
        if seq_len == 0 {
            return Err(ModelError::EmptyBatch);
        }
        let mut ids = Vec::with_capacity(rows.len() * seq_len);
        for row in rows {
            if row.len() < seq_len && pad.is_none() {
                return Err(ModelError::ShapeMismatch("ragged batch needs a pad id".into()));
            }
            ids.extend_from_slice(row);
            ids.extend(std::iter::repeat_n(pad.unwrap_or(0), seq_len - row.len()));
        }
        Ok(Self {
            ids,
            batch: rows.len(),
            seq_len,
            pad,
        })
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn pad(&self) -> Option<u32> {
        self.pad
    }

    pub fn row(&self, b: usize) -> &[u32] {
        &self.ids[b * self.seq_len..(b + 1) * self.seq_len]
    }

    pub fn is_pad(&self, id: u32) -> bool {
        self.pad == Some(id)
    }

    /// Number of non-PAD tokens in row `b`.
    pub fn row_len(&self, b: usize) -> usize {
        self.row(b).iter().filter(|&&id| !self.is_pad(id)).count()
    }

    /// Next-token targets, `None` for the final position and wherever the
    /// input or the next token is PAD.
    pub fn next_token_targets(&self) -> Vec<Option<u32>> {
        let mut out = Vec::with_capacity(self.ids.len());
        for b in 0..self.batch {
            let row = self.row(b);
            for t in 0..self.seq_len {
                let target = row
                    .get(t + 1)
                    .copied()
                    .filter(|&next| !self.is_pad(row[t]) && !self.is_pad(next));
                out.push(target);
            }
        }
        out
    }
}

/// Final hidden states (after the last norm) and output logits.
#[derive(Debug, Clone)]
pub struct ForwardOutput<F> {
    pub batch: usize,
    pub seq_len: usize,
    pub embed_dim: usize,
    pub vocab_size: usize,
    /// `batch × seq_len × embed_dim`, row-major.
    pub hidden: Vec<F>,
    /// `batch × seq_len × vocab_size`, row-major.
    pub logits: Vec<F>,
}

fn check_batch<F: Scalar>(params: &ModelParams<F>, batch: &TokenBatch) -> Result<(), ModelError> {
    let c = &params.config;
    if batch.seq_len > c.context_len {
        return Err(ModelError::SequenceTooLong {
            len: batch.seq_len,
            max: c.context_len,
        });
    }
    if let Some(&id) = batch.ids.iter().find(|&&id| id as usize >= c.vocab_size) {
        return Err(ModelError::InvalidToken {
            id,
            vocab: c.vocab_size,
        });
    }
    Ok(())
}

/// Runs the model on every row and returns hidden states and logits.
pub fn forward<F: Scalar>(params: &ModelParams<F>, batch: &TokenBatch) -> Result<ForwardOutput<F>, ModelError> {
    check_batch(params, batch)?;
    let c = &params.config;
    let (t_len, d, v) = (batch.seq_len, c.embed_dim, c.vocab_size);
    let mut hidden = Vec::with_capacity(batch.batch * t_len * d);
    let mut logits = vec![F::zero(); batch.batch * t_len * v];
    for b in 0..batch.batch {
        let trace = run_sequence::<F, NoRng>(params, batch.row(b), batch.pad, None);
        matmul_bt(
            &trace.hidden,
            &params.token_embedding,
            &mut logits[b * t_len * v..(b + 1) * t_len * v],
            t_len,
            d,
            v,
        );
        hidden.extend_from_slice(&trace.hidden);
    }
    Ok(ForwardOutput {
        batch: batch.batch,
        seq_len: t_len,
        embed_dim: d,
        vocab_size: v,
        hidden,
        logits,
    })
}

/// Final hidden states only; skips the output head.
pub fn hidden_states<F: Scalar>(params: &ModelParams<F>, batch: &TokenBatch) -> Result<Vec<F>, ModelError> {
    check_batch(params, batch)?;
    let mut hidden = Vec::with_capacity(batch.batch * batch.seq_len * params.config.embed_dim);
    for b in 0..batch.batch {
        hidden.extend(run_sequence::<F, NoRng>(params, batch.row(b), batch.pad, None).hidden);
    }
    Ok(hidden)
}

/// Mean negative log-likelihood of `targets` under `logits`
/// (`targets.len() × vocab` entries). `None` targets are ignored.
pub fn loss<F: Scalar>(logits: &[F], vocab: usize, targets: &[Option<u32>]) -> Result<f64, ModelError> {
    if vocab == 0 || logits.len() != targets.len() * vocab {
        return Err(ModelError::ShapeMismatch(format!(
            "{} logits for {} targets over vocabulary {vocab}",
            logits.len(),
            targets.len()
        )));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (row, target) in logits.chunks_exact(vocab).zip(targets) {
        let Some(target) = *target else { continue };
        if target as usize >= vocab {
            return Err(ModelError::InvalidToken { id: target, vocab });
        }
        total += log_sum_exp(row) - row[target as usize].f64();
        count += 1;
    }
    if count == 0 {
        return Err(ModelError::EmptyBatch);
    }
    Ok(total / count as f64)
}

fn log_sum_exp<F: Scalar>(row: &[F]) -> f64 {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x.f64()));
    max + row.iter().map(|&x| (x.f64() - max).exp()).sum::<f64>().ln()
}

/// Row-wise softmax in place.
pub fn softmax_in_place<F: Scalar>(row: &mut [F]) {
    let max = row.iter().fold(F::neg_infinity(), |m, &x| m.max(x));
    let mut sum = F::zero();
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

/// Loss and exact gradients over the batch's next-token targets.
pub fn gradient<F: Scalar>(params: &ModelParams<F>, batch: &TokenBatch) -> Result<(f64, ModelParams<F>), ModelError> {
    gradient_impl::<F, NoRng>(params, batch, None)
}

/// Like [`gradient`] but with inverted dropout drawn from `rng`.
pub(crate) fn gradient_with_dropout<F: Scalar, R: Rng>(
    params: &ModelParams<F>,
    batch: &TokenBatch,
    rate: f64,
    rng: &mut R,
) -> Result<(f64, ModelParams<F>), ModelError> {
    if rate > 0.0 {
        gradient_impl(params, batch, Some((rate, rng)))
    } else {
        gradient_impl::<F, R>(params, batch, None)
    }
}

fn gradient_impl<F: Scalar, R: Rng>(
    params: &ModelParams<F>,
    batch: &TokenBatch,
    mut dropout: Option<(f64, &mut R)>,
) -> Result<(f64, ModelParams<F>), ModelError> {
    check_batch(params, batch)?;
    let targets = batch.next_token_targets();
    let n_targets = targets.iter().filter(|t| t.is_some()).count();
    if n_targets == 0 {
        return Err(ModelError::EmptyBatch);
    }
    let c = &params.config;
    let (t_len, d, v) = (batch.seq_len, c.embed_dim, c.vocab_size);
    let mut grads = ModelParams::<F>::zeros(*c)?;
    let inv_n = 1.0 / n_targets as f64;
    let mut total = 0.0;
    let mut logits = vec![F::zero(); t_len * v];
    for b in 0..batch.batch {
        let row_targets = &targets[b * t_len..(b + 1) * t_len];
        if row_targets.iter().all(Option::is_none) {
            continue;
        }
        let drop = dropout.as_mut().map(|(rate, rng)| (*rate, &mut **rng));
        let trace = run_sequence(params, batch.row(b), batch.pad, drop);
        matmul_bt(&trace.hidden, &params.token_embedding, &mut logits, t_len, d, v);
        // Turn logits into dL/dlogits in place.
        for (row, target) in logits.chunks_exact_mut(v).zip(row_targets) {
            match target {
                Some(target) => {
                    total += log_sum_exp(row) - row[*target as usize].f64();
                    softmax_in_place(row);
                    row[*target as usize] -= F::one();
                    let scale = F::of(inv_n);
                    row.iter_mut().for_each(|x| *x *= scale);
                }
                None => row.fill(F::zero()),
            }
        }
        backward_sequence(params, &trace, &logits, &mut grads);
    }
    Ok((total * inv_n, grads))
}

/// Greedy decoding: appends argmax tokens until `eos`, `max_tokens` new
/// tokens, or the context is full.
pub fn generate<F: Scalar>(
    params: &ModelParams<F>,
    prompt: &[u32],
    max_tokens: usize,
    eos: Option<u32>,
) -> Result<Vec<u32>, ModelError> {
    let c = &params.config;
    if prompt.len() >= c.context_len {
        return Err(ModelError::SequenceTooLong {
            len: prompt.len(),
            max: c.context_len - 1,
        });
    }
    let mut ids = prompt.to_vec();
    if ids.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    for _ in 0..max_tokens {
        if ids.len() >= c.context_len {
            break;
        }
        let batch = TokenBatch::new(std::slice::from_ref(&ids), None)?;
        check_batch(params, &batch)?;
        let trace = run_sequence::<F, NoRng>(params, &ids, None, None);
        let d = c.embed_dim;
        let last = &trace.hidden[(ids.len() - 1) * d..ids.len() * d];
        let mut best = (0u32, F::neg_infinity());
        for tok in 0..c.vocab_size {
            let score = dot(last, &params.token_embedding[tok * d..(tok + 1) * d]);
            if score > best.1 {
                best = (tok as u32, score);
            }
        }
        ids.push(best.0);
        if Some(best.0) == eos {
            break;
        }
    }
    Ok(ids)
}

struct NormCache<F> {
    xhat: Vec<F>,
    rstd: Vec<F>,
}

struct LayerTrace<F> {
    ln1: NormCache<F>,
    a: Vec<F>,
    qkv: Vec<F>,
    /// heads × T × T attention probabilities.
    probs: Vec<F>,
    attn: Vec<F>,
    drop1: Option<Vec<F>>,
    ln2: NormCache<F>,
    m: Vec<F>,
    fc_pre: Vec<F>,
    fc_act: Vec<F>,
    drop2: Option<Vec<F>>,
}

struct SequenceTrace<F> {
    ids: Vec<u32>,
    drop0: Option<Vec<F>>,
    layers: Vec<LayerTrace<F>>,
    final_norm: NormCache<F>,
    hidden: Vec<F>,
}

#[inline]
fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |s, (&x, &y)| s + x * y)
}

/// out(m×n) = a(m×k) · b(k×n) + bias.
fn matmul_bias<F: Scalar>(a: &[F], b: &[F], bias: &[F], out: &mut [F], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let o = &mut out[i * n..(i + 1) * n];
        o.copy_from_slice(bias);
        for p in 0..k {
            let aip = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (oj, &bj) in o.iter_mut().zip(brow) {
                *oj += aip * bj;
            }
        }
    }
}

/// out(m×n) = a(m×k) · b(n×k)ᵀ.
fn matmul_bt<F: Scalar>(a: &[F], b: &[F], out: &mut [F], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            out[i * n + j] = dot(arow, &b[j * k..(j + 1) * k]);
        }
    }
}

/// Backward of `y = x·W + b` for x (m×k), W (k×n): accumulates dW and db and
/// writes dx.
#[allow(clippy::too_many_arguments)]
fn linear_backward<F: Scalar>(
    x: &[F],
    w: &[F],
    dy: &[F],
    dw: &mut [F],
    db: &mut [F],
    dx: &mut [F],
    m: usize,
    k: usize,
    n: usize,
) {
    for i in 0..m {
        let dyi = &dy[i * n..(i + 1) * n];
        for (dbj, &g) in db.iter_mut().zip(dyi) {
            *dbj += g;
        }
        for p in 0..k {
            let xip = x[i * k + p];
            let dwrow = &mut dw[p * n..(p + 1) * n];
            for (dwj, &g) in dwrow.iter_mut().zip(dyi) {
                *dwj += xip * g;
            }
            dx[i * k + p] = dot(&w[p * n..(p + 1) * n], dyi);
        }
    }
}

fn layer_norm<F: Scalar>(x: &[F], gain: &[F], bias: &[F], t_len: usize, d: usize) -> (Vec<F>, NormCache<F>) {
    let mut y = vec![F::zero(); t_len * d];
    let mut xhat = vec![F::zero(); t_len * d];
    let mut rstd = vec![F::zero(); t_len];
    let dn = F::of_usize(d);
    for t in 0..t_len {
        let row = &x[t * d..(t + 1) * d];
        let mean = row.iter().copied().sum::<F>() / dn;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / dn;
        let r = F::one() / (var + F::of(LN_EPS)).sqrt();
        rstd[t] = r;
        for j in 0..d {
            let h = (row[j] - mean) * r;
            xhat[t * d + j] = h;
            y[t * d + j] = h * gain[j] + bias[j];
        }
    }
    (y, NormCache { xhat, rstd })
}

/// Accumulates gain/bias gradients and adds dL/dx into `dx`.
#[allow(clippy::too_many_arguments)]
fn layer_norm_backward<F: Scalar>(
    cache: &NormCache<F>,
    gain: &[F],
    dy: &[F],
    dgain: &mut [F],
    dbias: &mut [F],
    dx: &mut [F],
    t_len: usize,
    d: usize,
) {
    let dn = F::of_usize(d);
    let mut dxhat = vec![F::zero(); d];
    for t in 0..t_len {
        let xh = &cache.xhat[t * d..(t + 1) * d];
        let g = &dy[t * d..(t + 1) * d];
        let mut mean_dxhat = F::zero();
        let mut mean_dxhat_xhat = F::zero();
        for j in 0..d {
            dgain[j] += g[j] * xh[j];
            dbias[j] += g[j];
            dxhat[j] = g[j] * gain[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xh[j];
        }
        mean_dxhat /= dn;
        mean_dxhat_xhat /= dn;
        let r = cache.rstd[t];
        for j in 0..d {
            dx[t * d + j] += r * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

#[inline]
fn gelu<F: Scalar>(x: F) -> F {
    let u = F::of(GELU_C) * (x + F::of(GELU_A) * x * x * x);
    F::of(0.5) * x * (F::one() + u.tanh())
}

#[inline]
fn gelu_grad<F: Scalar>(x: F) -> F {
    let u = F::of(GELU_C) * (x + F::of(GELU_A) * x * x * x);
    let th = u.tanh();
    let du = F::of(GELU_C) * (F::one() + F::of(3.0 * GELU_A) * x * x);
    F::of(0.5) * (F::one() + th) + F::of(0.5) * x * (F::one() - th * th) * du
}

fn dropout_mask<F: Scalar, R: Rng>(len: usize, rate: f64, rng: &mut R) -> Vec<F> {
    let keep = F::of(1.0 / (1.0 - rate));
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { F::zero() } else { keep })
        .collect()
}

fn run_sequence<F: Scalar, R: Rng>(
    params: &ModelParams<F>,
    ids: &[u32],
    pad: Option<u32>,
    mut dropout: Option<(f64, &mut R)>,
) -> SequenceTrace<F> {
    let c = &params.config;
    let (t_len, d, h) = (ids.len(), c.embed_dim, c.heads);
    let hd = c.head_dim();
    let scale = F::one() / F::of_usize(hd).sqrt();
    let key_ok: Vec<bool> = ids.iter().map(|&id| Some(id) != pad).collect();

    let mut x = vec![F::zero(); t_len * d];
    for (t, &id) in ids.iter().enumerate() {
        let tok = &params.token_embedding[id as usize * d..(id as usize + 1) * d];
        let pos = &params.position_embedding[t * d..(t + 1) * d];
        for j in 0..d {
            x[t * d + j] = tok[j] + pos[j];
        }
    }
    let mut mask = |len: usize| {
        dropout
            .as_mut()
            .map(|(rate, rng)| dropout_mask::<F, _>(len, *rate, rng))
    };
    let drop0 = mask(t_len * d);
    if let Some(m) = &drop0 {
        x.iter_mut().zip(m).for_each(|(v, &k)| *v *= k);
    }

    let mut layers = Vec::with_capacity(c.layers);
    for blk in &params.blocks {
        let (a, ln1) = layer_norm(&x, &blk.ln1_gain, &blk.ln1_bias, t_len, d);
        let mut qkv = vec![F::zero(); t_len * 3 * d];
        matmul_bias(&a, &blk.qkv_weight, &blk.qkv_bias, &mut qkv, t_len, d, 3 * d);

        let mut probs = vec![F::zero(); h * t_len * t_len];
        let mut attn = vec![F::zero(); t_len * d];
        for head in 0..h {
            let off = head * hd;
            for t in 0..t_len {
                let q = &qkv[t * 3 * d + off..t * 3 * d + off + hd];
                let p = &mut probs[(head * t_len + t) * t_len..(head * t_len + t + 1) * t_len];
                let mut max = F::neg_infinity();
                for j in 0..=t {
                    if key_ok[j] || j == t {
                        let k = &qkv[j * 3 * d + d + off..j * 3 * d + d + off + hd];
                        p[j] = dot(q, k) * scale;
                        max = max.max(p[j]);
                    }
                }
                let mut sum = F::zero();
                for j in 0..=t {
                    if key_ok[j] || j == t {
                        p[j] = (p[j] - max).exp();
                        sum += p[j];
                    } else {
                        p[j] = F::zero();
                    }
                }
                let out = &mut attn[t * d + off..t * d + off + hd];
                for j in 0..=t {
                    p[j] /= sum;
                    if p[j] != F::zero() {
                        let vv = &qkv[j * 3 * d + 2 * d + off..j * 3 * d + 2 * d + off + hd];
                        for (o, &vj) in out.iter_mut().zip(vv) {
                            *o += p[j] * vj;
                        }
                    }
                }
            }
        }
        let mut proj = vec![F::zero(); t_len * d];
        matmul_bias(&attn, &blk.proj_weight, &blk.proj_bias, &mut proj, t_len, d, d);
        let drop1 = mask(t_len * d);
        for i in 0..t_len * d {
            let k = drop1.as_ref().map_or(F::one(), |m| m[i]);
            x[i] += proj[i] * k;
        }

        let (m, ln2) = layer_norm(&x, &blk.ln2_gain, &blk.ln2_bias, t_len, d);
        let mut fc_pre = vec![F::zero(); t_len * 4 * d];
        matmul_bias(&m, &blk.fc_weight, &blk.fc_bias, &mut fc_pre, t_len, d, 4 * d);
        let fc_act: Vec<F> = fc_pre.iter().map(|&v| gelu(v)).collect();
        let mut out = vec![F::zero(); t_len * d];
        matmul_bias(&fc_act, &blk.out_weight, &blk.out_bias, &mut out, t_len, 4 * d, d);
        let drop2 = mask(t_len * d);
        for i in 0..t_len * d {
            let k = drop2.as_ref().map_or(F::one(), |m| m[i]);
            x[i] += out[i] * k;
        }
        layers.push(LayerTrace {
            ln1,
            a,
            qkv,
            probs,
            attn,
            drop1,
            ln2,
            m,
            fc_pre,
            fc_act,
            drop2,
        });
    }
    let (hidden, final_norm) = layer_norm(&x, &params.final_gain, &params.final_bias, t_len, d);
    SequenceTrace {
        ids: ids.to_vec(),
        drop0,
        layers,
        final_norm,
        hidden,
    }
}

fn backward_sequence<F: Scalar>(
    params: &ModelParams<F>,
    trace: &SequenceTrace<F>,
    dlogits: &[F],
    grads: &mut ModelParams<F>,
) {
    let c = &params.config;
    let (t_len, d, v, h) = (trace.ids.len(), c.embed_dim, c.vocab_size, c.heads);
    let hd = c.head_dim();
    let scale = F::one() / F::of_usize(hd).sqrt();

    // Tied head: logits = hidden · Eᵀ.
    let mut dhidden = vec![F::zero(); t_len * d];
    for t in 0..t_len {
        let dl = &dlogits[t * v..(t + 1) * v];
        let hrow = &trace.hidden[t * d..(t + 1) * d];
        let dh = &mut dhidden[t * d..(t + 1) * d];
        for (tok, &g) in dl.iter().enumerate() {
            if g == F::zero() {
                continue;
            }
            let e = &params.token_embedding[tok * d..(tok + 1) * d];
            let de = &mut grads.token_embedding[tok * d..(tok + 1) * d];
            for j in 0..d {
                dh[j] += g * e[j];
                de[j] += g * hrow[j];
            }
        }
    }
    let mut dx = vec![F::zero(); t_len * d];
    layer_norm_backward(
        &trace.final_norm,
        &params.final_gain,
        &dhidden,
        &mut grads.final_gain,
        &mut grads.final_bias,
        &mut dx,
        t_len,
        d,
    );

    for (l, (blk, lt)) in params.blocks.iter().zip(&trace.layers).enumerate().rev() {
        let g: &mut Block<F> = &mut grads.blocks[l];

        // MLP branch.
        let dout: Vec<F> = match &lt.drop2 {
            Some(m) => dx.iter().zip(m).map(|(&a, &b)| a * b).collect(),
            None => dx.clone(),
        };
        let mut dact = vec![F::zero(); t_len * 4 * d];
        linear_backward(
            &lt.fc_act,
            &blk.out_weight,
            &dout,
            &mut g.out_weight,
            &mut g.out_bias,
            &mut dact,
            t_len,
            4 * d,
            d,
        );
        for (da, &pre) in dact.iter_mut().zip(&lt.fc_pre) {
            *da *= gelu_grad(pre);
        }
        let mut dm = vec![F::zero(); t_len * d];
        linear_backward(
            &lt.m,
            &blk.fc_weight,
            &dact,
            &mut g.fc_weight,
            &mut g.fc_bias,
            &mut dm,
            t_len,
            d,
            4 * d,
        );
        layer_norm_backward(
            &lt.ln2,
            &blk.ln2_gain,
            &dm,
            &mut g.ln2_gain,
            &mut g.ln2_bias,
            &mut dx,
            t_len,
            d,
        );

        // Attention branch.
        let dproj: Vec<F> = match &lt.drop1 {
            Some(m) => dx.iter().zip(m).map(|(&a, &b)| a * b).collect(),
            None => dx.clone(),
        };
        let mut dattn = vec![F::zero(); t_len * d];
        linear_backward(
            &lt.attn,
            &blk.proj_weight,
            &dproj,
            &mut g.proj_weight,
            &mut g.proj_bias,
            &mut dattn,
            t_len,
            d,
            d,
        );
        let mut dqkv = vec![F::zero(); t_len * 3 * d];
        let mut dp = vec![F::zero(); t_len];
        for head in 0..h {
            let off = head * hd;
            for t in 0..t_len {
                let p = &lt.probs[(head * t_len + t) * t_len..(head * t_len + t + 1) * t_len];
                let dy = &dattn[t * d + off..t * d + off + hd];
                let mut weighted = F::zero();
                for j in 0..=t {
                    if p[j] == F::zero() {
                        dp[j] = F::zero();
                        continue;
                    }
                    let vbase = j * 3 * d + 2 * d + off;
                    dp[j] = dot(dy, &lt.qkv[vbase..vbase + hd]);
                    weighted += p[j] * dp[j];
                    for (i, &g_) in dy.iter().enumerate() {
                        dqkv[vbase + i] += p[j] * g_;
                    }
                }
                let qbase = t * 3 * d + off;
                for j in 0..=t {
                    if p[j] == F::zero() {
                        continue;
                    }
                    let ds = p[j] * (dp[j] - weighted) * scale;
                    let kbase = j * 3 * d + d + off;
                    for i in 0..hd {
                        dqkv[qbase + i] += ds * lt.qkv[kbase + i];
                        dqkv[kbase + i] += ds * lt.qkv[qbase + i];
                    }
                }
            }
        }
        let mut da = vec![F::zero(); t_len * d];
        linear_backward(
            &lt.a,
            &blk.qkv_weight,
            &dqkv,
            &mut g.qkv_weight,
            &mut g.qkv_bias,
            &mut da,
            t_len,
            d,
            3 * d,
        );
        layer_norm_backward(
            &lt.ln1,
            &blk.ln1_gain,
            &da,
            &mut g.ln1_gain,
            &mut g.ln1_bias,
            &mut dx,
            t_len,
            d,
        );
    }

    for (t, &id) in trace.ids.iter().enumerate() {
        for j in 0..d {
            let gx = match &trace.drop0 {
                Some(m) => dx[t * d + j] * m[t * d + j],
                None => dx[t * d + j],
            };
            grads.token_embedding[id as usize * d + j] += gx;
            grads.position_embedding[t * d + j] += gx;
        }
    }
}
