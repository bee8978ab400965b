//! Micro transformer encoder producing the first-position, last-layer vector
//! of an assembled hypothesis, with a hand-written backward pass.
//!
//! Pre-norm blocks: `x + Attn(LN(x))`, then `x + FF(LN(x))`, and a final
//! layer norm. Keys at `[PAD]` positions are masked. Only position 0 is read
//! out, so the last block computes its query, residual and feed-forward for
//! that row alone.

mod checkpoint;
mod linalg;
mod vocab;

use std::borrow::Cow;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{all_finite, Scalar};
use linalg::{
    acc_a_bt, acc_at_b, acc_colsum, affine, gelu, gelu_grad, layer_norm, layer_norm_backward,
    NormTape,
};

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use vocab::{build_vocab, Vocab, BOS_ID, EOS_ID, PAD_ID, SEP_ID, SPECIALS, UNK_ID};

#[derive(Debug, Error, PartialEq)]
pub enum EncoderError {
    #[error("empty input sequence")]
    EmptyInput,
    #[error("token id {id} outside vocabulary of {vocab}")]
    TokenOutOfRange { id: usize, vocab: usize },
    #[error("relation portion of {len} tokens cannot fit max length {max_len}")]
    TooLong { len: usize, max_len: usize },
    #[error("invalid encoder config: {0}")]
    Config(String),
    #[error("upstream gradient has length {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub max_len: usize,
    pub ff_dim: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            dim: 64,
            layers: 2,
            heads: 4,
            max_len: 128,
            ff_dim: 128,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        let fields = [
            ("dim", self.dim),
            ("layers", self.layers),
            ("heads", self.heads),
            ("max_len", self.max_len),
            ("ff_dim", self.ff_dim),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(EncoderError::Config(format!("{name} must be positive")));
        }
        if !self.dim.is_multiple_of(self.heads) {
            return Err(EncoderError::Config(format!(
                "dim {} not divisible by {} heads",
                self.dim, self.heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams<T> {
    pub ln1_gain: Vec<T>,
    pub ln1_bias: Vec<T>,
    pub w_q: Vec<T>,
    pub b_q: Vec<T>,
    pub w_k: Vec<T>,
    pub b_k: Vec<T>,
    pub w_v: Vec<T>,
    pub b_v: Vec<T>,
    pub w_o: Vec<T>,
    pub b_o: Vec<T>,
    pub ln2_gain: Vec<T>,
    pub ln2_bias: Vec<T>,
    /// `dim × ff_dim`
    pub w_in: Vec<T>,
    pub b_in: Vec<T>,
    /// `ff_dim × dim`
    pub w_out: Vec<T>,
    pub b_out: Vec<T>,
}

/// All trainable encoder weights. Matrices are row-major with inputs as rows,
/// so a projection is `x · W`. The same layout holds gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams<T> {
    pub config: EncoderConfig,
    pub vocab_size: usize,
    /// `vocab_size × dim`
    pub token_embedding: Vec<T>,
    /// `max_len × dim`
    pub position_embedding: Vec<T>,
    pub layers: Vec<LayerParams<T>>,
    pub final_gain: Vec<T>,
    pub final_bias: Vec<T>,
}

/// Contextual embedding of one hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T> {
    pub values: Vec<T>,
    /// Sentence tokens dropped to fit `max_len`.
    pub truncated: usize,
}

impl<T: Scalar> LayerParams<T> {
    fn filled(d: usize, ff: usize, mut weight: impl FnMut(usize) -> Vec<T>) -> Self {
        let zeros = |n| vec![T::zero(); n];
        let ones = |n| vec![T::one(); n];
        LayerParams {
            ln1_gain: ones(d),
            ln1_bias: zeros(d),
            w_q: weight(d * d),
            b_q: zeros(d),
            w_k: weight(d * d),
            b_k: zeros(d),
            w_v: weight(d * d),
            b_v: zeros(d),
            w_o: weight(d * d),
            b_o: zeros(d),
            ln2_gain: ones(d),
            ln2_bias: zeros(d),
            w_in: weight(d * ff),
            b_in: zeros(ff),
            w_out: weight(ff * d),
            b_out: zeros(d),
        }
    }
}

impl<T: Scalar> EncoderParams<T> {
    /// Normal(0, 0.02) embeddings and projections, unit norm gains, zero biases.
    pub fn init(config: EncoderConfig, vocab_size: usize) -> Result<Self, EncoderError> {
        config.validate()?;
        if vocab_size == 0 {
            return Err(EncoderError::Config("empty vocabulary".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, 0.02).expect("valid normal");
        let mut sample =
            |n: usize| -> Vec<T> { (0..n).map(|_| T::of(normal.sample(&mut rng))).collect() };
        let d = config.dim;
        let token_embedding = sample(vocab_size * d);
        let position_embedding = sample(config.max_len * d);
        let layers = (0..config.layers)
            .map(|_| LayerParams::filled(d, config.ff_dim, &mut sample))
            .collect();
        Ok(EncoderParams {
            config,
            vocab_size,
            token_embedding,
            position_embedding,
            layers,
            final_gain: vec![T::one(); d],
            final_bias: vec![T::zero(); d],
        })
    }

    /// Same shapes, every entry zero; the accumulator for gradients.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_value_mut(|v| *v = T::zero());
        z
    }

    /// Named tensors with shapes, in checkpoint order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let (d, ff) = (self.config.dim, self.config.ff_dim);
        let mut out: Vec<(String, Vec<usize>, &[T])> = vec![
            (
                "embed.token".into(),
                vec![self.vocab_size, d],
                &self.token_embedding,
            ),
            (
                "embed.position".into(),
                vec![self.config.max_len, d],
                &self.position_embedding,
            ),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            let items: [(&str, Vec<usize>, &[T]); 16] = [
                ("ln1.gain", vec![d], &l.ln1_gain),
                ("ln1.bias", vec![d], &l.ln1_bias),
                ("attn.w_q", vec![d, d], &l.w_q),
                ("attn.b_q", vec![d], &l.b_q),
                ("attn.w_k", vec![d, d], &l.w_k),
                ("attn.b_k", vec![d], &l.b_k),
                ("attn.w_v", vec![d, d], &l.w_v),
                ("attn.b_v", vec![d], &l.b_v),
                ("attn.w_o", vec![d, d], &l.w_o),
                ("attn.b_o", vec![d], &l.b_o),
                ("ln2.gain", vec![d], &l.ln2_gain),
                ("ln2.bias", vec![d], &l.ln2_bias),
                ("ff.w_in", vec![d, ff], &l.w_in),
                ("ff.b_in", vec![ff], &l.b_in),
                ("ff.w_out", vec![ff, d], &l.w_out),
                ("ff.b_out", vec![d], &l.b_out),
            ];
            out.extend(
                items
                    .into_iter()
                    .map(|(n, s, t)| (format!("layer{i}.{n}"), s, t)),
            );
        }
        out.push(("final_ln.gain".into(), vec![d], &self.final_gain));
        out.push(("final_ln.bias".into(), vec![d], &self.final_bias));
        out
    }

    /// Mutable tensors in the same order as [`Self::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut out = vec![&mut self.token_embedding, &mut self.position_embedding];
        for l in &mut self.layers {
            out.extend([
                &mut l.ln1_gain,
                &mut l.ln1_bias,
                &mut l.w_q,
                &mut l.b_q,
                &mut l.w_k,
                &mut l.b_k,
                &mut l.w_v,
                &mut l.b_v,
                &mut l.w_o,
                &mut l.b_o,
                &mut l.ln2_gain,
                &mut l.ln2_bias,
                &mut l.w_in,
                &mut l.b_in,
                &mut l.w_out,
                &mut l.b_out,
            ]);
        }
        out.push(&mut self.final_gain);
        out.push(&mut self.final_bias);
        out
    }

    pub fn for_each_value_mut(&mut self, mut f: impl FnMut(&mut T)) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(&mut f);
        }
    }

    pub fn flat_len(&self) -> usize {
        self.tensors().iter().map(|(_, _, t)| t.len()).sum()
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &Self) {
        for (dst, (_, _, src)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (a, &b) in dst.iter_mut().zip(src) {
                *a += b;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        self.for_each_value_mut(|v| *v *= factor);
    }

    pub fn sum_squares(&self) -> T {
        self.tensors()
            .iter()
            .flat_map(|(_, _, t)| t.iter())
            .map(|&v| v * v)
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, _, t)| all_finite(t))
    }

    /// Forward pass; returns the position-0 vector of the final layer.
    pub fn encode(&self, ids: &[usize]) -> Result<Embedding<T>, EncoderError> {
        self.forward(ids).map(|(e, _)| e)
    }

    /// Gradients of `upstream · encode(ids)` with respect to every tensor.
    pub fn encode_with_grads(
        &self,
        ids: &[usize],
        upstream: &[T],
    ) -> Result<EncoderParams<T>, EncoderError> {
        let (_, tape) = self.forward(ids)?;
        let mut grads = self.zeros_like();
        self.backward(&tape, upstream, &mut grads)?;
        Ok(grads)
    }

    pub fn forward(&self, ids: &[usize]) -> Result<(Embedding<T>, Tape<T>), EncoderError> {
        let (ids, truncated) = fit_to_length(ids, self.config.max_len)?;
        if let Some(&id) = ids.iter().find(|&&id| id >= self.vocab_size) {
            return Err(EncoderError::TokenOutOfRange {
                id,
                vocab: self.vocab_size,
            });
        }
        let d = self.config.dim;
        let len = ids.len();
        let keep: Vec<bool> = ids.iter().map(|&id| id != PAD_ID).collect();
        let mut x = Vec::with_capacity(len * d);
        for (i, &id) in ids.iter().enumerate() {
            let tok = &self.token_embedding[id * d..(id + 1) * d];
            let pos = &self.position_embedding[i * d..(i + 1) * d];
            x.extend(tok.iter().zip(pos).map(|(&a, &b)| a + b));
        }
        let last = self.layers.len() - 1;
        let mut layer_tapes = Vec::with_capacity(self.layers.len());
        for (li, layer) in self.layers.iter().enumerate() {
            let queries = if li == last { 1 } else { len };
            let (out, tape) = self.layer_forward(layer, &x, len, queries, &keep);
            layer_tapes.push(tape);
            x = out;
        }
        let (y, final_norm) = layer_norm(&x[..d], d, &self.final_gain, &self.final_bias);
        let tape = Tape {
            ids: ids.into_owned(),
            keep,
            layers: layer_tapes,
            final_norm,
        };
        Ok((
            Embedding {
                values: y,
                truncated,
            },
            tape,
        ))
    }

    /// Accumulates into `grads` the gradient of `upstream · y`, where `y` is
    /// the embedding recorded in `tape`.
    pub fn backward(
        &self,
        tape: &Tape<T>,
        upstream: &[T],
        grads: &mut EncoderParams<T>,
    ) -> Result<(), EncoderError> {
        let d = self.config.dim;
        if upstream.len() != d {
            return Err(EncoderError::DimensionMismatch {
                got: upstream.len(),
                expected: d,
            });
        }
        let mut dx = layer_norm_backward(
            upstream,
            &tape.final_norm,
            d,
            &self.final_gain,
            &mut grads.final_gain,
            &mut grads.final_bias,
        );
        for (li, layer) in self.layers.iter().enumerate().rev() {
            dx = self.layer_backward(
                layer,
                &tape.layers[li],
                &dx,
                &tape.keep,
                &mut grads.layers[li],
            );
        }
        for (i, (&id, row)) in tape.ids.iter().zip(dx.chunks_exact(d)).enumerate() {
            for (t, &g) in row.iter().enumerate() {
                grads.token_embedding[id * d + t] += g;
                grads.position_embedding[i * d + t] += g;
            }
        }
        Ok(())
    }

    fn layer_forward(
        &self,
        p: &LayerParams<T>,
        x: &[T],
        len: usize,
        queries: usize,
        keep: &[bool],
    ) -> (Vec<T>, LayerTape<T>) {
        let d = self.config.dim;
        let heads = self.config.heads;
        let dh = self.config.head_dim();
        let ff = self.config.ff_dim;
        let scale = T::one() / T::of(dh as f64).sqrt();

        let (a, norm1) = layer_norm(x, d, &p.ln1_gain, &p.ln1_bias);
        let q = affine(&a[..queries * d], queries, d, &p.w_q, d, &p.b_q);
        let k = affine(&a, len, d, &p.w_k, d, &p.b_k);
        let v = affine(&a, len, d, &p.w_v, d, &p.b_v);

        let mut probs = vec![T::zero(); heads * queries * len];
        let mut ctx = vec![T::zero(); queries * d];
        for h in 0..heads {
            let off = h * dh;
            for i in 0..queries {
                let qi = &q[i * d + off..i * d + off + dh];
                let row = &mut probs[(h * queries + i) * len..(h * queries + i + 1) * len];
                let mut max = T::neg_infinity();
                for j in 0..len {
                    if keep[j] {
                        let s = crate::scalar::dot(qi, &k[j * d + off..j * d + off + dh]) * scale;
                        row[j] = s;
                        max = max.max(s);
                    }
                }
                let mut total = T::zero();
                for j in 0..len {
                    row[j] = if keep[j] {
                        (row[j] - max).exp()
                    } else {
                        T::zero()
                    };
                    total += row[j];
                }
                let c = &mut ctx[i * d + off..i * d + off + dh];
                for j in 0..len {
                    row[j] /= total;
                    let pj = row[j];
                    if pj != T::zero() {
                        for (cv, &vv) in c.iter_mut().zip(&v[j * d + off..j * d + off + dh]) {
                            *cv += pj * vv;
                        }
                    }
                }
            }
        }
        let o = affine(&ctx, queries, d, &p.w_o, d, &p.b_o);
        let x1: Vec<T> = x[..queries * d]
            .iter()
            .zip(&o)
            .map(|(&a, &b)| a + b)
            .collect();
        let (c, norm2) = layer_norm(&x1, d, &p.ln2_gain, &p.ln2_bias);
        let u = affine(&c, queries, d, &p.w_in, ff, &p.b_in);
        let g: Vec<T> = u.iter().map(|&z| gelu(z)).collect();
        let f = affine(&g, queries, ff, &p.w_out, d, &p.b_out);
        let out = x1.iter().zip(&f).map(|(&a, &b)| a + b).collect();
        (
            out,
            LayerTape {
                len,
                queries,
                norm1,
                a,
                q,
                k,
                v,
                probs,
                ctx,
                norm2,
                c,
                u,
                g,
            },
        )
    }

    fn layer_backward(
        &self,
        p: &LayerParams<T>,
        t: &LayerTape<T>,
        dout: &[T],
        keep: &[bool],
        gp: &mut LayerParams<T>,
    ) -> Vec<T> {
        let d = self.config.dim;
        let heads = self.config.heads;
        let dh = self.config.head_dim();
        let ff = self.config.ff_dim;
        let scale = T::one() / T::of(dh as f64).sqrt();
        let (len, nq) = (t.len, t.queries);

        // Feed-forward block.
        acc_at_b(&t.g, nq, ff, dout, d, &mut gp.w_out);
        acc_colsum(dout, d, &mut gp.b_out);
        let mut dg = vec![T::zero(); nq * ff];
        acc_a_bt(dout, nq, d, &p.w_out, ff, &mut dg);
        let du: Vec<T> = dg
            .iter()
            .zip(&t.u)
            .map(|(&g, &u)| g * gelu_grad(u))
            .collect();
        acc_at_b(&t.c, nq, d, &du, ff, &mut gp.w_in);
        acc_colsum(&du, ff, &mut gp.b_in);
        let mut dc = vec![T::zero(); nq * d];
        acc_a_bt(&du, nq, ff, &p.w_in, d, &mut dc);
        let dnorm2 = layer_norm_backward(
            &dc,
            &t.norm2,
            d,
            &p.ln2_gain,
            &mut gp.ln2_gain,
            &mut gp.ln2_bias,
        );
        let dx1: Vec<T> = dout.iter().zip(&dnorm2).map(|(&a, &b)| a + b).collect();

        // Attention block.
        acc_at_b(&t.ctx, nq, d, &dx1, d, &mut gp.w_o);
        acc_colsum(&dx1, d, &mut gp.b_o);
        let mut dctx = vec![T::zero(); nq * d];
        acc_a_bt(&dx1, nq, d, &p.w_o, d, &mut dctx);

        let mut dq = vec![T::zero(); nq * d];
        let mut dk = vec![T::zero(); len * d];
        let mut dv = vec![T::zero(); len * d];
        let mut dscore = vec![T::zero(); len];
        for h in 0..heads {
            let off = h * dh;
            for i in 0..nq {
                let row = &t.probs[(h * nq + i) * len..(h * nq + i + 1) * len];
                let dci = &dctx[i * d + off..i * d + off + dh];
                let mut weighted = T::zero();
                for j in 0..len {
                    if !keep[j] {
                        dscore[j] = T::zero();
                        continue;
                    }
                    let vj = &t.v[j * d + off..j * d + off + dh];
                    let dp = crate::scalar::dot(dci, vj);
                    dscore[j] = dp;
                    weighted += row[j] * dp;
                    for (dvv, &g) in dv[j * d + off..j * d + off + dh].iter_mut().zip(dci) {
                        *dvv += row[j] * g;
                    }
                }
                let qi = &t.q[i * d + off..i * d + off + dh];
                for j in 0..len {
                    if !keep[j] {
                        continue;
                    }
                    let ds = row[j] * (dscore[j] - weighted) * scale;
                    if ds == T::zero() {
                        continue;
                    }
                    let kj = &t.k[j * d + off..j * d + off + dh];
                    for e in 0..dh {
                        dq[i * d + off + e] += ds * kj[e];
                        dk[j * d + off + e] += ds * qi[e];
                    }
                }
            }
        }

        let mut da = vec![T::zero(); len * d];
        acc_at_b(&t.a[..nq * d], nq, d, &dq, d, &mut gp.w_q);
        acc_colsum(&dq, d, &mut gp.b_q);
        acc_a_bt(&dq, nq, d, &p.w_q, d, &mut da[..nq * d]);
        acc_at_b(&t.a, len, d, &dk, d, &mut gp.w_k);
        acc_colsum(&dk, d, &mut gp.b_k);
        acc_a_bt(&dk, len, d, &p.w_k, d, &mut da);
        acc_at_b(&t.a, len, d, &dv, d, &mut gp.w_v);
        acc_colsum(&dv, d, &mut gp.b_v);
        acc_a_bt(&dv, len, d, &p.w_v, d, &mut da);

        let mut dx = layer_norm_backward(
            &da,
            &t.norm1,
            d,
            &p.ln1_gain,
            &mut gp.ln1_gain,
            &mut gp.ln1_bias,
        );
        for (a, &b) in dx[..nq * d].iter_mut().zip(&dx1) {
            *a += b;
        }
        dx
    }
}

/// Intermediates of one forward pass, consumed by [`EncoderParams::backward`].
pub struct Tape<T> {
    ids: Vec<usize>,
    keep: Vec<bool>,
    layers: Vec<LayerTape<T>>,
    final_norm: NormTape<T>,
}

struct LayerTape<T> {
    len: usize,
    queries: usize,
    norm1: NormTape<T>,
    a: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    probs: Vec<T>,
    ctx: Vec<T>,
    norm2: NormTape<T>,
    c: Vec<T>,
    u: Vec<T>,
    g: Vec<T>,
}

/// Applies the overlength policy: drop sentence tokens immediately before the
/// first `[SEP]` until the sequence fits. Sequences without a separator are
/// cut from the right. Returns the number of dropped tokens.
pub fn fit_to_length(
    ids: &[usize],
    max_len: usize,
) -> Result<(Cow<'_, [usize]>, usize), EncoderError> {
    if ids.is_empty() {
        return Err(EncoderError::EmptyInput);
    }
    if ids.len() <= max_len {
        return Ok((Cow::Borrowed(ids), 0));
    }
    let excess = ids.len() - max_len;
    match ids.iter().position(|&id| id == SEP_ID) {
        // Keep the leading token and at least the separator onward.
        Some(sep) if sep > excess => {
            let mut out = Vec::with_capacity(max_len);
            out.extend_from_slice(&ids[..sep - excess]);
            out.extend_from_slice(&ids[sep..]);
            Ok((Cow::Owned(out), excess))
        }
        Some(sep) => Err(EncoderError::TooLong {
            len: ids.len() - sep + 1,
            max_len,
        }),
        None => Ok((Cow::Borrowed(&ids[..max_len]), excess)),
    }
}

pub fn encode<T: Scalar>(
    params: &EncoderParams<T>,
    ids: &[usize],
) -> Result<Embedding<T>, EncoderError> {
    params.encode(ids)
}

pub fn encode_with_grads<T: Scalar>(
    params: &EncoderParams<T>,
    ids: &[usize],
    upstream: &[T],
) -> Result<EncoderParams<T>, EncoderError> {
    params.encode_with_grads(ids, upstream)
}
