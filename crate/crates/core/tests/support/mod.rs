//! Test-only oracles, written independently of the library's forward pass.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use relrank::encoder::{EncoderConfig, EncoderParams, PAD_ID};

/// Parameters with every tensor redrawn at a scale where nonlinearities matter.
pub fn random_params(config: EncoderConfig, vocab: usize, seed: u64) -> EncoderParams<f64> {
    let mut p = EncoderParams::<f64>::init(config, vocab).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weight = Normal::new(0.0, 0.4).unwrap();
    p.for_each_value_mut(|v| *v = weight.sample(&mut rng));
    p.final_gain.iter_mut().for_each(|v| *v += 1.0);
    for l in &mut p.layers {
        l.ln1_gain.iter_mut().for_each(|v| *v += 1.0);
        l.ln2_gain.iter_mut().for_each(|v| *v += 1.0);
    }
    let _ = rng.random::<u8>();
    p
}

fn ln(x: &[f64], g: &[f64], b: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let r = 1.0 / (var + 1e-5).sqrt();
    x.iter()
        .enumerate()
        .map(|(i, v)| (v - mean) * r * g[i] + b[i])
        .collect()
}

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (u + 0.044715 * u.powi(3))).tanh())
}

/// `x · W + b` with `W` stored `rows(in) × cols(out)`.
fn project(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let out = b.len();
    (0..out)
        .map(|j| {
            b[j] + x
                .iter()
                .enumerate()
                .map(|(i, xi)| xi * w[i * out + j])
                .sum::<f64>()
        })
        .collect()
}

/// Full-sequence forward pass computing every position in every layer,
/// then reading position 0.
pub fn reference_encode(p: &EncoderParams<f64>, ids: &[usize]) -> Vec<f64> {
    let c = p.config;
    let d = c.dim;
    let dh = d / c.heads;
    let mut h: Vec<Vec<f64>> = ids
        .iter()
        .enumerate()
        .map(|(i, &id)| {
            (0..d)
                .map(|t| p.token_embedding[id * d + t] + p.position_embedding[i * d + t])
                .collect()
        })
        .collect();
    for l in &p.layers {
        let a: Vec<Vec<f64>> = h.iter().map(|x| ln(x, &l.ln1_gain, &l.ln1_bias)).collect();
        let q: Vec<Vec<f64>> = a.iter().map(|x| project(x, &l.w_q, &l.b_q)).collect();
        let k: Vec<Vec<f64>> = a.iter().map(|x| project(x, &l.w_k, &l.b_k)).collect();
        let v: Vec<Vec<f64>> = a.iter().map(|x| project(x, &l.w_v, &l.b_v)).collect();
        let mut next = Vec::new();
        for i in 0..ids.len() {
            let mut ctx = vec![0.0; d];
            for head in 0..c.heads {
                let r = head * dh..(head + 1) * dh;
                let scores: Vec<Option<f64>> = (0..ids.len())
                    .map(|j| {
                        (ids[j] != PAD_ID).then(|| {
                            r.clone().map(|e| q[i][e] * k[j][e]).sum::<f64>() / (dh as f64).sqrt()
                        })
                    })
                    .collect();
                let z: f64 = scores.iter().flatten().map(|s| s.exp()).sum();
                for (j, s) in scores.iter().enumerate() {
                    if let Some(s) = s {
                        for e in r.clone() {
                            ctx[e] += s.exp() / z * v[j][e];
                        }
                    }
                }
            }
            let o = project(&ctx, &l.w_o, &l.b_o);
            let x1: Vec<f64> = h[i].iter().zip(&o).map(|(a, b)| a + b).collect();
            let cn = ln(&x1, &l.ln2_gain, &l.ln2_bias);
            let u: Vec<f64> = project(&cn, &l.w_in, &l.b_in)
                .into_iter()
                .map(gelu)
                .collect();
            let f = project(&u, &l.w_out, &l.b_out);
            next.push(x1.iter().zip(&f).map(|(a, b)| a + b).collect());
        }
        h = next;
    }
    ln(&h[0], &p.final_gain, &p.final_bias)
}

/// Relative error with the denominator floored at `floor`.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
