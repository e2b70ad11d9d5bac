//! Softmax, affine maps, layer normalization and multi-head self-attention
//! over token sequences.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::{Tensor, TokenSeq};
use crate::error::{Error, Result};

/// Max-subtracted softmax.
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::InvalidInput("softmax of an empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("softmax input must be finite".into()));
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// `W x + b` with `W` shaped `(out, in)`.
pub fn linear(x: &[f64], w: &Tensor, b: &[f64]) -> Result<Vec<f64>> {
    let s = w.shape();
    if s.len() != 2 || s[1] != x.len() || s[0] != b.len() {
        return Err(Error::Shape(format!(
            "linear map {s:?} cannot take input {} with bias {}",
            x.len(),
            b.len()
        )));
    }
    let cols = s[1];
    Ok(w
        .data()
        .chunks_exact(cols)
        .zip(b)
        .map(|(row, bias)| row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + bias)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn new(weight: Tensor, bias: Vec<f64>) -> Result<Self> {
        let s = weight.shape();
        if s.len() != 2 || s[0] != bias.len() {
            return Err(Error::Shape(format!("linear weight {s:?} with {} biases", bias.len())));
        }
        Ok(Self { weight, bias })
    }

    /// Seeded normal weights (mean 0, given std), zero bias.
    pub fn random(in_dim: usize, out_dim: usize, std: f64, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, std).expect("valid std");
        let data = (0..in_dim * out_dim).map(|_| normal.sample(rng)).collect();
        Self {
            weight: Tensor::new(vec![out_dim, in_dim], data).expect("shape"),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        linear(x, &self.weight, &self.bias)
    }

    /// Applies the map to every token.
    pub fn forward_tokens(&self, tokens: &TokenSeq) -> Result<TokenSeq> {
        let mut data = Vec::with_capacity(tokens.n_tokens() * self.out_dim());
        for t in tokens.iter() {
            data.extend(self.forward(t)?);
        }
        TokenSeq::new(tokens.n_tokens(), self.out_dim(), data)
    }
}

/// Normalizes `x` to zero mean, unit variance, then applies `gamma`, `beta`.
pub fn layer_norm(x: &[f64], gamma: &[f64], beta: &[f64], eps: f64) -> Result<Vec<f64>> {
    if x.is_empty() || gamma.len() != x.len() || beta.len() != x.len() {
        return Err(Error::Shape(format!(
            "layer norm over {} with gamma {} / beta {}",
            x.len(),
            gamma.len(),
            beta.len()
        )));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + eps).sqrt();
    Ok(x
        .iter()
        .zip(gamma.iter().zip(beta))
        .map(|(v, (g, b))| (v - mean) * inv * g + b)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub eps: f64,
}

impl LayerNorm {
    pub fn identity(dim: usize) -> Self {
        Self {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            eps: 1e-6,
        }
    }

    pub fn forward_tokens(&self, tokens: &TokenSeq) -> Result<TokenSeq> {
        let mut data = Vec::with_capacity(tokens.data().len());
        for t in tokens.iter() {
            data.extend(layer_norm(t, &self.gamma, &self.beta, self.eps)?);
        }
        TokenSeq::new(tokens.n_tokens(), tokens.dim(), data)
    }
}

/// Output of one attention call; `weights[h]` is the `n x n` row-stochastic
/// matrix of head `h`.
#[derive(Debug, Clone)]
pub struct AttentionOutput {
    pub tokens: TokenSeq,
    pub weights: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention {
    pub heads: usize,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
}

impl MultiHeadAttention {
    pub fn new(heads: usize, query: Linear, key: Linear, value: Linear, output: Linear) -> Result<Self> {
        let dim = query.in_dim();
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::Shape(format!("token width {dim} not divisible into {heads} heads")));
        }
        for l in [&query, &key, &value, &output] {
            if l.in_dim() != dim || l.out_dim() != dim {
                return Err(Error::Shape("attention projections must be square".into()));
            }
        }
        Ok(Self {
            heads,
            query,
            key,
            value,
            output,
        })
    }

    pub fn random(dim: usize, heads: usize, std: f64, rng: &mut impl Rng) -> Result<Self> {
        Self::new(
            heads,
            Linear::random(dim, dim, std, rng),
            Linear::random(dim, dim, std, rng),
            Linear::random(dim, dim, std, rng),
            Linear::random(dim, dim, std, rng),
        )
    }

    pub fn dim(&self) -> usize {
        self.query.in_dim()
    }

    pub fn forward(&self, tokens: &TokenSeq) -> Result<AttentionOutput> {
        multi_head_self_attention(tokens, self)
    }
}

/// Scaled dot-product self-attention split over `attn.heads` heads, no
/// positional term.
pub fn multi_head_self_attention(tokens: &TokenSeq, attn: &MultiHeadAttention) -> Result<AttentionOutput> {
    let dim = tokens.dim();
    if dim != attn.dim() {
        return Err(Error::Shape(format!(
            "attention over width {} given tokens of width {dim}",
            attn.dim()
        )));
    }
    if !dim.is_multiple_of(attn.heads) {
        return Err(Error::Shape(format!("token width {dim} not divisible into {} heads", attn.heads)));
    }
    let n = tokens.n_tokens();
    let hd = dim / attn.heads;
    let q = attn.query.forward_tokens(tokens)?;
    let k = attn.key.forward_tokens(tokens)?;
    let v = attn.value.forward_tokens(tokens)?;
    let scale = 1.0 / (hd as f64).sqrt();

    let mut mixed = vec![0.0; n * dim];
    let mut weights = Vec::with_capacity(attn.heads);
    for h in 0..attn.heads {
        let lo = h * hd;
        let mut head_w = Vec::with_capacity(n * n);
        for i in 0..n {
            let qi = &q.token(i)[lo..lo + hd];
            let scores: Vec<f64> = (0..n)
                .map(|j| qi.iter().zip(&k.token(j)[lo..lo + hd]).map(|(a, b)| a * b).sum::<f64>() * scale)
                .collect();
            let row = softmax(&scores)?;
            let out = &mut mixed[i * dim + lo..i * dim + lo + hd];
            for (j, wij) in row.iter().enumerate() {
                for (o, vj) in out.iter_mut().zip(&v.token(j)[lo..lo + hd]) {
                    *o += wij * vj;
                }
            }
            head_w.extend(row);
        }
        weights.push(head_w);
    }
    let tokens = attn.output.forward_tokens(&TokenSeq::new(n, dim, mixed)?)?;
    Ok(AttentionOutput { tokens, weights })
}
