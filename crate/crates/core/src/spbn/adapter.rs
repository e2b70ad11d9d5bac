//! Cross-modality adapter: down-project both inputs, spatially attend over
//! the first, then project the concatenation back to the token width.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{softmax, Linear, TokenSeq};

/// `m ⊙ softmax(flatten(m))`, softmax taken over every element of the grid.
pub fn spatial_attention(m: &TokenSeq) -> Result<TokenSeq> {
    let weights = softmax(m.data())?;
    let data = m.data().iter().zip(&weights).map(|(v, w)| v * w).collect();
    TokenSeq::new(m.n_tokens(), m.dim(), data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossModalAdapter {
    /// `dim -> low`, applied to backbone features before attention.
    pub proj1: Linear,
    /// `dim -> low`, applied to the previous prompt.
    pub proj2: Linear,
    /// `2*low -> dim`, applied to the feature-wise concatenation.
    pub proj3: Linear,
}

impl CrossModalAdapter {
    pub fn new(proj1: Linear, proj2: Linear, proj3: Linear) -> Result<Self> {
        let low = proj1.out_dim();
        if proj2.out_dim() != low || proj3.in_dim() != 2 * low || proj1.in_dim() != proj2.in_dim() {
            return Err(Error::Shape("adapter projections do not chain".into()));
        }
        Ok(Self { proj1, proj2, proj3 })
    }

    pub fn random(dim: usize, low: usize, std: f64, rng: &mut impl Rng) -> Self {
        Self {
            proj1: Linear::random(dim, low, std, rng),
            proj2: Linear::random(dim, low, std, rng),
            proj3: Linear::random(2 * low, dim, std, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.proj3.out_dim()
    }

    /// Prompt for one stream (template or search).
    pub fn forward(&self, features: &TokenSeq, prompt: &TokenSeq) -> Result<TokenSeq> {
        if features.n_tokens() != prompt.n_tokens() {
            return Err(Error::Shape(format!(
                "adapter inputs have {} and {} tokens",
                features.n_tokens(),
                prompt.n_tokens()
            )));
        }
        let a = spatial_attention(&self.proj1.forward_tokens(features)?)?;
        let b = self.proj2.forward_tokens(prompt)?;
        let mut out = Vec::with_capacity(features.n_tokens() * self.dim());
        let mut joined = Vec::with_capacity(a.dim() + b.dim());
        for (ta, tb) in a.iter().zip(b.iter()) {
            joined.clear();
            joined.extend_from_slice(ta);
            joined.extend_from_slice(tb);
            out.extend(self.proj3.forward(&joined)?);
        }
        TokenSeq::new(features.n_tokens(), self.dim(), out)
    }

    /// Template and search prompts computed separately, then concatenated.
    /// The first `n_template` tokens of both inputs belong to the template.
    pub fn forward_pair(&self, features: &TokenSeq, prompt: &TokenSeq, n_template: usize) -> Result<TokenSeq> {
        if features.n_tokens() != prompt.n_tokens() || n_template > features.n_tokens() {
            return Err(Error::Shape(format!(
                "cannot split {}/{} tokens at {n_template}",
                features.n_tokens(),
                prompt.n_tokens()
            )));
        }
        let n = features.n_tokens();
        let z = self.forward(&features.slice(0, n_template), &prompt.slice(0, n_template))?;
        let x = self.forward(&features.slice(n_template, n), &prompt.slice(n_template, n))?;
        z.concat(&x)
    }
}
