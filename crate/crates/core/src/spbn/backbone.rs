//! Frozen toy Transformer backbone with an adapter in front of every layer.

use std::hash::{Hash, Hasher};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adapter::CrossModalAdapter;
use crate::archive::TensorArchive;
use crate::error::{Error, Result};
use crate::numerics::{LayerNorm, Linear, MultiHeadAttention, TokenSeq};

const INIT_STD: f64 = 0.02;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

/// Pre-norm encoder layer: `x + MHSA(LN(x))`, then `x + FFN(LN(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub norm1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
}

impl EncoderLayer {
    pub fn random(dim: usize, heads: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            norm1: LayerNorm::identity(dim),
            attn: MultiHeadAttention::random(dim, heads, INIT_STD, rng)?,
            norm2: LayerNorm::identity(dim),
            ffn_in: Linear::random(dim, 4 * dim, INIT_STD, rng),
            ffn_out: Linear::random(4 * dim, dim, INIT_STD, rng),
        })
    }

    pub fn forward(&self, x: &TokenSeq) -> Result<TokenSeq> {
        let attended = self.attn.forward(&self.norm1.forward_tokens(x)?)?.tokens;
        let x = x.add(&attended)?;
        let hidden = self.ffn_in.forward_tokens(&self.norm2.forward_tokens(&x)?)?;
        let hidden = TokenSeq::new(hidden.n_tokens(), hidden.dim(), hidden.data().iter().map(|&v| gelu(v)).collect())?;
        x.add(&self.ffn_out.forward_tokens(&hidden)?)
    }

    fn hash_into(&self, h: &mut impl Hasher) {
        let mut put = |v: &[f64]| v.iter().for_each(|x| x.to_bits().hash(h));
        for ln in [&self.norm1, &self.norm2] {
            put(&ln.gamma);
            put(&ln.beta);
        }
        for l in [
            &self.attn.query,
            &self.attn.key,
            &self.attn.value,
            &self.attn.output,
            &self.ffn_in,
            &self.ffn_out,
        ] {
            put(l.weight.data());
            put(&l.bias);
        }
    }
}

/// `adapters[0]` builds the initial prompts; `adapters[l]` feeds layer `l`
/// (1-based), so there is one more adapter than layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyBackbone {
    adapters: Vec<CrossModalAdapter>,
    layers: Vec<EncoderLayer>,
}

impl ToyBackbone {
    pub fn new(seed: u64, layers: usize, dim: usize, heads: usize, adapter_dim: usize) -> Result<Self> {
        if layers == 0 {
            return Err(Error::InvalidInput("backbone needs at least one layer".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let adapters = (0..=layers)
            .map(|_| CrossModalAdapter::random(dim, adapter_dim, INIT_STD, &mut rng))
            .collect();
        let layers = (0..layers)
            .map(|_| EncoderLayer::random(dim, heads, &mut rng))
            .collect::<Result<_>>()?;
        Ok(Self { adapters, layers })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn dim(&self) -> usize {
        self.adapters[0].dim()
    }

    pub fn adapter(&self, l: usize) -> &CrossModalAdapter {
        &self.adapters[l]
    }

    /// Initial prompts from the visual and spectral token streams.
    pub fn initial_prompt(
        &self,
        z_rgb: &TokenSeq,
        z_hs: &TokenSeq,
        x_rgb: &TokenSeq,
        x_hs: &TokenSeq,
    ) -> Result<TokenSeq> {
        let pz = self.adapters[0].forward(z_rgb, z_hs)?;
        let px = self.adapters[0].forward(x_rgb, x_hs)?;
        pz.concat(&px)
    }

    /// Prompt for layer `l` in `1..=L` from the previous layer output and prompt.
    pub fn ca_forward(&self, l: usize, backbone_out: &TokenSeq, prev_prompt: &TokenSeq, n_template: usize) -> Result<TokenSeq> {
        if l == 0 || l > self.layers.len() {
            return Err(Error::InvalidInput(format!(
                "adapter layer {l} outside 1..={}",
                self.layers.len()
            )));
        }
        self.adapters[l].forward_pair(backbone_out, prev_prompt, n_template)
    }

    /// Runs every layer and returns the final `(N_z + N_x, dim)` features.
    /// The visual tokens enter as the layer-0 output.
    pub fn forward(&self, z_rgb: &TokenSeq, z_hs: &TokenSeq, x_rgb: &TokenSeq, x_hs: &TokenSeq) -> Result<TokenSeq> {
        if z_rgb.n_tokens() != z_hs.n_tokens() || x_rgb.n_tokens() != x_hs.n_tokens() {
            return Err(Error::Shape("visual and spectral token counts differ".into()));
        }
        let n_template = z_rgb.n_tokens();
        let mut prompt = self.initial_prompt(z_rgb, z_hs, x_rgb, x_hs)?;
        let mut out = z_rgb.concat(x_rgb)?;
        for (l, layer) in self.layers.iter().enumerate() {
            prompt = self.ca_forward(l + 1, &out, &prompt, n_template)?;
            out = layer.forward(&prompt)?;
        }
        Ok(out)
    }

    pub fn write_archive(&self, a: &mut TensorArchive) {
        let put_linear = |a: &mut TensorArchive, name: String, l: &Linear| {
            a.insert(format!("{name}.weight"), l.weight.clone());
            a.insert_vec(format!("{name}.bias"), &l.bias);
        };
        a.insert_vec("backbone.shape", &[self.layers.len() as f64, self.layers[0].attn.heads as f64]);
        for (l, ca) in self.adapters.iter().enumerate() {
            put_linear(a, format!("backbone.ca{l}.proj1"), &ca.proj1);
            put_linear(a, format!("backbone.ca{l}.proj2"), &ca.proj2);
            put_linear(a, format!("backbone.ca{l}.proj3"), &ca.proj3);
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let p = format!("backbone.layer{l}");
            for (n, ln) in [("norm1", &layer.norm1), ("norm2", &layer.norm2)] {
                a.insert_vec(format!("{p}.{n}.gamma"), &ln.gamma);
                a.insert_vec(format!("{p}.{n}.beta"), &ln.beta);
                a.insert_vec(format!("{p}.{n}.eps"), &[ln.eps]);
            }
            put_linear(a, format!("{p}.attn.query"), &layer.attn.query);
            put_linear(a, format!("{p}.attn.key"), &layer.attn.key);
            put_linear(a, format!("{p}.attn.value"), &layer.attn.value);
            put_linear(a, format!("{p}.attn.output"), &layer.attn.output);
            put_linear(a, format!("{p}.ffn_in"), &layer.ffn_in);
            put_linear(a, format!("{p}.ffn_out"), &layer.ffn_out);
        }
    }

    pub fn from_archive(a: &TensorArchive) -> Result<Self> {
        let linear = |name: String| -> Result<Linear> {
            Linear::new(a.get(&format!("{name}.weight"))?.clone(), a.get_vec(&format!("{name}.bias"))?)
        };
        let shape = a.get_vec("backbone.shape")?;
        let (depth, heads) = match shape.as_slice() {
            [d, h] if *d >= 1.0 && *h >= 1.0 => (*d as usize, *h as usize),
            _ => return Err(Error::Archive("bad backbone.shape entry".into())),
        };
        let adapters = (0..=depth)
            .map(|l| {
                CrossModalAdapter::new(
                    linear(format!("backbone.ca{l}.proj1"))?,
                    linear(format!("backbone.ca{l}.proj2"))?,
                    linear(format!("backbone.ca{l}.proj3"))?,
                )
            })
            .collect::<Result<_>>()?;
        let norm = |p: &str| -> Result<LayerNorm> {
            let eps = a.get_vec(&format!("{p}.eps"))?;
            Ok(LayerNorm {
                gamma: a.get_vec(&format!("{p}.gamma"))?,
                beta: a.get_vec(&format!("{p}.beta"))?,
                eps: eps[0],
            })
        };
        let layers = (0..depth)
            .map(|l| {
                let p = format!("backbone.layer{l}");
                Ok(EncoderLayer {
                    norm1: norm(&format!("{p}.norm1"))?,
                    attn: MultiHeadAttention::new(
                        heads,
                        linear(format!("{p}.attn.query"))?,
                        linear(format!("{p}.attn.key"))?,
                        linear(format!("{p}.attn.value"))?,
                        linear(format!("{p}.attn.output"))?,
                    )?,
                    norm2: norm(&format!("{p}.norm2"))?,
                    ffn_in: linear(format!("{p}.ffn_in"))?,
                    ffn_out: linear(format!("{p}.ffn_out"))?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { adapters, layers })
    }

    /// Hash over every parameter bit; unchanged by forward passes.
    pub fn checksum(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for ca in &self.adapters {
            for l in [&ca.proj1, &ca.proj2, &ca.proj3] {
                l.weight.data().iter().for_each(|v| v.to_bits().hash(&mut h));
                l.bias.iter().for_each(|v| v.to_bits().hash(&mut h));
            }
        }
        for layer in &self.layers {
            layer.hash_into(&mut h);
        }
        h.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tokens(n: usize, dim: usize, phase: f64) -> TokenSeq {
        TokenSeq::new(n, dim, (0..n * dim).map(|i| (i as f64 * 0.173 + phase).sin()).collect()).unwrap()
    }

    #[test]
    fn output_covers_template_and_search_tokens() {
        let bb = ToyBackbone::new(1, 2, 8, 2, 4).unwrap();
        let out = bb.forward(&tokens(4, 8, 0.0), &tokens(4, 8, 1.0), &tokens(9, 8, 2.0), &tokens(9, 8, 3.0)).unwrap();
        assert_eq!((out.n_tokens(), out.dim()), (13, 8));
    }

    #[test]
    fn single_layer_is_one_encode() {
        let bb = ToyBackbone::new(2, 1, 8, 2, 4).unwrap();
        let (zr, zh, xr, xh) = (tokens(4, 8, 0.0), tokens(4, 8, 1.0), tokens(9, 8, 2.0), tokens(9, 8, 3.0));
        let p0 = bb.initial_prompt(&zr, &zh, &xr, &xh).unwrap();
        let p1 = bb.ca_forward(1, &zr.concat(&xr).unwrap(), &p0, 4).unwrap();
        let expect = bb.layers[0].forward(&p1).unwrap();
        assert_eq!(bb.forward(&zr, &zh, &xr, &xh).unwrap(), expect);
    }

    #[test]
    fn frozen_and_deterministic() {
        let bb = ToyBackbone::new(3, 2, 8, 4, 4).unwrap();
        let before = bb.checksum();
        let args = (tokens(4, 8, 0.5), tokens(4, 8, 1.5), tokens(9, 8, 2.5), tokens(9, 8, 3.5));
        let a = bb.forward(&args.0, &args.1, &args.2, &args.3).unwrap();
        for _ in 0..3 {
            assert_eq!(bb.forward(&args.0, &args.1, &args.2, &args.3).unwrap(), a);
        }
        assert_eq!(bb.checksum(), before);
        assert_eq!(ToyBackbone::new(3, 2, 8, 4, 4).unwrap().checksum(), before);
    }

    #[test]
    fn archive_round_trip() {
        let bb = ToyBackbone::new(5, 2, 8, 2, 4).unwrap();
        let mut a = TensorArchive::new();
        bb.write_archive(&mut a);
        let back = ToyBackbone::from_archive(&TensorArchive::from_bytes(&a.to_bytes()).unwrap()).unwrap();
        assert_eq!(back, bb);
        assert_eq!(back.checksum(), bb.checksum());
    }

    #[test]
    fn adapter_layer_bounds() {
        let bb = ToyBackbone::new(4, 2, 8, 2, 4).unwrap();
        let t = tokens(5, 8, 0.0);
        assert!(bb.ca_forward(0, &t, &t, 2).is_err());
        assert!(bb.ca_forward(3, &t, &t, 2).is_err());
        assert!(bb.ca_forward(2, &t, &t, 2).is_ok());
    }
}
