//! Spectral embedding: one 3-D convolution sliding along the band axis,
//! ReLU, then a strided 2-D convolution that turns the stacked feature
//! volumes into one token per `P x P` cell.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::archive::TensorArchive;
use crate::error::{Error, Result};
use crate::numerics::{conv2d, conv3d, Conv2dKernel, Conv3dKernel, Tensor};
use crate::types::HsiCube;

pub use crate::numerics::TokenSeq;

/// Standard deviation of the frozen random initialization.
pub const INIT_STD: f64 = 0.02;
const SPATIAL_KERNEL: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SenParams {
    bands: usize,
    patch: usize,
    /// `(D, 1, R, 3, 3)`
    pub spectral: Conv3dKernel,
    /// `(dim, C*D, P, P)`, stride `P`
    pub spatial: Conv2dKernel,
    /// `(dim, 3, P, P)`, stride `P`; patchifies false-color images
    pub rgb: Conv2dKernel,
}

fn normal_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| normal.sample(rng)).collect()).expect("finite")
}

impl SenParams {
    /// Seeded frozen parameters for `bands`-band input, `depth` spectral
    /// volumes, `dim`-wide tokens and patch size `patch`.
    pub fn new(seed: u64, bands: usize, depth: usize, dim: usize, patch: usize, spectral_kernel: usize) -> Result<Self> {
        if bands == 0 || depth == 0 || dim == 0 || patch == 0 {
            return Err(Error::InvalidInput("embedding extents must be positive".into()));
        }
        if spectral_kernel.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "spectral kernel extent must be odd, got {spectral_kernel}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spectral = Conv3dKernel::new(
            normal_tensor(vec![depth, 1, spectral_kernel, SPATIAL_KERNEL, SPATIAL_KERNEL], &mut rng),
            vec![0.0; depth],
        )?;
        let spatial = Conv2dKernel::new(normal_tensor(vec![dim, bands * depth, patch, patch], &mut rng), vec![0.0; dim])?;
        let rgb = Conv2dKernel::new(normal_tensor(vec![dim, 3, patch, patch], &mut rng), vec![0.0; dim])?;
        Ok(Self {
            bands,
            patch,
            spectral,
            spatial,
            rgb,
        })
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn depth(&self) -> usize {
        self.spectral.out_channels()
    }

    pub fn dim(&self) -> usize {
        self.spatial.out_channels()
    }

    pub fn patch(&self) -> usize {
        self.patch
    }

    pub fn to_archive(&self) -> TensorArchive {
        let mut a = TensorArchive::new();
        a.insert("sen.spectral.weight", self.spectral.weights.clone());
        a.insert_vec("sen.spectral.bias", &self.spectral.bias);
        a.insert("sen.spatial.weight", self.spatial.weights.clone());
        a.insert_vec("sen.spatial.bias", &self.spatial.bias);
        a.insert("sen.rgb.weight", self.rgb.weights.clone());
        a.insert_vec("sen.rgb.bias", &self.rgb.bias);
        a
    }

    pub fn from_archive(a: &TensorArchive) -> Result<Self> {
        let spectral = Conv3dKernel::new(a.get("sen.spectral.weight")?.clone(), a.get_vec("sen.spectral.bias")?)?;
        let spatial = Conv2dKernel::new(a.get("sen.spatial.weight")?.clone(), a.get_vec("sen.spatial.bias")?)?;
        let rgb = Conv2dKernel::new(a.get("sen.rgb.weight")?.clone(), a.get_vec("sen.rgb.bias")?)?;
        let ks = spatial.weights.shape();
        let (depth, patch) = (spectral.out_channels(), ks[2]);
        if ks[1] % depth != 0 || ks[2] != ks[3] || spectral.in_channels() != 1 || rgb.out_channels() != ks[0] {
            return Err(Error::Archive("inconsistent embedding parameter shapes".into()));
        }
        Ok(Self {
            bands: ks[1] / depth,
            patch,
            spectral,
            spatial,
            rgb,
        })
    }
}

fn check_patchable(h: usize, w: usize, p: usize) -> Result<()> {
    if !h.is_multiple_of(p) || !w.is_multiple_of(p) {
        return Err(Error::InvalidInput(format!(
            "patch {h}x{w} is not divisible by downsample factor {p}"
        )));
    }
    Ok(())
}

/// `(dim, h, w)` feature map to `h*w` row-major tokens of width `dim`.
fn grid_to_tokens(t: &Tensor) -> Result<TokenSeq> {
    let s = t.shape();
    let (dim, h, w) = (s[0], s[1], s[2]);
    let plane = h * w;
    let src = t.data();
    let mut data = vec![0.0; plane * dim];
    for c in 0..dim {
        for n in 0..plane {
            data[n * dim + c] = src[c * plane + n];
        }
    }
    TokenSeq::new(plane, dim, data)
}

/// Embeds a hyperspectral patch as `H*W/P^2` tokens of width `dim`.
pub fn embed_spectral(patch: &HsiCube, params: &SenParams) -> Result<TokenSeq> {
    let (c, h, w) = patch.dims();
    if c != params.bands {
        return Err(Error::Shape(format!(
            "embedding built for {} bands, patch has {c}",
            params.bands
        )));
    }
    check_patchable(h, w, params.patch)?;
    let volume = Tensor::new(vec![1, c, h, w], patch.to_f64())?;
    let r = params.spectral.weights.shape()[2];
    let features = conv3d(&volume, &params.spectral, [1, 1, 1], [r / 2, SPATIAL_KERNEL / 2, SPATIAL_KERNEL / 2])?.relu();
    let stacked = features.reshape(vec![params.depth() * c, h, w])?;
    let grid = conv2d(&stacked, &params.spatial, [params.patch, params.patch], [0, 0])?;
    grid_to_tokens(&grid)
}

/// Patchifies a 3-channel false-color image with the same token geometry
/// as [`embed_spectral`].
pub fn embed_rgb(img: &HsiCube, params: &SenParams) -> Result<TokenSeq> {
    let (c, h, w) = img.dims();
    if c != 3 {
        return Err(Error::Shape(format!("false-color image must have 3 channels, got {c}")));
    }
    check_patchable(h, w, params.patch)?;
    let x = Tensor::new(vec![3, h, w], img.to_f64())?;
    let grid = conv2d(&x, &params.rgb, [params.patch, params.patch], [0, 0])?;
    grid_to_tokens(&grid)
}
