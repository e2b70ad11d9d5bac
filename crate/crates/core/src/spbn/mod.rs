//! Prompt-fusion backbone, conv head and the two response generators the
//! tracker can run on.

pub mod adapter;
pub mod backbone;
pub mod correlation;
pub mod head;

use std::path::Path;

pub use adapter::{spatial_attention, CrossModalAdapter};
pub use backbone::{EncoderLayer, ToyBackbone};
pub use correlation::{cell_tokens, correlate_spectral, SpectralCorrelation};
pub use head::{decode_box, encode_box_to_maps, giou, loss_total, ConvHead, LossBreakdown, SearchWindow};

use crate::archive::TensorArchive;
use crate::config::{GeneratorKind, TrackerConfig};
use crate::error::{Error, Result};
use crate::numerics::TokenSeq;
use crate::sen::{embed_rgb, embed_spectral, SenParams, INIT_STD};
use crate::types::{false_color, HsiCube, ResponseMaps};

/// Embedding, frozen backbone and conv head with cached template tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdanToy {
    pub sen: SenParams,
    pub backbone: ToyBackbone,
    pub head: ConvHead,
    z_rgb: TokenSeq,
    z_hs: TokenSeq,
}

impl SpdanToy {
    pub fn new(cfg: &TrackerConfig, bands: usize) -> Result<Self> {
        let sen = SenParams::new(
            cfg.param_seed,
            bands,
            cfg.embed_depth,
            cfg.token_dim,
            cfg.downsample,
            cfg.spectral_kernel,
        )?;
        let backbone = ToyBackbone::new(
            cfg.param_seed.wrapping_add(1),
            cfg.backbone_layers,
            cfg.token_dim,
            cfg.attention_heads,
            cfg.adapter_dim,
        )?;
        let head = ConvHead::new(cfg.param_seed.wrapping_add(2), cfg.token_dim, cfg.head_width, INIT_STD)?;
        Ok(Self::assemble(sen, backbone, head))
    }

    fn assemble(sen: SenParams, backbone: ToyBackbone, head: ConvHead) -> Self {
        let dim = sen.dim();
        Self {
            sen,
            backbone,
            head,
            z_rgb: TokenSeq::zeros(0, dim),
            z_hs: TokenSeq::zeros(0, dim),
        }
    }

    /// Caches template tokens. `rgb` lists the false-color bands of `template`.
    pub fn set_template(&mut self, template: &HsiCube, rgb: [usize; 3]) -> Result<()> {
        self.z_hs = embed_spectral(template, &self.sen)?;
        self.z_rgb = embed_rgb(&false_color(template, rgb)?, &self.sen)?;
        Ok(())
    }

    pub fn respond(&self, search: &HsiCube, rgb: [usize; 3]) -> Result<ResponseMaps> {
        if self.z_hs.n_tokens() == 0 {
            return Err(Error::Uninitialized);
        }
        let x_hs = embed_spectral(search, &self.sen)?;
        let x_rgb = embed_rgb(&false_color(search, rgb)?, &self.sen)?;
        let out = self.backbone.forward(&self.z_rgb, &self.z_hs, &x_rgb, &x_hs)?;
        let search_tokens = out.slice(self.z_hs.n_tokens(), out.n_tokens());
        let p = self.sen.patch();
        self.head.forward(&search_tokens, search.height() / p, search.width() / p)
    }

    pub fn to_archive(&self) -> TensorArchive {
        let mut a = self.sen.to_archive();
        self.backbone.write_archive(&mut a);
        self.head.write_archive(&mut a);
        a
    }

    pub fn from_archive(a: &TensorArchive) -> Result<Self> {
        Ok(Self::assemble(
            SenParams::from_archive(a)?,
            ToyBackbone::from_archive(a)?,
            ConvHead::from_archive(a)?,
        ))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_archive().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_archive(&TensorArchive::load(path)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResponseGenerator {
    SpdanToy(Box<SpdanToy>),
    SpectralCorrelation(SpectralCorrelation),
}

impl ResponseGenerator {
    /// Builds the generator named by `cfg` around a template patch. `rgb`
    /// indexes the false-color bands within the patch.
    pub fn build(cfg: &TrackerConfig, template: &HsiCube, rgb: [usize; 3]) -> Result<Self> {
        match cfg.response_generator {
            GeneratorKind::SpdanToy => {
                let mut toy = SpdanToy::new(cfg, template.bands())?;
                toy.set_template(template, rgb)?;
                Ok(Self::SpdanToy(Box::new(toy)))
            }
            GeneratorKind::SpectralCorrelation => {
                Ok(Self::SpectralCorrelation(SpectralCorrelation::new(template, cfg.downsample)?))
            }
        }
    }

    pub fn kind(&self) -> GeneratorKind {
        match self {
            Self::SpdanToy(_) => GeneratorKind::SpdanToy,
            Self::SpectralCorrelation(_) => GeneratorKind::SpectralCorrelation,
        }
    }

    /// `size_hint` is the expected normalized box size; only the
    /// correlation generator uses it, the conv head predicts its own.
    pub fn respond(&self, search: &HsiCube, rgb: [usize; 3], size_hint: [f64; 2]) -> Result<ResponseMaps> {
        match self {
            Self::SpdanToy(toy) => toy.respond(search, rgb),
            Self::SpectralCorrelation(c) => c.respond(search, size_hint),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(c: usize, h: usize, w: usize) -> HsiCube {
        let data = (0..c * h * w)
            .map(|i| {
                let (b, p) = (i / (h * w), i % (h * w));
                0.3 + 0.2 * ((b as f32 * 0.7 + p as f32 * 0.05).sin())
            })
            .collect();
        HsiCube::new(c, h, w, data).unwrap()
    }

    #[test]
    fn generators_share_geometry() {
        let mut cfg = TrackerConfig::desk_scale();
        cfg.backbone_layers = 1;
        let template = ramp(6, 16, 16);
        let search = ramp(6, 64, 64);
        let mut shapes = Vec::new();
        for kind in [GeneratorKind::SpdanToy, GeneratorKind::SpectralCorrelation] {
            cfg.response_generator = kind;
            let g = ResponseGenerator::build(&cfg, &template, [0, 2, 4]).unwrap();
            assert_eq!(g.kind(), kind);
            let m = g.respond(&search, [0, 2, 4], [0.25, 0.25]).unwrap();
            assert!(m.cm().iter().all(|v| (0.0..=1.0).contains(v)));
            shapes.push((m.rows(), m.cols()));
        }
        assert_eq!(shapes[0], shapes[1]);
        assert_eq!(shapes[0], (8, 8));
    }

    #[test]
    fn toy_checkpoint_round_trip() {
        let mut cfg = TrackerConfig::desk_scale();
        cfg.backbone_layers = 1;
        let mut toy = SpdanToy::new(&cfg, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.bin");
        toy.save(&path).unwrap();
        let mut back = SpdanToy::load(&path).unwrap();
        let template = ramp(5, 16, 16);
        toy.set_template(&template, [0, 1, 2]).unwrap();
        back.set_template(&template, [0, 1, 2]).unwrap();
        assert_eq!(back, toy);
        let search = ramp(5, 32, 32);
        assert_eq!(toy.respond(&search, [0, 1, 2]).unwrap(), back.respond(&search, [0, 1, 2]).unwrap());
    }

    #[test]
    fn toy_requires_template() {
        let toy = SpdanToy::new(&TrackerConfig::desk_scale(), 4).unwrap();
        assert!(matches!(toy.respond(&ramp(4, 32, 32), [0, 1, 2]), Err(Error::Uninitialized)));
    }
}
