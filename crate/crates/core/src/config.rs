//! Tracker configuration. Every field has a default so partial JSON files
//! work; [`TrackerConfig::default`] carries the reference constants and
//! [`TrackerConfig::desk_scale`] the reduced geometry used for the synthetic
//! suite.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    SpdanToy,
    SpectralCorrelation,
}

impl GeneratorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            GeneratorKind::SpdanToy => "spdan_toy",
            GeneratorKind::SpectralCorrelation => "spectral_correlation",
        }
    }
}

impl std::str::FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spdan_toy" => Ok(GeneratorKind::SpdanToy),
            "spectral_correlation" => Ok(GeneratorKind::SpectralCorrelation),
            other => Err(Error::InvalidInput(format!("unknown response generator {other:?}"))),
        }
    }
}

/// Kalman noise model. Diagonals, in pixel units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KalmanNoise {
    /// Process noise over `[x, y, a, r, vx, vy, va]`.
    pub process: [f64; 7],
    /// Observation noise over `[x, y, a, r]`.
    pub observation: [f64; 4],
    /// Initial covariance is `initial_scale * Q`.
    pub initial_scale: f64,
}

impl Default for KalmanNoise {
    fn default() -> Self {
        Self {
            process: [1.0, 1.0, 1.0, 1e-4, 10.0, 10.0, 1.0],
            observation: [1.0, 1.0, 10.0, 1e-2],
            initial_scale: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Decision-confidence threshold below which the model output is distrusted.
    pub dc_threshold: f64,
    /// Center jump (px) that triggers the confident-error check.
    pub offset_threshold: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Output depth of the spectral 3-D convolution.
    pub embed_depth: usize,
    pub token_dim: usize,
    /// Downsampling factor between search pixels and response cells.
    pub downsample: usize,
    /// Moving-average window (frames) for the confidence trend.
    pub rectify_window: usize,
    pub template_size: usize,
    pub search_size: usize,
    /// Search-window side as a multiple of the template side.
    pub search_scale: f64,
    pub response_generator: GeneratorKind,
    pub use_dam: bool,
    pub rectify: bool,
    /// Track on the false-color triplet only.
    pub rgb_only: bool,
    pub dc_use_mean_denominator: bool,
    /// 0-based; overrides the sequence's own triplet when set.
    pub false_color_bands: Option<[usize; 3]>,
    pub kalman: KalmanNoise,
    /// Seed for the frozen random parameters of the toy network.
    pub param_seed: u64,
    pub backbone_layers: usize,
    pub attention_heads: usize,
    pub adapter_dim: usize,
    pub head_width: usize,
    /// Spectral extent of the 3-D kernel.
    pub spectral_kernel: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            dc_threshold: 0.1,
            offset_threshold: 20.0,
            lambda1: 2.0,
            lambda2: 5.0,
            embed_depth: 16,
            token_dim: 768,
            downsample: 16,
            rectify_window: 5,
            template_size: 128,
            search_size: 256,
            search_scale: 4.0,
            response_generator: GeneratorKind::SpectralCorrelation,
            use_dam: true,
            rectify: true,
            rgb_only: false,
            dc_use_mean_denominator: false,
            false_color_bands: None,
            kalman: KalmanNoise::default(),
            param_seed: 0,
            backbone_layers: 12,
            attention_heads: 12,
            adapter_dim: 8,
            head_width: 64,
            spectral_kernel: 7,
        }
    }
}

impl TrackerConfig {
    /// Reduced geometry sized for 128x96 synthetic frames.
    pub fn desk_scale() -> Self {
        Self {
            embed_depth: 4,
            token_dim: 32,
            downsample: 8,
            template_size: 16,
            search_size: 64,
            backbone_layers: 2,
            attention_heads: 4,
            adapter_dim: 8,
            head_width: 16,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if !(self.dc_threshold > 0.0) {
            return bad(format!("dc_threshold must be > 0, got {}", self.dc_threshold));
        }
        if !(self.offset_threshold > 0.0) {
            return bad(format!("offset_threshold must be > 0, got {}", self.offset_threshold));
        }
        if self.rectify_window < 2 {
            return bad(format!("rectify_window must be >= 2, got {}", self.rectify_window));
        }
        if self.downsample == 0 || !self.search_size.is_multiple_of(self.downsample) {
            return bad(format!(
                "downsample {} must divide search_size {}",
                self.downsample, self.search_size
            ));
        }
        if !self.template_size.is_multiple_of(self.downsample) {
            return bad(format!(
                "downsample {} must divide template_size {}",
                self.downsample, self.template_size
            ));
        }
        if self.embed_depth == 0 || self.token_dim == 0 || self.spectral_kernel == 0 {
            return bad("embed_depth, token_dim and spectral_kernel must be positive".into());
        }
        if self.attention_heads == 0 || !self.token_dim.is_multiple_of(self.attention_heads) {
            return bad(format!(
                "token_dim {} not divisible by attention_heads {}",
                self.token_dim, self.attention_heads
            ));
        }
        if self.backbone_layers == 0 || self.adapter_dim == 0 || self.head_width == 0 {
            return bad("backbone_layers, adapter_dim and head_width must be positive".into());
        }
        if !(self.search_scale > 0.0) {
            return bad(format!("search_scale must be > 0, got {}", self.search_scale));
        }
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return bad("loss weights must be non-negative".into());
        }
        Ok(())
    }

    /// False-color triplet for a sequence, honoring the override.
    pub fn false_color_for(&self, sequence_bands: [usize; 3]) -> [usize; 3] {
        self.false_color_bands.unwrap_or(sequence_bands)
    }
}

/// Parses a config file body. An optional `"preset": "reference" | "desk"` key
/// picks the base; every other key overrides a field of that base.
pub fn parse_config(text: &str) -> std::result::Result<TrackerConfig, String> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let serde_json::Value::Object(mut map) = value else {
        return Err("config must be a JSON object".into());
    };
    let base = match map.remove("preset") {
        None => TrackerConfig::default(),
        Some(serde_json::Value::String(p)) if p == "reference" => TrackerConfig::default(),
        Some(serde_json::Value::String(p)) if p == "desk" => TrackerConfig::desk_scale(),
        Some(other) => return Err(format!("unknown preset {other}")),
    };
    let serde_json::Value::Object(mut merged) = serde_json::to_value(&base).map_err(|e| e.to_string())? else {
        unreachable!("config serializes to an object");
    };
    for (k, v) in map {
        if !merged.contains_key(&k) {
            return Err(format!("unknown config field {k:?}"));
        }
        if k == "kalman" {
            // nested partial override
            let serde_json::Value::Object(inner) = v else {
                return Err("kalman must be an object".into());
            };
            let slot = merged.get_mut("kalman").and_then(|s| s.as_object_mut()).expect("kalman object");
            for (ik, iv) in inner {
                if !slot.contains_key(&ik) {
                    return Err(format!("unknown kalman field {ik:?}"));
                }
                slot.insert(ik, iv);
            }
        } else {
            merged.insert(k, v);
        }
    }
    let cfg: TrackerConfig = serde_json::from_value(serde_json::Value::Object(merged)).map_err(|e| e.to_string())?;
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_defaults() {
        let c = TrackerConfig::default();
        assert_eq!(c.dc_threshold, 0.1);
        assert_eq!(c.offset_threshold, 20.0);
        assert_eq!((c.lambda1, c.lambda2), (2.0, 5.0));
        assert_eq!(c.embed_depth, 16);
        assert_eq!(c.token_dim, 768);
        assert_eq!(c.downsample, 16);
        assert_eq!(c.rectify_window, 5);
        c.validate().unwrap();
        TrackerConfig::desk_scale().validate().unwrap();
    }

    #[test]
    fn partial_json_overrides_preset() {
        let c = parse_config(r#"{"preset":"desk","dc_threshold":0.2,"kalman":{"initial_scale":3.0}}"#).unwrap();
        assert_eq!(c.dc_threshold, 0.2);
        assert_eq!(c.search_size, 64);
        assert_eq!(c.kalman.initial_scale, 3.0);
        assert_eq!(c.kalman.process, KalmanNoise::default().process);
    }

    #[test]
    fn empty_json_is_reference_config() {
        assert_eq!(parse_config("{}").unwrap(), TrackerConfig::default());
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(parse_config(r#"{"nope":1}"#).is_err());
        assert!(parse_config(r#"{"dc_threshold":0}"#).is_err());
        assert!(parse_config(r#"{"rectify_window":1}"#).is_err());
        assert!(parse_config(r#"{"downsample":7}"#).is_err());
        assert!(parse_config("[1]").is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = TrackerConfig::desk_scale();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(parse_config(&text).unwrap(), c);
    }
}
