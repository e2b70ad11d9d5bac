//! Overlap and center-error metrics, success/precision curves and
//! attribute-sliced aggregates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Attribute, BBox};

pub const SUCCESS_SAMPLES: usize = 21;
pub const PRECISION_MAX_PX: usize = 50;
pub const DP_THRESHOLD_PX: usize = 20;

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    // (x + w) - x can lose an ulp, which would drop a perfect match below t = 1
    if a == b && a.area() > 0.0 {
        return 1.0;
    }
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Center location error in pixels.
pub fn cle(a: &BBox, b: &BBox) -> f64 {
    let (ac, bc) = (a.center(), b.center());
    (ac.0 - bc.0).hypot(ac.1 - bc.1)
}

/// IoU thresholds `0, 0.05, ..., 1`.
pub fn success_thresholds() -> Vec<f64> {
    (0..SUCCESS_SAMPLES).map(|k| k as f64 / (SUCCESS_SAMPLES - 1) as f64).collect()
}

/// `(threshold, rate)` pairs.
pub type Curve = Vec<(f64, f64)>;

/// Fraction of frames with IoU >= t at each threshold; AUC is the mean.
pub fn success_auc(ious: &[f64]) -> Result<(Curve, f64)> {
    if ious.is_empty() {
        return Err(Error::InvalidInput("success curve needs at least one frame".into()));
    }
    let mut sorted = ious.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let curve: Curve = success_thresholds()
        .into_iter()
        .map(|t| {
            let below = sorted.partition_point(|&v| v < t);
            (t, (sorted.len() - below) as f64 / n)
        })
        .collect();
    let auc = curve.iter().map(|(_, r)| r).sum::<f64>() / curve.len() as f64;
    Ok((curve, auc))
}

/// Fraction of frames with CLE <= θ for θ in `0..=50` px; also returns the
/// rate at 20 px.
pub fn precision_dp(cles: &[f64]) -> Result<(Curve, f64)> {
    if cles.is_empty() {
        return Err(Error::InvalidInput("precision curve needs at least one frame".into()));
    }
    let mut sorted = cles.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let curve: Curve = (0..=PRECISION_MAX_PX)
        .map(|px| {
            let theta = px as f64;
            (theta, sorted.partition_point(|&v| v <= theta) as f64 / n)
        })
        .collect();
    let dp = curve[DP_THRESHOLD_PX].1;
    Ok((curve, dp))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub ious: Vec<f64>,
    pub cles: Vec<f64>,
    pub success: Curve,
    pub precision: Curve,
    pub auc: f64,
    pub dp20: f64,
}

impl EvalResult {
    pub fn frames(&self) -> usize {
        self.ious.len()
    }
}

/// Scores predictions against ground truth, frame by frame.
pub fn evaluate(pred: &[BBox], gt: &[BBox]) -> Result<EvalResult> {
    if pred.len() != gt.len() {
        return Err(Error::Shape(format!("{} predictions for {} annotations", pred.len(), gt.len())));
    }
    let ious: Vec<f64> = pred.iter().zip(gt).map(|(p, g)| iou(p, g)).collect();
    let cles: Vec<f64> = pred.iter().zip(gt).map(|(p, g)| cle(p, g)).collect();
    let (success, auc) = success_auc(&ious)?;
    let (precision, dp20) = precision_dp(&cles)?;
    Ok(EvalResult {
        ious,
        cles,
        success,
        precision,
        auc,
        dp20,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributeScore {
    pub sequences: usize,
    pub frames: usize,
    pub auc: f64,
    pub dp20: f64,
}

/// Pools the frames of every sequence carrying an attribute. Attributes no
/// sequence carries are omitted.
pub fn attribute_report<'a, I>(results: I) -> Result<BTreeMap<Attribute, AttributeScore>>
where
    I: IntoIterator<Item = (&'a EvalResult, &'a std::collections::BTreeSet<Attribute>)>,
{
    let mut pooled: BTreeMap<Attribute, (usize, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (res, attrs) in results {
        for &a in attrs {
            let entry = pooled.entry(a).or_default();
            entry.0 += 1;
            entry.1.extend_from_slice(&res.ious);
            entry.2.extend_from_slice(&res.cles);
        }
    }
    pooled
        .into_iter()
        .map(|(a, (sequences, ious, cles))| {
            let (_, auc) = success_auc(&ious)?;
            let (_, dp20) = precision_dp(&cles)?;
            Ok((
                a,
                AttributeScore {
                    sequences,
                    frames: ious.len(),
                    auc,
                    dp20,
                },
            ))
        })
        .collect()
}

/// Frame-weighted AUC and DP_20 over several results.
pub fn pooled_scores<'a>(results: impl IntoIterator<Item = &'a EvalResult>) -> Result<(f64, f64)> {
    let (mut ious, mut cles) = (Vec::new(), Vec::new());
    for r in results {
        ious.extend_from_slice(&r.ious);
        cles.extend_from_slice(&r.cles);
    }
    Ok((success_auc(&ious)?.1, precision_dp(&cles)?.1))
}
