//! Peak-to-energy confidence of a classification map.

/// `|max - min|^2 / sum((cm_i - min)^2)`. With `mean_denominator` the sum is
/// replaced by its mean (the classical APCE form). A constant map scores 0.
pub fn decision_confidence(cm: &[f64], mean_denominator: bool) -> f64 {
    if cm.is_empty() {
        return 0.0;
    }
    let (min, max) = cm
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let mut energy: f64 = cm.iter().map(|v| (v - min) * (v - min)).sum();
    if mean_denominator {
        energy /= cm.len() as f64;
    }
    if energy <= 0.0 {
        return 0.0;
    }
    (max - min) * (max - min) / energy
}
