//! Distractor-aware rectification: score the classification map, fall back
//! to the motion filter when the score is low, and reject confident jumps
//! that coincide with a falling score trend.

pub mod confidence;
pub mod kalman;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

pub use confidence::decision_confidence;
pub use kalman::{box_to_obs, kalman_predict, kalman_update, obs_to_box, KalmanParams, MotionState};

use crate::config::TrackerConfig;
use crate::error::{Error, Result};
use crate::numerics::linalg::diag;
use crate::types::BBox;

/// Recent per-frame confidence values, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct DcHistory {
    entries: VecDeque<(usize, f64)>,
    capacity: usize,
}

impl DcHistory {
    pub fn new(capacity: usize) -> Self {
        Self {
            entries: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
        }
    }

    pub fn push(&mut self, frame: usize, dc: f64) -> Result<()> {
        if let Some(&(last, _)) = self.entries.back() {
            if frame <= last {
                return Err(Error::InvalidInput(format!(
                    "confidence history is at frame {last}, got {frame}"
                )));
            }
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((frame, dc));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(usize, f64)> {
        self.entries.iter()
    }

    /// Means of the last `w` values and of the `w` before them, or `None`
    /// while fewer than `2w` values are held.
    pub fn window_means(&self, w: usize) -> Option<(f64, f64)> {
        let n = self.entries.len();
        if w == 0 || n < 2 * w {
            return None;
        }
        let mean = |range: std::ops::Range<usize>| range.map(|i| self.entries[i].1).sum::<f64>() / w as f64;
        Some((mean(n - 2 * w..n - w), mean(n - w..n)))
    }

    /// True when the recent window mean is below the preceding one.
    pub fn is_falling(&self, w: usize) -> bool {
        matches!(self.window_means(w), Some((prev, cur)) if cur < prev)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Model,
    Kalman,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::Model => "model",
            Source::Kalman => "kalman",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DamStep {
    pub bbox: BBox,
    pub source: Source,
    pub dc: f64,
    /// Center distance between the raw box and the previous output.
    pub offset: f64,
    /// Set when a confident jump was rejected.
    pub rectified: bool,
}

/// Thresholds the step logic reads from the tracker config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DamSettings {
    pub dc_threshold: f64,
    pub offset_threshold: f64,
    pub window: usize,
    pub rectify: bool,
    pub mean_denominator: bool,
}

impl From<&TrackerConfig> for DamSettings {
    fn from(cfg: &TrackerConfig) -> Self {
        Self {
            dc_threshold: cfg.dc_threshold,
            offset_threshold: cfg.offset_threshold,
            window: cfg.rectify_window,
            rectify: cfg.rectify,
            mean_denominator: cfg.dc_use_mean_denominator,
        }
    }
}

/// Per-sequence filter state plus the confidence history.
#[derive(Debug, Clone)]
pub struct Dam {
    params: KalmanParams,
    settings: DamSettings,
    state: Option<MotionState>,
    history: DcHistory,
    prev_box: Option<BBox>,
}

impl Dam {
    pub fn new(cfg: &TrackerConfig) -> Self {
        Self {
            params: KalmanParams::new(&cfg.kalman),
            settings: cfg.into(),
            state: None,
            history: DcHistory::new(2 * cfg.rectify_window),
            prev_box: None,
        }
    }

    pub fn with_params(params: KalmanParams, settings: DamSettings) -> Self {
        Self {
            params,
            settings,
            state: None,
            history: DcHistory::new(2 * settings.window),
            prev_box: None,
        }
    }

    /// Seeds the filter at `init` with zero rates and covariance `scale * Q`.
    pub fn init(&mut self, init: &BBox, scale: f64) -> Result<()> {
        self.state = Some(MotionState::from_box(init, &self.params.q * scale)?);
        self.history = DcHistory::new(2 * self.settings.window);
        self.prev_box = Some(*init);
        Ok(())
    }

    pub fn init_from_config(&mut self, init: &BBox, cfg: &TrackerConfig) -> Result<()> {
        self.params.q = diag(&cfg.kalman.process);
        self.init(init, cfg.kalman.initial_scale)
    }

    pub fn state(&self) -> Option<&MotionState> {
        self.state.as_ref()
    }

    pub fn history(&self) -> &DcHistory {
        &self.history
    }

    pub fn params(&self) -> &KalmanParams {
        &self.params
    }

    pub fn step(&mut self, frame: usize, raw: &BBox, cm: &[f64]) -> Result<DamStep> {
        dam_step(self, frame, raw, cm)
    }
}

/// One frame: predict, score, then pick between the raw box and the
/// prediction. Only the model path feeds the measurement update.
pub fn dam_step(dam: &mut Dam, frame: usize, raw: &BBox, cm: &[f64]) -> Result<DamStep> {
    let (state, prev) = match (&dam.state, dam.prev_box) {
        (Some(s), Some(p)) => (s, p),
        _ => return Err(Error::Uninitialized),
    };
    raw.validate()?;
    let predicted = kalman_predict(state, &dam.params);
    let dc = decision_confidence(cm, dam.settings.mean_denominator);
    dam.history.push(frame, dc)?;
    let (rc, pc) = (raw.center(), prev.center());
    let offset = (rc.0 - pc.0).hypot(rc.1 - pc.1);
    let s = &dam.settings;
    let (bbox, source, rectified, next) = if dc < s.dc_threshold {
        (predicted.to_box(), Source::Kalman, false, predicted)
    } else if s.rectify && offset > s.offset_threshold && dam.history.is_falling(s.window) {
        (predicted.to_box(), Source::Kalman, true, predicted)
    } else {
        let updated = kalman_update(&predicted, &box_to_obs(raw)?, &dam.params)?;
        (*raw, Source::Model, false, updated)
    };
    dam.state = Some(next);
    dam.prev_box = Some(bbox);
    Ok(DamStep {
        bbox,
        source,
        dc,
        offset,
        rectified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn peaked(peak: f64, n: usize) -> Vec<f64> {
        let mut cm = vec![0.0; n];
        cm[0] = peak;
        cm
    }

    /// Map whose confidence is exactly `dc` (one peak of 1, rest equal at
    /// a level chosen so the energy is `1/dc`).
    fn map_with_dc(dc: f64) -> Vec<f64> {
        let n = 65;
        let level = ((1.0 / dc - 1.0) / (n - 1) as f64).sqrt();
        let mut cm = vec![level; n];
        cm[0] = 1.0;
        cm.push(0.0);
        cm
    }

    fn ready_dam() -> Dam {
        let cfg = TrackerConfig::desk_scale();
        let mut dam = Dam::new(&cfg);
        dam.init_from_config(&BBox::new(40.0, 40.0, 16.0, 16.0), &cfg).unwrap();
        dam
    }

    #[test]
    fn helper_hits_requested_confidence() {
        for dc in [0.05, 0.3, 0.5] {
            assert!((decision_confidence(&map_with_dc(dc), false) - dc).abs() < 1e-12);
        }
    }

    #[test]
    fn low_confidence_uses_prediction() {
        let mut dam = ready_dam();
        let before = dam.state().unwrap().clone();
        let step = dam.step(1, &BBox::new(41.0, 40.0, 16.0, 16.0), &map_with_dc(0.05)).unwrap();
        assert_eq!(step.source, Source::Kalman);
        assert!(!step.rectified);
        assert_eq!(dam.state().unwrap().s, kalman_predict(&before, dam.params()).s);
    }

    #[test]
    fn confident_small_offset_uses_model() {
        let mut dam = ready_dam();
        let raw = BBox::new(43.0, 40.0, 16.0, 16.0);
        let step = dam.step(1, &raw, &peaked(1.0, 64)).unwrap();
        assert_eq!(step.source, Source::Model);
        assert_eq!(step.bbox, raw);
        assert!((step.offset - 3.0).abs() < 1e-12);
        assert!(dam.state().unwrap().s[0] > 48.0);
    }

    #[test]
    fn confident_jump_with_falling_trend_is_rectified() {
        let mut dam = ready_dam();
        let still = BBox::new(40.0, 40.0, 16.0, 16.0);
        for f in 1..=5 {
            dam.step(f, &still, &map_with_dc(0.5)).unwrap();
        }
        for f in 6..=9 {
            dam.step(f, &still, &map_with_dc(0.3)).unwrap();
        }
        let jump = BBox::new(70.0, 40.0, 16.0, 16.0);
        let step = dam.step(10, &jump, &map_with_dc(0.3)).unwrap();
        assert_eq!(step.source, Source::Kalman);
        assert!(step.rectified);
        assert!((step.offset - 30.0).abs() < 1e-9);
    }

    #[test]
    fn jump_without_falling_trend_is_accepted() {
        let mut dam = ready_dam();
        let still = BBox::new(40.0, 40.0, 16.0, 16.0);
        for f in 1..=9 {
            dam.step(f, &still, &map_with_dc(0.4)).unwrap();
        }
        let step = dam.step(10, &BBox::new(70.0, 40.0, 16.0, 16.0), &map_with_dc(0.4)).unwrap();
        assert_eq!(step.source, Source::Model);
    }

    #[test]
    fn rectify_switch_disables_rejection() {
        let mut cfg = TrackerConfig::desk_scale();
        cfg.rectify = false;
        let mut dam = Dam::new(&cfg);
        dam.init_from_config(&BBox::new(40.0, 40.0, 16.0, 16.0), &cfg).unwrap();
        let still = BBox::new(40.0, 40.0, 16.0, 16.0);
        for f in 1..=5 {
            dam.step(f, &still, &map_with_dc(0.5)).unwrap();
        }
        for f in 6..=9 {
            dam.step(f, &still, &map_with_dc(0.3)).unwrap();
        }
        let step = dam.step(10, &BBox::new(70.0, 40.0, 16.0, 16.0), &map_with_dc(0.3)).unwrap();
        assert_eq!(step.source, Source::Model);
    }

    #[test]
    fn uninitialized_errors() {
        let mut dam = Dam::new(&TrackerConfig::desk_scale());
        assert!(matches!(
            dam.step(1, &BBox::new(0.0, 0.0, 1.0, 1.0), &[1.0, 0.0]),
            Err(Error::Uninitialized)
        ));
    }

    #[test]
    fn history_window_means() {
        let mut h = DcHistory::new(4);
        for (f, v) in [(1, 0.9), (2, 0.7), (3, 0.4)] {
            h.push(f, v).unwrap();
        }
        assert_eq!(h.window_means(2), None);
        h.push(4, 0.2).unwrap();
        assert_eq!(h.window_means(2), Some((0.8, 0.30000000000000004)));
        assert!(h.is_falling(2));
        h.push(5, 0.9).unwrap();
        assert_eq!(h.len(), 4);
        assert!(h.push(5, 0.1).is_err());
    }

    #[test]
    fn occluded_coast_is_linear() {
        let mut dam = ready_dam();
        let mut truth = BBox::new(40.0, 40.0, 16.0, 16.0);
        for f in 1..=20 {
            truth.x += 2.0;
            dam.step(f, &truth, &peaked(1.0, 64)).unwrap();
        }
        for f in 21..=30 {
            truth.x += 2.0;
            let step = dam.step(f, &BBox::new(0.0, 0.0, 5.0, 5.0), &[0.5; 64]).unwrap();
            assert_eq!(step.source, Source::Kalman);
            let (a, b) = (step.bbox.center(), truth.center());
            assert!((a.0 - b.0).hypot(a.1 - b.1) < 1.0, "frame {f}: {a:?} vs {b:?}");
        }
    }
}
