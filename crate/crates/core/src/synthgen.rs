//! Synthetic camouflage sequences with exact ground truth.
//!
//! A scene is a smooth spectral background, an optional decoy that copies
//! the object on the false-color bands but not elsewhere, the object itself,
//! and occluders that appear only while their event is active. Layers are
//! composited by exact pixel-area coverage so edges are soft.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Attribute, BBox, HsiCube, SequenceRecord, DEFAULT_FALSE_COLOR_BANDS};

pub const DESK_BANDS: usize = 25;
pub const DESK_WIDTH: usize = 128;
pub const DESK_HEIGHT: usize = 96;
/// Background counts as clutter when it is this close to the object on the
/// false-color bands.
pub const CLUTTER_EPS: f64 = 0.02;
/// Minimum full-spectrum distance between an object and its decoy.
pub const MIN_DECOY_DISTANCE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpectralSignature {
    values: Vec<f32>,
}

impl SpectralSignature {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput("signature values must be finite and non-negative".into()));
        }
        Ok(Self { values })
    }

    /// `offset + sum(amp * exp(-(b - center)^2 / (2 width^2)))`, clamped to [0, 1].
    pub fn from_gaussians(bands: usize, offset: f64, peaks: &[(f64, f64, f64)]) -> Self {
        let values = (0..bands)
            .map(|b| {
                let v = offset + bump(b as f64, peaks);
                v.clamp(0.0, 1.0) as f32
            })
            .collect();
        Self { values }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn bands(&self) -> usize {
        self.values.len()
    }

    /// Adds `peaks` everywhere, then restores the original values on the
    /// false-color bands.
    pub fn camouflage_twin(&self, fc: [usize; 3], peaks: &[(f64, f64, f64)]) -> Self {
        let mut values: Vec<f32> = self
            .values
            .iter()
            .enumerate()
            .map(|(b, &v)| (v as f64 + bump(b as f64, peaks)).clamp(0.0, 1.0) as f32)
            .collect();
        for &b in &fc {
            values[b] = self.values[b];
        }
        Self { values }
    }

    /// Reflection about the spectral mean: perfectly anti-correlated shape
    /// unless clamping at zero kicks in.
    pub fn mirrored(&self) -> Self {
        let mean = self.values.iter().map(|&v| v as f64).sum::<f64>() / self.values.len() as f64;
        Self {
            values: self.values.iter().map(|&v| (2.0 * mean - v as f64).max(0.0) as f32).collect(),
        }
    }

    pub fn blend(&self, other: &Self, t: f64) -> Self {
        Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| (a as f64 * (1.0 - t) + b as f64 * t) as f32)
                .collect(),
        }
    }

    pub fn l2(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs_diff_on(&self, other: &Self, bands: &[usize]) -> f64 {
        bands
            .iter()
            .map(|&b| (self.values[b] as f64 - other.values[b] as f64).abs())
            .fold(0.0, f64::max)
    }
}

fn bump(x: f64, peaks: &[(f64, f64, f64)]) -> f64 {
    peaks
        .iter()
        .map(|&(c, w, a)| a * (-(x - c) * (x - c) / (2.0 * w * w)).exp())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Rect,
    Ellipse,
}

/// Box center at a given frame; paths interpolate linearly between
/// waypoints and hold their end values outside them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub frame: usize,
    pub cx: f64,
    pub cy: f64,
}

impl Waypoint {
    pub const fn new(frame: usize, cx: f64, cy: f64) -> Self {
        Self { frame, cx, cy }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Body {
    pub shape: Shape,
    pub w: f64,
    pub h: f64,
    pub signature: SpectralSignature,
    /// When set, the signature blends linearly into this by the last frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_signature: Option<SpectralSignature>,
    pub path: Vec<Waypoint>,
}

impl Body {
    pub fn center_at(&self, frame: usize) -> (f64, f64) {
        let p = &self.path;
        if frame <= p[0].frame {
            return (p[0].cx, p[0].cy);
        }
        for seg in p.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            if frame <= b.frame {
                let t = (frame - a.frame) as f64 / (b.frame - a.frame) as f64;
                return (a.cx + t * (b.cx - a.cx), a.cy + t * (b.cy - a.cy));
            }
        }
        let last = p[p.len() - 1];
        (last.cx, last.cy)
    }

    pub fn box_at(&self, frame: usize) -> BBox {
        let (cx, cy) = self.center_at(frame);
        BBox::from_center(cx, cy, self.w, self.h)
    }

    pub fn signature_at(&self, frame: usize, frames: usize) -> SpectralSignature {
        match &self.end_signature {
            Some(end) if frames > 1 => self.signature.blend(end, frame as f64 / (frames - 1) as f64),
            _ => self.signature.clone(),
        }
    }

    pub fn moves(&self) -> bool {
        self.path.windows(2).any(|w| w[0].cx != w[1].cx || w[0].cy != w[1].cy)
    }

    fn coverage(&self, frame: usize, row: usize, col: usize) -> f64 {
        shape_coverage(self.shape, &self.box_at(frame), row, col)
    }
}

/// Fraction of pixel `(row, col)` covered by the shape inscribed in `b`.
pub fn shape_coverage(shape: Shape, b: &BBox, row: usize, col: usize) -> f64 {
    let (px, py) = (col as f64, row as f64);
    match shape {
        Shape::Rect => {
            let ox = ((px + 1.0).min(b.x + b.w) - px.max(b.x)).max(0.0);
            let oy = ((py + 1.0).min(b.y + b.h) - py.max(b.y)).max(0.0);
            ox * oy
        }
        Shape::Ellipse => {
            const N: usize = 4;
            let (cx, cy) = b.center();
            let (rx, ry) = (b.w / 2.0, b.h / 2.0);
            let mut inside = 0;
            for i in 0..N {
                for j in 0..N {
                    let x = px + (j as f64 + 0.5) / N as f64;
                    let y = py + (i as f64 + 0.5) / N as f64;
                    if ((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2) <= 1.0 {
                        inside += 1;
                    }
                }
            }
            inside as f64 / (N * N) as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occlusion {
    pub start: usize,
    pub duration: usize,
    pub area: BBox,
    pub signature: SpectralSignature,
}

impl Occlusion {
    pub fn active(&self, frame: usize) -> bool {
        frame >= self.start && frame < self.start + self.duration
    }
}

/// Background reflectance: `signature * (1 + gradient * (col/W - 1/2))`
/// with a band-dependent tilt along the rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub signature: SpectralSignature,
    pub gradient: f64,
    pub tilt: f64,
}

impl Background {
    fn value(&self, band: usize, row: usize, col: usize, width: usize, height: usize) -> f64 {
        let bands = self.signature.bands();
        let u = (col as f64 + 0.5) / width as f64 - 0.5;
        let v = (row as f64 + 0.5) / height as f64 - 0.5;
        let s = if bands > 1 { band as f64 / (bands - 1) as f64 - 0.5 } else { 0.0 };
        self.signature.values[band] as f64 * (1.0 + self.gradient * u) * (1.0 + self.tilt * s * v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    pub false_color_bands: [usize; 3],
    pub background: Background,
    pub object: Body,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoy: Option<Body>,
    #[serde(default)]
    pub occlusions: Vec<Occlusion>,
    pub noise: f64,
    pub seed: u64,
    /// Bound on the per-frame annotation displacement.
    pub max_step: f64,
}

fn spec_error(spec: &ScenarioSpec, detail: impl Into<String>) -> Error {
    Error::Geometry {
        context: format!("scenario {}", spec.name),
        detail: detail.into(),
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 || self.width == 0 || self.height == 0 {
            return Err(spec_error(self, "need at least 2 frames and a non-empty frame"));
        }
        if self.bands < 3 {
            return Err(spec_error(self, "need at least 3 bands"));
        }
        if let Some(&b) = self.false_color_bands.iter().find(|&&b| b >= self.bands) {
            return Err(Error::BandOutOfRange { index: b, len: self.bands });
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(spec_error(self, format!("noise {} must be finite and >= 0", self.noise)));
        }
        let mut sigs = vec![&self.background.signature, &self.object.signature];
        sigs.extend(self.object.end_signature.iter());
        for o in &self.occlusions {
            sigs.push(&o.signature);
        }
        if let Some(d) = &self.decoy {
            sigs.push(&d.signature);
            sigs.extend(d.end_signature.iter());
        }
        if sigs.iter().any(|s| s.bands() != self.bands) {
            return Err(spec_error(self, format!("every signature needs {} bands", self.bands)));
        }
        let frame = BBox::new(0.0, 0.0, self.width as f64, self.height as f64);
        for (label, body) in std::iter::once(("object", &self.object)).chain(self.decoy.iter().map(|d| ("decoy", d))) {
            if body.path.is_empty() || body.path.windows(2).any(|w| w[1].frame <= w[0].frame) {
                return Err(spec_error(self, format!("{label} path needs strictly increasing waypoint frames")));
            }
            if !(body.w > 0.0 && body.h > 0.0) {
                return Err(spec_error(self, format!("{label} extent must be positive")));
            }
            if label == "object" {
                for f in 0..self.frames {
                    let b = body.box_at(f);
                    if b.x < 0.0 || b.y < 0.0 || b.x + b.w > frame.w || b.y + b.h > frame.h {
                        return Err(spec_error(self, format!("object leaves the frame at {f}: {b:?}")));
                    }
                }
            }
        }
        for w in self.object.path.windows(2) {
            let step = (w[1].cx - w[0].cx).hypot(w[1].cy - w[0].cy) / (w[1].frame - w[0].frame) as f64;
            if step > self.max_step + 1e-9 {
                return Err(spec_error(self, format!("path step {step:.2} exceeds max_step {}", self.max_step)));
            }
        }
        if let Some(d) = &self.decoy {
            for f in [0, self.frames - 1] {
                let (o, t) = (self.object.signature_at(f, self.frames), d.signature_at(f, self.frames));
                if o.max_abs_diff_on(&t, &self.false_color_bands) > 1e-6 {
                    return Err(spec_error(self, "decoy must match the object on the false-color bands"));
                }
                if o.l2(&t) <= MIN_DECOY_DISTANCE {
                    return Err(spec_error(self, "decoy must differ from the object in full spectrum"));
                }
            }
        }
        for o in &self.occlusions {
            if o.duration == 0 || o.start + o.duration > self.frames || !o.area.is_valid() {
                return Err(spec_error(self, format!("bad occlusion event at frame {}", o.start)));
            }
        }
        Ok(())
    }

    /// Attribute tags implied by the scene content.
    pub fn attributes(&self) -> BTreeSet<Attribute> {
        let mut out = BTreeSet::new();
        if !self.occlusions.is_empty() {
            out.insert(Attribute::OCC);
        }
        let decoy_moves = self.decoy.as_ref().is_some_and(Body::moves);
        if decoy_moves {
            out.insert(Attribute::SV);
        }
        if self.object.moves() && !decoy_moves {
            out.insert(Attribute::SC);
        }
        if max_step(&self.object, self.frames) > self.width as f64 / 8.0 {
            out.insert(Attribute::FM);
        }
        if self
            .background
            .signature
            .max_abs_diff_on(&self.object.signature, &self.false_color_bands)
            <= CLUTTER_EPS
        {
            out.insert(Attribute::BC);
        }
        out
    }
}

fn max_step(body: &Body, frames: usize) -> f64 {
    (1..frames)
        .map(|f| {
            let (a, b) = (body.center_at(f - 1), body.center_at(f));
            (b.0 - a.0).hypot(b.1 - a.1)
        })
        .fold(0.0, f64::max)
}

/// Per-pixel coverage of a body over its bounding pixel range.
fn paint(
    frame: &mut [f64],
    spec: &ScenarioSpec,
    cov_of: impl Fn(usize, usize) -> f64,
    area: &BBox,
    sig: &SpectralSignature,
) {
    let (w, h) = (spec.width, spec.height);
    let c0 = area.x.floor().max(0.0) as usize;
    let r0 = area.y.floor().max(0.0) as usize;
    let c1 = ((area.x + area.w).ceil().max(0.0) as usize).min(w);
    let r1 = ((area.y + area.h).ceil().max(0.0) as usize).min(h);
    let plane = w * h;
    for r in r0..r1 {
        for c in c0..c1 {
            let a = cov_of(r, c);
            if a <= 0.0 {
                continue;
            }
            for (b, &s) in sig.values.iter().enumerate() {
                let v = &mut frame[b * plane + r * w + c];
                *v = *v * (1.0 - a) + s as f64 * a;
            }
        }
    }
}

/// Noise-free radiance of one frame, band-major.
pub fn render_clean(spec: &ScenarioSpec, f: usize) -> Vec<f64> {
    let (w, h, c) = (spec.width, spec.height, spec.bands);
    let plane = w * h;
    let mut frame = vec![0.0; c * plane];
    for b in 0..c {
        for r in 0..h {
            for col in 0..w {
                frame[b * plane + r * w + col] = spec.background.value(b, r, col, w, h);
            }
        }
    }
    if let Some(d) = &spec.decoy {
        let sig = d.signature_at(f, spec.frames);
        paint(&mut frame, spec, |r, col| d.coverage(f, r, col), &d.box_at(f), &sig);
    }
    let o = &spec.object;
    let sig = o.signature_at(f, spec.frames);
    paint(&mut frame, spec, |r, col| o.coverage(f, r, col), &o.box_at(f), &sig);
    for occ in spec.occlusions.iter().filter(|e| e.active(f)) {
        paint(
            &mut frame,
            spec,
            |r, col| shape_coverage(Shape::Rect, &occ.area, r, col),
            &occ.area,
            &occ.signature,
        );
    }
    frame
}

/// Lazily rendered noisy frames, in order. The noise stream is sequential,
/// so frame `k` is the same however many frames are drawn.
pub struct FrameStream<'a> {
    spec: &'a ScenarioSpec,
    rng: ChaCha8Rng,
    normal: Normal<f64>,
    next: usize,
}

impl<'a> FrameStream<'a> {
    pub fn new(spec: &'a ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        let normal = Normal::new(0.0, spec.noise.max(f64::MIN_POSITIVE)).map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(Self {
            spec,
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            normal,
            next: 0,
        })
    }
}

impl Iterator for FrameStream<'_> {
    type Item = Result<HsiCube>;

    fn next(&mut self) -> Option<Self::Item> {
        let spec = self.spec;
        if self.next >= spec.frames {
            return None;
        }
        let clean = render_clean(spec, self.next);
        self.next += 1;
        let data: Vec<f32> = clean
            .into_iter()
            .map(|v| {
                let n = if spec.noise > 0.0 { self.normal.sample(&mut self.rng) } else { 0.0 };
                (v + n).max(0.0) as f32
            })
            .collect();
        Some(HsiCube::new(spec.bands, spec.height, spec.width, data))
    }
}

/// Renders every frame, adds Gaussian noise and tags attributes.
pub fn generate(spec: &ScenarioSpec) -> Result<SequenceRecord> {
    let frames = FrameStream::new(spec)?.collect::<Result<Vec<_>>>()?;
    SequenceRecord::new(spec.name.clone(), frames, annotations(spec), spec.attributes(), spec.false_color_bands)
}

pub fn annotations(spec: &ScenarioSpec) -> Vec<BBox> {
    (0..spec.frames).map(|f| spec.object.box_at(f)).collect()
}

/// Pixels fully covered by `body` and untouched by anything painted above it.
fn core_pixels(spec: &ScenarioSpec, f: usize, body: &Body, above: &[&Body]) -> Vec<(usize, usize)> {
    let b = body.box_at(f);
    let mut out = Vec::new();
    let r0 = b.y.floor().max(0.0) as usize;
    let c0 = b.x.floor().max(0.0) as usize;
    for r in r0..((b.y + b.h).ceil() as usize).min(spec.height) {
        for c in c0..((b.x + b.w).ceil() as usize).min(spec.width) {
            let covered = body.coverage(f, r, c) >= 1.0;
            let clear = above.iter().all(|a| a.coverage(f, r, c) <= 0.0)
                && spec
                    .occlusions
                    .iter()
                    .filter(|o| o.active(f))
                    .all(|o| shape_coverage(Shape::Rect, &o.area, r, c) <= 0.0);
            if covered && clear {
                out.push((r, c));
            }
        }
    }
    out
}

/// Leave-one-out 1-NN error. Equidistant neighbors vote; a split vote
/// counts half an error.
pub fn nn_error(samples: &[Vec<f64>], labels: &[bool]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let mut errors = 0.0;
    for i in 0..n {
        let mut best = f64::INFINITY;
        let mut votes = (0usize, 0usize);
        for j in (0..n).filter(|&j| j != i) {
            let d: f64 = samples[i].iter().zip(&samples[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best - 1e-12 {
                best = d;
                votes = (0, 0);
            }
            if d <= best + 1e-12 {
                if labels[j] {
                    votes.0 += 1;
                } else {
                    votes.1 += 1;
                }
            }
        }
        let own = if labels[i] { votes.0 } else { votes.1 };
        let other = if labels[i] { votes.1 } else { votes.0 };
        errors += match own.cmp(&other) {
            std::cmp::Ordering::Greater => 0.0,
            std::cmp::Ordering::Equal => 0.5,
            std::cmp::Ordering::Less => 1.0,
        };
    }
    errors / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Separability {
    pub samples: usize,
    pub false_color_error: f64,
    pub full_spectrum_error: f64,
}

/// Object-vs-decoy pixel classification error at `frame`, on the
/// false-color bands and on the full spectrum.
pub fn separability(spec: &ScenarioSpec, cube: &HsiCube, frame: usize) -> Result<Separability> {
    let decoy = spec
        .decoy
        .as_ref()
        .ok_or_else(|| spec_error(spec, "separability needs a decoy"))?;
    let obj_px = core_pixels(spec, frame, &spec.object, &[]);
    let decoy_px = core_pixels(spec, frame, decoy, &[&spec.object]);
    if obj_px.is_empty() || decoy_px.is_empty() {
        return Err(spec_error(spec, format!("object or decoy fully hidden at frame {frame}")));
    }
    let spectrum = |&(r, c): &(usize, usize)| cube.spectrum(r, c).into_iter().map(f64::from).collect::<Vec<_>>();
    let full: Vec<Vec<f64>> = obj_px.iter().chain(&decoy_px).map(spectrum).collect();
    let labels: Vec<bool> = obj_px.iter().map(|_| true).chain(decoy_px.iter().map(|_| false)).collect();
    let fc: Vec<Vec<f64>> = full
        .iter()
        .map(|s| spec.false_color_bands.iter().map(|&b| s[b]).collect())
        .collect();
    Ok(Separability {
        samples: full.len(),
        false_color_error: nn_error(&fc, &labels),
        full_spectrum_error: nn_error(&full, &labels),
    })
}

/// Largest displacement between consecutive annotations.
pub fn max_annotation_step(seq: &SequenceRecord) -> f64 {
    seq.annotations
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].center(), w[1].center());
            (b.0 - a.0).hypot(b.1 - a.1)
        })
        .fold(0.0, f64::max)
}

/// Smallest per-frame share of object pixels (coverage >= 1/2) that an
/// occluder covers by at least half, over the frames of event `idx`.
pub fn occlusion_fraction(spec: &ScenarioSpec, idx: usize) -> Result<f64> {
    let ev = spec
        .occlusions
        .get(idx)
        .ok_or_else(|| spec_error(spec, format!("no occlusion event {idx}")))?;
    let mut worst = 1.0f64;
    for f in ev.start..ev.start + ev.duration {
        let b = spec.object.box_at(f);
        let (mut total, mut hidden) = (0usize, 0usize);
        for r in (b.y.floor().max(0.0) as usize)..((b.y + b.h).ceil() as usize).min(spec.height) {
            for c in (b.x.floor().max(0.0) as usize)..((b.x + b.w).ceil() as usize).min(spec.width) {
                if spec.object.coverage(f, r, c) >= 0.5 {
                    total += 1;
                    if shape_coverage(Shape::Rect, &ev.area, r, c) >= 0.5 {
                        hidden += 1;
                    }
                }
            }
        }
        if total > 0 {
            worst = worst.min(hidden as f64 / total as f64);
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Standard suite

const OBJECT_SIDE: f64 = 16.0;

fn object_signature(bands: usize, jitter: f64) -> SpectralSignature {
    SpectralSignature::from_gaussians(bands, 0.12, &[(4.0 + jitter, 3.0, 0.55), (18.0 - jitter, 3.5, 0.45)])
}

fn decoy_peaks() -> [(f64, f64, f64); 3] {
    [(11.0, 2.0, 0.45), (21.0, 1.5, -0.4), (4.0, 1.5, -0.35)]
}

fn plain_background(bands: usize) -> SpectralSignature {
    SpectralSignature::from_gaussians(bands, 0.3, &[(12.0, 5.0, 0.25), (24.0, 3.0, -0.1)])
}

/// Box that covers the object throughout `[start, start + duration)` plus a margin.
fn occluder_for(object: &Body, start: usize, duration: usize, margin: f64) -> BBox {
    let boxes: Vec<BBox> = (start..start + duration).map(|f| object.box_at(f)).collect();
    let x0 = boxes.iter().map(|b| b.x).fold(f64::INFINITY, f64::min) - margin;
    let y0 = boxes.iter().map(|b| b.y).fold(f64::INFINITY, f64::min) - margin;
    let x1 = boxes.iter().map(|b| b.x + b.w).fold(f64::NEG_INFINITY, f64::max) + margin;
    let y1 = boxes.iter().map(|b| b.y + b.h).fold(f64::NEG_INFINITY, f64::max) + margin;
    BBox::new(x0, y0, x1 - x0, y1 - y0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Motion {
    Linear,
    Turning,
    Zigzag,
}

struct Recipe {
    name: &'static str,
    camo: bool,
    occlusion: bool,
    motion: Motion,
    noise: f64,
    clutter: bool,
    static_decoy: bool,
}

const RECIPES: [Recipe; 12] = [
    Recipe { name: "s01_plain_linear", camo: false, occlusion: false, motion: Motion::Linear, noise: 0.0, clutter: false, static_decoy: false },
    Recipe { name: "s02_plain_turning", camo: false, occlusion: false, motion: Motion::Turning, noise: 0.02, clutter: false, static_decoy: false },
    Recipe { name: "s03_plain_zigzag", camo: false, occlusion: false, motion: Motion::Zigzag, noise: 0.05, clutter: false, static_decoy: false },
    Recipe { name: "s04_occ_linear", camo: false, occlusion: true, motion: Motion::Linear, noise: 0.0, clutter: false, static_decoy: false },
    Recipe { name: "s05_occ_turning", camo: false, occlusion: true, motion: Motion::Turning, noise: 0.02, clutter: false, static_decoy: false },
    Recipe { name: "s06_occ_linear_noisy", camo: false, occlusion: true, motion: Motion::Linear, noise: 0.05, clutter: false, static_decoy: false },
    Recipe { name: "s07_camo_linear", camo: true, occlusion: false, motion: Motion::Linear, noise: 0.0, clutter: false, static_decoy: false },
    Recipe { name: "s08_camo_turning", camo: true, occlusion: false, motion: Motion::Turning, noise: 0.02, clutter: false, static_decoy: false },
    Recipe { name: "s09_camo_clutter", camo: true, occlusion: false, motion: Motion::Linear, noise: 0.05, clutter: true, static_decoy: true },
    Recipe { name: "s10_camo_occ_linear", camo: true, occlusion: true, motion: Motion::Linear, noise: 0.0, clutter: false, static_decoy: false },
    Recipe { name: "s11_camo_occ_turning", camo: true, occlusion: true, motion: Motion::Turning, noise: 0.02, clutter: false, static_decoy: false },
    Recipe { name: "s12_camo_occ_linear_noisy", camo: true, occlusion: true, motion: Motion::Linear, noise: 0.05, clutter: false, static_decoy: false },
];

fn object_path(motion: Motion, frames: usize, dx: f64, dy: f64) -> Vec<Waypoint> {
    let last = frames - 1;
    match motion {
        Motion::Linear => vec![Waypoint::new(0, 20.0 + dx, 60.0 + dy), Waypoint::new(last, 104.0 + dx, 46.0 + dy)],
        Motion::Turning => vec![
            Waypoint::new(0, 22.0 + dx, 64.0 + dy),
            Waypoint::new(last * 2 / 5, 64.0 + dx, 66.0 + dy),
            Waypoint::new(last * 3 / 4, 96.0 + dx, 40.0 + dy),
            Waypoint::new(last, 74.0 + dx, 24.0 + dy),
        ],
        Motion::Zigzag => {
            // hold for 5 frames, then jump 18 px vertically while drifting right
            let mut pts = Vec::new();
            let mut f = 0;
            let mut x = 20.0 + dx;
            let mut up = true;
            while f + 6 <= last {
                let y = if up { 40.0 + dy } else { 58.0 + dy };
                pts.push(Waypoint::new(f, x, y));
                pts.push(Waypoint::new(f + 5, x + 5.0, y));
                x += 6.0;
                f += 6;
                up = !up;
            }
            let y = if up { 40.0 + dy } else { 58.0 + dy };
            pts.push(Waypoint::new(last, x.min(110.0), y));
            pts
        }
    }
}

/// The fixed twelve-scenario suite crossing camouflage, occlusion, motion
/// pattern and noise level. Scenario geometry jitters by a few pixels with
/// `seed`; noise streams derive from it.
pub fn standard_suite(seed: u64) -> Vec<ScenarioSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bands = DESK_BANDS;
    let fc = DEFAULT_FALSE_COLOR_BANDS;
    RECIPES
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let jitter = |rng: &mut ChaCha8Rng| rand::Rng::random_range(rng, -3i32..=3) as f64;
            let (dx, dy) = (jitter(&mut rng), jitter(&mut rng));
            let sig_jitter = rand::Rng::random_range(&mut rng, -0.5..0.5);
            let frames = match r.motion {
                Motion::Turning => 120,
                _ => 90,
            };
            let signature = object_signature(bands, sig_jitter);
            let object = Body {
                shape: Shape::Rect,
                w: OBJECT_SIDE,
                h: OBJECT_SIDE,
                signature: signature.clone(),
                end_signature: None,
                path: object_path(r.motion, frames, dx, dy),
            };
            let background = Background {
                signature: if r.clutter {
                    signature.camouflage_twin(fc, &[(4.0, 2.5, -0.5), (18.0, 3.0, -0.4), (11.0, 2.5, 0.35)])
                } else {
                    plain_background(bands)
                },
                gradient: 0.2,
                tilt: 0.1,
            };
            let decoy = r.camo.then(|| {
                let start = object.center_at(0);
                let dstart = (start.0, start.1 - 24.0);
                let path = if r.static_decoy {
                    vec![Waypoint::new(0, dstart.0 + 6.0, dstart.1)]
                } else {
                    vec![
                        Waypoint::new(0, dstart.0, dstart.1),
                        Waypoint::new(frames - 1, (dstart.0 + 70.0).min(112.0), (dstart.1 - 20.0).max(12.0)),
                    ]
                };
                Body {
                    shape: Shape::Rect,
                    w: OBJECT_SIDE,
                    h: OBJECT_SIDE,
                    signature: signature.camouflage_twin(fc, &decoy_peaks()),
                    end_signature: None,
                    path,
                }
            });
            let occlusions = if r.occlusion {
                let (start, duration) = (frames / 3, 10);
                vec![Occlusion {
                    start,
                    duration,
                    area: occluder_for(&object, start, duration, 3.0),
                    signature: signature.mirrored(),
                }]
            } else {
                Vec::new()
            };
            ScenarioSpec {
                name: r.name.to_string(),
                frames,
                width: DESK_WIDTH,
                height: DESK_HEIGHT,
                bands,
                false_color_bands: fc,
                background,
                object,
                decoy,
                occlusions,
                noise: r.noise,
                seed: seed.wrapping_mul(1000).wrapping_add(i as u64),
                max_step: 20.0,
            }
        })
        .collect()
}

/// A near-twin decoy sweeps past the object while the object's spectrum
/// slowly drifts away from its first-frame appearance, so the decoy ends up
/// the better template match: a confident jump to the wrong target.
pub fn confident_error_scenario(seed: u64) -> ScenarioSpec {
    let bands = DESK_BANDS;
    let fc = DEFAULT_FALSE_COLOR_BANDS;
    let frames = 70;
    let signature = object_signature(bands, 0.0);
    let drifted = signature.camouflage_twin(fc, &[(11.0, 2.5, 0.35), (21.0, 2.0, 0.3)]);
    let twin = signature.camouflage_twin(fc, &[(14.0, 1.0, 0.12)]);
    let object = Body {
        shape: Shape::Rect,
        w: OBJECT_SIDE,
        h: OBJECT_SIDE,
        signature,
        end_signature: Some(drifted),
        path: vec![Waypoint::new(0, 24.0, 56.0), Waypoint::new(frames - 1, 93.0, 56.0)],
    };
    let decoy = Body {
        shape: Shape::Rect,
        w: OBJECT_SIDE,
        h: OBJECT_SIDE,
        signature: twin.clone(),
        end_signature: None,
        // parked right, crosses in 14 frames, then parks left
        path: vec![Waypoint::new(20, 120.0, 30.0), Waypoint::new(34, 8.0, 30.0)],
    };
    ScenarioSpec {
        name: "confident_error".into(),
        frames,
        width: DESK_WIDTH,
        height: DESK_HEIGHT,
        bands,
        false_color_bands: fc,
        background: Background {
            signature: plain_background(bands),
            gradient: 0.2,
            tilt: 0.1,
        },
        object,
        decoy: Some(decoy),
        occlusions: Vec::new(),
        noise: 0.0,
        seed,
        max_step: 20.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> ScenarioSpec {
        let sig = object_signature(8, 0.0);
        ScenarioSpec {
            name: "tiny".into(),
            frames: 4,
            width: 32,
            height: 24,
            bands: 8,
            false_color_bands: [0, 3, 5],
            background: Background {
                signature: plain_background(8),
                gradient: 0.0,
                tilt: 0.0,
            },
            object: Body {
                shape: Shape::Rect,
                w: 6.0,
                h: 4.0,
                signature: sig,
                end_signature: None,
                path: vec![Waypoint::new(0, 8.0, 8.0), Waypoint::new(3, 14.0, 11.0)],
            },
            decoy: None,
            occlusions: Vec::new(),
            noise: 0.0,
            seed: 7,
            max_step: 5.0,
        }
    }

    #[test]
    fn noise_free_object_pixels_equal_signature() {
        let spec = tiny_spec();
        let seq = generate(&spec).unwrap();
        for f in 0..spec.frames {
            let px = core_pixels(&spec, f, &spec.object, &[]);
            assert!(!px.is_empty());
            for (r, c) in px {
                assert_eq!(seq.frames[f].spectrum(r, c), spec.object.signature.values());
            }
        }
    }

    #[test]
    fn annotations_follow_path() {
        let spec = tiny_spec();
        let seq = generate(&spec).unwrap();
        assert_eq!(seq.annotations[0], BBox::new(5.0, 6.0, 6.0, 4.0));
        assert_eq!(seq.annotations[3].center(), (14.0, 11.0));
        assert!(max_annotation_step(&seq) <= spec.max_step);
    }

    #[test]
    fn soft_edges_use_pixel_area() {
        let b = BBox::new(1.5, 0.0, 2.0, 1.0);
        assert_eq!(shape_coverage(Shape::Rect, &b, 0, 1), 0.5);
        assert_eq!(shape_coverage(Shape::Rect, &b, 0, 2), 1.0);
        assert_eq!(shape_coverage(Shape::Rect, &b, 0, 3), 0.5);
        assert_eq!(shape_coverage(Shape::Rect, &b, 1, 2), 0.0);
        let e = BBox::new(0.0, 0.0, 8.0, 8.0);
        assert_eq!(shape_coverage(Shape::Ellipse, &e, 4, 4), 1.0);
        assert_eq!(shape_coverage(Shape::Ellipse, &e, 0, 0), 0.0);
    }

    #[test]
    fn seeded_regeneration_is_identical() {
        let mut spec = tiny_spec();
        spec.noise = 0.05;
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let mut other = spec.clone();
        other.seed += 1;
        assert_ne!(generate(&spec).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn twin_matches_on_false_color_only() {
        let sig = object_signature(DESK_BANDS, 0.0);
        let twin = sig.camouflage_twin(DEFAULT_FALSE_COLOR_BANDS, &decoy_peaks());
        assert!(sig.max_abs_diff_on(&twin, &DEFAULT_FALSE_COLOR_BANDS) <= 1e-6);
        assert!(sig.l2(&twin) > MIN_DECOY_DISTANCE);
    }

    #[test]
    fn inconsistent_specs_error() {
        let mut s = tiny_spec();
        s.object.path[1] = Waypoint::new(3, 40.0, 11.0);
        assert!(generate(&s).is_err());
        let mut s = tiny_spec();
        s.false_color_bands = [0, 1, 8];
        assert!(generate(&s).is_err());
        let mut s = tiny_spec();
        let mut twin = s.object.clone();
        twin.signature = s.object.signature.clone();
        s.decoy = Some(twin);
        assert!(generate(&s).is_err());
        let mut s = tiny_spec();
        s.max_step = 1.0;
        assert!(generate(&s).is_err());
    }

    #[test]
    fn occluder_hides_object() {
        let mut s = tiny_spec();
        s.occlusions.push(Occlusion {
            start: 1,
            duration: 2,
            area: occluder_for(&s.object, 1, 2, 1.0),
            signature: s.object.signature.mirrored(),
        });
        assert_eq!(occlusion_fraction(&s, 0).unwrap(), 1.0);
        let seq = generate(&s).unwrap();
        assert!(seq.attributes.contains(&Attribute::OCC));
        let (cx, cy) = s.object.center_at(1);
        assert_eq!(
            seq.frames[1].spectrum(cy as usize, cx as usize),
            s.occlusions[0].signature.values()
        );
        // gone again once the event ends
        let (cx, cy) = s.object.center_at(3);
        assert_eq!(seq.frames[3].spectrum(cy as usize, cx as usize), s.object.signature.values());
    }

    #[test]
    fn nn_error_extremes() {
        let a = vec![vec![0.0, 0.0], vec![0.1, 0.0], vec![5.0, 5.0], vec![5.1, 5.0]];
        assert_eq!(nn_error(&a, &[true, true, false, false]), 0.0);
        let same = vec![vec![1.0]; 4];
        assert_eq!(nn_error(&same, &[true, true, false, false]), 1.0);
    }

    #[test]
    fn suite_shape() {
        let suite = standard_suite(3);
        assert_eq!(suite.len(), 12);
        assert_eq!(suite, standard_suite(3));
        for s in &suite {
            s.validate().unwrap();
        }
    }
}
