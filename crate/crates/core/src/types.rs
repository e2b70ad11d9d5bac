//! Domain types shared across the tracker: hyperspectral cubes, boxes,
//! response maps and annotated sequences.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default false-color triplet (0-based): the 1st, 9th and 15th bands.
pub const DEFAULT_FALSE_COLOR_BANDS: [usize; 3] = [0, 8, 14];

/// One hyperspectral frame. Band-major, then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    bands: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl HsiCube {
    pub fn new(bands: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if bands == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidInput(format!(
                "cube extents must be positive, got {bands}x{height}x{width}"
            )));
        }
        if data.len() != bands * height * width {
            return Err(Error::Shape(format!(
                "cube data has {} values, expected {bands}*{height}*{width}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "cube values must be finite and non-negative, found {v}"
            )));
        }
        Ok(Self {
            bands,
            height,
            width,
            data,
        })
    }

    pub fn zeros(bands: usize, height: usize, width: usize) -> Self {
        Self::filled(bands, height, width, 0.0)
    }

    pub fn filled(bands: usize, height: usize, width: usize, value: f32) -> Self {
        assert!(bands > 0 && height > 0 && width > 0);
        assert!(value.is_finite() && value >= 0.0);
        Self {
            bands,
            height,
            width,
            data: vec![value; bands * height * width],
        }
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.bands, self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, band: usize, row: usize, col: usize) -> f32 {
        self.data[(band * self.height + row) * self.width + col]
    }

    pub fn band(&self, band: usize) -> &[f32] {
        let plane = self.height * self.width;
        &self.data[band * plane..(band + 1) * plane]
    }

    /// Spectrum of one pixel across all bands.
    pub fn spectrum(&self, row: usize, col: usize) -> Vec<f32> {
        (0..self.bands).map(|b| self.get(b, row, col)).collect()
    }

    /// New cube made of the listed bands, in the listed order.
    pub fn select_bands(&self, indices: &[usize]) -> Result<HsiCube> {
        if indices.is_empty() {
            return Err(Error::InvalidInput("no bands selected".into()));
        }
        let mut data = Vec::with_capacity(indices.len() * self.height * self.width);
        for &b in indices {
            if b >= self.bands {
                return Err(Error::BandOutOfRange {
                    index: b,
                    len: self.bands,
                });
            }
            data.extend_from_slice(self.band(b));
        }
        Ok(HsiCube {
            bands: indices.len(),
            height: self.height,
            width: self.width,
            data,
        })
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }
}

/// Axis-aligned box, `(x, y)` is the top-left corner, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn is_valid(&self) -> bool {
        [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) && self.w > 0.0 && self.h > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("degenerate box {self:?}")))
        }
    }

    /// Overlap area with another box.
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let ix = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let iy = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        if ix <= 0.0 || iy <= 0.0 {
            0.0
        } else {
            ix * iy
        }
    }

    /// True when the box and the `width x height` frame share positive area.
    pub fn overlaps_frame(&self, width: usize, height: usize) -> bool {
        self.intersection_area(&BBox::new(0.0, 0.0, width as f64, height as f64)) > 0.0
    }

    /// Shifts the box (size unchanged) so its center lies inside the frame.
    pub fn clamp_center_to_frame(&self, width: usize, height: usize) -> BBox {
        let (cx, cy) = self.center();
        BBox::from_center(
            cx.clamp(0.0, width as f64),
            cy.clamp(0.0, height as f64),
            self.w,
            self.h,
        )
    }
}

/// Classification, offset and size maps over the search grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMaps {
    rows: usize,
    cols: usize,
    cm: Vec<f64>,
    offset: Vec<f64>,
    size: Vec<f64>,
}

impl ResponseMaps {
    /// `offset` and `size` are laid out `[channel][row][col]` with two channels
    /// (x then y, w then h).
    pub fn new(rows: usize, cols: usize, cm: Vec<f64>, offset: Vec<f64>, size: Vec<f64>) -> Result<Self> {
        let n = rows * cols;
        if n == 0 {
            return Err(Error::InvalidInput("empty response map".into()));
        }
        if cm.len() != n || offset.len() != 2 * n || size.len() != 2 * n {
            return Err(Error::Shape(format!(
                "response maps for {rows}x{cols} need {n}/{0}/{0} values, got {1}/{2}/{3}",
                2 * n,
                cm.len(),
                offset.len(),
                size.len()
            )));
        }
        if cm.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput("classification map values must lie in [0,1]".into()));
        }
        if offset.iter().chain(size.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("offset/size maps must be finite".into()));
        }
        Ok(Self {
            rows,
            cols,
            cm,
            offset,
            size,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cm(&self) -> &[f64] {
        &self.cm
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn size(&self) -> &[f64] {
        &self.size
    }

    #[inline]
    pub fn cm_at(&self, row: usize, col: usize) -> f64 {
        self.cm[row * self.cols + col]
    }

    #[inline]
    pub fn offset_at(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.offset[(channel * self.rows + row) * self.cols + col]
    }

    #[inline]
    pub fn size_at(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.size[(channel * self.rows + row) * self.cols + col]
    }

    /// Peak cell of the classification map; ties resolve to the smallest
    /// row-major index.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.cm.iter().enumerate() {
            if v > self.cm[best] {
                best = i;
            }
        }
        (best / self.cols, best % self.cols)
    }
}

/// Challenge attributes used to slice evaluation results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Attribute {
    /// Background clutter.
    BC,
    /// Fast motion.
    FM,
    /// In-plane rotation.
    IPR,
    /// Illumination variation.
    IV,
    /// Low resolution.
    LR,
    /// Occlusion.
    OCC,
    /// Out-of-plane rotation.
    OPR,
    /// Spectral consistency: only real objects move.
    SC,
    /// Spectral variation: the camouflaged object moves.
    SV,
}

impl Attribute {
    pub const ALL: [Attribute; 9] = [
        Attribute::BC,
        Attribute::FM,
        Attribute::IPR,
        Attribute::IV,
        Attribute::LR,
        Attribute::OCC,
        Attribute::OPR,
        Attribute::SC,
        Attribute::SV,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Attribute::BC => "BC",
            Attribute::FM => "FM",
            Attribute::IPR => "IPR",
            Attribute::IV => "IV",
            Attribute::LR => "LR",
            Attribute::OCC => "OCC",
            Attribute::OPR => "OPR",
            Attribute::SC => "SC",
            Attribute::SV => "SV",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Attribute::ALL
            .iter()
            .copied()
            .find(|a| a.tag() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown attribute tag {s:?}")))
    }
}

/// An annotated hyperspectral video.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRecord {
    pub name: String,
    pub frames: Vec<HsiCube>,
    pub annotations: Vec<BBox>,
    pub attributes: BTreeSet<Attribute>,
    /// 0-based band indices.
    pub false_color_bands: [usize; 3],
}

impl SequenceRecord {
    pub fn new(
        name: impl Into<String>,
        frames: Vec<HsiCube>,
        annotations: Vec<BBox>,
        attributes: BTreeSet<Attribute>,
        false_color_bands: [usize; 3],
    ) -> Result<Self> {
        let seq = Self {
            name: name.into(),
            frames,
            annotations,
            attributes,
            false_color_bands,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::InvalidInput(format!("sequence {} has no frames", self.name)));
        }
        if self.annotations.len() != self.frames.len() {
            return Err(Error::Geometry {
                context: self.name.clone(),
                detail: format!(
                    "{} annotations for {} frames",
                    self.annotations.len(),
                    self.frames.len()
                ),
            });
        }
        let dims = self.frames[0].dims();
        if let Some((i, f)) = self.frames.iter().enumerate().find(|(_, f)| f.dims() != dims) {
            return Err(Error::Geometry {
                context: self.name.clone(),
                detail: format!("frame {i} has extents {:?}, expected {dims:?}", f.dims()),
            });
        }
        if let Some(&b) = self.false_color_bands.iter().find(|&&b| b >= dims.0) {
            return Err(Error::BandOutOfRange { index: b, len: dims.0 });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.frames[0].dims()
    }
}

/// Projects three bands of a cube into a 3-channel false-color image.
pub fn false_color(cube: &HsiCube, band_indices: [usize; 3]) -> Result<HsiCube> {
    cube.select_bands(&band_indices)
}

/// Bilinear resample of the `box` region into an `out_size x out_size`
/// patch. Sample points that fall outside the frame read as zero; points
/// within half a pixel of the border replicate the edge.
pub fn crop_patch(cube: &HsiCube, bbox: &BBox, out_size: usize) -> Result<HsiCube> {
    bbox.validate()?;
    if out_size == 0 {
        return Err(Error::InvalidInput("crop size must be positive".into()));
    }
    let (bands, height, width) = cube.dims();
    if !bbox.overlaps_frame(width, height) {
        return Err(Error::InvalidInput(format!(
            "box {bbox:?} does not overlap the {width}x{height} frame"
        )));
    }

    let step_x = bbox.w / out_size as f64;
    let step_y = bbox.h / out_size as f64;
    // Per output column/row: two source taps plus weights, or None when outside.
    let taps = |start: f64, step: f64, extent: usize| -> Vec<Option<(usize, usize, f64)>> {
        (0..out_size)
            .map(|k| {
                let s = start + (k as f64 + 0.5) * step - 0.5;
                if s < -0.5 || s > extent as f64 - 0.5 {
                    return None;
                }
                let s = s.clamp(0.0, (extent - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(extent - 1);
                Some((i0, i1, s - i0 as f64))
            })
            .collect()
    };
    let cols = taps(bbox.x, step_x, width);
    let rows = taps(bbox.y, step_y, height);

    let mut data = vec![0f32; bands * out_size * out_size];
    for b in 0..bands {
        let plane = cube.band(b);
        let out = &mut data[b * out_size * out_size..(b + 1) * out_size * out_size];
        for (r, rt) in rows.iter().enumerate() {
            let Some((r0, r1, fy)) = *rt else { continue };
            for (c, ct) in cols.iter().enumerate() {
                let Some((c0, c1, fx)) = *ct else { continue };
                let v00 = plane[r0 * width + c0] as f64;
                let v01 = plane[r0 * width + c1] as f64;
                let v10 = plane[r1 * width + c0] as f64;
                let v11 = plane[r1 * width + c1] as f64;
                let top = v00 + (v01 - v00) * fx;
                let bottom = v10 + (v11 - v10) * fx;
                out[r * out_size + c] = (top + (bottom - top) * fy) as f32;
            }
        }
    }
    HsiCube::new(bands, out_size, out_size, data)
}
