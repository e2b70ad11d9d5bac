//! End-to-end tracking loop: crop a search window around the last output,
//! score it, decode a box, and let the rectification stage pick the final
//! box.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{GeneratorKind, TrackerConfig};
use crate::dam::{decision_confidence, Dam, DamStep, Source};
use crate::error::{Error, Result};
use crate::spbn::{decode_box, ResponseGenerator, SearchWindow};
use crate::types::{crop_patch, false_color, BBox, HsiCube, SequenceRecord};

/// Env var capping the number of sequences tracked concurrently.
pub const WORKERS_ENV: &str = "HCOT_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    /// 0-based index into the sequence.
    pub frame: usize,
    pub bbox: BBox,
    /// Box decoded from the response maps before rectification.
    pub raw: BBox,
    pub dc: f64,
    pub offset: f64,
    pub source: Source,
    pub rectified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRun {
    pub sequence: String,
    pub generator: GeneratorKind,
    pub config: TrackerConfig,
    /// One record per frame after the first.
    pub frames: Vec<FrameRecord>,
    /// Kept out of the serialized payload so reruns compare byte-equal.
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl TrackRun {
    pub fn boxes(&self) -> Vec<BBox> {
        self.frames.iter().map(|f| f.bbox).collect()
    }

    pub fn rectified_count(&self) -> usize {
        self.frames.iter().filter(|f| f.rectified).count()
    }
}

/// Per-sequence tracker state.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    generator: ResponseGenerator,
    dam: Option<Dam>,
    /// Bands handed to the generator; `None` keeps the full cube.
    band_subset: Option<[usize; 3]>,
    /// False-color bands within the cube the generator sees.
    rgb: [usize; 3],
    template: HsiCube,
    template_side: f64,
    target: (f64, f64),
    frame_dims: (usize, usize),
    prev: BBox,
    next_frame: usize,
}

impl Tracker {
    /// Template from the first annotation, filter seeded there with zero
    /// rates.
    pub fn init(seq: &SequenceRecord, cfg: &TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        seq.validate()?;
        let gt = *seq
            .annotations
            .first()
            .ok_or_else(|| Error::InvalidInput(format!("sequence {} has no first annotation", seq.name)))?;
        gt.validate()?;
        let (bands, height, width) = seq.dims();
        let fc = cfg.false_color_for(seq.false_color_bands);
        if let Some(&b) = fc.iter().find(|&&b| b >= bands) {
            return Err(Error::BandOutOfRange { index: b, len: bands });
        }
        let (band_subset, rgb) = if cfg.rgb_only { (Some(fc), [0, 1, 2]) } else { (None, fc) };
        let first = view(&seq.frames[0], band_subset)?;
        let side = gt.w.max(gt.h);
        let (cx, cy) = gt.center();
        let template = crop_patch(&first, &BBox::from_center(cx, cy, side, side), cfg.template_size)?;
        let generator = ResponseGenerator::build(cfg, &template, rgb)?;
        let dam = if cfg.use_dam {
            let mut dam = Dam::new(cfg);
            dam.init(&gt, cfg.kalman.initial_scale)?;
            Some(dam)
        } else {
            None
        };
        Ok(Self {
            cfg: cfg.clone(),
            generator,
            dam,
            band_subset,
            rgb,
            template,
            template_side: side,
            target: (gt.w, gt.h),
            frame_dims: (width, height),
            prev: gt,
            next_frame: 1,
        })
    }

    pub fn template(&self) -> &HsiCube {
        &self.template
    }

    pub fn dam(&self) -> Option<&Dam> {
        self.dam.as_ref()
    }

    pub fn generator(&self) -> &ResponseGenerator {
        &self.generator
    }

    /// Square search region around `center`, `search_scale` template sides
    /// wide, shrunk to fit and shifted inside the frame. The origin snaps to
    /// whole pixels.
    pub fn search_region(&self, center: (f64, f64)) -> (BBox, SearchWindow) {
        let (w, h) = (self.frame_dims.0 as f64, self.frame_dims.1 as f64);
        let side = (self.cfg.search_scale * self.template_side).min(w.min(h));
        let place = |c: f64, extent: f64| (c - side / 2.0).round().clamp(0.0, extent - side);
        let (x0, y0) = (place(center.0, w), place(center.1, h));
        let scale = side / self.cfg.search_size as f64;
        (BBox::new(x0, y0, side, side), SearchWindow { x0, y0, scale })
    }

    pub fn track_frame(&mut self, frame: &HsiCube) -> Result<FrameRecord> {
        let (bands, height, width) = frame.dims();
        if (width, height) != self.frame_dims {
            return Err(Error::Geometry {
                context: format!("frame {}", self.next_frame),
                detail: format!("{width}x{height} frame, tracker expects {:?}", self.frame_dims),
            });
        }
        let _ = bands;
        let cube = view(frame, self.band_subset)?;
        let (region, window) = self.search_region(self.prev.center());
        let patch = crop_patch(&cube, &region, self.cfg.search_size)?;
        let size_hint = [self.target.0 / region.w, self.target.1 / region.h];
        let maps = self.generator.respond(&patch, self.rgb, size_hint)?;
        let raw = decode_box(&maps, self.cfg.downsample, window);
        let step = match &mut self.dam {
            Some(dam) => dam.step(self.next_frame, &raw, maps.cm())?,
            None => {
                let (a, b) = (raw.center(), self.prev.center());
                DamStep {
                    bbox: raw,
                    source: Source::Model,
                    dc: decision_confidence(maps.cm(), self.cfg.dc_use_mean_denominator),
                    offset: (a.0 - b.0).hypot(a.1 - b.1),
                    rectified: false,
                }
            }
        };
        let bbox = step.bbox.clamp_center_to_frame(width, height);
        let record = FrameRecord {
            frame: self.next_frame,
            bbox,
            raw,
            dc: step.dc,
            offset: step.offset,
            source: step.source,
            rectified: step.rectified,
        };
        self.prev = bbox;
        self.next_frame += 1;
        Ok(record)
    }
}

fn view(frame: &HsiCube, subset: Option<[usize; 3]>) -> Result<HsiCube> {
    match subset {
        Some(fc) => false_color(frame, fc),
        None => Ok(frame.clone()),
    }
}

/// Tracks frames `1..N` of a sequence.
pub fn track_sequence(seq: &SequenceRecord, cfg: &TrackerConfig) -> Result<TrackRun> {
    let start = Instant::now();
    let mut tracker = Tracker::init(seq, cfg)?;
    let frames = seq.frames[1..]
        .iter()
        .map(|f| tracker.track_frame(f))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrackRun {
        sequence: seq.name.clone(),
        generator: cfg.response_generator,
        config: cfg.clone(),
        frames,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Worker count from `HCOT_WORKERS`, else the available parallelism.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Maps `job` over `items` on a pool of at most `workers` threads. Results
/// keep the input order.
pub fn run_parallel<T, R, F>(items: &[T], workers: usize, job: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(&job).collect()))
}
