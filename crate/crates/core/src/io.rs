//! On-disk formats: datasets, tracking runs, traces and evaluation reports.
//!
//! A dataset is a root directory holding `manifest.json` plus one directory
//! per sequence. Each sequence directory has its own `manifest.json`,
//! `annotations.json` (an array of `[x, y, w, h]`) and one raw frame file per
//! frame, `frame_000000.bin` upward, little-endian f32, band-major then
//! row-major, no header.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{attribute_report, evaluate, pooled_scores, AttributeScore, EvalResult};
use crate::config::TrackerConfig;
use crate::synthgen::{annotations, FrameStream, ScenarioSpec};
use crate::pipeline::{run_parallel, track_sequence, TrackRun};
use crate::types::{Attribute, BBox, HsiCube, SequenceRecord};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const ANNOTATIONS_FILE: &str = "annotations.json";
pub const TIMING_FILE: &str = "timing.json";

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.bin")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub name: String,
    pub frames: usize,
    pub bands: usize,
    pub height: usize,
    pub width: usize,
    pub attributes: BTreeSet<Attribute>,
    /// 0-based band indices.
    pub false_color_bands: [usize; 3],
}

impl SequenceManifest {
    pub fn of(seq: &SequenceRecord) -> Self {
        let (bands, height, width) = seq.dims();
        Self {
            name: seq.name.clone(),
            frames: seq.len(),
            bands,
            height,
            width,
            attributes: seq.attributes.clone(),
            false_color_bands: seq.false_color_bands,
        }
    }

    pub fn frame_bytes(&self) -> usize {
        self.bands * self.height * self.width * 4
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetEntry {
    #[serde(flatten)]
    pub sequence: SequenceManifest,
    /// Relative to the dataset root.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub sequences: Vec<DatasetEntry>,
}

impl DatasetManifest {
    pub fn entry(&self, name: &str) -> Option<&DatasetEntry> {
        self.sequences.iter().find(|e| e.sequence.name == name)
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn write_frame(path: &Path, cube: &HsiCube) -> Result<()> {
    let mut bytes = Vec::with_capacity(cube.data().len() * 4);
    for v in cube.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_frame(path: &Path, index: usize, bands: usize, height: usize, width: usize) -> Result<HsiCube> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = bands * height * width * 4;
    if bytes.len() < expected {
        return Err(Error::TruncatedFrame {
            frame: index,
            path: path.to_path_buf(),
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Geometry {
            context: path.display().to_string(),
            detail: format!("frame {index} has {} bytes, expected {expected}", bytes.len()),
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    HsiCube::new(bands, height, width, data)
}

pub fn write_sequence(seq: &SequenceRecord, dir: &Path) -> Result<SequenceManifest> {
    seq.validate()?;
    create_dir(dir)?;
    let manifest = SequenceManifest::of(seq);
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    let boxes: Vec<[f64; 4]> = seq.annotations.iter().map(|b| [b.x, b.y, b.w, b.h]).collect();
    write_json(&dir.join(ANNOTATIONS_FILE), &boxes)?;
    for (i, frame) in seq.frames.iter().enumerate() {
        write_frame(&dir.join(frame_file_name(i)), frame)?;
    }
    Ok(manifest)
}

pub fn read_sequence_manifest(dir: &Path) -> Result<SequenceManifest> {
    read_json(&dir.join(MANIFEST_FILE))
}

/// Reads only the annotations, checking the count against the manifest.
pub fn read_annotations(dir: &Path) -> Result<Vec<BBox>> {
    let manifest = read_sequence_manifest(dir)?;
    read_annotations_for(dir, &manifest)
}

fn read_annotations_for(dir: &Path, manifest: &SequenceManifest) -> Result<Vec<BBox>> {
    let path = dir.join(ANNOTATIONS_FILE);
    let raw: Vec<[f64; 4]> = read_json(&path)?;
    if raw.len() != manifest.frames {
        return Err(Error::Geometry {
            context: path.display().to_string(),
            detail: format!("{} boxes for {} declared frames", raw.len(), manifest.frames),
        });
    }
    Ok(raw.into_iter().map(|[x, y, w, h]| BBox::new(x, y, w, h)).collect())
}

pub fn read_sequence(dir: &Path) -> Result<SequenceRecord> {
    let m = read_sequence_manifest(dir)?;
    let annotations = read_annotations_for(dir, &m)?;
    let frames = (0..m.frames)
        .map(|i| read_frame(&dir.join(frame_file_name(i)), i, m.bands, m.height, m.width))
        .collect::<Result<Vec<_>>>()?;
    SequenceRecord::new(m.name, frames, annotations, m.attributes, m.false_color_bands)
}

/// Writes sequences one at a time so only one needs to be in memory; the
/// root manifest is written by [`DatasetWriter::finish`].
#[derive(Debug)]
pub struct DatasetWriter {
    root: PathBuf,
    entries: Vec<DatasetEntry>,
}

impl DatasetWriter {
    pub fn create(root: &Path) -> Result<Self> {
        create_dir(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn add(&mut self, seq: &SequenceRecord) -> Result<()> {
        if self.entries.iter().any(|e| e.sequence.name == seq.name) {
            return Err(Error::InvalidInput(format!("duplicate sequence name {}", seq.name)));
        }
        let sequence = write_sequence(seq, &self.root.join(&seq.name))?;
        self.entries.push(DatasetEntry {
            sequence,
            path: seq.name.clone(),
        });
        Ok(())
    }

    /// Like [`DatasetWriter::add`] but renders frames one at a time.
    pub fn add_scenario(&mut self, spec: &ScenarioSpec) -> Result<()> {
        if self.entries.iter().any(|e| e.sequence.name == spec.name) {
            return Err(Error::InvalidInput(format!("duplicate sequence name {}", spec.name)));
        }
        let dir = self.root.join(&spec.name);
        create_dir(&dir)?;
        let sequence = SequenceManifest {
            name: spec.name.clone(),
            frames: spec.frames,
            bands: spec.bands,
            height: spec.height,
            width: spec.width,
            attributes: spec.attributes(),
            false_color_bands: spec.false_color_bands,
        };
        for (i, frame) in FrameStream::new(spec)?.enumerate() {
            write_frame(&dir.join(frame_file_name(i)), &frame?)?;
        }
        let boxes: Vec<[f64; 4]> = annotations(spec).iter().map(|b| [b.x, b.y, b.w, b.h]).collect();
        write_json(&dir.join(ANNOTATIONS_FILE), &boxes)?;
        write_json(&dir.join(MANIFEST_FILE), &sequence)?;
        self.entries.push(DatasetEntry {
            sequence,
            path: spec.name.clone(),
        });
        Ok(())
    }

    pub fn finish(self) -> Result<DatasetManifest> {
        let manifest = DatasetManifest {
            format_version: FORMAT_VERSION,
            sequences: self.entries,
        };
        write_json(&self.root.join(MANIFEST_FILE), &manifest)?;
        Ok(manifest)
    }
}

/// Loads the root manifest and checks every referenced sequence directory
/// against its declared geometry, without reading frame data.
pub fn read_dataset_manifest(root: &Path) -> Result<DatasetManifest> {
    let path = root.join(MANIFEST_FILE);
    let manifest: DatasetManifest = read_json(&path)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::InvalidInput(format!(
            "{}: format_version {} not supported (expected {FORMAT_VERSION})",
            path.display(),
            manifest.format_version
        )));
    }
    for entry in &manifest.sequences {
        let dir = root.join(&entry.path);
        let local = read_sequence_manifest(&dir)?;
        if local != entry.sequence {
            return Err(Error::Geometry {
                context: dir.display().to_string(),
                detail: "sequence manifest disagrees with dataset manifest".into(),
            });
        }
        let expected = local.frame_bytes() as u64;
        for i in 0..local.frames {
            let fp = dir.join(frame_file_name(i));
            let len = fs::metadata(&fp).map_err(|e| Error::io(&fp, e))?.len();
            if len < expected {
                return Err(Error::TruncatedFrame {
                    frame: i,
                    path: fp,
                    expected: expected as usize,
                    actual: len as usize,
                });
            }
            if len > expected {
                return Err(Error::Geometry {
                    context: fp.display().to_string(),
                    detail: format!("frame {i} has {len} bytes, expected {expected}"),
                });
            }
        }
    }
    Ok(manifest)
}

pub fn run_file_name(sequence: &str) -> String {
    format!("{sequence}.json")
}

pub fn trace_file_name(sequence: &str) -> String {
    format!("{sequence}.trace.csv")
}

pub fn trace_csv(run: &TrackRun) -> String {
    let mut out = String::from("frame,x,y,w,h,raw_x,raw_y,raw_w,raw_h,dc,offset,source,rectified\n");
    for f in &run.frames {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            f.frame,
            f.bbox.x,
            f.bbox.y,
            f.bbox.w,
            f.bbox.h,
            f.raw.x,
            f.raw.y,
            f.raw.w,
            f.raw.h,
            f.dc,
            f.offset,
            f.source.as_str(),
            f.rectified
        ));
    }
    out
}

pub fn write_run(dir: &Path, run: &TrackRun) -> Result<()> {
    create_dir(dir)?;
    write_json(&dir.join(run_file_name(&run.sequence)), run)?;
    let trace = dir.join(trace_file_name(&run.sequence));
    fs::write(&trace, trace_csv(run)).map_err(|e| Error::io(&trace, e))
}

/// Every `*.json` run in a directory except the timing file, sorted by
/// sequence name.
pub fn read_runs(dir: &Path) -> Result<Vec<TrackRun>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n != TIMING_FILE));
    let mut runs = paths.iter().map(|p| read_json::<TrackRun>(p)).collect::<Result<Vec<_>>>()?;
    runs.sort_by(|a, b| a.sequence.cmp(&b.sequence));
    Ok(runs)
}

/// Wall times live apart from the run payloads so those stay reproducible.
pub fn write_timing(dir: &Path, runs: &[TrackRun]) -> Result<()> {
    let timing: BTreeMap<&str, f64> = runs.iter().map(|r| (r.sequence.as_str(), r.wall_time_s)).collect();
    write_json(&dir.join(TIMING_FILE), &timing)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceScore {
    pub name: String,
    pub frames: usize,
    pub auc: f64,
    pub dp20: f64,
    pub attributes: BTreeSet<Attribute>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub format_version: u32,
    pub sequences: Vec<SequenceScore>,
    /// Frame-weighted over all sequences.
    pub auc: f64,
    pub dp20: f64,
    pub attributes: BTreeMap<Attribute, AttributeScore>,
}

/// Scores runs against the dataset annotations (frames after the first).
pub fn evaluate_runs(runs: &[TrackRun], data: &Path) -> Result<(Summary, Vec<EvalResult>)> {
    let manifest = read_dataset_manifest(data)?;
    let mut results = Vec::with_capacity(runs.len());
    let mut attrs = Vec::with_capacity(runs.len());
    for run in runs {
        let entry = manifest.entry(&run.sequence).ok_or_else(|| {
            Error::InvalidInput(format!("run {} has no sequence in {}", run.sequence, data.display()))
        })?;
        let gt = read_annotations(&data.join(&entry.path))?;
        results.push(evaluate(&run.boxes(), &gt[1..])?);
        attrs.push(entry.sequence.attributes.clone());
    }
    let (auc, dp20) = pooled_scores(&results)?;
    let sequences = runs
        .iter()
        .zip(&results)
        .zip(&attrs)
        .map(|((run, res), a)| SequenceScore {
            name: run.sequence.clone(),
            frames: res.frames(),
            auc: res.auc,
            dp20: res.dp20,
            attributes: a.clone(),
        })
        .collect();
    let attributes = attribute_report(results.iter().zip(&attrs))?;
    Ok((
        Summary {
            format_version: FORMAT_VERSION,
            sequences,
            auc,
            dp20,
            attributes,
        },
        results,
    ))
}

fn curve_csv(header: &str, curve: &[(f64, f64)]) -> String {
    let mut out = format!("{header},value\n");
    for (t, v) in curve {
        out.push_str(&format!("{t},{v}\n"));
    }
    out
}

/// Writes `summary.json`, `success.csv`, `precision.csv` and `attributes.csv`.
pub fn write_eval(out: &Path, summary: &Summary, results: &[EvalResult]) -> Result<()> {
    create_dir(out)?;
    write_json(&out.join("summary.json"), summary)?;
    let mut ious = Vec::new();
    let mut cles = Vec::new();
    for r in results {
        ious.extend_from_slice(&r.ious);
        cles.extend_from_slice(&r.cles);
    }
    let (success, _) = crate::metrics::success_auc(&ious)?;
    let (precision, _) = crate::metrics::precision_dp(&cles)?;
    let mut files = vec![
        ("success.csv", curve_csv("threshold", &success)),
        ("precision.csv", curve_csv("threshold_px", &precision)),
    ];
    let mut attr = String::from("attribute,sequences,frames,auc,dp20\n");
    for (a, s) in &summary.attributes {
        attr.push_str(&format!("{a},{},{},{},{}\n", s.sequences, s.frames, s.auc, s.dp20));
    }
    files.push(("attributes.csv", attr));
    for (name, body) in files {
        let p = out.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub use_dam: bool,
    pub full_spectrum: bool,
    pub auc: f64,
    pub dp20: f64,
    /// Relative to the baseline row.
    pub delta_auc: f64,
    pub delta_dp20: f64,
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("variant,use_dam,full_spectrum,auc,dp20,delta_auc,delta_dp20\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.variant, r.use_dam, r.full_spectrum, r.auc, r.dp20, r.delta_auc, r.delta_dp20
        ));
    }
    out
}

pub fn write_ablation(out: &Path, rows: &[AblationRow]) -> Result<()> {
    create_dir(out)?;
    write_json(&out.join("ablation.json"), &rows)?;
    let p = out.join("ablation.csv");
    fs::write(&p, ablation_csv(rows)).map_err(|e| Error::io(&p, e))
}

/// Generates and writes each scenario in turn, streaming frames to disk.
pub fn write_suite(specs: &[ScenarioSpec], root: &Path) -> Result<DatasetManifest> {
    let mut writer = DatasetWriter::create(root)?;
    for spec in specs {
        writer.add_scenario(spec)?;
    }
    writer.finish()
}

/// Tracks every sequence of a dataset, at most `workers` at a time, and
/// writes runs, traces and timings to `out`. Each worker loads only the
/// sequence it is tracking.
pub fn track_dataset(data: &Path, cfg: &TrackerConfig, out: &Path, workers: usize) -> Result<Vec<TrackRun>> {
    let manifest = read_dataset_manifest(data)?;
    create_dir(out)?;
    let runs = run_parallel(&manifest.sequences, workers, |entry| {
        let seq = read_sequence(&data.join(&entry.path))?;
        let run = track_sequence(&seq, cfg)?;
        write_run(out, &run)?;
        Ok(run)
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    write_timing(out, &runs)?;
    Ok(runs)
}

/// The four ablation variants: `(label, use_dam, full_spectrum)`. The
/// first is the baseline the deltas are taken against.
pub const ABLATION_VARIANTS: [(&str, bool, bool); 4] = [
    ("B", false, false),
    ("B+S", false, true),
    ("B+DA", true, false),
    ("B+DA+S", true, true),
];

/// Runs every variant over every sequence and pools the scores per variant.
pub fn ablate_dataset(data: &Path, base: &TrackerConfig, workers: usize) -> Result<Vec<AblationRow>> {
    let manifest = read_dataset_manifest(data)?;
    let per_seq = run_parallel(&manifest.sequences, workers, |entry| -> Result<Vec<EvalResult>> {
        let seq = read_sequence(&data.join(&entry.path))?;
        ABLATION_VARIANTS
            .iter()
            .map(|&(_, use_dam, full)| {
                let cfg = TrackerConfig {
                    use_dam,
                    rgb_only: !full,
                    ..base.clone()
                };
                let run = track_sequence(&seq, &cfg)?;
                evaluate(&run.boxes(), &seq.annotations[1..])
            })
            .collect()
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<AblationRow> = Vec::with_capacity(ABLATION_VARIANTS.len());
    for (k, &(label, use_dam, full_spectrum)) in ABLATION_VARIANTS.iter().enumerate() {
        let (auc, dp20) = pooled_scores(per_seq.iter().map(|v| &v[k]))?;
        let (base_auc, base_dp) = rows.first().map_or((auc, dp20), |b| (b.auc, b.dp20));
        rows.push(AblationRow {
            variant: label.to_string(),
            use_dam,
            full_spectrum,
            auc,
            dp20,
            delta_auc: auc - base_auc,
            delta_dp20: dp20 - base_dp,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_sequence() -> SequenceRecord {
        let frames = (0..3)
            .map(|k| {
                let data = (0..2 * 4 * 5).map(|i| (i as f32 * 0.37 + k as f32).sin().abs()).collect();
                HsiCube::new(2, 4, 5, data).unwrap()
            })
            .collect();
        let boxes = vec![BBox::new(0.5, 0.25, 2.0, 1.5); 3];
        SequenceRecord::new("tiny", frames, boxes, [Attribute::OCC].into(), [0, 1, 0]).unwrap()
    }

    #[test]
    fn frame_names_are_zero_based() {
        assert_eq!(frame_file_name(0), "frame_000000.bin");
        assert_eq!(frame_file_name(123), "frame_000123.bin");
    }

    #[test]
    fn frame_file_has_no_header() {
        let dir = tempfile::tempdir().unwrap();
        let seq = tiny_sequence();
        write_sequence(&seq, dir.path()).unwrap();
        let len = fs::metadata(dir.path().join(frame_file_name(0))).unwrap().len();
        assert_eq!(len, 2 * 4 * 5 * 4);
        let bytes = fs::read(dir.path().join(frame_file_name(1))).unwrap();
        assert_eq!(f32::from_le_bytes(bytes[4..8].try_into().unwrap()), seq.frames[1].data()[1]);
    }

    #[test]
    fn truncated_frame_is_named() {
        let dir = tempfile::tempdir().unwrap();
        write_sequence(&tiny_sequence(), dir.path()).unwrap();
        let p = dir.path().join(frame_file_name(2));
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        match read_sequence(dir.path()).unwrap_err() {
            Error::TruncatedFrame { frame, .. } => assert_eq!(frame, 2),
            e => panic!("unexpected {e:?}"),
        }
    }
}
