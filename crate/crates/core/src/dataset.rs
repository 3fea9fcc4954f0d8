//! Ground-truth dataset curation.
//!
//! A dataset lives in one directory:
//!
//! ```text
//! <root>/manifest.json                      canonical JSON, replaced atomically
//! <root>/videos/<id>/frame_%06d.png         materialised quadrant sub-videos
//! <root>/candidates/<id>/<tag>/frame_%06d.png
//! <root>/export/{snowy,gt}/pair_%05d.png    written by export
//! <root>/export/report.json
//! ```
//!
//! The manifest records every registered video, each generated candidate
//! frame, the curator's choice per video and the exported pairs. Paths inside
//! the root are stored relative to it.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::lowrank::{desnow_video, DesnowParams};
use crate::metrics::{evaluate_pair, ImageMetrics, LossWeights, MetricsReport};
use crate::synth::binarize;
use crate::video::{
    detect_channels, frame_file_name, frame_files, load_frames, save_frames, split_quadrants,
    VideoTensor,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: &str = "snowgt-manifest/1";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub parent: String,
    /// 0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right.
    pub quadrant: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub id: String,
    pub source: String,
    pub frames: usize,
    pub resolution: Resolution,
    pub channels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lineage: Option<Lineage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub frame: usize,
    pub tag: String,
    pub params: DesnowParams,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub frame: usize,
    pub tag: String,
    pub note: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub note: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportRecord {
    pub pair_id: String,
    pub video: String,
    pub frame: usize,
    pub tag: String,
    pub snowy_path: String,
    pub gt_path: String,
    pub metrics: ImageMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VideoStatus {
    Pending,
    Selected,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: String,
    pub revision: u64,
    /// Sorted by id.
    pub videos: Vec<VideoEntry>,
    pub candidates: BTreeMap<String, Vec<Candidate>>,
    pub selections: BTreeMap<String, Selection>,
    #[serde(default)]
    pub rejections: BTreeMap<String, Rejection>,
    pub exports: Vec<ExportRecord>,
}

impl Default for DatasetManifest {
    fn default() -> Self {
        Self {
            version: MANIFEST_VERSION.to_string(),
            revision: 0,
            videos: Vec::new(),
            candidates: BTreeMap::new(),
            selections: BTreeMap::new(),
            rejections: BTreeMap::new(),
            exports: Vec::new(),
        }
    }
}

/// Per-video curation state as seen by a curator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationSession {
    pub revision: u64,
    /// First pending video, if any.
    pub current: Option<String>,
    pub status: BTreeMap<String, VideoStatus>,
}

impl DatasetManifest {
    pub fn video(&self, id: &str) -> Option<&VideoEntry> {
        self.videos
            .binary_search_by(|v| v.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.videos[i])
    }

    fn require_video(&self, id: &str) -> Result<&VideoEntry> {
        self.video(id)
            .ok_or_else(|| Error::NotFound(format!("video {id:?}")))
    }

    pub fn add_video(&mut self, entry: VideoEntry) -> Result<()> {
        match self.videos.binary_search_by(|v| v.id.cmp(&entry.id)) {
            Ok(_) => Err(Error::Conflict(format!(
                "video {:?} already ingested",
                entry.id
            ))),
            Err(pos) => {
                self.videos.insert(pos, entry);
                Ok(())
            }
        }
    }

    /// Registers one candidate per frame for `params`, replacing any earlier
    /// set with the same tag.
    pub fn add_candidates(
        &mut self,
        video: &str,
        params: DesnowParams,
        paths: Vec<String>,
    ) -> Result<()> {
        let frames = self.require_video(video)?.frames;
        if paths.len() != frames {
            return Err(Error::DimensionMismatch(format!(
                "{} candidate frames for a {frames}-frame video",
                paths.len()
            )));
        }
        let tag = params.tag();
        let list = self.candidates.entry(video.to_string()).or_default();
        list.retain(|c| c.tag != tag);
        list.extend(
            paths
                .into_iter()
                .enumerate()
                .map(|(frame, path)| Candidate {
                    frame,
                    tag: tag.clone(),
                    params,
                    path,
                }),
        );
        list.sort_by(|a, b| a.tag.cmp(&b.tag).then(a.frame.cmp(&b.frame)));
        Ok(())
    }

    /// Distinct candidate tags of a video in sorted order.
    pub fn tags(&self, video: &str) -> Vec<String> {
        let set: BTreeSet<&str> = self
            .candidates
            .get(video)
            .into_iter()
            .flatten()
            .map(|c| c.tag.as_str())
            .collect();
        set.into_iter().map(str::to_string).collect()
    }

    pub fn candidate(&self, video: &str, frame: usize, tag: Option<&str>) -> Option<&Candidate> {
        let tag = match tag {
            Some(t) => t.to_string(),
            None => self.tags(video).into_iter().next()?,
        };
        self.candidates
            .get(video)?
            .iter()
            .find(|c| c.frame == frame && c.tag == tag)
    }

    pub fn status(&self, video: &str) -> VideoStatus {
        if self.selections.contains_key(video) {
            VideoStatus::Selected
        } else if self.rejections.contains_key(video) {
            VideoStatus::Rejected
        } else {
            VideoStatus::Pending
        }
    }

    /// Stores the curator's choice, replacing any earlier one for the video.
    /// `tag` defaults to the video's first candidate set.
    pub fn select(
        &mut self,
        video: &str,
        frame: usize,
        tag: Option<&str>,
        note: &str,
        timestamp: &str,
    ) -> Result<&Selection> {
        self.require_video(video)?;
        if self.status(video) == VideoStatus::Rejected {
            return Err(Error::InvalidTransition(format!(
                "video {video:?} was rejected"
            )));
        }
        let candidate = self.candidate(video, frame, tag).ok_or_else(|| {
            Error::NotFound(format!(
                "no candidate for video {video:?} frame {frame}{}",
                tag.map(|t| format!(" tag {t:?}")).unwrap_or_default()
            ))
        })?;
        let selection = Selection {
            frame,
            tag: candidate.tag.clone(),
            note: note.to_string(),
            timestamp: timestamp.to_string(),
        };
        self.selections.insert(video.to_string(), selection);
        Ok(&self.selections[video])
    }

    pub fn reject(&mut self, video: &str, note: &str, timestamp: &str) -> Result<()> {
        self.require_video(video)?;
        match self.status(video) {
            VideoStatus::Pending => {
                self.rejections.insert(
                    video.to_string(),
                    Rejection {
                        note: note.to_string(),
                        timestamp: timestamp.to_string(),
                    },
                );
                Ok(())
            }
            other => Err(Error::InvalidTransition(format!(
                "video {video:?} is {other:?}, only pending videos can be rejected"
            ))),
        }
    }

    pub fn session(&self) -> CurationSession {
        let status: BTreeMap<String, VideoStatus> = self
            .videos
            .iter()
            .map(|v| (v.id.clone(), self.status(&v.id)))
            .collect();
        CurationSession {
            revision: self.revision,
            current: status
                .iter()
                .find(|(_, s)| **s == VideoStatus::Pending)
                .map(|(id, _)| id.clone()),
            status,
        }
    }

    /// Checks the cross-references between videos, candidates, selections and exports.
    pub fn check_integrity(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Manifest(msg));
        if self.version != MANIFEST_VERSION {
            return fail(format!("unsupported manifest version {:?}", self.version));
        }
        if self.videos.windows(2).any(|w| w[0].id >= w[1].id) {
            return fail("video ids must be unique and sorted".into());
        }
        for (video, list) in &self.candidates {
            let Some(entry) = self.video(video) else {
                return fail(format!("candidates for unknown video {video:?}"));
            };
            let mut seen = BTreeSet::new();
            for c in list {
                if c.frame >= entry.frames {
                    return fail(format!(
                        "candidate frame {} out of range for {video:?}",
                        c.frame
                    ));
                }
                if c.tag != c.params.tag() {
                    return fail(format!(
                        "candidate tag {:?} does not match its parameters",
                        c.tag
                    ));
                }
                if !seen.insert((c.tag.as_str(), c.frame)) {
                    return fail(format!("duplicate candidate {:?}/{}", c.tag, c.frame));
                }
            }
        }
        for (video, sel) in &self.selections {
            if self.candidate(video, sel.frame, Some(&sel.tag)).is_none() {
                return fail(format!(
                    "selection for {video:?} references a missing candidate"
                ));
            }
            if self.rejections.contains_key(video) {
                return fail(format!("video {video:?} is both selected and rejected"));
            }
        }
        for video in self.rejections.keys() {
            if self.video(video).is_none() {
                return fail(format!("rejection of unknown video {video:?}"));
            }
        }
        let mut pair_ids = BTreeSet::new();
        for e in &self.exports {
            if !self.selections.contains_key(&e.video) {
                return fail(format!(
                    "export {} references unselected video {:?}",
                    e.pair_id, e.video
                ));
            }
            if !pair_ids.insert(e.pair_id.as_str()) {
                return fail(format!("duplicate pair id {}", e.pair_id));
            }
        }
        Ok(())
    }

    pub fn to_canonical_json(&self) -> Result<String> {
        canonical_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: DatasetManifest =
            serde_json::from_str(text).map_err(|e| Error::Manifest(format!("parse error: {e}")))?;
        m.check_integrity()?;
        Ok(m)
    }
}

fn sort_value(v: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match v {
        Value::Object(map) => {
            let sorted: BTreeMap<String, Value> =
                map.into_iter().map(|(k, v)| (k, sort_value(v))).collect();
            Value::Object(sorted.into_iter().collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_value).collect()),
        other => other,
    }
}

/// Pretty JSON with recursively sorted keys and a trailing newline.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Manifest(e.to_string()))?;
    let mut s =
        serde_json::to_string_pretty(&sort_value(v)).map_err(|e| Error::Manifest(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Writes `bytes` to a temp file next to `path`, syncs it and renames it over
/// `path`. Readers see either the old or the new file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::Builder::new()
        .prefix(".manifest.")
        .suffix(".tmp")
        .tempfile_in(dir)
        .map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file()
        .sync_all()
        .map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    if let Ok(d) = std::fs::File::open(dir) {
        // directory fsync is best effort; not all platforms allow it
        let _ = d.sync_all();
    }
    Ok(())
}

pub fn save_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    manifest.check_integrity()?;
    write_atomic(path, manifest.to_canonical_json()?.as_bytes())
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DatasetManifest::from_json(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub item: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub added: Vec<String>,
    pub conflicts: Vec<String>,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub generated: Vec<String>,
    pub candidates: usize,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportReport {
    pub pairs: usize,
    pub report_path: String,
    pub report: MetricsReport,
    pub failures: Vec<Failure>,
}

/// Which image `frame_image` returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameKind {
    Snowy,
    Candidate,
}

/// A dataset directory with its loaded manifest. Every mutation is persisted
/// before it becomes visible in memory.
#[derive(Debug)]
pub struct Dataset {
    root: PathBuf,
    manifest: DatasetManifest,
}

fn sanitize_id(raw: &str) -> String {
    let id: String = raw
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if id.is_empty() {
        "video".to_string()
    } else {
        id
    }
}

pub fn timestamp_now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl Dataset {
    /// Opens `root`, creating the directory and an empty manifest if needed.
    pub fn open_or_create(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        if path.exists() {
            return Self::open(root);
        }
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let manifest = DatasetManifest::default();
        save_manifest(&path, &manifest)?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
        })
    }

    pub fn open(root: &Path) -> Result<Self> {
        Ok(Self {
            root: root.to_path_buf(),
            manifest: load_manifest(&root.join(MANIFEST_FILE))?,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    /// Applies `f` to a copy of the manifest, persists it and only then
    /// swaps it in. Bumps the revision.
    pub fn mutate<T>(&mut self, f: impl FnOnce(&mut DatasetManifest) -> Result<T>) -> Result<T> {
        let mut next = self.manifest.clone();
        let out = f(&mut next)?;
        next.revision += 1;
        save_manifest(&self.manifest_path(), &next)?;
        self.manifest = next;
        Ok(out)
    }

    fn relative(&self, path: &Path) -> String {
        path.strip_prefix(&self.root)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }

    fn resolve(&self, stored: &str) -> PathBuf {
        let p = Path::new(stored);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Registers frame directories. With `quadrant_split` every video becomes
    /// four sub-videos whose frames are written under `videos/`.
    pub fn ingest(&mut self, sources: &[PathBuf], quadrant_split: bool) -> Result<IngestReport> {
        let mut report = IngestReport::default();
        let mut entries = Vec::new();
        for source in sources {
            let name = source
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let id = sanitize_id(&name);
            let ids: Vec<String> = if quadrant_split {
                (0..4).map(|q| format!("{id}_q{q}")).collect()
            } else {
                vec![id.clone()]
            };
            let clash = ids.iter().find(|i| {
                self.manifest.video(i).is_some() || entries.iter().any(|e: &VideoEntry| &e.id == *i)
            });
            if let Some(clash) = clash {
                tracing::warn!(video = %clash, "ingest conflict");
                report.conflicts.push(clash.clone());
                continue;
            }
            match self.prepare_entries(source, &id, quadrant_split) {
                Ok(mut new) => {
                    report.added.extend(new.iter().map(|e| e.id.clone()));
                    entries.append(&mut new);
                }
                Err(e) => {
                    tracing::warn!(source = %source.display(), error = %e, "ingest failed");
                    report.failures.push(Failure {
                        item: source.display().to_string(),
                        error: e.to_string(),
                    });
                }
            }
        }
        if !entries.is_empty() {
            self.mutate(|m| entries.into_iter().try_for_each(|e| m.add_video(e)))?;
        }
        Ok(report)
    }

    fn prepare_entries(
        &self,
        source: &Path,
        id: &str,
        quadrant_split: bool,
    ) -> Result<Vec<VideoEntry>> {
        let channels = detect_channels(source)?;
        let video = load_frames(source, channels)?;
        if !quadrant_split {
            let abs = std::fs::canonicalize(source).map_err(|e| Error::io(source, e))?;
            return Ok(vec![VideoEntry {
                id: id.to_string(),
                source: self.relative(&abs),
                frames: video.frames(),
                resolution: Resolution {
                    width: video.cols(),
                    height: video.rows(),
                },
                channels,
                lineage: None,
            }]);
        }
        let mut parts: [Vec<Image>; 4] = Default::default();
        for frame in video.to_frames() {
            for (q, part) in split_quadrants(&frame)?.into_iter().enumerate() {
                parts[q].push(part);
            }
        }
        let mut out = Vec::with_capacity(4);
        for (q, frames) in parts.iter().enumerate() {
            let child_id = format!("{id}_q{q}");
            let dir = self.root.join("videos").join(&child_id);
            let tensor = VideoTensor::from_frames(frames)?;
            save_frames(&tensor, &dir)?;
            out.push(VideoEntry {
                id: child_id,
                source: self.relative(&dir),
                frames: tensor.frames(),
                resolution: Resolution {
                    width: tensor.cols(),
                    height: tensor.rows(),
                },
                channels,
                lineage: Some(Lineage {
                    parent: id.to_string(),
                    quadrant: q as u8,
                }),
            });
        }
        Ok(out)
    }

    pub fn load_video(&self, id: &str) -> Result<VideoTensor> {
        let entry = self.manifest.require_video(id)?;
        load_frames(&self.resolve(&entry.source), entry.channels)
    }

    /// Runs the desnowing once per parameter set and stores every output frame.
    pub fn generate_candidates(
        &mut self,
        video: &str,
        params: &[DesnowParams],
    ) -> Result<CandidateReport> {
        let tensor = self.load_video(video)?;
        let mut report = CandidateReport::default();
        let mut produced = Vec::new();
        for p in params {
            let tag = p.tag();
            let result = desnow_video(&tensor, p).and_then(|out| {
                let dir = self.root.join("candidates").join(video).join(&tag);
                save_frames(&out, &dir)
            });
            match result {
                Ok(paths) => {
                    report.generated.push(tag);
                    report.candidates += paths.len();
                    produced.push((
                        *p,
                        paths.iter().map(|p| self.relative(p)).collect::<Vec<_>>(),
                    ));
                }
                Err(e) => {
                    tracing::warn!(video, tag = %tag, error = %e, "candidate generation failed");
                    report.failures.push(Failure {
                        item: tag,
                        error: e.to_string(),
                    });
                }
            }
        }
        if !produced.is_empty() {
            self.mutate(|m| {
                produced
                    .into_iter()
                    .try_for_each(|(p, paths)| m.add_candidates(video, p, paths))
            })?;
        }
        Ok(report)
    }

    /// Records a selection and returns the new manifest revision.
    pub fn record_selection(
        &mut self,
        video: &str,
        frame: usize,
        tag: Option<&str>,
        note: &str,
        timestamp: &str,
    ) -> Result<u64> {
        self.mutate(|m| m.select(video, frame, tag, note, timestamp).map(|_| ()))?;
        Ok(self.manifest.revision)
    }

    pub fn reject(&mut self, video: &str, note: &str, timestamp: &str) -> Result<u64> {
        self.mutate(|m| m.reject(video, note, timestamp))?;
        Ok(self.manifest.revision)
    }

    /// Frame `n` of the source video, or of a candidate set.
    pub fn frame_image(
        &self,
        video: &str,
        n: usize,
        kind: FrameKind,
        tag: Option<&str>,
    ) -> Result<Image> {
        let entry = self.manifest.require_video(video)?;
        if n >= entry.frames {
            return Err(Error::Bounds(format!("frame {n} of {}", entry.frames)));
        }
        let path = match kind {
            FrameKind::Snowy => self.snowy_frame_path(entry, n)?,
            FrameKind::Candidate => {
                let c = self.manifest.candidate(video, n, tag).ok_or_else(|| {
                    Error::NotFound(format!("no candidate for {video:?} frame {n}"))
                })?;
                self.resolve(&c.path)
            }
        };
        Image::load(&path, entry.channels)
    }

    fn snowy_frame_path(&self, entry: &VideoEntry, n: usize) -> Result<PathBuf> {
        let files = frame_files(&self.resolve(&entry.source))?;
        files
            .get(n)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("source frame {n} of {:?}", entry.id)))
    }

    /// Grayscale snowy frame with pixels of `|snowy − candidate| >= tau` in red.
    pub fn residual_overlay(
        &self,
        video: &str,
        n: usize,
        tau: f64,
        tag: Option<&str>,
    ) -> Result<Image> {
        let snowy = self.frame_image(video, n, FrameKind::Snowy, None)?;
        let candidate = self.frame_image(video, n, FrameKind::Candidate, tag)?;
        let mask = binarize(&crate::synth::residual(&snowy, &candidate)?, tau);
        Ok(Image::from_fn(snowy.rows(), snowy.cols(), 3, |r, c, ch| {
            if mask.get(r, c) {
                if ch == 0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                let luma: f64 = (0..snowy.channels())
                    .map(|k| snowy.get(r, c, k))
                    .sum::<f64>()
                    / snowy.channels() as f64;
                luma
            }
        }))
    }

    /// Writes `snowy/pair_%05d.png` and `gt/pair_%05d.png` for every selected
    /// video (sorted by id) plus `report.json`, and records the exports.
    pub fn export_pairs(&mut self, out_dir: &Path, weights: &LossWeights) -> Result<ExportReport> {
        if self.manifest.selections.is_empty() {
            return Err(Error::NothingSelected);
        }
        let snowy_dir = out_dir.join("snowy");
        let gt_dir = out_dir.join("gt");
        for dir in [&snowy_dir, &gt_dir] {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            for stale in frame_files(dir)? {
                let is_pair = stale
                    .file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("pair_"));
                if is_pair {
                    std::fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
                }
            }
        }

        let mut records = Vec::new();
        let mut failures = Vec::new();
        for (video, sel) in &self.manifest.selections {
            let pair_id = format!("pair_{:05}", records.len());
            match self.export_one(video, sel, &pair_id, &snowy_dir, &gt_dir, weights) {
                Ok(rec) => records.push(rec),
                Err(e) => {
                    tracing::warn!(video = %video, error = %e, "export skipped");
                    failures.push(Failure {
                        item: video.clone(),
                        error: e.to_string(),
                    });
                }
            }
        }

        let report = MetricsReport::from_rows(
            records.iter().map(|r| r.metrics.clone()).collect(),
            *weights,
        );
        let report_path = out_dir.join(REPORT_FILE);
        write_atomic(&report_path, report.to_json()?.as_bytes())?;
        let pairs = records.len();
        self.mutate(|m| {
            m.exports = records;
            Ok(())
        })?;
        Ok(ExportReport {
            pairs,
            report_path: report_path.to_string_lossy().into_owned(),
            report,
            failures,
        })
    }

    fn export_one(
        &self,
        video: &str,
        sel: &Selection,
        pair_id: &str,
        snowy_dir: &Path,
        gt_dir: &Path,
        weights: &LossWeights,
    ) -> Result<ExportRecord> {
        let entry = self.manifest.require_video(video)?;
        let candidate = self
            .manifest
            .candidate(video, sel.frame, Some(&sel.tag))
            .ok_or_else(|| Error::NotFound(format!("candidate {}/{}", sel.tag, sel.frame)))?;
        let snowy = Image::load(&self.snowy_frame_path(entry, sel.frame)?, entry.channels)?;
        let gt = Image::load(&self.resolve(&candidate.path), entry.channels)?;
        if snowy.shape() != gt.shape() {
            return Err(Error::DimensionMismatch(format!(
                "pair {pair_id}: snowy {:?} vs ground truth {:?}",
                snowy.shape(),
                gt.shape()
            )));
        }
        let file = format!("{pair_id}.png");
        let snowy_path = snowy_dir.join(&file);
        let gt_path = gt_dir.join(&file);
        snowy.save_png(&snowy_path)?;
        gt.save_png(&gt_path)?;
        // same inputs `eval --pred snowy --gt gt` sees
        let metrics = evaluate_pair(&file, &snowy, &gt, None, weights)?;
        Ok(ExportRecord {
            pair_id: pair_id.to_string(),
            video: video.to_string(),
            frame: sel.frame,
            tag: sel.tag.clone(),
            snowy_path: self.relative(&snowy_path),
            gt_path: self.relative(&gt_path),
            metrics,
        })
    }

    pub fn default_export_dir(&self) -> PathBuf {
        self.root.join("export")
    }

    /// Candidate frame path on disk for `(video, frame, tag)`.
    pub fn candidate_path(&self, video: &str, frame: usize, tag: Option<&str>) -> Option<PathBuf> {
        self.manifest
            .candidate(video, frame, tag)
            .map(|c| self.resolve(&c.path))
    }
}

/// File name used for frame `n` in every directory the dataset writes.
pub fn frame_name(n: usize) -> String {
    frame_file_name(n)
}
