//! JSON bodies of the curation HTTP API, shared by server and client.

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, Resolution, Selection, VideoStatus};

/// One row of `GET /api/videos`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSummary {
    pub id: String,
    pub frames: usize,
    pub resolution: Resolution,
    pub status: VideoStatus,
}

/// `GET /api/videos/{id}`: the summary plus what the compare view needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoDetail {
    pub id: String,
    pub frames: usize,
    pub resolution: Resolution,
    pub status: VideoStatus,
    pub channels: usize,
    /// Candidate parameter tags, sorted; the first is the default.
    pub tags: Vec<String>,
    pub selection: Option<Selection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRequest {
    pub frame: usize,
    #[serde(default)]
    pub note: String,
    /// Candidate tag; the video's default tag when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionRequest {
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationAck {
    pub ok: bool,
    pub manifest_revision: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportAck {
    pub pairs: usize,
    pub report_path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub code: String,
}

pub fn summaries(manifest: &DatasetManifest) -> Vec<VideoSummary> {
    manifest
        .videos
        .iter()
        .map(|v| VideoSummary {
            id: v.id.clone(),
            frames: v.frames,
            resolution: v.resolution,
            status: manifest.status(&v.id),
        })
        .collect()
}

pub fn detail(manifest: &DatasetManifest, id: &str) -> Option<VideoDetail> {
    let v = manifest.video(id)?;
    Some(VideoDetail {
        id: v.id.clone(),
        frames: v.frames,
        resolution: v.resolution,
        status: manifest.status(id),
        channels: v.channels,
        tags: manifest.tags(id),
        selection: manifest.selections.get(id).cloned(),
    })
}
