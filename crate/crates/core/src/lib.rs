//! Ground-truth generation for snow removal from static-camera video.
//!
//! The crate is organised around the data flow of the dataset workflow:
//!
//! * [`video`] loads frame directories into a [`VideoTensor`] and cuts it into
//!   spatiotemporal slices.
//! * [`lowrank`] decomposes each slice with a thin SVD, splits it into a rank-1
//!   background, a foreground and a noise tail, low-passes the temporal
//!   singular vectors of the foreground and reassembles a snow-free video.
//! * [`synth`] renders synthetic snow and rain layers (`X = C + N`) with exact
//!   ground-truth masks.
//! * [`metrics`] holds PSNR, global SSIM, the mask F-measure and the
//!   gradient-magnitude losses.
//! * [`dataset`] keeps the curation manifest: ingest, candidates, human
//!   selections and pair export.

pub mod api;
pub mod dataset;
pub mod error;
pub mod image;
pub mod lowrank;
pub mod metrics;
pub mod synth;
pub mod video;

pub use error::{Error, Result};
pub use image::Image;
pub use video::{SliceMode, SliceView, VideoTensor};
