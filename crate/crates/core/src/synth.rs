//! Synthetic degradations `X = C + N` and residual snow masks.
//!
//! Snow is rendered as anti-aliased discs falling with a constant per-particle
//! velocity and wrapping at the borders; rain as oriented segments with a
//! Gaussian cross profile. Layers are combined by taking the per-pixel
//! maximum, so they stay in `[0, 1]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::video::VideoTensor;

pub const DEFAULT_TAU: f64 = 0.05;

/// Binary mask, `true` = snow/rain pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct SnowMask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
    /// Threshold the mask was produced with.
    pub tau: f64,
}

impl SnowMask {
    /// Wraps raw bits (row-major). `tau` is set to 0.5.
    pub fn from_bits(rows: usize, cols: usize, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), rows * cols, "mask bits must match shape");
        Self {
            rows,
            cols,
            bits,
            tau: 0.5,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.cols + c]
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn fraction(&self) -> f64 {
        self.popcount() as f64 / self.bits.len() as f64
    }

    pub fn to_image(&self) -> Image {
        Image::from_fn(self.rows, self.cols, 1, |r, c, _| {
            if self.get(r, c) {
                1.0
            } else {
                0.0
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegradationKind {
    Snow,
    Rain,
}

/// One rendered particle. For snow `size` is the disc diameter, for rain the
/// streak length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    /// Centre column (pixel units, pixel centres at `c + 0.5`).
    pub x: f64,
    /// Centre row.
    pub y: f64,
    pub size: f64,
    pub opacity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation_deg: Option<f64>,
    /// Per-frame displacement `(dx, dy)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<(f64, f64)>,
}

/// The additive layer `N` of one image together with its particle records.
#[derive(Debug, Clone, PartialEq)]
pub struct DegradationLayer {
    pub kind: DegradationKind,
    /// Single-channel, values in `[0, 1]`; added to every colour channel.
    pub values: Image,
    pub particles: Vec<Particle>,
}

impl DegradationLayer {
    pub fn empty(kind: DegradationKind, rows: usize, cols: usize) -> Self {
        Self {
            kind,
            values: Image::zeros(rows, cols, 1),
            particles: Vec::new(),
        }
    }

    pub fn mask(&self, tau: f64) -> SnowMask {
        binarize(&self.values, tau)
    }
}

/// `X = clamp(C + N, 0, 1)`; a particle of opacity 1 saturates to white.
pub fn compose(clean: &Image, layer: &DegradationLayer) -> Result<Image> {
    compose_values(clean, &layer.values)
}

fn compose_values(clean: &Image, values: &Image) -> Result<Image> {
    if (clean.rows(), clean.cols()) != (values.rows(), values.cols()) || values.channels() != 1 {
        return Err(Error::Bounds(format!(
            "layer {:?} does not fit image {:?}",
            values.shape(),
            clean.shape()
        )));
    }
    Ok(Image::from_fn(
        clean.rows(),
        clean.cols(),
        clean.channels(),
        |r, c, ch| (clean.get(r, c, ch) + values.get(r, c, 0)).clamp(0.0, 1.0),
    ))
}

/// Signed `X − Ĉ`, unclamped.
pub fn residual(degraded: &Image, estimate: &Image) -> Result<Image> {
    degraded.ensure_same_shape(estimate)?;
    let data = degraded
        .data()
        .iter()
        .zip(estimate.data())
        .map(|(x, c)| x - c)
        .collect();
    Image::from_vec(degraded.rows(), degraded.cols(), degraded.channels(), data)
}

/// Pixel is set iff the largest absolute value over its channels reaches `tau`.
pub fn binarize(residual: &Image, tau: f64) -> SnowMask {
    let (rows, cols, channels) = residual.shape();
    let mut bits = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let peak = (0..channels)
                .map(|ch| residual.get(r, c, ch).abs())
                .fold(0.0, f64::max);
            bits.push(peak >= tau);
        }
    }
    SnowMask {
        rows,
        cols,
        bits,
        tau,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnowParams {
    /// Target fraction of masked pixels per frame.
    pub density: f64,
    pub size_min: f64,
    pub size_max: f64,
    pub opacity_min: f64,
    pub opacity_max: f64,
    /// Mean downward speed in pixels per frame.
    pub fall_speed: f64,
    pub tau: f64,
}

impl Default for SnowParams {
    fn default() -> Self {
        Self {
            density: 0.01,
            size_min: 1.0,
            size_max: 3.0,
            opacity_min: 0.6,
            opacity_max: 1.0,
            fall_speed: 6.0,
            tau: DEFAULT_TAU,
        }
    }
}

impl SnowParams {
    fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        let p = self;
        if !(0.0..=1.0).contains(&p.density) {
            return Err(Error::Parameter(format!(
                "density {} outside [0, 1]",
                p.density
            )));
        }
        if !(p.size_min > 0.0 && p.size_min <= p.size_max) {
            return Err(Error::Parameter("need 0 < size_min <= size_max".into()));
        }
        if !(0.0 <= p.opacity_min && p.opacity_min <= p.opacity_max && p.opacity_max <= 1.0) {
            return Err(Error::Parameter(
                "need 0 <= opacity_min <= opacity_max <= 1".into(),
            ));
        }
        if !(p.fall_speed.is_finite() && p.fall_speed >= 0.0) {
            return Err(Error::Parameter(
                "fall speed must be finite and >= 0".into(),
            ));
        }
        if !(p.tau > 0.0 && p.tau < 1.0) {
            return Err(Error::Parameter("tau must lie in (0, 1)".into()));
        }
        if (rows as f64) < p.size_max || (cols as f64) < p.size_max {
            return Err(Error::Parameter(format!(
                "background {rows}x{cols} smaller than particle size {}",
                p.size_max
            )));
        }
        Ok(())
    }

    /// Expected masked area of one particle, ignoring overlap.
    fn mean_masked_area(&self) -> f64 {
        const STEPS: usize = 64;
        let mean_opacity = 0.5 * (self.opacity_min + self.opacity_max);
        let shrink = if mean_opacity > 0.0 {
            (self.tau / mean_opacity).min(1.0)
        } else {
            1.0
        };
        let mut acc = 0.0;
        for i in 0..STEPS {
            let d =
                self.size_min + (self.size_max - self.size_min) * (i as f64 + 0.5) / STEPS as f64;
            let radius = d / 2.0 + 0.5 - shrink;
            acc += std::f64::consts::PI * radius.max(0.5).powi(2);
        }
        acc / STEPS as f64
    }
}

/// A synthetic snowy video with exact per-frame ground truth.
#[derive(Debug, Clone)]
pub struct SnowVideo {
    pub video: VideoTensor,
    pub clean: VideoTensor,
    pub layers: Vec<DegradationLayer>,
    pub masks: Vec<SnowMask>,
    pub particles: Vec<Particle>,
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Renders a static background with falling snow over `frames` frames.
pub fn synth_snow_video(
    background: &Image,
    frames: usize,
    params: &SnowParams,
    seed: u64,
) -> Result<SnowVideo> {
    let (rows, cols) = (background.rows(), background.cols());
    params.validate(rows, cols)?;
    if frames < 4 {
        return Err(Error::Parameter(format!(
            "need at least 4 frames, got {frames}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count =
        (params.density * (rows * cols) as f64 / params.mean_masked_area()).round() as usize;
    let particles: Vec<Particle> = (0..count)
        .map(|_| {
            let x = uniform(&mut rng, 0.0, cols as f64);
            let y = uniform(&mut rng, 0.0, rows as f64);
            let size = uniform(&mut rng, params.size_min, params.size_max);
            let opacity = uniform(&mut rng, params.opacity_min, params.opacity_max);
            let vy = params.fall_speed * uniform(&mut rng, 0.8, 1.2);
            let vx = params.fall_speed * uniform(&mut rng, -0.25, 0.25);
            Particle {
                x,
                y,
                size,
                opacity,
                orientation_deg: None,
                velocity: Some((vx, vy)),
            }
        })
        .collect();

    let mut layers = Vec::with_capacity(frames);
    let mut degraded = Vec::with_capacity(frames);
    for t in 0..frames {
        let mut values = Image::zeros(rows, cols, 1);
        for p in &particles {
            let (vx, vy) = p.velocity.unwrap_or((0.0, 0.0));
            let cx = (p.x + vx * t as f64).rem_euclid(cols as f64);
            let cy = (p.y + vy * t as f64).rem_euclid(rows as f64);
            splat_disc(&mut values, cx, cy, p.size / 2.0, p.opacity);
        }
        degraded.push(compose_values(background, &values)?);
        layers.push(DegradationLayer {
            kind: DegradationKind::Snow,
            values,
            particles: Vec::new(),
        });
    }
    let masks = layers.iter().map(|l| l.mask(params.tau)).collect();
    Ok(SnowVideo {
        video: VideoTensor::from_frames(&degraded)?,
        clean: VideoTensor::repeated(background, frames)?,
        layers,
        masks,
        particles,
    })
}

// Anti-aliased disc on a torus; coverage falls off linearly over one pixel.
fn splat_disc(layer: &mut Image, cx: f64, cy: f64, radius: f64, opacity: f64) {
    let (rows, cols) = (layer.rows() as i64, layer.cols() as i64);
    let reach = (radius + 1.0).ceil() as i64;
    let (pr, pc) = (cy.floor() as i64, cx.floor() as i64);
    for dr in -reach..=reach {
        for dc in -reach..=reach {
            let (r, c) = (pr + dr, pc + dc);
            let dy = (r as f64 + 0.5) - cy;
            let dx = (c as f64 + 0.5) - cx;
            let dist = (dx * dx + dy * dy).sqrt();
            let coverage = (radius + 0.5 - dist).clamp(0.0, 1.0);
            if coverage <= 0.0 {
                continue;
            }
            let (r, c) = (r.rem_euclid(rows) as usize, c.rem_euclid(cols) as usize);
            let v = coverage * opacity;
            if v > layer.get(r, c, 0) {
                layer.set(r, c, 0, v);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RainParams {
    /// Degrees from the +x axis, rows growing downward; 90 is vertical.
    pub orientation_deg: f64,
    pub length: f64,
    /// Target fraction of masked pixels.
    pub density: f64,
    pub opacity: f64,
    /// Standard deviation of the Gaussian cross profile, pixels.
    pub width_sigma: f64,
    pub tau: f64,
}

impl Default for RainParams {
    fn default() -> Self {
        Self {
            orientation_deg: 90.0,
            length: 9.0,
            density: 0.02,
            opacity: 0.5,
            width_sigma: 0.5,
            tau: DEFAULT_TAU,
        }
    }
}

impl RainParams {
    fn half_width(&self) -> f64 {
        let ratio = (self.opacity / self.tau).max(1.0);
        self.width_sigma * (2.0 * ratio.ln()).sqrt()
    }

    // half extents of the streak's bounding box along x and y
    fn half_extents(&self) -> (f64, f64) {
        let theta = self.orientation_deg.to_radians();
        let (dx, dy) = (theta.cos().abs(), theta.sin().abs());
        let hl = self.length / 2.0;
        let hw = self.half_width();
        (hl * dx + hw * dy, hl * dy + hw * dx)
    }
}

#[derive(Debug, Clone)]
pub struct RainImage {
    pub image: Image,
    pub mask: SnowMask,
    pub layer: DegradationLayer,
}

/// Rasterises one streak (or snow disc) into its own layer.
pub fn rasterize_particle(
    kind: DegradationKind,
    p: &Particle,
    rows: usize,
    cols: usize,
    sigma: f64,
) -> Image {
    let mut layer = Image::zeros(rows, cols, 1);
    match kind {
        DegradationKind::Snow => splat_disc(&mut layer, p.x, p.y, p.size / 2.0, p.opacity),
        DegradationKind::Rain => splat_streak(&mut layer, p, sigma),
    }
    layer
}

fn splat_streak(layer: &mut Image, p: &Particle, sigma: f64) {
    let theta = p.orientation_deg.unwrap_or(90.0).to_radians();
    let (ux, uy) = (theta.cos(), theta.sin());
    let half = p.size / 2.0;
    let reach = half + 4.0 * sigma + 1.0;
    let r0 = ((p.y - reach).floor().max(0.0)) as usize;
    let r1 = ((p.y + reach).ceil() as usize).min(layer.rows());
    let c0 = ((p.x - reach).floor().max(0.0)) as usize;
    let c1 = ((p.x + reach).ceil() as usize).min(layer.cols());
    for r in r0..r1 {
        for c in c0..c1 {
            let dx = c as f64 + 0.5 - p.x;
            let dy = r as f64 + 0.5 - p.y;
            let along = dx * ux + dy * uy;
            if along.abs() > half {
                continue;
            }
            let perp = -dx * uy + dy * ux;
            let v = p.opacity * (-perp * perp / (2.0 * sigma * sigma)).exp();
            if v > layer.get(r, c, 0) {
                layer.set(r, c, 0, v);
            }
        }
    }
}

/// Adds straight rain streaks to a single image. Streaks lie fully inside the frame.
pub fn synth_rain_streaks(background: &Image, params: &RainParams, seed: u64) -> Result<RainImage> {
    let (rows, cols) = (background.rows(), background.cols());
    if !(0.0..=1.0).contains(&params.density) {
        return Err(Error::Parameter(format!(
            "density {} outside [0, 1]",
            params.density
        )));
    }
    if !(params.length > 0.0 && params.width_sigma > 0.0) {
        return Err(Error::Parameter(
            "streak length and width must be > 0".into(),
        ));
    }
    if !(params.opacity > 0.0 && params.opacity <= 1.0) {
        return Err(Error::Parameter("opacity must lie in (0, 1]".into()));
    }
    if !(params.tau > 0.0 && params.tau < 1.0) {
        return Err(Error::Parameter("tau must lie in (0, 1)".into()));
    }
    let (hx, hy) = params.half_extents();
    if 2.0 * hx + 1.0 > cols as f64 || 2.0 * hy + 1.0 > rows as f64 {
        return Err(Error::Parameter(format!(
            "streaks of length {} do not fit a {rows}x{cols} image",
            params.length
        )));
    }
    let streak_area = params.length * 2.0 * params.half_width();
    let count = (params.density * (rows * cols) as f64 / streak_area).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let particles: Vec<Particle> = (0..count)
        .map(|_| Particle {
            x: uniform(&mut rng, hx + 0.5, cols as f64 - hx - 0.5),
            y: uniform(&mut rng, hy + 0.5, rows as f64 - hy - 0.5),
            size: params.length,
            opacity: params.opacity,
            orientation_deg: Some(params.orientation_deg),
            velocity: None,
        })
        .collect();
    let mut values = Image::zeros(rows, cols, 1);
    for p in &particles {
        splat_streak(&mut values, p, params.width_sigma);
    }
    let layer = DegradationLayer {
        kind: DegradationKind::Rain,
        values,
        particles,
    };
    Ok(RainImage {
        image: compose(background, &layer)?,
        mask: layer.mask(params.tau),
        layer,
    })
}

/// Smooth textured test background in `[lo, hi]`, deterministic in `seed`.
pub fn textured_background(
    rows: usize,
    cols: usize,
    channels: usize,
    lo: f64,
    hi: f64,
    seed: u64,
) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                uniform(&mut rng, 0.05, 0.3),
                uniform(&mut rng, 0.05, 0.3),
                uniform(&mut rng, 0.0, std::f64::consts::TAU),
                uniform(&mut rng, 0.5, 1.0),
            )
        })
        .collect();
    let norm: f64 = waves.iter().map(|w| w.3).sum();
    Image::from_fn(rows, cols, channels, |r, c, ch| {
        let s: f64 = waves
            .iter()
            .map(|&(fx, fy, ph, amp)| amp * (fx * c as f64 + fy * r as f64 + ph + ch as f64).sin())
            .sum();
        lo + (hi - lo) * 0.5 * (1.0 + s / norm)
    })
}
