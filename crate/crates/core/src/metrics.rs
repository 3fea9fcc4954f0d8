//! Full-reference quality metrics and the non-adversarial restoration losses.
//!
//! All functions take images in `[0, 1]`. L1-style terms are per-pixel means
//! so weights do not depend on resolution.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::synth::{binarize, residual, SnowMask};
use crate::video::frame_files;

/// Peak signal-to-noise ratio in dB; identical inputs give [`Psnr::INFINITE`].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Psnr(pub f64);

impl Psnr {
    pub const INFINITE: Psnr = Psnr(f64::INFINITY);

    pub fn is_infinite(&self) -> bool {
        self.0.is_infinite()
    }

    pub fn db(&self) -> f64 {
        self.0
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{:.4} dB", self.0)
        }
    }
}

// JSON has no infinity, so the sentinel travels as the string "inf".
impl Serialize for Psnr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Psnr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Psnr(v)),
            Raw::Str(s) if s == "inf" => Ok(Psnr::INFINITE),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("bad psnr value {s:?}"))),
        }
    }
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let n = a.data().len() as f64;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n)
}

pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<Psnr> {
    let err = mse(a, b)?;
    if err == 0.0 {
        return Ok(Psnr::INFINITE);
    }
    Ok(Psnr(10.0 * (peak * peak / err).log10()))
}

/// Mean absolute difference.
pub fn l1(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let n = a.data().len() as f64;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / n)
}

/// Global SSIM from whole-image means, variances and covariance. Colour
/// images average the per-channel values.
pub fn ssim(a: &Image, b: &Image, c1: f64, c2: f64) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let channels = a.channels();
    let total: f64 = (0..channels)
        .map(|ch| ssim_channel(&a.channel(ch), &b.channel(ch), c1, c2))
        .sum();
    Ok(total / channels as f64)
}

fn ssim_channel(a: &Image, b: &Image, c1: f64, c2: f64) -> f64 {
    if a.data() == b.data() {
        return 1.0;
    }
    let n = a.data().len() as f64;
    let mean_a = a.data().iter().sum::<f64>() / n;
    let mean_b = b.data().iter().sum::<f64>() / n;
    let (mut var_a, mut var_b, mut cov) = (0.0, 0.0, 0.0);
    for (x, y) in a.data().iter().zip(b.data()) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        var_a += dx * dx;
        var_b += dy * dy;
        cov += dx * dy;
    }
    var_a /= n;
    var_b /= n;
    cov /= n;
    ((2.0 * mean_a * mean_b + c1) * (2.0 * cov + c2))
        / ((mean_a * mean_a + mean_b * mean_b + c1) * (var_a + var_b + c2))
}

/// Pixel-wise agreement between a predicted and a reference mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MaskConfusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl MaskConfusion {
    pub fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, fp, fn_ }
    }
}

pub fn mask_confusion(pred: &SnowMask, reference: &SnowMask) -> Result<MaskConfusion> {
    if pred.shape() != reference.shape() {
        return Err(Error::DimensionMismatch(format!(
            "mask {:?} vs {:?}",
            pred.shape(),
            reference.shape()
        )));
    }
    let mut c = MaskConfusion::default();
    for (&p, &r) in pred.bits().iter().zip(reference.bits()) {
        match (p, r) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FScore {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

/// Precision `TP/(TP+FP)`, recall `TP/(TP+FN)` and their harmonic mean. Two
/// empty masks agree perfectly (`F = 1`); any disagreement without a true
/// positive gives `F = 0`.
pub fn f_measure(c: MaskConfusion) -> FScore {
    if c.tp == 0 {
        // 0/0 ratios follow the same convention as F
        let v = if c.fp == 0 && c.fn_ == 0 { 1.0 } else { 0.0 };
        return FScore {
            precision: v,
            recall: v,
            f_measure: v,
        };
    }
    let tp = c.tp as f64;
    let precision = tp / (tp + c.fp as f64);
    let recall = tp / (tp + c.fn_ as f64);
    FScore {
        precision,
        recall,
        f_measure: 2.0 * precision * recall / (precision + recall),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskLoss {
    pub confusion: MaskConfusion,
    pub score: FScore,
    /// `λ_f · F`, the weighted F-measure itself.
    pub loss: f64,
    /// `λ_f · (1 − F)`, the form that decreases with agreement.
    pub loss_complement: f64,
}

/// Compares the snow mask of `X − C` with that of `X − Ĉ`.
pub fn loss_f(
    degraded: &Image,
    truth: &Image,
    estimate: &Image,
    tau: f64,
    lambda_f: f64,
) -> Result<MaskLoss> {
    let reference = binarize(&residual(degraded, truth)?, tau);
    let predicted = binarize(&residual(degraded, estimate)?, tau);
    let confusion = mask_confusion(&predicted, &reference)?;
    let score = f_measure(confusion);
    Ok(MaskLoss {
        confusion,
        score,
        loss: lambda_f * score.f_measure,
        loss_complement: lambda_f * (1.0 - score.f_measure),
    })
}

/// `sqrt(dx² + α·dy²)` with central differences and replicated borders.
/// Colour images are averaged over channels.
pub fn gradient_magnitude(img: &Image, alpha: f64) -> Image {
    let (rows, cols, channels) = img.shape();
    let mut out = Image::zeros(rows, cols, 1);
    for ch in 0..channels {
        for r in 0..rows {
            let (up, down) = (r.saturating_sub(1), (r + 1).min(rows - 1));
            for c in 0..cols {
                let (left, right) = (c.saturating_sub(1), (c + 1).min(cols - 1));
                let dx = (img.get(r, right, ch) - img.get(r, left, ch)) / 2.0;
                let dy = (img.get(down, c, ch) - img.get(up, c, ch)) / 2.0;
                let g = (dx * dx + alpha * dy * dy).sqrt();
                out.set(r, c, 0, out.get(r, c, 0) + g);
            }
        }
    }
    if channels > 1 {
        out = out.map(|v| v / channels as f64);
    }
    out
}

/// `λ · mean |‖∇a‖ − ‖∇b‖|`.
pub fn gradient_l1_loss(a: &Image, b: &Image, alpha: f64, lambda: f64) -> Result<f64> {
    a.ensure_same_shape(b)?;
    Ok(lambda * l1(&gradient_magnitude(a, alpha), &gradient_magnitude(b, alpha))?)
}

/// Weights and constants of the loss suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// L1 reconstruction weight.
    pub lambda: f64,
    pub lambda_f: f64,
    pub lambda_gd: f64,
    pub lambda_ssim: f64,
    pub alpha: f64,
    pub c1: f64,
    pub c2: f64,
    pub tau: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda: 100.0,
            lambda_f: 10.0,
            lambda_gd: 10.0,
            lambda_ssim: 1.0,
            alpha: 4.0,
            c1: 0.01 * 0.01,
            c2: 0.03 * 0.03,
            tau: 0.05,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self {
            lambda: 0.0,
            lambda_f: 0.0,
            lambda_gd: 0.0,
            lambda_ssim: 0.0,
            ..Self::default()
        }
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail
    pub fn validate(&self) -> Result<()> {
        let weights = [self.lambda, self.lambda_f, self.lambda_gd, self.lambda_ssim];
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Parameter("loss weights must be >= 0".into()));
        }
        if !(self.alpha >= 1.0) {
            return Err(Error::Parameter("alpha must be >= 1".into()));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(Error::Parameter("SSIM constants must be > 0".into()));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Parameter("tau must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Individual terms of the three generator objectives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub adversarial: f64,
    /// `λ · mean|C − Ĉ|`
    pub l1_refined: f64,
    /// `λ · mean|C − C′|`
    pub l1_first_stage: f64,
    /// `λ_f · F` between the masks of `X − C` and `X − Ĉ`.
    pub l_f: f64,
    /// `λ_Gd · mean|‖∇C‖ − ‖∇C′‖|`
    pub l1_grad: f64,
    /// `λ_ssim · SSIM(C, Ĉ)`
    pub l_ssim: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeLosses {
    /// Desnowing objective: adversarial + L1 + mask F-measure term.
    pub l_s: f64,
    /// First deraining stage: adversarial + L1 + gradient term.
    pub l_gd: f64,
    /// Refinement stage: adversarial + L1 + SSIM term.
    pub l_gr: f64,
    pub components: LossComponents,
}

/// Evaluates the objectives with the adversarial terms replaced by the
/// supplied scalar. `refined` is the final estimate `Ĉ`, `first_stage` is `C′`.
pub fn composite_losses(
    degraded: &Image,
    truth: &Image,
    refined: &Image,
    first_stage: &Image,
    weights: &LossWeights,
    adversarial: f64,
) -> Result<CompositeLosses> {
    weights.validate()?;
    truth.ensure_same_shape(degraded)?;
    truth.ensure_same_shape(refined)?;
    truth.ensure_same_shape(first_stage)?;
    let components = LossComponents {
        adversarial,
        l1_refined: weights.lambda * l1(truth, refined)?,
        l1_first_stage: weights.lambda * l1(truth, first_stage)?,
        l_f: loss_f(degraded, truth, refined, weights.tau, weights.lambda_f)?.loss,
        l1_grad: gradient_l1_loss(truth, first_stage, weights.alpha, weights.lambda_gd)?,
        l_ssim: weights.lambda_ssim * ssim(truth, refined, weights.c1, weights.c2)?,
    };
    Ok(CompositeLosses {
        l_s: components.adversarial + components.l1_refined + components.l_f,
        l_gd: components.adversarial + components.l1_first_stage + components.l1_grad,
        l_gr: components.adversarial + components.l1_refined + components.l_ssim,
        components,
    })
}

/// One row of an evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub name: String,
    pub psnr: Psnr,
    pub ssim: f64,
    pub l1: f64,
    pub gradient_l1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_measure: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_f: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_f_complement: Option<f64>,
    pub l_ssim: f64,
}

/// Corpus means of the numeric [`ImageMetrics`] fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub count: usize,
    pub psnr: Psnr,
    pub ssim: f64,
    pub l1: f64,
    pub gradient_l1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_measure: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_f: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_f_complement: Option<f64>,
    pub l_ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_image: Vec<ImageMetrics>,
    pub mean: MeanMetrics,
    pub weights: LossWeights,
}

/// Metrics of an estimate against ground truth; mask terms need the degraded input.
pub fn evaluate_pair(
    name: &str,
    estimate: &Image,
    truth: &Image,
    degraded: Option<&Image>,
    weights: &LossWeights,
) -> Result<ImageMetrics> {
    let ssim_value = ssim(truth, estimate, weights.c1, weights.c2)?;
    let mask = degraded
        .map(|x| loss_f(x, truth, estimate, weights.tau, weights.lambda_f))
        .transpose()?;
    Ok(ImageMetrics {
        name: name.to_string(),
        psnr: psnr(estimate, truth, 1.0)?,
        ssim: ssim_value,
        l1: l1(estimate, truth)?,
        gradient_l1: gradient_l1_loss(truth, estimate, weights.alpha, weights.lambda_gd)?,
        f_measure: mask.map(|m| m.score.f_measure),
        precision: mask.map(|m| m.score.precision),
        recall: mask.map(|m| m.score.recall),
        l_f: mask.map(|m| m.loss),
        l_f_complement: mask.map(|m| m.loss_complement),
        l_ssim: weights.lambda_ssim * ssim_value,
    })
}

// Pairwise summation: fixed tree shape regardless of how rows were produced.
fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => pairwise_sum(&values[..n / 2]) + pairwise_sum(&values[n / 2..]),
    }
}

fn mean_of(rows: &[ImageMetrics], f: impl Fn(&ImageMetrics) -> f64) -> f64 {
    let values: Vec<f64> = rows.iter().map(f).collect();
    pairwise_sum(&values) / rows.len() as f64
}

fn mean_opt(rows: &[ImageMetrics], f: impl Fn(&ImageMetrics) -> Option<f64>) -> Option<f64> {
    let values: Option<Vec<f64>> = rows.iter().map(f).collect();
    values
        .filter(|v| !v.is_empty())
        .map(|v| pairwise_sum(&v) / v.len() as f64)
}

impl MetricsReport {
    pub fn from_rows(per_image: Vec<ImageMetrics>, weights: LossWeights) -> Self {
        let rows = &per_image;
        let mean = MeanMetrics {
            count: rows.len(),
            psnr: Psnr(mean_of(rows, |r| r.psnr.db())),
            ssim: mean_of(rows, |r| r.ssim),
            l1: mean_of(rows, |r| r.l1),
            gradient_l1: mean_of(rows, |r| r.gradient_l1),
            f_measure: mean_opt(rows, |r| r.f_measure),
            precision: mean_opt(rows, |r| r.precision),
            recall: mean_opt(rows, |r| r.recall),
            l_f: mean_opt(rows, |r| r.l_f),
            l_f_complement: mean_opt(rows, |r| r.l_f_complement),
            l_ssim: mean_of(rows, |r| r.l_ssim),
        };
        Self {
            per_image,
            mean,
            weights,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        crate::dataset::canonical_json(self)
    }
}

/// Evaluates every PNG in `pred_dir` against the same-named file in `gt_dir`
/// (and `degraded_dir`, if given).
pub fn evaluate_dirs(
    pred_dir: &Path,
    gt_dir: &Path,
    degraded_dir: Option<&Path>,
    channels: usize,
    weights: &LossWeights,
) -> Result<MetricsReport> {
    use rayon::prelude::*;

    weights.validate()?;
    let files = frame_files(pred_dir)?;
    if files.is_empty() {
        return Err(Error::NotFound(format!(
            "no PNG files in {}",
            pred_dir.display()
        )));
    }
    let names: BTreeMap<String, ()> = files
        .iter()
        .filter_map(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| (n.to_string(), ()))
        })
        .collect();
    let rows: Vec<Result<ImageMetrics>> = names
        .keys()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|name| {
            let estimate = Image::load(&pred_dir.join(name), channels)?;
            let truth = Image::load(&gt_dir.join(name), channels)?;
            let degraded = degraded_dir
                .map(|d| Image::load(&d.join(name), channels))
                .transpose()?;
            evaluate_pair(name, &estimate, &truth, degraded.as_ref(), weights)
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport::from_rows(rows, *weights))
}
