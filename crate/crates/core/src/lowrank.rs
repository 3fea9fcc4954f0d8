//! Low-rank desnowing of spatiotemporal slices.
//!
//! Each slice `A` (time on rows) is factored as `A = U S Vᵀ`. The leading
//! rank-1 term is the stationary background `B`, terms `2..=q` form the
//! foreground `F` and the remaining terms up to the numeric rank form the
//! noise tail `N`. Snowflakes are short-lived, so they live in the high
//! temporal frequencies of the foreground's left singular vectors; zeroing
//! those DFT bins and reassembling `B + F̃ + N` yields a snow-free slice.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video::{SliceMode, SliceView, VideoTensor};

const RECONSTRUCTION_TOL: f64 = 1e-9;

/// Thin SVD of a `k x n` slice: `U` is `k x p`, `V` is `n x p`, `p = min(k, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSvd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
    /// Number of singular values above the numeric cutoff.
    pub rank: usize,
}

impl SliceSvd {
    /// Factors `matrix`, returning `None` if no accurate factorisation is found.
    ///
    /// Singular values are sorted non-increasing and each pair `(u_l, v_l)` is
    /// oriented so that the largest-magnitude entry of `v_l` is positive
    /// (lowest index wins ties).
    pub fn compute(matrix: &DMatrix<f64>) -> Option<SliceSvd> {
        let (k, n) = matrix.shape();
        let p = k.min(n);
        let (u_raw, sv, vt_raw) = verified_factors(matrix)?;

        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));

        let mut u = DMatrix::zeros(k, p);
        let mut v = DMatrix::zeros(n, p);
        let mut singular_values = DVector::zeros(p);
        for (dst, &src) in order.iter().enumerate() {
            let mut best = 0;
            for j in 1..n {
                if vt_raw[(src, j)].abs() > vt_raw[(src, best)].abs() {
                    best = j;
                }
            }
            let sign = if vt_raw[(src, best)] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..n {
                v[(j, dst)] = sign * vt_raw[(src, j)];
            }
            for i in 0..k {
                u[(i, dst)] = sign * u_raw[(i, src)];
            }
            singular_values[dst] = sv[src].max(0.0);
        }

        let cutoff =
            singular_values.get(0).copied().unwrap_or(0.0) * (k.max(n) as f64) * f64::EPSILON;
        let rank = singular_values
            .iter()
            .filter(|&&s| s > cutoff && s > 0.0)
            .count();
        Some(SliceSvd {
            u,
            singular_values,
            v,
            rank,
        })
    }

    /// `p = min(k, n)`.
    pub fn width(&self) -> usize {
        self.singular_values.len()
    }

    pub fn frames(&self) -> usize {
        self.u.nrows()
    }

    pub fn cols(&self) -> usize {
        self.v.nrows()
    }

    /// `Σ_{l in range} u_l σ_l v_lᵀ` (zero-based, half-open).
    fn sum_terms(&self, u: &DMatrix<f64>, from: usize, to: usize) -> DMatrix<f64> {
        let (k, n) = (self.frames(), self.cols());
        if from >= to {
            return DMatrix::zeros(k, n);
        }
        let mut scaled = u.columns(from, to - from).into_owned();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= self.singular_values[from + j];
        }
        scaled * self.v.columns(from, to - from).transpose()
    }

    /// `U diag(S) Vᵀ` over all `p` terms.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.sum_terms(&self.u, 0, self.width())
    }
}

type RawFactors = (DMatrix<f64>, DVector<f64>, DMatrix<f64>);

/// Thin SVD as `(U, S, Vᵀ)`, rejected unless it reconstructs `matrix`.
fn verified_factors(matrix: &DMatrix<f64>) -> Option<RawFactors> {
    let (k, n) = matrix.shape();
    let p = k.min(n);
    let svd = faer::Mat::from_fn(k, n, |i, j| matrix[(i, j)])
        .thin_svd()
        .ok()?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let factors = (
        DMatrix::from_fn(k, p, |i, j| u[(i, j)]),
        DVector::from_fn(p, |i, _| s[i]),
        DMatrix::from_fn(p, n, |i, j| v[(j, i)]),
    );
    let rec = &factors.0 * DMatrix::from_diagonal(&factors.1) * &factors.2;
    let tol = RECONSTRUCTION_TOL * matrix.amax().max(1.0);
    let ok = (rec - matrix).amax() <= tol && factors.1.iter().all(|v| v.is_finite());
    ok.then_some(factors)
}

/// SVD of a slice, mapping a failed factorisation to [`Error::NumericFailure`].
pub fn slice_svd(slice: &SliceView) -> Result<SliceSvd> {
    SliceSvd::compute(&slice.matrix).ok_or_else(|| Error::NumericFailure {
        mode: slice.mode.to_string(),
        index: slice.index,
        channel: slice.channel,
    })
}

/// The single term `u_l σ_l v_lᵀ`, with `l` one-based.
pub fn rank_projection(svd: &SliceSvd, l: usize) -> Result<DMatrix<f64>> {
    if l == 0 || l > svd.width() {
        return Err(Error::Bounds(format!(
            "projection index {l} outside 1..={}",
            svd.width()
        )));
    }
    Ok(svd.sum_terms(&svd.u, l - 1, l))
}

/// How to pick the foreground rank boundary `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QRule {
    /// Smallest `q` whose leading squared singular values reach this fraction
    /// of the total energy.
    Energy(f64),
    /// A fixed boundary, capped at the numeric rank.
    Fixed(usize),
}

impl Default for QRule {
    fn default() -> Self {
        QRule::Energy(0.999)
    }
}

impl QRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            QRule::Energy(f) if !(f > 0.0 && f <= 1.0) => Err(Error::Parameter(format!(
                "energy fraction {f} outside (0, 1]"
            ))),
            QRule::Fixed(0) => Err(Error::Parameter("fixed rank must be >= 1".into())),
            _ => Ok(()),
        }
    }

    /// Boundary for a slice with numeric rank `rank`. The result lies in
    /// `2..=rank` when `rank >= 2`, and equals `rank` otherwise.
    pub fn boundary(&self, singular_values: &[f64], rank: usize) -> usize {
        if rank <= 1 {
            return rank;
        }
        let q = match *self {
            QRule::Energy(fraction) => {
                let energy: Vec<f64> = singular_values[..rank].iter().map(|s| s * s).collect();
                let total: f64 = energy.iter().sum();
                let target = fraction * total;
                let mut acc = 0.0;
                let mut q = rank;
                for (l, e) in energy.iter().enumerate() {
                    acc += e;
                    if acc >= target {
                        q = l + 1;
                        break;
                    }
                }
                q
            }
            QRule::Fixed(r) => r,
        };
        q.clamp(2, rank)
    }
}

impl fmt::Display for QRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QRule::Energy(x) => write!(f, "energy:{x}"),
            QRule::Fixed(r) => write!(f, "fixed:{r}"),
        }
    }
}

impl FromStr for QRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parameter(format!("q rule {s:?}: expected energy:<f> or fixed:<r>"));
        let (kind, value) = s.split_once(':').ok_or_else(bad)?;
        let rule = match kind {
            "energy" => QRule::Energy(value.parse().map_err(|_| bad())?),
            "fixed" => QRule::Fixed(value.parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        rule.validate()?;
        Ok(rule)
    }
}

impl Serialize for QRule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for QRule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Background / foreground / noise split of one slice.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSplit {
    pub q: usize,
    pub background: DMatrix<f64>,
    pub foreground: DMatrix<f64>,
    pub noise: DMatrix<f64>,
}

pub fn split_components(svd: &SliceSvd, q_rule: QRule) -> Result<ComponentSplit> {
    if svd.rank == 0 {
        return Err(Error::Parameter(
            "cannot split a slice of numeric rank 0".into(),
        ));
    }
    let q = q_rule.boundary(svd.singular_values.as_slice(), svd.rank);
    Ok(ComponentSplit {
        q,
        background: svd.sum_terms(&svd.u, 0, 1),
        foreground: svd.sum_terms(&svd.u, 1, q),
        noise: svd.sum_terms(&svd.u, q, svd.rank),
    })
}

/// Temporal pass band as fractions of the Nyquist frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandpassSpec {
    pub low: f64,
    pub high: f64,
}

impl Default for BandpassSpec {
    fn default() -> Self {
        Self {
            low: 0.0,
            high: 0.1,
        }
    }
}

impl BandpassSpec {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        let spec = Self { low, high };
        spec.validate()?;
        Ok(spec)
    }

    /// The full band; leaves every signal unchanged.
    pub fn identity() -> Self {
        Self {
            low: 0.0,
            high: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.low && self.low <= self.high && self.high <= 1.0) {
            return Err(Error::Parameter(format!(
                "band {}:{} must satisfy 0 <= low <= high <= 1",
                self.low, self.high
            )));
        }
        Ok(())
    }

    /// Whether DFT bin `bin` of a length-`len` signal is retained.
    pub fn keeps_bin(&self, bin: usize, len: usize) -> bool {
        let folded = bin.min(len - bin);
        let freq = (2 * folded) as f64 / len as f64;
        self.low <= freq && freq <= self.high
    }
}

impl fmt::Display for BandpassSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.low, self.high)
    }
}

impl FromStr for BandpassSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parameter(format!("band {s:?}: expected <low>:<high>"));
        let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
        BandpassSpec::new(
            lo.parse().map_err(|_| bad())?,
            hi.parse().map_err(|_| bad())?,
        )
    }
}

/// Ideal filter for signals of one fixed length, with FFT plans built once.
pub struct TemporalFilter {
    len: usize,
    keep: Vec<bool>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl TemporalFilter {
    pub fn new(len: usize, spec: BandpassSpec) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            len,
            keep: (0..len).map(|b| spec.keeps_bin(b, len)).collect(),
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.keep.iter().all(|&k| k)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn apply(&self, signal: &[f64]) -> Vec<f64> {
        assert_eq!(
            signal.len(),
            self.len,
            "signal length must match filter length"
        );
        if self.is_identity() {
            return signal.to_vec();
        }
        let mut buf: Vec<Complex<f64>> = signal.iter().map(|&x| Complex::new(x, 0.0)).collect();
        self.forward.process(&mut buf);
        for (c, &keep) in buf.iter_mut().zip(&self.keep) {
            if !keep {
                *c = Complex::new(0.0, 0.0);
            }
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.len as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }
}

/// Replaces `u_l` for `l = 2..=q` by its band-limited version.
pub fn filter_left_vectors(svd: &SliceSvd, q: usize, spec: BandpassSpec) -> Result<SliceSvd> {
    spec.validate()?;
    let filter = TemporalFilter::new(svd.frames(), spec);
    filter_left_vectors_with(svd, q, &filter)
}

pub fn filter_left_vectors_with(
    svd: &SliceSvd,
    q: usize,
    filter: &TemporalFilter,
) -> Result<SliceSvd> {
    if q > svd.rank {
        return Err(Error::Bounds(format!(
            "rank boundary {q} exceeds numeric rank {}",
            svd.rank
        )));
    }
    let mut out = svd.clone();
    for l in 1..q {
        let filtered = filter.apply(svd.u.column(l).as_slice());
        out.u.set_column(l, &DVector::from_vec(filtered));
    }
    Ok(out)
}

/// `B`, filtered `F` and `N` of one slice.
#[derive(Debug, Clone, PartialEq)]
pub struct DesnowedParts {
    pub q: usize,
    pub background: DMatrix<f64>,
    pub foreground: DMatrix<f64>,
    pub noise: DMatrix<f64>,
}

impl DesnowedParts {
    pub fn assemble(&self, include_noise: bool) -> DMatrix<f64> {
        let mut out = &self.background + &self.foreground;
        if include_noise {
            out += &self.noise;
        }
        out
    }
}

pub fn desnow_parts(svd: &SliceSvd, q: usize, filter: &TemporalFilter) -> Result<DesnowedParts> {
    let (k, n) = (svd.frames(), svd.cols());
    if svd.rank == 0 {
        return Ok(DesnowedParts {
            q: 0,
            background: DMatrix::zeros(k, n),
            foreground: DMatrix::zeros(k, n),
            noise: DMatrix::zeros(k, n),
        });
    }
    let filtered = filter_left_vectors_with(svd, q, filter)?;
    let q = q.max(1);
    Ok(DesnowedParts {
        q,
        background: svd.sum_terms(&svd.u, 0, 1),
        foreground: svd.sum_terms(&filtered.u, 1, q),
        noise: svd.sum_terms(&svd.u, q, svd.rank),
    })
}

/// `B + F̃ + N` for one slice.
pub fn desnow_slice(svd: &SliceSvd, q: usize, spec: BandpassSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let filter = TemporalFilter::new(svd.frames(), spec);
    Ok(desnow_parts(svd, q, &filter)?.assemble(true))
}

/// Everything `desnow_video` needs; also the identity of a candidate set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesnowParams {
    pub mode: SliceMode,
    pub q_rule: QRule,
    pub band: BandpassSpec,
    #[serde(default)]
    pub drop_noise: bool,
}

impl Default for DesnowParams {
    fn default() -> Self {
        Self {
            mode: SliceMode::Horizontal,
            q_rule: QRule::default(),
            band: BandpassSpec::default(),
            drop_noise: false,
        }
    }
}

impl DesnowParams {
    pub fn validate(&self) -> Result<()> {
        if self.mode == SliceMode::Frontal {
            return Err(Error::Parameter(
                "desnowing needs a spatiotemporal slice mode (horizontal or lateral)".into(),
            ));
        }
        self.q_rule.validate()?;
        self.band.validate()
    }

    /// File- and URL-safe label, e.g. `horizontal.energy-0.999.band-0-0.1`.
    pub fn tag(&self) -> String {
        let rule = match self.q_rule {
            QRule::Energy(f) => format!("energy-{f}"),
            QRule::Fixed(r) => format!("fixed-{r}"),
        };
        let mut tag = format!(
            "{}.{rule}.band-{}-{}",
            self.mode, self.band.low, self.band.high
        );
        if self.drop_noise {
            tag.push_str(".nonoise");
        }
        tag
    }
}

/// Desnows every slice of `params.mode` in every channel and reassembles.
pub fn desnow_video(video: &VideoTensor, params: &DesnowParams) -> Result<VideoTensor> {
    params.validate()?;
    if video.frames() < 4 {
        tracing::warn!(
            frames = video.frames(),
            "fewer than 4 frames: temporal filtering is degenerate"
        );
    }
    let filter = TemporalFilter::new(video.frames(), params.band);
    let slices = video.slice_count(params.mode);
    let jobs: Vec<(usize, usize)> = (0..video.channels())
        .flat_map(|ch| (0..slices).map(move |i| (ch, i)))
        .collect();

    let results: Vec<Result<SliceView>> = jobs
        .par_iter()
        .map(|&(channel, index)| {
            let slice = video.extract_slice(params.mode, index, channel)?;
            let svd = slice_svd(&slice)?;
            let q = params
                .q_rule
                .boundary(svd.singular_values.as_slice(), svd.rank);
            let parts = desnow_parts(&svd, q, &filter)?;
            Ok(SliceView {
                matrix: parts.assemble(!params.drop_noise),
                ..slice
            })
        })
        .collect();

    let mut out = video.clone();
    for slice in results {
        out.write_slice(&slice?)?;
    }
    Ok(out)
}
