//! Independent reference implementations used by several test targets.
//! Written from the formulas, deliberately sharing no code with the crate.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snowgt_core::synth::SnowMask;
use snowgt_core::Image;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(rng: &mut ChaCha8Rng, rows: usize, cols: usize, channels: usize) -> Image {
    let data = (0..rows * cols * channels)
        .map(|_| rng.random::<f64>())
        .collect();
    Image::from_vec(rows, cols, channels, data).unwrap()
}

fn px(img: &Image, r: usize, c: usize, ch: usize) -> f64 {
    img.data()[(r * img.cols() + c) * img.channels() + ch]
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
#[allow(clippy::needless_range_loop)]
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (akp, akq) = (row[p], row[q]);
                    row[p] = c * akp - s * akq;
                    row[q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Singular values of a row-major `rows x cols` matrix via eig(MᵀM).
pub fn singular_values_oracle(m: &[Vec<f64>]) -> Vec<f64> {
    let rows = m.len();
    let cols = m[0].len();
    let mut mtm = vec![vec![0.0; cols]; cols];
    for i in 0..cols {
        for j in 0..cols {
            mtm[i][j] = (0..rows).map(|r| m[r][i] * m[r][j]).sum();
        }
    }
    let p = rows.min(cols);
    jacobi_eigenvalues(mtm)
        .into_iter()
        .take(p)
        .map(|e| e.max(0.0).sqrt())
        .collect()
}

pub fn psnr_oracle(a: &Image, b: &Image) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in 0..a.rows() {
        for c in 0..a.cols() {
            for ch in 0..a.channels() {
                let d = px(a, r, c, ch) - px(b, r, c, ch);
                sum += d * d;
                count += 1;
            }
        }
    }
    let mse = sum / count as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

pub fn ssim_oracle(a: &Image, b: &Image, c1: f64, c2: f64) -> f64 {
    let channels = a.channels();
    let mut total = 0.0;
    for ch in 0..channels {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for r in 0..a.rows() {
            for c in 0..a.cols() {
                xs.push(px(a, r, c, ch));
                ys.push(px(b, r, c, ch));
            }
        }
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let vx = xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>() / n;
        let vy = ys.iter().map(|y| (y - my).powi(2)).sum::<f64>() / n;
        let cxy = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - mx) * (y - my))
            .sum::<f64>()
            / n;
        let num = (2.0 * mx * my + c1) * (2.0 * cxy + c2);
        let den = (mx * mx + my * my + c1) * (vx + vy + c2);
        total += num / den;
    }
    total / channels as f64
}

/// Mask oracle: pixel set where any channel of `|x - y|` reaches `tau`.
pub fn mask_oracle(x: &Image, y: &Image, tau: f64) -> Vec<bool> {
    let mut out = Vec::new();
    for r in 0..x.rows() {
        for c in 0..x.cols() {
            let hit = (0..x.channels()).any(|ch| (px(x, r, c, ch) - px(y, r, c, ch)).abs() >= tau);
            out.push(hit);
        }
    }
    out
}

/// (precision, recall, F) computed from two boolean masks.
pub fn f_oracle(pred: &[bool], reference: &[bool]) -> (f64, f64, f64) {
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut fneg = 0.0;
    for (&p, &r) in pred.iter().zip(reference) {
        match (p, r) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fneg += 1.0,
            _ => {}
        }
    }
    if tp == 0.0 {
        let v = if fp == 0.0 && fneg == 0.0 { 1.0 } else { 0.0 };
        return (v, v, v);
    }
    let p = tp / (tp + fp);
    let r = tp / (tp + fneg);
    (p, r, 2.0 * p * r / (p + r))
}

pub fn mask_bits(m: &SnowMask) -> Vec<bool> {
    m.bits().to_vec()
}

/// Central differences with replicated borders, averaged over channels.
pub fn gradient_oracle(img: &Image, alpha: f64) -> Vec<f64> {
    let (rows, cols, chans) = img.shape();
    let at = |r: i64, c: i64, ch: usize| {
        let r = r.clamp(0, rows as i64 - 1) as usize;
        let c = c.clamp(0, cols as i64 - 1) as usize;
        px(img, r, c, ch)
    };
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows as i64 {
        for c in 0..cols as i64 {
            let mut acc = 0.0;
            for ch in 0..chans {
                let gx = 0.5 * (at(r, c + 1, ch) - at(r, c - 1, ch));
                let gy = 0.5 * (at(r + 1, c, ch) - at(r - 1, c, ch));
                acc += (gx * gx + alpha * gy * gy).sqrt();
            }
            out.push(acc / chans as f64);
        }
    }
    out
}

/// Ideal band-limited copy of `x` by direct O(k²) DFT.
pub fn dft_filter_oracle(x: &[f64], low: f64, high: f64) -> Vec<f64> {
    let k = x.len();
    let tau = std::f64::consts::TAU;
    let mut re = vec![0.0; k];
    let mut im = vec![0.0; k];
    for b in 0..k {
        for (t, &v) in x.iter().enumerate() {
            let ang = -tau * (b * t) as f64 / k as f64;
            re[b] += v * ang.cos();
            im[b] += v * ang.sin();
        }
        let folded = 2.0 * b.min(k - b) as f64 / k as f64;
        if !(low <= folded && folded <= high) {
            re[b] = 0.0;
            im[b] = 0.0;
        }
    }
    (0..k)
        .map(|t| {
            let mut acc = 0.0;
            for b in 0..k {
                let ang = tau * (b * t) as f64 / k as f64;
                acc += re[b] * ang.cos() - im[b] * ang.sin();
            }
            acc / k as f64
        })
        .collect()
}

pub fn temporal_variance(trace: &[f64]) -> f64 {
    let n = trace.len() as f64;
    let m = trace.iter().sum::<f64>() / n;
    trace.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n
}
