//! Shape-similarity evaluation of generated glyphs: L1, weighted L1,
//! Hausdorff distance and pseudo-Hamming distance on Otsu-binarized,
//! Canny-edged shapes, IoU on filled foregrounds, SSIM, plus a 2-D PCA of
//! style features. Report assembly emits JSON and CSV.
//!
//! The pseudo-Hamming distance is implemented as the symmetric mean of
//! nearest-contour distances (each direction contributes the mean over its
//! own edge set); the cited definition is not restated anywhere, so this
//! mean-based reading is an interpretation validated against a brute-force
//! oracle.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ident::StyleFeature;
use crate::image::ImageBuf;
use crate::loss::WeightCache;

pub const OTSU_BINS: usize = 256;

// ---------------------------------------------------------------------------
// binarization

#[derive(Debug, Clone)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub mask: Vec<bool>,
}

impl BinaryMask {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }
}

/// Otsu binarization over a 256-bin histogram. Foreground is the darker
/// class (ink). A constant image yields an empty, flagged foreground.
#[derive(Debug, Clone)]
pub struct OtsuResult {
    pub mask: BinaryMask,
    pub threshold_bin: usize,
    pub empty_foreground: bool,
}

pub fn otsu_threshold_bin(hist: &[u64; OTSU_BINS]) -> Option<usize> {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return None;
    }
    let sum_all: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, &c)| i as f64 * c as f64)
        .sum();
    let mut w0 = 0.0f64;
    let mut sum0 = 0.0f64;
    let mut best = (f64::NEG_INFINITY, 0usize);
    for t in 0..OTSU_BINS - 1 {
        w0 += hist[t] as f64;
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total as f64 - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let mu0 = sum0 / w0;
        let mu1 = (sum_all - sum0) / w1;
        let var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if var > best.0 {
            best = (var, t);
        }
    }
    if best.0 <= 0.0 {
        None
    } else {
        Some(best.1)
    }
}

pub fn binarize_otsu(img: &ImageBuf) -> OtsuResult {
    let mut hist = [0u64; OTSU_BINS];
    for &v in img.data() {
        let bin = (v.clamp(0.0, 1.0) * 255.0).round() as usize;
        hist[bin] += 1;
    }
    match otsu_threshold_bin(&hist) {
        Some(t) => {
            let mask: Vec<bool> = img
                .data()
                .iter()
                .map(|&v| ((v.clamp(0.0, 1.0) * 255.0).round() as usize) <= t)
                .collect();
            let empty = !mask.iter().any(|&b| b);
            OtsuResult {
                mask: BinaryMask {
                    width: img.width(),
                    height: img.height(),
                    mask,
                },
                threshold_bin: t,
                empty_foreground: empty,
            }
        }
        None => OtsuResult {
            mask: BinaryMask {
                width: img.width(),
                height: img.height(),
                mask: vec![false; img.width() * img.height()],
            },
            threshold_bin: 0,
            empty_foreground: true,
        },
    }
}

// ---------------------------------------------------------------------------
// canny edges

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct CannyConfig {
    pub sigma: f64,
    /// Hysteresis thresholds as fractions of the max gradient magnitude.
    pub low: f64,
    pub high: f64,
}

impl Default for CannyConfig {
    fn default() -> Self {
        Self {
            sigma: 1.4,
            low: 0.1,
            high: 0.3,
        }
    }
}

fn gaussian_blur(data: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let ksum: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|v| v / ksum).collect();
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, kv) in kernel.iter().enumerate() {
                let sx = clamp(x as isize + ki as isize - radius, w);
                acc += data[y * w + sx] * kv;
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, kv) in kernel.iter().enumerate() {
                let sy = clamp(y as isize + ki as isize - radius, h);
                acc += tmp[sy * w + x] * kv;
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Canny edge detection over a grayscale (or 0/1 binary) image. Returns edge
/// pixel coordinates.
pub fn canny_edges(img: &ImageBuf, cfg: &CannyConfig) -> Vec<(usize, usize)> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Vec::new();
    }
    let data: Vec<f64> = img.data().iter().map(|&v| v as f64).collect();
    let blurred = gaussian_blur(&data, w, h, cfg.sigma);
    let at = |x: usize, y: usize| blurred[y * w + x];

    let mut gx = vec![0.0f64; w * h];
    let mut gy = vec![0.0f64; w * h];
    let mut mag = vec![0.0f64; w * h];
    let mut max_mag = 0.0f64;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let dx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let dy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let m = dx.hypot(dy);
            gx[y * w + x] = dx;
            gy[y * w + x] = dy;
            mag[y * w + x] = m;
            max_mag = max_mag.max(m);
        }
    }
    if max_mag <= 0.0 {
        return Vec::new();
    }

    // non-maximum suppression along the quantized gradient direction
    let mut thin = vec![0.0f64; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let m = mag[y * w + x];
            if m == 0.0 {
                continue;
            }
            let mut angle = gy[y * w + x].atan2(gx[y * w + x]).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            let (n1, n2) = if !(22.5..157.5).contains(&angle) {
                (mag[y * w + x - 1], mag[y * w + x + 1])
            } else if angle < 67.5 {
                (mag[(y - 1) * w + x - 1], mag[(y + 1) * w + x + 1])
            } else if angle < 112.5 {
                (mag[(y - 1) * w + x], mag[(y + 1) * w + x])
            } else {
                (mag[(y - 1) * w + x + 1], mag[(y + 1) * w + x - 1])
            };
            if m >= n1 && m >= n2 {
                thin[y * w + x] = m;
            }
        }
    }

    // hysteresis
    let low = cfg.low * max_mag;
    let high = cfg.high * max_mag;
    let mut state = vec![0u8; w * h]; // 0 none, 1 visited edge
    let mut stack = Vec::new();
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            if thin[y * w + x] >= high && state[y * w + x] == 0 {
                state[y * w + x] = 1;
                stack.push((x, y));
                while let Some((cx, cy)) = stack.pop() {
                    for dy in -1isize..=1 {
                        for dx in -1isize..=1 {
                            if dx == 0 && dy == 0 {
                                continue;
                            }
                            let nx = cx as isize + dx;
                            let ny = cy as isize + dy;
                            if nx < 1 || ny < 1 || nx >= w as isize - 1 || ny >= h as isize - 1 {
                                continue;
                            }
                            let (nx, ny) = (nx as usize, ny as usize);
                            if state[ny * w + nx] == 0 && thin[ny * w + nx] >= low {
                                state[ny * w + nx] = 1;
                                stack.push((nx, ny));
                            }
                        }
                    }
                }
            }
        }
    }
    let mut edges = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if state[y * w + x] == 1 {
                edges.push((x, y));
            }
        }
    }
    edges
}

/// Otsu-binarized mask plus the Canny edge set of the binary image.
#[derive(Debug, Clone)]
pub struct BinaryShape {
    pub mask: BinaryMask,
    pub edges: Vec<(usize, usize)>,
}

pub fn shape_of(img: &ImageBuf, canny: &CannyConfig) -> BinaryShape {
    let otsu = binarize_otsu(img);
    let edges = if otsu.empty_foreground {
        Vec::new()
    } else {
        let bin_data: Vec<f32> = otsu.mask.mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let bin = ImageBuf::from_vec(otsu.mask.width, otsu.mask.height, bin_data)
            .expect("mask dims");
        canny_edges(&bin, canny)
    };
    BinaryShape {
        mask: otsu.mask,
        edges,
    }
}

// ---------------------------------------------------------------------------
// distance-transform based shape metrics

const INF: f64 = 1e20;

fn edt_1d(f: &[f64], d: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut kk = 0usize;
    v[0] = 0;
    z[0] = -INF;
    z[1] = INF;
    for q in 1..n {
        let mut s;
        loop {
            let p = v[kk];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[kk] {
                if kk == 0 {
                    break;
                }
                kk -= 1;
            } else {
                break;
            }
        }
        kk += 1;
        v[kk] = q;
        z[kk] = s;
        z[kk + 1] = INF;
    }
    let mut kk2 = 0usize;
    for (q, out) in d.iter_mut().enumerate() {
        while z[kk2 + 1] < q as f64 {
            kk2 += 1;
        }
        let p = v[kk2];
        let diff = q as f64 - p as f64;
        *out = diff * diff + f[p];
    }
}

/// Exact squared Euclidean distance transform of a point set over a grid.
pub fn distance_transform_sq(points: &[(usize, usize)], w: usize, h: usize) -> Vec<f64> {
    let mut grid = vec![INF; w * h];
    for &(x, y) in points {
        grid[y * w + x] = 0.0;
    }
    let mut col_in = vec![0.0; h];
    let mut col_out = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            col_in[y] = grid[y * w + x];
        }
        edt_1d(&col_in, &mut col_out);
        for y in 0..h {
            grid[y * w + x] = col_out[y];
        }
    }
    let mut row_out = vec![0.0; w];
    for y in 0..h {
        edt_1d(&grid[y * w..(y + 1) * w].to_vec(), &mut row_out);
        grid[y * w..(y + 1) * w].copy_from_slice(&row_out);
    }
    grid
}

/// Hausdorff distance between two non-empty edge sets (Euclidean pixels).
pub fn hausdorff_edges(a: &[(usize, usize)], b: &[(usize, usize)], w: usize, h: usize) -> f64 {
    let dt_b = distance_transform_sq(b, w, h);
    let dt_a = distance_transform_sq(a, w, h);
    let dir = |pts: &[(usize, usize)], dt: &[f64]| {
        pts.iter()
            .map(|&(x, y)| dt[y * w + x])
            .fold(0.0f64, f64::max)
    };
    dir(a, &dt_b).max(dir(b, &dt_a)).sqrt()
}

/// Pseudo-Hamming distance: mean nearest-edge distance from A to B plus the
/// mean from B to A.
pub fn phd_edges(a: &[(usize, usize)], b: &[(usize, usize)], w: usize, h: usize) -> f64 {
    let dt_b = distance_transform_sq(b, w, h);
    let dt_a = distance_transform_sq(a, w, h);
    let mean = |pts: &[(usize, usize)], dt: &[f64]| {
        pts.iter()
            .map(|&(x, y)| dt[y * w + x].sqrt())
            .sum::<f64>()
            / pts.len() as f64
    };
    mean(a, &dt_b) + mean(b, &dt_a)
}

fn check_same_shape(gt: &ImageBuf, gen: &ImageBuf) -> Result<()> {
    if gt.width() != gen.width() || gt.height() != gen.height() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", gt.width(), gt.height()),
            actual: format!("{}x{}", gen.width(), gen.height()),
        });
    }
    Ok(())
}

pub fn metric_l1(gt: &ImageBuf, gen: &ImageBuf) -> Result<f64> {
    check_same_shape(gt, gen)?;
    let sum: f64 = gt
        .data()
        .iter()
        .zip(gen.data())
        .map(|(&a, &b)| (a as f64 - b as f64).abs())
        .sum();
    Ok(sum / gt.data().len() as f64)
}

/// Mean of `w .* |gt - gen|` (the weighted-L1 evaluation metric, alpha = 0).
pub fn metric_weighted_l1(gt: &ImageBuf, gen: &ImageBuf, w: &ImageBuf) -> Result<f64> {
    check_same_shape(gt, gen)?;
    check_same_shape(gt, w)?;
    let sum: f64 = gt
        .data()
        .iter()
        .zip(gen.data())
        .zip(w.data())
        .map(|((&a, &b), &wv)| wv as f64 * (a as f64 - b as f64).abs())
        .sum();
    Ok(sum / gt.data().len() as f64)
}

pub fn metric_hausdorff(gt: &ImageBuf, gen: &ImageBuf, canny: &CannyConfig) -> Result<f64> {
    check_same_shape(gt, gen)?;
    let a = shape_of(gt, canny);
    let b = shape_of(gen, canny);
    if a.edges.is_empty() {
        return Err(Error::EmptyEdgeSet { which: "gt".into() });
    }
    if b.edges.is_empty() {
        return Err(Error::EmptyEdgeSet { which: "gen".into() });
    }
    Ok(hausdorff_edges(&a.edges, &b.edges, gt.width(), gt.height()))
}

pub fn metric_phd(gt: &ImageBuf, gen: &ImageBuf, canny: &CannyConfig) -> Result<f64> {
    check_same_shape(gt, gen)?;
    let a = shape_of(gt, canny);
    let b = shape_of(gen, canny);
    if a.edges.is_empty() {
        return Err(Error::EmptyEdgeSet { which: "gt".into() });
    }
    if b.edges.is_empty() {
        return Err(Error::EmptyEdgeSet { which: "gen".into() });
    }
    Ok(phd_edges(&a.edges, &b.edges, gt.width(), gt.height()))
}

/// IoU of the filled Otsu foregrounds; `None` when both are empty.
pub fn metric_iou(gt: &ImageBuf, gen: &ImageBuf) -> Result<Option<f64>> {
    check_same_shape(gt, gen)?;
    let a = binarize_otsu(gt).mask;
    let b = binarize_otsu(gen).mask;
    let mut inter = 0u64;
    let mut union = 0u64;
    for (&x, &y) in a.mask.iter().zip(b.mask.iter()) {
        if x && y {
            inter += 1;
        }
        if x || y {
            union += 1;
        }
    }
    if union == 0 {
        return Ok(None);
    }
    Ok(Some(inter as f64 / union as f64))
}

// ---------------------------------------------------------------------------
// SSIM

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn ssim_kernel() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as isize;
    let k: Vec<f64> = (-half..=half)
        .map(|i| (-((i * i) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Structural similarity with an 11x11 Gaussian window (sigma 1.5) on a unit
/// dynamic range; windows are fully inside the image ("valid" mode). Images
/// smaller than the window fall back to global statistics.
pub fn metric_ssim(gt: &ImageBuf, gen: &ImageBuf) -> Result<f64> {
    check_same_shape(gt, gen)?;
    let (w, h) = (gt.width(), gt.height());
    let x: Vec<f64> = gt.data().iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = gen.data().iter().map(|&v| v as f64).collect();

    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let vx = x.iter().map(|v| (v - mx) * (v - mx)).sum::<f64>() / n;
        let vy = y.iter().map(|v| (v - my) * (v - my)).sum::<f64>() / n;
        let cov = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - mx) * (b - my))
            .sum::<f64>()
            / n;
        return Ok(((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
            / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2)));
    }

    let kernel = ssim_kernel();
    let half = SSIM_WINDOW / 2;
    // separable gaussian filtering, valid region only
    let filt = |src: &[f64]| -> Vec<f64> {
        let mut tmp = vec![0.0; w * h];
        for yy in 0..h {
            for xx in half..w - half {
                let mut acc = 0.0;
                for (ki, kv) in kernel.iter().enumerate() {
                    acc += src[yy * w + xx - half + ki] * kv;
                }
                tmp[yy * w + xx] = acc;
            }
        }
        let mut out = vec![0.0; w * h];
        for yy in half..h - half {
            for xx in half..w - half {
                let mut acc = 0.0;
                for (ki, kv) in kernel.iter().enumerate() {
                    acc += tmp[(yy - half + ki) * w + xx] * kv;
                }
                out[yy * w + xx] = acc;
            }
        }
        out
    };

    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy_sq: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
    let mu_x = filt(&x);
    let mu_y = filt(&y);
    let m_xx = filt(&xx);
    let m_yy = filt(&yy_sq);
    let m_xy = filt(&xy);

    let mut total = 0.0;
    let mut count = 0usize;
    for row in half..h - half {
        for col in half..w - half {
            let i = row * w + col;
            let (mx, my) = (mu_x[i], mu_y[i]);
            let vx = m_xx[i] - mx * mx;
            let vy = m_yy[i] - my * my;
            let cov = m_xy[i] - mx * my;
            let s = ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
            total += s;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

// ---------------------------------------------------------------------------
// PCA of style features

#[derive(Debug, Clone)]
pub struct PcaProjection {
    pub coords: Vec<[f64; 2]>,
    /// Sample variances of the two projected coordinates.
    pub component_variances: [f64; 2],
    pub degenerate: bool,
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
/// Returns (eigenvalues, eigenvectors as columns), descending.
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let off = |a: &Vec<Vec<f64>>| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i][j] * a[i][j];
                }
            }
        }
        s
    };
    let scale: f64 = (0..n).map(|i| a[i][i].abs()).fold(1e-30, f64::max);
    for _sweep in 0..100 {
        if off(&a).sqrt() < 1e-14 * scale * n as f64 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| a[i][i]).collect();
    let vectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&col| (0..n).map(|row| v[row][col]).collect())
        .collect();
    (values, vectors)
}

/// Mean-centered top-2 principal-component projection of style features,
/// computed through the Gram matrix. Sign convention: the largest-magnitude
/// coordinate of each component is positive. Fewer than two informative
/// directions yields zero-padded coordinates and `degenerate = true`.
pub fn pca_style_features(features: &[StyleFeature]) -> Result<PcaProjection> {
    let n = features.len();
    if n < 3 {
        return Err(Error::InvalidConfig(format!(
            "PCA needs at least 3 features, got {n}"
        )));
    }
    let d = features[0].dim();
    if features.iter().any(|f| f.dim() != d) {
        return Err(Error::ShapeMismatch {
            expected: format!("feature dim {d}"),
            actual: "mixed feature dims".into(),
        });
    }
    let mut mean = vec![0.0f64; d];
    for f in features {
        for (m, &v) in mean.iter_mut().zip(f.0.iter()) {
            *m += v as f64;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered: Vec<Vec<f64>> = features
        .iter()
        .map(|f| {
            f.0.iter()
                .zip(&mean)
                .map(|(&v, &m)| v as f64 - m)
                .collect()
        })
        .collect();
    // Gram matrix (n x n); its eigenpairs give the projected coordinates
    // directly: scores_i = sqrt(lambda_i) * u_i.
    let mut gram = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in i..n {
            let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
            gram[i][j] = dot;
            gram[j][i] = dot;
        }
    }
    let (values, vectors) = jacobi_eigen(gram);
    let total_scale: f64 = values.iter().map(|v| v.abs()).fold(1e-30, f64::max);
    let nonzero = values
        .iter()
        .filter(|&&v| v > 1e-10 * total_scale && v > 1e-12)
        .count();
    let degenerate = nonzero < 2;
    if degenerate {
        eprintln!("warning: PCA rank {nonzero} < 2, padding with zeros");
    }

    let mut coords = vec![[0.0f64; 2]; n];
    let mut variances = [0.0f64; 2];
    for comp in 0..2 {
        if comp >= nonzero {
            break;
        }
        let sigma = values[comp].max(0.0).sqrt();
        let mut column: Vec<f64> = vectors[comp].iter().map(|&u| sigma * u).collect();
        // sign convention
        let mut max_idx = 0;
        for (i, value) in column.iter().enumerate() {
            if value.abs() > column[max_idx].abs() {
                max_idx = i;
            }
        }
        if column[max_idx] < 0.0 {
            for value in &mut column {
                *value = -*value;
            }
        }
        for (i, &value) in column.iter().enumerate() {
            coords[i][comp] = value;
        }
        variances[comp] = values[comp] / (n as f64 - 1.0);
    }
    Ok(PcaProjection {
        coords,
        component_variances: variances,
        degenerate,
    })
}

const SCATTER_PALETTE: [[u8; 3]; 10] = [
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [128, 128, 0],
    [0, 128, 128],
    [128, 0, 0],
];

/// Scatter plot of the projection, colored by label.
pub fn render_pca_scatter(proj: &PcaProjection, labels: &[String], size: usize) -> image::RgbImage {
    let mut img = image::RgbImage::from_pixel(size as u32, size as u32, image::Rgb([255, 255, 255]));
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for c in &proj.coords {
        min_x = min_x.min(c[0]);
        max_x = max_x.max(c[0]);
        min_y = min_y.min(c[1]);
        max_y = max_y.max(c[1]);
    }
    let span_x = (max_x - min_x).max(1e-12);
    let span_y = (max_y - min_y).max(1e-12);
    let mut label_ids: BTreeMap<&str, usize> = BTreeMap::new();
    for label in labels {
        let next = label_ids.len();
        label_ids.entry(label.as_str()).or_insert(next);
    }
    let margin = 10usize;
    let area = size - 2 * margin;
    for (i, c) in proj.coords.iter().enumerate() {
        let px = margin + ((c[0] - min_x) / span_x * area as f64) as usize;
        let py = margin + ((max_y - c[1]) / span_y * area as f64) as usize;
        let color = labels
            .get(i)
            .and_then(|l| label_ids.get(l.as_str()))
            .map(|&id| SCATTER_PALETTE[id % SCATTER_PALETTE.len()])
            .unwrap_or([0, 0, 0]);
        for dy in 0..3usize {
            for dx in 0..3usize {
                let x = (px + dx).saturating_sub(1).min(size - 1);
                let y = (py + dy).saturating_sub(1).min(size - 1);
                img.put_pixel(x as u32, y as u32, image::Rgb(color));
            }
        }
    }
    img
}

// ---------------------------------------------------------------------------
// report

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricRow {
    pub font_id: String,
    pub letter: char,
    pub l1: f64,
    pub weighted_l1: Option<f64>,
    pub hausdorff: Option<f64>,
    pub phd: Option<f64>,
    pub iou: Option<f64>,
    pub ssim: f64,
    pub excluded: bool,
    pub exclusion_reason: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportHeader {
    pub canny: CannyConfig,
    pub otsu_bins: usize,
    pub gt_dir: String,
    pub gen_dir: String,
    pub checkpoint_hashes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregates {
    pub rows: usize,
    pub rows_excluded: usize,
    pub l1: f64,
    pub weighted_l1: Option<f64>,
    pub hausdorff: Option<f64>,
    pub phd: Option<f64>,
    pub iou: Option<f64>,
    pub ssim: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub header: ReportHeader,
    pub rows: Vec<MetricRow>,
    pub aggregates: Aggregates,
}

fn scan_glyph_dir(dir: &Path) -> Result<BTreeMap<(String, char), PathBuf>> {
    let mut out = BTreeMap::new();
    for font_entry in std::fs::read_dir(dir)? {
        let font_path = font_entry?.path();
        if !font_path.is_dir() {
            continue;
        }
        let font_id = font_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        for file in std::fs::read_dir(&font_path)? {
            let file = file?.path();
            if file.extension().map(|e| e == "png").unwrap_or(false) {
                let stem = file
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let mut chars = stem.chars();
                if let (Some(letter), None) = (chars.next(), chars.next()) {
                    out.insert((font_id.clone(), letter), file);
                }
            }
        }
    }
    Ok(out)
}

pub fn compute_aggregates(rows: &[MetricRow]) -> Aggregates {
    let mean_opt = |values: Vec<f64>| -> Option<f64> {
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    };
    let l1s: Vec<f64> = rows.iter().map(|r| r.l1).collect();
    let ssims: Vec<f64> = rows.iter().map(|r| r.ssim).collect();
    Aggregates {
        rows: rows.len(),
        rows_excluded: rows.iter().filter(|r| r.excluded).count(),
        l1: l1s.iter().sum::<f64>() / l1s.len().max(1) as f64,
        weighted_l1: mean_opt(rows.iter().filter_map(|r| r.weighted_l1).collect()),
        hausdorff: mean_opt(rows.iter().filter_map(|r| r.hausdorff).collect()),
        phd: mean_opt(rows.iter().filter_map(|r| r.phd).collect()),
        iou: mean_opt(rows.iter().filter_map(|r| r.iou).collect()),
        ssim: ssims.iter().sum::<f64>() / ssims.len().max(1) as f64,
    }
}

/// Compare matching `<font>/<letter>.png` files from two directory trees.
/// Exclusion applies only to the shape metrics that need non-empty edge sets
/// (and to IoU when both foregrounds are empty); L1/SSIM are always reported.
pub fn build_report(
    gt_dir: &Path,
    gen_dir: &Path,
    cache: Option<&WeightCache>,
    canny: &CannyConfig,
    checkpoint_hashes: BTreeMap<String, String>,
) -> Result<MetricsReport> {
    let gt_files = scan_glyph_dir(gt_dir)?;
    let gen_files = scan_glyph_dir(gen_dir)?;
    let gt_keys: BTreeSet<_> = gt_files.keys().cloned().collect();
    let gen_keys: BTreeSet<_> = gen_files.keys().cloned().collect();
    if gt_keys != gen_keys {
        let missing_in_gen: Vec<_> = gt_keys.difference(&gen_keys).collect();
        let missing_in_gt: Vec<_> = gen_keys.difference(&gt_keys).collect();
        let first = missing_in_gen
            .first()
            .or(missing_in_gt.first())
            .map(|(f, l)| format!("{f}/{l}"))
            .unwrap_or_default();
        return Err(Error::KeyMismatch {
            missing_in_gen: missing_in_gen.len(),
            missing_in_gt: missing_in_gt.len(),
            first,
        });
    }

    let mut rows = Vec::new();
    for ((font_id, letter), gt_path) in &gt_files {
        let gt = ImageBuf::load_png(gt_path)?;
        let gen = ImageBuf::load_png(&gen_files[&(font_id.clone(), *letter)])?;
        let l1 = metric_l1(&gt, &gen)?;
        let ssim = metric_ssim(&gt, &gen)?;
        let weighted_l1 = match cache {
            Some(cache) => {
                let w = cache.get(font_id, *letter)?;
                Some(metric_weighted_l1(&gt, &gen, w)?)
            }
            None => None,
        };
        let mut excluded = false;
        let mut reason: Option<String> = None;
        let mut note = |r: String| {
            excluded = true;
            reason = Some(match reason.take() {
                Some(prev) => format!("{prev}; {r}"),
                None => r,
            });
        };
        let hausdorff = match metric_hausdorff(&gt, &gen, canny) {
            Ok(v) => Some(v),
            Err(Error::EmptyEdgeSet { which }) => {
                note(format!("hausdorff: empty edge set ({which})"));
                None
            }
            Err(e) => return Err(e),
        };
        let phd = match metric_phd(&gt, &gen, canny) {
            Ok(v) => Some(v),
            Err(Error::EmptyEdgeSet { which }) => {
                note(format!("phd: empty edge set ({which})"));
                None
            }
            Err(e) => return Err(e),
        };
        let iou = match metric_iou(&gt, &gen)? {
            Some(v) => Some(v),
            None => {
                note("iou: both foregrounds empty".into());
                None
            }
        };
        rows.push(MetricRow {
            font_id: font_id.clone(),
            letter: *letter,
            l1,
            weighted_l1,
            hausdorff,
            phd,
            iou,
            ssim,
            excluded,
            exclusion_reason: reason,
        });
    }
    let aggregates = compute_aggregates(&rows);
    Ok(MetricsReport {
        header: ReportHeader {
            canny: *canny,
            otsu_bins: OTSU_BINS,
            gt_dir: gt_dir.display().to_string(),
            gen_dir: gen_dir.display().to_string(),
            checkpoint_hashes,
        },
        rows,
        aggregates,
    })
}

impl MetricsReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            f,
            "font_id,letter,l1,weighted_l1,hausdorff,phd,iou,ssim,excluded,exclusion_reason"
        )?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        for r in &self.rows {
            writeln!(
                f,
                "{},{},{},{},{},{},{},{},{},{}",
                r.font_id,
                r.letter,
                r.l1,
                opt(r.weighted_l1),
                opt(r.hausdorff),
                opt(r.phd),
                opt(r.iou),
                r.ssim,
                r.excluded,
                r.exclusion_reason.clone().unwrap_or_default().replace(',', ";")
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn img(w: usize, h: usize, f: impl Fn(usize, usize) -> f32) -> ImageBuf {
        let mut out = ImageBuf::new(w, h, 0.0);
        for y in 0..h {
            for x in 0..w {
                out.set(x, y, f(x, y));
            }
        }
        out
    }

    #[test]
    fn l1_trivial_cases() {
        let a = img(4, 4, |_, _| 0.0);
        let b = img(4, 4, |_, _| 1.0);
        assert_eq!(metric_l1(&a, &a).unwrap(), 0.0);
        assert_eq!(metric_l1(&a, &b).unwrap(), 1.0);
        let checker = img(4, 4, |x, y| ((x + y) % 2) as f32);
        let inverse = img(4, 4, |x, y| 1.0 - ((x + y) % 2) as f32);
        assert_eq!(metric_l1(&checker, &inverse).unwrap(), 1.0);
        assert!(matches!(
            metric_l1(&a, &img(3, 4, |_, _| 0.0)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn weighted_l1_cases() {
        let gt = img(2, 2, |x, y| if x == y { 1.0 } else { 0.0 });
        let gen = img(2, 2, |_, _| 0.0);
        let w = img(2, 2, |x, y| match (x, y) {
            (0, 0) => 1.0,
            (1, 1) => 0.5,
            _ => 0.0,
        });
        assert_eq!(metric_weighted_l1(&gt, &gt, &w).unwrap(), 0.0);
        let ones = img(2, 2, |_, _| 1.0);
        assert_eq!(
            metric_weighted_l1(&gt, &gen, &ones).unwrap(),
            metric_l1(&gt, &gen).unwrap()
        );
        // |gt-gen| = [[1,0],[0,1]]; w*|.| sums to 1.5; mean over 4 = 0.375
        assert!((metric_weighted_l1(&gt, &gen, &w).unwrap() - 0.375).abs() < 1e-12);
    }

    #[test]
    fn otsu_bimodal_and_degenerate() {
        let bimodal = img(8, 8, |x, _| if x < 4 { 0.1 } else { 0.9 });
        let res = binarize_otsu(&bimodal);
        assert!(!res.empty_foreground);
        let t = res.threshold_bin as f64 / 255.0;
        assert!(t > 0.1 && t < 0.9, "threshold {t}");
        // darker side is foreground
        assert!(res.mask.get(0, 0));
        assert!(!res.mask.get(7, 0));

        let flat = img(8, 8, |_, _| 0.5);
        let res = binarize_otsu(&flat);
        assert!(res.empty_foreground);
        assert_eq!(res.mask.count(), 0);
    }

    /// Exhaustive threshold search, recomputing class statistics from scratch.
    fn otsu_oracle(img: &ImageBuf) -> Option<usize> {
        let bins: Vec<usize> = img
            .data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as usize)
            .collect();
        let mut best: Option<(f64, usize)> = None;
        for t in 0..OTSU_BINS - 1 {
            let below: Vec<usize> = bins.iter().copied().filter(|&b| b <= t).collect();
            let above: Vec<usize> = bins.iter().copied().filter(|&b| b > t).collect();
            if below.is_empty() || above.is_empty() {
                continue;
            }
            let m0 = below.iter().sum::<usize>() as f64 / below.len() as f64;
            let m1 = above.iter().sum::<usize>() as f64 / above.len() as f64;
            let var = below.len() as f64 * above.len() as f64 * (m0 - m1) * (m0 - m1);
            if best.map(|(v, _)| var > v).unwrap_or(true) {
                best = Some((var, t));
            }
        }
        best.map(|(_, t)| t)
    }

    #[test]
    fn otsu_matches_exhaustive_search() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for _ in 0..10 {
            let (lo, hi): (f32, f32) = (rng.random_range(0.0..0.35), rng.random_range(0.6..1.0));
            let noisy = img(16, 16, |_, _| {
                if rng.random_bool(0.5) {
                    (lo + rng.random_range(-0.05..0.05f32)).clamp(0.0, 1.0)
                } else {
                    (hi + rng.random_range(-0.05..0.05f32)).clamp(0.0, 1.0)
                }
            });
            let fast = binarize_otsu(&noisy).threshold_bin;
            let slow = otsu_oracle(&noisy).unwrap();
            assert_eq!(fast, slow);
        }
    }

    fn brute_hausdorff(a: &[(usize, usize)], b: &[(usize, usize)]) -> f64 {
        let d2 = |p: (usize, usize), q: (usize, usize)| -> f64 {
            let dx = p.0 as f64 - q.0 as f64;
            let dy = p.1 as f64 - q.1 as f64;
            dx * dx + dy * dy
        };
        let dir = |from: &[(usize, usize)], to: &[(usize, usize)]| -> f64 {
            from.iter()
                .map(|&p| to.iter().map(|&q| d2(p, q)).fold(INF, f64::min))
                .fold(0.0, f64::max)
        };
        dir(a, b).max(dir(b, a)).sqrt()
    }

    fn brute_phd(a: &[(usize, usize)], b: &[(usize, usize)]) -> f64 {
        let d2 = |p: (usize, usize), q: (usize, usize)| -> f64 {
            let dx = p.0 as f64 - q.0 as f64;
            let dy = p.1 as f64 - q.1 as f64;
            dx * dx + dy * dy
        };
        let mean = |from: &[(usize, usize)], to: &[(usize, usize)]| -> f64 {
            from.iter()
                .map(|&p| to.iter().map(|&q| d2(p, q)).fold(INF, f64::min).sqrt())
                .sum::<f64>()
                / from.len() as f64
        };
        mean(a, b) + mean(b, a)
    }

    #[test]
    fn hausdorff_and_phd_analytic_cases() {
        let a = vec![(0usize, 0usize)];
        let b = vec![(3usize, 0usize)];
        assert_eq!(hausdorff_edges(&a, &b, 8, 8), 3.0);
        let c = vec![(0usize, 4usize)];
        assert_eq!(phd_edges(&a, &c, 8, 8), 8.0); // 4 + 4
        assert_eq!(hausdorff_edges(&a, &a, 8, 8), 0.0);
        assert_eq!(phd_edges(&a, &a, 8, 8), 0.0);
    }

    #[test]
    fn distance_metrics_match_brute_force() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..20 {
            let (w, h) = (20, 16);
            let na = rng.random_range(1..12);
            let nb = rng.random_range(1..12);
            let sample = |rng: &mut ChaCha12Rng, n: usize| -> Vec<(usize, usize)> {
                let mut set = BTreeSet::new();
                while set.len() < n {
                    set.insert((rng.random_range(0..w), rng.random_range(0..h)));
                }
                set.into_iter().collect()
            };
            let a = sample(&mut rng, na);
            let b = sample(&mut rng, nb);
            let fast_h = hausdorff_edges(&a, &b, w, h);
            let slow_h = brute_hausdorff(&a, &b);
            assert!((fast_h - slow_h).abs() < 1e-9, "{fast_h} vs {slow_h}");
            let fast_p = phd_edges(&a, &b, w, h);
            let slow_p = brute_phd(&a, &b);
            assert!((fast_p - slow_p).abs() < 1e-6, "{fast_p} vs {slow_p}");
        }
    }

    #[test]
    fn metrics_are_symmetric() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let a = img(24, 24, |x, y| {
            if (x as i32 - 8).abs() < 5 && (y as i32 - 10).abs() < 6 {
                0.05
            } else {
                0.95
            }
        });
        let b = img(24, 24, |x, y| {
            if (x as i32 - 14).abs() < 4 && (y as i32 - 12).abs() < 7 {
                0.1
            } else {
                0.9
            }
        });
        let _ = rng.random_range(0..2);
        let canny = CannyConfig::default();
        assert_eq!(metric_l1(&a, &b).unwrap(), metric_l1(&b, &a).unwrap());
        assert!(
            (metric_hausdorff(&a, &b, &canny).unwrap() - metric_hausdorff(&b, &a, &canny).unwrap())
                .abs()
                < 1e-12
        );
        assert!(
            (metric_phd(&a, &b, &canny).unwrap() - metric_phd(&b, &a, &canny).unwrap()).abs()
                < 1e-12
        );
        assert!(
            (metric_iou(&a, &b).unwrap().unwrap() - metric_iou(&b, &a).unwrap().unwrap()).abs()
                < 1e-12
        );
    }

    #[test]
    fn iou_cases() {
        // two 8x8 squares overlapping in half: IoU = 32 / 96 = 1/3
        let a = img(24, 24, |x, y| {
            if (4..12).contains(&x) && (4..12).contains(&y) {
                0.0
            } else {
                1.0
            }
        });
        let b = img(24, 24, |x, y| {
            if (8..16).contains(&x) && (4..12).contains(&y) {
                0.0
            } else {
                1.0
            }
        });
        assert_eq!(metric_iou(&a, &a).unwrap().unwrap(), 1.0);
        assert!((metric_iou(&a, &b).unwrap().unwrap() - 1.0 / 3.0).abs() < 1e-12);
        let c = img(24, 24, |x, y| {
            if (16..20).contains(&x) && (16..20).contains(&y) {
                0.0
            } else {
                1.0
            }
        });
        assert_eq!(metric_iou(&a, &c).unwrap().unwrap(), 0.0);
        // both empty -> excluded (None)
        let flat = img(24, 24, |_, _| 1.0);
        assert!(metric_iou(&flat, &flat).unwrap().is_none());
    }

    #[test]
    fn ssim_cases() {
        let a = img(32, 32, |x, y| ((x * 7 + y * 13) % 29) as f32 / 28.0);
        assert!((metric_ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        let neg = img(32, 32, |x, y| 1.0 - ((x * 7 + y * 13) % 29) as f32 / 28.0);
        assert!(metric_ssim(&a, &neg).unwrap() < 0.0);

        // constant vs constant + 0.5: luminance term only
        let c = 0.25f64;
        let x = img(32, 32, |_, _| c as f32);
        let y = img(32, 32, |_, _| (c + 0.5) as f32);
        let got = metric_ssim(&x, &y).unwrap();
        let cf32 = c as f32;
        let df32 = (c + 0.5) as f32;
        let expected = (2.0 * cf32 as f64 * df32 as f64 + SSIM_C1)
            / ((cf32 as f64).powi(2) + (df32 as f64).powi(2) + SSIM_C1);
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
    }

    #[test]
    fn canny_finds_square_boundary() {
        let a = img(32, 32, |x, y| {
            if (8..24).contains(&x) && (8..24).contains(&y) {
                1.0
            } else {
                0.0
            }
        });
        let edges = canny_edges(&a, &CannyConfig::default());
        assert!(!edges.is_empty());
        for &(x, y) in &edges {
            // all edges near the square boundary
            let dx = [(x as i32 - 8).abs(), (x as i32 - 23).abs()]
                .into_iter()
                .min()
                .unwrap();
            let dy = [(y as i32 - 8).abs(), (y as i32 - 23).abs()]
                .into_iter()
                .min()
                .unwrap();
            assert!(dx.min(dy) <= 3, "edge ({x},{y}) far from boundary");
        }
    }

    #[test]
    fn pca_preserves_centered_2d_features_up_to_rotation() {
        let feats: Vec<StyleFeature> = vec![
            StyleFeature(vec![2.0, 0.0]),
            StyleFeature(vec![-2.0, 0.0]),
            StyleFeature(vec![0.0, 1.0]),
            StyleFeature(vec![0.0, -1.0]),
        ];
        let proj = pca_style_features(&feats).unwrap();
        assert!(!proj.degenerate);
        // total variance preserved
        let orig_var: f64 = (4.0 + 4.0 + 1.0 + 1.0) / 3.0;
        let proj_var: f64 = proj.component_variances.iter().sum();
        assert!((orig_var - proj_var).abs() < 1e-9);
        // distances from the origin preserved (rotation)
        for (f, c) in feats.iter().zip(&proj.coords) {
            let orig = (f.0[0] as f64).hypot(f.0[1] as f64);
            let now = c[0].hypot(c[1]);
            assert!((orig - now).abs() < 1e-9);
        }
    }

    #[test]
    fn pca_duplicate_features_project_identically() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let base: Vec<StyleFeature> = (0..4)
            .map(|_| StyleFeature((0..8).map(|_| rng.random_range(-1.0..1.0f32)).collect()))
            .collect();
        let mut doubled = base.clone();
        doubled.extend(base.iter().cloned());
        let proj = pca_style_features(&doubled).unwrap();
        for i in 0..4 {
            assert!((proj.coords[i][0] - proj.coords[i + 4][0]).abs() < 1e-9);
            assert!((proj.coords[i][1] - proj.coords[i + 4][1]).abs() < 1e-9);
        }
    }

    #[test]
    fn pca_matches_dense_eigensolver_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let n = 10;
        let d = 32;
        let feats: Vec<StyleFeature> = (0..n)
            .map(|_| StyleFeature((0..d).map(|_| rng.random_range(-1.0..1.0f32)).collect()))
            .collect();
        let proj = pca_style_features(&feats).unwrap();

        // independent route: dense symmetric eigendecomposition of the
        // covariance via nalgebra
        let mut mean = vec![0.0f64; d];
        for f in &feats {
            for (m, &v) in mean.iter_mut().zip(f.0.iter()) {
                *m += v as f64;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut cov = nalgebra::DMatrix::<f64>::zeros(d, d);
        for f in &feats {
            let c: Vec<f64> = f.0.iter().zip(&mean).map(|(&v, &m)| v as f64 - m).collect();
            for i in 0..d {
                for j in 0..d {
                    cov[(i, j)] += c[i] * c[j] / (n as f64 - 1.0);
                }
            }
        }
        let eig = nalgebra::SymmetricEigen::new(cov);
        let mut values: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
        values.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for k in 0..2 {
            let rel = (proj.component_variances[k] - values[k]).abs() / values[k].abs();
            assert!(rel < 1e-6, "component {k}: {} vs {}", proj.component_variances[k], values[k]);
        }
    }

    #[test]
    fn pca_degenerate_rank_pads_zeros() {
        // all points on one line -> rank 1
        let feats: Vec<StyleFeature> = (0..5)
            .map(|i| StyleFeature(vec![i as f32, 2.0 * i as f32, 0.0]))
            .collect();
        let proj = pca_style_features(&feats).unwrap();
        assert!(proj.degenerate);
        for c in &proj.coords {
            assert_eq!(c[1], 0.0);
        }
    }

    #[test]
    fn report_exclusion_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let gt_dir = dir.path().join("gt");
        let gen_dir = dir.path().join("gen");
        let glyph = img(32, 32, |x, y| {
            if (10..22).contains(&x) && (8..24).contains(&y) {
                0.0
            } else {
                1.0
            }
        });
        let blank = img(32, 32, |_, _| 1.0);
        glyph.save_png(&gt_dir.join("f0/A.png")).unwrap();
        glyph.save_png(&gen_dir.join("f0/A.png")).unwrap();
        glyph.save_png(&gt_dir.join("f0/B.png")).unwrap();
        blank.save_png(&gen_dir.join("f0/B.png")).unwrap(); // empty generation
        let canny = CannyConfig::default();
        let report = build_report(&gt_dir, &gen_dir, None, &canny, BTreeMap::new()).unwrap();
        assert_eq!(report.rows.len(), 2);
        let row_a = &report.rows[0];
        assert_eq!(row_a.letter, 'A');
        assert!(!row_a.excluded);
        assert_eq!(row_a.l1, 0.0);
        assert_eq!(row_a.hausdorff, Some(0.0));
        assert_eq!(row_a.phd, Some(0.0));
        assert_eq!(row_a.iou, Some(1.0));
        assert!((row_a.ssim - 1.0).abs() < 1e-9);
        let row_b = &report.rows[1];
        assert!(row_b.excluded);
        assert!(row_b.hausdorff.is_none());
        assert!(row_b.phd.is_none());
        assert!(row_b.exclusion_reason.as_ref().unwrap().contains("gen"));
        assert!(row_b.l1 > 0.0); // still reported
        // aggregates over non-excluded values only
        assert_eq!(report.aggregates.hausdorff, Some(0.0));
        assert_eq!(report.aggregates.rows_excluded, 1);

        let j1 = dir.path().join("r1.json");
        let j2 = dir.path().join("r2.json");
        report.write_json(&j1).unwrap();
        let report2 = build_report(&gt_dir, &gen_dir, None, &canny, BTreeMap::new()).unwrap();
        report2.write_json(&j2).unwrap();
        assert_eq!(std::fs::read(&j1).unwrap(), std::fs::read(&j2).unwrap());
        let c1 = dir.path().join("r.csv");
        report.write_csv(&c1).unwrap();
        let csv = std::fs::read_to_string(&c1).unwrap();
        assert!(csv.lines().count() == 3);
    }

    #[test]
    fn report_key_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let gt_dir = dir.path().join("gt");
        let gen_dir = dir.path().join("gen");
        let glyph = img(16, 16, |x, _| if x < 8 { 0.0 } else { 1.0 });
        glyph.save_png(&gt_dir.join("f0/A.png")).unwrap();
        glyph.save_png(&gt_dir.join("f0/B.png")).unwrap();
        glyph.save_png(&gen_dir.join("f0/A.png")).unwrap();
        match build_report(&gt_dir, &gen_dir, None, &CannyConfig::default(), BTreeMap::new()) {
            Err(Error::KeyMismatch { missing_in_gen: 1, .. }) => {}
            other => panic!("expected KeyMismatch, got {other:?}"),
        }
    }

    #[test]
    fn weighted_l1_dominated_by_l1_when_w_below_one() {
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        for _ in 0..20 {
            let a = img(8, 8, |_, _| rng.random_range(0.0..1.0));
            let b = img(8, 8, |_, _| rng.random_range(0.0..1.0));
            let w = img(8, 8, |_, _| rng.random_range(0.0..1.0));
            assert!(
                metric_weighted_l1(&a, &b, &w).unwrap() <= metric_l1(&a, &b).unwrap() + 1e-12
            );
        }
    }
}
