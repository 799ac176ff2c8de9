//! Scalar-plane helpers shared by the pyramid, warping and the solver.
//! All neighbourhood reads replicate the border.

use alloc::vec;
use alloc::vec::Vec;

#[inline]
fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Bilinear sample at real coordinates, clamped to the border.
#[inline]
pub(crate) fn bilinear(data: &[f64], w: usize, h: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = libm::floor(x);
    let y0 = libm::floor(y);
    let fx = x - x0;
    let fy = y - y0;
    let x0 = x0 as usize;
    let y0 = y0 as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let a = data[y0 * w + x0];
    let b = data[y0 * w + x1];
    let c = data[y1 * w + x0];
    let d = data[y1 * w + x1];
    // `a + f·(b − a)` is exactly `a` when f = 0.
    let top = a + fx * (b - a);
    let bot = c + fx * (d - c);
    top + fy * (bot - top)
}

/// Normalized 1-D Gaussian kernel truncated at 3σ.
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = libm::ceil(3.0 * sigma).max(1.0) as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            libm::exp(-d * d / (2.0 * sigma * sigma))
        })
        .collect();
    let s: f64 = k.iter().sum();
    for v in &mut k {
        *v /= s;
    }
    k
}

/// Separable Gaussian blur.
pub(crate) fn gaussian_blur(data: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return data.to_vec();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let xx = clamp_index(x as isize + i as isize - r, w);
                s += kv * data[y * w + xx];
            }
            tmp[y * w + x] = s;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let yy = clamp_index(y as isize + i as isize - r, h);
                s += kv * tmp[yy * w + x];
            }
            out[y * w + x] = s;
        }
    }
    out
}

/// Resamples a plane to `nw×nh` by bilinear interpolation at pixel centres.
pub(crate) fn resize(data: &[f64], w: usize, h: usize, nw: usize, nh: usize) -> Vec<f64> {
    let sx = w as f64 / nw as f64;
    let sy = h as f64 / nh as f64;
    let mut out = Vec::with_capacity(nw * nh);
    for y in 0..nh {
        let fy = (y as f64 + 0.5) * sy - 0.5;
        for x in 0..nw {
            let fx = (x as f64 + 0.5) * sx - 0.5;
            out.push(bilinear(data, w, h, fx, fy));
        }
    }
    out
}

/// Central-difference gradient with replicated borders.
pub(crate) fn centered_gradient(data: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        let ym = y.saturating_sub(1);
        let yp = (y + 1).min(h - 1);
        for x in 0..w {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            gx[y * w + x] = 0.5 * (data[y * w + xp] - data[y * w + xm]);
            gy[y * w + x] = 0.5 * (data[yp * w + x] - data[ym * w + x]);
        }
    }
    (gx, gy)
}

/// Forward differences, zero on the last column/row.
pub(crate) fn forward_gradient(data: &[f64], w: usize, h: usize, gx: &mut [f64], gy: &mut [f64]) {
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            gx[i] = if x + 1 < w { data[i + 1] - data[i] } else { 0.0 };
            gy[i] = if y + 1 < h { data[i + w] - data[i] } else { 0.0 };
        }
    }
}

/// Divergence, the negative adjoint of [`forward_gradient`].
pub(crate) fn divergence(p1: &[f64], p2: &[f64], w: usize, h: usize, out: &mut [f64]) {
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let dx = if w == 1 {
                0.0
            } else if x == 0 {
                p1[i]
            } else if x + 1 == w {
                -p1[i - 1]
            } else {
                p1[i] - p1[i - 1]
            };
            let dy = if h == 1 {
                0.0
            } else if y == 0 {
                p2[i]
            } else if y + 1 == h {
                -p2[i - w]
            } else {
                p2[i] - p2[i - w]
            };
            out[i] = dx + dy;
        }
    }
}

/// 3×3 median filter with replicated borders.
pub(crate) fn median3(data: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    let mut win = [0.0f64; 9];
    for y in 0..h {
        for x in 0..w {
            let mut n = 0;
            for dy in -1isize..=1 {
                let yy = clamp_index(y as isize + dy, h);
                for dx in -1isize..=1 {
                    let xx = clamp_index(x as isize + dx, w);
                    win[n] = data[yy * w + xx];
                    n += 1;
                }
            }
            win.sort_unstable_by(|a, b| a.total_cmp(b));
            out[y * w + x] = win[4];
        }
    }
    out
}
