//! Coarse-to-fine primal-dual TV-L1 solver (Zach–Pock–Bischof scheme with
//! the Chambolle dual projection and Wedel-style median filtering).
//!
//! Per warp the data term is linearized around the current flow; each inner
//! iteration performs the pointwise thresholding step, the primal update
//! `u = v + θ·div p` and the dual ascent `p ← (p + τ/θ ∇u)/(1 + τ/θ |∇u|)`.

use alloc::vec;
use alloc::vec::Vec;

use super::image::{centered_gradient, divergence, forward_gradient, median3, resize};
use super::pyramid::{downsample, level_size, MIN_LEVEL_SIZE};
use super::warp::warp_plane;
use super::{FlowField, Frame};
use crate::error::{shape_err, Error, Result};

/// Intensities are scaled to `[0, 255]` inside the solver so that `lambda`
/// keeps its customary meaning.
const INTENSITY_SCALE: f64 = 255.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvL1Params {
    /// Weight of the L1 data-attachment term.
    pub lambda: f64,
    /// Coupling between the primal flow and its auxiliary variable.
    pub theta: f64,
    /// Dual step size; must not exceed 1/8.
    pub tau: f64,
    pub warps: usize,
    pub iterations: usize,
    pub levels: usize,
    pub scale: f64,
    pub epsilon: f64,
    pub median_filter: bool,
}

impl Default for TvL1Params {
    fn default() -> Self {
        TvL1Params {
            lambda: 0.15,
            theta: 0.3,
            tau: 0.125,
            warps: 5,
            iterations: 30,
            levels: 5,
            scale: 0.5,
            epsilon: 0.01,
            median_filter: true,
        }
    }
}

impl TvL1Params {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.tau > 0.0 && self.tau <= 0.125) {
            return bad("tv-l1 tau must be in (0, 0.125]");
        }
        if !(self.lambda > 0.0 && self.theta > 0.0) {
            return bad("tv-l1 lambda and theta must be positive");
        }
        if self.levels == 0 || self.warps == 0 || self.iterations == 0 {
            return bad("tv-l1 levels, warps and iterations must be at least 1");
        }
        if !(self.scale > 0.0 && self.scale < 1.0) {
            return bad("tv-l1 pyramid scale must be in (0, 1)");
        }
        if !(self.epsilon >= 0.0) {
            return bad("tv-l1 epsilon must be non-negative");
        }
        Ok(())
    }
}

struct Plane {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

fn pyramid_planes(frame: &Frame, levels: usize, scale: f64) -> Vec<Plane> {
    let mut out = vec![Plane {
        w: frame.width(),
        h: frame.height(),
        data: frame.data().iter().map(|v| v * INTENSITY_SCALE).collect(),
    }];
    while out.len() < levels {
        let p = out.last().expect("non-empty");
        let (nw, nh) = level_size(p.w, p.h, scale);
        if nw < MIN_LEVEL_SIZE || nh < MIN_LEVEL_SIZE {
            break;
        }
        let data = downsample(&p.data, p.w, p.h, nw, nh, scale);
        out.push(Plane { w: nw, h: nh, data });
    }
    out
}

/// TV-L1 energy `Σ |∇u| + |∇v| + λ |I₁(x + w) − I₀|` of a flow, on the
/// solver's intensity scale.
pub fn tv_l1_energy(prev: &Frame, next: &Frame, flow: &FlowField, lambda: f64) -> Result<f64> {
    check_pair(prev, next)?;
    if flow.width() != prev.width() || flow.height() != prev.height() {
        return shape_err("tv_l1_energy", &[prev.height(), prev.width()], &[flow.height(), flow.width()]);
    }
    let i0: Vec<f64> = prev.data().iter().map(|v| v * INTENSITY_SCALE).collect();
    let i1: Vec<f64> = next.data().iter().map(|v| v * INTENSITY_SCALE).collect();
    Ok(energy(&i0, &i1, prev.width(), prev.height(), flow.u(), flow.v(), lambda))
}

fn energy(i0: &[f64], i1: &[f64], w: usize, h: usize, u1: &[f64], u2: &[f64], lambda: f64) -> f64 {
    let n = w * h;
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    let mut tv = 0.0;
    for u in [u1, u2] {
        forward_gradient(u, w, h, &mut gx, &mut gy);
        tv += gx
            .iter()
            .zip(&gy)
            .map(|(a, b)| libm::sqrt(a * a + b * b))
            .sum::<f64>();
    }
    let warped = warp_plane(i1, w, h, u1, u2);
    let data: f64 = warped.iter().zip(i0).map(|(a, b)| (a - b).abs()).sum();
    tv + lambda * data
}

fn check_pair(prev: &Frame, next: &Frame) -> Result<()> {
    if prev.width() != next.width() || prev.height() != next.height() {
        return shape_err(
            "tv_l1_flow",
            &[prev.height(), prev.width()],
            &[next.height(), next.width()],
        );
    }
    Ok(())
}

/// Dense flow from `prev` to `next`: `prev(x) ≈ next(x + w(x))`.
pub fn tv_l1_flow(prev: &Frame, next: &Frame, params: &TvL1Params) -> Result<FlowField> {
    tv_l1_flow_traced(prev, next, params).map(|(f, _)| f)
}

/// Like [`tv_l1_flow`], also returning the finest-level energy after each
/// warp.
pub fn tv_l1_flow_traced(prev: &Frame, next: &Frame, params: &TvL1Params) -> Result<(FlowField, Vec<f64>)> {
    check_pair(prev, next)?;
    params.validate()?;
    if prev.width().min(prev.height()) < 16 {
        return Err(Error::InvalidInput("tv-l1 needs frames of at least 16x16".into()));
    }
    let p0 = pyramid_planes(prev, params.levels, params.scale);
    let p1 = pyramid_planes(next, params.levels, params.scale);
    let coarsest = p0.len() - 1;

    let mut u1 = vec![0.0; p0[coarsest].w * p0[coarsest].h];
    let mut u2 = u1.clone();
    let mut trace = Vec::new();

    for level in (0..=coarsest).rev() {
        let (w, h) = (p0[level].w, p0[level].h);
        let record = if level == 0 { Some(&mut trace) } else { None };
        solve_level(&p0[level].data, &p1[level].data, w, h, &mut u1, &mut u2, params, record);
        if level > 0 {
            let (nw, nh) = (p0[level - 1].w, p0[level - 1].h);
            let rx = nw as f64 / w as f64;
            let ry = nh as f64 / h as f64;
            u1 = resize(&u1, w, h, nw, nh).into_iter().map(|v| v * rx).collect();
            u2 = resize(&u2, w, h, nw, nh).into_iter().map(|v| v * ry).collect();
        }
    }
    let flow = FlowField::new(prev.width(), prev.height(), u1, u2)?;
    Ok((flow, trace))
}

#[allow(clippy::too_many_arguments)]
fn solve_level(
    i0: &[f64],
    i1: &[f64],
    w: usize,
    h: usize,
    u1: &mut [f64],
    u2: &mut [f64],
    params: &TvL1Params,
    mut trace: Option<&mut Vec<f64>>,
) {
    let n = w * h;
    let (i1x, i1y) = centered_gradient(i1, w, h);
    let mut p11 = vec![0.0; n];
    let mut p12 = vec![0.0; n];
    let mut p21 = vec![0.0; n];
    let mut p22 = vec![0.0; n];
    let mut v1 = vec![0.0; n];
    let mut v2 = vec![0.0; n];
    let mut div1 = vec![0.0; n];
    let mut div2 = vec![0.0; n];
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    let l_t = params.lambda * params.theta;
    let taut = params.tau / params.theta;
    let stop = params.epsilon * params.epsilon;

    for _ in 0..params.warps {
        let i1w = warp_plane(i1, w, h, u1, u2);
        let i1wx = warp_plane(&i1x, w, h, u1, u2);
        let i1wy = warp_plane(&i1y, w, h, u1, u2);
        let grad: Vec<f64> = i1wx.iter().zip(&i1wy).map(|(a, b)| a * a + b * b).collect();
        let rho_c: Vec<f64> = (0..n)
            .map(|i| i1w[i] - i1wx[i] * u1[i] - i1wy[i] * u2[i] - i0[i])
            .collect();

        let mut iter = 0;
        let mut error = f64::INFINITY;
        while error > stop && iter < params.iterations {
            iter += 1;
            // Pointwise minimization of the linearized data term.
            for i in 0..n {
                let rho = rho_c[i] + i1wx[i] * u1[i] + i1wy[i] * u2[i];
                let (d1, d2) = if rho < -l_t * grad[i] {
                    (l_t * i1wx[i], l_t * i1wy[i])
                } else if rho > l_t * grad[i] {
                    (-l_t * i1wx[i], -l_t * i1wy[i])
                } else if grad[i] < 1e-10 {
                    (0.0, 0.0)
                } else {
                    let fi = -rho / grad[i];
                    (fi * i1wx[i], fi * i1wy[i])
                };
                v1[i] = u1[i] + d1;
                v2[i] = u2[i] + d2;
            }

            divergence(&p11, &p12, w, h, &mut div1);
            divergence(&p21, &p22, w, h, &mut div2);
            error = 0.0;
            for i in 0..n {
                let a = v1[i] + params.theta * div1[i];
                let b = v2[i] + params.theta * div2[i];
                error += (a - u1[i]) * (a - u1[i]) + (b - u2[i]) * (b - u2[i]);
                u1[i] = a;
                u2[i] = b;
            }
            error /= n as f64;

            forward_gradient(u1, w, h, &mut gx, &mut gy);
            for i in 0..n {
                let ng = 1.0 + taut * libm::sqrt(gx[i] * gx[i] + gy[i] * gy[i]);
                p11[i] = (p11[i] + taut * gx[i]) / ng;
                p12[i] = (p12[i] + taut * gy[i]) / ng;
            }
            forward_gradient(u2, w, h, &mut gx, &mut gy);
            for i in 0..n {
                let ng = 1.0 + taut * libm::sqrt(gx[i] * gx[i] + gy[i] * gy[i]);
                p21[i] = (p21[i] + taut * gx[i]) / ng;
                p22[i] = (p22[i] + taut * gy[i]) / ng;
            }
        }

        if params.median_filter {
            let m1 = median3(u1, w, h);
            let m2 = median3(u2, w, h);
            u1.copy_from_slice(&m1);
            u2.copy_from_slice(&m2);
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(energy(i0, i1, w, h, u1, u2, params.lambda));
        }
    }
}
