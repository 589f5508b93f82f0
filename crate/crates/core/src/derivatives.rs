//! Analytic gradient and Hessian of the NTG objective under the affine model.
//!
//! The objective differentiated here replaces `|.|` with the smooth surrogate
//! `s(.)` and takes the image gradients of the warped floating image from the
//! chain rule, `g_x = u_x f_u + v_x f_v`, `g_y = u_y f_u + v_y f_v`:
//!
//! ```text
//! m(p) = sum_x s(g_x - f_R,x) + s(g_y - f_R,y)
//! n(p) = sum_x s(g_x) + s(g_y) + s(f_R,x) + s(f_R,y)
//! J(p) = m / n
//! ```
//!
//! The overlap is treated as locally constant in `p`, so the derivatives are
//! exact for a fixed mask.

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::image::{gradient, Axis, BSplineSurface, DerivativeStack, Image2D, LocalJet};
use crate::smooth_abs::SmoothAbsConfig;
use crate::transform::{AffineParams, OverlapMask};

/// How the floating image's derivatives at non-lattice points are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DerivativeMode {
    /// Analytic derivatives of a cubic B-spline interpolant.
    #[default]
    Spline,
    /// Finite-difference derivative planes sampled bilinearly.
    Stencil,
}

impl std::str::FromStr for DerivativeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spline" => Ok(Self::Spline),
            "stencil" => Ok(Self::Stencil),
            other => invalid(format!("unknown derivative mode '{other}' (expected spline or stencil)")),
        }
    }
}

/// Floating-image derivatives through third order, queryable at any `(u, v)`.
#[derive(Debug, Clone)]
pub enum FloatingDerivatives {
    Spline(BSplineSurface),
    Stencil(DerivativeStack),
}

impl FloatingDerivatives {
    pub fn build(img: &Image2D, mode: DerivativeMode) -> Result<Self> {
        let (w, h) = img.dims();
        if w < 4 || h < 4 {
            return invalid(format!("floating image must be at least 4x4, got {w}x{h}"));
        }
        Ok(match mode {
            DerivativeMode::Spline => Self::Spline(BSplineSurface::new(img)),
            DerivativeMode::Stencil => Self::Stencil(DerivativeStack::build(img)?),
        })
    }

    pub fn mode(&self) -> DerivativeMode {
        match self {
            Self::Spline(_) => DerivativeMode::Spline,
            Self::Stencil(_) => DerivativeMode::Stencil,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        match self {
            Self::Spline(s) => s.dims(),
            Self::Stencil(s) => s.dims(),
        }
    }

    /// Jet at `(u, v)` when it lies inside the floating image.
    #[inline]
    pub fn jet(&self, u: f64, v: f64) -> Option<LocalJet> {
        match self {
            Self::Spline(s) => s.sample(u, v),
            Self::Stencil(s) => s.sample(u, v),
        }
    }

    /// Jet at `(u, v)` also slightly outside the image: the spline uses its
    /// mirrored extension, the stencil planes clamp to the border.
    #[inline]
    pub fn jet_extended(&self, u: f64, v: f64) -> LocalJet {
        match self {
            Self::Spline(s) => s.eval(u, v),
            Self::Stencil(s) => {
                let (w, h) = s.dims();
                let u = u.clamp(0.0, (w - 1) as f64);
                let v = v.clamp(0.0, (h - 1) as f64);
                s.sample(u, v).expect("clamped into the image")
            }
        }
    }
}

/// First-order gradients of the reference image on its own lattice.
#[derive(Debug, Clone)]
pub struct ReferenceGradients {
    pub gx: Image2D,
    pub gy: Image2D,
}

impl ReferenceGradients {
    /// Uses the same derivative operator as the floating image so that
    /// identical images give an identically zero difference gradient.
    pub fn build(img: &Image2D, mode: DerivativeMode) -> Result<Self> {
        match mode {
            DerivativeMode::Spline => {
                let (gx, gy) = BSplineSurface::new(img).lattice_gradients();
                Ok(Self { gx, gy })
            }
            DerivativeMode::Stencil => Ok(Self { gx: gradient(img, Axis::X)?, gy: gradient(img, Axis::Y)? }),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.gx.dims()
    }
}

/// `u_p = (x, y, 1, 0, 0, 0)`, `v_p = (0, 0, 0, x, y, 1)`.
#[inline]
fn coordinate_partials(x: f64, y: f64) -> ([f64; 6], [f64; 6]) {
    ([x, y, 1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, x, y, 1.0])
}

/// Warped gradients and their first derivatives with respect to `p` at one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrderChain {
    pub gx: f64,
    pub gy: f64,
    pub gx_p: [f64; 6],
    pub gy_p: [f64; 6],
}

/// Intermediate `f_{u,p}`, `f_{v,p}` shared by the first- and second-order chains.
#[derive(Debug, Clone, Copy)]
struct ChainParts {
    up: [f64; 6],
    vp: [f64; 6],
    fu_p: [f64; 6],
    fv_p: [f64; 6],
}

#[inline]
fn chain_parts(jet: &LocalJet, x: f64, y: f64) -> ChainParts {
    let (up, vp) = coordinate_partials(x, y);
    let mut fu_p = [0.0; 6];
    let mut fv_p = [0.0; 6];
    for i in 0..6 {
        fu_p[i] = jet.fuu * up[i] + jet.fuv * vp[i];
        fv_p[i] = jet.fuv * up[i] + jet.fvv * vp[i];
    }
    ChainParts { up, vp, fu_p, fv_p }
}

#[inline]
fn first_order_from_jet(p: &AffineParams, jet: &LocalJet, parts: &ChainParts) -> FirstOrderChain {
    let [p1, p2, _, p4, p5, _] = p.p;
    let gx = p1 * jet.fu + p4 * jet.fv;
    let gy = p2 * jet.fu + p5 * jet.fv;
    let mut gx_p = [0.0; 6];
    let mut gy_p = [0.0; 6];
    for i in 0..6 {
        gx_p[i] = p1 * parts.fu_p[i] + p4 * parts.fv_p[i];
        gy_p[i] = p2 * parts.fu_p[i] + p5 * parts.fv_p[i];
    }
    // u_{x,p} = e1, v_{x,p} = e4, u_{y,p} = e2, v_{y,p} = e5
    gx_p[0] += jet.fu;
    gx_p[3] += jet.fv;
    gy_p[1] += jet.fu;
    gy_p[4] += jet.fv;
    FirstOrderChain { gx, gy, gx_p, gy_p }
}

/// Second derivatives of `g_x` and `g_y` with respect to `p` at one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondOrderChain {
    pub gx_pp: [[f64; 6]; 6],
    pub gy_pp: [[f64; 6]; 6],
}

#[inline]
fn second_order_from_jet(p: &AffineParams, jet: &LocalJet, parts: &ChainParts) -> SecondOrderChain {
    let [p1, p2, _, p4, p5, _] = p.p;
    let ChainParts { up, vp, fu_p, fv_p } = *parts;
    let mut fuu_p = [0.0; 6];
    let mut fuv_p = [0.0; 6];
    let mut fvv_p = [0.0; 6];
    for j in 0..6 {
        fuu_p[j] = jet.fuuu * up[j] + jet.fuuv * vp[j];
        fuv_p[j] = jet.fuuv * up[j] + jet.fuvv * vp[j];
        fvv_p[j] = jet.fuvv * up[j] + jet.fvvv * vp[j];
    }
    let mut gx_pp = [[0.0; 6]; 6];
    let mut gy_pp = [[0.0; 6]; 6];
    for i in 0..6 {
        for j in 0..6 {
            // Jacobian x (third derivatives of f) x coordinate partials
            let hu = fuu_p[j] * up[i] + fuv_p[j] * vp[i];
            let hv = fuv_p[j] * up[i] + fvv_p[j] * vp[i];
            let mut ex = p1 * hu + p4 * hv;
            let mut ey = p2 * hu + p5 * hv;
            // affine partials of the Jacobian against f_{.,p}
            match j {
                0 => ex += fu_p[i],
                3 => ex += fv_p[i],
                1 => ey += fu_p[i],
                4 => ey += fv_p[i],
                _ => {}
            }
            match i {
                0 => ex += fu_p[j],
                3 => ex += fv_p[j],
                1 => ey += fu_p[j],
                4 => ey += fv_p[j],
                _ => {}
            }
            gx_pp[i][j] = ex;
            gy_pp[i][j] = ey;
        }
    }
    SecondOrderChain { gx_pp, gy_pp }
}

/// Chain rule at reference pixel `(x, y)`; `None` if it maps outside the floating image.
pub fn first_order_chain(src: &FloatingDerivatives, p: &AffineParams, x: f64, y: f64) -> Option<FirstOrderChain> {
    let (u, v) = p.map_point(x, y);
    let jet = src.jet(u, v)?;
    Some(first_order_from_jet(p, &jet, &chain_parts(&jet, x, y)))
}

/// Per-pixel Hessians `H^{g_x}`, `H^{g_y}`.
pub fn second_order_chain(src: &FloatingDerivatives, p: &AffineParams, x: f64, y: f64) -> Option<SecondOrderChain> {
    let (u, v) = p.map_point(x, y);
    let jet = src.jet(u, v)?;
    Some(second_order_from_jet(p, &jet, &chain_parts(&jet, x, y)))
}

/// Smoothed objective with gradient and Hessian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveEval {
    pub j: f64,
    pub m: f64,
    pub n: f64,
    pub grad: Vector6<f64>,
    /// Symmetrized Hessian.
    pub hess: Matrix6<f64>,
    /// `||H - H^T||_F / ||H||_F` of the Hessian before symmetrization.
    pub raw_asymmetry: f64,
    pub overlap_count: usize,
}

/// Objective value and gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientEval {
    pub j: f64,
    pub m: f64,
    pub n: f64,
    pub grad: Vector6<f64>,
    pub overlap_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Order {
    Value,
    Gradient,
    Hessian,
}

struct Sums {
    m: f64,
    n: f64,
    floating_energy: f64,
    count: usize,
    m_p: Vector6<f64>,
    n_p: Vector6<f64>,
    h_m: Matrix6<f64>,
    h_n: Matrix6<f64>,
}

/// Floating image derivatives, reference gradients and the surrogate
/// sharpness: everything needed to evaluate the smoothed objective.
#[derive(Debug, Clone, Copy)]
pub struct NtgModel<'a> {
    floating: &'a FloatingDerivatives,
    reference: &'a ReferenceGradients,
    smooth: SmoothAbsConfig,
}

impl<'a> NtgModel<'a> {
    pub fn new(floating: &'a FloatingDerivatives, reference: &'a ReferenceGradients, smooth: SmoothAbsConfig) -> Self {
        Self { floating, reference, smooth }
    }

    pub fn smooth(&self) -> SmoothAbsConfig {
        self.smooth
    }

    pub fn reference_dims(&self) -> (usize, usize) {
        self.reference.dims()
    }

    /// Overlap of the reference lattice with the floating image under `p`.
    pub fn overlap(&self, p: &AffineParams) -> OverlapMask {
        OverlapMask::for_transform(p, self.floating.dims(), self.reference.dims())
    }

    fn accumulate(&self, p: &AffineParams, fixed: Option<&OverlapMask>, order: Order) -> Result<Sums> {
        let (w, h) = self.reference.dims();
        if let Some(mask) = fixed {
            if mask.dims() != (w, h) {
                return invalid("fixed mask does not match the reference size");
            }
        }
        let sm = self.smooth;
        let mut sums = Sums {
            m: 0.0,
            n: 0.0,
            floating_energy: 0.0,
            count: 0,
            m_p: Vector6::zeros(),
            n_p: Vector6::zeros(),
            h_m: Matrix6::zeros(),
            h_n: Matrix6::zeros(),
        };
        let rgx = self.reference.gx.data();
        let rgy = self.reference.gy.data();
        for y in 0..h {
            let mut row = Sums { ..sums_zero() };
            for x in 0..w {
                let (xf, yf) = (x as f64, y as f64);
                let (u, v) = p.map_point(xf, yf);
                let jet = match fixed {
                    Some(mask) => {
                        if !mask.get(x, y) {
                            continue;
                        }
                        self.floating.jet_extended(u, v)
                    }
                    None => match self.floating.jet(u, v) {
                        Some(j) => j,
                        None => continue,
                    },
                };
                let idx = y * w + x;
                let (rx, ry) = (rgx[idx], rgy[idx]);
                let parts = chain_parts(&jet, xf, yf);
                let c1 = first_order_from_jet(p, &jet, &parts);
                let (dx, dy) = (c1.gx - rx, c1.gy - ry);
                row.count += 1;
                row.m += sm.s(dx) + sm.s(dy);
                row.n += sm.s(c1.gx) + sm.s(c1.gy) + sm.s(rx) + sm.s(ry);
                row.floating_energy += c1.gx.abs() + c1.gy.abs();
                if order == Order::Value {
                    continue;
                }
                let gxp = Vector6::from_row_slice(&c1.gx_p);
                let gyp = Vector6::from_row_slice(&c1.gy_p);
                let (r1dx, r1dy, r1gx, r1gy) = (sm.rho1(dx), sm.rho1(dy), sm.rho1(c1.gx), sm.rho1(c1.gy));
                row.m_p += gxp * r1dx + gyp * r1dy;
                row.n_p += gxp * r1gx + gyp * r1gy;
                if order < Order::Hessian {
                    continue;
                }
                let c2 = second_order_from_jet(p, &jet, &parts);
                let (r2dx, r2dy, r2gx, r2gy) = (sm.rho2(dx), sm.rho2(dy), sm.rho2(c1.gx), sm.rho2(c1.gy));
                let outer_x = gxp * gxp.transpose();
                let outer_y = gyp * gyp.transpose();
                for i in 0..6 {
                    for j in 0..6 {
                        let (hx, hy) = (c2.gx_pp[i][j], c2.gy_pp[i][j]);
                        row.h_m[(i, j)] += r1dx * hx + r2dx * outer_x[(i, j)] + r1dy * hy + r2dy * outer_y[(i, j)];
                        row.h_n[(i, j)] += r1gx * hx + r2gx * outer_x[(i, j)] + r1gy * hy + r2gy * outer_y[(i, j)];
                    }
                }
            }
            // fixed row-then-image order keeps the reduction deterministic
            sums.m += row.m;
            sums.n += row.n;
            sums.floating_energy += row.floating_energy;
            sums.count += row.count;
            sums.m_p += row.m_p;
            sums.n_p += row.n_p;
            sums.h_m += row.h_m;
            sums.h_n += row.h_n;
        }
        if sums.count == 0 {
            return Err(Error::DegenerateOverlap);
        }
        if sums.floating_energy <= 1e-12 * sums.count as f64 {
            return Err(Error::DegenerateContent("floating image has no gradient on the overlap".into()));
        }
        if sums.n <= 0.0 {
            return Err(Error::DegenerateContent("objective denominator vanished".into()));
        }
        Ok(sums)
    }

    /// Smoothed objective `(J, m, n, |overlap|)`; `fixed` pins the overlap mask.
    pub fn value(&self, p: &AffineParams, fixed: Option<&OverlapMask>) -> Result<(f64, f64, f64, usize)> {
        let s = self.accumulate(p, fixed, Order::Value)?;
        Ok((s.m / s.n, s.m, s.n, s.count))
    }

    pub fn gradient(&self, p: &AffineParams, fixed: Option<&OverlapMask>) -> Result<GradientEval> {
        let s = self.accumulate(p, fixed, Order::Gradient)?;
        let grad = (s.m_p * s.n - s.n_p * s.m) / (s.n * s.n);
        Ok(GradientEval { j: s.m / s.n, m: s.m, n: s.n, grad, overlap_count: s.count })
    }

    pub fn evaluate(&self, p: &AffineParams, fixed: Option<&OverlapMask>) -> Result<ObjectiveEval> {
        let s = self.accumulate(p, fixed, Order::Hessian)?;
        let (m, n) = (s.m, s.n);
        let grad = (s.m_p * n - s.n_p * m) / (n * n);
        let raw = (s.h_m * n - s.h_n * m + s.n_p * s.n_p.transpose() * (2.0 * m / n)
            - s.m_p * s.n_p.transpose()
            - s.n_p * s.m_p.transpose())
            / (n * n);
        let norm = raw.norm();
        let raw_asymmetry = if norm > 0.0 { (raw - raw.transpose()).norm() / norm } else { 0.0 };
        let hess = (raw + raw.transpose()) * 0.5;
        Ok(ObjectiveEval { j: m / n, m, n, grad, hess, raw_asymmetry, overlap_count: s.count })
    }
}

fn sums_zero() -> Sums {
    Sums {
        m: 0.0,
        n: 0.0,
        floating_energy: 0.0,
        count: 0,
        m_p: Vector6::zeros(),
        n_p: Vector6::zeros(),
        h_m: Matrix6::zeros(),
        h_n: Matrix6::zeros(),
    }
}

/// `(J, m, n, J_p)` of the smoothed objective on the current overlap.
pub fn grad_objective(
    floating: &FloatingDerivatives,
    reference: &ReferenceGradients,
    p: &AffineParams,
    smooth: SmoothAbsConfig,
) -> Result<GradientEval> {
    NtgModel::new(floating, reference, smooth).gradient(p, None)
}

/// Full evaluation including the symmetrized Hessian.
pub fn hess_objective(
    floating: &FloatingDerivatives,
    reference: &ReferenceGradients,
    p: &AffineParams,
    smooth: SmoothAbsConfig,
) -> Result<ObjectiveEval> {
    NtgModel::new(floating, reference, smooth).evaluate(p, None)
}
