//! The six-parameter affine model `u = p1 x + p2 y + p3`, `v = p4 x + p5 y + p6`,
//! overlap masks and cross-layer parameter transfer.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::image::{sample_bilinear, Image2D};

/// Row-major entries of the 2x3 affine matrix mapping reference pixel
/// coordinates to floating image coordinates. Translations `p[2]`, `p[5]`
/// are in pixels of whatever layer the transform is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineParams {
    pub p: [f64; 6],
}

impl AffineParams {
    pub const IDENTITY: Self = Self { p: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0] };

    pub fn new(p: [f64; 6]) -> Self {
        Self { p }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self { p: [1.0, 0.0, tx, 0.0, 1.0, ty] }
    }

    /// Rotation by `degrees` and isotropic `scale` about `center`, followed
    /// by a translation `(tx, ty)`: `u = s R (x - c) + c + t`.
    pub fn similarity(tx: f64, ty: f64, degrees: f64, scale: f64, center: (f64, f64)) -> Self {
        let (sin, cos) = degrees.to_radians().sin_cos();
        let (a, b, c, d) = (scale * cos, -scale * sin, scale * sin, scale * cos);
        let (cx, cy) = center;
        Self {
            p: [a, b, cx - a * cx - b * cy + tx, c, d, cy - c * cx - d * cy + ty],
        }
    }

    #[inline]
    pub fn map_point(&self, x: f64, y: f64) -> (f64, f64) {
        let p = &self.p;
        (p[0] * x + p[1] * y + p[2], p[3] * x + p[4] * y + p[5])
    }

    /// Determinant of the linear part.
    pub fn det(&self) -> f64 {
        self.p[0] * self.p[4] - self.p[1] * self.p[3]
    }

    pub fn is_invertible(&self) -> bool {
        self.det().abs() > 1e-12 && self.p.iter().all(|v| v.is_finite())
    }

    pub fn inverse(&self) -> Result<Self> {
        if !self.is_invertible() {
            return invalid(format!("affine transform {:?} is not invertible", self.p));
        }
        let [a, b, tx, c, d, ty] = self.p;
        let det = self.det();
        let (ia, ib, ic, id) = (d / det, -b / det, -c / det, a / det);
        Ok(Self { p: [ia, ib, -(ia * tx + ib * ty), ic, id, -(ic * tx + id * ty)] })
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        let [a, b, e, c, d, f] = self.p;
        let [a2, b2, e2, c2, d2, f2] = other.p;
        Self {
            p: [
                a * a2 + b * c2,
                a * b2 + b * d2,
                a * e2 + b * f2 + e,
                c * a2 + d * c2,
                c * b2 + d * d2,
                c * e2 + d * f2 + f,
            ],
        }
    }

    /// Re-express the transform on a lattice `scale` times finer: the linear
    /// part is unchanged and the translations scale.
    pub fn transfer_up(&self, scale: f64) -> Self {
        assert!(scale > 0.0, "transfer scale must be positive");
        let mut p = self.p;
        p[2] *= scale;
        p[5] *= scale;
        Self { p }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.p.iter().zip(&other.p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

impl Default for AffineParams {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl From<[f64; 6]> for AffineParams {
    fn from(p: [f64; 6]) -> Self {
        Self { p }
    }
}

/// Axis-aligned box in parameter space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub lo: [f64; 6],
    pub hi: [f64; 6],
}

impl ParamBounds {
    /// Mild scaling and shear with ±10 px translation.
    pub const DEFAULT: Self = Self {
        lo: [0.95, -0.05, -10.0, -0.05, 0.95, -10.0],
        hi: [1.05, 0.05, 10.0, 0.05, 1.05, 10.0],
    };

    pub fn new(lo: [f64; 6], hi: [f64; 6]) -> Result<Self> {
        let b = Self { lo, hi };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..6 {
            if !(self.lo[i].is_finite() && self.hi[i].is_finite()) {
                return invalid(format!("bound {i} is not finite"));
            }
            if self.lo[i] > self.hi[i] {
                return invalid(format!("lower bound {} exceeds upper bound {} for p{}", self.lo[i], self.hi[i], i + 1));
            }
        }
        Ok(())
    }

    /// Same linear-part box with translation limits multiplied by `factor`.
    pub fn with_translation_scaled(&self, factor: f64) -> Self {
        let mut b = *self;
        for i in [2, 5] {
            b.lo[i] *= factor;
            b.hi[i] *= factor;
        }
        b
    }

    pub fn contains(&self, p: &AffineParams) -> bool {
        (0..6).all(|i| p.p[i] >= self.lo[i] && p.p[i] <= self.hi[i])
    }

    pub fn clip(&self, p: &mut [f64; 6]) {
        for i in 0..6 {
            p[i] = p[i].clamp(self.lo[i], self.hi[i]);
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> AffineParams {
        let mut p = [0.0; 6];
        for i in 0..6 {
            p[i] = self.lo[i] + (self.hi[i] - self.lo[i]) * rng.random::<f64>();
        }
        AffineParams { p }
    }
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Uniform draw from the box `[lo, hi]`, reproducible for a given seed.
pub fn random_affine(lo: [f64; 6], hi: [f64; 6], seed: u64) -> Result<AffineParams> {
    let bounds = ParamBounds::new(lo, hi)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(bounds.sample(&mut rng))
}

/// Reference-frame pixels whose transformed coordinates land inside the
/// floating image (the overlap region).
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapMask {
    width: usize,
    height: usize,
    mask: Vec<bool>,
    count: usize,
}

impl OverlapMask {
    pub fn full(width: usize, height: usize) -> Self {
        Self { width, height, mask: vec![true; width * height], count: width * height }
    }

    pub fn from_vec(width: usize, height: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != width * height {
            return invalid("mask length does not match dimensions");
        }
        let count = mask.iter().filter(|&&m| m).count();
        Ok(Self { width, height, mask, count })
    }

    /// Overlap of the reference lattice `ref_dims` with a floating image of
    /// size `float_dims` under `p`.
    pub fn for_transform(p: &AffineParams, float_dims: (usize, usize), ref_dims: (usize, usize)) -> Self {
        let (fw, fh) = float_dims;
        let (w, h) = ref_dims;
        let (umax, vmax) = ((fw - 1) as f64, (fh - 1) as f64);
        let mut mask = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let (u, v) = p.map_point(x as f64, y as f64);
                mask.push(u >= 0.0 && u <= umax && v >= 0.0 && v <= vmax);
            }
        }
        let count = mask.iter().filter(|&&m| m).count();
        Self { width: w, height: h, mask, count }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    /// Mask test with out-of-raster coordinates treated as excluded.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height && self.get(x as usize, y as usize)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.mask
    }

    pub fn intersect(&self, other: &Self) -> Result<Self> {
        if self.dims() != other.dims() {
            return invalid("mask size mismatch");
        }
        let mask: Vec<bool> = self.mask.iter().zip(&other.mask).map(|(a, b)| *a && *b).collect();
        Self::from_vec(self.width, self.height, mask)
    }
}

/// Resample `f` onto the reference lattice: `g(x) = f(P x)`. Pixels outside
/// the overlap are zero.
pub fn warp(f: &Image2D, p: &AffineParams, ref_dims: (usize, usize)) -> Result<(Image2D, OverlapMask)> {
    let (w, h) = ref_dims;
    if w == 0 || h == 0 {
        return invalid("reference dimensions must be positive");
    }
    let mut data = Vec::with_capacity(w * h);
    let mut mask = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = p.map_point(x as f64, y as f64);
            match sample_bilinear(f, u, v) {
                Some(val) => {
                    data.push(val);
                    mask.push(true);
                }
                None => {
                    data.push(0.0);
                    mask.push(false);
                }
            }
        }
    }
    let mask = OverlapMask::from_vec(w, h, mask)?;
    if mask.is_empty() {
        return Err(Error::DegenerateOverlap);
    }
    Ok((Image2D::new(w, h, data)?, mask))
}
