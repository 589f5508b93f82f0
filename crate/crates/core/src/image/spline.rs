//! Cubic B-spline interpolation with analytic derivatives through third order.
//!
//! The interpolant passes through every lattice sample and is C2, so its
//! first and second derivatives are continuous functions of `(u, v)`. That
//! makes the chain-rule gradient and Hessian of the registration objective
//! exact derivatives of a well-defined function.

use super::Image2D;

/// Value and partial derivatives of an image at one (possibly fractional)
/// location. Mixed partials are symmetric, so only distinct ones are kept.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LocalJet {
    pub f: f64,
    pub fu: f64,
    pub fv: f64,
    pub fuu: f64,
    pub fuv: f64,
    pub fvv: f64,
    pub fuuu: f64,
    pub fuuv: f64,
    pub fuvv: f64,
    pub fvvv: f64,
}

/// Pole of the cubic B-spline interpolation prefilter.
const POLE: f64 = -0.267_949_192_431_122_7; // sqrt(3) - 2

/// Samples added on each side before prefiltering.
const PAD: usize = 6;

/// Cubic B-spline coefficients of an image. The samples are first extended
/// by extrapolation, which keeps the border slope and curvature; the
/// whole-sample mirror condition of the prefilter then only acts `PAD`
/// samples outside the image.
#[derive(Debug, Clone)]
pub struct BSplineSurface {
    width: usize,
    height: usize,
    /// Padded coefficient grid dimensions.
    cw: usize,
    ch: usize,
    coeffs: Vec<f64>,
}

/// Value at signed index `k` of a line extended past its ends by
/// quadratic extrapolation, `f(-k) = 3 f(0) - 3 f(k) + f(2k)`, or by point
/// reflection when the line is too short.
fn extend(line: impl Fn(usize) -> f64, n: usize, k: i64) -> f64 {
    let last = (n - 1) as i64;
    let (origin, dist, dir) = if k < 0 {
        (0, -k, 1)
    } else if k > last {
        (last, k - last, -1)
    } else {
        return line(k as usize);
    };
    let at = |j: i64| line((origin + dir * j) as usize);
    if 2 * dist <= last {
        3.0 * at(0) - 3.0 * at(dist) + at(2 * dist)
    } else if dist <= last {
        2.0 * at(0) - at(dist)
    } else {
        at(0)
    }
}

impl BSplineSurface {
    pub fn new(img: &Image2D) -> Self {
        let (iw, ih) = img.dims();
        let (pad_x, pad_y) = (if iw > 1 { PAD } else { 0 }, if ih > 1 { PAD } else { 0 });
        let (w, h) = (iw + 2 * pad_x, ih + 2 * pad_y);
        // rows first, then columns of the row-extended grid
        let mut rows = vec![0.0; w * ih];
        for y in 0..ih {
            for x in 0..w {
                rows[y * w + x] = extend(|i| img.get(i, y), iw, x as i64 - pad_x as i64);
            }
        }
        let mut coeffs = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                coeffs[y * w + x] = extend(|j| rows[j * w + x], ih, y as i64 - pad_y as i64);
            }
        }
        let mut line = vec![0.0; w.max(h)];
        for y in 0..h {
            let row = &mut coeffs[y * w..(y + 1) * w];
            prefilter(row);
        }
        for x in 0..w {
            for y in 0..h {
                line[y] = coeffs[y * w + x];
            }
            prefilter(&mut line[..h]);
            for y in 0..h {
                coeffs[y * w + x] = line[y];
            }
        }
        Self { width: iw, height: ih, cw: w, ch: h, coeffs }
    }

    fn pads(&self) -> (f64, f64) {
        (((self.cw - self.width) / 2) as f64, ((self.ch - self.height) / 2) as f64)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Jet at `(u, v)` if the point lies within the lattice hull
    /// `[0, w-1] x [0, h-1]`, the same domain bilinear sampling accepts.
    pub fn sample(&self, u: f64, v: f64) -> Option<LocalJet> {
        let (wmax, hmax) = ((self.width - 1) as f64, (self.height - 1) as f64);
        if u >= 0.0 && u <= wmax && v >= 0.0 && v <= hmax {
            Some(self.eval(u, v))
        } else {
            None
        }
    }

    /// Jet anywhere in the plane; far outside the image the coefficient
    /// grid is mirrored.
    pub fn eval(&self, u: f64, v: f64) -> LocalJet {
        let (px, py) = self.pads();
        let (u, v) = (u + px, v + py);
        let iu = u.floor();
        let iv = v.floor();
        let wu = KernelWeights::new(u - iu);
        let wv = KernelWeights::new(v - iv);
        let (iu, iv) = (iu as i64, iv as i64);

        // Per coefficient row: dot products with the u-kernel and its derivatives.
        let mut rows = [[0.0f64; 4]; 4];
        for (j, row) in rows.iter_mut().enumerate() {
            let yy = mirror(iv - 1 + j as i64, self.ch);
            let base = yy * self.cw;
            for i in 0..4 {
                let c = self.coeffs[base + mirror(iu - 1 + i as i64, self.cw)];
                row[0] += c * wu.d0[i];
                row[1] += c * wu.d1[i];
                row[2] += c * wu.d2[i];
                row[3] += c * wu.d3[i];
            }
        }
        let dot = |kernel: &[f64; 4], order: usize| -> f64 {
            (0..4).map(|j| kernel[j] * rows[j][order]).sum()
        };
        LocalJet {
            f: dot(&wv.d0, 0),
            fu: dot(&wv.d0, 1),
            fv: dot(&wv.d1, 0),
            fuu: dot(&wv.d0, 2),
            fuv: dot(&wv.d1, 1),
            fvv: dot(&wv.d2, 0),
            fuuu: dot(&wv.d0, 3),
            fuuv: dot(&wv.d1, 2),
            fuvv: dot(&wv.d2, 1),
            fvvv: dot(&wv.d3, 0),
        }
    }

    /// Analytic first derivatives of the interpolant at every lattice point.
    pub fn lattice_gradients(&self) -> (Image2D, Image2D) {
        let mut gu = Image2D::filled(self.width, self.height, 0.0);
        let mut gv = Image2D::filled(self.width, self.height, 0.0);
        for y in 0..self.height {
            for x in 0..self.width {
                let jet = self.eval(x as f64, y as f64);
                gu.set(x, y, jet.fu);
                gv.set(x, y, jet.fv);
            }
        }
        (gu, gv)
    }
}

/// Cubic B-spline kernel weights and derivatives for the taps at offsets
/// -1, 0, 1, 2 from `floor(t)`, with `t` the fractional part.
struct KernelWeights {
    d0: [f64; 4],
    d1: [f64; 4],
    d2: [f64; 4],
    d3: [f64; 4],
}

impl KernelWeights {
    #[inline]
    fn new(t: f64) -> Self {
        let t2 = t * t;
        let t3 = t2 * t;
        let s = 1.0 - t;
        Self {
            d0: [
                s * s * s / 6.0,
                (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
                (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
                t3 / 6.0,
            ],
            d1: [-0.5 * s * s, 1.5 * t2 - 2.0 * t, -1.5 * t2 + t + 0.5, 0.5 * t2],
            d2: [s, 3.0 * t - 2.0, 1.0 - 3.0 * t, t],
            d3: [-1.0, 3.0, -3.0, 1.0],
        }
    }
}

/// Whole-sample symmetric index folding into `0..n`.
#[inline]
fn mirror(k: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let k = k.rem_euclid(period);
    if k < n as i64 {
        k as usize
    } else {
        (period - k) as usize
    }
}

/// In-place interpolation prefilter along one line (causal then
/// anti-causal recursion with exact mirror initialization).
fn prefilter(line: &mut [f64]) {
    let n = line.len();
    if n < 2 {
        return;
    }
    let z = POLE;
    let gain = (1.0 - z) * (1.0 - 1.0 / z);
    for v in line.iter_mut() {
        *v *= gain;
    }

    let z_pow_n1 = z.powi(n as i32 - 1);
    let mut sum = line[0] + z_pow_n1 * line[n - 1];
    let mut zk = z;
    let mut zk_mirror = z_pow_n1 * z_pow_n1 / z;
    for v in line.iter().take(n - 1).skip(1) {
        sum += (zk + zk_mirror) * v;
        zk *= z;
        zk_mirror /= z;
    }
    line[0] = sum / (1.0 - z_pow_n1 * z_pow_n1);
    for k in 1..n {
        line[k] += z * line[k - 1];
    }
    line[n - 1] = (z / (z * z - 1.0)) * (line[n - 1] + z * line[n - 2]);
    for k in (0..n - 1).rev() {
        line[k] = z * (line[k + 1] - line[k]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> Image2D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image2D::from_fn(w, h, |_, _| rng.random::<f64>())
    }

    #[test]
    fn interpolates_lattice_samples() {
        for &(w, h) in &[(1usize, 5usize), (2, 2), (3, 7), (17, 12)] {
            let img = random_image(w, h, (w * 31 + h) as u64);
            let s = BSplineSurface::new(&img);
            for y in 0..h {
                for x in 0..w {
                    let f = s.eval(x as f64, y as f64).f;
                    assert!((f - img.get(x, y)).abs() < 1e-12, "{w}x{h} at ({x},{y})");
                }
            }
        }
    }

    #[test]
    fn mirror_folds_indices() {
        assert_eq!(mirror(-1, 5), 1);
        assert_eq!(mirror(5, 5), 3);
        assert_eq!(mirror(-3, 2), 1);
        assert_eq!(mirror(7, 1), 0);
    }

    #[test]
    fn reproduces_polynomials_away_from_border() {
        let img = Image2D::from_fn(40, 40, |x, y| {
            let (x, y) = (x as f64 / 10.0, y as f64 / 10.0);
            x * x * x - 2.0 * x * y + y * y
        });
        let s = BSplineSurface::new(&img);
        let jet = s.eval(20.3, 19.6);
        let (x, y) = (2.03, 1.96);
        assert!((jet.f - (x * x * x - 2.0 * x * y + y * y)).abs() < 1e-8);
        assert!((jet.fu - (3.0 * x * x - 2.0 * y) / 10.0).abs() < 1e-8);
        assert!((jet.fuv - (-2.0 / 100.0)).abs() < 1e-8);
        assert!((jet.fuuu - 6.0 / 1000.0).abs() < 1e-8);
        assert!(jet.fvvv.abs() < 1e-8);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let img = random_image(12, 10, 9);
        let s = BSplineSurface::new(&img);
        let h = 1e-6;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let u = rng.random::<f64>() * 11.0;
            let v = rng.random::<f64>() * 9.0;
            let j = s.eval(u, v);
            let du = |a: LocalJet, b: LocalJet| ((a.f - b.f) / (2.0 * h), (a.fu - b.fu) / (2.0 * h), (a.fuu - b.fuu) / (2.0 * h), (a.fv - b.fv) / (2.0 * h), (a.fuv - b.fuv) / (2.0 * h), (a.fvv - b.fvv) / (2.0 * h));
            let (f_u, fu_u, fuu_u, fv_u, fuv_u, fvv_u) = du(s.eval(u + h, v), s.eval(u - h, v));
            assert!((f_u - j.fu).abs() < 1e-7);
            assert!((fu_u - j.fuu).abs() < 1e-6);
            assert!((fuu_u - j.fuuu).abs() < 1e-4);
            assert!((fv_u - j.fuv).abs() < 1e-6);
            assert!((fuv_u - j.fuuv).abs() < 1e-4);
            assert!((fvv_u - j.fuvv).abs() < 1e-4);
            let (f_v, _, _, fv_v, _, fvv_v) = du(s.eval(u, v + h), s.eval(u, v - h));
            assert!((f_v - j.fv).abs() < 1e-7);
            assert!((fv_v - j.fvv).abs() < 1e-6);
            assert!((fvv_v - j.fvvv).abs() < 1e-4);
        }
    }

    #[test]
    fn sample_respects_lattice_hull() {
        let s = BSplineSurface::new(&random_image(6, 5, 1));
        assert!(s.sample(0.0, 0.0).is_some());
        assert!(s.sample(5.0, 4.0).is_some());
        assert!(s.sample(-0.01, 2.0).is_none());
        assert!(s.sample(2.0, 4.01).is_none());
    }
}
