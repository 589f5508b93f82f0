//! Similarity measures between a (warped) floating image and the reference.
//!
//! All gradients here are finite differences restricted to the overlap mask:
//! central where both neighbours are in the mask, one-sided where only one
//! is, zero for pixels isolated along that axis.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::image::{Axis, Image2D};
use crate::transform::{warp, AffineParams, OverlapMask};

/// Default histogram resolution for MI and CR.
pub const DEFAULT_BINS: usize = 64;

#[inline]
fn masked_diff(img: &Image2D, mask: &OverlapMask, x: usize, y: usize, axis: Axis) -> f64 {
    let (xi, yi) = (x as i64, y as i64);
    let (prev, next) = match axis {
        Axis::X => (mask.get_signed(xi - 1, yi), mask.get_signed(xi + 1, yi)),
        Axis::Y => (mask.get_signed(xi, yi - 1), mask.get_signed(xi, yi + 1)),
    };
    let at = |dx: i64, dy: i64| img.get((xi + dx) as usize, (yi + dy) as usize);
    let (dx, dy) = match axis {
        Axis::X => (1, 0),
        Axis::Y => (0, 1),
    };
    match (prev, next) {
        (true, true) => 0.5 * (at(dx, dy) - at(-dx, -dy)),
        (false, true) => at(dx, dy) - at(0, 0),
        (true, false) => at(0, 0) - at(-dx, -dy),
        (false, false) => 0.0,
    }
}

/// Gradient image along `axis` restricted to `mask` (zero outside).
pub fn masked_gradient(img: &Image2D, mask: &OverlapMask, axis: Axis) -> Result<Image2D> {
    check_dims(img, mask)?;
    let mut out = Image2D::filled(img.width(), img.height(), 0.0);
    for y in 0..img.height() {
        for x in 0..img.width() {
            if mask.get(x, y) {
                out.set(x, y, masked_diff(img, mask, x, y, axis));
            }
        }
    }
    Ok(out)
}

fn check_dims(img: &Image2D, mask: &OverlapMask) -> Result<()> {
    if img.dims() != mask.dims() {
        return invalid(format!("image {:?} and mask {:?} differ in size", img.dims(), mask.dims()));
    }
    Ok(())
}

/// `sum over the mask of |d/dx f| + |d/dy f|`.
pub fn total_gradient(img: &Image2D, mask: &OverlapMask) -> Result<f64> {
    check_dims(img, mask)?;
    if mask.is_empty() {
        return Err(Error::DegenerateOverlap);
    }
    let mut total = 0.0;
    for y in 0..img.height() {
        for x in 0..img.width() {
            if mask.get(x, y) {
                total += masked_diff(img, mask, x, y, Axis::X).abs() + masked_diff(img, mask, x, y, Axis::Y).abs();
            }
        }
    }
    Ok(total)
}

/// Difference `g - f_R` over the overlap (zero elsewhere).
#[derive(Debug, Clone)]
pub struct DifferenceImage {
    pub d: Image2D,
    pub mask: OverlapMask,
}

impl DifferenceImage {
    pub fn new(g: &Image2D, f_r: &Image2D, mask: &OverlapMask) -> Result<Self> {
        check_dims(g, mask)?;
        let d = g.zip_map(f_r, |a, b| a - b)?;
        let data = d.data().iter().zip(mask.as_slice()).map(|(&v, &m)| if m { v } else { 0.0 }).collect();
        Ok(Self { d: Image2D::new(g.width(), g.height(), data)?, mask: mask.clone() })
    }

    pub fn total_gradient(&self) -> Result<f64> {
        total_gradient(&self.d, &self.mask)
    }
}

/// Numerator and denominator of NTG.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NtgTerms {
    /// Total gradient of the difference image.
    pub m: f64,
    /// Sum of the total gradients of both images.
    pub n: f64,
}

impl NtgTerms {
    pub fn value(&self) -> f64 {
        self.m / self.n
    }
}

pub fn ntg_terms(f: &Image2D, f_r: &Image2D, mask: &OverlapMask) -> Result<NtgTerms> {
    check_dims(f, mask)?;
    check_dims(f_r, mask)?;
    if mask.is_empty() {
        return Err(Error::DegenerateOverlap);
    }
    let (mut m, mut n) = (0.0, 0.0);
    for y in 0..f.height() {
        for x in 0..f.width() {
            if !mask.get(x, y) {
                continue;
            }
            for axis in [Axis::X, Axis::Y] {
                let gf = masked_diff(f, mask, x, y, axis);
                let gr = masked_diff(f_r, mask, x, y, axis);
                // the stencil is linear, so this is the masked gradient of f - f_R
                m += (gf - gr).abs();
                n += gf.abs() + gr.abs();
            }
        }
    }
    if n <= 0.0 {
        return Err(Error::DegenerateContent("both images are constant on the overlap".into()));
    }
    Ok(NtgTerms { m, n })
}

/// Normalized total gradient of the difference image, in `[0, 1]`.
pub fn ntg(f: &Image2D, f_r: &Image2D, mask: &OverlapMask) -> Result<f64> {
    ntg_terms(f, f_r, mask).map(|t| t.value())
}

/// NTG cost `J(p) = m / n` of the floating image warped by `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub j: f64,
    pub m: f64,
    pub n: f64,
    pub overlap: usize,
}

pub fn objective(f: &Image2D, f_r: &Image2D, p: &AffineParams) -> Result<ObjectiveValue> {
    let (g, mask) = warp(f, p, f_r.dims())?;
    let t = ntg_terms(&g, f_r, &mask)?;
    Ok(ObjectiveValue { j: t.value(), m: t.m, n: t.n, overlap: mask.count() })
}

/// `B x B` joint histogram with uniform bins over `[0, 1]`; values outside
/// the range fall into the end bins.
#[derive(Debug, Clone, PartialEq)]
pub struct JointHistogram {
    bins: usize,
    counts: Vec<u64>,
    total: u64,
}

#[inline]
fn bin_of(v: f64, bins: usize) -> usize {
    let b = (v * bins as f64).floor();
    if b.is_nan() || b < 0.0 {
        0
    } else {
        (b as usize).min(bins - 1)
    }
}

impl JointHistogram {
    pub fn new(a: &Image2D, b: &Image2D, mask: &OverlapMask, bins: usize) -> Result<Self> {
        check_dims(a, mask)?;
        check_dims(b, mask)?;
        if bins < 2 {
            return invalid(format!("histogram needs at least 2 bins, got {bins}"));
        }
        if mask.is_empty() {
            return Err(Error::DegenerateOverlap);
        }
        let mut counts = vec![0u64; bins * bins];
        for ((&va, &vb), &m) in a.data().iter().zip(b.data()).zip(mask.as_slice()) {
            if m {
                counts[bin_of(va, bins) * bins + bin_of(vb, bins)] += 1;
            }
        }
        Ok(Self { bins, counts, total: mask.count() as u64 })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Count for bin `i` of the first image and bin `j` of the second.
    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.bins + j]
    }

    pub fn marginal_a(&self) -> Vec<u64> {
        (0..self.bins).map(|i| (0..self.bins).map(|j| self.count(i, j)).sum()).collect()
    }

    pub fn marginal_b(&self) -> Vec<u64> {
        (0..self.bins).map(|j| (0..self.bins).map(|i| self.count(i, j)).sum()).collect()
    }

    pub fn entropy_a(&self) -> f64 {
        entropy(&self.marginal_a(), self.total)
    }

    pub fn entropy_b(&self) -> f64 {
        entropy(&self.marginal_b(), self.total)
    }

    pub fn joint_entropy(&self) -> f64 {
        entropy(&self.counts, self.total)
    }

    pub fn mutual_information(&self) -> f64 {
        self.entropy_a() + self.entropy_b() - self.joint_entropy()
    }
}

/// Shannon entropy (nats) of a count vector.
fn entropy(counts: &[u64], total: u64) -> f64 {
    let n = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `I(A, B) = H(A) + H(B) - H(A, B)` over the mask.
pub fn mutual_information(a: &Image2D, b: &Image2D, mask: &OverlapMask, bins: usize) -> Result<f64> {
    Ok(JointHistogram::new(a, b, mask, bins)?.mutual_information())
}

/// The three terms of the law of total variance of `A` given the binned `B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceDecomposition {
    /// `var(A)`
    pub total: f64,
    /// `E_B(var(A | B))`
    pub within: f64,
    /// `var_B(E(A | B))`
    pub between: f64,
}

pub fn variance_decomposition(a: &Image2D, b: &Image2D, mask: &OverlapMask, bins: usize) -> Result<VarianceDecomposition> {
    check_dims(a, mask)?;
    check_dims(b, mask)?;
    if bins < 2 {
        return invalid(format!("correlation ratio needs at least 2 bins, got {bins}"));
    }
    if mask.is_empty() {
        return Err(Error::DegenerateOverlap);
    }
    let samples: Vec<(f64, usize)> = a
        .data()
        .iter()
        .zip(b.data())
        .zip(mask.as_slice())
        .filter(|(_, &m)| m)
        .map(|((&va, &vb), _)| (va, bin_of(vb, bins)))
        .collect();
    let n = samples.len() as f64;
    let mean = samples.iter().map(|s| s.0).sum::<f64>() / n;

    let mut counts = vec![0usize; bins];
    let mut sums = vec![0.0; bins];
    for &(va, k) in &samples {
        counts[k] += 1;
        sums[k] += va;
    }
    let cond_mean: Vec<f64> =
        sums.iter().zip(&counts).map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect();

    let mut total = 0.0;
    let mut within = 0.0;
    for &(va, k) in &samples {
        total += (va - mean) * (va - mean);
        within += (va - cond_mean[k]) * (va - cond_mean[k]);
    }
    let between: f64 = counts
        .iter()
        .zip(&cond_mean)
        .map(|(&c, &mu)| c as f64 * (mu - mean) * (mu - mean))
        .sum();
    Ok(VarianceDecomposition { total: total / n, within: within / n, between: between / n })
}

/// `var_B(E(A | B)) / var(A)`, in `[0, 1]`.
pub fn correlation_ratio(a: &Image2D, b: &Image2D, mask: &OverlapMask, bins: usize) -> Result<f64> {
    let v = variance_decomposition(a, b, mask, bins)?;
    if v.total <= 0.0 {
        return Err(Error::DegenerateContent("first image has zero variance on the overlap".into()));
    }
    Ok((v.between / v.total).clamp(0.0, 1.0))
}

/// Mean squared intensity difference over the mask.
pub fn ssd(a: &Image2D, b: &Image2D, mask: &OverlapMask) -> Result<f64> {
    check_dims(a, mask)?;
    check_dims(b, mask)?;
    if mask.is_empty() {
        return Err(Error::DegenerateOverlap);
    }
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .zip(mask.as_slice())
        .filter(|(_, &m)| m)
        .map(|((&x, &y), _)| (x - y) * (x - y))
        .sum();
    Ok(sum / mask.count() as f64)
}

/// A registration cost; every variant is minimized at alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Ntg,
    /// Negative mutual information.
    Mi,
    /// Negative correlation ratio.
    Cr,
    Ssd,
}

impl Measure {
    pub fn name(&self) -> &'static str {
        match self {
            Measure::Ntg => "ntg",
            Measure::Mi => "mi",
            Measure::Cr => "cr",
            Measure::Ssd => "ssd",
        }
    }

    /// Cost of a warped floating image `g` against `f_R` on `mask`.
    pub fn cost(&self, g: &Image2D, f_r: &Image2D, mask: &OverlapMask, bins: usize) -> Result<f64> {
        match self {
            Measure::Ntg => ntg(g, f_r, mask),
            Measure::Mi => mutual_information(g, f_r, mask, bins).map(|v| -v),
            // CR of the reference given the floating image's bins
            Measure::Cr => correlation_ratio(f_r, g, mask, bins).map(|v| -v),
            Measure::Ssd => ssd(g, f_r, mask),
        }
    }

    /// Cost of `f` warped by `p`; degenerate configurations are `+inf`.
    pub fn cost_at(&self, f: &Image2D, f_r: &Image2D, p: &AffineParams, bins: usize) -> f64 {
        match warp(f, p, f_r.dims()) {
            Ok((g, mask)) => self.cost(&g, f_r, &mask, bins).unwrap_or(f64::INFINITY),
            Err(_) => f64::INFINITY,
        }
    }
}

impl std::str::FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ntg" => Ok(Measure::Ntg),
            "mi" => Ok(Measure::Mi),
            "cr" => Ok(Measure::Cr),
            "ssd" => Ok(Measure::Ssd),
            other => invalid(format!("unknown measure '{other}' (expected ntg, mi, cr or ssd)")),
        }
    }
}

impl std::fmt::Display for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Image2D {
        Image2D::from_fn(w, h, |_, _| rng.random::<f64>())
    }

    /// Straight double loop over a full mask with the border rule written out.
    fn brute_tg(img: &Image2D) -> f64 {
        let (w, h) = img.dims();
        let mut t = 0.0;
        for y in 0..h {
            for x in 0..w {
                let gx = if x == 0 {
                    img.get(1, y) - img.get(0, y)
                } else if x == w - 1 {
                    img.get(x, y) - img.get(x - 1, y)
                } else {
                    (img.get(x + 1, y) - img.get(x - 1, y)) / 2.0
                };
                let gy = if y == 0 {
                    img.get(x, 1) - img.get(x, 0)
                } else if y == h - 1 {
                    img.get(x, y) - img.get(x, y - 1)
                } else {
                    (img.get(x, y + 1) - img.get(x, y - 1)) / 2.0
                };
                t += gx.abs() + gy.abs();
            }
        }
        t
    }

    #[test]
    fn tg_constant_ramp_and_oracle() {
        let full = OverlapMask::full(6, 6);
        assert_eq!(total_gradient(&Image2D::filled(6, 6, 0.4), &full).unwrap(), 0.0);
        let ramp = Image2D::from_fn(6, 6, |x, _| x as f64);
        assert_eq!(total_gradient(&ramp, &full).unwrap(), 36.0);
        // interior mask: each masked row segment has >= 2 pixels, unit slope everywhere
        let mut m = vec![false; 36];
        for y in 1..5 {
            for x in 1..5 {
                m[y * 6 + x] = true;
            }
        }
        let interior = OverlapMask::from_vec(6, 6, m).unwrap();
        assert_eq!(total_gradient(&ramp, &interior).unwrap(), 16.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = random_image(6, 6, &mut rng);
        assert!((total_gradient(&img, &full).unwrap() - brute_tg(&img)).abs() < 1e-13);
    }

    #[test]
    fn tg_empty_mask_errors() {
        let m = OverlapMask::from_vec(2, 2, vec![false; 4]).unwrap();
        assert!(matches!(total_gradient(&Image2D::filled(2, 2, 0.0), &m), Err(Error::DegenerateOverlap)));
    }

    #[test]
    fn masked_gradient_handles_isolated_pixels() {
        let img = Image2D::from_fn(5, 1, |x, _| (x * x) as f64);
        let m = OverlapMask::from_vec(5, 1, vec![true, false, true, true, false]).unwrap();
        let g = masked_gradient(&img, &m, Axis::X).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 5.0, 5.0, 0.0]);
    }

    #[test]
    fn ntg_self_and_complement() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_image(8, 8, &mut rng);
        let full = OverlapMask::full(8, 8);
        assert_eq!(ntg(&f, &f, &full).unwrap(), 0.0);
        let inv = f.map(|v| 1.0 - v);
        assert!((ntg(&inv, &f, &full).unwrap() - 1.0).abs() < 1e-14);
        let c = Image2D::filled(8, 8, 0.3);
        assert!(matches!(ntg(&c, &c, &full), Err(Error::DegenerateContent(_))));
    }

    #[test]
    fn ntg_symmetric_and_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random_image(9, 7, &mut rng);
            let b = random_image(9, 7, &mut rng);
            let m = OverlapMask::full(9, 7);
            let ab = ntg_terms(&a, &b, &m).unwrap();
            let ba = ntg_terms(&b, &a, &m).unwrap();
            assert!((ab.value() - ba.value()).abs() < 1e-14);
            let alpha = 0.37;
            let scaled = ntg_terms(&a.map(|v| alpha * v), &b.map(|v| alpha * v), &m).unwrap();
            assert!((scaled.m - alpha * ab.m).abs() < 1e-12 * ab.m);
            assert!((scaled.n - alpha * ab.n).abs() < 1e-12 * ab.n);
            assert!((scaled.value() - ab.value()).abs() < 1e-12);
        }
    }

    #[test]
    fn objective_examples() {
        let f_r = Image2D::from_fn(32, 32, |x, y| (0.2 * x as f64).sin() * (0.3 * y as f64).cos() * 0.5 + 0.5);
        let j0 = objective(&f_r, &f_r, &AffineParams::IDENTITY).unwrap();
        assert_eq!(j0.j, 0.0);
        assert_eq!(j0.overlap, 32 * 32);
        // floating content shifted so that g(x) = f(x + t) reproduces f_R
        let t = (3.0, -2.0);
        let f = Image2D::from_fn(32, 32, |x, y| {
            let (x, y) = (x as f64 - t.0, y as f64 - t.1);
            (0.2 * x).sin() * (0.3 * y).cos() * 0.5 + 0.5
        });
        let at_truth = objective(&f, &f_r, &AffineParams::translation(t.0, t.1)).unwrap();
        let at_identity = objective(&f, &f_r, &AffineParams::IDENTITY).unwrap();
        assert!(at_truth.j < at_identity.j);
        assert!(at_truth.j < 1e-12);
        assert!((at_truth.j - at_truth.m / at_truth.n).abs() < 1e-15);
        assert!(matches!(objective(&f, &f_r, &AffineParams::translation(40.0, 0.0)), Err(Error::DegenerateOverlap)));
    }

    #[test]
    fn mi_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_image(64, 64, &mut rng);
        let full = OverlapMask::full(64, 64);
        let h = JointHistogram::new(&a, &a, &full, DEFAULT_BINS).unwrap();
        assert!((h.mutual_information() - h.entropy_a()).abs() < 1e-10);
        let inv = a.map(|v| 1.0 - v);
        let hi = JointHistogram::new(&a, &inv, &full, DEFAULT_BINS).unwrap();
        assert!((hi.mutual_information() - hi.entropy_a()).abs() < 1e-10);
        let mi_c = mutual_information(&a, &inv, &full, DEFAULT_BINS).unwrap();
        assert!((mi_c - h.entropy_a()).abs() < 1e-10);
        assert_eq!(h.total(), 4096);
        assert_eq!(h.marginal_a().iter().sum::<u64>(), 4096);
        assert_eq!(h.marginal_a(), h.marginal_b());
    }

    #[test]
    fn mi_of_independent_noise_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (w, h) = (256, 256);
        let a = random_image(w, h, &mut rng);
        let b = random_image(w, h, &mut rng);
        let bins = 16;
        let mi = mutual_information(&a, &b, &OverlapMask::full(w, h), bins).unwrap();
        // plug-in estimator bias for independent variables is about (B-1)^2 / (2N)
        let bias = ((bins - 1) * (bins - 1)) as f64 / (2.0 * (w * h) as f64);
        assert!(mi >= 0.0);
        assert!(mi < 3.0 * bias, "mi = {mi}, bias = {bias}");
    }

    #[test]
    fn cr_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_image(128, 128, &mut rng);
        let full = OverlapMask::full(128, 128);
        let cr = correlation_ratio(&a, &a, &full, DEFAULT_BINS).unwrap();
        // within-bin spread is at most (bin width)^2 / 4
        let bound = (1.0 / DEFAULT_BINS as f64).powi(2) / 4.0 / variance_decomposition(&a, &a, &full, DEFAULT_BINS).unwrap().total;
        assert!(cr >= 1.0 - bound && cr <= 1.0);
        let b = random_image(128, 128, &mut rng);
        let cr_ind = correlation_ratio(&a, &b, &full, DEFAULT_BINS).unwrap();
        // expected between-bin share for independent data is about (B-1)/N
        assert!(cr_ind < 5.0 * (DEFAULT_BINS - 1) as f64 / (128.0 * 128.0), "cr = {cr_ind}");
        let v = variance_decomposition(&a, &b, &full, DEFAULT_BINS).unwrap();
        assert!((v.within + v.between - v.total).abs() < 1e-10);
        let c = Image2D::filled(128, 128, 0.5);
        assert!(matches!(correlation_ratio(&c, &a, &full, DEFAULT_BINS), Err(Error::DegenerateContent(_))));
        assert!(correlation_ratio(&a, &b, &full, 1).is_err());
    }

    #[test]
    fn measure_costs_are_minimized_at_identity_for_self_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_image(16, 16, &mut rng);
        let b = random_image(16, 16, &mut rng);
        let m = OverlapMask::full(16, 16);
        for measure in [Measure::Ntg, Measure::Mi, Measure::Cr, Measure::Ssd] {
            let same = measure.cost(&a, &a, &m, 16).unwrap();
            let diff = measure.cost(&b, &a, &m, 16).unwrap();
            assert!(same < diff, "{measure}");
            assert_eq!(measure.name().parse::<Measure>().unwrap(), measure);
        }
        assert!("rc".parse::<Measure>().is_err());
        assert_eq!(Measure::Ntg.cost_at(&a, &a, &AffineParams::translation(99.0, 0.0), 16), f64::INFINITY);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #[test]
            fn ntg_lies_in_unit_interval(seed in 0u64..100_000, w in 2usize..10, h in 2usize..10, sparse in 0.0f64..0.7) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = random_image(w, h, &mut rng);
                let b = random_image(w, h, &mut rng);
                let mask: Vec<bool> = (0..w * h).map(|_| rng.random::<f64>() >= sparse).collect();
                let mask = OverlapMask::from_vec(w, h, mask).unwrap();
                if let Ok(v) = ntg(&a, &b, &mask) {
                    prop_assert!((0.0..=1.0 + 1e-15).contains(&v));
                }
            }
        }
    }
}
