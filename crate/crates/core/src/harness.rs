//! Synthetic test imagery and evaluation protocols: gradient-sparsity
//! statistics, cost-map sweeps and control-point displacement error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::image::{BSplineSurface, ChannelStack, Image2D};
use crate::measure::{masked_gradient, Measure};
use crate::image::Axis;
use crate::transform::{warp, AffineParams, OverlapMask, ParamBounds};

/// Separable Gaussian blur with mirrored borders.
fn gaussian_blur(img: &Image2D, sigma: f64) -> Image2D {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel: Vec<f64> = (-radius..=radius).map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp()).collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    let (w, h) = img.dims();
    let fold = |k: i64, n: usize| -> usize {
        let n = n as i64;
        let mut k = k;
        while k < 0 || k >= n {
            k = if k < 0 { -k - 1 } else { 2 * n - k - 1 };
        }
        k as usize
    };
    let pass_x = Image2D::from_fn(w, h, |x, y| {
        kernel.iter().enumerate().map(|(i, kv)| kv * img.get(fold(x as i64 + i as i64 - radius, w), y)).sum()
    });
    Image2D::from_fn(w, h, |x, y| {
        kernel.iter().enumerate().map(|(i, kv)| kv * pass_x.get(x, fold(y as i64 + i as i64 - radius, h))).sum()
    })
}

fn rescale(img: &Image2D, lo: f64, hi: f64) -> Image2D {
    let (min, max) = img.min_max();
    let span = (max - min).max(1e-12);
    img.map(|v| lo + (hi - lo) * (v - min) / span)
}

/// Multi-octave filtered noise with a few soft-edged blobs and bars,
/// rescaled to `[0.05, 0.95]`.
pub fn natural_texture(width: usize, height: usize, seed: u64) -> Image2D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Image2D::filled(width, height, 0.0);
    for octave in 0..5 {
        let cell = (2usize << octave) as f64;
        let gw = (width as f64 / cell).ceil() as usize + 2;
        let gh = (height as f64 / cell).ceil() as usize + 2;
        let grid = Image2D::from_fn(gw, gh, |_, _| rng.random_range(-1.0..1.0));
        let surf = BSplineSurface::new(&grid);
        let amp = cell.powf(0.8);
        let layer = Image2D::from_fn(width, height, |x, y| surf.eval(x as f64 / cell, y as f64 / cell).f);
        acc = acc.zip_map(&layer, |a, b| a + amp * b).expect("same dims");
    }
    let (lo, hi) = acc.min_max();
    let span = hi - lo;
    let side = width.min(height) as f64;
    for _ in 0..14 {
        let (cx, cy) = (rng.random_range(0.0..width as f64), rng.random_range(0.0..height as f64));
        let r = rng.random_range(0.03..0.12) * side;
        let level = rng.random_range(-0.6..0.6) * span;
        let bar = rng.random_bool(0.3);
        let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let (ca, sa) = (angle.cos(), angle.sin());
        acc = Image2D::from_fn(width, height, |x, y| {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let inside = if bar {
                let (a, b) = (ca * dx + sa * dy, -sa * dx + ca * dy);
                (a.abs() - 2.0 * r).max(b.abs() - 0.3 * r)
            } else {
                dx.hypot(dy) - r
            };
            // logistic edge about one pixel wide
            acc.get(x, y) + level / (1.0 + (inside / 0.8).exp())
        });
    }
    rescale(&gaussian_blur(&acc, 1.0), 0.05, 0.95)
}

/// Disk where a channel's contrast collapses towards a flat level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Erasure {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

/// Per-channel appearance: source mix, gamma, optional inversion and
/// erased regions, all in scene coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelTone {
    pub mix: f64,
    pub gamma: f64,
    pub invert: bool,
    pub erasures: Vec<Erasure>,
}

impl ChannelTone {
    pub const PLAIN: Self = Self { mix: 0.0, gamma: 1.0, invert: false, erasures: Vec::new() };

    fn apply(&self, a: f64, b: f64, sx: f64, sy: f64) -> f64 {
        let base = ((1.0 - self.mix) * a + self.mix * b).clamp(0.0, 1.0);
        let mut v = base.powf(self.gamma);
        for e in &self.erasures {
            let d = (sx - e.cx).hypot(sy - e.cy) / e.radius;
            let keep = 1.0 - 0.9 * (-d.powi(4)).exp();
            v = 0.5 + (v - 0.5) * keep;
        }
        if self.invert {
            1.0 - v
        } else {
            v
        }
    }
}

/// Continuous multi-channel scene. Channel images are resampled from two
/// smooth texture canvases, so any affine view of the scene can be rendered
/// without border artifacts.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    width: usize,
    height: usize,
    margin: f64,
    canvas_a: BSplineSurface,
    canvas_b: BSplineSurface,
    tones: Vec<ChannelTone>,
}

impl SyntheticScene {
    /// Scene whose channels vary smoothly in mix and gamma; every fourth
    /// channel also has a contrast-erased patch.
    pub fn new(width: usize, height: usize, channels: usize, seed: u64) -> Result<Self> {
        if channels == 0 {
            return invalid("scene needs at least one channel");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f5c_e9e5);
        let side = width.min(height) as f64;
        let tones = (0..channels)
            .map(|c| {
                let t = if channels > 1 { c as f64 / (channels - 1) as f64 } else { 0.0 };
                let erasures = if c % 4 == 3 {
                    vec![Erasure {
                        cx: rng.random_range(0.2..0.8) * width as f64,
                        cy: rng.random_range(0.2..0.8) * height as f64,
                        radius: rng.random_range(0.06..0.12) * side,
                    }]
                } else {
                    Vec::new()
                };
                ChannelTone { mix: 0.4 * t, gamma: rng.random_range(0.8..1.25), invert: false, erasures }
            })
            .collect();
        Self::with_tones(width, height, tones, seed)
    }

    pub fn with_tones(width: usize, height: usize, tones: Vec<ChannelTone>, seed: u64) -> Result<Self> {
        if width < 16 || height < 16 {
            return invalid(format!("scene must be at least 16x16, got {width}x{height}"));
        }
        if tones.is_empty() {
            return invalid("scene needs at least one channel");
        }
        let margin = (24 + width.max(height) / 8) as f64;
        let (cw, ch) = (width + 2 * margin as usize, height + 2 * margin as usize);
        let a = natural_texture(cw, ch, seed);
        let b = natural_texture(cw, ch, seed.wrapping_add(0x9e37_79b9));
        Ok(Self {
            width,
            height,
            margin,
            canvas_a: BSplineSurface::new(&a),
            canvas_b: BSplineSurface::new(&b),
            tones,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn channels(&self) -> usize {
        self.tones.len()
    }

    pub fn tones(&self) -> &[ChannelTone] {
        &self.tones
    }

    /// View of `channel` such that registering it against an identity view
    /// recovers `truth`.
    pub fn render(&self, channel: usize, truth: &AffineParams) -> Result<Image2D> {
        let Some(tone) = self.tones.get(channel) else {
            return invalid(format!("channel {channel} out of range"));
        };
        let q = truth.inverse()?;
        let m = self.margin;
        Ok(Image2D::from_fn(self.width, self.height, |x, y| {
            let (sx, sy) = q.map_point(x as f64, y as f64);
            let a = self.canvas_a.eval(sx + m, sy + m).f;
            let b = self.canvas_b.eval(sx + m, sy + m).f;
            tone.apply(a, b, sx, sy)
        }))
    }

    /// All channels in register, reference at the middle channel.
    pub fn aligned_stack(&self) -> Result<ChannelStack> {
        let ch = (0..self.channels()).map(|c| self.render(c, &AffineParams::IDENTITY)).collect::<Result<Vec<_>>>()?;
        ChannelStack::new(ch, ChannelStack::middle_index(self.channels()))
    }

    /// Stack with a random truth per non-reference channel drawn from
    /// `bounds`; the reference channel's truth is the identity.
    pub fn misaligned_stack(&self, bounds: &ParamBounds, seed: u64) -> Result<(ChannelStack, Vec<AffineParams>)> {
        bounds.validate()?;
        let r = ChannelStack::middle_index(self.channels());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truths: Vec<AffineParams> =
            (0..self.channels()).map(|c| if c == r { AffineParams::IDENTITY } else { bounds.sample(&mut rng) }).collect();
        let ch = truths.iter().enumerate().map(|(c, t)| self.render(c, t)).collect::<Result<Vec<_>>>()?;
        Ok((ChannelStack::new(ch, r)?, truths))
    }
}

/// Appearance change between the reference and floating images of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairOptions {
    pub noise_sigma: f64,
    pub invert: bool,
    pub erasures: usize,
    pub gamma: f64,
}

impl Default for PairOptions {
    fn default() -> Self {
        Self { noise_sigma: 0.0, invert: false, erasures: 0, gamma: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPair {
    pub reference: Image2D,
    pub floating: Image2D,
    /// Transform that registration of `floating` against `reference` should recover.
    pub truth: AffineParams,
}

pub fn synth_pair(width: usize, height: usize, truth: &AffineParams, opts: &PairOptions, seed: u64) -> Result<SyntheticPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa1b2_c3d4);
    let side = width.min(height) as f64;
    let erasures = (0..opts.erasures)
        .map(|_| Erasure {
            cx: rng.random_range(0.15..0.85) * width as f64,
            cy: rng.random_range(0.15..0.85) * height as f64,
            radius: rng.random_range(0.08..0.15) * side,
        })
        .collect();
    let floating_tone = ChannelTone { mix: 0.0, gamma: opts.gamma, invert: opts.invert, erasures };
    let scene = SyntheticScene::with_tones(width, height, vec![ChannelTone::PLAIN, floating_tone], seed)?;
    let reference = scene.render(0, &AffineParams::IDENTITY)?;
    let floating = add_noise(&scene.render(1, truth)?, opts.noise_sigma, seed.wrapping_add(1))?;
    Ok(SyntheticPair { reference, floating, truth: *truth })
}

fn add_noise(img: &Image2D, sigma: f64, seed: u64) -> Result<Image2D> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return invalid(format!("noise sigma must be non-negative, got {sigma}"));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = img.clone();
    for v in out.data_mut() {
        *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
    }
    Ok(out)
}

/// `warp(f_r, p*)` plus seeded Gaussian noise, clipped to `[0, 1]`.
/// Pixels outside the overlap stay 0. Registering the result against `f_r`
/// recovers `p_star.inverse()`.
pub fn synth_misalign(f_r: &Image2D, p_star: &AffineParams, noise_sigma: f64, seed: u64) -> Result<Image2D> {
    if !p_star.is_invertible() {
        return invalid("misalignment transform is not invertible");
    }
    let (g, mask) = warp(f_r, p_star, f_r.dims())?;
    let noisy = add_noise(&g, noise_sigma, seed)?;
    let (w, _) = g.dims();
    Ok(Image2D::from_fn(g.width(), g.height(), |x, y| if mask.as_slice()[y * w + x] { noisy.get(x, y) } else { 0.0 }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostAxis {
    /// Translation along x, pixels.
    Tx,
    /// Translation along y, pixels.
    Ty,
    /// Rotation about the image center, degrees.
    Rot,
    /// Isotropic scale about the image center.
    Scale,
}

impl std::str::FromStr for CostAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tx" => Ok(Self::Tx),
            "ty" => Ok(Self::Ty),
            "rot" => Ok(Self::Rot),
            "scale" => Ok(Self::Scale),
            other => invalid(format!("unknown cost-map axis '{other}' (expected tx, ty, rot or scale)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisRange {
    pub axis: CostAxis,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl AxisRange {
    pub fn new(axis: CostAxis, lo: f64, hi: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(lo.is_finite() && hi.is_finite()) || hi < lo || (steps == 1 && lo != hi) {
            return invalid(format!("bad range {lo}..{hi} with {steps} steps"));
        }
        if axis == CostAxis::Scale && lo <= 0.0 {
            return invalid("scale range must be positive");
        }
        Ok(Self { axis, lo, hi, steps })
    }

    pub fn value(&self, i: usize) -> f64 {
        if self.steps == 1 {
            self.lo
        } else {
            self.lo + (self.hi - self.lo) * i as f64 / (self.steps - 1) as f64
        }
    }

    /// Fractional grid index of `v`.
    pub fn index_of(&self, v: f64) -> f64 {
        if self.steps == 1 {
            0.0
        } else {
            (v - self.lo) / (self.hi - self.lo) * (self.steps - 1) as f64
        }
    }
}

/// Translation, rotation (degrees) and scale of a similarity about the image center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityParams {
    pub tx: f64,
    pub ty: f64,
    pub rot: f64,
    pub scale: f64,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        Self { tx: 0.0, ty: 0.0, rot: 0.0, scale: 1.0 }
    }
}

impl SimilarityParams {
    pub fn get(&self, axis: CostAxis) -> f64 {
        match axis {
            CostAxis::Tx => self.tx,
            CostAxis::Ty => self.ty,
            CostAxis::Rot => self.rot,
            CostAxis::Scale => self.scale,
        }
    }

    pub fn with(mut self, axis: CostAxis, v: f64) -> Self {
        match axis {
            CostAxis::Tx => self.tx = v,
            CostAxis::Ty => self.ty = v,
            CostAxis::Rot => self.rot = v,
            CostAxis::Scale => self.scale = v,
        }
        self
    }

    pub fn to_affine(&self, center: (f64, f64)) -> AffineParams {
        AffineParams::similarity(self.tx, self.ty, self.rot, self.scale, center)
    }
}

/// Cost over a 2-D grid; `values[j * axis1.steps + i]` holds cell `(i, j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostMap {
    pub measure: Measure,
    pub axis1: AxisRange,
    pub axis2: AxisRange,
    pub values: Vec<f64>,
    /// Ground truth in fractional grid coordinates.
    pub truth: (f64, f64),
}

impl CostMap {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.axis1.steps + i]
    }

    /// Grid cell of the smallest cost; the first one wins ties.
    pub fn argmin(&self) -> (usize, usize) {
        let mut best = (0, f64::INFINITY);
        for (k, &v) in self.values.iter().enumerate() {
            if v < best.1 {
                best = (k, v);
            }
        }
        (best.0 % self.axis1.steps, best.0 / self.axis1.steps)
    }

    /// Axis values at the argmin cell.
    pub fn argmin_values(&self) -> (f64, f64) {
        let (i, j) = self.argmin();
        (self.axis1.value(i), self.axis2.value(j))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Costs of `f` against `f_r` with two similarity components swept and the
/// others held at `truth`.
pub fn cost_map(
    f: &Image2D,
    f_r: &Image2D,
    measure: Measure,
    axis1: AxisRange,
    axis2: AxisRange,
    truth: SimilarityParams,
    bins: usize,
) -> Result<CostMap> {
    if axis1.axis == axis2.axis {
        return invalid("cost-map axes must differ");
    }
    let (w, h) = f_r.dims();
    let center = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let mut values = Vec::with_capacity(axis1.steps * axis2.steps);
    for j in 0..axis2.steps {
        for i in 0..axis1.steps {
            let s = truth.with(axis1.axis, axis1.value(i)).with(axis2.axis, axis2.value(j));
            values.push(measure.cost_at(f, f_r, &s.to_affine(center), bins));
        }
    }
    let t = (axis1.index_of(truth.get(axis1.axis)), axis2.index_of(truth.get(axis2.axis)));
    Ok(CostMap { measure, axis1, axis2, values, truth: t })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityConfig {
    pub trials: usize,
    /// Misalignments are drawn from this box, translations in pixels.
    pub bounds: ParamBounds,
    pub seed: u64,
    /// Redraw misalignments whose mean control-point displacement is below this.
    pub min_misalignment: Option<f64>,
}

impl Default for SparsityConfig {
    fn default() -> Self {
        Self { trials: 200, bounds: ParamBounds::DEFAULT, seed: 0, min_misalignment: None }
    }
}

pub const HISTOGRAM_BIN_WIDTH: f64 = 0.01;
/// `|d_x| + |d_y|` never exceeds 2 for images in `[0, 1]`.
pub const HISTOGRAM_BINS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    /// Distribution of `|d_x| + |d_y|` of the aligned difference images.
    pub histogram_aligned: Vec<f64>,
    pub histogram_misaligned: Vec<f64>,
    pub bin_width: f64,
    pub trials: usize,
    /// Share of trials whose aligned difference has no more total gradient
    /// than the misaligned one.
    pub fraction_satisfying: f64,
    pub mean_tg_aligned: f64,
    pub mean_tg_misaligned: f64,
}

fn accumulate_histogram(hist: &mut [f64], d: &Image2D, mask: &OverlapMask) -> Result<f64> {
    let gx = masked_gradient(d, mask, Axis::X)?;
    let gy = masked_gradient(d, mask, Axis::Y)?;
    let mut tg = 0.0;
    for (k, &inside) in mask.as_slice().iter().enumerate() {
        if inside {
            let g = gx.data()[k].abs() + gy.data()[k].abs();
            tg += g;
            let bin = ((g / HISTOGRAM_BIN_WIDTH) as usize).min(hist.len() - 1);
            hist[bin] += 1.0;
        }
    }
    Ok(tg)
}

fn normalize_histogram(hist: &mut [f64]) {
    let total: f64 = hist.iter().sum();
    if total > 0.0 {
        hist.iter_mut().for_each(|v| *v /= total);
    }
}

/// Compares the total gradient of aligned and randomly misaligned difference
/// images over an aligned stack. Both differences use the overlap of the
/// misaligned warp.
pub fn sparsity_study(stack: &ChannelStack, cfg: &SparsityConfig) -> Result<SparsityReport> {
    if stack.len() < 2 {
        return invalid("sparsity study needs at least two channels");
    }
    if cfg.trials == 0 {
        return invalid("sparsity study needs at least one trial");
    }
    cfg.bounds.validate()?;
    let f_r = stack.reference();
    let (lo, hi) = f_r.min_max();
    if hi - lo <= 0.0 {
        return Err(Error::DegenerateContent("reference channel is constant".into()));
    }
    let (w, h) = f_r.dims();
    let points = default_control_points(w, h);
    let r = stack.reference_index();
    let others: Vec<usize> = (0..stack.len()).filter(|&c| c != r).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut hist_a = vec![0.0; HISTOGRAM_BINS];
    let mut hist_m = vec![0.0; HISTOGRAM_BINS];
    let (mut satisfied, mut sum_a, mut sum_m) = (0usize, 0.0, 0.0);

    for _ in 0..cfg.trials {
        let f = &stack.channels()[others[rng.random_range(0..others.len())]];
        let p = draw_misalignment(&mut rng, &cfg.bounds, cfg.min_misalignment, &points)?;
        let (g, mask) = warp(f, &p, (w, h))?;
        let aligned = f.zip_map(f_r, |a, b| a - b)?;
        let misaligned = g.zip_map(f_r, |a, b| a - b)?;
        let tg_a = accumulate_histogram(&mut hist_a, &aligned, &mask)?;
        let tg_m = accumulate_histogram(&mut hist_m, &misaligned, &mask)?;
        satisfied += usize::from(tg_a <= tg_m);
        sum_a += tg_a;
        sum_m += tg_m;
    }
    normalize_histogram(&mut hist_a);
    normalize_histogram(&mut hist_m);
    let n = cfg.trials as f64;
    Ok(SparsityReport {
        histogram_aligned: hist_a,
        histogram_misaligned: hist_m,
        bin_width: HISTOGRAM_BIN_WIDTH,
        trials: cfg.trials,
        fraction_satisfying: satisfied as f64 / n,
        mean_tg_aligned: sum_a / n,
        mean_tg_misaligned: sum_m / n,
    })
}

fn draw_misalignment(
    rng: &mut ChaCha8Rng,
    bounds: &ParamBounds,
    min: Option<f64>,
    points: &[(f64, f64)],
) -> Result<AffineParams> {
    let Some(min) = min else {
        return Ok(bounds.sample(rng));
    };
    for _ in 0..10_000 {
        let p = bounds.sample(rng);
        if mean_displacement(&AffineParams::IDENTITY, &p, points)? >= min {
            return Ok(p);
        }
    }
    invalid(format!("bounds cannot produce a misalignment of at least {min} px"))
}

/// 7 x 7 grid of interior points at eighths of the image extent.
pub fn default_control_points(width: usize, height: usize) -> Vec<(f64, f64)> {
    let mut pts = Vec::with_capacity(49);
    for j in 1..=7 {
        for i in 1..=7 {
            pts.push(((width - 1) as f64 * i as f64 / 8.0, (height - 1) as f64 * j as f64 / 8.0));
        }
    }
    pts
}

fn displacements<'a>(
    truth: &'a AffineParams,
    estimate: &'a AffineParams,
    points: &'a [(f64, f64)],
) -> Result<impl Iterator<Item = f64> + 'a> {
    if points.len() < 4 {
        return invalid(format!("need at least 4 control points, got {}", points.len()));
    }
    Ok(points.iter().map(move |&(x, y)| {
        let (a, b) = truth.map_point(x, y);
        let (c, d) = estimate.map_point(x, y);
        (a - c).hypot(b - d)
    }))
}

/// Root mean square of the per-point displacement between two transforms.
pub fn rmse_eval(truth: &AffineParams, estimate: &AffineParams, points: &[(f64, f64)]) -> Result<f64> {
    let n = points.len() as f64;
    Ok((displacements(truth, estimate, points)?.map(|d| d * d).sum::<f64>() / n).sqrt())
}

pub fn mean_displacement(truth: &AffineParams, estimate: &AffineParams, points: &[(f64, f64)]) -> Result<f64> {
    let n = points.len() as f64;
    Ok(displacements(truth, estimate, points)?.sum::<f64>() / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlPair {
    pub reference: (f64, f64),
    pub registered: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseReport {
    pub per_channel_rmse: Vec<f64>,
    pub control_points: Vec<Vec<ControlPair>>,
}

pub fn rmse_report(truths: &[AffineParams], estimates: &[AffineParams], points: &[(f64, f64)]) -> Result<RmseReport> {
    if truths.len() != estimates.len() {
        return invalid(format!("{} truths but {} estimates", truths.len(), estimates.len()));
    }
    let mut per_channel_rmse = Vec::with_capacity(truths.len());
    let mut control_points = Vec::with_capacity(truths.len());
    for (t, e) in truths.iter().zip(estimates) {
        per_channel_rmse.push(rmse_eval(t, e, points)?);
        control_points.push(
            points
                .iter()
                .map(|&(x, y)| ControlPair { reference: t.map_point(x, y), registered: e.map_point(x, y) })
                .collect(),
        );
    }
    Ok(RmseReport { per_channel_rmse, control_points })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn texture_is_deterministic_and_in_range() {
        let a = natural_texture(48, 40, 5);
        assert_eq!(a, natural_texture(48, 40, 5));
        assert_ne!(a, natural_texture(48, 40, 6));
        let (lo, hi) = a.min_max();
        assert!((lo - 0.05).abs() < 1e-12 && (hi - 0.95).abs() < 1e-12);
    }

    #[test]
    fn blur_preserves_constants() {
        let img = Image2D::filled(9, 7, 0.3);
        let b = gaussian_blur(&img, 1.5);
        assert!(b.data().iter().all(|v| (v - 0.3).abs() < 1e-14));
    }

    #[test]
    fn rendered_view_registers_back_to_identity_view() {
        let scene = SyntheticScene::new(40, 40, 3, 2).unwrap();
        let truth = AffineParams::new([1.02, 0.01, 1.5, -0.01, 0.99, -2.0]);
        let r = scene.render(0, &AffineParams::IDENTITY).unwrap();
        let f = scene.render(0, &truth).unwrap();
        // f(truth x) = r(x): compare on pixels whose image stays inside f
        let s = BSplineSurface::new(&f);
        let mut worst: f64 = 0.0;
        for y in 5..35 {
            for x in 5..35 {
                let (u, v) = truth.map_point(x as f64, y as f64);
                worst = worst.max((s.eval(u, v).f - r.get(x, y)).abs());
            }
        }
        assert!(worst < 0.02, "{worst}");
        assert!(scene.render(3, &truth).is_err());
    }

    #[test]
    fn misalign_identity_without_noise_is_identity() {
        let r = natural_texture(24, 24, 1);
        assert_eq!(synth_misalign(&r, &AffineParams::IDENTITY, 0.0, 3).unwrap(), r);
    }

    #[test]
    fn misalign_noise_is_bounded_and_seeded() {
        let r = natural_texture(32, 32, 2);
        let p = AffineParams::translation(1.3, -0.6);
        let a = synth_misalign(&r, &p, 0.01, 9).unwrap();
        assert_eq!(a, synth_misalign(&r, &p, 0.01, 9).unwrap());
        let (clean, mask) = warp(&r, &p, r.dims()).unwrap();
        for (k, &inside) in mask.as_slice().iter().enumerate() {
            if inside {
                assert!((a.data()[k] - clean.data()[k]).abs() <= 0.05);
            } else {
                assert_eq!(a.data()[k], 0.0);
            }
        }
        assert!(synth_misalign(&r, &AffineParams::new([1.0, 1.0, 0.0, 1.0, 1.0, 0.0]), 0.0, 0).is_err());
    }

    #[test]
    fn cost_map_of_identical_images_is_minimal_at_center() {
        let r = natural_texture(32, 32, 4);
        let tx = AxisRange::new(CostAxis::Tx, -3.0, 3.0, 7).unwrap();
        let ty = AxisRange::new(CostAxis::Ty, -3.0, 3.0, 7).unwrap();
        let map = cost_map(&r, &r, Measure::Ntg, tx, ty, SimilarityParams::default(), 32).unwrap();
        assert_eq!(map.argmin(), (3, 3));
        assert_eq!(map.truth, (3.0, 3.0));
        assert_eq!(map.get(3, 3), 0.0);
        assert!(cost_map(&r, &r, Measure::Ntg, tx, tx, SimilarityParams::default(), 32).is_err());
    }

    #[test]
    fn cost_map_degenerate_cells_are_infinite() {
        let r = natural_texture(20, 20, 4);
        let tx = AxisRange::new(CostAxis::Tx, 0.0, 40.0, 3).unwrap();
        let rot = AxisRange::new(CostAxis::Rot, 0.0, 0.0, 1).unwrap();
        let map = cost_map(&r, &r, Measure::Ssd, tx, rot, SimilarityParams::default(), 32).unwrap();
        assert!(map.values[0].is_finite());
        assert_eq!(map.values[2], f64::INFINITY);
    }

    #[test]
    fn axis_range_validation() {
        assert!(AxisRange::new(CostAxis::Tx, 1.0, 0.0, 3).is_err());
        assert!(AxisRange::new(CostAxis::Tx, 0.0, 1.0, 0).is_err());
        assert!(AxisRange::new(CostAxis::Scale, 0.0, 1.2, 5).is_err());
        let a = AxisRange::new(CostAxis::Scale, 0.8, 1.2, 5).unwrap();
        assert!((a.value(4) - 1.2).abs() < 1e-15);
        assert!((a.index_of(1.0) - 2.0).abs() < 1e-12);
        assert_eq!("ROT".parse::<CostAxis>().unwrap(), CostAxis::Rot);
    }

    #[test]
    fn identical_channels_always_satisfy() {
        let r = natural_texture(32, 32, 8);
        let stack = ChannelStack::new(vec![r.clone(), r.clone(), r], 1).unwrap();
        let rep = sparsity_study(&stack, &SparsityConfig { trials: 10, seed: 1, ..SparsityConfig::default() }).unwrap();
        assert_eq!(rep.fraction_satisfying, 1.0);
        assert_eq!(rep.mean_tg_aligned, 0.0);
        assert_eq!(rep.histogram_aligned[0], 1.0);
        assert!((rep.histogram_misaligned.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_stack_is_degenerate() {
        let c = Image2D::filled(20, 20, 0.2);
        let stack = ChannelStack::new(vec![c.clone(), c], 0).unwrap();
        assert!(matches!(sparsity_study(&stack, &SparsityConfig::default()), Err(Error::DegenerateContent(_))));
    }

    #[test]
    fn min_misalignment_is_enforced() {
        let pts = default_control_points(64, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let p = draw_misalignment(&mut rng, &ParamBounds::DEFAULT, Some(5.0), &pts).unwrap();
            assert!(mean_displacement(&AffineParams::IDENTITY, &p, &pts).unwrap() >= 5.0);
        }
        let tiny = ParamBounds::new([1.0, 0.0, 0.0, 0.0, 1.0, 0.0], [1.0, 0.0, 0.1, 0.0, 1.0, 0.1]).unwrap();
        assert!(draw_misalignment(&mut rng, &tiny, Some(1.0), &pts).is_err());
    }

    #[test]
    fn rmse_examples() {
        let pts = default_control_points(64, 48);
        assert_eq!(pts.len(), 49);
        let t = AffineParams::new([1.01, 0.02, 3.0, -0.01, 0.99, 1.0]);
        assert_eq!(rmse_eval(&t, &t, &pts).unwrap(), 0.0);
        let mut e = t;
        e.p[2] += 0.3;
        e.p[5] -= 0.4;
        assert!((rmse_eval(&t, &e, &pts).unwrap() - 0.5).abs() < 1e-12);
        assert!((mean_displacement(&t, &e, &pts).unwrap() - 0.5).abs() < 1e-12);
        assert!(rmse_eval(&t, &e, &pts[..3]).is_err());

        // brute-force recomputation on a random pair
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = ParamBounds::DEFAULT.sample(&mut rng);
        let b = ParamBounds::DEFAULT.sample(&mut rng);
        let mut sq = 0.0;
        for &(x, y) in &pts {
            let ua = a.p[0] * x + a.p[1] * y + a.p[2];
            let va = a.p[3] * x + a.p[4] * y + a.p[5];
            let ub = b.p[0] * x + b.p[1] * y + b.p[2];
            let vb = b.p[3] * x + b.p[4] * y + b.p[5];
            sq += (ua - ub).powi(2) + (va - vb).powi(2);
        }
        let oracle = (sq / pts.len() as f64).sqrt();
        assert!((rmse_eval(&a, &b, &pts).unwrap() - oracle).abs() < 1e-12);
        assert_eq!(rmse_eval(&a, &b, &pts).unwrap(), rmse_eval(&b, &a, &pts).unwrap());

        let rep = rmse_report(&[t, t], &[t, e], &pts).unwrap();
        assert_eq!(rep.per_channel_rmse[0], 0.0);
        assert_eq!(rep.control_points[1].len(), 49);
        assert!(rmse_report(&[t], &[], &pts).is_err());
    }
}
