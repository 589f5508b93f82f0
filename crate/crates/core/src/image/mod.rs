//! Single-channel floating-point rasters and the lattice operations the
//! registration machinery is built from: normalization, finite-difference
//! derivatives, bilinear sampling and pyramids.
//!
//! Pixel centers sit at integer coordinates, origin top-left, `x` (or `u`)
//! to the right and `y` (or `v`) downward.

mod spline;

pub use spline::{BSplineSurface, LocalJet};

use crate::error::{invalid, Result};

/// Row-major single-channel raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Image2D {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image2D {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return invalid(format!("image dimensions must be positive, got {width}x{height}"));
        }
        if data.len() != width * height {
            return invalid(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            ));
        }
        Ok(Self { width, height, data })
    }

    /// Image with every pixel set to `value`.
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self { width, height, data: vec![value; width * height] }
    }

    /// Image whose pixel `(x, y)` is `f(x, y)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { width: self.width, height: self.height, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Pixelwise combination of two equally sized images.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.dims() != other.dims() {
            return invalid(format!("size mismatch: {:?} vs {:?}", self.dims(), other.dims()));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { width: self.width, height: self.height, data })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn clamp01(&self) -> Self {
        self.map(|v| v.clamp(0.0, 1.0))
    }
}

/// Map an integer raster of the given bit depth onto `[0, 1]`.
pub fn normalize(width: usize, height: usize, raw: &[u16], bit_depth: u32) -> Result<Image2D> {
    let full_scale = match bit_depth {
        8 => 255.0,
        16 => 65535.0,
        other => return invalid(format!("unsupported bit depth {other}; expected 8 or 16")),
    };
    if raw.is_empty() {
        return invalid("empty raster");
    }
    if bit_depth == 8 && raw.iter().any(|&v| v > 255) {
        return invalid("sample exceeds 8-bit range");
    }
    Image2D::new(width, height, raw.iter().map(|&v| v as f64 / full_scale).collect())
}

/// Lattice direction of a derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Central differences in the interior, one-sided differences on the border.
pub fn gradient(img: &Image2D, axis: Axis) -> Result<Image2D> {
    let (w, h) = img.dims();
    let n = match axis {
        Axis::X => w,
        Axis::Y => h,
    };
    if n < 2 {
        return invalid(format!("gradient along {axis:?} needs at least 2 pixels, image is {w}x{h}"));
    }
    let mut out = Image2D::filled(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let i = match axis {
                Axis::X => x,
                Axis::Y => y,
            };
            let d = if i == 0 {
                stencil_at(img, axis, x, y, 1) - stencil_at(img, axis, x, y, 0)
            } else if i == n - 1 {
                stencil_at(img, axis, x, y, n - 1) - stencil_at(img, axis, x, y, n - 2)
            } else {
                0.5 * (stencil_at(img, axis, x, y, i + 1) - stencil_at(img, axis, x, y, i - 1))
            };
            out.set(x, y, d);
        }
    }
    Ok(out)
}

#[inline]
fn stencil_at(img: &Image2D, axis: Axis, x: usize, y: usize, k: usize) -> f64 {
    match axis {
        Axis::X => img.get(k, y),
        Axis::Y => img.get(x, k),
    }
}

/// Finite-difference derivatives of an image through third order.
///
/// Only the distinct mixed partials are stored; accessors such as
/// [`DerivativeStack::dvu`] return the shared plane.
#[derive(Debug, Clone)]
pub struct DerivativeStack {
    pub base: Image2D,
    pub du: Image2D,
    pub dv: Image2D,
    pub duu: Image2D,
    pub duv: Image2D,
    pub dvv: Image2D,
    pub duuu: Image2D,
    pub duuv: Image2D,
    pub duvv: Image2D,
    pub dvvv: Image2D,
}

impl DerivativeStack {
    pub fn build(img: &Image2D) -> Result<Self> {
        let (w, h) = img.dims();
        if w < 4 || h < 4 {
            return invalid(format!("derivative stack needs at least 4x4 pixels, image is {w}x{h}"));
        }
        let gu = |i: &Image2D| gradient(i, Axis::X);
        let gv = |i: &Image2D| gradient(i, Axis::Y);
        let du = gu(img)?;
        let dv = gv(img)?;
        let duu = gu(&du)?;
        let duv = gv(&du)?;
        let dvv = gv(&dv)?;
        let duuu = gu(&duu)?;
        let duuv = gv(&duu)?;
        let duvv = gv(&duv)?;
        let dvvv = gv(&dvv)?;
        Ok(Self { base: img.clone(), du, dv, duu, duv, dvv, duuu, duuv, duvv, dvvv })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.base.dims()
    }

    pub fn dvu(&self) -> &Image2D {
        &self.duv
    }

    pub fn duvu(&self) -> &Image2D {
        &self.duuv
    }

    pub fn dvuu(&self) -> &Image2D {
        &self.duuv
    }

    pub fn dvuv(&self) -> &Image2D {
        &self.duvv
    }

    pub fn dvvu(&self) -> &Image2D {
        &self.duvv
    }

    /// All derivative planes bilinearly sampled at `(u, v)`.
    pub fn sample(&self, u: f64, v: f64) -> Option<LocalJet> {
        let weights = BilinearWeights::new(self.base.width, self.base.height, u, v)?;
        Some(LocalJet {
            f: weights.apply(&self.base),
            fu: weights.apply(&self.du),
            fv: weights.apply(&self.dv),
            fuu: weights.apply(&self.duu),
            fuv: weights.apply(&self.duv),
            fvv: weights.apply(&self.dvv),
            fuuu: weights.apply(&self.duuu),
            fuuv: weights.apply(&self.duuv),
            fuvv: weights.apply(&self.duvv),
            fvvv: weights.apply(&self.dvvv),
        })
    }
}

/// Four-neighbour interpolation weights; `None` outside `[0, w-1] x [0, h-1]`.
#[derive(Debug, Clone, Copy)]
struct BilinearWeights {
    i0: usize,
    j0: usize,
    i1: usize,
    j1: usize,
    a: f64,
    b: f64,
}

impl BilinearWeights {
    #[inline]
    fn new(width: usize, height: usize, u: f64, v: f64) -> Option<Self> {
        let (wmax, hmax) = ((width - 1) as f64, (height - 1) as f64);
        if !(u >= 0.0 && u <= wmax && v >= 0.0 && v <= hmax) {
            return None;
        }
        let (i0, a) = cell(u, width);
        let (j0, b) = cell(v, height);
        Some(Self { i0, j0, i1: (i0 + 1).min(width - 1), j1: (j0 + 1).min(height - 1), a, b })
    }

    #[inline]
    fn apply(&self, img: &Image2D) -> f64 {
        let w = img.width;
        let d = &img.data;
        let top = d[self.j0 * w + self.i0] * (1.0 - self.a) + d[self.j0 * w + self.i1] * self.a;
        let bottom = d[self.j1 * w + self.i0] * (1.0 - self.a) + d[self.j1 * w + self.i1] * self.a;
        top * (1.0 - self.b) + bottom * self.b
    }
}

/// Lower lattice index and fractional offset, keeping the last index inside.
#[inline]
fn cell(t: f64, n: usize) -> (usize, f64) {
    if n == 1 {
        return (0, 0.0);
    }
    let i = (t.floor() as usize).min(n - 2);
    (i, t - i as f64)
}

/// Bilinear interpolation; `None` means the point lies outside the image and
/// the pixel that asked for it is not part of the overlap.
#[inline]
pub fn sample_bilinear(img: &Image2D, u: f64, v: f64) -> Option<f64> {
    BilinearWeights::new(img.width, img.height, u, v).map(|w| w.apply(img))
}

/// 2x2 box average followed by decimation; odd trailing rows and columns
/// average whatever pixels they have.
pub fn downsample(img: &Image2D) -> Result<Image2D> {
    let (w, h) = img.dims();
    if w < 2 || h < 2 {
        return invalid(format!("downsample needs at least 2x2 pixels, image is {w}x{h}"));
    }
    let (cw, ch) = (w.div_ceil(2), h.div_ceil(2));
    Ok(Image2D::from_fn(cw, ch, |cx, cy| {
        let mut sum = 0.0;
        let mut count = 0usize;
        for y in (2 * cy)..(2 * cy + 2).min(h) {
            for x in (2 * cx)..(2 * cx + 2).min(w) {
                sum += img.get(x, y);
                count += 1;
            }
        }
        sum / count as f64
    }))
}

/// Smallest side length any pyramid layer may have.
pub const MIN_LAYER_SIDE: usize = 16;

/// Layers ordered from coarsest (index 0) to finest (the input image).
#[derive(Debug, Clone)]
pub struct Pyramid {
    layers: Vec<Image2D>,
}

impl Pyramid {
    pub const SCALE_FACTOR: f64 = 2.0;

    pub fn build(img: &Image2D, levels: usize) -> Result<Self> {
        if levels == 0 {
            return invalid("pyramid needs at least one layer");
        }
        let (w, h) = img.dims();
        let (cw, ch) = coarsest_dims(w, h, levels);
        if cw < MIN_LAYER_SIDE || ch < MIN_LAYER_SIDE {
            return invalid(format!(
                "{levels} pyramid layers on a {w}x{h} image leave a {cw}x{ch} coarsest layer; \
                 at least {MIN_LAYER_SIDE} pixels per side are required"
            ));
        }
        let mut layers = vec![img.clone()];
        for _ in 1..levels {
            let next = downsample(layers.last().expect("non-empty"))?;
            layers.push(next);
        }
        layers.reverse();
        Ok(Self { layers })
    }

    pub fn levels(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Image2D] {
        &self.layers
    }

    pub fn layer(&self, k: usize) -> &Image2D {
        &self.layers[k]
    }

    pub fn coarsest(&self) -> &Image2D {
        &self.layers[0]
    }

    pub fn finest(&self) -> &Image2D {
        self.layers.last().expect("non-empty")
    }
}

/// Dimensions of the coarsest layer produced by repeated ceil-halving.
pub fn coarsest_dims(width: usize, height: usize, levels: usize) -> (usize, usize) {
    (0..levels.saturating_sub(1)).fold((width, height), |(w, h), _| (w.div_ceil(2), h.div_ceil(2)))
}

/// Co-sized channel images plus the index of the reference channel.
#[derive(Debug, Clone)]
pub struct ChannelStack {
    channels: Vec<Image2D>,
    reference: usize,
}

impl ChannelStack {
    pub fn new(channels: Vec<Image2D>, reference: usize) -> Result<Self> {
        if channels.is_empty() {
            return invalid("channel stack is empty");
        }
        if reference >= channels.len() {
            return invalid(format!(
                "reference channel {reference} out of range for {} channels",
                channels.len()
            ));
        }
        let dims = channels[0].dims();
        if let Some(bad) = channels.iter().position(|c| c.dims() != dims) {
            return invalid(format!("channel {bad} is {:?}, expected {dims:?}", channels[bad].dims()));
        }
        Ok(Self { channels, reference })
    }

    /// Index of the middle channel, the conventional reference choice.
    pub fn middle_index(count: usize) -> usize {
        count / 2
    }

    pub fn channels(&self) -> &[Image2D] {
        &self.channels
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn reference_index(&self) -> usize {
        self.reference
    }

    pub fn reference(&self) -> &Image2D {
        &self.channels[self.reference]
    }

    pub fn dims(&self) -> (usize, usize) {
        self.channels[0].dims()
    }
}
