//! Raster file formats: binary PGM (P5), raw little-endian f32 with a JSON
//! sidecar, and two 8-bit renderings (pseudocolor overlay, heat map).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::image::Image2D;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterFormat {
    Pgm,
    RawF32,
}

impl RasterFormat {
    /// `.pgm`/`.pnm` are PGM, `.f32`/`.raw` are raw float.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("pgm" | "pnm") => Ok(Self::Pgm),
            Some("f32" | "raw") => Ok(Self::RawF32),
            _ => invalid(format!("unrecognized raster extension: {}", path.display())),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Self::Pgm => "pgm",
            Self::RawF32 => "f32",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct RawHeader {
    pub width: usize,
    pub height: usize,
    pub dtype: String,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn read_image(path: &Path) -> Result<Image2D> {
    match RasterFormat::from_path(path)? {
        RasterFormat::Pgm => read_pgm(path),
        RasterFormat::RawF32 => read_raw_f32(path),
    }
}

/// PGM output is 16-bit.
pub fn write_image(path: &Path, img: &Image2D) -> Result<()> {
    match RasterFormat::from_path(path)? {
        RasterFormat::Pgm => write_pgm(path, img, 16),
        RasterFormat::RawF32 => write_raw_f32(path, img),
    }
}

struct Tokens<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Tokens<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.buf.len() {
            match self.buf[self.pos] {
                b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                b'#' => {
                    while self.pos < self.buf.len() && self.buf[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn word(&mut self) -> Result<&[u8]> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.buf.len() && !self.buf[self.pos].is_ascii_whitespace() && self.buf[self.pos] != b'#' {
            self.pos += 1;
        }
        if start == self.pos {
            return invalid("truncated PGM header");
        }
        Ok(&self.buf[start..self.pos])
    }

    fn number(&mut self) -> Result<usize> {
        let w = self.word()?;
        std::str::from_utf8(w)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| crate::Error::InvalidInput(format!("bad PGM header field {:?}", String::from_utf8_lossy(w))))
    }
}

/// Parses a P5 buffer. Samples are divided by maxval.
pub fn decode_pgm(buf: &[u8]) -> Result<Image2D> {
    let mut t = Tokens { buf, pos: 0 };
    if t.word()? != b"P5" {
        return invalid("not a binary PGM (P5) file");
    }
    let width = t.number()?;
    let height = t.number()?;
    let maxval = t.number()?;
    if width == 0 || height == 0 {
        return invalid("PGM has zero size");
    }
    if maxval == 0 || maxval > 65535 {
        return invalid(format!("PGM maxval {maxval} out of range"));
    }
    // exactly one whitespace byte before the raster
    if t.pos >= buf.len() || !buf[t.pos].is_ascii_whitespace() {
        return invalid("truncated PGM header");
    }
    let data = &buf[t.pos + 1..];
    let bytes = if maxval < 256 { 1 } else { 2 };
    let n = width.checked_mul(height).ok_or_else(|| crate::Error::InvalidInput("PGM too large".into()))?;
    if data.len() < n * bytes {
        return invalid(format!("PGM raster truncated: expected {} bytes, found {}", n * bytes, data.len()));
    }
    let scale = 1.0 / maxval as f64;
    let pixels = (0..n)
        .map(|i| {
            let raw = if bytes == 1 { data[i] as u32 } else { u16::from_be_bytes([data[2 * i], data[2 * i + 1]]) as u32 };
            (raw.min(maxval as u32)) as f64 * scale
        })
        .collect();
    Image2D::new(width, height, pixels)
}

pub fn read_pgm(path: &Path) -> Result<Image2D> {
    decode_pgm(&fs::read(path)?)
}

/// Values are clamped to [0, 1] and quantized to `bit_depth` (8 or 16).
pub fn encode_pgm(img: &Image2D, bit_depth: u32) -> Result<Vec<u8>> {
    let maxval: u32 = match bit_depth {
        8 => 255,
        16 => 65535,
        _ => return invalid(format!("unsupported PGM bit depth {bit_depth}")),
    };
    let mut out = format!("P5\n{} {}\n{}\n", img.width(), img.height(), maxval).into_bytes();
    for &v in img.data() {
        let q = quantize(v, maxval);
        if bit_depth == 8 {
            out.push(q as u8);
        } else {
            out.extend_from_slice(&(q as u16).to_be_bytes());
        }
    }
    Ok(out)
}

fn quantize(v: f64, maxval: u32) -> u32 {
    if v.is_nan() {
        return 0;
    }
    (v.clamp(0.0, 1.0) * maxval as f64).round() as u32
}

pub fn write_pgm(path: &Path, img: &Image2D, bit_depth: u32) -> Result<()> {
    fs::write(path, encode_pgm(img, bit_depth)?)?;
    Ok(())
}

/// Reads `path` plus its `.json` sidecar.
pub fn read_raw_f32(path: &Path) -> Result<Image2D> {
    let header: RawHeader = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    if header.dtype != "f32" {
        return invalid(format!("unsupported raw dtype {:?}", header.dtype));
    }
    let buf = fs::read(path)?;
    let n = header.width * header.height;
    if buf.len() != 4 * n {
        return invalid(format!("raw payload has {} bytes, header implies {}", buf.len(), 4 * n));
    }
    let data = buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
    Image2D::new(header.width, header.height, data)
}

pub fn write_raw_f32(path: &Path, img: &Image2D) -> Result<()> {
    write_f32_grid(path, img.width(), img.height(), img.data())
}

/// Raw f32 payload and sidecar for an arbitrary row-major grid.
pub fn write_f32_grid(path: &Path, width: usize, height: usize, values: &[f64]) -> Result<()> {
    if values.len() != width * height {
        return invalid("grid size does not match dimensions");
    }
    let bytes: Vec<u8> = values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    fs::write(path, bytes)?;
    let header = RawHeader { width, height, dtype: "f32".into() };
    fs::write(sidecar_path(path), serde_json::to_vec_pretty(&header)?)?;
    Ok(())
}

/// P6 overlay: reference in red and blue, floating in green. Aligned
/// structure reads gray, misregistration shows as magenta/green fringes.
pub fn encode_overlay(reference: &Image2D, floating: &Image2D) -> Result<Vec<u8>> {
    if reference.dims() != floating.dims() {
        return invalid("overlay images differ in size");
    }
    let mut out = format!("P6\n{} {}\n255\n", reference.width(), reference.height()).into_bytes();
    for (&r, &f) in reference.data().iter().zip(floating.data()) {
        let (r, g) = (quantize(r, 255) as u8, quantize(f, 255) as u8);
        out.extend_from_slice(&[r, g, r]);
    }
    Ok(out)
}

pub fn write_overlay(path: &Path, reference: &Image2D, floating: &Image2D) -> Result<()> {
    fs::write(path, encode_overlay(reference, floating)?)?;
    Ok(())
}

/// 8-bit rendering of a grid, min mapped to 0 and max to 255. Non-finite
/// cells render as 255.
pub fn encode_heat(width: usize, height: usize, values: &[f64]) -> Result<Vec<u8>> {
    if values.len() != width * height || values.is_empty() {
        return invalid("grid size does not match dimensions");
    }
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    for &v in values {
        out.push(if v.is_finite() { (((v - lo) / span) * 255.0).round() as u8 } else { 255 });
    }
    Ok(out)
}

pub fn write_heat(path: &Path, width: usize, height: usize, values: &[f64]) -> Result<()> {
    fs::write(path, encode_heat(width, height, values)?)?;
    Ok(())
}
