//! Gray images, two-landmark similarity alignment, mirroring and manifests.
//!
//! Pixel coordinates put pixel centers on integers: pixel `(x, y)` covers
//! `[x - 0.5, x + 0.5] x [y - 0.5, y + 0.5]`. Alignment maps the two source
//! landmarks onto fixed canonical positions with the unique rotation, uniform
//! scale and translation that does so, then resamples bilinearly.

mod synth;

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::tensor::{ShapeError, Tensor};

pub use synth::{render, synth_pairs, synth_world, synth_world_with, SubjectPattern, SynthConfig, SynthWorld};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AlignError {
    #[error("landmarks coincide; similarity transform undefined")]
    CoincidentLandmarks,
    #[error("image has {actual} pixels, expected {expected}")]
    PixelCount { expected: usize, actual: usize },
    #[error("image extents must be positive")]
    EmptyImage,
    #[error("invalid alignment config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, AlignError> {
        if width == 0 || height == 0 {
            return Err(AlignError::EmptyImage);
        }
        if pixels.len() != width * height {
            return Err(AlignError::PixelCount {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self, AlignError> {
        Self::new(width, height, alloc::vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        f: impl Fn(usize, usize) -> f64,
    ) -> Result<Self, AlignError> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    /// Quantizes 8-bit samples to `[0, 1]`.
    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self, AlignError> {
        Self::new(
            width,
            height,
            bytes.iter().map(|&b| f64::from(b) / 255.0).collect(),
        )
    }

    /// Rounds to 8-bit samples, clamping to `[0, 1]` first.
    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&p| libm::round(p.clamp(0.0, 1.0) * 255.0) as u8)
            .collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Sample with zero outside the image.
    fn get_or_zero(&self, x: isize, y: isize) -> f64 {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            0.0
        } else {
            self.pixels[y as usize * self.width + x as usize]
        }
    }

    /// Bilinear interpolation at a real position, zero-filled outside.
    pub fn bilinear(&self, x: f64, y: f64) -> f64 {
        let x0 = libm::floor(x);
        let y0 = libm::floor(y);
        let fx = x - x0;
        let fy = y - y0;
        let (ix, iy) = (x0 as isize, y0 as isize);
        let mut v = self.get_or_zero(ix, iy) * (1.0 - fx) * (1.0 - fy);
        if fx != 0.0 {
            v += self.get_or_zero(ix + 1, iy) * fx * (1.0 - fy);
        }
        if fy != 0.0 {
            v += self.get_or_zero(ix, iy + 1) * (1.0 - fx) * fy;
        }
        if fx != 0.0 && fy != 0.0 {
            v += self.get_or_zero(ix + 1, iy + 1) * fx * fy;
        }
        v
    }

    /// `[height, width, 1]` tensor for the network.
    pub fn to_tensor(&self) -> Result<Tensor, ShapeError> {
        Tensor::from_vec(&[self.height, self.width, 1], self.pixels.clone())
    }

    /// Box-filter downsampling by an integer factor; dimensions must divide.
    pub fn downsample(&self, factor: usize) -> Result<Self, AlignError> {
        if factor == 0 || !self.width.is_multiple_of(factor) || !self.height.is_multiple_of(factor) {
            return Err(AlignError::InvalidConfig(
                "downsampling factor must divide both extents",
            ));
        }
        let (w, h) = (self.width / factor, self.height / factor);
        let norm = (factor * factor) as f64;
        Self::from_fn(w, h, |x, y| {
            let mut s = 0.0;
            for dy in 0..factor {
                for dx in 0..factor {
                    s += self.get(x * factor + dx, y * factor + dy);
                }
            }
            s / norm
        })
    }

    pub fn mean_abs_diff(&self, other: &GrayImage) -> f64 {
        let n = self.pixels.len() as f64;
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| libm::fabs(a - b))
            .sum::<f64>()
            / n
    }
}

/// Luminance `0.299 R + 0.587 G + 0.114 B`, evaluated as an integer-weighted
/// sum over 1000 so pure white maps to exactly 1.
pub fn luminance(rgb: [f64; 3]) -> f64 {
    (299.0 * rgb[0] + 587.0 * rgb[1] + 114.0 * rgb[2]) / 1000.0
}

/// Converts interleaved RGB samples in `[0, 1]` to gray.
pub fn to_gray(width: usize, height: usize, rgb: &[[f64; 3]]) -> Result<GrayImage, AlignError> {
    GrayImage::new(width, height, rgb.iter().map(|&p| luminance(p)).collect())
}

/// Horizontal flip.
pub fn mirror(image: &GrayImage) -> GrayImage {
    let mut pixels = Vec::with_capacity(image.pixels.len());
    for row in image.pixels.chunks(image.width) {
        pixels.extend(row.iter().rev());
    }
    GrayImage {
        width: image.width,
        height: image.height,
        pixels,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        libm::hypot(self.x - other.x, self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandmarkPair {
    pub p1: Point,
    pub p2: Point,
}

impl LandmarkPair {
    pub fn new(p1: Point, p2: Point) -> Result<Self, AlignError> {
        if p1 == p2 {
            return Err(AlignError::CoincidentLandmarks);
        }
        Ok(Self { p1, p2 })
    }
}

/// `p -> a * p + t` with `a` a complex number: rotation and uniform scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub a_re: f64,
    pub a_im: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Similarity {
    pub const IDENTITY: Similarity = Similarity {
        a_re: 1.0,
        a_im: 0.0,
        tx: 0.0,
        ty: 0.0,
    };

    /// The unique similarity taking `p1 -> q1` and `p2 -> q2`.
    pub fn from_correspondences(
        p1: Point,
        p2: Point,
        q1: Point,
        q2: Point,
    ) -> Result<Self, AlignError> {
        let (dx, dy) = (p2.x - p1.x, p2.y - p1.y);
        let den = dx * dx + dy * dy;
        if den == 0.0 {
            return Err(AlignError::CoincidentLandmarks);
        }
        let (ex, ey) = (q2.x - q1.x, q2.y - q1.y);
        // a = (q2 - q1) / (p2 - p1)
        let a_re = (ex * dx + ey * dy) / den;
        let a_im = (ey * dx - ex * dy) / den;
        let tx = q1.x - (a_re * p1.x - a_im * p1.y);
        let ty = q1.y - (a_im * p1.x + a_re * p1.y);
        Ok(Self {
            a_re,
            a_im,
            tx,
            ty,
        })
    }

    /// Rotation by `angle` radians and scaling by `scale` about `center`,
    /// followed by a translation.
    pub fn rotation_about(center: Point, angle: f64, scale: f64, shift: Point) -> Self {
        let a_re = scale * libm::cos(angle);
        let a_im = scale * libm::sin(angle);
        Self {
            a_re,
            a_im,
            tx: center.x - (a_re * center.x - a_im * center.y) + shift.x,
            ty: center.y - (a_im * center.x + a_re * center.y) + shift.y,
        }
    }

    pub fn apply(&self, p: Point) -> Point {
        Point {
            x: self.a_re * p.x - self.a_im * p.y + self.tx,
            y: self.a_im * p.x + self.a_re * p.y + self.ty,
        }
    }

    pub fn scale(&self) -> f64 {
        libm::hypot(self.a_re, self.a_im)
    }

    pub fn inverse(&self) -> Self {
        let den = self.a_re * self.a_re + self.a_im * self.a_im;
        let a_re = self.a_re / den;
        let a_im = -self.a_im / den;
        Self {
            a_re,
            a_im,
            tx: -(a_re * self.tx - a_im * self.ty),
            ty: -(a_im * self.tx + a_re * self.ty),
        }
    }
}

/// Output geometry of alignment: a square crop and where the two landmarks
/// must land in it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignConfig {
    pub size: usize,
    pub q1: Point,
    pub q2: Point,
}

impl Default for AlignConfig {
    /// 100x100 with the landmarks 25 pixels apart on the vertical center line.
    fn default() -> Self {
        Self {
            size: 100,
            q1: Point::new(50.0, 40.0),
            q2: Point::new(50.0, 65.0),
        }
    }
}

impl AlignConfig {
    /// Same layout scaled to a smaller (or larger) crop.
    pub fn scaled(&self, size: usize) -> Self {
        let s = size as f64 / self.size as f64;
        Self {
            size,
            q1: Point::new(self.q1.x * s, self.q1.y * s),
            q2: Point::new(self.q2.x * s, self.q2.y * s),
        }
    }

    pub fn separation(&self) -> f64 {
        self.q1.distance(&self.q2)
    }

    pub fn validate(&self) -> Result<(), AlignError> {
        if self.size == 0 {
            return Err(AlignError::InvalidConfig("crop size must be positive"));
        }
        if self.q1 == self.q2 {
            return Err(AlignError::InvalidConfig("canonical landmarks coincide"));
        }
        Ok(())
    }
}

/// Resamples `image` into a `width x height` output where output pixel `p`
/// reads the source at `out_to_src(p)`.
pub fn warp(image: &GrayImage, out_to_src: &Similarity, width: usize, height: usize) -> GrayImage {
    let mut pixels = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let s = out_to_src.apply(Point::new(x as f64, y as f64));
            pixels.push(image.bilinear(s.x, s.y).clamp(0.0, 1.0));
        }
    }
    GrayImage {
        width,
        height,
        pixels,
    }
}

/// Source-to-crop transform used by [`align`].
pub fn alignment_transform(
    landmarks: &LandmarkPair,
    config: &AlignConfig,
) -> Result<Similarity, AlignError> {
    config.validate()?;
    Similarity::from_correspondences(landmarks.p1, landmarks.p2, config.q1, config.q2)
}

/// Maps the landmarks onto the canonical positions and crops.
pub fn align(
    image: &GrayImage,
    landmarks: &LandmarkPair,
    config: &AlignConfig,
) -> Result<GrayImage, AlignError> {
    let forward = alignment_transform(landmarks, config)?;
    Ok(warp(image, &forward.inverse(), config.size, config.size))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceRecord {
    pub path: String,
    pub subject: String,
    pub landmarks: LandmarkPair,
    pub mirrored: bool,
}

impl FaceRecord {
    fn order(&self, other: &Self) -> Ordering {
        self.subject
            .cmp(&other.subject)
            .then_with(|| self.path.cmp(&other.path))
            .then_with(|| self.mirrored.cmp(&other.mirrored))
            .then_with(|| {
                let a = [
                    self.landmarks.p1.x,
                    self.landmarks.p1.y,
                    self.landmarks.p2.x,
                    self.landmarks.p2.y,
                ];
                let b = [
                    other.landmarks.p1.x,
                    other.landmarks.p1.y,
                    other.landmarks.p2.x,
                    other.landmarks.p2.y,
                ];
                a.iter()
                    .zip(&b)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(Ordering::Equal)
            })
    }
}

/// Records kept sorted by subject, then path, then mirrored flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    records: Vec<FaceRecord>,
    pub canonical: AlignConfig,
}

impl Manifest {
    pub fn new(mut records: Vec<FaceRecord>, canonical: AlignConfig) -> Self {
        records.sort_by(FaceRecord::order);
        Self { records, canonical }
    }

    pub fn records(&self) -> &[FaceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct subject ids, sorted.
    pub fn subjects(&self) -> Vec<String> {
        let mut s: Vec<String> = self.records.iter().map(|r| r.subject.clone()).collect();
        s.dedup();
        s
    }

    /// Dense class index of every record, following [`Manifest::subjects`].
    pub fn labels(&self) -> Vec<usize> {
        let subjects = self.subjects();
        self.records
            .iter()
            .map(|r| {
                subjects
                    .binary_search(&r.subject)
                    .expect("subject listed")
            })
            .collect()
    }
}

/// Adds a flipped copy of every record. Mirroring is applied after alignment,
/// so landmarks are kept as they are.
pub fn mirror_manifest(manifest: &Manifest) -> Manifest {
    let mut records = manifest.records.clone();
    records.extend(manifest.records.iter().map(|r| FaceRecord {
        mirrored: !r.mirrored,
        ..r.clone()
    }));
    Manifest::new(records, manifest.canonical)
}
