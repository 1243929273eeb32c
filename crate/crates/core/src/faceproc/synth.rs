//! A synthetic face world for desk-scale experiments.
//!
//! Each subject is a smooth parametric pattern defined in the canonical crop
//! frame: a few oriented gratings plus Gaussian blobs inside an oval, with two
//! dark marker dots sitting exactly on the canonical landmark positions. Every
//! image renders the pattern through a random similarity (rotation, scale,
//! shift) into a larger source image, with per-image gain, offset, clutter
//! and pixel noise. The landmarks reported for an image are the images of the
//! canonical positions under its transform, plus a little detector noise.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::eval::PairSpec;

use super::{AlignConfig, FaceRecord, GrayImage, LandmarkPair, Manifest, Point, Similarity};
use crate::rng::{derive_seed, rng_from, Rng as ChaRng};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub source_side: usize,
    pub canonical: AlignConfig,
    pub max_rotation: f64,
    pub scale_range: (f64, f64),
    pub max_shift: f64,
    pub pixel_noise: f64,
    pub landmark_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            source_side: 160,
            canonical: AlignConfig::default(),
            max_rotation: 0.35,
            scale_range: (0.9, 1.3),
            max_shift: 8.0,
            pixel_noise: 0.04,
            landmark_noise: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectPattern {
    /// `(cycles_x, cycles_y, phase, amplitude)` per grating, cycles per crop.
    gratings: Vec<(f64, f64, f64, f64)>,
    /// `(cx, cy, sigma, amplitude)` per blob, in crop fractions.
    blobs: Vec<(f64, f64, f64, f64)>,
}

impl SubjectPattern {
    pub fn random(rng: &mut ChaRng) -> Self {
        let gratings = (0..3)
            .map(|_| {
                let freq = rng.gen_range(1.5..5.0);
                let theta = rng.gen_range(0.0..PI);
                (
                    freq * libm::cos(theta),
                    freq * libm::sin(theta),
                    rng.gen_range(0.0..2.0 * PI),
                    rng.gen_range(0.06..0.12),
                )
            })
            .collect();
        let blobs = (0..4)
            .map(|_| {
                let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                (
                    rng.gen_range(0.25..0.75),
                    rng.gen_range(0.25..0.8),
                    rng.gen_range(0.05..0.12),
                    sign * rng.gen_range(0.15..0.3),
                )
            })
            .collect();
        Self { gratings, blobs }
    }

    /// Intensity at crop-frame position `(u, v)` for a crop of side `size`
    /// whose markers sit at `q1`, `q2`.
    pub fn value(&self, u: f64, v: f64, canonical: &AlignConfig) -> f64 {
        let size = canonical.size as f64;
        let (s, t) = (u / size, v / size);
        // Oval face region.
        let (ex, ey) = ((s - 0.5) / 0.4, (t - 0.52) / 0.47);
        if ex * ex + ey * ey > 1.0 {
            return f64::NAN;
        }
        let mut val = 0.5;
        for &(fx, fy, phase, amp) in &self.gratings {
            val += amp * libm::cos(2.0 * PI * (fx * s + fy * t) + phase);
        }
        for &(cx, cy, sigma, amp) in &self.blobs {
            let d2 = (s - cx) * (s - cx) + (t - cy) * (t - cy);
            val += amp * libm::exp(-d2 / (2.0 * sigma * sigma));
        }
        let marker_sigma = 0.02 * size;
        for q in [canonical.q1, canonical.q2] {
            let d2 = (u - q.x) * (u - q.x) + (v - q.y) * (v - q.y);
            val -= 0.45 * libm::exp(-d2 / (2.0 * marker_sigma * marker_sigma));
        }
        val
    }
}

#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub patterns: Vec<SubjectPattern>,
    /// Source images, parallel to `manifest.records()`.
    pub images: Vec<GrayImage>,
    pub manifest: Manifest,
    /// Ground-truth subject index of each record.
    pub labels: Vec<usize>,
    /// Crop-to-source transform each image was rendered with.
    pub transforms: Vec<Similarity>,
}

/// Renders `pattern` through `crop_to_src` into a square source image.
pub fn render(
    pattern: &SubjectPattern,
    crop_to_src: &Similarity,
    config: &SynthConfig,
    rng: &mut ChaRng,
) -> GrayImage {
    let side = config.source_side;
    let src_to_crop = crop_to_src.inverse();
    let gain = rng.gen_range(0.85..1.15);
    let offset = rng.gen_range(-0.05..0.05);
    let (cfx, cfy, cphase) = (
        rng.gen_range(0.5..2.0),
        rng.gen_range(0.5..2.0),
        rng.gen_range(0.0..2.0 * PI),
    );
    let noise = Normal::new(0.0, config.pixel_noise.max(1e-12)).expect("positive std");
    let mut pixels = Vec::with_capacity(side * side);
    for y in 0..side {
        for x in 0..side {
            let c = src_to_crop.apply(Point::new(x as f64, y as f64));
            let face = pattern.value(c.x, c.y, &config.canonical);
            let base = if face.is_nan() {
                let (s, t) = (x as f64 / side as f64, y as f64 / side as f64);
                0.3 + 0.1 * libm::cos(2.0 * PI * (cfx * s + cfy * t) + cphase)
            } else {
                gain * face + offset
            };
            let n = if config.pixel_noise > 0.0 {
                noise.sample(rng)
            } else {
                0.0
            };
            pixels.push((base + n).clamp(0.0, 1.0));
        }
    }
    GrayImage::new(side, side, pixels).expect("consistent extents")
}

/// Generates `num_subjects` identities with `images_per_subject` images each.
pub fn synth_world(num_subjects: usize, images_per_subject: usize, seed: u64) -> SynthWorld {
    synth_world_with(num_subjects, images_per_subject, seed, &SynthConfig::default())
}

pub fn synth_world_with(
    num_subjects: usize,
    images_per_subject: usize,
    seed: u64,
    config: &SynthConfig,
) -> SynthWorld {
    let patterns: Vec<SubjectPattern> = (0..num_subjects)
        .map(|s| SubjectPattern::random(&mut rng_from(derive_seed(seed, &[s as u64]))))
        .collect();
    let mut images = Vec::new();
    let mut records = Vec::new();
    let mut labels = Vec::new();
    let mut transforms = Vec::new();
    let lm_noise = Normal::new(0.0, config.landmark_noise.max(1e-12)).expect("positive std");
    let crop_center = Point::new(
        config.canonical.size as f64 / 2.0,
        config.canonical.size as f64 * 0.52,
    );
    let src_center = config.source_side as f64 / 2.0;
    for (s, pattern) in patterns.iter().enumerate() {
        for k in 0..images_per_subject {
            let mut rng = rng_from(derive_seed(seed, &[s as u64, k as u64 + 1]));
            let angle = rng.gen_range(-config.max_rotation..=config.max_rotation);
            let scale = rng.gen_range(config.scale_range.0..=config.scale_range.1);
            let shift = Point::new(
                src_center - crop_center.x + rng.gen_range(-config.max_shift..=config.max_shift),
                src_center - crop_center.y + rng.gen_range(-config.max_shift..=config.max_shift),
            );
            let crop_to_src = Similarity::rotation_about(crop_center, angle, scale, shift);
            let image = render(pattern, &crop_to_src, config, &mut rng);
            let mut jitter = |p: Point| {
                if config.landmark_noise > 0.0 {
                    Point::new(p.x + lm_noise.sample(&mut rng), p.y + lm_noise.sample(&mut rng))
                } else {
                    p
                }
            };
            let p1 = jitter(crop_to_src.apply(config.canonical.q1));
            let p2 = jitter(crop_to_src.apply(config.canonical.q2));
            records.push(FaceRecord {
                path: format!("s{s:04}/{k:04}.pgm"),
                subject: format!("s{s:04}"),
                landmarks: LandmarkPair::new(p1, p2).expect("distinct markers"),
                mirrored: false,
            });
            images.push(image);
            labels.push(s);
            transforms.push(crop_to_src);
        }
    }
    // Generation order already matches manifest order: zero-padded ids sort
    // lexicographically in numeric order.
    let manifest = Manifest::new(records, config.canonical);
    SynthWorld {
        patterns,
        images,
        manifest,
        labels,
        transforms,
    }
}

/// Verification folds over records with the given subject labels: each fold
/// receives `per_fold / 2` genuine and `per_fold / 2` impostor pairs, drawn
/// without repetition from all unordered pairs. Folds come out smaller when
/// there are not enough pairs of a kind.
pub fn synth_pairs(labels: &[usize], folds: usize, per_fold: usize, seed: u64) -> Vec<Vec<PairSpec>> {
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for a in 0..labels.len() {
        for b in a + 1..labels.len() {
            let p = PairSpec {
                a,
                b,
                genuine: labels[a] == labels[b],
            };
            if p.genuine {
                genuine.push(p);
            } else {
                impostor.push(p);
            }
        }
    }
    let mut rng = rng_from(seed);
    genuine.shuffle(&mut rng);
    impostor.shuffle(&mut rng);
    let half = per_fold / 2;
    let mut out: Vec<Vec<PairSpec>> = (0..folds).map(|_| Vec::with_capacity(2 * half)).collect();
    for list in [genuine, impostor] {
        for (k, p) in list.into_iter().take(folds * half).enumerate() {
            out[k % folds].push(p);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::faceproc::align;

    #[test]
    fn world_is_seed_deterministic() {
        let a = synth_world(3, 2, 11);
        let b = synth_world(3, 2, 11);
        assert_eq!(a.images, b.images);
        assert_eq!(a.manifest, b.manifest);
        let c = synth_world(3, 2, 12);
        assert_ne!(a.images, c.images);
    }

    #[test]
    fn record_count_and_order() {
        let w = synth_world(10, 20, 1);
        assert_eq!(w.manifest.len(), 200);
        assert_eq!(w.manifest.labels(), w.labels);
        for (r, &l) in w.manifest.records().iter().zip(&w.labels) {
            assert_eq!(r.subject, format!("s{l:04}"));
        }
    }

    #[test]
    fn pair_folds_are_balanced_and_distinct() {
        let labels: Vec<usize> = (0..30).map(|i| i / 5).collect();
        let folds = synth_pairs(&labels, 10, 8, 3);
        assert_eq!(folds.len(), 10);
        let mut seen = alloc::collections::BTreeSet::new();
        for f in &folds {
            assert_eq!(f.len(), 8);
            assert_eq!(f.iter().filter(|p| p.genuine).count(), 4);
            for p in f {
                assert!(p.a < p.b);
                assert_eq!(p.genuine, labels[p.a] == labels[p.b]);
                assert!(seen.insert((p.a, p.b)));
            }
        }
        // 6 subjects x C(5,2) = 60 genuine pairs available; ask for more.
        let short = synth_pairs(&labels, 10, 20, 3);
        assert_eq!(short.iter().flatten().filter(|p| p.genuine).count(), 60);
        assert_eq!(synth_pairs(&labels, 10, 8, 3), folds);
    }

    /// Nearest neighbour on aligned raw pixels, leave-one-out.
    #[test]
    fn aligned_pixels_are_learnable() {
        let w = synth_world(10, 6, 5);
        let cfg = AlignConfig::default();
        let crops: Vec<GrayImage> = w
            .images
            .iter()
            .zip(w.manifest.records())
            .map(|(img, r)| align(img, &r.landmarks, &cfg).unwrap().downsample(4).unwrap())
            .collect();
        let mut correct = 0;
        for i in 0..crops.len() {
            let nearest = (0..crops.len())
                .filter(|&j| j != i)
                .min_by(|&a, &b| {
                    crops[i]
                        .mean_abs_diff(&crops[a])
                        .total_cmp(&crops[i].mean_abs_diff(&crops[b]))
                })
                .unwrap();
            correct += usize::from(w.labels[nearest] == w.labels[i]);
        }
        let acc = correct as f64 / crops.len() as f64;
        assert!(acc > 0.5, "nearest-neighbour accuracy {acc} vs chance 0.1");
    }
}
