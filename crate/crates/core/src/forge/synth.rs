//! Synthetic tagged photo collections with known ground truth.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{CelebritySeed, Face, IdentityCluster, Photo};
use crate::rng::{derive_seed, rng_from, Rng as ChaRng};

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedWorldConfig {
    pub identities: usize,
    pub photos: usize,
    pub dim: usize,
    /// Norm of the per-face deviation from the identity center (centers have
    /// unit norm).
    pub spread: f64,
    /// Tagged people per photo, drawn uniformly from `1..=max_tags`.
    pub max_tags: usize,
    /// Chance that a photo also shows an untagged stranger.
    pub distractor_rate: f64,
    /// Chance that a tagged person is missing from the photo.
    pub missing_rate: f64,
}

impl Default for AnnotatedWorldConfig {
    fn default() -> Self {
        Self {
            identities: 50,
            photos: 1200,
            dim: 64,
            spread: 0.5,
            max_tags: 3,
            distractor_rate: 0.5,
            missing_rate: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedWorld {
    pub photos: Vec<Photo>,
    pub seeds: Vec<CelebritySeed>,
    /// `(photo id, face id)` to true celebrity id; `None` for strangers.
    pub truth: BTreeMap<(String, String), Option<String>>,
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    v.into_iter().map(|x| x / n).collect()
}

fn gaussian(rng: &mut ChaRng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn sample_face(rng: &mut ChaRng, center: &[f64], spread: f64) -> Vec<f64> {
    let dim = center.len();
    let noise = unit(gaussian(rng, dim));
    center.iter().zip(noise).map(|(c, n)| c + spread * n).collect()
}

const SYLLABLES: [&str; 12] = ["ka", "lo", "mi", "ra", "te", "su", "no", "vi", "da", "re", "zo", "an"];

fn fake_name(rng: &mut ChaRng) -> String {
    let word = |rng: &mut ChaRng| {
        let n = rng.gen_range(2..4);
        let mut w: String = (0..n).map(|_| SYLLABLES[rng.gen_range(0..SYLLABLES.len())]).collect();
        w[..1].make_ascii_uppercase();
        w
    };
    let first = word(rng);
    let last = word(rng);
    format!("{first} {last}")
}

pub fn annotated_world(config: &AnnotatedWorldConfig, seed: u64) -> AnnotatedWorld {
    let mut rng = rng_from(derive_seed(seed, &[0]));
    let centers: Vec<Vec<f64>> = (0..config.identities)
        .map(|_| unit(gaussian(&mut rng, config.dim)))
        .collect();
    let seeds: Vec<CelebritySeed> = centers
        .iter()
        .enumerate()
        .map(|(k, c)| CelebritySeed {
            id: format!("c{k:04}"),
            name: fake_name(&mut rng),
            seeds: alloc::vec![sample_face(&mut rng, c, config.spread)],
        })
        .collect();

    let mut photos = Vec::with_capacity(config.photos);
    let mut truth = BTreeMap::new();
    for p in 0..config.photos {
        let mut rng = rng_from(derive_seed(seed, &[1, p as u64]));
        let id = format!("p{p:06}");
        let n_tags = rng.gen_range(1..=config.max_tags.min(config.identities).max(1));
        let tagged: Vec<usize> = rand::seq::index::sample(&mut rng, config.identities, n_tags).into_vec();
        let mut people: Vec<Option<usize>> = tagged
            .iter()
            .filter(|_| !rng.gen_bool(config.missing_rate))
            .map(|&k| Some(k))
            .collect();
        if rng.gen_bool(config.distractor_rate) {
            people.push(None);
        }
        people.shuffle(&mut rng);
        let faces: Vec<Face> = people
            .iter()
            .enumerate()
            .map(|(f, who)| {
                let embedding = match who {
                    Some(k) => sample_face(&mut rng, &centers[*k], config.spread),
                    None => unit(gaussian(&mut rng, config.dim)),
                };
                Face {
                    id: format!("f{f}"),
                    embedding,
                    landmarks: None,
                }
            })
            .collect();
        for (f, who) in faces.iter().zip(&people) {
            truth.insert((id.clone(), f.id.clone()), who.map(|k| seeds[k].id.clone()));
        }
        photos.push(Photo {
            id,
            image: None,
            faces,
            tags: tagged.iter().map(|&k| seeds[k].id.clone()).collect(),
        });
    }
    AnnotatedWorld { photos, seeds, truth }
}

/// Fraction of all faces whose outcome (assigned celebrity, or unassigned)
/// matches the ground truth. Clusters removed by filtering count as
/// unassigned.
pub fn assignment_accuracy(world: &AnnotatedWorld, clusters: &[IdentityCluster]) -> f64 {
    let mut assigned: BTreeMap<(&str, &str), &str> = BTreeMap::new();
    for c in clusters {
        for f in &c.faces {
            assigned.insert((f.photo.as_str(), f.face.as_str()), c.celebrity.as_str());
        }
    }
    if world.truth.is_empty() {
        return 1.0;
    }
    let correct = world
        .truth
        .iter()
        .filter(|((p, f), t)| assigned.get(&(p.as_str(), f.as_str())).copied() == t.as_deref())
        .count();
    correct as f64 / world.truth.len() as f64
}
