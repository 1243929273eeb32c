//! Tag-similarity clustering: turns tagged photos with detected faces into a
//! clean identity-labelled face list.
//!
//! 1. every celebrity starts from its main-photo seed embedding;
//! 2. single-face, single-tag photos whose face resembles the tagged
//!    celebrity's seeds are added as extra seeds;
//! 3. in every photo, faces are matched one-to-one to name tags, maximizing
//!    total similarity, keeping only pairs above a threshold;
//! 4. identities with too few faces are dropped, then identities whose names
//!    collide with an external list.

mod assignment;
mod names;
mod synth;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::eval::cosine;
use crate::faceproc::{AlignConfig, FaceRecord, GrayImage, LandmarkPair, Manifest};
use crate::network::{Network, NetworkError};

pub use assignment::max_weight_assignment;
pub use names::{dedup_against, edit_distance, normalize_name};
pub use synth::{annotated_world, assignment_accuracy, AnnotatedWorld, AnnotatedWorldConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ForgeError {
    #[error("photo {photo} is tagged with unknown celebrity {tag}")]
    UnknownTag { photo: String, tag: String },
    #[error("photo {photo}: {reason}")]
    MalformedPhoto { photo: String, reason: String },
    #[error("celebrity {id}: {reason}")]
    MalformedSeed { id: String, reason: String },
    #[error("embedding failed: {0}")]
    Embedding(#[from] NetworkError),
    #[error("face image is {actual:?}, engine expects {expected:?}")]
    FaceSize { expected: [usize; 2], actual: [usize; 2] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    pub id: String,
    pub embedding: Vec<f64>,
    pub landmarks: Option<LandmarkPair>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Photo {
    pub id: String,
    /// Image location written into the manifest; the photo id when absent.
    pub image: Option<String>,
    pub faces: Vec<Face>,
    pub tags: Vec<String>,
}

impl Photo {
    pub fn validate(&self) -> Result<(), ForgeError> {
        let bad = |reason: String| ForgeError::MalformedPhoto {
            photo: self.id.clone(),
            reason,
        };
        let mut ids = BTreeSet::new();
        for f in &self.faces {
            if !ids.insert(f.id.as_str()) {
                return Err(bad(format!("duplicate face id {}", f.id)));
            }
        }
        if let Some(first) = self.faces.first() {
            if let Some(f) = self.faces.iter().find(|f| f.embedding.len() != first.embedding.len()) {
                return Err(bad(format!(
                    "face {} has embedding length {}, expected {}",
                    f.id,
                    f.embedding.len(),
                    first.embedding.len()
                )));
            }
        }
        Ok(())
    }

    /// Tags in first-occurrence order without repeats.
    fn distinct_tags(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.tags
            .iter()
            .map(String::as_str)
            .filter(|t| seen.insert(*t))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CelebritySeed {
    pub id: String,
    pub name: String,
    pub seeds: Vec<Vec<f64>>,
}

/// Seeds indexed by celebrity id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeedBank {
    map: BTreeMap<String, CelebritySeed>,
}

impl SeedBank {
    pub fn new(seeds: Vec<CelebritySeed>) -> Result<Self, ForgeError> {
        let mut map = BTreeMap::new();
        for s in seeds {
            if s.seeds.is_empty() {
                return Err(ForgeError::MalformedSeed {
                    id: s.id,
                    reason: "no seed embedding".into(),
                });
            }
            if map.contains_key(&s.id) {
                return Err(ForgeError::MalformedSeed {
                    id: s.id,
                    reason: "listed twice".into(),
                });
            }
            map.insert(s.id.clone(), s);
        }
        Ok(Self { map })
    }

    pub fn get(&self, id: &str) -> Option<&CelebritySeed> {
        self.map.get(id)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CelebritySeed> {
        self.map.values()
    }

    pub fn seed_count(&self) -> usize {
        self.map.values().map(|s| s.seeds.len()).sum()
    }
}

/// A face image to embedding model plus the similarity used to compare
/// embeddings.
pub trait EmbeddingEngine {
    fn embed(&self, face: &GrayImage) -> Result<Vec<f64>, ForgeError>;

    /// Cosine by default; degenerate pairs (zero norm, length mismatch)
    /// score 0.
    fn similarity(&self, a: &[f64], b: &[f64]) -> f64 {
        cosine(a, b).unwrap_or(0.0)
    }
}

/// Flattened, mean-removed pixels. A weak engine, but handy as a baseline.
#[derive(Debug, Clone, Copy, Default)]
pub struct PixelEngine;

impl EmbeddingEngine for PixelEngine {
    fn embed(&self, face: &GrayImage) -> Result<Vec<f64>, ForgeError> {
        let px = face.pixels();
        let mean = px.iter().sum::<f64>() / px.len() as f64;
        Ok(px.iter().map(|p| p - mean).collect())
    }
}

/// Embeds aligned faces with a trained network's representation layer.
#[derive(Debug, Clone)]
pub struct NetworkEngine {
    pub network: Network,
}

impl EmbeddingEngine for NetworkEngine {
    fn embed(&self, face: &GrayImage) -> Result<Vec<f64>, ForgeError> {
        let [h, w, _] = self.network.spec.input_shape;
        if face.height() != h || face.width() != w {
            return Err(ForgeError::FaceSize {
                expected: [h, w],
                actual: [face.height(), face.width()],
            });
        }
        let t = face.to_tensor().map_err(NetworkError::from)?;
        Ok(self.network.embed(&t)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    #[default]
    Max,
    Mean,
}

/// Similarity between an embedding and a celebrity's seed set.
pub fn seed_similarity<E: EmbeddingEngine + ?Sized>(
    engine: &E,
    embedding: &[f64],
    seeds: &CelebritySeed,
    aggregation: Aggregation,
) -> f64 {
    let sims = seeds.seeds.iter().map(|s| engine.similarity(embedding, s));
    match aggregation {
        Aggregation::Max => sims.fold(f64::NEG_INFINITY, f64::max),
        Aggregation::Mean => sims.sum::<f64>() / seeds.seeds.len() as f64,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForgeConfig {
    pub threshold: f64,
    pub aggregation: Aggregation,
    pub min_images: usize,
    pub max_distance: usize,
    pub external_names: Vec<String>,
    /// Used for faces that carry no landmarks of their own.
    pub canonical: AlignConfig,
    /// How many of the weakest assignments the report lists.
    pub report_lowest: usize,
}

impl Default for ForgeConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            aggregation: Aggregation::Max,
            min_images: 15,
            max_distance: 0,
            external_names: Vec::new(),
            canonical: AlignConfig::default(),
            report_lowest: 10,
        }
    }
}

/// Grows the seed sets from unambiguous photos, in photo order. Returns the
/// number of seeds added. Photos tagged with unknown celebrities are skipped.
pub fn augment_seeds<E: EmbeddingEngine + ?Sized>(
    seeds: &mut SeedBank,
    photos: &[Photo],
    threshold: f64,
    aggregation: Aggregation,
    engine: &E,
) -> usize {
    let mut added = 0;
    for photo in photos {
        let tags = photo.distinct_tags();
        if photo.faces.len() != 1 || tags.len() != 1 {
            continue;
        }
        let Some(celeb) = seeds.map.get_mut(tags[0]) else {
            continue;
        };
        let face = &photo.faces[0];
        if seed_similarity(engine, &face.embedding, celeb, aggregation) > threshold {
            celeb.seeds.push(face.embedding.clone());
            added += 1;
        }
    }
    added
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub photo: String,
    pub face: String,
    pub celebrity: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhotoAssignment {
    pub assigned: Vec<Assignment>,
    pub unassigned: Vec<String>,
}

/// Matches the photo's faces to its tags. Pairs at or below `threshold` are
/// not eligible, and the matching maximizes total similarity over the
/// eligible pairs. Non-positive similarities are never matched, so negative
/// thresholds act like zero.
pub fn assign_faces<E: EmbeddingEngine + ?Sized>(
    photo: &Photo,
    seeds: &SeedBank,
    threshold: f64,
    aggregation: Aggregation,
    engine: &E,
) -> Result<PhotoAssignment, ForgeError> {
    let tags = photo.distinct_tags();
    let celebs = tags
        .iter()
        .map(|t| {
            seeds.get(t).ok_or_else(|| ForgeError::UnknownTag {
                photo: photo.id.clone(),
                tag: String::from(*t),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let sims: Vec<Vec<f64>> = photo
        .faces
        .iter()
        .map(|f| {
            celebs
                .iter()
                .map(|c| seed_similarity(engine, &f.embedding, c, aggregation))
                .collect()
        })
        .collect();
    let weights: Vec<Vec<f64>> = sims
        .iter()
        .map(|row| row.iter().map(|&s| if s > threshold { s } else { 0.0 }).collect())
        .collect();
    let matching = max_weight_assignment(&weights);
    let mut out = PhotoAssignment::default();
    for (i, face) in photo.faces.iter().enumerate() {
        match matching[i] {
            Some(j) => out.assigned.push(Assignment {
                photo: photo.id.clone(),
                face: face.id.clone(),
                celebrity: celebs[j].id.clone(),
                similarity: sims[i][j],
            }),
            None => out.unassigned.push(face.id.clone()),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignedFace {
    pub photo: String,
    pub face: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCluster {
    pub celebrity: String,
    pub faces: Vec<AssignedFace>,
}

/// Drops clusters with fewer than `min_images` faces (`0` behaves like `1`).
pub fn filter_subjects(clusters: Vec<IdentityCluster>, min_images: usize) -> Vec<IdentityCluster> {
    clusters
        .into_iter()
        .filter(|c| c.faces.len() >= min_images.max(1))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ForgeReport {
    pub photos: usize,
    pub faces: usize,
    pub seeds_added: usize,
    pub assigned: usize,
    pub unassigned: usize,
    pub subjects_assigned: usize,
    pub removed_by_filter: Vec<String>,
    pub removed_by_dedup: Vec<String>,
    pub subjects_kept: usize,
    pub faces_kept: usize,
    /// Weakest kept assignments, ascending by similarity.
    pub lowest_confidence: Vec<Assignment>,
}

impl fmt::Display for ForgeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "photos\t{}", self.photos)?;
        writeln!(f, "faces\t{}", self.faces)?;
        writeln!(f, "seeds added\t{}", self.seeds_added)?;
        writeln!(f, "assigned\t{}", self.assigned)?;
        writeln!(f, "unassigned\t{}", self.unassigned)?;
        writeln!(f, "subjects with faces\t{}", self.subjects_assigned)?;
        writeln!(f, "removed (too few faces)\t{}", self.removed_by_filter.len())?;
        writeln!(f, "removed (name collision)\t{}", self.removed_by_dedup.len())?;
        writeln!(f, "subjects kept\t{}", self.subjects_kept)?;
        writeln!(f, "faces kept\t{}", self.faces_kept)?;
        if !self.lowest_confidence.is_empty() {
            writeln!(f, "lowest-confidence assignments:")?;
            for a in &self.lowest_confidence {
                writeln!(f, "  {}\t{}\t{}\t{:.4}", a.photo, a.face, a.celebrity, a.similarity)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForgeOutput {
    pub clusters: Vec<IdentityCluster>,
    pub manifest: Manifest,
    pub report: ForgeReport,
    /// Seeds after augmentation.
    pub seeds: SeedBank,
}

/// Cosine similarity over the embeddings already attached to the photos.
pub fn run_pipeline(
    photos: &[Photo],
    seeds: Vec<CelebritySeed>,
    config: &ForgeConfig,
) -> Result<ForgeOutput, ForgeError> {
    run_pipeline_with(photos, seeds, config, &PixelEngine)
}

pub fn run_pipeline_with<E: EmbeddingEngine + ?Sized>(
    photos: &[Photo],
    seeds: Vec<CelebritySeed>,
    config: &ForgeConfig,
    engine: &E,
) -> Result<ForgeOutput, ForgeError> {
    for p in photos {
        p.validate()?;
    }
    let mut bank = SeedBank::new(seeds)?;
    let seeds_added = augment_seeds(&mut bank, photos, config.threshold, config.aggregation, engine);

    let mut by_celeb: BTreeMap<String, Vec<AssignedFace>> = BTreeMap::new();
    let mut all = Vec::new();
    let mut unassigned = 0;
    for photo in photos {
        let pa = assign_faces(photo, &bank, config.threshold, config.aggregation, engine)?;
        unassigned += pa.unassigned.len();
        for a in pa.assigned {
            by_celeb.entry(a.celebrity.clone()).or_default().push(AssignedFace {
                photo: a.photo.clone(),
                face: a.face.clone(),
                similarity: a.similarity,
            });
            all.push(a);
        }
    }
    let clusters: Vec<IdentityCluster> = by_celeb
        .into_iter()
        .map(|(celebrity, faces)| IdentityCluster { celebrity, faces })
        .collect();
    let subjects_assigned = clusters.len();

    let before: Vec<String> = clusters.iter().map(|c| c.celebrity.clone()).collect();
    let clusters = filter_subjects(clusters, config.min_images);
    let removed_by_filter: Vec<String> = before
        .into_iter()
        .filter(|id| !clusters.iter().any(|c| &c.celebrity == id))
        .collect();

    let names: Vec<String> = clusters
        .iter()
        .map(|c| bank.get(&c.celebrity).map_or_else(String::new, |s| s.name.clone()))
        .collect();
    let drop: BTreeSet<usize> = dedup_against(&names, &config.external_names, config.max_distance)
        .into_iter()
        .collect();
    let removed_by_dedup = drop.iter().map(|&i| clusters[i].celebrity.clone()).collect();
    let clusters: Vec<IdentityCluster> = clusters
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !drop.contains(i))
        .map(|(_, c)| c)
        .collect();

    let photo_index: BTreeMap<&str, &Photo> = photos.iter().map(|p| (p.id.as_str(), p)).collect();
    let canonical_landmarks = LandmarkPair {
        p1: config.canonical.q1,
        p2: config.canonical.q2,
    };
    let mut records = Vec::new();
    for c in &clusters {
        for af in &c.faces {
            let photo = photo_index[af.photo.as_str()];
            let face = photo
                .faces
                .iter()
                .find(|f| f.id == af.face)
                .expect("assigned face exists");
            records.push(FaceRecord {
                path: photo.image.clone().unwrap_or_else(|| photo.id.clone()),
                subject: c.celebrity.clone(),
                landmarks: face.landmarks.unwrap_or(canonical_landmarks),
                mirrored: false,
            });
        }
    }
    let kept: BTreeSet<&str> = clusters.iter().map(|c| c.celebrity.as_str()).collect();
    let mut lowest: Vec<Assignment> = all
        .iter()
        .filter(|a| kept.contains(a.celebrity.as_str()))
        .cloned()
        .collect();
    lowest.sort_by(|a, b| a.similarity.total_cmp(&b.similarity));
    lowest.truncate(config.report_lowest);

    let report = ForgeReport {
        photos: photos.len(),
        faces: photos.iter().map(|p| p.faces.len()).sum(),
        seeds_added,
        assigned: all.len(),
        unassigned,
        subjects_assigned,
        removed_by_filter,
        removed_by_dedup,
        subjects_kept: clusters.len(),
        faces_kept: records.len(),
        lowest_confidence: lowest,
    };
    Ok(ForgeOutput {
        clusters,
        manifest: Manifest::new(records, config.canonical),
        report,
        seeds: bank,
    })
}
