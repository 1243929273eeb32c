//! Identification and verification costs and within-batch pair sampling.
//!
//! The combined objective is the batch-mean softmax cross-entropy plus
//! `alpha` times the pair-mean contrastive cost
//!
//! ```text
//! genuine:  1/2 * |e1 - e2|^2
//! impostor: 1/2 * max(0, margin - |e1 - e2|)^2
//! ```

use alloc::vec::Vec;
use rand::seq::SliceRandom;

use crate::rng::rng_from;
use crate::tensor::{ShapeError, Tensor};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ObjectiveError {
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("embedding lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty batch")]
    EmptyBatch,
    #[error("pair ({0}, {1}) references a sample outside the batch")]
    PairOutOfRange(usize, usize),
    #[error("invalid objective config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    /// Weight of the contrastive term.
    pub alpha: f64,
    /// Distance beyond which impostor pairs cost nothing.
    pub margin: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            alpha: 3.2e-4,
            margin: 1.0,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(ObjectiveError::InvalidConfig("alpha must be nonnegative"));
        }
        if !(self.margin > 0.0) || !self.margin.is_finite() {
            return Err(ObjectiveError::InvalidConfig("margin must be positive"));
        }
        Ok(())
    }
}

/// An index pair within one batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
    pub genuine: bool,
}

/// A minibatch plus the pairs sampled inside it.
#[derive(Debug, Clone)]
pub struct PairBatch<'a> {
    pub images: Vec<&'a Tensor>,
    pub labels: Vec<usize>,
    pub pairs: Vec<Pair>,
}

impl PairBatch<'_> {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        if self.images.is_empty() {
            return Err(ObjectiveError::EmptyBatch);
        }
        if self.images.len() != self.labels.len() {
            return Err(ObjectiveError::LengthMismatch(
                self.images.len(),
                self.labels.len(),
            ));
        }
        for p in &self.pairs {
            if p.i >= self.labels.len() || p.j >= self.labels.len() {
                return Err(ObjectiveError::PairOutOfRange(p.i, p.j));
            }
            if p.genuine != (self.labels[p.i] == self.labels[p.j]) {
                return Err(ObjectiveError::InvalidConfig(
                    "pair genuine flag disagrees with labels",
                ));
            }
        }
        Ok(())
    }
}

/// `-log softmax(logits)[label]` and its gradient `softmax - onehot`.
pub fn softmax_loss(logits: &Tensor, label: usize) -> Result<(f64, Tensor), ObjectiveError> {
    let classes = logits.len();
    if label >= classes {
        return Err(ObjectiveError::LabelOutOfRange { label, classes });
    }
    let z = logits.data();
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| libm::exp(v - max)).collect();
    let sum: f64 = exps.iter().sum();
    let loss = libm::log(sum) - (z[label] - max);
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    Ok((loss, Tensor::from_vec(logits.shape(), grad)?))
}

/// Contrastive cost of one pair and its gradients with respect to both
/// embeddings. At zero distance the impostor gradient is taken as zero.
pub fn contrastive_loss(
    e1: &[f64],
    e2: &[f64],
    genuine: bool,
    margin: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>), ObjectiveError> {
    if e1.len() != e2.len() {
        return Err(ObjectiveError::LengthMismatch(e1.len(), e2.len()));
    }
    let diff: Vec<f64> = e1.iter().zip(e2).map(|(a, b)| a - b).collect();
    let sq: f64 = diff.iter().map(|d| d * d).sum();
    if genuine {
        let g1 = diff.clone();
        let g2 = diff.iter().map(|d| -d).collect();
        return Ok((0.5 * sq, g1, g2));
    }
    let dist = libm::sqrt(sq);
    let gap = margin - dist;
    if gap <= 0.0 || dist == 0.0 {
        let loss = if gap > 0.0 { 0.5 * gap * gap } else { 0.0 };
        return Ok((loss, alloc::vec![0.0; e1.len()], alloc::vec![0.0; e1.len()]));
    }
    let scale = -gap / dist;
    let g1: Vec<f64> = diff.iter().map(|d| scale * d).collect();
    let g2 = g1.iter().map(|g| -g).collect();
    Ok((0.5 * gap * gap, g1, g2))
}

/// Loss terms and their gradients with respect to every logit vector and
/// embedding of a batch.
#[derive(Debug, Clone)]
pub struct CombinedLoss {
    pub softmax: f64,
    pub contrastive: f64,
    pub total: f64,
    pub d_logits: Vec<Tensor>,
    pub d_embeddings: Vec<Vec<f64>>,
}

/// `mean softmax + alpha * mean contrastive`. With no pairs the contrastive
/// mean is zero.
pub fn combined_loss(
    embeddings: &[&[f64]],
    logits: &[&Tensor],
    labels: &[usize],
    pairs: &[Pair],
    config: &ObjectiveConfig,
) -> Result<CombinedLoss, ObjectiveError> {
    config.validate()?;
    let n = labels.len();
    if n == 0 {
        return Err(ObjectiveError::EmptyBatch);
    }
    if embeddings.len() != n || logits.len() != n {
        return Err(ObjectiveError::LengthMismatch(embeddings.len(), logits.len()));
    }
    let inv_n = 1.0 / n as f64;
    let mut softmax = 0.0;
    let mut d_logits = Vec::with_capacity(n);
    for (z, &y) in logits.iter().zip(labels) {
        let (l, mut g) = softmax_loss(z, y)?;
        softmax += l;
        g.scale(inv_n);
        d_logits.push(g);
    }
    softmax *= inv_n;

    let mut d_embeddings: Vec<Vec<f64>> = embeddings
        .iter()
        .map(|e| alloc::vec![0.0; e.len()])
        .collect();
    let mut contrastive = 0.0;
    if !pairs.is_empty() {
        let w = config.alpha / pairs.len() as f64;
        for p in pairs {
            if p.i >= n || p.j >= n {
                return Err(ObjectiveError::PairOutOfRange(p.i, p.j));
            }
            let (l, g1, g2) =
                contrastive_loss(embeddings[p.i], embeddings[p.j], p.genuine, config.margin)?;
            contrastive += l;
            for (d, g) in d_embeddings[p.i].iter_mut().zip(&g1) {
                *d += w * g;
            }
            for (d, g) in d_embeddings[p.j].iter_mut().zip(&g2) {
                *d += w * g;
            }
        }
        contrastive /= pairs.len() as f64;
    }
    Ok(CombinedLoss {
        softmax,
        contrastive,
        total: softmax + config.alpha * contrastive,
        d_logits,
        d_embeddings,
    })
}

/// Samples genuine and impostor pairs uniformly without replacement among all
/// within-batch index pairs `i < j`. When fewer eligible pairs exist than
/// requested, all of them are used. The result is sorted by `(i, j)`.
pub fn sample_pairs(labels: &[usize], seed: u64, positives: usize, negatives: usize) -> Vec<Pair> {
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            let p = Pair {
                i,
                j,
                genuine: labels[i] == labels[j],
            };
            if p.genuine {
                genuine.push(p);
            } else {
                impostor.push(p);
            }
        }
    }
    let mut rng = rng_from(seed);
    let mut out = Vec::with_capacity(positives + negatives);
    for (mut pool, want) in [(genuine, positives), (impostor, negatives)] {
        if want < pool.len() {
            let (chosen, _) = pool.partial_shuffle(&mut rng, want);
            out.extend_from_slice(chosen);
        } else {
            out.append(&mut pool);
        }
    }
    out.sort_unstable();
    out
}
