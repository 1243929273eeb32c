//! Threshold-based verification and open-set identification metrics.
//!
//! Operating thresholds for a target false accept rate are drawn from the
//! observed scores (or `+inf`), and a score passes a threshold `t` when
//! `score >= t`. Accuracy-maximizing boundaries are also observed scores,
//! with a pair accepted when its score is strictly above. Metrics therefore
//! depend on the scores only through their order.

use alloc::vec::Vec;

use super::EvalError;

/// Genuine and impostor comparison scores.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
}

impl ScoreSet {
    pub fn from_labeled<I: IntoIterator<Item = (f64, bool)>>(scores: I) -> Self {
        let mut s = Self::default();
        for (score, genuine) in scores {
            if genuine {
                s.genuine.push(score);
            } else {
                s.impostor.push(score);
            }
        }
        s
    }

    fn check(&self) -> Result<(), EvalError> {
        if self.genuine.is_empty() {
            return Err(EvalError::EmptySet("genuine scores"));
        }
        if self.impostor.is_empty() {
            return Err(EvalError::EmptySet("impostor scores"));
        }
        check_finite(&self.genuine)?;
        check_finite(&self.impostor)
    }
}

fn check_finite(scores: &[f64]) -> Result<(), EvalError> {
    if scores.iter().all(|s| s.is_finite()) {
        Ok(())
    } else {
        Err(EvalError::NonFinite)
    }
}

fn check_far(far: f64) -> Result<(), EvalError> {
    if (0.0..=1.0).contains(&far) {
        Ok(())
    } else {
        Err(EvalError::InvalidParameter("far must lie in [0, 1]"))
    }
}

/// Smallest candidate threshold whose pass fraction over `negatives` is at
/// most `far`. Candidates are every negative and positive score plus `+inf`.
pub fn threshold_at_far(negatives: &[f64], positives: &[f64], far: f64) -> f64 {
    let mut neg = negatives.to_vec();
    neg.sort_by(f64::total_cmp);
    let n = neg.len() as f64;
    let mut cand: Vec<f64> = negatives.iter().chain(positives).copied().collect();
    cand.sort_by(f64::total_cmp);
    cand.dedup();
    // Number of negatives at or above t.
    let passing = |t: f64| neg.len() - neg.partition_point(|&x| x < t);
    let feasible = |t: f64| passing(t) as f64 / n <= far;
    // Feasibility only improves as t grows.
    let first = cand.partition_point(|&t| !feasible(t));
    cand.get(first).copied().unwrap_or(f64::INFINITY)
}

fn pass_fraction(scores: &[f64], t: f64) -> f64 {
    scores.iter().filter(|&&s| s >= t).count() as f64 / scores.len() as f64
}

/// Verification rate at the conservative threshold for the given false
/// accept rate.
pub fn vr_at_far(scores: &ScoreSet, far: f64) -> Result<f64, EvalError> {
    scores.check()?;
    check_far(far)?;
    let t = threshold_at_far(&scores.impostor, &scores.genuine, far);
    Ok(pass_fraction(&scores.genuine, t))
}

/// Scores of every probe against every gallery entry, with identities.
/// Probe labels of subjects absent from the gallery mark unknown probes.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenSetScores {
    pub gallery_labels: Vec<usize>,
    pub probe_labels: Vec<usize>,
    /// `scores[p][g]`.
    pub scores: Vec<Vec<f64>>,
}

impl OpenSetScores {
    fn check(&self) -> Result<(), EvalError> {
        if self.gallery_labels.is_empty() {
            return Err(EvalError::EmptySet("gallery"));
        }
        if self.scores.len() != self.probe_labels.len() {
            return Err(EvalError::DimensionMismatch {
                expected: self.probe_labels.len(),
                actual: self.scores.len(),
            });
        }
        for row in &self.scores {
            if row.len() != self.gallery_labels.len() {
                return Err(EvalError::DimensionMismatch {
                    expected: self.gallery_labels.len(),
                    actual: row.len(),
                });
            }
            check_finite(row)?;
        }
        Ok(())
    }

    /// `(subject, best score)` per gallery subject for one probe, in order of
    /// first appearance in the gallery.
    fn subject_best(&self, probe: usize) -> Vec<(usize, f64)> {
        let mut best: Vec<(usize, f64)> = Vec::new();
        for (g, &label) in self.gallery_labels.iter().enumerate() {
            let s = self.scores[probe][g];
            match best.iter_mut().find(|(l, _)| *l == label) {
                Some(entry) => entry.1 = entry.1.max(s),
                None => best.push((label, s)),
            }
        }
        best
    }
}

/// Detection and identification rate. The threshold is set on the best
/// gallery score of the unknown probes; a known probe counts when its best
/// gallery score passes the threshold and its own subject ranks within
/// `rank` (rank = 1 + number of other subjects with a strictly higher best
/// score).
pub fn dir_at_far(scores: &OpenSetScores, far: f64, rank: usize) -> Result<f64, EvalError> {
    scores.check()?;
    check_far(far)?;
    if rank == 0 {
        return Err(EvalError::InvalidParameter("rank starts at 1"));
    }
    let mut unknown_best = Vec::new();
    let mut known = Vec::new();
    for p in 0..scores.probe_labels.len() {
        let best = scores.subject_best(p);
        let top = best.iter().map(|b| b.1).fold(f64::NEG_INFINITY, f64::max);
        match best.iter().find(|(l, _)| *l == scores.probe_labels[p]) {
            Some(&(_, own)) => {
                let r = 1 + best.iter().filter(|(l, s)| *l != scores.probe_labels[p] && *s > own).count();
                known.push((top, r));
            }
            None => unknown_best.push(top),
        }
    }
    if unknown_best.is_empty() {
        return Err(EvalError::EmptySet("unknown probes"));
    }
    if known.is_empty() {
        return Err(EvalError::EmptySet("known probes"));
    }
    let known_top: Vec<f64> = known.iter().map(|k| k.0).collect();
    let t = threshold_at_far(&unknown_best, &known_top, far);
    let hits = known.iter().filter(|(top, r)| *top >= t && *r <= rank).count();
    Ok(hits as f64 / known.len() as f64)
}

/// Decision boundary maximizing accuracy on labelled scores: the largest
/// score to reject, so a pair is called genuine when its score is strictly
/// greater. `-inf` accepts everything. Among equally accurate boundaries the
/// smallest wins.
pub fn best_threshold(scores: &[(f64, bool)]) -> f64 {
    let mut sorted: Vec<(f64, bool)> = scores.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total_gen = sorted.iter().filter(|s| s.1).count();
    let mut best_b = f64::NEG_INFINITY;
    let mut best_correct = total_gen;
    let mut gen_rejected = 0;
    let mut imp_rejected = 0;
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == v {
            if sorted[i].1 {
                gen_rejected += 1;
            } else {
                imp_rejected += 1;
            }
            i += 1;
        }
        let correct = (total_gen - gen_rejected) + imp_rejected;
        if correct > best_correct {
            best_correct = correct;
            best_b = v;
        }
    }
    best_b
}

/// Fraction of labelled scores classified correctly by the boundary `b`
/// (genuine when `score > b`).
pub fn accuracy_at(scores: &[(f64, bool)], b: f64) -> f64 {
    let correct = scores.iter().filter(|(s, g)| (*s > b) == *g).count();
    correct as f64 / scores.len() as f64
}

/// Accuracy on `test` at the threshold chosen on `train`.
pub fn fold_accuracy(train: &[(f64, bool)], test: &[(f64, bool)]) -> Result<f64, EvalError> {
    if test.is_empty() {
        return Err(EvalError::EmptySet("test fold"));
    }
    for s in train.iter().chain(test) {
        if !s.0.is_finite() {
            return Err(EvalError::NonFinite);
        }
    }
    Ok(accuracy_at(test, best_threshold(train)))
}

/// Mean computed around the first value, exact when all values agree.
fn stable_mean(v: &[f64]) -> f64 {
    let v0 = v[0];
    v0 + v.iter().map(|x| x - v0).sum::<f64>() / v.len() as f64
}

/// Mean and standard error of per-fold accuracies.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    // Sorting first makes the result independent of fold order.
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = stable_mean(&v);
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, libm::sqrt(var) / libm::sqrt(n))
}

/// Leave-one-fold-out accuracy: each fold is scored at the boundary that
/// maximizes accuracy on all other folds (see [`best_threshold`]). Returns `(mean, standard error)`.
pub fn tenfold_accuracy(folds: &[Vec<(f64, bool)>]) -> Result<(f64, f64), EvalError> {
    if folds.len() < 2 {
        return Err(EvalError::TooFewFolds(folds.len()));
    }
    if let Some(k) = folds.iter().position(Vec::is_empty) {
        return Err(EvalError::EmptyFold(k));
    }
    let mut accs = Vec::with_capacity(folds.len());
    for k in 0..folds.len() {
        let train: Vec<(f64, bool)> = folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        accs.push(fold_accuracy(&train, &folds[k])?);
    }
    Ok(mean_and_se(&accs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub values: Vec<f64>,
    pub mu: f64,
    pub sigma: f64,
    /// `mu - sigma`.
    pub reported: f64,
}

/// Mean, sample standard deviation and their difference over trials.
pub fn aggregate_trials(values: &[f64]) -> Result<TrialReport, EvalError> {
    if values.len() < 2 {
        return Err(EvalError::TooFewTrials(values.len()));
    }
    let n = values.len() as f64;
    let mu = stable_mean(values);
    let sigma = libm::sqrt(values.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n - 1.0));
    Ok(TrialReport {
        values: values.to_vec(),
        mu,
        sigma,
        reported: mu - sigma,
    })
}

/// Mean score over all frame pairs of two videos.
pub fn video_pair_score<T, F>(frames_a: &[T], frames_b: &[T], mut scorer: F) -> Result<f64, EvalError>
where
    F: FnMut(&T, &T) -> Result<f64, EvalError>,
{
    if frames_a.is_empty() || frames_b.is_empty() {
        return Err(EvalError::EmptySet("video frames"));
    }
    let mut total = 0.0;
    for a in frames_a {
        for b in frames_b {
            total += scorer(a, b)?;
        }
    }
    Ok(total / (frames_a.len() * frames_b.len()) as f64)
}

/// Area under the ROC curve: probability that a random genuine score beats a
/// random impostor score, ties counting one half.
pub fn auc(scores: &ScoreSet) -> Result<f64, EvalError> {
    scores.check()?;
    let mut all: Vec<(f64, bool)> = scores
        .genuine
        .iter()
        .map(|&s| (s, true))
        .chain(scores.impostor.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Sum of midranks of the genuine scores.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let mid = (i + j + 1) as f64 / 2.0;
        rank_sum += mid * all[i..j].iter().filter(|s| s.1).count() as f64;
        i = j;
    }
    let ng = scores.genuine.len() as f64;
    let ni = scores.impostor.len() as f64;
    Ok((rank_sum - ng * (ng + 1.0) / 2.0) / (ng * ni))
}
