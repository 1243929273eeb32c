//! Scoring schemes and evaluation protocols over a table of embeddings.
//!
//! Schemes:
//!
//! * `A`: cosine on the raw embeddings;
//! * `B`: PCA fitted on an external labelled corpus, then cosine;
//! * `C`: Joint Bayes fitted on an external labelled corpus;
//! * `D`: as `B`, fitted on the protocol's own training split;
//! * `E`: as `C`, fitted on the protocol's own training split.
//!
//! For 10-fold pair and video protocols the training split of a held-out
//! fold is every image used by the other nine folds; BLUFR trials list their
//! training images explicitly.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use super::joint_bayes::{fit_joint_bayes, JointBayesConfig, JointBayesModel};
use super::metrics::{aggregate_trials, dir_at_far, fold_accuracy, mean_and_se, vr_at_far, OpenSetScores, ScoreSet, TrialReport};
use super::pca::{fit_pca, PcaModel, Retain};
use super::{cosine, EvalError};
use crate::exec::BatchExecutor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Scheme {
    A,
    B,
    C,
    D,
    E,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::A, Scheme::B, Scheme::C, Scheme::D, Scheme::E];

    /// Whether the scheme is fitted on an external corpus.
    pub fn needs_external(self) -> bool {
        matches!(self, Scheme::B | Scheme::C)
    }

    /// Whether the scheme is fitted on the protocol's training split.
    pub fn fits_on_protocol(self) -> bool {
        matches!(self, Scheme::D | Scheme::E)
    }

    pub fn describe(self) -> &'static str {
        match self {
            Scheme::A => "cosine",
            Scheme::B => "PCA (external corpus) + cosine",
            Scheme::C => "Joint Bayes (external corpus)",
            Scheme::D => "PCA (training split) + cosine",
            Scheme::E => "Joint Bayes (training split)",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Scheme::A => "A",
            Scheme::B => "B",
            Scheme::C => "C",
            Scheme::D => "D",
            Scheme::E => "E",
        };
        f.write_str(c)
    }
}

impl FromStr for Scheme {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" | "a" => Ok(Scheme::A),
            "B" | "b" => Ok(Scheme::B),
            "C" | "c" => Ok(Scheme::C),
            "D" | "d" => Ok(Scheme::D),
            "E" | "e" => Ok(Scheme::E),
            _ => Err(EvalError::InvalidParameter("scheme must be one of A-E")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub pca: Retain,
    pub joint_bayes: JointBayesConfig,
    /// Projection applied before Joint Bayes; the default keeps every
    /// direction the fit corpus actually spans.
    pub jb_reduce: Option<Retain>,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            pca: Retain::default(),
            joint_bayes: JointBayesConfig::default(),
            jb_reduce: Some(Retain::Variance(1.0)),
        }
    }
}

/// Labelled embeddings used to fit a scheme.
#[derive(Debug, Clone, Copy)]
pub struct LabeledSet<'a> {
    pub vectors: &'a [Vec<f64>],
    pub labels: &'a [usize],
}

impl<'a> LabeledSet<'a> {
    pub fn new(vectors: &'a [Vec<f64>], labels: &'a [usize]) -> Result<Self, EvalError> {
        if vectors.len() != labels.len() {
            return Err(EvalError::DimensionMismatch {
                expected: vectors.len(),
                actual: labels.len(),
            });
        }
        Ok(Self { vectors, labels })
    }

    fn subset(&self, idx: &[usize]) -> Result<(Vec<Vec<f64>>, Vec<usize>), EvalError> {
        let mut v = Vec::with_capacity(idx.len());
        let mut l = Vec::with_capacity(idx.len());
        for &i in idx {
            if i >= self.vectors.len() {
                return Err(EvalError::IndexOutOfRange(i));
            }
            v.push(self.vectors[i].clone());
            l.push(self.labels[i]);
        }
        Ok((v, l))
    }
}

/// A fitted pair scorer. Embeddings are first mapped with
/// [`Scorer::prepare`], then compared.
#[derive(Debug, Clone, PartialEq)]
pub enum Scorer {
    Cosine,
    PcaCosine(PcaModel),
    JointBayes {
        reduce: Option<PcaModel>,
        model: JointBayesModel,
    },
}

impl Scorer {
    pub fn prepare(&self, v: &[f64]) -> Result<Vec<f64>, EvalError> {
        match self {
            Scorer::Cosine => Ok(v.to_vec()),
            Scorer::PcaCosine(p) => p.apply(v),
            Scorer::JointBayes { reduce: Some(p), .. } => p.apply(v),
            Scorer::JointBayes { reduce: None, .. } => Ok(v.to_vec()),
        }
    }

    pub fn compare(&self, a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
        match self {
            Scorer::Cosine | Scorer::PcaCosine(_) => cosine(a, b),
            Scorer::JointBayes { model, .. } => model.score(a, b),
        }
    }

    pub fn score(&self, a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
        self.compare(&self.prepare(a)?, &self.prepare(b)?)
    }
}

/// Fits the scorer of `scheme` on `corpus` (ignored by scheme A).
pub fn fit_scorer(scheme: Scheme, corpus: Option<LabeledSet<'_>>, config: &SchemeConfig) -> Result<Scorer, EvalError> {
    if scheme == Scheme::A {
        return Ok(Scorer::Cosine);
    }
    let corpus = corpus.ok_or(EvalError::MissingFitCorpus(scheme))?;
    match scheme {
        Scheme::B | Scheme::D => Ok(Scorer::PcaCosine(fit_pca(corpus.vectors, config.pca)?)),
        _ => {
            let reduce = config.jb_reduce.map(|r| fit_pca(corpus.vectors, r)).transpose()?;
            let data = match &reduce {
                Some(p) => corpus.vectors.iter().map(|v| p.apply(v)).collect::<Result<Vec<_>, _>>()?,
                None => corpus.vectors.to_vec(),
            };
            let model = fit_joint_bayes(&data, corpus.labels, &config.joint_bayes)?;
            Ok(Scorer::JointBayes { reduce, model })
        }
    }
}

fn prepare_all<X: BatchExecutor>(scorer: &Scorer, vectors: &[Vec<f64>], exec: &X) -> Result<Vec<Vec<f64>>, EvalError> {
    exec.map(vectors.len(), |i| scorer.prepare(&vectors[i])).into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairSpec {
    pub a: usize,
    pub b: usize,
    pub genuine: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoPair {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub genuine: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlufrTrial {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub gallery: Vec<usize>,
    pub probes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Protocol {
    Pairs(Vec<Vec<PairSpec>>),
    Blufr(Vec<BlufrTrial>),
    Video(Vec<Vec<VideoPair>>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlufrSettings {
    pub verification_far: f64,
    pub identification_far: f64,
    pub rank: usize,
}

impl Default for BlufrSettings {
    fn default() -> Self {
        Self {
            verification_far: 0.001,
            identification_far: 0.01,
            rank: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldReport {
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlufrReport {
    pub verification: TrialReport,
    pub identification: TrialReport,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SchemeReport {
    Folds(FoldReport),
    Blufr(BlufrReport),
}

/// Anything scored by a fitted scorer over prepared embeddings.
trait Comparison: Sync {
    fn images(&self) -> Vec<usize>;
    fn genuine(&self) -> bool;
    fn score(&self, scorer: &Scorer, prepared: &[Vec<f64>]) -> Result<f64, EvalError>;
}

impl Comparison for PairSpec {
    fn images(&self) -> Vec<usize> {
        alloc::vec![self.a, self.b]
    }

    fn genuine(&self) -> bool {
        self.genuine
    }

    fn score(&self, scorer: &Scorer, prepared: &[Vec<f64>]) -> Result<f64, EvalError> {
        scorer.compare(&prepared[self.a], &prepared[self.b])
    }
}

impl Comparison for VideoPair {
    fn images(&self) -> Vec<usize> {
        self.a.iter().chain(&self.b).copied().collect()
    }

    fn genuine(&self) -> bool {
        self.genuine
    }

    fn score(&self, scorer: &Scorer, prepared: &[Vec<f64>]) -> Result<f64, EvalError> {
        super::metrics::video_pair_score(&self.a, &self.b, |&i, &j| scorer.compare(&prepared[i], &prepared[j]))
    }
}

fn check_indices<C: Comparison>(folds: &[Vec<C>], n: usize) -> Result<(), EvalError> {
    for c in folds.iter().flatten() {
        if let Some(&bad) = c.images().iter().find(|&&i| i >= n) {
            return Err(EvalError::IndexOutOfRange(bad));
        }
    }
    Ok(())
}

fn score_folds<C: Comparison, X: BatchExecutor>(
    folds: &[Vec<C>],
    scorer: &Scorer,
    prepared: &[Vec<f64>],
    exec: &X,
) -> Result<Vec<Vec<(f64, bool)>>, EvalError> {
    folds
        .iter()
        .map(|fold| {
            exec.map(fold.len(), |k| fold[k].score(scorer, prepared).map(|s| (s, fold[k].genuine())))
                .into_iter()
                .collect()
        })
        .collect()
}

fn eval_folds<C: Comparison, X: BatchExecutor>(
    scheme: Scheme,
    data: LabeledSet<'_>,
    folds: &[Vec<C>],
    external: Option<LabeledSet<'_>>,
    config: &SchemeConfig,
    exec: &X,
) -> Result<FoldReport, EvalError> {
    if folds.len() < 2 {
        return Err(EvalError::TooFewFolds(folds.len()));
    }
    if let Some(k) = folds.iter().position(Vec::is_empty) {
        return Err(EvalError::EmptyFold(k));
    }
    check_indices(folds, data.vectors.len())?;
    let mut accs = Vec::with_capacity(folds.len());
    if scheme.fits_on_protocol() {
        for k in 0..folds.len() {
            let train: BTreeSet<usize> = folds
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .flat_map(|(_, f)| f.iter().flat_map(|c| c.images()))
                .collect();
            let idx: Vec<usize> = train.into_iter().collect();
            let (v, l) = data.subset(&idx)?;
            let scorer = fit_scorer(scheme, Some(LabeledSet::new(&v, &l)?), config)?;
            let prepared = prepare_all(&scorer, data.vectors, exec)?;
            let scores = score_folds(folds, &scorer, &prepared, exec)?;
            let train_scores: Vec<(f64, bool)> = scores
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .flat_map(|(_, f)| f.iter().copied())
                .collect();
            accs.push(fold_accuracy(&train_scores, &scores[k])?);
        }
    } else {
        let scorer = fit_scorer(scheme, external, config)?;
        let prepared = prepare_all(&scorer, data.vectors, exec)?;
        let scores = score_folds(folds, &scorer, &prepared, exec)?;
        for k in 0..folds.len() {
            let train: Vec<(f64, bool)> = scores
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .flat_map(|(_, f)| f.iter().copied())
                .collect();
            accs.push(fold_accuracy(&train, &scores[k])?);
        }
    }
    let (mean, standard_error) = mean_and_se(&accs);
    Ok(FoldReport {
        fold_accuracies: accs,
        mean,
        standard_error,
    })
}

/// 10-fold pair verification accuracy.
pub fn eval_pairs<X: BatchExecutor>(
    scheme: Scheme,
    data: LabeledSet<'_>,
    folds: &[Vec<PairSpec>],
    external: Option<LabeledSet<'_>>,
    config: &SchemeConfig,
    exec: &X,
) -> Result<FoldReport, EvalError> {
    eval_folds(scheme, data, folds, external, config, exec)
}

/// 10-fold video pair verification accuracy; a pair scores the mean over all
/// frame combinations.
pub fn eval_video<X: BatchExecutor>(
    scheme: Scheme,
    data: LabeledSet<'_>,
    folds: &[Vec<VideoPair>],
    external: Option<LabeledSet<'_>>,
    config: &SchemeConfig,
    exec: &X,
) -> Result<FoldReport, EvalError> {
    for p in folds.iter().flatten() {
        if p.a.is_empty() || p.b.is_empty() {
            return Err(EvalError::EmptySet("video frames"));
        }
    }
    eval_folds(scheme, data, folds, external, config, exec)
}

/// Scores of all unordered pairs within `test`, split by identity.
pub fn all_pairs_scores<X: BatchExecutor>(
    scorer: &Scorer,
    prepared: &[Vec<f64>],
    labels: &[usize],
    test: &[usize],
    exec: &X,
) -> Result<ScoreSet, EvalError> {
    let rows = exec.map(test.len(), |i| -> Result<Vec<(f64, bool)>, EvalError> {
        let a = test[i];
        test[i + 1..]
            .iter()
            .map(|&b| Ok((scorer.compare(&prepared[a], &prepared[b])?, labels[a] == labels[b])))
            .collect()
    });
    let mut set = ScoreSet::default();
    for row in rows {
        for (s, g) in row? {
            if g {
                set.genuine.push(s);
            } else {
                set.impostor.push(s);
            }
        }
    }
    Ok(set)
}

/// BLUFR-style evaluation: per trial, VR at the verification FAR over all
/// test pairs and DIR at the identification FAR and rank for the open-set
/// split, aggregated as mean minus standard deviation.
pub fn eval_blufr<X: BatchExecutor>(
    scheme: Scheme,
    data: LabeledSet<'_>,
    trials: &[BlufrTrial],
    external: Option<LabeledSet<'_>>,
    config: &SchemeConfig,
    settings: &BlufrSettings,
    exec: &X,
) -> Result<BlufrReport, EvalError> {
    let n = data.vectors.len();
    for t in trials {
        for &i in t.train.iter().chain(&t.test).chain(&t.gallery).chain(&t.probes) {
            if i >= n {
                return Err(EvalError::IndexOutOfRange(i));
            }
        }
    }
    let shared = if scheme.fits_on_protocol() {
        None
    } else {
        Some(fit_scorer(scheme, external, config)?)
    };
    let mut vrs = Vec::with_capacity(trials.len());
    let mut dirs = Vec::with_capacity(trials.len());
    for t in trials {
        let fitted;
        let scorer = match &shared {
            Some(s) => s,
            None => {
                let (v, l) = data.subset(&t.train)?;
                fitted = fit_scorer(scheme, Some(LabeledSet::new(&v, &l)?), config)?;
                &fitted
            }
        };
        let prepared = prepare_all(scorer, data.vectors, exec)?;
        let pairs = all_pairs_scores(scorer, &prepared, data.labels, &t.test, exec)?;
        vrs.push(vr_at_far(&pairs, settings.verification_far)?);
        let scores = exec
            .map(t.probes.len(), |p| -> Result<Vec<f64>, EvalError> {
                t.gallery
                    .iter()
                    .map(|&g| scorer.compare(&prepared[t.probes[p]], &prepared[g]))
                    .collect()
            })
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        let open = OpenSetScores {
            gallery_labels: t.gallery.iter().map(|&g| data.labels[g]).collect(),
            probe_labels: t.probes.iter().map(|&p| data.labels[p]).collect(),
            scores,
        };
        dirs.push(dir_at_far(&open, settings.identification_far, settings.rank)?);
    }
    Ok(BlufrReport {
        verification: aggregate_trials(&vrs)?,
        identification: aggregate_trials(&dirs)?,
    })
}

/// Evaluates one scheme under one protocol.
pub fn run_scheme<X: BatchExecutor>(
    scheme: Scheme,
    data: LabeledSet<'_>,
    protocol: &Protocol,
    external: Option<LabeledSet<'_>>,
    config: &SchemeConfig,
    exec: &X,
) -> Result<SchemeReport, EvalError> {
    match protocol {
        Protocol::Pairs(f) => eval_pairs(scheme, data, f, external, config, exec).map(SchemeReport::Folds),
        Protocol::Video(f) => eval_video(scheme, data, f, external, config, exec).map(SchemeReport::Folds),
        Protocol::Blufr(t) => {
            eval_blufr(scheme, data, t, external, config, &BlufrSettings::default(), exec).map(SchemeReport::Blufr)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use alloc::vec;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Subjects are Gaussian clusters whose within-subject noise is strong
    /// along a few nuisance axes, so learned metrics have something to fix.
    fn clustered(seed: u64, subjects: usize, per: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = crate::rng::rng_from(seed);
        let mut v = Vec::new();
        let mut l = Vec::new();
        for s in 0..subjects {
            let c: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            for _ in 0..per {
                v.push(
                    c.iter()
                        .enumerate()
                        .map(|(j, x)| {
                            let scale = if j < 2 { 3.0 } else { 0.4 };
                            x + scale * { let z: f64 = StandardNormal.sample(&mut rng); z } + 2.0
                        })
                        .collect(),
                );
                l.push(s);
            }
        }
        (v, l)
    }

    fn pair_folds(labels: &[usize], seed: u64, per_fold: usize) -> Vec<Vec<PairSpec>> {
        let mut rng = crate::rng::rng_from(seed);
        let n = labels.len();
        (0..10)
            .map(|_| {
                let mut f = Vec::new();
                while f.len() < per_fold {
                    let a = rng.gen_range(0..n);
                    let b = rng.gen_range(0..n);
                    let genuine = labels[a] == labels[b];
                    if a == b || (f.len() % 2 == 0) != genuine {
                        continue;
                    }
                    f.push(PairSpec { a, b, genuine });
                }
                f
            })
            .collect()
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("C".parse::<Scheme>().unwrap(), Scheme::C);
        assert!("F".parse::<Scheme>().is_err());
        assert_eq!(alloc::format!("{}", Scheme::E), "E");
    }

    #[test]
    fn full_rank_pca_matches_cosine_on_centered_data() {
        let (v, l) = clustered(1, 10, 5, 4);
        let corpus = LabeledSet::new(&v, &l).unwrap();
        let cfg = SchemeConfig {
            pca: Retain::Dim(4),
            ..SchemeConfig::default()
        };
        let Scorer::PcaCosine(p) = fit_scorer(Scheme::B, Some(corpus), &cfg).unwrap() else {
            panic!("expected PCA scorer");
        };
        let scorer = Scorer::PcaCosine(p.clone());
        for i in 0..10 {
            let a: Vec<f64> = v[i].iter().zip(&p.mean).map(|(x, m)| x - m).collect();
            let b: Vec<f64> = v[i + 20].iter().zip(&p.mean).map(|(x, m)| x - m).collect();
            let direct = cosine(&a, &b).unwrap();
            assert!((scorer.score(&v[i], &v[i + 20]).unwrap() - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_corpus_is_an_error() {
        for s in [Scheme::B, Scheme::C] {
            assert_eq!(fit_scorer(s, None, &SchemeConfig::default()), Err(EvalError::MissingFitCorpus(s)));
        }
        assert_eq!(fit_scorer(Scheme::A, None, &SchemeConfig::default()), Ok(Scorer::Cosine));
    }

    #[test]
    fn learned_schemes_beat_cosine_on_structured_noise() {
        let (v, l) = clustered(2, 60, 6, 8);
        let data = LabeledSet::new(&v, &l).unwrap();
        let folds = pair_folds(&l, 3, 60);
        let cfg = SchemeConfig::default();
        let a = eval_pairs(Scheme::A, data, &folds, None, &cfg, &Sequential).unwrap();
        let e = eval_pairs(Scheme::E, data, &folds, None, &cfg, &Sequential).unwrap();
        assert!(e.mean >= a.mean, "E {} vs A {}", e.mean, a.mean);
        let (xv, xl) = clustered(9, 60, 6, 8);
        // Different subjects, same nuisance structure.
        let ext = LabeledSet::new(&xv, &xl).unwrap();
        let c = eval_pairs(Scheme::C, data, &folds, Some(ext), &cfg, &Sequential).unwrap();
        assert!(c.mean >= a.mean, "C {} vs A {}", c.mean, a.mean);
    }

    #[test]
    fn blufr_and_video_run() {
        let (v, l) = clustered(4, 30, 6, 6);
        let data = LabeledSet::new(&v, &l).unwrap();
        let trials: Vec<BlufrTrial> = (0..3)
            .map(|t| {
                let train: Vec<usize> = (0..v.len()).filter(|i| l[*i] % 3 == t).collect();
                let test: Vec<usize> = (0..v.len()).filter(|i| l[*i] % 3 != t).collect();
                let gallery: Vec<usize> = test.iter().copied().filter(|i| i % 6 == 0 && l[*i] % 2 == 0).collect();
                let probes: Vec<usize> = test.iter().copied().filter(|i| i % 6 != 0).collect();
                BlufrTrial { train, test, gallery, probes }
            })
            .collect();
        for scheme in [Scheme::A, Scheme::D, Scheme::E] {
            let r = eval_blufr(scheme, data, &trials, None, &SchemeConfig::default(), &BlufrSettings::default(), &Sequential).unwrap();
            assert_eq!(r.verification.values.len(), 3);
            assert!((0.0..=1.0).contains(&r.identification.mu));
        }
        let folds: Vec<Vec<VideoPair>> = (0..10)
            .map(|k| {
                let s = k % 30;
                let t = (k + 1) % 30;
                vec![
                    VideoPair { a: vec![s * 6, s * 6 + 1], b: vec![s * 6 + 2, s * 6 + 3, s * 6 + 4], genuine: true },
                    VideoPair { a: vec![s * 6 + 5], b: vec![t * 6, t * 6 + 1], genuine: false },
                ]
            })
            .collect();
        let r = eval_video(Scheme::A, data, &folds, None, &SchemeConfig::default(), &Sequential).unwrap();
        assert_eq!(r.fold_accuracies.len(), 10);
    }

    #[test]
    fn out_of_range_indices_rejected() {
        let v = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let l = vec![0, 1];
        let data = LabeledSet::new(&v, &l).unwrap();
        let folds = vec![vec![PairSpec { a: 0, b: 5, genuine: false }]; 2];
        assert_eq!(
            eval_pairs(Scheme::A, data, &folds, None, &SchemeConfig::default(), &Sequential),
            Err(EvalError::IndexOutOfRange(5))
        );
    }
}
