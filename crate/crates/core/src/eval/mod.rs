//! Scoring and evaluation: cosine, PCA and Joint Bayes scorers, threshold
//! metrics, and the pair, BLUFR and video protocols.

mod joint_bayes;
mod metrics;
mod pca;
mod protocol;

pub use joint_bayes::{fit_joint_bayes, jb_score, JointBayesConfig, JointBayesModel};
pub use metrics::{
    accuracy_at, aggregate_trials, auc, best_threshold, dir_at_far, fold_accuracy, mean_and_se, tenfold_accuracy,
    threshold_at_far, video_pair_score, vr_at_far, OpenSetScores, ScoreSet, TrialReport,
};
pub use pca::{fit_pca, PcaModel, Retain};
pub use protocol::{
    all_pairs_scores, eval_blufr, eval_pairs, eval_video, fit_scorer, run_scheme, BlufrReport, BlufrSettings,
    BlufrTrial, FoldReport, LabeledSet, PairSpec, Protocol, Scheme, SchemeConfig, SchemeReport, Scorer, VideoPair,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("{0} is empty")]
    EmptySet(&'static str),
    #[error("fold {0} is empty")]
    EmptyFold(usize),
    #[error("need at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("need at least 2 trials, got {0}")]
    TooFewTrials(usize),
    #[error("need at least 2 subjects, got {0}")]
    NotEnoughSubjects(usize),
    #[error("no subject has two or more samples; intra-personal covariance is unidentifiable")]
    NoRepeatedSubject,
    #[error("{0} is not positive definite")]
    Singular(&'static str),
    #[error("scheme {0} needs a fit corpus")]
    MissingFitCorpus(Scheme),
    #[error("index {0} is outside the embedding table")]
    IndexOutOfRange(usize),
    #[error("non-finite score or embedding")]
    NonFinite,
    #[error("{0}")]
    InvalidParameter(&'static str),
}

/// `a . b / (|a| |b|)`.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(EvalError::ZeroNorm);
    }
    Ok(dot / (libm::sqrt(na) * libm::sqrt(nb)))
}
