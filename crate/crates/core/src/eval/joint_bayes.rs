//! Joint Bayesian verification.
//!
//! A centered sample of subject `i` is modelled as `x = mu_i + eps` with
//! `mu_i ~ N(0, S_mu)` shared by the subject and `eps ~ N(0, S_eps)` drawn per
//! sample. The two covariances are fitted by EM, and a pair is scored by the
//! log-likelihood ratio of "same subject" against "different subjects".

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use nalgebra::{Cholesky, DMatrix, DVector};

use super::pca::check_rows;
use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointBayesConfig {
    /// Added to the diagonal of `S_eps`.
    pub regularization: f64,
    pub max_iter: usize,
    /// Stop once the relative Frobenius change of the covariances falls
    /// below this.
    pub tolerance: f64,
}

impl Default for JointBayesConfig {
    fn default() -> Self {
        Self {
            regularization: 1e-6,
            max_iter: 100,
            tolerance: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointBayesModel {
    pub mean: Vec<f64>,
    pub s_mu: DMatrix<f64>,
    /// Includes the regularization.
    pub s_eps: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    a: DMatrix<f64>,
    g: DMatrix<f64>,
    c: f64,
}

fn chol(m: DMatrix<f64>, what: &'static str) -> Result<Cholesky<f64, nalgebra::Dyn>, EvalError> {
    Cholesky::new(m).ok_or(EvalError::Singular(what))
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn log_det(ch: &Cholesky<f64, nalgebra::Dyn>) -> f64 {
    2.0 * ch.l_dirty().diagonal().iter().map(|d| libm::log(*d)).sum::<f64>()
}

fn rel_change(old: &DMatrix<f64>, new: &DMatrix<f64>) -> (f64, f64) {
    ((new - old).norm(), new.norm())
}

impl JointBayesModel {
    /// Builds the scoring matrices for given covariances.
    pub fn from_covariances(mean: Vec<f64>, s_mu: DMatrix<f64>, s_eps: DMatrix<f64>) -> Result<Self, EvalError> {
        let d = mean.len();
        if s_mu.shape() != (d, d) || s_eps.shape() != (d, d) {
            return Err(EvalError::DimensionMismatch {
                expected: d,
                actual: s_mu.nrows(),
            });
        }
        let s = &s_mu + &s_eps;
        let s_ch = chol(s.clone(), "S_mu + S_eps")?;
        let mut joint = DMatrix::zeros(2 * d, 2 * d);
        joint.view_mut((0, 0), (d, d)).copy_from(&s);
        joint.view_mut((d, d), (d, d)).copy_from(&s);
        joint.view_mut((0, d), (d, d)).copy_from(&s_mu);
        joint.view_mut((d, 0), (d, d)).copy_from(&s_mu);
        let j_ch = chol(joint, "same-subject joint covariance")?;
        let j_inv = j_ch.inverse();
        let f_plus_g = j_inv.view((0, 0), (d, d)).into_owned();
        let mut g = j_inv.view((0, d), (d, d)).into_owned();
        symmetrize(&mut g);
        let mut a = s_ch.inverse() - f_plus_g;
        symmetrize(&mut a);
        let c = -0.5 * (log_det(&j_ch) - 2.0 * log_det(&s_ch));
        Ok(Self {
            mean,
            s_mu,
            s_eps,
            iterations: 0,
            converged: true,
            a,
            g,
            c,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn center(&self, x: &[f64]) -> Result<DVector<f64>, EvalError> {
        if x.len() != self.mean.len() {
            return Err(EvalError::DimensionMismatch {
                expected: self.mean.len(),
                actual: x.len(),
            });
        }
        Ok(DVector::from_iterator(x.len(), x.iter().zip(&self.mean).map(|(v, m)| v - m)))
    }

    /// `log p(x1, x2 | same) - log p(x1, x2 | different)`; exactly symmetric.
    pub fn score(&self, x1: &[f64], x2: &[f64]) -> Result<f64, EvalError> {
        let a = self.center(x1)?;
        let b = self.center(x2)?;
        let qa = a.dot(&(&self.a * &a));
        let qb = b.dot(&(&self.a * &b));
        let cross = a.dot(&(&self.g * &b)) + b.dot(&(&self.g * &a));
        Ok(0.5 * (qa + qb) - 0.5 * cross + self.c)
    }
}

pub fn jb_score(model: &JointBayesModel, x1: &[f64], x2: &[f64]) -> Result<f64, EvalError> {
    model.score(x1, x2)
}

/// EM fit of the two covariances from labelled samples.
pub fn fit_joint_bayes(
    data: &[Vec<f64>],
    labels: &[usize],
    config: &JointBayesConfig,
) -> Result<JointBayesModel, EvalError> {
    let d = check_rows(data)?;
    if labels.len() != data.len() {
        return Err(EvalError::DimensionMismatch {
            expected: data.len(),
            actual: labels.len(),
        });
    }
    if !(config.regularization >= 0.0) {
        return Err(EvalError::InvalidParameter("regularization must be nonnegative"));
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    if groups.len() < 2 {
        return Err(EvalError::NotEnoughSubjects(groups.len()));
    }
    if groups.values().all(|g| g.len() < 2) {
        return Err(EvalError::NoRepeatedSubject);
    }

    let n = data.len() as f64;
    let mut mean = alloc::vec![0.0; d];
    for row in data {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let centered: Vec<DVector<f64>> = data
        .iter()
        .map(|r| DVector::from_iterator(d, r.iter().zip(&mean).map(|(x, m)| x - m)))
        .collect();
    let subjects: Vec<&Vec<usize>> = groups.values().collect();
    let sums: Vec<DVector<f64>> = subjects
        .iter()
        .map(|g| g.iter().fold(DVector::zeros(d), |acc, &i| acc + &centered[i]))
        .collect();

    let reg = DMatrix::<f64>::identity(d, d) * config.regularization;

    // Start from the between-subject and pooled within-subject scatter.
    let mut s_mu = DMatrix::zeros(d, d);
    let mut s_eps = DMatrix::zeros(d, d);
    for (g, sum) in subjects.iter().zip(&sums) {
        let m = sum / g.len() as f64;
        s_mu += &m * m.transpose();
        for &i in g.iter() {
            let r = &centered[i] - &m;
            s_eps += &r * r.transpose();
        }
    }
    s_mu /= subjects.len() as f64;
    s_eps /= n;
    s_eps += &reg;

    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iter {
        iterations += 1;
        // Posterior of each identity: Cov = S_mu (m S_mu + S_eps)^-1 S_eps,
        // mean = S_mu (m S_mu + S_eps)^-1 sum_j x_j.
        let mut by_size: BTreeMap<usize, (DMatrix<f64>, DMatrix<f64>)> = BTreeMap::new();
        for g in &subjects {
            let m = g.len();
            if by_size.contains_key(&m) {
                continue;
            }
            let k = chol(&s_mu * m as f64 + &s_eps, "m * S_mu + S_eps")?;
            let gain = &s_mu * k.inverse();
            let mut cov = &gain * &s_eps;
            symmetrize(&mut cov);
            by_size.insert(m, (gain, cov));
        }
        let mut new_mu = DMatrix::zeros(d, d);
        let mut new_eps = DMatrix::zeros(d, d);
        for (g, sum) in subjects.iter().zip(&sums) {
            let (gain, cov) = &by_size[&g.len()];
            let mu_hat = gain * sum;
            new_mu += &mu_hat * mu_hat.transpose() + cov;
            for &i in g.iter() {
                let r = &centered[i] - &mu_hat;
                new_eps += &r * r.transpose() + cov;
            }
        }
        new_mu /= subjects.len() as f64;
        new_eps /= n;
        new_eps += &reg;
        symmetrize(&mut new_mu);
        symmetrize(&mut new_eps);
        let (dm, nm) = rel_change(&s_mu, &new_mu);
        let (de, ne) = rel_change(&s_eps, &new_eps);
        s_mu = new_mu;
        s_eps = new_eps;
        if dm + de <= config.tolerance * (nm + ne).max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    let mut model = JointBayesModel::from_covariances(mean, s_mu, s_eps)?;
    model.iterations = iterations;
    model.converged = converged;
    Ok(model)
}
