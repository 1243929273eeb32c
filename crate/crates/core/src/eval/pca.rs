//! Principal component projection.

use alloc::vec::Vec;
use nalgebra::{DMatrix, SymmetricEigen};

use super::EvalError;

/// How many components to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Retain {
    Dim(usize),
    /// Smallest count whose eigenvalues hold at least this fraction of the
    /// total variance.
    Variance(f64),
}

impl Default for Retain {
    fn default() -> Self {
        Retain::Variance(0.95)
    }
}

/// Eigenvalues at or below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Orthonormal basis vectors, by decreasing eigenvalue.
    pub basis: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn retained_dim(&self) -> usize {
        self.basis.len()
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>, EvalError> {
        if v.len() != self.mean.len() {
            return Err(EvalError::DimensionMismatch {
                expected: self.mean.len(),
                actual: v.len(),
            });
        }
        Ok(self
            .basis
            .iter()
            .map(|b| b.iter().zip(v).zip(&self.mean).map(|((b, x), m)| b * (x - m)).sum())
            .collect())
    }
}

pub(crate) fn check_rows(data: &[Vec<f64>]) -> Result<usize, EvalError> {
    let dim = data.first().ok_or(EvalError::EmptySet("samples"))?.len();
    if dim == 0 {
        return Err(EvalError::InvalidParameter("zero-dimensional samples"));
    }
    for row in data {
        if row.len() != dim {
            return Err(EvalError::DimensionMismatch {
                expected: dim,
                actual: row.len(),
            });
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(EvalError::NonFinite);
        }
    }
    Ok(dim)
}

/// Covariance (divided by n) and mean of the rows.
pub(crate) fn covariance(data: &[Vec<f64>], dim: usize) -> (Vec<f64>, DMatrix<f64>) {
    let n = data.len() as f64;
    let mut mean = alloc::vec![0.0; dim];
    for row in data {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut cov = DMatrix::zeros(dim, dim);
    for row in data {
        for i in 0..dim {
            let di = row[i] - mean[i];
            for j in i..dim {
                cov[(i, j)] += di * (row[j] - mean[j]);
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            let v = cov[(i, j)] / n;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    (mean, cov)
}

/// Fits the mean and leading eigenvectors of the sample covariance. Each
/// basis vector is signed so its largest-magnitude entry (first on ties) is
/// positive. Directions without variance are never kept, so the retained
/// count may fall short of a requested `Dim`.
pub fn fit_pca(data: &[Vec<f64>], retain: Retain) -> Result<PcaModel, EvalError> {
    let dim = check_rows(data)?;
    match retain {
        Retain::Dim(0) => return Err(EvalError::InvalidParameter("retained dimension must be positive")),
        Retain::Dim(k) if k > dim => return Err(EvalError::InvalidParameter("retained dimension exceeds input")),
        Retain::Variance(f) if !(f > 0.0 && f <= 1.0) => {
            return Err(EvalError::InvalidParameter("variance fraction must lie in (0, 1]"))
        }
        _ => {}
    }
    let (mean, cov) = covariance(data, dim);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let rank = order
        .iter()
        .take_while(|&&k| eig.eigenvalues[k] > RANK_TOL * top && eig.eigenvalues[k] > 0.0)
        .count();
    let keep = match retain {
        Retain::Dim(k) => k.min(rank),
        Retain::Variance(f) => {
            let total: f64 = order[..rank].iter().map(|&k| eig.eigenvalues[k]).sum();
            let mut acc = 0.0;
            let mut count = 0;
            for &k in &order[..rank] {
                acc += eig.eigenvalues[k];
                count += 1;
                if acc >= f * total * (1.0 - 1e-12) {
                    break;
                }
            }
            count
        }
    };
    let mut basis = Vec::with_capacity(keep);
    let mut eigenvalues = Vec::with_capacity(keep);
    for &k in &order[..keep] {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let mut lead = 0;
        for i in 1..v.len() {
            if v[i].abs() > v[lead].abs() {
                lead = i;
            }
        }
        if v[lead] < 0.0 {
            for x in &mut v {
                *x = -*x;
            }
        }
        basis.push(v);
        eigenvalues.push(eig.eigenvalues[k]);
    }
    Ok(PcaModel {
        mean,
        basis,
        eigenvalues,
    })
}
