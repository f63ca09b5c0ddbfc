use super::covariance::CovarianceEstimate;
use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Leading eigenpairs of a site-by-site covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalComponents {
    /// Eigenvalues, largest first.
    pub values: Vec<f64>,
    /// Unit eigenvectors as columns, `J × k`.
    pub vectors: DMatrix<f64>,
}

impl PrincipalComponents {
    /// Site `j`'s coordinates `(√λ_1 v_1[j], …, √λ_k v_k[j])`; negative
    /// eigenvalues from rounding are treated as zero.
    pub fn site_scores(&self) -> Vec<Vec<f64>> {
        let scale: Vec<f64> = self.values.iter().map(|l| l.max(0.0).sqrt()).collect();
        (0..self.vectors.nrows())
            .map(|j| {
                scale
                    .iter()
                    .enumerate()
                    .map(|(c, s)| s * self.vectors[(j, c)])
                    .collect()
            })
            .collect()
    }
}

/// Flip `v` so its entries sum positive, falling back to the largest entry
/// when the sum vanishes. Depends only on the multiset of entries, so it is
/// unaffected by reordering sites.
fn orient(mut v: Vec<f64>) -> Vec<f64> {
    let sum: f64 = v.iter().sum();
    let flip = if sum.abs() > 1e-12 {
        sum < 0.0
    } else {
        let max = v
            .iter()
            .copied()
            .fold(0.0_f64, |m, x| if x.abs() > m.abs() { x } else { m });
        max < 0.0
    };
    if flip {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

pub fn principal_components(cov: &CovarianceEstimate, k: usize) -> Result<PrincipalComponents> {
    symmetric_top_k(&cov.matrix, k)
}

pub(crate) fn symmetric_top_k(m: &DMatrix<f64>, k: usize) -> Result<PrincipalComponents> {
    let j = m.nrows();
    if m.ncols() != j {
        return Err(Error::Precondition(
            "covariance matrix is not square".into(),
        ));
    }
    if k == 0 || k > j {
        return Err(Error::Precondition(format!(
            "requested {k} components of a {j}-site matrix"
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "covariance matrix has non-finite entries".into(),
        ));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym
        .try_symmetric_eigen(1e-14, 10_000)
        .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..j).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let mut vectors = DMatrix::zeros(j, k);
    for (c, &i) in order.iter().take(k).enumerate() {
        let v = orient(eig.eigenvectors.column(i).iter().copied().collect());
        for (r, x) in v.into_iter().enumerate() {
            vectors[(r, c)] = x;
        }
    }
    Ok(PrincipalComponents {
        values: order.iter().take(k).map(|&i| eig.eigenvalues[i]).collect(),
        vectors,
    })
}
