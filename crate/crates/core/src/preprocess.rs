//! Column normalization and PCA pre-reduction.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{bail_arg, Result};
use crate::types::DataMatrix;

/// Z-scores every column with the sample (n−1) standard deviation.
///
/// Constant columns become all zeros; one warning per such column is
/// returned alongside the data.
pub fn zscore(x: &DataMatrix) -> Result<(DataMatrix, Vec<String>)> {
    let (values, constant) = zscore_values(x.values());
    let warnings = constant
        .into_iter()
        .map(|j| {
            let msg = format!("attribute `{}` is constant; mapped to zeros", x.attribute_names()[j]);
            log::warn!("{msg}");
            msg
        })
        .collect();
    Ok((x.with_values(values)?, warnings))
}

/// Returns the z-scored matrix and the indices of constant columns.
pub fn zscore_values(x: &DMatrix<f64>) -> (DMatrix<f64>, Vec<usize>) {
    let n = x.nrows();
    let mut out = x.clone();
    let mut constant = Vec::new();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
        let sd = var.sqrt();
        if !(sd > 1e-12 * mean.abs().max(1.0)) {
            constant.push(j);
            col.fill(0.0);
        } else {
            col.apply(|v| *v = (*v - mean) / sd);
        }
    }
    (out, constant)
}

/// Principal-component scores with their loadings.
#[derive(Debug, Clone)]
pub struct PcaResult {
    /// `n × d` scores, columns named `PC1..PCd`.
    pub scores: DataMatrix,
    /// `m × d` column-orthonormal loadings.
    pub loadings: DMatrix<f64>,
    /// Variance of each kept component, descending.
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

pub fn pca_reduce(x: &DataMatrix, target_dims: usize) -> Result<PcaResult> {
    let (n, m) = (x.n(), x.m());
    if target_dims == 0 || target_dims > m.min(n - 1) {
        bail_arg!("target_dims must be in 1..={} (got {target_dims})", m.min(n - 1));
    }
    let mut centered = x.values().clone();
    for mut col in centered.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let mut loadings = DMatrix::zeros(m, target_dims);
    let mut explained_variance = Vec::with_capacity(target_dims);
    for (c, &idx) in order.iter().take(target_dims).enumerate() {
        let mut v = eig.eigenvectors.column(idx).into_owned();
        // deterministic sign: largest-magnitude loading positive
        let lead = v.iamax();
        if v[lead] < 0.0 {
            v.neg_mut();
        }
        loadings.set_column(c, &v);
        explained_variance.push(eig.eigenvalues[idx].max(0.0));
    }
    let explained_variance_ratio = explained_variance
        .iter()
        .map(|v| if total > 0.0 { v / total } else { 0.0 })
        .collect();
    let names = (1..=target_dims).map(|i| format!("PC{i}")).collect();
    let scores = DataMatrix::new(centered * &loadings, names, x.labels().to_vec())?;
    Ok(PcaResult {
        scores,
        loadings,
        explained_variance,
        explained_variance_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, m: usize, seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DataMatrix::from_values(DMatrix::from_fn(n, m, |_, j| rng.gen_range(-1.0..1.0) * (j + 1) as f64)).unwrap()
    }

    #[test]
    fn three_point_column() {
        let x = DataMatrix::from_values(DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0])).unwrap();
        let (z, warnings) = zscore(&x).unwrap();
        assert!(warnings.is_empty());
        let col: Vec<f64> = z.values().iter().copied().collect();
        assert_eq!(col, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn constant_column_warns() {
        let x = DataMatrix::from_values(DMatrix::from_row_slice(3, 2, &[5.0, 1.0, 5.0, 2.0, 5.0, 4.0])).unwrap();
        let (z, warnings) = zscore(&x).unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(z.values().column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zscore_moments() {
        let (z, _) = zscore(&random(50, 4, 1)).unwrap();
        for col in z.values().column_iter() {
            let mean = col.mean();
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 49.0).sqrt();
            assert!(mean.abs() < 1e-9 && (sd - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rank_one_has_one_component() {
        let dir = [1.0, -2.0, 0.5];
        let x = DMatrix::from_fn(20, 3, |i, j| (i as f64 - 7.0) * dir[j]);
        let pca = pca_reduce(&DataMatrix::from_values(x).unwrap(), 1).unwrap();
        assert!((pca.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_rank_reconstructs() {
        let x = random(30, 5, 2);
        let pca = pca_reduce(&x, 5).unwrap();
        let v = &pca.loadings;
        assert!((v.transpose() * v - DMatrix::identity(5, 5)).amax() < 1e-10);
        let centered = {
            let mut c = x.values().clone();
            for mut col in c.column_iter_mut() {
                let mean = col.mean();
                col.add_scalar_mut(-mean);
            }
            c
        };
        assert!((&centered * v * v.transpose() - &centered).amax() < 1e-8);
    }

    #[test]
    fn variances_match_covariance_eigenvalues() {
        let x = random(100, 30, 3);
        let pca = pca_reduce(&x, 10).unwrap();
        // oracle: eigenvalues of the sample covariance via an independent route
        let n = 100.0;
        let means = x.values().row_mean();
        let mut cov = DMatrix::zeros(30, 30);
        for row in x.values().row_iter() {
            let d = row - &means;
            cov += d.transpose() * &d;
        }
        cov /= n - 1.0;
        let mut eig: Vec<f64> = cov.symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        for (got, want) in pca.explained_variance.iter().zip(&eig) {
            assert!((got - want).abs() < 1e-8);
        }
        // scores carry exactly those variances
        for (c, want) in pca.scores.values().column_iter().zip(&eig) {
            let var = c.iter().map(|v| v * v).sum::<f64>() / (n - 1.0);
            assert!((var - want).abs() < 1e-8);
        }
    }

    #[test]
    fn bad_target_dims() {
        let x = random(5, 8, 0);
        assert!(pca_reduce(&x, 0).is_err());
        assert!(pca_reduce(&x, 5).is_err());
        assert!(pca_reduce(&x, 4).is_ok());
    }

    proptest! {
        #[test]
        fn zscore_is_idempotent(seed in 0u64..500, n in 3usize..40, m in 1usize..5) {
            let (z1, _) = zscore(&random(n, m, seed)).unwrap();
            let (z2, _) = zscore(&z1).unwrap();
            prop_assert!((z1.values() - z2.values()).amax() < 1e-9);
        }

        #[test]
        fn pca_variances_non_increasing(seed in 0u64..500) {
            let pca = pca_reduce(&random(40, 6, seed), 6).unwrap();
            for w in pca.explained_variance.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
        }
    }
}
