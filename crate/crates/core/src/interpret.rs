//! Signed per-attribute contributions contrasting a target group with a
//! background group (contrastive PCA with a mean-difference sign rule).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{bail_arg, Result};

const RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contributions {
    /// Unit-norm signed contribution per attribute.
    pub values: Vec<f64>,
    /// Leading eigenvalue of the contrast matrix.
    pub eigenvalue: f64,
}

fn group_stats(x: &DMatrix<f64>, rows: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
    let m = x.ncols();
    let len = rows.len() as f64;
    let mut mean = DVector::zeros(m);
    for &i in rows {
        mean += x.row(i).transpose();
    }
    mean /= len;
    let mut cov = DMatrix::zeros(m, m);
    for &i in rows {
        let d = x.row(i).transpose() - &mean;
        cov += &d * d.transpose();
    }
    cov /= len - 1.0;
    for j in 0..m {
        cov[(j, j)] += RIDGE;
    }
    (mean, cov)
}

/// Leading eigenvector of `C_target - α C_background`, with each entry's
/// magnitude signed by the direction of the target-minus-background mean.
pub fn contrastive_contributions(
    x: &DMatrix<f64>,
    target: &[usize],
    background: &[usize],
    alpha: f64,
) -> Result<Contributions> {
    let n = x.nrows();
    if target.len() < 2 || background.len() < 2 {
        bail_arg!("target and background need at least 2 instances each");
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        bail_arg!("alpha must be a finite value >= 0");
    }
    let mut seen = vec![0u8; n];
    for (&i, tag) in target.iter().map(|i| (i, 1u8)).chain(background.iter().map(|i| (i, 2u8))) {
        if i >= n {
            bail_arg!("instance index {i} out of range");
        }
        if seen[i] != 0 {
            bail_arg!("instance {i} appears twice or in both groups");
        }
        seen[i] = tag;
    }
    let (mean_t, cov_t) = group_stats(x, target);
    let (mean_b, cov_b) = group_stats(x, background);
    let eig = SymmetricEigen::new(cov_t - cov_b * alpha);
    let lead = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(lead);
    let values = (0..x.ncols())
        .map(|j| {
            let sign = if mean_t[j] - mean_b[j] < 0.0 { -1.0 } else { 1.0 };
            sign * v[j].abs()
        })
        .collect();
    Ok(Contributions {
        values,
        eigenvalue: eig.eigenvalues[lead],
    })
}

/// `(target, background)` index sets for each group: the rest of the
/// instances in the other groups by default, or one chosen group.
pub fn default_groups(groups: &[Vec<usize>], background: Option<usize>) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if let Some(b) = background {
        if b >= groups.len() {
            bail_arg!("background group {b} does not exist");
        }
        if groups.len() < 2 {
            bail_arg!("need a target group besides the background group");
        }
        return Ok(groups
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != b)
            .map(|(_, t)| (t.clone(), groups[b].clone()))
            .collect());
    }
    if groups.len() < 2 {
        bail_arg!("only one group defined; select a background group explicitly");
    }
    Ok((0..groups.len())
        .map(|g| {
            let rest = groups
                .iter()
                .enumerate()
                .filter(|(h, _)| *h != g)
                .flat_map(|(_, r)| r.iter().copied())
                .collect();
            (groups[g].clone(), rest)
        })
        .collect())
}

/// One contribution vector per target group.
pub fn group_contributions(
    x: &DMatrix<f64>,
    groups: &[Vec<usize>],
    background: Option<usize>,
    alpha: f64,
) -> Result<Vec<Contributions>> {
    default_groups(groups, background)?
        .iter()
        .map(|(t, b)| contrastive_contributions(x, t, b, alpha))
        .collect()
}
