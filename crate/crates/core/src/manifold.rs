//! Projection families, their flat parameterization and retraction.
//!
//! Parameters are laid out as `[u]` for scaling, `[P row-major]` for the
//! unconstrained family and `[u, M row-major, u']` for scaling with an
//! orthonormal transform.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{bail_arg, FealmError, Result};
use crate::types::rows;
use crate::types::Constraint;

/// A realized projection `P ∈ R^{m×m'}` with the parameters it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProjectionRecord", into = "ProjectionRecord")]
pub struct ProjectionSpec {
    constraint: Constraint,
    params: Vec<f64>,
    matrix: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct ProjectionRecord {
    constraint: Constraint,
    params: Vec<f64>,
    #[serde(with = "rows")]
    matrix: DMatrix<f64>,
}

impl From<ProjectionSpec> for ProjectionRecord {
    fn from(s: ProjectionSpec) -> Self {
        Self {
            constraint: s.constraint,
            params: s.params,
            matrix: s.matrix,
        }
    }
}

impl TryFrom<ProjectionRecord> for ProjectionSpec {
    type Error = FealmError;

    fn try_from(r: ProjectionRecord) -> Result<Self> {
        let (m, mp) = r.matrix.shape();
        let p = param_count(r.constraint, m, mp);
        if r.params.len() != p {
            bail_arg!("projection has {} parameters, expected {p}", r.params.len());
        }
        Ok(Self {
            constraint: r.constraint,
            params: r.params,
            matrix: r.matrix,
        })
    }
}

impl ProjectionSpec {
    pub fn constraint(&self) -> Constraint {
        self.constraint
    }

    pub fn m(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn m_prime(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Per-attribute weights `w` (the diagonal of `P` under scaling).
    pub fn weights(&self) -> Option<Vec<f64>> {
        match self.constraint {
            Constraint::Scaling => Some(self.matrix.diagonal().iter().copied().collect()),
            Constraint::ScalingOrthoScaling => {
                let sm = (self.m() as f64).sqrt();
                Some(self.params[..self.m()].iter().map(|u| sm * u).collect())
            }
            Constraint::NoConstraint => None,
        }
    }

    /// `X P`.
    pub fn project(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x * &self.matrix
    }
}

pub fn param_count(constraint: Constraint, m: usize, m_prime: usize) -> usize {
    match constraint {
        Constraint::Scaling => m,
        Constraint::NoConstraint => m * m_prime,
        Constraint::ScalingOrthoScaling => m + m * m_prime + m_prime,
    }
}

/// A constraint family at fixed dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProjectionFamily {
    pub constraint: Constraint,
    pub m: usize,
    pub m_prime: usize,
}

impl ProjectionFamily {
    pub fn new(constraint: Constraint, m: usize, m_prime: usize) -> Result<Self> {
        if m == 0 || m_prime == 0 || m_prime > m {
            bail_arg!("need 1 <= m' <= m (m = {m}, m' = {m_prime})");
        }
        if constraint == Constraint::Scaling && m_prime != m {
            bail_arg!("the scaling constraint requires m' = m");
        }
        Ok(Self {
            constraint,
            m,
            m_prime,
        })
    }

    pub fn param_count(&self) -> usize {
        param_count(self.constraint, self.m, self.m_prime)
    }

    pub fn retract(&self, raw: &[f64]) -> Result<ProjectionSpec> {
        let (m, mp) = (self.m, self.m_prime);
        if raw.len() != self.param_count() {
            bail_arg!(
                "expected {} parameters, got {}",
                self.param_count(),
                raw.len()
            );
        }
        if raw.iter().any(|x| !x.is_finite()) {
            return Err(FealmError::Retraction("non-finite parameter".into()));
        }
        let (params, matrix) = match self.constraint {
            Constraint::Scaling => {
                let u = unit(raw, "u")?;
                let sm = (m as f64).sqrt();
                let matrix = DMatrix::from_diagonal(&u.iter().map(|x| sm * x).collect::<Vec<_>>().into());
                (u, matrix)
            }
            Constraint::NoConstraint => (raw.to_vec(), DMatrix::from_row_slice(m, mp, raw)),
            Constraint::ScalingOrthoScaling => {
                let u = unit(&raw[..m], "u")?;
                let frame = orthonormalize(DMatrix::from_row_slice(m, mp, &raw[m..m + m * mp]))?;
                let u2 = unit(&raw[m + m * mp..], "u'")?;
                let (sm, smp) = ((m as f64).sqrt(), (mp as f64).sqrt());
                let matrix = DMatrix::from_fn(m, mp, |i, j| sm * u[i] * frame[(i, j)] * smp * u2[j]);
                let mut params = u;
                params.extend(frame.transpose().iter());
                params.extend(u2);
                (params, matrix)
            }
        };
        Ok(ProjectionSpec {
            constraint: self.constraint,
            params,
            matrix,
        })
    }

    /// Unretracted random parameters: standard normal draws in layout order.
    pub fn random_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.param_count()).map(|_| rng.sample(StandardNormal)).collect()
    }

    /// Uniform on the unit-vector blocks, Q factor of a Gaussian matrix for `M`.
    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> ProjectionSpec {
        loop {
            if let Ok(spec) = self.retract(&self.random_params(rng)) {
                return spec;
            }
        }
    }

    /// Parameters whose projection keeps the data as is (up to a global
    /// scale for the unconstrained families with `m' < m`).
    pub fn identity_params(&self) -> Vec<f64> {
        let (m, mp) = (self.m, self.m_prime);
        let uniform = |d: usize| vec![1.0 / (d as f64).sqrt(); d];
        let eye: Vec<f64> = (0..m * mp).map(|i| if i / mp == i % mp { 1.0 } else { 0.0 }).collect();
        match self.constraint {
            Constraint::Scaling => uniform(m),
            Constraint::NoConstraint => eye,
            Constraint::ScalingOrthoScaling => {
                let mut p = uniform(m);
                p.extend(eye);
                p.extend(uniform(mp));
                p
            }
        }
    }
}

/// `P_0`: the identity matrix, stored under scaling with uniform `u` when the
/// run uses scaling and as an unconstrained `I_m` otherwise.
pub fn identity_projection(constraint: Constraint, m: usize) -> ProjectionSpec {
    let constraint = match constraint {
        Constraint::Scaling => Constraint::Scaling,
        _ => Constraint::NoConstraint,
    };
    let family = ProjectionFamily {
        constraint,
        m,
        m_prime: m,
    };
    ProjectionSpec {
        constraint,
        params: family.identity_params(),
        matrix: DMatrix::identity(m, m),
    }
}

fn unit(v: &[f64], block: &str) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 1e-300) {
        return Err(FealmError::Retraction(format!("zero-norm {block} block")));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

/// Thin QR with the diagonal of `R` made positive.
fn orthonormalize(a: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let qr = a.qr();
    let r = qr.r();
    let mut q = qr.q();
    let scale = r.diagonal().amax();
    for j in 0..q.ncols() {
        let d = r[(j, j)];
        if !(d.abs() > 1e-12 * scale) {
            return Err(FealmError::Retraction("rank-deficient M block".into()));
        }
        if d < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q)
}

/// `-λ1 Σ|P_ij| - λ2 Σ_i ‖P_i‖₂`.
pub fn penalty(spec: &ProjectionSpec, lambda1: f64, lambda2: f64) -> f64 {
    if lambda1 == 0.0 && lambda2 == 0.0 {
        return 0.0;
    }
    let p = spec.matrix();
    let l1: f64 = p.iter().map(|x| x.abs()).sum();
    let rows: f64 = p.row_iter().map(|r| r.norm()).sum();
    -lambda1 * l1 - lambda2 * rows
}
