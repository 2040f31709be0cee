use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{bail_arg, FealmError, Result};

/// Family of admissible projection matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// Any `m x m'` matrix.
    NoConstraint,
    /// `P = diag(w)` with `w = sqrt(m) u`, `|u| = 1`.
    Scaling,
    /// `P = diag(w) M diag(v)` with orthonormal columns in `M`.
    ScalingOrthoScaling,
}

impl Constraint {
    pub fn as_str(&self) -> &'static str {
        match self {
            Constraint::NoConstraint => "no_constraint",
            Constraint::Scaling => "scaling",
            Constraint::ScalingOrthoScaling => "scaling_ortho_scaling",
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Constraint {
    type Err = FealmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "no_constraint" | "none" | "unconstrained" => Ok(Constraint::NoConstraint),
            "scaling" => Ok(Constraint::Scaling),
            "scaling_ortho_scaling" | "ortho" => Ok(Constraint::ScalingOrthoScaling),
            other => Err(FealmError::InvalidArgument(format!(
                "unknown constraint `{other}`"
            ))),
        }
    }
}

/// How two 2-D embeddings are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrMeasure {
    /// Neighbor-shape dissimilarity between k-NN graphs of the embeddings.
    #[default]
    Nsd,
    /// Procrustes disparity after optimal translation, scale and rotation.
    Procrustes,
}

impl FromStr for DrMeasure {
    type Err = FealmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nsd" => Ok(DrMeasure::Nsd),
            "procrustes" => Ok(DrMeasure::Procrustes),
            other => Err(FealmError::InvalidArgument(format!(
                "unknown dr measure `{other}`"
            ))),
        }
    }
}

/// Search and layout settings for one run.
///
/// `m_prime`, `n_init` and `n_clusters` are left unset to take their
/// data-dependent defaults (see the `resolved_*` accessors).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FealmConfig {
    pub k: usize,
    pub m_prime: Option<usize>,
    pub constraint: Constraint,
    pub beta: f64,
    pub q: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub r: usize,
    pub n_evals: usize,
    pub n_init: Option<usize>,
    pub n_clusters: Option<usize>,
    pub seed: u64,
    /// Stop repeating once a new solution's minimum dissimilarity drops below
    /// 5% of the median of the earlier ones.
    pub early_stop: bool,
    pub layout_epochs: usize,
    pub dr_measure: DrMeasure,
}

impl Default for FealmConfig {
    fn default() -> Self {
        Self {
            k: 15,
            m_prime: None,
            constraint: Constraint::Scaling,
            beta: 1.0,
            q: 50,
            lambda1: 0.0,
            lambda2: 0.0,
            r: 20,
            n_evals: 1000,
            n_init: None,
            n_clusters: None,
            seed: 0,
            early_stop: false,
            layout_epochs: 200,
            dr_measure: DrMeasure::Nsd,
        }
    }
}

impl FealmConfig {
    /// Latent dimension for data with `m` attributes. Scaling always keeps `m`;
    /// the other families default to 2 latent features.
    pub fn resolved_m_prime(&self, m: usize) -> usize {
        match self.constraint {
            Constraint::Scaling => m,
            _ => self.m_prime.unwrap_or(2.min(m)),
        }
    }

    /// Random samples drawn before simplex refinement: `10p + 1` by default.
    pub fn resolved_n_init(&self, p: usize) -> usize {
        self.n_init.unwrap_or(10 * p + 1)
    }

    pub fn resolved_n_clusters(&self) -> usize {
        self.n_clusters.unwrap_or(10.min(self.r + 1))
    }

    /// Checks the settings against a dataset of `n` rows and `m` attributes.
    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        if self.k == 0 || self.k >= n {
            bail_arg!("k must satisfy 1 <= k < n (k = {}, n = {n})", self.k);
        }
        if self.constraint == Constraint::Scaling {
            if let Some(mp) = self.m_prime {
                if mp != m {
                    log::warn!("m' = {mp} ignored under the scaling constraint (m' = m = {m})");
                }
            }
        }
        let mp = self.resolved_m_prime(m);
        if mp == 0 || mp > m {
            bail_arg!("m' must satisfy 1 <= m' <= m (m' = {mp}, m = {m})");
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            bail_arg!("beta must be a finite value >= 0");
        }
        if self.q < 2 {
            bail_arg!("q must be at least 2");
        }
        if !self.lambda1.is_finite() || !self.lambda2.is_finite() {
            bail_arg!("lambda1 and lambda2 must be finite");
        }
        if self.n_evals == 0 {
            bail_arg!("n_evals must be positive");
        }
        if self.n_init == Some(0) {
            bail_arg!("n_init must be positive");
        }
        if self.n_clusters == Some(0) {
            bail_arg!("n_clusters must be positive");
        }
        if self.layout_epochs == 0 {
            bail_arg!("layout_epochs must be positive");
        }
        Ok(())
    }
}
