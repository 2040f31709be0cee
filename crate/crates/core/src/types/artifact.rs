use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::rows;
use super::FealmConfig;
use crate::knn::KnnGraph;
use crate::manifold::ProjectionSpec;

/// Everything one run produces. Every per-projection list is indexed the same
/// way and index 0 is always the identity projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub config: FealmConfig,
    pub attribute_names: Vec<String>,
    pub n_instances: usize,
    pub projections: Vec<ProjectionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graphs: Option<Vec<KnnGraph>>,
    pub embeddings: Vec<Vec<[f64; 2]>>,
    #[serde(with = "rows")]
    pub graph_dissim: DMatrix<f64>,
    #[serde(with = "rows")]
    pub dr_dissim: DMatrix<f64>,
    pub clusters: Vec<usize>,
    pub representatives: Vec<usize>,
    pub meta_points: Vec<[f64; 2]>,
    /// Objective value reached by each learned projection (indices 1..).
    pub objective_values: Vec<f64>,
}

impl RunArtifact {
    pub fn len(&self) -> usize {
        self.projections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projections.is_empty()
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string(self)
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

fn check_dissim(name: &str, d: &DMatrix<f64>, len: usize, out: &mut Vec<String>) {
    if d.shape() != (len, len) {
        out.push(format!(
            "{name} is {}x{}, expected {len}x{len}",
            d.nrows(),
            d.ncols()
        ));
        return;
    }
    for i in 0..len {
        if d[(i, i)] != 0.0 {
            out.push(format!("{name}[{i}][{i}] = {} is not zero", d[(i, i)]));
        }
        for j in 0..len {
            let v = d[(i, j)];
            if !v.is_finite() {
                out.push(format!("{name}[{i}][{j}] is not finite"));
            } else if v < 0.0 {
                out.push(format!("{name}[{i}][{j}] = {v} is negative"));
            }
            if j > i && d[(i, j)] != d[(j, i)] {
                out.push(format!("{name} is asymmetric at pair ({i}, {j})"));
            }
        }
    }
}

/// Lists every broken invariant; an empty list means the artifact is valid.
///
/// Embedding, layout and cluster fields may be left empty (as produced by
/// the search stage alone) but must be complete when present.
pub fn validate_artifact(a: &RunArtifact) -> Vec<String> {
    let mut out = Vec::new();
    let len = a.projections.len();
    let m = a.attribute_names.len();
    if len == 0 {
        out.push("artifact has no projections".into());
    }
    for (i, p) in a.projections.iter().enumerate() {
        if p.m() != m {
            out.push(format!("projection {i} has {} rows, expected {m}", p.m()));
        }
        if p.matrix().iter().any(|x| !x.is_finite()) {
            out.push(format!("projection {i} has non-finite entries"));
        }
    }
    if let Some(p0) = a.projections.first() {
        if p0.matrix() != &DMatrix::identity(p0.m(), p0.m_prime()) || p0.m() != p0.m_prime() {
            out.push("projection 0 is not the identity".into());
        }
    }
    if let Some(graphs) = &a.graphs {
        if graphs.len() != len {
            out.push(format!("{} graphs for {len} projections", graphs.len()));
        }
        for (i, g) in graphs.iter().enumerate() {
            if g.n() != a.n_instances || g.k() != a.config.k {
                out.push(format!(
                    "graph {i} has n = {}, k = {}; expected n = {}, k = {}",
                    g.n(),
                    g.k(),
                    a.n_instances,
                    a.config.k
                ));
            }
        }
    }
    if a.objective_values.len() + 1 != len.max(1) {
        out.push(format!(
            "{} objective values for {len} projections",
            a.objective_values.len()
        ));
    }
    check_dissim("graph_dissim", &a.graph_dissim, len, &mut out);

    if !a.embeddings.is_empty() {
        if a.embeddings.len() != len {
            out.push(format!("{} embeddings for {len} projections", a.embeddings.len()));
        }
        for (i, e) in a.embeddings.iter().enumerate() {
            if e.len() != a.n_instances {
                out.push(format!("embedding {i} has {} points, expected {}", e.len(), a.n_instances));
            }
            if e.iter().flatten().any(|x| !x.is_finite()) {
                out.push(format!("embedding {i} has non-finite coordinates"));
            }
        }
    }
    if a.dr_dissim.len() > 0 || !a.embeddings.is_empty() {
        check_dissim("dr_dissim", &a.dr_dissim, len, &mut out);
    }
    if !a.meta_points.is_empty() && a.meta_points.len() != len {
        out.push(format!("{} meta points for {len} projections", a.meta_points.len()));
    }
    if a.meta_points.iter().flatten().any(|x| !x.is_finite()) {
        out.push("meta points have non-finite coordinates".into());
    }

    if !a.clusters.is_empty() || !a.representatives.is_empty() {
        if a.clusters.len() != len {
            out.push(format!("{} cluster ids for {len} projections", a.clusters.len()));
        }
        let mut ids: Vec<usize> = a.clusters.clone();
        ids.sort_unstable();
        ids.dedup();
        if a.representatives.len() != ids.len() {
            out.push(format!(
                "{} representatives for {} nonempty clusters",
                a.representatives.len(),
                ids.len()
            ));
        }
        let mut covered = Vec::new();
        for &r in &a.representatives {
            match a.clusters.get(r) {
                None => out.push(format!("representative {r} is out of range")),
                Some(c) if covered.contains(c) => {
                    out.push(format!("cluster {c} has more than one representative"))
                }
                Some(c) => covered.push(*c),
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::identity_projection;
    use crate::types::Constraint;

    fn tiny() -> RunArtifact {
        let d = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]);
        RunArtifact {
            config: FealmConfig {
                k: 1,
                ..FealmConfig::default()
            },
            attribute_names: vec!["a".into(), "b".into()],
            n_instances: 3,
            projections: vec![
                identity_projection(Constraint::Scaling, 2),
                identity_projection(Constraint::Scaling, 2),
            ],
            graphs: Some(vec![
                KnnGraph::new(vec![vec![1], vec![0], vec![1]]).unwrap(),
                KnnGraph::new(vec![vec![2], vec![2], vec![0]]).unwrap(),
            ]),
            embeddings: vec![vec![[0.0, 1.0]; 3], vec![[0.1, 0.2]; 3]],
            graph_dissim: d.clone(),
            dr_dissim: d,
            clusters: vec![0, 1],
            representatives: vec![0, 1],
            meta_points: vec![[0.0, 0.0], [0.1, 1.0 / 3.0]],
            objective_values: vec![0.5],
        }
    }

    #[test]
    fn valid_artifact_has_no_violations() {
        assert_eq!(validate_artifact(&tiny()), Vec::<String>::new());
    }

    #[test]
    fn asymmetric_dissimilarity_names_the_pair() {
        let mut a = tiny();
        a.graph_dissim[(0, 1)] = 0.7;
        let v = validate_artifact(&a);
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("(0, 1)"), "{v:?}");
    }

    #[test]
    fn negative_entry_is_reported() {
        let mut a = tiny();
        a.dr_dissim[(0, 1)] = -0.5;
        a.dr_dissim[(1, 0)] = -0.5;
        let v = validate_artifact(&a);
        assert!(v.iter().any(|s| s.contains("negative")), "{v:?}");
    }

    #[test]
    fn representative_count_is_checked() {
        let mut a = tiny();
        a.representatives = vec![0];
        assert!(!validate_artifact(&a).is_empty());
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut a = tiny();
        a.meta_points[1] = [std::f64::consts::PI, 1e-300];
        a.objective_values[0] = 0.1 + 0.2;
        let json = a.to_json().unwrap();
        let back = RunArtifact::from_json(&json).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.to_json().unwrap(), json);
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in [
            "config",
            "projections",
            "embeddings",
            "graph_dissim",
            "dr_dissim",
            "clusters",
            "representatives",
            "meta_points",
            "attribute_names",
        ] {
            assert!(value.get(key).is_some(), "missing {key}");
        }
        assert_eq!(value["graph_dissim"][0][1], 0.5);
        assert_eq!(value["graphs"][1][0][0], 2);
    }
}
