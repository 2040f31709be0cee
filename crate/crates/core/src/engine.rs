//! The repeat loop that accumulates diverse projections, and everything that
//! turns its output into a finished artifact: layouts, clustering and
//! recommendation.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dissim::{GraphProfile, Timescales};
use crate::embed::{dr_dissim_matrix, embed_points, meta_embed, Embedding2D};
use crate::error::{bail_arg, FealmError, Result};
use crate::knn::{build_knn_graph, KnnGraph};
use crate::manifold::{identity_projection, ProjectionFamily, ProjectionSpec};
use crate::optimizer::{hybrid_solve, Objective};
use crate::types::{Constraint, DataMatrix, FealmConfig, RunArtifact};

const EARLY_STOP_RATIO: f64 = 0.05;
const KMEANS_RESTARTS: usize = 10;
const KMEANS_ITERS: usize = 300;

/// Progress of one repeat-loop iteration.
#[derive(Debug, Clone)]
pub struct IterationReport {
    pub index: usize,
    /// Objective value of the new projection (dissimilarity plus penalty).
    pub value: f64,
    /// Minimum NSD to all earlier graphs.
    pub min_dissim: f64,
    pub evaluations: usize,
}

/// Search output with the per-graph caches kept for later stages.
#[derive(Debug, Clone)]
pub struct SearchOutput {
    pub artifact: RunArtifact,
    pub profiles: Vec<GraphProfile>,
}

/// Runs the search; the artifact's layout and cluster fields stay empty.
pub fn fealm_run<R: Rng + ?Sized>(x: &DataMatrix, config: &FealmConfig, rng: &mut R) -> Result<RunArtifact> {
    Ok(fealm_search(x, config, rng, |_| {})?.artifact)
}

pub fn fealm_search<R, F>(x: &DataMatrix, config: &FealmConfig, rng: &mut R, mut on_iteration: F) -> Result<SearchOutput>
where
    R: Rng + ?Sized,
    F: FnMut(&IterationReport),
{
    let (n, m) = (x.n(), x.m());
    config.validate(n, m)?;
    let family = ProjectionFamily::new(config.constraint, m, config.resolved_m_prime(m))?;
    if config.constraint == Constraint::Scaling && config.lambda2 != 0.0 {
        log::warn!("lambda2 duplicates the L1 term under the scaling constraint");
    }
    let p = family.param_count();
    let n_init = config.resolved_n_init(p).min(config.n_evals);
    if n_init < p + 1 {
        bail_arg!(
            "the evaluation budget must cover at least p + 1 = {} random samples (n_evals = {}, n_init = {n_init})",
            p + 1,
            config.n_evals
        );
    }
    let q = config.q.min(n);
    let timescales = Timescales::netlsd_default();

    let mut projections = vec![identity_projection(config.constraint, m)];
    let mut profiles = vec![GraphProfile::new(build_knn_graph(x.values(), config.k)?, q, &timescales)?];
    let mut objective_values = Vec::new();
    let mut min_dissims: Vec<f64> = Vec::new();

    for index in 1..=config.r {
        let obj = Objective::new(x.values().clone(), family, profiles.clone(), config)?;
        let sol = hybrid_solve(&obj, n_init, config.n_evals, rng)?;
        let detail = obj.evaluate_detail(&sol.spec)?;
        if config.early_stop && min_dissims.len() >= 2 {
            let median = median(&min_dissims);
            if detail.min_dissim < EARLY_STOP_RATIO * median {
                log::info!(
                    "stopping after {} projections: new minimum dissimilarity {:.4e} is below {EARLY_STOP_RATIO} x median {median:.4e}",
                    index - 1,
                    detail.min_dissim
                );
                break;
            }
        }
        on_iteration(&IterationReport {
            index,
            value: sol.value,
            min_dissim: detail.min_dissim,
            evaluations: sol.trace.len(),
        });
        projections.push(sol.spec);
        profiles.push(detail.profile);
        objective_values.push(sol.value);
        min_dissims.push(detail.min_dissim);
    }

    let graph_dissim = pairwise_nsd(&profiles, config.beta)?;
    let artifact = RunArtifact {
        config: config.clone(),
        attribute_names: x.attribute_names().to_vec(),
        n_instances: n,
        projections,
        graphs: Some(profiles.iter().map(|p| p.graph().clone()).collect()),
        embeddings: Vec::new(),
        graph_dissim,
        dr_dissim: DMatrix::zeros(0, 0),
        clusters: Vec::new(),
        representatives: Vec::new(),
        meta_points: Vec::new(),
        objective_values,
    };
    Ok(SearchOutput { artifact, profiles })
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[mid - 1] + v[mid])
    } else {
        v[mid]
    }
}

/// Symmetric NSD matrix over cached graph profiles, filled in parallel.
pub fn pairwise_nsd(profiles: &[GraphProfile], beta: f64) -> Result<DMatrix<f64>> {
    let len = profiles.len();
    let pairs: Vec<(usize, usize)> = (0..len).flat_map(|i| (i + 1..len).map(move |j| (i, j))).collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| profiles[i].nsd(&profiles[j], beta))
        .collect::<Result<Vec<f64>>>()?;
    let mut d = DMatrix::zeros(len, len);
    for (&(i, j), v) in pairs.iter().zip(values) {
        d[(i, j)] = v;
        d[(j, i)] = v;
    }
    Ok(d)
}

/// Lays out every projection (seed + index), measures layout dissimilarity,
/// clusters the projections and lays out the layouts.
pub fn complete_artifact(artifact: &mut RunArtifact, x: &DataMatrix) -> Result<()> {
    let config = artifact.config.clone();
    if x.n() != artifact.n_instances || x.m() != artifact.attribute_names.len() {
        bail_arg!("data does not match the artifact");
    }
    let embeddings: Vec<Embedding2D> = artifact
        .projections
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            embed_points(
                &spec.project(x.values()),
                config.k,
                config.seed.wrapping_add(i as u64),
                config.layout_epochs,
            )
        })
        .collect::<Result<_>>()?;
    artifact.dr_dissim = dr_dissim_matrix(&embeddings, config.k, config.dr_measure)?;
    artifact.embeddings = embeddings.into_iter().map(|e| e.points).collect();
    let (clusters, representatives) =
        spectral_cluster(&artifact.graph_dissim, config.resolved_n_clusters(), config.seed)?;
    artifact.clusters = clusters;
    artifact.representatives = representatives;
    artifact.meta_points = meta_embed(&artifact.dr_dissim, config.seed, config.layout_epochs)?;
    Ok(())
}

/// Search plus layouts and recommendation, seeded from `config.seed`.
pub fn run_pipeline<F: FnMut(&IterationReport)>(
    x: &DataMatrix,
    config: &FealmConfig,
    on_iteration: F,
) -> Result<RunArtifact> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut artifact = fealm_search(x, config, &mut rng, on_iteration)?.artifact;
    complete_artifact(&mut artifact, x)?;
    Ok(artifact)
}

/// Cluster ids and representatives for an artifact's graph dissimilarities.
pub fn cluster_and_recommend(artifact: &RunArtifact, n_clusters: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    spectral_cluster(&artifact.graph_dissim, n_clusters, artifact.config.seed)
}

/// Normalized spectral clustering on `exp(-d² / 2σ²)` with σ the median
/// off-diagonal dissimilarity. Ids are numbered by first appearance;
/// representatives are cluster medoids, listed by cluster id.
pub fn spectral_cluster(d: &DMatrix<f64>, n_clusters: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = d.nrows();
    if d.ncols() != n {
        bail_arg!("dissimilarity matrix must be square");
    }
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    if n_clusters == 0 {
        bail_arg!("n_clusters must be positive");
    }
    let off: Vec<f64> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| d[(i, j)]).collect();
    if off.iter().all(|&v| v == 0.0) || n_clusters == 1 {
        let clusters = vec![0; n];
        let reps = medoids(d, &clusters, 1);
        return Ok((clusters, reps));
    }
    if n_clusters >= n {
        let ids: Vec<usize> = (0..n).collect();
        return Ok((ids.clone(), ids));
    }
    let mut sigma = median(&off);
    if sigma <= 0.0 {
        let positive: Vec<f64> = off.iter().copied().filter(|&v| v > 0.0).collect();
        sigma = positive.iter().sum::<f64>() / positive.len() as f64;
    }
    let w = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            (-d[(i, j)].powi(2) / (2.0 * sigma * sigma)).exp()
        }
    });
    let deg: Vec<f64> = (0..n).map(|i| w.row(i).sum().max(f64::MIN_POSITIVE)).collect();
    let norm = DMatrix::from_fn(n, n, |i, j| w[(i, j)] / (deg[i] * deg[j]).sqrt());
    let eig = SymmetricEigen::new(norm);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut u = DMatrix::zeros(n, n_clusters);
    for (c, &idx) in order.iter().take(n_clusters).enumerate() {
        let v = eig.eigenvectors.column(idx);
        let sign = if v[v.iamax()] < 0.0 { -1.0 } else { 1.0 };
        u.set_column(c, &(v * sign));
    }
    for mut row in u.row_iter_mut() {
        let len = row.norm();
        if len > 0.0 {
            row /= len;
        }
    }
    let raw = kmeans(&u, n_clusters, seed);
    let clusters = relabel(&raw);
    let count = clusters.iter().max().map_or(0, |m| m + 1);
    let reps = medoids(d, &clusters, count);
    Ok((clusters, reps))
}

fn relabel(raw: &[usize]) -> Vec<usize> {
    let mut map: Vec<(usize, usize)> = Vec::new();
    raw.iter()
        .map(|&c| match map.iter().find(|e| e.0 == c) {
            Some(&(_, id)) => id,
            None => {
                let id = map.len();
                map.push((c, id));
                id
            }
        })
        .collect()
}

/// Member with the least summed dissimilarity to its cluster, smallest index
/// on ties.
fn medoids(d: &DMatrix<f64>, clusters: &[usize], count: usize) -> Vec<usize> {
    (0..count)
        .map(|c| {
            let members: Vec<usize> = (0..clusters.len()).filter(|&i| clusters[i] == c).collect();
            let cost = |i: usize| members.iter().map(|&j| d[(i, j)]).sum::<f64>();
            members
                .iter()
                .copied()
                .min_by(|&a, &b| cost(a).total_cmp(&cost(b)).then(a.cmp(&b)))
                .expect("relabeled clusters are nonempty")
        })
        .collect()
}

fn sq_dist(u: &DMatrix<f64>, i: usize, c: &[f64]) -> f64 {
    u.row(i).iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Lloyd's algorithm from k-means++ seeds, best of several restarts.
fn kmeans(u: &DMatrix<f64>, k: usize, seed: u64) -> Vec<usize> {
    let (n, dim) = u.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let mut centers: Vec<Vec<f64>> = vec![u.row(rng.gen_range(0..n)).iter().copied().collect()];
        while centers.len() < k {
            let weights: Vec<f64> = (0..n)
                .map(|i| centers.iter().map(|c| sq_dist(u, i, c)).fold(f64::INFINITY, f64::min))
                .collect();
            let total: f64 = weights.iter().sum();
            let next = if total > 0.0 {
                let mut target = rng.gen_range(0.0..total);
                let mut pick = n - 1;
                for (i, w) in weights.iter().enumerate() {
                    if target < *w {
                        pick = i;
                        break;
                    }
                    target -= w;
                }
                pick
            } else {
                rng.gen_range(0..n)
            };
            centers.push(u.row(next).iter().copied().collect());
        }
        let mut assign = vec![0; n];
        for _ in 0..KMEANS_ITERS {
            let mut changed = false;
            for i in 0..n {
                let c = (0..k)
                    .min_by(|&a, &b| sq_dist(u, i, &centers[a]).total_cmp(&sq_dist(u, i, &centers[b])))
                    .expect("k >= 1");
                if c != assign[i] {
                    assign[i] = c;
                    changed = true;
                }
            }
            for (c, center) in centers.iter_mut().enumerate() {
                let members: Vec<usize> = (0..n).filter(|&i| assign[i] == c).collect();
                if members.is_empty() {
                    continue;
                }
                for (j, v) in center.iter_mut().enumerate().take(dim) {
                    *v = members.iter().map(|&i| u[(i, j)]).sum::<f64>() / members.len() as f64;
                }
            }
            if !changed {
                break;
            }
        }
        let inertia: f64 = (0..n).map(|i| sq_dist(u, i, &centers[assign[i]])).sum();
        if best.as_ref().map_or(true, |(b, _)| inertia < *b) {
            best = Some((inertia, assign));
        }
    }
    best.expect("at least one restart").1
}

/// Greedy max-min selection of `s` indices starting from 0.
pub fn filter_diverse(d: &DMatrix<f64>, s: usize) -> Result<Vec<usize>> {
    let n = d.nrows();
    if s > n {
        bail_arg!("cannot select {s} of {n} results");
    }
    let mut chosen = Vec::with_capacity(s);
    if s == 0 {
        return Ok(chosen);
    }
    chosen.push(0);
    while chosen.len() < s {
        let next = (0..n)
            .filter(|i| !chosen.contains(i))
            .map(|i| (i, chosen.iter().map(|&c| d[(i, c)]).fold(f64::INFINITY, f64::min)))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .expect("s <= n leaves a candidate")
            .0;
        chosen.push(next);
    }
    Ok(chosen)
}

/// `(v - v_base) / (v_best - v_base)`.
pub fn relative_accuracy(v: f64, v_base: f64, v_best: f64) -> Result<f64> {
    if v_best == v_base {
        return Err(FealmError::InvalidArgument(
            "relative accuracy is undefined when v_best equals v_base".into(),
        ));
    }
    Ok((v - v_base) / (v_best - v_base))
}

/// Mean fraction of each node's neighbors that share its label.
pub fn neighbor_purity(g: &KnnGraph, labels: &[usize]) -> f64 {
    let n = g.n();
    let total: f64 = (0..n)
        .map(|i| {
            let same = g.neighbors(i).iter().filter(|&&j| labels[j] == labels[i]).count();
            same as f64 / g.k() as f64
        })
        .sum();
    total / n as f64
}

/// Neighbor purity of the k-NN graph of `X P`.
pub fn projection_purity(x: &DMatrix<f64>, spec: &ProjectionSpec, k: usize, labels: &[usize]) -> Result<f64> {
    Ok(neighbor_purity(&build_knn_graph(&spec.project(x), k)?, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, DatasetKind, SpheresParams};
    use crate::types::validate_artifact;

    fn small_config(r: usize) -> FealmConfig {
        FealmConfig {
            k: 8,
            r,
            n_evals: 60,
            seed: 3,
            layout_epochs: 30,
            ..FealmConfig::default()
        }
    }

    fn small_data() -> DataMatrix {
        let p = SpheresParams {
            n_outer: 60,
            n_inner: 30,
            ..Default::default()
        };
        generate(DatasetKind::Spheres3Class, &p, 1).unwrap()
    }

    #[test]
    fn zero_repeats_keeps_only_identity() {
        let x = small_data();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = fealm_run(&x, &small_config(0), &mut rng).unwrap();
        assert_eq!(a.projections.len(), 1);
        assert_eq!(a.graphs.as_ref().unwrap().len(), 1);
        assert_eq!(a.graph_dissim.shape(), (1, 1));
        assert!(validate_artifact(&a).is_empty());
    }

    #[test]
    fn two_repeats_shape_and_consistency() {
        let x = small_data();
        let config = small_config(2);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let out = fealm_search(&x, &config, &mut rng, |_| {}).unwrap();
        let a = &out.artifact;
        assert_eq!(a.graph_dissim.shape(), (3, 3));
        assert_eq!(a.graph_dissim, a.graph_dissim.transpose());
        assert!(validate_artifact(a).is_empty(), "{:?}", validate_artifact(a));
        // the solver's value is the minimum NSD to earlier graphs plus the penalty
        for i in 1..3 {
            let min = (0..i).map(|j| a.graph_dissim[(i, j)]).fold(f64::INFINITY, f64::min);
            assert!((min - a.objective_values[i - 1]).abs() < 1e-9);
        }
    }

    #[test]
    fn pipeline_is_deterministic_and_valid() {
        let x = small_data();
        let config = small_config(3);
        let a = run_pipeline(&x, &config, |_| {}).unwrap();
        let b = run_pipeline(&x, &config, |_| {}).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert!(validate_artifact(&a).is_empty(), "{:?}", validate_artifact(&a));
        assert_eq!(a.embeddings.len(), 4);
        assert_eq!(a.meta_points.len(), 4);
    }

    #[test]
    fn tiny_budget_is_rejected() {
        let x = small_data();
        let config = FealmConfig {
            n_evals: 3,
            ..small_config(1)
        };
        assert!(fealm_run(&x, &config, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    fn blocks() -> DMatrix<f64> {
        let n = 10;
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                0.0
            } else if (i < 4) == (j < 4) {
                0.1 + 0.01 * ((i * j) % 5) as f64
            } else {
                2.0 + 0.01 * ((i + j) % 3) as f64
            }
        })
    }

    #[test]
    fn block_structure_is_recovered() {
        let (c, reps) = spectral_cluster(&blocks(), 2, 0).unwrap();
        let truth: Vec<usize> = (0..10).map(|i| if i < 4 { 0 } else { 1 }).collect();
        assert_eq!(c, truth);
        assert_eq!(reps.len(), 2);
        assert!(reps[0] < 4 && reps[1] >= 4);
    }

    #[test]
    fn clustering_edge_cases() {
        let d = blocks();
        let (c, reps) = spectral_cluster(&d, 10, 0).unwrap();
        assert_eq!(c, (0..10).collect::<Vec<_>>());
        assert_eq!(reps, (0..10).collect::<Vec<_>>());
        let (c, reps) = spectral_cluster(&DMatrix::zeros(5, 5), 3, 0).unwrap();
        assert_eq!(c, vec![0; 5]);
        assert_eq!(reps, vec![0]);
    }

    #[test]
    fn clustering_ignores_global_scale() {
        let d = blocks();
        let a = spectral_cluster(&d, 3, 5).unwrap();
        let b = spectral_cluster(&(d * 7.5), 3, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn singleton_medoid() {
        let d = blocks();
        let reps = medoids(&d, &[0, 0, 0, 0, 1, 1, 1, 1, 1, 2], 3);
        assert_eq!(reps[2], 9);
    }

    #[test]
    fn filter_examples() {
        let d = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 5.0, 1.0, 0.0, 1.0, 5.0, 1.0, 0.0]);
        assert_eq!(filter_diverse(&d, 1).unwrap(), vec![0]);
        assert_eq!(filter_diverse(&d, 2).unwrap(), vec![0, 2]);
        assert!(filter_diverse(&d, 4).is_err());
    }

    /// Follows every greedy path, branching on ties, and collects the
    /// sequences that end with a maximal selection.
    fn greedy_paths(d: &DMatrix<f64>, chosen: Vec<usize>, s: usize, out: &mut Vec<Vec<usize>>) {
        if chosen.len() == s {
            out.push(chosen);
            return;
        }
        let n = d.nrows();
        let score = |i: usize| chosen.iter().map(|&c| d[(i, c)]).fold(f64::INFINITY, f64::min);
        let best = (0..n).filter(|i| !chosen.contains(i)).map(score).fold(f64::NEG_INFINITY, f64::max);
        for i in (0..n).filter(|i| !chosen.contains(i) && score(*i) == best) {
            let mut next = chosen.clone();
            next.push(i);
            greedy_paths(d, next, s, out);
        }
    }

    #[test]
    fn filter_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let pts: Vec<[f64; 2]> = (0..5).map(|_| [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect();
            let d = DMatrix::from_fn(5, 5, |i, j| ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt());
            let mut paths = Vec::new();
            greedy_paths(&d, vec![0], 3, &mut paths);
            let got = filter_diverse(&d, 3).unwrap();
            assert!(paths.contains(&got));
            assert_eq!(got, filter_diverse(&d, 3).unwrap());
        }
    }

    #[test]
    fn relative_accuracy_examples() {
        assert_eq!(relative_accuracy(3.0, 1.0, 3.0).unwrap(), 1.0);
        assert_eq!(relative_accuracy(1.0, 1.0, 3.0).unwrap(), 0.0);
        assert_eq!(relative_accuracy(2.0, 1.0, 3.0).unwrap(), 0.5);
        assert!(relative_accuracy(2.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn purity_bounds() {
        let g = KnnGraph::new(vec![vec![1], vec![0], vec![3], vec![2]]).unwrap();
        assert_eq!(neighbor_purity(&g, &[0, 0, 1, 1]), 1.0);
        assert_eq!(neighbor_purity(&g, &[0, 1, 0, 1]), 0.0);
    }
}
