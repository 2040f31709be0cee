//! A compact UMAP: fuzzy neighbor graph, spectral initialization and
//! negative-sampling SGD. Also the dissimilarity between two layouts and the
//! layout of the layouts themselves.

use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dissim::{GraphProfile, Timescales};
use crate::error::{bail_arg, Result};
use crate::knn::{build_knn_graph, knn_with_distances, KnnGraph, KnnMethod};
use crate::optimizer::adaptive_nelder_mead;
use crate::types::DrMeasure;

const BISECTION_TOL: f64 = 1e-5;
const BISECTION_STEPS: usize = 64;
const NEGATIVE_SAMPLE_RATE: usize = 5;
const MIN_DIST: f64 = 0.1;
const SPREAD: f64 = 1.0;
const GRAD_CLIP: f64 = 4.0;
/// Components up to this size get a spectral start; larger ones start random.
const SPECTRAL_INIT_LIMIT: usize = 1500;
const COMPONENT_SPACING: f64 = 30.0;

/// Symmetric weighted graph with weights in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyGraph {
    rows: Vec<Vec<(usize, f64)>>,
}

impl FuzzyGraph {
    /// Builds from directed memberships by probabilistic union
    /// `a + b - a b`.
    pub fn from_directed(directed: &[Vec<(usize, f64)>]) -> Self {
        let n = directed.len();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let lookup = |i: usize, j: usize| -> f64 {
            directed[i].iter().find(|e| e.0 == j).map_or(0.0, |e| e.1)
        };
        for (i, row) in directed.iter().enumerate() {
            for &(j, a) in row {
                if i == j {
                    continue;
                }
                let b = lookup(j, i);
                if b > 0.0 && j < i {
                    // pair already handled from the other side
                    continue;
                }
                let w = union(a, b);
                if w > 0.0 {
                    rows[i].push((j, w));
                    rows[j].push((i, w));
                }
            }
        }
        for r in &mut rows {
            r.sort_by(|a, b| a.0.cmp(&b.0));
        }
        Self { rows }
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.rows[i].iter().find(|e| e.0 == j).map_or(0.0, |e| e.1)
    }

    /// Each undirected edge once, as `(i, j, w)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                if i < j {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    fn components(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut head = 0;
            while head < comp.len() {
                let u = comp[head];
                head += 1;
                for &(v, _) in &self.rows[u] {
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}

pub fn union(a: f64, b: f64) -> f64 {
    a + b - a * b
}

/// Per-node calibration of neighbor memberships.
#[derive(Debug, Clone)]
pub(crate) struct Calibration {
    /// `(neighbor, membership)` per node, nearest first.
    pub memberships: Vec<Vec<(usize, f64)>>,
    #[cfg_attr(not(test), allow(dead_code))]
    pub failures: usize,
}

/// Solves for `σ_i` so that `Σ_j exp(-max(0, d_ij - ρ_i) / σ_i) = log2(k)`.
pub(crate) fn calibrate(lists: &[Vec<usize>], dists: &[Vec<f64>], k: usize) -> Calibration {
    let target = (k as f64).log2();
    let mut memberships = Vec::with_capacity(lists.len());
    let mut failures = 0;
    for (list, d) in lists.iter().zip(dists) {
        let r = d.first().copied().unwrap_or(0.0);
        let total = |s: f64| d.iter().map(|&x| (-(x - r).max(0.0) / s).exp()).sum::<f64>();
        let (mut lo, mut hi, mut mid) = (0.0, f64::INFINITY, 1.0);
        let mut ok = false;
        for _ in 0..BISECTION_STEPS {
            let s = total(mid);
            if (s - target).abs() < BISECTION_TOL {
                ok = true;
                break;
            }
            if s > target {
                hi = mid;
                mid = (lo + hi) / 2.0;
            } else {
                lo = mid;
                mid = if hi.is_infinite() { mid * 2.0 } else { (lo + hi) / 2.0 };
            }
        }
        if !ok {
            failures += 1;
        }
        memberships.push(
            list.iter()
                .zip(d)
                .map(|(&j, &x)| (j, (-(x - r).max(0.0) / mid).exp()))
                .collect(),
        );
    }
    if failures > 0 {
        log::warn!("membership calibration did not converge for {failures} node(s); using last iterate");
    }
    Calibration {
        memberships,
        failures,
    }
}

/// Fuzzy neighbor graph of the rows of `x`.
pub fn fuzzy_graph(x: &DMatrix<f64>, k: usize) -> Result<FuzzyGraph> {
    let (lists, dists) = knn_with_distances(x, k, KnnMethod::BruteForce)?;
    Ok(FuzzyGraph::from_directed(&calibrate(&lists, &dists, k).memberships))
}

/// Fuzzy neighbor graph from a precomputed symmetric distance matrix.
pub fn fuzzy_graph_from_distances(d: &DMatrix<f64>, k: usize) -> Result<FuzzyGraph> {
    let n = d.nrows();
    if d.ncols() != n {
        bail_arg!("distance matrix must be square");
    }
    if k == 0 || k >= n {
        bail_arg!("k must satisfy 1 <= k < n (k = {k}, n = {n})");
    }
    let mut lists = Vec::with_capacity(n);
    let mut dists = Vec::with_capacity(n);
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| d[(i, a)].total_cmp(&d[(i, b)]).then(a.cmp(&b)));
        order.truncate(k);
        dists.push(order.iter().map(|&j| d[(i, j)]).collect());
        lists.push(order);
    }
    Ok(FuzzyGraph::from_directed(&calibrate(&lists, &dists, k).memberships))
}

/// A 2-D layout and the settings that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding2D {
    pub points: Vec<[f64; 2]>,
    pub seed: u64,
    pub epochs: usize,
}

/// Parameters `(a, b)` of the curve `1 / (1 + a d^{2b})` fitted to the
/// target membership profile for `min_dist = 0.1`, `spread = 1`.
pub fn curve_params() -> (f64, f64) {
    static PARAMS: OnceLock<(f64, f64)> = OnceLock::new();
    *PARAMS.get_or_init(|| fit_curve(SPREAD, MIN_DIST))
}

fn fit_curve(spread: f64, min_dist: f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * spread * i as f64 / 299.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| if x < min_dist { 1.0 } else { (-(x - min_dist) / spread).exp() })
        .collect();
    let sse = |p: &[f64]| -> f64 {
        let (a, b) = (p[0], p[1]);
        if a <= 0.0 || b <= 0.0 {
            return f64::NEG_INFINITY;
        }
        -xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| (1.0 / (1.0 + a * x.powf(2.0 * b)) - y).powi(2))
            .sum::<f64>()
    };
    let simplex = vec![vec![1.0, 1.0], vec![1.5, 1.0], vec![1.0, 0.7]];
    let res = adaptive_nelder_mead(sse, |x: &[f64]| Some(x.to_vec()), simplex, 4000)
        .expect("static simplex is well formed");
    (res.best[0], res.best[1])
}

/// Lays out a fuzzy graph in 2-D. Deterministic for a fixed `seed`.
pub fn umap_layout(graph: &FuzzyGraph, seed: u64, epochs: usize) -> Embedding2D {
    let n = graph.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = if n <= 1 {
        vec![[0.0, 0.0]; n]
    } else {
        initial_layout(graph, &mut rng)
    };
    if n > 1 && epochs > 0 {
        optimize_layout(graph, &mut points, epochs, &mut rng);
    }
    Embedding2D {
        points,
        seed,
        epochs,
    }
}

fn initial_layout(graph: &FuzzyGraph, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let comps = graph.components();
    let cols = (comps.len() as f64).sqrt().ceil() as usize;
    let mut points = vec![[0.0; 2]; graph.n()];
    for (c, members) in comps.iter().enumerate() {
        let mut coords = if members.len() >= 3 && members.len() <= SPECTRAL_INIT_LIMIT {
            spectral_coords(graph, members)
        } else {
            members
                .iter()
                .map(|_| [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)])
                .collect()
        };
        // fit the component into a [0, 10] box
        for axis in 0..2 {
            let (lo, hi) = coords
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[axis]), hi.max(p[axis])));
            let span = hi - lo;
            for p in &mut coords {
                p[axis] = if span > 0.0 { 10.0 * (p[axis] - lo) / span } else { 5.0 };
            }
        }
        let offset = [
            COMPONENT_SPACING * (c % cols) as f64,
            COMPONENT_SPACING * (c / cols) as f64,
        ];
        for (&i, p) in members.iter().zip(&coords) {
            points[i] = [
                p[0] + offset[0] + rng.gen_range(-1e-4..1e-4),
                p[1] + offset[1] + rng.gen_range(-1e-4..1e-4),
            ];
        }
    }
    points
}

/// Second and third eigenvectors of the component's normalized Laplacian.
fn spectral_coords(graph: &FuzzyGraph, members: &[usize]) -> Vec<[f64; 2]> {
    let s = members.len();
    let local = |g: usize| members.binary_search(&g).expect("member of component");
    let mut w = DMatrix::zeros(s, s);
    for (a, &i) in members.iter().enumerate() {
        for &(j, wt) in graph.neighbors(i) {
            w[(a, local(j))] = wt;
        }
    }
    let deg: Vec<f64> = (0..s).map(|a| w.row(a).sum()).collect();
    let lap = DMatrix::from_fn(s, s, |a, b| {
        let off = w[(a, b)] / (deg[a] * deg[b]).sqrt();
        if a == b {
            1.0 - off
        } else {
            -off
        }
    });
    let eig = SymmetricEigen::new(lap);
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let mut out = vec![[0.0; 2]; s];
    for axis in 0..2 {
        let v = eig.eigenvectors.column(order[axis + 1]);
        let sign = if v[v.iamax()] < 0.0 { -1.0 } else { 1.0 };
        for a in 0..s {
            out[a][axis] = sign * v[a];
        }
    }
    out
}

fn clip(v: f64) -> f64 {
    v.clamp(-GRAD_CLIP, GRAD_CLIP)
}

fn optimize_layout(graph: &FuzzyGraph, points: &mut [[f64; 2]], epochs: usize, rng: &mut ChaCha8Rng) {
    let n = points.len();
    let (a, b) = curve_params();
    let max_w = graph
        .edges()
        .iter()
        .map(|e| e.2)
        .fold(0.0, f64::max);
    if max_w <= 0.0 {
        return;
    }
    // both directions of every edge, dropping edges too weak to be sampled
    let mut heads = Vec::new();
    let mut tails = Vec::new();
    let mut per_sample = Vec::new();
    let floor = max_w / epochs as f64;
    for i in 0..n {
        for &(j, w) in graph.neighbors(i) {
            if w >= floor {
                heads.push(i);
                tails.push(j);
                per_sample.push(max_w / w);
            }
        }
    }
    let per_negative: Vec<f64> = per_sample.iter().map(|e| e / NEGATIVE_SAMPLE_RATE as f64).collect();
    let mut next_sample = per_sample.clone();
    let mut next_negative = per_negative.clone();

    for epoch in 0..epochs {
        let lr = 1.0 - epoch as f64 / epochs as f64;
        let now = epoch as f64;
        for e in 0..heads.len() {
            if next_sample[e] > now {
                continue;
            }
            let (j, k) = (heads[e], tails[e]);
            let (cur, other) = (points[j], points[k]);
            let d2 = (cur[0] - other[0]).powi(2) + (cur[1] - other[1]).powi(2);
            let coeff = if d2 > 0.0 {
                -2.0 * a * b * d2.powf(b - 1.0) / (a * d2.powf(b) + 1.0)
            } else {
                0.0
            };
            for dim in 0..2 {
                let g = clip(coeff * (cur[dim] - other[dim]));
                points[j][dim] += g * lr;
                points[k][dim] -= g * lr;
            }
            next_sample[e] += per_sample[e];

            let n_neg = ((now - next_negative[e]) / per_negative[e]).floor().max(0.0) as usize;
            for _ in 0..n_neg {
                let k = rng.gen_range(0..n);
                if k == j {
                    continue;
                }
                let (cur, other) = (points[j], points[k]);
                let d2 = (cur[0] - other[0]).powi(2) + (cur[1] - other[1]).powi(2);
                let coeff = if d2 > 0.0 {
                    2.0 * b / ((0.001 + d2) * (a * d2.powf(b) + 1.0))
                } else {
                    0.0
                };
                for dim in 0..2 {
                    let g = if coeff > 0.0 {
                        clip(coeff * (cur[dim] - other[dim]))
                    } else {
                        GRAD_CLIP
                    };
                    points[j][dim] += g * lr;
                }
            }
            next_negative[e] += n_neg as f64 * per_negative[e];
        }
    }
}

/// Fuzzy graph then layout for projected data.
pub fn embed_points(x: &DMatrix<f64>, k: usize, seed: u64, epochs: usize) -> Result<Embedding2D> {
    let n = x.nrows();
    if n <= 1 {
        return Ok(Embedding2D {
            points: vec![[0.0, 0.0]; n],
            seed,
            epochs,
        });
    }
    let graph = fuzzy_graph(x, k.min(n - 1))?;
    Ok(umap_layout(&graph, seed, epochs))
}

fn points_matrix(points: &[[f64; 2]]) -> DMatrix<f64> {
    DMatrix::from_fn(points.len(), 2, |i, j| points[i][j])
}

fn layout_profile(points: &[[f64; 2]], k: usize, q: usize) -> Result<GraphProfile> {
    let n = points.len();
    let graph = build_knn_graph(&points_matrix(points), k.min(n - 1))?;
    GraphProfile::new(graph, q.min(n), &Timescales::netlsd_default())
}

/// NSD (β = 1, q = 50) between layouts' k-NN graphs, or the Procrustes
/// disparity.
pub fn dr_dissim(yi: &Embedding2D, yj: &Embedding2D, k: usize, measure: DrMeasure) -> Result<f64> {
    if yi.points.len() != yj.points.len() {
        bail_arg!("embeddings have different sizes");
    }
    if yi.points.len() < 2 {
        return Ok(0.0);
    }
    match measure {
        DrMeasure::Nsd => {
            let a = layout_profile(&yi.points, k, 50)?;
            let b = layout_profile(&yj.points, k, 50)?;
            a.nsd(&b, 1.0)
        }
        DrMeasure::Procrustes => Ok(procrustes_disparity(&yi.points, &yj.points)),
    }
}

/// Pairwise layout dissimilarities, filled in parallel.
pub fn dr_dissim_matrix(embeddings: &[Embedding2D], k: usize, measure: DrMeasure) -> Result<DMatrix<f64>> {
    let len = embeddings.len();
    let n = embeddings.first().map_or(0, |e| e.points.len());
    if embeddings.iter().any(|e| e.points.len() != n) {
        bail_arg!("embeddings have different sizes");
    }
    let mut d = DMatrix::zeros(len, len);
    if n < 2 {
        return Ok(d);
    }
    let pairs: Vec<(usize, usize)> = (0..len).flat_map(|i| (i + 1..len).map(move |j| (i, j))).collect();
    let values: Vec<f64> = match measure {
        DrMeasure::Nsd => {
            let profiles = embeddings
                .par_iter()
                .map(|e| layout_profile(&e.points, k, 50))
                .collect::<Result<Vec<_>>>()?;
            pairs
                .par_iter()
                .map(|&(i, j)| profiles[i].nsd(&profiles[j], 1.0))
                .collect::<Result<Vec<_>>>()?
        }
        DrMeasure::Procrustes => pairs
            .par_iter()
            .map(|&(i, j)| procrustes_disparity(&embeddings[i].points, &embeddings[j].points))
            .collect(),
    };
    for (&(i, j), v) in pairs.iter().zip(values) {
        d[(i, j)] = v;
        d[(j, i)] = v;
    }
    Ok(d)
}

/// Sum of squared residuals after centering, unit Frobenius scaling and the
/// best orthogonal alignment of `b` onto `a`.
pub fn procrustes_disparity(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    let standardize = |p: &[[f64; 2]]| -> Option<DMatrix<f64>> {
        let mut m = points_matrix(p);
        for mut col in m.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        let norm = m.norm();
        (norm > 0.0).then(|| m / norm)
    };
    match (standardize(a), standardize(b)) {
        (Some(x), Some(y)) => {
            let s = (x.transpose() * y).singular_values().sum();
            (1.0 - s * s).max(0.0)
        }
        (None, None) => 0.0,
        _ => 1.0,
    }
}

/// 2-D layout of the layouts themselves from their dissimilarities.
pub fn meta_embed(d: &DMatrix<f64>, seed: u64, epochs: usize) -> Result<Vec<[f64; 2]>> {
    let n = d.nrows();
    if d.ncols() != n {
        bail_arg!("dissimilarity matrix must be square");
    }
    if d.iter().all(|&v| v == 0.0) {
        return Ok(vec![[0.0, 0.0]; n]);
    }
    if n <= 4 {
        return Ok(classical_mds(d));
    }
    let graph = fuzzy_graph_from_distances(d, 5.min(n - 1))?;
    Ok(umap_layout(&graph, seed, epochs).points)
}

/// Classical (Torgerson) MDS into two dimensions.
pub fn classical_mds(d: &DMatrix<f64>) -> Vec<[f64; 2]> {
    let n = d.nrows();
    let sq = d.map(|v| v * v);
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).mean()).collect();
    let total = sq.mean();
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + total));
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]).then(x.cmp(&y)));
    let mut out = vec![[0.0; 2]; n];
    for axis in 0..2.min(n) {
        let idx = order[axis];
        let scale = eig.eigenvalues[idx].max(0.0).sqrt();
        let v = eig.eigenvectors.column(idx);
        let sign = if v[v.iamax()] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            out[i][axis] = sign * scale * v[i];
        }
    }
    out
}

/// k-NN graph of a layout, for inspection.
pub fn layout_graph(e: &Embedding2D, k: usize) -> Result<KnnGraph> {
    let n = e.points.len();
    build_knn_graph(&points_matrix(&e.points), k.min(n.saturating_sub(1)).max(1))
}
