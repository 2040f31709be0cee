//! Directed k-nearest-neighbor graphs and their undirected symmetrization.
//!
//! Neighbor search is exact. Candidates are ranked by squared Euclidean
//! distance and exact ties go to the smaller node index, so the brute-force
//! scan and the k-d tree return identical graphs.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{bail_arg, FealmError, Result};

/// Directed k-NN graph: every node lists exactly `k` other nodes, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct KnnGraph {
    k: usize,
    neighbors: Vec<Vec<usize>>,
}

impl KnnGraph {
    /// Validates and stores neighbor lists. Lists are sorted on the way in.
    pub fn new(mut neighbors: Vec<Vec<usize>>) -> Result<Self> {
        let n = neighbors.len();
        if n == 0 {
            bail_arg!("graph needs at least one node");
        }
        let k = neighbors[0].len();
        for (i, list) in neighbors.iter_mut().enumerate() {
            if list.len() != k {
                bail_arg!("node {i} has {} neighbors, expected {k}", list.len());
            }
            list.sort_unstable();
            if list.windows(2).any(|w| w[0] == w[1]) {
                bail_arg!("node {i} has duplicate neighbors");
            }
            if list.iter().any(|&j| j == i || j >= n) {
                bail_arg!("node {i} has a self-loop or out-of-range neighbor");
            }
        }
        Ok(Self { k, neighbors })
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn neighbor_lists(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Dense 0/1 adjacency `A` with `A[i][j] = 1` iff `j` is a neighbor of `i`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut a = DMatrix::zeros(n, n);
        for (i, list) in self.neighbors.iter().enumerate() {
            for &j in list {
                a[(i, j)] = 1.0;
            }
        }
        a
    }

    /// For each node, the nodes that list it as a neighbor (ascending).
    pub fn reverse_lists(&self) -> Vec<Vec<usize>> {
        let mut rev = vec![Vec::with_capacity(self.k); self.n()];
        for (i, list) in self.neighbors.iter().enumerate() {
            for &j in list {
                rev[j].push(i);
            }
        }
        rev
    }
}

impl TryFrom<Vec<Vec<usize>>> for KnnGraph {
    type Error = FealmError;

    fn try_from(value: Vec<Vec<usize>>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<KnnGraph> for Vec<Vec<usize>> {
    fn from(g: KnnGraph) -> Self {
        g.neighbors
    }
}

/// Undirected simple graph stored as sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndirectedGraph {
    adjacency: Vec<Vec<usize>>,
}

impl UndirectedGraph {
    /// Reads a dense 0/1 matrix. Rejects asymmetric input, self-loops and
    /// entries other than 0 or 1.
    pub fn from_dense(a: &DMatrix<f64>) -> Result<Self> {
        let (n, c) = a.shape();
        if n != c {
            bail_arg!("adjacency must be square, got {n}x{c}");
        }
        let mut adjacency = vec![Vec::new(); n];
        for i in 0..n {
            for j in 0..n {
                let v = a[(i, j)];
                if v != a[(j, i)] {
                    bail_arg!("adjacency is not symmetric at ({i}, {j})");
                }
                if v == 1.0 {
                    if i == j {
                        bail_arg!("self-loop at node {i}");
                    }
                    adjacency[i].push(j);
                } else if v != 0.0 {
                    bail_arg!("adjacency entry ({i}, {j}) = {v} is not 0 or 1");
                }
            }
        }
        Ok(Self { adjacency })
    }

    /// Graph with `n` nodes and no edges.
    pub fn empty(n: usize) -> Self {
        Self {
            adjacency: vec![Vec::new(); n],
        }
    }

    /// Complete graph on `n` nodes.
    pub fn complete(n: usize) -> Self {
        Self {
            adjacency: (0..n)
                .map(|i| (0..n).filter(|&j| j != i).collect())
                .collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn adjacency(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut a = DMatrix::zeros(n, n);
        for (i, list) in self.adjacency.iter().enumerate() {
            for &j in list {
                a[(i, j)] = 1.0;
            }
        }
        a
    }

    /// Connected-component id per node, numbered by smallest member.
    pub fn components(&self) -> (usize, Vec<usize>) {
        let n = self.n();
        let mut comp = vec![usize::MAX; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            comp[start] = count;
            stack.push(start);
            while let Some(u) = stack.pop() {
                for &v in &self.adjacency[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = count;
                        stack.push(v);
                    }
                }
            }
            count += 1;
        }
        (count, comp)
    }
}

/// `A + Aᵀ - A∘Aᵀ`: an undirected edge wherever either direction exists.
pub fn symmetrize(g: &KnnGraph) -> UndirectedGraph {
    let mut adjacency: Vec<Vec<usize>> = g.neighbor_lists().to_vec();
    for (i, list) in g.neighbor_lists().iter().enumerate() {
        for &j in list {
            adjacency[j].push(i);
        }
    }
    for list in &mut adjacency {
        list.sort_unstable();
        list.dedup();
    }
    UndirectedGraph { adjacency }
}

/// Neighbor search strategy. Both return the same graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KnnMethod {
    #[default]
    BruteForce,
    KdTree,
}

/// Row-major copy of a point set, the layout every distance loop wants.
#[derive(Debug, Clone)]
pub(crate) struct Points {
    pub n: usize,
    pub d: usize,
    pub data: Vec<f64>,
}

impl Points {
    pub fn from_matrix(x: &DMatrix<f64>) -> Self {
        let (n, d) = x.shape();
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            for j in 0..d {
                data.push(x[(i, j)]);
            }
        }
        Self { n, d, data }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn sq_dist(&self, i: usize, j: usize) -> f64 {
        sq_dist(self.row(i), self.row(j))
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let t = x - y;
            t * t
        })
        .sum()
}

/// `(squared distance, index)` ordered lexicographically.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Builds the k-NN graph of the rows of `x` with the brute-force scan.
pub fn build_knn_graph(x: &DMatrix<f64>, k: usize) -> Result<KnnGraph> {
    build_knn_graph_with(x, k, KnnMethod::BruteForce)
}

pub fn build_knn_graph_with(x: &DMatrix<f64>, k: usize, method: KnnMethod) -> Result<KnnGraph> {
    let (lists, _) = knn_with_distances(x, k, method)?;
    let neighbors = lists
        .into_iter()
        .map(|mut l| {
            l.sort_unstable();
            l
        })
        .collect();
    Ok(KnnGraph {
        k,
        neighbors,
    })
}

fn check_input(x: &DMatrix<f64>, k: usize) -> Result<()> {
    let (n, d) = x.shape();
    if d == 0 {
        bail_arg!("points need at least one coordinate");
    }
    if k == 0 || k >= n {
        bail_arg!("k must satisfy 1 <= k < n (k = {k}, n = {n})");
    }
    if x.iter().any(|v| !v.is_finite()) {
        bail_arg!("points contain NaN or infinite coordinates");
    }
    Ok(())
}

/// Neighbor lists ordered nearest first, with Euclidean (not squared) distances.
pub(crate) fn knn_with_distances(
    x: &DMatrix<f64>,
    k: usize,
    method: KnnMethod,
) -> Result<(Vec<Vec<usize>>, Vec<Vec<f64>>)> {
    check_input(x, k)?;
    let points = Points::from_matrix(x);
    let found: Vec<Vec<Candidate>> = match method {
        KnnMethod::BruteForce => (0..points.n)
            .into_par_iter()
            .map(|i| brute_force_row(&points, i, k))
            .collect(),
        KnnMethod::KdTree => {
            let tree = KdTree::build(&points);
            (0..points.n)
                .into_par_iter()
                .map(|i| tree.query(&points, i, k))
                .collect()
        }
    };
    let mut lists = Vec::with_capacity(found.len());
    let mut dists = Vec::with_capacity(found.len());
    for row in found {
        lists.push(row.iter().map(|c| c.index).collect());
        dists.push(row.iter().map(|c| c.dist.sqrt()).collect());
    }
    Ok((lists, dists))
}

fn brute_force_row(points: &Points, i: usize, k: usize) -> Vec<Candidate> {
    let mut cands: Vec<Candidate> = (0..points.n)
        .filter(|&j| j != i)
        .map(|j| Candidate {
            dist: points.sq_dist(i, j),
            index: j,
        })
        .collect();
    if k < cands.len() {
        cands.select_nth_unstable(k - 1);
        cands.truncate(k);
    }
    cands.sort_unstable();
    cands
}

const LEAF_SIZE: usize = 16;

enum KdNode {
    Leaf(Vec<usize>),
    Split {
        dim: usize,
        value: f64,
        left: Box<KdNode>,
        right: Box<KdNode>,
    },
}

struct KdTree {
    root: KdNode,
}

impl KdTree {
    fn build(points: &Points) -> Self {
        let idx: Vec<usize> = (0..points.n).collect();
        Self {
            root: Self::build_node(points, idx),
        }
    }

    fn build_node(points: &Points, mut idx: Vec<usize>) -> KdNode {
        if idx.len() <= LEAF_SIZE {
            return KdNode::Leaf(idx);
        }
        // split along the widest coordinate
        let mut best_dim = 0;
        let mut best_spread = f64::NEG_INFINITY;
        for dim in 0..points.d {
            let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = points.row(i)[dim];
                (lo.min(v), hi.max(v))
            });
            if hi - lo > best_spread {
                best_spread = hi - lo;
                best_dim = dim;
            }
        }
        if best_spread <= 0.0 {
            return KdNode::Leaf(idx);
        }
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| {
            points.row(a)[best_dim].total_cmp(&points.row(b)[best_dim])
        });
        let value = points.row(idx[mid])[best_dim];
        let right = idx.split_off(mid);
        KdNode::Split {
            dim: best_dim,
            value,
            left: Box::new(Self::build_node(points, idx)),
            right: Box::new(Self::build_node(points, right)),
        }
    }

    fn query(&self, points: &Points, i: usize, k: usize) -> Vec<Candidate> {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(&self.root, points, i, k, &mut heap);
        heap.into_sorted_vec()
    }

    fn search(
        &self,
        node: &KdNode,
        points: &Points,
        i: usize,
        k: usize,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        match node {
            KdNode::Leaf(idx) => {
                for &j in idx {
                    if j == i {
                        continue;
                    }
                    let c = Candidate {
                        dist: points.sq_dist(i, j),
                        index: j,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            KdNode::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = points.row(i)[*dim] - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, points, i, k, heap);
                // `<=` keeps equal-distance candidates with smaller indices reachable
                if heap.len() < k || diff * diff <= heap.peek().unwrap().dist {
                    self.search(far, points, i, k, heap);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(values: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(values.len(), 1, values)
    }

    /// O(n^2) oracle: full sort of every row by (distance, index).
    fn oracle(x: &DMatrix<f64>, k: usize) -> Vec<Vec<usize>> {
        let n = x.nrows();
        (0..n)
            .map(|i| {
                let mut all: Vec<(f64, usize)> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| ((x.row(i) - x.row(j)).norm_squared(), j))
                    .collect();
                all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                let mut l: Vec<usize> = all[..k].iter().map(|p| p.1).collect();
                l.sort();
                l
            })
            .collect()
    }

    fn random_matrix(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, d, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn points_on_a_line() {
        let g = build_knn_graph(&line(&[0.0, 1.0, 3.0]), 1).unwrap();
        assert_eq!(g.neighbor_lists(), &[vec![1], vec![0], vec![1]]);
    }

    #[test]
    fn identical_points_break_ties_by_index() {
        let x = line(&[2.0, 2.0, 2.0]);
        for method in [KnnMethod::BruteForce, KnnMethod::KdTree] {
            let g = build_knn_graph_with(&x, 1, method).unwrap();
            assert_eq!(g.neighbor_lists(), &[vec![1], vec![0], vec![0]]);
        }
    }

    #[test]
    fn matches_brute_force_oracle() {
        let x = random_matrix(100, 5, 3);
        let g = build_knn_graph(&x, 15).unwrap();
        assert_eq!(g.neighbor_lists(), oracle(&x, 15).as_slice());
        let t = build_knn_graph_with(&x, 15, KnnMethod::KdTree).unwrap();
        assert_eq!(g, t);
    }

    #[test]
    fn kd_tree_agrees_on_gridded_data_with_ties() {
        // integer grid: many exact distance ties
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = DMatrix::from_fn(300, 3, |_, _| rng.gen_range(0..5) as f64);
        for k in [1, 7, 20] {
            let a = build_knn_graph(&x, k).unwrap();
            let b = build_knn_graph_with(&x, k, KnnMethod::KdTree).unwrap();
            assert_eq!(a, b, "k = {k}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        let x = line(&[0.0, 1.0, 2.0]);
        assert!(build_knn_graph(&x, 3).is_err());
        assert!(build_knn_graph(&x, 0).is_err());
        let bad = line(&[0.0, f64::NAN, 2.0]);
        assert!(build_knn_graph(&bad, 1).is_err());
        let inf = line(&[0.0, f64::INFINITY, 2.0]);
        assert!(build_knn_graph(&inf, 1).is_err());
    }

    #[test]
    fn symmetrize_single_and_mutual_edges() {
        let g = KnnGraph::new(vec![vec![1], vec![0], vec![1]]).unwrap();
        let u = symmetrize(&g);
        let a = u.to_dense();
        assert_eq!(a[(0, 1)], 1.0);
        assert_eq!(a[(1, 0)], 1.0);
        assert_eq!(a[(1, 2)], 1.0);
        assert_eq!(a[(0, 2)], 0.0);
        assert_eq!(u.edge_count(), 2);
    }

    #[test]
    fn symmetrize_is_elementwise_max() {
        let x = random_matrix(60, 4, 5);
        let g = build_knn_graph(&x, 6).unwrap();
        let a = g.to_dense();
        let expected = a.zip_map(&a.transpose(), f64::max);
        let formula = &a + a.transpose() - a.component_mul(&a.transpose());
        assert_eq!(symmetrize(&g).to_dense(), expected);
        assert_eq!(formula, expected);
    }

    #[test]
    fn from_dense_rejects_asymmetry() {
        let mut a = DMatrix::zeros(3, 3);
        a[(0, 1)] = 1.0;
        assert!(UndirectedGraph::from_dense(&a).is_err());
        a[(1, 0)] = 1.0;
        assert_eq!(UndirectedGraph::from_dense(&a).unwrap().edge_count(), 1);
    }

    #[test]
    fn graph_validation() {
        assert!(KnnGraph::new(vec![vec![0], vec![0]]).is_err());
        assert!(KnnGraph::new(vec![vec![1, 1], vec![0, 0]]).is_err());
        assert!(KnnGraph::new(vec![vec![1], vec![0, 2], vec![0]]).is_err());
        let g = KnnGraph::new(vec![vec![2, 1], vec![0, 2], vec![1, 0]]).unwrap();
        assert_eq!(g.neighbors(0), &[1, 2]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn dense_rows_sum_to_k(seed in 0u64..1000, n in 5usize..40, k in 1usize..5) {
            let x = random_matrix(n, 3, seed);
            let g = build_knn_graph(&x, k).unwrap();
            let a = g.to_dense();
            for i in 0..n {
                prop_assert_eq!(a.row(i).sum(), k as f64);
                prop_assert_eq!(a[(i, i)], 0.0);
            }
            let edges = symmetrize(&g).edge_count();
            prop_assert!(2 * edges >= k * n && edges <= k * n);
        }

        // dyadic coordinates keep the shifted and scaled arithmetic exact
        #[test]
        fn translation_and_scale_invariance(
            coords in proptest::collection::vec(-64i32..64, 30 * 3),
            shift in proptest::collection::vec(-16i32..16, 3),
            scale_pow in 0i32..4,
        ) {
            let x = DMatrix::from_row_slice(30, 3, &coords.iter().map(|&c| c as f64 / 8.0).collect::<Vec<_>>());
            let base = build_knn_graph(&x, 4).unwrap();
            let mut moved = x.clone();
            for mut row in moved.row_iter_mut() {
                for j in 0..3 {
                    row[j] += shift[j] as f64;
                }
            }
            prop_assert_eq!(&build_knn_graph(&moved, 4).unwrap(), &base);
            let scaled = &x * 2f64.powi(scale_pow);
            prop_assert_eq!(&build_knn_graph(&scaled, 4).unwrap(), &base);
        }
    }
}
