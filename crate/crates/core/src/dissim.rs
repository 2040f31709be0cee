//! Graph dissimilarities: shared-nearest-neighbor (SNN) similarity, the
//! neighbor dissimilarity ND built on it, the NetLSD heat-trace shape
//! dissimilarity SD, and their combination NSD = ND^β · ln(1 + SD).

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::eigen::{dense_eigenvalues, lanczos_extremes, SparseSym};
use crate::error::{bail_arg, FealmError, Result};
use crate::knn::{symmetrize, KnnGraph, UndirectedGraph};

/// Dense SNN similarity `S = A Aᵀ / k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnnMatrix {
    pub s: DMatrix<f64>,
}

/// Positive and negative parts of `S_i - S_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnnDelta {
    pub plus: DMatrix<f64>,
    pub minus: DMatrix<f64>,
}

pub fn snn_similarity(g: &KnnGraph) -> SnnMatrix {
    let n = g.n();
    let k = g.k() as f64;
    let mut s = DMatrix::zeros(n, n);
    for (u, row) in snn_counts(g).iter().enumerate() {
        for &(v, c) in row {
            s[(u, v)] = c as f64 / k;
        }
    }
    SnnMatrix { s }
}

pub fn snn_delta(gi: &KnnGraph, gj: &KnnGraph) -> Result<SnnDelta> {
    check_compatible(gi, gj)?;
    let d = snn_similarity(gi).s - snn_similarity(gj).s;
    Ok(SnnDelta {
        plus: d.map(|x| x.max(0.0)),
        minus: d.map(|x| (-x).max(0.0)),
    })
}

fn check_compatible(gi: &KnnGraph, gj: &KnnGraph) -> Result<()> {
    if gi.n() != gj.n() {
        bail_arg!("graphs have different node counts ({} vs {})", gi.n(), gj.n());
    }
    if gi.k() != gj.k() {
        bail_arg!("graphs have different k ({} vs {})", gi.k(), gj.k());
    }
    Ok(())
}

/// Sparse rows of `A Aᵀ` as `(column, shared count)`, columns ascending.
fn snn_counts(g: &KnnGraph) -> Vec<Vec<(usize, u32)>> {
    let n = g.n();
    let rev = g.reverse_lists();
    let mut counts = vec![0u32; n];
    let mut touched = Vec::new();
    let mut rows = Vec::with_capacity(n);
    for u in 0..n {
        for &w in g.neighbors(u) {
            for &v in &rev[w] {
                if counts[v] == 0 {
                    touched.push(v);
                }
                counts[v] += 1;
            }
        }
        touched.sort_unstable();
        rows.push(touched.iter().map(|&v| (v, counts[v])).collect());
        for &v in &touched {
            counts[v] = 0;
        }
        touched.clear();
    }
    rows
}

/// Sums of squared positive and negative count differences between two SNN
/// count tables, in units of shared neighbors.
fn delta_sums(a: &[Vec<(usize, u32)>], b: &[Vec<(usize, u32)>]) -> (u64, u64) {
    let mut plus = 0u64;
    let mut minus = 0u64;
    let mut add = |d: i64| {
        if d > 0 {
            plus += (d * d) as u64;
        } else {
            minus += (d * d) as u64;
        }
    };
    for (ra, rb) in a.iter().zip(b) {
        let (mut i, mut j) = (0, 0);
        while i < ra.len() || j < rb.len() {
            let ca = ra.get(i).map_or(usize::MAX, |p| p.0);
            let cb = rb.get(j).map_or(usize::MAX, |p| p.0);
            if ca == cb {
                add(ra[i].1 as i64 - rb[j].1 as i64);
                i += 1;
                j += 1;
            } else if ca < cb {
                add(ra[i].1 as i64);
                i += 1;
            } else {
                add(-(rb[j].1 as i64));
                j += 1;
            }
        }
    }
    (plus, minus)
}

/// Neighbor dissimilarity `max(‖D⁺‖_F, ‖D⁻‖_F)` with `D = S_i - S_j`.
pub fn nd(gi: &KnnGraph, gj: &KnnGraph) -> Result<f64> {
    check_compatible(gi, gj)?;
    Ok(nd_from_counts(&snn_counts(gi), &snn_counts(gj), gi.k()))
}

fn nd_from_counts(a: &[Vec<(usize, u32)>], b: &[Vec<(usize, u32)>], k: usize) -> f64 {
    let (plus, minus) = delta_sums(a, b);
    (plus.max(minus) as f64).sqrt() / k as f64
}

/// Increasing positive timescales at which the heat trace is sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct Timescales(Arc<Vec<f64>>);

impl Timescales {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            bail_arg!("timescale grid is empty");
        }
        if values.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            bail_arg!("timescales must be positive and finite");
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            bail_arg!("timescales must be strictly increasing");
        }
        Ok(Self(Arc::new(values)))
    }

    /// `count` log-spaced points in `[10^lo, 10^hi]`.
    pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count < 2 {
            bail_arg!("need at least 2 timescales");
        }
        let step = (hi - lo) / (count - 1) as f64;
        Self::new((0..count).map(|i| 10f64.powf(lo + step * i as f64)).collect())
    }

    /// 250 points between 0.01 and 100.
    pub fn netlsd_default() -> Self {
        Self::log_spaced(-2.0, 2.0, 250).expect("static grid is valid")
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for Timescales {
    fn default() -> Self {
        Self::netlsd_default()
    }
}

/// Heat trace `h(t) = Σ exp(-t λ)` over the normalized-Laplacian spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct NetlsdSignature {
    pub trace: Vec<f64>,
    pub timescales: Timescales,
}

/// Eigenvalues (ascending) of the symmetric normalized Laplacian
/// `I - D^{-1/2} A D^{-1/2}` with isolated nodes contributing a zero eigenvalue.
///
/// When `q < n` only the `⌊q/2⌋` smallest and `⌈q/2⌉` largest eigenvalues are
/// computed; the rest are placed on a straight line between the two groups.
pub fn laplacian_spectrum(adj: &UndirectedGraph, q: usize) -> Vec<f64> {
    let spectrum = SpectrumApprox::compute(adj, q);
    let mut all = spectrum.lower.clone();
    all.extend(spectrum.interior());
    all.extend(&spectrum.upper);
    all
}

/// Spectrum split as `lower | evenly spaced interior | upper`.
#[derive(Debug, Clone)]
struct SpectrumApprox {
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// number of interpolated eigenvalues strictly between the two groups
    interior: usize,
}

impl SpectrumApprox {
    fn exact(mut eigs: Vec<f64>) -> Self {
        for e in &mut eigs {
            *e = e.clamp(0.0, 2.0);
        }
        Self {
            lower: eigs,
            upper: Vec::new(),
            interior: 0,
        }
    }

    fn compute(adj: &UndirectedGraph, q: usize) -> Self {
        let n = adj.n();
        let op = normalized_adjacency(adj);
        if q >= n {
            return Self::exact(dense_laplacian_eigenvalues(&op));
        }
        let n_lower = q / 2;
        let n_upper = q - n_lower;

        let (components, comp_of) = adj.components();
        let zeros = components.min(n_lower);
        let dim = n - components;
        let n_top = n_lower - zeros;
        if n_top + n_upper > dim || dim < 64 {
            let eigs = dense_laplacian_eigenvalues(&op);
            let lower = eigs[..n_lower].to_vec();
            let upper = eigs[n - n_upper..].to_vec();
            return Self::interpolated(lower, upper, n);
        }

        // null space of L: D^{1/2} 1_C for every component C
        let mut null = vec![vec![0.0; n]; components];
        for i in 0..n {
            null[comp_of[i]][i] = (adj.degree(i).max(1) as f64).sqrt();
        }
        for v in &mut null {
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= nv);
        }
        let ex = lanczos_extremes(&op, &null, n_top, n_upper);
        let mut lower = vec![0.0; zeros];
        lower.extend(ex.top.iter().map(|mu| 1.0 - mu));
        let mut upper: Vec<f64> = ex.bottom.iter().map(|mu| 1.0 - mu).collect();
        upper.reverse();
        Self::interpolated(lower, upper, n)
    }

    fn interpolated(mut lower: Vec<f64>, mut upper: Vec<f64>, n: usize) -> Self {
        lower.sort_by(f64::total_cmp);
        upper.sort_by(f64::total_cmp);
        for e in lower.iter_mut().chain(upper.iter_mut()) {
            *e = e.clamp(0.0, 2.0);
        }
        let interior = n - lower.len() - upper.len();
        Self {
            lower,
            upper,
            interior,
        }
    }

    fn endpoints(&self) -> (f64, f64) {
        (
            *self.lower.last().expect("lower group is never empty"),
            *self.upper.first().expect("interpolation needs an upper group"),
        )
    }

    fn interior(&self) -> Vec<f64> {
        if self.interior == 0 {
            return Vec::new();
        }
        let (a, b) = self.endpoints();
        let h = (b - a) / (self.interior + 1) as f64;
        (1..=self.interior).map(|i| a + h * i as f64).collect()
    }

    fn heat_trace(&self, t: f64) -> f64 {
        let mut h: f64 = self
            .lower
            .iter()
            .chain(&self.upper)
            .map(|&l| (-t * l).exp())
            .sum();
        if self.interior > 0 {
            // geometric series over the evenly spaced interior eigenvalues
            let (a, b) = self.endpoints();
            let m = self.interior as f64;
            let step = (b - a) / (m + 1.0);
            let first = (-t * (a + step)).exp();
            let x = -t * step;
            h += if x == 0.0 {
                m * first
            } else {
                first * (m * x).exp_m1() / x.exp_m1()
            };
        }
        h
    }
}

/// `D^{-1/2} A D^{-1/2}` plus a unit diagonal entry for isolated nodes.
fn normalized_adjacency(adj: &UndirectedGraph) -> SparseSym {
    let n = adj.n();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| match adj.degree(i) {
            0 => 0.0,
            d => 1.0 / (d as f64).sqrt(),
        })
        .collect();
    let rows = (0..n)
        .map(|i| {
            if adj.degree(i) == 0 {
                vec![(i, 1.0)]
            } else {
                adj.adjacency(i)
                    .iter()
                    .map(|&j| (j, inv_sqrt[i] * inv_sqrt[j]))
                    .collect()
            }
        })
        .collect();
    SparseSym::from_rows(rows)
}

fn dense_laplacian_eigenvalues(op: &SparseSym) -> Vec<f64> {
    let n = op.n();
    let l = DMatrix::identity(n, n) - op.to_dense();
    dense_eigenvalues(l)
}

pub fn netlsd_signature(
    adj: &UndirectedGraph,
    q: usize,
    timescales: &Timescales,
) -> Result<NetlsdSignature> {
    if q < 2 {
        bail_arg!("q must be at least 2");
    }
    let spectrum = SpectrumApprox::compute(adj, q);
    let trace = timescales
        .values()
        .iter()
        .map(|&t| spectrum.heat_trace(t))
        .collect();
    Ok(NetlsdSignature {
        trace,
        timescales: timescales.clone(),
    })
}

/// Signature of a dense 0/1 adjacency matrix; rejects asymmetric input.
pub fn netlsd_signature_dense(
    adj: &DMatrix<f64>,
    q: usize,
    timescales: &Timescales,
) -> Result<NetlsdSignature> {
    netlsd_signature(&UndirectedGraph::from_dense(adj)?, q, timescales)
}

/// Euclidean distance between two heat traces on the same grid.
pub fn signature_distance(a: &NetlsdSignature, b: &NetlsdSignature) -> Result<f64> {
    if a.timescales != b.timescales {
        return Err(FealmError::Internal(
            "signatures were computed on different timescale grids".into(),
        ));
    }
    Ok(a.trace
        .iter()
        .zip(&b.trace)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Shape dissimilarity on the default timescale grid.
pub fn sd(gi: &KnnGraph, gj: &KnnGraph, q: usize) -> Result<f64> {
    if gi.n() != gj.n() {
        bail_arg!("graphs have different node counts ({} vs {})", gi.n(), gj.n());
    }
    let ts = Timescales::netlsd_default();
    let a = netlsd_signature(&symmetrize(gi), q, &ts)?;
    let b = netlsd_signature(&symmetrize(gj), q, &ts)?;
    signature_distance(&a, &b)
}

/// `nd^β · ln(1 + sd)`.
pub fn combine_nsd(nd: f64, sd: f64, beta: f64) -> f64 {
    nd.powf(beta) * sd.ln_1p()
}

pub fn nsd(gi: &KnnGraph, gj: &KnnGraph, beta: f64, q: usize) -> Result<f64> {
    check_compatible(gi, gj)?;
    if !(beta >= 0.0) {
        bail_arg!("beta must be >= 0");
    }
    let ts = Timescales::netlsd_default();
    let a = GraphProfile::new(gi.clone(), q, &ts)?;
    let b = GraphProfile::new(gj.clone(), q, &ts)?;
    a.nsd(&b, beta)
}

/// A k-NN graph with everything NSD needs precomputed: SNN counts and the
/// NetLSD signature of its symmetrization.
#[derive(Debug, Clone)]
pub struct GraphProfile {
    graph: KnnGraph,
    snn: Vec<Vec<(usize, u32)>>,
    signature: NetlsdSignature,
}

impl GraphProfile {
    pub fn new(graph: KnnGraph, q: usize, timescales: &Timescales) -> Result<Self> {
        let signature = netlsd_signature(&symmetrize(&graph), q, timescales)?;
        let snn = snn_counts(&graph);
        Ok(Self {
            graph,
            snn,
            signature,
        })
    }

    pub fn graph(&self) -> &KnnGraph {
        &self.graph
    }

    pub fn signature(&self) -> &NetlsdSignature {
        &self.signature
    }

    pub fn into_graph(self) -> KnnGraph {
        self.graph
    }

    pub fn nd(&self, other: &GraphProfile) -> Result<f64> {
        check_compatible(&self.graph, &other.graph)?;
        Ok(nd_from_counts(&self.snn, &other.snn, self.graph.k()))
    }

    pub fn sd(&self, other: &GraphProfile) -> Result<f64> {
        signature_distance(&self.signature, &other.signature)
    }

    pub fn nsd(&self, other: &GraphProfile, beta: f64) -> Result<f64> {
        Ok(combine_nsd(self.nd(other)?, self.sd(other)?, beta))
    }
}

/// SNN counts of a candidate graph, for ND against cached profiles without
/// paying for a signature.
#[derive(Debug, Clone)]
pub(crate) struct SnnTable {
    k: usize,
    counts: Vec<Vec<(usize, u32)>>,
}

impl SnnTable {
    pub fn new(g: &KnnGraph) -> Self {
        Self {
            k: g.k(),
            counts: snn_counts(g),
        }
    }

    pub fn nd(&self, profile: &GraphProfile) -> f64 {
        nd_from_counts(&self.counts, &profile.snn, self.k)
    }
}
