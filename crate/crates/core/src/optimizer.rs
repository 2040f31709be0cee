//! The graph-dissimilarity objective and the hybrid random-search +
//! adaptive Nelder-Mead maximizer.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::dissim::{combine_nsd, GraphProfile, SnnTable, Timescales};
use crate::error::{bail_arg, Result};
use crate::knn::{build_knn_graph, KnnGraph};
use crate::manifold::{penalty, ProjectionFamily, ProjectionSpec};
use crate::types::FealmConfig;

/// Minimum NSD to a set of prior graphs plus the projection penalty.
#[derive(Debug, Clone)]
pub struct Objective {
    data: DMatrix<f64>,
    family: ProjectionFamily,
    priors: Vec<GraphProfile>,
    k: usize,
    beta: f64,
    q: usize,
    lambda1: f64,
    lambda2: f64,
    timescales: Timescales,
}

/// One evaluation broken into its parts.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub spec: ProjectionSpec,
    pub profile: GraphProfile,
    /// `min_j nsd(G, G_j)`.
    pub min_dissim: f64,
    pub penalty: f64,
    pub value: f64,
}

impl Objective {
    /// `data` must already be z-scored. `priors` must be nonempty and share
    /// `n` and `k` with the graphs this objective builds.
    pub fn new(
        data: DMatrix<f64>,
        family: ProjectionFamily,
        priors: Vec<GraphProfile>,
        config: &FealmConfig,
    ) -> Result<Self> {
        let n = data.nrows();
        if data.ncols() != family.m {
            bail_arg!("data has {} columns, projection expects {}", data.ncols(), family.m);
        }
        if priors.is_empty() {
            bail_arg!("objective needs at least one prior graph");
        }
        if priors.iter().any(|p| p.graph().n() != n || p.graph().k() != config.k) {
            bail_arg!("prior graphs must have n = {n} and k = {}", config.k);
        }
        Ok(Self {
            data,
            family,
            priors,
            k: config.k,
            beta: config.beta,
            q: config.q.min(n),
            lambda1: config.lambda1,
            lambda2: config.lambda2,
            timescales: Timescales::netlsd_default(),
        })
    }

    pub fn family(&self) -> &ProjectionFamily {
        &self.family
    }

    pub fn priors(&self) -> &[GraphProfile] {
        &self.priors
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn timescales(&self) -> &Timescales {
        &self.timescales
    }

    /// k-NN graph of `X P`.
    pub fn graph_of(&self, spec: &ProjectionSpec) -> Result<KnnGraph> {
        build_knn_graph(&spec.project(&self.data), self.k)
    }

    pub fn profile_of(&self, spec: &ProjectionSpec) -> Result<GraphProfile> {
        GraphProfile::new(self.graph_of(spec)?, self.q, &self.timescales)
    }

    pub fn evaluate(&self, raw: &[f64]) -> Result<f64> {
        let spec = self.family.retract(raw)?;
        self.evaluate_spec(&spec)
    }

    pub fn evaluate_spec(&self, spec: &ProjectionSpec) -> Result<f64> {
        let graph = self.graph_of(spec)?;
        let table = SnnTable::new(&graph);
        let nds: Vec<f64> = self.priors.iter().map(|p| table.nd(p)).collect();
        let pen = penalty(spec, self.lambda1, self.lambda2);
        if self.beta > 0.0 && nds.iter().any(|&d| d == 0.0) {
            // an identical neighborhood structure already pins the minimum at 0
            return Ok(pen);
        }
        let profile = GraphProfile::new(graph, self.q, &self.timescales)?;
        let mut min = f64::INFINITY;
        for (p, nd) in self.priors.iter().zip(nds) {
            min = min.min(combine_nsd(nd, profile.sd(p)?, self.beta));
        }
        Ok(min + pen)
    }

    pub fn evaluate_detail(&self, spec: &ProjectionSpec) -> Result<Evaluation> {
        let profile = self.profile_of(spec)?;
        let mut min = f64::INFINITY;
        for p in &self.priors {
            min = min.min(profile.nsd(p, self.beta)?);
        }
        let pen = penalty(spec, self.lambda1, self.lambda2);
        Ok(Evaluation {
            spec: spec.clone(),
            profile,
            min_dissim: min,
            penalty: pen,
            value: min + pen,
        })
    }
}

/// Outcome of a maximization run.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub best: Vec<f64>,
    pub best_value: f64,
    /// Objective value of every evaluation in order.
    pub trace: Vec<f64>,
}

/// Running maximum of an evaluation trace.
pub fn best_so_far(trace: &[f64]) -> Vec<f64> {
    let mut best = f64::NEG_INFINITY;
    trace
        .iter()
        .map(|&v| {
            if v > best {
                best = v;
            }
            best
        })
        .collect()
}

/// Adaptive coefficients `(reflection, expansion, contraction, shrink)` for
/// dimension `p`.
pub fn adaptive_coefficients(p: usize) -> (f64, f64, f64, f64) {
    let p = p as f64;
    (1.0, 1.0 + 2.0 / p, 0.75 - 1.0 / (2.0 * p), 1.0 - 1.0 / p)
}

const DIAMETER_TOL: f64 = 1e-9;

fn finite_or_worst(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::NEG_INFINITY
    }
}

/// Maximizes `f` with Nelder-Mead using dimension-adaptive coefficients.
///
/// Every candidate goes through `retract` before evaluation and the retracted
/// point is what enters the simplex; a failed retraction counts as an
/// evaluation with value −∞. The initial points are evaluated first and count
/// toward `max_evals`.
pub fn adaptive_nelder_mead<F, T>(
    mut f: F,
    retract: T,
    simplex: Vec<Vec<f64>>,
    max_evals: usize,
) -> Result<SolveResult>
where
    F: FnMut(&[f64]) -> f64,
    T: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let p = simplex.first().map_or(0, Vec::len);
    if p == 0 || simplex.len() != p + 1 || simplex.iter().any(|x| x.len() != p) {
        bail_arg!("simplex must hold p + 1 points of dimension p >= 1");
    }
    let mut trace = Vec::new();
    let mut vertices = Vec::with_capacity(p + 1);
    for x in simplex {
        if trace.len() >= max_evals {
            break;
        }
        let (x, v) = match retract(&x) {
            Some(r) => {
                let v = finite_or_worst(f(&r));
                (r, v)
            }
            None => (x, f64::NEG_INFINITY),
        };
        trace.push(v);
        vertices.push((x, v));
    }
    if vertices.len() < p + 1 {
        return Ok(finish(vertices, trace));
    }
    refine(&mut f, &retract, vertices, max_evals, trace)
}

fn finish(vertices: Vec<(Vec<f64>, f64)>, trace: Vec<f64>) -> SolveResult {
    let (best, best_value) = vertices
        .into_iter()
        .fold((Vec::new(), f64::NEG_INFINITY), |acc, (x, v)| {
            if acc.0.is_empty() || v > acc.1 {
                (x, v)
            } else {
                acc
            }
        });
    SolveResult {
        best,
        best_value,
        trace,
    }
}

/// Nelder-Mead from an already evaluated simplex. `trace` holds the
/// evaluations spent so far and keeps growing up to `max_evals`.
fn refine<F, T>(
    f: &mut F,
    retract: &T,
    mut vertices: Vec<(Vec<f64>, f64)>,
    max_evals: usize,
    mut trace: Vec<f64>,
) -> Result<SolveResult>
where
    F: FnMut(&[f64]) -> f64,
    T: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let p = vertices[0].0.len();
    let (alpha, gamma, rho, sigma) = adaptive_coefficients(p);
    let mut best_ever = vertices
        .iter()
        .cloned()
        .fold(None::<(Vec<f64>, f64)>, |acc, (x, v)| match acc {
            Some((_, bv)) if bv >= v => acc,
            _ => Some((x, v)),
        })
        .expect("simplex is nonempty");

    let mut eval = |x: Vec<f64>, trace: &mut Vec<f64>| -> (Vec<f64>, f64) {
        let (x, v) = match retract(&x) {
            Some(r) => {
                let v = finite_or_worst(f(&r));
                (r, v)
            }
            None => (x, f64::NEG_INFINITY),
        };
        trace.push(v);
        if v > best_ever.1 {
            best_ever = (x.clone(), v);
        }
        (x, v)
    };

    loop {
        // descending by value, stable on position
        vertices.sort_by(|a, b| b.1.total_cmp(&a.1));
        if trace.len() >= max_evals || diameter(&vertices) < DIAMETER_TOL {
            break;
        }
        let worst = vertices[p].clone();
        let second_worst = vertices[p - 1].1;
        let best = vertices[0].1;
        let mut centroid = vec![0.0; p];
        for (x, _) in &vertices[..p] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / p as f64;
            }
        }
        let along = |t: f64, from: &[f64]| -> Vec<f64> {
            centroid.iter().zip(from).map(|(c, x)| c + t * (x - c)).collect()
        };

        let reflected = eval(along(-alpha, &worst.0), &mut trace);
        if reflected.1 > best {
            if trace.len() >= max_evals {
                vertices[p] = reflected;
                continue;
            }
            let expanded = eval(along(-alpha * gamma, &worst.0), &mut trace);
            vertices[p] = if expanded.1 > reflected.1 { expanded } else { reflected };
            continue;
        }
        if reflected.1 > second_worst {
            vertices[p] = reflected;
            continue;
        }
        if trace.len() >= max_evals {
            continue;
        }
        let contracted = if reflected.1 > worst.1 {
            let c = eval(along(-alpha * rho, &worst.0), &mut trace);
            (c.1 >= reflected.1).then_some(c)
        } else {
            let c = eval(along(rho, &worst.0), &mut trace);
            (c.1 > worst.1).then_some(c)
        };
        match contracted {
            Some(c) => vertices[p] = c,
            None => {
                let anchor = vertices[0].0.clone();
                for vert in vertices.iter_mut().skip(1) {
                    if trace.len() >= max_evals {
                        break;
                    }
                    let x: Vec<f64> = anchor.iter().zip(&vert.0).map(|(a, x)| a + sigma * (x - a)).collect();
                    *vert = eval(x, &mut trace);
                }
            }
        }
    }
    Ok(SolveResult {
        best: best_ever.0,
        best_value: best_ever.1,
        trace,
    })
}

fn diameter(vertices: &[(Vec<f64>, f64)]) -> f64 {
    let mut d: f64 = 0.0;
    for (i, (a, _)) in vertices.iter().enumerate() {
        for (b, _) in &vertices[i + 1..] {
            let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            d = d.max(s.sqrt());
        }
    }
    d
}

/// Random search over `n_init` points followed by Nelder-Mead from the
/// `p + 1` best, for a total of `n_evals` evaluations.
///
/// Samples are drawn one after another from `rng`, so a smaller `n_init` with
/// the same seed sees a prefix of the same samples. They are evaluated in
/// parallel; ranking is by value and then by sample index.
pub fn hybrid_maximize<F, R>(
    f: F,
    family: &ProjectionFamily,
    n_init: usize,
    n_evals: usize,
    rng: &mut R,
) -> Result<SolveResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
    R: Rng + ?Sized,
{
    let p = family.param_count();
    if n_init < p + 1 {
        bail_arg!("n_init = {n_init} is below p + 1 = {}", p + 1);
    }
    if n_evals < n_init {
        bail_arg!("n_evals = {n_evals} is below n_init = {n_init}");
    }
    let samples: Vec<Vec<f64>> = (0..n_init)
        .map(|_| family.random_point(rng).params().to_vec())
        .collect();
    let values: Vec<f64> = samples.par_iter().map(|x| finite_or_worst(f(x))).collect();

    let mut order: Vec<usize> = (0..n_init).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let trace = values.clone();
    let vertices: Vec<(Vec<f64>, f64)> = order[..=p]
        .iter()
        .map(|&i| (samples[i].clone(), values[i]))
        .collect();
    if n_evals == n_init {
        return Ok(finish(vertices, trace));
    }
    let retract = |x: &[f64]| family.retract(x).ok().map(|s| s.params().to_vec());
    let mut g = |x: &[f64]| f(x);
    refine(&mut g, &retract, vertices, n_evals, trace)
}

/// A solved projection.
#[derive(Debug, Clone)]
pub struct Solution {
    pub spec: ProjectionSpec,
    pub value: f64,
    pub trace: Vec<f64>,
}

pub fn hybrid_solve<R: Rng + ?Sized>(
    obj: &Objective,
    n_init: usize,
    n_evals: usize,
    rng: &mut R,
) -> Result<Solution> {
    let f = |x: &[f64]| obj.evaluate(x).unwrap_or(f64::NEG_INFINITY);
    let res = hybrid_maximize(f, obj.family(), n_init, n_evals, rng)?;
    Ok(Solution {
        spec: obj.family().retract(&res.best)?,
        value: res.best_value,
        trace: res.trace,
    })
}
