//! Synthetic data: two concentric noisy spheres, an independent 3-class
//! attribute, and a variant where the class leaks into a sphere coordinate.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal};

use crate::error::{bail_arg, FealmError, Result};
use crate::preprocess::zscore;
use crate::types::{DataMatrix, LabelColumn};

pub const SPHERE_LABEL: &str = "sphere";
pub const CLASS_LABEL: &str = "class";
pub const CLASS_ATTRIBUTE: &str = "class";
pub const DEFAULT_CLASS_VALUES: [f64; 3] = [0.0, 5.0, 10.0];
pub const DEFAULT_ENTANGLE_FRACTION: f64 = 0.2;

/// Sizes and noise of the two-spheres data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpheresParams {
    pub n_outer: usize,
    pub n_inner: usize,
    pub inner_ratio: f64,
    pub noise_sd: f64,
}

impl Default for SpheresParams {
    fn default() -> Self {
        Self {
            n_outer: 200,
            n_inner: 100,
            inner_ratio: 0.4,
            noise_sd: 0.02,
        }
    }
}

/// Points on a unit sphere (`Sphere1`) and a smaller concentric one
/// (`Sphere2`), each coordinate jittered by Gaussian noise.
pub fn gen_two_spheres(params: &SpheresParams, seed: u64) -> Result<DataMatrix> {
    let SpheresParams {
        n_outer,
        n_inner,
        inner_ratio,
        noise_sd,
    } = *params;
    if n_outer == 0 || n_inner == 0 {
        bail_arg!("both spheres need at least one point");
    }
    if !(inner_ratio > 0.0 && inner_ratio < 1.0) {
        bail_arg!("inner_ratio must lie in (0, 1)");
    }
    let noise = Normal::new(0.0, noise_sd)
        .map_err(|e| FealmError::InvalidArgument(format!("noise_sd: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_outer + n_inner;
    let mut values = DMatrix::zeros(n, 3);
    let mut tags = Vec::with_capacity(n);
    for i in 0..n {
        let radius = if i < n_outer { 1.0 } else { inner_ratio };
        let dir = loop {
            let v: [f64; 3] = [
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            ];
            let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if norm > 1e-12 {
                break v.map(|c| c / norm);
            }
        };
        for j in 0..3 {
            values[(i, j)] = radius * dir[j] + rng.sample(noise);
        }
        tags.push(if i < n_outer { "Sphere1" } else { "Sphere2" }.to_string());
    }
    DataMatrix::new(
        values,
        vec!["x".into(), "y".into(), "z".into()],
        vec![LabelColumn::new(SPHERE_LABEL, tags)],
    )
}

/// Appends a balanced, shuffled 3-class attribute and z-scores the result.
pub fn add_three_class(x: &DataMatrix, class_values: [f64; 3], seed: u64) -> Result<DataMatrix> {
    Ok(zscore(&append_class(x, class_values, seed)?)?.0)
}

fn append_class(x: &DataMatrix, class_values: [f64; 3], seed: u64) -> Result<DataMatrix> {
    if class_values[0] == class_values[1]
        || class_values[1] == class_values[2]
        || class_values[0] == class_values[2]
    {
        bail_arg!("class values must be distinct");
    }
    let n = x.n();
    let mut codes: Vec<usize> = (0..n).map(|i| i % 3).collect();
    codes.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let (values, mut names, mut labels) = x.clone().into_parts();
    let m = values.ncols();
    let mut out = values.resize_horizontally(m + 1, 0.0);
    for (i, &c) in codes.iter().enumerate() {
        out[(i, m)] = class_values[c];
    }
    names.push(CLASS_ATTRIBUTE.into());
    let tags = codes.iter().map(|&c| ["A", "B", "C"][c].to_string()).collect();
    labels.push(LabelColumn::new(CLASS_LABEL, tags));
    DataMatrix::new(out, names, labels)
}

/// `target += fraction * source`, then z-scores the whole matrix again.
pub fn entangle(x: &DataMatrix, source: usize, target: usize, fraction: f64) -> Result<DataMatrix> {
    if source >= x.m() || target >= x.m() {
        bail_arg!("column index out of range");
    }
    if source == target {
        bail_arg!("source and target columns must differ");
    }
    if !(0.0..=1.0).contains(&fraction) {
        bail_arg!("fraction must lie in [0, 1]");
    }
    let mut values = x.values().clone();
    for i in 0..x.n() {
        values[(i, target)] += fraction * values[(i, source)];
    }
    let (z, _) = zscore(&x.with_values(values)?)?;
    Ok(z)
}

/// Built-in datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Spheres,
    Spheres3Class,
    Spheres3ClassEntangled,
}

impl DatasetKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Spheres => "spheres",
            Self::Spheres3Class => "spheres3class",
            Self::Spheres3ClassEntangled => "spheres3class-entangled",
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetKind {
    type Err = FealmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spheres" => Ok(Self::Spheres),
            "spheres3class" => Ok(Self::Spheres3Class),
            "spheres3class-entangled" => Ok(Self::Spheres3ClassEntangled),
            _ => Err(FealmError::InvalidArgument(format!("unknown dataset kind `{s}`"))),
        }
    }
}

/// Generates a built-in dataset. The entangled variant mixes the class values
/// into `x` at their raw scale, before anything is standardized, so that
/// dropping the class attribute alone no longer separates the spheres.
pub fn generate(kind: DatasetKind, params: &SpheresParams, seed: u64) -> Result<DataMatrix> {
    let spheres = gen_two_spheres(params, seed)?;
    let class_seed = seed.wrapping_add(1);
    match kind {
        DatasetKind::Spheres => Ok(spheres),
        DatasetKind::Spheres3Class => add_three_class(&spheres, DEFAULT_CLASS_VALUES, class_seed),
        DatasetKind::Spheres3ClassEntangled => entangle(
            &append_class(&spheres, DEFAULT_CLASS_VALUES, class_seed)?,
            3,
            0,
            DEFAULT_ENTANGLE_FRACTION,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radius(x: &DataMatrix, i: usize) -> f64 {
        x.values().row(i).norm()
    }

    #[test]
    fn exact_spheres_without_noise() {
        let params = SpheresParams {
            noise_sd: 0.0,
            ..Default::default()
        };
        let x = gen_two_spheres(&params, 1).unwrap();
        for i in 0..200 {
            assert!((radius(&x, i) - 1.0).abs() < 1e-9);
        }
        for i in 200..300 {
            assert!((radius(&x, i) - 0.4).abs() < 1e-9);
        }
    }

    #[test]
    fn default_shape_and_inner_radius() {
        let x = gen_two_spheres(&SpheresParams::default(), 2).unwrap();
        assert_eq!((x.n(), x.m()), (300, 3));
        let mean: f64 = (200..300).map(|i| radius(&x, i)).sum::<f64>() / 100.0;
        assert!((0.38..=0.42).contains(&mean), "{mean}");
        let labels = x.label(SPHERE_LABEL).unwrap();
        assert_eq!(labels.categories(), vec!["Sphere1", "Sphere2"]);
    }

    #[test]
    fn three_class_is_balanced_and_normalized() {
        let x = generate(DatasetKind::Spheres3Class, &SpheresParams::default(), 3).unwrap();
        assert_eq!((x.n(), x.m()), (300, 4));
        let groups = x.label(CLASS_LABEL).unwrap().groups();
        assert!(groups.iter().all(|g| g.len() == 100));
        let col = x.values().column(3);
        let mean = col.mean();
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 299.0).sqrt();
        assert!(mean.abs() < 1e-9 && (sd - 1.0).abs() < 1e-9);
    }

    fn mutual_information(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len() as f64;
        let mut joint = [[0.0; 3]; 2];
        for (&x, &y) in a.iter().zip(b) {
            joint[x][y] += 1.0 / n;
        }
        let pa: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
        let pb: Vec<f64> = (0..3).map(|j| joint[0][j] + joint[1][j]).collect();
        let mut mi = 0.0;
        for i in 0..2 {
            for j in 0..3 {
                if joint[i][j] > 0.0 {
                    mi += joint[i][j] * (joint[i][j] / (pa[i] * pb[j])).ln();
                }
            }
        }
        mi
    }

    #[test]
    fn class_is_independent_of_sphere() {
        let mut observed = 0.0;
        let mut null = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for seed in 0..20 {
            let x = generate(DatasetKind::Spheres3Class, &SpheresParams::default(), seed).unwrap();
            let s = x.label(SPHERE_LABEL).unwrap().codes();
            let c = x.label(CLASS_LABEL).unwrap().codes();
            observed += mutual_information(&s, &c) / 20.0;
            for _ in 0..50 {
                let mut shuffled = c.clone();
                shuffled.shuffle(&mut rng);
                null.push(mutual_information(&s, &shuffled));
            }
        }
        null.sort_by(f64::total_cmp);
        let p95 = null[(null.len() as f64 * 0.95) as usize];
        assert!(observed < p95, "{observed} vs {p95}");
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn entangling_raises_class_correlation() {
        let p = SpheresParams::default();
        let before = generate(DatasetKind::Spheres3Class, &p, 4).unwrap();
        let after = generate(DatasetKind::Spheres3ClassEntangled, &p, 4).unwrap();
        let codes: Vec<f64> = before.label(CLASS_LABEL).unwrap().values.iter().map(|v| match v.as_str() {
            "A" => 0.0,
            "B" => 1.0,
            _ => 2.0,
        }).collect();
        let col = |x: &DataMatrix| x.values().column(0).iter().copied().collect::<Vec<_>>();
        assert!(correlation(&col(&after), &codes).abs() > correlation(&col(&before), &codes).abs());
    }

    #[test]
    fn dropping_the_class_attribute_does_not_untangle() {
        use crate::engine::projection_purity;
        use crate::manifold::ProjectionFamily;
        let family = ProjectionFamily::new(crate::Constraint::Scaling, 4, 4).unwrap();
        let drop = family.retract(&[1.0, 1.0, 1.0, 0.0]).unwrap();
        let p = SpheresParams::default();
        let purity = |kind| {
            let x = generate(kind, &p, 0).unwrap();
            let codes = x.label(SPHERE_LABEL).unwrap().codes();
            projection_purity(x.values(), &drop, 15, &codes).unwrap()
        };
        assert!(purity(DatasetKind::Spheres3Class) > 0.95);
        assert!(purity(DatasetKind::Spheres3ClassEntangled) < 0.85);
    }

    #[test]
    fn entangle_edge_cases() {
        let x = generate(DatasetKind::Spheres3Class, &SpheresParams::default(), 5).unwrap();
        let same = entangle(&x, 3, 0, 0.0).unwrap();
        assert!((same.values() - x.values()).amax() < 1e-9);
        assert!(entangle(&x, 1, 1, 0.2).is_err());
        assert!(entangle(&x, 1, 0, 1.5).is_err());

        let mut v = x.values().clone();
        v.column_mut(0).fill(2.0);
        let flat = x.with_values(v).unwrap();
        let copy = entangle(&flat, 3, 0, 1.0).unwrap();
        let (zs, _) = zscore(&flat).unwrap();
        assert!((copy.values().column(0) - zs.values().column(3)).amax() < 1e-9);
    }

    /// Best accuracy of any straight-line split, by scanning directions and
    /// thresholds.
    fn best_linear_accuracy(points: &[[f64; 2]], labels: &[bool]) -> f64 {
        let n = points.len() as f64;
        let mut best: f64 = 0.0;
        for step in 0..360 {
            let angle = step as f64 * std::f64::consts::PI / 360.0;
            let (s, c) = angle.sin_cos();
            let mut proj: Vec<(f64, bool)> = points.iter().zip(labels).map(|(p, &l)| (c * p[0] + s * p[1], l)).collect();
            proj.sort_by(|a, b| a.0.total_cmp(&b.0));
            let total_true = labels.iter().filter(|&&l| l).count() as f64;
            let mut left_true = 0.0;
            for (i, &(_, l)) in proj.iter().enumerate() {
                if l {
                    left_true += 1.0;
                }
                let left = (i + 1) as f64;
                // left side predicted true, or left side predicted false
                let a = left_true + (n - left - (total_true - left_true));
                best = best.max(a / n).max(1.0 - a / n);
            }
        }
        best
    }

    #[test]
    fn spheres_are_not_linearly_separable() {
        let params = SpheresParams {
            noise_sd: 0.0,
            ..Default::default()
        };
        let x = gen_two_spheres(&params, 6).unwrap();
        let labels: Vec<bool> = x.label(SPHERE_LABEL).unwrap().codes().iter().map(|&c| c == 1).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let p = DMatrix::from_fn(3, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = x.values() * p;
            let pts: Vec<[f64; 2]> = (0..x.n()).map(|i| [y[(i, 0)], y[(i, 1)]]).collect();
            assert!(best_linear_accuracy(&pts, &labels) < 0.9);
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let p = SpheresParams::default();
        for kind in [DatasetKind::Spheres, DatasetKind::Spheres3Class, DatasetKind::Spheres3ClassEntangled] {
            assert_eq!(generate(kind, &p, 8).unwrap(), generate(kind, &p, 8).unwrap());
            assert_eq!(kind.as_str().parse::<DatasetKind>().unwrap(), kind);
        }
    }
}
