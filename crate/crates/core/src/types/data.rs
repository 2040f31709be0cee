use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{bail_arg, Result};

/// A categorical column carried alongside the numeric attributes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelColumn {
    pub name: String,
    pub values: Vec<String>,
}

impl LabelColumn {
    pub fn new(name: impl Into<String>, values: Vec<String>) -> Self {
        Self {
            name: name.into(),
            values,
        }
    }

    /// Distinct tags in first-appearance order.
    pub fn categories(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.values
            .iter()
            .filter(|v| seen.insert(v.as_str()))
            .cloned()
            .collect()
    }

    /// Integer codes following [`LabelColumn::categories`] order.
    pub fn codes(&self) -> Vec<usize> {
        let cats = self.categories();
        self.values
            .iter()
            .map(|v| cats.iter().position(|c| c == v).unwrap())
            .collect()
    }

    /// Instance indices grouped by category, in category order.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let cats = self.categories();
        let mut groups = vec![Vec::new(); cats.len()];
        for (i, code) in self.codes().into_iter().enumerate() {
            groups[code].push(i);
        }
        groups
    }
}

/// The input table: `n` instances by `m` numeric attributes, plus optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    attribute_names: Vec<String>,
    labels: Vec<LabelColumn>,
}

impl DataMatrix {
    pub fn new(
        values: DMatrix<f64>,
        attribute_names: Vec<String>,
        labels: Vec<LabelColumn>,
    ) -> Result<Self> {
        let (n, m) = values.shape();
        if n < 2 {
            bail_arg!("data needs at least 2 instances, got {n}");
        }
        if m < 1 {
            bail_arg!("data needs at least 1 attribute");
        }
        if attribute_names.len() != m {
            bail_arg!(
                "{} attribute names for {m} columns",
                attribute_names.len()
            );
        }
        let mut seen = HashSet::new();
        for name in &attribute_names {
            if !seen.insert(name.as_str()) {
                bail_arg!("duplicate attribute name `{name}`");
            }
        }
        if let Some((idx, _)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            bail_arg!(
                "non-finite value at row {}, column `{}`",
                idx % n,
                attribute_names[idx / n]
            );
        }
        for label in &labels {
            if label.values.len() != n {
                bail_arg!(
                    "label column `{}` has {} entries for {n} rows",
                    label.name,
                    label.values.len()
                );
            }
        }
        Ok(Self {
            values,
            attribute_names,
            labels,
        })
    }

    /// Builds a matrix with generated attribute names `a0, a1, ...`.
    pub fn from_values(values: DMatrix<f64>) -> Result<Self> {
        let names = (0..values.ncols()).map(|j| format!("a{j}")).collect();
        Self::new(values, names, Vec::new())
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn m(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn labels(&self) -> &[LabelColumn] {
        &self.labels
    }

    pub fn label(&self, name: &str) -> Option<&LabelColumn> {
        self.labels.iter().find(|l| l.name == name)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.attribute_names.iter().position(|a| a == name)
    }

    /// Replaces the numeric values, keeping names and labels.
    pub fn with_values(&self, values: DMatrix<f64>) -> Result<Self> {
        Self::new(values, self.attribute_names.clone(), self.labels.clone())
    }

    pub(crate) fn into_parts(self) -> (DMatrix<f64>, Vec<String>, Vec<LabelColumn>) {
        (self.values, self.attribute_names, self.labels)
    }
}
