use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::image::Raster;
use crate::metrics::check_same_ids;
use crate::{Error, Result};

/// Method name -> image id -> that method's output for the image.
pub type MethodOutputs = BTreeMap<String, BTreeMap<String, Raster>>;

/// The least-squares view of a fusion task.
///
/// Each method contributes one column `a_i`: all samples of its outputs over
/// the tuning set, concatenated in sorted-id order. `y` is the matching
/// ground-truth vector. Inner products use the uniform empirical measure
/// over samples, `<u, v> = (1/N) sum_s u_s v_s`, so `G_ij = <a_i, a_j>` and
/// `b_i = <a_i, y>` are mean products and `||a_i - y||^2` is an MSE.
#[derive(Clone, Debug)]
pub struct FusionProblem {
    method_ids: Vec<String>,
    image_ids: Vec<String>,
    columns: Vec<Vec<f64>>,
    target: Vec<f64>,
    gram: DMatrix<f64>,
    rhs: DVector<f64>,
    target_sq: f64,
}

/// Compensated (Neumaier) mean of `x_s * y_s`.
fn mean_product(x: &[f64], y: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for (a, b) in x.iter().zip(y) {
        let term = a * b;
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    (sum + comp) / x.len() as f64
}

impl FusionProblem {
    /// Builds a problem from pre-flattened columns.
    pub fn from_columns(method_ids: Vec<String>, columns: Vec<Vec<f64>>, target: Vec<f64>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidParameter("at least one method is required".into()));
        }
        if method_ids.len() != columns.len() {
            return Err(Error::CountMismatch {
                what: "method ids",
                expected: columns.len(),
                got: method_ids.len(),
            });
        }
        if target.is_empty() {
            return Err(Error::InvalidParameter("empty target vector".into()));
        }
        if let Some((id, col)) = method_ids.iter().zip(&columns).find(|(_, c)| c.len() != target.len()) {
            return Err(Error::CountMismatch {
                what: "samples",
                expected: target.len(),
                got: col.len(),
            }
            .for_item(id.clone()));
        }
        let n = columns.len();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
        let entries: Vec<f64> = pairs
            .par_iter()
            .map(|&(i, j)| mean_product(&columns[i], &columns[j]))
            .collect();
        let mut gram = DMatrix::zeros(n, n);
        for (&(i, j), &v) in pairs.iter().zip(&entries) {
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
        let rhs = DVector::from_iterator(
            n,
            columns.par_iter().map(|c| mean_product(c, &target)).collect::<Vec<_>>(),
        );
        let target_sq = mean_product(&target, &target);
        Ok(Self {
            method_ids,
            image_ids: Vec::new(),
            columns,
            target,
            gram,
            rhs,
            target_sq,
        })
    }

    pub fn method_ids(&self) -> &[String] {
        &self.method_ids
    }

    /// Image ids in column order; empty when built from raw columns.
    pub fn image_ids(&self) -> &[String] {
        &self.image_ids
    }

    pub fn method_count(&self) -> usize {
        self.columns.len()
    }

    pub fn sample_count(&self) -> usize {
        self.target.len()
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    /// `G_ij = <a_i, a_j>`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `b_i = <a_i, y>`.
    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    /// `||y||^2`.
    pub fn target_norm_sq(&self) -> f64 {
        self.target_sq
    }

    /// `||A k - y||^2`, summed directly over samples.
    pub fn residual_mse(&self, weights: &[f64]) -> f64 {
        assert_eq!(weights.len(), self.columns.len(), "one weight per method");
        let total: f64 = (0..self.target.len())
            .into_par_iter()
            .with_min_len(4096)
            .map(|s| {
                let fused: f64 = self.columns.iter().zip(weights).map(|(c, k)| k * c[s]).sum();
                let r = fused - self.target[s];
                r * r
            })
            .sum();
        total / self.target.len() as f64
    }

    /// `||a_i - y||^2` for every method.
    pub fn per_method_mse(&self) -> Vec<f64> {
        self.columns
            .par_iter()
            .map(|c| c.iter().zip(&self.target).map(|(a, y)| (a - y) * (a - y)).sum::<f64>() / self.target.len() as f64)
            .collect()
    }
}

/// Flattens every method's outputs and the ground truth in sorted-id order.
pub fn build_problem(outputs_by_method: &MethodOutputs, gts: &BTreeMap<String, Raster>) -> Result<FusionProblem> {
    check_coverage(outputs_by_method, gts)?;
    let flatten = |images: &BTreeMap<String, Raster>| -> Vec<f64> {
        images.values().flat_map(|r| r.data().iter().copied()).collect()
    };
    let method_ids: Vec<String> = outputs_by_method.keys().cloned().collect();
    let columns: Vec<Vec<f64>> = outputs_by_method.values().map(flatten).collect();
    let mut problem = FusionProblem::from_columns(method_ids, columns, flatten(gts))?;
    problem.image_ids = gts.keys().cloned().collect();
    Ok(problem)
}

/// Every method covers exactly the ground-truth ids with matching shapes.
pub(crate) fn check_coverage(outputs_by_method: &MethodOutputs, gts: &BTreeMap<String, Raster>) -> Result<()> {
    if outputs_by_method.is_empty() {
        return Err(Error::InvalidParameter("at least one method is required".into()));
    }
    if gts.is_empty() {
        return Err(Error::InvalidParameter("the tuning set is empty".into()));
    }
    for (method, outputs) in outputs_by_method {
        check_same_ids(outputs, gts, method, "ground truth").map_err(|e| e.for_item(method.clone()))?;
        for (id, gt) in gts {
            outputs[id]
                .check_same_shape(gt)
                .map_err(|e| e.for_item(format!("{method}/{id}")))?;
        }
    }
    Ok(())
}
