use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{FusionProblem, WeightVector};
use crate::{Error, Result};

/// KKT systems with a larger 2-norm condition number are treated as singular.
pub const KKT_CONDITION_LIMIT: f64 = 1e12;

/// How well the method outputs can represent the target.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GramDiagnostics {
    pub method_ids: Vec<String>,
    /// `<a_i, y> / (||a_i|| ||y||)`; 0 when either norm vanishes.
    pub correlations: Vec<f64>,
    /// `lambda_max / lambda_min` of `G`; infinite (JSON null) when `G` is singular.
    pub gram_condition: f64,
    /// `||A k - y||` at the evaluated weights (root mean squared residual).
    pub residual_norm: f64,
    /// `||a_i - y||^2` for each method.
    pub per_method_mse: Vec<f64>,
    /// 2-norm condition number of the KKT matrix, when the closed form was used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kkt_condition: Option<f64>,
}

fn condition_symmetric(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Diagnostics of `problem` evaluated at `weights`.
pub fn diagnostics(problem: &FusionProblem, weights: &[f64]) -> GramDiagnostics {
    let gram = problem.gram();
    let y_norm = problem.target_norm_sq().sqrt();
    let correlations = (0..problem.method_count())
        .map(|i| {
            let denom = gram[(i, i)].sqrt() * y_norm;
            if denom > 0.0 {
                (problem.rhs()[i] / denom).clamp(-1.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();
    GramDiagnostics {
        method_ids: problem.method_ids().to_vec(),
        correlations,
        gram_condition: condition_symmetric(gram),
        residual_norm: problem.residual_mse(weights).sqrt(),
        per_method_mse: problem.per_method_mse(),
        kkt_condition: None,
    }
}

/// Minimizes `||A k - y||^2` subject to `sum_i k_i = a`.
///
/// Solves the KKT system
///
/// ```text
/// [ 2(G + ridge I)  1 ] [ k      ]   [ 2b ]
/// [ 1^T             0 ] [ lambda ] = [ a  ]
/// ```
///
/// Weights may be negative. With `ridge = 0` a rank-deficient system (for
/// example two identical methods) is reported as [`Error::Singular`].
pub fn solve_weights_closed_form(
    problem: &FusionProblem,
    a: f64,
    ridge: f64,
) -> Result<(WeightVector, GramDiagnostics)> {
    if !a.is_finite() {
        return Err(Error::InvalidParameter(format!("weight sum must be finite, got {a}")));
    }
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(Error::InvalidParameter(format!("ridge must be >= 0, got {ridge}")));
    }
    let n = problem.method_count();
    let mut kkt = DMatrix::zeros(n + 1, n + 1);
    let mut rhs = DVector::zeros(n + 1);
    for i in 0..n {
        for j in 0..n {
            kkt[(i, j)] = 2.0 * problem.gram()[(i, j)];
        }
        kkt[(i, i)] += 2.0 * ridge;
        kkt[(i, n)] = 1.0;
        kkt[(n, i)] = 1.0;
        rhs[i] = 2.0 * problem.rhs()[i];
    }
    rhs[n] = a;

    let singular_values = kkt.clone().singular_values();
    let s_max = singular_values.max();
    let s_min = singular_values.min();
    let condition = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
    if condition.is_nan() || condition > KKT_CONDITION_LIMIT {
        return Err(Error::Singular { condition });
    }
    let solution = kkt.lu().solve(&rhs).ok_or(Error::Singular { condition })?;
    let k: Vec<f64> = solution.iter().take(n).copied().collect();
    let mut diag = diagnostics(problem, &k);
    diag.kkt_condition = Some(condition);
    Ok((WeightVector::new(k, a)?, diag))
}
