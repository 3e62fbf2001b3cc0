//! Constrained linear fusion of method outputs.
//!
//! A fused image is `sum_i k_i * F_i(I)` over the outputs `F_i(I)` of `n`
//! enhancement methods, with the weights constrained to `sum_i k_i = a`
//! (normally `a = 1`, which keeps the mean brightness of the blend equal to
//! the weighted mean brightness of the inputs).
//!
//! Weights are found either in closed form, as the equality-constrained
//! least-squares projection of the target onto the span of the method
//! outputs ([`solve_weights_closed_form`]), or by exhaustive search over a
//! regular grid on the weight simplex ([`sweep_surface`]).

mod grid;
mod problem;
mod solve;

use serde::{Deserialize, Serialize};

use crate::image::Raster;
use crate::{Error, Result};

pub use grid::{scaled_simplex_grid, simplex_grid, sweep_surface, sweep_surface_direct, SurfaceRow, SurfaceTable};
pub use problem::{build_problem, FusionProblem, MethodOutputs};
pub use solve::{diagnostics, solve_weights_closed_form, GramDiagnostics, KKT_CONDITION_LIMIT};

/// Maximum allowed `|sum_i k_i - a|`.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-6;

/// Fusion coefficients constrained to sum to `target_sum`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeights")]
pub struct WeightVector {
    weights: Vec<f64>,
    target_sum: f64,
    nonnegative: bool,
}

#[derive(Deserialize)]
struct RawWeights {
    weights: Vec<f64>,
    #[serde(default = "default_target_sum")]
    target_sum: f64,
}

fn default_target_sum() -> f64 {
    1.0
}

impl TryFrom<RawWeights> for WeightVector {
    type Error = Error;

    fn try_from(raw: RawWeights) -> Result<Self> {
        WeightVector::new(raw.weights, raw.target_sum)
    }
}

impl WeightVector {
    pub fn new(weights: Vec<f64>, target_sum: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter("at least one weight is required".into()));
        }
        if let Some(bad) = weights.iter().find(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite weight {bad}")));
        }
        if !target_sum.is_finite() {
            return Err(Error::InvalidParameter(format!("non-finite weight sum {target_sum}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - target_sum).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::WeightSum {
                sum,
                target: target_sum,
            });
        }
        let nonnegative = weights.iter().all(|&w| w >= 0.0);
        Ok(Self {
            weights,
            target_sum,
            nonnegative,
        })
    }

    /// Weights summing to 1.
    pub fn unit(weights: Vec<f64>) -> Result<Self> {
        Self::new(weights, 1.0)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn target_sum(&self) -> f64 {
        self.target_sum
    }

    pub fn is_nonnegative(&self) -> bool {
        self.nonnegative
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Per-sample weighted sum of `outputs`, unclamped.
pub fn fuse<R: AsRef<Raster>>(outputs: &[R], weights: &WeightVector) -> Result<Raster> {
    if outputs.len() != weights.len() {
        return Err(Error::CountMismatch {
            what: "method outputs",
            expected: weights.len(),
            got: outputs.len(),
        });
    }
    let first = outputs[0].as_ref();
    for other in &outputs[1..] {
        first.check_same_shape(other.as_ref())?;
    }
    let mut data = vec![0.0; first.data().len()];
    for (out, &k) in outputs.iter().zip(weights.weights()) {
        for (acc, &v) in data.iter_mut().zip(out.as_ref().data()) {
            *acc += k * v;
        }
    }
    Raster::new(first.width(), first.height(), data)
}

impl AsRef<Raster> for Raster {
    fn as_ref(&self) -> &Raster {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::mean_luminance;

    #[test]
    fn weight_sum_enforced() {
        assert!(WeightVector::unit(vec![0.5, 0.5]).is_ok());
        assert!(WeightVector::unit(vec![0.5, 0.5 + 2e-6]).is_err());
        assert!(WeightVector::unit(vec![0.5, 0.5 + 5e-7]).is_ok());
        assert!(WeightVector::unit(vec![]).is_err());
        assert!(WeightVector::new(vec![1.5, -0.5], 1.0).is_ok_and(|w| !w.is_nonnegative()));
        assert!(WeightVector::new(vec![1.0, 1.0], 2.0).is_ok());
        let err = serde_json::from_str::<WeightVector>(r#"{"weights":[0.5,0.4]}"#).unwrap_err();
        assert!(err.to_string().contains("sum"), "{err}");
    }

    #[test]
    fn json_round_trip_recomputes_flag() {
        let w: WeightVector = serde_json::from_str(r#"{"weights":[0.16,0.40,0.44],"nonnegative":false}"#).unwrap();
        assert!(w.is_nonnegative());
        assert_eq!(w.target_sum(), 1.0);
    }

    #[test]
    fn vertex_weights_select_one_output() {
        let a = Raster::from_fn(3, 2, |x, y, c| (x + y + c) as f64 / 7.0);
        let b = Raster::filled(3, 2, 0.9);
        let c = Raster::filled(3, 2, 0.1);
        let w = WeightVector::unit(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(fuse(&[&a, &b, &c], &w).unwrap(), a);
    }

    #[test]
    fn constant_blends() {
        let w = WeightVector::unit(vec![0.5, 0.5]).unwrap();
        let out = fuse(&[Raster::filled(2, 2, 0.2), Raster::filled(2, 2, 0.6)], &w).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.4).abs() < 1e-15));

        let w = WeightVector::unit(vec![0.16, 0.40, 0.44]).unwrap();
        let outs = [0.1, 0.2, 0.3].map(|v| Raster::filled(2, 2, v));
        let out = fuse(&outs, &w).unwrap();
        let expected = 0.16 * 0.1 + 0.40 * 0.2 + 0.44 * 0.3;
        assert!((expected - 0.228f64).abs() < 1e-15);
        assert!(out.data().iter().all(|v| (v - 0.228).abs() < 1e-12));
    }

    #[test]
    fn fuse_checks_counts_and_shapes() {
        let w = WeightVector::unit(vec![0.5, 0.5]).unwrap();
        let a = Raster::filled(2, 2, 0.0);
        assert!(matches!(fuse(&[&a], &w), Err(Error::CountMismatch { .. })));
        let b = Raster::filled(2, 3, 0.0);
        assert!(matches!(fuse(&[&a, &b], &w), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn fused_mean_is_weighted_mean() {
        let a = Raster::from_fn(5, 4, |x, y, c| ((x * 3 + y + c) % 5) as f64 / 4.0);
        let b = Raster::from_fn(5, 4, |x, y, _| ((x + y * 2) % 3) as f64 / 2.0);
        let w = WeightVector::unit(vec![1.3, -0.3]).unwrap();
        let fused = fuse(&[&a, &b], &w).unwrap();
        let expected = 1.3 * mean_luminance(&a) - 0.3 * mean_luminance(&b);
        assert!((mean_luminance(&fused) - expected).abs() < 1e-12);
    }
}
