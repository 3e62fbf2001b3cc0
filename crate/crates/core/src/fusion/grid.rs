use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use super::problem::check_coverage;
use super::{fuse, MethodOutputs, WeightVector};
use crate::image::{clamp_unit, Raster, CHANNELS};
use crate::metrics::{
    check_ssim_size, evaluate_pair, psnr_from_mse, ssim_from_moments, window_mean, window_product, MetricReport,
};
use crate::{Error, Result};

fn grid_divisions(step: f64) -> Result<usize> {
    if !(step.is_finite() && step > 0.0 && step <= 1.0) {
        return Err(Error::GridStep(step));
    }
    let m = (1.0 / step).round();
    if (m * step - 1.0).abs() > 1e-9 {
        return Err(Error::GridStep(step));
    }
    Ok(m as usize)
}

fn compositions(parts: usize, total: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if parts == 1 {
        prefix.push(total);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for c in 0..=total {
        prefix.push(c);
        compositions(parts - 1, total - c, prefix, out);
        prefix.pop();
    }
}

/// Every weight vector `(c_1, ..., c_n) * step` with nonnegative integers
/// `c_i` summing to `1 / step`, in lexicographic order of `c`.
pub fn simplex_grid(n: usize, step: f64) -> Result<Vec<WeightVector>> {
    scaled_simplex_grid(n, step, 1.0)
}

/// [`simplex_grid`] scaled so every vector sums to `target_sum`.
pub fn scaled_simplex_grid(n: usize, step: f64, target_sum: f64) -> Result<Vec<WeightVector>> {
    if n == 0 {
        return Err(Error::InvalidParameter("grid needs at least one method".into()));
    }
    if !(target_sum.is_finite() && target_sum > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "grid weight sum must be positive, got {target_sum}"
        )));
    }
    let m = grid_divisions(step)?;
    let mut combos = Vec::new();
    compositions(n, m, &mut Vec::with_capacity(n), &mut combos);
    combos
        .into_iter()
        .map(|c| {
            let weights = c.iter().map(|&ci| target_sum * ci as f64 / m as f64).collect();
            WeightVector::new(weights, target_sum)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurfaceRow {
    pub weights: Vec<f64>,
    /// Mean of the finite per-image PSNR values; infinite when every image
    /// matches its ground truth exactly.
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    /// Images whose PSNR is infinite at this grid point.
    pub infinite_count: usize,
}

impl SurfaceRow {
    fn psnr_beats(&self, other: &SurfaceRow) -> bool {
        (self.infinite_count, self.mean_psnr) > (other.infinite_count, other.mean_psnr)
    }
}

/// Dataset-mean PSNR and SSIM over a weight grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurfaceTable {
    pub method_ids: Vec<String>,
    pub rows: Vec<SurfaceRow>,
    /// Row index with the highest PSNR (more infinite images win first).
    pub best_psnr: usize,
    pub best_ssim: usize,
}

impl SurfaceTable {
    fn new(method_ids: Vec<String>, rows: Vec<SurfaceRow>) -> Self {
        let mut best_psnr = 0;
        let mut best_ssim = 0;
        for (i, row) in rows.iter().enumerate() {
            if row.psnr_beats(&rows[best_psnr]) {
                best_psnr = i;
            }
            if row.mean_ssim > rows[best_ssim].mean_ssim {
                best_ssim = i;
            }
        }
        Self {
            method_ids,
            rows,
            best_psnr,
            best_ssim,
        }
    }

    pub fn best_psnr_row(&self) -> &SurfaceRow {
        &self.rows[self.best_psnr]
    }

    pub fn best_ssim_row(&self) -> &SurfaceRow {
        &self.rows[self.best_ssim]
    }

    /// CSV with header `k_1,...,k_n,mean_psnr,mean_ssim` and six decimals.
    /// PSNR is written as `inf` for rows where any image matched exactly.
    pub fn to_csv(&self) -> String {
        let n = self.method_ids.len();
        let mut out = String::new();
        for i in 1..=n {
            let _ = write!(out, "k_{i},");
        }
        out.push_str("mean_psnr,mean_ssim\n");
        for row in &self.rows {
            for k in &row.weights {
                let _ = write!(out, "{k:.6},");
            }
            if row.infinite_count > 0 {
                out.push_str("inf,");
            } else {
                let _ = write!(out, "{:.6},", row.mean_psnr);
            }
            let _ = writeln!(out, "{:.6}", row.mean_ssim);
        }
        out
    }
}

fn row_from_report(weights: &WeightVector, report: &MetricReport) -> SurfaceRow {
    SurfaceRow {
        weights: weights.weights().to_vec(),
        mean_psnr: report.mean_psnr.unwrap_or(f64::INFINITY),
        mean_ssim: report.mean_ssim,
        infinite_count: report.infinite_count,
    }
}

fn prepare(
    outputs_by_method: &MethodOutputs,
    gts: &BTreeMap<String, Raster>,
    step: f64,
    target_sum: f64,
) -> Result<(Vec<String>, Vec<WeightVector>)> {
    check_coverage(outputs_by_method, gts)?;
    for (id, gt) in gts {
        check_ssim_size(gt).map_err(|e| e.for_item(id.clone()))?;
    }
    let grid = scaled_simplex_grid(outputs_by_method.len(), step, target_sum)?;
    Ok((outputs_by_method.keys().cloned().collect(), grid))
}

/// Sweeps the weight grid, scoring every point by fusing, clamping and
/// evaluating each image.
///
/// When all inputs lie in `[0, 1]` and `target_sum <= 1`, nonnegative grid
/// weights can never push a fused sample out of range, so SSIM is computed
/// from per-image windowed moments combined linearly per grid point instead
/// of re-filtering every fused image. Otherwise this falls back to
/// [`sweep_surface_direct`].
pub fn sweep_surface(
    outputs_by_method: &MethodOutputs,
    gts: &BTreeMap<String, Raster>,
    step: f64,
    target_sum: f64,
) -> Result<SurfaceTable> {
    let (method_ids, grid) = prepare(outputs_by_method, gts, step, target_sum)?;
    let in_range = |r: &Raster| r.data().iter().all(|v| (0.0..=1.0).contains(v));
    let all_in_range = gts.values().all(in_range) && outputs_by_method.values().flat_map(|m| m.values()).all(in_range);
    if !(all_in_range && target_sum <= 1.0) {
        return sweep_surface_direct(outputs_by_method, gts, step, target_sum);
    }

    let n = method_ids.len();
    let points = grid.len();
    let mut psnr_finite_sum = vec![0.0; points];
    let mut infinite = vec![0usize; points];
    let mut ssim_sum = vec![0.0; points];

    for (id, gt) in gts {
        let outputs: Vec<&Raster> = outputs_by_method.values().map(|m| &m[id]).collect();
        let mse: Vec<f64> = grid
            .par_iter()
            .map(|w| {
                let k = w.weights();
                let total: f64 = gt
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(s, &g)| {
                        let mut f = 0.0;
                        for (out, &ki) in outputs.iter().zip(k) {
                            f += ki * out.data()[s];
                        }
                        let d = clamp_unit(f) - g;
                        d * d
                    })
                    .sum();
                total / gt.data().len() as f64
            })
            .collect();

        let (width, height) = (gt.width(), gt.height());
        let pixels = width * height;
        let mut ssim_channels = vec![0.0; points];
        for c in 0..CHANNELS {
            let g = gt.channel(c);
            let planes: Vec<Vec<f64>> = outputs.iter().map(|o| o.channel(c)).collect();
            let mu_g = window_mean(&g, width, height);
            let e_gg = window_product(&g, &g, width, height);
            let mu: Vec<Vec<f64>> = planes.par_iter().map(|p| window_mean(p, width, height)).collect();
            let cross_target: Vec<Vec<f64>> = planes
                .par_iter()
                .map(|p| window_product(p, &g, width, height))
                .collect();
            let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
            let cross: Vec<Vec<f64>> = pairs
                .par_iter()
                .map(|&(i, j)| window_product(&planes[i], &planes[j], width, height))
                .collect();

            ssim_channels.par_iter_mut().zip(grid.par_iter()).for_each(|(slot, w)| {
                let k = w.weights();
                let mut total = 0.0;
                for p in 0..pixels {
                    let mut mu_f = 0.0;
                    let mut e_fg = 0.0;
                    for i in 0..n {
                        mu_f += k[i] * mu[i][p];
                        e_fg += k[i] * cross_target[i][p];
                    }
                    let mut e_ff = 0.0;
                    for (&(i, j), plane) in pairs.iter().zip(&cross) {
                        let factor = if i == j { 1.0 } else { 2.0 };
                        e_ff += factor * k[i] * k[j] * plane[p];
                    }
                    total += ssim_from_moments(mu_f, mu_g[p], e_ff, e_gg[p], e_fg);
                }
                *slot += total / pixels as f64;
            });
        }

        for p in 0..points {
            let psnr = psnr_from_mse(mse[p]);
            if psnr.is_finite() {
                psnr_finite_sum[p] += psnr;
            } else {
                infinite[p] += 1;
            }
            ssim_sum[p] += ssim_channels[p] / CHANNELS as f64;
        }
    }

    let count = gts.len();
    let rows = grid
        .iter()
        .enumerate()
        .map(|(p, w)| {
            let finite = count - infinite[p];
            SurfaceRow {
                weights: w.weights().to_vec(),
                mean_psnr: if finite == 0 {
                    f64::INFINITY
                } else {
                    psnr_finite_sum[p] / finite as f64
                },
                mean_ssim: ssim_sum[p] / count as f64,
                infinite_count: infinite[p],
            }
        })
        .collect();
    Ok(SurfaceTable::new(method_ids, rows))
}

/// Reference sweep: materializes every fused image and scores it with
/// [`evaluate_pair`].
pub fn sweep_surface_direct(
    outputs_by_method: &MethodOutputs,
    gts: &BTreeMap<String, Raster>,
    step: f64,
    target_sum: f64,
) -> Result<SurfaceTable> {
    let (method_ids, grid) = prepare(outputs_by_method, gts, step, target_sum)?;
    let rows = grid
        .par_iter()
        .map(|w| {
            let rows = gts
                .iter()
                .map(|(id, gt)| {
                    let outputs: Vec<&Raster> = outputs_by_method.values().map(|m| &m[id]).collect();
                    let fused = fuse(&outputs, w)?;
                    evaluate_pair(id, &fused, gt)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(row_from_report(w, &MetricReport::from_rows(rows)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SurfaceTable::new(method_ids, rows))
}
