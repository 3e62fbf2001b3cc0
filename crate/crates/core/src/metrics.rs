//! Full-reference image quality metrics.
//!
//! PSNR uses a peak of 1.0. SSIM uses an 11x11 Gaussian window with
//! sigma 1.5, `C1 = (0.01 L)^2`, `C2 = (0.03 L)^2` with `L = 1`, symmetric
//! border reflection (the map has one value per pixel), and is averaged over
//! the R, G and B channels.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::filter::{blur_plane, gaussian_kernel};
use crate::image::{Raster, CHANNELS};
use crate::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Mean of squared sample differences over all pixels and channels.
pub fn mse(a: &Raster, b: &Raster) -> Result<f64> {
    a.check_same_shape(b)?;
    let total: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(total / a.data().len() as f64)
}

/// `10 log10(1 / mse)`; `f64::INFINITY` when the rasters are identical.
pub fn psnr(a: &Raster, b: &Raster) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// SSIM at one pixel from windowed first and second moments.
#[inline]
pub(crate) fn ssim_from_moments(mu_a: f64, mu_b: f64, e_aa: f64, e_bb: f64, e_ab: f64) -> f64 {
    let var_a = e_aa - mu_a * mu_a;
    let var_b = e_bb - mu_b * mu_b;
    let cov = e_ab - mu_a * mu_b;
    let num = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2);
    let den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2);
    num / den
}

pub(crate) fn check_ssim_size(img: &Raster) -> Result<()> {
    if img.width().min(img.height()) < SSIM_WINDOW {
        return Err(Error::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            window: SSIM_WINDOW,
        });
    }
    Ok(())
}

/// Windowed moments of one channel pair, one value per pixel.
pub(crate) struct ChannelMoments {
    pub mu_a: Vec<f64>,
    pub mu_b: Vec<f64>,
    pub e_aa: Vec<f64>,
    pub e_bb: Vec<f64>,
    pub e_ab: Vec<f64>,
}

/// Gaussian-window mean of one plane.
pub(crate) fn window_mean(plane: &[f64], width: usize, height: usize) -> Vec<f64> {
    blur_plane(plane, width, height, &gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA))
}

/// Gaussian-window mean of the product of two planes.
pub(crate) fn window_product(a: &[f64], b: &[f64], width: usize, height: usize) -> Vec<f64> {
    let product: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    window_mean(&product, width, height)
}

pub(crate) fn channel_moments(a: &[f64], b: &[f64], width: usize, height: usize) -> ChannelMoments {
    ChannelMoments {
        mu_a: window_mean(a, width, height),
        mu_b: window_mean(b, width, height),
        e_aa: window_product(a, a, width, height),
        e_bb: window_product(b, b, width, height),
        e_ab: window_product(a, b, width, height),
    }
}

/// Per-channel mean SSIM.
pub fn ssim_channels(a: &Raster, b: &Raster) -> Result<[f64; CHANNELS]> {
    a.check_same_shape(b)?;
    check_ssim_size(a)?;
    let (w, h) = (a.width(), a.height());
    let mut out = [0.0; CHANNELS];
    for (c, slot) in out.iter_mut().enumerate() {
        let m = channel_moments(&a.channel(c), &b.channel(c), w, h);
        let total: f64 = (0..w * h)
            .map(|i| ssim_from_moments(m.mu_a[i], m.mu_b[i], m.e_aa[i], m.e_bb[i], m.e_ab[i]))
            .sum();
        *slot = total / (w * h) as f64;
    }
    Ok(out)
}

pub fn ssim(a: &Raster, b: &Raster) -> Result<f64> {
    let per_channel = ssim_channels(a, b)?;
    Ok(per_channel.iter().sum::<f64>() / CHANNELS as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageMetrics {
    pub id: String,
    pub mse: f64,
    /// Decibels; `f64::INFINITY` when `mse == 0`.
    pub psnr: f64,
    pub ssim: f64,
}

impl Serialize for ImageMetrics {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("ImageMetrics", 5)?;
        st.serialize_field("id", &self.id)?;
        st.serialize_field("psnr_db", &finite_or_none(self.psnr))?;
        st.serialize_field("infinite", &self.psnr.is_infinite())?;
        st.serialize_field("ssim", &self.ssim)?;
        st.serialize_field("mse", &self.mse)?;
        st.end()
    }
}

fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Per-image and dataset-mean metrics.
///
/// `mean_psnr` averages the finite per-image values only; images with
/// infinite PSNR are counted in `infinite_count`. It is `None` when every
/// image is a perfect match.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub per_image: Vec<ImageMetrics>,
    pub mean_psnr: Option<f64>,
    pub mean_ssim: f64,
    pub mean_mse: f64,
    pub count: usize,
    pub infinite_count: usize,
}

impl MetricReport {
    /// Aggregates per-image rows, sorting them by id.
    pub fn from_rows(mut per_image: Vec<ImageMetrics>) -> Self {
        per_image.sort_by(|a, b| a.id.cmp(&b.id));
        let count = per_image.len();
        let finite: Vec<f64> = per_image.iter().map(|m| m.psnr).filter(|p| p.is_finite()).collect();
        let mean_psnr = (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64);
        let mean = |f: fn(&ImageMetrics) -> f64| {
            if count == 0 {
                0.0
            } else {
                per_image.iter().map(f).sum::<f64>() / count as f64
            }
        };
        Self {
            mean_ssim: mean(|m| m.ssim),
            mean_mse: mean(|m| m.mse),
            mean_psnr,
            count,
            infinite_count: count - finite.len(),
            per_image,
        }
    }

    /// Aligned plain-text table, one line per image plus a mean row.
    pub fn to_text_table(&self) -> String {
        let id_width = self.per_image.iter().map(|m| m.id.len()).chain([4]).max().unwrap_or(4);
        let fmt_psnr = |p: Option<f64>| match p {
            Some(v) => format!("{v:>10.4}"),
            None => format!("{:>10}", "inf"),
        };
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<id_width$}  {:>10}  {:>8}  {:>12}",
            "id", "psnr_db", "ssim", "mse"
        );
        for m in &self.per_image {
            let _ = writeln!(
                out,
                "{:<id_width$}  {}  {:>8.5}  {:>12.6e}",
                m.id,
                fmt_psnr(finite_or_none(m.psnr)),
                m.ssim,
                m.mse
            );
        }
        let _ = writeln!(
            out,
            "{:<id_width$}  {}  {:>8.5}  {:>12.6e}",
            "mean",
            fmt_psnr(self.mean_psnr),
            self.mean_ssim,
            self.mean_mse
        );
        if self.infinite_count > 0 {
            let _ = writeln!(
                out,
                "({} image(s) with infinite PSNR excluded from the mean)",
                self.infinite_count
            );
        }
        out
    }
}

pub(crate) fn check_same_ids<A, B>(
    left: &BTreeMap<String, A>,
    right: &BTreeMap<String, B>,
    left_name: &str,
    right_name: &str,
) -> Result<()> {
    let missing: Vec<&str> = right
        .keys()
        .filter(|k| !left.contains_key(*k))
        .map(String::as_str)
        .collect();
    let extra: Vec<&str> = left
        .keys()
        .filter(|k| !right.contains_key(*k))
        .map(String::as_str)
        .collect();
    if missing.is_empty() && extra.is_empty() {
        return Ok(());
    }
    let mut msg = String::new();
    if !missing.is_empty() {
        let _ = write!(msg, "{left_name} lacks [{}]", missing.join(", "));
    }
    if !extra.is_empty() {
        if !msg.is_empty() {
            msg.push_str("; ");
        }
        let _ = write!(msg, "{right_name} lacks [{}]", extra.join(", "));
    }
    Err(Error::IdMismatch(msg))
}

/// Metrics of one output against its ground truth, both clamped first.
pub fn evaluate_pair(id: &str, output: &Raster, gt: &Raster) -> Result<ImageMetrics> {
    let (output, gt) = (output.clamped(), gt.clamped());
    let mse = mse(&output, &gt)?;
    Ok(ImageMetrics {
        id: id.to_string(),
        mse,
        psnr: psnr_from_mse(mse),
        ssim: ssim(&output, &gt)?,
    })
}

/// Evaluates every output against the ground truth with the same id.
pub fn evaluate_dataset(outputs: &BTreeMap<String, Raster>, gts: &BTreeMap<String, Raster>) -> Result<MetricReport> {
    check_same_ids(outputs, gts, "outputs", "ground truth")?;
    let rows = gts
        .par_iter()
        .map(|(id, gt)| evaluate_pair(id, &outputs[id], gt).map_err(|e| e.for_item(id.clone())))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::from_rows(rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(w: usize, h: usize, seed: usize) -> Raster {
        Raster::from_fn(w, h, |x, y, c| {
            (((x * 31 + y * 17 + c * 7 + seed * 13) % 29) as f64) / 28.0
        })
    }

    #[test]
    fn mse_and_psnr_constants() {
        let zero = Raster::filled(12, 12, 0.0);
        let half = Raster::filled(12, 12, 0.5);
        let one = Raster::filled(12, 12, 1.0);
        assert_eq!(mse(&zero, &zero).unwrap(), 0.0);
        assert_eq!(mse(&zero, &half).unwrap(), 0.25);
        assert!((psnr(&zero, &half).unwrap() - 6.020599913279624).abs() < 1e-12);
        assert_eq!(psnr(&zero, &one).unwrap(), 0.0);
        assert_eq!(psnr(&half, &half).unwrap(), f64::INFINITY);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = Raster::filled(12, 12, 0.0);
        let b = Raster::filled(12, 13, 0.0);
        assert!(matches!(mse(&a, &b), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(ssim(&a, &b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = Raster::filled(10, 40, 0.0);
        assert!(matches!(ssim(&a, &a), Err(Error::ImageTooSmall { .. })));
    }

    #[test]
    fn ssim_self_is_exactly_one() {
        let a = pattern(23, 17, 1);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn ssim_constant_pair_closed_form() {
        let a = Raster::filled(16, 16, 0.25);
        let b = Raster::filled(16, 16, 0.75);
        let expected = (2.0 * 0.25 * 0.75 + 1e-4) / (0.25f64.powi(2) + 0.75f64.powi(2) + 1e-4);
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.60007).abs() < 1e-5);
    }

    #[test]
    fn ssim_symmetric() {
        let a = pattern(20, 14, 2);
        let b = pattern(20, 14, 5);
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn dataset_means() {
        let mut outputs = BTreeMap::new();
        let mut gts = BTreeMap::new();
        outputs.insert("a".to_string(), Raster::filled(12, 12, 0.0));
        gts.insert("a".to_string(), Raster::filled(12, 12, 0.5));
        outputs.insert("b".to_string(), Raster::filled(12, 12, 0.0));
        gts.insert("b".to_string(), Raster::filled(12, 12, 1.0));
        let report = evaluate_dataset(&outputs, &gts).unwrap();
        assert_eq!(report.count, 2);
        assert!((report.mean_psnr.unwrap() - 3.0103).abs() < 1e-4);
        let per: f64 = report.per_image.iter().map(|m| m.psnr).sum::<f64>() / 2.0;
        assert_eq!(report.mean_psnr.unwrap(), per);
    }

    #[test]
    fn dataset_identical_outputs() {
        let mut gts = BTreeMap::new();
        gts.insert("x".to_string(), pattern(12, 12, 0));
        gts.insert("y".to_string(), pattern(12, 12, 3));
        let report = evaluate_dataset(&gts, &gts).unwrap();
        assert_eq!(report.mean_ssim, 1.0);
        assert_eq!(report.mean_psnr, None);
        assert_eq!(report.infinite_count, 2);
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["per_image"][0]["psnr_db"], serde_json::Value::Null);
        assert_eq!(json["per_image"][0]["infinite"], true);
    }

    #[test]
    fn dataset_singleton_and_id_mismatch() {
        let mut outputs = BTreeMap::new();
        let mut gts = BTreeMap::new();
        outputs.insert("only".to_string(), pattern(12, 12, 1));
        gts.insert("only".to_string(), pattern(12, 12, 2));
        let report = evaluate_dataset(&outputs, &gts).unwrap();
        assert_eq!(report.mean_ssim, report.per_image[0].ssim);
        assert_eq!(report.mean_psnr, Some(report.per_image[0].psnr));

        gts.insert("other".to_string(), pattern(12, 12, 2));
        let err = evaluate_dataset(&outputs, &gts).unwrap_err();
        assert!(err.to_string().contains("other"), "{err}");
    }

    #[test]
    fn evaluation_clamps_before_scoring() {
        let out = Raster::filled(12, 12, 1.4);
        let gt = Raster::filled(12, 12, 1.0);
        assert_eq!(evaluate_pair("p", &out, &gt).unwrap().mse, 0.0);
    }
}
