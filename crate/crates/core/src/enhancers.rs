//! Deterministic stand-in enhancement operators, random gamma augmentation
//! and a seeded low-light degrader.
//!
//! All randomness comes from [`ChaCha8Rng`] seeded with
//! `SeedableRng::seed_from_u64`, so a seed fully determines every draw.
//! Batch jobs derive one seed per item with [`derive_seed`].

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::filter::{blur_plane, gaussian_kernel_for_sigma};
use crate::image::{clamp_unit, Raster, CHANNELS};
use crate::{Error, Result};

pub const DEFAULT_GAMMA_LO: f64 = 0.6;
pub const DEFAULT_GAMMA_HI: f64 = 1.2;

/// Number of histogram bins used by [`EnhancerKind::HistEqualize`].
pub const HIST_BINS: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnhancerKind {
    Identity,
    Gamma,
    LinearStretch,
    HistEqualize,
    LogRetinex,
}

impl EnhancerKind {
    fn param_names(self) -> &'static [&'static str] {
        match self {
            EnhancerKind::Gamma => &["gamma"],
            EnhancerKind::LogRetinex => &["blur_sigma"],
            _ => &[],
        }
    }
}

/// One enhancement operator with its scalar parameters.
///
/// `gamma` needs `{"gamma": exponent}`, `log_retinex` needs
/// `{"blur_sigma": sigma}`; the other kinds take no parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnhancerSpec {
    pub kind: EnhancerKind,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl EnhancerSpec {
    pub fn new(kind: EnhancerKind) -> Self {
        Self {
            kind,
            params: BTreeMap::new(),
        }
    }

    pub fn gamma(exponent: f64) -> Self {
        Self::new(EnhancerKind::Gamma).with_param("gamma", exponent)
    }

    pub fn log_retinex(blur_sigma: f64) -> Self {
        Self::new(EnhancerKind::LogRetinex).with_param("blur_sigma", blur_sigma)
    }

    pub fn with_param(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }

    fn positive_param(&self, name: &str) -> Result<f64> {
        match self.params.get(name) {
            Some(&v) if v.is_finite() && v > 0.0 => Ok(v),
            Some(v) => Err(Error::InvalidParameter(format!(
                "{name} must be positive and finite, got {v}"
            ))),
            None => Err(Error::InvalidParameter(format!(
                "{:?} requires parameter {name}",
                self.kind
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let allowed = self.kind.param_names();
        if let Some(unknown) = self.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::InvalidParameter(format!(
                "unknown parameter {unknown} for {:?}",
                self.kind
            )));
        }
        for name in allowed {
            self.positive_param(name)?;
        }
        Ok(())
    }
}

/// Applies one enhancer. Inputs are clamped to `[0, 1]` first and every
/// kind returns samples in `[0, 1]`.
pub fn apply_enhancer(spec: &EnhancerSpec, img: &Raster) -> Result<Raster> {
    spec.validate()?;
    let img = img.clamped();
    match spec.kind {
        EnhancerKind::Identity => Ok(img),
        EnhancerKind::Gamma => Ok(power_law(&img, spec.positive_param("gamma")?)),
        EnhancerKind::LinearStretch => linear_stretch(&img),
        EnhancerKind::HistEqualize => Ok(hist_equalize(&img)),
        EnhancerKind::LogRetinex => log_retinex(&img, spec.positive_param("blur_sigma")?),
    }
}

fn power_law(img: &Raster, gamma: f64) -> Raster {
    img.map(|v| clamp_unit(v).powf(gamma))
}

/// `(v - min) / (max - min)` with min and max taken over all samples.
pub fn linear_stretch(img: &Raster) -> Result<Raster> {
    let (lo, hi) = img.min_max();
    if hi == lo {
        return Err(Error::ZeroDynamicRange(lo));
    }
    let range = hi - lo;
    Ok(img.map(|v| ((v - lo) / range).clamp(0.0, 1.0)))
}

fn bin_of(v: f64) -> usize {
    (clamp_unit(v) * (HIST_BINS - 1) as f64).round() as usize
}

/// Per-channel CDF remap. Constant channels are left unchanged.
fn hist_equalize(img: &Raster) -> Raster {
    let n = img.pixel_count();
    let mut planes: Vec<Vec<f64>> = (0..CHANNELS).map(|c| img.channel(c)).collect();
    for plane in &mut planes {
        let first = plane[0];
        if plane.iter().all(|&v| v == first) {
            continue;
        }
        let mut counts = [0usize; HIST_BINS];
        for &v in plane.iter() {
            counts[bin_of(v)] += 1;
        }
        let mut cdf = [0.0; HIST_BINS];
        let mut running = 0usize;
        for (slot, count) in cdf.iter_mut().zip(counts) {
            running += count;
            *slot = running as f64 / n as f64;
        }
        for v in plane.iter_mut() {
            *v = cdf[bin_of(*v)];
        }
    }
    Raster::from_planes(img.width(), img.height(), [&planes[0], &planes[1], &planes[2]])
        .expect("planes keep the input shape")
}

/// Single-scale retinex: `log(1 + v) - log(1 + blur(v))`, then stretched.
fn log_retinex(img: &Raster, sigma: f64) -> Result<Raster> {
    let (lo, hi) = img.min_max();
    if hi == lo {
        return Err(Error::ZeroDynamicRange(lo));
    }
    let kernel = gaussian_kernel_for_sigma(sigma);
    let (w, h) = (img.width(), img.height());
    let planes: Vec<Vec<f64>> = (0..CHANNELS)
        .map(|c| {
            let plane = img.channel(c);
            let blurred = blur_plane(&plane, w, h, &kernel);
            plane.iter().zip(&blurred).map(|(v, b)| v.ln_1p() - b.ln_1p()).collect()
        })
        .collect();
    let reflectance = Raster::from_planes(w, h, [&planes[0], &planes[1], &planes[2]])?;
    linear_stretch(&reflectance)
}

fn check_gamma_range(lo: f64, hi: f64) -> Result<()> {
    if lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "gamma range must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
        )))
    }
}

/// The exponent [`random_gamma_augment`] draws for `seed`.
pub fn draw_gamma(seed: u64, lo: f64, hi: f64) -> Result<f64> {
    check_gamma_range(lo, hi)?;
    if lo == hi {
        return Ok(lo);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rng.random_range(lo..=hi))
}

/// Raises every sample to a gamma drawn uniformly from `[lo, hi]`.
pub fn random_gamma_augment(img: &Raster, seed: u64, lo: f64, hi: f64) -> Result<(Raster, f64)> {
    let gamma = draw_gamma(seed, lo, hi)?;
    Ok((power_law(img, gamma), gamma))
}

/// Inclusive exponent range for random gamma augmentation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaRange {
    pub lo: f64,
    pub hi: f64,
}

impl Default for GammaRange {
    fn default() -> Self {
        Self {
            lo: DEFAULT_GAMMA_LO,
            hi: DEFAULT_GAMMA_HI,
        }
    }
}

/// Synthetic low-light degradation: `clamp(scale * v^gamma_d + noise)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradeSpec {
    pub gamma_d: f64,
    pub scale: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for DegradeSpec {
    fn default() -> Self {
        Self {
            gamma_d: 2.0,
            scale: 0.4,
            noise_sigma: 0.01,
            seed: 0,
        }
    }
}

impl DegradeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_d.is_finite() && self.gamma_d >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma_d must be >= 1, got {}",
                self.gamma_d
            )));
        }
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "scale must lie in (0, 1], got {}",
                self.scale
            )));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

pub fn degrade(img: &Raster, spec: &DegradeSpec) -> Result<Raster> {
    spec.validate()?;
    let darkened = img.map(|v| spec.scale * clamp_unit(v).powf(spec.gamma_d));
    if spec.noise_sigma == 0.0 {
        return Ok(darkened.clamped());
    }
    let normal = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let data = darkened
        .data()
        .iter()
        .map(|&v| clamp_unit(v + normal.sample(&mut rng)))
        .collect();
    Raster::new(img.width(), img.height(), data)
}

/// Per-item seed: the SplitMix64 output for state `base + (stream + 1) * phi`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
