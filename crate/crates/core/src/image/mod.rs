//! The raster data model and image file I/O.
//!
//! A [`Raster`] is a 3-channel RGB image stored as row-major, per-pixel
//! interleaved `f64` samples with nominal range `[0, 1]`. Samples may leave
//! that range during intermediate arithmetic (fusion weights can be
//! negative); clamping happens at export and before metric computation.

mod codec;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use codec::{load_raster, save_raster, BitDepth};

/// Number of colour channels in every raster.
pub const CHANNELS: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidRaster(format!(
                "dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(CHANNELS))
            .ok_or_else(|| Error::InvalidRaster("dimensions overflow".into()))?;
        if data.len() != expected {
            return Err(Error::InvalidRaster(format!(
                "{width}x{height}x3 needs {expected} samples, got {}",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    /// Every sample set to `value`.
    ///
    /// Panics if either dimension is zero.
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::from_fn(width, height, |_, _, _| value)
    }

    /// Builds a raster from `f(x, y, channel)`.
    ///
    /// Panics if either dimension is zero.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "raster dimensions must be nonzero");
        let mut data = Vec::with_capacity(width * height * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                for c in 0..CHANNELS {
                    data.push(f(x, y, c));
                }
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Interleaved RGB samples, row-major.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn sample(&self, x: usize, y: usize, channel: usize) -> f64 {
        self.data[(y * self.width + x) * CHANNELS + channel]
    }

    /// One channel as a contiguous row-major plane.
    pub fn channel(&self, channel: usize) -> Vec<f64> {
        self.data.iter().skip(channel).step_by(CHANNELS).copied().collect()
    }

    /// Rebuilds a raster from three planes of `width * height` samples.
    pub fn from_planes(width: usize, height: usize, planes: [&[f64]; CHANNELS]) -> Result<Self> {
        let n = width * height;
        if planes.iter().any(|p| p.len() != n) {
            return Err(Error::InvalidRaster(format!("every plane must hold {n} samples")));
        }
        let data = (0..n).flat_map(|i| planes.iter().map(move |p| p[i])).collect();
        Self::new(width, height, data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Copy with every sample clamped to `[0, 1]`. NaN maps to 0.
    pub fn clamped(&self) -> Raster {
        self.map(clamp_unit)
    }

    pub fn same_shape(&self, other: &Raster) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn check_same_shape(&self, other: &Raster) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                left_w: self.width,
                left_h: self.height,
                right_w: other.width,
                right_h: other.height,
            })
        }
    }

    /// Smallest and largest sample over all channels.
    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

pub(crate) fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Arithmetic mean over all samples of all channels.
pub fn mean_luminance(img: &Raster) -> f64 {
    img.data.iter().sum::<f64>() / img.data.len() as f64
}

/// One low-light / ground-truth pair of a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImagePairRecord {
    pub id: String,
    /// Low-light input. Absent for ground-truth-only manifests that have not
    /// been through `degrade` yet.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low_path: Option<PathBuf>,
    pub gt_path: PathBuf,
}
