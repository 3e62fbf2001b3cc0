//! Seeded synthetic datasets shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use lumafuse::enhancers::{apply_enhancer, degrade, DegradeSpec, EnhancerKind, EnhancerSpec};
use lumafuse::fusion::MethodOutputs;
use lumafuse::image::{save_raster, BitDepth};
use lumafuse::metrics::{SSIM_C1, SSIM_C2};
use lumafuse::Raster;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smooth colour gradients, a few soft blobs and mild texture.
pub fn scene(rng: &mut ChaCha8Rng, width: usize, height: usize) -> Raster {
    let base: Vec<[f64; 3]> = (0..3)
        .map(|_| {
            [
                rng.random_range(0.2..0.6),
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
            ]
        })
        .collect();
    let blobs: Vec<(f64, f64, f64, [f64; 3])> = (0..4)
        .map(|_| {
            (
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
                rng.random_range(0.05..0.25),
                [
                    rng.random_range(-0.4..0.4),
                    rng.random_range(-0.4..0.4),
                    rng.random_range(-0.4..0.4),
                ],
            )
        })
        .collect();
    let freq = rng.random_range(0.3..1.2);
    let phase = rng.random_range(0.0..6.0);
    Raster::from_fn(width, height, |x, y, c| {
        let u = x as f64 / width as f64;
        let v = y as f64 / height as f64;
        let mut value = base[c][0] + base[c][1] * u + base[c][2] * v;
        for &(bx, by, r, amp) in &blobs {
            let d2 = (u - bx).powi(2) + (v - by).powi(2);
            value += amp[c] * (-d2 / (2.0 * r * r)).exp();
        }
        value += 0.05 * ((x as f64 * freq + phase).sin() * (y as f64 * freq * 0.7).cos());
        value.clamp(0.0, 1.0)
    })
}

/// The three stand-in enhancers used throughout the tests.
pub fn stand_in_enhancers() -> Vec<(String, EnhancerSpec)> {
    vec![
        ("gamma".to_string(), EnhancerSpec::gamma(0.5)),
        ("hist_eq".to_string(), EnhancerSpec::new(EnhancerKind::HistEqualize)),
        ("retinex".to_string(), EnhancerSpec::log_retinex(8.0)),
    ]
}

pub struct Instance {
    pub gts: BTreeMap<String, Raster>,
    pub lows: BTreeMap<String, Raster>,
    pub outputs: MethodOutputs,
}

/// `images` ground-truth scenes, their degraded inputs and the stand-in
/// enhancer outputs, all determined by `seed`.
pub fn instance(seed: u64, images: usize, size: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gts = BTreeMap::new();
    let mut lows = BTreeMap::new();
    for i in 0..images {
        let id = format!("img{i:03}");
        let gt = scene(&mut rng, size, size);
        let spec = DegradeSpec {
            gamma_d: rng.random_range(1.5..2.5),
            scale: rng.random_range(0.3..0.6),
            noise_sigma: rng.random_range(0.005..0.02),
            seed: rng.random(),
        };
        lows.insert(id.clone(), degrade(&gt, &spec).unwrap());
        gts.insert(id, gt);
    }
    let outputs = stand_in_enhancers()
        .into_iter()
        .map(|(name, spec)| {
            let outs = lows
                .iter()
                .map(|(id, low)| (id.clone(), apply_enhancer(&spec, low).unwrap()))
                .collect();
            (name, outs)
        })
        .collect();
    Instance { gts, lows, outputs }
}

/// Uniform random raster in `[0, 1]`.
pub fn random_raster(rng: &mut ChaCha8Rng, width: usize, height: usize) -> Raster {
    Raster::from_fn(width, height, |_, _, _| rng.random_range(0.0..=1.0))
}

fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// Per-pixel 11x11 window sums with explicit 2-D weights, no separable
/// filtering.
pub fn naive_ssim(a: &Raster, b: &Raster) -> f64 {
    let sigma: f64 = 1.5;
    let taps: Vec<f64> = (-5i32..=5)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let mut window = vec![0.0; 121];
    for dy in 0..11 {
        for dx in 0..11 {
            window[dy * 11 + dx] = taps[dy] * taps[dx];
        }
    }
    let norm: f64 = window.iter().sum();
    window.iter_mut().for_each(|w| *w /= norm);

    let (w, h) = (a.width(), a.height());
    let mut total = 0.0;
    for c in 0..3 {
        let mut channel_sum = 0.0;
        for y in 0..h {
            for x in 0..w {
                let (mut ma, mut mb, mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..11 {
                    for dx in 0..11 {
                        let wt = window[dy * 11 + dx];
                        let sx = mirror(x as isize + dx as isize - 5, w);
                        let sy = mirror(y as isize + dy as isize - 5, h);
                        let va = a.sample(sx, sy, c);
                        let vb = b.sample(sx, sy, c);
                        ma += wt * va;
                        mb += wt * vb;
                        aa += wt * va * va;
                        bb += wt * vb * vb;
                        ab += wt * va * vb;
                    }
                }
                let va = aa - ma * ma;
                let vb = bb - mb * mb;
                let cov = ab - ma * mb;
                channel_sum += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
            }
        }
        total += channel_sum / (w * h) as f64;
    }
    total / 3.0
}

/// Writes `gt/<id>.png` for `ids` under `root` plus a ground-truth-only
/// manifest; returns the manifest path.
pub fn write_dataset(root: &Path, ids: &[&str], seed: u64) -> PathBuf {
    let gt_dir = root.join("gt");
    fs::create_dir_all(&gt_dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for id in ids {
        let img = scene(&mut rng, 40, 32);
        save_raster(&img, gt_dir.join(format!("{id}.png")), BitDepth::Eight).unwrap();
        pairs.push(serde_json::json!({ "id": id, "gt_path": format!("gt/{id}.png") }));
    }
    let manifest = root.join("manifest.json");
    fs::write(
        &manifest,
        serde_json::json!({ "version": 1, "pairs": pairs }).to_string(),
    )
    .unwrap();
    manifest
}
