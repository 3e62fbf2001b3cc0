//! The pipeline stages behind each subcommand, usable without the argument
//! parser.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{check_name, Manifest};
use crate::enhancers::{
    apply_enhancer, degrade, derive_seed, random_gamma_augment, DegradeSpec, EnhancerSpec, GammaRange,
};
use crate::fusion::{
    build_problem, diagnostics, fuse, solve_weights_closed_form, sweep_surface, GramDiagnostics, SurfaceRow,
    SurfaceTable, WeightVector,
};
use crate::image::{load_raster, save_raster, BitDepth, Raster};
use crate::metrics::{evaluate_dataset, MetricReport};
use crate::ranking::{RankInput, RankTable};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Equality-constrained least squares; weights may be negative.
    #[default]
    ClosedForm,
    /// Exhaustive PSNR search over the nonnegative weight simplex.
    Grid,
}

/// Settings shared by the weight-fitting commands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub weight_sum: f64,
    pub grid_step: f64,
    pub ridge: f64,
    pub optimizer: Optimizer,
    pub bit_depth: u8,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            weight_sum: 1.0,
            grid_step: 0.02,
            ridge: 0.0,
            optimizer: Optimizer::ClosedForm,
            bit_depth: 8,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: RunConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        crate::fusion::scaled_simplex_grid(1, self.grid_step, 1.0)?;
        if !(self.weight_sum.is_finite() && self.weight_sum > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "weight_sum must be positive, got {}",
                self.weight_sum
            )));
        }
        if !(self.ridge.is_finite() && self.ridge >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ridge must be >= 0, got {}",
                self.ridge
            )));
        }
        self.depth().map(|_| ())
    }

    pub fn depth(&self) -> Result<BitDepth> {
        BitDepth::try_from(self.bit_depth)
    }
}

/// One id that failed while the rest of the batch continued.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ItemFailure {
    pub id: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunSummary {
    pub written: Vec<PathBuf>,
    pub failures: Vec<ItemFailure>,
}

impl RunSummary {
    pub fn is_success(&self) -> bool {
        self.failures.is_empty()
    }

    fn absorb(&mut self, id: &str, result: Result<PathBuf>) {
        match result {
            Ok(path) => self.written.push(path),
            Err(e) => self.failures.push(ItemFailure {
                id: id.to_string(),
                message: e.to_string(),
            }),
        }
    }
}

/// 64-bit FNV-1a, used to turn ids into seed streams.
fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed for one item of a batch: independent of batch order and size.
pub fn item_seed(base: u64, id: &str) -> u64 {
    derive_seed(base, fnv1a(id))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `<out>/low/<id>.png` for every pair and `<out>/manifest.json`
/// pointing at them. The seed of `spec` is the base seed; each pair draws
/// its noise from [`item_seed`].
pub fn cmd_degrade(manifest: &Manifest, spec: &DegradeSpec, out_dir: &Path, depth: BitDepth) -> Result<RunSummary> {
    spec.validate()?;
    let low_dir = out_dir.join("low");
    create_dir(&low_dir)?;
    let results: Vec<Result<PathBuf>> = manifest
        .pairs
        .par_iter()
        .map(|pair| {
            let gt = load_raster(manifest.gt_path(pair))?;
            let item_spec = DegradeSpec {
                seed: item_seed(spec.seed, &pair.id),
                ..spec.clone()
            };
            let low = degrade(&gt, &item_spec)?;
            let path = low_dir.join(format!("{}.png", pair.id));
            save_raster(&low, &path, depth)?;
            Ok(path)
        })
        .collect();

    let mut summary = RunSummary::default();
    let mut updated = manifest.clone();
    updated.methods.clear();
    for (pair, result) in updated.pairs.iter_mut().zip(results) {
        if let Ok(path) = &result {
            pair.low_path = Some(path.clone());
        }
        summary.absorb(&pair.id, result);
    }
    updated.rebased(out_dir)?.save(out_dir.join("manifest.json"))?;
    Ok(summary)
}

/// A named enhancer entry of an `enhance` config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedEnhancer {
    pub name: String,
    #[serde(flatten)]
    pub spec: EnhancerSpec,
    /// Applies random gamma augmentation to the input before enhancing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_gamma: Option<GammaRange>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EnhanceSummary {
    pub run: RunSummary,
    /// Drawn gamma per method and id, for entries with `random_gamma`.
    pub gammas: BTreeMap<String, BTreeMap<String, f64>>,
}

pub fn load_enhancers(path: impl AsRef<Path>) -> Result<Vec<NamedEnhancer>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Runs every enhancer on every low-light input, writing
/// `<out>/<name>/<id>.png` and an updated `<out>/manifest.json` that lists
/// each method which succeeded on every id.
pub fn cmd_enhance(
    manifest: &Manifest,
    enhancers: &[NamedEnhancer],
    out_root: &Path,
    seed: u64,
    depth: BitDepth,
) -> Result<EnhanceSummary> {
    let mut names = BTreeSet::new();
    for e in enhancers {
        check_name("method name", &e.name)?;
        if !names.insert(e.name.as_str()) {
            return Err(Error::InvalidParameter(format!("duplicate method name {}", e.name)));
        }
        e.spec.validate().map_err(|err| err.for_item(e.name.clone()))?;
        if let Some(range) = e.random_gamma {
            random_gamma_augment(&Raster::filled(1, 1, 0.5), 0, range.lo, range.hi)
                .map_err(|err| err.for_item(e.name.clone()))?;
        }
    }
    let lows: Vec<(String, Result<Raster>)> = manifest
        .pairs
        .par_iter()
        .map(|p| (p.id.clone(), manifest.low_path(p).and_then(load_raster)))
        .collect();

    let mut summary = EnhanceSummary::default();
    let mut updated = manifest.clone();
    for e in enhancers {
        let dir = out_root.join(&e.name);
        create_dir(&dir)?;
        let method_seed = item_seed(seed, &e.name);
        let results: Vec<Result<(PathBuf, Option<f64>)>> = lows
            .par_iter()
            .map(|(id, low)| {
                let low = low.as_ref().map_err(|err| Error::InvalidParameter(err.to_string()))?;
                let (input, gamma) = match e.random_gamma {
                    Some(range) => {
                        let (img, g) = random_gamma_augment(low, item_seed(method_seed, id), range.lo, range.hi)?;
                        (img, Some(g))
                    }
                    None => (low.clone(), None),
                };
                let out = apply_enhancer(&e.spec, &input)?;
                let path = dir.join(format!("{id}.png"));
                save_raster(&out, &path, depth)?;
                Ok((path, gamma))
            })
            .collect();
        let before = summary.run.failures.len();
        for ((id, _), result) in lows.iter().zip(results) {
            let result = result.map(|(path, gamma)| {
                if let Some(g) = gamma {
                    summary.gammas.entry(e.name.clone()).or_default().insert(id.clone(), g);
                }
                path
            });
            summary.run.absorb(&format!("{}/{id}", e.name), result);
        }
        if summary.run.failures.len() == before {
            updated.methods.insert(e.name.clone(), dir);
        } else {
            updated.methods.remove(&e.name);
        }
    }
    updated.rebased(out_root)?.save(out_root.join("manifest.json"))?;
    if !summary.gammas.is_empty() {
        write_json(&out_root.join("random_gamma.json"), &summary.gammas)?;
    }
    Ok(summary)
}

/// Fitted weights as stored on disk by `optimize` and read by `fuse`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    pub method_ids: Vec<String>,
    pub weights: Vec<f64>,
    #[serde(default = "one")]
    pub target_sum: f64,
    #[serde(default)]
    pub nonnegative: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<Optimizer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ridge: Option<f64>,
    /// Ids of the pairs the weights were fitted on.
    #[serde(default)]
    pub fitted_on: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<serde_json::Value>,
    /// Grid mode only: the SSIM-optimal grid point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_ssim: Option<serde_json::Value>,
}

fn one() -> f64 {
    1.0
}

impl WeightsFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Validates the weights against their sum constraint.
    pub fn weight_vector(&self) -> Result<WeightVector> {
        if self.method_ids.len() != self.weights.len() {
            return Err(Error::CountMismatch {
                what: "weights",
                expected: self.method_ids.len(),
                got: self.weights.len(),
            });
        }
        WeightVector::new(self.weights.clone(), self.target_sum)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimizeOutcome {
    pub weights: WeightsFile,
    #[serde(skip)]
    pub vector: WeightVector,
    #[serde(skip)]
    pub diagnostics: GramDiagnostics,
    #[serde(skip)]
    pub surface: Option<SurfaceTable>,
}

/// Fits fusion weights for every method in the manifest.
///
/// The closed form is used unless the config selects the grid or
/// `nonnegative` is requested; the grid picks the PSNR-optimal point.
pub fn cmd_optimize(manifest: &Manifest, config: &RunConfig, nonnegative: bool) -> Result<OptimizeOutcome> {
    config.validate()?;
    let method_ids: Vec<String> = manifest.methods.keys().cloned().collect();
    if method_ids.is_empty() {
        return Err(Error::Manifest("no methods to fuse; run enhance first".into()));
    }
    let gts = manifest.load_gts()?;
    let outputs = manifest.load_method_outputs(&method_ids)?;
    let problem = build_problem(&outputs, &gts)?;

    let use_grid = nonnegative || config.optimizer == Optimizer::Grid;
    let (vector, diag, surface) = if use_grid {
        let table = sweep_surface(&outputs, &gts, config.grid_step, config.weight_sum)?;
        let best = table.best_psnr_row();
        let vector = WeightVector::new(best.weights.clone(), config.weight_sum)?;
        let diag = diagnostics(&problem, vector.weights());
        (vector, diag, Some(table))
    } else {
        let (vector, diag) = solve_weights_closed_form(&problem, config.weight_sum, config.ridge)?;
        (vector, diag, None)
    };
    let weights = WeightsFile {
        method_ids,
        weights: vector.weights().to_vec(),
        target_sum: vector.target_sum(),
        nonnegative: vector.is_nonnegative(),
        optimizer: Some(if use_grid {
            Optimizer::Grid
        } else {
            Optimizer::ClosedForm
        }),
        ridge: (!use_grid).then_some(config.ridge),
        fitted_on: manifest.ids(),
        diagnostics: Some(serde_json::to_value(&diag)?),
        best_ssim: surface
            .as_ref()
            .map(|t| serde_json::to_value(t.best_ssim_row()))
            .transpose()?,
    };
    Ok(OptimizeOutcome {
        weights,
        vector,
        diagnostics: diag,
        surface,
    })
}

/// Writes the clamped fusion of the listed methods for every pair to
/// `<out>/<id>.png`.
pub fn cmd_fuse(
    manifest: &Manifest,
    method_ids: &[String],
    weights: &WeightVector,
    out_dir: &Path,
    depth: BitDepth,
) -> Result<RunSummary> {
    if method_ids.len() != weights.len() {
        return Err(Error::CountMismatch {
            what: "weights",
            expected: method_ids.len(),
            got: weights.len(),
        });
    }
    if let Some(m) = method_ids.iter().find(|m| !manifest.methods.contains_key(*m)) {
        return Err(Error::Manifest(format!("unknown method {m}")));
    }
    create_dir(out_dir)?;
    let results: Vec<Result<PathBuf>> = manifest
        .pairs
        .par_iter()
        .map(|pair| {
            let outputs = method_ids
                .iter()
                .map(|m| load_raster(manifest.method_output_path(m, &pair.id)))
                .collect::<Result<Vec<_>>>()?;
            let fused = fuse(&outputs, weights)?;
            let path = out_dir.join(format!("{}.png", pair.id));
            save_raster(&fused, &path, depth)?;
            Ok(path)
        })
        .collect();
    let mut summary = RunSummary::default();
    for (pair, result) in manifest.pairs.iter().zip(results) {
        summary.absorb(&pair.id, result);
    }
    Ok(summary)
}

/// Dataset means of one method, for comparison against a candidate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BaselineSummary {
    pub mean_psnr: Option<f64>,
    pub mean_ssim: f64,
    pub mean_mse: f64,
    pub infinite_count: usize,
}

impl From<&MetricReport> for BaselineSummary {
    fn from(r: &MetricReport) -> Self {
        Self {
            mean_psnr: r.mean_psnr,
            mean_ssim: r.mean_ssim,
            mean_mse: r.mean_mse,
            infinite_count: r.infinite_count,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub candidate: PathBuf,
    pub report: MetricReport,
    /// Every manifest method scored on the same pairs.
    pub baselines: BTreeMap<String, BaselineSummary>,
    /// Evaluated ids that the weights were also fitted on, when known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tuning_overlap: Option<usize>,
    pub evaluated_on_tuning_set: bool,
}

impl EvaluationReport {
    pub fn to_text(&self) -> String {
        let mut out = format!("candidate: {}\n", self.candidate.display());
        out.push_str(&self.report.to_text_table());
        if !self.baselines.is_empty() {
            let width = self.baselines.keys().map(String::len).max().unwrap_or(0).max(6);
            let _ = writeln!(
                out,
                "\n{:<width$}  {:>10}  {:>8}  {:>12}",
                "method", "mean_psnr", "ssim", "mean_mse"
            );
            for (name, b) in &self.baselines {
                let psnr = b.mean_psnr.map_or_else(|| "inf".to_string(), |p| format!("{p:.4}"));
                let _ = writeln!(
                    out,
                    "{name:<width$}  {psnr:>10}  {:>8.5}  {:>12.6e}",
                    b.mean_ssim, b.mean_mse
                );
            }
        }
        if self.evaluated_on_tuning_set {
            let _ = writeln!(
                out,
                "\nnote: {} evaluated id(s) were also used to fit the weights",
                self.tuning_overlap.unwrap_or(0)
            );
        }
        out
    }
}

fn candidate_path(dir: &Path, id: &str) -> Option<PathBuf> {
    ["png", "ppm"]
        .iter()
        .map(|ext| dir.join(format!("{id}.{ext}")))
        .find(|p| p.is_file())
}

/// Scores `<candidate_dir>/<id>.png` against the ground truth of every pair.
pub fn cmd_evaluate(
    manifest: &Manifest,
    candidate_dir: &Path,
    fitted_on: Option<&[String]>,
) -> Result<EvaluationReport> {
    let ids = manifest.ids();
    let found: Vec<(String, Option<PathBuf>)> = ids
        .iter()
        .map(|id| (id.clone(), candidate_path(candidate_dir, id)))
        .collect();
    let missing: Vec<&str> = found
        .iter()
        .filter(|(_, p)| p.is_none())
        .map(|(id, _)| id.as_str())
        .collect();
    if !missing.is_empty() || ids.is_empty() {
        return Err(Error::IdMismatch(format!(
            "{} covers {} of {} ids; missing [{}]",
            candidate_dir.display(),
            ids.len() - missing.len(),
            ids.len(),
            missing.join(", ")
        )));
    }
    let candidates: BTreeMap<String, Raster> = found
        .into_par_iter()
        .map(|(id, path)| {
            let path = path.expect("checked above");
            load_raster(path).map(|r| (id.clone(), r)).map_err(|e| e.for_item(id))
        })
        .collect::<Result<_>>()?;
    let gts = manifest.load_gts()?;
    let report = evaluate_dataset(&candidates, &gts)?;

    let method_ids: Vec<String> = manifest.methods.keys().cloned().collect();
    let outputs = manifest.load_method_outputs(&method_ids)?;
    let baselines = outputs
        .iter()
        .map(|(name, outs)| {
            evaluate_dataset(outs, &gts)
                .map(|r| (name.clone(), BaselineSummary::from(&r)))
                .map_err(|e| e.for_item(name.clone()))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;

    let tuning_overlap = fitted_on.map(|fit| {
        let fit: BTreeSet<&str> = fit.iter().map(String::as_str).collect();
        ids.iter().filter(|id| fit.contains(id.as_str())).count()
    });
    Ok(EvaluationReport {
        candidate: candidate_dir.to_path_buf(),
        report,
        baselines,
        evaluated_on_tuning_set: tuning_overlap.is_some_and(|n| n > 0),
        tuning_overlap,
    })
}

/// The PSNR/SSIM surface over the weight grid of the manifest's methods.
pub fn cmd_sweep(manifest: &Manifest, config: &RunConfig) -> Result<SurfaceTable> {
    config.validate()?;
    let method_ids: Vec<String> = manifest.methods.keys().cloned().collect();
    if method_ids.is_empty() {
        return Err(Error::Manifest("no methods to sweep; run enhance first".into()));
    }
    let gts = manifest.load_gts()?;
    let outputs = manifest.load_method_outputs(&method_ids)?;
    sweep_surface(&outputs, &gts, config.grid_step, config.weight_sum)
}

/// Best rows of a sweep, as written next to the CSV.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurfaceBest<'a> {
    pub method_ids: &'a [String],
    pub points: usize,
    pub best_psnr: &'a SurfaceRow,
    pub best_ssim: &'a SurfaceRow,
}

impl<'a> From<&'a SurfaceTable> for SurfaceBest<'a> {
    fn from(t: &'a SurfaceTable) -> Self {
        Self {
            method_ids: &t.method_ids,
            points: t.rows.len(),
            best_psnr: t.best_psnr_row(),
            best_ssim: t.best_ssim_row(),
        }
    }
}

pub fn cmd_rank(path: impl AsRef<Path>) -> Result<RankTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let input: RankInput = serde_json::from_str(&text)?;
    RankTable::build(&input)
}

pub(crate) fn write_outputs_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_json(path, value)
}
