//! The `lumafuse` command line front end.
//!
//! Machine-readable results go to files under `--out` or to standard
//! output; progress and per-item errors go to standard error. The process
//! exits with status 0 only when no item failed.

mod commands;
mod manifest;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_degrade, cmd_enhance, cmd_evaluate, cmd_fuse, cmd_optimize, cmd_rank, cmd_sweep, item_seed, load_enhancers,
    BaselineSummary, EnhanceSummary, EvaluationReport, ItemFailure, NamedEnhancer, OptimizeOutcome, Optimizer,
    RunConfig, RunSummary, SurfaceBest, WeightsFile,
};
pub use manifest::{Manifest, MANIFEST_VERSION};

use crate::enhancers::DegradeSpec;
use crate::fusion::WeightVector;
use crate::image::BitDepth;
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "lumafuse", version, about = "Linear fusion of low-light enhancement outputs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Dataset manifest (JSON, version 1)
    #[arg(long, global = true, value_name = "PATH")]
    pub manifest: Option<PathBuf>,

    /// Base seed for every random draw (overrides the config file)
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Run configuration (JSON: seed, weight_sum, grid_step, ridge, optimizer, bit_depth)
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize low-light inputs from the ground truth of a manifest
    Degrade(DegradeArgs),
    /// Run stand-in enhancers on every low-light input
    Enhance(EnhanceArgs),
    /// Fit fusion weights for the manifest's methods
    Optimize(OptimizeArgs),
    /// Write fused images for given weights
    Fuse(FuseArgs),
    /// Score a directory of candidate images against the ground truth
    Evaluate(EvaluateArgs),
    /// Export the PSNR/SSIM surface over the weight simplex
    Sweep(SweepArgs),
    /// Aggregate weighted competition ranks of leaderboard entrants
    Rank(RankArgs),
}

#[derive(Debug, Args)]
pub struct DepthArg {
    /// Bit depth of written images (8 or 16)
    #[arg(long, value_name = "BITS")]
    pub bit_depth: Option<u8>,
}

#[derive(Debug, Args)]
pub struct DegradeArgs {
    /// Degradation spec (JSON: gamma_d, scale, noise_sigma, seed)
    #[arg(long, value_name = "PATH")]
    pub spec: Option<PathBuf>,
    /// Darkening exponent applied before scaling (>= 1)
    #[arg(long)]
    pub gamma_d: Option<f64>,
    /// Brightness factor in (0, 1]
    #[arg(long)]
    pub scale: Option<f64>,
    /// Standard deviation of additive Gaussian noise
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[command(flatten)]
    pub depth: DepthArg,
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    /// Enhancer list (JSON array of {name, kind, params, random_gamma})
    #[arg(long, value_name = "PATH")]
    pub enhancers: PathBuf,
    #[command(flatten)]
    pub depth: DepthArg,
}

#[derive(Debug, Args)]
pub struct WeightingArgs {
    /// Required sum of the fusion weights
    #[arg(long, value_name = "A")]
    pub weight_sum: Option<f64>,
    /// Grid spacing on the weight simplex; must divide 1
    #[arg(long, value_name = "STEP")]
    pub grid_step: Option<f64>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// Weight search strategy
    #[arg(long, value_enum)]
    pub optimizer: Option<Optimizer>,
    /// Tikhonov term added to the Gram matrix of the closed form
    #[arg(long, value_name = "EPS")]
    pub ridge: Option<f64>,
    /// Restrict weights to be nonnegative (uses the grid search)
    #[arg(long)]
    pub nonnegative: bool,
    #[command(flatten)]
    pub weighting: WeightingArgs,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Weights file written by `optimize`
    #[arg(long, value_name = "PATH", conflicts_with = "k")]
    pub weights: Option<PathBuf>,
    /// Inline weights, comma separated
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required_unless_present = "weights"
    )]
    pub k: Option<Vec<f64>>,
    /// Method order for --k (defaults to sorted method names)
    #[arg(long, value_delimiter = ',', requires = "k")]
    pub methods: Option<Vec<String>>,
    /// Required sum of the inline weights
    #[arg(long, value_name = "A")]
    pub weight_sum: Option<f64>,
    #[command(flatten)]
    pub depth: DepthArg,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory holding `<id>.png` for every pair
    #[arg(long, value_name = "DIR")]
    pub candidate: PathBuf,
    /// Weights file; flags the report when it was fitted on the evaluated pairs
    #[arg(long, value_name = "PATH")]
    pub weights: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub weighting: WeightingArgs,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// Entrants and metric specs (JSON)
    #[arg(long, value_name = "PATH")]
    pub entrants: PathBuf,
    /// Print JSON instead of the text table
    #[arg(long)]
    pub json: bool,
}

fn require<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::InvalidParameter(format!("{flag} is required for this command")))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn report_failures(command: &str, summary: &RunSummary) -> bool {
    for f in &summary.failures {
        eprintln!("{command}: {}: {}", f.id, f.message);
    }
    eprintln!(
        "{command}: {} written, {} failed",
        summary.written.len(),
        summary.failures.len()
    );
    summary.is_success()
}

impl Cli {
    fn run_config(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        Ok(config)
    }
}

fn apply_weighting(config: &mut RunConfig, args: &WeightingArgs) {
    if let Some(a) = args.weight_sum {
        config.weight_sum = a;
    }
    if let Some(step) = args.grid_step {
        config.grid_step = step;
    }
}

fn depth(config: &RunConfig, arg: &DepthArg) -> Result<BitDepth> {
    BitDepth::try_from(arg.bit_depth.unwrap_or(config.bit_depth))
}

/// Executes one parsed invocation. `Ok(false)` means some items failed.
pub fn run(cli: &Cli) -> Result<bool> {
    let mut config = cli.run_config()?;
    match &cli.command {
        Command::Degrade(args) => {
            let mut spec = match &args.spec {
                Some(path) => {
                    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                    serde_json::from_str(&text)?
                }
                None => DegradeSpec::default(),
            };
            if let Some(v) = args.gamma_d {
                spec.gamma_d = v;
            }
            if let Some(v) = args.scale {
                spec.scale = v;
            }
            if let Some(v) = args.noise_sigma {
                spec.noise_sigma = v;
            }
            if cli.seed.is_some() || args.spec.is_none() {
                spec.seed = config.seed;
            }
            spec.validate()?;
            let depth = depth(&config, &args.depth)?;
            let manifest = Manifest::load(require(&cli.manifest, "--manifest")?)?;
            let out = require(&cli.out, "--out")?;
            let summary = cmd_degrade(&manifest, &spec, out, depth)?;
            println!("{}", out.join("manifest.json").display());
            Ok(report_failures("degrade", &summary))
        }
        Command::Enhance(args) => {
            let enhancers = load_enhancers(&args.enhancers)?;
            let depth = depth(&config, &args.depth)?;
            let manifest = Manifest::load(require(&cli.manifest, "--manifest")?)?;
            let out = require(&cli.out, "--out")?;
            create_dir(out)?;
            let summary = cmd_enhance(&manifest, &enhancers, out, config.seed, depth)?;
            println!("{}", out.join("manifest.json").display());
            Ok(report_failures("enhance", &summary.run))
        }
        Command::Optimize(args) => {
            if let Some(opt) = args.optimizer {
                config.optimizer = opt;
            }
            if let Some(r) = args.ridge {
                config.ridge = r;
            }
            apply_weighting(&mut config, &args.weighting);
            config.validate()?;
            let manifest = Manifest::load(require(&cli.manifest, "--manifest")?)?;
            let outcome = cmd_optimize(&manifest, &config, args.nonnegative)?;
            let json = serde_json::to_string_pretty(&outcome.weights)?;
            if let Some(out) = &cli.out {
                create_dir(out)?;
                write_text(&out.join("weights.json"), &format!("{json}\n"))?;
                if let Some(table) = &outcome.surface {
                    write_text(&out.join("surface.csv"), &table.to_csv())?;
                }
            }
            println!("{json}");
            Ok(true)
        }
        Command::Fuse(args) => {
            let a = args.weight_sum.unwrap_or(config.weight_sum);
            // Weights are validated before any image is touched.
            let (methods, weights) = match (&args.weights, &args.k) {
                (Some(path), _) => {
                    let file = WeightsFile::load(path)?;
                    let vector = file.weight_vector()?;
                    (Some(file.method_ids), vector)
                }
                (None, Some(k)) => (args.methods.clone(), WeightVector::new(k.clone(), a)?),
                (None, None) => return Err(Error::InvalidParameter("--weights or --k is required".into())),
            };
            let depth = depth(&config, &args.depth)?;
            let manifest = Manifest::load(require(&cli.manifest, "--manifest")?)?;
            let methods = methods.unwrap_or_else(|| manifest.methods.keys().cloned().collect());
            let out = require(&cli.out, "--out")?;
            let summary = cmd_fuse(&manifest, &methods, &weights, out, depth)?;
            Ok(report_failures("fuse", &summary))
        }
        Command::Evaluate(args) => {
            let manifest = Manifest::load(require(&cli.manifest, "--manifest")?)?;
            let fitted = args.weights.as_ref().map(WeightsFile::load).transpose()?;
            let report = cmd_evaluate(
                &manifest,
                &args.candidate,
                fitted.as_ref().map(|w| w.fitted_on.as_slice()),
            )?;
            let json = serde_json::to_string_pretty(&report)?;
            match &cli.out {
                Some(out) => {
                    create_dir(out)?;
                    write_text(&out.join("report.json"), &format!("{json}\n"))?;
                    write_text(&out.join("report.txt"), &report.to_text())?;
                    print!("{}", report.to_text());
                }
                None => {
                    println!("{json}");
                    eprint!("{}", report.to_text());
                }
            }
            Ok(true)
        }
        Command::Sweep(args) => {
            apply_weighting(&mut config, &args.weighting);
            config.validate()?;
            let manifest = Manifest::load(require(&cli.manifest, "--manifest")?)?;
            let table = cmd_sweep(&manifest, &config)?;
            let best = serde_json::to_string_pretty(&SurfaceBest::from(&table))?;
            match &cli.out {
                Some(out) => {
                    create_dir(out)?;
                    write_text(&out.join("surface.csv"), &table.to_csv())?;
                    write_text(&out.join("surface_best.json"), &format!("{best}\n"))?;
                    println!("{best}");
                }
                None => print!("{}", table.to_csv()),
            }
            Ok(true)
        }
        Command::Rank(args) => {
            let table = cmd_rank(&args.entrants)?;
            let json = serde_json::to_string_pretty(&table)?;
            if let Some(out) = &cli.out {
                create_dir(out)?;
                commands::write_outputs_json(&out.join("rank.json"), &table)?;
                write_text(&out.join("rank.txt"), &table.to_text_table())?;
            }
            if args.json {
                println!("{json}");
            } else {
                print!("{}", table.to_text_table());
            }
            Ok(true)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn parser_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn global_flags_after_subcommand() {
        let cli =
            Cli::try_parse_from(["lumafuse", "rank", "--entrants", "e.json", "--out", "o", "--seed", "3"]).unwrap();
        assert_eq!(cli.seed, Some(3));
        assert_eq!(cli.out.as_deref(), Some(Path::new("o")));
    }

    #[test]
    fn inline_weights_parse() {
        let cli = Cli::try_parse_from(["lumafuse", "fuse", "--k", "0.16,0.40,0.44"]).unwrap();
        match cli.command {
            Command::Fuse(args) => assert_eq!(args.k, Some(vec![0.16, 0.40, 0.44])),
            _ => unreachable!(),
        }
        assert!(Cli::try_parse_from(["lumafuse", "fuse"]).is_err());
    }
}
