use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use gslr_cli::manifest::{AnalysisParams, DegradeParams, RunManifest};
use gslr_cli::{presets, resolve_config, ConfigPatch};
use gslr_core::analyze::{spectra_at, spectra_to_csv, NormThresholds};
use gslr_core::degrade::{
    add_gaussian_noise, add_measurement_noise, apply_mask, cs_measure, load_measurements,
    make_cs_op, make_random_mask, mask_from_image, save_measurements, MaskOp,
};
use gslr_core::image::{load_pgm, psnr, save_pgm, PatchCoord};
use gslr_core::lowrank::WeightRule;
use gslr_core::restore::{restore, DegradationOp, Observation, SolverConfig};

/// Group-sparse low-rank image restoration: degrade, restore, analyze.
#[derive(Parser)]
#[command(name = "gslr", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply a degradation: random mask, text overlay, or block-CS projection
    Degrade(DegradeArgs),
    /// Restore an image from a degraded observation
    Restore(RestoreArgs),
    /// Emit singular spectra of one patch group under the four nuclear norms
    Analyze(AnalyzeArgs),
    /// Print the PSNR between two images in dB
    Psnr(PsnrArgs),
}

#[derive(Args)]
struct ConfigFlags {
    /// Parameter preset; one of the published experiment settings
    #[arg(long, value_parser = presets::NAMES)]
    preset: Option<String>,
    /// JSON config file (a bare config object or an emitted manifest)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for all randomness; no wall-clock seeding anywhere
    #[arg(long)]
    seed: Option<u64>,
    /// ADMM iteration count
    #[arg(long)]
    iters: Option<usize>,
    /// ADMM penalty rho
    #[arg(long)]
    rho: Option<f64>,
    /// Shrinkage exponent p in (0, 1]
    #[arg(long)]
    p: Option<f64>,
    /// Noise scale driving the per-group regularization
    #[arg(long)]
    sigma: Option<f64>,
    /// Patch side d
    #[arg(long)]
    patch: Option<usize>,
    /// Similar patches per group
    #[arg(long)]
    k: Option<usize>,
    /// Search window side
    #[arg(long)]
    window: Option<usize>,
    /// Reference grid stride
    #[arg(long)]
    stride: Option<usize>,
    /// Worker threads for the per-group solve (default: all cores)
    #[arg(long)]
    workers: Option<usize>,
    /// Where to write the per-iteration CSV log (restore only)
    #[arg(long)]
    log: Option<PathBuf>,
    /// Where to write the run manifest (default: alongside the main output)
    #[arg(long)]
    manifest_out: Option<PathBuf>,
}

impl ConfigFlags {
    fn flag_patch(&self) -> ConfigPatch {
        ConfigPatch {
            patch: self.patch,
            group_size: self.k,
            window: self.window,
            stride: self.stride,
            rho: self.rho,
            p: self.p,
            sigma: self.sigma,
            iters: self.iters,
            seed: self.seed,
            ..ConfigPatch::default()
        }
    }

    fn resolve(&self) -> anyhow::Result<SolverConfig> {
        if let Some(workers) = self.workers {
            rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build_global()
                .ok();
        }
        resolve_config(self.preset.as_deref(), self.config.as_deref(), &self.flag_patch())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DegradeMode {
    Mask,
    Text,
    Cs,
}

#[derive(Args)]
struct DegradeArgs {
    /// Input image, binary 8-bit PGM
    input: PathBuf,
    #[arg(long, value_enum)]
    mode: DegradeMode,
    /// Fraction of pixels removed (mask mode)
    #[arg(long, default_value_t = 0.8)]
    fraction: f64,
    /// Text overlay raster; bright pixels are the inlaid text (text mode)
    #[arg(long)]
    text_mask: Option<PathBuf>,
    /// Overlay threshold (text mode)
    #[arg(long, default_value_t = 128.0)]
    threshold: f64,
    /// Block side (cs mode)
    #[arg(long, default_value_t = 32)]
    block: usize,
    /// Measurement subrate in (0, 1] (cs mode)
    #[arg(long, default_value_t = 0.3)]
    ratio: f64,
    /// Optional additive white Gaussian noise on the observation
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Output path prefix (default: the input path minus its extension)
    #[arg(long)]
    out_prefix: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigFlags,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RestoreMode {
    Inpaint,
    Cs,
}

#[derive(Args)]
struct RestoreArgs {
    #[arg(long, value_enum)]
    mode: RestoreMode,
    /// Observed image (inpaint mode)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Mask raster, 255 = observed and 0 = missing (inpaint mode)
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Measurement CSV with its .json sidecar (cs mode)
    #[arg(long)]
    measurements: Option<PathBuf>,
    /// Ground truth; enables per-iteration PSNR in the log
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Restored image path
    #[arg(long, short)]
    output: PathBuf,
    #[command(flatten)]
    cfg: ConfigFlags,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Clean image the group is matched on
    #[arg(long)]
    clean: PathBuf,
    /// Degraded image the norms are applied to
    #[arg(long)]
    degraded: PathBuf,
    /// Reference patch row
    #[arg(long)]
    row: usize,
    /// Reference patch column
    #[arg(long)]
    col: usize,
    /// Shared shrinkage threshold for all four norms
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Per-norm overrides of --tau
    #[arg(long)]
    tau_nnm: Option<f64>,
    #[arg(long)]
    tau_wnnm: Option<f64>,
    #[arg(long)]
    tau_snm: Option<f64>,
    #[arg(long)]
    tau_wsnm: Option<f64>,
    /// Offset in the inverse-magnitude weight rule
    #[arg(long, default_value_t = 0.1)]
    weight_eps: f64,
    /// Spectra CSV path
    #[arg(long, short)]
    output: PathBuf,
    #[command(flatten)]
    cfg: ConfigFlags,
}

#[derive(Args)]
struct PsnrArgs {
    first: PathBuf,
    second: PathBuf,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Degrade(args) => cmd_degrade(args),
        Command::Restore(args) => cmd_restore(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Psnr(args) => cmd_psnr(args),
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut os = prefix.as_os_str().to_os_string();
    os.push(suffix);
    PathBuf::from(os)
}

fn manifest_path(flag: &Option<PathBuf>, primary_output: &Path) -> PathBuf {
    flag.clone()
        .unwrap_or_else(|| with_suffix(primary_output, ".manifest.json"))
}

/// Stream offset so observation noise never reuses the degradation draws.
const NOISE_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

fn cmd_degrade(args: DegradeArgs) -> anyhow::Result<()> {
    let config = args.cfg.resolve()?;
    let seed = config.seed;
    let image = load_pgm(&args.input)?;
    let prefix = args
        .out_prefix
        .clone()
        .unwrap_or_else(|| args.input.with_extension(""));

    let mut manifest = RunManifest::new("degrade", config).input("input", &args.input);
    manifest.noise_sigma = args.noise_sigma;

    let primary = match args.mode {
        DegradeMode::Mask | DegradeMode::Text => {
            let mask = match args.mode {
                DegradeMode::Mask => {
                    manifest.degradation = Some(DegradeParams::Mask {
                        fraction: args.fraction,
                    });
                    make_random_mask(image.width(), image.height(), args.fraction, seed)?
                }
                _ => {
                    let overlay_path = args
                        .text_mask
                        .as_ref()
                        .context("--mode text requires --text-mask")?;
                    let overlay = load_pgm(overlay_path)?;
                    if !overlay.same_dims(&image) {
                        bail!(
                            "text mask {} does not match the input dimensions",
                            overlay_path.display()
                        );
                    }
                    manifest = manifest.input("text_mask", overlay_path);
                    manifest.degradation = Some(DegradeParams::Text {
                        threshold: args.threshold,
                    });
                    mask_from_image(&overlay, args.threshold)?
                }
            };
            let source = match args.noise_sigma {
                Some(sigma) => add_gaussian_noise(&image, sigma, seed ^ NOISE_STREAM),
                None => image,
            };
            let observed = apply_mask(&mask, &source)?;
            let obs_path = with_suffix(&prefix, ".obs.pgm");
            let mask_path = with_suffix(&prefix, ".mask.pgm");
            save_pgm(&observed, &obs_path)?;
            save_pgm(&mask.to_image(), &mask_path)?;
            manifest = manifest
                .output("observed", &obs_path)
                .output("mask", &mask_path);
            obs_path
        }
        DegradeMode::Cs => {
            manifest.degradation = Some(DegradeParams::Cs {
                block: args.block,
                ratio: args.ratio,
            });
            let op = make_cs_op(args.block, args.ratio, seed)?;
            let mut meas = cs_measure(&op, &image)?;
            if let Some(sigma) = args.noise_sigma {
                add_measurement_noise(&mut meas, sigma, seed ^ NOISE_STREAM);
            }
            let meas_path = with_suffix(&prefix, ".meas.csv");
            save_measurements(&meas, &op, &meas_path)?;
            manifest = manifest
                .output("measurements", &meas_path)
                .output("sidecar", with_suffix(&meas_path, ".json"));
            meas_path
        }
    };

    let manifest_file = manifest_path(&args.cfg.manifest_out, &primary);
    manifest.output("manifest", &manifest_file).save(&manifest_file)
}

fn cmd_restore(args: RestoreArgs) -> anyhow::Result<()> {
    let config = args.cfg.resolve()?;
    let reference = args.reference.as_ref().map(load_pgm).transpose()?;

    let mut manifest = RunManifest::new("restore", config.clone());
    let (obs, op) = match args.mode {
        RestoreMode::Inpaint => {
            let input = args.input.as_ref().context("--mode inpaint requires --input")?;
            let mask_path = args.mask.as_ref().context("--mode inpaint requires --mask")?;
            let observed = load_pgm(input)?;
            let mask = MaskOp::from_raster(&load_pgm(mask_path)?)?;
            manifest = manifest.input("input", input).input("mask", mask_path);
            (Observation::Image(observed), DegradationOp::Mask(mask))
        }
        RestoreMode::Cs => {
            let meas_path = args
                .measurements
                .as_ref()
                .context("--mode cs requires --measurements")?;
            let (meas, op) = load_measurements(meas_path)?;
            manifest = manifest.input("measurements", meas_path);
            (Observation::Measurements(meas), DegradationOp::Cs(op))
        }
    };
    if let Some(path) = &args.reference {
        manifest = manifest.input("reference", path);
    }

    let (restored, log) = restore(&obs, &op, &config, reference.as_ref())?;
    save_pgm(&restored, &args.output)?;
    manifest = manifest.output("image", &args.output);

    if let Some(log_path) = &args.cfg.log {
        std::fs::write(log_path, log.to_csv())
            .with_context(|| format!("writing log {}", log_path.display()))?;
        manifest = manifest.output("log", log_path);
    }

    let manifest_file = manifest_path(&args.cfg.manifest_out, &args.output);
    manifest.output("manifest", &manifest_file).save(&manifest_file)
}

fn cmd_analyze(args: AnalyzeArgs) -> anyhow::Result<()> {
    let config = args.cfg.resolve()?;
    let clean = load_pgm(&args.clean)?;
    let degraded = load_pgm(&args.degraded)?;
    let taus = NormThresholds {
        nnm: args.tau_nnm.unwrap_or(args.tau),
        wnnm: args.tau_wnnm.unwrap_or(args.tau),
        snm: args.tau_snm.unwrap_or(args.tau),
        wsnm: args.tau_wsnm.unwrap_or(args.tau),
    };
    let spectra = spectra_at(
        &clean,
        &degraded,
        PatchCoord::new(args.row, args.col),
        &config,
        taus,
        &WeightRule::InverseMagnitude {
            eps: args.weight_eps,
        },
    )?;
    std::fs::write(&args.output, spectra_to_csv(&spectra))
        .with_context(|| format!("writing spectra {}", args.output.display()))?;

    let mut manifest = RunManifest::new("analyze", config)
        .input("clean", &args.clean)
        .input("degraded", &args.degraded)
        .output("spectra", &args.output);
    manifest.analysis = Some(AnalysisParams {
        row: args.row,
        col: args.col,
        tau_nnm: taus.nnm,
        tau_wnnm: taus.wnnm,
        tau_snm: taus.snm,
        tau_wsnm: taus.wsnm,
        weight_eps: args.weight_eps,
    });
    let manifest_file = manifest_path(&args.cfg.manifest_out, &args.output);
    manifest.output("manifest", &manifest_file).save(&manifest_file)
}

fn cmd_psnr(args: PsnrArgs) -> anyhow::Result<()> {
    let a = load_pgm(&args.first)?;
    let b = load_pgm(&args.second)?;
    println!("{:.4}", psnr(&a, &b)?);
    Ok(())
}
