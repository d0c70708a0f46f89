//! `hinm` command-line front end.
//!
//! Exit codes: 0 success, 1 failed check or internal error, 2 configuration
//! error, 3 shape or file error, 4 size guard.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use hinm::arith::{composed_sparsity, count_permutation_space, exact_sparsity, group_digits};
use hinm::format::{load_matrix, load_saliency, save_matrix};
use hinm::oracle::{oracle_gap_with, Oracle};
use hinm::pruner::prune_with;
use hinm::spmm::{compose_layers, hinm_spmm, tile_shuffle_check, ChainManifest};
use hinm::{
    ablation_mode, apply_masks, decode, encode, magnitude_saliency, prune_identity, validate_config,
    ErrorClass, GyroOutcome, GyroPermutation, HiNMConfig, HiNMEncoding, HinmError, SaliencyMatrix,
    Variant,
};

#[derive(Debug, Parser)]
#[command(name = "hinm", version, about = "Hierarchical N:M pruning toolkit")]
struct Cli {
    /// Seed overriding the configuration's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(flatten)]
    pattern: PatternArgs,
    #[command(subcommand)]
    command: Command,
}

/// Pattern settings that override (or stand in for) the configuration file.
#[derive(Debug, Args)]
struct PatternArgs {
    /// Rows per tile (V).
    #[arg(long, global = true)]
    vector_size: Option<usize>,
    /// N:M pattern, e.g. `2:4`.
    #[arg(long, global = true, value_parser = parse_nm)]
    nm: Option<(usize, usize)>,
    /// Fraction of column vectors pruned per tile.
    #[arg(long, global = true)]
    vector_sparsity: Option<f64>,
}

fn parse_nm(text: &str) -> Result<(usize, usize), String> {
    let (n, m) = text.split_once(':').ok_or("expected N:M")?;
    let parse = |s: &str| s.trim().parse::<usize>().map_err(|e| e.to_string());
    Ok((parse(n)?, parse(m)?))
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    Full,
    V1,
    V2,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Full => Variant::Full,
            VariantArg::V1 => Variant::V1NoSamplingKmeansAll,
            VariantArg::V2 => Variant::V2ChannelSwapIcp,
        }
    }
}

#[derive(Debug, Args)]
struct WeightArgs {
    /// Weight matrix in HNMW format.
    #[arg(long)]
    weights: PathBuf,
    /// Optional saliency matrix in HNMW format; defaults to |weights|.
    #[arg(long)]
    saliency: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print composed sparsity and the permutation-space size for a shape.
    Stats {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
    },
    /// Prune weights and write masked weights, encoding and report.
    Prune {
        #[command(flatten)]
        input: WeightArgs,
        /// Skip permutation (identity orders).
        #[arg(long)]
        no_perm: bool,
        #[arg(long, value_enum, default_value = "full", conflicts_with = "no_perm")]
        variant: VariantArg,
        /// Masked dense weights (HNMW, original order).
        #[arg(long)]
        out: PathBuf,
        /// Encoding JSON; defaults to the output path with `.enc.json`.
        #[arg(long)]
        encoding: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Compute a gyro-permutation and write it as JSON.
    Permute {
        #[command(flatten)]
        input: WeightArgs,
        #[arg(long, value_enum, default_value = "full")]
        variant: VariantArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Prune under a given permutation and write the compressed encoding.
    Encode {
        #[command(flatten)]
        input: WeightArgs,
        /// Permutation JSON as written by `permute`.
        #[arg(long)]
        permutation: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Expand an encoding to dense HNMW.
    Decode {
        #[arg(long)]
        encoding: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write rows in original order instead of permuted order.
        #[arg(long)]
        original_order: bool,
    },
    /// Multiply an encoding by a dense input; output rows are in permuted order.
    Spmm {
        #[arg(long)]
        encoding: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a chain of encodings listed in a manifest; output in original order.
    Chain {
        /// JSON manifest `{"layers": [paths]}`.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare gyro and no-perm against the exhaustive optimum.
    Oracle {
        #[command(flatten)]
        input: WeightArgs,
        #[arg(long)]
        report: PathBuf,
        /// Run even when the search space exceeds the size guard.
        #[arg(long)]
        force: bool,
    },
    /// Check that shuffling vectors within tiles leaves the product unchanged.
    ShuffleCheck {
        #[arg(long)]
        encoding: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
    },
}

#[derive(Debug)]
enum Failure {
    Lib(HinmError),
    Check(String),
}

impl From<HinmError> for Failure {
    fn from(e: HinmError) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Lib(e.into())
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("hinm: check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("hinm: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::ShapeOrFile => 3,
                ErrorClass::SizeGuard => 4,
                ErrorClass::Internal => 1,
            })
        }
    }
}

fn load_config(cli: &Cli) -> Result<HiNMConfig, HinmError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            HiNMConfig::from_json(&text)?
        }
        None => {
            let p = &cli.pattern;
            if p.vector_size.is_none() || p.nm.is_none() || p.vector_sparsity.is_none() {
                return Err(HinmError::Value(
                    "pass --config or all of --vector-size, --nm and --vector-sparsity".into(),
                ));
            }
            HiNMConfig::default()
        }
    };
    let p = &cli.pattern;
    if let Some(v) = p.vector_size {
        cfg.vector_size = v;
    }
    if let Some((n, m)) = p.nm {
        cfg.nm_keep = n;
        cfg.nm_group = m;
    }
    if let Some(s) = p.vector_sparsity {
        cfg.vector_sparsity = s;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn load_inputs(args: &WeightArgs) -> Result<(hinm::DenseMatrix, SaliencyMatrix), HinmError> {
    let weights = load_matrix(&args.weights)?;
    let saliency = match &args.saliency {
        Some(path) => load_saliency(path, weights.shape())?,
        None => magnitude_saliency(&weights),
    };
    Ok((weights, saliency))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn write_text(path: &Path, mut text: String) -> CliResult {
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn run_permutation(cfg: &HiNMConfig, saliency: &SaliencyMatrix, variant: Option<Variant>) -> Result<GyroOutcome, HinmError> {
    match variant {
        None => prune_identity(saliency, cfg),
        Some(v) => ablation_mode(cfg, saliency.shape(), v)?.run(saliency),
    }
}

fn run(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Stats { rows, cols } => {
            let cfg = load_config(cli)?;
            let layout = validate_config(&cfg, (*rows, *cols))?;
            let count = count_permutation_space(*rows, *cols, cfg.vector_size, cfg.nm_group)?;
            println!("shape: {rows}x{cols}");
            println!(
                "pattern: V={} {}:{} vector_sparsity={}",
                cfg.vector_size, cfg.nm_keep, cfg.nm_group, cfg.vector_sparsity
            );
            println!(
                "composed_sparsity: {}",
                composed_sparsity(cfg.vector_sparsity, cfg.nm_keep, cfg.nm_group)
            );
            println!("exact_sparsity: {}", exact_sparsity(&layout));
            println!("permutation_space: {}", group_digits(&count));
        }
        Command::Prune {
            input,
            no_perm,
            variant,
            out,
            encoding,
            report,
        } => {
            let cfg = load_config(cli)?;
            let (weights, saliency) = load_inputs(input)?;
            saliency.expect_shape(weights.shape())?;
            let layout = validate_config(&cfg, weights.shape())?;
            let variant = (!no_perm).then(|| Variant::from(*variant));
            let outcome = run_permutation(&cfg, &saliency, variant)?;
            let masked = apply_masks(&weights, &outcome.masks)?;
            let enc = encode(&weights, &outcome.masks, &outcome.permutation, &layout)?;
            save_matrix(out, &masked)?;
            let enc_path = encoding.clone().unwrap_or_else(|| out.with_extension("enc.json"));
            enc.save(&enc_path)?;
            write_text(report, outcome.report.to_json()?)?;
            log::info!(
                "retained {} of {} saliency",
                outcome.report.retained_saliency,
                outcome.report.total_saliency
            );
        }
        Command::Permute {
            input,
            variant,
            out,
            report,
        } => {
            let cfg = load_config(cli)?;
            let (_, saliency) = load_inputs(input)?;
            let outcome = run_permutation(&cfg, &saliency, Some((*variant).into()))?;
            write_json(out, &outcome.permutation)?;
            if let Some(path) = report {
                write_text(path, outcome.report.to_json()?)?;
            }
        }
        Command::Encode {
            input,
            permutation,
            out,
        } => {
            let cfg = load_config(cli)?;
            let (weights, saliency) = load_inputs(input)?;
            let layout = validate_config(&cfg, weights.shape())?;
            let perm: GyroPermutation = serde_json::from_str(&std::fs::read_to_string(permutation)?)?;
            perm.validate(&layout)?;
            let masks = prune_with(&saliency, &layout, &perm)?;
            encode(&weights, &masks, &perm, &layout)?.save(out)?;
        }
        Command::Decode {
            encoding,
            out,
            original_order,
        } => {
            let enc = HiNMEncoding::load(encoding)?;
            let mut dense = decode(&enc, enc.shape())?;
            if *original_order {
                dense = dense.scatter_rows(&enc.sigma_o)?;
            }
            save_matrix(out, &dense)?;
        }
        Command::Spmm { encoding, input, out } => {
            let enc = HiNMEncoding::load(encoding)?;
            let x = load_matrix(input)?;
            save_matrix(out, &hinm_spmm(&enc, &x)?)?;
        }
        Command::Chain { manifest, input, out } => {
            let chain = ChainManifest::load_chain(manifest)?;
            let x = load_matrix(input)?;
            save_matrix(out, &compose_layers(&chain, &x)?)?;
        }
        Command::Oracle { input, report, force } => {
            let cfg = load_config(cli)?;
            let (_, saliency) = load_inputs(input)?;
            let mut oracle = Oracle::new(&cfg, saliency.shape())?;
            if *force {
                oracle = oracle.with_limit(None);
            }
            let result = oracle_gap_with(&oracle, &saliency)?;
            write_text(report, result.to_json()?)?;
            println!(
                "no_perm {} gyro {} oracle {} gap {}",
                result.no_perm_retained, result.gyro_retained, result.oracle_retained, result.gap
            );
        }
        Command::ShuffleCheck {
            encoding,
            input,
            trials,
            tolerance,
        } => {
            let enc = HiNMEncoding::load(encoding)?;
            let x = load_matrix(input)?;
            let seed = match &cli.config {
                Some(_) => load_config(cli)?.seed,
                None => cli.seed.unwrap_or(0),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut worst = 0.0f64;
            let mut failures = 0;
            for _ in 0..*trials {
                let r = tile_shuffle_check(&enc, &x, &mut rng)?;
                worst = worst.max(r.max_relative_error);
                if !r.passed(*tolerance) {
                    failures += 1;
                }
            }
            println!("trials {trials} failures {failures} max_relative_error {worst:e}");
            if failures > 0 {
                return Err(Failure::Check(format!("{failures} of {trials} shuffles diverged")));
            }
        }
    }
    Ok(())
}
