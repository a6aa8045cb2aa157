use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dpsketch::audit::{audit_dp, AuditSetup};
use dpsketch::bench::{bench_space, bench_update, BenchReport, BenchSetup};
use dpsketch::bounds::delta_for;
use dpsketch::dp::{derive_params, make_dp, run_pipeline, Pipeline, PrivacyStatus};
use dpsketch::format::SketchFile;
use dpsketch::{Family, Seed, SketchConfig, SketchError};
use serde::Serialize;

const EXIT_FLAGS: u8 = 2;
const EXIT_INPUT: u8 = 3;
const EXIT_INCOMPATIBLE: u8 = 4;
const EXIT_PRIVATIZED: u8 = 5;

/// Differentially private cardinality sketches.
#[derive(Parser)]
#[command(name = "dpsketch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a sketch from newline-delimited items.
    Build(BuildArgs),
    /// Merge two or more compatible sketch files.
    Merge(MergeArgs),
    /// Privatize a raw or base sketch file.
    Makedp(MakeDpArgs),
    /// Print the corrected estimate stored in a sketch file.
    Estimate(EstimateArgs),
    /// Closed-form delta for a plain sketch.
    Bounds(BoundsArgs),
    /// Likelihood-ratio audit of a pipeline.
    Audit(AuditArgs),
    /// Time per update of HLL, gated HLL and the O(k) stub, as CSV.
    BenchUpdate(BenchUpdateArgs),
    /// Register growth of the same three variants, as CSV.
    BenchSpace(BenchSpaceArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// hll, bottomk, fm85, lpca or adaptive.
    #[arg(long)]
    family: String,
    #[arg(long)]
    k: usize,
    /// LPCA item sampling rate.
    #[arg(long)]
    p: Option<f64>,
    /// FM85 bitmap length.
    #[arg(long)]
    ell: Option<u8>,
    /// HLL register width in bits.
    #[arg(long)]
    width: Option<u8>,
}

#[derive(Args)]
struct BuildArgs {
    /// Item file; standard input when absent or `-`.
    input: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    epsilon: Option<f64>,
    /// raw, base, large-set or any-set.
    #[arg(long, default_value = "raw")]
    pipeline: String,
    /// 32-byte seed as 64 hex characters; random when absent.
    #[arg(long)]
    seed_hex: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MergeArgs {
    #[arg(required = true, num_args = 2..)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MakeDpArgs {
    input: PathBuf,
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    input: PathBuf,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    n: u64,
}

#[derive(Args)]
struct AuditArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value = "large-set")]
    pipeline: String,
    #[arg(long)]
    n: u64,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long)]
    seed_hex: Option<String>,
    /// Compare a dataset with itself; no state should be flagged.
    #[arg(long)]
    self_compare: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Register counts, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [128usize, 256, 512, 1024, 2048, 4096])]
    k: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = std::f64::consts::LN_2)]
    epsilon: f64,
    #[arg(long)]
    seed_hex: Option<String>,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchUpdateArgs {
    #[command(flatten)]
    bench: BenchArgs,
    /// Distinct items inserted per trial.
    #[arg(long, default_value_t = 10_000)]
    updates: usize,
}

#[derive(Args)]
struct BenchSpaceArgs {
    #[command(flatten)]
    bench: BenchArgs,
    /// Stream cardinality.
    #[arg(long, default_value_t = 1 << 20)]
    n: u64,
}

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl ToString) -> Failure {
    Failure {
        code,
        message: message.to_string(),
    }
}

type CliResult<T> = Result<T, Failure>;

fn flag_err(e: impl ToString) -> Failure {
    fail(EXIT_FLAGS, e)
}

impl ConfigArgs {
    /// With `strict`, family-specific parameters must be given explicitly.
    fn resolve(&self, strict: bool) -> CliResult<SketchConfig> {
        let family: Family = self.family.parse().map_err(flag_err)?;
        let missing = |flag: &str| flag_err(format!("--{flag} is required for family {family}"));
        let config = match family {
            Family::Hll => match self.width {
                Some(w) => SketchConfig::Hll { k: self.k, register_width: w },
                None => SketchConfig::hll(self.k),
            },
            Family::Fm85 => match self.ell {
                Some(ell) => SketchConfig::Fm85 { k: self.k, bitmap_len: ell },
                None if strict => return Err(missing("ell")),
                None => SketchConfig::fm85(self.k),
            },
            Family::Lpca => match self.p {
                Some(p) => SketchConfig::Lpca { k: self.k, p },
                None if strict => return Err(missing("p")),
                None => SketchConfig::lpca(self.k),
            },
            other => SketchConfig::with_family(other, self.k),
        };
        config.validate().map_err(flag_err)?;
        Ok(config)
    }
}

fn parse_seed(hex: Option<&str>) -> CliResult<Seed> {
    match hex {
        Some(h) => h.parse().map_err(flag_err),
        None => Ok(Seed::from_bytes(rand::random())),
    }
}

/// Lines split on `\n` only; a trailing newline does not start an item.
fn split_items(bytes: &[u8]) -> Vec<&[u8]> {
    if bytes.is_empty() {
        return Vec::new();
    }
    let body = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    body.split(|&b| b == b'\n').collect()
}

fn read_input(path: Option<&Path>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    match path {
        Some(p) if p != Path::new("-") => {
            buf = fs::read(p).map_err(|e| fail(EXIT_INPUT, format!("{}: {e}", p.display())))?
        }
        _ => {
            io::stdin()
                .read_to_end(&mut buf)
                .map_err(|e| fail(EXIT_INPUT, format!("stdin: {e}")))?;
        }
    }
    Ok(buf)
}

fn read_sketch(path: &Path) -> CliResult<SketchFile> {
    let bytes = fs::read(path).map_err(|e| fail(EXIT_INPUT, format!("{}: {e}", path.display())))?;
    SketchFile::from_bytes(&bytes).map_err(|e| fail(EXIT_INPUT, format!("{}: {e}", path.display())))
}

fn write_sketch(path: Option<&Path>, file: &SketchFile) -> CliResult<()> {
    if let Some(p) = path {
        fs::write(p, file.to_bytes()).map_err(|e| fail(1, format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let s = serde_json::to_string(value).map_err(|e| fail(1, e))?;
    println!("{s}");
    Ok(())
}

#[derive(Serialize)]
struct EstimateOutput {
    /// `null` when the sketch is saturated.
    estimate: f64,
    pipeline: Pipeline,
    epsilon: Option<f64>,
    pi0: Option<f64>,
    n0: Option<u64>,
    v: u64,
    sampling_probability: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    status: Option<PrivacyStatus>,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<&'static str>,
}

fn describe(file: &SketchFile, status: Option<PrivacyStatus>) -> CliResult<EstimateOutput> {
    let est = file.estimate().map_err(|e| fail(1, e))?;
    let params = match file.epsilon {
        Some(eps) => Some(derive_params(eps, file.state.config()).map_err(|e| fail(EXIT_INPUT, e))?),
        None => None,
    };
    Ok(EstimateOutput {
        estimate: est.value,
        pipeline: file.pipeline,
        epsilon: file.epsilon,
        pi0: params.map(|p| p.pi0),
        n0: params.map(|p| p.n0),
        v: file.v,
        sampling_probability: file.state.sampling_probability(),
        status,
        note: (est.value < 0.0).then_some("negative estimates are unbiased and reported unclamped"),
    })
}

fn cmd_build(args: &BuildArgs) -> CliResult<()> {
    let config = args.config.resolve(false)?;
    let pipeline: Pipeline = args.pipeline.parse().map_err(flag_err)?;
    if pipeline == Pipeline::MakeDp {
        return Err(flag_err("build the sketch with --pipeline raw, then run makedp"));
    }
    if pipeline.needs_epsilon() != args.epsilon.is_some() {
        return Err(flag_err(if pipeline.needs_epsilon() {
            format!("--epsilon is required for pipeline {pipeline}")
        } else {
            format!("--epsilon is not used by pipeline {pipeline}")
        }));
    }
    let seed = parse_seed(args.seed_hex.as_deref())?;
    let input = read_input(args.input.as_deref())?;
    let run = run_pipeline(pipeline, split_items(&input), args.epsilon, config, seed).map_err(flag_err)?;
    let file = SketchFile::new(run.state, pipeline, args.epsilon, run.estimate.v).map_err(|e| fail(1, e))?;
    write_sketch(args.out.as_deref(), &file)?;
    if run.status == PrivacyStatus::LikelyBelowN0 {
        log::warn!(
            "estimate {:.1} is below n0 = {}; the pure guarantee needs more distinct items",
            run.estimate.value,
            run.params.map_or(0, |p| p.n0)
        );
    }
    print_json(&describe(&file, Some(run.status))?)
}

fn cmd_merge(args: &MergeArgs) -> CliResult<()> {
    let files = args
        .inputs
        .iter()
        .map(|p| read_sketch(p))
        .collect::<CliResult<Vec<_>>>()?;
    let mut merged = files[0].clone();
    for (f, path) in files[1..].iter().zip(&args.inputs[1..]) {
        merged = merged.merge(f).map_err(|e| match e {
            SketchError::Incompatible { field } => fail(
                EXIT_INCOMPATIBLE,
                format!("{} is incompatible: {field} differs", path.display()),
            ),
            other => fail(1, other),
        })?;
    }
    write_sketch(args.out.as_deref(), &merged)?;
    print_json(&describe(&merged, None)?)
}

fn cmd_makedp(args: &MakeDpArgs) -> CliResult<()> {
    let file = read_sketch(&args.input)?;
    if file.pipeline.downsamples() || file.pipeline == Pipeline::MakeDp {
        return Err(fail(
            EXIT_PRIVATIZED,
            format!("input was produced by pipeline {}; it is already private", file.pipeline),
        ));
    }
    let run = make_dp(&file.state, args.epsilon).map_err(flag_err)?;
    let out = SketchFile::new(run.state, Pipeline::MakeDp, Some(args.epsilon), run.estimate.v)
        .map_err(|e| fail(1, e))?;
    write_sketch(args.out.as_deref(), &out)?;
    print_json(&describe(&out, Some(run.status))?)
}

fn cmd_estimate(args: &EstimateArgs) -> CliResult<()> {
    print_json(&describe(&read_sketch(&args.input)?, None)?)
}

fn cmd_bounds(args: &BoundsArgs) -> CliResult<()> {
    let config = args.config.resolve(true)?;
    print_json(&delta_for(&config, args.epsilon, args.n).map_err(flag_err)?)
}

fn cmd_audit(args: &AuditArgs) -> CliResult<()> {
    let setup = AuditSetup {
        config: args.config.resolve(false)?,
        pipeline: args.pipeline.parse().map_err(flag_err)?,
        epsilon: args.epsilon,
        n: args.n,
        trials: args.trials,
        seed: parse_seed(args.seed_hex.as_deref())?,
        self_compare: args.self_compare,
    };
    print_json(&audit_dp(&setup).map_err(flag_err)?)
}

impl BenchArgs {
    fn setup(&self) -> CliResult<BenchSetup> {
        if self.trials == 0 {
            return Err(flag_err("--trials must be positive"));
        }
        Ok(BenchSetup {
            k_values: self.k.clone(),
            trials: self.trials,
            epsilon: self.epsilon,
            seed: parse_seed(self.seed_hex.as_deref())?,
        })
    }
}

fn write_csv(report: &BenchReport, out: Option<&Path>) -> CliResult<()> {
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(fs::File::create(p).map_err(|e| fail(1, format!("{}: {e}", p.display())))?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    for row in &report.rows {
        w.serialize(row).map_err(|e| fail(1, e))?;
    }
    w.flush().map_err(|e| fail(1, e))
}

fn cmd_bench_update(args: &BenchUpdateArgs) -> CliResult<()> {
    if args.updates == 0 {
        return Err(flag_err("--updates must be positive"));
    }
    let report = bench_update(&args.bench.setup()?, args.updates).map_err(flag_err)?;
    write_csv(&report, args.bench.out.as_deref())
}

fn cmd_bench_space(args: &BenchSpaceArgs) -> CliResult<()> {
    let report = bench_space(&args.bench.setup()?, args.n).map_err(flag_err)?;
    write_csv(&report, args.bench.out.as_deref())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Build(a) => cmd_build(a),
        Command::Merge(a) => cmd_merge(a),
        Command::Makedp(a) => cmd_makedp(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Audit(a) => cmd_audit(a),
        Command::BenchUpdate(a) => cmd_bench_update(a),
        Command::BenchSpace(a) => cmd_bench_space(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("dpsketch: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
