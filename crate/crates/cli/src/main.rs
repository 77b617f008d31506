use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pilotwave::audit::Conclusion;
use pilotwave::dsl::serialize_experiment;
use pilotwave::ensemble::{sample_with_workers, ExperimentSpec, PolicyKind};
use pilotwave::experiments::MaskPreset;
use pilotwave_cli::input::{read_experiment_file, EXIT_INCOMPATIBLE, EXIT_VIOLATED};
use pilotwave_cli::render::{audit_table, distribution_csv, run_table, to_json, twostate_table};
use pilotwave_cli::report::{audit_output, run_report, twostate_report, TwoStateRequest};
use pilotwave_cli::{load_experiment, CliError};

#[derive(Parser)]
#[command(name = "pwl", version, about = "Discrete pilot-wave simulator and auditor")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate a scenario exactly and optionally sample trajectories.
    Run(RunArgs),
    /// Check the guidance principles and search for an incompatibility certificate.
    Audit(AuditArgs),
    /// Two-state quantities: ABL probabilities, weak values, combined guidance.
    Twostate(TwoStateArgs),
    /// Print a `.pwx` file in canonical form.
    Fmt(FmtArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Flow,
    Table,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mask {
    Default,
    None,
    Straight,
}

#[derive(Args)]
struct Common {
    /// Built-in scenario name or path to a `.pwx` file.
    target: String,
    #[arg(long, value_enum)]
    policy: Option<Policy>,
    #[arg(long, value_enum, default_value = "default")]
    mask: Mask,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Sampling {
    #[arg(long, env = "PWL_SEED", default_value_t = 0)]
    seed: u64,
    /// Worker threads for sampling (0 = all cores); results do not depend on it.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Exact propagation only (the default).
    #[arg(long, conflicts_with = "sample")]
    exact: bool,
    /// Number of Monte Carlo runs.
    #[arg(long)]
    sample: Option<u64>,
    #[command(flatten)]
    sampling: Sampling,
    /// Stage exported by `--format csv` (the last stage by default).
    #[arg(long)]
    stage: Option<usize>,
}

#[derive(Args)]
struct AuditArgs {
    #[command(flatten)]
    common: Common,
    /// Number of Monte Carlo runs behind the ensemble checks.
    #[arg(long, default_value_t = 20_000)]
    sample: u64,
    #[command(flatten)]
    sampling: Sampling,
}

#[derive(Args)]
struct TwoStateArgs {
    #[command(flatten)]
    common: Common,
    /// Post-selected final label, or `plus` / `minus`.
    #[arg(long)]
    post: Option<String>,
    /// Stage for ABL and weak values.
    #[arg(long)]
    stage: Option<usize>,
    /// Box for ABL probabilities, as labels joined by `,`.
    #[arg(long, value_delimiter = ',')]
    abl: Option<Vec<String>>,
    /// Operator for the weak value: `PiX`, `PiX+Y` or `I`.
    #[arg(long)]
    weak: Option<String>,
    /// Guide the particle by the normalized forward+backward wave.
    #[arg(long)]
    combined_guidance: bool,
}

#[derive(Args)]
struct FmtArgs {
    file: PathBuf,
    /// Exit with status 1 unless the file is already canonical.
    #[arg(long)]
    check: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn mask_preset(m: Mask) -> MaskPreset {
    match m {
        Mask::Default => MaskPreset::Default,
        Mask::None => MaskPreset::None,
        Mask::Straight => MaskPreset::Straight,
    }
}

fn load(c: &Common) -> Result<ExperimentSpec, CliError> {
    let spec = load_experiment(&c.target, mask_preset(c.mask))?;
    Ok(match c.policy {
        Some(Policy::Flow) => spec.with_policy(PolicyKind::Flow)?,
        Some(Policy::Table) => spec.with_policy(PolicyKind::Table)?,
        None => spec,
    })
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            // a closed pipe is not an error worth reporting
            let _ = stdout.write_all(text.as_bytes());
            Ok(())
        }
    }
}

fn run(args: RunArgs) -> Result<i32, CliError> {
    let spec = load(&args.common)?;
    let ensemble = match args.sample {
        Some(n) => Some(sample_with_workers(&spec, n, args.sampling.seed, args.sampling.workers)?),
        None => None,
    };
    let report = run_report(&spec, ensemble.as_ref())?;
    let text = match args.common.format {
        Format::Json => to_json(&report),
        Format::Table => run_table(&report),
        Format::Csv => {
            let t = args.stage.unwrap_or(report.stages.len() - 1);
            let s = report
                .stages
                .get(t)
                .ok_or_else(|| CliError::Usage(format!("no stage {t}")))?;
            let weights = s.particle.clone().unwrap_or_else(|| vec![0.0; s.labels.len()]);
            distribution_csv(&s.labels, &weights)
        }
    };
    emit(&args.common.out, &text)?;
    Ok(0)
}

fn audit(args: AuditArgs) -> Result<i32, CliError> {
    let spec = load(&args.common)?;
    let ens = sample_with_workers(&spec, args.sample, args.sampling.seed, args.sampling.workers)?;
    let report = audit_output(&spec, &ens)?;
    let text = match args.common.format {
        Format::Json => to_json(&report),
        Format::Table => audit_table(&report),
        Format::Csv => return Err(CliError::Usage("audit reports have no CSV form".into())),
    };
    emit(&args.common.out, &text)?;
    Ok(match report.conclusion() {
        Conclusion::Consistent => 0,
        Conclusion::Violated => EXIT_VIOLATED,
        Conclusion::Incompatible => EXIT_INCOMPATIBLE,
    })
}

fn twostate(args: TwoStateArgs) -> Result<i32, CliError> {
    let spec = load(&args.common)?;
    let req = TwoStateRequest {
        post: args.post,
        stage: args.stage,
        abl: args.abl,
        weak: args.weak,
        combined_guidance: args.combined_guidance,
    };
    let report = twostate_report(&spec, &req)?;
    let text = match args.common.format {
        Format::Json => to_json(&report),
        Format::Table => twostate_table(&report),
        Format::Csv => match &report.combined_guidance {
            Some(g) => {
                let s = g.get(report.stage).unwrap_or(&g[0]);
                distribution_csv(&s.labels, &s.distribution)
            }
            None => return Err(CliError::Usage("CSV output needs --combined-guidance".into())),
        },
    };
    emit(&args.common.out, &text)?;
    Ok(0)
}

fn fmt(args: FmtArgs) -> Result<i32, CliError> {
    let spec = read_experiment_file(&args.file)?;
    let text = serialize_experiment(&spec);
    if args.check {
        let current = std::fs::read_to_string(&args.file).map_err(|source| CliError::Io {
            path: args.file.display().to_string(),
            source,
        })?;
        return Ok(if current == text { 0 } else { 1 });
    }
    emit(&args.out, &text)?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Audit(a) => audit(a),
        Command::Twostate(a) => twostate(a),
        Command::Fmt(a) => fmt(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("pwl: error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
