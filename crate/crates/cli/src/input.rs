use std::path::Path;

use pilotwave::dsl::{parse_experiment, DslError};
use pilotwave::ensemble::ExperimentSpec;
use pilotwave::experiments::{scenario, MaskPreset, SCENARIOS};
use pilotwave::Error;

/// Exit code for malformed input or failed validation.
pub const EXIT_INPUT: i32 = 2;
/// Exit code for a certified incompatibility.
pub const EXIT_INCOMPATIBLE: i32 = 3;
/// Exit code for a principle violation without a certificate.
pub const EXIT_VIOLATED: i32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("no such scenario or file: {0}")]
    NotFound(String),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{error}")]
    Parse { path: String, error: String },
    #[error("{0}")]
    Sim(#[from] Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Sim(Error::Incompatible(_)) => EXIT_INCOMPATIBLE,
            _ => EXIT_INPUT,
        }
    }
}

fn dsl_message(e: &DslError) -> String {
    match e {
        DslError::Syntax(p) => format!("{}:{}: {}", p.line, p.col, p.message),
        DslError::Invalid { line, col, source } => format!("{line}:{col}: {source}"),
    }
}

/// Parses a `.pwx` file.
pub fn read_experiment_file(path: &Path) -> Result<ExperimentSpec, CliError> {
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: shown.clone(),
        source,
    })?;
    parse_experiment(&text).map_err(|e| CliError::Parse {
        path: shown,
        error: dsl_message(&e),
    })
}

/// Resolves a built-in scenario name or a `.pwx` path.
///
/// For files, `default` keeps the declared masks, `none` drops them and
/// `straight` is rejected.
pub fn load_experiment(target: &str, masks: MaskPreset) -> Result<ExperimentSpec, CliError> {
    if SCENARIOS.contains(&target) {
        return Ok(scenario(target, masks)?);
    }
    let path = Path::new(target);
    if !path.is_file() {
        return Err(CliError::NotFound(target.to_string()));
    }
    let spec = read_experiment_file(path)?;
    match masks {
        MaskPreset::Default => Ok(spec),
        MaskPreset::None => Ok(spec.without_masks()),
        MaskPreset::Straight => Err(CliError::Usage(
            "--mask straight applies to built-in scenarios only".into(),
        )),
    }
}
