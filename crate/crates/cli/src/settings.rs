//! Option resolution: command-line flags override JSON config values,
//! which override built-in defaults.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use lffn_core::net::NetworkSpec;
use lffn_core::net::Variant;
use lffn_core::train::TrainConfig;

/// Errors split by exit code: usage/path problems exit 2, everything
/// else (internal or numerical failures) exits 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Internal(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Internal(_) => 1,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl From<lffn_core::Error> for CliError {
    fn from(e: lffn_core::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Network-shape flags shared by every command that builds a spec.
#[derive(clap::Args, Debug, Clone, Default)]
pub struct SpecArgs {
    /// Named preset: lffn, lffn-s, lffn-nf, lffn-ns
    #[arg(long)]
    pub preset: Option<String>,
    /// Spindle blocks per module (B)
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Stacked feature-fusion modules (M)
    #[arg(long)]
    pub modules: Option<usize>,
    /// Upscaling factor: 2, 3, or 4
    #[arg(long)]
    pub scale: Option<usize>,
    /// Use depthwise branch convolutions (pass `--depthwise` or `--depthwise false`)
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub depthwise: Option<bool>,
    /// Architecture variant: full, no-sffm, residual-baseline
    #[arg(long)]
    pub variant: Option<String>,
}

/// Training-recipe override flags.
#[derive(clap::Args, Debug, Clone, Default)]
pub struct TrainOverrideArgs {
    /// Patches per optimizer step
    #[arg(long)]
    pub batch: Option<usize>,
    /// Low-resolution patch side
    #[arg(long)]
    pub patch: Option<usize>,
    /// Initial learning rate (default 8e-4; 4e-4 when resuming)
    #[arg(long)]
    pub lr0: Option<f64>,
    /// Epochs between learning-rate halvings
    #[arg(long)]
    pub halve_every: Option<usize>,
    /// Optimizer steps per epoch
    #[arg(long)]
    pub iters_per_epoch: Option<usize>,
    /// Total epochs
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Gradient clipping stiffness (clamps gradients to ±theta/lr)
    #[arg(long)]
    pub clip_theta: Option<f64>,
}

/// JSON config file contents; every field optional, flags take precedence.
#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
pub struct JsonConfig {
    pub preset: Option<String>,
    pub blocks: Option<usize>,
    pub modules: Option<usize>,
    pub scale: Option<usize>,
    pub depthwise: Option<bool>,
    pub variant: Option<String>,
    pub seed: Option<u64>,
    pub batch: Option<usize>,
    pub patch: Option<usize>,
    pub lr0: Option<f64>,
    pub halve_every: Option<usize>,
    pub iters_per_epoch: Option<usize>,
    pub epochs: Option<usize>,
    pub clip_theta: Option<f64>,
    pub corpus: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub loss_csv: Option<PathBuf>,
    pub resume: Option<PathBuf>,
}

pub fn load_json_config(path: Option<&Path>) -> CliResult<JsonConfig> {
    let Some(path) = path else {
        return Ok(JsonConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
}

/// True when any spec field was given explicitly (flag or JSON).
pub fn spec_requested(args: &SpecArgs, json: &JsonConfig) -> bool {
    args.preset.is_some()
        || args.blocks.is_some()
        || args.modules.is_some()
        || args.scale.is_some()
        || args.depthwise.is_some()
        || args.variant.is_some()
        || json.preset.is_some()
        || json.blocks.is_some()
        || json.modules.is_some()
        || json.scale.is_some()
        || json.depthwise.is_some()
        || json.variant.is_some()
}

/// Builds the network spec: preset (if named) refined by explicit field
/// overrides; defaults to the `lffn` preset.
pub fn resolve_spec(args: &SpecArgs, json: &JsonConfig) -> CliResult<NetworkSpec> {
    let preset = args.preset.clone().or_else(|| json.preset.clone());
    let mut spec = match preset {
        Some(name) => NetworkSpec::preset(&name).map_err(|e| CliError::usage(e.to_string()))?,
        None => NetworkSpec::preset("lffn").expect("built-in preset"),
    };
    if let Some(b) = args.blocks.or(json.blocks) {
        spec.blocks = b;
    }
    if let Some(m) = args.modules.or(json.modules) {
        spec.modules = m;
    }
    if let Some(s) = args.scale.or(json.scale) {
        spec.scale = s;
    }
    if let Some(d) = args.depthwise.or(json.depthwise) {
        spec.depthwise = d;
    }
    if let Some(v) = args.variant.clone().or_else(|| json.variant.clone()) {
        spec.variant =
            Variant::parse(&v).map_err(|e| CliError::usage(format!("bad --variant: {e}")))?;
    }
    spec.validate()
        .map_err(|e| CliError::usage(format!("invalid network spec: {e}")))?;
    Ok(spec)
}

/// Builds the training config; `resuming` switches the default initial
/// learning rate from 8e-4 to the fine-tuning 4e-4.
pub fn resolve_train_config(
    args: &TrainOverrideArgs,
    json: &JsonConfig,
    seed: u64,
    resuming: bool,
) -> CliResult<TrainConfig> {
    let mut cfg = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    if resuming {
        cfg.lr0 = 4e-4;
    }
    if let Some(v) = args.batch.or(json.batch) {
        cfg.batch = v;
    }
    if let Some(v) = args.patch.or(json.patch) {
        cfg.lr_patch = v;
    }
    if let Some(v) = args.lr0.or(json.lr0) {
        cfg.lr0 = v;
    }
    if let Some(v) = args.halve_every.or(json.halve_every) {
        cfg.halve_every = v;
    }
    if let Some(v) = args.iters_per_epoch.or(json.iters_per_epoch) {
        cfg.iters_per_epoch = v;
    }
    if let Some(v) = args.epochs.or(json.epochs) {
        cfg.epochs = v;
    }
    if let Some(v) = args.clip_theta.or(json.clip_theta) {
        cfg.clip_theta = v;
    }
    cfg.validate()
        .map_err(|e| CliError::usage(format!("invalid training config: {e}")))?;
    Ok(cfg)
}

pub fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::usage(format!(
            "{what} {} does not exist",
            path.display()
        )))
    }
}

pub fn require_dir(path: &Path, what: &str) -> CliResult<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::usage(format!(
            "{what} {} is not a directory",
            path.display()
        )))
    }
}

/// Output paths must land in an existing directory.
pub fn require_writable(path: &Path, what: &str) -> CliResult<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if parent.is_dir() {
        Ok(())
    } else {
        Err(CliError::usage(format!(
            "{what} {} is not writable: directory {} does not exist",
            path.display(),
            parent.display()
        )))
    }
}

/// Worker cap from `LFFN_THREADS` (default 1).
pub fn thread_cap() -> CliResult<usize> {
    match std::env::var("LFFN_THREADS") {
        Err(_) => Ok(1),
        Ok(raw) => raw
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| {
                CliError::usage(format!(
                    "LFFN_THREADS must be a positive integer, got {raw:?}"
                ))
            }),
    }
}
