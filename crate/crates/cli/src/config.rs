use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use autogp::forecaster::{ForecastConfig, ModelOptions, TrainConfig, WindowConfig};
use autogp::kernels::BasicKernelKind;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Kas,
    Greedy,
    Fixed,
}

/// Everything a run needs. Loaded from TOML, then `--set` overrides, then
/// command-line flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub strategy: Strategy,
    /// Kernel text used when `strategy = "fixed"`.
    pub kernel: String,
    /// Search depth R.
    pub order: usize,
    pub kernels: Vec<BasicKernelKind>,
    /// Train / validation / test weights.
    pub split: [f64; 3],
    pub forward_fill: bool,
    pub timestamp_column: Option<String>,
    pub window: WindowConfig,
    pub model: ModelOptions,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            out: PathBuf::from("out"),
            seed: 0,
            strategy: Strategy::Kas,
            kernel: "SE".into(),
            order: 2,
            kernels: BasicKernelKind::ALL.to_vec(),
            split: [7.0, 1.0, 2.0],
            forward_fill: false,
            timestamp_column: None,
            window: WindowConfig::new(12, 1, 1),
            model: ModelOptions::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    /// Defaults, overlaid with the file (if any) and then each `key=value`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read config '{}'", p.display()))?;
                text.parse::<toml::Table>()
                    .with_context(|| format!("invalid TOML in '{}'", p.display()))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            bail!("order (search depth R) must be at least 1");
        }
        if self.kernels.is_empty() {
            bail!("kernel set is empty");
        }
        if self.split.iter().any(|w| !(*w >= 0.0)) || self.split[0] <= 0.0 {
            bail!("split weights must be non-negative with a positive training share");
        }
        self.window.validate()?;
        self.train.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn forecast(&self) -> ForecastConfig {
        ForecastConfig {
            window: self.window,
            model: self.model.clone(),
            train: self.train.clone(),
            seed: self.seed,
        }
    }

    pub fn data_path(&self) -> Result<&Path> {
        match &self.data {
            Some(p) => Ok(p),
            None => bail!("no dataset given (use --data or set `data` in the config)"),
        }
    }
}

/// Sets a dotted key such as `train.lr=0.01`. The value is read as a TOML
/// value when it parses as one, and as a plain string otherwise.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let Some((key, raw)) = spec.split_once('=') else {
        bail!("override '{spec}' is not of the form key=value");
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override '{spec}' has an empty key segment");
    }
    let value = parse_value(raw.trim());
    let (last, parents) = parts.split_last().expect("non-empty key");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => bail!("override '{spec}': '{p}' is not a table"),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
