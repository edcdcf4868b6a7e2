//! Layered configuration: task preset, then the TOML file, then flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use ccm_core::experiment::{ExperimentConfig, Task};
use ccm_core::{Curvature, Seeds};
use toml::{Table, Value};

/// Environment variable naming the directory with the MNIST IDX files.
pub const DATA_ENV: &str = "CCM_AAE_DATA";

/// Name of the merged-config echo written next to every output.
pub const ECHO_FILE: &str = "config.toml";

#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub kappa: Option<Curvature>,
    pub latent_dim: Option<usize>,
    pub task: Option<Task>,
    pub data_dir: Option<PathBuf>,
}

fn preset(task: Task, kappa: Curvature) -> ExperimentConfig {
    match task {
        Task::Synthetic => ExperimentConfig::synthetic_desk(kappa),
        Task::Mnist => {
            let mut cfg = ExperimentConfig::default();
            cfg.train.kappa = kappa;
            cfg
        }
    }
}

/// Recursively overlays `top` onto `base`; tables merge, anything else
/// replaces.
fn merge(base: &mut Table, top: Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

pub fn load(
    file: Option<&Path>,
    flags: &Overrides,
    env_data: Option<PathBuf>,
) -> anyhow::Result<ExperimentConfig> {
    let file_table = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config file {}", path.display()))?;
            text.parse::<Table>()
                .with_context(|| format!("cannot parse config file {}", path.display()))?
        }
        None => Table::new(),
    };

    let file_task = match file_table.get("task") {
        Some(Value::String(s)) => Some(s.parse::<Task>()?),
        Some(other) => bail!("task must be a string, found {other}"),
        None => None,
    };
    let task = flags.task.or(file_task).unwrap_or(Task::Mnist);
    let kappa = flags.kappa.unwrap_or(Curvature::Spherical);

    let mut table = Table::try_from(preset(task, kappa)).context("cannot serialise preset")?;
    merge(&mut table, file_table);
    let mut cfg: ExperimentConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| anyhow::anyhow!("invalid configuration: {}", e.message()))?;

    cfg.task = task;
    if let Some(k) = flags.kappa {
        cfg.train.kappa = k;
    }
    if let Some(d) = flags.latent_dim {
        cfg.train.latent_dim = d;
    }
    if let Some(seed) = flags.seed {
        cfg.train.seeds = Seeds::from_base(seed);
    }
    if let Some(out) = &flags.out {
        cfg.out_dir = out.clone();
    }
    if let Some(dir) = &flags.data_dir {
        cfg.data_dir = Some(dir.clone());
    }
    if cfg.data_dir.is_none() {
        cfg.data_dir = env_data;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn echo(cfg: &ExperimentConfig) -> anyhow::Result<String> {
    Ok(toml::to_string(cfg)?)
}
