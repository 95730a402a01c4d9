//! Resolution of --config / --preset plus overrides into a validated
//! experiment, and the metadata sidecar every command writes.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use aoi_probe::config::ExperimentConfig;
use aoi_probe::presets;

use crate::CommonArgs;

/// Which model family a command wants when the preset alone is ambiguous
/// (fig6 exists in both variants).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Iid,
    Markov,
}

pub struct Resolved {
    pub experiment: ExperimentConfig,
    pub preset: Option<String>,
    /// Overrides echoed into the metadata sidecar.
    pub overrides: serde_json::Value,
}

pub fn resolve(common: &CommonArgs, model_hint: Option<ModelKind>) -> Result<Resolved> {
    let alpha = common
        .alpha
        .unwrap_or(aoi_probe::config::SystemConfig::DEFAULT_DISCOUNT);
    let mut experiment = match (&common.config, &common.preset) {
        (Some(path), None) => ExperimentConfig::from_path(path)
            .with_context(|| format!("reading config {}", path.display()))?,
        (None, Some(preset)) => preset_experiment(preset, alpha, common, model_hint)?,
        (None, None) => bail!(aoi_probe::Error::InvalidConfig(
            "pass --config <file> or --preset <name>".into()
        )),
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };

    if let Some(alpha) = common.alpha {
        experiment.system.discount = alpha;
    }
    if let Some(lambda) = common.lambda {
        if experiment.energy.support.is_some() {
            bail!(aoi_probe::Error::InvalidConfig(
                "--lambda cannot override an explicit arrival distribution".into()
            ));
        }
        experiment.energy.bernoulli_lambda = Some(lambda);
    }
    if let Some(t_max) = common.t_max {
        experiment.system.age_cap = t_max;
    }
    let experiment = experiment.validated().map_err(anyhow::Error::from)?;

    Ok(Resolved {
        experiment,
        preset: common.preset.clone(),
        overrides: serde_json::json!({
            "alpha": common.alpha,
            "lambda": common.lambda,
            "t_max": common.t_max,
        }),
    })
}

fn preset_experiment(
    name: &str,
    alpha: f64,
    common: &CommonArgs,
    model_hint: Option<ModelKind>,
) -> Result<ExperimentConfig> {
    let t_max = common
        .t_max
        .unwrap_or(aoi_probe::config::SystemConfig::DEFAULT_AGE_CAP_SOLVE);
    let lambda = common.lambda.unwrap_or(presets::DEFAULT_LAMBDA);
    let cfg = match name {
        "fig2" | "fig5" => presets::fig2(lambda, alpha, t_max),
        "fig3" | "fig4" => presets::fig3(alpha, t_max),
        "fig6" => match model_hint.unwrap_or(ModelKind::Iid) {
            ModelKind::Iid => presets::fig6_iid(alpha),
            ModelKind::Markov => presets::fig6_markov(alpha),
        },
        other => bail!(aoi_probe::Error::InvalidConfig(format!(
            "unknown preset {other}; expected fig2|fig3|fig4|fig5|fig6"
        ))),
    };
    Ok(cfg)
}

pub fn parse_model(model: &Option<String>) -> Result<Option<ModelKind>> {
    match model.as_deref() {
        None => Ok(None),
        Some("iid") => Ok(Some(ModelKind::Iid)),
        Some("markov") => Ok(Some(ModelKind::Markov)),
        Some(other) => bail!(aoi_probe::Error::InvalidConfig(format!(
            "unknown model {other}; expected iid|markov"
        ))),
    }
}

/// Creates the output directory and writes `metadata.json` describing the
/// fully resolved run. Returns the directory path for convenience.
pub fn write_metadata(
    resolved: &Resolved,
    common: &CommonArgs,
    command: &str,
    extra: serde_json::Value,
) -> Result<PathBuf> {
    fs::create_dir_all(&common.out)
        .with_context(|| format!("creating {}", common.out.display()))?;
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = serde_json::json!({
        "tool": "aoi-probe",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "preset": resolved.preset,
        "timestamp_unix": timestamp,
        "resolved_config": resolved.experiment,
        "overrides": resolved.overrides,
        "extra": extra,
    });
    let path = common.out.join("metadata.json");
    write_atomic(&path, serde_json::to_string_pretty(&meta)?.as_bytes())?;
    Ok(common.out.clone())
}

/// Writes through a temp file and renames, so partially written outputs
/// never appear under the final name.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}
