//! TOML run configuration and `--section.key value` overrides.

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use edgesplat::ablation::AblationMode;
use edgesplat::density::{DensifyConfig, DensifyMode, TransmittanceReading};
use edgesplat::loss::AttentionTerms;
use edgesplat::optim::{AdamConfig, LearningRates};
use edgesplat::train::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// One of baseline, geo, geo+opacity, full. Sets `loss.*` and `densify.mode`
    /// unless those are given explicitly.
    pub mode: String,
    pub train: TrainSection,
    pub lr: LrSection,
    pub adam: AdamSection,
    pub schedule: ScheduleSection,
    pub edge: EdgeSection,
    pub loss: LossSection,
    pub densify: DensifySection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub total_iters: usize,
    pub seed: u64,
    pub init_count: usize,
    pub init_variance_scale: f64,
    pub sh_degree_interval: usize,
    pub max_sh_degree: usize,
    pub log_interval: usize,
    pub eval_interval: usize,
    pub checkpoint_iters: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub background: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dssim_weight: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LrSection {
    pub position_init: f64,
    pub position_final: f64,
    pub sh_dc: f64,
    pub sh_rest: f64,
    pub opacity: f64,
    pub scale: f64,
    pub rotation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamSection {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    /// Steepness.
    pub s: f64,
    /// Decay node as a fraction of training.
    pub m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EdgeSection {
    pub radius: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSection {
    pub geometric: bool,
    pub appearance: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensifySection {
    pub mode: String,
    pub reading: String,
    pub tau_pos: f64,
    pub percent_dense: f64,
    pub interval: usize,
    pub start_iter: usize,
    pub stop_iter: usize,
    pub opacity_reset_interval: usize,
    pub prune_opacity_threshold: f64,
    pub max_world_scale_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_train(&TrainConfig::default(), AblationMode::Full, Vec::new())
    }
}

macro_rules! default_from_run {
    ($($ty:ident => $field:ident),*) => {$(
        impl Default for $ty {
            fn default() -> Self {
                RunConfig::default().$field
            }
        }
    )*};
}
default_from_run!(
    TrainSection => train, LrSection => lr, AdamSection => adam, ScheduleSection => schedule,
    EdgeSection => edge, LossSection => loss, DensifySection => densify
);

impl RunConfig {
    fn from_train(t: &TrainConfig, mode: AblationMode, checkpoint_iters: Vec<usize>) -> Self {
        let d = &t.densify;
        Self {
            mode: mode.as_str().to_string(),
            train: TrainSection {
                total_iters: t.total_iters,
                seed: t.seed,
                init_count: t.init_count,
                init_variance_scale: t.init_variance_scale,
                sh_degree_interval: t.sh_degree_interval,
                max_sh_degree: t.max_sh_degree,
                log_interval: t.log_interval,
                eval_interval: t.eval_interval,
                checkpoint_iters,
                background: t.background,
                dssim_weight: t.dssim_weight,
            },
            lr: LrSection {
                position_init: t.lr.position_init,
                position_final: t.lr.position_final,
                sh_dc: t.lr.sh_dc,
                sh_rest: t.lr.sh_rest,
                opacity: t.lr.opacity,
                scale: t.lr.scale,
                rotation: t.lr.rotation,
            },
            adam: AdamSection {
                beta1: t.adam.beta1,
                beta2: t.adam.beta2,
                eps: t.adam.eps,
            },
            schedule: ScheduleSection {
                s: t.steepness,
                m: t.decay_node,
            },
            edge: EdgeSection { radius: t.edge_radius },
            loss: LossSection {
                geometric: t.terms.geometric,
                appearance: t.terms.appearance,
            },
            densify: DensifySection {
                mode: d.mode.as_str().to_string(),
                reading: d.reading.as_str().to_string(),
                tau_pos: d.tau_pos,
                percent_dense: d.percent_dense,
                interval: d.interval,
                start_iter: d.start_iter,
                stop_iter: d.stop_iter,
                opacity_reset_interval: d.opacity_reset_interval,
                prune_opacity_threshold: d.prune_opacity_threshold,
                max_world_scale_fraction: d.max_world_scale_fraction,
            },
        }
    }

    /// Parses a config document, applying overrides and the mode selector.
    /// Keys set explicitly win over what the mode implies.
    pub fn from_toml(text: &str, overrides: &[(String, String)], mode_flag: Option<&str>) -> Result<Self> {
        let mut doc: toml::Table = text.parse().context("config is not valid TOML")?;
        for (key, value) in overrides {
            set_path(&mut doc, key, parse_value(value))?;
        }
        if let Some(m) = mode_flag {
            doc.insert("mode".into(), toml::Value::String(m.into()));
        }
        let mode: AblationMode = match doc.get("mode") {
            Some(toml::Value::String(s)) => s.parse()?,
            Some(other) => bail!("mode must be a string, got {other}"),
            None => AblationMode::Full,
        };
        let implied = [
            ("loss", "geometric", toml::Value::Boolean(mode.terms().geometric)),
            ("loss", "appearance", toml::Value::Boolean(mode.terms().appearance)),
            ("densify", "mode", toml::Value::String(mode.densify_mode().as_str().into())),
        ];
        for (section, key, value) in implied {
            let table = doc
                .entry(section)
                .or_insert_with(|| toml::Value::Table(Default::default()))
                .as_table_mut()
                .ok_or_else(|| anyhow!("{section} must be a table"))?;
            table.entry(key).or_insert(value);
        }
        let cfg: RunConfig = toml::Value::Table(doc).try_into().map_err(|e: toml::de::Error| anyhow!("{}", e.message()))?;
        cfg.to_train()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn mode(&self) -> Result<AblationMode> {
        Ok(self.mode.parse()?)
    }

    pub fn to_train(&self) -> Result<TrainConfig> {
        let d = &self.densify;
        let t = TrainConfig {
            total_iters: self.train.total_iters,
            lr: LearningRates {
                position_init: self.lr.position_init,
                position_final: self.lr.position_final,
                sh_dc: self.lr.sh_dc,
                sh_rest: self.lr.sh_rest,
                opacity: self.lr.opacity,
                scale: self.lr.scale,
                rotation: self.lr.rotation,
            },
            adam: AdamConfig {
                beta1: self.adam.beta1,
                beta2: self.adam.beta2,
                eps: self.adam.eps,
            },
            steepness: self.schedule.s,
            decay_node: self.schedule.m,
            edge_radius: self.edge.radius,
            terms: AttentionTerms {
                geometric: self.loss.geometric,
                appearance: self.loss.appearance,
            },
            dssim_weight: self.train.dssim_weight,
            densify: DensifyConfig {
                tau_pos: d.tau_pos,
                percent_dense: d.percent_dense,
                interval: d.interval,
                start_iter: d.start_iter,
                stop_iter: d.stop_iter,
                opacity_reset_interval: d.opacity_reset_interval,
                prune_opacity_threshold: d.prune_opacity_threshold,
                max_world_scale_fraction: d.max_world_scale_fraction,
                mode: d.mode.parse::<DensifyMode>()?,
                reading: d.reading.parse::<TransmittanceReading>()?,
            },
            init_count: self.train.init_count,
            init_variance_scale: self.train.init_variance_scale,
            seed: self.train.seed,
            background: self.train.background,
            sh_degree_interval: self.train.sh_degree_interval,
            max_sh_degree: self.train.max_sh_degree,
            log_interval: self.train.log_interval,
            eval_interval: self.train.eval_interval,
        };
        self.mode()?;
        t.validate()?;
        Ok(t)
    }
}

/// TOML value for a flag argument: anything TOML accepts, else a bare string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(doc: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("malformed override key {key:?}");
    }
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        table = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()))
            .as_table_mut()
            .ok_or_else(|| anyhow!("override {key:?}: {part} is not a table"))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Splits `--section.key value` and `--section.key=value` pairs out of `args`.
pub fn extract_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>)> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(body) = arg.strip_prefix("--").filter(|b| {
            let name = b.split('=').next().unwrap_or("");
            name.contains('.') && !name.starts_with('.')
        }) else {
            rest.push(arg);
            continue;
        };
        match body.split_once('=') {
            Some((k, v)) => overrides.push((k.to_string(), v.to_string())),
            None => {
                let v = it.next().ok_or_else(|| anyhow!("--{body} needs a value"))?;
                overrides.push((body.to_string(), v));
            }
        }
    }
    Ok((rest, overrides))
}
