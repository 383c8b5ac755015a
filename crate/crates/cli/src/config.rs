//! Run configuration: one TOML file with `train`, `model`, `p2rnet`, `data`
//! and `eval` sections, plus dotted-key overrides from the command line.

use std::path::{Path, PathBuf};

use hypsam_backends::SamVariant;
use hypsam_core::p2rnet::{
    AntonymPair, PipelineConfig, PromptKinds, RefineInput, RefineStrategy, SelectorConfig,
    SelectorMode, TauSemantics,
};
use hypsam_dfnet::train::TrainConfig;
use hypsam_dfnet::DfNetConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct P2rNetSection {
    pub tau: f64,
    pub theta: f64,
    pub tau_semantics: TauSemantics,
    pub logit_scale: f64,
    pub selector: SelectorMode,
    pub bin_thresh: f32,
    pub min_area_frac: f64,
    pub strategy: String,
    pub weight: f32,
    pub se_radius: usize,
    pub refine_input: RefineInput,
    pub prompt_mask: bool,
    pub prompt_boxes: bool,
    pub prompt_points: bool,
    /// `stub` or one of the Segment Anything variants.
    pub backend: String,
    /// `clip` or `none`.
    pub scorer: String,
    pub seed: u64,
}

impl Default for P2rNetSection {
    fn default() -> Self {
        let sel = SelectorConfig::default();
        let pipe = PipelineConfig::default();
        let prompts = PromptKinds::default();
        Self {
            tau: sel.tau,
            theta: sel.theta,
            tau_semantics: sel.tau_semantics,
            logit_scale: sel.logit_scale,
            selector: pipe.mode,
            bin_thresh: pipe.bin_thresh,
            min_area_frac: pipe.min_area_frac,
            strategy: pipe.strategy.name().to_owned(),
            weight: 0.5,
            se_radius: 3,
            refine_input: pipe.refine_input,
            prompt_mask: prompts.mask,
            prompt_boxes: prompts.boxes,
            prompt_points: prompts.points,
            backend: SamVariant::VitH.name().to_owned(),
            scorer: "clip".to_owned(),
            seed: 0,
        }
    }
}

impl P2rNetSection {
    pub fn pipeline(&self) -> CliResult<PipelineConfig> {
        Ok(PipelineConfig {
            selector: SelectorConfig {
                tau: self.tau,
                theta: self.theta,
                brightness: AntonymPair::brightness(),
                colorfulness: AntonymPair::colorfulness(),
                logit_scale: self.logit_scale,
                tau_semantics: self.tau_semantics,
            },
            mode: self.selector,
            bin_thresh: self.bin_thresh,
            min_area_frac: self.min_area_frac,
            prompts: PromptKinds {
                mask: self.prompt_mask,
                boxes: self.prompt_boxes,
                points: self.prompt_points,
            },
            strategy: RefineStrategy::parse(&self.strategy, self.weight, self.se_radius)?,
            refine_input: self.refine_input,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub root: PathBuf,
    /// Network input size; must agree with `model.resolution`.
    pub resolution: usize,
    pub train_split: String,
    pub val_split: Option<String>,
    pub test_split: String,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            root: PathBuf::from("data"),
            resolution: 384,
            train_split: "train".into(),
            val_split: None,
            test_split: "test".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Number of curve thresholds; the toolbox uses 256.
    pub thresholds: usize,
    pub report_dir: PathBuf,
    /// Min-max normalize predictions before scoring.
    pub normalize: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            thresholds: hypsam_core::metrics::THRESHOLDS,
            report_dir: PathBuf::from("reports"),
            normalize: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub model: DfNetConfig,
    pub p2rnet: P2rNetSection,
    pub data: DataSection,
    pub eval: EvalSection,
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

/// Parses an override value as a TOML literal, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()))
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> CliResult<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("malformed key `{key}`")));
    }
    let (last, path) = parts.split_last().expect("non-empty key");
    let mut cur = table;
    for p in path {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("`{p}` in `{key}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Reads `path` (defaults if `None`), applies `key=value` overrides and
    /// validates the result.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> CliResult<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                toml::from_str::<toml::Table>(&text).map_err(config_err)?
            }
            None => toml::Table::new(),
        };
        for (k, v) in overrides {
            set_dotted(&mut table, k, parse_value(v))?;
        }
        let cfg: RunConfig = toml::Value::Table(table).try_into().map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(config_err)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn sha256(&self) -> String {
        crate::sha256_hex(self.to_toml().as_bytes())
    }

    pub fn validate(&self) -> CliResult<()> {
        self.train.validate()?;
        self.model.validate()?;
        if self.data.resolution != self.model.resolution {
            return Err(CliError::Config(format!(
                "data.resolution ({}) and model.resolution ({}) differ",
                self.data.resolution, self.model.resolution
            )));
        }
        if self.eval.thresholds != hypsam_core::metrics::THRESHOLDS {
            return Err(CliError::Config(format!(
                "eval.thresholds must be {}",
                hypsam_core::metrics::THRESHOLDS
            )));
        }
        let p = &self.p2rnet;
        for (name, v) in [("p2rnet.tau", p.tau), ("p2rnet.theta", p.theta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(CliError::Config(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&p.bin_thresh) || !(0.0..=1.0).contains(&p.min_area_frac) {
            return Err(CliError::Config(
                "p2rnet.bin_thresh and p2rnet.min_area_frac must lie in [0, 1]".into(),
            ));
        }
        p.pipeline()?;
        if p.backend != "stub" && SamVariant::parse(&p.backend).is_none() {
            let known: Vec<&str> = SamVariant::ALL.iter().map(|v| v.name()).collect();
            return Err(CliError::Config(format!(
                "unknown p2rnet.backend `{}` (expected stub, {})",
                p.backend,
                known.join(", ")
            )));
        }
        if p.scorer != "clip" && p.scorer != "none" {
            return Err(CliError::Config(format!(
                "unknown p2rnet.scorer `{}`",
                p.scorer
            )));
        }
        if p.selector == SelectorMode::Clip && p.scorer == "none" {
            return Err(CliError::Config(
                "p2rnet.selector = \"clip\" needs p2rnet.scorer = \"clip\"".into(),
            ));
        }
        Ok(())
    }
}
