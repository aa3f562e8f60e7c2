//! Run configuration: a TOML file mirroring the pipeline's knobs, with
//! command-line flags layered on top.
//!
//! Every run is a pure function of (config, input files, seeds); seeds are
//! explicit and mandatory for the commands that use randomness, so reruns
//! are byte-identical.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use perften_core::{
    BoostConfig, CompletionMethod, CpConfig, FactorInit, GrowthStrategy, ModelSpec, RecordFormat,
    RpcaConfig,
};

/// Raised for config and usage problems; mapped to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

pub const VALID_MODELS: [&str; 5] = ["baseline", "xgb", "lgbm", "cp", "rpca"];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[allow(dead_code)]
    pub task: Option<String>,
    pub input: PathBuf,
    #[serde(default = "default_format")]
    pub format: String,
    pub dim_order: Vec<String>,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub evaluation: EvalSection,
    #[serde(default)]
    pub reliability: RelSection,
}

fn default_format() -> String {
    "csv".to_string()
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: Option<String>,
    #[serde(default)]
    pub gbdt: GbdtSection,
    #[serde(default)]
    pub cp: CpSection,
    #[serde(default)]
    pub rpca: RpcaSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbdtSection {
    pub learning_rate: Option<f64>,
    pub n_trees: Option<usize>,
    pub max_depth: Option<usize>,
    pub max_leaves: Option<usize>,
    pub l2_leaf_penalty: Option<f64>,
    pub min_samples_leaf: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpSection {
    pub rank: Option<usize>,
    pub max_sweeps: Option<usize>,
    pub tolerance: Option<f64>,
    pub ridge: Option<f64>,
    pub init: Option<String>,
    pub seed: Option<u64>,
    pub standardize: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RpcaSection {
    pub lambda_lowrank: Option<f64>,
    pub lambda_sparse: Option<f64>,
    pub mu_growth: Option<f64>,
    pub max_iters: Option<usize>,
    pub tolerance: Option<f64>,
    pub scale_input: Option<bool>,
    pub unfold_mode: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub k: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelSection {
    pub bootstrap_k: Option<usize>,
    pub seed: Option<u64>,
    pub levels: Option<String>,
    pub test_input: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            UsageError(format!("config: cannot read '{}': {e}", path.display()))
        })?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| UsageError(format!("config: {e}")))?;
        if config.dim_order.len() < 2 {
            return Err(UsageError(
                "config: dim_order needs at least 2 dimensions".into(),
            ));
        }
        if !config.input.exists() {
            return Err(UsageError(format!(
                "config: input '{}' does not exist",
                config.input.display()
            )));
        }
        if let Some(test_input) = &config.reliability.test_input {
            if !test_input.exists() {
                return Err(UsageError(format!(
                    "config: reliability.test_input '{}' does not exist",
                    test_input.display()
                )));
            }
        }
        Ok(config)
    }

    pub fn record_format(&self) -> Result<RecordFormat, UsageError> {
        match self.format.as_str() {
            "csv" => Ok(RecordFormat::Csv),
            "jsonl" | "json-lines" => Ok(RecordFormat::JsonLines),
            other => Err(UsageError(format!(
                "config: format '{other}' is not one of csv, jsonl"
            ))),
        }
    }

    /// Resolve the model spec, with the --model flag taking precedence over
    /// `model.name` in the config.
    pub fn resolve_model(&self, flag: Option<&str>) -> Result<ModelSpec, UsageError> {
        let name = flag
            .map(str::to_string)
            .or_else(|| self.model.name.clone())
            .ok_or_else(|| {
                UsageError(format!(
                    "config: model.name is missing (valid names: {})",
                    VALID_MODELS.join(", ")
                ))
            })?;
        match name.as_str() {
            "baseline" => Ok(ModelSpec::Baseline),
            "xgb" => Ok(ModelSpec::Gbdt(self.boost_config(GrowthStrategy::LevelWise))),
            "lgbm" => Ok(ModelSpec::Gbdt(self.boost_config(GrowthStrategy::LeafWise))),
            "cp" => Ok(ModelSpec::Cp(self.cp_config()?)),
            "rpca" => Ok(ModelSpec::Rpca(self.rpca_config())),
            other => Err(UsageError(format!(
                "unknown model '{other}'; valid names: {}",
                VALID_MODELS.join(", ")
            ))),
        }
    }

    fn boost_config(&self, growth: GrowthStrategy) -> BoostConfig {
        let defaults = match growth {
            GrowthStrategy::LevelWise => BoostConfig::level_wise(),
            GrowthStrategy::LeafWise => BoostConfig::leaf_wise(),
        };
        let s = &self.model.gbdt;
        BoostConfig {
            growth,
            learning_rate: s.learning_rate.unwrap_or(defaults.learning_rate),
            n_trees: s.n_trees.unwrap_or(defaults.n_trees),
            max_depth: s.max_depth.unwrap_or(defaults.max_depth),
            max_leaves: s.max_leaves.unwrap_or(defaults.max_leaves),
            l2_leaf_penalty: s.l2_leaf_penalty.unwrap_or(defaults.l2_leaf_penalty),
            min_samples_leaf: s.min_samples_leaf.unwrap_or(defaults.min_samples_leaf),
        }
    }

    pub fn cp_config(&self) -> Result<CpConfig, UsageError> {
        let defaults = CpConfig::default();
        let s = &self.model.cp;
        let init = match s.init.as_deref() {
            None => defaults.init,
            Some("random_uniform") => FactorInit::RandomUniform,
            Some("hosvd") | Some("hosvd_like") => FactorInit::HosvdLike,
            Some(other) => {
                return Err(UsageError(format!(
                    "config: model.cp.init '{other}' is not one of random_uniform, hosvd_like"
                )))
            }
        };
        Ok(CpConfig {
            rank: s.rank.unwrap_or(defaults.rank),
            max_sweeps: s.max_sweeps.unwrap_or(defaults.max_sweeps),
            tolerance: s.tolerance.unwrap_or(defaults.tolerance),
            ridge: s.ridge.unwrap_or(defaults.ridge),
            init,
            seed: s.seed.unwrap_or(defaults.seed),
            standardize: s.standardize.unwrap_or(defaults.standardize),
        })
    }

    pub fn rpca_config(&self) -> RpcaConfig {
        let defaults = RpcaConfig::default();
        let s = &self.model.rpca;
        RpcaConfig {
            lambda_lowrank: s.lambda_lowrank.unwrap_or(defaults.lambda_lowrank),
            lambda_sparse: s.lambda_sparse.unwrap_or(defaults.lambda_sparse),
            mu_growth: s.mu_growth.unwrap_or(defaults.mu_growth),
            max_iters: s.max_iters.unwrap_or(defaults.max_iters),
            tolerance: s.tolerance.unwrap_or(defaults.tolerance),
            scale_input: s.scale_input.unwrap_or(defaults.scale_input),
            unfold_mode: s.unfold_mode.unwrap_or(defaults.unfold_mode),
        }
    }

    /// Completion method for `complete`; only tensor models apply.
    pub fn resolve_completion(&self, flag: Option<&str>) -> Result<CompletionMethod, UsageError> {
        match self.resolve_model(flag)? {
            ModelSpec::Cp(cfg) => Ok(CompletionMethod::Cp(cfg)),
            ModelSpec::Rpca(cfg) => Ok(CompletionMethod::Rpca(cfg)),
            other => Err(UsageError(format!(
                "model '{}' cannot complete a tensor; use cp or rpca",
                other.name()
            ))),
        }
    }
}

/// Parse a `START:END:STEP` confidence grid, e.g. `0.05:1.00:0.05`.
pub fn parse_levels(text: &str) -> Result<Vec<f64>, UsageError> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(UsageError(format!(
            "levels '{text}' must have the form START:END:STEP"
        )));
    }
    let parse = |s: &str| -> Result<f64, UsageError> {
        s.parse::<f64>()
            .map_err(|_| UsageError(format!("levels: '{s}' is not a number")))
    };
    let (start, end, step) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
    if !(step > 0.0 && start > 0.0 && end <= 1.0 + 1e-12 && start <= end) {
        return Err(UsageError(format!(
            "levels '{text}' must satisfy 0 < START <= END <= 1 with STEP > 0"
        )));
    }
    let count = ((end - start) / step + 0.5).floor() as usize + 1;
    let mut levels = Vec::with_capacity(count);
    for i in 0..count {
        let v = start + i as f64 * step;
        // accumulated binary noise (0.05 * 3 = 0.15000000000000002) would
        // leak into artifacts; snap to 12 decimals
        let v = (v * 1e12).round() / 1e12;
        levels.push(v.min(1.0));
    }
    Ok(levels)
}
