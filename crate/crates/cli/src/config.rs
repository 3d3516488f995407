//! Configuration resolution: defaults, then a flat `key=value` file, then
//! `DIFFPOOL_*` environment variables, then command-line flags.
//!
//! Keys mirror the model and training hyperparameter names:
//!
//! ```text
//! hidden_dim, gnn_layers_per_block, num_diffpool_layers, cluster_ratio,
//! gnn_variant (gcn | graphsage_mean), use_bn, use_l2_norm, use_link_pred,
//! use_entropy, readout (concat_all_levels | final_only),
//! assignment_mode (learned | deterministic), learning_rate, max_epochs,
//! clip_norm, early_stop_window, patience, folds, seed, w_lp, w_e, workers
//! ```
//!
//! When `cluster_ratio` is not set explicitly it defaults to 0.25, or 0.10
//! for single-pooling-level models.

use std::collections::BTreeMap;
use std::path::Path;

use diffpool_core::gnn::GnnVariant;
use diffpool_core::model::{AssignmentMode, ModelConfig, Readout};
use diffpool_core::train::TrainConfig;

use crate::args::Args;
use crate::exit::{CliError, Result};

pub const ENV_PREFIX: &str = "DIFFPOOL_";

pub const CONFIG_KEYS: &[&str] = &[
    "hidden_dim",
    "gnn_layers_per_block",
    "num_diffpool_layers",
    "cluster_ratio",
    "gnn_variant",
    "use_bn",
    "use_l2_norm",
    "use_link_pred",
    "use_entropy",
    "readout",
    "assignment_mode",
    "learning_rate",
    "max_epochs",
    "clip_norm",
    "early_stop_window",
    "patience",
    "folds",
    "seed",
    "w_lp",
    "w_e",
    "workers",
];

/// Flags handled by the commands themselves rather than the config table.
const COMMAND_FLAGS: &[&str] = &[
    "dataset",
    "config",
    "out",
    "checkpoint",
    "graphs",
    "format",
    "kind",
    "num_graphs",
];

/// Fully resolved run configuration, still independent of the dataset
/// (class count and node budget are filled in when the data is known).
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub hidden_dim: usize,
    pub gnn_layers_per_block: usize,
    pub num_diffpool_layers: usize,
    pub cluster_ratio: Option<f64>,
    pub gnn_variant: GnnVariant,
    pub use_bn: bool,
    pub use_l2_norm: bool,
    pub use_link_pred: bool,
    pub use_entropy: bool,
    pub readout: Readout,
    pub assignment_mode: AssignmentMode,
    pub train: TrainConfig,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            hidden_dim: 64,
            gnn_layers_per_block: 2,
            num_diffpool_layers: 2,
            cluster_ratio: None,
            gnn_variant: GnnVariant::GraphsageMean,
            use_bn: true,
            use_l2_norm: true,
            use_link_pred: true,
            use_entropy: true,
            readout: Readout::ConcatAllLevels,
            assignment_mode: AssignmentMode::Learned,
            train: TrainConfig::default(),
            workers: 0,
        }
    }
}

impl RunConfig {
    pub fn effective_cluster_ratio(&self) -> f64 {
        self.cluster_ratio
            .unwrap_or(if self.num_diffpool_layers == 1 { 0.10 } else { 0.25 })
    }

    /// Materializes the architecture config once the dataset is known.
    pub fn model_config(&self, num_classes: usize, max_nodes: usize) -> ModelConfig {
        let mut mc = ModelConfig::new(num_classes, max_nodes);
        mc.hidden_dim = self.hidden_dim;
        mc.gnn_layers_per_block = self.gnn_layers_per_block;
        mc.num_diffpool_layers = self.num_diffpool_layers;
        mc.cluster_ratio = self.effective_cluster_ratio();
        mc.gnn_variant = self.gnn_variant;
        mc.use_bn = self.use_bn;
        mc.use_l2_norm = self.use_l2_norm;
        mc.use_link_pred = self.use_link_pred;
        mc.use_entropy = self.use_entropy;
        mc.readout = self.readout;
        mc.assignment_mode = self.assignment_mode;
        mc
    }

    pub fn effective_workers(&self) -> usize {
        if self.workers == 0 {
            std::thread::available_parallelism().map_or(1, usize::from)
        } else {
            self.workers
        }
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |key: &str, value: &str| {
            CliError::BadConfig(format!("bad value {value:?} for config key {key:?}"))
        };
        match key {
            "hidden_dim" => self.hidden_dim = parse_num(key, value)?,
            "gnn_layers_per_block" => self.gnn_layers_per_block = parse_num(key, value)?,
            "num_diffpool_layers" => self.num_diffpool_layers = parse_num(key, value)?,
            "cluster_ratio" => self.cluster_ratio = Some(parse_num(key, value)?),
            "gnn_variant" => {
                self.gnn_variant = match value {
                    "gcn" => GnnVariant::Gcn,
                    "graphsage_mean" => GnnVariant::GraphsageMean,
                    _ => return Err(bad(key, value)),
                }
            }
            "use_bn" => self.use_bn = parse_bool(key, value)?,
            "use_l2_norm" => self.use_l2_norm = parse_bool(key, value)?,
            "use_link_pred" => self.use_link_pred = parse_bool(key, value)?,
            "use_entropy" => self.use_entropy = parse_bool(key, value)?,
            "readout" => {
                self.readout = match value {
                    "concat_all_levels" => Readout::ConcatAllLevels,
                    "final_only" => Readout::FinalOnly,
                    _ => return Err(bad(key, value)),
                }
            }
            "assignment_mode" => {
                self.assignment_mode = match value {
                    "learned" => AssignmentMode::Learned,
                    "deterministic" => AssignmentMode::Deterministic,
                    _ => return Err(bad(key, value)),
                }
            }
            "learning_rate" => self.train.learning_rate = parse_num(key, value)?,
            "max_epochs" => self.train.max_epochs = parse_num(key, value)?,
            "clip_norm" => self.train.clip_norm = parse_num(key, value)?,
            "early_stop_window" => self.train.early_stop_window = parse_num(key, value)?,
            "patience" => self.train.patience = parse_num(key, value)?,
            "folds" => self.train.folds = parse_num(key, value)?,
            "seed" => self.train.seed = parse_num(key, value)?,
            "w_lp" => self.train.w_lp = parse_num(key, value)?,
            "w_e" => self.train.w_e = parse_num(key, value)?,
            "workers" => self.workers = parse_num(key, value)?,
            _ => {
                return Err(CliError::BadConfig(format!(
                    "unknown config key {key:?}"
                )))
            }
        }
        Ok(())
    }

    /// Serializes every resolved key for manifests and checkpoints.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let variant = match self.gnn_variant {
            GnnVariant::Gcn => "gcn",
            GnnVariant::GraphsageMean => "graphsage_mean",
        };
        let readout = match self.readout {
            Readout::ConcatAllLevels => "concat_all_levels",
            Readout::FinalOnly => "final_only",
        };
        let mode = match self.assignment_mode {
            AssignmentMode::Learned => "learned",
            AssignmentMode::Deterministic => "deterministic",
        };
        vec![
            ("hidden_dim", self.hidden_dim.to_string()),
            ("gnn_layers_per_block", self.gnn_layers_per_block.to_string()),
            ("num_diffpool_layers", self.num_diffpool_layers.to_string()),
            ("cluster_ratio", format!("{}", self.effective_cluster_ratio())),
            ("gnn_variant", variant.to_string()),
            ("use_bn", self.use_bn.to_string()),
            ("use_l2_norm", self.use_l2_norm.to_string()),
            ("use_link_pred", self.use_link_pred.to_string()),
            ("use_entropy", self.use_entropy.to_string()),
            ("readout", readout.to_string()),
            ("assignment_mode", mode.to_string()),
            ("learning_rate", format!("{}", self.train.learning_rate)),
            ("max_epochs", self.train.max_epochs.to_string()),
            ("clip_norm", format!("{}", self.train.clip_norm)),
            ("early_stop_window", self.train.early_stop_window.to_string()),
            ("patience", self.train.patience.to_string()),
            ("folds", self.train.folds.to_string()),
            ("seed", self.train.seed.to_string()),
            ("w_lp", format!("{}", self.train.w_lp)),
            ("w_e", format!("{}", self.train.w_e)),
            ("workers", self.workers.to_string()),
        ]
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| {
        CliError::BadConfig(format!("bad value {value:?} for config key {key:?}"))
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(CliError::BadConfig(format!(
            "bad value {value:?} for config key {key:?}"
        ))),
    }
}

/// Parses a flat `key=value` config file. Blank lines and `#` comments are
/// skipped.
pub fn parse_config_file(text: &str, origin: &Path) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::BadConfig(format!(
                "{}:{}: expected key=value, got {line:?}",
                origin.display(),
                lineno + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Resolves the configuration with precedence
/// defaults < file < environment < flags.
pub fn resolve(args: &Args) -> Result<RunConfig> {
    let mut config = RunConfig::default();

    if let Some(path) = args.get("config") {
        let path = Path::new(path);
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::BadConfig(format!("cannot read config file {}: {e}", path.display()))
        })?;
        for (key, value) in parse_config_file(&text, path)? {
            config.set(&key, &value)?;
        }
    }

    for (name, value) in std::env::vars() {
        if let Some(stripped) = name.strip_prefix(ENV_PREFIX) {
            let key = stripped.to_lowercase();
            if CONFIG_KEYS.contains(&key.as_str()) {
                config.set(&key, &value)?;
            }
        }
    }

    for (key, value) in args.values() {
        if COMMAND_FLAGS.contains(&key) {
            continue;
        }
        config.set(key, value)?;
    }

    // Variant switches.
    if args.has_flag("no_link_pred") {
        config.use_link_pred = false;
    }
    if args.has_flag("no_entropy") {
        config.use_entropy = false;
    }
    if args.has_flag("det_pool") {
        config.assignment_mode = AssignmentMode::Deterministic;
    }
    if args.has_flag("flat_baseline") {
        config.num_diffpool_layers = 0;
    }
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_rejected() {
        let mut config = RunConfig::default();
        let err = config.set("hidden_dims", "64").unwrap_err();
        assert!(err.to_string().contains("hidden_dims"));
    }

    #[test]
    fn ratio_defaults_by_pool_count() {
        let mut config = RunConfig::default();
        assert_eq!(config.effective_cluster_ratio(), 0.25);
        config.num_diffpool_layers = 1;
        assert_eq!(config.effective_cluster_ratio(), 0.10);
        config.set("cluster_ratio", "0.4").unwrap();
        assert_eq!(config.effective_cluster_ratio(), 0.4);
    }

    #[test]
    fn config_file_parsing() {
        let text = "# comment\nhidden_dim = 32\n\nseed=9\n";
        let map = parse_config_file(text, Path::new("test.cfg")).unwrap();
        assert_eq!(map.get("hidden_dim").unwrap(), "32");
        assert_eq!(map.get("seed").unwrap(), "9");
    }

    #[test]
    fn flag_overrides_apply() {
        let argv: Vec<String> = ["--hidden-dim", "16", "--flat-baseline", "--w-lp", "5.0"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let args = Args::parse(&argv).unwrap();
        let config = resolve(&args).unwrap();
        assert_eq!(config.hidden_dim, 16);
        assert_eq!(config.num_diffpool_layers, 0);
        assert_eq!(config.train.w_lp, 5.0);
    }
}
