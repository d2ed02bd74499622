//! Run configuration: built-in defaults, overridden by a TOML file, overridden
//! by command-line flags.

use std::path::Path;

use serde::{Deserialize, Serialize};

use handstate::association::ParseThresholds;
use handstate::detector::TrainConfig;
use handstate::grasp_mining::{FilterParams, GreedyIouTracker};
use handstate::mesh_quality::MlpTrainConfig;

use crate::CliError;

/// Every section is optional in the file; missing keys keep their defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub detect: DetectConfig,
    pub render: RenderConfig,
    pub evaluate: EvaluateConfig,
    pub stats: StatsConfig,
    pub train: TrainConfig,
    pub mesh_score: MeshScoreConfig,
    pub mine: MineConfig,
    pub codebook: CodebookConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    pub thresholds: ParseThresholds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub thickness: u32,
    /// Integer upscale of the bitmap label font.
    pub font_scale: u32,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            thickness: 2,
            font_scale: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub criteria: Vec<String>,
    /// Edges of hand-size bins (hand diagonal / image diagonal); empty for none.
    pub size_bins: Vec<f64>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            criteria: ["HAND", "OBJ", "H_SIDE", "H_STATE", "H_O", "ALL"].map(String::from).to_vec(),
            size_bins: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    pub bins: usize,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self { bins: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshScoreConfig {
    pub top: f64,
    pub bottom: f64,
    pub mlp: MlpTrainConfig,
}

impl Default for MeshScoreConfig {
    fn default() -> Self {
        Self {
            top: 0.3,
            bottom: 0.3,
            mlp: MlpTrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MineConfig {
    pub tracker: GreedyIouTracker,
    pub filters: FilterParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodebookConfig {
    pub k: usize,
    /// Use every scored record, not only the positively labeled ones.
    pub all_records: bool,
}

impl Default for CodebookConfig {
    fn default() -> Self {
        Self {
            k: 10,
            all_records: false,
        }
    }
}

/// Overwrites `slot` when a flag was given.
pub fn apply<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg: RunConfig = toml::from_str(
            "seed = 4\n[codebook]\nk = 3\n[mine.filters]\nmove_thresh = 0.5\n[train]\nepochs = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(4));
        assert_eq!(cfg.codebook.k, 3);
        assert!(!cfg.codebook.all_records);
        assert_eq!(cfg.mine.filters.move_thresh, 0.5);
        assert_eq!(cfg.mine.filters.overlap_thresh, 0.1);
        assert_eq!(cfg.train.epochs, 2);
        assert_eq!(cfg.train.learning_rate, TrainConfig::default().learning_rate);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[codebook]\nkk = 3\n").is_err());
    }
}
