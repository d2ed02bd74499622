use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DetectorModel, ModelConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::nn::{Parameterized, TensorRecord};

const FORMAT: &str = "handstate-detector";
const VERSION: u32 = 1;

/// On-disk detector: architecture config, optional training config echo and
/// bit-exact weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn from_model(model: &DetectorModel, train: Option<&TrainConfig>) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            model: model.config.clone(),
            train: train.cloned(),
            tensors: model.to_tensors(),
        }
    }

    pub fn into_model(self) -> Result<DetectorModel> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        let mut model = DetectorModel::new(self.model, 0);
        model.load_tensors(&self.tensors)?;
        Ok(model)
    }
}

pub fn save_checkpoint(
    path: &Path,
    model: &DetectorModel,
    train: Option<&TrainConfig>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, &Checkpoint::from_model(model, train))
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<DetectorModel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    ckpt.into_model()
}
