use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Hyperparameters, ModelState};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Complete chain position. Random streams are keyed by
/// `(seed, chain, iteration)`, so these fields fully determine the
/// continuation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub seed: u64,
    pub chain: u64,
    /// Completed sweeps.
    pub iteration: usize,
    pub hyperparameters: Hyperparameters,
    pub state: ModelState,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let cp: Checkpoint = serde_json::from_reader(file)?;
        if cp.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidConfiguration(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                cp.version
            )));
        }
        cp.state.validate()?;
        Ok(cp)
    }
}
