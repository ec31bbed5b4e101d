use std::fs;
use std::path::{Path, PathBuf};

use floorloc_core::experiment::{EmbedderStudySpec, ExperimentSpec};
use floorloc_core::synth::WorldSpec;
use floorloc_core::BinSpec;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

/// Files a command reads instead of generating them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Inputs {
    /// Occupancy graymap with its JSON sidecar.
    pub map: Option<PathBuf>,
    /// CSV with `x,y,theta` columns.
    pub poses: Option<PathBuf>,
    /// JSON lines, one simulated observation per query.
    pub observations: Option<PathBuf>,
    /// Trained linear crop embedder (JSON).
    pub embedder: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub truth: Option<PathBuf>,
}

/// Everything a run depends on. Omitted fields take their defaults, unknown
/// keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub world: WorldSpec,
    pub bins: BinSpec,
    pub experiment: ExperimentSpec,
    pub study: EmbedderStudySpec,
    pub inputs: Inputs,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| Failure::from_io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
    }

    /// `--seed` reseeds the world, the observation noise, mining and training.
    pub fn reseed(&mut self, seed: u64) {
        self.world.seed = seed;
        self.experiment.noise_seed = seed;
        self.study.mining.seed = seed;
        self.study.train.seed = seed;
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let e = &self.experiment;
        let s = &self.study;
        (|| {
            self.bins.validate()?;
            self.world.view_fan.validate()?;
            e.fan.validate()?;
            e.disambig.validate()?;
            e.noise.validate()?;
            s.perturb.validate()?;
            s.mining.validate()?;
            s.train.features.validate()
        })()
        .map_err(|err| Failure::config(err.to_string()))?;
        if !(e.sigma.is_finite() && e.sigma > 0.0) {
            return Err(Failure::config(format!("sigma must be positive, got {}", e.sigma)));
        }
        if !(e.crop.side_m.is_finite() && e.crop.side_m > 0.0) {
            return Err(Failure::config(format!("crop side must be positive, got {}", e.crop.side_m)));
        }
        Ok(())
    }

    pub fn echo(&self, out: &Path) -> Result<(), Failure> {
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        let path = out.join("config.json");
        fs::write(&path, text + "\n").map_err(|e| Failure::from_io(&path, e))
    }
}
