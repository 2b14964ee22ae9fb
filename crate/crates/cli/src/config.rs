use std::fs;
use std::path::{Path, PathBuf};

use absnet_core::data::{SplitSpec, SynthKind};
use absnet_core::nn::Activation;
use absnet_core::stats::EstimatorKind;
use absnet_core::trainer::{TrainConfig, DEFAULT_BATCH_SIZE, DEFAULT_PATIENCE, DEFAULT_STAGE_EPOCH_CAP, DEFAULT_STAGE_LRS};
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

pub const DATA_DIR_ENV: &str = "ABSNET_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = "data/mnist";
pub const CONFIG_FILE: &str = "config.json";

/// Everything a run depends on. Written next to the run's outputs;
/// passing that file back with `--config` repeats the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub arch: String,
    pub activation: Activation,
    pub estimator: u8,
    pub seed: u64,
    pub data_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub deterministic: bool,

    pub stage_lrs: Vec<f64>,
    pub start_lr: Option<f64>,
    pub batch_size: usize,
    pub patience: usize,
    pub epoch_cap: usize,
    pub resamples: usize,
    pub train_fraction: f64,
    pub train_limit: Option<usize>,
    pub val_limit: Option<usize>,
    pub test_limit: Option<usize>,

    pub members: usize,

    pub checkpoint: Option<PathBuf>,
    /// `train`, `val` or `test`.
    pub eval_split: String,

    pub depths: Vec<usize>,
    pub probe_batch: usize,

    pub datasets: Vec<SynthKind>,
    pub nets: Vec<String>,
    pub epochs: usize,
    pub samples: usize,
    pub runs: usize,
    pub synth_lr: f64,
    pub synth_batch: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: String::new(),
            arch: "tiny".into(),
            activation: Activation::Abs,
            estimator: 1,
            seed: 0,
            data_dir: None,
            out_dir: PathBuf::from("runs"),
            deterministic: false,
            stage_lrs: DEFAULT_STAGE_LRS.to_vec(),
            start_lr: None,
            batch_size: DEFAULT_BATCH_SIZE,
            patience: DEFAULT_PATIENCE,
            epoch_cap: DEFAULT_STAGE_EPOCH_CAP,
            resamples: absnet_core::stats::DEFAULT_RESAMPLES,
            train_fraction: SplitSpec::default().train_fraction,
            train_limit: None,
            val_limit: None,
            test_limit: None,
            members: absnet_core::ensemble::DEFAULT_MEMBERS,
            checkpoint: None,
            eval_split: "test".into(),
            depths: Vec::new(),
            probe_batch: 32,
            datasets: SynthKind::ALL.to_vec(),
            nets: vec!["relu2x5".into(), "relu1x5".into(), "abs1x5".into()],
            epochs: 1000,
            samples: absnet_core::data::DEFAULT_SYNTH_SIZE,
            runs: 1,
            synth_lr: 1e-3,
            synth_batch: 32,
        }
    }
}

impl RunConfig {
    /// Defaults overlaid with the file at `path`, if any.
    pub fn load(command: &str, path: Option<&Path>) -> Result<Self, Failure> {
        let mut cfg = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?;
                serde_json::from_str::<RunConfig>(&text)
                    .map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?
            }
        };
        if !cfg.command.is_empty() && cfg.command != command {
            return Err(Failure::usage(format!("config file is for `{}`, not `{command}`", cfg.command)));
        }
        cfg.command = command.to_string();
        Ok(cfg)
    }

    pub fn estimator_kind(&self) -> Result<EstimatorKind, Failure> {
        EstimatorKind::from_code(self.estimator).map_err(Failure::from)
    }

    pub fn train_config(&self) -> Result<TrainConfig, Failure> {
        let tc = TrainConfig {
            stage_lrs: self.stage_lrs.clone(),
            patience: self.patience,
            batch_size: self.batch_size,
            estimator: self.estimator_kind()?,
            bootstrap_resamples: self.resamples,
            seed: self.seed,
            max_epochs_per_stage: self.epoch_cap,
            start_lr: self.start_lr,
            chance_level: None,
        };
        tc.stages()?;
        Ok(tc)
    }

    pub fn split(&self) -> SplitSpec {
        SplitSpec { train_fraction: self.train_fraction }
    }

    /// `data_dir` if set, else `$ABSNET_DATA_DIR`, else `./data/mnist`.
    pub fn resolve_data_dir(&mut self) -> PathBuf {
        let dir = self
            .data_dir
            .clone()
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR));
        self.data_dir = Some(dir.clone());
        dir
    }

    /// Creates the output directory and writes the resolved config into it.
    pub fn write(&self) -> Result<(), Failure> {
        fs::create_dir_all(&self.out_dir).map_err(|e| Failure::data(format!("{}: {e}", self.out_dir.display())))?;
        let path = self.out_dir.join(CONFIG_FILE);
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        fs::write(&path, text + "\n").map_err(|e| Failure::data(format!("{}: {e}", path.display())))
    }
}
