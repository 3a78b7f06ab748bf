use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::EvalSampler;
use crate::pruning::{PruneRounding, PruneSchedule};
use crate::rbm::{SamplingConfig, TrainConfig};
use crate::tfim::TfimSpec;

/// Experiment arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    /// Dense RBM, no weights removed.
    Dense,
    /// Dense training followed by iterative pruning.
    Prune,
    /// Pruned mask applied to a fresh model with the same init seed.
    SpSs,
    /// Pruned mask applied to a fresh model with another init seed.
    SpOs,
    /// Constructed cluster mask.
    Sc,
    /// Cluster mask with a fraction of cluster entries scattered.
    Ablation,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::Dense => "dense",
            Arm::Prune => "prune",
            Arm::SpSs => "sp-ss",
            Arm::SpOs => "sp-os",
            Arm::Sc => "sc",
            Arm::Ablation => "ablation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Gibbs,
    Exact,
}

/// Flat, file-backed experiment description. Every field is a config key
/// and can be overridden from the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub arm: Arm,
    pub output_dir: PathBuf,
    /// Where `generate` writes and the other commands read data; defaults
    /// to `<output_dir>/data`.
    pub data_dir: Option<PathBuf>,
    /// Import this dataset instead of sampling the oracle.
    pub data_path: Option<PathBuf>,

    pub n_sites: usize,
    pub coupling: f64,
    pub field: f64,
    pub dataset_size: usize,
    pub data_seed: u64,

    /// Model init seed; also the base of derived training seeds.
    pub seed: u64,
    /// Init seed of the target model for `sp-os`.
    pub other_seed: Option<u64>,
    /// Number of replicate seeds (`seed`, `seed + 1`, ...).
    pub seeds: usize,
    pub n_hidden: Option<usize>,
    pub hidden_ratio: f64,
    pub learning_rate: f64,
    pub cd_k: usize,
    pub batch_size: usize,
    pub epochs: usize,

    pub prune_fraction: f64,
    pub prune_first_fraction: Option<f64>,
    pub prune_iterations: usize,
    pub finetune_epochs: usize,
    pub prune_rounding: PruneRounding,

    /// Prune run directory (or mask file) the `sp-*` arms take masks from.
    pub mask_source: Option<PathBuf>,
    pub mask_iteration: usize,
    pub cluster_size: usize,
    pub target_active: f64,
    pub mask_seed: u64,
    pub break_fraction: f64,

    /// Training epochs between metric records.
    pub metric_cadence: usize,
    pub eval_samples: usize,
    pub eval_seed: u64,
    pub eval_sampler: SamplerKind,
    pub burn_in: usize,
    pub thinning: usize,
    pub chains: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let schedule = PruneSchedule::default();
        let sampling = SamplingConfig::default();
        Self {
            arm: Arm::Dense,
            output_dir: PathBuf::from("runs/default"),
            data_dir: None,
            data_path: None,
            n_sites: 18,
            coupling: 1.0,
            field: 1.0,
            dataset_size: 100_000,
            data_seed: 7,
            seed: 0,
            other_seed: None,
            seeds: 1,
            n_hidden: None,
            hidden_ratio: train.hidden_ratio,
            learning_rate: train.learning_rate,
            cd_k: train.cd_k,
            batch_size: train.batch_size,
            epochs: train.epochs,
            prune_fraction: schedule.fraction,
            prune_first_fraction: schedule.first_fraction,
            prune_iterations: schedule.iterations,
            finetune_epochs: schedule.finetune_epochs,
            prune_rounding: schedule.rounding,
            mask_source: None,
            mask_iteration: 5,
            cluster_size: 3,
            target_active: 0.6,
            mask_seed: 0,
            break_fraction: 0.5,
            metric_cadence: 50,
            eval_samples: 100_000,
            eval_seed: 1,
            eval_sampler: SamplerKind::Gibbs,
            burn_in: sampling.burn_in,
            thinning: sampling.thinning,
            chains: sampling.chains,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Sets `key` (dashes and underscores are interchangeable) from a
    /// TOML-syntax value; bare words are taken as strings.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.replace('-', "_");
        let mut map = match serde_json::to_value(&*self).expect("config serializes") {
            serde_json::Value::Object(m) => m,
            _ => unreachable!("config is a struct"),
        };
        if !map.contains_key(&key) {
            return Err(Error::Config(format!("unknown config key {key:?}")));
        }
        let parsed = match format!("v = {value}").parse::<toml::Table>() {
            Ok(mut t) => serde_json::to_value(t.remove("v").expect("key present"))
                .map_err(|e| Error::Config(e.to_string()))?,
            Err(_) => serde_json::Value::String(value.to_string()),
        };
        // TOML has no null: the string "none" clears an optional key.
        let parsed = match parsed {
            serde_json::Value::String(s) if s == "none" => serde_json::Value::Null,
            other => other,
        };
        map.insert(key.clone(), parsed);
        *self = serde_json::from_value(serde_json::Value::Object(map))
            .map_err(|e| Error::Config(format!("{key} = {value}: {e}")))?;
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for item in overrides {
            let item = item.as_ref();
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.tfim_spec()?;
        self.train_config().validate()?;
        self.prune_schedule().validate()?;
        let bad = |m: String| Err(Error::Config(m));
        if self.data_path.is_none() && self.n_sites > crate::spin::MAX_INDEXED_SITES {
            return bad(format!(
                "n_sites = {} exceeds the exact oracle limit of {}; set data_path to import data",
                self.n_sites,
                crate::spin::MAX_INDEXED_SITES
            ));
        }
        if self.dataset_size == 0 || self.eval_samples == 0 {
            return bad("dataset_size and eval_samples must be >= 1".into());
        }
        if self.seeds == 0 || self.metric_cadence == 0 {
            return bad("seeds and metric_cadence must be >= 1".into());
        }
        if self.n_hidden == Some(0) {
            return bad("n_hidden must be >= 1".into());
        }
        match self.arm {
            Arm::SpSs | Arm::SpOs if self.mask_source.is_none() => {
                return bad(format!("arm {} requires mask_source", self.arm.name()));
            }
            _ => {}
        }
        if self.arm == Arm::SpOs {
            match self.other_seed {
                None => return bad("arm sp-os requires other_seed".into()),
                Some(s) if s == self.seed => return bad("other_seed must differ from seed".into()),
                _ => {}
            }
        }
        if matches!(self.arm, Arm::Sc | Arm::Ablation) {
            if self.cluster_size < 3 || self.cluster_size > self.n_sites {
                return bad(format!("cluster_size must lie in 3..={}", self.n_sites));
            }
            if !(self.target_active > 0.0 && self.target_active <= 1.0) {
                return bad("target_active must lie in (0, 1]".into());
            }
        }
        if !(0.0..=1.0).contains(&self.break_fraction) {
            return bad("break_fraction must lie in [0, 1]".into());
        }
        Ok(())
    }

    pub fn tfim_spec(&self) -> Result<TfimSpec> {
        TfimSpec::new(self.n_sites, self.coupling, self.field)
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
            .unwrap_or_else(|| self.train_config().n_hidden_for(self.n_sites))
    }

    /// Seed for the CD sampler and batch shuffling, distinct from the init
    /// stream.
    pub fn train_seed(&self) -> u64 {
        self.seed ^ 0x7472_6169_6e00_0000
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            cd_k: self.cd_k,
            batch_size: self.batch_size,
            epochs: self.epochs,
            hidden_ratio: self.hidden_ratio,
            seed: self.train_seed(),
        }
    }

    pub fn prune_schedule(&self) -> PruneSchedule {
        PruneSchedule {
            fraction: self.prune_fraction,
            iterations: self.prune_iterations,
            finetune_epochs: self.finetune_epochs,
            first_fraction: self.prune_first_fraction,
            rounding: self.prune_rounding,
        }
    }

    pub fn sampler(&self) -> EvalSampler {
        match self.eval_sampler {
            SamplerKind::Exact => EvalSampler::Exact,
            SamplerKind::Gibbs => EvalSampler::Gibbs(SamplingConfig {
                burn_in: self.burn_in,
                thinning: self.thinning,
                chains: self.chains,
            }),
        }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("data"))
    }

    /// Configs for each replicate seed. A single seed keeps `output_dir`;
    /// several get `seed_<s>` subdirectories sharing the parent's data.
    pub fn replicates(&self) -> Vec<ExperimentConfig> {
        if self.seeds <= 1 {
            return vec![self.clone()];
        }
        (0..self.seeds as u64)
            .map(|i| {
                let seed = self.seed + i;
                let mut c = self.clone();
                c.seed = seed;
                c.seeds = 1;
                c.data_dir = Some(self.data_dir());
                c.output_dir = self.output_dir.join(format!("seed_{seed}"));
                if let Some(other) = self.other_seed {
                    c.other_seed = Some(other + i);
                }
                c
            })
            .collect()
    }

    /// Prefixes a relative `output_dir` with `root`.
    pub fn rooted(mut self, root: &Path) -> Self {
        if self.output_dir.is_relative() {
            self.output_dir = root.join(&self.output_dir);
        }
        if let Some(d) = &self.data_dir {
            if d.is_relative() {
                self.data_dir = Some(root.join(d));
            }
        }
        self
    }
}
