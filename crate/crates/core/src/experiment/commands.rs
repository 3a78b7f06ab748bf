use std::fs;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use serde::{Deserialize, Serialize};

use super::config::{Arm, ExperimentConfig};
use super::manifest::RunManifest;
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::metrics::{
    magnetizations, write_details_jsonl, write_records_csv, z2_occurrence_ratio, correlation_profile,
    Evaluator, MetricsDetail, MetricsRecord, ObservableEstimate, Stage,
};
use crate::pruning::{
    cluster_ablation, construct_cluster_mask, iterative_prune_finetune, read_mask, schedule_table,
    transplant_mask, write_mask, PruneMask, ScheduleRow,
};
use crate::rbm::{init_rbm, train, RbmModel};
use crate::spin::{import_dataset, Dataset, MAX_INDEXED_SITES};
use crate::tfim::{born_sample, exact_observables, groundstate, ExactObservables, Wavefunction, DEFAULT_TOL};

pub const DATASET_FILE: &str = "dataset.txt";
pub const PSI_FILE: &str = "psi.bin";
pub const REFERENCE_FILE: &str = "reference.json";
pub const CONFIG_FILE: &str = "config.toml";

/// Reference observables written by `generate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceData {
    pub n_sites: usize,
    pub coupling: f64,
    pub field: f64,
    /// True when the data were sampled from the exact ground state.
    pub oracle: bool,
    /// Exact ground energy; absent for imported data.
    pub energy: Option<f64>,
    pub m_mean: f64,
    pub m_abs_mean: f64,
    pub correlations: Vec<f64>,
    pub dataset_size: usize,
    pub data_seed: Option<u64>,
    pub data_m_mean: f64,
    pub data_m_abs_mean: f64,
    pub data_correlations: Vec<f64>,
    pub data_z2_ratio: Option<ObservableEstimate>,
}

impl ReferenceData {
    pub fn observables(&self) -> ExactObservables {
        ExactObservables {
            energy: self.energy.unwrap_or(f64::NAN),
            m_mean: self.m_mean,
            m_abs_mean: self.m_abs_mean,
            correlations: self.correlations.clone(),
        }
    }
}

/// Dataset, reference and (for oracle data) the exact wavefunction.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub reference: ReferenceData,
    pub dataset: Dataset,
    pub psi: Option<Wavefunction>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, json + "\n").map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))
}

/// Manifest bookkeeping for one command over one run directory.
struct RunLog {
    dir: PathBuf,
    manifest: RunManifest,
    started: SystemTime,
    command: &'static str,
}

impl RunLog {
    fn open(dir: &Path, cfg: &ExperimentConfig, command: &'static str) -> Result<Self> {
        create_dir(dir)?;
        let echo = serde_json::to_value(cfg).expect("config serializes");
        let mut log = Self {
            dir: dir.to_path_buf(),
            manifest: RunManifest::load_or_new(dir, echo)?,
            started: SystemTime::now(),
            command,
        };
        let cfg_path = dir.join(CONFIG_FILE);
        fs::write(&cfg_path, cfg.to_toml()).map_err(|e| Error::io(format!("writing {}", cfg_path.display()), e))?;
        log.record(&cfg_path)?;
        Ok(log)
    }

    fn record(&mut self, path: &Path) -> Result<()> {
        self.manifest.record_file(&self.dir, path)
    }

    fn finish(mut self) -> Result<()> {
        self.manifest.record_command(self.command, self.started);
        self.manifest.save(&self.dir)?;
        Ok(())
    }
}

/// Samples the oracle (or imports data) and computes reference observables.
pub fn build_data(cfg: &ExperimentConfig) -> Result<LoadedData> {
    cfg.validate()?;
    let spec = cfg.tfim_spec()?;
    let (dataset, psi, exact) = match &cfg.data_path {
        Some(path) => (import_dataset(path, cfg.n_sites)?, None, None),
        None => {
            let gs = groundstate(&spec, DEFAULT_TOL)?;
            let data = born_sample(&gs.psi, cfg.dataset_size, cfg.data_seed)?;
            let exact = exact_observables(&spec, &gs.psi)?;
            (data, Some(gs.psi), Some(exact))
        }
    };
    let mags = magnetizations(&dataset)?;
    let profile = correlation_profile(&dataset)?;
    let z2 = z2_occurrence_ratio(&dataset).ok();
    let reference = match exact {
        Some(ex) => ReferenceData {
            n_sites: cfg.n_sites,
            coupling: cfg.coupling,
            field: cfg.field,
            oracle: true,
            energy: Some(ex.energy),
            m_mean: ex.m_mean,
            m_abs_mean: ex.m_abs_mean,
            correlations: ex.correlations,
            dataset_size: dataset.len(),
            data_seed: Some(cfg.data_seed),
            data_m_mean: mags.m.mean,
            data_m_abs_mean: mags.m_abs.mean,
            data_correlations: profile.values.clone(),
            data_z2_ratio: z2,
        },
        // Without an oracle the data statistics are the reference.
        None => ReferenceData {
            n_sites: cfg.n_sites,
            coupling: cfg.coupling,
            field: cfg.field,
            oracle: false,
            energy: None,
            m_mean: mags.m.mean,
            m_abs_mean: mags.m_abs.mean,
            correlations: profile.values.clone(),
            dataset_size: dataset.len(),
            data_seed: None,
            data_m_mean: mags.m.mean,
            data_m_abs_mean: mags.m_abs.mean,
            data_correlations: profile.values,
            data_z2_ratio: z2,
        },
    };
    Ok(LoadedData {
        reference,
        dataset,
        psi,
    })
}

#[derive(Debug, Clone)]
pub struct GenerateOutput {
    pub data_dir: PathBuf,
    pub reference: ReferenceData,
}

/// Writes the dataset, wavefunction cache and reference observables.
pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<GenerateOutput> {
    let data = build_data(cfg)?;
    let dir = cfg.data_dir();
    let mut log = RunLog::open(&dir, cfg, "generate")?;
    let ds = dir.join(DATASET_FILE);
    data.dataset.write_text(&ds)?;
    log.record(&ds)?;
    if let Some(psi) = &data.psi {
        let p = dir.join(PSI_FILE);
        psi.write_cache(&p)?;
        log.record(&p)?;
    }
    let r = dir.join(REFERENCE_FILE);
    write_json(&r, &data.reference)?;
    log.record(&r)?;
    log.finish()?;
    Ok(GenerateOutput {
        data_dir: dir,
        reference: data.reference,
    })
}

/// Reads what `generate` wrote into the config's data directory.
pub fn load_data(cfg: &ExperimentConfig) -> Result<LoadedData> {
    let dir = cfg.data_dir();
    let r = dir.join(REFERENCE_FILE);
    if !r.exists() {
        return Err(Error::io(
            format!("no generated data in {} (run `generate` first)", dir.display()),
            std::io::Error::from(std::io::ErrorKind::NotFound),
        ));
    }
    let reference: ReferenceData = read_json(&r)?;
    if reference.n_sites != cfg.n_sites || reference.field != cfg.field || reference.coupling != cfg.coupling {
        return Err(Error::Config(format!(
            "data in {} were generated for N={}, J={}, h={}",
            dir.display(),
            reference.n_sites,
            reference.coupling,
            reference.field
        )));
    }
    let dataset = import_dataset(&dir.join(DATASET_FILE), cfg.n_sites)?;
    let p = dir.join(PSI_FILE);
    let psi = if p.exists() { Some(Wavefunction::read_cache(&p)?) } else { None };
    Ok(LoadedData {
        reference,
        dataset,
        psi,
    })
}

pub fn evaluator(cfg: &ExperimentConfig, data: &LoadedData) -> Result<Evaluator> {
    let q = if cfg.n_sites <= MAX_INDEXED_SITES {
        Some(data.dataset.empirical_distribution()?)
    } else {
        None
    };
    Ok(Evaluator {
        spec: cfg.tfim_spec()?,
        psi: data.psi.clone(),
        reference: data.reference.observables(),
        q,
        n_samples: cfg.eval_samples,
        sampler: cfg.sampler(),
        seed: cfg.eval_seed,
    })
}

/// Path of the mask a `sp-*` arm reads: a mask file, or the given
/// iteration inside a prune run directory.
pub fn mask_source_path(cfg: &ExperimentConfig) -> Option<PathBuf> {
    cfg.mask_source.as_ref().map(|src| {
        if src.is_dir() {
            src.join("prune").join("masks").join(mask_file_name(cfg.mask_iteration))
        } else {
            src.clone()
        }
    })
}

pub fn mask_file_name(iteration: usize) -> String {
    format!("iter_{iteration:02}.txt")
}

/// Initial model and mask for the configured arm.
pub fn initial_model(cfg: &ExperimentConfig) -> Result<(RbmModel, Option<PruneMask>)> {
    let (nv, nh) = (cfg.n_sites, cfg.n_hidden());
    let fresh = init_rbm(nv, nh, cfg.seed)?;
    let loaded_mask = || -> Result<PruneMask> {
        let path = mask_source_path(cfg).ok_or_else(|| Error::Config("mask_source is not set".into()))?;
        Ok(read_mask(&path)?.0)
    };
    match cfg.arm {
        Arm::Dense | Arm::Prune => Ok((fresh, None)),
        Arm::SpSs => {
            let mask = loaded_mask()?;
            if mask.seed != Some(cfg.seed) {
                return Err(Error::Config(format!(
                    "sp-ss needs a mask derived from init seed {}, mask records {:?}",
                    cfg.seed, mask.seed
                )));
            }
            let (model, mask) = transplant_mask(&mask, &fresh)?;
            Ok((model, Some(mask)))
        }
        Arm::SpOs => {
            let mask = loaded_mask()?;
            let other = cfg.other_seed.ok_or_else(|| Error::Config("sp-os requires other_seed".into()))?;
            let (model, mask) = transplant_mask(&mask, &init_rbm(nv, nh, other)?)?;
            Ok((model, Some(mask)))
        }
        Arm::Sc | Arm::Ablation => {
            let mut mask = if cfg.arm == Arm::Ablation && cfg.mask_source.is_some() {
                loaded_mask()?
            } else {
                construct_cluster_mask(nv, nh, cfg.cluster_size, cfg.target_active, cfg.mask_seed)?
            };
            if cfg.arm == Arm::Ablation {
                mask = cluster_ablation(&mask, cfg.break_fraction, cfg.mask_seed)?;
            }
            let mut model = fresh;
            model.apply_mask(&mask)?;
            Ok((model, Some(mask)))
        }
    }
}

/// Trains in memory, evaluating every `metric_cadence` epochs and at the
/// final epoch.
pub fn run_training(
    cfg: &ExperimentConfig,
    data: &LoadedData,
    model: &mut RbmModel,
    mask: Option<&PruneMask>,
) -> Result<Vec<MetricsDetail>> {
    let eval = evaluator(cfg, data)?;
    let train_cfg = cfg.train_config();
    let mut details = Vec::new();
    let cadence = cfg.metric_cadence;
    let last = train_cfg.epochs;
    train(model, &data.dataset, &train_cfg, mask, &mut |epoch: usize, m: &RbmModel| {
        if epoch.is_multiple_of(cadence) || epoch == last {
            details.push(eval.evaluate(m, mask, Stage::Train, epoch, 0)?);
        }
        Ok(())
    })?;
    Ok(details)
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: RbmModel,
    pub mask: Option<PruneMask>,
    pub records: Vec<MetricsRecord>,
    pub checkpoint: PathBuf,
}

/// Trains the configured arm and writes `train/` in the run directory.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let (mut model, mask) = initial_model(cfg)?;
    let details = run_training(cfg, &data, &mut model, mask.as_ref())?;

    let mut log = RunLog::open(&cfg.output_dir, cfg, "train")?;
    let dir = cfg.output_dir.join("train");
    create_dir(&dir)?;
    let records: Vec<MetricsRecord> = details.iter().map(|d| d.record.clone()).collect();
    let csv = dir.join("metrics.csv");
    write_records_csv(&csv, &records)?;
    let jsonl = dir.join("metrics.jsonl");
    write_details_jsonl(&jsonl, &details)?;
    let ckpt = dir.join("model.ckpt");
    Checkpoint {
        model: model.clone(),
        mask: mask.clone(),
        config: serde_json::to_value(cfg).expect("config serializes"),
    }
    .write(&ckpt)?;
    for p in [&csv, &jsonl, &ckpt] {
        log.record(p)?;
    }
    if let Some(m) = &mask {
        let mp = dir.join("mask.txt");
        write_mask(&mp, m, mask_params(cfg))?;
        log.record(&mp)?;
        log.record(&crate::pruning::sidecar_path(&mp))?;
    }
    log.finish()?;
    Ok(TrainOutput {
        model,
        mask,
        records,
        checkpoint: ckpt,
    })
}

fn mask_params(cfg: &ExperimentConfig) -> serde_json::Value {
    serde_json::json!({
        "arm": cfg.arm.name(),
        "cluster_size": cfg.cluster_size,
        "target_active": cfg.target_active,
        "mask_seed": cfg.mask_seed,
        "break_fraction": cfg.break_fraction,
        "mask_iteration": cfg.mask_iteration,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneSummary {
    pub first_disconnected: Option<usize>,
    pub schedule: Vec<ScheduleRow>,
    pub final_active: usize,
}

#[derive(Debug, Clone)]
pub struct PruneRun {
    pub details: Vec<MetricsDetail>,
    pub masks: Vec<PruneMask>,
    pub models: Vec<RbmModel>,
    pub first_disconnected: Option<usize>,
}

/// Iterative prune + fine-tune in memory. Element `k` of each vector
/// belongs to iteration `k`, with 0 the unpruned input model.
pub fn run_pruning(cfg: &ExperimentConfig, data: &LoadedData, model: &mut RbmModel) -> Result<PruneRun> {
    let eval = evaluator(cfg, data)?;
    let schedule = cfg.prune_schedule();
    let train_cfg = cfg.train_config();
    let mut details = Vec::new();
    let mut masks = Vec::new();
    let mut models = Vec::new();
    let outcome = iterative_prune_finetune(
        model,
        &data.dataset,
        &schedule,
        &train_cfg,
        &mut |iteration: usize, m: &RbmModel, mask: &PruneMask, _connected: bool| {
            let epoch = if iteration == 0 { 0 } else { schedule.finetune_epochs };
            details.push(eval.evaluate(m, Some(mask), Stage::Prune, epoch, iteration)?);
            masks.push(mask.clone());
            models.push(m.clone());
            Ok(())
        },
    )?;
    Ok(PruneRun {
        details,
        masks,
        models,
        first_disconnected: outcome.first_disconnected,
    })
}

#[derive(Debug, Clone)]
pub struct PruneOutput {
    pub records: Vec<MetricsRecord>,
    pub summary: PruneSummary,
}

/// Prunes the trained model in `train/model.ckpt` and writes `prune/`.
pub fn cmd_prune(cfg: &ExperimentConfig) -> Result<PruneOutput> {
    cfg.validate()?;
    let ckpt_path = cfg.output_dir.join("train").join("model.ckpt");
    if !ckpt_path.exists() {
        return Err(Error::io(
            format!("no trained checkpoint at {} (run `train` first)", ckpt_path.display()),
            std::io::Error::from(std::io::ErrorKind::NotFound),
        ));
    }
    let ckpt = Checkpoint::read(&ckpt_path)?;
    if ckpt.mask.as_ref().is_some_and(|m| m.active_count() < m.total()) {
        return Err(Error::InvalidState("pruning expects a dense trained checkpoint".into()));
    }
    let data = load_data(cfg)?;
    let mut model = ckpt.model;
    let run = run_pruning(cfg, &data, &mut model)?;

    let mut log = RunLog::open(&cfg.output_dir, cfg, "prune")?;
    let dir = cfg.output_dir.join("prune");
    let mask_dir = dir.join("masks");
    let ckpt_dir = dir.join("checkpoints");
    create_dir(&mask_dir)?;
    create_dir(&ckpt_dir)?;
    let echo = serde_json::to_value(cfg).expect("config serializes");
    for (k, (m, mask)) in run.models.iter().zip(&run.masks).enumerate() {
        let mp = mask_dir.join(mask_file_name(k));
        write_mask(&mp, mask, serde_json::json!({"iteration": k, "fraction": cfg.prune_fraction}))?;
        log.record(&mp)?;
        log.record(&crate::pruning::sidecar_path(&mp))?;
        let cp = ckpt_dir.join(format!("iter_{k:02}.ckpt"));
        Checkpoint {
            model: m.clone(),
            mask: Some(mask.clone()),
            config: echo.clone(),
        }
        .write(&cp)?;
        log.record(&cp)?;
    }
    let records: Vec<MetricsRecord> = run.details.iter().map(|d| d.record.clone()).collect();
    let csv = dir.join("metrics.csv");
    write_records_csv(&csv, &records)?;
    let jsonl = dir.join("metrics.jsonl");
    write_details_jsonl(&jsonl, &run.details)?;
    let summary = PruneSummary {
        first_disconnected: run.first_disconnected,
        schedule: schedule_table(&cfg.prune_schedule(), cfg.n_sites * cfg.n_hidden())?,
        final_active: run.masks.last().map_or(0, |m| m.active_count()),
    };
    let sp = dir.join("summary.json");
    write_json(&sp, &summary)?;
    for p in [&csv, &jsonl, &sp] {
        log.record(p)?;
    }
    log.finish()?;
    Ok(PruneOutput { records, summary })
}

/// Re-checks every checksum in a run directory's manifest.
pub fn cmd_validate(dir: &Path) -> Result<usize> {
    RunManifest::load(dir)?.validate(dir)
}
