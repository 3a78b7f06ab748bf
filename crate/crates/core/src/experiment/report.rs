use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::commands::{ReferenceData, CONFIG_FILE, REFERENCE_FILE};
use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::metrics::{fit_exponential, fit_power_law, read_details_jsonl, spearman, MetricsDetail, Stage};

/// Metric trajectories of one run directory.
#[derive(Debug, Clone)]
pub struct RunData {
    pub label: String,
    pub config: ExperimentConfig,
    pub train: Vec<MetricsDetail>,
    pub prune: Vec<MetricsDetail>,
    pub reference: Option<ReferenceData>,
}

pub fn load_run(dir: &Path) -> Result<RunData> {
    let config = ExperimentConfig::from_file(&dir.join(CONFIG_FILE))?;
    let read = |sub: &str| -> Result<Vec<MetricsDetail>> {
        let p = dir.join(sub).join("metrics.jsonl");
        if p.exists() {
            read_details_jsonl(&p)
        } else {
            Ok(Vec::new())
        }
    };
    let train = read("train")?;
    let prune = read("prune")?;
    let ref_path = config.data_dir().join(REFERENCE_FILE);
    let reference = if ref_path.exists() {
        let text = std::fs::read_to_string(&ref_path)
            .map_err(|e| Error::io(format!("reading {}", ref_path.display()), e))?;
        serde_json::from_str(&text).ok()
    } else {
        None
    };
    Ok(RunData {
        label: dir
            .file_name()
            .map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned()),
        config,
        train,
        prune,
        reference,
    })
}

/// Spearman coefficient of each physical error measure against KL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpearmanSummary {
    pub n_points: usize,
    pub coefficients: BTreeMap<String, f64>,
}

/// Pairs (KL, measure) over every record where both are known.
pub fn spearman_summary<'a>(details: impl IntoIterator<Item = &'a MetricsDetail> + Clone) -> Result<SpearmanSummary> {
    let measures: [(&str, fn(&MetricsDetail) -> Option<f64>); 4] = [
        ("eroe", |d| d.record.eroe),
        ("mroe", |d| Some(d.record.mroe)),
        ("c_mse", |d| Some(d.record.c_mse_norm)),
        ("infidelity", |d| d.record.infidelity()),
    ];
    let mut coefficients = BTreeMap::new();
    let mut n_points = 0;
    for (name, get) in measures {
        let (kl, y): (Vec<f64>, Vec<f64>) = details
            .clone()
            .into_iter()
            .filter_map(|d| Some((d.record.kl?, get(d)?)))
            .unzip();
        n_points = n_points.max(kl.len());
        if kl.len() >= 2 {
            coefficients.insert(name.to_string(), spearman(&kl, &y)?);
        }
    }
    Ok(SpearmanSummary {
        n_points,
        coefficients,
    })
}

#[derive(Debug, Clone)]
pub struct ReportOutput {
    pub files: Vec<PathBuf>,
    pub spearman: SpearmanSummary,
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

struct Table {
    path: PathBuf,
    writer: csv::Writer<std::fs::File>,
}

impl Table {
    fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self> {
        let path = dir.join(name);
        let mut writer = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        writer.write_record(header).map_err(|e| csv_err(&path, e))?;
        Ok(Self { path, writer })
    }

    fn row(&mut self, fields: &[String]) -> Result<()> {
        self.writer.write_record(fields).map_err(|e| csv_err(&self.path, e))
    }

    fn close(mut self) -> Result<PathBuf> {
        self.writer
            .flush()
            .map_err(|e| Error::io(format!("writing {}", self.path.display()), e))?;
        Ok(self.path)
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(format!("writing {}", path.display()), source),
        other => Error::InvalidInput(format!("{}: {other:?}", path.display())),
    }
}

/// Aggregates run directories into plot-ready tables under `out_dir`.
pub fn cmd_report(run_dirs: &[PathBuf], out_dir: &Path) -> Result<ReportOutput> {
    if run_dirs.is_empty() {
        return Err(Error::Aggregation {
            message: "no run directories given".into(),
            offenders: Vec::new(),
        });
    }
    let mut runs = Vec::new();
    let mut offenders = Vec::new();
    for dir in run_dirs {
        match load_run(dir) {
            Ok(run) if run.train.is_empty() && run.prune.is_empty() => {
                offenders.push(format!("{} (no metrics)", dir.display()))
            }
            Ok(run) => runs.push(run),
            Err(e) => offenders.push(format!("{} ({e})", dir.display())),
        }
    }
    if let Some(first) = runs.first() {
        let n = first.config.n_sites;
        for r in &runs {
            if r.config.n_sites != n {
                offenders.push(format!("{} (n_sites {} differs from {n})", r.label, r.config.n_sites));
            }
        }
    }
    let mut seen = BTreeMap::new();
    for r in &runs {
        *seen.entry(r.label.clone()).or_insert(0) += 1;
    }
    if seen.values().any(|&c| c > 1) || !offenders.is_empty() {
        offenders.extend(seen.into_iter().filter(|(_, c)| *c > 1).map(|(l, _)| format!("{l} (duplicate run name)")));
        return Err(Error::Aggregation {
            message: "inconsistent or incomplete runs".into(),
            offenders,
        });
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(format!("creating {}", out_dir.display()), e))?;

    let mut files = Vec::new();
    let mut t = Table::create(
        out_dir,
        "errors_vs_pruned.csv",
        &["run", "field", "prune_iter", "frac_remaining", "frac_pruned", "kl", "infidelity", "eroe", "mroe", "c_mse", "connected"],
    )?;
    for r in &runs {
        for d in &r.prune {
            let rec = &d.record;
            t.row(&[
                r.label.clone(),
                r.config.field.to_string(),
                rec.prune_iter.to_string(),
                rec.frac_remaining.to_string(),
                (1.0 - rec.frac_remaining).to_string(),
                opt(rec.kl),
                opt(rec.infidelity()),
                opt(rec.eroe),
                rec.mroe.to_string(),
                rec.c_mse_norm.to_string(),
                rec.connected.to_string(),
            ])?;
        }
    }
    files.push(t.close()?);

    let mut t = Table::create(
        out_dir,
        "magnetization_histograms.csv",
        &["run", "stage", "epoch", "prune_iter", "m", "frequency"],
    )?;
    for r in &runs {
        let n = r.config.n_sites as f64;
        for d in r.train.last().into_iter().chain(&r.prune) {
            let total: usize = d.histogram.values().sum();
            for (&s, &c) in &d.histogram {
                t.row(&[
                    r.label.clone(),
                    stage_name(d.record.stage).into(),
                    d.record.epoch.to_string(),
                    d.record.prune_iter.to_string(),
                    (s as f64 / n).to_string(),
                    (c as f64 / total as f64).to_string(),
                ])?;
            }
        }
    }
    files.push(t.close()?);

    let mut t = Table::create(out_dir, "correlations.csv", &["run", "stage", "epoch", "prune_iter", "d", "c"])?;
    let mut fits = Table::create(
        out_dir,
        "correlation_fits.csv",
        &["run", "stage", "epoch", "prune_iter", "exp_rate", "exp_sse", "power_eta", "power_sse"],
    )?;
    for r in &runs {
        let reference = r.reference.iter().map(|re| ("reference", 0, 0, &re.correlations));
        let measured = r
            .train
            .last()
            .into_iter()
            .chain(&r.prune)
            .map(|d| (stage_name(d.record.stage), d.record.epoch, d.record.prune_iter, &d.correlations));
        for (stage, epoch, iter, profile) in reference.chain(measured) {
            for (dist, c) in profile.iter().enumerate() {
                t.row(&[r.label.clone(), stage.into(), epoch.to_string(), iter.to_string(), dist.to_string(), c.to_string()])?;
            }
            if let (Ok(e), Ok(p)) = (fit_exponential(profile), fit_power_law(profile)) {
                fits.row(&[
                    r.label.clone(),
                    stage.into(),
                    epoch.to_string(),
                    iter.to_string(),
                    e.rate.to_string(),
                    e.sse.to_string(),
                    p.rate.to_string(),
                    p.sse.to_string(),
                ])?;
            }
        }
    }
    files.push(t.close()?);
    files.push(fits.close()?);

    let mut t = Table::create(
        out_dir,
        "training_curves.csv",
        &["run", "arm", "field", "epoch", "kl", "infidelity", "eroe", "mroe", "c_mse"],
    )?;
    for r in &runs {
        for d in &r.train {
            let rec = &d.record;
            t.row(&[
                r.label.clone(),
                r.config.arm.name().into(),
                r.config.field.to_string(),
                rec.epoch.to_string(),
                opt(rec.kl),
                opt(rec.infidelity()),
                opt(rec.eroe),
                rec.mroe.to_string(),
                rec.c_mse_norm.to_string(),
            ])?;
        }
    }
    files.push(t.close()?);

    let mut t = Table::create(
        out_dir,
        "error_vs_kl.csv",
        &["run", "stage", "epoch", "prune_iter", "kl", "infidelity", "eroe", "mroe", "c_mse"],
    )?;
    for r in &runs {
        for d in r.train.iter().chain(&r.prune) {
            let rec = &d.record;
            t.row(&[
                r.label.clone(),
                stage_name(rec.stage).into(),
                rec.epoch.to_string(),
                rec.prune_iter.to_string(),
                opt(rec.kl),
                opt(rec.infidelity()),
                opt(rec.eroe),
                rec.mroe.to_string(),
                rec.c_mse_norm.to_string(),
            ])?;
        }
    }
    files.push(t.close()?);

    let all: Vec<&MetricsDetail> = runs.iter().flat_map(|r| r.train.iter().chain(&r.prune)).collect();
    let summary = spearman_summary(all.iter().copied())?;
    let sp = out_dir.join("spearman.json");
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(&sp, json + "\n").map_err(|e| Error::io(format!("writing {}", sp.display()), e))?;
    files.push(sp);
    Ok(ReportOutput {
        files,
        spearman: summary,
    })
}

fn stage_name(stage: Stage) -> &'static str {
    match stage {
        Stage::Train => "train",
        Stage::Prune => "prune",
    }
}
