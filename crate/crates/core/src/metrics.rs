//! Model-quality measures: exact KL divergence and fidelity, sample-based
//! observables with relative errors, correlation profiles and Z2 diagnostics.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pruning::PruneMask;
use crate::rbm::{sample_model, softplus, ExactDistribution, RbmModel, SamplingConfig};
use crate::spin::{spin_of, spin_sum, Dataset};
use crate::tfim::{ExactObservables, TfimSpec, Wavefunction};

/// 99% two-sided normal quantile used for confidence halfwidths.
pub const CONFIDENCE_C: f64 = 2.576;

/// 0-based site the correlation profile is measured from (the lattice
/// midpoint, site N/2 counting from 1).
pub fn correlation_reference_site(n_sites: usize) -> usize {
    (n_sites / 2).saturating_sub(1)
}

/// Number of distances d = 0..N/2 in a correlation profile.
pub fn profile_len(n_sites: usize) -> usize {
    n_sites / 2 + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableEstimate {
    pub mean: f64,
    /// Sample standard deviation ω.
    pub std_dev: f64,
    pub n_samples: usize,
}

impl ObservableEstimate {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(Error::InvalidInput("no values to estimate from".into()));
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std_dev = if n > 1 {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Ok(Self {
            mean,
            std_dev,
            n_samples: n,
        })
    }

    /// c·ω/√n.
    pub fn halfwidth(&self) -> f64 {
        CONFIDENCE_C * self.std_dev / (self.n_samples as f64).sqrt()
    }
}

/// KL(q ‖ p_λ) summed over configurations with q > 0.
pub fn kl_divergence(q: &[f64], model: &RbmModel) -> Result<f64> {
    kl_divergence_exact(q, &ExactDistribution::new(model)?)
}

pub fn kl_divergence_exact(q: &[f64], dist: &ExactDistribution) -> Result<f64> {
    if q.len() != 1usize << dist.n_visible() {
        return Err(Error::InvalidInput(format!(
            "distribution has {} entries, model space has {}",
            q.len(),
            1usize << dist.n_visible()
        )));
    }
    let kl: f64 = q
        .iter()
        .enumerate()
        .filter(|(_, &qx)| qx > 0.0)
        .map(|(x, &qx)| qx * (qx.ln() - dist.log_prob(x)))
        .sum();
    if !kl.is_finite() {
        return Err(Error::Numeric(format!("KL divergence evaluated to {kl}")));
    }
    Ok(kl)
}

/// |Σ ψ_λ(σ) Ψ(σ)|².
pub fn fidelity(model: &RbmModel, psi_exact: &Wavefunction) -> Result<f64> {
    fidelity_exact(&ExactDistribution::new(model)?, psi_exact)
}

pub fn fidelity_exact(dist: &ExactDistribution, psi_exact: &Wavefunction) -> Result<f64> {
    if dist.n_visible() != psi_exact.n_sites() {
        return Err(Error::InvalidInput(format!(
            "model has {} visible units, wavefunction has {} sites",
            dist.n_visible(),
            psi_exact.n_sites()
        )));
    }
    let overlap: f64 = dist
        .amplitudes()
        .iter()
        .zip(psi_exact.amplitudes())
        .map(|(a, b)| a * b)
        .sum();
    Ok(overlap * overlap)
}

/// Worst relative deviation of the confidence interval from `o_ref`.
pub fn roe(o_ref: f64, estimate: &ObservableEstimate) -> Result<f64> {
    if o_ref == 0.0 {
        return Err(Error::UndefinedRelativeError);
    }
    let hw = estimate.halfwidth();
    let lo = ((o_ref - (estimate.mean - hw)) / o_ref).abs();
    let hi = ((o_ref - (estimate.mean + hw)) / o_ref).abs();
    Ok(lo.max(hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagnetizationStats {
    pub n_sites: usize,
    pub m: ObservableEstimate,
    pub m_abs: ObservableEstimate,
    /// Counts keyed by Σ σ^z = N·m.
    pub histogram: BTreeMap<i64, usize>,
}

impl MagnetizationStats {
    /// (m, relative frequency) pairs in increasing m.
    pub fn frequencies(&self) -> Vec<(f64, f64)> {
        let total: usize = self.histogram.values().sum();
        self.histogram
            .iter()
            .map(|(&s, &c)| (s as f64 / self.n_sites as f64, c as f64 / total as f64))
            .collect()
    }

    /// Most frequent m among negative and among positive values.
    pub fn modes(&self) -> (Option<f64>, Option<f64>) {
        let pick = |positive: bool| {
            self.histogram
                .iter()
                .filter(|(&s, _)| if positive { s > 0 } else { s < 0 })
                .max_by_key(|(&s, &c)| (c, if positive { -s } else { s }))
                .map(|(&s, _)| s as f64 / self.n_sites as f64)
        };
        (pick(false), pick(true))
    }
}

/// ⟨m⟩, ⟨|m|⟩ and the histogram of per-configuration magnetization.
pub fn magnetizations(samples: &Dataset) -> Result<MagnetizationStats> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("empty sample set".into()));
    }
    let n = samples.n_sites();
    let mut histogram = BTreeMap::new();
    let mut ms = Vec::with_capacity(samples.len());
    for v in samples.iter() {
        let s = spin_sum(v);
        *histogram.entry(s).or_insert(0) += 1;
        ms.push(s as f64 / n as f64);
    }
    let abs: Vec<f64> = ms.iter().map(|m| m.abs()).collect();
    Ok(MagnetizationStats {
        n_sites: n,
        m: ObservableEstimate::from_values(&ms)?,
        m_abs: ObservableEstimate::from_values(&abs)?,
        histogram,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationProfile {
    pub values: Vec<f64>,
    pub n_samples: usize,
}

/// Connected C(d) between the midpoint site and the site d to its right.
pub fn correlation_profile(samples: &Dataset) -> Result<CorrelationProfile> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("empty sample set".into()));
    }
    let n = samples.n_sites();
    if n < 2 {
        return Err(Error::InvalidInput("correlations need at least 2 sites".into()));
    }
    let r = correlation_reference_site(n);
    let len = profile_len(n);
    let mut single = vec![0.0; len];
    let mut pair = vec![0.0; len];
    for v in samples.iter() {
        let sr = spin_of(v[r]) as f64;
        for d in 0..len {
            let s = spin_of(v[r + d]) as f64;
            single[d] += s;
            pair[d] += sr * s;
        }
    }
    let count = samples.len() as f64;
    let mean_r = single[0] / count;
    let values = (0..len)
        .map(|d| pair[d] / count - mean_r * single[d] / count)
        .collect();
    Ok(CorrelationProfile {
        values,
        n_samples: samples.len(),
    })
}

/// Σ_d (a(d) − b(d))².
pub fn correlation_sse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "profile lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum())
}

/// Mean squared difference of two correlation profiles.
pub fn correlation_mse(a: &[f64], b: &[f64]) -> Result<f64> {
    let sse = correlation_sse(a, b)?;
    if a.is_empty() {
        return Err(Error::InvalidInput("empty profiles".into()));
    }
    Ok(sse / a.len() as f64)
}

/// Least-squares fit of a one-parameter decay shape times an amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub amplitude: f64,
    /// 1/ξ for the exponential, η for the power law.
    pub rate: f64,
    pub sse: f64,
}

const MAX_DECAY_RATE: f64 = 20.0;

fn fit_decay(profile: &[f64], shape: impl Fn(f64, f64) -> f64) -> Result<DecayFit> {
    if profile.len() < 3 {
        return Err(Error::InvalidInput("decay fits need C(d) for at least d = 1, 2".into()));
    }
    let points: Vec<(f64, f64)> = profile.iter().enumerate().skip(1).map(|(d, &c)| (d as f64, c)).collect();
    // For a fixed rate the best amplitude is a linear projection.
    let eval = |rate: f64| {
        let (mut fy, mut ff) = (0.0, 0.0);
        for &(d, y) in &points {
            let f = shape(rate, d);
            fy += f * y;
            ff += f * f;
        }
        let a = if ff > 0.0 { fy / ff } else { 0.0 };
        let sse: f64 = points.iter().map(|&(d, y)| (y - a * shape(rate, d)).powi(2)).sum();
        (sse, a)
    };
    const GRID: usize = 2000;
    let step = MAX_DECAY_RATE / GRID as f64;
    let best = (0..=GRID)
        .map(|k| k as f64 * step)
        .min_by(|&a, &b| eval(a).0.total_cmp(&eval(b).0))
        .expect("grid is non-empty");
    // Golden-section refinement inside the neighbouring grid cells.
    let (mut lo, mut hi) = ((best - step).max(0.0), (best + step).min(MAX_DECAY_RATE));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let x1 = hi - g * (hi - lo);
        let x2 = lo + g * (hi - lo);
        if eval(x1).0 <= eval(x2).0 {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    let mid = 0.5 * (lo + hi);
    let rate = if eval(mid).0 <= eval(best).0 { mid } else { best };
    let (sse, amplitude) = eval(rate);
    Ok(DecayFit { amplitude, rate, sse })
}

/// C(d) ≈ A·exp(−d/ξ) over d ≥ 1.
pub fn fit_exponential(profile: &[f64]) -> Result<DecayFit> {
    fit_decay(profile, |rate, d| (-rate * d).exp())
}

/// C(d) ≈ A·d^(−η) over d ≥ 1.
pub fn fit_power_law(profile: &[f64]) -> Result<DecayFit> {
    fit_decay(profile, |eta, d| d.powf(-eta))
}

/// Statistics of count(v)/count(−v) over flip pairs observed in both
/// orientations. Each pair contributes once, oriented so that v has site 0
/// up.
pub fn z2_occurrence_ratio(samples: &Dataset) -> Result<ObservableEstimate> {
    z2_occurrence_ratio_min_count(samples, 1)
}

/// [`z2_occurrence_ratio`] restricted to pairs where both members occur at
/// least `min_count` times. Low counts bias the ratio upward, since
/// E[1/X] > 1/E[X].
pub fn z2_occurrence_ratio_min_count(samples: &Dataset, min_count: usize) -> Result<ObservableEstimate> {
    let min_count = min_count.max(1);
    let mut counts: HashMap<&[u8], usize> = HashMap::new();
    for v in samples.iter() {
        *counts.entry(v).or_insert(0) += 1;
    }
    let mut ratios = Vec::new();
    let mut flipped = vec![0u8; samples.n_sites()];
    for (&v, &c) in &counts {
        if v.first() != Some(&1) {
            continue;
        }
        for (f, &b) in flipped.iter_mut().zip(v) {
            *f = 1 - b;
        }
        if let Some(&c_flip) = counts.get(flipped.as_slice()) {
            if c >= min_count && c_flip >= min_count {
                ratios.push(c as f64 / c_flip as f64);
            }
        }
    }
    if ratios.is_empty() {
        return Err(Error::UndefinedRatio);
    }
    // HashMap order is arbitrary; sort so the floating-point sums are stable.
    ratios.sort_by(f64::total_cmp);
    ObservableEstimate::from_values(&ratios)
}

/// Local energies E_loc(σ) = −J Σ s_i s_{i+1} − h Σ_i ψ(σ^(i))/ψ(σ) for
/// each sample, with ψ the (positive) RBM amplitude.
pub fn local_energies(spec: &TfimSpec, model: &RbmModel, samples: &Dataset) -> Result<Vec<f64>> {
    let n = spec.n_sites;
    if model.n_visible() != n || samples.n_sites() != n {
        return Err(Error::InvalidInput(format!(
            "size mismatch: spec {n}, model {}, samples {}",
            model.n_visible(),
            samples.n_sites()
        )));
    }
    let nh = model.n_hidden();
    let w = model.weights();
    let b = model.visible_bias();
    let mut act = vec![0.0; nh];
    let mut out = Vec::with_capacity(samples.len());
    for v in samples.iter() {
        act.copy_from_slice(model.hidden_bias());
        for (j, a) in act.iter_mut().enumerate() {
            let row = &w[j * n..(j + 1) * n];
            *a += row.iter().zip(v).filter(|(_, &x)| x == 1).map(|(w, _)| w).sum::<f64>();
        }
        let base: f64 = act.iter().map(|&a| softplus(a)).sum();
        let mut off_diag = 0.0;
        for i in 0..n {
            // Flipping bit i changes v_i by delta; −F changes by
            // delta·b_i + Σ_j [softplus(a_j + delta·W_ji) − softplus(a_j)].
            let delta = if v[i] == 1 { -1.0 } else { 1.0 };
            let mut log_ratio = delta * b[i] - base;
            for (j, &a) in act.iter().enumerate() {
                log_ratio += softplus(a + delta * w[j * n + i]);
            }
            off_diag += (0.5 * log_ratio).exp();
        }
        let bonds: f64 = v
            .windows(2)
            .map(|p| (spin_of(p[0]) * spin_of(p[1])) as f64)
            .sum();
        out.push(-spec.coupling * bonds - spec.field * off_diag);
    }
    if out.iter().any(|e| !e.is_finite()) {
        return Err(Error::Numeric("non-finite local energy".into()));
    }
    Ok(out)
}

pub fn energy_estimate(spec: &TfimSpec, model: &RbmModel, samples: &Dataset) -> Result<ObservableEstimate> {
    ObservableEstimate::from_values(&local_energies(spec, model, samples)?)
}

/// Average ranks (1-based) with ties sharing the mean rank.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation coefficient.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidInput("spearman needs two equal series of length >= 2".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("spearman input contains non-finite values".into()));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Numeric("spearman undefined for a constant series".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Train,
    Prune,
}

/// One row of the metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub stage: Stage,
    pub epoch: usize,
    pub prune_iter: usize,
    pub frac_remaining: f64,
    pub kl: Option<f64>,
    pub fidelity: Option<f64>,
    /// Absent when no reference energy is known.
    pub eroe: Option<f64>,
    pub mroe: f64,
    pub c_mse_raw: f64,
    pub c_mse_norm: f64,
    pub m_mean: f64,
    pub m_abs_mean: f64,
    pub connected: bool,
}

impl MetricsRecord {
    /// 1 − F, when the fidelity is known.
    pub fn infidelity(&self) -> Option<f64> {
        self.fidelity.map(|f| 1.0 - f)
    }
}

/// A record plus the full estimates behind it, stored as JSON lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDetail {
    pub record: MetricsRecord,
    pub energy: ObservableEstimate,
    pub m_abs: ObservableEstimate,
    pub correlations: Vec<f64>,
    pub histogram: BTreeMap<i64, usize>,
}

pub const CSV_HEADER: &str =
    "stage,epoch,prune_iter,frac_remaining,kl,fidelity,eroe,mroe,c_mse_raw,c_mse_norm,m_mean,m_abs_mean,connected";

pub fn write_records_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let ctx = || format!("writing {}", path.display());
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(ctx(), e))?;
    if records.is_empty() {
        w.write_record(CSV_HEADER.split(',')).map_err(|e| csv_io(ctx(), e))?;
    }
    for r in records {
        w.serialize(r).map_err(|e| csv_io(ctx(), e))?;
    }
    w.flush().map_err(|e| Error::io(ctx(), e))
}

pub fn read_records_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| csv_io(format!("reading {}", path.display()), e))?;
    let header = rdr
        .headers()
        .map_err(|e| csv_io(format!("reading {}", path.display()), e))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != CSV_HEADER {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("unexpected header {header:?}"),
        });
    }
    rdr.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

fn csv_io(context: String, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(context, source),
        other => Error::InvalidInput(format!("{context}: {other:?}")),
    }
}

pub fn write_details_jsonl(path: &Path, details: &[MetricsDetail]) -> Result<()> {
    let ctx = || format!("writing {}", path.display());
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(ctx(), e))?);
    for d in details {
        serde_json::to_writer(&mut w, d).map_err(|e| Error::io(ctx(), e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(ctx(), e))?;
    }
    w.flush().map_err(|e| Error::io(ctx(), e))
}

pub fn read_details_jsonl(path: &Path) -> Result<Vec<MetricsDetail>> {
    let file = File::open(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// How evaluation configurations are drawn from a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum EvalSampler {
    Gibbs(SamplingConfig),
    /// Direct draws from the enumerated p_λ (N ≤ 20).
    Exact,
}

/// Computes [`MetricsDetail`]s against fixed reference data.
#[derive(Debug, Clone)]
pub struct Evaluator {
    pub spec: TfimSpec,
    pub psi: Option<Wavefunction>,
    /// A NaN reference energy disables eROE.
    pub reference: ExactObservables,
    /// Empirical training distribution; needed for KL.
    pub q: Option<Vec<f64>>,
    pub n_samples: usize,
    pub sampler: EvalSampler,
    /// Reused at every evaluation so successive records share randomness.
    pub seed: u64,
}

impl Evaluator {
    pub fn evaluate(
        &self,
        model: &RbmModel,
        mask: Option<&PruneMask>,
        stage: Stage,
        epoch: usize,
        prune_iter: usize,
    ) -> Result<MetricsDetail> {
        let exact = if model.n_visible() <= crate::spin::MAX_INDEXED_SITES {
            Some(ExactDistribution::new(model)?)
        } else {
            None
        };
        let kl = match (&self.q, &exact) {
            (Some(q), Some(dist)) => Some(kl_divergence_exact(q, dist)?),
            _ => None,
        };
        let fidelity = match (&self.psi, &exact) {
            (Some(psi), Some(dist)) => Some(fidelity_exact(dist, psi)?),
            _ => None,
        };
        let samples = match (self.sampler, &exact) {
            (EvalSampler::Exact, Some(dist)) => {
                let probs = dist.probabilities();
                let norm: f64 = probs.iter().sum();
                let amps = probs.iter().map(|p| (p / norm).sqrt()).collect();
                let psi = Wavefunction::new(model.n_visible(), amps)?;
                crate::tfim::born_sample(&psi, self.n_samples, self.seed)?
            }
            (EvalSampler::Exact, None) => {
                return Err(Error::Capability(
                    "exact evaluation sampling needs n_visible <= 20".into(),
                ))
            }
            (EvalSampler::Gibbs(cfg), _) => sample_model(model, self.n_samples, &cfg, self.seed)?,
        };
        let energy = energy_estimate(&self.spec, model, &samples)?;
        let mags = magnetizations(&samples)?;
        let profile = correlation_profile(&samples)?;
        let c_mse_raw = correlation_sse(&profile.values, &self.reference.correlations)?;
        let record = MetricsRecord {
            stage,
            epoch,
            prune_iter,
            frac_remaining: mask.map_or(1.0, |m| m.fraction_remaining()),
            kl,
            fidelity,
            eroe: if self.reference.energy.is_finite() {
                Some(roe(self.reference.energy, &energy)?)
            } else {
                None
            },
            mroe: roe(self.reference.m_abs_mean, &mags.m_abs)?,
            c_mse_raw,
            c_mse_norm: c_mse_raw / profile.values.len() as f64,
            m_mean: mags.m.mean,
            m_abs_mean: mags.m_abs.mean,
            connected: mask.is_none_or(|m| m.is_connected()),
        };
        Ok(MetricsDetail {
            record,
            energy,
            m_abs: mags.m_abs,
            correlations: profile.values,
            histogram: mags.histogram,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::DataSource;
    use approx::assert_abs_diff_eq;

    fn dataset(n: usize, rows: &[Vec<u8>]) -> Dataset {
        let mut d = Dataset::new(n, DataSource::Imported, None);
        for r in rows {
            d.push(r).unwrap();
        }
        d
    }

    #[test]
    fn roe_hand_value() {
        let est = ObservableEstimate {
            mean: -19.0,
            std_dev: 0.5 * 100.0 / CONFIDENCE_C,
            n_samples: 10_000,
        };
        assert_abs_diff_eq!(est.halfwidth(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(roe(-20.0, &est).unwrap(), 0.075, epsilon = 1e-12);
        let exact = ObservableEstimate {
            mean: 3.0,
            std_dev: 0.0,
            n_samples: 10,
        };
        assert_eq!(roe(3.0, &exact).unwrap(), 0.0);
        assert!(matches!(roe(0.0, &exact), Err(Error::UndefinedRelativeError)));
    }

    #[test]
    fn magnetization_examples() {
        let up = dataset(4, &[vec![1; 4], vec![1; 4]]);
        let s = magnetizations(&up).unwrap();
        assert_eq!((s.m.mean, s.m_abs.mean), (1.0, 1.0));
        let pair = dataset(4, &[vec![1; 4], vec![0; 4]]);
        let s = magnetizations(&pair).unwrap();
        assert_eq!((s.m.mean, s.m_abs.mean), (0.0, 1.0));
        assert_eq!(s.histogram.get(&4), Some(&1));
        assert_eq!(s.histogram.get(&-4), Some(&1));
        assert_eq!(s.modes(), (Some(-1.0), Some(1.0)));
    }

    #[test]
    fn perfectly_correlated_profile() {
        let d = dataset(6, &[vec![1; 6], vec![0; 6]]);
        let p = correlation_profile(&d).unwrap();
        assert_eq!(p.values, vec![1.0; 4]);
    }

    #[test]
    fn mse_examples() {
        let a = [0.3, 0.2, 0.1];
        assert_eq!(correlation_mse(&a, &a).unwrap(), 0.0);
        let b: Vec<f64> = a.iter().map(|x| x + 0.1).collect();
        assert_abs_diff_eq!(correlation_mse(&a, &b).unwrap(), 0.01, epsilon = 1e-15);
        assert!(matches!(correlation_mse(&a, &b[..2]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn z2_ratio_examples() {
        let sym = dataset(3, &[vec![1, 0, 1], vec![0, 1, 0], vec![1, 1, 0], vec![0, 0, 1]]);
        let r = z2_occurrence_ratio(&sym).unwrap();
        assert_eq!((r.mean, r.std_dev), (1.0, 0.0));
        let single = dataset(3, &vec![vec![1, 0, 1]; 5]);
        assert!(matches!(z2_occurrence_ratio(&single), Err(Error::UndefinedRatio)));
        let skew = dataset(2, &[vec![1, 1], vec![1, 1], vec![0, 0]]);
        assert_eq!(z2_occurrence_ratio(&skew).unwrap().mean, 2.0);
        assert!(matches!(z2_occurrence_ratio_min_count(&skew, 2), Err(Error::UndefinedRatio)));
    }

    #[test]
    fn spearman_examples() {
        assert_abs_diff_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_abs_diff_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 1.0, 0.0]).unwrap(), -1.0);
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn uniform_model_kl_and_fidelity() {
        let model = RbmModel::zeros(3, 2);
        assert_abs_diff_eq!(kl_divergence(&[0.125; 8], &model).unwrap(), 0.0, epsilon = 1e-12);
        let delta = Wavefunction::basis_state(3, 5).unwrap();
        assert_abs_diff_eq!(fidelity(&model, &delta).unwrap(), 0.125, epsilon = 1e-12);
    }

    #[test]
    fn local_energy_of_uniform_model_is_field_plus_bonds() {
        // ψ uniform: every ratio is 1, so E_loc = −J Σ s s − h N.
        let spec = TfimSpec::new(3, 1.0, 0.5).unwrap();
        let d = dataset(3, &[vec![1, 1, 1], vec![1, 0, 1]]);
        let e = local_energies(&spec, &RbmModel::zeros(3, 2), &d).unwrap();
        assert_abs_diff_eq!(e[0], -2.0 - 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(e[1], 2.0 - 1.5, epsilon = 1e-12);
    }

    #[test]
    fn csv_round_trip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let rec = MetricsRecord {
            stage: Stage::Prune,
            epoch: 100,
            prune_iter: 3,
            frac_remaining: 0.72,
            kl: Some(0.01),
            fidelity: None,
            eroe: Some(0.001),
            mroe: 0.02,
            c_mse_raw: 0.3,
            c_mse_norm: 0.03,
            m_mean: 0.0,
            m_abs_mean: 0.5,
            connected: true,
        };
        write_records_csv(&path, std::slice::from_ref(&rec)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(read_records_csv(&path).unwrap(), vec![rec]);
    }

    #[test]
    fn decay_fits_recover_their_own_shapes() {
        let exp: Vec<f64> = (0..10).map(|d| 0.8 * (-(d as f64) / 2.5).exp()).collect();
        let pow: Vec<f64> = (0..10).map(|d| if d == 0 { 1.0 } else { 0.6 * (d as f64).powf(-0.7) }).collect();
        let fe = fit_exponential(&exp).unwrap();
        assert_abs_diff_eq!(fe.rate, 0.4, epsilon = 1e-6);
        assert_abs_diff_eq!(fe.amplitude, 0.8, epsilon = 1e-6);
        assert!(fe.sse < fit_power_law(&exp).unwrap().sse);
        let fp = fit_power_law(&pow).unwrap();
        assert_abs_diff_eq!(fp.rate, 0.7, epsilon = 1e-6);
        assert!(fp.sse < fit_exponential(&pow).unwrap().sse);
    }
}
