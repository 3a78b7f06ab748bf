//! Python bindings: `import rbmprune_py`.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use rbmprune::metrics::{self, ObservableEstimate};
use rbmprune::pruning::{self, MaskProvenance};
use rbmprune::rbm::{self, ExactDistribution, SamplingConfig};
use rbmprune::spin::{self, DataSource};
use rbmprune::{tfim, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::Parse { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for rbmprune::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// Transverse-field Ising chain with open boundaries.
#[pyclass(name = "TfimSpec", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTfimSpec(rbmprune::TfimSpec);

#[pymethods]
impl PyTfimSpec {
    #[new]
    #[pyo3(signature = (n_sites, coupling = 1.0, field = 1.0))]
    fn new(n_sites: usize, coupling: f64, field: f64) -> PyResult<Self> {
        rbmprune::TfimSpec::new(n_sites, coupling, field).py().map(Self)
    }

    #[getter]
    fn n_sites(&self) -> usize {
        self.0.n_sites
    }

    #[getter]
    fn coupling(&self) -> f64 {
        self.0.coupling
    }

    #[getter]
    fn field(&self) -> f64 {
        self.0.field
    }

    /// (energy, Wavefunction) of the ground state, amplitudes non-negative.
    #[pyo3(signature = (tol = 1e-10))]
    fn ground_state(&self, tol: f64) -> PyResult<(f64, PyWavefunction)> {
        let gs = tfim::groundstate(&self.0, tol).py()?;
        Ok((gs.energy, PyWavefunction(gs.psi)))
    }

    /// H·v for a vector of length 2^N.
    fn apply_hamiltonian(&self, v: Vec<f64>) -> PyResult<Vec<f64>> {
        tfim::apply_hamiltonian(&self.0, &v).py()
    }

    /// Exact energy, <m>, <|m|> and C(d) as a dict.
    fn exact_observables(&self, py: Python<'_>, psi: &PyWavefunction) -> PyResult<Py<PyAny>> {
        let o = tfim::exact_observables(&self.0, &psi.0).py()?;
        let d = pyo3::types::PyDict::new(py);
        d.set_item("energy", o.energy)?;
        d.set_item("m_mean", o.m_mean)?;
        d.set_item("m_abs_mean", o.m_abs_mean)?;
        d.set_item("correlations", o.correlations)?;
        Ok(d.into_any().unbind())
    }

    fn __repr__(&self) -> String {
        format!("TfimSpec(n_sites={}, coupling={}, field={})", self.0.n_sites, self.0.coupling, self.0.field)
    }
}

#[pyclass(name = "Wavefunction", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyWavefunction(tfim::Wavefunction);

#[pymethods]
impl PyWavefunction {
    #[new]
    fn new(n_sites: usize, amplitudes: Vec<f64>) -> PyResult<Self> {
        tfim::Wavefunction::new(n_sites, amplitudes).py().map(Self)
    }

    #[getter]
    fn n_sites(&self) -> usize {
        self.0.n_sites()
    }

    #[getter]
    fn amplitudes(&self) -> Vec<f64> {
        self.0.amplitudes().to_vec()
    }

    fn probabilities(&self) -> Vec<f64> {
        self.0.probabilities()
    }

    /// Draws `n` configurations from |psi|^2.
    fn sample(&self, n: usize, seed: u64) -> PyResult<PyDataset> {
        tfim::born_sample(&self.0, n, seed).py().map(PyDataset)
    }
}

/// Binary spin configurations, one row per sample, 1 meaning up.
#[pyclass(name = "Dataset", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDataset(rbmprune::Dataset);

#[pymethods]
impl PyDataset {
    #[new]
    fn new(rows: Vec<Vec<u8>>) -> PyResult<Self> {
        let n = rows
            .first()
            .map(|r| r.len())
            .ok_or_else(|| PyValueError::new_err("dataset needs at least one row"))?;
        let mut d = rbmprune::Dataset::new(n, DataSource::Imported, None);
        for r in &rows {
            d.push(r).py()?;
        }
        Ok(Self(d))
    }

    /// Reads a text file of 0/1 lines.
    #[staticmethod]
    fn load(path: std::path::PathBuf, n_sites: usize) -> PyResult<Self> {
        spin::import_dataset(&path, n_sites).py().map(Self)
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        self.0.write_text(&path).py()
    }

    #[getter]
    fn n_sites(&self) -> usize {
        self.0.n_sites()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn rows(&self) -> Vec<Vec<u8>> {
        self.0.iter().map(|r| r.to_vec()).collect()
    }

    /// Relative frequency of each basis index.
    fn empirical_distribution(&self) -> PyResult<Vec<f64>> {
        self.0.empirical_distribution().py()
    }
}

#[pyclass(name = "PruneMask", skip_from_py_object)]
#[derive(Clone)]
struct PyPruneMask(rbmprune::PruneMask);

#[pymethods]
impl PyPruneMask {
    #[staticmethod]
    fn dense(n_visible: usize, n_hidden: usize) -> Self {
        Self(rbmprune::PruneMask::dense(n_visible, n_hidden))
    }

    /// Mask from a row-major n_hidden x n_visible list of booleans.
    #[staticmethod]
    fn from_active(n_visible: usize, n_hidden: usize, active: Vec<bool>) -> PyResult<Self> {
        rbmprune::PruneMask::from_active(n_visible, n_hidden, active, MaskProvenance::Constructed)
            .py()
            .map(Self)
    }

    #[getter]
    fn n_visible(&self) -> usize {
        self.0.n_visible()
    }

    #[getter]
    fn n_hidden(&self) -> usize {
        self.0.n_hidden()
    }

    fn get(&self, hidden: usize, visible: usize) -> bool {
        self.0.get(hidden, visible)
    }

    fn active(&self) -> Vec<bool> {
        self.0.active().to_vec()
    }

    fn active_count(&self) -> usize {
        self.0.active_count()
    }

    fn fraction_remaining(&self) -> f64 {
        self.0.fraction_remaining()
    }

    fn is_connected(&self) -> bool {
        self.0.is_connected()
    }

    fn to_text(&self) -> String {
        self.0.to_text()
    }

    /// Moves `break_fraction` of in-cluster weights to random positions.
    fn ablate(&self, break_fraction: f64, seed: u64) -> PyResult<Self> {
        pruning::cluster_ablation(&self.0, break_fraction, seed).py().map(Self)
    }
}

#[pyclass(name = "RbmModel", skip_from_py_object)]
#[derive(Clone)]
struct PyRbmModel(rbmprune::RbmModel);

#[pymethods]
impl PyRbmModel {
    /// Small random initialisation; identical seeds give identical models.
    #[new]
    #[pyo3(signature = (n_visible, n_hidden, seed = 0))]
    fn new(n_visible: usize, n_hidden: usize, seed: u64) -> PyResult<Self> {
        rbm::init_rbm(n_visible, n_hidden, seed).py().map(Self)
    }

    #[getter]
    fn n_visible(&self) -> usize {
        self.0.n_visible()
    }

    #[getter]
    fn n_hidden(&self) -> usize {
        self.0.n_hidden()
    }

    /// Row-major n_hidden x n_visible weights.
    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.weights().to_vec()
    }

    #[getter]
    fn visible_bias(&self) -> Vec<f64> {
        self.0.visible_bias().to_vec()
    }

    #[getter]
    fn hidden_bias(&self) -> Vec<f64> {
        self.0.hidden_bias().to_vec()
    }

    fn free_energy(&self, v: Vec<u8>) -> PyResult<f64> {
        self.0.free_energy(&v).py()
    }

    /// psi(v) = sqrt(p(v)) by exact enumeration.
    fn amplitudes(&self) -> PyResult<Vec<f64>> {
        Ok(ExactDistribution::new(&self.0).py()?.amplitudes())
    }

    fn probabilities(&self) -> PyResult<Vec<f64>> {
        Ok(ExactDistribution::new(&self.0).py()?.probabilities())
    }

    fn apply_mask(&mut self, mask: &PyPruneMask) -> PyResult<()> {
        self.0.apply_mask(&mask.0).py()
    }

    /// CD-k training in place; returns the KL divergence to the dataset's
    /// empirical distribution after every epoch when `track_kl` is set.
    #[pyo3(signature = (dataset, epochs = 500, learning_rate = 0.01, cd_k = 10, batch_size = 100, seed = 0, mask = None, track_kl = false))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        &mut self,
        py: Python<'_>,
        dataset: &PyDataset,
        epochs: usize,
        learning_rate: f64,
        cd_k: usize,
        batch_size: usize,
        seed: u64,
        mask: Option<&PyPruneMask>,
        track_kl: bool,
    ) -> PyResult<Vec<f64>> {
        let cfg = rbmprune::TrainConfig {
            learning_rate,
            cd_k,
            batch_size,
            epochs,
            seed,
            ..Default::default()
        };
        let q = if track_kl { Some(dataset.0.empirical_distribution().py()?) } else { None };
        let model = &mut self.0;
        let data = &dataset.0;
        let mask = mask.map(|m| &m.0);
        py.detach(|| {
            let mut kl = Vec::new();
            rbm::train(model, data, &cfg, mask, &mut |_: usize, m: &rbmprune::RbmModel| {
                if let Some(q) = &q {
                    kl.push(metrics::kl_divergence(q, m)?);
                }
                Ok(())
            })
            .map(|()| kl)
        })
        .py()
    }

    /// Block-Gibbs samples from independent chains.
    #[pyo3(signature = (n, seed = 0, burn_in = 1000, thinning = 10, chains = 1000))]
    fn sample(&self, py: Python<'_>, n: usize, seed: u64, burn_in: usize, thinning: usize, chains: usize) -> PyResult<PyDataset> {
        let cfg = SamplingConfig { burn_in, thinning, chains };
        let model = &self.0;
        py.detach(|| rbm::sample_model(model, n, &cfg, seed)).py().map(PyDataset)
    }

    /// Removes the `fraction` of active weights with the smallest magnitude
    /// and returns the new mask.
    fn prune_step(&mut self, mask: &PyPruneMask, fraction: f64) -> PyResult<PyPruneMask> {
        pruning::magnitude_prune_step(&mut self.0, &mask.0, fraction).py().map(PyPruneMask)
    }

    /// This model's parameters with `mask` transplanted onto them.
    fn with_mask(&self, mask: &PyPruneMask) -> PyResult<(PyRbmModel, PyPruneMask)> {
        let (m, k) = pruning::transplant_mask(&mask.0, &self.0).py()?;
        Ok((PyRbmModel(m), PyPruneMask(k)))
    }
}

#[pyfunction]
fn construct_cluster_mask(n_visible: usize, n_hidden: usize, cluster_size: usize, target_active: f64, seed: u64) -> PyResult<PyPruneMask> {
    pruning::construct_cluster_mask(n_visible, n_hidden, cluster_size, target_active, seed)
        .py()
        .map(PyPruneMask)
}

/// (iteration, remaining, remaining%, continuous%) rows.
#[pyfunction]
#[pyo3(signature = (total_weights, fraction = 0.1, iterations = 18))]
fn schedule_table(total_weights: usize, fraction: f64, iterations: usize) -> PyResult<Vec<(usize, usize, f64, f64)>> {
    let schedule = rbmprune::PruneSchedule {
        fraction,
        iterations,
        ..Default::default()
    };
    Ok(pruning::schedule_table(&schedule, total_weights)
        .py()?
        .into_iter()
        .map(|r| (r.iteration, r.remaining, r.remaining_pct, r.continuous_pct))
        .collect())
}

#[pyfunction]
fn kl_divergence(q: Vec<f64>, model: &PyRbmModel) -> PyResult<f64> {
    metrics::kl_divergence(&q, &model.0).py()
}

#[pyfunction]
fn fidelity(model: &PyRbmModel, psi: &PyWavefunction) -> PyResult<f64> {
    metrics::fidelity(&model.0, &psi.0).py()
}

/// (<m>, <|m|>, {N*m: count}).
#[pyfunction]
fn magnetizations(samples: &PyDataset) -> PyResult<(f64, f64, std::collections::BTreeMap<i64, usize>)> {
    let s = metrics::magnetizations(&samples.0).py()?;
    Ok((s.m.mean, s.m_abs.mean, s.histogram))
}

#[pyfunction]
fn correlation_profile(samples: &PyDataset) -> PyResult<Vec<f64>> {
    Ok(metrics::correlation_profile(&samples.0).py()?.values)
}

/// (mean, std_dev, pairs) of count(v)/count(-v).
#[pyfunction]
#[pyo3(signature = (samples, min_count = 1))]
fn z2_occurrence_ratio(samples: &PyDataset, min_count: usize) -> PyResult<(f64, f64, usize)> {
    let r = metrics::z2_occurrence_ratio_min_count(&samples.0, min_count).py()?;
    Ok((r.mean, r.std_dev, r.n_samples))
}

/// Relative error with a 99% confidence margin.
#[pyfunction]
fn roe(o_ref: f64, mean: f64, std_dev: f64, n_samples: usize) -> PyResult<f64> {
    metrics::roe(o_ref, &ObservableEstimate { mean, std_dev, n_samples }).py()
}

#[pymodule]
fn rbmprune_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTfimSpec>()?;
    m.add_class::<PyWavefunction>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyPruneMask>()?;
    m.add_class::<PyRbmModel>()?;
    m.add_function(wrap_pyfunction!(construct_cluster_mask, m)?)?;
    m.add_function(wrap_pyfunction!(schedule_table, m)?)?;
    m.add_function(wrap_pyfunction!(kl_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(magnetizations, m)?)?;
    m.add_function(wrap_pyfunction!(correlation_profile, m)?)?;
    m.add_function(wrap_pyfunction!(z2_occurrence_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(roe, m)?)?;
    Ok(())
}
