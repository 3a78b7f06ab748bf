//! Restricted Boltzmann machine over binary visible and hidden units.
//!
//! Units are encoded in {0, 1}. The joint energy is
//! E(v, h) = −b·v − c·h − hᵀWv, so the visible marginal is p(v) ∝ exp(−F(v))
//! with free energy F(v) = −b·v − Σⱼ softplus(cⱼ + Wⱼ·v). The represented
//! wavefunction is ψ(v) = √p(v).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pruning::PruneMask;
use crate::spin::{bits_to_index, DataSource, Dataset, MAX_INDEXED_SITES};

/// Largest visible layer accepted by [`exact_gradient`].
pub const MAX_EXACT_GRADIENT_SITES: usize = 12;

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// The parameter set λ = (W, b, c).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbmModel {
    n_visible: usize,
    n_hidden: usize,
    /// Row-major (n_hidden, n_visible).
    weights: Vec<f64>,
    visible_bias: Vec<f64>,
    hidden_bias: Vec<f64>,
    init_seed: u64,
}

/// Draws W i.i.d. uniform on [−1/√N, 1/√N] with zero biases.
pub fn init_rbm(n_visible: usize, n_hidden: usize, seed: u64) -> Result<RbmModel> {
    if n_visible == 0 || n_hidden == 0 {
        return Err(Error::InvalidInput(format!(
            "RBM needs at least one visible and one hidden unit, got ({n_visible}, {n_hidden})"
        )));
    }
    let scale = 1.0 / (n_visible as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = (0..n_visible * n_hidden)
        .map(|_| rng.gen_range(-scale..=scale))
        .collect();
    Ok(RbmModel {
        n_visible,
        n_hidden,
        weights,
        visible_bias: vec![0.0; n_visible],
        hidden_bias: vec![0.0; n_hidden],
        init_seed: seed,
    })
}

impl RbmModel {
    pub fn from_parts(
        n_visible: usize,
        n_hidden: usize,
        weights: Vec<f64>,
        visible_bias: Vec<f64>,
        hidden_bias: Vec<f64>,
        init_seed: u64,
    ) -> Result<Self> {
        if n_visible == 0 || n_hidden == 0 {
            return Err(Error::InvalidInput("RBM layers must be non-empty".into()));
        }
        if weights.len() != n_visible * n_hidden
            || visible_bias.len() != n_visible
            || hidden_bias.len() != n_hidden
        {
            return Err(Error::InvalidInput(format!(
                "inconsistent RBM shapes: W {} (expected {}), b {}, c {}",
                weights.len(),
                n_visible * n_hidden,
                visible_bias.len(),
                hidden_bias.len()
            )));
        }
        let model = Self {
            n_visible,
            n_hidden,
            weights,
            visible_bias,
            hidden_bias,
            init_seed,
        };
        if !model.is_finite() {
            return Err(Error::InvalidInput("RBM parameters must be finite".into()));
        }
        Ok(model)
    }

    /// All parameters zero: the uniform distribution.
    pub fn zeros(n_visible: usize, n_hidden: usize) -> Self {
        Self {
            n_visible,
            n_hidden,
            weights: vec![0.0; n_visible * n_hidden],
            visible_bias: vec![0.0; n_visible],
            hidden_bias: vec![0.0; n_hidden],
            init_seed: 0,
        }
    }

    pub fn n_visible(&self) -> usize {
        self.n_visible
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn weight(&self, hidden: usize, visible: usize) -> f64 {
        self.weights[hidden * self.n_visible + visible]
    }

    pub fn set_weight(&mut self, hidden: usize, visible: usize, value: f64) {
        self.weights[hidden * self.n_visible + visible] = value;
    }

    fn row(&self, hidden: usize) -> &[f64] {
        &self.weights[hidden * self.n_visible..(hidden + 1) * self.n_visible]
    }

    pub fn visible_bias(&self) -> &[f64] {
        &self.visible_bias
    }

    pub fn visible_bias_mut(&mut self) -> &mut [f64] {
        &mut self.visible_bias
    }

    pub fn hidden_bias(&self) -> &[f64] {
        &self.hidden_bias
    }

    pub fn hidden_bias_mut(&mut self) -> &mut [f64] {
        &mut self.hidden_bias
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.visible_bias)
            .chain(&self.hidden_bias)
            .all(|x| x.is_finite())
    }

    /// Zeroes every weight at an inactive mask position.
    pub fn apply_mask(&mut self, mask: &PruneMask) -> Result<()> {
        self.check_mask(mask)?;
        for (w, &on) in self.weights.iter_mut().zip(mask.active()) {
            if !on {
                *w = 0.0;
            }
        }
        Ok(())
    }

    pub(crate) fn check_mask(&self, mask: &PruneMask) -> Result<()> {
        if mask.n_hidden() != self.n_hidden || mask.n_visible() != self.n_visible {
            return Err(Error::InvalidInput(format!(
                "mask shape ({}, {}) does not match weights ({}, {})",
                mask.n_hidden(),
                mask.n_visible(),
                self.n_hidden,
                self.n_visible
            )));
        }
        Ok(())
    }

    fn check_visible(&self, v: &[u8]) -> Result<()> {
        if v.len() != self.n_visible {
            return Err(Error::InvalidInput(format!(
                "configuration has {} spins, model expects {}",
                v.len(),
                self.n_visible
            )));
        }
        Ok(())
    }

    /// F(v) for a configuration of {0,1} visible bits.
    pub fn free_energy(&self, v: &[u8]) -> Result<f64> {
        self.check_visible(v)?;
        Ok(self.free_energy_unchecked(v))
    }

    pub(crate) fn free_energy_unchecked(&self, v: &[u8]) -> f64 {
        let mut f = 0.0;
        for (b, &vi) in self.visible_bias.iter().zip(v) {
            if vi == 1 {
                f -= b;
            }
        }
        for j in 0..self.n_hidden {
            let mut a = self.hidden_bias[j];
            for (w, &vi) in self.row(j).iter().zip(v) {
                if vi == 1 {
                    a += w;
                }
            }
            f -= softplus(a);
        }
        f
    }

    /// Hidden pre-activations c + W·v.
    pub(crate) fn hidden_activations(&self, v: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.hidden_bias[j] + dot(self.row(j), v);
        }
    }

    /// Visible pre-activations b + Wᵀ·h.
    pub(crate) fn visible_activations(&self, h: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.visible_bias);
        for (j, &hj) in h.iter().enumerate() {
            if hj != 0.0 {
                for (o, w) in out.iter_mut().zip(self.row(j)) {
                    *o += hj * w;
                }
            }
        }
    }

    fn effective(&self, mask: Option<&PruneMask>) -> Result<std::borrow::Cow<'_, RbmModel>> {
        match mask {
            None => Ok(std::borrow::Cow::Borrowed(self)),
            Some(m) => {
                let mut masked = self.clone();
                masked.apply_mask(m)?;
                Ok(std::borrow::Cow::Owned(masked))
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exact p_λ over all 2^N visible states.
#[derive(Debug, Clone)]
pub struct ExactDistribution {
    n_visible: usize,
    /// −F(v) for every basis index.
    neg_free_energy: Vec<f64>,
    log_z: f64,
}

impl ExactDistribution {
    pub fn new(model: &RbmModel) -> Result<Self> {
        let n = model.n_visible;
        if n > MAX_INDEXED_SITES {
            return Err(Error::Capability(format!(
                "exact partition function needs n_visible <= {MAX_INDEXED_SITES}, got {n}"
            )));
        }
        let nh = model.n_hidden;
        // Column-major copy so that flipping visible unit i touches one slice.
        let mut columns = vec![0.0; n * nh];
        for j in 0..nh {
            for i in 0..n {
                columns[i * nh + j] = model.weight(j, i);
            }
        }
        const CHUNK: usize = 1 << 10;
        let dim = 1usize << n;
        let mut neg_free_energy = vec![0.0; dim];
        neg_free_energy
            .par_chunks_mut(CHUNK)
            .enumerate()
            .for_each(|(chunk, block)| {
                let base = chunk * CHUNK;
                let mut act = model.hidden_bias.clone();
                let mut vis = 0.0;
                for i in 0..n {
                    if (base >> i) & 1 == 1 {
                        vis += model.visible_bias[i];
                        for (a, w) in act.iter_mut().zip(&columns[i * nh..(i + 1) * nh]) {
                            *a += w;
                        }
                    }
                }
                for (offset, slot) in block.iter_mut().enumerate() {
                    let x = base + offset;
                    if offset > 0 {
                        let changed = x ^ (x - 1);
                        for i in 0..n {
                            if (changed >> i) & 1 == 0 {
                                continue;
                            }
                            let sign = if (x >> i) & 1 == 1 { 1.0 } else { -1.0 };
                            vis += sign * model.visible_bias[i];
                            for (a, w) in act.iter_mut().zip(&columns[i * nh..(i + 1) * nh]) {
                                *a += sign * w;
                            }
                        }
                    }
                    *slot = vis + act.iter().map(|&a| softplus(a)).sum::<f64>();
                }
            });
        let log_z = log_sum_exp(&neg_free_energy);
        Ok(Self {
            n_visible: n,
            neg_free_energy,
            log_z,
        })
    }

    pub fn n_visible(&self) -> usize {
        self.n_visible
    }

    pub fn log_partition(&self) -> f64 {
        self.log_z
    }

    pub fn log_prob(&self, index: usize) -> f64 {
        self.neg_free_energy[index] - self.log_z
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.neg_free_energy
            .iter()
            .map(|f| (f - self.log_z).exp())
            .collect()
    }

    /// ψ_λ(v) = √p_λ(v) for every basis index.
    pub fn amplitudes(&self) -> Vec<f64> {
        self.neg_free_energy
            .iter()
            .map(|f| (0.5 * (f - self.log_z)).exp())
            .collect()
    }
}

/// log Z = log Σ_v exp(−F(v)); requires N ≤ 20.
pub fn log_partition(model: &RbmModel) -> Result<f64> {
    Ok(ExactDistribution::new(model)?.log_partition())
}

/// ψ(v) = exp(−(F(v) + log Z)/2). Computes log Z when not supplied.
pub fn psi(model: &RbmModel, v: &[u8], log_z: Option<f64>) -> Result<f64> {
    let f = model.free_energy(v)?;
    let log_z = match log_z {
        Some(z) => z,
        None => log_partition(model)?,
    };
    Ok((-0.5 * (f + log_z)).exp())
}

/// State of one block-Gibbs chain.
#[derive(Debug, Clone)]
pub struct GibbsChain {
    visible: Vec<f64>,
    hidden: Vec<f64>,
    steps: u64,
    seed: u64,
    rng: ChaCha8Rng,
    scratch: Vec<f64>,
}

impl GibbsChain {
    /// Chain started from uniformly random visible bits.
    pub fn new(n_visible: usize, n_hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let visible = (0..n_visible)
            .map(|_| if rng.gen::<bool>() { 1.0 } else { 0.0 })
            .collect();
        Self::with_rng(visible, n_hidden, seed, rng)
    }

    pub fn from_visible(visible: &[u8], n_hidden: usize, seed: u64) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(seed);
        Self::with_rng(visible.iter().map(|&b| b as f64).collect(), n_hidden, seed, rng)
    }

    fn with_rng(visible: Vec<f64>, n_hidden: usize, seed: u64, rng: ChaCha8Rng) -> Self {
        let n_visible = visible.len();
        Self {
            visible,
            hidden: vec![0.0; n_hidden],
            steps: 0,
            seed,
            rng,
            scratch: vec![0.0; n_visible.max(n_hidden)],
        }
    }

    pub fn visible_bits(&self) -> Vec<u8> {
        self.visible.iter().map(|&x| x as u8).collect()
    }

    pub fn hidden_bits(&self) -> Vec<u8> {
        self.hidden.iter().map(|&x| x as u8).collect()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn step(&mut self, model: &RbmModel) {
        let nh = model.n_hidden;
        let nv = model.n_visible;
        model.hidden_activations(&self.visible, &mut self.scratch[..nh]);
        for (h, &a) in self.hidden.iter_mut().zip(&self.scratch[..nh]) {
            *h = bernoulli(&mut self.rng, sigmoid(a));
        }
        model.visible_activations(&self.hidden, &mut self.scratch[..nv]);
        for (v, &a) in self.visible.iter_mut().zip(&self.scratch[..nv]) {
            *v = bernoulli(&mut self.rng, sigmoid(a));
        }
        self.steps += 1;
    }
}

#[inline]
fn bernoulli(rng: &mut impl Rng, p: f64) -> f64 {
    if rng.gen::<f64>() < p {
        1.0
    } else {
        0.0
    }
}

/// One block-Gibbs sweep h ~ p(h|v), then v ~ p(v|h). Masked weights
/// contribute nothing.
pub fn gibbs_step(model: &RbmModel, chain: &mut GibbsChain, mask: Option<&PruneMask>) -> Result<()> {
    if chain.visible.len() != model.n_visible || chain.hidden.len() != model.n_hidden {
        return Err(Error::InvalidInput("chain dimensions do not match model".into()));
    }
    let effective = model.effective(mask)?;
    chain.step(&effective);
    Ok(())
}

/// ∂/∂λ of a negative log-likelihood estimate, same layout as [`RbmModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub visible_bias: Vec<f64>,
    pub hidden_bias: Vec<f64>,
}

impl Gradient {
    pub fn zeros_like(model: &RbmModel) -> Self {
        Self {
            weights: vec![0.0; model.weights.len()],
            visible_bias: vec![0.0; model.n_visible],
            hidden_bias: vec![0.0; model.n_hidden],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.weights
            .iter()
            .chain(&self.visible_bias)
            .chain(&self.hidden_bias)
    }

    pub fn norm(&self) -> f64 {
        self.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn cosine_similarity(&self, other: &Gradient) -> f64 {
        let d: f64 = self.iter().zip(other.iter()).map(|(a, b)| a * b).sum();
        d / (self.norm() * other.norm())
    }

    pub fn max_abs_diff(&self, other: &Gradient) -> f64 {
        self.iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn apply_mask(&mut self, mask: &PruneMask) {
        for (g, &on) in self.weights.iter_mut().zip(mask.active()) {
            if !on {
                *g = 0.0;
            }
        }
    }

    fn scale(&mut self, s: f64) {
        self.weights
            .iter_mut()
            .chain(self.visible_bias.iter_mut())
            .chain(self.hidden_bias.iter_mut())
            .for_each(|g| *g *= s);
    }
}

/// Reusable buffers for CD on one model shape.
struct CdWorkspace {
    v: Vec<f64>,
    h: Vec<f64>,
    act_h: Vec<f64>,
    act_v: Vec<f64>,
}

impl CdWorkspace {
    fn new(model: &RbmModel) -> Self {
        Self {
            v: vec![0.0; model.n_visible],
            h: vec![0.0; model.n_hidden],
            act_h: vec![0.0; model.n_hidden],
            act_v: vec![0.0; model.n_visible],
        }
    }
}

/// Adds `sign` × (σ(c + Wv) ⊗ v, v, σ(c + Wv)) into `grad`; `act_h` receives
/// the hidden probabilities.
fn accumulate_statistics(model: &RbmModel, v: &[f64], act_h: &mut [f64], sign: f64, grad: &mut Gradient) {
    model.hidden_activations(v, act_h);
    let nv = model.n_visible;
    for (j, a) in act_h.iter_mut().enumerate() {
        *a = sigmoid(*a);
        let pj = sign * *a;
        grad.hidden_bias[j] += pj;
        let row = &mut grad.weights[j * nv..(j + 1) * nv];
        for (g, &vi) in row.iter_mut().zip(v) {
            *g += pj * vi;
        }
    }
    for (g, &vi) in grad.visible_bias.iter_mut().zip(v) {
        *g += sign * vi;
    }
}

fn cd_gradient_rng<'a>(
    model: &RbmModel,
    batch: impl ExactSizeIterator<Item = &'a [u8]>,
    k: usize,
    mask: Option<&PruneMask>,
    rng: &mut ChaCha8Rng,
    work: &mut CdWorkspace,
) -> Gradient {
    let mut grad = Gradient::zeros_like(model);
    let size = batch.len();
    for sample in batch {
        for (x, &b) in work.v.iter_mut().zip(sample) {
            *x = b as f64;
        }
        // Data term, leaving p(h|v₀) in act_h for the first hidden sample.
        accumulate_statistics(model, &work.v, &mut work.act_h, -1.0, &mut grad);
        for step in 0..k {
            if step > 0 {
                model.hidden_activations(&work.v, &mut work.act_h);
                work.act_h.iter_mut().for_each(|a| *a = sigmoid(*a));
            }
            for (h, &p) in work.h.iter_mut().zip(&work.act_h) {
                *h = bernoulli(rng, p);
            }
            model.visible_activations(&work.h, &mut work.act_v);
            for (v, &a) in work.v.iter_mut().zip(&work.act_v) {
                *v = bernoulli(rng, sigmoid(a));
            }
        }
        accumulate_statistics(model, &work.v, &mut work.act_h, 1.0, &mut grad);
    }
    grad.scale(1.0 / size as f64);
    if let Some(m) = mask {
        grad.apply_mask(m);
    }
    grad
}

/// CD-k estimate of ∂(−log-likelihood)/∂λ over `batch`: data statistics
/// minus statistics after `k` Gibbs sweeps started at each data vector.
pub fn cd_gradient(
    model: &RbmModel,
    batch: &[&[u8]],
    k: usize,
    mask: Option<&PruneMask>,
    seed: u64,
) -> Result<Gradient> {
    if k == 0 {
        return Err(Error::InvalidInput("CD requires k >= 1".into()));
    }
    if batch.is_empty() {
        return Err(Error::InvalidInput("CD batch is empty".into()));
    }
    for v in batch {
        model.check_visible(v)?;
    }
    if let Some(m) = mask {
        model.check_mask(m)?;
    }
    let effective = model.effective(mask)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = CdWorkspace::new(model);
    Ok(cd_gradient_rng(
        &effective,
        batch.iter().copied(),
        k,
        mask,
        &mut rng,
        &mut work,
    ))
}

/// Exact ∇_λ D_KL(q‖p_λ) = E_q[∂F/∂λ] − E_p[∂F/∂λ] for a dense target
/// distribution `q` over the 2^N basis.
pub fn exact_gradient(model: &RbmModel, q: &[f64]) -> Result<Gradient> {
    let n = model.n_visible;
    if n > MAX_EXACT_GRADIENT_SITES {
        return Err(Error::Capability(format!(
            "exact gradient supports n_visible <= {MAX_EXACT_GRADIENT_SITES}, got {n}"
        )));
    }
    if q.len() != 1usize << n {
        return Err(Error::InvalidInput(format!(
            "target distribution has {} entries, expected 2^{n}",
            q.len()
        )));
    }
    let dist = ExactDistribution::new(model)?;
    let mut grad = Gradient::zeros_like(model);
    let mut v = vec![0.0; n];
    let mut act = vec![0.0; model.n_hidden];
    for x in 0..q.len() {
        let weight = dist.log_prob(x).exp() - q[x];
        if weight == 0.0 {
            continue;
        }
        for (i, vi) in v.iter_mut().enumerate() {
            *vi = ((x >> i) & 1) as f64;
        }
        // ∂F/∂λ = −(σ ⊗ v, v, σ); accumulate (p − q)·(−∂F/∂λ)·(−1).
        accumulate_statistics(model, &v, &mut act, weight, &mut grad);
    }
    Ok(grad)
}

/// Hyperparameters for mini-batch CD training with plain SGD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub cd_k: usize,
    pub batch_size: usize,
    pub epochs: usize,
    /// N_h / N used when a model is initialised for a dataset.
    pub hidden_ratio: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            cd_k: 10,
            batch_size: 100,
            epochs: 500,
            hidden_ratio: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput("learning_rate must be > 0".into()));
        }
        if self.cd_k == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidInput(
                "cd_k, batch_size and epochs must all be >= 1".into(),
            ));
        }
        if !(self.hidden_ratio > 0.0) {
            return Err(Error::InvalidInput("hidden_ratio must be > 0".into()));
        }
        Ok(())
    }

    pub fn n_hidden_for(&self, n_visible: usize) -> usize {
        ((self.hidden_ratio * n_visible as f64).round() as usize).max(1)
    }
}

/// Receives the model after every epoch (and once before training, with
/// epoch 0).
pub trait EpochObserver {
    fn observe(&mut self, epoch: usize, model: &RbmModel) -> Result<()>;
}

impl<F> EpochObserver for F
where
    F: FnMut(usize, &RbmModel) -> Result<()>,
{
    fn observe(&mut self, epoch: usize, model: &RbmModel) -> Result<()> {
        self(epoch, model)
    }
}

/// Parameters beyond this size leave free energies without meaningful digits.
pub const MAX_PARAMETER_MAGNITUDE: f64 = 1e150;

/// Trains `model` in place with mini-batch CD-k and plain SGD.
///
/// Weights at inactive `mask` positions are zeroed up front and their
/// gradients are masked, so they stay exactly zero at every epoch.
pub fn train(
    model: &mut RbmModel,
    dataset: &Dataset,
    config: &TrainConfig,
    mask: Option<&PruneMask>,
    observer: &mut dyn EpochObserver,
) -> Result<()> {
    config.validate()?;
    if dataset.n_sites() != model.n_visible {
        return Err(Error::InvalidInput(format!(
            "dataset has {} sites, model has {} visible units",
            dataset.n_sites(),
            model.n_visible
        )));
    }
    if dataset.is_empty() {
        return Err(Error::InvalidInput("training dataset is empty".into()));
    }
    if let Some(m) = mask {
        model.apply_mask(m)?;
    }
    observer.observe(0, model)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut work = CdWorkspace::new(model);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let grad = cd_gradient_rng(
                model,
                batch.iter().map(|&i| dataset.sample(i)),
                config.cd_k,
                mask,
                &mut rng,
                &mut work,
            );
            let lr = config.learning_rate;
            for (w, g) in model.weights.iter_mut().zip(&grad.weights) {
                *w -= lr * g;
            }
            for (b, g) in model.visible_bias.iter_mut().zip(&grad.visible_bias) {
                *b -= lr * g;
            }
            for (c, g) in model.hidden_bias.iter_mut().zip(&grad.hidden_bias) {
                *c -= lr * g;
            }
        }
        if !model.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                reason: "non-finite parameters".into(),
            });
        }
        let largest = model.weights.iter().chain(&model.visible_bias).chain(&model.hidden_bias)
            .fold(0.0f64, |a, x| a.max(x.abs()));
        if largest > MAX_PARAMETER_MAGNITUDE {
            return Err(Error::TrainingDiverged {
                epoch,
                reason: format!("parameter magnitude {largest:.3e} exceeds {MAX_PARAMETER_MAGNITUDE:e}"),
            });
        }
        debug_assert!(mask.is_none_or(|m| model
            .weights
            .iter()
            .zip(m.active())
            .all(|(w, &on)| on || *w == 0.0)));
        observer.observe(epoch, model)?;
    }
    Ok(())
}

/// Block-Gibbs sampling settings for drawing configurations from a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub burn_in: usize,
    pub thinning: usize,
    /// Independent persistent chains sharing the requested sample count.
    pub chains: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            burn_in: 1000,
            thinning: 10,
            chains: 1000,
        }
    }
}

/// Draws `n` configurations: each chain burns in, then records one state
/// every `thinning` sweeps. Chain `c` uses stream `c` of the seeded generator,
/// so output does not depend on thread count.
pub fn sample_model(
    model: &RbmModel,
    n: usize,
    sampling: &SamplingConfig,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidInput("sample count must be >= 1".into()));
    }
    let chains = sampling.chains.clamp(1, n);
    let per_chain = n.div_ceil(chains);
    let thinning = sampling.thinning.max(1);
    let nv = model.n_visible;
    let blocks: Vec<Vec<u8>> = (0..chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let visible = (0..nv)
                .map(|_| if rng.gen::<bool>() { 1.0 } else { 0.0 })
                .collect();
            let mut chain = GibbsChain::with_rng(visible, model.n_hidden, seed, rng);
            for _ in 0..sampling.burn_in {
                chain.step(model);
            }
            let mut out = Vec::with_capacity(per_chain * nv);
            for _ in 0..per_chain {
                for _ in 0..thinning {
                    chain.step(model);
                }
                out.extend(chain.visible.iter().map(|&x| x as u8));
            }
            out
        })
        .collect();
    let mut data = Dataset::new(nv, DataSource::Model, Some(seed));
    for row in blocks.iter().flat_map(|b| b.chunks_exact(nv)).take(n) {
        data.push(row)?;
    }
    Ok(data)
}

/// Basis index helper for callers holding raw bits.
pub fn visible_index(v: &[u8]) -> usize {
    bits_to_index(v)
}
