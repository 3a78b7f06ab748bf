//! Magnitude pruning, connectivity of the RBM graph, and sparsity masks for
//! training sparse models from initialization.

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rbm::{train, RbmModel, TrainConfig};
use crate::spin::Dataset;

/// Minimum run of adjacent active weights in a row that counts as a cluster.
pub const CLUSTER_MIN_RUN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskProvenance {
    Dense,
    Pruned,
    SpSameSeed,
    SpOtherSeed,
    Constructed,
}

/// Binary (N_h, N) pattern of active weights. Biases are never masked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneMask {
    n_visible: usize,
    n_hidden: usize,
    active: Vec<bool>,
    pub provenance: MaskProvenance,
    /// Init seed of the model this mask was derived from, if any.
    pub seed: Option<u64>,
}

impl PruneMask {
    pub fn dense(n_visible: usize, n_hidden: usize) -> Self {
        Self {
            n_visible,
            n_hidden,
            active: vec![true; n_visible * n_hidden],
            provenance: MaskProvenance::Dense,
            seed: None,
        }
    }

    pub fn empty(n_visible: usize, n_hidden: usize) -> Self {
        Self {
            active: vec![false; n_visible * n_hidden],
            ..Self::dense(n_visible, n_hidden)
        }
    }

    /// Row-major (hidden, visible) activity flags.
    pub fn from_active(
        n_visible: usize,
        n_hidden: usize,
        active: Vec<bool>,
        provenance: MaskProvenance,
    ) -> Result<Self> {
        if active.len() != n_visible * n_hidden {
            return Err(Error::InvalidInput(format!(
                "mask needs {} entries, got {}",
                n_visible * n_hidden,
                active.len()
            )));
        }
        Ok(Self {
            n_visible,
            n_hidden,
            active,
            provenance,
            seed: None,
        })
    }

    pub fn n_visible(&self) -> usize {
        self.n_visible
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    pub fn total(&self) -> usize {
        self.active.len()
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn get(&self, hidden: usize, visible: usize) -> bool {
        self.active[hidden * self.n_visible + visible]
    }

    pub fn set(&mut self, hidden: usize, visible: usize, on: bool) {
        self.active[hidden * self.n_visible + visible] = on;
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn fraction_remaining(&self) -> f64 {
        self.active_count() as f64 / self.total() as f64
    }

    pub fn is_connected(&self) -> bool {
        is_connected(self, self.n_visible, self.n_hidden)
    }

    /// Maximal runs of adjacent active entries in `hidden`'s row, as
    /// `(start, len)`.
    pub fn row_runs(&self, hidden: usize) -> Vec<(usize, usize)> {
        let row = &self.active[hidden * self.n_visible..(hidden + 1) * self.n_visible];
        let mut runs = Vec::new();
        let mut start = None;
        for (i, &on) in row.iter().chain(std::iter::once(&false)).enumerate() {
            match (on, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    runs.push((s, i - s));
                    start = None;
                }
                _ => {}
            }
        }
        runs
    }

    /// Every row holds a contiguous window of at least `x` active entries.
    pub fn has_cluster_windows(&self, x: usize) -> bool {
        (0..self.n_hidden).all(|j| self.row_runs(j).iter().any(|&(_, len)| len >= x))
    }

    /// Text matrix: `n_hidden` lines of `n_visible` `0`/`1` characters.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.total() + self.n_hidden);
        for row in self.active.chunks(self.n_visible) {
            s.extend(row.iter().map(|&a| if a { '1' } else { '0' }));
            s.push('\n');
        }
        s
    }
}

/// JSON sidecar stored next to a mask text file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSidecar {
    pub provenance: MaskProvenance,
    pub seed: Option<u64>,
    pub n_visible: usize,
    pub n_hidden: usize,
    pub active_count: usize,
    #[serde(default)]
    pub params: serde_json::Value,
}

pub fn sidecar_path(mask_path: &Path) -> PathBuf {
    mask_path.with_extension("json")
}

pub fn write_mask(path: &Path, mask: &PruneMask, params: serde_json::Value) -> Result<()> {
    fs::write(path, mask.to_text())
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    let sidecar = MaskSidecar {
        provenance: mask.provenance,
        seed: mask.seed,
        n_visible: mask.n_visible,
        n_hidden: mask.n_hidden,
        active_count: mask.active_count(),
        params,
    };
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    fs::write(&side, json + "\n").map_err(|e| Error::io(format!("writing {}", side.display()), e))
}

pub fn read_mask(path: &Path) -> Result<(PruneMask, MaskSidecar)> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let side = sidecar_path(path);
    let sidecar: MaskSidecar = serde_json::from_str(
        &fs::read_to_string(&side).map_err(|e| Error::io(format!("reading {}", side.display()), e))?,
    )
    .map_err(|e| Error::Parse {
        path: side.clone(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let mut active = Vec::with_capacity(sidecar.n_visible * sidecar.n_hidden);
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message,
        };
        if line.len() != sidecar.n_visible {
            return Err(err(format!(
                "expected {} characters, found {}",
                sidecar.n_visible,
                line.len()
            )));
        }
        for ch in line.chars() {
            match ch {
                '0' => active.push(false),
                '1' => active.push(true),
                other => return Err(err(format!("invalid mask character {other:?}"))),
            }
        }
        rows += 1;
    }
    if rows != sidecar.n_hidden {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: rows,
            message: format!("expected {} rows, found {rows}", sidecar.n_hidden),
        });
    }
    let mut mask = PruneMask::from_active(sidecar.n_visible, sidecar.n_hidden, active, sidecar.provenance)?;
    mask.seed = sidecar.seed;
    if mask.active_count() != sidecar.active_count {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "active count disagrees with sidecar".into(),
        });
    }
    Ok((mask, sidecar))
}

/// How the per-step prune count is rounded from `fraction × active`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PruneRounding {
    #[default]
    Floor,
    /// Round half to even.
    HalfEven,
}

impl PruneRounding {
    pub fn count(self, fraction: f64, active: usize) -> usize {
        let x = fraction * active as f64;
        match self {
            PruneRounding::Floor => (x + 1e-9).floor() as usize,
            PruneRounding::HalfEven => {
                let lower = x.floor();
                let rem = x - lower;
                let lower = lower as usize;
                if (rem - 0.5).abs() < 1e-9 {
                    if lower % 2 == 0 {
                        lower
                    } else {
                        lower + 1
                    }
                } else if rem > 0.5 {
                    lower + 1
                } else {
                    lower
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneSchedule {
    /// Fraction of the still-active weights removed per step.
    pub fraction: f64,
    pub iterations: usize,
    pub finetune_epochs: usize,
    /// Larger first step followed by `fraction` on later steps.
    #[serde(default)]
    pub first_fraction: Option<f64>,
    #[serde(default)]
    pub rounding: PruneRounding,
}

impl Default for PruneSchedule {
    fn default() -> Self {
        Self {
            fraction: 0.1,
            iterations: 18,
            finetune_epochs: 100,
            first_fraction: None,
            rounding: PruneRounding::Floor,
        }
    }
}

impl PruneSchedule {
    pub fn validate(&self) -> Result<()> {
        let bad = |f: f64| !(f > 0.0 && f < 1.0);
        if bad(self.fraction) || self.first_fraction.is_some_and(bad) {
            return Err(Error::InvalidInput("prune fractions must lie in (0, 1)".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidInput("prune iterations must be >= 1".into()));
        }
        Ok(())
    }

    /// Fraction applied at 1-based `iteration`.
    pub fn fraction_at(&self, iteration: usize) -> f64 {
        match (iteration, self.first_fraction) {
            (1, Some(f)) => f,
            _ => self.fraction,
        }
    }
}

/// Deactivates the `fraction` of active weights with the smallest |W|
/// (floor rounding) and zeroes them in `model`.
pub fn magnitude_prune_step(model: &mut RbmModel, mask: &PruneMask, fraction: f64) -> Result<PruneMask> {
    magnitude_prune_step_with(model, mask, fraction, PruneRounding::Floor)
}

/// [`magnitude_prune_step`] with an explicit rounding rule. Equal magnitudes
/// are removed in (row, column) order.
pub fn magnitude_prune_step_with(
    model: &mut RbmModel,
    mask: &PruneMask,
    fraction: f64,
    rounding: PruneRounding,
) -> Result<PruneMask> {
    model.check_mask(mask)?;
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidInput(format!("prune fraction {fraction} outside [0, 1]")));
    }
    let mut candidates: Vec<usize> = (0..mask.total()).filter(|&k| mask.active[k]).collect();
    if candidates.is_empty() {
        return Err(Error::InvalidState("mask has no active weights to prune".into()));
    }
    let remove = rounding.count(fraction, candidates.len());
    let weights = model.weights();
    candidates.sort_by(|&a, &b| weights[a].abs().total_cmp(&weights[b].abs()).then(a.cmp(&b)));
    let mut next = mask.clone();
    next.provenance = MaskProvenance::Pruned;
    next.seed = Some(model.init_seed());
    for &k in &candidates[..remove] {
        next.active[k] = false;
    }
    model.apply_mask(&next)?;
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRow {
    pub iteration: usize,
    /// Active count under the integer rounding rule.
    pub remaining: usize,
    pub remaining_pct: f64,
    /// 100 · Π (1 − f) reference.
    pub continuous_pct: f64,
}

/// Remaining weights per iteration `0..=iterations`.
pub fn schedule_table(schedule: &PruneSchedule, total_weights: usize) -> Result<Vec<ScheduleRow>> {
    let bad = |f: f64| !(f > 0.0 && f < 1.0);
    if bad(schedule.fraction) || schedule.first_fraction.is_some_and(bad) {
        return Err(Error::InvalidInput("prune fractions must lie in (0, 1)".into()));
    }
    let mut rows = Vec::with_capacity(schedule.iterations + 1);
    let mut remaining = total_weights;
    let mut continuous = 1.0;
    for iteration in 0..=schedule.iterations {
        if iteration > 0 {
            let f = schedule.fraction_at(iteration);
            remaining -= schedule.rounding.count(f, remaining).min(remaining);
            continuous *= 1.0 - f;
        }
        rows.push(ScheduleRow {
            iteration,
            remaining,
            remaining_pct: 100.0 * remaining as f64 / total_weights as f64,
            continuous_pct: 100.0 * continuous,
        });
    }
    Ok(rows)
}

/// Number of connected components of the bipartite graph on
/// `n_visible + n_hidden` nodes with one edge per active weight.
pub fn connected_components(mask: &PruneMask) -> usize {
    let (nv, nh) = (mask.n_visible, mask.n_hidden);
    // Nodes 0..nv are visible, nv..nv+nh hidden.
    let mut seen = vec![false; nv + nh];
    let mut queue = VecDeque::new();
    let mut components = 0;
    for start in 0..nv + nh {
        if seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(node) = queue.pop_front() {
            if node < nv {
                for j in 0..nh {
                    if mask.get(j, node) && !seen[nv + j] {
                        seen[nv + j] = true;
                        queue.push_back(nv + j);
                    }
                }
            } else {
                let j = node - nv;
                for i in 0..nv {
                    if mask.get(j, i) && !seen[i] {
                        seen[i] = true;
                        queue.push_back(i);
                    }
                }
            }
        }
    }
    components
}

/// True iff all visible and hidden units form one connected component.
pub fn is_connected(mask: &PruneMask, n_visible: usize, n_hidden: usize) -> bool {
    if mask.n_visible != n_visible || mask.n_hidden != n_hidden {
        return false;
    }
    connected_components(mask) == 1
}

/// Callback after each prune + fine-tune iteration.
pub trait PruneObserver {
    fn after_iteration(
        &mut self,
        iteration: usize,
        model: &RbmModel,
        mask: &PruneMask,
        connected: bool,
    ) -> Result<()>;
}

impl<F> PruneObserver for F
where
    F: FnMut(usize, &RbmModel, &PruneMask, bool) -> Result<()>,
{
    fn after_iteration(&mut self, iteration: usize, model: &RbmModel, mask: &PruneMask, connected: bool) -> Result<()> {
        self(iteration, model, mask, connected)
    }
}

#[derive(Debug, Clone)]
pub struct PruneOutcome {
    pub mask: PruneMask,
    /// First iteration whose mask leaves the RBM graph disconnected.
    pub first_disconnected: Option<usize>,
}

/// Seed used for fine-tuning after prune step `iteration`.
pub fn finetune_seed(base: u64, iteration: usize) -> u64 {
    base ^ (iteration as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Alternates magnitude pruning and masked fine-tuning. The observer sees
/// iteration 0 (the dense model) and every iteration after its fine-tune.
pub fn iterative_prune_finetune(
    model: &mut RbmModel,
    dataset: &Dataset,
    schedule: &PruneSchedule,
    train_config: &TrainConfig,
    observer: &mut dyn PruneObserver,
) -> Result<PruneOutcome> {
    schedule.validate()?;
    let mut mask = PruneMask::dense(model.n_visible(), model.n_hidden());
    mask.seed = Some(model.init_seed());
    observer.after_iteration(0, model, &mask, mask.is_connected())?;
    let mut first_disconnected = None;
    for iteration in 1..=schedule.iterations {
        if mask.active_count() == 0 {
            break;
        }
        mask = magnitude_prune_step_with(model, &mask, schedule.fraction_at(iteration), schedule.rounding)?;
        if schedule.finetune_epochs > 0 {
            let cfg = TrainConfig {
                epochs: schedule.finetune_epochs,
                seed: finetune_seed(train_config.seed, iteration),
                ..train_config.clone()
            };
            train(model, dataset, &cfg, Some(&mask), &mut |_: usize, _: &RbmModel| Ok(())).map_err(
                |e| match e {
                    Error::TrainingDiverged { epoch, reason } => Error::TrainingDiverged {
                        epoch,
                        reason: format!("{reason} (pruning iteration {iteration})"),
                    },
                    other => other,
                },
            )?;
        }
        let connected = mask.is_connected();
        if !connected && first_disconnected.is_none() {
            first_disconnected = Some(iteration);
        }
        observer.after_iteration(iteration, model, &mask, connected)?;
    }
    Ok(PruneOutcome {
        mask,
        first_disconnected,
    })
}

/// Builds a connected mask where every hidden unit owns one window of
/// `cluster_size` adjacent visible units, topped up with seeded random
/// entries to reach `target_active_fraction` of all weights.
pub fn construct_cluster_mask(
    n_visible: usize,
    n_hidden: usize,
    cluster_size: usize,
    target_active_fraction: f64,
    seed: u64,
) -> Result<PruneMask> {
    if cluster_size < 3 || cluster_size > n_visible {
        return Err(Error::Constraint(format!(
            "cluster size must satisfy 3 <= X <= {n_visible}, got {cluster_size}"
        )));
    }
    if !(0.0..=1.0).contains(&target_active_fraction) {
        return Err(Error::Constraint(format!(
            "target active fraction {target_active_fraction} outside [0, 1]"
        )));
    }
    let total = n_visible * n_hidden;
    let target = ((target_active_fraction * total as f64).round() as usize).min(total);
    let window_entries = cluster_size * n_hidden;
    if target < window_entries {
        return Err(Error::Constraint(format!(
            "{target} active weights cannot hold {n_hidden} windows of {cluster_size}"
        )));
    }
    if target < n_visible + n_hidden - 1 {
        return Err(Error::Constraint(format!(
            "{target} active weights cannot connect {} nodes",
            n_visible + n_hidden
        )));
    }

    let mut mask = PruneMask::empty(n_visible, n_hidden);
    mask.provenance = MaskProvenance::Constructed;
    mask.seed = Some(seed);
    let span = n_visible - cluster_size;
    let starts: Vec<usize> = (0..n_hidden)
        .map(|j| {
            if n_hidden == 1 {
                0
            } else {
                ((j * span) as f64 / (n_hidden - 1) as f64).round() as usize
            }
        })
        .collect();
    for (j, &s) in starts.iter().enumerate() {
        for i in s..s + cluster_size {
            mask.set(j, i, true);
        }
    }

    // Bridge every stray component to the one holding hidden unit 0, using
    // the hidden unit whose window centre is closest to a stray visible unit.
    loop {
        let labels = component_labels(&mask);
        let main = labels[n_visible];
        let Some(stray_visible) = (0..n_visible).find(|&i| labels[i] != main) else {
            if labels.iter().all(|&l| l == main) {
                break;
            }
            return Err(Error::Constraint("hidden unit without visible neighbours".into()));
        };
        let centre = |j: usize| starts[j] as f64 + (cluster_size as f64 - 1.0) / 2.0;
        let hidden = (0..n_hidden)
            .filter(|&j| labels[n_visible + j] == main)
            .min_by(|&a, &b| {
                (centre(a) - stray_visible as f64)
                    .abs()
                    .total_cmp(&(centre(b) - stray_visible as f64).abs())
            })
            .expect("main component holds hidden unit 0");
        mask.set(hidden, stray_visible, true);
    }
    if mask.active_count() > target {
        return Err(Error::Constraint(format!(
            "windows plus bridges need {} active weights, target is {target}",
            mask.active_count()
        )));
    }

    let mut free: Vec<usize> = (0..total).filter(|&k| !mask.active[k]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    free.shuffle(&mut rng);
    let need = target - mask.active_count();
    for &k in &free[..need] {
        mask.active[k] = true;
    }
    Ok(mask)
}

fn component_labels(mask: &PruneMask) -> Vec<usize> {
    let (nv, nh) = (mask.n_visible, mask.n_hidden);
    let mut labels = vec![usize::MAX; nv + nh];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..nv + nh {
        if labels[start] != usize::MAX {
            continue;
        }
        labels[start] = next;
        stack.push(start);
        while let Some(node) = stack.pop() {
            let neighbours: Vec<usize> = if node < nv {
                (0..nh).filter(|&j| mask.get(j, node)).map(|j| nv + j).collect()
            } else {
                (0..nv).filter(|&i| mask.get(node - nv, i)).collect()
            };
            for nb in neighbours {
                if labels[nb] == usize::MAX {
                    labels[nb] = next;
                    stack.push(nb);
                }
            }
        }
        next += 1;
    }
    labels
}

/// Applies `mask` to `target`, zeroing weights at inactive positions.
///
/// Provenance becomes same-seed when the mask was derived from a model with
/// the target's init seed, other-seed otherwise.
pub fn transplant_mask(mask: &PruneMask, target: &RbmModel) -> Result<(RbmModel, PruneMask)> {
    target.check_mask(mask)?;
    let mut model = target.clone();
    model.apply_mask(mask)?;
    let mut applied = mask.clone();
    if applied.active_count() == applied.total() {
        applied.provenance = MaskProvenance::Dense;
    } else if mask.seed == Some(target.init_seed()) {
        applied.provenance = MaskProvenance::SpSameSeed;
    } else {
        applied.provenance = MaskProvenance::SpOtherSeed;
    }
    applied.seed = Some(target.init_seed());
    Ok((model, applied))
}

/// Entries belonging to a row run of at least [`CLUSTER_MIN_RUN`] actives.
pub fn cluster_entries(mask: &PruneMask) -> Vec<usize> {
    let mut out = Vec::new();
    for j in 0..mask.n_hidden {
        for (start, len) in mask.row_runs(j) {
            if len >= CLUSTER_MIN_RUN {
                out.extend((start..start + len).map(|i| j * mask.n_visible + i));
            }
        }
    }
    out
}

/// Moves `break_fraction` of the in-cluster active entries to random
/// positions that were inactive in `mask`, keeping the active count fixed.
/// When fewer inactive positions exist than entries to move, only that many
/// are moved.
pub fn cluster_ablation(mask: &PruneMask, break_fraction: f64, seed: u64) -> Result<PruneMask> {
    if !(0.0..=1.0).contains(&break_fraction) {
        return Err(Error::InvalidInput(format!(
            "break fraction {break_fraction} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sources = cluster_entries(mask);
    let mut destinations: Vec<usize> = (0..mask.total()).filter(|&k| !mask.active[k]).collect();
    let moves = ((break_fraction * sources.len() as f64).round() as usize).min(destinations.len());
    sources.shuffle(&mut rng);
    destinations.shuffle(&mut rng);
    let mut out = mask.clone();
    for (&from, &to) in sources[..moves].iter().zip(&destinations[..moves]) {
        out.active[from] = false;
        out.active[to] = true;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rbm::init_rbm;

    #[test]
    fn first_prune_step_of_18_by_9() {
        let mut model = init_rbm(18, 9, 0).unwrap();
        let mask = PruneMask::dense(18, 9);
        let next = magnitude_prune_step(&mut model, &mask, 0.1).unwrap();
        assert_eq!(next.active_count(), 146);
        assert!((100.0 * next.fraction_remaining() - 90.1).abs() < 0.05);
        for k in 0..162 {
            if !next.active()[k] {
                assert_eq!(model.weights()[k], 0.0);
            }
        }
        assert_eq!(next.provenance, MaskProvenance::Pruned);
        assert_eq!(next.seed, Some(0));
    }

    #[test]
    fn equal_magnitudes_prune_lexicographically() {
        let mut model = RbmModel::from_parts(5, 4, vec![0.5; 20], vec![0.0; 5], vec![0.0; 4], 0).unwrap();
        let next = magnitude_prune_step(&mut model, &PruneMask::dense(5, 4), 0.1).unwrap();
        assert_eq!(next.active_count(), 18);
        assert!(!next.get(0, 0) && !next.get(0, 1));
        assert!(next.get(0, 2));
    }

    #[test]
    fn tiny_fraction_is_a_no_op() {
        let mut model = init_rbm(4, 2, 5).unwrap();
        let before = model.clone();
        let mask = PruneMask::dense(4, 2);
        let next = magnitude_prune_step(&mut model, &mask, 0.1).unwrap();
        assert_eq!(next.active(), mask.active());
        assert_eq!(model, before);
    }

    #[test]
    fn pruning_an_empty_mask_fails() {
        let mut model = init_rbm(4, 2, 5).unwrap();
        assert!(matches!(
            magnitude_prune_step(&mut model, &PruneMask::empty(4, 2), 0.1),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn rounding_rules() {
        assert_eq!(PruneRounding::Floor.count(0.1, 98), 9);
        assert_eq!(PruneRounding::HalfEven.count(0.1, 98), 10);
        assert_eq!(PruneRounding::HalfEven.count(0.1, 85), 8);
        assert_eq!(PruneRounding::HalfEven.count(0.1, 95), 10);
        assert_eq!(PruneRounding::Floor.count(0.1, 60), 6);
        assert_eq!(PruneRounding::Floor.count(0.29, 100), 29);
    }

    #[test]
    fn schedule_reference_rows() {
        let rows = schedule_table(&PruneSchedule::default(), 162).unwrap();
        assert_eq!(rows.len(), 19);
        assert_eq!(rows[0].continuous_pct, 100.0);
        assert_eq!(rows[0].remaining, 162);
        assert!((rows[5].continuous_pct - 59.0).abs() < 0.05);
        assert!((rows[18].continuous_pct - 15.0).abs() < 0.05);
        assert_eq!(rows[1].remaining, 146);
        assert_eq!(rows[7].remaining, 81);
    }

    #[test]
    fn half_even_schedule_drops_below_spanning_tree_at_iteration_18() {
        let schedule = PruneSchedule {
            rounding: PruneRounding::HalfEven,
            ..PruneSchedule::default()
        };
        let rows = schedule_table(&schedule, 162).unwrap();
        assert!(rows[17].remaining >= 26);
        assert!(rows[18].remaining < 26);
    }

    #[test]
    fn dense_mask_is_connected() {
        assert!(PruneMask::dense(18, 9).is_connected());
        assert!(!PruneMask::empty(3, 2).is_connected());
    }

    #[test]
    fn cluster_mask_at_sixty_percent() {
        let mask = construct_cluster_mask(18, 9, 3, 0.6, 4).unwrap();
        assert_eq!(mask.active_count(), 97);
        assert!(mask.is_connected());
        assert!(mask.has_cluster_windows(3));
        assert_eq!(mask.provenance, MaskProvenance::Constructed);
        assert_eq!(mask, construct_cluster_mask(18, 9, 3, 0.6, 4).unwrap());
    }

    #[test]
    fn cluster_mask_full_width_is_dense() {
        let mask = construct_cluster_mask(8, 4, 8, 1.0, 0).unwrap();
        assert_eq!(mask.active_count(), 32);
    }

    #[test]
    fn cluster_mask_needs_bridges_for_sparse_hidden_layer() {
        // Two windows of 3 over 12 visibles leave gaps that need bridging.
        let mask = construct_cluster_mask(12, 2, 3, 13.0 / 24.0, 1).unwrap();
        assert!(mask.is_connected());
        assert!(mask.has_cluster_windows(3));
        assert_eq!(mask.active_count(), 13);
    }

    #[test]
    fn cluster_mask_rejects_infeasible_targets() {
        assert!(matches!(construct_cluster_mask(18, 9, 2, 0.6, 0), Err(Error::Constraint(_))));
        assert!(matches!(construct_cluster_mask(18, 9, 3, 0.1, 0), Err(Error::Constraint(_))));
        assert!(matches!(construct_cluster_mask(12, 2, 3, 0.5, 0), Err(Error::Constraint(_))));
    }

    #[test]
    fn transplant_records_seed_relation() {
        let mut trained = init_rbm(6, 3, 0).unwrap();
        let mask = magnitude_prune_step(&mut trained, &PruneMask::dense(6, 3), 0.4).unwrap();
        let (ss, m_ss) = transplant_mask(&mask, &init_rbm(6, 3, 0).unwrap()).unwrap();
        let (_, m_os) = transplant_mask(&mask, &init_rbm(6, 3, 1).unwrap()).unwrap();
        assert_eq!(m_ss.provenance, MaskProvenance::SpSameSeed);
        assert_eq!(m_os.provenance, MaskProvenance::SpOtherSeed);
        for k in 0..18 {
            if !mask.active()[k] {
                assert_eq!(ss.weights()[k], 0.0);
            }
        }
        let fresh = init_rbm(6, 3, 7).unwrap();
        let (same, _) = transplant_mask(&PruneMask::dense(6, 3), &fresh).unwrap();
        assert_eq!(same, fresh);
        assert!(transplant_mask(&PruneMask::dense(5, 3), &fresh).is_err());
    }

    #[test]
    fn ablation_identity_and_full_break() {
        let mask = construct_cluster_mask(18, 9, 3, 0.4, 2).unwrap();
        assert_eq!(cluster_ablation(&mask, 0.0, 1).unwrap(), mask);
        let original = cluster_entries(&mask);
        let broken = cluster_ablation(&mask, 1.0, 1).unwrap();
        assert_eq!(broken.active_count(), mask.active_count());
        assert!(original.iter().all(|&k| !broken.active()[k]));
    }

    #[test]
    fn mask_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.txt");
        let mask = construct_cluster_mask(10, 5, 3, 0.5, 9).unwrap();
        write_mask(&path, &mask, serde_json::json!({"cluster_size": 3})).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().all(|l| l.len() == 10));
        let (back, side) = read_mask(&path).unwrap();
        assert_eq!(back, mask);
        assert_eq!(side.params["cluster_size"], 3);
    }
}
