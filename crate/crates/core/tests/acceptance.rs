//! Acceptance criteria 1-9, one PASS/FAIL line each.
//!
//! Criteria 4-8 train and prune 18-site models and take over an hour on one
//! core. `RBMPRUNE_ACCEPTANCE=fast` skips them (reported as SKIP).

use std::time::Instant;

use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rbmprune::experiment::{build_data, run_pruning, ExperimentConfig, LoadedData};
use rbmprune::metrics::{
    correlation_profile, fidelity, fit_exponential, fit_power_law, kl_divergence, magnetizations,
    z2_occurrence_ratio, z2_occurrence_ratio_min_count, MetricsDetail, MetricsRecord,
};
use rbmprune::pruning::{
    cluster_ablation, construct_cluster_mask, is_connected, schedule_table, transplant_mask, MaskProvenance,
};
use rbmprune::rbm::{exact_gradient, init_rbm, sample_model, train, ExactDistribution, SamplingConfig};
use rbmprune::spin::DataSource;
use rbmprune::tfim::{groundstate, Wavefunction};
use rbmprune::{Dataset, PruneMask, PruneSchedule, RbmModel, TfimSpec, TrainConfig};

mod common;

/// Weights remaining (%) per pruning iteration at 10% per step, as published.
const PUBLISHED_SCHEDULE: [f64; 19] = [
    100.0, 90.0, 81.0, 72.9, 65.6, 59.0, 53.1, 47.8, 43.0, 38.7, 34.9, 31.4, 28.2, 25.4, 22.9, 20.6, 18.5, 16.7, 15.0,
];
const SCHEDULE_TOL_PCT: f64 = 0.05;
const SPANNING_TREE_EDGES: usize = 26;
const ENERGY_TOL: f64 = 1e-8;

const M_ABS_TARGET: f64 = 0.5;
const M_ABS_TOL: f64 = 0.05;
const M_MEAN_TOL: f64 = 0.02;
const M_MODE_TARGET: f64 = 0.75;
const Z2_RANGE: (f64, f64) = (0.79, 1.17);
/// Pairs with fewer observations are dominated by the upward bias of
/// count(v)/count(−v) at small counts.
const Z2_MIN_COUNT: usize = 10;

const N_SITES: usize = 18;
const N_HIDDEN: usize = 9;
const SEEDS: [u64; 3] = [0, 1, 2];
const OTHER_SEED: u64 = 100;
const DENSE_EPOCHS: usize = 300;
const FINETUNE_EPOCHS: usize = 50;
const KL_CADENCE: usize = 10;
/// 81 of 162 weights under floor rounding.
const HALF_ITER: usize = 7;
/// 98 of 162 weights (60.5%), the sparse-arm mask.
const SPARSE_ITER: usize = 5;
/// 45 of 162 weights (72.2% pruned), the first iteration past 70%.
const DEEP_ITER: usize = 13;
const PLATEAU_FACTOR: f64 = 2.0;
const SPARSE_KL_FACTOR: f64 = 3.0;
const CONVERGENCE_BAND: f64 = 0.10;

struct Outcome {
    id: usize,
    pass: Option<bool>,
    detail: String,
}

impl Outcome {
    fn check(id: usize, pass: bool, detail: String) -> Self {
        Self { id, pass: Some(pass), detail }
    }

    fn skip(id: usize) -> Self {
        Self {
            id,
            pass: None,
            detail: "skipped (RBMPRUNE_ACCEPTANCE=fast)".into(),
        }
    }

    fn print(&self) {
        let tag = match self.pass {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "SKIP",
        };
        println!("criterion {} {tag}: {}", self.id, self.detail);
    }
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn criterion_1() -> Outcome {
    let rows = schedule_table(&PruneSchedule::default(), N_SITES * N_HIDDEN).unwrap();
    let worst = rows
        .iter()
        .zip(PUBLISHED_SCHEDULE)
        .map(|(r, p)| (r.continuous_pct - p).abs())
        .fold(0.0, f64::max);
    Outcome::check(
        1,
        rows.len() == PUBLISHED_SCHEDULE.len() && worst <= SCHEDULE_TOL_PCT,
        format!("schedule table, worst deviation {worst:.4} pp (tol {SCHEDULE_TOL_PCT})"),
    )
}

fn caterpillar_tree() -> PruneMask {
    let mut m = PruneMask::empty(N_SITES, N_HIDDEN);
    for j in 0..N_HIDDEN {
        m.set(j, 2 * j, true);
        m.set(j, 2 * j + 1, true);
        if j > 0 {
            m.set(j, 2 * j - 1, true);
        }
    }
    m
}

fn criterion_2() -> Outcome {
    let tree = caterpillar_tree();
    let tree_ok = tree.active_count() == SPANNING_TREE_EDGES && is_connected(&tree, N_SITES, N_HIDDEN);
    let mut below = 0usize;
    let mut connected_below = 0usize;
    // Every tree minus one edge...
    for k in (0..tree.total()).filter(|&k| tree.active()[k]) {
        let mut m = tree.clone();
        m.set(k / N_SITES, k % N_SITES, false);
        below += 1;
        connected_below += is_connected(&m, N_SITES, N_HIDDEN) as usize;
    }
    // ...and random masks with 1..=25 active weights.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut slots: Vec<usize> = (0..N_SITES * N_HIDDEN).collect();
    for t in 0..20_000 {
        let count = if t % 2 == 0 { SPANNING_TREE_EDGES - 1 } else { rng.gen_range(1..SPANNING_TREE_EDGES) };
        slots.shuffle(&mut rng);
        let mut active = vec![false; N_SITES * N_HIDDEN];
        for &k in &slots[..count] {
            active[k] = true;
        }
        let m = PruneMask::from_active(N_SITES, N_HIDDEN, active, MaskProvenance::Constructed).unwrap();
        below += 1;
        connected_below += is_connected(&m, N_SITES, N_HIDDEN) as usize;
    }
    Outcome::check(
        2,
        tree_ok && connected_below == 0,
        format!(
            "26-edge spanning tree connected: {tree_ok}; {connected_below} of {below} masks with < 26 weights connected"
        ),
    )
}

fn criterion_3() -> Outcome {
    let e2 = groundstate(&TfimSpec::new(2, 1.0, 1.0).unwrap(), 1e-12).unwrap().energy;
    let two_site = (e2 + 5f64.sqrt()).abs();
    let mut worst: f64 = 0.0;
    for n in 2..=10 {
        for &h in &[0.5, 1.0, 2.0] {
            let spec = TfimSpec::new(n, 1.0, h).unwrap();
            let e = groundstate(&spec, 1e-10).unwrap().energy;
            worst = worst.max((e - common::dense_ground(&spec).0).abs());
        }
    }
    Outcome::check(
        3,
        two_site <= ENERGY_TOL && worst <= ENERGY_TOL,
        format!("|E(N=2) + sqrt5| = {two_site:.2e}; worst Lanczos vs dense gap N<=10: {worst:.2e} (tol {ENERGY_TOL:e})"),
    )
}

fn criterion_4(data: &LoadedData) -> Outcome {
    let mags = magnetizations(&data.dataset).unwrap();
    let step = 2.0 / N_SITES as f64;
    let (lo, hi) = mags.modes();
    let (lo, hi) = (lo.unwrap_or(f64::NAN), hi.unwrap_or(f64::NAN));
    let modes_ok = (lo + M_MODE_TARGET).abs() <= step + 1e-12 && (hi - M_MODE_TARGET).abs() <= step + 1e-12;
    let z2 = z2_occurrence_ratio_min_count(&data.dataset, Z2_MIN_COUNT).unwrap();
    let literal = z2_occurrence_ratio(&data.dataset).unwrap();
    let m_abs_ok = (mags.m_abs.mean - M_ABS_TARGET).abs() <= M_ABS_TOL;
    let m_ok = mags.m.mean.abs() <= M_MEAN_TOL;
    let z2_ok = (Z2_RANGE.0..=Z2_RANGE.1).contains(&z2.mean);
    Outcome::check(
        4,
        m_abs_ok && m_ok && modes_ok && z2_ok,
        format!(
            "<|m|> {:.4}, <m> {:+.4}, modes {lo:+.3}/{hi:+.3}, Z2 ratio {:.3} +- {:.3} over {} pairs with counts >= {Z2_MIN_COUNT} \
             (all pairs: {:.3} +- {:.3} over {})",
            mags.m_abs.mean, mags.m.mean, z2.mean, z2.std_dev, z2.n_samples, literal.mean, literal.std_dev, literal.n_samples
        ),
    )
}

fn metric_config(field: f64, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.n_sites = N_SITES;
    cfg.n_hidden = Some(N_HIDDEN);
    cfg.field = field;
    cfg.seed = seed;
    cfg.epochs = DENSE_EPOCHS;
    cfg.finetune_epochs = FINETUNE_EPOCHS;
    cfg.validate().unwrap();
    cfg
}

/// Trains and returns (epoch, KL) every `KL_CADENCE` epochs.
fn train_curve(model: &mut RbmModel, data: &Dataset, q: &[f64], cfg: &TrainConfig, mask: Option<&PruneMask>) -> Vec<(usize, f64)> {
    let mut curve = Vec::new();
    let last = cfg.epochs;
    train(model, data, cfg, mask, &mut |epoch: usize, m: &RbmModel| {
        if epoch % KL_CADENCE == 0 || epoch == last {
            curve.push((epoch, kl_divergence(q, m)?));
        }
        Ok(())
    })
    .unwrap();
    curve
}

/// First recorded epoch whose KL is within `CONVERGENCE_BAND` of the final KL.
fn convergence_epoch(curve: &[(usize, f64)]) -> usize {
    let target = (1.0 + CONVERGENCE_BAND) * curve.last().unwrap().1;
    curve.iter().find(|(_, kl)| *kl <= target).unwrap().0
}

struct Phase {
    field: f64,
    data: LoadedData,
    q: Vec<f64>,
    sweeps: Vec<Sweep>,
}

struct Sweep {
    dense_curve: Vec<(usize, f64)>,
    details: Vec<MetricsDetail>,
    masks: Vec<PruneMask>,
}

impl Phase {
    fn record(&self, seed_index: usize, iteration: usize) -> &MetricsRecord {
        &self.sweeps[seed_index].details[iteration].record
    }

    fn seed_mean(&self, iteration: usize, f: impl Fn(&MetricsRecord) -> f64) -> f64 {
        mean((0..self.sweeps.len()).map(|s| f(self.record(s, iteration))))
    }

    fn kl_floor(&self) -> f64 {
        let p = self.data.psi.as_ref().unwrap().probabilities();
        self.q.iter().zip(&p).filter(|(q, _)| **q > 0.0).map(|(q, p)| q * (q / p).ln()).sum()
    }
}

fn run_phase(field: f64) -> Phase {
    let t0 = Instant::now();
    let data = build_data(&metric_config(field, SEEDS[0])).unwrap();
    let q = data.dataset.empirical_distribution().unwrap();
    let mut sweeps = Vec::new();
    for &seed in &SEEDS {
        let cfg = metric_config(field, seed);
        let mut model = init_rbm(N_SITES, N_HIDDEN, seed).unwrap();
        let dense_curve = train_curve(&mut model, &data.dataset, &q, &cfg.train_config(), None);
        let run = run_pruning(&cfg, &data, &mut model).unwrap();
        println!(
            "  h/J={field} seed {seed}: dense KL {:.4}, iteration {HALF_ITER} KL {:.4}, {:.0} s elapsed",
            dense_curve.last().unwrap().1,
            run.details[HALF_ITER].record.kl.unwrap(),
            t0.elapsed().as_secs_f64()
        );
        sweeps.push(Sweep {
            dense_curve,
            details: run.details,
            masks: run.masks,
        });
    }
    Phase { field, data, q, sweeps }
}

fn print_sweep_table(p: &Phase) {
    println!("  h/J={} seed-mean sweep (floor KL {:.4}):", p.field, p.kl_floor());
    println!("    iter  remaining      KL     1-F     mROE    C_MSE     eROE");
    for k in 0..p.sweeps[0].details.len() {
        println!(
            "    {k:>4}  {:>8.1}%  {:.4}  {:.4}  {:.5}  {:.2e}  {:.5}",
            100.0 * p.record(0, k).frac_remaining,
            p.seed_mean(k, |r| r.kl.unwrap()),
            p.seed_mean(k, |r| r.infidelity().unwrap()),
            p.seed_mean(k, |r| r.mroe),
            p.seed_mean(k, |r| r.c_mse_norm),
            p.seed_mean(k, |r| r.eroe.unwrap()),
        );
    }
}

type Measure = (&'static str, fn(&MetricsRecord) -> f64);

const ERROR_MEASURES: [Measure; 4] = [
    ("KL", |r| r.kl.unwrap()),
    ("1-F", |r| r.infidelity().unwrap()),
    ("mROE", |r| r.mroe),
    ("C_MSE", |r| r.c_mse_norm),
];

fn criterion_5(ferro: &Phase, para: &Phase) -> Outcome {
    let mut ordering_ok = true;
    let mut parts = Vec::new();
    for (name, f) in ERROR_MEASURES {
        let (a, b) = (para.seed_mean(HALF_ITER, f), ferro.seed_mean(HALF_ITER, f));
        ordering_ok &= a < b;
        parts.push(format!("{name} {a:.3e} vs {b:.3e}"));
    }
    let kl_ratio = |p: &Phase| p.seed_mean(HALF_ITER, |r| r.kl.unwrap()) / p.seed_mean(0, |r| r.kl.unwrap());
    let (rp, rf) = (kl_ratio(para), kl_ratio(ferro));
    let pass = ordering_ok && rp <= PLATEAU_FACTOR && rf > PLATEAU_FACTOR;
    Outcome::check(
        5,
        pass,
        format!(
            "at 50% remaining, h/J=2 vs h/J=1: {}; KL(50%)/KL(dense) = {rp:.3} at h/J=2 (need <= {PLATEAU_FACTOR}), \
             {rf:.3} at h/J=1 (need > {PLATEAU_FACTOR}); KL floors {:.3} / {:.3}",
            parts.join(", "),
            para.kl_floor(),
            ferro.kl_floor()
        ),
    )
}

fn criterion_6(ferro: &Phase) -> Outcome {
    let iters = ferro.sweeps[0].details.len();
    let first_exceed = |f: fn(&MetricsRecord) -> f64| {
        let plateau = ferro.seed_mean(0, f);
        (1..iters).find(|&k| ferro.seed_mean(k, f) > PLATEAU_FACTOR * plateau)
    };
    let order: [Measure; 4] = [
        ("mROE", |r| r.mroe),
        ("C_MSE", |r| r.c_mse_norm),
        ("KL", |r| r.kl.unwrap()),
        ("eROE", |r| r.eroe.unwrap()),
    ];
    let ks: Vec<Option<usize>> = order.iter().map(|(_, f)| first_exceed(*f)).collect();
    let key = |k: Option<usize>| k.unwrap_or(usize::MAX);
    // The most sensitive measure has to actually degrade within the sweep.
    let pass = ks[0].is_some() && ks.windows(2).all(|w| key(w[0]) <= key(w[1]));
    let shown: Vec<String> = order
        .iter()
        .zip(&ks)
        .map(|((n, _), k)| format!("{n} {}", k.map_or("never".into(), |k| k.to_string())))
        .collect();
    Outcome::check(
        6,
        pass,
        format!("first iteration above {PLATEAU_FACTOR}x plateau at h/J=1: {} (need non-decreasing)", shown.join(", ")),
    )
}

fn criterion_7(ferro: &Phase) -> Outcome {
    let profile = |k: usize| -> Vec<f64> {
        let len = ferro.sweeps[0].details[k].correlations.len();
        (0..len).map(|d| mean(ferro.sweeps.iter().map(|s| s.details[k].correlations[d]))).collect()
    };
    let (dense, deep) = (profile(0), profile(DEEP_ITER));
    let (de, dp) = (fit_exponential(&dense).unwrap(), fit_power_law(&dense).unwrap());
    let (pe, pp) = (fit_exponential(&deep).unwrap(), fit_power_law(&deep).unwrap());
    let pruned_pct = 100.0 * (1.0 - ferro.record(0, DEEP_ITER).frac_remaining);
    Outcome::check(
        7,
        pe.sse < pp.sse && dp.sse <= de.sse,
        format!(
            "h/J=1 C(d) fit SSE exp/power: dense {:.3e}/{:.3e}, {pruned_pct:.1}% pruned {:.3e}/{:.3e}",
            de.sse, dp.sse, pe.sse, pp.sse
        ),
    )
}

fn criterion_8(ferro: &Phase, para: &Phase) -> Outcome {
    let t0 = Instant::now();
    let sp_ss = |p: &Phase| {
        let cfg = metric_config(p.field, SEEDS[0]);
        let mask = &p.sweeps[0].masks[SPARSE_ITER];
        let (mut model, mask) = transplant_mask(mask, &init_rbm(N_SITES, N_HIDDEN, SEEDS[0]).unwrap()).unwrap();
        assert_eq!(mask.provenance, MaskProvenance::SpSameSeed);
        train_curve(&mut model, &p.data.dataset, &p.q, &cfg.train_config(), Some(&mask))
    };
    let ss_ferro = sp_ss(ferro);
    let ss_para = sp_ss(para);

    let cfg_os = metric_config(para.field, OTHER_SEED);
    let (mut os_model, os_mask) = transplant_mask(
        &para.sweeps[0].masks[SPARSE_ITER],
        &init_rbm(N_SITES, N_HIDDEN, OTHER_SEED).unwrap(),
    )
    .unwrap();
    let os_para = train_curve(&mut os_model, &para.data.dataset, &para.q, &cfg_os.train_config(), Some(&os_mask));

    let sc_mask = construct_cluster_mask(N_SITES, N_HIDDEN, 3, 0.6, 0).unwrap();
    let mut sc_model = init_rbm(N_SITES, N_HIDDEN, SEEDS[0]).unwrap();
    sc_model.apply_mask(&sc_mask).unwrap();
    let cfg = metric_config(para.field, SEEDS[0]);
    let sc_para = train_curve(&mut sc_model, &para.data.dataset, &para.q, &cfg.train_config(), Some(&sc_mask));
    println!("  sparse arms trained in {:.0} s", t0.elapsed().as_secs_f64());

    let pruned_kl = para.seed_mean(SPARSE_ITER, |r| r.kl.unwrap());
    let finals = [("sp/ss", &ss_para), ("sp/os", &os_para), ("sc", &sc_para)];
    let kl_ok = finals.iter().all(|(_, c)| c.last().unwrap().1 <= SPARSE_KL_FACTOR * pruned_kl);
    let conv = |c: &[(usize, f64)]| convergence_epoch(c);
    let (ssf, df) = (conv(&ss_ferro), conv(&ferro.sweeps[0].dense_curve));
    let (ssp, dp) = (conv(&ss_para), conv(&para.sweeps[0].dense_curve));
    let shown: Vec<String> = finals.iter().map(|(n, c)| format!("{n} {:.4}", c.last().unwrap().1)).collect();
    Outcome::check(
        8,
        kl_ok && ssf < df && ssp < dp,
        format!(
            "h/J=2 final KL {} vs pruned {pruned_kl:.4} (limit x{SPARSE_KL_FACTOR}); epochs to within {:.0}% of final KL, \
             sp/ss vs dense: h/J=1 {ssf} vs {df}, h/J=2 {ssp} vs {dp}",
            shown.join(", "),
            100.0 * CONVERGENCE_BAND
        ),
    )
}

fn random_model(nv: usize, nh: usize, seed: u64) -> RbmModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |len: usize| (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
    let (w, b, c) = (draw(nv * nh), draw(nv), draw(nh));
    RbmModel::from_parts(nv, nh, w, b, c, seed).unwrap()
}

fn union_find_connected(mask: &PruneMask) -> bool {
    let (nv, nh) = (mask.n_visible(), mask.n_hidden());
    let mut parent: Vec<usize> = (0..nv + nh).collect();
    fn root(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            x = p[x];
        }
        x
    }
    for h in 0..nh {
        for v in 0..nv {
            if mask.get(h, v) {
                let (a, b) = (root(&mut parent, v), root(&mut parent, nv + h));
                parent[a] = b;
            }
        }
    }
    let r = root(&mut parent, 0);
    (0..nv + nh).all(|x| root(&mut parent, x) == r)
}

fn criterion_9() -> Outcome {
    let mut failed: Vec<&str> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(9);

    let mut grad_err: f64 = 0.0;
    for seed in 0..3 {
        let m = random_model(6, 3, seed);
        let raw: Vec<f64> = (0..64).map(|_| rng.gen::<f64>() + 0.01).collect();
        let total: f64 = raw.iter().sum();
        let q: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let g = exact_gradient(&m, &q).unwrap();
        let eps = 1e-5;
        for k in 0..18 {
            let (mut a, mut b) = (m.clone(), m.clone());
            a.weights_mut()[k] += eps;
            b.weights_mut()[k] -= eps;
            let fd = (kl_divergence(&q, &a).unwrap() - kl_divergence(&q, &b).unwrap()) / (2.0 * eps);
            grad_err = grad_err.max((fd - g.weights[k]).abs());
        }
        for i in 0..6 {
            let (mut a, mut b) = (m.clone(), m.clone());
            a.visible_bias_mut()[i] += eps;
            b.visible_bias_mut()[i] -= eps;
            let fd = (kl_divergence(&q, &a).unwrap() - kl_divergence(&q, &b).unwrap()) / (2.0 * eps);
            grad_err = grad_err.max((fd - g.visible_bias[i]).abs());
        }
        for j in 0..3 {
            let (mut a, mut b) = (m.clone(), m.clone());
            a.hidden_bias_mut()[j] += eps;
            b.hidden_bias_mut()[j] -= eps;
            let fd = (kl_divergence(&q, &a).unwrap() - kl_divergence(&q, &b).unwrap()) / (2.0 * eps);
            grad_err = grad_err.max((fd - g.hidden_bias[j]).abs());
        }
        if kl_divergence(&q, &m).unwrap() < -1e-12 {
            failed.push("KL >= 0");
        }
        let dist = ExactDistribution::new(&m).unwrap();
        if kl_divergence(&dist.probabilities(), &m).unwrap().abs() > 1e-10 {
            failed.push("KL(p, p) = 0");
        }
        let amps = dist.amplitudes();
        if (amps.iter().map(|a| a * a).sum::<f64>() - 1.0).abs() > 1e-10 {
            failed.push("sum psi^2 = 1");
        }
        let self_f = fidelity(&m, &Wavefunction::new(6, amps).unwrap()).unwrap();
        let other: Vec<f64> = raw.iter().map(|x| x.sqrt() / total.sqrt()).collect();
        let f = fidelity(&m, &Wavefunction::new(6, other).unwrap()).unwrap();
        if (self_f - 1.0).abs() > 1e-8 || !(0.0..=1.0 + 1e-10).contains(&f) {
            failed.push("fidelity bounds");
        }
    }
    if grad_err > 1e-5 {
        failed.push("exact gradient vs finite differences");
    }

    let mask = PruneMask::from_active(6, 3, (0..18).map(|k| k % 3 != 0).collect(), MaskProvenance::Constructed).unwrap();
    let idx: Vec<usize> = (0..300).map(|_| rng.gen_range(0..64)).collect();
    let data = Dataset::from_indices(&idx, 6, DataSource::Imported, None);
    let cfg = TrainConfig {
        epochs: 5,
        batch_size: 30,
        seed: 4,
        ..TrainConfig::default()
    };
    let trained = |mask: Option<&PruneMask>| {
        let mut m = init_rbm(6, 3, 1).unwrap();
        let mut leaked = 0usize;
        train(&mut m, &data, &cfg, mask, &mut |_: usize, m: &RbmModel| {
            if let Some(mask) = mask {
                leaked += m.weights().iter().zip(mask.active()).filter(|(w, on)| !**on && **w != 0.0).count();
            }
            Ok(())
        })
        .unwrap();
        (m, leaked)
    };
    let (a, leaked) = trained(Some(&mask));
    if leaked != 0 {
        failed.push("mask preservation");
    }
    let s = SamplingConfig {
        burn_in: 10,
        thinning: 2,
        chains: 4,
    };
    if init_rbm(6, 3, 1).unwrap() != init_rbm(6, 3, 1).unwrap()
        || trained(None).0 != trained(None).0
        || a != trained(Some(&mask)).0
        || sample_model(&a, 100, &s, 2).unwrap() != sample_model(&a, 100, &s, 2).unwrap()
    {
        failed.push("seed determinism");
    }

    let mut conn_mismatch = 0usize;
    for &(nv, nh) in &[(3usize, 3usize), (4, 2), (6, 2), (2, 5)] {
        for bits in 0u64..1 << (nv * nh) {
            let active = (0..nv * nh).map(|k| bits >> k & 1 == 1).collect();
            let m = PruneMask::from_active(nv, nh, active, MaskProvenance::Constructed).unwrap();
            conn_mismatch += (is_connected(&m, nv, nh) != union_find_connected(&m)) as usize;
        }
    }
    for _ in 0..2000 {
        let active = (0..32).map(|_| rng.gen_bool(0.3)).collect();
        let m = PruneMask::from_active(8, 4, active, MaskProvenance::Constructed).unwrap();
        conn_mismatch += (is_connected(&m, 8, 4) != union_find_connected(&m)) as usize;
        let ablated = cluster_ablation(&m, rng.gen(), rng.gen()).unwrap();
        if ablated.active_count() != m.active_count() {
            failed.push("cluster ablation conserves count");
        }
    }
    if conn_mismatch > 0 {
        failed.push("connectivity vs brute force");
    }

    for n in [2usize, 5, 8, 11] {
        let idx: Vec<usize> = (0..200).map(|_| rng.gen_range(0..1 << n)).collect();
        let d = Dataset::from_indices(&idx, n, DataSource::Imported, None);
        let mags = magnetizations(&d).unwrap();
        if mags.m.mean.abs() > mags.m_abs.mean + 1e-12 {
            failed.push("|<m>| <= <|m|>");
        }
        let r = rbmprune::metrics::correlation_reference_site(n);
        let s_mean = mean(d.iter().map(|v| if v[r] == 1 { 1.0 } else { -1.0 }));
        if (correlation_profile(&d).unwrap().values[0] - (1.0 - s_mean * s_mean)).abs() > 1e-12 {
            failed.push("C(0) = midpoint variance");
        }
    }
    failed.dedup();
    Outcome::check(
        9,
        failed.is_empty(),
        if failed.is_empty() {
            format!("fast invariants hold (gradient FD gap {grad_err:.1e})")
        } else {
            format!("violated: {}", failed.join(", "))
        },
    )
}

fn main() {
    let fast = std::env::var("RBMPRUNE_ACCEPTANCE").is_ok_and(|v| v == "fast");
    let mut outcomes = vec![criterion_1(), criterion_2(), criterion_3()];
    if fast {
        outcomes.extend((4..=8).map(Outcome::skip));
    } else {
        println!(
            "running sweeps: N={N_SITES}, N_h={N_HIDDEN}, seeds {SEEDS:?}, {DENSE_EPOCHS} dense epochs, \
             {FINETUNE_EPOCHS} fine-tune epochs per iteration"
        );
        let ferro = run_phase(1.0);
        outcomes.push(criterion_4(&ferro.data));
        let para = run_phase(2.0);
        print_sweep_table(&ferro);
        print_sweep_table(&para);
        outcomes.push(criterion_5(&ferro, &para));
        outcomes.push(criterion_6(&ferro));
        outcomes.push(criterion_7(&ferro));
        outcomes.push(criterion_8(&ferro, &para));
    }
    outcomes.push(criterion_9());
    println!();
    for o in &outcomes {
        o.print();
    }
    let failures = outcomes.iter().filter(|o| o.pass == Some(false)).count();
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
