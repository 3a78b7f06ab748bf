//! Exact ground states of the open-chain transverse-field Ising model
//!
//! H = −J Σ⟨ij⟩ σᶻᵢσᶻⱼ + h Σᵢ σˣᵢ
//!
//! on `N` sites with `N − 1` nearest-neighbour bonds. Ground states come from
//! a matrix-free restarted Lanczos solver and are reported in the sign gauge
//! where every amplitude is non-negative (the unitary Πᵢσᶻᵢ flips the sign of
//! the field term, which makes the Hamiltonian stoquastic; probabilities and
//! the spectrum are unchanged).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{correlation_reference_site, profile_len};
use crate::spin::{DataSource, Dataset, MAX_INDEXED_SITES};

/// Cap on Hamiltonian applications per ground-state solve.
pub const MAX_MATVECS: usize = 5000;
pub const DEFAULT_TOL: f64 = 1e-10;
const KRYLOV_DIM: usize = 40;
const START_SEED: u64 = 0x7f1a_5eed;
const PSI_MAGIC: &[u8; 8] = b"TFIMPSI\0";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TfimSpec {
    pub n_sites: usize,
    pub coupling: f64,
    pub field: f64,
}

impl TfimSpec {
    pub fn new(n_sites: usize, coupling: f64, field: f64) -> Result<Self> {
        if n_sites < 2 {
            return Err(Error::InvalidInput(format!("n_sites must be >= 2, got {n_sites}")));
        }
        if !(coupling > 0.0 && coupling.is_finite()) {
            return Err(Error::InvalidInput(format!("coupling J must be > 0, got {coupling}")));
        }
        if !(field >= 0.0 && field.is_finite()) {
            return Err(Error::InvalidInput(format!("field h must be >= 0, got {field}")));
        }
        Ok(Self {
            n_sites,
            coupling,
            field,
        })
    }

    pub fn dim(&self) -> usize {
        1usize << self.n_sites
    }

    fn check_exact(&self) -> Result<()> {
        if self.n_sites > MAX_INDEXED_SITES {
            return Err(Error::Capability(format!(
                "exact diagonalization supports n_sites <= {MAX_INDEXED_SITES}, got {}",
                self.n_sites
            )));
        }
        Ok(())
    }

    /// Diagonal element −J Σ sᵢsᵢ₊₁ for basis state `index`.
    #[inline]
    pub fn diagonal(&self, index: usize) -> f64 {
        let bonds = self.n_sites - 1;
        let walls = ((index ^ (index >> 1)) & ((1usize << bonds) - 1)).count_ones() as f64;
        -self.coupling * (bonds as f64 - 2.0 * walls)
    }
}

/// Real amplitudes over the σᶻ basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Wavefunction {
    n_sites: usize,
    amplitudes: Vec<f64>,
}

impl Wavefunction {
    pub fn new(n_sites: usize, amplitudes: Vec<f64>) -> Result<Self> {
        if n_sites > MAX_INDEXED_SITES || amplitudes.len() != 1usize << n_sites {
            return Err(Error::InvalidInput(format!(
                "wavefunction over {n_sites} sites needs 2^{n_sites} amplitudes, got {}",
                amplitudes.len()
            )));
        }
        let norm: f64 = amplitudes.iter().map(|a| a * a).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidInput(format!("wavefunction norm² is {norm}, expected 1")));
        }
        Ok(Self {
            n_sites,
            amplitudes,
        })
    }

    /// A single basis state |index⟩.
    pub fn basis_state(n_sites: usize, index: usize) -> Result<Self> {
        let mut amps = vec![0.0; 1usize << n_sites];
        *amps
            .get_mut(index)
            .ok_or_else(|| Error::InvalidInput(format!("basis index {index} out of range")))? = 1.0;
        Self::new(n_sites, amps)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a * a).collect()
    }

    /// Binary cache: `TFIMPSI\0`, u32 N, u32 reserved, 2^N little-endian f64.
    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(16 + 8 * self.amplitudes.len());
        buf.extend_from_slice(PSI_MAGIC);
        buf.extend_from_slice(&(self.n_sites as u32).to_le_bytes());
        buf.extend_from_slice(&0u32.to_le_bytes());
        for a in &self.amplitudes {
            buf.extend_from_slice(&a.to_le_bytes());
        }
        fs::File::create(path)
            .and_then(|mut f| f.write_all(&buf))
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn read_cache(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let bad = |message: &str| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: message.to_string(),
        };
        if buf.len() < 16 || &buf[..8] != PSI_MAGIC {
            return Err(bad("missing TFIMPSI header"));
        }
        let n_sites = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
        if n_sites > MAX_INDEXED_SITES || buf.len() != 16 + 8 * (1usize << n_sites) {
            return Err(bad("payload length does not match header"));
        }
        let amplitudes = buf[16..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(n_sites, amplitudes)
    }
}

/// Matrix-free H·v.
pub fn apply_hamiltonian(spec: &TfimSpec, v: &[f64]) -> Result<Vec<f64>> {
    spec.check_exact()?;
    if v.len() != spec.dim() {
        return Err(Error::InvalidInput(format!(
            "vector length {} does not match 2^{} = {}",
            v.len(),
            spec.n_sites,
            spec.dim()
        )));
    }
    let mut out = vec![0.0; v.len()];
    apply_into(spec, spec.field, v, &mut out);
    Ok(out)
}

/// Writes H·v into `out` using `field` as the off-diagonal coefficient.
fn apply_into(spec: &TfimSpec, field: f64, v: &[f64], out: &mut [f64]) {
    const CHUNK: usize = 1 << 12;
    let n = spec.n_sites;
    out.par_chunks_mut(CHUNK)
        .enumerate()
        .for_each(|(chunk, block)| {
            let base = chunk * CHUNK;
            for (offset, slot) in block.iter_mut().enumerate() {
                let x = base + offset;
                let mut acc = spec.diagonal(x) * v[x];
                if field != 0.0 {
                    let mut flips = 0.0;
                    for i in 0..n {
                        flips += v[x ^ (1 << i)];
                    }
                    acc += field * flips;
                }
                *slot = acc;
            }
        });
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

#[derive(Debug, Clone)]
pub struct GroundState {
    pub energy: f64,
    pub psi: Wavefunction,
    /// ‖Hψ − Eψ‖ of the converged eigenvector in the stoquastic form.
    pub residual: f64,
    pub matvecs: usize,
}

/// Lowest eigenpair of H by restarted Lanczos with full reorthogonalization.
///
/// The returned amplitudes are the non-negative ground state of the
/// stoquastic form. The Krylov space is seeded in the flip-even sector,
/// which contains that state for h > 0.
pub fn groundstate(spec: &TfimSpec, tol: f64) -> Result<GroundState> {
    spec.check_exact()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be > 0, got {tol}")));
    }
    // Iterate on the unitarily equivalent stoquastic form (field −h): its
    // ground state is positive and flip-even for every N.
    let field = -spec.field;
    let dim = spec.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut x: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() - 0.5).collect();
    let full = dim - 1;
    for i in 0..dim / 2 {
        let s = x[i] + x[i ^ full];
        x[i] = s;
        x[i ^ full] = s;
    }
    let nx = norm(&x);
    x.iter_mut().for_each(|a| *a /= nx);

    let m = KRYLOV_DIM.min(dim);
    let mut matvecs = 0usize;
    let mut w = vec![0.0; dim];
    loop {
        apply_into(spec, field, &x, &mut w);
        matvecs += 1;
        let theta = dot(&x, &w);
        let residual = w
            .iter()
            .zip(&x)
            .map(|(hw, xi)| (hw - theta * xi).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= tol {
            let amplitudes: Vec<f64> = x.iter().map(|a| a.abs()).collect();
            let nrm = norm(&amplitudes);
            let psi = Wavefunction::new(
                spec.n_sites,
                amplitudes.into_iter().map(|a| a / nrm).collect(),
            )?;
            return Ok(GroundState {
                energy: theta,
                psi,
                residual,
                matvecs,
            });
        }
        if matvecs >= MAX_MATVECS {
            return Err(Error::Convergence { residual, matvecs });
        }

        // One Lanczos cycle started from the current Ritz vector; `w` holds H·x.
        let mut basis: Vec<Vec<f64>> = vec![x.clone()];
        let mut alpha = Vec::with_capacity(m);
        let mut beta: Vec<f64> = Vec::with_capacity(m);
        for j in 0..m {
            let a = dot(&basis[j], &w);
            alpha.push(a);
            axpy(-a, &basis[j], &mut w);
            if j > 0 {
                axpy(-beta[j - 1], &basis[j - 1], &mut w);
            }
            for _ in 0..2 {
                for q in &basis {
                    let overlap = dot(q, &w);
                    axpy(-overlap, q, &mut w);
                }
            }
            let b = norm(&w);
            if j + 1 == m || b < 1e-12 || matvecs >= MAX_MATVECS {
                break;
            }
            beta.push(b);
            let q: Vec<f64> = w.iter().map(|wi| wi / b).collect();
            apply_into(spec, field, &q, &mut w);
            matvecs += 1;
            basis.push(q);
        }

        let k = alpha.len();
        let t = DMatrix::from_fn(k, k, |r, c| {
            if r == c {
                alpha[r]
            } else if r + 1 == c {
                beta[r]
            } else if c + 1 == r {
                beta[c]
            } else {
                0.0
            }
        });
        let eig = t.symmetric_eigen();
        let lowest = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("non-empty tridiagonal matrix");
        let y = eig.eigenvectors.column(lowest);
        x.iter_mut().for_each(|a| *a = 0.0);
        for (coef, q) in y.iter().zip(&basis) {
            axpy(*coef, q, &mut x);
        }
        let nx = norm(&x);
        x.iter_mut().for_each(|a| *a /= nx);
    }
}

/// Draws `n` i.i.d. configurations with probability ψ(σ)².
pub fn born_sample(psi: &Wavefunction, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidInput("sample count must be >= 1".into()));
    }
    let dist = WeightedIndex::new(psi.probabilities())
        .map_err(|e| Error::InvalidInput(format!("invalid Born distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices: Vec<usize> = (0..n).map(|_| dist.sample(&mut rng)).collect();
    Ok(Dataset::from_indices(
        &indices,
        psi.n_sites(),
        DataSource::Oracle,
        Some(seed),
    ))
}

/// Ground-truth expectation values by exact summation over the basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactObservables {
    pub energy: f64,
    pub m_mean: f64,
    pub m_abs_mean: f64,
    /// C(d) measured from the lattice midpoint, d = 0..N/2.
    pub correlations: Vec<f64>,
}

/// Exact ⟨H⟩, ⟨m⟩, ⟨|m|⟩ and C(d) of `psi`.
///
/// The energy is evaluated with the stoquastic form of H (field term −h),
/// i.e. in the gauge where ground-state amplitudes are non-negative.
pub fn exact_observables(spec: &TfimSpec, psi: &Wavefunction) -> Result<ExactObservables> {
    if spec.n_sites != psi.n_sites() {
        return Err(Error::InvalidInput(format!(
            "spec has {} sites, wavefunction has {}",
            spec.n_sites,
            psi.n_sites()
        )));
    }
    let n = spec.n_sites;
    let amps = psi.amplitudes();
    let mut h_psi = vec![0.0; amps.len()];
    apply_into(spec, -spec.field, amps, &mut h_psi);
    let energy = dot(amps, &h_psi);

    let r = correlation_reference_site(n);
    let len = profile_len(n);
    let mut m_mean = 0.0;
    let mut m_abs_mean = 0.0;
    let mut single = vec![0.0; n];
    let mut pair = vec![0.0; len];
    for (x, a) in amps.iter().enumerate() {
        let p = a * a;
        if p == 0.0 {
            continue;
        }
        let m = (2.0 * x.count_ones() as f64 - n as f64) / n as f64;
        m_mean += p * m;
        m_abs_mean += p * m.abs();
        let s = |i: usize| if (x >> i) & 1 == 1 { 1.0 } else { -1.0 };
        for (i, acc) in single.iter_mut().enumerate() {
            *acc += p * s(i);
        }
        let sr = s(r);
        for (d, acc) in pair.iter_mut().enumerate() {
            *acc += p * sr * s(r + d);
        }
    }
    let correlations = (0..len)
        .map(|d| pair[d] - single[r] * single[r + d])
        .collect();
    Ok(ExactObservables {
        energy,
        m_mean,
        m_abs_mean,
        correlations,
    })
}
