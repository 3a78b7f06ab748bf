//! Spin configurations and measurement datasets.
//!
//! A configuration stores one bit per site: `1` is σᶻ = +1 (up), `0` is
//! σᶻ = −1 (down). When a configuration is mapped to a computational-basis
//! index, site `i` is bit `i` of the index.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest system for which configurations are addressed by basis index.
pub const MAX_INDEXED_SITES: usize = 20;

/// One projective σᶻ measurement of an `N`-site chain.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpinConfiguration(Vec<u8>);

impl SpinConfiguration {
    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidInput("spin bits must be 0 or 1".into()));
        }
        Ok(Self(bits))
    }

    /// Configuration for a basis index of an `n_sites` chain.
    pub fn from_index(index: usize, n_sites: usize) -> Self {
        Self((0..n_sites).map(|i| ((index >> i) & 1) as u8).collect())
    }

    /// Builds a configuration from ±1 spins.
    pub fn from_spins(spins: &[i8]) -> Result<Self> {
        spins
            .iter()
            .map(|&s| match s {
                1 => Ok(1),
                -1 => Ok(0),
                other => Err(Error::InvalidInput(format!("spin value {other} is not ±1"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn all_up(n_sites: usize) -> Self {
        Self(vec![1; n_sites])
    }

    pub fn n_sites(&self) -> usize {
        self.0.len()
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    /// σᶻ eigenvalue of site `i`.
    pub fn spin(&self, i: usize) -> i8 {
        spin_of(self.0[i])
    }

    pub fn index(&self) -> Result<usize> {
        if self.0.len() > MAX_INDEXED_SITES {
            return Err(Error::Capability(format!(
                "basis index needs n_sites <= {MAX_INDEXED_SITES}, got {}",
                self.0.len()
            )));
        }
        Ok(bits_to_index(&self.0))
    }

    /// The global spin flip −v.
    pub fn flipped(&self) -> Self {
        Self(self.0.iter().map(|b| 1 - b).collect())
    }

    pub fn magnetization(&self) -> f64 {
        magnetization(&self.0)
    }
}

impl fmt::Display for SpinConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn spin_of(bit: u8) -> i8 {
    2 * bit as i8 - 1
}

#[inline]
pub(crate) fn bits_to_index(bits: &[u8]) -> usize {
    bits.iter()
        .enumerate()
        .fold(0usize, |acc, (i, &b)| acc | ((b as usize) << i))
}

/// Per-configuration magnetization m = (1/N) Σ σᶻᵢ.
pub(crate) fn magnetization(bits: &[u8]) -> f64 {
    spin_sum(bits) as f64 / bits.len() as f64
}

pub(crate) fn spin_sum(bits: &[u8]) -> i64 {
    let ups = bits.iter().filter(|&&b| b == 1).count() as i64;
    2 * ups - bits.len() as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Oracle,
    Imported,
    Model,
}

/// An ordered list of configurations over a fixed number of sites.
///
/// Samples are stored flat, `n_sites` bits per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_sites: usize,
    bits: Vec<u8>,
    pub source: DataSource,
    pub seed: Option<u64>,
}

impl Dataset {
    pub fn new(n_sites: usize, source: DataSource, seed: Option<u64>) -> Self {
        Self {
            n_sites,
            bits: Vec::new(),
            source,
            seed,
        }
    }

    pub fn from_configurations(
        configs: &[SpinConfiguration],
        source: DataSource,
        seed: Option<u64>,
    ) -> Result<Self> {
        let n_sites = configs
            .first()
            .map(|c| c.n_sites())
            .ok_or_else(|| Error::InvalidInput("empty configuration list".into()))?;
        let mut data = Self::new(n_sites, source, seed);
        for c in configs {
            data.push(c.bits())?;
        }
        Ok(data)
    }

    pub fn from_indices(
        indices: &[usize],
        n_sites: usize,
        source: DataSource,
        seed: Option<u64>,
    ) -> Self {
        let mut bits = Vec::with_capacity(indices.len() * n_sites);
        for &idx in indices {
            bits.extend((0..n_sites).map(|i| ((idx >> i) & 1) as u8));
        }
        Self {
            n_sites,
            bits,
            source,
            seed,
        }
    }

    pub fn push(&mut self, sample: &[u8]) -> Result<()> {
        if sample.len() != self.n_sites {
            return Err(Error::InvalidInput(format!(
                "sample has {} spins, dataset expects {}",
                sample.len(),
                self.n_sites
            )));
        }
        if sample.iter().any(|&b| b > 1) {
            return Err(Error::InvalidInput("spin bits must be 0 or 1".into()));
        }
        self.bits.extend_from_slice(sample);
        Ok(())
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn len(&self) -> usize {
        if self.n_sites == 0 {
            0
        } else {
            self.bits.len() / self.n_sites
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample(&self, i: usize) -> &[u8] {
        &self.bits[i * self.n_sites..(i + 1) * self.n_sites]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[u8]> + '_ {
        self.bits.chunks_exact(self.n_sites.max(1))
    }

    pub fn configuration(&self, i: usize) -> SpinConfiguration {
        SpinConfiguration(self.sample(i).to_vec())
    }

    /// Basis index of every sample; requires `n_sites <= 20`.
    pub fn indices(&self) -> Result<Vec<usize>> {
        if self.n_sites > MAX_INDEXED_SITES {
            return Err(Error::Capability(format!(
                "basis indices need n_sites <= {MAX_INDEXED_SITES}, got {}",
                self.n_sites
            )));
        }
        Ok(self.iter().map(bits_to_index).collect())
    }

    /// Empirical distribution q(σ) as a dense vector over the 2^N basis.
    pub fn empirical_distribution(&self) -> Result<Vec<f64>> {
        let indices = self.indices()?;
        if indices.is_empty() {
            return Err(Error::InvalidInput("empirical distribution of an empty dataset".into()));
        }
        let mut q = vec![0.0; 1usize << self.n_sites];
        let w = 1.0 / indices.len() as f64;
        for idx in indices {
            q[idx] += w;
        }
        Ok(q)
    }

    /// Writes one line per sample of `0`/`1` characters.
    pub fn write_text(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path)
            .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        let mut out = BufWriter::new(file);
        let mut line = Vec::with_capacity(self.n_sites + 1);
        for sample in self.iter() {
            line.clear();
            line.extend(sample.iter().map(|&b| b'0' + b));
            line.push(b'\n');
            out.write_all(&line)
                .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        }
        out.flush()
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

/// Reads a dataset file: one configuration per line, `n_sites` characters
/// from `{0,1}`, no header.
pub fn import_dataset(path: &Path, n_sites: usize) -> Result<Dataset> {
    let file =
        fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut data = Dataset::new(n_sites, DataSource::Imported, None);
    let mut row = Vec::with_capacity(n_sites);
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let line = line.trim_end_matches('\r');
        if line.len() != n_sites {
            return Err(parse_err(format!(
                "expected {n_sites} characters, found {}",
                line.len()
            )));
        }
        row.clear();
        for (col, ch) in line.bytes().enumerate() {
            match ch {
                b'0' => row.push(0),
                b'1' => row.push(1),
                other => {
                    return Err(parse_err(format!(
                        "invalid character {:?} at column {}",
                        other as char,
                        col + 1
                    )))
                }
            }
        }
        data.bits.extend_from_slice(&row);
    }
    if data.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "dataset file contains no configurations".into(),
        });
    }
    Ok(data)
}
