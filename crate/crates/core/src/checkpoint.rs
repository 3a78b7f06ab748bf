//! Binary model checkpoints.
//!
//! Layout (little-endian): magic `RBMCKPT\0`, version byte, u32 N, u32 N_h,
//! u64 init seed, N_h·N weights, N visible biases, N_h hidden biases (all
//! f64), a mask flag byte with the packed mask bits when set, then a u32
//! length and a UTF-8 JSON echo of the producing configuration.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::pruning::{MaskProvenance, PruneMask};
use crate::rbm::RbmModel;

const MAGIC: &[u8; 8] = b"RBMCKPT\0";
const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: RbmModel,
    pub mask: Option<PruneMask>,
    pub config: serde_json::Value,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let m = &self.model;
        let mut out = Vec::with_capacity(64 + 8 * (m.weights().len() + m.n_visible() + m.n_hidden()));
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(m.n_visible() as u32).to_le_bytes());
        out.extend_from_slice(&(m.n_hidden() as u32).to_le_bytes());
        out.extend_from_slice(&m.init_seed().to_le_bytes());
        for x in m.weights().iter().chain(m.visible_bias()).chain(m.hidden_bias()) {
            out.extend_from_slice(&x.to_le_bytes());
        }
        match &self.mask {
            None => out.push(0),
            Some(mask) => {
                out.push(1);
                out.push(provenance_code(mask.provenance));
                out.extend_from_slice(&mask.seed.unwrap_or(0).to_le_bytes());
                out.push(mask.seed.is_some() as u8);
                let mut packed = vec![0u8; mask.total().div_ceil(8)];
                for (k, &on) in mask.active().iter().enumerate() {
                    if on {
                        packed[k / 8] |= 1 << (k % 8);
                    }
                }
                out.extend_from_slice(&packed);
            }
        }
        let json = serde_json::to_vec(&self.config).expect("json value serializes");
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::InvalidInput("not a checkpoint file".into()));
        }
        let version = r.take(1)?[0];
        if version != VERSION {
            return Err(Error::InvalidInput(format!("unsupported checkpoint version {version}")));
        }
        let nv = r.u32()? as usize;
        let nh = r.u32()? as usize;
        let seed = r.u64()?;
        let weights = r.f64s(nv * nh)?;
        let vb = r.f64s(nv)?;
        let hb = r.f64s(nh)?;
        let model = RbmModel::from_parts(nv, nh, weights, vb, hb, seed)?;
        let mask = match r.take(1)?[0] {
            0 => None,
            1 => {
                let provenance = provenance_from(r.take(1)?[0])?;
                let mask_seed = r.u64()?;
                let has_seed = r.take(1)?[0] == 1;
                let packed = r.take((nv * nh).div_ceil(8))?;
                let active = (0..nv * nh).map(|k| packed[k / 8] >> (k % 8) & 1 == 1).collect();
                let mut mask = PruneMask::from_active(nv, nh, active, provenance)?;
                mask.seed = has_seed.then_some(mask_seed);
                Some(mask)
            }
            other => return Err(Error::InvalidInput(format!("bad mask flag {other}"))),
        };
        let len = r.u32()? as usize;
        let config = serde_json::from_slice(r.take(len)?)
            .map_err(|e| Error::InvalidInput(format!("checkpoint config echo: {e}")))?;
        if r.pos != bytes.len() {
            return Err(Error::InvalidInput("trailing bytes after checkpoint".into()));
        }
        Ok(Self { model, mask, config })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::InvalidInput(message) => Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                message,
            },
            other => other,
        })
    }
}

fn provenance_code(p: MaskProvenance) -> u8 {
    match p {
        MaskProvenance::Dense => 0,
        MaskProvenance::Pruned => 1,
        MaskProvenance::SpSameSeed => 2,
        MaskProvenance::SpOtherSeed => 3,
        MaskProvenance::Constructed => 4,
    }
}

fn provenance_from(code: u8) -> Result<MaskProvenance> {
    Ok(match code {
        0 => MaskProvenance::Dense,
        1 => MaskProvenance::Pruned,
        2 => MaskProvenance::SpSameSeed,
        3 => MaskProvenance::SpOtherSeed,
        4 => MaskProvenance::Constructed,
        other => return Err(Error::InvalidInput(format!("unknown mask provenance {other}"))),
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::InvalidInput("truncated checkpoint".into()));
        };
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::InvalidInput("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
