//! Binary cloud checkpoints and resumable training state.
//!
//! Cloud file: `GSCK`, version `u32`, count `u64`, active SH degree `u32`,
//! then `count × 59` little-endian `f64` in the flat parameter layout.
//!
//! State file: `GSST`, version `u32`, iteration `u64`, adam step `u64`,
//! count `u64`, then adam first and second moments (`count × 59 f64` each),
//! the three densify sums (`count f64` each) and view counts (`count u32`).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::density::DensifyStats;
use crate::error::{Error, Result};
use crate::optim::{Adam, AdamConfig};
use crate::scene::{Gaussian3D, GaussianCloud, MAX_SH_DEGREE, PARAMS_PER_GAUSSIAN};
use crate::Scalar;

const CLOUD_MAGIC: &[u8; 4] = b"GSCK";
const STATE_MAGIC: &[u8; 4] = b"GSST";
const VERSION: u32 = 1;

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = PathBuf::from(path);
    let name = path
        .file_name()
        .map(|n| format!(".{}.tmp", n.to_string_lossy()))
        .unwrap_or_else(|| ".checkpoint.tmp".into());
    tmp.set_file_name(name);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn header(&mut self, magic: &[u8; 4]) -> std::result::Result<(), String> {
        if self.take(4)? != magic {
            return Err(format!("bad magic, expected {}", String::from_utf8_lossy(magic)));
        }
        let v = self.u32()?;
        if v != VERSION {
            return Err(format!("unsupported version {v}"));
        }
        Ok(())
    }

    fn count(&mut self, row_bytes: usize) -> std::result::Result<usize, String> {
        let n = self.u64()?;
        let remaining = (self.bytes.len() - self.pos) as u64;
        if n.saturating_mul(row_bytes as u64) > remaining {
            return Err(format!("count {n} exceeds file size"));
        }
        Ok(n as usize)
    }

    fn finish(&self) -> std::result::Result<(), String> {
        if self.pos != self.bytes.len() {
            return Err(format!("{} trailing bytes", self.bytes.len() - self.pos));
        }
        Ok(())
    }
}

fn put_f64<T: Scalar>(out: &mut Vec<u8>, v: T) {
    out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
}

pub fn encode_cloud<T: Scalar>(cloud: &GaussianCloud<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + cloud.len() * PARAMS_PER_GAUSSIAN * 8);
    out.extend_from_slice(CLOUD_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(cloud.len() as u64).to_le_bytes());
    out.extend_from_slice(&(cloud.active_sh_degree as u32).to_le_bytes());
    for g in &cloud.gaussians {
        for v in g.to_flat() {
            put_f64(&mut out, v);
        }
    }
    out
}

pub fn decode_cloud<T: Scalar>(bytes: &[u8]) -> std::result::Result<GaussianCloud<T>, String> {
    let mut r = Reader { bytes, pos: 0 };
    r.header(CLOUD_MAGIC)?;
    let n = r.u64()?;
    let degree = r.u32()? as usize;
    if degree > MAX_SH_DEGREE {
        return Err(format!("SH degree {degree} exceeds {MAX_SH_DEGREE}"));
    }
    if n.saturating_mul(PARAMS_PER_GAUSSIAN as u64 * 8) != (bytes.len() - r.pos) as u64 {
        return Err(format!("count {n} does not match file size"));
    }
    let mut gaussians = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let mut flat = [T::zero(); PARAMS_PER_GAUSSIAN];
        for v in &mut flat {
            *v = T::lit(r.f64()?);
        }
        gaussians.push(Gaussian3D::from_flat(&flat));
    }
    r.finish()?;
    Ok(GaussianCloud::new(gaussians, degree))
}

pub fn save_cloud<T: Scalar>(path: &Path, cloud: &GaussianCloud<T>) -> Result<()> {
    write_atomic(path, &encode_cloud(cloud))
}

pub fn load_cloud<T: Scalar>(path: &Path) -> Result<GaussianCloud<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cloud(&bytes).map_err(|m| Error::format(path, m))
}

/// Optimizer and densification state needed to resume a run exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState<T> {
    /// Last completed iteration.
    pub iteration: usize,
    pub adam: Adam<T>,
    pub stats: DensifyStats<T>,
}

pub fn encode_state<T: Scalar>(state: &TrainState<T>) -> Result<Vec<u8>> {
    let n = state.adam.len();
    if state.stats.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "optimizer state covers {n} gaussians, densify stats {}",
            state.stats.len()
        )));
    }
    let mut out = Vec::new();
    out.extend_from_slice(STATE_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(state.iteration as u64).to_le_bytes());
    out.extend_from_slice(&state.adam.step.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for rows in [&state.adam.m, &state.adam.v] {
        for row in rows {
            for &v in row {
                put_f64(&mut out, v);
            }
        }
    }
    for col in [&state.stats.grad_norm_sum, &state.stats.weighted_grad_sum, &state.stats.transmittance_sum] {
        for &v in col {
            put_f64(&mut out, v);
        }
    }
    for &c in &state.stats.view_count {
        out.extend_from_slice(&c.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_state<T: Scalar>(bytes: &[u8], adam_config: AdamConfig) -> std::result::Result<TrainState<T>, String> {
    let mut r = Reader { bytes, pos: 0 };
    r.header(STATE_MAGIC)?;
    let iteration = r.u64()? as usize;
    let step = r.u64()?;
    let n = r.count(2 * PARAMS_PER_GAUSSIAN * 8 + 3 * 8 + 4)?;
    let mut adam = Adam::new(adam_config, n);
    adam.step = step;
    for rows in [&mut adam.m, &mut adam.v] {
        for row in rows.iter_mut() {
            for v in row.iter_mut() {
                *v = T::lit(r.f64()?);
            }
        }
    }
    let mut stats = DensifyStats::new(n);
    for col in [&mut stats.grad_norm_sum, &mut stats.weighted_grad_sum, &mut stats.transmittance_sum] {
        for v in col.iter_mut() {
            *v = T::lit(r.f64()?);
        }
    }
    for c in &mut stats.view_count {
        *c = r.u32()?;
    }
    r.finish()?;
    Ok(TrainState { iteration, adam, stats })
}

pub fn save_state<T: Scalar>(path: &Path, state: &TrainState<T>) -> Result<()> {
    write_atomic(path, &encode_state(state)?)
}

pub fn load_state<T: Scalar>(path: &Path, adam_config: AdamConfig) -> Result<TrainState<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_state(&bytes, adam_config).map_err(|m| Error::format(path, m))
}

/// FNV-1a over the encoded cloud; used to confirm runs share an initialization.
pub fn cloud_hash<T: Scalar>(cloud: &GaussianCloud<T>) -> u64 {
    encode_cloud(cloud).iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}
