//! Binary trajectory checkpoints.
//!
//! Layout, all little-endian: magic `GHFL`, version u32, d u32, N u64,
//! L f64, time f64, then N×d position components, then N×d velocity components.

use super::{ParticleState, TorusDomain, Vector};
use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"GHFL";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckpointHeader {
    pub dim: usize,
    pub count: usize,
    pub side: f64,
    pub time: f64,
}

pub fn write_to<W: Write>(mut w: W, domain: &TorusDomain, state: &ParticleState) -> Result<()> {
    let d = domain.dim();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(d as u32).to_le_bytes())?;
    w.write_all(&(state.len() as u64).to_le_bytes())?;
    w.write_all(&domain.side().to_le_bytes())?;
    w.write_all(&state.time.to_le_bytes())?;
    for block in [&state.positions, &state.velocities] {
        for v in block.iter() {
            for x in &v[..d] {
                w.write_all(&x.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

pub fn read_from<R: Read>(mut r: R) -> Result<(CheckpointHeader, ParticleState)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let dim = read_u32(&mut r)? as usize;
    if dim != 2 && dim != 3 {
        return Err(Error::Checkpoint(format!("bad dimension {dim}")));
    }
    let count = read_u64(&mut r)? as usize;
    let side = read_f64(&mut r)?;
    let time = read_f64(&mut r)?;
    let block = |r: &mut R| -> Result<Vec<Vector>> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let mut v = [0.0; 3];
            for x in v.iter_mut().take(dim) {
                *x = read_f64(r)?;
            }
            out.push(v);
        }
        Ok(out)
    };
    let positions = block(&mut r)?;
    let velocities = block(&mut r)?;
    Ok((
        CheckpointHeader { dim, count, side, time },
        ParticleState { positions, velocities, time },
    ))
}

pub fn save(path: &Path, domain: &TorusDomain, state: &ParticleState) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_to(&mut w, domain, state)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(CheckpointHeader, ParticleState)> {
    let f = std::fs::File::open(path)?;
    read_from(std::io::BufReader::new(f))
}
