//! Fluid state and its binary snapshot.
//!
//! Snapshot layout, little-endian: magic `GHPD`, version u32, d u32, d×u64
//! shape, d×f64 lengths, t f64, P̄ f64, then the fields ρ, u¹..u^d, T, 𝔭
//! each as a flat f64 block.

use crate::error::{Error, Result};
use crate::spectral::Field;
use std::io::{Read, Write};
use std::path::Path;

#[derive(Clone, Debug, PartialEq)]
pub struct FluidState {
    pub rho: Field,
    pub u: Vec<Field>,
    pub temperature: Field,
    /// Dynamic pressure 𝔭.
    pub pressure: Field,
    /// Thermodynamic pressure P̄.
    pub pbar: f64,
    pub time: f64,
}

impl FluidState {
    pub fn uniform(dim: usize, len: usize, rho: f64, t: f64, pbar: f64) -> Self {
        Self {
            rho: vec![rho; len],
            u: vec![vec![0.0; len]; dim],
            temperature: vec![t; len],
            pressure: vec![0.0; len],
            pbar,
            time: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }
}

const MAGIC: &[u8; 4] = b"GHPD";
const VERSION: u32 = 1;

pub fn write_snapshot<W: Write>(mut w: W, shape: &[usize], lengths: &[f64], s: &FluidState) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(shape.len() as u32).to_le_bytes())?;
    for &n in shape {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    for &l in lengths {
        w.write_all(&l.to_le_bytes())?;
    }
    w.write_all(&s.time.to_le_bytes())?;
    w.write_all(&s.pbar.to_le_bytes())?;
    for f in std::iter::once(&s.rho).chain(&s.u).chain([&s.temperature, &s.pressure]) {
        for x in f {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<(Vec<usize>, Vec<f64>, FluidState)> {
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    if &b4 != MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    r.read_exact(&mut b4)?;
    if u32::from_le_bytes(b4) != VERSION {
        return Err(Error::Snapshot("unsupported version".into()));
    }
    r.read_exact(&mut b4)?;
    let d = u32::from_le_bytes(b4) as usize;
    if !(2..=3).contains(&d) {
        return Err(Error::Snapshot(format!("bad dimension {d}")));
    }
    let mut f64s = |r: &mut R, n: usize| -> Result<Vec<f64>> {
        (0..n)
            .map(|_| {
                r.read_exact(&mut b8)?;
                Ok(f64::from_le_bytes(b8))
            })
            .collect()
    };
    let mut shape = Vec::with_capacity(d);
    for _ in 0..d {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        shape.push(u64::from_le_bytes(b) as usize);
    }
    let len: usize = shape.iter().product();
    let lengths = f64s(&mut r, d)?;
    let head = f64s(&mut r, 2)?;
    let rho = f64s(&mut r, len)?;
    let u = (0..d).map(|_| f64s(&mut r, len)).collect::<Result<Vec<_>>>()?;
    let temperature = f64s(&mut r, len)?;
    let pressure = f64s(&mut r, len)?;
    Ok((shape, lengths, FluidState { rho, u, temperature, pressure, pbar: head[1], time: head[0] }))
}

pub fn save_snapshot(path: &Path, shape: &[usize], lengths: &[f64], s: &FluidState) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_snapshot(&mut w, shape, lengths, s)?;
    w.flush()?;
    Ok(())
}

pub fn load_snapshot(path: &Path) -> Result<(Vec<usize>, Vec<f64>, FluidState)> {
    read_snapshot(std::io::BufReader::new(std::fs::File::open(path)?))
}
