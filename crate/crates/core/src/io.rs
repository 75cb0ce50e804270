//! Snapshot files and CSV series.
//!
//! Snapshot layout, all little-endian:
//!
//! | bytes | field |
//! |-------|-------|
//! | 8 | magic `BSQSNAP\0` |
//! | 4 | version (`u32`, currently 1) |
//! | 4 | resolution `n` (`u32`) |
//! | 24 | `nu1`, `nu2`, `g` (`f64`) |
//! | 8 | `dt` (`f64`) |
//! | 8 | seed (`u64`) |
//! | 4 | stride in steps (`u32`) |
//! | 16 | config digest, ASCII |
//! | 4 | snapshot count `c` (`u32`) |
//!
//! followed by `c` records of `time: f64` and, for each canonical retained
//! mode in [`Spectral::canonical_modes`] order, `Re ŵ, Im ŵ, Re θ̂, Im θ̂`.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::spectral::{PhysicsParams, Spectral, SpectralState};

pub const MAGIC: &[u8; 8] = b"BSQSNAP\0";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotHeader {
    pub resolution: usize,
    pub params: PhysicsParams,
    pub dt: f64,
    pub seed: u64,
    pub stride: usize,
    pub digest: String,
}

pub fn write_snapshots<W: Write>(out: &mut W, header: &SnapshotHeader, snaps: &[(f64, &SpectralState)]) -> Result<()> {
    let spec = Spectral::new(header.resolution)?;
    let digest = header.digest.as_bytes();
    if digest.len() != 16 {
        return Err(Error::Format(format!(
            "digest must be 16 ASCII bytes, got {}",
            digest.len()
        )));
    }
    out.write_all(MAGIC)?;
    out.write_u32::<LittleEndian>(VERSION)?;
    out.write_u32::<LittleEndian>(header.resolution as u32)?;
    for x in [header.params.nu1, header.params.nu2, header.params.g, header.dt] {
        out.write_f64::<LittleEndian>(x)?;
    }
    out.write_u64::<LittleEndian>(header.seed)?;
    out.write_u32::<LittleEndian>(header.stride as u32)?;
    out.write_all(digest)?;
    out.write_u32::<LittleEndian>(snaps.len() as u32)?;
    let modes = spec.canonical_modes();
    for (t, u) in snaps {
        if u.resolution() != header.resolution {
            return Err(Error::ResolutionMismatch(header.resolution, u.resolution()));
        }
        out.write_f64::<LittleEndian>(*t)?;
        for &k in &modes {
            let (w, th) = (u.w.get(k), u.theta.get(k));
            for x in [w.re, w.im, th.re, th.im] {
                out.write_f64::<LittleEndian>(x)?;
            }
        }
    }
    Ok(())
}

pub fn read_snapshots<R: Read>(input: &mut R) -> Result<(SnapshotHeader, Vec<(f64, SpectralState)>)> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a snapshot file".into()));
    }
    let version = input.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported snapshot version {version}")));
    }
    let resolution = input.read_u32::<LittleEndian>()? as usize;
    let mut f = [0.0; 4];
    for x in f.iter_mut() {
        *x = input.read_f64::<LittleEndian>()?;
    }
    let seed = input.read_u64::<LittleEndian>()?;
    let stride = input.read_u32::<LittleEndian>()? as usize;
    let mut digest = [0u8; 16];
    input.read_exact(&mut digest)?;
    let count = input.read_u32::<LittleEndian>()? as usize;
    let header = SnapshotHeader {
        resolution,
        params: PhysicsParams {
            nu1: f[0],
            nu2: f[1],
            g: f[2],
        },
        dt: f[3],
        seed,
        stride,
        digest: String::from_utf8(digest.to_vec()).map_err(|_| Error::Format("digest is not ASCII".into()))?,
    };
    let spec = Spectral::new(resolution)?;
    let modes = spec.canonical_modes();
    let mut snaps = Vec::with_capacity(count);
    for _ in 0..count {
        let t = input.read_f64::<LittleEndian>()?;
        let mut u = spec.zero_state();
        for &k in &modes {
            let mut v = [0.0; 4];
            for x in v.iter_mut() {
                *x = input.read_f64::<LittleEndian>()?;
            }
            u.w.set_mode(k, Complex64::new(v[0], v[1]));
            u.theta.set_mode(k, Complex64::new(v[2], v[3]));
        }
        snaps.push((t, u));
    }
    Ok((header, snaps))
}

/// Scalar series of a trajectory, one row per step.
pub fn write_series_csv<W: Write>(out: &mut W, traj: &Trajectory, digest: &str, seed: u64) -> Result<()> {
    writeln!(out, "# config_digest: {digest}")?;
    writeln!(out, "# seed: {seed}")?;
    writeln!(out, "# dt: {:?}", traj.dt)?;
    writeln!(out, "step,t,norm,norm1")?;
    for (i, (n0, n1)) in traj.norms.iter().zip(&traj.norms1).enumerate() {
        writeln!(out, "{i},{:?},{n0:?},{n1:?}", traj.time(i))?;
    }
    Ok(())
}

/// One row per absorbed jump.
pub fn write_jumps_csv<W: Write>(out: &mut W, traj: &Trajectory, digest: &str, seed: u64) -> Result<()> {
    writeln!(out, "# config_digest: {digest}")?;
    writeln!(out, "# seed: {seed}")?;
    let d = traj.jumps.first().map_or(0, |j| j.dw.len());
    let mut cols = vec!["step".to_string(), "time".into(), "dell".into()];
    cols.extend((0..d).map(|i| format!("dw{i}")));
    writeln!(out, "{}", cols.join(","))?;
    for j in &traj.jumps {
        let mut row = vec![j.index.to_string(), format!("{:?}", j.time), format!("{:?}", j.dell)];
        row.extend(j.dw.iter().map(|x| format!("{x:?}")));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
