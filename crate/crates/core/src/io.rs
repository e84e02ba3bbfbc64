//! Binary ensemble dumps and CSV path export.
//!
//! Binary layout, all little-endian:
//!
//! ```text
//! magic    b"AJSN"
//! version  u32
//! kind     u32      0 = noise only, 1 = noise and values
//! seed     u64
//! lambda   f64
//! horizon  f64
//! n_steps  u64
//! n_paths  u64
//! per path:
//!   stream_id  u64
//!   brownian   n_steps × f64
//!   poisson    n_steps × u32
//!   values     (n_steps + 1) × f64   kind 1 only
//! ```

use std::io::{Read, Write};

use crate::engine::EmPath;
use crate::error::{Result, SimError};
use crate::noise::{DrivingNoise, SimGrid};

pub const MAGIC: [u8; 4] = *b"AJSN";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum DumpKind {
    Noise = 0,
    NoiseAndValues = 1,
}

impl DumpKind {
    fn from_u32(v: u32) -> Result<Self> {
        match v {
            0 => Ok(DumpKind::Noise),
            1 => Ok(DumpKind::NoiseAndValues),
            other => Err(SimError::Format(format!("unknown dump kind {other}"))),
        }
    }
}

/// Shared header of a dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DumpHeader {
    pub version: u32,
    pub kind: DumpKind,
    pub seed: u64,
    pub lambda: f64,
    pub grid: SimGrid,
    pub n_paths: u64,
}

/// One path read back from a kind-1 dump.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredPath {
    pub noise: DrivingNoise,
    pub values: Vec<f64>,
}

fn common_header(noises: &[&DrivingNoise], kind: DumpKind) -> Result<DumpHeader> {
    let first = noises
        .first()
        .ok_or_else(|| SimError::Format("cannot dump an empty ensemble".into()))?;
    for n in noises {
        if n.grid != first.grid
            || n.seed != first.seed
            || n.lambda.to_bits() != first.lambda.to_bits()
        {
            return Err(SimError::Format(format!(
                "path {} does not share the ensemble grid, seed and lambda",
                n.stream_id
            )));
        }
    }
    Ok(DumpHeader {
        version: FORMAT_VERSION,
        kind,
        seed: first.seed,
        lambda: first.lambda,
        grid: first.grid,
        n_paths: noises.len() as u64,
    })
}

fn write_header<W: Write>(w: &mut W, h: &DumpHeader) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&h.version.to_le_bytes())?;
    w.write_all(&(h.kind as u32).to_le_bytes())?;
    w.write_all(&h.seed.to_le_bytes())?;
    w.write_all(&h.lambda.to_le_bytes())?;
    w.write_all(&h.grid.horizon().to_le_bytes())?;
    w.write_all(&(h.grid.n_steps() as u64).to_le_bytes())?;
    w.write_all(&h.n_paths.to_le_bytes())?;
    Ok(())
}

fn write_noise_body<W: Write>(w: &mut W, noise: &DrivingNoise) -> Result<()> {
    w.write_all(&noise.stream_id.to_le_bytes())?;
    for x in &noise.brownian {
        w.write_all(&x.to_le_bytes())?;
    }
    for k in &noise.poisson {
        w.write_all(&k.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_noise_ensemble<W: Write>(w: &mut W, noises: &[DrivingNoise]) -> Result<()> {
    let refs: Vec<&DrivingNoise> = noises.iter().collect();
    let header = common_header(&refs, DumpKind::Noise)?;
    write_header(w, &header)?;
    for n in noises {
        write_noise_body(w, n)?;
    }
    Ok(())
}

/// Writes each noise followed by the values of the path it drove.
pub fn write_path_ensemble<W: Write>(w: &mut W, paths: &[(DrivingNoise, EmPath)]) -> Result<()> {
    let refs: Vec<&DrivingNoise> = paths.iter().map(|(n, _)| n).collect();
    let header = common_header(&refs, DumpKind::NoiseAndValues)?;
    for (noise, path) in paths {
        if path.grid != noise.grid || path.values.len() != noise.grid.n_steps() + 1 {
            return Err(SimError::Format(format!(
                "path {} was not simulated on its noise grid",
                noise.stream_id
            )));
        }
    }
    write_header(w, &header)?;
    for (noise, path) in paths {
        write_noise_body(w, noise)?;
        for v in &path.values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => SimError::Format("truncated dump".into()),
        _ => SimError::from(e),
    })?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_le_bytes(read_array(r)?))
}

pub fn read_header<R: Read>(r: &mut R) -> Result<DumpHeader> {
    let magic: [u8; 4] = read_array(r)?;
    if magic != MAGIC {
        return Err(SimError::Format("bad magic, not an ensemble dump".into()));
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(SimError::Format(format!(
            "unsupported dump version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let kind = DumpKind::from_u32(read_u32(r)?)?;
    let seed = read_u64(r)?;
    let lambda = read_f64(r)?;
    let horizon = read_f64(r)?;
    let n_steps = read_u64(r)?;
    let n_paths = read_u64(r)?;
    let n_steps = usize::try_from(n_steps)
        .map_err(|_| SimError::Format(format!("step count {n_steps} too large")))?;
    let grid = SimGrid::new(horizon, n_steps)
        .map_err(|e| SimError::Format(format!("invalid grid in header: {e}")))?;
    Ok(DumpHeader {
        version,
        kind,
        seed,
        lambda,
        grid,
        n_paths,
    })
}

fn read_noise_body<R: Read>(r: &mut R, h: &DumpHeader) -> Result<DrivingNoise> {
    let n = h.grid.n_steps();
    let stream_id = read_u64(r)?;
    let brownian = (0..n).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
    let poisson = (0..n).map(|_| read_u32(r)).collect::<Result<Vec<_>>>()?;
    Ok(DrivingNoise {
        grid: h.grid,
        lambda: h.lambda,
        seed: h.seed,
        stream_id,
        brownian,
        poisson,
    })
}

pub fn read_noise_ensemble<R: Read>(r: &mut R) -> Result<Vec<DrivingNoise>> {
    let h = read_header(r)?;
    if h.kind != DumpKind::Noise {
        return Err(SimError::Format(
            "dump holds path values, use read_path_ensemble".into(),
        ));
    }
    (0..h.n_paths).map(|_| read_noise_body(r, &h)).collect()
}

pub fn read_path_ensemble<R: Read>(r: &mut R) -> Result<Vec<StoredPath>> {
    let h = read_header(r)?;
    if h.kind != DumpKind::NoiseAndValues {
        return Err(SimError::Format(
            "dump holds noise only, use read_noise_ensemble".into(),
        ));
    }
    let n_values = h.grid.n_steps() + 1;
    (0..h.n_paths)
        .map(|_| {
            let noise = read_noise_body(r, &h)?;
            let values = (0..n_values)
                .map(|_| read_f64(r))
                .collect::<Result<Vec<_>>>()?;
            Ok(StoredPath { noise, values })
        })
        .collect()
}

/// One `path_id,t,Y` row per node, path ids numbered from zero.
pub fn write_paths_csv<W: Write>(w: &mut W, paths: &[EmPath]) -> Result<()> {
    w.write_all(b"path_id,t,Y\n")?;
    for (id, path) in paths.iter().enumerate() {
        for (n, y) in path.values.iter().enumerate() {
            writeln!(w, "{id},{},{y}", path.grid.time(n))?;
        }
    }
    Ok(())
}
