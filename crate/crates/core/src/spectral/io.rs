//! Coefficient dumps: CSV rows `component,mode,re,im` and a little-endian
//! binary form (`IRKS` magic, `u32` version, mode count and component
//! count, then `re, im` as `f64` per coefficient in storage order).

use std::io::{BufRead, Read, Write};
use std::sync::Arc;

use num_complex::Complex64;

use super::grid::SpectralGrid;
use super::state::State;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"IRKS";
const VERSION: u32 = 1;

pub fn write_csv<W: Write>(u: &State, mut out: W) -> Result<()> {
    writeln!(out, "component,mode,re,im")?;
    let g = u.grid();
    for r in 0..g.components() {
        for (m, &k) in g.wavenumbers().iter().enumerate() {
            let c = u.component(r)[m];
            // `{:?}` prints the shortest representation that round-trips
            writeln!(out, "{r},{k},{:?},{:?}", c.re, c.im)?;
        }
    }
    Ok(())
}

pub fn read_csv<R: BufRead>(grid: &Arc<SpectralGrid>, input: R) -> Result<State> {
    let mut u = State::zeros(grid);
    let mut seen = vec![false; grid.components() * grid.n()];
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if lineno == 0 || line.is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Parse(format!("line {}: {what}", lineno + 1));
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(bad("expected 4 fields"));
        }
        let r: usize = fields[0].parse().map_err(|_| bad("bad component"))?;
        let k: i64 = fields[1].parse().map_err(|_| bad("bad mode"))?;
        let re: f64 = fields[2].parse().map_err(|_| bad("bad real part"))?;
        let im: f64 = fields[3].parse().map_err(|_| bad("bad imaginary part"))?;
        let slot = grid.slot_of(k).ok_or_else(|| bad("mode not on grid"))?;
        if r >= grid.components() {
            return Err(bad("component out of range"));
        }
        u.set_mode(r, k, Complex64::new(re, im))?;
        seen[r * grid.n() + slot] = true;
    }
    if seen.iter().any(|&s| !s) {
        return Err(Error::Parse("dump does not cover every coefficient".into()));
    }
    Ok(u)
}

pub fn write_binary<W: Write>(u: &State, mut out: W) -> Result<()> {
    let g = u.grid();
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(g.n() as u32).to_le_bytes())?;
    out.write_all(&(g.components() as u32).to_le_bytes())?;
    for c in u.coeffs() {
        out.write_all(&c.re.to_le_bytes())?;
        out.write_all(&c.im.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(input: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_binary<R: Read>(grid: &Arc<SpectralGrid>, mut input: R) -> Result<State> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse("not a coefficient dump".into()));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(Error::Parse(format!("unsupported dump version {version}")));
    }
    let n = read_u32(&mut input)? as usize;
    let comps = read_u32(&mut input)? as usize;
    if n != grid.n() || comps != grid.components() {
        return Err(Error::Parse(format!(
            "dump has {comps} x {n} coefficients, grid expects {} x {}",
            grid.components(),
            grid.n()
        )));
    }
    let coeffs = (0..n * comps)
        .map(|_| Ok(Complex64::new(read_f64(&mut input)?, read_f64(&mut input)?)))
        .collect::<Result<Vec<_>>>()?;
    State::from_coeffs(grid, coeffs)
}
