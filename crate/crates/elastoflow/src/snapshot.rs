//! Field snapshot I/O.
//!
//! Binary layout: magic "EFSNAP01", then rank u8, n u32, n_time u32,
//! t_end f64, time_index u32, followed by ncomp·n³ coefficients as
//! little-endian (re, im) f64 pairs. A CSV export of grid samples is provided
//! for inspection.

use crate::error::{Error, Result};
use crate::field::{Rank, SpectralField};
use crate::grid::GridSpec;
use num_complex::Complex64;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"EFSNAP01";

fn rank_code(r: Rank) -> u8 {
    match r {
        Rank::Scalar => 0,
        Rank::Vector3 => 1,
        Rank::Tensor3x3 => 2,
    }
}

fn rank_from(code: u8) -> Result<Rank> {
    match code {
        0 => Ok(Rank::Scalar),
        1 => Ok(Rank::Vector3),
        2 => Ok(Rank::Tensor3x3),
        _ => Err(Error::Format(format!("unknown rank code {code}"))),
    }
}

pub fn write_snapshot(path: &Path, field: &SpectralField, time_index: u32) -> Result<()> {
    let mut buf = Vec::with_capacity(32 + field.raw().len() * 16);
    buf.extend_from_slice(MAGIC);
    buf.push(rank_code(field.rank));
    buf.extend_from_slice(&(field.grid.n as u32).to_le_bytes());
    buf.extend_from_slice(&(field.grid.n_time as u32).to_le_bytes());
    buf.extend_from_slice(&field.grid.t_end.to_le_bytes());
    buf.extend_from_slice(&time_index.to_le_bytes());
    for z in field.raw() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<(SpectralField, u32)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 29 || &bytes[0..8] != MAGIC {
        return Err(Error::Format(format!("{} is not a field snapshot", path.display())));
    }
    let rank = rank_from(bytes[8])?;
    let rd_u32 = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let rd_f64 = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let n = rd_u32(9) as usize;
    let n_time = rd_u32(13) as usize;
    let t_end = rd_f64(17);
    let time_index = rd_u32(25);
    let grid = GridSpec::new(n, n_time, t_end)?;
    let mut field = SpectralField::zeros(grid, rank);
    let need = field.raw().len();
    let data = &bytes[29..];
    if data.len() != need * 16 {
        return Err(Error::Format(format!(
            "snapshot payload {} bytes, expected {}",
            data.len(),
            need * 16
        )));
    }
    for (i, z) in field.raw_mut().iter_mut().enumerate() {
        let re = f64::from_le_bytes(data[16 * i..16 * i + 8].try_into().unwrap());
        let im = f64::from_le_bytes(data[16 * i + 8..16 * i + 16].try_into().unwrap());
        *z = Complex64::new(re, im);
    }
    Ok((field, time_index))
}

/// Grid samples as CSV: x,y,z then one column per component.
pub fn export_csv(path: &Path, field: &SpectralField) -> Result<()> {
    let g = field.to_grid();
    let n = field.grid.n;
    let h = 2.0 * std::f64::consts::PI / n as f64;
    let mut s = String::from("x,y,z");
    for c in 0..field.rank.ncomp() {
        s.push_str(&format!(",c{c}"));
    }
    s.push('\n');
    let mut idx = 0;
    for ix in 0..n {
        for iy in 0..n {
            for iz in 0..n {
                s.push_str(&format!(
                    "{:.6},{:.6},{:.6}",
                    ix as f64 * h,
                    iy as f64 * h,
                    iz as f64 * h
                ));
                for c in 0..field.rank.ncomp() {
                    s.push_str(&format!(",{:.12e}", g.comp(c)[idx]));
                }
                s.push('\n');
                idx += 1;
            }
        }
    }
    std::fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_roundtrip() {
        let g = GridSpec::new(8, 4, 1.0).unwrap();
        let f = SpectralField::random(g, Rank::Vector3, 3, 1.0, 77);
        let dir = std::env::temp_dir().join("elastoflow_snap_test");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("f.bin");
        write_snapshot(&p, &f, 3).unwrap();
        let (back, idx) = read_snapshot(&p).unwrap();
        assert_eq!(idx, 3);
        assert_eq!(back.rank, f.rank);
        assert_eq!(back.grid, f.grid);
        assert!(f.max_coeff_diff(&back) == 0.0);
        std::fs::remove_dir_all(&dir).ok();
    }
}
