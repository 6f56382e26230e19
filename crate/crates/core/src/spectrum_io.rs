//! Spectrum files.
//!
//! CSV has the header `frequency_hz,re_v,im_v,re_i,im_i` and one row per grid
//! point. The binary form is a 16-byte header (`TPF1`, `u32` point count,
//! `u32` flags, 4 reserved zero bytes) followed by five little-endian `f64`
//! arrays of that length: frequencies, `Re V`, `Im V`, `Re I`, `Im I`.
//! Both formats round-trip bit-exactly.

use std::io::{BufRead, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sim::{FrequencyGrid, Spectrum};

pub const MAGIC: &[u8; 4] = b"TPF1";
pub const CSV_HEADER: &str = "frequency_hz,re_v,im_v,re_i,im_i";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Binary,
}

pub fn write_csv<W: Write>(s: &Spectrum<f64>, mut w: W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for ((f, v), i) in s.grid.frequencies().iter().zip(&s.v).zip(&s.i) {
        // `{:?}` prints the shortest representation that parses back exactly
        writeln!(w, "{f:?},{:?},{:?},{:?},{:?}", v.re, v.im, i.re, i.im)?;
    }
    Ok(())
}

pub fn read_csv<R: BufRead>(r: R) -> Result<Spectrum<f64>> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != CSV_HEADER {
        return Err(Error::invalid(format!("expected CSV header `{CSV_HEADER}`")));
    }
    let (mut f, mut v, mut i) = (Vec::new(), Vec::new(), Vec::new());
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols = line
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::invalid(format!("row {}: {e}", n + 1)))?;
        if cols.len() != 5 {
            return Err(Error::invalid(format!("row {}: expected 5 columns", n + 1)));
        }
        f.push(cols[0]);
        v.push(Complex64::new(cols[1], cols[2]));
        i.push(Complex64::new(cols[3], cols[4]));
    }
    Spectrum::new(v, i, FrequencyGrid::new(f)?)
}

pub fn write_binary<W: Write>(s: &Spectrum<f64>, mut w: W) -> Result<()> {
    let d = u32::try_from(s.len()).map_err(|_| Error::invalid("spectrum too long"))?;
    w.write_all(MAGIC)?;
    w.write_all(&d.to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    w.write_all(&[0u8; 4])?;
    let blocks: [Box<dyn Fn(usize) -> f64 + '_>; 5] = [
        Box::new(|k| s.grid.frequencies()[k]),
        Box::new(|k| s.v[k].re),
        Box::new(|k| s.v[k].im),
        Box::new(|k| s.i[k].re),
        Box::new(|k| s.i[k].im),
    ];
    for get in &blocks {
        for k in 0..s.len() {
            w.write_all(&get(k).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<Spectrum<f64>> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)
        .map_err(|_| Error::invalid("binary spectrum shorter than its header"))?;
    if &header[..4] != MAGIC {
        return Err(Error::invalid("bad magic, expected TPF1"));
    }
    let d = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes")) as usize;
    let mut buf = vec![0u8; 5 * 8 * d];
    r.read_exact(&mut buf)
        .map_err(|_| Error::invalid(format!("binary spectrum truncated, expected {d} points")))?;
    let x: Vec<f64> = buf
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    let block = |j: usize| &x[j * d..(j + 1) * d];
    let zip = |re: &[f64], im: &[f64]| -> Vec<Complex64> {
        re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect()
    };
    Spectrum::new(
        zip(block(1), block(2)),
        zip(block(3), block(4)),
        FrequencyGrid::new(block(0).to_vec())?,
    )
}

pub fn format_for(path: &Path) -> Format {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
        _ => Format::Binary,
    }
}

pub fn save(s: &Spectrum<f64>, path: &Path, format: Format) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    match format {
        Format::Csv => write_csv(s, &mut w)?,
        Format::Binary => write_binary(s, &mut w)?,
    }
    w.flush()?;
    Ok(())
}

/// Reads either format, detected from the leading bytes.
pub fn load(path: &Path) -> Result<Spectrum<f64>> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        read_binary(&bytes[..])
    } else {
        read_csv(&bytes[..])
    }
}
