//! Single-file checkpoints: magic, header length (`u32` LE), JSON header,
//! then the parameters as little-endian `f32`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NeuralError, Result};
use crate::model::{Architecture, Dims, Mode, Model};
use crate::train::TrainConfig;

const MAGIC: &[u8; 8] = b"TPHNET01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub dims: Dims,
    pub mode: Mode,
    pub n_w: usize,
    pub n_params: usize,
    pub seed: u64,
    pub epoch: usize,
    pub val_partial_loss: f64,
    #[serde(default)]
    pub train: Option<TrainConfig>,
}

impl Header {
    pub fn for_model(model: &Model<f32>, seed: u64, epoch: usize, val_partial_loss: f64) -> Self {
        Self {
            dims: model.arch.dims.clone(),
            mode: model.arch.mode,
            n_w: model.arch.n_w(),
            n_params: model.arch.n_params(),
            seed,
            epoch,
            val_partial_loss,
            train: None,
        }
    }
}

pub fn write<W: Write>(mut w: W, header: &Header, theta: &[f32]) -> Result<()> {
    if theta.len() != header.n_params {
        return Err(NeuralError::Checkpoint(format!(
            "header lists {} parameters, got {}",
            header.n_params,
            theta.len()
        )));
    }
    let json = serde_json::to_vec(header)?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    let mut blob = Vec::with_capacity(4 * theta.len());
    for x in theta {
        blob.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&blob)?;
    Ok(())
}

pub fn read<R: Read>(mut r: R) -> Result<(Header, Model<f32>)> {
    let bad = |m: String| NeuralError::Checkpoint(m);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("file too short".into()))?;
    if &magic != MAGIC {
        return Err(bad("not a model checkpoint".into()));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len).map_err(|_| bad("truncated header".into()))?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut json).map_err(|_| bad("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&json)?;
    let arch = Architecture::new(header.dims.clone(), header.mode)?;
    if arch.n_params() != header.n_params || arch.n_w() != header.n_w {
        return Err(bad(format!(
            "header sizes ({} parameters, N_w {}) disagree with the architecture ({}, {})",
            header.n_params,
            header.n_w,
            arch.n_params(),
            arch.n_w()
        )));
    }
    let mut blob = Vec::new();
    r.read_to_end(&mut blob)?;
    if blob.len() != 4 * header.n_params {
        return Err(bad(format!(
            "expected {} parameter bytes, found {}",
            4 * header.n_params,
            blob.len()
        )));
    }
    let theta = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((header, Model { arch, theta }))
}

pub fn save(path: &Path, header: &Header, theta: &[f32]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write(&mut f, header, theta)?;
    f.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(Header, Model<f32>)> {
    read(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bitwise() {
        let m = Model::<f32>::new(Dims::test_scale(), Mode::HyperGruOnly, 4).unwrap();
        let h = Header::for_model(&m, 4, 17, 0.25);
        let mut buf = Vec::new();
        write(&mut buf, &h, &m.theta).unwrap();
        let (h2, m2) = read(&buf[..]).unwrap();
        assert_eq!(h2, h);
        assert_eq!(m2.theta, m.theta);
        assert!(read(&buf[..buf.len() - 1]).is_err());
        assert!(read(&buf[1..]).is_err());
    }
}
