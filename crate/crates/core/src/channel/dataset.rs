//! `LMCH` channel dataset files.
//!
//! Layout: `b"LMCH"`, one version byte, a little-endian `u32` header length,
//! the JSON header `{rows, cols, sigma_f, sigma_t, count, seeds}`, then
//! `count` grids of `rows·cols` little-endian `f32` (re, im) pairs.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex32;
use serde::{Deserialize, Serialize};

use super::{ChannelError, ComplexGrid};

pub const DATASET_MAGIC: &[u8; 4] = b"LMCH";
pub const DATASET_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDataset {
    pub rows: usize,
    pub cols: usize,
    pub sigma_f: f64,
    pub sigma_t: f64,
    pub seeds: Vec<u64>,
    pub grids: Vec<ComplexGrid>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    rows: usize,
    cols: usize,
    sigma_f: f64,
    sigma_t: f64,
    count: usize,
    seeds: Vec<u64>,
}

impl ChannelDataset {
    pub fn to_bytes(&self) -> Result<Vec<u8>, ChannelError> {
        if self.seeds.len() != self.grids.len() {
            return Err(ChannelError::Format(format!(
                "{} seeds for {} grids",
                self.seeds.len(),
                self.grids.len()
            )));
        }
        let header = Header {
            rows: self.rows,
            cols: self.cols,
            sigma_f: self.sigma_f,
            sigma_t: self.sigma_t,
            count: self.grids.len(),
            seeds: self.seeds.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| ChannelError::Format(e.to_string()))?;
        let mut out = Vec::with_capacity(9 + json.len() + self.grids.len() * self.rows * self.cols * 8);
        out.extend_from_slice(DATASET_MAGIC);
        out.push(DATASET_VERSION);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for g in &self.grids {
            if (g.rows(), g.cols()) != (self.rows, self.cols) {
                return Err(ChannelError::ExtentMismatch {
                    left: format!("dataset {}x{}", self.rows, self.cols),
                    right: format!("grid {}x{}", g.rows(), g.cols()),
                });
            }
            for v in g.values() {
                out.extend_from_slice(&v.re.to_le_bytes());
                out.extend_from_slice(&v.im.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ChannelError> {
        let fmt = |m: &str| ChannelError::Format(m.to_string());
        if bytes.len() < 9 || &bytes[..4] != DATASET_MAGIC {
            return Err(fmt("missing LMCH magic"));
        }
        if bytes[4] != DATASET_VERSION {
            return Err(ChannelError::Format(format!(
                "unsupported version {} (expected {})",
                bytes[4], DATASET_VERSION
            )));
        }
        let header_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let body = &bytes[9..];
        if body.len() < header_len {
            return Err(fmt("truncated header"));
        }
        let header: Header =
            serde_json::from_slice(&body[..header_len]).map_err(|e| ChannelError::Format(e.to_string()))?;
        if header.seeds.len() != header.count {
            return Err(fmt("seed list length differs from count"));
        }
        ComplexGrid::check_extents(header.rows, header.cols)?;
        let cells = header.rows * header.cols;
        let payload = &body[header_len..];
        if payload.len() != header.count * cells * 8 {
            return Err(ChannelError::Format(format!(
                "payload holds {} bytes, header promises {}",
                payload.len(),
                header.count * cells * 8
            )));
        }
        let grids = payload
            .chunks_exact(cells * 8)
            .map(|chunk| {
                let values = chunk
                    .chunks_exact(8)
                    .map(|p| {
                        Complex32::new(
                            f32::from_le_bytes(p[..4].try_into().unwrap()),
                            f32::from_le_bytes(p[4..].try_into().unwrap()),
                        )
                    })
                    .collect();
                ComplexGrid::from_values(header.rows, header.cols, values)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ChannelDataset {
            rows: header.rows,
            cols: header.cols,
            sigma_f: header.sigma_f,
            sigma_t: header.sigma_t,
            seeds: header.seeds,
            grids,
        })
    }
}

pub fn write_dataset(dataset: &ChannelDataset, path: &Path) -> Result<(), ChannelError> {
    let bytes = dataset.to_bytes()?;
    let io = |source| ChannelError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(&bytes).map_err(io)
}

pub fn read_dataset(path: &Path) -> Result<ChannelDataset, ChannelError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|source| ChannelError::Io {
            path: path.display().to_string(),
            source,
        })?;
    ChannelDataset::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::super::gen_channel;
    use super::*;

    fn sample() -> ChannelDataset {
        let seeds = vec![3u64, u64::MAX, 17];
        let grids = seeds
            .iter()
            .map(|&s| gen_channel(s, 8, 12, 1.5, 0.5).unwrap().gains)
            .collect();
        ChannelDataset {
            rows: 8,
            cols: 12,
            sigma_f: 1.5,
            sigma_t: 0.5,
            seeds,
            grids,
        }
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let ds = sample();
        let bytes = ds.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"LMCH");
        let back = ChannelDataset::from_bytes(&bytes).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.lmch");
        write_dataset(&sample(), &path).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), sample());
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = sample().to_bytes().unwrap();
        assert!(ChannelDataset::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong_version = bytes.clone();
        wrong_version[4] = 9;
        let err = ChannelDataset::from_bytes(&wrong_version).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
        let mut wrong_magic = bytes;
        wrong_magic[0] = b'X';
        assert!(ChannelDataset::from_bytes(&wrong_magic).is_err());
    }
}
