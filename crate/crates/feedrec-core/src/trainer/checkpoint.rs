//! Checksummed binary checkpoint container with named tensors.
//!
//! Layout: magic, format version, sha-256 of the payload, payload length,
//! then the payload (config JSON, epoch, seed, tensors as f64 LE). Loading
//! verifies the checksum before parsing and refuses other versions.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::model::{Dims, ModelIndex, Params};

use super::TrainConfig;

const MAGIC: &[u8; 8] = b"FEEDRECK";
const VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub epoch: u32,
    pub seed: u64,
    pub tensors: Vec<(String, Mat)>,
}

impl Checkpoint {
    pub fn from_params(config: &TrainConfig, epoch: u32, params: &Params) -> Self {
        Checkpoint {
            config: config.clone(),
            epoch,
            seed: config.seed,
            tensors: params
                .iter()
                .map(|(_, name, m)| (name.to_string(), m.clone()))
                .collect(),
        }
    }

    fn payload(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        let cfg = serde_json::to_vec(&self.config)
            .map_err(|e| Error::Data(format!("serialize config: {e}")))?;
        buf.write_u32::<LittleEndian>(cfg.len() as u32)?;
        buf.extend_from_slice(&cfg);
        buf.write_u32::<LittleEndian>(self.epoch)?;
        buf.write_u64::<LittleEndian>(self.seed)?;
        buf.write_u32::<LittleEndian>(self.tensors.len() as u32)?;
        for (name, m) in &self.tensors {
            let nb = name.as_bytes();
            buf.write_u16::<LittleEndian>(nb.len() as u16)?;
            buf.extend_from_slice(nb);
            buf.write_u32::<LittleEndian>(m.rows() as u32)?;
            buf.write_u32::<LittleEndian>(m.cols() as u32)?;
            for &v in m.data() {
                buf.write_f64::<LittleEndian>(v)?;
            }
        }
        Ok(buf)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let payload = self.payload()?;
        let digest = Sha256::digest(&payload);
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_all(&digest)?;
        w.write_u64::<LittleEndian>(payload.len() as u64)?;
        w.write_all(&payload)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Integrity("not a checkpoint file".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(Error::Version {
                found: version,
                expected: VERSION,
            });
        }
        let mut digest = [0u8; 32];
        r.read_exact(&mut digest)?;
        let len = r.read_u64::<LittleEndian>()? as usize;
        let mut payload = vec![0u8; len];
        r.read_exact(&mut payload)?;
        if Sha256::digest(&payload).as_slice() != digest {
            return Err(Error::Integrity("checksum mismatch".into()));
        }

        let mut p = &payload[..];
        let cfg_len = p.read_u32::<LittleEndian>()? as usize;
        let mut cfg_bytes = vec![0u8; cfg_len];
        p.read_exact(&mut cfg_bytes)?;
        let config: TrainConfig = serde_json::from_slice(&cfg_bytes)
            .map_err(|e| Error::Integrity(format!("config block: {e}")))?;
        let epoch = p.read_u32::<LittleEndian>()?;
        let seed = p.read_u64::<LittleEndian>()?;
        let n = p.read_u32::<LittleEndian>()? as usize;
        let mut tensors = Vec::with_capacity(n);
        for _ in 0..n {
            let name_len = p.read_u16::<LittleEndian>()? as usize;
            let mut name = vec![0u8; name_len];
            p.read_exact(&mut name)?;
            let rows = p.read_u32::<LittleEndian>()? as usize;
            let cols = p.read_u32::<LittleEndian>()? as usize;
            let mut data = vec![0.0f64; rows * cols];
            for v in data.iter_mut() {
                *v = p.read_f64::<LittleEndian>()?;
            }
            tensors.push((
                String::from_utf8(name).map_err(|_| Error::Integrity("tensor name".into()))?,
                Mat::from_vec(rows, cols, data),
            ));
        }
        Ok(Checkpoint {
            config,
            epoch,
            seed,
            tensors,
        })
    }

    /// Rebuild the parameter registry; vocabulary size is taken from the
    /// stored token table.
    pub fn restore(&self) -> Result<(Params, ModelIndex, Dims)> {
        let vocab = self
            .tensors
            .iter()
            .find(|(n, _)| n == "news.token_table")
            .map(|(_, m)| m.rows())
            .ok_or_else(|| Error::Integrity("token table missing".into()))?;
        let dims = self.config.dims(vocab);
        let mut params = Params::new();
        let idx = ModelIndex::from_tensors(&mut params, &dims, &self.tensors)?;
        Ok((params, idx, dims))
    }
}
