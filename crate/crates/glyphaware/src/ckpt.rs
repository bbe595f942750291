//! Single-file checkpoint container: JSON metadata followed by a raw tensor
//! blob. Layout:
//!
//! ```text
//! 8 bytes  magic "GAWCKPT1"
//! 4 bytes  u32 LE metadata length
//! N bytes  metadata JSON (version, kind, config, seed, tensor directory)
//! ...      f32 LE tensor data, concatenated in directory order
//! ```
//!
//! Tensors are stored sorted by name so identical weights always produce
//! identical bytes.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"GAWCKPT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorDirEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub version: u32,
    /// "identifier" or "generator".
    pub kind: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub best_step: usize,
    pub best_val: Option<f64>,
    pub tensors: Vec<TensorDirEntry>,
}

pub fn save(
    path: &Path,
    kind: &str,
    config: serde_json::Value,
    seed: u64,
    best_step: usize,
    best_val: Option<f64>,
    tensors: &[(String, Vec<usize>, Vec<f32>)],
) -> Result<()> {
    let meta = CheckpointMeta {
        version: FORMAT_VERSION,
        kind: kind.to_string(),
        config,
        seed,
        best_step,
        best_val,
        tensors: tensors
            .iter()
            .map(|(name, shape, _)| TensorDirEntry {
                name: name.clone(),
                shape: shape.clone(),
            })
            .collect(),
    };
    let meta_json = serde_json::to_vec(&meta)?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(MAGIC)?;
    file.write_all(&(meta_json.len() as u32).to_le_bytes())?;
    file.write_all(&meta_json)?;
    for (_, shape, data) in tensors {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        for v in data {
            file.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load(path: &Path) -> Result<(CheckpointMeta, HashMap<String, Tensor>)> {
    let mut file = std::io::BufReader::new(
        std::fs::File::open(path).map_err(|_| Error::MissingCheckpoint(path.to_path_buf()))?,
    );
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::CheckpointFormat("bad magic".into()));
    }
    let mut len_bytes = [0u8; 4];
    file.read_exact(&mut len_bytes)?;
    let meta_len = u32::from_le_bytes(len_bytes) as usize;
    let mut meta_buf = vec![0u8; meta_len];
    file.read_exact(&mut meta_buf)?;
    let meta: CheckpointMeta = serde_json::from_slice(&meta_buf)?;
    if meta.version != FORMAT_VERSION {
        return Err(Error::CheckpointFormat(format!(
            "unsupported version {}",
            meta.version
        )));
    }
    let mut tensors = HashMap::new();
    for entry in &meta.tensors {
        let n: usize = entry.shape.iter().product();
        let mut raw = vec![0u8; n * 4];
        file.read_exact(&mut raw)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        tensors.insert(
            entry.name.clone(),
            Tensor::from_vec(data, entry.shape.as_slice(), &Device::Cpu)?,
        );
    }
    Ok((meta, tensors))
}
