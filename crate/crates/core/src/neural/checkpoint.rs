//! Binary checkpoint format:
//!
//! ```text
//! magic "RBCNET\r\n" | version u32 | header length u32 | header JSON |
//! array data (f32 LE, header order) | sha256 of everything before
//! ```
//!
//! The header names every array with its shape. Optimizer moments, when
//! present, follow the parameters as `adam.m.*` and `adam.v.*`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::adam::{AdamConfig, OptimizerState};
use super::net::{NetworkConfig, PolicyValueNet, Weights};
use super::tensor::Tensor;
use super::NeuralError;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RBCNET\r\n";
pub const CHECKPOINT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub games_played: u64,
    pub snapshot_id: Option<String>,
    /// Free-form provenance such as the producing stage.
    #[serde(default)]
    pub note: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub net: PolicyValueNet<f32>,
    pub optimizer: Option<OptimizerState<f32>>,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn new(net: PolicyValueNet<f32>) -> Self {
        Self {
            net,
            optimizer: None,
            meta: CheckpointMeta::default(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct OptimizerHeader {
    config: AdamConfig,
    step: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: NetworkConfig,
    meta: CheckpointMeta,
    optimizer: Option<OptimizerHeader>,
    arrays: Vec<ArrayEntry>,
}

fn all_arrays(ckpt: &Checkpoint) -> Vec<(String, &Tensor<f32>)> {
    let mut arrays = ckpt.net.weights.named();
    if let Some(opt) = &ckpt.optimizer {
        arrays.extend(opt.m.named().into_iter().map(|(n, t)| (format!("adam.m.{n}"), t)));
        arrays.extend(opt.v.named().into_iter().map(|(n, t)| (format!("adam.v.{n}"), t)));
    }
    arrays
}

pub fn checkpoint_bytes(ckpt: &Checkpoint) -> Vec<u8> {
    let arrays = all_arrays(ckpt);
    let header = Header {
        config: ckpt.net.config.clone(),
        meta: ckpt.meta.clone(),
        optimizer: ckpt.optimizer.as_ref().map(|o| OptimizerHeader {
            config: o.config,
            step: o.step,
        }),
        arrays: arrays
            .iter()
            .map(|(name, t)| ArrayEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + header.len() + 4 * arrays.iter().map(|(_, t)| t.len()).sum::<usize>());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, t) in &arrays {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

/// Writes through a temporary file and renames, so readers never see a
/// partial checkpoint.
pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<(), NeuralError> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&checkpoint_bytes(ckpt))?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, NeuralError> {
    parse_checkpoint(&fs::read(path)?)
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<Checkpoint, NeuralError> {
    let corrupt = |why: &str| NeuralError::Corrupt(why.to_string());
    if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(corrupt("missing checkpoint magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(NeuralError::Version {
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    if bytes.len() < 16 + DIGEST_LEN {
        return Err(corrupt("file too short"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(corrupt("checksum mismatch (truncated or modified file)"));
    }
    let header_len = u32::from_le_bytes(body[12..16].try_into().unwrap()) as usize;
    let header_end = 16usize
        .checked_add(header_len)
        .filter(|&e| e <= body.len())
        .ok_or_else(|| corrupt("header length exceeds file"))?;
    let header: Header = serde_json::from_slice(&body[16..header_end])
        .map_err(|e| NeuralError::Corrupt(format!("bad header: {e}")))?;
    header.config.validate()?;

    let mut data = &body[header_end..];
    let mut take = |shape: &[usize]| -> Result<Tensor<f32>, NeuralError> {
        let n: usize = shape.iter().product();
        if data.len() < 4 * n {
            return Err(corrupt("array data shorter than header"));
        }
        let (head, rest) = data.split_at(4 * n);
        data = rest;
        let values = head
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Tensor::from_vec(shape, values)
    };

    let mut net = PolicyValueNet::<f32>::zeros(header.config.clone())?;
    let mut optimizer = header.optimizer.as_ref().map(|o| OptimizerState::<f32> {
        config: o.config,
        step: o.step,
        m: Weights::zeros(&header.config),
        v: Weights::zeros(&header.config),
    });
    let mut targets: Vec<(String, &mut Tensor<f32>)> = Vec::new();
    let names: Vec<String> = net.weights.named().into_iter().map(|(n, _)| n).collect();
    targets.extend(names.iter().cloned().zip(net.weights.tensors_mut()));
    if let Some(opt) = optimizer.as_mut() {
        targets.extend(names.iter().map(|n| format!("adam.m.{n}")).zip(opt.m.tensors_mut()));
        targets.extend(names.iter().map(|n| format!("adam.v.{n}")).zip(opt.v.tensors_mut()));
    }
    if targets.len() != header.arrays.len() {
        return Err(corrupt("array count does not match the configuration"));
    }
    for ((name, slot), entry) in targets.into_iter().zip(&header.arrays) {
        if entry.name != name || entry.shape != slot.shape() {
            return Err(NeuralError::Corrupt(format!(
                "array {} {:?} where {name} {:?} was expected",
                entry.name,
                entry.shape,
                slot.shape()
            )));
        }
        *slot = take(&entry.shape)?;
    }
    if !data.is_empty() {
        return Err(corrupt("trailing bytes after array data"));
    }
    Ok(Checkpoint {
        net,
        optimizer,
        meta: header.meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let net = PolicyValueNet::<f32>::new(NetworkConfig::tiny()).unwrap();
        let mut opt = OptimizerState::new(&net.config, AdamConfig::default());
        opt.step = 3;
        opt.m.input_b.data_mut()[1] = 0.25;
        Checkpoint {
            net,
            optimizer: Some(opt),
            meta: CheckpointMeta {
                games_played: 42,
                snapshot_id: Some("s1".into()),
                note: "unit".into(),
            },
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let back = parse_checkpoint(&checkpoint_bytes(&c)).unwrap();
        assert_eq!(back, c);
        let plain = Checkpoint::new(c.net.clone());
        assert_eq!(parse_checkpoint(&checkpoint_bytes(&plain)).unwrap(), plain);
    }

    #[test]
    fn truncation_is_corruption() {
        let bytes = checkpoint_bytes(&sample());
        for cut in [0, 5, 13, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(parse_checkpoint(&bytes[..cut]), Err(NeuralError::Corrupt(_))), "cut {cut}");
        }
    }

    #[test]
    fn flipped_byte_is_corruption() {
        let mut bytes = checkpoint_bytes(&sample());
        let mid = bytes.len() / 2;
        bytes[mid] ^= 1;
        assert!(matches!(parse_checkpoint(&bytes), Err(NeuralError::Corrupt(_))));
    }

    #[test]
    fn future_version_is_a_version_error() {
        let mut bytes = checkpoint_bytes(&sample());
        bytes[8..12].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            parse_checkpoint(&bytes),
            Err(NeuralError::Version { found: 2, supported: 1 })
        ));
    }
}
