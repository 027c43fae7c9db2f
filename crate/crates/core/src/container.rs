//! `TCWU` weight container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "TCWU"                 4 bytes
//! version                u32 (currently 1)
//! manifest_len           u32
//! manifest               manifest_len bytes of UTF-8
//! tensor data            f32 values, back to back
//! ```
//!
//! The manifest is line oriented. The first line is `config <json>`, every
//! following line is `tensor <name> <shape> <offset>` where `shape` is `x`
//! separated and `offset` is the byte offset of the tensor in the data section.
//! Tensors appear in graph order, so encoding is a pure function of the model.

use std::collections::HashMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelWeights};

pub const MAGIC: &[u8; 4] = b"TCWU";
pub const VERSION: u32 = 1;

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorEntry {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Parsed header of a container.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub version: u32,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
}

pub fn encode(model: &ModelWeights) -> Result<Vec<u8>> {
    let config = serde_json::to_string(&model.config)
        .map_err(|e| Error::Container(format!("config serialization: {e}")))?;
    let mut manifest = format!("config {config}\n");
    let mut data = Vec::with_capacity(model.stored_value_count() * 4);
    model.for_each_tensor(|t| {
        let shape = t
            .shape
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join("x");
        manifest.push_str(&format!("tensor {} {} {}\n", t.name, shape, data.len()));
        for v in t.data {
            data.extend_from_slice(&v.to_le_bytes());
        }
    });

    let mut out = Vec::with_capacity(12 + manifest.len() + data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let manifest_len = u32::try_from(manifest.len())
        .map_err(|_| Error::Container("manifest exceeds 4 GiB".into()))?;
    out.extend_from_slice(&manifest_len.to_le_bytes());
    out.extend_from_slice(manifest.as_bytes());
    out.extend_from_slice(&data);
    Ok(out)
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Container("file too short for header".into()))
}

/// Parses the header and returns the manifest plus the data section.
pub fn parse_manifest(bytes: &[u8]) -> Result<(Manifest, &[u8])> {
    if bytes.get(..4) != Some(MAGIC.as_slice()) {
        return Err(Error::Container("bad magic, not a TCWU file".into()));
    }
    let version = read_u32(bytes, 4)?;
    if version != VERSION {
        return Err(Error::Container(format!("unsupported version {version}")));
    }
    let manifest_len = read_u32(bytes, 8)? as usize;
    let text = bytes
        .get(12..12 + manifest_len)
        .ok_or_else(|| Error::Container("manifest truncated".into()))?;
    let text = std::str::from_utf8(text)
        .map_err(|e| Error::Container(format!("manifest is not UTF-8: {e}")))?;
    let data = &bytes[12 + manifest_len..];

    let mut lines = text.lines();
    let config = lines
        .next()
        .and_then(|l| l.strip_prefix("config "))
        .ok_or_else(|| Error::Container("manifest must start with a config line".into()))?;
    let config: ModelConfig =
        serde_json::from_str(config).map_err(|e| Error::Container(format!("config: {e}")))?;

    let mut tensors = Vec::new();
    for line in lines {
        let fields: Vec<&str> = line.split(' ').collect();
        let [kind, name, shape, offset] = fields[..] else {
            return Err(Error::Container(format!(
                "malformed manifest line {line:?}"
            )));
        };
        if kind != "tensor" {
            return Err(Error::Container(format!("unknown manifest entry {kind:?}")));
        }
        let shape = shape
            .split('x')
            .map(str::parse)
            .collect::<std::result::Result<Vec<usize>, _>>()
            .map_err(|e| Error::Container(format!("shape of {name}: {e}")))?;
        let offset = offset
            .parse()
            .map_err(|e| Error::Container(format!("offset of {name}: {e}")))?;
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape,
            offset,
        });
    }
    Ok((
        Manifest {
            version,
            config,
            tensors,
        },
        data,
    ))
}

fn tensor_bytes<'a>(data: &'a [u8], entry: &TensorEntry) -> Result<&'a [u8]> {
    let len = entry.numel() * 4;
    data.get(entry.offset..entry.offset + len).ok_or_else(|| {
        Error::Container(format!(
            "tensor {} at {}+{len} overruns the {}-byte data section",
            entry.name,
            entry.offset,
            data.len()
        ))
    })
}

pub fn decode(bytes: &[u8]) -> Result<ModelWeights> {
    let (manifest, data) = parse_manifest(bytes)?;
    let mut model = ModelWeights::zeros(&manifest.config)?;
    let mut by_name: HashMap<&str, &TensorEntry> = HashMap::new();
    for entry in &manifest.tensors {
        if by_name.insert(entry.name.as_str(), entry).is_some() {
            return Err(Error::Container(format!("duplicate tensor {}", entry.name)));
        }
    }
    let mut used = 0;
    model.try_for_each_tensor_mut(|name, shape, dst| {
        let entry = by_name
            .get(name)
            .ok_or_else(|| Error::Container(format!("missing tensor {name}")))?;
        if entry.shape != shape {
            return Err(Error::Container(format!(
                "tensor {name} has shape {:?}, model expects {shape:?}",
                entry.shape
            )));
        }
        let raw = tensor_bytes(data, entry)?;
        for (v, b) in dst.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(b.try_into().expect("4 bytes"));
        }
        used += 1;
        Ok(())
    })?;
    if used != manifest.tensors.len() {
        return Err(Error::Container(format!(
            "{} tensors in file are not part of the model",
            manifest.tensors.len() - used
        )));
    }
    model.check_finite()?;
    Ok(model)
}

pub fn write_weights(path: impl AsRef<Path>, model: &ModelWeights) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(model)?).map_err(|e| Error::io(path, e))
}

pub fn read_weights(path: impl AsRef<Path>) -> Result<ModelWeights> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// A manifest entry with a SHA-256 prefix of its raw bytes.
#[derive(Debug, Clone)]
pub struct TensorSummary {
    pub entry: TensorEntry,
    pub checksum: String,
}

/// Lists every tensor with its shape and checksum, without building the model.
pub fn inspect(bytes: &[u8]) -> Result<(Manifest, Vec<TensorSummary>)> {
    let (manifest, data) = parse_manifest(bytes)?;
    let summaries = manifest
        .tensors
        .iter()
        .map(|entry| {
            let digest = Sha256::digest(tensor_bytes(data, entry)?);
            let checksum = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
            Ok(TensorSummary {
                entry: entry.clone(),
                checksum,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, summaries))
}
