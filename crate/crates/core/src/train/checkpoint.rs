//! Binary checkpoints.
//!
//! ```text
//! "LUMN"                      magic
//! u32 LE                      format version (1)
//! #seed=<u64>\n               initialization seed
//! <path> f32 <d0>x<d1>...\n   one line per tensor, sorted by path
//! \n                          end of manifest
//! f32 LE ...                  tensor data in manifest order
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::CheckpointError;
use crate::nets::{architecture, ModelParams};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"LUMN";
pub const VERSION: u32 = 1;

pub fn encode(params: &ModelParams<f32>) -> Vec<u8> {
    let mut manifest = format!("#seed={}\n", params.seed());
    for (path, t) in params.iter() {
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        let _ = writeln!(manifest, "{path} f32 {}", dims.join("x"));
    }
    manifest.push('\n');
    let mut out = Vec::with_capacity(8 + manifest.len() + 4 * params.num_scalars());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(manifest.as_bytes());
    for (_, t) in params.iter() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn manifest_err(path: &str, detail: impl Into<String>) -> CheckpointError {
    CheckpointError::Manifest { path: path.to_string(), detail: detail.into() }
}

pub fn decode(bytes: &[u8]) -> Result<ModelParams<f32>, CheckpointError> {
    if bytes.len() < 4 {
        return Err(CheckpointError::Truncated(format!("{} bytes, no header", bytes.len())));
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let Some(v) = bytes.get(4..8) else {
        return Err(CheckpointError::Truncated("missing format version".into()));
    };
    let version = u32::from_le_bytes(v.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let rest = &bytes[8..];
    let end = rest
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| CheckpointError::Truncated("manifest has no blank-line terminator".into()))?;
    let manifest = std::str::from_utf8(&rest[..end + 1]).map_err(|_| manifest_err("<manifest>", "not UTF-8"))?;
    let mut data = &rest[end + 2..];

    let arch: BTreeMap<String, Vec<usize>> = architecture().into_iter().collect();
    let mut seed = 0;
    let mut tensors = BTreeMap::new();
    for line in manifest.lines() {
        if let Some(s) = line.strip_prefix("#seed=") {
            seed = s.trim().parse().map_err(|_| manifest_err("#seed", format!("bad seed `{s}`")))?;
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [path, dtype, dims] = fields[..] else {
            return Err(manifest_err(line, "expected `<path> <dtype> <shape>`"));
        };
        if dtype != "f32" {
            return Err(manifest_err(path, format!("unsupported dtype `{dtype}`")));
        }
        let shape: Vec<usize> = dims
            .split('x')
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| manifest_err(path, format!("bad shape `{dims}`")))?;
        match arch.get(path) {
            None => return Err(manifest_err(path, "not part of the architecture")),
            Some(expect) if *expect != shape => {
                return Err(manifest_err(path, format!("shape {shape:?}, architecture expects {expect:?}")))
            }
            _ => {}
        }
        let n: usize = shape.iter().product();
        if data.len() < 4 * n {
            return Err(CheckpointError::Truncated(format!(
                "`{path}` needs {} bytes, {} left",
                4 * n,
                data.len()
            )));
        }
        let vals: Vec<f32> =
            data[..4 * n].chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))).collect();
        data = &data[4 * n..];
        if tensors.insert(path.to_string(), Tensor::new(shape, vals).expect("length matches")).is_some() {
            return Err(manifest_err(path, "listed twice"));
        }
    }
    if !data.is_empty() {
        return Err(manifest_err("<end>", format!("{} bytes after the last tensor", data.len())));
    }
    if let Some(missing) = arch.keys().find(|p| !tensors.contains_key(*p)) {
        return Err(manifest_err(missing, "missing from checkpoint"));
    }
    Ok(ModelParams::from_tensors(tensors, seed).expect("validated against the architecture"))
}

pub fn save(params: &ModelParams<f32>, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, encode(params))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ModelParams<f32>, CheckpointError> {
    decode(&std::fs::read(path)?)
}
