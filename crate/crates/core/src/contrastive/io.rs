use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::embedding::Embedding;
use super::mining::{MinedSet, Role, Sample};
use crate::error::{Error, Result};
use crate::floorplan::Pose;

const EMB_MAGIC: &[u8; 4] = b"EMB1";

/// Serialize embeddings as `EMB1`, count, dim (u32 LE), then f32 LE values.
pub fn embeddings_to_bytes(embs: &[Embedding]) -> Result<Vec<u8>> {
    let dim = embs.first().map_or(0, Embedding::dim);
    if embs.iter().any(|e| e.dim() != dim) {
        return Err(Error::Validation("embeddings have mixed dimensions".into()));
    }
    let mut out = Vec::with_capacity(12 + 4 * dim * embs.len());
    out.extend_from_slice(EMB_MAGIC);
    out.extend_from_slice(&(embs.len() as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for e in embs {
        for &v in e.as_slice() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Parse an `EMB1` buffer. Vectors are re-normalized after the f32 round trip.
pub fn embeddings_from_bytes(bytes: &[u8], path: &Path) -> Result<Vec<Embedding>> {
    if bytes.len() < 12 || &bytes[..4] != EMB_MAGIC {
        return Err(Error::format(path, "missing EMB1 header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (count, dim) = (word(4), word(8));
    if bytes.len() != 12 + 4 * count * dim {
        return Err(Error::format(
            path,
            format!("expected {} payload bytes for {count}x{dim}, found {}", 4 * count * dim, bytes.len() - 12),
        ));
    }
    let values: Vec<f64> = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    values
        .chunks(dim.max(1))
        .take(count)
        .map(|v| Embedding::normalized(v.to_vec()))
        .collect()
}

pub fn write_embeddings(path: &Path, embs: &[Embedding]) -> Result<()> {
    fs::write(path, embeddings_to_bytes(embs)?).map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: &Path) -> Result<Vec<Embedding>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    embeddings_from_bytes(&bytes, path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSample {
    pub role: Role,
    pub map: usize,
    pub pose: Pose,
    pub files: Vec<String>,
}

/// One JSON line of the sample manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub anchor: usize,
    pub samples: Vec<ManifestSample>,
}

/// Write every mined crop as graymaps under `dir` and a `manifest.jsonl`
/// listing them per anchor.
pub fn write_manifest(sets: &[MinedSet], dir: &Path) -> Result<Vec<ManifestRecord>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut records = Vec::with_capacity(sets.len());
    for set in sets {
        let all = std::iter::once(&set.positive)
            .chain(&set.pos_negatives)
            .chain(&set.ori_negatives);
        let samples = all
            .enumerate()
            .map(|(k, s): (usize, &Sample)| {
                let files = s.crop.write_pgms(dir, &format!("a{:05}_{k:02}", set.anchor))?;
                Ok(ManifestSample {
                    role: s.role,
                    map: s.map,
                    pose: s.pose,
                    files,
                })
            })
            .collect::<Result<_>>()?;
        records.push(ManifestRecord {
            anchor: set.anchor,
            samples,
        });
    }
    let path = dir.join("manifest.jsonl");
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    for r in &records {
        let line = serde_json::to_string(r).expect("manifest record serializes");
        writeln!(f, "{line}").map_err(|e| Error::io(&path, e))?;
    }
    Ok(records)
}
