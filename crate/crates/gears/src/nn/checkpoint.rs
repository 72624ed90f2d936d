//! Checkpoint serialization: a JSON manifest next to a little-endian f64
//! blob. Values, both Adam moments and the per-parameter step counts are
//! stored so training can resume exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::store::{ParamEntry, ParamStore};
use super::tensor::Tensor;
use super::NnError;

const FORMAT: &str = "gears-checkpoint-v1";

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    params: Vec<ParamMeta>,
}

#[derive(Serialize, Deserialize)]
struct ParamMeta {
    name: String,
    shape: Vec<usize>,
    /// Offset of the value block in f64 elements; the m and v blocks follow
    /// contiguously, each `shape.product()` elements long.
    offset: u64,
    step: u64,
}

/// Writes `<stem>.json` and `<stem>.bin` into `dir`.
pub fn save(store: &ParamStore, dir: &Path, stem: &str) -> Result<(), NnError> {
    fs::create_dir_all(dir)?;
    let mut params = Vec::with_capacity(store.entries.len());
    let mut blob: Vec<u8> = Vec::new();
    let mut offset = 0u64;
    for (name, entry) in &store.entries {
        let n = entry.value.numel() as u64;
        params.push(ParamMeta {
            name: name.clone(),
            shape: entry.value.shape().to_vec(),
            offset,
            step: entry.step,
        });
        for t in [&entry.value, &entry.m, &entry.v] {
            for x in t.data() {
                blob.extend_from_slice(&x.to_le_bytes());
            }
        }
        offset += 3 * n;
    }
    let manifest = Manifest { format: FORMAT.to_string(), params };
    fs::write(
        dir.join(format!("{stem}.json")),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    fs::write(dir.join(format!("{stem}.bin")), blob)?;
    Ok(())
}

/// Loads a checkpoint written by [`save`].
pub fn load(dir: &Path, stem: &str) -> Result<ParamStore, NnError> {
    let manifest_path = dir.join(format!("{stem}.json"));
    let text = fs::read_to_string(&manifest_path)?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| NnError::BadCheckpoint(format!("{}: {e}", manifest_path.display())))?;
    if manifest.format != FORMAT {
        return Err(NnError::BadCheckpoint(format!(
            "unsupported checkpoint format {:?}",
            manifest.format
        )));
    }
    let blob = fs::read(dir.join(format!("{stem}.bin")))?;
    if blob.len() % 8 != 0 {
        return Err(NnError::BadCheckpoint("blob length not a multiple of 8".into()));
    }
    let floats: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let mut store = ParamStore::new();
    for meta in &manifest.params {
        let n: usize = meta.shape.iter().product();
        let start = meta.offset as usize;
        let end = start + 3 * n;
        if end > floats.len() {
            return Err(NnError::BadCheckpoint(format!(
                "parameter {:?} extends past end of blob",
                meta.name
            )));
        }
        let value = Tensor::from_vec(&meta.shape, floats[start..start + n].to_vec())
            .map_err(|_| NnError::BadCheckpoint(format!("bad shape for {:?}", meta.name)))?;
        let m = Tensor::from_vec(&meta.shape, floats[start + n..start + 2 * n].to_vec()).unwrap();
        let v = Tensor::from_vec(&meta.shape, floats[start + 2 * n..end].to_vec()).unwrap();
        store
            .entries
            .insert(meta.name.clone(), ParamEntry { value, m, v, step: meta.step });
    }
    Ok(store)
}
