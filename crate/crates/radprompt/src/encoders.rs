//! Frozen encoder boundary: precomputed per-slice image embeddings, a
//! deterministic text-encoder stand-in, and seeded class token embeddings.
//!
//! The text encoder is a fixed two-layer tanh network whose weights come from
//! the documented seeded generator; gradients flow through it to its inputs
//! only. Embedding files are raw little-endian f32 arrays referenced by a
//! JSON manifest.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid2;
use crate::rng::SplitMix64;

/// Mean across slice rows.
pub fn pool_slices(slices: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = slices.first().ok_or_else(|| Error::Empty("slices".into()))?;
    let d = first.len();
    let mut out = vec![0.0; d];
    for row in slices {
        if row.len() != d {
            return Err(Error::DimMismatch(format!(
                "slice embedding width {} != {}",
                row.len(),
                d
            )));
        }
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    let n = slices.len() as f64;
    for o in &mut out {
        *o /= n;
    }
    Ok(out)
}

/// Frozen two-layer tanh network mapping mean-pooled prompt tokens (dim d_t)
/// to the image embedding space (dim d_e).
#[derive(Debug, Clone)]
pub struct FrozenTextEncoder {
    pub seed: u64,
    pub d_t: usize,
    pub hidden: usize,
    pub d_e: usize,
    w1: Vec<f64>, // hidden x d_t
    b1: Vec<f64>,
    w2: Vec<f64>, // d_e x hidden
    b2: Vec<f64>,
}

fn seeded_matrix(rng: &mut SplitMix64, rows: usize, cols: usize, scale: f64) -> Vec<f64> {
    (0..rows * cols).map(|_| rng.next_gaussian() * scale).collect()
}

impl FrozenTextEncoder {
    pub fn new(seed: u64, d_t: usize, hidden: usize, d_e: usize) -> Self {
        let mut rng1 = SplitMix64::derive(seed, 1);
        let mut rng2 = SplitMix64::derive(seed, 2);
        FrozenTextEncoder {
            seed,
            d_t,
            hidden,
            d_e,
            w1: seeded_matrix(&mut rng1, hidden, d_t, 1.0 / (d_t as f64).sqrt()),
            b1: seeded_matrix(&mut rng1, hidden, 1, 0.1),
            w2: seeded_matrix(&mut rng2, d_e, hidden, 1.0 / (hidden as f64).sqrt()),
            b2: seeded_matrix(&mut rng2, d_e, 1, 0.1),
        }
    }

    /// Mean-pools the token sequence, then applies the two affine+tanh layers.
    pub fn encode_prompt(&self, tokens: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(self.encode_with_cache(tokens)?.output)
    }

    pub fn encode_with_cache(&self, tokens: &[Vec<f64>]) -> Result<EncoderCache> {
        if tokens.is_empty() {
            return Err(Error::Empty("token sequence".into()));
        }
        for t in tokens {
            if t.len() != self.d_t {
                return Err(Error::DimMismatch(format!(
                    "token dim {} != d_t {}",
                    t.len(),
                    self.d_t
                )));
            }
        }
        let pooled = pool_slices(tokens)?;
        self.encode_pooled(&pooled, tokens.len())
    }

    /// Forward from an already-pooled token mean.
    pub fn encode_pooled(&self, pooled: &[f64], n_tokens: usize) -> Result<EncoderCache> {
        let h1: Vec<f64> = (0..self.hidden)
            .map(|i| {
                let mut acc = self.b1[i];
                for j in 0..self.d_t {
                    acc += self.w1[i * self.d_t + j] * pooled[j];
                }
                acc.tanh()
            })
            .collect();
        let output: Vec<f64> = (0..self.d_e)
            .map(|i| {
                let mut acc = self.b2[i];
                for j in 0..self.hidden {
                    acc += self.w2[i * self.hidden + j] * h1[j];
                }
                acc.tanh()
            })
            .collect();
        Ok(EncoderCache {
            pooled: pooled.to_vec(),
            h1,
            output,
            n_tokens,
        })
    }

    /// Propagates d(loss)/d(output) back to d(loss)/d(pooled mean). The
    /// per-token gradient is this divided by the token count.
    pub fn backward_to_pooled(&self, cache: &EncoderCache, d_out: &[f64]) -> Vec<f64> {
        // through second tanh
        let dz2: Vec<f64> = (0..self.d_e)
            .map(|i| d_out[i] * (1.0 - cache.output[i] * cache.output[i]))
            .collect();
        // through second affine into h1
        let dh1: Vec<f64> = (0..self.hidden)
            .map(|j| (0..self.d_e).map(|i| self.w2[i * self.hidden + j] * dz2[i]).sum())
            .collect();
        // through first tanh
        let dz1: Vec<f64> = (0..self.hidden)
            .map(|i| dh1[i] * (1.0 - cache.h1[i] * cache.h1[i]))
            .collect();
        // through first affine into the pooled input
        (0..self.d_t)
            .map(|j| (0..self.hidden).map(|i| self.w1[i * self.d_t + j] * dz1[i]).sum())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    pub pooled: Vec<f64>,
    pub h1: Vec<f64>,
    pub output: Vec<f64>,
    pub n_tokens: usize,
}

/// Fixed seeded class token vectors, one per class, from class-index-derived
/// sub-seeds.
pub fn class_tokens(seed: u64, n_classes: usize, d_t: usize) -> Vec<Vec<f64>> {
    (0..n_classes)
        .map(|k| {
            let mut rng = SplitMix64::derive(seed, 1000 + k as u64);
            (0..d_t).map(|_| rng.next_gaussian()).collect()
        })
        .collect()
}

/// Test stand-in for the vision encoder: partitions a square crop into a 4x4
/// grid of patches, takes patch means, applies one fixed seeded affine map.
pub fn toy_image_encoder(crop: &Grid2, d_e: usize, seed: u64) -> Result<Vec<f64>> {
    if crop.rows != crop.cols {
        return Err(Error::DimMismatch(format!(
            "crop {}x{} is not square",
            crop.rows, crop.cols
        )));
    }
    const PATCHES: usize = 4;
    let n = crop.rows;
    let mut patch_means = [0.0f64; PATCHES * PATCHES];
    let mut patch_counts = vec![0usize; PATCHES * PATCHES];
    for r in 0..n {
        for c in 0..n {
            let pr = (r * PATCHES / n.max(1)).min(PATCHES - 1);
            let pc = (c * PATCHES / n.max(1)).min(PATCHES - 1);
            patch_means[pr * PATCHES + pc] += crop.get(r, c);
            patch_counts[pr * PATCHES + pc] += 1;
        }
    }
    for (m, &cnt) in patch_means.iter_mut().zip(&patch_counts) {
        if cnt > 0 {
            *m /= cnt as f64;
        }
    }
    let mut rng = SplitMix64::derive(seed, 7);
    let w = seeded_matrix(&mut rng, d_e, PATCHES * PATCHES, 1.0 / (PATCHES as f64));
    let b = seeded_matrix(&mut rng, d_e, 1, 0.1);
    Ok((0..d_e)
        .map(|i| {
            let mut acc = b[i];
            for j in 0..PATCHES * PATCHES {
                acc += w[i * PATCHES * PATCHES + j] * patch_means[j];
            }
            acc
        })
        .collect())
}

/// Precomputed per-nodule image embeddings plus the frozen class tokens.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    pub d_e: usize,
    pub d_t: usize,
    pub entries: Vec<(String, Vec<Vec<f64>>)>,
    pub class_tokens: Vec<Vec<f64>>,
}

impl EmbeddingStore {
    pub fn pooled(&self, nodule_id: &str) -> Result<Vec<f64>> {
        let (_, rows) = self
            .entries
            .iter()
            .find(|(id, _)| id == nodule_id)
            .ok_or_else(|| Error::IdMisalignment(nodule_id.into(), "embedding store".into()))?;
        pool_slices(rows)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct EmbeddingManifest {
    d_e: usize,
    d_t: usize,
    entries: Vec<EmbeddingEntry>,
    class_tokens: ClassTokenRef,
}

#[derive(Debug, Serialize, Deserialize)]
struct EmbeddingEntry {
    nodule_id: String,
    path: String,
    rows: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct ClassTokenRef {
    path: String,
    n_classes: usize,
}

fn write_f32_array(path: &Path, values: impl Iterator<Item = f64>) -> Result<()> {
    let mut bytes = Vec::new();
    for v in values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    crate::volume::write_bytes(path, &bytes)
}

fn read_f32_array(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let raw = crate::volume::read_bytes(path)?;
    if raw.len() != expected * 4 {
        return Err(Error::LengthMismatch {
            expected,
            actual: raw.len() / 4,
        });
    }
    Ok(raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

pub fn save_embeddings(store: &EmbeddingStore, manifest_path: &Path) -> Result<()> {
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for (i, (id, rows)) in store.entries.iter().enumerate() {
        let rel = format!("emb_{i:04}.f32");
        write_f32_array(&base.join(&rel), rows.iter().flatten().copied())?;
        entries.push(EmbeddingEntry {
            nodule_id: id.clone(),
            path: rel,
            rows: rows.len(),
        });
    }
    let ct_rel = "class_tokens.f32".to_string();
    write_f32_array(
        &base.join(&ct_rel),
        store.class_tokens.iter().flatten().copied(),
    )?;
    let manifest = EmbeddingManifest {
        d_e: store.d_e,
        d_t: store.d_t,
        entries,
        class_tokens: ClassTokenRef {
            path: ct_rel,
            n_classes: store.class_tokens.len(),
        },
    };
    crate::volume::write_json(manifest_path, &manifest)
}

pub fn load_embeddings(manifest_path: &Path) -> Result<EmbeddingStore> {
    let manifest: EmbeddingManifest = crate::volume::read_json(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    let mut seen: Vec<&str> = Vec::new();
    for e in &manifest.entries {
        if seen.contains(&e.nodule_id.as_str()) {
            return Err(Error::InvalidArgument(format!(
                "duplicate nodule_id '{}' in embedding manifest",
                e.nodule_id
            )));
        }
        seen.push(&e.nodule_id);
        let flat = read_f32_array(&base.join(&e.path), e.rows * manifest.d_e)
            .map_err(|err| err.for_nodule(&e.nodule_id))?;
        let rows: Vec<Vec<f64>> = flat.chunks(manifest.d_e).map(|c| c.to_vec()).collect();
        entries.push((e.nodule_id.clone(), rows));
    }
    let ct_flat = read_f32_array(
        &base.join(&manifest.class_tokens.path),
        manifest.class_tokens.n_classes * manifest.d_t,
    )?;
    let class_tokens: Vec<Vec<f64>> = ct_flat.chunks(manifest.d_t).map(|c| c.to_vec()).collect();
    Ok(EmbeddingStore {
        d_e: manifest.d_e,
        d_t: manifest.d_t,
        entries,
        class_tokens,
    })
}
