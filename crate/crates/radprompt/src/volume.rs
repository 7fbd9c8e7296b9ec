//! Volumetric data model and container I/O.
//!
//! Volumes live in a two-file container: a JSON sidecar header holding
//! dims, spacing (mm per voxel), origin, dtype and endianness, next to a raw
//! little-endian array in C-order. Axis order is [slice, row, col] throughout;
//! `data[z * ny * nx + y * nx + x]`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid2, Mask2};

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelVolume {
    /// Voxels per axis, [z, y, x].
    pub dims: [usize; 3],
    /// Millimetres per voxel, [z, y, x].
    pub spacing: [f64; 3],
    /// Physical position of voxel (0,0,0) in mm; informational.
    pub origin: [f64; 3],
    /// Scalar intensities, C-order.
    pub data: Vec<f32>,
}

impl VoxelVolume {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3], data: Vec<f32>) -> Result<Self> {
        let n = dims[0] * dims[1] * dims[2];
        if data.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: data.len(),
            });
        }
        for (axis, &s) in spacing.iter().enumerate() {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::DimMismatch(format!("spacing[{axis}] = {s} not positive")));
            }
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        Ok(VoxelVolume {
            dims,
            spacing,
            origin,
            data,
        })
    }

    #[inline]
    pub fn get(&self, z: usize, y: usize, x: usize) -> f32 {
        self.data[(z * self.dims[1] + y) * self.dims[2] + x]
    }

    /// Extracts axial slice z as a 2D grid (rows = y, cols = x).
    pub fn slice(&self, z: usize) -> Grid2 {
        let (ny, nx) = (self.dims[1], self.dims[2]);
        let start = z * ny * nx;
        let data = self.data[start..start + ny * nx]
            .iter()
            .map(|&v| v as f64)
            .collect();
        Grid2 {
            rows: ny,
            cols: nx,
            data,
        }
    }
}

/// 3D binary mask sharing dims with its paired volume.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub dims: [usize; 3],
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(dims: [usize; 3], data: Vec<bool>) -> Result<Self> {
        let n = dims[0] * dims[1] * dims[2];
        if data.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: data.len(),
            });
        }
        Ok(BinaryMask { dims, data })
    }

    #[inline]
    pub fn get(&self, z: usize, y: usize, x: usize) -> bool {
        self.data[(z * self.dims[1] + y) * self.dims[2] + x]
    }

    pub fn slice(&self, z: usize) -> Mask2 {
        let (ny, nx) = (self.dims[1], self.dims[2]);
        let start = z * ny * nx;
        Mask2 {
            rows: ny,
            cols: nx,
            data: self.data[start..start + ny * nx].to_vec(),
        }
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Benign,
    Unsure,
    Malignant,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::Benign => 0,
            Label::Unsure => 1,
            Label::Malignant => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Benign => "benign",
            Label::Unsure => "unsure",
            Label::Malignant => "malignant",
        }
    }
}

/// One nodule: volume, per-annotator masks, annotation scores, derived label.
#[derive(Debug, Clone)]
pub struct NoduleRecord {
    pub nodule_id: String,
    pub volume: VoxelVolume,
    pub annotator_masks: Vec<BinaryMask>,
    pub scores: Vec<f64>,
    pub label: Label,
    pub slice_range: (i64, i64),
}

impl NoduleRecord {
    pub fn new(
        nodule_id: String,
        volume: VoxelVolume,
        annotator_masks: Vec<BinaryMask>,
        scores: Vec<f64>,
        slice_range: (i64, i64),
    ) -> Result<Self> {
        for mask in &annotator_masks {
            if mask.dims != volume.dims {
                return Err(Error::DimMismatch(format!(
                    "mask dims {:?} != volume dims {:?}",
                    mask.dims, volume.dims
                ))
                .for_nodule(&nodule_id));
            }
        }
        if slice_range.0 > slice_range.1 {
            return Err(Error::InvertedRange(slice_range.0, slice_range.1).for_nodule(&nodule_id));
        }
        let label = derive_label(&scores).map_err(|e| e.for_nodule(&nodule_id))?;
        Ok(NoduleRecord {
            nodule_id,
            volume,
            annotator_masks,
            scores,
            label,
            slice_range,
        })
    }
}

/// Benign below mean 2.5, malignant above 3.5, unsure in [2.5, 3.5].
pub fn derive_label(scores: &[f64]) -> Result<Label> {
    if scores.is_empty() {
        return Err(Error::Empty("scores".into()));
    }
    for &s in scores {
        if !(1.0..=5.0).contains(&s) {
            return Err(Error::ScoreOutOfRange(s));
        }
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok(if mean < 2.5 {
        Label::Benign
    } else if mean > 3.5 {
        Label::Malignant
    } else {
        Label::Unsure
    })
}

/// Voxelwise vote: foreground where at least half the annotators agree.
pub fn consensus_mask(annotator_masks: &[BinaryMask]) -> Result<BinaryMask> {
    let first = annotator_masks
        .first()
        .ok_or_else(|| Error::Empty("annotator_masks".into()))?;
    let dims = first.dims;
    for m in annotator_masks {
        if m.dims != dims {
            return Err(Error::DimMismatch(format!(
                "annotator mask dims {:?} != {:?}",
                m.dims, dims
            )));
        }
    }
    let n = annotator_masks.len();
    let data = (0..first.data.len())
        .map(|i| {
            let votes = annotator_masks.iter().filter(|m| m.data[i]).count();
            2 * votes >= n
        })
        .collect();
    BinaryMask::new(dims, data)
}

/// Middle slice between the annotated endpoints, floor convention.
pub fn middle_slice(slice_range: (i64, i64)) -> Result<i64> {
    let (first, last) = slice_range;
    if first > last {
        return Err(Error::InvertedRange(first, last));
    }
    Ok((first + last).div_euclid(2))
}

#[derive(Debug, Serialize, Deserialize)]
struct VolumeHeader {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    dtype: String,
    endianness: String,
    data: String,
}

fn raw_path_for(header_path: &Path, rel: &str) -> PathBuf {
    header_path.parent().unwrap_or(Path::new(".")).join(rel)
}

/// Writes `<path>` (JSON header) and the raw array next to it. `path` should
/// end in `.json`; the raw file takes the `.raw` extension.
pub fn save_volume(volume: &VoxelVolume, path: &Path) -> Result<()> {
    let raw_name = raw_name_of(path);
    let header = VolumeHeader {
        dims: volume.dims,
        spacing: volume.spacing,
        origin: volume.origin,
        dtype: "f32".into(),
        endianness: "little".into(),
        data: raw_name.clone(),
    };
    write_json(path, &header)?;
    let mut bytes = Vec::with_capacity(volume.data.len() * 4);
    for v in &volume.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_bytes(&raw_path_for(path, &raw_name), &bytes)
}

pub fn load_volume(path: &Path) -> Result<VoxelVolume> {
    let header: VolumeHeader = read_json(path)?;
    if header.dtype != "f32" || header.endianness != "little" {
        return Err(Error::MalformedHeader {
            path: path.display().to_string(),
            reason: format!("unsupported dtype/endianness {}/{}", header.dtype, header.endianness),
        });
    }
    let raw = read_bytes(&raw_path_for(path, &header.data))?;
    let n = header.dims[0] * header.dims[1] * header.dims[2];
    if raw.len() != n * 4 {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: raw.len() / 4,
        });
    }
    let data: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    VoxelVolume::new(header.dims, header.spacing, header.origin, data)
}

pub fn save_mask(mask: &BinaryMask, path: &Path) -> Result<()> {
    let raw_name = raw_name_of(path);
    let header = VolumeHeader {
        dims: mask.dims,
        spacing: [1.0; 3],
        origin: [0.0; 3],
        dtype: "u8".into(),
        endianness: "little".into(),
        data: raw_name.clone(),
    };
    write_json(path, &header)?;
    let bytes: Vec<u8> = mask.data.iter().map(|&b| b as u8).collect();
    write_bytes(&raw_path_for(path, &raw_name), &bytes)
}

pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    let header: VolumeHeader = read_json(path)?;
    if header.dtype != "u8" {
        return Err(Error::MalformedHeader {
            path: path.display().to_string(),
            reason: format!("expected dtype u8, found {}", header.dtype),
        });
    }
    let raw = read_bytes(&raw_path_for(path, &header.data))?;
    let n = header.dims[0] * header.dims[1] * header.dims[2];
    if raw.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: raw.len(),
        });
    }
    BinaryMask::new(header.dims, raw.iter().map(|&b| b != 0).collect())
}

fn raw_name_of(header_path: &Path) -> String {
    let stem = header_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into());
    format!("{stem}.raw")
}

/// One entry of the nodule metadata JSON array.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoduleMeta {
    pub nodule_id: String,
    pub volume_path: String,
    pub mask_paths: Vec<String>,
    pub scores: Vec<f64>,
    pub slice_range: (i64, i64),
}

/// Loads the metadata array and resolves volume/mask paths relative to the
/// metadata file's directory.
pub fn load_dataset(meta_path: &Path) -> Result<Vec<NoduleRecord>> {
    let metas: Vec<NoduleMeta> = read_json(meta_path)?;
    let base = meta_path.parent().unwrap_or(Path::new("."));
    metas
        .into_iter()
        .map(|m| {
            let volume = load_volume(&base.join(&m.volume_path))
                .map_err(|e| e.for_nodule(&m.nodule_id))?;
            let masks = m
                .mask_paths
                .iter()
                .map(|p| load_mask(&base.join(p)))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.for_nodule(&m.nodule_id))?;
            NoduleRecord::new(m.nodule_id, volume, masks, m.scores, m.slice_range)
        })
        .collect()
}

pub fn save_dataset_meta(metas: &[NoduleMeta], path: &Path) -> Result<()> {
    write_json(path, &metas)
}

/// Imports annotation scores from CSV (columns: nodule_id, annotator, score),
/// grouped by nodule in order of first appearance.
pub fn import_scores_csv(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Csv {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut out: Vec<(String, Vec<f64>)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv {
            path: path.display().to_string(),
            source: e,
        })?;
        let id = record
            .get(0)
            .ok_or_else(|| Error::InvalidArgument("missing nodule_id column".into()))?
            .to_string();
        let score: f64 = record
            .get(2)
            .ok_or_else(|| Error::InvalidArgument("missing score column".into()))?
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad score for '{id}'")))?;
        if !(1.0..=5.0).contains(&score) {
            return Err(Error::ScoreOutOfRange(score));
        }
        match out.iter_mut().find(|(k, _)| *k == id) {
            Some((_, v)) => v.push(score),
            None => out.push((id, vec![score])),
        }
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.display().to_string(),
        source: e,
    })?;
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(bytes)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_thresholds() {
        assert_eq!(derive_label(&[2.0, 2.0, 3.0]).unwrap(), Label::Benign);
        assert_eq!(derive_label(&[4.0, 4.0, 5.0]).unwrap(), Label::Malignant);
        assert_eq!(derive_label(&[2.5]).unwrap(), Label::Unsure);
        assert_eq!(derive_label(&[3.5]).unwrap(), Label::Unsure);
        assert!(derive_label(&[]).is_err());
        assert!(derive_label(&[0.5]).is_err());
        assert!(derive_label(&[5.5]).is_err());
    }

    #[test]
    fn consensus_at_half() {
        let dims = [1, 1, 1];
        let marked = BinaryMask::new(dims, vec![true]).unwrap();
        let clear = BinaryMask::new(dims, vec![false]).unwrap();
        // 2 of 4 -> foreground
        let c = consensus_mask(&[marked.clone(), marked.clone(), clear.clone(), clear.clone()])
            .unwrap();
        assert!(c.data[0]);
        // 1 of 4 -> background
        let c = consensus_mask(&[marked.clone(), clear.clone(), clear.clone(), clear.clone()])
            .unwrap();
        assert!(!c.data[0]);
        // single annotator
        let c = consensus_mask(std::slice::from_ref(&marked)).unwrap();
        assert!(c.data[0]);
    }

    #[test]
    fn consensus_idempotent_and_permutation_invariant() {
        let dims = [1, 2, 2];
        let m = BinaryMask::new(dims, vec![true, false, true, false]).unwrap();
        let c = consensus_mask(&[m.clone(), m.clone(), m.clone()]).unwrap();
        assert_eq!(c, m);

        let a = BinaryMask::new(dims, vec![true, true, false, false]).unwrap();
        let b = BinaryMask::new(dims, vec![false, true, true, false]).unwrap();
        let ab = consensus_mask(&[a.clone(), b.clone()]).unwrap();
        let ba = consensus_mask(&[b, a]).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn middle_slice_floor() {
        assert_eq!(middle_slice((10, 14)).unwrap(), 12);
        assert_eq!(middle_slice((10, 13)).unwrap(), 11);
        assert_eq!(middle_slice((7, 7)).unwrap(), 7);
        assert!(middle_slice((8, 7)).is_err());
    }

    #[test]
    fn volume_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vol.json");
        let vol = VoxelVolume::new([4, 4, 4], [1.0, 1.0, 1.0], [0.0; 3], vec![0.0; 64]).unwrap();
        save_volume(&vol, &path).unwrap();
        assert_eq!(load_volume(&path).unwrap(), vol);

        // negative HU survives verbatim
        let mut data = vec![0.0f32; 8];
        data[0] = -500.0;
        let vol = VoxelVolume::new([2, 2, 2], [2.0, 2.0, 2.0], [0.0; 3], data).unwrap();
        let path = dir.path().join("neg.json");
        save_volume(&vol, &path).unwrap();
        let back = load_volume(&path).unwrap();
        assert_eq!(back.get(0, 0, 0), -500.0);
        assert_eq!(back, vol);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(matches!(
            VoxelVolume::new([2, 2, 2], [1.0; 3], [0.0; 3], vec![0.0; 7]),
            Err(Error::LengthMismatch { expected: 8, actual: 7 })
        ));
    }

    #[test]
    fn nonfinite_rejected_with_index() {
        let mut data = vec![0.0f32; 8];
        data[5] = f32::NAN;
        assert!(matches!(
            VoxelVolume::new([2, 2, 2], [1.0; 3], [0.0; 3], data),
            Err(Error::NonFinite { index: 5 })
        ));
    }

    #[test]
    fn scores_csv_import() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        std::fs::write(&path, "nodule_id,annotator,score\nn1,a,3\nn2,a,4\nn1,b,2\n").unwrap();
        let got = import_scores_csv(&path).unwrap();
        assert_eq!(got, vec![("n1".into(), vec![3.0, 2.0]), ("n2".into(), vec![4.0])]);
    }
}
