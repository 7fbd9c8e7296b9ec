//! Per-nodule feature vector assembly: shape features on the original
//! consensus slice, first-order and texture features on the original channel
//! and every filter channel, concatenated in manifest order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::discretize::{discretize_fixed_width, DiscretizedRoi, DEFAULT_BIN_WIDTH};
use crate::error::{Error, Result};
use crate::filters::{all_filter_channels, list_filter_channels_with, DEFAULT_LOG_SIGMAS};
use crate::grid::{Grid2, Mask2};
use crate::preprocess::{crop_mask, crop_nodule, resample_isotropic, shift_intensities};
use crate::texture::{
    feature_names, glcm, gldm, glrlm, glszm, matrix_features, ngtdm, MatrixKind, GLCM_OFFSETS,
    GLRLM_DIRECTIONS,
};
use crate::volume::{consensus_mask, middle_slice, NoduleRecord};

pub const MANIFEST_VERSION: &str = "1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractConfig {
    pub bin_width: f64,
    pub log_sigmas: Vec<f64>,
    pub gldm_alpha: f64,
    pub gldm_distance: i64,
    pub ngtdm_distance: i64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            bin_width: DEFAULT_BIN_WIDTH,
            log_sigmas: DEFAULT_LOG_SIGMAS.to_vec(),
            gldm_alpha: 0.0,
            gldm_distance: 1,
            ngtdm_distance: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestEntry {
    pub channel: String,
    pub feature_class: String,
    pub feature_name: String,
    pub parameters: String,
}

impl ManifestEntry {
    pub fn qualified_name(&self) -> String {
        format!("{}::{}::{}", self.channel, self.feature_class, self.feature_name)
    }
}

/// The ordered feature manifest; its length is the radiomics dimension N_r.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FeatureManifest {
    pub version: String,
    pub entries: Vec<ManifestEntry>,
}

impl FeatureManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.qualified_name()).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::volume::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<FeatureManifest> {
        crate::volume::read_json(path)
    }
}

const FIRSTORDER_NAMES: [&str; 18] = [
    "mean",
    "median",
    "minimum",
    "maximum",
    "range",
    "variance",
    "skewness",
    "kurtosis",
    "energy",
    "entropy",
    "mean_absolute_deviation",
    "root_mean_squared",
    "uniformity",
    "percentile_10",
    "percentile_90",
    "interquartile_range",
    "robust_mean_absolute_deviation",
    "total_energy",
];

const SHAPE2D_NAMES: [&str; 10] = [
    "pixel_surface",
    "perimeter",
    "perimeter_surface_ratio",
    "sphericity",
    "equivalent_diameter",
    "major_axis_length",
    "minor_axis_length",
    "elongation",
    "maximum_diameter",
    "extent",
];

pub fn build_manifest(config: &ExtractConfig) -> FeatureManifest {
    let mut entries = Vec::new();
    for name in SHAPE2D_NAMES {
        entries.push(ManifestEntry {
            channel: "original".into(),
            feature_class: "shape2d".into(),
            feature_name: name.into(),
            parameters: "spacing=1mm".into(),
        });
    }
    let texture_params = [
        (MatrixKind::Glcm, format!("offsets={GLCM_OFFSETS:?} symmetric=true")),
        (MatrixKind::Glrlm, format!("directions={GLRLM_DIRECTIONS:?}")),
        (MatrixKind::Glszm, "connectivity=8".to_string()),
        (MatrixKind::Ngtdm, format!("distance={}", config.ngtdm_distance)),
        (
            MatrixKind::Gldm,
            format!("alpha={} distance={}", config.gldm_alpha, config.gldm_distance),
        ),
    ];
    for channel in list_filter_channels_with(&config.log_sigmas) {
        for name in FIRSTORDER_NAMES {
            entries.push(ManifestEntry {
                channel: channel.clone(),
                feature_class: "firstorder".into(),
                feature_name: name.into(),
                parameters: format!("bin_width={}", config.bin_width),
            });
        }
        for (kind, params) in &texture_params {
            for name in feature_names(*kind) {
                entries.push(ManifestEntry {
                    channel: channel.clone(),
                    feature_class: kind.name().into(),
                    feature_name: name.into(),
                    parameters: params.clone(),
                });
            }
        }
    }
    FeatureManifest {
        version: MANIFEST_VERSION.into(),
        entries,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadiomicsVector {
    pub nodule_id: String,
    pub values: Vec<f64>,
}

/// 18 first-order statistics over the in-ROI intensities. Histogram-based
/// entries (entropy, uniformity) use fixed-width bins of `bin_width`.
pub fn firstorder_features(slice: &Grid2, roi: &Mask2, bin_width: f64) -> Result<Vec<(&'static str, f64)>> {
    let mut values: Vec<f64> = roi.foreground().map(|(r, c)| slice.get(r, c)).collect();
    if values.is_empty() {
        return Err(Error::EmptyRoi);
    }
    let n = values.len() as f64;
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mean = values.iter().sum::<f64>() / n;
    let median = percentile(&values, 50.0);
    let min = values[0];
    let max = *values.last().unwrap();
    let m2 = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    let m4 = values.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let skewness = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
    let kurtosis = if m2 > 0.0 { m4 / (m2 * m2) } else { 0.0 };
    let energy: f64 = values.iter().map(|x| x * x).sum();
    let mad = values.iter().map(|x| (x - mean).abs()).sum::<f64>() / n;
    let rms = (energy / n).sqrt();

    // histogram over fixed-width bins anchored at the minimum
    let d = discretize_fixed_width(slice, roi, bin_width)?;
    let mut hist = vec![0usize; d.n_levels as usize];
    for (r, c) in roi.foreground() {
        hist[d.level(r, c) as usize - 1] += 1;
    }
    let mut entropy = 0.0;
    let mut uniformity = 0.0;
    for &count in &hist {
        if count > 0 {
            let p = count as f64 / n;
            entropy -= p * p.log2();
            uniformity += p * p;
        }
    }

    let p10 = percentile(&values, 10.0);
    let p90 = percentile(&values, 90.0);
    let iqr = percentile(&values, 75.0) - percentile(&values, 25.0);
    let trimmed: Vec<f64> = values.iter().copied().filter(|&x| x >= p10 && x <= p90).collect();
    let rmad = if trimmed.is_empty() {
        0.0
    } else {
        let tm = trimmed.iter().sum::<f64>() / trimmed.len() as f64;
        trimmed.iter().map(|x| (x - tm).abs()).sum::<f64>() / trimmed.len() as f64
    };
    // pixel area is 1 mm^2 after isotropic resampling
    let total_energy = energy;

    Ok(vec![
        ("mean", mean),
        ("median", median),
        ("minimum", min),
        ("maximum", max),
        ("range", max - min),
        ("variance", m2),
        ("skewness", skewness),
        ("kurtosis", kurtosis),
        ("energy", energy),
        ("entropy", entropy),
        ("mean_absolute_deviation", mad),
        ("root_mean_squared", rms),
        ("uniformity", uniformity),
        ("percentile_10", p10),
        ("percentile_90", p90),
        ("interquartile_range", iqr),
        ("robust_mean_absolute_deviation", rmad),
        ("total_energy", total_energy),
    ])
}

/// Linear-interpolation percentile over sorted values (rank q = (n-1) p/100).
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = (n - 1) as f64 * p / 100.0;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// 10 shape features of a 2D mask at 1 mm spacing. Degenerate single-pixel
/// masks get perimeter 4 and elongation 1.
pub fn shape2d_features(roi: &Mask2) -> Result<Vec<(&'static str, f64)>> {
    let area = roi.count();
    if area == 0 {
        return Err(Error::EmptyRoi);
    }
    let coords: Vec<(usize, usize)> = roi.foreground().collect();

    // perimeter: pixel edges facing background or the border
    let mut perimeter = 0.0f64;
    for &(r, c) in &coords {
        let neighbors = [
            (r as i64 - 1, c as i64),
            (r as i64 + 1, c as i64),
            (r as i64, c as i64 - 1),
            (r as i64, c as i64 + 1),
        ];
        for (nr, nc) in neighbors {
            let inside = nr >= 0
                && nc >= 0
                && (nr as usize) < roi.rows
                && (nc as usize) < roi.cols
                && roi.get(nr as usize, nc as usize);
            if !inside {
                perimeter += 1.0;
            }
        }
    }

    let area_f = area as f64;
    let sphericity = 2.0 * (std::f64::consts::PI * area_f).sqrt() / perimeter;
    let equivalent_diameter = 2.0 * (area_f / std::f64::consts::PI).sqrt();

    // second central moments of the pixel centers
    let (mut mr, mut mc) = (0.0, 0.0);
    for &(r, c) in &coords {
        mr += r as f64;
        mc += c as f64;
    }
    mr /= area_f;
    mc /= area_f;
    let (mut srr, mut scc, mut src) = (0.0, 0.0, 0.0);
    for &(r, c) in &coords {
        let dr = r as f64 - mr;
        let dc = c as f64 - mc;
        srr += dr * dr;
        scc += dc * dc;
        src += dr * dc;
    }
    srr /= area_f;
    scc /= area_f;
    src /= area_f;
    // eigenvalues of [[srr, src], [src, scc]]
    let tr = srr + scc;
    let det = srr * scc - src * src;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let lam_major = tr / 2.0 + disc;
    let lam_minor = (tr / 2.0 - disc).max(0.0);
    let major_axis = 4.0 * lam_major.sqrt();
    let minor_axis = 4.0 * lam_minor.sqrt();
    let elongation = if lam_major > 0.0 {
        (lam_minor / lam_major).sqrt()
    } else {
        1.0
    };

    let mut max_diameter = 0.0f64;
    for i in 0..coords.len() {
        for j in (i + 1)..coords.len() {
            let dr = coords[i].0 as f64 - coords[j].0 as f64;
            let dc = coords[i].1 as f64 - coords[j].1 as f64;
            max_diameter = max_diameter.max((dr * dr + dc * dc).sqrt());
        }
    }

    let (rmin, rmax) = coords.iter().fold((usize::MAX, 0), |(lo, hi), &(r, _)| (lo.min(r), hi.max(r)));
    let (cmin, cmax) = coords.iter().fold((usize::MAX, 0), |(lo, hi), &(_, c)| (lo.min(c), hi.max(c)));
    let bbox = ((rmax - rmin + 1) * (cmax - cmin + 1)) as f64;
    let extent = area_f / bbox;

    Ok(vec![
        ("pixel_surface", area_f),
        ("perimeter", perimeter),
        ("perimeter_surface_ratio", perimeter / area_f),
        ("sphericity", sphericity),
        ("equivalent_diameter", equivalent_diameter),
        ("major_axis_length", major_axis),
        ("minor_axis_length", minor_axis),
        ("elongation", elongation),
        ("maximum_diameter", max_diameter),
        ("extent", extent),
    ])
}

fn texture_block(d: &DiscretizedRoi, config: &ExtractConfig) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(75);
    let glcm_m = match glcm(d, &GLCM_OFFSETS, true) {
        Ok(m) => Some(m),
        Err(Error::NoValidPairs) => None,
        Err(e) => return Err(e),
    };
    match glcm_m {
        // no co-occurring pair (single-pixel ROI): all GLCM features take
        // their degenerate value 0
        None => out.extend(std::iter::repeat_n(0.0, 24)),
        Some(m) => out.extend(matrix_features(&m).into_iter().map(|(_, v)| v)),
    }
    out.extend(matrix_features(&glrlm(d, &GLRLM_DIRECTIONS)?).into_iter().map(|(_, v)| v));
    out.extend(matrix_features(&glszm(d)?).into_iter().map(|(_, v)| v));
    out.extend(matrix_features(&ngtdm(d, config.ngtdm_distance)?).into_iter().map(|(_, v)| v));
    out.extend(
        matrix_features(&gldm(d, config.gldm_alpha, config.gldm_distance)?)
            .into_iter()
            .map(|(_, v)| v),
    );
    Ok(out)
}

/// The preprocessed middle-slice inputs feature extraction runs on.
pub struct PreparedSlice {
    pub crop: Grid2,
    pub crop_roi: Mask2,
    /// Full consensus mask of the middle slice (for shape features).
    pub full_roi: Mask2,
    pub middle_slice_index: usize,
}

/// Resamples to 1 mm, shifts intensities by +1000, selects the middle
/// annotated slice and crops around the consensus mask.
pub fn prepare_slice(record: &NoduleRecord) -> Result<PreparedSlice> {
    let attach = |e: Error| e.for_nodule(&record.nodule_id);
    let consensus = consensus_mask(&record.annotator_masks).map_err(attach)?;
    let (vol, mask) = resample_isotropic(&record.volume, &consensus).map_err(attach)?;
    let vol = shift_intensities(&vol).map_err(attach)?;
    let mid = middle_slice(record.slice_range).map_err(attach)?;
    // map the original slice index onto the resampled grid
    let z = ((mid as f64 * record.volume.spacing[0]).round() as usize).min(vol.dims[0] - 1);
    let slice = vol.slice(z);
    let roi = mask.slice(z);
    if roi.count() == 0 {
        return Err(Error::EmptyRoi.for_nodule(&record.nodule_id));
    }
    let crop = crop_nodule(&slice, &roi).map_err(attach)?;
    let crop_roi = crop_mask(&roi).map_err(attach)?;
    Ok(PreparedSlice {
        crop,
        crop_roi,
        full_roi: roi,
        middle_slice_index: z,
    })
}

/// Full per-nodule extraction in manifest order.
pub fn extract_all(record: &NoduleRecord, config: &ExtractConfig) -> Result<RadiomicsVector> {
    let attach = |e: Error| e.for_nodule(&record.nodule_id);
    let prepared = prepare_slice(record)?;
    let mut values = Vec::new();
    values.extend(
        shape2d_features(&prepared.full_roi)
            .map_err(attach)?
            .into_iter()
            .map(|(_, v)| v),
    );

    let mut per_channel = |slice: &Grid2| -> Result<()> {
        values.extend(
            firstorder_features(slice, &prepared.crop_roi, config.bin_width)?
                .into_iter()
                .map(|(_, v)| v),
        );
        let d = discretize_fixed_width(slice, &prepared.crop_roi, config.bin_width)?;
        values.extend(texture_block(&d, config)?);
        Ok(())
    };

    per_channel(&prepared.crop).map_err(attach)?;
    for (_, channel) in all_filter_channels(&prepared.crop, &config.log_sigmas).map_err(attach)? {
        per_channel(&channel).map_err(attach)?;
    }

    if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: idx }.for_nodule(&record.nodule_id));
    }
    Ok(RadiomicsVector {
        nodule_id: record.nodule_id.clone(),
        values,
    })
}

/// Batch extraction over nodules; output order follows the input order
/// regardless of scheduling.
#[cfg(feature = "parallel")]
pub fn extract_batch(records: &[NoduleRecord], config: &ExtractConfig) -> Result<Vec<RadiomicsVector>> {
    use rayon::prelude::*;
    records
        .par_iter()
        .map(|r| extract_all(r, config))
        .collect()
}

#[cfg(not(feature = "parallel"))]
pub fn extract_batch(records: &[NoduleRecord], config: &ExtractConfig) -> Result<Vec<RadiomicsVector>> {
    extract_batch_seq(records, config)
}

pub fn extract_batch_seq(records: &[NoduleRecord], config: &ExtractConfig) -> Result<Vec<RadiomicsVector>> {
    records.iter().map(|r| extract_all(r, config)).collect()
}

/// CSV with header `nodule_id,<qualified feature names>`, rows sorted by
/// nodule_id, values in full double precision (shortest round-trip form).
pub fn write_feature_table(
    manifest: &FeatureManifest,
    vectors: &[RadiomicsVector],
    path: &Path,
) -> Result<()> {
    for v in vectors {
        if v.values.len() != manifest.len() {
            return Err(Error::DimMismatch(format!(
                "vector '{}' has {} values, manifest has {}",
                v.nodule_id,
                v.values.len(),
                manifest.len()
            )));
        }
    }
    let mut sorted: Vec<&RadiomicsVector> = vectors.iter().collect();
    sorted.sort_by(|a, b| a.nodule_id.cmp(&b.nodule_id));
    let mut out = String::new();
    out.push_str("nodule_id");
    for name in manifest.names() {
        out.push(',');
        out.push_str(&name);
    }
    out.push('\n');
    for v in sorted {
        out.push_str(&v.nodule_id);
        for x in &v.values {
            out.push(',');
            out.push_str(&format_value(*x));
        }
        out.push('\n');
    }
    crate::volume::write_bytes(path, out.as_bytes())
}

fn format_value(x: f64) -> String {
    format!("{x}")
}

pub fn read_feature_table(path: &Path) -> Result<(Vec<String>, Vec<RadiomicsVector>)> {
    let text = String::from_utf8(crate::volume::read_bytes(path)?)
        .map_err(|_| Error::InvalidArgument(format!("{}: not utf-8", path.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Empty("feature table".into()))?;
    let names: Vec<String> = header.split(',').skip(1).map(|s| s.to_string()).collect();
    let mut vectors = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let id = parts
            .next()
            .ok_or_else(|| Error::InvalidArgument("missing nodule_id".into()))?
            .to_string();
        let values: Vec<f64> = parts
            .map(|p| {
                p.parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad value '{p}' for '{id}'")))
            })
            .collect::<Result<_>>()?;
        if values.len() != names.len() {
            return Err(Error::LengthMismatch {
                expected: names.len(),
                actual: values.len(),
            });
        }
        vectors.push(RadiomicsVector { nodule_id: id, values });
    }
    Ok((names, vectors))
}
