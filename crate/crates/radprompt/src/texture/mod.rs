//! Construction of the five gray-level texture matrices over a discretized ROI.
//!
//! Conventions (recorded in the feature manifest):
//! - GLCM: distance-1 offsets {(0,1),(1,0),(1,1),(1,-1)}, symmetric, merged
//!   into one matrix before normalization.
//! - GLRLM: the same four directions, runs truncated at the ROI boundary,
//!   merged into one matrix.
//! - GLSZM/GLDM: 8-connectivity / Chebyshev distance 1.
//! - NGTDM: Chebyshev distance 1; pixels with no in-ROI neighbor are excluded.

mod features;

pub use features::{
    feature_names, matrix_features, FeatureValues, GLCM_FEATURE_COUNT, GLDM_FEATURE_COUNT,
    GLRLM_FEATURE_COUNT, GLSZM_FEATURE_COUNT, NGTDM_FEATURE_COUNT,
};

use crate::discretize::DiscretizedRoi;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    Glcm,
    Glrlm,
    Glszm,
    Ngtdm,
    Gldm,
}

impl MatrixKind {
    pub fn name(self) -> &'static str {
        match self {
            MatrixKind::Glcm => "glcm",
            MatrixKind::Glrlm => "glrlm",
            MatrixKind::Glszm => "glszm",
            MatrixKind::Ngtdm => "ngtdm",
            MatrixKind::Gldm => "gldm",
        }
    }
}

/// A texture matrix as raw counts. Rows index gray level 1..=n_levels; the
/// column meaning depends on the kind (co-occurring level, run length, zone
/// size, the (n, s) columns for NGTDM, or dependence count starting at 0).
#[derive(Debug, Clone)]
pub struct TextureMatrix {
    pub kind: MatrixKind,
    pub n_levels: u32,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    /// In-ROI pixel count of the source.
    pub n_pixels: usize,
    /// Number of merged directions (GLCM/GLRLM), 1 otherwise.
    pub n_directions: usize,
    pub params: String,
}

impl TextureMatrix {
    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    fn add(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] += v;
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Counts divided by their sum; entries of the result sum to 1.
    pub fn normalized(&self) -> Vec<f64> {
        let t = self.total();
        if t == 0.0 {
            return vec![0.0; self.data.len()];
        }
        self.data.iter().map(|&v| v / t).collect()
    }

    fn new(kind: MatrixKind, n_levels: u32, cols: usize, d: &DiscretizedRoi, params: String) -> Self {
        TextureMatrix {
            kind,
            n_levels,
            rows: n_levels as usize,
            cols,
            data: vec![0.0; n_levels as usize * cols],
            n_pixels: d.roi_pixels(),
            n_directions: 1,
            params,
        }
    }
}

pub const GLCM_OFFSETS: [(i64, i64); 4] = [(0, 1), (1, 0), (1, 1), (1, -1)];
pub const GLRLM_DIRECTIONS: [(i64, i64); 4] = [(0, 1), (1, 0), (1, 1), (1, -1)];

/// Co-occurrence counts of in-ROI pixel pairs (p, p + offset), merged over
/// the given offsets; symmetric mode also counts the reversed pair.
pub fn glcm(d: &DiscretizedRoi, offsets: &[(i64, i64)], symmetric: bool) -> Result<TextureMatrix> {
    if d.roi_pixels() == 0 {
        return Err(Error::EmptyRoi);
    }
    for &(dr, dc) in offsets {
        if dr == 0 && dc == 0 {
            return Err(Error::InvalidArgument("zero offset".into()));
        }
    }
    let ng = d.n_levels as usize;
    let mut m = TextureMatrix::new(
        MatrixKind::Glcm,
        d.n_levels,
        ng,
        d,
        format!("offsets={offsets:?} symmetric={symmetric}"),
    );
    m.n_directions = offsets.len();
    for r in 0..d.rows {
        for c in 0..d.cols {
            if !d.in_roi(r, c) {
                continue;
            }
            let a = d.level(r, c) as usize;
            for &(dr, dc) in offsets {
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                if nr < 0 || nc < 0 || nr as usize >= d.rows || nc as usize >= d.cols {
                    continue;
                }
                let (nr, nc) = (nr as usize, nc as usize);
                if !d.in_roi(nr, nc) {
                    continue;
                }
                let b = d.level(nr, nc) as usize;
                m.add(a - 1, b - 1, 1.0);
                if symmetric {
                    m.add(b - 1, a - 1, 1.0);
                }
            }
        }
    }
    if m.total() == 0.0 {
        return Err(Error::NoValidPairs);
    }
    Ok(m)
}

/// Run-length counts: maximal same-level runs along each direction, truncated
/// at the ROI boundary, merged over directions.
pub fn glrlm(d: &DiscretizedRoi, directions: &[(i64, i64)]) -> Result<TextureMatrix> {
    if d.roi_pixels() == 0 {
        return Err(Error::EmptyRoi);
    }
    let max_run = d.rows.max(d.cols);
    let mut m = TextureMatrix::new(
        MatrixKind::Glrlm,
        d.n_levels,
        max_run,
        d,
        format!("directions={directions:?}"),
    );
    m.n_directions = directions.len();
    let in_bounds = |r: i64, c: i64| r >= 0 && c >= 0 && (r as usize) < d.rows && (c as usize) < d.cols;
    for &(dr, dc) in directions {
        for r in 0..d.rows {
            for c in 0..d.cols {
                if !d.in_roi(r, c) {
                    continue;
                }
                // start of a run: predecessor missing, out of ROI, or different level
                let (pr, pc) = (r as i64 - dr, c as i64 - dc);
                let level = d.level(r, c);
                if in_bounds(pr, pc)
                    && d.in_roi(pr as usize, pc as usize)
                    && d.level(pr as usize, pc as usize) == level
                {
                    continue;
                }
                let mut len = 1usize;
                let (mut nr, mut nc) = (r as i64 + dr, c as i64 + dc);
                while in_bounds(nr, nc)
                    && d.in_roi(nr as usize, nc as usize)
                    && d.level(nr as usize, nc as usize) == level
                {
                    len += 1;
                    nr += dr;
                    nc += dc;
                }
                m.add(level as usize - 1, len - 1, 1.0);
            }
        }
    }
    Ok(m)
}

/// Size-zone counts: 8-connected zones of equal gray level.
pub fn glszm(d: &DiscretizedRoi) -> Result<TextureMatrix> {
    if d.roi_pixels() == 0 {
        return Err(Error::EmptyRoi);
    }
    let np = d.roi_pixels();
    let mut m = TextureMatrix::new(MatrixKind::Glszm, d.n_levels, np, d, "connectivity=8".into());
    let mut visited = vec![false; d.rows * d.cols];
    let mut stack = Vec::new();
    for r in 0..d.rows {
        for c in 0..d.cols {
            let idx = r * d.cols + c;
            if visited[idx] || !d.in_roi(r, c) {
                continue;
            }
            let level = d.level(r, c);
            let mut size = 0usize;
            visited[idx] = true;
            stack.push((r, c));
            while let Some((cr, cc)) = stack.pop() {
                size += 1;
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        let (nr, nc) = (cr as i64 + dr, cc as i64 + dc);
                        if nr < 0 || nc < 0 || nr as usize >= d.rows || nc as usize >= d.cols {
                            continue;
                        }
                        let (nr, nc) = (nr as usize, nc as usize);
                        let nidx = nr * d.cols + nc;
                        if !visited[nidx] && d.in_roi(nr, nc) && d.level(nr, nc) == level {
                            visited[nidx] = true;
                            stack.push((nr, nc));
                        }
                    }
                }
            }
            m.add(level as usize - 1, size - 1, 1.0);
        }
    }
    Ok(m)
}

/// Neighbouring gray tone difference columns: for each level, the pixel count
/// n, probability p, and summed absolute difference s from the mean of the
/// in-ROI neighborhood. Column layout: [n, p, s].
pub fn ngtdm(d: &DiscretizedRoi, distance: i64) -> Result<TextureMatrix> {
    if d.roi_pixels() == 0 {
        return Err(Error::EmptyRoi);
    }
    if distance < 1 {
        return Err(Error::InvalidArgument("ngtdm distance must be >= 1".into()));
    }
    let mut m = TextureMatrix::new(MatrixKind::Ngtdm, d.n_levels, 3, d, format!("distance={distance}"));
    let mut total = 0usize;
    for r in 0..d.rows {
        for c in 0..d.cols {
            if !d.in_roi(r, c) {
                continue;
            }
            let mut sum = 0.0f64;
            let mut count = 0usize;
            for dr in -distance..=distance {
                for dc in -distance..=distance {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr < 0 || nc < 0 || nr as usize >= d.rows || nc as usize >= d.cols {
                        continue;
                    }
                    if d.in_roi(nr as usize, nc as usize) {
                        sum += d.level(nr as usize, nc as usize) as f64;
                        count += 1;
                    }
                }
            }
            if count == 0 {
                continue; // isolated pixel carries no gray tone difference
            }
            let level = d.level(r, c);
            let mean = sum / count as f64;
            m.add(level as usize - 1, 0, 1.0);
            m.add(level as usize - 1, 2, (level as f64 - mean).abs());
            total += 1;
        }
    }
    if total > 0 {
        for lvl in 0..m.rows {
            let p = m.get(lvl, 0) / total as f64;
            m.data[lvl * 3 + 1] = p;
        }
    }
    Ok(m)
}

/// Dependence counts: D[a][k] pixels of level a with exactly k neighbors
/// (Chebyshev distance <= distance) whose level differs by at most alpha.
pub fn gldm(d: &DiscretizedRoi, alpha: f64, distance: i64) -> Result<TextureMatrix> {
    if d.roi_pixels() == 0 {
        return Err(Error::EmptyRoi);
    }
    if distance < 1 {
        return Err(Error::InvalidArgument("gldm distance must be >= 1".into()));
    }
    let max_neighbors = ((2 * distance + 1) * (2 * distance + 1) - 1) as usize;
    let mut m = TextureMatrix::new(
        MatrixKind::Gldm,
        d.n_levels,
        max_neighbors + 1,
        d,
        format!("alpha={alpha} distance={distance}"),
    );
    for r in 0..d.rows {
        for c in 0..d.cols {
            if !d.in_roi(r, c) {
                continue;
            }
            let level = d.level(r, c);
            let mut dep = 0usize;
            for dr in -distance..=distance {
                for dc in -distance..=distance {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr < 0 || nc < 0 || nr as usize >= d.rows || nc as usize >= d.cols {
                        continue;
                    }
                    if d.in_roi(nr as usize, nc as usize)
                        && (d.level(nr as usize, nc as usize) as f64 - level as f64).abs() <= alpha
                    {
                        dep += 1;
                    }
                }
            }
            m.add(level as usize - 1, dep, 1.0);
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::discretize_fixed_width;
    use crate::grid::{Grid2, Mask2};

    fn roi_from(levels: &[&[u32]]) -> DiscretizedRoi {
        let rows = levels.len();
        let cols = levels[0].len();
        let data: Vec<f64> = levels
            .iter()
            .flat_map(|row| row.iter().map(|&l| l as f64 * 25.0))
            .collect();
        let grid = Grid2::new(rows, cols, data).unwrap();
        let mask = Mask2::filled(rows, cols, true);
        discretize_fixed_width(&grid, &mask, 25.0).unwrap()
    }

    #[test]
    fn glcm_two_horizontal_pairs() {
        let d = roi_from(&[&[1, 1], &[2, 2]]);
        let m = glcm(&d, &[(0, 1)], true).unwrap();
        let p = m.normalized();
        assert_eq!(p[0], 0.5); // P(1,1)
        assert_eq!(p[3], 0.5); // P(2,2)
        assert_eq!(p[1], 0.0);
    }

    #[test]
    fn glcm_constant_roi() {
        let d = roi_from(&[&[1, 1, 1], &[1, 1, 1]]);
        let m = glcm(&d, &GLCM_OFFSETS, true).unwrap();
        let p = m.normalized();
        assert_eq!(p, vec![1.0]);
    }

    #[test]
    fn glcm_symmetric_equals_transpose() {
        let d = roi_from(&[&[1, 2, 3], &[3, 1, 2], &[2, 2, 1]]);
        let m = glcm(&d, &GLCM_OFFSETS, true).unwrap();
        for i in 0..m.rows {
            for j in 0..m.cols {
                assert_eq!(m.get(i, j), m.get(j, i));
            }
        }
    }

    #[test]
    fn glcm_rejects_zero_offset() {
        let d = roi_from(&[&[1, 2]]);
        assert!(glcm(&d, &[(0, 0)], true).is_err());
    }

    #[test]
    fn glcm_no_valid_pairs() {
        // single pixel: no pair fits any offset
        let grid = Grid2::filled(3, 3, 0.0);
        let mut mask = Mask2::filled(3, 3, false);
        mask.set(1, 1, true);
        let d = discretize_fixed_width(&grid, &mask, 25.0).unwrap();
        assert!(matches!(glcm(&d, &GLCM_OFFSETS, true), Err(Error::NoValidPairs)));
    }

    #[test]
    fn glrlm_row_runs() {
        let d = roi_from(&[&[1, 1, 1, 2]]);
        let m = glrlm(&d, &[(0, 1)]).unwrap();
        assert_eq!(m.get(0, 2), 1.0); // R(1,3)
        assert_eq!(m.get(1, 0), 1.0); // R(2,1)
        assert_eq!(m.total(), 2.0);
    }

    #[test]
    fn glrlm_constant_line() {
        let d = roi_from(&[&[1], &[1], &[1], &[1]]);
        let m = glrlm(&d, &[(1, 0)]).unwrap();
        assert_eq!(m.get(0, 3), 1.0);
        assert_eq!(m.total(), 1.0);
    }

    #[test]
    fn glrlm_runs_partition_pixels() {
        let d = roi_from(&[&[1, 2, 2, 3], &[3, 3, 1, 1], &[2, 1, 3, 2]]);
        for dir in GLRLM_DIRECTIONS {
            let m = glrlm(&d, &[dir]).unwrap();
            let covered: f64 = (0..m.rows)
                .flat_map(|i| (0..m.cols).map(move |l| (i, l)))
                .map(|(i, l)| m.get(i, l) * (l + 1) as f64)
                .sum();
            assert_eq!(covered, d.roi_pixels() as f64);
        }
    }

    #[test]
    fn glszm_diagonal_merge() {
        // checkerboard 2x2: diagonal same-level cells merge under 8-connectivity
        let d = roi_from(&[&[1, 2], &[2, 1]]);
        let m = glszm(&d).unwrap();
        assert_eq!(m.get(0, 1), 1.0); // S(1, size 2)
        assert_eq!(m.get(1, 1), 1.0); // S(2, size 2)
        assert_eq!(m.total(), 2.0);
    }

    #[test]
    fn glszm_constant_single_zone() {
        let d = roi_from(&[&[1, 1], &[1, 1]]);
        let m = glszm(&d).unwrap();
        assert_eq!(m.get(0, 3), 1.0);
        assert_eq!(m.total(), 1.0);
    }

    #[test]
    fn glszm_zones_partition_pixels() {
        let d = roi_from(&[&[1, 2, 2], &[3, 3, 1], &[2, 1, 3]]);
        let m = glszm(&d).unwrap();
        let covered: f64 = (0..m.rows)
            .flat_map(|i| (0..m.cols).map(move |z| (i, z)))
            .map(|(i, z)| m.get(i, z) * (z + 1) as f64)
            .sum();
        assert_eq!(covered, d.roi_pixels() as f64);
    }

    #[test]
    fn ngtdm_constant_has_zero_s() {
        let d = roi_from(&[&[1, 1, 1], &[1, 1, 1]]);
        let m = ngtdm(&d, 1).unwrap();
        assert_eq!(m.get(0, 2), 0.0);
        assert_eq!(m.get(0, 1), 1.0); // p_1 = 1
    }

    #[test]
    fn ngtdm_line_analog() {
        let d = roi_from(&[&[1, 2, 1]]);
        let m = ngtdm(&d, 1).unwrap();
        // center pixel: level 2, neighbor mean 1 -> s_2 gains 1
        assert_eq!(m.get(1, 2), 1.0);
        // probabilities sum to 1
        let psum: f64 = (0..m.rows).map(|i| m.get(i, 1)).sum();
        assert!((psum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gldm_constant_center() {
        let d = roi_from(&[&[1, 1, 1], &[1, 1, 1], &[1, 1, 1]]);
        let m = gldm(&d, 0.0, 1).unwrap();
        assert_eq!(m.get(0, 8), 1.0); // center has all 8 neighbors dependent
        assert_eq!(m.total(), 9.0);
    }

    #[test]
    fn gldm_isolated_pixel() {
        let grid = Grid2::filled(3, 3, 0.0);
        let mut mask = Mask2::filled(3, 3, false);
        mask.set(1, 1, true);
        let d = discretize_fixed_width(&grid, &mask, 25.0).unwrap();
        let m = gldm(&d, 0.0, 1).unwrap();
        assert_eq!(m.get(0, 0), 1.0);
        assert_eq!(m.total(), 1.0);
    }

    #[test]
    fn normalized_sums_to_one() {
        let d = roi_from(&[&[1, 3, 2, 2], &[2, 1, 1, 3]]);
        for m in [
            glcm(&d, &GLCM_OFFSETS, true).unwrap(),
            glrlm(&d, &GLRLM_DIRECTIONS).unwrap(),
            glszm(&d).unwrap(),
            gldm(&d, 0.0, 1).unwrap(),
        ] {
            let s: f64 = m.normalized().iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "{:?} sums to {s}", m.kind);
        }
    }
}
