//! Fixed-bin-width gray-level discretization anchored at the ROI minimum.

use crate::error::{Error, Result};
use crate::grid::{Grid2, Mask2};

pub const DEFAULT_BIN_WIDTH: f64 = 25.0;

/// Bin indices over a cropped slice. `grid` holds bin(x) = floor((x - min)/w) + 1
/// inside the ROI and 0 outside; `n_levels` is the largest bin present.
#[derive(Debug, Clone)]
pub struct DiscretizedRoi {
    pub grid: Vec<u32>,
    pub rows: usize,
    pub cols: usize,
    pub roi: Mask2,
    pub n_levels: u32,
}

impl DiscretizedRoi {
    #[inline]
    pub fn level(&self, r: usize, c: usize) -> u32 {
        self.grid[r * self.cols + c]
    }

    #[inline]
    pub fn in_roi(&self, r: usize, c: usize) -> bool {
        self.roi.get(r, c)
    }

    pub fn roi_pixels(&self) -> usize {
        self.roi.count()
    }
}

pub fn discretize_fixed_width(slice: &Grid2, roi: &Mask2, width: f64) -> Result<DiscretizedRoi> {
    if slice.rows != roi.rows || slice.cols != roi.cols {
        return Err(Error::DimMismatch(format!(
            "slice {}x{} vs roi {}x{}",
            slice.rows, slice.cols, roi.rows, roi.cols
        )));
    }
    if !(width > 0.0) {
        return Err(Error::InvalidArgument(format!("bin width {width} not positive")));
    }
    let mut min = f64::INFINITY;
    for (r, c) in roi.foreground() {
        min = min.min(slice.get(r, c));
    }
    if min.is_infinite() {
        return Err(Error::EmptyRoi);
    }
    let mut grid = vec![0u32; slice.rows * slice.cols];
    let mut n_levels = 0u32;
    for (r, c) in roi.foreground() {
        let bin = ((slice.get(r, c) - min) / width).floor() as u32 + 1;
        grid[r * slice.cols + c] = bin;
        n_levels = n_levels.max(bin);
    }
    Ok(DiscretizedRoi {
        grid,
        rows: slice.rows,
        cols: slice.cols,
        roi: roi.clone(),
        n_levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_of_width_25() {
        let slice = Grid2::new(2, 2, vec![0.0, 24.0, 25.0, 74.0]).unwrap();
        let roi = Mask2::filled(2, 2, true);
        let d = discretize_fixed_width(&slice, &roi, 25.0).unwrap();
        assert_eq!(d.grid, vec![1, 1, 2, 3]);
        assert_eq!(d.n_levels, 3);
    }

    #[test]
    fn constant_roi_single_level() {
        let slice = Grid2::filled(3, 3, 42.0);
        let roi = Mask2::filled(3, 3, true);
        let d = discretize_fixed_width(&slice, &roi, 25.0).unwrap();
        assert!(d.grid.iter().all(|&b| b == 1));
        assert_eq!(d.n_levels, 1);
    }

    #[test]
    fn shift_invariant() {
        let slice = Grid2::new(2, 2, vec![3.0, 40.0, 77.0, 120.0]).unwrap();
        let shifted = slice.map(|v| v + 1000.0);
        let roi = Mask2::filled(2, 2, true);
        let a = discretize_fixed_width(&slice, &roi, 25.0).unwrap();
        let b = discretize_fixed_width(&shifted, &roi, 25.0).unwrap();
        assert_eq!(a.grid, b.grid);
        assert_eq!(a.n_levels, b.n_levels);
    }

    #[test]
    fn empty_roi_rejected() {
        let slice = Grid2::filled(2, 2, 0.0);
        let roi = Mask2::filled(2, 2, false);
        assert!(matches!(
            discretize_fixed_width(&slice, &roi, 25.0),
            Err(Error::EmptyRoi)
        ));
    }

    #[test]
    fn n_levels_matches_range_formula() {
        let slice = Grid2::new(1, 4, vec![10.0, 35.0, 60.0, 110.0]).unwrap();
        let roi = Mask2::filled(1, 4, true);
        let d = discretize_fixed_width(&slice, &roi, 25.0).unwrap();
        let expected = ((110.0f64 - 10.0) / 25.0).floor() as u32 + 1;
        assert_eq!(d.n_levels, expected);
    }
}
