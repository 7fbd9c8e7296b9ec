//! The eight image filter banks applied before intensity feature extraction.
//!
//! All convolutions use symmetric (mirror) padding. Scaling constants are the
//! ones recorded in the feature manifest:
//!   square      f(x) = (c x)^2 with c = 1/sqrt(max|x|)
//!   squareroot  f(x) = sign(x) sqrt(c |x|) with c = max|x|
//!   logarithm   f(x) = sign(x) ln(|x| + 1)
//!   exponential f(x) = exp(c x) with c = ln(max|x|) / max|x|
//! so square/squareroot outputs stay within the input magnitude range.

use crate::error::{Error, Result};
use crate::grid::Grid2;

/// LoG scales in mm, configurable through the run config.
pub const DEFAULT_LOG_SIGMAS: [f64; 3] = [1.0, 2.0, 3.0];

#[derive(Debug, Clone)]
pub struct FilterBankOutput {
    pub name: String,
    pub channels: Vec<(String, Grid2)>,
}

pub const FILTER_IDS: [&str; 8] = [
    "wavelet",
    "log",
    "square",
    "squareroot",
    "logarithm",
    "exponential",
    "gradient",
    "lbp2d",
];

pub fn apply_filter(slice: &Grid2, filter: &str) -> Result<FilterBankOutput> {
    apply_filter_with(slice, filter, &DEFAULT_LOG_SIGMAS)
}

pub fn apply_filter_with(slice: &Grid2, filter: &str, log_sigmas: &[f64]) -> Result<FilterBankOutput> {
    let channels = match filter {
        "wavelet" => {
            let (ll, lh, hl, hh) = haar_undecimated(slice);
            vec![
                ("wavelet-LL".to_string(), ll),
                ("wavelet-LH".to_string(), lh),
                ("wavelet-HL".to_string(), hl),
                ("wavelet-HH".to_string(), hh),
            ]
        }
        "log" => log_sigmas
            .iter()
            .map(|&sigma| (format!("log-sigma-{sigma}"), laplacian_of_gaussian(slice, sigma)))
            .collect(),
        "square" => {
            let m = max_abs(slice);
            let out = if m > 0.0 {
                slice.map(|x| x * x / m)
            } else {
                slice.map(|_| 0.0)
            };
            vec![("square".to_string(), out)]
        }
        "squareroot" => {
            let m = max_abs(slice);
            vec![(
                "squareroot".to_string(),
                slice.map(|x| x.signum() * (m * x.abs()).sqrt()),
            )]
        }
        "logarithm" => vec![(
            "logarithm".to_string(),
            slice.map(|x| x.signum() * (x.abs() + 1.0).ln()),
        )],
        "exponential" => {
            let m = max_abs(slice);
            let c = if m > 0.0 { m.ln() / m } else { 0.0 };
            vec![("exponential".to_string(), slice.map(|x| (c * x).exp()))]
        }
        "gradient" => vec![("gradient".to_string(), gradient_magnitude(slice))],
        "lbp2d" => vec![("lbp2d".to_string(), lbp_riu2(slice))],
        other => return Err(Error::UnknownFilter(other.to_string())),
    };
    Ok(FilterBankOutput {
        name: filter.to_string(),
        channels,
    })
}

/// Deterministic channel ordering shared by the feature manifest.
pub fn list_filter_channels() -> Vec<String> {
    list_filter_channels_with(&DEFAULT_LOG_SIGMAS)
}

pub fn list_filter_channels_with(log_sigmas: &[f64]) -> Vec<String> {
    let mut out = vec!["original".to_string()];
    for id in FILTER_IDS {
        match id {
            "wavelet" => {
                for band in ["LL", "LH", "HL", "HH"] {
                    out.push(format!("wavelet-{band}"));
                }
            }
            "log" => {
                for &sigma in log_sigmas {
                    out.push(format!("log-sigma-{sigma}"));
                }
            }
            other => out.push(other.to_string()),
        }
    }
    out
}

/// Computes every filter channel for a slice, in manifest order (without the
/// leading "original").
pub fn all_filter_channels(slice: &Grid2, log_sigmas: &[f64]) -> Result<Vec<(String, Grid2)>> {
    let mut out = Vec::new();
    for id in FILTER_IDS {
        out.extend(apply_filter_with(slice, id, log_sigmas)?.channels);
    }
    Ok(out)
}

fn max_abs(slice: &Grid2) -> f64 {
    slice.data.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

/// Single-level undecimated Haar transform with kernels L = [1/2, 1/2] and
/// H = [1/2, -1/2] over samples (i, i+1); LL of a constant image is that
/// constant, the detail bands of a constant image are zero.
fn haar_undecimated(slice: &Grid2) -> (Grid2, Grid2, Grid2, Grid2) {
    let (rows, cols) = (slice.rows, slice.cols);
    // pass along columns (horizontal): low/high of (x[c], x[c+1])
    let mut low_c = Grid2::filled(rows, cols, 0.0);
    let mut high_c = Grid2::filled(rows, cols, 0.0);
    for r in 0..rows {
        for c in 0..cols {
            let a = slice.get(r, c);
            let b = slice.get_mirrored(r as i64, c as i64 + 1);
            low_c.set(r, c, 0.5 * (a + b));
            high_c.set(r, c, 0.5 * (a - b));
        }
    }
    // pass along rows (vertical)
    let vertical = |src: &Grid2| -> (Grid2, Grid2) {
        let mut low = Grid2::filled(rows, cols, 0.0);
        let mut high = Grid2::filled(rows, cols, 0.0);
        for r in 0..rows {
            for c in 0..cols {
                let a = src.get(r, c);
                let b = src.get_mirrored(r as i64 + 1, c as i64);
                low.set(r, c, 0.5 * (a + b));
                high.set(r, c, 0.5 * (a - b));
            }
        }
        (low, high)
    };
    let (ll, hl) = vertical(&low_c);
    let (lh, hh) = vertical(&high_c);
    (ll, lh, hl, hh)
}

/// LoG kernel truncated at radius ceil(4 sigma) and shifted to exact zero sum,
/// so constant inputs map to exactly zero.
fn laplacian_of_gaussian(slice: &Grid2, sigma: f64) -> Grid2 {
    let radius = (4.0 * sigma).ceil() as i64;
    let size = (2 * radius + 1) as usize;
    let mut kernel = vec![0.0f64; size * size];
    let s2 = sigma * sigma;
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let r2 = (dy * dy + dx * dx) as f64;
            let v = (r2 - 2.0 * s2) / (s2 * s2) * (-r2 / (2.0 * s2)).exp();
            kernel[((dy + radius) * (2 * radius + 1) + (dx + radius)) as usize] = v;
        }
    }
    let mean = kernel.iter().sum::<f64>() / kernel.len() as f64;
    for v in &mut kernel {
        *v -= mean;
    }
    convolve(slice, &kernel, radius)
}

fn convolve(slice: &Grid2, kernel: &[f64], radius: i64) -> Grid2 {
    let mut out = Grid2::filled(slice.rows, slice.cols, 0.0);
    let width = 2 * radius + 1;
    for r in 0..slice.rows {
        for c in 0..slice.cols {
            let mut acc = 0.0;
            for dy in -radius..=radius {
                for dx in -radius..=radius {
                    let k = kernel[((dy + radius) * width + (dx + radius)) as usize];
                    acc += k * slice.get_mirrored(r as i64 + dy, c as i64 + dx);
                }
            }
            out.set(r, c, acc);
        }
    }
    out
}

/// Gradient magnitude from central differences (mirror-padded borders).
fn gradient_magnitude(slice: &Grid2) -> Grid2 {
    let mut out = Grid2::filled(slice.rows, slice.cols, 0.0);
    for r in 0..slice.rows {
        for c in 0..slice.cols {
            let gy = 0.5
                * (slice.get_mirrored(r as i64 + 1, c as i64)
                    - slice.get_mirrored(r as i64 - 1, c as i64));
            let gx = 0.5
                * (slice.get_mirrored(r as i64, c as i64 + 1)
                    - slice.get_mirrored(r as i64, c as i64 - 1));
            out.set(r, c, (gx * gx + gy * gy).sqrt());
        }
    }
    out
}

/// Neighbor ring for LBP (radius 1, 8 integer neighbors), in circular order.
const LBP_RING: [(i64, i64); 8] = [
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Rotation-invariant uniform LBP (riu2): patterns with at most two 0/1
/// transitions map to their popcount (0..=8), the rest to 9.
fn lbp_riu2(slice: &Grid2) -> Grid2 {
    let mut out = Grid2::filled(slice.rows, slice.cols, 0.0);
    for r in 0..slice.rows {
        for c in 0..slice.cols {
            let center = slice.get(r, c);
            let mut bits = [false; 8];
            for (i, (dr, dc)) in LBP_RING.iter().enumerate() {
                bits[i] = slice.get_mirrored(r as i64 + dr, c as i64 + dc) >= center;
            }
            let transitions = (0..8).filter(|&i| bits[i] != bits[(i + 1) % 8]).count();
            let code = if transitions <= 2 {
                bits.iter().filter(|&&b| b).count()
            } else {
                9
            };
            out.set(r, c, code as f64);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(v: f64) -> Grid2 {
        Grid2::filled(6, 6, v)
    }

    #[test]
    fn wavelet_constant() {
        let out = apply_filter(&constant(5.0), "wavelet").unwrap();
        assert_eq!(out.channels.len(), 4);
        let (ll_name, ll) = &out.channels[0];
        assert_eq!(ll_name, "wavelet-LL");
        assert!(ll.data.iter().all(|&v| (v - 5.0).abs() < 1e-12));
        for (_, band) in &out.channels[1..] {
            assert!(band.data.iter().all(|&v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn log_of_constant_is_zero() {
        let out = apply_filter(&constant(7.0), "log").unwrap();
        assert_eq!(out.channels.len(), 3);
        for (_, ch) in &out.channels {
            assert!(ch.data.iter().all(|&v| v.abs() < 1e-9), "nonzero LoG response");
        }
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let out = apply_filter(&constant(3.0), "gradient").unwrap();
        assert!(out.channels[0].1.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lbp_constant_single_code() {
        let out = apply_filter(&constant(2.0), "lbp2d").unwrap();
        let grid = &out.channels[0].1;
        let first = grid.get(1, 1);
        assert!(grid.data.iter().all(|&v| v == first));
        assert_eq!(first, 8.0); // all neighbors >= center, uniform
    }

    #[test]
    fn square_stays_in_range() {
        let g = Grid2::new(1, 4, vec![-200.0, -1.0, 3.0, 150.0]).unwrap();
        let out = apply_filter(&g, "square").unwrap();
        let m = 200.0;
        assert!(out.channels[0].1.data.iter().all(|&v| v.abs() <= m + 1e-9));
    }

    #[test]
    fn squareroot_stays_in_range_and_keeps_sign() {
        let g = Grid2::new(1, 3, vec![-100.0, 0.0, 50.0]).unwrap();
        let out = apply_filter(&g, "squareroot").unwrap();
        let data = &out.channels[0].1.data;
        assert!(data[0] < 0.0 && data[2] > 0.0 && data[1] == 0.0);
        assert!(data.iter().all(|&v| v.abs() <= 100.0 + 1e-9));
    }

    #[test]
    fn unknown_filter_rejected() {
        assert!(matches!(
            apply_filter(&constant(0.0), "sobel"),
            Err(Error::UnknownFilter(_))
        ));
    }

    #[test]
    fn channel_list_order() {
        let list = list_filter_channels();
        assert_eq!(list[0], "original");
        assert_eq!(list.len(), 14);
        assert_eq!(
            list[1..5].to_vec(),
            vec!["wavelet-LL", "wavelet-LH", "wavelet-HL", "wavelet-HH"]
        );
        assert_eq!(list.last().unwrap(), "lbp2d");
        // stable across calls
        assert_eq!(list, list_filter_channels());
    }

    #[test]
    fn all_channels_match_list() {
        let g = Grid2::new(4, 4, (0..16).map(|i| i as f64 * 10.0).collect()).unwrap();
        let chans = all_filter_channels(&g, &DEFAULT_LOG_SIGMAS).unwrap();
        let names: Vec<String> = chans.iter().map(|(n, _)| n.clone()).collect();
        assert_eq!(names, list_filter_channels()[1..].to_vec());
        for (_, ch) in &chans {
            assert_eq!((ch.rows, ch.cols), (4, 4));
        }
    }
}
