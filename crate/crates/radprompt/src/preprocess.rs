//! Geometric and intensity preprocessing: isotropic resampling, the +1000
//! intensity shift, nodule cropping, and bilinear resizing.

use crate::error::{Error, Result};
use crate::grid::{Grid2, Mask2};
use crate::volume::{BinaryMask, VoxelVolume};

/// Resamples volume and mask to unit (1 mm) spacing. Image values are
/// trilinear, mask values nearest-neighbour. Grids are corner-aligned: output
/// sample k on each axis sits at physical coordinate k mm from the first
/// input sample; samples past the last input sample clamp to the edge.
/// Output dims per axis are round(dim * spacing).
pub fn resample_isotropic(
    volume: &VoxelVolume,
    mask: &BinaryMask,
) -> Result<(VoxelVolume, BinaryMask)> {
    if mask.dims != volume.dims {
        return Err(Error::DimMismatch(format!(
            "mask dims {:?} != volume dims {:?}",
            mask.dims, volume.dims
        )));
    }
    for axis in 0..3 {
        if volume.dims[axis] < 2 && volume.spacing[axis] != 1.0 {
            return Err(Error::DegenerateAxis(axis));
        }
    }
    if volume.spacing == [1.0, 1.0, 1.0] {
        return Ok((volume.clone(), mask.clone()));
    }

    let out_dims = [
        (volume.dims[0] as f64 * volume.spacing[0]).round() as usize,
        (volume.dims[1] as f64 * volume.spacing[1]).round() as usize,
        (volume.dims[2] as f64 * volume.spacing[2]).round() as usize,
    ];
    let n = out_dims[0] * out_dims[1] * out_dims[2];
    let mut out_data = Vec::with_capacity(n);
    let mut out_mask = Vec::with_capacity(n);

    let src = |axis: usize, k: usize| -> f64 {
        // physical k mm back to input index, clamped to the sampled extent
        let pos = k as f64 / volume.spacing[axis];
        pos.min(volume.dims[axis] as f64 - 1.0)
    };

    for z in 0..out_dims[0] {
        let pz = src(0, z);
        for y in 0..out_dims[1] {
            let py = src(1, y);
            for x in 0..out_dims[2] {
                let px = src(2, x);
                out_data.push(trilinear(volume, pz, py, px) as f32);
                let nz = pz.round() as usize;
                let ny = py.round() as usize;
                let nx = px.round() as usize;
                out_mask.push(mask.get(nz, ny, nx));
            }
        }
    }

    let out_vol = VoxelVolume::new(out_dims, [1.0, 1.0, 1.0], volume.origin, out_data)?;
    let out_mask = BinaryMask::new(out_dims, out_mask)?;
    Ok((out_vol, out_mask))
}

fn trilinear(v: &VoxelVolume, z: f64, y: f64, x: f64) -> f64 {
    let z0 = z.floor() as usize;
    let y0 = y.floor() as usize;
    let x0 = x.floor() as usize;
    let z1 = (z0 + 1).min(v.dims[0] - 1);
    let y1 = (y0 + 1).min(v.dims[1] - 1);
    let x1 = (x0 + 1).min(v.dims[2] - 1);
    let fz = z - z0 as f64;
    let fy = y - y0 as f64;
    let fx = x - x0 as f64;
    let mut acc = 0.0;
    for (zi, wz) in [(z0, 1.0 - fz), (z1, fz)] {
        for (yi, wy) in [(y0, 1.0 - fy), (y1, fy)] {
            for (xi, wx) in [(x0, 1.0 - fx), (x1, fx)] {
                let w = wz * wy * wx;
                if w != 0.0 {
                    acc += w * v.get(zi, yi, xi) as f64;
                }
            }
        }
    }
    acc
}

/// Right-shifts every intensity by exactly 1000 units.
pub fn shift_intensities(volume: &VoxelVolume) -> Result<VoxelVolume> {
    let data = volume.data.iter().map(|&v| v + 1000.0).collect();
    VoxelVolume::new(volume.dims, volume.spacing, volume.origin, data)
}

pub fn shift_slice(slice: &Grid2) -> Grid2 {
    slice.map(|v| v + 1000.0)
}

/// Crop geometry for a mask slice: foreground centroid (rounded to the
/// nearest pixel) and the square side round(2 * d_eq), d_eq = 2 sqrt(A / pi).
pub fn crop_geometry(mask_slice: &Mask2) -> Result<(i64, i64, usize)> {
    let area = mask_slice.count();
    if area == 0 {
        return Err(Error::EmptyRoi);
    }
    let (mut sr, mut sc) = (0.0f64, 0.0f64);
    for (r, c) in mask_slice.foreground() {
        sr += r as f64;
        sc += c as f64;
    }
    let cr = (sr / area as f64).round() as i64;
    let cc = (sc / area as f64).round() as i64;
    let d_eq = 2.0 * (area as f64 / std::f64::consts::PI).sqrt();
    let side = (2.0 * d_eq).round().max(1.0) as usize;
    Ok((cr, cc, side))
}

/// Square crop with side round(2 * d_eq), centered on the foreground
/// centroid; out-of-bounds pixels are zero-padded. The crop starts at
/// centroid - side/2 on each axis.
pub fn crop_nodule(slice: &Grid2, mask_slice: &Mask2) -> Result<Grid2> {
    if slice.rows != mask_slice.rows || slice.cols != mask_slice.cols {
        return Err(Error::DimMismatch(format!(
            "slice {}x{} vs mask {}x{}",
            slice.rows, slice.cols, mask_slice.rows, mask_slice.cols
        )));
    }
    let (cr, cc, side) = crop_geometry(mask_slice)?;
    Ok(crop_at(slice, cr, cc, side))
}

/// Crops the consensus mask with the same geometry so the ROI aligns with the
/// cropped slice.
pub fn crop_mask(mask_slice: &Mask2) -> Result<Mask2> {
    let (cr, cc, side) = crop_geometry(mask_slice)?;
    let r0 = cr - (side / 2) as i64;
    let c0 = cc - (side / 2) as i64;
    let mut out = Mask2::filled(side, side, false);
    for r in 0..side {
        for c in 0..side {
            let (sr, sc) = (r0 + r as i64, c0 + c as i64);
            if sr >= 0 && sc >= 0 && (sr as usize) < mask_slice.rows && (sc as usize) < mask_slice.cols
            {
                out.set(r, c, mask_slice.get(sr as usize, sc as usize));
            }
        }
    }
    Ok(out)
}

fn crop_at(slice: &Grid2, cr: i64, cc: i64, side: usize) -> Grid2 {
    let r0 = cr - (side / 2) as i64;
    let c0 = cc - (side / 2) as i64;
    let mut out = Grid2::filled(side, side, 0.0);
    for r in 0..side {
        for c in 0..side {
            let (sr, sc) = (r0 + r as i64, c0 + c as i64);
            if sr >= 0 && sc >= 0 && (sr as usize) < slice.rows && (sc as usize) < slice.cols {
                out.set(r, c, slice.get(sr as usize, sc as usize));
            }
        }
    }
    out
}

/// Bilinear resize to out_size x out_size, align-corners convention: output
/// sample j maps to input position j * (in - 1) / (out - 1).
pub fn resize_bilinear(crop: &Grid2, out_size: usize) -> Result<Grid2> {
    if out_size == 0 {
        return Err(Error::InvalidArgument("out_size must be positive".into()));
    }
    if crop.rows == 0 || crop.cols == 0 {
        return Err(Error::Empty("crop".into()));
    }
    if crop.rows == out_size && crop.cols == out_size {
        return Ok(crop.clone());
    }
    let scale = |n_in: usize| -> f64 {
        if out_size == 1 {
            0.0
        } else {
            (n_in as f64 - 1.0) / (out_size as f64 - 1.0)
        }
    };
    let (sr, sc) = (scale(crop.rows), scale(crop.cols));
    let mut out = Grid2::filled(out_size, out_size, 0.0);
    for r in 0..out_size {
        let pr = r as f64 * sr;
        let r0 = pr.floor() as usize;
        let r1 = (r0 + 1).min(crop.rows - 1);
        let fr = pr - r0 as f64;
        for c in 0..out_size {
            let pc = c as f64 * sc;
            let c0 = pc.floor() as usize;
            let c1 = (c0 + 1).min(crop.cols - 1);
            let fc = pc - c0 as f64;
            let top = crop.get(r0, c0) * (1.0 - fc) + crop.get(r0, c1) * fc;
            let bot = crop.get(r1, c0) * (1.0 - fc) + crop.get(r1, c1) * fc;
            out.set(r, c, top * (1.0 - fr) + bot * fr);
        }
    }
    Ok(out)
}
