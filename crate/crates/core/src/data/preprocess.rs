use super::view::{reprojected_grid, View};
use super::volume::{Volume, Voxels};
use crate::error::{Error, Result};

/// Full-resolution crop and downsampling factors.
pub const DEFAULT_CROP: [usize; 3] = [320, 320, 128];
pub const DEFAULT_FACTORS: [usize; 3] = [2, 2, 2];

/// Center crop, per-volume min-max quantization to `u8`, then average-pool
/// downsampling by integer factors. Spacing scales with the factors.
pub fn preprocess(v: &Volume, crop: [usize; 3], factors: [usize; 3]) -> Result<Volume> {
    let cropped = center_crop(v, crop)?;
    let q = quantize(&cropped.voxels.to_f32());
    let q = Volume::new(cropped.dims, cropped.spacing, Voxels::U8(q))?;
    downsample(&q, factors)
}

pub fn center_crop(v: &Volume, crop: [usize; 3]) -> Result<Volume> {
    if crop.iter().zip(&v.dims).any(|(&c, &d)| c == 0 || c > d) {
        return Err(Error::config(format!("crop {crop:?} does not fit volume {:?}", v.dims)));
    }
    let start: Vec<usize> = (0..3).map(|a| (v.dims[a] - crop[a]) / 2).collect();
    let src = v.voxels.to_f32();
    let mut out = Vec::with_capacity(crop.iter().product());
    for i in 0..crop[0] {
        for j in 0..crop[1] {
            let base = v.index(start[0] + i, start[1] + j, start[2]);
            out.extend_from_slice(&src[base..base + crop[2]]);
        }
    }
    let voxels = match v.voxels {
        Voxels::U8(_) => Voxels::U8(out.iter().map(|&x| x as u8).collect()),
        Voxels::F32(_) => Voxels::F32(out),
    };
    Volume::new(crop, v.spacing, voxels)
}

/// Linear map of `[min, max]` onto `0..=255`, rounded. A constant input maps
/// to all zeros.
pub fn quantize(values: &[f32]) -> Vec<u8> {
    let (lo, hi) = values
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if !(hi > lo) {
        return vec![0; values.len()];
    }
    let scale = 255.0 / (hi as f64 - lo as f64);
    values
        .iter()
        .map(|&x| ((x as f64 - lo as f64) * scale).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Block averages over `f0 x f1 x f2` windows; extents must divide evenly.
pub fn downsample(v: &Volume, factors: [usize; 3]) -> Result<Volume> {
    if factors.contains(&0) || (0..3).any(|a| !v.dims[a].is_multiple_of(factors[a])) {
        return Err(Error::config(format!(
            "downsample factors {factors:?} must evenly divide {:?}",
            v.dims
        )));
    }
    if factors == [1, 1, 1] {
        return Ok(v.clone());
    }
    let dims = [0, 1, 2].map(|a| v.dims[a] / factors[a]);
    let src = v.voxels.to_f32();
    let window = factors.iter().product::<usize>() as f64;
    let mut out = vec![0f64; dims.iter().product()];
    for i in 0..v.dims[0] {
        for j in 0..v.dims[1] {
            let row = v.index(i, j, 0);
            let obase = ((i / factors[0]) * dims[1] + j / factors[1]) * dims[2];
            for k in 0..v.dims[2] {
                out[obase + k / factors[2]] += src[row + k] as f64;
            }
        }
    }
    let spacing = [0, 1, 2].map(|a| v.spacing[a] * factors[a] as f64);
    let voxels = match v.voxels {
        Voxels::U8(_) => Voxels::U8(out.iter().map(|s| (s / window).round() as u8).collect()),
        Voxels::F32(_) => Voxels::F32(out.iter().map(|s| (s / window) as f32).collect()),
    };
    Volume::new(dims, spacing, voxels)
}

/// Trilinear resampling onto a grid of `dims` covering the same physical
/// extent. Voxel centers sit at `(i + 0.5) * spacing`; samples outside the
/// source clamp to the border.
pub fn resample(v: &Volume, dims: [usize; 3]) -> Result<Volume> {
    if dims == v.dims {
        return Ok(v.clone());
    }
    if dims.contains(&0) {
        return Err(Error::config("resample target extents must be positive"));
    }
    let src = v.voxels.to_f32();
    let spacing = [0, 1, 2].map(|a| v.dims[a] as f64 * v.spacing[a] / dims[a] as f64);
    let taps = |a: usize| -> Vec<(usize, usize, f64)> {
        let n = v.dims[a];
        (0..dims[a])
            .map(|o| {
                let x = ((o as f64 + 0.5) * spacing[a] / v.spacing[a] - 0.5).clamp(0.0, (n - 1) as f64);
                let lo = x.floor() as usize;
                let hi = (lo + 1).min(n - 1);
                (lo, hi, x - lo as f64)
            })
            .collect()
    };
    let (t0, t1, t2) = (taps(0), taps(1), taps(2));
    let mut out = Vec::with_capacity(dims.iter().product());
    for &(i0, i1, wi) in &t0 {
        for &(j0, j1, wj) in &t1 {
            for &(k0, k1, wk) in &t2 {
                let at = |i, j, k| src[v.index(i, j, k)] as f64;
                let c00 = at(i0, j0, k0) * (1.0 - wk) + at(i0, j0, k1) * wk;
                let c01 = at(i0, j1, k0) * (1.0 - wk) + at(i0, j1, k1) * wk;
                let c10 = at(i1, j0, k0) * (1.0 - wk) + at(i1, j0, k1) * wk;
                let c11 = at(i1, j1, k0) * (1.0 - wk) + at(i1, j1, k1) * wk;
                let c0 = c00 * (1.0 - wj) + c01 * wj;
                let c1 = c10 * (1.0 - wj) + c11 * wj;
                out.push(c0 * (1.0 - wi) + c1 * wi);
            }
        }
    }
    let voxels = match v.voxels {
        Voxels::U8(_) => Voxels::U8(out.iter().map(|x| x.round().clamp(0.0, 255.0) as u8).collect()),
        Voxels::F32(_) => Voxels::F32(out.iter().map(|&x| x as f32).collect()),
    };
    Volume::new(dims, spacing, voxels)
}

/// Resamples so that the two in-slice axes of `view` share one spacing,
/// keeping the slice axis untouched. A volume that is already isotropic in
/// those axes is returned as is.
pub fn reproject(v: &Volume, view: View) -> Result<Volume> {
    let (dims, spacing) = reprojected_grid(v.dims, v.spacing, view);
    if dims == v.dims {
        return Ok(v.clone());
    }
    let mut out = resample(v, dims)?;
    let (a, b) = view.in_slice_axes();
    // both in-slice spacings are the same value by construction
    out.spacing[a] = spacing[a] as f32 as f64;
    out.spacing[b] = out.spacing[a];
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phantom(dims: [usize; 3], spacing: [f64; 3]) -> Volume {
        let mut data = Vec::new();
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    let p = [i, j, k].map(|x| x as f64);
                    let r2: f64 = (0..3)
                        .map(|a| ((p[a] + 0.5) * spacing[a] - dims[a] as f64 * spacing[a] / 2.0).powi(2))
                        .sum();
                    data.push((200.0 * (-r2 / 60.0).exp() + 20.0) as u8);
                }
            }
        }
        Volume::new(dims, spacing, Voxels::U8(data)).unwrap()
    }

    #[test]
    fn linspace_quantizes_to_each_level_once() {
        let v: Vec<f32> = (0..256).map(|i| i as f32 / 255.0).collect();
        let q = quantize(&v);
        assert_eq!(q, (0..=255).collect::<Vec<u8>>());
        assert_eq!(quantize(&[3.0; 10]), vec![0; 10]);
    }

    #[test]
    fn default_chain_shape_and_spacing() {
        // scaled-down stand-in for 384x384x160 -> 160x160x64
        let v = Volume::new(
            [48, 48, 20],
            [0.37, 0.37, 0.7],
            Voxels::F32((0..48 * 48 * 20).map(|i| (i % 97) as f32).collect()),
        )
        .unwrap();
        let out = preprocess(&v, [40, 40, 16], DEFAULT_FACTORS).unwrap();
        assert_eq!(out.dims, [20, 20, 8]);
        for (got, want) in out.spacing.iter().zip([0.74, 0.74, 1.4]) {
            assert!((got - want).abs() < 1e-6);
        }
        assert!(preprocess(&v, [50, 40, 16], DEFAULT_FACTORS).is_err());
    }

    #[test]
    fn sagittal_reprojection_is_identity() {
        let v = phantom([12, 12, 6], [0.74, 0.74, 1.4]);
        assert_eq!(reproject(&v, View::Sag).unwrap(), v);
    }

    #[test]
    fn coronal_round_trip_on_smooth_phantom() {
        let v = phantom([32, 32, 16], [0.74, 0.74, 1.4]);
        let cor = reproject(&v, View::Cor).unwrap();
        assert!((cor.spacing[0] - cor.spacing[2]).abs() < 1e-6);
        let ratio = cor.len() as f64 / v.len() as f64;
        assert!((ratio - 1.0).abs() < 0.02, "{ratio}");
        let back = resample(&cor, v.dims).unwrap();
        let (Voxels::U8(a), Voxels::U8(b)) = (&v.voxels, &back.voxels) else {
            unreachable!()
        };
        let mad = a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).abs()).sum::<f64>() / a.len() as f64;
        assert!(mad < 2.0, "{mad}");
    }
}
