use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anatomical viewing plane. Volumes are indexed `[ax, cor, sag]`-major, so
/// the sagittal slice axis is the last (fastest) axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Sag,
    Cor,
    Ax,
}

impl View {
    pub const ALL: [View; 3] = [View::Sag, View::Cor, View::Ax];

    /// Volume axis stepped over when slicing in this plane.
    pub fn slice_axis(self) -> usize {
        match self {
            View::Sag => 2,
            View::Cor => 1,
            View::Ax => 0,
        }
    }

    /// The two remaining axes, in volume order: `(height, width)`.
    pub fn in_slice_axes(self) -> (usize, usize) {
        match self {
            View::Sag => (0, 1),
            View::Cor => (0, 2),
            View::Ax => (1, 2),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            View::Sag => "sag",
            View::Cor => "cor",
            View::Ax => "ax",
        }
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for View {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sag" => Ok(View::Sag),
            "cor" => Ok(View::Cor),
            "ax" => Ok(View::Ax),
            other => Err(Error::config(format!("unknown view '{other}' (expected sag, cor or ax)"))),
        }
    }
}

/// Grid produced by reprojecting a volume into `view`: the slice axis keeps
/// its extent and spacing; both in-slice axes are resampled to the common
/// spacing `sqrt(s_h * s_w)`, which keeps the voxel count close to the
/// original. Returns `(dims, spacing)` in volume axis order.
pub fn reprojected_grid(dims: [usize; 3], spacing: [f64; 3], view: View) -> ([usize; 3], [f64; 3]) {
    let (a, b) = view.in_slice_axes();
    if spacing[a] == spacing[b] {
        return (dims, spacing);
    }
    let common = (spacing[a] * spacing[b]).sqrt();
    let mut out_dims = dims;
    let mut out_spacing = spacing;
    for axis in [a, b] {
        let extent = dims[axis] as f64 * spacing[axis];
        out_dims[axis] = ((extent / common).round() as usize).max(1);
        out_spacing[axis] = common;
    }
    (out_dims, out_spacing)
}

/// `(slices, height, width)` of the stack cut from a grid of `dims` in `view`.
pub fn stack_extents(dims: [usize; 3], view: View) -> (usize, usize, usize) {
    let (h, w) = view.in_slice_axes();
    (dims[view.slice_axis()], dims[h], dims[w])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_views() {
        let dims = [160, 160, 64];
        let sp = [0.74, 0.74, 1.4];
        let (d, s) = reprojected_grid(dims, sp, View::Sag);
        assert_eq!((d, s), (dims, sp));
        assert_eq!(stack_extents(d, View::Sag), (64, 160, 160));
        let (d, s) = reprojected_grid(dims, sp, View::Cor);
        assert_eq!(stack_extents(d, View::Cor), (160, 116, 88));
        assert!((s[0] - s[2]).abs() < 1e-12);
        let (d, _) = reprojected_grid(dims, sp, View::Ax);
        assert_eq!(stack_extents(d, View::Ax), (160, 116, 88));
        let n0 = (160 * 160 * 64) as f64;
        let n1 = d.iter().product::<usize>() as f64;
        assert!((n1 / n0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn view_names_round_trip() {
        for v in View::ALL {
            assert_eq!(v.as_str().parse::<View>().unwrap(), v);
        }
        assert!("coronal".parse::<View>().is_err());
    }
}
