use rand::Rng;

use super::preprocess::reproject;
use super::view::View;
use super::volume::Volume;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `k` slices of `h x w` intensities cut from a volume in one view.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceStack {
    pub view: View,
    pub slices: usize,
    pub height: usize,
    pub width: usize,
    /// Slice-major, `[k][h][w]`, on the `0..=255` intensity scale.
    pub data: Vec<f32>,
    /// Source volume id followed by the transforms applied to it.
    pub provenance: Vec<String>,
}

impl SliceStack {
    /// Reprojects `v` into `view` and cuts it into slices along the view's
    /// slice axis.
    pub fn from_volume(v: &Volume, view: View, source: &str) -> Result<Self> {
        let r = reproject(v, view)?;
        let s = view.slice_axis();
        let (a, b) = view.in_slice_axes();
        let (k, h, w) = (r.dims[s], r.dims[a], r.dims[b]);
        let src = r.voxels.to_f32();
        let mut data = Vec::with_capacity(k * h * w);
        let mut idx = [0usize; 3];
        for z in 0..k {
            idx[s] = z;
            for y in 0..h {
                idx[a] = y;
                for x in 0..w {
                    idx[b] = x;
                    data.push(src[r.index(idx[0], idx[1], idx[2])]);
                }
            }
        }
        let mut provenance = vec![source.to_string()];
        if r.dims != v.dims {
            provenance.push(format!("reproject:{view}"));
        }
        provenance.push(format!("slice:{view}"));
        Ok(SliceStack {
            view,
            slices: k,
            height: h,
            width: w,
            data,
            provenance,
        })
    }

    pub fn slice(&self, z: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[z * n..(z + 1) * n]
    }

    /// `[k, 1, h, w]` tensor with intensities scaled to `[0, 1]`.
    pub fn to_tensor(&self) -> Result<Tensor> {
        Tensor::new(
            self.data.iter().map(|&x| x as f64 / 255.0).collect(),
            &[self.slices, 1, self.height, self.width],
        )
    }
}

/// Ranges from which augmentation parameters are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentPolicy {
    /// Maximum translation as a fraction of each in-slice extent.
    pub max_shift: f64,
    pub max_rotation_deg: f64,
    /// Gamma is log-uniform in `[lo, hi]`.
    pub gamma: (f64, f64),
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            max_shift: 0.05,
            max_rotation_deg: 10.0,
            gamma: (0.8, 1.25),
        }
    }
}

impl AugmentPolicy {
    pub fn identity() -> Self {
        AugmentPolicy {
            max_shift: 0.0,
            max_rotation_deg: 0.0,
            gamma: (1.0, 1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.gamma;
        if !(0.0..1.0).contains(&self.max_shift) || self.max_rotation_deg < 0.0 || !(lo > 0.0 && lo <= hi) {
            return Err(Error::config(format!("invalid augmentation policy {self:?}")));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut impl Rng, height: usize, width: usize) -> AugmentParams {
        let mut shift = |n: usize| {
            let m = (self.max_shift * n as f64).floor() as i64;
            if m == 0 {
                0
            } else {
                rng.random_range(-m..=m)
            }
        };
        let (dy, dx) = (shift(height), shift(width));
        let angle = if self.max_rotation_deg > 0.0 {
            rng.random_range(-self.max_rotation_deg..=self.max_rotation_deg)
        } else {
            0.0
        };
        let (lo, hi) = self.gamma;
        let gamma = if lo < hi {
            rng.random_range(lo.ln()..=hi.ln()).exp()
        } else {
            lo
        };
        AugmentParams {
            shift: (dy, dx),
            rotation_deg: angle,
            gamma,
        }
    }
}

/// One concrete draw, applied identically to every slice of a stack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub shift: (i64, i64),
    pub rotation_deg: f64,
    pub gamma: f64,
}

/// Reflect-101 index into `0..n`.
fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - m }) as usize
}

/// Translation with reflect padding, bilinear rotation about the slice
/// center, then gamma on intensities normalized to `[0, 1]`. Each stage is
/// skipped when its parameter is neutral.
pub fn apply_augmentation(s: &SliceStack, p: &AugmentParams) -> SliceStack {
    let (h, w) = (s.height, s.width);
    let mut out = s.clone();
    if p.shift != (0, 0) {
        let (dy, dx) = p.shift;
        for z in 0..s.slices {
            let src = s.slice(z);
            let dst = &mut out.data[z * h * w..(z + 1) * h * w];
            for y in 0..h {
                let sy = reflect(y as i64 - dy, h);
                for x in 0..w {
                    dst[y * w + x] = src[sy * w + reflect(x as i64 - dx, w)];
                }
            }
        }
        out.provenance.push(format!("shift:{dy},{dx}"));
    }
    if p.rotation_deg != 0.0 {
        let (sin, cos) = p.rotation_deg.to_radians().sin_cos();
        let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
        let shifted = out.data.clone();
        for z in 0..s.slices {
            let src = &shifted[z * h * w..(z + 1) * h * w];
            let dst = &mut out.data[z * h * w..(z + 1) * h * w];
            for y in 0..h {
                for x in 0..w {
                    // inverse map: output pixel samples the source at -angle
                    let (ry, rx) = (y as f64 - cy, x as f64 - cx);
                    let sy = cos * ry - sin * rx + cy;
                    let sx = sin * ry + cos * rx + cx;
                    dst[y * w + x] = bilinear(src, h, w, sy, sx);
                }
            }
        }
        out.provenance.push(format!("rotate:{:.3}", p.rotation_deg));
    }
    if p.gamma != 1.0 {
        for v in &mut out.data {
            *v = ((*v as f64 / 255.0).clamp(0.0, 1.0).powf(p.gamma) * 255.0) as f32;
        }
        out.provenance.push(format!("gamma:{:.4}", p.gamma));
    }
    out
}

fn bilinear(src: &[f32], h: usize, w: usize, y: f64, x: f64) -> f32 {
    let (y0, x0) = (y.floor(), x.floor());
    let (fy, fx) = (y - y0, x - x0);
    let at = |yy: f64, xx: f64| src[reflect(yy as i64, h) * w + reflect(xx as i64, w)] as f64;
    let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1.0) * fx;
    let bottom = at(y0 + 1.0, x0) * (1.0 - fx) + at(y0 + 1.0, x0 + 1.0) * fx;
    (top * (1.0 - fy) + bottom * fy) as f32
}

/// Draws parameters from `policy` and applies them.
pub fn augment(s: &SliceStack, rng: &mut impl Rng, policy: &AugmentPolicy) -> SliceStack {
    let p = policy.sample(rng, s.height, s.width);
    apply_augmentation(s, &p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::volume::Voxels;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn smooth_stack(n: usize) -> SliceStack {
        let c = (n as f64 - 1.0) / 2.0;
        let data = (0..2 * n * n)
            .map(|i| {
                let (y, x) = (((i / n) % n) as f64 - c, (i % n) as f64 - c);
                (30.0 + 180.0 * (-(y * y + x * x) / (n as f64 * 2.0)).exp()) as f32
            })
            .collect();
        SliceStack {
            view: View::Sag,
            slices: 2,
            height: n,
            width: n,
            data,
            provenance: vec!["phantom".into()],
        }
    }

    #[test]
    fn identity_policy_is_bit_identical() {
        let s = smooth_stack(16);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(augment(&s, &mut rng, &AugmentPolicy::identity()), s);
    }

    #[test]
    fn rotation_round_trip() {
        let s = smooth_stack(32);
        let p = |deg| AugmentParams {
            shift: (0, 0),
            rotation_deg: deg,
            gamma: 1.0,
        };
        let back = apply_augmentation(&apply_augmentation(&s, &p(10.0)), &p(-10.0));
        let mad = s.data.iter().zip(&back.data).map(|(a, b)| (a - b).abs() as f64).sum::<f64>() / s.data.len() as f64;
        assert!(mad < 2.0, "{mad}");
    }

    #[test]
    fn default_draws_stay_in_range() {
        let policy = AugmentPolicy::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let p = policy.sample(&mut rng, 40, 40);
            assert!(p.shift.0.abs() <= 2 && p.shift.1.abs() <= 2);
            assert!(p.rotation_deg.abs() <= 10.0);
            assert!((0.8..=1.25).contains(&p.gamma));
        }
    }

    #[test]
    fn stacks_follow_view_axes() {
        let v = Volume::new([2, 3, 4], [1.0; 3], Voxels::U8((0..24).collect())).unwrap();
        let sag = SliceStack::from_volume(&v, View::Sag, "v").unwrap();
        assert_eq!((sag.slices, sag.height, sag.width), (4, 2, 3));
        assert_eq!(sag.slice(1), &[1.0, 5.0, 9.0, 13.0, 17.0, 21.0]);
        let ax = SliceStack::from_volume(&v, View::Ax, "v").unwrap();
        assert_eq!(ax.slice(1), &(12..24).map(|x| x as f32).collect::<Vec<_>>()[..]);
    }

    #[test]
    fn reflect_indices() {
        let idx: Vec<usize> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(idx, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
    }
}
