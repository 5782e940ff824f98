use serde::{Deserialize, Serialize};

use super::Plane;
use crate::error::{Error, Result};

/// One member of the augmentation product.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Augmentation {
    /// Clockwise rotation in degrees, a multiple of 90.
    pub rotation: u32,
    pub scale: f64,
    pub flip: bool,
}

impl Augmentation {
    pub const IDENTITY: Augmentation = Augmentation {
        rotation: 0,
        scale: 1.0,
        flip: false,
    };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationSpec {
    pub rotations: Vec<u32>,
    pub scales: Vec<f64>,
    pub flips: Vec<bool>,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        AugmentationSpec {
            rotations: vec![0, 90, 180],
            scales: vec![1.0, 0.75, 0.5, 0.25],
            flips: vec![false, true],
        }
    }
}

impl AugmentationSpec {
    /// Only the identity variant.
    pub fn none() -> Self {
        AugmentationSpec {
            rotations: vec![0],
            scales: vec![1.0],
            flips: vec![false],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rotations.is_empty() || self.scales.is_empty() || self.flips.is_empty() {
            return Err(Error::InvalidConfig("augmentation factor sets must be non-empty".into()));
        }
        if let Some(r) = self.rotations.iter().find(|&&r| r % 90 != 0) {
            return Err(Error::InvalidConfig(format!("rotation {r} is not a multiple of 90")));
        }
        if let Some(s) = self.scales.iter().find(|&&s| !(s > 0.0 && s <= 1.0)) {
            return Err(Error::InvalidConfig(format!("scale {s} outside (0, 1]")));
        }
        Ok(())
    }

    /// Cartesian product: rotation-major, then scale, then flip.
    pub fn variants(&self) -> Vec<Augmentation> {
        let mut out = Vec::new();
        for &rotation in &self.rotations {
            for &scale in &self.scales {
                for &flip in &self.flips {
                    out.push(Augmentation {
                        rotation,
                        scale,
                        flip,
                    });
                }
            }
        }
        out
    }
}

/// All variants of `image`, in [`AugmentationSpec::variants`] order.
pub fn augment(image: &Plane<u8>, spec: &AugmentationSpec) -> Result<Vec<(Augmentation, Plane<u8>)>> {
    spec.validate()?;
    if image.data().is_empty() {
        return Err(Error::InvalidArgument("cannot augment an empty image".into()));
    }
    Ok(spec
        .variants()
        .into_iter()
        .map(|a| (a, apply(image, &a)))
        .collect())
}

/// Rotation, then scaling, then horizontal flip.
pub fn apply(image: &Plane<u8>, aug: &Augmentation) -> Plane<u8> {
    let mut p = image.clone();
    for _ in 0..(aug.rotation / 90) % 4 {
        p = rotate90(&p);
    }
    if aug.scale != 1.0 {
        p = scale_bilinear(&p, aug.scale);
    }
    if aug.flip {
        p = flip_horizontal(&p);
    }
    p
}

pub fn rotate90<T: Copy>(p: &Plane<T>) -> Plane<T> {
    let h = p.height();
    Plane::from_fn(h, p.width(), |x, y| p.get(y, h - 1 - x))
}

pub fn flip_horizontal<T: Copy>(p: &Plane<T>) -> Plane<T> {
    let w = p.width();
    Plane::from_fn(w, p.height(), |x, y| p.get(w - 1 - x, y))
}

fn scaled_len(len: usize, scale: f64) -> usize {
    (((len as f64 * scale) / 2.0).round() as usize * 2).max(2)
}

/// Bilinear resampling with pixel-centre alignment and edge clamping. Output
/// dimensions are rounded to even numbers.
pub fn scale_bilinear(p: &Plane<u8>, scale: f64) -> Plane<u8> {
    let (w, h) = (p.width(), p.height());
    let (nw, nh) = (scaled_len(w, scale), scaled_len(h, scale));
    let taps = |out: usize, src_len: usize, dst_len: usize| {
        let s = ((out as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5).clamp(0.0, (src_len - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(src_len - 1);
        (i0, i1, s - i0 as f64)
    };
    let xt: Vec<_> = (0..nw).map(|x| taps(x, w, nw)).collect();
    let yt: Vec<_> = (0..nh).map(|y| taps(y, h, nh)).collect();
    Plane::from_fn(nw, nh, |x, y| {
        let (x0, x1, fx) = xt[x];
        let (y0, y1, fy) = yt[y];
        let g = |x, y| f64::from(p.get(x, y));
        let top = g(x0, y0) * (1.0 - fx) + g(x1, y0) * fx;
        let bot = g(x0, y1) * (1.0 - fx) + g(x1, y1) * fx;
        (top * (1.0 - fy) + bot * fy).round().clamp(0.0, 255.0) as u8
    })
}
