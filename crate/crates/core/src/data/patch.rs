use super::Plane;
use crate::error::{Error, Result};

/// Overlapping square tiles covering a plane. Origins advance by `stride`;
/// when the stride does not land on the border an extra, clamped origin is
/// added so the last tile touches it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    patch_size: usize,
    stride: usize,
    width: usize,
    height: usize,
    xs: Vec<usize>,
    ys: Vec<usize>,
}

fn axis_origins(len: usize, patch: usize, stride: usize) -> Vec<usize> {
    let last = len - patch;
    let mut v: Vec<usize> = (0..=last).step_by(stride).collect();
    if *v.last().expect("origin 0 always present") != last {
        v.push(last);
    }
    v
}

impl PatchGrid {
    pub fn new(width: usize, height: usize, patch_size: usize, stride: usize) -> Result<Self> {
        if patch_size == 0 || stride == 0 {
            return Err(Error::InvalidArgument("patch size and stride must be positive".into()));
        }
        if width < patch_size || height < patch_size {
            return Err(Error::InvalidArgument(format!(
                "{width}x{height} plane is smaller than a {patch_size}px patch"
            )));
        }
        Ok(PatchGrid {
            patch_size,
            stride,
            width,
            height,
            xs: axis_origins(width, patch_size, stride),
            ys: axis_origins(height, patch_size, stride),
        })
    }

    /// True when every pixel lies in at least one tile.
    pub fn covers_plane(&self) -> bool {
        self.stride <= self.patch_size
    }

    /// Non-overlapping grid (stride = patch size) for inference.
    pub fn tiling(width: usize, height: usize, patch_size: usize) -> Result<Self> {
        Self::new(width, height, patch_size, patch_size)
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn source_size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.xs.len() * self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Top-left corners `(x, y)`, row-major.
    pub fn origins(&self) -> Vec<(usize, usize)> {
        self.ys
            .iter()
            .flat_map(|&y| self.xs.iter().map(move |&x| (x, y)))
            .collect()
    }

    fn check_source<T: Copy>(&self, plane: &Plane<T>) -> Result<()> {
        if (plane.width(), plane.height()) != (self.width, self.height) {
            return Err(Error::shape(
                "extract_patches",
                format!(
                    "grid built for {}x{}, plane is {}x{}",
                    self.width,
                    self.height,
                    plane.width(),
                    plane.height()
                ),
            ));
        }
        Ok(())
    }

    fn check_coverage(&self) -> Result<()> {
        if !self.covers_plane() {
            return Err(Error::InvalidArgument(format!(
                "stride {} exceeds patch size {}; tiles leave gaps",
                self.stride, self.patch_size
            )));
        }
        Ok(())
    }

    fn check_patches<T: Copy>(&self, patches: &[Plane<T>]) -> Result<()> {
        if patches.len() != self.len()
            || patches
                .iter()
                .any(|p| p.width() != self.patch_size || p.height() != self.patch_size)
        {
            return Err(Error::shape(
                "reassemble",
                format!("expected {} patches of {}px", self.len(), self.patch_size),
            ));
        }
        Ok(())
    }
}

pub fn extract_patches<T: Copy>(plane: &Plane<T>, grid: &PatchGrid) -> Result<Vec<Plane<T>>> {
    grid.check_source(plane)?;
    let p = grid.patch_size;
    grid.origins().into_iter().map(|(x, y)| plane.crop(x, y, p, p)).collect()
}

/// Averages overlapping tiles back into a plane, rounding half up.
pub fn reassemble(patches: &[Plane<u8>], grid: &PatchGrid) -> Result<Plane<u8>> {
    grid.check_patches(patches)?;
    grid.check_coverage()?;
    let (w, h) = (grid.width, grid.height);
    let mut sum = vec![0u32; w * h];
    let mut count = vec![0u32; w * h];
    for (patch, (ox, oy)) in patches.iter().zip(grid.origins()) {
        for py in 0..grid.patch_size {
            for px in 0..grid.patch_size {
                let i = (oy + py) * w + ox + px;
                sum[i] += u32::from(patch.get(px, py));
                count[i] += 1;
            }
        }
    }
    let data = sum
        .iter()
        .zip(&count)
        .map(|(&s, &c)| ((s + c / 2) / c) as u8)
        .collect();
    Plane::new(w, h, data)
}

/// Floating-point counterpart of [`reassemble`]. Uses a running mean, which
/// reproduces identical overlapping values exactly.
pub fn reassemble_f32(patches: &[Plane<f32>], grid: &PatchGrid) -> Result<Plane<f32>> {
    grid.check_patches(patches)?;
    grid.check_coverage()?;
    let (w, h) = (grid.width, grid.height);
    let mut mean = vec![0f32; w * h];
    let mut count = vec![0u32; w * h];
    for (patch, (ox, oy)) in patches.iter().zip(grid.origins()) {
        for py in 0..grid.patch_size {
            for px in 0..grid.patch_size {
                let i = (oy + py) * w + ox + px;
                count[i] += 1;
                mean[i] += (patch.get(px, py) - mean[i]) / count[i] as f32;
            }
        }
    }
    Plane::new(w, h, mean)
}
