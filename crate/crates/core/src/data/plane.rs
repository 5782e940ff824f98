use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// A single image channel in row-major order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Plane<T = u8> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Copy> Plane<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "{width}x{height} plane needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Plane { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Plane {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    /// The `w`×`h` window whose top-left corner is `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Self> {
        if x + w > self.width || y + h > self.height {
            return Err(Error::InvalidArgument(format!(
                "crop {w}x{h}+{x}+{y} outside {}x{} plane",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h);
        for row in y..y + h {
            let start = row * self.width + x;
            data.extend_from_slice(&self.data[start..start + w]);
        }
        Ok(Plane {
            width: w,
            height: h,
            data,
        })
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(T) -> U) -> Plane<U> {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().copied().map(f).collect(),
        }
    }

    pub(crate) fn same_size<U>(&self, other: &Plane<U>, op: &'static str) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::shape(
                op,
                format!(
                    "{}x{} vs {}x{}",
                    self.width, self.height, other.width, other.height
                ),
            ));
        }
        Ok(())
    }
}

/// Maps 8-bit samples to `[0, 1]` as a `1×1×H×W` tensor.
pub fn normalize(plane: &Plane<u8>) -> Tensor<f32> {
    let data = plane.data().iter().map(|&v| f32::from(v) / 255.0).collect();
    Tensor::from_vec(Shape::new(1, 1, plane.height(), plane.width()), data)
        .expect("plane size matches")
}

/// Inverse of [`normalize`] with clamping: `round(clamp(x, 0, 1) * 255)`.
/// Accepts any `1×1×H×W` tensor.
pub fn denormalize(tensor: &Tensor<f32>) -> Result<Plane<u8>> {
    let s = tensor.shape();
    if s.n != 1 || s.c != 1 {
        return Err(Error::shape("denormalize", format!("expected 1x1xHxW, got {s}")));
    }
    let data = tensor.data().iter().map(|&v| to_byte(v)).collect();
    Plane::new(s.w, s.h, data)
}

#[inline]
pub(crate) fn to_byte(v: f32) -> u8 {
    // NaN maps to 0 via the saturating cast.
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_endpoints_and_clamp() {
        let p = Plane::new(3, 1, vec![0u8, 128, 255]).unwrap();
        let t = normalize(&p);
        assert_eq!(t.data()[0], 0.0);
        assert_eq!(t.data()[2], 1.0);
        let over = Tensor::from_vec(Shape::new(1, 1, 1, 2), vec![1.2f32, -0.3]).unwrap();
        assert_eq!(denormalize(&over).unwrap().data(), &[255, 0]);
    }

    #[test]
    fn normalize_roundtrip_exhaustive() {
        let p = Plane::new(256, 1, (0..=255u8).collect()).unwrap();
        assert_eq!(denormalize(&normalize(&p)).unwrap(), p);
    }

    #[test]
    fn crop_bounds() {
        let p = Plane::from_fn(4, 3, |x, y| (10 * y + x) as u8);
        assert_eq!(p.crop(1, 1, 2, 2).unwrap().data(), &[11, 12, 21, 22]);
        assert!(p.crop(3, 0, 2, 1).is_err());
        assert!(Plane::new(2, 2, vec![0u8; 3]).is_err());
    }
}
