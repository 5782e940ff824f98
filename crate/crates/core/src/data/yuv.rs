use std::fs;
use std::path::Path;

use super::Plane;
use crate::error::{Error, Result};

/// One 4:2:0 frame: full-resolution luma, half-resolution chroma.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct YuvFrame {
    pub y: Plane<u8>,
    pub u: Plane<u8>,
    pub v: Plane<u8>,
}

impl YuvFrame {
    /// Mid-grey chroma around the given luma plane.
    pub fn from_luma(y: Plane<u8>) -> Result<Self> {
        check_dims(y.width(), y.height())?;
        let (cw, ch) = (y.width() / 2, y.height() / 2);
        Ok(YuvFrame {
            u: Plane::filled(cw, ch, 128),
            v: Plane::filled(cw, ch, 128),
            y,
        })
    }
}

/// Planar 8-bit YUV 4:2:0 frames.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct YuvSequence {
    width: usize,
    height: usize,
    frames: Vec<YuvFrame>,
}

impl YuvSequence {
    pub fn new(width: usize, height: usize, frames: Vec<YuvFrame>) -> Result<Self> {
        check_dims(width, height)?;
        for (i, f) in frames.iter().enumerate() {
            let ok = f.y.width() == width
                && f.y.height() == height
                && [&f.u, &f.v]
                    .iter()
                    .all(|p| p.width() == width / 2 && p.height() == height / 2);
            if !ok {
                return Err(Error::InvalidArgument(format!(
                    "frame {i} does not match {width}x{height} 4:2:0"
                )));
            }
        }
        Ok(YuvSequence {
            width,
            height,
            frames,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn frames(&self) -> &[YuvFrame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<YuvFrame> {
        self.frames
    }

    pub fn frame_bytes(width: usize, height: usize) -> usize {
        width * height * 3 / 2
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.frames.len() * Self::frame_bytes(self.width, self.height));
        for f in &self.frames {
            out.extend_from_slice(f.y.data());
            out.extend_from_slice(f.u.data());
            out.extend_from_slice(f.v.data());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        let fb = Self::frame_bytes(width, height);
        if bytes.len() % fb != 0 {
            return Err(Error::format(
                "yuv file",
                format!(
                    "{} bytes is not a whole number of {width}x{height} frames ({fb} bytes each)",
                    bytes.len()
                ),
            ));
        }
        let (luma, chroma) = (width * height, width * height / 4);
        let frames = bytes
            .chunks_exact(fb)
            .map(|c| {
                Ok(YuvFrame {
                    y: Plane::new(width, height, c[..luma].to_vec())?,
                    u: Plane::new(width / 2, height / 2, c[luma..luma + chroma].to_vec())?,
                    v: Plane::new(width / 2, height / 2, c[luma + chroma..].to_vec())?,
                })
            })
            .collect::<Result<_>>()?;
        Self::new(width, height, frames)
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 || width % 2 != 0 || height % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "4:2:0 dimensions must be positive and even, got {width}x{height}"
        )));
    }
    Ok(())
}

pub fn read_yuv(path: &Path, width: usize, height: usize) -> Result<YuvSequence> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    YuvSequence::from_bytes(&bytes, width, height)
}

pub fn write_yuv(seq: &YuvSequence, path: &Path) -> Result<()> {
    fs::write(path, seq.to_bytes()).map_err(|e| Error::io(path, e))
}

/// Loads an image file (PNG, PGM, ...) as an 8-bit luma plane.
pub fn read_luma_image(path: &Path) -> Result<Plane<u8>> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let g = img.into_luma8();
    let (w, h) = (g.width() as usize, g.height() as usize);
    Plane::new(w, h, g.into_raw())
}

pub fn write_luma_image(plane: &Plane<u8>, path: &Path) -> Result<()> {
    let img = image::GrayImage::from_raw(plane.width() as u32, plane.height() as u32, plane.data().to_vec())
        .expect("plane size matches");
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(frames: usize) -> YuvSequence {
        let frames = (0..frames)
            .map(|t| YuvFrame {
                y: Plane::from_fn(16, 16, |x, y| (x * 7 + y * 3 + t) as u8),
                u: Plane::from_fn(8, 8, |x, y| (x + y * 9) as u8),
                v: Plane::from_fn(8, 8, |x, y| (200 - x - y) as u8),
            })
            .collect();
        YuvSequence::new(16, 16, frames).unwrap()
    }

    #[test]
    fn file_roundtrip_and_length() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.yuv");
        let s = seq(2);
        write_yuv(&s, &path).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), 768);
        assert_eq!(read_yuv(&path, 16, 16).unwrap(), s);
    }

    #[test]
    fn truncated_and_odd_rejected() {
        let bytes = seq(2).to_bytes();
        assert!(YuvSequence::from_bytes(&bytes[..767], 16, 16).is_err());
        assert!(YuvSequence::from_bytes(&bytes, 15, 16).is_err());
    }
}
