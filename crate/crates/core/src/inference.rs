//! Whole-frame filtering: tile, run the model, reassemble.

use crate::data::{extract_patches, reassemble_f32, to_byte, PatchGrid, Plane, YuvFrame, YuvSequence};
use crate::error::{Error, Result};
use crate::model::Mscnn;
use crate::tensor::{Shape, Tensor};

/// Patches pushed through the model at once.
const CHUNK: usize = 16;

/// Filters the luma plane `current` using `reference` as the second
/// branch's input. Tiles of `patch_size` are taken every `stride` pixels
/// (the last tile clamped to the border) and overlaps are averaged.
pub fn filter_plane(
    model: &Mscnn<f32>,
    current: &Plane<u8>,
    reference: &Plane<u8>,
    patch_size: usize,
    stride: usize,
) -> Result<Plane<u8>> {
    current.same_size(reference, "filter_plane")?;
    let factor = model.config().downsampling_factor();
    if patch_size % factor != 0 {
        return Err(Error::InvalidConfig(format!(
            "patch size {patch_size} is not a multiple of the network's downsampling factor {factor}"
        )));
    }
    let grid = PatchGrid::new(current.width(), current.height(), patch_size, stride)?;
    let cur = extract_patches(current, &grid)?;
    let rf = extract_patches(reference, &grid)?;
    let area = patch_size * patch_size;
    let mut out = Vec::with_capacity(cur.len());
    for (c, r) in cur.chunks(CHUNK).zip(rf.chunks(CHUNK)) {
        let stack = |ps: &[Plane<u8>]| {
            let data = ps
                .iter()
                .flat_map(|p| p.data().iter().map(|&v| f32::from(v) / 255.0))
                .collect();
            Tensor::from_vec(Shape::new(ps.len(), 1, patch_size, patch_size), data)
        };
        let y = model.infer(&stack(c)?, &stack(r)?)?;
        for item in y.data().chunks_exact(area) {
            out.push(Plane::new(patch_size, patch_size, item.to_vec())?);
        }
    }
    Ok(reassemble_f32(&out, &grid)?.map(to_byte))
}

/// Filters every frame's luma plane; chroma passes through. Frame `t` uses
/// the unfiltered frame `t - 1` as reference, and frame 0 is paired with
/// itself.
pub fn filter_sequence(
    model: &Mscnn<f32>,
    seq: &YuvSequence,
    patch_size: usize,
    stride: usize,
) -> Result<YuvSequence> {
    let frames = seq.frames();
    let out = frames
        .iter()
        .enumerate()
        .map(|(t, f)| {
            let reference = &frames[t.saturating_sub(1)].y;
            Ok(YuvFrame {
                y: filter_plane(model, &f.y, reference, patch_size, stride)?,
                u: f.u.clone(),
                v: f.v.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    YuvSequence::new(seq.width(), seq.height(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_image;
    use crate::network::NetworkConfig;

    #[test]
    fn zero_model_is_identity() {
        let model = Mscnn::<f32>::zeros(NetworkConfig::canonical(1)).unwrap();
        let p = synthetic_image(4, 80, 48);
        assert_eq!(filter_plane(&model, &p, &p, 32, 32).unwrap(), p);
        assert!(filter_plane(&model, &p, &p, 24, 24).is_err());
    }
}
