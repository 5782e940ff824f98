use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{apply_augmentation, codec_proxy, extract_patches, Augmentation, AugmentationSpec};
use super::{read_luma_image, read_yuv, CodecProxyConfig, PatchGrid, Plane};
use crate::checkpoint::write_atomic;
use crate::error::{Error, Result};
use crate::tensor::{map_items, Shape, Tensor};
use crate::training::{Batch, PatchSource};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
const TILE_MAGIC: &[u8; 4] = b"MSPT";
const TILE_VERSION: u32 = 1;

/// Luma frames of one still image or video sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct LumaSource {
    pub name: String,
    pub frames: Vec<Plane<u8>>,
}

impl LumaSource {
    pub fn still(name: impl Into<String>, plane: Plane<u8>) -> Self {
        LumaSource {
            name: name.into(),
            frames: vec![plane],
        }
    }

    pub fn open_image(path: &Path) -> Result<Self> {
        Ok(Self::still(path.display().to_string(), read_luma_image(path)?))
    }

    pub fn open_yuv(path: &Path, width: usize, height: usize) -> Result<Self> {
        let seq = read_yuv(path, width, height)?;
        Ok(LumaSource {
            name: path.display().to_string(),
            frames: seq.into_frames().into_iter().map(|f| f.y).collect(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub qps: Vec<u32>,
    pub augmentation: AugmentationSpec,
    pub patch_size: usize,
    pub stride: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            qps: vec![22, 27, 32, 37],
            augmentation: AugmentationSpec::default(),
            patch_size: 128,
            stride: 10,
        }
    }
}

/// Provenance of one stored triple.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: usize,
    pub qp: u32,
    pub source: String,
    pub frame: usize,
    /// Frame the reference patch was cut from (equal to `frame` for the
    /// first frame and for still images).
    pub reference_frame: usize,
    pub x: usize,
    pub y: usize,
    pub rotation: u32,
    pub scale: f64,
    pub flip: bool,
}

/// Aligned 8-bit patch triples for a single QP.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchSet {
    qp: u32,
    patch_size: usize,
    current: Vec<u8>,
    reference: Vec<u8>,
    truth: Vec<u8>,
}

impl PatchSet {
    pub fn new(qp: u32, patch_size: usize) -> Self {
        PatchSet {
            qp,
            patch_size,
            current: Vec::new(),
            reference: Vec::new(),
            truth: Vec::new(),
        }
    }

    pub fn qp(&self) -> u32 {
        self.qp
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn push(&mut self, current: &Plane<u8>, reference: &Plane<u8>, truth: &Plane<u8>) -> Result<()> {
        let p = self.patch_size;
        for t in [current, reference, truth] {
            if (t.width(), t.height()) != (p, p) {
                return Err(Error::shape("PatchSet::push", format!("expected {p}x{p} patch")));
            }
        }
        self.current.extend_from_slice(current.data());
        self.reference.extend_from_slice(reference.data());
        self.truth.extend_from_slice(truth.data());
        Ok(())
    }

    /// `(current, reference, ground truth)` of triple `i`.
    pub fn triple(&self, i: usize) -> Result<[Plane<u8>; 3]> {
        if i >= PatchSource::len(self) {
            return Err(Error::InvalidArgument(format!("patch {i} out of range")));
        }
        let area = self.patch_size * self.patch_size;
        let r = i * area..(i + 1) * area;
        let p = self.patch_size;
        Ok([
            Plane::new(p, p, self.current[r.clone()].to_vec())?,
            Plane::new(p, p, self.reference[r.clone()].to_vec())?,
            Plane::new(p, p, self.truth[r].to_vec())?,
        ])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 3 * self.truth.len());
        out.extend_from_slice(TILE_MAGIC);
        for v in [TILE_VERSION, self.qp, self.patch_size as u32, PatchSource::len(self) as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let area = self.patch_size * self.patch_size;
        for i in 0..PatchSource::len(self) {
            let r = i * area..(i + 1) * area;
            out.extend_from_slice(&self.current[r.clone()]);
            out.extend_from_slice(&self.reference[r.clone()]);
            out.extend_from_slice(&self.truth[r]);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |d: String| Error::format("patch file", d);
        if bytes.len() < 20 || &bytes[..4] != TILE_MAGIC {
            return Err(bad("missing MSPT header".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes"));
        if word(0) != TILE_VERSION {
            return Err(bad(format!("unsupported version {}", word(0))));
        }
        let (qp, p, count) = (word(1), word(2) as usize, word(3) as usize);
        let area = p * p;
        if bytes.len() != 20 + 3 * area * count {
            return Err(bad(format!(
                "{} bytes for {count} triples of {p}x{p}",
                bytes.len()
            )));
        }
        let mut set = PatchSet::new(qp, p);
        for chunk in bytes[20..].chunks_exact(3 * area.max(1)).take(count) {
            set.current.extend_from_slice(&chunk[..area]);
            set.reference.extend_from_slice(&chunk[area..2 * area]);
            set.truth.extend_from_slice(&chunk[2 * area..]);
        }
        Ok(set)
    }

    pub fn file_name(qp: u32) -> String {
        format!("patches_qp{qp}.mspt")
    }

    pub fn load(dir: &Path, qp: u32) -> Result<Self> {
        let path = dir.join(Self::file_name(qp));
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let set = Self::from_bytes(&bytes)?;
        if set.qp != qp {
            return Err(Error::format("patch file", format!("{} holds qp {}", path.display(), set.qp)));
        }
        Ok(set)
    }
}

impl PatchSource for PatchSet {
    fn len(&self) -> usize {
        self.truth.len() / (self.patch_size * self.patch_size).max(1)
    }

    fn batch(&self, indices: &[usize]) -> Result<Batch<f32>> {
        let p = self.patch_size;
        let area = p * p;
        let shape = Shape::new(indices.len(), 1, p, p);
        let gather = |src: &[u8]| -> Result<Tensor<f32>> {
            let mut data = Vec::with_capacity(indices.len() * area);
            for &i in indices {
                let s = src
                    .get(i * area..(i + 1) * area)
                    .ok_or_else(|| Error::InvalidArgument(format!("patch {i} out of range")))?;
                data.extend(s.iter().map(|&v| f32::from(v) / 255.0));
            }
            Tensor::from_vec(shape, data)
        };
        Ok(Batch {
            current: gather(&self.current)?,
            reference: gather(&self.reference)?,
            ground_truth: gather(&self.truth)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub sets: BTreeMap<u32, PatchSet>,
    pub manifest: Vec<ManifestEntry>,
    /// Augmented variants dropped because they were smaller than a patch.
    pub skipped_variants: usize,
}

impl Dataset {
    pub fn manifest_text(&self) -> String {
        let mut s = String::new();
        for e in &self.manifest {
            s.push_str(&serde_json::to_string(e).expect("manifest entry serializes"));
            s.push('\n');
        }
        s
    }

    /// Writes the manifest and one patch file per QP into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        for (qp, set) in &self.sets {
            let path = dir.join(PatchSet::file_name(*qp));
            write_atomic(&path, &set.to_bytes())?;
            written.push(path);
        }
        let path = dir.join(MANIFEST_FILE);
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(self.manifest_text().as_bytes())
            .map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(written)
    }
}

struct Unit<'a> {
    source: &'a LumaSource,
    aug: Augmentation,
    qp: u32,
}

/// Degrades every augmented frame of every source at each QP and cuts the
/// aligned patch triples. The reference patch comes from the previous
/// degraded frame; the first frame (and any still image) is its own
/// reference. Order: QP, source, augmentation variant, frame, origin.
pub fn build_dataset(sources: &[LumaSource], spec: &DatasetSpec) -> Result<Dataset> {
    spec.augmentation.validate()?;
    if sources.is_empty() || sources.iter().any(|s| s.frames.is_empty()) {
        return Err(Error::InvalidArgument("no source frames to build a dataset from".into()));
    }
    if spec.qps.is_empty() {
        return Err(Error::InvalidConfig("no QPs requested".into()));
    }
    let cfgs = spec
        .qps
        .iter()
        .map(|&qp| CodecProxyConfig::new(qp))
        .collect::<Result<Vec<_>>>()?;
    let variants = spec.augmentation.variants();
    let mut units = Vec::new();
    for c in &cfgs {
        for source in sources {
            for &aug in &variants {
                units.push(Unit { source, aug, qp: c.qp });
            }
        }
    }

    let results = map_items(units.len(), |u| -> Result<Option<Vec<(ManifestEntry, [Plane<u8>; 3])>>> {
        let unit = &units[u];
        let truth: Vec<Plane<u8>> = unit
            .source
            .frames
            .iter()
            .map(|f| apply_augmentation(f, &unit.aug))
            .collect();
        let (w, h) = (truth[0].width(), truth[0].height());
        if w < spec.patch_size || h < spec.patch_size {
            return Ok(None);
        }
        let grid = PatchGrid::new(w, h, spec.patch_size, spec.stride)?;
        let cfg = CodecProxyConfig::new(unit.qp)?;
        let degraded: Vec<Plane<u8>> = truth.iter().map(|f| codec_proxy(f, &cfg)).collect();
        let mut out = Vec::new();
        for t in 0..truth.len() {
            let rf = t.saturating_sub(1);
            let cur = extract_patches(&degraded[t], &grid)?;
            let reference = extract_patches(&degraded[rf], &grid)?;
            let gt = extract_patches(&truth[t], &grid)?;
            for (((c, r), g), (x, y)) in cur.into_iter().zip(reference).zip(gt).zip(grid.origins()) {
                let entry = ManifestEntry {
                    id: 0,
                    qp: unit.qp,
                    source: unit.source.name.clone(),
                    frame: t,
                    reference_frame: rf,
                    x,
                    y,
                    rotation: unit.aug.rotation,
                    scale: unit.aug.scale,
                    flip: unit.aug.flip,
                };
                out.push((entry, [c, r, g]));
            }
        }
        Ok(Some(out))
    });

    let mut dataset = Dataset {
        sets: BTreeMap::new(),
        manifest: Vec::new(),
        skipped_variants: 0,
    };
    for r in results {
        let Some(items) = r? else {
            dataset.skipped_variants += 1;
            continue;
        };
        for (mut entry, [c, r, g]) in items {
            entry.id = dataset.manifest.len();
            dataset
                .sets
                .entry(entry.qp)
                .or_insert_with(|| PatchSet::new(entry.qp, spec.patch_size))
                .push(&c, &r, &g)?;
            dataset.manifest.push(entry);
        }
    }
    if dataset.manifest.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no source is at least {}px in both dimensions",
            spec.patch_size
        )));
    }
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: usize, h: usize, phase: usize) -> Plane<u8> {
        Plane::from_fn(w, h, |x, y| ((x * 5 + y * 3 + phase) % 251) as u8)
    }

    #[test]
    fn single_patch_per_qp() {
        let spec = DatasetSpec {
            augmentation: AugmentationSpec::none(),
            patch_size: 128,
            stride: 128,
            ..Default::default()
        };
        let ds = build_dataset(&[LumaSource::still("a", img(128, 128, 0))], &spec).unwrap();
        assert_eq!(ds.manifest.len(), 4);
        for set in ds.sets.values() {
            assert_eq!(PatchSource::len(set), 1);
        }
    }

    #[test]
    fn provenance_and_reference_frames() {
        let src = LumaSource {
            name: "seq".into(),
            frames: (0..3).map(|t| img(40, 24, t * 7)).collect(),
        };
        let spec = DatasetSpec {
            qps: vec![32],
            augmentation: AugmentationSpec::none(),
            patch_size: 16,
            stride: 12,
        };
        let ds = build_dataset(&[src.clone()], &spec).unwrap();
        let set = &ds.sets[&32];
        assert_eq!(ds.manifest.len(), PatchSource::len(set));
        for e in &ds.manifest {
            let [_, reference, truth] = set.triple(e.id).unwrap();
            assert_eq!(truth, src.frames[e.frame].crop(e.x, e.y, 16, 16).unwrap());
            assert_eq!(e.reference_frame, e.frame.saturating_sub(1));
            let cfg = CodecProxyConfig::new(32).unwrap();
            let rf = codec_proxy(&src.frames[e.reference_frame], &cfg);
            assert_eq!(reference, rf.crop(e.x, e.y, 16, 16).unwrap());
        }
    }

    #[test]
    fn small_variants_are_skipped_and_files_roundtrip() {
        let spec = DatasetSpec {
            qps: vec![37],
            patch_size: 32,
            stride: 16,
            ..Default::default()
        };
        let ds = build_dataset(&[LumaSource::still("a", img(64, 64, 1))], &spec).unwrap();
        // 0.25 scale gives 16px images: 3 rotations x 2 flips skipped
        assert_eq!(ds.skipped_variants, 6);
        let dir = tempfile::tempdir().unwrap();
        ds.write(dir.path()).unwrap();
        assert_eq!(PatchSet::load(dir.path(), 37).unwrap(), ds.sets[&37]);
        let text = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(text.lines().count(), ds.manifest.len());
        assert_eq!(build_dataset(&[LumaSource::still("a", img(64, 64, 1))], &spec).unwrap(), ds);
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(build_dataset(&[], &DatasetSpec::default()).is_err());
        let tiny = LumaSource::still("t", img(8, 8, 0));
        assert!(build_dataset(&[tiny], &DatasetSpec::default()).is_err());
    }
}
