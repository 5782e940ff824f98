//! Frames and patches: YUV I/O, tiling, augmentation, the codec proxy and
//! dataset assembly.

mod augment;
mod codec;
mod dataset;
mod patch;
mod plane;
mod synthetic;
mod yuv;

pub use augment::{apply as apply_augmentation, augment, flip_horizontal, rotate90, scale_bilinear, Augmentation, AugmentationSpec};
pub use codec::{code_once, codec_proxy, dct2, idct2, CodecProxyConfig, BLOCK};
pub use patch::{extract_patches, reassemble, reassemble_f32, PatchGrid};
pub(crate) use plane::to_byte;
pub use plane::{denormalize, normalize, Plane};
pub use synthetic::synthetic_image;
pub use yuv::{read_luma_image, read_yuv, write_luma_image, write_yuv, YuvFrame, YuvSequence};
pub use dataset::{build_dataset, Dataset, DatasetSpec, LumaSource, ManifestEntry, PatchSet, MANIFEST_FILE};
