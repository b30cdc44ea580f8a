//! Multi-resolution patch codecs and the frame wire format.

mod frame;
mod patch;

pub use frame::{
    decode_frame, encode_frame, EncodedFrame, FrameHeader, FRAME_MAGIC, FRAME_VERSION,
};
pub use patch::{
    decode_patch, encode_patch, encode_patch_slice, rgb_to_ycbcr, ycbcr_to_rgb, Patch, PatchCodec,
    PatchPayload, PATCH_BYTES, PATCH_SIZE, SKIP_FILL,
};

use thiserror::Error;

use crate::allocation::AllocationError;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("invalid level {0}")]
    InvalidLevel(u8),
    #[error("patch has {0} samples, expected 192")]
    PatchDims(usize),
    #[error("payload is {actual} bytes, level expects {expected}")]
    PayloadLength { expected: usize, actual: usize },
    #[error("no patch codec produces {0}-byte payloads")]
    UnsupportedRate(u32),
    #[error("patch size {0} is not supported, codecs work on 8x8 patches")]
    UnsupportedPatchSize(usize),
    #[error("image dimension {0} does not fit in a frame header")]
    ImageTooLarge(usize),
    #[error("plan covers {actual} patches, image has {expected}")]
    PlanLength { expected: usize, actual: usize },
    #[error("bad frame magic")]
    BadMagic,
    #[error("unsupported frame version {0}")]
    UnsupportedVersion(u8),
    #[error("unsupported channel count {0}")]
    UnsupportedChannels(u8),
    #[error("frame is truncated")]
    Truncated,
    #[error("{0} trailing bytes after frame payload")]
    TrailingBytes(usize),
    #[error(transparent)]
    Layout(#[from] AllocationError),
}
