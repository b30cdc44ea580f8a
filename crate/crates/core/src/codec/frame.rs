//! Whole-image frames (`.mmsf`).
//!
//! Layout (integers little-endian):
//!
//! ```text
//! "MMSF" | version u8 = 1 | height u16 | width u16 | patch size u8 | channels u8 = 3
//! | level count u8 | rate u32 * level count | level map u8 * P | payloads (row-major patches)
//! ```
//!
//! The header is not charged against the channel budget; only the payload section is.

use super::patch::{Patch, PatchCodec, PATCH_BYTES, PATCH_SIZE};
use super::CodecError;
use crate::allocation::{AllocationPlan, PatchGrid, RateTable};
use crate::tensors::RasterImage;

pub const FRAME_MAGIC: &[u8; 4] = b"MMSF";
pub const FRAME_VERSION: u8 = 1;
const CHANNELS: u8 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameHeader {
    pub height: u16,
    pub width: u16,
    pub patch_size: u8,
    pub rates: RateTable,
}

impl FrameHeader {
    pub fn grid(&self) -> Result<PatchGrid, CodecError> {
        Ok(PatchGrid::new(
            self.height as usize,
            self.width as usize,
            self.patch_size as usize,
        )?)
    }

    /// Header bytes excluding the level map.
    pub fn encoded_len(&self) -> usize {
        12 + 4 * self.rates.levels()
    }

    fn codecs(&self) -> Result<Vec<PatchCodec>, CodecError> {
        if self.patch_size as usize != PATCH_SIZE {
            return Err(CodecError::UnsupportedPatchSize(self.patch_size as usize));
        }
        self.rates
            .rates()
            .iter()
            .map(|&r| PatchCodec::for_rate(r))
            .collect()
    }
}

/// A serialized transmission unit: header, level map and payloads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedFrame {
    header: FrameHeader,
    levels: Vec<u8>,
    payload: Vec<u8>,
}

impl EncodedFrame {
    pub fn header(&self) -> &FrameHeader {
        &self.header
    }

    pub fn levels(&self) -> &[u8] {
        &self.levels
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn payload_len(&self) -> u64 {
        self.payload.len() as u64
    }

    /// Payload size with every patch at the top level.
    pub fn full_payload(&self) -> u64 {
        self.header.rates.full_payload(self.levels.len())
    }

    pub fn encoded_len(&self) -> usize {
        self.header.encoded_len() + self.levels.len() + self.payload.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(FRAME_MAGIC);
        out.push(FRAME_VERSION);
        out.extend_from_slice(&h.height.to_le_bytes());
        out.extend_from_slice(&h.width.to_le_bytes());
        out.push(h.patch_size);
        out.push(CHANNELS);
        out.push(h.rates.levels() as u8);
        for &r in h.rates.rates() {
            out.extend_from_slice(&r.to_le_bytes());
        }
        out.extend_from_slice(&self.levels);
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let take = |pos: &mut usize, n: usize| -> Result<&[u8], CodecError> {
            let s = bytes.get(*pos..*pos + n).ok_or(CodecError::Truncated)?;
            *pos += n;
            Ok(s)
        };
        let mut pos = 0;
        if take(&mut pos, 4)? != FRAME_MAGIC {
            return Err(CodecError::BadMagic);
        }
        let version = take(&mut pos, 1)?[0];
        if version != FRAME_VERSION {
            return Err(CodecError::UnsupportedVersion(version));
        }
        let height = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap());
        let width = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap());
        let fixed = take(&mut pos, 3)?;
        let (patch_size, channels, level_count) = (fixed[0], fixed[1], fixed[2] as usize);
        if channels != CHANNELS {
            return Err(CodecError::UnsupportedChannels(channels));
        }
        let rates = take(&mut pos, 4 * level_count)?
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let header = FrameHeader {
            height,
            width,
            patch_size,
            rates: RateTable::new(rates)?,
        };
        let grid = header.grid()?;
        let levels = take(&mut pos, grid.len())?.to_vec();
        let mut expected = 0usize;
        for &l in &levels {
            if l as usize >= level_count {
                return Err(CodecError::InvalidLevel(l));
            }
            expected += header.rates.rate(l) as usize;
        }
        let payload = take(&mut pos, expected)?.to_vec();
        if pos != bytes.len() {
            return Err(CodecError::TrailingBytes(bytes.len() - pos));
        }
        Ok(Self {
            header,
            levels,
            payload,
        })
    }
}

fn extract_patch(image: &RasterImage, x0: usize, y0: usize) -> Patch {
    let mut patch = [0u8; PATCH_BYTES];
    let row_bytes = PATCH_SIZE * 3;
    for y in 0..PATCH_SIZE {
        let src = ((y0 + y) * image.width() + x0) * 3;
        patch[y * row_bytes..(y + 1) * row_bytes]
            .copy_from_slice(&image.pixels()[src..src + row_bytes]);
    }
    patch
}

fn place_patch(image: &mut RasterImage, x0: usize, y0: usize, patch: &Patch) {
    let width = image.width();
    let row_bytes = PATCH_SIZE * 3;
    for y in 0..PATCH_SIZE {
        let dst = ((y0 + y) * width + x0) * 3;
        image.pixels_mut()[dst..dst + row_bytes]
            .copy_from_slice(&patch[y * row_bytes..(y + 1) * row_bytes]);
    }
}

/// Encodes every patch of `image` at the level chosen by `plan`.
pub fn encode_frame(
    image: &RasterImage,
    plan: &AllocationPlan,
) -> Result<EncodedFrame, CodecError> {
    let height =
        u16::try_from(image.height()).map_err(|_| CodecError::ImageTooLarge(image.height()))?;
    let width =
        u16::try_from(image.width()).map_err(|_| CodecError::ImageTooLarge(image.width()))?;
    let header = FrameHeader {
        height,
        width,
        patch_size: PATCH_SIZE as u8,
        rates: plan.table().clone(),
    };
    let codecs = header.codecs()?;
    let grid = PatchGrid::new(image.height(), image.width(), PATCH_SIZE)?;
    if plan.len() != grid.len() {
        return Err(CodecError::PlanLength {
            expected: grid.len(),
            actual: plan.len(),
        });
    }
    let mut payload = Vec::with_capacity(plan.total() as usize);
    for (i, &level) in plan.levels().iter().enumerate() {
        let codec = codecs[level as usize];
        if codec == PatchCodec::Skip {
            continue;
        }
        let (x0, y0) = grid.origin(i);
        payload.extend(codec.encode(&extract_patch(image, x0, y0)));
    }
    Ok(EncodedFrame {
        header,
        levels: plan.levels().to_vec(),
        payload,
    })
}

/// Reassembles the image, decoding each patch with its level's codec.
pub fn decode_frame(frame: &EncodedFrame) -> Result<RasterImage, CodecError> {
    let header = &frame.header;
    let codecs = header.codecs()?;
    let grid = header.grid()?;
    if frame.levels.len() != grid.len() {
        return Err(CodecError::PlanLength {
            expected: grid.len(),
            actual: frame.levels.len(),
        });
    }
    let mut image = RasterImage::filled(header.width as usize, header.height as usize, 0);
    let mut offset = 0usize;
    for (i, &level) in frame.levels.iter().enumerate() {
        let codec = *codecs
            .get(level as usize)
            .ok_or(CodecError::InvalidLevel(level))?;
        let len = codec.payload_len();
        let bytes = frame
            .payload
            .get(offset..offset + len)
            .ok_or(CodecError::Truncated)?;
        offset += len;
        let (x0, y0) = grid.origin(i);
        place_patch(&mut image, x0, y0, &codec.decode(bytes)?);
    }
    if offset != frame.payload.len() {
        return Err(CodecError::TrailingBytes(frame.payload.len() - offset));
    }
    Ok(image)
}
