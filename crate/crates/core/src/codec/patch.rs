//! Fixed-budget codecs for 8x8 RGB patches.

use super::CodecError;

pub const PATCH_SIZE: usize = 8;
pub const PATCH_BYTES: usize = PATCH_SIZE * PATCH_SIZE * 3;

/// Sample value used for patches that were not transmitted.
pub const SKIP_FILL: u8 = 128;

/// An 8x8 RGB patch, row-major, interleaved.
pub type Patch = [u8; PATCH_BYTES];

#[inline]
fn clamp(v: i32) -> u8 {
    v.clamp(0, 255) as u8
}

/// Fixed-point RGB to YCbCr.
#[inline]
pub fn rgb_to_ycbcr(r: u8, g: u8, b: u8) -> (u8, u8, u8) {
    let (r, g, b) = (r as i32, g as i32, b as i32);
    let y = (77 * r + 150 * g + 29 * b + 128) >> 8;
    let cb = ((-43 * r - 85 * g + 128 * b + 128) >> 8) + 128;
    let cr = ((128 * r - 107 * g - 21 * b + 128) >> 8) + 128;
    (clamp(y), clamp(cb), clamp(cr))
}

/// Fixed-point YCbCr to RGB.
#[inline]
pub fn ycbcr_to_rgb(y: u8, cb: u8, cr: u8) -> (u8, u8, u8) {
    let (y, cb, cr) = (y as i32, cb as i32 - 128, cr as i32 - 128);
    let r = y + ((359 * cr + 128) >> 8);
    let g = y - ((88 * cb + 183 * cr + 128) >> 8);
    let b = y + ((454 * cb + 128) >> 8);
    (clamp(r), clamp(g), clamp(b))
}

/// The analytic codec behind each byte budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatchCodec {
    /// 0 bytes; decodes to mid-gray.
    Skip,
    /// 12 bytes: 2x2 RGB.
    Rgb2x2,
    /// 24 bytes: 4x4 luma plus 2x2 Cb and 2x2 Cr.
    Luma4x4Chroma2x2,
    /// 48 bytes: 4x4 RGB.
    Rgb4x4,
    /// 192 bytes: the patch itself.
    Raw,
}

impl PatchCodec {
    pub const ALL: [PatchCodec; 5] = [
        PatchCodec::Skip,
        PatchCodec::Rgb2x2,
        PatchCodec::Luma4x4Chroma2x2,
        PatchCodec::Rgb4x4,
        PatchCodec::Raw,
    ];

    pub fn payload_len(self) -> usize {
        match self {
            PatchCodec::Skip => 0,
            PatchCodec::Rgb2x2 => 12,
            PatchCodec::Luma4x4Chroma2x2 => 24,
            PatchCodec::Rgb4x4 => 48,
            PatchCodec::Raw => PATCH_BYTES,
        }
    }

    pub fn for_rate(rate: u32) -> Result<Self, CodecError> {
        Self::ALL
            .into_iter()
            .find(|c| c.payload_len() as u32 == rate)
            .ok_or(CodecError::UnsupportedRate(rate))
    }

    /// Codec for a level of the default five-level table.
    pub fn for_level(level: u8) -> Result<Self, CodecError> {
        Self::ALL
            .get(level as usize)
            .copied()
            .ok_or(CodecError::InvalidLevel(level))
    }

    pub fn encode(self, patch: &Patch) -> Vec<u8> {
        match self {
            PatchCodec::Skip => Vec::new(),
            PatchCodec::Rgb2x2 => downsample_rgb(patch, 4),
            PatchCodec::Rgb4x4 => downsample_rgb(patch, 2),
            PatchCodec::Luma4x4Chroma2x2 => encode_ycbcr(patch),
            PatchCodec::Raw => patch.to_vec(),
        }
    }

    pub fn decode(self, payload: &[u8]) -> Result<Patch, CodecError> {
        if payload.len() != self.payload_len() {
            return Err(CodecError::PayloadLength {
                expected: self.payload_len(),
                actual: payload.len(),
            });
        }
        let mut out = [0u8; PATCH_BYTES];
        match self {
            PatchCodec::Skip => out.fill(SKIP_FILL),
            PatchCodec::Rgb2x2 => upsample_rgb(payload, 4, &mut out),
            PatchCodec::Rgb4x4 => upsample_rgb(payload, 2, &mut out),
            PatchCodec::Luma4x4Chroma2x2 => decode_ycbcr(payload, &mut out),
            PatchCodec::Raw => out.copy_from_slice(payload),
        }
        Ok(out)
    }
}

/// Sum over a `block x block` square of one plane, given a sample accessor.
fn block_sum(block: usize, bx: usize, by: usize, sample: impl Fn(usize, usize) -> u32) -> u32 {
    let mut sum = 0;
    for y in by * block..(by + 1) * block {
        for x in bx * block..(bx + 1) * block {
            sum += sample(x, y);
        }
    }
    sum
}

/// Rounded block mean: `(sum + area/2) >> log2(area)`.
#[inline]
fn block_mean(sum: u32, block: usize) -> u8 {
    let area = (block * block) as u32;
    ((sum + area / 2) >> area.trailing_zeros()) as u8
}

fn downsample_rgb(patch: &Patch, block: usize) -> Vec<u8> {
    let side = PATCH_SIZE / block;
    let mut out = Vec::with_capacity(side * side * 3);
    for by in 0..side {
        for bx in 0..side {
            for c in 0..3 {
                let sum = block_sum(block, bx, by, |x, y| {
                    patch[(y * PATCH_SIZE + x) * 3 + c] as u32
                });
                out.push(block_mean(sum, block));
            }
        }
    }
    out
}

fn upsample_rgb(payload: &[u8], block: usize, out: &mut Patch) {
    let side = PATCH_SIZE / block;
    for y in 0..PATCH_SIZE {
        for x in 0..PATCH_SIZE {
            let s = ((y / block) * side + x / block) * 3;
            out[(y * PATCH_SIZE + x) * 3..][..3].copy_from_slice(&payload[s..s + 3]);
        }
    }
}

fn encode_ycbcr(patch: &Patch) -> Vec<u8> {
    let mut planes = [[0u8; PATCH_SIZE * PATCH_SIZE]; 3];
    for p in 0..PATCH_SIZE * PATCH_SIZE {
        let (y, cb, cr) = rgb_to_ycbcr(patch[p * 3], patch[p * 3 + 1], patch[p * 3 + 2]);
        planes[0][p] = y;
        planes[1][p] = cb;
        planes[2][p] = cr;
    }
    let mut out = Vec::with_capacity(24);
    for (plane, block) in [(&planes[0], 2), (&planes[1], 4), (&planes[2], 4)] {
        let side = PATCH_SIZE / block;
        for by in 0..side {
            for bx in 0..side {
                let sum = block_sum(block, bx, by, |x, y| plane[y * PATCH_SIZE + x] as u32);
                out.push(block_mean(sum, block));
            }
        }
    }
    out
}

fn decode_ycbcr(payload: &[u8], out: &mut Patch) {
    let (luma, rest) = payload.split_at(16);
    let (cb, cr) = rest.split_at(4);
    for y in 0..PATCH_SIZE {
        for x in 0..PATCH_SIZE {
            let l = luma[(y / 2) * 4 + x / 2];
            let c = (y / 4) * 2 + x / 4;
            let (r, g, b) = ycbcr_to_rgb(l, cb[c], cr[c]);
            out[(y * PATCH_SIZE + x) * 3..][..3].copy_from_slice(&[r, g, b]);
        }
    }
}

/// Encoded bytes of one patch at one level of the default table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchPayload {
    pub level: u8,
    pub bytes: Vec<u8>,
}

pub fn encode_patch(patch: &Patch, level: u8) -> Result<PatchPayload, CodecError> {
    let codec = PatchCodec::for_level(level)?;
    Ok(PatchPayload {
        level,
        bytes: codec.encode(patch),
    })
}

/// Encodes a patch given as a slice, checking it holds exactly 8x8x3 samples.
pub fn encode_patch_slice(patch: &[u8], level: u8) -> Result<PatchPayload, CodecError> {
    let patch: &Patch = patch
        .try_into()
        .map_err(|_| CodecError::PatchDims(patch.len()))?;
    encode_patch(patch, level)
}

pub fn decode_patch(payload: &PatchPayload) -> Result<Patch, CodecError> {
    PatchCodec::for_level(payload.level)?.decode(&payload.bytes)
}
