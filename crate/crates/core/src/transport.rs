//! Ideal capacity-limited channel.

use thiserror::Error;

use crate::allocation::{budget_from_fraction, AllocationError};
use crate::codec::EncodedFrame;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("payload of {payload} bytes exceeds channel budget of {budget} bytes")]
    CapacityExceeded { payload: u64, budget: u64 },
    #[error(transparent)]
    Config(#[from] AllocationError),
}

/// Per-frame channel capacity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelConfig {
    /// Absolute payload budget in bytes.
    Budget(u64),
    /// Fraction of the all-top-level payload size.
    Rate(f64),
}

impl ChannelConfig {
    /// Byte budget for a frame whose all-top-level payload is `full_payload`.
    pub fn budget(&self, full_payload: u64) -> Result<u64, TransportError> {
        match *self {
            ChannelConfig::Budget(b) => Ok(b),
            ChannelConfig::Rate(r) => Ok(budget_from_fraction(r, full_payload)?),
        }
    }
}

/// Delivers `frame` if its payload section fits the channel budget.
/// The channel is lossless and order-preserving.
pub fn transmit(frame: EncodedFrame, cfg: &ChannelConfig) -> Result<EncodedFrame, TransportError> {
    let budget = cfg.budget(frame.full_payload())?;
    let payload = frame.payload_len();
    if payload > budget {
        return Err(TransportError::CapacityExceeded { payload, budget });
    }
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::{AllocationPlan, RateTable};
    use crate::codec::encode_frame;
    use crate::tensors::RasterImage;

    fn frame(levels: &[u8], w: usize) -> EncodedFrame {
        let img = RasterImage::filled(w, 8, 90);
        let plan = AllocationPlan::from_levels(levels.to_vec(), RateTable::default()).unwrap();
        encode_frame(&img, &plan).unwrap()
    }

    #[test]
    fn boundary_is_inclusive() {
        let f = frame(&[4, 3, 0], 24);
        assert_eq!(f.payload_len(), 240);
        let out = transmit(f.clone(), &ChannelConfig::Budget(240)).unwrap();
        assert_eq!(out, f);
    }

    #[test]
    fn one_byte_over_is_rejected() {
        // 192 + 48 + 12 = 252 > 251
        let f = frame(&[4, 3, 1], 24);
        match transmit(f, &ChannelConfig::Budget(251)) {
            Err(TransportError::CapacityExceeded { payload, budget }) => {
                assert_eq!((payload, budget), (252, 251));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn half_rate_of_reference_frame() {
        let cfg = ChannelConfig::Rate(0.5);
        assert_eq!(
            cfg.budget(RateTable::default().full_payload(2400)).unwrap(),
            230_400
        );
    }

    #[test]
    fn rate_out_of_range() {
        assert!(matches!(
            ChannelConfig::Rate(1.01).budget(100),
            Err(TransportError::Config(_))
        ));
    }
}
