//! Query-guided semantic image transmission.
//!
//! A relevance map fused from vision and text embeddings ranks the 8x8
//! patches of an image; each patch is then sent at one of several fixed byte
//! budgets so that the whole frame fits the channel, and the receiver
//! reassembles the image from whatever resolution each patch arrived at.
//!
//! - [`tensors`]: `.mmta` tensor archives and PPM/PGM raster I/O
//! - [`fusion`]: relevance map from exported embeddings
//! - [`allocation`]: patch scores and budgeted level assignment
//! - [`codec`]: per-level patch codecs and the `.mmsf` frame format
//! - [`transport`]: capacity-limited channel
//! - [`metrics`]: masked MSE, relevance L1, embedding similarity, PSNR

pub mod allocation;
pub mod codec;
pub mod fusion;
pub mod metrics;
pub mod tensors;
pub mod transport;
