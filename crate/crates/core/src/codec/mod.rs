//! Stage 3: lossless coding of sorted codes.
//!
//! Segment IDs are run-length coded, the unique IDs are delta coded, and the
//! deltas, run counts and per-particle offsets are each bit-packed at the
//! smallest uniform width that holds their largest value.

mod delta;
mod pack;
mod rle;

pub use delta::{delta_decode, delta_encode};
pub use pack::{pack_fixed, packed_len, unpack_fixed, unpack_slice, width_for, BitReader, BitWriter, PackedStream};
pub use rle::{rle_decode, rle_encode, RleResult};
