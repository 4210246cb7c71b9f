//! Block-parallel, error-bounded lossy compression of particle positions.
//!
//! Coordinates are split into fixed-size blocks in storage order. Each block
//! goes through four stages:
//!
//! 1. [`quantizer`]: block bounds, then per-axis bin indices split into a
//!    segment ID and an offset within the segment, linearized across axes;
//! 2. [`blocksort`]: radix sort of the codes by segment ID;
//! 3. [`codec`]: run-length coding of segment IDs, delta coding of the
//!    distinct IDs, and fixed-width bit packing of every stream;
//! 4. [`container`]: payloads are gathered behind an offset table into a
//!    `.gpz` file.
//!
//! Every reconstructed coordinate lies within the absolute error bound of the
//! original. Particle order inside a block is not kept unless
//! [`CompressConfig::preserve_order`] is set.
//!
//! ```
//! use gpz::{compress, decompress_as, CompressConfig, Dataset32};
//!
//! let ds = Dataset32::new(vec![vec![0.2, 3.7, 5.1, 7.9]]).unwrap();
//! let cfg = CompressConfig::absolute(0.5).with_preserve_order(true);
//! let bytes = compress(&ds, &cfg).unwrap();
//! let back: Dataset32 = decompress_as(&bytes).unwrap();
//! for (p, r) in ds.axis(0).iter().zip(back.axis(0)) {
//!     assert!((p - r).abs() <= 0.5);
//! }
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod blocksort;
pub mod codec;
pub mod container;
pub mod error;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod quantizer;
pub mod scalar;

pub use error::{GpzError, Result};
pub use model::{resolve_absolute_bound, AnyDataset, CompressConfig, Dataset, EbMode};
pub use pipeline::{compress, decompress, decompress_as, with_workers};
pub use scalar::{Coordinate, Precision};

pub type Dataset32 = Dataset<f32>;
pub type Dataset64 = Dataset<f64>;
pub type BlockBounds32 = quantizer::BlockBounds<f32>;
pub type BlockBounds64 = quantizer::BlockBounds<f64>;
pub type BlockHeader32 = container::BlockHeader<f32>;
pub type BlockHeader64 = container::BlockHeader<f64>;
