//! Compression and decompression over all blocks.
//!
//! Blocks are consecutive runs of `block_size` particles in storage order.
//! Each block is quantized, sorted, encoded and serialized independently on
//! the rayon pool; the only cross-block step is the offset scan in
//! [`compact`]. Results are collected in block order, so the output does not
//! depend on the number of workers.

use rayon::prelude::*;

use crate::blocksort::sort_block;
use crate::codec::{
    delta_decode, delta_encode, pack_fixed, rle_decode, rle_encode, unpack_fixed, width_for, RleResult,
};
use crate::container::{
    compact, parse_block, serialize_block, AxisHeader, BlockHeader, BlockLayout, BlockStreams, Container, GlobalHeader,
    VERSION,
};
use crate::error::{GpzError, Result};
use crate::model::{resolve_absolute_bound, AnyDataset, BlockGeometry, Code, CompressConfig, Dataset, QuantizedBlock};
use crate::quantizer::{
    block_bounds, check_linear_range, dequantize_block, derive_axis, derive_geometry, quantize_block,
};
use crate::scalar::{Coordinate, Precision};

/// Index ranges of the blocks covering `count` particles.
pub fn block_ranges(count: usize, block_size: usize) -> impl Iterator<Item = std::ops::Range<usize>> + Clone {
    (0..count.div_ceil(block_size)).map(move |b| b * block_size..((b + 1) * block_size).min(count))
}

/// Absolute bound the pipeline will use for `ds`. An empty dataset has no
/// range, so a relative bound is taken against a unit range.
pub fn effective_bound<T: Coordinate>(ds: &Dataset<T>, cfg: &CompressConfig) -> Result<f64> {
    cfg.validate()?;
    if ds.is_empty() {
        return Ok(cfg.error_bound);
    }
    resolve_absolute_bound(ds, cfg)
}

/// Compresses a dataset into `.gpz` container bytes.
pub fn compress<T: Coordinate>(ds: &Dataset<T>, cfg: &CompressConfig) -> Result<Vec<u8>> {
    Ok(compress_container(ds, cfg)?.to_bytes())
}

pub fn compress_container<T: Coordinate>(ds: &Dataset<T>, cfg: &CompressConfig) -> Result<Container> {
    let eb_abs = effective_bound(ds, cfg)?;
    let ranges: Vec<_> = block_ranges(ds.len(), cfg.block_size).collect();
    let payloads = ranges
        .into_par_iter()
        .enumerate()
        .map(|(b, range)| encode_block(&ds.slice(range), eb_abs, cfg).map_err(|e| e.in_block(b)))
        .collect::<Result<Vec<_>>>()?;
    let (offsets, payload) = compact(&payloads);
    let header = GlobalHeader {
        version: VERSION,
        dims: ds.dims() as u8,
        precision: T::PRECISION,
        preserve_order: cfg.preserve_order,
        eb_mode: cfg.eb_mode,
        eb_abs,
        eb_original: cfg.error_bound,
        block_size: cfg.block_size as u32,
        target_segs_per_axis: cfg.target_segs_per_axis,
        particle_count: ds.len() as u64,
        block_count: payloads.len() as u64,
    };
    Ok(Container { header, offsets, payload })
}

/// Runs stages 1-3 on one block and serializes the result.
pub fn encode_block<T: Coordinate>(block: &[&[T]], eb_abs: f64, cfg: &CompressConfig) -> Result<Vec<u8>> {
    let bounds = block_bounds(block)?;
    let geometry = derive_geometry(&bounds, eb_abs, cfg.target_segs_per_axis)?;
    encode_block_with_geometry(block, &geometry, eb_abs, cfg.preserve_order)
}

/// Like [`encode_block`] but against a given geometry, e.g. one read back
/// from an existing container.
pub fn encode_block_with_geometry<T: Coordinate>(
    block: &[&[T]],
    geometry: &BlockGeometry,
    eb_abs: f64,
    preserve_order: bool,
) -> Result<Vec<u8>> {
    let qb = sort_block(&quantize_block(block, geometry, eb_abs, preserve_order)?);
    let (header, streams) = encode_sorted::<T>(&qb)?;
    Ok(serialize_block(&header, &streams))
}

/// Stage 3 on a sorted block: RLE, delta and fixed-width coding.
pub fn encode_sorted<T: Coordinate>(qb: &QuantizedBlock) -> Result<(BlockHeader<T>, BlockStreams)> {
    let seg_ids: Vec<u64> = qb.codes.iter().map(|c| c.seg_id).collect();
    let offsets: Vec<u64> = qb.codes.iter().map(|c| c.offset).collect();
    let RleResult { unique_ids, counts } = rle_encode(&seg_ids)?;
    let deltas = delta_encode(&unique_ids)?;

    let pack = |v: &[u64]| pack_fixed(v, width_for(v));
    let delta = pack(&deltas)?;
    let count = pack(&counts)?;
    let offset = pack(&offsets)?;
    let rank = qb.ranks.as_ref().map(|r| pack(&r.iter().map(|&x| x as u64).collect::<Vec<_>>())).transpose()?;

    let axes = qb
        .geometry
        .axes
        .iter()
        .map(|g| {
            let seg_count = u32::try_from(g.seg_count)
                .map_err(|_| GpzError::overflow(format!("{} segments on one axis", g.seg_count)))?;
            Ok(AxisHeader { min: T::narrow(g.min), max: T::narrow(g.max), offset_bits: g.offset_bits, seg_count })
        })
        .collect::<Result<Vec<_>>>()?;
    let header = BlockHeader {
        particle_count: u32::try_from(qb.len()).map_err(|_| GpzError::overflow("block too large"))?,
        unique_count: unique_ids.len() as u32,
        axes,
        w_delta: delta.bit_width,
        w_count: count.bit_width,
        w_offset: offset.bit_width,
        w_rank: rank.as_ref().map(|r| r.bit_width),
    };
    Ok((header, BlockStreams { delta, count, offset, rank }))
}

/// Rebuilds a block's geometry from the bounds in its header and checks it
/// against the stored segment size and count.
pub fn header_geometry<T: Coordinate>(
    header: &BlockHeader<T>,
    eb_abs: f64,
    target_segs_per_axis: u32,
) -> Result<BlockGeometry> {
    let axes = header
        .axes
        .iter()
        .map(|a| {
            let g = derive_axis::<T>(a.min.widen(), a.max.widen(), eb_abs, target_segs_per_axis)
                .map_err(|e| GpzError::corrupt(e.to_string()))?;
            if g.offset_bits != a.offset_bits || g.seg_count != a.seg_count as u64 {
                return Err(GpzError::corrupt(format!(
                    "stored geometry (log2 m {}, N {}) disagrees with bounds (log2 m {}, N {})",
                    a.offset_bits, a.seg_count, g.offset_bits, g.seg_count
                )));
            }
            Ok(g)
        })
        .collect::<Result<Vec<_>>>()?;
    check_linear_range(&axes).map_err(|e| GpzError::corrupt(e.to_string()))?;
    Ok(BlockGeometry { axes })
}

/// A decoded block: its stored geometry and the reconstructed coordinates,
/// in original intra-block order when ranks are stored, sorted otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedBlock<T> {
    pub geometry: BlockGeometry,
    pub axes: Vec<Vec<T>>,
}

/// Decodes block `index` of a parsed container.
pub fn decode_block<T: Coordinate>(container: &Container, index: usize) -> Result<DecodedBlock<T>> {
    let h = &container.header;
    if h.precision != T::PRECISION {
        return Err(GpzError::domain(format!("container holds {} data, not {}", h.precision, T::PRECISION)));
    }
    let expected = h.block_particles(index as u64) as usize;
    decode_block_bytes(container.block_bytes(index), &h.layout(), h.eb_abs, expected)
        .map_err(|e| e.shifted(container.block_position(index)).in_block(index))
}

fn decode_block_bytes<T: Coordinate>(
    bytes: &[u8],
    layout: &BlockLayout,
    eb_abs: f64,
    expected: usize,
) -> Result<DecodedBlock<T>> {
    let (header, streams) = parse_block::<T>(bytes, layout)?;
    let n = header.particle_count as usize;
    if n != expected {
        return Err(GpzError::corrupt(format!("block holds {n} particles, expected {expected}")));
    }
    let geometry = header_geometry(&header, eb_abs, layout.target_segs_per_axis)?;
    let unique_ids = delta_decode(&unpack_fixed(&streams.delta)?)?;
    let counts = unpack_fixed(&streams.count)?;
    let seg_ids = rle_decode(&RleResult { unique_ids, counts })?;
    if seg_ids.len() != n {
        return Err(GpzError::corrupt(format!("runs cover {} particles, expected {n}", seg_ids.len())));
    }
    let offsets = unpack_fixed(&streams.offset)?;
    let codes = seg_ids.into_iter().zip(offsets).map(|(seg_id, offset)| Code { seg_id, offset }).collect();
    let qb = QuantizedBlock { geometry, codes, ranks: None };
    let mut axes: Vec<Vec<T>> = dequantize_block(&qb)?;

    if let Some(rank) = &streams.rank {
        let ranks = unpack_fixed(rank)?;
        let mut placed = vec![false; n];
        let mut restored = vec![vec![T::zero(); n]; axes.len()];
        for (i, &r) in ranks.iter().enumerate() {
            let r = r as usize;
            if r >= n || std::mem::replace(&mut placed[r], true) {
                return Err(GpzError::corrupt("ranks are not a permutation of the block"));
            }
            for (dst, src) in restored.iter_mut().zip(&axes) {
                dst[r] = src[i];
            }
        }
        axes = restored;
    }
    Ok(DecodedBlock { geometry: qb.geometry, axes })
}

/// Iterates decoded blocks in order.
pub fn blocks<T: Coordinate>(container: &Container) -> impl Iterator<Item = Result<DecodedBlock<T>>> + '_ {
    (0..container.block_count()).map(move |i| decode_block(container, i))
}

pub fn decompress_container<T: Coordinate>(container: &Container) -> Result<Dataset<T>> {
    let decoded = (0..container.block_count())
        .into_par_iter()
        .map(|i| decode_block::<T>(container, i))
        .collect::<Result<Vec<_>>>()?;
    let dims = container.header.dims as usize;
    let n = container.header.particle_count as usize;
    let mut axes = vec![Vec::with_capacity(n); dims];
    for block in decoded {
        for (dst, src) in axes.iter_mut().zip(block.axes) {
            dst.extend(src);
        }
    }
    Ok(Dataset::from_axes_unchecked(axes))
}

/// Decompresses container bytes whose precision is known in advance.
pub fn decompress_as<T: Coordinate>(bytes: &[u8]) -> Result<Dataset<T>> {
    decompress_container(&Container::from_bytes(bytes)?)
}

pub fn decompress(bytes: &[u8]) -> Result<AnyDataset> {
    let container = Container::from_bytes(bytes)?;
    Ok(match container.header.precision {
        Precision::F32 => AnyDataset::F32(decompress_container(&container)?),
        Precision::F64 => AnyDataset::F64(decompress_container(&container)?),
    })
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("failed to build worker pool").install(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_point_block() -> Dataset<f64> {
        Dataset::new(vec![vec![0.2, 3.7, 5.1, 7.9]]).unwrap()
    }

    fn cfg() -> CompressConfig {
        CompressConfig::absolute(0.5).with_block_size(32).with_segs_per_axis(4)
    }

    #[test]
    fn four_point_round_trip() {
        let ds = four_point_block();
        let bytes = compress(&ds, &cfg()).unwrap();
        let back = decompress_as::<f64>(&bytes).unwrap();
        let mut orig = ds.axis(0).to_vec();
        orig.sort_by(f64::total_cmp);
        for (p, r) in orig.iter().zip(back.axis(0)) {
            assert!((p - r).abs() <= 0.5, "{p} vs {r}");
        }
    }

    #[test]
    fn four_point_streams() {
        // Bins [0,3,4,7], m = 2: segments [0,1,2,3], offsets [0,1,0,1].
        let ds = four_point_block();
        let c = compress_container(&ds, &cfg()).unwrap();
        let (h, s) = parse_block::<f64>(c.block_bytes(0), &c.header.layout()).unwrap();
        assert_eq!(h.unique_count, 4);
        assert_eq!(unpack_fixed(&s.delta).unwrap(), vec![0, 1, 1, 1]);
        assert_eq!(unpack_fixed(&s.count).unwrap(), vec![1, 1, 1, 1]);
        assert_eq!(unpack_fixed(&s.offset).unwrap(), vec![0, 1, 0, 1]);
    }

    #[test]
    fn empty_dataset() {
        for cfg in [CompressConfig::relative(1e-3), CompressConfig::absolute(0.1)] {
            let ds = Dataset::<f32>::empty(3).unwrap();
            let bytes = compress(&ds, &cfg).unwrap();
            let c = Container::from_bytes(&bytes).unwrap();
            assert_eq!(c.header.block_count, 0);
            assert_eq!(c.offsets, vec![0]);
            let back = decompress(&bytes).unwrap();
            assert!(back.is_empty());
            assert_eq!(back.dims(), 3);
        }
    }

    #[test]
    fn constant_dataset_is_headers_only() {
        let ds = Dataset::new(vec![vec![2.5f32; 3000], vec![-1.0; 3000]]).unwrap();
        let cfg = CompressConfig::relative(1e-3);
        let c = compress_container(&ds, &cfg).unwrap();
        assert_eq!(c.block_count(), 3);
        for i in 0..3 {
            let (h, s) = parse_block::<f32>(c.block_bytes(i), &c.header.layout()).unwrap();
            assert!(h.axes.iter().all(|a| a.seg_count == 1 && a.offset_bits == 0));
            assert_eq!((h.w_delta, h.w_offset), (0, 0));
            assert!(s.delta.bytes.is_empty() && s.offset.bytes.is_empty());
            // A single run whose count needs a few bits.
            assert_eq!(s.count.bytes.len(), 2);
        }
        let back = decompress_as::<f32>(&c.to_bytes()).unwrap();
        assert!(back.axis(0).iter().all(|&v| (v - 2.5).abs() <= 3.5e-3));
    }

    #[test]
    fn partial_last_block_and_order_preservation() {
        let xs: Vec<f64> = (0..100).map(|i| ((i * 37) % 100) as f64 * 0.1).collect();
        let ys: Vec<f64> = (0..100).map(|i| ((i * 11) % 13) as f64).collect();
        let ds = Dataset::new(vec![xs, ys]).unwrap();
        let cfg = CompressConfig::absolute(0.05).with_block_size(32).with_preserve_order(true);
        let back = decompress_as::<f64>(&compress(&ds, &cfg).unwrap()).unwrap();
        for a in 0..2 {
            for (p, r) in ds.axis(a).iter().zip(back.axis(a)) {
                assert!((p - r).abs() <= 0.05);
            }
        }
    }

    #[test]
    fn errors_name_the_block() {
        let ds = Dataset::new(vec![(0..64).map(|i| if i < 40 { 0.0 } else { 1e15 }).collect::<Vec<f64>>()]).unwrap();
        let cfg = CompressConfig::absolute(1e-6).with_block_size(32);
        let err = compress(&ds, &cfg).unwrap_err();
        assert!(matches!(err, GpzError::WidthOverflow { .. }));
        assert_eq!(err.block(), Some(1));
        assert!(err.to_string().contains("block 1"));
    }

    #[test]
    fn precision_mismatch_is_reported() {
        let bytes = compress(&four_point_block(), &cfg()).unwrap();
        assert!(decompress_as::<f32>(&bytes).is_err());
    }

    #[test]
    fn block_ranges_cover_count() {
        let r: Vec<_> = block_ranges(70, 32).collect();
        assert_eq!(r, vec![0..32, 32..64, 64..70]);
        assert_eq!(block_ranges(0, 32).count(), 0);
    }
}
