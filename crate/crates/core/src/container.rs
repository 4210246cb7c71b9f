//! Stage 4: block payload serialization, compaction, and the `.gpz` file
//! format.
//!
//! All integers are little-endian. A file is laid out as
//!
//! ```text
//! global header (50 bytes)
//!   magic       "GPZ1"
//!   version     u16
//!   dims        u8      1..=3
//!   precision   u8      1 = f32, 2 = f64
//!   flags       u8      bit 0: order preserved
//!   eb_mode     u8      0 = absolute, 1 = range-relative
//!   eb_abs      f64     absolute bound used for quantization
//!   eb_original f64     bound as configured
//!   block_size  u32
//!   segs/axis   u32     target segment count per axis
//!   particles   u64
//!   blocks      u64
//! offset table  (blocks + 1) x u64, prefix sums of payload sizes
//! payloads      concatenated in block order
//! ```
//!
//! and each block payload as
//!
//! ```text
//! magic         u16     0x4b42 ("BK")
//! particles     u32
//! unique        u32     number of distinct segment IDs
//! per axis      min, max (f32|f64), log2(m) u8, N u32
//! widths        u8 delta, u8 count, u8 offset [, u8 rank]
//! streams       delta, count, offset [, rank], each packed LSB-first
//!               and padded to a whole byte
//! ```

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::blocksort::effective_bits;
use crate::codec::{packed_len, PackedStream};
use crate::error::{GpzError, Result};
use crate::model::{EbMode, LANE_WIDTH, MAX_DIMS};
use crate::scalar::{Coordinate, Precision};

pub const MAGIC: [u8; 4] = *b"GPZ1";
pub const VERSION: u16 = 1;
pub const GLOBAL_HEADER_LEN: usize = 50;
pub const BLOCK_MAGIC: u16 = 0x4b42;

const FLAG_PRESERVE_ORDER: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisHeader<T> {
    pub min: T,
    pub max: T,
    pub offset_bits: u8,
    pub seg_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockHeader<T> {
    pub particle_count: u32,
    pub unique_count: u32,
    pub axes: Vec<AxisHeader<T>>,
    pub w_delta: u8,
    pub w_count: u8,
    pub w_offset: u8,
    /// Present exactly when the container preserves order.
    pub w_rank: Option<u8>,
}

impl<T: Coordinate> BlockHeader<T> {
    /// Encoded size of a header with this shape.
    pub fn encoded_len(dims: usize, preserve_order: bool) -> usize {
        2 + 4 + 4 + dims * (2 * T::PRECISION.bytes() + 1 + 4) + 3 + preserve_order as usize
    }

    fn total_segments(&self) -> Option<u64> {
        self.axes.iter().try_fold(1u64, |acc, a| acc.checked_mul(a.seg_count as u64))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockStreams {
    pub delta: PackedStream,
    pub count: PackedStream,
    pub offset: PackedStream,
    pub rank: Option<PackedStream>,
}

/// What a reader must know from the global header to parse a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub dims: usize,
    pub preserve_order: bool,
    pub target_segs_per_axis: u32,
}

pub fn serialize_block<T: Coordinate>(header: &BlockHeader<T>, streams: &BlockStreams) -> Vec<u8> {
    let body = streams.delta.bytes.len()
        + streams.count.bytes.len()
        + streams.offset.bytes.len()
        + streams.rank.as_ref().map_or(0, |r| r.bytes.len());
    let mut out = Vec::with_capacity(BlockHeader::<T>::encoded_len(header.axes.len(), header.w_rank.is_some()) + body);
    out.extend_from_slice(&BLOCK_MAGIC.to_le_bytes());
    out.extend_from_slice(&header.particle_count.to_le_bytes());
    out.extend_from_slice(&header.unique_count.to_le_bytes());
    for axis in &header.axes {
        axis.min.write_le(&mut out);
        axis.max.write_le(&mut out);
        out.push(axis.offset_bits);
        out.extend_from_slice(&axis.seg_count.to_le_bytes());
    }
    out.extend_from_slice(&[header.w_delta, header.w_count, header.w_offset]);
    if let Some(w) = header.w_rank {
        out.push(w);
    }
    out.extend_from_slice(&streams.delta.bytes);
    out.extend_from_slice(&streams.count.bytes);
    out.extend_from_slice(&streams.offset.bytes);
    if let Some(r) = &streams.rank {
        out.extend_from_slice(&r.bytes);
    }
    out
}

/// Cursor over a byte slice that reports truncation with its position.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| GpzError::corrupt_at(format!("truncated while reading {what}"), self.pos as u64))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn err(&self, msg: impl Into<String>) -> GpzError {
        GpzError::corrupt_at(msg, self.pos as u64)
    }
}

/// Parses one block payload and checks it for structural consistency.
pub fn parse_block<T: Coordinate>(bytes: &[u8], layout: &BlockLayout) -> Result<(BlockHeader<T>, BlockStreams)> {
    let mut c = Cursor::new(bytes);
    if c.u16("block magic")? != BLOCK_MAGIC {
        return Err(GpzError::corrupt_at("bad block magic", 0));
    }
    let particle_count = c.u32("particle count")?;
    let unique_count = c.u32("unique count")?;
    if unique_count > particle_count || (unique_count == 0) != (particle_count == 0) {
        return Err(c.err(format!("{unique_count} runs for {particle_count} particles")));
    }
    let target = layout.target_segs_per_axis;
    let mut axes = Vec::with_capacity(layout.dims);
    for _ in 0..layout.dims {
        let min = T::read_le(c.take(T::PRECISION.bytes(), "axis minimum")?);
        let max = T::read_le(c.take(T::PRECISION.bytes(), "axis maximum")?);
        let offset_bits = c.u8("segment size")?;
        let seg_count = c.u32("segment count")?;
        if !(min.is_finite() && max.is_finite() && min <= max) {
            return Err(c.err("axis bounds not finite and ordered"));
        }
        // N <= target always; a segment wider than one bin means N > target / 2.
        let lower = if offset_bits > 0 { target / 2 + 1 } else { 1 };
        if offset_bits > 32 || seg_count < lower || seg_count > target {
            return Err(
                c.err(format!("inconsistent axis geometry: log2(m) {offset_bits}, N {seg_count}, target {target}"))
            );
        }
        axes.push(AxisHeader { min, max, offset_bits, seg_count });
    }
    let w_delta = c.u8("delta width")?;
    let w_count = c.u8("count width")?;
    let w_offset = c.u8("offset width")?;
    let w_rank = if layout.preserve_order { Some(c.u8("rank width")?) } else { None };
    let header = BlockHeader { particle_count, unique_count, axes, w_delta, w_count, w_offset, w_rank };

    let total_segs = header.total_segments().ok_or_else(|| c.err("product of segment counts exceeds 64 bits"))?;
    let offset_bits: u32 = header.axes.iter().map(|a| a.offset_bits as u32).sum();
    let n = particle_count as u64;
    let width_ok = w_delta as u32 <= effective_bits(total_segs - 1)
        && w_count as u32 <= effective_bits(n)
        && w_offset as u32 <= offset_bits
        && w_rank.is_none_or(|w| w as u32 <= effective_bits(n.saturating_sub(1)));
    if !width_ok {
        return Err(c.err("stream width exceeds what the block geometry allows"));
    }

    let mut stream = |len: usize, w: u8, what: &str| -> Result<PackedStream> {
        let bytes = c.take(packed_len(len, w), what)?.to_vec();
        Ok(PackedStream { bit_width: w, len, bytes })
    };
    let u = unique_count as usize;
    let n = particle_count as usize;
    let delta = stream(u, w_delta, "delta stream")?;
    let count = stream(u, w_count, "count stream")?;
    let offset = stream(n, w_offset, "offset stream")?;
    let rank = w_rank.map(|w| stream(n, w, "rank stream")).transpose()?;
    if c.pos != bytes.len() {
        return Err(c.err(format!("{} trailing bytes after block", bytes.len() - c.pos)));
    }
    Ok((header, BlockStreams { delta, count, offset, rank }))
}

/// Exclusive prefix sums of payload sizes, with the total appended.
pub fn offset_table(sizes: &[usize]) -> Vec<u64> {
    let mut table = Vec::with_capacity(sizes.len() + 1);
    let mut acc = 0u64;
    table.push(0);
    for &s in sizes {
        acc += s as u64;
        table.push(acc);
    }
    table
}

/// Gathers independently produced payloads into one contiguous buffer:
/// sizes, a single scan, then a parallel copy into disjoint ranges.
pub fn compact(payloads: &[Vec<u8>]) -> (Vec<u64>, Vec<u8>) {
    let sizes: Vec<usize> = payloads.par_iter().map(Vec::len).collect();
    let offsets = offset_table(&sizes);
    let mut out = vec![0u8; *offsets.last().unwrap() as usize];
    let mut slots = Vec::with_capacity(payloads.len());
    let mut rest = out.as_mut_slice();
    for &s in &sizes {
        let (head, tail) = rest.split_at_mut(s);
        slots.push(head);
        rest = tail;
    }
    slots.into_par_iter().zip(payloads.par_iter()).for_each(|(dst, src)| dst.copy_from_slice(src));
    (offsets, out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalHeader {
    pub version: u16,
    pub dims: u8,
    pub precision: Precision,
    pub preserve_order: bool,
    pub eb_mode: EbMode,
    pub eb_abs: f64,
    pub eb_original: f64,
    pub block_size: u32,
    pub target_segs_per_axis: u32,
    pub particle_count: u64,
    pub block_count: u64,
}

impl GlobalHeader {
    pub fn layout(&self) -> BlockLayout {
        BlockLayout {
            dims: self.dims as usize,
            preserve_order: self.preserve_order,
            target_segs_per_axis: self.target_segs_per_axis,
        }
    }

    /// Particles stored in block `i`.
    pub fn block_particles(&self, i: u64) -> u64 {
        let start = i * self.block_size as u64;
        (self.particle_count - start).min(self.block_size as u64)
    }

    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.push(self.dims);
        out.push(self.precision.tag());
        out.push(if self.preserve_order { FLAG_PRESERVE_ORDER } else { 0 });
        out.push(self.eb_mode.tag());
        out.extend_from_slice(&self.eb_abs.to_le_bytes());
        out.extend_from_slice(&self.eb_original.to_le_bytes());
        out.extend_from_slice(&self.block_size.to_le_bytes());
        out.extend_from_slice(&self.target_segs_per_axis.to_le_bytes());
        out.extend_from_slice(&self.particle_count.to_le_bytes());
        out.extend_from_slice(&self.block_count.to_le_bytes());
    }

    fn decode(c: &mut Cursor<'_>) -> Result<Self> {
        if c.take(4, "magic")? != MAGIC {
            return Err(GpzError::corrupt_at("not a gpz container (bad magic)", 0));
        }
        let version = c.u16("version")?;
        if version != VERSION {
            return Err(c.err(format!("unsupported version {version}")));
        }
        let dims = c.u8("dims")?;
        if dims == 0 || dims as usize > MAX_DIMS {
            return Err(c.err(format!("bad dims {dims}")));
        }
        let precision = Precision::from_tag(c.u8("precision")?).ok_or_else(|| c.err("bad precision tag"))?;
        let flags = c.u8("flags")?;
        if flags & !FLAG_PRESERVE_ORDER != 0 {
            return Err(c.err(format!("unknown flags {flags:#x}")));
        }
        let eb_mode = EbMode::from_tag(c.u8("eb mode")?).ok_or_else(|| c.err("bad eb mode"))?;
        let eb_abs = c.f64("eb")?;
        let eb_original = c.f64("eb")?;
        if !(eb_abs > 0.0 && eb_abs.is_finite() && eb_original > 0.0 && eb_original.is_finite()) {
            return Err(c.err("error bound not positive and finite"));
        }
        let block_size = c.u32("block size")?;
        if block_size == 0 || !(block_size as usize).is_multiple_of(LANE_WIDTH) {
            return Err(c.err(format!("bad block size {block_size}")));
        }
        let target_segs_per_axis = c.u32("segments per axis")?;
        if !target_segs_per_axis.is_power_of_two() {
            return Err(c.err(format!("bad segments per axis {target_segs_per_axis}")));
        }
        let particle_count = c.u64("particle count")?;
        let block_count = c.u64("block count")?;
        if block_count != particle_count.div_ceil(block_size as u64) {
            return Err(c.err(format!(
                "{block_count} blocks cannot hold {particle_count} particles of block size {block_size}"
            )));
        }
        Ok(GlobalHeader {
            version,
            dims,
            precision,
            preserve_order: flags & FLAG_PRESERVE_ORDER != 0,
            eb_mode,
            eb_abs,
            eb_original,
            block_size,
            target_segs_per_axis,
            particle_count,
            block_count,
        })
    }
}

/// A parsed `.gpz` container.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub header: GlobalHeader,
    pub offsets: Vec<u64>,
    pub payload: Vec<u8>,
}

impl Container {
    pub fn block_count(&self) -> usize {
        self.header.block_count as usize
    }

    pub fn block_bytes(&self, i: usize) -> &[u8] {
        &self.payload[self.offsets[i] as usize..self.offsets[i + 1] as usize]
    }

    /// Byte position of block `i` in the serialized file.
    pub fn block_position(&self, i: usize) -> u64 {
        (GLOBAL_HEADER_LEN + 8 * self.offsets.len()) as u64 + self.offsets[i]
    }

    pub fn encoded_len(&self) -> usize {
        GLOBAL_HEADER_LEN + 8 * self.offsets.len() + self.payload.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.header.encode(&mut out);
        for o in &self.offsets {
            out.extend_from_slice(&o.to_le_bytes());
        }
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut c = Cursor::new(bytes);
        let header = GlobalHeader::decode(&mut c)?;
        let entries = header
            .block_count
            .checked_add(1)
            .filter(|&e| e.saturating_mul(8) <= (bytes.len() - c.pos) as u64)
            .ok_or_else(|| c.err("offset table truncated"))?;
        let mut offsets = Vec::with_capacity(entries as usize);
        for i in 0..entries {
            let o = c.u64("offset table")?;
            let ok = match offsets.last() {
                None => o == 0,
                Some(&prev) => o >= prev,
            };
            if !ok {
                return Err(c.err(format!("offset table entry {i} = {o} is not monotone from 0")));
            }
            offsets.push(o);
        }
        let payload = &bytes[c.pos..];
        if *offsets.last().unwrap() != payload.len() as u64 {
            return Err(c.err(format!(
                "offset table ends at {} but {} payload bytes follow",
                offsets.last().unwrap(),
                payload.len()
            )));
        }
        Ok(Container { header, offsets, payload: payload.to_vec() })
    }
}

pub fn write_container(container: &Container, mut sink: impl Write) -> Result<()> {
    sink.write_all(&container.to_bytes())?;
    sink.flush()?;
    Ok(())
}

pub fn read_container(mut source: impl Read) -> Result<Container> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    Container::from_bytes(&bytes)
}
