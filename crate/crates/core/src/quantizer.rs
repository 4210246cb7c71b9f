//! Stage 1: per-block bounds and conversion of coordinates to
//! (segment ID, offset) integer codes within the error bound.
//!
//! Along each axis a coordinate `p` falls in bin `q = floor((p - min) / w)`,
//! with `w` just under `2eb`.
//! Bins are grouped into segments of `m` consecutive bins (`m` a power of two),
//! so `q = m * seg + offset` with `seg = q >> log2(m)` and `offset = q & (m - 1)`.
//! Per-axis segments and offsets are then linearized into one code per particle.
//!
//! Reconstruction uses the bin midpoint `min + (q + 0.5) * w`. Midpoints are
//! rounded to the storage type, so `w` is `2eb` less a guard of a few ulps at
//! the axis' largest magnitude: any point of a bin is then within `eb` of the
//! bin's rounded midpoint. The width depends only on the axis bounds, the
//! bound and the storage type, so a decoder holding the stored bounds derives
//! the same value. All arithmetic runs in `f64`. As a last resort, if rounding
//! still lands outside the bound, the neighbouring bin whose rounded midpoint
//! is inside is chosen instead.

use crate::error::{GpzError, Result};
use crate::model::{AxisGeometry, BlockGeometry, Code, QuantizedBlock};
use crate::scalar::Coordinate;

/// Largest per-axis bin count; bin indices stay 32-bit.
pub const MAX_BINS_PER_AXIS: u64 = u32::MAX as u64;

/// Bin width for an axis spanning `[min, max]` stored as `T`.
///
/// The guard `4 ε |p|max` covers rounding the midpoint to `T` and the `f64`
/// evaluation of the midpoint. When the bound is too close to the storage
/// resolution for that guard the width falls back to `eb`.
pub fn bin_width<T: Coordinate>(min: f64, max: f64, eb_abs: f64) -> f64 {
    let magnitude = min.abs().max(max.abs());
    let guard = 4.0 * T::epsilon().widen() * magnitude;
    if eb_abs > 2.0 * guard {
        2.0 * (eb_abs - guard)
    } else {
        eb_abs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockBounds<T> {
    pub min: Vec<T>,
    pub max: Vec<T>,
}

impl<T: Coordinate> BlockBounds<T> {
    pub fn dims(&self) -> usize {
        self.min.len()
    }
}

/// Exact componentwise extrema of a block.
pub fn block_bounds<T: Coordinate>(block: &[&[T]]) -> Result<BlockBounds<T>> {
    if block.is_empty() || block[0].is_empty() {
        return Err(GpzError::domain("bounds of an empty block"));
    }
    let mut min = Vec::with_capacity(block.len());
    let mut max = Vec::with_capacity(block.len());
    for axis in block {
        let (lo, hi) = minmax(axis);
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(GpzError::domain("non-finite coordinate in block"));
        }
        min.push(lo);
        max.push(hi);
    }
    Ok(BlockBounds { min, max })
}

// Two-level reduction: per lane of 32, then across lanes.
fn minmax<T: Coordinate>(axis: &[T]) -> (T, T) {
    axis.chunks(crate::model::LANE_WIDTH)
        .map(|lane| {
            lane.iter()
                .fold((lane[0], lane[0]), |(lo, hi), &v| (if v < lo { v } else { lo }, if v > hi { v } else { hi }))
        })
        .fold((axis[0], axis[0]), |(lo, hi), (l, h)| (if l < lo { l } else { lo }, if h > hi { h } else { hi }))
}

/// Derives bin and segment geometry for a block from its bounds.
pub fn derive_geometry<T: Coordinate>(
    bounds: &BlockBounds<T>,
    eb_abs: f64,
    target_segs_per_axis: u32,
) -> Result<BlockGeometry> {
    if !(eb_abs > 0.0 && eb_abs.is_finite()) {
        return Err(GpzError::domain(format!("error bound must be positive, got {eb_abs}")));
    }
    if !target_segs_per_axis.is_power_of_two() {
        return Err(GpzError::domain("segments per axis must be a power of two"));
    }
    let axes = bounds
        .min
        .iter()
        .zip(&bounds.max)
        .map(|(lo, hi)| derive_axis::<T>(lo.widen(), hi.widen(), eb_abs, target_segs_per_axis))
        .collect::<Result<Vec<_>>>()?;
    check_linear_range(&axes)?;
    Ok(BlockGeometry { axes })
}

/// Geometry of one axis spanning `[min, max]`.
pub fn derive_axis<T: Coordinate>(min: f64, max: f64, eb_abs: f64, target_segs_per_axis: u32) -> Result<AxisGeometry> {
    let width = bin_width::<T>(min, max, eb_abs);
    let span = ((max - min) / width).floor();
    if !(span >= 0.0) || span >= MAX_BINS_PER_AXIS as f64 {
        return Err(GpzError::overflow(format!(
            "axis range [{min}, {max}] needs more than {MAX_BINS_PER_AXIS} bins at eb {eb_abs}"
        )));
    }
    let bin_count = span as u64 + 1;
    let seg_size = bin_count.div_ceil(target_segs_per_axis as u64).next_power_of_two();
    Ok(AxisGeometry {
        min,
        max,
        width,
        bin_count,
        offset_bits: seg_size.trailing_zeros() as u8,
        seg_count: bin_count.div_ceil(seg_size),
    })
}

pub(crate) fn check_linear_range(axes: &[AxisGeometry]) -> Result<()> {
    axes.iter()
        .try_fold(1u64, |acc, g| acc.checked_mul(g.seg_count))
        .ok_or_else(|| GpzError::overflow("product of segment counts exceeds 64 bits"))?;
    let bits: u32 = axes.iter().map(|g| g.offset_bits as u32).sum();
    if bits > 64 {
        return Err(GpzError::overflow(format!("linear offset needs {bits} bits")));
    }
    Ok(())
}

/// Midpoint of bin `q`, rounded to the storage type.
#[inline]
pub fn reconstruct<T: Coordinate>(min: f64, q: u64, width: f64) -> T {
    T::narrow(min + (q as f64 + 0.5) * width)
}

/// Bin index of `p` on one axis, clamped to the axis and corrected for
/// rounding of the reconstructed midpoint.
#[inline]
pub fn quantize_axis<T: Coordinate>(p: T, axis: &AxisGeometry, eb_abs: f64) -> u64 {
    let width = axis.width;
    let pv = p.widen();
    let raw = ((pv - axis.min) / width).floor();
    let last = axis.bin_count - 1;
    let q = if raw <= 0.0 { 0 } else { (raw as u64).min(last) };
    let fits = |q: u64| (reconstruct::<T>(axis.min, q, width).widen() - pv).abs() <= eb_abs;
    if fits(q) {
        return q;
    }
    if q > 0 && fits(q - 1) {
        return q - 1;
    }
    if q < last && fits(q + 1) {
        return q + 1;
    }
    q
}

#[inline]
pub fn linearize(geometry: &BlockGeometry, bins: &[u64]) -> Code {
    let mut seg_id = 0u64;
    let mut stride = 1u64;
    let mut offset = 0u64;
    let mut shift = 0u32;
    for (g, &q) in geometry.axes.iter().zip(bins) {
        seg_id += stride * (q >> g.offset_bits);
        stride = stride.wrapping_mul(g.seg_count);
        if g.offset_bits > 0 {
            offset |= (q & g.offset_mask()) << shift;
        }
        shift += g.offset_bits as u32;
    }
    Code { seg_id, offset }
}

/// Inverse of [`linearize`]; fails when the code lies outside the geometry.
#[inline]
pub fn delinearize(geometry: &BlockGeometry, code: Code, bins: &mut [u64]) -> Result<()> {
    let mut seg = code.seg_id;
    let mut off = code.offset;
    for (g, q) in geometry.axes.iter().zip(bins.iter_mut()) {
        let s = seg % g.seg_count;
        seg /= g.seg_count;
        let o = if g.offset_bits > 0 { off & g.offset_mask() } else { 0 };
        off = if g.offset_bits >= 64 { 0 } else { off >> g.offset_bits };
        *q = (s << g.offset_bits) | o;
    }
    if seg != 0 || off != 0 {
        return Err(GpzError::corrupt(format!(
            "code (seg {}, offset {}) outside block geometry",
            code.seg_id, code.offset
        )));
    }
    Ok(())
}

/// Quantizes every particle of a block against `geometry`.
pub fn quantize_block<T: Coordinate>(
    block: &[&[T]],
    geometry: &BlockGeometry,
    eb_abs: f64,
    keep_ranks: bool,
) -> Result<QuantizedBlock> {
    if block.len() != geometry.dims() {
        return Err(GpzError::domain("block and geometry disagree on dims"));
    }
    let n = block.first().map_or(0, |a| a.len());
    let mut codes = Vec::with_capacity(n);
    let mut bins = [0u64; crate::model::MAX_DIMS];
    for i in 0..n {
        for (a, axis) in block.iter().enumerate() {
            let p = axis[i];
            if !p.is_finite() {
                return Err(GpzError::domain(format!("non-finite coordinate at particle {i}")));
            }
            bins[a] = quantize_axis(p, &geometry.axes[a], eb_abs);
        }
        codes.push(linearize(geometry, &bins[..block.len()]));
    }
    let ranks = keep_ranks.then(|| (0..n as u32).collect());
    Ok(QuantizedBlock { geometry: geometry.clone(), codes, ranks })
}

/// Reconstructs per-axis coordinates from a block's codes.
pub fn dequantize_block<T: Coordinate>(qb: &QuantizedBlock) -> Result<Vec<Vec<T>>> {
    let dims = qb.geometry.dims();
    let total_segs = qb.geometry.total_segments();
    let off_bits = qb.geometry.total_offset_bits();
    let mut out = vec![Vec::with_capacity(qb.len()); dims];
    let mut bins = [0u64; crate::model::MAX_DIMS];
    for code in &qb.codes {
        if code.seg_id >= total_segs || (off_bits < 64 && code.offset >> off_bits != 0) {
            return Err(GpzError::corrupt(format!(
                "code (seg {}, offset {}) outside block geometry",
                code.seg_id, code.offset
            )));
        }
        delinearize(&qb.geometry, *code, &mut bins[..dims])?;
        for (a, axis) in out.iter_mut().enumerate() {
            let g = &qb.geometry.axes[a];
            axis.push(reconstruct::<T>(g.min, bins[a], g.width));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bounds1(lo: f64, hi: f64) -> BlockBounds<f64> {
        BlockBounds { min: vec![lo], max: vec![hi] }
    }

    // Reference geometry by direct enumeration: smallest power of two m whose
    // segment count does not exceed the target.
    fn geometry_oracle(lo: f64, hi: f64, eb: f64, target: u64) -> (u64, u64, u64) {
        let mut q = 0u64;
        let w = bin_width::<f64>(lo, hi, eb);
        while lo + (q as f64 + 1.0) * w <= hi {
            q += 1;
        }
        let bins = q + 1;
        let mut m = 1u64;
        while bins.div_ceil(m * target) > 1 {
            m *= 2;
        }
        let mut n = 0;
        while n * m < bins {
            n += 1;
        }
        (bins, m, n)
    }

    #[test]
    fn bounds_examples() {
        let b = block_bounds(&[&[0.2f64, 3.7, 5.1, 7.9][..]]).unwrap();
        assert_eq!((b.min[0], b.max[0]), (0.2, 7.9));
        let b = block_bounds(&[&[4.0f32][..]]).unwrap();
        assert_eq!((b.min[0], b.max[0]), (4.0, 4.0));
        let b = block_bounds(&[&[-1.0f64, -5.0, 2.0][..]]).unwrap();
        assert_eq!((b.min[0], b.max[0]), (-5.0, 2.0));
        assert!(block_bounds::<f64>(&[&[][..]]).is_err());
    }

    #[test]
    fn bounds_across_lanes() {
        let mut xs: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin()).collect();
        xs[777] = -3.0;
        xs[31] = 9.0;
        let b = block_bounds(&[&xs[..]]).unwrap();
        assert_eq!((b.min[0], b.max[0]), (-3.0, 9.0));
    }

    #[test]
    fn geometry_examples() {
        let g = derive_geometry(&bounds1(0.2, 7.9), 0.5, 4).unwrap();
        let a = g.axes[0];
        assert_eq!((a.bin_count, a.seg_size(), a.seg_count), (8, 2, 4));

        let g = derive_geometry(&bounds1(3.0, 3.0), 1e-3, 32).unwrap();
        let a = g.axes[0];
        assert_eq!((a.bin_count, a.seg_size(), a.seg_count), (1, 1, 1));

        let g = derive_geometry(&bounds1(0.0, 1.0), 0.5, 32).unwrap();
        let a = g.axes[0];
        assert_eq!((a.bin_count, a.seg_size(), a.seg_count), (2, 1, 2));
    }

    #[test]
    fn geometry_matches_enumeration() {
        for lo_i in 0..5 {
            for span_i in 0..200 {
                for &target in &[1u32, 2, 4, 8, 32] {
                    let lo = lo_i as f64 * 0.25;
                    let hi = lo + span_i as f64 * 0.125;
                    let g = derive_geometry(&bounds1(lo, hi), 0.5, target).unwrap().axes[0];
                    let (bins, m, n) = geometry_oracle(lo, hi, 0.5, target as u64);
                    assert_eq!((g.bin_count, g.seg_size(), g.seg_count), (bins, m, n));
                    assert!(g.seg_count * g.seg_size() >= g.bin_count);
                }
            }
        }
    }

    #[test]
    fn geometry_overflow() {
        let b = BlockBounds { min: vec![0.0f64], max: vec![1e12] };
        assert!(matches!(derive_geometry(&b, 1e-6, 32), Err(GpzError::WidthOverflow { .. })));
        // Three axes of 2^31 bins each need 3 * 26 = 78 offset bits.
        let b = BlockBounds { min: vec![0.0f64; 3], max: vec![2f64.powi(31); 3] };
        assert!(matches!(derive_geometry(&b, 0.5, 32), Err(GpzError::WidthOverflow { .. })));
        assert!(derive_geometry(&bounds1(0.0, 1.0), 0.0, 32).is_err());
    }

    #[test]
    fn quantize_examples() {
        let xs = [0.2f64, 3.7, 5.1, 7.9];
        let b = block_bounds(&[&xs[..]]).unwrap();
        let g = derive_geometry(&b, 0.5, 4).unwrap();
        let qb = quantize_block(&[&xs[..]], &g, 0.5, false).unwrap();
        assert_eq!(qb.codes[1], Code { seg_id: 1, offset: 1 });
        assert_eq!(qb.codes[0], Code { seg_id: 0, offset: 0 });
        let back: Vec<Vec<f64>> = dequantize_block(&qb).unwrap();
        let w = g.axes[0].width;
        assert!((back[0][1] - (0.2 + 3.5 * w)).abs() < 1e-12);
        assert!((back[0][1] - 3.7).abs() < 1e-12);
        assert!((back[0][0] - (0.2 + 0.5 * w)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_axis_contributes_no_offset_bits() {
        let xs = [1.0f64, 2.0, 3.0];
        let ys = [5.0f64; 3];
        let b = block_bounds(&[&xs[..], &ys[..]]).unwrap();
        let g = derive_geometry(&b, 0.25, 32).unwrap();
        assert_eq!(g.axes[1].offset_bits, 0);
        let qb = quantize_block(&[&xs[..], &ys[..]], &g, 0.25, false).unwrap();
        let back: Vec<Vec<f64>> = dequantize_block(&qb).unwrap();
        assert!(back[1].iter().all(|&y| y == 5.0 + 0.5 * g.axes[1].width));
    }

    #[test]
    fn dequantize_rejects_out_of_range_codes() {
        let g = derive_geometry(&bounds1(0.2, 7.9), 0.5, 4).unwrap();
        let qb = QuantizedBlock { geometry: g.clone(), codes: vec![Code { seg_id: 4, offset: 0 }], ranks: None };
        assert!(dequantize_block::<f64>(&qb).unwrap_err().is_corrupt());
        let qb = QuantizedBlock { geometry: g, codes: vec![Code { seg_id: 0, offset: 2 }], ranks: None };
        assert!(dequantize_block::<f64>(&qb).unwrap_err().is_corrupt());
    }

    #[test]
    fn mask_equals_divide_exhaustive_small() {
        for log in 0..8u32 {
            let m = 1u64 << log;
            for q in 0..4096u64 {
                assert_eq!(q & (m - 1), q % m);
                assert_eq!(q >> log, q / m);
            }
        }
    }

    #[test]
    fn mask_equals_divide_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100_000 {
            let q: u64 = rng.gen_range(0..1u64 << 31);
            let log = rng.gen_range(0..31u32);
            let m = 1u64 << log;
            assert_eq!(q & (m - 1), q % m);
            assert_eq!(q >> log, q / m);
        }
    }

    #[test]
    fn linearization_is_bijective_on_small_box() {
        let geometry = BlockGeometry {
            axes: vec![
                AxisGeometry { min: 0.0, max: 0.0, width: 1.0, bin_count: 6, offset_bits: 1, seg_count: 3 },
                AxisGeometry { min: 0.0, max: 0.0, width: 1.0, bin_count: 8, offset_bits: 2, seg_count: 2 },
                AxisGeometry { min: 0.0, max: 0.0, width: 1.0, bin_count: 5, offset_bits: 0, seg_count: 5 },
            ],
        };
        let mut seen = std::collections::HashSet::new();
        let mut back = [0u64; 3];
        for x in 0..6u64 {
            for y in 0..8u64 {
                for z in 0..5u64 {
                    let code = linearize(&geometry, &[x, y, z]);
                    assert!(code.seg_id < geometry.total_segments());
                    assert!(code.offset < 1 << geometry.total_offset_bits());
                    assert!(seen.insert(code));
                    delinearize(&geometry, code, &mut back).unwrap();
                    assert_eq!(back, [x, y, z]);
                }
            }
        }
    }

    fn error_bound_property<T: Coordinate>(samples: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut done = 0;
        while done < samples {
            let n = 1024;
            let center: f64 = rng.gen_range(-1e3..1e3);
            let spread: f64 = 10f64.powf(rng.gen_range(-2.0..3.0));
            let xs: Vec<T> = (0..n).map(|_| T::narrow(center + spread * rng.gen_range(-1.0..1.0))).collect();
            let rel: f64 = 10f64.powf(rng.gen_range(-5.0..-1.0));
            let eb = rel * spread;
            let b = block_bounds(&[&xs[..]]).unwrap();
            let g = derive_geometry(&b, eb, 32).unwrap();
            let qb = quantize_block(&[&xs[..]], &g, eb, false).unwrap();
            let back: Vec<Vec<T>> = dequantize_block(&qb).unwrap();
            for (p, r) in xs.iter().zip(&back[0]) {
                let err = (p.widen() - r.widen()).abs();
                assert!(err <= eb, "|{p} - {r}| = {err} > {eb}");
            }
            done += n;
        }
    }

    #[test]
    fn error_bound_holds_f32() {
        error_bound_property::<f32>(1_000_000, 11);
    }

    #[test]
    fn error_bound_holds_f64() {
        error_bound_property::<f64>(1_000_000, 12);
    }

    #[test]
    fn requantizing_reconstruction_is_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let xs: Vec<f32> = (0..512).map(|_| rng.gen_range(-50.0..50.0)).collect();
            let ys: Vec<f32> = (0..512).map(|_| rng.gen_range(0.0..1.0)).collect();
            let block = [&xs[..], &ys[..]];
            let eb = 10f64.powf(rng.gen_range(-4.0..-1.0));
            let g = derive_geometry(&block_bounds(&block).unwrap(), eb, 16).unwrap();
            let qb = quantize_block(&block, &g, eb, false).unwrap();
            let back: Vec<Vec<f32>> = dequantize_block(&qb).unwrap();
            let again = quantize_block(&[&back[0][..], &back[1][..]], &g, eb, false).unwrap();
            assert_eq!(qb.codes, again.codes);
        }
    }
}
