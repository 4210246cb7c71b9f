//! Rate-distortion metrics and error-bound verification.
//!
//! Decompressed blocks come back sorted by code, not in input order, so
//! errors are measured under a block-wise pairing: inside each block both the
//! original and the reconstruction are quantized with the original block's
//! geometry, each side is ordered by (segment ID, offset, index), and the two
//! orders are matched positionally. Equal codes reconstruct to identical
//! values, which makes the pairing well defined.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::blocksort::sort_codes;
use crate::error::{GpzError, Result};
use crate::model::{CompressConfig, Dataset};
use crate::pipeline::{block_ranges, effective_bound};
use crate::quantizer::{block_bounds, derive_geometry, quantize_block};
use crate::scalar::Coordinate;

pub fn compression_ratio(original_bytes: u64, compressed_bytes: u64) -> Result<f64> {
    if compressed_bytes == 0 {
        return Err(GpzError::domain("compression ratio of a zero-byte output"));
    }
    Ok(original_bytes as f64 / compressed_bytes as f64)
}

/// Average compressed bits per particle.
pub fn bitrate(compressed_bytes: u64, particle_count: u64) -> Result<f64> {
    if particle_count == 0 {
        return Err(GpzError::domain("bitrate of an empty dataset"));
    }
    Ok(compressed_bytes as f64 * 8.0 / particle_count as f64)
}

/// Index pairs `(original, reconstructed)` covering every particle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pairing {
    pub pairs: Vec<(usize, usize)>,
}

impl Pairing {
    pub fn identity(n: usize) -> Self {
        Pairing { pairs: (0..n).map(|i| (i, i)).collect() }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Pairs particles of `original` with those of `reconstructed` block by block.
/// When the configuration preserves order the pairing is the identity.
pub fn pair_blocks<T: Coordinate>(
    original: &Dataset<T>,
    reconstructed: &Dataset<T>,
    cfg: &CompressConfig,
) -> Result<Pairing> {
    if original.dims() != reconstructed.dims() || original.len() != reconstructed.len() {
        return Err(GpzError::domain(format!(
            "cannot pair {}x{} particles with {}x{}",
            original.len(),
            original.dims(),
            reconstructed.len(),
            reconstructed.dims()
        )));
    }
    if cfg.preserve_order {
        return Ok(Pairing::identity(original.len()));
    }
    let eb_abs = effective_bound(original, cfg)?;
    let ranges: Vec<_> = block_ranges(original.len(), cfg.block_size).collect();
    let per_block = ranges
        .into_par_iter()
        .map(|range| {
            let start = range.start;
            let orig = original.slice(range.clone());
            let recon = reconstructed.slice(range);
            let geometry = derive_geometry(&block_bounds(&orig)?, eb_abs, cfg.target_segs_per_axis)?;
            let order = |block: &[&[T]]| -> Result<Vec<u32>> {
                let qb = quantize_block(block, &geometry, eb_abs, true)?;
                Ok(sort_codes(&qb.codes, qb.ranks.as_deref()).1.unwrap())
            };
            let (a, r) = (order(&orig)?, order(&recon)?);
            Ok(a.into_iter().zip(r).map(|(i, j)| (start + i as usize, start + j as usize)).collect())
        })
        .enumerate()
        .map(|(b, r): (usize, Result<Vec<_>>)| r.map_err(|e| e.in_block(b)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Pairing { pairs: per_block.into_iter().flatten().collect() })
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}

/// Root-mean-square error over the pairing, divided by the original field's
/// value range.
pub fn nrmse<T: Coordinate>(original: &[T], reconstructed: &[T], pairing: &Pairing) -> Result<f64> {
    if pairing.is_empty() {
        return Err(GpzError::domain("NRMSE of an empty field"));
    }
    let sq = compensated_sum(pairing.pairs.iter().map(|&(i, j)| {
        let d = original[i].widen() - reconstructed[j].widen();
        d * d
    }));
    let rmse = (sq / pairing.len() as f64).sqrt();
    let (lo, hi) =
        original.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v.widen()), hi.max(v.widen())));
    let range = hi - lo;
    if range > 0.0 {
        Ok(rmse / range)
    } else if rmse == 0.0 {
        Ok(0.0)
    } else {
        Err(GpzError::domain("NRMSE undefined: constant field reconstructed with error"))
    }
}

/// Aggregate PSNR in decibels; lossless reconstructions are a separate case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Db(f64),
    Lossless,
}

impl Psnr {
    pub fn db(self) -> Option<f64> {
        match self {
            Psnr::Db(v) => Some(v),
            Psnr::Lossless => None,
        }
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Db(v) => write!(f, "{v:.4}"),
            Psnr::Lossless => f.write_str("inf"),
        }
    }
}

impl Serialize for Psnr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// `-20 log10(sqrt(mean(nrmse_i^2)))`.
pub fn aggregate_psnr(nrmse: &[f64]) -> Result<Psnr> {
    if nrmse.is_empty() || nrmse.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(GpzError::domain("aggregate PSNR needs finite non-negative NRMSE values"));
    }
    let mean_sq = nrmse.iter().map(|v| v * v).sum::<f64>() / nrmse.len() as f64;
    if mean_sq == 0.0 {
        return Ok(Psnr::Lossless);
    }
    Ok(Psnr::Db(-20.0 * mean_sq.sqrt().log10()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub original_index: usize,
    pub reconstructed_index: usize,
    pub axis: usize,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub eb_abs: f64,
    pub max_error: f64,
    pub violations: Vec<Violation>,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `|original - reconstructed| <= eb_abs` on every axis of every
/// particle under [`pair_blocks`].
pub fn verify_bound<T: Coordinate>(
    original: &Dataset<T>,
    reconstructed: &Dataset<T>,
    eb_abs: f64,
    cfg: &CompressConfig,
) -> Result<BoundReport> {
    let pairing = pair_blocks(original, reconstructed, cfg)?;
    Ok(verify_paired(original, reconstructed, eb_abs, &pairing))
}

pub fn verify_paired<T: Coordinate>(
    original: &Dataset<T>,
    reconstructed: &Dataset<T>,
    eb_abs: f64,
    pairing: &Pairing,
) -> BoundReport {
    let mut max_error = 0.0f64;
    let mut violations = Vec::new();
    for (axis, (o, r)) in original.axes().iter().zip(reconstructed.axes()).enumerate() {
        for &(i, j) in &pairing.pairs {
            let error = (o[i].widen() - r[j].widen()).abs();
            max_error = max_error.max(error);
            if error > eb_abs {
                violations.push(Violation { original_index: i, reconstructed_index: j, axis, error });
            }
        }
    }
    BoundReport { eb_abs, max_error, violations }
}

/// One row of a rate-distortion table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateDistortionRow {
    pub eb: f64,
    pub eb_abs: f64,
    pub cr: f64,
    pub bitrate: f64,
    pub nrmse_x: Option<f64>,
    pub nrmse_y: Option<f64>,
    pub nrmse_z: Option<f64>,
    pub psnr: Psnr,
    pub max_err: f64,
}

/// Evaluates a compress/decompress pair against the original.
pub fn evaluate<T: Coordinate>(
    original: &Dataset<T>,
    reconstructed: &Dataset<T>,
    compressed_bytes: u64,
    cfg: &CompressConfig,
) -> Result<RateDistortionRow> {
    let eb_abs = effective_bound(original, cfg)?;
    let pairing = pair_blocks(original, reconstructed, cfg)?;
    let fields = (0..original.dims())
        .map(|a| nrmse(original.axis(a), reconstructed.axis(a), &pairing))
        .collect::<Result<Vec<_>>>()?;
    let report = verify_paired(original, reconstructed, eb_abs, &pairing);
    Ok(RateDistortionRow {
        eb: cfg.error_bound,
        eb_abs,
        cr: compression_ratio(original.byte_size() as u64, compressed_bytes)?,
        bitrate: bitrate(compressed_bytes, original.len() as u64)?,
        nrmse_x: fields.first().copied(),
        nrmse_y: fields.get(1).copied(),
        nrmse_z: fields.get(2).copied(),
        psnr: aggregate_psnr(&fields)?,
        max_err: report.max_error,
    })
}

pub fn write_rd_csv(rows: &[RateDistortionRow], sink: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    for row in rows {
        w.serialize(row).map_err(|e| std::io::Error::other(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::{BigRational, ToPrimitive};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exact mean of squared differences in rationals; only the final square
    /// root and division are rounded.
    fn nrmse_oracle(o: &[f64], r: &[f64]) -> f64 {
        let mut acc = BigRational::from_integer(0.into());
        for (a, b) in o.iter().zip(r) {
            let d = BigRational::from_float(*a).unwrap() - BigRational::from_float(*b).unwrap();
            acc += &d * &d;
        }
        let mean = (acc / BigRational::from_integer(o.len().into())).to_f64().unwrap();
        let lo = o.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = o.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        mean.sqrt() / (hi - lo)
    }

    #[test]
    fn ratio_and_bitrate() {
        assert_eq!(compression_ratio(1200, 100).unwrap(), 12.0);
        assert_eq!(compression_ratio(100, 100).unwrap(), 1.0);
        assert!(compression_ratio(100, 0).is_err());
        assert_eq!(bitrate(100, 200).unwrap(), 4.0);
        assert!(bitrate(1, 0).is_err());
    }

    #[test]
    fn psnr_examples() {
        assert!((aggregate_psnr(&[0.01, 0.01]).unwrap().db().unwrap() - 40.0).abs() < 1e-9);
        assert!((aggregate_psnr(&[0.1]).unwrap().db().unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(aggregate_psnr(&[0.0, 0.0]).unwrap(), Psnr::Lossless);
        assert_eq!(Psnr::Lossless.to_string(), "inf");
        assert!(aggregate_psnr(&[]).is_err());
        assert!(aggregate_psnr(&[f64::NAN]).is_err());
    }

    #[test]
    fn psnr_decreases_in_each_nrmse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let mut v: Vec<f64> = (0..3).map(|_| rng.gen_range(1e-6..0.5)).collect();
            let before = aggregate_psnr(&v).unwrap().db().unwrap();
            let k = rng.gen_range(0..3);
            v[k] *= 1.0 + rng.gen_range(1e-3..1.0);
            assert!(aggregate_psnr(&v).unwrap().db().unwrap() < before);
        }
    }

    #[test]
    fn nrmse_closed_forms() {
        let o: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        let id = Pairing::identity(o.len());
        assert_eq!(nrmse(&o, &o, &id).unwrap(), 0.0);
        let shifted: Vec<f64> = o.iter().map(|v| v + 0.25).collect();
        assert!((nrmse(&o, &shifted, &id).unwrap() - 0.025).abs() < 1e-15);
        let flat = [2.0f32; 4];
        assert_eq!(nrmse(&flat, &flat, &Pairing::identity(4)).unwrap(), 0.0);
        assert!(nrmse(&flat, &[2.5f32; 4], &Pairing::identity(4)).is_err());
    }

    #[test]
    fn nrmse_matches_rational_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let n = rng.gen_range(1..3000);
            let scale = 10f64.powf(rng.gen_range(-3.0..6.0));
            let o: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0) * scale).collect();
            let r: Vec<f64> = o.iter().map(|v| v + rng.gen_range(-1e-3..1e-3) * scale).collect();
            if n == 1 {
                continue;
            }
            let got = nrmse(&o, &r, &Pairing::identity(n)).unwrap();
            let want = nrmse_oracle(&o, &r);
            assert!((got - want).abs() <= 1e-12 * want, "{got} vs {want}");
        }
    }

    #[test]
    fn nrmse_invariant_under_affine_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let o: Vec<f64> = (0..500).map(|_| rng.gen_range(0.0..10.0)).collect();
        let r: Vec<f64> = o.iter().map(|v| v + rng.gen_range(-0.01..0.01)).collect();
        let id = Pairing::identity(o.len());
        let base = nrmse(&o, &r, &id).unwrap();
        for (a, b) in [(3.0, 7.0), (0.001, -5.0), (250.0, 1e4)] {
            let o2: Vec<f64> = o.iter().map(|v| a * v + b).collect();
            let r2: Vec<f64> = r.iter().map(|v| a * v + b).collect();
            let scaled = nrmse(&o2, &r2, &id).unwrap();
            assert!((scaled - base).abs() <= 1e-6 * base);
        }
    }

    #[test]
    fn verify_identical_and_corrupted() {
        let xs: Vec<f64> = (0..64).map(|i| i as f64 * 0.5).collect();
        let ds = Dataset::new(vec![xs.clone()]).unwrap();
        let cfg = CompressConfig::absolute(0.01).with_block_size(32);
        let rep = verify_bound(&ds, &ds, 0.01, &cfg).unwrap();
        assert!(rep.passed());
        assert_eq!(rep.max_error, 0.0);

        // Raising the block maximum keeps its position in code order.
        let mut bad = xs;
        bad[31] += 0.03;
        let bad = Dataset::new(vec![bad]).unwrap();
        let rep = verify_bound(&ds, &bad, 0.01, &cfg).unwrap();
        assert_eq!(rep.violations.len(), 1);
        assert_eq!(rep.violations[0].original_index, 31);
        assert!((rep.max_error - 0.03).abs() < 1e-12);
    }

    #[test]
    fn pairing_matches_shuffled_blocks() {
        let xs: Vec<f32> = (0..96).map(|i| ((i * 29) % 96) as f32).collect();
        let ds = Dataset::new(vec![xs.clone()]).unwrap();
        // Reverse inside each block of 32.
        let shuffled: Vec<f32> = xs.chunks(32).flat_map(|c| c.iter().rev().copied()).collect();
        let sh = Dataset::new(vec![shuffled]).unwrap();
        let cfg = CompressConfig::absolute(0.1).with_block_size(32);
        let p = pair_blocks(&ds, &sh, &cfg).unwrap();
        for &(i, j) in &p.pairs {
            assert_eq!(xs[i], sh.axis(0)[j]);
            assert_eq!(i / 32, j / 32);
        }
    }

    #[test]
    fn csv_row_shape() {
        let row = RateDistortionRow {
            eb: 1e-3,
            eb_abs: 0.01,
            cr: 5.0,
            bitrate: 19.2,
            nrmse_x: Some(1e-4),
            nrmse_y: None,
            nrmse_z: None,
            psnr: Psnr::Db(80.0),
            max_err: 0.009,
        };
        let mut out = Vec::new();
        write_rd_csv(&[row], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().next().unwrap(), "eb,eb_abs,cr,bitrate,nrmse_x,nrmse_y,nrmse_z,psnr,max_err");
        assert!(text.lines().nth(1).unwrap().ends_with(",,80.0000,0.009"));
    }
}
