//! Stage 2: sort a block's codes by segment ID.
//!
//! LSD radix sort with 8-bit digits: offset digits first, then segment-ID
//! digits. Only digits below the effective bit width of the largest key are
//! visited. Every pass is stable, so the final order is the total order
//! (segment ID, offset, original position).

use crate::model::{Code, QuantizedBlock};

const RADIX_BITS: u32 = 8;
const BUCKETS: usize = 1 << RADIX_BITS;

/// Number of significant bits in `v` (0 for 0).
#[inline]
pub fn effective_bits(v: u64) -> u32 {
    64 - v.leading_zeros()
}

pub fn sort_block(qb: &QuantizedBlock) -> QuantizedBlock {
    let (codes, ranks) = sort_codes(&qb.codes, qb.ranks.as_deref());
    QuantizedBlock { geometry: qb.geometry.clone(), codes, ranks }
}

/// Sorts codes (and the ranks travelling with them) in the
/// (segment ID, offset, position) order.
pub fn sort_codes(codes: &[Code], ranks: Option<&[u32]>) -> (Vec<Code>, Option<Vec<u32>>) {
    let mut keys: Vec<(Code, u32)> = match ranks {
        Some(r) => codes.iter().copied().zip(r.iter().copied()).collect(),
        None => codes.iter().map(|&c| (c, 0)).collect(),
    };
    if keys.len() > 1 {
        let max_off = codes.iter().map(|c| c.offset).max().unwrap_or(0);
        let max_seg = codes.iter().map(|c| c.seg_id).max().unwrap_or(0);
        let mut scratch = keys.clone();
        for shift in digit_shifts(max_off) {
            radix_pass(&keys, &mut scratch, |c| (c.offset >> shift) as usize & (BUCKETS - 1));
            std::mem::swap(&mut keys, &mut scratch);
        }
        for shift in digit_shifts(max_seg) {
            radix_pass(&keys, &mut scratch, |c| (c.seg_id >> shift) as usize & (BUCKETS - 1));
            std::mem::swap(&mut keys, &mut scratch);
        }
    }
    let ranks = ranks.map(|_| keys.iter().map(|&(_, r)| r).collect());
    (keys.into_iter().map(|(c, _)| c).collect(), ranks)
}

fn digit_shifts(max_key: u64) -> impl Iterator<Item = u32> {
    (0..effective_bits(max_key).div_ceil(RADIX_BITS)).map(|d| d * RADIX_BITS)
}

fn radix_pass(src: &[(Code, u32)], dst: &mut [(Code, u32)], digit: impl Fn(&Code) -> usize) {
    let mut counts = [0usize; BUCKETS];
    for (c, _) in src {
        counts[digit(c)] += 1;
    }
    let mut sum = 0;
    for slot in counts.iter_mut() {
        let c = *slot;
        *slot = sum;
        sum += c;
    }
    for item in src {
        let d = digit(&item.0);
        dst[counts[d]] = *item;
        counts[d] += 1;
    }
}
