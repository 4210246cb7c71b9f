//! Run-length coding of a nondecreasing ID stream.
//!
//! The stream is processed as lanes of 32 values, mirroring one lane per
//! worker thread:
//!
//! 1. each lane receives the last ID of the lane before it and sets a
//!    transition flag wherever the ID differs from its predecessor;
//! 2. flags are prefix-summed inside each lane, lane totals are scanned, and
//!    the two are combined into a pointer giving each run its output slot;
//! 3. each flagged position scatters its ID and start index to its slot, and
//!    run counts are the differences of neighbouring starts.

use crate::error::{GpzError, Result};
use crate::model::LANE_WIDTH;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RleResult {
    pub unique_ids: Vec<u64>,
    pub counts: Vec<u64>,
}

impl RleResult {
    pub fn len(&self) -> usize {
        self.unique_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unique_ids.is_empty()
    }
}

pub fn rle_encode(ids: &[u64]) -> Result<RleResult> {
    if let Some(i) = ids.windows(2).position(|w| w[1] < w[0]) {
        return Err(GpzError::domain(format!(
            "run-length input decreases at {}: {} then {}",
            i + 1,
            ids[i],
            ids[i + 1]
        )));
    }
    let n = ids.len();
    if n == 0 {
        return Ok(RleResult::default());
    }

    // Step 1: transition flags, with each lane seeded by its neighbour's last ID.
    let mut flags = vec![false; n];
    for (lane, chunk) in ids.chunks(LANE_WIDTH).enumerate() {
        let base = lane * LANE_WIDTH;
        let mut prev = if lane == 0 { None } else { Some(ids[base - 1]) };
        for (j, &id) in chunk.iter().enumerate() {
            flags[base + j] = prev != Some(id);
            prev = Some(id);
        }
    }

    // Step 2: lane-local exclusive scan, then a scan over lane totals.
    let mut pointer = vec![0usize; n];
    let mut lane_totals = Vec::with_capacity(n.div_ceil(LANE_WIDTH));
    for (lane, chunk) in flags.chunks(LANE_WIDTH).enumerate() {
        let base = lane * LANE_WIDTH;
        let mut local = 0;
        for (j, &f) in chunk.iter().enumerate() {
            pointer[base + j] = local;
            local += f as usize;
        }
        lane_totals.push(local);
    }
    let mut lane_base = Vec::with_capacity(lane_totals.len());
    let mut runs = 0;
    for t in &lane_totals {
        lane_base.push(runs);
        runs += t;
    }
    for (lane, chunk) in pointer.chunks_mut(LANE_WIDTH).enumerate() {
        for p in chunk {
            *p += lane_base[lane];
        }
    }

    // Step 3: scatter run heads into their slots, then derive counts.
    let mut unique_ids = vec![0u64; runs];
    let mut starts = vec![0usize; runs];
    for i in (0..n).filter(|&i| flags[i]) {
        unique_ids[pointer[i]] = ids[i];
        starts[pointer[i]] = i;
    }
    let counts = (0..runs)
        .map(|k| {
            let end = if k + 1 < runs { starts[k + 1] } else { n };
            (end - starts[k]) as u64
        })
        .collect();
    Ok(RleResult { unique_ids, counts })
}

pub fn rle_decode(r: &RleResult) -> Result<Vec<u64>> {
    if r.unique_ids.len() != r.counts.len() {
        return Err(GpzError::corrupt("run ids and counts differ in length"));
    }
    let mut total = 0u64;
    for (k, &c) in r.counts.iter().enumerate() {
        if c == 0 {
            return Err(GpzError::corrupt(format!("zero-length run at {k}")));
        }
        total = total
            .checked_add(c)
            .filter(|&t| t <= u32::MAX as u64)
            .ok_or_else(|| GpzError::corrupt("run lengths overflow"))?;
    }
    let mut out = Vec::with_capacity(total as usize);
    for (&id, &c) in r.unique_ids.iter().zip(&r.counts) {
        out.extend(std::iter::repeat_n(id, c as usize));
    }
    Ok(out)
}
