use crate::error::{GpzError, Result};

/// Differences between adjacent IDs; the first ID is stored as-is.
pub fn delta_encode(ids: &[u64]) -> Result<Vec<u64>> {
    let mut out = Vec::with_capacity(ids.len());
    let mut prev = None;
    for (i, &id) in ids.iter().enumerate() {
        match prev {
            None => out.push(id),
            Some(p) if id > p => out.push(id - p),
            Some(p) => {
                return Err(GpzError::domain(format!("delta input not strictly increasing at {i}: {p} then {id}")))
            }
        }
        prev = Some(id);
    }
    Ok(out)
}

/// Prefix sums of `deltas`. Zero steps after the first element or a sum past
/// `u64::MAX` mean the stream is damaged.
pub fn delta_decode(deltas: &[u64]) -> Result<Vec<u64>> {
    let mut out = Vec::with_capacity(deltas.len());
    let mut acc = 0u64;
    for (i, &d) in deltas.iter().enumerate() {
        if i > 0 && d == 0 {
            return Err(GpzError::corrupt(format!("zero delta at {i}")));
        }
        acc = acc.checked_add(d).ok_or_else(|| GpzError::corrupt(format!("delta sum overflows at {i}")))?;
        out.push(acc);
    }
    Ok(out)
}
