//! Bucket metadata shared by layout, graph construction and execution.

use alloc::vec::Vec;

use crate::PAGE_SIZE;

/// Byte range of one bucket inside the bucket-major data file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Extent {
    pub offset: u64,
    pub length: u64,
}

/// A group of similar vectors stored contiguously on disk.
///
/// Oversized groups are split into several buckets that share one
/// `group` (center id), center and radius.
#[derive(Debug, Clone, PartialEq)]
pub struct Bucket {
    pub id: u32,
    /// Center id this bucket was assigned to.
    pub group: u32,
    pub center: Vec<f32>,
    /// Max distance from the center to any member.
    pub radius: f32,
    pub count: u64,
    pub extent: Extent,
}

#[inline]
pub fn round_up_page(bytes: u64) -> u64 {
    bytes.div_ceil(PAGE_SIZE) * PAGE_SIZE
}

/// On-disk size of one `[u64 id][f32 x dim]` record.
#[inline]
pub fn record_bytes(dim: usize) -> u64 {
    8 + 4 * dim as u64
}

/// Padded extent length for `count` records.
#[inline]
pub fn extent_bytes(count: u64, dim: usize) -> u64 {
    round_up_page(count * record_bytes(dim))
}

/// Max records per bucket so that the padded extent stays within `max_bytes`.
pub fn max_records_within(max_bytes: u64, dim: usize) -> u64 {
    let pages = max_bytes / PAGE_SIZE;
    (pages * PAGE_SIZE) / record_bytes(dim)
}

/// Splits per-group counts into buckets of at most `max_records` each and lays
/// out page-aligned, disjoint extents in group order. Returns
/// `(group, count, extent)` per bucket; empty groups yield one empty bucket.
pub fn plan_extents(counts: &[u64], dim: usize, max_records: Option<u64>) -> Vec<(u32, u64, Extent)> {
    let mut out = Vec::with_capacity(counts.len());
    let mut offset = 0u64;
    for (group, &count) in counts.iter().enumerate() {
        let chunk = max_records.filter(|&m| m > 0).unwrap_or(u64::MAX);
        let mut left = count;
        loop {
            let take = left.min(chunk);
            let length = extent_bytes(take, dim);
            out.push((group as u32, take, Extent { offset, length }));
            offset += length;
            left -= take;
            if left == 0 {
                break;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alignment_arithmetic() {
        assert_eq!(round_up_page(0), 0);
        assert_eq!(round_up_page(1), 4096);
        assert_eq!(round_up_page(4096), 4096);
        assert_eq!(extent_bytes(30, 32), 4096);
        assert_eq!(extent_bytes(31, 32), 8192);
        assert_eq!(record_bytes(32), 136);
    }

    #[test]
    fn extents_split_and_stay_disjoint() {
        let plan = plan_extents(&[100, 0, 7], 4, Some(40));
        let counts: Vec<u64> = plan.iter().map(|p| p.1).collect();
        assert_eq!(counts, [40, 40, 20, 0, 7]);
        let mut end = 0;
        for (_, _, e) in &plan {
            assert_eq!(e.offset % PAGE_SIZE, 0);
            assert_eq!(e.length % PAGE_SIZE, 0);
            assert!(e.offset >= end);
            end = e.offset + e.length;
        }
    }

    #[test]
    fn records_within_budget() {
        let m = max_records_within(3 * 4096 + 5, 32);
        assert!(extent_bytes(m, 32) <= 3 * 4096);
        assert!(extent_bytes(m + 1, 32) > 3 * 4096);
    }
}
