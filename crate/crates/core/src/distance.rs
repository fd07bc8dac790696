//! L2 distance kernels.
//!
//! Comparisons run on squared distances; square roots are taken only where a
//! distance leaves the crate.

const LANES: usize = 8;

/// Squared Euclidean distance. Accumulates in eight independent partial sums
/// so the loop vectorizes on any target with 256-bit lanes.
#[inline]
pub fn l2_sq(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; LANES];
    let chunks_a = a.chunks_exact(LANES);
    let chunks_b = b.chunks_exact(LANES);
    let tail_a = chunks_a.remainder();
    let tail_b = chunks_b.remainder();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for i in 0..LANES {
            let d = ca[i] - cb[i];
            acc[i] += d * d;
        }
    }
    let mut sum = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in tail_a.iter().zip(tail_b) {
        let d = x - y;
        sum += d * d;
    }
    sum
}

#[inline]
pub fn l2(a: &[f32], b: &[f32]) -> f32 {
    libm::sqrtf(l2_sq(a, b))
}

/// Squared distance accumulated in f64, element by element. Slow; used where
/// an independent reference value is wanted.
pub fn l2_sq_f64(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_scalar_reference() {
        for dim in [1usize, 7, 8, 9, 16, 33, 128] {
            let a: alloc::vec::Vec<f32> = (0..dim).map(|i| (i as f32 * 0.37).sin()).collect();
            let b: alloc::vec::Vec<f32> = (0..dim).map(|i| (i as f32 * 0.11).cos()).collect();
            let want = l2_sq_f64(&a, &b);
            let got = l2_sq(&a, &b) as f64;
            assert!((want - got).abs() <= 1e-5 * want.max(1.0), "dim {dim}");
        }
    }

    #[test]
    fn zero_for_identical() {
        let a = [1.5f32; 12];
        assert_eq!(l2(&a, &a), 0.0);
    }
}
