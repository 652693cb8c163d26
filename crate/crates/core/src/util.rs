/// Sums in a fixed binary-tree order over the slice index. The bracketing
/// depends only on the length, so any aggregate built from per-scenario
/// values in index order is bit-reproducible across runs and thread counts,
/// and the balanced tree keeps round-off growth at O(log n).
pub(crate) fn tree_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let mid = n / 2;
            tree_sum(&values[..mid]) + tree_sum(&values[mid..])
        }
    }
}
