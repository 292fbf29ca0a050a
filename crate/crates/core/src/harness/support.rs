//! Scoring how well the sparsity pattern of learned codes matches a known
//! task grouping.

use nalgebra::DMatrix;

use crate::synth::TaskGroups;

/// `0.05 · max|S|`.
pub fn default_threshold(codes: &DMatrix<f64>) -> f64 {
    0.05 * codes.amax()
}

/// Number of latent rows with at least one entry above `threshold` in
/// magnitude.
pub fn active_rows(codes: &DMatrix<f64>, threshold: f64) -> usize {
    codes
        .row_iter()
        .filter(|row| row.iter().any(|v| v.abs() > threshold))
        .count()
}

/// Pairwise agreement between the binarised code supports and the true
/// grouping.
///
/// Same-group task pairs score when they share at least one active latent;
/// pairs from different, non-adjacent groups score when they share none.
/// Pairs from adjacent groups are not counted. Returns the fraction of
/// counted pairs that score (1 when nothing is counted).
pub fn support_recovery_score(codes: &DMatrix<f64>, groups: &TaskGroups, threshold: f64) -> f64 {
    let active: Vec<Vec<bool>> = codes
        .column_iter()
        .map(|c| c.iter().map(|v| v.abs() > threshold).collect())
        .collect();
    let shares = |a: usize, b: usize| {
        active[a]
            .iter()
            .zip(active[b].iter())
            .any(|(&x, &y)| x && y)
    };
    let membership: Vec<Option<usize>> = (0..codes.ncols()).map(|t| groups.group_of(t)).collect();

    let mut counted = 0usize;
    let mut good = 0usize;
    for a in 0..codes.ncols() {
        let Some(ga) = membership[a] else { continue };
        for b in a + 1..codes.ncols() {
            let Some(gb) = membership[b] else { continue };
            let ok = if ga == gb {
                shares(a, b)
            } else if groups.are_adjacent(ga, gb) {
                continue;
            } else {
                !shares(a, b)
            };
            counted += 1;
            good += usize::from(ok);
        }
    }
    if counted == 0 {
        1.0
    } else {
        good as f64 / counted as f64
    }
}
