//! X-means: k-means that grows k by BIC-scored 2-way splits.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::kmeans::{bic_from_assignments, kmeans, lloyd, KMeansFit};
use crate::error::{Error, Result};

/// Grow clusters from k = 2: in each round every cluster is tentatively
/// 2-split, the split is kept iff the local BIC (children vs. parent on the
/// cluster's own points) strictly improves, and the surviving centroid set
/// is re-polished globally. Stops when no split survives or k reaches
/// `k_max`.
pub fn xmeans(points: &ArrayView2<f64>, k_max: usize, seed: u64) -> Result<KMeansFit> {
    if k_max < 2 {
        return Err(Error::Config(format!("k_max must be at least 2, got {k_max}")));
    }
    let n = points.nrows();
    if n < 2 {
        return Err(Error::InsufficientData(
            "x-means needs at least 2 points".to_string(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fit = kmeans(points, 2.min(n), &mut rng)?;

    loop {
        let k = fit.centroids.nrows();
        if k >= k_max {
            break;
        }
        // Candidate splits, scored on each cluster's own points.
        struct Split {
            cluster: usize,
            children: Array2<f64>,
            gain: f64,
        }
        let mut candidates: Vec<Split> = Vec::new();
        for c in 0..k {
            let member_rows: Vec<usize> = fit
                .labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == c)
                .map(|(i, _)| i)
                .collect();
            if member_rows.len() < 2 {
                continue;
            }
            let mut subset = Array2::zeros((member_rows.len(), points.ncols()));
            for (r, &i) in member_rows.iter().enumerate() {
                subset.row_mut(r).assign(&points.row(i));
            }
            let parent_centroid = fit.centroids.row(c).insert_axis(ndarray::Axis(0));
            let parent_bic = bic_from_assignments(
                &subset.view(),
                &parent_centroid,
                &vec![0; member_rows.len()],
            );
            let child_seed = rng.gen::<u64>();
            let mut child_rng = ChaCha8Rng::seed_from_u64(child_seed);
            let child = match kmeans(&subset.view(), 2, &mut child_rng) {
                Ok(f) => f,
                Err(_) => continue,
            };
            let child_bic = bic_from_assignments(&subset.view(), &child.centroids.view(), &child.labels);
            if child_bic > parent_bic {
                log::debug!(
                    "x-means split accepted on cluster {c}: bic {parent_bic:.3} -> {child_bic:.3}"
                );
                debug_assert!(child_bic > parent_bic);
                candidates.push(Split {
                    cluster: c,
                    children: child.centroids,
                    gain: child_bic - parent_bic,
                });
            }
        }
        if candidates.is_empty() {
            break;
        }
        // Apply the best-improving splits first while the budget lasts.
        candidates.sort_by(|a, b| b.gain.total_cmp(&a.gain).then(a.cluster.cmp(&b.cluster)));
        let budget = k_max - k;
        let accepted: Vec<&Split> = candidates.iter().take(budget).collect();
        let split_ids: Vec<usize> = accepted.iter().map(|s| s.cluster).collect();
        let mut centroids = Array2::zeros((k + accepted.len(), points.ncols()));
        let mut row = 0;
        for c in 0..k {
            if let Some(pos) = split_ids.iter().position(|&s| s == c) {
                centroids.row_mut(row).assign(&accepted[pos].children.row(0));
                centroids.row_mut(row + 1).assign(&accepted[pos].children.row(1));
                row += 2;
            } else {
                centroids.row_mut(row).assign(&fit.centroids.row(c));
                row += 1;
            }
        }
        // Global polish with the grown centroid set.
        fit = lloyd(points, centroids);
    }
    log::debug!(
        "x-means settled at k = {} (wcss {:.6})",
        fit.centroids.nrows(),
        fit.wcss
    );
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    /// `count` points around each of the given centers, unit-ish noise.
    pub fn blobs(centers: &[[f64; 2]], count: usize, spread: f64, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, spread).unwrap();
        let mut out = Array2::zeros((centers.len() * count, 2));
        let mut row = 0;
        for c in centers {
            for _ in 0..count {
                out[[row, 0]] = c[0] + normal.sample(&mut rng);
                out[[row, 1]] = c[1] + normal.sample(&mut rng);
                row += 1;
            }
        }
        out
    }

    #[test]
    fn tight_blob_stays_at_initial_k() {
        let points = blobs(&[[0.0, 0.0]], 200, 0.3, 9);
        let fit = xmeans(&points.view(), 16, 1).unwrap();
        assert_eq!(fit.centroids.nrows(), 2); // the k = 2 starting point
    }

    #[test]
    fn three_blobs_bic_peaks_at_three() {
        let points = blobs(&[[0.0, 0.0], [12.0, 0.0], [0.0, 12.0]], 80, 0.5, 4);
        let mut scores = Vec::new();
        for k in [2usize, 3, 4] {
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            let fit = kmeans(&points.view(), k, &mut rng).unwrap();
            scores.push(bic_from_assignments(
                &points.view(),
                &fit.centroids.view(),
                &fit.labels,
            ));
        }
        assert!(scores[1] > scores[0], "BIC(3) {} <= BIC(2) {}", scores[1], scores[0]);
        assert!(scores[1] > scores[2], "BIC(3) {} <= BIC(4) {}", scores[1], scores[2]);
    }

    #[test]
    fn four_blobs_recovered() {
        let points = blobs(&[[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 10.0]], 60, 0.4, 2);
        let fit = xmeans(&points.view(), 16, 3).unwrap();
        assert_eq!(fit.centroids.nrows(), 4);
        // Totality: every point labeled within range.
        assert!(fit.labels.iter().all(|&l| l < 4));
    }

    #[test]
    fn k_max_bounds_growth() {
        let points = blobs(&[[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 10.0]], 60, 0.4, 2);
        let fit = xmeans(&points.view(), 3, 3).unwrap();
        assert!(fit.centroids.nrows() <= 3);
    }

    #[test]
    fn rejects_bad_kmax() {
        let points = Array2::zeros((10, 2));
        assert!(matches!(
            xmeans(&points.view(), 1, 0),
            Err(Error::Config(_))
        ));
    }
}
