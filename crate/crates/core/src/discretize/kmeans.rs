//! Lloyd k-means with k-means++ seeding, plus the spherical-Gaussian BIC
//! used by the X-means split test.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAX_LLOYD_ITERS: usize = 300;

/// Result of one k-means run in scaled space.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub centroids: Array2<f64>,
    pub labels: Vec<usize>,
    pub wcss: f64,
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid, ties to the lowest id.
pub fn nearest_centroid(point: &[f64], centroids: &ArrayView2<f64>) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.outer_iter().enumerate() {
        let d = squared_distance(point, c.as_slice().expect("contiguous centroid"));
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    (best, best_d)
}

/// k-means++ seeding: first centroid uniform, then proportional to the
/// squared distance to the nearest chosen centroid.
fn seed_centroids(points: &ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = points.nrows();
    let d = points.ncols();
    let mut centroids = Array2::zeros((k, d));
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    centroids.row_mut(0).assign(&points.row(first));
    chosen[first] = true;
    let mut dist2: Vec<f64> = (0..n)
        .map(|i| squared_distance(points.row(i).as_slice().unwrap(), points.row(first).as_slice().unwrap()))
        .collect();
    for c in 1..k {
        let total: f64 = dist2.iter().sum();
        let next = if total > 0.0 {
            let mut draw = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, w) in dist2.iter().enumerate() {
                draw -= w;
                if draw <= 0.0 && *w > 0.0 {
                    pick = Some(i);
                    break;
                }
            }
            pick.unwrap_or_else(|| dist2.iter().position(|w| *w > 0.0).unwrap_or(0))
        } else {
            // All remaining mass is on duplicates; take the first unchosen.
            (0..n).find(|i| !chosen[*i]).unwrap_or(0)
        };
        centroids.row_mut(c).assign(&points.row(next));
        chosen[next] = true;
        for i in 0..n {
            let d2 = squared_distance(
                points.row(i).as_slice().unwrap(),
                points.row(next).as_slice().unwrap(),
            );
            if d2 < dist2[i] {
                dist2[i] = d2;
            }
        }
    }
    centroids
}

fn wcss(points: &ArrayView2<f64>, centroids: &ArrayView2<f64>, labels: &[usize]) -> f64 {
    points
        .outer_iter()
        .zip(labels)
        .map(|(p, &l)| {
            squared_distance(
                p.as_slice().unwrap(),
                centroids.row(l).as_slice().unwrap(),
            )
        })
        .sum()
}

/// Lloyd iteration from given initial centroids, to the assignment fixpoint
/// or [`MAX_LLOYD_ITERS`]. The within-cluster sum of squares never increases
/// across iterations (checked when debug assertions are on); emptied
/// clusters are reseeded at the point farthest from its current centroid.
pub fn lloyd(points: &ArrayView2<f64>, mut centroids: Array2<f64>) -> KMeansFit {
    let n = points.nrows();
    let k = centroids.nrows();
    let d = points.ncols();
    let mut labels = vec![0usize; n];
    let mut prev_wcss = f64::INFINITY;
    for _ in 0..MAX_LLOYD_ITERS {
        let mut changed = false;
        let mut reseeded = false;
        for i in 0..n {
            let (l, _) = nearest_centroid(points.row(i).as_slice().unwrap(), &centroids.view());
            if labels[i] != l {
                labels[i] = l;
                changed = true;
            }
        }
        // Recompute means; reseed clusters that lost all members.
        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            let mut row = sums.row_mut(l);
            row += &points.row(i);
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = squared_distance(
                            points.row(a).as_slice().unwrap(),
                            centroids.row(labels[a]).as_slice().unwrap(),
                        );
                        let db = squared_distance(
                            points.row(b).as_slice().unwrap(),
                            centroids.row(labels[b]).as_slice().unwrap(),
                        );
                        da.total_cmp(&db)
                    })
                    .unwrap_or(0);
                centroids.row_mut(c).assign(&points.row(far));
                reseeded = true;
            } else {
                let cnt = counts[c] as f64;
                for j in 0..d {
                    centroids[[c, j]] = sums[[c, j]] / cnt;
                }
            }
        }
        let cur = wcss(points, &centroids.view(), &labels);
        if !reseeded {
            debug_assert!(
                cur <= prev_wcss + 1e-9,
                "wcss increased across a Lloyd iteration: {prev_wcss} -> {cur}"
            );
        }
        prev_wcss = cur;
        if !changed && !reseeded {
            break;
        }
    }
    // Final assignment pass so labels match the last centroid update.
    for i in 0..n {
        let (l, _) = nearest_centroid(points.row(i).as_slice().unwrap(), &centroids.view());
        labels[i] = l;
    }
    let total = wcss(points, &centroids.view(), &labels);
    KMeansFit {
        centroids,
        labels,
        wcss: total,
    }
}

/// Full k-means run (seeding + Lloyd) in whatever space `points` lives in.
pub fn kmeans(points: &ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Result<KMeansFit> {
    let n = points.nrows();
    if k < 1 {
        return Err(Error::Config("k must be at least 1".to_string()));
    }
    if n < k {
        return Err(Error::InsufficientData(format!(
            "cannot fit {k} clusters to {n} points"
        )));
    }
    let centroids = seed_centroids(points, k, rng);
    Ok(lloyd(points, centroids))
}

/// BIC of a hard-assignment mixture of identical spherical Gaussians
/// (higher is better): log-likelihood minus `(p / 2) ln N` with
/// `p = k (d + 1) + 1` free parameters. The pooled per-dimension variance is
/// floored at 1e-12 so degenerate clusters stay finite.
pub fn bic_from_assignments(
    points: &ArrayView2<f64>,
    centroids: &ArrayView2<f64>,
    labels: &[usize],
) -> f64 {
    let n = points.nrows();
    let d = points.ncols() as f64;
    let k = centroids.nrows();
    let sse = wcss(points, centroids, labels);
    let denom = (n.saturating_sub(k)).max(1) as f64;
    let variance = (sse / (d * denom)).max(1e-12);
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    let nf = n as f64;
    let mut ll = 0.0;
    for &c in &counts {
        if c > 0 {
            let cf = c as f64;
            ll += cf * (cf / nf).ln();
        }
    }
    ll += -(nf * d / 2.0) * (2.0 * std::f64::consts::PI * variance).ln() - sse / (2.0 * variance);
    let p = (k as f64) * (d + 1.0) + 1.0;
    ll - (p / 2.0) * nf.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn identical_points_single_centroid() {
        let points = Array2::from_elem((20, 4), 3.0);
        let fit = kmeans(&points.view(), 1, &mut rng(0)).unwrap();
        assert_eq!(fit.wcss, 0.0);
        for j in 0..4 {
            assert_eq!(fit.centroids[[0, j]], 3.0);
        }
    }

    #[test]
    fn k_equals_n_zero_wcss() {
        let points = ndarray::array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0]];
        let fit = kmeans(&points.view(), 4, &mut rng(1)).unwrap();
        assert!(fit.wcss < 1e-24);
        let mut labels = fit.labels.clone();
        labels.sort_unstable();
        assert_eq!(labels, vec![0, 1, 2, 3]);
    }

    #[test]
    fn insufficient_points_rejected() {
        let points = Array2::zeros((2, 3));
        assert!(matches!(
            kmeans(&points.view(), 3, &mut rng(0)),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn bic_penalty_prefers_fewer_clusters_on_identical_fit() {
        // Two exactly coincident "clusters" explain the data equally well;
        // the parameter penalty must favor k = 1.
        let points = Array2::from_elem((50, 2), 1.0);
        let c1 = Array2::from_elem((1, 2), 1.0);
        let c2 = Array2::from_elem((2, 2), 1.0);
        let labels1 = vec![0; 50];
        let mut labels2 = vec![0; 50];
        labels2[25..].fill(1);
        let b1 = bic_from_assignments(&points.view(), &c1.view(), &labels1);
        let b2 = bic_from_assignments(&points.view(), &c2.view(), &labels2);
        assert!(b1.is_finite() && b2.is_finite());
        assert!(b1 > b2);
    }
}
