//! OPTICS: density reachability ordering and xi-steepness cluster
//! extraction.
//!
//! The ordering is computed with an unbounded neighborhood radius, so every
//! point is reachable and the plot closes in a single sweep per connected
//! run. Clusters are cut out of the reachability plot by the xi method:
//! steep-down/steep-up area pairing with maximum-in-between filtering and
//! predecessor correction. Points in no cluster are noise.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::kmeans::squared_distance;
use crate::error::{Error, Result};

/// Reachability ordering. `reachability`, `core_distance` and `predecessor`
/// are indexed by original point index; `order` maps plot position to
/// original index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpticsOrdering {
    pub order: Vec<usize>,
    pub reachability: Vec<f64>,
    pub core_distance: Vec<f64>,
    pub predecessor: Vec<Option<usize>>,
}

impl OpticsOrdering {
    /// Reachability values in plot order.
    pub fn reachability_plot(&self) -> Vec<f64> {
        self.order.iter().map(|&i| self.reachability[i]).collect()
    }
}

/// Compute the OPTICS ordering (infinite epsilon). The core distance of a
/// point is the distance to its `min_pts`-th nearest neighbor, counting the
/// point itself. Deterministic for a fixed input order: the next seed is the
/// unprocessed point with the smallest (reachability, index) pair.
pub fn optics_ordering(points: &ArrayView2<f64>, min_pts: usize) -> Result<OpticsOrdering> {
    let n = points.nrows();
    if min_pts < 2 {
        return Err(Error::Config(format!(
            "min_pts must be at least 2, got {min_pts}"
        )));
    }
    if n < min_pts {
        return Err(Error::InsufficientData(format!(
            "optics needs at least min_pts = {min_pts} points, got {n}"
        )));
    }
    let mut processed = vec![false; n];
    let mut reachability = vec![f64::INFINITY; n];
    let mut core_distance = vec![f64::INFINITY; n];
    let mut predecessor: Vec<Option<usize>> = vec![None; n];
    let mut order = Vec::with_capacity(n);

    let process = |p: usize,
                       processed: &mut Vec<bool>,
                       reachability: &mut Vec<f64>,
                       core_distance: &mut Vec<f64>,
                       predecessor: &mut Vec<Option<usize>>,
                       order: &mut Vec<usize>| {
        processed[p] = true;
        order.push(p);
        let pr = points.row(p);
        let dists: Vec<f64> = (0..n)
            .map(|o| squared_distance(pr.as_slice().unwrap(), points.row(o).as_slice().unwrap()).sqrt())
            .collect();
        let mut sorted = dists.clone();
        sorted.sort_unstable_by(f64::total_cmp);
        core_distance[p] = sorted[min_pts - 1]; // self sits at index 0
        for o in 0..n {
            if processed[o] {
                continue;
            }
            let new_reach = core_distance[p].max(dists[o]);
            if new_reach < reachability[o] {
                reachability[o] = new_reach;
                predecessor[o] = Some(p);
            }
        }
    };

    for start in 0..n {
        if processed[start] {
            continue;
        }
        process(
            start,
            &mut processed,
            &mut reachability,
            &mut core_distance,
            &mut predecessor,
            &mut order,
        );
        loop {
            let mut next: Option<usize> = None;
            for o in 0..n {
                if processed[o] || reachability[o].is_infinite() {
                    continue;
                }
                if next.is_none_or(|cur| reachability[o] < reachability[cur]) {
                    next = Some(o);
                }
            }
            match next {
                Some(o) => process(
                    o,
                    &mut processed,
                    &mut reachability,
                    &mut core_distance,
                    &mut predecessor,
                    &mut order,
                ),
                None => break,
            }
        }
    }
    Ok(OpticsOrdering {
        order,
        reachability,
        core_distance,
        predecessor,
    })
}

/// Walk a steep region to its maximal extent: steep points reset the
/// tolerance, up to `min_pts` consecutive same-direction non-steep points
/// are absorbed, and any opposite-direction point ends the region.
fn extend_region(steep: &[bool], opposite: &[bool], start: usize, min_pts: usize) -> usize {
    let n = steep.len();
    let mut non_steep = 0;
    let mut end = start;
    let mut index = start;
    while index < n {
        if steep[index] {
            non_steep = 0;
            end = index;
        } else if !opposite[index] {
            non_steep += 1;
            if non_steep > min_pts {
                break;
            }
        } else {
            return end;
        }
        index += 1;
    }
    end
}

#[derive(Clone, Copy)]
struct SteepDownArea {
    start: usize,
    end: usize,
    mib: f64,
}

/// Drop steep-down areas invalidated by the running maximum-in-between and
/// fold the new mib into the survivors.
fn update_filter_sdas(
    sdas: &[SteepDownArea],
    mib: f64,
    xi_complement: f64,
    r_plot: &[f64],
) -> Vec<SteepDownArea> {
    if mib.is_infinite() {
        return Vec::new();
    }
    sdas.iter()
        .filter(|d| mib <= r_plot[d.start] * xi_complement)
        .map(|d| SteepDownArea {
            mib: d.mib.max(mib),
            ..*d
        })
        .collect()
}

/// Shrink a candidate cluster from the right until the reachability of its
/// last point was actually set by a predecessor inside the cluster.
fn correct_predecessor(
    r_plot: &[f64],
    ordering: &OpticsOrdering,
    s: usize,
    mut e: usize,
) -> Option<(usize, usize)> {
    while s < e {
        if r_plot[s] > r_plot[e] {
            return Some((s, e));
        }
        let p_e = ordering.predecessor[ordering.order[e]];
        if let Some(p) = p_e {
            if ordering.order[s..e].contains(&p) {
                return Some((s, e));
            }
        }
        e -= 1;
    }
    None
}

/// Extract xi-steep clusters as (start, end) position pairs over the
/// reachability plot, in discovery order (inner clusters before the areas
/// that contain them within one steep-up closure).
fn xi_cluster_ranges(
    ordering: &OpticsOrdering,
    xi: f64,
    min_pts: usize,
    min_cluster_size: usize,
) -> Vec<(usize, usize)> {
    let mut r_plot = ordering.reachability_plot();
    let n = r_plot.len();
    r_plot.push(f64::INFINITY); // closes clusters still open at the end

    let xi_complement = 1.0 - xi;
    let mut steep_up = vec![false; n];
    let mut steep_down = vec![false; n];
    let mut upward = vec![false; n];
    let mut downward = vec![false; n];
    for i in 0..n {
        let ratio = r_plot[i] / r_plot[i + 1];
        // NaN ratios (inf/inf) compare false everywhere, which is wanted.
        steep_up[i] = ratio <= xi_complement;
        steep_down[i] = ratio >= 1.0 / xi_complement;
        upward[i] = ratio < 1.0;
        downward[i] = ratio > 1.0;
    }

    let mut sdas: Vec<SteepDownArea> = Vec::new();
    let mut clusters: Vec<(usize, usize)> = Vec::new();
    let mut index = 0usize;
    let mut mib = 0.0f64;

    for si in 0..n {
        if !(steep_up[si] || steep_down[si]) || si < index {
            continue;
        }
        mib = r_plot[index..=si].iter().fold(mib, |m, &v| m.max(v));
        if steep_down[si] {
            sdas = update_filter_sdas(&sdas, mib, xi_complement, &r_plot);
            let d_start = si;
            let d_end = extend_region(&steep_down, &upward, d_start, min_pts);
            sdas.push(SteepDownArea {
                start: d_start,
                end: d_end,
                mib: 0.0,
            });
            index = d_end + 1;
            mib = r_plot[index];
        } else {
            sdas = update_filter_sdas(&sdas, mib, xi_complement, &r_plot);
            let u_start = si;
            let u_end = extend_region(&steep_up, &downward, u_start, min_pts);
            index = u_end + 1;
            mib = r_plot[index];

            let mut u_clusters: Vec<(usize, usize)> = Vec::new();
            for d in &sdas {
                let mut c_start = d.start;
                let mut c_end = u_end;
                // sc2*: the separating spike must dominate the area's mib.
                if r_plot[c_end + 1] * xi_complement < d.mib {
                    continue;
                }
                let d_max = r_plot[d.start];
                if d_max * xi_complement >= r_plot[c_end + 1] {
                    while r_plot[c_start + 1] > r_plot[c_end + 1] && c_start < d.end {
                        c_start += 1;
                    }
                } else if r_plot[c_end + 1] * xi_complement >= d_max {
                    while c_end > u_start && r_plot[c_end - 1] > d_max {
                        c_end -= 1;
                    }
                }
                let Some((c_start, c_end)) = correct_predecessor(&r_plot, ordering, c_start, c_end)
                else {
                    continue;
                };
                if c_end - c_start + 1 < min_cluster_size {
                    continue;
                }
                if c_start > d.end {
                    continue;
                }
                if c_end < u_start {
                    continue;
                }
                u_clusters.push((c_start, c_end));
            }
            // Deeper (more recent) steep-down areas produce the inner
            // clusters; emit those first.
            u_clusters.reverse();
            clusters.extend(u_clusters);
        }
    }
    clusters
}

/// Assign xi-cluster labels per original point index; `None` is noise.
/// Earlier (inner) cluster ranges win; a range overlapping an already
/// labeled stretch is dropped entirely. A range spanning the whole ordering
/// is dropped too: it arises from the infinite reachability at the plot
/// boundaries and says nothing about internal structure (keeping it would
/// label pure noise as one giant cluster).
pub fn extract_xi_labels(
    ordering: &OpticsOrdering,
    xi: f64,
    min_pts: usize,
) -> (Vec<Option<usize>>, usize) {
    let ranges = xi_cluster_ranges(ordering, xi, min_pts, min_pts);
    let n = ordering.order.len();
    let mut by_pos: Vec<Option<usize>> = vec![None; n];
    let mut label = 0usize;
    for (s, e) in ranges {
        if e - s + 1 == n {
            continue;
        }
        if by_pos[s..=e].iter().all(Option::is_none) {
            for slot in &mut by_pos[s..=e] {
                *slot = Some(label);
            }
            label += 1;
        }
    }
    let mut labels = vec![None; n];
    for (pos, &orig) in ordering.order.iter().enumerate() {
        labels[orig] = by_pos[pos];
    }
    (labels, label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn two_line_clusters() -> Array2<f64> {
        // Two dense 1-d runs far apart.
        let mut pts = Vec::new();
        for i in 0..20 {
            pts.push([i as f64 * 0.1, 0.0]);
        }
        for i in 0..20 {
            pts.push([100.0 + i as f64 * 0.1, 0.0]);
        }
        Array2::from_shape_vec((40, 2), pts.into_iter().flatten().collect()).unwrap()
    }

    #[test]
    fn first_point_has_infinite_reachability() {
        let pts = two_line_clusters();
        let ord = optics_ordering(&pts.view(), 3).unwrap();
        assert!(ord.reachability[ord.order[0]].is_infinite());
        assert_eq!(ord.order.len(), 40);
    }

    #[test]
    fn reachability_dominates_core_distance_of_predecessor() {
        let pts = two_line_clusters();
        let ord = optics_ordering(&pts.view(), 3).unwrap();
        for o in 0..40 {
            if let Some(p) = ord.predecessor[o] {
                assert!(ord.reachability[o] >= ord.core_distance[p] - 1e-12);
            }
        }
    }

    #[test]
    fn two_separated_runs_give_two_clusters() {
        let pts = two_line_clusters();
        let ord = optics_ordering(&pts.view(), 3).unwrap();
        let (labels, k) = extract_xi_labels(&ord, 0.05, 3);
        assert_eq!(k, 2, "labels: {labels:?}");
        // The two runs never share a label.
        let first: Vec<_> = (0..20).filter_map(|i| labels[i]).collect();
        let second: Vec<_> = (20..40).filter_map(|i| labels[i]).collect();
        assert!(!first.is_empty() && !second.is_empty());
        assert!(first.iter().all(|&l| l == first[0]));
        assert!(second.iter().all(|&l| l == second[0]));
        assert_ne!(first[0], second[0]);
    }

    #[test]
    fn ordering_is_deterministic() {
        let pts = two_line_clusters();
        let a = optics_ordering(&pts.view(), 4).unwrap();
        let b = optics_ordering(&pts.view(), 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn min_pts_larger_than_n_is_rejected() {
        let pts = Array2::<f64>::zeros((3, 2));
        assert!(matches!(
            optics_ordering(&pts.view(), 5),
            Err(Error::InsufficientData(_))
        ));
    }
}
