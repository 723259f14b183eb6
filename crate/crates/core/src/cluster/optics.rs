//! OPTICS ordering with xi steep-area cluster extraction.
//!
//! The traversal runs with an unbounded radius: the core distance of a point
//! is the distance to its `min_samples`-th nearest neighbor (itself
//! included), and reachability is the standard max(core distance, distance).
//! Seed-queue ties break by ascending id. Cluster extraction implements the
//! xi steep-area method over the reachability plot (no predecessor
//! correction); regions found inside larger regions win the labeling, and
//! a cluster must span at least `min_samples` points.
//!
//! One deliberate departure from the usual sentinel handling: the infinite
//! reachability at the start of the plot plus the end-of-plot sentinel can
//! pair into a cluster covering the whole ordering even when the plot is
//! flat. Such a cluster carries no grouping information and would declare
//! every vulnerability shared between every node pair, so full-span
//! clusters are discarded.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::corpus::CveId;
use crate::error::{Error, Result};
use crate::textfeat::FeatureVector;

use super::{distance, prepare_points, ClusterAssignment, ClusterParams, ReachabilityPoint, NOISE};

pub fn optics(
    points: &[(CveId, FeatureVector)],
    min_samples: usize,
    xi: f64,
) -> Result<ClusterAssignment> {
    if min_samples < 1 {
        return Err(Error::validation("min_samples must be at least 1"));
    }
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::validation(format!("xi {xi} must lie in (0, 1)")));
    }
    let (ids, vectors) = prepare_points(points)?;
    let n = ids.len();

    let matrix: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| distance(vectors[i], vectors[j])).collect())
        .collect();

    // Core distance: min_samples-th smallest entry of the row (self counts
    // with distance 0). Undefined when there are not enough points.
    let core: Vec<f64> = matrix
        .iter()
        .map(|row| {
            if n < min_samples {
                f64::INFINITY
            } else {
                let mut sorted = row.clone();
                sorted.sort_by(f64::total_cmp);
                sorted[min_samples - 1]
            }
        })
        .collect();

    let (order, reach) = traverse(&matrix, &core);

    let mut labels = vec![NOISE; n];
    if reach.iter().any(|r| r.is_finite()) {
        let plot: Vec<f64> = order.iter().map(|&p| reach[p]).collect();
        let clusters = xi_clusters(&plot, xi, min_samples, min_samples.max(2));
        let order_labels = labels_from_clusters(n, &clusters);
        for (pos, &point) in order.iter().enumerate() {
            labels[point] = order_labels[pos];
        }
    }

    let reachability = order
        .iter()
        .enumerate()
        .map(|(pos, &point)| ReachabilityPoint {
            order: pos,
            cve_id: ids[point].clone(),
            reachability: reach[point],
        })
        .collect();

    Ok(ClusterAssignment {
        labels: ids.into_iter().zip(labels).collect(),
        params: ClusterParams::Optics { min_samples, xi },
        reachability: Some(reachability),
    })
}

#[derive(PartialEq)]
struct Seed {
    reach: f64,
    point: usize,
}

// Min-heap on (reach, point id order).
impl Eq for Seed {}
impl PartialOrd for Seed {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Seed {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .reach
            .total_cmp(&self.reach)
            .then_with(|| other.point.cmp(&self.point))
    }
}

/// Expand-order traversal: returns the visit order and per-point
/// reachability (INFINITY where undefined).
fn traverse(matrix: &[Vec<f64>], core: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let n = matrix.len();
    let mut reach = vec![f64::INFINITY; n];
    let mut processed = vec![false; n];
    let mut order = Vec::with_capacity(n);

    for start in 0..n {
        if processed[start] {
            continue;
        }
        processed[start] = true;
        order.push(start);
        let mut heap: BinaryHeap<Seed> = BinaryHeap::new();
        update_seeds(matrix, core, start, &processed, &mut reach, &mut heap);
        while let Some(Seed { reach: at, point }) = heap.pop() {
            if processed[point] || at > reach[point] {
                continue; // stale entry
            }
            processed[point] = true;
            order.push(point);
            update_seeds(matrix, core, point, &processed, &mut reach, &mut heap);
        }
    }
    (order, reach)
}

fn update_seeds(
    matrix: &[Vec<f64>],
    core: &[f64],
    from: usize,
    processed: &[bool],
    reach: &mut [f64],
    heap: &mut BinaryHeap<Seed>,
) {
    if core[from].is_infinite() {
        return;
    }
    let row = &matrix[from];
    for (q, &d) in row.iter().enumerate() {
        if processed[q] {
            continue;
        }
        let candidate = core[from].max(d);
        if candidate < reach[q] {
            reach[q] = candidate;
            heap.push(Seed {
                reach: candidate,
                point: q,
            });
        }
    }
}

struct SteepDownArea {
    start: usize,
    end: usize,
    mib: f64,
}

/// Extract (start, end) cluster ranges in ordering space from the
/// reachability plot. Smaller clusters precede the larger ones that
/// contain them.
fn xi_clusters(
    plot_in: &[f64],
    xi: f64,
    min_samples: usize,
    min_cluster_size: usize,
) -> Vec<(usize, usize)> {
    let n = plot_in.len();
    // Sentinel keeps end-of-plot boundaries well-defined.
    let mut plot = plot_in.to_vec();
    plot.push(f64::INFINITY);
    let xi_complement = 1.0 - xi;

    let mut steep_up = vec![false; n];
    let mut steep_down = vec![false; n];
    let mut up = vec![false; n];
    let mut down = vec![false; n];
    for i in 0..n {
        let ratio = plot[i] / plot[i + 1]; // NaN for inf/inf: all flags false
        steep_up[i] = ratio <= xi_complement;
        steep_down[i] = ratio >= 1.0 / xi_complement;
        up[i] = ratio < 1.0;
        down[i] = ratio > 1.0;
    }

    let mut sdas: Vec<SteepDownArea> = Vec::new();
    let mut clusters: Vec<(usize, usize)> = Vec::new();
    let mut index = 0usize;
    let mut mib = 0.0f64;

    for steep_index in 0..n {
        if !(steep_up[steep_index] || steep_down[steep_index]) || steep_index < index {
            continue;
        }
        mib = plot[index..=steep_index]
            .iter()
            .fold(mib, |acc, &v| acc.max(v));

        if steep_down[steep_index] {
            filter_sdas(&mut sdas, mib, xi_complement, &plot);
            let d_start = steep_index;
            let d_end = extend_region(&steep_down, &up, d_start, min_samples);
            sdas.push(SteepDownArea {
                start: d_start,
                end: d_end,
                mib: 0.0,
            });
            index = d_end + 1;
            mib = plot[index.min(n)];
        } else {
            filter_sdas(&mut sdas, mib, xi_complement, &plot);
            let u_start = steep_index;
            let u_end = extend_region(&steep_up, &down, u_start, min_samples);
            index = u_end + 1;
            mib = plot[index.min(n)];

            let mut found: Vec<(usize, usize)> = Vec::new();
            for area in &sdas {
                let mut c_start = area.start;
                let mut c_end = u_end;
                // Reject if something higher than the area's max-in-between
                // follows the candidate cluster.
                if plot[c_end + 1] * xi_complement < area.mib {
                    continue;
                }
                // Trim the higher side down to the level of the lower side.
                let d_max = plot[area.start];
                if d_max * xi_complement >= plot[c_end + 1] {
                    while c_start < area.end && plot[c_start + 1] > plot[c_end + 1] {
                        c_start += 1;
                    }
                } else if plot[c_end + 1] * xi_complement >= d_max {
                    while c_end > u_start && plot[c_end] > d_max {
                        c_end -= 1;
                    }
                }
                if c_end < c_start || c_end - c_start + 1 < min_cluster_size {
                    continue;
                }
                if c_start > area.end || c_end < u_start {
                    continue;
                }
                found.push((c_start, c_end));
            }
            found.reverse();
            clusters.extend(found);
        }
    }
    // A cluster spanning every point is the flat-plot artifact.
    clusters.retain(|&(s, e)| !(s == 0 && e + 1 == n));
    clusters
}

fn filter_sdas(sdas: &mut Vec<SteepDownArea>, mib: f64, xi_complement: f64, plot: &[f64]) {
    if mib.is_infinite() {
        sdas.clear();
        return;
    }
    sdas.retain(|area| mib <= plot[area.start] * xi_complement);
    for area in sdas.iter_mut() {
        area.mib = area.mib.max(mib);
    }
}

/// Widen a steep region: it may absorb up to `max_flat` consecutive
/// non-steep points as long as the plot keeps moving the same way.
fn extend_region(steep: &[bool], opposite: &[bool], start: usize, max_flat: usize) -> usize {
    let mut flat = 0usize;
    let mut end = start;
    let mut index = start;
    while index < steep.len() {
        if steep[index] {
            flat = 0;
            end = index;
        } else if !opposite[index] {
            flat += 1;
            if flat > max_flat {
                break;
            }
        } else {
            return end;
        }
        index += 1;
    }
    end
}

/// Leaf-first labeling: a range only gets a label if none of its points are
/// labeled yet.
fn labels_from_clusters(n: usize, clusters: &[(usize, usize)]) -> Vec<i64> {
    let mut labels = vec![NOISE; n];
    let mut next = 0i64;
    for &(start, end) in clusters {
        if labels[start..=end].iter().all(|&l| l == NOISE) {
            for label in &mut labels[start..=end] {
                *label = next;
            }
            next += 1;
        }
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn pt(id: &str, values: Vec<f64>) -> (CveId, FeatureVector) {
        (
            CveId::parse(id).unwrap(),
            FeatureVector::new(values).l2_normalized(),
        )
    }

    fn two_groups() -> Vec<(CveId, FeatureVector)> {
        let mut points = Vec::new();
        for i in 0..6 {
            points.push(pt(
                &format!("CVE-2020-000{}", i + 1),
                vec![1.0, 0.005 * i as f64, 0.0],
            ));
        }
        for i in 0..6 {
            points.push(pt(
                &format!("CVE-2020-010{}", i + 1),
                vec![0.0, 0.005 * i as f64, 1.0],
            ));
        }
        points
    }

    #[test]
    fn well_separated_groups_cluster_like_dbscan() {
        let points = two_groups();
        let result = optics(&points, 3, 0.05).unwrap();
        let dbscan = super::super::dbscan(&points, 0.2, 3).unwrap();
        // Same partition on the dense cores (noise handling may differ).
        for group in ["CVE-2020-000", "CVE-2020-010"] {
            let optics_labels: BTreeSet<i64> = result
                .labels
                .iter()
                .filter(|(id, _)| id.as_str().starts_with(group))
                .map(|(_, &l)| l)
                .collect();
            let dbscan_labels: BTreeSet<i64> = dbscan
                .labels
                .iter()
                .filter(|(id, _)| id.as_str().starts_with(group))
                .map(|(_, &l)| l)
                .collect();
            assert_eq!(optics_labels.len(), 1, "{group} split by optics");
            assert_eq!(dbscan_labels.len(), 1, "{group} split by dbscan");
            assert_ne!(optics_labels, [NOISE].into());
        }
        let distinct: BTreeSet<i64> = result.labels.values().copied().filter(|&l| l >= 0).collect();
        assert_eq!(distinct.len(), 2);
    }

    #[test]
    fn single_point_is_noise() {
        let points = vec![pt("CVE-2020-0001", vec![1.0, 0.0])];
        let result = optics(&points, 2, 0.05).unwrap();
        assert_eq!(result.labels.values().copied().collect::<Vec<_>>(), [NOISE]);
        let plot = result.reachability.unwrap();
        assert_eq!(plot.len(), 1);
        assert!(plot[0].reachability.is_infinite());
    }

    #[test]
    fn uniform_scatter_extracts_no_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        // High dimension keeps mutual cosine distances tight around 1, so the
        // reachability plot stays flat relative to xi.
        let points: Vec<(CveId, FeatureVector)> = (0..60)
            .map(|i| {
                let values: Vec<f64> = (0..512).map(|_| rng.random::<f64>() - 0.5).collect();
                pt(&format!("CVE-2021-{:04}", 1000 + i), values)
            })
            .collect();
        let result = optics(&points, 5, 0.05).unwrap();
        let clustered = result.labels.values().filter(|&&l| l >= 0).count();
        assert_eq!(clustered, 0, "random scatter should not form steep regions");
    }

    #[test]
    fn invalid_xi_rejected() {
        let points = vec![pt("CVE-2020-0001", vec![1.0, 0.0])];
        assert!(optics(&points, 2, 0.0).is_err());
        assert!(optics(&points, 2, 1.0).is_err());
        assert!(optics(&points, 2, -0.3).is_err());
    }

    #[test]
    fn reachability_plot_is_exported_in_order() {
        let points = two_groups();
        let result = optics(&points, 3, 0.05).unwrap();
        let plot = result.reachability.as_ref().unwrap();
        assert_eq!(plot.len(), points.len());
        for (i, point) in plot.iter().enumerate() {
            assert_eq!(point.order, i);
        }
        assert!(plot[0].reachability.is_infinite());
        let mut csv = Vec::new();
        result.export_reachability_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("order,cve_id,reachability\n"));
        assert!(text.lines().count() == points.len() + 1);
    }

    #[test]
    fn labels_are_dense_nonnegative_or_noise() {
        let points = two_groups();
        let result = optics(&points, 3, 0.05).unwrap();
        let labels: BTreeSet<i64> = result.labels.values().copied().collect();
        let positives: Vec<i64> = labels.iter().copied().filter(|&l| l >= 0).collect();
        for (expect, &got) in positives.iter().enumerate() {
            assert_eq!(expect as i64, got);
        }
    }
}
