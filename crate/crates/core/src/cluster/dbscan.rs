//! Density-based clustering with noise.
//!
//! A point is core iff at least `min_samples` points (itself included) lie
//! within cosine distance `eps`. Clusters are the density-connected
//! components of core points; a non-core point within `eps` of a core point
//! joins the first cluster that reaches it in processing order; everything
//! else is noise.

use rayon::prelude::*;

use crate::corpus::CveId;
use crate::error::{Error, Result};
use crate::textfeat::FeatureVector;

use super::{distance, prepare_points, ClusterAssignment, ClusterParams, NOISE};

pub fn dbscan(
    points: &[(CveId, FeatureVector)],
    eps: f64,
    min_samples: usize,
) -> Result<ClusterAssignment> {
    if eps <= 0.0 {
        return Err(Error::validation(format!("eps {eps} must be positive")));
    }
    if min_samples < 1 {
        return Err(Error::validation("min_samples must be at least 1"));
    }
    let (ids, vectors) = prepare_points(points)?;
    let n = ids.len();

    // Closed-ball neighborhoods, each point includes itself.
    let neighbors: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .filter(|&j| distance(vectors[i], vectors[j]) <= eps)
                .collect()
        })
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|ns| ns.len() >= min_samples).collect();

    let mut labels = vec![NOISE; n];
    let mut assigned = vec![false; n];
    let mut next_cluster = 0i64;
    for start in 0..n {
        if assigned[start] || !core[start] {
            continue;
        }
        assigned[start] = true;
        labels[start] = next_cluster;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbors[p] {
                if assigned[q] {
                    continue;
                }
                assigned[q] = true;
                labels[q] = next_cluster;
                if core[q] {
                    queue.push_back(q);
                }
            }
        }
        next_cluster += 1;
    }

    Ok(ClusterAssignment {
        labels: ids.into_iter().zip(labels).collect(),
        params: ClusterParams::Dbscan { eps, min_samples },
        reachability: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn pt(id: &str, values: Vec<f64>) -> (CveId, FeatureVector) {
        (
            CveId::parse(id).unwrap(),
            FeatureVector::new(values).l2_normalized(),
        )
    }

    #[test]
    fn identical_vectors_form_one_cluster() {
        let points = vec![
            pt("CVE-2020-0001", vec![1.0, 0.0]),
            pt("CVE-2020-0002", vec![1.0, 0.0]),
            pt("CVE-2020-0003", vec![1.0, 0.0]),
        ];
        let result = dbscan(&points, 0.1, 2).unwrap();
        let labels: BTreeSet<i64> = result.labels.values().copied().collect();
        assert_eq!(labels, [0].into());
    }

    #[test]
    fn distant_points_are_noise() {
        let points = vec![
            pt("CVE-2020-0001", vec![1.0, 0.0, 0.0]),
            pt("CVE-2020-0002", vec![0.0, 1.0, 0.0]),
            pt("CVE-2020-0003", vec![0.0, 0.0, 1.0]),
        ];
        let result = dbscan(&points, 0.2, 2).unwrap();
        assert!(result.labels.values().all(|&l| l == NOISE));
    }

    #[test]
    fn two_separated_groups_make_two_clusters() {
        let mut points = Vec::new();
        for i in 0..4 {
            points.push(pt(&format!("CVE-2020-000{}", i + 1), vec![1.0, 0.01 * i as f64]));
        }
        for i in 0..4 {
            points.push(pt(&format!("CVE-2020-010{}", i + 1), vec![0.01 * i as f64, 1.0]));
        }
        let result = dbscan(&points, 0.1, 3).unwrap();
        let labels: BTreeSet<i64> = result.labels.values().copied().collect();
        assert_eq!(labels, [0, 1].into());
        // First group processed first gets label 0.
        assert_eq!(result.labels[&CveId::parse("CVE-2020-0001").unwrap()], 0);
        assert_eq!(result.labels[&CveId::parse("CVE-2020-0101").unwrap()], 1);
    }

    #[test]
    fn rejects_bad_parameters() {
        let points = vec![pt("CVE-2020-0001", vec![1.0, 0.0])];
        assert!(dbscan(&points, 0.0, 2).is_err());
        assert!(dbscan(&points, -1.0, 2).is_err());
        assert!(dbscan(&points, 0.5, 0).is_err());
        assert!(dbscan(&[], 0.5, 2).is_err());
    }

    #[test]
    fn input_order_does_not_change_labels() {
        let mut points = vec![
            pt("CVE-2020-0003", vec![1.0, 0.0]),
            pt("CVE-2020-0001", vec![1.0, 0.02]),
            pt("CVE-2020-0002", vec![0.0, 1.0]),
            pt("CVE-2020-0004", vec![1.0, 0.01]),
        ];
        let forward = dbscan(&points, 0.1, 2).unwrap();
        points.reverse();
        let backward = dbscan(&points, 0.1, 2).unwrap();
        assert_eq!(forward.labels, backward.labels);
    }
}
