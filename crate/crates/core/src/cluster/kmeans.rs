//! Seeded Lloyd's algorithm with k-means++ initialization. Exists as the
//! comparison baseline for the clustering experiment; the production path
//! uses the density algorithms.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::corpus::CveId;
use crate::error::{Error, Result};
use crate::textfeat::FeatureVector;

use super::{prepare_points, ClusterAssignment, ClusterParams};

const MAX_ITERATIONS: usize = 300;
const RELATIVE_TOLERANCE: f64 = 1e-4;

pub fn kmeans_baseline(
    points: &[(CveId, FeatureVector)],
    k: usize,
    seed: u64,
) -> Result<ClusterAssignment> {
    if k < 1 {
        return Err(Error::validation("k must be at least 1"));
    }
    let (ids, vectors) = prepare_points(points)?;
    let n = ids.len();
    if k > n {
        return Err(Error::validation(format!(
            "k {k} exceeds the number of points {n}"
        )));
    }
    let dim = vectors[0].dimension();
    let rows: Vec<&[f64]> = vectors.iter().map(|v| v.values()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_seeding(&rows, k, &mut rng);

    let mut assignment = vec![0usize; n];
    let mut previous_inertia = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        let mut inertia = 0.0;
        for (i, row) in rows.iter().enumerate() {
            let (best, d2) = nearest_center(row, &centers);
            assignment[i] = best;
            inertia += d2;
        }

        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, row) in rows.iter().enumerate() {
            counts[assignment[i]] += 1;
            for (s, &v) in sums[assignment[i]].iter_mut().zip(row.iter()) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Re-seed an empty cluster at the point farthest from its center.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_distance(rows[a], &centers[assignment[a]])
                            .total_cmp(&sq_distance(rows[b], &centers[assignment[b]]))
                    })
                    .expect("points are non-empty");
                centers[c] = rows[far].to_vec();
                assignment[far] = c;
            } else {
                for (j, s) in sums[c].iter().enumerate() {
                    centers[c][j] = s / counts[c] as f64;
                }
            }
        }

        let converged = previous_inertia.is_finite()
            && (previous_inertia - inertia).abs()
                <= RELATIVE_TOLERANCE * previous_inertia.max(f64::MIN_POSITIVE);
        previous_inertia = inertia;
        if converged {
            break;
        }
    }

    // Final assignment against the converged centers, with dense relabeling.
    for (i, row) in rows.iter().enumerate() {
        assignment[i] = nearest_center(row, &centers).0;
    }
    let mut relabel = vec![usize::MAX; k];
    let mut next = 0usize;
    let labels: Vec<i64> = assignment
        .iter()
        .map(|&c| {
            if relabel[c] == usize::MAX {
                relabel[c] = next;
                next += 1;
            }
            relabel[c] as i64
        })
        .collect();

    Ok(ClusterAssignment {
        labels: ids.into_iter().zip(labels).collect(),
        params: ClusterParams::Kmeans { k, seed },
        reachability: None,
    })
}

fn plus_plus_seeding(rows: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(rows[rng.random_range(0..n)].to_vec());
    let mut d2: Vec<f64> = rows
        .iter()
        .map(|row| sq_distance(row, &centers[0]))
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let chosen = if total <= 0.0 {
            // All remaining points coincide with a center; take the first
            // index that is not one already.
            (0..n)
                .find(|&i| !centers.iter().any(|c| c.as_slice() == rows[i]))
                .unwrap_or(0)
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        };
        centers.push(rows[chosen].to_vec());
        for (i, row) in rows.iter().enumerate() {
            let d = sq_distance(row, centers.last().unwrap());
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centers
}

/// Lowest index wins ties.
fn nearest_center(row: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (c, center) in centers.iter().enumerate() {
        let d = sq_distance(row, center);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    (best, best_d)
}

fn sq_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}
