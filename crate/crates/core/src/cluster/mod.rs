//! Description-similarity clustering.
//!
//! Groups CVEs whose descriptions are close in feature space so that the
//! same flaw filed under different ids counts as shared across products.
//! Distance is cosine on normalized vectors throughout. All algorithms are
//! deterministic: points are processed in ascending id order and ties break
//! by id.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::corpus::CveId;
use crate::error::{Error, Result};
use crate::textfeat::{cosine_distance, FeatureVector};

mod dbscan;
mod kmeans;
mod optics;

pub use dbscan::dbscan;
pub use kmeans::kmeans_baseline;
pub use optics::optics;

pub const NOISE: i64 = -1;

/// Parameters a clustering ran with, kept alongside its labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum ClusterParams {
    Dbscan { eps: f64, min_samples: usize },
    Optics { min_samples: usize, xi: f64 },
    Kmeans { k: usize, seed: u64 },
}

/// One point of an OPTICS reachability plot, in traversal order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReachabilityPoint {
    pub order: usize,
    pub cve_id: CveId,
    pub reachability: f64,
}

/// Labels for every input id: -1 for noise, otherwise dense cluster indices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterAssignment {
    pub labels: BTreeMap<CveId, i64>,
    pub params: ClusterParams,
    /// Populated by OPTICS only.
    pub reachability: Option<Vec<ReachabilityPoint>>,
}

impl ClusterAssignment {
    /// Number of distinct non-noise clusters.
    pub fn cluster_count(&self) -> usize {
        self.labels
            .values()
            .filter(|&&l| l != NOISE)
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Write `cve_id,label` rows.
    pub fn export_labels_csv(&self, mut w: impl std::io::Write) -> Result<()> {
        writeln!(w, "cve_id,label")?;
        for (id, label) in &self.labels {
            writeln!(w, "{id},{label}")?;
        }
        Ok(())
    }

    /// Write `order,cve_id,reachability` rows (OPTICS only).
    pub fn export_reachability_csv(&self, mut w: impl std::io::Write) -> Result<()> {
        let plot = self
            .reachability
            .as_ref()
            .ok_or_else(|| Error::validation("no reachability data; not an OPTICS assignment"))?;
        writeln!(w, "order,cve_id,reachability")?;
        for point in plot {
            writeln!(w, "{},{},{}", point.order, point.cve_id, point.reachability)?;
        }
        Ok(())
    }
}

/// Sets of CVEs that landed in the same non-noise cluster, one set per
/// cluster with at least two members, in ascending label order.
pub fn shared_groups(assignment: &ClusterAssignment) -> Vec<BTreeSet<CveId>> {
    let mut by_label: BTreeMap<i64, BTreeSet<CveId>> = BTreeMap::new();
    for (id, &label) in &assignment.labels {
        if label != NOISE {
            by_label.entry(label).or_default().insert(id.clone());
        }
    }
    by_label
        .into_values()
        .filter(|members| members.len() >= 2)
        .collect()
}

/// Sort points by id, validate dimensions, reject duplicates and emptiness.
pub(crate) fn prepare_points(
    points: &[(CveId, FeatureVector)],
) -> Result<(Vec<CveId>, Vec<&FeatureVector>)> {
    if points.is_empty() {
        return Err(Error::validation("clustering needs at least one point"));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].0.cmp(&points[b].0));
    let dimension = points[0].1.dimension();
    let mut ids = Vec::with_capacity(points.len());
    let mut vectors = Vec::with_capacity(points.len());
    for &i in &order {
        let (id, vector) = &points[i];
        if vector.dimension() != dimension {
            return Err(Error::validation(format!(
                "{id}: dimension {} differs from {dimension}",
                vector.dimension()
            )));
        }
        ids.push(id.clone());
        vectors.push(vector);
    }
    for pair in ids.windows(2) {
        if pair[0] == pair[1] {
            return Err(Error::validation(format!("duplicate point id {}", pair[0])));
        }
    }
    Ok((ids, vectors))
}

pub(crate) fn distance(a: &FeatureVector, b: &FeatureVector) -> f64 {
    cosine_distance(a, b).expect("dimensions validated by prepare_points")
}

#[cfg(test)]
pub(crate) fn assignment_from_labels(
    ids: &[&str],
    labels: &[i64],
    params: ClusterParams,
) -> ClusterAssignment {
    ClusterAssignment {
        labels: ids
            .iter()
            .zip(labels)
            .map(|(id, &l)| (CveId::parse(id).unwrap(), l))
            .collect(),
        params,
        reachability: None,
    }
}
