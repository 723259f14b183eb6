//! Candidate configuration enumeration and risk ranking.
//!
//! Security risk sums the weighted score of every vulnerability on every
//! node; a CVE hitting k nodes contributes k times. Resilience risk sums
//! the weighted score of vulnerabilities shared between node pairs, where
//! "shared" means a common affected product or co-membership in a
//! description cluster.
//!
//! Floating-point sums always run in one canonical order (nodes and pairs
//! by name, CVEs by ascending id), so results are bit-reproducible across
//! runs and parallel schedules.

use std::collections::{BTreeMap, BTreeSet};

use itertools::Itertools;
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{CorpusSnapshot, CveId, NodeIdentity};
use crate::error::{Error, Result};
use crate::scoring::AssessedScore;

/// An ordered set of nodes; canonical order is ascending name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Configuration {
    nodes: Vec<NodeIdentity>,
}

impl Configuration {
    pub fn new(mut nodes: Vec<NodeIdentity>) -> Result<Self> {
        nodes.sort_by(|a, b| a.name.cmp(&b.name));
        for pair in nodes.windows(2) {
            if pair[0].name == pair[1].name {
                return Err(Error::validation(format!(
                    "duplicate node {} in configuration",
                    pair[0].name
                )));
            }
        }
        Ok(Configuration { nodes })
    }

    pub fn nodes(&self) -> &[NodeIdentity] {
        &self.nodes
    }

    pub fn names(&self) -> Vec<&str> {
        self.nodes.iter().map(|n| n.name.as_str()).collect()
    }
}

/// Ranking policy. All orders are ascending (lower risk is better) and end
/// with a lexicographic node-name tie-break, so the order is total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    /// Ascending (resilience, security). The default.
    ResilienceFirst,
    /// Ascending (security, resilience).
    SecurityFirst,
    /// Ascending `alpha * resilience + (1 - alpha) * security`.
    Weighted(f64),
}

impl Policy {
    pub fn validate(&self) -> Result<()> {
        if let Policy::Weighted(alpha) = self {
            if !(0.0..=1.0).contains(alpha) {
                return Err(Error::validation(format!("alpha {alpha} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SharedVia {
    Products,
    Cluster,
    Both,
}

#[derive(Debug, Clone, Serialize)]
pub struct SharedEntry {
    pub cve_id: CveId,
    pub via: SharedVia,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairDetail {
    pub nodes: [String; 2],
    pub cves: Vec<SharedEntry>,
}

/// A configuration with both risk values; `shared_detail` explains which
/// CVEs drove the resilience risk when explanation was requested.
#[derive(Debug, Clone, Serialize)]
pub struct RiskReport {
    pub configuration: Configuration,
    pub security: f64,
    pub resilience: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shared_detail: Option<Vec<PairDetail>>,
}

/// All CVEs whose affected products intersect the node's installed keys.
pub fn vulnerabilities_of(node: &NodeIdentity, snapshot: &CorpusSnapshot) -> BTreeSet<CveId> {
    snapshot
        .records()
        .values()
        .filter(|r| !r.products.is_disjoint(&node.product_keys))
        .map(|r| r.id.clone())
        .collect()
}

/// Vulnerabilities shared between two distinct nodes: the intersection of
/// their vulnerability sets, plus every member of a description cluster
/// that touches both nodes and hits at least one of them.
pub fn shared_vulnerabilities(
    a: &NodeIdentity,
    b: &NodeIdentity,
    snapshot: &CorpusSnapshot,
    groups: &[BTreeSet<CveId>],
) -> Result<BTreeSet<CveId>> {
    if a.name == b.name {
        return Err(Error::validation(format!(
            "shared vulnerabilities need two distinct nodes, got {} twice",
            a.name
        )));
    }
    let va = vulnerabilities_of(a, snapshot);
    let vb = vulnerabilities_of(b, snapshot);
    Ok(shared_from_sets(&va, &vb, groups))
}

fn shared_from_sets(
    va: &BTreeSet<CveId>,
    vb: &BTreeSet<CveId>,
    groups: &[BTreeSet<CveId>],
) -> BTreeSet<CveId> {
    let mut shared: BTreeSet<CveId> = va.intersection(vb).cloned().collect();
    for group in groups {
        let hits_a = group.iter().any(|id| va.contains(id));
        let hits_b = group.iter().any(|id| vb.contains(id));
        if hits_a && hits_b {
            shared.extend(
                group
                    .iter()
                    .filter(|id| va.contains(*id) || vb.contains(*id))
                    .cloned(),
            );
        }
    }
    shared
}

fn weighted_of(assessed: &BTreeMap<CveId, AssessedScore>, id: &CveId) -> Result<f64> {
    assessed
        .get(id)
        .map(|a| a.weighted)
        .ok_or_else(|| Error::validation(format!("no assessment for {id}")))
}

/// Sum of weighted scores over every node's vulnerability set, in canonical
/// order.
pub fn security_risk(
    config: &Configuration,
    assessed: &BTreeMap<CveId, AssessedScore>,
    snapshot: &CorpusSnapshot,
) -> Result<f64> {
    let mut total = 0.0;
    for node in config.nodes() {
        for id in &vulnerabilities_of(node, snapshot) {
            total += weighted_of(assessed, id)?;
        }
    }
    Ok(total)
}

/// Sum of weighted scores over every unordered node pair's shared set, each
/// pair counted once, in canonical order.
pub fn resil_risk(
    config: &Configuration,
    assessed: &BTreeMap<CveId, AssessedScore>,
    snapshot: &CorpusSnapshot,
    groups: &[BTreeSet<CveId>],
) -> Result<f64> {
    let nodes = config.nodes();
    let mut total = 0.0;
    for i in 0..nodes.len() {
        for j in (i + 1)..nodes.len() {
            let shared = shared_vulnerabilities(&nodes[i], &nodes[j], snapshot, groups)?;
            for id in &shared {
                total += weighted_of(assessed, id)?;
            }
        }
    }
    Ok(total)
}

/// All size-`n` node combinations in lexicographic name order, streamed.
pub fn enumerate_configurations(
    catalog: &[NodeIdentity],
    n: usize,
) -> Result<impl Iterator<Item = Configuration> + '_> {
    if n < 1 || n > catalog.len() {
        return Err(Error::validation(format!(
            "configuration size {n} outside 1..={}",
            catalog.len()
        )));
    }
    let mut sorted: Vec<&NodeIdentity> = catalog.iter().collect();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    for pair in sorted.windows(2) {
        if pair[0].name == pair[1].name {
            return Err(Error::validation(format!(
                "duplicate node name {} in catalog",
                pair[0].name
            )));
        }
    }
    Ok(sorted.into_iter().combinations(n).map(|nodes| Configuration {
        nodes: nodes.into_iter().cloned().collect(),
    }))
}

/// Evaluate and rank every configuration of `n` nodes from the catalog.
/// Returns the full ranking, best first; the head is the recommendation.
pub fn advise(
    catalog: &[NodeIdentity],
    n: usize,
    policy: Policy,
    assessed: &BTreeMap<CveId, AssessedScore>,
    snapshot: &CorpusSnapshot,
    groups: &[BTreeSet<CveId>],
    explain: bool,
) -> Result<Vec<RiskReport>> {
    policy.validate()?;
    let configurations: Vec<Configuration> = enumerate_configurations(catalog, n)?.collect();

    // V(n) per catalog node and shared sets per catalog pair, computed once.
    let vuln_sets: BTreeMap<&str, BTreeSet<CveId>> = catalog
        .iter()
        .map(|node| (node.name.as_str(), vulnerabilities_of(node, snapshot)))
        .collect();
    let mut pair_shared: BTreeMap<(&str, &str), BTreeSet<CveId>> = BTreeMap::new();
    let mut sorted_names: Vec<&str> = catalog.iter().map(|n| n.name.as_str()).collect();
    sorted_names.sort_unstable();
    for i in 0..sorted_names.len() {
        for j in (i + 1)..sorted_names.len() {
            let (a, b) = (sorted_names[i], sorted_names[j]);
            pair_shared.insert((a, b), shared_from_sets(&vuln_sets[a], &vuln_sets[b], groups));
        }
    }

    let mut reports: Vec<RiskReport> = configurations
        .into_par_iter()
        .map(|config| -> Result<RiskReport> {
            let mut security = 0.0;
            for node in config.nodes() {
                for id in &vuln_sets[node.name.as_str()] {
                    security += weighted_of(assessed, id)?;
                }
            }
            let names = config.names();
            let mut resilience = 0.0;
            for i in 0..names.len() {
                for j in (i + 1)..names.len() {
                    for id in &pair_shared[&(names[i], names[j])] {
                        resilience += weighted_of(assessed, id)?;
                    }
                }
            }
            let shared_detail = explain.then(|| {
                let mut details = Vec::new();
                for i in 0..names.len() {
                    for j in (i + 1)..names.len() {
                        let (a, b) = (names[i], names[j]);
                        let product_shared: BTreeSet<&CveId> =
                            vuln_sets[a].intersection(&vuln_sets[b]).collect();
                        let cves = pair_shared[&(a, b)]
                            .iter()
                            .map(|id| SharedEntry {
                                cve_id: id.clone(),
                                via: match product_shared.contains(id) {
                                    true if cluster_shared(id, groups, &vuln_sets[a], &vuln_sets[b]) => SharedVia::Both,
                                    true => SharedVia::Products,
                                    false => SharedVia::Cluster,
                                },
                            })
                            .collect();
                        details.push(PairDetail {
                            nodes: [a.to_string(), b.to_string()],
                            cves,
                        });
                    }
                }
                details
            });
            Ok(RiskReport {
                configuration: config,
                security,
                resilience,
                shared_detail,
            })
        })
        .collect::<Result<_>>()?;

    reports.sort_by(|x, y| rank_order(policy, x, y));
    Ok(reports)
}

fn cluster_shared(
    id: &CveId,
    groups: &[BTreeSet<CveId>],
    va: &BTreeSet<CveId>,
    vb: &BTreeSet<CveId>,
) -> bool {
    groups.iter().any(|group| {
        group.contains(id)
            && group.iter().any(|m| va.contains(m))
            && group.iter().any(|m| vb.contains(m))
    })
}

fn rank_order(policy: Policy, a: &RiskReport, b: &RiskReport) -> std::cmp::Ordering {
    let primary = match policy {
        Policy::ResilienceFirst => a
            .resilience
            .total_cmp(&b.resilience)
            .then_with(|| a.security.total_cmp(&b.security)),
        Policy::SecurityFirst => a
            .security
            .total_cmp(&b.security)
            .then_with(|| a.resilience.total_cmp(&b.resilience)),
        Policy::Weighted(alpha) => {
            let ka = alpha * a.resilience + (1.0 - alpha) * a.security;
            let kb = alpha * b.resilience + (1.0 - alpha) * b.security;
            ka.total_cmp(&kb)
        }
    };
    primary.then_with(|| a.configuration.names().cmp(&b.configuration.names()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_snapshot, CveRecord, CveStatus, CvssVersion};
    use crate::scoring::assess_all;
    use chrono::NaiveDate;

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn record(id: &str, products: &[&str], base: f64) -> CveRecord {
        CveRecord {
            id: CveId::parse(id).unwrap(),
            description: format!("flaw {id}"),
            published: date("2023-01-01"),
            modified: date("2023-01-10"),
            status: CveStatus::Analyzed,
            cvss_base: Some(base),
            cvss_version: Some(CvssVersion::V3),
            metrics: None,
            products: products.iter().map(|p| p.to_string()).collect(),
            patched: false,
            exploited: false,
        }
    }

    fn node(name: &str, keys: &[&str]) -> NodeIdentity {
        NodeIdentity::new(name, keys.iter().map(|k| k.to_string()))
    }

    fn fixture() -> (CorpusSnapshot, BTreeMap<CveId, AssessedScore>) {
        let catalog = vec![
            node("alpha", &["a:a:1", "shared:lib:1"]),
            node("beta", &["b:b:1", "shared:lib:1"]),
            node("gamma", &["c:c:1"]),
            node("delta", &["d:d:1"]),
        ];
        let records = vec![
            record("CVE-2023-1001", &["a:a:1"], 5.0),
            record("CVE-2023-1002", &["shared:lib:1"], 7.0),
            record("CVE-2023-1003", &["c:c:1"], 2.0),
            record("CVE-2023-1004", &["a:a:1", "c:c:1", "d:d:1"], 4.0),
        ];
        let snapshot = build_snapshot(
            records,
            &[],
            &BTreeSet::new(),
            catalog,
            date("2023-06-01"),
        )
        .unwrap();
        let assessed = assess_all(&snapshot, &BTreeMap::new()).unwrap();
        (snapshot, assessed)
    }

    fn id(s: &str) -> CveId {
        CveId::parse(s).unwrap()
    }

    #[test]
    fn vulnerabilities_of_matches_products() {
        let (snapshot, _) = fixture();
        let alpha = by_name(&snapshot, "alpha");
        let vulns = vulnerabilities_of(alpha, &snapshot);
        assert_eq!(
            vulns,
            [id("CVE-2023-1001"), id("CVE-2023-1002"), id("CVE-2023-1004")].into()
        );
        let unmatched = node("omega", &["z:z:9"]);
        assert!(vulnerabilities_of(&unmatched, &snapshot).is_empty());
    }

    #[test]
    fn multi_product_cve_counts_once_per_node() {
        let (snapshot, _) = fixture();
        let both = node("omega", &["a:a:1", "c:c:1"]);
        let vulns = vulnerabilities_of(&both, &snapshot);
        assert_eq!(vulns.iter().filter(|v| *v == &id("CVE-2023-1004")).count(), 1);
    }

    #[test]
    fn shared_requires_distinct_nodes() {
        let (snapshot, _) = fixture();
        let alpha = by_name(&snapshot, "alpha");
        assert!(shared_vulnerabilities(alpha, alpha, &snapshot, &[]).is_err());
    }

    #[test]
    fn product_intersection_is_shared() {
        let (snapshot, _) = fixture();
        let alpha = by_name(&snapshot, "alpha");
        let beta = by_name(&snapshot, "beta");
        let shared = shared_vulnerabilities(alpha, beta, &snapshot, &[]).unwrap();
        assert_eq!(shared, [id("CVE-2023-1002")].into());
    }

    fn by_name<'a>(snapshot: &'a CorpusSnapshot, name: &str) -> &'a NodeIdentity {
        snapshot.catalog().iter().find(|n| n.name == name).unwrap()
    }

    #[test]
    fn cluster_groups_bridge_disjoint_products() {
        let (snapshot, _) = fixture();
        let alpha = by_name(&snapshot, "alpha"); // hits 1001
        let gamma = by_name(&snapshot, "gamma"); // hits 1003
        let group: BTreeSet<CveId> = [id("CVE-2023-1001"), id("CVE-2023-1003")].into();
        let shared = shared_vulnerabilities(alpha, gamma, &snapshot, &[group]).unwrap();
        // Cluster-bridged pair plus the CVE they share by products.
        assert_eq!(
            shared,
            [id("CVE-2023-1001"), id("CVE-2023-1003"), id("CVE-2023-1004")].into()
        );
        // Without the cluster there is still the triple-product CVE.
        let shared_plain = shared_vulnerabilities(alpha, gamma, &snapshot, &[]).unwrap();
        assert_eq!(shared_plain, [id("CVE-2023-1004")].into());
    }

    #[test]
    fn security_risk_counts_multiplicity() {
        let (snapshot, assessed) = fixture();
        // CVE-2023-1004 hits alpha, gamma, delta: contributes three times.
        let config = Configuration::new(vec![
            by_name(&snapshot, "alpha").clone(),
            by_name(&snapshot, "gamma").clone(),
            by_name(&snapshot, "delta").clone(),
        ])
        .unwrap();
        let w = |i: &str| assessed[&id(i)].weighted;
        let expected = w("CVE-2023-1001") + w("CVE-2023-1002") + w("CVE-2023-1004")
            + w("CVE-2023-1003") + w("CVE-2023-1004")
            + w("CVE-2023-1004");
        let got = security_risk(&config, &assessed, &snapshot).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn resil_risk_counts_each_pair_once() {
        let (snapshot, assessed) = fixture();
        // Three nodes all sharing CVE-2023-1004: 3 pairs, one term each.
        let config = Configuration::new(vec![
            by_name(&snapshot, "alpha").clone(),
            by_name(&snapshot, "gamma").clone(),
            by_name(&snapshot, "delta").clone(),
        ])
        .unwrap();
        let got = resil_risk(&config, &assessed, &snapshot, &[]).unwrap();
        let w = assessed[&id("CVE-2023-1004")].weighted;
        assert!((got - 3.0 * w).abs() < 1e-12);
    }

    #[test]
    fn resil_risk_zero_without_sharing() {
        let (snapshot, assessed) = fixture();
        let config = Configuration::new(vec![
            by_name(&snapshot, "beta").clone(),
            by_name(&snapshot, "gamma").clone(),
        ])
        .unwrap();
        // beta and gamma share no product CVE.
        let got = resil_risk(&config, &assessed, &snapshot, &[]).unwrap();
        assert_eq!(got, 0.0);
    }

    #[test]
    fn enumeration_counts_and_order() {
        let (snapshot, _) = fixture();
        let configs: Vec<Configuration> =
            enumerate_configurations(snapshot.catalog(), 3).unwrap().collect();
        assert_eq!(configs.len(), 4); // C(4,3)
        assert_eq!(configs[0].names(), ["alpha", "beta", "delta"]);
        let all: Vec<Configuration> =
            enumerate_configurations(snapshot.catalog(), 4).unwrap().collect();
        assert_eq!(all.len(), 1);
        assert!(enumerate_configurations(snapshot.catalog(), 0).is_err());
        assert!(enumerate_configurations(snapshot.catalog(), 5).is_err());
    }

    #[test]
    fn advise_policies_pick_different_heads() {
        let (snapshot, assessed) = fixture();
        let ranking = advise(
            snapshot.catalog(),
            2,
            Policy::ResilienceFirst,
            &assessed,
            &snapshot,
            &[],
            false,
        )
        .unwrap();
        assert_eq!(ranking.len(), 6); // C(4,2)
        // Resilience-first: any pair without shared CVEs beats alpha+beta.
        assert_eq!(ranking[0].resilience, 0.0);

        let security_first = advise(
            snapshot.catalog(),
            2,
            Policy::SecurityFirst,
            &assessed,
            &snapshot,
            &[],
            false,
        )
        .unwrap();
        let best = &security_first[0];
        for other in &security_first[1..] {
            assert!(best.security <= other.security);
        }
    }

    #[test]
    fn advise_tie_break_is_alphabetical() {
        let catalog = vec![
            node("n-a", &["x:one:1"]),
            node("n-b", &["x:two:1"]),
            node("n-c", &["x:three:1"]),
        ];
        let records = vec![record("CVE-2023-2001", &["q:q:1"], 5.0)];
        let snapshot =
            build_snapshot(records, &[], &BTreeSet::new(), catalog, date("2023-06-01")).unwrap();
        let assessed = assess_all(&snapshot, &BTreeMap::new()).unwrap();
        // No node has any vulnerability: all risks equal, names decide.
        let ranking = advise(
            snapshot.catalog(),
            2,
            Policy::ResilienceFirst,
            &assessed,
            &snapshot,
            &[],
            false,
        )
        .unwrap();
        assert_eq!(ranking[0].configuration.names(), ["n-a", "n-b"]);
        assert_eq!(ranking[1].configuration.names(), ["n-a", "n-c"]);
    }

    #[test]
    fn advise_explain_traces_pairs() {
        let (snapshot, assessed) = fixture();
        let group: BTreeSet<CveId> = [id("CVE-2023-1001"), id("CVE-2023-1003")].into();
        let ranking = advise(
            snapshot.catalog(),
            2,
            Policy::ResilienceFirst,
            &assessed,
            &snapshot,
            &[group],
            true,
        )
        .unwrap();
        let with_pair = ranking
            .iter()
            .find(|r| r.configuration.names() == ["alpha", "gamma"])
            .unwrap();
        let detail = with_pair.shared_detail.as_ref().unwrap();
        assert_eq!(detail.len(), 1);
        let vias: BTreeMap<&str, SharedVia> = detail[0]
            .cves
            .iter()
            .map(|e| (e.cve_id.as_str(), e.via))
            .collect();
        assert_eq!(vias["CVE-2023-1001"], SharedVia::Cluster);
        assert_eq!(vias["CVE-2023-1004"], SharedVia::Products);
    }

    #[test]
    fn missing_assessment_is_an_error() {
        let (snapshot, mut assessed) = fixture();
        assessed.remove(&id("CVE-2023-1002"));
        let config = Configuration::new(vec![by_name(&snapshot, "alpha").clone()]).unwrap();
        assert!(security_risk(&config, &assessed, &snapshot).is_err());
    }
}
