//! Synthetic dataset generation.
//!
//! Produces desk-scale vulnerability corpora with learnable structure: each
//! severity band has its own token pool, so a text classifier can recover the
//! score from the description, and a configurable number of near-duplicate
//! description groups is planted across nodes so density clustering has
//! something real to find.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Days, NaiveDate};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::textfeat::{tokenize, FeatureVector};

use super::{CveId, CveRecord, CveStatus, CvssVersion, EpssEntry, NodeIdentity};

/// The nine OS family labels the generator draws from.
pub const OS_FAMILIES: [&str; 9] = [
    "windows", "fedora", "ubuntu", "centos", "debian", "opensuse", "solaris", "openbsd", "freebsd",
];

/// (node name, family index, OS-specific key, extra package keys)
fn catalog_table() -> Vec<(&'static str, usize, &'static str, Vec<&'static str>)> {
    vec![
        ("windows-10", 0, "microsoft:windows:10", vec!["curl:curl:7.81", "zlib:zlib:1.2.13", "microsoft:office:2016"]),
        ("windows-11", 0, "microsoft:windows:11", vec!["curl:curl:7.81"]),
        ("windows-server-2019", 0, "microsoft:windows_server:2019", vec!["curl:curl:8.0", "microsoft:office:2016"]),
        ("fedora-37", 1, "fedoraproject:fedora:37", vec!["openssl:openssl:1.1.1", "zlib:zlib:1.2.13"]),
        ("fedora-38", 1, "fedoraproject:fedora:38", vec!["openssl:openssl:3.0", "openssh:openssh:9.3", "curl:curl:8.0"]),
        ("ubuntu-20.04", 2, "canonical:ubuntu_linux:20.04", vec!["openssl:openssl:1.1.1", "curl:curl:7.81", "samba:samba:4.15"]),
        ("ubuntu-22.04", 2, "canonical:ubuntu_linux:22.04", vec!["openssl:openssl:3.0", "openssh:openssh:8.9", "curl:curl:7.81"]),
        ("centos-7", 3, "centos:centos:7", vec!["openssl:openssl:1.1.1", "apache:http_server:2.4", "isc:bind:9.16"]),
        ("centos-stream-9", 3, "centos:centos_stream:9", vec!["openssl:openssl:3.0", "apache:http_server:2.4"]),
        ("debian-11", 4, "debian:debian_linux:11", vec!["openssl:openssl:1.1.1", "openssh:openssh:8.9", "apache:http_server:2.4", "samba:samba:4.15"]),
        ("debian-12", 4, "debian:debian_linux:12", vec!["openssl:openssl:3.0", "openssh:openssh:8.9", "curl:curl:8.0"]),
        ("opensuse-leap-15.4", 5, "opensuse:leap:15.4", vec!["openssl:openssl:1.1.1", "openssh:openssh:9.3", "samba:samba:4.15"]),
        ("solaris-11.4", 6, "oracle:solaris:11.4", vec!["apache:http_server:2.4", "isc:bind:9.16"]),
        ("openbsd-7.3", 7, "openbsd:openbsd:7.3", vec!["openssh:openssh:9.3", "zlib:zlib:1.2.13"]),
        ("freebsd-13.1", 8, "freebsd:freebsd:13.1", vec!["openssl:openssl:3.0", "openssh:openssh:8.9", "isc:bind:9.16"]),
        ("freebsd-13.2", 8, "freebsd:freebsd:13.2", vec!["openssl:openssl:3.0", "openssh:openssh:9.3"]),
    ]
}

/// The fixed sixteen-node catalog used by the generator and the demo fixture.
pub fn default_catalog() -> Vec<NodeIdentity> {
    catalog_table()
        .into_iter()
        .map(|(name, _, os_key, packages)| {
            let mut keys: BTreeSet<String> = packages.into_iter().map(str::to_string).collect();
            keys.insert(os_key.to_string());
            NodeIdentity {
                name: name.to_string(),
                product_keys: keys,
            }
        })
        .collect()
}

// Per-band token pools. Disjoint across bands and from the filler pool, so
// term presence carries the score signal.
const BAND_TOKENS: [[&str; 10]; 10] = [
    ["informational", "banner", "verbose", "cosmetic", "harmless", "logging", "trace", "noise", "typo", "whitespace"],
    ["fingerprint", "enumeration", "timing", "probe", "metadata", "hint", "reflection", "listing", "lookup", "sniffing"],
    ["redirect", "spoofing", "clickjacking", "downgrade", "weakened", "predictable", "cookie", "referer", "autocomplete", "plaintext"],
    ["traversal", "symlink", "race", "umask", "tempfile", "permission", "quota", "throttle", "lockout", "replay"],
    ["injection", "crlf", "smuggling", "deserialization", "xpath", "ldap", "formatstring", "entity", "expansion", "pollution"],
    ["scripting", "xss", "csrf", "session", "hijacking", "fixation", "sandbox", "escape", "bypass", "forgery"],
    ["sqli", "tampering", "truncation", "integer", "signedness", "casting", "exhaustion", "amplification", "recursion", "starvation"],
    ["overflow", "heap", "underflow", "offbyone", "oob", "bounds", "memcpy", "strcpy", "alloca", "smash"],
    ["useafterfree", "dangling", "doublefree", "typeconfusion", "uninitialized", "corruption", "grooming", "spray", "rop", "gadget"],
    ["wormable", "unauthenticated", "preauth", "rce", "root", "kernel", "takeover", "ring0", "implant", "beachhead"],
];

const FILLER_TOKENS: [&str; 36] = [
    "component", "handler", "module", "request", "response", "parser", "daemon", "driver",
    "library", "subsystem", "dispatcher", "protocol", "packet", "frame", "header", "buffer",
    "field", "payload", "stream", "socket", "client", "listener", "agent", "plugin",
    "filter", "router", "gateway", "proxy", "option", "parameter", "resource", "endpoint",
    "record", "table", "queue", "cache2",
];

/// How base scores are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreDistribution {
    /// Uniform over [0, 10]; every score band gets populated.
    Uniform,
    /// Triangular with the mode at 5; mimics the mid-heavy shape of real feeds.
    Central,
}

/// Parameters for [`generate_synthetic_dataset`].
#[derive(Debug, Clone)]
pub struct GeneratorSpec {
    pub total: usize,
    /// How many of the nine OS families to include (1..=9).
    pub families: usize,
    pub start: NaiveDate,
    pub end: NaiveDate,
    /// Fraction of records left unassessed (score withheld, kept as hidden truth).
    pub received_fraction: f64,
    pub patched_fraction: f64,
    pub exploited_fraction: f64,
    /// Fraction of records that get an EPSS row.
    pub epss_coverage: f64,
    /// Planted near-duplicate description groups (same flaw, different CVE ids).
    pub shared_groups: usize,
    pub shared_group_size: usize,
    /// Maximum days between publication and NVD evaluation completing.
    pub evaluation_lag_days: u64,
    pub score_distribution: ScoreDistribution,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            total: 400,
            families: 9,
            start: NaiveDate::from_ymd_opt(2022, 1, 1).unwrap(),
            end: NaiveDate::from_ymd_opt(2023, 12, 31).unwrap(),
            received_fraction: 0.2,
            patched_fraction: 0.6,
            exploited_fraction: 0.25,
            epss_coverage: 0.7,
            shared_groups: 6,
            shared_group_size: 6,
            evaluation_lag_days: 120,
            score_distribution: ScoreDistribution::Uniform,
        }
    }
}

impl GeneratorSpec {
    fn validate(&self) -> Result<()> {
        if self.total == 0 {
            return Err(Error::validation("generator total must be positive"));
        }
        if self.families == 0 || self.families > OS_FAMILIES.len() {
            return Err(Error::validation(format!(
                "families must be in 1..={}",
                OS_FAMILIES.len()
            )));
        }
        if self.end < self.start {
            return Err(Error::validation("generator date range is inverted"));
        }
        for (name, v) in [
            ("received_fraction", self.received_fraction),
            ("patched_fraction", self.patched_fraction),
            ("exploited_fraction", self.exploited_fraction),
            ("epss_coverage", self.epss_coverage),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(format!("{name} must be in [0, 1]")));
            }
        }
        if self.shared_groups > 0 && self.shared_group_size < 2 {
            return Err(Error::validation("shared_group_size must be at least 2"));
        }
        if self.shared_groups * self.shared_group_size > self.total {
            return Err(Error::validation(
                "shared groups would exceed the total record count",
            ));
        }
        Ok(())
    }
}

/// A generated corpus plus the ground truth withheld from Received records.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub records: Vec<CveRecord>,
    pub epss: Vec<EpssEntry>,
    pub catalog: Vec<NodeIdentity>,
    /// True base score for every record, including the withheld ones.
    pub hidden_scores: BTreeMap<CveId, f64>,
    /// Ids listed in the exploit index file (may not be flagged in the feed).
    pub exploit_ids: BTreeSet<CveId>,
}

struct Generation<'a> {
    spec: &'a GeneratorSpec,
    rng: ChaCha8Rng,
    table: Vec<(&'static str, usize, &'static str, Vec<&'static str>)>,
    family_nodes: Vec<Vec<usize>>,
    next_seq: u32,
    records: Vec<CveRecord>,
    hidden: BTreeMap<CveId, f64>,
    exploit_ids: BTreeSet<CveId>,
}

impl<'a> Generation<'a> {
    fn new(spec: &'a GeneratorSpec, seed: u64) -> Self {
        let table = catalog_table();
        let mut family_nodes = vec![Vec::new(); OS_FAMILIES.len()];
        for (idx, (_, family, _, _)) in table.iter().enumerate() {
            family_nodes[*family].push(idx);
        }
        Generation {
            spec,
            rng: ChaCha8Rng::seed_from_u64(seed),
            table,
            family_nodes,
            next_seq: 10_000,
            records: Vec::new(),
            hidden: BTreeMap::new(),
            exploit_ids: BTreeSet::new(),
        }
    }

    fn sample_date(&mut self) -> NaiveDate {
        let span = (self.spec.end - self.spec.start).num_days() as u64;
        self.spec.start + Days::new(self.rng.random_range(0..=span))
    }

    fn sample_score(&mut self) -> f64 {
        let raw = match self.spec.score_distribution {
            ScoreDistribution::Uniform => self.rng.random::<f64>() * 10.0,
            ScoreDistribution::Central => {
                (self.rng.random::<f64>() + self.rng.random::<f64>()) * 5.0
            }
        };
        // CVSS publishes one decimal place.
        (raw * 10.0).round() / 10.0
    }

    fn next_id(&mut self, published: NaiveDate) -> CveId {
        use chrono::Datelike;
        let id = format!("CVE-{}-{}", published.year(), self.next_seq);
        self.next_seq += 1;
        CveId::parse(&id).expect("generated id is well-formed")
    }

    fn sample_tokens(&mut self, pool: &[&str], count: usize) -> Vec<String> {
        let mut picks: Vec<usize> = (0..pool.len()).collect();
        picks.shuffle(&mut self.rng);
        picks
            .into_iter()
            .take(count.min(pool.len()))
            .map(|i| pool[i].to_string())
            .collect()
    }

    fn describe(&mut self, band: usize, product_key: &str) -> String {
        let n_band = self.rng.random_range(4..=6);
        let n_fill = self.rng.random_range(3..=5);
        let band_tokens = self.sample_tokens(&BAND_TOKENS[band], n_band);
        let fillers = self.sample_tokens(&FILLER_TOKENS, n_fill);
        compose_description(&band_tokens, &fillers, product_key)
    }

    fn push_record(
        &mut self,
        published: NaiveDate,
        score: f64,
        description: String,
        products: BTreeSet<String>,
    ) {
        let id = self.next_id(published);
        let received = self.rng.random::<f64>() < self.spec.received_fraction;
        let patched = self.rng.random::<f64>() < self.spec.patched_fraction;
        let mut exploited = false;
        if self.rng.random::<f64>() < self.spec.exploited_fraction {
            if self.rng.random::<f64>() < 0.5 {
                exploited = true;
            } else {
                self.exploit_ids.insert(id.clone());
            }
        }
        let lag = Days::new(self.rng.random_range(0..=self.spec.evaluation_lag_days));
        let record = CveRecord {
            id: id.clone(),
            description,
            published,
            modified: if received { published } else { published + lag },
            status: if received {
                CveStatus::Received
            } else {
                CveStatus::Analyzed
            },
            cvss_base: if received { None } else { Some(score) },
            cvss_version: if received { None } else { Some(CvssVersion::V3) },
            metrics: None,
            products,
            patched,
            exploited,
        };
        self.hidden.insert(id, score);
        self.records.push(record);
    }

    fn generate_background(&mut self, count: usize) {
        for _ in 0..count {
            let family = self.rng.random_range(0..self.spec.families);
            let nodes = &self.family_nodes[family];
            let node_idx = nodes[self.rng.random_range(0..nodes.len())];
            let keys: Vec<&str> = {
                let (_, _, os_key, packages) = &self.table[node_idx];
                std::iter::once(*os_key).chain(packages.iter().copied()).collect()
            };
            // Half the records hit the OS image itself, half an installed package.
            let primary = if self.rng.random::<f64>() < 0.5 || keys.len() == 1 {
                keys[0]
            } else {
                keys[1 + self.rng.random_range(0..keys.len() - 1)]
            };
            let mut products: BTreeSet<String> = [primary.to_string()].into();
            if self.rng.random::<f64>() < 0.25 && nodes.len() > 1 {
                let other = nodes[self.rng.random_range(0..nodes.len())];
                products.insert(self.table[other].2.to_string());
            }
            let published = self.sample_date();
            let score = self.sample_score();
            let band = (score.floor() as usize).min(9);
            let description = self.describe(band, primary);
            self.push_record(published, score, description, products);
        }
    }

    fn generate_shared_groups(&mut self) {
        for _ in 0..self.spec.shared_groups {
            let score = self.sample_score();
            let band = (score.floor() as usize).min(9);
            let n_band = self.rng.random_range(5..=6);
            let band_tokens = self.sample_tokens(&BAND_TOKENS[band], n_band);
            let fillers = self.sample_tokens(&FILLER_TOKENS, 4);
            let published = self.sample_date();

            let mut node_order: Vec<usize> = (0..self.table.len()).collect();
            node_order.shuffle(&mut self.rng);
            let members: Vec<usize> = node_order
                .into_iter()
                .take(self.spec.shared_group_size)
                .collect();
            for node_idx in members {
                let os_key = self.table[node_idx].2;
                let description = compose_description(&band_tokens, &fillers, os_key);
                let products: BTreeSet<String> = [os_key.to_string()].into();
                // Members share the flaw, so they share publication month and score.
                let jitter = Days::new(self.rng.random_range(0..14));
                self.push_record(published + jitter, score, description, products);
            }
        }
    }

    fn generate_epss(&mut self) -> Vec<EpssEntry> {
        let mut raw: Vec<(CveId, f64)> = Vec::new();
        let ids_and_flags: Vec<(CveId, bool)> = self
            .records
            .iter()
            .map(|r| {
                let exploited = r.exploited || self.exploit_ids.contains(&r.id);
                (r.id.clone(), exploited)
            })
            .collect();
        for (id, exploited) in ids_and_flags {
            if self.rng.random::<f64>() >= self.spec.epss_coverage {
                continue;
            }
            let u: f64 = self.rng.random();
            let p = if exploited {
                0.2 + 0.8 * u * u
            } else {
                u.powi(4)
            };
            raw.push((id, p));
        }
        // Percentile = rank of the probability within this export.
        let mut sorted: Vec<f64> = raw.iter().map(|(_, p)| *p).collect();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len().max(1) as f64;
        raw.into_iter()
            .map(|(cve_id, probability)| {
                let rank = sorted.partition_point(|&x| x <= probability);
                EpssEntry {
                    cve_id,
                    probability,
                    percentile: rank as f64 / n,
                    model_date: self.spec.end,
                }
            })
            .collect()
    }
}

fn compose_description(band_tokens: &[String], fillers: &[String], product_key: &str) -> String {
    let product_words = product_key.replace([':', '_'], " ");
    let f = |i: usize| fillers[i % fillers.len()].as_str();
    let flaw = band_tokens.join(" ");
    format!(
        "A {} issue in the {} {} of {} allows attackers to trigger {} via a crafted {}",
        band_tokens[0],
        f(0),
        f(1),
        product_words,
        flaw,
        f(2),
    )
}

/// Generate a deterministic synthetic corpus.
///
/// Equal `(spec, seed)` pairs produce identical output.
pub fn generate_synthetic_dataset(spec: &GeneratorSpec, seed: u64) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut generation = Generation::new(spec, seed);
    let grouped = spec.shared_groups * spec.shared_group_size;
    generation.generate_background(spec.total - grouped);
    generation.generate_shared_groups();
    let epss = generation.generate_epss();
    Ok(SyntheticDataset {
        records: generation.records,
        epss,
        catalog: default_catalog(),
        hidden_scores: generation.hidden,
        exploit_ids: generation.exploit_ids,
    })
}

/// Deterministic stand-in embedding vectors: feature-hashed token counts,
/// L2-normalized. Near-identical descriptions map to near-identical vectors,
/// which is the property the clustering stage needs from an embedding file.
pub fn synthetic_embeddings(
    records: &[CveRecord],
    dimension: usize,
    seed: u64,
) -> BTreeMap<CveId, FeatureVector> {
    let mut out = BTreeMap::new();
    for record in records {
        let mut values = vec![0.0f64; dimension];
        for token in tokenize(&record.description) {
            let h = fnv1a64(token.as_bytes(), seed);
            let idx = (h % dimension as u64) as usize;
            let sign = if (h >> 32) & 1 == 0 { 1.0 } else { -1.0 };
            values[idx] += sign;
        }
        out.insert(record.id.clone(), FeatureVector::new(values).l2_normalized());
    }
    out
}

fn fnv1a64(bytes: &[u8], seed: u64) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// The as-of date the demo fixture is built around.
pub const DEMO_AS_OF: &str = "2024-01-31";

/// A small fixed corpus for fixtures and walkthroughs: a synthetic background,
/// one well-known high-EPSS CVE with its published score, and a seven-member
/// near-duplicate description group spread over seven nodes.
pub fn demo_dataset() -> SyntheticDataset {
    let spec = GeneratorSpec {
        total: 32,
        families: 9,
        start: NaiveDate::from_ymd_opt(2022, 1, 1).unwrap(),
        end: NaiveDate::from_ymd_opt(2023, 12, 31).unwrap(),
        received_fraction: 0.15,
        patched_fraction: 0.6,
        exploited_fraction: 0.25,
        epss_coverage: 0.8,
        shared_groups: 0,
        shared_group_size: 0,
        evaluation_lag_days: 45,
        score_distribution: ScoreDistribution::Uniform,
    };
    let mut dataset = generate_synthetic_dataset(&spec, 42).expect("demo spec is valid");

    let date = |y, m, d| NaiveDate::from_ymd_opt(y, m, d).unwrap();

    // A widely exploited, patched office suite flaw: old enough to sit on the
    // oldness floor, with a near-certain exploitation probability.
    let office = CveRecord {
        id: CveId::parse("CVE-2017-11882").unwrap(),
        description: "Stack buffer overflow in the equation editor of microsoft office 2016 \
                      allows attackers to run arbitrary code via a crafted document"
            .to_string(),
        published: date(2017, 11, 14),
        modified: date(2017, 11, 29),
        status: CveStatus::Analyzed,
        cvss_base: Some(7.8),
        cvss_version: Some(CvssVersion::V3),
        metrics: None,
        products: ["microsoft:office:2016".to_string()].into(),
        patched: true,
        exploited: true,
    };
    dataset.hidden_scores.insert(office.id.clone(), 7.8);
    dataset.epss.push(EpssEntry {
        cve_id: office.id.clone(),
        probability: 0.9799,
        percentile: 0.999,
        model_date: date(2024, 1, 15),
    });
    dataset.records.push(office);

    // Seven CVEs with near-identical descriptions on seven different nodes.
    // Same flaw filed separately per product; only the clustering stage can
    // tell the configurator these are shared.
    let shared_members: [(&str, &str, i32, u32, u32); 7] = [
        ("CVE-2014-0157", "opensuse:leap:15.4", 2014, 4, 3),
        ("CVE-2015-3988", "oracle:solaris:11.4", 2015, 5, 18),
        ("CVE-2016-4428", "debian:debian_linux:11", 2016, 6, 24),
        ("CVE-2019-7101", "fedoraproject:fedora:37", 2019, 2, 11),
        ("CVE-2019-7102", "canonical:ubuntu_linux:20.04", 2019, 2, 12),
        ("CVE-2019-7103", "centos:centos:7", 2019, 2, 13),
        ("CVE-2019-7104", "freebsd:freebsd:13.1", 2019, 2, 14),
    ];
    for (id, product, y, m, d) in shared_members {
        let product_words = product.replace([':', '_'], " ");
        let record = CveRecord {
            id: CveId::parse(id).unwrap(),
            description: format!(
                "Cross-site scripting xss forgery in the web console handler of {product_words} \
                 allows session hijacking bypass via a crafted hostname parameter"
            ),
            published: date(y, m, d),
            modified: date(y, m, d) + Days::new(21),
            status: CveStatus::Analyzed,
            cvss_base: Some(6.1),
            cvss_version: Some(CvssVersion::V3),
            metrics: None,
            products: [product.to_string()].into(),
            patched: id != "CVE-2016-4428",
            exploited: false,
        };
        dataset.hidden_scores.insert(record.id.clone(), 6.1);
        dataset.epss.push(EpssEntry {
            cve_id: record.id.clone(),
            probability: 0.31,
            percentile: 0.92,
            model_date: date(2024, 1, 15),
        });
        dataset.records.push(record);
    }
    // One group member is known exploited only through the index file.
    dataset
        .exploit_ids
        .insert(CveId::parse("CVE-2014-0157").unwrap());
    dataset
        .exploit_ids
        .insert(CveId::parse("CVE-2017-11882").unwrap());

    dataset
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_is_deterministic() {
        let spec = GeneratorSpec {
            total: 60,
            ..GeneratorSpec::default()
        };
        let a = generate_synthetic_dataset(&spec, 7).unwrap();
        let b = generate_synthetic_dataset(&spec, 7).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.epss, b.epss);
        assert_eq!(a.exploit_ids, b.exploit_ids);
    }

    #[test]
    fn generator_respects_total_and_catalog() {
        let spec = GeneratorSpec {
            total: 120,
            ..GeneratorSpec::default()
        };
        let data = generate_synthetic_dataset(&spec, 3).unwrap();
        assert_eq!(data.records.len(), 120);
        assert_eq!(data.catalog.len(), 16);
        let all_keys: BTreeSet<&String> = data
            .catalog
            .iter()
            .flat_map(|n| n.product_keys.iter())
            .collect();
        for record in &data.records {
            record.validate().unwrap();
            for key in &record.products {
                assert!(all_keys.contains(key), "unknown product key {key}");
            }
        }
    }

    #[test]
    fn received_fraction_one_means_all_received() {
        let spec = GeneratorSpec {
            total: 30,
            received_fraction: 1.0,
            shared_groups: 2,
            shared_group_size: 3,
            ..GeneratorSpec::default()
        };
        let data = generate_synthetic_dataset(&spec, 1).unwrap();
        assert!(data
            .records
            .iter()
            .all(|r| r.status == CveStatus::Received && r.cvss_base.is_none()));
        // Ground truth still known for every record.
        assert_eq!(data.hidden_scores.len(), 30);
    }

    #[test]
    fn zero_total_is_a_parameter_error() {
        let spec = GeneratorSpec {
            total: 0,
            ..GeneratorSpec::default()
        };
        assert!(generate_synthetic_dataset(&spec, 1).is_err());
    }

    #[test]
    fn epss_rows_are_in_range() {
        let data = generate_synthetic_dataset(&GeneratorSpec::default(), 11).unwrap();
        assert!(!data.epss.is_empty());
        for entry in &data.epss {
            assert!((0.0..=1.0).contains(&entry.probability));
            assert!((0.0..=1.0).contains(&entry.percentile));
        }
    }

    #[test]
    fn shared_groups_reuse_band_tokens_across_nodes() {
        let spec = GeneratorSpec {
            total: 40,
            shared_groups: 2,
            shared_group_size: 4,
            received_fraction: 0.0,
            ..GeneratorSpec::default()
        };
        let data = generate_synthetic_dataset(&spec, 5).unwrap();
        // Group members are appended last: 8 records in 2 groups of 4.
        let members = &data.records[32..];
        assert_eq!(members.len(), 8);
        let first_group: Vec<_> = members[..4].iter().collect();
        let scores: BTreeSet<String> =
            first_group.iter().map(|r| format!("{:?}", r.cvss_base)).collect();
        assert_eq!(scores.len(), 1, "group members share one score");
    }

    #[test]
    fn synthetic_embeddings_are_unit_norm_and_deterministic() {
        let data = generate_synthetic_dataset(
            &GeneratorSpec {
                total: 20,
                shared_groups: 0,
                shared_group_size: 0,
                ..GeneratorSpec::default()
            },
            9,
        )
        .unwrap();
        let a = synthetic_embeddings(&data.records, 16, 1);
        let b = synthetic_embeddings(&data.records, 16, 1);
        assert_eq!(a.len(), 20);
        for (id, v) in &a {
            assert!((v.norm() - 1.0).abs() < 1e-9, "{id} not normalized");
            assert_eq!(v.values(), b[id].values());
        }
    }

    #[test]
    fn demo_dataset_contains_the_anchors() {
        let demo = demo_dataset();
        let ids: BTreeSet<&str> = demo.records.iter().map(|r| r.id.as_str()).collect();
        assert!(ids.contains("CVE-2017-11882"));
        assert!(ids.contains("CVE-2014-0157"));
        assert!(ids.contains("CVE-2015-3988"));
        assert!(ids.contains("CVE-2016-4428"));
        let office = demo
            .records
            .iter()
            .find(|r| r.id.as_str() == "CVE-2017-11882")
            .unwrap();
        assert_eq!(office.cvss_base, Some(7.8));
        assert!(office.patched && office.exploited);
    }
}
