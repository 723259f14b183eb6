//! Vulnerability intelligence ingestion: CVE feed, EPSS export, exploit index,
//! node catalog, and the merged time-filtered snapshot the rest of the engine
//! reads from.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Read};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod generator;
pub use generator::{
    default_catalog, demo_dataset, generate_synthetic_dataset, synthetic_embeddings,
    GeneratorSpec, ScoreDistribution, SyntheticDataset, DEMO_AS_OF, OS_FAMILIES,
};

/// A validated CVE identifier (`CVE-YYYY-NNNN` with at least four digits in
/// the sequence part).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct CveId(String);

impl CveId {
    pub fn parse(s: &str) -> Result<Self> {
        let rest = s
            .strip_prefix("CVE-")
            .ok_or_else(|| Error::validation(format!("not a CVE identifier: {s:?}")))?;
        let (year, seq) = rest
            .split_once('-')
            .ok_or_else(|| Error::validation(format!("not a CVE identifier: {s:?}")))?;
        let year_ok = year.len() == 4 && year.bytes().all(|b| b.is_ascii_digit());
        let seq_ok = seq.len() >= 4 && seq.bytes().all(|b| b.is_ascii_digit());
        if !year_ok || !seq_ok {
            return Err(Error::validation(format!("not a CVE identifier: {s:?}")));
        }
        Ok(CveId(s.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for CveId {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        let s = String::deserialize(deserializer)?;
        CveId::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// CVE lifecycle state: `Received` entries carry only a description,
/// `Analyzed` entries have a published base score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CveStatus {
    Received,
    Analyzed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CvssVersion {
    #[serde(rename = "2.0")]
    V2,
    #[serde(rename = "3.1")]
    V3,
}

/// One vulnerability record as ingested from the feed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CveRecord {
    pub id: CveId,
    pub description: String,
    pub published: NaiveDate,
    pub modified: NaiveDate,
    pub status: CveStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cvss_base: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cvss_version: Option<CvssVersion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<BTreeMap<String, String>>,
    pub products: BTreeSet<String>,
    pub patched: bool,
    pub exploited: bool,
}

impl CveRecord {
    /// Check the record-level invariants.
    pub fn validate(&self) -> Result<()> {
        if self.description.trim().is_empty() {
            return Err(Error::validation(format!("{}: empty description", self.id)));
        }
        if self.modified < self.published {
            return Err(Error::validation(format!(
                "{}: modified {} precedes published {}",
                self.id, self.modified, self.published
            )));
        }
        match (self.status, self.cvss_base) {
            (CveStatus::Analyzed, None) => {
                return Err(Error::validation(format!(
                    "{}: analyzed record without a base score",
                    self.id
                )));
            }
            (CveStatus::Received, Some(_)) => {
                return Err(Error::validation(format!(
                    "{}: received record must not carry a base score",
                    self.id
                )));
            }
            (CveStatus::Analyzed, Some(base)) if !(0.0..=10.0).contains(&base) => {
                return Err(Error::validation(format!(
                    "{}: base score {base} outside [0, 10]",
                    self.id
                )));
            }
            _ => {}
        }
        if self.products.is_empty() {
            return Err(Error::validation(format!(
                "{}: affected products must be non-empty",
                self.id
            )));
        }
        Ok(())
    }
}

/// One row of an EPSS export: daily probability of exploitation in the wild.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpssEntry {
    pub cve_id: CveId,
    pub probability: f64,
    pub percentile: f64,
    pub model_date: NaiveDate,
}

/// A node (OS/software image) that can take part in a configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeIdentity {
    pub name: String,
    #[serde(rename = "products")]
    pub product_keys: BTreeSet<String>,
}

impl NodeIdentity {
    pub fn new(name: impl Into<String>, product_keys: impl IntoIterator<Item = String>) -> Self {
        NodeIdentity {
            name: name.into(),
            product_keys: product_keys.into_iter().collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::validation("node with empty name"));
        }
        if self.product_keys.is_empty() {
            return Err(Error::validation(format!(
                "node {}: product keys must be non-empty",
                self.name
            )));
        }
        Ok(())
    }
}

/// Parse a CVE feed: JSON Lines, one record per line.
///
/// Errors carry the 1-based line number. Duplicate ids are rejected.
pub fn parse_cve_feed(reader: impl BufRead) -> Result<Vec<CveRecord>> {
    let mut records = Vec::new();
    let mut seen: BTreeSet<CveId> = BTreeSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CveRecord = serde_json::from_str(&line)
            .map_err(|e| Error::parse(lineno, e.to_string()))?;
        record
            .validate()
            .map_err(|e| Error::parse(lineno, e.to_string()))?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::parse(lineno, format!("duplicate id {}", record.id)));
        }
        records.push(record);
    }
    Ok(records)
}

/// Serialize records back to the JSON Lines feed layout.
pub fn write_cve_feed(records: &[CveRecord], mut w: impl std::io::Write) -> Result<()> {
    for record in records {
        serde_json::to_writer(&mut w, record).map_err(|e| Error::format(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Result of parsing an EPSS export.
#[derive(Debug, Clone)]
pub struct EpssFile {
    pub entries: Vec<EpssEntry>,
    /// Non-fatal issues, e.g. duplicate rows where the last one won.
    pub warnings: Vec<String>,
    pub model_date: NaiveDate,
}

/// Parse an EPSS CSV export (`cve,epss,percentile` header, optional leading
/// `#model_version:...,score_date:...` comment).
///
/// `declared_date` is used as the model date when the file carries no
/// score-date comment. Duplicate rows for one CVE keep the last value and
/// emit a warning.
pub fn parse_epss_csv(reader: impl Read, declared_date: NaiveDate) -> Result<EpssFile> {
    let mut text = String::new();
    let mut reader = reader;
    reader.read_to_string(&mut text)?;

    let mut model_date = declared_date;
    let mut body = text.as_str();
    if let Some(first) = text.lines().next() {
        if first.starts_with('#') {
            if let Some(date) = extract_score_date(first) {
                model_date = date;
            }
            body = &text[first.len()..];
            body = body.strip_prefix('\n').unwrap_or(body);
        }
    }

    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(body.as_bytes());
    let headers = csv_reader
        .headers()
        .map_err(|e| Error::format(e.to_string()))?
        .clone();
    let expected = ["cve", "epss", "percentile"];
    if headers.len() < 3 || headers.iter().take(3).ne(expected) {
        return Err(Error::format(format!(
            "expected header `cve,epss,percentile`, got {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }

    let mut warnings = Vec::new();
    let mut order: Vec<CveId> = Vec::new();
    let mut by_id: BTreeMap<CveId, EpssEntry> = BTreeMap::new();
    for (idx, row) in csv_reader.records().enumerate() {
        let lineno = idx + 2; // header occupies line 1 of the csv body
        let row = row.map_err(|e| Error::parse(lineno, e.to_string()))?;
        let id = CveId::parse(row.get(0).unwrap_or(""))
            .map_err(|e| Error::parse(lineno, e.to_string()))?;
        let probability: f64 = row
            .get(1)
            .unwrap_or("")
            .parse()
            .map_err(|_| Error::parse(lineno, "non-numeric epss value"))?;
        let percentile: f64 = row
            .get(2)
            .unwrap_or("")
            .parse()
            .map_err(|_| Error::parse(lineno, "non-numeric percentile value"))?;
        if !(0.0..=1.0).contains(&probability) {
            return Err(Error::validation(format!(
                "{id}: epss probability {probability} outside [0, 1]"
            )));
        }
        if !(0.0..=1.0).contains(&percentile) {
            return Err(Error::validation(format!(
                "{id}: epss percentile {percentile} outside [0, 1]"
            )));
        }
        let entry = EpssEntry {
            cve_id: id.clone(),
            probability,
            percentile,
            model_date,
        };
        if by_id.insert(id.clone(), entry).is_some() {
            warnings.push(format!("duplicate EPSS row for {id}; keeping the last value"));
        } else {
            order.push(id);
        }
    }

    let entries = order
        .into_iter()
        .map(|id| by_id.get(&id).expect("entry recorded").clone())
        .collect();
    Ok(EpssFile {
        entries,
        warnings,
        model_date,
    })
}

fn extract_score_date(comment: &str) -> Option<NaiveDate> {
    let start = comment.find("score_date:")? + "score_date:".len();
    let rest = &comment[start..];
    let token: String = rest
        .chars()
        .take_while(|c| *c != ',' && !c.is_whitespace())
        .collect();
    let date_part = token.get(..10)?;
    NaiveDate::parse_from_str(date_part, "%Y-%m-%d").ok()
}

/// The set of CVEs with at least one public exploit entry.
#[derive(Debug, Clone, Default)]
pub struct ExploitIndex {
    pub ids: BTreeSet<CveId>,
    /// Rows that referenced no valid CVE identifier.
    pub skipped_rows: usize,
}

/// Parse an exploit index CSV. The `codes` column holds `;`-separated CVE
/// identifiers; rows without any valid identifier are skipped and counted.
pub fn parse_exploit_index(reader: impl Read) -> Result<ExploitIndex> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = csv_reader
        .headers()
        .map_err(|e| Error::format(e.to_string()))?;
    let codes_col = headers
        .iter()
        .position(|h| h == "codes")
        .ok_or_else(|| Error::format("exploit index has no `codes` column"))?;

    let mut index = ExploitIndex::default();
    for (idx, row) in csv_reader.records().enumerate() {
        let row = row.map_err(|e| Error::parse(idx + 2, e.to_string()))?;
        let cell = row.get(codes_col).unwrap_or("");
        let mut found = false;
        for piece in cell.split(';') {
            if let Ok(id) = CveId::parse(piece.trim()) {
                index.ids.insert(id);
                found = true;
            }
        }
        if !found {
            index.skipped_rows += 1;
        }
    }
    Ok(index)
}

/// Load a node catalog from JSON: an array of `{"name", "products"}` objects.
pub fn load_catalog(reader: impl Read) -> Result<Vec<NodeIdentity>> {
    let nodes: Vec<NodeIdentity> =
        serde_json::from_reader(reader).map_err(|e| Error::format(e.to_string()))?;
    for node in &nodes {
        node.validate()?;
    }
    Ok(nodes)
}

/// The merged, time-filtered view the pipeline operates on. Immutable after
/// construction; safe to share across threads.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusSnapshot {
    as_of: NaiveDate,
    records: BTreeMap<CveId, CveRecord>,
    epss: BTreeMap<CveId, f64>,
    catalog: Vec<NodeIdentity>,
}

impl CorpusSnapshot {
    pub fn as_of(&self) -> NaiveDate {
        self.as_of
    }

    pub fn records(&self) -> &BTreeMap<CveId, CveRecord> {
        &self.records
    }

    pub fn record(&self, id: &CveId) -> Option<&CveRecord> {
        self.records.get(id)
    }

    /// EPSS probability for a CVE; 0.0 when the feed had no row for it, so
    /// the weighted score degenerates to the plain factor score.
    pub fn epss_of(&self, id: &CveId) -> f64 {
        self.epss.get(id).copied().unwrap_or(0.0)
    }

    /// Nodes sorted by name.
    pub fn catalog(&self) -> &[NodeIdentity] {
        &self.catalog
    }

    pub fn received_ids(&self) -> Vec<CveId> {
        self.records
            .values()
            .filter(|r| r.status == CveStatus::Received)
            .map(|r| r.id.clone())
            .collect()
    }

    pub fn analyzed_ids(&self) -> Vec<CveId> {
        self.records
            .values()
            .filter(|r| r.status == CveStatus::Analyzed)
            .map(|r| r.id.clone())
            .collect()
    }
}

/// Merge parsed inputs into a snapshot as of a simulated "now".
///
/// Records published after `as_of` are dropped. A record's `exploited` flag
/// is OR-ed with membership in the exploit index.
pub fn build_snapshot(
    records: impl IntoIterator<Item = CveRecord>,
    epss: &[EpssEntry],
    exploited_ids: &BTreeSet<CveId>,
    catalog: Vec<NodeIdentity>,
    as_of: NaiveDate,
) -> Result<CorpusSnapshot> {
    let mut map: BTreeMap<CveId, CveRecord> = BTreeMap::new();
    for mut record in records {
        if record.published > as_of {
            continue;
        }
        record.validate()?;
        record.exploited = record.exploited || exploited_ids.contains(&record.id);
        let id = record.id.clone();
        if map.insert(id.clone(), record).is_some() {
            return Err(Error::validation(format!("duplicate record for {id}")));
        }
    }

    let mut epss_map = BTreeMap::new();
    for entry in epss {
        if map.contains_key(&entry.cve_id) {
            epss_map.insert(entry.cve_id.clone(), entry.probability);
        }
    }

    let mut catalog = catalog;
    for node in &catalog {
        node.validate()?;
    }
    catalog.sort_by(|a, b| a.name.cmp(&b.name));
    for pair in catalog.windows(2) {
        if pair[0].name == pair[1].name {
            return Err(Error::validation(format!(
                "duplicate node name {} in catalog",
                pair[0].name
            )));
        }
    }

    Ok(CorpusSnapshot {
        as_of,
        records: map,
        epss: epss_map,
        catalog,
    })
}
