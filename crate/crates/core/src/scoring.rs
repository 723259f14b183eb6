//! Score reassessment.
//!
//! The Lazarus-style factor score adjusts a CVSS base score for age, patch
//! availability, and observed exploitation. The EPSS-weighted score blends
//! the patched and unpatched variants by the probability that the CVE is
//! exploited in the wild, so a patched-but-actively-exploited flaw keeps a
//! score close to its unpatched severity.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusSnapshot, CveId, CveStatus};
use crate::error::{Error, Result};
use crate::predictor::PredictedScore;

pub const DEFAULT_OLDNESS_THRESHOLD_DAYS: i64 = 365;

/// Age decay factor: linear from 1.0 down to a floor of 0.75 at the
/// threshold (default 365 days).
pub fn oldness(published: NaiveDate, now: NaiveDate, threshold_days: i64) -> Result<f64> {
    if now < published {
        return Err(Error::validation(format!(
            "now {now} precedes published date {published}"
        )));
    }
    if threshold_days <= 0 {
        return Err(Error::validation("oldness threshold must be positive"));
    }
    let delta_days = (now - published).num_days() as f64;
    Ok((1.0 - 0.25 * delta_days / threshold_days as f64).max(0.75))
}

/// 0.5 when a fix exists, 1.0 otherwise.
pub fn patched_factor(patched: bool) -> f64 {
    if patched {
        0.5
    } else {
        1.0
    }
}

/// 1.25 when exploitation has been observed, 1.0 otherwise.
pub fn exploited_factor(exploited: bool) -> f64 {
    if exploited {
        1.25
    } else {
        1.0
    }
}

/// Factor-adjusted score: `base * oldness * exploited * patched`.
pub fn lazarus_score(
    base: f64,
    published: NaiveDate,
    now: NaiveDate,
    patched: bool,
    exploited: bool,
) -> Result<f64> {
    if !(0.0..=10.0).contains(&base) {
        return Err(Error::validation(format!("base score {base} outside [0, 10]")));
    }
    let age = oldness(published, now, DEFAULT_OLDNESS_THRESHOLD_DAYS)?;
    Ok(base * age * exploited_factor(exploited) * patched_factor(patched))
}

/// EPSS-weighted score: the factor score with the actual patch flag, blended
/// with the as-if-unpatched score by the exploitation probability.
///
/// `s * (1 - epss) + s_wp * epss`, where `s_wp` forces the patch factor to 1.
pub fn epss_weighted_score(
    base: f64,
    published: NaiveDate,
    now: NaiveDate,
    patched: bool,
    exploited: bool,
    epss: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&epss) {
        return Err(Error::validation(format!("epss {epss} outside [0, 1]")));
    }
    let with_patch = lazarus_score(base, published, now, patched, exploited)?;
    let without_patch = lazarus_score(base, published, now, false, exploited)?;
    Ok(with_patch * (1.0 - epss) + without_patch * epss)
}

/// Where a CVE's base score came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Official,
    Predicted,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::Official => f.write_str("official"),
            Provenance::Predicted => f.write_str("predicted"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Factors {
    pub oldness: f64,
    pub patched: f64,
    pub exploited: f64,
    pub epss: f64,
}

/// Per-CVE reassessment result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessedScore {
    pub cve_id: CveId,
    pub base: f64,
    pub provenance: Provenance,
    /// Factor score with the actual patch flag.
    pub lazarus: f64,
    /// Factor score with the patch factor forced to 1.
    pub lazarus_unpatched: f64,
    /// EPSS-weighted blend of the two; the score the configurator sums.
    pub weighted: f64,
    pub factors: Factors,
}

/// Reassess every CVE in the snapshot. Received CVEs take their base from
/// `predictions`; missing predictions are an error listing the ids.
pub fn assess_all(
    snapshot: &CorpusSnapshot,
    predictions: &BTreeMap<CveId, PredictedScore>,
) -> Result<BTreeMap<CveId, AssessedScore>> {
    let missing: Vec<String> = snapshot
        .records()
        .values()
        .filter(|r| r.status == CveStatus::Received && !predictions.contains_key(&r.id))
        .map(|r| r.id.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::validation(format!(
            "received CVEs without predictions: {}",
            missing.join(", ")
        )));
    }

    let now = snapshot.as_of();
    let mut out = BTreeMap::new();
    for record in snapshot.records().values() {
        let (base, provenance) = match record.status {
            CveStatus::Analyzed => (
                record.cvss_base.expect("analyzed record carries a base"),
                Provenance::Official,
            ),
            CveStatus::Received => (
                predictions[&record.id].score,
                Provenance::Predicted,
            ),
        };
        let epss = snapshot.epss_of(&record.id);
        let lazarus = lazarus_score(base, record.published, now, record.patched, record.exploited)?;
        let lazarus_unpatched =
            lazarus_score(base, record.published, now, false, record.exploited)?;
        let weighted = lazarus * (1.0 - epss) + lazarus_unpatched * epss;
        out.insert(
            record.id.clone(),
            AssessedScore {
                cve_id: record.id.clone(),
                base,
                provenance,
                lazarus,
                lazarus_unpatched,
                weighted,
                factors: Factors {
                    oldness: oldness(record.published, now, DEFAULT_OLDNESS_THRESHOLD_DAYS)?,
                    patched: patched_factor(record.patched),
                    exploited: exploited_factor(record.exploited),
                    epss,
                },
            },
        );
    }
    Ok(out)
}

/// Write assessed scores as CSV `cve_id,base,provenance,lazarus,weighted,epss`.
/// Scores display with two decimals; base and epss keep their source precision.
pub fn export_assessed_csv(
    assessed: &BTreeMap<CveId, AssessedScore>,
    mut w: impl std::io::Write,
) -> Result<()> {
    writeln!(w, "cve_id,base,provenance,lazarus,weighted,epss")?;
    for score in assessed.values() {
        writeln!(
            w,
            "{},{},{},{:.2},{:.2},{}",
            score.cve_id, score.base, score.provenance, score.lazarus, score.weighted,
            score.factors.epss
        )?;
    }
    Ok(())
}
