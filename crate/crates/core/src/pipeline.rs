//! End-to-end orchestration: predict missing scores, cluster descriptions,
//! reassess, and rank configurations; plus the monthly timeline experiment,
//! the predictor benchmark, and the clustering comparison grid.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::{Datelike, Days, Months, NaiveDate};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cluster::{
    dbscan, kmeans_baseline, optics, shared_groups, ClusterAssignment, ClusterParams,
};
use crate::configurator::{advise, shared_vulnerabilities, vulnerabilities_of, Policy, RiskReport};
use crate::corpus::{
    build_snapshot, CorpusSnapshot, CveId, CveRecord, CveStatus, EpssEntry, NodeIdentity,
};
use crate::error::{Error, Result};
use crate::predictor::{
    evaluate, train_forest, ForestModel, Hyperparams, PredictedScore, ScoreBinning,
};
use crate::scoring::{assess_all, AssessedScore};
use crate::textfeat::{vectorize_tfidf, FeatureVector, Vocabulary};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// How descriptions become vectors for a stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    /// TF-IDF over the snapshot's own descriptions.
    Bow,
    /// Precomputed vectors from an embedding file.
    Embeddings,
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FeatureKind::Bow => f.write_str("bow"),
            FeatureKind::Embeddings => f.write_str("emb"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClusterAlgorithm {
    Dbscan { eps: f64, min_samples: usize },
    Optics { min_samples: usize, xi: f64 },
    Kmeans { k: usize },
}

impl ClusterAlgorithm {
    pub fn name(&self) -> &'static str {
        match self {
            ClusterAlgorithm::Dbscan { .. } => "dbscan",
            ClusterAlgorithm::Optics { .. } => "optics",
            ClusterAlgorithm::Kmeans { .. } => "kmeans",
        }
    }
}

/// Everything a pipeline run needs beyond the snapshot itself.
#[derive(Debug, Clone)]
pub struct PipelineParams {
    pub predictor_features: FeatureKind,
    pub cluster_features: FeatureKind,
    /// Required when either stage uses [`FeatureKind::Embeddings`].
    pub embeddings: Option<BTreeMap<CveId, FeatureVector>>,
    pub min_df: usize,
    pub tokenize: crate::textfeat::TokenizeOptions,
    pub algorithm: ClusterAlgorithm,
    pub binning: ScoreBinning,
    pub hyperparams: Hyperparams,
    /// Configuration size for the advisory stage.
    pub nodes: usize,
    pub policy: Policy,
    pub seed: u64,
    pub explain: bool,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            predictor_features: FeatureKind::Bow,
            cluster_features: FeatureKind::Bow,
            embeddings: None,
            min_df: 1,
            tokenize: crate::textfeat::TokenizeOptions::default(),
            algorithm: ClusterAlgorithm::Optics {
                min_samples: 5,
                xi: 0.05,
            },
            binning: ScoreBinning::default(),
            hyperparams: Hyperparams::default(),
            nodes: 4,
            policy: Policy::ResilienceFirst,
            seed: 1,
            explain: false,
        }
    }
}

/// All intermediates of one pipeline run, for inspection and export.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub predictions: BTreeMap<CveId, PredictedScore>,
    pub clusters: ClusterAssignment,
    pub assessed: BTreeMap<CveId, AssessedScore>,
    pub ranking: Vec<RiskReport>,
    pub model: Option<ForestModel>,
}

fn feature_map(
    snapshot: &CorpusSnapshot,
    kind: FeatureKind,
    params: &PipelineParams,
    vocab: &mut Option<Vocabulary>,
) -> Result<BTreeMap<CveId, FeatureVector>> {
    match kind {
        FeatureKind::Bow => {
            if vocab.is_none() {
                let docs: Vec<&str> = snapshot
                    .records()
                    .values()
                    .map(|r| r.description.as_str())
                    .collect();
                *vocab = Some(Vocabulary::build_with(
                    docs.into_iter(),
                    params.min_df,
                    params.tokenize,
                )?);
            }
            let v = vocab.as_ref().expect("vocabulary built above");
            Ok(snapshot
                .records()
                .values()
                .map(|r| (r.id.clone(), vectorize_tfidf(&r.description, v)))
                .collect())
        }
        FeatureKind::Embeddings => {
            let emb = params.embeddings.as_ref().ok_or_else(|| {
                Error::validation("embeddings requested but no embedding map supplied")
            })?;
            let mut out = BTreeMap::new();
            let mut missing = Vec::new();
            for id in snapshot.records().keys() {
                match emb.get(id) {
                    Some(v) => {
                        out.insert(id.clone(), v.clone());
                    }
                    None => missing.push(id.to_string()),
                }
            }
            if !missing.is_empty() {
                return Err(Error::validation(format!(
                    "no embedding for: {}",
                    missing.join(", ")
                )));
            }
            Ok(out)
        }
    }
}

fn empty_assignment(params: &PipelineParams) -> ClusterAssignment {
    ClusterAssignment {
        labels: BTreeMap::new(),
        params: match params.algorithm {
            ClusterAlgorithm::Dbscan { eps, min_samples } => {
                ClusterParams::Dbscan { eps, min_samples }
            }
            ClusterAlgorithm::Optics { min_samples, xi } => {
                ClusterParams::Optics { min_samples, xi }
            }
            ClusterAlgorithm::Kmeans { k } => ClusterParams::Kmeans {
                k,
                seed: params.seed,
            },
        },
        reachability: None,
    }
}

/// The four stages in order: predict Received CVEs, cluster all
/// descriptions, reassess, advise.
pub fn run_pipeline(snapshot: &CorpusSnapshot, params: &PipelineParams) -> Result<PipelineOutput> {
    let mut vocab: Option<Vocabulary> = None;

    // Stage 1: provisional scores for unassessed CVEs.
    let received = snapshot.received_ids();
    let mut predictions = BTreeMap::new();
    let mut model = None;
    if !received.is_empty() {
        let features = feature_map(snapshot, params.predictor_features, params, &mut vocab)?;
        let analyzed = snapshot.analyzed_ids();
        if analyzed.is_empty() {
            return Err(Error::validation(
                "snapshot has unassessed CVEs but no analyzed CVEs to train on",
            ));
        }
        let mut train_features = Vec::with_capacity(analyzed.len());
        let mut train_bins = Vec::with_capacity(analyzed.len());
        for id in &analyzed {
            let record = &snapshot.records()[id];
            let base = record.cvss_base.expect("analyzed record has a base");
            train_features.push(features[id].clone());
            train_bins.push(params.binning.bin_of(base)?);
        }
        let forest = train_forest(
            &train_features,
            &train_bins,
            params.binning,
            params.hyperparams,
            vocab.clone(),
            params.seed,
        )?;
        for id in &received {
            predictions.insert(id.clone(), forest.predict_labeled(id, &features[id])?);
        }
        model = Some(forest);
    }

    // Stage 2: description clustering over the whole snapshot.
    let clusters = if snapshot.records().is_empty() {
        empty_assignment(params)
    } else {
        let features = feature_map(snapshot, params.cluster_features, params, &mut vocab)?;
        let points: Vec<(CveId, FeatureVector)> = features.into_iter().collect();
        match params.algorithm {
            ClusterAlgorithm::Dbscan { eps, min_samples } => dbscan(&points, eps, min_samples)?,
            ClusterAlgorithm::Optics { min_samples, xi } => optics(&points, min_samples, xi)?,
            ClusterAlgorithm::Kmeans { k } => kmeans_baseline(&points, k, params.seed)?,
        }
    };

    // Stage 3: reassessment over official and predicted bases.
    let assessed = assess_all(snapshot, &predictions)?;

    // Stage 4: enumerate and rank configurations.
    let groups = shared_groups(&clusters);
    let ranking = advise(
        snapshot.catalog(),
        params.nodes,
        params.policy,
        &assessed,
        snapshot,
        &groups,
        params.explain,
    )?;

    Ok(PipelineOutput {
        predictions,
        clusters,
        assessed,
        ranking,
        model,
    })
}

/// Inputs for the timeline experiment: the final state of the feed, plus
/// the intelligence files.
#[derive(Debug, Clone)]
pub struct TimelineInputs {
    pub records: Vec<CveRecord>,
    pub epss: Vec<EpssEntry>,
    pub exploited_ids: BTreeSet<CveId>,
    pub catalog: Vec<NodeIdentity>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonthlyReportRow {
    pub month: String,
    pub advised: Vec<String>,
    pub security: f64,
    pub resilience: f64,
    /// Sum over node pairs and their shared CVEs of factor score x EPSS.
    pub shared_exposure: f64,
    pub injected: usize,
    pub predicted: usize,
    pub clusters: usize,
}

/// One month of the simulation with full intermediates.
#[derive(Debug, Clone)]
pub struct MonthStep {
    pub row: MonthlyReportRow,
    pub snapshot: CorpusSnapshot,
    pub output: PipelineOutput,
}

/// Present the feed as it would have looked on `as_of`: future records are
/// absent and records whose evaluation completed later appear as Received.
fn rewind_records(records: &[CveRecord], as_of: NaiveDate) -> Vec<CveRecord> {
    records
        .iter()
        .filter(|r| r.published <= as_of)
        .map(|r| {
            let mut r = r.clone();
            if r.status == CveStatus::Analyzed && r.modified > as_of {
                r.status = CveStatus::Received;
                r.cvss_base = None;
                r.cvss_version = None;
                r.metrics = None;
                r.modified = r.published;
            }
            r
        })
        .collect()
}

fn month_end(first_day: NaiveDate) -> NaiveDate {
    first_day + Months::new(1) - Days::new(1)
}

/// Run the pipeline once per month after `cutoff`, keeping all intermediates.
pub fn simulate_timeline_detailed(
    inputs: &TimelineInputs,
    cutoff: NaiveDate,
    months: usize,
    params: &PipelineParams,
) -> Result<Vec<MonthStep>> {
    if months < 1 {
        return Err(Error::validation("months must be at least 1"));
    }
    let first_month =
        NaiveDate::from_ymd_opt(cutoff.year(), cutoff.month(), 1).expect("valid month start")
            + Months::new(1);

    let mut steps = Vec::with_capacity(months);
    let mut previous_as_of = cutoff;
    for m in 0..months {
        let month_start = first_month + Months::new(m as u32);
        let as_of = month_end(month_start);
        let snapshot = build_snapshot(
            rewind_records(&inputs.records, as_of),
            &inputs.epss,
            &inputs.exploited_ids,
            inputs.catalog.clone(),
            as_of,
        )?;
        let output = run_pipeline(&snapshot, params)?;

        let injected = inputs
            .records
            .iter()
            .filter(|r| r.published > previous_as_of && r.published <= as_of)
            .count();
        let head = output
            .ranking
            .first()
            .ok_or_else(|| Error::validation("advise returned an empty ranking"))?;
        let shared_exposure = shared_exposure(head, &output.assessed, &snapshot, &output.clusters)?;
        let row = MonthlyReportRow {
            month: format!("{:04}-{:02}", month_start.year(), month_start.month()),
            advised: head.configuration.names().iter().map(|s| s.to_string()).collect(),
            security: head.security,
            resilience: head.resilience,
            shared_exposure,
            injected,
            predicted: output.predictions.len(),
            clusters: output.clusters.cluster_count(),
        };
        steps.push(MonthStep {
            row,
            snapshot,
            output,
        });
        previous_as_of = as_of;
    }
    Ok(steps)
}

pub fn simulate_timeline(
    inputs: &TimelineInputs,
    cutoff: NaiveDate,
    months: usize,
    params: &PipelineParams,
) -> Result<Vec<MonthlyReportRow>> {
    Ok(simulate_timeline_detailed(inputs, cutoff, months, params)?
        .into_iter()
        .map(|step| step.row)
        .collect())
}

/// Pair-shared exposure of a configuration: factor score times EPSS summed
/// over every unordered pair's shared CVEs, in canonical order.
fn shared_exposure(
    report: &RiskReport,
    assessed: &BTreeMap<CveId, AssessedScore>,
    snapshot: &CorpusSnapshot,
    clusters: &ClusterAssignment,
) -> Result<f64> {
    let groups = shared_groups(clusters);
    let nodes = report.configuration.nodes();
    let mut total = 0.0;
    for i in 0..nodes.len() {
        for j in (i + 1)..nodes.len() {
            let shared = shared_vulnerabilities(&nodes[i], &nodes[j], snapshot, &groups)?;
            for id in &shared {
                let a = assessed
                    .get(id)
                    .ok_or_else(|| Error::validation(format!("no assessment for {id}")))?;
                total += a.lazarus * snapshot.epss_of(id);
            }
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub accuracy: f64,
    pub rmse: f64,
    pub majority_fraction: f64,
    pub train_size: usize,
    pub test_size: usize,
    #[serde(skip)]
    pub train_seconds: f64,
    #[serde(skip)]
    pub infer_seconds: f64,
    #[serde(skip)]
    pub warnings: Vec<String>,
}

/// Train/test benchmark of the score predictor on records with known truth.
///
/// The split is stratified by score bin when every bin has at least two
/// members, otherwise it falls back to an unstratified split with a warning.
/// `shuffle_labels` destroys the text-label relationship to measure the
/// null-model baseline.
#[allow(clippy::too_many_arguments)]
pub fn bench_predictor(
    records: &[CveRecord],
    truth: &BTreeMap<CveId, f64>,
    split_fraction: f64,
    binning: ScoreBinning,
    hyperparams: Hyperparams,
    min_df: usize,
    seed: u64,
    shuffle_labels: bool,
) -> Result<BenchRow> {
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(Error::validation(format!(
            "split fraction {split_fraction} outside (0, 1)"
        )));
    }
    let usable: Vec<&CveRecord> = records
        .iter()
        .filter(|r| truth.contains_key(&r.id))
        .collect();
    if usable.len() < 2 {
        return Err(Error::validation(
            "benchmark needs at least two records with known scores",
        ));
    }
    let mut warnings = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut scores: Vec<f64> = usable.iter().map(|r| truth[&r.id]).collect();
    if shuffle_labels {
        scores.shuffle(&mut rng);
    }
    let bins: Vec<usize> = scores
        .iter()
        .map(|&s| binning.bin_of(s))
        .collect::<Result<_>>()?;

    // Stratified split: shuffle within each bin, take the head as training.
    let mut by_bin: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &b) in bins.iter().enumerate() {
        by_bin.entry(b).or_default().push(i);
    }
    let stratified = by_bin.values().all(|members| members.len() >= 2);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    if stratified {
        for members in by_bin.values() {
            let mut members = members.clone();
            members.shuffle(&mut rng);
            let pivot = ((members.len() as f64 * split_fraction).round() as usize)
                .clamp(1, members.len() - 1);
            train_idx.extend_from_slice(&members[..pivot]);
            test_idx.extend_from_slice(&members[pivot..]);
        }
    } else {
        warnings.push(
            "a score bin has fewer than two members; falling back to an unstratified split"
                .to_string(),
        );
        let mut all: Vec<usize> = (0..usable.len()).collect();
        all.shuffle(&mut rng);
        let pivot =
            ((all.len() as f64 * split_fraction).round() as usize).clamp(1, all.len() - 1);
        train_idx.extend_from_slice(&all[..pivot]);
        test_idx.extend_from_slice(&all[pivot..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    // Vocabulary from training descriptions only.
    let vocab = Vocabulary::build(
        train_idx.iter().map(|&i| usable[i].description.as_str()),
        min_df,
    )?;
    let train_features: Vec<FeatureVector> = train_idx
        .iter()
        .map(|&i| vectorize_tfidf(&usable[i].description, &vocab))
        .collect();
    let train_bins: Vec<usize> = train_idx.iter().map(|&i| bins[i]).collect();
    let model = train_forest(
        &train_features,
        &train_bins,
        binning,
        hyperparams,
        Some(vocab.clone()),
        seed,
    )?;

    let test: Vec<(FeatureVector, f64)> = test_idx
        .iter()
        .map(|&i| (vectorize_tfidf(&usable[i].description, &vocab), scores[i]))
        .collect();
    let metrics = evaluate(&model, &test)?;

    // Null baseline: frequency of the training-majority bin within the test set.
    let mut train_counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &i in &train_idx {
        *train_counts.entry(bins[i]).or_insert(0) += 1;
    }
    let majority_bin = train_counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
        .map(|(&bin, _)| bin)
        .expect("training set is non-empty");
    let majority_fraction = test_idx
        .iter()
        .filter(|&&i| bins[i] == majority_bin)
        .count() as f64
        / test_idx.len() as f64;

    Ok(BenchRow {
        accuracy: metrics.accuracy,
        rmse: metrics.rmse,
        majority_fraction,
        train_size: train_idx.len(),
        test_size: test_idx.len(),
        train_seconds: metrics.train_seconds,
        infer_seconds: metrics.infer_seconds,
        warnings,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub algorithm: String,
    pub featurization: String,
    pub advised: Vec<String>,
    /// Security of the advised configuration under the plain factor score.
    pub security: f64,
    /// Resilience of the advised configuration under the plain factor score.
    pub resilience: f64,
    /// The single comparison number: security + resilience.
    pub risk: f64,
}

/// Run the full pipeline once per (algorithm, featurization) cell and report
/// the factor-score risk of each cell's advised configuration.
pub fn compare_clusterings(
    snapshot: &CorpusSnapshot,
    algorithms: &[ClusterAlgorithm],
    featurizations: &[FeatureKind],
    params: &PipelineParams,
) -> Result<Vec<CompareRow>> {
    let mut rows = Vec::new();
    for &algorithm in algorithms {
        for &featurization in featurizations {
            let cell_params = PipelineParams {
                algorithm,
                cluster_features: featurization,
                ..params.clone()
            };
            let output = run_pipeline(snapshot, &cell_params)?;
            let head = output
                .ranking
                .first()
                .ok_or_else(|| Error::validation("advise returned an empty ranking"))?;
            let groups = shared_groups(&output.clusters);
            let (security, resilience) =
                factor_score_risks(head, &output.assessed, snapshot, &groups)?;
            rows.push(CompareRow {
                algorithm: algorithm.name().to_string(),
                featurization: featurization.to_string(),
                advised: head.configuration.names().iter().map(|s| s.to_string()).collect(),
                security,
                resilience,
                risk: security + resilience,
            });
        }
    }
    Ok(rows)
}

/// Security and resilience of a configuration summed over the plain factor
/// score instead of the EPSS-weighted one.
fn factor_score_risks(
    report: &RiskReport,
    assessed: &BTreeMap<CveId, AssessedScore>,
    snapshot: &CorpusSnapshot,
    groups: &[BTreeSet<CveId>],
) -> Result<(f64, f64)> {
    let lazarus_of = |id: &CveId| -> Result<f64> {
        assessed
            .get(id)
            .map(|a| a.lazarus)
            .ok_or_else(|| Error::validation(format!("no assessment for {id}")))
    };
    let nodes = report.configuration.nodes();
    let mut security = 0.0;
    for node in nodes {
        for id in &vulnerabilities_of(node, snapshot) {
            security += lazarus_of(id)?;
        }
    }
    let mut resilience = 0.0;
    for i in 0..nodes.len() {
        for j in (i + 1)..nodes.len() {
            for id in &shared_vulnerabilities(&nodes[i], &nodes[j], snapshot, groups)? {
                resilience += lazarus_of(id)?;
            }
        }
    }
    Ok((security, resilience))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::validation(format!("unknown format {other:?}"))),
        }
    }
}

/// Write timeline rows. Output is bit-stable for equal inputs.
pub fn emit_report(
    rows: &[MonthlyReportRow],
    format: ReportFormat,
    mut w: impl Write,
) -> Result<()> {
    match format {
        ReportFormat::Csv => {
            writeln!(
                w,
                "month,security,resilience,shared_exposure,injected,predicted,clusters"
            )?;
            for row in rows {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    row.month,
                    row.security,
                    row.resilience,
                    row.shared_exposure,
                    row.injected,
                    row.predicted,
                    row.clusters
                )?;
            }
        }
        ReportFormat::Json => {
            #[derive(Serialize)]
            struct File<'a> {
                version: u32,
                rows: &'a [MonthlyReportRow],
            }
            serde_json::to_writer_pretty(
                &mut w,
                &File {
                    version: REPORT_SCHEMA_VERSION,
                    rows,
                },
            )
            .map_err(|e| Error::format(e.to_string()))?;
            w.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// Write comparison rows as CSV for plotting.
pub fn emit_comparison_csv(rows: &[CompareRow], mut w: impl Write) -> Result<()> {
    writeln!(w, "algorithm,featurization,security,resilience,risk")?;
    for row in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            row.algorithm, row.featurization, row.security, row.resilience, row.risk
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{demo_dataset, generate_synthetic_dataset, GeneratorSpec};

    fn demo_snapshot() -> CorpusSnapshot {
        let demo = demo_dataset();
        build_snapshot(
            demo.records,
            &demo.epss,
            &demo.exploit_ids,
            demo.catalog,
            NaiveDate::parse_from_str(crate::corpus::DEMO_AS_OF, "%Y-%m-%d").unwrap(),
        )
        .unwrap()
    }

    fn fast_params() -> PipelineParams {
        PipelineParams {
            hyperparams: Hyperparams {
                tree_count: 20,
                ..Hyperparams::default()
            },
            algorithm: ClusterAlgorithm::Dbscan {
                eps: 0.4,
                min_samples: 3,
            },
            ..PipelineParams::default()
        }
    }

    #[test]
    fn pipeline_runs_all_stages_on_demo_data() {
        let snapshot = demo_snapshot();
        let output = run_pipeline(&snapshot, &fast_params()).unwrap();
        assert_eq!(output.assessed.len(), snapshot.records().len());
        assert_eq!(
            output.predictions.len(),
            snapshot.received_ids().len()
        );
        assert!(!output.ranking.is_empty());
        // Ranking covers C(16, 4) configurations.
        assert_eq!(output.ranking.len(), 1820);
    }

    #[test]
    fn pipeline_without_received_skips_prediction() {
        let spec = GeneratorSpec {
            total: 24,
            received_fraction: 0.0,
            shared_groups: 0,
            shared_group_size: 0,
            ..GeneratorSpec::default()
        };
        let data = generate_synthetic_dataset(&spec, 3).unwrap();
        let snapshot = build_snapshot(
            data.records,
            &data.epss,
            &data.exploit_ids,
            data.catalog,
            NaiveDate::from_ymd_opt(2024, 1, 31).unwrap(),
        )
        .unwrap();
        let output = run_pipeline(&snapshot, &fast_params()).unwrap();
        assert!(output.predictions.is_empty());
        assert!(output.model.is_none());
        assert!(!output.ranking.is_empty());
    }

    #[test]
    fn timeline_emits_one_row_per_month() {
        let data = generate_synthetic_dataset(
            &GeneratorSpec {
                total: 80,
                shared_groups: 2,
                shared_group_size: 5,
                ..GeneratorSpec::default()
            },
            5,
        )
        .unwrap();
        let inputs = TimelineInputs {
            records: data.records,
            epss: data.epss,
            exploited_ids: data.exploit_ids,
            catalog: data.catalog,
        };
        let cutoff = NaiveDate::from_ymd_opt(2022, 12, 31).unwrap();
        let params = PipelineParams {
            nodes: 3,
            ..fast_params()
        };
        let rows = simulate_timeline(&inputs, cutoff, 3, &params).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].month, "2023-01");
        assert_eq!(rows[1].month, "2023-02");
        assert_eq!(rows[2].month, "2023-03");
        let again = simulate_timeline(&inputs, cutoff, 3, &params).unwrap();
        assert_eq!(rows, again);
    }

    #[test]
    fn report_csv_shape_and_stability() {
        let rows = vec![MonthlyReportRow {
            month: "2023-01".into(),
            advised: vec!["a".into(), "b".into()],
            security: 10.5,
            resilience: 2.25,
            shared_exposure: 0.75,
            injected: 4,
            predicted: 1,
            clusters: 2,
        }];
        let mut a = Vec::new();
        emit_report(&rows, ReportFormat::Csv, &mut a).unwrap();
        let text = String::from_utf8(a.clone()).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "month,security,resilience,shared_exposure,injected,predicted,clusters"
        );
        assert_eq!(text.lines().count(), 2);
        let mut b = Vec::new();
        emit_report(&rows, ReportFormat::Csv, &mut b).unwrap();
        assert_eq!(a, b);

        let mut j = Vec::new();
        emit_report(&rows, ReportFormat::Json, &mut j).unwrap();
        let parsed: serde_json::Value = serde_json::from_slice(&j).unwrap();
        assert_eq!(parsed["version"], 1);
        assert_eq!(parsed["rows"][0]["month"], "2023-01");
    }

    #[test]
    fn empty_rows_make_header_only_csv() {
        let mut out = Vec::new();
        emit_report(&[], ReportFormat::Csv, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 1);
    }

    #[test]
    fn bench_predictor_learns_planted_signal() {
        let spec = GeneratorSpec {
            total: 400,
            received_fraction: 0.0,
            shared_groups: 0,
            shared_group_size: 0,
            ..GeneratorSpec::default()
        };
        let data = generate_synthetic_dataset(&spec, 12).unwrap();
        let bench = bench_predictor(
            &data.records,
            &data.hidden_scores,
            0.8,
            ScoreBinning::default(),
            Hyperparams {
                tree_count: 40,
                ..Hyperparams::default()
            },
            2,
            7,
            false,
        )
        .unwrap();
        assert!(bench.accuracy >= 0.9, "accuracy {}", bench.accuracy);
        assert!(bench.rmse <= 1.0, "rmse {}", bench.rmse);
        assert!(bench.warnings.is_empty());
    }

    #[test]
    fn bench_rejects_bad_split() {
        let data = generate_synthetic_dataset(
            &GeneratorSpec {
                total: 20,
                shared_groups: 0,
                shared_group_size: 0,
                ..GeneratorSpec::default()
            },
            1,
        )
        .unwrap();
        for bad in [0.0, 1.0, -0.5, 1.5] {
            assert!(bench_predictor(
                &data.records,
                &data.hidden_scores,
                bad,
                ScoreBinning::default(),
                Hyperparams::default(),
                1,
                1,
                false,
            )
            .is_err());
        }
    }

    #[test]
    fn comparison_grid_covers_all_cells() {
        let snapshot = demo_snapshot();
        let demo = demo_dataset();
        let embeddings = crate::corpus::synthetic_embeddings(&demo.records, 24, 7);
        let params = PipelineParams {
            embeddings: Some(embeddings),
            ..fast_params()
        };
        let rows = compare_clusterings(
            &snapshot,
            &[
                ClusterAlgorithm::Dbscan {
                    eps: 0.4,
                    min_samples: 3,
                },
                ClusterAlgorithm::Kmeans { k: 6 },
            ],
            &[FeatureKind::Bow, FeatureKind::Embeddings],
            &params,
        )
        .unwrap();
        assert_eq!(rows.len(), 4);
        let again = compare_clusterings(
            &snapshot,
            &[ClusterAlgorithm::Dbscan {
                eps: 0.4,
                min_samples: 3,
            }],
            &[FeatureKind::Bow],
            &params,
        )
        .unwrap();
        assert_eq!(rows[0].risk, again[0].risk);
        let mut csv = Vec::new();
        emit_comparison_csv(&rows, &mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 5);
    }

    #[test]
    fn embeddings_requested_but_missing_is_an_error() {
        let snapshot = demo_snapshot();
        let params = PipelineParams {
            cluster_features: FeatureKind::Embeddings,
            embeddings: None,
            ..fast_params()
        };
        assert!(run_pipeline(&snapshot, &params).is_err());
    }
}
