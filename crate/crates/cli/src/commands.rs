//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Serialize;

use riskmgr_core::cluster::{dbscan, kmeans_baseline, optics};
use riskmgr_core::configurator::Policy;
use riskmgr_core::corpus::{
    self, build_snapshot, demo_dataset, generate_synthetic_dataset, load_catalog, parse_cve_feed,
    parse_epss_csv, parse_exploit_index, synthetic_embeddings, write_cve_feed, CorpusSnapshot,
    CveId, CveRecord, CveStatus, GeneratorSpec, SyntheticDataset,
};
use riskmgr_core::error::{Error, Result};
use riskmgr_core::pipeline::{
    bench_predictor, compare_clusterings, emit_comparison_csv, emit_report, run_pipeline,
    simulate_timeline, ClusterAlgorithm, FeatureKind, PipelineParams, ReportFormat,
    TimelineInputs, REPORT_SCHEMA_VERSION,
};
use riskmgr_core::predictor::{train_forest, ForestModel, Hyperparams, ScoreBinning};
use riskmgr_core::scoring::{assess_all, export_assessed_csv};
use riskmgr_core::textfeat::{
    load_embeddings, vectorize_tfidf, FeatureVector, TokenizeOptions, Vocabulary,
};

use crate::args::*;
use crate::serve;

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Ingest { input, output } => ingest(&input, &output),
        Command::Train {
            cve,
            as_of,
            features,
            forest,
            out,
        } => train(&cve, as_of, &features, &forest, &out),
        Command::Predict {
            model,
            cve,
            emb,
            out,
        } => predict(&model, &cve, emb.as_deref(), out.as_deref()),
        Command::Cluster {
            cve,
            as_of,
            cluster,
            features,
            seed,
            out,
            reachability,
        } => run_cluster(
            &cve,
            as_of,
            &cluster,
            &features,
            seed,
            out.as_deref(),
            reachability.as_deref(),
        ),
        Command::Assess {
            input,
            model,
            emb,
            out,
        } => assess(&input, model.as_deref(), emb.as_deref(), out.as_deref()),
        Command::Advise {
            input,
            pipeline,
            output,
            explain,
        } => advise_cmd(&input, &pipeline, &output, explain),
        Command::Simulate {
            input,
            months,
            pipeline,
            output,
        } => simulate(&input, months, &pipeline, &output),
        Command::Bench {
            cve,
            truth,
            split,
            shuffle_labels,
            features,
            forest,
            output,
        } => bench(
            &cve,
            truth.as_deref(),
            split,
            shuffle_labels,
            &features,
            &forest,
            &output,
        ),
        Command::CompareClustering {
            input,
            algos,
            feats,
            pipeline,
            output,
        } => compare(&input, &algos, &feats, &pipeline, &output),
        Command::Generate {
            preset,
            total,
            seed,
            start,
            end,
            received_fraction,
            families,
            shared_groups,
            group_size,
            emb_dim,
            out,
        } => generate(
            preset,
            total,
            seed,
            start,
            end,
            received_fraction,
            families,
            shared_groups,
            group_size,
            emb_dim,
            &out,
        ),
        Command::Serve {
            listen,
            input,
            pipeline,
        } => serve_cmd(&listen, &input, &pipeline),
    }
}

// ---- shared plumbing -------------------------------------------------------

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

fn writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) => Ok(Box::new(BufWriter::new(File::create(p)?))),
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

fn read_feed(path: &Path, as_of: Option<NaiveDate>) -> Result<Vec<CveRecord>> {
    let mut records = parse_cve_feed(open(path)?)?;
    if let Some(cutoff) = as_of {
        records.retain(|r| r.published <= cutoff);
    }
    Ok(records)
}

pub(crate) fn load_snapshot(input: &InputArgs) -> Result<CorpusSnapshot> {
    build_snapshot_from_paths(
        &input.cve,
        input.epss.as_deref(),
        input.exploits.as_deref(),
        input.catalog.as_deref(),
        input.as_of,
    )
}

pub(crate) fn build_snapshot_from_paths(
    cve: &Path,
    epss: Option<&Path>,
    exploits: Option<&Path>,
    catalog: Option<&Path>,
    as_of: NaiveDate,
) -> Result<CorpusSnapshot> {
    let records = parse_cve_feed(open(cve)?)?;
    let epss_entries = match epss {
        Some(path) => {
            let file = parse_epss_csv(open(path)?, as_of)?;
            for warning in &file.warnings {
                eprintln!("warning: {warning}");
            }
            file.entries
        }
        None => Vec::new(),
    };
    let exploited = match exploits {
        Some(path) => {
            let index = parse_exploit_index(open(path)?)?;
            if index.skipped_rows > 0 {
                eprintln!(
                    "warning: {} exploit rows without a valid CVE id were skipped",
                    index.skipped_rows
                );
            }
            index.ids
        }
        None => Default::default(),
    };
    let catalog = match catalog {
        Some(path) => load_catalog(open(path)?)?,
        None => corpus::default_catalog(),
    };
    build_snapshot(records, &epss_entries, &exploited, catalog, as_of)
}

fn tokenize_options(features: &FeatureArgs) -> TokenizeOptions {
    TokenizeOptions {
        stem: features.stem,
    }
}

fn load_embedding_file(path: Option<&Path>) -> Result<BTreeMap<CveId, FeatureVector>> {
    let path = path.ok_or_else(|| {
        Error::validation("--feat emb requires an embedding file via --emb")
    })?;
    load_embeddings(open(path)?)
}

fn pipeline_params(args: &PipelineArgs) -> Result<PipelineParams> {
    let policy = match args.policy {
        PolicyChoice::ResilienceFirst => Policy::ResilienceFirst,
        PolicyChoice::SecurityFirst => Policy::SecurityFirst,
        PolicyChoice::Weighted => Policy::Weighted(args.alpha),
    };
    let cluster_features = match args.features.feat {
        FeatChoice::Bow => FeatureKind::Bow,
        FeatChoice::Emb => FeatureKind::Embeddings,
    };
    let embeddings = if cluster_features == FeatureKind::Embeddings {
        Some(load_embedding_file(args.features.emb.as_deref())?)
    } else {
        None
    };
    Ok(PipelineParams {
        predictor_features: FeatureKind::Bow,
        cluster_features,
        embeddings,
        min_df: args.features.min_df,
        tokenize: tokenize_options(&args.features),
        algorithm: algorithm_of(args.cluster.algo, &args.cluster),
        binning: ScoreBinning::new(args.forest.bin_width)?,
        hyperparams: hyperparams_of(&args.forest),
        nodes: args.nodes,
        policy,
        seed: args.forest.seed,
        explain: false,
    })
}

fn algorithm_of(algo: AlgoChoice, cluster: &ClusterArgs) -> ClusterAlgorithm {
    match algo {
        AlgoChoice::Dbscan => ClusterAlgorithm::Dbscan {
            eps: cluster.eps,
            min_samples: cluster.min_samples,
        },
        AlgoChoice::Optics => ClusterAlgorithm::Optics {
            min_samples: cluster.min_samples,
            xi: cluster.xi,
        },
        AlgoChoice::Kmeans => ClusterAlgorithm::Kmeans { k: cluster.k },
    }
}

fn hyperparams_of(forest: &ForestArgs) -> Hyperparams {
    Hyperparams {
        tree_count: forest.trees,
        max_depth: forest.max_depth,
        min_leaf: forest.min_leaf,
        features_per_split: None,
    }
}

fn report_format(output: &OutputArgs, default: ReportFormat) -> ReportFormat {
    match output.format {
        Some(FormatChoice::Csv) => ReportFormat::Csv,
        Some(FormatChoice::Json) => ReportFormat::Json,
        None => default,
    }
}

// ---- subcommands -----------------------------------------------------------

fn ingest(input: &InputArgs, output: &OutputArgs) -> Result<()> {
    let snapshot = load_snapshot(input)?;
    let mut w = writer(output.out.as_deref())?;
    serde_json::to_writer_pretty(&mut w, &snapshot).map_err(|e| Error::format(e.to_string()))?;
    writeln!(w)?;
    eprintln!(
        "snapshot as of {}: {} records, {} nodes",
        snapshot.as_of(),
        snapshot.records().len(),
        snapshot.catalog().len()
    );
    Ok(())
}

fn train(
    cve: &Path,
    as_of: Option<NaiveDate>,
    features: &FeatureArgs,
    forest: &ForestArgs,
    out: &Path,
) -> Result<()> {
    let records = read_feed(cve, as_of)?;
    let analyzed: Vec<&CveRecord> = records
        .iter()
        .filter(|r| r.status == CveStatus::Analyzed)
        .collect();
    if analyzed.is_empty() {
        return Err(Error::validation("no analyzed records to train on"));
    }
    let binning = ScoreBinning::new(forest.bin_width)?;
    let mut bins = Vec::with_capacity(analyzed.len());
    for record in &analyzed {
        bins.push(binning.bin_of(record.cvss_base.expect("analyzed record has a base"))?);
    }

    let (vectors, vocabulary) = match features.feat {
        FeatChoice::Bow => {
            let vocab = Vocabulary::build_with(
                analyzed.iter().map(|r| r.description.as_str()),
                features.min_df,
                tokenize_options(features),
            )?;
            let vectors: Vec<FeatureVector> = analyzed
                .iter()
                .map(|r| vectorize_tfidf(&r.description, &vocab))
                .collect();
            (vectors, Some(vocab))
        }
        FeatChoice::Emb => {
            let embeddings = load_embedding_file(features.emb.as_deref())?;
            let vectors = analyzed
                .iter()
                .map(|r| {
                    embeddings.get(&r.id).cloned().ok_or_else(|| {
                        Error::validation(format!("no embedding for {}", r.id))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (vectors, None)
        }
    };

    let model = train_forest(
        &vectors,
        &bins,
        binning,
        hyperparams_of(forest),
        vocabulary,
        forest.seed,
    )?;
    model.save(writer(Some(out))?)?;
    eprintln!(
        "trained {} trees on {} records ({} features) in {:.2}s",
        forest.trees,
        analyzed.len(),
        model.dimension(),
        model.train_seconds()
    );
    Ok(())
}

fn predict(model: &Path, cve: &Path, emb: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let model = ForestModel::load(open(model)?)?;
    let records = read_feed(cve, None)?;
    let received: Vec<&CveRecord> = records
        .iter()
        .filter(|r| r.status == CveStatus::Received)
        .collect();

    let embeddings = match model.vocabulary() {
        Some(_) => None,
        None => Some(load_embedding_file(emb)?),
    };

    let mut w = writer(out)?;
    writeln!(w, "cve_id,bin,score,vote_fraction")?;
    for record in received {
        let vector = match model.vocabulary() {
            Some(vocab) => vectorize_tfidf(&record.description, vocab),
            None => embeddings
                .as_ref()
                .expect("embeddings loaded above")
                .get(&record.id)
                .cloned()
                .ok_or_else(|| Error::validation(format!("no embedding for {}", record.id)))?,
        };
        let p = model.predict_labeled(&record.id, &vector)?;
        writeln!(w, "{},{},{},{}", p.cve_id, p.bin, p.score, p.vote_fraction)?;
    }
    Ok(())
}

fn run_cluster(
    cve: &Path,
    as_of: Option<NaiveDate>,
    cluster: &ClusterArgs,
    features: &FeatureArgs,
    seed: u64,
    out: Option<&Path>,
    reachability: Option<&Path>,
) -> Result<()> {
    let records = read_feed(cve, as_of)?;
    if records.is_empty() {
        return Err(Error::validation("feed has no records to cluster"));
    }
    let points: Vec<(CveId, FeatureVector)> = match features.feat {
        FeatChoice::Bow => {
            let vocab = Vocabulary::build_with(
                records.iter().map(|r| r.description.as_str()),
                features.min_df,
                tokenize_options(features),
            )?;
            records
                .iter()
                .map(|r| (r.id.clone(), vectorize_tfidf(&r.description, &vocab)))
                .collect()
        }
        FeatChoice::Emb => {
            let embeddings = load_embedding_file(features.emb.as_deref())?;
            records
                .iter()
                .map(|r| {
                    embeddings
                        .get(&r.id)
                        .cloned()
                        .map(|v| (r.id.clone(), v))
                        .ok_or_else(|| Error::validation(format!("no embedding for {}", r.id)))
                })
                .collect::<Result<_>>()?
        }
    };

    let assignment = match cluster.algo {
        AlgoChoice::Dbscan => dbscan(&points, cluster.eps, cluster.min_samples)?,
        AlgoChoice::Optics => optics(&points, cluster.min_samples, cluster.xi)?,
        AlgoChoice::Kmeans => kmeans_baseline(&points, cluster.k, seed)?,
    };
    assignment.export_labels_csv(writer(out)?)?;
    if let Some(path) = reachability {
        assignment.export_reachability_csv(writer(Some(path))?)?;
    }
    eprintln!(
        "{} points, {} clusters, {} noise",
        assignment.labels.len(),
        assignment.cluster_count(),
        assignment.labels.values().filter(|&&l| l < 0).count()
    );
    Ok(())
}

fn assess(
    input: &InputArgs,
    model: Option<&Path>,
    emb: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let snapshot = load_snapshot(input)?;
    let received = snapshot.received_ids();
    let mut predictions = BTreeMap::new();
    if !received.is_empty() {
        let model_path = model.ok_or_else(|| {
            Error::validation(format!(
                "snapshot has {} received CVEs; supply --model to predict them",
                received.len()
            ))
        })?;
        let model = ForestModel::load(open(model_path)?)?;
        let embeddings = match model.vocabulary() {
            Some(_) => None,
            None => Some(load_embedding_file(emb)?),
        };
        for id in &received {
            let record = snapshot.record(id).expect("received id is in the snapshot");
            let vector = match model.vocabulary() {
                Some(vocab) => vectorize_tfidf(&record.description, vocab),
                None => embeddings
                    .as_ref()
                    .expect("embeddings loaded above")
                    .get(id)
                    .cloned()
                    .ok_or_else(|| Error::validation(format!("no embedding for {id}")))?,
            };
            predictions.insert(id.clone(), model.predict_labeled(id, &vector)?);
        }
    }
    let assessed = assess_all(&snapshot, &predictions)?;
    export_assessed_csv(&assessed, writer(out)?)?;
    Ok(())
}

#[derive(Serialize)]
struct RankingRow {
    rank: usize,
    nodes: Vec<String>,
    security: f64,
    resilience: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    shared_detail: Option<serde_json::Value>,
}

fn advise_cmd(
    input: &InputArgs,
    pipeline: &PipelineArgs,
    output: &OutputArgs,
    explain: bool,
) -> Result<()> {
    let snapshot = load_snapshot(input)?;
    let mut params = pipeline_params(pipeline)?;
    params.explain = explain;
    let result = run_pipeline(&snapshot, &params)?;

    let rows: Vec<RankingRow> = result
        .ranking
        .iter()
        .enumerate()
        .map(|(i, report)| RankingRow {
            rank: i + 1,
            nodes: report
                .configuration
                .names()
                .iter()
                .map(|s| s.to_string())
                .collect(),
            security: report.security,
            resilience: report.resilience,
            shared_detail: report
                .shared_detail
                .as_ref()
                .map(|d| serde_json::to_value(d).expect("detail serializes")),
        })
        .collect();

    let mut w = writer(output.out.as_deref())?;
    match report_format(output, ReportFormat::Json) {
        ReportFormat::Json => {
            #[derive(Serialize)]
            struct File<'a> {
                version: u32,
                policy: String,
                rows: &'a [RankingRow],
            }
            serde_json::to_writer_pretty(
                &mut w,
                &File {
                    version: REPORT_SCHEMA_VERSION,
                    policy: format!("{:?}", pipeline.policy).to_lowercase(),
                    rows: &rows,
                },
            )
            .map_err(|e| Error::format(e.to_string()))?;
            writeln!(w)?;
        }
        ReportFormat::Csv => {
            writeln!(w, "rank,nodes,security,resilience")?;
            for row in &rows {
                writeln!(
                    w,
                    "{},{},{},{}",
                    row.rank,
                    row.nodes.join(";"),
                    row.security,
                    row.resilience
                )?;
            }
        }
    }
    Ok(())
}

fn simulate(
    input: &InputArgs,
    months: usize,
    pipeline: &PipelineArgs,
    output: &OutputArgs,
) -> Result<()> {
    let records = read_feed(&input.cve, None)?;
    let epss_entries = match input.epss.as_deref() {
        Some(path) => parse_epss_csv(open(path)?, input.as_of)?.entries,
        None => Vec::new(),
    };
    let exploited = match input.exploits.as_deref() {
        Some(path) => parse_exploit_index(open(path)?)?.ids,
        None => Default::default(),
    };
    let catalog = match input.catalog.as_deref() {
        Some(path) => load_catalog(open(path)?)?,
        None => corpus::default_catalog(),
    };
    let inputs = TimelineInputs {
        records,
        epss: epss_entries,
        exploited_ids: exploited,
        catalog,
    };
    let params = pipeline_params(pipeline)?;
    let rows = simulate_timeline(&inputs, input.as_of, months, &params)?;
    emit_report(
        &rows,
        report_format(output, ReportFormat::Csv),
        writer(output.out.as_deref())?,
    )?;
    Ok(())
}

fn bench(
    cve: &Path,
    truth: Option<&Path>,
    split: f64,
    shuffle_labels: bool,
    features: &FeatureArgs,
    forest: &ForestArgs,
    output: &OutputArgs,
) -> Result<()> {
    let records = read_feed(cve, None)?;
    let mut truth_map: BTreeMap<CveId, f64> = records
        .iter()
        .filter_map(|r| r.cvss_base.map(|b| (r.id.clone(), b)))
        .collect();
    if let Some(path) = truth {
        for (id, score) in read_truth_csv(path)? {
            truth_map.insert(id, score);
        }
    }
    let row = bench_predictor(
        &records,
        &truth_map,
        split,
        ScoreBinning::new(forest.bin_width)?,
        hyperparams_of(forest),
        features.min_df,
        forest.seed,
        shuffle_labels,
    )?;
    for warning in &row.warnings {
        eprintln!("warning: {warning}");
    }
    eprintln!(
        "train {:.2}s, inference {:.2}s",
        row.train_seconds, row.infer_seconds
    );

    let mut w = writer(output.out.as_deref())?;
    match report_format(output, ReportFormat::Json) {
        ReportFormat::Json => {
            #[derive(Serialize)]
            struct File {
                version: u32,
                shuffled_labels: bool,
                accuracy: f64,
                rmse: f64,
                majority_fraction: f64,
                train_size: usize,
                test_size: usize,
            }
            serde_json::to_writer_pretty(
                &mut w,
                &File {
                    version: REPORT_SCHEMA_VERSION,
                    shuffled_labels: shuffle_labels,
                    accuracy: row.accuracy,
                    rmse: row.rmse,
                    majority_fraction: row.majority_fraction,
                    train_size: row.train_size,
                    test_size: row.test_size,
                },
            )
            .map_err(|e| Error::format(e.to_string()))?;
            writeln!(w)?;
        }
        ReportFormat::Csv => {
            writeln!(
                w,
                "shuffled_labels,accuracy,rmse,majority_fraction,train_size,test_size"
            )?;
            writeln!(
                w,
                "{},{},{},{},{},{}",
                shuffle_labels,
                row.accuracy,
                row.rmse,
                row.majority_fraction,
                row.train_size,
                row.test_size
            )?;
        }
    }
    Ok(())
}

fn read_truth_csv(path: &Path) -> Result<Vec<(CveId, f64)>> {
    let reader = open(path)?;
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if idx == 0 {
            if line.trim() != "cve_id,score" {
                return Err(Error::format("truth file must start with `cve_id,score`"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (id, score) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(idx + 1, "expected `cve_id,score`"))?;
        out.push((
            CveId::parse(id.trim()).map_err(|e| Error::parse(idx + 1, e.to_string()))?,
            score
                .trim()
                .parse()
                .map_err(|_| Error::parse(idx + 1, "non-numeric score"))?,
        ));
    }
    Ok(out)
}

fn compare(
    input: &InputArgs,
    algos: &[AlgoChoice],
    feats: &[FeatChoice],
    pipeline: &PipelineArgs,
    output: &OutputArgs,
) -> Result<()> {
    let snapshot = load_snapshot(input)?;
    let mut params = pipeline_params(pipeline)?;
    let featurizations: Vec<FeatureKind> = feats
        .iter()
        .map(|f| match f {
            FeatChoice::Bow => FeatureKind::Bow,
            FeatChoice::Emb => FeatureKind::Embeddings,
        })
        .collect();
    if featurizations.contains(&FeatureKind::Embeddings) && params.embeddings.is_none() {
        params.embeddings = Some(load_embedding_file(pipeline.features.emb.as_deref())?);
    }
    let algorithms: Vec<ClusterAlgorithm> = algos
        .iter()
        .map(|a| algorithm_of(*a, &pipeline.cluster))
        .collect();
    let rows = compare_clusterings(&snapshot, &algorithms, &featurizations, &params)?;
    let mut w = writer(output.out.as_deref())?;
    match report_format(output, ReportFormat::Csv) {
        ReportFormat::Csv => emit_comparison_csv(&rows, &mut w)?,
        ReportFormat::Json => {
            #[derive(Serialize)]
            struct File<'a> {
                version: u32,
                rows: &'a [riskmgr_core::pipeline::CompareRow],
            }
            serde_json::to_writer_pretty(
                &mut w,
                &File {
                    version: REPORT_SCHEMA_VERSION,
                    rows: &rows,
                },
            )
            .map_err(|e| Error::format(e.to_string()))?;
            writeln!(w)?;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn generate(
    preset: Preset,
    total: usize,
    seed: u64,
    start: NaiveDate,
    end: NaiveDate,
    received_fraction: f64,
    families: usize,
    shared_groups: usize,
    group_size: usize,
    emb_dim: usize,
    out: &Path,
) -> Result<()> {
    let dataset = match preset {
        Preset::Demo => demo_dataset(),
        Preset::Synthetic => {
            let spec = GeneratorSpec {
                total,
                families,
                start,
                end,
                received_fraction,
                shared_groups,
                shared_group_size: group_size,
                ..GeneratorSpec::default()
            };
            generate_synthetic_dataset(&spec, seed)?
        }
    };
    write_dataset(&dataset, emb_dim, seed, out)?;
    eprintln!(
        "wrote {} records, {} epss rows, {} exploit ids to {}",
        dataset.records.len(),
        dataset.epss.len(),
        dataset.exploit_ids.len(),
        out.display()
    );
    Ok(())
}

pub(crate) fn write_dataset(
    dataset: &SyntheticDataset,
    emb_dim: usize,
    seed: u64,
    dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let file = |name: &str| -> PathBuf { dir.join(name) };

    write_cve_feed(
        &dataset.records,
        BufWriter::new(File::create(file("cve.jsonl"))?),
    )?;

    let mut epss = BufWriter::new(File::create(file("epss.csv"))?);
    let model_date = dataset
        .epss
        .first()
        .map(|e| e.model_date)
        .unwrap_or_default();
    writeln!(
        epss,
        "#model_version:synthetic,score_date:{model_date}T00:00:00+0000"
    )?;
    writeln!(epss, "cve,epss,percentile")?;
    for entry in &dataset.epss {
        writeln!(epss, "{},{},{}", entry.cve_id, entry.probability, entry.percentile)?;
    }

    let mut exploits = BufWriter::new(File::create(file("exploits.csv"))?);
    writeln!(exploits, "id,codes")?;
    for (i, id) in dataset.exploit_ids.iter().enumerate() {
        writeln!(exploits, "{},{}", i + 1, id)?;
    }

    let mut catalog = BufWriter::new(File::create(file("catalog.json"))?);
    serde_json::to_writer_pretty(&mut catalog, &dataset.catalog)
        .map_err(|e| Error::format(e.to_string()))?;
    writeln!(catalog)?;

    let mut truth = BufWriter::new(File::create(file("truth.csv"))?);
    writeln!(truth, "cve_id,score")?;
    for (id, score) in &dataset.hidden_scores {
        writeln!(truth, "{id},{score}")?;
    }

    let embeddings = synthetic_embeddings(&dataset.records, emb_dim, seed);
    let mut emb = BufWriter::new(File::create(file("embeddings.csv"))?);
    for (id, vector) in &embeddings {
        write!(emb, "{id}")?;
        for v in vector.values() {
            write!(emb, ",{v}")?;
        }
        writeln!(emb)?;
    }
    Ok(())
}

fn serve_cmd(listen: &str, input: &OptionalInputArgs, pipeline: &PipelineArgs) -> Result<()> {
    let params = pipeline_params(pipeline)?;
    let initial = match (&input.cve, input.as_of) {
        (Some(cve), Some(as_of)) => Some(build_snapshot_from_paths(
            cve,
            input.epss.as_deref(),
            input.exploits.as_deref(),
            input.catalog.as_deref(),
            as_of,
        )?),
        (Some(_), None) => {
            return Err(Error::validation("--cve needs --as-of to build a snapshot"))
        }
        _ => None,
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(serve::run(listen, initial, params))
}
