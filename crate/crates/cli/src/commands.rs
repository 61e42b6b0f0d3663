//! Subcommand implementations. Each drives one pipeline stage end to end:
//! read artifacts, call the library, write artifacts, print a one-line
//! summary to stdout.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

use remixtree_core::features::{
    describe, read_rows_tsv, transform_and_screen, write_rows_tsv, DroppedColumn, Featurizer,
    RowLevel,
};
use remixtree_core::ingest::{apply_filters, build_forest, mining_subset};
use remixtree_core::model::{events_from_forest, AuthorId, SongForest};
use remixtree_core::profile::{profile_collaborations, RecurringCollaboration};
use remixtree_core::synth::{generate, oracle_mine, OutcomeSongTruth, PlantedTruth};
use remixtree_countreg::{
    clustered_se, coef_table, fit, select_model, CoefRow, Dataset, Family, FitResult,
    SelectionResult,
};

use crate::config::PipelineConfig;
use crate::error::{at_fit_stage, at_stage, io_err, CliError, Result};
use crate::io::{read_events, read_json, read_jsonl, write_events, write_json, write_jsonl, write_text};
use crate::render;

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// Raw event log, one JSON event per line.
    #[arg(long)]
    pub input: PathBuf,
    /// Exclusion settings as JSON; overrides the config file's `filters`
    /// section. Defaults drop nothing.
    #[arg(long)]
    pub filters: Option<PathBuf>,
    /// Retained forest, re-serialized as an event log.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-criterion removal counts (JSON).
    #[arg(long)]
    pub report_out: Option<PathBuf>,
}

pub fn run_ingest(args: &IngestArgs, config: &PipelineConfig) -> Result<()> {
    let events = read_events(&args.input)?;
    let forest = build_forest(&events).map_err(at_stage("ingest"))?;
    let filter_config = match &args.filters {
        Some(path) => read_json(path)?,
        None => config.filter_config(),
    };
    let (filtered, report) = apply_filters(&forest, &filter_config).map_err(at_stage("ingest"))?;
    write_events(&args.out, &events_from_forest(&filtered))?;
    if let Some(path) = &args.report_out {
        write_json(path, &report)?;
    }
    info!(
        "ingest: {} events, {} songs in, {} retained",
        events.len(),
        forest.num_songs(),
        report.retained_songs
    );
    println!(
        "ingested {} events: retained {} songs / {} authors, removed {}",
        events.len(),
        report.retained_songs,
        report.retained_authors,
        report.removed_songs
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct MineArgs {
    /// Forest event log (typically the `ingest` output).
    #[arg(long)]
    pub input: PathBuf,
    /// Keep itemsets occurring in at least this many trees.
    #[arg(long)]
    pub min_occ: Option<u64>,
    /// Keep itemsets whose lift strictly exceeds this.
    #[arg(long)]
    pub min_lift: Option<f64>,
    /// Optional minimum support filter (off by default).
    #[arg(long)]
    pub minsup: Option<f64>,
    /// Mined collaborations, one JSON record per line.
    #[arg(long)]
    pub out: PathBuf,
    /// Association rules behind the retained itemsets.
    #[arg(long)]
    pub rules_out: Option<PathBuf>,
    /// Counting summary (JSON).
    #[arg(long)]
    pub summary_out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MineSummary {
    pub n_transactions: u64,
    pub distinct_itemsets: u64,
    pub n_rules: usize,
    pub n_collaborations: usize,
}

pub fn run_mine(args: &MineArgs, config: &PipelineConfig) -> Result<()> {
    let events = read_events(&args.input)?;
    let forest = build_forest(&events).map_err(at_stage("mine"))?;
    let subset = mining_subset(&forest);
    let miner_config = config.miner_config(args.min_occ, args.min_lift, args.minsup);
    let outcome =
        remixtree_core::miner::mine_recurring(&subset, &miner_config).map_err(at_stage("mine"))?;
    write_jsonl(&args.out, &outcome.collaborations)?;
    if let Some(path) = &args.rules_out {
        write_jsonl(path, &outcome.rules)?;
    }
    let summary = MineSummary {
        n_transactions: outcome.n_transactions,
        distinct_itemsets: outcome.distinct_itemsets,
        n_rules: outcome.rules.len(),
        n_collaborations: outcome.collaborations.len(),
    };
    if let Some(path) = &args.summary_out {
        write_json(path, &summary)?;
    }
    println!(
        "mined {} collaborations ({} rules) from {} transactions",
        summary.n_collaborations, summary.n_rules, summary.n_transactions
    );
    Ok(())
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Level {
    /// One row cluster per song author.
    Occasional,
    /// Restrict to collaboration songs; cluster by collaboration id.
    Recurring,
}

#[derive(Args, Debug)]
pub struct FeaturizeArgs {
    /// Forest event log defining which songs become rows.
    #[arg(long)]
    pub input: PathBuf,
    /// Full event log for reactions, messages, badges, and followings.
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long, value_enum)]
    pub level: Level,
    /// Mined collaborations (required at the recurring level).
    #[arg(long)]
    pub collabs: Option<PathBuf>,
    /// Regression rows as tab-separated text.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-measure descriptive statistics (JSON).
    #[arg(long)]
    pub stats_out: Option<PathBuf>,
}

pub fn run_featurize(args: &FeaturizeArgs) -> Result<()> {
    let forest_events = read_events(&args.input)?;
    let forest = build_forest(&forest_events).map_err(at_stage("featurize"))?;
    let events = read_events(&args.events)?;
    let featurizer = Featurizer::new(&forest, &events);
    let collabs: Vec<RecurringCollaboration> = match (&args.level, &args.collabs) {
        (Level::Recurring, Some(path)) => read_jsonl(path)?,
        (Level::Recurring, None) => {
            return Err(CliError::Invalid(
                "featurize: --level recurring requires --collabs".to_string(),
            ))
        }
        (Level::Occasional, _) => Vec::new(),
    };
    let level = match args.level {
        Level::Occasional => RowLevel::Occasional,
        Level::Recurring => RowLevel::Recurring(&collabs),
    };
    let rows = featurizer.build_rows(level).map_err(at_stage("featurize"))?;
    let file = File::create(&args.out).map_err(|e| io_err(&args.out, e))?;
    write_rows_tsv(&rows, BufWriter::new(file)).map_err(at_stage("featurize"))?;
    if let Some(path) = &args.stats_out {
        let stats = describe(&rows).map_err(at_stage("featurize"))?;
        write_json(path, &stats)?;
    }
    println!("featurized {} rows from {} songs", rows.len(), forest.num_songs());
    Ok(())
}

#[derive(Args, Debug)]
pub struct ProfileArgs {
    /// Mined collaborations to enrich.
    #[arg(long)]
    pub collabs: PathBuf,
    /// Forest event log the collaborations were mined on.
    #[arg(long)]
    pub forest: PathBuf,
    /// Full event log for messages, invitations, and reactions.
    #[arg(long)]
    pub events: PathBuf,
    /// Enriched collaborations, one JSON record per line.
    #[arg(long)]
    pub out: PathBuf,
    /// Bins, band-detection signals, and tag overlaps (JSON).
    #[arg(long)]
    pub report_out: Option<PathBuf>,
}

pub fn run_profile(args: &ProfileArgs, config: &PipelineConfig) -> Result<()> {
    let collabs: Vec<RecurringCollaboration> = read_jsonl(&args.collabs)?;
    let forest_events = read_events(&args.forest)?;
    let forest = build_forest(&forest_events).map_err(at_stage("profile"))?;
    let events = read_events(&args.events)?;
    let profile_config = config.profile_config();
    let (enriched, report) = profile_collaborations(&collabs, &forest, &events, &profile_config)
        .map_err(at_stage("profile"))?;
    write_jsonl(&args.out, &enriched)?;
    if let Some(path) = &args.report_out {
        write_json(path, &report)?;
    }
    println!(
        "profiled {} collaborations: {} binned features, {} band candidates",
        enriched.len(),
        report.binners.len(),
        report.established.len()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Regression rows (tab-separated, from `featurize`).
    #[arg(long)]
    pub data: PathBuf,
    /// Outcome column; the row format defines `overdubs`.
    #[arg(long, default_value = "overdubs")]
    pub outcome: String,
    /// Cluster column for robust standard errors, or `none`.
    #[arg(long, default_value = "cluster_id")]
    pub cluster: String,
    /// `auto` walks the full selection protocol; a family name fits only
    /// that family (poisson, negbin, zip, zinb, hurdle_poisson,
    /// hurdle_negbin, truncated_poisson, truncated_negbin).
    #[arg(long)]
    pub protocol: Option<String>,
    /// Drop one of any predictor pair correlated at or above this.
    #[arg(long)]
    pub corr_threshold: Option<f64>,
    /// Human-readable report.
    #[arg(long)]
    pub out: PathBuf,
    /// Structured fit artifact (JSON).
    #[arg(long)]
    pub json_out: Option<PathBuf>,
}

/// Everything the `fit` stage decided, in one machine-readable record.
#[derive(Debug, Serialize, Deserialize)]
pub struct FitArtifact {
    pub protocol: String,
    pub outcome: String,
    pub cluster: Option<String>,
    pub n_rows: usize,
    pub n_clusters: Option<usize>,
    pub dropped: Vec<DroppedColumn>,
    pub winner: Family,
    pub se_kind: String,
    pub table: Vec<CoefRow>,
    pub selection: Option<SelectionResult>,
    pub fit: FitResult,
}

pub fn run_fit(args: &FitArgs, config: &PipelineConfig) -> Result<()> {
    if args.outcome != "overdubs" {
        return Err(CliError::Invalid(format!(
            "fit: unknown outcome column {:?} (the row format defines \"overdubs\")",
            args.outcome
        )));
    }
    let cluster = match args.cluster.as_str() {
        "cluster_id" => Some("cluster_id".to_string()),
        "none" => None,
        other => {
            return Err(CliError::Invalid(format!(
                "fit: unknown cluster column {other:?} (the row format defines \"cluster_id\"; use \"none\" to disable)"
            )))
        }
    };
    let protocol = config.fit_protocol(args.protocol.clone());
    if protocol != "auto" && Family::parse(&protocol).is_none() {
        return Err(CliError::Invalid(format!(
            "fit: unknown protocol {protocol:?} (use auto or a family name)"
        )));
    }

    let file = File::open(&args.data).map_err(|e| io_err(&args.data, e))?;
    let rows = read_rows_tsv(BufReader::new(file)).map_err(at_stage("fit"))?;
    let corr_threshold = config.corr_threshold(args.corr_threshold);
    let build = transform_and_screen(&rows, corr_threshold).map_err(at_stage("fit"))?;
    let columns: Vec<(String, Vec<f64>)> = build
        .columns
        .iter()
        .enumerate()
        .map(|(j, name)| (name.clone(), build.data.iter().map(|row| row[j]).collect()))
        .collect();
    let clusters = cluster.as_ref().map(|_| build.cluster_ids.clone());
    let n_clusters = clusters
        .as_ref()
        .map(|ids| ids.iter().collect::<std::collections::BTreeSet<_>>().len());
    let data =
        Dataset::new(build.y.clone(), &columns, clusters).map_err(at_fit_stage("fit"))?;

    let options = config.fit_options();
    let (selection, winner_fit) = if protocol == "auto" {
        let selection = select_model(&data, &options).map_err(at_fit_stage("fit"))?;
        let winner = selection.winner_fit().clone();
        (Some(selection), winner)
    } else {
        let family = Family::parse(&protocol).expect("validated above");
        (None, fit(&data, family, &options).map_err(at_fit_stage("fit"))?)
    };

    let (se, se_kind) = match (&cluster, winner_fit.se()) {
        (Some(col), _) => {
            let se = clustered_se(&winner_fit, &data).map_err(at_fit_stage("fit"))?;
            (se, format!("clustered by {col} ({} clusters)", n_clusters.unwrap_or(0)))
        }
        (None, Some(se)) => (se, "model-based (observed information)".to_string()),
        (None, None) => {
            return Err(CliError::Invalid(
                "fit: covariance unavailable (boundary optimum); rerun with --cluster cluster_id"
                    .to_string(),
            ))
        }
    };
    let table = coef_table(&winner_fit, &se).map_err(at_fit_stage("fit"))?;

    let artifact = FitArtifact {
        protocol: protocol.clone(),
        outcome: args.outcome.clone(),
        cluster,
        n_rows: rows.len(),
        n_clusters,
        dropped: build.dropped.clone(),
        winner: winner_fit.family,
        se_kind: se_kind.clone(),
        table,
        selection,
        fit: winner_fit,
    };

    let mut text = String::new();
    text.push_str(&render_fit_text(&artifact));
    write_text(&args.out, &text)?;
    if let Some(path) = &args.json_out {
        write_json(path, &artifact)?;
    }
    println!(
        "fitted {} on {} rows: loglik {:.3}, {} parameters",
        artifact.winner.as_str(),
        artifact.n_rows,
        artifact.fit.loglik,
        artifact.fit.k
    );
    Ok(())
}

pub fn render_fit_text(artifact: &FitArtifact) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "count model fit: protocol {}, outcome {}, {} rows",
        artifact.protocol, artifact.outcome, artifact.n_rows
    );
    if !artifact.dropped.is_empty() {
        let _ = writeln!(out, "screened columns");
        for d in &artifact.dropped {
            let _ = writeln!(out, "  {}", describe_drop(d));
        }
    }
    if let Some(selection) = &artifact.selection {
        out.push_str(&render::selection_text(selection));
    }
    let _ = writeln!(
        out,
        "{} fit: loglik {:.4}, aic {:.4}, converged {}",
        artifact.winner.as_str(),
        artifact.fit.loglik,
        remixtree_countreg::aic(&artifact.fit),
        artifact.fit.converged
    );
    out.push_str(&render::coef_table_text(&artifact.table, &artifact.se_kind));
    out
}

fn describe_drop(dropped: &DroppedColumn) -> String {
    use remixtree_core::features::DropReason;
    match &dropped.reason {
        DropReason::Constant => format!("{}: constant, dropped", dropped.name),
        DropReason::Collinear { with, r } => {
            format!("{}: correlated with {} (r {:.3}), dropped", dropped.name, with, r)
        }
    }
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Synthetic event log destination.
    #[arg(long)]
    pub out: PathBuf,
    /// Planted ground truth, one JSON record per line.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Also verify the brute-force recount of planted co-occurrences
    /// against the configured counts before writing.
    #[arg(long, default_value_t = false)]
    pub check_truth: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TruthRecord {
    Meta { seed: u64 },
    Planted(PlantedTruth),
    OutcomeSong(OutcomeSongTruth),
}

pub fn run_synth(args: &SynthArgs, config: &PipelineConfig) -> Result<()> {
    let synth_config = config.synth.clone().ok_or_else(|| {
        CliError::Invalid("synth: the config file needs a `synth` section".to_string())
    })?;
    let (events, truth) = generate(&synth_config).map_err(at_stage("synth"))?;
    if args.check_truth {
        let recount_config = remixtree_core::miner::MinerConfig {
            min_occurrences: 1,
            min_lift: 0.0,
            minsup: None,
        };
        let counts = oracle_mine(&events, &recount_config).map_err(at_stage("synth"))?;
        for planted in &truth.planted {
            let found = counts.get(&planted.members).map(|c| c.occurrences).unwrap_or(0);
            if found < planted.co_trees {
                return Err(CliError::Invalid(format!(
                    "synth: planted {:?} recounts at {} of {} co-trees",
                    planted.members, found, planted.co_trees
                )));
            }
        }
    }
    write_events(&args.out, &events)?;
    if let Some(path) = &args.truth {
        let mut records = vec![TruthRecord::Meta { seed: truth.seed }];
        records.extend(truth.planted.iter().cloned().map(TruthRecord::Planted));
        records.extend(truth.outcome_songs.iter().cloned().map(TruthRecord::OutcomeSong));
        write_jsonl(path, &records)?;
    }
    println!(
        "generated {} events ({} planted collaborations, {} outcome songs)",
        events.len(),
        truth.planted.len(),
        truth.outcome_songs.len()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Fit artifact from `fit --json-out`.
    #[arg(long)]
    pub fit: Option<PathBuf>,
    /// Collaborations (mined or profiled).
    #[arg(long)]
    pub collabs: Option<PathBuf>,
    /// Profiling report from `profile --report-out`.
    #[arg(long)]
    pub profile_report: Option<PathBuf>,
    /// Descriptive statistics from `featurize --stats-out`.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Forest event log, for usernames and activity spans.
    #[arg(long)]
    pub forest: Option<PathBuf>,
    /// Rendered report destination.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_report(args: &ReportArgs) -> Result<()> {
    let mut sections: Vec<String> = Vec::new();
    if let Some(path) = &args.fit {
        let artifact: FitArtifact = read_json(path)?;
        sections.push(render_fit_text(&artifact));
    }
    if let Some(path) = &args.collabs {
        let collabs: Vec<RecurringCollaboration> = read_jsonl(path)?;
        let (usernames, spans) = match &args.forest {
            Some(forest_path) => {
                let forest_events = read_events(forest_path)?;
                let forest = build_forest(&forest_events).map_err(at_stage("report"))?;
                (username_map(&forest), render::collab_date_spans(&collabs, &forest))
            }
            None => (BTreeMap::new(), BTreeMap::new()),
        };
        sections.push(render::census_text(&collabs, &usernames, &spans));
    }
    if let Some(path) = &args.profile_report {
        let report = read_json(path)?;
        sections.push(render::profile_text(&report));
    }
    if let Some(path) = &args.stats {
        let stats = read_json(path)?;
        sections.push(render::stats_text(&stats));
    }
    if sections.is_empty() {
        return Err(CliError::Invalid(
            "report: nothing to render; pass --fit, --collabs, --profile-report, or --stats"
                .to_string(),
        ));
    }
    write_text(&args.out, &sections.join("\n"))?;
    println!("report written to {}", args.out.display());
    Ok(())
}

fn username_map(forest: &SongForest) -> BTreeMap<AuthorId, String> {
    forest
        .authors
        .values()
        .filter(|a| !a.username.is_empty())
        .map(|a| (a.author_id, a.username.clone()))
        .collect()
}
