//! Human-readable table rendering for fit results, collaboration censuses,
//! profiling output, and descriptive statistics. Every table is plain
//! monospaced text; the structured record files stay the machine source of
//! truth.

use std::collections::BTreeMap;
use std::fmt::Write;

use chrono::DateTime;

use remixtree_core::features::DescriptiveStats;
use remixtree_core::model::{AuthorId, SongForest};
use remixtree_core::profile::{EstablishedSignal, ProfileReport, RecurringCollaboration};
use remixtree_countreg::{CoefRow, SelectionResult};

/// Renders minutes-since-epoch as a year-month stamp.
pub fn year_month(minutes: i64) -> String {
    match DateTime::from_timestamp(minutes.saturating_mul(60), 0) {
        Some(dt) => dt.format("%Y-%m").to_string(),
        None => "-".to_string(),
    }
}

/// Analysis level of a design column: song-side measures describe the song
/// being overdubbed, everything else describes its author.
fn column_level(name: &str) -> &'static str {
    let base = name.split('=').next().unwrap_or(name);
    match base {
        "intercept" => "",
        "likes" | "bookmarks" | "plays" | "reposts" | "comments" | "upload_time_interval"
        | "song_depth" | "has_tags" => "song",
        _ => "author",
    }
}

/// Model part a parameter row belongs to, keyed off the name prefixes the
/// fitting layer assigns.
fn part_of(name: &str) -> (&'static str, &str) {
    if let Some(rest) = name.strip_prefix("inflate:") {
        ("zero-inflation part", rest)
    } else if let Some(rest) = name.strip_prefix("hurdle:") {
        ("hurdle part", rest)
    } else if name == "ln_alpha" {
        ("dispersion", name)
    } else {
        ("count part", name)
    }
}

fn fmt_sig(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return "0.000".to_string();
    }
    let a = v.abs();
    if a >= 1e5 || a < 1e-3 {
        format!("{v:.3e}")
    } else {
        format!("{v:.3}")
    }
}

/// One coefficient table in the printed layout: level, predictor, estimate,
/// factor change exp(b), standard error, stars; grouped by model part.
pub fn coef_table_text(rows: &[CoefRow], se_kind: &str) -> String {
    let mut out = String::new();
    let mut last_part = "";
    let _ = writeln!(
        out,
        "{:<10} {:<34} {:>12} {:>12} {:>12}  {}",
        "level", "predictor", "estimate", "exp(est)", "se", "sig"
    );
    for row in rows {
        let (part, name) = part_of(&row.name);
        if part != last_part {
            let _ = writeln!(out, "-- {part} --");
            last_part = part;
        }
        let _ = writeln!(
            out,
            "{:<10} {:<34} {:>12} {:>12} {:>12}  {}",
            column_level(name),
            name,
            fmt_sig(row.estimate),
            fmt_sig(row.factor_change),
            fmt_sig(row.se),
            row.stars
        );
    }
    let _ = writeln!(out, "standard errors: {se_kind}");
    let _ = writeln!(out, "significance: *** p<0.001, ** p<0.01, * p<0.05");
    out
}

pub fn selection_text(selection: &SelectionResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "model selection");
    for line in &selection.trace {
        let _ = writeln!(out, "  {line}");
    }
    for fit in &selection.fits {
        let _ = writeln!(
            out,
            "  {:<18} loglik {:>14}  params {:>2}  converged {}",
            fit.family.as_str(),
            fmt_sig(fit.loglik),
            fit.k,
            fit.converged
        );
    }
    let _ = writeln!(out, "  winner: {}", selection.winner.as_str());
    out
}

/// First and last upload stamps of each collaboration's songs, from the
/// forest the collaborations were mined on.
pub fn collab_date_spans(
    collabs: &[RecurringCollaboration],
    forest: &SongForest,
) -> BTreeMap<u64, (i64, i64)> {
    let mut spans = BTreeMap::new();
    for collab in collabs {
        let times: Vec<i64> =
            collab.song_ids.iter().filter_map(|id| forest.node(*id)).map(|n| n.uploaded_at).collect();
        if let (Some(lo), Some(hi)) = (times.iter().min(), times.iter().max()) {
            spans.insert(collab.collab_id, (*lo, *hi));
        }
    }
    spans
}

/// The collaboration census: one line per mined collaboration with its
/// members, counting stats, communication totals, bins, and activity span.
pub fn census_text(
    collabs: &[RecurringCollaboration],
    usernames: &BTreeMap<AuthorId, String>,
    spans: &BTreeMap<u64, (i64, i64)>,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "recurring collaborations ({})", collabs.len());
    let _ = writeln!(
        out,
        "{:<4} {:<28} {:>4} {:>8} {:>7} {:>6} {:>7} {:>7}  {:<12} {:<16} {}",
        "id", "members", "occ", "support", "lift", "songs", "msgs", "invites", "kind", "span", "bins"
    );
    for collab in collabs {
        let members = collab
            .members
            .iter()
            .map(|a| usernames.get(a).cloned().unwrap_or_else(|| format!("author{}", a.0)))
            .collect::<Vec<_>>()
            .join(", ");
        let span = match spans.get(&collab.collab_id) {
            Some((lo, hi)) => format!("{} .. {}", year_month(*lo), year_month(*hi)),
            None => "-".to_string(),
        };
        let bins = collab
            .bins
            .iter()
            .map(|(f, l)| format!("{f}={l:?}"))
            .collect::<Vec<_>>()
            .join(" ");
        let _ = writeln!(
            out,
            "{:<4} {:<28} {:>4} {:>8} {:>7} {:>6} {:>7} {:>7}  {:<12} {:<16} {}",
            collab.collab_id,
            members,
            collab.occurrences,
            format!("{:.4}", collab.support),
            format!("{:.2}", collab.lift),
            collab.song_ids.len(),
            collab.messages,
            collab.invites,
            format!("{:?}", collab.kind),
            span,
            bins
        );
    }
    out
}

pub fn profile_text(report: &ProfileReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "feature bins");
    for (feature, binner) in &report.binners {
        let intervals = binner
            .intervals
            .iter()
            .map(|i| format!("{:?} [{}, {}]", i.label, fmt_sig(i.lo), fmt_sig(i.hi)))
            .collect::<Vec<_>>()
            .join("  ");
        let _ = writeln!(out, "  {feature} (k={}): {intervals}", binner.k);
    }
    for (feature, reason) in &report.unbinned {
        let _ = writeln!(out, "  {feature}: not binned ({reason})");
    }
    if !report.established.is_empty() {
        let _ = writeln!(out, "established-band candidates (for manual review)");
        for cand in &report.established {
            for signal in &cand.signals {
                let line = match signal {
                    EstablishedSignal::SimilarNames { a, b, distance } => {
                        format!("similar names author{} / author{} (distance {:.2})", a.0, b.0, distance)
                    }
                    EstablishedSignal::SharedNamePrefix { a, b, prefix } => {
                        format!("shared name prefix \"{prefix}\" author{} / author{}", a.0, b.0)
                    }
                    EstablishedSignal::BioKeyword { author, keyword } => {
                        format!("bio keyword \"{keyword}\" author{}", author.0)
                    }
                };
                let _ = writeln!(out, "  collab {}: {line}", cand.collab_id);
            }
        }
    }
    if !report.self_overdub_runs.is_empty() {
        let _ = writeln!(out, "self-overdub chains");
        for run in &report.self_overdub_runs {
            let _ = writeln!(
                out,
                "  author{}: {} consecutive songs",
                run.author.0,
                run.song_ids.len()
            );
        }
    }
    if !report.tag_profiles.is_empty() {
        let _ = writeln!(out, "tag overlap per member (recurring vs occasional work)");
        for p in &report.tag_profiles {
            let show = |v: Option<f64>| match v {
                Some(x) => format!("{x:.2}"),
                None => "-".to_string(),
            };
            let _ = writeln!(
                out,
                "  collab {} author{}: genres {} instruments {} ({} recurring / {} occasional songs)",
                p.collab_id,
                p.author.0,
                show(p.genre_overlap),
                show(p.instrument_overlap),
                p.recurring_songs,
                p.occasional_songs
            );
        }
    }
    out
}

pub fn stats_text(stats: &DescriptiveStats) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "descriptive statistics over {} rows", stats.n_rows);
    let _ = writeln!(
        out,
        "{:<24} {:>12} {:>10} {:>12} {:>10} {:>10} {:>12}",
        "measure", "total", "min", "max", "mean", "sd", "variance"
    );
    for (name, s) in &stats.numeric {
        let _ = writeln!(
            out,
            "{:<24} {:>12} {:>10} {:>12} {:>10} {:>10} {:>12}",
            name,
            fmt_sig(s.total),
            fmt_sig(s.min),
            fmt_sig(s.max),
            fmt_sig(s.mean),
            fmt_sig(s.sd),
            fmt_sig(s.variance)
        );
    }
    for (name, levels) in &stats.categorical {
        let counts = levels
            .iter()
            .map(|(level, count)| format!("{level}: {count}"))
            .collect::<Vec<_>>()
            .join(", ");
        let _ = writeln!(out, "{name:<24} {counts}");
    }
    out
}
