//! Black-box tests of the `remixtree` binary: stage chaining, artifact
//! shapes, flag precedence, and error reporting.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use remixtree_core::model::AuthorId;
use remixtree_core::profile::RecurringCollaboration;
use remixtree_core::synth::{PlantedCollab, SynthConfig};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_remixtree")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(binary()).current_dir(dir).args(args).output().expect("binary spawns")
}

fn assert_ok(output: &Output, what: &str) {
    assert!(
        output.status.success(),
        "{what} failed:\n{}",
        String::from_utf8_lossy(&output.stderr)
    );
}

fn write_config(dir: &Path) -> PathBuf {
    let synth = SynthConfig {
        seed: 11,
        planted: vec![
            PlantedCollab { members: vec![AuthorId(1), AuthorId(2)], co_trees: 5 },
            PlantedCollab { members: vec![AuthorId(3), AuthorId(4), AuthorId(5)], co_trees: 4 },
        ],
        n_noise_authors: 25,
        n_noise_trees: 40,
        noise_overdub_prob: 0.5,
        max_tree_size: 7,
        ..SynthConfig::default()
    };
    let path = dir.join("config.json");
    let json = serde_json::json!({ "synth": serde_json::to_value(&synth).unwrap() });
    std::fs::write(&path, serde_json::to_string_pretty(&json).unwrap()).unwrap();
    path
}

#[test]
fn stages_chain_through_artifacts() {
    let workdir = tempfile::tempdir().unwrap();
    let dir = workdir.path();
    let config = write_config(dir);
    let config = config.to_str().unwrap();

    let out = run_in(dir, &["--config", config, "synth", "--out", "events.jsonl", "--truth", "truth.jsonl", "--check-truth"]);
    assert_ok(&out, "synth");
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("generated "));

    assert_ok(
        &run_in(dir, &["ingest", "--input", "events.jsonl", "--out", "forest.jsonl", "--report-out", "report.json"]),
        "ingest",
    );
    assert_ok(
        &run_in(dir, &[
            "mine", "--input", "forest.jsonl", "--out", "collabs.jsonl", "--rules-out",
            "rules.jsonl", "--summary-out", "summary.json",
        ]),
        "mine",
    );

    // the planted dyad and triad both come back
    let collabs: Vec<RecurringCollaboration> = std::fs::read_to_string(dir.join("collabs.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let members: Vec<Vec<u64>> =
        collabs.iter().map(|c| c.members.iter().map(|a| a.0).collect()).collect();
    assert!(members.contains(&vec![1, 2]));
    assert!(members.contains(&vec![3, 4, 5]));

    assert_ok(
        &run_in(dir, &[
            "featurize", "--input", "forest.jsonl", "--events", "events.jsonl", "--level",
            "recurring", "--collabs", "collabs.jsonl", "--out", "rows.tsv", "--stats-out",
            "stats.json",
        ]),
        "featurize",
    );
    let rows = std::fs::read_to_string(dir.join("rows.tsv")).unwrap();
    assert!(rows.lines().count() > 1, "featurize produced no data rows");

    assert_ok(
        &run_in(dir, &[
            "profile", "--collabs", "collabs.jsonl", "--forest", "forest.jsonl", "--events",
            "events.jsonl", "--out", "profiled.jsonl", "--report-out", "profile_report.json",
        ]),
        "profile",
    );
    assert_ok(
        &run_in(dir, &[
            "report", "--collabs", "profiled.jsonl", "--profile-report", "profile_report.json",
            "--stats", "stats.json", "--forest", "forest.jsonl", "--out", "report.txt",
        ]),
        "report",
    );
    let report = std::fs::read_to_string(dir.join("report.txt")).unwrap();
    assert!(report.contains("recurring collaborations"), "census section missing:\n{report}");
}

#[test]
fn mine_flags_override_config_sections() {
    let workdir = tempfile::tempdir().unwrap();
    let dir = workdir.path();
    let config = write_config(dir);
    let config = config.to_str().unwrap();
    assert_ok(
        &run_in(dir, &["--config", config, "synth", "--out", "events.jsonl"]),
        "synth",
    );
    assert_ok(
        &run_in(dir, &["ingest", "--input", "events.jsonl", "--out", "forest.jsonl"]),
        "ingest",
    );

    // a permissive occurrence floor admits the planted sets; an impossible
    // one (more trees than exist) must mine nothing
    assert_ok(
        &run_in(dir, &["mine", "--input", "forest.jsonl", "--min-occ", "3", "--out", "some.jsonl"]),
        "mine --min-occ 3",
    );
    assert_ok(
        &run_in(dir, &["mine", "--input", "forest.jsonl", "--min-occ", "10000", "--out", "none.jsonl"]),
        "mine --min-occ 10000",
    );
    let some = std::fs::read_to_string(dir.join("some.jsonl")).unwrap();
    let none = std::fs::read_to_string(dir.join("none.jsonl")).unwrap();
    assert!(!some.trim().is_empty());
    assert!(none.trim().is_empty());
}

#[test]
fn featurize_recurring_without_collabs_is_an_error() {
    let workdir = tempfile::tempdir().unwrap();
    let dir = workdir.path();
    let config = write_config(dir);
    let config = config.to_str().unwrap();
    assert_ok(&run_in(dir, &["--config", config, "synth", "--out", "events.jsonl"]), "synth");
    let out = run_in(dir, &[
        "featurize", "--input", "events.jsonl", "--events", "events.jsonl", "--level",
        "recurring", "--out", "rows.tsv",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--collabs"));
}

#[test]
fn malformed_input_names_file_and_line() {
    let workdir = tempfile::tempdir().unwrap();
    let dir = workdir.path();
    std::fs::write(dir.join("bad.jsonl"), "{\"id\":1,\"kind\":\"song_uploaded\"\n").unwrap();
    let out = run_in(dir, &["ingest", "--input", "bad.jsonl", "--out", "forest.jsonl"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bad.jsonl"), "stderr: {stderr}");
}

#[test]
fn unknown_protocol_is_rejected() {
    let workdir = tempfile::tempdir().unwrap();
    let dir = workdir.path();
    std::fs::write(dir.join("rows.tsv"), "song_id\tx\n").unwrap();
    let out = run_in(dir, &[
        "fit", "--data", "rows.tsv", "--protocol", "quantile", "--out", "fit.txt",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("protocol"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let workdir = tempfile::tempdir().unwrap();
    let dir = workdir.path();
    std::fs::write(dir.join("config.json"), "{\"synt\": {}}").unwrap();
    let out = run_in(dir, &[
        "--config", "config.json", "synth", "--out", "events.jsonl",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("synt"));
}
