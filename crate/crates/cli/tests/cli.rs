mod common;

use std::fs;

use common::*;
use serde_json::Value;
use taxoutlier::formats::{DatasetRecord, Embedding, Outlier, Tier};
use taxoutlier_testkit::*;
use tempfile::TempDir;

fn sports_inputs(dir: &TempDir) -> (String, String) {
    let dump = write_dump(dir.path(), "sports.kg.jsonl", &sports_records());
    let anchors = write_anchors(dir.path(), "sports.anchors.tsv", &sports_anchors());
    (s(&dump).to_owned(), s(&anchors).to_owned())
}

fn perfect(groups: usize) -> PlantSpec {
    PlantSpec {
        groups,
        dim: 24,
        cluster_size: 8,
        cluster_angle: 0.05,
        outliers: vec![
            (Tier::O1, std::f64::consts::FRAC_PI_2),
            (Tier::O2, std::f64::consts::FRAC_PI_2),
        ],
    }
}

#[test]
fn help_and_version_exit_zero_bad_flags_exit_one() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["generate", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
}

#[test]
fn generate_on_sports_fixture() {
    let dir = TempDir::new().unwrap();
    let (dump, anchors) = sports_inputs(&dir);
    let out = dir.path().join("sports.dataset.jsonl");
    let o = run(&[
        "generate",
        "--dump",
        &dump,
        "--anchors",
        &anchors,
        "--output",
        s(&out),
        "--seed",
        "5",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.lines().next().unwrap().starts_with("# taxoutlier "));
    assert!(text.contains(" seed=5"));
    assert_eq!(kv(&text, "reject.StopAffix").as_deref(), Some("0"));

    let records = read_records(&out);
    assert!(!records.is_empty());
    let bb = records
        .iter()
        .find(|r| r.class_id.as_str() == BASKETBALL_TEAM)
        .expect("basketball group");
    assert_eq!(bb.cluster.len(), 8);
    assert_eq!(bb.cluster[0], "Chicago Bulls");

    let report: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sports.dataset.jsonl.report.json")).unwrap())
            .unwrap();
    assert_eq!(report["meta"]["seed"], 5);
    assert_eq!(report["refine_rejects"]["StopAffix"], 0);
    assert_eq!(report["groups_emitted"], records.len());
    let tiers: u64 = report["outliers_per_tier"]
        .as_object()
        .unwrap()
        .values()
        .map(|v| v.as_u64().unwrap())
        .sum();
    assert_eq!(
        tiers as usize,
        records.iter().map(DatasetRecord::test_cases).sum::<usize>()
    );
}

#[test]
fn generate_twice_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let (dump, anchors) = sports_inputs(&dir);
    let go = |name: &str| {
        let out = dir.path().join(name);
        let o = run(&["generate", "--dump", &dump, "--anchors", &anchors, "--output", s(&out)]);
        assert_eq!(o.status.code(), Some(0));
        fs::read(out).unwrap()
    };
    assert_eq!(go("a.jsonl"), go("b.jsonl"));
}

#[test]
fn unreachable_cluster_size_is_an_empty_result() {
    let dir = TempDir::new().unwrap();
    let (dump, anchors) = sports_inputs(&dir);
    let cfg = dir.path().join("big.toml");
    fs::write(
        &cfg,
        format!(
            "[paths]\ndump = {dump:?}\nanchors = {anchors:?}\noutput = \"out.jsonl\"\n[generator]\nmin_cluster_size = 100\ncluster_size = 100\n"
        ),
    )
    .unwrap();
    let o = run(&["--config", s(&cfg), "generate"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(dir.path().join("out.jsonl").exists());
    assert!(read_records(&dir.path().join("out.jsonl")).is_empty());

    // min above the cluster size is a config error, not an empty result
    fs::write(
        &cfg,
        format!("[paths]\ndump = {dump:?}\noutput = \"o.jsonl\"\n[generator]\nmin_cluster_size = 100\n"),
    )
    .unwrap();
    assert_eq!(run(&["--config", s(&cfg), "generate"]).status.code(), Some(1));
}

#[test]
fn config_paths_are_relative_to_the_config_file() {
    let dir = TempDir::new().unwrap();
    sports_inputs(&dir);
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "seed = 11\n[paths]\ndump = \"sports.kg.jsonl\"\nanchors = \"sports.anchors.tsv\"\noutput = \"gen.jsonl\"\n",
    )
    .unwrap();
    let o = bin()
        .current_dir("/")
        .args(["--config", s(&cfg), "generate"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains(" seed=11"));
    assert!(!read_records(&dir.path().join("gen.jsonl")).is_empty());

    fs::write(&cfg, "nonsense = true\n").unwrap();
    assert_eq!(run(&["--config", s(&cfg), "stats", "x"]).status.code(), Some(1));
}

#[test]
fn missing_inputs_exit_one_with_a_message() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.jsonl");
    let o = run(&["generate", "--dump", s(&missing), "--output", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope.jsonl"));
    assert_eq!(run(&["generate"]).status.code(), Some(1));
    assert_eq!(run(&["stats", s(&missing)]).status.code(), Some(1));
    let o = bin()
        .env("TAXOUTLIER_THREADS", "many")
        .args(["stats", s(&missing)])
        .output()
        .unwrap();
    assert!(stderr(&o).contains("TAXOUTLIER_THREADS"));
}

#[test]
fn evaluate_planted_dataset() {
    let dir = TempDir::new().unwrap();
    let (records, e) = planted_dataset(3, &perfect(20));
    let ds = write_records(dir.path(), "p.jsonl", &records);
    let emb = write_embedding(dir.path(), "p.vec", &e);
    let o = run(&["evaluate", s(&ds), s(&emb)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("OPP") && text.contains("Acc.") && text.contains("Groups Skipped"));
    assert_eq!(kv(&text, "opp").as_deref(), Some("100.00"));
    assert_eq!(kv(&text, "accuracy").as_deref(), Some("100.00"));
    assert_eq!(kv(&text, "groups_skipped").as_deref(), Some("0"));
    let json: Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(json["reports"][0]["report"]["cases_evaluated"], 40);
    assert_eq!(json["reports"][0]["vocab_size"], e.len());

    let out = dir.path().join("eval.json");
    let o = run(&["evaluate", s(&ds), s(&emb), "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let json: Value = serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(json["reports"][0]["report"]["opp"], 100.0);
}

fn without(e: &Embedding, drop: &[&str]) -> Embedding {
    Embedding::from_rows(
        e.tokens()
            .filter(|t| !drop.contains(t))
            .map(|t| (t.to_owned(), e.get(t).unwrap().to_vec())),
    )
    .unwrap()
}

#[test]
fn evaluate_skips_group_without_outliers_and_intersects() {
    let dir = TempDir::new().unwrap();
    let (records, e) = planted_dataset(4, &perfect(5));
    let gone: Vec<&str> = records[2].outliers.iter().map(|o| o.surface.as_str()).collect();
    let ds = write_records(dir.path(), "p.jsonl", &records);
    let full = write_embedding(dir.path(), "full.vec", &e);
    let partial = write_embedding(dir.path(), "partial.vec", &without(&e, &gone));

    let o = run(&["evaluate", s(&ds), s(&partial)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(kv(&stdout(&o), "groups_skipped").as_deref(), Some("1"));

    let o = run(&["evaluate", "--intersect", s(&ds), s(&full), s(&partial)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let json: Value = serde_json::from_str(stdout(&o).lines().last().unwrap()).unwrap();
    assert_eq!(json["intersection"]["groups_dropped"], 1);
    let reports = json["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 2);
    for r in reports {
        assert_eq!(r["report"]["cases_evaluated"], 8);
        assert_eq!(r["report"]["groups_skipped"], 0);
        assert_eq!(r["report"]["pct_outlier_oov"], 0.0);
    }
    assert_eq!(
        run(&["evaluate", "--intersect", s(&ds), s(&full)]).status.code(),
        Some(1)
    );
}

#[test]
fn ragged_embedding_names_file_and_line() {
    let dir = TempDir::new().unwrap();
    let (records, _) = planted_dataset(4, &perfect(1));
    let ds = write_records(dir.path(), "p.jsonl", &records);
    let bad = dir.path().join("ragged.vec");
    fs::write(&bad, "a 1 2 3\nb 1 2 3\nc 1 2\n").unwrap();
    let o = run(&["evaluate", s(&ds), s(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("ragged.vec") && err.contains("line 3"), "{err}");
}

fn six_outliers() -> DatasetRecord {
    DatasetRecord {
        class_id: id("Q1"),
        class_label: "thing".into(),
        language: "en".into(),
        cluster: (0..8).map(|i| format!("c{i}")).collect(),
        outliers: Tier::ALL
            .iter()
            .flat_map(|&t| {
                (0..2).map(move |k| Outlier {
                    tier: t,
                    surface: format!("{t}-{k}"),
                })
            })
            .collect(),
    }
}

#[test]
fn stats_counts_and_is_additive() {
    let dir = TempDir::new().unwrap();
    let one = write_records(dir.path(), "one.jsonl", &[six_outliers()]);
    let o = run(&["stats", s(&one)]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(kv(&text, "groups").as_deref(), Some("1"));
    assert_eq!(kv(&text, "test_cases").as_deref(), Some("6"));
    assert_eq!(kv(&text, "tier.O2").as_deref(), Some("2"));
    assert_eq!(kv(&text, "language.en.groups").as_deref(), Some("1"));

    let mut ja = six_outliers();
    ja.language = "ja".into();
    ja.outliers.truncate(3);
    let two = write_records(dir.path(), "two.jsonl", &[six_outliers(), ja]);
    let text = stdout(&run(&["stats", s(&one), s(&two)]));
    assert_eq!(kv(&text, "groups").as_deref(), Some("3"));
    assert_eq!(kv(&text, "test_cases").as_deref(), Some("15"));
    assert_eq!(kv(&text, "language.ja.test_cases").as_deref(), Some("3"));

    let empty = write_records(dir.path(), "empty.jsonl", &[]);
    assert_eq!(run(&["stats", s(&empty)]).status.code(), Some(2));
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{not json\n").unwrap();
    assert_eq!(run(&["stats", s(&bad)]).status.code(), Some(1));

    let emb = write_embedding(
        dir.path(),
        "v.vec",
        &Embedding::from_rows([("a", vec![1.0f32, 0.0]), ("b", vec![0.0, 1.0])]).unwrap(),
    );
    let text = stdout(&run(&["stats", "--embedding", s(&emb)]));
    assert!(text.contains("]=2"), "{text}");
}

#[test]
fn prune_report_on_sports_fixture() {
    let dir = TempDir::new().unwrap();
    let (dump, _) = sports_inputs(&dir);
    let out = dir.path().join("prune.json");
    let o = run(&["prune-report", "--dump", &dump, "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(kv(&text, "removed.near_root").as_deref(), Some("8"));
    assert_eq!(kv(&text, "removed.disambiguation").as_deref(), Some("1"));
    let json: Value = serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(json["prune"]["near_root"], 8);
}
