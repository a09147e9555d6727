//! End-to-end command tests against the built binary: exit codes,
//! output files, and the documented stdout surfaces.

use std::path::Path;
use std::process::{Command, Output};

fn tigris(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tigris"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).to_string()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).to_string()
}

fn line_count(path: &Path) -> usize {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .count()
}

const TABLE5_SNAPSHOT: &str = r#"{
  "values": {
    "ClinicService.findOwner(args)": {"invocation_frequency": 12, "execution_time": 180, "computation_pattern": 6},
    "ClinicService.updateOwner(args)": {"invocation_frequency": 2, "execution_time": 500, "computation_pattern": 0},
    "VisitController.newVisit(args)": {"invocation_frequency": 50, "execution_time": 250, "computation_pattern": 12},
    "ClinicService.findVets()": {"invocation_frequency": 200, "execution_time": 300, "computation_pattern": 200},
    "OwnerRepository.findAll()": {"invocation_frequency": 100, "execution_time": 200, "computation_pattern": 90}
  },
  "bindings": [
    {"criterion": "frequency", "metric": "invocation_frequency"},
    {"criterion": "expensiveness", "metric": "execution_time"},
    {"criterion": "changeability", "metric": "computation_pattern"}
  ]
}"#;

#[test]
fn gen_fixture_then_replay_names_find_vets() {
    let dir = tempfile::tempdir().unwrap();
    let fixture_dir = dir.path().join("fixture");
    let out_dir = dir.path().join("out");

    let gen = tigris(&[
        "gen-fixture",
        "--fixture",
        "running-example",
        "--out",
        fixture_dir.to_str().unwrap(),
    ]);
    assert!(gen.status.success(), "{}", stderr(&gen));

    let replay = tigris(&[
        "replay",
        "--config",
        fixture_dir.join("config.properties").to_str().unwrap(),
        "--input",
        fixture_dir.join("events.jsonl").to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(replay.status.success(), "{}", stderr(&replay));
    let text = stdout(&replay);
    assert!(text.contains("ClinicService.findVets()"), "{text}");
    assert!(out_dir.join("summary.json").exists());
    assert_eq!(line_count(&out_dir.join("traces.jsonl")), 100);
    assert_eq!(line_count(&out_dir.join("reports.jsonl")), 2);
}

#[test]
fn rate_override_doubles_trace_volume() {
    let dir = tempfile::tempdir().unwrap();
    let fixture_dir = dir.path().join("fixture");
    tigris(&[
        "gen-fixture",
        "--fixture",
        "running-example",
        "--out",
        fixture_dir.to_str().unwrap(),
    ]);

    let mut counts = Vec::new();
    for (name, rate) in [("full", "1.0"), ("half", "0.5")] {
        let out_dir = dir.path().join(name);
        let replay = tigris(&[
            "replay",
            "--config",
            fixture_dir.join("config.properties").to_str().unwrap(),
            "--input",
            fixture_dir.join("events.jsonl").to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--rate",
            rate,
        ]);
        assert!(replay.status.success(), "{}", stderr(&replay));
        counts.push(line_count(&out_dir.join("traces.jsonl")));
    }
    assert_eq!(counts, vec![200, 100], "trace counts at rate 1.0 vs 0.5");
}

#[test]
fn replay_empty_log_warns_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let fixture_dir = dir.path().join("fixture");
    tigris(&[
        "gen-fixture",
        "--fixture",
        "running-example",
        "--out",
        fixture_dir.to_str().unwrap(),
    ]);
    let empty_log = dir.path().join("empty.jsonl");
    std::fs::write(&empty_log, "").unwrap();

    let out_dir = dir.path().join("out");
    let replay = tigris(&[
        "replay",
        "--config",
        fixture_dir.join("config.properties").to_str().unwrap(),
        "--input",
        empty_log.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(replay.status.success());
    assert!(stderr(&replay).contains("empty"));
    assert_eq!(line_count(&out_dir.join("traces.jsonl")), 0);
    assert_eq!(line_count(&out_dir.join("reports.jsonl")), 0);
}

#[test]
fn filter_eval_prints_grouping_and_selection() {
    let dir = tempfile::tempdir().unwrap();
    let snapshot = dir.path().join("table5.json");
    std::fs::write(&snapshot, TABLE5_SNAPSHOT).unwrap();

    let eval = tigris(&[
        "filter-eval",
        "(more frequent U most expensive) & least changeable",
        "--input",
        snapshot.to_str().unwrap(),
    ]);
    assert!(eval.status.success(), "{}", stderr(&eval));
    let text = stdout(&eval);
    assert!(text.contains("relevant set (1):"), "{text}");
    assert!(text.contains("ClinicService.findVets()"), "{text}");
    assert!(text.contains("criterion frequency"), "{text}");
}

#[test]
fn filter_eval_syntax_error_exits_two_with_caret() {
    let dir = tempfile::tempdir().unwrap();
    let snapshot = dir.path().join("table5.json");
    std::fs::write(&snapshot, TABLE5_SNAPSHOT).unwrap();

    let eval = tigris(&[
        "filter-eval",
        "more frequent more expensive",
        "--input",
        snapshot.to_str().unwrap(),
    ]);
    assert_eq!(eval.status.code(), Some(2));
    let text = stderr(&eval);
    assert!(text.contains("column 15"), "{text}");
    assert!(text.contains('^'), "{text}");
}

#[test]
fn unbound_criterion_in_filter_eval_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let snapshot = dir.path().join("table5.json");
    std::fs::write(&snapshot, TABLE5_SNAPSHOT).unwrap();

    let eval = tigris(&[
        "filter-eval",
        "most latent",
        "--input",
        snapshot.to_str().unwrap(),
    ]);
    assert_eq!(eval.status.code(), Some(2));
}

#[test]
fn missing_input_file_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let fixture_dir = dir.path().join("fixture");
    tigris(&[
        "gen-fixture",
        "--fixture",
        "running-example",
        "--out",
        fixture_dir.to_str().unwrap(),
    ]);
    let replay = tigris(&[
        "replay",
        "--config",
        fixture_dir.join("config.properties").to_str().unwrap(),
        "--input",
        dir.path().join("nope.jsonl").to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(replay.status.code(), Some(1));
}

#[test]
fn unknown_fixture_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let gen = tigris(&[
        "gen-fixture",
        "--fixture",
        "bogus",
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(gen.status.code(), Some(2));
    assert!(stderr(&gen).contains("unknown fixture"));
}

#[test]
fn inspect_summarizes_trace_files() {
    let dir = tempfile::tempdir().unwrap();
    let fixture_dir = dir.path().join("fixture");
    let out_dir = dir.path().join("out");
    tigris(&[
        "gen-fixture",
        "--fixture",
        "running-example",
        "--out",
        fixture_dir.to_str().unwrap(),
    ]);
    tigris(&[
        "replay",
        "--config",
        fixture_dir.join("config.properties").to_str().unwrap(),
        "--input",
        fixture_dir.join("events.jsonl").to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);

    let inspect = tigris(&[
        "inspect",
        "--input",
        out_dir.join("traces.jsonl").to_str().unwrap(),
    ]);
    assert!(inspect.status.success());
    assert!(stdout(&inspect).contains("100 traces"));

    let inspect_log = tigris(&[
        "inspect",
        "--input",
        fixture_dir.join("events.jsonl").to_str().unwrap(),
    ]);
    assert!(inspect_log.status.success());
    assert!(stdout(&inspect_log).contains("728 events"));
}

#[test]
fn malformed_log_line_exits_one_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let fixture_dir = dir.path().join("fixture");
    tigris(&[
        "gen-fixture",
        "--fixture",
        "running-example",
        "--out",
        fixture_dir.to_str().unwrap(),
    ]);
    let bad_log = dir.path().join("bad.jsonl");
    std::fs::write(
        &bad_log,
        "{\"event_type_id\":\"a()\",\"timestamp_ns\":1}\n",
    )
    .unwrap();
    let replay = tigris(&[
        "replay",
        "--config",
        fixture_dir.join("config.properties").to_str().unwrap(),
        "--input",
        bad_log.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(replay.status.code(), Some(1));
    assert!(stderr(&replay).contains("line 1"));
}

/// The four-criterion restricted filter over synthetic 30-type snapshots
/// must match a per-element brute-force evaluation of the same grouping.
#[test]
fn restricted_filter_matches_brute_force_oracle() {
    use tigris::analysis::{group, leaf_matches, CriterionBinding, DEFAULT_SIGMA_K};
    use tigris::dsl::{parse_filter, FilterExpr, SetOp};
    use tigris::metrics::MetricSnapshot;

    const RESTRICTED: &str = "less changeable & more frequent & \
         (more usage-pattern U (more expensive & less usage-pattern))";

    fn matches(expr: &FilterExpr, table: &tigris::analysis::GroupingTable, id: &str) -> bool {
        match expr {
            FilterExpr::Leaf { modifier, criterion } => table
                .criterion(*criterion)
                .and_then(|g| g.bands.get(id))
                .map(|band| leaf_matches(*modifier, *band))
                .unwrap_or(false),
            FilterExpr::Op { op, left, right } => {
                let l = matches(left, table, id);
                let r = matches(right, table, id);
                match op {
                    SetOp::Union => l || r,
                    SetOp::Intersection => l && r,
                    SetOp::Difference => l && !r,
                }
            }
        }
    }

    let dir = tempfile::tempdir().unwrap();
    let filter = parse_filter(RESTRICTED).unwrap();
    let mut any_selected = false;
    for seed in [0x7ab1e8u64, 1, 2, 3, 4] {
        // deterministic synthetic metric values
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            (z ^ (z >> 31)) % 10_000
        };
        let mut values = serde_json::Map::new();
        for t in 0..30 {
            let mut per = serde_json::Map::new();
            per.insert("invocation_frequency".into(), next().into());
            per.insert("execution_time".into(), next().into());
            per.insert("computation_pattern".into(), next().into());
            per.insert("user_behavior".into(), next().into());
            values.insert(format!("type{t:02}()"), per.into());
        }
        let snapshot_json = serde_json::json!({
            "values": values,
            "bindings": [
                {"criterion": "frequency", "metric": "invocation_frequency"},
                {"criterion": "expensiveness", "metric": "execution_time"},
                {"criterion": "changeability", "metric": "computation_pattern"},
                {"criterion": "usage-pattern", "metric": "user_behavior"}
            ]
        });
        let snapshot_path = dir.path().join(format!("synthetic{seed}.json"));
        std::fs::write(
            &snapshot_path,
            serde_json::to_string_pretty(&snapshot_json).unwrap(),
        )
        .unwrap();

        let eval = tigris(&[
            "filter-eval",
            RESTRICTED,
            "--input",
            snapshot_path.to_str().unwrap(),
        ]);
        assert!(eval.status.success(), "{}", stderr(&eval));
        let text = stdout(&eval);
        let printed: std::collections::BTreeSet<String> = text
            .lines()
            .skip_while(|l| !l.starts_with("relevant set"))
            .skip(1)
            .map(|l| l.trim().to_string())
            .filter(|l| !l.is_empty())
            .collect();

        // brute-force oracle: same grouping, per-element membership walk
        let file: tigris::io::SnapshotFile =
            serde_json::from_str(&std::fs::read_to_string(&snapshot_path).unwrap()).unwrap();
        let snapshot: MetricSnapshot = file.snapshot();
        let bindings: Vec<CriterionBinding> = file.bindings.clone();
        let table = group(&snapshot, &bindings, DEFAULT_SIGMA_K).unwrap();
        let expected: std::collections::BTreeSet<String> = (0..30)
            .map(|t| format!("type{t:02}()"))
            .filter(|id| matches(&filter, &table, id))
            .collect();
        assert_eq!(printed, expected, "seed {seed}");
        any_selected |= !expected.is_empty();
    }
    assert!(any_selected, "at least one fixture should select something");
}

#[test]
fn env_override_changes_sampling_rate() {
    let dir = tempfile::tempdir().unwrap();
    let fixture_dir = dir.path().join("fixture");
    tigris(&[
        "gen-fixture",
        "--fixture",
        "running-example",
        "--out",
        fixture_dir.to_str().unwrap(),
    ]);
    let out_dir = dir.path().join("out");
    let replay = Command::new(env!("CARGO_BIN_EXE_tigris"))
        .args([
            "replay",
            "--config",
            fixture_dir.join("config.properties").to_str().unwrap(),
            "--input",
            fixture_dir.join("events.jsonl").to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .env("TIGRIS_SAMPLINGPERCENTAGE", "1.0")
        .output()
        .unwrap();
    assert!(replay.status.success(), "{}", stderr(&replay));
    // config says 0.5 (100 traces); the environment override doubles it
    assert_eq!(line_count(&out_dir.join("traces.jsonl")), 200);
}
