use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use voila::fixtures;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn voila(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voila")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn lattice_summary_for_fig3() {
    let o = voila(&["lattice", "--net", path(&data("fig3.json"))]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("nodes: 9, max-size: 3, reduction: 43.75%"));
}

#[test]
fn greedy_la_policy_for_fig1() {
    let (net, costs) = (data("fig1.json"), data("fig1_costs.json"));
    let o = voila(&[
        "policy", "--net", path(&net), "--costs", path(&costs), "--matrix", "sym:200", "--strategy", "greedy-la",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("ETC: 59.8000"));
}

#[test]
fn policy_dump_is_json() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("policy.json");
    let (net, costs) = (data("fig1.json"), data("fig1_costs.json"));
    let o = voila(&[
        "policy", "--net", path(&net), "--costs", path(&costs), "--matrix", "sym:200", "--dump", path(&dump),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&dump).unwrap()).unwrap();
    assert_eq!(v["root"]["type"], "acquire");
}

#[test]
fn evi_reports_best_set() {
    let (net, costs) = (data("fig1.json"), data("fig1_costs.json"));
    let o = voila(&["evi", "--net", path(&net), "--costs", path(&costs), "--matrix", "sym:200"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("best: {X1, X2} benefit 6.6000"));
}

#[test]
fn missing_file_names_the_path() {
    let o = voila(&["lattice", "--net", "/no/such/net.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/no/such/net.json"));
    assert!(o.stdout.is_empty());
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(voila(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(voila(&["lattice"]).status.code(), Some(1));
    let o = voila(&["lattice", "--net", path(&data("fig3.json")), "--evidence", "X9=T"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unnormalized_network_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"class": "Y", "variables": [{"name": "Y", "states": ["a", "b"], "parents": [], "cpt": [[0.5, 0.4]]}]}"#,
    )
    .unwrap();
    let o = voila(&["lattice", "--net", path(&bad)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn oracle_passes_on_bundled_networks() {
    let o = voila(&[
        "oracle", "--net", path(&data("fig1.json")), "--costs", path(&data("fig1_costs.json")), "--matrix", "sym:200",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("optimal ETC: 59.8000"));
    let o = voila(&["oracle", "--net", path(&data("fig3.json")), "--costs", path(&data("fig3_costs.json"))]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));

    let dir = tempfile::tempdir().unwrap();
    let nb = dir.path().join("nb4.json");
    std::fs::write(&nb, fixtures::naive_bayes(4).to_json()).unwrap();
    let o = voila(&["oracle", "--net", path(&nb), "--matrix", "sym:100"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("lattice 16 brute force 16 ok"));
}

#[test]
fn sweep_files_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str, jobs: &str| {
        let out = dir.path().join(format!("{tag}.csv"));
        let summary = dir.path().join(format!("{tag}-summary.csv"));
        let o = voila(&[
            "sweep", "--net", path(&data("fig3.json")), "--synthetic", "--mode", "asym", "--targets", "0:1000:250",
            "--seeds", "1,2", "--jobs", jobs, "--out", path(&out), "--summary", path(&summary),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        (std::fs::read(out).unwrap(), std::fs::read(summary).unwrap())
    };
    let (a, sa) = run("a", "1");
    let (b, sb) = run("b", "3");
    assert_eq!(a, b);
    assert_eq!(sa, sb);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("target_emc,mode,seed,strategy,etc,savings\n"));
    // 5 targets, 2 seeds, 5 strategies.
    assert_eq!(text.lines().count(), 1 + 5 * 2 * 5);
    assert!(String::from_utf8(sa).unwrap().starts_with("interval_lo,interval_hi,strategy,mean_savings\n"));
}

#[test]
fn sweep_with_fixed_costs_reports_fig1_savings() {
    let o = voila(&[
        "sweep", "--net", path(&data("fig1.json")), "--costs", path(&data("fig1_costs.json")), "--targets",
        "17.6:70.4:52.8", "--strategies", "greedy,greedy-la",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("70.4000,sym,0,greedy-la,59.8000,10.6000"), "{text}");
    assert!(text.contains("70.4000,sym,0,greedy,70.4000,0.0000"), "{text}");
}
