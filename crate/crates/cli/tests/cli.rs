use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridclear"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn envelope(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is a JSON envelope: {e}\n{}",
            String::from_utf8_lossy(&out.stdout)
        )
    })
}

fn result(out: &Output) -> Value {
    envelope(out)["report"]["result"].clone()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect()
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-8)
}

fn stderr_text(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

#[test]
fn congested_duopoly_dispatch_matches_its_reference() {
    let dir = tempfile::tempdir().unwrap();
    let gen = run(dir.path(), &["examples", "1"]);
    assert_eq!(code(&gen), 0, "{}", stderr_text(&gen));
    let out = run(dir.path(), &["dispatch", "ex1.json"]);
    assert_eq!(code(&out), 0, "{}", stderr_text(&out));
    let r = result(&out);
    assert!(close(&floats(&r["dispatch"]["x"]), &[1.0, 1.0]));
    assert!(close(&floats(&r["dispatch"]["pi"]), &[1.0, 2.0]));
    assert_eq!(r["kkt"]["ok"], Value::Bool(true));
    let env = envelope(&out);
    let digest = env["report"]["scenario_digest"].as_str().unwrap();
    assert!(digest.starts_with("sha256:"), "{digest}");
}

#[test]
fn congested_chain_dispatch_matches_its_reference() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), &["examples", "2", "--C", "1", "--Cp", "2", "--D", "3"]);
    let out = run(dir.path(), &["dispatch", "ex2.json"]);
    assert_eq!(code(&out), 0, "{}", stderr_text(&out));
    let r = result(&out);
    assert!(close(&floats(&r["dispatch"]["x"]), &[1.0, 1.0, 1.0, 0.0]));
}

#[test]
fn dispatch_renders_csv_tables() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), &["examples", "1"]);
    let out = run(dir.path(), &["dispatch", "ex1.json", "--format", "csv"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("node,demand,pi\n"), "{text}");
    assert!(text.contains("\ngenerator,node,x,pi,payoff\n"), "{text}");
    assert!(text.contains("\nline,flow,capacity,mu_forward,mu_reverse\n"), "{text}");
}

#[test]
fn equilibrium_bids_price_the_paired_network_at_the_markup() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), &["examples", "3", "--k", "10", "--C", "1"]);
    let out = run(
        dir.path(),
        &["dispatch", "ex3.json", "--bids", "ex3_ne.json"],
    );
    assert_eq!(code(&out), 0, "{}", stderr_text(&out));
    let r = result(&out);
    assert!(close(&floats(&r["dispatch"]["pi"]), &[20.0, 10.0]));
    assert!(close(&floats(&r["dispatch"]["x"]), &[1.0, 1.0, 0.0, 0.0]));
}

#[test]
fn verify_confirms_the_reference_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), &["examples", "3", "--k", "10", "--C", "1"]);
    let out = run(
        dir.path(),
        &[
            "game",
            "ex3.json",
            "verify",
            "--bids",
            "ex3_ne.json",
            "--eps",
            "1e-6",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr_text(&out));
    let r = result(&out);
    assert!(r["verdict"]["GridEpsilonNe"].is_object(), "{r}");
}

#[test]
fn verify_refutes_truthful_bidding_under_price_settlement() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), &["examples", "3", "--k", "10", "--C", "1"]);
    std::fs::write(
        dir.path().join("truthful.json"),
        r#"[
          {"generator": "g1", "p": 1.0},
          {"generator": "g2", "p": 10.0},
          {"generator": "g3", "p": 10.0},
          {"generator": "g4", "p": 20.0}
        ]"#,
    )
    .unwrap();
    let out = run(
        dir.path(),
        &["game", "ex3.json", "verify", "--bids", "truthful.json"],
    );
    assert_eq!(code(&out), 1, "{}", stderr_text(&out));
    let r = result(&out);
    assert!(r["verdict"]["Refuted"].is_object(), "{r}");
}

#[test]
fn anarchy_ratio_matches_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), &["examples", "3", "--k", "10", "--C", "1"]);
    let out = run(
        dir.path(),
        &["game", "ex3.json", "poa", "--bids", "ex3_ne.json"],
    );
    assert_eq!(code(&out), 0, "{}", stderr_text(&out));
    let r = result(&out);
    assert!((r["ratio"].as_f64().unwrap() - 5.5).abs() < 1e-9, "{r}");
}

#[test]
fn dynamics_cycles_on_the_congested_duopoly() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), &["examples", "1"]);
    let out = run(
        dir.path(),
        &[
            "game", "ex1.json", "dynamics", "--grid", "0.5", "--cap", "10",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr_text(&out));
    let r = result(&out);
    let period = r["outcome"]["Cycle"]["period"].as_u64().unwrap();
    assert!(period >= 2, "{r}");
}

#[test]
fn dynamics_renders_a_trajectory_csv() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), &["examples", "1"]);
    let out = run(
        dir.path(),
        &[
            "game", "ex1.json", "dynamics", "--grid", "0.5", "--cap", "10", "--format", "csv",
        ],
    );
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("round,generator,p,s,q,payoff\n"), "{text}");
}

#[test]
fn pnsp_refuses_a_pivotal_generator() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), &["examples", "1"]);
    let out = run(dir.path(), &["pnsp", "ex1.json"]);
    assert_eq!(code(&out), 1);
    assert!(stderr_text(&out).contains("g2"), "{}", stderr_text(&out));
}

#[test]
fn pnsp_constructs_and_settles_the_paired_network() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), &["examples", "3", "--k", "10", "--C", "1"]);
    let out = run(dir.path(), &["pnsp", "ex3.json", "--construct"]);
    assert_eq!(code(&out), 0, "{}", stderr_text(&out));
    let r = result(&out);
    assert!(close(
        &floats(&r["settlement"]["dispatch"]["x"]),
        &[2.0, 0.0, 0.0, 0.0]
    ));
    assert_eq!(r["bids"].as_array().unwrap().len(), 4);
}

#[test]
fn check_reports_three_explained_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), &["examples", "1"]);
    let out = run(dir.path(), &["check", "ex1.json"]);
    assert_eq!(code(&out), 1);
    let r = result(&out);
    for key in ["assumption1", "congestion_free", "monopoly_free"] {
        assert_eq!(r[key]["holds"], Value::Bool(false), "{key}: {r}");
        assert!(r[key]["explanation"].is_string(), "{key}: {r}");
    }
    assert_eq!(r["all_hold"], Value::Bool(false));
}

#[test]
fn check_passes_the_paired_network() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), &["examples", "3", "--k", "10", "--C", "1"]);
    let out = run(dir.path(), &["check", "ex3.json"]);
    assert_eq!(code(&out), 0, "{}", stderr_text(&out));
    assert_eq!(result(&out)["all_hold"], Value::Bool(true));
}

#[test]
fn example_parameter_violations_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["examples", "1", "--C", "1", "--D", "0.5"]);
    assert_eq!(code(&out), 2);
    assert!(
        stderr_text(&out).contains("demand must exceed"),
        "{}",
        stderr_text(&out)
    );
}

#[test]
fn identical_runs_emit_identical_report_bytes() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), &["examples", "3", "--k", "10", "--C", "1"]);
    let strip = |out: &Output| -> String {
        String::from_utf8(out.stdout.clone())
            .unwrap()
            .lines()
            .filter(|l| !l.contains("duration_ms"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let first = run(dir.path(), &["pnsp", "ex3.json", "--construct"]);
    let second = run(dir.path(), &["pnsp", "ex3.json", "--construct"]);
    assert_eq!(strip(&first), strip(&second));
}

#[test]
fn two_sided_markets_settle_and_render_consumer_rows() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("market.json"),
        r#"{
          "nodes": [{"id": "n1", "demand": 0.0}],
          "lines": [],
          "generators": [
            {"id": "g1", "node": "n1", "cost": {"kind": "linear", "params": {"a": 1.0}}}
          ],
          "consumers": [
            {"id": "c1", "node": "n1",
             "valuation": {"kind": "piecewise_linear", "params": {"points": [[0.0, 0.0], [3.0, 15.0], [4.0, 15.0]]}}},
            {"id": "c2", "node": "n1",
             "valuation": {"kind": "piecewise_linear", "params": {"points": [[0.0, 0.0], [2.0, 8.0], [3.0, 8.0]]}}}
          ]
        }"#,
    )
    .unwrap();
    std::fs::write(
        dir.path().join("bids.json"),
        r#"{
          "generators": [{"generator": "g1", "p": 1.0}],
          "consumers": [
            {"consumer": "c1", "r": 5.0, "t": 3.0},
            {"consumer": "c2", "r": 4.0, "t": 2.0}
          ]
        }"#,
    )
    .unwrap();
    let cleared = run(
        dir.path(),
        &["dispatch", "market.json", "--bids", "bids.json", "--format", "csv"],
    );
    assert_eq!(code(&cleared), 0, "{}", stderr_text(&cleared));
    let text = String::from_utf8(cleared.stdout).unwrap();
    assert!(text.contains("\nconsumer,node,y,pi,payoff\n"), "{text}");
    assert!(text.contains("c1,n1,3,1,12\n"), "{text}");

    let settled = run(dir.path(), &["pnsp", "market.json", "--bids", "bids.json"]);
    assert_eq!(code(&settled), 0, "{}", stderr_text(&settled));
    let r = result(&settled);
    assert!((r["settlement"]["budget"].as_f64().unwrap() + 18.0).abs() < 1e-8, "{r}");

    let bare = run(dir.path(), &["dispatch", "market.json"]);
    assert_eq!(code(&bare), 2);
}

#[test]
fn best_response_echoes_the_player() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), &["examples", "3", "--k", "10", "--C", "1"]);
    let out = run(
        dir.path(),
        &[
            "game",
            "ex3.json",
            "best-response",
            "--bids",
            "ex3_ne.json",
            "--player",
            "g2",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr_text(&out));
    let r = result(&out);
    assert_eq!(r["player"], Value::String("g2".into()));
    assert!(r["best_response"]["payoff"].as_f64().unwrap().abs() < 1e-6, "{r}");
}

#[test]
fn construction_refuses_a_congested_optimum_as_a_finding() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), &["examples", "1"]);
    let out = run(
        dir.path(),
        &["game", "ex1.json", "construct", "--kind", "congestion-free"],
    );
    assert_eq!(code(&out), 1);
    assert!(
        stderr_text(&out).contains("precondition failed"),
        "{}",
        stderr_text(&out)
    );
}

#[test]
fn commands_without_tables_refuse_csv() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), &["examples", "1"]);
    let out = run(dir.path(), &["check", "ex1.json", "--format", "csv"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_files_exit_with_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["dispatch", "missing.json"]);
    assert_eq!(code(&out), 2);
}
