use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn models() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn run(args: &[&str]) -> Output {
    let m = models();
    let args: Vec<String> = args
        .iter()
        .map(|a| match a.strip_prefix('@') {
            Some(name) => m.join(name).to_string_lossy().into_owned(),
            None => a.to_string(),
        })
        .collect();
    Command::new(env!("CARGO_BIN_EXE_maxlin"))
        .args(&args)
        .env_remove("MAXLIN_GUARD")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json output")
}

#[test]
fn tent_context_query_is_independent() {
    let v = json(&run(&[
        "-m", "@tent.json", "ci", "--mode", "context", "--i", "3", "--j", "1,2", "--context", "@tent_ctx.json",
    ]));
    assert_eq!(v["result"], "independent");
    assert_eq!(v["schema"], "maxlin-ci/1");
}

#[test]
fn bipartite_has_eight_impact_graphs() {
    let v = json(&run(&["-m", "@bipartite.json", "impact"]));
    assert_eq!(v["count"], 8);
    assert_eq!(v["galaxies"].as_array().unwrap().len(), 8);
}

#[test]
fn impossible_context_exits_3() {
    let out = run(&["-m", "@tent.json", "source-dag", "--context", "@tent_impossible_ctx.json"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["-m", "@tent.json", "ci", "--mode", "nope", "--i", "1", "--j", "2"]).status.code(), Some(2));
    assert_eq!(run(&["-m", "@tent.json", "ci", "--mode", "dsep", "--i", "1", "--j", "9"]).status.code(), Some(2));
    assert_eq!(run(&["-m", "@missing.json", "kleene"]).status.code(), Some(2));
    assert_eq!(run(&["kleene"]).status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_maxlin"))
        .args(["-m", models().join("tent.json").to_str().unwrap(), "impact"])
        .env("MAXLIN_GUARD", "2")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_model_reports_line() {
    let dir = std::env::temp_dir().join(format!("maxlin-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.json");
    std::fs::write(
        &path,
        "{\n  \"nodes\": [\"a\", \"b\"],\n  \"edges\": [\n    {\"from\": \"a\", \"to\": \"b\", \"weight\": \"0\"}\n  ]\n}\n",
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_maxlin"))
        .args(["-m", path.to_str().unwrap(), "kleene"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
}

#[test]
fn kleene_numbers_are_exact_and_decimal() {
    let v = json(&run(&["-m", "@half_butterfly.json", "kleene"]));
    let rows = &v["cstar"]["rows"];
    // c*_42 = 3/2
    assert_eq!(rows[3][1]["exact"], "3/2");
    assert_eq!(rows[3][1]["approx"], 1.5);
}

#[test]
fn source_dag_and_partition() {
    let v = json(&run(&["-m", "@umbrella.json", "source-dag", "--context", "@umbrella_ctx.json"]));
    let removed: Vec<(String, String)> = v["model_edges_dropped"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| (e["from"].as_str().unwrap().into(), e["to"].as_str().unwrap().into()))
        .collect();
    assert_eq!(
        removed,
        [("1", "7"), ("4", "3"), ("5", "2")].map(|(a, b)| (a.to_string(), b.to_string()))
    );
    let p = json(&run(&["-m", "@tent.json", "partition", "--context", "@tent_ctx.json"]));
    assert_eq!(p["partition"]["l_blocks"], serde_json::json!([["4", "5"]]));
    assert_eq!(p["partition"]["active"], serde_json::json!(["1", "2", "3"]));
}

#[test]
fn dot_output_styles() {
    let out = run(&["-m", "@tent.json", "source-dag", "--context", "@tent_ctx.json", "--dot"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("digraph"));
    assert!(text.contains("\"2\" -> \"3\" [style=dashed]"));
}

#[test]
fn sampling_is_reproducible() {
    let args = ["-m", "@umbrella.json", "sample", "--context", "@umbrella_ctx.json", "--n", "50", "--seed", "9"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("1,2,3,4,5,6,7"));
    for row in lines {
        let cells: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!((cells[5], cells[6]), (3.0, 3.0));
        assert!(cells[1] >= 3.0 && cells[2] >= 3.0);
    }
    assert_eq!(run(&["-m", "@tent.json", "sample", "--dist", "cauchy"]).status.code(), Some(2));
}

#[test]
fn generic_witness_and_representation() {
    let v = json(&run(&["-m", "@diamond.json", "ci", "--mode", "dstar", "--i", "1", "--j", "4", "--k", "2"]));
    assert_eq!(v["result"], "dependent");
    assert!(v["coefficients"].as_array().is_some());
    let r = json(&run(&["-m", "@umbrella.json", "representation", "--context", "@umbrella_ctx.json"]));
    assert_eq!(r["alpha"]["2"]["exact"], "3");
    assert_eq!(r["blocks"].as_array().unwrap().len(), 1);
}

#[test]
fn validate_reports_ok() {
    let v = json(&run(&["-m", "@cassiopeia.json", "validate", "--n", "4000", "--context", "@cassiopeia_ctx.json"]));
    assert_eq!(v["ok"], true, "{v}");
    assert_eq!(v["impact"]["unexpected"].as_array().unwrap().len(), 0);
}
