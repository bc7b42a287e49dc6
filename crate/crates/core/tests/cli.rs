use cylgames::atom_structure::fixtures;
use cylgames::cli::run;
use cylgames::hyperplane::*;
use cylgames::rainbow::RainbowParams;
use serde_json::{json, Value};
use std::path::PathBuf;

fn tmp(name: &str, v: &Value) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cylgames-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, v.to_string()).unwrap();
    p
}

fn cli(args: &[&str], input: &str) -> (i32, String, String) {
    let mut argv = vec!["cylgames".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(&argv, &mut input.as_bytes(), &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn json_out(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn yellow_triangle_is_rejected() {
    let y = json!({"kind": "yellow"});
    let g = json!({
        "nodes": [0, 1, 2],
        "edges": [{"u": 0, "v": 1, "colour": y}, {"u": 1, "v": 2, "colour": y}, {"u": 0, "v": 2, "colour": y}],
        "tuples": [],
    });
    let f = tmp("yyy.json", &g);
    let (code, out, _) = cli(&["graph", "check-j", f.to_str().unwrap()], "");
    assert_eq!(code, 1);
    let v = json_out(&out);
    assert_eq!(v["member"], false);
    assert!(v["violations"][0]["detail"]
        .as_str()
        .unwrap()
        .contains("(y,y,y)"));
}

#[test]
fn witness_passes_substitution() {
    let instance = r#"{"m":2,"constraints":[{"t":{"num":0,"den":1},"r":[{"num":1,"den":1},{"num":0,"den":1},{"num":0,"den":1}]}]}"#;
    let (code, out, _) = cli(&["hyperplane", "witness", instance], "");
    assert_eq!(code, 0);
    let s = point_from_json(&json_out(&out)["point"]).unwrap();
    assert!(AffinePlane::w_plane(3).contains(&s));
    assert_ne!(s[0], q(0));
    for l in 0..3 {
        assert!(!AffinePlane::q_plane(3, l).contains(&s));
    }
}

#[test]
fn cylindrify_saturates_the_last_coordinate() {
    let g = NormalForm::literal(3, Literal::cdelta(&[0, 1]));
    let f = tmp("cdelta.json", &g.to_json());
    let (code, out, _) = cli(
        &["hyperplane", "cylindrify", f.to_str().unwrap(), "--j", "2"],
        "",
    );
    assert_eq!(code, 0);
    let r = NormalForm::from_json(&json_out(&out)).unwrap();
    assert_eq!(r, NormalForm::literal(3, Literal::cdelta(&[0, 1, 2])));
    assert_eq!(r, NormalForm::top(3));
}

#[test]
fn structures_validate_and_solve() {
    let f = tmp(
        "set.json",
        &fixtures::full_set_algebra(2, 2, "s").to_json().unwrap(),
    );
    let (code, out, _) = cli(&["structure", "validate", f.to_str().unwrap()], "");
    assert_eq!(code, 0);
    assert_eq!(json_out(&out)["valid"], true);
    let (code, out, _) = cli(
        &[
            "game",
            "solve",
            "--structure",
            f.to_str().unwrap(),
            "--kind",
            "H",
            "--rounds",
            "2",
            "--restricted",
        ],
        "",
    );
    assert_eq!(code, 0);
    assert_eq!(json_out(&out)["winner"], "E");
}

#[test]
fn budget_exhaustion_is_not_a_verdict() {
    let f = tmp("minimal.json", &RainbowParams::minimal().to_json());
    let (code, out, _) = cli(
        &[
            "game",
            "solve",
            "--structure",
            f.to_str().unwrap(),
            "--kind",
            "F",
            "--m",
            "5",
            "--rounds",
            "6",
            "--budget",
            "1000",
        ],
        "",
    );
    assert_eq!(code, 1);
    let v = json_out(&out);
    assert!(v["winner"].is_null());
    assert_eq!(v["budgetExceeded"], 1000);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(cli(&["frobnicate"], "").0, 2);
    assert_eq!(cli(&["graph", "check-j", "/no/such/file.json"], "").0, 2);
    let out = std::env::temp_dir().join("never-written.json");
    let (code, _, _) = cli(
        &["rainbow", "build", "--n", "2", "-o", out.to_str().unwrap()],
        "",
    );
    assert_eq!(code, 2);
    assert_eq!(cli(&["--help"], "").0, 0);
}

#[test]
fn interactive_play_reads_moves_from_input() {
    let f = tmp(
        "set2.json",
        &fixtures::full_set_algebra(2, 2, "s").to_json().unwrap(),
    );
    let (code, out, err) = cli(
        &[
            "game",
            "play",
            "--interactive",
            "--structure",
            f.to_str().unwrap(),
            "--kind",
            "H",
            "--rounds",
            "2",
            "--role",
            "E",
        ],
        "x\n0\n0\n",
    );
    assert_eq!(code, 0, "{err}");
    assert!(err.contains("not a move"));
    let t = json_out(&out);
    assert_eq!(t["winner"], "E");
    assert_eq!(t["moves"].as_array().unwrap().len(), 4);
}
