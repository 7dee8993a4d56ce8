use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bifurcat_core::equilibria::{coexistence_equilibria, Equilibrium};
use bifurcat_core::model::{jacobian, vector_field};
use bifurcat_core::stability::{char_coeffs, classify_equilibrium};
use bifurcat_core::{ModelParams, ParamName, State};
use serde_json::Value;
use tempfile::TempDir;

const P1: &str = r#"
[params]
r1 = 60.0
r2 = 1.6
alpha = 51.57
kappa1 = 23.2197961461739
kappa2 = 0.026671

[simulate]
t_end = 20.0
samples = 50

[continuation]
free = ["kappa1"]
ranges = [[20.0, 26.0]]

[cycles]
free = "kappa1"
offset = 1e-3
search_range = [20.0, 26.0]
"#;

const P3: &str = r#"
[params]
r1 = 60.0
r2 = 1.6
alpha = 53.1351
kappa1 = 24.665343
kappa2 = 0.026927991

[continuation]
free = ["alpha", "kappa1"]
ranges = [[40.0, 60.0], [24.0, 25.5]]
step = { h0 = 1e-3, hmin = 1e-9, hmax = 2e-2 }
"#;

fn run(dir: &Path, command: &str, scenario: &str, extra: &[&str]) -> Output {
    let file = dir.join("scenario.toml");
    fs::write(&file, scenario).unwrap();
    Command::new(env!("CARGO_BIN_EXE_bifurcat"))
        .arg(command)
        .arg("--scenario")
        .arg(&file)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn out(dir: &Path, name: &str) -> PathBuf {
    dir.join("out").join(name)
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_owned).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_owned).collect()).collect();
    (header, rows)
}

fn col(header: &[String], row: &[String], name: &str) -> f64 {
    let i = header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"));
    row[i].parse().unwrap()
}

fn p1_params() -> ModelParams {
    ModelParams::unit_scaled(60.0, 1.6, 51.57, 23.2197961461739, 0.026671).unwrap()
}

/// Residual of `f` after a single Newton step from `s`, relative to `|s|`.
fn one_newton_step_residual(p: &ModelParams, s: State) -> f64 {
    let x = s.to_vector();
    let f = vector_field(p, &s).unwrap();
    let dx = jacobian(p, &s).unwrap().lu().solve(&f).unwrap();
    let y = State::from_vector(&(x - dx));
    vector_field(p, &y).unwrap().amax() / (1.0 + x.amax())
}

#[test]
fn nonpositive_kappa1_exits_with_input_error() {
    let dir = TempDir::new().unwrap();
    let o = run(
        dir.path(),
        "stability",
        &P1.replace("kappa1 = 23.2197961461739", "kappa1 = 0.0"),
        &[],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("schema violation"));
    assert!(!out(dir.path(), "stability.csv").exists());
}

#[test]
fn malformed_input_exits_with_code_one() {
    let dir = TempDir::new().unwrap();
    assert_eq!(
        run(dir.path(), "equilibria", "[params\nr1 = ", &[]).status.code(),
        Some(1)
    );
    assert_eq!(
        run(dir.path(), "equilibria", &format!("{P1}\nunknown = 3\n"), &[])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(run(dir.path(), "nonsense", P1, &[]).status.code(), Some(1));
    assert_eq!(
        run(dir.path(), "figure", P1, &[]).status.code(),
        Some(1),
        "missing [figure]"
    );
    assert_eq!(
        run(dir.path(), "continue-hopf", P1, &[]).status.code(),
        Some(1),
        "one free parameter"
    );
}

#[test]
fn numerical_failure_exits_two_with_event_log() {
    // the Hopf point is subcritical, so no cycle exists for a positive offset
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), "cycles", P1, &[]);
    assert_eq!(o.status.code(), Some(2));
    let log: Value = serde_json::from_str(&fs::read_to_string(out(dir.path(), "failure.json")).unwrap()).unwrap();
    assert!(log["error"].as_str().unwrap().contains("no cycle"));
    assert!(log["events"].is_array());
}

#[test]
fn stability_row_for_p1() {
    let dir = TempDir::new().unwrap();
    assert!(run(dir.path(), "stability", P1, &[]).status.success());
    let (h, rows) = read_csv(&out(dir.path(), "stability.csv"));
    assert_eq!(rows.len(), 1);
    let r = &rows[0];
    assert!((col(&h, r, "E2") - 0.528099623732).abs() < 1e-6);
    assert!((col(&h, r, "lambda1_re") + 109.280194025).abs() < 1e-6);
    assert!(col(&h, r, "lambda2_re").abs() < 1e-6);
    assert!((col(&h, r, "lambda2_im").abs() - 1.098247050732).abs() < 1e-6);
    assert_eq!(r.last().unwrap(), "anti-saddle (stable focus)");

    let p = p1_params();
    let eq = coexistence_equilibria(&p)[0];
    let v = classify_equilibrium(&p, &eq).unwrap();
    let cc = char_coeffs(&p, &eq).unwrap();
    assert_eq!(col(&h, r, "A0"), cc.a0);
    assert_eq!(col(&h, r, "lambda3_im"), v.eigenvalues[2].im);
}

#[test]
fn csv_headers_are_exact() {
    let dir = TempDir::new().unwrap();
    assert!(run(dir.path(), "simulate", P1, &[]).status.success());
    let text = fs::read_to_string(out(dir.path(), "trajectory.csv")).unwrap();
    assert!(text.starts_with("t,E1,E2,M\n"));
    assert_eq!(text.lines().count(), 52);

    assert!(run(dir.path(), "continue-eq", P1, &[]).status.success());
    let text = fs::read_to_string(out(dir.path(), "branch.csv")).unwrap();
    assert!(text.starts_with("s,kappa1,E1,E2,M,A0,A1,A2,tau_LP,tau_H,l1\n"));

    assert!(run(dir.path(), "continue-hopf", P3, &[]).status.success());
    let text = fs::read_to_string(out(dir.path(), "branch.csv")).unwrap();
    assert!(text.starts_with("s,alpha,kappa1,E1,E2,M,A0,A1,A2,tau_LP,tau_H,l1\n"));
}

#[test]
fn numbers_carry_seventeen_significant_digits() {
    let dir = TempDir::new().unwrap();
    assert!(run(dir.path(), "equilibria", P1, &[]).status.success());
    let (h, rows) = read_csv(&out(dir.path(), "equilibria.csv"));
    let i = h.iter().position(|c| c == "E2").unwrap();
    for r in rows {
        let mantissa = r[i].trim_start_matches('-').split('e').next().unwrap().replace('.', "");
        assert_eq!(mantissa.len(), 17, "{}", r[i]);
    }
}

#[test]
fn json_format_mirrors_csv_columns() {
    let dir = TempDir::new().unwrap();
    assert!(run(dir.path(), "continue-eq", P1, &["--format", "json"])
        .status
        .success());
    let v: Value = serde_json::from_str(&fs::read_to_string(out(dir.path(), "branch.json")).unwrap()).unwrap();
    let first = v.as_array().unwrap()[0].as_object().unwrap();
    let keys: Vec<&str> = first.keys().map(String::as_str).collect();
    assert_eq!(
        keys,
        ["s", "kappa1", "E1", "E2", "M", "A0", "A1", "A2", "tau_LP", "tau_H", "l1"]
    );
}

#[test]
fn outputs_are_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for (cmd, text) in [("continue-hopf", P3), ("continue-eq", P1)] {
        assert!(run(a.path(), cmd, text, &[]).status.success());
        assert!(run(b.path(), cmd, text, &[]).status.success());
        for f in ["branch.csv", "events.json"] {
            assert_eq!(
                fs::read(out(a.path(), f)).unwrap(),
                fs::read(out(b.path(), f)).unwrap(),
                "{cmd} {f}"
            );
        }
    }
}

#[test]
fn seed_controls_random_initial_state() {
    let no_initial = P1.to_owned();
    let runs: Vec<Vec<u8>> = ["7", "7", "8"]
        .iter()
        .map(|seed| {
            let dir = TempDir::new().unwrap();
            assert!(run(dir.path(), "simulate", &no_initial, &["--seed", seed])
                .status
                .success());
            fs::read(out(dir.path(), "trajectory.csv")).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_ne!(runs[0], runs[2]);
}

#[test]
fn p3_hopf_continuation_reports_one_bautin_point() {
    let dir = TempDir::new().unwrap();
    assert!(run(dir.path(), "continue-hopf", P3, &[]).status.success());
    let events: Value = serde_json::from_str(&fs::read_to_string(out(dir.path(), "events.json")).unwrap()).unwrap();
    let gh: Vec<&Value> = events
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["kind"] == "GH")
        .collect();
    assert_eq!(gh.len(), 1);
    let kappa1 = gh[0]["location"]["params"]["kappa1"].as_f64().unwrap();
    assert!((kappa1 - 24.665343).abs() < 1e-5, "{kappa1}");
    assert!(gh[0]["certificates"]["l2"].as_f64().unwrap() < 0.0);
}

#[test]
fn emitted_records_reconverge_in_one_newton_step() {
    let dir = TempDir::new().unwrap();
    assert!(run(dir.path(), "continue-hopf", P3, &[]).status.success());
    let base = ModelParams::unit_scaled(60.0, 1.6, 53.1351, 24.665343, 0.026927991).unwrap();
    let (h, rows) = read_csv(&out(dir.path(), "branch.csv"));
    assert!(rows.len() > 10);
    for r in rows.iter().step_by(7) {
        let p = base
            .with(ParamName::Alpha, col(&h, r, "alpha"))
            .with(ParamName::Kappa1, col(&h, r, "kappa1"));
        let s = State::new(col(&h, r, "E1"), col(&h, r, "E2"), col(&h, r, "M"));
        assert!(one_newton_step_residual(&p, s) < 1e-13);
        let cc = char_coeffs(&p, &Equilibrium::coexistence_at(&p, s.e2)).unwrap();
        assert!(cc.hopf_function().abs() < 1e-7 * cc.scale());
    }

    let events: Value = serde_json::from_str(&fs::read_to_string(out(dir.path(), "events.json")).unwrap()).unwrap();
    for e in events.as_array().unwrap() {
        let loc = &e["location"];
        let mut p = base;
        for (k, v) in loc["params"].as_object().unwrap() {
            p.set(k.parse().unwrap(), v.as_f64().unwrap());
        }
        let s = State::new(
            loc["E1"].as_f64().unwrap(),
            loc["E2"].as_f64().unwrap(),
            loc["M"].as_f64().unwrap(),
        );
        assert!(one_newton_step_residual(&p, s) < 1e-13, "{}", e["kind"]);
    }
}

#[test]
fn figure_renders_branch_with_event_markers() {
    let dir = TempDir::new().unwrap();
    let text = format!("{P1}\n[figure]\nsource = \"continue-eq\"\ny = \"E2\"\n");
    assert!(run(dir.path(), "figure", &text, &[]).status.success());
    let svg = fs::read_to_string(out(dir.path(), "figure.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains(">H</text>"));
    assert!(svg.contains("stroke-dasharray"));

    let bad = format!("{P1}\n[figure]\nsource = \"continue-eq\"\ny = \"nope\"\n");
    assert_eq!(run(dir.path(), "figure", &bad, &[]).status.code(), Some(1));
}

#[test]
fn cycle_sweep_finds_fold_of_cycles() {
    let dir = TempDir::new().unwrap();
    let text = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/p4_lpc.toml")).unwrap();
    assert!(run(dir.path(), "cycles", &text, &[]).status.success());
    let events: Value = serde_json::from_str(&fs::read_to_string(out(dir.path(), "events.json")).unwrap()).unwrap();
    let lpc: Vec<&Value> = events
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["kind"] == "LPC")
        .collect();
    assert_eq!(lpc.len(), 1);
    let kappa1 = lpc[0]["location"]["params"]["kappa1"].as_f64().unwrap();
    assert!((kappa1 - 24.6079).abs() < 1e-3, "{kappa1}");
    let (h, rows) = read_csv(&out(dir.path(), "cycles.csv"));
    assert_eq!(h[..4], ["s", "kappa1", "period", "amplitude"]);
    assert!(rows.iter().any(|r| r.last().unwrap() == "true"));
    assert!(rows.iter().any(|r| r.last().unwrap() == "false"));
}
