use abfrac::abquad::FracOrder;
use abfrac::cli::selfcheck::{self, SelfcheckOptions, Status};
use std::path::Path;
use std::process::{Command, Output};

fn abfrac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_abfrac"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn ml_examples() {
    let o = abfrac(&["ml", "--alpha", "1", "--beta", "1", "--z", "1"]);
    assert!(o.status.success());
    let v: f64 = stdout(&o).trim().parse().unwrap();
    assert!((v - std::f64::consts::E).abs() < 1e-14);

    let o = abfrac(&["ml", "--alpha", "0.5", "--beta", "1", "--z", "0"]);
    assert_eq!(stdout(&o).trim(), "1.0");

    let o = abfrac(&["ml", "--alpha", "0.5", "--z", "-3", "--json"]);
    let j: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(j["value"].as_f64().unwrap() > 0.0);
}

#[test]
fn ml_domain_error_exits_2() {
    let o = abfrac(&["ml", "--alpha", "2", "--beta", "1", "--z", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("alpha"));
    let o = abfrac(&["ml", "--alpha", "0.5", "--z", "60"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn converge_quadratic_summary_in_band() {
    let dir = tempfile::tempdir().unwrap();
    let o = abfrac(&[
        "converge",
        "--function",
        "quadratic",
        "--alpha",
        "0.5",
        "--out",
        path(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = read(dir.path(), "convergence.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "n,tau,abs_error_at_T,eoc");
    assert_eq!(lines.len(), 7);
    let summary: f64 = lines[6]
        .strip_prefix("summary,,,")
        .unwrap()
        .parse()
        .unwrap();
    assert!((0.9..=1.5).contains(&summary), "{summary}");
    let manifest: serde_json::Value =
        serde_json::from_str(&read(dir.path(), "run_manifest.json")).unwrap();
    assert_eq!(manifest["command"], "converge");
    assert_eq!(manifest["config"]["n"][4], 1024);
}

#[test]
fn converge_const_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let o = abfrac(&[
        "converge",
        "--function",
        "const",
        "--alpha",
        "0.3,0.9",
        "--out",
        path(dir.path()),
    ]);
    assert!(o.status.success());
    for a in ["0.3", "0.9"] {
        let csv = read(dir.path(), &format!("convergence_alpha{a}.csv"));
        assert!(csv.ends_with("summary,,,exact\n"));
        for line in csv.lines().skip(1).take(5) {
            let err: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
            assert!(err <= 1e-12);
        }
    }
}

#[test]
fn converge_linear_errors_decrease() {
    let dir = tempfile::tempdir().unwrap();
    let o = abfrac(&[
        "converge",
        "--function",
        "linear",
        "--alpha",
        "0.9",
        "--json",
        "--out",
        path(dir.path()),
    ]);
    let j: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let errs: Vec<f64> = j["studies"][0]["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["abs_error_at_t"].as_f64().unwrap())
        .collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn converge_without_closed_form_exits_3_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = abfrac(&[
        "converge",
        "--function",
        "exp",
        "--horizon",
        "80",
        "--out",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!out.exists());
}

#[test]
fn csv_output_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = abfrac(&[
            "simulate",
            "--m",
            "40",
            "--n",
            "30",
            "--snapshots",
            "0,10,30",
            "--alpha",
            "0.5,0.9",
            "--out",
            path(d.path()),
        ]);
        assert!(o.status.success());
        let o = abfrac(&["converge", "--out", path(d.path())]);
        assert!(o.status.success());
    }
    for name in ["head_profiles.csv", "convergence.csv", "run_manifest.json"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
}

#[test]
fn simulate_defaults_with_plots() {
    let dir = tempfile::tempdir().unwrap();
    let o = abfrac(&["simulate", "--plot", "--out", path(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = read(dir.path(), "head_profiles.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "r,k0,k20,k50");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 350);
    assert!(rows.iter().flatten().all(|v| v.is_finite()));
    assert_eq!(&rows[0][1..], &[0.0, 0.0, 0.0]);
    assert_eq!(&rows[349][1..], &[1.0, 1.0, 1.0]);

    for (name, curves) in [("fig_a.svg", 3), ("fig_b.svg", 1), ("fig_c.svg", 2)] {
        let svg = read(dir.path(), name);
        let doc = roxmltree::Document::parse(&svg).unwrap_or_else(|e| panic!("{name}: {e}"));
        let lines = doc
            .descendants()
            .filter(|n| n.has_tag_name("polyline"))
            .count();
        assert_eq!(lines, curves, "{name}");
        assert!(svg.contains("#1f77b4"));
        assert!(!svg.contains("href"), "{name} must be self-contained");
    }
}

#[test]
fn simulate_two_orders_differ_in_interior() {
    let dir = tempfile::tempdir().unwrap();
    let o = abfrac(&[
        "simulate",
        "--alpha",
        "0.5,0.9",
        "--snapshots",
        "50",
        "--plot",
        "--out",
        path(dir.path()),
    ]);
    assert!(o.status.success());
    let csv = read(dir.path(), "head_profiles.csv");
    assert!(csv.starts_with("r,alpha0.5_k50,alpha0.9_k50\n"));
    let interior: Vec<Vec<f64>> = csv
        .lines()
        .skip(2)
        .take(340)
        .map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect())
        .collect();
    assert!(interior.iter().all(|r| r[0] != r[1]));
    let fig_b = read(dir.path(), "fig_b.svg");
    assert!(fig_b.contains("#1f77b4") && fig_b.contains("#ff7f0e"));
}

#[test]
fn simulate_zero_data_gives_zero_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = abfrac(&[
        "simulate",
        "--m",
        "30",
        "--n",
        "60",
        "--phi-c",
        "0",
        "--outer",
        "0",
        "--initial",
        "constant",
        "--out",
        path(dir.path()),
    ]);
    assert!(o.status.success());
    let csv = read(dir.path(), "head_profiles.csv");
    for line in csv.lines().skip(1) {
        assert!(line.split(',').skip(1).all(|v| v == "0.0"), "{line}");
    }
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"alpha": 0.9, "M": 20, "N": 40, "snapshots": [0, 40], "S": 2.0,
            "initial": {"kind": "custom", "values": [0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,1]}}"#,
    )
    .unwrap();
    let o = abfrac(&[
        "simulate",
        "--config",
        path(&cfg),
        "--n",
        "10",
        "--snapshots",
        "0,10",
        "--out",
        path(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m: serde_json::Value =
        serde_json::from_str(&read(dir.path(), "run_manifest.json")).unwrap();
    assert_eq!(m["config"]["N"], 10);
    assert_eq!(m["config"]["M"], 20);
    assert_eq!(m["config"]["alpha"][0], 0.9);
    assert_eq!(m["config"]["S"], 2.0);
    assert_eq!(m["config"]["initial"]["kind"], "custom");
}

#[test]
fn bad_config_exits_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{\n  \"M\": 20,\n  \"alpah\": 0.5\n}").unwrap();
    let o = abfrac(&["simulate", "--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("alpah") && stderr(&o).contains("line 3"));
    assert!(!out.exists());

    std::fs::write(&cfg, r#"{"M": 2}"#).unwrap();
    let o = abfrac(&["simulate", "--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`M`"));
    assert!(!out.exists());

    let o = abfrac(&["simulate", "--alpha", "1.5", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn solver_breakdown_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = abfrac(&[
        "simulate",
        "--m",
        "20",
        "--n",
        "10",
        "--snapshots",
        "0,10",
        "--phi-c",
        "1e308",
        "--outer",
        "1e308",
        "--initial",
        "constant",
        "--out",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("time step 1"));
    assert!(!out.exists());
}

#[test]
fn selfcheck_passes_and_reports_json() {
    let o = abfrac(&["selfcheck", "--json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let j: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(j["passed"], true);
    let checks = j["checks"].as_array().unwrap();
    assert!(checks.len() >= 15);
    for c in checks {
        assert!(c["name"].is_string() && c["status"] == "pass" && c.get("measured").is_some());
    }
}

#[test]
fn selfcheck_j0_branch_is_informational() {
    let o = abfrac(&["selfcheck", "--json", "--branch", "j0"]);
    let j: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let cross = j["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "classical_limit_j0")
        .unwrap();
    assert_eq!(cross["status"], "info");
}

fn sign_bug(alpha: FracOrder, n: usize) -> Vec<f64> {
    let mut b = selfcheck::standard_weights(alpha, n);
    for (j, w) in b.iter_mut().enumerate() {
        if j % 2 == 1 {
            *w = -*w;
        }
    }
    b
}

#[test]
fn selfcheck_catches_weight_sign_bug() {
    let report = selfcheck::run(&SelfcheckOptions {
        weights: sign_bug,
        ..Default::default()
    });
    assert_eq!(report.exit_code(), 1);
    let tele = report
        .checks
        .iter()
        .find(|c| c.name == "weight_telescoping")
        .unwrap();
    assert_eq!(tele.status, Status::Fail);
}
