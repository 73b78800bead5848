use std::path::Path;
use std::process::{Command, Output};

fn gjms(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gjms")).args(args).env_remove("GJMS_THREADS").output().expect("runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(1).map(|l| l.split(',').map(str::to_owned).collect()).collect()
}

#[test]
fn analytic_spectrum_rows() {
    let o =
        gjms(&["spectrum", "--model", "heis", "--d", "1", "--s", "1", "--op", "delta", "--cutoff", "50", "--analytic"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("sector,indices,delta_eig,operator_eig,multiplicity\n"));
    let r = rows(&text);
    assert_eq!(r.len(), 3);
    let mult: Vec<&str> = r.iter().map(|x| x[4].as_str()).collect();
    assert_eq!(mult, ["1", "4", "2"]);
    let lam: f64 = r[2][2].parse().unwrap();
    assert!((lam - (2.0 * std::f64::consts::PI + 4.0 * std::f64::consts::PI.powi(2))).abs() < 1e-12);
}

#[test]
fn grid_spectrum_of_a_small_torus() {
    let o = gjms(&["spectrum", "--model", "torus", "--n", "3", "--N", "8", "--op", "yamabe"]);
    assert_eq!(o.status.code(), Some(0));
    let r = rows(&stdout(&o));
    let total: usize = r.iter().map(|x| x[4].parse::<usize>().unwrap()).sum();
    assert_eq!(total, 512);
    let min: f64 = r[0][3].parse().unwrap();
    assert!(min.abs() < 1e-10);
    // 17 significant digits
    assert_eq!(r[1][3].split('e').next().unwrap().len(), 18);
}

#[test]
fn negcount_flags_and_exit_codes() {
    let o = gjms(&["negcount", "--model", "heis", "--d", "1", "--op", "yamabe", "--s-sweep", "5,10,20,40"]);
    let counts: Vec<String> = rows(&stdout(&o)).into_iter().map(|r| r[1].clone()).collect();
    assert_eq!(counts, ["3", "115", "7163", "455663"]);
    let summary: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(summary["pass"], false);
    assert_eq!(o.status.code(), Some(1));

    let o = gjms(&["negcount", "--model", "heis", "--d", "2", "--op", "paneitz", "--s-sweep", "2,4,8"]);
    assert_eq!(o.status.code(), Some(0));

    let o = gjms(&["negcount", "--model", "heis", "--d", "1", "--op", "yamabe"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn grid_negcount_matches_the_closed_form_at_small_s() {
    let grid =
        gjms(&["negcount", "--grid", "--model", "heis", "--d", "1", "--N", "12", "--op", "yamabe", "--s-sweep", "4"]);
    let exact = gjms(&["negcount", "--model", "heis", "--d", "1", "--op", "yamabe", "--s-sweep", "4"]);
    assert_eq!(stdout(&grid), stdout(&exact));
}

#[test]
fn config_errors_leave_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "model = [").unwrap();
    let out = dir.path().join("out.json");
    let o = gjms(&["battery", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    let unknown = dir.path().join("unknown.toml");
    std::fs::write(&unknown, "[model]\nschema_version = 1\nkind = \"torus\"\nn = 2\ncolour = 3\n").unwrap();
    let o = gjms(&["spectrum", "--config", unknown.to_str().unwrap(), "--N", "4"]);
    assert_eq!(o.status.code(), Some(2));

    let o = gjms(&["spectrum", "--model", "torus", "--N", "4"]);
    assert_eq!(o.status.code(), Some(2));
    let o = gjms(&["spectrum", "--model", "sphere", "--n", "2", "--N", "4"]);
    assert_eq!(o.status.code(), Some(2));
    let o = gjms(&["spectrum", "--model", "torus", "--n", "2", "--cutoff", "10", "--analytic"]);
    assert_eq!(o.status.code(), Some(2));

    let o = Command::new(env!("CARGO_BIN_EXE_gjms"))
        .args(["qk", "--model", "torus", "--n", "2", "--N", "8"])
        .env("GJMS_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("run.toml");
    std::fs::write(
        &cfg,
        r#"
tol_scale = 1.0

[model]
schema_version = 1
kind = "torus"
n = 3
N = 16

[[upsilons]]
terms = [{ index = [1, 0, 0], amplitude = 0.1 }]

[[upsilons]]
terms = [{ index = [1, 1, 0], amplitude = 0.3, phase = 0.5 }]
"#,
    )
    .unwrap();
    cfg
}

#[test]
fn battery_is_deterministic_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let o = gjms(&["battery", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = Command::new(env!("CARGO_BIN_EXE_gjms"))
        .args(["battery", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap()])
        .env("GJMS_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    let json: serde_json::Value = serde_json::from_slice(&ta).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["summary"]["fail"], 0);
    assert_eq!(json["kernel_dimension"], 1);
}

#[test]
fn battery_with_zero_factor_has_zero_discrepancies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("zero.toml");
    std::fs::write(&cfg, "[model]\nschema_version = 1\nkind = \"torus\"\nn = 3\nN = 8\n\n[[upsilons]]\nterms = []\n")
        .unwrap();
    let o = gjms(&["battery", "--config", cfg.to_str().unwrap()]);
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    for r in json["reports"].as_array().unwrap() {
        if r["quantity"].as_str().unwrap().starts_with("conjugation") {
            continue;
        }
        assert_eq!(r["discrepancy"], 0.0, "{r}");
    }
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let o = gjms(&["export-matrix", "--config", cfg.to_str().unwrap(), "--N", "4", "--op", "delta"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("# 64 64 "), "{}", &text[..20]);
    let first = text.lines().nth(1).unwrap();
    let parts: Vec<&str> = first.split(' ').collect();
    assert_eq!(parts.len(), 3);
    assert!(parts[0].parse::<usize>().is_ok() && parts[1].parse::<usize>().is_ok());
}

#[test]
fn nullvec_partitions() {
    let o = gjms(&["nullvec", "--model", "heis", "--d", "1", "--s", "critical", "--N", "8", "--analytic"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().next().unwrap(), "point,x1,y1,t,sign,domain");
    assert_eq!(text.lines().count(), 513);

    let o = gjms(&["nullvec", "--model", "torus", "--n", "2", "--N", "8"]);
    assert_eq!(o.status.code(), Some(0));
    let r = rows(&stdout(&o));
    assert!(r.iter().all(|x| x[4] == "0"));

    let o = gjms(&["nullvec", "--model", "torus", "--n", "2", "--N", "8", "--vector", "3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn qk_on_the_critical_heisenberg_quotient() {
    let o = gjms(&["qk", "--model", "heis", "--d", "1", "--s", "critical", "--N", "16"]);
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(json["kernel_dimension"], 2);
    assert_eq!(json["verdict"]["outcome"], "not-by-this-basis");
    assert_eq!(o.status.code(), Some(0));
}
