use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hormander"))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin().args(args).arg("--config").arg(config).arg("--out").arg(out).output().unwrap()
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

const EIGEN: &str = r#"
[family]
name = "euclidean(2)"

[grid]
lo = [0.0, 0.0]
hi = [1.0, 1.0]
h = 0.015625
"#;

#[test]
fn eigen_unit_square() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "eigen.toml", EIGEN);
    let out = dir.path().join("out");
    let o = run(&["eigen"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    let lambda = r["result"]["eigen"]["lambda"].as_f64().unwrap();
    assert!((lambda - 2.0 * std::f64::consts::PI.powi(2)).abs() < 0.01 * 19.74, "{lambda}");
    assert_eq!(r["command"], "eigen");
    assert!(out.join("eigenfield.csv").exists());
}

#[test]
fn eigenfield_plot_has_single_interior_max() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "eigen.toml", &EIGEN.replace("0.015625", "0.0625"));
    let out = dir.path().join("out");
    assert!(run(&["eigen", "--plot"], &cfg, &out).status.success());
    let svg = std::fs::read_to_string(out.join("eigenfield.svg")).unwrap();
    // the top colormap value appears once: the centre node of a 17x17 grid
    assert_eq!(svg.matches("fill=\"#fde725\"").count(), 1);
    let rect = svg.lines().find(|l| l.contains("#fde725")).unwrap();
    assert!(rect.contains("x=\"48\" y=\"48\""), "{rect}");
}

#[test]
fn distance_three_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "d.toml",
        r#"
[family]
name = "euclidean(2)"

[grid]
lo = [-0.5, -0.5]
hi = [3.5, 4.5]
h = 0.05

[distance]
from = [0.0, 0.0]
to = [3.0, 4.0]
"#,
    );
    let out = dir.path().join("out");
    let o = run(&["distance"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let d = report(&out)["result"]["distance"].as_f64().unwrap();
    assert!((d - 5.0).abs() < 0.15, "{d}");
    let csv = std::fs::read_to_string(out.join("path.csv")).unwrap();
    assert!(csv.starts_with("x1,x2"));
}

#[test]
fn verify_supersolution_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "v.toml",
        r#"
seed = 7

[family]
name = "euclidean(2)"

[grid]
lo = [0.0, 0.0]
hi = [1.0, 1.0]
h = 0.03125

[verify]
u = "exp(x+y)"
"#,
    );
    let out = dir.path().join("out");
    let o = run(&["verify", "thm1.2"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["result"]["passed"], 20);
    assert_eq!(r["result"]["total"], 20);
    assert_eq!(r["pass"], true);

    // the alias runs the same suite
    let out2 = dir.path().join("out2");
    assert!(run(&["verify", "supersolution"], &cfg, &out2).status.success());
    assert_eq!(report(&out2)["result"], r["result"]);
}

#[test]
fn unknown_key_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &format!("{EIGEN}\n[eigen]\npotential = \"0\"\nbogus = 1\n"));
    let o = run(&["eigen"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));

    let o = bin().arg("eigen").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_table_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", EIGEN);
    let o = run(&["distance"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solver_error_exits_one_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "f.toml",
        r#"
[family]
name = "euclidean(2)"

[grid]
lo = [0.0, 0.0]
hi = [1.0, 1.0]
h = 0.0625

[verify]
u = "x - 0.5"
subdomains = 4
"#,
    );
    let out = dir.path().join("out");
    let o = run(&["verify", "thm1.2"], &cfg, &out);
    assert_eq!(o.status.code(), Some(1));
    let r = report(&out);
    assert_eq!(r["pass"], false);
    assert!(r["error"].as_str().unwrap().contains("not positive"));
}

#[test]
fn reruns_are_byte_identical_and_echo_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "heis.toml",
        "name = \"heisenberg\"\nn = 3\nm = 2\n\n[[fields]]\ncoefficients = [[[1.0, [0, 0, 0]]], [], [[-0.5, [0, 1, 0]]]]\n\n[[fields]]\ncoefficients = [[], [[1.0, [0, 0, 0]]], [[0.5, [1, 0, 0]]]]\n",
    );
    let cfg = write(
        dir.path(),
        "run.toml",
        r#"
seed = 3

[family]
file = "heis.toml"

[grid]
lo = [-1.0, -1.0, -1.0]
hi = [1.0, 1.0, 1.0]
h = 0.25

[probe]
center = [0.0, 0.0, 0.0]
radii = [0.5, 0.75]
corpus_size = 5
"#,
    );
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for out in [&a, &b] {
        let o = run(&["probe", "poincare"], &cfg, out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ra = std::fs::read(a.join("report.json")).unwrap();
    assert_eq!(ra, std::fs::read(b.join("report.json")).unwrap());

    // the echo carries every default, so a rerun from it gives the same report
    let echo = a.join("config.echo.toml");
    assert!(std::fs::read_to_string(&echo).unwrap().contains("corpus_size = 5"));
    assert!(run(&["probe", "poincare"], &echo, &c).status.success());
    assert_eq!(ra, std::fs::read(c.join("report.json")).unwrap());

    // the seed flag overrides the config
    let d = dir.path().join("d");
    assert!(bin()
        .args(["probe", "poincare", "--seed", "4", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&d)
        .output()
        .unwrap()
        .status
        .success());
    assert_eq!(report(&d)["seed"], 4);
}

#[test]
fn fields_info_reports_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "i.toml",
        "[family]\nname = \"heisenberg\"\n\n[fields]\npoints = [[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]]\n",
    );
    let out = dir.path().join("out");
    let o = run(&["fields", "info"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    let ranks = r["result"]["rank"].as_array().unwrap();
    assert_eq!(ranks.len(), 2);
    assert!(ranks.iter().all(|p| p["rank"] == 3 && p["step"] == 2));
}
