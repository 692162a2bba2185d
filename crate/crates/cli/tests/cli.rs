use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/temperature_fixture.csv")
}

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_extremecast"))
        .env("EXTREMECAST_OUT", out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> Output {
    let o = run(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

/// Data rows of a schema-tagged curve or band CSV.
fn rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# schema="));
    lines.skip(1).map(|l| l.split(',').map(str::to_owned).collect()).collect()
}

fn values(path: &Path) -> Vec<f64> {
    rows(path).iter().map(|r| r.last().unwrap().parse().unwrap()).collect()
}

#[test]
fn fgev_forecast_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture();
    ok(dir.path(), &["forecast", "--input", input.to_str().unwrap(), "--method", "fgev"]);
    let v = values(&dir.path().join("forecast_curve.csv"));
    assert_eq!(v.len(), 366);
    assert!(v.iter().all(|&x| x == v[0]));
    assert!(dir.path().join("config.json").exists());
    assert!(dir.path().join("var_model.json").exists());
}

#[test]
fn fgaevm_forecast_covers_the_year() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture();
    ok(
        dir.path(),
        &["forecast", "--input", input.to_str().unwrap(), "--method", "fgaevm", "--dims", "7,7,0", "--quantile", "0.999"],
    );
    let v = values(&dir.path().join("forecast_curve.csv"));
    assert_eq!(v.len(), 366);
    let density = fs::read_to_string(dir.path().join("forecast_density.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&density).unwrap();
    let params = json["data"]["params"].as_array().unwrap();
    assert_eq!(params.len(), 366);
    assert!(params.iter().all(|p| p["sigma"].as_f64().unwrap() > 0.0));
}

#[test]
fn invalid_quantile_exits_with_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture();
    let o = run(dir.path(), &["forecast", "--input", input.to_str().unwrap(), "--method", "fgev", "--quantile", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
    assert_eq!(err["error"], "domain");
}

#[test]
fn spline_methods_need_dims_or_cv() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture();
    let o = run(dir.path(), &["forecast", "--input", input.to_str().unwrap(), "--method", "fgaevm"]);
    assert_eq!(o.status.code(), Some(2));
}

/// A small simulated series saved in the series format.
fn small_series(dir: &Path) -> PathBuf {
    ok(dir, &["eval", "--setting", "2", "--T", "20", "--seed", "3", "--dims", "3,3,0"]);
    dir.join("series.csv")
}

#[test]
fn intervals_are_reproducible_and_nested() {
    let dir = tempfile::tempdir().unwrap();
    let series = small_series(dir.path());
    let args = |threads: &'static str| {
        vec!["--threads", threads, "intervals", "--input", series.to_str().unwrap(), "--dims", "3,3,0", "--B", "200", "--level", "0.95", "--seed", "1"]
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&a, &args("1"));
    ok(&b, &args("4"));
    for f in ["band_pointwise.csv", "band_simultaneous.csv", "bootstrap_curves.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let split = |path: PathBuf| {
        let r = rows(&path);
        let pick = |s: &str| r.iter().filter(|x| x[0] == s).map(|x| x[3].parse::<f64>().unwrap()).collect::<Vec<_>>();
        (pick("lower"), pick("upper"))
    };
    let (pl, pu) = split(a.join("band_pointwise.csv"));
    let (sl, su) = split(a.join("band_simultaneous.csv"));
    assert_eq!(pl.len(), 30);
    for k in 0..30 {
        assert!(sl[k] <= pl[k] && pu[k] <= su[k]);
    }
}

#[test]
fn too_few_replicates_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let series = small_series(dir.path());
    let o = run(dir.path(), &["intervals", "--input", series.to_str().unwrap(), "--dims", "3,3,0", "--B", "10"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("argument"));
}

#[test]
fn simulate_writes_the_summary_table() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--setting", "1", "--reps", "2", "--T", "20", "--seed", "7"]);
    let text = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "setting,method,metric,mean,sd,reps");
    assert_eq!(text.lines().count(), 7);
    assert!(dir.path().join("details.csv").exists());
}

#[test]
fn cv_echoes_a_single_candidate() {
    let dir = tempfile::tempdir().unwrap();
    let series = small_series(dir.path());
    let o = ok(dir.path(), &["cv", "--input", series.to_str().unwrap(), "--candidate", "5,3,0"]);
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "(5, 3, 0)");
    let dims: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("dims.json")).unwrap()).unwrap();
    assert_eq!(dims["data"]["d_mu"], 5);
}

#[test]
fn full_grid_with_free_shape_has_512_candidates() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["eval", "--setting", "3", "--T", "6", "--seed", "4", "--dims", "3,3,0", "--test-fraction", "0.2"]);
    let series = dir.path().join("series.csv");
    let o = run(dir.path(), &["cv", "--input", series.to_str().unwrap(), "--full-grid", "--free-xi"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("candidates: 512"));
}

#[test]
fn gen_fixture_reproduces_the_shipped_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fixture.csv");
    ok(dir.path(), &["gen-fixture", "--output", out.to_str().unwrap()]);
    assert_eq!(fs::read(out).unwrap(), fs::read(fixture()).unwrap());
}
