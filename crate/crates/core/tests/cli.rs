use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pubbound"))
}

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/troponin.csv")
}

fn run(args: &[&str], input: &Path, out: &Path) -> Output {
    let mut cmd = bin();
    cmd.args(&args[..1])
        .arg("--input")
        .arg(input)
        .arg("--out")
        .arg(out)
        .args(&args[1..]);
    cmd.env_remove("PUBBOUND_THREADS");
    cmd.output().unwrap()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn bounds_rows(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect()
}

#[test]
fn fit_troponin() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["fit", "--kind", "dta"], &fixture(), dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let fit = read_json(&dir.path().join("fit.json"));
    assert!((fit["sauc"].as_f64().unwrap() - 0.724).abs() < 0.005);
    assert_eq!(fit["n_studies"], 20);
    assert!(fit["sop_sensitivity"].as_f64().unwrap() > 0.5);
    let curve = fs::read_to_string(dir.path().join("sroc_curve.csv")).unwrap();
    assert!(curve.starts_with("fpr,sroc\n"));
    assert_eq!(curve.lines().count(), 202);
}

#[test]
fn fit_univariate_symmetric() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("u.csv");
    fs::write(&input, "study_id,y,se\na,0.5,0.2\nb,-0.5,0.2\n").unwrap();
    let out = run(
        &["fit", "--kind", "univariate"],
        &input,
        &dir.path().join("o"),
    );
    assert!(out.status.success());
    let fit = read_json(&dir.path().join("o/fit.json"));
    assert!(fit["theta"].as_f64().unwrap().abs() < 1e-12);
}

#[test]
fn malformed_csv_names_row() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    fs::write(&input, "study_id,tp,fp,fn,tn\n1,3,4,5,6\n2,3,x,5,6\n").unwrap();
    let out = run(&["fit", "--kind", "dta"], &input, &dir.path().join("o"));
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error kind=schema"), "{err}");
    assert!(err.contains("row 2") && err.contains("fp"), "{err}");
}

#[test]
fn missing_input_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["fit", "--kind", "dta"],
        &dir.path().join("none.csv"),
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error kind=io"));
}

#[test]
fn invalid_config_rejected_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("o");
    let out = run(&["bounds", "--K", "7"], &fixture(), &o);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error kind=invalid_input"));
    assert!(!o.exists());
}

#[test]
fn p_one_only_matches_fit() {
    let dir = tempfile::tempdir().unwrap();
    let (f, b) = (dir.path().join("f"), dir.path().join("b"));
    assert!(run(&["fit", "--kind", "dta"], &fixture(), &f)
        .status
        .success());
    let out = run(
        &[
            "bounds",
            "--p-grid",
            "1.0",
            "--replicates",
            "2",
            "--K",
            "200",
        ],
        &fixture(),
        &b,
    );
    assert!(out.status.success());
    let fit = read_json(&f.join("fit.json"));
    for row in bounds_rows(&b.join("bounds.csv")) {
        assert_eq!(row[1], "1");
        assert_eq!(
            row[4].parse::<f64>().unwrap(),
            fit["sauc"].as_f64().unwrap()
        );
        assert_eq!(
            row[5].parse::<f64>().unwrap(),
            fit["sauc_lo"].as_f64().unwrap()
        );
        assert_eq!(
            row[6].parse::<f64>().unwrap(),
            fit["sauc_hi"].as_f64().unwrap()
        );
    }
}

#[test]
fn troponin_bounds_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["bounds", "--scenario", "d43", "--plots", "--dump-scores"],
        &fixture(),
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = bounds_rows(&dir.path().join("bounds.csv"));
    let header = fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    assert!(header.starts_with("scenario,p,direction,contrast_bound,sauc,sauc_lo,sauc_hi\n"));
    let r = rows
        .iter()
        .find(|r| r[0] == "d43" && r[1] == "0.1" && r[2] == "min")
        .unwrap();
    assert!((r[4].parse::<f64>().unwrap() - 0.455).abs() < 0.015);
    for name in [
        "summary.json",
        "sroc_band_d43.csv",
        "sauc_vs_p.svg",
        "sroc_band_d43.svg",
        "scores_d43.csv",
    ] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let svg = fs::read_to_string(dir.path().join("sauc_vs_p.svg")).unwrap();
    assert!(svg.contains(r#"viewBox="0 0 800 600""#));
    let summary = read_json(&dir.path().join("summary.json"));
    assert_eq!(summary["config"]["k"], 2000);
    assert_eq!(summary["config"]["p_grid_spec"], "1.0:0.1:0.1");
    assert_eq!(summary["failed_cells"], 0);
    assert_eq!(summary["report"]["unpublished"][9]["s_minus_n"], 180.0);
    let band = fs::read_to_string(dir.path().join("sroc_band_d43.csv")).unwrap();
    assert!(band.starts_with("p,fpr,sroc,sroc_lower,sroc_upper\n"));
    assert_eq!(band.lines().count(), 1 + 10 * 201);
    let scores = fs::read_to_string(dir.path().join("scores_d43.csv")).unwrap();
    assert_eq!(scores.lines().count(), 1 + 20 * 2000);
}

#[test]
fn custom_beta_matches_d43() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let common = ["--p-grid", "0.9,0.5,0.2", "--K", "400", "--replicates", "3"];
    let mut args = vec!["bounds", "--scenario", "0.5:0.5"];
    args.extend_from_slice(&common);
    assert!(run(&args, &fixture(), &a).status.success());
    let mut args = vec!["bounds", "--scenario", "d43"];
    args.extend_from_slice(&common);
    assert!(run(&args, &fixture(), &b).status.success());
    let ra = bounds_rows(&a.join("bounds.csv"));
    let rb = bounds_rows(&b.join("bounds.csv"));
    assert_eq!(ra.len(), rb.len());
    for (x, y) in ra.iter().zip(&rb) {
        assert_eq!(x[0], "beta_0.5_0.5");
        assert_eq!(x[1..], y[1..]);
    }
    assert!(a.join("sroc_band_beta_0.5_0.5.csv").exists());
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let args = ["bounds", "--K", "500", "--replicates", "4", "--plots"];
    let mut c1 = bin();
    c1.args(&args[..1])
        .arg("--input")
        .arg(fixture())
        .arg("--out")
        .arg(&a)
        .args(&args[1..]);
    c1.args(["--threads", "1"]);
    assert!(c1.status().unwrap().success());
    let mut c2 = bin();
    c2.args(&args[..1])
        .arg("--input")
        .arg(fixture())
        .arg("--out")
        .arg(&b)
        .args(&args[1..]);
    c2.env("PUBBOUND_THREADS", "4");
    assert!(c2.status().unwrap().success());
    let mut names: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() >= 8);
    for n in names {
        assert_eq!(
            fs::read(a.join(&n)).unwrap(),
            fs::read(b.join(&n)).unwrap(),
            "{n:?}"
        );
    }
}

#[test]
fn univariate_bounds_copas_jackson() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("u.csv");
    let mut text = String::from("study_id,y,se\n");
    for i in 0..10 {
        text.push_str(&format!("s{i},{},1\n", if i % 2 == 0 { 0.1 } else { -0.1 }));
    }
    fs::write(&input, text).unwrap();
    let o = dir.path().join("o");
    let out = run(
        &[
            "bounds",
            "--kind",
            "univariate",
            "--method",
            "copas-jackson",
            "--p-grid",
            "0.5",
            "--tau-sq",
            "0",
            "--plots",
        ],
        &input,
        &o,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(o.join("bounds.csv")).unwrap();
    assert!(text.starts_with("scenario,p,direction,contrast_bound,theta,theta_lo,theta_hi\n"));
    let rows = bounds_rows(&o.join("bounds.csv"));
    let up = rows.iter().find(|r| r[2] == "max").unwrap();
    assert!((up[4].parse::<f64>().unwrap() - 0.797_884_56).abs() < 1e-8);
    assert!(o.join("bound_vs_p.svg").exists());
}
