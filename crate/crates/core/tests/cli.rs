use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_demailly-lab"));
    cmd.env_remove("DEMAILLY_LAB_OUT");
    cmd
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, body).unwrap();
    path
}

/// Column `name` of a CSV text as strings.
fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("no column {name}"));
    lines.map(|l| l.split(',').nth(k).unwrap().to_string()).collect()
}

#[test]
fn kernel_of_zero_weight_at_origin() {
    let out = bin().args(["kernel", "--weight", "zero", "--m", "1", "--z", "0"]).output().unwrap();
    assert!(out.status.success());
    let k: f64 = column(&stdout(&out), "K")[0].parse().unwrap();
    assert!((k - std::f64::consts::FRAC_1_PI).abs() < 1e-14);
}

#[test]
fn approx_of_log_pole() {
    let out = bin().args(["approx", "--weight", "log_pole", "--m", "2", "--z", "0.5"]).output().unwrap();
    assert!(out.status.success());
    let v: f64 = column(&stdout(&out), "V_m")[0].parse().unwrap();
    assert!((v + 0.8354).abs() < 1e-4, "{v}");
}

#[test]
fn envelope_of_neg_abs_square_is_constant() {
    let out = bin().args(["envelope", "--weight", "neg_abs_square"]).output().unwrap();
    assert!(out.status.success());
    let values = column(&stdout(&out), "value");
    assert!(!values.is_empty());
    assert!(values.iter().all(|v| v.parse::<f64>().unwrap() == -1.0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("\"monotone_fixpoint\":true"));
}

#[test]
fn kernel_check_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "checks = [\"kernel\"]\nschedule = [1, 2]\n[grid]\npoints_per_axis = 8\n[[weights]]\nname = \"zero\"\n",
    );
    let out_dir = dir.path().join("out");
    let out = bin().arg("run").arg("--config").arg(&cfg).arg("--out").arg(&out_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = fs::read_to_string(out_dir.join("kernel.csv")).unwrap();
    assert!(csv.starts_with("weight,m,re_z1,im_z1,K,tail_estimate,basis_size,cond_flag\n"));
    let re = column(&csv, "re_z1");
    let im = column(&csv, "im_z1");
    for ((k, x), y) in column(&csv, "K").iter().zip(&re).zip(&im) {
        let (x, y): (f64, f64) = (x.parse().unwrap(), y.parse().unwrap());
        let exact = 1.0 / (std::f64::consts::PI * (1.0 - x * x - y * y).powi(2));
        assert!((k.parse::<f64>().unwrap() / exact - 1.0).abs() < 1e-7);
    }

    let summary: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["seed"], 42);
    assert_eq!(summary["total_violations"], 0);
    assert_eq!(summary["checks"][0]["rows"], 16);
    assert!(!out_dir.join("envelope.csv").exists());
}

#[test]
fn unknown_weight_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[[weights]]\nname = \"banana\"\n");
    let out = bin().arg("run").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("banana"));
}

#[test]
fn malformed_config_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 3\n[tolerances]\nquad_tol = \"small\"\n");
    let out = bin().arg("run").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("quad_tol"), "{err}");
}

#[test]
fn convergence_of_neg_abs_square() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "checks = [\"converge\", \"phi\"]\n[grid]\npoints_per_axis = 10\n[[weights]]\nname = \"neg_abs_square\"\n",
    );
    let out_dir = dir.path().join("reports");
    let out = bin().arg("run").arg("--config").arg(&cfg).env("DEMAILLY_LAB_OUT", &out_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));

    let csv = fs::read_to_string(out_dir.join("converge.csv")).unwrap();
    let ms = column(&csv, "m");
    let errors = column(&csv, "error");
    let tilde = column(&csv, "V_tilde");
    assert!(tilde.iter().all(|v| v.parse::<f64>().unwrap() == -1.0));
    let worst = |m: &str| {
        ms.iter()
            .zip(&errors)
            .filter(|(k, _)| k.as_str() == m)
            .map(|(_, e)| e.parse::<f64>().unwrap().abs())
            .fold(0.0, f64::max)
    };
    assert!(worst("64") < worst("8") && worst("8") < worst("1"));

    let summary: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    let converge = &summary["checks"][0];
    assert_eq!(converge["check"], "converge");
    assert_eq!(converge["violations"], 0);
    assert_eq!(converge["weights"][0]["oracle"], true);
}

#[test]
fn violations_match_csv_rows_and_set_exit_code() {
    // a tolerance no surrogate can meet makes every assessed phi row nonconforming
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "checks = [\"phi\"]\n[grid]\npoints_per_axis = 6\n[tolerances]\nphi_tol = 1e-6\n[[weights]]\nname = \"neg_abs_square\"\n",
    );
    let out_dir = dir.path().join("out");
    let out = bin().arg("run").arg("--config").arg(&cfg).arg("--out").arg(&out_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("failed checks: phi"));
    let csv = fs::read_to_string(out_dir.join("phi.csv")).unwrap();
    let bad = column(&csv, "error").iter().filter(|e| e.parse::<f64>().unwrap() > 1e-6).count();
    let summary: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["total_violations"], bad as u64);
    assert_eq!(summary["failed_checks"][0], "phi");
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "checks = [\"kernel\", \"envelope\", \"bounds\"]\nschedule = [1, 4]\n[grid]\npoints_per_axis = 6\n\
         [[weights]]\nname = \"abs_square\"\n[[weights]]\nname = \"angular_bump\"\n",
    );
    for name in ["a", "b"] {
        let out = bin().arg("run").arg("--config").arg(&cfg).arg("--out").arg(dir.path().join(name)).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    }
    for file in ["kernel.csv", "envelope.csv", "bounds.csv", "summary.json"] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs");
    }
}

#[test]
fn only_restricts_checks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "schedule = [1, 2]\n[grid]\npoints_per_axis = 5\n[[weights]]\nname = \"zero\"\n");
    let out_dir = dir.path().join("out");
    let out = bin()
        .arg("run")
        .arg("--config")
        .arg(&cfg)
        .args(["--only", "envelope,bounds"])
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let mut files: Vec<String> =
        fs::read_dir(&out_dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    files.sort();
    assert_eq!(files, ["bounds.csv", "envelope.csv", "summary.json"]);
}

#[test]
fn bad_flags_exit_with_two() {
    assert_eq!(bin().args(["run", "--only", "plots"]).output().unwrap().status.code(), Some(2));
    assert_eq!(bin().args(["approx", "--weight", "zero", "--z", "x"]).output().unwrap().status.code(), Some(2));
    assert_eq!(bin().arg("run").output().unwrap().status.code(), Some(2));
}
