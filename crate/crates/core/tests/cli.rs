use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use multilens::scene::{load_scene, parse_scene};

fn scenes_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes")
}

fn scene(name: &str) -> String {
    scenes_dir().join(name).display().to_string()
}

fn multilens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multilens"))
        .args(args)
        .env("MULTILENS_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn data_rows(csv: &str) -> usize {
    csv.lines().filter(|l| !l.starts_with('#')).count() - 1
}

#[test]
fn figure_scenes_are_canonical() {
    let mut seen = 0;
    for entry in std::fs::read_dir(scenes_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let text = std::fs::read_to_string(&path).unwrap();
        let (s, _) = load_scene(&path).unwrap();
        assert_eq!(s.to_canonical_string(), text, "{}", path.display());
        seen += 1;
    }
    assert!(seen >= 7);
}

#[test]
fn solve_prints_one_row_per_image() {
    for (name, rows) in [("fig2.json", 5), ("fig6.json", 100), ("fig8.json", 94)] {
        let out = stdout(&multilens(&["solve", "--scene", &scene(name)]));
        assert_eq!(data_rows(&out), rows, "{name}");
        let summary = out.lines().last().unwrap();
        assert!(
            summary.starts_with(&format!("# images={rows} suspects=0")),
            "{summary}"
        );
        assert!(summary.contains("within_bounds=true"));
    }
}

#[test]
fn solve_output_is_deterministic_and_precise() {
    let a = stdout(&multilens(&["solve", "--scene", &scene("fig4.json")]));
    let b = stdout(&multilens(&["solve", "--scene", &scene("fig4.json")]));
    assert_eq!(a, b);
    let header = a.lines().next().unwrap();
    assert_eq!(
        header,
        "index,x1_u,x1_v,x2_u,x2_v,residual,det,parity,morse_type"
    );
    let first = a.lines().nth(1).unwrap();
    let u = first.split(',').nth(1).unwrap();
    let mantissa = u.trim_start_matches('-').split('e').next().unwrap();
    assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17);
}

#[test]
fn solve_writes_files_when_asked() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = stdout(&multilens(&[
        "solve",
        "--scene",
        &scene("fig2.json"),
        "--out",
        d,
        "--format",
        "both",
    ]));
    assert!(out.starts_with("images=5"));
    let csv = std::fs::read_to_string(dir.path().join("images.csv")).unwrap();
    assert_eq!(data_rows(&csv), 5);
    let svg = std::fs::read_to_string(dir.path().join("images.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn curves_report_multiplicity_groups() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = stdout(&multilens(&[
        "curves",
        "--scene",
        &scene("fig3.json"),
        "--out",
        d,
    ]));
    assert!(out.contains("multiplicities=[1, 5]"), "{out}");
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("curves.json")).unwrap())
            .unwrap();
    assert_eq!(meta["max_multiplicity"], 5);
    assert!(dir.path().join("critical.svg").exists());
    assert!(dir.path().join("caustic.svg").exists());
    let first = std::fs::read_to_string(dir.path().join("caustic_000.csv")).unwrap();
    assert!(first.starts_with("plane,component,vertex,u,v\nsource,0,0,"));

    let fig2 = tempfile::tempdir().unwrap();
    let out = stdout(&multilens(&[
        "curves",
        "--scene",
        &scene("fig2.json"),
        "--out",
        fig2.path().to_str().unwrap(),
    ]));
    assert!(out.starts_with("critical=1 groups=1"));
    let svg = std::fs::read_to_string(fig2.path().join("critical.svg")).unwrap();
    // two masses and five image markers
    assert_eq!(svg.matches(r#"fill="black""#).count(), 2);
    assert_eq!(svg.matches("<path d=\"M").count(), 1 + 5);
}

#[test]
fn massless_scene_has_empty_curves() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.json");
    std::fs::write(
        &path,
        r#"{"planes": [{"masses": [{"position": [0.0, 0.0], "einstein_radius": 0.0}]}]}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = stdout(&multilens(&[
        "curves",
        "--scene",
        path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--grid",
        "64",
    ]));
    assert!(out.starts_with("critical=0 groups=0"));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("curves.json")).unwrap())
            .unwrap();
    assert_eq!(meta["critical"].as_array().unwrap().len(), 0);
}

#[test]
fn build_writes_reproducible_scenes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = stdout(&multilens(&[
        "build", "2", "2", "--lambda", "0.1", "--eps", "0.01", "--out", d,
    ]));
    assert!(out.contains("count=25"), "{out}");
    let (scene, lens) = load_scene(dir.path().join("scene.json")).unwrap();
    assert_eq!(scene.epsilons, vec![0.01]);
    assert_eq!(lens.plane_count(), 2);
    let again = stdout(&multilens(&[
        "solve",
        "--scene",
        dir.path().join("scene.json").to_str().unwrap(),
    ]));
    assert!(again.lines().last().unwrap().starts_with("# images=25"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["expected_count"], 25);

    let single = tempfile::tempdir().unwrap();
    let out = stdout(&multilens(&[
        "build",
        "3",
        "--out",
        single.path().to_str().unwrap(),
    ]));
    assert!(out.contains("count=10"), "{out}");
}

#[test]
fn cosmo_table() {
    let out = stdout(&multilens(&[
        "cosmo",
        "--omega-m",
        "1",
        "--omega-lambda",
        "0",
        "1",
        "2",
        "3",
    ]));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "plane,z,d_C,d_M,d_A,beta,epsilon");
    let row1: Vec<f64> = lines[1]
        .split(',')
        .skip(1)
        .map(|v| v.parse().unwrap())
        .collect();
    let row2: Vec<f64> = lines[2]
        .split(',')
        .skip(1)
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(row1[5], 0.0);
    assert!((row1[4] - 0.307008).abs() < 1e-5);
    let d = |z: f64| 2.0 * (1.0 - 1.0 / (1.0 + z).sqrt());
    let eps2 = d(1.0) * (d(3.0) - d(2.0)) / ((d(2.0) - d(1.0)) * d(3.0));
    assert!((row2[5] - eps2).abs() < 1e-9);
    assert!(out.contains("additivity: PASS"));

    let out = stdout(&multilens(&[
        "cosmo",
        "1",
        "2",
        "3",
        "--realize",
        "0.05",
        "--mode",
        "background",
    ]));
    assert!(out.contains("realized:"));
}

#[test]
fn bounds_and_tune() {
    let out = stdout(&multilens(&["bounds", "3", "3"]));
    assert_eq!(out, "lower=16 upper=136 even=10 odd=6 conjectured=100\n");
    let out = stdout(&multilens(&["bounds", "1", "1", "1"]));
    assert!(out.contains("single_mass_max=30"));
    let out = stdout(&multilens(&["tune", "4"]));
    assert!(out.starts_with("g=4 polygon_radius="));
}

#[test]
fn eps_scan_counts() {
    let out = stdout(&multilens(&[
        "eps-scan",
        "--scene",
        &scene("fig6.json"),
        "--to",
        "0.001",
        "--steps",
        "2",
    ]));
    let counts: Vec<&str> = out
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(counts, vec!["100", "100", "94"]);
}

#[test]
fn failures_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad_json = dir.path().join("bad.json");
    std::fs::write(&bad_json, "{\n  \"planes\": [\n").unwrap();
    let o = multilens(&["solve", "--scene", bad_json.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));

    let bad_eps = dir.path().join("eps.json");
    std::fs::write(&bad_eps, r#"{"planes": [{"rhie": 2}], "epsilons": [0.1]}"#).unwrap();
    let o = multilens(&["solve", "--scene", bad_eps.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("epsilons"));

    let o = multilens(&[
        "solve",
        "--scene",
        dir.path().join("missing.json").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));

    let o = multilens(&[
        "build",
        "2",
        "2",
        "--lambda",
        "0.9",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(6));

    let o = Command::new(env!("CARGO_BIN_EXE_multilens"))
        .args(["bounds", "2"])
        .env("MULTILENS_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn parse_scene_reports_field_paths() {
    let err = parse_scene(
        r#"{"planes": [{"masses": [{"position": [0.0, 0.0], "einstein_radius": -1.0}]}]}"#,
    )
    .unwrap_err();
    assert!(
        err.to_string()
            .contains("planes[0].masses[0].einstein_radius"),
        "{err}"
    );
}
