use std::fs;
use std::path::{Path, PathBuf};

use semline::cli::{run_cli_with, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use semline::io::{load_annotation, load_index, AnnotationRecord};
use semline::{Frame, Line};

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("semline").chain(args.iter().copied());
    let code = run_cli_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let prefix = dir.join(name);
    let mut args = vec!["synth", "--out", p(&prefix)];
    args.extend_from_slice(extra);
    let (code, _, err) = run(&args);
    assert_eq!(code, EXIT_OK, "{err}");
    prefix
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    PathBuf::from(format!("{}{ext}", prefix.display()))
}

#[test]
fn hiou_of_file_with_itself() {
    let dir = tempfile::tempdir().unwrap();
    let s = synth(dir.path(), "a", &["--seed", "3"]);
    let json = with_ext(&s, ".json");
    let (code, out, _) = run(&["hiou", p(&json), p(&json)]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out, "1.000000\n");
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let (code, _, err) = run(&["frobnicate"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(!err.is_empty());
}

#[test]
fn oracle_without_gt_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let s = synth(dir.path(), "a", &[]);
    let (code, _, err) = run(&[
        "detect",
        p(&with_ext(&s, ".pgm")),
        p(&with_ext(&s, ".csv")),
        "--scorer",
        "oracle",
    ]);
    assert_eq!(code, EXIT_USAGE, "{err}");
}

#[test]
fn malformed_csv_is_data_error_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    fs::write(&csv, "rho,theta,prob,d_rho,d_theta\n1,0.5,0.9,0,0\n2,oops,0.5,0,0\n").unwrap();
    let (code, _, err) = run(&["nms", p(&csv), "--frame", "100x100", "--k", "1"]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.contains(":3:") && err.contains("theta"), "{err}");
}

#[test]
fn two_tone_detect_recovers_gt() {
    let dir = tempfile::tempdir().unwrap();
    let s = synth(
        dir.path(),
        "two",
        &["--seed", "5", "--lines", "1", "--distractors", "3"],
    );
    let out = dir.path().join("det.json");
    let (code, _, err) = run(&[
        "detect",
        p(&with_ext(&s, ".pgm")),
        p(&with_ext(&s, ".csv")),
        "--scorer",
        "oracle",
        "--gt",
        p(&with_ext(&s, ".json")),
        "--k",
        "4",
        "--out",
        p(&out),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    let gt = load_annotation(&with_ext(&s, ".json")).unwrap().polar_lines().unwrap();
    let det = load_annotation(&out).unwrap().polar_lines().unwrap();
    assert_eq!(det.len(), gt.len());
    let frame = Frame::new(480, 480).unwrap();
    for (a, b) in det.iter().zip(&gt) {
        assert!(semline::geometry::polar_distance(a, b, &frame) < 1e-9);
    }
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), "a", &["--seed", "9", "--sigma", "8"]);
    let b = synth(dir.path(), "b", &["--seed", "9", "--sigma", "8"]);
    for ext in [".pgm", ".csv"] {
        assert_eq!(
            fs::read(with_ext(&a, ext)).unwrap(),
            fs::read(with_ext(&b, ext)).unwrap()
        );
    }
    let report = |name: &str| {
        let out = dir.path().join(name);
        let (code, _, err) = run(&[
            "detect",
            p(&with_ext(&a, ".pgm")),
            p(&with_ext(&a, ".csv")),
            "--report",
            p(&out),
            "--out",
            p(&dir.path().join(format!("{name}.json"))),
        ]);
        assert_eq!(code, EXIT_OK, "{err}");
        fs::read(out).unwrap()
    };
    let r1 = report("r1.csv");
    assert_eq!(r1, report("r2.csv"));
    let text = String::from_utf8(r1).unwrap();
    let mut rows = text.lines();
    assert_eq!(rows.next(), Some("combo_id,mask_bits,score,rank"));
    let first: Vec<&str> = rows.next().unwrap().split(',').collect();
    assert_eq!(first[3], "1");
    assert_eq!(first[1].len(), 8);
    assert_eq!(first[2].split('.').nth(1).unwrap().len(), 6);
    assert_eq!(text.lines().count(), 257);
}

#[test]
fn candidates_nms_score_chain() {
    let dir = tempfile::tempdir().unwrap();
    let s = synth(dir.path(), "c", &["--seed", "2", "--lines", "2"]);
    let reliable = dir.path().join("reliable.json");
    let (code, _, err) = run(&[
        "nms",
        p(&with_ext(&s, ".csv")),
        "--frame",
        "480x480",
        "--k",
        "4",
        "--out",
        p(&reliable),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert_eq!(load_annotation(&reliable).unwrap().lines.len(), 4);

    let (code, out, err) = run(&["score", p(&with_ext(&s, ".pgm")), p(&reliable), "--mode", "pairs"]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert_eq!(out.lines().count(), 1 + 6);

    let grid = dir.path().join("grid.csv");
    let (code, _, _) = run(&["candidates", "--frame", "480x480", "--out", p(&grid)]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(fs::read_to_string(grid).unwrap().lines().count(), 1025);
}

#[test]
fn vp_symmetry_and_group() {
    let dir = tempfile::tempdir().unwrap();
    let s = synth(dir.path(), "v", &["--seed", "4", "--lines", "2"]);
    let img = with_ext(&s, ".pgm");
    let gt = with_ext(&s, ".json");
    let (code, out, err) = run(&["vp", p(&img), p(&gt), "--scorer", "oracle", "--gt", p(&gt)]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert_eq!(out.lines().count(), 2);

    let (code, out, _) = run(&["symmetry", p(&img), p(&gt)]);
    assert_eq!(code, EXIT_OK);
    assert!(out.lines().nth(1).unwrap().starts_with("1\t"));

    let (code, out, err) = run(&["group", p(&img), p(&gt), "--grid", "20"]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert_eq!(out.lines().count(), 20);
    assert!(out.lines().all(|l| l.len() == 20));
}

#[test]
fn embed_and_retrieve() {
    let dir = tempfile::tempdir().unwrap();
    let frame = Frame::new(320, 240).unwrap();
    let mut files = Vec::new();
    for (id, rho) in [("low", 60.0), ("lower", 70.0), ("high", -60.0)] {
        let rec = AnnotationRecord::from_lines(id, &frame, &[Line::new(rho, std::f64::consts::FRAC_PI_2)]).unwrap();
        let path = dir.path().join(format!("{id}.json"));
        semline::io::save_annotations(&path, &[rec]).unwrap();
        files.push(path);
    }
    let index = dir.path().join("index.tsv");
    let mut args = vec!["embed", "--k", "2", "--out", p(&index)];
    args.extend(files.iter().map(|f| p(f)));
    let (code, _, err) = run(&args);
    assert_eq!(code, EXIT_OK, "{err}");
    assert_eq!(load_index(&index).unwrap().len(), 3);

    let (code, out, err) = run(&["retrieve", "--index", p(&index), "--query", "low", "--top-k", "1"]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert_eq!(out.lines().nth(1).unwrap().split('\t').nth(1), Some("lower"));

    let (code, _, _) = run(&["retrieve", "--index", p(&index), "--query", "missing"]);
    assert_eq!(code, EXIT_DATA);
}

#[test]
fn config_file_is_applied_and_overridden() {
    let dir = tempfile::tempdir().unwrap();
    let s = synth(dir.path(), "k", &["--seed", "1"]);
    let cfg = dir.path().join("semline.conf");
    fs::write(&cfg, "k = 3\n").unwrap();
    let out = dir.path().join("r.json");
    let csv = with_ext(&s, ".csv");
    let nms = |extra: &[&str]| {
        let mut args = vec![
            "--config",
            p(&cfg),
            "nms",
            p(&csv),
            "--frame",
            "480x480",
            "--out",
            p(&out),
        ];
        args.extend_from_slice(extra);
        assert_eq!(run(&args).0, EXIT_OK);
        load_annotation(&out).unwrap().lines.len()
    };
    assert_eq!(nms(&[]), 3);
    assert_eq!(nms(&["--k", "5"]), 5);

    fs::write(&cfg, "nonsense = 3\n").unwrap();
    assert_eq!(
        run(&["--config", p(&cfg), "candidates", "--frame", "10x10"]).0,
        EXIT_DATA
    );
}
