use std::fs;
use std::path::Path;

use imv_align::cli::files::{format_matrix, heatmap_levels, parse_matrix, parse_vector};
use imv_align::cli::{run, EXIT_CONTRACT, EXIT_OK, EXIT_USAGE};
use imv_align::numerics::DenseMatrix;
use tempfile::TempDir;

fn imv(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let code = run(std::iter::once("imv").chain(args.iter().copied()), &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn put(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn vector(path: &str) -> Vec<f64> {
    parse_vector(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn imv_of_identity() {
    let dir = TempDir::new().unwrap();
    let a = put(dir.path(), "a.csv", "2,2\n1,0\n0,1\n");
    let out = dir.path().join("pi.csv");
    let (code, text) = imv(&["imv", "--alignment", &a, "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(text.trim(), "monotone, complete");
    assert_eq!(vector(out.to_str().unwrap()), vec![0.0, 1.0]);
}

#[test]
fn imv_of_soft_alignment() {
    let dir = TempDir::new().unwrap();
    let a = put(dir.path(), "a.csv", "3,2\n0.2,0\n0.6,0.4\n0.2,0.6\n");
    let out = dir.path().join("pi.csv");
    let (code, _) = imv(&["imv", "--alignment", &a, "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let pi = vector(out.to_str().unwrap());
    assert!((pi[0] - 1.0).abs() < 1e-12 && (pi[1] - 1.6).abs() < 1e-12, "{pi:?}");
}

#[test]
fn imv_exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("pi.csv");
    let out = out.to_str().unwrap();
    let unnormalised = put(dir.path(), "u.csv", "2,2\n0.5,0\n0.4,1\n");
    assert_eq!(imv(&["imv", "--alignment", &unnormalised, "--out", out]).0, EXIT_CONTRACT);
    let garbled = put(dir.path(), "g.csv", "2,2\n1,0\n");
    assert_eq!(imv(&["imv", "--alignment", &garbled, "--out", out]).0, EXIT_USAGE);
    assert_eq!(imv(&["imv", "--alignment", "/no/such/file", "--out", out]).0, EXIT_USAGE);
    assert_eq!(imv(&["imv"]).0, EXIT_USAGE);
    assert_eq!(imv(&["frobnicate"]).0, EXIT_USAGE);
}

#[test]
fn hma_reconstruct_positions_sma() {
    let dir = TempDir::new().unwrap();
    let raw = put(dir.path(), "raw.txt", "0.5\n0.2\n1.0\n");
    let star = dir.path().join("star.txt");
    let star = star.to_str().unwrap();
    assert_eq!(imv(&["hma", "--imv", &raw, "--t1", "5", "--out", star]).0, EXIT_OK);
    assert_eq!(vector(star), vec![0.0, 0.0, 4.0]);

    let flat = put(dir.path(), "flat.txt", "0.5\n0.2\n0.1\n");
    assert_eq!(imv(&["hma", "--imv", &flat, "--t1", "5", "--out", star]).0, 4);

    let diag = put(dir.path(), "diag.txt", "0\n1\n");
    let rec = dir.path().join("rec.csv");
    let rec = rec.to_str().unwrap();
    assert_eq!(imv(&["reconstruct", "--imv", &diag, "--t1", "2", "--sigma2", "0.01", "--out", rec]).0, EXIT_OK);
    let m = parse_matrix(&fs::read_to_string(rec).unwrap()).unwrap();
    assert!(m.max_abs_diff(&DenseMatrix::identity(2)) < 1e-10);

    let pos = dir.path().join("e.txt");
    let pos = pos.to_str().unwrap();
    assert_eq!(imv(&["positions", "--imv", &diag, "--t1", "2", "--sigma2", "0.01", "--out", pos]).0, EXIT_OK);
    let e = vector(pos);
    assert!((e[0] - 0.0).abs() < 1e-10 && (e[1] - 1.0).abs() < 1e-10, "{e:?}");

    let ok = put(dir.path(), "ok.txt", "0\n0.5\n1\n");
    let (code, text) = imv(&["sma", "--imv", &ok, "--t1", "2"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(text.trim().parse::<f64>().unwrap(), 0.0);
    assert_eq!(imv(&["sma", "--imv", &ok, "--t1", "2", "--sigma2", "1"]).0, EXIT_USAGE);
}

#[test]
fn oracle_counts() {
    assert_eq!(imv(&["oracle", "--t1", "2", "--t2", "3"]), (EXIT_OK, "2 paths, PASS\n".to_string()));
    assert_eq!(imv(&["oracle", "--t1", "3", "--t2", "5"]), (EXIT_OK, "6 paths, PASS\n".to_string()));
    assert_eq!(imv(&["oracle", "--t1", "4", "--t2", "3"]).0, EXIT_USAGE);
}

#[test]
fn gradcheck_commands() {
    for op in ["sma_loss", "hma_transform"] {
        let (code, text) = imv(&["gradcheck", "--op", op, "--seed", "3"]);
        assert_eq!(code, EXIT_OK, "{text}");
        assert!(text.contains("PASS"));
    }
    assert_eq!(imv(&["gradcheck", "--op", "softmax_of_doom"]).0, EXIT_USAGE);
}

#[test]
fn heatmaps() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("h.pgm");
    let out = out.to_str().unwrap();
    let id = put(dir.path(), "id.csv", &format_matrix(&DenseMatrix::identity(3)));
    assert_eq!(imv(&["heatmap", "--alignment", &id, "--out", out]).0, EXIT_OK);
    assert_eq!(fs::read_to_string(out).unwrap(), "P2\n3 3\n255\n255 0 0\n0 255 0\n0 0 255\n");

    let uniform = put(dir.path(), "u.csv", &format_matrix(&DenseMatrix::filled(2, 3, 0.5)));
    assert_eq!(imv(&["heatmap", "--alignment", &uniform, "--out", out]).0, EXIT_OK);
    let pgm = fs::read_to_string(out).unwrap();
    assert!(pgm.lines().skip(3).all(|l| l == "255 255 255"), "{pgm}");
}

#[test]
fn heatmap_levels_scale_linearly() {
    let m = DenseMatrix::from_rows(&[vec![0.1, 0.4, 0.8], vec![0.2, 0.05, 0.0]]).unwrap();
    let levels = heatmap_levels(&m);
    for (l, v) in levels.iter().zip(m.as_slice()) {
        let expected = (v / 0.8 * 255.0).round();
        assert_eq!(*l as f64, expected);
    }
}

#[test]
fn round_trip_through_files() {
    let dir = TempDir::new().unwrap();
    let path = [0usize, 0, 1, 2, 2, 3];
    let mut data = vec![0.0; 4 * path.len()];
    for (j, &i) in path.iter().enumerate() {
        let neighbour = if i + 1 < 4 { i + 1 } else { i - 1 };
        data[i * path.len() + j] = 0.98;
        data[neighbour * path.len() + j] = 0.02;
    }
    let a = DenseMatrix::new(4, path.len(), data).unwrap();
    let a_path = put(dir.path(), "a.csv", &format_matrix(&a));
    let pi = dir.path().join("pi.txt");
    let pi = pi.to_str().unwrap();
    let rec = dir.path().join("rec.csv");
    let rec = rec.to_str().unwrap();
    let pi2 = dir.path().join("pi2.txt");
    let pi2 = pi2.to_str().unwrap();
    assert_eq!(imv(&["imv", "--alignment", &a_path, "--out", pi]).0, EXIT_OK);
    assert_eq!(imv(&["reconstruct", "--imv", pi, "--t1", "4", "--sigma2", "0.001", "--out", rec]).0, EXIT_OK);
    assert_eq!(imv(&["imv", "--alignment", rec, "--out", pi2]).0, EXIT_OK);
    for (x, y) in vector(pi).iter().zip(vector(pi2)) {
        assert!((x - y).abs() < 0.1, "{x} vs {y}");
    }
}

#[test]
fn train_toy_writes_report_and_heatmap() {
    let dir = TempDir::new().unwrap();
    let cfg = put(
        dir.path(),
        "run.json",
        r#"{"train": {"mode": "HMA", "steps": 20, "eval_every": 10, "eval_size": 4}, "seeds": [0, 1]}"#,
    );
    let (code, text) = imv(&["train-toy", "--config", &cfg]);
    assert_eq!(code, EXIT_OK, "{text}");
    assert_eq!(text.lines().count(), 2);
    for seed in [0, 1] {
        let report = fs::read_to_string(dir.path().join(format!("HMA-seed{seed}.jsonl"))).unwrap();
        assert_eq!(report.lines().count(), 21);
        let first: serde_json::Value = serde_json::from_str(report.lines().next().unwrap()).unwrap();
        assert!(first["recon"].as_f64().unwrap().is_finite());
        let pgm = fs::read_to_string(dir.path().join(format!("HMA-seed{seed}.pgm"))).unwrap();
        assert!(pgm.starts_with("P2\n"));
    }
    let (again, _) = imv(&["train-toy", "--config", &cfg]);
    assert_eq!(again, EXIT_OK);

    let bad_json = put(dir.path(), "bad.json", "{ not json");
    assert_eq!(imv(&["train-toy", "--config", &bad_json]).0, EXIT_USAGE);
    let bad_mode = put(dir.path(), "mode.json", r#"{"train": {"mode": "XYZ"}}"#);
    assert_eq!(imv(&["train-toy", "--config", &bad_mode]).0, EXIT_USAGE);
    let unknown = put(dir.path(), "unknown.json", r#"{"sigma3": 1}"#);
    assert_eq!(imv(&["train-toy", "--config", &unknown]).0, EXIT_USAGE);
}
