use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use poirot::geometry::io::{parse, to_xyz, Format};
use poirot::geometry::{Point, PointCloud, Rotation};
use poirot::model::{checkpoint, parse_key_values, Model, ModelConfig};
use tempfile::TempDir;

fn poirot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poirot"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env("POIROT_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}, stderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_xyz(p: &Path) -> PointCloud {
    parse(&fs::read_to_string(p).unwrap(), Format::Xyz).unwrap()
}

/// The single error line printed on failure.
fn error_line(out: &Output) -> String {
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    let lines: Vec<&str> = err.lines().filter(|l| l.starts_with("error[")).collect();
    assert_eq!(lines.len(), 1, "stderr: {err}");
    lines[0].to_string()
}

#[test]
fn blank_image_has_no_foreground() {
    let dir = TempDir::new().unwrap();
    let img = write(dir.path(), "blank.txt", "0 0 0\n0 0 0\n");
    let out = poirot(&["convert", s(&img), "--format", "image", "--out", s(&dir.path().join("o.xyz"))]);
    let line = error_line(&out);
    assert!(line.starts_with("error[empty]:"), "{line}");
    assert!(line.contains("no foreground pixels"), "{line}");
    assert!(!dir.path().join("o.xyz").exists());
}

#[test]
fn single_pixel_lands_at_the_origin() {
    let dir = TempDir::new().unwrap();
    let img = write(dir.path(), "one.txt", "0 0 0\n0 9 0\n0 0 0\n");
    let out_path = dir.path().join("o.xyz");
    ok(&poirot(&["convert", s(&img), "--format", "image", "--points", "1", "--out", s(&out_path)]));
    let cloud = read_xyz(&out_path);
    assert_eq!(cloud.len(), 1);
    assert!(cloud.point(0).norm() < 1e-12);
}

#[test]
fn image_conversion_counts_and_repeats() {
    let dir = TempDir::new().unwrap();
    let rows: Vec<String> = (0..12)
        .map(|r| (0..12).map(|c| ((r * 7 + c * 3) % 10).to_string()).collect::<Vec<_>>().join(" "))
        .collect();
    let img = write(dir.path(), "img.txt", &rows.join("\n"));
    let foreground = rows
        .iter()
        .flat_map(|r| r.split(' '))
        .filter(|v| v.parse::<f64>().unwrap() > 4.5)
        .count();
    for n in [10, 1000] {
        let a = dir.path().join(format!("a{n}.xyz"));
        let b = dir.path().join(format!("b{n}.xyz"));
        for p in [&a, &b] {
            ok(&poirot(&[
                "convert", s(&img), "--format", "image", "--points", &n.to_string(), "--seed", "3", "--out", s(p),
            ]));
        }
        assert_eq!(read_xyz(&a).len(), n.min(foreground));
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }
}

#[test]
fn ragged_image_reports_the_line() {
    let dir = TempDir::new().unwrap();
    let img = write(dir.path(), "bad.txt", "1 2 3\n4 5\n");
    let out = poirot(&["convert", s(&img), "--format", "image", "--out", s(&dir.path().join("o.xyz"))]);
    let line = error_line(&out);
    assert!(line.starts_with("error[parse]: line 2"), "{line}");
}

#[test]
fn response_of_two_points_peaks_toward_the_second() {
    let dir = TempDir::new().unwrap();
    let cloud = write(dir.path(), "two.xyz", "0 0 0\n0 0 1\n");
    let out_dir = dir.path().join("resp");
    ok(&poirot(&["respond", s(&cloud), "--center", "0", "--bandwidth", "4", "--out", s(&out_dir)]));
    for f in ["response.csv", "response.bin", "config.txt"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let img = fs::read(out_dir.join("heatmap.bmp")).unwrap();
    assert_eq!(&img[..2], b"BM");
    let width = u32::from_le_bytes(img[18..22].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(img[22..26].try_into().unwrap()) as usize;
    assert_eq!((width, height), (64, 64));
    let stride = (3 * width).div_ceil(4) * 4;
    let row = |y_from_top: usize| {
        let start = 54 + (height - 1 - y_from_top) * stride;
        &img[start..start + 3 * width]
    };
    // Northern ring at full scale, southern hemisphere clipped to zero.
    assert!(row(0).iter().all(|&v| v == 255));
    assert!(row(height - 1).iter().all(|&v| v == 0));
}

const TINY_MODEL: &str = "bandwidth = 3\nsamples = 6\nwidths = 2,3\nring_rank = 0\npool_width = 4\n";

fn write_manifest(dir: &Path, class: usize) -> PathBuf {
    let mut r = 0.37f64;
    let pts: Vec<Point> = (0..24)
        .map(|_| {
            let mut next = || {
                r = (r * 9301.0 + 0.49297) % 1.0;
                r - 0.5
            };
            Point::new(next(), next(), next())
        })
        .collect();
    let cloud = PointCloud::new(pts).unwrap();
    fs::write(dir.join("shape.xyz"), to_xyz(&cloud)).unwrap();
    write(dir, "data.txt", &format!("shape.xyz {class}\n"))
}

#[test]
fn zero_learning_rate_keeps_the_initial_parameters() {
    let dir = TempDir::new().unwrap();
    let data = write_manifest(dir.path(), 1);
    let cfg = write(dir.path(), "cfg.txt", &format!("{TINY_MODEL}norm = batch\nlr = 0\nepochs = 2\n"));
    let out_dir = dir.path().join("run");
    ok(&poirot(&["train", "--data", s(&data), "--config", s(&cfg), "--seed", "4", "--out", s(&out_dir)]));
    let (trained, _) = checkpoint::load(&fs::read(out_dir.join("model.ckpt")).unwrap()).unwrap();
    let mut fresh = ModelConfig::default();
    for (_, k, v) in parse_key_values(&fs::read_to_string(out_dir.join("config.txt")).unwrap()).unwrap() {
        if ModelConfig::KEYS.contains(&k.as_str()) {
            fresh.set(&k, &v).unwrap();
        }
    }
    assert_eq!(trained.params(), Model::new(fresh).unwrap().params());
    let log = fs::read_to_string(out_dir.join("metrics.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
}

#[test]
fn overfit_single_sample_evaluates_perfectly() {
    let dir = TempDir::new().unwrap();
    let data = write_manifest(dir.path(), 1);
    let cfg = write(dir.path(), "cfg.txt", &format!("{TINY_MODEL}lr = 0.05\nepochs = 30\n"));
    let out_dir = dir.path().join("run");
    ok(&poirot(&["train", "--data", s(&data), "--config", s(&cfg), "--out", s(&out_dir)]));
    let eval_dir = dir.path().join("eval");
    let out = poirot(&[
        "eval",
        "--checkpoint",
        s(&out_dir.join("model.ckpt")),
        "--data",
        s(&data),
        "--out",
        s(&eval_dir),
    ]);
    ok(&out);
    let record: serde_json::Value = serde_json::from_str(&fs::read_to_string(eval_dir.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(record["metric"], "accuracy");
    assert_eq!(record["value"], 1.0);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), record.to_string());
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = TempDir::new().unwrap();
    let data = write_manifest(dir.path(), 0);
    let cfg = write(dir.path(), "cfg.txt", &format!("{TINY_MODEL}epochs = 2\n"));
    let first = dir.path().join("first");
    ok(&poirot(&["train", "--data", s(&data), "--config", s(&cfg), "--seed", "7", "--out", s(&first)]));
    let second = dir.path().join("second");
    ok(&poirot(&["train", "--data", s(&data), "--config", s(&first.join("config.txt")), "--out", s(&second)]));
    for f in ["config.txt", "metrics.jsonl", "model.ckpt"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn unknown_config_key_is_a_parse_error() {
    let dir = TempDir::new().unwrap();
    let data = write_manifest(dir.path(), 0);
    let cfg = write(dir.path(), "cfg.txt", "# comment\nbandwidth = 3\nlearning_rate = 0.1\n");
    let out = poirot(&["train", "--data", s(&data), "--config", s(&cfg), "--out", s(&dir.path().join("run"))]);
    let line = error_line(&out);
    assert!(line.starts_with("error[parse]: line 3"), "{line}");
    assert!(line.contains("learning_rate"), "{line}");
    assert!(!dir.path().join("run").exists());
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let out = poirot(&["respond", s(&dir.path().join("nope.xyz")), "--out", s(dir.path())]);
    assert!(error_line(&out).starts_with("error[io]:"));
}

/// A bent rod as the atlas, and a scene of its rotated copy next to a far-away blob.
fn detection_inputs(dir: &Path) -> (PathBuf, PathBuf) {
    let atlas: Vec<Point> = (0..20)
        .map(|i| {
            let t = i as f64 * 0.1;
            Point::new(t.cos(), t.sin(), 0.05 * (i % 3) as f64)
        })
        .collect();
    let rot = Rotation::random(5);
    let mut scene: Vec<Point> = atlas.iter().map(|p| rot.apply(p)).collect();
    scene.extend((0..20).map(|i| {
        let a = i as f64 * 2.4;
        Point::new(8.0 + 0.4 * a.cos(), 0.4 * a.sin(), 0.02 * i as f64)
    }));
    let a = dir.join("atlas.xyz");
    let sc = dir.join("scene.xyz");
    fs::write(&a, to_xyz(&PointCloud::new(atlas).unwrap())).unwrap();
    fs::write(&sc, to_xyz(&PointCloud::new(scene).unwrap())).unwrap();
    (sc, a)
}

#[test]
fn detection_writes_its_artifacts_reproducibly() {
    let dir = TempDir::new().unwrap();
    let (scene, atlas) = detection_inputs(dir.path());
    let cfg = write(dir.path(), "cfg.txt", "bandwidth = 4\nwidths = 2,3\nsteps = 3\n");
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        ok(&poirot(&[
            "detect",
            "--scene",
            s(&scene),
            "--atlas",
            s(&atlas),
            "--config",
            s(&cfg),
            "--seed",
            "2",
            "--out",
            s(&out_dir),
        ]));
        out_dir
    };
    let (a, b) = (run("a"), run("b"));
    let files = ["config.txt", "members.txt", "probabilities.jsonl", "summary.json", "labeled.xyz"];
    for f in files {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let members: Vec<usize> = fs::read_to_string(a.join("members.txt"))
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(members.len(), 20);
    let labeled = read_xyz(&a.join("labeled.xyz"));
    let labels = labeled.labels().unwrap();
    assert_eq!(labels.iter().sum::<usize>(), 20);
    assert!(members.iter().all(|&m| labels[m] == 1));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    let probs = fs::read_to_string(a.join("probabilities.jsonl")).unwrap();
    assert_eq!(probs.lines().count() as u64, summary["candidates"].as_u64().unwrap());
    let total: f64 = probs
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["probability"].as_f64().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_poirot"))
        .args(["respond", "x.xyz", "--out", "."])
        .env("POIROT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[usage]"));
}
