use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use spectral_gng::image::RgbImage;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spectral-gng"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn ok(cmd: &mut Command) -> Output {
    let out = run(cmd);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_is_deterministic_and_shaped() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    ok(bin().args(["gen", "rings", "--seed", "7", "-o"]).arg(&a));
    ok(bin().args(["gen", "rings", "--seed", "7", "-o"]).arg(&b));
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert_eq!(text.lines().next(), Some("x,y,label"));
    assert_eq!(text.lines().count(), 901);

    let stdout = ok(bin().args(["gen", "blobs", "--counts", "5", "--seed", "1"])).stdout;
    assert_eq!(String::from_utf8(stdout).unwrap().lines().count(), 16);
    let bad = run(bin().args(["gen", "rings", "--counts", "0"]));
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn cluster_writes_outputs_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("rings.csv");
    ok(bin()
        .args(["gen", "rings", "--radii", "1,6,11", "--counts", "120,300,480", "--width", "0.1", "--seed", "4", "-o"])
        .arg(&input));
    for out in ["o1", "o2"] {
        ok(bin().arg("cluster").arg(&input).args(["--seed", "4", "-o"]).arg(dir.path().join(out)));
    }
    let o1 = dir.path().join("o1");
    for f in ["neuron_labels.csv", "point_labels.csv", "report.json", "scores.csv", "k_curve.csv"] {
        assert!(o1.join(f).exists(), "{f} missing");
    }
    let report = std::fs::read(o1.join("report.json")).unwrap();
    assert_eq!(report, std::fs::read(dir.path().join("o2/report.json")).unwrap());
    let r = json(&o1.join("report.json"));
    assert_eq!(r["chosen_k"], 3);
    assert_eq!(r["n"], 900);
    assert!(r.get("timings").is_none());

    let eval = ok(bin()
        .arg("eval")
        .arg("--pred")
        .arg(o1.join("point_labels.csv"))
        .arg("--gt")
        .arg(&input)
        .args(["--metrics", "accuracy,covering"]));
    let e: Value = serde_json::from_slice(&eval.stdout).unwrap();
    assert_eq!(e["metrics"]["accuracy"], 1.0);
    assert_eq!(e["metrics"].as_object().unwrap().len(), 2);
}

#[test]
fn single_blob_completes_with_small_k() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("blob.csv");
    ok(bin().args(["gen", "blobs", "--centers", "0:0", "--counts", "300", "--seed", "2", "-o"]).arg(&input));
    ok(bin().arg("cluster").arg(&input).args(["--seed", "0", "-o"]).arg(dir.path().join("out")));
    let r = json(&dir.path().join("out/report.json"));
    let k = r["chosen_k"].as_u64().unwrap();
    assert!((2..=4).contains(&k), "k = {k}");
}

#[test]
fn batch_cluster_uses_subdirectories() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    ok(bin().args(["gen", "blobs", "--counts", "40", "--sigma", "0.2", "--seed", "1", "-o"]).arg(&a));
    ok(bin().args(["gen", "blobs", "--counts", "40", "--sigma", "0.2", "--seed", "2", "-o"]).arg(&b));
    let out = dir.path().join("batch");
    ok(bin().arg("cluster").arg(&a).arg(&b).args(["--jobs", "2", "--m", "12", "-o"]).arg(&out));
    assert!(out.join("a/report.json").exists() && out.join("b/report.json").exists());
}

#[test]
fn malformed_csv_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    std::fs::write(&input, "x,y\n1,2\n3,4\n5,oops\n").unwrap();
    let out = run(bin().arg("cluster").arg(&input).arg("-o").arg(dir.path()));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
    let missing = run(bin().arg("cluster").arg(dir.path().join("nope.csv")));
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn segment_three_colors() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("img.ppm");
    let colors = [[230, 20, 20], [20, 210, 30], [25, 35, 220]];
    RgbImage::from_fn(40, 30, |x, y| colors[if y < 10 { 0 } else if x < 20 { 1 } else { 2 }])
        .unwrap()
        .write_ppm(&img)
        .unwrap();
    let out = dir.path().join("seg");
    ok(bin().arg("segment").arg(&img).args(["--seed", "1", "-o"]).arg(&out));
    assert_eq!(json(&out.join("report.json"))["chosen_k"], 3);
    assert!(out.join("labels.png").exists());
    let labels = std::fs::read_to_string(out.join("labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 30);

    // PNG and CSV label files describe the same segmentation.
    let e = ok(bin().arg("eval").arg("--pred").arg(out.join("labels.png")).arg("--gt").arg(out.join("labels.csv")));
    let e: Value = serde_json::from_slice(&e.stdout).unwrap();
    assert_eq!(e["metrics"]["covering"], 1.0);
    assert_eq!(e["metrics"]["vi"], 0.0);

    assert_eq!(run(bin().arg("segment").arg(dir.path().join("none.png"))).status.code(), Some(2));
}

#[test]
fn eval_contract() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("p.csv");
    let g = dir.path().join("g.csv");
    // 2x2 grid: ground truth left | right, prediction one segment.
    std::fs::write(&p, "0,0\n0,0\n").unwrap();
    std::fs::write(&g, "0,1\n0,1\n").unwrap();
    let out_json = dir.path().join("eval.json");
    let e = ok(bin().arg("eval").arg("--pred").arg(&p).arg("--gt").arg(&g).arg("-o").arg(&out_json));
    let v: Value = serde_json::from_slice(&e.stdout).unwrap();
    assert_eq!(v["metrics"]["covering"], 0.5);
    assert_eq!(json(&out_json), v);

    let same = ok(bin().arg("eval").arg("--pred").arg(&g).arg("--gt").arg(&g));
    let v: Value = serde_json::from_slice(&same.stdout).unwrap();
    for (m, want) in [("f_measure", 1.0), ("covering", 1.0), ("pri", 1.0), ("vi", 0.0)] {
        assert_eq!(v["metrics"][m], want, "{m}");
    }

    let short = dir.path().join("s.csv");
    std::fs::write(&short, "0,1,1\n").unwrap();
    assert_eq!(run(bin().arg("eval").arg("--pred").arg(&short).arg("--gt").arg(&g)).status.code(), Some(3));
    assert_eq!(
        run(bin().arg("eval").arg("--pred").arg(&p).arg("--gt").arg(dir.path().join("missing.csv"))).status.code(),
        Some(2)
    );
}

#[test]
fn sweep_requires_seed_and_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("blobs.csv");
    ok(bin().args(["gen", "blobs", "--counts", "50", "--sigma", "0.3", "--seed", "3", "-o"]).arg(&input));
    assert_ne!(run(bin().arg("sweep").arg(&input)).status.code(), Some(0));
    let out = dir.path().join("sweep.json");
    ok(bin().arg("sweep").arg(&input).args(["--seed", "10", "--runs", "3", "--jobs", "2", "-o"]).arg(&out));
    let s = json(&out);
    assert_eq!(s["runs"].as_array().unwrap().len(), 3);
    assert_eq!(s["runs"][0]["seed"], 10);
    assert_eq!(s["summary"]["runs"], 3);
    assert!(s["summary"]["mean_accuracy"].as_f64().unwrap() > 0.9);
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("blobs.csv");
    ok(bin().args(["gen", "blobs", "--counts", "30", "--seed", "3", "-o"]).arg(&input));
    let saved = dir.path().join("cfg.json");
    ok(bin()
        .arg("cluster")
        .arg(&input)
        .args(["--seed", "9", "--m", "16", "-K", "2", "--k-max", "8", "--save-config"])
        .arg(&saved)
        .arg("-o")
        .arg(dir.path().join("a")));
    ok(bin().arg("cluster").arg(&input).arg("--config").arg(&saved).arg("-o").arg(dir.path().join("b")));
    let (a, b) = (json(&dir.path().join("a/report.json")), json(&dir.path().join("b/report.json")));
    assert_eq!(a, b);
    assert_eq!(a["config"]["local_scale_k"], 2);
    assert_eq!(a["gng"]["m_requested"], 16);

    std::fs::write(&saved, "{\"seed\": 1, \"unknown\": true}").unwrap();
    let bad = run(bin().arg("cluster").arg(&input).arg("--config").arg(&saved));
    assert_eq!(bad.status.code(), Some(2));
}
