use std::path::Path;
use std::process::{Command, Output};

use idmr_core::raster::Raster;
use idmr_core::synth::scorer::class_color;

fn idmr(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idmr"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn ok(o: Output) -> Output {
    assert_eq!(code(&o), 0, "stderr: {}", String::from_utf8_lossy(&o.stderr));
    o
}

#[test]
fn help_exits_zero_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    ok(idmr(&["--help"], dir.path()));
    for sub in ["synth", "world", "train", "index", "search", "bench", "eval", "validate"] {
        ok(idmr(&[sub, "--help"], dir.path()));
    }
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&idmr(&["validate", "--manifest", "m", "--bogus"], dir.path())), 1);
    assert_eq!(code(&idmr(&["frobnicate"], dir.path())), 1);
    assert_eq!(code(&idmr(&["train", "--manifest", "m.jsonl"], dir.path())), 1);
    assert_eq!(code(&idmr(&["bench", "--sequences", "s", "--pool", "sampled:x", "--out", "t"], dir.path())), 1);
}

#[test]
fn io_and_format_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&idmr(&["validate", "--manifest", "missing.jsonl"], dir.path())), 2);
    std::fs::write(dir.path().join("bad.ckpt"), b"not a checkpoint").unwrap();
    std::fs::write(dir.path().join("t.jsonl"), "").unwrap();
    let o = idmr(&["eval", "--tasks", "t.jsonl", "--checkpoint", "bad.ckpt", "--report", "r.json"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn validate_reports_violations() {
    let dir = tempfile::tempdir().unwrap();
    let good = r#"{"query_image":{"image":"a.jpg","bbox":[0,0,4,4]},"query_text":"Find me an image containing the object in the given image with the following caption: The cup is in the image.","positive_image":"a.jpg","category_name":"cup","source":"coco","caption":"The cup is in the image."}"#;
    std::fs::write(dir.path().join("clean.jsonl"), format!("{good}\n{good}\n")).unwrap();
    let o = ok(idmr(&["validate", "--manifest", "clean.jsonl"], dir.path()));
    assert!(o.stdout.is_empty() && o.stderr.is_empty());

    let bad = good.replace(r#""positive_image":"a.jpg""#, r#""positive_image":"b.jpg""#);
    std::fs::write(dir.path().join("bad.jsonl"), format!("{good}\n{bad}\n")).unwrap();
    let o = idmr(&["validate", "--manifest", "bad.jsonl"], dir.path());
    assert_eq!(code(&o), 1);
    let out = String::from_utf8(o.stdout).unwrap();
    assert_eq!(out.lines().count(), 1);
    assert!(out.starts_with("line 2:"), "{out}");
}

#[test]
fn synth_is_thread_count_independent() {
    let dir = tempfile::tempdir().unwrap();
    let mut images = Vec::new();
    let mut anns = Vec::new();
    for i in 0..24u32 {
        let class = ["cup", "dog", "bus"][i as usize % 3];
        let side = 6 + 3 * i;
        let colour = if i % 4 == 0 { class_color(class) } else { [200, 10, 10] };
        Raster::from_fn(100, 100, |x, y| if x < side && y < side { colour } else { [0, 0, 0] })
            .save_png(&dir.path().join(format!("{i}.png")))
            .unwrap();
        images.push(serde_json::json!({"id": i, "file_name": format!("{i}.png"), "width": 100, "height": 100}));
        anns.push(serde_json::json!({"image_id": i, "category_id": i % 3, "bbox": [0, 0, side, side]}));
    }
    let cats: Vec<_> = ["cup", "dog", "bus"].iter().enumerate().map(|(i, c)| serde_json::json!({"id": i, "name": c})).collect();
    std::fs::write(
        dir.path().join("ann.json"),
        serde_json::json!({"images": images, "annotations": anns, "categories": cats}).to_string(),
    )
    .unwrap();

    let run = |threads: &str, out: &str| {
        ok(idmr(
            &["--threads", threads, "synth", "--annotations", "ann.json", "--cap", "5", "--seed", "3", "--out", out, "--report", &format!("{out}.report.json")],
            dir.path(),
        ));
        std::fs::read(dir.path().join(out)).unwrap()
    };
    let a = run("1", "a.jsonl");
    let b = run("4", "b.jsonl");
    assert_eq!(a, b);
    assert!(!a.is_empty());
    ok(idmr(&["validate", "--manifest", "a.jsonl"], dir.path()));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a.jsonl.report.json")).unwrap()).unwrap();
    assert_eq!(report["threshold"], 0.2);
    assert!(report["manifest"]["per_category"].as_object().unwrap().values().all(|v| v.as_u64().unwrap() <= 5));
}

#[test]
fn full_pipeline_on_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(idmr(&["world", "--out-dir", "w"], d));
    ok(idmr(&["validate", "--manifest", "w/train.jsonl"], d));
    ok(idmr(&["train", "--manifest", "w/train.jsonl", "--checkpoint", "m.ckpt", "--log", "log.jsonl"], d));
    assert_eq!(std::fs::read_to_string(d.join("log.jsonl")).unwrap().lines().count(), 200);
    ok(idmr(&["index", "--manifest", "w/train.jsonl", "--checkpoint", "m.ckpt", "--out", "store.bin"], d));
    ok(idmr(&["bench", "--sequences", "w/sequences.jsonl", "--captions", "file:w/captions.tsv", "--out", "tasks.jsonl"], d));
    ok(idmr(&["eval", "--tasks", "tasks.jsonl", "--checkpoint", "m.ckpt", "-k", "5", "--report", "r.json", "--dump-ranks", "ranks.jsonl"], d));

    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(report["subtasks"]["instance"]["n_tasks"], 320);
    assert_eq!(report["subtasks"]["location"]["n_tasks"], 320);
    assert_eq!(std::fs::read_to_string(d.join("ranks.jsonl")).unwrap().lines().count(), 640);

    // search with an inline feature reference
    let first: serde_json::Value =
        serde_json::from_str(std::fs::read_to_string(d.join("w/train.jsonl")).unwrap().lines().next().unwrap()).unwrap();
    let o = ok(idmr(
        &[
            "search", "--store", "store.bin", "--checkpoint", "m.ckpt",
            "--query-image", &first["query_image"].to_string(),
            "--query-text", first["query_text"].as_str().unwrap(),
            "-k", "3",
        ],
        d,
    ));
    let hits: Vec<serde_json::Value> =
        String::from_utf8(o.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(hits.len(), 3);
    assert_eq!(hits[0]["rank"], 1);

    // re-running a stage reproduces its output byte for byte
    ok(idmr(&["world", "--out-dir", "w2"], d));
    for f in ["train.jsonl", "sequences.jsonl", "captions.tsv", "world.json"] {
        assert_eq!(std::fs::read(d.join("w").join(f)).unwrap(), std::fs::read(d.join("w2").join(f)).unwrap(), "{f}");
    }
    ok(idmr(&["--threads", "2", "eval", "--tasks", "tasks.jsonl", "--checkpoint", "m.ckpt", "--report", "r2.json"], d));
    assert_eq!(std::fs::read(d.join("r.json")).unwrap(), std::fs::read(d.join("r2.json")).unwrap());
}

#[test]
fn curated_pairs_bench() {
    let dir = tempfile::tempdir().unwrap();
    let lines = [
        r#"{"query_image":"q1.png","query_bbox":[0,0,5,5],"positive_image":"p1.png","caption":"The mug is by the sink.","class":"mug"}"#,
        r#"{"query_image":"q2.png","positive_image":"p2.png","caption":"The pan is on the hob.","class":"pan"}"#,
    ];
    std::fs::write(dir.path().join("pairs.jsonl"), lines.join("\n")).unwrap();
    ok(idmr(&["bench", "--curated", "pairs.jsonl", "--out", "t.jsonl"], dir.path()));
    let tasks = std::fs::read_to_string(dir.path().join("t.jsonl")).unwrap();
    assert_eq!(tasks.lines().count(), 2);
}
