use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn emr4d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emr4d"))
        .args(args)
        .env_remove("EMR4D_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = emr4d(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, name: &str, rows: usize, cols: usize) -> PathBuf {
    let out = dir.join(name);
    ok(&["synth", "--output", s(&out), "--rows", &rows.to_string(), "--cols", &cols.to_string(), "--seed", "7"]);
    out
}

fn encoded(dir: &Path) -> (PathBuf, PathBuf) {
    let scene = synth(dir, "scene", 4, 4);
    let eia = scene.join("eia.png");
    let bits = dir.join("a.emr4d");
    ok(&["encode", "--input", s(&eia), "--output", s(&bits), "--stats", s(&dir.join("stats.json"))]);
    (eia, bits)
}

#[test]
fn synth_is_seeded() {
    let dir = TempDir::new().unwrap();
    let a = synth(dir.path(), "a", 3, 3);
    let b = synth(dir.path(), "b", 3, 3);
    assert_eq!(fs::read(a.join("eia.png")).unwrap(), fs::read(b.join("eia.png")).unwrap());
    let truth: Value = serde_json::from_slice(&fs::read(a.join("truth.json")).unwrap()).unwrap();
    assert!(truth.get("parallax").is_some() && truth.get("shadow").is_some());
}

#[test]
fn encode_is_thread_independent_and_decode_matches_encoder_keys() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let eia = synth(d, "scene", 4, 4).join("eia.png");
    let mut streams = Vec::new();
    for threads in ["1", "4"] {
        let bits = d.join(format!("t{threads}.emr4d"));
        let key = d.join(format!("k{threads}.png"));
        let stats = ok(&["--threads", threads, "encode", "--input", s(&eia), "--output", s(&bits), "--dump-key-eia", s(&key)]);
        let stats: Value = serde_json::from_str(&stats).unwrap();
        assert_eq!(stats["total_bytes"].as_u64().unwrap(), fs::metadata(&bits).unwrap().len());
        streams.push(fs::read(&bits).unwrap());
    }
    assert_eq!(streams[0], streams[1]);

    let decoded = d.join("d.png");
    let key = d.join("kd.png");
    ok(&["decode", "--input", s(&d.join("t1.emr4d")), "--output", s(&decoded), "--dump-key-eia", s(&key)]);
    assert_eq!(fs::read(&key).unwrap(), fs::read(d.join("k1.png")).unwrap());
    let again = d.join("d2.png");
    ok(&["decode", "--input", s(&d.join("t4.emr4d")), "--output", s(&again)]);
    assert_eq!(fs::read(&decoded).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn metrics_report_identity_and_bpp() {
    let dir = TempDir::new().unwrap();
    let (eia, bits) = encoded(dir.path());
    let same: Value = serde_json::from_str(&ok(&["metrics", "--reference", s(&eia), "--decoded", s(&eia)])).unwrap();
    assert_eq!(same["psnr_db"], "inf");
    assert_eq!(same["ssim"].as_f64(), Some(1.0));

    let decoded = dir.path().join("d.png");
    ok(&["decode", "--input", s(&bits), "--output", s(&decoded)]);
    let line = ok(&["metrics", "--reference", s(&eia), "--decoded", s(&decoded), "--bitstream", s(&bits)]);
    let r: Value = serde_json::from_str(&line).unwrap();
    let bpp = fs::metadata(&bits).unwrap().len() as f64 * 8.0 / (300.0 * 300.0);
    assert!((r["bpp"].as_f64().unwrap() - bpp).abs() < 1e-12);
    let psnr = r["psnr_db"].as_f64().unwrap();
    assert!(psnr > 10.0 && psnr.is_finite());
}

#[test]
fn render_gives_one_patch_per_ei() {
    let dir = TempDir::new().unwrap();
    let eia = synth(dir.path(), "scene", 16, 20).join("eia.png");
    let view = dir.path().join("view.png");
    ok(&["render", "--input", s(&eia), "--output", s(&view)]);
    let png = fs::read(&view).unwrap();
    let w = u32::from_be_bytes(png[16..20].try_into().unwrap());
    let h = u32::from_be_bytes(png[20..24].try_into().unwrap());
    assert_eq!((w, h), (160, 128));
}

#[test]
fn inspect_summarizes_sections() {
    let dir = TempDir::new().unwrap();
    let (_, bits) = encoded(dir.path());
    let v: Value = serde_json::from_str(&ok(&["inspect", "--input", s(&bits)])).unwrap();
    let tags: Vec<_> = v["sections"].as_array().unwrap().iter().map(|t| t["tag"].as_str().unwrap().to_owned()).collect();
    assert_eq!(tags, ["GEOM", "SHAD", "OFFS", "CHNY", "CHNU", "CHNV"]);
    assert_eq!(v["channels"][0]["blocks"].as_u64(), Some(16));
}

#[test]
fn damaged_streams_map_to_exit_codes() {
    let dir = TempDir::new().unwrap();
    let (_, bits) = encoded(dir.path());
    let good = fs::read(&bits).unwrap();
    let out = dir.path().join("x.png");
    let run = |bytes: &[u8]| {
        let p = dir.path().join("bad.emr4d");
        fs::write(&p, bytes).unwrap();
        emr4d(&["decode", "--input", s(&p), "--output", s(&out)]).status.code()
    };

    let mut magic = good.clone();
    magic[0] ^= 0xff;
    assert_eq!(run(&magic), Some(3));
    assert_eq!(run(&good[..40]), Some(3));

    let mut payload = good.clone();
    let at = good.windows(4).position(|w| w == b"CHNY").unwrap() + 20;
    payload[at] ^= 0x55;
    assert_eq!(run(&payload), Some(4));

    assert_eq!(emr4d(&["decode", "--input", s(&dir.path().join("missing")), "--output", s(&out)]).status.code(), Some(1));
}

#[test]
fn profile_and_lambda_conflict() {
    let out = emr4d(&["encode", "--input", "a.png", "--output", "b", "--profile", "p75", "--lambda", "3"]);
    assert_eq!(out.status.code(), Some(2));
}
