//! End-to-end checks of the compiled `fortress` binary.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fortress"))
        .args(args)
        .output()
        .expect("the binary should run")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
}

/// A scratch path that survives parallel test runs.
fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fortress-cli-{}", std::process::id()));
    fs::create_dir_all(&dir).expect("scratch dir");
    dir.join(name)
}

#[test]
fn gen_then_build_reports_a_perfect_fort() {
    let field = scratch("disc.field");
    let out = run(&[
        "gen",
        "rough-disc",
        "--radius",
        "3",
        "--size",
        "28",
        "--seed",
        "1",
        "--out",
        field.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let text = fs::read_to_string(&field).unwrap();
    assert!(text.starts_with("origin "), "header missing: {text}");
    assert_eq!(text.matches('#').count(), 28);

    let out = run(&[
        "build",
        "--input",
        field.to_str().unwrap(),
        "--check",
        "full",
    ]);
    assert_ok(&out);
    let stats: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stats["z"], 28);
    assert_eq!(stats["status"], "completed");
    assert_eq!(stats["fort_class"], "perfect");
    assert_eq!(stats["iterations"], 26);
}

#[test]
fn recorded_trace_replays_and_rejects_tampering() {
    let field = scratch("replay.field");
    let trace = scratch("replay.jsonl");
    let stats = scratch("replay.stats.json");
    assert_ok(&run(&[
        "gen",
        "rough-disc",
        "--radius",
        "3",
        "--seed",
        "1",
        "--out",
        field.to_str().unwrap(),
    ]));
    assert_ok(&run(&[
        "build",
        "--gen",
        "rough-disc",
        "--radius",
        "3",
        "--seed",
        "1",
        "--trace",
        trace.to_str().unwrap(),
        "--out",
        stats.to_str().unwrap(),
    ]));

    let out = run(&[
        "verify",
        "--trace",
        trace.to_str().unwrap(),
        "--input",
        field.to_str().unwrap(),
        "--start",
        "0,0",
    ]);
    assert_ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok:"));

    // Duplicating the final event breaks the clock bookkeeping.
    let text = fs::read_to_string(&trace).unwrap();
    let last = text.lines().last().unwrap().to_string();
    fs::write(&trace, format!("{text}{last}\n")).unwrap();
    let out = run(&[
        "verify",
        "--trace",
        trace.to_str().unwrap(),
        "--input",
        field.to_str().unwrap(),
        "--start",
        "0,0",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn mismatched_field_fails_verification() {
    let trace = scratch("mismatch.jsonl");
    let stats = scratch("mismatch.stats.json");
    let wrong = scratch("mismatch.field");
    assert_ok(&run(&[
        "build",
        "--gen",
        "rough-disc",
        "--radius",
        "3",
        "--seed",
        "1",
        "--trace",
        trace.to_str().unwrap(),
        "--out",
        stats.to_str().unwrap(),
    ]));
    fs::write(&wrong, "origin 0 0\n#\n").unwrap();
    let out = run(&[
        "verify",
        "--trace",
        trace.to_str().unwrap(),
        "--input",
        wrong.to_str().unwrap(),
        "--start",
        "0,0",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn degenerate_fields_come_back_untouched() {
    let field = scratch("span2.field");
    fs::write(&field, "origin 0 0\n###\n").unwrap();
    let out = run(&["build", "--input", field.to_str().unwrap()]);
    assert_ok(&out);
    let stats: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stats["status"], "degenerate");
    assert_eq!(stats["z"], 3);
    assert_eq!(stats["total_clock"], 0);
}

#[test]
fn missing_input_exits_with_code_2() {
    let out = run(&["build", "--input", "/no/such/file.field"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn random_build_writes_final_field_and_frames() {
    let final_field = scratch("random.final.field");
    let frames = scratch("random.frames.txt");
    let stats = scratch("random.stats.json");
    let out = run(&[
        "build",
        "--gen",
        "random",
        "--size",
        "40",
        "--seed",
        "7",
        "--check",
        "full",
        "--frames",
        "100",
        "--frames-out",
        frames.to_str().unwrap(),
        "--final-field",
        final_field.to_str().unwrap(),
        "--out",
        stats.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let rendered = fs::read_to_string(&final_field).unwrap();
    assert_eq!(rendered.matches('#').count(), 40);
    let frame_text = fs::read_to_string(&frames).unwrap();
    assert!(frame_text.starts_with("clock 0\n"));
    assert!(frame_text.contains("\nclock "), "expected several frames");
    let stats: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&stats).unwrap()).unwrap();
    assert_eq!(stats["fort_class"], "perfect");
}

#[test]
fn bench_emits_sorted_csv_and_a_slope() {
    let csv = scratch("bench.csv");
    let out = run(&[
        "bench",
        "--radii",
        "3..4",
        "--seed",
        "3",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_ok(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("slope "));

    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("r,z,steps,steps_per_z2"));
    let sizes: Vec<u64> = lines
        .map(|line| line.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(sizes.len(), 2);
    assert!(
        sizes.windows(2).all(|w| w[0] < w[1]),
        "z not increasing: {sizes:?}"
    );
}

#[test]
fn reruns_with_one_seed_match_byte_for_byte() {
    let mut outputs = Vec::new();
    for tag in ["a", "b"] {
        let trace = scratch(&format!("rerun-{tag}.jsonl"));
        let stats = scratch(&format!("rerun-{tag}.stats.json"));
        assert_ok(&run(&[
            "build",
            "--gen",
            "rough-disc",
            "--radius",
            "3",
            "--seed",
            "5",
            "--trace",
            trace.to_str().unwrap(),
            "--out",
            stats.to_str().unwrap(),
        ]));
        outputs.push((fs::read(&trace).unwrap(), fs::read(&stats).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
}
