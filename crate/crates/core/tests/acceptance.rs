//! Acceptance suite: one test per advertised guarantee, each printing a
//! single PASS line with its measured numbers (run with `--nocapture` to
//! see them).
//!
//! Most criteria share one corpus — eight rough discs and fifty seeded
//! random connected fields — built once with every runtime check enabled
//! and traces recorded.

use std::sync::OnceLock;

use fortress_core::batch::{
    bench_rough_discs, loglog_slope, rough_disc_min_size, run_batch_auto, RunSpec,
};
use fortress_core::grid::{gen_random_connected, gen_rough_disc, CellCoord, Field};
use fortress_core::procedures::{build_fort, BuildConfig, BuildOutcome, CheckLevel, RunStatus};
use fortress_core::verify::{replay_validate, FortClass};

struct Run {
    label: String,
    input: Field,
    start: CellCoord,
    outcome: BuildOutcome,
}

static CORPUS: OnceLock<Vec<Run>> = OnceLock::new();

fn full_cfg() -> BuildConfig {
    BuildConfig {
        check: CheckLevel::Full,
        record_trace: true,
        frame_every: None,
    }
}

fn corpus() -> &'static [Run] {
    CORPUS.get_or_init(|| {
        let mut inputs: Vec<(String, Field)> = Vec::new();
        for r in 3..=10i64 {
            let z = rough_disc_min_size(r);
            let field = gen_rough_disc(r, z, 90 + r as u64).unwrap();
            inputs.push((format!("rough disc r={r} z={z}"), field));
        }
        for i in 0..50u64 {
            let z = 5 + i * 145 / 49;
            let mut seed = 1000 + i;
            let field = loop {
                let f = gen_random_connected(z, seed);
                if f.span().unwrap() >= 3 {
                    break f;
                }
                seed += 100;
            };
            inputs.push((format!("random z={z} seed={seed}"), field));
        }
        let start = CellCoord::new(0, 0);
        let specs: Vec<RunSpec> = inputs
            .iter()
            .map(|(_, f)| {
                assert!(f.contains(start), "generators grow from the origin");
                RunSpec {
                    field: f.clone(),
                    start,
                }
            })
            .collect();
        let results = run_batch_auto(&specs, full_cfg());
        inputs
            .into_iter()
            .zip(results)
            .map(|((label, input), result)| {
                let outcome = result.unwrap_or_else(|e| panic!("{label}: {e}"));
                Run {
                    label,
                    input,
                    start,
                    outcome,
                }
            })
            .collect()
    })
}

#[test]
fn criterion_1_termination_and_fort_class() {
    let runs = corpus();
    for run in runs {
        let z = run.input.len() as u64;
        let o = &run.outcome;
        assert_eq!(o.stats.status, RunStatus::Completed, "{}", run.label);
        assert_eq!(o.final_field.len() as u64, z, "{}", run.label);
        assert!(o.final_field.is_connected(), "{}", run.label);
        let expected = if z % 4 == 0 {
            FortClass::Perfect
        } else if z % 2 == 0 {
            FortClass::Rectangular
        } else {
            FortClass::Rough
        };
        assert_eq!(o.stats.fort_class, expected, "{}", run.label);
    }
    println!(
        "criterion 1: PASS — {} runs terminated in a single component of the expected class",
        runs.len()
    );
}

#[test]
fn criterion_2_perfect_fort_arithmetic() {
    let specs: Vec<(u64, RunSpec)> = (1..=30u64)
        .map(|m| {
            let z = 4 * m;
            let field = Field::from_cells((0..z as i64).map(|x| CellCoord::new(x, 0)));
            (
                z,
                RunSpec {
                    field,
                    start: CellCoord::new(0, 0),
                },
            )
        })
        .collect();
    let cfg = BuildConfig {
        check: CheckLevel::Boundaries,
        ..BuildConfig::default()
    };
    let run_specs: Vec<RunSpec> = specs.iter().map(|(_, s)| s.clone()).collect();
    for ((z, _), result) in specs.iter().zip(run_batch_auto(&run_specs, cfg)) {
        let o = result.unwrap_or_else(|e| panic!("z={z}: {e}"));
        assert_eq!(o.stats.fort_class, FortClass::Perfect, "z={z}");
        assert_eq!(2 * o.stats.fort_span, *z, "z={z}: z = 2·span");
        assert_eq!(o.report.width, z / 4 + 1, "z={z}: wall length");
        assert_eq!(o.report.height, z / 4 + 1, "z={z}: wall length");
    }
    println!(
        "criterion 2: PASS — {} perfect forts satisfy z = 2·span with walls of z/4 + 1 bricks",
        specs.len()
    );
}

#[test]
fn criterion_3_quadratic_scaling() {
    let rows = bench_rough_discs(4..=12, false, 3).unwrap();
    let slope = loglog_slope(&rows);
    let min = rows
        .iter()
        .map(|r| r.steps_per_z2)
        .fold(f64::INFINITY, f64::min);
    let max = rows
        .iter()
        .map(|r| r.steps_per_z2)
        .fold(f64::NEG_INFINITY, f64::max);
    let spread = max / min;
    assert!(
        (1.7..=2.3).contains(&slope),
        "log-log slope {slope:.3} outside [1.7, 2.3]"
    );
    assert!(
        spread <= 3.0,
        "steps/z² spreads by ×{spread:.2} (min {min:.2}, max {max:.2})"
    );
    println!(
        "criterion 3: PASS — slope {slope:.3} over r ∈ 4..=12, steps/z² in [{min:.2}, {max:.2}] (spread ×{spread:.2})"
    );
}

#[test]
fn criterion_4_strongly_structured_after_every_sweep() {
    let mut checks = 0u64;
    for run in corpus() {
        let sweeps: Vec<_> = run
            .outcome
            .diagnostics
            .iter()
            .filter(|d| d.check == "strongly_structured")
            .collect();
        // One sweep opens the run, one closes every extension.
        assert_eq!(
            sweeps.len() as u64,
            run.outcome.stats.iterations + 2,
            "{}",
            run.label
        );
        for d in &sweeps {
            assert!(d.ok, "{} at clock {}: {}", run.label, d.clock, d.detail);
        }
        checks += sweeps.len() as u64;
    }
    println!("criterion 4: PASS — {checks} post-sweep checks, zero violations");
}

#[test]
fn criterion_5_extraction_soundness() {
    let mut fetches = 0u64;
    for run in corpus() {
        let extractions: Vec<_> = run
            .outcome
            .diagnostics
            .iter()
            .filter(|d| d.check == "extraction")
            .collect();
        assert_eq!(
            extractions.len() as u64,
            run.outcome.stats.iterations,
            "{}",
            run.label
        );
        for d in &extractions {
            assert!(d.ok, "{} at clock {}: {}", run.label, d.clock, d.detail);
        }
        fetches += extractions.len() as u64;
    }
    println!(
        "criterion 5: PASS — {fetches} fetches each changed one component by one flood-checked brick"
    );
}

#[test]
fn criterion_6_conservation_audits_and_replay() {
    let mut events = 0u64;
    for run in corpus() {
        assert!(
            run.outcome.stats.max_sense_distance <= 8,
            "{}: sensed {}",
            run.label,
            run.outcome.stats.max_sense_distance
        );
        let trace = run.outcome.trace.as_ref().expect("corpus records traces");
        let summary = replay_validate(trace, &run.input, Some(run.start))
            .unwrap_or_else(|v| panic!("{}: event {}: {}", run.label, v.index, v.detail));
        assert_eq!(
            summary.final_field, run.outcome.final_field,
            "{}",
            run.label
        );
        assert_eq!(
            summary.total_clock, run.outcome.stats.total_clock,
            "{}",
            run.label
        );
        events += trace.len() as u64;
    }
    println!(
        "criterion 6: PASS — {events} trace events replayed with conservation intact and sensing ≤ 8"
    );
}

#[test]
fn criterion_7_degenerate_gate() {
    let shapes: Vec<(&str, Vec<(i64, i64)>)> = vec![
        ("singleton", vec![(0, 0)]),
        ("domino", vec![(0, 0), (1, 0)]),
        ("vertical domino", vec![(0, 0), (0, 1)]),
        ("tromino corner", vec![(0, 0), (1, 0), (0, 1)]),
        ("square block", vec![(0, 0), (1, 0), (0, -1), (1, -1)]),
    ];
    for (name, cells) in &shapes {
        let field = Field::from_cells(cells.iter().map(|&(x, y)| CellCoord::new(x, y)));
        assert!(field.span().unwrap() <= 2, "{name}");
        let o = build_fort(&field, CellCoord::new(0, 0), full_cfg()).unwrap();
        assert_eq!(o.stats.status, RunStatus::Degenerate, "{name}");
        assert_eq!(o.stats.total_clock, 0, "{name}");
        assert_eq!(o.final_field, field, "{name}");
    }
    println!(
        "criterion 7: PASS — {} fields of span ≤ 2 returned untouched at clock 0",
        shapes.len()
    );
}

#[test]
fn criterion_8_iteration_count() {
    for run in corpus() {
        let z = run.input.len() as u64;
        assert_eq!(run.outcome.stats.iterations, z - 2, "{}", run.label);
    }
    println!(
        "criterion 8: PASS — all {} non-degenerate runs looped exactly z − 2 times",
        corpus().len()
    );
}

#[test]
fn criterion_9_determinism() {
    // Re-run a slice of the corpus on this thread (the corpus itself may
    // have been built by the parallel path) and demand byte-identical
    // serialized stats and traces.
    let sample: Vec<&Run> = corpus().iter().step_by(7).collect();
    for run in &sample {
        let again = build_fort(&run.input, run.start, full_cfg())
            .unwrap_or_else(|e| panic!("{}: {e}", run.label));
        let stats_a = serde_json::to_string(&run.outcome.stats).unwrap();
        let stats_b = serde_json::to_string(&again.stats).unwrap();
        assert_eq!(stats_a, stats_b, "{}", run.label);
        let trace_a = serde_json::to_string(run.outcome.trace.as_ref().unwrap()).unwrap();
        let trace_b = serde_json::to_string(again.trace.as_ref().unwrap()).unwrap();
        assert_eq!(trace_a, trace_b, "{}", run.label);
    }
    println!(
        "criterion 9: PASS — {} reruns produced byte-identical stats and traces",
        sample.len()
    );
}
