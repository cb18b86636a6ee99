//! Command-line front end for the fort builder.
//!
//! Four subcommands cover the whole workflow: `gen` writes starting fields,
//! `build` runs the robot on one field and reports statistics, `bench`
//! reproduces the quadratic-scaling experiment over rough discs, and
//! `verify` replays a recorded trace against its starting field.
//!
//! Exit codes: 0 success, 1 failed verification, 2 unusable input, 3
//! contract or structural violation during a run.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use fortress_core::batch::{bench_rough_discs, loglog_slope, rough_disc_min_size};
use fortress_core::grid::{gen_random_connected, gen_rough_disc, parse_field, render_field};
use fortress_core::verify::replay_validate;
use fortress_core::{
    build_fort, BatchError, BuildConfig, BuildError, CellCoord, CheckLevel, Field, TraceEvent,
};

/// Builds hollow rectangular forts out of brick fields and inspects the
/// runs that made them.
#[derive(Debug, Parser)]
#[command(name = "fortress", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one build and write its statistics, trace, and frames.
    Build(BuildArgs),
    /// Generate a starting field and write it in the text format.
    Gen(GenArgs),
    /// Build rough discs over a radius range and fit the scaling exponent.
    Bench(BenchArgs),
    /// Replay a recorded trace against its starting field.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct BuildArgs {
    /// Field file to build from (see `gen --help` for the text format).
    #[arg(
        long,
        value_name = "PATH",
        conflicts_with = "gen",
        required_unless_present = "gen"
    )]
    input: Option<PathBuf>,
    /// Generate the starting field instead of reading one.
    #[arg(long, value_enum, value_name = "KIND")]
    gen: Option<GenKind>,
    /// Disc radius (rough-disc generator only).
    #[arg(long, value_name = "R", requires = "gen")]
    radius: Option<i64>,
    /// Brick count for generated fields; rough discs default to the exact
    /// disc.
    #[arg(long, value_name = "Z", requires = "gen")]
    size: Option<u64>,
    /// Generator seed.
    #[arg(long, value_name = "SEED", default_value_t = 0)]
    seed: u64,
    /// Starting cell, written `x,y`. Defaults to the generator centre, or to
    /// the topmost-leftmost brick of a field read from a file.
    #[arg(long, value_name = "X,Y", value_parser = parse_cell)]
    start: Option<CellCoord>,
    /// Structural checking level during the run.
    #[arg(long, value_enum, value_name = "LEVEL", default_value_t = CheckArg::Boundaries)]
    check: CheckArg,
    /// Write the action trace to this file, one JSON event per line.
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
    /// Capture an ASCII frame every N clock ticks.
    #[arg(long, value_name = "N")]
    frames: Option<u64>,
    /// Write captured frames here instead of standard output.
    #[arg(long, value_name = "PATH", requires = "frames")]
    frames_out: Option<PathBuf>,
    /// Write the terminal field here in the text format.
    #[arg(long, value_name = "PATH")]
    final_field: Option<PathBuf>,
    /// Write run statistics (JSON) here instead of standard output.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Field family to generate.
    #[arg(value_enum, value_name = "KIND")]
    kind: GenKind,
    /// Disc radius (rough-disc only).
    #[arg(long, value_name = "R")]
    radius: Option<i64>,
    /// Brick count; rough discs default to the exact disc.
    #[arg(long, value_name = "Z")]
    size: Option<u64>,
    /// Generator seed.
    #[arg(long, value_name = "SEED", default_value_t = 0)]
    seed: u64,
    /// Output path; standard output when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Inclusive radius range, written `A..B`, or a single radius.
    #[arg(long, value_name = "A..B", value_parser = parse_radii)]
    radii: RadiusRange,
    /// Seed for the above-minimum boundary placements.
    #[arg(long, value_name = "SEED", default_value_t = 0)]
    seed: u64,
    /// Build every legal size per radius instead of the exact disc only.
    #[arg(long)]
    full_sweep: bool,
    /// CSV output path; standard output when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Trace file, one JSON event per line.
    #[arg(long, value_name = "PATH")]
    trace: PathBuf,
    /// The starting field the trace was recorded against.
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Robot start cell, written `x,y`; inferred from the first event when
    /// omitted.
    #[arg(long, value_name = "X,Y", value_parser = parse_cell)]
    start: Option<CellCoord>,
}

/// Field families the generator can produce.
#[derive(Clone, Copy, Debug, ValueEnum)]
enum GenKind {
    /// A Manhattan ball plus seeded extras on its outer circle.
    RoughDisc,
    /// A seeded connected blob grown from the origin.
    Random,
}

/// Structural checking level, as exposed on the command line.
#[derive(Clone, Copy, Debug, ValueEnum)]
enum CheckArg {
    /// No checks; fastest.
    Off,
    /// Verify the strong structural invariant after every sweep.
    Boundaries,
    /// Boundary checks plus per-fetch accounting audits.
    Full,
}

impl From<CheckArg> for CheckLevel {
    fn from(arg: CheckArg) -> Self {
        match arg {
            CheckArg::Off => CheckLevel::Off,
            CheckArg::Boundaries => CheckLevel::Boundaries,
            CheckArg::Full => CheckLevel::Full,
        }
    }
}

/// An inclusive range of disc radii.
#[derive(Clone, Copy, Debug)]
struct RadiusRange {
    lo: i64,
    hi: i64,
}

/// A failure carrying the exit code the process should report.
#[derive(Debug, Error)]
enum CliError {
    /// Unreadable or ill-formed input.
    #[error("{0}")]
    Input(String),
    /// A trace that does not replay.
    #[error("{0}")]
    Verify(String),
    /// The run itself broke a contract or structural check.
    #[error("{0}")]
    Contract(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Verify(_) => 1,
            CliError::Input(_) => 2,
            CliError::Contract(_) => 3,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Build(args) => cmd_build(args),
        Command::Gen(args) => cmd_gen(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Verify(args) => cmd_verify(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

fn cmd_build(args: BuildArgs) -> Result<(), CliError> {
    let field = match (&args.input, args.gen) {
        (Some(path), None) => read_field(path)?,
        (None, Some(kind)) => make_field(kind, args.radius, args.size, args.seed)?,
        _ => unreachable!("clap enforces exactly one input source"),
    };
    let start = match args.start {
        Some(cell) => cell,
        None if args.gen.is_some() => CellCoord::new(0, 0),
        None => first_cell(&field)?,
    };
    let cfg = BuildConfig {
        check: args.check.into(),
        record_trace: args.trace.is_some(),
        frame_every: args.frames,
    };
    let outcome = build_fort(&field, start, cfg).map_err(build_error)?;

    if let Some(path) = &args.trace {
        let events = outcome.trace.as_deref().unwrap_or(&[]);
        let mut text = String::with_capacity(events.len() * 96);
        for event in events {
            let line = serde_json::to_string(event)
                .map_err(|e| CliError::Contract(format!("cannot encode trace: {e}")))?;
            text.push_str(&line);
            text.push('\n');
        }
        write_file(path, &text)?;
    }
    if let Some(path) = &args.final_field {
        write_file(path, &render_field(&outcome.final_field))?;
    }
    if args.frames.is_some() {
        // Each frame opens with its own `clock <n>` line; a blank line
        // separates consecutive frames.
        let mut text = String::new();
        for frame in &outcome.frames {
            text.push_str(&frame.text);
            if !frame.text.ends_with('\n') {
                text.push('\n');
            }
            text.push('\n');
        }
        match &args.frames_out {
            Some(path) => write_file(path, &text)?,
            None => print!("{text}"),
        }
    }

    let stats = serde_json::to_string_pretty(&outcome.stats)
        .map_err(|e| CliError::Contract(format!("cannot encode statistics: {e}")))?;
    match &args.out {
        Some(path) => {
            write_file(path, &(stats + "\n"))?;
            println!(
                "built: z={} class={:?} span={} clock={}",
                outcome.stats.z,
                outcome.stats.fort_class,
                outcome.stats.fort_span,
                outcome.stats.total_clock
            );
        }
        None => println!("{stats}"),
    }
    Ok(())
}

fn cmd_gen(args: GenArgs) -> Result<(), CliError> {
    let field = make_field(args.kind, args.radius, args.size, args.seed)?;
    let text = render_field(&field);
    match &args.out {
        Some(path) => write_file(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_bench(args: BenchArgs) -> Result<(), CliError> {
    let RadiusRange { lo, hi } = args.radii;
    if lo < 3 {
        return Err(CliError::Input(format!(
            "radius {lo} is below the benchmark minimum of 3"
        )));
    }
    let mut rows = bench_rough_discs(lo..=hi, args.full_sweep, args.seed).map_err(|e| match e {
        BatchError::Grid(grid) => CliError::Input(grid.to_string()),
        BatchError::Build(build) => CliError::Contract(build.to_string()),
    })?;
    rows.sort_by_key(|row| (row.z, row.radius));

    let mut csv = String::from("r,z,steps,steps_per_z2\n");
    for row in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{:.6}",
            row.radius, row.z, row.steps, row.steps_per_z2
        );
    }
    match &args.out {
        Some(path) => write_file(path, &csv)?,
        None => print!("{csv}"),
    }

    let sizes: BTreeSet<u64> = rows.iter().map(|row| row.z).collect();
    if sizes.len() >= 2 {
        eprintln!("slope {:.4}", loglog_slope(&rows));
    } else {
        eprintln!("slope undefined over a single size");
    }
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<(), CliError> {
    let field = read_field(&args.input)?;
    let text = fs::read_to_string(&args.trace)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", args.trace.display())))?;
    let mut events: Vec<TraceEvent> = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(line)
            .map_err(|e| CliError::Verify(format!("trace line {}: {e}", index + 1)))?;
        events.push(event);
    }
    match replay_validate(&events, &field, args.start) {
        Ok(summary) => {
            println!(
                "ok: {} events, final clock {}",
                events.len(),
                summary.total_clock
            );
            Ok(())
        }
        Err(violation) => Err(CliError::Verify(format!(
            "event {}: {}",
            violation.index, violation.detail
        ))),
    }
}

/// Builds a field from a generator spec.
fn make_field(
    kind: GenKind,
    radius: Option<i64>,
    size: Option<u64>,
    seed: u64,
) -> Result<Field, CliError> {
    match kind {
        GenKind::RoughDisc => {
            let r = radius.ok_or_else(|| CliError::Input("rough-disc needs --radius".into()))?;
            let z = size.unwrap_or_else(|| rough_disc_min_size(r));
            gen_rough_disc(r, z, seed).map_err(|e| CliError::Input(e.to_string()))
        }
        GenKind::Random => {
            if radius.is_some() {
                return Err(CliError::Input(
                    "--radius only applies to rough-disc".into(),
                ));
            }
            let z = size.ok_or_else(|| CliError::Input("random needs --size".into()))?;
            Ok(gen_random_connected(z, seed))
        }
    }
}

/// The topmost-leftmost brick, the default start for fields read from files.
fn first_cell(field: &Field) -> Result<CellCoord, CliError> {
    field
        .sorted_cells()
        .first()
        .copied()
        .ok_or_else(|| CliError::Input("the field holds no bricks".into()))
}

fn build_error(err: BuildError) -> CliError {
    match err {
        BuildError::Disconnected | BuildError::StartOffField(_) => CliError::Input(err.to_string()),
        BuildError::Contract(_) | BuildError::CheckFailed(_) => CliError::Contract(err.to_string()),
    }
}

fn read_field(path: &Path) -> Result<Field, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    parse_field(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

/// Parses a `x,y` cell argument.
fn parse_cell(text: &str) -> Result<CellCoord, String> {
    let (x, y) = text
        .split_once(',')
        .ok_or_else(|| format!("expected `x,y`, found `{text}`"))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<i64>()
            .map_err(|e| format!("bad coordinate `{}`: {e}", s.trim()))
    };
    Ok(CellCoord::new(parse(x)?, parse(y)?))
}

/// Parses an `A..B` inclusive radius range, or a single radius `A`.
fn parse_radii(text: &str) -> Result<RadiusRange, String> {
    let parse = |s: &str| {
        s.parse::<i64>()
            .map_err(|e| format!("bad radius `{s}`: {e}"))
    };
    let (lo, hi) = match text.split_once("..") {
        Some((a, b)) => (parse(a)?, parse(b)?),
        None => {
            let r = parse(text)?;
            (r, r)
        }
    };
    if lo > hi {
        return Err(format!("empty radius range {lo}..{hi}"));
    }
    Ok(RadiusRange { lo, hi })
}
