//! Deterministic simulator for a brick-rearranging grid automaton.
//!
//! A robot with constant memory and bounded sensing walks a finite field of
//! bricks on an infinite square grid and rearranges it, one brick at a time,
//! into a hollow rectangular fort. The crate models the grid ([`grid`]), the
//! robot and its environment ([`robot`]), the construction procedures
//! ([`procedures`]), structural verification and trace replay ([`verify`]),
//! and batch execution for benchmarks ([`batch`]).

pub mod batch;
pub mod grid;
pub mod procedures;
pub mod robot;
pub mod verify;
pub mod walk;

pub use batch::{run_batch, run_batch_auto, BatchError, BenchRow, RunSpec};
pub use grid::{CellCoord, Component, Field, GridError};
pub use procedures::{
    build_fort, BuildConfig, BuildError, BuildOutcome, CheckLevel, RunStats, RunStatus,
};
pub use robot::{ContractViolation, Env, Heading, ProcTag, TraceEvent};
pub use verify::{FortClass, FortReport};
