//! The robot and its sensed environment.
//!
//! [`Env`] owns the field plus the robot state: position, heading, and the
//! single carried brick. All interaction goes through clocked operations —
//! moving one cell, picking, and dropping each cost one clock tick, while
//! turning in place is free. Sensing is limited to the square window of
//! radius [`SENSE_RADIUS`] around the robot; the environment audits every
//! observation and rejects anything farther out.
//!
//! Each costed operation can be recorded as a [`TraceEvent`], and the
//! environment keeps per-procedure clock totals keyed by [`ProcTag`].

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{CellCoord, Field};

/// Radius of the square sensing window around the robot.
pub const SENSE_RADIUS: u64 = 8;

/// Compass heading. `North` is +y, `East` is +x.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    /// Unit step vector for this heading.
    pub fn vector(self) -> (i64, i64) {
        match self {
            Heading::North => (0, 1),
            Heading::East => (1, 0),
            Heading::South => (0, -1),
            Heading::West => (-1, 0),
        }
    }

    pub fn left(self) -> Heading {
        match self {
            Heading::North => Heading::West,
            Heading::West => Heading::South,
            Heading::South => Heading::East,
            Heading::East => Heading::North,
        }
    }

    pub fn right(self) -> Heading {
        self.left().left().left()
    }

    pub fn reverse(self) -> Heading {
        self.left().left()
    }
}

/// A direction relative to the robot's current heading.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RelDir {
    Front,
    Back,
    Left,
    Right,
}

impl RelDir {
    /// The absolute heading this relative direction denotes under `heading`.
    pub fn absolute(self, heading: Heading) -> Heading {
        match self {
            RelDir::Front => heading,
            RelDir::Back => heading.reverse(),
            RelDir::Left => heading.left(),
            RelDir::Right => heading.right(),
        }
    }
}

/// Occupancy of a sensed cell.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CellState {
    Full,
    Empty,
}

/// Procedure attribution for clock accounting and trace events.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcTag {
    Sweep,
    FindNextBrick,
    ReturnToMarker,
    ExtendFort,
    TraverseWall,
    ShiftBricks,
    TopLevel,
}

impl ProcTag {
    pub const ALL: [ProcTag; 7] = [
        ProcTag::Sweep,
        ProcTag::FindNextBrick,
        ProcTag::ReturnToMarker,
        ProcTag::ExtendFort,
        ProcTag::TraverseWall,
        ProcTag::ShiftBricks,
        ProcTag::TopLevel,
    ];
}

/// One observable robot action.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Move,
    TurnLeft,
    TurnRight,
    Pick,
    Drop,
}

/// One entry of a run trace.
///
/// `position` is the robot's cell after a move or turn, and the *target*
/// cell for picks and drops (which may be any cell within distance one of
/// the robot). `clock` repeats the current clock for turns, which are free.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct TraceEvent {
    pub clock: u64,
    pub action: Action,
    pub position: CellCoord,
    pub heading: Heading,
    pub carrying: bool,
    pub procedure: ProcTag,
}

/// Kinds of robot contract breaches.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ViolationKind {
    PickEmpty,
    PickWhileCarrying,
    DropFull,
    DropWhileLight,
    SenseOutOfRange,
    Structure,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ViolationKind::PickEmpty => "pick from empty cell",
            ViolationKind::PickWhileCarrying => "pick while already carrying",
            ViolationKind::DropFull => "drop onto full cell",
            ViolationKind::DropWhileLight => "drop while carrying nothing",
            ViolationKind::SenseOutOfRange => "observation beyond sensing radius",
            ViolationKind::Structure => "structural invariant breach",
        };
        f.write_str(name)
    }
}

/// A robot contract breach, fatal to the run that raised it.
#[derive(Clone, PartialEq, Eq, Debug, Error)]
#[error("contract violation at clock {clock}, robot at {position}: {kind} ({detail})")]
pub struct ContractViolation {
    pub kind: ViolationKind,
    pub clock: u64,
    pub position: CellCoord,
    pub detail: String,
}

/// A rendered snapshot of the world for ASCII animation.
#[derive(Clone, Debug)]
pub struct Frame {
    pub clock: u64,
    pub text: String,
}

/// The robot's world: field, robot state, clocks, and recorders.
#[derive(Clone, Debug)]
pub struct Env {
    field: Field,
    position: CellCoord,
    heading: Heading,
    carrying: bool,
    clock: u64,
    initial_bricks: usize,
    tag: ProcTag,
    tag_clocks: BTreeMap<ProcTag, u64>,
    max_sense: u64,
    trace: Option<Vec<TraceEvent>>,
    frame_every: Option<u64>,
    frames: Vec<Frame>,
    /// Letter overlays (e.g. marker and fort origin) drawn into frames.
    annotations: BTreeMap<char, CellCoord>,
    /// Bounding box of every cell that has ever been full plus robot visits,
    /// so frames share a stable canvas.
    touched: (i64, i64, i64, i64),
}

impl Env {
    /// Creates an environment with the robot stationed at `start`, facing
    /// north, carrying nothing.
    pub fn new(field: Field, start: CellCoord) -> Self {
        Env::with_state(field, start, Heading::North, false)
    }

    /// Creates an environment with explicit robot state.
    pub fn with_state(field: Field, position: CellCoord, heading: Heading, carrying: bool) -> Self {
        let initial_bricks = field.len() + usize::from(carrying);
        let touched = field
            .bounds()
            .map(|(ax, ay, bx, by)| {
                (
                    ax.min(position.x),
                    ay.min(position.y),
                    bx.max(position.x),
                    by.max(position.y),
                )
            })
            .unwrap_or((position.x, position.y, position.x, position.y));
        let tag_clocks = ProcTag::ALL.iter().map(|&t| (t, 0)).collect();
        Env {
            field,
            position,
            heading,
            carrying,
            clock: 0,
            initial_bricks,
            tag: ProcTag::TopLevel,
            tag_clocks,
            max_sense: 0,
            trace: None,
            frame_every: None,
            frames: Vec::new(),
            annotations: BTreeMap::new(),
            touched,
        }
    }

    /// Enables trace recording.
    pub fn record_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    /// Records an ASCII frame every `n` clock ticks (and at tick zero).
    pub fn record_frames(&mut self, n: u64) {
        self.frame_every = Some(n.max(1));
        self.capture_frame();
    }

    pub fn position(&self) -> CellCoord {
        self.position
    }

    pub fn heading(&self) -> Heading {
        self.heading
    }

    pub fn carrying(&self) -> bool {
        self.carrying
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn max_sense_distance(&self) -> u64 {
        self.max_sense
    }

    pub fn tag_clocks(&self) -> &BTreeMap<ProcTag, u64> {
        &self.tag_clocks
    }

    pub fn trace(&self) -> Option<&[TraceEvent]> {
        self.trace.as_deref()
    }

    pub fn take_trace(&mut self) -> Option<Vec<TraceEvent>> {
        self.trace.take()
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn take_frames(&mut self) -> Vec<Frame> {
        std::mem::take(&mut self.frames)
    }

    /// Sets the procedure charged for subsequent clock ticks.
    pub fn set_tag(&mut self, tag: ProcTag) {
        self.tag = tag;
    }

    pub fn tag(&self) -> ProcTag {
        self.tag
    }

    /// Places or moves a letter overlay for frame rendering; `None` clears it.
    pub fn annotate(&mut self, letter: char, cell: Option<CellCoord>) {
        match cell {
            Some(c) => {
                self.annotations.insert(letter, c);
            }
            None => {
                self.annotations.remove(&letter);
            }
        }
    }

    /// Observes the cell at offset `(dx, dy)` from the robot. Observations
    /// beyond the sensing radius breach the robot contract.
    pub fn observe(&mut self, dx: i64, dy: i64) -> Result<CellState, ContractViolation> {
        let dist = dx.unsigned_abs() + dy.unsigned_abs();
        if dist > SENSE_RADIUS {
            return Err(self.violation(
                ViolationKind::SenseOutOfRange,
                format!("offset ({dx}, {dy}) has distance {dist}"),
            ));
        }
        self.max_sense = self.max_sense.max(dist);
        let cell = self.position.offset(dx, dy);
        Ok(if self.field.contains(cell) {
            CellState::Full
        } else {
            CellState::Empty
        })
    }

    /// Observes the neighbour cell in the given relative direction.
    pub fn observe_rel(&mut self, rel: RelDir) -> Result<CellState, ContractViolation> {
        let (dx, dy) = rel.absolute(self.heading).vector();
        self.observe(dx, dy)
    }

    /// Reports all full cells in the sensing window as offsets from the
    /// robot, in canonical scan order (top row first, west to east).
    pub fn window_full_offsets(&mut self) -> Vec<(i64, i64)> {
        let r = SENSE_RADIUS as i64;
        let mut full = Vec::new();
        for dy in (-r..=r).rev() {
            for dx in -r..=r {
                if dx.abs() + dy.abs() > r {
                    continue;
                }
                if self.field.contains(self.position.offset(dx, dy)) {
                    full.push((dx, dy));
                }
            }
        }
        self.max_sense = self.max_sense.max(SENSE_RADIUS);
        full
    }

    /// Steps one cell forward. Costs one clock tick.
    pub fn step_forward(&mut self) {
        let (dx, dy) = self.heading.vector();
        self.position = self.position.offset(dx, dy);
        self.costed_event(Action::Move, self.position);
    }

    /// Steps one cell backward without turning. Costs one clock tick.
    pub fn step_back(&mut self) {
        let (dx, dy) = self.heading.reverse().vector();
        self.position = self.position.offset(dx, dy);
        self.costed_event(Action::Move, self.position);
    }

    /// Turns ninety degrees left. Free.
    pub fn turn_left(&mut self) {
        self.heading = self.heading.left();
        self.free_event(Action::TurnLeft);
    }

    /// Turns ninety degrees right. Free.
    pub fn turn_right(&mut self) {
        self.heading = self.heading.right();
        self.free_event(Action::TurnRight);
    }

    /// Turns (by the cheapest sequence) until facing `target`.
    pub fn face(&mut self, target: Heading) {
        if self.heading == target {
            return;
        }
        if self.heading.left() == target {
            self.turn_left();
        } else if self.heading.right() == target {
            self.turn_right();
        } else {
            self.turn_left();
            self.turn_left();
        }
    }

    /// Walks to `target` by facing and stepping, covering the y offset first
    /// and then the x offset. The robot moves freely across full cells.
    pub fn walk_to(&mut self, target: CellCoord) {
        if target.y != self.position.y {
            let dir = if target.y > self.position.y {
                Heading::North
            } else {
                Heading::South
            };
            self.face(dir);
            while self.position.y != target.y {
                self.step_forward();
            }
        }
        if target.x != self.position.x {
            let dir = if target.x > self.position.x {
                Heading::East
            } else {
                Heading::West
            };
            self.face(dir);
            while self.position.x != target.x {
                self.step_forward();
            }
        }
    }

    /// Picks the brick under the robot. Costs one clock tick.
    pub fn pick_here(&mut self) -> Result<(), ContractViolation> {
        self.pick_cell(self.position)
    }

    /// Picks the brick in the adjacent cell in the given relative direction.
    pub fn pick_at(&mut self, rel: RelDir) -> Result<(), ContractViolation> {
        let (dx, dy) = rel.absolute(self.heading).vector();
        self.pick_cell(self.position.offset(dx, dy))
    }

    /// Drops the carried brick onto the robot's own cell.
    pub fn drop_here(&mut self) -> Result<(), ContractViolation> {
        self.drop_cell(self.position)
    }

    /// Drops the carried brick into the adjacent cell in the given relative
    /// direction.
    pub fn drop_at(&mut self, rel: RelDir) -> Result<(), ContractViolation> {
        let (dx, dy) = rel.absolute(self.heading).vector();
        self.drop_cell(self.position.offset(dx, dy))
    }

    fn pick_cell(&mut self, cell: CellCoord) -> Result<(), ContractViolation> {
        if self.carrying {
            return Err(self.violation(
                ViolationKind::PickWhileCarrying,
                format!("attempted pick at {cell}"),
            ));
        }
        if !self.field.remove(cell) {
            return Err(self.violation(ViolationKind::PickEmpty, format!("cell {cell} is empty")));
        }
        self.carrying = true;
        self.costed_event(Action::Pick, cell);
        Ok(())
    }

    fn drop_cell(&mut self, cell: CellCoord) -> Result<(), ContractViolation> {
        if !self.carrying {
            return Err(self.violation(
                ViolationKind::DropWhileLight,
                format!("attempted drop at {cell}"),
            ));
        }
        if !self.field.insert(cell) {
            return Err(self.violation(ViolationKind::DropFull, format!("cell {cell} is full")));
        }
        self.carrying = false;
        self.costed_event(Action::Drop, cell);
        Ok(())
    }

    fn violation(&self, kind: ViolationKind, detail: String) -> ContractViolation {
        ContractViolation {
            kind,
            clock: self.clock,
            position: self.position,
            detail,
        }
    }

    fn costed_event(&mut self, action: Action, position: CellCoord) {
        self.clock += 1;
        *self.tag_clocks.entry(self.tag).or_insert(0) += 1;
        self.touch(position);
        self.touch(self.position);
        debug_assert_eq!(
            self.field.len() + usize::from(self.carrying),
            self.initial_bricks,
            "brick conservation broken at clock {}",
            self.clock
        );
        self.push_event(action, position);
        if let Some(every) = self.frame_every {
            if self.clock % every == 0 {
                self.capture_frame();
            }
        }
    }

    fn free_event(&mut self, action: Action) {
        self.push_event(action, self.position);
    }

    fn push_event(&mut self, action: Action, position: CellCoord) {
        if let Some(trace) = &mut self.trace {
            trace.push(TraceEvent {
                clock: self.clock,
                action,
                position,
                heading: self.heading,
                carrying: self.carrying,
                procedure: self.tag,
            });
        }
    }

    /// Verifies brick conservation: field plus hand equals the initial count.
    pub fn conservation_holds(&self) -> bool {
        self.field.len() + usize::from(self.carrying) == self.initial_bricks
    }

    fn touch(&mut self, cell: CellCoord) {
        self.touched.0 = self.touched.0.min(cell.x);
        self.touched.1 = self.touched.1.min(cell.y);
        self.touched.2 = self.touched.2.max(cell.x);
        self.touched.3 = self.touched.3.max(cell.y);
    }

    fn capture_frame(&mut self) {
        let (min_x, min_y, max_x, max_y) = self.touched;
        let (min_x, min_y, max_x, max_y) = (min_x - 2, min_y - 2, max_x + 2, max_y + 2);
        let mut text = format!("clock {}\n", self.clock);
        for y in (min_y..=max_y).rev() {
            for x in min_x..=max_x {
                let cell = CellCoord::new(x, y);
                let ch = if cell == self.position {
                    'R'
                } else if let Some((&letter, _)) =
                    self.annotations.iter().find(|&(_, &c)| c == cell)
                {
                    letter
                } else if self.field.contains(cell) {
                    '#'
                } else {
                    '.'
                };
                text.push(ch);
            }
            text.push('\n');
        }
        self.frames.push(Frame {
            clock: self.clock,
            text,
        });
    }
}
