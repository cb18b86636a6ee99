//! The construction procedures: wall traversal, brick shifting, fort
//! extension, sweeping, brick fetching, and the top-level build loop.
//!
//! A build run keeps two pieces of off-board bookkeeping besides the robot
//! itself: the *anchors* (the first cell `F`, fixed for the whole run, and
//! the current marker cell `M`) and the current [`FortShape`] — a hollow
//! rectangle with an optional corner appendage, growing east and south from
//! `F`. One loop iteration fetches a single brick from a free component
//! (search walk), returns it to the marker, and extends the fort by one
//! cell; every extension ends with a sweep that re-establishes the gap
//! between the fort and the remaining components and repositions the marker.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{manhattan, scan_cmp, CellCoord, Component, Field};
use crate::robot::{
    CellState, ContractViolation, Env, Frame, Heading, ProcTag, RelDir, TraceEvent, ViolationKind,
};
use crate::verify::{
    check_strongly_structured, classify_fort, removable_cells, Diagnostic, FortClass, FortReport,
};
use crate::walk::{retrace_walk, run_search_walk, Extraction, WalkOutcome};

/// The hollow rectangle under construction: its north-west corner pinned at
/// the first cell, plus at most one appendage brick outside the rectangle.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct FortShape {
    origin: CellCoord,
    width: u64,
    height: u64,
    appendage: Option<CellCoord>,
}

impl FortShape {
    /// A single-cell fort at the first cell.
    pub fn new(first_cell: CellCoord) -> Self {
        FortShape {
            origin: first_cell,
            width: 1,
            height: 1,
            appendage: None,
        }
    }

    pub fn with_dims(
        origin: CellCoord,
        width: u64,
        height: u64,
        appendage: Option<CellCoord>,
    ) -> Self {
        FortShape {
            origin,
            width,
            height,
            appendage,
        }
    }

    pub fn origin(&self) -> CellCoord {
        self.origin
    }

    pub fn width(&self) -> u64 {
        self.width
    }

    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn appendage(&self) -> Option<CellCoord> {
        self.appendage
    }

    fn x_range(&self) -> (i64, i64) {
        (self.origin.x, self.origin.x + self.width as i64 - 1)
    }

    fn y_range(&self) -> (i64, i64) {
        (self.origin.y - self.height as i64 + 1, self.origin.y)
    }

    /// Number of bricks in the fort.
    pub fn brick_count(&self) -> u64 {
        let boundary = if self.width.min(self.height) <= 2 {
            self.width * self.height
        } else {
            2 * (self.width + self.height) - 4
        };
        boundary + u64::from(self.appendage.is_some())
    }

    /// True when `cell` is part of the fort (wall or appendage).
    pub fn contains(&self, cell: CellCoord) -> bool {
        if self.appendage == Some(cell) {
            return true;
        }
        let (x0, x1) = self.x_range();
        let (y0, y1) = self.y_range();
        if cell.x < x0 || cell.x > x1 || cell.y < y0 || cell.y > y1 {
            return false;
        }
        cell.x == x0 || cell.x == x1 || cell.y == y0 || cell.y == y1
    }

    /// Manhattan distance from `cell` to the nearest fort brick, in O(1).
    pub fn distance(&self, cell: CellCoord) -> u64 {
        let (x0, x1) = self.x_range();
        let (y0, y1) = self.y_range();
        let dx = (x0 - cell.x).max(cell.x - x1).max(0) as u64;
        let dy = (y0 - cell.y).max(cell.y - y1).max(0) as u64;
        let rect = if dx == 0 && dy == 0 {
            // Inside the box: distance to the nearest of the four walls.
            let to_wall = (cell.x - x0)
                .min(x1 - cell.x)
                .min(cell.y - y0)
                .min(y1 - cell.y);
            to_wall as u64
        } else {
            dx + dy
        };
        match self.appendage {
            Some(a) => rect.min(manhattan(cell, a)),
            None => rect,
        }
    }

    /// All fort cells, in scan order.
    pub fn cells(&self) -> Vec<CellCoord> {
        let (x0, x1) = self.x_range();
        let (y0, y1) = self.y_range();
        let mut cells = Vec::new();
        for y in y0..=y1 {
            for x in x0..=x1 {
                let c = CellCoord::new(x, y);
                if self.contains(c) {
                    cells.push(c);
                }
            }
        }
        if let Some(a) = self.appendage {
            cells.push(a);
        }
        cells.sort_by(scan_cmp);
        cells
    }

    /// The rectangle's boundary cells in counterclockwise order starting at
    /// the origin: west wall southward, south wall eastward, east wall
    /// northward, north wall back westward. The appendage, when present, is
    /// visited by a one-cell detour from its neighbouring boundary cell, the
    /// only cell that repeats.
    pub fn perimeter_path(&self) -> Vec<CellCoord> {
        let (x0, x1) = self.x_range();
        let (y0, y1) = self.y_range();
        let mut path = Vec::new();
        let mut seen = HashSet::new();
        let mut push = |c: CellCoord, path: &mut Vec<CellCoord>| {
            if seen.insert(c) {
                path.push(c);
            }
        };
        for y in (y0..=y1).rev() {
            push(CellCoord::new(x0, y), &mut path);
        }
        for x in x0..=x1 {
            push(CellCoord::new(x, y0), &mut path);
        }
        for y in y0..=y1 {
            push(CellCoord::new(x1, y), &mut path);
        }
        for x in (x0..=x1).rev() {
            push(CellCoord::new(x, y1), &mut path);
        }
        if let Some(app) = self.appendage {
            if let Some(i) = path.iter().position(|&c| manhattan(c, app) == 1) {
                path.splice(i + 1..i + 1, [app, path[i]]);
            }
        }
        path
    }
}

/// Walks forward along a run of bricks: steps while the cell ahead is full,
/// stopping on the last full cell of the run. Does nothing when the cell
/// ahead is already empty.
pub fn traverse_wall(env: &mut Env) -> Result<(), ContractViolation> {
    while env.observe_rel(RelDir::Front)? == CellState::Full {
        env.step_forward();
    }
    Ok(())
}

/// Shifts a wall one cell to the robot's left.
///
/// Precondition: the robot carries a brick and stands on the first cell of
/// the run, heading along it. Walking down the run, each cell's brick is
/// replaced by the carried one dropped beside it: the first and last bricks
/// of the run stay, inner bricks move one cell to the left of the heading,
/// and the robot ends light on the last cell. A run of length one is left
/// untouched (the robot still carries its brick).
pub fn shift_bricks(env: &mut Env) -> Result<(), ContractViolation> {
    while env.observe_rel(RelDir::Front)? == CellState::Full {
        env.step_forward();
        env.drop_at(RelDir::Left)?;
        if env.observe_rel(RelDir::Front)? == CellState::Full {
            env.pick_here()?;
        }
    }
    Ok(())
}

/// How much structural checking a run performs.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckLevel {
    /// No checks; fastest.
    Off,
    /// Verify the strong structural invariant after every sweep.
    Boundaries,
    /// Boundary checks plus per-fetch component accounting and walk-length
    /// audits.
    Full,
}

/// Options for a build run.
#[derive(Clone, Copy, Debug)]
pub struct BuildConfig {
    pub check: CheckLevel,
    pub record_trace: bool,
    /// Capture an ASCII frame every this many clock ticks.
    pub frame_every: Option<u64>,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            check: CheckLevel::Off,
            record_trace: false,
            frame_every: None,
        }
    }
}

/// Terminal state of a build run.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// The input spanned at most two cells; nothing was built.
    Degenerate,
}

/// Summary statistics of one build run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunStats {
    pub z: u64,
    pub span_initial: u64,
    pub status: RunStatus,
    /// Completed fetch-and-extend loop iterations.
    pub iterations: u64,
    pub total_clock: u64,
    pub clocks_per_procedure: BTreeMap<ProcTag, u64>,
    pub fort_class: FortClass,
    pub fort_span: u64,
    pub max_sense_distance: u64,
    pub start: CellCoord,
    pub first_cell: Option<CellCoord>,
}

/// Everything a build run produces.
#[derive(Clone, Debug)]
pub struct BuildOutcome {
    pub final_field: Field,
    pub stats: RunStats,
    pub report: FortReport,
    pub trace: Option<Vec<TraceEvent>>,
    pub frames: Vec<Frame>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Why a build run could not complete.
#[derive(Debug, Error)]
pub enum BuildError {
    #[error("input field is not connected")]
    Disconnected,
    #[error("start cell {0} holds no brick")]
    StartOffField(CellCoord),
    #[error(transparent)]
    Contract(#[from] ContractViolation),
    #[error("structural check `{}` failed at clock {}: {}", .0.check, .0.clock, .0.detail)]
    CheckFailed(Diagnostic),
}

/// The run's fixed and movable reference cells.
#[derive(Clone, Copy, Debug)]
pub struct FortAnchors {
    pub first_cell: CellCoord,
    pub marker: Option<CellCoord>,
}

/// Drives one build run: owns the environment, the anchors, the fort shape,
/// and the two-register controller state (`stage`, `counter`).
pub struct BuildDriver {
    pub env: Env,
    anchors: FortAnchors,
    shape: FortShape,
    stage: u8,
    counter: u8,
    cfg: BuildConfig,
    diagnostics: Vec<Diagnostic>,
    iterations: u64,
}

impl BuildDriver {
    /// Prepares a run: the marker is the robot's starting cell and the first
    /// cell is found by a breadth-first search over bricks, two steps out.
    pub fn new(env: Env, cfg: BuildConfig) -> Result<Self, BuildError> {
        let start = env.position();
        if !env.field().contains(start) {
            return Err(BuildError::StartOffField(start));
        }
        let first_cell = locate_first_cell(env.field(), start).ok_or_else(|| {
            BuildError::Contract(ContractViolation {
                kind: ViolationKind::Structure,
                clock: env.clock(),
                position: start,
                detail: "no brick two steps from the start".into(),
            })
        })?;
        Ok(BuildDriver::with_parts(
            env,
            FortAnchors {
                first_cell,
                marker: Some(start),
            },
            FortShape::new(first_cell),
            0,
            1,
            cfg,
        ))
    }

    /// Assembles a driver from explicit mid-run state. Intended for tests
    /// and tools that exercise single procedures.
    pub fn with_parts(
        mut env: Env,
        anchors: FortAnchors,
        shape: FortShape,
        stage: u8,
        counter: u8,
        cfg: BuildConfig,
    ) -> Self {
        env.annotate('F', Some(anchors.first_cell));
        env.annotate('M', anchors.marker);
        BuildDriver {
            env,
            anchors,
            shape,
            stage,
            counter,
            cfg,
            diagnostics: Vec::new(),
            iterations: 0,
        }
    }

    pub fn anchors(&self) -> FortAnchors {
        self.anchors
    }

    pub fn shape(&self) -> FortShape {
        self.shape
    }

    pub fn stage_counter(&self) -> (u8, u8) {
        (self.stage, self.counter)
    }

    pub fn diagnostics(&self) -> &[Diagnostic] {
        &self.diagnostics
    }

    /// Components that are neither the fort (the component of the first
    /// cell) nor the marker.
    fn free_components(&self) -> Vec<Component> {
        let first = self.anchors.first_cell;
        let marker = self.anchors.marker;
        self.env
            .field()
            .components()
            .into_iter()
            .filter(|c| !c.cells.contains(&first))
            .filter(|c| marker.map_or(true, |m| !c.cells.contains(&m)))
            .collect()
    }

    fn structure_violation(&self, detail: String) -> BuildError {
        BuildError::Contract(ContractViolation {
            kind: ViolationKind::Structure,
            clock: self.env.clock(),
            position: self.env.position(),
            detail,
        })
    }

    /// Pushes the brick at `stray` outward: the robot fetches it, walks away
    /// from the fort along the steepest-ascent neighbour (ties broken north,
    /// east, south, west), and drops it on the first empty cell at fort
    /// distance seven or more. The robot stays at the drop cell.
    fn push_stray_out(&mut self, stray: CellCoord) -> Result<(), BuildError> {
        self.env.walk_to(stray);
        self.env.pick_here()?;
        let limit = 16 + self.env.field().len() as u64;
        let mut moved = 0u64;
        while self.shape.distance(self.env.position()) < 7
            || self.env.field().contains(self.env.position())
        {
            let pos = self.env.position();
            let mut next = pos.offset(0, 1);
            let mut best = self.shape.distance(next);
            for cand in pos.neighbors() {
                let d = self.shape.distance(cand);
                if d > best {
                    next = cand;
                    best = d;
                }
            }
            self.env.face(heading_toward(pos, next));
            self.env.step_forward();
            moved += 1;
            if moved > limit {
                return Err(self.structure_violation(format!(
                    "relocation from {stray} found no empty cell outside the gap"
                )));
            }
        }
        self.env.drop_here()?;
        Ok(())
    }

    /// Pushes the brick at `stray` outward and returns to where the robot
    /// stood.
    fn relocate_stray(&mut self, stray: CellCoord) -> Result<(), BuildError> {
        let return_to = self.env.position();
        self.push_stray_out(stray)?;
        self.env.walk_to(return_to);
        Ok(())
    }

    /// The nearest full cell in sensing range that is neither fort nor
    /// marker, at fort distance at most six and within distance six of the
    /// robot, ties in scan order.
    fn nearest_visible_stray(&mut self) -> Option<CellCoord> {
        let robot = self.env.position();
        self.env
            .window_full_offsets()
            .into_iter()
            .map(|(dx, dy)| robot.offset(dx, dy))
            .filter(|&c| !self.shape.contains(c))
            .filter(|&c| self.anchors.marker != Some(c))
            .filter(|&c| self.shape.distance(c) <= 6)
            .filter(|&c| manhattan(c, robot) <= 6)
            .min_by(|a, b| {
                manhattan(*a, robot)
                    .cmp(&manhattan(*b, robot))
                    .then_with(|| scan_cmp(a, b))
            })
    }

    /// Clears every stray near the robot: full cells that are neither fort
    /// nor marker at fort distance at most six, nearest first. Only strays
    /// within distance six are claimed: a stray's nearest wall cell sees it
    /// at exactly its fort distance, so the border walk always reaches a
    /// standpoint this close, and claiming it from the first standpoint that
    /// merely senses it would pay two extra approach legs. Claims chain:
    /// after a push the next stray is taken from the drop cell — strays
    /// cluster along the band, so hops between them are short — and the
    /// robot walks back only once a chain dries up.
    fn clear_strays_here(&mut self) -> Result<(), BuildError> {
        let standpoint = self.env.position();
        loop {
            match self.nearest_visible_stray() {
                Some(stray) => self.push_stray_out(stray)?,
                None => {
                    if self.env.position() == standpoint {
                        return Ok(());
                    }
                    self.env.walk_to(standpoint);
                }
            }
        }
    }

    /// Re-standardizes the gap: any component resting entirely at distance
    /// eight gets one removable brick moved to an empty distance-seven cell
    /// beside it, so every component touches the gap boundary again. A fetch
    /// can push a component from seven to eight (it takes whatever brick its
    /// walk frees), and without this pass a second fetch could push it to
    /// nine — beyond what a border walk can ever sense.
    fn repair_gap(&mut self) -> Result<(), BuildError> {
        loop {
            let drifted = self.free_components().into_iter().find_map(|comp| {
                let min = comp
                    .cells
                    .iter()
                    .map(|&c| self.shape.distance(c))
                    .min()
                    .expect("components are nonempty");
                (min == 8).then_some(comp)
            });
            let Some(comp) = drifted else { return Ok(()) };
            let anchor = comp
                .cells
                .iter()
                .copied()
                .filter(|&c| self.shape.distance(c) == 8)
                .min_by(scan_cmp)
                .expect("a minimal cell exists");
            // The empty neighbour nearest the fort; full is impossible, as a
            // full cell at distance seven would belong to this component.
            let mut target = anchor.offset(0, 1);
            let mut best = self.shape.distance(target);
            for cand in anchor.neighbors() {
                let d = self.shape.distance(cand);
                if d < best {
                    target = cand;
                    best = d;
                }
            }
            let brick = if comp.cells.len() == 1 {
                anchor
            } else {
                removable_cells(&comp)
                    .into_iter()
                    .find(|&c| c != anchor)
                    .ok_or_else(|| {
                        self.structure_violation(format!(
                            "component at {anchor} has no second removable brick"
                        ))
                    })?
            };
            self.env.walk_to(brick);
            self.env.pick_here()?;
            self.env.walk_to(target);
            self.env.drop_here()?;
        }
    }

    /// Walks the fort border counterclockwise from the first cell, clearing
    /// the gap zone and pulling drifted components back against it, then
    /// re-seats the marker so it designates a component: distance three from
    /// the first cell and four from the component. When no component can be
    /// designated from the ring, one brick is first ferried onto the
    /// north-west arc. Ends with the robot on the marker.
    pub fn sweep(&mut self) -> Result<(), BuildError> {
        self.env.set_tag(ProcTag::Sweep);
        let first = self.anchors.first_cell;
        self.env.walk_to(first);
        self.clear_strays_here()?;
        let path = self.shape.perimeter_path();
        for i in 1..path.len() {
            let next = path[i];
            let pos = self.env.position();
            self.env.face(heading_toward(pos, next));
            self.env.step_forward();
            self.clear_strays_here()?;
        }
        self.env.walk_to(first);

        self.repair_gap()?;
        self.reseat_marker()?;

        if self.cfg.check >= CheckLevel::Boundaries {
            let diag = check_strongly_structured(
                self.env.field(),
                first,
                self.anchors.marker,
                self.env.position(),
                self.env.clock(),
            );
            let ok = diag.ok;
            self.diagnostics.push(diag.clone());
            if !ok {
                return Err(BuildError::CheckFailed(diag));
            }
        }
        Ok(())
    }

    /// True when the current marker designates a component: it sits at
    /// distance three from the first cell, has no full neighbour, and some
    /// free component's nearest cell is at distance exactly four.
    fn marker_designates(&self) -> bool {
        let Some(m) = self.anchors.marker else {
            return false;
        };
        let singleton = m.neighbors().iter().all(|n| !self.env.field().contains(*n));
        let designates = self
            .free_components()
            .iter()
            .any(|c| c.cells.iter().map(|&p| manhattan(p, m)).min() == Some(4));
        manhattan(m, self.anchors.first_cell) == 3 && singleton && designates
    }

    /// An empty cell on the radius-three ring around the first cell, clear
    /// of the fort walls, in the quadrant the fort can never grow into, and
    /// at distance exactly four from some free component.
    fn designating_seat(&self) -> Option<CellCoord> {
        let first = self.anchors.first_cell;
        let comps = self.free_components();
        ring_cells(first, 3).into_iter().find(|&s| {
            !self.env.field().contains(s)
                && self.shape.distance(s) >= 2
                && (s.y > first.y || s.x < first.x)
                && comps
                    .iter()
                    .any(|c| c.cells.iter().map(|&p| manhattan(p, s)).min() == Some(4))
        })
    }

    /// The cells a ring seat can designate all lie on the north-west arc:
    /// distance seven from the first cell, west and north of it. Every arc
    /// cell pairs with at least one admissible seat, so a brick anywhere on
    /// the arc makes re-seating succeed.
    fn nw_arc(&self) -> Vec<CellCoord> {
        let first = self.anchors.first_cell;
        (0..=7).map(|a| first.offset(-a, 7 - a)).collect()
    }

    /// Re-seats the marker so it designates a component. When no component
    /// touches the north-west arc, one brick is first ferried onto the arc —
    /// next to an existing component when the arc has such a cell, so the
    /// grown component keeps designation alive across later fetches (walks
    /// extract at their far terminal, not at the entry).
    fn reseat_marker(&mut self) -> Result<(), BuildError> {
        if self.free_components().is_empty() {
            if let Some(m) = self.anchors.marker {
                self.env.walk_to(m);
            }
            return Ok(());
        }
        for ferried in [false, true] {
            if self.marker_designates() {
                let m = self.anchors.marker.expect("designating marker exists");
                self.env.walk_to(m);
                return Ok(());
            }
            if let Some(target) = self.designating_seat() {
                let old = self.anchors.marker.ok_or_else(|| {
                    self.structure_violation(
                        "free components remain but no marker brick exists".into(),
                    )
                })?;
                self.env.walk_to(old);
                self.env.pick_here()?;
                self.env.walk_to(target);
                self.env.drop_here()?;
                self.anchors.marker = Some(target);
                self.env.annotate('M', Some(target));
                return Ok(());
            }
            if ferried {
                break;
            }
            self.ferry_to_arc()?;
        }
        Err(self.structure_violation(format!(
            "no designating marker seat on the ring around {}",
            self.anchors.first_cell
        )))
    }

    /// Extracts one brick from the component nearest the robot and drops it
    /// on the north-west arc, preferring an empty arc cell adjacent to a
    /// free component so the two merge. The walk's own relocations can fill
    /// the chosen cell meanwhile; any still-empty arc cell then serves, and
    /// with the whole arc full the brick settles one cell beyond it, where
    /// it joins the arc component.
    fn ferry_to_arc(&mut self) -> Result<(), BuildError> {
        let comps = self.free_components();
        let cells: BTreeSet<CellCoord> =
            comps.iter().flat_map(|c| c.cells.iter().copied()).collect();
        let arc = self.nw_arc();
        let target = arc
            .iter()
            .copied()
            .find(|&c| {
                !self.env.field().contains(c) && c.neighbors().iter().any(|n| cells.contains(n))
            })
            .or_else(|| arc.iter().copied().find(|&c| !self.env.field().contains(c)));

        let from = self.env.position();
        let entry = cells
            .iter()
            .copied()
            .min_by(|a, b| {
                manhattan(*a, from)
                    .cmp(&manhattan(*b, from))
                    .then_with(|| scan_cmp(a, b))
            })
            .expect("free components are nonempty");
        self.env.walk_to(entry);
        let outcome = run_search_walk(&mut self.env)?;
        retrace_walk(&mut self.env, &outcome)?;

        let first = self.anchors.first_cell;
        let target = target
            .filter(|&c| !self.env.field().contains(c))
            .or_else(|| {
                self.nw_arc()
                    .into_iter()
                    .find(|&c| !self.env.field().contains(c))
            })
            .or_else(|| {
                (0..=8)
                    .map(|a| first.offset(-a, 8 - a))
                    .find(|&c| !self.env.field().contains(c))
            })
            .ok_or_else(|| {
                self.structure_violation("no empty cell on or beyond the north-west arc".into())
            })?;
        self.env.walk_to(target);
        self.env.drop_here()?;
        // A shifting extraction parks one brick beside the removed one,
        // possibly a cell into the gap; push it back out.
        if let Extraction::Shift { relocated_to, .. } = outcome.extraction {
            if self.shape.distance(relocated_to) <= 6 {
                self.relocate_stray(relocated_to)?;
            }
        }
        Ok(())
    }

    /// Fetches one brick: walks to the nearest free-component cell, runs the
    /// search walk, and leaves the robot heavy at the extraction site.
    pub fn find_next_brick(&mut self) -> Result<WalkOutcome, BuildError> {
        self.env.set_tag(ProcTag::FindNextBrick);
        let comps = self.free_components();
        let from = self.env.position();
        let entry = comps
            .iter()
            .flat_map(|c| c.cells.iter().copied())
            .min_by(|a, b| {
                manhattan(*a, from)
                    .cmp(&manhattan(*b, from))
                    .then_with(|| scan_cmp(a, b))
            })
            .ok_or_else(|| self.structure_violation("no free component to fetch from".into()))?;

        let walk_span = if self.cfg.check >= CheckLevel::Full {
            let comp = self
                .env
                .field()
                .component_of(entry)
                .expect("entry cell is full");
            Field::from_cells(comp.cells).span().ok()
        } else {
            None
        };

        self.env.walk_to(entry);
        let outcome = run_search_walk(&mut self.env)?;

        if let Some(span) = walk_span {
            let bound = 12 * span.max(1) + 4;
            let diag = Diagnostic {
                check: "walk_length".into(),
                ok: outcome.steps <= bound,
                detail: format!(
                    "{} forward steps over a component of span {span} (bound {bound})",
                    outcome.steps
                ),
                clock: self.env.clock(),
            };
            let ok = diag.ok;
            self.diagnostics.push(diag.clone());
            if !ok {
                return Err(BuildError::CheckFailed(diag));
            }
        }
        Ok(outcome)
    }

    /// Returns the heavy robot to the marker, restoring breadcrumbs along
    /// the walked path.
    pub fn return_to_marker(&mut self, outcome: &WalkOutcome) -> Result<(), BuildError> {
        self.env.set_tag(ProcTag::ReturnToMarker);
        retrace_walk(&mut self.env, outcome)?;
        let m = self
            .anchors
            .marker
            .ok_or_else(|| self.structure_violation("no marker to return to".into()))?;
        self.env.walk_to(m);
        Ok(())
    }

    /// Adds the carried brick to the fort. Dispatches on `(stage, counter)`:
    /// stage 0 lays the first two-by-two block cell by cell; stage 1 cycles
    /// north-east appendage, east-wall shift, south-east appendage,
    /// south-wall shift. Ends with a sweep.
    pub fn extend_fort(&mut self) -> Result<(), BuildError> {
        self.env.set_tag(ProcTag::ExtendFort);
        let first = self.anchors.first_cell;
        self.env.walk_to(first);
        self.env.face(Heading::East);
        let o = self.shape.origin;
        let (w, h) = (self.shape.width, self.shape.height);
        match (self.stage, self.counter) {
            (0, 1) => {
                self.env.drop_at(RelDir::Front)?;
                self.shape = FortShape::with_dims(o, 2, 1, None);
            }
            (0, 2) => {
                self.env.step_forward();
                self.env.drop_at(RelDir::Right)?;
                self.shape = FortShape::with_dims(o, 2, 1, Some(o.offset(1, -1)));
            }
            (0, 3) => {
                self.env.drop_at(RelDir::Right)?;
                self.shape = FortShape::with_dims(o, 2, 2, None);
                self.stage = 1;
            }
            (1, 0) => {
                self.traverse(ProcTag::TraverseWall)?;
                self.env.set_tag(ProcTag::ExtendFort);
                self.env.drop_at(RelDir::Front)?;
                self.shape = FortShape::with_dims(o, w, h, Some(o.offset(w as i64, 0)));
            }
            (1, 1) => {
                self.traverse(ProcTag::TraverseWall)?;
                self.env.set_tag(ProcTag::ExtendFort);
                self.env.step_back();
                self.env.turn_right();
                self.shift(ProcTag::ShiftBricks)?;
                self.env.set_tag(ProcTag::ExtendFort);
                self.shape = FortShape::with_dims(o, w + 1, h, None);
            }
            (1, 2) => {
                self.traverse(ProcTag::TraverseWall)?;
                self.env.set_tag(ProcTag::ExtendFort);
                self.env.turn_right();
                self.traverse(ProcTag::TraverseWall)?;
                self.env.set_tag(ProcTag::ExtendFort);
                self.env.drop_at(RelDir::Front)?;
                self.shape =
                    FortShape::with_dims(o, w, h, Some(o.offset(w as i64 - 1, -(h as i64))));
            }
            (1, 3) => {
                self.traverse(ProcTag::TraverseWall)?;
                self.env.set_tag(ProcTag::ExtendFort);
                self.env.turn_right();
                self.traverse(ProcTag::TraverseWall)?;
                self.env.set_tag(ProcTag::ExtendFort);
                self.env.step_back();
                self.env.turn_right();
                self.shift(ProcTag::ShiftBricks)?;
                self.env.set_tag(ProcTag::ExtendFort);
                self.shape = FortShape::with_dims(o, w, h + 1, None);
            }
            other => {
                return Err(self.structure_violation(format!("invalid controller state {other:?}")))
            }
        }
        self.counter = (self.counter + 1) % 4;
        self.sweep()
    }

    fn traverse(&mut self, tag: ProcTag) -> Result<(), BuildError> {
        self.env.set_tag(tag);
        traverse_wall(&mut self.env)?;
        Ok(())
    }

    fn shift(&mut self, tag: ProcTag) -> Result<(), BuildError> {
        self.env.set_tag(tag);
        shift_bricks(&mut self.env)?;
        Ok(())
    }

    fn fort_is_complete(&self) -> bool {
        self.env.field().len() as u64 <= self.shape.brick_count() + 1
    }

    /// Runs the whole construction to completion.
    pub fn run(mut self) -> Result<BuildOutcome, BuildError> {
        let z = self.env.field().len() as u64;
        let span_initial = self
            .env
            .field()
            .span()
            .map_err(|_| BuildError::Disconnected)?;
        let start = self
            .anchors
            .marker
            .expect("a fresh run always has a marker");

        self.sweep()?;
        while !self.fort_is_complete() {
            let before = if self.cfg.check >= CheckLevel::Full {
                Some(free_component_sets(&self.free_components()))
            } else {
                None
            };
            let outcome = self.find_next_brick()?;
            self.return_to_marker(&outcome)?;
            if let Some(before) = before {
                self.check_extraction(&before, &outcome)?;
            }
            self.extend_fort()?;
            self.iterations += 1;
        }

        // The marker brick itself is the final piece.
        self.env.set_tag(ProcTag::TopLevel);
        if let Some(m) = self.anchors.marker {
            self.env.walk_to(m);
            self.env.pick_here()?;
            self.anchors.marker = None;
            self.env.annotate('M', None);
            self.extend_fort()?;
        }

        let report = classify_fort(self.env.field());
        let stats = RunStats {
            z,
            span_initial,
            status: RunStatus::Completed,
            iterations: self.iterations,
            total_clock: self.env.clock(),
            clocks_per_procedure: self.env.tag_clocks().clone(),
            fort_class: report.class,
            fort_span: report.fort_span,
            max_sense_distance: self.env.max_sense_distance(),
            start,
            first_cell: Some(self.anchors.first_cell),
        };
        let trace = self.env.take_trace();
        let frames = self.env.take_frames();
        Ok(BuildOutcome {
            final_field: self.env.field().clone(),
            stats,
            report,
            trace,
            frames,
            diagnostics: self.diagnostics,
        })
    }

    /// Verifies that one fetch changed exactly one free component, and only
    /// in the way the walk reported: one cell removed, or the shift's two
    /// cells out and one in, with the component still connected.
    fn check_extraction(
        &mut self,
        before: &BTreeSet<BTreeSet<CellCoord>>,
        outcome: &WalkOutcome,
    ) -> Result<(), BuildError> {
        let after = free_component_sets(&self.free_components());
        let changed_before: Vec<&BTreeSet<CellCoord>> = before.difference(&after).collect();
        let changed_after: Vec<&BTreeSet<CellCoord>> = after.difference(before).collect();
        let ok = match (changed_before.as_slice(), changed_after.as_slice()) {
            ([source], rest) => {
                let mut expect: BTreeSet<CellCoord> = (*source).clone();
                match outcome.extraction {
                    Extraction::Leaf { cell } | Extraction::Fallback { cell } => {
                        expect.remove(&cell);
                    }
                    Extraction::Shift {
                        picked,
                        relocated_from,
                        relocated_to,
                    } => {
                        expect.remove(&picked);
                        expect.remove(&relocated_from);
                        expect.insert(relocated_to);
                    }
                }
                match rest {
                    [] => expect.is_empty(),
                    [only] => **only == expect,
                    _ => false,
                }
            }
            _ => false,
        };
        let diag = Diagnostic {
            check: "extraction".into(),
            ok,
            detail: format!(
                "{:?}: {} components changed into {}",
                outcome.extraction,
                changed_before.len(),
                changed_after.len()
            ),
            clock: self.env.clock(),
        };
        self.diagnostics.push(diag.clone());
        if !ok {
            return Err(BuildError::CheckFailed(diag));
        }
        Ok(())
    }
}

fn free_component_sets(comps: &[Component]) -> BTreeSet<BTreeSet<CellCoord>> {
    comps
        .iter()
        .map(|c| c.cells.iter().copied().collect())
        .collect()
}

fn heading_toward(from: CellCoord, to: CellCoord) -> Heading {
    match (to.x - from.x, to.y - from.y) {
        (0, 1) => Heading::North,
        (1, 0) => Heading::East,
        (0, -1) => Heading::South,
        (-1, 0) => Heading::West,
        _ => unreachable!("cells {from} and {to} are not adjacent"),
    }
}

/// Cells at Manhattan distance exactly `d` from `center`, clockwise from due
/// north.
fn ring_cells(center: CellCoord, d: i64) -> Vec<CellCoord> {
    let mut cells = Vec::with_capacity(4 * d as usize);
    for i in 0..4 * d {
        let offset = match i / d {
            0 => (i, d - i),
            1 => (d - (i - d), -(i - d)),
            2 => (-(i - 2 * d), -(d - (i - 2 * d))),
            _ => (-(d - (i - 3 * d)), i - 3 * d),
        };
        cells.push(center.offset(offset.0, offset.1));
    }
    cells
}

/// The first brick found exactly two steps from `start` by a breadth-first
/// search over full cells (neighbours visited north, east, south, west).
fn locate_first_cell(field: &Field, start: CellCoord) -> Option<CellCoord> {
    let mut seen = HashSet::from([start]);
    let mut queue = VecDeque::from([(start, 0u32)]);
    while let Some((cell, depth)) = queue.pop_front() {
        if depth == 2 {
            return Some(cell);
        }
        for n in cell.neighbors() {
            if field.contains(n) && seen.insert(n) {
                queue.push_back((n, depth + 1));
            }
        }
    }
    None
}

/// Builds a fort from `field`, starting the robot at `start`.
///
/// Inputs spanning at most two cells are degenerate: the run ends
/// immediately with the field untouched and a zero clock. Otherwise the
/// run sweeps, then fetches and places one brick per iteration — exactly
/// `z - 2` iterations — and finally builds the marker brick in as well.
pub fn build_fort(
    field: &Field,
    start: CellCoord,
    cfg: BuildConfig,
) -> Result<BuildOutcome, BuildError> {
    if !field.contains(start) {
        return Err(BuildError::StartOffField(start));
    }
    if !field.is_connected() {
        return Err(BuildError::Disconnected);
    }
    let span = field.span().map_err(|_| BuildError::StartOffField(start))?;
    if span <= 2 {
        let report = classify_fort(field);
        let clocks = ProcTag::ALL.iter().map(|&t| (t, 0)).collect();
        return Ok(BuildOutcome {
            final_field: field.clone(),
            stats: RunStats {
                z: field.len() as u64,
                span_initial: span,
                status: RunStatus::Degenerate,
                iterations: 0,
                total_clock: 0,
                clocks_per_procedure: clocks,
                fort_class: report.class,
                fort_span: report.fort_span,
                max_sense_distance: 0,
                start,
                first_cell: None,
            },
            report,
            trace: cfg.record_trace.then(Vec::new),
            frames: Vec::new(),
            diagnostics: Vec::new(),
        });
    }

    let mut env = Env::new(field.clone(), start);
    if cfg.record_trace {
        env.record_trace();
    }
    if let Some(every) = cfg.frame_every {
        env.record_frames(every);
    }
    BuildDriver::new(env, cfg)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_of(cells: &[(i64, i64)]) -> Field {
        Field::from_cells(cells.iter().map(|&(x, y)| CellCoord::new(x, y)))
    }

    #[test]
    fn traverse_wall_stops_on_last_brick() {
        let cells = [(0, 0), (1, 0), (2, 0), (3, 0), (4, 0)];
        let mut env = Env::new(field_of(&cells), CellCoord::new(0, 0));
        env.face(Heading::East);
        traverse_wall(&mut env).unwrap();
        assert_eq!(env.position(), CellCoord::new(4, 0));
        assert_eq!(env.clock(), 4);
        // Idempotent: nothing ahead, nothing happens.
        traverse_wall(&mut env).unwrap();
        assert_eq!(env.clock(), 4);
    }

    #[test]
    fn shift_bricks_moves_inner_bricks_left() {
        // Run of three southward; left of south is east.
        let cells = [(0, 0), (0, -1), (0, -2)];
        let mut env = Env::with_state(field_of(&cells), CellCoord::new(0, 0), Heading::South, true);
        shift_bricks(&mut env).unwrap();
        assert!(!env.carrying());
        assert_eq!(env.position(), CellCoord::new(0, -2));
        let expected = field_of(&[(0, 0), (0, -2), (1, -1), (1, -2)]);
        assert_eq!(*env.field(), expected);
    }

    #[test]
    fn shift_bricks_leaves_single_cell_runs_alone() {
        let mut env = Env::with_state(
            field_of(&[(0, 0)]),
            CellCoord::new(0, 0),
            Heading::South,
            true,
        );
        shift_bricks(&mut env).unwrap();
        assert!(env.carrying());
        assert_eq!(env.position(), CellCoord::new(0, 0));
        assert_eq!(env.clock(), 0);
    }

    #[test]
    fn fort_shape_distance_and_cells() {
        let shape = FortShape::with_dims(CellCoord::new(0, 0), 3, 3, None);
        assert_eq!(shape.brick_count(), 8);
        assert_eq!(shape.distance(CellCoord::new(1, -1)), 1); // hollow centre
        assert_eq!(shape.distance(CellCoord::new(0, 0)), 0);
        assert_eq!(shape.distance(CellCoord::new(5, 0)), 3);
        assert_eq!(shape.distance(CellCoord::new(-2, 3)), 5);
        assert!(!shape.contains(CellCoord::new(1, -1)));
        assert_eq!(shape.cells().len(), 8);

        let with_app = FortShape::with_dims(CellCoord::new(0, 0), 3, 3, Some(CellCoord::new(3, 0)));
        assert_eq!(with_app.brick_count(), 9);
        assert_eq!(with_app.distance(CellCoord::new(5, 0)), 2);
        assert!(with_app.contains(CellCoord::new(3, 0)));
    }

    #[test]
    fn perimeter_path_is_closed_and_counterclockwise() {
        let shape = FortShape::with_dims(CellCoord::new(0, 0), 4, 3, None);
        let path = shape.perimeter_path();
        assert_eq!(path[0], CellCoord::new(0, 0));
        assert_eq!(path.len(), 10);
        // Consecutive cells are adjacent, and the loop closes back to start.
        for pair in path.windows(2) {
            assert_eq!(manhattan(pair[0], pair[1]), 1);
        }
        assert_eq!(manhattan(*path.last().unwrap(), path[0]), 1);
        // Counterclockwise: second cell goes south down the west wall.
        assert_eq!(path[1], CellCoord::new(0, -1));

        let single = FortShape::new(CellCoord::new(2, 2));
        assert_eq!(single.perimeter_path(), vec![CellCoord::new(2, 2)]);
    }

    #[test]
    fn ring_cells_clockwise_from_north() {
        let ring = ring_cells(CellCoord::new(0, 0), 1);
        assert_eq!(
            ring,
            vec![
                CellCoord::new(0, 1),
                CellCoord::new(1, 0),
                CellCoord::new(0, -1),
                CellCoord::new(-1, 0)
            ]
        );
        let ring3 = ring_cells(CellCoord::new(2, 0), 3);
        assert_eq!(ring3.len(), 12);
        assert_eq!(ring3[0], CellCoord::new(2, 3));
        assert!(ring3
            .iter()
            .all(|&c| manhattan(c, CellCoord::new(2, 0)) == 3));
    }

    #[test]
    fn locate_first_cell_two_steps_out() {
        let line = field_of(&[(0, 0), (1, 0), (2, 0), (3, 0)]);
        assert_eq!(
            locate_first_cell(&line, CellCoord::new(0, 0)),
            Some(CellCoord::new(2, 0))
        );
        // Preference order: the BFS reaches (1,1) via north-then-east
        // before anything two east.
        let blob = field_of(&[(0, 0), (0, 1), (1, 0), (1, 1), (2, 0)]);
        assert_eq!(
            locate_first_cell(&blob, CellCoord::new(0, 0)),
            Some(CellCoord::new(1, 1))
        );
        assert_eq!(
            locate_first_cell(&field_of(&[(0, 0)]), CellCoord::new(0, 0)),
            None
        );
    }

    #[test]
    fn extend_fort_first_three_drops_build_the_block() {
        // Start from a one-cell fort with the robot holding a brick at the
        // marker, three cells north of F.
        let first = CellCoord::new(0, 0);
        let marker = CellCoord::new(0, 3);
        let run_one = |stage: u8, counter: u8, field: Field| {
            let env = Env::with_state(field, marker, Heading::North, true);
            let mut driver = BuildDriver::with_parts(
                env,
                FortAnchors {
                    first_cell: first,
                    marker: Some(marker),
                },
                match (stage, counter) {
                    (0, 1) => FortShape::new(first),
                    (0, 2) => FortShape::with_dims(first, 2, 1, None),
                    (0, 3) => FortShape::with_dims(first, 2, 1, Some(CellCoord::new(1, -1))),
                    _ => unreachable!(),
                },
                stage,
                counter,
                BuildConfig::default(),
            );
            driver.extend_fort().unwrap();
            driver
        };

        let d1 = run_one(0, 1, field_of(&[(0, 0), (0, 3)]));
        assert!(d1.env.field().contains(CellCoord::new(1, 0)));
        assert_eq!(d1.stage_counter(), (0, 2));

        let d2 = run_one(0, 2, field_of(&[(0, 0), (1, 0), (0, 3)]));
        assert!(d2.env.field().contains(CellCoord::new(1, -1)));
        assert_eq!(d2.stage_counter(), (0, 3));

        let d3 = run_one(0, 3, field_of(&[(0, 0), (1, 0), (1, -1), (0, 3)]));
        assert!(d3.env.field().contains(CellCoord::new(0, -1)));
        assert_eq!(d3.stage_counter(), (1, 0));
        assert_eq!(d3.shape().width(), 2);
        assert_eq!(d3.shape().height(), 2);
    }

    #[test]
    fn stage_one_cycle_grows_rough_rect_rough_perfect() {
        // Drive four extensions from an 8-brick hollow square, feeding the
        // robot one brick before each call. Classes must cycle rough,
        // rectangular, rough, perfect.
        let first = CellCoord::new(0, 0);
        let marker = CellCoord::new(-3, 0);
        let hollow = [
            (0, 0),
            (1, 0),
            (2, 0),
            (0, -1),
            (2, -1),
            (0, -2),
            (1, -2),
            (2, -2),
        ];
        let mut field = field_of(&hollow);
        field.insert(marker);
        let mut shape = FortShape::with_dims(first, 3, 3, None);
        let mut stage = 1u8;
        let mut counter = 0u8;
        let mut classes = Vec::new();
        for _ in 0..4 {
            let env = Env::with_state(field.clone(), marker, Heading::North, true);
            let mut driver = BuildDriver::with_parts(
                env,
                FortAnchors {
                    first_cell: first,
                    marker: Some(marker),
                },
                shape,
                stage,
                counter,
                BuildConfig::default(),
            );
            driver.extend_fort().unwrap();
            shape = driver.shape();
            (stage, counter) = driver.stage_counter();
            field = driver.env.field().clone();
            let mut fort_only = field.clone();
            fort_only.remove(marker);
            classes.push(classify_fort(&fort_only).class);
        }
        assert_eq!(
            classes,
            vec![
                FortClass::Rough,
                FortClass::Rectangular,
                FortClass::Rough,
                FortClass::Perfect
            ]
        );
        let mut fort_only = field;
        fort_only.remove(marker);
        assert_eq!(fort_only.len(), 12);
        assert_eq!(fort_only.span().unwrap(), 6);
        let report = classify_fort(&fort_only);
        assert_eq!((report.width, report.height), (4, 4));
    }
}
