//! Structural verification: fort classification, field invariants,
//! removability, and trace replay.
//!
//! Everything here is written independently of the construction procedures
//! so it can serve as an oracle for them: classification inspects only the
//! final cell set, the invariant checks re-derive the fort component by
//! flood fill, and replay re-executes a trace from scratch against the
//! robot's movement and brick-handling rules.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{manhattan, scan_cmp, CellCoord, Component, Field};
use crate::robot::{Action, Heading, TraceEvent};

/// Shape classes a finished field can fall into.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FortClass {
    /// Square hollow rectangle; brick count divisible by four.
    Perfect,
    /// Non-square hollow rectangle with an even brick count.
    Rectangular,
    /// Hollow rectangle plus one brick adjacent to a corner; odd brick count.
    Rough,
    /// Anything else.
    Invalid,
}

/// Classification result for a field.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct FortReport {
    pub class: FortClass,
    /// East-west extent of the (remainder) rectangle, in cells.
    pub width: u64,
    /// North-south extent of the (remainder) rectangle, in cells.
    pub height: u64,
    /// Manhattan diameter of the whole field.
    pub fort_span: u64,
    /// Cells along the longest wall.
    pub wall_bricks: u64,
    pub brick_count: u64,
}

/// Number of cells on the boundary of a `w` by `h` rectangle.
fn rect_boundary_count(w: u64, h: u64) -> u64 {
    if w.min(h) <= 2 {
        w * h
    } else {
        2 * (w + h) - 4
    }
}

/// True when `field` is exactly the boundary of its bounding box: every
/// boundary cell full and nothing in the interior.
fn is_bare_rect(field: &Field) -> Option<(u64, u64)> {
    let (min_x, min_y, max_x, max_y) = field.bounds()?;
    let w = (max_x - min_x + 1) as u64;
    let h = (max_y - min_y + 1) as u64;
    if field.len() as u64 != rect_boundary_count(w, h) {
        return None;
    }
    for x in min_x..=max_x {
        for y in min_y..=max_y {
            let on_boundary = x == min_x || x == max_x || y == min_y || y == max_y;
            if on_boundary && !field.contains(CellCoord::new(x, y)) {
                return None;
            }
        }
    }
    Some((w, h))
}

fn classify_bare(w: u64, h: u64, count: u64) -> FortClass {
    if count % 2 == 1 {
        // Degenerate odd rectangles (single cells, thin odd lines) count as
        // rough forts: a remainder rectangle with the spare brick absorbed.
        FortClass::Rough
    } else if w == h {
        FortClass::Perfect
    } else {
        FortClass::Rectangular
    }
}

/// Classifies a field as a fort shape.
///
/// Even counts must form the exact boundary of their bounding box — square
/// for [`FortClass::Perfect`], oblong for [`FortClass::Rectangular`]. Odd
/// counts may additionally carry one appendage brick outside the rectangle
/// and adjacent to one of its corners ([`FortClass::Rough`]). Everything
/// else is [`FortClass::Invalid`].
pub fn classify_fort(field: &Field) -> FortReport {
    let brick_count = field.len() as u64;
    let fort_span = field.span().unwrap_or(0);
    let (min_x, min_y, max_x, max_y) = match field.bounds() {
        Some(b) => b,
        None => {
            return FortReport {
                class: FortClass::Invalid,
                width: 0,
                height: 0,
                fort_span: 0,
                wall_bricks: 0,
                brick_count: 0,
            }
        }
    };
    let bbox_w = (max_x - min_x + 1) as u64;
    let bbox_h = (max_y - min_y + 1) as u64;
    let report = |class, w: u64, h: u64| FortReport {
        class,
        width: w,
        height: h,
        fort_span,
        wall_bricks: w.max(h),
        brick_count,
    };

    if let Some((w, h)) = is_bare_rect(field) {
        return report(classify_bare(w, h, brick_count), w, h);
    }
    if brick_count % 2 == 1 {
        // Search for the single appendage whose removal leaves a bare
        // rectangle it touches at a corner.
        for cell in field.sorted_cells() {
            let mut rest = field.clone();
            rest.remove(cell);
            let Some((w, h)) = is_bare_rect(&rest) else {
                continue;
            };
            let (rx0, ry0, rx1, ry1) = rest.bounds().expect("rest is nonempty");
            let inside = cell.x >= rx0 && cell.x <= rx1 && cell.y >= ry0 && cell.y <= ry1;
            if inside {
                continue;
            }
            let corners = [
                CellCoord::new(rx0, ry0),
                CellCoord::new(rx0, ry1),
                CellCoord::new(rx1, ry0),
                CellCoord::new(rx1, ry1),
            ];
            if corners.iter().any(|&c| manhattan(c, cell) == 1) {
                return report(FortClass::Rough, w, h);
            }
        }
    }
    report(FortClass::Invalid, bbox_w, bbox_h)
}

/// Outcome of one structural check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Diagnostic {
    pub check: String,
    pub ok: bool,
    pub detail: String,
    pub clock: u64,
}

impl Diagnostic {
    fn new(check: &str, ok: bool, detail: String, clock: u64) -> Self {
        Diagnostic {
            check: check.to_string(),
            ok,
            detail,
            clock,
        }
    }
}

/// Partition of a field into the fort component, an optional marker
/// singleton, and the remaining free components.
struct Partition {
    fort: HashSet<CellCoord>,
    free: Vec<Component>,
    marker_is_singleton: bool,
}

fn partition(field: &Field, first_cell: CellCoord, marker: Option<CellCoord>) -> Option<Partition> {
    if !field.contains(first_cell) {
        return None;
    }
    let comps = field.components();
    let mut fort = None;
    let mut free = Vec::new();
    let mut marker_is_singleton = false;
    for comp in comps {
        if comp.cells.contains(&first_cell) {
            fort = Some(comp.cells.iter().copied().collect());
        } else if marker.is_some_and(|m| comp.cells.contains(&m)) {
            marker_is_singleton = comp.len() == 1;
        } else {
            free.push(comp);
        }
    }
    Some(Partition {
        fort: fort?,
        free,
        marker_is_singleton,
    })
}

fn min_dist_to_set(set: &HashSet<CellCoord>, comp: &Component) -> u64 {
    let mut best = u64::MAX;
    for &c in &comp.cells {
        for &f in set {
            best = best.min(manhattan(c, f));
        }
    }
    best
}

/// Checks the *structured* invariant: the fort component exists, the marker
/// (when present) is a singleton component, and every free component keeps a
/// Manhattan distance of at least 7 from the fort.
pub fn check_structured(
    field: &Field,
    first_cell: CellCoord,
    marker: Option<CellCoord>,
    clock: u64,
) -> Diagnostic {
    let name = "structured";
    let Some(p) = partition(field, first_cell, marker) else {
        return Diagnostic::new(name, false, format!("no brick at {first_cell}"), clock);
    };
    if marker.is_some() && !p.marker_is_singleton {
        return Diagnostic::new(
            name,
            false,
            "marker is not a singleton component".into(),
            clock,
        );
    }
    for comp in &p.free {
        let d = min_dist_to_set(&p.fort, comp);
        if d < 7 {
            return Diagnostic::new(
                name,
                false,
                format!(
                    "free component at {} sits at distance {d} < 7",
                    comp.cells[0]
                ),
                clock,
            );
        }
    }
    Diagnostic::new(
        name,
        true,
        format!("{} free components, gap respected", p.free.len()),
        clock,
    )
}

/// Checks the *strongly structured* invariant: structured, plus no free
/// component farther than 8 from the fort, and — while free components
/// remain — a marker at distance 3 from `first_cell` designating a free
/// component at distance exactly 4, with the robot parked on it.
pub fn check_strongly_structured(
    field: &Field,
    first_cell: CellCoord,
    marker: Option<CellCoord>,
    robot: CellCoord,
    clock: u64,
) -> Diagnostic {
    let name = "strongly_structured";
    let base = check_structured(field, first_cell, marker, clock);
    if !base.ok {
        return Diagnostic::new(name, false, base.detail, clock);
    }
    let p = partition(field, first_cell, marker).expect("validated by structured check");
    for comp in &p.free {
        let d = min_dist_to_set(&p.fort, comp);
        if d > 8 {
            return Diagnostic::new(
                name,
                false,
                format!(
                    "free component at {} lost at distance {d} > 8",
                    comp.cells[0]
                ),
                clock,
            );
        }
    }
    if !p.free.is_empty() {
        let Some(m) = marker else {
            return Diagnostic::new(
                name,
                false,
                "free components remain but no marker is placed".into(),
                clock,
            );
        };
        let d_first = manhattan(m, first_cell);
        if d_first != 3 {
            return Diagnostic::new(
                name,
                false,
                format!("marker at distance {d_first} from the first cell, want 3"),
                clock,
            );
        }
        let designates = p
            .free
            .iter()
            .any(|comp| comp.cells.iter().map(|&c| manhattan(c, m)).min() == Some(4));
        if !designates {
            return Diagnostic::new(
                name,
                false,
                "no free component at distance 4 from the marker".into(),
                clock,
            );
        }
        if robot != m {
            return Diagnostic::new(
                name,
                false,
                format!("robot at {robot}, marker at {m}"),
                clock,
            );
        }
    }
    Diagnostic::new(
        name,
        true,
        format!("{} free components", p.free.len()),
        clock,
    )
}

/// Cells whose removal keeps the rest of the component connected (or empty).
/// Returned in scan order.
pub fn removable_cells(comp: &Component) -> Vec<CellCoord> {
    let cells: HashSet<CellCoord> = comp.cells.iter().copied().collect();
    let mut result = Vec::new();
    for &candidate in &comp.cells {
        let mut rest: BTreeSet<CellCoord> = cells.iter().copied().collect();
        rest.remove(&candidate);
        if rest.is_empty() || flood_count(&rest) == rest.len() {
            result.push(candidate);
        }
    }
    result.sort_by(scan_cmp);
    result
}

fn flood_count(cells: &BTreeSet<CellCoord>) -> usize {
    let Some(&start) = cells.iter().next() else {
        return 0;
    };
    let mut seen = HashSet::from([start]);
    let mut stack = vec![start];
    while let Some(cell) = stack.pop() {
        for n in cell.neighbors() {
            if cells.contains(&n) && seen.insert(n) {
                stack.push(n);
            }
        }
    }
    seen.len()
}

/// A rejected trace, with the index of the offending event.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("trace invalid at event {index}: {detail}")]
pub struct ReplayViolation {
    pub index: usize,
    pub detail: String,
}

/// End state of a successfully replayed trace.
#[derive(Clone, Debug)]
pub struct ReplaySummary {
    pub final_field: Field,
    pub position: CellCoord,
    pub heading: Heading,
    pub carrying: bool,
    pub total_clock: u64,
}

/// Replays a trace against an initial field, enforcing the robot contract at
/// every event: unit moves along the current heading, picks and drops on
/// cells within distance one, brick conservation, and clock bookkeeping
/// (one tick per move/pick/drop, none for turns). Any prefix of a valid
/// trace is itself valid.
///
/// The robot is assumed to start facing north. When `start` is `None` the
/// starting cell is inferred from the first event.
pub fn replay_validate(
    events: &[TraceEvent],
    initial_field: &Field,
    start: Option<CellCoord>,
) -> Result<ReplaySummary, ReplayViolation> {
    let fail = |index: usize, detail: String| Err(ReplayViolation { index, detail });
    let mut field = initial_field.clone();
    let mut heading = Heading::North;
    let mut carrying = false;
    let mut clock = 0u64;
    let budget = field.len();

    let mut position = match start {
        Some(p) => p,
        None => match events.first() {
            None => CellCoord::new(0, 0),
            Some(e) => match e.action {
                Action::TurnLeft | Action::TurnRight => e.position,
                Action::Move => {
                    let (dx, dy) = e.heading.vector();
                    e.position.offset(-dx, -dy)
                }
                Action::Pick | Action::Drop => {
                    return fail(0, "cannot infer start position from a pick or drop".into())
                }
            },
        },
    };

    for (index, e) in events.iter().enumerate() {
        match e.action {
            Action::TurnLeft | Action::TurnRight => {
                let expect = if e.action == Action::TurnLeft {
                    heading.left()
                } else {
                    heading.right()
                };
                if e.clock != clock {
                    return fail(index, format!("turn advanced the clock to {}", e.clock));
                }
                if e.position != position {
                    return fail(
                        index,
                        format!("turn located at {}, robot at {position}", e.position),
                    );
                }
                if e.heading != expect {
                    return fail(
                        index,
                        format!("turn yields {:?}, event says {:?}", expect, e.heading),
                    );
                }
                if e.carrying != carrying {
                    return fail(index, "turn changed the carried-brick flag".into());
                }
                heading = expect;
            }
            Action::Move => {
                if e.clock != clock + 1 {
                    return fail(
                        index,
                        format!("move at clock {}, expected {}", e.clock, clock + 1),
                    );
                }
                if e.heading != heading {
                    return fail(index, "move changed the heading".into());
                }
                let (dx, dy) = (e.position.x - position.x, e.position.y - position.y);
                let (hx, hy) = heading.vector();
                if (dx, dy) != (hx, hy) && (dx, dy) != (-hx, -hy) {
                    return fail(
                        index,
                        format!(
                            "move from {position} to {} is not along the heading",
                            e.position
                        ),
                    );
                }
                if e.carrying != carrying {
                    return fail(index, "move changed the carried-brick flag".into());
                }
                position = e.position;
                clock += 1;
            }
            Action::Pick => {
                if e.clock != clock + 1 {
                    return fail(
                        index,
                        format!("pick at clock {}, expected {}", e.clock, clock + 1),
                    );
                }
                if manhattan(e.position, position) > 1 {
                    return fail(
                        index,
                        format!("pick target {} not adjacent to {position}", e.position),
                    );
                }
                if carrying {
                    return fail(index, "pick while already carrying".into());
                }
                if !field.remove(e.position) {
                    return fail(index, format!("pick from empty cell {}", e.position));
                }
                if e.heading != heading || !e.carrying {
                    return fail(index, "pick event state mismatch".into());
                }
                carrying = true;
                clock += 1;
            }
            Action::Drop => {
                if e.clock != clock + 1 {
                    return fail(
                        index,
                        format!("drop at clock {}, expected {}", e.clock, clock + 1),
                    );
                }
                if manhattan(e.position, position) > 1 {
                    return fail(
                        index,
                        format!("drop target {} not adjacent to {position}", e.position),
                    );
                }
                if !carrying {
                    return fail(index, "drop while carrying nothing".into());
                }
                if !field.insert(e.position) {
                    return fail(index, format!("drop onto full cell {}", e.position));
                }
                if e.heading != heading || e.carrying {
                    return fail(index, "drop event state mismatch".into());
                }
                carrying = false;
                clock += 1;
            }
        }
        if field.len() + usize::from(carrying) != budget {
            return fail(index, "brick conservation broken".into());
        }
    }
    Ok(ReplaySummary {
        final_field: field,
        position,
        heading,
        carrying,
        total_clock: clock,
    })
}
