//! Search walks: locating and freeing one brick from a component.
//!
//! The robot traverses a component along its boundary with constant memory:
//! it walks straight while the cell on its designated turn side is empty,
//! and turns (flipping the designated side) when that cell is full. So the
//! reverse traversal can follow the same rule, each corner leaves a
//! breadcrumb — one brick moved from just behind the corner to a free cell
//! beside it — which the reverse pass restores. The walk ends at a terminal
//! cell where a brick can be freed: a leaf is simply picked, a two-neighbour
//! dead end is resolved by *shifting* (pick the terminal, slide the
//! penultimate brick one cell sideways so the component stays in one piece).
//!
//! Every extraction is validated against a snapshot of the component taken
//! at walk start; when the local manoeuvre would fragment the component (or
//! the walk closes a loop), the robot instead restores all breadcrumbs and
//! falls back to a provably removable cell.

use std::collections::HashSet;

use crate::grid::{CellCoord, Component};
use crate::robot::{CellState, ContractViolation, Env, Heading, RelDir, ViolationKind};
use crate::verify::removable_cells;

/// Which side the walk currently turns toward.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum WalkMode {
    Left,
    Right,
}

impl WalkMode {
    fn turn_rel(self) -> RelDir {
        match self {
            WalkMode::Left => RelDir::Left,
            WalkMode::Right => RelDir::Right,
        }
    }

    fn anti_rel(self) -> RelDir {
        match self {
            WalkMode::Left => RelDir::Right,
            WalkMode::Right => RelDir::Left,
        }
    }

    fn flip(self) -> Self {
        match self {
            WalkMode::Left => WalkMode::Right,
            WalkMode::Right => WalkMode::Left,
        }
    }
}

/// One breadcrumb: the brick at `from` was parked at `to` while crossing a
/// corner, and is restored when the corner is crossed again in reverse.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Crumb {
    pub from: CellCoord,
    pub to: CellCoord,
}

/// How the walk freed its brick.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Extraction {
    /// The terminal brick was picked directly.
    Leaf { cell: CellCoord },
    /// The terminal and penultimate bricks were rearranged: `picked` left
    /// the field with the robot while the brick at `relocated_from` now sits
    /// at `relocated_to`.
    Shift {
        picked: CellCoord,
        relocated_from: CellCoord,
        relocated_to: CellCoord,
    },
    /// The walk was abandoned (loop, or an unsafe local manoeuvre); after
    /// restoring every breadcrumb the robot picked this provably removable
    /// cell instead.
    Fallback { cell: CellCoord },
}

/// Record of one completed search walk. The robot ends heavy at the
/// extraction site; [`retrace_walk`] brings it back to `entry`.
#[derive(Clone, Debug)]
pub struct WalkOutcome {
    pub entry: CellCoord,
    /// Cells visited by the forward walk, entry first, in order.
    pub path: Vec<CellCoord>,
    /// The same cells split into straight segments; consecutive segments
    /// share exactly their corner cell.
    pub segments: Vec<Vec<CellCoord>>,
    /// Breadcrumbs keyed by the path index of their corner, in the order
    /// they were laid.
    pub crumbs: Vec<(usize, Crumb)>,
    pub extraction: Extraction,
    /// Forward steps taken (excluding the retreat).
    pub steps: u64,
}

fn rel_dir(heading: Heading, from: CellCoord, to: CellCoord) -> RelDir {
    let delta = (to.x - from.x, to.y - from.y);
    for rel in [RelDir::Front, RelDir::Back, RelDir::Left, RelDir::Right] {
        if rel.absolute(heading).vector() == delta {
            return rel;
        }
    }
    unreachable!("cells {from} and {to} are not adjacent")
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

fn connected_after(original: &HashSet<CellCoord>, remove: &[CellCoord], add: &[CellCoord]) -> bool {
    let mut cells: HashSet<CellCoord> = original.clone();
    for r in remove {
        cells.remove(r);
    }
    for a in add {
        cells.insert(*a);
    }
    let Some(&start) = cells.iter().min_by(|a, b| crate::grid::scan_cmp(a, b)) else {
        return true;
    };
    let mut seen = HashSet::from([start]);
    let mut stack = vec![start];
    while let Some(c) = stack.pop() {
        for n in c.neighbors() {
            if cells.contains(&n) && seen.insert(n) {
                stack.push(n);
            }
        }
    }
    seen.len() == cells.len()
}

struct Walker<'a> {
    env: &'a mut Env,
    mode: WalkMode,
    path: Vec<CellCoord>,
    segments: Vec<Vec<CellCoord>>,
    crumbs: Vec<(usize, Crumb)>,
    steps: u64,
}

impl<'a> Walker<'a> {
    fn structure_violation(&self, detail: String) -> ContractViolation {
        ContractViolation {
            kind: ViolationKind::Structure,
            clock: self.env.clock(),
            position: self.env.position(),
            detail,
        }
    }

    /// Lays a breadcrumb at the corner the robot currently occupies, moving
    /// the brick behind it to the first free cell of (anti-turn side, ahead).
    fn lay_crumb(&mut self) -> Result<(), ContractViolation> {
        if self.env.observe_rel(RelDir::Back)? != CellState::Full {
            return Ok(());
        }
        let target_rel = if self.env.observe_rel(self.mode.anti_rel())? == CellState::Empty {
            self.mode.anti_rel()
        } else if self.env.observe_rel(RelDir::Front)? == CellState::Empty {
            RelDir::Front
        } else {
            return Ok(());
        };
        let pos = self.env.position();
        let heading = self.env.heading();
        let from = {
            let (dx, dy) = heading.reverse().vector();
            pos.offset(dx, dy)
        };
        let to = {
            let (dx, dy) = target_rel.absolute(heading).vector();
            pos.offset(dx, dy)
        };
        self.env.pick_at(RelDir::Back)?;
        self.env.drop_at(target_rel)?;
        self.crumbs.push((self.path.len() - 1, Crumb { from, to }));
        Ok(())
    }

    /// Restores breadcrumbs while walking the path back from `start_idx` to
    /// the entry. With a brick in hand each restore is a swap (fill the
    /// hole from the hand, take the parked brick); empty-handed it is a
    /// plain move of the parked brick back into its hole.
    fn retreat(&mut self, start_idx: usize, heavy: bool) -> Result<(), ContractViolation> {
        for idx in (0..=start_idx).rev() {
            let cell = self.path[idx];
            if self.env.position() != cell {
                let h = heading_toward(self.env.position(), cell);
                self.env.face(h);
                self.env.step_forward();
            }
            let due: Vec<Crumb> = self
                .crumbs
                .iter()
                .rev()
                .filter(|(i, _)| *i == idx)
                .map(|&(_, c)| c)
                .collect();
            for crumb in due {
                let heading = self.env.heading();
                if heavy {
                    self.env.drop_at(rel_dir(heading, cell, crumb.from))?;
                    self.env.pick_at(rel_dir(heading, cell, crumb.to))?;
                } else {
                    self.env.pick_at(rel_dir(heading, cell, crumb.to))?;
                    self.env.drop_at(rel_dir(heading, cell, crumb.from))?;
                }
            }
        }
        Ok(())
    }
}

/// Runs a search walk over the component containing `entry`.
///
/// Preconditions: the robot stands on `entry` (a full cell) carrying
/// nothing. Postconditions: the robot carries one brick and stands at the
/// extraction site recorded in the outcome; after [`retrace_walk`] the
/// component's cells equal the walk-start snapshot minus one removed cell
/// (plus the single sideways relocation in the shift case), and they remain
/// connected.
pub fn run_search_walk(env: &mut Env) -> Result<WalkOutcome, ContractViolation> {
    let entry = env.position();
    let snapshot: HashSet<CellCoord> = env
        .field()
        .component_of(entry)
        .map(|c| c.cells.into_iter().collect())
        .ok_or_else(|| ContractViolation {
            kind: ViolationKind::Structure,
            clock: env.clock(),
            position: entry,
            detail: format!("search walk entry {entry} is empty"),
        })?;

    let mut walker = Walker {
        env,
        mode: WalkMode::Left,
        path: vec![entry],
        segments: vec![vec![entry]],
        crumbs: Vec::new(),
        steps: 0,
    };

    if snapshot.len() == 1 {
        walker.env.pick_here()?;
        return Ok(WalkOutcome {
            entry,
            path: walker.path,
            segments: walker.segments,
            crumbs: walker.crumbs,
            extraction: Extraction::Leaf { cell: entry },
            steps: 0,
        });
    }

    // Dock: from the arrival heading, rotate clockwise to the first heading
    // that points along a brick with a free cell on the left; settle for any
    // brick ahead if no such heading exists. The walk starts left-oriented.
    let arrival = walker.env.heading();
    let mut docked = None;
    for i in 0..4 {
        let h = (0..i).fold(arrival, |h, _| h.right());
        let (dx, dy) = h.vector();
        let (lx, ly) = h.left().vector();
        let front_full = walker.env.observe(dx, dy)? == CellState::Full;
        let left_empty = walker.env.observe(lx, ly)? == CellState::Empty;
        if front_full && left_empty {
            docked = Some(h);
            break;
        }
    }
    if docked.is_none() {
        for i in 0..4 {
            let h = (0..i).fold(arrival, |h, _| h.right());
            let (dx, dy) = h.vector();
            if walker.env.observe(dx, dy)? == CellState::Full {
                docked = Some(h);
                break;
            }
        }
    }
    let dock = docked.ok_or_else(|| {
        walker.structure_violation(format!("no brick adjacent to walk entry {entry}"))
    })?;
    walker.env.face(dock);

    let mut visited: HashSet<(CellCoord, Heading, WalkMode)> = HashSet::new();
    let mut looped = false;
    loop {
        let state = (walker.env.position(), walker.env.heading(), walker.mode);
        if !visited.insert(state) {
            looped = true;
            break;
        }
        if walker.env.observe_rel(walker.mode.turn_rel())? == CellState::Full {
            // Corner: leave a breadcrumb, turn toward the full cell, and
            // flip the designated side.
            walker.lay_crumb()?;
            match walker.mode.turn_rel() {
                RelDir::Left => walker.env.turn_left(),
                _ => walker.env.turn_right(),
            }
            walker.mode = walker.mode.flip();
            walker.segments.push(vec![walker.env.position()]);
            continue;
        }
        if walker.env.observe_rel(RelDir::Front)? == CellState::Full {
            walker.env.step_forward();
            walker.steps += 1;
            walker.path.push(walker.env.position());
            walker
                .segments
                .last_mut()
                .expect("segments nonempty")
                .push(walker.env.position());
            continue;
        }
        break; // terminal: nothing ahead, nothing on the turn side
    }

    let crumb_cells: HashSet<CellCoord> = walker
        .crumbs
        .iter()
        .flat_map(|&(_, c)| [c.from, c.to])
        .collect();

    if !looped {
        let t = walker.env.position();
        let heading = walker.env.heading();
        let back = {
            let (dx, dy) = heading.reverse().vector();
            t.offset(dx, dy)
        };
        let back_full = walker.env.observe_rel(RelDir::Back)? == CellState::Full;
        let anti_full = walker.env.observe_rel(walker.mode.anti_rel())? == CellState::Full;
        let clean = |cells: &[CellCoord]| cells.iter().all(|c| !crumb_cells.contains(c));

        if !(back_full && anti_full) {
            // Leaf-like terminal: at most one neighbour holds the rest of
            // the component together.
            if clean(&[t]) && connected_after(&snapshot, &[t], &[]) {
                walker.env.pick_here()?;
                let (path, segments, crumbs, steps) =
                    (walker.path, walker.segments, walker.crumbs, walker.steps);
                return Ok(WalkOutcome {
                    entry,
                    path,
                    segments,
                    crumbs,
                    extraction: Extraction::Leaf { cell: t },
                    steps,
                });
            }
        } else {
            // Dead end with bricks behind and beside: try to take the
            // terminal anyway if the diagonal `park` cell already bridges
            // them, otherwise shift the terminal brick into `park`. The
            // shift is refused when `park` touches a brick outside the
            // walked component: the relocation must never fuse two free
            // components into one.
            let park = {
                let (dx, dy) = walker.mode.anti_rel().absolute(heading).vector();
                back.offset(dx, dy)
            };
            let mut park_isolated = true;
            for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let n = park.offset(dx, dy);
                if snapshot.contains(&n) {
                    continue;
                }
                if walker.env.observe(n.x - t.x, n.y - t.y)? == CellState::Full {
                    park_isolated = false;
                    break;
                }
            }
            let park_state = walker.env.observe(park.x - t.x, park.y - t.y)?;
            if park_state == CellState::Full {
                if clean(&[t]) && connected_after(&snapshot, &[t], &[]) {
                    walker.env.pick_here()?;
                    let (path, segments, crumbs, steps) =
                        (walker.path, walker.segments, walker.crumbs, walker.steps);
                    return Ok(WalkOutcome {
                        entry,
                        path,
                        segments,
                        crumbs,
                        extraction: Extraction::Leaf { cell: t },
                        steps,
                    });
                }
            } else if park_isolated
                && clean(&[t, back, park])
                && connected_after(&snapshot, &[t, back], &[park])
            {
                walker.env.pick_here()?;
                walker.env.step_back();
                walker.env.drop_at(walker.mode.anti_rel())?;
                walker.env.pick_here()?;
                let (path, segments, crumbs, steps) =
                    (walker.path, walker.segments, walker.crumbs, walker.steps);
                return Ok(WalkOutcome {
                    entry,
                    path,
                    segments,
                    crumbs,
                    extraction: Extraction::Shift {
                        picked: back,
                        relocated_from: t,
                        relocated_to: park,
                    },
                    steps,
                });
            }
        }
    }

    // Fallback: undo every breadcrumb on the way back to the entry, then
    // take the first removable cell — preferring cells the walk has seen.
    let last_idx = walker.path.len() - 1;
    walker.retreat(last_idx, false)?;
    let comp = Component {
        cells: {
            let mut cells: Vec<CellCoord> = snapshot.iter().copied().collect();
            cells.sort_by(crate::grid::scan_cmp);
            cells
        },
    };
    let removable: HashSet<CellCoord> = removable_cells(&comp).into_iter().collect();
    let target = walker
        .path
        .iter()
        .copied()
        .find(|c| removable.contains(c))
        .or_else(|| removable_cells(&comp).into_iter().next())
        .ok_or_else(|| walker.structure_violation("component has no removable cell".into()))?;
    walker.env.walk_to(target);
    walker.env.pick_here()?;
    let (path, segments, crumbs, steps) =
        (walker.path, walker.segments, walker.crumbs, walker.steps);
    Ok(WalkOutcome {
        entry,
        path,
        segments,
        crumbs,
        extraction: Extraction::Fallback { cell: target },
        steps,
    })
}

/// Returns the robot (carrying the freed brick) from the extraction site to
/// the walk entry, restoring every breadcrumb on the way.
pub fn retrace_walk(env: &mut Env, outcome: &WalkOutcome) -> Result<(), ContractViolation> {
    let start_idx = match outcome.extraction {
        Extraction::Fallback { .. } => {
            // Breadcrumbs were restored before the fallback pick.
            env.walk_to(outcome.entry);
            return Ok(());
        }
        Extraction::Leaf { .. } => outcome.path.len() - 1,
        Extraction::Shift { .. } => outcome.path.len().saturating_sub(2),
    };
    let mut walker = Walker {
        env,
        mode: WalkMode::Left,
        path: outcome.path.clone(),
        segments: Vec::new(),
        crumbs: outcome.crumbs.clone(),
        steps: 0,
    };
    walker.retreat(start_idx, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Field;

    fn field_of(cells: &[(i64, i64)]) -> Field {
        Field::from_cells(cells.iter().map(|&(x, y)| CellCoord::new(x, y)))
    }

    fn walk_from(cells: &[(i64, i64)], entry: (i64, i64), arrive: Heading) -> (Env, WalkOutcome) {
        let entry = CellCoord::new(entry.0, entry.1);
        let mut env = Env::new(field_of(cells), entry);
        env.face(arrive);
        let outcome = run_search_walk(&mut env).unwrap();
        (env, outcome)
    }

    #[test]
    fn singleton_component_is_picked_in_place() {
        let (env, outcome) = walk_from(&[(0, 0)], (0, 0), Heading::North);
        assert_eq!(
            outcome.extraction,
            Extraction::Leaf {
                cell: CellCoord::new(0, 0)
            }
        );
        assert!(env.carrying());
        assert!(env.field().is_empty());
        assert_eq!(outcome.steps, 0);
    }

    #[test]
    fn straight_line_walk_has_no_crumbs() {
        let cells = [(0, 0), (0, 1), (0, 2), (0, 3), (0, 4)];
        let (mut env, outcome) = walk_from(&cells, (0, 0), Heading::North);
        assert_eq!(
            outcome.extraction,
            Extraction::Leaf {
                cell: CellCoord::new(0, 4)
            }
        );
        assert!(outcome.crumbs.is_empty());
        assert_eq!(outcome.segments.len(), 1);
        assert_eq!(outcome.steps, 4);
        retrace_walk(&mut env, &outcome).unwrap();
        assert_eq!(env.position(), CellCoord::new(0, 0));
        assert!(env.carrying());
        let expected = field_of(&[(0, 0), (0, 1), (0, 2), (0, 3)]);
        assert_eq!(*env.field(), expected);
    }

    #[test]
    fn l_shape_walk_lays_and_restores_one_crumb() {
        // Vertical arm north from the entry, horizontal arm west at the top.
        let cells = [(0, 0), (0, 1), (0, 2), (0, 3), (-1, 3), (-2, 3), (-3, 3)];
        let (mut env, outcome) = walk_from(&cells, (0, 0), Heading::North);
        assert_eq!(
            outcome.extraction,
            Extraction::Leaf {
                cell: CellCoord::new(-3, 3)
            }
        );
        assert_eq!(outcome.segments.len(), 2);
        assert_eq!(outcome.segments[0].last(), Some(&CellCoord::new(0, 3)));
        assert_eq!(outcome.segments[1].first(), Some(&CellCoord::new(0, 3)));
        assert_eq!(outcome.crumbs.len(), 1);
        let (idx, crumb) = outcome.crumbs[0];
        assert_eq!(outcome.path[idx], CellCoord::new(0, 3));
        assert_eq!(crumb.from, CellCoord::new(0, 2));
        assert_eq!(crumb.to, CellCoord::new(1, 3));
        // Mid-walk the crumb brick is parked beside the corner.
        assert!(env.field().contains(CellCoord::new(1, 3)));
        assert!(!env.field().contains(CellCoord::new(0, 2)));
        retrace_walk(&mut env, &outcome).unwrap();
        assert_eq!(env.position(), CellCoord::new(0, 0));
        assert!(env.carrying());
        let expected = field_of(&[(0, 0), (0, 1), (0, 2), (0, 3), (-1, 3), (-2, 3)]);
        assert_eq!(*env.field(), expected);
    }

    #[test]
    fn elbow_with_hanging_arm_stays_connected() {
        // A vertical line whose bottom cell also carries a westward arm: the
        // naive dead-end shift would cut the arm loose, so the walk must
        // fall back to a removable cell.
        let cells = [(0, 0), (0, 1), (0, 2), (0, 3), (-1, 0), (-2, 0), (-3, 0)];
        let entry = CellCoord::new(0, 3);
        let mut env = Env::new(field_of(&cells), entry);
        env.face(Heading::South);
        let before: HashSet<CellCoord> = env.field().sorted_cells().into_iter().collect();
        let outcome = run_search_walk(&mut env).unwrap();
        retrace_walk(&mut env, &outcome).unwrap();
        assert!(env.carrying());
        let after = env.field().clone();
        assert_eq!(after.len(), cells.len() - 1);
        assert!(after.is_connected());
        // Exactly one cell vanished, nothing else moved.
        let after_set: HashSet<CellCoord> = after.sorted_cells().into_iter().collect();
        assert_eq!(before.difference(&after_set).count(), 1);
        assert_eq!(after_set.difference(&before).count(), 0);
    }

    #[test]
    fn thick_block_corner_is_picked_plainly() {
        // 3x3 solid block entered at the middle of its north edge: the walk
        // slides along the edge and removes the corner, which the full
        // diagonal keeps connected.
        let cells = [
            (0, 0),
            (1, 0),
            (2, 0),
            (0, -1),
            (1, -1),
            (2, -1),
            (0, -2),
            (1, -2),
            (2, -2),
        ];
        let entry = CellCoord::new(1, 0);
        let mut env = Env::new(field_of(&cells), entry);
        env.face(Heading::South);
        let outcome = run_search_walk(&mut env).unwrap();
        retrace_walk(&mut env, &outcome).unwrap();
        assert!(env.carrying());
        assert_eq!(env.field().len(), 8);
        assert!(env.field().is_connected());
        assert_eq!(env.position(), entry);
    }

    #[test]
    fn ring_component_resolves_by_fallback_or_corner() {
        // A hollow 3x3 ring has no leaf; every cell is removable, so however
        // the walk ends it must free exactly one brick and keep the ring
        // connected.
        let cells = [
            (0, 0),
            (1, 0),
            (2, 0),
            (0, -1),
            (2, -1),
            (0, -2),
            (1, -2),
            (2, -2),
        ];
        let entry = CellCoord::new(0, 0);
        let mut env = Env::new(field_of(&cells), entry);
        env.face(Heading::East);
        let outcome = run_search_walk(&mut env).unwrap();
        retrace_walk(&mut env, &outcome).unwrap();
        assert!(env.carrying());
        assert_eq!(env.field().len(), 7);
        assert!(env.field().is_connected());
        assert_eq!(env.position(), entry);
    }

    #[test]
    fn two_cell_component_shifts_or_picks_cleanly() {
        let cells = [(0, 0), (0, 1)];
        let (mut env, outcome) = walk_from(&cells, (0, 0), Heading::North);
        retrace_walk(&mut env, &outcome).unwrap();
        assert!(env.carrying());
        assert_eq!(env.field().len(), 1);
        assert_eq!(env.position(), CellCoord::new(0, 0));
    }

    #[test]
    fn random_components_always_yield_one_brick() {
        use crate::grid::gen_random_connected;
        for seed in 0..300u64 {
            let z = 2 + seed % 30;
            let field = gen_random_connected(z, 40_000 + seed);
            let entry = field.sorted_cells()[0];
            let before: HashSet<CellCoord> = field.sorted_cells().into_iter().collect();
            let mut env = Env::new(field, entry);
            let outcome = run_search_walk(&mut env).unwrap();
            retrace_walk(&mut env, &outcome).unwrap();
            assert!(env.carrying(), "seed {seed}");
            assert_eq!(env.position(), entry, "seed {seed}");
            let after: HashSet<CellCoord> = env.field().sorted_cells().into_iter().collect();
            assert!(env.field().is_connected(), "seed {seed}");
            match outcome.extraction {
                Extraction::Leaf { cell } | Extraction::Fallback { cell } => {
                    let mut want = before.clone();
                    want.remove(&cell);
                    assert_eq!(after, want, "seed {seed}");
                }
                Extraction::Shift {
                    picked,
                    relocated_from,
                    relocated_to,
                } => {
                    let mut want = before.clone();
                    want.remove(&picked);
                    want.remove(&relocated_from);
                    want.insert(relocated_to);
                    assert_eq!(after, want, "seed {seed}");
                }
            }
            // The walk length stays proportional to the component span.
            let span = Field::from_cells(before.iter().copied()).span().unwrap();
            assert!(
                outcome.steps <= 12 * span.max(1) + 4,
                "seed {seed}: {} steps for span {span}",
                outcome.steps
            );
        }
    }
}
