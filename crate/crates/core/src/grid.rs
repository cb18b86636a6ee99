//! Grid geometry and brick fields.
//!
//! The world is an infinite square grid of cells addressed by integer
//! coordinates (`x` grows east, `y` grows north). A [`Field`] is the finite
//! set of cells that currently hold a brick. Only the four rectilinear
//! neighbours of a cell count as adjacent; diagonals never connect.
//!
//! Besides membership and connectivity queries, this module provides the
//! deterministic field generators and the text/JSON serialization formats
//! used by the command-line tools.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::{SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// A single grid cell. `x` increases to the east, `y` to the north.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct CellCoord {
    pub x: i64,
    pub y: i64,
}

impl CellCoord {
    pub fn new(x: i64, y: i64) -> Self {
        CellCoord { x, y }
    }

    /// The cell displaced by `(dx, dy)` from this one.
    pub fn offset(self, dx: i64, dy: i64) -> Self {
        CellCoord::new(self.x + dx, self.y + dy)
    }

    /// The four rectilinear neighbours, in N, E, S, W order.
    pub fn neighbors(self) -> [CellCoord; 4] {
        [
            self.offset(0, 1),
            self.offset(1, 0),
            self.offset(0, -1),
            self.offset(-1, 0),
        ]
    }
}

impl fmt::Display for CellCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

// Cells serialize as `[x, y]` pairs so field dumps stay compact.
impl Serialize for CellCoord {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(2))?;
        seq.serialize_element(&self.x)?;
        seq.serialize_element(&self.y)?;
        seq.end()
    }
}

impl<'de> Deserialize<'de> for CellCoord {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct PairVisitor;

        impl<'de> Visitor<'de> for PairVisitor {
            type Value = CellCoord;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a two-element array [x, y]")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<CellCoord, A::Error> {
                let x = seq
                    .next_element()?
                    .ok_or_else(|| serde::de::Error::invalid_length(0, &self))?;
                let y = seq
                    .next_element()?
                    .ok_or_else(|| serde::de::Error::invalid_length(1, &self))?;
                if seq.next_element::<i64>()?.is_some() {
                    return Err(serde::de::Error::invalid_length(3, &self));
                }
                Ok(CellCoord::new(x, y))
            }
        }

        deserializer.deserialize_seq(PairVisitor)
    }
}

/// Manhattan distance between two cells.
pub fn manhattan(a: CellCoord, b: CellCoord) -> u64 {
    a.x.abs_diff(b.x) + a.y.abs_diff(b.y)
}

/// Canonical scan order: topmost row first, leftmost cell first within a row.
///
/// Every deterministic tie-break in the crate funnels through this ordering.
pub fn scan_cmp(a: &CellCoord, b: &CellCoord) -> std::cmp::Ordering {
    b.y.cmp(&a.y).then(a.x.cmp(&b.x))
}

#[derive(Error, Debug, PartialEq, Eq)]
pub enum GridError {
    #[error("undefined span: field is empty")]
    UndefinedSpan,
    #[error("components overlap: both contain {0}")]
    ComponentOverlap(CellCoord),
    #[error("invalid rough disc radius {radius}: must be at least 1")]
    InvalidRadius { radius: i64 },
    #[error("invalid rough disc size {size} for radius {radius}: must lie in [{min}, {max}]")]
    InvalidRoughDiscSize {
        radius: i64,
        size: u64,
        min: u64,
        max: u64,
    },
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate cell {0} in field description")]
    DuplicateCell(CellCoord),
}

/// A finite set of full cells on the infinite grid.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Field {
    cells: HashSet<CellCoord>,
}

impl Field {
    pub fn new() -> Self {
        Field::default()
    }

    pub fn from_cells<I: IntoIterator<Item = CellCoord>>(cells: I) -> Self {
        Field {
            cells: cells.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, cell: CellCoord) -> bool {
        self.cells.contains(&cell)
    }

    /// Inserts a brick; returns false if the cell was already full.
    pub fn insert(&mut self, cell: CellCoord) -> bool {
        self.cells.insert(cell)
    }

    /// Removes a brick; returns false if the cell was already empty.
    pub fn remove(&mut self, cell: CellCoord) -> bool {
        self.cells.remove(&cell)
    }

    /// All cells in canonical scan order (top row first, west to east).
    pub fn sorted_cells(&self) -> Vec<CellCoord> {
        let mut cells: Vec<CellCoord> = self.cells.iter().copied().collect();
        cells.sort_by(scan_cmp);
        cells
    }

    /// Bounding box as `(min_x, min_y, max_x, max_y)`, or None when empty.
    pub fn bounds(&self) -> Option<(i64, i64, i64, i64)> {
        let mut iter = self.cells.iter();
        let first = iter.next()?;
        let mut bounds = (first.x, first.y, first.x, first.y);
        for c in iter {
            bounds.0 = bounds.0.min(c.x);
            bounds.1 = bounds.1.min(c.y);
            bounds.2 = bounds.2.max(c.x);
            bounds.3 = bounds.3.max(c.y);
        }
        Some(bounds)
    }

    /// Maximum Manhattan distance between any two cells.
    ///
    /// Computed in O(n) by rotating coordinates 45 degrees: with `u = x + y`
    /// and `v = x - y`, the Manhattan distance of a pair equals
    /// `max(|du|, |dv|)`, so the extremes of `u` and `v` decide the span.
    pub fn span(&self) -> Result<u64, GridError> {
        let mut iter = self.cells.iter();
        let first = iter.next().ok_or(GridError::UndefinedSpan)?;
        let (mut min_u, mut max_u) = (first.x + first.y, first.x + first.y);
        let (mut min_v, mut max_v) = (first.x - first.y, first.x - first.y);
        for c in iter {
            let (u, v) = (c.x + c.y, c.x - c.y);
            min_u = min_u.min(u);
            max_u = max_u.max(u);
            min_v = min_v.min(v);
            max_v = max_v.max(v);
        }
        Ok((max_u.abs_diff(min_u)).max(max_v.abs_diff(min_v)))
    }

    /// Maximal 4-connected components, in deterministic order: the component
    /// whose scan-first cell comes earliest is listed first, and each
    /// component's cells are themselves in scan order.
    pub fn components(&self) -> Vec<Component> {
        let mut seen: HashSet<CellCoord> = HashSet::with_capacity(self.cells.len());
        let mut components = Vec::new();
        for start in self.sorted_cells() {
            if seen.contains(&start) {
                continue;
            }
            let mut cells = Vec::new();
            let mut queue = VecDeque::from([start]);
            seen.insert(start);
            while let Some(cell) = queue.pop_front() {
                cells.push(cell);
                for n in cell.neighbors() {
                    if self.cells.contains(&n) && seen.insert(n) {
                        queue.push_back(n);
                    }
                }
            }
            cells.sort_by(scan_cmp);
            components.push(Component { cells });
        }
        components
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }

    /// The component containing `cell`, or None when the cell is empty.
    /// Cells come back in scan order.
    pub fn component_of(&self, cell: CellCoord) -> Option<Component> {
        if !self.cells.contains(&cell) {
            return None;
        }
        let mut seen = HashSet::from([cell]);
        let mut queue = VecDeque::from([cell]);
        let mut cells = Vec::new();
        while let Some(c) = queue.pop_front() {
            cells.push(c);
            for n in c.neighbors() {
                if self.cells.contains(&n) && seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        cells.sort_by(scan_cmp);
        Some(Component { cells })
    }
}

impl Serialize for Field {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            cells: Vec<CellCoord>,
        }
        Repr {
            cells: self.sorted_cells(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Field {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            cells: Vec<CellCoord>,
        }
        let repr = Repr::deserialize(deserializer)?;
        let mut field = Field::new();
        for cell in repr.cells {
            if !field.insert(cell) {
                return Err(serde::de::Error::custom(GridError::DuplicateCell(cell)));
            }
        }
        Ok(field)
    }
}

/// One maximal 4-connected piece of a field, cells in scan order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub cells: Vec<CellCoord>,
}

impl Component {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Minimum Manhattan distance over all pairs of cells drawn from `a` and `b`.
pub fn min_distance(a: &Component, b: &Component) -> Result<u64, GridError> {
    let b_set: HashSet<CellCoord> = b.cells.iter().copied().collect();
    if let Some(shared) = a.cells.iter().find(|c| b_set.contains(c)) {
        return Err(GridError::ComponentOverlap(*shared));
    }
    let mut best = u64::MAX;
    for &p in &a.cells {
        for &q in &b.cells {
            best = best.min(manhattan(p, q));
        }
    }
    Ok(best)
}

/// Number of bricks in the filled Manhattan ball of radius `r`.
fn ball_size(r: i64) -> u64 {
    let r = r as u64;
    2 * r * r + 2 * r + 1
}

/// Generates a rough disc: the filled Manhattan ball of radius `r` around the
/// origin plus `z - (2r^2 + 2r + 1)` extra bricks on the circle of radius
/// `r + 1`, placed contiguously clockwise from due north starting at a
/// seed-chosen offset. Every extra cell touches the ball, so the result is
/// connected regardless of seed.
pub fn gen_rough_disc(r: i64, z: u64, seed: u64) -> Result<Field, GridError> {
    if r < 1 {
        return Err(GridError::InvalidRadius { radius: r });
    }
    let z1 = ball_size(r);
    let z2 = z1 + 2 * (r as u64) + 1;
    if z < z1 || z >= z2 {
        return Err(GridError::InvalidRoughDiscSize {
            radius: r,
            size: z,
            min: z1,
            max: z2 - 1,
        });
    }
    let mut field = Field::new();
    for x in -r..=r {
        let rem = r - x.abs();
        for y in -rem..=rem {
            field.insert(CellCoord::new(x, y));
        }
    }
    let d = r + 1;
    let ring_len = 4 * d;
    let ring_cell = |i: i64| -> CellCoord {
        // Clockwise from (0, d): NE, SE, SW, NW quadrant edges in turn.
        match i / d {
            0 => CellCoord::new(i, d - i),
            1 => CellCoord::new(d - (i - d), -(i - d)),
            2 => CellCoord::new(-(i - 2 * d), -(d - (i - 2 * d))),
            _ => CellCoord::new(-(d - (i - 3 * d)), i - 3 * d),
        }
    };
    let start = (seed % ring_len as u64) as i64;
    for t in 0..(z - z1) as i64 {
        field.insert(ring_cell((start + t) % ring_len));
    }
    Ok(field)
}

/// Grows a connected field of exactly `z` cells from the origin by repeatedly
/// filling a uniformly chosen empty cell adjacent to the current shape.
/// Deterministic for a fixed seed.
pub fn gen_random_connected(z: u64, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field = Field::new();
    field.insert(CellCoord::new(0, 0));
    // Candidate frontier kept in a BTreeSet so that index-based sampling is
    // independent of hash iteration order.
    let mut frontier: BTreeSet<CellCoord> = CellCoord::new(0, 0).neighbors().into_iter().collect();
    while (field.len() as u64) < z {
        let pick = rng.gen_range(0..frontier.len());
        let cell = *frontier.iter().nth(pick).expect("frontier is nonempty");
        frontier.remove(&cell);
        field.insert(cell);
        for n in cell.neighbors() {
            if !field.contains(n) {
                frontier.insert(n);
            }
        }
    }
    field
}

/// Parses the text field format: a header line `origin <x> <y>` naming the
/// grid coordinate of the first character of the next line, then one row per
/// line (`#` full, `.` empty), running north to south. Trailing `.` may be
/// omitted.
pub fn parse_field(text: &str) -> Result<Field, GridError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(GridError::Parse {
        line: 1,
        message: "missing `origin <x> <y>` header".into(),
    })?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    let (ox, oy) = match parts.as_slice() {
        ["origin", x, y] => {
            let parse = |s: &str, what: &str| {
                s.parse::<i64>().map_err(|_| GridError::Parse {
                    line: 1,
                    message: format!("invalid {what} coordinate `{s}`"),
                })
            };
            (parse(x, "x")?, parse(y, "y")?)
        }
        _ => {
            return Err(GridError::Parse {
                line: 1,
                message: format!("expected `origin <x> <y>`, found `{header}`"),
            })
        }
    };
    let mut field = Field::new();
    for (row, line) in lines.enumerate() {
        let line = line.trim_end();
        for (col, ch) in line.chars().enumerate() {
            match ch {
                '#' => {
                    field.insert(CellCoord::new(ox + col as i64, oy - row as i64));
                }
                '.' => {}
                other => {
                    return Err(GridError::Parse {
                        line: row + 2,
                        message: format!("illegal character `{other}`"),
                    })
                }
            }
        }
    }
    Ok(field)
}

/// Renders a field in the text format accepted by [`parse_field`].
pub fn render_field(field: &Field) -> String {
    let Some((min_x, min_y, _, max_y)) = field.bounds() else {
        return "origin 0 0\n".to_string();
    };
    let mut out = format!("origin {min_x} {max_y}\n");
    let mut y = max_y;
    while y >= min_y {
        let mut row = String::new();
        let mut pending_dots = 0usize;
        let mut x = min_x;
        let max_x = field.bounds().expect("nonempty").2;
        while x <= max_x {
            if field.contains(CellCoord::new(x, y)) {
                row.extend(std::iter::repeat('.').take(pending_dots));
                pending_dots = 0;
                row.push('#');
            } else {
                pending_dots += 1;
            }
            x += 1;
        }
        out.push_str(&row);
        out.push('\n');
        y -= 1;
    }
    out
}

/// Parses the JSON field format `{"cells": [[x, y], ...]}`. Duplicate cells
/// are rejected.
pub fn parse_field_json(text: &str) -> Result<Field, GridError> {
    serde_json::from_str(text).map_err(|e| GridError::Parse {
        line: e.line(),
        message: e.to_string(),
    })
}

/// Renders a field as JSON with cells in scan order.
pub fn render_field_json(field: &Field) -> String {
    serde_json::to_string(field).expect("field serialization cannot fail")
}
