//! Grid-world scenes: occupancy, placed objects and agent kinematics.
//!
//! A [`Scene`] is immutable once generated. Coordinates are `(x, y)` cells with
//! `y` growing downwards (row-major), so `Heading::N` points to decreasing `y`.

mod generate;
pub mod goal;
mod io;

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generate::{generate_scene, GenParams};
pub use io::SceneDoc;

/// Grid pitch in meters.
pub const DEFAULT_CELL_SIZE: f64 = 0.25;

/// Attempts per object (or wall segment) before generation gives up.
pub const PLACEMENT_RETRIES: usize = 1000;

pub type ObjectId = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("could not place {what} after {attempts} attempts")]
    PlacementFailure { what: String, attempts: usize },
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error("malformed scene: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Free,
    Wall,
    Object(ObjectId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Target,
    Parent,
    Distractor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub object_id: ObjectId,
    pub class: String,
    pub role: Role,
    pub cells: Vec<(usize, usize)>,
    /// Meters.
    pub physical_height: f64,
    /// Meters, longest footprint side.
    pub physical_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Heading {
    N,
    E,
    S,
    W,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::N, Heading::E, Heading::S, Heading::W];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Heading {
        Heading::ALL[i % 4]
    }

    pub fn right(self) -> Heading {
        Heading::from_index(self.index() + 1)
    }

    pub fn left(self) -> Heading {
        Heading::from_index(self.index() + 3)
    }

    /// Unit cell offset along this heading.
    pub fn delta(self) -> (isize, isize) {
        match self {
            Heading::N => (0, -1),
            Heading::E => (1, 0),
            Heading::S => (0, 1),
            Heading::W => (-1, 0),
        }
    }
}

impl fmt::Display for Heading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Heading::N => "N",
            Heading::E => "E",
            Heading::S => "S",
            Heading::W => "W",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgentPose {
    pub x: usize,
    pub y: usize,
    pub heading: Heading,
}

impl AgentPose {
    pub fn new(x: usize, y: usize, heading: Heading) -> Self {
        AgentPose { x, y, heading }
    }
}

impl fmt::Display for AgentPose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.x, self.y, self.heading)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    MoveAhead,
    RotateLeft,
    RotateRight,
    Done,
}

impl Action {
    /// Fixed order; also the greedy tie-break order.
    pub const ALL: [Action; 4] = [
        Action::MoveAhead,
        Action::RotateLeft,
        Action::RotateRight,
        Action::Done,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: String,
    pub width: usize,
    pub height: usize,
    /// Meters per cell.
    pub cell_size: f64,
    pub occupancy: Vec<Cell>,
    pub objects: Vec<ObjectInstance>,
    pub seed: u64,
}

impl Scene {
    /// An empty room: border walls, free interior, no objects.
    pub fn empty(id: impl Into<String>, width: usize, height: usize, cell_size: f64) -> Scene {
        let mut occupancy = vec![Cell::Free; width * height];
        for y in 0..height {
            for x in 0..width {
                if x == 0 || y == 0 || x + 1 == width || y + 1 == height {
                    occupancy[y * width + x] = Cell::Wall;
                }
            }
        }
        Scene {
            id: id.into(),
            width,
            height,
            cell_size,
            occupancy,
            objects: Vec::new(),
            seed: 0,
        }
    }

    pub fn cell(&self, x: usize, y: usize) -> Cell {
        self.occupancy[y * self.width + x]
    }

    /// Out-of-bounds coordinates read as walls.
    pub fn cell_at(&self, x: isize, y: isize) -> Cell {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            Cell::Wall
        } else {
            self.cell(x as usize, y as usize)
        }
    }

    pub fn is_free(&self, x: usize, y: usize) -> bool {
        x < self.width && y < self.height && self.cell(x, y) == Cell::Free
    }

    pub fn set_wall(&mut self, x: usize, y: usize) {
        self.occupancy[y * self.width + x] = Cell::Wall;
    }

    /// Places an object, assigning it the next id. Cells must be free.
    pub fn add_object(
        &mut self,
        class: impl Into<String>,
        role: Role,
        cells: Vec<(usize, usize)>,
        physical_height: f64,
    ) -> ObjectId {
        let object_id = self.objects.len() as ObjectId;
        for &(x, y) in &cells {
            debug_assert!(self.is_free(x, y));
            self.occupancy[y * self.width + x] = Cell::Object(object_id);
        }
        let physical_width = footprint_extent(&cells) as f64 * self.cell_size;
        self.objects.push(ObjectInstance {
            object_id,
            class: class.into(),
            role,
            cells,
            physical_height,
            physical_width,
        });
        object_id
    }

    pub fn object(&self, id: ObjectId) -> Option<&ObjectInstance> {
        self.objects.get(id as usize).filter(|o| o.object_id == id)
    }

    pub fn objects_with_role(&self, role: Role) -> impl Iterator<Item = &ObjectInstance> {
        self.objects.iter().filter(move |o| o.role == role)
    }

    /// Sorted, deduplicated classes carrying `role`.
    pub fn classes(&self, role: Role) -> Vec<String> {
        let mut v: Vec<String> = self.objects_with_role(role).map(|o| o.class.clone()).collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn free_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.height)
            .flat_map(move |y| (0..self.width).map(move |x| (x, y)))
            .filter(move |&(x, y)| self.cell(x, y) == Cell::Free)
    }

    /// Number of (x, y, heading) slots; see [`Scene::pose_index`].
    pub fn pose_count(&self) -> usize {
        self.width * self.height * 4
    }

    pub fn pose_index(&self, pose: AgentPose) -> usize {
        (pose.y * self.width + pose.x) * 4 + pose.heading.index()
    }

    pub fn pose_from_index(&self, index: usize) -> AgentPose {
        let cell = index / 4;
        AgentPose::new(cell % self.width, cell / self.width, Heading::from_index(index % 4))
    }

    /// Every valid pose, in pose-index order.
    pub fn poses(&self) -> impl Iterator<Item = AgentPose> + '_ {
        self.free_cells()
            .flat_map(|(x, y)| Heading::ALL.into_iter().map(move |h| AgentPose::new(x, y, h)))
    }

    /// Whether all free cells form a single 4-connected component.
    pub fn free_space_connected(&self) -> bool {
        let Some(start) = self.free_cells().next() else {
            return false;
        };
        let total = self.free_cells().count();
        let mut seen = vec![false; self.width * self.height];
        let mut queue = VecDeque::from([start]);
        seen[start.1 * self.width + start.0] = true;
        let mut reached = 1;
        while let Some((x, y)) = queue.pop_front() {
            for (nx, ny) in neighbours4(x, y, self.width, self.height) {
                let i = ny * self.width + nx;
                if !seen[i] && self.cell(nx, ny) == Cell::Free {
                    seen[i] = true;
                    reached += 1;
                    queue.push_back((nx, ny));
                }
            }
        }
        reached == total
    }

    /// Checks the structural invariants every scene must satisfy.
    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |msg: String| Err(SceneError::Malformed(msg));
        if self.occupancy.len() != self.width * self.height {
            return bad("occupancy size mismatch".into());
        }
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return bad(format!("cell size {} is not positive", self.cell_size));
        }
        for y in 0..self.height {
            for x in 0..self.width {
                let border = x == 0 || y == 0 || x + 1 == self.width || y + 1 == self.height;
                if border && self.cell(x, y) != Cell::Wall {
                    return bad(format!("border cell ({x},{y}) is not a wall"));
                }
                if let Cell::Object(id) = self.cell(x, y) {
                    match self.object(id) {
                        Some(o) if o.cells.contains(&(x, y)) => {}
                        _ => return bad(format!("cell ({x},{y}) names unknown object {id}")),
                    }
                }
            }
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.object_id as usize != i {
                return bad(format!("object ids must be dense, found {} at {i}", o.object_id));
            }
            if o.cells.is_empty() {
                return bad(format!("object {} has no cells", o.object_id));
            }
            for &(x, y) in &o.cells {
                if x >= self.width || y >= self.height || self.cell(x, y) != Cell::Object(o.object_id) {
                    return bad(format!("object {} cell ({x},{y}) not marked", o.object_id));
                }
            }
            if !cells_contiguous(&o.cells) {
                return bad(format!("object {} cells are not 4-connected", o.object_id));
            }
            if !(o.physical_height > 0.0) {
                return bad(format!("object {} has non-positive height", o.object_id));
            }
        }
        let min_parent = self
            .objects_with_role(Role::Parent)
            .map(|o| o.physical_height)
            .fold(f64::INFINITY, f64::min);
        let max_target = self
            .objects_with_role(Role::Target)
            .map(|o| o.physical_height)
            .fold(f64::NEG_INFINITY, f64::max);
        if min_parent < max_target {
            return bad("a parent is shorter than a target".into());
        }
        if self.objects_with_role(Role::Target).next().is_none() {
            return bad("scene has no target".into());
        }
        if !self.free_space_connected() {
            return bad("free space is not connected".into());
        }
        for t in self.objects_with_role(Role::Target) {
            if !self.has_free_neighbour(t) {
                return bad(format!("target {} has no free approach cell", t.object_id));
            }
        }
        Ok(())
    }

    pub(crate) fn has_free_neighbour(&self, obj: &ObjectInstance) -> bool {
        obj.cells.iter().any(|&(x, y)| {
            neighbours4(x, y, self.width, self.height).any(|(nx, ny)| self.cell(nx, ny) == Cell::Free)
        })
    }
}

/// Applies `action` to `pose`. Collisions leave the pose unchanged.
pub fn step(scene: &Scene, pose: AgentPose, action: Action) -> AgentPose {
    match action {
        Action::MoveAhead => {
            let (dx, dy) = pose.heading.delta();
            let nx = pose.x as isize + dx;
            let ny = pose.y as isize + dy;
            if scene.cell_at(nx, ny) == Cell::Free {
                AgentPose::new(nx as usize, ny as usize, pose.heading)
            } else {
                pose
            }
        }
        Action::RotateLeft => AgentPose::new(pose.x, pose.y, pose.heading.left()),
        Action::RotateRight => AgentPose::new(pose.x, pose.y, pose.heading.right()),
        Action::Done => pose,
    }
}

pub(crate) fn neighbours4(
    x: usize,
    y: usize,
    width: usize,
    height: usize,
) -> impl Iterator<Item = (usize, usize)> {
    Heading::ALL.into_iter().filter_map(move |h| {
        let (dx, dy) = h.delta();
        let nx = x as isize + dx;
        let ny = y as isize + dy;
        (nx >= 0 && ny >= 0 && (nx as usize) < width && (ny as usize) < height)
            .then_some((nx as usize, ny as usize))
    })
}

fn cells_contiguous(cells: &[(usize, usize)]) -> bool {
    let mut seen = vec![false; cells.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        let (x, y) = cells[i];
        for (j, &(ox, oy)) in cells.iter().enumerate() {
            if !seen[j] && x.abs_diff(ox) + y.abs_diff(oy) == 1 {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

fn footprint_extent(cells: &[(usize, usize)]) -> usize {
    let span = |f: fn(&(usize, usize)) -> usize| {
        let lo = cells.iter().map(f).min().unwrap_or(0);
        let hi = cells.iter().map(f).max().unwrap_or(0);
        hi - lo + 1
    };
    span(|c| c.0).max(span(|c| c.1))
}
