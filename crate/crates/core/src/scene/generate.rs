use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Cell, Role, Scene, SceneError, DEFAULT_CELL_SIZE, PLACEMENT_RETRIES};

/// Knobs for [`generate_scene`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenParams {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub target_classes: Vec<String>,
    pub parent_classes: Vec<String>,
    pub distractor_classes: Vec<String>,
    pub n_targets: usize,
    pub n_parents: usize,
    pub n_distractors: usize,
    /// Probability that a target is dropped within two cells of a parent.
    pub rho: f64,
    pub wall_segments: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            width: 16,
            height: 16,
            cell_size: DEFAULT_CELL_SIZE,
            target_classes: vec!["mug".into(), "remote".into()],
            parent_classes: vec!["table".into(), "sofa".into(), "counter".into()],
            distractor_classes: vec!["plant".into()],
            n_targets: 2,
            n_parents: 3,
            n_distractors: 1,
            rho: 0.8,
            wall_segments: 3,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: &str| Err(SceneError::InvalidParams(m.to_string()));
        if self.width < 8 || self.height < 8 {
            return bad("grid must be at least 8x8");
        }
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return bad("cell_size must be positive");
        }
        if self.target_classes.is_empty() || self.n_targets == 0 {
            return bad("need at least one target class and instance");
        }
        if self.parent_classes.is_empty() || self.n_parents == 0 {
            return bad("need at least one parent class and instance");
        }
        if self.n_distractors > 0 && self.distractor_classes.is_empty() {
            return bad("distractors requested without distractor classes");
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return bad("rho must lie in [0, 1]");
        }
        Ok(())
    }
}

const PARENT_HEIGHT: (f64, f64) = (0.7, 1.2);
const TARGET_HEIGHT: (f64, f64) = (0.15, 0.45);
const DISTRACTOR_HEIGHT: (f64, f64) = (0.3, 0.9);

const PARENT_SHAPES: [(usize, usize); 4] = [(1, 1), (2, 1), (1, 2), (2, 2)];
const DISTRACTOR_SHAPES: [(usize, usize); 2] = [(1, 1), (2, 1)];

/// Builds a scene deterministically from `(seed, params)`.
///
/// Order of placement: wall segments, parents, targets, distractors. Every
/// placement must keep free space 4-connected and leave each target with at
/// least one free neighbouring cell to approach from.
pub fn generate_scene(seed: u64, params: &GenParams) -> Result<Scene, SceneError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = Scene::empty(
        format!("scene-{seed:016x}"),
        params.width,
        params.height,
        params.cell_size,
    );
    scene.seed = seed;

    for i in 0..params.wall_segments {
        place_wall_segment(&mut scene, &mut rng).ok_or_else(|| SceneError::PlacementFailure {
            what: format!("wall segment {i}"),
            attempts: PLACEMENT_RETRIES,
        })?;
    }

    let mut parent_ids = Vec::with_capacity(params.n_parents);
    for i in 0..params.n_parents {
        let class = &params.parent_classes[i % params.parent_classes.len()];
        let height = rng.gen_range(PARENT_HEIGHT.0..PARENT_HEIGHT.1);
        let id = place_anywhere(&mut scene, &mut rng, &PARENT_SHAPES, class, Role::Parent, height)
            .ok_or_else(|| failure(class, Role::Parent))?;
        parent_ids.push(id);
    }

    for i in 0..params.n_targets {
        let class = &params.target_classes[i % params.target_classes.len()];
        let height = rng.gen_range(TARGET_HEIGHT.0..TARGET_HEIGHT.1);
        let near = rng.gen_bool(params.rho);
        let placed = if near {
            let anchor = *parent_ids.choose(&mut rng).expect("at least one parent");
            place_near(&mut scene, &mut rng, anchor, class, height)
        } else {
            place_anywhere(&mut scene, &mut rng, &[(1, 1)], class, Role::Target, height)
        };
        placed.ok_or_else(|| failure(class, Role::Target))?;
    }

    for i in 0..params.n_distractors {
        let class = &params.distractor_classes[i % params.distractor_classes.len()];
        let height = rng.gen_range(DISTRACTOR_HEIGHT.0..DISTRACTOR_HEIGHT.1);
        place_anywhere(&mut scene, &mut rng, &DISTRACTOR_SHAPES, class, Role::Distractor, height)
            .ok_or_else(|| failure(class, Role::Distractor))?;
    }

    scene.validate()?;
    Ok(scene)
}

fn failure(class: &str, role: Role) -> SceneError {
    SceneError::PlacementFailure {
        what: format!("{role:?} '{class}'").to_lowercase(),
        attempts: PLACEMENT_RETRIES,
    }
}

fn place_wall_segment(scene: &mut Scene, rng: &mut ChaCha8Rng) -> Option<()> {
    for _ in 0..PLACEMENT_RETRIES {
        let horizontal = rng.gen_bool(0.5);
        let len = rng.gen_range(2..=5);
        let x0 = rng.gen_range(1..scene.width - 1);
        let y0 = rng.gen_range(1..scene.height - 1);
        let cells: Vec<(usize, usize)> = (0..len)
            .map(|i| if horizontal { (x0 + i, y0) } else { (x0, y0 + i) })
            .collect();
        if !cells.iter().all(|&(x, y)| interior(scene, x, y) && scene.is_free(x, y)) {
            continue;
        }
        let saved = scene.occupancy.clone();
        for &(x, y) in &cells {
            scene.set_wall(x, y);
        }
        if layout_ok(scene) {
            return Some(());
        }
        scene.occupancy = saved;
    }
    None
}

fn place_anywhere(
    scene: &mut Scene,
    rng: &mut ChaCha8Rng,
    shapes: &[(usize, usize)],
    class: &str,
    role: Role,
    height: f64,
) -> Option<u32> {
    for _ in 0..PLACEMENT_RETRIES {
        let (w, h) = *shapes.choose(rng).expect("non-empty shape list");
        let x0 = rng.gen_range(1..scene.width - 1);
        let y0 = rng.gen_range(1..scene.height - 1);
        let cells: Vec<(usize, usize)> = (0..h)
            .flat_map(|dy| (0..w).map(move |dx| (x0 + dx, y0 + dy)))
            .collect();
        if let Some(id) = try_place(scene, cells, class, role, height) {
            return Some(id);
        }
    }
    None
}

/// Drops a one-cell target within Chebyshev distance 2 of the anchor parent.
fn place_near(
    scene: &mut Scene,
    rng: &mut ChaCha8Rng,
    anchor: u32,
    class: &str,
    height: f64,
) -> Option<u32> {
    let parent_cells = scene.objects[anchor as usize].cells.clone();
    let mut candidates: Vec<(usize, usize)> = scene
        .free_cells()
        .filter(|&(x, y)| {
            parent_cells
                .iter()
                .any(|&(px, py)| x.abs_diff(px) <= 2 && y.abs_diff(py) <= 2)
        })
        .collect();
    candidates.shuffle(rng);
    candidates
        .into_iter()
        .take(PLACEMENT_RETRIES)
        .find_map(|c| try_place(scene, vec![c], class, Role::Target, height))
}

fn try_place(
    scene: &mut Scene,
    cells: Vec<(usize, usize)>,
    class: &str,
    role: Role,
    height: f64,
) -> Option<u32> {
    if !cells.iter().all(|&(x, y)| interior(scene, x, y) && scene.is_free(x, y)) {
        return None;
    }
    let id = scene.add_object(class, role, cells, height);
    if layout_ok(scene) {
        Some(id)
    } else {
        let obj = scene.objects.pop().expect("just pushed");
        for (x, y) in obj.cells {
            scene.occupancy[y * scene.width + x] = Cell::Free;
        }
        None
    }
}

fn interior(scene: &Scene, x: usize, y: usize) -> bool {
    x >= 1 && y >= 1 && x + 1 < scene.width && y + 1 < scene.height
}

fn layout_ok(scene: &Scene) -> bool {
    scene.free_space_connected()
        && scene
            .objects_with_role(Role::Target)
            .all(|t| scene.has_free_neighbour(t))
}
