//! Column raycaster producing a metric depth buffer and per-object boxes.
//!
//! One ray per image column is marched through the grid (DDA). Walls fill the
//! whole column; the first object hit contributes a vertical span centred on
//! the horizon whose height follows the pinhole projection of its physical
//! height. Distances are perpendicular to the image plane.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{AgentPose, Cell, ObjectId, Role, Scene};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensorError {
    #[error("projection distance must be positive, got {0}")]
    DegenerateDistance(f64),
    #[error("empty region")]
    EmptyRegion,
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Camera {
    /// Degrees. The vertical field of view is the same.
    pub horizontal_fov: f64,
    pub columns: usize,
    pub rows: usize,
    /// Meters; depth is clamped to this.
    pub max_range: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Camera {
            horizontal_fov: 90.0,
            columns: 64,
            rows: 64,
            max_range: 10.0,
        }
    }
}

impl Camera {
    pub fn validate(&self) -> Result<(), SensorError> {
        if self.columns < 8 || self.rows < 8 {
            return Err(SensorError::InvalidCamera("need at least 8x8 pixels".into()));
        }
        if !(self.horizontal_fov > 0.0 && self.horizontal_fov < 180.0) {
            return Err(SensorError::InvalidCamera("fov must lie in (0, 180)".into()));
        }
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err(SensorError::InvalidCamera("max_range must be positive".into()));
        }
        Ok(())
    }

    /// tan(fov/2): half-width of the image plane at unit distance.
    pub fn half_plane(&self) -> f64 {
        (self.horizontal_fov.to_radians() / 2.0).tan()
    }

    /// Focal length in pixels for the vertical axis.
    pub fn focal_px(&self) -> f64 {
        (self.rows as f64 / 2.0) / self.half_plane()
    }

    /// Normalised image-plane coordinate of a column centre, in (-1, 1).
    pub fn column_offset(&self, col: usize) -> f64 {
        2.0 * (col as f64 + 0.5) / self.columns as f64 - 1.0
    }

    /// Ray direction (cells, not normalised) through column `col` for an
    /// agent looking along `heading`. Its parameter equals perpendicular depth.
    pub fn ray(&self, pose: AgentPose, col: usize) -> (f64, f64) {
        let (dx, dy) = pose.heading.delta();
        let (dx, dy) = (dx as f64, dy as f64);
        // right-hand vector in a y-down grid
        let (rx, ry) = (-dy, dx);
        let s = self.half_plane() * self.column_offset(col);
        (dx + rx * s, dy + ry * s)
    }
}

/// Inclusive pixel rectangle; the averaging region for `mean_depth`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub col_min: usize,
    pub row_min: usize,
    pub col_max: usize,
    pub row_max: usize,
}

impl BBox {
    pub fn new(col_min: usize, row_min: usize, col_max: usize, row_max: usize) -> Self {
        BBox { col_min, row_min, col_max, row_max }
    }

    pub fn area(&self) -> u64 {
        ((self.col_max - self.col_min + 1) * (self.row_max - self.row_min + 1)) as u64
    }

    pub fn is_degenerate(&self) -> bool {
        self.col_max < self.col_min || self.row_max < self.row_min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub object_id: ObjectId,
    pub class: String,
    pub role: Role,
    pub bbox: BBox,
    /// Pixels².
    pub area: u64,
    /// Meters, averaged over every pixel of `bbox`.
    pub mean_depth: f64,
}

/// Row-major depth image in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthMap {
    pub rows: usize,
    pub columns: usize,
    pub data: Vec<f64>,
}

impl DepthMap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.columns + col]
    }

    pub fn contains(&self, bbox: &BBox) -> bool {
        bbox.col_max < self.columns && bbox.row_max < self.rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub depth: DepthMap,
    /// Sorted by object id.
    pub detections: Vec<Detection>,
}

/// Projected pixel height of an object, before rounding and clamping.
pub fn project_height_raw(physical_height: f64, d: f64, camera: &Camera) -> Result<f64, SensorError> {
    if !(d > 0.0) {
        return Err(SensorError::DegenerateDistance(d));
    }
    Ok(physical_height * camera.focal_px() / d)
}

pub fn project_height(physical_height: f64, d: f64, camera: &Camera) -> Result<usize, SensorError> {
    let raw = project_height_raw(physical_height, d, camera)?;
    Ok((raw.round() as usize).clamp(1, camera.rows))
}

pub fn bbox_area(det: &Detection) -> u64 {
    det.bbox.area()
}

pub fn mean_depth(depth: &DepthMap, bbox: &BBox) -> Result<f64, SensorError> {
    if bbox.is_degenerate() || !depth.contains(bbox) {
        return Err(SensorError::EmptyRegion);
    }
    let mut sum = 0.0;
    for row in bbox.row_min..=bbox.row_max {
        let line = &depth.data[row * depth.columns..(row + 1) * depth.columns];
        sum += line[bbox.col_min..=bbox.col_max].iter().sum::<f64>();
    }
    Ok(sum / bbox.area() as f64)
}

/// Rows covered by a span of `h` pixels centred on the horizon.
pub fn span_rows(h: usize, rows: usize) -> (usize, usize) {
    let top = (rows - h) / 2;
    (top, top + h - 1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ColumnHit {
    /// First object cell crossed before any wall, with its perpendicular distance in meters.
    pub object: Option<(ObjectId, f64)>,
    /// Perpendicular distance to the first wall, meters (unclamped).
    pub background: f64,
}

/// Grid traversal along one ray from the centre of the agent's cell.
pub(crate) fn cast_column(scene: &Scene, pose: AgentPose, ray: (f64, f64)) -> ColumnHit {
    let (px, py) = (pose.x as f64 + 0.5, pose.y as f64 + 0.5);
    let (rx, ry) = ray;
    let mut map_x = pose.x as isize;
    let mut map_y = pose.y as isize;
    let delta_x = if rx == 0.0 { f64::INFINITY } else { (1.0 / rx).abs() };
    let delta_y = if ry == 0.0 { f64::INFINITY } else { (1.0 / ry).abs() };
    let (step_x, mut side_x) = if rx < 0.0 {
        (-1, (px - map_x as f64) * delta_x)
    } else {
        (1, (map_x as f64 + 1.0 - px) * delta_x)
    };
    let (step_y, mut side_y) = if ry < 0.0 {
        (-1, (py - map_y as f64) * delta_y)
    } else {
        (1, (map_y as f64 + 1.0 - py) * delta_y)
    };

    let mut object = None;
    loop {
        let dist = if side_x < side_y {
            map_x += step_x;
            let d = side_x;
            side_x += delta_x;
            d
        } else {
            map_y += step_y;
            let d = side_y;
            side_y += delta_y;
            d
        };
        match scene.cell_at(map_x, map_y) {
            Cell::Free => {}
            Cell::Wall => {
                return ColumnHit {
                    object,
                    background: dist * scene.cell_size,
                }
            }
            Cell::Object(id) => {
                if object.is_none() {
                    object = Some((id, dist * scene.cell_size));
                }
            }
        }
    }
}

/// Renders the agent's view.
pub fn render(scene: &Scene, pose: AgentPose, camera: &Camera) -> Observation {
    let (cols, rows) = (camera.columns, camera.rows);
    let mut data = vec![0.0; rows * cols];
    let mut boxes: BTreeMap<ObjectId, BBox> = BTreeMap::new();

    for col in 0..cols {
        let hit = cast_column(scene, pose, camera.ray(pose, col));
        let background = hit.background.min(camera.max_range);
        for row in 0..rows {
            data[row * cols + col] = background;
        }
        let Some((id, d)) = hit.object else { continue };
        if d > camera.max_range {
            continue;
        }
        let obj = &scene.objects[id as usize];
        let h = project_height(obj.physical_height, d, camera).expect("hit distance is positive");
        let (top, bottom) = span_rows(h, rows);
        for row in top..=bottom {
            data[row * cols + col] = d;
        }
        boxes
            .entry(id)
            .and_modify(|b| {
                b.col_min = b.col_min.min(col);
                b.col_max = b.col_max.max(col);
                b.row_min = b.row_min.min(top);
                b.row_max = b.row_max.max(bottom);
            })
            .or_insert(BBox::new(col, top, col, bottom));
    }

    let depth = DepthMap { rows, columns: cols, data };
    let detections = boxes
        .into_iter()
        .map(|(id, bbox)| {
            let obj = &scene.objects[id as usize];
            Detection {
                object_id: id,
                class: obj.class.clone(),
                role: obj.role,
                bbox,
                area: bbox.area(),
                mean_depth: mean_depth(&depth, &bbox).expect("bbox inside image"),
            }
        })
        .collect();
    Observation { depth, detections }
}

/// Detections for every pose of a scene, rendered once.
///
/// Rendering is a pure function of `(scene, pose, camera)`, so episode loops
/// read from this table instead of re-rendering.
#[derive(Debug, Clone)]
pub struct ObservationCache {
    pub camera: Camera,
    detections: Vec<Vec<Detection>>,
}

impl ObservationCache {
    pub fn build(scene: &Scene, camera: &Camera) -> Self {
        let mut detections = vec![Vec::new(); scene.pose_count()];
        for pose in scene.poses() {
            detections[scene.pose_index(pose)] = render(scene, pose, camera).detections;
        }
        ObservationCache { camera: *camera, detections }
    }

    pub fn detections(&self, scene: &Scene, pose: AgentPose) -> &[Detection] {
        &self.detections[scene.pose_index(pose)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Heading, DEFAULT_CELL_SIZE};

    #[test]
    fn projection_hand_value() {
        let cam = Camera::default();
        assert_eq!(project_height(1.0, 2.0, &cam).unwrap(), 16);
    }

    #[test]
    fn projection_clamps_at_rows() {
        let cam = Camera::default();
        let f = cam.focal_px();
        let h = 64.0 * 1.5 / f;
        assert_eq!(project_height(h, 1.5, &cam).unwrap(), 64);
        assert_eq!(project_height(10.0, 0.1, &cam).unwrap(), 64);
        assert_eq!(project_height(0.001, 9.0, &cam).unwrap(), 1);
    }

    #[test]
    fn halving_distance_doubles_raw_height() {
        let cam = Camera::default();
        let a = project_height_raw(0.4, 3.0, &cam).unwrap();
        let b = project_height_raw(0.4, 1.5, &cam).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-12);
    }

    #[test]
    fn projection_rejects_non_positive_distance() {
        let cam = Camera::default();
        assert_eq!(
            project_height(1.0, 0.0, &cam),
            Err(SensorError::DegenerateDistance(0.0))
        );
        assert!(project_height(1.0, -1.0, &cam).is_err());
    }

    #[test]
    fn bbox_areas() {
        assert_eq!(BBox::new(0, 0, 0, 0).area(), 1);
        assert_eq!(BBox::new(2, 3, 5, 10).area(), 32);
    }

    #[test]
    fn mean_depth_cases() {
        let d = DepthMap { rows: 2, columns: 3, data: vec![3.0; 6] };
        assert_eq!(mean_depth(&d, &BBox::new(0, 0, 2, 1)).unwrap(), 3.0);
        let d = DepthMap { rows: 1, columns: 2, data: vec![2.0, 4.0] };
        assert_eq!(mean_depth(&d, &BBox::new(0, 0, 1, 0)).unwrap(), 3.0);
        assert_eq!(mean_depth(&d, &BBox::new(1, 0, 0, 0)), Err(SensorError::EmptyRegion));
        assert_eq!(mean_depth(&d, &BBox::new(0, 0, 2, 0)), Err(SensorError::EmptyRegion));
    }

    #[test]
    fn wall_ahead_one_meter() {
        // 0.4 m cells: wall face 2.5 cells from the agent's cell centre
        let scene = Scene::empty("w", 8, 8, 0.4);
        let obs = render(&scene, AgentPose::new(3, 3, Heading::N), &Camera::default());
        assert!(obs.detections.is_empty());
        for col in [31, 32] {
            assert!((obs.depth.get(32, col) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn object_dead_ahead_is_centred() {
        // 0.8 m cells: object face 2.5 cells = 2.0 m from the agent
        let mut scene = Scene::empty("o", 16, 16, 0.8);
        scene.add_object("desk", Role::Parent, vec![(7, 9)], 1.0);
        let obs = render(&scene, AgentPose::new(7, 12, Heading::N), &Camera::default());
        assert_eq!(obs.detections.len(), 1);
        let det = &obs.detections[0];
        assert_eq!(det.bbox.col_min + det.bbox.col_max, 63);
        assert_eq!(det.bbox.row_max - det.bbox.row_min + 1, 16);
        assert!((det.mean_depth - 2.0).abs() < 1e-12);
        assert_eq!(bbox_area(det), det.area);
    }

    #[test]
    fn nothing_behind_the_agent() {
        let mut scene = Scene::empty("b", 16, 16, DEFAULT_CELL_SIZE);
        scene.add_object("desk", Role::Parent, vec![(7, 12)], 1.0);
        let obs = render(&scene, AgentPose::new(7, 8, Heading::N), &Camera::default());
        assert!(obs.detections.is_empty());
    }

    #[test]
    fn objects_beyond_range_are_dropped() {
        let mut scene = Scene::empty("r", 40, 8, DEFAULT_CELL_SIZE);
        scene.add_object("desk", Role::Parent, vec![(1, 4)], 1.0);
        let cam = Camera { max_range: 5.0, ..Camera::default() };
        let obs = render(&scene, AgentPose::new(38, 4, Heading::W), &cam);
        assert!(obs.detections.is_empty());
        assert!(obs.depth.data.iter().all(|&d| d > 0.0 && d <= 5.0));
    }

    #[test]
    fn closer_is_never_smaller() {
        let mut scene = Scene::empty("m", 8, 32, DEFAULT_CELL_SIZE);
        scene.add_object("desk", Role::Parent, vec![(3, 2), (4, 2)], 0.9);
        let cam = Camera::default();
        let mut last = 0;
        for y in (3..31).rev() {
            let obs = render(&scene, AgentPose::new(3, y, Heading::N), &cam);
            let det = obs.detections.iter().find(|d| d.object_id == 0).unwrap();
            assert!(det.area >= last, "area shrank at y={y}");
            last = det.area;
        }
    }
}
