//! JSON form of a scene. Occupancy rows use `#` (wall), `.` (free) and `o`
//! (object; the owning id comes from the object list).

use serde::{Deserialize, Serialize};

use super::{Cell, ObjectInstance, Scene, SceneError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDoc {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub seed: u64,
    pub occupancy: Vec<String>,
    pub objects: Vec<ObjectInstance>,
}

impl From<&Scene> for SceneDoc {
    fn from(scene: &Scene) -> Self {
        let occupancy = (0..scene.height)
            .map(|y| {
                (0..scene.width)
                    .map(|x| match scene.cell(x, y) {
                        Cell::Free => '.',
                        Cell::Wall => '#',
                        Cell::Object(_) => 'o',
                    })
                    .collect()
            })
            .collect();
        SceneDoc {
            id: scene.id.clone(),
            width: scene.width,
            height: scene.height,
            cell_size: scene.cell_size,
            seed: scene.seed,
            occupancy,
            objects: scene.objects.clone(),
        }
    }
}

impl TryFrom<SceneDoc> for Scene {
    type Error = SceneError;

    fn try_from(doc: SceneDoc) -> Result<Scene, SceneError> {
        let bad = |m: String| SceneError::Malformed(m);
        if doc.occupancy.len() != doc.height {
            return Err(bad(format!("expected {} occupancy rows", doc.height)));
        }
        let mut occupancy = Vec::with_capacity(doc.width * doc.height);
        for (y, row) in doc.occupancy.iter().enumerate() {
            if row.chars().count() != doc.width {
                return Err(bad(format!("row {y} has wrong width")));
            }
            for ch in row.chars() {
                occupancy.push(match ch {
                    '.' => Cell::Free,
                    '#' => Cell::Wall,
                    // placeholder, resolved from the object list below
                    'o' => Cell::Object(u32::MAX),
                    other => return Err(bad(format!("unknown occupancy symbol {other:?}"))),
                });
            }
        }
        for obj in &doc.objects {
            for &(x, y) in &obj.cells {
                if x >= doc.width || y >= doc.height {
                    return Err(bad(format!("object {} cell out of bounds", obj.object_id)));
                }
                let slot = &mut occupancy[y * doc.width + x];
                if *slot != Cell::Object(u32::MAX) {
                    return Err(bad(format!("object {} cell ({x},{y}) not marked 'o'", obj.object_id)));
                }
                *slot = Cell::Object(obj.object_id);
            }
        }
        if occupancy.contains(&Cell::Object(u32::MAX)) {
            return Err(bad("'o' cell without an owning object".into()));
        }
        let scene = Scene {
            id: doc.id,
            width: doc.width,
            height: doc.height,
            cell_size: doc.cell_size,
            occupancy,
            objects: doc.objects,
            seed: doc.seed,
        };
        scene.validate()?;
        Ok(scene)
    }
}

impl Scene {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SceneDoc::from(self)).expect("scene serializes")
    }

    pub fn from_json(text: &str) -> Result<Scene, SceneError> {
        let doc: SceneDoc =
            serde_json::from_str(text).map_err(|e| SceneError::Malformed(e.to_string()))?;
        Scene::try_from(doc)
    }
}
