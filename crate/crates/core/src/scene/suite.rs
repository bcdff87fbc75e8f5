use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

pub type Vec3 = [Real; 3];

/// Number of objects in the catalog.
pub const CATALOG_SIZE: usize = 9;
/// Number of objects placed in a scene at once.
pub const ACTIVE_OBJECTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub name: String,
    /// Axis-aligned half sizes in meters.
    pub half_extents: Vec3,
}

/// Horizontal rectangle objects may rest on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub top_center: Vec3,
    pub half_extent_x: Real,
    pub half_extent_z: Real,
}

impl Surface {
    pub fn top(&self) -> Real {
        self.top_center[1]
    }

    pub fn x_range(&self) -> (Real, Real) {
        (
            self.top_center[0] - self.half_extent_x,
            self.top_center[0] + self.half_extent_x,
        )
    }

    pub fn z_range(&self) -> (Real, Real) {
        (
            self.top_center[2] - self.half_extent_z,
            self.top_center[2] + self.half_extent_z,
        )
    }

    /// Whether a footprint centered at `(x, z)` with the given half sizes lies
    /// entirely inside this surface's rectangle.
    pub fn contains_footprint(&self, x: Real, z: Real, half_x: Real, half_z: Real) -> bool {
        let (x0, x1) = self.x_range();
        let (z0, z1) = self.z_range();
        x - half_x >= x0 && x + half_x <= x1 && z - half_z >= z0 && z + half_z <= z1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub position: Vec3,
    /// Degrees; yaw 0 looks along +z, yaw 90 along +x.
    pub yaw: Real,
    pub pitch: Real,
    pub roll: Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub id: i64,
    pub surfaces: Vec<Surface>,
    pub camera: CameraPose,
}

/// A set of scenes plus the object catalog, as stored in the suite JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSuite {
    pub scenes: Vec<SceneSpec>,
    pub catalog: Vec<ObjectSpec>,
}

const TRAIN_SUITE: &str = include_str!("../../../../configs/scenes_train.json");
const TEST_SUITE: &str = include_str!("../../../../configs/scenes_test.json");

impl SceneSuite {
    /// The five training scenes.
    pub fn training() -> Self {
        Self::from_json(TRAIN_SUITE).expect("bundled training suite is valid")
    }

    /// The three held-out test scenes.
    pub fn test() -> Self {
        Self::from_json(TEST_SUITE).expect("bundled test suite is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let suite: SceneSuite = serde_json::from_str(text)?;
        suite.validate()?;
        Ok(suite)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn object_index(&self, name: &str) -> Option<usize> {
        self.catalog.iter().position(|o| o.name == name)
    }

    pub fn scene_position(&self, id: i64) -> Option<usize> {
        self.scenes.iter().position(|s| s.id == id)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSuite(msg));
        if self.scenes.is_empty() {
            return bad("no scenes".into());
        }
        if self.catalog.len() != CATALOG_SIZE {
            return bad(format!(
                "catalog has {} objects, expected {CATALOG_SIZE}",
                self.catalog.len()
            ));
        }
        for (i, obj) in self.catalog.iter().enumerate() {
            if obj.name.trim().is_empty() {
                return bad(format!("catalog entry {i} has an empty name"));
            }
            if self.catalog[..i].iter().any(|o| o.name == obj.name) {
                return bad(format!("duplicate object name {:?}", obj.name));
            }
            if obj.half_extents.iter().any(|&h| !(h.is_finite() && h > 0.0)) {
                return bad(format!("object {:?} has non-positive extents", obj.name));
            }
        }
        for (i, scene) in self.scenes.iter().enumerate() {
            if self.scenes[..i].iter().any(|s| s.id == scene.id) {
                return bad(format!("duplicate scene id {}", scene.id));
            }
            if scene.surfaces.len() != 2 {
                return bad(format!(
                    "scene {} has {} surfaces, expected 2",
                    scene.id,
                    scene.surfaces.len()
                ));
            }
            for s in &scene.surfaces {
                if !(s.half_extent_x > 0.0 && s.half_extent_z > 0.0) || s.top_center.iter().any(|v| !v.is_finite()) {
                    return bad(format!("scene {} has a degenerate surface", scene.id));
                }
            }
            let (a, b) = (&scene.surfaces[0], &scene.surfaces[1]);
            let overlap_x = a.x_range().0 < b.x_range().1 && b.x_range().0 < a.x_range().1;
            let overlap_z = a.z_range().0 < b.z_range().1 && b.z_range().0 < a.z_range().1;
            if overlap_x && overlap_z {
                return bad(format!("scene {} surfaces overlap in plan view", scene.id));
            }
            let cam = scene.camera.position;
            for s in &scene.surfaces {
                let (x0, x1) = s.x_range();
                let (z0, z1) = s.z_range();
                if cam[0] >= x0 && cam[0] <= x1 && cam[2] >= z0 && cam[2] <= z1 && cam[1] <= s.top() {
                    return bad(format!("scene {} camera sits inside a surface volume", scene.id));
                }
            }
        }
        Ok(())
    }
}
