//! Deterministic geometric scene simulator.
//!
//! Scenes hold two horizontal surfaces and a camera. Three of the nine
//! catalog objects are active at a time; the remaining six wait in a
//! container. Objects are axis-aligned boxes, so placement validity reduces
//! to interval arithmetic.

mod env;
mod observation;
mod placement;
mod suite;

pub use env::{advance_scene, reset_episode, step, EnvConfig, SceneEnv, StepResult};
pub use observation::{decode_observation, observe, DecodedObservation, ObservationVector, OBSERVATION_DIM};
pub use placement::{boxes_interpenetrate, check_placement, PlacementReason, ValidityReport};
pub use suite::{CameraPose, ObjectSpec, SceneSpec, SceneSuite, Surface, Vec3, ACTIVE_OBJECTS, CATALOG_SIZE};

use serde::{Deserialize, Serialize};

use crate::Real;

/// Full world state of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneState {
    /// Position of the current scene in the suite.
    pub scene_idx: usize,
    /// Catalog indices of the active objects, by slot.
    pub active: [usize; ACTIVE_OBJECTS],
    /// Box centers of the active objects, by slot.
    pub positions: [Vec3; ACTIVE_OBJECTS],
    /// Degrees. Stored for metadata only; collisions ignore rotation.
    pub yaws: [Real; ACTIVE_OBJECTS],
    /// Catalog indices of the objects not in the scene.
    pub container: Vec<usize>,
    /// Slot the next step will move.
    pub moved_slot: usize,
    pub camera: CameraPose,
}

impl SceneState {
    pub fn active_names<'a>(&self, suite: &'a SceneSuite) -> [&'a str; ACTIVE_OBJECTS] {
        self.active.map(|i| suite.catalog[i].name.as_str())
    }

    /// Whether active and container objects partition the catalog.
    pub fn partition_is_complete(&self) -> bool {
        let mut seen = [false; CATALOG_SIZE];
        for &i in self.active.iter().chain(&self.container) {
            if i >= CATALOG_SIZE || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        seen.iter().all(|&s| s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotObject {
    pub name: String,
    pub pos: Vec3,
    pub yaw: Real,
}

/// Ground-truth metadata of a valid state, as a renderer would report it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSnapshot {
    pub scene_id: i64,
    pub step: u64,
    pub objects: Vec<SnapshotObject>,
    pub camera: CameraPose,
}

impl SceneSnapshot {
    pub fn capture(suite: &SceneSuite, state: &SceneState, step: u64) -> Self {
        SceneSnapshot {
            scene_id: suite.scenes[state.scene_idx].id,
            step,
            objects: (0..ACTIVE_OBJECTS)
                .map(|slot| SnapshotObject {
                    name: suite.catalog[state.active[slot]].name.clone(),
                    pos: state.positions[slot],
                    yaw: state.yaws[slot],
                })
                .collect(),
            camera: state.camera,
        }
    }

    pub fn object(&self, name: &str) -> Option<&SnapshotObject> {
        self.objects.iter().find(|o| o.name == name)
    }
}
