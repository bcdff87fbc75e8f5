use super::{CameraPose, SceneState, SceneSuite, Vec3, ACTIVE_OBJECTS};
use crate::{Error, Real, Result};

pub const OBSERVATION_DIM: usize = 32;

/// Fixed layout:
///
/// | index  | content                                           |
/// |--------|---------------------------------------------------|
/// | 0      | slot moved by the next step                       |
/// | 1      | scene index within the suite                      |
/// | 2..8   | surface 1 top center (3), half extents (x, 0, z)  |
/// | 8..14  | surface 2, same layout                            |
/// | 14..23 | object centers, slot order                        |
/// | 23..26 | object yaws (degrees)                             |
/// | 26..29 | camera position                                   |
/// | 29..32 | camera yaw, pitch, roll (degrees)                 |
pub type ObservationVector = [Real; OBSERVATION_DIM];

pub fn observe(suite: &SceneSuite, state: &SceneState) -> ObservationVector {
    let mut obs = [0.0; OBSERVATION_DIM];
    obs[0] = state.moved_slot as Real;
    obs[1] = state.scene_idx as Real;
    for (k, surface) in suite.scenes[state.scene_idx].surfaces.iter().take(2).enumerate() {
        let base = 2 + 6 * k;
        obs[base..base + 3].copy_from_slice(&surface.top_center);
        obs[base + 3] = surface.half_extent_x;
        obs[base + 5] = surface.half_extent_z;
    }
    for slot in 0..ACTIVE_OBJECTS {
        obs[14 + 3 * slot..17 + 3 * slot].copy_from_slice(&state.positions[slot]);
        obs[23 + slot] = state.yaws[slot];
    }
    obs[26..29].copy_from_slice(&state.camera.position);
    obs[29] = state.camera.yaw;
    obs[30] = state.camera.pitch;
    obs[31] = state.camera.roll;
    obs
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedObservation {
    pub moved_slot: usize,
    pub scene_idx: usize,
    pub positions: [Vec3; ACTIVE_OBJECTS],
    pub yaws: [Real; ACTIVE_OBJECTS],
    pub camera: CameraPose,
}

pub fn decode_observation(obs: &[Real]) -> Result<DecodedObservation> {
    if obs.len() != OBSERVATION_DIM {
        return Err(Error::DimensionMismatch {
            expected: OBSERVATION_DIM,
            actual: obs.len(),
        });
    }
    let index = |v: Real| -> Result<usize> {
        if v >= 0.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::InvalidArgument(format!(
                "observation index entry {v} is not a whole number"
            )))
        }
    };
    let mut positions = [[0.0; 3]; ACTIVE_OBJECTS];
    let mut yaws = [0.0; ACTIVE_OBJECTS];
    for slot in 0..ACTIVE_OBJECTS {
        positions[slot].copy_from_slice(&obs[14 + 3 * slot..17 + 3 * slot]);
        yaws[slot] = obs[23 + slot];
    }
    Ok(DecodedObservation {
        moved_slot: index(obs[0])?,
        scene_idx: index(obs[1])?,
        positions,
        yaws,
        camera: CameraPose {
            position: [obs[26], obs[27], obs[28]],
            yaw: obs[29],
            pitch: obs[30],
            roll: obs[31],
        },
    })
}
