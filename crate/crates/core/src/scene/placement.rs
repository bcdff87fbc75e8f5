use serde::{Deserialize, Serialize};

use super::{SceneState, SceneSuite, Vec3, ACTIVE_OBJECTS};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementReason {
    Ok,
    /// The footprint is not fully inside any surface rectangle.
    OffSurface,
    /// Another active box shares interior volume with the candidate.
    Overlap,
    /// The footprint fits a surface but the base is not within snap tolerance of it.
    NoSupport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub reason: PlacementReason,
    /// Candidate with its base snapped onto the supporting surface (valid reports only).
    pub snapped: Option<Vec3>,
    pub surface: Option<usize>,
}

impl ValidityReport {
    pub fn valid(&self) -> bool {
        self.reason == PlacementReason::Ok
    }

    fn invalid(reason: PlacementReason) -> Self {
        ValidityReport {
            reason,
            snapped: None,
            surface: None,
        }
    }
}

/// Strict-interior intersection of two axis-aligned boxes given by center and half sizes.
/// Boxes that only share a face do not interpenetrate.
pub fn boxes_interpenetrate(center_a: Vec3, half_a: Vec3, center_b: Vec3, half_b: Vec3) -> bool {
    (0..3).all(|k| {
        let (a0, a1) = (center_a[k] - half_a[k], center_a[k] + half_a[k]);
        let (b0, b1) = (center_b[k] - half_b[k], center_b[k] + half_b[k]);
        a0 < b1 && b0 < a1
    })
}

/// Checks whether the object in `slot` may rest with its center at `candidate`.
pub fn check_placement(
    suite: &SceneSuite,
    state: &SceneState,
    slot: usize,
    candidate: Vec3,
    snap_tolerance: Real,
) -> ValidityReport {
    assert!(slot < ACTIVE_OBJECTS, "slot {slot} out of range");
    if candidate.iter().any(|v| !v.is_finite()) {
        return ValidityReport::invalid(PlacementReason::OffSurface);
    }
    let half = suite.catalog[state.active[slot]].half_extents;
    let scene = &suite.scenes[state.scene_idx];
    let base = candidate[1] - half[1];

    let mut fits_any = false;
    let mut support: Option<(usize, Real)> = None;
    for (i, surface) in scene.surfaces.iter().enumerate() {
        if !surface.contains_footprint(candidate[0], candidate[2], half[0], half[2]) {
            continue;
        }
        fits_any = true;
        let gap = (base - surface.top()).abs();
        if gap <= snap_tolerance && support.is_none_or(|(_, g)| gap < g) {
            support = Some((i, gap));
        }
    }
    let Some((surface_idx, _)) = support else {
        return ValidityReport::invalid(if fits_any {
            PlacementReason::NoSupport
        } else {
            PlacementReason::OffSurface
        });
    };

    let snapped = [candidate[0], scene.surfaces[surface_idx].top() + half[1], candidate[2]];
    for other in (0..ACTIVE_OBJECTS).filter(|&o| o != slot) {
        let other_half = suite.catalog[state.active[other]].half_extents;
        if boxes_interpenetrate(snapped, half, state.positions[other], other_half) {
            return ValidityReport::invalid(PlacementReason::Overlap);
        }
    }
    ValidityReport {
        reason: PlacementReason::Ok,
        snapped: Some(snapped),
        surface: Some(surface_idx),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::CameraPose;

    fn state_with(_suite: &SceneSuite, positions: [Vec3; 3]) -> SceneState {
        SceneState {
            scene_idx: 0,
            active: [0, 1, 2],
            positions,
            yaws: [0.0; 3],
            container: (3..9).collect(),
            moved_slot: 0,
            camera: CameraPose {
                position: [0.0, 1.5, -2.0],
                yaw: 0.0,
                pitch: 0.0,
                roll: 0.0,
            },
        }
    }

    fn on_top(suite: &SceneSuite, object: usize, x: Real, z: Real) -> Vec3 {
        let top = suite.scenes[0].surfaces[0].top();
        [x, top + suite.catalog[object].half_extents[1], z]
    }

    #[test]
    fn centered_footprint_is_ok() {
        let suite = SceneSuite::training();
        let state = state_with(
            &suite,
            [
                on_top(&suite, 0, 0.0, 0.0),
                on_top(&suite, 1, -0.7, 0.0),
                on_top(&suite, 2, 0.7, 0.0),
            ],
        );
        let report = check_placement(&suite, &state, 0, state.positions[0], 0.05);
        assert!(report.valid());
        assert_eq!(report.snapped, Some(state.positions[0]));
    }

    #[test]
    fn identical_centers_overlap() {
        let suite = SceneSuite::training();
        let state = state_with(
            &suite,
            [
                on_top(&suite, 0, 0.0, 0.0),
                on_top(&suite, 1, -0.7, 0.0),
                on_top(&suite, 2, 0.7, 0.0),
            ],
        );
        let report = check_placement(&suite, &state, 1, on_top(&suite, 1, 0.0, 0.0), 0.05);
        assert_eq!(report.reason, PlacementReason::Overlap);
        assert!(!report.valid());
    }

    #[test]
    fn shared_face_is_not_overlap() {
        let mut suite = SceneSuite::training();
        // Dyadic sizes so the touching faces coincide exactly.
        suite.catalog[0].half_extents = [0.125, 0.0625, 0.125];
        suite.catalog[1].half_extents = [0.125, 0.0625, 0.125];
        let state = state_with(
            &suite,
            [
                on_top(&suite, 0, 0.0, 0.0),
                on_top(&suite, 1, -0.5, 0.0),
                on_top(&suite, 2, 0.7, 0.0),
            ],
        );
        let report = check_placement(&suite, &state, 1, on_top(&suite, 1, 0.25, 0.0), 0.05);
        assert!(report.valid(), "{report:?}");
        let report = check_placement(&suite, &state, 1, on_top(&suite, 1, 0.25 - 1.0 / 1024.0, 0.0), 0.05);
        assert_eq!(report.reason, PlacementReason::Overlap);
    }

    #[test]
    fn edge_overhang_is_off_surface() {
        let suite = SceneSuite::training();
        let state = state_with(
            &suite,
            [
                on_top(&suite, 0, 0.0, 0.0),
                on_top(&suite, 1, -0.7, 0.0),
                on_top(&suite, 2, 0.7, 0.0),
            ],
        );
        // surface 0 spans z in [-0.35, 0.35]; pot half depth 0.10.
        let report = check_placement(&suite, &state, 0, on_top(&suite, 0, 0.0, 0.3), 0.05);
        assert_eq!(report.reason, PlacementReason::OffSurface);
    }

    #[test]
    fn floating_base_has_no_support_and_small_gap_snaps() {
        let suite = SceneSuite::training();
        let state = state_with(
            &suite,
            [
                on_top(&suite, 0, 0.0, 0.0),
                on_top(&suite, 1, -0.7, 0.0),
                on_top(&suite, 2, 0.7, 0.0),
            ],
        );
        let mut p = on_top(&suite, 0, 0.0, 0.0);
        p[1] += 0.2;
        assert_eq!(
            check_placement(&suite, &state, 0, p, 0.05).reason,
            PlacementReason::NoSupport
        );
        p[1] -= 0.17;
        let report = check_placement(&suite, &state, 0, p, 0.05);
        assert!(report.valid());
        assert_eq!(report.snapped, Some(on_top(&suite, 0, 0.0, 0.0)));
    }

    #[test]
    fn non_finite_candidate_is_rejected() {
        let suite = SceneSuite::training();
        let state = state_with(
            &suite,
            [
                on_top(&suite, 0, 0.0, 0.0),
                on_top(&suite, 1, -0.7, 0.0),
                on_top(&suite, 2, 0.7, 0.0),
            ],
        );
        assert!(!check_placement(&suite, &state, 0, [Real::NAN, 1.0, 0.0], 0.05).valid());
    }
}
