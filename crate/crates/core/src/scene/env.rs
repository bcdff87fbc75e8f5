use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    boxes_interpenetrate, check_placement, observe, ObservationVector, PlacementReason, SceneSnapshot, SceneState,
    SceneSuite, ValidityReport, Vec3, ACTIVE_OBJECTS, CATALOG_SIZE,
};
use crate::seeding::{rng_for, stream, SeededRng};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Largest displacement per axis per step, in meters.
    pub delta_max: Real,
    /// Allowed gap between an object's base and the surface it lands on.
    pub snap_tolerance: Real,
    /// Probability that the moved slot first trades its object with the container.
    pub swap_probability: Real,
    pub max_placement_attempts: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            delta_max: 0.25,
            snap_tolerance: 0.05,
            swap_probability: 1.0,
            max_placement_attempts: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next: SceneState,
    /// +1 for a valid placement, −1 otherwise.
    pub reward: Real,
    pub report: ValidityReport,
    /// Present exactly when the reward is +1.
    pub snapshot: Option<SceneSnapshot>,
}

/// Places `active` objects on the surfaces of scene `scene_idx` by rejection sampling.
fn place_objects<R: Rng + ?Sized>(
    suite: &SceneSuite,
    scene_idx: usize,
    active: &[usize; ACTIVE_OBJECTS],
    max_attempts: usize,
    rng: &mut R,
) -> Result<[Vec3; ACTIVE_OBJECTS]> {
    let scene = &suite.scenes[scene_idx];
    let mut positions = [[0.0; 3]; ACTIVE_OBJECTS];
    let mut attempts = 0;
    let mut slot = 0;
    while slot < ACTIVE_OBJECTS {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::PlacementFailed {
                scene_id: scene.id,
                attempts: max_attempts,
            });
        }
        let half = suite.catalog[active[slot]].half_extents;
        let surface = &scene.surfaces[rng.random_range(0..scene.surfaces.len())];
        let (x0, x1) = surface.x_range();
        let (z0, z1) = surface.z_range();
        if x1 - x0 < 2.0 * half[0] || z1 - z0 < 2.0 * half[2] {
            continue;
        }
        let candidate = [
            rng.random_range(x0 + half[0]..=x1 - half[0]),
            surface.top() + half[1],
            rng.random_range(z0 + half[2]..=z1 - half[2]),
        ];
        let clear = (0..slot).all(|other| {
            !boxes_interpenetrate(
                candidate,
                half,
                positions[other],
                suite.catalog[active[other]].half_extents,
            )
        });
        if clear {
            positions[slot] = candidate;
            slot += 1;
        }
    }
    Ok(positions)
}

/// Fresh episode state: three random catalog objects validly placed in scene
/// `episode_idx mod scene_count`.
pub fn reset_episode(suite: &SceneSuite, config: &EnvConfig, episode_idx: u64, seed: u64) -> Result<SceneState> {
    if suite.scenes.is_empty() {
        return Err(Error::InvalidSuite("no scenes".into()));
    }
    let mut rng = rng_for(seed, &[stream::RESET, episode_idx]);
    let scene_idx = (episode_idx % suite.scenes.len() as u64) as usize;
    let chosen = sample(&mut rng, CATALOG_SIZE, ACTIVE_OBJECTS).into_vec();
    let active = [chosen[0], chosen[1], chosen[2]];
    let container = (0..CATALOG_SIZE).filter(|i| !active.contains(i)).collect();
    let yaws = [(); ACTIVE_OBJECTS].map(|_| rng.random_range(0.0..360.0));
    let positions = place_objects(suite, scene_idx, &active, config.max_placement_attempts, &mut rng)?;
    Ok(SceneState {
        scene_idx,
        active,
        positions,
        yaws,
        container,
        moved_slot: 0,
        camera: suite.scenes[scene_idx].camera,
    })
}

/// Moves the round-robin slot by `action × delta_max`, optionally swapping its
/// object with a container object first. Invalid moves revert both the swap and
/// the displacement.
pub fn step<R: Rng + ?Sized>(
    suite: &SceneSuite,
    config: &EnvConfig,
    state: &SceneState,
    action: [Real; 3],
    step_index: u64,
    rng: &mut R,
) -> StepResult {
    let slot = state.moved_slot;
    let mut next = state.clone();
    next.moved_slot = (slot + 1) % ACTIVE_OBJECTS;

    if action.iter().any(|a| !a.is_finite()) {
        return StepResult {
            next,
            reward: -1.0,
            report: ValidityReport {
                reason: PlacementReason::OffSurface,
                snapped: None,
                surface: None,
            },
            snapshot: None,
        };
    }

    let mut trial = next.clone();
    let swap_draw: Real = rng.random();
    if swap_draw < config.swap_probability && !trial.container.is_empty() {
        let j = rng.random_range(0..trial.container.len());
        let outgoing = trial.active[slot];
        let incoming = trial.container[j];
        let old_half_y = suite.catalog[outgoing].half_extents[1];
        let new_half_y = suite.catalog[incoming].half_extents[1];
        trial.active[slot] = incoming;
        trial.container[j] = outgoing;
        // Keep the base where it was.
        trial.positions[slot][1] += new_half_y - old_half_y;
    }

    let mut candidate = trial.positions[slot];
    for (c, a) in candidate.iter_mut().zip(action) {
        *c += a.clamp(-1.0, 1.0) * config.delta_max;
    }
    let report = check_placement(suite, &trial, slot, candidate, config.snap_tolerance);
    match report.snapped {
        Some(snapped) if report.valid() => {
            trial.positions[slot] = snapped;
            let snapshot = SceneSnapshot::capture(suite, &trial, step_index);
            StepResult {
                next: trial,
                reward: 1.0,
                report,
                snapshot: Some(snapshot),
            }
        }
        _ => StepResult {
            next,
            reward: -1.0,
            report,
            snapshot: None,
        },
    }
}

/// Samples collected in one scene before the episode moves to the next one.
pub fn scene_period(samples_per_episode: usize, scene_count: usize) -> usize {
    samples_per_episode.div_ceil(scene_count.max(1)).max(1)
}

/// Cycles to the next scene once every `⌈T0 / scene_count⌉` valid snapshots,
/// re-placing the same active objects on the new scene's surfaces.
pub fn advance_scene<R: Rng + ?Sized>(
    suite: &SceneSuite,
    config: &EnvConfig,
    state: &SceneState,
    valid_count: u64,
    samples_per_episode: usize,
    rng: &mut R,
) -> Result<SceneState> {
    let n = suite.scenes.len();
    let period = scene_period(samples_per_episode, n) as u64;
    if n <= 1 || valid_count == 0 || !valid_count.is_multiple_of(period) {
        return Ok(state.clone());
    }
    let scene_idx = (state.scene_idx + 1) % n;
    let positions = place_objects(suite, scene_idx, &state.active, config.max_placement_attempts, rng)?;
    Ok(SceneState {
        scene_idx,
        positions,
        camera: suite.scenes[scene_idx].camera,
        ..state.clone()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub reward: Real,
    pub report: ValidityReport,
    pub snapshot: Option<SceneSnapshot>,
    pub observation: ObservationVector,
}

/// Stateful wrapper used by episode runners.
#[derive(Debug, Clone)]
pub struct SceneEnv {
    suite: SceneSuite,
    config: EnvConfig,
    samples_per_episode: usize,
    seed: u64,
    state: Option<SceneState>,
    rng: SeededRng,
    steps: u64,
    valid: u64,
}

impl SceneEnv {
    pub fn new(suite: SceneSuite, config: EnvConfig, samples_per_episode: usize, seed: u64) -> Self {
        SceneEnv {
            suite,
            config,
            samples_per_episode,
            seed,
            state: None,
            rng: rng_for(seed, &[stream::STEP]),
            steps: 0,
            valid: 0,
        }
    }

    pub fn reset(&mut self, episode_idx: u64) -> Result<ObservationVector> {
        let state = reset_episode(&self.suite, &self.config, episode_idx, self.seed)?;
        self.rng = rng_for(self.seed, &[stream::STEP, episode_idx]);
        self.steps = 0;
        self.valid = 0;
        let obs = observe(&self.suite, &state);
        self.state = Some(state);
        Ok(obs)
    }

    pub fn step(&mut self, action: [Real; 3]) -> Result<EnvStep> {
        let state = self
            .state
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("environment stepped before reset".into()))?;
        let result = step(&self.suite, &self.config, state, action, self.steps, &mut self.rng);
        self.steps += 1;
        let mut next = result.next;
        if result.snapshot.is_some() {
            self.valid += 1;
            next = advance_scene(
                &self.suite,
                &self.config,
                &next,
                self.valid,
                self.samples_per_episode,
                &mut self.rng,
            )?;
        }
        let observation = observe(&self.suite, &next);
        self.state = Some(next);
        Ok(EnvStep {
            reward: result.reward,
            report: result.report,
            snapshot: result.snapshot,
            observation,
        })
    }

    pub fn observe(&self) -> Option<ObservationVector> {
        self.state.as_ref().map(|s| observe(&self.suite, s))
    }

    pub fn state(&self) -> Option<&SceneState> {
        self.state.as_ref()
    }

    /// Snapshot of the current state, which is always valid.
    pub fn current_snapshot(&self) -> Option<SceneSnapshot> {
        self.state
            .as_ref()
            .map(|s| SceneSnapshot::capture(&self.suite, s, self.steps))
    }

    pub fn suite(&self) -> &SceneSuite {
        &self.suite
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn valid_steps(&self) -> u64 {
        self.valid
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::decode_observation;
    use proptest::prelude::*;
    use rand::Rng;

    fn cfg() -> EnvConfig {
        EnvConfig::default()
    }

    // Independent oracle: every object fully on one surface at its top, no pair
    // sharing interior volume.
    pub(crate) fn state_is_sound(suite: &SceneSuite, state: &SceneState) -> bool {
        let scene = &suite.scenes[state.scene_idx];
        for slot in 0..ACTIVE_OBJECTS {
            let h = suite.catalog[state.active[slot]].half_extents;
            let p = state.positions[slot];
            let supported = scene.surfaces.iter().filter(|s| {
                p[0] - h[0] >= s.top_center[0] - s.half_extent_x
                    && p[0] + h[0] <= s.top_center[0] + s.half_extent_x
                    && p[2] - h[2] >= s.top_center[2] - s.half_extent_z
                    && p[2] + h[2] <= s.top_center[2] + s.half_extent_z
                    && ((p[1] - h[1]) - s.top_center[1]).abs() < 1e-9
            });
            if supported.count() != 1 {
                return false;
            }
            for other in slot + 1..ACTIVE_OBJECTS {
                let g = suite.catalog[state.active[other]].half_extents;
                let q = state.positions[other];
                let disjoint_on_some_axis = (0..3).any(|k| p[k] + h[k] <= q[k] - g[k] || q[k] + g[k] <= p[k] - h[k]);
                if !disjoint_on_some_axis {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn reset_is_deterministic_and_sound() {
        let suite = SceneSuite::training();
        for episode in 0..50 {
            let a = reset_episode(&suite, &cfg(), episode, 17).unwrap();
            let b = reset_episode(&suite, &cfg(), episode, 17).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.scene_idx, (episode % 5) as usize);
            assert!(a.partition_is_complete());
            assert!(state_is_sound(&suite, &a));
        }
    }

    #[test]
    fn placement_failure_is_reported() {
        let suite = SceneSuite::training();
        let config = EnvConfig {
            max_placement_attempts: 2,
            ..cfg()
        };
        let failures = (0..40)
            .filter(|&e| matches!(reset_episode(&suite, &config, e, 3), Err(Error::PlacementFailed { .. })))
            .count();
        assert!(failures > 0);
    }

    #[test]
    fn zero_displacement_without_swap_is_valid() {
        let suite = SceneSuite::training();
        let config = EnvConfig {
            swap_probability: 0.0,
            ..cfg()
        };
        let state = reset_episode(&suite, &config, 0, 5).unwrap();
        let mut rng = rng_for(0, &[]);
        let result = step(&suite, &config, &state, [0.0; 3], 0, &mut rng);
        assert_eq!(result.reward, 1.0);
        assert!(result.snapshot.is_some());
        assert_eq!(result.next.positions, state.positions);
        assert_eq!(result.next.moved_slot, 1);
    }

    #[test]
    fn pushing_past_the_edge_is_off_surface() {
        let suite = SceneSuite::training();
        let config = EnvConfig {
            swap_probability: 0.0,
            delta_max: 5.0,
            ..cfg()
        };
        let state = reset_episode(&suite, &config, 0, 5).unwrap();
        let mut rng = rng_for(0, &[]);
        let result = step(&suite, &config, &state, [0.0, 0.0, 1.0], 0, &mut rng);
        assert_eq!(result.reward, -1.0);
        assert_eq!(result.report.reason, PlacementReason::OffSurface);
        assert_eq!(result.next.positions, state.positions);
        assert!(result.snapshot.is_none());
    }

    #[test]
    fn landing_on_another_object_is_overlap() {
        let suite = SceneSuite::training();
        let config = EnvConfig {
            swap_probability: 0.0,
            delta_max: 1.0,
            ..cfg()
        };
        let mut state = reset_episode(&suite, &config, 0, 5).unwrap();
        // Put slot 1 right next to slot 0 on the same surface level.
        let h0 = suite.catalog[state.active[0]].half_extents;
        let h1 = suite.catalog[state.active[1]].half_extents;
        let top = suite.scenes[0].surfaces[0].top();
        state.scene_idx = 0;
        state.positions[0] = [0.0, top + h0[1], 0.0];
        state.positions[1] = [0.3, top + h1[1], 0.0];
        state.positions[2] = [-10.0, 0.0, -10.0];
        let mut rng = rng_for(0, &[]);
        let result = step(&suite, &config, &state, [0.3, 0.0, 0.0], 0, &mut rng);
        assert_eq!(result.report.reason, PlacementReason::Overlap);
        assert_eq!(result.reward, -1.0);
    }

    #[test]
    fn non_finite_action_is_invalid() {
        let suite = SceneSuite::training();
        let state = reset_episode(&suite, &cfg(), 0, 5).unwrap();
        let mut rng = rng_for(0, &[]);
        let result = step(&suite, &cfg(), &state, [Real::NAN, 0.0, 0.0], 0, &mut rng);
        assert_eq!(result.reward, -1.0);
        assert!(result.snapshot.is_none());
    }

    #[test]
    fn scene_period_ceiling() {
        assert_eq!(scene_period(200, 5), 40);
        assert_eq!(scene_period(20, 3), 7);
        assert_eq!(scene_period(5, 1), 5);
    }

    #[test]
    fn cycling_advances_every_period_and_keeps_partition() {
        let suite = SceneSuite::training();
        let state = reset_episode(&suite, &cfg(), 0, 9).unwrap();
        let mut rng = rng_for(1, &[]);
        for valid in 1..=39u64 {
            let same = advance_scene(&suite, &cfg(), &state, valid, 200, &mut rng).unwrap();
            assert_eq!(same.scene_idx, 0);
        }
        let moved = advance_scene(&suite, &cfg(), &state, 40, 200, &mut rng).unwrap();
        assert_eq!(moved.scene_idx, 1);
        assert_eq!(moved.active, state.active);
        assert!(moved.partition_is_complete());
        assert!(state_is_sound(&suite, &moved));
    }

    #[test]
    fn single_scene_never_cycles() {
        let mut suite = SceneSuite::training();
        suite.scenes.truncate(1);
        let state = reset_episode(&suite, &cfg(), 3, 9).unwrap();
        let mut rng = rng_for(1, &[]);
        for valid in 0..100 {
            assert_eq!(
                advance_scene(&suite, &cfg(), &state, valid, 20, &mut rng).unwrap(),
                state
            );
        }
    }

    #[test]
    fn env_trajectory_is_reproducible() {
        let run = || {
            let mut env = SceneEnv::new(SceneSuite::training(), cfg(), 20, 77);
            env.reset(2).unwrap();
            let mut rng = rng_for(5, &[]);
            (0..200)
                .map(|_| {
                    let a = [
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    ];
                    let s = env.step(a).unwrap();
                    (s.reward, s.observation)
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    proptest! {
        #[test]
        fn observation_round_trip(seed in any::<u64>(), episode in 0u64..100) {
            let suite = SceneSuite::training();
            let state = reset_episode(&suite, &cfg(), episode, seed).unwrap();
            let obs = observe(&suite, &state);
            prop_assert_eq!(obs.len(), 32);
            prop_assert!(obs.iter().all(|v| v.is_finite()));
            prop_assert!(obs[0] == state.moved_slot as Real);
            let decoded = decode_observation(&obs).unwrap();
            prop_assert_eq!(decoded.positions, state.positions);
            prop_assert_eq!(decoded.yaws, state.yaws);
            prop_assert_eq!(decoded.scene_idx, state.scene_idx);
            prop_assert_eq!(decoded.camera, state.camera);
        }

        #[test]
        fn random_walks_stay_sound(seed in any::<u64>()) {
            let suite = SceneSuite::training();
            let mut env = SceneEnv::new(suite.clone(), cfg(), 20, seed);
            env.reset(seed % 7).unwrap();
            let mut rng = rng_for(seed, &[99]);
            for _ in 0..100 {
                let a = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let s = env.step(a).unwrap();
                prop_assert_eq!(s.reward == 1.0, s.snapshot.is_some());
                prop_assert!(env.state().unwrap().partition_is_complete());
                prop_assert!(state_is_sound(&suite, env.state().unwrap()));
            }
        }
    }
}
