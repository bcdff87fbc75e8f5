//! Cross-module invariants checked through the public API.

use ndarray::Array2;
use proptest::prelude::*;

use rls3::agent::{random_action, ReplayBuffer, Transition};
use rls3::datasets::SampleRecord;
use rls3::judges::{contrastive_loss, rubric_score};
use rls3::orchestrator::{early_stop, EarlyStopPolicy};
use rls3::prompt::{parse_caption, relation_from_geometry, render_caption, PrimitiveSet, SpatialPrimitive};
use rls3::scene::{EnvConfig, SceneEnv, SceneSuite, OBSERVATION_DIM};
use rls3::seeding::rng_for;

fn truth_sets() -> impl Strategy<Value = PrimitiveSet> {
    (1u8..64)
        .prop_map(PrimitiveSet::from_bits)
        .prop_filter("1 to 3 terms, no opposite pair", |s| {
            s.len() <= 3 && !s.has_opposite_pair()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rubric_is_bounded_and_exact_answers_score_five(truth in truth_sets(), bits in 0u8..64) {
        let s = rubric_score(PrimitiveSet::from_bits(bits), truth).unwrap().value();
        prop_assert!((1..=5).contains(&s));
        prop_assert_eq!(rubric_score(truth, truth).unwrap().value(), 5);
    }

    #[test]
    fn naming_an_opposite_never_helps(truth in truth_sets(), bits in 0u8..64, pick in 0usize..3) {
        let predicted = PrimitiveSet::from_bits(bits);
        let terms: Vec<SpatialPrimitive> = truth.iter().collect();
        let opposite = terms[pick % terms.len()].opposite();
        let before = rubric_score(predicted, truth).unwrap();
        let after = rubric_score(predicted.with(opposite), truth).unwrap();
        prop_assert!(after <= before);
    }

    #[test]
    fn relations_are_well_formed(
        a in prop::array::uniform3(-2.0f64..2.0),
        b in prop::array::uniform3(-2.0f64..2.0),
        yaw in -180.0f64..180.0,
    ) {
        prop_assume!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-6));
        let r = relation_from_geometry(a, b, yaw).unwrap();
        let horizontal: PrimitiveSet = r.horizontal().iter().copied().collect();
        prop_assert!(!horizontal.has_opposite_pair());
        prop_assert!((1..=3).contains(&r.complexity()));
        prop_assert!(!r.horizontal().is_empty() || r.vertical().is_some());
        let caption = render_caption("small pot", "yellow bowl", &r);
        prop_assert_eq!(parse_caption(&caption).primitives, r.primitives());
    }

    #[test]
    fn contrastive_loss_is_nonnegative_and_scale_free(
        seed in any::<u64>(),
        n in 1usize..5,
        extra in 0usize..4,
        scale in 0.1f64..10.0,
    ) {
        let mut rng = rng_for(seed, &[0]);
        let images = Array2::from_shape_simple_fn((n, 6), || rand::Rng::random_range(&mut rng, -1.0..1.0));
        let texts = Array2::from_shape_simple_fn((n + extra, 6), || rand::Rng::random_range(&mut rng, -1.0..1.0));
        let loss = contrastive_loss(images.view(), texts.view(), 0.5).unwrap();
        prop_assert!(loss.total >= 0.0);
        let scaled = images.mapv(|v| v * scale);
        let again = contrastive_loss(scaled.view(), texts.view(), 0.5).unwrap();
        prop_assert!((again.total - loss.total).abs() < 1e-9);
    }

    #[test]
    fn early_stop_waits_for_min_iterations(history in prop::collection::vec(0.0f64..5.0, 0..40)) {
        for policy in [EarlyStopPolicy::GENERATIVE, EarlyStopPolicy::CONTRASTIVE] {
            let stop = early_stop(&history, &policy);
            if history.len() <= policy.min_iterations {
                prop_assert!(!stop);
            }
            if stop {
                let split = history.len() - policy.patience;
                let best = history[..split].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(history[split..].iter().all(|&v| v <= best + policy.epsilon));
            }
        }
    }

    #[test]
    fn replay_buffer_stays_within_capacity(capacity in 1usize..50, pushes in 0usize..200) {
        let mut buffer = ReplayBuffer::new(capacity, 1);
        for i in 0..pushes {
            buffer.push(Transition {
                observation: [i as f64; OBSERVATION_DIM],
                action: [0.0; 3],
                reward: -1.0,
                next_observation: [0.0; OBSERVATION_DIM],
                terminal: false,
            });
            prop_assert!(buffer.len() <= capacity);
        }
        prop_assert_eq!(buffer.len(), pushes.min(capacity));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_walks_keep_the_world_consistent(seed in any::<u64>()) {
        let suite = SceneSuite::training();
        let mut env = SceneEnv::new(suite.clone(), EnvConfig::default(), 20, seed);
        let mut rng = rng_for(seed, &[1]);
        let obs = env.reset(seed % 7).unwrap();
        prop_assert!(obs.iter().all(|v| v.is_finite()));
        for step in 0..150u64 {
            let out = env.step(random_action(&mut rng)).unwrap();
            prop_assert!(out.reward == 1.0 || out.reward == -1.0);
            prop_assert_eq!(out.snapshot.is_some(), out.reward == 1.0);
            prop_assert!(out.observation.iter().all(|v| v.is_finite()));
            prop_assert!(env.state().unwrap().partition_is_complete());
            if let Some(snap) = &out.snapshot {
                let record = SampleRecord::from_snapshot(step, snap, seed ^ step, 0, 0).unwrap();
                prop_assert!(record.verify().is_ok());
                prop_assert_ne!(&record.subject, &record.reference);
                prop_assert_ne!(&record.neg_term, &record.caption);
                prop_assert_ne!(&record.neg_object, &record.caption);
            }
        }
    }
}
