mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;

use comphy::model::{
    canonicalize_charges, validate_video_set, Charge, ChargeAssignment, PropertyGraph, VideoSet,
};
use comphy::physics::PhysicsConfig;
use comphy::scene_gen::{generate_video_set, GenConfig};

fn charge() -> impl Strategy<Value = Charge> {
    prop_oneof![
        Just(Charge::Neutral),
        Just(Charge::Positive),
        Just(Charge::Negative)
    ]
}

fn assignment() -> impl Strategy<Value = ChargeAssignment> {
    proptest::collection::vec(charge(), 0..8)
        .prop_map(|cs| cs.into_iter().enumerate().collect::<BTreeMap<_, _>>())
}

proptest! {
    #[test]
    fn canonicalize_is_idempotent_and_flip_invariant(a in assignment()) {
        let c = canonicalize_charges(&a);
        prop_assert_eq!(canonicalize_charges(&c), c.clone());
        let flipped: ChargeAssignment = a.iter().map(|(id, q)| (*id, q.inverted())).collect();
        prop_assert_eq!(canonicalize_charges(&flipped), c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_sets_validate_and_round_trip(seed in any::<u64>()) {
        let set = generate_video_set(seed, &GenConfig::default(), &PhysicsConfig::default()).unwrap();
        prop_assert!(validate_video_set(&set).is_empty());
        let text = serde_json::to_string(&set).unwrap();
        let back: VideoSet = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &set);
        let g = PropertyGraph::from_roster(&set.roster);
        let gt: PropertyGraph = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        prop_assert_eq!(gt, g);
    }

    #[test]
    fn generation_is_byte_deterministic(seed in any::<u64>()) {
        let a = generate_video_set(seed, &GenConfig::default(), &PhysicsConfig::default()).unwrap();
        let b = generate_video_set(seed, &GenConfig::default(), &PhysicsConfig::default()).unwrap();
        prop_assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
    }
}
