mod common;

use std::collections::BTreeSet;
use std::sync::LazyLock;

use proptest::prelude::*;

use comphy::physics::PhysicsConfig;
use comphy::program::World;
use comphy::program::{execute, execute_trace, parse_program, ExecErrorKind, OpName, Value};
use comphy::worlds::{build_world, roster_properties, FutureSource};

use common::{random_program, sets, OUTPUT_TYPES};

static WORLD: LazyLock<World> = LazyLock::new(|| {
    let set = &sets(11, 1)[0];
    build_world(
        set,
        roster_properties(&set.roster),
        &[],
        FutureSource::Recorded,
        &PhysicsConfig::default(),
    )
    .unwrap()
});

fn ids(v: &Value) -> Option<BTreeSet<String>> {
    match v {
        Value::Objects(o) => Some(o.iter().map(|x| x.to_string()).collect()),
        Value::Events(e) => Some(e.iter().map(|x| format!("{x:?}")).collect()),
        _ => None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn printed_programs_parse_back(seed in any::<u64>(), t in 0usize..8) {
        let p = random_program(seed, OUTPUT_TYPES[t], 5);
        let text = p.to_string();
        prop_assert_eq!(parse_program(&text).unwrap(), p);
    }

    #[test]
    fn well_typed_programs_never_mismatch_tags(seed in any::<u64>(), t in 0usize..8) {
        let w = &*WORLD;
        let p = random_program(seed, OUTPUT_TYPES[t], 4);
        let first = execute(&p, w);
        if let Err(e) = &first {
            prop_assert!(!matches!(e.kind, ExecErrorKind::Tag { .. }), "{}: {}", p, e);
        }
        prop_assert_eq!(first, execute(&p, w));
    }

    #[test]
    fn filters_return_subsets(seed in any::<u64>(), t in 0usize..2) {
        let w = &*WORLD;
        let p = random_program(seed, OUTPUT_TYPES[t], 4);
        let Ok(trace) = execute_trace(&p, w) else { return Ok(()) };
        for (i, node) in p.nodes().iter().enumerate() {
            if !node.op.name().starts_with("filter_") || node.op == OpName::FilterOrder {
                continue;
            }
            let out = ids(&trace[i]).unwrap();
            let input = ids(&trace[node.inputs[0]]);
            if let Some(input) = input {
                prop_assert!(out.is_subset(&input), "{} at node {}", p, i);
            }
        }
    }
}
