mod common;

use comphy::inference::{
    contradictions, enumerate_hypotheses, infer_properties, score_hypothesis, Hypothesis,
    InferenceConfig,
};
use comphy::physics::PhysicsConfig;

use common::sets;

#[test]
fn event_rules_agree_with_enumeration_on_clean_sets() {
    let physics = PhysicsConfig::default();
    let cfg = InferenceConfig::default();
    for set in sets(31, 20) {
        let inf = infer_properties(&set, &physics, &cfg).unwrap();
        assert!(
            contradictions(&inf.rules, &inf.graph).is_empty(),
            "{:?}",
            inf.rule_conflicts
        );
    }
}

#[test]
fn adding_a_reference_never_lowers_the_discrepancy() {
    let physics = PhysicsConfig::default();
    for set in sets(32, 5) {
        let records: Vec<_> = set.observed_records().collect();
        let truth = Hypothesis::from_roster(&set.roster);
        let ids: Vec<usize> = set.roster.iter().map(|o| o.id).collect();
        let hyps = enumerate_hypotheses(&ids);
        for h in std::iter::once(&truth).chain(hyps.iter().step_by(17)) {
            let mut prev = 0.0;
            for k in 1..=records.len() {
                let s = score_hypothesis(&records[..k], h, &physics).unwrap().total;
                assert!(s >= prev, "{s} < {prev}");
                prev = s;
            }
        }
        let exact = score_hypothesis(&records, &truth, &physics).unwrap().total;
        assert_eq!(exact, 0.0);
    }
}
