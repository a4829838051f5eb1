//! World bundles for program execution: the observed target, its unseen
//! continuation and counterfactual re-simulations under single-object edits.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{Charge, Mass, ObjectSpec, PropertyGraph, SceneKind, SceneRecord, VideoSet};
use crate::physics::{simulate, InitialConditions, PhysicsConfig, PhysicsError};
use crate::program::{CfEdit, CfKind, CounterfactualWorld, ObjectProps, World};

/// Hidden properties per object id.
pub type PropertyMap = BTreeMap<usize, ObjectProps>;

#[derive(Debug, Error)]
#[error("simulating {what}: {source}")]
pub struct WorldError {
    pub what: String,
    #[source]
    pub source: PhysicsError,
}

/// Ground-truth properties of a roster.
pub fn roster_properties(roster: &[ObjectSpec]) -> PropertyMap {
    roster
        .iter()
        .map(|o| {
            (
                o.id,
                ObjectProps {
                    mass: o.mass,
                    charge: o.charge,
                },
            )
        })
        .collect()
}

/// Properties realizing a property graph: mass labels as given (light when
/// unlabeled), charges from the graph's canonical sign assignment.
pub fn graph_properties(graph: &PropertyGraph, ids: &[usize]) -> PropertyMap {
    let charges = graph.charge_assignment().unwrap_or_default();
    ids.iter()
        .map(|&id| {
            (
                id,
                ObjectProps {
                    mass: graph.mass(id).unwrap_or(Mass::Light),
                    charge: charges.get(&id).copied().unwrap_or(Charge::Neutral),
                },
            )
        })
        .collect()
}

/// Roster with hidden properties replaced from `props`.
pub fn with_properties(objects: &[ObjectSpec], props: &PropertyMap) -> Vec<ObjectSpec> {
    objects
        .iter()
        .map(|o| match props.get(&o.id) {
            Some(p) => ObjectSpec {
                mass: p.mass,
                charge: p.charge,
                ..*o
            },
            None => *o,
        })
        .collect()
}

/// Applies a single-object property edit.
pub fn apply_edit(objects: &[ObjectSpec], edit: CfEdit) -> Vec<ObjectSpec> {
    objects
        .iter()
        .map(|o| {
            if o.id != edit.object {
                return *o;
            }
            let mut o = *o;
            match edit.kind {
                CfKind::Heavy => o.mass = Mass::Heavy,
                CfKind::Light => o.mass = Mass::Light,
                CfKind::Uncharged => o.charge = Charge::Neutral,
                CfKind::OppositeCharged => o.charge = o.charge.inverted(),
            }
            o
        })
        .collect()
}

/// Re-simulates the target from its first frame with `edit` applied on top of `props`.
pub fn counterfactual_record(
    target: &SceneRecord,
    props: &PropertyMap,
    edit: CfEdit,
    cfg: &PhysicsConfig,
) -> Result<SceneRecord, WorldError> {
    let objects = apply_edit(&with_properties(&target.objects, props), edit);
    let init = InitialConditions::new(objects, target.frames[0].clone());
    simulate(&init, target.duration_s, SceneKind::Target, cfg).map_err(|source| WorldError {
        what: format!("counterfactual ({edit})"),
        source,
    })
}

/// Continues the target from its final state under `props`.
pub fn future_record(
    target: &SceneRecord,
    props: &PropertyMap,
    duration_s: f64,
    cfg: &PhysicsConfig,
) -> Result<SceneRecord, WorldError> {
    let init = InitialConditions::new(
        with_properties(&target.objects, props),
        target.end_state.clone(),
    );
    simulate(&init, duration_s, SceneKind::TargetFuture, cfg).map_err(|source| WorldError {
        what: "future".into(),
        source,
    })
}

/// How the unseen continuation of a world is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FutureSource {
    /// The generator's recorded continuation.
    Recorded,
    /// Re-simulated from the target's final state under the world's properties.
    Simulated,
}

/// Assembles the world for a set: properties, continuation and one
/// counterfactual record per requested edit.
pub fn build_world(
    set: &VideoSet,
    props: PropertyMap,
    edits: &[CfEdit],
    future: FutureSource,
    cfg: &PhysicsConfig,
) -> Result<World, WorldError> {
    let future = match future {
        FutureSource::Recorded => set.future.clone(),
        FutureSource::Simulated => future_record(&set.target, &props, set.future.duration_s, cfg)?,
    };
    let mut world = World::new(set.target.clone(), props);
    world.future = Some(future);
    add_counterfactuals(&mut world, edits, cfg)?;
    Ok(world)
}

/// Adds any missing counterfactual records for `edits`.
pub fn add_counterfactuals(
    world: &mut World,
    edits: &[CfEdit],
    cfg: &PhysicsConfig,
) -> Result<(), WorldError> {
    for &edit in edits {
        if world.counterfactual(edit).is_some() {
            continue;
        }
        let record = counterfactual_record(&world.target, &world.properties, edit, cfg)?;
        world
            .counterfactuals
            .push(CounterfactualWorld { edit, record });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EventKind;
    use crate::scene_gen::{generate_video_set, split_seeds, GenConfig};

    fn charged_set() -> VideoSet {
        let cfg = GenConfig {
            charged_probability: 1.0,
            ..Default::default()
        };
        generate_video_set(split_seeds(4, 1)[0], &cfg, &PhysicsConfig::default()).unwrap()
    }

    #[test]
    fn identity_edit_reproduces_target() {
        let set = charged_set();
        let cfg = PhysicsConfig::default();
        let props = roster_properties(&set.roster);
        let o = set.roster[0];
        let kind = if o.mass == Mass::Heavy {
            CfKind::Heavy
        } else {
            CfKind::Light
        };
        let rec = counterfactual_record(&set.target, &props, CfEdit { object: o.id, kind }, &cfg)
            .unwrap();
        assert_eq!(rec, set.target);
    }

    #[test]
    fn neutralizing_a_charged_object_removes_charge_events() {
        let set = charged_set();
        let cfg = PhysicsConfig::default();
        let props = roster_properties(&set.roster);
        let charged = set.roster.iter().find(|o| o.charge.is_charged()).unwrap();
        let edit = CfEdit {
            object: charged.id,
            kind: CfKind::Uncharged,
        };
        let rec = counterfactual_record(&set.target, &props, edit, &cfg).unwrap();
        assert!(rec
            .events
            .iter()
            .all(|e| !matches!(e.kind, EventKind::Attraction | EventKind::Repulsion)));
    }

    #[test]
    fn simulated_future_matches_recorded_under_truth() {
        let set = charged_set();
        let cfg = PhysicsConfig::default();
        let w = build_world(
            &set,
            roster_properties(&set.roster),
            &[],
            FutureSource::Simulated,
            &cfg,
        )
        .unwrap();
        assert_eq!(w.future.as_ref().unwrap(), &set.future);
        assert_eq!(set.future.frames.len(), 50);
    }

    #[test]
    fn graph_properties_realize_relative_charges() {
        let set = charged_set();
        let graph = PropertyGraph::from_roster(&set.roster);
        let props = graph_properties(&graph, &set.target.ids());
        for a in &set.roster {
            assert_eq!(props[&a.id].mass, a.mass);
            for b in &set.roster {
                let rel = props[&a.id].charge.relation(props[&b.id].charge);
                if a.id != b.id {
                    assert_eq!(rel, a.charge.relation(b.charge));
                }
            }
        }
    }
}
