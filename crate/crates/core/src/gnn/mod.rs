//! Learned components: a message-passing property learner over trajectories
//! and a charge-gated dynamics predictor, with training, evaluation,
//! checkpoints and predicted worlds built from rollouts.
//!
//! Checkpoints are JSON:
//!
//! ```json
//! { "format": "comphy-gnn/1",
//!   "ppl":      { "config": {"hidden": 64, "frames": 50}, "blocks": [{"name": "f_emb.0.w", "shape": [64, 100], "data": [...]}, ...] },
//!   "dynamics": { "config": {"hidden": 64}, "blocks": [...] } }
//! ```
//!
//! Blocks are row-major and listed in construction order; loading rejects any
//! name or shape that differs from the model built from `config`.

pub mod dynamics;
pub mod nn;
pub mod ppl;
mod train;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec2;
use crate::inference::{align_to_roster, fuse_subgraphs};
use crate::model::{
    BodyState, Charge, Labeled, Mass, ObjectSpec, PropertyGraph, RelCharge, SceneKind, SceneRecord,
    VideoSet,
};
use crate::physics::{detect_events, proximity_contacts, PhysicsConfig};

pub use dynamics::{rollout, DynConfig, Dynamics, RolloutError};
pub use nn::ParamSet;
pub use ppl::{Ppl, PplConfig};
pub use train::{
    build_dataset, dyn_loss, evaluate_dynamics, evaluate_ppl, gradient_report, ppl_loss, smooth,
    train, Dataset, DynSample, LossCurves, PplMetrics, PplSample, TrainConfig, Trained,
};

#[derive(Debug, Error)]
pub enum GnnError {
    #[error("bad model input: {0}")]
    Input(String),
    #[error("stored parameters do not match the {0} layout")]
    Layout(String),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error("non-finite {what} loss at epoch {epoch}, batch {batch}")]
    NonFinite {
        what: &'static str,
        epoch: usize,
        batch: usize,
    },
    #[error("empty training data: {0}")]
    NoData(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Mass class order of the learner's node head.
pub const MASS_CLASSES: [Mass; 2] = [Mass::Light, Mass::Heavy];
/// Relative-charge class order of the learner's edge head.
pub const CHARGE_CLASSES: [RelCharge; 3] =
    [RelCharge::Same, RelCharge::Opposite, RelCharge::Neither];

pub fn mass_class(m: Mass) -> usize {
    MASS_CLASSES.iter().position(|x| *x == m).unwrap()
}

pub fn charge_class(r: RelCharge) -> usize {
    CHARGE_CLASSES.iter().position(|x| *x == r).unwrap()
}

/// Positions resampled to `frames` evenly spaced samples and divided by the
/// arena half extent, as `[x0, y0, x1, y1, ...]` per object in record order.
pub fn trajectory_features(
    record: &SceneRecord,
    frames: usize,
    arena_half_extent: f64,
) -> Vec<Vec<f64>> {
    let n = record.frames.len();
    (0..record.objects.len())
        .map(|i| {
            let mut x = Vec::with_capacity(2 * frames);
            for t in 0..frames {
                let s = if frames > 1 {
                    t as f64 * (n - 1) as f64 / (frames - 1) as f64
                } else {
                    0.0
                };
                let k = (s.floor() as usize).min(n - 1);
                let k1 = (k + 1).min(n - 1);
                let w = s - k as f64;
                let p =
                    record.frames[k][i].position * (1.0 - w) + record.frames[k1][i].position * w;
                x.push(p.x() / arena_half_extent);
                x.push(p.y() / arena_half_extent);
            }
            x
        })
        .collect()
}

/// Partial property graph the learner reads off one record; confidences are
/// softmax probabilities, edges average both pair orders.
pub fn predict_record(
    model: &Ppl,
    record: &SceneRecord,
    physics: &PhysicsConfig,
) -> Result<PropertyGraph, GnnError> {
    let xs = trajectory_features(record, model.config.frames, physics.arena_half_extent);
    let (out, _) = model.forward(&xs)?;
    let ids = record.ids();
    let mut g = PropertyGraph::default();
    for (i, logits) in out.mass.iter().enumerate() {
        let p = nn::softmax(logits);
        let c = nn::argmax(&p);
        g.node_mass
            .insert(ids[i], Labeled::new(MASS_CLASSES[c], p[c]));
    }
    let mut sums: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for (k, &(i, j)) in out.pairs.iter().enumerate() {
        let key = (i.min(j), i.max(j));
        let e = sums.entry(key).or_insert_with(|| vec![0.0; 3]);
        e.iter_mut()
            .zip(&out.charge[k])
            .for_each(|(a, b)| *a += b / 2.0);
    }
    for ((i, j), logits) in sums {
        let p = nn::softmax(&logits);
        let c = nn::argmax(&p);
        g.set_edge(ids[i], ids[j], Labeled::new(CHARGE_CLASSES[c], p[c]));
    }
    Ok(g)
}

/// Learner predictions for every observed record, aligned to the roster and fused.
pub fn predict_graph(
    model: &Ppl,
    set: &VideoSet,
    physics: &PhysicsConfig,
) -> Result<PropertyGraph, GnnError> {
    let partials = set
        .observed_records()
        .map(|r| {
            predict_record(model, r, physics).map(|g| align_to_roster(&g, &r.objects, &set.roster))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(fuse_subgraphs(&partials))
}

/// Builds a record from predicted positions: velocities by finite
/// differences, contacts from disc proximity, then event detection.
pub fn record_from_positions(
    objects: &[ObjectSpec],
    positions: &[Vec<Vec2>],
    kind: SceneKind,
    physics: &PhysicsConfig,
) -> SceneRecord {
    let fps = physics.record_fps as f64;
    let n = positions.len();
    let frames: Vec<Vec<BodyState>> = (0..n)
        .map(|t| {
            let (a, b) = (t.saturating_sub(1), (t + 1).min(n - 1));
            let span = (b - a).max(1) as f64 / fps;
            objects
                .iter()
                .enumerate()
                .map(|(i, o)| {
                    BodyState::new(
                        positions[t][i],
                        (positions[b][i] - positions[a][i]) * (1.0 / span),
                        o.radius(),
                    )
                })
                .collect()
        })
        .collect();
    let mut record = SceneRecord {
        kind,
        objects: objects.to_vec(),
        duration_s: n as f64 / fps,
        fps: physics.record_fps,
        end_state: frames.last().cloned().unwrap_or_default(),
        frames,
        events: Vec::new(),
        contacts: Vec::new(),
    };
    record.contacts = proximity_contacts(&record, 0.02);
    record.events = detect_events(&record, physics);
    record
}

fn relation_of(objects: &[ObjectSpec]) -> impl Fn(usize, usize) -> RelCharge + '_ {
    move |i, j| objects[i].charge.relation(objects[j].charge)
}

/// Rolls the dynamics model forward from `window` (three frames of states)
/// for `n_steps` frames under the properties carried by `objects`.
pub fn predict_positions(
    model: &Dynamics,
    objects: &[ObjectSpec],
    window: &[Vec<BodyState>],
    n_steps: usize,
    physics: &PhysicsConfig,
) -> Result<Vec<Vec<Vec2>>, GnnError> {
    let history: Vec<Vec<Vec2>> = window
        .iter()
        .map(|f| f.iter().map(|s| s.position).collect())
        .collect();
    let radii: Vec<f64> = objects.iter().map(|o| o.radius()).collect();
    let masses: Vec<Mass> = objects.iter().map(|o| o.mass).collect();
    let z = dynamics::gate_matrix(objects.len(), relation_of(objects));
    rollout(
        model,
        &history,
        &radii,
        &masses,
        &z,
        n_steps,
        physics.arena_half_extent,
    )
}

/// Predicted re-run of the target from its first three frames.
pub fn predicted_counterfactual(
    model: &Dynamics,
    target: &SceneRecord,
    objects: &[ObjectSpec],
    physics: &PhysicsConfig,
) -> Result<SceneRecord, GnnError> {
    let w = dynamics::WINDOW;
    if target.frames.len() < w {
        return Err(GnnError::Input(
            "target shorter than the history window".into(),
        ));
    }
    let mut positions: Vec<Vec<Vec2>> = target.frames[..w]
        .iter()
        .map(|f| f.iter().map(|s| s.position).collect())
        .collect();
    positions.extend(predict_positions(
        model,
        objects,
        &target.frames[..w],
        target.frames.len() - w,
        physics,
    )?);
    Ok(record_from_positions(
        objects,
        &positions,
        SceneKind::Target,
        physics,
    ))
}

/// Predicted continuation after the target's final state.
pub fn predicted_future(
    model: &Dynamics,
    target: &SceneRecord,
    objects: &[ObjectSpec],
    n_frames: usize,
    physics: &PhysicsConfig,
) -> Result<SceneRecord, GnnError> {
    let w = dynamics::WINDOW;
    let n = target.frames.len();
    if n < w - 1 || n_frames == 0 {
        return Err(GnnError::Input(
            "target too short for a future window".into(),
        ));
    }
    let mut window: Vec<Vec<BodyState>> = target.frames[n + 1 - w..].to_vec();
    window.push(target.end_state.clone());
    let mut positions = vec![target
        .end_state
        .iter()
        .map(|s| s.position)
        .collect::<Vec<_>>()];
    positions.extend(predict_positions(
        model,
        objects,
        &window,
        n_frames - 1,
        physics,
    )?);
    Ok(record_from_positions(
        objects,
        &positions,
        SceneKind::TargetFuture,
        physics,
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredModel<C> {
    config: C,
    blocks: Vec<nn::Block>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    ppl: StoredModel<PplConfig>,
    dynamics: StoredModel<DynConfig>,
}

pub const CHECKPOINT_FORMAT: &str = "comphy-gnn/1";

pub fn save_checkpoint(path: &Path, ppl: &Ppl, dynamics: &Dynamics) -> Result<(), GnnError> {
    let ck = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        ppl: StoredModel {
            config: ppl.config,
            blocks: ppl.params.blocks.clone(),
        },
        dynamics: StoredModel {
            config: dynamics.config,
            blocks: dynamics.params.blocks.clone(),
        },
    };
    std::fs::write(path, serde_json::to_vec(&ck)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Ppl, Dynamics), GnnError> {
    let ck: Checkpoint = serde_json::from_slice(&std::fs::read(path)?)?;
    if ck.format != CHECKPOINT_FORMAT {
        return Err(GnnError::Checkpoint(format!(
            "unknown format `{}`",
            ck.format
        )));
    }
    let ppl = Ppl::from_params(
        ck.ppl.config,
        ParamSet {
            blocks: ck.ppl.blocks,
        },
    )?;
    let dynamics = Dynamics::from_params(
        ck.dynamics.config,
        ParamSet {
            blocks: ck.dynamics.blocks,
        },
    )?;
    if !ppl.params.is_finite() || !dynamics.params.is_finite() {
        return Err(GnnError::Checkpoint("non-finite parameters".into()));
    }
    Ok((ppl, dynamics))
}

/// Properties an object roster would carry under `graph` (mass labels, signed
/// charges from the graph's canonical assignment).
pub fn objects_under(graph: &PropertyGraph, objects: &[ObjectSpec]) -> Vec<ObjectSpec> {
    let charges = graph.charge_assignment().unwrap_or_default();
    objects
        .iter()
        .map(|o| ObjectSpec {
            mass: graph.mass(o.id).unwrap_or(Mass::Light),
            charge: charges.get(&o.id).copied().unwrap_or(Charge::Neutral),
            ..*o
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn checkpoint_round_trip_and_layout_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ppl = Ppl::new(
            PplConfig {
                hidden: 4,
                frames: 3,
            },
            &mut rng,
        );
        let dynamics = Dynamics::new(DynConfig { hidden: 4 }, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        save_checkpoint(&path, &ppl, &dynamics).unwrap();
        let (p2, d2) = load_checkpoint(&path).unwrap();
        assert_eq!(p2, ppl);
        assert_eq!(d2, dynamics);

        let mut text: serde_json::Value =
            serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
        text["ppl"]["config"]["hidden"] = 5.into();
        std::fs::write(&path, serde_json::to_vec(&text).unwrap()).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(GnnError::Layout(_))));
    }

    #[test]
    fn resampling_keeps_endpoints() {
        use crate::scene_gen::{generate_video_set, split_seeds, GenConfig};
        let physics = PhysicsConfig::default();
        let set =
            generate_video_set(split_seeds(1, 1)[0], &GenConfig::default(), &physics).unwrap();
        let r = &set.references[0];
        let xs = trajectory_features(r, 7, 5.0);
        let last = r.frames.last().unwrap();
        for (i, x) in xs.iter().enumerate() {
            assert!((x[0] - r.frames[0][i].position.x() / 5.0).abs() < 1e-12);
            assert!((x[12] - last[i].position.x() / 5.0).abs() < 1e-12);
        }
    }
}
