//! Procedural generation of video sets.
//!
//! A set is drawn from a per-set seed: roster first, then a target video that
//! passes the interaction gate, its continuation, and four reference videos
//! whose casts and events make every hidden property observable.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec2;
use crate::model::{
    BodyState, Charge, Color, EventKind, Mass, Material, ObjectSpec, Question, QuestionType,
    SceneKind, SceneRecord, Shape, VideoSet, REFERENCE_COUNT,
};
use crate::physics::{simulate, InitialConditions, PhysicsConfig, PhysicsError};
use crate::program::{execute_trace, OpName, Value, World};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("gave up after {attempts} attempts: {constraint}")]
    Exhausted { constraint: String, attempts: usize },
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub seed: u64,
    pub n_objects_range: [usize; 2],
    pub n_ref_objects_range: [usize; 2],
    pub target_duration_s: f64,
    pub future_duration_s: f64,
    pub ref_duration_s: f64,
    pub max_resample_attempts: usize,
    /// 6-8 objects with both a heavy object and a charged pair.
    pub complex_mode: bool,
    pub speed_band: [f64; 2],
    /// Minimum gap between disc edges at t = 0.
    pub clearance: f64,
    /// Chance that a target object starts at rest.
    pub rest_probability: f64,
    pub charged_probability: f64,
    pub heavy_probability: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            n_objects_range: [3, 5],
            n_ref_objects_range: [2, 3],
            target_duration_s: 5.0,
            future_duration_s: 2.0,
            ref_duration_s: 2.0,
            max_resample_attempts: 200,
            complex_mode: false,
            speed_band: [0.5, 2.5],
            clearance: 0.2,
            rest_probability: 0.2,
            charged_probability: 0.5,
            heavy_probability: 0.5,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::Config(m.to_string()));
        let [lo, hi] = self.n_objects_range;
        if lo < 2 || lo > hi {
            return bad("n_objects_range must be nonempty with at least 2 objects");
        }
        let [rlo, rhi] = self.n_ref_objects_range;
        if rlo < 2 || rlo > rhi {
            return bad("n_ref_objects_range must be nonempty with at least 2 objects");
        }
        if !(self.target_duration_s > 0.0
            && self.future_duration_s > 0.0
            && self.ref_duration_s > 0.0)
        {
            return bad("durations must be positive");
        }
        if !(self.speed_band[0] >= 0.0 && self.speed_band[0] <= self.speed_band[1]) {
            return bad("speed band must be an ordered non-negative interval");
        }
        if self.max_resample_attempts == 0 {
            return bad("max_resample_attempts must be positive");
        }
        for p in [
            self.rest_probability,
            self.charged_probability,
            self.heavy_probability,
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad("probabilities must lie in [0, 1]");
            }
        }
        Ok(())
    }

    fn object_count_range(&self) -> (usize, usize) {
        if self.complex_mode {
            (6, 8)
        } else {
            (self.n_objects_range[0], self.n_objects_range[1])
        }
    }
}

/// Derives `n` independent per-set seeds from a root seed.
pub fn split_seeds(root: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    (0..n).map(|_| rng.gen()).collect()
}

/// Draws a roster with unique attribute triples and the charge/mass priors.
pub fn sample_roster(cfg: &GenConfig, rng: &mut impl Rng) -> Vec<ObjectSpec> {
    let (lo, hi) = cfg.object_count_range();
    let n = rng.gen_range(lo..=hi);
    let mut triples = Vec::new();
    for &c in Color::ALL {
        for &s in Shape::ALL {
            for &m in Material::ALL {
                triples.push((c, s, m));
            }
        }
    }
    let picked: Vec<_> = triples.choose_multiple(rng, n).copied().collect();
    let mut roster: Vec<ObjectSpec> = picked
        .into_iter()
        .enumerate()
        .map(|(id, (color, shape, material))| ObjectSpec {
            id,
            color,
            shape,
            material,
            mass: Mass::Light,
            charge: Charge::Neutral,
        })
        .collect();

    let charged = cfg.complex_mode || rng.gen_bool(cfg.charged_probability);
    if charged {
        let ids: Vec<usize> = (0..n).collect();
        for &id in ids.choose_multiple(rng, 2) {
            roster[id].charge = if rng.gen_bool(0.5) {
                Charge::Positive
            } else {
                Charge::Negative
            };
        }
    }
    let heavy = cfg.complex_mode || rng.gen_bool(cfg.heavy_probability);
    if heavy {
        let id = rng.gen_range(0..n);
        roster[id].mass = Mass::Heavy;
    }
    roster
}

fn random_velocity(cfg: &GenConfig, rng: &mut impl Rng) -> Vec2 {
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    let speed = rng.gen_range(cfg.speed_band[0]..=cfg.speed_band[1]);
    Vec2(angle.cos() * speed, angle.sin() * speed)
}

/// Rejection-samples non-overlapping positions inside a square of half-width `half`.
fn sample_positions(
    objects: &[ObjectSpec],
    half: f64,
    clearance: f64,
    rng: &mut impl Rng,
) -> Option<Vec<Vec2>> {
    let mut out: Vec<Vec2> = Vec::with_capacity(objects.len());
    for o in objects {
        let r = o.radius();
        let lim = half - r - clearance;
        let mut placed = false;
        for _ in 0..1000 {
            let p = Vec2(rng.gen_range(-lim..=lim), rng.gen_range(-lim..=lim));
            let free = out
                .iter()
                .zip(objects)
                .all(|(q, other)| (p - *q).norm() >= r + other.radius() + clearance);
            if free {
                out.push(p);
                placed = true;
                break;
            }
        }
        if !placed {
            return None;
        }
    }
    Some(out)
}

/// Samples the 5 s target (resampled until it shows an interaction) and the
/// continuation simulated from its final state.
pub fn sample_target(
    roster: &[ObjectSpec],
    cfg: &GenConfig,
    physics: &PhysicsConfig,
    rng: &mut impl Rng,
) -> Result<(InitialConditions, SceneRecord, SceneRecord), GenError> {
    let half = physics.arena_half_extent;
    for _ in 0..cfg.max_resample_attempts {
        let Some(positions) = sample_positions(roster, half, cfg.clearance, rng) else {
            continue;
        };
        let states = positions
            .into_iter()
            .zip(roster)
            .map(|(p, o)| {
                let v = if rng.gen_bool(cfg.rest_probability) {
                    Vec2::ZERO
                } else {
                    random_velocity(cfg, rng)
                };
                BodyState::new(p, v, o.radius())
            })
            .collect();
        let init = InitialConditions::new(roster.to_vec(), states);
        let target = simulate(&init, cfg.target_duration_s, SceneKind::Target, physics)?;
        if target.interaction_events().next().is_none() {
            continue;
        }
        let future = simulate(
            &InitialConditions::from_record_end(&target),
            cfg.future_duration_s,
            SceneKind::TargetFuture,
            physics,
        )?;
        return Ok((init, target, future));
    }
    Err(GenError::Exhausted {
        constraint: "target video with at least one interaction".into(),
        attempts: cfg.max_resample_attempts,
    })
}

/// What a planned reference video must show.
#[derive(Debug, Clone, PartialEq)]
enum Requirement {
    Any,
    ChargeEvent(usize, usize),
    HeavyCollision(usize),
}

/// Chooses the four reference casts: one featuring the charged pair, one the
/// heavy object, and the rest covering every object not yet cast.
fn plan_casts(
    roster: &[ObjectSpec],
    cfg: &GenConfig,
    rng: &mut impl Rng,
) -> Vec<(Vec<usize>, Requirement)> {
    let n = roster.len();
    let [rlo, rhi] = cfg.n_ref_objects_range;
    let rhi = rhi.min(n);
    let rlo = rlo.min(rhi);
    let mut sizes: Vec<usize> = (0..REFERENCE_COUNT)
        .map(|_| rng.gen_range(rlo..=rhi))
        .collect();
    while sizes.iter().sum::<usize>() < n {
        let i = sizes
            .iter()
            .position(|&s| s < rhi)
            .expect("roster too large for reference casts");
        sizes[i] += 1;
    }

    let charged: Vec<usize> = roster
        .iter()
        .filter(|o| o.charge.is_charged())
        .map(|o| o.id)
        .collect();
    let heavy = roster.iter().find(|o| o.mass == Mass::Heavy).map(|o| o.id);

    let mut plans: Vec<(Vec<usize>, Requirement)> = Vec::new();
    if let [a, b] = charged[..] {
        plans.push((vec![a, b], Requirement::ChargeEvent(a, b)));
    }
    if let Some(h) = heavy {
        plans.push((vec![h], Requirement::HeavyCollision(h)));
    }
    while plans.len() < REFERENCE_COUNT {
        plans.push((Vec::new(), Requirement::Any));
    }

    let covered: BTreeSet<usize> = plans.iter().flat_map(|(c, _)| c.iter().copied()).collect();
    let mut uncovered: Vec<usize> = (0..n).filter(|id| !covered.contains(id)).collect();
    uncovered.shuffle(rng);
    for (i, (cast, _)) in plans.iter_mut().enumerate() {
        let size = sizes[i].max(cast.len());
        while cast.len() < size {
            let next = match uncovered.pop() {
                Some(id) => id,
                None => {
                    let pool: Vec<usize> = (0..n).filter(|id| !cast.contains(id)).collect();
                    *pool.choose(rng).expect("roster has at least two objects")
                }
            };
            cast.push(next);
        }
    }
    // a pre-seeded object cast twice can leave objects over; widen casts
    while let Some(id) = uncovered.pop() {
        let cast = plans
            .iter_mut()
            .map(|(c, _)| c)
            .find(|c| c.len() < rhi)
            .expect("reference casts too small for roster");
        cast.push(id);
    }
    for (cast, _) in plans.iter_mut() {
        cast.sort_unstable();
    }
    plans.shuffle(rng);
    plans
}

fn satisfies(record: &SceneRecord, req: &Requirement) -> bool {
    if record.interaction_events().next().is_none() {
        return false;
    }
    match *req {
        Requirement::Any => true,
        Requirement::ChargeEvent(a, b) => record.events.iter().any(|e| {
            matches!(e.kind, EventKind::Attraction | EventKind::Repulsion)
                && e.pair() == Some((a.min(b), a.max(b)))
        }),
        Requirement::HeavyCollision(h) => record
            .events
            .iter()
            .any(|e| e.kind == EventKind::Collision && e.involves(h)),
    }
}

/// Samples one reference video for `cast`, aiming every object roughly at a
/// partner so that interactions are likely within the short clip.
fn sample_reference(
    roster: &[ObjectSpec],
    cast: &[usize],
    req: &Requirement,
    cfg: &GenConfig,
    physics: &PhysicsConfig,
    rng: &mut impl Rng,
) -> Result<SceneRecord, GenError> {
    let objects: Vec<ObjectSpec> = cast.iter().map(|&id| roster[id]).collect();
    let half = (physics.arena_half_extent * 0.6).max(1.5);
    for _ in 0..cfg.max_resample_attempts {
        let Some(positions) = sample_positions(&objects, half, cfg.clearance, rng) else {
            continue;
        };
        let mut states = Vec::with_capacity(objects.len());
        for (i, o) in objects.iter().enumerate() {
            let partner = match *req {
                Requirement::HeavyCollision(h) if o.id != h => {
                    objects.iter().position(|p| p.id == h).unwrap()
                }
                _ => {
                    let others: Vec<usize> = (0..objects.len()).filter(|&j| j != i).collect();
                    *others.choose(rng).unwrap()
                }
            };
            let dir = positions[partner] - positions[i];
            let base = dir.y().atan2(dir.x());
            let angle = base + rng.gen_range(-0.3..=0.3);
            let speed = rng.gen_range(cfg.speed_band[0]..=cfg.speed_band[1]);
            states.push(BodyState::new(
                positions[i],
                Vec2(angle.cos() * speed, angle.sin() * speed),
                o.radius(),
            ));
        }
        let init = InitialConditions::new(objects.clone(), states);
        let record = simulate(&init, cfg.ref_duration_s, SceneKind::Reference, physics)?;
        if satisfies(&record, req) {
            return Ok(record);
        }
    }
    Err(GenError::Exhausted {
        constraint: format!("reference over {cast:?} satisfying {req:?}"),
        attempts: cfg.max_resample_attempts,
    })
}

/// Samples the four reference videos for a roster.
pub fn sample_reference_set(
    roster: &[ObjectSpec],
    cfg: &GenConfig,
    physics: &PhysicsConfig,
    rng: &mut impl Rng,
) -> Result<Vec<SceneRecord>, GenError> {
    plan_casts(roster, cfg, rng)
        .iter()
        .map(|(cast, req)| sample_reference(roster, cast, req, cfg, physics, rng))
        .collect()
}

/// Generates one complete set from its own seed.
pub fn generate_video_set(
    seed: u64,
    cfg: &GenConfig,
    physics: &PhysicsConfig,
) -> Result<VideoSet, GenError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let roster = sample_roster(cfg, &mut rng);
    let (_, target, future) = sample_target(&roster, cfg, physics, &mut rng)?;
    let references = sample_reference_set(&roster, cfg, physics, &mut rng)?;
    Ok(VideoSet {
        roster,
        target,
        references,
        future,
    })
}

/// True when two objects share an interaction event in a reference or the target.
pub fn pair_interacts(set: &VideoSet, a: usize, b: usize) -> bool {
    let key = (a.min(b), a.max(b));
    set.observed_records()
        .any(|r| r.interaction_events().any(|e| e.pair() == Some(key)))
}

/// Checks that every mass-comparison and charge-relation question is about a
/// pair that interacts in some observed video.
///
/// `world` must carry the ground-truth target and properties; the compared
/// objects are recovered by executing the question program.
pub fn check_informativeness(set: &VideoSet, questions: &[Question], world: &World) -> bool {
    questions
        .iter()
        .filter(|q| q.qtype == QuestionType::Factual)
        .all(|q| {
            let nodes = q.program.nodes();
            let Some(cmp) = nodes.iter().find(|n| {
                matches!(
                    n.op,
                    OpName::IsHeavier
                        | OpName::IsLighter
                        | OpName::IsSameCharged
                        | OpName::IsOppositeCharged
                )
            }) else {
                return true;
            };
            let Ok(trace) = execute_trace(&q.program, world) else {
                return false;
            };
            match (&trace[cmp.inputs[0]], &trace[cmp.inputs[1]]) {
                (Value::Object(a), Value::Object(b)) => pair_interacts(set, *a, *b),
                _ => false,
            }
        })
}
