//! Hidden-property recovery: quick event-signature rules per video, an exact
//! search that re-simulates every admissible hypothesis against the
//! observations, and max-confidence fusion of per-video partial graphs.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec2;
use crate::model::{
    canonicalize_charges, Charge, ChargeAssignment, EventKind, Labeled, Mass, ObjectSpec, Pair,
    PropertyGraph, RelCharge, SceneRecord, VideoSet,
};
use crate::physics::{simulate, InitialConditions, PhysicsConfig, PhysicsError};
use crate::program::ObjectProps;
use crate::worlds::{with_properties, PropertyMap};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("no observed records to fit")]
    NoRecords,
    #[error("re-simulating {record}: {source}")]
    Simulation {
        record: usize,
        #[source]
        source: PhysicsError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    /// Scores within this relative distance of the best are tied.
    pub tie_tolerance: f64,
    /// Softmin temperature over total discrepancy, in squared length units.
    pub temperature: f64,
    /// Velocity-change ratio above which the less deflected body is heavy.
    pub mass_ratio_margin: f64,
    /// Ratio band around 1 read as equal (hence both light).
    pub equal_mass_band: f64,
    pub rule_confidence: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            tie_tolerance: 1e-6,
            temperature: 1e-4,
            mass_ratio_margin: 2.5,
            equal_mass_band: 1.6,
            rule_confidence: 0.9,
        }
    }
}

/// One complete assignment of hidden properties, canonical under charge inversion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub masses: BTreeMap<usize, Mass>,
    pub charges: ChargeAssignment,
}

impl Hypothesis {
    pub fn properties(&self) -> PropertyMap {
        self.masses
            .iter()
            .map(|(id, m)| {
                (
                    *id,
                    ObjectProps {
                        mass: *m,
                        charge: self.charges.get(id).copied().unwrap_or(Charge::Neutral),
                    },
                )
            })
            .collect()
    }

    pub fn from_roster(roster: &[ObjectSpec]) -> Self {
        Hypothesis {
            masses: roster.iter().map(|o| (o.id, o.mass)).collect(),
            charges: canonicalize_charges(&roster.iter().map(|o| (o.id, o.charge)).collect()),
        }
    }

    /// Heavy objects, then charged objects: smaller is simpler.
    pub fn complexity(&self) -> (usize, usize) {
        (
            self.masses.values().filter(|m| **m == Mass::Heavy).count(),
            self.charges.values().filter(|c| c.is_charged()).count(),
        )
    }

    pub fn relation(&self, a: usize, b: usize) -> RelCharge {
        let q = |id| self.charges.get(&id).copied().unwrap_or(Charge::Neutral);
        q(a).relation(q(b))
    }
}

/// Every hypothesis allowed by the set rules: at most one heavy object and
/// either no charges or exactly one charged pair (same or opposite signs).
pub fn enumerate_hypotheses(ids: &[usize]) -> Vec<Hypothesis> {
    let mut mass_options = vec![ids
        .iter()
        .map(|&id| (id, Mass::Light))
        .collect::<BTreeMap<_, _>>()];
    for &h in ids {
        let mut m = mass_options[0].clone();
        m.insert(h, Mass::Heavy);
        mass_options.push(m);
    }
    let neutral: ChargeAssignment = ids.iter().map(|&id| (id, Charge::Neutral)).collect();
    let mut charge_options = vec![neutral.clone()];
    for (i, &a) in ids.iter().enumerate() {
        for &b in &ids[i + 1..] {
            for sign_b in [Charge::Positive, Charge::Negative] {
                let mut c = neutral.clone();
                c.insert(a, Charge::Positive);
                c.insert(b, sign_b);
                charge_options.push(canonicalize_charges(&c));
            }
        }
    }
    let mut out = Vec::with_capacity(mass_options.len() * charge_options.len());
    for masses in &mass_options {
        for charges in &charge_options {
            out.push(Hypothesis {
                masses: masses.clone(),
                charges: charges.clone(),
            });
        }
    }
    out
}

/// Mean squared position error over frames and objects.
pub fn discrepancy(observed: &SceneRecord, simulated: &SceneRecord) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (fo, fs) in observed.frames.iter().zip(&simulated.frames) {
        for (a, b) in fo.iter().zip(fs) {
            sum += (a.position - b.position).norm_sq();
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitScore {
    pub hypothesis: Hypothesis,
    pub per_video: Vec<f64>,
    pub total: f64,
}

/// Re-simulates every record from its first frame under `h` and scores the fit.
pub fn score_hypothesis(
    records: &[&SceneRecord],
    h: &Hypothesis,
    cfg: &PhysicsConfig,
) -> Result<FitScore, InferenceError> {
    let props = h.properties();
    let mut per_video = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let init = InitialConditions::new(with_properties(&r.objects, &props), r.frames[0].clone());
        let sim = simulate(&init, r.duration_s, r.kind, cfg)
            .map_err(|source| InferenceError::Simulation { record: i, source })?;
        per_video.push(discrepancy(r, &sim));
    }
    let total = per_video.iter().sum();
    Ok(FitScore {
        hypothesis: h.clone(),
        per_video,
        total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerationResult {
    pub graph: PropertyGraph,
    /// Scores sorted best first; ties keep parsimony order.
    pub ranking: Vec<FitScore>,
    /// Number of hypotheses tied with the best.
    pub tied: usize,
    pub ambiguous: bool,
    pub ambiguous_objects: Vec<usize>,
    pub ambiguous_pairs: Vec<(usize, usize)>,
}

impl EnumerationResult {
    pub fn best(&self) -> &Hypothesis {
        &self.ranking[0].hypothesis
    }
}

/// Exact search over admissible hypotheses for the objects in `records`.
///
/// Labels come from the best-scoring hypothesis; when several tie, the
/// simplest one is reported and labels on which the tied set disagrees are
/// flagged. Confidences are softmin weight shares of the agreeing hypotheses.
pub fn infer_by_enumeration_records(
    records: &[&SceneRecord],
    physics: &PhysicsConfig,
    cfg: &InferenceConfig,
) -> Result<EnumerationResult, InferenceError> {
    if records.is_empty() {
        return Err(InferenceError::NoRecords);
    }
    let ids: Vec<usize> = records
        .iter()
        .flat_map(|r| r.ids())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut hyps = enumerate_hypotheses(&ids);
    hyps.sort_by_key(Hypothesis::complexity);
    let mut ranking = hyps
        .par_iter()
        .map(|h| score_hypothesis(records, h, physics))
        .collect::<Result<Vec<_>, _>>()?;
    // stable: equal scores keep the parsimony order
    ranking.sort_by(|a, b| a.total.total_cmp(&b.total));

    let best = ranking[0].total;
    let tie_bound = best + cfg.tie_tolerance * best.max(1e-12);
    let tied = ranking.iter().take_while(|s| s.total <= tie_bound).count();
    let weights: Vec<f64> = ranking
        .iter()
        .map(|s| (-(s.total - best) / cfg.temperature).exp())
        .collect();
    let wsum: f64 = weights.iter().sum();

    let chosen = &ranking[0].hypothesis;
    let mut graph = PropertyGraph::default();
    let mut ambiguous_objects = Vec::new();
    let mut ambiguous_pairs = Vec::new();
    for &id in &ids {
        let label = chosen.masses[&id];
        let agree: f64 = ranking
            .iter()
            .zip(&weights)
            .filter(|(s, _)| s.hypothesis.masses[&id] == label)
            .map(|(_, w)| w)
            .sum();
        graph
            .node_mass
            .insert(id, Labeled::new(label, agree / wsum));
        if ranking[..tied]
            .iter()
            .any(|s| s.hypothesis.masses[&id] != label)
        {
            ambiguous_objects.push(id);
        }
    }
    for (i, &a) in ids.iter().enumerate() {
        for &b in &ids[i + 1..] {
            let label = chosen.relation(a, b);
            let agree: f64 = ranking
                .iter()
                .zip(&weights)
                .filter(|(s, _)| s.hypothesis.relation(a, b) == label)
                .map(|(_, w)| w)
                .sum();
            graph.set_edge(a, b, Labeled::new(label, agree / wsum));
            if ranking[..tied]
                .iter()
                .any(|s| s.hypothesis.relation(a, b) != label)
            {
                ambiguous_pairs.push((a, b));
            }
        }
    }
    Ok(EnumerationResult {
        graph,
        ambiguous: !ambiguous_objects.is_empty() || !ambiguous_pairs.is_empty(),
        ranking,
        tied,
        ambiguous_objects,
        ambiguous_pairs,
    })
}

/// Enumeration over a set's references and target.
pub fn infer_by_enumeration(
    set: &VideoSet,
    physics: &PhysicsConfig,
    cfg: &InferenceConfig,
) -> Result<EnumerationResult, InferenceError> {
    let records: Vec<&SceneRecord> = set.observed_records().collect();
    infer_by_enumeration_records(&records, physics, cfg)
}

fn velocity(record: &SceneRecord, frame: usize, id: usize) -> Option<Vec2> {
    record.state(frame, id).map(|s| s.velocity)
}

/// Partial graph read off one record's events.
///
/// Repulsion marks a pair as same-charged and attraction as opposite. A pair
/// that comes within interaction range without either is uncharged. For an
/// isolated two-body collision the velocity changes are antiparallel with
/// magnitudes in inverse mass ratio; a lopsided ratio marks the steadier body
/// heavy and the other light, a near-even one marks both light.
pub fn infer_from_record(
    record: &SceneRecord,
    physics: &PhysicsConfig,
    cfg: &InferenceConfig,
) -> PropertyGraph {
    let mut g = PropertyGraph::default();
    let conf = cfg.rule_confidence;
    let mut charged_pairs = BTreeSet::new();
    for e in &record.events {
        let Some((a, b)) = e.pair() else { continue };
        match e.kind {
            EventKind::Repulsion => {
                g.set_edge(a, b, Labeled::new(RelCharge::Same, conf));
                charged_pairs.insert((a, b));
            }
            EventKind::Attraction => {
                g.set_edge(a, b, Labeled::new(RelCharge::Opposite, conf));
                charged_pairs.insert((a, b));
            }
            _ => {}
        }
    }
    let ids = record.ids();
    for (i, &a) in ids.iter().enumerate() {
        for &b in &ids[i + 1..] {
            let key = (a.min(b), a.max(b));
            if charged_pairs.contains(&key) {
                continue;
            }
            let (ia, ib) = (record.index_of(a).unwrap(), record.index_of(b).unwrap());
            let near = record
                .frames
                .iter()
                .any(|f| (f[ia].position - f[ib].position).norm() <= physics.interaction_range);
            if near {
                g.set_edge(a, b, Labeled::new(RelCharge::Neither, conf));
            }
        }
    }

    let mut votes: BTreeMap<usize, Labeled<Mass>> = BTreeMap::new();
    let mut vote = |id: usize, l: Labeled<Mass>| {
        let keep = votes.get(&id).is_some_and(|v| v.confidence >= l.confidence);
        if !keep {
            votes.insert(id, l);
        }
    };
    for e in record
        .events
        .iter()
        .filter(|e| e.kind == EventKind::Collision)
    {
        let Some((a, b)) = e.pair() else { continue };
        if e.frame == 0 || e.frame + 1 > record.last_frame() {
            continue;
        }
        let (before, after) = (e.frame - 1, e.frame + 1);
        let busy = record.events.iter().any(|o| {
            o.kind == EventKind::Collision
                && o.pair() != Some((a, b))
                && (o.involves(a) || o.involves(b))
                && o.frame + 1 >= before
                && o.frame <= after + 1
        });
        if busy {
            continue;
        }
        let (Some(va0), Some(va1), Some(vb0), Some(vb1)) = (
            velocity(record, before, a),
            velocity(record, after, a),
            velocity(record, before, b),
            velocity(record, after, b),
        ) else {
            continue;
        };
        let (da, db) = (va1 - va0, vb1 - vb0);
        let (na, nb) = (da.norm(), db.norm());
        if na < 1e-9 || nb < 1e-9 || da.dot(db) / (na * nb) > -0.95 {
            // walls or third bodies took part
            continue;
        }
        let ratio = na / nb;
        if ratio > cfg.mass_ratio_margin {
            vote(b, Labeled::new(Mass::Heavy, conf));
            vote(a, Labeled::new(Mass::Light, conf));
        } else if ratio < 1.0 / cfg.mass_ratio_margin {
            vote(a, Labeled::new(Mass::Heavy, conf));
            vote(b, Labeled::new(Mass::Light, conf));
        } else if ratio < cfg.equal_mass_band && ratio > 1.0 / cfg.equal_mass_band {
            vote(a, Labeled::new(Mass::Light, conf * 0.8));
            vote(b, Labeled::new(Mass::Light, conf * 0.8));
        }
    }
    g.node_mass = votes;
    g
}

/// Re-keys a partial graph from a video's object ids to roster ids by
/// matching (color, shape, material) triples. Unmatched objects are dropped.
pub fn align_to_roster(
    partial: &PropertyGraph,
    video_objects: &[ObjectSpec],
    roster: &[ObjectSpec],
) -> PropertyGraph {
    let map: BTreeMap<usize, usize> = video_objects
        .iter()
        .filter_map(|v| {
            roster
                .iter()
                .find(|r| r.triple() == v.triple())
                .map(|r| (v.id, r.id))
        })
        .collect();
    let mut out = PropertyGraph::default();
    for (id, l) in &partial.node_mass {
        if let Some(&rid) = map.get(id) {
            out.node_mass.insert(rid, *l);
        }
    }
    for (p, l) in &partial.edge_charge {
        if let (Some(&a), Some(&b)) = (map.get(&p.lo()), map.get(&p.hi())) {
            out.set_edge(a, b, *l);
        }
    }
    out
}

/// Per node and edge, keeps the most confident label. Disagreements are logged.
pub fn fuse_subgraphs(partials: &[PropertyGraph]) -> PropertyGraph {
    let mut out = PropertyGraph::default();
    for g in partials {
        for (id, l) in &g.node_mass {
            match out.node_mass.get(id) {
                Some(cur) if cur.label != l.label => {
                    warn!(
                        "conflicting mass labels for object {id}: {} vs {}",
                        cur.label, l.label
                    );
                    if l.confidence > cur.confidence {
                        out.node_mass.insert(*id, *l);
                    }
                }
                Some(cur) if cur.confidence >= l.confidence => {}
                _ => {
                    out.node_mass.insert(*id, *l);
                }
            }
        }
        for (p, l) in &g.edge_charge {
            match out.edge_charge.get(p) {
                Some(cur) if cur.label != l.label => {
                    warn!(
                        "conflicting charge labels for ({}, {}): {} vs {}",
                        p.lo(),
                        p.hi(),
                        cur.label,
                        l.label
                    );
                    if l.confidence > cur.confidence {
                        out.edge_charge.insert(*p, *l);
                    }
                }
                Some(cur) if cur.confidence >= l.confidence => {}
                _ => {
                    out.edge_charge.insert(*p, *l);
                }
            }
        }
    }
    out
}

/// Event-rule partial graphs of every observed record, aligned and fused.
pub fn infer_from_events(
    set: &VideoSet,
    physics: &PhysicsConfig,
    cfg: &InferenceConfig,
) -> PropertyGraph {
    let partials: Vec<PropertyGraph> = set
        .observed_records()
        .map(|r| align_to_roster(&infer_from_record(r, physics, cfg), &r.objects, &set.roster))
        .collect();
    fuse_subgraphs(&partials)
}

/// Labels of `rules` that `graph` contradicts.
pub fn contradictions(rules: &PropertyGraph, graph: &PropertyGraph) -> Vec<String> {
    let mut out = Vec::new();
    for (id, l) in &rules.node_mass {
        if let Some(m) = graph.mass(*id) {
            if m != l.label {
                out.push(format!(
                    "object {id}: rules say {}, graph says {m}",
                    l.label
                ));
            }
        }
    }
    for (p, l) in &rules.edge_charge {
        if let Some(r) = graph.edge(p.lo(), p.hi()) {
            if r != l.label {
                out.push(format!(
                    "pair ({}, {}): rules say {}, graph says {r}",
                    p.lo(),
                    p.hi(),
                    l.label
                ));
            }
        }
    }
    out
}

/// Full inference for a set: enumeration result plus the event-rule graph and
/// any disagreement between the two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inference {
    pub graph: PropertyGraph,
    pub rules: PropertyGraph,
    pub enumeration: EnumerationResult,
    pub rule_conflicts: Vec<String>,
}

pub fn infer_properties(
    set: &VideoSet,
    physics: &PhysicsConfig,
    cfg: &InferenceConfig,
) -> Result<Inference, InferenceError> {
    let rules = infer_from_events(set, physics, cfg);
    let enumeration = infer_by_enumeration(set, physics, cfg)?;
    let rule_conflicts = contradictions(&rules, &enumeration.graph);
    for c in &rule_conflicts {
        warn!("event rules disagree with enumeration: {c}");
    }
    Ok(Inference {
        graph: enumeration.graph.clone(),
        rules,
        enumeration,
        rule_conflicts,
    })
}

/// Fraction of mass labels and charge edges of `truth` that `graph` reproduces.
pub fn label_accuracy(graph: &PropertyGraph, truth: &PropertyGraph) -> (usize, usize) {
    let mut hit = 0;
    let mut total = 0;
    for (id, l) in &truth.node_mass {
        total += 1;
        hit += (graph.mass(*id) == Some(l.label)) as usize;
    }
    for (p, l) in &truth.edge_charge {
        total += 1;
        hit += (graph.edge(p.lo(), p.hi()) == Some(l.label)) as usize;
    }
    (hit, total)
}

/// Pairs whose edge labels differ between two graphs.
pub fn edge_differences(a: &PropertyGraph, b: &PropertyGraph) -> Vec<Pair> {
    a.edge_charge
        .iter()
        .filter(|(p, l)| b.edge(p.lo(), p.hi()) != Some(l.label))
        .map(|(p, _)| *p)
        .collect()
}
