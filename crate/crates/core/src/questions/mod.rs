//! Question generation over a video set's ground truth, corpus balancing and
//! corpus statistics.

pub mod nl;

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    Choice, Color, EventKind, Mass, Material, ObjectSpec, Question, QuestionType, SceneRecord,
    Shape, VideoSet,
};
use crate::physics::PhysicsConfig;
use crate::program::{execute, moving_predicate, CfEdit, CfKind, Program, World};
use crate::scene_gen::{check_informativeness, pair_interacts};
use crate::worlds::{
    add_counterfactuals, build_world, roster_properties, FutureSource, WorldError,
};

pub use nl::{
    match_template, parse_choice_nl, parse_question_nl, NlError, Slots, Template, TEMPLATES,
};

#[derive(Debug, Error)]
pub enum QuestionError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Nl(#[from] NlError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuestionConfig {
    /// Upper bound per factual template family.
    pub per_factual_template: usize,
    pub max_counterfactual: usize,
    pub max_predictive: usize,
    /// Inclusive bounds on options per multiple-choice question.
    pub choices_range: [usize; 2],
    /// Random filler draws per template before giving up.
    pub attempts: usize,
}

impl Default for QuestionConfig {
    fn default() -> Self {
        QuestionConfig {
            per_factual_template: 2,
            max_counterfactual: 8,
            max_predictive: 1,
            choices_range: [3, 4],
            attempts: 40,
        }
    }
}

/// A referring expression over static attributes; unset fields are not mentioned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Descriptor {
    pub color: Option<Color>,
    pub material: Option<Material>,
    pub shape: Option<Shape>,
}

impl Descriptor {
    pub fn selects(&self, o: &ObjectSpec) -> bool {
        self.color.is_none_or(|c| c == o.color)
            && self.material.is_none_or(|m| m == o.material)
            && self.shape.is_none_or(|s| s == o.shape)
    }

    pub fn size(&self) -> usize {
        self.color.is_some() as usize
            + self.material.is_some() as usize
            + self.shape.is_some() as usize
    }

    pub fn words(&self, plural: bool) -> String {
        let mut w: Vec<&str> = Vec::new();
        w.extend(self.color.map(Color::as_str));
        w.extend(self.material.map(Material::as_str));
        let noun = self.shape.map(Shape::as_str).unwrap_or("object");
        let noun = if plural {
            format!("{noun}s")
        } else {
            noun.to_string()
        };
        w.push(&noun);
        w.join(" ")
    }

    /// All eight descriptors that select `o`.
    pub fn all_for(o: &ObjectSpec) -> Vec<Descriptor> {
        let mut out = Vec::with_capacity(8);
        for bits in 0..8u8 {
            out.push(Descriptor {
                color: (bits & 1 != 0).then_some(o.color),
                material: (bits & 2 != 0).then_some(o.material),
                shape: (bits & 4 != 0).then_some(o.shape),
            });
        }
        out
    }
}

/// Shortest descriptors that pick out `o` alone among `objects`.
pub fn unique_descriptors(objects: &[ObjectSpec], o: &ObjectSpec) -> Vec<Descriptor> {
    let unique: Vec<Descriptor> = Descriptor::all_for(o)
        .into_iter()
        .filter(|d| objects.iter().filter(|x| d.selects(x)).count() == 1)
        .collect();
    let min = unique.iter().map(Descriptor::size).min().unwrap_or(0);
    unique.into_iter().filter(|d| d.size() == min).collect()
}

fn unique_phrase(objects: &[ObjectSpec], id: usize, rng: &mut impl Rng) -> Option<String> {
    let o = objects.iter().find(|o| o.id == id)?;
    unique_descriptors(objects, o)
        .choose(rng)
        .map(|d| d.words(false))
}

fn slots(pairs: &[(&str, String)]) -> Slots {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
}

fn template(id: &str) -> &'static Template {
    nl::template(id).expect("known template")
}

fn factual(t: &Template, s: &Slots, world: &World) -> Option<(String, Program, String)> {
    let (text, program) = nl::instantiate(t, s).ok()?;
    let answer = execute(&program, world).ok()?.answer_text();
    Some((text, program, answer))
}

fn question(
    t: &Template,
    text: String,
    program: Program,
    choices: Vec<Choice>,
    answer: Option<String>,
) -> Question {
    Question {
        id: String::new(),
        template: t.id.to_string(),
        text,
        qtype: t.qtype,
        program,
        choices,
        answer,
    }
}

/// Interaction events of a record keyed by kind and id pair.
pub fn interaction_keys(record: &SceneRecord) -> BTreeSet<(EventKind, (usize, usize))> {
    record
        .interaction_events()
        .filter_map(|e| e.pair().map(|p| (e.kind, p)))
        .collect()
}

fn interacting_objects(record: &SceneRecord) -> BTreeSet<usize> {
    record
        .interaction_events()
        .flat_map(|e| e.participants.iter().copied())
        .collect()
}

/// Single-answer questions: attribute queries, existence, counting, mass and
/// charge comparisons and the two-charged-objects query.
pub fn instantiate_factual(
    set: &VideoSet,
    world: &World,
    cfg: &QuestionConfig,
    rng: &mut impl Rng,
) -> Vec<Question> {
    let objects = &set.target.objects;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    let mut push = |out: &mut Vec<Question>, q: Question| {
        if seen.insert(q.text.clone()) {
            out.push(q);
            true
        } else {
            false
        }
    };
    let moving = |id: usize| {
        world
            .target
            .state(0, id)
            .map(|s| moving_predicate(s, world.moving_threshold))
            .unwrap_or(false)
    };

    // attribute query narrowed by a hidden property
    let t = template("query");
    let mut made = 0;
    for _ in 0..cfg.attempts {
        if made == cfg.per_factual_template {
            break;
        }
        let o = objects.choose(rng).expect("non-empty target");
        let pa = [
            o.mass.as_str(),
            if o.charge.is_charged() {
                "charged"
            } else {
                "uncharged"
            },
        ];
        let pa = pa.choose(rng).unwrap().to_string();
        let da = match rng.gen_range(0..2) {
            0 => String::new(),
            _ => (if moving(o.id) { "moving" } else { "stationary" }).to_string(),
        };
        let ds: Vec<Descriptor> = Descriptor::all_for(o)
            .into_iter()
            .filter(|d| d.size() < 3 && objects.iter().filter(|x| d.selects(x)).count() >= 2)
            .collect();
        let Some(d) = ds.choose(rng) else { continue };
        let mut concepts = Vec::new();
        if d.color.is_none() {
            concepts.push("color");
        }
        if d.material.is_none() {
            concepts.push("material");
        }
        if d.shape.is_none() {
            concepts.push("shape");
        }
        let h = concepts.choose(rng).unwrap().to_string();
        let s = slots(&[("H", h), ("DA", da), ("SA", d.words(false)), ("PA", pa)]);
        if let Some((text, program, answer)) = factual(t, &s, world) {
            made += push(&mut out, question(t, text, program, vec![], Some(answer))) as usize;
        }
    }

    // existence and counting over random sets
    for id in ["exist", "count"] {
        let t = template(id);
        let mut made = 0;
        for _ in 0..cfg.attempts {
            if made == cfg.per_factual_template {
                break;
            }
            let want_yes = rng.gen_bool(0.5);
            let o = objects.choose(rng).unwrap();
            let d = *Descriptor::all_for(o).choose(rng).unwrap();
            let pa = ["", "heavy", "light", "charged", "uncharged"]
                .choose(rng)
                .unwrap()
                .to_string();
            let da = ["", "moving", "stationary"]
                .choose(rng)
                .unwrap()
                .to_string();
            let ti = if da.is_empty() {
                String::new()
            } else {
                [nl::TI_BEGIN, nl::TI_END].choose(rng).unwrap().to_string()
            };
            let s = slots(&[("PA", pa), ("DA", da), ("SAS", d.words(true)), ("TI", ti)]);
            let Some((text, program, answer)) = factual(t, &s, world) else {
                continue;
            };
            if id == "exist" && (answer == "yes") != want_yes {
                continue;
            }
            made += push(&mut out, question(t, text, program, vec![], Some(answer))) as usize;
        }
    }

    // pairwise comparisons, only for pairs seen interacting
    let pairs: Vec<(usize, usize)> = objects
        .iter()
        .flat_map(|a| objects.iter().map(move |b| (a.id, b.id)))
        .filter(|(a, b)| a != b && pair_interacts(set, *a, *b))
        .collect();
    for ids in [
        ["mass_heavier", "mass_lighter"],
        ["charge_opposite", "charge_same"],
    ] {
        let mut made = 0;
        for _ in 0..cfg.attempts {
            if made == cfg.per_factual_template {
                break;
            }
            let Some(&(a, b)) = pairs.choose(rng) else {
                break;
            };
            if ids[0] == "charge_opposite"
                && !(world.properties[&a].charge.is_charged()
                    || world.properties[&b].charge.is_charged())
            {
                continue;
            }
            let t = template(ids.choose(rng).unwrap());
            let (Some(pa), Some(pb)) = (
                unique_phrase(objects, a, rng),
                unique_phrase(objects, b, rng),
            ) else {
                continue;
            };
            let s = slots(&[("SA1", pa), ("SA2", pb)]);
            if let Some((text, program, answer)) = factual(t, &s, world) {
                made += push(&mut out, question(t, text, program, vec![], Some(answer))) as usize;
            }
        }
    }

    if objects
        .iter()
        .filter(|o| world.properties[&o.id].charge.is_charged())
        .count()
        == 2
    {
        let t = template("query_both");
        let mut hs = ["colors", "shapes", "materials"];
        hs.shuffle(rng);
        for h in hs.iter().take(cfg.per_factual_template.min(1)) {
            if let Some((text, program, answer)) =
                factual(t, &slots(&[("HS", h.to_string())]), world)
            {
                push(&mut out, question(t, text, program, vec![], Some(answer)));
            }
        }
    }

    out
}

/// A candidate choice: an interaction between two objects and whether it is invented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Candidate {
    kind: EventKind,
    pair: (usize, usize),
    fabricated: bool,
}

/// Picks 3–4 options with at least one of each label, preferring real events.
fn pick_choices(
    mut trues: Vec<Candidate>,
    mut falses: Vec<Candidate>,
    cfg: &QuestionConfig,
    rng: &mut impl Rng,
) -> Option<Vec<(Candidate, bool)>> {
    let order = |v: &mut Vec<Candidate>, rng: &mut dyn rand::RngCore| {
        v.shuffle(rng);
        v.sort_by_key(|c| c.fabricated);
    };
    order(&mut trues, rng);
    order(&mut falses, rng);
    if trues.is_empty() || falses.is_empty() {
        return None;
    }
    let n = rng.gen_range(cfg.choices_range[0]..=cfg.choices_range[1]);
    let mut picks = vec![(trues[0], true), (falses[0], false)];
    let mut rest: Vec<(Candidate, bool)> = trues[1..]
        .iter()
        .map(|c| (*c, true))
        .chain(falses[1..].iter().map(|c| (*c, false)))
        .collect();
    rest.shuffle(rng);
    rest.sort_by_key(|(c, _)| c.fabricated);
    picks.extend(rest.into_iter().take(n.saturating_sub(2)));
    if picks.len() < cfg.choices_range[0] {
        return None;
    }
    picks.shuffle(rng);
    Some(picks)
}

/// Never-occurring collisions among target objects, relative to `events`.
fn fabricated_collisions(
    objects: &[ObjectSpec],
    events: &BTreeSet<(EventKind, (usize, usize))>,
) -> Vec<Candidate> {
    let mut out = Vec::new();
    for (i, a) in objects.iter().enumerate() {
        for b in &objects[i + 1..] {
            let pair = (a.id.min(b.id), a.id.max(b.id));
            if !events.contains(&(EventKind::Collision, pair)) {
                out.push(Candidate {
                    kind: EventKind::Collision,
                    pair,
                    fabricated: true,
                });
            }
        }
    }
    out
}

/// Renders the picked choices and checks each label against the executor.
fn build_choices(
    stem: &Program,
    q: &str,
    picks: &[(Candidate, bool)],
    world: &World,
    objects: &[ObjectSpec],
    rng: &mut impl Rng,
) -> Option<Vec<Choice>> {
    let mut out = Vec::new();
    for &(c, label) in picks {
        let (mut a, mut b) = c.pair;
        if rng.gen_bool(0.5) {
            std::mem::swap(&mut a, &mut b);
        }
        let s = slots(&[
            ("SA1", unique_phrase(objects, a, rng)?),
            ("SA2", unique_phrase(objects, b, rng)?),
        ]);
        let (text, program) = nl::instantiate_choice(stem, q, c.kind, &s).ok()?;
        let executed = execute(&program, world).ok()?.as_bool()?;
        if executed != label {
            warn!("choice `{text}` labeled {label} but executes to {executed}");
            return None;
        }
        out.push(Choice {
            text,
            program,
            answer: label,
        });
    }
    Some(out)
}

/// Single-object property edits on interacting objects; labels come from re-simulation.
///
/// Missing counterfactual records are simulated into `world`.
pub fn instantiate_counterfactual(
    set: &VideoSet,
    world: &mut World,
    cfg: &QuestionConfig,
    physics: &PhysicsConfig,
    rng: &mut impl Rng,
) -> Vec<Question> {
    let objects = set.target.objects.clone();
    let target_events = interaction_keys(&set.target);
    let mut edits = Vec::new();
    for id in interacting_objects(&set.target) {
        let p = world.properties[&id];
        let mass = if p.mass == Mass::Heavy {
            CfKind::Light
        } else {
            CfKind::Heavy
        };
        edits.push(CfEdit {
            object: id,
            kind: mass,
        });
        if p.charge.is_charged() {
            edits.push(CfEdit {
                object: id,
                kind: CfKind::Uncharged,
            });
            edits.push(CfEdit {
                object: id,
                kind: CfKind::OppositeCharged,
            });
        }
    }
    edits.shuffle(rng);

    let mut out = Vec::new();
    for edit in edits {
        if out.len() >= cfg.max_counterfactual {
            break;
        }
        if let Err(e) = add_counterfactuals(world, &[edit], physics) {
            warn!("skipping counterfactual question: {e}");
            continue;
        }
        let cf_events = interaction_keys(world.counterfactual(edit).expect("just added"));
        let (t, word_slot, word) = match edit.kind {
            CfKind::Heavy => (template("counterfactual_mass"), "MP", "heavier"),
            CfKind::Light => (template("counterfactual_mass"), "MP", "lighter"),
            CfKind::Uncharged => (template("counterfactual_charge"), "CP", "uncharged"),
            CfKind::OppositeCharged => (
                template("counterfactual_charge"),
                "CP",
                "oppositely charged",
            ),
        };
        let mut qs = [nl::Q_HAPPEN, nl::Q_NOT_HAPPEN];
        qs.shuffle(rng);
        for q in qs {
            if out.len() >= cfg.max_counterfactual {
                break;
            }
            let Some(sa) = unique_phrase(&objects, edit.object, rng) else {
                continue;
            };
            let s = slots(&[
                ("SA", sa),
                (word_slot, word.to_string()),
                ("Q", q.to_string()),
            ]);
            let Ok((text, stem)) = nl::instantiate(t, &s) else {
                continue;
            };

            let real = |c: &(EventKind, (usize, usize))| Candidate {
                kind: c.0,
                pair: c.1,
                fabricated: false,
            };
            let happened: Vec<Candidate> = cf_events.iter().map(real).collect();
            let vanished: Vec<Candidate> = target_events.difference(&cf_events).map(real).collect();
            let invented = fabricated_collisions(&objects, &cf_events)
                .into_iter()
                .filter(|c| !target_events.contains(&(c.kind, c.pair)));
            let (trues, falses) = if q == nl::Q_HAPPEN {
                (happened, vanished.into_iter().chain(invented).collect())
            } else {
                (vanished.into_iter().chain(invented).collect(), happened)
            };
            let Some(picks) = pick_choices(trues, falses, cfg, rng) else {
                continue;
            };
            let Some(choices) = build_choices(&stem, q, &picks, world, &objects, rng) else {
                continue;
            };
            out.push(question(t, text, stem, choices, None));
        }
    }
    out
}

/// Which of these events happens in the unseen continuation.
pub fn instantiate_predictive(
    set: &VideoSet,
    world: &World,
    cfg: &QuestionConfig,
    rng: &mut impl Rng,
) -> Vec<Question> {
    if cfg.max_predictive == 0 {
        return Vec::new();
    }
    let objects = &set.target.objects;
    let future = interaction_keys(&set.future);
    let observed = interaction_keys(&set.target);
    let trues: Vec<Candidate> = future
        .iter()
        .map(|c| Candidate {
            kind: c.0,
            pair: c.1,
            fabricated: false,
        })
        .collect();
    let falses: Vec<Candidate> = observed
        .difference(&future)
        .map(|c| Candidate {
            kind: c.0,
            pair: c.1,
            fabricated: false,
        })
        .chain(
            fabricated_collisions(objects, &future)
                .into_iter()
                .filter(|c| !observed.contains(&(c.kind, c.pair))),
        )
        .collect();
    let t = template("predictive");
    let Ok((text, stem)) = nl::instantiate(t, &Slots::new()) else {
        return Vec::new();
    };
    let Some(picks) = pick_choices(trues, falses, cfg, rng) else {
        return Vec::new();
    };
    match build_choices(&stem, "", &picks, world, objects, rng) {
        Some(choices) => vec![question(t, text, stem, choices, None)],
        None => Vec::new(),
    }
}

/// Questions for one set plus the ground-truth world (with every
/// counterfactual record the questions refer to).
#[derive(Debug, Clone)]
pub struct GeneratedQuestions {
    pub questions: Vec<Question>,
    pub world: World,
}

/// All question families for one set; ids are `q0`, `q1`, ... in emission order.
pub fn generate_questions(
    set: &VideoSet,
    cfg: &QuestionConfig,
    physics: &PhysicsConfig,
    rng: &mut impl Rng,
) -> Result<GeneratedQuestions, QuestionError> {
    let mut world = build_world(
        set,
        roster_properties(&set.roster),
        &[],
        FutureSource::Recorded,
        physics,
    )?;
    let mut questions = instantiate_factual(set, &world, cfg, rng);
    questions.retain(|q| check_informativeness(set, std::slice::from_ref(q), &world));
    questions.extend(instantiate_counterfactual(
        set, &mut world, cfg, physics, rng,
    ));
    questions.extend(instantiate_predictive(set, &world, cfg, rng));
    for (i, q) in questions.iter_mut().enumerate() {
        q.id = format!("q{i}");
    }
    Ok(GeneratedQuestions { questions, world })
}

/// Returns the questions whose stored answer or labels disagree with executing
/// their programs on `world`.
pub fn unsound_questions<'a>(questions: &'a [Question], world: &World) -> Vec<&'a Question> {
    questions
        .iter()
        .filter(|q| {
            if q.qtype.is_multiple_choice() {
                q.choices.iter().any(|c| {
                    execute(&c.program, world).ok().and_then(|v| v.as_bool()) != Some(c.answer)
                })
            } else {
                execute(&q.program, world).ok().map(|v| v.answer_text()) != q.answer
            }
        })
        .collect()
}

/// Coarse question class used for corpus proportions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionClass {
    Factual,
    Counterfactual,
    Predictive,
}

impl QuestionClass {
    pub const ALL: [QuestionClass; 3] = [
        QuestionClass::Factual,
        QuestionClass::Counterfactual,
        QuestionClass::Predictive,
    ];

    pub fn of(qtype: QuestionType) -> QuestionClass {
        match qtype {
            QuestionType::Factual => QuestionClass::Factual,
            QuestionType::Predictive => QuestionClass::Predictive,
            _ => QuestionClass::Counterfactual,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BalanceConfig {
    /// Target shares of factual, counterfactual and predictive questions.
    pub shares: [f64; 3],
    /// Allowed absolute deviation per share.
    pub tolerance: f64,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        BalanceConfig {
            shares: [0.42, 0.50, 0.08],
            tolerance: 0.10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub before: [usize; 3],
    pub after: [usize; 3],
    pub proportions: [f64; 3],
    pub within_tolerance: bool,
}

fn class_counts<'a>(questions: impl Iterator<Item = &'a Question>) -> [usize; 3] {
    let mut c = [0; 3];
    for q in questions {
        c[QuestionClass::of(q.qtype).index()] += 1;
    }
    c
}

fn proportions(c: [usize; 3]) -> [f64; 3] {
    let n: usize = c.iter().sum();
    if n == 0 {
        return [0.0; 3];
    }
    c.map(|x| x as f64 / n as f64)
}

/// Subsamples per-set question lists so the pooled class mix matches the
/// target shares as closely as the scarcest class allows.
///
/// The largest corpus with exact shares fitting inside the pool is kept;
/// which questions survive within a class is drawn uniformly from `rng`.
pub fn balance_corpus(
    sets: &mut [Vec<Question>],
    cfg: &BalanceConfig,
    rng: &mut impl Rng,
) -> BalanceReport {
    let before = class_counts(sets.iter().flatten());
    let total = (0..3)
        .filter(|&i| cfg.shares[i] > 0.0)
        .map(|i| before[i] as f64 / cfg.shares[i])
        .fold(f64::INFINITY, f64::min);
    let keep: [usize; 3] = std::array::from_fn(|i| {
        if total.is_finite() {
            ((total * cfg.shares[i]).round() as usize).min(before[i])
        } else {
            before[i]
        }
    });

    let mut dropped: BTreeSet<(usize, usize)> = BTreeSet::new();
    for class in QuestionClass::ALL {
        let mut members: Vec<(usize, usize)> = sets
            .iter()
            .enumerate()
            .flat_map(|(s, qs)| qs.iter().enumerate().map(move |(i, q)| (s, i, q)))
            .filter(|(_, _, q)| QuestionClass::of(q.qtype) == class)
            .map(|(s, i, _)| (s, i))
            .collect();
        let k = keep[class.index()];
        if k == members.len() {
            continue;
        }
        members.shuffle(rng);
        dropped.extend(members.into_iter().skip(k));
    }
    for (s, qs) in sets.iter_mut().enumerate() {
        let mut i = 0;
        qs.retain(|_| {
            i += 1;
            !dropped.contains(&(s, i - 1))
        });
    }

    let after = class_counts(sets.iter().flatten());
    let p = proportions(after);
    BalanceReport {
        before,
        after,
        proportions: p,
        within_tolerance: (0..3).all(|i| (p[i] - cfg.shares[i]).abs() <= cfg.tolerance),
    }
}

/// Corpus-level counts, class proportions and answer histograms per template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub questions: usize,
    pub choices: usize,
    pub by_class: BTreeMap<QuestionClass, usize>,
    pub proportions: BTreeMap<QuestionClass, f64>,
    pub by_template: BTreeMap<String, usize>,
    /// Factual answers, or `true`/`false` choice labels, per template.
    pub answers: BTreeMap<String, BTreeMap<String, usize>>,
}

pub fn corpus_stats<'a>(questions: impl IntoIterator<Item = &'a Question>) -> CorpusStats {
    let mut stats = CorpusStats {
        questions: 0,
        choices: 0,
        by_class: QuestionClass::ALL.iter().map(|c| (*c, 0)).collect(),
        proportions: BTreeMap::new(),
        by_template: BTreeMap::new(),
        answers: BTreeMap::new(),
    };
    for q in questions {
        stats.questions += 1;
        stats.choices += q.choices.len();
        *stats
            .by_class
            .entry(QuestionClass::of(q.qtype))
            .or_default() += 1;
        *stats.by_template.entry(q.template.clone()).or_default() += 1;
        let hist = stats.answers.entry(q.template.clone()).or_default();
        match &q.answer {
            Some(a) => *hist.entry(a.clone()).or_default() += 1,
            None => {
                for c in &q.choices {
                    *hist.entry(c.answer.to_string()).or_default() += 1;
                }
            }
        }
    }
    let n = stats.questions.max(1) as f64;
    stats.proportions = stats
        .by_class
        .iter()
        .map(|(c, k)| (*c, *k as f64 / n))
        .collect();
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene_gen::{generate_video_set, split_seeds, GenConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn corpus(n: usize, gen: &GenConfig) -> Vec<(VideoSet, GeneratedQuestions)> {
        let physics = PhysicsConfig::default();
        split_seeds(21, n)
            .into_iter()
            .map(|seed| {
                let set = generate_video_set(seed, gen, &physics).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let g = generate_questions(&set, &QuestionConfig::default(), &physics, &mut rng)
                    .unwrap();
                (set, g)
            })
            .collect()
    }

    #[test]
    fn questions_are_sound_and_parse_back() {
        for (set, g) in corpus(6, &GenConfig::default()) {
            assert!(unsound_questions(&g.questions, &g.world).is_empty());
            for q in &g.questions {
                assert!(q.violations().is_empty(), "{:?}", q.violations());
                assert!(!q.text.contains('_'), "orphan slot in {}", q.text);
                assert_eq!(parse_question_nl(&q.text).unwrap(), q.program, "{}", q.text);
                for c in &q.choices {
                    assert_eq!(
                        parse_choice_nl(&q.text, &c.text).unwrap(),
                        c.program,
                        "{}",
                        c.text
                    );
                }
                if q.qtype.is_multiple_choice() {
                    assert!((3..=4).contains(&q.choices.len()));
                    assert!(
                        q.choices.iter().any(|c| c.answer) && q.choices.iter().any(|c| !c.answer)
                    );
                }
                if q.qtype.is_counterfactual() {
                    let edits =
                        crate::program::counterfactual_requests(&q.program, &g.world).unwrap();
                    assert!(edits.iter().all(|e| set
                        .target
                        .interaction_events()
                        .any(|ev| ev.involves(e.object))));
                }
            }
        }
    }

    #[test]
    fn families_are_covered() {
        let gen = GenConfig {
            complex_mode: true,
            ..Default::default()
        };
        let all: Vec<Question> = corpus(8, &gen)
            .into_iter()
            .flat_map(|(_, g)| g.questions)
            .collect();
        let templates: BTreeSet<&str> = all.iter().map(|q| q.template.as_str()).collect();
        for t in TEMPLATES {
            assert!(
                templates.contains(t.id),
                "template {} never instantiated",
                t.id
            );
        }
    }

    #[test]
    fn balancing_hits_target_mix() {
        let mut sets: Vec<Vec<Question>> = corpus(12, &GenConfig::default())
            .into_iter()
            .map(|(_, g)| g.questions)
            .collect();
        let report = balance_corpus(
            &mut sets,
            &BalanceConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert!(report.within_tolerance, "{report:?}");
        assert!(report.after[2] > 0);
    }

    fn dummy(qtype: QuestionType) -> Question {
        Question {
            id: String::new(),
            template: "t".into(),
            text: String::new(),
            qtype,
            program: "(objects)".parse().unwrap(),
            choices: vec![],
            answer: None,
        }
    }

    #[test]
    fn skewed_pool_is_subsampled_into_band() {
        let mut pool = Vec::new();
        pool.extend((0..60).map(|_| dummy(QuestionType::Factual)));
        pool.extend((0..30).map(|_| dummy(QuestionType::CounterfactualMass)));
        pool.extend((0..10).map(|_| dummy(QuestionType::Predictive)));
        let mut sets = vec![pool];
        let r = balance_corpus(
            &mut sets,
            &BalanceConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(1),
        );
        assert!(r.within_tolerance);
        assert_eq!(r.after, [25, 30, 5]);
    }

    #[test]
    fn balanced_pool_is_untouched() {
        let mut pool = Vec::new();
        pool.extend((0..42).map(|_| dummy(QuestionType::Factual)));
        pool.extend((0..50).map(|_| dummy(QuestionType::CounterfactualCharge)));
        pool.extend((0..8).map(|_| dummy(QuestionType::Predictive)));
        let mut sets = vec![pool.clone()];
        let r = balance_corpus(
            &mut sets,
            &BalanceConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(1),
        );
        assert_eq!(r.before, r.after);
        assert_eq!(sets[0], pool);
    }

    #[test]
    fn unique_descriptors_are_minimal() {
        let mk = |id, color, shape| ObjectSpec {
            id,
            color,
            shape,
            material: Material::Metal,
            mass: Mass::Light,
            charge: crate::model::Charge::Neutral,
        };
        let objs = [
            mk(0, Color::Red, Shape::Cube),
            mk(1, Color::Red, Shape::Sphere),
            mk(2, Color::Blue, Shape::Sphere),
        ];
        let d = unique_descriptors(&objs, &objs[0]);
        assert_eq!(
            d.iter().map(|d| d.words(false)).collect::<Vec<_>>(),
            vec!["cube"]
        );
        let d = unique_descriptors(&objs, &objs[1]);
        assert_eq!(
            d.iter().map(|d| d.words(false)).collect::<Vec<_>>(),
            vec!["red sphere"]
        );
    }
}
