//! Shared domain types: object rosters, per-frame body states, scene records,
//! video sets, property graphs and questions.
//!
//! Everything here is a plain value type. Behaviour is limited to
//! construction, validation and (de)serialization.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::geom::Vec2;
use crate::program::Program;

macro_rules! word_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $word:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $word)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $word),+
                }
            }

            pub fn from_word(word: &str) -> Option<$name> {
                match word {
                    $($word => Some($name::$variant),)+
                    _ => None,
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

word_enum!(Color {
    Gray => "gray",
    Red => "red",
    Blue => "blue",
    Green => "green",
    Brown => "brown",
    Cyan => "cyan",
    Purple => "purple",
    Yellow => "yellow",
});

word_enum!(Shape {
    Cube => "cube",
    Sphere => "sphere",
    Cylinder => "cylinder",
});

word_enum!(Material {
    Metal => "metal",
    Rubber => "rubber",
});

word_enum!(
    /// Hidden mass level.
    Mass {
        Light => "light",
        Heavy => "heavy",
    }
);

word_enum!(
    /// Hidden charge sign. Magnitude is always 1.
    Charge {
        Neutral => "neutral",
        Positive => "positive",
        Negative => "negative",
    }
);

word_enum!(
    /// Relative charge between two objects; `Neither` means at least one is neutral.
    RelCharge {
        Same => "same",
        Opposite => "opposite",
        Neither => "none",
    }
);

word_enum!(EventKind {
    In => "in",
    Out => "out",
    Collision => "collision",
    Attraction => "attraction",
    Repulsion => "repulsion",
});

word_enum!(SceneKind {
    Target => "target",
    Reference => "reference",
    TargetFuture => "target_future",
});

word_enum!(QuestionType {
    Factual => "factual",
    Predictive => "predictive",
    CounterfactualMass => "counterfactual_mass",
    CounterfactualCharge => "counterfactual_charge",
});

impl Shape {
    /// Collision disc radius for this shape.
    pub fn radius(self) -> f64 {
        match self {
            Shape::Cube => 0.35,
            Shape::Sphere | Shape::Cylinder => 0.30,
        }
    }
}

impl Mass {
    pub fn value(self) -> f64 {
        match self {
            Mass::Light => 1.0,
            Mass::Heavy => 5.0,
        }
    }

    pub fn flipped(self) -> Mass {
        match self {
            Mass::Light => Mass::Heavy,
            Mass::Heavy => Mass::Light,
        }
    }
}

impl Charge {
    pub fn value(self) -> f64 {
        match self {
            Charge::Neutral => 0.0,
            Charge::Positive => 1.0,
            Charge::Negative => -1.0,
        }
    }

    pub fn is_charged(self) -> bool {
        self != Charge::Neutral
    }

    pub fn inverted(self) -> Charge {
        match self {
            Charge::Neutral => Charge::Neutral,
            Charge::Positive => Charge::Negative,
            Charge::Negative => Charge::Positive,
        }
    }

    /// Relative charge label of a pair.
    pub fn relation(self, other: Charge) -> RelCharge {
        match (self, other) {
            (Charge::Neutral, _) | (_, Charge::Neutral) => RelCharge::Neither,
            (a, b) if a == b => RelCharge::Same,
            _ => RelCharge::Opposite,
        }
    }
}

impl QuestionType {
    pub fn is_counterfactual(self) -> bool {
        matches!(
            self,
            QuestionType::CounterfactualMass | QuestionType::CounterfactualCharge
        )
    }

    pub fn is_multiple_choice(self) -> bool {
        self != QuestionType::Factual
    }
}

impl EventKind {
    pub fn is_interaction(self) -> bool {
        matches!(
            self,
            EventKind::Collision | EventKind::Attraction | EventKind::Repulsion
        )
    }

    pub fn is_interval(self) -> bool {
        matches!(self, EventKind::Attraction | EventKind::Repulsion)
    }

    pub fn arity(self) -> usize {
        match self {
            EventKind::In | EventKind::Out => 1,
            _ => 2,
        }
    }
}

/// One object's visible attributes plus hidden physical properties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: usize,
    pub color: Color,
    pub shape: Shape,
    pub material: Material,
    pub mass: Mass,
    pub charge: Charge,
}

impl ObjectSpec {
    pub fn radius(&self) -> f64 {
        self.shape.radius()
    }

    pub fn triple(&self) -> (Color, Shape, Material) {
        (self.color, self.shape, self.material)
    }
}

/// Kinematic state of one disc at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
}

impl BodyState {
    pub fn new(position: Vec2, velocity: Vec2, radius: f64) -> Self {
        BodyState {
            position,
            velocity,
            radius,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.position.is_finite()
            && self.velocity.is_finite()
            && self.radius.is_finite()
            && self.radius > 0.0
    }
}

/// A detected event. Interval events (attraction, repulsion) carry `end_frame`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EventRecord {
    pub kind: EventKind,
    pub participants: Vec<usize>,
    pub frame: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_frame: Option<usize>,
}

impl EventRecord {
    pub fn instant(kind: EventKind, participants: Vec<usize>, frame: usize) -> Self {
        EventRecord {
            kind,
            participants,
            frame,
            end_frame: None,
        }
    }

    pub fn interval(kind: EventKind, a: usize, b: usize, start: usize, end: usize) -> Self {
        EventRecord {
            kind,
            participants: vec![a, b],
            frame: start,
            end_frame: Some(end),
        }
    }

    pub fn involves(&self, id: usize) -> bool {
        self.participants.contains(&id)
    }

    /// Last frame covered by the event.
    pub fn last_frame(&self) -> usize {
        self.end_frame.unwrap_or(self.frame)
    }

    pub fn pair(&self) -> Option<(usize, usize)> {
        match self.participants.as_slice() {
            [a, b] => Some((*a.min(b), *a.max(b))),
            _ => None,
        }
    }

    fn violations(&self, ids: &BTreeSet<usize>, n_frames: usize) -> Vec<String> {
        let mut out = Vec::new();
        if self.participants.len() != self.kind.arity() {
            out.push(format!(
                "{} event has {} participants, expected {}",
                self.kind,
                self.participants.len(),
                self.kind.arity()
            ));
        }
        for p in &self.participants {
            if !ids.contains(p) {
                out.push(format!(
                    "{} event references unknown object {}",
                    self.kind, p
                ));
            }
        }
        if self.kind.is_interval() != self.end_frame.is_some() {
            out.push(format!("{} event has malformed interval", self.kind));
        }
        if self.last_frame() < self.frame {
            out.push(format!("{} event ends before it starts", self.kind));
        }
        if self.last_frame() >= n_frames.max(1) {
            out.push(format!(
                "{} event frame {} out of range",
                self.kind,
                self.last_frame()
            ));
        }
        out
    }
}

/// Impulse between two discs logged by the simulator at substep resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactSample {
    pub frame: usize,
    pub a: usize,
    pub b: usize,
}

/// Recorded trajectories of one video.
///
/// `frames[k][i]` is the state of `objects[i]` at `t = k / fps`. The state at
/// `t = duration_s` is kept separately in `end_state` so that a continuation can
/// be simulated without a gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub kind: SceneKind,
    pub objects: Vec<ObjectSpec>,
    pub duration_s: f64,
    pub fps: u32,
    pub frames: Vec<Vec<BodyState>>,
    pub end_state: Vec<BodyState>,
    pub events: Vec<EventRecord>,
    #[serde(default)]
    pub contacts: Vec<ContactSample>,
}

impl SceneRecord {
    pub fn index_of(&self, id: usize) -> Option<usize> {
        self.objects.iter().position(|o| o.id == id)
    }

    pub fn ids(&self) -> Vec<usize> {
        self.objects.iter().map(|o| o.id).collect()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.index_of(id).is_some()
    }

    pub fn state(&self, frame: usize, id: usize) -> Option<&BodyState> {
        let idx = self.index_of(id)?;
        self.frames.get(frame)?.get(idx)
    }

    pub fn last_frame(&self) -> usize {
        self.frames.len().saturating_sub(1)
    }

    pub fn expected_frames(duration_s: f64, fps: u32) -> usize {
        (duration_s * fps as f64).round() as usize
    }

    pub fn interaction_events(&self) -> impl Iterator<Item = &EventRecord> {
        self.events.iter().filter(|e| e.kind.is_interaction())
    }

    /// Invariant violations of this record alone.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let ids: BTreeSet<usize> = self.ids().into_iter().collect();
        if ids.len() != self.objects.len() {
            out.push("duplicate object ids".to_string());
        }
        let expected = Self::expected_frames(self.duration_s, self.fps);
        if self.frames.len() != expected {
            out.push(format!(
                "frame count {} != round(duration x fps) = {}",
                self.frames.len(),
                expected
            ));
        }
        for (k, frame) in self.frames.iter().enumerate() {
            if frame.len() != self.objects.len() {
                out.push(format!(
                    "frame {k} has {} states for {} objects",
                    frame.len(),
                    self.objects.len()
                ));
                break;
            }
            if frame.iter().any(|s| !s.is_valid()) {
                out.push(format!("frame {k} has an invalid body state"));
                break;
            }
        }
        if self.end_state.len() != self.objects.len() {
            out.push("end state length mismatch".to_string());
        }
        for e in &self.events {
            out.extend(e.violations(&ids, self.frames.len()));
        }
        out
    }
}

/// One problem instance: a target video, four references and the unseen continuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSet {
    pub roster: Vec<ObjectSpec>,
    pub target: SceneRecord,
    pub references: Vec<SceneRecord>,
    pub future: SceneRecord,
}

pub const REFERENCE_COUNT: usize = 4;

impl VideoSet {
    pub fn object(&self, id: usize) -> Option<&ObjectSpec> {
        self.roster.iter().find(|o| o.id == id)
    }

    /// Records the property-inference stage may look at: references, then target.
    pub fn observed_records(&self) -> impl Iterator<Item = &SceneRecord> {
        self.references.iter().chain(std::iter::once(&self.target))
    }
}

/// Lists every invariant a [`VideoSet`] violates; empty when valid.
pub fn validate_video_set(set: &VideoSet) -> Vec<String> {
    let mut out = Vec::new();

    let mut triples = BTreeSet::new();
    let mut ids = BTreeSet::new();
    for o in &set.roster {
        if !triples.insert(o.triple()) {
            out.push(format!(
                "attribute violation: object {} repeats ({}, {}, {})",
                o.id, o.color, o.shape, o.material
            ));
        }
        if !ids.insert(o.id) {
            out.push(format!("id violation: object id {} repeated", o.id));
        }
    }

    let charged: Vec<usize> = set
        .roster
        .iter()
        .filter(|o| o.charge.is_charged())
        .map(|o| o.id)
        .collect();
    if !(charged.is_empty() || charged.len() == 2) {
        out.push(format!("charge-pair violation: {} charged", charged.len()));
    }
    let heavy: Vec<usize> = set
        .roster
        .iter()
        .filter(|o| o.mass == Mass::Heavy)
        .map(|o| o.id)
        .collect();
    if heavy.len() > 1 {
        out.push(format!(
            "heavy violation: {} heavy {:?}",
            heavy.len(),
            heavy
        ));
    }

    if set.references.len() != REFERENCE_COUNT {
        out.push(format!(
            "reference count violation: {} references",
            set.references.len()
        ));
    }
    for o in &set.roster {
        if !set.references.iter().any(|r| r.contains(o.id)) {
            out.push(format!(
                "coverage violation: object {} absent from references",
                o.id
            ));
        }
    }
    for (i, r) in set.references.iter().enumerate() {
        if r.interaction_events().next().is_none() {
            out.push(format!("reference {i} lacks interaction"));
        }
    }

    let named = std::iter::once(("target".to_string(), &set.target))
        .chain(std::iter::once(("future".to_string(), &set.future)))
        .chain(
            set.references
                .iter()
                .enumerate()
                .map(|(i, r)| (format!("reference {i}"), r)),
        );
    for (name, rec) in named {
        for v in rec.violations() {
            out.push(format!("record violation: {name}: {v}"));
        }
        for o in &rec.objects {
            if set.object(o.id) != Some(o) {
                out.push(format!(
                    "record violation: {name}: object {} differs from roster",
                    o.id
                ));
            }
        }
    }
    out
}

/// Signed charge per object id.
pub type ChargeAssignment = BTreeMap<usize, Charge>;

/// Picks, of an assignment and its global sign flip, the one whose
/// lowest-id charged object is positive.
pub fn canonicalize_charges(assignment: &ChargeAssignment) -> ChargeAssignment {
    let flip = assignment
        .values()
        .find(|c| c.is_charged())
        .is_some_and(|c| *c == Charge::Negative);
    if flip {
        assignment
            .iter()
            .map(|(id, c)| (*id, c.inverted()))
            .collect()
    } else {
        assignment.clone()
    }
}

/// A label with a confidence in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Labeled<T> {
    pub label: T,
    pub confidence: f64,
}

impl<T> Labeled<T> {
    pub fn new(label: T, confidence: f64) -> Self {
        Labeled { label, confidence }
    }

    pub fn certain(label: T) -> Self {
        Labeled {
            label,
            confidence: 1.0,
        }
    }
}

/// Unordered pair of object ids, stored as `(min, max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pair(usize, usize);

impl Pair {
    pub fn new(a: usize, b: usize) -> Self {
        if a <= b {
            Pair(a, b)
        } else {
            Pair(b, a)
        }
    }

    pub fn lo(self) -> usize {
        self.0
    }

    pub fn hi(self) -> usize {
        self.1
    }
}

/// Per-object mass labels and pairwise relative-charge labels.
///
/// Only relative charges are stored, so the graph is unchanged when every
/// charge sign is flipped.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PropertyGraph {
    pub node_mass: BTreeMap<usize, Labeled<Mass>>,
    #[serde(with = "edge_map")]
    pub edge_charge: BTreeMap<Pair, Labeled<RelCharge>>,
}

impl PropertyGraph {
    /// Exact graph of a roster (confidence 1 everywhere).
    pub fn from_roster(roster: &[ObjectSpec]) -> Self {
        let mut g = PropertyGraph::default();
        for o in roster {
            g.node_mass.insert(o.id, Labeled::certain(o.mass));
        }
        for (i, a) in roster.iter().enumerate() {
            for b in &roster[i + 1..] {
                g.edge_charge.insert(
                    Pair::new(a.id, b.id),
                    Labeled::certain(a.charge.relation(b.charge)),
                );
            }
        }
        g
    }

    pub fn mass(&self, id: usize) -> Option<Mass> {
        self.node_mass.get(&id).map(|l| l.label)
    }

    pub fn edge(&self, a: usize, b: usize) -> Option<RelCharge> {
        self.edge_charge.get(&Pair::new(a, b)).map(|l| l.label)
    }

    pub fn set_edge(&mut self, a: usize, b: usize, label: Labeled<RelCharge>) {
        self.edge_charge.insert(Pair::new(a, b), label);
    }

    fn ids(&self) -> Vec<usize> {
        let mut ids: BTreeSet<usize> = self.node_mass.keys().copied().collect();
        for p in self.edge_charge.keys() {
            ids.insert(p.lo());
            ids.insert(p.hi());
        }
        ids.into_iter().collect()
    }

    /// Finds a canonical signed charge assignment realizing every labeled edge.
    ///
    /// Objects constrained by no edge are left neutral. Among realizations the
    /// one with the fewest charged objects is returned.
    pub fn charge_assignment(&self) -> Option<ChargeAssignment> {
        let ids = self.ids();
        let n = ids.len();
        let mut best: Option<(usize, ChargeAssignment)> = None;
        let choices = [Charge::Neutral, Charge::Positive, Charge::Negative];
        let total = 3usize.checked_pow(n as u32)?;
        for code in 0..total {
            let mut c = code;
            let mut asg = ChargeAssignment::new();
            for id in &ids {
                asg.insert(*id, choices[c % 3]);
                c /= 3;
            }
            let realizes = self
                .edge_charge
                .iter()
                .all(|(p, l)| asg[&p.lo()].relation(asg[&p.hi()]) == l.label);
            if !realizes {
                continue;
            }
            let charged = asg.values().filter(|c| c.is_charged()).count();
            let asg = canonicalize_charges(&asg);
            match &best {
                Some((k, a)) if (*k, a) <= (charged, &asg) => {}
                _ => best = Some((charged, asg)),
            }
        }
        best.map(|(_, a)| a)
    }

    /// True when some signed assignment realizes every labeled edge.
    pub fn is_consistent(&self) -> bool {
        self.charge_assignment().is_some()
    }
}

mod edge_map {
    use super::*;

    #[derive(Serialize, Deserialize)]
    struct EdgeEntry {
        a: usize,
        b: usize,
        label: RelCharge,
        confidence: f64,
    }

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<Pair, Labeled<RelCharge>>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let entries: Vec<EdgeEntry> = map
            .iter()
            .map(|(p, l)| EdgeEntry {
                a: p.lo(),
                b: p.hi(),
                label: l.label,
                confidence: l.confidence,
            })
            .collect();
        entries.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<Pair, Labeled<RelCharge>>, D::Error> {
        let entries = Vec::<EdgeEntry>::deserialize(d)?;
        Ok(entries
            .into_iter()
            .map(|e| (Pair::new(e.a, e.b), Labeled::new(e.label, e.confidence)))
            .collect())
    }
}

/// One option of a multiple-choice question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Choice {
    pub text: String,
    pub program: Program,
    pub answer: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub template: String,
    pub text: String,
    pub qtype: QuestionType,
    pub program: Program,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub choices: Vec<Choice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

impl Question {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.qtype.is_multiple_choice() {
            if self.choices.len() < 2 {
                out.push(format!(
                    "{}: multiple-choice question with {} choices",
                    self.id,
                    self.choices.len()
                ));
            }
        } else {
            if !self.choices.is_empty() {
                out.push(format!("{}: factual question carries choices", self.id));
            }
            if self.answer.is_none() {
                out.push(format!("{}: factual question without answer", self.id));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonicalize_flips_when_lowest_charged_is_negative() {
        let asg: ChargeAssignment = [(0, Charge::Negative), (3, Charge::Positive)].into();
        let c = canonicalize_charges(&asg);
        assert_eq!(c[&0], Charge::Positive);
        assert_eq!(c[&3], Charge::Negative);
    }

    #[test]
    fn canonicalize_keeps_canonical_and_neutral() {
        let asg: ChargeAssignment = [(1, Charge::Positive), (2, Charge::Negative)].into();
        assert_eq!(canonicalize_charges(&asg), asg);
        let neutral: ChargeAssignment = [(0, Charge::Neutral), (1, Charge::Neutral)].into();
        assert_eq!(canonicalize_charges(&neutral), neutral);
    }

    #[test]
    fn relation_table() {
        use Charge::*;
        assert_eq!(Positive.relation(Positive), RelCharge::Same);
        assert_eq!(Negative.relation(Negative), RelCharge::Same);
        assert_eq!(Positive.relation(Negative), RelCharge::Opposite);
        assert_eq!(Neutral.relation(Negative), RelCharge::Neither);
    }

    #[test]
    fn graph_consistency_detects_frustrated_triangle() {
        let mut g = PropertyGraph::default();
        g.set_edge(0, 1, Labeled::certain(RelCharge::Opposite));
        g.set_edge(1, 2, Labeled::certain(RelCharge::Opposite));
        g.set_edge(0, 2, Labeled::certain(RelCharge::Opposite));
        assert!(!g.is_consistent());
        g.set_edge(0, 2, Labeled::certain(RelCharge::Same));
        assert!(g.is_consistent());
    }

    #[test]
    fn graph_assignment_is_canonical_and_minimal() {
        let mut g = PropertyGraph::default();
        g.set_edge(1, 3, Labeled::certain(RelCharge::Opposite));
        g.set_edge(1, 2, Labeled::certain(RelCharge::Neither));
        let a = g.charge_assignment().unwrap();
        assert_eq!(a[&1], Charge::Positive);
        assert_eq!(a[&3], Charge::Negative);
        assert_eq!(a[&2], Charge::Neutral);
    }

    #[test]
    fn edge_map_serializes_as_list() {
        let mut g = PropertyGraph::default();
        g.node_mass.insert(2, Labeled::certain(Mass::Heavy));
        g.set_edge(4, 1, Labeled::new(RelCharge::Same, 0.9));
        let json = serde_json::to_string(&g).unwrap();
        assert!(json.contains(r#""edge_charge":[{"a":1,"b":4,"label":"same","confidence":0.9}]"#));
        let back: PropertyGraph = serde_json::from_str(&json).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn event_arity_checked() {
        let ids: BTreeSet<usize> = [0, 1].into();
        let bad = EventRecord::instant(EventKind::Collision, vec![0], 3);
        assert!(!bad.violations(&ids, 10).is_empty());
        let good = EventRecord::interval(EventKind::Attraction, 0, 1, 2, 5);
        assert!(good.violations(&ids, 10).is_empty());
        let backwards = EventRecord::interval(EventKind::Attraction, 0, 1, 5, 2);
        assert!(!backwards.violations(&ids, 10).is_empty());
    }
}
