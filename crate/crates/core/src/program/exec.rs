use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BodyState, Charge, EventKind, EventRecord, Mass, SceneRecord};

use super::{OpName, Program};

pub const DEFAULT_MOVING_THRESHOLD: f64 = 0.05;

/// Speed strictly above `threshold` counts as moving.
pub fn moving_predicate(state: &BodyState, threshold: f64) -> bool {
    state.velocity.norm() > threshold
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CfKind {
    Heavy,
    Light,
    Uncharged,
    OppositeCharged,
}

/// A single-object property edit defining a counterfactual world.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CfEdit {
    pub object: usize,
    pub kind: CfKind,
}

impl fmt::Display for CfEdit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} on object {}", self.kind, self.object)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectProps {
    pub mass: Mass,
    pub charge: Charge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualWorld {
    pub edit: CfEdit,
    pub record: SceneRecord,
}

/// Everything a program may read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub target: SceneRecord,
    #[serde(default)]
    pub future: Option<SceneRecord>,
    pub properties: BTreeMap<usize, ObjectProps>,
    #[serde(default)]
    pub counterfactuals: Vec<CounterfactualWorld>,
    #[serde(default = "default_threshold")]
    pub moving_threshold: f64,
}

fn default_threshold() -> f64 {
    DEFAULT_MOVING_THRESHOLD
}

impl World {
    pub fn new(target: SceneRecord, properties: BTreeMap<usize, ObjectProps>) -> Self {
        World {
            target,
            future: None,
            properties,
            counterfactuals: Vec::new(),
            moving_threshold: DEFAULT_MOVING_THRESHOLD,
        }
    }

    pub fn counterfactual(&self, edit: CfEdit) -> Option<&SceneRecord> {
        self.counterfactuals
            .iter()
            .find(|c| c.edit == edit)
            .map(|c| &c.record)
    }
}

/// An event value: observed events plus the special start/end markers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    Start,
    End,
    Observed(EventRecord),
}

impl Event {
    fn first_frame(&self, last: usize) -> usize {
        match self {
            Event::Start => 0,
            Event::End => last,
            Event::Observed(e) => e.frame,
        }
    }

    fn last_frame(&self, last: usize) -> usize {
        match self {
            Event::Start => 0,
            Event::End => last,
            Event::Observed(e) => e.last_frame(),
        }
    }

    fn record(&self) -> Option<&EventRecord> {
        match self {
            Event::Observed(e) => Some(e),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Value {
    Objects(Vec<usize>),
    Events(Vec<Event>),
    Event(Event),
    Object(usize),
    Integer(i64),
    Boolean(bool),
    Frame(usize),
    Attribute(String),
}

impl Value {
    /// Short textual answer: `yes`/`no`, a number, or an attribute phrase.
    pub fn answer_text(&self) -> String {
        match self {
            Value::Boolean(true) => "yes".into(),
            Value::Boolean(false) => "no".into(),
            Value::Integer(n) => n.to_string(),
            Value::Attribute(s) => s.clone(),
            Value::Object(id) => format!("object {id}"),
            Value::Frame(f) => f.to_string(),
            other => serde_json::to_string(other).unwrap_or_default(),
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Boolean(b) => Some(*b),
            _ => None,
        }
    }

    fn tag(&self) -> &'static str {
        match self {
            Value::Objects(_) => "objects",
            Value::Events(_) => "events",
            Value::Event(_) => "event",
            Value::Object(_) => "object",
            Value::Integer(_) => "integer",
            Value::Boolean(_) => "boolean",
            Value::Frame(_) => "frame",
            Value::Attribute(_) => "attribute",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecErrorKind {
    #[error("non-unique referent ({0} candidates)")]
    NonUnique(usize),
    #[error("missing counterfactual world ({0})")]
    MissingCounterfactual(CfEdit),
    #[error("missing future world")]
    MissingFuture,
    #[error("missing properties for object {0}")]
    MissingProperty(usize),
    #[error("object {0} not in the video")]
    UnknownObject(usize),
    #[error("frame {0} out of range")]
    FrameOutOfRange(usize),
    #[error("object {0} is not a collision participant")]
    NotCollisionPartner(usize),
    #[error("no event at order `{0}`")]
    OrderOutOfRange(String),
    #[error("expected exactly two objects, found {0}")]
    NotAPair(usize),
    #[error("value tag mismatch: expected {expected}, found {found}")]
    Tag {
        expected: &'static str,
        found: &'static str,
    },
}

impl ExecErrorKind {
    /// Stable category name for reporting.
    pub fn category(&self) -> &'static str {
        match self {
            ExecErrorKind::NonUnique(_) => "non_unique",
            ExecErrorKind::MissingCounterfactual(_) => "missing_counterfactual",
            ExecErrorKind::MissingFuture => "missing_future",
            ExecErrorKind::MissingProperty(_) => "missing_property",
            ExecErrorKind::UnknownObject(_) => "unknown_object",
            ExecErrorKind::FrameOutOfRange(_) => "frame_out_of_range",
            ExecErrorKind::NotCollisionPartner(_) => "not_collision_partner",
            ExecErrorKind::OrderOutOfRange(_) => "order_out_of_range",
            ExecErrorKind::NotAPair(_) => "not_a_pair",
            ExecErrorKind::Tag { .. } => "tag_mismatch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("op #{node} ({op}): {kind}")]
pub struct ExecError {
    pub node: usize,
    pub op: OpName,
    pub kind: ExecErrorKind,
}

/// Evaluates the program's output node.
pub fn execute(program: &Program, world: &World) -> Result<Value, ExecError> {
    Executor::new(program, world).eval(program.output())
}

/// Evaluates every node in order, returning all intermediate values.
pub fn execute_trace(program: &Program, world: &World) -> Result<Vec<Value>, ExecError> {
    let mut ex = Executor::new(program, world);
    (0..program.nodes().len()).map(|i| ex.eval(i)).collect()
}

/// Object each counterfactual node of `program` edits, evaluated on `world`
/// (which need not contain any counterfactual records).
pub fn counterfactual_requests(program: &Program, world: &World) -> Result<Vec<CfEdit>, ExecError> {
    let mut ex = Executor::new(program, world);
    let mut out = Vec::new();
    for (idx, node) in program.nodes().iter().enumerate() {
        if let Some(kind) = node.op.counterfactual_kind() {
            let object = ex.object(node.inputs[0], idx)?;
            out.push(CfEdit { object, kind });
        }
    }
    Ok(out)
}

struct Executor<'a> {
    program: &'a Program,
    world: &'a World,
    memo: Vec<Option<Value>>,
}

impl<'a> Executor<'a> {
    fn new(program: &'a Program, world: &'a World) -> Self {
        Executor {
            program,
            world,
            memo: vec![None; program.nodes().len()],
        }
    }

    fn fail(&self, node: usize, kind: ExecErrorKind) -> ExecError {
        ExecError {
            node,
            op: self.program.nodes()[node].op,
            kind,
        }
    }

    fn tag_error(&self, node: usize, expected: &'static str, v: &Value) -> ExecError {
        self.fail(
            node,
            ExecErrorKind::Tag {
                expected,
                found: v.tag(),
            },
        )
    }

    fn objects(&mut self, src: usize, at: usize) -> Result<Vec<usize>, ExecError> {
        match self.eval(src)? {
            Value::Objects(o) => Ok(o),
            v => Err(self.tag_error(at, "objects", &v)),
        }
    }

    fn object(&mut self, src: usize, at: usize) -> Result<usize, ExecError> {
        match self.eval(src)? {
            Value::Object(o) => Ok(o),
            v => Err(self.tag_error(at, "object", &v)),
        }
    }

    fn events(&mut self, src: usize, at: usize) -> Result<Vec<Event>, ExecError> {
        match self.eval(src)? {
            Value::Events(e) => Ok(e),
            Value::Event(e) => Ok(vec![e]),
            v => Err(self.tag_error(at, "events", &v)),
        }
    }

    fn event(&mut self, src: usize, at: usize) -> Result<Event, ExecError> {
        match self.eval(src)? {
            Value::Event(e) => Ok(e),
            v => Err(self.tag_error(at, "event", &v)),
        }
    }

    fn frame(&mut self, src: usize, at: usize) -> Result<usize, ExecError> {
        match self.eval(src)? {
            Value::Frame(f) => Ok(f),
            v => Err(self.tag_error(at, "frame", &v)),
        }
    }

    fn props(&self, id: usize, at: usize) -> Result<ObjectProps, ExecError> {
        self.world
            .properties
            .get(&id)
            .copied()
            .ok_or_else(|| self.fail(at, ExecErrorKind::MissingProperty(id)))
    }

    fn state(&self, id: usize, frame: usize, at: usize) -> Result<BodyState, ExecError> {
        let target = &self.world.target;
        let idx = target
            .index_of(id)
            .ok_or_else(|| self.fail(at, ExecErrorKind::UnknownObject(id)))?;
        target
            .frames
            .get(frame)
            .map(|f| f[idx])
            .ok_or_else(|| self.fail(at, ExecErrorKind::FrameOutOfRange(frame)))
    }

    fn attribute(&self, id: usize, concept: &str, at: usize) -> Result<String, ExecError> {
        let spec = self
            .world
            .target
            .objects
            .iter()
            .find(|o| o.id == id)
            .ok_or_else(|| self.fail(at, ExecErrorKind::UnknownObject(id)))?;
        Ok(match concept {
            "color" => spec.color.to_string(),
            "shape" => spec.shape.to_string(),
            _ => spec.material.to_string(),
        })
    }

    fn filter_props(
        &mut self,
        src: usize,
        at: usize,
        keep: impl Fn(ObjectProps) -> bool,
    ) -> Result<Value, ExecError> {
        let objs = self.objects(src, at)?;
        let mut out = Vec::new();
        for id in objs {
            if keep(self.props(id, at)?) {
                out.push(id);
            }
        }
        Ok(Value::Objects(out))
    }

    fn compare(
        &mut self,
        node: usize,
        cmp: impl Fn(ObjectProps, ObjectProps) -> bool,
    ) -> Result<Value, ExecError> {
        let n = &self.program.nodes()[node];
        let (i0, i1) = (n.inputs[0], n.inputs[1]);
        let a = self.object(i0, node)?;
        let b = self.object(i1, node)?;
        let (pa, pb) = (self.props(a, node)?, self.props(b, node)?);
        Ok(Value::Boolean(cmp(pa, pb)))
    }

    fn eval(&mut self, idx: usize) -> Result<Value, ExecError> {
        if let Some(v) = &self.memo[idx] {
            return Ok(v.clone());
        }
        let v = self.eval_node(idx)?;
        self.memo[idx] = Some(v.clone());
        Ok(v)
    }

    fn eval_node(&mut self, idx: usize) -> Result<Value, ExecError> {
        let node = &self.program.nodes()[idx];
        let op = node.op;
        let inputs = node.inputs.clone();
        let args = node.args.clone();
        let world = self.world;
        let last = world.target.last_frame();

        use OpName::*;
        let value = match op {
            Objects => Value::Objects(world.target.ids()),
            Events => Value::Events(
                world
                    .target
                    .events
                    .iter()
                    .cloned()
                    .map(Event::Observed)
                    .collect(),
            ),
            UnseenEvents => {
                let future = world
                    .future
                    .as_ref()
                    .ok_or_else(|| self.fail(idx, ExecErrorKind::MissingFuture))?;
                Value::Events(future.events.iter().cloned().map(Event::Observed).collect())
            }
            Start => Value::Event(Event::Start),
            End => Value::Event(Event::End),
            FilterHeavy => self.filter_props(inputs[0], idx, |p| p.mass == Mass::Heavy)?,
            FilterLight => self.filter_props(inputs[0], idx, |p| p.mass == Mass::Light)?,
            FilterCharged => self.filter_props(inputs[0], idx, |p| p.charge.is_charged())?,
            FilterUncharged => self.filter_props(inputs[0], idx, |p| !p.charge.is_charged())?,
            FilterStaticAttr => {
                let objs = self.objects(inputs[0], idx)?;
                let word = args[0].as_str();
                let mut out = Vec::new();
                for id in objs {
                    let spec = world
                        .target
                        .objects
                        .iter()
                        .find(|o| o.id == id)
                        .ok_or_else(|| self.fail(idx, ExecErrorKind::UnknownObject(id)))?;
                    if spec.color.as_str() == word
                        || spec.shape.as_str() == word
                        || spec.material.as_str() == word
                    {
                        out.push(id);
                    }
                }
                Value::Objects(out)
            }
            FilterDynamicAttr => {
                let objs = self.objects(inputs[0], idx)?;
                let frame = self.frame(inputs[1], idx)?;
                let want_moving = args[0] == "moving";
                let mut out = Vec::new();
                for id in objs {
                    let s = self.state(id, frame, idx)?;
                    if moving_predicate(&s, world.moving_threshold) == want_moving {
                        out.push(id);
                    }
                }
                Value::Objects(out)
            }
            FilterEvent => {
                let events = self.events(inputs[0], idx)?;
                let objs: BTreeSet<usize> = self.objects(inputs[1], idx)?.into_iter().collect();
                Value::Events(
                    events
                        .into_iter()
                        .filter(|e| {
                            e.record()
                                .is_some_and(|r| r.participants.iter().any(|p| objs.contains(p)))
                        })
                        .collect(),
                )
            }
            FilterKind => {
                let events = self.events(inputs[0], idx)?;
                let kind = EventKind::from_word(&args[0]).expect("checked literal");
                Value::Events(
                    events
                        .into_iter()
                        .filter(|e| e.record().is_some_and(|r| r.kind == kind))
                        .collect(),
                )
            }
            GetColPartner => {
                let event = self.event(inputs[0], idx)?;
                let obj = self.object(inputs[1], idx)?;
                match event.record() {
                    Some(r) if r.kind == EventKind::Collision && r.involves(obj) => {
                        let other = r
                            .participants
                            .iter()
                            .copied()
                            .find(|&p| p != obj)
                            .unwrap_or(obj);
                        Value::Object(other)
                    }
                    _ => return Err(self.fail(idx, ExecErrorKind::NotCollisionPartner(obj))),
                }
            }
            FilterBefore => {
                let events = self.events(inputs[0], idx)?;
                let refs = self.events(inputs[1], idx)?;
                let bound = refs.iter().map(|e| e.first_frame(last)).min().unwrap_or(0);
                Value::Events(
                    events
                        .into_iter()
                        .filter(|e| e.first_frame(last) < bound)
                        .collect(),
                )
            }
            FilterAfter => {
                let events = self.events(inputs[0], idx)?;
                let refs = self.events(inputs[1], idx)?;
                let bound = refs
                    .iter()
                    .map(|e| e.last_frame(last))
                    .max()
                    .unwrap_or(last);
                Value::Events(
                    events
                        .into_iter()
                        .filter(|e| e.first_frame(last) > bound)
                        .collect(),
                )
            }
            FilterOrder => {
                let mut events = self.events(inputs[0], idx)?;
                events.sort_by_key(|e| e.first_frame(last));
                let pos = match args[0].as_str() {
                    "first" => Some(0),
                    "second" => Some(1),
                    "third" => Some(2),
                    _ => events.len().checked_sub(1),
                };
                match pos.and_then(|p| events.get(p)) {
                    Some(e) => Value::Event(e.clone()),
                    None => {
                        return Err(self.fail(idx, ExecErrorKind::OrderOutOfRange(args[0].clone())))
                    }
                }
            }
            GetFrame => {
                let e = self.event(inputs[0], idx)?;
                Value::Frame(e.first_frame(last))
            }
            Unique => match self.eval(inputs[0])? {
                Value::Objects(o) if o.len() == 1 => Value::Object(o[0]),
                Value::Events(e) if e.len() == 1 => Value::Event(e.into_iter().next().unwrap()),
                Value::Objects(o) => return Err(self.fail(idx, ExecErrorKind::NonUnique(o.len()))),
                Value::Events(e) => return Err(self.fail(idx, ExecErrorKind::NonUnique(e.len()))),
                v => return Err(self.tag_error(idx, "objects or events", &v)),
            },
            CounterfactualMassHeavy
            | CounterfactualMassLight
            | CounterfactualUncharged
            | CounterfactualOppositeCharged => {
                let object = self.object(inputs[0], idx)?;
                let edit = CfEdit {
                    object,
                    kind: op.counterfactual_kind().expect("counterfactual op"),
                };
                let rec = world
                    .counterfactual(edit)
                    .ok_or_else(|| self.fail(idx, ExecErrorKind::MissingCounterfactual(edit)))?;
                Value::Events(rec.events.iter().cloned().map(Event::Observed).collect())
            }
            QueryAttribute => {
                let obj = self.object(inputs[0], idx)?;
                Value::Attribute(self.attribute(obj, &args[0], idx)?)
            }
            QueryBothAttribute => {
                let mut objs = self.objects(inputs[0], idx)?;
                if objs.len() != 2 {
                    return Err(self.fail(idx, ExecErrorKind::NotAPair(objs.len())));
                }
                objs.sort_unstable();
                let a = self.attribute(objs[0], &args[0], idx)?;
                let b = self.attribute(objs[1], &args[0], idx)?;
                Value::Attribute(format!("{a} and {b}"))
            }
            QueryDirection => {
                let obj = self.object(inputs[0], idx)?;
                let frame = self.frame(inputs[1], idx)?;
                let s = self.state(obj, frame, idx)?;
                Value::Attribute(direction_name(&s, world.moving_threshold).to_string())
            }
            IsHeavier => self.compare(idx, |a, b| a.mass.value() > b.mass.value())?,
            IsLighter => self.compare(idx, |a, b| a.mass.value() < b.mass.value())?,
            IsSameCharged => self.compare(idx, |a, b| a.charge.value() * b.charge.value() > 0.0)?,
            IsOppositeCharged => {
                self.compare(idx, |a, b| a.charge.value() * b.charge.value() < 0.0)?
            }
            Count => match self.eval(inputs[0])? {
                Value::Objects(o) => Value::Integer(o.len() as i64),
                Value::Events(e) => Value::Integer(e.len() as i64),
                v => return Err(self.tag_error(idx, "objects or events", &v)),
            },
            Exist => match self.eval(inputs[0])? {
                Value::Objects(o) => Value::Boolean(!o.is_empty()),
                Value::Events(e) => Value::Boolean(!e.is_empty()),
                v => return Err(self.tag_error(idx, "objects or events", &v)),
            },
            BelongTo => {
                let e = self.event(inputs[0], idx)?;
                let set = self.events(inputs[1], idx)?;
                Value::Boolean(set.contains(&e))
            }
            Negate => match self.eval(inputs[0])? {
                Value::Boolean(b) => Value::Boolean(!b),
                v => return Err(self.tag_error(idx, "boolean", &v)),
            },
        };
        Ok(value)
    }
}

const DIRECTIONS: [&str; 8] = [
    "right",
    "up-right",
    "up",
    "up-left",
    "left",
    "down-left",
    "down",
    "down-right",
];

/// Octant name of the velocity, or `stationary` below the moving threshold.
pub fn direction_name(state: &BodyState, threshold: f64) -> &'static str {
    if !moving_predicate(state, threshold) {
        return "stationary";
    }
    let angle = state.velocity.y().atan2(state.velocity.x());
    let sector = (angle / std::f64::consts::FRAC_PI_4).round() as i64;
    DIRECTIONS[sector.rem_euclid(8) as usize]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;
    use crate::model::{Color, Material, ObjectSpec, SceneKind, Shape};
    use crate::program::{parse_program, OPERATION_TABLE};

    fn spec(id: usize, color: Color, shape: Shape, mass: Mass, charge: Charge) -> ObjectSpec {
        ObjectSpec {
            id,
            color,
            shape,
            material: Material::Metal,
            mass,
            charge,
        }
    }

    fn record(objects: Vec<ObjectSpec>, events: Vec<EventRecord>) -> SceneRecord {
        let n = objects.len();
        let state = |i: usize| {
            BodyState::new(
                Vec2(i as f64, 0.0),
                if i == 0 {
                    Vec2(0.0, 0.0)
                } else {
                    Vec2(1.0, 1.0)
                },
                0.3,
            )
        };
        let frame: Vec<BodyState> = (0..n).map(state).collect();
        SceneRecord {
            kind: SceneKind::Target,
            objects,
            duration_s: 0.4,
            fps: 25,
            frames: vec![frame.clone(); 10],
            end_state: frame,
            events,
            contacts: vec![],
        }
    }

    /// Four objects: 0 red cube heavy (+), 1 blue sphere light (-), 2 cyan cylinder light, 3 gray sphere light.
    fn world() -> World {
        let objects = vec![
            spec(0, Color::Red, Shape::Cube, Mass::Heavy, Charge::Positive),
            spec(1, Color::Blue, Shape::Sphere, Mass::Light, Charge::Negative),
            spec(
                2,
                Color::Cyan,
                Shape::Cylinder,
                Mass::Light,
                Charge::Neutral,
            ),
            spec(3, Color::Gray, Shape::Sphere, Mass::Light, Charge::Neutral),
        ];
        let events = vec![
            EventRecord::instant(EventKind::In, vec![0], 0),
            EventRecord::interval(EventKind::Attraction, 0, 1, 0, 4),
            EventRecord::instant(EventKind::Collision, vec![0, 2], 3),
            EventRecord::instant(EventKind::Collision, vec![2, 3], 7),
        ];
        let props = objects
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
            .collect();
        let mut w = World::new(record(objects.clone(), events), props);
        let mut fut = record(
            objects.clone(),
            vec![EventRecord::instant(EventKind::Collision, vec![1, 3], 2)],
        );
        fut.kind = SceneKind::TargetFuture;
        w.future = Some(fut);
        w.counterfactuals.push(CounterfactualWorld {
            edit: CfEdit {
                object: 1,
                kind: CfKind::Uncharged,
            },
            record: record(
                objects,
                vec![EventRecord::instant(EventKind::Collision, vec![1, 2], 5)],
            ),
        });
        w
    }

    fn run(text: &str) -> Result<Value, ExecError> {
        execute(&parse_program(text).unwrap(), &world())
    }

    #[test]
    fn count_objects() {
        assert_eq!(run("(count (objects))").unwrap(), Value::Integer(4));
    }

    #[test]
    fn heavier_lookup() {
        let red = "(unique (filter_static_attr (objects) red))";
        let blue = "(unique (filter_static_attr (objects) blue))";
        assert_eq!(
            run(&format!("(is_heavier {red} {blue})")).unwrap(),
            Value::Boolean(true)
        );
        assert_eq!(
            run(&format!("(is_lighter {red} {blue})")).unwrap(),
            Value::Boolean(false)
        );
        assert_eq!(
            run(&format!("(is_opposite_charged {red} {blue})")).unwrap(),
            Value::Boolean(true)
        );
        assert_eq!(
            run(&format!("(is_same_charged {red} {blue})")).unwrap(),
            Value::Boolean(false)
        );
    }

    #[test]
    fn unique_requires_singleton() {
        let err = run("(unique (filter_static_attr (objects) sphere))").unwrap_err();
        assert_eq!(err.kind, ExecErrorKind::NonUnique(2));
        assert_eq!(err.node, 2);
        assert!(err.to_string().contains("non-unique referent"));
    }

    #[test]
    fn missing_counterfactual_is_reported() {
        let err = run("(counterfactual_mass_heavy (unique (filter_static_attr (objects) gray)))")
            .unwrap_err();
        assert!(matches!(err.kind, ExecErrorKind::MissingCounterfactual(_)));
        assert_eq!(err.node, 3);
    }

    #[test]
    fn counterfactual_world_lookup_with_belong_to() {
        let blue = "(unique (filter_static_attr (objects) blue))";
        let cf = format!("(counterfactual_uncharged {blue})");
        let v = run(&format!("(exist (filter_kind (filter_event {cf} (filter_static_attr (objects) cyan)) collision))"))
            .unwrap();
        assert_eq!(v, Value::Boolean(true));
        let v = run(&format!(
            "(belong_to (unique (filter_kind {cf} collision)) {cf})"
        ))
        .unwrap();
        assert_eq!(v, Value::Boolean(true));
        let v = run(&format!(
            "(belong_to (unique (filter_kind {cf} collision)) (filter_kind (events) collision))"
        ))
        .unwrap();
        assert_eq!(v, Value::Boolean(false));
    }

    #[test]
    fn event_operations() {
        assert_eq!(
            run("(count (filter_before (filter_kind (events) collision) (filter_order (filter_kind (events) collision) last)))").unwrap(),
            Value::Integer(1)
        );
        assert_eq!(
            run("(count (filter_after (events) (unique (filter_event (filter_kind (events) collision) (filter_static_attr (objects) red)))))").unwrap(),
            Value::Integer(1)
        );
        assert_eq!(
            run("(get_frame (filter_order (filter_kind (events) collision) second))").unwrap(),
            Value::Frame(7)
        );
        assert_eq!(
            run("(query_attribute (get_col_partner (filter_order (filter_kind (events) collision) first) (unique (filter_static_attr (objects) red))) color)").unwrap(),
            Value::Attribute("cyan".into())
        );
        let err = run("(get_col_partner (filter_order (filter_kind (events) collision) first) (unique (filter_static_attr (objects) blue)))").unwrap_err();
        assert!(matches!(err.kind, ExecErrorKind::NotCollisionPartner(1)));
        let err = run("(filter_order (filter_kind (events) collision) third)").unwrap_err();
        assert!(matches!(err.kind, ExecErrorKind::OrderOutOfRange(_)));
        assert_eq!(run("(get_frame (end))").unwrap(), Value::Frame(9));
        assert_eq!(run("(count (unseen_events))").unwrap(), Value::Integer(1));
    }

    #[test]
    fn property_and_dynamic_filters() {
        assert_eq!(
            run("(query_both_attribute (filter_charged (objects)) color)").unwrap(),
            Value::Attribute("red and blue".into())
        );
        assert_eq!(
            run("(count (filter_uncharged (objects)))").unwrap(),
            Value::Integer(2)
        );
        assert_eq!(
            run("(count (filter_heavy (objects)))").unwrap(),
            Value::Integer(1)
        );
        assert_eq!(
            run("(count (filter_light (objects)))").unwrap(),
            Value::Integer(3)
        );
        assert_eq!(
            run("(count (filter_dynamic_attr (objects) stationary (get_frame (start))))").unwrap(),
            Value::Integer(1)
        );
        assert_eq!(
            run("(query_direction (unique (filter_static_attr (objects) cylinder)) (get_frame (start)))").unwrap(),
            Value::Attribute("up-right".into())
        );
        assert_eq!(
            run("(negate (exist (filter_heavy (filter_static_attr (objects) sphere))))").unwrap(),
            Value::Boolean(true)
        );
        let err = run("(query_both_attribute (filter_light (objects)) color)").unwrap_err();
        assert_eq!(err.kind, ExecErrorKind::NotAPair(3));
    }

    #[test]
    fn missing_future() {
        let mut w = world();
        w.future = None;
        let err = execute(&parse_program("(unseen_events)").unwrap(), &w).unwrap_err();
        assert_eq!(err.kind, ExecErrorKind::MissingFuture);
    }

    #[test]
    fn moving_threshold() {
        let s = |vx| BodyState::new(Vec2::ZERO, Vec2(vx, 0.0), 0.3);
        assert!(!moving_predicate(&s(0.0), DEFAULT_MOVING_THRESHOLD));
        assert!(moving_predicate(&s(1.0), DEFAULT_MOVING_THRESHOLD));
        assert!(!moving_predicate(&s(0.04), DEFAULT_MOVING_THRESHOLD));
    }

    #[test]
    fn direction_octants() {
        let d = |x, y| direction_name(&BodyState::new(Vec2::ZERO, Vec2(x, y), 0.3), 0.05);
        assert_eq!(d(1.0, 0.0), "right");
        assert_eq!(d(0.0, 1.0), "up");
        assert_eq!(d(-1.0, -1.0), "down-left");
        assert_eq!(d(1.0, -0.1), "right");
        assert_eq!(d(-1.0, 0.01), "left");
        assert_eq!(d(0.0, 0.0), "stationary");
    }

    #[test]
    fn counterfactual_requests_resolve_objects() {
        let p = parse_program("(negate (exist (counterfactual_mass_light (unique (filter_static_attr (objects) red)))))").unwrap();
        let reqs = counterfactual_requests(&p, &world()).unwrap();
        assert_eq!(
            reqs,
            vec![CfEdit {
                object: 0,
                kind: CfKind::Light
            }]
        );
    }

    /// One sample program per row of the operation table; each must execute.
    #[test]
    fn table_coverage() {
        let red = "(unique (filter_static_attr (objects) red))";
        let blue = "(unique (filter_static_attr (objects) blue))";
        let samples: Vec<(&str, String)> = vec![
            (
                "counterfactual_mass_heavy",
                format!("(counterfactual_mass_heavy {blue})"),
            ),
            (
                "counterfactual_mass_light",
                format!("(counterfactual_mass_light {red})"),
            ),
            (
                "counterfactual_uncharged",
                format!("(counterfactual_uncharged {blue})"),
            ),
            (
                "counterfactual_opposite_charged",
                format!("(counterfactual_opposite_charged {blue})"),
            ),
            ("filter_heavy", "(filter_heavy (objects))".into()),
            ("filter_light", "(filter_light (objects))".into()),
            ("filter_charged", "(filter_charged (objects))".into()),
            ("filter_uncharged", "(filter_uncharged (objects))".into()),
            (
                "filter_static_attr",
                "(filter_static_attr (objects) metal)".into(),
            ),
            (
                "filter_dynamic_attr",
                "(filter_dynamic_attr (objects) moving (get_frame (end)))".into(),
            ),
            (
                "filter_event",
                format!("(filter_event (events) (filter_static_attr (objects) red))"),
            ),
            (
                "get_col_partner",
                format!(
                    "(get_col_partner (filter_order (filter_kind (events) collision) first) {red})"
                ),
            ),
            ("filter_before", "(filter_before (events) (end))".into()),
            ("filter_after", "(filter_after (events) (start))".into()),
            ("filter_order", "(filter_order (events) first)".into()),
            ("get_frame", "(get_frame (start))".into()),
            ("unique", red.to_string()),
            ("start", "(start)".into()),
            ("end", "(end)".into()),
            ("objects", "(objects)".into()),
            ("events", "(events)".into()),
            ("unseen_events", "(unseen_events)".into()),
            (
                "query_both_attribute",
                "(query_both_attribute (filter_charged (objects)) shape)".into(),
            ),
            (
                "query_direction",
                format!("(query_direction {red} (get_frame (end)))"),
            ),
            ("is_heavier", format!("(is_heavier {red} {blue})")),
            ("is_lighter", format!("(is_lighter {red} {blue})")),
            (
                "query_attribute",
                format!("(query_attribute {red} material)"),
            ),
            ("count", "(count (events))".into()),
            ("exist", "(exist (filter_heavy (objects)))".into()),
            (
                "belong_to",
                "(belong_to (filter_order (events) last) (events))".into(),
            ),
            ("negate", "(negate (exist (objects)))".into()),
        ];
        assert_eq!(samples.len(), OPERATION_TABLE.len());
        let mut w = world();
        for kind in [CfKind::Heavy, CfKind::Light, CfKind::OppositeCharged] {
            let object = if kind == CfKind::Light { 0 } else { 1 };
            let record = w.target.clone();
            w.counterfactuals.push(CounterfactualWorld {
                edit: CfEdit { object, kind },
                record,
            });
        }
        for (row, text) in &samples {
            assert!(OPERATION_TABLE.contains(row));
            let p = parse_program(text).unwrap_or_else(|e| panic!("{row}: {e}"));
            assert!(
                p.nodes().iter().any(|n| n.op.name() == *row),
                "{row} sample does not use it"
            );
            execute(&p, &w).unwrap_or_else(|e| panic!("{row}: {e}"));
        }
    }
}
