//! Functional programs over scene worlds.
//!
//! A [`Program`] is a post-ordered list of [`Node`]s; each node names an
//! [`OpName`], carries literal arguments and refers to earlier nodes for its
//! inputs. The last node is the output. The concrete syntax is parenthesized
//! prefix form, e.g. `(count (filter_charged (objects)))`; see `docs/programs.md`.

mod exec;
mod parser;

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use exec::{
    counterfactual_requests, direction_name, execute, execute_trace, moving_predicate, CfEdit,
    CfKind, CounterfactualWorld, Event, ExecError, ExecErrorKind, ObjectProps, Value, World,
    DEFAULT_MOVING_THRESHOLD,
};
pub use parser::{parse_program, ParseError};

/// Static type of a value flowing between nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VType {
    Objects,
    Events,
    Event,
    Object,
    Integer,
    Boolean,
    Frame,
    Attribute,
}

impl fmt::Display for VType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            VType::Objects => "objects",
            VType::Events => "events",
            VType::Event => "event",
            VType::Object => "object",
            VType::Integer => "integer",
            VType::Boolean => "boolean",
            VType::Frame => "frame",
            VType::Attribute => "attribute",
        };
        f.write_str(s)
    }
}

/// Closed vocabularies for literal arguments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LitKind {
    /// color, shape or material word
    StaticAttr,
    /// `moving` / `stationary`
    DynamicAttr,
    /// `first`, `second`, `third`, `last`
    Order,
    /// event kind word
    EventKind,
    /// `color`, `shape`, `material`
    Concept,
}

impl LitKind {
    pub fn accepts(self, word: &str) -> bool {
        use crate::model::{Color, EventKind, Material, Shape};
        match self {
            LitKind::StaticAttr => {
                Color::from_word(word).is_some()
                    || Shape::from_word(word).is_some()
                    || Material::from_word(word).is_some()
            }
            LitKind::DynamicAttr => matches!(word, "moving" | "stationary"),
            LitKind::Order => matches!(word, "first" | "second" | "third" | "last"),
            LitKind::EventKind => EventKind::from_word(word).is_some(),
            LitKind::Concept => matches!(word, "color" | "shape" | "material"),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LitKind::StaticAttr => "static attribute",
            LitKind::DynamicAttr => "dynamic attribute",
            LitKind::Order => "order",
            LitKind::EventKind => "event kind",
            LitKind::Concept => "concept",
        }
    }
}

/// Accepted input of a parameter slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputType {
    Exact(VType),
    /// objects or events
    Collection,
}

impl InputType {
    /// `event` is accepted where `events` is expected (as a singleton list).
    pub fn accepts(self, t: VType) -> bool {
        match self {
            InputType::Exact(VType::Events) => matches!(t, VType::Events | VType::Event),
            InputType::Exact(e) => e == t,
            InputType::Collection => matches!(t, VType::Objects | VType::Events),
        }
    }
}

impl fmt::Display for InputType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputType::Exact(t) => write!(f, "{t}"),
            InputType::Collection => f.write_str("objects or events"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    Input(InputType),
    Literal(LitKind),
}

macro_rules! ops {
    ($($variant:ident => $name:literal),+ $(,)?) => {
        /// Every operation the executor understands.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum OpName { $($variant),+ }

        impl OpName {
            pub const ALL: &'static [OpName] = &[$(OpName::$variant),+];

            pub fn name(self) -> &'static str {
                match self { $(OpName::$variant => $name),+ }
            }

            pub fn from_name(name: &str) -> Option<OpName> {
                match name { $($name => Some(OpName::$variant),)+ _ => None }
            }
        }
    };
}

ops! {
    Objects => "objects",
    Events => "events",
    UnseenEvents => "unseen_events",
    Start => "start",
    End => "end",
    FilterHeavy => "filter_heavy",
    FilterLight => "filter_light",
    FilterCharged => "filter_charged",
    FilterUncharged => "filter_uncharged",
    FilterStaticAttr => "filter_static_attr",
    FilterDynamicAttr => "filter_dynamic_attr",
    FilterEvent => "filter_event",
    FilterKind => "filter_kind",
    GetColPartner => "get_col_partner",
    FilterBefore => "filter_before",
    FilterAfter => "filter_after",
    FilterOrder => "filter_order",
    GetFrame => "get_frame",
    Unique => "unique",
    CounterfactualMassHeavy => "counterfactual_mass_heavy",
    CounterfactualMassLight => "counterfactual_mass_light",
    CounterfactualUncharged => "counterfactual_uncharged",
    CounterfactualOppositeCharged => "counterfactual_opposite_charged",
    QueryAttribute => "query_attribute",
    QueryBothAttribute => "query_both_attribute",
    QueryDirection => "query_direction",
    IsHeavier => "is_heavier",
    IsLighter => "is_lighter",
    IsSameCharged => "is_same_charged",
    IsOppositeCharged => "is_opposite_charged",
    Count => "count",
    Exist => "exist",
    BelongTo => "belong_to",
    Negate => "negate",
}

/// Rows of the reference operation table, in the executor's naming.
///
/// `filter_kind`, `is_same_charged` and `is_opposite_charged` are additions
/// needed to express event-kind choices and charge-relation questions.
pub const OPERATION_TABLE: &[&str] = &[
    "counterfactual_mass_heavy",
    "counterfactual_mass_light",
    "counterfactual_uncharged",
    "counterfactual_opposite_charged",
    "filter_heavy",
    "filter_light",
    "filter_charged",
    "filter_uncharged",
    "filter_static_attr",
    "filter_dynamic_attr",
    "filter_event",
    "get_col_partner",
    "filter_before",
    "filter_after",
    "filter_order",
    "get_frame",
    "unique",
    "start",
    "end",
    "objects",
    "events",
    "unseen_events",
    "query_both_attribute",
    "query_direction",
    "is_heavier",
    "is_lighter",
    "query_attribute",
    "count",
    "exist",
    "belong_to",
    "negate",
];

impl OpName {
    pub fn params(self) -> &'static [Param] {
        use InputType::*;
        use OpName::*;
        use Param::{Input, Literal};
        use VType as T;
        const OBJS: Param = Input(Exact(T::Objects));
        const EVTS: Param = Input(Exact(T::Events));
        const EVT: Param = Input(Exact(T::Event));
        const OBJ: Param = Input(Exact(T::Object));
        match self {
            Objects | Events | UnseenEvents | Start | End => &[],
            FilterHeavy | FilterLight | FilterCharged | FilterUncharged => &[OBJS],
            FilterStaticAttr => &[OBJS, Literal(LitKind::StaticAttr)],
            FilterDynamicAttr => &[OBJS, Literal(LitKind::DynamicAttr), Input(Exact(T::Frame))],
            FilterEvent => &[EVTS, OBJS],
            FilterKind => &[EVTS, Literal(LitKind::EventKind)],
            GetColPartner => &[EVT, OBJ],
            FilterBefore | FilterAfter => &[EVTS, EVTS],
            FilterOrder => &[EVTS, Literal(LitKind::Order)],
            GetFrame => &[EVT],
            Unique | Count | Exist => &[Input(Collection)],
            CounterfactualMassHeavy
            | CounterfactualMassLight
            | CounterfactualUncharged
            | CounterfactualOppositeCharged => &[OBJ],
            QueryAttribute => &[OBJ, Literal(LitKind::Concept)],
            QueryBothAttribute => &[OBJS, Literal(LitKind::Concept)],
            QueryDirection => &[OBJ, Input(Exact(T::Frame))],
            IsHeavier | IsLighter | IsSameCharged | IsOppositeCharged => &[OBJ, OBJ],
            BelongTo => &[EVT, EVTS],
            Negate => &[Input(Exact(T::Boolean))],
        }
    }

    /// Output type given the (already checked) input types.
    pub fn output(self, inputs: &[VType]) -> VType {
        use OpName::*;
        match self {
            Objects | FilterHeavy | FilterLight | FilterCharged | FilterUncharged
            | FilterStaticAttr | FilterDynamicAttr => VType::Objects,
            Events
            | UnseenEvents
            | FilterEvent
            | FilterKind
            | FilterBefore
            | FilterAfter
            | CounterfactualMassHeavy
            | CounterfactualMassLight
            | CounterfactualUncharged
            | CounterfactualOppositeCharged => VType::Events,
            Start | End | FilterOrder => VType::Event,
            GetColPartner => VType::Object,
            GetFrame => VType::Frame,
            Unique => match inputs.first() {
                Some(VType::Events) => VType::Event,
                _ => VType::Object,
            },
            QueryAttribute | QueryBothAttribute | QueryDirection => VType::Attribute,
            IsHeavier | IsLighter | IsSameCharged | IsOppositeCharged | Exist | BelongTo
            | Negate => VType::Boolean,
            Count => VType::Integer,
        }
    }

    pub fn counterfactual_kind(self) -> Option<CfKind> {
        match self {
            OpName::CounterfactualMassHeavy => Some(CfKind::Heavy),
            OpName::CounterfactualMassLight => Some(CfKind::Light),
            OpName::CounterfactualUncharged => Some(CfKind::Uncharged),
            OpName::CounterfactualOppositeCharged => Some(CfKind::OppositeCharged),
            _ => None,
        }
    }
}

impl fmt::Display for OpName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Node {
    pub op: OpName,
    /// Literal arguments in parameter order.
    pub args: Vec<String>,
    /// Indices of earlier nodes, in parameter order.
    pub inputs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Program {
    nodes: Vec<Node>,
}

impl Program {
    /// Builds a program from post-ordered nodes, checking wiring, arity and types.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Program, ParseError> {
        let program = Program { nodes };
        program.check()?;
        Ok(program)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn output(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn output_type(&self) -> VType {
        self.types()[self.output()]
    }

    /// Static type of every node.
    pub fn types(&self) -> Vec<VType> {
        let mut types: Vec<VType> = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            let ins: Vec<VType> = n.inputs.iter().map(|&i| types[i]).collect();
            types.push(n.op.output(&ins));
        }
        types
    }

    fn check(&self) -> Result<(), ParseError> {
        if self.nodes.is_empty() {
            return Err(ParseError::Syntax {
                line: 1,
                column: 1,
                message: "empty program".into(),
            });
        }
        let mut types: Vec<VType> = Vec::with_capacity(self.nodes.len());
        for (idx, n) in self.nodes.iter().enumerate() {
            let params = n.op.params();
            let n_inputs = params
                .iter()
                .filter(|p| matches!(p, Param::Input(_)))
                .count();
            let n_lits = params.len() - n_inputs;
            if n.inputs.len() != n_inputs || n.args.len() != n_lits {
                return Err(ParseError::Arity {
                    op: n.op.name().to_string(),
                    expected: params.len(),
                    found: n.inputs.len() + n.args.len(),
                    line: 0,
                    column: 0,
                });
            }
            let (mut ii, mut li) = (0, 0);
            for (pos, p) in params.iter().enumerate() {
                match p {
                    Param::Input(want) => {
                        let src = n.inputs[ii];
                        ii += 1;
                        if src >= idx {
                            return Err(ParseError::Syntax {
                                line: 0,
                                column: 0,
                                message: format!(
                                    "node {idx} reads node {src}, which does not precede it"
                                ),
                            });
                        }
                        if !want.accepts(types[src]) {
                            return Err(ParseError::Type {
                                op: n.op.name().to_string(),
                                position: pos + 1,
                                expected: want.to_string(),
                                found: types[src].to_string(),
                                line: 0,
                                column: 0,
                            });
                        }
                    }
                    Param::Literal(kind) => {
                        let word = &n.args[li];
                        li += 1;
                        if !kind.accepts(word) {
                            return Err(ParseError::Literal {
                                op: n.op.name().to_string(),
                                expected: kind.name().to_string(),
                                found: word.clone(),
                                line: 0,
                                column: 0,
                            });
                        }
                    }
                }
            }
            let ins: Vec<VType> = n.inputs.iter().map(|&i| types[i]).collect();
            types.push(n.op.output(&ins));
        }
        Ok(())
    }

    fn write_node(&self, idx: usize, out: &mut String) {
        let n = &self.nodes[idx];
        out.push('(');
        out.push_str(n.op.name());
        let (mut ii, mut li) = (0, 0);
        for p in n.op.params() {
            out.push(' ');
            match p {
                Param::Input(_) => {
                    self.write_node(n.inputs[ii], out);
                    ii += 1;
                }
                Param::Literal(_) => {
                    out.push_str(&n.args[li]);
                    li += 1;
                }
            }
        }
        out.push(')');
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.write_node(self.output(), &mut s);
        f.write_str(&s)
    }
}

impl std::str::FromStr for Program {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_program(s)
    }
}

impl Serialize for Program {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Program {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_program(&text).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_table_row_has_an_operation() {
        for row in OPERATION_TABLE {
            assert!(
                OpName::from_name(row).is_some(),
                "table row {row} has no operation"
            );
        }
        let mut rows = OPERATION_TABLE.to_vec();
        rows.sort();
        rows.dedup();
        assert_eq!(rows.len(), OPERATION_TABLE.len());
    }

    #[test]
    fn names_round_trip() {
        for op in OpName::ALL {
            assert_eq!(OpName::from_name(op.name()), Some(*op));
        }
    }

    #[test]
    fn from_nodes_rejects_forward_reference() {
        let nodes = vec![Node {
            op: OpName::Count,
            args: vec![],
            inputs: vec![0],
        }];
        assert!(Program::from_nodes(nodes).is_err());
    }

    #[test]
    fn unique_is_polymorphic() {
        let p = parse_program("(unique (events))").unwrap();
        assert_eq!(p.output_type(), VType::Event);
        let p = parse_program("(unique (objects))").unwrap();
        assert_eq!(p.output_type(), VType::Object);
    }
}
