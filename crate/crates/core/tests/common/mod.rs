#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use comphy::model::{Color, EventKind, Material, Shape, VideoSet};
use comphy::physics::PhysicsConfig;
use comphy::program::{InputType, LitKind, Node, OpName, Param, Program, VType};
use comphy::scene_gen::{generate_video_set, split_seeds, GenConfig};

pub fn sets(root: u64, n: usize) -> Vec<VideoSet> {
    let physics = PhysicsConfig::default();
    split_seeds(root, n)
        .into_iter()
        .map(|s| generate_video_set(s, &GenConfig::default(), &physics).unwrap())
        .collect()
}

fn literal(kind: LitKind, rng: &mut impl Rng) -> String {
    let words: Vec<&str> = match kind {
        LitKind::StaticAttr => Color::ALL
            .iter()
            .map(|c| c.as_str())
            .chain(Shape::ALL.iter().map(|s| s.as_str()))
            .chain(Material::ALL.iter().map(|m| m.as_str()))
            .collect(),
        LitKind::DynamicAttr => vec!["moving", "stationary"],
        LitKind::Order => vec!["first", "second", "third", "last"],
        LitKind::EventKind => EventKind::ALL.iter().map(|k| k.as_str()).collect(),
        LitKind::Concept => vec!["color", "shape", "material"],
    };
    words.choose(rng).unwrap().to_string()
}

/// Ops that can produce `t` without recursing into `t` itself.
fn base_ops(t: VType) -> &'static [OpName] {
    use OpName::*;
    match t {
        VType::Objects => &[Objects],
        VType::Events => &[Events, UnseenEvents],
        VType::Event => &[Start, End],
        VType::Object => &[Unique],
        VType::Frame => &[GetFrame],
        VType::Integer => &[Count],
        VType::Boolean => &[Exist],
        VType::Attribute => &[QueryAttribute],
    }
}

fn producers(t: VType) -> Vec<OpName> {
    OpName::ALL
        .iter()
        .copied()
        .filter(|op| match op {
            OpName::Unique => matches!(t, VType::Object | VType::Event),
            _ => op.output(&[]) == t,
        })
        .collect()
}

fn build(t: VType, depth: usize, rng: &mut ChaCha8Rng, nodes: &mut Vec<Node>) -> usize {
    let op = if depth == 0 {
        *base_ops(t).choose(rng).unwrap()
    } else {
        *producers(t).choose(rng).unwrap()
    };
    let mut inputs = Vec::new();
    let mut args = Vec::new();
    for p in op.params() {
        match *p {
            Param::Literal(k) => args.push(literal(k, rng)),
            Param::Input(InputType::Collection) => {
                let want = match (op, t) {
                    (OpName::Unique, VType::Event) => VType::Events,
                    (OpName::Unique, _) => VType::Objects,
                    _ => *[VType::Objects, VType::Events].choose(rng).unwrap(),
                };
                inputs.push(build(want, depth.saturating_sub(1), rng, nodes));
            }
            Param::Input(InputType::Exact(VType::Events)) if rng.gen_bool(0.2) => {
                inputs.push(build(VType::Event, depth.saturating_sub(1), rng, nodes));
            }
            Param::Input(InputType::Exact(want)) => {
                inputs.push(build(want, depth.saturating_sub(1), rng, nodes))
            }
        }
    }
    nodes.push(Node { op, args, inputs });
    nodes.len() - 1
}

/// A random well-typed program of the given output type.
pub fn random_program(seed: u64, t: VType, max_depth: usize) -> Program {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.gen_range(0..=max_depth);
    let mut nodes = Vec::new();
    build(t, depth, &mut rng, &mut nodes);
    Program::from_nodes(nodes).expect("generator emits well-typed programs")
}

pub const OUTPUT_TYPES: [VType; 8] = [
    VType::Objects,
    VType::Events,
    VType::Event,
    VType::Object,
    VType::Integer,
    VType::Boolean,
    VType::Frame,
    VType::Attribute,
];
