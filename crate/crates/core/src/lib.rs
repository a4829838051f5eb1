//! Deterministic physical-reasoning problem sets: planar charge/collision
//! dynamics, scene and question generation, hidden-property inference and
//! symbolic question answering.

pub mod geom;
pub mod gnn;
pub mod inference;
pub mod model;
pub mod physics;
pub mod pipeline;
pub mod program;
pub mod questions;
pub mod scene_gen;
pub mod worlds;
