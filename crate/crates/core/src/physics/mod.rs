//! Deterministic planar dynamics for charged discs.
//!
//! Bodies move under pairwise inverse-square charge forces, integrated with
//! semi-implicit Euler substeps. Disc contacts are resolved with an impulse
//! along the centre line. States are sampled at `record_fps` into a
//! [`SceneRecord`] and events are detected afterwards.

mod events;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec2;
use crate::model::{BodyState, ContactSample, ObjectSpec, SceneKind, SceneRecord};

pub use events::{detect_events, proximity_contacts};

#[derive(Debug, Error)]
pub enum PhysicsError {
    #[error("non-finite state at frame {frame} (object {object})")]
    NonFinite { frame: usize, object: usize },
    #[error("invalid physics config: {0}")]
    Config(String),
    #[error("invalid initial conditions: {0}")]
    Initial(String),
    #[error("cannot read config {path}: {reason}")]
    Load { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicsConfig {
    pub k_coulomb: f64,
    pub dt_substep: f64,
    pub record_fps: u32,
    pub restitution: f64,
    pub arena_half_extent: f64,
    pub linear_drag: f64,
    /// Max centre distance at which a charged pair logs attraction/repulsion.
    pub interaction_range: f64,
    pub collision_eps: f64,
    /// When set, walls are removed and objects may leave the arena ("out" events).
    pub open_boundary: bool,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        PhysicsConfig {
            k_coulomb: 8.0,
            dt_substep: 0.002,
            record_fps: 25,
            restitution: 1.0,
            arena_half_extent: 5.0,
            linear_drag: 0.0,
            interaction_range: 3.0,
            collision_eps: 1e-9,
            open_boundary: false,
        }
    }
}

impl PhysicsConfig {
    /// Number of integrator substeps between two recorded frames.
    pub fn substeps_per_frame(&self) -> usize {
        (1.0 / (self.dt_substep * self.record_fps as f64)).round() as usize
    }

    pub fn frame_dt(&self) -> f64 {
        1.0 / self.record_fps as f64
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        let finite = [
            self.k_coulomb,
            self.dt_substep,
            self.restitution,
            self.arena_half_extent,
            self.linear_drag,
            self.interaction_range,
            self.collision_eps,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(PhysicsError::Config("non-finite parameter".into()));
        }
        if self.dt_substep <= 0.0 || self.record_fps == 0 {
            return Err(PhysicsError::Config(
                "dt_substep and record_fps must be positive".into(),
            ));
        }
        let ratio = 1.0 / (self.dt_substep * self.record_fps as f64);
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(PhysicsError::Config(format!(
                "dt_substep x record_fps must divide 1 (got {} substeps per frame)",
                ratio
            )));
        }
        if !(0.0..=1.0).contains(&self.restitution) {
            return Err(PhysicsError::Config(
                "restitution must lie in [0, 1]".into(),
            ));
        }
        if self.arena_half_extent <= 0.0 || self.linear_drag < 0.0 || self.interaction_range < 0.0 {
            return Err(PhysicsError::Config(
                "arena, drag and range must be non-negative".into(),
            ));
        }
        if self.collision_eps < 0.0 {
            return Err(PhysicsError::Config(
                "collision_eps must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Loads a config from a `.toml` or `.json` file; missing keys take defaults.
    pub fn load(path: &Path) -> Result<Self, PhysicsError> {
        let load_err = |reason: String| PhysicsError::Load {
            path: path.display().to_string(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| load_err(e.to_string()))?;
        let cfg: PhysicsConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| load_err(e.to_string()))?
        } else {
            serde_json::from_str(&text).map_err(|e| load_err(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Starting states of the objects present in one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialConditions {
    pub objects: Vec<ObjectSpec>,
    pub states: Vec<BodyState>,
}

impl InitialConditions {
    pub fn new(objects: Vec<ObjectSpec>, states: Vec<BodyState>) -> Self {
        InitialConditions { objects, states }
    }

    /// Re-creates the initial conditions of a record from its frame-0 states.
    pub fn from_record(record: &SceneRecord) -> Self {
        InitialConditions {
            objects: record.objects.clone(),
            states: record.frames.first().cloned().unwrap_or_default(),
        }
    }

    /// Continuation from the state at the end of a record.
    pub fn from_record_end(record: &SceneRecord) -> Self {
        InitialConditions {
            objects: record.objects.clone(),
            states: record.end_state.clone(),
        }
    }

    pub fn validate(&self, cfg: &PhysicsConfig) -> Result<(), PhysicsError> {
        if self.objects.len() != self.states.len() {
            return Err(PhysicsError::Initial("object/state count mismatch".into()));
        }
        for (o, s) in self.objects.iter().zip(&self.states) {
            if !s.is_valid() {
                return Err(PhysicsError::Initial(format!(
                    "object {} has invalid state",
                    o.id
                )));
            }
            if !cfg.open_boundary {
                let lim = cfg.arena_half_extent;
                if s.position.x().abs() > lim || s.position.y().abs() > lim {
                    return Err(PhysicsError::Initial(format!(
                        "object {} outside arena",
                        o.id
                    )));
                }
            }
        }
        for i in 0..self.states.len() {
            for j in i + 1..self.states.len() {
                let (a, b) = (&self.states[i], &self.states[j]);
                if (a.position - b.position).norm() < a.radius + b.radius {
                    return Err(PhysicsError::Initial(format!(
                        "objects {} and {} overlap",
                        self.objects[i].id, self.objects[j].id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Force exerted on `a` by `b`.
///
/// Magnitude is `k q_a q_b / max(r, r_a + r_b)^2`; positive products push `a`
/// away from `b`. Coincident centres use the +x axis.
pub fn coulomb_force(
    a: &BodyState,
    b: &BodyState,
    q_a: f64,
    q_b: f64,
    cfg: &PhysicsConfig,
) -> Vec2 {
    let qq = q_a * q_b;
    if qq == 0.0 {
        return Vec2::ZERO;
    }
    let d = a.position - b.position;
    let r = d.norm();
    let axis = if r > 0.0 {
        d * (1.0 / r)
    } else {
        Vec2(1.0, 0.0)
    };
    let rc = r.max(a.radius + b.radius);
    axis * (cfg.k_coulomb * qq / (rc * rc))
}

/// Pair potential matching [`coulomb_force`] outside contact.
pub fn coulomb_potential(
    a: &BodyState,
    b: &BodyState,
    q_a: f64,
    q_b: f64,
    cfg: &PhysicsConfig,
) -> f64 {
    let qq = q_a * q_b;
    if qq == 0.0 {
        return 0.0;
    }
    let r = (a.position - b.position).norm().max(a.radius + b.radius);
    cfg.k_coulomb * qq / r
}

/// Applies a contact impulse between two discs if they touch and approach.
///
/// Returns the updated states; separating or distant pairs come back unchanged.
pub fn resolve_collision(
    a: &BodyState,
    b: &BodyState,
    mass_a: f64,
    mass_b: f64,
    cfg: &PhysicsConfig,
) -> (BodyState, BodyState) {
    let mut a2 = *a;
    let mut b2 = *b;
    apply_contact(
        &mut a2,
        &mut b2,
        1.0 / mass_a,
        1.0 / mass_b,
        Vec2::ZERO,
        cfg,
    );
    (a2, b2)
}

/// In-place contact resolution; returns whether an impulse was applied.
///
/// `vel_offset` is added to the relative velocity before computing the
/// impulse. The integrator uses it to resolve contacts on the velocity
/// synchronized with the contact time instead of the stored half-step one.
fn apply_contact(
    a: &mut BodyState,
    b: &mut BodyState,
    inv_a: f64,
    inv_b: f64,
    vel_offset: Vec2,
    cfg: &PhysicsConfig,
) -> bool {
    let d = a.position - b.position;
    let dist = d.norm();
    let reach = a.radius + b.radius;
    if dist > reach + cfg.collision_eps {
        return false;
    }
    let n = if dist > 0.0 {
        d * (1.0 / dist)
    } else {
        Vec2(1.0, 0.0)
    };
    let vn = (a.velocity - b.velocity + vel_offset).dot(n);
    if vn >= 0.0 {
        return false;
    }
    let inv_sum = inv_a + inv_b;
    let j = -(1.0 + cfg.restitution) * vn / inv_sum;
    a.velocity += n * (j * inv_a);
    b.velocity -= n * (j * inv_b);
    let overlap = reach - dist;
    if overlap > 0.0 {
        a.position += n * (overlap * inv_a / inv_sum);
        b.position -= n * (overlap * inv_b / inv_sum);
    }
    true
}

/// Per-body constants used by the integrator.
#[derive(Debug, Clone, Copy)]
struct BodyParams {
    inv_mass: f64,
    charge: f64,
}

/// Stepping engine for one video. Keeps the wall impulse it has applied so
/// momentum bookkeeping can separate internal from external exchanges.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    cfg: &'a PhysicsConfig,
    ids: Vec<usize>,
    params: Vec<BodyParams>,
    forces: Vec<Vec2>,
    pub states: Vec<BodyState>,
    pub wall_impulse: Vec2,
    pub substeps_done: usize,
}

impl<'a> Simulator<'a> {
    pub fn new(init: &InitialConditions, cfg: &'a PhysicsConfig) -> Self {
        Simulator {
            cfg,
            ids: init.objects.iter().map(|o| o.id).collect(),
            params: init
                .objects
                .iter()
                .map(|o| BodyParams {
                    inv_mass: 1.0 / o.mass.value(),
                    charge: o.charge.value(),
                })
                .collect(),
            forces: vec![Vec2::ZERO; init.objects.len()],
            states: init.states.clone(),
            wall_impulse: Vec2::ZERO,
            substeps_done: 0,
        }
    }

    /// Advances one substep; contact pairs (by id) are appended to `contacts`.
    pub fn step(&mut self, contacts: &mut Vec<(usize, usize)>) -> Result<(), PhysicsError> {
        let cfg = self.cfg;
        let dt = cfg.dt_substep;
        let n = self.states.len();

        for f in self.forces.iter_mut() {
            *f = Vec2::ZERO;
        }
        for i in 0..n {
            if self.params[i].charge == 0.0 {
                continue;
            }
            for j in i + 1..n {
                if self.params[j].charge == 0.0 {
                    continue;
                }
                let f = coulomb_force(
                    &self.states[i],
                    &self.states[j],
                    self.params[i].charge,
                    self.params[j].charge,
                    cfg,
                );
                self.forces[i] += f;
                self.forces[j] -= f;
            }
        }

        for i in 0..n {
            let p = self.params[i];
            let s = &mut self.states[i];
            let accel = self.forces[i] * p.inv_mass - s.velocity * cfg.linear_drag;
            s.velocity += accel * dt;
        }

        self.drift_with_contacts(dt, contacts);

        if !cfg.open_boundary {
            let lim = cfg.arena_half_extent;
            for i in 0..n {
                let p = self.params[i];
                let accel = self.forces[i] * p.inv_mass;
                let s = &mut self.states[i];
                let before = s.velocity;
                reflect_axis(
                    &mut s.position.0,
                    &mut s.velocity.0,
                    accel.0,
                    s.radius,
                    lim,
                    dt,
                );
                reflect_axis(
                    &mut s.position.1,
                    &mut s.velocity.1,
                    accel.1,
                    s.radius,
                    lim,
                    dt,
                );
                self.wall_impulse += (s.velocity - before) * (1.0 / p.inv_mass);
            }
        }

        // leftover overlaps (three-body pile-ups, wall pushes)
        for i in 0..n {
            for j in i + 1..n {
                let offset = self.sync_offset(i, j, 0.5 * dt);
                let (left, right) = self.states.split_at_mut(j);
                if apply_contact(
                    &mut left[i],
                    &mut right[0],
                    self.params[i].inv_mass,
                    self.params[j].inv_mass,
                    offset,
                    cfg,
                ) {
                    let (a, b) = (self.ids[i], self.ids[j]);
                    contacts.push((a.min(b), a.max(b)));
                }
            }
        }

        self.substeps_done += 1;
        let frame = self.substeps_done / cfg.substeps_per_frame();
        for (i, s) in self.states.iter().enumerate() {
            if !(s.position.is_finite() && s.velocity.is_finite()) {
                return Err(PhysicsError::NonFinite {
                    frame,
                    object: self.ids[i],
                });
            }
        }
        Ok(())
    }

    /// Relative velocity change of pair `(i, j)` over `tau` under the current forces.
    fn sync_offset(&self, i: usize, j: usize, tau: f64) -> Vec2 {
        (self.forces[i] * self.params[i].inv_mass - self.forces[j] * self.params[j].inv_mass) * tau
    }

    /// Moves every body along its velocity for `dt`, stopping at each disc
    /// contact inside the interval to apply the impulse at the touching
    /// configuration. Resolving contacts at the time of impact keeps the
    /// clamped force from doing work inside an overlap.
    fn drift_with_contacts(&mut self, dt: f64, contacts: &mut Vec<(usize, usize)>) {
        let n = self.states.len();
        let mut t = 0.0;
        for _ in 0..MAX_IMPACTS_PER_SUBSTEP {
            let mut first: Option<(f64, usize, usize)> = None;
            for i in 0..n {
                for j in i + 1..n {
                    if let Some(tc) = time_of_impact(
                        &self.states[i],
                        &self.states[j],
                        dt - t,
                        self.cfg.collision_eps,
                    ) {
                        if first.is_none_or(|(best, _, _)| tc < best) {
                            first = Some((tc, i, j));
                        }
                    }
                }
            }
            let Some((tc, i, j)) = first else {
                break;
            };
            for s in self.states.iter_mut() {
                s.position += s.velocity * tc;
            }
            t += tc;
            let offset = self.sync_offset(i, j, t - 0.5 * dt);
            let (left, right) = self.states.split_at_mut(j);
            if apply_contact(
                &mut left[i],
                &mut right[0],
                self.params[i].inv_mass,
                self.params[j].inv_mass,
                offset,
                self.cfg,
            ) {
                let (a, b) = (self.ids[i], self.ids[j]);
                contacts.push((a.min(b), a.max(b)));
            }
        }
        let rest = dt - t;
        for s in self.states.iter_mut() {
            s.position += s.velocity * rest;
        }
    }
}

const MAX_IMPACTS_PER_SUBSTEP: usize = 16;

/// Earliest time in `[0, horizon]` at which two approaching discs moving in
/// straight lines touch, if any.
fn time_of_impact(a: &BodyState, b: &BodyState, horizon: f64, eps: f64) -> Option<f64> {
    let d = a.position - b.position;
    let v = a.velocity - b.velocity;
    let dv = d.dot(v);
    if dv >= 0.0 {
        return None;
    }
    let reach = a.radius + b.radius;
    let c = d.norm_sq() - reach * reach;
    if c <= 2.0 * reach * eps {
        return Some(0.0);
    }
    let vv = v.norm_sq();
    let disc = dv * dv - vv * c;
    if disc < 0.0 {
        return None;
    }
    let tc = (-dv - disc.sqrt()) / vv;
    (tc <= horizon).then_some(tc.max(0.0))
}

/// Elastic wall along one axis. A body that crossed the wall during the last
/// drift is put back on its mirrored path; the normal velocity is reversed at
/// the contact time using the velocity synchronized with that instant.
fn reflect_axis(pos: &mut f64, vel: &mut f64, accel: f64, radius: f64, lim: f64, dt: f64) {
    let (wall, sign) = if *pos - radius < -lim {
        (-lim + radius, -1.0)
    } else if *pos + radius > lim {
        (lim - radius, 1.0)
    } else {
        return;
    };
    let u = *vel * sign;
    let overshoot = (*pos - wall) * sign;
    if u <= 0.0 {
        *pos = wall;
        return;
    }
    let after = (overshoot / u).min(dt);
    let tc = dt - after;
    let reflected = -u - 2.0 * accel * sign * (tc - 0.5 * dt);
    let reflected = reflected.min(0.0);
    *vel = reflected * sign;
    *pos = wall + reflected * sign * after;
}

/// Single integrator substep over bare states (no contact log).
pub fn step(
    states: &[BodyState],
    roster: &[ObjectSpec],
    cfg: &PhysicsConfig,
) -> Result<Vec<BodyState>, PhysicsError> {
    let init = InitialConditions::new(roster.to_vec(), states.to_vec());
    let mut sim = Simulator::new(&init, cfg);
    sim.step(&mut Vec::new())?;
    Ok(sim.states)
}

/// Simulates `duration_s` seconds and returns the recorded video with events.
pub fn simulate(
    init: &InitialConditions,
    duration_s: f64,
    kind: SceneKind,
    cfg: &PhysicsConfig,
) -> Result<SceneRecord, PhysicsError> {
    simulate_with_diagnostics(init, duration_s, kind, cfg).map(|(r, _)| r)
}

/// Bookkeeping gathered while simulating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimDiagnostics {
    /// Total impulse delivered by the arena walls.
    pub wall_impulse: Vec2,
}

pub fn simulate_with_diagnostics(
    init: &InitialConditions,
    duration_s: f64,
    kind: SceneKind,
    cfg: &PhysicsConfig,
) -> Result<(SceneRecord, SimDiagnostics), PhysicsError> {
    cfg.validate()?;
    init.validate(cfg)?;
    let spf = cfg.substeps_per_frame();
    let n_frames = SceneRecord::expected_frames(duration_s, cfg.record_fps);
    let total_substeps = n_frames * spf;

    let mut sim = Simulator::new(init, cfg);
    let mut frames = Vec::with_capacity(n_frames);
    let mut contacts = Vec::new();
    let mut pairs = Vec::new();
    for s in 0..total_substeps {
        if s % spf == 0 {
            frames.push(sim.states.clone());
        }
        pairs.clear();
        sim.step(&mut pairs)?;
        let frame = ((s + 1) / spf).min(n_frames.saturating_sub(1));
        contacts.extend(pairs.iter().map(|&(a, b)| ContactSample { frame, a, b }));
    }

    let mut record = SceneRecord {
        kind,
        objects: init.objects.clone(),
        duration_s,
        fps: cfg.record_fps,
        frames,
        end_state: sim.states.clone(),
        events: Vec::new(),
        contacts,
    };
    record.events = detect_events(&record, cfg);
    Ok((
        record,
        SimDiagnostics {
            wall_impulse: sim.wall_impulse,
        },
    ))
}

pub fn total_momentum(objects: &[ObjectSpec], states: &[BodyState]) -> Vec2 {
    objects
        .iter()
        .zip(states)
        .fold(Vec2::ZERO, |acc, (o, s)| acc + s.velocity * o.mass.value())
}

/// Kinetic energy plus pairwise charge potential.
pub fn total_energy(objects: &[ObjectSpec], states: &[BodyState], cfg: &PhysicsConfig) -> f64 {
    let (ke, pe) = energy_terms(objects, states, cfg);
    ke + pe
}

/// `(kinetic, potential)`.
pub fn energy_terms(
    objects: &[ObjectSpec],
    states: &[BodyState],
    cfg: &PhysicsConfig,
) -> (f64, f64) {
    let ke: f64 = objects
        .iter()
        .zip(states)
        .map(|(o, s)| 0.5 * o.mass.value() * s.velocity.norm_sq())
        .sum();
    let mut pe = 0.0;
    for i in 0..objects.len() {
        for j in i + 1..objects.len() {
            pe += coulomb_potential(
                &states[i],
                &states[j],
                objects[i].charge.value(),
                objects[j].charge.value(),
                cfg,
            );
        }
    }
    (ke, pe)
}

/// Energy with velocities advanced half a substep under the current forces.
///
/// The integrator stores the velocity of the middle of the last substep;
/// shifting it by `F dt / 2m` aligns it with the recorded positions, which
/// removes the first-order oscillation from energy bookkeeping.
pub fn synchronized_energy(
    objects: &[ObjectSpec],
    states: &[BodyState],
    cfg: &PhysicsConfig,
) -> f64 {
    let n = objects.len();
    let mut ke = 0.0;
    for i in 0..n {
        let mut f = Vec2::ZERO;
        for j in 0..n {
            if i != j {
                f += coulomb_force(
                    &states[i],
                    &states[j],
                    objects[i].charge.value(),
                    objects[j].charge.value(),
                    cfg,
                );
            }
        }
        let m = objects[i].mass.value();
        let v = states[i].velocity + f * (0.5 * cfg.dt_substep / m);
        ke += 0.5 * m * v.norm_sq();
    }
    ke + energy_terms(objects, states, cfg).1
}

/// Writes `frame,id,x,y,vx,vy` rows for plotting.
pub fn write_csv<W: std::io::Write>(record: &SceneRecord, mut out: W) -> std::io::Result<()> {
    writeln!(out, "frame,id,x,y,vx,vy")?;
    for (k, frame) in record.frames.iter().enumerate() {
        for (o, s) in record.objects.iter().zip(frame) {
            writeln!(
                out,
                "{},{},{:.9},{:.9},{:.9},{:.9}",
                k,
                o.id,
                s.position.x(),
                s.position.y(),
                s.velocity.x(),
                s.velocity.y()
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Charge, Color, Mass, Material, Shape};

    pub(crate) fn obj(id: usize, mass: Mass, charge: Charge) -> ObjectSpec {
        ObjectSpec {
            id,
            color: Color::ALL[id % 8],
            shape: Shape::Sphere,
            material: Material::Rubber,
            mass,
            charge,
        }
    }

    fn body(x: f64, y: f64, vx: f64, vy: f64) -> BodyState {
        BodyState::new(Vec2(x, y), Vec2(vx, vy), 0.3)
    }

    #[test]
    fn default_config_has_twenty_substeps_per_frame() {
        let cfg = PhysicsConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.substeps_per_frame(), 20);
    }

    #[test]
    fn config_rejects_non_dividing_step() {
        let cfg = PhysicsConfig {
            dt_substep: 0.003,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_loads_partial_toml() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("phys.toml");
        std::fs::write(&p, "k_coulomb = 4.0\nrecord_fps = 50\ndt_substep = 0.001\n").unwrap();
        let cfg = PhysicsConfig::load(&p).unwrap();
        assert_eq!(cfg.k_coulomb, 4.0);
        assert_eq!(cfg.substeps_per_frame(), 20);
        assert_eq!(cfg.arena_half_extent, 5.0);
    }

    #[test]
    fn like_charges_repel_with_inverse_square_magnitude() {
        let cfg = PhysicsConfig::default();
        let a = body(0.0, 0.0, 0.0, 0.0);
        let b = body(2.0, 0.0, 0.0, 0.0);
        let f = coulomb_force(&a, &b, 1.0, 1.0, &cfg);
        assert!((f.norm() - 2.0).abs() < 1e-15);
        assert!(f.x() < 0.0, "force on a must point away from b");
        let g = coulomb_force(&b, &a, 1.0, 1.0, &cfg);
        assert_eq!(g, -f);
    }

    #[test]
    fn unlike_charges_attract() {
        let cfg = PhysicsConfig::default();
        let a = body(0.0, 0.0, 0.0, 0.0);
        let b = body(2.0, 0.0, 0.0, 0.0);
        let f = coulomb_force(&a, &b, 1.0, -1.0, &cfg);
        assert!((f.norm() - 2.0).abs() < 1e-15);
        assert!(f.x() > 0.0);
    }

    #[test]
    fn neutral_feels_no_force() {
        let cfg = PhysicsConfig::default();
        let f = coulomb_force(
            &body(0.0, 0.0, 0.0, 0.0),
            &body(1.0, 0.0, 0.0, 0.0),
            0.0,
            1.0,
            &cfg,
        );
        assert_eq!(f, Vec2::ZERO);
    }

    #[test]
    fn force_is_clamped_inside_contact() {
        let cfg = PhysicsConfig::default();
        let f = coulomb_force(
            &body(0.0, 0.0, 0.0, 0.0),
            &body(0.1, 0.0, 0.0, 0.0),
            1.0,
            1.0,
            &cfg,
        );
        assert!((f.norm() - 8.0 / 0.36).abs() < 1e-12);
        let same = coulomb_force(
            &body(0.0, 0.0, 0.0, 0.0),
            &body(0.0, 0.0, 0.0, 0.0),
            1.0,
            1.0,
            &cfg,
        );
        assert_eq!(same, Vec2(8.0 / 0.36, 0.0));
    }

    #[test]
    fn equal_mass_head_on_swaps_velocities() {
        let cfg = PhysicsConfig::default();
        let (a, b) = resolve_collision(
            &body(-0.3, 0.0, 1.0, 0.0),
            &body(0.3, 0.0, -1.0, 0.0),
            1.0,
            1.0,
            &cfg,
        );
        assert_eq!(a.velocity, Vec2(-1.0, 0.0));
        assert_eq!(b.velocity, Vec2(1.0, 0.0));
    }

    #[test]
    fn heavy_into_light_matches_closed_form() {
        let cfg = PhysicsConfig::default();
        let (a, b) = resolve_collision(
            &body(-0.3, 0.0, 1.0, 0.0),
            &body(0.3, 0.0, 0.0, 0.0),
            5.0,
            1.0,
            &cfg,
        );
        // (m1 - m2) / (m1 + m2) and 2 m1 / (m1 + m2)
        assert!((a.velocity.x() - 2.0 / 3.0).abs() < 1e-12);
        assert!((b.velocity.x() - 5.0 / 3.0).abs() < 1e-12);
        assert_eq!(a.velocity.y(), 0.0);
        assert_eq!(b.velocity.y(), 0.0);
    }

    #[test]
    fn separating_pair_is_untouched() {
        let cfg = PhysicsConfig::default();
        let a0 = body(-0.29, 0.0, -1.0, 0.0);
        let b0 = body(0.29, 0.0, 1.0, 0.0);
        let (a, b) = resolve_collision(&a0, &b0, 1.0, 1.0, &cfg);
        assert_eq!((a, b), (a0, b0));
    }

    #[test]
    fn tangential_velocity_preserved() {
        let cfg = PhysicsConfig::default();
        let (a, b) = resolve_collision(
            &body(-0.3, 0.0, 1.0, 0.7),
            &body(0.3, 0.0, -1.0, -0.2),
            1.0,
            5.0,
            &cfg,
        );
        assert_eq!(a.velocity.y(), 0.7);
        assert_eq!(b.velocity.y(), -0.2);
    }

    #[test]
    fn overlap_is_removed_by_inverse_mass() {
        let cfg = PhysicsConfig::default();
        let (a, b) = resolve_collision(
            &body(-0.25, 0.0, 1.0, 0.0),
            &body(0.25, 0.0, 0.0, 0.0),
            1.0,
            1.0,
            &cfg,
        );
        assert!(((b.position - a.position).norm() - 0.6).abs() < 1e-12);
        assert!((a.position.x() + 0.3).abs() < 1e-12);
    }

    #[test]
    fn coincident_centres_use_x_axis() {
        let cfg = PhysicsConfig::default();
        let (a, b) = resolve_collision(
            &body(0.0, 0.0, -1.0, 0.0),
            &body(0.0, 0.0, 1.0, 0.0),
            1.0,
            1.0,
            &cfg,
        );
        assert_eq!(a.velocity, Vec2(1.0, 0.0));
        assert_eq!(b.velocity, Vec2(-1.0, 0.0));
    }

    #[test]
    fn free_object_moves_in_a_straight_line() {
        let cfg = PhysicsConfig::default();
        let init = InitialConditions::new(
            vec![obj(0, Mass::Light, Charge::Neutral)],
            vec![body(0.0, 0.0, 1.0, 0.0)],
        );
        let rec = simulate(&init, 1.0, SceneKind::Target, &cfg).unwrap();
        assert_eq!(rec.frames.len(), 25);
        let end = rec.end_state[0].position;
        assert!((end.x() - 1.0).abs() < 1e-12 && end.y() == 0.0);
    }

    #[test]
    fn target_length_at_defaults() {
        let cfg = PhysicsConfig::default();
        let init = InitialConditions::new(
            vec![obj(0, Mass::Light, Charge::Neutral)],
            vec![body(0.0, 0.0, 0.0, 0.0)],
        );
        let rec = simulate(&init, 5.0, SceneKind::Target, &cfg).unwrap();
        assert_eq!(rec.frames.len(), 125);
        assert!(rec.violations().is_empty());
    }

    #[test]
    fn step_reports_non_finite_state() {
        let cfg = PhysicsConfig::default();
        let roster = vec![obj(0, Mass::Light, Charge::Neutral)];
        let states = vec![BodyState::new(
            Vec2(f64::MAX, 0.0),
            Vec2(f64::MAX, 0.0),
            0.3,
        )];
        let err = step(
            &states,
            &roster,
            &PhysicsConfig {
                open_boundary: true,
                ..cfg
            },
        )
        .unwrap_err();
        assert!(matches!(err, PhysicsError::NonFinite { object: 0, .. }));
    }

    #[test]
    fn overlapping_start_rejected() {
        let cfg = PhysicsConfig::default();
        let init = InitialConditions::new(
            vec![
                obj(0, Mass::Light, Charge::Neutral),
                obj(1, Mass::Light, Charge::Neutral),
            ],
            vec![body(0.0, 0.0, 0.0, 0.0), body(0.2, 0.0, 0.0, 0.0)],
        );
        assert!(matches!(
            simulate(&init, 1.0, SceneKind::Target, &cfg),
            Err(PhysicsError::Initial(_))
        ));
    }

    #[test]
    fn walls_reflect_and_account_impulse() {
        let cfg = PhysicsConfig::default();
        let init = InitialConditions::new(
            vec![obj(0, Mass::Heavy, Charge::Neutral)],
            vec![body(4.0, 0.0, 2.0, 0.0)],
        );
        let (rec, diag) = simulate_with_diagnostics(&init, 2.0, SceneKind::Target, &cfg).unwrap();
        assert!(rec.end_state[0].velocity.x() < 0.0);
        assert!((diag.wall_impulse.x() + 20.0).abs() < 1e-12);
        assert!(rec
            .frames
            .iter()
            .all(|f| f[0].position.x() <= 5.0 - 0.3 + 1e-12));
    }

    #[test]
    fn heavy_body_deflects_less() {
        let cfg = PhysicsConfig::default();
        let before_a = body(-0.29, 0.0, 1.0, 0.5);
        let before_b = body(0.29, 0.1, -0.5, 0.2);
        let (a, b) = resolve_collision(&before_a, &before_b, 5.0, 1.0, &cfg);
        let turn = |s0: &BodyState, s1: &BodyState| {
            let c = s0.velocity.dot(s1.velocity) / (s0.velocity.norm() * s1.velocity.norm());
            c.clamp(-1.0, 1.0).acos()
        };
        let (ta, tb) = (turn(&before_a, &a), turn(&before_b, &b));
        assert!(ta > 0.0 && ta < tb, "heavy turned {ta}, light turned {tb}");
    }
}
