use std::collections::BTreeMap;

use crate::model::{ContactSample, EventKind, EventRecord, SceneKind, SceneRecord};

use super::PhysicsConfig;

/// Detects in/out, collision and attraction/repulsion events of a record.
///
/// Collisions come from the contact log: one event per contact episode,
/// stamped with the episode's first frame. A charged pair produces one
/// attraction or repulsion interval per maximal run of frames in which the
/// centres are within `interaction_range`.
pub fn detect_events(record: &SceneRecord, cfg: &PhysicsConfig) -> Vec<EventRecord> {
    let mut events = Vec::new();
    boundary_events(record, cfg, &mut events);
    collision_events(&record.contacts, &mut events);
    charge_events(record, cfg, &mut events);
    events.sort_by(|a, b| {
        (a.frame, a.kind, &a.participants).cmp(&(b.frame, b.kind, &b.participants))
    });
    events
}

fn boundary_events(record: &SceneRecord, cfg: &PhysicsConfig, out: &mut Vec<EventRecord>) {
    let lim = cfg.arena_half_extent;
    for (idx, obj) in record.objects.iter().enumerate() {
        let mut inside_prev: Option<bool> = None;
        for (k, frame) in record.frames.iter().enumerate() {
            let p = frame[idx].position;
            let inside = p.x().abs() <= lim && p.y().abs() <= lim;
            match inside_prev {
                None if inside && record.kind != SceneKind::TargetFuture => {
                    out.push(EventRecord::instant(EventKind::In, vec![obj.id], k));
                }
                Some(false) if inside => {
                    out.push(EventRecord::instant(EventKind::In, vec![obj.id], k))
                }
                Some(true) if !inside => {
                    out.push(EventRecord::instant(EventKind::Out, vec![obj.id], k))
                }
                _ => {}
            }
            inside_prev = Some(inside);
        }
    }
}

fn collision_events(contacts: &[ContactSample], out: &mut Vec<EventRecord>) {
    let mut last_seen: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for c in contacts {
        let key = (c.a.min(c.b), c.a.max(c.b));
        let new_episode = match last_seen.get(&key) {
            Some(&prev) => c.frame > prev + 1,
            None => true,
        };
        if new_episode {
            out.push(EventRecord::instant(
                EventKind::Collision,
                vec![key.0, key.1],
                c.frame,
            ));
        }
        last_seen.insert(key, c.frame);
    }
}

fn charge_events(record: &SceneRecord, cfg: &PhysicsConfig, out: &mut Vec<EventRecord>) {
    let objs = &record.objects;
    for i in 0..objs.len() {
        for j in i + 1..objs.len() {
            let qq = objs[i].charge.value() * objs[j].charge.value();
            if qq == 0.0 {
                continue;
            }
            let kind = if qq > 0.0 {
                EventKind::Repulsion
            } else {
                EventKind::Attraction
            };
            let (a, b) = (objs[i].id.min(objs[j].id), objs[i].id.max(objs[j].id));
            let mut start: Option<usize> = None;
            for (k, frame) in record.frames.iter().enumerate() {
                let near = (frame[i].position - frame[j].position).norm() <= cfg.interaction_range;
                match (near, start) {
                    (true, None) => start = Some(k),
                    (false, Some(s)) => {
                        out.push(EventRecord::interval(kind, a, b, s, k - 1));
                        start = None;
                    }
                    _ => {}
                }
            }
            if let Some(s) = start {
                out.push(EventRecord::interval(kind, a, b, s, record.last_frame()));
            }
        }
    }
}

/// Contact log reconstructed from sampled positions: a pair is in contact at a
/// frame when the discs overlap or lie within `tolerance` of touching. Used for
/// trajectories that were predicted rather than simulated.
pub fn proximity_contacts(record: &SceneRecord, tolerance: f64) -> Vec<ContactSample> {
    let mut out = Vec::new();
    for (k, frame) in record.frames.iter().enumerate() {
        for i in 0..frame.len() {
            for j in i + 1..frame.len() {
                let d = (frame[i].position - frame[j].position).norm();
                if d <= frame[i].radius + frame[j].radius + tolerance {
                    let (a, b) = (record.objects[i].id, record.objects[j].id);
                    out.push(ContactSample {
                        frame: k,
                        a: a.min(b),
                        b: a.max(b),
                    });
                }
            }
        }
    }
    out
}
