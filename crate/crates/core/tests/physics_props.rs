use proptest::prelude::*;

use comphy::geom::Vec2;
use comphy::model::{BodyState, Charge, Color, Mass, Material, ObjectSpec, SceneKind, Shape};
use comphy::physics::{simulate, total_momentum, InitialConditions, PhysicsConfig};

fn disc(id: usize, mass: Mass, charge: Charge) -> ObjectSpec {
    ObjectSpec {
        id,
        color: Color::ALL[id % Color::ALL.len()],
        shape: Shape::Sphere,
        material: Material::Rubber,
        mass,
        charge,
    }
}

fn state(x: f64, y: f64, vx: f64, vy: f64) -> BodyState {
    BodyState::new(Vec2::new(x, y), Vec2::new(vx, vy), Shape::Sphere.radius())
}

/// Point-charge pair integrated with classical RK4 at a fine step.
fn rk4_pair(
    objects: &[ObjectSpec],
    init: &[BodyState],
    t_end: f64,
    h: f64,
    k: f64,
    samples: &[f64],
) -> Vec<[Vec2; 2]> {
    let qq = objects[0].charge.value() * objects[1].charge.value();
    let m = [objects[0].mass.value(), objects[1].mass.value()];
    type S = [Vec2; 4];
    let deriv = |s: &S| -> S {
        let d = s[0] - s[1];
        let r = d.norm();
        let f = d * (k * qq / (r * r * r));
        [s[2], s[3], f * (1.0 / m[0]), f * (-1.0 / m[1])]
    };
    let add = |a: &S, b: &S, c: f64| -> S { std::array::from_fn(|i| a[i] + b[i] * c) };
    let mut s: S = [
        init[0].position,
        init[1].position,
        init[0].velocity,
        init[1].velocity,
    ];
    let mut t = 0.0;
    let mut out = Vec::new();
    let mut next = 0;
    while next < samples.len() && t <= t_end + 1e-12 {
        if (t - samples[next]).abs() < h / 2.0 {
            out.push([s[0], s[1]]);
            next += 1;
        }
        let k1 = deriv(&s);
        let k2 = deriv(&add(&s, &k1, h / 2.0));
        let k3 = deriv(&add(&s, &k2, h / 2.0));
        let k4 = deriv(&add(&s, &k3, h));
        s = std::array::from_fn(|i| s[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0));
        t += h;
    }
    out
}

fn compare_with_rk4(objects: Vec<ObjectSpec>, init: Vec<BodyState>, tol: f64) {
    let cfg = PhysicsConfig::default();
    let rec = simulate(
        &InitialConditions::new(objects.clone(), init.clone()),
        1.0,
        SceneKind::Target,
        &cfg,
    )
    .unwrap();
    assert!(rec.contacts.is_empty());
    let times: Vec<f64> = (0..rec.frames.len())
        .map(|f| f as f64 / cfg.record_fps as f64)
        .collect();
    let oracle = rk4_pair(&objects, &init, 1.0, 1e-5, cfg.k_coulomb, &times);
    assert_eq!(oracle.len(), rec.frames.len());
    for (f, want) in oracle.iter().enumerate() {
        for i in 0..2 {
            let err = (rec.frames[f][i].position - want[i]).norm();
            assert!(err < tol, "frame {f} body {i}: error {err}");
        }
    }
}

#[test]
fn attracting_pair_follows_the_fine_step_oracle() {
    let objects = vec![
        disc(0, Mass::Light, Charge::Positive),
        disc(1, Mass::Heavy, Charge::Negative),
    ];
    let init = vec![state(-1.5, 0.0, 0.0, 1.2), state(1.5, 0.0, 0.0, -0.24)];
    compare_with_rk4(objects, init, 5e-3);
}

#[test]
fn repelling_pair_follows_the_fine_step_oracle() {
    let objects = vec![
        disc(0, Mass::Light, Charge::Positive),
        disc(1, Mass::Light, Charge::Positive),
    ];
    let init = vec![state(-1.2, 0.1, 0.8, 0.0), state(1.2, -0.1, -0.8, 0.0)];
    compare_with_rk4(objects, init, 5e-3);
}

#[test]
fn mirrored_scene_gives_mirrored_trajectories() {
    let cfg = PhysicsConfig::default();
    let objects = vec![
        disc(0, Mass::Light, Charge::Positive),
        disc(1, Mass::Heavy, Charge::Negative),
        disc(2, Mass::Light, Charge::Neutral),
    ];
    let init = vec![
        state(-2.0, 1.0, 1.5, -0.5),
        state(1.0, 0.5, -0.7, 0.2),
        state(0.5, -2.5, 0.3, 2.0),
    ];
    let mirror = |s: &BodyState| {
        BodyState::new(
            Vec2::new(-s.position.x(), s.position.y()),
            Vec2::new(-s.velocity.x(), s.velocity.y()),
            s.radius,
        )
    };
    let a = simulate(
        &InitialConditions::new(objects.clone(), init.clone()),
        5.0,
        SceneKind::Target,
        &cfg,
    )
    .unwrap();
    let b = simulate(
        &InitialConditions::new(objects, init.iter().map(mirror).collect()),
        5.0,
        SceneKind::Target,
        &cfg,
    )
    .unwrap();
    for (fa, fb) in a.frames.iter().zip(&b.frames) {
        for (sa, sb) in fa.iter().zip(fb) {
            assert!((mirror(sa).position - sb.position).norm() < 1e-9);
        }
    }
    assert_eq!(a.events, b.events);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn isolated_collisions_conserve_momentum(
        heavy in any::<bool>(),
        offset in -0.5f64..0.5,
        va in 0.5f64..2.5,
        vb in -2.5f64..-0.5,
    ) {
        let cfg = PhysicsConfig::default();
        let objects = vec![
            disc(0, if heavy { Mass::Heavy } else { Mass::Light }, Charge::Neutral),
            disc(1, Mass::Light, Charge::Neutral),
        ];
        let init = vec![state(-1.0, offset, va, 0.0), state(1.0, 0.0, vb, 0.0)];
        let rec = simulate(&InitialConditions::new(objects.clone(), init.clone()), 0.8, SceneKind::Target, &cfg).unwrap();
        let drift = (total_momentum(&objects, &rec.end_state) - total_momentum(&objects, &init)).norm();
        prop_assert!(drift < 1e-9, "drift {}", drift);
    }

    #[test]
    fn simulation_is_deterministic(seed_x in -3.0f64..3.0, vy in -2.0f64..2.0) {
        let cfg = PhysicsConfig::default();
        let objects = vec![disc(0, Mass::Light, Charge::Positive), disc(1, Mass::Light, Charge::Negative)];
        let init = InitialConditions::new(objects, vec![state(seed_x, -3.0, 0.0, vy), state(0.0, 3.0, 1.0, 0.0)]);
        let a = simulate(&init, 2.0, SceneKind::Target, &cfg).unwrap();
        let b = simulate(&init, 2.0, SceneKind::Target, &cfg).unwrap();
        prop_assert_eq!(a, b);
    }
}
