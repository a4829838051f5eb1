use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dynamics::{
    self, gate_matrix, window_features, DynConfig, Dynamics, OUTPUT_DIM, WINDOW,
};
use super::nn::{gradient_check, softmax_cross_entropy, Adam, ParamSet};
use super::ppl::{Ppl, PplConfig};
use super::{charge_class, mass_class, predict_graph, trajectory_features, GnnError};
use crate::geom::Vec2;
use crate::model::{Mass, PropertyGraph, RelCharge, SceneRecord, VideoSet};
use crate::physics::PhysicsConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub ppl: PplConfig,
    pub dynamics: DynConfig,
    /// Frames between consecutive dynamics training windows.
    pub window_stride: usize,
    /// Weight of the newest epoch in the smoothed loss curves.
    pub smoothing: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            epochs: 20,
            batch: 8,
            lr: 1e-3,
            ppl: PplConfig::default(),
            dynamics: DynConfig::default(),
            window_stride: 5,
            smoothing: 0.5,
        }
    }
}

/// One video for the property learner with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PplSample {
    pub xs: Vec<Vec<f64>>,
    pub mass: Vec<usize>,
    /// Class per ordered pair, in the learner's pair order.
    pub charge: Vec<usize>,
}

/// One dynamics window: object features, gates and the normalized step to the next frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DynSample {
    pub o0: Vec<Vec<f64>>,
    pub z: Vec<Vec<[f64; 3]>>,
    pub target: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub ppl: Vec<PplSample>,
    pub dynamics: Vec<DynSample>,
}

fn ppl_sample(record: &SceneRecord, frames: usize, physics: &PhysicsConfig) -> PplSample {
    let objs = &record.objects;
    let n = objs.len();
    PplSample {
        xs: trajectory_features(record, frames, physics.arena_half_extent),
        mass: objs.iter().map(|o| mass_class(o.mass)).collect(),
        charge: (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| charge_class(objs[i].charge.relation(objs[j].charge)))
            .collect(),
    }
}

fn dyn_samples(
    record: &SceneRecord,
    stride: usize,
    physics: &PhysicsConfig,
    out: &mut Vec<DynSample>,
) {
    let objs = &record.objects;
    let radii: Vec<f64> = objs.iter().map(|o| o.radius()).collect();
    let masses: Vec<Mass> = objs.iter().map(|o| o.mass).collect();
    let z = gate_matrix(objs.len(), |i, j| objs[i].charge.relation(objs[j].charge));
    let positions: Vec<Vec<Vec2>> = record
        .frames
        .iter()
        .map(|f| f.iter().map(|s| s.position).collect())
        .collect();
    let mut t = WINDOW - 1;
    while t + 1 < positions.len() {
        let o0 = window_features(
            &positions[t + 1 - WINDOW..=t],
            &radii,
            &masses,
            physics.arena_half_extent,
        );
        let target = (0..objs.len())
            .map(|i| {
                dynamics::displacement_target(
                    positions[t + 1][i] - positions[t][i],
                    physics.arena_half_extent,
                )
            })
            .collect();
        out.push(DynSample {
            o0,
            z: z.clone(),
            target,
        });
        t += stride.max(1);
    }
}

/// Learner samples from every observed record and dynamics windows from the
/// observed records, labeled with the generator's ground truth.
pub fn build_dataset(sets: &[VideoSet], cfg: &TrainConfig, physics: &PhysicsConfig) -> Dataset {
    let mut data = Dataset::default();
    for set in sets {
        for r in set.observed_records() {
            data.ppl.push(ppl_sample(r, cfg.ppl.frames, physics));
            dyn_samples(r, cfg.window_stride, physics, &mut data.dynamics);
        }
    }
    data
}

/// Mean node cross-entropy plus mean edge cross-entropy; accumulates
/// gradients when `grads` is given.
pub fn ppl_loss(
    model: &Ppl,
    sample: &PplSample,
    grads: Option<&mut ParamSet>,
) -> Result<f64, GnnError> {
    let (out, cache) = model.forward(&sample.xs)?;
    let n = out.mass.len().max(1) as f64;
    let m = out.charge.len().max(1) as f64;
    let mut loss = 0.0;
    let mut d_mass = Vec::new();
    for (l, &y) in out.mass.iter().zip(&sample.mass) {
        let (v, g) = softmax_cross_entropy(l, y);
        loss += v / n;
        d_mass.push(g.into_iter().map(|x| x / n).collect::<Vec<_>>());
    }
    let mut d_charge = Vec::new();
    for (l, &y) in out.charge.iter().zip(&sample.charge) {
        let (v, g) = softmax_cross_entropy(l, y);
        loss += v / m;
        d_charge.push(g.into_iter().map(|x| x / m).collect::<Vec<_>>());
    }
    if let Some(grads) = grads {
        model.backward(&cache, &d_mass, &d_charge, grads);
    }
    Ok(loss)
}

/// Mean squared error of the predicted step; accumulates gradients when `grads` is given.
pub fn dyn_loss(
    model: &Dynamics,
    sample: &DynSample,
    grads: Option<&mut ParamSet>,
) -> Result<f64, GnnError> {
    let (out, cache) = model.forward(&sample.o0, &sample.z)?;
    let scale = 1.0 / (out.len().max(1) * OUTPUT_DIM) as f64;
    let mut loss = 0.0;
    let mut d_out = Vec::with_capacity(out.len());
    for (y, t) in out.iter().zip(&sample.target) {
        let mut d = Vec::with_capacity(OUTPUT_DIM);
        for (a, b) in y.iter().zip(t) {
            loss += (a - b) * (a - b) * scale;
            d.push(2.0 * (a - b) * scale);
        }
        d_out.push(d);
    }
    if let Some(grads) = grads {
        model.backward(&cache, &d_out, grads);
    }
    Ok(loss)
}

/// Exponential moving average; `alpha` weights the newest value.
pub fn smooth(values: &[f64], alpha: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(values.len());
    for &v in values {
        let s = match out.last() {
            Some(&prev) => prev + alpha * (v - prev),
            None => v,
        };
        out.push(s);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossCurves {
    /// Mean training loss per epoch.
    pub ppl: Vec<f64>,
    pub dynamics: Vec<f64>,
    pub ppl_smoothed: Vec<f64>,
    pub dynamics_smoothed: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub ppl: Ppl,
    pub dynamics: Dynamics,
    pub curves: LossCurves,
}

fn run_epochs<M, S>(
    what: &'static str,
    model: &mut M,
    params: impl Fn(&mut M) -> &mut ParamSet,
    samples: &[S],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    loss: impl Fn(&M, &S, Option<&mut ParamSet>) -> Result<f64, GnnError>,
) -> Result<Vec<f64>, GnnError> {
    let mut opt = Adam::new(params(model), cfg.lr);
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for (batch, chunk) in order.chunks(cfg.batch.max(1)).enumerate() {
            let mut grads = params(model).zeros_like();
            let mut batch_loss = 0.0;
            for &i in chunk {
                batch_loss += loss(model, &samples[i], Some(&mut grads))?;
            }
            if !batch_loss.is_finite() || !grads.is_finite() {
                return Err(GnnError::NonFinite { what, epoch, batch });
            }
            total += batch_loss;
            grads.scale(1.0 / chunk.len() as f64);
            opt.step(params(model), &grads);
        }
        curve.push(total / samples.len() as f64);
        log::debug!("{what} epoch {epoch}: loss {:.6e}", curve[epoch]);
    }
    Ok(curve)
}

/// Minibatch Adam on both models; deterministic for a given seed.
pub fn train(
    sets: &[VideoSet],
    cfg: &TrainConfig,
    physics: &PhysicsConfig,
) -> Result<Trained, GnnError> {
    let data = build_dataset(sets, cfg, physics);
    train_on(&data, cfg)
}

pub(super) fn train_on(data: &Dataset, cfg: &TrainConfig) -> Result<Trained, GnnError> {
    if data.ppl.is_empty() || data.dynamics.is_empty() {
        return Err(GnnError::NoData(format!(
            "{} learner samples, {} dynamics windows",
            data.ppl.len(),
            data.dynamics.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ppl = Ppl::new(cfg.ppl, &mut rng);
    let mut dynm = Dynamics::new(cfg.dynamics, &mut rng);
    let ppl_curve = run_epochs(
        "property learner",
        &mut ppl,
        |m| &mut m.params,
        &data.ppl,
        cfg,
        &mut rng,
        |m, s, g| ppl_loss(m, s, g),
    )?;
    let dyn_curve = run_epochs(
        "dynamics",
        &mut dynm,
        |m| &mut m.params,
        &data.dynamics,
        cfg,
        &mut rng,
        |m, s, g| dyn_loss(m, s, g),
    )?;
    Ok(Trained {
        ppl,
        dynamics: dynm,
        curves: LossCurves {
            ppl_smoothed: smooth(&ppl_curve, cfg.smoothing),
            dynamics_smoothed: smooth(&dyn_curve, cfg.smoothing),
            ppl: ppl_curve,
            dynamics: dyn_curve,
        },
    })
}

/// Worst relative gradient error per parameter block of both models, measured
/// on the first sample of each kind.
pub fn gradient_report(
    ppl: &Ppl,
    dynm: &Dynamics,
    data: &Dataset,
    per_block: usize,
    seed: u64,
) -> Result<Vec<(String, f64)>, GnnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = 1e-6;
    let (Some(ps), Some(ds)) = (data.ppl.first(), data.dynamics.first()) else {
        return Err(GnnError::NoData(
            "gradient check needs one sample of each kind".into(),
        ));
    };
    let mut out = Vec::new();

    let mut g = ppl.params.zeros_like();
    ppl_loss(ppl, ps, Some(&mut g))?;
    let mut probe = ppl.clone();
    out.extend(gradient_check(
        &ppl.params,
        &g,
        per_block,
        step,
        &mut rng,
        |p| {
            probe.params = p.clone();
            ppl_loss(&probe, ps, None).unwrap_or(f64::NAN)
        },
    ));

    let mut g = dynm.params.zeros_like();
    dyn_loss(dynm, ds, Some(&mut g))?;
    let mut probe = dynm.clone();
    out.extend(gradient_check(
        &dynm.params,
        &g,
        per_block,
        step,
        &mut rng,
        |p| {
            probe.params = p.clone();
            dyn_loss(&probe, ds, None).unwrap_or(f64::NAN)
        },
    ));
    Ok(out)
}

/// Held-out accuracy of fused learner predictions against the generator's labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PplMetrics {
    pub mass_accuracy: f64,
    pub edge_accuracy: f64,
    pub masses: usize,
    pub edges: usize,
    /// Accuracy of always answering `light`.
    pub mass_majority_baseline: f64,
    /// Accuracy of always answering `none`.
    pub edge_majority_baseline: f64,
}

pub fn evaluate_ppl(
    model: &Ppl,
    sets: &[VideoSet],
    physics: &PhysicsConfig,
) -> Result<PplMetrics, GnnError> {
    let (mut mh, mut mt, mut ml, mut eh, mut et, mut en) = (0, 0, 0, 0, 0, 0);
    for set in sets {
        let pred = predict_graph(model, set, physics)?;
        let truth = PropertyGraph::from_roster(&set.roster);
        for (id, l) in &truth.node_mass {
            mt += 1;
            mh += (pred.mass(*id) == Some(l.label)) as usize;
            ml += (l.label == Mass::Light) as usize;
        }
        for (p, l) in &truth.edge_charge {
            et += 1;
            eh += (pred.edge(p.lo(), p.hi()) == Some(l.label)) as usize;
            en += (l.label == RelCharge::Neither) as usize;
        }
    }
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(PplMetrics {
        mass_accuracy: frac(mh, mt),
        edge_accuracy: frac(eh, et),
        masses: mt,
        edges: et,
        mass_majority_baseline: frac(ml, mt),
        edge_majority_baseline: frac(en, et),
    })
}

/// Mean one-step error of the dynamics model next to two fixed predictors:
/// `(model, stationary, constant velocity)`.
pub fn evaluate_dynamics(
    model: &Dynamics,
    sets: &[VideoSet],
    cfg: &TrainConfig,
    physics: &PhysicsConfig,
) -> Result<(f64, f64, f64), GnnError> {
    let data = build_dataset(sets, cfg, physics);
    if data.dynamics.is_empty() {
        return Err(GnnError::NoData("no dynamics windows".into()));
    }
    let f = dynamics::FRAME_FEATURES;
    let (mut m, mut still, mut cv) = (0.0, 0.0, 0.0);
    for s in &data.dynamics {
        m += dyn_loss(model, s, None)?;
        let scale = 1.0 / (s.target.len() * OUTPUT_DIM) as f64;
        for (o, t) in s.o0.iter().zip(&s.target) {
            // the previous frame is stored as its offset from the newest one
            let prev = (WINDOW - 2) * f;
            let v = [-o[prev], -o[prev + 1]];
            still += (t[0] * t[0] + t[1] * t[1]) * scale;
            cv += ((t[0] - v[0]).powi(2) + (t[1] - v[1]).powi(2)) * scale;
        }
    }
    let n = data.dynamics.len() as f64;
    Ok((m / n, still / n, cv / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene_gen::{generate_video_set, split_seeds, GenConfig};

    fn tiny() -> TrainConfig {
        TrainConfig {
            epochs: 6,
            ppl: PplConfig {
                hidden: 12,
                frames: 20,
            },
            dynamics: DynConfig { hidden: 12 },
            window_stride: 10,
            ..Default::default()
        }
    }

    fn sets(n: usize) -> Vec<VideoSet> {
        let physics = PhysicsConfig::default();
        split_seeds(77, n)
            .into_iter()
            .map(|s| generate_video_set(s, &GenConfig::default(), &physics).unwrap())
            .collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let physics = PhysicsConfig::default();
        let cfg = tiny();
        let data = build_dataset(&sets(1), &cfg, &physics);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ppl = Ppl::new(cfg.ppl, &mut rng);
        let dynm = Dynamics::new(cfg.dynamics, &mut rng);
        for (name, err) in gradient_report(&ppl, &dynm, &data, 10, 1).unwrap() {
            assert!(err < 1e-4, "{name}: {err}");
        }
    }

    #[test]
    fn training_is_deterministic_and_descends() {
        let physics = PhysicsConfig::default();
        let cfg = tiny();
        let s = sets(4);
        let a = train(&s, &cfg, &physics).unwrap();
        let b = train(&s, &cfg, &physics).unwrap();
        assert_eq!(a.curves, b.curves);
        assert_eq!(a.ppl.params, b.ppl.params);
        assert!(a.curves.ppl.last() < a.curves.ppl.first());
        assert!(a.curves.dynamics.last() < a.curves.dynamics.first());
    }

    #[test]
    fn smoothing_is_an_ema() {
        assert_eq!(smooth(&[4.0, 2.0, 2.0], 0.5), vec![4.0, 3.0, 2.5]);
    }
}
