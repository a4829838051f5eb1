//! Charge-gated dynamics predictor and autoregressive rollout.
//!
//! Each object is a window of its last three frames, `(x, y, w, h, m)` per
//! frame. The newest frame carries the absolute position; older frames carry
//! their offset from it, scaled by [`DISPLACEMENT_SCALE`] so that per-frame
//! motion is of order one rather than a small difference of large numbers. For every ordered pair exactly one of three gates (same, opposite,
//! none) is active:
//!
//! ```text
//! h0_ij  = g_emb^k(o0_i, o0_j)
//! o1_j   = o0_j + g_rel^0(sum_i h0_ij)
//! h1_ij  = g_enc^k([o1_i, o0_i], [o1_j, o0_j])
//! o2_j   = o1_j + g_rel^1(sum_i h1_ij)
//! out_j  = g_pred(o2_j)
//! ```
//!
//! The output is the change of `(x, y, w, h)` to the next frame, in the same
//! scaled units as the offsets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::{Mlp, MlpCache, ParamSet};
use super::GnnError;
use crate::geom::Vec2;
use crate::model::{Mass, RelCharge};

pub const WINDOW: usize = 3;
pub const FRAME_FEATURES: usize = 5;
pub const OBJECT_DIM: usize = WINDOW * FRAME_FEATURES;
pub const OUTPUT_DIM: usize = 4;
/// Multiplier applied to arena-normalized displacements.
pub const DISPLACEMENT_SCALE: f64 = 20.0;

/// Gate index of a relative-charge label.
pub fn gate_index(r: RelCharge) -> usize {
    match r {
        RelCharge::Same => 0,
        RelCharge::Opposite => 1,
        RelCharge::Neither => 2,
    }
}

pub fn one_hot(r: RelCharge) -> [f64; 3] {
    let mut z = [0.0; 3];
    z[gate_index(r)] = 1.0;
    z
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DynConfig {
    pub hidden: usize,
}

impl Default for DynConfig {
    fn default() -> Self {
        DynConfig { hidden: 64 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dynamics {
    pub config: DynConfig,
    pub params: ParamSet,
    emb: [Mlp; 3],
    rel: [Mlp; 2],
    enc: [Mlp; 3],
    pred: Mlp,
}

pub struct DynCache {
    pairs: Vec<(usize, usize, usize)>,
    emb: Vec<MlpCache>,
    rel: [Vec<MlpCache>; 2],
    enc: Vec<MlpCache>,
    pred: Vec<MlpCache>,
    n: usize,
}

/// Checks that `z[i][j]` is one-hot for every `i != j` and returns the active gates.
fn gates(z: &[Vec<[f64; 3]>]) -> Result<Vec<(usize, usize, usize)>, GnnError> {
    let n = z.len();
    let mut out = Vec::new();
    for (i, row) in z.iter().enumerate() {
        if row.len() != n {
            return Err(GnnError::Input(format!(
                "gate row {i} has {} entries for {n} objects",
                row.len()
            )));
        }
        for (j, g) in row.iter().enumerate() {
            if i == j {
                continue;
            }
            let ones = g.iter().filter(|x| **x == 1.0).count();
            let zeros = g.iter().filter(|x| **x == 0.0).count();
            if ones != 1 || zeros != 2 {
                return Err(GnnError::Input(format!(
                    "gate ({i}, {j}) = {g:?} is not one-hot"
                )));
            }
            out.push((i, j, g.iter().position(|x| *x == 1.0).unwrap()));
        }
    }
    Ok(out)
}

impl Dynamics {
    pub fn new(config: DynConfig, rng: &mut impl Rng) -> Dynamics {
        let h = config.hidden;
        let d = OBJECT_DIM;
        let mut ps = ParamSet::default();
        let emb = ["same", "opposite", "none"]
            .map(|k| Mlp::new(&mut ps, &format!("g_emb.{k}"), &[2 * d, h, h], rng));
        let rel = [
            Mlp::new(&mut ps, "g_rel0", &[h, h, d], rng),
            Mlp::new(&mut ps, "g_rel1", &[h, h, d], rng),
        ];
        let enc = ["same", "opposite", "none"]
            .map(|k| Mlp::new(&mut ps, &format!("g_enc.{k}"), &[4 * d, h, h], rng));
        let pred = Mlp::new(&mut ps, "g_pred", &[d, OUTPUT_DIM], rng);
        pred.zero_output(&mut ps);
        Dynamics {
            config,
            params: ps,
            emb,
            rel,
            enc,
            pred,
        }
    }

    pub fn from_params(config: DynConfig, params: ParamSet) -> Result<Dynamics, GnnError> {
        let mut m = Dynamics::new(config, &mut rand::rngs::mock::StepRng::new(0, 0));
        if !m.params.same_layout(&params) {
            return Err(GnnError::Layout("dynamics predictor".into()));
        }
        m.params = params;
        Ok(m)
    }

    /// Zeroes the relation maps so no messages reach the nodes.
    pub fn zero_relations(&mut self) {
        for r in &self.rel {
            r.zero_output(&mut self.params);
        }
    }

    pub fn forward(
        &self,
        o0: &[Vec<f64>],
        z: &[Vec<[f64; 3]>],
    ) -> Result<(Vec<Vec<f64>>, DynCache), GnnError> {
        if z.len() != o0.len() {
            return Err(GnnError::Input(format!(
                "{} gate rows for {} objects",
                z.len(),
                o0.len()
            )));
        }
        if let Some(o) = o0.iter().find(|o| o.len() != OBJECT_DIM) {
            return Err(GnnError::Input(format!(
                "object features of length {} (expected {OBJECT_DIM})",
                o.len()
            )));
        }
        let pairs = gates(z)?;
        let ps = &self.params;
        let n = o0.len();
        let h = self.config.hidden;
        let mut cache = DynCache {
            pairs: pairs.clone(),
            emb: Vec::new(),
            rel: [Vec::new(), Vec::new()],
            enc: Vec::new(),
            pred: Vec::new(),
            n,
        };

        let mut agg = vec![vec![0.0; h]; n];
        for &(i, j, k) in &pairs {
            let (m, c) = self.emb[k].forward(ps, &[o0[i].as_slice(), o0[j].as_slice()].concat());
            cache.emb.push(c);
            agg[j].iter_mut().zip(&m).for_each(|(a, b)| *a += b);
        }
        let o1: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                let (d, c) = self.rel[0].forward(ps, &agg[j]);
                cache.rel[0].push(c);
                o0[j].iter().zip(&d).map(|(a, b)| a + b).collect()
            })
            .collect();

        let mut agg = vec![vec![0.0; h]; n];
        for &(i, j, k) in &pairs {
            let input = [
                o1[i].as_slice(),
                o0[i].as_slice(),
                o1[j].as_slice(),
                o0[j].as_slice(),
            ]
            .concat();
            let (m, c) = self.enc[k].forward(ps, &input);
            cache.enc.push(c);
            agg[j].iter_mut().zip(&m).for_each(|(a, b)| *a += b);
        }
        let o2: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                let (d, c) = self.rel[1].forward(ps, &agg[j]);
                cache.rel[1].push(c);
                o1[j].iter().zip(&d).map(|(a, b)| a + b).collect()
            })
            .collect();

        let out = o2
            .iter()
            .map(|o| {
                let (y, c) = self.pred.forward(ps, o);
                cache.pred.push(c);
                y
            })
            .collect();
        Ok((out, cache))
    }

    /// Accumulates parameter gradients for output gradient `d_out`.
    pub fn backward(&self, cache: &DynCache, d_out: &[Vec<f64>], grads: &mut ParamSet) {
        let ps = &self.params;
        let d = OBJECT_DIM;
        let n = cache.n;
        let mut do2: Vec<Vec<f64>> = (0..n)
            .map(|j| self.pred.backward(ps, &cache.pred[j], &d_out[j], grads))
            .collect();

        // o2 = o1 + rel1(agg1)
        let dagg1: Vec<Vec<f64>> = (0..n)
            .map(|j| self.rel[1].backward(ps, &cache.rel[1][j], &do2[j], grads))
            .collect();
        let mut do1 = std::mem::take(&mut do2);
        let mut do0 = vec![vec![0.0; d]; n];
        for (p, &(i, j, k)) in cache.pairs.iter().enumerate() {
            let g = self.enc[k].backward(ps, &cache.enc[p], &dagg1[j], grads);
            let add = |t: &mut Vec<f64>, s: &[f64]| t.iter_mut().zip(s).for_each(|(a, b)| *a += b);
            add(&mut do1[i], &g[..d]);
            add(&mut do0[i], &g[d..2 * d]);
            add(&mut do1[j], &g[2 * d..3 * d]);
            add(&mut do0[j], &g[3 * d..]);
        }

        // o1 = o0 + rel0(agg0)
        let dagg0: Vec<Vec<f64>> = (0..n)
            .map(|j| self.rel[0].backward(ps, &cache.rel[0][j], &do1[j], grads))
            .collect();
        for (p, &(_, j, k)) in cache.pairs.iter().enumerate() {
            self.emb[k].backward(ps, &cache.emb[p], &dagg0[j], grads);
        }
    }
}

/// Normalized per-frame features of one object.
pub fn frame_features(
    position: Vec2,
    radius: f64,
    mass: Mass,
    arena_half_extent: f64,
) -> [f64; FRAME_FEATURES] {
    let s = 1.0 / arena_half_extent;
    [
        position.x() * s,
        position.y() * s,
        radius * s,
        radius * s,
        if mass == Mass::Heavy { 1.0 } else { 0.0 },
    ]
}

/// Window features of every object from the last [`WINDOW`] frames of `history`
/// (`history[t][i]` is object `i` at frame `t`).
pub fn window_features(
    history: &[Vec<Vec2>],
    radii: &[f64],
    masses: &[Mass],
    arena_half_extent: f64,
) -> Vec<Vec<f64>> {
    let window = &history[history.len() - WINDOW..];
    let newest = &window[WINDOW - 1];
    let k = DISPLACEMENT_SCALE / arena_half_extent;
    (0..radii.len())
        .map(|i| {
            window
                .iter()
                .enumerate()
                .flat_map(|(t, frame)| {
                    let mut f = frame_features(frame[i], radii[i], masses[i], arena_half_extent);
                    if t + 1 < WINDOW {
                        let d = frame[i] - newest[i];
                        f[0] = d.x() * k;
                        f[1] = d.y() * k;
                    }
                    f
                })
                .collect()
        })
        .collect()
}

/// Scaled displacement target for a move of `d`.
pub fn displacement_target(d: Vec2, arena_half_extent: f64) -> Vec<f64> {
    let k = DISPLACEMENT_SCALE / arena_half_extent;
    vec![d.x() * k, d.y() * k, 0.0, 0.0]
}

/// Gate matrix from pairwise relative charges.
pub fn gate_matrix(n: usize, relation: impl Fn(usize, usize) -> RelCharge) -> Vec<Vec<[f64; 3]>> {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        [0.0; 3]
                    } else {
                        one_hot(relation(i, j))
                    }
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("rollout diverged at step {step}")]
pub struct RolloutError {
    pub step: usize,
}

/// Predicts `n_steps` further frames of positions from the first [`WINDOW`]
/// frames of `history`, feeding each prediction back in.
pub fn rollout(
    model: &Dynamics,
    history: &[Vec<Vec2>],
    radii: &[f64],
    masses: &[Mass],
    z: &[Vec<[f64; 3]>],
    n_steps: usize,
    arena_half_extent: f64,
) -> Result<Vec<Vec<Vec2>>, GnnError> {
    if history.len() < WINDOW {
        return Err(GnnError::Input(format!(
            "rollout needs {WINDOW} frames, got {}",
            history.len()
        )));
    }
    let mut frames: Vec<Vec<Vec2>> = history[..WINDOW].to_vec();
    for step in 0..n_steps {
        let o0 = window_features(&frames, radii, masses, arena_half_extent);
        let (out, _) = model.forward(&o0, z)?;
        let last = frames.last().unwrap();
        let next: Vec<Vec2> = last
            .iter()
            .zip(&out)
            .map(|(p, d)| *p + Vec2::new(d[0], d[1]) * (arena_half_extent / DISPLACEMENT_SCALE))
            .collect();
        if next
            .iter()
            .any(|p| !(p.x().is_finite() && p.y().is_finite()))
        {
            return Err(RolloutError { step }.into());
        }
        frames.push(next);
    }
    Ok(frames.split_off(WINDOW))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> Dynamics {
        Dynamics::new(DynConfig { hidden: 8 }, &mut ChaCha8Rng::seed_from_u64(2))
    }

    fn inputs(n: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        (0..n)
            .map(|_| (0..OBJECT_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn non_one_hot_gates_are_rejected() {
        let m = model();
        let mut z = gate_matrix(2, |_, _| RelCharge::Neither);
        z[0][1] = [0.5, 0.5, 0.0];
        assert!(matches!(m.forward(&inputs(2), &z), Err(GnnError::Input(_))));
    }

    #[test]
    fn zero_relations_isolate_objects() {
        let mut m = model();
        m.zero_relations();
        let o = inputs(3);
        let z = gate_matrix(3, |_, _| RelCharge::Neither);
        let (together, _) = m.forward(&o, &z).unwrap();
        for i in 0..3 {
            let (alone, _) = m
                .forward(&o[i..i + 1], &gate_matrix(1, |_, _| RelCharge::Neither))
                .unwrap();
            assert_eq!(alone[0], together[i]);
        }
    }

    #[test]
    fn unused_gates_do_not_matter() {
        let mut m = model();
        let o = inputs(3);
        let z = gate_matrix(3, |_, _| RelCharge::Neither);
        let (a, _) = m.forward(&o, &z).unwrap();
        // scramble the same/opposite branches
        for b in &mut m.params.blocks {
            if b.name.contains("same") || b.name.contains("opposite") {
                b.data.iter_mut().for_each(|x| *x = -*x * 3.0);
            }
        }
        let (b, _) = m.forward(&o, &z).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn window_ignores_older_frames() {
        let h: Vec<Vec<Vec2>> = (0..3)
            .map(|t| {
                vec![
                    Vec2::new(t as f64 * 0.1, 0.0),
                    Vec2::new(1.0, t as f64 * 0.1),
                ]
            })
            .collect();
        let mut longer = vec![vec![Vec2::new(9.0, 9.0); 2]];
        longer.extend(h.clone());
        let masses = [Mass::Light, Mass::Heavy];
        assert_eq!(
            window_features(&h, &[0.3, 0.3], &masses, 5.0),
            window_features(&longer, &[0.3, 0.3], &masses, 5.0)
        );
        let m = model();
        let z = gate_matrix(2, |_, _| RelCharge::Opposite);
        let a = rollout(&m, &h, &[0.3, 0.3], &masses, &z, 5, 5.0).unwrap();
        assert_eq!(a.len(), 5);
    }
}
