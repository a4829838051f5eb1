//! Property learner: message passing over whole-video trajectories that
//! predicts a mass class per object and a relative-charge class per pair.
//!
//! ```text
//! v0_i     = f_emb(x_i)
//! e^l_ij   = f_rel^l(v^l_i, v^l_j)              l = 0, 1
//! v^{l+1}_i = f_enc^l(sum_{j != i} e^l_ji)
//! mass_i   = f_v_pred(v2_i)        charge_ij = f_e_pred(e1_ij)
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::{Mlp, MlpCache, ParamSet};
use super::GnnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PplConfig {
    pub hidden: usize,
    /// Frames per trajectory after resampling.
    pub frames: usize,
}

impl Default for PplConfig {
    fn default() -> Self {
        PplConfig {
            hidden: 64,
            frames: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ppl {
    pub config: PplConfig,
    pub params: ParamSet,
    emb: Mlp,
    rel: [Mlp; 2],
    enc: [Mlp; 2],
    v_pred: Mlp,
    e_pred: Mlp,
}

/// Logits for every object and every ordered pair `(i, j)`, `i != j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PplOutput {
    pub mass: Vec<Vec<f64>>,
    pub pairs: Vec<(usize, usize)>,
    pub charge: Vec<Vec<f64>>,
}

pub struct PplCache {
    emb: Vec<MlpCache>,
    rel: [Vec<MlpCache>; 2],
    enc: [Vec<MlpCache>; 2],
    v_pred: Vec<MlpCache>,
    e_pred: Vec<MlpCache>,
    pairs: Vec<(usize, usize)>,
    n: usize,
}

fn ordered_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect()
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

impl Ppl {
    pub fn new(config: PplConfig, rng: &mut impl Rng) -> Ppl {
        let h = config.hidden;
        let mut ps = ParamSet::default();
        let emb = Mlp::new(&mut ps, "f_emb", &[2 * config.frames, h, h], rng);
        let rel = [
            Mlp::new(&mut ps, "f_rel0", &[2 * h, h, h], rng),
            Mlp::new(&mut ps, "f_rel1", &[2 * h, h, h], rng),
        ];
        let enc = [
            Mlp::new(&mut ps, "f_enc0", &[h, h, h], rng),
            Mlp::new(&mut ps, "f_enc1", &[h, h, h], rng),
        ];
        let v_pred = Mlp::new(&mut ps, "f_v_pred", &[h, h, 2], rng);
        let e_pred = Mlp::new(&mut ps, "f_e_pred", &[h, h, 3], rng);
        Ppl {
            config,
            params: ps,
            emb,
            rel,
            enc,
            v_pred,
            e_pred,
        }
    }

    /// Rebuilds a model around stored parameters, checking their layout.
    pub fn from_params(config: PplConfig, params: ParamSet) -> Result<Ppl, GnnError> {
        let mut m = Ppl::new(config, &mut rand::rngs::mock::StepRng::new(0, 0));
        if !m.params.same_layout(&params) {
            return Err(GnnError::Layout("property learner".into()));
        }
        m.params = params;
        Ok(m)
    }

    /// Zeroes both prediction heads.
    pub fn zero_heads(&mut self) {
        self.v_pred.zero_output(&mut self.params);
        self.e_pred.zero_output(&mut self.params);
    }

    pub fn forward(&self, xs: &[Vec<f64>]) -> Result<(PplOutput, PplCache), GnnError> {
        let want = 2 * self.config.frames;
        if let Some(x) = xs.iter().find(|x| x.len() != want) {
            return Err(GnnError::Input(format!(
                "trajectory of length {} (expected {want})",
                x.len()
            )));
        }
        let ps = &self.params;
        let n = xs.len();
        let pairs = ordered_pairs(n);
        let mut cache = PplCache {
            emb: Vec::new(),
            rel: [Vec::new(), Vec::new()],
            enc: [Vec::new(), Vec::new()],
            v_pred: Vec::new(),
            e_pred: Vec::new(),
            pairs: pairs.clone(),
            n,
        };
        let mut v: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| {
                let (y, c) = self.emb.forward(ps, x);
                cache.emb.push(c);
                y
            })
            .collect();
        let mut e = Vec::new();
        for l in 0..2 {
            e = pairs
                .iter()
                .map(|&(i, j)| {
                    let (y, c) = self.rel[l].forward(ps, &concat(&v[i], &v[j]));
                    cache.rel[l].push(c);
                    y
                })
                .collect::<Vec<_>>();
            let h = self.config.hidden;
            let mut agg = vec![vec![0.0; h]; n];
            for (k, &(_, j)) in pairs.iter().enumerate() {
                agg[j].iter_mut().zip(&e[k]).for_each(|(a, b)| *a += b);
            }
            v = agg
                .iter()
                .map(|a| {
                    let (y, c) = self.enc[l].forward(ps, a);
                    cache.enc[l].push(c);
                    y
                })
                .collect();
        }
        let mass = v
            .iter()
            .map(|vi| {
                let (y, c) = self.v_pred.forward(ps, vi);
                cache.v_pred.push(c);
                y
            })
            .collect();
        let charge = e
            .iter()
            .map(|ek| {
                let (y, c) = self.e_pred.forward(ps, ek);
                cache.e_pred.push(c);
                y
            })
            .collect();
        Ok((
            PplOutput {
                mass,
                pairs,
                charge,
            },
            cache,
        ))
    }

    /// Accumulates parameter gradients for the given logit gradients.
    pub fn backward(
        &self,
        cache: &PplCache,
        d_mass: &[Vec<f64>],
        d_charge: &[Vec<f64>],
        grads: &mut ParamSet,
    ) {
        let ps = &self.params;
        let h = self.config.hidden;
        let n = cache.n;
        let mut dv: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                self.v_pred
                    .backward(ps, &cache.v_pred[i], &d_mass[i], grads)
            })
            .collect();
        let mut de: Vec<Vec<f64>> = (0..cache.pairs.len())
            .map(|k| {
                self.e_pred
                    .backward(ps, &cache.e_pred[k], &d_charge[k], grads)
            })
            .collect();
        for l in (0..2).rev() {
            let dagg: Vec<Vec<f64>> = (0..n)
                .map(|i| self.enc[l].backward(ps, &cache.enc[l][i], &dv[i], grads))
                .collect();
            if l == 0 {
                de = vec![vec![0.0; h]; cache.pairs.len()];
            }
            for (k, &(_, j)) in cache.pairs.iter().enumerate() {
                de[k].iter_mut().zip(&dagg[j]).for_each(|(a, b)| *a += b);
            }
            dv = vec![vec![0.0; h]; n];
            for (k, &(i, j)) in cache.pairs.iter().enumerate() {
                let dcat = self.rel[l].backward(ps, &cache.rel[l][k], &de[k], grads);
                dv[i].iter_mut().zip(&dcat[..h]).for_each(|(a, b)| *a += b);
                dv[j].iter_mut().zip(&dcat[h..]).for_each(|(a, b)| *a += b);
            }
        }
        for i in 0..n {
            self.emb.backward(ps, &cache.emb[i], &dv[i], grads);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> (Ppl, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = Ppl::new(
            PplConfig {
                hidden: 8,
                frames: 4,
            },
            &mut rng,
        );
        let xs = (0..3)
            .map(|_| (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        (m, xs)
    }

    #[test]
    fn zero_heads_give_uniform_logits() {
        let (mut m, xs) = small();
        m.zero_heads();
        let (out, _) = m.forward(&xs[..2]).unwrap();
        assert!(out
            .mass
            .iter()
            .flatten()
            .chain(out.charge.iter().flatten())
            .all(|x| *x == 0.0));
    }

    #[test]
    fn node_outputs_are_permutation_equivariant() {
        let (m, xs) = small();
        let (out, _) = m.forward(&xs).unwrap();
        let perm = [2, 0, 1];
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&p| xs[p].clone()).collect();
        let (pout, _) = m.forward(&permuted).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            for (a, b) in pout.mass[new].iter().zip(&out.mass[old]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        for (k, &(i, j)) in pout.pairs.iter().enumerate() {
            let ok = out
                .pairs
                .iter()
                .position(|&p| p == (perm[i], perm[j]))
                .unwrap();
            for (a, b) in pout.charge[k].iter().zip(&out.charge[ok]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn duplicated_trajectories_share_logits() {
        let (m, xs) = small();
        let (out, _) = m.forward(&[xs[0].clone(), xs[0].clone()]).unwrap();
        assert_eq!(out.mass[0], out.mass[1]);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let (m, _) = small();
        assert!(matches!(
            m.forward(&[vec![0.0; 3]]),
            Err(GnnError::Input(_))
        ));
    }
}
