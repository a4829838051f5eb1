//! Minimal dense layers with hand-written reverse mode, named parameter
//! blocks and an Adam optimizer.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// One named parameter tensor, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Every trainable tensor of a model, in construction order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub blocks: Vec<Block>,
}

impl ParamSet {
    pub fn add(&mut self, name: String, shape: Vec<usize>, data: Vec<f64>) -> usize {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.blocks.push(Block { name, shape, data });
        self.blocks.len() - 1
    }

    pub fn zeros_like(&self) -> ParamSet {
        ParamSet {
            blocks: self
                .blocks
                .iter()
                .map(|b| Block {
                    name: b.name.clone(),
                    shape: b.shape.clone(),
                    data: vec![0.0; b.data.len()],
                })
                .collect(),
        }
    }

    pub fn count(&self) -> usize {
        self.blocks.iter().map(|b| b.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks
            .iter()
            .all(|b| b.data.iter().all(|x| x.is_finite()))
    }

    pub fn scale(&mut self, s: f64) {
        for b in &mut self.blocks {
            b.data.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn add_assign(&mut self, other: &ParamSet) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            a.data.iter_mut().zip(&b.data).for_each(|(x, y)| *x += y);
        }
    }

    /// Names and shapes match block for block.
    pub fn same_layout(&self, other: &ParamSet) -> bool {
        self.blocks.len() == other.blocks.len()
            && self.blocks.iter().zip(&other.blocks).all(|(a, b)| {
                a.name == b.name
                    && a.shape == b.shape
                    && b.data.len() == b.shape.iter().product::<usize>()
            })
    }
}

/// Affine map `y = W x + b` with `W` of shape `[n_out, n_in]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    w: usize,
    b: usize,
    pub n_in: usize,
    pub n_out: usize,
}

impl Linear {
    fn forward(&self, ps: &ParamSet, x: &[f64]) -> Vec<f64> {
        let w = &ps.blocks[self.w].data;
        let b = &ps.blocks[self.b].data;
        (0..self.n_out)
            .map(|o| {
                let row = &w[o * self.n_in..(o + 1) * self.n_in];
                b[o] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>()
            })
            .collect()
    }

    fn backward(&self, ps: &ParamSet, x: &[f64], dy: &[f64], grads: &mut ParamSet) -> Vec<f64> {
        let w = &ps.blocks[self.w].data;
        let mut dx = vec![0.0; self.n_in];
        {
            let gw = &mut grads.blocks[self.w].data;
            for (o, &d) in dy.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = o * self.n_in;
                for i in 0..self.n_in {
                    gw[row + i] += d * x[i];
                    dx[i] += d * w[row + i];
                }
            }
        }
        let gb = &mut grads.blocks[self.b].data;
        gb.iter_mut().zip(dy).for_each(|(g, d)| *g += d);
        dx
    }
}

/// Fully connected stack with rectifiers between layers (none after the last).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    layers: Vec<Linear>,
}

/// Per-layer inputs saved by [`Mlp::forward`].
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    inputs: Vec<Vec<f64>>,
}

impl Mlp {
    /// Registers weights for `sizes[0] -> sizes[1] -> ...` under `name`,
    /// uniform in ±sqrt(6 / fan_in) (biases zero).
    pub fn new(ps: &mut ParamSet, name: &str, sizes: &[usize], rng: &mut impl Rng) -> Mlp {
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(l, s)| {
                let (n_in, n_out) = (s[0], s[1]);
                let bound = (6.0 / n_in as f64).sqrt();
                let w = (0..n_in * n_out)
                    .map(|_| rng.gen_range(-bound..bound))
                    .collect();
                Linear {
                    w: ps.add(format!("{name}.{l}.w"), vec![n_out, n_in], w),
                    b: ps.add(format!("{name}.{l}.b"), vec![n_out], vec![0.0; n_out]),
                    n_in,
                    n_out,
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().unwrap().n_out
    }

    pub fn forward(&self, ps: &ParamSet, x: &[f64]) -> (Vec<f64>, MlpCache) {
        let mut cache = MlpCache::default();
        let mut h = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(ps, &h);
            if l + 1 < self.layers.len() {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            cache.inputs.push(h);
            h = y;
        }
        (h, cache)
    }

    /// Accumulates parameter gradients for output gradient `dy`; returns the input gradient.
    pub fn backward(
        &self,
        ps: &ParamSet,
        cache: &MlpCache,
        dy: &[f64],
        grads: &mut ParamSet,
    ) -> Vec<f64> {
        let mut d = dy.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let x = &cache.inputs[l];
            d = layer.backward(ps, x, &d, grads);
            if l > 0 {
                // x is the rectified output of the layer below
                d.iter_mut().zip(x).for_each(|(g, v)| {
                    if *v <= 0.0 {
                        *g = 0.0
                    }
                });
            }
        }
        d
    }

    /// Zeroes the last layer so the map outputs zero.
    pub fn zero_output(&self, ps: &mut ParamSet) {
        let last = self.layers.last().unwrap();
        ps.blocks[last.w].data.iter_mut().for_each(|x| *x = 0.0);
        ps.blocks[last.b].data.iter_mut().for_each(|x| *x = 0.0);
    }
}

/// Softmax cross-entropy of `logits` against class `label`, with its gradient.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let p = softmax(logits);
    let loss = -p[label].max(1e-300).ln();
    let mut g = p;
    g[label] -= 1.0;
    (loss, g)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| {
            if x > bv {
                (i, x)
            } else {
                (bi, bv)
            }
        })
        .0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: ParamSet,
    v: ParamSet,
}

impl Adam {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, g), m), v) in params
            .blocks
            .iter_mut()
            .zip(&grads.blocks)
            .zip(&mut self.m.blocks)
            .zip(&mut self.v.blocks)
        {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * gi;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * gi * gi;
                let mh = m.data[i] / c1;
                let vh = v.data[i] / c2;
                p.data[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// Compares analytic gradients with central differences on up to
/// `per_block` random coordinates of every block.
///
/// `loss` evaluates the scalar objective at the given parameters. Returns
/// the worst relative error per block; coordinates where both gradients are
/// below `1e-9` count as exact.
pub fn gradient_check(
    params: &ParamSet,
    grads: &ParamSet,
    per_block: usize,
    step: f64,
    rng: &mut impl Rng,
    mut loss: impl FnMut(&ParamSet) -> f64,
) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    let mut probe = params.clone();
    for (bi, block) in params.blocks.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for _ in 0..per_block.min(block.data.len()) {
            let i = rng.gen_range(0..block.data.len());
            let x = block.data[i];
            probe.blocks[bi].data[i] = x + step;
            let up = loss(&probe);
            probe.blocks[bi].data[i] = x - step;
            let down = loss(&probe);
            probe.blocks[bi].data[i] = x;
            let numeric = (up - down) / (2.0 * step);
            let analytic = grads.blocks[bi].data[i];
            let scale = analytic.abs().max(numeric.abs());
            if scale > 1e-9 {
                worst = worst.max((analytic - numeric).abs() / scale);
            }
        }
        out.push((block.name.clone(), worst));
    }
    out
}
