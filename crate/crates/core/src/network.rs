//! Symmetric correction function `eps(v_gs, v_gd)`.
//!
//! Biases are first mapped through `T(v_gs, v_gd) = (v_gs + v_gd, (v_gs - v_gd)^2)`,
//! which is invariant under a source/drain swap, and then through a tanh MLP
//! with an affine output. Directional derivatives with respect to terminal
//! voltages are propagated forward: the tangent of `T` goes through the same
//! weights with zero biases, each tanh replaced by multiplication with
//! `1 - tanh(z)^2` taken from the primal pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::core_model::{ids_core, ids_core_directional, BiasPoint, Direction};
use crate::error::{Error, Result};
use crate::model::TrainedModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformedInput {
    /// `v_gs + v_gd`, V.
    pub u: f64,
    /// `v_ds^2`, V^2.
    pub v: f64,
}

pub fn transform_t(bias: &BiasPoint) -> TransformedInput {
    let d = bias.v_gs - bias.v_gd;
    TransformedInput {
        u: bias.v_gs + bias.v_gd,
        v: d * d,
    }
}

/// Jacobian of [`transform_t`] applied to `dir`, returned as `(du, dv)`.
pub fn transform_t_pushforward(bias: &BiasPoint, dir: Direction) -> (f64, f64) {
    let du = dir.d_vgs + dir.d_vgd;
    let dv = 2.0 * (bias.v_gs - bias.v_gd) * (dir.d_vgs - dir.d_vgd);
    (du, dv)
}

/// Fully connected tanh network with two inputs and one affine output.
///
/// `weights[l]` is row-major with shape `layer_sizes[l + 1] x layer_sizes[l]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpRecord", into = "MlpRecord")]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct MlpRecord {
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl TryFrom<MlpRecord> for Mlp {
    type Error = Error;

    fn try_from(r: MlpRecord) -> Result<Self> {
        Mlp::from_parts(r.layer_sizes, r.weights, r.biases)
    }
}

impl From<Mlp> for MlpRecord {
    fn from(m: Mlp) -> Self {
        MlpRecord {
            layer_sizes: m.layer_sizes,
            weights: m.weights,
            biases: m.biases,
        }
    }
}

fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::Shape("need at least input and output layers".into()));
    }
    if layer_sizes[0] != 2 {
        return Err(Error::Shape(format!("input width must be 2, got {}", layer_sizes[0])));
    }
    if *layer_sizes.last().unwrap() != 1 {
        return Err(Error::Shape(format!(
            "output width must be 1, got {}",
            layer_sizes.last().unwrap()
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::Shape("layer sizes must be positive".into()));
    }
    Ok(())
}

impl Mlp {
    pub fn from_parts(layer_sizes: Vec<usize>, weights: Vec<Vec<f64>>, biases: Vec<Vec<f64>>) -> Result<Self> {
        check_sizes(&layer_sizes)?;
        let n_layers = layer_sizes.len() - 1;
        if weights.len() != n_layers || biases.len() != n_layers {
            return Err(Error::Shape(format!(
                "expected {n_layers} weight and bias arrays, got {} and {}",
                weights.len(),
                biases.len()
            )));
        }
        for l in 0..n_layers {
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            if weights[l].len() != fan_in * fan_out {
                return Err(Error::Shape(format!(
                    "layer {l}: weight array has {} entries, expected {}",
                    weights[l].len(),
                    fan_in * fan_out
                )));
            }
            if biases[l].len() != fan_out {
                return Err(Error::Shape(format!(
                    "layer {l}: bias array has {} entries, expected {fan_out}",
                    biases[l].len()
                )));
            }
        }
        if weights.iter().chain(biases.iter()).flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("network parameter"));
        }
        Ok(Mlp {
            layer_sizes,
            weights,
            biases,
        })
    }

    /// All weights zero, output bias one: `eps == 1` everywhere.
    pub fn identity(layer_sizes: &[usize]) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let n_layers = layer_sizes.len() - 1;
        let weights = (0..n_layers)
            .map(|l| vec![0.0; layer_sizes[l] * layer_sizes[l + 1]])
            .collect();
        let mut biases: Vec<Vec<f64>> = (0..n_layers).map(|l| vec![0.0; layer_sizes[l + 1]]).collect();
        biases[n_layers - 1][0] = 1.0;
        Ok(Mlp {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.weights[layer]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.biases[layer]
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Flattened parameters: for each layer, its row-major weights then its biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "parameter vector has {} entries, network has {}",
                params.len(),
                self.num_params()
            )));
        }
        let mut rest = params;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let (head, tail) = rest.split_at(w.len());
            w.copy_from_slice(head);
            let (head, tail) = tail.split_at(b.len());
            b.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .flatten()
            .all(|x| x.is_finite())
    }
}

/// Pre-activations and activations of every hidden layer from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: [f64; 2],
    /// `z[l]` for hidden layer `l`.
    pub pre: Vec<Vec<f64>>,
    /// `tanh(z[l])`.
    pub act: Vec<Vec<f64>>,
}

#[inline]
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut Vec<f64>) {
    let n_in = x.len();
    out.clear();
    out.extend(b.iter().enumerate().map(|(i, bi)| {
        let row = &w[i * n_in..(i + 1) * n_in];
        row.iter().zip(x).fold(*bi, |acc, (wij, xj)| acc + wij * xj)
    }));
}

#[inline]
fn linear(w: &[f64], x: &[f64], n_out: usize, out: &mut Vec<f64>) {
    let n_in = x.len();
    out.clear();
    out.extend((0..n_out).map(|i| {
        let row = &w[i * n_in..(i + 1) * n_in];
        row.iter().zip(x).fold(0.0, |acc, (wij, xj)| acc + wij * xj)
    }));
}

/// Forward pass. Returns `eps` and the cache needed by
/// [`mlp_directional_derivative`].
pub fn mlp_forward(x: TransformedInput, net: &Mlp) -> (f64, ForwardCache) {
    let n_hidden = net.n_layers() - 1;
    let mut pre = Vec::with_capacity(n_hidden);
    let mut act: Vec<Vec<f64>> = Vec::with_capacity(n_hidden);
    let input = [x.u, x.v];
    for l in 0..n_hidden {
        let prev: &[f64] = if l == 0 { &input } else { &act[l - 1] };
        let mut z = Vec::with_capacity(net.layer_sizes[l + 1]);
        affine(&net.weights[l], &net.biases[l], prev, &mut z);
        let a: Vec<f64> = z.iter().map(|v| v.tanh()).collect();
        pre.push(z);
        act.push(a);
    }
    let last = net.n_layers() - 1;
    let prev: &[f64] = if n_hidden == 0 { &input } else { &act[n_hidden - 1] };
    let mut out = Vec::with_capacity(1);
    affine(&net.weights[last], &net.biases[last], prev, &mut out);
    (out[0], ForwardCache { input, pre, act })
}

/// Derivative of `eps` along an input-space tangent `(du, dv)`, using the
/// hidden-layer state recorded in `cache`.
pub fn mlp_directional_derivative(cache: &ForwardCache, dir: (f64, f64), net: &Mlp) -> Result<f64> {
    let n_hidden = net.n_layers() - 1;
    if cache.act.len() != n_hidden
        || cache
            .act
            .iter()
            .enumerate()
            .any(|(l, a)| a.len() != net.layer_sizes[l + 1])
    {
        return Err(Error::Shape("forward cache does not match network".into()));
    }
    let mut d = vec![dir.0, dir.1];
    let mut next = Vec::new();
    for l in 0..n_hidden {
        linear(&net.weights[l], &d, net.layer_sizes[l + 1], &mut next);
        for (dn, a) in next.iter_mut().zip(&cache.act[l]) {
            *dn *= 1.0 - a * a;
        }
        std::mem::swap(&mut d, &mut next);
    }
    let last = net.n_layers() - 1;
    linear(&net.weights[last], &d, 1, &mut next);
    Ok(next[0])
}

/// `eps` at a bias point. Bit-identical under source/drain swap.
pub fn eps_predict(bias: &BiasPoint, net: &Mlp) -> f64 {
    mlp_forward(transform_t(bias), net).0
}

/// Derivatives of `eps` with respect to each terminal voltage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsGrad {
    pub d_vg: f64,
    pub d_vd: f64,
    pub d_vs: f64,
}

pub fn eps_grad(bias: &BiasPoint, net: &Mlp) -> EpsGrad {
    let (_, cache) = mlp_forward(transform_t(bias), net);
    let along = |dir| {
        mlp_directional_derivative(&cache, transform_t_pushforward(bias, dir), net)
            .expect("cache produced by the same network")
    };
    EpsGrad {
        d_vg: along(Direction::GATE),
        d_vd: along(Direction::DRAIN),
        d_vs: along(Direction::SOURCE),
    }
}

/// `eps` and its derivative along an arbitrary bias direction.
pub fn eps_with_directional(bias: &BiasPoint, dir: Direction, net: &Mlp) -> (f64, f64) {
    let (eps, cache) = mlp_forward(transform_t(bias), net);
    let d = mlp_directional_derivative(&cache, transform_t_pushforward(bias, dir), net)
        .expect("cache produced by the same network");
    (eps, d)
}

/// Current and small-signal conductances of the full model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Operating {
    pub i_ds: f64,
    /// dI/dV_G, A/V.
    pub g_m: f64,
    /// dI/dV_D, A/V.
    pub g_ds: f64,
}

/// `I = I_core * eps` with `g_m` and `g_ds` by the product rule.
pub fn ids_full(bias: &BiasPoint, model: &TrainedModel) -> Operating {
    let core = &model.core;
    let net = &model.network;
    let (eps, cache) = mlp_forward(transform_t(bias), net);
    let i_core = ids_core(bias, core);
    let deriv = |dir: Direction| {
        let d_eps = mlp_directional_derivative(&cache, transform_t_pushforward(bias, dir), net)
            .expect("cache produced by the same network");
        ids_core_directional(bias, dir, core) * eps + i_core * d_eps
    };
    Operating {
        i_ds: i_core * eps,
        g_m: deriv(Direction::GATE),
        g_ds: deriv(Direction::DRAIN),
    }
}

/// Current and its derivative along `dir`.
pub fn ids_directional(bias: &BiasPoint, dir: Direction, model: &TrainedModel) -> (f64, f64) {
    let (eps, d_eps) = eps_with_directional(bias, dir, &model.network);
    let i_core = ids_core(bias, &model.core);
    (
        i_core * eps,
        ids_core_directional(bias, dir, &model.core) * eps + i_core * d_eps,
    )
}

/// Glorot-uniform weights, zero hidden biases, output bias 1.
pub fn init_weights(layer_sizes: &[usize], seed: u64) -> Result<Mlp> {
    check_sizes(layer_sizes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_layers = layer_sizes.len() - 1;
    let mut weights = Vec::with_capacity(n_layers);
    let mut biases = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        weights.push((0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)).collect());
        biases.push(vec![0.0; fan_out]);
    }
    biases[n_layers - 1][0] = 1.0;
    Ok(Mlp {
        layer_sizes: layer_sizes.to_vec(),
        weights,
        biases,
    })
}
