//! Gradient-augmented cost, its exact weight gradient, Adam, and the
//! full-batch training loop.
//!
//! The cost penalizes the mismatch of `eps` and of its gate and drain
//! derivatives:
//!
//! ```text
//! J = 1/m * sum( (eps - eps')^2 + eta_G (eps_G - eps'_G)^2 + eta_D (eps_D - eps'_D)^2 )
//! ```
//!
//! The derivative terms come out of the forward tangent pass, so their weight
//! gradient runs backward through that pass as well. Besides the usual
//! `W^T` products this picks up the dependence of each `1 - tanh(z)^2`
//! factor on `z`, i.e. the second derivative of tanh.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::core_model::{CoreParams, Direction};
use crate::dataset::CorrectionSample;
use crate::error::{Error, Result};
use crate::model::TrainedModel;
use crate::network::{
    init_weights, mlp_directional_derivative, mlp_forward, transform_t, transform_t_pushforward, Mlp,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub eta_g: f64,
    pub eta_d: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon_hat: f64,
    pub max_epochs: usize,
    /// Training stops once the cost is at or below this value.
    pub target_cost: f64,
    pub seed: u64,
    pub layer_sizes: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            eta_g: 0.5,
            eta_d: 1e-3,
            learning_rate: 3e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon_hat: 1e-8,
            max_epochs: 20_000,
            target_cost: 1e-5,
            seed: 0,
            layer_sizes: vec![2, 10, 20, 1],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.eta_g >= 0.0 && self.eta_d >= 0.0) {
            return bad(format!("etas must be >= 0, got ({}, {})", self.eta_g, self.eta_d));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad(format!(
                "Adam betas must lie in [0, 1), got ({}, {})",
                self.beta1, self.beta2
            ));
        }
        if !(self.epsilon_hat > 0.0) {
            return bad("epsilon_hat must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    /// Cost at the start of each epoch, before that epoch's update.
    pub history: Vec<f64>,
    /// Cost of the returned network.
    pub final_cost: f64,
    pub epochs: usize,
    pub wall_time: Duration,
}

impl TrainReport {
    /// `epoch,cost` rows for plotting.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,cost\n");
        for (k, c) in self.history.iter().enumerate() {
            s.push_str(&format!("{},{:.16e}\n", k + 1, c));
        }
        s
    }
}

/// Cost evaluated sample by sample through the public network routines.
pub fn loss_j(samples: &[CorrectionSample], net: &Mlp, cfg: &TrainConfig) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut acc = 0.0;
    for s in samples {
        let (eps, cache) = mlp_forward(transform_t(&s.bias), net);
        let d_g = mlp_directional_derivative(&cache, transform_t_pushforward(&s.bias, Direction::GATE), net)?;
        let d_d = mlp_directional_derivative(&cache, transform_t_pushforward(&s.bias, Direction::DRAIN), net)?;
        let r0 = eps - s.eps;
        let rg = d_g - s.d_eps_dvg;
        let rd = d_d - s.d_eps_dvd;
        acc += r0 * r0 + cfg.eta_g * rg * rg + cfg.eta_d * rd * rd;
    }
    Ok(acc / samples.len() as f64)
}

/// Cost and its gradient with respect to [`Mlp::params`].
pub fn loss_grad(samples: &[CorrectionSample], net: &Mlp, cfg: &TrainConfig) -> Result<(f64, Vec<f64>)> {
    let batch = Batch::new(samples)?;
    let mut ws = Workspace::new(net, batch.len());
    let mut grad = vec![0.0; net.num_params()];
    let cost = ws.cost_and_grad(&batch, net, cfg, &mut grad);
    Ok((cost, grad))
}

/// Samples per cache tile; keeps every per-layer buffer of a tile in L2.
const CHUNK: usize = 256;

/// One tile of training rows laid out column-wise.
struct Chunk {
    /// `[u..., v...]`
    input: Vec<f64>,
    /// Gate tangent of `T`: `[2..., 0...]`
    tan_g: Vec<f64>,
    /// Drain tangent of `T`: `[-1..., 2 v_ds...]`
    tan_d: Vec<f64>,
    eps: Vec<f64>,
    d_g: Vec<f64>,
    d_d: Vec<f64>,
}

impl Chunk {
    fn new(samples: &[CorrectionSample]) -> Self {
        let m = samples.len();
        let mut input = vec![0.0; 2 * m];
        let mut tan_g = vec![0.0; 2 * m];
        let mut tan_d = vec![0.0; 2 * m];
        for (k, s) in samples.iter().enumerate() {
            let t = transform_t(&s.bias);
            input[k] = t.u;
            input[m + k] = t.v;
            let (gu, gv) = transform_t_pushforward(&s.bias, Direction::GATE);
            tan_g[k] = gu;
            tan_g[m + k] = gv;
            let (du, dv) = transform_t_pushforward(&s.bias, Direction::DRAIN);
            tan_d[k] = du;
            tan_d[m + k] = dv;
        }
        Chunk {
            input,
            tan_g,
            tan_d,
            eps: samples.iter().map(|s| s.eps).collect(),
            d_g: samples.iter().map(|s| s.d_eps_dvg).collect(),
            d_d: samples.iter().map(|s| s.d_eps_dvd).collect(),
        }
    }

    fn len(&self) -> usize {
        self.eps.len()
    }
}

/// Training rows, tiled for the batched gradient.
pub struct Batch {
    chunks: Vec<Chunk>,
    len: usize,
}

impl Batch {
    pub fn new(samples: &[CorrectionSample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("training set"));
        }
        if samples
            .iter()
            .any(|s| !(s.bias.is_finite() && s.eps.is_finite() && s.d_eps_dvg.is_finite() && s.d_eps_dvd.is_finite()))
        {
            return Err(Error::NonFinite("training sample"));
        }
        Ok(Batch {
            chunks: samples.chunks(CHUNK).map(Chunk::new).collect(),
            len: samples.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Per-layer buffers for one tile, neuron-major (`[neuron * m + sample]`).
struct Workspace {
    act: Vec<Vec<f64>>,
    slope: Vec<Vec<f64>>,
    z_g: Vec<Vec<f64>>,
    z_d: Vec<Vec<f64>>,
    a_g: Vec<Vec<f64>>,
    a_d: Vec<Vec<f64>>,
    // Adjoints of the current layer's activations and tangents, then of the
    // layer below.
    bar: [Vec<f64>; 3],
    bar_prev: [Vec<f64>; 3],
    seed: [Vec<f64>; 3],
    w_t: Vec<f64>,
    zeros: Vec<f64>,
}

const LANES: usize = 8;

/// `out[i][k] = init[i] + sum_j w[i][j] * inp[j][k]` with column stride `m`;
/// terms are added in `j` order.
fn gemm_rows(w: &[f64], n_in: usize, init: &[f64], inp: &[f64], out: &mut [f64], m: usize) {
    for (i, &c0) in init.iter().enumerate() {
        let wi = &w[i * n_in..(i + 1) * n_in];
        let row = &mut out[i * m..(i + 1) * m];
        let mut k = 0;
        while k + LANES <= m {
            let mut acc = [c0; LANES];
            for (j, &wij) in wi.iter().enumerate() {
                let col: &[f64; LANES] = inp[j * m + k..j * m + k + LANES].try_into().unwrap();
                for q in 0..LANES {
                    acc[q] += wij * col[q];
                }
            }
            row[k..k + LANES].copy_from_slice(&acc);
            k += LANES;
        }
        for (kk, r) in row.iter_mut().enumerate().skip(k) {
            let mut acc = c0;
            for (j, &wij) in wi.iter().enumerate() {
                acc += wij * inp[j * m + kk];
            }
            *r = acc;
        }
    }
}

/// `g[i * n_b + j] += sum_k a[i][k] * b[j][k]` with column stride `m`.
fn gemm_nt_acc(a: &[f64], n_a: usize, b: &[f64], n_b: usize, m: usize, g: &mut [f64]) {
    const JB: usize = 4;
    for i in 0..n_a {
        let ai = &a[i * m..(i + 1) * m];
        let mut j0 = 0;
        while j0 < n_b {
            let jn = JB.min(n_b - j0);
            let mut acc = [[0.0; LANES]; JB];
            let mut k = 0;
            while k + LANES <= m {
                let x: &[f64; LANES] = ai[k..k + LANES].try_into().unwrap();
                for (jj, accj) in acc.iter_mut().enumerate().take(jn) {
                    let off = (j0 + jj) * m + k;
                    let y: &[f64; LANES] = b[off..off + LANES].try_into().unwrap();
                    for q in 0..LANES {
                        accj[q] += x[q] * y[q];
                    }
                }
                k += LANES;
            }
            for (jj, accj) in acc.iter().enumerate().take(jn) {
                let bj = &b[(j0 + jj) * m..(j0 + jj + 1) * m];
                let mut tail = 0.0;
                for kk in k..m {
                    tail += ai[kk] * bj[kk];
                }
                let lanes = ((accj[0] + accj[1]) + (accj[2] + accj[3])) + ((accj[4] + accj[5]) + (accj[6] + accj[7]));
                g[i * n_b + j0 + jj] += lanes + tail;
            }
            j0 += jn;
        }
    }
}

impl Workspace {
    fn new(net: &Mlp, batch_len: usize) -> Self {
        let m = batch_len.min(CHUNK);
        let sizes = net.layer_sizes();
        let hidden = &sizes[1..sizes.len() - 1];
        let buf = || hidden.iter().map(|n| vec![0.0; n * m]).collect::<Vec<_>>();
        let widest = hidden.iter().copied().max().unwrap_or(0).max(2) * m;
        Workspace {
            act: buf(),
            slope: buf(),
            z_g: buf(),
            z_d: buf(),
            a_g: buf(),
            a_d: buf(),
            bar: [vec![0.0; widest], vec![0.0; widest], vec![0.0; widest]],
            bar_prev: [vec![0.0; widest], vec![0.0; widest], vec![0.0; widest]],
            seed: [vec![0.0; m], vec![0.0; m], vec![0.0; m]],
            w_t: vec![0.0; sizes.windows(2).map(|w| w[0] * w[1]).max().unwrap_or(0)],
            zeros: vec![0.0; sizes.iter().copied().max().unwrap_or(0)],
        }
    }

    /// Writes the gradient into `grad` (overwritten) and returns the cost.
    fn cost_and_grad(&mut self, batch: &Batch, net: &Mlp, cfg: &TrainConfig, grad: &mut [f64]) -> f64 {
        grad.fill(0.0);
        let inv_m = 1.0 / batch.len() as f64;
        let mut cost = 0.0;
        for chunk in &batch.chunks {
            cost += self.accumulate(chunk, net, cfg, inv_m, grad);
        }
        cost
    }

    /// Adds one tile's share of the gradient to `grad`; returns its share of
    /// the cost.
    fn accumulate(&mut self, batch: &Chunk, net: &Mlp, cfg: &TrainConfig, inv_m: f64, grad: &mut [f64]) -> f64 {
        let m = batch.len();
        let n_layers = net.n_layers();
        let n_hidden = n_layers - 1;
        let sizes = net.layer_sizes();

        // Forward: primal and both tangents.
        for l in 0..n_hidden {
            let n_in = sizes[l];
            let n_out = sizes[l + 1];
            let w = net.weights(l);
            let b = net.biases(l);
            let mut z = std::mem::take(&mut self.act[l]);
            let mut zg = std::mem::take(&mut self.z_g[l]);
            let mut zd = std::mem::take(&mut self.z_d[l]);
            let mut s = std::mem::take(&mut self.slope[l]);
            let mut ag = std::mem::take(&mut self.a_g[l]);
            let mut ad = std::mem::take(&mut self.a_d[l]);
            let (inp, inp_g, inp_d): (&[f64], &[f64], &[f64]) = if l == 0 {
                (&batch.input, &batch.tan_g, &batch.tan_d)
            } else {
                (&self.act[l - 1], &self.a_g[l - 1], &self.a_d[l - 1])
            };
            let zeros = &self.zeros[..n_out];
            gemm_rows(w, n_in, b, &inp[..n_in * m], &mut z, m);
            gemm_rows(w, n_in, zeros, &inp_g[..n_in * m], &mut zg, m);
            gemm_rows(w, n_in, zeros, &inp_d[..n_in * m], &mut zd, m);
            for k in 0..n_out * m {
                let a = z[k].tanh();
                let sk = 1.0 - a * a;
                z[k] = a;
                s[k] = sk;
                ag[k] = sk * zg[k];
                ad[k] = sk * zd[k];
            }
            self.act[l] = z;
            self.z_g[l] = zg;
            self.z_d[l] = zd;
            self.slope[l] = s;
            self.a_g[l] = ag;
            self.a_d[l] = ad;
        }

        // Output layer and residual seeds.
        let last = n_layers - 1;
        let n_top = sizes[last];
        let w_out = net.weights(last);
        let b_out = net.biases(last)[0];
        let (top, top_g, top_d): (&[f64], &[f64], &[f64]) = if n_hidden == 0 {
            (&batch.input, &batch.tan_g, &batch.tan_d)
        } else {
            (
                &self.act[n_hidden - 1],
                &self.a_g[n_hidden - 1],
                &self.a_d[n_hidden - 1],
            )
        };
        let [e0, eg, ed] = &mut self.seed;
        let (e0, eg, ed) = (&mut e0[..m], &mut eg[..m], &mut ed[..m]);
        gemm_rows(w_out, n_top, &[b_out], &top[..n_top * m], e0, m);
        gemm_rows(w_out, n_top, &[0.0], &top_g[..n_top * m], eg, m);
        gemm_rows(w_out, n_top, &[0.0], &top_d[..n_top * m], ed, m);
        let mut cost = 0.0;
        for k in 0..m {
            let r0 = e0[k] - batch.eps[k];
            let rg = eg[k] - batch.d_g[k];
            let rd = ed[k] - batch.d_d[k];
            cost += r0 * r0 + cfg.eta_g * rg * rg + cfg.eta_d * rd * rd;
            e0[k] = 2.0 * r0 * inv_m;
            eg[k] = 2.0 * cfg.eta_g * rg * inv_m;
            ed[k] = 2.0 * cfg.eta_d * rd * inv_m;
        }
        cost *= inv_m;

        // Parameter offsets in the flattened vector.
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += sizes[l] * sizes[l + 1] + sizes[l + 1];
        }

        // Output layer gradient.
        let o = offsets[last];
        gemm_nt_acc(e0, 1, &top[..n_top * m], n_top, m, &mut grad[o..o + n_top]);
        gemm_nt_acc(eg, 1, &top_g[..n_top * m], n_top, m, &mut grad[o..o + n_top]);
        gemm_nt_acc(ed, 1, &top_d[..n_top * m], n_top, m, &mut grad[o..o + n_top]);
        grad[o + n_top] += e0.iter().sum::<f64>();

        if n_hidden == 0 {
            return cost;
        }

        // Adjoints of the top hidden layer's activation and tangents.
        for (j, &w) in w_out.iter().enumerate().take(n_top) {
            let col = j * m..(j + 1) * m;
            for (slot, seed) in self.bar.iter_mut().zip(self.seed.iter()) {
                for (x, e) in slot[col.clone()].iter_mut().zip(&seed[..m]) {
                    *x = w * e;
                }
            }
        }

        for l in (0..n_hidden).rev() {
            let n_in = sizes[l];
            let n_out = sizes[l + 1];
            let len = n_out * m;
            {
                let [ba, bg, bd] = &mut self.bar;
                let (a, s, zg, zd) = (&self.act[l], &self.slope[l], &self.z_g[l], &self.z_d[l]);
                for k in 0..len {
                    let sbar = bg[k] * zg[k] + bd[k] * zd[k];
                    let abar = ba[k] - 2.0 * a[k] * sbar;
                    ba[k] = s[k] * abar;
                    bg[k] *= s[k];
                    bd[k] *= s[k];
                }
            }
            let (inp, inp_g, inp_d): (&[f64], &[f64], &[f64]) = if l == 0 {
                (&batch.input, &batch.tan_g, &batch.tan_d)
            } else {
                (&self.act[l - 1], &self.a_g[l - 1], &self.a_d[l - 1])
            };
            let w = net.weights(l);
            let o = offsets[l];
            let [zbar, zgbar, zdbar] = &self.bar;
            let gw = &mut grad[o..o + n_out * n_in];
            gemm_nt_acc(&zbar[..len], n_out, &inp[..n_in * m], n_in, m, gw);
            gemm_nt_acc(&zgbar[..len], n_out, &inp_g[..n_in * m], n_in, m, gw);
            gemm_nt_acc(&zdbar[..len], n_out, &inp_d[..n_in * m], n_in, m, gw);
            for i in 0..n_out {
                grad[o + n_out * n_in + i] += zbar[i * m..(i + 1) * m].iter().sum::<f64>();
            }
            if l == 0 {
                break;
            }
            let wt = &mut self.w_t[..n_in * n_out];
            for i in 0..n_out {
                for j in 0..n_in {
                    wt[j * n_out + i] = w[i * n_in + j];
                }
            }
            for (prev, cur) in self.bar_prev.iter_mut().zip(self.bar.iter()) {
                gemm_rows(wt, n_out, &self.zeros[..n_in], &cur[..len], &mut prev[..n_in * m], m);
            }
            std::mem::swap(&mut self.bar, &mut self.bar_prev);
        }
        cost
    }
}

/// Adam moment estimates.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], state: &mut AdamState, grads: &[f64], cfg: &TrainConfig) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() {
        return Err(Error::Shape(format!(
            "adam: {} params, {} grads, state for {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for k in 0..params.len() {
        let g = grads[k];
        state.m[k] = b1 * state.m[k] + (1.0 - b1) * g;
        state.v[k] = b2 * state.v[k] + (1.0 - b2) * g * g;
        let m_hat = state.m[k] / c1;
        let v_hat = state.v[k] / c2;
        params[k] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon_hat);
    }
    Ok(())
}

/// Full-batch Adam starting from `net`.
pub fn train_network(mut net: Mlp, dataset: &[CorrectionSample], cfg: &TrainConfig) -> Result<(Mlp, TrainReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let batch = Batch::new(dataset)?;
    let mut ws = Workspace::new(&net, batch.len());
    let mut params = net.params();
    let mut grad = vec![0.0; params.len()];
    let mut adam = AdamState::new(params.len());
    let mut history = Vec::with_capacity(cfg.max_epochs);

    let mut final_cost = None;
    for epoch in 0..cfg.max_epochs {
        let cost = ws.cost_and_grad(&batch, &net, cfg, &mut grad);
        if !cost.is_finite() {
            return Err(Error::Diverged { epoch, cost });
        }
        history.push(cost);
        if cost <= cfg.target_cost {
            final_cost = Some(cost);
            break;
        }
        adam_step(&mut params, &mut adam, &grad, cfg)?;
        net.set_params(&params)?;
        if epoch % 1000 == 0 {
            log::info!("epoch {epoch}: cost {cost:.6e}");
        }
    }
    let final_cost = match final_cost {
        Some(c) => c,
        None => {
            let c = ws.cost_and_grad(&batch, &net, cfg, &mut grad);
            if !c.is_finite() {
                return Err(Error::Diverged {
                    epoch: history.len(),
                    cost: c,
                });
            }
            c
        }
    };

    let rises = (500..history.len().saturating_sub(100))
        .step_by(100)
        .filter(|&k| history[k + 100] > history[k])
        .count();
    if rises > 0 {
        log::warn!("cost rose over {rises} 100-epoch windows after epoch 500");
    }

    let report = TrainReport {
        epochs: history.len(),
        history,
        final_cost,
        wall_time: start.elapsed(),
    };
    Ok((net, report))
}

/// Trains a freshly initialized network and packages it with `core`.
pub fn train(dataset: &[CorrectionSample], core: CoreParams, cfg: &TrainConfig) -> Result<(TrainedModel, TrainReport)> {
    cfg.validate()?;
    let net = init_weights(&cfg.layer_sizes, cfg.seed)?;
    let (net, report) = train_network(net, dataset, cfg)?;
    let mut model = TrainedModel::new(core, net);
    model.metadata.seed = cfg.seed;
    model.metadata.epochs = report.epochs;
    model.metadata.final_cost = Some(report.final_cost);
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core_model::BiasPoint;
    use crate::network::eps_grad;

    fn samples_from(net: &Mlp, n: usize) -> Vec<CorrectionSample> {
        (0..n)
            .map(|k| {
                let b = BiasPoint::new(0.07 * k as f64 % 0.7, (0.13 * k as f64 + 0.05) % 0.7);
                let g = eps_grad(&b, net);
                CorrectionSample {
                    bias: b,
                    eps: crate::network::eps_predict(&b, net),
                    d_eps_dvg: g.d_vg,
                    d_eps_dvd: g.d_vd,
                }
            })
            .collect()
    }

    fn single_neuron() -> Mlp {
        Mlp::from_parts(
            vec![2, 1, 1],
            vec![vec![0.8, -1.3], vec![1.7]],
            vec![vec![0.2], vec![0.4]],
        )
        .unwrap()
    }

    #[test]
    fn perfect_fit_has_zero_cost_and_gradient() {
        let net = init_weights(&[2, 4, 3, 1], 7).unwrap();
        let s = samples_from(&net, 25);
        let cfg = TrainConfig::default();
        assert!(loss_j(&s, &net, &cfg).unwrap() < 1e-28);
        let (c, g) = loss_grad(&s, &net, &cfg).unwrap();
        assert!(c < 1e-28);
        assert!(g.iter().map(|x| x * x).sum::<f64>().sqrt() < 1e-12);
    }

    #[test]
    fn hand_computed_single_sample() {
        let net = single_neuron();
        let b = BiasPoint::new(0.6, 0.3);
        let (u, v, vds) = (0.9, 0.09, 0.3);
        let t = (0.8 * u - 1.3 * v + 0.2f64).tanh();
        let eps = 1.7 * t + 0.4;
        let sl = 1.0 - t * t;
        // gate tangent (2, 0), drain tangent (-1, 2 v_ds)
        let d_g = 1.7 * sl * (0.8 * 2.0);
        let d_d = 1.7 * sl * (-0.8 - 1.3 * 2.0 * vds);
        let target = CorrectionSample {
            bias: b,
            eps: 1.0,
            d_eps_dvg: 0.5,
            d_eps_dvd: -0.25,
        };
        let cfg = TrainConfig::default();
        let expected = (eps - 1.0f64).powi(2) + 0.5 * (d_g - 0.5f64).powi(2) + 1e-3 * (d_d + 0.25f64).powi(2);
        let got = loss_j(&[target], &net, &cfg).unwrap();
        assert!((got - expected).abs() < 1e-14, "{got} vs {expected}");
        let (batched, _) = loss_grad(&[target], &net, &cfg).unwrap();
        assert!((batched - expected).abs() < 1e-14);
    }

    #[test]
    fn zero_etas_reduce_to_mse() {
        let net = init_weights(&[2, 3, 1], 1).unwrap();
        let mut s = samples_from(&net, 10);
        for x in &mut s {
            x.eps += 0.1;
            x.d_eps_dvg += 5.0;
            x.d_eps_dvd -= 3.0;
        }
        let cfg = TrainConfig {
            eta_g: 0.0,
            eta_d: 0.0,
            ..TrainConfig::default()
        };
        assert!((loss_j(&s, &net, &cfg).unwrap() - 0.01).abs() < 1e-12);
    }

    #[test]
    fn empty_set_is_an_error() {
        let net = init_weights(&[2, 3, 1], 1).unwrap();
        assert!(loss_j(&[], &net, &TrainConfig::default()).is_err());
        assert!(loss_grad(&[], &net, &TrainConfig::default()).is_err());
    }

    fn fd_check(sizes: &[usize], seed: u64, cfg: &TrainConfig) -> f64 {
        let teacher = init_weights(sizes, seed + 1000).unwrap();
        let mut s = samples_from(&teacher, 10);
        for (k, x) in s.iter_mut().enumerate() {
            x.eps += 0.05 * (k as f64).sin();
            x.d_eps_dvg += 0.3 * (k as f64).cos();
            x.d_eps_dvd += 0.2;
        }
        let net = init_weights(sizes, seed).unwrap();
        let (_, g) = loss_grad(&s, &net, cfg).unwrap();
        let p0 = net.params();
        let h = 1e-6;
        let mut worst = 0.0f64;
        for k in 0..p0.len() {
            let mut probe = net.clone();
            let mut p = p0.clone();
            p[k] += h;
            probe.set_params(&p).unwrap();
            let jp = loss_j(&s, &probe, cfg).unwrap();
            p[k] -= 2.0 * h;
            probe.set_params(&p).unwrap();
            let jm = loss_j(&s, &probe, cfg).unwrap();
            let fd = (jp - jm) / (2.0 * h);
            let err = (g[k] - fd).abs() / fd.abs().max(g[k].abs()).max(1e-8);
            worst = worst.max(err);
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let e = fd_check(&[2, 3, 2, 1], seed, &TrainConfig::default());
            assert!(e < 1e-4, "seed {seed}: {e}");
        }
        let e = fd_check(
            &[2, 4, 1],
            3,
            &TrainConfig {
                eta_d: 0.7,
                ..TrainConfig::default()
            },
        );
        assert!(e < 1e-4);
        let e = fd_check(&[2, 1], 3, &TrainConfig::default());
        assert!(e < 1e-4);
    }

    #[test]
    fn eta_d_term_drops_out() {
        let net = init_weights(&[2, 3, 2, 1], 2).unwrap();
        let mut s = samples_from(&net, 8);
        for x in &mut s {
            x.d_eps_dvd += 1.0;
        }
        let cfg = TrainConfig {
            eta_d: 0.0,
            ..TrainConfig::default()
        };
        let (c, g) = loss_grad(&s, &net, &cfg).unwrap();
        assert!(c < 1e-28);
        assert!(g.iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn adam_first_step_is_sign_times_lr() {
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let mut p = vec![1.0, -2.0, 0.5];
        let g = vec![0.3, -4.0, 1e-3];
        let mut st = AdamState::new(3);
        adam_step(&mut p, &mut st, &g, &cfg).unwrap();
        let expect = [1.0 - 1e-2, -2.0 + 1e-2, 0.5 - 1e-2];
        for (a, b) in p.iter().zip(expect) {
            assert!(((a - b) / 1e-2).abs() < 1e-4, "{a} vs {b}");
        }
        assert!(((p[0] - 1.0) + 1e-2).abs() <= 1e-6 * 1e-2);
    }

    #[test]
    fn adam_zero_gradient_is_stationary() {
        let cfg = TrainConfig::default();
        let mut p = vec![0.25, -0.5];
        let mut st = AdamState::new(2);
        for _ in 0..100 {
            adam_step(&mut p, &mut st, &[0.0, 0.0], &cfg).unwrap();
        }
        assert_eq!(p, vec![0.25, -0.5]);
        assert!(adam_step(&mut p, &mut st, &[0.0], &cfg).is_err());
    }

    #[test]
    fn adam_converges_on_quadratic_bowl() {
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let center = [0.7, -1.3];
        let mut p = vec![3.0, 2.0];
        let mut st = AdamState::new(2);
        for _ in 0..5000 {
            let g = [2.0 * (p[0] - center[0]), 8.0 * (p[1] - center[1])];
            adam_step(&mut p, &mut st, &g, &cfg).unwrap();
        }
        let dist = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt();
        assert!(dist < 1e-6, "{dist}");
    }

    #[test]
    fn zero_epochs_returns_initial_net() {
        let teacher = init_weights(&[2, 3, 1], 4).unwrap();
        let s = samples_from(&teacher, 10);
        let cfg = TrainConfig {
            max_epochs: 0,
            layer_sizes: vec![2, 3, 1],
            seed: 9,
            ..TrainConfig::default()
        };
        let core = CoreParams::new(1e-4, 0.05, 0.25, 2.0).unwrap();
        let (model, report) = train(&s, core, &cfg).unwrap();
        assert_eq!(model.network, init_weights(&[2, 3, 1], 9).unwrap());
        assert!(report.history.is_empty());
        assert_eq!(report.epochs, 0);
    }

    #[test]
    fn training_is_deterministic_and_stops_at_target() {
        let teacher = init_weights(&[2, 3, 1], 4).unwrap();
        let s = samples_from(&teacher, 20);
        let cfg = TrainConfig {
            max_epochs: 300,
            layer_sizes: vec![2, 3, 1],
            seed: 1,
            target_cost: 0.0,
            ..TrainConfig::default()
        };
        let core = CoreParams::new(1e-4, 0.05, 0.25, 2.0).unwrap();
        let (a, ra) = train(&s, core, &cfg).unwrap();
        let (b, _) = train(&s, core, &cfg).unwrap();
        let bits = |m: &TrainedModel| m.network.params().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(ra.history.len(), 300);
        assert!(ra.final_cost < ra.history[0]);

        let loose = TrainConfig {
            target_cost: ra.history[10],
            ..cfg
        };
        let (_, rl) = train(&s, core, &loose).unwrap();
        assert!(rl.epochs <= 11);
        assert_eq!(rl.final_cost, *rl.history.last().unwrap());
    }

    #[test]
    fn divergence_reports_epoch() {
        let teacher = init_weights(&[2, 3, 1], 4).unwrap();
        let mut s = samples_from(&teacher, 5);
        s[0].eps = 1e300;
        let cfg = TrainConfig {
            max_epochs: 10,
            layer_sizes: vec![2, 3, 1],
            ..TrainConfig::default()
        };
        let core = CoreParams::new(1e-4, 0.05, 0.25, 2.0).unwrap();
        match train(&s, core, &cfg) {
            Err(Error::Diverged { epoch, .. }) => assert_eq!(epoch, 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn report_csv_has_one_row_per_epoch() {
        let r = TrainReport {
            history: vec![1.0, 0.5],
            final_cost: 0.25,
            epochs: 2,
            wall_time: Duration::ZERO,
        };
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("epoch,cost\n1,"));
    }
}
