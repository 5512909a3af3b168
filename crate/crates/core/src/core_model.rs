//! EKV core current model.
//!
//! The channel function is `phi(v) = V_SS * softplus((v - V_T) / V_SS)` and the
//! drain current is `P * (phi(v_gs)^beta - phi(v_gd)^beta)`. The current is an
//! exact difference of a source-side and a drain-side term, so it vanishes at
//! `v_gs == v_gd` and flips sign under a source/drain swap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four EKV parameters, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoreParams {
    /// Current prefactor, A/V^beta.
    #[serde(rename = "P")]
    pub p: f64,
    /// Slope voltage, V.
    #[serde(rename = "V_SS")]
    pub v_ss: f64,
    /// Threshold voltage, V.
    #[serde(rename = "V_T")]
    pub v_t: f64,
    pub beta: f64,
}

impl CoreParams {
    pub fn new(p: f64, v_ss: f64, v_t: f64, beta: f64) -> Result<Self> {
        let core = CoreParams { p, v_ss, v_t, beta };
        core.validate()?;
        Ok(core)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.p, self.v_ss, self.v_t, self.beta].iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidCore("non-finite parameter".into()));
        }
        if self.p <= 0.0 {
            return Err(Error::InvalidCore(format!("P must be > 0, got {}", self.p)));
        }
        if self.v_ss <= 0.0 {
            return Err(Error::InvalidCore(format!("V_SS must be > 0, got {}", self.v_ss)));
        }
        if self.beta <= 0.0 {
            return Err(Error::InvalidCore(format!("beta must be > 0, got {}", self.beta)));
        }
        Ok(())
    }
}

/// An operating point. `v_ds` is always derived as `v_gs - v_gd`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasPoint {
    pub v_gs: f64,
    pub v_gd: f64,
}

impl BiasPoint {
    pub fn new(v_gs: f64, v_gd: f64) -> Self {
        BiasPoint { v_gs, v_gd }
    }

    pub fn from_vgs_vds(v_gs: f64, v_ds: f64) -> Self {
        BiasPoint {
            v_gs,
            v_gd: v_gs - v_ds,
        }
    }

    #[inline]
    pub fn v_ds(&self) -> f64 {
        self.v_gs - self.v_gd
    }

    /// Source and drain exchanged.
    pub fn swapped(&self) -> Self {
        BiasPoint {
            v_gs: self.v_gd,
            v_gd: self.v_gs,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.v_gs.is_finite() && self.v_gd.is_finite()
    }
}

/// A direction in `(v_gs, v_gd)` space.
///
/// With the source as reference, moving a single terminal voltage maps onto a
/// fixed direction: the gate moves both differences, the drain moves only
/// `v_gd` (with a sign flip), the source moves only `v_gs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    pub d_vgs: f64,
    pub d_vgd: f64,
}

impl Direction {
    pub const GATE: Direction = Direction::new(1.0, 1.0);
    pub const DRAIN: Direction = Direction::new(0.0, -1.0);
    pub const SOURCE: Direction = Direction::new(-1.0, 0.0);
    /// Drain at `+v_x`, source at `-v_x`.
    pub const GUMMEL: Direction = Direction::new(1.0, -1.0);

    pub const fn new(d_vgs: f64, d_vgd: f64) -> Self {
        Direction { d_vgs, d_vgd }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IVSample {
    pub bias: BiasPoint,
    pub i_ds: f64,
}

impl IVSample {
    pub fn new(bias: BiasPoint, i_ds: f64) -> Self {
        IVSample { bias, i_ds }
    }
}

/// `ln(1 + e^x)` without overflow for large `|x|`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn phi_raw(v_gx: f64, core: &CoreParams) -> f64 {
    core.v_ss * softplus((v_gx - core.v_t) / core.v_ss)
}

#[inline]
fn phi_prime_raw(v_gx: f64, core: &CoreParams) -> f64 {
    sigmoid((v_gx - core.v_t) / core.v_ss)
}

/// Channel function `phi(v_gx)`, volts.
pub fn phi(v_gx: f64, core: &CoreParams) -> Result<f64> {
    if !v_gx.is_finite() {
        return Err(Error::NonFinite("phi: v_gx"));
    }
    Ok(phi_raw(v_gx, core))
}

/// `d phi / d v_gx`, the logistic sigmoid of the normalized overdrive.
pub fn phi_prime(v_gx: f64, core: &CoreParams) -> Result<f64> {
    if !v_gx.is_finite() {
        return Err(Error::NonFinite("phi_prime: v_gx"));
    }
    Ok(phi_prime_raw(v_gx, core))
}

#[inline]
fn powb(x: f64, beta: f64) -> f64 {
    if beta == 2.0 {
        x * x
    } else {
        x.powf(beta)
    }
}

/// Core drain current. Non-finite biases propagate as NaN.
#[inline]
pub fn ids_core(bias: &BiasPoint, core: &CoreParams) -> f64 {
    let s = powb(phi_raw(bias.v_gs, core), core.beta);
    let d = powb(phi_raw(bias.v_gd, core), core.beta);
    core.p * (s - d)
}

/// Derivative of [`ids_core`] along `dir`, A/V.
#[inline]
pub fn ids_core_directional(bias: &BiasPoint, dir: Direction, core: &CoreParams) -> f64 {
    let b = core.beta;
    let side = |v: f64| powb_minus_one(phi_raw(v, core), b) * phi_prime_raw(v, core);
    core.p * b * (side(bias.v_gs) * dir.d_vgs - side(bias.v_gd) * dir.d_vgd)
}

#[inline]
fn powb_minus_one(x: f64, beta: f64) -> f64 {
    if beta == 2.0 {
        x
    } else {
        x.powf(beta - 1.0)
    }
}

/// Settings for [`fit_core`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Only samples with `|v_ds|` at or below this are used, V.
    pub max_abs_vds: f64,
    /// Added to `|i|` before taking the log, A.
    pub current_floor: f64,
    pub beta: f64,
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_abs_vds: 0.05,
            current_floor: 1e-30,
            beta: 2.0,
            seed: 0,
            restarts: 4,
            max_iter: 4000,
        }
    }
}

pub const MIN_FIT_SAMPLES: usize = 20;

/// Extracts `(P, V_SS, V_T)` from low-`|v_ds|` data by minimizing the mean
/// squared log-current error. `beta` is held at `config.beta`.
pub fn fit_core(samples: &[IVSample], config: &FitConfig) -> Result<CoreParams> {
    if samples.is_empty() {
        return Err(Error::Empty("sample list"));
    }
    let used: Vec<&IVSample> = samples
        .iter()
        .filter(|s| s.bias.v_ds().abs() <= config.max_abs_vds)
        .collect();
    if used.len() < MIN_FIT_SAMPLES {
        return Err(Error::Fit(format!(
            "{} samples with |v_ds| <= {} V, need at least {}",
            used.len(),
            config.max_abs_vds,
            MIN_FIT_SAMPLES
        )));
    }
    if used.iter().any(|s| !s.bias.is_finite() || !s.i_ds.is_finite()) {
        return Err(Error::NonFinite("fit_core: sample"));
    }

    let floor = config.current_floor;
    let log_data: Vec<f64> = used.iter().map(|s| (s.i_ds.abs() + floor).ln()).collect();
    let mean = log_data.iter().sum::<f64>() / log_data.len() as f64;
    let spread = log_data.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max);
    if spread < 1e-9 {
        return Err(Error::Fit("degenerate data: all currents equal".into()));
    }

    let beta = config.beta;
    let objective = |theta: &[f64; 3]| -> f64 {
        let core = CoreParams {
            p: theta[0].exp(),
            v_ss: theta[1].exp(),
            v_t: theta[2],
            beta,
        };
        let mut acc = 0.0;
        for (s, ld) in used.iter().zip(&log_data) {
            let m = ids_core(&s.bias, &core).abs();
            let r = ld - (m + floor).ln();
            acc += r * r;
        }
        let v = acc / used.len() as f64;
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    // Coarse grid over (V_SS, V_T); ln P is the log-space offset for each.
    let (vg_lo, vg_hi) = used.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |acc, s| {
        (acc.0.min(s.bias.v_gs), acc.1.max(s.bias.v_gs))
    });
    let mut best = ([0.0; 3], f64::INFINITY);
    for i in 0..12 {
        let v_ss = 0.005 * (40.0f64).powf(i as f64 / 11.0);
        for j in 0..24 {
            let v_t = vg_lo + (vg_hi - vg_lo) * j as f64 / 23.0;
            let unit = CoreParams {
                p: 1.0,
                v_ss,
                v_t,
                beta,
            };
            let mut offset = 0.0;
            let mut n = 0usize;
            for (s, ld) in used.iter().zip(&log_data) {
                let m = ids_core(&s.bias, &unit).abs();
                if m > 0.0 {
                    offset += ld - m.ln();
                    n += 1;
                }
            }
            if n == 0 {
                continue;
            }
            let theta = [offset / n as f64, v_ss.ln(), v_t];
            let f = objective(&theta);
            if f < best.1 {
                best = (theta, f);
            }
        }
    }
    if !best.1.is_finite() {
        return Err(Error::Fit("no finite starting point".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let steps = [0.5, 0.2, 0.05];
    best = nelder_mead(&objective, best.0, steps, config.max_iter);
    for _ in 0..config.restarts {
        let mut start = best.0;
        for (k, x) in start.iter_mut().enumerate() {
            *x += steps[k] * 0.1 * rng.gen_range(-1.0..1.0);
        }
        let candidate = nelder_mead(&objective, start, steps.map(|s| s * 0.2), config.max_iter);
        if candidate.1 < best.1 {
            best = candidate;
        }
    }

    let theta = best.0;
    CoreParams::new(theta[0].exp(), theta[1].exp(), theta[2], beta)
        .map_err(|e| Error::Fit(format!("fit produced invalid parameters: {e}")))
}

/// Plain Nelder-Mead on three parameters.
fn nelder_mead<F>(f: &F, start: [f64; 3], steps: [f64; 3], max_iter: usize) -> ([f64; 3], f64)
where
    F: Fn(&[f64; 3]) -> f64,
{
    const N: usize = 3;
    let mut simplex: Vec<([f64; N], f64)> = Vec::with_capacity(N + 1);
    simplex.push((start, f(&start)));
    for k in 0..N {
        let mut p = start;
        p[k] += steps[k];
        simplex.push((p, f(&p)));
    }

    let lerp = |a: &[f64; N], b: &[f64; N], t: f64| -> [f64; N] {
        let mut out = [0.0; N];
        for k in 0..N {
            out[k] = a[k] + t * (b[k] - a[k]);
        }
        out
    };

    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let f_best = simplex[0].1;
        let f_worst = simplex[N].1;
        let size = (1..=N)
            .map(|i| {
                (0..N)
                    .map(|k| (simplex[i].0[k] - simplex[0].0[k]).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if (f_worst - f_best).abs() <= 1e-15 * (1.0 + f_best.abs()) && size < 1e-10 {
            break;
        }

        let mut centroid = [0.0; N];
        for (p, _) in &simplex[..N] {
            for k in 0..N {
                centroid[k] += p[k] / N as f64;
            }
        }
        let worst = simplex[N].0;
        let reflected = lerp(&centroid, &worst, -1.0);
        let f_r = f(&reflected);
        if f_r < f_best {
            let expanded = lerp(&centroid, &worst, -2.0);
            let f_e = f(&expanded);
            simplex[N] = if f_e < f_r { (expanded, f_e) } else { (reflected, f_r) };
        } else if f_r < simplex[N - 1].1 {
            simplex[N] = (reflected, f_r);
        } else {
            let (contracted, f_c) = if f_r < f_worst {
                let c = lerp(&centroid, &reflected, 0.5);
                (c, f(&c))
            } else {
                let c = lerp(&centroid, &worst, 0.5);
                (c, f(&c))
            };
            if f_c < f_worst.min(f_r) {
                simplex[N] = (contracted, f_c);
            } else {
                let best = simplex[0].0;
                for entry in simplex.iter_mut().skip(1) {
                    let p = lerp(&best, &entry.0, 0.5);
                    *entry = (p, f(&p));
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}
