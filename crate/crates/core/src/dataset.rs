//! Training and reference data.
//!
//! A synthetic device stands in for TCAD: the EKV core times a smooth
//! correction that depends only on `T(v_gs, v_gd)`, so it obeys the same
//! symmetry constraints as the fitted model and keeps its true correction and
//! derivatives available in closed form. External data enters through CSV.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::core_model::{ids_core, sigmoid, BiasPoint, CoreParams, Direction, IVSample};
use crate::error::{Error, Result};
use crate::network::{transform_t, transform_t_pushforward};

/// Smallest `|v_ds|` at which `eps = I / I_core` is evaluated, V.
pub const MIN_ABS_VDS: f64 = 1e-3;
/// Below this `|I_core|` the correction is treated as undefined, A.
pub const MIN_CORE_CURRENT: f64 = 1e-30;
/// Tolerance when matching sample voltages to grid nodes, V.
pub const GRID_TOL: f64 = 1e-9;

/// One training row: the correction and its two terminal derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionSample {
    pub bias: BiasPoint,
    pub eps: f64,
    pub d_eps_dvg: f64,
    pub d_eps_dvd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl AxisSpec {
    pub fn new(lo: f64, hi: f64, count: usize) -> Self {
        AxisSpec { lo, hi, count }
    }
}

/// Rectangular `(v_gs, v_ds)` grid with the source grounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub v_gs: AxisSpec,
    pub v_ds: AxisSpec,
    /// Base intervals starting below this voltage are subdivided, V.
    pub densify_below: f64,
    /// Number of sub-intervals per densified base interval.
    pub densify_factor: usize,
}

impl GridSpec {
    /// 12 000 points over `v_gs, v_ds` in the 0.7 V supply window.
    pub fn default_train() -> Self {
        GridSpec {
            v_gs: AxisSpec::new(0.0, 0.7, 76),
            v_ds: AxisSpec::new(MIN_ABS_VDS, 0.7, 64),
            densify_below: 0.2,
            densify_factor: 3,
        }
    }

    /// 56 000 points over the same window.
    pub fn default_test() -> Self {
        GridSpec {
            v_gs: AxisSpec::new(0.0, 0.7, 204),
            v_ds: AxisSpec::new(MIN_ABS_VDS, 0.7, 111),
            densify_below: 0.2,
            densify_factor: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, a) in [("v_gs", &self.v_gs), ("v_ds", &self.v_ds)] {
            if !(a.lo.is_finite() && a.hi.is_finite()) || a.lo >= a.hi {
                return Err(Error::Grid(format!("{name}: need lo < hi, got [{}, {}]", a.lo, a.hi)));
            }
            if a.count < 2 {
                return Err(Error::Grid(format!("{name}: count must be >= 2, got {}", a.count)));
            }
        }
        if self.densify_factor < 1 {
            return Err(Error::Grid("densify_factor must be >= 1".into()));
        }
        if !self.densify_below.is_finite() {
            return Err(Error::Grid("densify_below must be finite".into()));
        }
        Ok(())
    }

    /// Additional check for grids whose points become correction targets.
    pub fn validate_for_eps(&self) -> Result<()> {
        self.validate()?;
        if self.v_ds.lo < MIN_ABS_VDS {
            return Err(Error::Grid(format!(
                "v_ds lower bound {} V is below the 1 mV correction guard",
                self.v_ds.lo
            )));
        }
        Ok(())
    }

    pub fn geometry(&self) -> GridGeometry {
        GridGeometry {
            v_gs: axis_points(&self.v_gs, self.densify_below, self.densify_factor),
            v_ds: axis_points(&self.v_ds, self.densify_below, self.densify_factor),
        }
    }

    pub fn point_count(&self) -> usize {
        self.geometry().len()
    }
}

fn axis_points(axis: &AxisSpec, threshold: f64, factor: usize) -> Vec<f64> {
    let intervals = axis.count - 1;
    let h = (axis.hi - axis.lo) / intervals as f64;
    let mut out = Vec::new();
    for k in 0..intervals {
        let left = axis.lo + k as f64 * h;
        if left < threshold && factor > 1 {
            for j in 0..factor {
                let t = k as f64 + j as f64 / factor as f64;
                out.push(axis.lo + (axis.hi - axis.lo) * t / intervals as f64);
            }
        } else {
            out.push(left);
        }
    }
    out.push(axis.hi);
    out
}

/// Axis node positions of a rectangular grid. Samples are ordered row-major:
/// index `i * v_ds.len() + j` holds `(v_gs[i], v_ds[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridGeometry {
    pub v_gs: Vec<f64>,
    pub v_ds: Vec<f64>,
}

impl GridGeometry {
    pub fn len(&self) -> usize {
        self.v_gs.len() * self.v_ds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bias(&self, i: usize, j: usize) -> BiasPoint {
        BiasPoint::from_vgs_vds(self.v_gs[i], self.v_ds[j])
    }

    /// Recovers the axes from row-major grid samples.
    pub fn infer(biases: &[BiasPoint]) -> Result<Self> {
        let first = biases.first().ok_or(Error::Empty("grid"))?;
        let n_ds = biases
            .iter()
            .take_while(|b| (b.v_gs - first.v_gs).abs() <= GRID_TOL)
            .count();
        if n_ds < 2 || !biases.len().is_multiple_of(n_ds) {
            return Err(Error::Grid(format!(
                "{} samples do not form rows of {n_ds}",
                biases.len()
            )));
        }
        let v_ds: Vec<f64> = biases[..n_ds].iter().map(BiasPoint::v_ds).collect();
        let v_gs: Vec<f64> = biases.iter().step_by(n_ds).map(|b| b.v_gs).collect();
        let geometry = GridGeometry { v_gs, v_ds };
        geometry.check(biases)?;
        Ok(geometry)
    }

    fn check(&self, biases: &[BiasPoint]) -> Result<()> {
        if biases.len() != self.len() {
            return Err(Error::Grid(format!(
                "{} samples for a {}x{} grid",
                biases.len(),
                self.v_gs.len(),
                self.v_ds.len()
            )));
        }
        for w in self.v_gs.windows(2).chain(self.v_ds.windows(2)) {
            if w[1] <= w[0] {
                return Err(Error::Grid("axis values must be strictly increasing".into()));
            }
        }
        let n_ds = self.v_ds.len();
        for (k, b) in biases.iter().enumerate() {
            let (i, j) = (k / n_ds, k % n_ds);
            if (b.v_gs - self.v_gs[i]).abs() > GRID_TOL || (b.v_ds() - self.v_ds[j]).abs() > GRID_TOL {
                return Err(Error::Grid(format!(
                    "sample {k} at (v_gs={}, v_ds={}) is off the grid node ({}, {})",
                    b.v_gs,
                    b.v_ds(),
                    self.v_gs[i],
                    self.v_ds[j]
                )));
            }
        }
        Ok(())
    }
}

/// Derivative at `x[k]` of the quadratic through three neighbouring nodes.
/// Central at interior nodes, one-sided at the ends; second order either way.
fn three_point_derivative(x: &[f64], f: impl Fn(usize) -> f64, k: usize) -> f64 {
    let n = x.len();
    if n == 2 {
        return (f(1) - f(0)) / (x[1] - x[0]);
    }
    let (a, b, c) = if k == 0 {
        (0, 1, 2)
    } else if k == n - 1 {
        (n - 3, n - 2, n - 1)
    } else {
        (k - 1, k, k + 1)
    };
    let (xa, xb, xc, xk) = (x[a], x[b], x[c], x[k]);
    f(a) * (2.0 * xk - xb - xc) / ((xa - xb) * (xa - xc))
        + f(b) * (2.0 * xk - xa - xc) / ((xb - xa) * (xb - xc))
        + f(c) * (2.0 * xk - xa - xb) / ((xc - xa) * (xc - xb))
}

/// Partial derivatives of gridded values along the gate axis (drain held) and
/// the drain axis (gate held).
pub fn grid_partials(values: &[f64], geometry: &GridGeometry) -> Result<Vec<(f64, f64)>> {
    if values.len() != geometry.len() {
        return Err(Error::Grid(format!(
            "{} values for a grid of {}",
            values.len(),
            geometry.len()
        )));
    }
    let n_gs = geometry.v_gs.len();
    let n_ds = geometry.v_ds.len();
    let mut out = Vec::with_capacity(values.len());
    for i in 0..n_gs {
        for j in 0..n_ds {
            let d_g = three_point_derivative(&geometry.v_gs, |r| values[r * n_ds + j], i);
            let d_d = three_point_derivative(&geometry.v_ds, |c| values[i * n_ds + c], j);
            out.push((d_g, d_d));
        }
    }
    Ok(out)
}

/// Parameters of the synthetic device.
///
/// `eps_true(u, v) = 1 + a1 * v * (1 + a2 * sigmoid(u / a0))` over the
/// transformed coordinates `(u, v) = T(v_gs, v_gd)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleParams {
    pub base: CoreParams,
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams {
            base: CoreParams {
                p: 1e-4,
                v_ss: 0.056,
                v_t: 0.25,
                beta: 2.0,
            },
            a0: 0.5,
            a1: 1.0,
            a2: 1.0,
        }
    }
}

impl OracleParams {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if !(self.a0 > 0.0 && self.a0.is_finite()) {
            return Err(Error::Config(format!("oracle a0 must be > 0, got {}", self.a0)));
        }
        if !(self.a1 >= 0.0 && self.a1.is_finite()) {
            return Err(Error::Config(format!("oracle a1 must be >= 0, got {}", self.a1)));
        }
        if !(self.a2 >= -1.0 && self.a2.is_finite()) {
            return Err(Error::Config(format!("oracle a2 must be >= -1, got {}", self.a2)));
        }
        Ok(())
    }

    pub fn eps_true(&self, bias: &BiasPoint) -> f64 {
        let t = transform_t(bias);
        1.0 + self.a1 * t.v * (1.0 + self.a2 * sigmoid(t.u / self.a0))
    }

    /// Closed-form derivative of `eps_true` along `dir`.
    pub fn eps_true_directional(&self, bias: &BiasPoint, dir: Direction) -> f64 {
        let t = transform_t(bias);
        let s = sigmoid(t.u / self.a0);
        let d_du = self.a1 * t.v * self.a2 * s * (1.0 - s) / self.a0;
        let d_dv = self.a1 * (1.0 + self.a2 * s);
        let (du, dv) = transform_t_pushforward(bias, dir);
        d_du * du + d_dv * dv
    }
}

/// Drain current of the synthetic device.
pub fn synthetic_oracle(bias: &BiasPoint, p: &OracleParams) -> f64 {
    ids_core(bias, &p.base) * p.eps_true(bias)
}

/// Where grid currents come from.
#[derive(Debug, Clone)]
pub enum GridSource {
    Oracle(OracleParams),
    /// Measured data; every grid node must be present in the file.
    Csv(PathBuf),
}

/// Samples `source` on the rectangular grid of `spec`, row-major in `v_gs`
/// then `v_ds`.
pub fn generate_grid(spec: &GridSpec, source: &GridSource) -> Result<Vec<IVSample>> {
    spec.validate()?;
    let geometry = spec.geometry();
    let biases = (0..geometry.v_gs.len())
        .flat_map(|i| (0..geometry.v_ds.len()).map(move |j| (i, j)))
        .map(|(i, j)| geometry.bias(i, j));
    match source {
        GridSource::Oracle(p) => {
            p.validate()?;
            Ok(biases.map(|b| IVSample::new(b, synthetic_oracle(&b, p))).collect())
        }
        GridSource::Csv(path) => {
            let data = load_csv(path)?;
            let mut sorted: Vec<(f64, f64, f64)> = data.iter().map(|s| (s.bias.v_gs, s.bias.v_ds(), s.i_ds)).collect();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            biases
                .map(|b| {
                    let (vgs, vds) = (b.v_gs, b.v_ds());
                    let start = sorted.partition_point(|s| s.0 < vgs - GRID_TOL);
                    sorted[start..]
                        .iter()
                        .take_while(|s| s.0 <= vgs + GRID_TOL)
                        .find(|s| (s.1 - vds).abs() <= GRID_TOL)
                        .map(|s| IVSample::new(b, s.2))
                        .ok_or_else(|| {
                            Error::Grid(format!(
                                "{}: no sample at grid node v_gs={vgs}, v_ds={vds}",
                                path.display()
                            ))
                        })
                })
                .collect()
        }
    }
}

/// `eps = I / I_core` at every sample.
pub fn compute_eps(samples: &[IVSample], core: &CoreParams) -> Result<Vec<(BiasPoint, f64)>> {
    samples
        .iter()
        .map(|s| {
            if s.bias.v_ds().abs() < MIN_ABS_VDS - GRID_TOL {
                return Err(Error::VdsGuard(s.bias));
            }
            let i_core = ids_core(&s.bias, core);
            if !(i_core.abs() >= MIN_CORE_CURRENT) {
                return Err(Error::DegenerateCore(s.bias));
            }
            Ok((s.bias, s.i_ds / i_core))
        })
        .collect()
}

/// Finite-difference `d eps / d V_G` and `d eps / d V_D` on a grid.
pub fn fd_derivative_targets(eps: &[(BiasPoint, f64)], geometry: &GridGeometry) -> Result<Vec<CorrectionSample>> {
    let biases: Vec<BiasPoint> = eps.iter().map(|e| e.0).collect();
    geometry.check(&biases)?;
    let values: Vec<f64> = eps.iter().map(|e| e.1).collect();
    let partials = grid_partials(&values, geometry)?;
    Ok(eps
        .iter()
        .zip(partials)
        .map(|(&(bias, eps), (d_g, d_d))| CorrectionSample {
            bias,
            eps,
            d_eps_dvg: d_g,
            d_eps_dvd: d_d,
        })
        .collect())
}

/// Full pipeline from gridded currents to training rows.
pub fn correction_dataset(samples: &[IVSample], core: &CoreParams) -> Result<Vec<CorrectionSample>> {
    let biases: Vec<BiasPoint> = samples.iter().map(|s| s.bias).collect();
    let geometry = GridGeometry::infer(&biases)?;
    fd_derivative_targets(&compute_eps(samples, core)?, &geometry)
}

pub const CSV_HEADER: &str = "v_gs,v_ds,i_ds";
/// Voltages beyond this magnitude are assumed to be in the wrong unit.
const MAX_ABS_VOLTAGE: f64 = 100.0;

pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<IVSample>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, path)
}

pub fn read_csv<R: std::io::Read>(reader: R, path: &Path) -> Result<Vec<IVSample>> {
    let err = |line: u64, msg: String| Error::Csv {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);

    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(err(1, "empty file".into())),
        Some(r) => r.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?,
    };
    let header_line = header.position().map_or(1, |p| p.line());
    let names: Vec<&str> = header.iter().collect();
    if names != ["v_gs", "v_ds", "i_ds"] {
        return Err(err(
            header_line,
            format!("expected header `{CSV_HEADER}`, found `{}`", names.join(",")),
        ));
    }

    let mut out = Vec::new();
    for record in records {
        let record = record.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(err(line, format!("expected 3 fields, found {}", record.len())));
        }
        let mut vals = [0.0; 3];
        for (k, (field, name)) in record.iter().zip(["v_gs", "v_ds", "i_ds"]).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| err(line, format!("{name}: `{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(err(line, format!("{name}: non-finite value")));
            }
            vals[k] = v;
        }
        if vals[0].abs() > MAX_ABS_VOLTAGE || vals[1].abs() > MAX_ABS_VOLTAGE {
            return Err(err(line, "voltage magnitude above 100 V; expected volts".into()));
        }
        out.push(IVSample::new(BiasPoint::from_vgs_vds(vals[0], vals[1]), vals[2]));
    }
    if out.is_empty() {
        return Err(err(header_line, "no data rows".into()));
    }
    Ok(out)
}

pub fn write_csv<W: Write>(mut w: W, samples: &[IVSample]) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for s in samples {
        writeln!(w, "{:.16e},{:.16e},{:.16e}", s.bias.v_gs, s.bias.v_ds(), s.i_ds)?;
    }
    Ok(())
}

pub fn save_csv(path: impl AsRef<Path>, samples: &[IVSample]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_csv(&mut w, samples).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain(gs: (f64, f64, usize), ds: (f64, f64, usize)) -> GridSpec {
        GridSpec {
            v_gs: AxisSpec::new(gs.0, gs.1, gs.2),
            v_ds: AxisSpec::new(ds.0, ds.1, ds.2),
            densify_below: 0.2,
            densify_factor: 1,
        }
    }

    #[test]
    fn three_by_three_order() {
        let spec = plain((0.0, 0.6, 3), (0.1, 0.5, 3));
        let s = generate_grid(&spec, &GridSource::Oracle(OracleParams::default())).unwrap();
        assert_eq!(s.len(), 9);
        let expect = [
            (0.0, 0.1),
            (0.0, 0.3),
            (0.0, 0.5),
            (0.3, 0.1),
            (0.3, 0.3),
            (0.3, 0.5),
            (0.6, 0.1),
            (0.6, 0.3),
            (0.6, 0.5),
        ];
        for (s, (g, d)) in s.iter().zip(expect) {
            assert!((s.bias.v_gs - g).abs() < 1e-15 && (s.bias.v_ds() - d).abs() < 1e-15);
        }
    }

    #[test]
    fn default_grids_match_split() {
        let train = GridSpec::default_train();
        let test = GridSpec::default_test();
        assert_eq!(train.point_count(), 12_000);
        assert_eq!(test.point_count(), 56_000);
        let ratio = train.point_count() as f64 / (train.point_count() + test.point_count()) as f64;
        assert!((0.15..=0.25).contains(&ratio), "{ratio}");
        for spec in [train, test] {
            let g = spec.geometry();
            assert!(g.v_ds.iter().all(|&v| v >= MIN_ABS_VDS));
            // Densified region is three times finer.
            let fine = g.v_gs[1] - g.v_gs[0];
            let coarse = g.v_gs[g.v_gs.len() - 1] - g.v_gs[g.v_gs.len() - 2];
            assert!((coarse / fine - 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn grid_spec_validation() {
        assert!(plain((0.5, 0.1, 3), (0.1, 0.5, 3)).validate().is_err());
        assert!(plain((0.0, 0.5, 1), (0.1, 0.5, 3)).validate().is_err());
        assert!(plain((0.0, 0.5, 3), (0.0, 0.5, 3)).validate_for_eps().is_err());
        assert!(plain((0.0, 0.5, 3), (0.001, 0.5, 3)).validate_for_eps().is_ok());
    }

    #[test]
    fn oracle_physics() {
        let p = OracleParams::default();
        let b = BiasPoint::new(0.61, 0.61);
        assert_eq!(synthetic_oracle(&b, &p), 0.0);
        let b = BiasPoint::new(0.61, 0.13);
        assert_eq!(synthetic_oracle(&b, &p), -synthetic_oracle(&b.swapped(), &p));
    }

    #[test]
    fn oracle_eps_by_substitution() {
        // u = 1.4, v = 0.49: 1 + 0.49 * (1 + 1/(1 + e^-2.8))
        let p = OracleParams::default();
        let b = BiasPoint::new(1.05, 0.35);
        let expected = 1.0 + 0.49 * (1.0 + 1.0 / (1.0 + (-2.8f64).exp()));
        assert!((p.eps_true(&b) - expected).abs() < 1e-12);
        assert!((p.eps_true(&b) - 1.951_911_153_809_554).abs() < 1e-12);
    }

    #[test]
    fn compute_eps_inverts_oracle() {
        let p = OracleParams::default();
        let s = generate_grid(&plain((0.0, 0.7, 8), (0.001, 0.7, 8)), &GridSource::Oracle(p)).unwrap();
        let eps = compute_eps(&s, &p.base).unwrap();
        for (b, e) in &eps {
            let t = p.eps_true(b);
            assert!((e - t).abs() <= 1e-12 * t);
        }
        let doubled: Vec<IVSample> = s.iter().map(|x| IVSample::new(x.bias, 2.0 * x.i_ds)).collect();
        let eps2 = compute_eps(&doubled, &p.base).unwrap();
        for (a, b) in eps.iter().zip(&eps2) {
            assert_eq!(2.0 * a.1, b.1);
        }
    }

    #[test]
    fn compute_eps_guards() {
        let p = OracleParams::default();
        let zero = [IVSample::new(BiasPoint::new(0.4, 0.4), 0.0)];
        assert!(matches!(compute_eps(&zero, &p.base), Err(Error::VdsGuard(_))));
        let deep = [IVSample::new(BiasPoint::new(-60.0, -60.5), 1e-40)];
        let err = compute_eps(&deep, &p.base).unwrap_err();
        assert!(matches!(err, Error::DegenerateCore(_)));
        assert!(err.to_string().contains("v_gs=-60"));
    }

    fn eps_grid(geometry: &GridGeometry, f: impl Fn(&BiasPoint) -> f64) -> Vec<(BiasPoint, f64)> {
        let mut out = Vec::new();
        for i in 0..geometry.v_gs.len() {
            for j in 0..geometry.v_ds.len() {
                let b = geometry.bias(i, j);
                out.push((b, f(&b)));
            }
        }
        out
    }

    #[test]
    fn fd_targets_exact_for_constant_and_linear() {
        let g = GridSpec {
            densify_factor: 3,
            ..plain((0.0, 0.7, 9), (0.001, 0.7, 7))
        }
        .geometry();
        let c = fd_derivative_targets(&eps_grid(&g, |_| 1.3), &g).unwrap();
        assert!(c.iter().all(|s| s.d_eps_dvg.abs() < 1e-12 && s.d_eps_dvd.abs() < 1e-12));
        let lin = fd_derivative_targets(&eps_grid(&g, |b| 2.0 + 0.37 * b.v_gs), &g).unwrap();
        for s in &lin {
            assert!((s.d_eps_dvg - 0.37).abs() < 1e-12, "{}", s.d_eps_dvg);
            assert!(s.d_eps_dvd.abs() < 1e-12);
        }
    }

    #[test]
    fn fd_targets_match_analytic_oracle() {
        let p = OracleParams::default();
        let g = plain((0.0, 0.7, 71), (0.001, 0.701, 71)).geometry();
        let targets = fd_derivative_targets(&eps_grid(&g, |b| p.eps_true(b)), &g).unwrap();
        let exact: Vec<(f64, f64)> = targets
            .iter()
            .map(|s| {
                (
                    p.eps_true_directional(&s.bias, Direction::GATE),
                    p.eps_true_directional(&s.bias, Direction::DRAIN),
                )
            })
            .collect();
        let scale_g = exact.iter().map(|e| e.0.abs()).fold(0.0, f64::max);
        let scale_d = exact.iter().map(|e| e.1.abs()).fold(0.0, f64::max);
        for (s, &(dg, dd)) in targets.iter().zip(&exact) {
            assert!((s.d_eps_dvg - dg).abs() <= 1e-3 * scale_g, "{s:?} {dg}");
            assert!((s.d_eps_dvd - dd).abs() <= 1e-3 * scale_d, "{s:?} {dd}");
        }
    }

    #[test]
    fn fd_targets_second_order_convergence() {
        let p = OracleParams::default();
        let max_err = |n: usize| {
            let g = plain((0.0, 0.7, n), (0.001, 0.701, n)).geometry();
            let t = fd_derivative_targets(&eps_grid(&g, |b| p.eps_true(b)), &g).unwrap();
            t.iter()
                .map(|s| {
                    let dg = p.eps_true_directional(&s.bias, Direction::GATE);
                    let dd = p.eps_true_directional(&s.bias, Direction::DRAIN);
                    (s.d_eps_dvg - dg).abs().max((s.d_eps_dvd - dd).abs())
                })
                .fold(0.0, f64::max)
        };
        let ratio = max_err(36) / max_err(71);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn fd_targets_reject_off_grid() {
        let g = plain((0.0, 0.7, 4), (0.001, 0.7, 4)).geometry();
        let mut e = eps_grid(&g, |_| 1.0);
        e[5].0.v_gs += 0.01;
        assert!(matches!(fd_derivative_targets(&e, &g), Err(Error::Grid(_))));
        assert!(fd_derivative_targets(&e[..10], &g).is_err());
    }

    #[test]
    fn geometry_inference() {
        let spec = GridSpec {
            densify_factor: 3,
            ..plain((0.0, 0.7, 6), (0.001, 0.7, 5))
        };
        let s = generate_grid(&spec, &GridSource::Oracle(OracleParams::default())).unwrap();
        let biases: Vec<BiasPoint> = s.iter().map(|x| x.bias).collect();
        let g = GridGeometry::infer(&biases).unwrap();
        assert_eq!(g.v_gs, spec.geometry().v_gs);
        assert!(GridGeometry::infer(&biases[..biases.len() - 1]).is_err());
    }

    #[test]
    fn csv_round_trip_and_csv_source() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("iv.csv");
        let spec = plain((0.0, 0.7, 5), (0.001, 0.7, 4));
        let s = generate_grid(&spec, &GridSource::Oracle(OracleParams::default())).unwrap();
        save_csv(&path, &s).unwrap();
        let back = load_csv(&path).unwrap();
        assert_eq!(back.len(), s.len());
        for (a, b) in s.iter().zip(&back) {
            assert_eq!(a.bias.v_gs, b.bias.v_gs);
            assert_eq!(a.i_ds, b.i_ds);
            assert!((a.bias.v_gd - b.bias.v_gd).abs() <= 2.0 * f64::EPSILON);
        }
        let from_csv = generate_grid(&spec, &GridSource::Csv(path.clone())).unwrap();
        assert_eq!(
            from_csv.iter().map(|x| x.i_ds).collect::<Vec<_>>(),
            s.iter().map(|x| x.i_ds).collect::<Vec<_>>()
        );
        let finer = plain((0.0, 0.7, 9), (0.001, 0.7, 4));
        assert!(generate_grid(&finer, &GridSource::Csv(path)).is_err());
    }

    fn parse(text: &str) -> Result<Vec<IVSample>> {
        read_csv(text.as_bytes(), Path::new("mem.csv"))
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(parse(""), Err(Error::Csv { line: 1, .. })));
        assert!(matches!(parse("0.1,0.2,0.3\n"), Err(Error::Csv { line: 1, .. })));
        match parse("# note\nv_gs,v_ds,i_ds\n0.1,0.1,1e-6\n0.2,0.1,abc\n") {
            Err(Error::Csv { line, msg, .. }) => {
                assert_eq!(line, 4);
                assert!(msg.contains("i_ds"));
            }
            other => panic!("{other:?}"),
        }
        assert!(parse("v_gs,v_ds,i_ds\n").is_err());
        assert!(parse("v_gs,v_ds,i_ds\n700,100,1e-6\n").is_err());
        assert!(parse("v_gs,v_ds,i_ds\n0.1,0.1,inf\n").is_err());
        assert_eq!(parse("v_gs,v_ds,i_ds\n# c\n0.1, 0.05, 1e-6\n").unwrap().len(), 1);
    }
}
