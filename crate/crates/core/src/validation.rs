//! Accuracy against reference data and the Gummel source/drain symmetry test.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::core_model::{BiasPoint, Direction, IVSample};
use crate::dataset::{grid_partials, GridGeometry};
use crate::error::{Error, Result};
use crate::model::TrainedModel;
use crate::network::{ids_directional, ids_full};

/// Reference current with finite-difference conductances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePoint {
    pub bias: BiasPoint,
    pub i_ds: f64,
    pub g_m: f64,
    pub g_ds: f64,
}

/// Builds reference conductances from gridded currents by finite differences.
pub fn reference_from_grid(samples: &[IVSample]) -> Result<Vec<ReferencePoint>> {
    let biases: Vec<BiasPoint> = samples.iter().map(|s| s.bias).collect();
    let geometry = GridGeometry::infer(&biases)?;
    let currents: Vec<f64> = samples.iter().map(|s| s.i_ds).collect();
    let partials = grid_partials(&currents, &geometry)?;
    Ok(samples
        .iter()
        .zip(partials)
        .map(|(s, (g_m, g_ds))| ReferencePoint {
            bias: s.bias,
            i_ds: s.i_ds,
            g_m,
            g_ds,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    /// Points with `|reference| <= floor * max|reference|` are skipped.
    pub floor: f64,
    /// Histogram edges in percent, ascending. The last bin is open-ended.
    pub bin_edges: Vec<f64>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            floor: 1e-3,
            bin_edges: vec![0.0, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityError {
    pub max_pct: f64,
    pub rms_pct: f64,
    pub count: usize,
    /// Absolute magnitude below which points were skipped.
    pub threshold: f64,
    /// Counts per bin of `MetricsConfig::bin_edges`.
    pub histogram: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub floor: f64,
    pub bin_edges: Vec<f64>,
    pub i_ds: QuantityError,
    pub g_m: QuantityError,
    pub g_ds: QuantityError,
}

fn quantity_error(pairs: &[(f64, f64)], cfg: &MetricsConfig) -> QuantityError {
    let max_ref = pairs.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    let threshold = cfg.floor * max_ref;
    let mut histogram = vec![0u64; cfg.bin_edges.len()];
    let (mut max_pct, mut sum_sq, mut count) = (0.0f64, 0.0, 0usize);
    for &(pred, reference) in pairs {
        if reference.abs() <= threshold || reference == 0.0 {
            continue;
        }
        let pct = 100.0 * (pred - reference).abs() / reference.abs();
        max_pct = max_pct.max(pct);
        sum_sq += pct * pct;
        count += 1;
        if let Some(bin) = cfg.bin_edges.iter().rposition(|&e| pct >= e) {
            histogram[bin] += 1;
        }
    }
    QuantityError {
        max_pct,
        rms_pct: if count > 0 { (sum_sq / count as f64).sqrt() } else { 0.0 },
        count,
        threshold,
        histogram,
    }
}

/// Percent errors of current, transconductance and output conductance.
pub fn error_metrics(model: &TrainedModel, reference: &[ReferencePoint], cfg: &MetricsConfig) -> Result<ErrorReport> {
    if reference.is_empty() {
        return Err(Error::Empty("reference set"));
    }
    if !(cfg.floor >= 0.0) {
        return Err(Error::Config(format!("floor must be >= 0, got {}", cfg.floor)));
    }
    if cfg.bin_edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("histogram edges must be ascending".into()));
    }
    let mut i = Vec::with_capacity(reference.len());
    let mut gm = Vec::with_capacity(reference.len());
    let mut gds = Vec::with_capacity(reference.len());
    for r in reference {
        let op = ids_full(&r.bias, model);
        i.push((op.i_ds, r.i_ds));
        gm.push((op.g_m, r.g_m));
        gds.push((op.g_ds, r.g_ds));
    }
    Ok(ErrorReport {
        floor: cfg.floor,
        bin_edges: cfg.bin_edges.clone(),
        i_ds: quantity_error(&i, cfg),
        g_m: quantity_error(&gm, cfg),
        g_ds: quantity_error(&gds, cfg),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GummelConfig {
    pub v_g: f64,
    pub v_x_max: f64,
    pub points: usize,
}

impl Default for GummelConfig {
    fn default() -> Self {
        GummelConfig {
            v_g: 0.5,
            v_x_max: 0.1,
            points: 201,
        }
    }
}

/// Sweep with the drain at `+v_x` and the source at `-v_x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GummelReport {
    pub v_g: f64,
    pub step: f64,
    pub v_x: Vec<f64>,
    pub i_ds: Vec<f64>,
    /// Analytic `dI/dV_x`.
    pub d1: Vec<f64>,
    /// Central difference of the analytic first derivative.
    pub d2: Vec<f64>,
    /// `max |d2|` over the sweep.
    pub d2_max: f64,
    /// `|d2(0)| / d2_max`.
    pub d2_zero_ratio: f64,
    /// `|d2(+h) - d2(-h)| / d2_max` with `h` the sweep spacing. For a smooth
    /// odd current this is about `2 h |I'''(0)| / d2_max`, so it reflects the
    /// slope of `d2` at the origin as well as any jump.
    pub discontinuity: f64,
    /// Jump between the left and right one-sided linear extrapolations of
    /// `d2` to `v_x = 0`, over `d2_max`. Vanishes to `O(h^2)` for smooth
    /// currents.
    pub extrapolated_jump: f64,
    /// `max |I(v_x) + I(-v_x)| / |I(v_x)|`.
    pub oddness: f64,
    /// `max |d1(v_x) - d1(-v_x)| / |d1(v_x)|`.
    pub first_derivative_evenness: f64,
}

pub fn gummel_sweep(model: &TrainedModel, cfg: &GummelConfig) -> Result<GummelReport> {
    if cfg.points.is_multiple_of(2) || cfg.points < 5 {
        return Err(Error::Config(format!(
            "Gummel sweep needs an odd point count >= 5 so that v_x = 0 is sampled, got {}",
            cfg.points
        )));
    }
    if !(cfg.v_x_max > 0.0 && cfg.v_x_max.is_finite() && cfg.v_g.is_finite()) {
        return Err(Error::Config(format!("v_x_max must be > 0, got {}", cfg.v_x_max)));
    }
    let half = (cfg.points / 2) as i64;
    let step = cfg.v_x_max / half as f64;
    let bias = |v_x: f64| BiasPoint::new(cfg.v_g + v_x, cfg.v_g - v_x);
    let first = |v_x: f64| ids_directional(&bias(v_x), Direction::GUMMEL, model);

    let v_x: Vec<f64> = (-half..=half).map(|k| k as f64 * step).collect();
    let mut i_ds = Vec::with_capacity(v_x.len());
    let mut d1 = Vec::with_capacity(v_x.len());
    let mut d2 = Vec::with_capacity(v_x.len());
    for &x in &v_x {
        let (i, d) = first(x);
        i_ds.push(i);
        d1.push(d);
        d2.push((first(x + step).1 - first(x - step).1) / (2.0 * step));
    }

    let mid = half as usize;
    let d2_max = d2.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let norm = |v: f64| if d2_max > 0.0 { v / d2_max } else { v.abs() };
    let right = 2.0 * d2[mid + 1] - d2[mid + 2];
    let left = 2.0 * d2[mid - 1] - d2[mid - 2];

    let rel = |a: f64, scale: f64| if scale == 0.0 { a.abs() } else { a.abs() / scale.abs() };
    let mut oddness = 0.0f64;
    let mut evenness = 0.0f64;
    for k in 1..=mid {
        oddness = oddness.max(rel(i_ds[mid + k] + i_ds[mid - k], i_ds[mid + k]));
        evenness = evenness.max(rel(d1[mid + k] - d1[mid - k], d1[mid + k]));
    }

    Ok(GummelReport {
        v_g: cfg.v_g,
        step,
        d2_zero_ratio: norm(d2[mid].abs()),
        discontinuity: norm((d2[mid + 1] - d2[mid - 1]).abs()),
        extrapolated_jump: norm((right - left).abs()),
        d2_max,
        oddness,
        first_derivative_evenness: evenness,
        v_x,
        i_ds,
        d1,
        d2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Config(format!(
                "unknown report format `{other}` (expected csv or json)"
            ))),
        }
    }
}

pub trait Report: Serialize + for<'de> Deserialize<'de> + Sized {
    fn to_csv(&self) -> String;
    fn from_csv(text: &str) -> Result<Self>;

    fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    fn render(&self, format: ReportFormat) -> Result<String> {
        match format {
            ReportFormat::Csv => Ok(self.to_csv()),
            ReportFormat::Json => self.to_json(),
        }
    }
}

pub fn export_report<R: Report>(report: &R, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, report.render(format)?).map_err(|e| Error::io(path, e))
}

fn parse_f64(field: &str, what: &str) -> Result<f64> {
    field.trim().parse().map_err(|_| Error::Parse {
        pos: 0,
        msg: format!("{what}: `{field}` is not a number"),
    })
}

fn header_value<'a>(text: &'a str, key: &str) -> Result<&'a str> {
    let prefix = format!("# {key}=");
    text.lines()
        .find_map(|l| l.strip_prefix(prefix.as_str()))
        .ok_or_else(|| Error::Parse {
            pos: 0,
            msg: format!("missing `{key}` header line"),
        })
}

fn data_rows(text: &str) -> impl Iterator<Item = Vec<&str>> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .skip(1)
        .map(|l| l.split(',').collect())
}

impl Report for ErrorReport {
    /// Columns: `quantity,max_pct,rms_pct,count,threshold,bin_<k>...`; bin `k`
    /// counts percent errors in `[edge_k, edge_{k+1})`.
    fn to_csv(&self) -> String {
        let mut s = String::new();
        let edges: Vec<String> = self.bin_edges.iter().map(|e| format!("{e:.16e}")).collect();
        writeln!(
            s,
            "# error report: percent errors where |reference| > floor * max|reference|"
        )
        .unwrap();
        writeln!(s, "# floor={:.16e}", self.floor).unwrap();
        writeln!(s, "# bin_edges_pct={}", edges.join(";")).unwrap();
        let bins: Vec<String> = (0..self.bin_edges.len()).map(|k| format!("bin_{k}")).collect();
        writeln!(s, "quantity,max_pct,rms_pct,count,threshold,{}", bins.join(",")).unwrap();
        for (name, q) in [("i_ds", &self.i_ds), ("g_m", &self.g_m), ("g_ds", &self.g_ds)] {
            let hist: Vec<String> = q.histogram.iter().map(u64::to_string).collect();
            writeln!(
                s,
                "{name},{:.16e},{:.16e},{},{:.16e},{}",
                q.max_pct,
                q.rms_pct,
                q.count,
                q.threshold,
                hist.join(",")
            )
            .unwrap();
        }
        s
    }

    fn from_csv(text: &str) -> Result<Self> {
        let floor = parse_f64(header_value(text, "floor")?, "floor")?;
        let edges = header_value(text, "bin_edges_pct")?;
        let bin_edges = if edges.is_empty() {
            Vec::new()
        } else {
            edges
                .split(';')
                .map(|e| parse_f64(e, "bin edge"))
                .collect::<Result<Vec<_>>>()?
        };
        let mut quantities = Vec::new();
        for row in data_rows(text) {
            if row.len() != 5 + bin_edges.len() {
                return Err(Error::Parse {
                    pos: 0,
                    msg: format!("row `{}` has {} fields", row.join(","), row.len()),
                });
            }
            let histogram = row[5..]
                .iter()
                .map(|h| {
                    h.trim().parse::<u64>().map_err(|_| Error::Parse {
                        pos: 0,
                        msg: format!("bad count `{h}`"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            quantities.push((
                row[0].to_string(),
                QuantityError {
                    max_pct: parse_f64(row[1], "max_pct")?,
                    rms_pct: parse_f64(row[2], "rms_pct")?,
                    count: row[3].trim().parse().map_err(|_| Error::Parse {
                        pos: 0,
                        msg: "bad count".into(),
                    })?,
                    threshold: parse_f64(row[4], "threshold")?,
                    histogram,
                },
            ));
        }
        let mut take = |name: &str| {
            quantities
                .iter()
                .position(|q| q.0 == name)
                .map(|k| quantities.remove(k).1)
                .ok_or_else(|| Error::Parse {
                    pos: 0,
                    msg: format!("missing `{name}` row"),
                })
        };
        Ok(ErrorReport {
            floor,
            i_ds: take("i_ds")?,
            g_m: take("g_m")?,
            g_ds: take("g_ds")?,
            bin_edges,
        })
    }
}

impl Report for GummelReport {
    /// Columns: `v_x,i_ds,dI_dVx,d2I_dVx2`; summary metrics in `#` lines.
    fn to_csv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# Gummel symmetry sweep: drain at +v_x, source at -v_x, gate at v_g").unwrap();
        for (k, v) in [
            ("v_g", self.v_g),
            ("step", self.step),
            ("d2_max", self.d2_max),
            ("d2_zero_ratio", self.d2_zero_ratio),
            ("discontinuity", self.discontinuity),
            ("extrapolated_jump", self.extrapolated_jump),
            ("oddness", self.oddness),
            ("first_derivative_evenness", self.first_derivative_evenness),
        ] {
            writeln!(s, "# {k}={v:.16e}").unwrap();
        }
        writeln!(s, "v_x,i_ds,dI_dVx,d2I_dVx2").unwrap();
        for k in 0..self.v_x.len() {
            writeln!(
                s,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                self.v_x[k], self.i_ds[k], self.d1[k], self.d2[k]
            )
            .unwrap();
        }
        s
    }

    fn from_csv(text: &str) -> Result<Self> {
        let h = |k: &str| header_value(text, k).and_then(|v| parse_f64(v, k));
        let mut cols: [Vec<f64>; 4] = Default::default();
        for row in data_rows(text) {
            if row.len() != 4 {
                return Err(Error::Parse {
                    pos: 0,
                    msg: format!("expected 4 columns, got {}", row.len()),
                });
            }
            for (c, f) in cols.iter_mut().zip(&row) {
                c.push(parse_f64(f, "sweep value")?);
            }
        }
        let [v_x, i_ds, d1, d2] = cols;
        Ok(GummelReport {
            v_g: h("v_g")?,
            step: h("step")?,
            d2_max: h("d2_max")?,
            d2_zero_ratio: h("d2_zero_ratio")?,
            discontinuity: h("discontinuity")?,
            extrapolated_jump: h("extrapolated_jump")?,
            oddness: h("oddness")?,
            first_derivative_evenness: h("first_derivative_evenness")?,
            v_x,
            i_ds,
            d1,
            d2,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{AxisSpec, GridSpec};
    use crate::network::{init_weights, Mlp};
    use crate::CoreParams;

    fn model(seed: u64) -> TrainedModel {
        TrainedModel::new(
            CoreParams::new(1e-4, 0.056, 0.25, 2.0).unwrap(),
            init_weights(&[2, 5, 4, 1], seed).unwrap(),
        )
    }

    fn self_reference(m: &TrainedModel, scale: f64) -> Vec<ReferencePoint> {
        let g = GridSpec {
            v_gs: AxisSpec::new(0.0, 0.7, 15),
            v_ds: AxisSpec::new(0.001, 0.7, 12),
            densify_below: 0.2,
            densify_factor: 2,
        }
        .geometry();
        let mut out = Vec::new();
        for i in 0..g.v_gs.len() {
            for j in 0..g.v_ds.len() {
                let b = g.bias(i, j);
                let op = ids_full(&b, m);
                out.push(ReferencePoint {
                    bias: b,
                    i_ds: scale * op.i_ds,
                    g_m: scale * op.g_m,
                    g_ds: scale * op.g_ds,
                });
            }
        }
        out
    }

    #[test]
    fn self_consistent_model_has_zero_error() {
        let m = model(1);
        let r = error_metrics(&m, &self_reference(&m, 1.0), &MetricsConfig::default()).unwrap();
        for q in [&r.i_ds, &r.g_m, &r.g_ds] {
            assert_eq!(q.max_pct, 0.0);
            assert!(q.count > 0);
            assert_eq!(q.histogram[0] as usize, q.count);
        }
    }

    #[test]
    fn one_percent_scale_error() {
        let m = model(2);
        let r = error_metrics(&m, &self_reference(&m, 1.01), &MetricsConfig::default()).unwrap();
        // |x - 1.01x| / 1.01x
        assert!((r.i_ds.max_pct - 100.0 * 0.01 / 1.01).abs() < 0.01);
        assert!((r.i_ds.max_pct - 1.0).abs() < 0.01 + 1e-9);
        assert!(r.i_ds.max_pct >= r.i_ds.rms_pct);
    }

    #[test]
    fn scale_consistency() {
        let m = model(3);
        let mut reference = self_reference(&m, 1.0);
        for (k, r) in reference.iter_mut().enumerate() {
            let f = 1.0 + 0.01 * ((k as f64) * 0.37).sin();
            r.i_ds *= f;
            r.g_m *= f;
            r.g_ds *= 2.0 - f;
        }
        let base = error_metrics(&m, &reference, &MetricsConfig::default()).unwrap();
        let c = 3.7;
        let mut scaled_model = m.clone();
        scaled_model.core.p *= c;
        let scaled_ref: Vec<ReferencePoint> = reference
            .iter()
            .map(|r| ReferencePoint {
                bias: r.bias,
                i_ds: c * r.i_ds,
                g_m: c * r.g_m,
                g_ds: c * r.g_ds,
            })
            .collect();
        let scaled = error_metrics(&scaled_model, &scaled_ref, &MetricsConfig::default()).unwrap();
        for (a, b) in [
            (&base.i_ds, &scaled.i_ds),
            (&base.g_m, &scaled.g_m),
            (&base.g_ds, &scaled.g_ds),
        ] {
            assert!((a.max_pct - b.max_pct).abs() <= 1e-12 * a.max_pct.max(1.0));
            assert!((a.rms_pct - b.rms_pct).abs() <= 1e-12 * a.rms_pct.max(1.0));
            assert_eq!(a.count, b.count);
        }
    }

    #[test]
    fn empty_reference_is_an_error() {
        assert!(error_metrics(&model(1), &[], &MetricsConfig::default()).is_err());
    }

    #[test]
    fn reference_from_grid_exact_for_linear_current() {
        let g = GridSpec {
            v_gs: AxisSpec::new(0.0, 0.7, 6),
            v_ds: AxisSpec::new(0.001, 0.7, 5),
            densify_below: 0.2,
            densify_factor: 3,
        }
        .geometry();
        let mut samples = Vec::new();
        for i in 0..g.v_gs.len() {
            for j in 0..g.v_ds.len() {
                let b = g.bias(i, j);
                samples.push(IVSample::new(b, 2e-6 * b.v_gs + 5e-6 * b.v_ds()));
            }
        }
        for r in reference_from_grid(&samples).unwrap() {
            assert!((r.g_m - 2e-6).abs() < 1e-15 && (r.g_ds - 5e-6).abs() < 1e-15);
        }
    }

    #[test]
    fn gummel_on_random_model() {
        let r = gummel_sweep(&model(4), &GummelConfig::default()).unwrap();
        let mid = r.v_x.len() / 2;
        assert_eq!(r.v_x.len(), 201);
        assert_eq!(r.v_x[mid], 0.0);
        assert_eq!(r.i_ds[mid], 0.0);
        assert!(r.oddness < 1e-14);
        assert!(r.first_derivative_evenness < 1e-12);
        assert!(r.d2_zero_ratio < 1e-6);
        assert!(r.extrapolated_jump < 1e-4, "{}", r.extrapolated_jump);
        for k in 0..r.v_x.len() {
            assert_eq!(r.v_x[k], -r.v_x[r.v_x.len() - 1 - k]);
        }
    }

    #[test]
    fn gummel_rejects_even_counts() {
        let cfg = GummelConfig {
            points: 200,
            ..GummelConfig::default()
        };
        assert!(gummel_sweep(&model(1), &cfg).is_err());
        let cfg = GummelConfig {
            v_x_max: 0.0,
            ..GummelConfig::default()
        };
        assert!(gummel_sweep(&model(1), &cfg).is_err());
    }

    #[test]
    fn discontinuity_metric_flags_a_kink() {
        // A correction with a |v_ds| cusp breaks smoothness at v_x = 0; build
        // one from a net whose first layer sees v = v_ds^2 through a huge
        // weight, approximating a step in eps' at the origin.
        let net = Mlp::from_parts(
            vec![2, 1, 1],
            vec![vec![0.0, 4e4], vec![0.5]],
            vec![vec![0.0], vec![1.0]],
        )
        .unwrap();
        let m = TrainedModel::new(CoreParams::new(1e-4, 0.056, 0.25, 2.0).unwrap(), net);
        let r = gummel_sweep(&m, &GummelConfig::default()).unwrap();
        assert!(r.discontinuity > 1e-2, "{}", r.discontinuity);
        assert!(r.extrapolated_jump > 1e-2, "{}", r.extrapolated_jump);
    }

    #[test]
    fn literal_metric_on_a_smooth_odd_current() {
        // I = x + c x^3 has d2 = 6 c x, so |d2(h) - d2(-h)| / max|d2| = 2 h / x_max.
        let h = 1e-3;
        let d2: Vec<f64> = (-100..=100).map(|k| 6.0 * 0.3 * (k as f64 * h)).collect();
        let max = d2.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(((d2[101] - d2[99]).abs() / max - 0.02).abs() < 1e-12);
    }

    #[test]
    fn reports_round_trip() {
        let m = model(5);
        let e = error_metrics(&m, &self_reference(&m, 1.02), &MetricsConfig::default()).unwrap();
        assert_eq!(ErrorReport::from_csv(&e.to_csv()).unwrap(), e);
        assert_eq!(ErrorReport::from_json(&e.to_json().unwrap()).unwrap(), e);
        let g = gummel_sweep(
            &m,
            &GummelConfig {
                points: 21,
                ..GummelConfig::default()
            },
        )
        .unwrap();
        assert_eq!(GummelReport::from_csv(&g.to_csv()).unwrap(), g);
        assert_eq!(GummelReport::from_json(&g.to_json().unwrap()).unwrap(), g);
        assert!(g.to_csv().lines().any(|l| l == "v_x,i_ds,dI_dVx,d2I_dVx2"));
    }

    #[test]
    fn format_tags() {
        assert_eq!("csv".parse::<ReportFormat>().unwrap(), ReportFormat::Csv);
        assert_eq!("JSON".parse::<ReportFormat>().unwrap(), ReportFormat::Json);
        assert!("xml".parse::<ReportFormat>().is_err());
    }

    #[test]
    fn export_writes_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.csv");
        let g = gummel_sweep(
            &model(6),
            &GummelConfig {
                points: 11,
                ..GummelConfig::default()
            },
        )
        .unwrap();
        export_report(&g, &p, ReportFormat::Csv).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), g.to_csv());
        assert!(export_report(&g, dir.path().join("missing/g.csv"), ReportFormat::Json).is_err());
    }
}
