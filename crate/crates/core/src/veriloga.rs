//! VerilogA emission for a trained model.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::core_model::BiasPoint;
use crate::error::{Error, Result};
use crate::model::TrainedModel;
use crate::network::ids_full;
use crate::va_interp::{parse_module, VaProgram, DISCIPLINES_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TanhStyle {
    /// The simulator's `tanh`.
    #[default]
    Builtin,
    /// `1 - 2 / (exp(2 z) + 1)` with `z` clamped to `[-20, 20]`, for dialects
    /// without `tanh`.
    ExpFallback,
}

impl FromStr for TanhStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "builtin" => Ok(TanhStyle::Builtin),
            "exp" => Ok(TanhStyle::ExpFallback),
            other => Err(Error::Config(format!(
                "unknown tanh style `{other}` (expected builtin or exp)"
            ))),
        }
    }
}

/// Emitted source with the constants inlined into it.
#[derive(Debug, Clone, PartialEq)]
pub struct VaModule {
    pub name: String,
    pub text: String,
    /// `(symbol, value)` for every inlined model parameter.
    pub constants: Vec<(String, f64)>,
}

impl VaModule {
    pub fn parse(&self) -> Result<VaProgram> {
        parse_module(&self.text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, &self.text).map_err(|e| Error::io(path, e))
    }
}

/// 17 significant digits; parses back to the same double.
pub fn format_constant(x: f64) -> String {
    format!("{x:.16e}")
}

fn is_identifier(s: &str) -> bool {
    let mut c = s.chars();
    matches!(c.next(), Some(ch) if ch.is_ascii_alphabetic() || ch == '_')
        && c.all(|ch| ch.is_ascii_alphanumeric() || ch == '_')
}

/// `+ w * x` or `- |w| * x`.
fn signed_term(out: &mut String, w: f64, x: &str) {
    let sign = if w.is_sign_negative() { '-' } else { '+' };
    write!(out, " {sign} {} * {x}", format_constant(w.abs())).unwrap();
}

fn affine_expr(w: &[f64], b: f64, inputs: &[String]) -> String {
    let mut s = format_constant(b);
    for (wj, x) in w.iter().zip(inputs) {
        signed_term(&mut s, *wj, x);
    }
    s
}

pub fn emit_veriloga(model: &TrainedModel, module_name: &str, style: TanhStyle) -> Result<VaModule> {
    model.validate()?;
    if !is_identifier(module_name) {
        return Err(Error::Config(format!("`{module_name}` is not a valid module name")));
    }
    let core = &model.core;
    let net = &model.network;
    let sizes = net.layer_sizes();
    let n_layers = net.n_layers();
    let mut constants = vec![
        ("P".to_string(), core.p),
        ("V_SS".to_string(), core.v_ss),
        ("V_T".to_string(), core.v_t),
        ("beta".to_string(), core.beta),
    ];

    let mut t = String::new();
    let md = &model.metadata;
    let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
    writeln!(t, "// {module_name}: EKV core with a symmetric neural correction").unwrap();
    writeln!(t, "// seed: {}", md.seed).unwrap();
    writeln!(t, "// epochs: {}", md.epochs).unwrap();
    writeln!(t, "// final_cost: {}", opt(md.final_cost.map(format_constant))).unwrap();
    writeln!(t, "// dataset_sha256: {}", opt(md.dataset_fingerprint.clone())).unwrap();
    writeln!(t, "// created: {}", opt(md.created.clone())).unwrap();
    let layers: Vec<String> = sizes.iter().map(usize::to_string).collect();
    writeln!(t, "// layers: {}", layers.join("-")).unwrap();
    let style_tag = match style {
        TanhStyle::Builtin => "builtin",
        TanhStyle::ExpFallback => "exp",
    };
    writeln!(t, "// tanh: {style_tag}").unwrap();
    writeln!(t, "`include \"{DISCIPLINES_HEADER}\"").unwrap();
    writeln!(t).unwrap();
    writeln!(t, "module {module_name}(d, g, s);").unwrap();
    writeln!(t, "    inout d, g, s;").unwrap();
    writeln!(t, "    electrical d, g, s;").unwrap();
    writeln!(t, "    real vgs, vgd, xs, xd, es, ed, ws, wd, phis, phid, icore, u, v;").unwrap();
    for (l, &width) in sizes.iter().enumerate().take(n_layers).skip(1) {
        let names: Vec<String> = (0..width)
            .flat_map(|i| [format!("z{l}_{i}"), format!("h{l}_{i}")])
            .collect();
        writeln!(t, "    real {};", names.join(", ")).unwrap();
    }
    writeln!(t, "    real eps, ids;").unwrap();
    writeln!(t).unwrap();
    writeln!(t, "    analog begin").unwrap();

    let (p, vss, vt) = (
        format_constant(core.p),
        format_constant(core.v_ss),
        format_constant(core.v_t),
    );
    let st = |t: &mut String, line: String| writeln!(t, "        {line};").unwrap();
    st(&mut t, "vgs = V(g, s)".into());
    st(&mut t, "vgd = V(g, d)".into());
    for side in ["s", "d"] {
        st(&mut t, format!("x{side} = (vg{side} - {vt}) / {vss}"));
        // ln(1 + e) as ln(w) * e / (w - 1) keeps full relative accuracy for
        // small e; the series bound covers w == 1.
        st(&mut t, format!("e{side} = exp(-abs(x{side}))"));
        st(&mut t, format!("w{side} = 1.0 + e{side}"));
        st(
            &mut t,
            format!(
                "phi{side} = {vss} * (max(x{side}, 0.0) + max(ln(w{side}) * e{side} / max(w{side} - 1.0, 1.0e-300), e{side} - 0.5 * e{side} * e{side}))"
            ),
        );
    }
    if core.beta == 2.0 {
        st(&mut t, format!("icore = {p} * (phis * phis - phid * phid)"));
    } else {
        let b = format_constant(core.beta);
        st(&mut t, format!("icore = {p} * (pow(phis, {b}) - pow(phid, {b}))"));
    }
    st(&mut t, "u = vgs + vgd".into());
    st(&mut t, "v = (vgs - vgd) * (vgs - vgd)".into());

    let mut inputs = vec!["u".to_string(), "v".to_string()];
    for l in 0..n_layers {
        let n_in = sizes[l];
        let w = net.weights(l);
        let b = net.biases(l);
        for i in 0..sizes[l + 1] {
            for j in 0..n_in {
                constants.push((format!("W{}[{i}][{j}]", l + 1), w[i * n_in + j]));
            }
            constants.push((format!("b{}[{i}]", l + 1), b[i]));
        }
        if l + 1 == n_layers {
            st(&mut t, format!("eps = {}", affine_expr(w, b[0], &inputs)));
            break;
        }
        let layer = l + 1;
        let mut next = Vec::with_capacity(sizes[layer]);
        for i in 0..sizes[layer] {
            let z = format!("z{layer}_{i}");
            let h = format!("h{layer}_{i}");
            st(
                &mut t,
                format!("{z} = {}", affine_expr(&w[i * n_in..(i + 1) * n_in], b[i], &inputs)),
            );
            match style {
                TanhStyle::Builtin => st(&mut t, format!("{h} = tanh({z})")),
                TanhStyle::ExpFallback => st(
                    &mut t,
                    format!("{h} = 1.0 - 2.0 / (exp(2.0 * max(-max(-{z}, -20.0), -20.0)) + 1.0)"),
                ),
            }
            next.push(h);
        }
        inputs = next;
    }
    st(&mut t, "ids = icore * eps".into());
    st(&mut t, "I(d, s) <+ ids".into());
    writeln!(t, "    end").unwrap();
    writeln!(t, "endmodule").unwrap();

    Ok(VaModule {
        name: module_name.to_string(),
        text: t,
        constants,
    })
}

/// Drain current of a parsed module at the given bias, with the source
/// grounded.
pub fn eval_ids(program: &VaProgram, bias: &BiasPoint) -> Result<f64> {
    let (v_g, v_s) = (bias.v_gs, 0.0);
    let v_d = bias.v_gs - bias.v_gd;
    let (p, n, i) = program.eval(&[("d", v_d), ("g", v_g), ("s", v_s)])?;
    match (p.as_str(), n.as_str()) {
        ("d", "s") => Ok(i),
        ("s", "d") => Ok(-i),
        _ => Err(Error::Eval(format!(
            "contribution on branch ({p}, {n}) is not drain-source"
        ))),
    }
}

/// Largest `|va - lib| / max(|lib|, 1e-30)` over `biases`.
pub fn round_trip_error(model: &TrainedModel, program: &VaProgram, biases: &[BiasPoint]) -> Result<f64> {
    let mut worst = 0.0f64;
    for b in biases {
        let lib = ids_full(b, model).i_ds;
        let va = eval_ids(program, b)?;
        let rel = (va - lib).abs() / lib.abs().max(1e-30);
        if !rel.is_finite() {
            return Err(Error::Eval(format!("non-finite round-trip result at {b:?}")));
        }
        worst = worst.max(rel);
    }
    Ok(worst)
}
