//! The `ekvnet` command line.
//!
//! Exit codes: 0 success, 1 a result missed its threshold (or training
//! failed numerically), 2 usage, configuration or I/O error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::config::{Overrides, RunConfig};
use crate::core_model::{fit_core, BiasPoint};
use crate::dataset::{correction_dataset, generate_grid, load_csv, save_csv, GridSource};
use crate::error::{Error, Result};
use crate::model::TrainedModel;
use crate::network::{ids_full, init_weights, Mlp};
use crate::training::train_network;
use crate::validation::{error_metrics, export_report, gummel_sweep, reference_from_grid, ReportFormat};
use crate::veriloga::{emit_veriloga, round_trip_error};

pub const EXIT_OK: i32 = 0;
pub const EXIT_THRESHOLD: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "ekvnet",
    version,
    about = "EKV core + symmetric neural correction compact model"
)]
pub struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for fitting restarts, weight initialization and sampling.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the train and test IV grids.
    Generate,
    /// Extract the core parameters from near-zero-v_ds data.
    FitCore {
        /// IV grid CSV; defaults to the generated training grid.
        #[arg(long, value_name = "PATH")]
        data: Option<PathBuf>,
    },
    /// Train the correction network.
    Train {
        /// Model file; defaults to `model_file` under the output directory.
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        /// IV grid CSV; defaults to the generated training grid.
        #[arg(long, value_name = "PATH")]
        data: Option<PathBuf>,
    },
    /// Percent errors of I, g_m and g_ds against a reference grid.
    Validate {
        /// Model file; defaults to `model_file` under the output directory.
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        /// Reference IV grid CSV; defaults to the generated test grid.
        #[arg(long, value_name = "PATH")]
        data: Option<PathBuf>,
        /// `json` or `csv`.
        #[arg(long)]
        format: Option<String>,
    },
    /// Source/drain symmetry sweep.
    Gummel {
        /// Model file; defaults to `model_file` under the output directory.
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        /// `csv` or `json`.
        #[arg(long)]
        format: Option<String>,
    },
    /// Output characteristics for plotting.
    Predict {
        /// Model file; defaults to `model_file` under the output directory.
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
    },
    /// Write the VerilogA module and check it against the library.
    ExportVa {
        /// Model file; defaults to `model_file` under the output directory.
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        /// Module name, also used for the file name.
        #[arg(long)]
        name: Option<String>,
        /// `builtin` or `exp`.
        #[arg(long)]
        tanh: Option<String>,
    },
}

/// Result of a command that ran to completion.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Pass,
    Fail(String),
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Diverged { .. } | Error::Fit(_) | Error::DegenerateCore(_) | Error::VdsGuard(_) => EXIT_THRESHOLD,
        _ => EXIT_USAGE,
    }
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(&cli) {
        Ok(Outcome::Pass) => EXIT_OK,
        Ok(Outcome::Fail(msg)) => {
            eprintln!("FAIL: {msg}");
            EXIT_THRESHOLD
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let overrides = Overrides {
        seed: cli.seed,
        out_dir: cli.out.clone(),
    };
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    let model_path = |m: &Option<PathBuf>| m.clone().unwrap_or_else(|| cfg.out_path(&cfg.model_file));
    match &cli.command {
        Command::Generate => cmd_generate(&cfg),
        Command::FitCore { data } => cmd_fit_core(
            &cfg,
            &data.clone().unwrap_or_else(|| cfg.out_path(&cfg.data.train_file)),
        ),
        Command::Train { model, data } => cmd_train(
            &cfg,
            &model_path(model),
            &data.clone().unwrap_or_else(|| cfg.out_path(&cfg.data.train_file)),
        ),
        Command::Validate { model, data, format } => cmd_validate(
            &cfg,
            &model_path(model),
            &data.clone().unwrap_or_else(|| cfg.out_path(&cfg.data.test_file)),
            format.as_deref().unwrap_or(&cfg.validate.format),
        ),
        Command::Gummel { model, format } => cmd_gummel(
            &cfg,
            &model_path(model),
            format.as_deref().unwrap_or(&cfg.gummel.format),
        ),
        Command::Predict { model } => cmd_predict(&cfg, &model_path(model)),
        Command::ExportVa { model, name, tanh } => cmd_export_va(
            &cfg,
            &model_path(model),
            name.as_deref().unwrap_or(&cfg.export.module_name),
            tanh.as_deref().unwrap_or(&cfg.export.tanh),
        ),
    }
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))
}

/// SHA-256 of a file's bytes, lowercase hex.
pub fn fingerprint(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            write!(s, "{b:02x}").unwrap();
            s
        }))
}

pub fn cmd_generate(cfg: &RunConfig) -> Result<Outcome> {
    let source = match &cfg.data.source_csv {
        Some(p) => GridSource::Csv(p.clone()),
        None => GridSource::Oracle(cfg.oracle),
    };
    ensure_out_dir(cfg)?;
    for (label, spec, file) in [
        ("train", &cfg.data.train_grid, &cfg.data.train_file),
        ("test", &cfg.data.test_grid, &cfg.data.test_file),
    ] {
        let samples = generate_grid(spec, &source)?;
        let path = cfg.out_path(file);
        save_csv(&path, &samples)?;
        println!("{label}: {} points -> {}", samples.len(), path.display());
    }
    Ok(Outcome::Pass)
}

pub fn cmd_fit_core(cfg: &RunConfig, data: &Path) -> Result<Outcome> {
    let samples = load_csv(data)?;
    let core = fit_core(&samples, &cfg.fit)?;
    let mut model = TrainedModel::new(core, Mlp::identity(&cfg.train.layer_sizes)?);
    model.metadata.seed = cfg.fit.seed;
    model.metadata.dataset_fingerprint = Some(fingerprint(data)?);
    ensure_out_dir(cfg)?;
    let path = cfg.out_path(&cfg.model_file);
    model.save(&path)?;
    println!(
        "core: P = {:e} A/V^2, V_SS = {:.6} V, V_T = {:.6} V -> {}",
        core.p,
        core.v_ss,
        core.v_t,
        path.display()
    );
    Ok(Outcome::Pass)
}

/// A network with every weight zero cannot leave that point under gradient
/// descent, so it is replaced by a fresh initialization.
fn is_placeholder(net: &Mlp) -> bool {
    (0..net.n_layers()).all(|l| net.weights(l).iter().all(|&w| w == 0.0))
}

pub fn cmd_train(cfg: &RunConfig, model_path: &Path, data: &Path) -> Result<Outcome> {
    let mut model = TrainedModel::load(model_path)?;
    let out = cfg.out_path(&cfg.model_file);
    ensure_out_dir(cfg)?;
    if cfg.train.max_epochs == 0 {
        model.save(&out)?;
        println!("max_epochs = 0: model unchanged -> {}", out.display());
        return Ok(Outcome::Pass);
    }
    let samples = load_csv(data)?;
    let dataset = correction_dataset(&samples, &model.core)?;
    let net = if is_placeholder(&model.network) {
        init_weights(&cfg.train.layer_sizes, cfg.train.seed)?
    } else {
        log::info!("continuing from the network in {}", model_path.display());
        model.network.clone()
    };
    let (net, report) = train_network(net, &dataset, &cfg.train)?;
    model.network = net;
    model.metadata.seed = cfg.train.seed;
    model.metadata.epochs = report.epochs;
    model.metadata.final_cost = Some(report.final_cost);
    model.metadata.dataset_fingerprint = Some(fingerprint(data)?);
    model.save(&out)?;
    let history = cfg.out_path(&cfg.history_file);
    std::fs::write(&history, report.to_csv()).map_err(|e| Error::io(&history, e))?;
    println!(
        "trained {} epochs in {:.1} s, final cost {:.6e} -> {}",
        report.epochs,
        report.wall_time.as_secs_f64(),
        report.final_cost,
        out.display()
    );
    if report.final_cost <= cfg.train.target_cost {
        Ok(Outcome::Pass)
    } else {
        Ok(Outcome::Fail(format!(
            "final cost {:.6e} above target {:.6e}",
            report.final_cost, cfg.train.target_cost
        )))
    }
}

pub fn cmd_validate(cfg: &RunConfig, model_path: &Path, data: &Path, format: &str) -> Result<Outcome> {
    let format: ReportFormat = format.parse()?;
    let model = TrainedModel::load(model_path)?;
    let reference = reference_from_grid(&load_csv(data)?)?;
    let report = error_metrics(&model, &reference, &cfg.validate.metrics())?;
    ensure_out_dir(cfg)?;
    let path = cfg.out_path(&format!("validation.{}", ext(format)));
    export_report(&report, &path, format)?;
    let mut failures = Vec::new();
    for (name, q, limit) in [
        ("i_ds", &report.i_ds, cfg.validate.max_i_ds_pct),
        ("g_m", &report.g_m, cfg.validate.max_g_m_pct),
        ("g_ds", &report.g_ds, cfg.validate.max_g_ds_pct),
    ] {
        println!(
            "{name:>4}: max {:8.4} %  rms {:8.4} %  ({} points, limit {limit} %)",
            q.max_pct, q.rms_pct, q.count
        );
        if !(q.max_pct <= limit) {
            failures.push(format!("{name} max error {:.4} % > {limit} %", q.max_pct));
        }
    }
    println!("report -> {}", path.display());
    Ok(if failures.is_empty() {
        Outcome::Pass
    } else {
        Outcome::Fail(failures.join("; "))
    })
}

fn ext(f: ReportFormat) -> &'static str {
    match f {
        ReportFormat::Csv => "csv",
        ReportFormat::Json => "json",
    }
}

pub fn cmd_gummel(cfg: &RunConfig, model_path: &Path, format: &str) -> Result<Outcome> {
    let format: ReportFormat = format.parse()?;
    let model = TrainedModel::load(model_path)?;
    let g = gummel_sweep(&model, &cfg.gummel.sweep())?;
    ensure_out_dir(cfg)?;
    let path = cfg.out_path(&format!("gummel.{}", ext(format)));
    export_report(&g, &path, format)?;
    println!("oddness {:.3e}, d2 at 0 / max {:.3e}", g.oddness, g.d2_zero_ratio);
    println!(
        "discontinuity {:.3e} (one-sided extrapolation jump {:.3e})",
        g.discontinuity, g.extrapolated_jump
    );
    println!("report -> {}", path.display());
    let mut failures = Vec::new();
    if !(g.discontinuity < cfg.gummel.max_discontinuity) {
        failures.push(format!(
            "discontinuity {:.3e} >= {:.3e}",
            g.discontinuity, cfg.gummel.max_discontinuity
        ));
    }
    if !(g.d2_zero_ratio < cfg.gummel.max_zero_ratio) {
        failures.push(format!(
            "d2 at 0 ratio {:.3e} >= {:.3e}",
            g.d2_zero_ratio, cfg.gummel.max_zero_ratio
        ));
    }
    if !(g.oddness < 1e-14) {
        failures.push(format!("current not odd: {:.3e}", g.oddness));
    }
    Ok(if failures.is_empty() {
        Outcome::Pass
    } else {
        Outcome::Fail(failures.join("; "))
    })
}

pub fn cmd_predict(cfg: &RunConfig, model_path: &Path) -> Result<Outcome> {
    let model = TrainedModel::load(model_path)?;
    let axis = &cfg.predict.v_ds;
    let mut s = String::from("# output characteristics, source grounded; A and A/V\nv_gs,v_ds,i_ds,g_m,g_ds\n");
    for &v_gs in &cfg.predict.v_gs {
        for k in 0..axis.count {
            let v_ds = axis.lo + (axis.hi - axis.lo) * k as f64 / (axis.count - 1) as f64;
            let op = ids_full(&BiasPoint::from_vgs_vds(v_gs, v_ds), &model);
            writeln!(
                s,
                "{v_gs:.16e},{v_ds:.16e},{:.16e},{:.16e},{:.16e}",
                op.i_ds, op.g_m, op.g_ds
            )
            .unwrap();
        }
    }
    ensure_out_dir(cfg)?;
    let path = cfg.out_path("predict.csv");
    std::fs::write(&path, s).map_err(|e| Error::io(&path, e))?;
    println!(
        "{} curves x {} points -> {}",
        cfg.predict.v_gs.len(),
        axis.count,
        path.display()
    );
    Ok(Outcome::Pass)
}

pub fn cmd_export_va(cfg: &RunConfig, model_path: &Path, name: &str, tanh: &str) -> Result<Outcome> {
    let model = TrainedModel::load(model_path)?;
    let va = emit_veriloga(&model, name, tanh.parse()?)?;
    ensure_out_dir(cfg)?;
    let path = cfg.out_path(&format!("{name}.va"));
    va.save(&path)?;
    let program = va.parse()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let (lo, hi) = (cfg.export.bias_lo, cfg.export.bias_hi);
    let biases: Vec<BiasPoint> = (0..cfg.export.round_trip_points)
        .map(|_| BiasPoint::new(rng.gen_range(lo..hi), rng.gen_range(lo..hi)))
        .collect();
    let err = round_trip_error(&model, &program, &biases)?;
    println!(
        "{} -> {} (round-trip max relative error {err:.3e} over {} biases)",
        name,
        path.display(),
        biases.len()
    );
    if err < cfg.export.round_trip_tol {
        Ok(Outcome::Pass)
    } else {
        Ok(Outcome::Fail(format!(
            "round-trip error {err:.3e} >= {:.3e}",
            cfg.export.round_trip_tol
        )))
    }
}
