//! Command implementations: resolve presets, run the compute modules, write
//! deterministic reports into the output directory.

use std::path::{Path, PathBuf};

use serde_json::json;

use hypoctrl_core::control::{hum_control, observability_gramian, ControlProblem};
use hypoctrl_core::grid::{Axis, GridFunction};
use hypoctrl_core::hermite::{
    assemble_weyl, omega_gram, spectral_constant_profile, HermiteTruncation,
};
use hypoctrl_core::lr_cost::{
    observability_cost, telescoping_trace, DiagonalSemigroupModel, LRParams,
};
use hypoctrl_core::phase_space::{
    build_ou_symbol, catalogue_k0_symbol, chain_preset, hamilton_map, harmonic_symbol,
    heat_system, kalman_analysis, kfp_symbol, kolmogorov_system, singular_space,
    OUSystem, QuadraticSymbol,
};
use hypoctrl_core::region::RegionSpec;
use hypoctrl_core::report::{write_csv, write_json};
use hypoctrl_core::semigroup::{
    covariance_qt, heat_dissipation_benchmark, hypoellipticity_index,
    kolmogorov_apply, kolmogorov_dissipation_benchmark,
};
use hypoctrl_core::{CoreError, CVector, C64};

use crate::config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    UnknownPreset(String),
    Io(std::io::Error),
    Compute(CoreError),
    Usage(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::UnknownPreset(p) => write!(f, "unknown preset: {p}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
            CliError::Compute(e) => write!(f, "computation failed: {e}"),
            CliError::Usage(m) => write!(f, "{m}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::UnknownPreset(_) => 3,
            CliError::Io(_) => 4,
            CliError::Compute(CoreError::Io(_)) => 4,
            CliError::Compute(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Io(io) => CliError::Io(io),
            other => CliError::Compute(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn log(msg: &str) {
    if std::env::var("HYPOCTRL_LOG").map(|v| !v.is_empty() && v != "0").unwrap_or(false) {
        eprintln!("hypoctrl: {msg}");
    }
}

fn preset_name(cfg: &RunConfig) -> CliResult<&str> {
    cfg.preset
        .as_deref()
        .ok_or_else(|| CliError::Usage("config needs a \"preset\" or \"system\" entry".into()))
}

/// Resolves an OU system from a preset name or an inline {"Q","B"} object.
fn resolve_system(cfg: &RunConfig) -> CliResult<OUSystem> {
    if let Some(sys) = &cfg.system {
        return Ok(OUSystem::from_json(sys)?);
    }
    match preset_name(cfg)? {
        "heat" => Ok(heat_system(cfg.n.unwrap_or(1) as usize)),
        "kolmogorov" => Ok(kolmogorov_system()),
        other => Err(CliError::UnknownPreset(other.to_string())),
    }
}

/// Resolves a quadratic symbol from any supported preset.
fn resolve_symbol(cfg: &RunConfig) -> CliResult<(String, QuadraticSymbol)> {
    if let Some(sys) = &cfg.system {
        let sys = OUSystem::from_json(sys)?;
        return Ok(("system".into(), build_ou_symbol(&sys)?));
    }
    let name = preset_name(cfg)?;
    let sym = match name {
        "heat" => build_ou_symbol(&heat_system(cfg.n.unwrap_or(1) as usize))?,
        "kolmogorov" => build_ou_symbol(&kolmogorov_system())?,
        "kfp" => kfp_symbol(cfg.a.unwrap_or(1.0)),
        "harmonic" => harmonic_symbol(cfg.n.unwrap_or(1) as usize),
        "catalogue-k0" => catalogue_k0_symbol(cfg.p.unwrap_or(1) as usize),
        "chain" => {
            let c = cfg.chain.ok_or_else(|| {
                CliError::Usage("chain preset needs a \"chain\" parameter object".into())
            })?;
            chain_preset(c.a, c.b, c.c, c.alpha, c.alpha1, c.alpha2)?.symbol
        }
        other => return Err(CliError::UnknownPreset(other.to_string())),
    };
    Ok((name.to_string(), sym))
}

fn region_from_config(cfg: &RunConfig, default_dim: usize) -> CliResult<RegionSpec> {
    match &cfg.region {
        Some(v) => serde_json::from_value(v.clone())
            .map_err(|e| CliError::Usage(format!("/region: {e}"))),
        None => Ok(RegionSpec::ComplementOfBall {
            center: vec![0.0; default_dim],
            radius: 1.0,
        }),
    }
}

pub fn run_analyze(cfg: &RunConfig, out: &Path, seed: u64) -> CliResult<()> {
    let (name, symbol) = resolve_symbol(cfg)?;
    log(&format!("analyzing symbol preset {name}"));
    let f = hamilton_map(&symbol);
    let report = singular_space(&f, 1e-10);
    let mut doc = json!({
        "accretive": symbol.is_accretive(),
        "preset": name,
        "singular_space": report.to_json(),
        "symbol": symbol.to_json(),
    });
    if let Ok(sys) = resolve_system(cfg) {
        let (rank, k0) = kalman_analysis(&sys);
        doc["kalman"] = json!({"rank": rank, "k0": k0});
        if sys.stable() {
            let t_max = cfg.t_max.unwrap_or(1.0);
            if let Ok((c_hat, t0_hat)) = hypoellipticity_index(&sys, t_max, 100, seed) {
                doc["hypoellipticity_index"] = json!({"c_hat": c_hat, "t0_hat": t0_hat});
            }
        }
    }
    write_json(&out.join("analysis.json"), &doc)?;
    Ok(())
}

pub fn run_evolve(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let sys = resolve_system(cfg)?;
    let t = cfg.t.unwrap_or(0.1);
    let len = cfg.grid_len.unwrap_or(129) as usize;
    let half = cfg.grid_half_width.unwrap_or(8.0);
    let axes: Vec<Axis> = (0..sys.n())
        .map(|_| Axis::symmetric(half, len))
        .collect::<Result<_, _>>()?;
    let g0 = GridFunction::from_fn(axes, |x| {
        C64::new((-0.5 * x.iter().map(|v| v * v).sum::<f64>()).exp(), 0.0)
    })?;
    log(&format!("evolving for t = {t}"));
    let gt = kolmogorov_apply(&sys, &g0, t)?;
    let cov = covariance_qt(&sys, t)?;
    gt.save(&out.join("state.bin"))?;
    let doc = json!({
        "det_qt": cov.det_qt,
        "final_l2": gt.l2_norm(),
        "initial_l2": g0.l2_norm(),
        "t": t,
    });
    write_json(&out.join("evolve.json"), &doc)?;
    Ok(())
}

pub fn run_dissipation(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let profile = match preset_name(cfg)? {
        "heat" => heat_dissipation_benchmark()?,
        "kolmogorov" => kolmogorov_dissipation_benchmark()?,
        other => return Err(CliError::UnknownPreset(other.to_string())),
    };
    write_csv(&out.join("dissipation.csv"), &profile.to_csv())?;
    let doc = json!({
        "c_hat": profile.c_hat,
        "exponent_fit": profile.exponent_fit,
        "fit_ok": profile.fit_ok,
        "t0_hat": profile.t0_hat,
    });
    write_json(&out.join("dissipation.json"), &doc)?;
    Ok(())
}

pub fn run_spectral(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let n = cfg.n.unwrap_or(1) as usize;
    let degree = cfg.degree.unwrap_or(40) as usize;
    let trunc = HermiteTruncation::new(n, degree)?;
    let region = region_from_config(cfg, n)?;
    log(&format!("Gram matrix over {region:?} at degree {degree}"));
    let gram = omega_gram(&trunc, &region)?;
    let ks: Vec<usize> = (1..=degree).collect();
    let profile = spectral_constant_profile(&trunc, &gram, &ks)?;
    write_csv(&out.join("spectral.csv"), &profile.to_csv())?;
    let doc = json!({
        "exponent": profile.exponent,
        "fit_residual_log10": profile.fit_residual_log10,
        "prefactor": profile.prefactor,
        "refinement_delta": gram.refinement_delta,
    });
    write_json(&out.join("spectral.json"), &doc)?;
    Ok(())
}

pub fn run_cost(cfg: &RunConfig, out: &Path, seed: u64) -> CliResult<()> {
    let p = cfg
        .params
        .ok_or_else(|| CliError::Usage("cost command needs a \"params\" object".into()))?;
    let params = LRParams { c1: p.c1, c2: p.c2, a: p.a, b: p.b, m: p.m, t0: p.t0 };
    let report = observability_cost(&params)?;
    write_json(&out.join("cost.json"), &report.to_json())?;
    if params.c2 <= 1.0 {
        let model = DiagonalSemigroupModel::from_params(&params, 40)?;
        let trace =
            telescoping_trace(&params, report.t_tilde0 / 2.0, &model, 50, seed)?;
        write_csv(&out.join("telescoping.csv"), &trace.to_csv())?;
        let doc = json!({
            "final_residual": trace.final_residual,
            "first_failure": trace.first_failure,
            "passed": trace.passed,
        });
        write_json(&out.join("telescoping.json"), &doc)?;
    }
    Ok(())
}

pub fn run_control(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let (name, symbol) = resolve_symbol(cfg)?;
    let n = symbol.n();
    if n > 2 {
        return Err(CliError::Usage("control runs support n <= 2".into()));
    }
    let degree = cfg.degree.unwrap_or(16) as usize;
    let trunc = HermiteTruncation::new(n, degree)?;
    let op = assemble_weyl(&symbol, &trunc)?;
    let region = region_from_config(cfg, n)?;
    let gram = omega_gram(&trunc, &region)?;
    let d = trunc.dim();
    let mut f0 = CVector::zeros(d);
    f0[0] = C64::new(1.0, 0.0);
    if d > 1 {
        f0[1] = C64::new(0.5, 0.0);
    }
    let cp = ControlProblem {
        prop: &op,
        r_omega: gram.g,
        region: Some(region),
        horizon: cfg.horizon.unwrap_or(1.0),
        nt: cfg.nt.unwrap_or(64) as usize,
        f0,
    };
    log(&format!("control run on preset {name}, dimension {d}"));
    let gramian = observability_gramian(&cp)?;
    let result = hum_control(&cp, None)?;
    write_csv(&out.join("control.csv"), &result.to_csv())?;
    let mut doc = result.to_json();
    doc["lambda_min"] = json!(gramian.lambda_min);
    doc["c_hat"] = json!(gramian.c_hat);
    write_json(&out.join("control.json"), &doc)?;
    Ok(())
}

pub fn run_chain(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let c = cfg
        .chain
        .ok_or_else(|| CliError::Usage("chain command needs a \"chain\" object".into()))?;
    let chain = chain_preset(c.a, c.b, c.c, c.alpha, c.alpha1, c.alpha2)?;
    let f = hamilton_map(&chain.symbol);
    let report = singular_space(&f, 1e-10);
    let doc = json!({
        "accretive": chain.accretive,
        "coupling_discriminant": chain.coupling_discriminant,
        "singular_space": report.to_json(),
    });
    write_json(&out.join("chain.json"), &doc)?;
    Ok(())
}

pub fn dispatch(cfg: &RunConfig, out_dir: &PathBuf, seed: u64) -> CliResult<()> {
    std::fs::create_dir_all(out_dir)?;
    match cfg.command.as_str() {
        "analyze" => run_analyze(cfg, out_dir, seed),
        "evolve" => run_evolve(cfg, out_dir),
        "dissipation" => run_dissipation(cfg, out_dir),
        "spectral" => run_spectral(cfg, out_dir),
        "cost" => run_cost(cfg, out_dir, seed),
        "control" => run_control(cfg, out_dir),
        "chain" => run_chain(cfg, out_dir),
        other => Err(CliError::Usage(format!("unsupported command {other}"))),
    }
}
