use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use storage_fleet::engine::{simulate as run_policy, SimTable};
use storage_fleet::fleet::convention_factor;
use storage_fleet::sizing::{
    cartesian_lambda_grid, check_reliability, cost_report, min_single_store_capacity,
    optimize_fleet, optimize_single_store, tune_lambdas, SizingError, SizingOptions, StoreDims,
};
use storage_fleet::traces::{synthesize, trace_stats};
use storage_fleet::{LossConvention, PolicyKind, ValueParams};

use crate::config::ScenarioConfig;
use crate::{CliError, Context, SizeMode};

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn sizing_err(e: SizingError) -> CliError {
    match e {
        SizingError::InvalidInput(m) => CliError::Config(m),
        other => runtime(other),
    }
}

fn create(ctx: &Context, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
    fs::create_dir_all(&ctx.out)
        .map_err(|e| runtime(format!("cannot create {}: {e}", ctx.out.display())))?;
    let path = ctx.out.join(name);
    let f = File::create(&path)
        .map_err(|e| runtime(format!("cannot create {}: {e}", path.display())))?;
    Ok((path, BufWriter::new(f)))
}

fn write_json<T: Serialize>(ctx: &Context, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let (path, mut w) = create(ctx, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(runtime)?;
    std::io::Write::write_all(&mut w, b"\n").map_err(runtime)?;
    std::io::Write::flush(&mut w).map_err(runtime)?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreOutcome {
    pub name: String,
    pub served_mwh: f64,
    pub final_level_mwh: f64,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub policy: String,
    pub convention: LossConvention,
    pub hours: usize,
    pub total_unserved_mwh: f64,
    pub total_spill_mwh: f64,
    pub cross_charged_mwh: f64,
    pub annual_unserved_mwh: f64,
    pub meets_standard: bool,
    pub stores: Vec<StoreOutcome>,
}

pub fn simulate(cfg: &ScenarioConfig, ctx: &Context) -> Result<String, CliError> {
    let (fleet, initial) = cfg.fleet()?;
    if fleet.is_empty() {
        return Err(CliError::Config("simulate needs at least one store".into()));
    }
    let policy = cfg.policy(fleet.len())?;
    let standard = cfg.standard()?;
    let trace = cfg.residual_trace()?;
    let result = run_policy(&fleet, &initial, &trace, &policy).map_err(runtime)?;

    let conv = ctx.convention.unwrap_or(cfg.convention);
    let scale: Vec<f64> = fleet
        .iter()
        .map(|s| convention_factor(s.efficiency, LossConvention::Input, conv))
        .collect();
    let table = SimTable::from_result(&fleet, trace.values(), &result, &scale);
    let (_, w) = create(ctx, "simulation.csv")?;
    table.write_csv(w).map_err(runtime)?;

    let years = trace.years();
    let summary = SimulationSummary {
        policy: policy.name().into(),
        convention: conv,
        hours: trace.len(),
        total_unserved_mwh: result.total_unserved(),
        total_spill_mwh: result.total_spill(),
        cross_charged_mwh: result.cross_charged,
        annual_unserved_mwh: result.total_unserved() / years,
        meets_standard: check_reliability(&result, years, &standard),
        stores: fleet
            .iter()
            .zip(&result.served_external)
            .zip(result.final_state.levels.iter().zip(&scale))
            .map(|((s, &served), (&l, &k))| StoreOutcome {
                name: s.name.clone(),
                served_mwh: served,
                final_level_mwh: l * k,
            })
            .collect(),
    };
    write_json(ctx, "summary.json", &summary)?;
    Ok(format!(
        "simulate: {} h, unserved {:.6} MWh, spill {:.6} MWh",
        summary.hours, summary.total_unserved_mwh, summary.total_spill_mwh
    ))
}

fn report_convention(cfg: &ScenarioConfig, ctx: &Context) -> LossConvention {
    ctx.convention
        .unwrap_or(cfg.sizing.options.report_convention)
}

pub fn size(
    cfg: &ScenarioConfig,
    ctx: &Context,
    mode: SizeMode,
    no_optimize: bool,
) -> Result<String, CliError> {
    let conv = report_convention(cfg, ctx);
    let result = if no_optimize {
        if cfg.stores.is_empty() {
            return Err(CliError::Config(
                "--no-optimize prices the configured stores, but there are none".into(),
            ));
        }
        let mut rows = Vec::new();
        for s in &cfg.stores {
            let cost = s
                .cost()?
                .ok_or_else(|| CliError::Config(format!("store {} has no prices", s.name)))?;
            let dims = [s.capacity_mwh, s.output_power_mw, s.input_power_mw];
            if dims.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
                return Err(CliError::Config(format!(
                    "store {} needs finite dimensions to be priced",
                    s.name
                )));
            }
            let k = convention_factor(s.efficiency, cfg.convention, conv);
            rows.push((
                s.name.clone(),
                s.efficiency,
                StoreDims::new(s.capacity_mwh * k, s.output_power_mw, s.input_power_mw),
                cost,
            ));
        }
        cost_report(&rows, conv)
    } else {
        let trace = cfg.residual_trace()?;
        let long = cfg.long_technology()?;
        let standard = cfg.standard()?;
        let opts = SizingOptions {
            report_convention: conv,
            ..cfg.sizing.options.clone()
        };
        match mode {
            SizeMode::Single => optimize_single_store(&trace, &long, &standard, &opts),
            SizeMode::Fleet => {
                let candidates = cfg.secondary_candidates()?;
                optimize_fleet(&trace, &long, &candidates, &standard, &opts)
            }
        }
        .map_err(sizing_err)?
    };
    write_json(ctx, "sizing.json", &result)?;
    Ok(format!(
        "size: {} store(s), total {:.3} $bn",
        result.stores.len(),
        result.total_cost_usd / 1e9
    ))
}

/// One row of `min_store_curve.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub overcapacity: Option<f64>,
    pub efficiency: f64,
    pub capacity_mwh: f64,
    pub initial_level_mwh: f64,
}

pub fn min_store_curve(cfg: &ScenarioConfig, ctx: &Context) -> Result<String, CliError> {
    let c = &cfg.curve;
    if c.efficiencies.is_empty() {
        return Err(CliError::Config("curve.efficiencies is empty".into()));
    }
    if let Some(e) = c.efficiencies.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
        return Err(CliError::Config(format!("efficiency {e} outside (0, 1]")));
    }
    if !(c.energy_tol_mwh > 0.0) {
        return Err(CliError::Config(
            "curve.energy_tol_mwh must be positive".into(),
        ));
    }
    let conv = report_convention(cfg, ctx);
    let loaded = cfg.load_trace()?;
    let ocs: Vec<Option<f64>> = if c.overcapacities.is_empty() {
        vec![cfg.trace.overcapacity]
    } else {
        c.overcapacities.iter().map(|&o| Some(o)).collect()
    };
    let traces = ocs
        .iter()
        .map(|&oc| loaded.residual(oc))
        .collect::<Result<Vec<_>, _>>()?;
    let jobs: Vec<(usize, f64)> = (0..ocs.len())
        .flat_map(|i| c.efficiencies.iter().map(move |&e| (i, e)))
        .collect();
    // servable-convention values, for the monotonicity checks
    let raw = jobs
        .par_iter()
        .map(|&(i, eta)| min_single_store_capacity(traces[i].values(), eta, c.energy_tol_mwh))
        .collect::<Result<Vec<_>, _>>()
        .map_err(sizing_err)?;

    let n_eta = c.efficiencies.len();
    let tol = c.energy_tol_mwh;
    let mut warnings = Vec::new();
    for i in 0..ocs.len() {
        for j in 0..n_eta {
            for k in 0..n_eta {
                let (ej, ek) = (c.efficiencies[j], c.efficiencies[k]);
                let (cj, ck) = (raw[i * n_eta + j].0, raw[i * n_eta + k].0);
                if ej < ek && ck > cj + tol {
                    warnings.push(format!(
                        "capacity rises with efficiency between {ej} and {ek}"
                    ));
                }
            }
            if i > 0
                && ocs[i] > ocs[i - 1]
                && raw[i * n_eta + j].0 > raw[(i - 1) * n_eta + j].0 + tol
            {
                warnings.push(format!(
                    "capacity rises with overcapacity at efficiency {}",
                    c.efficiencies[j]
                ));
            }
        }
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }

    let (_, w) = create(ctx, "min_store_curve.csv")?;
    let mut wr = csv::Writer::from_writer(w);
    for (&(i, eta), &(e, s0)) in jobs.iter().zip(&raw) {
        let k = convention_factor(eta, LossConvention::Input, conv);
        wr.serialize(CurvePoint {
            overcapacity: ocs[i],
            efficiency: eta,
            capacity_mwh: e * k,
            initial_level_mwh: s0 * k,
        })
        .map_err(runtime)?;
    }
    wr.flush().map_err(runtime)?;
    Ok(format!(
        "min-store-curve: {} points, {} warning(s)",
        raw.len(),
        warnings.len()
    ))
}

/// Contents of `tune.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub lambdas_per_hour: Vec<f64>,
    pub total_unserved_mwh: f64,
    pub annual_unserved_mwh: f64,
    pub grid_points: usize,
}

pub fn tune(cfg: &ScenarioConfig, ctx: &Context) -> Result<String, CliError> {
    let (fleet, initial) = cfg.fleet()?;
    if fleet.is_empty() {
        return Err(CliError::Config("tune needs at least one store".into()));
    }
    let values = &cfg.tune.lambda_values_per_hour;
    if values.is_empty() {
        return Err(CliError::Config(
            "tune.lambda_values_per_hour is empty".into(),
        ));
    }
    ValueParams::new(values.clone()).map_err(|e| CliError::Config(e.to_string()))?;
    let trace = cfg.residual_trace()?;
    let grid = cartesian_lambda_grid(values, fleet.len());
    let best = tune_lambdas(&fleet, &initial, &trace, &grid).map_err(sizing_err)?;
    let r = run_policy(
        &fleet,
        &initial,
        &trace,
        &PolicyKind::ValueFunction(best.clone()),
    )
    .map_err(runtime)?;
    let out = TuneResult {
        lambdas_per_hour: best.lambdas,
        total_unserved_mwh: r.total_unserved(),
        annual_unserved_mwh: r.total_unserved() / trace.years(),
        grid_points: grid.len(),
    };
    write_json(ctx, "tune.json", &out)?;
    Ok(format!(
        "tune: lambdas {:?}, unserved {:.6} MWh",
        out.lambdas_per_hour, out.total_unserved_mwh
    ))
}

pub fn synth(cfg: &ScenarioConfig, ctx: &Context) -> Result<String, CliError> {
    let params = cfg
        .trace
        .synthetic
        .as_ref()
        .ok_or_else(|| CliError::Config("synth needs a [trace.synthetic] table".into()))?;
    let mut c = synthesize(params)?;
    if let Some(oc) = cfg.trace.overcapacity {
        c = c.scaled(oc)?;
    }
    let (_, w) = create(ctx, "synthetic.csv")?;
    c.write_csv(w).map_err(runtime)?;
    let residual = storage_fleet::ResidualTrace::new(c.residual())?;
    let (_, w) = create(ctx, "residual.csv")?;
    residual.write_csv(w).map_err(runtime)?;
    Ok(format!("synth: {} h, seed {}", residual.len(), params.seed))
}

pub fn stats(cfg: &ScenarioConfig, ctx: &Context) -> Result<String, CliError> {
    let trace = cfg.residual_trace()?;
    let lags: Vec<usize> = (0..=cfg.stats.max_lag_h).collect();
    let s = trace_stats(trace.values(), cfg.stats.bins, &lags)?;
    let (_, w) = create(ctx, "histogram.csv")?;
    s.write_histogram_csv(w).map_err(runtime)?;
    let (_, w) = create(ctx, "acf.csv")?;
    s.write_acf_csv(w).map_err(runtime)?;
    let lag1 = s.acf.get(1).map_or(f64::NAN, |a| a.1);
    Ok(format!(
        "stats: {} h, lag-1 autocorrelation {lag1:.4}",
        trace.len()
    ))
}
