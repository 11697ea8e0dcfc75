//! Capital costs, reliability checks and dimensioning searches.
//!
//! Searches rely on unserved energy being nonincreasing in each store
//! dimension and bisect on that basis. Dimensions are searched in the
//! servable-energy convention and reported (and priced) in the convention
//! given by [`SizingOptions::report_convention`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{simulate_summary, EngineError, SimResult, SimSummary};
use crate::fleet::{convention_factor, FleetState, LossConvention, StoreSpec, SLACK};
use crate::policies::{PolicyKind, ValueParams};
use crate::traces::ResidualTrace;

const KILO: f64 = 1e3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SizingError {
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Capital prices of one technology.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TechnologyCost {
    pub capacity_usd_per_kwh: f64,
    pub output_power_usd_per_kw: f64,
    pub input_power_usd_per_kw: f64,
}

impl TechnologyCost {
    /// Long-duration hydrogen storage.
    pub const HYDROGEN: Self = Self::new(0.8, 429.0, 858.0);
    /// Adiabatic compressed air.
    pub const ACAES: Self = Self::new(9.0, 200.0, 200.0);
    /// Li-ion batteries; power is priced on the input side only.
    pub const LI_ION: Self = Self::new(100.0, 0.0, 180.0);

    pub const fn new(capacity: f64, output: f64, input: f64) -> Self {
        Self {
            capacity_usd_per_kwh: capacity,
            output_power_usd_per_kw: output,
            input_power_usd_per_kw: input,
        }
    }

    pub fn validate(&self) -> Result<(), SizingError> {
        let prices = [
            self.capacity_usd_per_kwh,
            self.output_power_usd_per_kw,
            self.input_power_usd_per_kw,
        ];
        if prices.iter().all(|p| p.is_finite() && *p >= 0.0) {
            Ok(())
        } else {
            Err(SizingError::InvalidInput(format!(
                "prices must be finite and nonnegative: {prices:?}"
            )))
        }
    }
}

/// Dimensions of one store, in MWh and MW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoreDims {
    pub capacity_mwh: f64,
    pub output_power_mw: f64,
    pub input_power_mw: f64,
}

impl StoreDims {
    pub const ZERO: Self = Self::new(0.0, 0.0, 0.0);

    pub const fn new(capacity_mwh: f64, output_power_mw: f64, input_power_mw: f64) -> Self {
        Self {
            capacity_mwh,
            output_power_mw,
            input_power_mw,
        }
    }

    fn key(&self) -> [f64; 3] {
        [self.capacity_mwh, self.output_power_mw, self.input_power_mw]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoreCost {
    pub capacity_usd: f64,
    pub output_power_usd: f64,
    pub input_power_usd: f64,
    pub total_usd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub stores: Vec<StoreCost>,
    pub total_usd: f64,
}

pub fn store_cost(dims: &StoreDims, cost: &TechnologyCost) -> StoreCost {
    let capacity_usd = dims.capacity_mwh * KILO * cost.capacity_usd_per_kwh;
    let output_power_usd = dims.output_power_mw * KILO * cost.output_power_usd_per_kw;
    let input_power_usd = dims.input_power_mw * KILO * cost.input_power_usd_per_kw;
    StoreCost {
        capacity_usd,
        output_power_usd,
        input_power_usd,
        total_usd: capacity_usd + output_power_usd + input_power_usd,
    }
}

/// Price each store's dimensions with the matching technology.
pub fn fleet_cost(
    dims: &[StoreDims],
    costs: &[TechnologyCost],
) -> Result<CostBreakdown, SizingError> {
    if dims.len() != costs.len() {
        return Err(SizingError::InvalidInput(format!(
            "{} stores but {} price rows",
            dims.len(),
            costs.len()
        )));
    }
    let stores: Vec<StoreCost> = dims
        .iter()
        .zip(costs)
        .map(|(d, c)| store_cost(d, c))
        .collect();
    let total_usd = stores.iter().map(|c| c.total_usd).sum();
    Ok(CostBreakdown { stores, total_usd })
}

/// Maximum tolerated average unserved energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityStandard {
    pub max_unserved_mwh_per_year: f64,
}

impl ReliabilityStandard {
    /// 24 GWh per year.
    pub const GB: Self = Self {
        max_unserved_mwh_per_year: 24_000.0,
    };

    pub fn new(max_unserved_mwh_per_year: f64) -> Self {
        Self {
            max_unserved_mwh_per_year,
        }
    }

    pub fn admits(&self, total_unserved_mwh: f64, years: f64) -> bool {
        let rate = total_unserved_mwh / years;
        rate <= self.max_unserved_mwh_per_year * (1.0 + 1e-12) + 1e-9
    }
}

pub fn check_reliability(result: &SimResult, years: f64, standard: &ReliabilityStandard) -> bool {
    standard.admits(result.total_unserved(), years)
}

/// Smallest `x` in `[lo, hi]` with `feasible(x)`, to within `tol`, for a
/// monotone predicate with `feasible(hi)` true. The result is always a point
/// that was found feasible.
pub fn bisect_min<F>(lo: f64, hi: f64, tol: f64, mut feasible: F) -> Result<f64, SizingError>
where
    F: FnMut(f64) -> Result<bool, SizingError>,
{
    if feasible(lo)? {
        return Ok(lo);
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if feasible(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Whether a single store with unconstrained rates, starting at `initial`,
/// meets every hour of demand in `trace`.
pub fn single_store_serves_all(
    trace: &[f64],
    efficiency: f64,
    capacity: f64,
    initial: f64,
) -> bool {
    let mut s = initial;
    for &re in trace {
        if re >= 0.0 {
            s = (s + efficiency * re).min(capacity);
        } else {
            s += re;
            if s < -SLACK {
                return false;
            }
        }
    }
    true
}

/// Minimal capacity of a rate-unconstrained single store that starts full and
/// never leaves demand unserved, and the minimal starting level for that
/// capacity. Both are upper brackets within `tol` of the true minima.
pub fn min_single_store_capacity(
    trace: &[f64],
    efficiency: f64,
    tol: f64,
) -> Result<(f64, f64), SizingError> {
    if !(efficiency > 0.0 && efficiency <= 1.0) {
        return Err(SizingError::InvalidInput(format!(
            "efficiency {efficiency} outside (0, 1]"
        )));
    }
    if !(tol > 0.0) {
        return Err(SizingError::InvalidInput(
            "tolerance must be positive".into(),
        ));
    }
    let demand: f64 = trace.iter().map(|r| (-r).max(0.0)).sum();
    if demand == 0.0 {
        return Ok((0.0, 0.0));
    }
    if !single_store_serves_all(trace, efficiency, demand, demand) {
        return Err(SizingError::Infeasible(format!(
            "a full store of {demand} MWh cannot cover the demand"
        )));
    }
    let e_min = bisect_min(0.0, demand, tol, |e| {
        Ok(single_store_serves_all(trace, efficiency, e, e))
    })?;
    let s0_min = bisect_min(0.0, e_min, tol, |s0| {
        Ok(single_store_serves_all(trace, efficiency, e_min, s0))
    })?;
    Ok((e_min, s0_min))
}

/// Tolerances, grids and reporting conventions shared by the searches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SizingOptions {
    pub energy_tol_mwh: f64,
    pub power_tol_mw: f64,
    pub q_grid_points: usize,
    /// Lowest point of the input-power grid as a fraction of the mean surplus.
    pub q_grid_low_fraction: f64,
    pub report_convention: LossConvention,
    pub lambda_values_long: Vec<f64>,
    pub lambda_values_secondary: Vec<f64>,
}

impl Default for SizingOptions {
    fn default() -> Self {
        Self {
            energy_tol_mwh: 1.0,
            power_tol_mw: 100.0,
            q_grid_points: 32,
            q_grid_low_fraction: 0.1,
            report_convention: LossConvention::Split,
            lambda_values_long: vec![3e-4, 1e-3, 3e-3],
            lambda_values_secondary: vec![1e-2, 3e-2, 0.1],
        }
    }
}

/// Default per-store decay-rate values (per hour) for tuning.
pub const DEFAULT_LAMBDA_VALUES: [f64; 8] = [0.0, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 0.1];

/// Every combination of `values` across `stores` stores, in lexicographic
/// order.
pub fn cartesian_lambda_grid(values: &[f64], stores: usize) -> Vec<Vec<f64>> {
    let mut grid = vec![Vec::new()];
    for _ in 0..stores {
        grid = grid
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    grid
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

fn nearly_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Grid search for the decay rates minimizing total unserved energy. Ties
/// go to the lexicographically smallest vector.
pub fn tune_lambdas(
    fleet: &[StoreSpec],
    initial: &FleetState,
    trace: &ResidualTrace,
    grid: &[Vec<f64>],
) -> Result<ValueParams, SizingError> {
    if grid.is_empty() {
        return Err(SizingError::InvalidInput("empty lambda grid".into()));
    }
    let scores: Vec<(Vec<f64>, f64)> = grid
        .par_iter()
        .map(|l| {
            let policy = PolicyKind::ValueFunction(ValueParams { lambdas: l.clone() });
            let s = simulate_summary(fleet, initial, trace, &policy)?;
            Ok((l.clone(), s.total_unserved_mwh))
        })
        .collect::<Result<_, EngineError>>()?;
    let mut best = &scores[0];
    for cand in &scores[1..] {
        let better = if nearly_equal(cand.1, best.1) {
            lex_cmp(&cand.0, &best.0).is_lt()
        } else {
            cand.1 < best.1
        };
        if better {
            best = cand;
        }
    }
    Ok(ValueParams {
        lambdas: best.0.clone(),
    })
}

/// A technology to be dimensioned: efficiency plus prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Technology {
    pub name: String,
    pub efficiency: f64,
    pub cost: TechnologyCost,
}

impl Technology {
    pub fn new(name: impl Into<String>, efficiency: f64, cost: TechnologyCost) -> Self {
        Self {
            name: name.into(),
            efficiency,
            cost,
        }
    }
}

/// A fixed-size store paired with its prices. `spec` is in the servable
/// (input-side) convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricedStore {
    pub spec: StoreSpec,
    pub cost: TechnologyCost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizedStore {
    pub name: String,
    pub efficiency: f64,
    /// In the reporting convention.
    pub capacity_mwh: f64,
    pub output_power_mw: f64,
    pub input_power_mw: f64,
    pub cost: StoreCost,
    pub served_mwh_per_year: f64,
}

/// One evaluated point of the long-store input-power grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub input_power_mw: f64,
    /// Minimal capacity in the servable convention, `None` if no capacity
    /// meets the standard at this input power.
    pub capacity_mwh: Option<f64>,
    pub total_cost_usd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizingResult {
    pub convention: LossConvention,
    pub stores: Vec<SizedStore>,
    pub total_cost_usd: f64,
    /// `None` for a pure cost report of fixed dimensions.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub annual_unserved_mwh: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cross_charged_mwh_per_year: Option<f64>,
    pub lambdas: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub grid: Vec<GridPoint>,
}

impl SizingResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sizing result serializes")
    }
}

/// Unserved-energy evaluation against a fixed trace, policy and standard.
struct Evaluator<'a> {
    trace: &'a ResidualTrace,
    standard: ReliabilityStandard,
    years: f64,
}

impl Evaluator<'_> {
    fn new<'a>(trace: &'a ResidualTrace, standard: &ReliabilityStandard) -> Evaluator<'a> {
        Evaluator {
            trace,
            standard: *standard,
            years: trace.years(),
        }
    }

    fn run(&self, fleet: &[StoreSpec], lambdas: &[f64]) -> Result<SimSummary, SizingError> {
        if fleet.is_empty() {
            return Ok(SimSummary {
                hours: self.trace.len(),
                total_unserved_mwh: self.trace.total_deficit(),
                total_spill_mwh: self.trace.values().iter().map(|r| r.max(0.0)).sum(),
                served_external_mwh: vec![],
                cross_charged_mwh: 0.0,
                final_state: FleetState::new(vec![]),
            });
        }
        let policy = PolicyKind::ValueFunction(ValueParams {
            lambdas: lambdas.to_vec(),
        });
        Ok(simulate_summary(
            fleet,
            &FleetState::full(fleet),
            self.trace,
            &policy,
        )?)
    }

    fn meets(&self, fleet: &[StoreSpec], lambdas: &[f64]) -> Result<bool, SizingError> {
        let s = self.run(fleet, lambdas)?;
        Ok(self.standard.admits(s.total_unserved_mwh, self.years))
    }
}

fn unlimited_capacity(trace: &ResidualTrace) -> f64 {
    trace.total_deficit().max(1.0) * 2.0
}

/// Smallest total output power meeting the standard when each store's power
/// is the total scaled by its share of the template's output power. Capacity
/// and input power of the template are used as given. Stores start full and
/// are scheduled by the value-function policy with `lambdas`.
pub fn min_required_output_power(
    trace: &ResidualTrace,
    template: &[StoreSpec],
    lambdas: &[f64],
    standard: &ReliabilityStandard,
    tol_mw: f64,
) -> Result<f64, SizingError> {
    let total: f64 = template.iter().map(|s| s.output_power_mw).sum();
    if template.is_empty() || !(total.is_finite() && total > 0.0) {
        return Err(SizingError::InvalidInput(
            "template output powers must be finite and positive".into(),
        ));
    }
    let eval = Evaluator::new(trace, standard);
    let build = |p: f64| -> Vec<StoreSpec> {
        template
            .iter()
            .map(|s| {
                let mut s = s.clone();
                s.output_power_mw = p * s.output_power_mw / total;
                s
            })
            .collect()
    };
    min_power_search(&eval, trace.max_deficit(), tol_mw, |p| {
        if p <= 0.0 {
            eval.meets(&[], &[])
        } else {
            eval.meets(&build(p), lambdas)
        }
    })
}

fn min_power_search<F>(
    eval: &Evaluator<'_>,
    max_power: f64,
    tol: f64,
    feasible: F,
) -> Result<f64, SizingError>
where
    F: FnMut(f64) -> Result<bool, SizingError>,
{
    let mut feasible = feasible;
    if max_power <= 0.0 {
        return Ok(0.0);
    }
    if !feasible(max_power)? {
        return Err(SizingError::Infeasible(format!(
            "standard of {} MWh/yr not met even with {max_power} MW of output power over {} years",
            eval.standard.max_unserved_mwh_per_year, eval.years
        )));
    }
    bisect_min(0.0, max_power, tol, feasible)
}

/// Geometric grid of `n` points from `lo` to `hi`.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![hi],
        _ => {
            let ratio = (hi / lo).powf(1.0 / (n - 1) as f64);
            (0..n)
                .map(|k| {
                    if k + 1 == n {
                        hi
                    } else {
                        lo * ratio.powi(k as i32)
                    }
                })
                .collect()
        }
    }
}

fn input_power_grid(trace: &ResidualTrace, opts: &SizingOptions) -> Vec<f64> {
    let hi = trace.max_surplus();
    let lo = opts.q_grid_low_fraction * trace.mean_surplus();
    if !(hi > 0.0) {
        // no surplus to absorb; input power is irrelevant
        return vec![opts.power_tol_mw.max(f64::MIN_POSITIVE)];
    }
    if !(lo > 0.0) || lo >= hi {
        return vec![hi];
    }
    geometric_grid(lo, hi, opts.q_grid_points.max(1))
}

/// Best long-store dimensions next to fixed secondary stores for one λ.
struct LongStoreSearch<'a> {
    eval: Evaluator<'a>,
    long: &'a Technology,
    secondary: &'a [PricedStore],
    lambdas: Vec<f64>,
    opts: &'a SizingOptions,
}

struct LongStoreOptimum {
    dims: StoreDims,
    cost_usd: f64,
    grid: Vec<GridPoint>,
}

impl LongStoreSearch<'_> {
    fn fleet(&self, long: Option<StoreSpec>) -> (Vec<StoreSpec>, Vec<f64>) {
        let mut fleet = Vec::with_capacity(self.secondary.len() + 1);
        let mut lambdas = Vec::with_capacity(self.secondary.len() + 1);
        if let Some(l) = long {
            fleet.push(l);
            lambdas.push(self.lambdas[0]);
        }
        for (s, &l) in self.secondary.iter().zip(&self.lambdas[1..]) {
            fleet.push(s.spec.clone());
            lambdas.push(l);
        }
        (fleet, lambdas)
    }

    fn long_spec(&self, e: f64, p: f64, q: f64) -> StoreSpec {
        StoreSpec::new(self.long.name.clone(), e, p, q, self.long.efficiency)
    }

    fn meets(&self, long: Option<StoreSpec>) -> Result<bool, SizingError> {
        let (fleet, lambdas) = self.fleet(long);
        self.eval.meets(&fleet, &lambdas)
    }

    fn secondary_cost(&self) -> f64 {
        self.secondary
            .iter()
            .map(|s| {
                store_cost(&report_dims(&s.spec, self.opts.report_convention), &s.cost).total_usd
            })
            .sum()
    }

    fn run(&self) -> Result<Option<LongStoreOptimum>, SizingError> {
        if self.meets(None)? {
            return Ok(Some(LongStoreOptimum {
                dims: StoreDims::ZERO,
                cost_usd: self.secondary_cost(),
                grid: vec![],
            }));
        }
        let e_big = unlimited_capacity(self.eval.trace);
        let p_star = match min_power_search(
            &self.eval,
            self.eval.trace.max_deficit(),
            self.opts.power_tol_mw,
            |p| {
                if p <= 0.0 {
                    self.meets(None)
                } else {
                    self.meets(Some(self.long_spec(e_big, p, f64::INFINITY)))
                }
            },
        ) {
            Ok(p) => p,
            Err(SizingError::Infeasible(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let q_grid = input_power_grid(self.eval.trace, self.opts);
        let sec_cost = self.secondary_cost();
        let grid: Vec<GridPoint> = q_grid
            .par_iter()
            .map(|&q| {
                let capacity = self.min_capacity(p_star, q, e_big)?;
                let total_cost_usd = capacity.map(|e| {
                    let dims =
                        report_dims(&self.long_spec(e, p_star, q), self.opts.report_convention);
                    store_cost(&dims, &self.long.cost).total_usd + sec_cost
                });
                Ok(GridPoint {
                    input_power_mw: q,
                    capacity_mwh: capacity,
                    total_cost_usd,
                })
            })
            .collect::<Result<_, SizingError>>()?;
        let best = grid
            .iter()
            .filter_map(|g| Some((g.total_cost_usd?, g.capacity_mwh?, g.input_power_mw)))
            .min_by(|a, b| {
                a.0.total_cmp(&b.0)
                    .then(a.1.total_cmp(&b.1))
                    .then(a.2.total_cmp(&b.2))
            });
        Ok(best.map(|(cost_usd, e, q)| LongStoreOptimum {
            dims: StoreDims::new(e, p_star, q),
            cost_usd,
            grid,
        }))
    }

    /// Minimal long capacity at output power `p` and input power `q`, or
    /// `None` if even a very large store fails the standard.
    fn min_capacity(&self, p: f64, q: f64, e_big: f64) -> Result<Option<f64>, SizingError> {
        let mut hi = e_big;
        let mut ok = false;
        for _ in 0..4 {
            if self.meets(Some(self.long_spec(hi, p, q)))? {
                ok = true;
                break;
            }
            hi *= 4.0;
        }
        if !ok {
            return Ok(None);
        }
        let tol = self.opts.energy_tol_mwh;
        let e = bisect_min(0.0, hi, tol, |e| {
            if e <= 0.0 {
                self.meets(None)
            } else {
                self.meets(Some(self.long_spec(e, p, q)))
            }
        })?;
        Ok(Some(e))
    }
}

fn report_dims(spec: &StoreSpec, convention: LossConvention) -> StoreDims {
    let k = convention_factor(spec.efficiency, LossConvention::Input, convention);
    StoreDims::new(
        spec.capacity_mwh * k,
        spec.output_power_mw,
        spec.input_power_mw,
    )
}

fn sized_store(
    spec: &StoreSpec,
    cost: &TechnologyCost,
    convention: LossConvention,
    served_mwh_per_year: f64,
) -> SizedStore {
    let dims = report_dims(spec, convention);
    SizedStore {
        name: spec.name.clone(),
        efficiency: spec.efficiency,
        capacity_mwh: dims.capacity_mwh,
        output_power_mw: dims.output_power_mw,
        input_power_mw: dims.input_power_mw,
        cost: store_cost(&dims, cost),
        served_mwh_per_year,
    }
}

fn zero_store(tech: &Technology) -> SizedStore {
    SizedStore {
        name: tech.name.clone(),
        efficiency: tech.efficiency,
        capacity_mwh: 0.0,
        output_power_mw: 0.0,
        input_power_mw: 0.0,
        cost: store_cost(&StoreDims::ZERO, &tech.cost),
        served_mwh_per_year: 0.0,
    }
}

/// Re-simulate a chosen configuration and assemble the report.
fn finish(
    eval: &Evaluator<'_>,
    long: &Technology,
    long_dims: StoreDims,
    secondary: &[PricedStore],
    lambdas: &[f64],
    grid: Vec<GridPoint>,
    convention: LossConvention,
) -> Result<SizingResult, SizingError> {
    let has_long = long_dims.capacity_mwh > 0.0;
    let long_spec = StoreSpec::new(
        long.name.clone(),
        long_dims.capacity_mwh,
        long_dims.output_power_mw,
        long_dims.input_power_mw,
        long.efficiency,
    );
    let mut fleet = Vec::new();
    let mut lam = Vec::new();
    if has_long {
        fleet.push(long_spec.clone());
        lam.push(lambdas[0]);
    }
    for (s, &l) in secondary.iter().zip(&lambdas[1..]) {
        fleet.push(s.spec.clone());
        lam.push(l);
    }
    let summary = eval.run(&fleet, &lam)?;
    let years = eval.years;
    let mut served = summary.served_external_mwh.iter().map(|s| s / years);
    let mut stores = Vec::with_capacity(secondary.len() + 1);
    if has_long {
        stores.push(sized_store(
            &long_spec,
            &long.cost,
            convention,
            served.next().unwrap_or(0.0),
        ));
    } else {
        stores.push(zero_store(long));
    }
    for s in secondary {
        stores.push(sized_store(
            &s.spec,
            &s.cost,
            convention,
            served.next().unwrap_or(0.0),
        ));
    }
    let total_cost_usd = stores.iter().map(|s| s.cost.total_usd).sum();
    Ok(SizingResult {
        convention,
        stores,
        total_cost_usd,
        annual_unserved_mwh: Some(summary.total_unserved_mwh / years),
        cross_charged_mwh_per_year: Some(summary.cross_charged_mwh / years),
        lambdas: lambdas.to_vec(),
        grid,
    })
}

/// Cost-minimal single store of the given technology: output power at its
/// minimum, then for each input power on the grid the minimal capacity.
pub fn optimize_single_store(
    trace: &ResidualTrace,
    tech: &Technology,
    standard: &ReliabilityStandard,
    opts: &SizingOptions,
) -> Result<SizingResult, SizingError> {
    optimize_with_secondary(trace, tech, &[], &[0.0], standard, opts)
}

fn optimize_with_secondary(
    trace: &ResidualTrace,
    long: &Technology,
    secondary: &[PricedStore],
    lambdas: &[f64],
    standard: &ReliabilityStandard,
    opts: &SizingOptions,
) -> Result<SizingResult, SizingError> {
    let best =
        long_store_optimum(trace, long, secondary, lambdas, standard, opts)?.ok_or_else(|| {
            SizingError::Infeasible("no long-store dimensions meet the standard".into())
        })?;
    let eval = Evaluator::new(trace, standard);
    finish(
        &eval,
        long,
        best.dims,
        secondary,
        lambdas,
        best.grid,
        opts.report_convention,
    )
}

fn long_store_optimum(
    trace: &ResidualTrace,
    long: &Technology,
    secondary: &[PricedStore],
    lambdas: &[f64],
    standard: &ReliabilityStandard,
    opts: &SizingOptions,
) -> Result<Option<LongStoreOptimum>, SizingError> {
    long.cost.validate()?;
    if !(long.efficiency > 0.0 && long.efficiency <= 1.0) {
        return Err(SizingError::InvalidInput(format!(
            "efficiency {} outside (0, 1]",
            long.efficiency
        )));
    }
    for s in secondary {
        s.cost.validate()?;
        crate::fleet::validate_spec(&s.spec).map_err(EngineError::from)?;
    }
    if lambdas.len() != secondary.len() + 1 {
        return Err(SizingError::InvalidInput(format!(
            "{} decay rates for {} stores",
            lambdas.len(),
            secondary.len() + 1
        )));
    }
    LongStoreSearch {
        eval: Evaluator::new(trace, standard),
        long,
        secondary,
        lambdas: lambdas.to_vec(),
        opts,
    }
    .run()
}

/// Search over secondary-store candidates and decay rates, sizing the long
/// store for each, and return the cheapest configuration. An empty
/// candidate means no secondary store.
pub fn optimize_fleet(
    trace: &ResidualTrace,
    long: &Technology,
    secondary_grid: &[Vec<PricedStore>],
    standard: &ReliabilityStandard,
    opts: &SizingOptions,
) -> Result<SizingResult, SizingError> {
    if secondary_grid.is_empty() {
        return Err(SizingError::InvalidInput(
            "empty secondary-store grid".into(),
        ));
    }
    let mut jobs: Vec<(usize, Vec<f64>)> = Vec::new();
    for (c, cand) in secondary_grid.iter().enumerate() {
        if cand.is_empty() {
            jobs.push((c, vec![0.0]));
            continue;
        }
        for l_long in &opts.lambda_values_long {
            for rest in cartesian_lambda_grid(&opts.lambda_values_secondary, cand.len()) {
                let mut l = vec![*l_long];
                l.extend(rest);
                jobs.push((c, l));
            }
        }
    }
    let outcomes: Vec<Option<(usize, Vec<f64>, LongStoreOptimum)>> = jobs
        .into_iter()
        .map(|(c, l)| {
            let r = long_store_optimum(trace, long, &secondary_grid[c], &l, standard, opts)?;
            Ok(r.map(|o| (c, l, o)))
        })
        .collect::<Result<_, SizingError>>()?;
    let best = outcomes
        .into_iter()
        .flatten()
        .min_by(|a, b| {
            a.2.cost_usd
                .total_cmp(&b.2.cost_usd)
                .then_with(|| lex_cmp(&a.2.dims.key(), &b.2.dims.key()))
                .then(a.0.cmp(&b.0))
                .then_with(|| lex_cmp(&a.1, &b.1))
        })
        .ok_or_else(|| {
            SizingError::Infeasible("no candidate configuration meets the standard".into())
        })?;
    let (c, lambdas, opt) = best;
    let eval = Evaluator::new(trace, standard);
    finish(
        &eval,
        long,
        opt.dims,
        &secondary_grid[c],
        &lambdas,
        opt.grid,
        opts.report_convention,
    )
}

/// Price fixed dimensions (already in the reporting convention) without any
/// search.
pub fn cost_report(
    stores: &[(String, f64, StoreDims, TechnologyCost)],
    convention: LossConvention,
) -> SizingResult {
    let stores: Vec<SizedStore> = stores
        .iter()
        .map(|(name, eta, dims, cost)| SizedStore {
            name: name.clone(),
            efficiency: *eta,
            capacity_mwh: dims.capacity_mwh,
            output_power_mw: dims.output_power_mw,
            input_power_mw: dims.input_power_mw,
            cost: store_cost(dims, cost),
            served_mwh_per_year: 0.0,
        })
        .collect();
    let total_cost_usd = stores.iter().map(|s| s.cost.total_usd).sum();
    SizingResult {
        convention,
        stores,
        total_cost_usd,
        annual_unserved_mwh: None,
        cross_charged_mwh_per_year: None,
        lambdas: vec![],
        grid: vec![],
    }
}
