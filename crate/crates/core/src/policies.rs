//! Non-anticipatory scheduling policies.
//!
//! Each policy maps the levels at the start of an hour and the residual
//! energy of that hour to a [`StepDecision`]. All three policies are greedy:
//! energy is spilled only when every store is charging at its limit, and
//! demand goes unserved only when every store is discharging at its limit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fleet::{FleetState, StepDecision, StoreSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("expected {expected} decay rates, got {got}")]
    LambdaCount { expected: usize, got: usize },
    #[error("decay rate {0} must be finite and nonnegative")]
    NegativeLambda(f64),
}

/// Per-store decay rates (per hour) of the marginal value of stored energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueParams {
    pub lambdas: Vec<f64>,
}

impl ValueParams {
    pub fn new(lambdas: Vec<f64>) -> Result<Self, PolicyError> {
        if let Some(&bad) = lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(PolicyError::NegativeLambda(bad));
        }
        Ok(Self { lambdas })
    }

    pub fn uniform(lambda: f64, stores: usize) -> Self {
        Self {
            lambdas: vec![lambda; stores],
        }
    }

    pub fn validate(&self, stores: usize) -> Result<(), PolicyError> {
        if self.lambdas.len() != stores {
            return Err(PolicyError::LambdaCount {
                expected: stores,
                got: self.lambdas.len(),
            });
        }
        Self::new(self.lambdas.clone()).map(|_| ())
    }
}

/// A scheduling rule applied independently at every hour.
pub trait Scheduler {
    fn decide(&self, state: &FleetState, re: f64, fleet: &[StoreSpec]) -> StepDecision;

    /// Reject parameters that do not fit a fleet of `stores` stores.
    fn check(&self, _stores: usize) -> Result<(), PolicyError> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PolicyKind {
    ValueFunction(ValueParams),
    Ggddf,
    Grtef,
}

impl PolicyKind {
    pub fn validate(&self, stores: usize) -> Result<(), PolicyError> {
        match self {
            PolicyKind::ValueFunction(p) => p.validate(stores),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::ValueFunction(_) => "value",
            PolicyKind::Ggddf => "ggddf",
            PolicyKind::Grtef => "grtef",
        }
    }
}

impl Scheduler for PolicyKind {
    fn decide(&self, state: &FleetState, re: f64, fleet: &[StoreSpec]) -> StepDecision {
        match self {
            PolicyKind::ValueFunction(p) => schedule_value_lp(state, re, fleet, p),
            PolicyKind::Ggddf => schedule_ggddf(state, re, fleet),
            PolicyKind::Grtef => schedule_grtef(state, re, fleet),
        }
    }

    fn check(&self, stores: usize) -> Result<(), PolicyError> {
        self.validate(stores)
    }
}

/// Marginal values `exp(-lambda_i * s_i / P_i)`, each in (0, 1].
pub fn value_derivatives(
    state: &FleetState,
    fleet: &[StoreSpec],
    params: &ValueParams,
) -> Vec<f64> {
    state
        .levels
        .iter()
        .zip(fleet)
        .zip(&params.lambdas)
        .map(|((&s, spec), &lambda)| {
            if lambda == 0.0 {
                1.0
            } else {
                (-lambda * s / spec.output_power_mw).exp()
            }
        })
        .collect()
}

/// `x` rounded to 40 mantissa bits. Priority keys that agree to about twelve
/// significant digits compare equal, so ties that hold in exact arithmetic
/// are still broken by index after rounding noise.
pub(crate) fn snap(x: f64) -> f64 {
    const DROP: u32 = 12;
    if !x.is_finite() {
        return x;
    }
    let bits = x.to_bits();
    f64::from_bits(((bits + (1 << (DROP - 1))) >> DROP) << DROP)
}

/// Store indices sorted by `key`, ties broken by ascending index.
pub(crate) fn priority_order(keys: &[f64], descending: bool) -> Vec<usize> {
    let keys: Vec<f64> = keys.iter().map(|&k| snap(k)).collect();
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| {
        let ord = keys[a].total_cmp(&keys[b]);
        let ord = if descending { ord.reverse() } else { ord };
        ord.then(a.cmp(&b))
    });
    order
}

/// Fill stores in `order` from `available` external energy. Returns the
/// energy left over.
pub(crate) fn charge_in_order(
    levels: &[f64],
    available: f64,
    fleet: &[StoreSpec],
    order: &[usize],
    rates: &mut [f64],
) -> f64 {
    let mut remaining = available;
    for &i in order {
        if remaining <= 0.0 {
            break;
        }
        let spec = &fleet[i];
        let headroom = spec.max_charge(levels[i]).max(0.0);
        // external energy that would saturate the store
        let draw_cap = spec.input_power_mw.min(headroom / spec.efficiency);
        if remaining >= draw_cap {
            rates[i] = headroom;
            remaining -= draw_cap;
        } else {
            rates[i] = spec.efficiency * remaining;
            remaining = 0.0;
        }
    }
    remaining.max(0.0)
}

/// Serve `demand` from stores in `order`. Returns the demand left unmet.
pub(crate) fn discharge_in_order(
    levels: &[f64],
    demand: f64,
    fleet: &[StoreSpec],
    order: &[usize],
    rates: &mut [f64],
) -> f64 {
    let mut remaining = demand;
    for &i in order {
        if remaining <= 0.0 {
            break;
        }
        let cap = fleet[i].max_discharge(levels[i]).max(0.0);
        if remaining >= cap {
            rates[i] = -cap;
            remaining -= cap;
        } else {
            rates[i] = -remaining;
            remaining = 0.0;
        }
    }
    remaining.max(0.0)
}

/// Greedy external allocation with separate charge and discharge orders.
fn allocate(
    levels: &[f64],
    re: f64,
    fleet: &[StoreSpec],
    charge_order: impl FnOnce() -> Vec<usize>,
    discharge_order: impl FnOnce() -> Vec<usize>,
) -> StepDecision {
    let mut rates = vec![0.0; fleet.len()];
    if re >= 0.0 {
        let spill = charge_in_order(levels, re, fleet, &charge_order(), &mut rates);
        StepDecision {
            rates,
            spill,
            unserved: 0.0,
        }
    } else {
        let unserved = discharge_in_order(levels, -re, fleet, &discharge_order(), &mut rates);
        StepDecision {
            rates,
            spill: 0.0,
            unserved,
        }
    }
}

/// Value-function scheduler: external allocation by charging priority
/// (descending `eta*v`) or discharging priority (ascending `v`), followed by
/// cross-charging from the lowest-value store into the highest
/// `eta*v` store while `v_supplier < eta_receiver * v_receiver`.
pub fn schedule_value_lp(
    state: &FleetState,
    re: f64,
    fleet: &[StoreSpec],
    params: &ValueParams,
) -> StepDecision {
    let v = value_derivatives(state, fleet, params);
    let charge_key: Vec<f64> = v.iter().zip(fleet).map(|(v, s)| v * s.efficiency).collect();
    let mut decision = allocate(
        &state.levels,
        re,
        fleet,
        || priority_order(&charge_key, true),
        || priority_order(&v, false),
    );
    cross_charge(&state.levels, fleet, &v, &charge_key, &mut decision.rates);
    decision
}

/// Move energy between stores while the marginal-value condition holds.
/// Returns the external-side energy withdrawn from suppliers.
///
/// Rates never change sign: suppliers stay at `r <= 0` and receivers at
/// `r >= 0`, so the step imbalance is unchanged.
pub(crate) fn cross_charge(
    levels: &[f64],
    fleet: &[StoreSpec],
    v: &[f64],
    charge_key: &[f64],
    rates: &mut [f64],
) -> f64 {
    let n = fleet.len();
    let mut moved = 0.0;
    // every transfer saturates a supplier or a receiver
    for _ in 0..(2 * n + 1) {
        let supplier = (0..n)
            .filter(|&i| rates[i] <= 0.0 && rates[i] > -fleet[i].max_discharge(levels[i]))
            .min_by(|&a, &b| snap(v[a]).total_cmp(&snap(v[b])).then(a.cmp(&b)));
        let Some(i) = supplier else { break };
        let receiver = (0..n)
            .filter(|&j| j != i && rates[j] >= 0.0 && rates[j] < fleet[j].max_charge(levels[j]))
            .min_by(|&a, &b| {
                snap(charge_key[b])
                    .total_cmp(&snap(charge_key[a]))
                    .then(a.cmp(&b))
            });
        let Some(j) = receiver else { break };
        if !(v[i] < charge_key[j]) {
            break;
        }
        let (si, sj) = (&fleet[i], &fleet[j]);
        let supply = rates[i] + si.max_discharge(levels[i]);
        let accept = (sj.max_charge(levels[j]) - rates[j]) / sj.efficiency;
        if supply <= accept {
            rates[i] = -si.max_discharge(levels[i]);
            rates[j] = (rates[j] + sj.efficiency * supply).min(sj.max_charge(levels[j]));
            moved += supply;
        } else {
            rates[i] -= accept;
            rates[j] = sj.max_charge(levels[j]);
            moved += accept;
        }
    }
    moved
}

/// Greatest discharge duration first: discharge in descending `s/P`; charge in
/// descending `(E - s)/P`. No cross-charging.
pub fn schedule_ggddf(state: &FleetState, re: f64, fleet: &[StoreSpec]) -> StepDecision {
    let levels = &state.levels;
    allocate(
        levels,
        re,
        fleet,
        || {
            let deficit: Vec<f64> = levels
                .iter()
                .zip(fleet)
                .map(|(s, f)| (f.capacity_mwh - s) / f.output_power_mw)
                .collect();
            priority_order(&deficit, true)
        },
        || {
            let duration: Vec<f64> = levels
                .iter()
                .zip(fleet)
                .map(|(s, f)| s / f.output_power_mw)
                .collect();
            priority_order(&duration, true)
        },
    )
}

/// Greatest round-trip efficiency first, for both charging and discharging.
/// No cross-charging.
pub fn schedule_grtef(state: &FleetState, re: f64, fleet: &[StoreSpec]) -> StepDecision {
    let eta: Vec<f64> = fleet.iter().map(|s| s.efficiency).collect();
    let order = priority_order(&eta, true);
    allocate(&state.levels, re, fleet, || order.clone(), || order.clone())
}
