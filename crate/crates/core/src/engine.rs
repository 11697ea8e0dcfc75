//! Time-stepping over a residual trace, cumulative unserved/spilled energy,
//! the power-only lower bound, and tools that check or repair whole policy
//! trajectories.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fleet::{
    apply_rates, check_rate, clamp_level, imbalance_of, validate_fleet, FleetError, FleetState,
    StepDecision, StoreSpec, SLACK,
};
use crate::policies::{PolicyError, Scheduler};
use crate::traces::ResidualTrace;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("invalid fleet: {0}")]
    Fleet(#[from] FleetError),
    #[error("invalid policy: {0}")]
    Policy(#[from] PolicyError),
    #[error("hour {hour}: {source}")]
    Step { hour: usize, source: FleetError },
    #[error("hour {hour}: store {store} level outside its capacity bounds")]
    CapacityViolation { hour: usize, store: usize },
    #[error("hour {hour}: store {store} rate outside its power bounds")]
    RateViolation { hour: usize, store: usize },
    #[error("hour {hour}: stores drew more than the available surplus")]
    OverdrawViolation { hour: usize },
    #[error("hour {hour}: stores served more than the demand")]
    OverserveViolation { hour: usize },
    #[error("hour {hour}: decision imbalance {reported} disagrees with rates ({computed})")]
    InconsistentDecision {
        hour: usize,
        reported: f64,
        computed: f64,
    },
    #[error("hour {hour}: store {store} is not at its limit while energy is spilled or unserved")]
    NotGreedy { hour: usize, store: usize },
    #[error("input policy is infeasible: {0}")]
    InfeasibleInput(Box<EngineError>),
    #[error("policy trace has {got} rows for a trace of {expected} hours")]
    LengthMismatch { expected: usize, got: usize },
}

/// Rates for every hour, one row per hour and one column per store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTrace {
    pub rates: Vec<Vec<f64>>,
}

impl PolicyTrace {
    pub fn new(rates: Vec<Vec<f64>>) -> Self {
        Self { rates }
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }
}

/// Totals of a run without per-hour series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub hours: usize,
    pub total_unserved_mwh: f64,
    pub total_spill_mwh: f64,
    /// Energy delivered to demand by each store.
    pub served_external_mwh: Vec<f64>,
    /// Energy withdrawn from stores to charge other stores.
    pub cross_charged_mwh: f64,
    pub final_state: FleetState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub unserved_cumulative: Vec<f64>,
    pub spill_cumulative: Vec<f64>,
    /// Per store, the level at the end of every hour.
    pub level_traces: Vec<Vec<f64>>,
    pub rates: PolicyTrace,
    pub served_external: Vec<f64>,
    pub cross_charged: f64,
    pub final_state: FleetState,
}

impl SimResult {
    pub fn total_unserved(&self) -> f64 {
        self.unserved_cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn total_spill(&self) -> f64 {
        self.spill_cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn summary(&self) -> SimSummary {
        SimSummary {
            hours: self.unserved_cumulative.len(),
            total_unserved_mwh: self.total_unserved(),
            total_spill_mwh: self.total_spill(),
            served_external_mwh: self.served_external.clone(),
            cross_charged_mwh: self.cross_charged,
            final_state: self.final_state.clone(),
        }
    }
}

fn check_decision(
    hour: usize,
    re: f64,
    decision: &StepDecision,
    fleet: &[StoreSpec],
) -> Result<(), EngineError> {
    let u = imbalance_of(re, &decision.rates, fleet);
    if re >= 0.0 && u < -SLACK {
        return Err(EngineError::OverdrawViolation { hour });
    }
    if re <= 0.0 && u > SLACK {
        return Err(EngineError::OverserveViolation { hour });
    }
    let reported = decision.signed_imbalance();
    let tol = SLACK + 1e-9 * re.abs();
    if decision.spill < 0.0 || decision.unserved < 0.0 || (reported - u).abs() > tol {
        return Err(EngineError::InconsistentDecision {
            hour,
            reported,
            computed: u,
        });
    }
    Ok(())
}

/// Drive `policy` over `trace`, calling `observe` after every hour with the
/// decision and the new state.
pub fn run<S, F>(
    fleet: &[StoreSpec],
    initial: &FleetState,
    trace: &[f64],
    policy: &S,
    mut observe: F,
) -> Result<SimSummary, EngineError>
where
    S: Scheduler + ?Sized,
    F: FnMut(f64, &StepDecision, &FleetState),
{
    validate_fleet(fleet)?;
    initial.validate(fleet)?;
    policy.check(fleet.len())?;
    let mut state = initial.clone();
    let mut served = vec![0.0; fleet.len()];
    let (mut ue, mut spill, mut cross) = (0.0, 0.0, 0.0);
    for &re in trace {
        let hour = state.hour + 1;
        let decision = policy.decide(&state, re, fleet);
        check_decision(hour, re, &decision, fleet)?;
        state = apply_rates(&state, &decision.rates, fleet)
            .map_err(|source| EngineError::Step { hour, source })?;
        ue += decision.unserved;
        spill += decision.spill;

        let discharged: f64 = decision
            .rates
            .iter()
            .filter(|r| **r < 0.0)
            .map(|r| -r)
            .sum();
        let to_demand = if re < 0.0 {
            (-re - decision.unserved).clamp(0.0, discharged)
        } else {
            0.0
        };
        cross += discharged - to_demand;
        if to_demand > 0.0 {
            // deliveries to demand are attributed pro rata to discharge
            let share = to_demand / discharged;
            for (acc, r) in served.iter_mut().zip(&decision.rates) {
                if *r < 0.0 {
                    *acc += -r * share;
                }
            }
        }
        observe(re, &decision, &state);
    }
    Ok(SimSummary {
        hours: trace.len(),
        total_unserved_mwh: ue,
        total_spill_mwh: spill,
        served_external_mwh: served,
        cross_charged_mwh: cross,
        final_state: state,
    })
}

/// Totals only; the allocation-free path used by sizing searches.
pub fn simulate_summary<S: Scheduler + ?Sized>(
    fleet: &[StoreSpec],
    initial: &FleetState,
    trace: &ResidualTrace,
    policy: &S,
) -> Result<SimSummary, EngineError> {
    run(fleet, initial, trace.values(), policy, |_, _, _| {})
}

pub fn simulate<S: Scheduler + ?Sized>(
    fleet: &[StoreSpec],
    initial: &FleetState,
    trace: &ResidualTrace,
    policy: &S,
) -> Result<SimResult, EngineError> {
    simulate_values(fleet, initial, trace.values(), policy)
}

/// [`simulate`] over a raw residual slice.
pub fn simulate_values<S: Scheduler + ?Sized>(
    fleet: &[StoreSpec],
    initial: &FleetState,
    trace: &[f64],
    policy: &S,
) -> Result<SimResult, EngineError> {
    let n = trace.len();
    let mut ue_cum = Vec::with_capacity(n);
    let mut spill_cum = Vec::with_capacity(n);
    let mut levels = vec![Vec::with_capacity(n); fleet.len()];
    let mut rates = Vec::with_capacity(n);
    let (mut ue, mut spill) = (0.0, 0.0);
    let summary = run(fleet, initial, trace, policy, |_, d, s| {
        ue += d.unserved;
        spill += d.spill;
        ue_cum.push(ue);
        spill_cum.push(spill);
        for (trace, &l) in levels.iter_mut().zip(&s.levels) {
            trace.push(l);
        }
        rates.push(d.rates.clone());
    })?;
    Ok(SimResult {
        unserved_cumulative: ue_cum,
        spill_cumulative: spill_cum,
        level_traces: levels,
        rates: PolicyTrace::new(rates),
        served_external: summary.served_external_mwh,
        cross_charged: summary.cross_charged_mwh,
        final_state: summary.final_state,
    })
}

/// Cumulative demand in excess of the combined output power: a lower bound
/// on the cumulative unserved energy of any feasible policy.
pub fn lower_bound_unserved(trace: &[f64], total_output_power: f64) -> Vec<f64> {
    let mut acc = 0.0;
    trace
        .iter()
        .map(|&re| {
            acc += (-re - total_output_power).max(0.0);
            acc
        })
        .collect()
}

/// Level paths induced by a rate trajectory, without feasibility checks
/// beyond clamping rounding noise. Row `t` holds the levels at the end of
/// hour `t`; row 0 is the initial state.
fn level_path(initial: &[f64], rates: &[Vec<f64>], fleet: &[StoreSpec]) -> Vec<Vec<f64>> {
    let mut path = Vec::with_capacity(rates.len() + 1);
    path.push(initial.to_vec());
    for row in rates {
        let prev = path.last().expect("nonempty path");
        let next = prev
            .iter()
            .zip(row)
            .zip(fleet)
            .enumerate()
            .map(|(i, ((s, r), spec))| clamp_level(i, spec, s + r).unwrap_or(s + r))
            .collect();
        path.push(next);
    }
    path
}

/// Check capacity, rate and imbalance-sign constraints at every hour.
pub fn verify_feasible(
    fleet: &[StoreSpec],
    initial: &FleetState,
    trace: &[f64],
    policy_trace: &PolicyTrace,
) -> Result<(), EngineError> {
    validate_fleet(fleet)?;
    initial.validate(fleet)?;
    if policy_trace.len() != trace.len() {
        return Err(EngineError::LengthMismatch {
            expected: trace.len(),
            got: policy_trace.len(),
        });
    }
    let mut levels = initial.levels.clone();
    for (t, (&re, row)) in trace.iter().zip(&policy_trace.rates).enumerate() {
        let hour = t + 1;
        if row.len() != fleet.len() {
            return Err(EngineError::LengthMismatch {
                expected: fleet.len(),
                got: row.len(),
            });
        }
        for (i, (spec, &r)) in fleet.iter().zip(row).enumerate() {
            if check_rate(i, spec, r).is_err() {
                return Err(EngineError::RateViolation { hour, store: i });
            }
            levels[i] = clamp_level(i, spec, levels[i] + r)
                .map_err(|_| EngineError::CapacityViolation { hour, store: i })?;
        }
        let u = imbalance_of(re, row, fleet);
        if re >= 0.0 && u < -SLACK {
            return Err(EngineError::OverdrawViolation { hour });
        }
        if re <= 0.0 && u > SLACK {
            return Err(EngineError::OverserveViolation { hour });
        }
    }
    Ok(())
}

/// Check that every store is at its charging (discharging) limit in each hour
/// with spilled (unserved) energy.
pub fn verify_greedy(
    fleet: &[StoreSpec],
    initial: &FleetState,
    trace: &[f64],
    policy_trace: &PolicyTrace,
) -> Result<(), EngineError> {
    if policy_trace.len() != trace.len() {
        return Err(EngineError::LengthMismatch {
            expected: trace.len(),
            got: policy_trace.len(),
        });
    }
    let path = level_path(&initial.levels, &policy_trace.rates, fleet);
    for (t, (&re, row)) in trace.iter().zip(&policy_trace.rates).enumerate() {
        let hour = t + 1;
        let before = &path[t];
        let u = imbalance_of(re, row, fleet);
        if re >= 0.0 && u > SLACK {
            for (i, spec) in fleet.iter().enumerate() {
                if row[i] < spec.max_charge(before[i]) - SLACK {
                    return Err(EngineError::NotGreedy { hour, store: i });
                }
            }
        } else if re < 0.0 && u < -SLACK {
            for (i, spec) in fleet.iter().enumerate() {
                if row[i] > -spec.max_discharge(before[i]) + SLACK {
                    return Err(EngineError::NotGreedy { hour, store: i });
                }
            }
        }
    }
    Ok(())
}

/// Cumulative unserved energy of a rate trajectory.
pub fn unserved_cumulative(
    trace: &[f64],
    policy_trace: &PolicyTrace,
    fleet: &[StoreSpec],
) -> Vec<f64> {
    let mut acc = 0.0;
    trace
        .iter()
        .zip(&policy_trace.rates)
        .map(|(&re, row)| {
            acc += (-imbalance_of(re, row, fleet)).max(0.0);
            acc
        })
        .collect()
}

/// Raise (re >= 0) or lower (re < 0) the rates of one hour until no energy is
/// spilled or unserved, or every store is at its limit.
fn make_greedy(re: f64, levels: &[f64], row: &mut [f64], fleet: &[StoreSpec]) {
    let u = imbalance_of(re, row, fleet);
    if re >= 0.0 {
        let mut spill = u.max(0.0);
        for (i, spec) in fleet.iter().enumerate() {
            if spill <= 0.0 {
                break;
            }
            if row[i] < 0.0 {
                let d = (-row[i]).min(spill);
                row[i] += d;
                spill -= d;
                if row[i] < 0.0 {
                    continue;
                }
                row[i] = 0.0;
            }
            let cap = spec.max_charge(levels[i]);
            let draw = (cap - row[i]).max(0.0) / spec.efficiency;
            if spill >= draw {
                row[i] = cap.max(row[i]);
                spill -= draw;
            } else {
                row[i] += spec.efficiency * spill;
                spill = 0.0;
            }
        }
    } else {
        let mut short = (-u).max(0.0);
        for (i, spec) in fleet.iter().enumerate() {
            if short <= 0.0 {
                break;
            }
            if row[i] > 0.0 {
                let draw = row[i] / spec.efficiency;
                if short >= draw {
                    row[i] = 0.0;
                    short -= draw;
                } else {
                    row[i] -= spec.efficiency * short;
                    short = 0.0;
                    continue;
                }
            }
            let cap = spec.max_discharge(levels[i]);
            let room = (cap + row[i]).max(0.0);
            if short >= room {
                row[i] = -cap.max(-row[i]);
                short -= room;
            } else {
                row[i] -= short;
                short = 0.0;
            }
        }
    }
}

/// Restore feasibility of one later hour after earlier levels moved: clip
/// rates to the available level and headroom, then undo any resulting
/// overdraw or overserve by trimming receivers or suppliers.
fn repair(re: f64, levels: &[f64], row: &mut [f64], fleet: &[StoreSpec]) {
    for (i, spec) in fleet.iter().enumerate() {
        row[i] = row[i].max(-levels[i]).min(spec.capacity_mwh - levels[i]);
    }
    let u = imbalance_of(re, row, fleet);
    if re >= 0.0 && u < 0.0 {
        let mut excess = -u;
        for (i, spec) in fleet.iter().enumerate() {
            if excess <= 0.0 {
                break;
            }
            if row[i] > 0.0 {
                let draw = row[i] / spec.efficiency;
                if excess >= draw {
                    row[i] = 0.0;
                    excess -= draw;
                } else {
                    row[i] -= spec.efficiency * excess;
                    excess = 0.0;
                }
            }
        }
    } else if re <= 0.0 && u > 0.0 {
        let mut excess = u;
        for r in row.iter_mut() {
            if excess <= 0.0 {
                break;
            }
            if *r < 0.0 {
                let d = (-*r).min(excess);
                *r += d;
                excess -= d;
            }
        }
    }
}

/// Apply the modification associated with hour index `t` (0-based): make
/// that hour greedy and repair every later hour.
pub fn greedify_step(
    fleet: &[StoreSpec],
    initial: &FleetState,
    trace: &[f64],
    rates: &mut [Vec<f64>],
    t: usize,
) {
    let path = level_path(&initial.levels, &rates[..t], fleet);
    let mut levels = path[t].clone();
    make_greedy(trace[t], &levels, &mut rates[t], fleet);
    let advance = |levels: &mut Vec<f64>, row: &[f64]| {
        for (i, (s, r)) in levels.iter_mut().zip(row).enumerate() {
            *s = clamp_level(i, &fleet[i], *s + r).unwrap_or(*s + r);
        }
    };
    advance(&mut levels, &rates[t]);
    for tp in t + 1..trace.len() {
        repair(trace[tp], &levels, &mut rates[tp], fleet);
        advance(&mut levels, &rates[tp]);
    }
}

/// Turn a feasible trajectory into a greedy one that never has more
/// cumulative unserved energy at any hour.
pub fn greedify(
    fleet: &[StoreSpec],
    initial: &FleetState,
    trace: &[f64],
    policy_trace: &PolicyTrace,
) -> Result<PolicyTrace, EngineError> {
    verify_feasible(fleet, initial, trace, policy_trace)
        .map_err(|e| EngineError::InfeasibleInput(Box::new(e)))?;
    let mut rates = policy_trace.rates.clone();
    for t in 0..trace.len() {
        greedify_step(fleet, initial, trace, &mut rates, t);
    }
    Ok(PolicyTrace::new(rates))
}

/// Column data of an exported simulation CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTable {
    pub store_names: Vec<String>,
    pub hours: Vec<usize>,
    pub residual_mw: Vec<f64>,
    pub rates: Vec<Vec<f64>>,
    pub levels: Vec<Vec<f64>>,
    pub spill_cum_mwh: Vec<f64>,
    pub unserved_cum_mwh: Vec<f64>,
}

impl SimTable {
    /// Assemble the export table. `level_scale[i]` multiplies store `i`'s
    /// levels (use it to report levels in another loss convention).
    pub fn from_result(
        fleet: &[StoreSpec],
        trace: &[f64],
        result: &SimResult,
        level_scale: &[f64],
    ) -> Self {
        let n = trace.len();
        Self {
            store_names: fleet.iter().map(|s| s.name.clone()).collect(),
            hours: (1..=n).collect(),
            residual_mw: trace.to_vec(),
            rates: result.rates.rates.clone(),
            levels: (0..n)
                .map(|t| {
                    result
                        .level_traces
                        .iter()
                        .zip(level_scale)
                        .map(|(l, k)| l[t] * k)
                        .collect()
                })
                .collect(),
            spill_cum_mwh: result.spill_cumulative.clone(),
            unserved_cum_mwh: result.unserved_cumulative.clone(),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["hour".to_string(), "re_mw".to_string()];
        header.extend(self.store_names.iter().map(|n| format!("rate_{n}")));
        header.extend(self.store_names.iter().map(|n| format!("level_{n}")));
        header.push("spill_cum_mwh".into());
        header.push("unserved_cum_mwh".into());
        w.write_record(&header)?;
        for t in 0..self.hours.len() {
            let mut row = vec![self.hours[t].to_string(), self.residual_mw[t].to_string()];
            row.extend(self.rates[t].iter().map(f64::to_string));
            row.extend(self.levels[t].iter().map(f64::to_string));
            row.push(self.spill_cum_mwh[t].to_string());
            row.push(self.unserved_cum_mwh[t].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, csv::Error> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        let store_names: Vec<String> = header
            .iter()
            .filter_map(|h| h.strip_prefix("rate_").map(str::to_string))
            .collect();
        let k = store_names.len();
        let parse = |s: &str| -> Result<f64, csv::Error> {
            s.parse::<f64>().map_err(|e| {
                csv::Error::from(std::io::Error::new(std::io::ErrorKind::InvalidData, e))
            })
        };
        let mut table = SimTable {
            store_names,
            hours: Vec::new(),
            residual_mw: Vec::new(),
            rates: Vec::new(),
            levels: Vec::new(),
            spill_cum_mwh: Vec::new(),
            unserved_cum_mwh: Vec::new(),
        };
        for rec in rdr.records() {
            let rec = rec?;
            let vals: Vec<&str> = rec.iter().collect();
            table.hours.push(vals[0].parse().map_err(|e| {
                csv::Error::from(std::io::Error::new(std::io::ErrorKind::InvalidData, e))
            })?);
            table.residual_mw.push(parse(vals[1])?);
            table.rates.push(
                vals[2..2 + k]
                    .iter()
                    .map(|v| parse(v))
                    .collect::<Result<_, _>>()?,
            );
            table.levels.push(
                vals[2 + k..2 + 2 * k]
                    .iter()
                    .map(|v| parse(v))
                    .collect::<Result<_, _>>()?,
            );
            table.spill_cum_mwh.push(parse(vals[2 + 2 * k])?);
            table.unserved_cum_mwh.push(parse(vals[3 + 2 * k])?);
        }
        Ok(table)
    }
}
