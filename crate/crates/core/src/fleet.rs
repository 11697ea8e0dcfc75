//! Store and fleet domain types with single-step dynamics.
//!
//! Levels are measured in the servable-energy convention: a store's level is
//! the energy it can still deliver, so all round-trip losses are booked on
//! input. A rate `r` is the change of level over one hour; with a one-hour
//! step, MW and MWh per step are numerically identical.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute slack (MWh) tolerated by feasibility checks before a violation is
/// reported. Levels within the slack of a bound are clamped onto it.
pub const SLACK: f64 = 1e-6;

/// Relative tolerance used when deciding whether stores can be merged.
pub const MERGE_RTOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FleetError {
    #[error("store `{store}`: {field} must be strictly positive, got {value}")]
    NonPositiveDimension {
        store: String,
        field: &'static str,
        value: f64,
    },
    #[error("store `{store}`: efficiency must lie in (0, 1], got {value}")]
    EfficiencyOutOfRange { store: String, value: f64 },
    #[error("store {store}: level {level} outside [0, {capacity}]")]
    CapacityViolation {
        store: usize,
        level: f64,
        capacity: f64,
    },
    #[error("store {store}: rate {rate} outside [{min}, {max}]")]
    RateViolation {
        store: usize,
        rate: f64,
        min: f64,
        max: f64,
    },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("stores are not equivalent: {0}")]
    NotEquivalent(String),
    #[error("cannot merge an empty list of stores")]
    EmptyMerge,
}

/// One storage technology.
///
/// `output_power_mw` and `input_power_mw` may be `f64::INFINITY` to model an
/// unconstrained rate; the capacity must be finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreSpec {
    pub name: String,
    pub capacity_mwh: f64,
    pub output_power_mw: f64,
    /// Maximum rate at which external energy is drawn, before losses.
    pub input_power_mw: f64,
    pub efficiency: f64,
}

impl StoreSpec {
    pub fn new(
        name: impl Into<String>,
        capacity_mwh: f64,
        output_power_mw: f64,
        input_power_mw: f64,
        efficiency: f64,
    ) -> Self {
        Self {
            name: name.into(),
            capacity_mwh,
            output_power_mw,
            input_power_mw,
            efficiency,
        }
    }

    /// Largest admissible increase of level in one step from `level`.
    pub fn max_charge(&self, level: f64) -> f64 {
        (self.capacity_mwh - level).min(self.efficiency * self.input_power_mw)
    }

    /// Largest admissible decrease of level in one step from `level`.
    pub fn max_discharge(&self, level: f64) -> f64 {
        level.min(self.output_power_mw)
    }

    /// Upper rate bound `eta * Q`.
    pub fn max_rate(&self) -> f64 {
        self.efficiency * self.input_power_mw
    }
}

pub fn validate_spec(spec: &StoreSpec) -> Result<(), FleetError> {
    let dims = [
        ("capacity", spec.capacity_mwh),
        ("output power", spec.output_power_mw),
        ("input power", spec.input_power_mw),
    ];
    for (field, value) in dims {
        // NaN fails the comparison as well
        if !(value > 0.0) {
            return Err(FleetError::NonPositiveDimension {
                store: spec.name.clone(),
                field,
                value,
            });
        }
    }
    if !spec.capacity_mwh.is_finite() {
        return Err(FleetError::NonPositiveDimension {
            store: spec.name.clone(),
            field: "capacity (finite)",
            value: spec.capacity_mwh,
        });
    }
    if !(spec.efficiency > 0.0 && spec.efficiency <= 1.0) {
        return Err(FleetError::EfficiencyOutOfRange {
            store: spec.name.clone(),
            value: spec.efficiency,
        });
    }
    Ok(())
}

pub fn validate_fleet(fleet: &[StoreSpec]) -> Result<(), FleetError> {
    fleet.iter().try_for_each(validate_spec)
}

/// How round-trip losses are split between input and output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LossConvention {
    /// All losses at input; level is the servable energy.
    #[default]
    #[serde(alias = "inputside", alias = "input_side")]
    Input,
    /// Input and output efficiencies both `sqrt(eta)`; capacities and levels
    /// appear larger by `eta^-0.5`.
    #[serde(alias = "splitsqrt", alias = "split_sqrt")]
    Split,
}

impl std::str::FromStr for LossConvention {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "input" | "inputside" | "input_side" => Ok(Self::Input),
            "split" | "splitsqrt" | "split_sqrt" => Ok(Self::Split),
            other => Err(format!("unknown loss convention `{other}`")),
        }
    }
}

/// Multiplier taking a capacity or level from `from` into `to`.
pub fn convention_factor(efficiency: f64, from: LossConvention, to: LossConvention) -> f64 {
    match (from, to) {
        (LossConvention::Input, LossConvention::Split) => efficiency.powf(-0.5),
        (LossConvention::Split, LossConvention::Input) => efficiency.sqrt(),
        _ => 1.0,
    }
}

/// Re-express a store and one of its levels in another loss convention.
/// Rates `P`, `Q` and `eta` are unchanged.
pub fn convert_convention(
    spec: &StoreSpec,
    level: f64,
    from: LossConvention,
    to: LossConvention,
) -> (StoreSpec, f64) {
    let k = convention_factor(spec.efficiency, from, to);
    let mut out = spec.clone();
    out.capacity_mwh *= k;
    (out, level * k)
}

/// Store levels at the end of hour `hour`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetState {
    pub levels: Vec<f64>,
    pub hour: usize,
}

impl FleetState {
    pub fn new(levels: Vec<f64>) -> Self {
        Self { levels, hour: 0 }
    }

    /// Every store full, the default starting point.
    pub fn full(fleet: &[StoreSpec]) -> Self {
        Self::new(fleet.iter().map(|s| s.capacity_mwh).collect())
    }

    pub fn empty(fleet: &[StoreSpec]) -> Self {
        Self::new(vec![0.0; fleet.len()])
    }

    pub fn validate(&self, fleet: &[StoreSpec]) -> Result<(), FleetError> {
        if self.levels.len() != fleet.len() {
            return Err(FleetError::LengthMismatch {
                expected: fleet.len(),
                got: self.levels.len(),
            });
        }
        for (i, (&s, spec)) in self.levels.iter().zip(fleet).enumerate() {
            if !(s >= -SLACK && s <= spec.capacity_mwh + SLACK) {
                return Err(FleetError::CapacityViolation {
                    store: i,
                    level: s,
                    capacity: spec.capacity_mwh,
                });
            }
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.levels.iter().sum()
    }
}

/// Rates chosen for one step together with the resulting imbalance split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDecision {
    pub rates: Vec<f64>,
    pub spill: f64,
    pub unserved: f64,
}

impl StepDecision {
    /// Build a decision from rates, deriving spill/unserved from the imbalance
    /// and clamping it to the sign dictated by `re`.
    pub fn from_rates(re: f64, rates: Vec<f64>, fleet: &[StoreSpec]) -> Self {
        let u = imbalance_of(re, &rates, fleet);
        let (spill, unserved) = split_imbalance(re, u);
        Self {
            rates,
            spill,
            unserved,
        }
    }

    pub fn signed_imbalance(&self) -> f64 {
        self.spill - self.unserved
    }
}

/// Split a signed imbalance into (spill, unserved), clamped to the sign
/// admitted by the residual.
pub fn split_imbalance(re: f64, u: f64) -> (f64, f64) {
    if re >= 0.0 {
        (u.max(0.0), 0.0)
    } else {
        (0.0, (-u).max(0.0))
    }
}

/// Signed imbalance of a rate vector: residual minus external energy drawn by
/// charging stores plus energy delivered by discharging stores.
pub fn imbalance(re: f64, rates: &[f64], efficiencies: &[f64]) -> f64 {
    let mut u = re;
    for (&r, &eta) in rates.iter().zip(efficiencies) {
        if r < 0.0 {
            u -= r;
        } else {
            u -= r / eta;
        }
    }
    u
}

pub(crate) fn imbalance_of(re: f64, rates: &[f64], fleet: &[StoreSpec]) -> f64 {
    let mut u = re;
    for (&r, spec) in rates.iter().zip(fleet) {
        if r < 0.0 {
            u -= r;
        } else {
            u -= r / spec.efficiency;
        }
    }
    u
}

/// Check one rate against `[-P, eta*Q]` within slack.
pub fn check_rate(store: usize, spec: &StoreSpec, rate: f64) -> Result<(), FleetError> {
    let min = -spec.output_power_mw;
    let max = spec.max_rate();
    if !(rate >= min - SLACK && rate <= max + SLACK) {
        return Err(FleetError::RateViolation {
            store,
            rate,
            min,
            max,
        });
    }
    Ok(())
}

/// Advance the levels by one hour. Rates and resulting levels are checked;
/// levels within [`SLACK`] of a bound are clamped onto it.
pub fn apply_step(
    state: &FleetState,
    decision: &StepDecision,
    fleet: &[StoreSpec],
) -> Result<FleetState, FleetError> {
    apply_rates(state, &decision.rates, fleet)
}

pub fn apply_rates(
    state: &FleetState,
    rates: &[f64],
    fleet: &[StoreSpec],
) -> Result<FleetState, FleetError> {
    for len in [state.levels.len(), rates.len()] {
        if len != fleet.len() {
            return Err(FleetError::LengthMismatch {
                expected: fleet.len(),
                got: len,
            });
        }
    }
    let mut levels = Vec::with_capacity(fleet.len());
    for (i, ((&s, &r), spec)) in state.levels.iter().zip(rates).zip(fleet).enumerate() {
        check_rate(i, spec, r)?;
        levels.push(clamp_level(i, spec, s + r)?);
    }
    Ok(FleetState {
        levels,
        hour: state.hour + 1,
    })
}

pub(crate) fn clamp_level(store: usize, spec: &StoreSpec, level: f64) -> Result<f64, FleetError> {
    if level < 0.0 {
        if level >= -SLACK {
            return Ok(0.0);
        }
    } else if level > spec.capacity_mwh {
        if level <= spec.capacity_mwh + SLACK {
            return Ok(spec.capacity_mwh);
        }
    } else {
        return Ok(level);
    }
    Err(FleetError::CapacityViolation {
        store,
        level,
        capacity: spec.capacity_mwh,
    })
}

fn rel_close(a: f64, b: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= MERGE_RTOL * a.abs().max(b.abs())
}

/// Combine stores sharing efficiency and capacity-to-power ratios into one
/// store with summed dimensions.
pub fn merge_equivalent(stores: &[StoreSpec]) -> Result<StoreSpec, FleetError> {
    let first = stores.first().ok_or(FleetError::EmptyMerge)?;
    for s in stores {
        validate_spec(s)?;
    }
    for s in &stores[1..] {
        if !rel_close(s.efficiency, first.efficiency) {
            return Err(FleetError::NotEquivalent(format!(
                "efficiency {} vs {}",
                s.efficiency, first.efficiency
            )));
        }
        let ep = (
            first.capacity_mwh / first.output_power_mw,
            s.capacity_mwh / s.output_power_mw,
        );
        let eq = (
            first.capacity_mwh / first.input_power_mw,
            s.capacity_mwh / s.input_power_mw,
        );
        if !rel_close(ep.0, ep.1) {
            return Err(FleetError::NotEquivalent(format!(
                "E/P ratio {} vs {}",
                ep.1, ep.0
            )));
        }
        if !rel_close(eq.0, eq.1) {
            return Err(FleetError::NotEquivalent(format!(
                "E/Q ratio {} vs {}",
                eq.1, eq.0
            )));
        }
    }
    let name = stores
        .iter()
        .map(|s| s.name.as_str())
        .collect::<Vec<_>>()
        .join("+");
    Ok(StoreSpec {
        name,
        capacity_mwh: stores.iter().map(|s| s.capacity_mwh).sum(),
        output_power_mw: stores.iter().map(|s| s.output_power_mw).sum(),
        input_power_mw: stores.iter().map(|s| s.input_power_mw).sum(),
        efficiency: first.efficiency,
    })
}
