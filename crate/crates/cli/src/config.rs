//! Scenario files: TOML with every unit spelled out in the field name.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use storage_fleet::fleet::{convention_factor, validate_spec};
use storage_fleet::sizing::{
    PricedStore, ReliabilityStandard, SizingOptions, Technology, TechnologyCost,
    DEFAULT_LAMBDA_VALUES,
};
use storage_fleet::traces::{load_csv_data, synthesize, CsvData, SynthParams, TraceOrigin};
use storage_fleet::{
    FleetState, LossConvention, PolicyKind, ResidualTrace, StoreSpec, ValueParams,
};

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub trace: TraceSource,
    /// Convention in which store capacities and levels are written.
    #[serde(default)]
    pub convention: LossConvention,
    #[serde(default)]
    pub stores: Vec<StoreEntry>,
    #[serde(default)]
    pub policy: PolicyEntry,
    #[serde(default)]
    pub reliability: ReliabilityEntry,
    #[serde(default)]
    pub sizing: SizingEntry,
    #[serde(default)]
    pub curve: CurveEntry,
    #[serde(default)]
    pub tune: TuneEntry,
    #[serde(default)]
    pub stats: StatsEntry,
}

/// Exactly one of `values_mw`, `csv_path` and `synthetic` must be set.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSource {
    pub values_mw: Option<Vec<f64>>,
    pub csv_path: Option<PathBuf>,
    pub synthetic: Option<SynthParams>,
    /// Rescales generation; needs demand and generation components.
    pub overcapacity: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreEntry {
    pub name: String,
    pub capacity_mwh: f64,
    pub output_power_mw: f64,
    pub input_power_mw: f64,
    pub efficiency: f64,
    /// Defaults to a full store.
    pub initial_level_mwh: Option<f64>,
    pub capacity_usd_per_kwh: Option<f64>,
    pub output_power_usd_per_kw: Option<f64>,
    pub input_power_usd_per_kw: Option<f64>,
}

impl StoreEntry {
    /// Prices, if all three are given.
    pub fn cost(&self) -> Result<Option<TechnologyCost>, CliError> {
        match (
            self.capacity_usd_per_kwh,
            self.output_power_usd_per_kw,
            self.input_power_usd_per_kw,
        ) {
            (Some(c), Some(o), Some(i)) => {
                let cost = TechnologyCost::new(c, o, i);
                cost.validate().map_err(|e| config_err(e.to_string()))?;
                Ok(Some(cost))
            }
            (None, None, None) => Ok(None),
            _ => Err(config_err(format!(
                "store {} has only some of its prices",
                self.name
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyName {
    #[default]
    Value,
    Ggddf,
    Grtef,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyEntry {
    #[serde(default)]
    pub kind: PolicyName,
    /// One decay rate per store; all zero when omitted.
    pub lambdas_per_hour: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReliabilityEntry {
    pub max_unserved_mwh_per_year: f64,
}

impl Default for ReliabilityEntry {
    fn default() -> Self {
        Self {
            max_unserved_mwh_per_year: ReliabilityStandard::GB.max_unserved_mwh_per_year,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TechnologyEntry {
    pub name: String,
    pub efficiency: f64,
    pub capacity_usd_per_kwh: f64,
    pub output_power_usd_per_kw: f64,
    pub input_power_usd_per_kw: f64,
}

/// Secondary stores of one technology on a capacity × power grid
/// (input and output power equal).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecondaryGrid {
    pub name: String,
    pub efficiency: f64,
    pub capacities_mwh: Vec<f64>,
    pub powers_mw: Vec<f64>,
    pub capacity_usd_per_kwh: f64,
    pub output_power_usd_per_kw: f64,
    pub input_power_usd_per_kw: f64,
}

/// Search settings sit next to the technologies; unknown keys cannot be
/// rejected here because of the flattened options.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct SizingEntry {
    pub long: Option<TechnologyEntry>,
    /// Explicit secondary-store combinations; an empty list means none.
    #[serde(default)]
    pub candidates: Vec<Vec<StoreEntry>>,
    pub secondary_grid: Option<SecondaryGrid>,
    #[serde(flatten)]
    pub options: SizingOptions,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveEntry {
    pub efficiencies: Vec<f64>,
    /// Overcapacities to rescale to; the trace is used as given when empty.
    #[serde(default)]
    pub overcapacities: Vec<f64>,
    pub energy_tol_mwh: f64,
}

impl Default for CurveEntry {
    fn default() -> Self {
        Self {
            efficiencies: vec![0.4, 0.7, 0.9],
            overcapacities: Vec::new(),
            energy_tol_mwh: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneEntry {
    pub lambda_values_per_hour: Vec<f64>,
}

impl Default for TuneEntry {
    fn default() -> Self {
        Self {
            lambda_values_per_hour: DEFAULT_LAMBDA_VALUES.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsEntry {
    pub bins: usize,
    pub max_lag_h: usize,
}

impl Default for StatsEntry {
    fn default() -> Self {
        Self {
            bins: 100,
            max_lag_h: 500,
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Where the residual series comes from once the config is resolved.
pub enum LoadedTrace {
    Residual(Vec<f64>, TraceOrigin),
    /// Demand and generation, which can be rescaled to any overcapacity.
    Components(storage_fleet::traces::Components, TraceOrigin),
}

impl LoadedTrace {
    /// Residual at overcapacity `oc`, or as loaded when `oc` is `None`.
    pub fn residual(&self, oc: Option<f64>) -> Result<ResidualTrace, CliError> {
        match (self, oc) {
            (LoadedTrace::Residual(v, origin), None) => {
                Ok(ResidualTrace::with_origin(v.clone(), origin.clone(), None)?)
            }
            (LoadedTrace::Residual(..), Some(_)) => Err(config_err(
                "overcapacity needs a synthetic trace or a demand/wind/solar file",
            )),
            (LoadedTrace::Components(c, origin), None) => Ok(ResidualTrace::with_origin(
                c.residual(),
                origin.clone(),
                None,
            )?),
            (LoadedTrace::Components(c, origin), Some(oc)) => {
                let scaled = c.scaled(oc)?;
                Ok(ResidualTrace::with_origin(
                    scaled.residual(),
                    origin.clone(),
                    Some(oc),
                )?)
            }
        }
    }
}

impl ScenarioConfig {
    /// Parse a file; relative CSV paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: ScenarioConfig =
            toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        if let Some(p) = &cfg.trace.csv_path {
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.trace.csv_path = Some(base.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn override_seed(&mut self, seed: u64) {
        if let Some(s) = &mut self.trace.synthetic {
            s.seed = seed;
        }
    }

    pub fn load_trace(&self) -> Result<LoadedTrace, CliError> {
        let t = &self.trace;
        let sources = [
            t.values_mw.is_some(),
            t.csv_path.is_some(),
            t.synthetic.is_some(),
        ];
        if sources.iter().filter(|&&s| s).count() != 1 {
            return Err(config_err(
                "trace needs exactly one of values_mw, csv_path and synthetic",
            ));
        }
        if let Some(v) = &t.values_mw {
            return Ok(LoadedTrace::Residual(v.clone(), TraceOrigin::Inline));
        }
        if let Some(p) = &t.csv_path {
            let origin = TraceOrigin::Csv(p.clone());
            return Ok(
                match load_csv_data(p).map_err(|e| config_err(format!("{}: {e}", p.display())))? {
                    CsvData::Residual(v) => LoadedTrace::Residual(v, origin),
                    CsvData::Components(c) => LoadedTrace::Components(c, origin),
                },
            );
        }
        let params = t.synthetic.clone().unwrap_or_default();
        let c = synthesize(&params).map_err(|e| config_err(e.to_string()))?;
        let origin = TraceOrigin::Synthetic {
            seed: params.seed,
            params,
        };
        Ok(LoadedTrace::Components(c, origin))
    }

    /// The trace at the configured overcapacity.
    pub fn residual_trace(&self) -> Result<ResidualTrace, CliError> {
        self.load_trace()?.residual(self.trace.overcapacity)
    }

    /// Stores and initial levels in the servable convention.
    pub fn fleet(&self) -> Result<(Vec<StoreSpec>, FleetState), CliError> {
        let mut specs = Vec::with_capacity(self.stores.len());
        let mut levels = Vec::with_capacity(self.stores.len());
        for s in &self.stores {
            let (spec, level) = store_from_entry(s, self.convention)?;
            specs.push(spec);
            levels.push(level);
        }
        let state = FleetState::new(levels);
        state
            .validate(&specs)
            .map_err(|e| config_err(e.to_string()))?;
        Ok((specs, state))
    }

    pub fn policy(&self, stores: usize) -> Result<PolicyKind, CliError> {
        let p = match self.policy.kind {
            PolicyName::Ggddf => PolicyKind::Ggddf,
            PolicyName::Grtef => PolicyKind::Grtef,
            PolicyName::Value => {
                let l = self
                    .policy
                    .lambdas_per_hour
                    .clone()
                    .unwrap_or_else(|| vec![0.0; stores]);
                PolicyKind::ValueFunction(
                    ValueParams::new(l).map_err(|e| config_err(e.to_string()))?,
                )
            }
        };
        p.validate(stores).map_err(|e| config_err(e.to_string()))?;
        Ok(p)
    }

    pub fn standard(&self) -> Result<ReliabilityStandard, CliError> {
        let m = self.reliability.max_unserved_mwh_per_year;
        if !(m >= 0.0 && m.is_finite()) {
            return Err(config_err(format!(
                "max_unserved_mwh_per_year = {m} must be finite and nonnegative"
            )));
        }
        Ok(ReliabilityStandard::new(m))
    }

    pub fn long_technology(&self) -> Result<Technology, CliError> {
        let t = self
            .sizing
            .long
            .as_ref()
            .ok_or_else(|| config_err("sizing needs a [sizing.long] technology"))?;
        let cost = TechnologyCost::new(
            t.capacity_usd_per_kwh,
            t.output_power_usd_per_kw,
            t.input_power_usd_per_kw,
        );
        cost.validate().map_err(|e| config_err(e.to_string()))?;
        if !(t.efficiency > 0.0 && t.efficiency <= 1.0) {
            return Err(config_err(format!(
                "efficiency {} of {} outside (0, 1]",
                t.efficiency, t.name
            )));
        }
        Ok(Technology::new(t.name.clone(), t.efficiency, cost))
    }

    /// Secondary-store candidates, always led by the no-secondary option.
    pub fn secondary_candidates(&self) -> Result<Vec<Vec<PricedStore>>, CliError> {
        let mut out = vec![Vec::new()];
        for cand in &self.sizing.candidates {
            let priced = cand
                .iter()
                .map(|s| {
                    let cost = s.cost()?.ok_or_else(|| {
                        config_err(format!("candidate store {} has no prices", s.name))
                    })?;
                    let (spec, _) = store_from_entry(s, self.convention)?;
                    Ok(PricedStore { spec, cost })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            if !priced.is_empty() {
                out.push(priced);
            }
        }
        if let Some(g) = &self.sizing.secondary_grid {
            let cost = TechnologyCost::new(
                g.capacity_usd_per_kwh,
                g.output_power_usd_per_kw,
                g.input_power_usd_per_kw,
            );
            for &e in &g.capacities_mwh {
                for &p in &g.powers_mw {
                    let entry = StoreEntry {
                        name: g.name.clone(),
                        capacity_mwh: e,
                        output_power_mw: p,
                        input_power_mw: p,
                        efficiency: g.efficiency,
                        initial_level_mwh: None,
                        capacity_usd_per_kwh: Some(cost.capacity_usd_per_kwh),
                        output_power_usd_per_kw: Some(cost.output_power_usd_per_kw),
                        input_power_usd_per_kw: Some(cost.input_power_usd_per_kw),
                    };
                    let (spec, _) = store_from_entry(&entry, self.convention)?;
                    out.push(vec![PricedStore { spec, cost }]);
                }
            }
        }
        Ok(out)
    }
}

fn store_from_entry(
    s: &StoreEntry,
    convention: LossConvention,
) -> Result<(StoreSpec, f64), CliError> {
    let raw = StoreSpec::new(
        s.name.clone(),
        s.capacity_mwh,
        s.output_power_mw,
        s.input_power_mw,
        s.efficiency,
    );
    validate_spec(&raw).map_err(|e| config_err(e.to_string()))?;
    s.cost()?;
    let k = convention_factor(s.efficiency, convention, LossConvention::Input);
    let mut spec = raw;
    spec.capacity_mwh *= k;
    let level = s.initial_level_mwh.map_or(spec.capacity_mwh, |l| l * k);
    Ok((spec, level))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> ScenarioConfig {
        toml::from_str(text).unwrap()
    }

    #[test]
    fn inline_fleet_in_split_convention() {
        let cfg = parse(
            r#"
            convention = "split"
            [trace]
            values_mw = [-1.0, 2.0]
            [[stores]]
            name = "h2"
            capacity_mwh = 100.0
            output_power_mw = inf
            input_power_mw = 5.0
            efficiency = 0.25
            initial_level_mwh = 50.0
            "#,
        );
        let (fleet, state) = cfg.fleet().unwrap();
        assert_eq!(fleet[0].capacity_mwh, 50.0);
        assert_eq!(fleet[0].output_power_mw, f64::INFINITY);
        assert_eq!(state.levels, vec![25.0]);
        assert_eq!(cfg.residual_trace().unwrap().values(), &[-1.0, 2.0]);
    }

    #[test]
    fn trace_sources_are_exclusive() {
        let cfg = parse("[trace]\nvalues_mw = [1.0]\ncsv_path = \"x.csv\"\n");
        assert!(matches!(cfg.load_trace(), Err(CliError::Config(_))));
        let cfg = parse("[trace]\n");
        assert!(matches!(cfg.load_trace(), Err(CliError::Config(_))));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let r: Result<ScenarioConfig, _> =
            toml::from_str("[trace]\nvalues_mw = [1.0]\ncapacity = 3\n");
        assert!(r.is_err());
    }

    #[test]
    fn overcapacity_needs_components() {
        let cfg = parse("[trace]\nvalues_mw = [1.0]\novercapacity = 0.3\n");
        assert!(matches!(cfg.residual_trace(), Err(CliError::Config(_))));
        let cfg = parse("[trace]\novercapacity = 0.3\n[trace.synthetic]\nyears = 0.1\n");
        let t = cfg.residual_trace().unwrap();
        let mean = t.values().iter().sum::<f64>() / t.len() as f64;
        assert!(mean > 0.0);
        assert_eq!(t.overcapacity, Some(0.3));
    }

    #[test]
    fn grid_expands_after_the_empty_candidate() {
        let cfg = parse(
            r#"
            [trace]
            values_mw = [1.0]
            [sizing.secondary_grid]
            name = "medium"
            efficiency = 0.7
            capacities_mwh = [10.0, 20.0]
            powers_mw = [1.0, 2.0, 3.0]
            capacity_usd_per_kwh = 9.0
            output_power_usd_per_kw = 200.0
            input_power_usd_per_kw = 200.0
            "#,
        );
        let c = cfg.secondary_candidates().unwrap();
        assert_eq!(c.len(), 7);
        assert!(c[0].is_empty());
        assert_eq!(c[6][0].spec.capacity_mwh, 20.0);
        assert_eq!(c[6][0].spec.input_power_mw, 3.0);
    }
}
