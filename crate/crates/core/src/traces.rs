//! Residual-energy traces: CSV ingestion, overcapacity rescaling, a seeded
//! synthetic generator and descriptive statistics.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HOURS_PER_YEAR: usize = 8760;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("line {line}: non-finite value")]
    NonFiniteValue { line: u64 },
    #[error("trace is empty")]
    Empty,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("invalid synthesis parameters: {0}")]
    InvalidParams(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceOrigin {
    Csv(PathBuf),
    Synthetic { seed: u64, params: SynthParams },
    Inline,
}

/// Hourly generation-minus-demand series in MW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualTrace {
    values: Vec<f64>,
    pub origin: TraceOrigin,
    /// Mean generation surplus as a fraction of mean demand, when known.
    pub overcapacity: Option<f64>,
}

impl ResidualTrace {
    pub fn new(values: Vec<f64>) -> Result<Self, TraceError> {
        Self::with_origin(values, TraceOrigin::Inline, None)
    }

    pub fn with_origin(
        values: Vec<f64>,
        origin: TraceOrigin,
        overcapacity: Option<f64>,
    ) -> Result<Self, TraceError> {
        if values.is_empty() {
            return Err(TraceError::Empty);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(TraceError::NonFiniteValue { line: i as u64 + 2 });
        }
        Ok(Self {
            values,
            origin,
            overcapacity,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn years(&self) -> f64 {
        self.values.len() as f64 / HOURS_PER_YEAR as f64
    }

    pub fn is_synthetic(&self) -> bool {
        matches!(self.origin, TraceOrigin::Synthetic { .. })
    }

    /// Total demand that the stores would have to meet, MWh.
    pub fn total_deficit(&self) -> f64 {
        self.values.iter().map(|v| (-v).max(0.0)).sum()
    }

    pub fn max_deficit(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(-v))
    }

    pub fn max_surplus(&self) -> f64 {
        self.values.iter().fold(0.0, |m, &v| m.max(v))
    }

    /// Mean of the strictly positive entries, 0 if there are none.
    pub fn mean_surplus(&self) -> f64 {
        let (sum, n) = self
            .values
            .iter()
            .filter(|&&v| v > 0.0)
            .fold((0.0, 0usize), |(s, n), &v| (s + v, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Write as a single `residual_mw` column.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), TraceError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["residual_mw"])?;
        for v in &self.values {
            w.write_record([v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), TraceError> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Demand and generation components read from a `demand_mw,wind_mw,solar_mw`
/// file or produced by [`synthesize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Components {
    pub demand: Vec<f64>,
    pub wind: Vec<f64>,
    pub solar: Vec<f64>,
}

impl Components {
    pub fn generation(&self) -> Vec<f64> {
        self.wind
            .iter()
            .zip(&self.solar)
            .map(|(w, s)| w + s)
            .collect()
    }

    pub fn residual(&self) -> Vec<f64> {
        self.wind
            .iter()
            .zip(&self.solar)
            .zip(&self.demand)
            .map(|((w, s), d)| w + s - d)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), TraceError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["demand_mw", "wind_mw", "solar_mw"])?;
        for ((d, wi), s) in self.demand.iter().zip(&self.wind).zip(&self.solar) {
            w.write_record([d.to_string(), wi.to_string(), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Rescale wind and solar together so that mean generation is
    /// `(1 + oc)` times mean demand.
    pub fn scaled(&self, oc: f64) -> Result<Components, TraceError> {
        let k = scale_factor(&self.demand, &self.generation(), oc)?;
        Ok(Components {
            demand: self.demand.clone(),
            wind: self.wind.iter().map(|w| k * w).collect(),
            solar: self.solar.iter().map(|s| k * s).collect(),
        })
    }
}

/// Parsed CSV contents: either a bare residual column or components.
#[derive(Debug, Clone, PartialEq)]
pub enum CsvData {
    Residual(Vec<f64>),
    Components(Components),
}

fn parse_cell(raw: &str, line: u64) -> Result<f64, TraceError> {
    let v: f64 = raw.trim().parse().map_err(|_| TraceError::Parse {
        line,
        message: format!("cannot parse `{raw}` as a number"),
    })?;
    if !v.is_finite() {
        return Err(TraceError::NonFiniteValue { line });
    }
    Ok(v)
}

/// Read either schema from any reader. Line numbers in errors are 1-based
/// and count the header.
pub fn read_csv_data<R: Read>(reader: R) -> Result<CsvData, TraceError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let layout = if let Some(r) = col("residual_mw") {
        vec![r]
    } else {
        match (col("demand_mw"), col("wind_mw"), col("solar_mw")) {
            (Some(d), Some(w), Some(s)) => vec![d, w, s],
            _ => {
                return Err(TraceError::Schema(format!(
                    "expected `residual_mw` or `demand_mw,wind_mw,solar_mw`, found `{}`",
                    headers.iter().collect::<Vec<_>>().join(",")
                )))
            }
        }
    };
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); layout.len()];
    for (idx, record) in rdr.records().enumerate() {
        let line = idx as u64 + 2;
        let record = record.map_err(|e| TraceError::Parse {
            line,
            message: e.to_string(),
        })?;
        for (c, &pos) in layout.iter().enumerate() {
            let raw = record.get(pos).ok_or_else(|| TraceError::Parse {
                line,
                message: "missing field".into(),
            })?;
            cols[c].push(parse_cell(raw, line)?);
        }
    }
    if cols[0].is_empty() {
        return Err(TraceError::Empty);
    }
    Ok(if cols.len() == 1 {
        CsvData::Residual(cols.pop().unwrap_or_default())
    } else {
        let solar = cols.pop().unwrap_or_default();
        let wind = cols.pop().unwrap_or_default();
        let demand = cols.pop().unwrap_or_default();
        CsvData::Components(Components {
            demand,
            wind,
            solar,
        })
    })
}

pub fn load_csv_data(path: &Path) -> Result<CsvData, TraceError> {
    read_csv_data(std::fs::File::open(path)?)
}

/// Load a residual trace; component files yield `wind + solar - demand`.
pub fn load_csv(path: &Path) -> Result<ResidualTrace, TraceError> {
    let values = match load_csv_data(path)? {
        CsvData::Residual(v) => v,
        CsvData::Components(c) => c.residual(),
    };
    ResidualTrace::with_origin(values, TraceOrigin::Csv(path.to_path_buf()), None)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn scale_factor(demand: &[f64], generation: &[f64], oc: f64) -> Result<f64, TraceError> {
    if demand.is_empty() || demand.len() != generation.len() {
        return Err(TraceError::DegenerateInput(format!(
            "demand has {} samples, generation {}",
            demand.len(),
            generation.len()
        )));
    }
    let (md, mg) = (mean(demand), mean(generation));
    if !(md > 0.0) || !(mg > 0.0) {
        return Err(TraceError::DegenerateInput(format!(
            "mean demand {md} and mean generation {mg} must both be positive"
        )));
    }
    Ok((1.0 + oc) * md / mg)
}

/// Residual `k*generation - demand` with `k` chosen so the mean residual is
/// `oc` times the mean demand.
pub fn scale_to_overcapacity(
    demand: &[f64],
    generation: &[f64],
    oc: f64,
) -> Result<ResidualTrace, TraceError> {
    let k = scale_factor(demand, generation, oc)?;
    let values = generation
        .iter()
        .zip(demand)
        .map(|(g, d)| k * g - d)
        .collect();
    ResidualTrace::with_origin(values, TraceOrigin::Inline, Some(oc))
}

/// Parameters of the synthetic demand/generation generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub years: f64,
    pub seed: u64,
    pub base_demand_mw: f64,
    /// Relative amplitude of the daily demand cycle.
    pub diurnal_amp: f64,
    /// Relative amplitude of the annual cycle (demand peaks in winter; wind
    /// and solar are modulated by the same amplitude).
    pub seasonal_amp: f64,
    /// Relative weekday/weekend demand swing.
    pub weekly_amp: f64,
    /// Hourly persistence of the weather anomaly driving wind output.
    pub ar_coeff: f64,
    /// Standard deviation of the hourly weather innovation.
    pub noise_sd: f64,
    pub solar_share: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            years: 1.0,
            seed: 1,
            base_demand_mw: 68_600.0,
            diurnal_amp: 0.15,
            seasonal_amp: 0.2,
            weekly_amp: 0.05,
            ar_coeff: 0.985,
            noise_sd: 0.09,
            solar_share: 0.2,
        }
    }
}

impl SynthParams {
    pub fn hours(&self) -> Result<usize, TraceError> {
        let h = (self.years * HOURS_PER_YEAR as f64).round();
        if !(h >= 1.0) || !h.is_finite() {
            return Err(TraceError::InvalidParams(format!(
                "years = {} gives fewer than one hour",
                self.years
            )));
        }
        Ok(h as usize)
    }

    fn validate(&self) -> Result<(), TraceError> {
        self.hours()?;
        let checks = [
            (self.base_demand_mw > 0.0, "base_demand_mw must be positive"),
            (
                (0.0..=1.0).contains(&self.solar_share),
                "solar_share must lie in [0, 1]",
            ),
            (self.ar_coeff.abs() < 1.0, "|ar_coeff| must be below 1"),
            (self.noise_sd >= 0.0, "noise_sd must be nonnegative"),
            (
                self.diurnal_amp >= 0.0 && self.seasonal_amp >= 0.0 && self.weekly_amp >= 0.0,
                "amplitudes must be nonnegative",
            ),
            (
                self.diurnal_amp + self.seasonal_amp + self.weekly_amp < 1.0,
                "amplitudes must sum below 1 to keep demand positive",
            ),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(TraceError::InvalidParams(msg.into()));
            }
        }
        Ok(())
    }
}

/// Deterministic hourly demand, wind and solar series. Wind and solar are
/// already weighted by `1 - solar_share` and `solar_share`, in MW units of
/// the base demand (mean generation is close to, but not exactly, the mean
/// demand; use [`Components::scaled`] to set an overcapacity).
pub fn synthesize(params: &SynthParams) -> Result<Components, TraceError> {
    params.validate()?;
    let n = params.hours()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let base = params.base_demand_mw;
    let mut demand = Vec::with_capacity(n);
    let mut wind = Vec::with_capacity(n);
    let mut solar = Vec::with_capacity(n);
    let mut anomaly = 0.0_f64;
    for t in 0..n {
        let hour_of_day = (t % 24) as f64;
        let day_of_week = (t / 24) % 7;
        // t = 0 is midwinter
        let season = (2.0 * PI * t as f64 / HOURS_PER_YEAR as f64).cos();
        let daily = (2.0 * PI * (hour_of_day - 18.0) / 24.0).cos();
        let weekly = if day_of_week >= 5 { -1.0 } else { 0.4 };
        demand.push(
            base * (1.0
                + params.diurnal_amp * daily
                + params.seasonal_amp * season
                + params.weekly_amp * weekly),
        );

        let eps: f64 = StandardNormal.sample(&mut rng);
        anomaly = params.ar_coeff * anomaly + params.noise_sd * eps;
        let w = (1.0 + 0.5 * params.seasonal_amp * season + anomaly).max(0.0);
        wind.push(base * (1.0 - params.solar_share) * w);

        let sun = (PI * (hour_of_day - 6.0) / 12.0).sin().max(0.0);
        // daylight mean of the clipped profile is 1/pi
        let s = PI * sun * (1.0 - params.seasonal_amp * season);
        solar.push(base * params.solar_share * s);
    }
    Ok(Components {
        demand,
        wind,
        solar,
    })
}

/// Synthetic residual trace at overcapacity `oc`.
pub fn synthetic_trace(params: &SynthParams, oc: f64) -> Result<ResidualTrace, TraceError> {
    let c = synthesize(params)?;
    let scaled = scale_to_overcapacity(&c.demand, &c.generation(), oc)?;
    ResidualTrace::with_origin(
        scaled.values,
        TraceOrigin::Synthetic {
            seed: params.seed,
            params: params.clone(),
        },
        Some(oc),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStats {
    pub histogram: Vec<HistogramBin>,
    /// `(lag, autocorrelation)` pairs.
    pub acf: Vec<(usize, f64)>,
}

impl TraceStats {
    pub fn write_histogram_csv<W: Write>(&self, writer: W) -> Result<(), TraceError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["bin_left", "bin_right", "count"])?;
        for b in &self.histogram {
            w.write_record([b.left.to_string(), b.right.to_string(), b.count.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_acf_csv<W: Write>(&self, writer: W) -> Result<(), TraceError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["lag", "acf"])?;
        for (lag, r) in &self.acf {
            w.write_record([lag.to_string(), r.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Equal-width histogram over `[min, max]` and the sample autocorrelation
/// `sum (x_t - m)(x_{t+k} - m) / sum (x_t - m)^2` at each lag.
pub fn trace_stats(trace: &[f64], bins: usize, lags: &[usize]) -> Result<TraceStats, TraceError> {
    let n = trace.len();
    let max_lag = lags.iter().copied().max().unwrap_or(0);
    if n <= max_lag || n < 2 {
        return Err(TraceError::InsufficientData(format!(
            "{n} samples for maximum lag {max_lag}"
        )));
    }
    if bins == 0 {
        return Err(TraceError::InsufficientData("zero histogram bins".into()));
    }
    let m = mean(trace);
    let denom: f64 = trace.iter().map(|x| (x - m) * (x - m)).sum();
    if !(denom > 0.0) {
        return Err(TraceError::InsufficientData(
            "zero variance, autocorrelation undefined".into(),
        ));
    }
    let acf = lags
        .iter()
        .map(|&k| {
            let num: f64 = (0..n - k)
                .map(|t| (trace[t] - m) * (trace[t + k] - m))
                .sum();
            (k, num / denom)
        })
        .collect();

    let lo = trace.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = trace.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in trace {
        let b = (((x - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let histogram = counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            left: lo + i as f64 * width,
            right: if i + 1 == bins {
                hi
            } else {
                lo + (i + 1) as f64 * width
            },
            count,
        })
        .collect();
    Ok(TraceStats { histogram, acf })
}
