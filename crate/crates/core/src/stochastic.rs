//! Seeded exogenous randomness: arrivals, acceptance draws, EV requests and
//! renewable output.
//!
//! Every random quantity is drawn from a ChaCha8 stream addressed by
//! `(master seed, purpose, indices)`, so a path can be regenerated on its own
//! and two consumers that address the same stream see the same numbers.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::env::{solar_power, wind_power, Arrival, StageExogenous, StationParams, StationState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvRequest {
    /// Parking duration in stages.
    pub stages: u32,
    /// Required energy, kWh.
    pub energy: f64,
}

/// Distribution of arriving EV requests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RequestModel {
    pub max_stages: u32,
    /// Draw energy on a quarter-stage grid instead of whole stages.
    pub quarter_grid: bool,
    /// Relative standard deviation of renewable output around the forecast.
    pub renewable_noise: f64,
}

impl Default for RequestModel {
    fn default() -> Self {
        Self {
            max_stages: 6,
            quarter_grid: false,
            renewable_noise: 0.1,
        }
    }
}

/// Purpose tags that keep independent consumers on disjoint streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Day = 1,
    Estimation = 2,
    Scenario = 3,
    Exploration = 4,
    Toy = 5,
    Test = 6,
    Training = 7,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Deterministic RNG for `(seed, purpose, indices)`.
pub fn stream_rng(seed: u64, purpose: Stream, indices: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix(purpose as u64);
    for &i in indices {
        h = splitmix(h ^ i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(h);
    rng
}

pub fn sample_arrival_count<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<usize> {
    if !(rate >= 0.0) {
        return Err(Error::NegativeInput {
            what: "arrival rate",
            value: rate,
        });
    }
    if rate == 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(rate).map_err(|e| Error::Config(e.to_string()))?;
    Ok(d.sample(rng) as usize)
}

pub fn acceptance_draw<R: Rng + ?Sized>(price: f64, cap: f64, rng: &mut R) -> Result<bool> {
    if !(0.0..=cap).contains(&price) {
        return Err(Error::PriceOutOfRange { price, cap });
    }
    let u: f64 = rng.random();
    Ok(u < 1.0 - price / cap)
}

pub fn sample_ev_request<R: Rng + ?Sized>(params: &StationParams, model: &RequestModel, rng: &mut R) -> EvRequest {
    let stages = rng.random_range(1..=model.max_stages);
    let unit = params.unit_energy();
    let energy = if model.quarter_grid {
        rng.random_range(1..=4 * stages) as f64 * unit / 4.0
    } else {
        rng.random_range(1..=stages) as f64 * unit
    };
    EvRequest { stages, energy }
}

fn noisy<R: Rng + ?Sized>(pred: f64, rel_sd: f64, cap: f64, rng: &mut R) -> f64 {
    let sd = rel_sd * pred;
    if !(sd > 0.0) {
        return pred.clamp(0.0, cap);
    }
    let z: f64 = rand_distr::StandardNormal.sample(rng);
    (pred + sd * z).clamp(0.0, cap)
}

/// Realized wind and solar output around their forecasts, clipped to capacity.
pub fn sample_renewables<R: Rng + ?Sized>(
    predicted_wind: f64,
    predicted_solar: f64,
    params: &StationParams,
    model: &RequestModel,
    rng: &mut R,
) -> (f64, f64) {
    let w = noisy(predicted_wind, model.renewable_noise, params.wind_capacity_kw, rng);
    let s = noisy(predicted_solar, model.renewable_noise, params.solar_capacity_kw, rng);
    (w, s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub hour: usize,
    pub wind_speed_mps: f64,
    pub irradiance_wm2: f64,
}

/// Hourly wind-speed and irradiance forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewableProfile {
    pub rows: Vec<ProfileRow>,
}

const BUNDLED_PROFILE: &str = include_str!("../data/renewable_profile.csv");

impl Default for RenewableProfile {
    fn default() -> Self {
        Self::from_csv_str(BUNDLED_PROFILE).expect("bundled profile parses")
    }
}

impl RenewableProfile {
    pub fn from_csv_str(text: &str) -> Result<Self> {
        Self::from_reader(text.as_bytes())
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    fn from_reader<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut rows: Vec<ProfileRow> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
        rows.sort_by_key(|r| r.hour);
        if rows.is_empty() || rows.iter().enumerate().any(|(i, r)| r.hour != i) {
            return Err(Error::Config("profile hours must be 0..n without gaps".into()));
        }
        if rows.iter().any(|r| !(r.wind_speed_mps >= 0.0 && r.irradiance_wm2 >= 0.0)) {
            return Err(Error::Config("profile values must be nonnegative".into()));
        }
        Ok(Self { rows })
    }

    fn row(&self, stage: usize) -> &ProfileRow {
        &self.rows[stage % self.rows.len()]
    }

    /// Forecast (wind, solar) power at a stage, kW.
    pub fn predicted(&self, stage: usize, params: &StationParams) -> (f64, f64) {
        let r = self.row(stage);
        (
            wind_power(r.wind_speed_mps, params).unwrap_or(0.0),
            solar_power(r.irradiance_wm2, params).unwrap_or(0.0),
        )
    }

    /// Forecasts for every stage of one period.
    pub fn predicted_table(&self, params: &StationParams) -> Vec<(f64, f64)> {
        (0..self.rows.len()).map(|h| self.predicted(h, params)).collect()
    }
}

/// Everything random about the station environment, bundled for reuse.
#[derive(Debug, Clone, PartialEq)]
pub struct Exogenous {
    pub params: StationParams,
    pub requests: RequestModel,
    /// Forecast (wind, solar) kW by clock hour.
    pub forecast: Vec<(f64, f64)>,
}

impl Exogenous {
    pub fn new(params: StationParams, requests: RequestModel, profile: &RenewableProfile) -> Self {
        let forecast = profile.predicted_table(&params);
        Self {
            params,
            requests,
            forecast,
        }
    }

    pub fn forecast_at(&self, stage: usize) -> (f64, f64) {
        self.forecast[stage % self.forecast.len()]
    }

    /// Draws the exogenous inputs of `stage`.
    pub fn sample_stage<R: Rng + ?Sized>(&self, stage: usize, rng: &mut R) -> StageExogenous {
        let count = sample_arrival_count(self.params.arrival_rate_at(stage), rng).unwrap_or(0);
        let arrivals = (0..count)
            .map(|_| Arrival {
                accept_draw: rng.random(),
                request: sample_ev_request(&self.params, &self.requests, rng),
            })
            .collect();
        let (pw, ps) = self.forecast_at(stage + 1);
        let (next_wind, next_solar) = sample_renewables(pw, ps, &self.params, &self.requests, rng);
        StageExogenous {
            arrivals,
            next_wind,
            next_solar,
        }
    }

    /// Initial state at `stage` with forecast renewables and empty piles.
    pub fn initial_state(&self, stage: usize) -> StationState {
        let (w, s) = self.forecast_at(stage);
        StationState::empty(&self.params, w, s, stage)
    }
}

/// One seeded realization of the exogenous inputs over consecutive stages.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub start: usize,
    pub stages: Vec<StageExogenous>,
}

impl SamplePath {
    pub fn generate<R: Rng + ?Sized>(exo: &Exogenous, start: usize, len: usize, rng: &mut R) -> Self {
        let stages = (0..len).map(|k| exo.sample_stage(start + k, rng)).collect();
        Self { start, stages }
    }
}

/// `M` paths that share the stage and the initial state they start from.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub state: StationState,
    pub paths: Vec<SamplePath>,
}

/// Generates `count` paths over `len` stages from `state`, path `m` on stream
/// `(seed, purpose, key.., m)`.
pub fn generate_sample_paths(
    exo: &Exogenous,
    state: &StationState,
    len: usize,
    count: usize,
    seed: u64,
    purpose: Stream,
    key: &[u64],
) -> ScenarioSet {
    let paths = (0..count)
        .map(|m| {
            let mut idx = key.to_vec();
            idx.push(m as u64);
            let mut rng = stream_rng(seed, purpose, &idx);
            SamplePath::generate(exo, state.stage, len, &mut rng)
        })
        .collect();
    ScenarioSet {
        state: state.clone(),
        paths,
    }
}
