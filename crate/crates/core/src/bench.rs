//! Policy roster, day simulation, benchmark metrics and parameter sweeps.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::ebo::{run_online_iteration, IterationLog, LearnConfig, PricingPolicy};
use crate::env::{admit, transition_admitted, ArrivalRate, EventClass, StationParams};
use crate::error::{Error, Result};
use crate::heuristic::{heuristic_action, ChargeRule};
use crate::mpc::{mpc_control, MpcConfig};
use crate::stochastic::{stream_rng, Exogenous, RenewableProfile, RequestModel, Stream};

/// Stand-in event price table, E1..E5.
pub const DEFAULT_EVENT_PRICES: [f64; EventClass::COUNT] = [1.0, 1.4, 1.8, 2.1, 2.4];

pub fn event_price_baseline(event: EventClass, table: &[f64; EventClass::COUNT]) -> f64 {
    table[event.index()]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "lowercase")]
pub enum Pricing {
    Learned,
    Constant(f64),
    Event([f64; EventClass::COUNT]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Control {
    Mpc,
    Greedy,
    Delayed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub id: String,
    pub pricing: Pricing,
    pub control: Control,
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

impl PolicySpec {
    /// Price table this policy posts; `learned` is required for learned pricing.
    pub fn price_table(&self, horizon: usize, learned: Option<&PricingPolicy>) -> Result<PricingPolicy> {
        match self.pricing {
            Pricing::Learned => learned.cloned().ok_or_else(|| Error::Config(format!("{} needs a learned policy", self.id))),
            Pricing::Constant(p) => Ok(PricingPolicy::constant(horizon, p)),
            Pricing::Event(table) => {
                let mut pol = PricingPolicy::constant(horizon, table[0]);
                for row in pol.table.iter_mut() {
                    *row = table;
                }
                Ok(pol)
            }
        }
    }
}

/// The ten policies: learned, high and low constant prices crossed with
/// MPC, greedy and delayed charging, plus event pricing with MPC.
pub fn standard_roster(settings: &BenchSettings) -> Vec<PolicySpec> {
    let spec = |id: &str, pricing, control| PolicySpec {
        id: id.to_string(),
        pricing,
        control,
    };
    let high = Pricing::Constant(settings.high_price);
    let low = Pricing::Constant(settings.low_price);
    vec![
        spec("pi*", Pricing::Learned, Control::Mpc),
        spec("pi1", Pricing::Learned, Control::Greedy),
        spec("pi2", Pricing::Learned, Control::Delayed),
        spec("pi3", high, Control::Mpc),
        spec("pi4", high, Control::Greedy),
        spec("pi5", high, Control::Delayed),
        spec("pi6", low, Control::Mpc),
        spec("pi7", low, Control::Greedy),
        spec("pi8", low, Control::Delayed),
        spec("pi9", Pricing::Event(settings.event_prices), Control::Mpc),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSettings {
    /// Paired evaluation days.
    pub seeds: usize,
    /// Master seed for evaluation days.
    pub seed: u64,
    pub high_price: f64,
    pub low_price: f64,
    pub event_prices: [f64; EventClass::COUNT],
    /// Training episode cap used inside sweeps.
    pub sweep_episodes: usize,
    /// Evaluation days per sweep point.
    pub sweep_seeds: usize,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            seeds: 20,
            seed: 1,
            high_price: 2.3,
            low_price: 0.3,
            event_prices: DEFAULT_EVENT_PRICES,
            sweep_episodes: 150,
            sweep_seeds: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Full,
}

impl std::str::FromStr for Profile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "full" => Ok(Profile::Full),
            other => Err(Error::Config(format!("unknown profile {other:?}"))),
        }
    }
}

/// Everything a run needs, loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub station: StationParams,
    pub requests: RequestModel,
    pub learn: LearnConfig,
    pub mpc: MpcConfig,
    pub bench: BenchSettings,
    /// Renewable profile CSV; the bundled profile when absent.
    pub profile_csv: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::profile(Profile::Desk)
    }
}

impl ExperimentConfig {
    /// Desk: 10 piles and 30 estimation paths. Full: 20 piles and 100 paths.
    pub fn profile(profile: Profile) -> Self {
        let (piles, paths) = match profile {
            Profile::Desk => (10, 30),
            Profile::Full => (20, 100),
        };
        Self {
            station: StationParams {
                piles,
                ..StationParams::default()
            },
            requests: RequestModel::default(),
            learn: LearnConfig {
                paths,
                ..LearnConfig::default()
            },
            mpc: MpcConfig::default(),
            bench: BenchSettings::default(),
            profile_csv: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.station.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn exogenous(&self) -> Result<Exogenous> {
        let profile = match &self.profile_csv {
            Some(p) => RenewableProfile::from_path(Path::new(p))?,
            None => RenewableProfile::default(),
        };
        Ok(Exogenous::new(self.station.clone(), self.requests, &profile))
    }
}

/// One simulated stage, as written to trace CSVs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    pub event: EventClass,
    pub price: f64,
    pub occupied: usize,
    pub arrivals: usize,
    pub entered: usize,
    pub lost: usize,
    pub charging: usize,
    pub wind_used: f64,
    pub solar_used: f64,
    pub storage_power: f64,
    pub grid: f64,
    pub soc: f64,
    pub earning: f64,
    pub operating: f64,
    pub qos: f64,
}

/// Totals of one simulated day.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DayMetrics {
    pub obj_profit_minus_qos: f64,
    pub obj_with_variance: f64,
    pub profit: f64,
    pub earning: f64,
    pub procure: f64,
    pub storage_cost: f64,
    pub wind_cost: f64,
    pub solar_cost: f64,
    pub qos_cost: f64,
    pub variance_penalty: f64,
    pub service_ratio: f64,
    pub arrival_num: f64,
    pub enter_num: f64,
    pub price_std: f64,
    pub price_gap: f64,
    pub avg_cost_per_ev: f64,
    pub mpc_solves: usize,
    pub mpc_fallbacks: usize,
    pub mpc_max_gap: f64,
}

/// Largest violation of the accounting identities on one day.
pub fn identity_residual(m: &DayMetrics, params: &StationParams) -> f64 {
    let profit = m.earning - m.procure - m.storage_cost - m.wind_cost - m.solar_cost;
    let qos = params.lost_ev_cost * (m.arrival_num - m.enter_num);
    let mut r = (m.profit - profit).abs().max((m.qos_cost - qos).abs());
    r = r.max((m.obj_profit_minus_qos - (m.profit - m.qos_cost)).abs());
    if m.enter_num > 0.0 {
        r = r.max((m.avg_cost_per_ev - m.earning / m.enter_num).abs());
    }
    if m.arrival_num > 0.0 {
        r = r.max((m.service_ratio - m.enter_num / m.arrival_num).abs());
    }
    r
}

fn population_std(xs: &[f64]) -> f64 {
    // Deviations from the first price keep constant series exactly at zero.
    let x0 = xs[0];
    let n = xs.len() as f64;
    let shift = xs.iter().map(|x| x - x0).sum::<f64>() / n;
    (xs.iter().map(|x| (x - x0 - shift).powi(2)).sum::<f64>() / n).sqrt()
}

/// Squared deviation of each posted price from the mean of the prices
/// posted over its window (cut at the end of the day).
fn variance_penalty(prices: &[f64], window: usize, beta: f64) -> f64 {
    (0..prices.len())
        .map(|t| {
            let w = &prices[t..(t + window).min(prices.len())];
            let shift = w.iter().map(|p| p - prices[t]).sum::<f64>() / w.len() as f64;
            beta * shift * shift
        })
        .sum()
}

/// Simulates one day from an empty station on the day stream of `seed`.
pub fn simulate_day(
    exo: &Exogenous,
    control: Control,
    prices: &PricingPolicy,
    mpc: &MpcConfig,
    seed: u64,
    mut trace: Option<&mut Vec<StageRecord>>,
) -> Result<DayMetrics> {
    let params = &exo.params;
    let mut state = exo.initial_state(0);
    let mut rng = stream_rng(seed, Stream::Day, &[]);
    let mut m = DayMetrics::default();
    let mut posted = Vec::with_capacity(params.horizon);
    for t in 0..params.horizon {
        let x = exo.sample_stage(t, &mut rng);
        let event = state.event();
        let price = prices.price(t, event);
        let adm = admit(&state, price, &x.arrivals, params)?;
        let action = match control {
            Control::Greedy => heuristic_action(&adm.state, price, ChargeRule::Greedy, params),
            Control::Delayed => heuristic_action(&adm.state, price, ChargeRule::Delayed, params),
            Control::Mpc => {
                m.mpc_solves += 1;
                match mpc_control(exo, &adm, price, prices, mpc, seed, &[t as u64]) {
                    Ok(sol) => {
                        m.mpc_max_gap = m.mpc_max_gap.max(sol.gap);
                        sol.action
                    }
                    Err(Error::Solver { .. }) => {
                        m.mpc_fallbacks += 1;
                        heuristic_action(&adm.state, price, ChargeRule::Greedy, params)
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        let tr = transition_admitted(&adm, &action, x.next_wind, x.next_solar, price, params)?;
        let r = &tr.reward;
        m.earning += r.earning;
        m.procure += r.procure_cost;
        m.storage_cost += r.storage_cost;
        m.wind_cost += r.wind_cost;
        m.solar_cost += r.solar_cost;
        m.qos_cost += r.qos_cost;
        m.arrival_num += tr.counters.arrivals as f64;
        m.enter_num += tr.counters.entered as f64;
        posted.push(price);
        if let Some(trace) = trace.as_deref_mut() {
            trace.push(StageRecord {
                stage: t,
                event,
                price,
                occupied: tr.counters.occupied,
                arrivals: tr.counters.arrivals,
                entered: tr.counters.entered,
                lost: tr.counters.lost,
                charging: action.charge.iter().filter(|&&z| z).count(),
                wind_used: action.wind_used,
                solar_used: action.solar_used,
                storage_power: action.storage_power,
                grid: tr.grid,
                soc: adm.state.soc,
                earning: r.earning,
                operating: r.operating(),
                qos: r.qos_cost,
            });
        }
        state = tr.state;
    }
    m.profit = m.earning - m.procure - m.storage_cost - m.wind_cost - m.solar_cost;
    m.obj_profit_minus_qos = m.profit - m.qos_cost;
    m.variance_penalty = variance_penalty(&posted, params.window, params.variance_weight);
    m.obj_with_variance = m.obj_profit_minus_qos - m.variance_penalty;
    m.service_ratio = if m.arrival_num > 0.0 { m.enter_num / m.arrival_num } else { 0.0 };
    m.avg_cost_per_ev = if m.enter_num > 0.0 { m.earning / m.enter_num } else { 0.0 };
    m.price_std = population_std(&posted);
    let (lo, hi) = posted.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &p| (a.min(p), b.max(p)));
    m.price_gap = hi - lo;
    Ok(m)
}

/// Sample mean with a two-sided 95% Student-t half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n.max(1) as f64;
        if n < 2 {
            return Self { mean, half_width: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .map(|d| d.inverse_cdf(0.975))
            .unwrap_or(1.96);
        Self {
            mean,
            half_width: t * (var / n as f64).sqrt(),
        }
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }
}

/// Paired difference `a - b` over common seeds.
pub fn paired_difference(a: &[f64], b: &[f64]) -> Estimate {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    Estimate::from_samples(&d)
}

/// Per-seed metrics of one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRun {
    pub spec: PolicySpec,
    pub days: Vec<DayMetrics>,
    pub seconds: f64,
}

impl PolicyRun {
    pub fn column(&self, f: impl Fn(&DayMetrics) -> f64) -> Vec<f64> {
        self.days.iter().map(f).collect()
    }

    pub fn estimate(&self, f: impl Fn(&DayMetrics) -> f64) -> Estimate {
        Estimate::from_samples(&self.column(f))
    }
}

/// Evaluation day seeds shared by every policy.
pub fn day_seeds(settings: &BenchSettings) -> Vec<u64> {
    (0..settings.seeds as u64).map(|i| settings.seed.wrapping_mul(1_000_003).wrapping_add(i)).collect()
}

/// Simulates every policy on the same days.
pub fn run_benchmark(
    exo: &Exogenous,
    specs: &[PolicySpec],
    learned: Option<&PricingPolicy>,
    seeds: &[u64],
    mpc: &MpcConfig,
) -> Result<Vec<PolicyRun>> {
    let horizon = exo.params.horizon;
    specs
        .iter()
        .map(|spec| {
            let prices = spec.price_table(horizon, learned)?;
            let started = Instant::now();
            let days = seeds
                .iter()
                .map(|&s| simulate_day(exo, spec.control, &prices, mpc, s, None))
                .collect::<Result<Vec<_>>>()?;
            Ok(PolicyRun {
                spec: spec.clone(),
                days,
                seconds: started.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

type Field = (&'static str, fn(&DayMetrics) -> f64);

/// Table columns in report order.
pub const METRIC_FIELDS: [Field; 16] = [
    ("obj", |m| m.obj_profit_minus_qos),
    ("obj_with_variance", |m| m.obj_with_variance),
    ("profit", |m| m.profit),
    ("earning", |m| m.earning),
    ("procure", |m| m.procure),
    ("storage_cost", |m| m.storage_cost),
    ("wind_cost", |m| m.wind_cost),
    ("solar_cost", |m| m.solar_cost),
    ("qos_cost", |m| m.qos_cost),
    ("service_ratio", |m| m.service_ratio),
    ("arrivals", |m| m.arrival_num),
    ("entered", |m| m.enter_num),
    ("price_std", |m| m.price_std),
    ("avg_cost", |m| m.avg_cost_per_ev),
    ("price_gap", |m| m.price_gap),
    ("mpc_fallbacks", |m| m.mpc_fallbacks as f64),
];

/// Writes one row per policy: the mean of each metric and its 95% half-width.
pub fn write_benchmark_csv<W: Write>(runs: &[PolicyRun], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["policy".to_string(), "pricing".to_string(), "control".to_string(), "days".to_string()];
    for (name, _) in METRIC_FIELDS {
        header.push(name.to_string());
        header.push(format!("{name}_ci95"));
    }
    out.write_record(&header)?;
    for run in runs {
        let pricing = match run.spec.pricing {
            Pricing::Learned => "learned".to_string(),
            Pricing::Constant(p) => format!("constant {p}"),
            Pricing::Event(t) => format!("event {t:?}"),
        };
        let control = format!("{:?}", run.spec.control).to_lowercase();
        let mut row = vec![run.spec.id.clone(), pricing, control, run.days.len().to_string()];
        for (_, f) in METRIC_FIELDS {
            let e = run.estimate(f);
            row.push(format!("{:.6}", e.mean));
            row.push(format!("{:.6}", e.half_width));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_trace_csv<W: Write>(trace: &[StageRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in trace {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Trains a pricing table on `exo`.
pub fn learn_policy(exo: &Exogenous, learn: &LearnConfig) -> Result<(PricingPolicy, IterationLog)> {
    run_online_iteration(exo, learn)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPoint {
    pub beta: f64,
    pub repetition: usize,
    pub price_std: f64,
    pub price_gap: f64,
    pub obj: f64,
    pub episodes: usize,
    /// Whether every best-value record in the training run was nondecreasing.
    pub monotone: bool,
}

/// Trains the learned policy for every `beta`; repetition `r` uses the same
/// training seed for all betas. Price statistics are means over the paired
/// evaluation days. Posted prices do not depend on the charging controller,
/// so those days run the greedy controller; `obj` is one MPC day.
pub fn beta_sweep(cfg: &ExperimentConfig, betas: &[f64], repetitions: usize) -> Result<Vec<BetaPoint>> {
    let seeds = day_seeds(&cfg.bench);
    let mut out = Vec::new();
    for r in 0..repetitions {
        let day = seeds[0].wrapping_add(10_000 + r as u64);
        for &beta in betas {
            if beta < 0.0 {
                return Err(Error::NegativeInput { what: "beta", value: beta });
            }
            let mut c = cfg.clone();
            c.station.variance_weight = beta;
            c.learn.seed = cfg.learn.seed.wrapping_add(r as u64);
            c.learn.max_episodes = cfg.bench.sweep_episodes;
            let exo = c.exogenous()?;
            let (policy, log) = learn_policy(&exo, &c.learn)?;
            let m = simulate_day(&exo, Control::Mpc, &policy, &c.mpc, day, None)?;
            let (mut std, mut gap) = (0.0, 0.0);
            for &s in &seeds {
                let g = simulate_day(&exo, Control::Greedy, &policy, &c.mpc, s, None)?;
                std += g.price_std;
                gap += g.price_gap;
            }
            let n = seeds.len().max(1) as f64;
            out.push(BetaPoint {
                beta,
                repetition: r,
                price_std: std / n,
                price_gap: gap / n,
                obj: m.obj_profit_minus_qos,
                episodes: log.episodes.len(),
                monotone: log.is_monotone(),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepDimension {
    Capacity,
    ArrivalRate,
}

impl std::str::FromStr for SweepDimension {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "capacity" => Ok(Self::Capacity),
            "arrival" | "arrival_rate" => Ok(Self::ArrivalRate),
            other => Err(Error::Config(format!("unknown sweep dimension {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub welfare: Estimate,
    pub profit: Estimate,
    pub entered: Estimate,
    pub service_ratio: Estimate,
    pub monotone: bool,
}

/// Learned MPC policy at each value of one station parameter.
pub fn sensitivity_sweep(cfg: &ExperimentConfig, dimension: SweepDimension, values: &[f64]) -> Result<Vec<SweepPoint>> {
    let seeds: Vec<u64> = day_seeds(&cfg.bench).into_iter().take(cfg.bench.sweep_seeds.max(1)).collect();
    let mut out = Vec::new();
    for &value in values {
        if value < 0.0 {
            return Err(Error::NegativeInput { what: "sweep value", value });
        }
        let mut c = cfg.clone();
        match dimension {
            SweepDimension::Capacity => c.station.piles = value.round() as usize,
            SweepDimension::ArrivalRate => c.station.arrival_rate = ArrivalRate::Constant(value),
        }
        c.station.validate()?;
        c.learn.max_episodes = cfg.bench.sweep_episodes;
        let exo = c.exogenous()?;
        let (policy, log) = learn_policy(&exo, &c.learn)?;
        let days = seeds
            .iter()
            .map(|&s| simulate_day(&exo, Control::Mpc, &policy, &c.mpc, s, None))
            .collect::<Result<Vec<_>>>()?;
        let est = |f: fn(&DayMetrics) -> f64| Estimate::from_samples(&days.iter().map(f).collect::<Vec<_>>());
        out.push(SweepPoint {
            value,
            welfare: est(|m| m.obj_profit_minus_qos),
            profit: est(|m| m.profit),
            entered: est(|m| m.enter_num),
            service_ratio: est(|m| m.service_ratio),
            monotone: log.is_monotone(),
        });
    }
    Ok(out)
}

pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "value",
        "welfare",
        "welfare_ci95",
        "profit",
        "profit_ci95",
        "entered",
        "entered_ci95",
        "service_ratio",
        "service_ratio_ci95",
    ])?;
    for p in points {
        let mut row = vec![p.value.to_string()];
        for e in [p.welfare, p.profit, p.entered, p.service_ratio] {
            row.push(format!("{:.6}", e.mean));
            row.push(format!("{:.6}", e.half_width));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk_exo(piles: usize) -> Exogenous {
        let cfg = ExperimentConfig::profile(Profile::Desk);
        let params = StationParams { piles, ..cfg.station };
        Exogenous::new(params, cfg.requests, &RenewableProfile::default())
    }

    #[test]
    fn event_table_stand_in() {
        let t = DEFAULT_EVENT_PRICES;
        assert_eq!(event_price_baseline(EventClass::E1, &t), 1.0);
        assert_eq!(event_price_baseline(EventClass::E5, &t), 2.4);
        assert!(t.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn roster_ids() {
        let r = standard_roster(&BenchSettings::default());
        let ids: Vec<&str> = r.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["pi*", "pi1", "pi2", "pi3", "pi4", "pi5", "pi6", "pi7", "pi8", "pi9"]);
        assert_eq!(r[3].pricing, Pricing::Constant(2.3));
        assert_eq!(r[8], PolicySpec {
            id: "pi8".into(),
            pricing: Pricing::Constant(0.3),
            control: Control::Delayed
        });
        assert!(r[0].price_table(24, None).is_err());
    }

    #[test]
    fn constant_price_days() {
        let exo = desk_exo(6);
        let pol = PricingPolicy::constant(24, 2.3);
        for control in [Control::Greedy, Control::Delayed] {
            let m = simulate_day(&exo, control, &pol, &MpcConfig::default(), 3, None).unwrap();
            assert_eq!(m.price_std, 0.0);
            assert_eq!(m.variance_penalty, 0.0);
            assert!(identity_residual(&m, &exo.params) < 1e-9);
        }
    }

    #[test]
    fn controllers_share_exogenous_days() {
        let exo = desk_exo(6);
        let pol = PricingPolicy::constant(24, 1.5);
        let a = simulate_day(&exo, Control::Greedy, &pol, &MpcConfig::default(), 9, None).unwrap();
        let b = simulate_day(&exo, Control::Delayed, &pol, &MpcConfig::default(), 9, None).unwrap();
        // Admissions do not depend on the charging controller.
        assert_eq!(a.arrival_num, b.arrival_num);
        assert_eq!(a.enter_num, b.enter_num);
        assert_eq!(a.qos_cost, b.qos_cost);
    }

    #[test]
    fn metric_formulas_on_reference_row() {
        let m = DayMetrics {
            earning: 772.72,
            enter_num: 99.2,
            arrival_num: 243.4,
            qos_cost: 1.8396 * (243.4 - 99.2),
            ..DayMetrics::default()
        };
        assert!((m.qos_cost - 265.27).abs() < 5e-3);
        assert!((m.earning / m.enter_num - 7.79).abs() < 5e-3);
    }

    #[test]
    fn estimate_half_width() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0]);
        assert_eq!(e.mean, 2.0);
        // t(0.975, 2) = 4.302653, s = 1
        assert!((e.half_width - 4.302_652_729_749_464 / 3f64.sqrt()).abs() < 1e-9);
        assert_eq!(Estimate::from_samples(&[4.0]).half_width, 0.0);
    }

    #[test]
    fn variance_term() {
        assert_eq!(variance_penalty(&[1.0; 24], 6, 2.0), 0.0);
        // Window [1, 3] has mean 2; the last stage is its own window.
        assert!((variance_penalty(&[1.0, 3.0], 2, 2.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn config_round_trip() {
        let cfg = ExperimentConfig::profile(Profile::Full);
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
        let partial = ExperimentConfig::from_toml_str("[station]\npiles = 4\n").unwrap();
        assert_eq!(partial.station.piles, 4);
        assert!(ExperimentConfig::from_toml_str("[station]\npile = 4\n").is_err());
    }

    #[test]
    fn zero_arrivals_earn_nothing() {
        let mut exo = desk_exo(4);
        exo.params.arrival_rate = ArrivalRate::Constant(0.0);
        let pol = PricingPolicy::constant(24, 1.0);
        let m = simulate_day(&exo, Control::Mpc, &pol, &MpcConfig::default(), 1, None).unwrap();
        assert_eq!(m.enter_num, 0.0);
        assert_eq!(m.earning, 0.0);
        assert!(m.obj_profit_minus_qos <= 1e-9);
    }
}
