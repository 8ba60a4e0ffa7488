//! Station dynamics, feasibility checks and reward accounting.
//!
//! Stage indices count hours from the start of the simulation; every
//! stage-indexed input (tariff, arrival rate, renewable profile) repeats with
//! period [`StationParams::horizon`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stochastic::EvRequest;

/// Absolute slack used when comparing energies (kWh) and powers (kW).
pub const ENERGY_EPS: f64 = 1e-9;

/// Time-of-use grid tariff by clock hour, CNY/kWh.
pub const DEFAULT_TARIFF: [f64; 24] = [
    0.3208, 0.3208, 0.3208, 0.3208, 0.3208, 0.3208, 0.3208, // 0-6
    0.8145, 0.8145, 0.8145, // 7-9
    1.4615, 1.4615, 1.4615, // 10-12
    1.3332, 1.3332, // 13-14
    0.8145, 0.8145, // 15-16
    1.3332, 1.3332, // 17-18
    1.4615, 1.4615, // 19-20
    0.8145, 0.8145, // 21-22
    0.3208, // 23
];

/// Poisson arrival rate, either constant or one value per clock hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArrivalRate {
    Constant(f64),
    Hourly(Vec<f64>),
}

impl ArrivalRate {
    pub fn at(&self, stage: usize) -> f64 {
        match self {
            ArrivalRate::Constant(r) => *r,
            ArrivalRate::Hourly(v) => v[stage % v.len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationParams {
    pub piles: usize,
    pub stage_hours: f64,
    pub horizon: usize,
    pub window: usize,
    pub pile_power_kw: f64,
    pub ev_efficiency: f64,
    pub price_cap: f64,
    /// Discount coefficient applied to the charging elasticity, per stage.
    pub discount_rate: f64,
    pub storage_energy_kwh: f64,
    pub storage_power_kw: f64,
    pub charge_efficiency: f64,
    pub discharge_efficiency: f64,
    pub wind_capacity_kw: f64,
    pub solar_capacity_kw: f64,
    pub cut_in_mps: f64,
    pub rated_mps: f64,
    pub cut_out_mps: f64,
    pub solar_efficiency: f64,
    pub standard_irradiance: f64,
    /// Weight of the squared deviation from the window-average price.
    pub variance_weight: f64,
    pub wind_cost: f64,
    pub solar_cost: f64,
    pub storage_cost: f64,
    pub lost_ev_cost: f64,
    pub grid_tariff: Vec<f64>,
    pub arrival_rate: ArrivalRate,
    pub initial_soc: f64,
    pub initial_price: f64,
}

impl Default for StationParams {
    fn default() -> Self {
        Self {
            piles: 20,
            stage_hours: 1.0,
            horizon: 24,
            window: 6,
            pile_power_kw: 3.6,
            ev_efficiency: 0.92,
            price_cap: 2.5,
            discount_rate: 1.0 / 25.0,
            storage_energy_kwh: 166.65,
            storage_power_kw: 50.0,
            charge_efficiency: 0.82,
            discharge_efficiency: 0.82,
            wind_capacity_kw: 50.0,
            solar_capacity_kw: 50.0,
            cut_in_mps: 3.5,
            rated_mps: 15.0,
            cut_out_mps: 25.0,
            solar_efficiency: 0.88,
            standard_irradiance: 800.0,
            variance_weight: 2.0,
            wind_cost: 0.018,
            solar_cost: 0.018,
            storage_cost: 0.04,
            lost_ev_cost: 1.8396,
            grid_tariff: DEFAULT_TARIFF.to_vec(),
            arrival_rate: ArrivalRate::Constant(10.0),
            initial_soc: 0.5,
            initial_price: 2.3,
        }
    }
}

fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParams {
        name,
        reason: reason.into(),
    }
}

impl StationParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("stage_hours", self.stage_hours),
            ("pile_power_kw", self.pile_power_kw),
            ("price_cap", self.price_cap),
            ("discount_rate", self.discount_rate),
            ("storage_energy_kwh", self.storage_energy_kwh),
            ("storage_power_kw", self.storage_power_kw),
            ("wind_capacity_kw", self.wind_capacity_kw),
            ("solar_capacity_kw", self.solar_capacity_kw),
            ("solar_efficiency", self.solar_efficiency),
            ("standard_irradiance", self.standard_irradiance),
            ("wind_cost", self.wind_cost),
            ("solar_cost", self.solar_cost),
            ("storage_cost", self.storage_cost),
            ("lost_ev_cost", self.lost_ev_cost),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("ev_efficiency", self.ev_efficiency),
            ("charge_efficiency", self.charge_efficiency),
            ("discharge_efficiency", self.discharge_efficiency),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(invalid(name, format!("must lie in (0, 1], got {v}")));
            }
        }
        if self.piles == 0 {
            return Err(invalid("piles", "must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(invalid("horizon", "must be at least 1"));
        }
        if self.window == 0 || self.window > self.horizon {
            return Err(invalid("window", format!("must lie in [1, {}]", self.horizon)));
        }
        if !(0.0 < self.cut_in_mps && self.cut_in_mps < self.rated_mps && self.rated_mps < self.cut_out_mps) {
            return Err(invalid("rated_mps", "need 0 < cut-in < rated < cut-out"));
        }
        if !(self.variance_weight >= 0.0) {
            return Err(invalid("variance_weight", "must be nonnegative"));
        }
        if self.grid_tariff.len() != self.horizon || self.grid_tariff.iter().any(|&g| !(g > 0.0)) {
            return Err(invalid("grid_tariff", format!("needs {} positive entries", self.horizon)));
        }
        match &self.arrival_rate {
            ArrivalRate::Constant(r) if !(*r >= 0.0) => return Err(invalid("arrival_rate", "must be nonnegative")),
            ArrivalRate::Hourly(v) if v.is_empty() || v.iter().any(|r| !(*r >= 0.0)) => {
                return Err(invalid("arrival_rate", "hourly rates must be nonnegative and nonempty"))
            }
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.initial_soc) {
            return Err(invalid("initial_soc", "must lie in [0, 1]"));
        }
        if !(0.0..=self.price_cap).contains(&self.initial_price) {
            return Err(invalid("initial_price", "must lie in [0, price_cap]"));
        }
        Ok(())
    }

    /// Energy delivered to an EV by one stage of charging, kWh.
    pub fn unit_energy(&self) -> f64 {
        self.pile_power_kw * self.ev_efficiency * self.stage_hours
    }

    pub fn tariff(&self, stage: usize) -> f64 {
        self.grid_tariff[stage % self.grid_tariff.len()]
    }

    pub fn arrival_rate_at(&self, stage: usize) -> f64 {
        self.arrival_rate.at(stage % self.horizon)
    }

    /// Largest possible |p_ev - p_w - p_s - h| in one stage, kW.
    pub fn imbalance_bound(&self) -> f64 {
        self.piles as f64 * self.pile_power_kw + self.wind_capacity_kw + self.solar_capacity_kw + self.storage_power_kw
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventClass {
    E1,
    E2,
    E3,
    E4,
    E5,
}

impl EventClass {
    pub const COUNT: usize = 5;
    pub const ALL: [EventClass; 5] = [EventClass::E1, EventClass::E2, EventClass::E3, EventClass::E4, EventClass::E5];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl std::fmt::Display for EventClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "E{}", self.index() + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PileState {
    /// Energy still owed to the parked EV, kWh.
    pub energy: f64,
    /// Stages left before departure; zero when the pile is free.
    pub remaining: u32,
    /// Discounted price fixed at arrival, CNY/kWh.
    pub locked_price: f64,
}

impl PileState {
    pub fn is_occupied(&self) -> bool {
        self.remaining > 0
    }

    /// Stages of charging still needed (rounded up).
    pub fn required_units(&self, unit: f64) -> u32 {
        if self.energy <= ENERGY_EPS {
            0
        } else {
            (self.energy / unit - 1e-9).ceil().max(1.0) as u32
        }
    }

    /// True when skipping this stage would break the departure guarantee.
    pub fn must_charge(&self, unit: f64) -> bool {
        self.is_occupied() && self.energy > (self.remaining as f64 - 1.0) * unit + ENERGY_EPS
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationState {
    pub wind_avail: f64,
    pub solar_avail: f64,
    pub soc: f64,
    pub piles: Vec<PileState>,
    pub stage: usize,
}

impl StationState {
    pub fn empty(params: &StationParams, wind_avail: f64, solar_avail: f64, stage: usize) -> Self {
        Self {
            wind_avail,
            solar_avail,
            soc: params.initial_soc,
            piles: vec![PileState::default(); params.piles],
            stage,
        }
    }

    pub fn occupied(&self) -> usize {
        self.piles.iter().filter(|p| p.is_occupied()).count()
    }

    pub fn event(&self) -> EventClass {
        classify_count(self.occupied(), self.piles.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlAction {
    pub price: f64,
    /// Storage power, positive when discharging, kW.
    pub storage_power: f64,
    pub charge: Vec<bool>,
    pub wind_used: f64,
    pub solar_used: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub earning: f64,
    pub procure_cost: f64,
    pub storage_cost: f64,
    pub wind_cost: f64,
    pub solar_cost: f64,
    pub qos_cost: f64,
    pub variance_penalty: f64,
    /// Reward without the price-variance term.
    pub r_sigma: f64,
    pub total: f64,
}

impl RewardBreakdown {
    /// Earning less energy and storage costs (what the dispatch optimizer sees).
    pub fn operating(&self) -> f64 {
        self.earning - self.procure_cost - self.storage_cost - self.wind_cost - self.solar_cost
    }
}

/// Wind turbine output for a wind speed, kW.
pub fn wind_power(speed: f64, params: &StationParams) -> Result<f64> {
    if !(speed >= 0.0) {
        return Err(Error::NegativeInput {
            what: "wind speed",
            value: speed,
        });
    }
    let p = if speed < params.cut_in_mps || speed > params.cut_out_mps {
        0.0
    } else if speed > params.rated_mps {
        params.wind_capacity_kw
    } else {
        params.wind_capacity_kw * (speed / params.rated_mps).powi(3)
    };
    Ok(p)
}

/// Photovoltaic output for an irradiance, kW.
pub fn solar_power(irradiance: f64, params: &StationParams) -> Result<f64> {
    if !(irradiance >= 0.0) {
        return Err(Error::NegativeInput {
            what: "irradiance",
            value: irradiance,
        });
    }
    let p = params.solar_capacity_kw * params.solar_efficiency * irradiance / params.standard_irradiance;
    Ok(p.clamp(0.0, params.solar_capacity_kw))
}

/// Parking slack in stages: time parked beyond what charging strictly needs.
pub fn elasticity(stages: u32, energy: f64, params: &StationParams) -> f64 {
    stages as f64 - energy / params.unit_energy()
}

/// Price locked in by an arriving EV with the given request.
pub fn price_discount(posted: f64, stages: u32, energy: f64, params: &StationParams) -> Result<f64> {
    let max = stages as f64 * params.unit_energy();
    if !(energy > 0.0 && energy <= max + ENERGY_EPS) {
        return Err(Error::InfeasibleRequest { energy, stages, max });
    }
    let l = elasticity(stages, energy, params).max(0.0);
    Ok(posted * (-params.discount_rate * l).exp())
}

fn classify_count(n: usize, capacity: usize) -> EventClass {
    // Integer comparisons keep the band edges exact.
    match 5 * n {
        x if x <= capacity => EventClass::E1,
        x if x <= 2 * capacity => EventClass::E2,
        x if x <= 3 * capacity => EventClass::E3,
        x if x <= 4 * capacity => EventClass::E4,
        _ => EventClass::E5,
    }
}

/// Station density band for `n` occupied piles out of `capacity`.
pub fn classify_event(n: usize, capacity: usize) -> Result<EventClass> {
    if capacity == 0 {
        return Err(invalid("piles", "must be at least 1"));
    }
    if n > capacity {
        return Err(Error::OverCapacity { occupied: n, capacity });
    }
    Ok(classify_count(n, capacity))
}

/// Feasible storage power range `(h_min, h_max)` at SOC `soc`, kW.
pub fn storage_power_bounds(soc: f64, params: &StationParams) -> (f64, f64) {
    let cap = params.storage_energy_kwh;
    let dt = params.stage_hours;
    let h_min = -(params.storage_power_kw.min((1.0 - soc) * cap / (params.charge_efficiency * dt)));
    let h_max = params.storage_power_kw.min(soc * cap * params.discharge_efficiency / dt);
    (h_min.min(0.0), h_max.max(0.0))
}

/// SOC after applying storage power `power` for one stage.
pub fn step_storage(soc: f64, power: f64, params: &StationParams) -> Result<f64> {
    let (lo, hi) = storage_power_bounds(soc, params);
    if power < lo - ENERGY_EPS || power > hi + ENERGY_EPS {
        return Err(Error::StoragePower {
            power,
            min: lo,
            max: hi,
            soc,
        });
    }
    Ok(soc_update(soc, power, params))
}

/// The SOC recursion without the bound check.
pub fn soc_update(soc: f64, power: f64, params: &StationParams) -> f64 {
    let cap = params.storage_energy_kwh;
    let dt = params.stage_hours;
    if power >= 0.0 {
        (soc - power * dt / (params.discharge_efficiency * cap)).max(0.0)
    } else {
        (soc - power * params.charge_efficiency * dt / cap).min(1.0)
    }
}

/// Power bought from the grid to cover the residual demand, kW.
pub fn grid_import(ev_power: f64, wind: f64, solar: f64, storage: f64) -> f64 {
    (ev_power - wind - solar - storage).max(0.0)
}

/// Advances every occupied pile by one stage. Returns the new piles and the
/// number of departures.
pub fn step_piles(piles: &[PileState], charge: &[bool], params: &StationParams) -> Result<(Vec<PileState>, usize)> {
    if charge.len() != piles.len() {
        return Err(Error::ChargeLength {
            got: charge.len(),
            expected: piles.len(),
        });
    }
    let unit = params.unit_energy();
    let mut next = piles.to_vec();
    let mut departures = 0;
    for (i, (pile, &z)) in next.iter_mut().zip(charge).enumerate() {
        if !pile.is_occupied() {
            if z {
                return Err(Error::InfeasibleCharge {
                    pile: i,
                    reason: "charge decision on a free pile".into(),
                });
            }
            continue;
        }
        if z {
            if pile.energy <= ENERGY_EPS {
                return Err(Error::InfeasibleCharge {
                    pile: i,
                    reason: "charge decision on a fully charged EV".into(),
                });
            }
            pile.energy -= unit;
            if pile.energy <= ENERGY_EPS {
                pile.energy = 0.0;
            }
        }
        pile.remaining -= 1;
        if pile.energy > pile.remaining as f64 * unit + ENERGY_EPS {
            return Err(Error::InfeasibleCharge {
                pile: i,
                reason: format!(
                    "{:.4} kWh left with {} stages of parking",
                    pile.energy, pile.remaining
                ),
            });
        }
        if pile.remaining == 0 {
            *pile = PileState::default();
            departures += 1;
        }
    }
    Ok((next, departures))
}

/// One arriving EV: its request and the uniform draw compared against the
/// acceptance probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub accept_draw: f64,
    pub request: EvRequest,
}

/// Price acceptance for a uniform draw `u` in [0, 1).
pub fn accepts(u: f64, price: f64, params: &StationParams) -> bool {
    u < 1.0 - price / params.price_cap
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counters {
    /// Occupied piles at the start of the stage.
    pub occupied: usize,
    pub arrivals: usize,
    pub entered: usize,
    pub departed: usize,
    pub lost: usize,
}

/// Assigns price-accepting arrivals to free piles, lowest index first.
///
/// Returns the number admitted and the number lost (price rejections plus
/// capacity rejections).
pub fn admit_into(
    piles: &mut [PileState],
    price: f64,
    arrivals: &[Arrival],
    params: &StationParams,
) -> Result<(usize, usize)> {
    let mut entered = 0;
    let mut lost = 0;
    let mut next_free = 0;
    for a in arrivals {
        if !accepts(a.accept_draw, price, params) {
            lost += 1;
            continue;
        }
        while next_free < piles.len() && piles[next_free].is_occupied() {
            next_free += 1;
        }
        if next_free == piles.len() {
            lost += 1;
            continue;
        }
        let locked = price_discount(price, a.request.stages, a.request.energy, params)?;
        piles[next_free] = PileState {
            energy: a.request.energy,
            remaining: a.request.stages,
            locked_price: locked,
        };
        entered += 1;
    }
    Ok((entered, lost))
}

/// The state after admitting this stage's arrivals at `price`.
#[derive(Debug, Clone, PartialEq)]
pub struct Admitted {
    pub state: StationState,
    pub counters: Counters,
}

pub fn admit(state: &StationState, price: f64, arrivals: &[Arrival], params: &StationParams) -> Result<Admitted> {
    if !(0.0..=params.price_cap).contains(&price) {
        return Err(Error::PriceOutOfRange {
            price,
            cap: params.price_cap,
        });
    }
    let mut next = state.clone();
    let occupied = state.occupied();
    let (entered, lost) = admit_into(&mut next.piles, price, arrivals, params)?;
    Ok(Admitted {
        state: next,
        counters: Counters {
            occupied,
            arrivals: arrivals.len(),
            entered,
            departed: 0,
            lost,
        },
    })
}

/// Checks an action against the post-admission state.
pub fn check_action(state: &StationState, action: &ControlAction, params: &StationParams) -> Result<()> {
    if !(0.0..=params.price_cap).contains(&action.price) {
        return Err(Error::PriceOutOfRange {
            price: action.price,
            cap: params.price_cap,
        });
    }
    for (name, used, avail) in [
        ("wind", action.wind_used, state.wind_avail),
        ("solar", action.solar_used, state.solar_avail),
    ] {
        if used < -ENERGY_EPS || used > avail + ENERGY_EPS {
            return Err(Error::RenewableOveruse {
                source_name: name,
                used,
                available: avail,
            });
        }
    }
    let (lo, hi) = storage_power_bounds(state.soc, params);
    if action.storage_power < lo - ENERGY_EPS || action.storage_power > hi + ENERGY_EPS {
        return Err(Error::StoragePower {
            power: action.storage_power,
            min: lo,
            max: hi,
            soc: state.soc,
        });
    }
    if action.charge.len() != state.piles.len() {
        return Err(Error::ChargeLength {
            got: action.charge.len(),
            expected: state.piles.len(),
        });
    }
    Ok(())
}

/// Total EV charging power for a charge vector, kW.
pub fn ev_power(action: &ControlAction, params: &StationParams) -> f64 {
    action.charge.iter().filter(|&&z| z).count() as f64 * params.pile_power_kw
}

/// One-stage reward for `action` taken in the post-admission `state`.
pub fn stage_reward(
    state: &StationState,
    action: &ControlAction,
    lost: usize,
    window_mean_price: f64,
    params: &StationParams,
) -> Result<RewardBreakdown> {
    check_action(state, action, params)?;
    let dt = params.stage_hours;
    let earning: f64 = state
        .piles
        .iter()
        .zip(&action.charge)
        .filter(|(p, &z)| z && p.is_occupied())
        .map(|(p, _)| p.locked_price * params.pile_power_kw * dt)
        .sum();
    let g = grid_import(
        ev_power(action, params),
        action.wind_used,
        action.solar_used,
        action.storage_power,
    );
    Ok(reward_terms(
        earning,
        g,
        action.storage_power,
        action.wind_used,
        action.solar_used,
        lost,
        action.price,
        window_mean_price,
        state.stage,
        params,
    ))
}

/// Assembles the reward from its physical inputs.
#[allow(clippy::too_many_arguments)]
pub fn reward_terms(
    earning: f64,
    grid: f64,
    storage: f64,
    wind: f64,
    solar: f64,
    lost: usize,
    price: f64,
    window_mean_price: f64,
    stage: usize,
    params: &StationParams,
) -> RewardBreakdown {
    let dt = params.stage_hours;
    let procure_cost = params.tariff(stage) * grid * dt;
    let storage_cost = params.storage_cost * storage.abs() * dt;
    let wind_cost = params.wind_cost * wind * dt;
    let solar_cost = params.solar_cost * solar * dt;
    let qos_cost = params.lost_ev_cost * lost as f64;
    let variance_penalty = params.variance_weight * (price - window_mean_price).powi(2);
    let r_sigma = earning - procure_cost - storage_cost - wind_cost - solar_cost - qos_cost;
    RewardBreakdown {
        earning,
        procure_cost,
        storage_cost,
        wind_cost,
        solar_cost,
        qos_cost,
        variance_penalty,
        r_sigma,
        total: r_sigma - variance_penalty,
    }
}

/// Exogenous inputs of one stage: arrivals during the stage and renewable
/// availability at the start of the next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageExogenous {
    pub arrivals: Vec<Arrival>,
    pub next_wind: f64,
    pub next_solar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: StationState,
    pub reward: RewardBreakdown,
    pub counters: Counters,
    pub grid: f64,
}

/// Full stage transition from the pre-admission `state`.
pub fn transition(
    state: &StationState,
    action: &ControlAction,
    exogenous: &StageExogenous,
    window_mean_price: f64,
    params: &StationParams,
) -> Result<Transition> {
    let admitted = admit(state, action.price, &exogenous.arrivals, params)?;
    transition_admitted(&admitted, action, exogenous.next_wind, exogenous.next_solar, window_mean_price, params)
}

/// Stage transition from a state whose arrivals were already admitted.
pub fn transition_admitted(
    admitted: &Admitted,
    action: &ControlAction,
    next_wind: f64,
    next_solar: f64,
    window_mean_price: f64,
    params: &StationParams,
) -> Result<Transition> {
    let state = &admitted.state;
    let reward = stage_reward(state, action, admitted.counters.lost, window_mean_price, params)?;
    let (piles, departed) = step_piles(&state.piles, &action.charge, params)?;
    let soc = step_storage(state.soc, action.storage_power, params)?;
    let grid = grid_import(
        ev_power(action, params),
        action.wind_used,
        action.solar_used,
        action.storage_power,
    );
    let mut counters = admitted.counters;
    counters.departed = departed;
    Ok(Transition {
        state: StationState {
            wind_avail: next_wind,
            solar_avail: next_solar,
            soc,
            piles,
            stage: state.stage + 1,
        },
        reward,
        counters,
        grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params() -> StationParams {
        StationParams::default()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn defaults_validate() {
        params().validate().unwrap();
    }

    #[test]
    fn tariff_blocks_by_hour() {
        let p = params();
        assert_eq!(p.tariff(6), 0.3208);
        assert_eq!(p.tariff(7), 0.8145);
        assert_eq!(p.tariff(12), 1.4615);
        assert_eq!(p.tariff(14), 1.3332);
        assert_eq!(p.tariff(20), 1.4615);
        assert_eq!(p.tariff(23), 0.3208);
        assert_eq!(p.tariff(24 + 19), 1.4615);
    }

    #[test]
    fn wind_curve() {
        let p = params();
        assert_eq!(wind_power(15.0, &p).unwrap(), 50.0);
        assert_eq!(wind_power(2.0, &p).unwrap(), 0.0);
        assert!(close(wind_power(7.5, &p).unwrap(), 6.25, 1e-12));
        assert_eq!(wind_power(20.0, &p).unwrap(), 50.0);
        assert_eq!(wind_power(26.0, &p).unwrap(), 0.0);
        assert!(wind_power(-1.0, &p).is_err());
    }

    #[test]
    fn solar_curve() {
        let p = params();
        assert!(close(solar_power(800.0, &p).unwrap(), 44.0, 1e-12));
        assert_eq!(solar_power(0.0, &p).unwrap(), 0.0);
        assert!(close(solar_power(400.0, &p).unwrap(), 22.0, 1e-12));
        assert_eq!(solar_power(2000.0, &p).unwrap(), 50.0);
        assert!(solar_power(-5.0, &p).is_err());
    }

    #[test]
    fn discount_examples() {
        let p = params();
        let unit = p.unit_energy();
        assert!(close(unit, 3.312, 1e-12));
        assert!(close(price_discount(2.0, 6, 6.0 * unit, &p).unwrap(), 2.0, 1e-12));
        let d = price_discount(1.0, 6, 3.312, &p).unwrap();
        assert!(close(d, (-5.0f64 / 25.0).exp(), 1e-12));
        assert!(close(d, 0.8187, 1e-4));
        assert!(close(price_discount(1.7, 1, 3.312, &p).unwrap(), 1.7, 1e-12));
        assert!(price_discount(1.0, 1, 3.4, &p).is_err());
        assert!(price_discount(1.0, 1, 0.0, &p).is_err());
    }

    #[test]
    fn event_bands() {
        assert_eq!(classify_event(0, 20).unwrap(), EventClass::E1);
        assert_eq!(classify_event(4, 20).unwrap(), EventClass::E1);
        assert_eq!(classify_event(5, 20).unwrap(), EventClass::E2);
        assert_eq!(classify_event(8, 20).unwrap(), EventClass::E2);
        assert_eq!(classify_event(9, 20).unwrap(), EventClass::E3);
        assert_eq!(classify_event(12, 20).unwrap(), EventClass::E3);
        assert_eq!(classify_event(16, 20).unwrap(), EventClass::E4);
        assert_eq!(classify_event(17, 20).unwrap(), EventClass::E5);
        assert_eq!(classify_event(20, 20).unwrap(), EventClass::E5);
        assert!(classify_event(21, 20).is_err());
        assert_eq!(classify_event(2, 10).unwrap(), EventClass::E1);
        assert_eq!(classify_event(3, 10).unwrap(), EventClass::E2);
    }

    #[test]
    fn storage_examples() {
        let p = params();
        assert_eq!(step_storage(0.5, 0.0, &p).unwrap(), 0.5);
        let b = step_storage(0.5, -50.0, &p).unwrap();
        assert!(close(b, 0.5 + 50.0 * 0.82 / 166.65, 1e-12));
        assert!(close(b, 0.7460, 1e-4));
        // Discharge bound at 1% SOC is below 50 kW; the recursion itself clamps at zero.
        assert!(step_storage(0.01, 50.0, &p).is_err());
        assert_eq!(soc_update(0.01, 50.0, &p), 0.0);
    }

    #[test]
    fn storage_bound_examples() {
        let p = params();
        let (lo, hi) = storage_power_bounds(1.0, &p);
        assert_eq!(lo, 0.0);
        assert!(close(hi, 50.0f64.min(166.65 * 0.82), 1e-12));
        assert_eq!(storage_power_bounds(0.0, &p).1, 0.0);
        let (lo, hi) = storage_power_bounds(0.5, &p);
        assert_eq!((lo, hi), (-50.0, 50.0));
        let (lo, hi) = storage_power_bounds(0.9, &p);
        assert!(close(lo, -0.1 * 166.65 / 0.82, 1e-12));
        assert_eq!(hi, 50.0);
    }

    #[test]
    fn grid_examples() {
        assert_eq!(grid_import(0.0, 5.0, 5.0, 0.0), 0.0);
        assert_eq!(grid_import(36.0, 10.0, 10.0, 6.0), 10.0);
        assert_eq!(grid_import(36.0, 44.0, 0.0, 0.0), 0.0);
    }

    fn pile(energy: f64, remaining: u32) -> PileState {
        PileState {
            energy,
            remaining,
            locked_price: 2.0,
        }
    }

    #[test]
    fn pile_step_examples() {
        let p = params();
        let (next, out) = step_piles(&[pile(3.312, 1)], &[true], &p).unwrap();
        assert_eq!(out, 1);
        assert_eq!(next[0], PileState::default());
        let (next, out) = step_piles(&[pile(3.312, 2)], &[false], &p).unwrap();
        assert_eq!(out, 0);
        assert_eq!(next[0].remaining, 1);
        assert_eq!(next[0].energy, 3.312);
        assert!(step_piles(&[pile(3.312, 1)], &[false], &p).is_err());
        assert!(step_piles(&[PileState::default()], &[true], &p).is_err());
        assert!(step_piles(&[pile(0.0, 2)], &[true], &p).is_err());
    }

    #[test]
    fn reward_examples() {
        let p = params();
        let mut state = StationState::empty(&p, 0.0, 0.0, 0);
        let idle = ControlAction {
            price: 1.0,
            storage_power: 0.0,
            charge: vec![false; p.piles],
            wind_used: 0.0,
            solar_used: 0.0,
        };
        let r = stage_reward(&state, &idle, 0, 1.0, &p).unwrap();
        assert_eq!(r.total, 0.0);

        state.wind_avail = 10.0;
        state.piles[0] = pile(3.312, 1);
        let mut act = idle.clone();
        act.charge[0] = true;
        act.wind_used = 3.6;
        let r = stage_reward(&state, &act, 0, 1.0, &p).unwrap();
        assert!(close(r.earning, 7.2, 1e-12));
        assert!(close(r.wind_cost, 0.0648, 1e-12));
        assert_eq!(r.procure_cost, 0.0);
        assert!(close(r.total, 7.1352, 1e-12));

        let r = reward_terms(0.0, 0.0, 0.0, 0.0, 0.0, 3, 1.0, 1.0, 0, &p);
        assert!(close(r.qos_cost, 3.0 * 1.8396, 1e-12));
        assert!(close(p.lost_ev_cost * 144.2, 265.27, 5e-3));
    }

    #[test]
    fn transition_bookkeeping() {
        let p = StationParams {
            piles: 10,
            ..params()
        };
        let mut state = StationState::empty(&p, 0.0, 0.0, 3);
        for i in 0..5 {
            state.piles[i] = pile(3.312, if i == 0 { 1 } else { 3 });
        }
        let req = EvRequest { stages: 2, energy: 3.312 };
        let arrivals = vec![
            Arrival { accept_draw: 0.0, request: req },
            Arrival { accept_draw: 0.1, request: req },
            Arrival { accept_draw: 0.2, request: req },
            Arrival { accept_draw: 0.99, request: req },
        ];
        let mut charge = vec![false; 10];
        charge[0] = true;
        let action = ControlAction {
            price: 1.0,
            storage_power: 0.0,
            charge,
            wind_used: 0.0,
            solar_used: 0.0,
        };
        let exo = StageExogenous {
            arrivals,
            next_wind: 4.0,
            next_solar: 2.0,
        };
        let tr = transition(&state, &action, &exo, 1.0, &p).unwrap();
        assert_eq!(tr.counters.entered, 3);
        assert_eq!(tr.counters.departed, 1);
        assert_eq!(tr.counters.lost, 1);
        assert_eq!(tr.state.occupied(), 5 + 3 - 1);
        assert_eq!(tr.state.stage, 4);
        assert_eq!(tr.state.wind_avail, 4.0);
        assert!(close(tr.grid, 3.6, 1e-12));
        // Lowest free piles take the arrivals.
        assert!(tr.state.piles[5].is_occupied() && tr.state.piles[7].is_occupied());
    }

    #[test]
    fn full_station_loses_accepting_arrivals() {
        let p = StationParams {
            piles: 2,
            ..params()
        };
        let mut state = StationState::empty(&p, 0.0, 0.0, 0);
        state.piles[0] = pile(3.312, 1);
        state.piles[1] = pile(3.312, 2);
        let req = EvRequest { stages: 1, energy: 3.312 };
        let arrivals = vec![Arrival { accept_draw: 0.0, request: req }; 2];
        let adm = admit(&state, 0.5, &arrivals, &p).unwrap();
        assert_eq!(adm.counters.entered, 0);
        assert_eq!(adm.counters.lost, 2);
        let action = ControlAction {
            price: 0.5,
            storage_power: 0.0,
            charge: vec![true, false],
            wind_used: 0.0,
            solar_used: 0.0,
        };
        let tr = transition_admitted(&adm, &action, 0.0, 0.0, 0.5, &p).unwrap();
        assert_eq!(tr.state.occupied(), 2 - tr.counters.departed);
    }

    proptest! {
        #[test]
        fn soc_stays_in_unit_interval(b in 0.0f64..=1.0, frac in 0.0f64..=1.0) {
            let p = params();
            let (lo, hi) = storage_power_bounds(b, &p);
            let h = lo + frac * (hi - lo);
            let next = step_storage(b, h, &p).unwrap();
            prop_assert!((0.0..=1.0).contains(&next));
        }

        #[test]
        fn bounds_never_clamp(b in 0.0f64..=1.0, frac in 0.0f64..=1.0) {
            // Inside the power bounds the max/min in the recursion is inactive.
            let p = params();
            let (lo, hi) = storage_power_bounds(b, &p);
            let h = lo + frac * (hi - lo);
            let raw = if h >= 0.0 { b - h / (0.82 * 166.65) } else { b - h * 0.82 / 166.65 };
            prop_assert!((soc_update(b, h, &p) - raw).abs() < 1e-12);
        }

        #[test]
        fn round_trip_loses_energy(b in 0.0f64..0.5, h in 1.0f64..50.0) {
            let p = params();
            let up = step_storage(b, -h, &p).unwrap();
            let stored = (up - b) * p.storage_energy_kwh;
            let (_, hi) = storage_power_bounds(up, &p);
            let back = stored * p.discharge_efficiency;
            prop_assert!(back <= hi + 1e-9);
            prop_assert!(back < h);
            prop_assert!((back - h * 0.82 * 0.82).abs() < 1e-9);
        }

        #[test]
        fn discount_monotone_in_elasticity(tau in 1u32..=6, k1 in 1u32..=6, k2 in 1u32..=6, price in 0.0f64..2.5) {
            let p = params();
            let unit = p.unit_energy();
            let (ka, kb) = (k1.min(k2).min(tau), k1.max(k2).min(tau));
            // More energy means less slack, hence a price at least as high.
            let a = price_discount(price, tau, ka as f64 * unit, &p).unwrap();
            let b = price_discount(price, tau, kb as f64 * unit, &p).unwrap();
            prop_assert!(a <= b + 1e-12);
            prop_assert!(b <= price + 1e-12);
        }

        #[test]
        fn bands_partition(n in 0usize..=40, cap in 1usize..=40) {
            prop_assume!(n <= cap);
            let e = classify_event(n, cap).unwrap();
            let ratio = n as f64 / cap as f64;
            let expected = if ratio <= 0.2 { 0 } else if ratio <= 0.4 { 1 } else if ratio <= 0.6 { 2 } else if ratio <= 0.8 { 3 } else { 4 };
            prop_assert_eq!(e.index(), expected);
        }

        #[test]
        fn reward_reconstructs(earn in 0.0f64..50.0, g in 0.0f64..80.0, h in -50.0f64..50.0, w in 0.0f64..50.0,
                               s in 0.0f64..50.0, lost in 0usize..20, price in 0.0f64..2.5, mean in 0.0f64..2.5, stage in 0usize..48) {
            let p = params();
            let r = reward_terms(earn, g, h, w, s, lost, price, mean, stage, &p);
            let rebuilt = r.earning - r.procure_cost - r.storage_cost - r.wind_cost - r.solar_cost - r.qos_cost - r.variance_penalty;
            prop_assert!((rebuilt - r.total).abs() < 1e-9);
            prop_assert!((r.r_sigma - r.variance_penalty - r.total).abs() < 1e-12);
            prop_assert!((r.procure_cost - p.tariff(stage) * g).abs() < 1e-12);
        }
    }
}
