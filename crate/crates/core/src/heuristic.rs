//! Rule-based charging controllers and a fast in-place stage simulator.

use serde::{Deserialize, Serialize};

use crate::env::{
    admit_into, grid_import, reward_terms, soc_update, storage_power_bounds, Arrival, ControlAction, PileState,
    RewardBreakdown, StationParams, StationState, ENERGY_EPS,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChargeRule {
    /// Charge every EV that still needs energy.
    Greedy,
    /// Charge only when the departure deadline forces it.
    Delayed,
}

fn wants_charge(pile: &PileState, rule: ChargeRule, unit: f64) -> bool {
    if !pile.is_occupied() || pile.energy <= ENERGY_EPS {
        return false;
    }
    match rule {
        ChargeRule::Greedy => true,
        ChargeRule::Delayed => pile.must_charge(unit),
    }
}

pub fn charge_vector(state: &StationState, rule: ChargeRule, params: &StationParams) -> Vec<bool> {
    let unit = params.unit_energy();
    state.piles.iter().map(|p| wants_charge(p, rule, unit)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dispatch {
    pub wind: f64,
    pub solar: f64,
    /// Positive when discharging.
    pub storage: f64,
    pub grid: f64,
}

/// Covers `demand` from wind, then solar, then storage, then the grid; any
/// renewable surplus charges the storage.
pub fn merit_order_dispatch(demand: f64, wind_avail: f64, solar_avail: f64, soc: f64, params: &StationParams) -> Dispatch {
    let (h_min, h_max) = storage_power_bounds(soc, params);
    let wind = wind_avail.min(demand);
    let solar = solar_avail.min(demand - wind);
    let residual = demand - wind - solar;
    if residual > 0.0 {
        let storage = residual.min(h_max);
        return Dispatch {
            wind,
            solar,
            storage,
            grid: grid_import(demand, wind, solar, storage),
        };
    }
    let spare_w = wind_avail - wind;
    let spare_s = solar_avail - solar;
    let charge = (spare_w + spare_s).min(-h_min);
    let extra_w = charge.min(spare_w);
    let extra_s = charge - extra_w;
    Dispatch {
        wind: wind + extra_w,
        solar: solar + extra_s,
        storage: -charge,
        grid: 0.0,
    }
}

/// Full action for a post-admission state under a charging rule.
pub fn heuristic_action(state: &StationState, price: f64, rule: ChargeRule, params: &StationParams) -> ControlAction {
    let charge = charge_vector(state, rule, params);
    let demand = charge.iter().filter(|&&z| z).count() as f64 * params.pile_power_kw;
    let d = merit_order_dispatch(demand, state.wind_avail, state.solar_avail, state.soc, params);
    ControlAction {
        price,
        storage_power: d.storage,
        charge,
        wind_used: d.wind,
        solar_used: d.solar,
    }
}

/// Result of one in-place stage step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageOutcome {
    /// Reward terms; the variance penalty is left at zero for the caller.
    pub reward: RewardBreakdown,
    pub occupied: usize,
    pub arrivals: usize,
    pub entered: usize,
    pub departed: usize,
    pub lost: usize,
    pub dispatch: Dispatch,
    pub charging: usize,
}

/// Admits arrivals at `price`, applies the rule-based controller and advances
/// `state` to the next stage in place.
pub fn simulate_stage(
    state: &mut StationState,
    price: f64,
    arrivals: &[Arrival],
    next_wind: f64,
    next_solar: f64,
    rule: ChargeRule,
    params: &StationParams,
) -> Result<StageOutcome> {
    if !(0.0..=params.price_cap).contains(&price) {
        return Err(Error::PriceOutOfRange {
            price,
            cap: params.price_cap,
        });
    }
    let occupied = state.occupied();
    let (entered, lost) = admit_into(&mut state.piles, price, arrivals, params)?;
    let unit = params.unit_energy();
    let dt = params.stage_hours;

    let mut earning = 0.0;
    let mut charging = 0;
    for p in &state.piles {
        if wants_charge(p, rule, unit) {
            earning += p.locked_price * params.pile_power_kw * dt;
            charging += 1;
        }
    }
    let demand = charging as f64 * params.pile_power_kw;
    let d = merit_order_dispatch(demand, state.wind_avail, state.solar_avail, state.soc, params);
    let reward = reward_terms(earning, d.grid, d.storage, d.wind, d.solar, lost, price, price, state.stage, params);

    let mut departed = 0;
    for (i, p) in state.piles.iter_mut().enumerate() {
        if !p.is_occupied() {
            continue;
        }
        if wants_charge(p, rule, unit) {
            p.energy -= unit;
            if p.energy <= ENERGY_EPS {
                p.energy = 0.0;
            }
        }
        p.remaining -= 1;
        if p.energy > p.remaining as f64 * unit + ENERGY_EPS {
            return Err(Error::InfeasibleCharge {
                pile: i,
                reason: format!("{:.4} kWh left with {} stages of parking", p.energy, p.remaining),
            });
        }
        if p.remaining == 0 {
            *p = PileState::default();
            departed += 1;
        }
    }
    state.soc = soc_update(state.soc, d.storage, params);
    state.wind_avail = next_wind;
    state.solar_avail = next_solar;
    state.stage += 1;
    Ok(StageOutcome {
        reward,
        occupied,
        arrivals: arrivals.len(),
        entered,
        departed,
        lost,
        dispatch: d,
        charging,
    })
}
