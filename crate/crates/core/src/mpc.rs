//! Scenario-based MPC for charging and storage dispatch, compiled to a MILP.
//!
//! Column names follow `symbol_m_k` (and `z_m_k_i` for pile `i`), where `k`
//! is the stage offset inside the window and `m` the scenario. Stage-0
//! columns are shared by every scenario and carry `m = 0`; later stages use
//! `m = 1..=M`.
//!
//! Admissions, departures and posted prices depend only on pile counts, so
//! each scenario is planned up front: every EV that occupies a pile inside
//! the window becomes a pile episode with a fixed start, deadline and number
//! of charging stages still needed.

use std::time::Duration;

use evcs_milp::{branch_and_bound_with_start, Col, Comparator, MipOptions, MipResult, MipStatus, Model};
use serde::{Deserialize, Serialize};

use crate::ebo::PricingPolicy;
use crate::env::{
    admit, classify_event, Admitted, soc_update, storage_power_bounds, transition_admitted, Arrival, ControlAction, EventClass,
    StationParams, StationState, ENERGY_EPS,
};
use crate::error::{Error, Result};
use crate::heuristic::{merit_order_dispatch, ChargeRule};
use crate::stochastic::{generate_sample_paths, Exogenous, SamplePath, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    /// Scenarios per control-time model.
    pub scenarios: usize,
    pub node_limit: usize,
    pub time_limit_ms: Option<u64>,
    pub rel_gap: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            scenarios: 3,
            node_limit: 400,
            time_limit_ms: Some(2000),
            rel_gap: 1e-4,
        }
    }
}

impl MpcConfig {
    pub fn mip_options(&self) -> MipOptions {
        MipOptions {
            node_limit: self.node_limit,
            time_limit: self.time_limit_ms.map(Duration::from_millis),
            rel_gap: self.rel_gap,
            ..MipOptions::default()
        }
    }
}

/// SOC at the start of a stage: a known value or a model column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SocRef {
    Fixed(f64),
    Column(Col),
}

impl SocRef {
    /// Moves the SOC term of a row to the left-hand side with coefficient
    /// `coef`, returning the adjustment to the right-hand side.
    fn term(self, coef: f64, terms: &mut Vec<(Col, f64)>) -> f64 {
        match self {
            SocRef::Fixed(b) => -coef * b,
            SocRef::Column(c) => {
                terms.push((c, coef));
                0.0
            }
        }
    }
}

/// Storage columns of one stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageCols {
    pub h: Col,
    pub h_c: Col,
    pub h_dc: Col,
    pub y_c: Col,
    pub y_dc: Col,
    pub f_c: Col,
    pub f_dc: Col,
    pub z_c: Col,
    pub z_dc: Col,
    pub u: Col,
    pub v: Col,
    pub soc_next: Col,
}

/// Registers the storage columns for tag `_m_k`.
pub fn register_storage(model: &mut Model, tag: &str, params: &StationParams) -> StorageCols {
    let cap = params.storage_power_kw;
    StorageCols {
        h: model.add_continuous(format!("h{tag}"), -cap, cap, 0.0),
        h_c: model.add_continuous(format!("hc{tag}"), 0.0, cap, 0.0),
        h_dc: model.add_continuous(format!("hdc{tag}"), 0.0, cap, 0.0),
        y_c: model.add_continuous(format!("yc{tag}"), 0.0, cap, 0.0),
        y_dc: model.add_continuous(format!("ydc{tag}"), 0.0, cap, 0.0),
        f_c: model.add_continuous(format!("fc{tag}"), 0.0, 1.0, 0.0),
        f_dc: model.add_continuous(format!("fdc{tag}"), 0.0, 1.0, 0.0),
        z_c: model.add_binary(format!("zc{tag}"), 0.0),
        z_dc: model.add_binary(format!("zdc{tag}"), 0.0),
        u: model.add_continuous(format!("u{tag}"), 0.0, cap, 0.0),
        v: model.add_continuous(format!("v{tag}"), 0.0, cap, 0.0),
        soc_next: model.add_continuous(format!("b{tag}"), 0.0, 1.0, 0.0),
    }
}

/// SOC update through the gated powers `y_c`, `y_dc`.
pub fn linearize_storage(model: &mut Model, s: &StorageCols, soc: SocRef, tag: &str, params: &StationParams) {
    let cap = params.storage_power_kw;
    let dt = params.stage_hours;
    let kappa = params.storage_energy_kwh;
    let mut terms = vec![
        (s.soc_next, 1.0),
        (s.y_c, -params.charge_efficiency * dt / kappa),
        (s.y_dc, dt / (params.discharge_efficiency * kappa)),
    ];
    let rhs = soc.term(-1.0, &mut terms);
    model.add_row(format!("soc{tag}"), terms, Comparator::Eq, rhs);
    for (name, y, hh, z) in [("c", s.y_c, s.h_c, s.z_c), ("dc", s.y_dc, s.h_dc, s.z_dc)] {
        model.add_row(format!("y{name}_up{tag}"), [(y, 1.0), (hh, -1.0)], Comparator::Le, 0.0);
        model.add_row(format!("y{name}_lo{tag}"), [(y, 1.0), (hh, -1.0), (z, -cap)], Comparator::Ge, -cap);
        model.add_row(format!("y{name}_gate{tag}"), [(y, 1.0), (z, -cap)], Comparator::Le, 0.0);
    }
}

/// Storage power split and SOC-dependent power limits.
pub fn linearize_storage_power(model: &mut Model, s: &StorageCols, soc: SocRef, tag: &str, params: &StationParams) {
    let cap = params.storage_power_kw;
    let dt = params.stage_hours;
    let kappa = params.storage_energy_kwh;
    model.add_row(format!("hsplit{tag}"), [(s.h, 1.0), (s.h_dc, -1.0), (s.h_c, 1.0)], Comparator::Eq, 0.0);
    model.add_row(format!("hc_gate{tag}"), [(s.h_c, 1.0), (s.z_c, -cap)], Comparator::Le, 0.0);
    model.add_row(format!("hdc_gate{tag}"), [(s.h_dc, 1.0), (s.z_dc, -cap)], Comparator::Le, 0.0);
    for (name, f, z) in [("c", s.f_c, s.z_c), ("dc", s.f_dc, s.z_dc)] {
        let mut up = vec![(f, 1.0)];
        let rhs = soc.term(-1.0, &mut up);
        model.add_row(format!("f{name}_up{tag}"), up, Comparator::Le, rhs);
        let mut lo = vec![(f, 1.0), (z, -1.0)];
        let rhs = soc.term(-1.0, &mut lo) - 1.0;
        model.add_row(format!("f{name}_lo{tag}"), lo, Comparator::Ge, rhs);
        model.add_row(format!("f{name}_gate{tag}"), [(f, 1.0), (z, -1.0)], Comparator::Le, 0.0);
    }
    let a = kappa / (params.charge_efficiency * dt);
    model.add_row(format!("hmin{tag}"), [(s.h, 1.0), (s.z_c, a), (s.f_c, -a)], Comparator::Ge, 0.0);
    let b = kappa * params.discharge_efficiency / dt;
    model.add_row(format!("hmax{tag}"), [(s.h, 1.0), (s.f_dc, -b)], Comparator::Le, 0.0);
    model.add_row(format!("mode{tag}"), [(s.z_c, 1.0), (s.z_dc, 1.0)], Comparator::Le, 1.0);
}

/// `|h| = u + v` with `h = u - v` and each side gated by its mode binary.
pub fn linearize_abs(model: &mut Model, s: &StorageCols, tag: &str, params: &StationParams) {
    let cap = params.storage_power_kw;
    model.add_row(format!("habs{tag}"), [(s.h, 1.0), (s.u, -1.0), (s.v, 1.0)], Comparator::Eq, 0.0);
    model.add_row(format!("u_gate{tag}"), [(s.u, 1.0), (s.z_dc, -cap)], Comparator::Le, 0.0);
    model.add_row(format!("v_gate{tag}"), [(s.v, 1.0), (s.z_c, -cap)], Comparator::Le, 0.0);
}

/// Grid-import columns of one stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCols {
    pub g: Col,
    pub z_u: Col,
    pub z_v: Col,
}

pub fn register_grid(model: &mut Model, tag: &str, big_m: f64) -> GridCols {
    GridCols {
        g: model.add_continuous(format!("g{tag}"), 0.0, big_m, 0.0),
        z_u: model.add_binary(format!("zu{tag}"), 0.0),
        z_v: model.add_binary(format!("zv{tag}"), 0.0),
    }
}

/// `g = max(imbalance, 0)` where `imbalance = Σ terms + constant`.
pub fn linearize_grid_max(
    model: &mut Model,
    g: &GridCols,
    imbalance: &[(Col, f64)],
    constant: f64,
    big_m: f64,
    tag: &str,
) {
    let mut lower = vec![(g.g, 1.0)];
    lower.extend(imbalance.iter().map(|&(c, a)| (c, -a)));
    model.add_row(format!("g_lo{tag}"), lower.clone(), Comparator::Ge, constant);
    model.add_row(format!("g_off{tag}"), [(g.g, 1.0), (g.z_u, big_m)], Comparator::Le, big_m);
    let mut on = lower;
    on.push((g.z_v, big_m));
    model.add_row(format!("g_on{tag}"), on, Comparator::Le, big_m + constant);
    model.add_row(format!("g_pick{tag}"), [(g.z_u, 1.0), (g.z_v, 1.0)], Comparator::Ge, 1.0);
}

/// One EV's stay on a pile inside the window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PileEpisode {
    pub pile: usize,
    /// Stage offset at which the EV is first on the pile.
    pub start: usize,
    /// Parking stages left at `start`.
    pub remaining: u32,
    /// Energy still owed at `start`, kWh.
    pub energy: f64,
    pub locked_price: f64,
    /// Charging stages still needed at `start`.
    pub units: u32,
}

impl PileEpisode {
    pub fn end(&self) -> usize {
        self.start + self.remaining as usize
    }

    pub fn active(&self, k: usize) -> bool {
        self.start <= k && k < self.end()
    }
}

/// Price, admission and renewable trajectory of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPlan {
    pub prices: Vec<f64>,
    pub events: Vec<EventClass>,
    pub wind: Vec<f64>,
    pub solar: Vec<f64>,
    /// Arrivals at each stage offset; empty at offset 0 (already admitted).
    pub arrivals: Vec<Vec<Arrival>>,
    pub lost: Vec<usize>,
    pub episodes: Vec<PileEpisode>,
}

fn episodes_of(state: &StationState, unit: f64) -> Vec<PileEpisode> {
    state
        .piles
        .iter()
        .enumerate()
        .filter(|(_, p)| p.is_occupied())
        .map(|(i, p)| PileEpisode {
            pile: i,
            start: 0,
            remaining: p.remaining,
            energy: p.energy,
            locked_price: p.locked_price,
            units: p.required_units(unit),
        })
        .collect()
}

/// Plans one scenario from the post-admission state at offset 0. Offsets
/// `k >= 1` take arrivals from `path.stages[k]` and renewables from
/// `path.stages[k - 1]`; later prices follow `policy` at the planned event.
pub fn plan_scenario(
    post: &StationState,
    price: f64,
    lost: usize,
    path: &SamplePath,
    policy: &PricingPolicy,
    params: &StationParams,
) -> Result<ScenarioPlan> {
    let window = path.stages.len();
    let unit = params.unit_energy();
    let mut piles = post.clone();
    let mut plan = ScenarioPlan {
        prices: vec![price],
        events: vec![post.event()],
        wind: vec![post.wind_avail],
        solar: vec![post.solar_avail],
        arrivals: vec![Vec::new()],
        lost: vec![lost],
        episodes: episodes_of(post, unit),
    };
    for k in 1..window {
        for p in piles.piles.iter_mut() {
            if p.is_occupied() {
                p.remaining -= 1;
                if p.remaining == 0 {
                    *p = Default::default();
                }
            }
        }
        piles.stage += 1;
        let event = classify_event(piles.occupied(), piles.piles.len())?;
        let price = policy.price(post.stage + k, event);
        let x = &path.stages[k];
        let before: Vec<bool> = piles.piles.iter().map(|p| p.is_occupied()).collect();
        let adm = admit(&piles, price, &x.arrivals, params)?;
        for (i, p) in adm.state.piles.iter().enumerate() {
            if p.is_occupied() && !before[i] {
                plan.episodes.push(PileEpisode {
                    pile: i,
                    start: k,
                    remaining: p.remaining,
                    energy: p.energy,
                    locked_price: p.locked_price,
                    units: p.required_units(unit),
                });
            }
        }
        piles = adm.state;
        plan.prices.push(price);
        plan.events.push(event);
        plan.wind.push(path.stages[k - 1].next_wind);
        plan.solar.push(path.stages[k - 1].next_solar);
        plan.arrivals.push(x.arrivals.clone());
        plan.lost.push(adm.counters.lost);
    }
    Ok(plan)
}

/// Columns of one `(scenario, stage)` block.
#[derive(Debug, Clone, PartialEq)]
pub struct StageBlock {
    pub scenario: usize,
    pub offset: usize,
    pub storage: StorageCols,
    pub grid: GridCols,
    pub wind: Col,
    pub solar: Col,
    /// `(episode index, column)` for every episode that may charge here.
    pub charge: Vec<(usize, Col)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcModel {
    pub model: Model,
    pub post: StationState,
    pub plans: Vec<ScenarioPlan>,
    pub blocks: Vec<StageBlock>,
    /// `block_of[m][k]`; every scenario maps offset 0 to the shared block.
    pub block_of: Vec<Vec<usize>>,
    pub big_m: f64,
}

impl MpcModel {
    pub fn window(&self) -> usize {
        self.plans[0].prices.len()
    }

    pub fn block(&self, m: usize, k: usize) -> &StageBlock {
        &self.blocks[self.block_of[m][k]]
    }
}

/// Builds the scenario MILP from the post-admission state and plans that
/// share offset 0.
pub fn build_mpc_model(post: &StationState, plans: &[ScenarioPlan], params: &StationParams) -> Result<MpcModel> {
    if plans.is_empty() {
        return Err(Error::InvalidParams {
            name: "scenarios",
            reason: "need at least one scenario".into(),
        });
    }
    let window = plans[0].prices.len();
    if window == 0 || plans.iter().any(|p| p.prices.len() != window) {
        return Err(Error::InvalidParams {
            name: "window",
            reason: "scenarios must share a nonempty window".into(),
        });
    }
    let scenarios = plans.len();
    let w = 1.0 / scenarios as f64;
    let dt = params.stage_hours;
    let big_m = params.imbalance_bound();
    let mut model = Model::new();
    let mut blocks: Vec<StageBlock> = Vec::new();
    let mut block_of = vec![vec![0usize; window]; scenarios];

    // Offset-0 episodes are the same in every plan.
    let shared_eps: Vec<usize> = (0..plans[0].episodes.len()).filter(|&e| plans[0].episodes[e].start == 0).collect();

    let add_block = |model: &mut Model,
                         m_name: usize,
                         k: usize,
                         soc: SocRef,
                         weight: f64,
                         plan: &ScenarioPlan,
                         eps: &[usize]| {
        let tag = format!("_{m_name}_{k}");
        let stage = post.stage + k;
        let storage = register_storage(model, &tag, params);
        linearize_storage(model, &storage, soc, &tag, params);
        linearize_storage_power(model, &storage, soc, &tag, params);
        linearize_abs(model, &storage, &tag, params);
        let grid = register_grid(model, &tag, big_m);
        let wind = model.add_continuous(format!("pw{tag}"), 0.0, plan.wind[k], -params.wind_cost * dt * weight);
        let solar = model.add_continuous(format!("ps{tag}"), 0.0, plan.solar[k], -params.solar_cost * dt * weight);
        model.set_obj(grid.g, -params.tariff(stage) * dt * weight);
        model.set_obj(storage.u, -params.storage_cost * dt * weight);
        model.set_obj(storage.v, -params.storage_cost * dt * weight);
        let mut charge = Vec::new();
        let mut imbalance = vec![(wind, -1.0), (solar, -1.0), (storage.h, -1.0)];
        for &e in eps {
            let ep = &plan.episodes[e];
            if ep.units == 0 || !ep.active(k) {
                continue;
            }
            let z = model.add_binary(format!("z{tag}_{}", ep.pile), ep.locked_price * params.pile_power_kw * dt * weight);
            imbalance.push((z, params.pile_power_kw));
            charge.push((e, z));
        }
        linearize_grid_max(model, &grid, &imbalance, 0.0, big_m, &tag);
        StageBlock {
            scenario: m_name,
            offset: k,
            storage,
            grid,
            wind,
            solar,
            charge,
        }
    };

    let shared = add_block(&mut model, 0, 0, SocRef::Fixed(post.soc), 1.0, &plans[0], &shared_eps);
    let shared_soc = shared.storage.soc_next;
    let shared_charge = shared.charge.clone();
    blocks.push(shared);

    for (m, plan) in plans.iter().enumerate() {
        let all: Vec<usize> = (0..plan.episodes.len()).collect();
        let mut soc = SocRef::Column(shared_soc);
        for k in 1..window {
            let b = add_block(&mut model, m + 1, k, soc, w, plan, &all);
            soc = SocRef::Column(b.storage.soc_next);
            block_of[m][k] = blocks.len();
            blocks.push(b);
        }
        // Charging-count rows for every episode of this scenario.
        for (e, ep) in plan.episodes.iter().enumerate() {
            if ep.units == 0 {
                continue;
            }
            let mut terms: Vec<(Col, f64)> = Vec::new();
            if ep.start == 0 {
                let k0 = shared_charge.iter().find(|(se, _)| *se == e).map(|&(_, c)| c);
                terms.extend(k0.map(|c| (c, 1.0)));
            }
            for k in ep.start.max(1)..window.min(ep.end()) {
                let blk = &blocks[block_of[m][k]];
                if let Some(&(_, c)) = blk.charge.iter().find(|(be, _)| *be == e) {
                    terms.push((c, 1.0));
                }
            }
            let tag = format!("_{}_{}_{}", m + 1, ep.start, ep.pile);
            model.add_row(format!("need_max{tag}"), terms.clone(), Comparator::Le, ep.units as f64);
            let beyond = ep.end().saturating_sub(window) as f64;
            let need = ep.units as f64 - beyond;
            if need > 0.0 {
                model.add_row(format!("need_min{tag}"), terms, Comparator::Ge, need);
            }
        }
    }
    Ok(MpcModel {
        model,
        post: post.clone(),
        plans: plans.to_vec(),
        blocks,
        block_of,
        big_m,
    })
}

/// Decisions of one block, the input to [`block_values`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BlockDecision {
    pub wind: f64,
    pub solar: f64,
    pub storage: f64,
    pub demand: f64,
}

/// Writes a full column assignment for one block from its physical decisions.
fn block_values(blk: &StageBlock, soc: f64, d: BlockDecision, charged: &[bool], params: &StationParams, x: &mut [f64]) {
    let s = &blk.storage;
    let h = d.storage;
    x[s.h.0] = h;
    let (hc, hdc) = if h < 0.0 { (-h, 0.0) } else { (0.0, h) };
    let (zc, zdc) = (f64::from(u8::from(h < 0.0)), f64::from(u8::from(h > 0.0)));
    x[s.h_c.0] = hc;
    x[s.h_dc.0] = hdc;
    x[s.y_c.0] = hc;
    x[s.y_dc.0] = hdc;
    x[s.z_c.0] = zc;
    x[s.z_dc.0] = zdc;
    x[s.f_c.0] = zc * soc;
    x[s.f_dc.0] = zdc * soc;
    x[s.u.0] = hdc;
    x[s.v.0] = hc;
    x[s.soc_next.0] = soc_update(soc, h, params);
    x[blk.wind.0] = d.wind;
    x[blk.solar.0] = d.solar;
    let imbalance = d.demand - d.wind - d.solar - h;
    x[blk.grid.g.0] = imbalance.max(0.0);
    let on = imbalance > 0.0;
    x[blk.grid.z_u.0] = f64::from(u8::from(!on));
    x[blk.grid.z_v.0] = f64::from(u8::from(on));
    for (&(_, c), &z) in blk.charge.iter().zip(charged) {
        x[c.0] = f64::from(u8::from(z));
    }
}

/// Column values of the rule-based trajectory in every scenario.
pub fn heuristic_start(mpc: &MpcModel, rule: ChargeRule, params: &StationParams) -> Vec<f64> {
    let unit = params.unit_energy();
    let mut x = vec![0.0; mpc.model.num_cols()];
    for (m, plan) in mpc.plans.iter().enumerate() {
        let mut energy: Vec<f64> = plan.episodes.iter().map(|e| e.energy).collect();
        let mut soc = mpc.post.soc;
        for k in 0..mpc.window() {
            let blk = mpc.block(m, k);
            let charged: Vec<bool> = blk
                .charge
                .iter()
                .map(|&(e, _)| {
                    let ep = &plan.episodes[e];
                    let left = (ep.end() - k) as f64;
                    energy[e] > ENERGY_EPS
                        && match rule {
                            ChargeRule::Greedy => true,
                            ChargeRule::Delayed => energy[e] > (left - 1.0) * unit + ENERGY_EPS,
                        }
                })
                .collect();
            let demand = charged.iter().filter(|&&z| z).count() as f64 * params.pile_power_kw;
            let d = merit_order_dispatch(demand, plan.wind[k], plan.solar[k], soc, params);
            let dec = BlockDecision {
                wind: d.wind,
                solar: d.solar,
                storage: d.storage,
                demand,
            };
            block_values(blk, soc, dec, &charged, params, &mut x);
            for (&(e, _), &z) in blk.charge.iter().zip(&charged) {
                if z {
                    energy[e] = (energy[e] - unit).max(0.0);
                    if energy[e] <= ENERGY_EPS {
                        energy[e] = 0.0;
                    }
                }
            }
            soc = soc_update(soc, d.storage, params);
        }
    }
    x
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageSolution {
    pub action: ControlAction,
    /// Per scenario: Σ over offsets >= 1 of the reward without the variance
    /// term, QoS included.
    pub scenario_rewards: Vec<f64>,
    /// Per scenario: Σ over all offsets of earning minus energy and storage costs.
    pub scenario_operating: Vec<f64>,
    pub objective: f64,
    pub status: MipStatus,
    pub gap: f64,
    pub nodes: usize,
    pub values: Vec<f64>,
}

/// Clamps storage power into the env bounds; LP round-off can leave it a
/// hair outside.
fn clamp_storage(h: f64, soc: f64, params: &StationParams) -> f64 {
    let (lo, hi) = storage_power_bounds(soc, params);
    h.clamp(lo, hi)
}

/// Replay of one scenario's solved trajectory through the env dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioReplay {
    pub operating: Vec<f64>,
    pub r_sigma: Vec<f64>,
    /// Largest gap between the model's grid column and the env's import.
    pub grid_slack: f64,
    /// Largest gap between `u + v` and `|h|`.
    pub abs_slack: f64,
}

/// Re-simulates scenario `m` of a solved model through [`crate::env`].
pub fn replay_scenario(mpc: &MpcModel, x: &[f64], m: usize, params: &StationParams) -> Result<ScenarioReplay> {
    let plan = &mpc.plans[m];
    let window = mpc.window();
    let mut state = mpc.post.clone();
    let mut out = ScenarioReplay {
        operating: Vec::with_capacity(window),
        r_sigma: Vec::with_capacity(window),
        grid_slack: 0.0,
        abs_slack: 0.0,
    };
    for k in 0..window {
        let admitted = if k == 0 {
            Admitted {
                state: state.clone(),
                counters: crate::env::Counters {
                    occupied: state.occupied(),
                    lost: plan.lost[0],
                    ..Default::default()
                },
            }
        } else {
            admit(&state, plan.prices[k], &plan.arrivals[k], params)?
        };
        let blk = mpc.block(m, k);
        let mut charge = vec![false; params.piles];
        for &(e, c) in &blk.charge {
            if x[c.0] > 0.5 {
                charge[plan.episodes[e].pile] = true;
            }
        }
        let h = clamp_storage(x[blk.storage.h.0], admitted.state.soc, params);
        let action = ControlAction {
            price: plan.prices[k],
            storage_power: h,
            charge,
            wind_used: x[blk.wind.0].clamp(0.0, admitted.state.wind_avail),
            solar_used: x[blk.solar.0].clamp(0.0, admitted.state.solar_avail),
        };
        let (nw, ns) = if k + 1 < window {
            (plan.wind[k + 1], plan.solar[k + 1])
        } else {
            (0.0, 0.0)
        };
        let tr = transition_admitted(&admitted, &action, nw, ns, plan.prices[k], params)?;
        out.grid_slack = out.grid_slack.max((x[blk.grid.g.0] - tr.grid).abs());
        out.abs_slack = out
            .abs_slack
            .max((x[blk.storage.u.0] + x[blk.storage.v.0] - x[blk.storage.h.0].abs()).abs());
        out.operating.push(tr.reward.operating());
        out.r_sigma.push(tr.reward.r_sigma);
        state = tr.state;
    }
    Ok(out)
}

/// Extracts the shared first-stage action and per-scenario rewards.
pub fn extract_solution(mpc: &MpcModel, result: &MipResult, params: &StationParams) -> Result<StageSolution> {
    let x = result.values.as_ref().ok_or_else(|| Error::Solver {
        status: format!("{:?}", result.status),
    })?;
    let blk = mpc.block(0, 0);
    let mut charge = vec![false; params.piles];
    for &(e, c) in &blk.charge {
        if x[c.0] > 0.5 {
            charge[mpc.plans[0].episodes[e].pile] = true;
        }
    }
    let action = ControlAction {
        price: mpc.plans[0].prices[0],
        storage_power: clamp_storage(x[blk.storage.h.0], mpc.post.soc, params),
        charge,
        wind_used: x[blk.wind.0].clamp(0.0, mpc.post.wind_avail),
        solar_used: x[blk.solar.0].clamp(0.0, mpc.post.solar_avail),
    };
    let mut scenario_rewards = Vec::with_capacity(mpc.plans.len());
    let mut scenario_operating = Vec::with_capacity(mpc.plans.len());
    for m in 0..mpc.plans.len() {
        let r = replay_scenario(mpc, x, m, params)?;
        scenario_rewards.push(r.r_sigma[1..].iter().sum());
        scenario_operating.push(r.operating.iter().sum());
    }
    Ok(StageSolution {
        action,
        scenario_rewards,
        scenario_operating,
        objective: result.objective,
        status: result.status,
        gap: result.gap,
        nodes: result.nodes,
        values: x.clone(),
    })
}

/// Solves the model from the better of the greedy and delayed starts.
pub fn solve_stage(mpc: &MpcModel, cfg: &MpcConfig, params: &StationParams) -> Result<StageSolution> {
    let starts = [
        heuristic_start(mpc, ChargeRule::Greedy, params),
        heuristic_start(mpc, ChargeRule::Delayed, params),
    ];
    let tol = 1e-6;
    let start = starts
        .iter()
        .filter(|x| mpc.model.max_violation(x) <= tol)
        .max_by(|a, b| mpc.model.objective_value(a).total_cmp(&mpc.model.objective_value(b)));
    let result = branch_and_bound_with_start(&mpc.model, &cfg.mip_options(), start.map(|v| v.as_slice()))?;
    if !result.has_solution() {
        return Err(Error::Solver {
            status: format!("{:?}", result.status),
        });
    }
    extract_solution(mpc, &result, params)
}

/// Control-time MPC: samples scenario paths from the post-admission state
/// on stream `(seed, Scenario, key..)` and solves for the first-stage action.
pub fn mpc_control(
    exo: &Exogenous,
    adm: &Admitted,
    price: f64,
    policy: &PricingPolicy,
    cfg: &MpcConfig,
    seed: u64,
    key: &[u64],
) -> Result<StageSolution> {
    let params = &exo.params;
    let set = generate_sample_paths(exo, &adm.state, params.window, cfg.scenarios.max(1), seed, Stream::Scenario, key);
    let plans = set
        .paths
        .iter()
        .map(|path| plan_scenario(&adm.state, price, adm.counters.lost, path, policy, params))
        .collect::<Result<Vec<_>>>()?;
    let mpc = build_mpc_model(&adm.state, &plans, params)?;
    solve_stage(&mpc, cfg, params)
}
