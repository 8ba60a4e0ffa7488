//! Event-based online policy iteration for the pricing policy.
//!
//! A policy maps `(hour, density event)` to a price. At every stage of a
//! training day the entry for the observed event is re-optimized: each
//! candidate price is scored on `M` sampled paths over the sliding window,
//! with later stages priced by the previous policy, and the entry moves only
//! when the score beats the best value recorded so far for that entry.

pub mod toy;

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EventClass, StationParams, StationState};
use crate::error::{Error, Result};
use crate::heuristic::{simulate_stage, ChargeRule};
use crate::stochastic::{generate_sample_paths, stream_rng, Exogenous, SamplePath, Stream};

/// Candidate prices `min, min + step, ..., max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriceGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Default for PriceGrid {
    fn default() -> Self {
        Self {
            min: 0.1,
            max: 2.5,
            step: 0.1,
        }
    }
}

impl PriceGrid {
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.max - self.min) / self.step + 1e-9).floor() as usize;
        (0..=n)
            .map(|i| ((self.min + i as f64 * self.step) * 1e9).round() / 1e9)
            .collect()
    }
}

/// Position of `price` in `grid`, if present.
pub fn grid_index(grid: &[f64], price: f64) -> Option<usize> {
    grid.iter().position(|g| (g - price).abs() < 1e-9)
}

/// Price table indexed by clock hour and density event.
#[derive(Debug, Clone, PartialEq)]
pub struct PricingPolicy {
    pub table: Vec<[f64; EventClass::COUNT]>,
    /// Completed training episodes behind this table.
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEntry {
    pub stage: usize,
    pub event: EventClass,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub horizon: usize,
    pub iteration: usize,
    pub entries: Vec<PolicyEntry>,
}

impl PricingPolicy {
    pub fn constant(horizon: usize, price: f64) -> Self {
        Self {
            table: vec![[price; EventClass::COUNT]; horizon],
            iteration: 0,
        }
    }

    pub fn horizon(&self) -> usize {
        self.table.len()
    }

    pub fn price(&self, stage: usize, event: EventClass) -> f64 {
        self.table[stage % self.table.len()][event.index()]
    }

    pub fn set(&mut self, stage: usize, event: EventClass, price: f64) {
        let h = self.table.len();
        self.table[stage % h][event.index()] = price;
    }

    pub fn entries(&self) -> Vec<PolicyEntry> {
        let mut out = Vec::with_capacity(self.table.len() * EventClass::COUNT);
        for (stage, row) in self.table.iter().enumerate() {
            for e in EventClass::ALL {
                out.push(PolicyEntry {
                    stage,
                    event: e,
                    price: row[e.index()],
                });
            }
        }
        out
    }

    pub fn to_file(&self) -> PolicyFile {
        PolicyFile {
            horizon: self.horizon(),
            iteration: self.iteration,
            entries: self.entries(),
        }
    }

    pub fn from_file(file: &PolicyFile, cap: f64) -> Result<Self> {
        if file.horizon == 0 {
            return Err(Error::Config("policy horizon must be positive".into()));
        }
        let mut table = vec![[f64::NAN; EventClass::COUNT]; file.horizon];
        for e in &file.entries {
            if e.stage >= file.horizon {
                return Err(Error::Config(format!("policy stage {} beyond horizon", e.stage)));
            }
            if !(0.0..=cap).contains(&e.price) {
                return Err(Error::PriceOutOfRange { price: e.price, cap });
            }
            table[e.stage][e.event.index()] = e.price;
        }
        if table.iter().flatten().any(|p| p.is_nan()) {
            return Err(Error::Config("policy file leaves entries unset".into()));
        }
        Ok(Self {
            table,
            iteration: file.iteration,
        })
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_file())?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_json(path: &Path, cap: f64) -> Result<Self> {
        let file: PolicyFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_file(&file, cap)
    }
}

/// Conditional path weights: uniform over the paths showing `observed` at the
/// decision stage.
pub fn estimate_conditional_weights(events: &[usize], observed: usize) -> Result<Vec<f64>> {
    let hits = events.iter().filter(|&&e| e == observed).count();
    if hits == 0 {
        return Err(Error::NoMatchingPath);
    }
    let w = 1.0 / hits as f64;
    Ok(events.iter().map(|&e| if e == observed { w } else { 0.0 }).collect())
}

/// Weighted mean of each path's window-average price. `prices` holds one row
/// of `window` prices per path.
pub fn estimate_window_avg_price(weights: &[f64], prices: &[f64], window: usize) -> f64 {
    // Deviations from a reference price keep constant sequences exact.
    let reference = prices.first().copied().unwrap_or(0.0);
    reference
        + weights
            .iter()
            .zip(prices.chunks_exact(window))
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, row)| w * row.iter().map(|c| c - reference).sum::<f64>() / window as f64)
            .sum::<f64>()
}

/// Weighted mean over paths of the penalized rewards after the first stage.
pub fn estimate_future_value(
    weights: &[f64],
    prices: &[f64],
    rewards: &[f64],
    window: usize,
    j_bar: f64,
    beta: f64,
) -> Result<f64> {
    if rewards.len() != prices.len() {
        return Err(Error::MissingRewards {
            expected: prices.len(),
            got: rewards.len(),
        });
    }
    let mut total = 0.0;
    for (w, (c, r)) in weights.iter().zip(prices.chunks_exact(window).zip(rewards.chunks_exact(window))) {
        if *w == 0.0 {
            continue;
        }
        let tail: f64 = (1..window).map(|k| r[k] - beta * (c[k] - j_bar).powi(2)).sum();
        total += w * tail;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub price: f64,
    pub first_reward: f64,
    pub j_bar: f64,
    pub future_value: f64,
    /// Penalized first-stage reward plus the future value.
    pub value: f64,
}

/// Scores one candidate from its path rollouts.
pub fn candidate_value(
    weights: &[f64],
    prices: &[f64],
    rewards: &[f64],
    window: usize,
    j_bar: f64,
    beta: f64,
) -> Result<ValueEstimate> {
    let future_value = estimate_future_value(weights, prices, rewards, window, j_bar, beta)?;
    let mut first_reward = 0.0;
    let mut price = 0.0;
    for (w, (c, r)) in weights.iter().zip(prices.chunks_exact(window).zip(rewards.chunks_exact(window))) {
        if *w > 0.0 {
            first_reward += w * r[0];
            price = c[0];
        }
    }
    Ok(ValueEstimate {
        price,
        first_reward,
        j_bar,
        future_value,
        value: first_reward - beta * (price - j_bar).powi(2) + future_value,
    })
}

/// Per-path prices, rewards and decision-stage events of one candidate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Rollouts {
    pub window: usize,
    pub prices: Vec<f64>,
    pub rewards: Vec<f64>,
    pub first_events: Vec<usize>,
}

/// Rolls every path forward from `state`: the first stage posts `first_price`,
/// later stages post `policy` at the path's own density event. Charging
/// follows `rule`; rewards exclude the variance term.
pub fn rollout(
    state: &StationState,
    paths: &[SamplePath],
    first_price: f64,
    policy: &PricingPolicy,
    rule: ChargeRule,
    params: &StationParams,
    out: &mut Rollouts,
) -> Result<()> {
    let window = paths.first().map_or(0, |p| p.stages.len());
    out.window = window;
    out.prices.clear();
    out.rewards.clear();
    out.first_events.clear();
    let mut s = state.clone();
    for path in paths {
        s.clone_from(state);
        out.first_events.push(s.event().index());
        for (k, x) in path.stages.iter().enumerate() {
            let price = if k == 0 {
                first_price
            } else {
                policy.price(s.stage, s.event())
            };
            let o = simulate_stage(&mut s, price, &x.arrivals, x.next_wind, x.next_solar, rule, params)?;
            out.prices.push(price);
            out.rewards.push(o.reward.r_sigma);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateStep {
    pub event: EventClass,
    pub best: ValueEstimate,
    /// Estimates for every candidate, in grid order.
    pub candidates: Vec<ValueEstimate>,
    /// Window-average price of the previous policy.
    pub j_bar: f64,
}

/// Scores every candidate price for the observed event at `state` and
/// returns the argmax (ties go to the lowest price).
pub fn policy_update_step(
    state: &StationState,
    paths: &[SamplePath],
    policy_old: &PricingPolicy,
    grid: &[f64],
    rule: ChargeRule,
    params: &StationParams,
) -> Result<UpdateStep> {
    let event = state.event();
    let beta = params.variance_weight;
    let mut base = Rollouts::default();
    let mut buf = Rollouts::default();

    let incumbent = policy_old.price(state.stage, event);
    rollout(state, paths, incumbent, policy_old, rule, params, &mut base)?;
    let weights = estimate_conditional_weights(&base.first_events, event.index())?;
    let j_bar = estimate_window_avg_price(&weights, &base.prices, base.window);
    let incumbent_idx = grid_index(grid, incumbent);

    let mut candidates = Vec::with_capacity(grid.len());
    for (i, &price) in grid.iter().enumerate() {
        let r = if Some(i) == incumbent_idx {
            &base
        } else {
            rollout(state, paths, price, policy_old, rule, params, &mut buf)?;
            &buf
        };
        candidates.push(candidate_value(&weights, &r.prices, &r.rewards, r.window, j_bar, beta)?);
    }
    let mut best = candidates[0];
    for c in &candidates[1..] {
        if c.value > best.value {
            best = *c;
        }
    }
    Ok(UpdateStep {
        event,
        best,
        candidates,
        j_bar,
    })
}

/// `best` with probability `1 - epsilon`, otherwise a uniform grid price.
pub fn epsilon_greedy_select<R: Rng + ?Sized>(best: f64, grid: &[f64], epsilon: f64, rng: &mut R) -> f64 {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        grid[rng.random_range(0..grid.len())]
    } else {
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnConfig {
    pub grid: PriceGrid,
    /// Sample paths per update step.
    pub paths: usize,
    pub max_episodes: usize,
    /// Episodes with an unchanged table that count as a fixpoint.
    pub patience: usize,
    pub epsilon: f64,
    pub epsilon_decay: f64,
    pub epsilon_floor: f64,
    /// Charging rule used both inside the estimator and on the training day.
    pub rule: ChargeRule,
    pub seed: u64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            grid: PriceGrid::default(),
            paths: 30,
            max_episodes: 600,
            patience: 50,
            epsilon: 0.1,
            epsilon_decay: 0.995,
            epsilon_floor: 0.01,
            rule: ChargeRule::Greedy,
            seed: 1,
        }
    }
}

/// One improvement of a recorded best value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub episode: usize,
    /// Global update-step counter.
    pub step: usize,
    pub stage: usize,
    pub event: EventClass,
    pub j_star: f64,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub sum_j_star: f64,
    pub entries: usize,
    pub improvements: usize,
    pub table_changed: bool,
    pub epsilon: f64,
    pub day_reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Fixpoint,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationLog {
    pub trace: Vec<TraceRow>,
    pub episodes: Vec<EpisodeSummary>,
    /// Best recorded value per `(hour, event)` after each episode; `None`
    /// until the entry is first observed.
    pub snapshots: Vec<Vec<[Option<f64>; EventClass::COUNT]>>,
    pub stop: StopReason,
    pub skipped_steps: usize,
}

impl IterationLog {
    /// True when every entry's recorded best never decreased.
    pub fn is_monotone(&self) -> bool {
        let mut last: std::collections::HashMap<(usize, EventClass), f64> = Default::default();
        for r in &self.trace {
            if let Some(prev) = last.insert((r.stage, r.event), r.j_star) {
                if r.j_star < prev {
                    return false;
                }
            }
        }
        self.snapshots.windows(2).all(|w| {
            w[0].iter().zip(&w[1]).all(|(a, b)| {
                a.iter().zip(b).all(|(x, y)| match (x, y) {
                    (Some(x), Some(y)) => y >= x,
                    (Some(_), None) => false,
                    _ => true,
                })
            })
        })
    }

    /// First episode at which the summed best values over the entries present
    /// `window` episodes earlier grew by less than `tol` (relative) across
    /// those `window` episodes.
    pub fn plateau_episode(&self, window: usize, tol: f64) -> Option<usize> {
        (window..self.snapshots.len()).find(|&k| {
            let (a, b) = (&self.snapshots[k - window], &self.snapshots[k]);
            let mut start = 0.0;
            let mut end = 0.0;
            let mut any = false;
            for (ra, rb) in a.iter().zip(b) {
                for (x, y) in ra.iter().zip(rb) {
                    if let (Some(x), Some(y)) = (x, y) {
                        start += x;
                        end += y;
                        any = true;
                    }
                }
            }
            any && (end - start) <= tol * start.abs()
        })
    }

    pub fn write_trace_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for r in &self.trace {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_episodes_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for r in &self.episodes {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Runs daily training episodes until the table stops changing for
/// `patience` episodes or `max_episodes` is reached. Each episode continues
/// from the state the previous one ended in.
pub fn run_online_iteration(exo: &Exogenous, cfg: &LearnConfig) -> Result<(PricingPolicy, IterationLog)> {
    let params = &exo.params;
    params.validate()?;
    let horizon = params.horizon;
    let window = params.window;
    let grid = cfg.grid.values();
    if grid.is_empty() || grid.iter().any(|&g| !(0.0..=params.price_cap + 1e-12).contains(&g)) {
        return Err(Error::InvalidParams {
            name: "grid",
            reason: "candidate prices must lie in [0, price_cap]".into(),
        });
    }
    let mut policy = PricingPolicy::constant(horizon, params.initial_price);
    let mut j_star = vec![[None::<f64>; EventClass::COUNT]; horizon];
    let mut log = IterationLog {
        trace: Vec::new(),
        episodes: Vec::new(),
        snapshots: Vec::new(),
        stop: StopReason::IterationCap,
        skipped_steps: 0,
    };
    let mut state = exo.initial_state(0);
    let mut epsilon = cfg.epsilon;
    let mut unchanged = 0;
    let mut step = 0;

    for episode in 0..cfg.max_episodes {
        let policy_old = policy.clone();
        let mut explore = stream_rng(cfg.seed, Stream::Exploration, &[episode as u64]);
        let mut day = stream_rng(cfg.seed, Stream::Training, &[episode as u64]);
        let mut improvements = 0;
        let mut day_reward = 0.0;
        for hour in 0..horizon {
            let event = state.event();
            let set = generate_sample_paths(
                exo,
                &state,
                window,
                cfg.paths,
                cfg.seed,
                Stream::Estimation,
                &[episode as u64, hour as u64],
            );
            match policy_update_step(&state, &set.paths, &policy_old, &grid, cfg.rule, params) {
                Ok(upd) => {
                    let slot = &mut j_star[hour][event.index()];
                    if slot.is_none_or(|j| upd.best.value > j) {
                        *slot = Some(upd.best.value);
                        policy.set(hour, event, upd.best.price);
                        improvements += 1;
                        log.trace.push(TraceRow {
                            episode,
                            step,
                            stage: hour,
                            event,
                            j_star: upd.best.value,
                            price: upd.best.price,
                        });
                    }
                }
                Err(Error::NoMatchingPath) => log.skipped_steps += 1,
                Err(e) => return Err(e),
            }
            step += 1;
            let posted = epsilon_greedy_select(policy.price(hour, event), &grid, epsilon, &mut explore);
            let x = exo.sample_stage(state.stage, &mut day);
            let o = simulate_stage(&mut state, posted, &x.arrivals, x.next_wind, x.next_solar, cfg.rule, params)?;
            day_reward += o.reward.r_sigma;
        }
        policy.iteration = episode + 1;
        let changed = policy.table != policy_old.table;
        let flat = j_star.iter().flatten().flatten();
        log.episodes.push(EpisodeSummary {
            episode,
            sum_j_star: flat.clone().sum(),
            entries: flat.count(),
            improvements,
            table_changed: changed,
            epsilon,
            day_reward,
        });
        log.snapshots.push(j_star.clone());
        epsilon = (epsilon * cfg.epsilon_decay).max(cfg.epsilon_floor);
        unchanged = if changed { 0 } else { unchanged + 1 };
        if cfg.patience > 0 && unchanged >= cfg.patience {
            log.stop = StopReason::Fixpoint;
            break;
        }
    }
    Ok((policy, log))
}
