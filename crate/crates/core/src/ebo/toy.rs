//! Small finite models with exact transition probabilities, used to check the
//! performance-difference identity, optimality of the enumerated best policy
//! and consistency of the sample estimators.

use rand::Rng;

use super::{candidate_value, estimate_conditional_weights, estimate_window_avg_price};
use crate::error::{Error, Result};

pub const MAX_STATES: usize = 5;
pub const MAX_EVENTS: usize = 3;
pub const MAX_ACTIONS: usize = 3;
pub const MAX_WINDOW: usize = 3;

/// Finite-window model whose actions are prices.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyMdp {
    /// Event of each state.
    pub event_of: Vec<usize>,
    pub events: usize,
    /// Price posted by each action.
    pub prices: Vec<f64>,
    pub window: usize,
    pub beta: f64,
    /// Distribution of the first state; supported on states of `observed`.
    pub initial: Vec<f64>,
    pub observed: usize,
    /// `transition[stage][state][action][next]`.
    pub transition: Vec<Vec<Vec<Vec<f64>>>>,
    /// `reward[stage][state][action]`, variance term excluded.
    pub reward: Vec<Vec<Vec<f64>>>,
}

/// Action index per `(stage, event)`.
pub type ToyPolicy = Vec<Vec<usize>>;

fn random_simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

impl ToyMdp {
    pub fn states(&self) -> usize {
        self.event_of.len()
    }

    pub fn actions(&self) -> usize {
        self.prices.len()
    }

    /// Random model within the size limits.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let states = rng.random_range(2..=MAX_STATES);
        let events = rng.random_range(1..=MAX_EVENTS.min(states));
        // Every event gets at least one state.
        let mut event_of: Vec<usize> = (0..states).map(|s| if s < events { s } else { rng.random_range(0..events) }).collect();
        for i in (1..states).rev() {
            event_of.swap(i, rng.random_range(0..=i));
        }
        let actions = rng.random_range(1..=MAX_ACTIONS);
        let prices = (0..actions).map(|_| (rng.random_range(1..=25) as f64) / 10.0).collect();
        let window = rng.random_range(1..=MAX_WINDOW);
        let beta = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..5.0) };
        let observed = event_of[rng.random_range(0..states)];
        let mut initial: Vec<f64> = event_of.iter().map(|&e| if e == observed { rng.random::<f64>() + 0.05 } else { 0.0 }).collect();
        let total: f64 = initial.iter().sum();
        initial.iter_mut().for_each(|q| *q /= total);
        let transition = (0..window)
            .map(|_| (0..states).map(|_| (0..actions).map(|_| random_simplex(states, rng)).collect()).collect())
            .collect();
        let reward = (0..window)
            .map(|_| (0..states).map(|_| (0..actions).map(|_| rng.random_range(-5.0..10.0)).collect()).collect())
            .collect();
        Self {
            event_of,
            events,
            prices,
            window,
            beta,
            initial,
            observed,
            transition,
            reward,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let too_large = |what: &str, got: usize, max: usize| {
            Error::ToyTooLarge(format!("{got} {what}, at most {max} supported"))
        };
        if self.states() > MAX_STATES {
            return Err(too_large("states", self.states(), MAX_STATES));
        }
        if self.events > MAX_EVENTS {
            return Err(too_large("events", self.events, MAX_EVENTS));
        }
        if self.actions() > MAX_ACTIONS {
            return Err(too_large("actions", self.actions(), MAX_ACTIONS));
        }
        if self.window == 0 || self.window > MAX_WINDOW {
            return Err(too_large("window stages", self.window, MAX_WINDOW));
        }
        Ok(())
    }

    fn action(&self, policy: &ToyPolicy, stage: usize, state: usize) -> usize {
        policy[stage][self.event_of[state]]
    }

    /// Objective and window-average price by listing every trajectory.
    pub fn value_by_enumeration(&self, policy: &ToyPolicy) -> (f64, f64) {
        let n = self.states();
        let mut paths: Vec<(Vec<usize>, f64)> = (0..n)
            .filter(|&s| self.initial[s] > 0.0)
            .map(|s| (vec![s], self.initial[s]))
            .collect();
        for stage in 0..self.window - 1 {
            let mut next = Vec::with_capacity(paths.len() * n);
            for (traj, p) in &paths {
                let s = *traj.last().unwrap();
                let a = self.action(policy, stage, s);
                for (s2, &q) in self.transition[stage][s][a].iter().enumerate() {
                    let mut t = traj.clone();
                    t.push(s2);
                    next.push((t, p * q));
                }
            }
            paths = next;
        }
        let tw = self.window as f64;
        let j_bar: f64 = paths
            .iter()
            .map(|(traj, p)| {
                p * traj
                    .iter()
                    .enumerate()
                    .map(|(k, &s)| self.prices[self.action(policy, k, s)])
                    .sum::<f64>()
            })
            .sum::<f64>()
            / tw;
        let value = paths
            .iter()
            .map(|(traj, p)| {
                p * traj
                    .iter()
                    .enumerate()
                    .map(|(k, &s)| {
                        let a = self.action(policy, k, s);
                        self.reward[k][s][a] - self.beta * (self.prices[a] - j_bar).powi(2)
                    })
                    .sum::<f64>()
            })
            .sum();
        (value, j_bar)
    }

    /// State distribution at every stage of the window.
    pub fn marginals(&self, policy: &ToyPolicy) -> Vec<Vec<f64>> {
        let n = self.states();
        let mut out = vec![self.initial.clone()];
        for stage in 0..self.window - 1 {
            let cur = &out[stage];
            let mut next = vec![0.0; n];
            for s in 0..n {
                let a = self.action(policy, stage, s);
                for s2 in 0..n {
                    next[s2] += cur[s] * self.transition[stage][s][a][s2];
                }
            }
            out.push(next);
        }
        out
    }

    pub fn window_mean(&self, policy: &ToyPolicy) -> f64 {
        let m = self.marginals(policy);
        let total: f64 = m
            .iter()
            .enumerate()
            .map(|(k, q)| (0..self.states()).map(|s| q[s] * self.prices[self.action(policy, k, s)]).sum::<f64>())
            .sum();
        total / self.window as f64
    }

    /// Value-to-go `u[stage][state]` with the window mean held at `j_bar`;
    /// `u[window]` is zero.
    pub fn value_to_go(&self, policy: &ToyPolicy, j_bar: f64) -> Vec<Vec<f64>> {
        let n = self.states();
        let mut u = vec![vec![0.0; n]; self.window + 1];
        for stage in (0..self.window).rev() {
            for s in 0..n {
                let a = self.action(policy, stage, s);
                u[stage][s] = self.q_value(stage, s, a, j_bar, &u[stage + 1]);
            }
        }
        u
    }

    /// One-stage penalized reward plus expected continuation `next`.
    pub fn q_value(&self, stage: usize, state: usize, action: usize, j_bar: f64, next: &[f64]) -> f64 {
        let cont: f64 = self.transition[stage][state][action].iter().zip(next).map(|(p, v)| p * v).sum();
        self.reward[stage][state][action] - self.beta * (self.prices[action] - j_bar).powi(2) + cont
    }

    /// Objective from the recursion (equal to the enumeration value).
    pub fn value(&self, policy: &ToyPolicy) -> f64 {
        let j_bar = self.window_mean(policy);
        let u = self.value_to_go(policy, j_bar);
        (0..self.states()).map(|s| self.initial[s] * u[0][s]).sum()
    }

    /// Every event-based policy, in lexicographic order.
    pub fn all_policies(&self) -> Vec<ToyPolicy> {
        let slots = self.window * self.events;
        let total = self.actions().pow(slots as u32);
        (0..total)
            .map(|mut code| {
                let mut p = vec![vec![0; self.events]; self.window];
                for slot in 0..slots {
                    p[slot / self.events][slot % self.events] = code % self.actions();
                    code /= self.actions();
                }
                p
            })
            .collect()
    }

    /// Best policy by exhaustive search (first one on ties).
    pub fn optimal_policy(&self) -> (ToyPolicy, f64) {
        let mut best: Option<(ToyPolicy, f64)> = None;
        for p in self.all_policies() {
            let v = self.value(&p);
            if best.as_ref().is_none_or(|(_, b)| v > *b) {
                best = Some((p, v));
            }
        }
        best.expect("at least one policy")
    }
}

/// Both sides of the performance-difference identity between `sigma` and
/// `upsilon`: the exact value gap, and the stagewise sum of one-step
/// advantages of `sigma` over `upsilon` weighted by `sigma`'s state
/// distribution, with continuations valued under `upsilon`.
pub fn performance_difference_oracle(mdp: &ToyMdp, sigma: &ToyPolicy, upsilon: &ToyPolicy) -> Result<(f64, f64)> {
    mdp.validate()?;
    let (j_sigma, jb_sigma) = mdp.value_by_enumeration(sigma);
    let (j_upsilon, jb_upsilon) = mdp.value_by_enumeration(upsilon);
    let lhs = j_sigma - j_upsilon;

    let q = mdp.marginals(sigma);
    let u = mdp.value_to_go(upsilon, jb_upsilon);
    let mut rhs = 0.0;
    for stage in 0..mdp.window {
        for s in 0..mdp.states() {
            if q[stage][s] == 0.0 {
                continue;
            }
            let a_sigma = mdp.action(sigma, stage, s);
            let a_upsilon = mdp.action(upsilon, stage, s);
            let with_sigma = mdp.q_value(stage, s, a_sigma, jb_sigma, &u[stage + 1]);
            let with_upsilon = mdp.q_value(stage, s, a_upsilon, jb_upsilon, &u[stage + 1]);
            rhs += q[stage][s] * (with_sigma - with_upsilon);
        }
    }
    Ok((lhs, rhs))
}

/// A single-stage deviation from the optimal policy at the observed event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationCheck {
    pub action: usize,
    /// Expected first-stage score of the deviation, penalized against the
    /// optimal policy's window mean.
    pub deviation_score: f64,
    /// The same score for the optimal action.
    pub optimal_score: f64,
    /// Exact objective of the deviating policy minus the optimum.
    pub value_gap: f64,
    /// `beta * window * (mean_dev - mean_opt)^2`.
    pub mean_shift: f64,
}

/// Enumerates the optimal policy and scores every first-stage deviation.
pub fn optimality_check(mdp: &ToyMdp) -> Result<(ToyPolicy, Vec<DeviationCheck>)> {
    mdp.validate()?;
    let (opt, j_opt) = mdp.optimal_policy();
    let jb_opt = mdp.window_mean(&opt);
    let u = mdp.value_to_go(&opt, jb_opt);
    let next = &u[1];
    let score = |a: usize| -> f64 {
        (0..mdp.states())
            .filter(|&s| mdp.initial[s] > 0.0)
            .map(|s| mdp.initial[s] * mdp.q_value(0, s, a, jb_opt, next))
            .sum()
    };
    let a_opt = opt[0][mdp.observed];
    let optimal_score = score(a_opt);
    let mut checks = Vec::new();
    for a in 0..mdp.actions() {
        let mut dev = opt.clone();
        dev[0][mdp.observed] = a;
        let jb_dev = mdp.window_mean(&dev);
        checks.push(DeviationCheck {
            action: a,
            deviation_score: score(a),
            optimal_score,
            value_gap: mdp.value(&dev) - j_opt,
            mean_shift: mdp.beta * mdp.window as f64 * (jb_dev - jb_opt).powi(2),
        });
    }
    Ok((opt, checks))
}

/// Exact first-stage score of posting `action` at the observed event while
/// `policy` prices the rest of the window.
pub fn exact_candidate(mdp: &ToyMdp, policy: &ToyPolicy, action: usize) -> f64 {
    let jb = mdp.window_mean(policy);
    let u = mdp.value_to_go(policy, jb);
    (0..mdp.states())
        .map(|s| mdp.initial[s] * mdp.q_value(0, s, action, jb, &u[1]))
        .sum()
}

fn sample_index<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    dist.len() - 1
}

fn simulate_paths<R: Rng + ?Sized>(
    mdp: &ToyMdp,
    policy: &ToyPolicy,
    first_action: Option<usize>,
    count: usize,
    rng: &mut R,
) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let mut events = Vec::with_capacity(count);
    let mut prices = Vec::with_capacity(count * mdp.window);
    let mut rewards = Vec::with_capacity(count * mdp.window);
    for _ in 0..count {
        let mut s = sample_index(&mdp.initial, rng);
        events.push(mdp.event_of[s]);
        for k in 0..mdp.window {
            let a = match (k, first_action) {
                (0, Some(a)) => a,
                _ => mdp.action(policy, k, s),
            };
            prices.push(mdp.prices[a]);
            rewards.push(mdp.reward[k][s][a]);
            s = sample_index(&mdp.transition[k][s][a], rng);
        }
    }
    (events, prices, rewards)
}

/// Sample estimate of [`exact_candidate`] from `count` paths for the window
/// mean and `count` paths for the candidate.
pub fn estimate_candidate<R: Rng + ?Sized>(
    mdp: &ToyMdp,
    policy: &ToyPolicy,
    action: usize,
    count: usize,
    rng: &mut R,
) -> Result<f64> {
    let (ev, prices, _) = simulate_paths(mdp, policy, None, count, rng);
    let w = estimate_conditional_weights(&ev, mdp.observed)?;
    let j_bar = estimate_window_avg_price(&w, &prices, mdp.window);
    let (ev, prices, rewards) = simulate_paths(mdp, policy, Some(action), count, rng);
    let w = estimate_conditional_weights(&ev, mdp.observed)?;
    Ok(candidate_value(&w, &prices, &rewards, mdp.window, j_bar, mdp.beta)?.value)
}
