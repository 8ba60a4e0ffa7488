//! Oracle suites run by the `validate` command.

use rand::Rng;
use serde::Serialize;

use crate::ebo::toy::{optimality_check, performance_difference_oracle, ToyMdp, ToyPolicy};
use crate::ebo::PricingPolicy;
use crate::env::{admit, soc_update, storage_power_bounds, StationParams};
use crate::error::Result;
use crate::heuristic::{simulate_stage, ChargeRule};
use crate::mpc::{
    build_mpc_model, linearize_storage, linearize_storage_power, plan_scenario, register_storage, replay_scenario,
    solve_stage, MpcConfig, SocRef,
};
use crate::stochastic::{acceptance_draw, generate_sample_paths, stream_rng, Exogenous, RenewableProfile, RequestModel, Stream};
use evcs_milp::{branch_and_bound, enumerate_oracle, lp_solve, Col, Comparator, LpStatus, MipOptions, Model};

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub cases: usize,
    /// Largest observed error against the oracle.
    pub max_error: f64,
    pub tolerance: f64,
    pub failures: usize,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.max_error <= self.tolerance
    }
}

fn storage_extreme(p: &StationParams, b: f64, modes: (f64, f64), h_fixed: Option<f64>, soc_next: bool, sign: f64) -> Option<f64> {
    let mut m = Model::new();
    let s = register_storage(&mut m, "_0_0", p);
    linearize_storage(&mut m, &s, SocRef::Fixed(b), "_0_0", p);
    linearize_storage_power(&mut m, &s, SocRef::Fixed(b), "_0_0", p);
    m.set_bounds(s.z_c, modes.0, modes.0);
    m.set_bounds(s.z_dc, modes.1, modes.1);
    if let Some(h) = h_fixed {
        m.set_bounds(s.h, h, h);
    }
    let col = if soc_next { s.soc_next } else { s.h };
    m.set_obj(col, sign);
    let sol = lp_solve(&m).ok()?;
    (sol.status == LpStatus::Optimal).then(|| sol.values[col.0])
}

/// Storage blocks against the nonlinear power bounds and SOC update on a
/// `points x points` grid of SOC and power.
pub fn linearization(params: &StationParams, points: usize) -> SuiteReport {
    let mut err = 0.0f64;
    let mut failures = 0;
    let mut cases = 0;
    let grid = |lo: f64, hi: f64| (0..points).map(move |i| lo + (hi - lo) * i as f64 / (points - 1).max(1) as f64);
    for b in grid(0.0, 1.0) {
        let (lo, hi) = storage_power_bounds(b, params);
        for (modes, want) in [((1.0, 0.0), lo), ((0.0, 1.0), hi)] {
            let sign = if want < 0.0 { -1.0 } else { 1.0 };
            match storage_extreme(params, b, modes, None, false, sign) {
                Some(v) => err = err.max((v - want).abs()),
                None => failures += 1,
            }
        }
        for h in grid(lo, hi) {
            cases += 1;
            let modes = if h < 0.0 { (1.0, 0.0) } else if h > 0.0 { (0.0, 1.0) } else { (0.0, 0.0) };
            let want = soc_update(b, h, params);
            for sign in [1.0, -1.0] {
                match storage_extreme(params, b, modes, Some(h), true, sign) {
                    Some(v) => err = err.max((v - want).abs()),
                    None => failures += 1,
                }
            }
        }
    }
    SuiteReport {
        suite: "linearization",
        cases,
        max_error: err,
        tolerance: 1e-9,
        failures,
    }
}

fn random_mip<R: Rng>(rng: &mut R) -> Model {
    let binaries = rng.random_range(1..=10);
    let n = binaries + rng.random_range(0..=5);
    let mut model = Model::new();
    let mut point = Vec::with_capacity(n);
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let obj = rng.random_range(-5.0..5.0);
        if j < binaries {
            cols.push(model.add_binary(format!("z{j}"), obj));
            point.push(f64::from(u8::from(rng.random_bool(0.5))));
        } else {
            cols.push(model.add_continuous(format!("x{j}"), 0.0, 4.0, obj));
            point.push(rng.random_range(0.0..4.0));
        }
    }
    for i in 0..rng.random_range(1..=20) {
        let mut terms: Vec<(Col, f64)> = Vec::new();
        let mut act = 0.0;
        for (&c, &x) in cols.iter().zip(&point) {
            if rng.random_bool(0.6) {
                let a = rng.random_range(-4.0..4.0);
                terms.push((c, a));
                act += a * x;
            }
        }
        let cmp = if rng.random_bool(0.3) { Comparator::Ge } else { Comparator::Le };
        let rhs = match cmp {
            Comparator::Ge => act - rng.random_range(0.0..2.0),
            _ => act + rng.random_range(0.0..2.0),
        };
        model.add_row(format!("r{i}"), terms, cmp, rhs);
    }
    model
}

/// Branch-and-bound against exhaustive enumeration on random models.
pub fn milp(count: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = stream_rng(seed, Stream::Test, &[1]);
    let mut err = 0.0f64;
    let mut failures = 0;
    for _ in 0..count {
        let m = random_mip(&mut rng);
        let a = branch_and_bound(&m, &MipOptions::default())?;
        let b = enumerate_oracle(&m)?;
        if a.has_solution() != b.has_solution() {
            failures += 1;
        } else if b.has_solution() {
            err = err.max((a.objective - b.objective).abs() / b.objective.abs().max(1.0));
        }
    }
    Ok(SuiteReport {
        suite: "milp",
        cases: count,
        max_error: err,
        tolerance: 1e-6,
        failures,
    })
}

fn random_policy<R: Rng>(mdp: &ToyMdp, rng: &mut R) -> ToyPolicy {
    (0..mdp.window)
        .map(|_| (0..mdp.events).map(|_| rng.random_range(0..mdp.actions())).collect())
        .collect()
}

/// Performance-difference identity on random toy models.
pub fn performance_difference(count: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = stream_rng(seed, Stream::Toy, &[1]);
    let mut err = 0.0f64;
    for _ in 0..count {
        let mdp = ToyMdp::random(&mut rng);
        let s = random_policy(&mdp, &mut rng);
        let u = random_policy(&mdp, &mut rng);
        let (lhs, rhs) = performance_difference_oracle(&mdp, &s, &u)?;
        err = err.max((lhs - rhs).abs());
    }
    Ok(SuiteReport {
        suite: "performance-difference",
        cases: count,
        max_error: err,
        tolerance: 1e-8,
        failures: 0,
    })
}

/// No single-stage deviation improves on the enumerated optimum.
pub fn optimality(count: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = stream_rng(seed, Stream::Toy, &[2]);
    let mut failures = 0;
    let mut err = 0.0f64;
    for _ in 0..count {
        let mdp = ToyMdp::random(&mut rng);
        let (_, checks) = optimality_check(&mdp)?;
        for c in checks {
            let excess = c.deviation_score - c.optimal_score;
            err = err.max(excess);
            if excess > 1e-12 {
                failures += 1;
            }
        }
    }
    Ok(SuiteReport {
        suite: "optimality",
        cases: count,
        max_error: err.max(0.0),
        tolerance: 1e-12,
        failures,
    })
}

/// Empirical acceptance rate at half the price cap.
pub fn calibration(draws: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = stream_rng(seed, Stream::Test, &[2]);
    let mut accepted = 0;
    for _ in 0..draws {
        if acceptance_draw(1.25, 2.5, &mut rng)? {
            accepted += 1;
        }
    }
    let rate = accepted as f64 / draws as f64;
    Ok(SuiteReport {
        suite: "acceptance-calibration",
        cases: draws,
        max_error: (rate - 0.5).abs(),
        tolerance: 0.02,
        failures: 0,
    })
}

/// Solved MPC models replayed through the station dynamics.
pub fn replay(count: usize, seed: u64, params: &StationParams, mpc: &MpcConfig) -> Result<SuiteReport> {
    let exo = Exogenous::new(params.clone(), RequestModel::default(), &RenewableProfile::default());
    let mut rng = stream_rng(seed, Stream::Test, &[3]);
    let mut err = 0.0f64;
    let mut failures = 0;
    for i in 0..count as u64 {
        let start = rng.random_range(0..params.horizon);
        let mut state = exo.initial_state(start);
        let mut day = stream_rng(seed, Stream::Day, &[i]);
        for t in start..start + rng.random_range(0..6) {
            let x = exo.sample_stage(t, &mut day);
            simulate_stage(&mut state, rng.random_range(0.5..2.5), &x.arrivals, x.next_wind, x.next_solar, ChargeRule::Greedy, params)?;
        }
        let price = rng.random_range(0.5..2.5);
        let policy = PricingPolicy::constant(params.horizon, price);
        let set = generate_sample_paths(&exo, &state, params.window, mpc.scenarios.max(1), seed, Stream::Scenario, &[i]);
        let adm = admit(&state, price, &set.paths[0].stages[0].arrivals, params)?;
        let plans = set
            .paths
            .iter()
            .map(|p| plan_scenario(&adm.state, price, adm.counters.lost, p, &policy, params))
            .collect::<Result<Vec<_>>>()?;
        let model = build_mpc_model(&adm.state, &plans, params)?;
        let sol = match solve_stage(&model, mpc, params) {
            Ok(s) => s,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        let mut total = 0.0;
        for m in 0..plans.len() {
            total += replay_scenario(&model, &sol.values, m, params)?.operating.iter().sum::<f64>();
        }
        err = err.max((total / plans.len() as f64 - model.model.objective_value(&sol.values)).abs());
    }
    Ok(SuiteReport {
        suite: "mpc-replay",
        cases: count,
        max_error: err,
        tolerance: 1e-6,
        failures,
    })
}

/// Every suite at its default size.
pub fn run_all(seed: u64, params: &StationParams, mpc: &MpcConfig) -> Result<Vec<SuiteReport>> {
    Ok(vec![
        linearization(params, 10),
        milp(100, seed)?,
        performance_difference(100, seed)?,
        optimality(20, seed)?,
        calibration(100_000, seed)?,
        replay(20, seed, params, mpc)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suites_pass() {
        let p = StationParams {
            piles: 4,
            window: 3,
            ..StationParams::default()
        };
        for r in [
            linearization(&p, 4),
            milp(10, 1).unwrap(),
            performance_difference(10, 1).unwrap(),
            optimality(5, 1).unwrap(),
            calibration(20_000, 1).unwrap(),
            replay(3, 1, &p, &MpcConfig::default()).unwrap(),
        ] {
            assert!(r.passed(), "{r:?}");
        }
    }
}
