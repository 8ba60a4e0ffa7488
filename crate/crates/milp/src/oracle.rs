use crate::bnb::{MipResult, MipStatus};
use crate::error::{MilpError, Result};
use crate::lp::{LpOptions, LpStatus, Simplex};
use crate::model::Model;

/// Largest binary count accepted by [`enumerate_oracle`].
pub const ENUMERATION_LIMIT: usize = 20;

/// Solves a model by fixing every binary assignment and solving the LP for each.
///
/// Exponential in the number of binaries; meant as a reference for small models.
pub fn enumerate_oracle(model: &Model) -> Result<MipResult> {
    model.validate()?;
    let binaries = model.binaries();
    if binaries.len() > ENUMERATION_LIMIT {
        return Err(MilpError::TooManyBinaries {
            found: binaries.len(),
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut iterations = 0;
    let count = 1usize << binaries.len();
    for mask in 0..count {
        let mut fixed = model.clone();
        for (bit, &c) in binaries.iter().enumerate() {
            let v = ((mask >> bit) & 1) as f64;
            fixed.set_bounds(c, v, v);
        }
        let mut sx = Simplex::new(&fixed, LpOptions::default());
        let status = sx.solve();
        iterations += sx.iterations;
        if status != LpStatus::Optimal {
            continue;
        }
        let obj = sx.objective(&fixed);
        if best.as_ref().is_none_or(|(b, _)| obj > *b) {
            best = Some((obj, sx.structural_values().to_vec()));
        }
    }
    Ok(match best {
        Some((objective, values)) => MipResult {
            status: MipStatus::Optimal,
            objective,
            values: Some(values),
            best_bound: objective,
            gap: 0.0,
            nodes: count,
            lp_iterations: iterations,
        },
        None => MipResult {
            status: MipStatus::Infeasible,
            objective: f64::NEG_INFINITY,
            values: None,
            best_bound: f64::NEG_INFINITY,
            gap: f64::INFINITY,
            nodes: count,
            lp_iterations: iterations,
        },
    })
}
