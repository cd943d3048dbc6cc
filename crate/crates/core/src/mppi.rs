//! Model predictive path integral optimizer over elevator-rate sequences,
//! scored by a quadratic terminal cost.

use std::f64::consts::FRAC_PI_4;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::PlanError;
use crate::glider::{GliderState, STATE_DIM};
use crate::rollout::{batch_rollout, rollout_final, Dynamics, RolloutRequest};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MppiConfig {
    pub batch_size: usize,
    /// Iterations per replanning cycle.
    pub iterations: usize,
    /// Iterations for the offline plan from the launch state.
    pub initial_iterations: usize,
    pub lambda: f64,
    /// Per-step input standard deviation (rad/s).
    pub sigma: f64,
    /// Planning horizon in steps.
    pub horizon: usize,
    /// Diagonal of the terminal weight.
    pub q_diag: [f64; STATE_DIM],
    pub target: [f64; STATE_DIM],
}

impl Default for MppiConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            iterations: 3,
            initial_iterations: 40,
            lambda: 0.05,
            sigma: 2.0,
            horizon: 77,
            q_diag: [10.0, 10.0, 1.0, 0.0, 0.2, 0.2, 0.2],
            target: [3.5, 0.0, FRAC_PI_4, 0.0, 0.5, -0.5, 0.0],
        }
    }
}

impl MppiConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |m: &str| Err(PlanError::InvalidConfig(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.lambda > 0.0) {
            return bad("lambda must be positive");
        }
        if !(self.sigma >= 0.0) {
            return bad("sigma must be non-negative");
        }
        if self.q_diag.iter().any(|q| !(*q >= 0.0)) {
            return bad("q_diag entries must be non-negative");
        }
        if self.target.iter().any(|t| !t.is_finite()) {
            return bad("target must be finite");
        }
        Ok(())
    }

    pub fn target_state(&self) -> GliderState {
        GliderState::from_array(self.target)
    }
}

/// `(x − x_perch)ᵀ Q (x − x_perch)` with diagonal `Q`.
pub fn terminal_cost(x: &GliderState, cfg: &MppiConfig) -> f64 {
    x.to_array()
        .iter()
        .zip(&cfg.target)
        .zip(&cfg.q_diag)
        .map(|((a, b), q)| q * (a - b) * (a - b))
        .sum()
}

/// `count` perturbations of `mean`, clamped to `±u_limit`. Sample-major draw order.
pub fn sample_controls(mean: &[f64], sigma: f64, count: usize, u_limit: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let noise = Normal::new(0.0, sigma.max(0.0)).expect("finite standard deviation");
    (0..count)
        .map(|_| {
            mean.iter()
                .map(|&m| {
                    let e = if sigma > 0.0 { noise.sample(rng) } else { 0.0 };
                    (m + e).clamp(-u_limit, u_limit)
                })
                .collect()
        })
        .collect()
}

/// Exponentially weighted average of the sequences, normalized by the weight
/// sum. Non-finite costs get zero weight.
pub fn mppi_update(controls: &[Vec<f64>], costs: &[f64], lambda: f64) -> Result<Vec<f64>, PlanError> {
    assert_eq!(controls.len(), costs.len());
    let j_min = costs
        .iter()
        .copied()
        .filter(|c| c.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !j_min.is_finite() {
        return Err(PlanError::AllCostsInfinite);
    }
    let len = controls[0].len();
    let mut acc = vec![0.0; len];
    let mut total = 0.0;
    for (u, &c) in controls.iter().zip(costs) {
        if !c.is_finite() {
            continue;
        }
        let w = (-(c - j_min) / lambda).exp();
        if w == 0.0 {
            continue;
        }
        total += w;
        for (a, v) in acc.iter_mut().zip(u) {
            *a += w * v;
        }
    }
    for a in &mut acc {
        *a /= total;
    }
    Ok(acc)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MppiOutput {
    pub controls: Vec<f64>,
    pub cost: f64,
    /// Cost of the returned sequence after each iteration, starting with the warm start.
    pub history: Vec<f64>,
}

/// Runs `cfg.iterations` rounds of sample, roll out, reweight. The unperturbed
/// mean is always part of the batch and the returned sequence is the best
/// mean seen, so the cost never exceeds that of the warm start.
pub fn optimize<D: Dynamics>(
    model: &D,
    x0: &GliderState,
    ctx: &D::Context,
    warm_start: &[f64],
    cfg: &MppiConfig,
    seed: u64,
) -> Result<MppiOutput, PlanError> {
    cfg.validate()?;
    let cost_of = |u: &[f64]| match rollout_final(model, x0, ctx, u) {
        Ok(x) => {
            let c = terminal_cost(&x, cfg);
            if c.is_finite() {
                c
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::INFINITY,
    };
    let lim = model.u_limit();
    let mut mean: Vec<f64> = warm_start.iter().map(|u| u.clamp(-lim, lim)).collect();
    let mut best = mean.clone();
    let mut best_cost = cost_of(&mean);
    let mut history = vec![best_cost];
    if warm_start.is_empty() {
        return Ok(MppiOutput {
            controls: mean,
            cost: best_cost,
            history,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cfg.iterations {
        let mut samples = Vec::with_capacity(cfg.batch_size);
        samples.push(mean.clone());
        samples.extend(sample_controls(
            &mean,
            cfg.sigma,
            cfg.batch_size.saturating_sub(1),
            lim,
            &mut rng,
        ));
        let x = [*x0];
        let res = batch_rollout(
            model,
            &RolloutRequest {
                initial: &x,
                context: ctx,
                controls: &samples,
                record: false,
            },
        );
        let costs = res.costs(|x| terminal_cost(x, cfg));
        mean = mppi_update(&samples, &costs, cfg.lambda)?;
        let c = cost_of(&mean);
        if c < best_cost {
            best_cost = c;
            best.clone_from(&mean);
        }
        history.push(best_cost);
    }
    if !best_cost.is_finite() {
        return Err(PlanError::AllCostsInfinite);
    }
    Ok(MppiOutput {
        controls: best,
        cost: best_cost,
        history,
    })
}
