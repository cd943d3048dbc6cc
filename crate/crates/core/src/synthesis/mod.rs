//! Time-varying linear feedback around a nominal trajectory: perturbed
//! rollouts, a sparsity-aware Jacobian fit per step, and TVLQR gains.

pub mod regression;
pub mod riccati;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::SynthesisError;
use crate::glider::{GliderState, STATE_DIM};
use crate::rollout::{batch_rollout, rollout, Dynamics, RolloutRequest, Trajectory};

pub use regression::{estimate_jacobians, DynamicJacobian, Sample};
pub use riccati::{assemble_discrete, tvlqr_backward, Gain, LqrWeights, Mat7, Vec7};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisConfig {
    /// Number of perturbed rollouts.
    pub samples: usize,
    /// Standard deviation of the initial-state perturbation.
    pub state_sigma: [f64; STATE_DIM],
    /// Standard deviation of the per-step input perturbation (rad/s).
    pub input_sigma: f64,
    pub q: [f64; STATE_DIM],
    pub r: f64,
    pub qf: [f64; STATE_DIM],
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            samples: 64,
            state_sigma: [1e-3, 1e-3, 5e-3, 5e-3, 0.05, 0.05, 0.05],
            input_sigma: 0.5,
            q: [0.1, 0.1, 5.0, 0.1, 0.1, 0.1, 5.0],
            r: 0.01,
            qf: [400.0, 400.0, 10.0, 1.0, 1.0, 1.0, 1.0],
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<(), SynthesisError> {
        let bad = |m: &str| Err(SynthesisError::InvalidConfig(m.to_string()));
        if self.samples < 9 {
            return bad("samples must be at least 9");
        }
        if self.state_sigma.iter().any(|s| !(*s >= 0.0)) || !(self.input_sigma >= 0.0) {
            return bad("perturbation standard deviations must be non-negative");
        }
        if !(self.r > 0.0) {
            return bad("r must be positive");
        }
        if self.q.iter().chain(&self.qf).any(|v| !(*v >= 0.0)) {
            return bad("q and qf must be non-negative");
        }
        Ok(())
    }

    /// Discrete weights for step `dt`: the running costs `q` and `r` are
    /// rates and are multiplied by `dt`, the terminal cost is not.
    pub fn weights(&self, dt: f64) -> LqrWeights {
        LqrWeights {
            q: Vec7::from(self.q) * dt,
            r: self.r * dt,
            qf: Vec7::from(self.qf),
        }
    }
}

/// States `τ_0..τ_N` produced by rolling out inputs `ξ_0..ξ_{N−1}` from `τ_0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NominalTrajectory {
    pub states: Vec<GliderState>,
    pub inputs: Vec<f64>,
    pub dt: f64,
    pub t_start: f64,
}

impl NominalTrajectory {
    /// Rolls `inputs` out from `x0`; fails if the rollout does.
    pub fn from_rollout<D: Dynamics>(
        model: &D,
        x0: &GliderState,
        ctx: &D::Context,
        inputs: &[f64],
        t_start: f64,
    ) -> Result<Self, SynthesisError> {
        let (t, _) = rollout(model, x0, ctx, inputs);
        if let Some(e) = t.error {
            return Err(SynthesisError::Dynamics(e));
        }
        Ok(Self {
            states: t.states,
            inputs: t.inputs,
            dt: model.dt(),
            t_start,
        })
    }

    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    /// Ends the trajectory at the first state with `r_x ≥ plane_x`, keeping at least one step.
    pub fn truncated_at_plane(&self, plane_x: f64) -> Self {
        let end = self
            .states
            .iter()
            .position(|x| x.r_x >= plane_x)
            .unwrap_or(self.states.len() - 1)
            .clamp(1.min(self.steps()), self.steps());
        Self {
            states: self.states[..=end].to_vec(),
            inputs: self.inputs[..end].to_vec(),
            dt: self.dt,
            t_start: self.t_start,
        }
    }
}

/// Time-indexed affine feedback `u = −H_k (x − τ_k) + ξ_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    pub gains: Vec<Gain>,
    pub nominal: NominalTrajectory,
    pub u_limit: f64,
}

impl Policy {
    /// Feed-forward only.
    pub fn open_loop(nominal: NominalTrajectory, u_limit: f64) -> Self {
        Self {
            gains: vec![Gain::zeros(); nominal.steps()],
            nominal,
            u_limit,
        }
    }

    pub fn t_start(&self) -> f64 {
        self.nominal.t_start
    }

    pub fn steps(&self) -> usize {
        self.gains.len()
    }

    /// Step index for time `t`, clamped to the policy.
    pub fn index_at(&self, t: f64) -> usize {
        let k = ((t - self.nominal.t_start) / self.nominal.dt).round();
        let last = self.steps().saturating_sub(1) as f64;
        k.clamp(0.0, last) as usize
    }

    pub fn evaluate(&self, x: &GliderState, t: f64) -> f64 {
        if self.steps() == 0 {
            return 0.0;
        }
        let k = self.index_at(t);
        let err = x.to_vector() - self.nominal.states[k].to_vector();
        let u = -(self.gains[k] * err)[0] + self.nominal.inputs[k];
        u.clamp(-self.u_limit, self.u_limit)
    }
}

pub fn evaluate_policy(policy: &Policy, x: &GliderState, t: f64) -> f64 {
    policy.evaluate(x, t)
}

/// Rollouts from `τ_0 + 𝒩(0, Σ_x)` under `ξ + 𝒩(0, Σ_u)`. Failed rollouts are dropped.
pub fn perturbed_rollouts<D: Dynamics>(
    model: &D,
    nominal: &NominalTrajectory,
    ctx: &D::Context,
    cfg: &SynthesisConfig,
    seed: u64,
) -> Result<Vec<Trajectory>, SynthesisError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let x0 = nominal.states[0].to_array();
    let mut initial = Vec::with_capacity(cfg.samples);
    let mut controls = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        let mut x = x0;
        for (v, s) in x.iter_mut().zip(&cfg.state_sigma) {
            *v += s * std_normal.sample(&mut rng);
        }
        initial.push(GliderState::from_array(x));
        controls.push(
            nominal
                .inputs
                .iter()
                .map(|u| u + cfg.input_sigma * std_normal.sample(&mut rng))
                .collect::<Vec<f64>>(),
        );
    }
    let res = batch_rollout(
        model,
        &RolloutRequest {
            initial: &initial,
            context: ctx,
            controls: &controls,
            record: true,
        },
    );
    let survivors: Vec<Trajectory> = res
        .trajectories
        .expect("recorded")
        .into_iter()
        .filter(|t| !t.failed())
        .collect();
    if survivors.len() < regression::REGRESSORS {
        return Err(SynthesisError::TooFewSamples {
            survivors: survivors.len(),
            needed: regression::REGRESSORS,
        });
    }
    Ok(survivors)
}

/// Regression samples for step `k`: deviations of each perturbed rollout from the nominal.
pub fn step_samples(nominal: &NominalTrajectory, rollouts: &[Trajectory], k: usize) -> Vec<Sample> {
    let dt = nominal.dt;
    let rate = |a: &GliderState, b: &GliderState| {
        nalgebra::Vector3::new((b.v_x - a.v_x) / dt, (b.v_z - a.v_z) / dt, (b.omega - a.omega) / dt)
    };
    let nom_rate = rate(&nominal.states[k], &nominal.states[k + 1]);
    rollouts
        .iter()
        .map(|t| Sample {
            dx: t.states[k].to_vector() - nominal.states[k].to_vector(),
            du: t.inputs[k] - nominal.inputs[k],
            d_rate: rate(&t.states[k], &t.states[k + 1]) - nom_rate,
        })
        .collect()
}

/// Fit per step. Regressors that carry no excitation at a step (typically the
/// elevator angle while it sits on its limit) are dropped from that step's fit
/// and their Jacobian entries left at zero.
pub fn fit_step(samples: &[Sample]) -> Result<DynamicJacobian, SynthesisError> {
    match estimate_jacobians(samples) {
        Err(SynthesisError::RankDeficient { columns }) if !columns.is_empty() => {
            log::debug!("dropping unexcited regressors {columns:?}");
            regression::estimate_jacobians_without(samples, &columns)
        }
        other => other,
    }
}

/// Perturbed rollouts, per-step fits, discretization and the Riccati sweep.
pub fn build_policy<D: Dynamics>(
    model: &D,
    nominal: &NominalTrajectory,
    ctx: &D::Context,
    cfg: &SynthesisConfig,
    seed: u64,
) -> Result<Policy, SynthesisError> {
    cfg.validate()?;
    let rollouts = perturbed_rollouts(model, nominal, ctx, cfg, seed)?;
    let n = nominal.steps();
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for k in 0..n {
        let jac = fit_step(&step_samples(nominal, &rollouts, k)).map_err(|e| SynthesisError::AtStep {
            step: k,
            source: Box::new(e),
        })?;
        let (ak, bk) = assemble_discrete(&jac, nominal.dt);
        a.push(ak);
        b.push(bk);
    }
    let gains = tvlqr_backward(&a, &b, &cfg.weights(nominal.dt))?;
    Ok(Policy {
        gains,
        nominal: nominal.clone(),
        u_limit: model.u_limit(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rollout::LinearPlant;

    fn double_integrator() -> LinearPlant {
        let dt = 0.01;
        let mut a = Mat7::identity();
        a[(0, 4)] = dt;
        a[(1, 5)] = dt;
        a[(2, 6)] = dt;
        // v̇_x driven by φ, ω̇ damped
        a[(4, 3)] = dt * 4.0;
        a[(6, 6)] = 1.0 - dt * 0.5;
        a[(5, 2)] = dt * 2.0;
        let mut b = Vec7::zeros();
        b[3] = dt;
        b[6] = dt * 3.0;
        LinearPlant { a, b, dt, u_limit: 1e6 }
    }

    fn nominal(plant: &LinearPlant, n: usize) -> NominalTrajectory {
        let inputs: Vec<f64> = (0..n).map(|k| (k as f64 * 0.2).sin()).collect();
        NominalTrajectory::from_rollout(plant, &GliderState::default(), &(), &inputs, 0.0).unwrap()
    }

    #[test]
    fn truncation_at_plane() {
        let states: Vec<GliderState> = (0..6)
            .map(|k| GliderState {
                r_x: k as f64,
                ..Default::default()
            })
            .collect();
        let nom = NominalTrajectory {
            states,
            inputs: vec![0.0, 1.0, 2.0, 3.0, 4.0],
            dt: 0.1,
            t_start: 0.0,
        };
        let t = nom.truncated_at_plane(2.5);
        assert_eq!(t.steps(), 3);
        assert_eq!(t.states.len(), 4);
        assert_eq!(nom.truncated_at_plane(10.0), nom);
        assert_eq!(nom.truncated_at_plane(-1.0).steps(), 1);
    }

    #[test]
    fn zero_perturbation_reproduces_nominal() {
        let plant = double_integrator();
        let nom = nominal(&plant, 10);
        let cfg = SynthesisConfig {
            state_sigma: [0.0; 7],
            input_sigma: 0.0,
            ..Default::default()
        };
        let r = perturbed_rollouts(&plant, &nom, &(), &cfg, 3).unwrap();
        assert_eq!(r.len(), cfg.samples);
        assert!(r.iter().all(|t| t.states == nom.states));
    }

    #[test]
    fn perturbations_deterministic() {
        let plant = double_integrator();
        let nom = nominal(&plant, 10);
        let cfg = SynthesisConfig::default();
        let a = perturbed_rollouts(&plant, &nom, &(), &cfg, 3).unwrap();
        let b = perturbed_rollouts(&plant, &nom, &(), &cfg, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn policy_reproduces_nominal_on_track() {
        let plant = double_integrator();
        let nom = nominal(&plant, 20);
        let p = build_policy(&plant, &nom, &(), &SynthesisConfig::default(), 1).unwrap();
        for k in 0..20 {
            let t = k as f64 * plant.dt;
            assert!((p.evaluate(&nom.states[k], t) - nom.inputs[k]).abs() < 1e-12);
        }
        let late = p.evaluate(&nom.states[20], 100.0);
        assert_eq!(p.index_at(100.0), 19);
        assert!(late.is_finite());
    }

    #[test]
    fn zero_input_excitation_is_dropped() {
        let plant = double_integrator();
        let nom = nominal(&plant, 5);
        let cfg = SynthesisConfig {
            input_sigma: 0.0,
            ..Default::default()
        };
        let rollouts = perturbed_rollouts(&plant, &nom, &(), &cfg, 2).unwrap();
        let samples = step_samples(&nom, &rollouts, 2);
        assert!(matches!(
            estimate_jacobians(&samples),
            Err(SynthesisError::RankDeficient { ref columns }) if columns == &vec![5]
        ));
        let jac = fit_step(&samples).unwrap();
        assert_eq!(jac.du, nalgebra::Vector3::zeros());
        assert!((jac.dx[(0, 1)] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn lqr_stabilizes_double_integrator() {
        let dt = 0.01;
        let mut a = Mat7::identity();
        a[(0, 4)] = dt;
        let mut b = Vec7::zeros();
        b[4] = dt;
        let plant = LinearPlant { a, b, dt, u_limit: 1e6 };
        let n = 300;
        let nom = NominalTrajectory::from_rollout(&plant, &GliderState::default(), &(), &vec![0.0; n], 0.0).unwrap();
        let p = build_policy(&plant, &nom, &(), &SynthesisConfig::default(), 4).unwrap();
        let mut x = GliderState {
            r_x: 1.0,
            ..Default::default()
        };
        let mut best = f64::INFINITY;
        for k in 0..n {
            let u = p.evaluate(&x, k as f64 * dt);
            x = plant.step(&x, u, &mut ()).unwrap();
            best = best.min(x.r_x.abs());
        }
        assert!(best < 0.05, "closest approach {best}");
        assert!(x.r_x.abs() < 0.05, "final error {}", x.r_x);
    }
}
