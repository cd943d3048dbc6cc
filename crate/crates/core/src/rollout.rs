//! Deterministic single and batched trajectory rollouts.
//!
//! Each rollout owns a private copy of the dynamics context (the fluid state
//! for the glider), so batches can be evaluated on any number of workers and
//! still match sequential evaluation bit for bit.

use nalgebra::{SMatrix, SVector};
use rayon::prelude::*;

use crate::error::DynamicsError;
use crate::glider::{self, GliderParams, GliderState, StateVector, STATE_DIM};
use crate::vpm::{FluidState, VpmConfig};

/// Discrete-time dynamics stepped with a mutable per-rollout context.
pub trait Dynamics: Sync {
    type Context: Clone + Send + Sync;

    fn step(&self, x: &GliderState, u: f64, ctx: &mut Self::Context) -> Result<GliderState, DynamicsError>;

    fn dt(&self) -> f64;

    fn u_limit(&self) -> f64;

    /// Size of the context, reported per step in recorded trajectories.
    fn context_size(&self, _ctx: &Self::Context) -> usize {
        0
    }
}

/// The coupled glider and vortex model.
#[derive(Clone, Debug, PartialEq)]
pub struct GliderModel {
    pub params: GliderParams,
    pub vpm: VpmConfig,
}

impl GliderModel {
    pub fn new(params: GliderParams, vpm: VpmConfig) -> Self {
        Self { params, vpm }
    }

    pub fn still_air(&self) -> FluidState {
        FluidState::new(self.vpm.particle_cap)
    }
}

impl Dynamics for GliderModel {
    type Context = FluidState;

    fn step(&self, x: &GliderState, u: f64, ctx: &mut FluidState) -> Result<GliderState, DynamicsError> {
        glider::step(x, u, ctx, &self.params, &self.vpm).map(|s| s.state)
    }

    fn dt(&self) -> f64 {
        self.vpm.dt
    }

    fn u_limit(&self) -> f64 {
        self.params.u_limit
    }

    fn context_size(&self, ctx: &FluidState) -> usize {
        ctx.wake().len()
    }
}

/// `x_{k+1} = A x_k + B u_k`, for exercising the planning stack against known Jacobians.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearPlant {
    pub a: SMatrix<f64, STATE_DIM, STATE_DIM>,
    pub b: SVector<f64, STATE_DIM>,
    pub dt: f64,
    pub u_limit: f64,
}

impl Dynamics for LinearPlant {
    type Context = ();

    fn step(&self, x: &GliderState, u: f64, _ctx: &mut ()) -> Result<GliderState, DynamicsError> {
        let u = u.clamp(-self.u_limit, self.u_limit);
        let next: StateVector = self.a * x.to_vector() + self.b * u;
        let next = GliderState::from_vector(&next);
        if next.is_finite() {
            Ok(next)
        } else {
            Err(DynamicsError::NonFinite)
        }
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn u_limit(&self) -> f64 {
        self.u_limit
    }
}

/// A single rollout. `states` has one more entry than `inputs` unless the
/// rollout failed, in which case it stops at the last finite state.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<GliderState>,
    /// Inputs after clamping to the rate limit.
    pub inputs: Vec<f64>,
    /// Context size after each step.
    pub context_sizes: Vec<usize>,
    pub error: Option<DynamicsError>,
}

impl Trajectory {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }

    pub fn final_state(&self) -> Option<&GliderState> {
        if self.failed() {
            None
        } else {
            self.states.last()
        }
    }
}

/// Applies `controls` in sequence, advancing `ctx` in place.
pub fn rollout_in_place<D: Dynamics>(
    model: &D,
    x0: &GliderState,
    ctx: &mut D::Context,
    controls: &[f64],
) -> Trajectory {
    let mut states = Vec::with_capacity(controls.len() + 1);
    let mut inputs = Vec::with_capacity(controls.len());
    let mut context_sizes = Vec::with_capacity(controls.len());
    states.push(*x0);
    let lim = model.u_limit();
    let mut x = *x0;
    for &u in controls {
        let u = u.clamp(-lim, lim);
        match model.step(&x, u, ctx) {
            Ok(next) => {
                x = next;
                states.push(x);
                inputs.push(u);
                context_sizes.push(model.context_size(ctx));
            }
            Err(e) => {
                return Trajectory {
                    states,
                    inputs,
                    context_sizes,
                    error: Some(e),
                }
            }
        }
    }
    Trajectory {
        states,
        inputs,
        context_sizes,
        error: None,
    }
}

/// Rollout from a forked copy of `ctx`; also returns the final context.
pub fn rollout<D: Dynamics>(
    model: &D,
    x0: &GliderState,
    ctx: &D::Context,
    controls: &[f64],
) -> (Trajectory, D::Context) {
    let mut c = ctx.clone();
    let t = rollout_in_place(model, x0, &mut c, controls);
    (t, c)
}

/// Final state only, without recording the trajectory.
pub fn rollout_final<D: Dynamics>(
    model: &D,
    x0: &GliderState,
    ctx: &D::Context,
    controls: &[f64],
) -> Result<GliderState, DynamicsError> {
    let mut c = ctx.clone();
    let lim = model.u_limit();
    let mut x = *x0;
    for &u in controls {
        x = model.step(&x, u.clamp(-lim, lim), &mut c)?;
    }
    Ok(x)
}

/// Batch of rollouts sharing a context snapshot.
#[derive(Clone, Debug)]
pub struct RolloutRequest<'a, C> {
    /// One initial state for every sequence, or one per sequence.
    pub initial: &'a [GliderState],
    pub context: &'a C,
    pub controls: &'a [Vec<f64>],
    /// Keep the full trajectories, not just the final states.
    pub record: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutResult {
    /// `None` marks a failed rollout.
    pub finals: Vec<Option<GliderState>>,
    pub trajectories: Option<Vec<Trajectory>>,
}

impl RolloutResult {
    /// Applies `cost` to every final state; failed rollouts cost `+∞`.
    pub fn costs(&self, cost: impl Fn(&GliderState) -> f64) -> Vec<f64> {
        self.finals
            .iter()
            .map(|f| match f {
                Some(x) => {
                    let c = cost(x);
                    if c.is_finite() {
                        c
                    } else {
                        f64::INFINITY
                    }
                }
                None => f64::INFINITY,
            })
            .collect()
    }
}

/// Evaluates every control sequence on the current rayon pool. Results are
/// written by index and do not depend on the worker count.
pub fn batch_rollout<D: Dynamics>(model: &D, req: &RolloutRequest<'_, D::Context>) -> RolloutResult {
    let n = req.controls.len();
    assert!(
        req.initial.len() == 1 || req.initial.len() == n,
        "initial states must be one shared state or one per sequence"
    );
    let x0 = |i: usize| {
        if req.initial.len() == 1 {
            &req.initial[0]
        } else {
            &req.initial[i]
        }
    };
    if req.record {
        let trajectories: Vec<Trajectory> = (0..n)
            .into_par_iter()
            .map(|i| rollout(model, x0(i), req.context, &req.controls[i]).0)
            .collect();
        let finals = trajectories.iter().map(|t| t.final_state().copied()).collect();
        RolloutResult {
            finals,
            trajectories: Some(trajectories),
        }
    } else {
        let finals = (0..n)
            .into_par_iter()
            .map(|i| rollout_final(model, x0(i), req.context, &req.controls[i]).ok())
            .collect();
        RolloutResult {
            finals,
            trajectories: None,
        }
    }
}
