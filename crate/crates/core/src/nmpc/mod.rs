//! Closed-loop executive: a control loop applying the current feedback policy
//! every tick and a replanning worker that projects the observed wake
//! forward, re-optimizes and hands back a new policy.

pub mod threaded;
pub mod trigger;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{DynamicsError, ReplanError};
use crate::glider::{self, GliderState, STATE_DIM};
use crate::mppi::{self, MppiConfig};
use crate::rollout::{Dynamics, GliderModel};
use crate::synthesis::{build_policy, NominalTrajectory, Policy, SynthesisConfig};
use crate::vpm::{FluidState, RingDisturbance, Vec2};

pub use trigger::{characterize_trigger, pressure_trigger, sensor_pressure, PressureTrigger, TriggerCharacterization};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    NoDisturbance,
    Uncompensated,
    Compensated,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::NoDisturbance, Mode::Uncompensated, Mode::Compensated];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::NoDisturbance => "no_disturbance",
            Mode::Uncompensated => "uncompensated",
            Mode::Compensated => "compensated",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode `{s}`; expected no_disturbance, uncompensated or compensated"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Nominal launch state.
    pub launch_state: [f64; STATE_DIM],
    /// Per-trial launch jitter standard deviation.
    pub launch_sigma: [f64; STATE_DIM],
    /// Replanning budget and projection horizon, in ticks.
    pub projection_steps: usize,
    /// Nominal ring parameters; the planner only ever sees these.
    pub ring: RingDisturbance,
    /// Release time of the ring. `None` disables it in every mode.
    pub fire_time: Option<f64>,
    /// Relative standard deviation of the true ring speed.
    pub ring_speed_sigma: f64,
    /// Standard deviation of the true release position, per axis (m).
    pub ring_position_sigma: f64,
    pub sensor: Vec2,
    /// Pa.
    pub trigger_threshold: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            launch_state: [0.0, 0.0, 0.0, 0.0, 7.0, 0.0, 0.0],
            launch_sigma: [0.0, 0.0, 0.0, 0.0, 0.05, 0.02, 0.0],
            projection_steps: 10,
            ring: RingDisturbance::default(),
            fire_time: Some(0.1),
            ring_speed_sigma: 0.05,
            ring_position_sigma: 0.02,
            sensor: Vec2::new(3.6, -0.4),
            trigger_threshold: 15.0,
        }
    }
}

impl ScenarioConfig {
    /// Field name and message for the first invalid entry.
    pub fn validate(&self) -> Result<(), (String, String)> {
        let err = |f: &str, m: &str| Err((f.to_string(), m.to_string()));
        if self.launch_state.iter().any(|v| !v.is_finite()) {
            return err("launch_state", "must be finite");
        }
        if self.launch_sigma.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return err("launch_sigma", "must be non-negative and finite");
        }
        if self.projection_steps == 0 {
            return err("projection_steps", "must be at least 1");
        }
        if let Err(e) = self.ring.validate() {
            return err("ring", &e.to_string());
        }
        if let Some(t) = self.fire_time {
            if !(t >= 0.0 && t.is_finite()) {
                return err("fire_time", "must be non-negative");
            }
        }
        if !(self.ring_speed_sigma >= 0.0 && self.ring_speed_sigma < 1.0) {
            return err("ring_speed_sigma", "must lie in [0, 1)");
        }
        if !(self.ring_position_sigma >= 0.0 && self.ring_position_sigma.is_finite()) {
            return err("ring_position_sigma", "must be non-negative and finite");
        }
        if self.sensor.iter().any(|v| !v.is_finite()) {
            return err("sensor", "must be finite");
        }
        if !(self.trigger_threshold > 0.0) {
            return err("trigger_threshold", "must be positive");
        }
        Ok(())
    }
}

/// Everything the replanning worker needs besides the request.
#[derive(Clone, Debug, PartialEq)]
pub struct Planner {
    pub model: GliderModel,
    pub mppi: MppiConfig,
    pub synthesis: SynthesisConfig,
    pub projection_steps: usize,
}

impl Planner {
    /// Length of a trial in ticks.
    pub fn total_steps(&self) -> usize {
        self.mppi.horizon
    }

    pub fn perch(&self) -> Vec2 {
        Vec2::new(self.mppi.target[0], self.mppi.target[1])
    }
}

/// A feedback policy together with the optimized input sequence it was built from.
#[derive(Clone, Debug, PartialEq)]
pub struct PlannedPolicy {
    pub policy: Policy,
    /// Optimized inputs from `start_tick` to the end of the trial.
    pub controls: Vec<f64>,
    /// Tick at which the policy becomes valid.
    pub start_tick: usize,
    pub cost: f64,
}

impl PlannedPolicy {
    /// The remaining inputs from `tick`, padded with the last input to `len`.
    pub fn warm_start(&self, tick: usize, len: usize) -> Vec<f64> {
        let skip = tick.saturating_sub(self.start_tick);
        let last = self.controls.last().copied().unwrap_or(0.0);
        self.controls
            .iter()
            .skip(skip)
            .copied()
            .chain(std::iter::repeat(last))
            .take(len)
            .collect()
    }
}

/// Snapshot handed to the worker.
#[derive(Clone, Debug)]
pub struct ReplanRequest {
    pub tick: usize,
    pub state: GliderState,
    pub fluid: FluidState,
    pub plan: Arc<PlannedPolicy>,
}

/// `steps` closed-loop steps under `policy` starting at time `t0`.
pub fn project_forward(
    model: &GliderModel,
    policy: &Policy,
    x: &GliderState,
    fluid: &FluidState,
    t0: f64,
    steps: usize,
) -> Result<(GliderState, FluidState), DynamicsError> {
    let mut f = fluid.clone();
    let mut x = *x;
    for j in 0..steps {
        let u = policy.evaluate(&x, t0 + j as f64 * model.dt());
        x = model.step(&x, u, &mut f)?;
    }
    Ok((x, f))
}

/// Optimizes from `(x, fluid)` at `start_tick` and builds the feedback policy
/// around the result. The synthesis nominal ends at the perch plane.
pub fn plan_from(
    planner: &Planner,
    x: &GliderState,
    fluid: &FluidState,
    start_tick: usize,
    warm_start: &[f64],
    mppi_cfg: &MppiConfig,
    seed: u64,
) -> Result<PlannedPolicy, ReplanError> {
    let model = &planner.model;
    let out = mppi::optimize(model, x, fluid, warm_start, mppi_cfg, seed)?;
    let nominal = NominalTrajectory::from_rollout(model, x, fluid, &out.controls, start_tick as f64 * model.dt())?;
    let policy = build_policy(
        model,
        &nominal.truncated_at_plane(planner.perch().x),
        fluid,
        &planner.synthesis,
        sub_seed(seed, streams::SYNTHESIS),
    )?;
    Ok(PlannedPolicy {
        policy,
        controls: out.controls,
        start_tick,
        cost: out.cost,
    })
}

/// Plan from the launch state in still air, from a zero warm start.
pub fn plan_offline(planner: &Planner, launch: &GliderState, seed: u64) -> Result<PlannedPolicy, ReplanError> {
    let cfg = MppiConfig {
        iterations: planner.mppi.initial_iterations,
        ..planner.mppi.clone()
    };
    let zeros = vec![0.0; planner.total_steps()];
    plan_from(planner, launch, &planner.model.still_air(), 0, &zeros, &cfg, seed)
}

/// Projects the snapshot forward, re-optimizes over the remaining horizon and
/// builds a policy valid from `tick + projection_steps`.
pub fn replan(planner: &Planner, req: &ReplanRequest, seed: u64) -> Result<PlannedPolicy, ReplanError> {
    let model = &planner.model;
    let start = req.tick + planner.projection_steps;
    let remaining = planner.total_steps().saturating_sub(start);
    if remaining == 0 {
        return Err(ReplanError::HorizonExhausted { remaining });
    }
    let (x, fluid) = project_forward(
        model,
        &req.plan.policy,
        &req.state,
        &req.fluid,
        req.tick as f64 * model.dt(),
        planner.projection_steps,
    )?;
    let warm = req.plan.warm_start(start, remaining);
    plan_from(planner, &x, &fluid, start, &warm, &planner.mppi, seed)
}

/// Independent seed streams derived from a trial seed.
pub mod streams {
    pub const LAUNCH: u64 = 1;
    pub const RING: u64 = 2;
    pub const SYNTHESIS: u64 = 3;
    pub const OFFLINE: u64 = 4;
    /// Replan `i` uses stream `REPLAN + i`.
    pub const REPLAN: u64 = 1 << 16;
}

pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r.next_u64()
}

/// Per-experiment state shared by every trial.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub planner: Planner,
    pub scenario: ScenarioConfig,
    /// Policy flown from launch until the first replan is adopted.
    pub offline: Arc<PlannedPolicy>,
    /// Estimated ring at the moment the sensor trips, from the nominal parameters.
    pub characterization: Option<TriggerCharacterization>,
}

impl Experiment {
    pub fn prepare(planner: Planner, scenario: ScenarioConfig, seed: u64) -> Result<Self, ReplanError> {
        let launch = GliderState::from_array(scenario.launch_state);
        let offline = plan_offline(&planner, &launch, sub_seed(seed, streams::OFFLINE))?;
        let trigger = PressureTrigger::new(scenario.sensor, scenario.trigger_threshold);
        let characterization =
            characterize_trigger(&scenario.ring, &trigger, &planner.model.vpm, planner.total_steps());
        Ok(Self {
            planner,
            scenario,
            offline: Arc::new(offline),
            characterization,
        })
    }

    /// Launch state for a trial.
    pub fn launch_state(&self, seed: u64) -> GliderState {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, streams::LAUNCH));
        let n = Normal::new(0.0, 1.0).expect("unit normal");
        let mut x = self.scenario.launch_state;
        for (v, s) in x.iter_mut().zip(&self.scenario.launch_sigma) {
            *v += s * n.sample(&mut rng);
        }
        GliderState::from_array(x)
    }

    /// The ring actually released in a trial.
    pub fn true_ring(&self, seed: u64) -> RingDisturbance {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, streams::RING));
        let n = Normal::new(0.0, 1.0).expect("unit normal");
        let s = &self.scenario;
        let speed = s.ring.speed * (1.0 + s.ring_speed_sigma * n.sample(&mut rng));
        let dx = s.ring_position_sigma * n.sample(&mut rng);
        let dz = s.ring_position_sigma * n.sample(&mut rng);
        RingDisturbance {
            speed,
            center: s.ring.center + Vec2::new(dx, dz),
            ..s.ring.clone()
        }
    }

    pub fn fire_tick(&self) -> Option<usize> {
        self.scenario
            .fire_time
            .map(|t| (t / self.planner.model.dt()).round() as usize)
    }
}

/// A replan adopted or pending during a trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplanEvent {
    pub request_tick: usize,
    pub activation_tick: usize,
    pub cost: f64,
    pub nominal: Vec<GliderState>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub mode: Mode,
    pub dt: f64,
    /// Plant states, one more than `inputs`.
    pub states: Vec<GliderState>,
    pub inputs: Vec<f64>,
    /// Plant wake size after each tick.
    pub wake_sizes: Vec<usize>,
    /// Whether a new policy was adopted at each tick.
    pub replanned: Vec<bool>,
    pub replans: Vec<ReplanEvent>,
    pub failures: Vec<String>,
    pub fire_time: Option<f64>,
    pub trigger_time: Option<f64>,
    pub crossing_time: Option<f64>,
    /// Distance to the perch (m).
    pub perch_error: f64,
}

/// Distance to `perch` where the path first crosses the vertical plane through
/// it, interpolated between samples, or at the last state if it never does.
/// Also returns the fractional sample index of the crossing.
pub fn perch_error(states: &[GliderState], perch: Vec2) -> (f64, Option<f64>) {
    if let Some(first) = states.first() {
        if first.r_x >= perch.x {
            return ((first.position() - perch).norm(), Some(0.0));
        }
    }
    for (k, w) in states.windows(2).enumerate() {
        if w[1].r_x >= perch.x {
            let s = (perch.x - w[0].r_x) / (w[1].r_x - w[0].r_x);
            let p = w[0].position() + (w[1].position() - w[0].position()) * s;
            return ((p - perch).norm(), Some(k as f64 + s));
        }
    }
    match states.last() {
        Some(x) => ((x.position() - perch).norm(), None),
        None => (f64::INFINITY, None),
    }
}

/// Worker status as seen by the control loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WorkerStatus {
    Requested,
    Busy,
    Ready,
}

/// Control-loop side of a trial: plant, observed wake and policy bookkeeping.
pub struct LoopState<'a> {
    exp: &'a Experiment,
    mode: Mode,
    pub tick: usize,
    pub state: GliderState,
    truth: FluidState,
    pub observed: FluidState,
    pub current: Arc<PlannedPolicy>,
    pub pending: Option<Arc<PlannedPolicy>>,
    pub status: WorkerStatus,
    ring: RingDisturbance,
    fire_tick: Option<usize>,
    trigger: PressureTrigger,
    pub record: TrialRecord,
    done: bool,
}

impl<'a> LoopState<'a> {
    pub fn new(exp: &'a Experiment, mode: Mode, seed: u64) -> Self {
        let x0 = exp.launch_state(seed);
        let model = &exp.planner.model;
        Self {
            exp,
            mode,
            tick: 0,
            state: x0,
            truth: model.still_air(),
            observed: model.still_air(),
            current: exp.offline.clone(),
            pending: None,
            status: WorkerStatus::Ready,
            ring: exp.true_ring(seed),
            fire_tick: exp.fire_tick(),
            trigger: PressureTrigger::new(exp.scenario.sensor, exp.scenario.trigger_threshold),
            record: TrialRecord {
                seed,
                mode,
                dt: model.dt(),
                states: vec![x0],
                inputs: Vec::new(),
                wake_sizes: Vec::new(),
                replanned: Vec::new(),
                replans: Vec::new(),
                failures: Vec::new(),
                fire_time: None,
                trigger_time: None,
                crossing_time: None,
                perch_error: f64::INFINITY,
            },
            done: false,
        }
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.exp.planner.model.dt()
    }

    pub fn finished(&self) -> bool {
        self.done || self.tick >= self.exp.planner.total_steps()
    }

    /// Ring release and the pressure trigger, both on the plant wake. The
    /// trigger is armed only once a ring is in the air.
    pub fn disturbance_events(&mut self) {
        if self.mode != Mode::NoDisturbance && self.fire_tick == Some(self.tick) {
            match self.ring.inject(&mut self.truth) {
                Ok(()) => self.record.fire_time = Some(self.time()),
                Err(e) => self
                    .record
                    .failures
                    .push(format!("tick {}: ring release: {e}", self.tick)),
            }
        }
        if self.record.fire_time.is_none() || !self.trigger.update(&self.truth, &self.exp.planner.model.vpm) {
            return;
        }
        self.record.trigger_time = Some(self.time());
        if self.mode == Mode::Compensated {
            if let Some(c) = &self.exp.characterization {
                if let Err(e) = c.ring.inject(&mut self.observed) {
                    self.record
                        .failures
                        .push(format!("tick {}: ring estimate: {e}", self.tick));
                }
            }
        }
    }

    /// Swaps in the pending policy once its activation tick is reached.
    pub fn adopt_pending(&mut self) -> bool {
        let due = self.pending.as_ref().is_some_and(|p| self.tick >= p.start_tick);
        if due {
            self.current = self.pending.take().expect("pending policy");
        }
        due
    }

    /// Whether a request issued now could still produce a usable policy.
    pub fn replan_possible(&self) -> bool {
        self.tick + self.exp.planner.projection_steps < self.exp.planner.total_steps()
    }

    pub fn snapshot(&self) -> ReplanRequest {
        ReplanRequest {
            tick: self.tick,
            state: self.state,
            fluid: self.observed.clone(),
            plan: self.current.clone(),
        }
    }

    /// Records the outcome of a replan request.
    pub fn deliver(&mut self, req_tick: usize, result: Result<PlannedPolicy, ReplanError>) {
        match result {
            Ok(p) => {
                self.record.replans.push(ReplanEvent {
                    request_tick: req_tick,
                    activation_tick: p.start_tick,
                    cost: p.cost,
                    nominal: p.policy.nominal.states.clone(),
                });
                self.pending = Some(Arc::new(p));
            }
            Err(e) => self.record.failures.push(format!("tick {req_tick}: replan: {e}")),
        }
    }

    /// Evaluates the policy, steps the plant and the observed wake, and
    /// records the tick.
    pub fn apply(&mut self, replanned: bool) {
        let model = &self.exp.planner.model;
        let t = self.time();
        let u = self.current.policy.evaluate(&self.state, t);
        let wing = glider::wing_kinematics(&self.state, &model.params);
        let next = match glider::step(&self.state, u, &mut self.truth, &model.params, &model.vpm) {
            Ok(s) => s.state,
            Err(e) => {
                self.record.failures.push(format!("tick {}: plant: {e}", self.tick));
                self.done = true;
                return;
            }
        };
        if let Err(e) = self.observed.advance(&wing, &model.vpm) {
            self.record
                .failures
                .push(format!("tick {}: observed wake: {e}", self.tick));
        }
        self.state = next;
        self.record.states.push(next);
        self.record.inputs.push(u);
        self.record.wake_sizes.push(self.truth.wake().len());
        self.record.replanned.push(replanned);
        self.tick += 1;
        if next.r_x >= self.exp.planner.perch().x {
            self.done = true;
        }
    }

    pub fn finish(mut self) -> TrialRecord {
        let (err, crossing) = perch_error(&self.record.states, self.exp.planner.perch());
        self.record.perch_error = err;
        self.record.crossing_time = crossing.map(|c| c * self.record.dt);
        self.record
    }

    pub fn truth(&self) -> &FluidState {
        &self.truth
    }
}

/// One trial in lockstep simulated time. A request issued at tick `k` is
/// computed at once and its policy adopted at `k + projection_steps`, which is
/// also when the worker accepts the next request.
pub fn control_loop(exp: &Experiment, mode: Mode, seed: u64) -> TrialRecord {
    let mut s = LoopState::new(exp, mode, seed);
    let budget = exp.planner.projection_steps;
    let mut ready_at = 0;
    let mut replans = 0u64;
    while !s.finished() {
        s.disturbance_events();
        let adopted = s.adopt_pending();
        if s.tick >= ready_at {
            s.status = WorkerStatus::Ready;
        }
        if s.status == WorkerStatus::Ready && s.pending.is_none() && s.replan_possible() {
            let req = s.snapshot();
            s.status = WorkerStatus::Requested;
            let result = replan(&exp.planner, &req, sub_seed(seed, streams::REPLAN + replans));
            replans += 1;
            s.status = WorkerStatus::Busy;
            s.deliver(req.tick, result);
            ready_at = s.tick + budget;
        }
        s.apply(adopted);
    }
    s.finish()
}
