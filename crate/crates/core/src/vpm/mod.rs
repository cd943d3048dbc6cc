//! Two-dimensional vortex particle model of a flat-plate wing.
//!
//! The wing carries `n_bound` bound vortices whose strengths are solved every
//! step against a no-through-flow condition at `n_bound + 1` collocation
//! points. Above the critical angle of attack a leading- and trailing-edge
//! vortex are solved alongside them (with a Kelvin row closing the system) and
//! released into the wake. Wake particles are convected with regularized
//! kernels, dissipated, and merged once the particle cap is reached.

pub mod boundary;
pub mod kernel;
pub mod loads;
pub mod ring;
pub mod wake;

use serde::{Deserialize, Serialize};

use crate::error::VpmError;

pub use boundary::{assemble_boundary_system, build_collocation, solve_strengths, BoundSystem, WingGeometry};
pub use kernel::{induced_velocity, regularized_kernel_velocity, singular_kernel_velocity, Kernel};
pub use loads::{compute_loads, WingLoads};
pub use ring::{segments_intersect, RingDisturbance};
pub use wake::{convect_and_dissipate, merge_oldest, shed_and_gate};

pub type Vec2 = nalgebra::Vector2<f64>;

/// Lagrangian flow element.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VortexParticle {
    pub position: Vec2,
    pub circulation: f64,
    /// Steps since the particle was created.
    pub age: u32,
}

impl VortexParticle {
    pub fn new(position: Vec2, circulation: f64) -> Self {
        Self {
            position,
            circulation,
            age: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VpmConfig {
    /// Number of bound vortices on the chord.
    pub n_bound: usize,
    /// Blob core radius for wake interactions (m).
    pub core_radius: f64,
    /// Per-step circulation decay factor.
    pub dissipation: f64,
    /// Offset of shed vortices from the chord ends (m). `None` uses 0.2 panel lengths.
    pub shed_offset: Option<f64>,
    /// Shedding is enabled above this effective angle of attack (rad).
    pub critical_aoa: f64,
    pub particle_cap: usize,
    /// Air density (kg/m³).
    pub rho: f64,
    /// Time step (s).
    pub dt: f64,
}

impl Default for VpmConfig {
    fn default() -> Self {
        Self {
            n_bound: 8,
            core_radius: 0.02,
            dissipation: 0.999,
            shed_offset: None,
            critical_aoa: 9f64.to_radians(),
            particle_cap: 60,
            rho: 1.225,
            dt: 0.01,
        }
    }
}

impl VpmConfig {
    pub fn validate(&self) -> Result<(), VpmError> {
        let bad = |m: &str| Err(VpmError::InvalidConfig(m.to_string()));
        if self.n_bound < 2 {
            return bad("n_bound must be at least 2");
        }
        if !(self.dissipation > 0.0 && self.dissipation <= 1.0) {
            return bad("dissipation must lie in (0, 1]");
        }
        if self.particle_cap < 4 {
            return bad("particle_cap must be at least 4");
        }
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if !(self.core_radius > 0.0) {
            return bad("core_radius must be positive");
        }
        if !(self.rho > 0.0) {
            return bad("rho must be positive");
        }
        if let Some(a) = self.shed_offset {
            if !(a > 0.0) {
                return bad("shed_offset must be positive");
            }
        }
        Ok(())
    }

    pub fn panel_length(&self, chord: f64) -> f64 {
        chord / self.n_bound as f64
    }

    pub fn shed_offset_for(&self, chord: f64) -> f64 {
        self.shed_offset.unwrap_or(0.2 * self.panel_length(chord))
    }
}

/// Pose and rigid-body velocity of the wing, all the vortex model needs to
/// know about the vehicle carrying it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WingKinematics {
    pub leading_edge: Vec2,
    /// Chord angle; the tangent `[cos θ, sin θ]` points from trailing to leading edge.
    pub theta: f64,
    pub chord: f64,
    /// Point about which the body rotates (centre of mass).
    pub pivot: Vec2,
    /// Velocity of the pivot.
    pub velocity: Vec2,
    pub omega: f64,
    /// Moment reference and angle-of-attack probe point.
    pub reference: Vec2,
}

impl WingKinematics {
    /// A wing translating without rotation, pivoting about its leading edge.
    pub fn translating(leading_edge: Vec2, theta: f64, chord: f64, velocity: Vec2) -> Self {
        Self {
            leading_edge,
            theta,
            chord,
            pivot: leading_edge,
            velocity,
            omega: 0.0,
            reference: leading_edge,
        }
    }

    pub fn tangent(&self) -> Vec2 {
        Vec2::new(self.theta.cos(), self.theta.sin())
    }

    pub fn normal(&self) -> Vec2 {
        Vec2::new(-self.theta.sin(), self.theta.cos())
    }

    /// Rigid-body velocity of a material point of the wing.
    #[inline]
    pub fn point_velocity(&self, p: Vec2) -> Vec2 {
        let arm = p - self.pivot;
        self.velocity + Vec2::new(-arm.y, arm.x) * self.omega
    }

    /// Angle between the chord and the relative wind seen at the reference point, wrapped to (−π, π].
    pub fn effective_aoa(&self) -> f64 {
        let v = self.point_velocity(self.reference);
        if v.norm_squared() == 0.0 {
            return 0.0;
        }
        wrap_angle(self.theta - v.y.atan2(v.x))
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut w = a % two_pi;
    if w > std::f64::consts::PI {
        w -= two_pi;
    } else if w <= -std::f64::consts::PI {
        w += two_pi;
    }
    w
}

/// Wake particles plus the bookkeeping needed to continue stepping: the last
/// solved bound elements (they convect the wake on the next step), the
/// potential jump history for the unsteady load terms, and the active ring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluidState {
    wake: Vec<VortexParticle>,
    disturbance: Option<[usize; 2]>,
    particle_cap: usize,
    bound: Vec<VortexParticle>,
    /// Per-panel potential jump from the previous step; `None` disables the
    /// unsteady terms on the next load evaluation.
    history: Option<Vec<f64>>,
}

impl FluidState {
    /// Empty wake with no load history: the first step is evaluated quasi-steadily.
    pub fn new(particle_cap: usize) -> Self {
        Self {
            wake: Vec::with_capacity(particle_cap + 4),
            disturbance: None,
            particle_cap,
            bound: Vec::new(),
            history: None,
        }
    }

    /// Empty wake with zero circulation history, i.e. a wing started impulsively from rest.
    pub fn impulsive_start(particle_cap: usize) -> Self {
        let mut s = Self::new(particle_cap);
        s.history = Some(Vec::new());
        s
    }

    pub fn from_particles(particles: Vec<VortexParticle>, particle_cap: usize) -> Self {
        let mut s = Self::new(particle_cap);
        s.wake.extend(particles);
        s
    }

    pub fn wake(&self) -> &[VortexParticle] {
        &self.wake
    }

    pub fn bound(&self) -> &[VortexParticle] {
        &self.bound
    }

    pub fn particle_cap(&self) -> usize {
        self.particle_cap
    }

    pub fn disturbance(&self) -> Option<[usize; 2]> {
        self.disturbance
    }

    pub fn wake_circulation(&self) -> f64 {
        self.wake.iter().map(|p| p.circulation).sum()
    }

    pub fn bound_circulation(&self) -> f64 {
        self.bound.iter().map(|p| p.circulation).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.wake
            .iter()
            .all(|p| p.position.x.is_finite() && p.position.y.is_finite() && p.circulation.is_finite())
    }

    /// Ring cores, if a disturbance is active.
    pub fn ring_cores(&self) -> Option<[VortexParticle; 2]> {
        self.disturbance.map(|[a, b]| [self.wake[a], self.wake[b]])
    }

    pub(crate) fn wake_mut(&mut self) -> &mut Vec<VortexParticle> {
        &mut self.wake
    }

    pub(crate) fn set_disturbance(&mut self, d: Option<[usize; 2]>) {
        self.disturbance = d;
    }

    /// Removes the particle at `idx`, keeping ring indices valid.
    pub(crate) fn remove_particle(&mut self, idx: usize) -> VortexParticle {
        let p = self.wake.remove(idx);
        if let Some([a, b]) = self.disturbance {
            let fix = |i: usize| if i > idx { i - 1 } else { i };
            self.disturbance = Some([fix(a), fix(b)]);
        }
        p
    }

    pub(crate) fn is_ring_core(&self, idx: usize) -> bool {
        matches!(self.disturbance, Some([a, b]) if a == idx || b == idx)
    }
}

/// Result of one model step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutput {
    pub loads: WingLoads,
    pub shedding: bool,
    /// Σ(bound + edge) + Σ wake right after the solve, when the Kelvin row is active.
    pub kelvin_residual: Option<f64>,
    /// Largest |Γ| involved in that sum.
    pub max_abs_circulation: f64,
    pub ring_terminated: bool,
}

impl FluidState {
    /// Advances the fluid by one step in place: convect, build and solve the
    /// boundary system, shed, merge, check ring termination, then evaluate loads.
    pub fn advance(&mut self, wing: &WingKinematics, cfg: &VpmConfig) -> Result<StepOutput, VpmError> {
        convect_and_dissipate(self, cfg);

        let aoa = wing.effective_aoa();
        let shedding = aoa.abs() > cfg.critical_aoa;
        let mut system = assemble_boundary_system(wing, self, shedding, cfg);
        let strengths = solve_strengths(&system)?;
        system.strengths = strengths;

        let wake_sum = self.wake_circulation();
        let total_circulation = system.strengths.iter().sum::<f64>() + wake_sum;
        let max_abs_circulation = system
            .strengths
            .iter()
            .chain(self.wake.iter().map(|p| &p.circulation))
            .fold(0.0f64, |m, g| m.max(g.abs()));

        shed_and_gate(self, &system);
        merge_oldest(self);
        let ring_terminated = ring::terminate_ring(self, wing);

        let loads = compute_loads(&system, self, wing, cfg);
        Ok(StepOutput {
            loads,
            shedding,
            kelvin_residual: shedding.then_some(total_circulation),
            max_abs_circulation,
            ring_terminated,
        })
    }

    pub(crate) fn set_bound(&mut self, bound: Vec<VortexParticle>) {
        self.bound = bound;
    }

    pub(crate) fn history(&self) -> Option<&[f64]> {
        self.history.as_deref()
    }

    pub(crate) fn set_history(&mut self, h: Vec<f64>) {
        self.history = Some(h);
    }
}

/// Pure form of [`FluidState::advance`]: returns the loads and the successor state.
pub fn vpm_step(
    wing: &WingKinematics,
    fluid: &FluidState,
    cfg: &VpmConfig,
) -> Result<(StepOutput, FluidState), VpmError> {
    let mut next = fluid.clone();
    let out = next.advance(wing, cfg)?;
    Ok((out, next))
}
