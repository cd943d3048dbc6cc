//! Flat-plate glider: rigid-body dynamics with an analytic elevator and
//! vortex-model wing loads. Forces are per unit span.

use nalgebra::SVector;
use serde::{Deserialize, Serialize};

use crate::error::DynamicsError;
use crate::vpm::{FluidState, StepOutput, Vec2, VpmConfig, WingKinematics, WingLoads};

pub type StateVector = SVector<f64, 7>;

pub const STATE_DIM: usize = 7;

/// `[r_x, r_z, θ, φ, v_x, v_z, ω]`, with `r` the centre of mass.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct GliderState {
    pub r_x: f64,
    pub r_z: f64,
    pub theta: f64,
    pub phi: f64,
    pub v_x: f64,
    pub v_z: f64,
    pub omega: f64,
}

impl GliderState {
    pub const NAMES: [&'static str; STATE_DIM] = ["r_x", "r_z", "theta", "phi", "v_x", "v_z", "omega"];

    pub fn from_array(a: [f64; STATE_DIM]) -> Self {
        let [r_x, r_z, theta, phi, v_x, v_z, omega] = a;
        Self {
            r_x,
            r_z,
            theta,
            phi,
            v_x,
            v_z,
            omega,
        }
    }

    pub fn to_array(&self) -> [f64; STATE_DIM] {
        [self.r_x, self.r_z, self.theta, self.phi, self.v_x, self.v_z, self.omega]
    }

    pub fn to_vector(&self) -> StateVector {
        StateVector::from(self.to_array())
    }

    pub fn from_vector(v: &StateVector) -> Self {
        Self::from_array((*v).into())
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.r_x, self.r_z)
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::new(self.v_x, self.v_z)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GliderParams {
    /// Mass per unit span (kg/m).
    pub mass: f64,
    /// Pitch inertia per unit span (kg·m²/m).
    pub inertia: f64,
    pub gravity: f64,
    /// Centre of mass to elevator hinge (m).
    pub body_length: f64,
    /// Centre of mass to the wing reference point, measured aft (m).
    pub wing_offset: f64,
    /// Hinge to elevator centre of pressure (m).
    pub elevator_length: f64,
    pub chord: f64,
    /// Elevator area per unit span (m²/m).
    pub elevator_area: f64,
    pub rho: f64,
    /// Elevator deflection limit (rad).
    pub phi_limit: f64,
    /// Elevator rate limit (rad/s).
    pub u_limit: f64,
}

impl Default for GliderParams {
    fn default() -> Self {
        Self {
            mass: 0.3,
            inertia: 0.006,
            gravity: 9.81,
            body_length: 0.35,
            wing_offset: 0.02,
            elevator_length: 0.03,
            chord: 0.2,
            elevator_area: 0.05,
            rho: 1.225,
            phi_limit: 50f64.to_radians(),
            u_limit: 15.0,
        }
    }
}

impl GliderParams {
    pub fn validate(&self) -> Result<(), (String, String)> {
        let positive = [
            ("mass", self.mass),
            ("inertia", self.inertia),
            ("gravity", self.gravity),
            ("body_length", self.body_length),
            ("elevator_length", self.elevator_length),
            ("chord", self.chord),
            ("elevator_area", self.elevator_area),
            ("rho", self.rho),
            ("phi_limit", self.phi_limit),
            ("u_limit", self.u_limit),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err((name.to_string(), format!("must be positive and finite, got {v}")));
            }
        }
        if !self.wing_offset.is_finite() {
            return Err(("wing_offset".into(), "must be finite".into()));
        }
        Ok(())
    }
}

/// Positions and velocities of the wing reference point and elevator centre.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BodyKinematics {
    pub wing: Vec2,
    pub wing_velocity: Vec2,
    pub elevator: Vec2,
    pub elevator_velocity: Vec2,
}

pub fn elevator_kinematics(x: &GliderState, p: &GliderParams) -> BodyKinematics {
    let (s, c) = x.theta.sin_cos();
    let (se, ce) = (x.theta + x.phi).sin_cos();
    let r = x.position();
    let v = x.velocity();
    let (lw, l, le) = (p.wing_offset, p.body_length, p.elevator_length);
    let wing = r - Vec2::new(c, s) * lw;
    let wing_velocity = v + Vec2::new(s, -c) * (lw * x.omega);
    let elevator = r - Vec2::new(c, s) * l - Vec2::new(ce, se) * le;
    let elevator_velocity = v + Vec2::new(s, -c) * (l * x.omega) + Vec2::new(se, -ce) * (le * x.omega);
    BodyKinematics {
        wing,
        wing_velocity,
        elevator,
        elevator_velocity,
    }
}

/// Elevator velocity including the deflection rate `u`; [`elevator_kinematics`] assumes `φ̇ = 0`.
pub fn elevator_velocity_with_rate(x: &GliderState, u: f64, p: &GliderParams) -> Vec2 {
    let k = elevator_kinematics(x, p);
    let (se, ce) = (x.theta + x.phi).sin_cos();
    k.elevator_velocity + Vec2::new(se, -ce) * (p.elevator_length * u)
}

/// Flat-plate normal force `½ρ|ẋ_e|² S_e · 2 sin α_e` along the elevator normal, with the elevator held still.
pub fn elevator_force(x: &GliderState, p: &GliderParams) -> Vec2 {
    elevator_force_at(x, elevator_kinematics(x, p).elevator_velocity, p)
}

/// As [`elevator_force`], with the elevator moving at rate `u`.
pub fn elevator_force_with_rate(x: &GliderState, u: f64, p: &GliderParams) -> Vec2 {
    elevator_force_at(x, elevator_velocity_with_rate(x, u, p), p)
}

fn elevator_force_at(x: &GliderState, ve: Vec2, p: &GliderParams) -> Vec2 {
    let q = ve.norm_squared();
    if q == 0.0 {
        return Vec2::zeros();
    }
    let ang = x.theta + x.phi;
    let alpha = ang - ve.y.atan2(ve.x);
    let n = Vec2::new(-ang.sin(), ang.cos());
    n * (0.5 * p.rho * q * p.elevator_area * 2.0 * alpha.sin())
}

/// Wing pose handed to the vortex model. The reference point sits at the
/// quarter chord.
pub fn wing_kinematics(x: &GliderState, p: &GliderParams) -> WingKinematics {
    let f = Vec2::new(x.theta.cos(), x.theta.sin());
    let reference = x.position() - f * p.wing_offset;
    WingKinematics {
        leading_edge: reference + f * (0.25 * p.chord),
        theta: x.theta,
        chord: p.chord,
        pivot: x.position(),
        velocity: x.velocity(),
        omega: x.omega,
        reference,
    }
}

/// `(v̇_x, v̇_z, ω̇)`. The wing moment is taken about the wing reference point.
pub fn accelerations(x: &GliderState, wing: &WingLoads, f_e: Vec2, p: &GliderParams) -> (f64, f64, f64) {
    let k = elevator_kinematics(x, p);
    let r = x.position();
    let cross = |a: Vec2, b: Vec2| a.x * b.y - a.y * b.x;
    let ax = (wing.force.x + f_e.x) / p.mass;
    let az = (wing.force.y + f_e.y) / p.mass - p.gravity;
    let torque = wing.moment + cross(k.wing - r, wing.force) + cross(k.elevator - r, f_e);
    (ax, az, torque / p.inertia)
}

/// Advances the rigid body one step under the given accelerations. Positions
/// and pitch include the second-order term, velocities are explicit Euler.
pub fn integrate(x: &GliderState, u: f64, acc: (f64, f64, f64), p: &GliderParams, dt: f64) -> GliderState {
    let (ax, az, aw) = acc;
    let u = u.clamp(-p.u_limit, p.u_limit);
    let h = 0.5 * dt * dt;
    GliderState {
        r_x: x.r_x + x.v_x * dt + ax * h,
        r_z: x.r_z + x.v_z * dt + az * h,
        theta: x.theta + x.omega * dt + aw * h,
        phi: (x.phi + u * dt).clamp(-p.phi_limit, p.phi_limit),
        v_x: x.v_x + ax * dt,
        v_z: x.v_z + az * dt,
        omega: x.omega + aw * dt,
    }
}

/// Loads and diagnostics from one coupled step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GliderStep {
    pub state: GliderState,
    pub fluid: StepOutput,
    pub elevator_force: Vec2,
}

/// One coupled step: wing loads from the vortex model at the current pose,
/// elevator force, then integration. `fluid` is advanced in place.
pub fn step(
    x: &GliderState,
    u: f64,
    fluid: &mut FluidState,
    p: &GliderParams,
    cfg: &VpmConfig,
) -> Result<GliderStep, DynamicsError> {
    let wing = wing_kinematics(x, p);
    let out = fluid.advance(&wing, cfg)?;
    let u = u.clamp(-p.u_limit, p.u_limit);
    let f_e = elevator_force_with_rate(x, u, p);
    let acc = accelerations(x, &out.loads, f_e, p);
    let next = integrate(x, u, acc, p, cfg.dt);
    if !next.is_finite() || !out.loads.force.iter().all(|v| v.is_finite()) {
        return Err(DynamicsError::NonFinite);
    }
    Ok(GliderStep {
        state: next,
        fluid: out,
        elevator_force: f_e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params() -> GliderParams {
        GliderParams::default()
    }

    #[test]
    fn kinematics_at_rest() {
        let p = params();
        let k = elevator_kinematics(&GliderState::default(), &p);
        assert_abs_diff_eq!(k.wing, Vec2::new(-p.wing_offset, 0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(
            k.elevator,
            Vec2::new(-p.body_length - p.elevator_length, 0.0),
            epsilon = 1e-15
        );
        assert_eq!(k.wing_velocity, Vec2::zeros());
        assert_eq!(k.elevator_velocity, Vec2::zeros());
    }

    #[test]
    fn pure_pitch_wing_velocity() {
        let p = params();
        let x = GliderState {
            theta: 0.4,
            omega: 2.0,
            ..Default::default()
        };
        let k = elevator_kinematics(&x, &p);
        let lw = p.wing_offset;
        assert_abs_diff_eq!(
            k.wing_velocity,
            Vec2::new(lw * 2.0 * 0.4f64.sin(), -lw * 2.0 * 0.4f64.cos()),
            epsilon = 1e-15
        );
    }

    #[test]
    fn elevator_velocity_matches_finite_difference() {
        let p = params();
        let x = GliderState {
            r_x: 0.3,
            r_z: -0.1,
            theta: 0.5,
            phi: -0.2,
            v_x: 6.0,
            v_z: -1.0,
            omega: 3.0,
        };
        let u = 4.0;
        let h = 1e-7;
        let moved = GliderState {
            r_x: x.r_x + x.v_x * h,
            r_z: x.r_z + x.v_z * h,
            theta: x.theta + x.omega * h,
            phi: x.phi + u * h,
            ..x
        };
        let fd = (elevator_kinematics(&moved, &p).elevator - elevator_kinematics(&x, &p).elevator) / h;
        assert_abs_diff_eq!(fd, elevator_velocity_with_rate(&x, u, &p), epsilon = 1e-5);
    }

    #[test]
    fn elevator_force_cases() {
        let p = params();
        let level = GliderState {
            v_x: 5.0,
            ..Default::default()
        };
        assert_eq!(elevator_force(&level, &p), Vec2::zeros());

        let up = GliderState {
            theta: 0.3,
            phi: std::f64::consts::FRAC_PI_2 - 0.3,
            v_x: 5.0,
            ..Default::default()
        };
        let f = elevator_force(&up, &p);
        let q = 0.5 * p.rho * 25.0 * p.elevator_area * 2.0;
        assert_abs_diff_eq!(f, Vec2::new(-q, 0.0), epsilon = 1e-12);

        let fast = GliderState { v_x: 10.0, ..up };
        assert_abs_diff_eq!(elevator_force(&fast, &p), f * 4.0, epsilon = 1e-12);

        assert_eq!(elevator_force(&GliderState::default(), &p), Vec2::zeros());
    }

    #[test]
    fn acceleration_cases() {
        let p = params();
        let x = GliderState::default();
        let none = WingLoads::default();
        assert_eq!(accelerations(&x, &none, Vec2::zeros(), &p), (0.0, -p.gravity, 0.0));
        let lift = WingLoads {
            force: Vec2::new(0.0, p.mass * p.gravity),
            moment: 0.0,
        };
        let (ax, az, _) = accelerations(&x, &lift, Vec2::zeros(), &p);
        assert_eq!((ax, az), (0.0, 0.0));

        // perpendicular elevator force at arm L
        let fe = Vec2::new(0.0, 0.2);
        let arm = p.body_length + p.elevator_length;
        let (_, _, aw) = accelerations(&x, &none, fe, &p);
        assert_abs_diff_eq!(aw, -arm * 0.2 / p.inertia, epsilon = 1e-12);
    }

    #[test]
    fn accelerations_affine_in_forces() {
        let p = params();
        let x = GliderState {
            theta: 0.7,
            ..Default::default()
        };
        let w1 = WingLoads {
            force: Vec2::new(0.3, 1.1),
            moment: 0.02,
        };
        let w2 = WingLoads {
            force: Vec2::new(-0.5, 0.4),
            moment: -0.01,
        };
        let e1 = Vec2::new(0.1, 0.2);
        let e2 = Vec2::new(-0.3, 0.05);
        let f = |w: &WingLoads, e: Vec2| {
            let (a, b, c) = accelerations(&x, w, e, &p);
            nalgebra::Vector3::new(a, b, c)
        };
        let z = f(&WingLoads::default(), Vec2::zeros());
        let sum = WingLoads {
            force: w1.force + w2.force,
            moment: w1.moment + w2.moment,
        };
        let lhs = f(&sum, e1 + e2) - z;
        let rhs = (f(&w1, e1) - z) + (f(&w2, e2) - z);
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
    }

    #[test]
    fn ballistic_energy_drift_is_small() {
        let p = params();
        let dt = 0.01;
        let mut x = GliderState {
            v_x: 7.0,
            v_z: 1.0,
            omega: 2.0,
            ..Default::default()
        };
        let energy = |x: &GliderState| {
            0.5 * p.mass * (x.v_x * x.v_x + x.v_z * x.v_z)
                + 0.5 * p.inertia * x.omega * x.omega
                + p.mass * p.gravity * x.r_z
        };
        let e0 = energy(&x);
        for _ in 0..100 {
            let acc = accelerations(&x, &WingLoads::default(), Vec2::zeros(), &p);
            x = integrate(&x, 0.0, acc, &p, dt);
        }
        assert!(((energy(&x) - e0) / e0).abs() <= 0.01);
    }

    #[test]
    fn elevator_saturates() {
        let p = params();
        let mut x = GliderState::default();
        for _ in 0..200 {
            x = integrate(&x, 100.0, (0.0, 0.0, 0.0), &p, 0.01);
            assert!(x.phi.abs() <= p.phi_limit);
        }
        assert_eq!(x.phi, p.phi_limit);
    }

    #[test]
    fn still_air_trim_keeps_elevator() {
        let p = params();
        let cfg = VpmConfig::default();
        let mut fluid = FluidState::new(cfg.particle_cap);
        let x = GliderState {
            phi: 0.1,
            ..Default::default()
        };
        let s = step(&x, 0.0, &mut fluid, &p, &cfg).unwrap();
        assert_eq!(s.state.phi, 0.1);
    }

    #[test]
    fn vector_roundtrip() {
        let x = GliderState::from_array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        assert_eq!(GliderState::from_vector(&x.to_vector()), x);
        assert_eq!(x.to_vector()[3], 4.0);
    }
}
