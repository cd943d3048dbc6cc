//! Panel pressure loads from the unsteady Bernoulli relation.

use super::boundary::BoundSystem;
use super::kernel::blob_unit;
use super::{FluidState, Vec2, VpmConfig, WingKinematics};

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct WingLoads {
    /// Resultant aerodynamic force per unit span (N/m).
    pub force: Vec2,
    /// Pitching moment about the wing reference point, positive nose-up (N·m/m).
    pub moment: f64,
}

/// Integrates panel pressure jumps over the chord.
///
/// Each element `i` carries `Δp_i = ρ (β_i Γ_i / s − dΦ_i/dt)`, where `β_i` is
/// the tangential slip between the local wake-induced flow and the plate and
/// `Φ_i` is the potential jump accumulated from the leading edge. While
/// shedding, the circulation released at the leading edge this step adds
/// `Γ_LEV / Δt` to every panel's rate. The attached leading-edge element is
/// treated as an extra panel of length `s`.
///
/// Rates are backward differences against the jump stored in `fluid`, which
/// is then replaced by the current one. With no stored history the unsteady
/// terms are dropped; an empty history is read as all zeros.
pub fn compute_loads(
    system: &BoundSystem,
    fluid: &mut FluidState,
    wing: &WingKinematics,
    cfg: &VpmConfig,
) -> WingLoads {
    let g = &system.geometry;
    let n = g.bound.len();
    let s = g.panel_length;
    let f = g.tangent;
    let normal = g.normal;
    let core4 = cfg.core_radius.powi(4);

    // element 0 is the attached leading-edge vortex (zero while shedding)
    let mut elements = Vec::with_capacity(n + 1);
    let (lead, shed_rate) = if system.shedding {
        (0.0, system.leading_edge_strength() / cfg.dt)
    } else {
        (system.leading_edge_strength(), 0.0)
    };
    elements.push((g.edge[0], lead));
    elements.extend(g.bound.iter().copied().zip(system.bound_strengths().iter().copied()));

    let mut phi = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    for &(_, gamma) in &elements {
        acc += gamma;
        phi.push(acc);
    }

    let prev = fluid.history().map(|h| {
        let mut v = h.to_vec();
        v.resize(n + 1, 0.0);
        v
    });

    let mut loads = WingLoads::default();
    for (i, &(p, gamma)) in elements.iter().enumerate() {
        let mut u = Vec2::zeros();
        for w in fluid.wake() {
            u += blob_unit(p - w.position, core4) * w.circulation;
        }
        let beta = (u - wing.point_velocity(p)).dot(&f);
        let mut dp = beta * gamma / s;
        if let Some(prev) = &prev {
            dp -= (phi[i] - prev[i]) / cfg.dt + shed_rate;
        }
        let force = normal * (cfg.rho * dp * s);
        let arm = p - wing.reference;
        loads.force += force;
        loads.moment += arm.x * force.y - arm.y * force.x;
    }
    fluid.set_history(phi);
    loads
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vpm::{assemble_boundary_system, solve_strengths};
    use approx::assert_abs_diff_eq;

    fn solved(wing: &WingKinematics, fluid: &FluidState, shedding: bool, cfg: &VpmConfig) -> BoundSystem {
        let mut sys = assemble_boundary_system(wing, fluid, shedding, cfg);
        sys.strengths = solve_strengths(&sys).unwrap();
        sys
    }

    #[test]
    fn zero_circulation_zero_load() {
        let cfg = VpmConfig::default();
        let wing = WingKinematics::translating(Vec2::zeros(), 0.2, 0.2, Vec2::zeros());
        let mut fluid = FluidState::impulsive_start(60);
        let sys = solved(&wing, &fluid, false, &cfg);
        let l = compute_loads(&sys, &mut fluid, &wing, &cfg);
        assert_eq!(l.force, Vec2::zeros());
        assert_eq!(l.moment, 0.0);
    }

    #[test]
    fn attached_quasi_steady_lift_near_thin_airfoil() {
        let cfg = VpmConfig::default();
        let u = 7.0;
        let alpha = 5f64.to_radians();
        let chord = 0.2;
        let wing = WingKinematics::translating(Vec2::zeros(), alpha, chord, Vec2::new(u, 0.0));
        let mut fluid = FluidState::new(60);
        let sys = solved(&wing, &fluid, false, &cfg);
        let total: f64 = sys.strengths.iter().sum::<f64>().abs();
        let oracle = std::f64::consts::PI * chord * u * alpha.sin();
        assert!((total / oracle - 1.0).abs() < 0.15, "Γ ratio {}", total / oracle);
        let l = compute_loads(&sys, &mut fluid, &wing, &cfg);
        let cn = l.force.dot(&wing.normal()) / (0.5 * cfg.rho * u * u * chord);
        let ratio = cn / (2.0 * std::f64::consts::PI * alpha.sin());
        assert!((ratio - 1.0).abs() < 0.15, "C_N ratio {ratio}");
        assert!(l.force.y > 0.0);
    }

    #[test]
    fn history_is_replaced() {
        let cfg = VpmConfig::default();
        let wing = WingKinematics::translating(Vec2::zeros(), 0.1, 0.2, Vec2::new(5.0, 0.0));
        let mut fluid = FluidState::new(60);
        let sys = solved(&wing, &fluid, false, &cfg);
        let quasi = compute_loads(&sys, &mut fluid, &wing, &cfg);
        assert_eq!(fluid.history().unwrap().len(), cfg.n_bound + 1);
        // a repeated identical solve has zero rate, so the same load
        let again = compute_loads(&sys, &mut fluid, &wing, &cfg);
        assert_abs_diff_eq!(quasi.force, again.force, epsilon = 1e-12);
        // an impulsive start sees the full jump as a rate
        let mut cold = FluidState::impulsive_start(60);
        let start = compute_loads(&sys, &mut cold, &wing, &cfg);
        assert!(start.force.norm() > quasi.force.norm());
    }
}
