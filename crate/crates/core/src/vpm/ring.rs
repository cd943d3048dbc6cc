//! Planar vortex-ring gust: a self-advecting counter-rotating pair.

use serde::{Deserialize, Serialize};

use super::{FluidState, Vec2, VortexParticle, WingKinematics};
use crate::error::VpmError;

/// Chord offset, as a fraction of chord length, used for the termination test.
const TERMINATION_OFFSET: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RingDisturbance {
    /// Midpoint between the two cores (m).
    pub center: Vec2,
    /// Self-advection speed (m/s).
    pub speed: f64,
    /// Core separation (m).
    pub separation: f64,
    /// Blob radius of the kernel the pair is convected with (m).
    pub core_radius: f64,
    /// Direction of travel; normalized on use.
    pub heading: Vec2,
}

impl Default for RingDisturbance {
    fn default() -> Self {
        Self {
            center: Vec2::new(3.6, -0.1),
            speed: 7.5,
            separation: 0.28,
            core_radius: 0.02,
            heading: Vec2::new(-1.0, 0.0),
        }
    }
}

impl RingDisturbance {
    /// Circulation magnitude at which each core, seen through the blob kernel,
    /// drives the other at `speed`.
    pub fn circulation(&self) -> f64 {
        let d = self.separation;
        self.speed * 2.0 * std::f64::consts::PI * (d.powi(4) + self.core_radius.powi(4)).sqrt() / d
    }

    pub fn validate(&self) -> Result<(), VpmError> {
        let ok = self.speed > 0.0
            && self.separation > 0.0
            && self.core_radius > 0.0
            && self.heading.norm() > 0.0
            && self.center.iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(VpmError::InvalidConfig(
                "ring speed, separation, core radius and heading must be positive and finite".into(),
            ))
        }
    }

    /// The two cores: the one on the left of the heading carries `−Γ`.
    pub fn cores(&self) -> [VortexParticle; 2] {
        let h = self.heading.normalize();
        let side = Vec2::new(-h.y, h.x) * (0.5 * self.separation);
        let g = self.circulation();
        [
            VortexParticle::new(self.center + side, -g),
            VortexParticle::new(self.center - side, g),
        ]
    }

    /// Appends the pair to the wake and marks it as the active disturbance.
    pub fn inject(&self, fluid: &mut FluidState) -> Result<(), VpmError> {
        if fluid.disturbance().is_some() {
            return Err(VpmError::RingAlreadyActive);
        }
        let i = fluid.wake().len();
        fluid.wake_mut().extend(self.cores());
        fluid.set_disturbance(Some([i, i + 1]));
        Ok(())
    }
}

/// Proper intersection test for segments `p1–p2` and `q1–q2`. Parallel
/// segments never intersect.
pub fn segments_intersect(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> bool {
    let cross = |a: Vec2, b: Vec2| a.x * b.y - a.y * b.x;
    let r = p2 - p1;
    let s = q2 - q1;
    let denom = cross(r, s);
    if denom == 0.0 {
        return false;
    }
    let qp = q1 - p1;
    let t = cross(qp, s) / denom;
    let u = cross(qp, r) / denom;
    (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)
}

/// Removes the ring when the segment between its cores crosses the chord,
/// shifted slightly to the pressure side. Returns whether it was removed.
pub fn terminate_ring(fluid: &mut FluidState, wing: &WingKinematics) -> bool {
    let Some([a, b]) = fluid.disturbance() else {
        return false;
    };
    let shift = wing.normal() * (-TERMINATION_OFFSET * wing.chord);
    let le = wing.leading_edge + shift;
    let te = le - wing.tangent() * wing.chord;
    let pa = fluid.wake()[a].position;
    let pb = fluid.wake()[b].position;
    if !segments_intersect(pa, pb, le, te) {
        return false;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    fluid.set_disturbance(None);
    fluid.remove_particle(hi);
    fluid.remove_particle(lo);
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vpm::{convect_and_dissipate, VpmConfig};
    use approx::assert_abs_diff_eq;

    #[test]
    fn circulation_inverts_blob_pair_speed() {
        let ring = RingDisturbance::default();
        let [a, b] = ring.cores();
        let u = crate::vpm::regularized_kernel_velocity(a.position, a.circulation, b.position, ring.core_radius);
        assert_abs_diff_eq!(u.norm(), ring.speed, epsilon = 1e-12);
        // singular-kernel inversion, for reference
        let singular = ring.speed * 2.0 * std::f64::consts::PI * ring.separation;
        assert_abs_diff_eq!(singular, 13.194689, epsilon = 1e-6);
        assert!(ring.circulation() > singular);
        assert_eq!(a.circulation + b.circulation, 0.0);
    }

    #[test]
    fn pair_moves_along_heading() {
        let cfg = VpmConfig {
            dissipation: 1.0,
            ..VpmConfig::default()
        };
        for heading in [Vec2::new(-1.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)] {
            let ring = RingDisturbance {
                center: Vec2::zeros(),
                heading,
                ..RingDisturbance::default()
            };
            let mut f = FluidState::new(60);
            ring.inject(&mut f).unwrap();
            for _ in 0..50 {
                convect_and_dissipate(&mut f, &cfg);
            }
            let [a, b] = f.ring_cores().unwrap();
            let mid = (a.position + b.position) * 0.5;
            let v = mid / (50.0 * cfg.dt);
            assert_abs_diff_eq!(v, heading * ring.speed, epsilon = 1e-9);
        }
    }

    #[test]
    fn double_injection_rejected() {
        let ring = RingDisturbance::default();
        let mut f = FluidState::new(60);
        ring.inject(&mut f).unwrap();
        assert_eq!(ring.inject(&mut f), Err(VpmError::RingAlreadyActive));
        assert_eq!(f.wake().len(), 2);
        assert_eq!(f.wake_circulation(), 0.0);
    }

    #[test]
    fn segment_cases() {
        let o = Vec2::zeros();
        let x = Vec2::new(1.0, 0.0);
        assert!(segments_intersect(Vec2::new(0.5, -1.0), Vec2::new(0.5, 1.0), o, x));
        assert!(!segments_intersect(Vec2::new(1.5, -1.0), Vec2::new(1.5, 1.0), o, x));
        assert!(!segments_intersect(Vec2::new(0.0, 1.0), Vec2::new(1.0, 1.0), o, x));
        assert!(!segments_intersect(o, x, o, x));
    }

    #[test]
    fn termination_far_and_crossing() {
        let wing = WingKinematics::translating(Vec2::new(0.1, 0.0), 0.0, 0.2, Vec2::new(5.0, 0.0));
        let mut f = FluidState::new(60);
        f.wake_mut().push(VortexParticle::new(Vec2::new(-3.0, 0.0), 0.1));
        RingDisturbance {
            center: Vec2::new(3.0, 0.0),
            ..RingDisturbance::default()
        }
        .inject(&mut f)
        .unwrap();
        assert!(!terminate_ring(&mut f, &wing));
        assert_eq!(f.wake().len(), 3);

        let mut f = FluidState::new(60);
        f.wake_mut().push(VortexParticle::new(Vec2::new(-3.0, 0.0), 0.1));
        RingDisturbance {
            center: Vec2::new(0.0, 0.0),
            ..RingDisturbance::default()
        }
        .inject(&mut f)
        .unwrap();
        let before = f.wake_circulation();
        assert!(terminate_ring(&mut f, &wing));
        assert_eq!(f.wake().len(), 1);
        assert!(f.disturbance().is_none());
        assert_abs_diff_eq!(f.wake_circulation(), before, epsilon = 1e-12);
        assert_eq!(f.wake()[0].circulation, 0.1);
    }

    #[test]
    fn termination_uses_offset_chord() {
        // cores just below the chord: only the shifted chord is crossed
        let wing = WingKinematics::translating(Vec2::new(0.1, 0.0), 0.0, 0.2, Vec2::zeros());
        let mut f = FluidState::new(60);
        f.wake_mut().extend([
            VortexParticle::new(Vec2::new(0.0, -0.001), 1.0),
            VortexParticle::new(Vec2::new(0.0, -0.01), -1.0),
        ]);
        f.set_disturbance(Some([0, 1]));
        assert!(terminate_ring(&mut f, &wing));
    }
}
