//! Simulated ground pressure sensor and offline ring characterization.

use crate::vpm::{convect_and_dissipate, induced_velocity, FluidState, Kernel, RingDisturbance, Vec2, VpmConfig};

/// Dynamic pressure `½ρ|u|²` of the wake-induced velocity at `sensor` (Pa).
pub fn sensor_pressure(sensor: Vec2, fluid: &FluidState, rho: f64, core_radius: f64) -> f64 {
    let u = induced_velocity(fluid.wake(), sensor, Kernel::Regularized { core_radius });
    0.5 * rho * u.norm_squared()
}

/// Stateless threshold test.
pub fn pressure_trigger(sensor: Vec2, fluid: &FluidState, threshold: f64, cfg: &VpmConfig) -> bool {
    sensor_pressure(sensor, fluid, cfg.rho, cfg.core_radius) >= threshold
}

/// Latching pressure trigger.
#[derive(Clone, Debug, PartialEq)]
pub struct PressureTrigger {
    pub sensor: Vec2,
    /// Pa.
    pub threshold: f64,
    fired: bool,
}

impl PressureTrigger {
    pub fn new(sensor: Vec2, threshold: f64) -> Self {
        Self {
            sensor,
            threshold,
            fired: false,
        }
    }

    pub fn fired(&self) -> bool {
        self.fired
    }

    /// True only on the call where the threshold is first reached.
    pub fn update(&mut self, fluid: &FluidState, cfg: &VpmConfig) -> bool {
        if self.fired {
            return false;
        }
        self.fired = pressure_trigger(self.sensor, fluid, self.threshold, cfg);
        self.fired
    }
}

/// Where the ring is when it trips the sensor.
#[derive(Clone, Debug, PartialEq)]
pub struct TriggerCharacterization {
    /// Steps from release to trigger.
    pub steps: usize,
    /// Ring with its centre moved to the trigger position.
    pub ring: RingDisturbance,
}

/// Convects `ring` alone in otherwise still air until `trigger` fires, for at
/// most `max_steps`. The trigger is tested on release and after every step.
pub fn characterize_trigger(
    ring: &RingDisturbance,
    trigger: &PressureTrigger,
    cfg: &VpmConfig,
    max_steps: usize,
) -> Option<TriggerCharacterization> {
    let mut fluid = FluidState::new(cfg.particle_cap);
    ring.inject(&mut fluid).ok()?;
    let mut t = PressureTrigger::new(trigger.sensor, trigger.threshold);
    for steps in 0..=max_steps {
        if t.update(&fluid, cfg) {
            let [a, b] = fluid.ring_cores()?;
            return Some(TriggerCharacterization {
                steps,
                ring: RingDisturbance {
                    center: (a.position + b.position) * 0.5,
                    ..ring.clone()
                },
            });
        }
        convect_and_dissipate(&mut fluid, cfg);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_wake_never_triggers() {
        let cfg = VpmConfig::default();
        let mut t = PressureTrigger::new(Vec2::new(0.0, 0.0), 15.0);
        let f = FluidState::new(60);
        assert!(!t.update(&f, &cfg));
        assert!(!t.fired());
    }

    #[test]
    fn infinite_threshold_never_triggers() {
        let cfg = VpmConfig::default();
        let ring = RingDisturbance::default();
        let t = PressureTrigger::new(ring.center, f64::INFINITY);
        assert!(characterize_trigger(&ring, &t, &cfg, 100).is_none());
    }

    #[test]
    fn pressure_of_single_blob() {
        let cfg = VpmConfig::default();
        let f = FluidState::from_particles(vec![crate::vpm::VortexParticle::new(Vec2::zeros(), 2.0)], 60);
        let r: f64 = 0.5;
        let speed = 2.0 * r / (2.0 * std::f64::consts::PI * (r.powi(4) + cfg.core_radius.powi(4)).sqrt());
        let p = sensor_pressure(Vec2::new(r, 0.0), &f, cfg.rho, cfg.core_radius);
        assert!((p - 0.5 * cfg.rho * speed * speed).abs() < 1e-12);
    }

    #[test]
    fn latches_once() {
        let cfg = VpmConfig::default();
        let ring = RingDisturbance::default();
        let mut f = FluidState::new(60);
        ring.inject(&mut f).unwrap();
        let mut t = PressureTrigger::new(ring.center, 15.0);
        assert!(t.update(&f, &cfg));
        assert!(!t.update(&f, &cfg));
        assert!(t.fired());
    }

    #[test]
    fn approaching_ring_trips_sensor_ahead_of_it() {
        let cfg = VpmConfig::default();
        let ring = RingDisturbance::default();
        let sensor = ring.center + Vec2::new(-1.0, -0.3);
        let t = PressureTrigger::new(sensor, 15.0);
        let c = characterize_trigger(&ring, &t, &cfg, 200).unwrap();
        assert!(c.steps > 0);
        assert!(c.ring.center.x < ring.center.x);
        assert!(c.ring.center.x > sensor.x);
        assert!((c.ring.center.y - ring.center.y).abs() < 1e-3);
    }
}
