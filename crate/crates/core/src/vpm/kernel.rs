//! Biot-Savart kernels for 2D point and blob vortices.
//!
//! Both kernels share the rotation `[Δz, −Δx]`: a vortex with positive
//! circulation induces clockwise flow in the x–z plane (z up).

use std::f64::consts::PI;

use super::{Vec2, VortexParticle};
use crate::error::VpmError;

/// Kernel used when summing the influence of a set of particles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kernel {
    /// Point vortex, singular at the source.
    Singular,
    /// High-order algebraic blob with the given core radius (m).
    Regularized { core_radius: f64 },
}

#[inline(always)]
fn rotate(d: Vec2) -> Vec2 {
    Vec2::new(d.y, -d.x)
}

/// Velocity induced at `target` by a point vortex of circulation `gamma`.
pub fn singular_kernel_velocity(vortex: Vec2, gamma: f64, target: Vec2) -> Result<Vec2, VpmError> {
    let d = target - vortex;
    let r2 = d.norm_squared();
    if r2 == 0.0 {
        return Err(VpmError::CoincidentPoints);
    }
    Ok(rotate(d) * (gamma / (2.0 * PI * r2)))
}

/// Velocity induced at `target` by a blob vortex:
/// `Γ [Δz, −Δx] / (2π sqrt(r⁴ + r_core⁴))`. Regular everywhere, zero at the
/// source and asymptotic to the point vortex for `r ≫ r_core`.
#[inline]
pub fn regularized_kernel_velocity(vortex: Vec2, gamma: f64, target: Vec2, core_radius: f64) -> Vec2 {
    let d = target - vortex;
    let r2 = d.norm_squared();
    let c2 = core_radius * core_radius;
    rotate(d) * (gamma / (2.0 * PI * (r2 * r2 + c2 * c2).sqrt()))
}

/// Unit-strength regularized kernel on a raw displacement, used in the hot loops.
#[inline(always)]
pub(crate) fn blob_unit(d: Vec2, core4: f64) -> Vec2 {
    let r2 = d.norm_squared();
    rotate(d) * (1.0 / (2.0 * PI * (r2 * r2 + core4).sqrt()))
}

/// Unit-strength singular kernel on a raw displacement. Zero displacement maps to zero.
#[inline(always)]
pub(crate) fn point_unit(d: Vec2) -> Vec2 {
    let r2 = d.norm_squared();
    if r2 == 0.0 {
        return Vec2::zeros();
    }
    rotate(d) * (1.0 / (2.0 * PI * r2))
}

/// Sum of the velocities induced at `target` by every source. A source sitting
/// exactly on the target contributes nothing.
pub fn induced_velocity(sources: &[VortexParticle], target: Vec2, kernel: Kernel) -> Vec2 {
    let mut u = Vec2::zeros();
    match kernel {
        Kernel::Singular => {
            for p in sources {
                u += point_unit(target - p.position) * p.circulation;
            }
        }
        Kernel::Regularized { core_radius } => {
            let core4 = core_radius.powi(4);
            for p in sources {
                if p.position == target {
                    continue;
                }
                u += blob_unit(target - p.position, core4) * p.circulation;
            }
        }
    }
    u
}
