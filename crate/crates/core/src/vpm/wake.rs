//! Wake convection, shedding and particle merging.

use std::cell::RefCell;

use super::boundary::BoundSystem;
use super::kernel::blob_unit;
use super::{FluidState, Vec2, VortexParticle, VpmConfig};

thread_local! {
    static VELOCITY_SCRATCH: RefCell<Vec<Vec2>> = const { RefCell::new(Vec::new()) };
}

/// Forward-Euler convection of every wake particle under the other wake
/// particles and the bound elements of the previous solve, followed by
/// dissipation and ageing.
pub fn convect_and_dissipate(fluid: &mut FluidState, cfg: &VpmConfig) {
    let core4 = cfg.core_radius.powi(4);
    let dt = cfg.dt;
    let k = cfg.dissipation;
    let bound: &[VortexParticle] = &fluid.bound;
    let wake = &mut fluid.wake;
    let n = wake.len();
    if n == 0 {
        return;
    }
    VELOCITY_SCRATCH.with(|cell| {
        let mut vel = cell.borrow_mut();
        vel.clear();
        vel.resize(n, Vec2::zeros());
        for i in 0..n {
            let pi = wake[i].position;
            let gi = wake[i].circulation;
            let mut ui = vel[i];
            for j in (i + 1)..n {
                let kij = blob_unit(pi - wake[j].position, core4);
                ui += kij * wake[j].circulation;
                vel[j] -= kij * gi;
            }
            for b in bound {
                ui += blob_unit(pi - b.position, core4) * b.circulation;
            }
            vel[i] = ui;
        }
        for (p, u) in wake.iter_mut().zip(vel.iter()) {
            p.position += u * dt;
            p.circulation *= k;
            p.age += 1;
        }
    });
}

/// Releases the solved edge vortices into the wake when shedding, and records
/// the bound elements that will convect the wake on the next step.
pub fn shed_and_gate(fluid: &mut FluidState, system: &BoundSystem) {
    let g = &system.geometry;
    let n = g.bound.len();
    let mut bound: Vec<VortexParticle> = g
        .bound
        .iter()
        .zip(&system.strengths[..n])
        .map(|(&p, &s)| VortexParticle::new(p, s))
        .collect();
    if system.shedding {
        fluid.wake.push(VortexParticle::new(g.edge[0], system.strengths[n]));
        fluid.wake.push(VortexParticle::new(g.edge[1], system.strengths[n + 1]));
    } else {
        bound.push(VortexParticle::new(g.edge[0], system.strengths[n]));
    }
    fluid.set_bound(bound);
}

/// Merges the two oldest particles until the wake fits under the cap. Ring
/// cores are never merged. Ties in age go to the lower index.
pub fn merge_oldest(fluid: &mut FluidState) {
    while fluid.wake.len() > fluid.particle_cap {
        let Some((a, b)) = two_oldest(fluid) else {
            break;
        };
        let pb = fluid.wake[b];
        let pa = &mut fluid.wake[a];
        pa.position = (pa.position + pb.position) * 0.5;
        pa.circulation += pb.circulation;
        pa.age = pa.age.max(pb.age);
        fluid.remove_particle(b);
    }
}

fn two_oldest(fluid: &FluidState) -> Option<(usize, usize)> {
    let mut first: Option<usize> = None;
    let mut second: Option<usize> = None;
    let older = |i: usize, j: Option<usize>| match j {
        None => true,
        Some(j) => fluid.wake[i].age > fluid.wake[j].age,
    };
    for i in 0..fluid.wake.len() {
        if fluid.is_ring_core(i) {
            continue;
        }
        if older(i, first) {
            second = first;
            first = Some(i);
        } else if older(i, second) {
            second = Some(i);
        }
    }
    Some((first?, second?))
}
