//! Collocation geometry and the no-through-flow / Kelvin linear system.

use super::kernel::{blob_unit, point_unit};
use super::{FluidState, Vec2, VpmConfig, WingKinematics};
use crate::error::VpmError;

/// Collocation points and vortex placement on the chord.
#[derive(Clone, Debug, PartialEq)]
pub struct WingGeometry {
    /// `n_bound + 1` points from the leading edge back along `−tangent`.
    pub collocation: Vec<Vec2>,
    /// `n_bound` bound vortices, one per panel midpoint.
    pub bound: Vec<Vec2>,
    /// Leading- and trailing-edge vortex positions, offset outward from the chord ends.
    pub edge: [Vec2; 2],
    pub tangent: Vec2,
    pub normal: Vec2,
    pub panel_length: f64,
}

pub fn build_collocation(wing: &WingKinematics, cfg: &VpmConfig) -> WingGeometry {
    let n = cfg.n_bound;
    let f = wing.tangent();
    let s = cfg.panel_length(wing.chord);
    let alpha = cfg.shed_offset_for(wing.chord);
    let collocation: Vec<Vec2> = (0..=n).map(|i| wing.leading_edge - f * (s * i as f64)).collect();
    let bound = collocation[..n].iter().map(|c| c - f * (0.5 * s)).collect();
    let edge = [collocation[0] + f * alpha, collocation[n] - f * alpha];
    WingGeometry {
        collocation,
        bound,
        edge,
        tangent: f,
        normal: wing.normal(),
        panel_length: s,
    }
}

/// Square influence system for the wing's vortex strengths.
///
/// Column order is the `n_bound` bound vortices followed by the leading-edge
/// element and, when shedding, the trailing-edge vortex. With shedding off the
/// leading-edge element is a bound vortex held at the leading-edge offset and
/// no Kelvin row is present; the trailing edge then carries the last
/// collocation point, which fixes the circulation the way a Kutta condition would.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundSystem {
    pub geometry: WingGeometry,
    pub shedding: bool,
    pub dim: usize,
    /// Row-major `dim × dim`.
    pub matrix: Vec<f64>,
    pub rhs: Vec<f64>,
    /// Solved strengths in column order; empty until solved.
    pub strengths: Vec<f64>,
}

impl BoundSystem {
    pub fn vortex_positions(&self) -> Vec<Vec2> {
        let g = &self.geometry;
        let mut v = g.bound.clone();
        v.push(g.edge[0]);
        if self.shedding {
            v.push(g.edge[1]);
        }
        v
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.matrix[row * self.dim + col]
    }

    pub fn bound_strengths(&self) -> &[f64] {
        &self.strengths[..self.geometry.bound.len()]
    }

    /// Strength of the leading-edge element (shed LEV or the attached anchor vortex).
    pub fn leading_edge_strength(&self) -> f64 {
        self.strengths[self.geometry.bound.len()]
    }
}

pub fn assemble_boundary_system(
    wing: &WingKinematics,
    fluid: &FluidState,
    shedding: bool,
    cfg: &VpmConfig,
) -> BoundSystem {
    let geometry = build_collocation(wing, cfg);
    let n = cfg.n_bound;
    let dim = if shedding { n + 2 } else { n + 1 };
    let normal = geometry.normal;

    let mut columns: Vec<Vec2> = geometry.bound.clone();
    columns.push(geometry.edge[0]);
    if shedding {
        columns.push(geometry.edge[1]);
    }

    let core4 = cfg.core_radius.powi(4);
    let mut matrix = vec![0.0; dim * dim];
    let mut rhs = vec![0.0; dim];
    for (i, &c) in geometry.collocation.iter().enumerate() {
        for (j, &p) in columns.iter().enumerate() {
            matrix[i * dim + j] = point_unit(c - p).dot(&normal);
        }
        let mut u_wake = Vec2::zeros();
        for w in fluid.wake() {
            u_wake += blob_unit(c - w.position, core4) * w.circulation;
        }
        rhs[i] = (wing.point_velocity(c) - u_wake).dot(&normal);
    }
    if shedding {
        let last = n + 1;
        for j in 0..dim {
            matrix[last * dim + j] = 1.0;
        }
        rhs[last] = -fluid.wake_circulation();
    }

    BoundSystem {
        geometry,
        shedding,
        dim,
        matrix,
        rhs,
        strengths: Vec::new(),
    }
}

/// Dense LU solve with partial pivoting.
pub fn solve_strengths(system: &BoundSystem) -> Result<Vec<f64>, VpmError> {
    let mut a = system.matrix.clone();
    let mut b = system.rhs.clone();
    lu_solve(&mut a, &mut b, system.dim)?;
    Ok(b)
}

/// Solves `a x = b` in place (`b` becomes `x`). `a` is row-major `n × n` and is destroyed.
pub fn lu_solve(a: &mut [f64], b: &mut [f64], n: usize) -> Result<(), VpmError> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(VpmError::NonFinite);
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = scale * n as f64 * f64::EPSILON * 16.0;
    for k in 0..n {
        let (piv, pmax) =
            (k..n)
                .map(|r| (r, a[r * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pmax > tol) {
            return Err(VpmError::SingularSystem { column: k, pivot: pmax });
        }
        if piv != k {
            for c in 0..n {
                a.swap(k * n + c, piv * n + c);
            }
            b.swap(k, piv);
        }
        let d = a[k * n + k];
        for r in (k + 1)..n {
            let m = a[r * n + k] / d;
            if m == 0.0 {
                continue;
            }
            a[r * n + k] = m;
            for c in (k + 1)..n {
                a[r * n + c] -= m * a[k * n + c];
            }
            b[r] -= m * b[k];
        }
    }
    for k in (0..n).rev() {
        let mut s = b[k];
        for c in (k + 1)..n {
            s -= a[k * n + c] * b[c];
        }
        b[k] = s / a[k * n + k];
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vpm::VortexParticle;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg4() -> VpmConfig {
        VpmConfig {
            n_bound: 4,
            ..VpmConfig::default()
        }
    }

    #[test]
    fn collocation_level_chord() {
        let wing = WingKinematics::translating(Vec2::zeros(), 0.0, 0.2, Vec2::zeros());
        let g = build_collocation(&wing, &cfg4());
        let xs: Vec<f64> = g.collocation.iter().map(|c| c.x).collect();
        for (x, e) in xs.iter().zip([0.0, -0.05, -0.1, -0.15, -0.2]) {
            assert_abs_diff_eq!(*x, e, epsilon = 1e-15);
        }
        assert!(g.collocation.iter().all(|c| c.y == 0.0));
        assert_abs_diff_eq!(g.panel_length, 0.05, epsilon = 1e-15);
    }

    #[test]
    fn collocation_vertical_chord() {
        let le = Vec2::new(0.7, -0.3);
        let wing = WingKinematics::translating(le, std::f64::consts::FRAC_PI_2, 0.2, Vec2::zeros());
        let g = build_collocation(&wing, &cfg4());
        for c in &g.collocation {
            assert_abs_diff_eq!(c.x, le.x, epsilon = 1e-15);
        }
    }

    #[test]
    fn tangent_and_normal_are_orthonormal() {
        for th in [-2.0, -0.3, 0.0, 0.9, 3.0] {
            let wing = WingKinematics::translating(Vec2::zeros(), th, 0.2, Vec2::zeros());
            let g = build_collocation(&wing, &cfg4());
            assert_abs_diff_eq!(g.tangent.dot(&g.normal), 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(g.tangent.norm(), 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(g.normal.norm(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn bound_vortices_between_collocation_points() {
        let cfg = VpmConfig::default();
        for th in [-1.3, 0.0, 0.4, 2.2] {
            let wing = WingKinematics::translating(Vec2::new(1.0, 2.0), th, 0.2, Vec2::zeros());
            let g = build_collocation(&wing, &cfg);
            for (j, b) in g.bound.iter().enumerate() {
                let (c0, c1) = (g.collocation[j], g.collocation[j + 1]);
                let seg = c1 - c0;
                let t = (b - c0).dot(&seg) / seg.norm_squared();
                let off = (b - c0 - seg * t).norm();
                assert!(t > 0.0 && t < 1.0, "t = {t}");
                assert!(off < 1e-12);
            }
        }
    }

    #[test]
    fn edge_vortex_offsets() {
        let cfg = cfg4();
        let wing = WingKinematics::translating(Vec2::zeros(), 0.3, 0.2, Vec2::zeros());
        let g = build_collocation(&wing, &cfg);
        let a = cfg.shed_offset_for(0.2);
        assert_abs_diff_eq!(g.edge[0], g.collocation[0] + g.tangent * a, epsilon = 1e-15);
        assert_abs_diff_eq!(g.edge[1], g.collocation[4] - g.tangent * a, epsilon = 1e-15);
    }

    #[test]
    fn rest_state_gives_zero_strengths() {
        let cfg = VpmConfig::default();
        let wing = WingKinematics::translating(Vec2::zeros(), 0.1, 0.2, Vec2::zeros());
        let fluid = FluidState::new(cfg.particle_cap);
        let sys = assemble_boundary_system(&wing, &fluid, false, &cfg);
        assert_eq!(sys.dim, cfg.n_bound + 1);
        assert!(sys.rhs.iter().all(|&b| b == 0.0));
        let g = solve_strengths(&sys).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn kelvin_row_and_rhs() {
        let cfg = VpmConfig::default();
        let wing = WingKinematics::translating(Vec2::zeros(), 0.5, 0.2, Vec2::new(6.0, -1.0));
        let wake = vec![
            VortexParticle::new(Vec2::new(-0.5, 0.1), 0.3),
            VortexParticle::new(Vec2::new(-0.8, -0.2), -0.1),
        ];
        let fluid = FluidState::from_particles(wake, cfg.particle_cap);
        let sys = assemble_boundary_system(&wing, &fluid, true, &cfg);
        assert_eq!(sys.dim, cfg.n_bound + 2);
        let last = sys.dim - 1;
        assert!((0..sys.dim).all(|j| sys.entry(last, j) == 1.0));
        assert_abs_diff_eq!(sys.rhs[last], -0.2, epsilon = 1e-15);
        let g = solve_strengths(&sys).unwrap();
        let total: f64 = g.iter().sum::<f64>() + fluid.wake_circulation();
        assert!(total.abs() < 1e-10);
    }

    /// Rotation about the pivot: the collocation rhs must match the normal
    /// velocity of the material points, obtained independently by moving the
    /// wing through a small rotation and differencing collocation positions.
    #[test]
    fn pure_rotation_rhs_matches_material_velocity() {
        let cfg = VpmConfig::default();
        let pivot = Vec2::new(0.1, 0.05);
        let theta = 0.3;
        let omega = 2.5;
        let le_of = |th: f64| pivot + Vec2::new(th.cos(), th.sin()) * (-0.07);
        let wing = WingKinematics {
            leading_edge: le_of(theta),
            theta,
            chord: 0.2,
            pivot,
            velocity: Vec2::zeros(),
            omega,
            reference: pivot,
        };
        let fluid = FluidState::new(cfg.particle_cap);
        let sys = assemble_boundary_system(&wing, &fluid, false, &cfg);
        let h = 1e-7;
        let moved = WingKinematics {
            leading_edge: le_of(theta + omega * h),
            theta: theta + omega * h,
            ..wing
        };
        let g0 = build_collocation(&wing, &cfg);
        let g1 = build_collocation(&moved, &cfg);
        for i in 0..g0.collocation.len() {
            let v = (g1.collocation[i] - g0.collocation[i]) / h;
            assert_abs_diff_eq!(sys.rhs[i], v.dot(&g0.normal), epsilon = 1e-6);
        }
        // after solving, bound-induced normal velocity cancels the wall motion
        let strengths = solve_strengths(&sys).unwrap();
        let cols = BoundSystem {
            strengths: strengths.clone(),
            ..sys.clone()
        }
        .vortex_positions();
        for &c in &g0.collocation {
            let u: Vec2 = cols.iter().zip(&strengths).map(|(p, g)| point_unit(c - p) * *g).sum();
            assert_abs_diff_eq!((u - wing.point_velocity(c)).dot(&g0.normal), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn lu_identity_and_random() {
        let n = 10;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 1.0;
        }
        let mut b = vec![0.0; n];
        b[0] = 1.0;
        lu_solve(&mut a, &mut b, n).unwrap();
        assert_eq!(b[0], 1.0);
        assert!(b[1..].iter().all(|&x| x == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let mut a: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
            for i in 0..n {
                a[i * n + i] += 4.0;
            }
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut x = b.clone();
            lu_solve(&mut a.clone(), &mut x, n).unwrap();
            let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            let res = (0..n)
                .map(|i| {
                    let r: f64 = (0..n).map(|j| a[i * n + j] * x[j]).sum::<f64>() - b[i];
                    r * r
                })
                .sum::<f64>()
                .sqrt();
            assert!(res <= 1e-10 * bnorm, "residual {res}");
        }
    }

    #[test]
    fn lu_rejects_rank_deficient() {
        let n = 3;
        let mut a = vec![1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 1.0, 1.0];
        let mut b = vec![1.0, 2.0, 3.0];
        assert!(matches!(
            lu_solve(&mut a, &mut b, n),
            Err(VpmError::SingularSystem { .. })
        ));
        let mut a = vec![f64::NAN; 4];
        let mut b = vec![0.0; 2];
        assert_eq!(lu_solve(&mut a, &mut b, 2), Err(VpmError::NonFinite));
    }
}
