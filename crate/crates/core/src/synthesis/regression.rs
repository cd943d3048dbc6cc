//! Least-squares fit of the dynamic Jacobian block from sampled deviations.

use nalgebra::{DMatrix, SMatrix, SVector};

use crate::error::SynthesisError;
use crate::glider::STATE_DIM;

/// Regressor columns: θ, φ, v_x, v_z, ω and the input.
pub const REGRESSORS: usize = 6;
/// Regressed rows: v̇_x, v̇_z, ω̇.
pub const DYNAMIC_ROWS: usize = 3;
/// First state index used as a regressor.
pub const FIRST_REGRESSOR_STATE: usize = 2;
/// First state index whose derivative is regressed.
pub const FIRST_DYNAMIC_STATE: usize = 4;

/// Continuous-time Jacobian blocks of `(v̇_x, v̇_z, ω̇)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DynamicJacobian {
    /// With respect to `(θ, φ, v_x, v_z, ω)`.
    pub dx: SMatrix<f64, DYNAMIC_ROWS, 5>,
    pub du: SVector<f64, DYNAMIC_ROWS>,
}

impl DynamicJacobian {
    pub fn zeros() -> Self {
        Self {
            dx: SMatrix::zeros(),
            du: SVector::zeros(),
        }
    }
}

/// One regression sample: the state and input deviation from nominal and
/// the matching deviation of `(v̇_x, v̇_z, ω̇)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub dx: SVector<f64, STATE_DIM>,
    pub du: f64,
    pub d_rate: SVector<f64, DYNAMIC_ROWS>,
}

impl Sample {
    fn regressors(&self) -> [f64; REGRESSORS] {
        let mut z = [0.0; REGRESSORS];
        z[..5].copy_from_slice(&self.dx.as_slice()[FIRST_REGRESSOR_STATE..]);
        z[5] = self.du;
        z
    }
}

/// Column tolerance for the rank check, relative to each column's norm.
const RANK_TOL: f64 = 1e-9;

/// Solves `min ‖D − Z Jᵀ‖` for the 3×6 block. Position deviations never
/// enter the fit.
pub fn estimate_jacobians(samples: &[Sample]) -> Result<DynamicJacobian, SynthesisError> {
    let k = samples.len();
    if k < REGRESSORS {
        return Err(SynthesisError::TooFewSamples {
            survivors: k,
            needed: REGRESSORS,
        });
    }
    let z = DMatrix::from_fn(k, REGRESSORS, |i, j| samples[i].regressors()[j]);
    let d = DMatrix::from_fn(k, DYNAMIC_ROWS, |i, j| samples[i].d_rate[j]);
    if d.iter().all(|v| *v == 0.0) {
        return Ok(DynamicJacobian::zeros());
    }

    let scale: Vec<f64> = (0..REGRESSORS).map(|j| z.column(j).norm()).collect();
    let deficient = deficient_columns(&z, &scale);
    if !deficient.is_empty() {
        return Err(SynthesisError::RankDeficient { columns: deficient });
    }
    solve_active(&z, &d, &scale, &(0..REGRESSORS).collect::<Vec<_>>())
}

/// As [`estimate_jacobians`] with the listed regressor columns removed from
/// the fit; their Jacobian entries are zero.
pub fn estimate_jacobians_without(samples: &[Sample], drop: &[usize]) -> Result<DynamicJacobian, SynthesisError> {
    let k = samples.len();
    if k < REGRESSORS {
        return Err(SynthesisError::TooFewSamples {
            survivors: k,
            needed: REGRESSORS,
        });
    }
    let active: Vec<usize> = (0..REGRESSORS).filter(|j| !drop.contains(j)).collect();
    let z = DMatrix::from_fn(k, REGRESSORS, |i, j| samples[i].regressors()[j]);
    let d = DMatrix::from_fn(k, DYNAMIC_ROWS, |i, j| samples[i].d_rate[j]);
    if active.is_empty() || d.iter().all(|v| *v == 0.0) {
        return Ok(DynamicJacobian::zeros());
    }
    let za = z.select_columns(&active);
    let scale: Vec<f64> = (0..active.len()).map(|j| za.column(j).norm()).collect();
    let deficient = deficient_columns(&za, &scale);
    if !deficient.is_empty() {
        return Err(SynthesisError::RankDeficient {
            columns: deficient.iter().map(|&j| active[j]).collect(),
        });
    }
    solve_active(&za, &d, &scale, &active)
}

/// Column-scaled SVD solve; `za` holds the `active` regressor columns in order.
fn solve_active(
    za: &DMatrix<f64>,
    d: &DMatrix<f64>,
    scale: &[f64],
    active: &[usize],
) -> Result<DynamicJacobian, SynthesisError> {
    let mut zs = za.clone();
    for (j, s) in scale.iter().enumerate() {
        zs.column_mut(j).scale_mut(1.0 / s);
    }
    let svd = zs.svd(true, true);
    let sol = svd
        .solve(d, 0.0)
        .map_err(|_| SynthesisError::RankDeficient { columns: Vec::new() })?;
    let mut out = DynamicJacobian::zeros();
    for r in 0..DYNAMIC_ROWS {
        for (a, &j) in active.iter().enumerate() {
            let v = sol[(a, r)] / scale[a];
            if j < 5 {
                out.dx[(r, j)] = v;
            } else {
                out.du[r] = v;
            }
        }
    }
    Ok(out)
}

/// Modified Gram–Schmidt over the columns in order; a column is deficient
/// when little of it survives projection onto the earlier independent ones.
fn deficient_columns(z: &DMatrix<f64>, scale: &[f64]) -> Vec<usize> {
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::new();
    let mut out = Vec::new();
    for (j, &s) in scale.iter().enumerate() {
        if s == 0.0 || !s.is_finite() {
            out.push(j);
            continue;
        }
        let mut v = z.column(j) / s;
        for b in &basis {
            let c = b.dot(&v);
            v.axpy(-c, b, 1.0);
        }
        let n = v.norm();
        if n < RANK_TOL.sqrt() {
            out.push(j);
        } else {
            basis.push(v / n);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn synthetic(k: usize, seed: u64) -> (DynamicJacobian, Vec<Sample>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut truth = DynamicJacobian::zeros();
        for v in truth.dx.iter_mut().chain(truth.du.iter_mut()) {
            *v = rng.random_range(-5.0..5.0);
        }
        let samples = (0..k)
            .map(|_| {
                let dx = SVector::<f64, STATE_DIM>::from_fn(|_, _| rng.random_range(-0.1..0.1));
                let du = rng.random_range(-0.5..0.5);
                let zx = dx.fixed_rows::<5>(FIRST_REGRESSOR_STATE).into_owned();
                let d_rate = truth.dx * zx + truth.du * du;
                Sample { dx, du, d_rate }
            })
            .collect();
        (truth, samples)
    }

    #[test]
    fn recovers_linear_map() {
        let (truth, samples) = synthetic(64, 11);
        let est = estimate_jacobians(&samples).unwrap();
        let err = (est.dx - truth.dx).norm() + (est.du - truth.du).norm();
        let size = truth.dx.norm() + truth.du.norm();
        assert!(err / size < 1e-8, "relative error {}", err / size);
    }

    #[test]
    fn zero_residuals_give_zero() {
        let (_, mut samples) = synthetic(10, 2);
        for s in &mut samples {
            s.d_rate = SVector::zeros();
        }
        assert_eq!(estimate_jacobians(&samples).unwrap(), DynamicJacobian::zeros());
    }

    #[test]
    fn duplicates_are_rank_deficient() {
        let (_, samples) = synthetic(1, 5);
        let dup = vec![samples[0]; 12];
        match estimate_jacobians(&dup) {
            Err(SynthesisError::RankDeficient { columns }) => assert_eq!(columns, vec![1, 2, 3, 4, 5]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn constant_column_is_named() {
        let (_, mut samples) = synthetic(20, 8);
        for s in &mut samples {
            s.dx[3] = 0.0;
        }
        match estimate_jacobians(&samples) {
            Err(SynthesisError::RankDeficient { columns }) => assert_eq!(columns, vec![1]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dropped_column_fit() {
        let (mut truth, mut samples) = synthetic(40, 6);
        truth.dx.column_mut(1).fill(0.0);
        for s in &mut samples {
            s.dx[3] = 0.0;
            let zx = s.dx.fixed_rows::<5>(FIRST_REGRESSOR_STATE).into_owned();
            s.d_rate = truth.dx * zx + truth.du * s.du;
        }
        let est = estimate_jacobians_without(&samples, &[1]).unwrap();
        assert!((est.dx - truth.dx).norm() + (est.du - truth.du).norm() < 1e-8);
        assert!(matches!(
            estimate_jacobians_without(&samples, &[5]),
            Err(SynthesisError::RankDeficient { ref columns }) if columns == &vec![1]
        ));
    }

    #[test]
    fn positions_ignored() {
        let (truth, mut samples) = synthetic(30, 4);
        for (i, s) in samples.iter_mut().enumerate() {
            s.dx[0] = i as f64;
            s.dx[1] = -(i as f64);
        }
        let est = estimate_jacobians(&samples).unwrap();
        assert!((est.dx - truth.dx).norm() < 1e-8);
    }
}
