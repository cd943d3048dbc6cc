//! Discrete linearization and the backward Riccati recursion.

use nalgebra::{RowSVector, SMatrix, SVector};

use super::regression::{DynamicJacobian, FIRST_DYNAMIC_STATE, FIRST_REGRESSOR_STATE};
use crate::error::SynthesisError;
use crate::glider::STATE_DIM;

pub type Mat7 = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type Vec7 = SVector<f64, STATE_DIM>;
pub type Gain = RowSVector<f64, STATE_DIM>;

/// `A = I + Δt·A_c`, `B = Δt·B_c`. The kinematic rows are fixed
/// (`ṙ = v`, `θ̇ = ω`, `φ̇ = u`); rows 5–7 carry the regressed block.
pub fn assemble_discrete(jac: &DynamicJacobian, dt: f64) -> (Mat7, Vec7) {
    let mut ac = Mat7::zeros();
    ac[(0, 4)] = 1.0;
    ac[(1, 5)] = 1.0;
    ac[(2, 6)] = 1.0;
    ac.fixed_view_mut::<3, 5>(FIRST_DYNAMIC_STATE, FIRST_REGRESSOR_STATE)
        .copy_from(&jac.dx);
    let mut bc = Vec7::zeros();
    bc[3] = 1.0;
    bc.fixed_rows_mut::<3>(FIRST_DYNAMIC_STATE).copy_from(&jac.du);
    (Mat7::identity() + ac * dt, bc * dt)
}

/// TVLQR weights. `q` and `qf` are diagonals.
#[derive(Clone, Debug, PartialEq)]
pub struct LqrWeights {
    pub q: Vec7,
    pub r: f64,
    pub qf: Vec7,
}

/// Gains `H_k = (R + BᵀS_{k+1}B)⁻¹ BᵀS_{k+1}A` for `k = 0..N`, recursing from `S_N = Q_f`.
pub fn tvlqr_backward(a: &[Mat7], b: &[Vec7], w: &LqrWeights) -> Result<Vec<Gain>, SynthesisError> {
    tvlqr_with_cost(a, b, w).map(|(h, _)| h)
}

/// As [`tvlqr_backward`], also returning `S_0..S_N`.
pub fn tvlqr_with_cost(a: &[Mat7], b: &[Vec7], w: &LqrWeights) -> Result<(Vec<Gain>, Vec<Mat7>), SynthesisError> {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let q = Mat7::from_diagonal(&w.q);
    let mut s = Mat7::from_diagonal(&w.qf);
    let mut gains = vec![Gain::zeros(); n];
    let mut costs = vec![Mat7::zeros(); n + 1];
    costs[n] = s;
    for k in (0..n).rev() {
        let (ak, bk) = (&a[k], &b[k]);
        let sb = s * bk;
        let denom = w.r + bk.dot(&sb);
        let h: Gain = (sb.transpose() * ak) / denom;
        let next = q + ak.transpose() * s * ak - (ak.transpose() * sb) * h;
        s = (next + next.transpose()) * 0.5;
        if !s.iter().all(|v| v.is_finite()) || !denom.is_finite() {
            return Err(SynthesisError::NonFiniteRiccati { step: k });
        }
        gains[k] = h;
        costs[k] = s;
    }
    Ok((gains, costs))
}
