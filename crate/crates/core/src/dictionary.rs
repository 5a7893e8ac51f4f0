//! Per-group adaptive dictionary learned from one SVD of the group, and the
//! coefficient-domain lp shrinkage that makes group sparse coding equivalent
//! to rank minimization.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lowrank::{self, gst_scalar_with_iters, SvdFactors, DEFAULT_GST_ITERS};

/// Orthobasis of rank-1 atoms `u_j v_j^T` built from a group's own SVD.
///
/// The atoms are never materialized: the factorized form `u diag(alpha) v^T`
/// is mathematically identical and far cheaper.
#[derive(Debug, Clone)]
pub struct AdaptiveDict {
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    mu: DVector<f64>,
}

impl AdaptiveDict {
    /// Singular values of the source group, non-increasing.
    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    /// Number of atoms, `min(d^2, k)`.
    pub fn atom_count(&self) -> usize {
        self.mu.len()
    }

    /// Materializes atom `j` as the dense rank-1 matrix `u_j v_j^T`.
    pub fn atom(&self, j: usize) -> DMatrix<f64> {
        let u_j = self.u.column(j);
        let v_j = self.v.column(j);
        u_j * v_j.transpose()
    }
}

/// Learns the adaptive dictionary of a `d^2 x k` group from its thin SVD.
pub fn learn_dictionary(group: &DMatrix<f64>) -> Result<AdaptiveDict> {
    let SvdFactors { u, s, v } = lowrank::svd(group)?;
    Ok(AdaptiveDict { u, v, mu: s })
}

/// Reassembles a group from coefficients: `sum_j alpha_j u_j v_j^T`.
pub fn synthesize(dict: &AdaptiveDict, alpha: &DVector<f64>) -> Result<DMatrix<f64>> {
    if alpha.len() != dict.atom_count() {
        return Err(Error::ShapeMismatch {
            detail: format!(
                "{} coefficients supplied for {} atoms",
                alpha.len(),
                dict.atom_count()
            ),
        });
    }
    Ok(&dict.u * DMatrix::from_diagonal(alpha) * dict.v.transpose())
}

/// Solves the decoupled group sparse coding problem
/// `min_alpha 1/2 ||mu - alpha||_2^2 + tau sum_j w_j |alpha_j|^p`
/// one coefficient at a time via generalized soft thresholding.
pub fn solve_group_lp(
    dict: &AdaptiveDict,
    tau: f64,
    weights: &[f64],
    p: f64,
) -> Result<DVector<f64>> {
    solve_group_lp_with_iters(dict, tau, weights, p, DEFAULT_GST_ITERS)
}

/// [`solve_group_lp`] with an explicit GST iteration budget.
pub fn solve_group_lp_with_iters(
    dict: &AdaptiveDict,
    tau: f64,
    weights: &[f64],
    p: f64,
    gst_iters: usize,
) -> Result<DVector<f64>> {
    if tau.is_nan() || tau < 0.0 {
        return Err(Error::NegativeTau { tau });
    }
    if weights.len() != dict.atom_count() {
        return Err(Error::ShapeMismatch {
            detail: format!(
                "{} weights supplied for {} atoms",
                weights.len(),
                dict.atom_count()
            ),
        });
    }
    for (index, &weight) in weights.iter().enumerate() {
        if weight.is_nan() || weight < 0.0 {
            return Err(Error::NegativeWeight { index, weight });
        }
    }
    let mut alpha = DVector::zeros(dict.atom_count());
    for j in 0..dict.atom_count() {
        alpha[j] = gst_scalar_with_iters(dict.mu[j], tau * weights[j], p, gst_iters)?;
    }
    Ok(alpha)
}
