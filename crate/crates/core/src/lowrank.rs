//! Scalar and matrix shrinkage machinery: the SVD contract, soft
//! thresholding, singular value thresholding, generalized soft thresholding
//! for the lp penalty, and the proximal operators of the four nuclear norms.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Singular values below this are treated as zero for rank decisions.
pub const RANK_EPS: f64 = 1e-12;

/// Default fixed-point iteration count for [`gst_scalar`]. The iteration
/// contracts with factor at most p/2 once past the threshold, so 32 rounds
/// pin the minimizer to machine precision even in the slowest near-threshold
/// cases; most inputs exit early long before that.
pub const DEFAULT_GST_ITERS: usize = 32;

/// Thin SVD with non-increasing singular values and a fixed sign convention.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    /// `n1 x r`, orthonormal columns.
    pub u: DMatrix<f64>,
    /// `r` non-negative singular values, non-increasing.
    pub s: DVector<f64>,
    /// `n2 x r`, orthonormal columns.
    pub v: DMatrix<f64>,
}

impl SvdFactors {
    /// `u * diag(s) * v^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.rescale(&self.s)
    }

    /// `u * diag(values) * v^T` for an arbitrary spectrum of length `r`.
    pub fn rescale(&self, values: &DVector<f64>) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(values) * self.v.transpose()
    }

    /// Number of singular values above [`RANK_EPS`].
    pub fn rank(&self) -> usize {
        self.s.iter().filter(|&&x| x > RANK_EPS).count()
    }
}

/// Which nuclear norm regularizes the rank-minimization problem.
#[derive(Debug, Clone, PartialEq)]
pub enum NormKind {
    /// Standard nuclear norm: unit weights, p = 1.
    Nnm,
    /// Weighted nuclear norm: p = 1.
    Wnnm(WeightRule),
    /// Schatten p-norm: unit weights, 0 < p <= 1.
    Snm { p: f64 },
    /// Weighted Schatten p-norm.
    Wsnm { p: f64, weights: WeightRule },
}

/// How per-singular-value weights are produced.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightRule {
    /// All weights 1.
    Uniform,
    /// `w_j = 1 / (sigma_j + eps)`: shrink large values less, smaller ones more.
    InverseMagnitude { eps: f64 },
    /// Caller-supplied weights, one per singular value.
    Explicit(Vec<f64>),
}

impl WeightRule {
    /// Materializes weights for the spectrum `s`, checking non-negativity.
    pub fn materialize(&self, s: &DVector<f64>) -> Result<Vec<f64>> {
        let weights = match self {
            WeightRule::Uniform => vec![1.0; s.len()],
            WeightRule::InverseMagnitude { eps } => {
                s.iter().map(|&sigma| 1.0 / (sigma.abs() + eps)).collect()
            }
            WeightRule::Explicit(w) => {
                if w.len() != s.len() {
                    return Err(Error::ShapeMismatch {
                        detail: format!(
                            "{} weights supplied for {} singular values",
                            w.len(),
                            s.len()
                        ),
                    });
                }
                w.clone()
            }
        };
        for (index, &weight) in weights.iter().enumerate() {
            if weight.is_nan() || weight < 0.0 {
                return Err(Error::NegativeWeight { index, weight });
            }
        }
        Ok(weights)
    }
}

impl NormKind {
    /// The Schatten exponent this norm applies to singular values.
    pub fn p(&self) -> f64 {
        match self {
            NormKind::Nnm | NormKind::Wnnm(_) => 1.0,
            NormKind::Snm { p } | NormKind::Wsnm { p, .. } => *p,
        }
    }

    pub fn weight_rule(&self) -> &WeightRule {
        match self {
            NormKind::Nnm | NormKind::Snm { .. } => &WeightRule::Uniform,
            NormKind::Wnnm(rule) | NormKind::Wsnm { weights: rule, .. } => rule,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            NormKind::Nnm => "NNM",
            NormKind::Wnnm(_) => "WNNM",
            NormKind::Snm { .. } => "SNM",
            NormKind::Wsnm { .. } => "WSNM",
        }
    }
}

fn ensure_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

/// Thin SVD with singular values sorted non-increasing and each `u` column
/// signed so its first nonzero entry is positive.
pub fn svd(m: &DMatrix<f64>) -> Result<SvdFactors> {
    ensure_finite(m)?;
    let factors = m.clone().svd(true, true);
    let u_raw = factors.u.expect("svd requested u");
    let v_t = factors.v_t.expect("svd requested v_t");
    let s_raw = factors.singular_values;

    let r = s_raw.len();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| s_raw[b].partial_cmp(&s_raw[a]).unwrap());

    let mut u = DMatrix::zeros(m.nrows(), r);
    let mut v = DMatrix::zeros(m.ncols(), r);
    let mut s = DVector::zeros(r);
    for (dst, &src) in order.iter().enumerate() {
        s[dst] = s_raw[src];
        let u_col = u_raw.column(src);
        let flip = u_col
            .iter()
            .find(|&&x| x != 0.0)
            .is_some_and(|&x| x < 0.0);
        let sign = if flip { -1.0 } else { 1.0 };
        u.column_mut(dst).copy_from(&(u_col * sign));
        v.column_mut(dst)
            .copy_from(&(v_t.row(src).transpose() * sign));
    }
    Ok(SvdFactors { u, s, v })
}

/// Scalar soft thresholding: `sign(a) * max(|a| - tau, 0)`.
pub fn soft(a: f64, tau: f64) -> Result<f64> {
    if tau.is_nan() || tau < 0.0 {
        return Err(Error::NegativeTau { tau });
    }
    Ok(a.signum() * (a.abs() - tau).max(0.0))
}

/// Singular value thresholding: soft-thresholds the spectrum at `tau`.
///
/// Minimizes `1/2 ||P - Q||_F^2 + tau ||P||_*` over `P`.
pub fn svt(q: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    if tau.is_nan() || tau < 0.0 {
        return Err(Error::NegativeTau { tau });
    }
    let factors = svd(q)?;
    let shrunk = DVector::from_iterator(
        factors.s.len(),
        factors.s.iter().map(|&sigma| (sigma - tau).max(0.0)),
    );
    Ok(factors.rescale(&shrunk))
}

/// The decision threshold of the generalized soft-thresholding operator:
/// inputs with `|y|` at or below it map to zero.
pub fn gst_threshold(lambda: f64, p: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let base = (2.0 * lambda * (1.0 - p)).powf(1.0 / (2.0 - p));
    base + lambda * p * base.powf(p - 1.0)
}

/// Generalized soft thresholding: the global minimizer of
/// `1/2 (x - y)^2 + lambda |x|^p` for `0 < p <= 1`.
///
/// Below the decision threshold the minimizer is 0; above it, a fixed-point
/// iteration `x <- |y| - lambda p x^(p-1)` started at `|y|` converges to the
/// nonzero stationary point. At `p = 1` this reduces exactly to [`soft`].
pub fn gst_scalar(y: f64, lambda: f64, p: f64) -> Result<f64> {
    gst_scalar_with_iters(y, lambda, p, DEFAULT_GST_ITERS)
}

/// [`gst_scalar`] with an explicit fixed-point iteration budget.
pub fn gst_scalar_with_iters(y: f64, lambda: f64, p: f64, iters: usize) -> Result<f64> {
    if p.is_nan() || p <= 0.0 || p > 1.0 {
        return Err(Error::InvalidExponent { p });
    }
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::NegativeLambda { lambda });
    }
    if lambda == 0.0 {
        return Ok(y);
    }
    let magnitude = y.abs();
    if magnitude <= gst_threshold(lambda, p) {
        return Ok(0.0);
    }
    let mut x = magnitude;
    for _ in 0..iters.max(1) {
        let next = magnitude - lambda * p * x.powf(p - 1.0);
        let step = (next - x).abs();
        x = next;
        if step <= 1e-15 * (1.0 + magnitude) {
            break;
        }
    }
    Ok(y.signum() * x)
}

/// Proximal operator of `tau * R(X)` for the nuclear norm family:
/// shrinks each singular value by [`soft`] (p = 1) or [`gst_scalar`]
/// (p < 1) at level `tau * w_i`, then reassembles the matrix.
pub fn prox_norm(y: &DMatrix<f64>, kind: &NormKind, tau: f64) -> Result<DMatrix<f64>> {
    if tau.is_nan() || tau < 0.0 {
        return Err(Error::NegativeTau { tau });
    }
    let p = kind.p();
    if p.is_nan() || p <= 0.0 || p > 1.0 {
        return Err(Error::InvalidExponent { p });
    }
    let factors = svd(y)?;
    let weights = kind.weight_rule().materialize(&factors.s)?;
    let mut shrunk = DVector::zeros(factors.s.len());
    for (i, (&sigma, &w)) in factors.s.iter().zip(&weights).enumerate() {
        let value = if p == 1.0 {
            soft(sigma, tau * w)?
        } else {
            gst_scalar(sigma, tau * w, p)?
        };
        shrunk[i] = value.max(0.0);
    }
    Ok(factors.rescale(&shrunk))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeded_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut state = seed;
        DMatrix::from_fn(rows, cols, |_, _| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
        })
    }

    #[test]
    fn svd_of_diagonal_matrix() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0]));
        let f = svd(&m).unwrap();
        assert!((f.s[0] - 3.0).abs() < 1e-12);
        assert!((f.s[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn svd_of_zero_matrix() {
        let m = DMatrix::zeros(4, 3);
        let f = svd(&m).unwrap();
        assert!(f.s.iter().all(|&x| x == 0.0));
        assert_eq!(f.rank(), 0);
    }

    #[test]
    fn svd_reconstruction_and_orthogonality() {
        let m = seeded_matrix(8, 5, 42);
        let f = svd(&m).unwrap();
        let err = (f.reconstruct() - &m).norm() / m.norm();
        assert!(err <= 1e-8, "reconstruction error {err}");

        let utu = f.u.transpose() * &f.u;
        let vtv = f.v.transpose() * &f.v;
        let eye = DMatrix::<f64>::identity(5, 5);
        assert!((utu - &eye).norm() <= 1e-8);
        assert!((vtv - &eye).norm() <= 1e-8);

        for w in f.s.as_slice().windows(2) {
            assert!(w[0] >= w[1]);
        }
        for j in 0..f.u.ncols() {
            let first = f.u.column(j).iter().copied().find(|&x| x != 0.0).unwrap();
            assert!(first > 0.0);
        }
    }

    #[test]
    fn svd_rejects_non_finite() {
        let mut m = seeded_matrix(3, 3, 1);
        m[(1, 1)] = f64::NAN;
        assert!(matches!(svd(&m), Err(Error::NonFinite)));
    }

    #[test]
    fn soft_threshold_values() {
        assert_eq!(soft(5.0, 2.0).unwrap(), 3.0);
        assert_eq!(soft(-5.0, 2.0).unwrap(), -3.0);
        assert_eq!(soft(1.0, 2.0).unwrap(), 0.0);
        assert!(matches!(soft(1.0, -0.5), Err(Error::NegativeTau { .. })));
    }

    #[test]
    fn svt_diagonal_case() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![5.0, 1.0]));
        let out = svt(&m, 2.0).unwrap();
        let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 0.0]));
        assert!((out - expect).norm() <= 1e-12);
    }

    #[test]
    fn svt_is_identity_at_zero_tau() {
        let m = seeded_matrix(4, 5, 9);
        let out = svt(&m, 0.0).unwrap();
        assert!((out - &m).amax() <= 1e-10);
    }

    fn nuclear_objective(p: &DMatrix<f64>, q: &DMatrix<f64>, tau: f64) -> f64 {
        let fidelity = 0.5 * (p - q).norm_squared();
        let nuclear: f64 = svd(p).unwrap().s.iter().sum();
        fidelity + tau * nuclear
    }

    #[test]
    fn svt_beats_random_perturbations() {
        let q = seeded_matrix(4, 5, 77);
        let tau = 1.0;
        let out = svt(&q, tau).unwrap();
        let base = nuclear_objective(&out, &q, tau);
        let mut state = 5u64;
        let mut rand_unit = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for _ in 0..500 {
            let noise = DMatrix::from_fn(4, 5, |_, _| rand_unit() * 0.5);
            let candidate = &out + noise;
            assert!(nuclear_objective(&candidate, &q, tau) + 1e-12 >= base);
        }
    }

    fn gst_objective(x: f64, y: f64, lambda: f64, p: f64) -> f64 {
        0.5 * (x - y) * (x - y) + lambda * x.abs().powf(p)
    }

    fn grid_minimizer(y: f64, lambda: f64, p: f64) -> (f64, f64) {
        let span = 2.0 * y.abs().max(1.0);
        let mut best = (0.0, gst_objective(0.0, y, lambda, p));
        let steps = (2.0 * span / 1e-4) as usize;
        for i in 0..=steps {
            let x = -span + i as f64 * 1e-4;
            let f = gst_objective(x, y, lambda, p);
            if f < best.1 {
                best = (x, f);
            }
        }
        best
    }

    #[test]
    fn gst_reduces_to_soft_at_p_one() {
        for &y in &[-7.5, -1.0, 0.0, 0.3, 2.0, 9.9] {
            for &lambda in &[0.0, 0.5, 2.0, 5.0] {
                let expect = soft(y, lambda).unwrap();
                let got = gst_scalar(y, lambda, 1.0).unwrap();
                assert!(
                    (got - expect).abs() <= 1e-12,
                    "y={y} lambda={lambda}: {got} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn gst_zeros_below_threshold() {
        // tau* = 1.5 for lambda=1, p=0.5, so y=1.2 collapses to zero.
        let got = gst_scalar(1.2, 1.0, 0.5).unwrap();
        assert_eq!(got, 0.0);
        let (xmin, fmin) = grid_minimizer(1.2, 1.0, 0.5);
        assert!(
            gst_objective(0.0, 1.2, 1.0, 0.5) <= fmin + 1e-9,
            "grid found better point {xmin}"
        );
    }

    #[test]
    fn gst_matches_grid_search_above_threshold() {
        let got = gst_scalar(3.0, 1.0, 0.5).unwrap();
        let (xmin, _) = grid_minimizer(3.0, 1.0, 0.5);
        assert!((got - xmin).abs() <= 1e-3, "{got} vs {xmin}");
    }

    #[test]
    fn gst_is_odd_in_y() {
        for &(y, lambda, p) in &[(3.0, 1.0, 0.5), (7.0, 2.5, 0.3), (2.2, 0.7, 0.9)] {
            let pos = gst_scalar(y, lambda, p).unwrap();
            let neg = gst_scalar(-y, lambda, p).unwrap();
            assert_eq!(pos, -neg);
        }
    }

    #[test]
    fn gst_validates_arguments() {
        assert!(matches!(
            gst_scalar(1.0, 1.0, 0.0),
            Err(Error::InvalidExponent { .. })
        ));
        assert!(matches!(
            gst_scalar(1.0, 1.0, 1.5),
            Err(Error::InvalidExponent { .. })
        ));
        assert!(matches!(
            gst_scalar(1.0, -1.0, 0.5),
            Err(Error::NegativeLambda { .. })
        ));
    }

    #[test]
    fn prox_nnm_equals_svt() {
        let y = seeded_matrix(6, 4, 3);
        let a = prox_norm(&y, &NormKind::Nnm, 0.8).unwrap();
        let b = svt(&y, 0.8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn prox_wnnm_with_unit_weights_equals_nnm() {
        let y = seeded_matrix(5, 5, 13);
        let a = prox_norm(&y, &NormKind::Wnnm(WeightRule::Uniform), 0.6).unwrap();
        let b = prox_norm(&y, &NormKind::Nnm, 0.6).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn prox_wsnm_at_p_one_equals_wnnm() {
        let y = seeded_matrix(5, 7, 21);
        let rule = WeightRule::InverseMagnitude { eps: 0.1 };
        let a = prox_norm(
            &y,
            &NormKind::Wsnm {
                p: 1.0,
                weights: rule.clone(),
            },
            0.4,
        )
        .unwrap();
        let b = prox_norm(&y, &NormKind::Wnnm(rule), 0.4).unwrap();
        assert!((a - b).amax() <= 1e-12);
    }

    #[test]
    fn prox_is_identity_at_zero_tau() {
        let y = seeded_matrix(6, 5, 31);
        for kind in [
            NormKind::Nnm,
            NormKind::Wnnm(WeightRule::InverseMagnitude { eps: 0.1 }),
            NormKind::Snm { p: 0.7 },
            NormKind::Wsnm {
                p: 0.45,
                weights: WeightRule::InverseMagnitude { eps: 0.1 },
            },
        ] {
            let out = prox_norm(&y, &kind, 0.0).unwrap();
            assert!((out - &y).amax() <= 1e-10, "{}", kind.label());
        }
    }

    #[test]
    fn prox_never_expands_spectrum() {
        let y = seeded_matrix(8, 6, 55);
        let before = svd(&y).unwrap().s;
        for kind in [
            NormKind::Nnm,
            NormKind::Wnnm(WeightRule::InverseMagnitude { eps: 0.1 }),
            NormKind::Snm { p: 0.5 },
            NormKind::Wsnm {
                p: 0.45,
                weights: WeightRule::InverseMagnitude { eps: 0.1 },
            },
        ] {
            let out = prox_norm(&y, &kind, 0.9).unwrap();
            let after = svd(&out).unwrap().s;
            for (&a, &b) in after.iter().zip(before.iter()) {
                assert!(a <= b + 1e-10, "{}: {a} > {b}", kind.label());
            }
        }
    }

    #[test]
    fn prox_rejects_negative_weights() {
        let y = seeded_matrix(3, 3, 2);
        let kind = NormKind::Wnnm(WeightRule::Explicit(vec![1.0, -0.5, 1.0]));
        assert!(matches!(
            prox_norm(&y, &kind, 1.0),
            Err(Error::NegativeWeight { index: 1, .. })
        ));
    }
}
