//! ADMM restoration: alternating data-consistency updates, per-group
//! low-rank coefficient shrinkage, and multiplier updates, with adaptive
//! per-group regularization and weights.

use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::degrade::{cs_adjoint, CsOp, MaskOp, Measurements};
use crate::dictionary::{learn_dictionary, solve_group_lp_with_iters, synthesize};
use crate::error::{Error, Result};
use crate::grouping::{gather, match_group, reference_coords};
use crate::image::{aggregate_groups, psnr, Image, PatchCoord};
use crate::lowrank::DEFAULT_GST_ITERS;

/// How the per-group scale estimate `delta` is computed from the group's
/// singular values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMode {
    /// Standard deviation of the singular values (default).
    #[default]
    StdDev,
    /// Their variance.
    Variance,
}

/// Every tunable of the solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Patch side `d`; patches are `d x d`.
    pub patch: usize,
    /// Similar patches per group `k`.
    pub group_size: usize,
    /// Search window side `I`, in patch anchor coordinates.
    pub window: usize,
    /// Reference grid stride in pixels.
    pub stride: usize,
    /// ADMM penalty `rho`.
    pub rho: f64,
    /// Shrinkage exponent `p` in (0, 1].
    pub p: f64,
    /// Noise scale `sigma` driving the per-group regularization.
    pub sigma: f64,
    /// Constant added to singular value magnitudes in the weight rule.
    pub eps_w: f64,
    /// Constant added to the scale estimate in the regularization rule.
    pub eps_l: f64,
    /// ADMM iteration count.
    pub iters: usize,
    /// Seed recorded with runs; the solver itself draws no randomness.
    pub seed: u64,
    /// Fixed-point budget for the scalar lp shrinkage.
    pub gst_iters: usize,
    /// See [`DeltaMode`].
    pub delta_mode: DeltaMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            patch: 8,
            group_size: 60,
            window: 25,
            stride: 4,
            rho: 0.0003,
            p: 0.45,
            sigma: std::f64::consts::SQRT_2,
            eps_w: 0.1,
            eps_l: 0.3,
            iters: 60,
            seed: 0,
            gst_iters: DEFAULT_GST_ITERS,
            delta_mode: DeltaMode::StdDev,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |detail: String| Err(Error::InvalidConfig { detail });
        if self.patch == 0 {
            return fail("patch side must be positive".into());
        }
        if self.group_size == 0 {
            return fail("group size k must be at least 1".into());
        }
        if self.window == 0 {
            return fail("search window must be positive".into());
        }
        if self.stride == 0 || self.stride > self.patch {
            return fail(format!(
                "stride {} must lie in 1..={}",
                self.stride, self.patch
            ));
        }
        if self.rho.is_nan() || self.rho <= 0.0 {
            return fail(format!("rho must be positive, got {}", self.rho));
        }
        if self.p.is_nan() || self.p <= 0.0 || self.p > 1.0 {
            return fail(format!("p must lie in (0, 1], got {}", self.p));
        }
        if self.sigma.is_nan() || self.sigma < 0.0 {
            return fail(format!("sigma must be non-negative, got {}", self.sigma));
        }
        if self.eps_w.is_nan() || self.eps_w <= 0.0 || self.eps_l.is_nan() || self.eps_l <= 0.0 {
            return fail(format!(
                "eps_w and eps_l must be positive, got {} and {}",
                self.eps_w, self.eps_l
            ));
        }
        if self.iters == 0 {
            return fail("iteration count must be at least 1".into());
        }
        if self.gst_iters == 0 {
            return fail("gst iteration budget must be at least 1".into());
        }
        Ok(())
    }
}

/// The degradation `H`: a pixel mask or a block-CS projection.
#[derive(Debug, Clone)]
pub enum DegradationOp {
    Mask(MaskOp),
    Cs(CsOp),
}

/// What was observed through the degradation.
#[derive(Debug, Clone)]
pub enum Observation {
    Image(Image),
    Measurements(Measurements),
}

/// State of the ADMM iteration: auxiliary `Z`, aggregate estimate `X`
/// (the synthesized `D alpha`), and the scaled multiplier `C`.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub z: Image,
    pub x: Image,
    pub c: Image,
    pub iter: usize,
}

/// One completed iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub fidelity: f64,
    pub psnr: Option<f64>,
    pub seconds: f64,
}

/// Per-iteration records, serializable as `iter,fidelity,psnr,seconds` CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterLog {
    pub records: Vec<IterRecord>,
}

impl IterLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,fidelity,psnr,seconds\n");
        for r in &self.records {
            let psnr = r.psnr.map(|v| format!("{v:.6}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{:.9e},{},{:.6}\n",
                r.iter, r.fidelity, psnr, r.seconds
            ));
        }
        out
    }
}

/// Read-only view of the solver state handed to iteration observers.
pub struct IterSnapshot<'a> {
    pub iter: usize,
    pub z: &'a Image,
    pub r: &'a Image,
    pub x: &'a Image,
    pub c: &'a Image,
}

fn fill_from_observed(obs: &Image, mask: &MaskOp) -> Image {
    let (w, h) = (obs.width(), obs.height());
    let mut data = obs.data().to_vec();
    let mut filled: Vec<bool> = mask.flags().to_vec();
    let mut queue: VecDeque<usize> = (0..data.len()).filter(|&i| filled[i]).collect();
    while let Some(idx) = queue.pop_front() {
        let (r, c) = (idx / w, idx % w);
        let neighbors = [
            (r > 0).then(|| idx - w),
            (r + 1 < h).then(|| idx + w),
            (c > 0).then(|| idx - 1),
            (c + 1 < w).then(|| idx + 1),
        ];
        for n in neighbors.into_iter().flatten() {
            if !filled[n] {
                filled[n] = true;
                data[n] = data[idx];
                queue.push_back(n);
            }
        }
    }
    Image::new(w, h, data).expect("dims preserved")
}

/// Initializes the ADMM state: `C = 0`, and `Z = X` set to a nearest-valid
/// fill of the observation (masks) or the adjoint reconstruction (CS).
pub fn init_state(obs: &Observation, op: &DegradationOp) -> Result<AdmmState> {
    let z = match (obs, op) {
        (Observation::Image(img), DegradationOp::Mask(mask)) => {
            if img.width() != mask.width() || img.height() != mask.height() {
                return Err(Error::DimensionMismatch {
                    expected_width: mask.width(),
                    expected_height: mask.height(),
                    found_width: img.width(),
                    found_height: img.height(),
                });
            }
            fill_from_observed(img, mask)
        }
        (Observation::Measurements(meas), DegradationOp::Cs(cs)) => cs_adjoint(cs, meas)?,
        _ => {
            return Err(Error::ObservationMismatch {
                detail: "mask operators take images, CS operators take measurements".into(),
            })
        }
    };
    let c = Image::zeros(z.width(), z.height());
    Ok(AdmmState {
        x: z.clone(),
        z,
        c,
        iter: 0,
    })
}

/// Data-consistency update for mask degradations. Per pixel:
/// observed `(y + rho (x + c)) / (1 + rho)`, missing `x + c`.
pub fn z_update_mask(
    obs: &Image,
    mask: &MaskOp,
    x: &Image,
    c: &Image,
    rho: f64,
) -> Result<Image> {
    ensure_rho(rho)?;
    ensure_same_dims(obs, x)?;
    ensure_same_dims(obs, c)?;
    if obs.width() != mask.width() || obs.height() != mask.height() {
        return Err(Error::DimensionMismatch {
            expected_width: mask.width(),
            expected_height: mask.height(),
            found_width: obs.width(),
            found_height: obs.height(),
        });
    }
    let data = obs
        .data()
        .iter()
        .zip(x.data().iter().zip(c.data()))
        .zip(mask.flags())
        .map(|((&y, (&xj, &cj)), &seen)| {
            let target = xj + cj;
            if seen {
                (y + rho * target) / (1.0 + rho)
            } else {
                target
            }
        })
        .collect();
    Image::new(obs.width(), obs.height(), data)
}

/// Data-consistency update for block-CS degradations, per block via the
/// Woodbury identity; orthonormal projection rows collapse the inner
/// inverse to the scalar `1 / (1 + rho)`.
pub fn z_update_cs(
    meas: &Measurements,
    op: &CsOp,
    x: &Image,
    c: &Image,
    rho: f64,
) -> Result<Image> {
    let matrices: Vec<DMatrix<f64>> = (0..meas.blocks.len())
        .into_par_iter()
        .map(|b| op.block_matrix(b))
        .collect();
    z_update_cs_with(meas, op, &matrices, x, c, rho)
}

fn z_update_cs_with(
    meas: &Measurements,
    op: &CsOp,
    matrices: &[DMatrix<f64>],
    x: &Image,
    c: &Image,
    rho: f64,
) -> Result<Image> {
    ensure_rho(rho)?;
    ensure_same_dims(x, c)?;
    if x.width() != meas.width || x.height() != meas.height {
        return Err(Error::DimensionMismatch {
            expected_width: meas.width,
            expected_height: meas.height,
            found_width: x.width(),
            found_height: x.height(),
        });
    }
    let mut target = x.clone();
    for (t, &cj) in target.data_mut().iter_mut().zip(c.data()) {
        *t += cj;
    }
    let mut z = Image::zeros(meas.width, meas.height);
    for (b, (y, phi)) in meas.blocks.iter().zip(matrices).enumerate() {
        let r = op.block_vector(&target, b);
        let rhs = phi.transpose() * y + &r * rho;
        let inner = (phi * &rhs) / (1.0 + rho);
        let solution = (&rhs - phi.transpose() * inner) / rho;
        op.scatter_block(&mut z, b, &solution);
    }
    Ok(z)
}

/// One synthesized group ready for aggregation.
type SynthesizedGroup = (DMatrix<f64>, Vec<PatchCoord>);

fn solve_one_group(r: &Image, coord: PatchCoord, cfg: &SolverConfig, tau_scale: f64) -> Result<SynthesizedGroup> {
    let gi = match_group(r, coord, cfg.patch, cfg.group_size, cfg.window)?;
    let group = gather(r, &gi, cfg.patch)?;
    let dict = learn_dictionary(&group.matrix)?;
    let gamma = dict.mu();

    let mean = gamma.iter().sum::<f64>() / gamma.len() as f64;
    let variance = gamma.iter().map(|&g| (g - mean) * (g - mean)).sum::<f64>() / gamma.len() as f64;
    let delta = match cfg.delta_mode {
        DeltaMode::StdDev => variance.sqrt(),
        DeltaMode::Variance => variance,
    };

    let lambda = 2.0 * std::f64::consts::SQRT_2 * cfg.sigma * cfg.sigma / (delta + cfg.eps_l);
    let tau = lambda * tau_scale;
    let weights: Vec<f64> = gamma.iter().map(|&g| 1.0 / (g.abs() + cfg.eps_w)).collect();
    let alpha = solve_group_lp_with_iters(&dict, tau, &weights, cfg.p, cfg.gst_iters)?;
    let synthesized = synthesize(&dict, &alpha)?;
    Ok((synthesized, gi.members))
}

/// The per-group coefficient update: re-match groups on the current
/// estimate `r`, shrink each group's singular values under the adaptive
/// schedule, and aggregate the synthesized groups back into an image.
///
/// Returns the aggregate and the number of groups solved.
pub fn alpha_update(r: &Image, cfg: &SolverConfig) -> Result<(Image, usize)> {
    cfg.validate()?;
    let coords = reference_coords(r.width(), r.height(), cfg.patch, cfg.stride)?;
    let n_groups = coords.len();
    let pixels = r.pixel_count() as f64;
    let coefficient_count = (cfg.patch * cfg.patch * cfg.group_size * n_groups) as f64;
    // tau_i = lambda_i K / (rho N) with K the total coefficient count.
    let tau_scale = coefficient_count / (cfg.rho * pixels);

    let groups: Result<Vec<SynthesizedGroup>> = coords
        .into_par_iter()
        .map(|coord| solve_one_group(r, coord, cfg, tau_scale))
        .collect();
    let aggregated = aggregate_groups(&groups?, r.width(), r.height(), cfg.patch, r)?;
    Ok((aggregated, n_groups))
}

/// Scaled multiplier update: `c - (z - x)`, elementwise.
pub fn multiplier_update(c: &Image, z: &Image, x: &Image) -> Result<Image> {
    ensure_same_dims(c, z)?;
    ensure_same_dims(c, x)?;
    let data = c
        .data()
        .iter()
        .zip(z.data().iter().zip(x.data()))
        .map(|(&cj, (&zj, &xj))| cj - (zj - xj))
        .collect();
    Image::new(c.width(), c.height(), data)
}

/// Half the squared residual of the observation: `1/2 ||Y - H Z||^2`.
fn data_fidelity(
    obs: &Observation,
    op: &DegradationOp,
    cs_matrices: &[DMatrix<f64>],
    z: &Image,
) -> f64 {
    match (obs, op) {
        (Observation::Image(y), DegradationOp::Mask(mask)) => {
            let mut acc = 0.0;
            for ((&yj, &zj), &seen) in y.data().iter().zip(z.data()).zip(mask.flags()) {
                if seen {
                    let d = yj - zj;
                    acc += d * d;
                }
            }
            0.5 * acc
        }
        (Observation::Measurements(meas), DegradationOp::Cs(op)) => {
            let mut acc = 0.0;
            for (b, (y, phi)) in meas.blocks.iter().zip(cs_matrices).enumerate() {
                acc += (y - phi * op.block_vector(z, b)).norm_squared();
            }
            0.5 * acc
        }
        _ => f64::NAN,
    }
}

fn ensure_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && !rho.is_nan() {
        Ok(())
    } else {
        Err(Error::InvalidConfig {
            detail: format!("rho must be positive, got {rho}"),
        })
    }
}

fn ensure_same_dims(a: &Image, b: &Image) -> Result<()> {
    if a.same_dims(b) {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected_width: a.width(),
            expected_height: a.height(),
            found_width: b.width(),
            found_height: b.height(),
        })
    }
}

fn ensure_finite_image(img: &Image) -> Result<()> {
    if img.data().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

/// Runs the full ADMM restoration and returns the final estimate clamped
/// to `[0, 255]` together with the per-iteration log.
pub fn restore(
    obs: &Observation,
    op: &DegradationOp,
    cfg: &SolverConfig,
    reference: Option<&Image>,
) -> Result<(Image, IterLog)> {
    restore_with(obs, op, cfg, reference, |_| {})
}

/// [`restore`] with an observer called after every iteration; used for
/// instrumentation and verification without duplicating the loop.
pub fn restore_with(
    obs: &Observation,
    op: &DegradationOp,
    cfg: &SolverConfig,
    reference: Option<&Image>,
    mut observer: impl FnMut(&IterSnapshot),
) -> Result<(Image, IterLog)> {
    cfg.validate()?;
    let state = init_state(obs, op)?;
    let (mut x, mut c) = (state.x, state.c);

    // CS block matrices are reused across iterations.
    let cs_matrices: Vec<DMatrix<f64>> = match (op, obs) {
        (DegradationOp::Cs(cs), Observation::Measurements(meas)) => (0..meas.blocks.len())
            .into_par_iter()
            .map(|b| cs.block_matrix(b))
            .collect(),
        _ => Vec::new(),
    };

    let mut log = IterLog::default();
    for iter in 0..cfg.iters {
        let started = Instant::now();

        let z = match (obs, op) {
            (Observation::Image(y), DegradationOp::Mask(mask)) => {
                z_update_mask(y, mask, &x, &c, cfg.rho)?
            }
            (Observation::Measurements(meas), DegradationOp::Cs(cs)) => {
                z_update_cs_with(meas, cs, &cs_matrices, &x, &c, cfg.rho)?
            }
            _ => unreachable!("pairing validated by init_state"),
        };
        let mut r = z.clone();
        for (rj, &cj) in r.data_mut().iter_mut().zip(c.data()) {
            *rj -= cj;
        }
        let (next_x, _groups) = alpha_update(&r, cfg)?;
        x = next_x;
        c = multiplier_update(&c, &z, &x)?;
        ensure_finite_image(&z)?;
        ensure_finite_image(&x)?;

        let fidelity = data_fidelity(obs, op, &cs_matrices, &z);
        let quality = match reference {
            Some(truth) => {
                let mut estimate = x.clone();
                estimate.clamp_to_range();
                Some(psnr(truth, &estimate)?)
            }
            None => None,
        };
        observer(&IterSnapshot {
            iter,
            z: &z,
            r: &r,
            x: &x,
            c: &c,
        });
        log.records.push(IterRecord {
            iter,
            fidelity,
            psnr: quality,
            seconds: started.elapsed().as_secs_f64(),
        });
    }

    x.clamp_to_range();
    Ok((x, log))
}
