//! Spectrum comparison: how close each nuclear norm's shrunken singular
//! values land to the ground-truth spectrum of the same patch group.

use crate::error::{Error, Result};
use crate::grouping::{gather, match_group};
use crate::image::{Image, PatchCoord};
use crate::lowrank::{prox_norm, svd, NormKind, WeightRule};
use crate::restore::SolverConfig;

/// A labeled non-increasing singular value sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularSpectrum {
    pub label: String,
    pub values: Vec<f64>,
}

/// Shrinkage thresholds, one per norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormThresholds {
    pub nnm: f64,
    pub wnnm: f64,
    pub snm: f64,
    pub wsnm: f64,
}

impl NormThresholds {
    pub fn uniform(tau: f64) -> Self {
        Self {
            nnm: tau,
            wnnm: tau,
            snm: tau,
            wsnm: tau,
        }
    }
}

fn spectrum_of(label: &str, m: &nalgebra::DMatrix<f64>) -> Result<SingularSpectrum> {
    let factors = svd(m)?;
    Ok(SingularSpectrum {
        label: label.to_string(),
        values: factors.s.iter().copied().collect(),
    })
}

/// Matches a group on the clean image at `reference`, gathers the same
/// member coordinates from both images, and emits six spectra: ground
/// truth, degraded, and the four prox outputs applied to the degraded
/// group. `p` for the Schatten norms comes from `cfg.p`.
pub fn spectra_at(
    clean: &Image,
    degraded: &Image,
    reference: PatchCoord,
    cfg: &SolverConfig,
    taus: NormThresholds,
    wnnm_weights: &WeightRule,
) -> Result<Vec<SingularSpectrum>> {
    if !clean.same_dims(degraded) {
        return Err(Error::DimensionMismatch {
            expected_width: clean.width(),
            expected_height: clean.height(),
            found_width: degraded.width(),
            found_height: degraded.height(),
        });
    }
    let gi = match_group(clean, reference, cfg.patch, cfg.group_size, cfg.window)?;
    let truth = gather(clean, &gi, cfg.patch)?.matrix;
    let observed = gather(degraded, &gi, cfg.patch)?.matrix;

    let kinds = [
        (NormKind::Nnm, taus.nnm),
        (NormKind::Wnnm(wnnm_weights.clone()), taus.wnnm),
        (NormKind::Snm { p: cfg.p }, taus.snm),
        (
            NormKind::Wsnm {
                p: cfg.p,
                weights: wnnm_weights.clone(),
            },
            taus.wsnm,
        ),
    ];

    let mut out = Vec::with_capacity(2 + kinds.len());
    out.push(spectrum_of("ground-truth", &truth)?);
    out.push(spectrum_of("degraded", &observed)?);
    for (kind, tau) in kinds {
        let restored = prox_norm(&observed, &kind, tau)?;
        out.push(spectrum_of(kind.label(), &restored)?);
    }
    Ok(out)
}

/// Euclidean distance between two spectra of equal length.
pub fn spectrum_error(a: &SingularSpectrum, b: &SingularSpectrum) -> Result<f64> {
    if a.values.len() != b.values.len() {
        return Err(Error::ShapeMismatch {
            detail: format!(
                "spectra lengths differ: {} vs {}",
                a.values.len(),
                b.values.len()
            ),
        });
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// One CSV row per spectrum: label first, values after.
pub fn spectra_to_csv(spectra: &[SingularSpectrum]) -> String {
    let mut out = String::new();
    for s in spectra {
        out.push_str(&s.label);
        for v in &s.values {
            out.push_str(&format!(",{v:.9e}"));
        }
        out.push('\n');
    }
    out
}
