//! Degradation operators: random and text-overlay pixel masks for
//! inpainting, and seeded block-Gaussian projections for compressive
//! sensing, together with their adjoints and file formats.
//!
//! All randomness flows through `rand_pcg::Pcg64` seeded from explicit
//! `u64` seeds, so every operator is bit-reproducible across runs and
//! platforms.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Per-pixel observation mask; `true` means the pixel was observed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskOp {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl MaskOp {
    pub fn new(width: usize, height: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != width * height {
            return Err(Error::ShapeMismatch {
                detail: format!(
                    "mask holds {} flags, {}x{} needs {}",
                    mask.len(),
                    width,
                    height,
                    width * height
                ),
            });
        }
        if !mask.iter().any(|&b| b) {
            return Err(Error::EmptyMask);
        }
        Ok(Self {
            width,
            height,
            mask,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn observed(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.width + col]
    }

    pub fn flags(&self) -> &[bool] {
        &self.mask
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// Renders the mask in the file convention: 255 observed, 0 missing.
    pub fn to_image(&self) -> Image {
        let data = self.mask.iter().map(|&b| if b { 255.0 } else { 0.0 }).collect();
        Image::new(self.width, self.height, data).expect("mask dims are valid")
    }

    /// Reads a mask raster saved via [`MaskOp::to_image`]; values above 127
    /// count as observed.
    pub fn from_raster(img: &Image) -> Result<Self> {
        let mask = img.data().iter().map(|&v| v > 127.0).collect();
        Self::new(img.width(), img.height(), mask)
    }
}

/// Seeded block-Gaussian compressive-sensing operator.
///
/// Each `block`x`block` tile is measured through its own `M x block^2`
/// matrix whose entries are standard normal draws from a `Pcg64` stream
/// offset by the block index, with rows orthonormalized by modified
/// Gram-Schmidt. Matrices are regenerated on demand rather than stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsOp {
    block: usize,
    ratio: f64,
    seed: u64,
    rows_per_block: usize,
}

/// Per-block measurement vectors in block scan order (row-major over the
/// block grid), with the source image dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    pub width: usize,
    pub height: usize,
    pub block: usize,
    pub blocks: Vec<DVector<f64>>,
}

/// Sidecar metadata that regenerates the operator instead of storing it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsSidecar {
    pub block: usize,
    pub ratio: f64,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
}

/// Masks out exactly `round(missing_fraction * N)` pixels chosen by a
/// seeded Fisher-Yates permutation.
pub fn make_random_mask(
    width: usize,
    height: usize,
    missing_fraction: f64,
    seed: u64,
) -> Result<MaskOp> {
    if !(0.0..1.0).contains(&missing_fraction) {
        return Err(Error::FractionOutOfRange {
            fraction: missing_fraction,
        });
    }
    let n = width * height;
    let missing = (missing_fraction * n as f64).round() as usize;
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = Pcg64::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
    let mut mask = vec![true; n];
    for &idx in indices.iter().take(missing) {
        mask[idx] = false;
    }
    MaskOp::new(width, height, mask)
}

/// Converts a text-overlay raster into a mask: a pixel is observed iff the
/// overlay value is below `threshold` (the inlaid text is the bright part).
pub fn mask_from_image(textmask: &Image, threshold: f64) -> Result<MaskOp> {
    let mask = textmask.data().iter().map(|&v| v < threshold).collect();
    MaskOp::new(textmask.width(), textmask.height(), mask)
}

/// Applies the mask: observed pixels pass through, missing pixels become 0.
pub fn apply_mask(op: &MaskOp, img: &Image) -> Result<Image> {
    if img.width() != op.width || img.height() != op.height {
        return Err(Error::DimensionMismatch {
            expected_width: op.width,
            expected_height: op.height,
            found_width: img.width(),
            found_height: img.height(),
        });
    }
    let data = img
        .data()
        .iter()
        .zip(&op.mask)
        .map(|(&v, &keep)| if keep { v } else { 0.0 })
        .collect();
    Image::new(op.width, op.height, data)
}

impl CsOp {
    pub fn block(&self) -> usize {
        self.block
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Measurement rows per block: `round(ratio * block^2)`, at least 1.
    pub fn rows_per_block(&self) -> usize {
        self.rows_per_block
    }

    pub fn sidecar(&self, width: usize, height: usize) -> CsSidecar {
        CsSidecar {
            block: self.block,
            ratio: self.ratio,
            seed: self.seed,
            width,
            height,
        }
    }

    fn dims_check(&self, width: usize, height: usize) -> Result<()> {
        if width == 0
            || height == 0
            || !width.is_multiple_of(self.block)
            || !height.is_multiple_of(self.block)
        {
            return Err(Error::ObservationMismatch {
                detail: format!(
                    "image {width}x{height} is not divisible into {0}x{0} blocks",
                    self.block
                ),
            });
        }
        Ok(())
    }

    /// Regenerates the projection matrix of one block. Deterministic in
    /// `(seed, block_index)`: the block index offsets the `Pcg64` stream.
    pub fn block_matrix(&self, block_index: usize) -> DMatrix<f64> {
        let n = self.block * self.block;
        let m = self.rows_per_block;
        let stream = self
            .seed
            .wrapping_add((block_index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut rng = Pcg64::seed_from_u64(stream);
        let mut rows: Vec<DVector<f64>> = Vec::with_capacity(m);
        while rows.len() < m {
            let mut row = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            for prev in &rows {
                let proj = row.dot(prev);
                row.axpy(-proj, prev, 1.0);
            }
            let norm = row.norm();
            // A Gaussian draw is dependent on earlier rows with probability
            // zero; redraw rather than divide by ~0 if it ever happens.
            if norm > 1e-10 {
                rows.push(row / norm);
            }
        }
        DMatrix::from_rows(&rows.iter().map(|r| r.transpose()).collect::<Vec<_>>())
    }

    /// Number of blocks in an image of the given dimensions.
    pub fn block_count(&self, width: usize, height: usize) -> usize {
        (width / self.block) * (height / self.block)
    }

    /// Column-major vectorization of one block of `img`.
    pub fn block_vector(&self, img: &Image, block_index: usize) -> DVector<f64> {
        let blocks_across = img.width() / self.block;
        let br = block_index / blocks_across;
        let bc = block_index % blocks_across;
        let mut v = DVector::zeros(self.block * self.block);
        let mut i = 0;
        for c in 0..self.block {
            for r in 0..self.block {
                v[i] = img.get(br * self.block + r, bc * self.block + c);
                i += 1;
            }
        }
        v
    }

    /// Inverse of [`CsOp::block_vector`]: writes a block vector back.
    pub fn scatter_block(&self, img: &mut Image, block_index: usize, v: &DVector<f64>) {
        let blocks_across = img.width() / self.block;
        let br = block_index / blocks_across;
        let bc = block_index % blocks_across;
        let mut i = 0;
        for c in 0..self.block {
            for r in 0..self.block {
                img.set(br * self.block + r, bc * self.block + c, v[i]);
                i += 1;
            }
        }
    }
}

/// Builds a block-CS operator with `M = round(ratio * block^2)` rows per block.
pub fn make_cs_op(block: usize, ratio: f64, seed: u64) -> Result<CsOp> {
    if ratio.is_nan() || ratio <= 0.0 || ratio > 1.0 {
        return Err(Error::RatioOutOfRange { ratio });
    }
    if block == 0 {
        return Err(Error::InvalidConfig {
            detail: "block side must be positive".into(),
        });
    }
    let n = block * block;
    let rows_per_block = ((ratio * n as f64).round() as usize).clamp(1, n);
    Ok(CsOp {
        block,
        ratio,
        seed,
        rows_per_block,
    })
}

/// Measures every block: `y_b = Phi_b vec(block)`.
pub fn cs_measure(op: &CsOp, img: &Image) -> Result<Measurements> {
    op.dims_check(img.width(), img.height())?;
    let count = op.block_count(img.width(), img.height());
    let mut blocks = Vec::with_capacity(count);
    for b in 0..count {
        let phi = op.block_matrix(b);
        blocks.push(&phi * op.block_vector(img, b));
    }
    Ok(Measurements {
        width: img.width(),
        height: img.height(),
        block: op.block,
        blocks,
    })
}

fn measurements_check(op: &CsOp, meas: &Measurements) -> Result<()> {
    op.dims_check(meas.width, meas.height)?;
    let expected = op.block_count(meas.width, meas.height);
    if meas.block != op.block || meas.blocks.len() != expected {
        return Err(Error::InconsistentMeasurements {
            detail: format!(
                "expected {expected} blocks of side {}, found {} of side {}",
                op.block,
                meas.blocks.len(),
                meas.block
            ),
        });
    }
    for (i, y) in meas.blocks.iter().enumerate() {
        if y.len() != op.rows_per_block {
            return Err(Error::InconsistentMeasurements {
                detail: format!(
                    "block {i} holds {} measurements, operator produces {}",
                    y.len(),
                    op.rows_per_block
                ),
            });
        }
    }
    Ok(())
}

/// Adjoint of [`cs_measure`]: per block, `Phi_b^T y_b` scattered back.
pub fn cs_adjoint(op: &CsOp, meas: &Measurements) -> Result<Image> {
    measurements_check(op, meas)?;
    let mut img = Image::zeros(meas.width, meas.height);
    for (b, y) in meas.blocks.iter().enumerate() {
        let phi = op.block_matrix(b);
        op.scatter_block(&mut img, b, &(phi.transpose() * y));
    }
    Ok(img)
}

/// Adds seeded white Gaussian noise; off by default everywhere, present for
/// completeness behind an explicit call.
pub fn add_gaussian_noise(img: &Image, sigma: f64, seed: u64) -> Image {
    let mut rng = Pcg64::seed_from_u64(seed);
    let data = img
        .data()
        .iter()
        .map(|&v| v + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Image::new(img.width(), img.height(), data).expect("dims preserved")
}

/// Measurement-domain counterpart of [`add_gaussian_noise`].
pub fn add_measurement_noise(meas: &mut Measurements, sigma: f64, seed: u64) {
    let mut rng = Pcg64::seed_from_u64(seed);
    for block in &mut meas.blocks {
        for v in block.iter_mut() {
            *v += sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
}

/// One CSV line per block.
pub fn measurements_to_csv(meas: &Measurements) -> String {
    let mut out = String::new();
    for y in &meas.blocks {
        let line: Vec<String> = y.iter().map(|v| format!("{v:.17e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Writes `<path>` as CSV and `<path>.json` carrying the operator sidecar.
pub fn save_measurements(
    meas: &Measurements,
    op: &CsOp,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    measurements_check(op, meas)?;
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    std::fs::write(path, measurements_to_csv(meas)).map_err(io_err)?;
    let sidecar_path = sidecar_path(path);
    let json = serde_json::to_string_pretty(&op.sidecar(meas.width, meas.height))
        .expect("sidecar serializes");
    std::fs::write(&sidecar_path, json).map_err(|source| Error::Io {
        path: sidecar_path.clone(),
        source,
    })
}

pub fn sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    let mut os = csv_path.as_os_str().to_os_string();
    os.push(".json");
    std::path::PathBuf::from(os)
}

/// Reads measurements written by [`save_measurements`], regenerating the
/// operator from the sidecar.
pub fn load_measurements(path: impl AsRef<Path>) -> Result<(Measurements, CsOp)> {
    let path = path.as_ref();
    let io_err = |p: &Path| {
        let p = p.to_path_buf();
        move |source| Error::Io { path: p, source }
    };
    let sidecar_file = sidecar_path(path);
    let sidecar_text = std::fs::read_to_string(&sidecar_file).map_err(io_err(&sidecar_file))?;
    let sidecar: CsSidecar =
        serde_json::from_str(&sidecar_text).map_err(|e| Error::MalformedFile {
            path: sidecar_file.clone(),
            detail: e.to_string(),
        })?;
    let op = make_cs_op(sidecar.block, sidecar.ratio, sidecar.seed)?;

    let csv = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut blocks = Vec::new();
    for (lineno, line) in csv.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let values: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|t| t.trim().parse::<f64>()).collect();
        let values = values.map_err(|e| Error::MalformedFile {
            path: path.to_path_buf(),
            detail: format!("line {}: {e}", lineno + 1),
        })?;
        blocks.push(DVector::from_vec(values));
    }
    let meas = Measurements {
        width: sidecar.width,
        height: sidecar.height,
        block: sidecar.block,
        blocks,
    };
    measurements_check(&op, &meas)?;
    Ok((meas, op))
}
