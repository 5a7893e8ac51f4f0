//! Grayscale image representation, binary PGM I/O, PSNR, and the
//! patch extraction / overlap-averaged aggregation pair used by the solver.

use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A grayscale raster with row-major `f64` samples.
///
/// Pixel values are nominally in `[0, 255]`; intermediate solver iterates may
/// step outside that range and are only clamped when written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

/// Top-left corner of a patch, in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatchCoord {
    pub row: usize,
    pub col: usize,
}

impl PatchCoord {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// True when a `d`-sided patch anchored here lies inside `width`x`height`.
    pub fn in_bounds(&self, width: usize, height: usize, d: usize) -> bool {
        self.row + d <= height && self.col + d <= width
    }
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ShapeMismatch {
                detail: format!("image dimensions must be positive, got {width}x{height}"),
            });
        }
        if data.len() != width * height {
            return Err(Error::ShapeMismatch {
                detail: format!(
                    "image data holds {} samples, {}x{} needs {}",
                    data.len(),
                    width,
                    height,
                    width * height
                ),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    /// Builds an image by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.height && col < self.width);
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.height && col < self.width);
        self.data[row * self.width + col] = value;
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    fn dims_check(&self, other: &Image) -> Result<()> {
        if !self.same_dims(other) {
            return Err(Error::DimensionMismatch {
                expected_width: self.width,
                expected_height: self.height,
                found_width: other.width,
                found_height: other.height,
            });
        }
        Ok(())
    }

    /// Clamps every sample to `[0, 255]` in place.
    pub fn clamp_to_range(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 255.0);
        }
    }

    /// Quantizes a sample the way `save_pgm` does: clamp to `[0, 255]`,
    /// then round half away from zero.
    pub fn quantize(value: f64) -> u8 {
        value.clamp(0.0, 255.0).round() as u8
    }
}

fn is_pgm_whitespace(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\r' | b'\n')
}

/// Cursor over PGM header bytes; skips whitespace and `#` comments.
struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn skip_separators(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if is_pgm_whitespace(b) {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn next_token(&mut self) -> Result<&'a [u8]> {
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.bytes.len()
            && !is_pgm_whitespace(self.bytes[self.pos])
            && self.bytes[self.pos] != b'#'
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::MalformedHeader {
                detail: "unexpected end of header".into(),
            });
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn next_number(&mut self, what: &str) -> Result<u64> {
        let token = self.next_token()?;
        std::str::from_utf8(token)
            .ok()
            .and_then(|s| s.parse::<u64>().ok())
            .ok_or_else(|| Error::MalformedHeader {
                detail: format!("{what} is not a decimal number"),
            })
    }
}

/// Reads a binary (`P5`) 8-bit PGM file.
///
/// `#` comments are tolerated anywhere in the header. The payload byte at
/// row `r`, column `c` lands at data index `r * width + c`.
pub fn load_pgm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;

    let mut cursor = HeaderCursor::new(&bytes);
    let magic = cursor.next_token()?;
    if magic != b"P5" {
        return Err(Error::UnsupportedFormat {
            found: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let width = cursor.next_number("width")?;
    let height = cursor.next_number("height")?;
    let maxval = cursor.next_number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader {
            detail: format!("degenerate dimensions {width}x{height}"),
        });
    }
    if maxval != 255 {
        return Err(Error::UnsupportedMaxval { maxval });
    }
    // Exactly one whitespace byte separates the header from the payload.
    if cursor.pos >= bytes.len() || !is_pgm_whitespace(bytes[cursor.pos]) {
        return Err(Error::MalformedHeader {
            detail: "missing separator before pixel payload".into(),
        });
    }
    let payload = &bytes[cursor.pos + 1..];

    let expected = (width * height) as usize;
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    let data = payload[..expected].iter().map(|&b| f64::from(b)).collect();
    Image::new(width as usize, height as usize, data)
}

/// Writes a binary (`P5`) 8-bit PGM file.
///
/// Samples are clamped to `[0, 255]` and rounded half away from zero.
/// The header is exactly `P5\n<w> <h>\n255\n`; comments are never written.
pub fn save_pgm(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut writer = BufWriter::new(file);
    writer
        .write_all(pgm_bytes(img).as_slice())
        .and_then(|_| writer.flush())
        .map_err(io_err)
}

/// The exact byte stream `save_pgm` writes.
pub fn pgm_bytes(img: &Image) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + img.data.len());
    out.extend_from_slice(header.as_bytes());
    out.extend(img.data.iter().map(|&v| Image::quantize(v)));
    out
}

/// Peak signal-to-noise ratio in decibels: `10 log10(255^2 / MSE)`.
///
/// Returns `f64::INFINITY` when the images are identical.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    a.dims_check(b)?;
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}

/// Extracts the `d`x`d` patch at `coord` as a column-major `d^2` vector.
pub fn extract_patch(img: &Image, coord: PatchCoord, d: usize) -> Result<DVector<f64>> {
    if !coord.in_bounds(img.width, img.height, d) {
        return Err(Error::OutOfBounds {
            row: coord.row,
            col: coord.col,
            patch: d,
            width: img.width,
            height: img.height,
        });
    }
    let mut out = DVector::zeros(d * d);
    let mut i = 0;
    for c in 0..d {
        for r in 0..d {
            out[i] = img.get(coord.row + r, coord.col + c);
            i += 1;
        }
    }
    Ok(out)
}

/// Writes patch groups back into an image, averaging overlaps.
///
/// Each group pairs a `d^2 x k` matrix with the `k` coordinates its columns
/// came from. Every covered pixel becomes the mean of all contributions;
/// uncovered pixels copy `fallback`.
pub fn aggregate_groups(
    groups: &[(DMatrix<f64>, Vec<PatchCoord>)],
    width: usize,
    height: usize,
    d: usize,
    fallback: &Image,
) -> Result<Image> {
    if fallback.width != width || fallback.height != height {
        return Err(Error::DimensionMismatch {
            expected_width: width,
            expected_height: height,
            found_width: fallback.width,
            found_height: fallback.height,
        });
    }
    let mut sum = vec![0.0f64; width * height];
    let mut count = vec![0u32; width * height];

    for (matrix, coords) in groups {
        if matrix.nrows() != d * d || matrix.ncols() != coords.len() {
            return Err(Error::ShapeMismatch {
                detail: format!(
                    "group matrix is {}x{}, expected {}x{}",
                    matrix.nrows(),
                    matrix.ncols(),
                    d * d,
                    coords.len()
                ),
            });
        }
        for (j, coord) in coords.iter().enumerate() {
            if !coord.in_bounds(width, height, d) {
                return Err(Error::OutOfBounds {
                    row: coord.row,
                    col: coord.col,
                    patch: d,
                    width,
                    height,
                });
            }
            let column = matrix.column(j);
            let mut i = 0;
            for c in 0..d {
                for r in 0..d {
                    let idx = (coord.row + r) * width + coord.col + c;
                    sum[idx] += column[i];
                    count[idx] += 1;
                    i += 1;
                }
            }
        }
    }

    let data = sum
        .iter()
        .zip(&count)
        .enumerate()
        .map(|(idx, (&s, &n))| {
            if n > 0 {
                s / f64::from(n)
            } else {
                fallback.data[idx]
            }
        })
        .collect();
    Image::new(width, height, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp_path(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("gslr-image-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn load_pgm_maps_bytes_directly() {
        let path = tmp_path("direct.pgm");
        std::fs::write(&path, b"P5\n2 2\n255\n\x00\x80\xff\x40").unwrap();
        let img = load_pgm(&path).unwrap();
        assert_eq!(img.width(), 2);
        assert_eq!(img.height(), 2);
        assert_eq!(img.data(), &[0.0, 128.0, 255.0, 64.0]);
    }

    #[test]
    fn load_pgm_tolerates_header_comments() {
        let path = tmp_path("comments.pgm");
        std::fs::write(&path, b"P5\n# made by hand\n2 1 # trailing\n255\n\x05\x06").unwrap();
        let img = load_pgm(&path).unwrap();
        assert_eq!(img.data(), &[5.0, 6.0]);
    }

    #[test]
    fn load_pgm_rejects_ascii_variant() {
        let path = tmp_path("ascii.pgm");
        std::fs::write(&path, b"P2\n2 2\n255\n0 1 2 3\n").unwrap();
        match load_pgm(&path) {
            Err(Error::UnsupportedFormat { found }) => assert_eq!(found, "P2"),
            other => panic!("expected UnsupportedFormat, got {other:?}"),
        }
    }

    #[test]
    fn load_pgm_rejects_wrong_maxval() {
        let path = tmp_path("maxval.pgm");
        std::fs::write(&path, b"P5\n1 1\n65535\n\x00\x00").unwrap();
        assert!(matches!(
            load_pgm(&path),
            Err(Error::UnsupportedMaxval { maxval: 65535 })
        ));
    }

    #[test]
    fn load_pgm_rejects_truncated_payload() {
        let path = tmp_path("short.pgm");
        std::fs::write(&path, b"P5\n2 2\n255\n\x00\x01").unwrap();
        assert!(matches!(
            load_pgm(&path),
            Err(Error::TruncatedPayload {
                expected: 4,
                found: 2
            })
        ));
    }

    #[test]
    fn load_pgm_reports_missing_file() {
        assert!(matches!(
            load_pgm(tmp_path("does-not-exist.pgm")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn save_pgm_clamps_and_rounds() {
        let img = Image::new(2, 2, vec![-3.2, 12.5, 300.0, 128.0]).unwrap();
        let path = tmp_path("clamp.pgm");
        save_pgm(&img, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..11], b"P5\n2 2\n255\n");
        assert_eq!(&bytes[11..], &[0u8, 13, 255, 128]);
    }

    #[test]
    fn save_then_load_round_trips_integer_images() {
        let img = Image::from_fn(13, 9, |r, c| ((r * 31 + c * 7) % 256) as f64);
        let path = tmp_path("roundtrip.pgm");
        save_pgm(&img, &path).unwrap();
        let back = load_pgm(&path).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn one_pixel_image_round_trips() {
        let img = Image::new(1, 1, vec![0.0]).unwrap();
        let path = tmp_path("tiny.pgm");
        save_pgm(&img, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes, b"P5\n1 1\n255\n\x00");
        assert_eq!(load_pgm(&path).unwrap(), img);
    }

    #[test]
    fn large_image_sample_count() {
        let img = Image::from_fn(512, 512, |r, c| ((r ^ c) % 256) as f64);
        let path = tmp_path("large.pgm");
        save_pgm(&img, &path).unwrap();
        assert_eq!(load_pgm(&path).unwrap().pixel_count(), 262_144);
    }

    #[test]
    fn psnr_identical_images_is_infinite() {
        let img = Image::filled(4, 4, 17.0);
        assert_eq!(psnr(&img, &img).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_unit_offset_hits_forced_mse() {
        let a = Image::from_fn(8, 8, |r, c| (r * 8 + c) as f64);
        let b = Image::from_fn(8, 8, |r, c| (r * 8 + c) as f64 + 1.0);
        let db = psnr(&a, &b).unwrap();
        assert!((db - 48.1308).abs() < 1e-3, "got {db}");
    }

    #[test]
    fn psnr_matches_direct_formula_oracle() {
        // Independent route: accumulate the MSE with indexed loops rather
        // than the iterator pipeline inside psnr.
        let a = Image::from_fn(16, 16, |r, c| ((r * 37 + c * 11) % 251) as f64 * 0.7);
        let b = Image::from_fn(16, 16, |r, c| ((r * 13 + c * 29) % 241) as f64 * 1.1);
        let mut acc = 0.0;
        for r in 0..16 {
            for c in 0..16 {
                let d = a.get(r, c) - b.get(r, c);
                acc += d * d;
            }
        }
        let oracle = 10.0 * (255.0f64 * 255.0 / (acc / 256.0)).log10();
        assert!((psnr(&a, &b).unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn psnr_rejects_dimension_mismatch() {
        let a = Image::filled(4, 4, 0.0);
        let b = Image::filled(4, 5, 0.0);
        assert!(matches!(
            psnr(&a, &b),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn extract_constant_patch() {
        let img = Image::filled(10, 10, 7.0);
        let v = extract_patch(&img, PatchCoord::new(1, 2), 7).unwrap();
        assert_eq!(v.len(), 49);
        assert!(v.iter().all(|&x| x == 7.0));
    }

    #[test]
    fn extract_patch_is_column_major() {
        let img = Image::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let v = extract_patch(&img, PatchCoord::new(0, 0), 2).unwrap();
        assert_eq!(v.as_slice(), &[1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn extract_patch_rejects_out_of_bounds() {
        let img = Image::filled(8, 8, 0.0);
        // height - d + 1 anchors one row too far down.
        let coord = PatchCoord::new(8 - 4 + 1, 0);
        assert!(matches!(
            extract_patch(&img, coord, 4),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn aggregate_single_patch_identity() {
        let img = Image::from_fn(3, 3, |r, c| (r * 3 + c) as f64);
        let patch = extract_patch(&img, PatchCoord::new(0, 0), 3).unwrap();
        let matrix = DMatrix::from_columns(&[patch]);
        let groups = vec![(matrix, vec![PatchCoord::new(0, 0)])];
        let out = aggregate_groups(&groups, 3, 3, 3, &Image::zeros(3, 3)).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn aggregate_averages_identical_overlaps() {
        let patch = DVector::from_element(4, 5.0);
        let matrix = DMatrix::from_columns(&[patch.clone(), patch]);
        let groups = vec![(matrix, vec![PatchCoord::new(0, 0), PatchCoord::new(0, 1)])];
        let out = aggregate_groups(&groups, 3, 2, 2, &Image::zeros(3, 2)).unwrap();
        // Overlap of equal contributions stays at the common value.
        for c in 0..3 {
            assert_eq!(out.get(0, c), 5.0);
            assert_eq!(out.get(1, c), 5.0);
        }
    }

    #[test]
    fn aggregate_keeps_fallback_on_uncovered_pixels() {
        let matrix = DMatrix::from_element(4, 1, 1.0);
        let groups = vec![(matrix, vec![PatchCoord::new(0, 0)])];
        let fallback = Image::filled(4, 4, 9.0);
        let out = aggregate_groups(&groups, 4, 4, 2, &fallback).unwrap();
        assert_eq!(out.get(0, 0), 1.0);
        assert_eq!(out.get(3, 3), 9.0);
    }

    #[test]
    fn aggregate_matches_brute_force_oracle() {
        // Oracle: accumulate contributions with a plain double loop over
        // every (group, column, pixel) triple, then divide by the count.
        let d = 3;
        let (w, h) = (7, 6);
        let mut groups = Vec::new();
        let coords = [
            vec![PatchCoord::new(0, 0), PatchCoord::new(2, 3), PatchCoord::new(3, 4)],
            vec![PatchCoord::new(1, 1), PatchCoord::new(0, 4)],
        ];
        for (g, cs) in coords.iter().enumerate() {
            let m = DMatrix::from_fn(d * d, cs.len(), |i, j| {
                ((g * 100 + j * 17 + i * 3) % 37) as f64 * 0.25
            });
            groups.push((m, cs.clone()));
        }
        let fallback = Image::filled(w, h, -1.0);

        let mut sum = vec![0.0; w * h];
        let mut cnt = vec![0usize; w * h];
        for (m, cs) in &groups {
            for (j, coord) in cs.iter().enumerate() {
                for c in 0..d {
                    for r in 0..d {
                        let idx = (coord.row + r) * w + coord.col + c;
                        sum[idx] += m[(c * d + r, j)];
                        cnt[idx] += 1;
                    }
                }
            }
        }
        let out = aggregate_groups(&groups, w, h, d, &fallback).unwrap();
        for idx in 0..w * h {
            let expect = if cnt[idx] > 0 {
                sum[idx] / cnt[idx] as f64
            } else {
                -1.0
            };
            assert!((out.data()[idx] - expect).abs() <= 1e-12);
        }
    }

    #[test]
    fn aggregate_rejects_column_coord_mismatch() {
        let matrix = DMatrix::from_element(4, 2, 1.0);
        let groups = vec![(matrix, vec![PatchCoord::new(0, 0)])];
        assert!(matches!(
            aggregate_groups(&groups, 4, 4, 2, &Image::zeros(4, 4)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn tiling_round_trip_reproduces_image() {
        let d = 4;
        let img = Image::from_fn(8, 8, |r, c| (r * 8 + c) as f64 * 0.5 - 3.0);
        let mut groups = Vec::new();
        for r in (0..8).step_by(d) {
            for c in (0..8).step_by(d) {
                let coord = PatchCoord::new(r, c);
                let patch = extract_patch(&img, coord, d).unwrap();
                groups.push((DMatrix::from_columns(&[patch]), vec![coord]));
            }
        }
        let out = aggregate_groups(&groups, 8, 8, d, &Image::zeros(8, 8)).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}
