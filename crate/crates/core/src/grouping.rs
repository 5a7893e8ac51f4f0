//! Nonlocal block matching: for each reference patch, find the `k` most
//! similar patches inside a search window and stack them into a group matrix.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::image::{extract_patch, Image, PatchCoord};

/// The membership of one patch group: the reference plus its `k - 1` nearest
/// neighbours by squared Euclidean patch distance, reference first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupIndex {
    pub reference: PatchCoord,
    pub members: Vec<PatchCoord>,
}

/// A group matrix together with where its columns came from.
///
/// Column `j` of `matrix` is the column-major vectorization of the patch at
/// `index.members[j]`.
#[derive(Debug, Clone)]
pub struct PatchGroup {
    pub matrix: DMatrix<f64>,
    pub index: GroupIndex,
}

/// Reference patch positions on a `stride` grid, with the last row and
/// column snapped to the image border so every pixel is covered.
///
/// Coordinates come back sorted row-major.
pub fn reference_coords(
    width: usize,
    height: usize,
    d: usize,
    stride: usize,
) -> Result<Vec<PatchCoord>> {
    if width < d || height < d {
        return Err(Error::ImageTooSmall {
            width,
            height,
            patch: d,
        });
    }
    if stride == 0 || stride > d {
        return Err(Error::InvalidConfig {
            detail: format!("stride {stride} must lie in 1..={d}"),
        });
    }
    let axis = |extent: usize| {
        let last = extent - d;
        let mut points: Vec<usize> = (0..=last).step_by(stride).collect();
        if *points.last().unwrap() != last {
            points.push(last);
        }
        points
    };
    let rows = axis(height);
    let cols = axis(width);
    let mut coords = Vec::with_capacity(rows.len() * cols.len());
    for &r in &rows {
        for &c in &cols {
            coords.push(PatchCoord::new(r, c));
        }
    }
    Ok(coords)
}

/// Candidate patch positions of the `window`x`window` search region centered
/// on `reference`, clipped to valid patch anchors, in row-major order.
fn window_candidates(
    reference: PatchCoord,
    window: usize,
    d: usize,
    width: usize,
    height: usize,
) -> Vec<PatchCoord> {
    let lo = |center: usize| center.saturating_sub((window - 1) / 2);
    let hi = |center: usize, last: usize| (center + window / 2).min(last);
    let row_lo = lo(reference.row);
    let row_hi = hi(reference.row, height - d);
    let col_lo = lo(reference.col);
    let col_hi = hi(reference.col, width - d);
    let mut out = Vec::with_capacity((row_hi - row_lo + 1) * (col_hi - col_lo + 1));
    for r in row_lo..=row_hi {
        for c in col_lo..=col_hi {
            out.push(PatchCoord::new(r, c));
        }
    }
    out
}

fn patch_distance(img: &Image, a: PatchCoord, b: PatchCoord, d: usize) -> f64 {
    let mut acc = 0.0;
    for r in 0..d {
        for c in 0..d {
            let diff = img.get(a.row + r, a.col + c) - img.get(b.row + r, b.col + c);
            acc += diff * diff;
        }
    }
    acc
}

/// Selects the `k` patches most similar to the one at `reference` inside an
/// `window`x`window` search region (candidate step 1 pixel, clipped at the
/// borders). Ties break in row-major candidate order; the reference itself
/// always occupies slot 0.
pub fn match_group(
    img: &Image,
    reference: PatchCoord,
    d: usize,
    k: usize,
    window: usize,
) -> Result<GroupIndex> {
    if !reference.in_bounds(img.width(), img.height(), d) {
        return Err(Error::OutOfBounds {
            row: reference.row,
            col: reference.col,
            patch: d,
            width: img.width(),
            height: img.height(),
        });
    }
    if k == 0 {
        return Err(Error::InvalidConfig {
            detail: "group size k must be at least 1".into(),
        });
    }
    let candidates = window_candidates(reference, window, d, img.width(), img.height());
    if candidates.len() < k {
        return Err(Error::NotEnoughCandidates {
            found: candidates.len(),
            needed: k,
        });
    }

    let mut scored: Vec<(f64, PatchCoord)> = candidates
        .into_iter()
        .filter(|&c| c != reference)
        .map(|c| (patch_distance(img, reference, c, d), c))
        .collect();
    // Stable sort keeps row-major enumeration order among equal distances.
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut members = Vec::with_capacity(k);
    members.push(reference);
    members.extend(scored.iter().take(k - 1).map(|&(_, c)| c));
    Ok(GroupIndex { reference, members })
}

/// Stacks the member patches of `gi` into a `d^2 x k` matrix.
pub fn gather(img: &Image, gi: &GroupIndex, d: usize) -> Result<PatchGroup> {
    let mut columns = Vec::with_capacity(gi.members.len());
    for &coord in &gi.members {
        columns.push(extract_patch(img, coord, d)?);
    }
    Ok(PatchGroup {
        matrix: DMatrix::from_columns(&columns),
        index: gi.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_patch_image_yields_one_coord() {
        let coords = reference_coords(8, 8, 8, 4).unwrap();
        assert_eq!(coords, vec![PatchCoord::new(0, 0)]);
    }

    #[test]
    fn coords_snap_to_border() {
        // 10x10, d=8, stride=4: the stride grid gives {0}, the snap adds 2.
        let coords = reference_coords(10, 10, 8, 4).unwrap();
        let expect: Vec<PatchCoord> = [(0, 0), (0, 2), (2, 0), (2, 2)]
            .iter()
            .map(|&(r, c)| PatchCoord::new(r, c))
            .collect();
        assert_eq!(coords, expect);
    }

    #[test]
    fn coords_reject_small_image() {
        assert!(matches!(
            reference_coords(5, 9, 8, 4),
            Err(Error::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn coords_cover_every_pixel() {
        // Coverage oracle: brute-force paint every patch footprint.
        for &(w, h, d, stride) in &[(17usize, 11usize, 5usize, 3usize), (23, 29, 7, 7), (9, 8, 4, 1)] {
            let coords = reference_coords(w, h, d, stride).unwrap();
            let mut covered = vec![false; w * h];
            for coord in &coords {
                for r in 0..d {
                    for c in 0..d {
                        covered[(coord.row + r) * w + coord.col + c] = true;
                    }
                }
            }
            assert!(
                covered.iter().all(|&b| b),
                "uncovered pixel for {w}x{h} d={d} stride={stride}"
            );
        }
    }

    #[test]
    fn k_one_returns_reference_only() {
        let img = Image::from_fn(16, 16, |r, c| (r * 16 + c) as f64);
        let gi = match_group(&img, PatchCoord::new(5, 6), 4, 1, 8).unwrap();
        assert_eq!(gi.members, vec![PatchCoord::new(5, 6)]);
    }

    #[test]
    fn constant_image_ties_break_row_major() {
        let img = Image::filled(16, 16, 3.0);
        // Reference at the window's row-major head, so the tie rule selects
        // the first five window positions verbatim.
        let gi = match_group(&img, PatchCoord::new(0, 0), 4, 5, 8).unwrap();
        let expect: Vec<PatchCoord> = [(0, 0), (0, 1), (0, 2), (0, 3), (0, 4)]
            .iter()
            .map(|&(r, c)| PatchCoord::new(r, c))
            .collect();
        assert_eq!(gi.members, expect);
    }

    #[test]
    fn match_rejects_undersized_window() {
        let img = Image::filled(8, 8, 0.0);
        // d=8 leaves a single anchor, so k=2 cannot be met.
        assert!(matches!(
            match_group(&img, PatchCoord::new(0, 0), 8, 2, 25),
            Err(Error::NotEnoughCandidates { found: 1, needed: 2 })
        ));
    }

    fn lcg_image(w: usize, h: usize, seed: u64) -> Image {
        let mut state = seed;
        Image::from_fn(w, h, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) as f64 / (1u64 << 31) as f64 * 255.0
        })
    }

    #[test]
    fn match_agrees_with_exhaustive_sort_oracle() {
        let img = lcg_image(32, 32, 7);
        let (d, k, window) = (4, 8, 16);
        let reference = PatchCoord::new(13, 9);
        let gi = match_group(&img, reference, d, k, window).unwrap();

        // Oracle: score every window candidate via extract_patch and a full
        // sort, then compare member sets.
        let refp = extract_patch(&img, reference, d).unwrap();
        let mut scored = Vec::new();
        for cand in window_candidates(reference, window, d, 32, 32) {
            let p = extract_patch(&img, cand, d).unwrap();
            scored.push(((&p - &refp).norm_squared(), cand));
        }
        scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut expect: Vec<PatchCoord> = scored.iter().take(k).map(|&(_, c)| c).collect();
        let mut got = gi.members.clone();
        expect.sort();
        got.sort();
        assert_eq!(got, expect);
    }

    #[test]
    fn member_distances_are_sorted_and_dominate_excluded() {
        let img = lcg_image(24, 24, 99);
        let (d, k, window) = (5, 6, 12);
        let reference = PatchCoord::new(10, 11);
        let gi = match_group(&img, reference, d, k, window).unwrap();

        let dist = |c: PatchCoord| patch_distance(&img, reference, c, d);
        let member_dists: Vec<f64> = gi.members.iter().map(|&c| dist(c)).collect();
        for pair in member_dists.windows(2).skip(1) {
            assert!(pair[0] <= pair[1]);
        }
        let worst = member_dists.last().copied().unwrap();
        for cand in window_candidates(reference, window, d, 24, 24) {
            if !gi.members.contains(&cand) {
                assert!(dist(cand) >= worst);
            }
        }
    }

    #[test]
    fn match_is_invariant_under_constant_shift() {
        let img = lcg_image(20, 20, 3);
        let shifted = Image::from_fn(20, 20, |r, c| img.get(r, c) + 42.0);
        let reference = PatchCoord::new(7, 5);
        let a = match_group(&img, reference, 4, 6, 10).unwrap();
        let b = match_group(&shifted, reference, 4, 6, 10).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gather_columns_match_extract_patch() {
        let img = lcg_image(18, 18, 11);
        let gi = match_group(&img, PatchCoord::new(4, 6), 3, 5, 9).unwrap();
        let group = gather(&img, &gi, 3).unwrap();
        assert_eq!(group.matrix.ncols(), 5);
        for (j, &coord) in gi.members.iter().enumerate() {
            let patch = extract_patch(&img, coord, 3).unwrap();
            assert_eq!(group.matrix.column(j), patch.column(0));
        }
    }

    #[test]
    fn gather_constant_image_is_rank_one() {
        let img = Image::filled(12, 12, 4.0);
        let gi = match_group(&img, PatchCoord::new(2, 2), 3, 4, 8).unwrap();
        let group = gather(&img, &gi, 3).unwrap();
        assert!(group.matrix.iter().all(|&v| v == 4.0));
        assert_eq!(group.matrix.rank(1e-9), 1);
    }

    #[test]
    fn gather_single_member_equals_reference_patch() {
        let img = lcg_image(10, 10, 1);
        let reference = PatchCoord::new(3, 3);
        let gi = GroupIndex {
            reference,
            members: vec![reference],
        };
        let group = gather(&img, &gi, 4).unwrap();
        let patch = extract_patch(&img, reference, 4).unwrap();
        assert_eq!(group.matrix.column(0), patch.column(0));
    }
}
