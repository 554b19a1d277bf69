//! Binary-bitmap analysis for 8x16 glyph images.
//!
//! Pixel centers sit at integer coordinates: x = column 1..=8, y = row
//! 1..=16, with y increasing downward. Orientation angles are reported in
//! degrees within (-90, 90], measured from the horizontal axis and
//! counterclockwise-positive after flipping y into mathematical orientation.

use crate::error::{Error, Result};

/// Glyph bitmap width in pixels.
pub const WIDTH: usize = 8;
/// Glyph bitmap height in pixels.
pub const HEIGHT: usize = 16;
/// Total number of pixels per bitmap.
pub const PIXELS: usize = WIDTH * HEIGHT;

/// An 8x16 binary image stored row-major in a 128-bit word.
///
/// Bit `row * 8 + col` holds the pixel at (col, row), both 0-based.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Bitmap {
    bits: u128,
}

impl Bitmap {
    pub fn empty() -> Self {
        Bitmap { bits: 0 }
    }

    pub fn from_bits(bits: u128) -> Self {
        Bitmap { bits }
    }

    /// Builds a bitmap from 128 row-major pixel values.
    pub fn from_pixels(pixels: &[u8]) -> Result<Self> {
        if pixels.len() != PIXELS {
            return Err(Error::InvalidArgument(format!(
                "expected {PIXELS} pixels, got {}",
                pixels.len()
            )));
        }
        let mut bits = 0u128;
        for (i, &p) in pixels.iter().enumerate() {
            match p {
                0 => {}
                1 => bits |= 1u128 << i,
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "non-binary pixel value {p} at index {i}"
                    )))
                }
            }
        }
        Ok(Bitmap { bits })
    }

    /// Builds a bitmap by evaluating `f(col, row)` for every pixel.
    pub fn from_fn(mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = 0u128;
        for row in 0..HEIGHT {
            for col in 0..WIDTH {
                if f(col, row) {
                    bits |= 1u128 << (row * WIDTH + col);
                }
            }
        }
        Bitmap { bits }
    }

    pub fn bits(self) -> u128 {
        self.bits
    }

    pub fn get(self, col: usize, row: usize) -> bool {
        debug_assert!(col < WIDTH && row < HEIGHT);
        self.bits >> (row * WIDTH + col) & 1 == 1
    }

    pub fn set(&mut self, col: usize, row: usize, value: bool) {
        let mask = 1u128 << (row * WIDTH + col);
        if value {
            self.bits |= mask;
        } else {
            self.bits &= !mask;
        }
    }

    pub fn count_active(self) -> u32 {
        self.bits.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.bits == 0
    }

    /// Active pixels as (col, row), in row-major order.
    pub fn active_pixels(self) -> impl Iterator<Item = (usize, usize)> {
        let bits = self.bits;
        (0..PIXELS)
            .filter(move |i| bits >> i & 1 == 1)
            .map(|i| (i % WIDTH, i / WIDTH))
    }

    /// Row-major pixel values as 0/1.
    pub fn pixels(self) -> impl Iterator<Item = u8> {
        let bits = self.bits;
        (0..PIXELS).map(move |i| (bits >> i & 1) as u8)
    }

    /// Renders the bitmap as 16 lines of `.`/`#`, for fixtures and debugging.
    pub fn to_art(self) -> String {
        let mut out = String::with_capacity(HEIGHT * (WIDTH + 1));
        for row in 0..HEIGHT {
            for col in 0..WIDTH {
                out.push(if self.get(col, row) { '#' } else { '.' });
            }
            out.push('\n');
        }
        out
    }

    /// Parses the `to_art` format; blank lines and indentation are ignored.
    pub fn from_art(art: &str) -> Result<Self> {
        let rows: Vec<&str> = art
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        if rows.len() != HEIGHT {
            return Err(Error::InvalidArgument(format!(
                "expected {HEIGHT} rows, got {}",
                rows.len()
            )));
        }
        let mut bitmap = Bitmap::empty();
        for (row, line) in rows.iter().enumerate() {
            if line.chars().count() != WIDTH {
                return Err(Error::InvalidArgument(format!(
                    "row {row} has {} columns, expected {WIDTH}",
                    line.chars().count()
                )));
            }
            for (col, c) in line.chars().enumerate() {
                match c {
                    '#' => bitmap.set(col, row, true),
                    '.' => {}
                    _ => {
                        return Err(Error::InvalidArgument(format!(
                            "unexpected character {c:?} at row {row}"
                        )))
                    }
                }
            }
        }
        Ok(bitmap)
    }
}

impl std::fmt::Debug for Bitmap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Bitmap(\n{})", self.to_art())
    }
}

/// Neighborhood used when labelling connected pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

/// First and second central moments of the active pixels, in image
/// coordinates (y down). Second moments are means of deviations, not sums.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentralMoments {
    pub count: usize,
    pub centroid_x: f64,
    pub centroid_y: f64,
    pub mu20: f64,
    pub mu02: f64,
    pub mu11: f64,
}

/// Computes centroid and second central moments over the active pixels.
///
/// Accumulation runs in two passes over active pixels in row-major order so
/// that a brute-force double loop over all cells reproduces it bit for bit.
pub fn central_moments(bitmap: Bitmap) -> Result<CentralMoments> {
    if bitmap.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let mut count = 0usize;
    let mut sum_x = 0.0;
    let mut sum_y = 0.0;
    for (col, row) in bitmap.active_pixels() {
        count += 1;
        sum_x += (col + 1) as f64;
        sum_y += (row + 1) as f64;
    }
    let n = count as f64;
    let cx = sum_x / n;
    let cy = sum_y / n;

    let mut mu20 = 0.0;
    let mut mu02 = 0.0;
    let mut mu11 = 0.0;
    for (col, row) in bitmap.active_pixels() {
        let dx = (col + 1) as f64 - cx;
        let dy = (row + 1) as f64 - cy;
        mu20 += dx * dx;
        mu02 += dy * dy;
        mu11 += dx * dy;
    }
    Ok(CentralMoments {
        count,
        centroid_x: cx,
        centroid_y: cy,
        mu20: mu20 / n,
        mu02: mu02 / n,
        mu11: mu11 / n,
    })
}

/// Statistics of the moment-equivalent ellipse of a glyph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseStats {
    pub centroid_x: f64,
    pub centroid_y: f64,
    /// Major-axis angle in degrees, (-90, 90], from horizontal.
    pub orientation: f64,
    pub major_axis: f64,
    pub minor_axis: f64,
    pub eccentricity: f64,
}

/// Centroid, orientation, axis lengths and eccentricity of the ellipse with
/// the same second moments as the active pixels.
///
/// Axis lengths are `4 * sqrt(eigenvalue)` of the pixel-coordinate
/// covariance, with no pixel-extent correction. Shapes with equal
/// eigenvalues and zero cross moment report orientation 0.
pub fn ellipse_stats(bitmap: Bitmap) -> Result<EllipseStats> {
    let m = central_moments(bitmap)?;

    // Flip y into mathematical orientation: only the cross moment changes sign.
    let mu11_math = -m.mu11;
    let mut numerator = 2.0 * mu11_math;
    if numerator == 0.0 {
        numerator = 0.0; // normalize -0.0 so atan2 picks +pi on the vertical case
    }
    let orientation = (0.5 * numerator.atan2(m.mu20 - m.mu02)).to_degrees();

    let spread = ((m.mu20 - m.mu02).powi(2) + 4.0 * m.mu11 * m.mu11).sqrt();
    let lambda_max = ((m.mu20 + m.mu02 + spread) / 2.0).max(0.0);
    let lambda_min = ((m.mu20 + m.mu02 - spread) / 2.0).max(0.0);

    let eccentricity = if lambda_max > 0.0 {
        (1.0 - (lambda_min / lambda_max).clamp(0.0, 1.0)).sqrt()
    } else {
        0.0
    };

    Ok(EllipseStats {
        centroid_x: m.centroid_x,
        centroid_y: m.centroid_y,
        orientation,
        major_axis: 4.0 * lambda_max.sqrt(),
        minor_axis: 4.0 * lambda_min.sqrt(),
        eccentricity,
    })
}

/// Rotates the glyph so that its major axis becomes vertical.
///
/// The output is the inverse-mapped rotation by `90 - orientation` degrees
/// about the centroid with nearest-neighbor sampling, clipped to the 8x16
/// frame. Degenerate inputs (empty bitmap) pass through unchanged.
pub fn rotate_upright(bitmap: Bitmap, orientation: f64) -> Bitmap {
    let Ok(m) = central_moments(bitmap) else {
        return bitmap;
    };
    let theta = (90.0 - orientation).to_radians();
    let (sin, cos) = theta.sin_cos();
    Bitmap::from_fn(|col, row| {
        let dx = (col + 1) as f64 - m.centroid_x;
        let dy = (row + 1) as f64 - m.centroid_y;
        // Inverse rotation in image coordinates (y down, CCW-positive in
        // mathematical orientation).
        let src_x = m.centroid_x + cos * dx - sin * dy;
        let src_y = m.centroid_y + sin * dx + cos * dy;
        let sx = src_x.round();
        let sy = src_y.round();
        if (1.0..=WIDTH as f64).contains(&sx) && (1.0..=HEIGHT as f64).contains(&sy) {
            bitmap.get(sx as usize - 1, sy as usize - 1)
        } else {
            false
        }
    })
}

/// Counts foreground connected components at the requested connectivity.
pub fn connected_objects(bitmap: Bitmap, connectivity: Connectivity) -> usize {
    let mut seen = 0u128;
    let mut components = 0;
    let mut stack = Vec::with_capacity(32);
    for start in 0..PIXELS {
        if bitmap.bits >> start & 1 == 0 || seen >> start & 1 == 1 {
            continue;
        }
        components += 1;
        seen |= 1u128 << start;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (col, row) = (i % WIDTH, i / WIDTH);
            for (nc, nr) in neighbors(col, row, connectivity) {
                let j = nr * WIDTH + nc;
                if bitmap.bits >> j & 1 == 1 && seen >> j & 1 == 0 {
                    seen |= 1u128 << j;
                    stack.push(j);
                }
            }
        }
    }
    components
}

/// Counts interior holes: 4-connected background components of the bitmap
/// padded with one background ring, minus the outer background.
pub fn count_holes(bitmap: Bitmap) -> usize {
    // Padded grid is (WIDTH + 2) x (HEIGHT + 2); cell (c, r) of the bitmap
    // maps to padded (c + 1, r + 1).
    const PW: usize = WIDTH + 2;
    const PH: usize = HEIGHT + 2;
    let foreground = |c: usize, r: usize| {
        c >= 1 && c <= WIDTH && r >= 1 && r <= HEIGHT && bitmap.get(c - 1, r - 1)
    };
    let mut seen = [false; PW * PH];
    let mut components = 0;
    let mut stack = Vec::with_capacity(64);
    for start in 0..PW * PH {
        let (c, r) = (start % PW, start / PW);
        if foreground(c, r) || seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        stack.push((c, r));
        while let Some((c, r)) = stack.pop() {
            let mut visit = |nc: usize, nr: usize| {
                let j = nr * PW + nc;
                if !foreground(nc, nr) && !seen[j] {
                    seen[j] = true;
                    stack.push((nc, nr));
                }
            };
            if c > 0 {
                visit(c - 1, r);
            }
            if c + 1 < PW {
                visit(c + 1, r);
            }
            if r > 0 {
                visit(c, r - 1);
            }
            if r + 1 < PH {
                visit(c, r + 1);
            }
        }
    }
    components - 1
}

/// Counts unit edges between a foreground pixel and a 4-neighbor background
/// pixel; the frame boundary counts as background.
pub fn perimeter_length(bitmap: Bitmap) -> usize {
    let mut edges = 0;
    for (col, row) in bitmap.active_pixels() {
        let exposed = |c: isize, r: isize| {
            c < 0
                || r < 0
                || c >= WIDTH as isize
                || r >= HEIGHT as isize
                || !bitmap.get(c as usize, r as usize)
        };
        let (c, r) = (col as isize, row as isize);
        edges += usize::from(exposed(c - 1, r));
        edges += usize::from(exposed(c + 1, r));
        edges += usize::from(exposed(c, r - 1));
        edges += usize::from(exposed(c, r + 1));
    }
    edges
}

/// Active-pixel counts in the four 4x8 quadrants, ordered top-left,
/// top-right, bottom-left, bottom-right.
pub fn quadrant_counts(bitmap: Bitmap) -> [usize; 4] {
    let mut counts = [0usize; 4];
    for (col, row) in bitmap.active_pixels() {
        let quadrant = usize::from(row >= HEIGHT / 2) * 2 + usize::from(col >= WIDTH / 2);
        counts[quadrant] += 1;
    }
    counts
}

/// Object/hole/perimeter/quadrant statistics bundled for feature extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionStats {
    pub object_count: usize,
    pub hole_count: usize,
    pub perimeter: usize,
    pub quadrant_counts: [usize; 4],
    pub active_pixels: usize,
}

pub fn region_stats(bitmap: Bitmap) -> RegionStats {
    RegionStats {
        object_count: connected_objects(bitmap, Connectivity::Eight),
        hole_count: count_holes(bitmap),
        perimeter: perimeter_length(bitmap),
        quadrant_counts: quadrant_counts(bitmap),
        active_pixels: bitmap.count_active() as usize,
    }
}

fn neighbors(
    col: usize,
    row: usize,
    connectivity: Connectivity,
) -> impl Iterator<Item = (usize, usize)> {
    const FOUR: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
    const DIAG: [(isize, isize); 4] = [(-1, -1), (1, -1), (-1, 1), (1, 1)];
    let take_diag = connectivity == Connectivity::Eight;
    FOUR.iter()
        .chain(DIAG.iter().filter(move |_| take_diag))
        .filter_map(move |&(dc, dr)| {
            let nc = col as isize + dc;
            let nr = row as isize + dr;
            (nc >= 0 && nr >= 0 && nc < WIDTH as isize && nr < HEIGHT as isize)
                .then_some((nc as usize, nr as usize))
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Brute-force moment oracle: double loop over all 128 cells.
    fn brute_force_moments(bitmap: Bitmap) -> CentralMoments {
        let mut count = 0usize;
        let mut sum_x = 0.0;
        let mut sum_y = 0.0;
        for row in 0..HEIGHT {
            for col in 0..WIDTH {
                if bitmap.get(col, row) {
                    count += 1;
                    sum_x += (col + 1) as f64;
                    sum_y += (row + 1) as f64;
                }
            }
        }
        let n = count as f64;
        let cx = sum_x / n;
        let cy = sum_y / n;
        let (mut mu20, mut mu02, mut mu11) = (0.0, 0.0, 0.0);
        for row in 0..HEIGHT {
            for col in 0..WIDTH {
                if bitmap.get(col, row) {
                    let dx = (col + 1) as f64 - cx;
                    let dy = (row + 1) as f64 - cy;
                    mu20 += dx * dx;
                    mu02 += dy * dy;
                    mu11 += dx * dy;
                }
            }
        }
        CentralMoments {
            count,
            centroid_x: cx,
            centroid_y: cy,
            mu20: mu20 / n,
            mu02: mu02 / n,
            mu11: mu11 / n,
        }
    }

    /// Independent hole oracle: union-find over the padded background.
    fn brute_force_holes(bitmap: Bitmap) -> usize {
        const PW: usize = WIDTH + 2;
        const PH: usize = HEIGHT + 2;
        fn find(parent: &mut Vec<usize>, i: usize) -> usize {
            if parent[i] != i {
                let root = find(parent, parent[i]);
                parent[i] = root;
            }
            parent[i]
        }
        let background = |c: usize, r: usize| {
            !(c >= 1 && c <= WIDTH && r >= 1 && r <= HEIGHT && bitmap.get(c - 1, r - 1))
        };
        let mut parent: Vec<usize> = (0..PW * PH).collect();
        for r in 0..PH {
            for c in 0..PW {
                if !background(c, r) {
                    continue;
                }
                if c > 0 && background(c - 1, r) {
                    let (a, b) = (find(&mut parent, r * PW + c), find(&mut parent, r * PW + c - 1));
                    parent[a] = b;
                }
                if r > 0 && background(c, r - 1) {
                    let (a, b) = (find(&mut parent, r * PW + c), find(&mut parent, (r - 1) * PW + c));
                    parent[a] = b;
                }
            }
        }
        let mut roots = std::collections::HashSet::new();
        for r in 0..PH {
            for c in 0..PW {
                if background(c, r) {
                    let root = find(&mut parent, r * PW + c);
                    roots.insert(root);
                }
            }
        }
        roots.len() - 1
    }

    fn full_rect() -> Bitmap {
        Bitmap::from_fn(|_, _| true)
    }

    #[test]
    fn ellipse_of_full_rectangle() {
        let stats = ellipse_stats(full_rect()).unwrap();
        assert_relative_eq!(stats.centroid_x, 4.5);
        assert_relative_eq!(stats.centroid_y, 8.5);
        // Vertical major axis.
        assert_relative_eq!(stats.orientation, 90.0);
        // Discrete variance of 1..n is (n^2 - 1) / 12.
        let var_x: f64 = 63.0 / 12.0;
        let var_y: f64 = 255.0 / 12.0;
        assert_relative_eq!(stats.major_axis, 4.0 * var_y.sqrt());
        assert_relative_eq!(stats.minor_axis, 4.0 * var_x.sqrt());
        assert_relative_eq!(stats.eccentricity, (1.0f64 - var_x / var_y).sqrt());
        assert!((stats.eccentricity - 0.868).abs() < 1e-3);
    }

    #[test]
    fn ellipse_of_square_is_degenerate() {
        // Solid 8x8 square in the top half: equal eigenvalues, mu11 = 0.
        let square = Bitmap::from_fn(|_, row| row < 8);
        let m = central_moments(square).unwrap();
        assert_relative_eq!(m.mu11, 0.0);
        assert_relative_eq!(m.mu20, m.mu02);
        let stats = ellipse_stats(square).unwrap();
        assert_relative_eq!(stats.eccentricity, 0.0);
        assert_relative_eq!(stats.orientation, 0.0);
    }

    #[test]
    fn ellipse_of_diagonal() {
        let diag = Bitmap::from_fn(|col, row| row == col);
        let m = brute_force_moments(diag);
        // x = y on the diagonal, so the cross moment equals the variances.
        assert_relative_eq!(m.mu11, m.mu20);
        let stats = ellipse_stats(diag).unwrap();
        // Down-right in image coordinates is -45 degrees under the
        // y-flipped counterclockwise-positive convention.
        assert_relative_eq!(stats.orientation, -45.0);
        assert_relative_eq!(stats.orientation.abs(), 45.0);
    }

    #[test]
    fn empty_bitmap_is_an_error() {
        assert!(matches!(
            ellipse_stats(Bitmap::empty()),
            Err(Error::EmptyRegion)
        ));
    }

    #[test]
    fn single_pixel_ellipse() {
        let mut b = Bitmap::empty();
        b.set(3, 5, true);
        let stats = ellipse_stats(b).unwrap();
        assert_relative_eq!(stats.centroid_x, 4.0);
        assert_relative_eq!(stats.centroid_y, 6.0);
        assert_relative_eq!(stats.major_axis, 0.0);
        assert_relative_eq!(stats.eccentricity, 0.0);
        assert_relative_eq!(stats.orientation, 0.0);
    }

    #[test]
    fn rotate_vertical_bitmap_is_identity() {
        let bar = Bitmap::from_fn(|col, row| col == 3 && (4..10).contains(&row));
        let stats = ellipse_stats(bar).unwrap();
        assert_relative_eq!(stats.orientation, 90.0);
        assert_eq!(rotate_upright(bar, stats.orientation), bar);
    }

    #[test]
    fn rotate_horizontal_bar_to_vertical() {
        // Bar on row 8 (1-based), columns 2..=7.
        let bar = Bitmap::from_fn(|col, row| row + 1 == 8 && (2..=7).contains(&(col + 1)));
        let stats = ellipse_stats(bar).unwrap();
        assert_relative_eq!(stats.orientation, 0.0);
        let rotated = rotate_upright(bar, stats.orientation);
        // Hand-computed mapping: source_x = 12.5 - y_out rounds into 2..=7
        // for rows 6..=11, source_y = x_out + 3.5 rounds to 8 only at
        // column 4 (half-away-from-zero rounding).
        let expected = Bitmap::from_fn(|col, row| col + 1 == 4 && (6..=11).contains(&(row + 1)));
        assert_eq!(rotated, expected);
    }

    #[test]
    fn rotation_may_lose_pixels() {
        // A thin slanted stroke: nearest-neighbor resampling on the coarse
        // grid can drop pixels.
        let stroke = Bitmap::from_fn(|col, row| row == 2 * col || row == 2 * col + 1);
        let stats = ellipse_stats(stroke).unwrap();
        let rotated = rotate_upright(stroke, stats.orientation);
        assert!(rotated.count_active() <= stroke.count_active());
    }

    #[test]
    fn connected_objects_counts() {
        assert_eq!(connected_objects(Bitmap::empty(), Connectivity::Eight), 0);

        let blocks = Bitmap::from_art(
            "##......
             ##......
             ........
             ....##..
             ....##..
             ........
             ........
             ........
             ........
             ........
             ........
             ........
             ........
             ........
             ........
             ........",
        )
        .unwrap();
        assert_eq!(connected_objects(blocks, Connectivity::Eight), 2);

        let mut diagonal_pair = Bitmap::empty();
        diagonal_pair.set(2, 2, true);
        diagonal_pair.set(3, 3, true);
        assert_eq!(connected_objects(diagonal_pair, Connectivity::Eight), 1);
        assert_eq!(connected_objects(diagonal_pair, Connectivity::Four), 2);
    }

    fn ring_3x3() -> Bitmap {
        Bitmap::from_art(
            "........
             .###....
             .#.#....
             .###....
             ........
             ........
             ........
             ........
             ........
             ........
             ........
             ........
             ........
             ........
             ........
             ........",
        )
        .unwrap()
    }

    #[test]
    fn holes_counts() {
        assert_eq!(count_holes(Bitmap::from_fn(|col, row| col < 4 && row < 4)), 0);
        assert_eq!(count_holes(ring_3x3()), 1);

        // A block whose strokes isolate three single-pixel pockets.
        let three_pockets = Bitmap::from_art(
            "#######.
             #.#.#.#.
             #######.
             ........
             ........
             ........
             ........
             ........
             ........
             ........
             ........
             ........
             ........
             ........
             ........
             ........",
        )
        .unwrap();
        assert_eq!(count_holes(three_pockets), 3);
    }

    #[test]
    fn perimeter_counts() {
        let mut single = Bitmap::empty();
        single.set(4, 4, true);
        assert_eq!(perimeter_length(single), 4);

        let block = Bitmap::from_fn(|col, row| (2..4).contains(&col) && (2..4).contains(&row));
        assert_eq!(perimeter_length(block), 8);

        // 12 outer edges + 4 around the interior hole.
        assert_eq!(perimeter_length(ring_3x3()), 16);
    }

    #[test]
    fn quadrant_counting() {
        assert_eq!(quadrant_counts(Bitmap::empty()), [0, 0, 0, 0]);
        assert_eq!(quadrant_counts(full_rect()), [32, 32, 32, 32]);
        let mut b = Bitmap::empty();
        b.set(1, 1, true); // column 2, row 2 (1-based)
        assert_eq!(quadrant_counts(b), [1, 0, 0, 0]);
    }

    #[test]
    fn region_stats_sum_invariant() {
        let b = ring_3x3();
        let stats = region_stats(b);
        assert_eq!(
            stats.quadrant_counts.iter().sum::<usize>(),
            stats.active_pixels
        );
    }

    #[test]
    fn art_round_trip() {
        let b = ring_3x3();
        assert_eq!(Bitmap::from_art(&b.to_art()).unwrap(), b);
        assert!(Bitmap::from_art("##\n##").is_err());
    }

    proptest! {
        #[test]
        fn moments_match_brute_force(bits in any::<u128>()) {
            let bitmap = Bitmap::from_bits(bits);
            prop_assume!(!bitmap.is_empty());
            let fast = central_moments(bitmap).unwrap();
            let brute = brute_force_moments(bitmap);
            // Same additions in the same order: exact equality.
            prop_assert_eq!(fast, brute);
        }

        #[test]
        fn ellipse_invariants(bits in any::<u128>()) {
            let bitmap = Bitmap::from_bits(bits);
            prop_assume!(!bitmap.is_empty());
            let stats = ellipse_stats(bitmap).unwrap();
            prop_assert!(stats.major_axis >= stats.minor_axis);
            prop_assert!(stats.minor_axis >= 0.0);
            prop_assert!((0.0..=1.0).contains(&stats.eccentricity));
            prop_assert!(stats.orientation > -90.0 && stats.orientation <= 90.0);
        }

        #[test]
        fn holes_match_padded_background_oracle(bits in any::<u128>()) {
            let bitmap = Bitmap::from_bits(bits);
            prop_assert_eq!(count_holes(bitmap), brute_force_holes(bitmap));
        }

        #[test]
        fn rotation_preserves_frame_and_binarity(bits in any::<u128>(), angle in -90.0f64..=90.0) {
            let bitmap = Bitmap::from_bits(bits);
            let rotated = rotate_upright(bitmap, angle);
            prop_assert!(rotated.count_active() <= PIXELS as u32);
        }

        #[test]
        fn mirror_symmetric_bitmaps_have_zero_cross_moment(bits in any::<u128>()) {
            // Symmetrize about the vertical center line.
            let base = Bitmap::from_bits(bits);
            let symmetric = Bitmap::from_fn(|col, row| {
                base.get(col, row) || base.get(WIDTH - 1 - col, row)
            });
            prop_assume!(!symmetric.is_empty());
            let m = central_moments(symmetric).unwrap();
            prop_assert!(m.mu11.abs() < 1e-9);
        }

        #[test]
        fn quadrants_sum_to_active(bits in any::<u128>()) {
            let bitmap = Bitmap::from_bits(bits);
            let q = quadrant_counts(bitmap);
            prop_assert_eq!(q.iter().sum::<usize>(), bitmap.count_active() as usize);
        }
    }
}
