//! Per-glyph feature vectors for the eight feature sets `a`..`h`.
//!
//! Scalar statistics (sets `a`..`e`) come from the original bitmap; pixel
//! blocks in sets `e`, `g`, `h` come from the deslanted (rotated-upright)
//! bitmap, which is computed lazily and cached per glyph.

use std::io::Write;
use std::sync::OnceLock;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Glyph;
use crate::error::{Error, Result};
use crate::imageops::{self, Bitmap};

/// One of the eight feature-set compositions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSetId {
    /// Centroid (x, y) and eccentricity.
    A,
    /// `a` plus hole and object counts.
    B,
    /// `b` plus the four quadrant pixel counts.
    C,
    /// `c` plus perimeter, major/minor axis lengths and orientation.
    D,
    /// `d` plus the 128 deslanted pixels.
    E,
    /// The 128 raw pixels.
    F,
    /// The 128 deslanted pixels.
    G,
    /// `g` plus the extracted orientation.
    H,
}

impl FeatureSetId {
    pub const ALL: [FeatureSetId; 8] = [
        FeatureSetId::A,
        FeatureSetId::B,
        FeatureSetId::C,
        FeatureSetId::D,
        FeatureSetId::E,
        FeatureSetId::F,
        FeatureSetId::G,
        FeatureSetId::H,
    ];

    pub fn dimension(self) -> usize {
        match self {
            FeatureSetId::A => 3,
            FeatureSetId::B => 5,
            FeatureSetId::C => 9,
            FeatureSetId::D => 13,
            FeatureSetId::E => 141,
            FeatureSetId::F => 128,
            FeatureSetId::G => 128,
            FeatureSetId::H => 129,
        }
    }

    pub fn tag(self) -> char {
        (b'a' + self as u8) as char
    }

    pub fn from_tag(tag: char) -> Option<Self> {
        let index = (tag as u32).checked_sub('a' as u32)? as usize;
        Self::ALL.get(index).copied()
    }
}

impl std::fmt::Display for FeatureSetId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.tag())
    }
}

/// Feature rows for a glyph slice, stacked in glyph order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub set: FeatureSetId,
    values: Array2<f64>,
    /// Glyph ids, one per row.
    glyph_order: Vec<u32>,
}

impl FeatureMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn row(&self, index: usize) -> ArrayView1<'_, f64> {
        self.values.row(index)
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dimension(&self) -> usize {
        self.values.ncols()
    }

    pub fn glyph_order(&self) -> &[u32] {
        &self.glyph_order
    }

    /// A new matrix holding the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> FeatureMatrix {
        let values = Array2::from_shape_fn((rows.len(), self.dimension()), |(i, j)| {
            self.values[[rows[i], j]]
        });
        FeatureMatrix {
            set: self.set,
            values,
            glyph_order: rows.iter().map(|&r| self.glyph_order[r]).collect(),
        }
    }
}

/// Extracts features for glyphs, caching deslanted bitmaps across calls so
/// the sets `e`, `g` and `h` share the rotation work.
pub struct FeatureExtractor<'a> {
    glyphs: &'a [Glyph],
    rotated: Vec<OnceLock<Bitmap>>,
}

impl<'a> FeatureExtractor<'a> {
    pub fn new(glyphs: &'a [Glyph]) -> Self {
        FeatureExtractor {
            glyphs,
            rotated: glyphs.iter().map(|_| OnceLock::new()).collect(),
        }
    }

    /// The deslanted bitmap of glyph `index` (write-once cache, safe for
    /// concurrent fills).
    pub fn rotated(&self, index: usize) -> Bitmap {
        *self.rotated[index].get_or_init(|| {
            let bitmap = self.glyphs[index].bitmap;
            match imageops::ellipse_stats(bitmap) {
                Ok(stats) => imageops::rotate_upright(bitmap, stats.orientation),
                Err(_) => bitmap,
            }
        })
    }

    pub fn extract(&self, set: FeatureSetId) -> FeatureMatrix {
        let dim = set.dimension();
        let rows: Vec<Vec<f64>> = self
            .glyphs
            .par_iter()
            .enumerate()
            .map(|(index, glyph)| self.feature_row(index, glyph, set))
            .collect();
        let mut values = Array2::zeros((self.glyphs.len(), dim));
        for (i, row) in rows.into_iter().enumerate() {
            debug_assert_eq!(row.len(), dim);
            for (j, v) in row.into_iter().enumerate() {
                values[[i, j]] = v;
            }
        }
        FeatureMatrix {
            set,
            values,
            glyph_order: self.glyphs.iter().map(|g| g.id).collect(),
        }
    }

    fn feature_row(&self, index: usize, glyph: &Glyph, set: FeatureSetId) -> Vec<f64> {
        use FeatureSetId::*;
        let bitmap = glyph.bitmap;
        if bitmap.is_empty() && set != F {
            log::warn!("glyph {} has an empty bitmap; emitting a zero row", glyph.id);
            return vec![0.0; set.dimension()];
        }
        let mut row = Vec::with_capacity(set.dimension());
        match set {
            A | B | C | D | E => {
                let ellipse = imageops::ellipse_stats(bitmap).expect("bitmap is nonempty");
                row.extend([ellipse.centroid_x, ellipse.centroid_y, ellipse.eccentricity]);
                if set == A {
                    return row;
                }
                let region = imageops::region_stats(bitmap);
                row.extend([region.hole_count as f64, region.object_count as f64]);
                if set == B {
                    return row;
                }
                row.extend(region.quadrant_counts.map(|c| c as f64));
                if set == C {
                    return row;
                }
                row.extend([
                    region.perimeter as f64,
                    ellipse.major_axis,
                    ellipse.minor_axis,
                    orientation_feature(ellipse.orientation),
                ]);
                if set == D {
                    return row;
                }
                row.extend(self.rotated(index).pixels().map(f64::from));
            }
            F => row.extend(bitmap.pixels().map(f64::from)),
            G | H => {
                row.extend(self.rotated(index).pixels().map(f64::from));
                if set == H {
                    let ellipse = imageops::ellipse_stats(bitmap).expect("bitmap is nonempty");
                    row.push(orientation_feature(ellipse.orientation));
                }
            }
        }
        row
    }
}

/// Extracts one feature set for a glyph slice.
pub fn extract_features(glyphs: &[Glyph], set: FeatureSetId) -> FeatureMatrix {
    FeatureExtractor::new(glyphs).extract(set)
}

/// Maps an orientation in (-90, 90] onto the [0, 180) range used for
/// feature output.
pub fn orientation_feature(orientation: f64) -> f64 {
    if orientation < 0.0 {
        orientation + 180.0
    } else {
        orientation
    }
}

/// Per-feature z-scoring fitted on a training block; optional, off by
/// default in the pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Standardizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(train: &FeatureMatrix) -> Standardizer {
        let n = train.len().max(1) as f64;
        let dim = train.dimension();
        let mut mean = vec![0.0; dim];
        for row in train.values().rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut std = vec![0.0; dim];
        for row in train.values().rows() {
            for ((s, m), v) in std.iter_mut().zip(&mean).zip(row) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut std {
            *s = (*s / n).sqrt().max(1e-12);
        }
        Standardizer { mean, std }
    }

    pub fn transform(&self, matrix: &FeatureMatrix) -> FeatureMatrix {
        let values = Array2::from_shape_fn((matrix.len(), matrix.dimension()), |(i, j)| {
            (matrix.values()[[i, j]] - self.mean[j]) / self.std[j]
        });
        FeatureMatrix {
            set: matrix.set,
            values,
            glyph_order: matrix.glyph_order().to_vec(),
        }
    }
}

/// Dumps a feature matrix as CSV with header `glyph_id,letter,word_id,f1..fD`.
pub fn dump_csv(glyphs: &[Glyph], matrix: &FeatureMatrix, mut writer: impl Write) -> Result<()> {
    if glyphs.len() != matrix.len() {
        return Err(Error::DimensionMismatch {
            expected: glyphs.len(),
            actual: matrix.len(),
        });
    }
    write!(writer, "glyph_id,letter,word_id")?;
    for j in 1..=matrix.dimension() {
        write!(writer, ",f{j}")?;
    }
    writeln!(writer)?;
    for (glyph, row) in glyphs.iter().zip(matrix.values().rows()) {
        write!(writer, "{},{},{}", glyph.id, glyph.letter, glyph.word_id)?;
        for v in row {
            write!(writer, ",{v}")?;
        }
        writeln!(writer)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::letter::Letter;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn glyph_with(bitmap: Bitmap, id: u32) -> Glyph {
        Glyph {
            id,
            letter: Letter::from_char('a').unwrap(),
            next_id: None,
            word_id: id,
            position: 1,
            fold: 0,
            bitmap,
        }
    }

    fn ring_glyph() -> Glyph {
        let art = "........
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
                   ........";
        glyph_with(Bitmap::from_art(art).unwrap(), 1)
    }

    #[test]
    fn set_f_is_the_raw_pixels() {
        let glyph = ring_glyph();
        let m = extract_features(std::slice::from_ref(&glyph), FeatureSetId::F);
        let expected: Vec<f64> = glyph.bitmap.pixels().map(f64::from).collect();
        assert_eq!(m.row(0).to_vec(), expected);
    }

    #[test]
    fn declared_dimensions() {
        let dims: Vec<usize> = FeatureSetId::ALL.iter().map(|s| s.dimension()).collect();
        assert_eq!(dims, [3, 5, 9, 13, 141, 128, 128, 129]);
        let glyph = ring_glyph();
        for set in FeatureSetId::ALL {
            let m = extract_features(std::slice::from_ref(&glyph), set);
            assert_eq!(m.dimension(), set.dimension(), "set {set}");
            assert!(m.row(0).iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn set_b_appends_holes_and_objects() {
        let glyph = ring_glyph();
        let m = extract_features(std::slice::from_ref(&glyph), FeatureSetId::B);
        let stats = imageops::ellipse_stats(glyph.bitmap).unwrap();
        assert_relative_eq!(m.row(0)[0], stats.centroid_x);
        assert_relative_eq!(m.row(0)[1], stats.centroid_y);
        assert_relative_eq!(m.row(0)[2], stats.eccentricity);
        assert_relative_eq!(m.row(0)[3], 1.0); // one hole
        assert_relative_eq!(m.row(0)[4], 1.0); // one object
    }

    #[test]
    fn set_g_matches_rotated_pixels() {
        let glyph = glyph_with(Bitmap::from_fn(|col, row| row == col + 4), 3);
        let m = extract_features(std::slice::from_ref(&glyph), FeatureSetId::G);
        let stats = imageops::ellipse_stats(glyph.bitmap).unwrap();
        let rotated = imageops::rotate_upright(glyph.bitmap, stats.orientation);
        let expected: Vec<f64> = rotated.pixels().map(f64::from).collect();
        assert_eq!(m.row(0).to_vec(), expected);
    }

    #[test]
    fn set_h_appends_original_orientation() {
        let glyph = glyph_with(Bitmap::from_fn(|col, row| row == col + 4), 4);
        let m = extract_features(std::slice::from_ref(&glyph), FeatureSetId::H);
        let stats = imageops::ellipse_stats(glyph.bitmap).unwrap();
        assert_relative_eq!(m.row(0)[128], orientation_feature(stats.orientation));
        assert!((0.0..180.0).contains(&m.row(0)[128]));
    }

    #[test]
    fn empty_bitmap_yields_zero_row() {
        let glyph = glyph_with(Bitmap::empty(), 9);
        for set in FeatureSetId::ALL {
            let m = extract_features(std::slice::from_ref(&glyph), set);
            assert!(m.row(0).iter().all(|&v| v == 0.0), "set {set}");
        }
    }

    #[test]
    fn orientation_range_mapping() {
        assert_relative_eq!(orientation_feature(90.0), 90.0);
        assert_relative_eq!(orientation_feature(0.0), 0.0);
        assert_relative_eq!(orientation_feature(-45.0), 135.0);
        assert_relative_eq!(orientation_feature(-89.9), 90.1);
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let glyphs = vec![ring_glyph(), glyph_with(Bitmap::from_bits(0b1011), 2)];
        let m = extract_features(&glyphs, FeatureSetId::A);
        let mut out = Vec::new();
        dump_csv(&glyphs, &m, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "glyph_id,letter,word_id,f1,f2,f3");
        assert!(lines[1].starts_with("1,a,1,"));
    }

    #[test]
    fn standardizer_centers_training_data() {
        let glyphs: Vec<Glyph> = (0..8)
            .map(|i| glyph_with(Bitmap::from_bits(0x0f0f << i | 1), i as u32))
            .collect();
        let m = extract_features(&glyphs, FeatureSetId::C);
        let z = Standardizer::fit(&m).transform(&m);
        for j in 0..z.dimension() {
            let mean: f64 = z.values().column(j).iter().sum::<f64>() / z.len() as f64;
            assert!(mean.abs() < 1e-9, "column {j} mean {mean}");
        }
    }

    proptest! {
        #[test]
        fn permuting_glyphs_permutes_rows(
            bits in proptest::collection::vec(1u128.., 2..10),
        ) {
            let glyphs: Vec<Glyph> = bits
                .iter()
                .enumerate()
                .map(|(i, &b)| glyph_with(Bitmap::from_bits(b), i as u32 + 1))
                .collect();
            let forward = extract_features(&glyphs, FeatureSetId::D);
            let reversed_glyphs: Vec<Glyph> = glyphs.iter().rev().cloned().collect();
            let reversed = extract_features(&reversed_glyphs, FeatureSetId::D);
            let n = glyphs.len();
            for i in 0..n {
                prop_assert_eq!(forward.row(i).to_vec(), reversed.row(n - 1 - i).to_vec());
            }
        }

        #[test]
        fn rows_are_finite_for_random_bitmaps(bits in any::<u128>()) {
            let glyph = glyph_with(Bitmap::from_bits(bits), 1);
            for set in FeatureSetId::ALL {
                let m = extract_features(std::slice::from_ref(&glyph), set);
                prop_assert!(m.row(0).iter().all(|v| v.is_finite()));
            }
        }
    }
}
