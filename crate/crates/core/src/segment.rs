//! Disparity map → cleaned binary defect mask.
//!
//! The disparity intensity is thresholded twice, globally with Otsu and
//! locally with an adaptive mean, and the two masks are combined. Pixels
//! lying on busbars or the cell border are then removed, since those regions
//! emit no light and reconstruct poorly.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{BinaryMask, Image};
use crate::ssim::{mirror_index, DisparityMap};

pub const OTSU_BINS: usize = 256;

/// Maps SSIM in `[-1, 1]` to disparity `(1 - ssim) / 2` in `[0, 1]`.
pub fn disparity_intensity(map: &DisparityMap) -> Image {
    let data = map.values().iter().map(|s| ((1.0 - s) / 2.0).clamp(0.0, 1.0)).collect();
    Image::new(map.width(), map.height(), data).expect("dimensions come from a valid map")
}

fn otsu_bin(v: f64) -> usize {
    ((v.clamp(0.0, 1.0) * OTSU_BINS as f64) as usize).min(OTSU_BINS - 1)
}

/// 256-bin histogram of a unit-scale image; bin `k` holds `[k/256, (k+1)/256)`.
pub fn histogram(img: &Image) -> [u64; OTSU_BINS] {
    let mut h = [0u64; OTSU_BINS];
    for &v in img.data() {
        h[otsu_bin(v)] += 1;
    }
    h
}

/// Result of Otsu's method.
#[derive(Debug, Clone, PartialEq)]
pub struct OtsuResult {
    /// Last bin of the background class.
    pub bin: usize,
    /// Intensity threshold: upper edge of `bin`. A pixel is foreground when
    /// its quantized value lies above `bin`, i.e. when it is `>= threshold`.
    pub threshold: f64,
    pub mask: BinaryMask,
    pub degenerate: bool,
}

/// Between-class variance (up to the constant factor `1/N²`) when bins
/// `0..=t` form the background. Zero when a class is empty.
pub fn between_class_variance(hist: &[u64; OTSU_BINS], t: usize) -> f64 {
    let (mut w0, mut s0, mut w1, mut s1) = (0.0, 0.0, 0.0, 0.0);
    for (k, &c) in hist.iter().enumerate() {
        let (c, kf) = (c as f64, k as f64);
        if k <= t {
            w0 += c;
            s0 += c * kf;
        } else {
            w1 += c;
            s1 += c * kf;
        }
    }
    if w0 == 0.0 || w1 == 0.0 {
        return 0.0;
    }
    let d = s0 / w0 - s1 / w1;
    w0 * w1 * d * d
}

/// Otsu's global threshold over a 256-bin histogram of a unit-scale image.
///
/// Ties go to the lowest maximizing bin. A single-valued histogram is
/// degenerate: the threshold is that value and the mask is empty.
pub fn otsu_threshold(img: &Image) -> OtsuResult {
    let hist = histogram(img);
    let total: u64 = hist.iter().sum();
    let sum_all: f64 = hist.iter().enumerate().map(|(k, &c)| k as f64 * c as f64).sum();
    let n = total as f64;

    let (mut best_bin, mut best_var) = (0usize, 0.0f64);
    let (mut w0, mut s0) = (0.0f64, 0.0f64);
    for (t, &c) in hist.iter().enumerate().take(OTSU_BINS - 1) {
        w0 += c as f64;
        s0 += t as f64 * c as f64;
        let w1 = n - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let d = s0 / w0 - (sum_all - s0) / w1;
        let var = w0 * w1 * d * d;
        if var > best_var {
            best_var = var;
            best_bin = t;
        }
    }

    if best_var == 0.0 {
        let v = img.data().first().copied().unwrap_or(0.0);
        debug!("otsu: single-valued histogram, returning empty mask");
        return OtsuResult {
            bin: otsu_bin(v),
            threshold: v,
            mask: BinaryMask::empty(img.width(), img.height()),
            degenerate: true,
        };
    }
    let mask = BinaryMask::from_fn(img.width(), img.height(), |x, y| otsu_bin(img.get(x, y)) > best_bin);
    OtsuResult {
        bin: best_bin,
        threshold: (best_bin + 1) as f64 / OTSU_BINS as f64,
        mask,
        degenerate: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineMode {
    #[default]
    Union,
    Intersection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    /// Odd side of the local averaging window.
    pub adaptive_block: usize,
    /// Offset on the 0–255 scale; divided by 255 for unit-scale images.
    pub adaptive_c: f64,
    pub combine_mode: CombineMode,
}

impl ThresholdConfig {
    /// Block 61, C = 10: the tuned values.
    pub fn tuned() -> Self {
        Self {
            adaptive_block: 61,
            adaptive_c: 10.0,
            combine_mode: CombineMode::Union,
        }
    }

    /// Block 41 from the method description.
    pub fn method() -> Self {
        Self {
            adaptive_block: 41,
            ..Self::tuned()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.adaptive_block < 3 || self.adaptive_block % 2 == 0 {
            return Err(Error::argument(format!(
                "adaptive block must be odd and >= 3, got {}",
                self.adaptive_block
            )));
        }
        if !self.adaptive_c.is_finite() {
            return Err(Error::argument("adaptive C must be finite"));
        }
        Ok(())
    }

    pub fn validate_for(&self, width: usize, height: usize) -> Result<()> {
        self.validate()?;
        if self.adaptive_block >= width || self.adaptive_block >= height {
            return Err(Error::argument(format!(
                "adaptive block {} does not fit a {width}x{height} image",
                self.adaptive_block
            )));
        }
        Ok(())
    }
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self::tuned()
    }
}

/// Box mean over a `block × block` window with mirrored borders.
pub fn local_mean(img: &Image, block: usize) -> Image {
    let (w, h) = img.dims();
    let r = (block / 2) as isize;
    let norm = (block * block) as f64;
    let mut rows = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for d in -r..=r {
                acc += img.get(mirror_index(x as isize + d, w), y);
            }
            rows[y * w + x] = acc;
        }
    }
    Image::from_fn(w, h, |x, y| {
        let mut acc = 0.0;
        for d in -r..=r {
            acc += rows[mirror_index(y as isize + d, h) * w + x];
        }
        acc / norm
    })
}

/// Sets pixels brighter than their local block mean by more than `C`.
///
/// `C` is given on the 0–255 scale; images whose maximum is at most 1 are
/// treated as unit-scale and the offset is divided by 255.
pub fn adaptive_mean_threshold(img: &Image, cfg: &ThresholdConfig) -> Result<BinaryMask> {
    cfg.validate_for(img.width(), img.height())?;
    let (_, max) = img.min_max();
    let offset = if max <= 1.0 { cfg.adaptive_c / 255.0 } else { cfg.adaptive_c };
    let mean = local_mean(img, cfg.adaptive_block);
    Ok(BinaryMask::from_fn(img.width(), img.height(), |x, y| {
        img.get(x, y) > mean.get(x, y) + offset
    }))
}

pub fn combine_masks(a: &BinaryMask, b: &BinaryMask, mode: CombineMode) -> Result<BinaryMask> {
    if a.dims() != b.dims() {
        return Err(Error::argument(format!(
            "mask dimensions differ: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let bits = a
        .bits()
        .iter()
        .zip(b.bits())
        .map(|(&p, &q)| match mode {
            CombineMode::Union => p || q,
            CombineMode::Intersection => p && q,
        })
        .collect();
    BinaryMask::from_bits(a.width(), a.height(), bits)
}

/// A dark band: center index and half-width. The band covers
/// `center - half_width ..= center + half_width`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Band {
    pub center: usize,
    pub half_width: usize,
}

impl Band {
    pub fn contains(&self, i: usize) -> bool {
        i.abs_diff(self.center) <= self.half_width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusbarLayout {
    pub width: usize,
    pub height: usize,
    /// Bands spanning the full height, indexed by column.
    pub vertical_bands: Vec<Band>,
    /// Bands spanning the full width, indexed by row.
    pub horizontal_bands: Vec<Band>,
    pub border_margin: usize,
}

impl BusbarLayout {
    /// No bands and no border margin.
    pub fn none(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            vertical_bands: Vec::new(),
            horizontal_bands: Vec::new(),
            border_margin: 0,
        }
    }

    pub fn is_noise(&self, x: usize, y: usize) -> bool {
        let m = self.border_margin;
        x < m
            || y < m
            || x + m >= self.width
            || y + m >= self.height
            || self.vertical_bands.iter().any(|b| b.contains(x))
            || self.horizontal_bands.iter().any(|b| b.contains(y))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusbarOptions {
    /// Keep only this many of the deepest vertical bands.
    pub expected_count: Option<usize>,
    /// Keep only this many of the deepest horizontal bands.
    pub expected_horizontal: Option<usize>,
    /// Border frame width as a fraction of the smaller image side.
    pub border_fraction: f64,
}

impl Default for BusbarOptions {
    fn default() -> Self {
        Self {
            expected_count: None,
            expected_horizontal: None,
            border_fraction: 0.02,
        }
    }
}

impl BusbarOptions {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.border_fraction) {
            return Err(Error::argument("border fraction must lie in [0, 0.5)"));
        }
        Ok(())
    }
}

/// Share of a dip's depth within which neighbors count as part of its floor.
const PLATEAU_TOLERANCE: f64 = 0.05;

/// Finds dark bands in a mean-intensity profile.
///
/// Each maximal run strictly below `cutoff` that does not touch either end
/// of the profile yields one band centered on its minimum (the middle of
/// the minimum's floor when neighbors are nearly as dark). The half-width
/// grows from 1 until the profile on both sides is back at or above the
/// cutoff. Bands are returned sorted by depth, deepest first.
fn profile_bands(profile: &[f64], cutoff: f64) -> Vec<(Band, f64)> {
    let n = profile.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if profile[i] >= cutoff {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && profile[i] < cutoff {
            i += 1;
        }
        let end = i - 1;
        if start == 0 || end == n - 1 {
            continue;
        }
        let lowest = (start..=end)
            .min_by(|&a, &b| profile[a].total_cmp(&profile[b]))
            .expect("non-empty run");
        // A flat-bottomed dip is centered on the middle of its floor.
        let floor = profile[lowest] + PLATEAU_TOLERANCE * (cutoff - profile[lowest]);
        let mut lo = lowest;
        while lo > start && profile[lo - 1] <= floor {
            lo -= 1;
        }
        let mut hi = lowest;
        while hi < end && profile[hi + 1] <= floor {
            hi += 1;
        }
        let center = (lo + hi) / 2;
        let mut hw = 1;
        while {
            let left = center.checked_sub(hw).map_or(cutoff, |j| profile[j]);
            let right = profile.get(center + hw).copied().unwrap_or(cutoff);
            left < cutoff || right < cutoff
        } {
            hw += 1;
        }
        out.push((Band { center, half_width: hw }, cutoff - profile[center]));
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.center.cmp(&b.0.center)));
    out
}

/// Locates busbars as dark column (and row) bands of the original image.
///
/// A profile entry is dark when it falls below the image mean minus one
/// standard deviation. Runs touching the image edge belong to the border and
/// are left to the margin.
pub fn detect_busbars(original: &Image, opts: &BusbarOptions) -> Result<BusbarLayout> {
    opts.validate()?;
    let (w, h) = original.dims();
    let mean = original.mean();
    let var = original.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (w * h) as f64;
    let cutoff = mean - var.sqrt();

    let cols: Vec<f64> = (0..w).map(|x| (0..h).map(|y| original.get(x, y)).sum::<f64>() / h as f64).collect();
    let rows: Vec<f64> = (0..h).map(|y| (0..w).map(|x| original.get(x, y)).sum::<f64>() / w as f64).collect();

    let mut vertical = profile_bands(&cols, cutoff);
    if let Some(k) = opts.expected_count {
        vertical.truncate(k);
    }
    let mut vertical_bands: Vec<Band> = vertical.into_iter().map(|(b, _)| b).collect();
    vertical_bands.sort_by_key(|b| b.center);
    let mut horizontal = profile_bands(&rows, cutoff);
    if let Some(k) = opts.expected_horizontal {
        horizontal.truncate(k);
    }
    let mut horizontal_bands: Vec<Band> = horizontal.into_iter().map(|(b, _)| b).collect();
    horizontal_bands.sort_by_key(|b| b.center);

    let border_margin = (opts.border_fraction * w.min(h) as f64).ceil() as usize;
    debug!(
        "busbars: {} vertical, {} horizontal, margin {border_margin}",
        vertical_bands.len(),
        horizontal_bands.len()
    );
    Ok(BusbarLayout {
        width: w,
        height: h,
        vertical_bands,
        horizontal_bands,
        border_margin,
    })
}

/// Clears mask pixels on busbar bands and inside the border frame.
pub fn clean_noise(mask: &BinaryMask, layout: &BusbarLayout) -> Result<BinaryMask> {
    if mask.dims() != (layout.width, layout.height) {
        return Err(Error::argument(format!(
            "mask is {:?} but layout is {}x{}",
            mask.dims(),
            layout.width,
            layout.height
        )));
    }
    Ok(BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
        mask.get(x, y) && !layout.is_noise(x, y)
    }))
}

/// Coordinates of set pixels in row-major order.
pub fn mask_to_points(mask: &BinaryMask) -> Vec<(usize, usize)> {
    let w = mask.width();
    mask.bits()
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| (i % w, i / w))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthcell::{apply_defects, generate_cell, CellSpec, DefectKind, DefectSpec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(w, h, |_, _| rng.gen::<f64>())
    }

    #[test]
    fn disparity_endpoints() {
        let map = DisparityMap::new(3, 1, vec![1.0, -1.0, 0.5]).unwrap();
        assert_eq!(disparity_intensity(&map).data(), &[0.0, 1.0, 0.25]);
    }

    #[test]
    fn otsu_matches_exhaustive_search() {
        for seed in 0..100 {
            let img = random_image(32, 32, seed);
            let r = otsu_threshold(&img);
            assert_eq!(Some(r.bin), crate::oracle::exhaustive_otsu_bin(&img), "seed {seed}");
            for (x, y) in (0..32).flat_map(|y| (0..32).map(move |x| (x, y))) {
                assert_eq!(r.mask.get(x, y), img.get(x, y) >= r.threshold);
            }
        }
    }

    #[test]
    fn otsu_bimodal() {
        let img = Image::from_fn(10, 10, |x, _| if x < 4 { 0.2 } else { 0.8 });
        let r = otsu_threshold(&img);
        assert!(r.threshold > 0.2 && r.threshold < 0.8);
        assert_eq!(r.mask, BinaryMask::from_fn(10, 10, |x, _| x >= 4));
    }

    #[test]
    fn otsu_constant_is_degenerate() {
        let r = otsu_threshold(&Image::filled(8, 8, 0.3));
        assert!(r.degenerate && r.mask.is_empty());
        assert_eq!(r.threshold, 0.3);
    }

    fn cfg(block: usize, c: f64) -> ThresholdConfig {
        ThresholdConfig {
            adaptive_block: block,
            adaptive_c: c,
            combine_mode: CombineMode::Union,
        }
    }

    #[test]
    fn adaptive_constant_is_empty() {
        let m = adaptive_mean_threshold(&Image::filled(64, 64, 0.4), &cfg(41, 10.0)).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn adaptive_single_bright_pixel() {
        let mut img = Image::filled(64, 64, 0.0);
        img.set(30, 20, 1.0);
        let m = adaptive_mean_threshold(&img, &cfg(41, 1.0)).unwrap();
        assert_eq!(mask_to_points(&m), vec![(30, 20)]);
    }

    #[test]
    fn adaptive_finds_bump_otsu_misses() {
        // Gradient from 0 to 0.9 left to right, with a faint bump on the
        // dark side.
        let img = Image::from_fn(96, 64, |x, y| {
            let base = 0.9 * x as f64 / 95.0;
            let bump = if (x as isize - 15).abs() <= 2 && (y as isize - 32).abs() <= 2 { 0.15 } else { 0.0 };
            base + bump
        });
        let otsu = otsu_threshold(&img);
        assert!(!otsu.mask.get(15, 32));
        let m = adaptive_mean_threshold(&img, &cfg(41, 10.0)).unwrap();
        assert!(m.get(15, 32));
        assert!(!m.get(60, 10));
    }

    #[test]
    fn adaptive_block_must_fit() {
        let img = Image::filled(40, 80, 0.1);
        assert!(matches!(adaptive_mean_threshold(&img, &cfg(41, 10.0)), Err(Error::Argument(_))));
        assert!(matches!(adaptive_mean_threshold(&img, &cfg(4, 10.0)), Err(Error::Argument(_))));
    }

    #[test]
    fn local_mean_matches_direct_sum() {
        let img = random_image(12, 9, 3);
        let lm = local_mean(&img, 5);
        for y in 0..9 {
            for x in 0..12 {
                let mut acc = 0.0;
                for dy in -2isize..=2 {
                    for dx in -2isize..=2 {
                        acc += img.get(mirror_index(x as isize + dx, 12), mirror_index(y as isize + dy, 9));
                    }
                }
                assert!((lm.get(x, y) - acc / 25.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn combine_identities() {
        let x = BinaryMask::from_fn(6, 6, |x, y| (x + y) % 3 == 0);
        let e = BinaryMask::empty(6, 6);
        assert_eq!(combine_masks(&x, &e, CombineMode::Union).unwrap(), x);
        assert_eq!(combine_masks(&x, &x, CombineMode::Intersection).unwrap(), x);
        let y = BinaryMask::from_fn(6, 6, |x, y| (x + y) % 3 == 1);
        assert_eq!(combine_masks(&x, &y, CombineMode::Union).unwrap().count(), x.count() + y.count());
        assert!(combine_masks(&x, &BinaryMask::empty(5, 6), CombineMode::Union).is_err());
    }

    fn four_busbar_spec() -> CellSpec {
        CellSpec {
            width: 160,
            height: 120,
            busbar_count: 4,
            busbar_width: 3,
            corner_rounding: 10,
            ..CellSpec::desk(5)
        }
    }

    #[test]
    fn detects_generator_busbars() {
        let spec = four_busbar_spec();
        let cell = generate_cell(&spec).unwrap();
        let layout = detect_busbars(&cell.image, &BusbarOptions::default()).unwrap();
        let truth = spec.busbar_centers();
        assert_eq!(layout.vertical_bands.len(), 4);
        for (b, c) in layout.vertical_bands.iter().zip(truth) {
            assert!((b.center as f64 + 0.5 - c).abs() <= 1.0, "{b:?} vs {c}");
            assert!(b.half_width >= 1);
        }
        assert!(layout.horizontal_bands.is_empty());
        assert_eq!(layout.border_margin, 3);
    }

    #[test]
    fn bright_constant_has_no_bands() {
        let layout = detect_busbars(&Image::filled(50, 40, 0.9), &BusbarOptions::default()).unwrap();
        assert!(layout.vertical_bands.is_empty() && layout.horizontal_bands.is_empty());
    }

    #[test]
    fn expected_count_keeps_deepest() {
        let spec = CellSpec {
            busbar_count: 3,
            ..four_busbar_spec()
        };
        let mut img = generate_cell(&spec).unwrap().image;
        // Shallow distractor column between the first two busbars.
        for y in 0..img.height() {
            let v = img.get(25, y);
            img.set(25, y, v * 0.3);
        }
        let all = detect_busbars(&img, &BusbarOptions::default()).unwrap();
        assert_eq!(all.vertical_bands.len(), 4);
        let opts = BusbarOptions {
            expected_count: Some(3),
            ..Default::default()
        };
        let kept = detect_busbars(&img, &opts).unwrap();
        let centers: Vec<f64> = kept.vertical_bands.iter().map(|b| b.center as f64 + 0.5).collect();
        for (c, t) in centers.iter().zip(spec.busbar_centers()) {
            assert!((c - t).abs() <= 1.0);
        }
    }

    #[test]
    fn clean_removes_band_and_border_only() {
        let layout = BusbarLayout {
            width: 40,
            height: 30,
            vertical_bands: vec![Band { center: 20, half_width: 2 }],
            horizontal_bands: vec![],
            border_margin: 1,
        };
        let inside = BinaryMask::from_fn(40, 30, |x, _| (18..=22).contains(&x));
        assert!(clean_noise(&inside, &layout).unwrap().is_empty());
        let far = BinaryMask::from_fn(40, 30, |x, y| (5..10).contains(&x) && (5..10).contains(&y));
        assert_eq!(clean_noise(&far, &layout).unwrap(), far);
    }

    #[test]
    fn crack_across_busbar_loses_only_band_segment() {
        let spec = CellSpec::desk(11);
        let cell = generate_cell(&spec).unwrap();
        let defect = DefectSpec {
            kind: DefectKind::Crack,
            severity: 0.8,
            geometry_seed: 4,
        };
        let cracked = apply_defects(&cell, &[defect]).unwrap();
        let layout = detect_busbars(&cell.image, &BusbarOptions::default()).unwrap();
        let cleaned = clean_noise(&cracked.mask, &layout).unwrap();
        let expected = BinaryMask::from_fn(64, 64, |x, y| cracked.mask.get(x, y) && !layout.is_noise(x, y));
        assert_eq!(cleaned, expected);
    }

    #[test]
    fn points_in_row_major_order() {
        let mut m = BinaryMask::empty(6, 7);
        assert!(mask_to_points(&m).is_empty());
        m.set(3, 5, true);
        m.set(0, 0, true);
        assert_eq!(mask_to_points(&m), vec![(0, 0), (3, 5)]);
    }

    fn arb_mask() -> impl Strategy<Value = BinaryMask> {
        (8usize..24, 8usize..24).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<bool>(), w * h).prop_map(move |b| BinaryMask::from_bits(w, h, b).unwrap())
        })
    }

    proptest! {
        #[test]
        fn clean_is_idempotent(m in arb_mask(), c in 0usize..30, hw in 1usize..3, margin in 0usize..3) {
            let layout = BusbarLayout {
                width: m.width(),
                height: m.height(),
                vertical_bands: vec![Band { center: c % m.width(), half_width: hw }],
                horizontal_bands: vec![Band { center: (c * 7) % m.height(), half_width: 1 }],
                border_margin: margin,
            };
            let once = clean_noise(&m, &layout).unwrap();
            prop_assert_eq!(clean_noise(&once, &layout).unwrap(), once);
        }

        #[test]
        fn union_and_intersection_bounds(a in arb_mask(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = BinaryMask::from_fn(a.width(), a.height(), |_, _| rng.gen_bool(0.5));
            let u = combine_masks(&a, &b, CombineMode::Union).unwrap();
            let i = combine_masks(&a, &b, CombineMode::Intersection).unwrap();
            for k in 0..a.bits().len() {
                prop_assert!(u.bits()[k] >= a.bits()[k] && u.bits()[k] >= b.bits()[k]);
                prop_assert!(i.bits()[k] <= a.bits()[k] && i.bits()[k] <= b.bits()[k]);
            }
        }

        #[test]
        fn points_count_matches_popcount(m in arb_mask()) {
            prop_assert_eq!(mask_to_points(&m).len(), m.count());
        }

        #[test]
        fn adaptive_is_translation_covariant(seed in any::<u64>(), dx in 1usize..6, dy in 1usize..6) {
            let (w, h, block) = (48usize, 48usize, 7usize);
            let base = random_image(w + dx, h + dy, seed);
            let a = Image::from_fn(w, h, |x, y| base.get(x, y));
            let b = Image::from_fn(w, h, |x, y| base.get(x + dx, y + dy));
            let c = cfg(block, 10.0);
            let (ma, mb) = (adaptive_mean_threshold(&a, &c).unwrap(), adaptive_mean_threshold(&b, &c).unwrap());
            let r = block / 2;
            for y in r + dy..h - r {
                for x in r + dx..w - r {
                    prop_assert_eq!(ma.get(x, y), mb.get(x - dx, y - dy));
                }
            }
        }
    }
}
