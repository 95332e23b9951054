//! Seeded generator of mono-crystalline EL-like cell images with pixel-exact
//! defect masks.
//!
//! A cell is a bright body with smoothed white-noise texture, evenly spaced
//! dark vertical busbars and dark rounded corners. Defects multiply the
//! intensity of the pixels they cover by a factor below one, and the mask is
//! set on exactly the pixels whose value changed.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{load_grayscale, BinaryMask, Image};

/// Busbars and the area outside the rounded corners emit no light, so a
/// defect never alters them.
const DARK_LEVEL: f64 = 0.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub width: usize,
    pub height: usize,
    pub busbar_count: usize,
    pub busbar_width: usize,
    pub background_level: f64,
    pub texture_amplitude: f64,
    pub corner_rounding: usize,
    pub seed: u64,
}

impl CellSpec {
    /// 64×64 cell with two busbars, sized for the desk-scale autoencoder.
    pub fn desk(seed: u64) -> Self {
        Self {
            width: 64,
            height: 64,
            busbar_count: 2,
            busbar_width: 3,
            background_level: 0.75,
            texture_amplitude: 0.03,
            corner_rounding: 8,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 8 || self.height < 8 {
            return Err(Error::argument("cell must be at least 8x8"));
        }
        if self.busbar_count * self.busbar_width >= self.width {
            return Err(Error::argument(format!(
                "{} busbars of width {} do not fit in width {}",
                self.busbar_count, self.busbar_width, self.width
            )));
        }
        if !(0.0..=1.0).contains(&self.background_level) {
            return Err(Error::argument("background level must lie in [0, 1]"));
        }
        if self.texture_amplitude < 0.0 || self.texture_amplitude >= self.background_level {
            return Err(Error::argument("texture amplitude must be in [0, background_level)"));
        }
        if 2 * self.corner_rounding >= self.width.min(self.height) {
            return Err(Error::argument("corner rounding too large for the cell"));
        }
        Ok(())
    }

    /// Busbar center columns in continuous pixel coordinates.
    pub fn busbar_centers(&self) -> Vec<f64> {
        let n = self.busbar_count;
        (0..n)
            .map(|i| (i + 1) as f64 * self.width as f64 / (n + 1) as f64)
            .collect()
    }

    fn in_busbar(&self, x: usize) -> bool {
        let cx = x as f64 + 0.5;
        let half = self.busbar_width as f64 / 2.0;
        self.busbar_centers().iter().any(|c| (cx - c).abs() < half)
    }

    fn in_corner(&self, x: usize, y: usize) -> bool {
        let r = self.corner_rounding as f64;
        if r <= 0.0 {
            return false;
        }
        let (w, h) = (self.width as f64, self.height as f64);
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let cx = if px < r {
            r
        } else if px > w - r {
            w - r
        } else {
            return false;
        };
        let cy = if py < r {
            r
        } else if py > h - r {
            h - r
        } else {
            return false;
        };
        (px - cx).hypot(py - cy) > r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectKind {
    /// Dark polyline of 2–5 segments.
    Crack,
    /// Dark connected blob.
    DeadPatch,
    /// Smooth darkening gradient over a disc.
    Degradation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectSpec {
    pub kind: DefectKind,
    /// Fractional intensity drop in `(0, 1]`.
    pub severity: f64,
    pub geometry_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub image: Image,
    pub mask: BinaryMask,
    pub spec: CellSpec,
    pub defects: Vec<DefectSpec>,
}

impl LabeledImage {
    pub fn is_defective(&self) -> bool {
        !self.mask.is_empty()
    }
}

pub(crate) fn derive_seed(base: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded white noise smoothed by two passes of a 5×5 box filter, scaled to
/// `[-1, 1]`.
fn smooth_noise(width: usize, height: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf: Vec<f64> = (0..width * height).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for _ in 0..2 {
        buf = box_blur(&buf, width, height, 2);
    }
    let peak = buf.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        buf.iter_mut().for_each(|v| *v /= peak);
    }
    buf
}

fn box_blur(src: &[f64], width: usize, height: usize, radius: isize) -> Vec<f64> {
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut out = vec![0.0; src.len()];
    let norm = ((2 * radius + 1) * (2 * radius + 1)) as f64;
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for dy in -radius..=radius {
                for dx in -radius..=radius {
                    acc += src[clamp(y as isize + dy, height) * width + clamp(x as isize + dx, width)];
                }
            }
            out[y * width + x] = acc / norm;
        }
    }
    out
}

/// Renders a defect-free cell.
pub fn generate_cell(spec: &CellSpec) -> Result<LabeledImage> {
    spec.validate()?;
    let noise = smooth_noise(spec.width, spec.height, spec.seed);
    let image = Image::from_fn(spec.width, spec.height, |x, y| {
        if spec.in_corner(x, y) || spec.in_busbar(x) {
            DARK_LEVEL
        } else {
            (spec.background_level + spec.texture_amplitude * noise[y * spec.width + x]).clamp(0.0, 1.0)
        }
    });
    Ok(LabeledImage {
        mask: BinaryMask::empty(spec.width, spec.height),
        image,
        spec: spec.clone(),
        defects: Vec::new(),
    })
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * vx + (p.1 - a.1) * vy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p.0 - a.0 - t * vx).hypot(p.1 - a.1 - t * vy)
}

/// Geometry of a crack: polyline vertices and stroke width.
#[derive(Debug, Clone, PartialEq)]
pub struct CrackGeometry {
    pub vertices: Vec<(f64, f64)>,
    pub width: f64,
}

impl CrackGeometry {
    pub fn covers(&self, x: usize, y: usize) -> bool {
        let p = (x as f64 + 0.5, y as f64 + 0.5);
        self.vertices
            .windows(2)
            .any(|s| segment_distance(p, s[0], s[1]) <= self.width / 2.0)
    }
}

/// Interior box that defect geometry is confined to.
fn safe_box(spec: &CellSpec) -> (f64, f64, f64, f64) {
    let margin = (spec.corner_rounding as f64).max(0.06 * spec.width.min(spec.height) as f64) + 1.0;
    (margin, margin, spec.width as f64 - margin, spec.height as f64 - margin)
}

fn scale_of(spec: &CellSpec) -> f64 {
    spec.width.min(spec.height) as f64 / 64.0
}

pub fn crack_geometry(spec: &CellSpec, seed: u64) -> CrackGeometry {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x0, y0, x1, y1) = safe_box(spec);
    let s = scale_of(spec);
    let segments = rng.gen_range(2..=5);
    let width = s * rng.gen_range(2.0..3.5);
    let mut p = (rng.gen_range(x0..x1), rng.gen_range(y0..y1));
    let mut heading: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut vertices = vec![p];
    for _ in 0..segments {
        heading += rng.gen_range(-0.7..0.7);
        let len = s * rng.gen_range(6.0..14.0);
        let mut q = (p.0 + len * heading.cos(), p.1 + len * heading.sin());
        if q.0 < x0 || q.0 > x1 || q.1 < y0 || q.1 > y1 {
            heading += std::f64::consts::PI;
            q = (
                (p.0 + len * heading.cos()).clamp(x0, x1),
                (p.1 + len * heading.sin()).clamp(y0, y1),
            );
        }
        vertices.push(q);
        p = q;
    }
    CrackGeometry { vertices, width }
}

/// Discs whose union forms a dead patch; each disc overlaps its predecessor.
pub fn patch_discs(spec: &CellSpec, seed: u64) -> Vec<(f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x0, y0, x1, y1) = safe_box(spec);
    let s = scale_of(spec);
    let count = rng.gen_range(1..=3);
    let mut discs = Vec::with_capacity(count);
    let r0 = s * rng.gen_range(3.5..6.0);
    let mut c = (
        rng.gen_range((x0 + r0)..(x1 - r0)),
        rng.gen_range((y0 + r0)..(y1 - r0)),
    );
    discs.push((c.0, c.1, r0));
    for _ in 1..count {
        let r = s * rng.gen_range(2.5..5.0);
        let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let step = 0.8 * r;
        c = (
            (c.0 + step * ang.cos()).clamp(x0 + r, x1 - r),
            (c.1 + step * ang.sin()).clamp(y0 + r, y1 - r),
        );
        discs.push((c.0, c.1, r));
    }
    discs
}

fn degradation_disc(spec: &CellSpec, seed: u64) -> (f64, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x0, y0, x1, y1) = safe_box(spec);
    let r = scale_of(spec) * rng.gen_range(5.0..9.0);
    (rng.gen_range((x0 + r)..(x1 - r)), rng.gen_range((y0 + r)..(y1 - r)), r)
}

enum Footprint {
    Crack(CrackGeometry),
    Patch(Vec<(f64, f64, f64)>),
    Degradation(f64, f64, f64),
}

impl Footprint {
    fn resolve(spec: &CellSpec, d: &DefectSpec) -> Self {
        match d.kind {
            DefectKind::Crack => Footprint::Crack(crack_geometry(spec, d.geometry_seed)),
            DefectKind::DeadPatch => Footprint::Patch(patch_discs(spec, d.geometry_seed)),
            DefectKind::Degradation => {
                let (cx, cy, r) = degradation_disc(spec, d.geometry_seed);
                Footprint::Degradation(cx, cy, r)
            }
        }
    }

    /// Multiplicative darkening at `(x, y)`; 1 means untouched.
    fn factor(&self, severity: f64, x: usize, y: usize) -> f64 {
        let p = (x as f64 + 0.5, y as f64 + 0.5);
        match self {
            Footprint::Crack(c) if c.covers(x, y) => 1.0 - severity,
            Footprint::Patch(discs) if discs.iter().any(|&(cx, cy, r)| (p.0 - cx).hypot(p.1 - cy) <= r) => {
                1.0 - severity
            }
            Footprint::Degradation(cx, cy, r) => {
                let dist = (p.0 - cx).hypot(p.1 - cy);
                if dist < *r {
                    // Darkest at the center, at least half the severity at the rim.
                    1.0 - severity * (0.5 + 0.5 * (1.0 - dist / r))
                } else {
                    1.0
                }
            }
            _ => 1.0,
        }
    }
}

/// Darkens `cell` with every defect and marks the altered pixels.
pub fn apply_defects(cell: &LabeledImage, defects: &[DefectSpec]) -> Result<LabeledImage> {
    if !cell.mask.is_empty() {
        return Err(Error::argument("apply_defects expects a defect-free cell"));
    }
    for d in defects {
        if !(d.severity > 0.0 && d.severity <= 1.0) {
            return Err(Error::argument(format!("defect severity must be in (0, 1], got {}", d.severity)));
        }
    }
    let spec = &cell.spec;
    let footprints: Vec<Footprint> = defects.iter().map(|d| Footprint::resolve(spec, d)).collect();
    let mut image = cell.image.clone();
    let mut mask = BinaryMask::empty(spec.width, spec.height);
    if !defects.is_empty() {
        for y in 0..spec.height {
            for x in 0..spec.width {
                let factor: f64 = defects
                    .iter()
                    .zip(&footprints)
                    .map(|(d, f)| f.factor(d.severity, x, y))
                    .product();
                let old = image.get(x, y);
                let new = old * factor;
                if new != old {
                    image.set(x, y, new);
                    mask.set(x, y, true);
                }
            }
        }
    }
    let mut all = cell.defects.clone();
    all.extend_from_slice(defects);
    Ok(LabeledImage {
        image,
        mask,
        spec: spec.clone(),
        defects: all,
    })
}

/// Draws a random defect of one of `kinds`.
pub fn random_defect(rng: &mut impl Rng, kinds: &[DefectKind]) -> DefectSpec {
    let kind = kinds[rng.gen_range(0..kinds.len())];
    let severity = match kind {
        DefectKind::Crack => rng.gen_range(0.75..1.0),
        DefectKind::DeadPatch => rng.gen_range(0.6..0.95),
        DefectKind::Degradation => rng.gen_range(0.4..0.7),
    };
    DefectSpec {
        kind,
        severity,
        geometry_seed: rng.gen(),
    }
}

/// Generates `n` cells sharing `spec`'s layout with per-image texture seeds;
/// each is defective with probability `defect_rate` (1–2 defects of any kind).
pub fn generate_dataset(n: usize, defect_rate: f64, spec: &CellSpec, seed: u64) -> Result<Vec<LabeledImage>> {
    generate_dataset_with(
        n,
        defect_rate,
        spec,
        seed,
        &[DefectKind::Crack, DefectKind::DeadPatch, DefectKind::Degradation],
    )
}

/// As [`generate_dataset`], restricted to the given defect kinds.
pub fn generate_dataset_with(
    n: usize,
    defect_rate: f64,
    spec: &CellSpec,
    seed: u64,
    kinds: &[DefectKind],
) -> Result<Vec<LabeledImage>> {
    if n == 0 {
        return Err(Error::argument("dataset size must be at least 1"));
    }
    if !(0.0..=1.0).contains(&defect_rate) {
        return Err(Error::argument(format!("defect rate must lie in [0, 1], got {defect_rate}")));
    }
    if kinds.is_empty() {
        return Err(Error::argument("at least one defect kind is required"));
    }
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let cell_spec = CellSpec {
            seed: derive_seed(seed, i as u64),
            ..spec.clone()
        };
        let clean = generate_cell(&cell_spec)?;
        let defective = rng.gen_bool(defect_rate);
        if defective {
            let count = rng.gen_range(1..=2);
            let defects: Vec<DefectSpec> = (0..count).map(|_| random_defect(&mut rng, kinds)).collect();
            out.push(apply_defects(&clean, &defects)?);
        } else {
            out.push(clean);
        }
    }
    Ok(out)
}

/// One entry of a persisted dataset manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub image: PathBuf,
    pub mask: PathBuf,
    pub spec: CellSpec,
    pub defects: Vec<DefectSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes images and masks as PNG under `dir/images`, `dir/masks` plus a
/// JSON manifest with relative paths.
pub fn write_dataset(dir: impl AsRef<Path>, items: &[LabeledImage], seed: u64) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("images"))?;
    fs::create_dir_all(dir.join("masks"))?;
    let mut entries = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let id = format!("cell_{i:05}");
        let image = PathBuf::from("images").join(format!("{id}.png"));
        let mask = PathBuf::from("masks").join(format!("{id}.png"));
        item.image.save_png(dir.join(&image), 1.0)?;
        item.mask.save_png(dir.join(&mask))?;
        entries.push(ManifestEntry {
            id,
            image,
            mask,
            spec: item.spec.clone(),
            defects: item.defects.clone(),
        });
    }
    let manifest = DatasetManifest { seed, entries };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::format(e.to_string()))?;
    fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(manifest)
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::Io(e).at(&path))?;
    serde_json::from_str(&text).map_err(|e| Error::format(e.to_string()).at(&path))
}

/// Loads a ground-truth mask PNG written by [`write_dataset`].
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let img = load_grayscale(path)?;
    BinaryMask::from_bits(img.width(), img.height(), img.data().iter().map(|&v| v >= 128.0).collect())
}
