//! Grayscale rasters, PNG/PGM I/O, and the dataset preparation steps applied
//! before training: resize, contrast stretch, unit rescale, flip/rotate
//! augmentation and a seeded train/validation split.
//!
//! Intensities are `f64` end to end. Raw loads live on the `[0, 255]` scale;
//! [`rescale_unit`] moves an image to `[0, 1]`, which is the working scale of
//! the autoencoder and every stage after it.

use std::fs;
use std::io::{self, BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Minimum side length accepted by pipeline entry points.
pub const MIN_PIPELINE_SIDE: usize = 8;

/// Row-major grayscale image with floating-point intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::argument(format!("image dimensions must be positive, got {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::argument(format!(
                "image data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Fails unless both sides are at least [`MIN_PIPELINE_SIDE`].
    pub fn check_pipeline_size(&self) -> Result<()> {
        if self.width < MIN_PIPELINE_SIDE || self.height < MIN_PIPELINE_SIDE {
            return Err(Error::argument(format!(
                "image {}x{} is smaller than the {MIN_PIPELINE_SIDE}x{MIN_PIPELINE_SIDE} pipeline minimum",
                self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn flip_horizontal(&self) -> Image {
        Image::from_fn(self.width, self.height, |x, y| self.get(self.width - 1 - x, y))
    }

    pub fn flip_vertical(&self) -> Image {
        Image::from_fn(self.width, self.height, |x, y| self.get(x, self.height - 1 - y))
    }

    pub fn rotate_180(&self) -> Image {
        Image::from_fn(self.width, self.height, |x, y| {
            self.get(self.width - 1 - x, self.height - 1 - y)
        })
    }

    /// Quantizes to 8 bits, treating `full_scale` as white.
    pub fn to_u8(&self, full_scale: f64) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v / full_scale * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    /// Writes an 8-bit grayscale PNG; `full_scale` is the intensity mapped to 255.
    pub fn save_png(&self, path: impl AsRef<Path>, full_scale: f64) -> Result<()> {
        let path = path.as_ref();
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.to_u8(full_scale))
            .expect("buffer length matches dimensions");
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| map_image_error(e).at(path))
    }
}

/// Binary raster; `true` marks a set (defect / candidate) pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::argument(format!(
                "mask length {} does not match {width}x{height}",
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Number of 8-connected components of set pixels.
    pub fn component_count(&self) -> usize {
        self.components().len()
    }

    /// 8-connected components, each as a list of `(x, y)` in discovery order.
    pub fn components(&self) -> Vec<Vec<(usize, usize)>> {
        let mut seen = vec![false; self.bits.len()];
        let mut out = Vec::new();
        for start in 0..self.bits.len() {
            if !self.bits[start] || seen[start] {
                continue;
            }
            seen[start] = true;
            let mut stack = vec![start];
            let mut comp = Vec::new();
            while let Some(i) = stack.pop() {
                let (x, y) = (i % self.width, i / self.width);
                comp.push((x, y));
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let nx = x as i64 + dx;
                        let ny = y as i64 + dy;
                        if nx < 0 || ny < 0 || nx >= self.width as i64 || ny >= self.height as i64 {
                            continue;
                        }
                        let j = ny as usize * self.width + nx as usize;
                        if self.bits[j] && !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
            out.push(comp);
        }
        out
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let img = Image::from_fn(self.width, self.height, |x, y| if self.get(x, y) { 1.0 } else { 0.0 });
        img.save_png(path, 1.0)
    }
}

/// Train/validation partition of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit<T = Image> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub split_fraction: f64,
}

fn map_image_error(e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::Io(io),
        other => Error::format(other.to_string()),
    }
}

/// Loads a PNG or binary PGM (P5, maxval 255) as raw `[0, 255]` intensities.
/// Color PNGs are converted to luma.
pub fn load_grayscale(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::Io(e).at(path))?;
    decode_grayscale(&bytes).map_err(|e| e.at(path))
}

/// Decodes PNG or P5 PGM bytes.
pub fn decode_grayscale(bytes: &[u8]) -> Result<Image> {
    if bytes.starts_with(b"P5") {
        return decode_pgm(bytes);
    }
    if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png).map_err(|e| match e {
            image::ImageError::Decoding(d) => {
                // The png decoder reports a short stream as a decoding error.
                Error::Io(io::Error::new(io::ErrorKind::UnexpectedEof, d.to_string()))
            }
            other => map_image_error(other),
        })?;
        let luma = img.to_luma8();
        let (w, h) = luma.dimensions();
        let data = luma.into_raw().into_iter().map(f64::from).collect();
        return Image::new(w as usize, h as usize, data);
    }
    Err(Error::format("unsupported image format (expected PNG or P5 PGM)"))
}

fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let mut reader = BufReader::new(bytes);
    let mut header = Vec::new();
    // Magic, width, height, maxval; '#' comments may appear between tokens.
    while header.len() < 4 {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Err(Error::Io(io::Error::new(io::ErrorKind::UnexpectedEof, "truncated PGM header")));
        }
        let content = line.split('#').next().unwrap_or("");
        header.extend(content.split_whitespace().map(str::to_owned));
    }
    if header.len() > 4 {
        return Err(Error::format("PGM header must end with a newline after maxval"));
    }
    let parse = |s: &str, what: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| Error::format(format!("invalid PGM {what}: {s:?}")))
    };
    let width = parse(&header[1], "width")?;
    let height = parse(&header[2], "height")?;
    let maxval = parse(&header[3], "maxval")?;
    if maxval != 255 {
        return Err(Error::format(format!("unsupported PGM maxval {maxval} (only 255)")));
    }
    let mut raster = vec![0u8; width * height];
    reader.read_exact(&mut raster)?;
    Image::new(width, height, raster.into_iter().map(f64::from).collect())
}

/// Writes a binary P5 PGM of raw `[0, 255]` intensities.
pub fn save_pgm(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.to_u8(255.0));
    fs::write(path, out).map_err(|e| Error::Io(e).at(path))
}

/// Bilinear resize with pixel-center alignment.
pub fn resize(img: &Image, width: usize, height: usize) -> Result<Image> {
    if width == 0 || height == 0 {
        return Err(Error::argument(format!("resize target must be positive, got {width}x{height}")));
    }
    if (width, height) == img.dims() {
        return Ok(img.clone());
    }
    let sx = img.width() as f64 / width as f64;
    let sy = img.height() as f64 / height as f64;
    let max_x = (img.width() - 1) as f64;
    let max_y = (img.height() - 1) as f64;
    Ok(Image::from_fn(width, height, |x, y| {
        let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x);
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y);
        let x0 = fx.floor() as usize;
        let y0 = fy.floor() as usize;
        let x1 = (x0 + 1).min(img.width() - 1);
        let y1 = (y0 + 1).min(img.height() - 1);
        let tx = fx - x0 as f64;
        let ty = fy - y0 as f64;
        let top = img.get(x0, y0) * (1.0 - tx) + img.get(x1, y0) * tx;
        let bottom = img.get(x0, y1) * (1.0 - tx) + img.get(x1, y1) * tx;
        top * (1.0 - ty) + bottom * ty
    }))
}

/// Maps `[0, 255]` to `[0, 1]`. Out-of-range values are clamped with a warning.
pub fn rescale_unit(img: &Image) -> Image {
    let clamped = img.data().iter().filter(|v| !(0.0..=255.0).contains(*v)).count();
    if clamped > 0 {
        log::warn!("rescale_unit: clamped {clamped} intensities outside [0, 255]");
    }
    img.map(|v| v.clamp(0.0, 255.0) / 255.0)
}

/// Global min-max contrast stretch onto `[0, 255]`. Constant images are
/// returned unchanged.
pub fn normalize_contrast(img: &Image) -> Image {
    let (lo, hi) = img.min_max();
    if hi <= lo {
        return img.clone();
    }
    let scale = 255.0 / (hi - lo);
    img.map(|v| (v - lo) * scale)
}

/// Identity, horizontal flip, vertical flip and 180° rotation, in that order.
pub fn augment(img: &Image) -> Vec<Image> {
    vec![img.clone(), img.flip_horizontal(), img.flip_vertical(), img.rotate_180()]
}

/// Seeded shuffle followed by a cut at `round(fraction * n)`.
pub fn split_dataset<T>(items: Vec<T>, fraction: f64, seed: u64) -> Result<DatasetSplit<T>> {
    if items.is_empty() {
        return Err(Error::argument("cannot split an empty dataset"));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::argument(format!("split fraction must lie in (0, 1), got {fraction}")));
    }
    let n = items.len();
    let n_train = (fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut slots: Vec<Option<T>> = items.into_iter().map(Some).collect();
    let mut train = Vec::with_capacity(n_train);
    let mut validation = Vec::with_capacity(n - n_train);
    for (rank, idx) in order.into_iter().enumerate() {
        let item = slots[idx].take().expect("each index visited once");
        if rank < n_train {
            train.push(item);
        } else {
            validation.push(item);
        }
    }
    Ok(DatasetSplit {
        train,
        validation,
        split_fraction: fraction,
    })
}

/// Resize, contrast-stretch, then rescale to `[0, 1]`.
pub fn prepare(img: &Image, width: usize, height: usize) -> Result<Image> {
    let resized = resize(img, width, height)?;
    Ok(rescale_unit(&normalize_contrast(&resized)))
}

/// Reads a manifest of newline-separated paths relative to the manifest's directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::Io(e).at(path))?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| base.join(l))
        .collect())
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[PathBuf]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for e in entries {
        text.push_str(&e.to_string_lossy());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::Io(e).at(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| (x * 3 + y * 7) as f64)
    }

    #[test]
    fn pgm_identity_decode() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend([0u8, 255, 128, 64]);
        let img = decode_grayscale(&bytes).unwrap();
        assert_eq!(img.dims(), (2, 2));
        assert_eq!(img.data(), &[0.0, 255.0, 128.0, 64.0]);
    }

    #[test]
    fn pgm_with_comment() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend([7u8, 9]);
        assert_eq!(decode_grayscale(&bytes).unwrap().data(), &[7.0, 9.0]);
    }

    #[test]
    fn truncated_pgm_is_io_error() {
        let mut bytes = b"P5\n4 4\n255\n".to_vec();
        bytes.extend([1u8; 5]);
        assert!(matches!(decode_grayscale(&bytes), Err(Error::Io(_))));
    }

    #[test]
    fn unknown_magic_is_format_error() {
        assert!(matches!(decode_grayscale(b"GIF89a...."), Err(Error::Format(_))));
    }

    #[test]
    fn png_round_trip_and_300px_load() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_fn(300, 300, |x, y| ((x + y) % 256) as f64);
        let p = dir.path().join("cell.png");
        img.save_png(&p, 255.0).unwrap();
        let back = load_grayscale(&p).unwrap();
        assert_eq!(back.dims(), (300, 300));
        assert_eq!(back, img);
    }

    #[test]
    fn truncated_png_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cell.png");
        Image::from_fn(40, 40, |x, y| ((x * y) % 256) as f64).save_png(&p, 255.0).unwrap();
        let bytes = fs::read(&p).unwrap();
        let err = decode_grayscale(&bytes[..bytes.len() / 2]).unwrap_err();
        assert!(matches!(err, Error::Io(_)), "{err:?}");
    }

    #[test]
    fn rgb_png_is_luma_converted() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rgb.png");
        image::RgbImage::from_pixel(3, 2, image::Rgb([200, 200, 200])).save(&p).unwrap();
        let img = load_grayscale(&p).unwrap();
        assert!(img.data().iter().all(|&v| v == 200.0));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_grayscale("/nonexistent/cell.png").unwrap_err();
        assert!(matches!(err.root(), Error::Io(_)));
    }

    #[test]
    fn resize_to_full_input() {
        let img = Image::filled(300, 300, 90.0);
        let out = resize(&img, 640, 480).unwrap();
        assert_eq!(out.dims(), (640, 480));
    }

    #[test]
    fn resize_identity_is_bitwise() {
        let img = ramp(13, 9).map(|v| v.sin());
        assert_eq!(resize(&img, 13, 9).unwrap(), img);
    }

    #[test]
    fn resize_constant_stays_constant() {
        let img = Image::filled(2, 2, 0.37);
        let out = resize(&img, 4, 4).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.37).abs() < 1e-15));
    }

    #[test]
    fn resize_zero_target_rejected() {
        assert!(matches!(resize(&Image::filled(4, 4, 0.0), 0, 3), Err(Error::Argument(_))));
    }

    #[test]
    fn resize_round_trip_on_smooth_image() {
        let img = Image::from_fn(40, 30, |x, y| 0.5 + 0.3 * ((x as f64) / 9.0).sin() * ((y as f64) / 7.0).cos());
        let up = resize(&img, 80, 60).unwrap();
        let back = resize(&up, 40, 30).unwrap();
        let mae: f64 = img.data().iter().zip(back.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / 1200.0;
        assert!(mae < 0.02, "mae {mae}");
    }

    #[test]
    fn rescale_exact_division() {
        let img = Image::new(3, 1, vec![0.0, 255.0, 51.0]).unwrap();
        let out = rescale_unit(&img);
        assert_eq!(out.data(), &[0.0, 1.0, 0.2]);
        assert!(rescale_unit(&Image::filled(3, 3, 0.0)).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rescale_clamps_corrupt_values() {
        let img = Image::new(2, 1, vec![256.0, -3.0]).unwrap();
        assert_eq!(rescale_unit(&img).data(), &[1.0, 0.0]);
    }

    #[test]
    fn contrast_stretch_closed_form() {
        let img = Image::new(3, 1, vec![64.0, 128.0, 192.0]).unwrap();
        assert_eq!(normalize_contrast(&img).data(), &[0.0, 127.5, 255.0]);
        let c = Image::filled(4, 4, 17.0);
        assert_eq!(normalize_contrast(&c), c);
        let full = Image::new(3, 1, vec![0.0, 100.0, 255.0]).unwrap();
        let out = normalize_contrast(&full);
        assert_eq!(out.data()[0], 0.0);
        assert_eq!(out.data()[2], 255.0);
    }

    #[test]
    fn augment_counts_and_distinctness() {
        let imgs: Vec<Image> = (0..588).map(|i| Image::filled(8, 8, i as f64)).collect();
        let total: usize = imgs.iter().map(|i| augment(i).len()).sum();
        assert_eq!(total, 2352);

        let c = Image::filled(5, 4, 3.0);
        assert!(augment(&c).iter().all(|a| *a == c));

        // 3 wide, 2 tall, all values distinct
        let p = Image::new(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let out = augment(&p);
        assert_eq!(out[1].data(), &[3.0, 2.0, 1.0, 6.0, 5.0, 4.0]);
        assert_eq!(out[2].data(), &[4.0, 5.0, 6.0, 1.0, 2.0, 3.0]);
        assert_eq!(out[3].data(), &[6.0, 5.0, 4.0, 3.0, 2.0, 1.0]);
        for i in 0..4 {
            for j in (i + 1)..4 {
                assert_ne!(out[i], out[j]);
            }
        }
    }

    #[test]
    fn flips_are_involutions() {
        let img = ramp(7, 5);
        assert_eq!(img.flip_horizontal().flip_horizontal(), img);
        assert_eq!(img.flip_vertical().flip_vertical(), img);
        assert_eq!(img.rotate_180().rotate_180(), img);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let s = split_dataset((0..2352).collect::<Vec<_>>(), 0.8, 1).unwrap();
        assert_eq!((s.train.len(), s.validation.len()), (1882, 470));

        let a = split_dataset((0..10).collect::<Vec<_>>(), 0.8, 42).unwrap();
        let b = split_dataset((0..10).collect::<Vec<_>>(), 0.8, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_preconditions() {
        assert!(split_dataset(vec![1, 2, 3], 1.0, 0).is_err());
        assert!(split_dataset(vec![1, 2, 3], 0.0, 0).is_err());
        assert!(split_dataset(Vec::<u8>::new(), 0.5, 0).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("set.txt");
        write_manifest(&m, &[PathBuf::from("a.png"), PathBuf::from("sub/b.png")]).unwrap();
        let got = read_manifest(&m).unwrap();
        assert_eq!(got, vec![dir.path().join("a.png"), dir.path().join("sub/b.png")]);
    }

    #[test]
    fn pipeline_minimum_size() {
        assert!(Image::filled(7, 20, 0.0).check_pipeline_size().is_err());
        assert!(Image::filled(8, 8, 0.0).check_pipeline_size().is_ok());
    }

    #[test]
    fn mask_components_eight_connected() {
        let mut m = BinaryMask::empty(6, 6);
        m.set(0, 0, true);
        m.set(1, 1, true);
        m.set(4, 4, true);
        assert_eq!(m.component_count(), 2);
        assert_eq!(m.count(), 3);
    }
}
