//! End-to-end segmentation of cell images into silver annotation records.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::Utc;
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotate::{to_coco, to_voc, voc_file_name, AnnotationRecord, Category, COCO_FILE};
use crate::autoenc::{build_model, train_with_observer, Model, Tensor, TrainReport};
use crate::cluster::{dbscan, pixel_points, ClusterSet, Point};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::geometry::{alpha_shape, Polygon};
use crate::imagecore::{load_grayscale, prepare, split_dataset, BinaryMask, Image};
use crate::segment::{
    adaptive_mean_threshold, clean_noise, combine_masks, detect_busbars, disparity_intensity, mask_to_points,
    otsu_threshold, BusbarLayout, OtsuResult,
};
use crate::ssim::{ssim_map, DisparityMap};
use crate::synthcell::{read_manifest, MANIFEST_FILE};

pub const TIMING_FILE: &str = "timing.json";
pub const RECORDS_DIR: &str = "records";
pub const VOC_DIR: &str = "voc";

/// Wall-clock seconds spent in each stage of one image.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub prepare: f64,
    pub reconstruct: f64,
    pub disparity: f64,
    pub threshold: f64,
    pub clean: f64,
    pub cluster: f64,
    pub polygons: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.prepare + self.reconstruct + self.disparity + self.threshold + self.clean + self.cluster + self.polygons
    }
}

/// Intermediate products, all at model resolution.
#[derive(Debug, Clone)]
pub struct Trace {
    pub prepared: Image,
    pub reconstruction: Image,
    pub disparity: DisparityMap,
    pub intensity: Image,
    pub otsu: OtsuResult,
    pub adaptive: BinaryMask,
    /// Combined threshold masks after the `min_disparity` floor.
    pub combined: BinaryMask,
    pub layout: BusbarLayout,
    pub cleaned: BinaryMask,
    pub clusters: ClusterSet,
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    pub record: AnnotationRecord,
    pub timings: StageTimings,
    pub trace: Trace,
}

fn lap(t: &mut Instant) -> f64 {
    let s = t.elapsed().as_secs_f64();
    *t = Instant::now();
    s
}

/// Output of the stages that follow the disparity map.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub otsu: OtsuResult,
    pub adaptive: BinaryMask,
    pub combined: BinaryMask,
    pub layout: BusbarLayout,
    pub cleaned: BinaryMask,
    pub clusters: ClusterSet,
    /// Polygons in the `raw_dims` frame.
    pub polygons: Vec<Polygon>,
    pub degenerate: Vec<Vec<Point>>,
    /// Seconds spent thresholding, cleaning, clustering and tracing.
    pub seconds: [f64; 4],
}

/// Thresholds a disparity intensity image, removes busbar and border
/// pixels, clusters what is left and traces one polygon set per cluster.
/// `prepared` is the model input the intensity was computed from;
/// `raw_dims` is the frame the polygons are scaled to.
pub fn extract_defects(
    cfg: &PipelineConfig,
    prepared: &Image,
    intensity: &Image,
    raw_dims: (usize, usize),
) -> Result<Extraction> {
    let mut t = Instant::now();
    let mut seconds = [0.0; 4];
    let (mw, mh) = intensity.dims();
    let otsu = otsu_threshold(intensity);
    let adaptive = adaptive_mean_threshold(intensity, &cfg.threshold)?;
    let mut combined = combine_masks(&otsu.mask, &adaptive, cfg.threshold.combine_mode)?;
    for y in 0..mh {
        for x in 0..mw {
            if intensity.get(x, y) < cfg.min_disparity {
                combined.set(x, y, false);
            }
        }
    }
    seconds[0] = lap(&mut t);

    let layout = detect_busbars(prepared, &cfg.busbars)?;
    let cleaned = clean_noise(&combined, &layout)?;
    seconds[1] = lap(&mut t);

    let points = pixel_points(&mask_to_points(&cleaned));
    let clusters = dbscan(&points, &cfg.dbscan)?;
    seconds[2] = lap(&mut t);

    let sx = raw_dims.0 as f64 / mw as f64;
    let sy = raw_dims.1 as f64 / mh as f64;
    let (w, h) = (raw_dims.0 as f64, raw_dims.1 as f64);
    let to_raw = |p: &Point| ((p.0 * sx).clamp(0.0, w), (p.1 * sy).clamp(0.0, h));
    let mut polygons = Vec::new();
    let mut degenerate = Vec::new();
    for c in &clusters.clusters {
        let pts = c.points();
        let shapes = match alpha_shape(&pts, cfg.alpha) {
            Ok(s) => s,
            Err(Error::DegenerateGeometry(_)) => Vec::new(),
            Err(e) => return Err(e),
        };
        let mut kept = 0;
        for poly in shapes {
            if let Ok(p) = Polygon::new(poly.vertices.iter().map(to_raw).collect()) {
                polygons.push(p);
                kept += 1;
            }
        }
        if kept == 0 {
            degenerate.push(pts.iter().map(to_raw).collect());
        }
    }
    seconds[3] = lap(&mut t);
    Ok(Extraction {
        otsu,
        adaptive,
        combined,
        layout,
        cleaned,
        clusters,
        polygons,
        degenerate,
        seconds,
    })
}

/// Share of the training images used for fitting; the rest validate.
pub const TRAIN_FRACTION: f64 = 0.8;

/// Trains a fresh model at `cfg.scale` on defect-free images. Images are
/// prepared to the model input, split with `cfg.seed`, and the model is
/// initialized with `cfg.seed`; `observe` sees each epoch's training loss.
pub fn train_model(
    cfg: &PipelineConfig,
    images: &[Image],
    observe: impl FnMut(usize, f64),
) -> Result<(Model, TrainReport)> {
    let shape = cfg.scale.input_shape();
    let prepared = images
        .par_iter()
        .map(|img| prepare(img, shape.w, shape.h))
        .collect::<Result<Vec<_>>>()?;
    let split = split_dataset(prepared, TRAIN_FRACTION, cfg.seed)?;
    let mut model = build_model(cfg.scale, cfg.seed);
    let report = train_with_observer(&mut model, &split, &cfg.train, observe)?;
    Ok((model, report))
}

/// Runs every stage on one raw image (any size, 0–255 or unit scale).
/// Polygon coordinates are mapped back to the raw image's pixel frame.
pub fn segment_image(
    model: &Model,
    cfg: &PipelineConfig,
    raw: &Image,
    image_id: &str,
    source_path: &str,
) -> Result<Segmentation> {
    let mut timings = StageTimings::default();
    let mut t = Instant::now();
    let shape = model.input_shape;
    let prepared = prepare(raw, shape.w, shape.h)?;
    timings.prepare = lap(&mut t);

    let reconstruction = model.forward(&Tensor::from_image(&prepared))?.to_image();
    timings.reconstruct = lap(&mut t);

    let disparity = ssim_map(&prepared, &reconstruction, &cfg.disparity_ssim)?;
    let intensity = disparity_intensity(&disparity);
    timings.disparity = lap(&mut t);

    let post = extract_defects(cfg, &prepared, &intensity, raw.dims())?;
    timings.threshold = post.seconds[0];
    timings.clean = post.seconds[1];
    timings.cluster = post.seconds[2];
    timings.polygons = post.seconds[3];

    let record = AnnotationRecord::silver(
        image_id,
        source_path,
        raw.width(),
        raw.height(),
        post.polygons,
        post.degenerate,
        Utc::now(),
    );
    record.validate()?;
    Ok(Segmentation {
        record,
        timings,
        trace: Trace {
            prepared,
            reconstruction,
            disparity,
            intensity,
            otsu: post.otsu,
            adaptive: post.adaptive,
            combined: post.combined,
            layout: post.layout,
            cleaned: post.cleaned,
            clusters: post.clusters,
        },
    })
}

/// One image to segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferInput {
    pub id: String,
    pub path: PathBuf,
}

/// Lists the images of a directory. A dataset directory (one holding a
/// manifest) yields its entries in manifest order with their ids; any
/// other directory yields its PNG files sorted by name, keyed by stem.
pub fn discover_inputs(dir: impl AsRef<Path>) -> Result<Vec<InferInput>> {
    let dir = dir.as_ref();
    if dir.join(MANIFEST_FILE).is_file() {
        let m = read_manifest(dir)?;
        return Ok(m
            .entries
            .into_iter()
            .map(|e| InferInput {
                id: e.id,
                path: dir.join(e.image),
            })
            .collect());
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::Io(e).at(dir))? {
        let path = entry?.path();
        let is_png = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if path.is_file() && is_png {
            let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_owned();
            out.push(InferInput { id, path });
        }
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

/// Result for one input of a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageOutcome {
    pub id: String,
    pub path: PathBuf,
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<StageTimings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub images: usize,
    pub failures: usize,
    pub workers: usize,
    pub wall_seconds: f64,
    /// Mean per-image processing seconds over successful images.
    pub mean_seconds_per_image: f64,
    pub outcomes: Vec<ImageOutcome>,
}

impl TimingReport {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Io(e).at(path))?;
        serde_json::from_str(&text).map_err(|e| Error::format(e.to_string()).at(path))
    }
}

#[derive(Debug, Clone)]
pub struct InferReport {
    /// Successful records in input order.
    pub records: Vec<AnnotationRecord>,
    pub timing: TimingReport,
}

impl InferReport {
    pub fn all_failed(&self) -> bool {
        self.timing.images > 0 && self.timing.failures == self.timing.images
    }
}

fn segment_path(model: &Model, cfg: &PipelineConfig, input: &InferInput) -> Result<Segmentation> {
    let raw = load_grayscale(&input.path)?;
    segment_image(model, cfg, &raw, &input.id, &input.path.to_string_lossy())
}

/// Segments a batch on `cfg.workers` threads. Failures are recorded per
/// image; outputs keep input order.
pub fn run_infer(model: &Model, cfg: &PipelineConfig, inputs: &[InferInput]) -> Result<InferReport> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::argument(format!("worker pool: {e}")))?;
    let start = Instant::now();
    let results: Vec<(Result<Segmentation>, f64)> = pool.install(|| {
        inputs
            .par_iter()
            .map(|input| {
                let t = Instant::now();
                let r = segment_path(model, cfg, input);
                (r, t.elapsed().as_secs_f64())
            })
            .collect()
    });
    let wall_seconds = start.elapsed().as_secs_f64();

    let mut records = Vec::new();
    let mut outcomes = Vec::with_capacity(inputs.len());
    for (input, (r, seconds)) in inputs.iter().zip(results) {
        let mut outcome = ImageOutcome {
            id: input.id.clone(),
            path: input.path.clone(),
            seconds,
            timings: None,
            error: None,
        };
        match r {
            Ok(s) => {
                outcome.timings = Some(s.timings);
                records.push(s.record);
            }
            Err(e) => {
                warn!("{}: {e}", input.path.display());
                outcome.error = Some(e.to_string());
            }
        }
        outcomes.push(outcome);
    }
    let ok: Vec<f64> = outcomes.iter().filter(|o| o.error.is_none()).map(|o| o.seconds).collect();
    let mean = if ok.is_empty() { 0.0 } else { ok.iter().sum::<f64>() / ok.len() as f64 };
    let timing = TimingReport {
        images: inputs.len(),
        failures: inputs.len() - ok.len(),
        workers: cfg.workers,
        wall_seconds,
        mean_seconds_per_image: mean,
        outcomes,
    };
    info!(
        "segmented {}/{} images, {:.3} s/image",
        ok.len(),
        timing.images,
        timing.mean_seconds_per_image
    );
    Ok(InferReport { records, timing })
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::format(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::Io(e).at(path))
}

/// Writes `records/<id>.json`, the COCO document, `voc/<stem>.xml` and
/// the timing report under `out`.
pub fn write_outputs(out: impl AsRef<Path>, report: &InferReport) -> Result<()> {
    let out = out.as_ref();
    let records_dir = out.join(RECORDS_DIR);
    let voc_dir = out.join(VOC_DIR);
    for d in [&records_dir, &voc_dir] {
        fs::create_dir_all(d).map_err(|e| Error::Io(e).at(d))?;
    }
    for r in &report.records {
        write_json(&records_dir.join(format!("{}.json", r.image_id)), r)?;
        let folder = Path::new(&r.source_path)
            .parent()
            .and_then(|p| p.file_name())
            .and_then(|s| s.to_str())
            .unwrap_or("");
        let xml = to_voc(r, folder, "defect")?;
        let path = voc_dir.join(voc_file_name(r));
        fs::write(&path, xml).map_err(|e| Error::Io(e).at(&path))?;
    }
    let coco = to_coco(&report.records, &[Category::defect()])?;
    let path = out.join(COCO_FILE);
    fs::write(&path, coco).map_err(|e| Error::Io(e).at(&path))?;
    write_json(&out.join(TIMING_FILE), &report.timing)
}

/// Reads every `records/<id>.json` under `dir`, sorted by id.
pub fn read_records(dir: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>> {
    let dir = dir.as_ref().join(RECORDS_DIR);
    let mut out = Vec::new();
    for entry in fs::read_dir(&dir).map_err(|e| Error::Io(e).at(&dir))? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::Io(e).at(&path))?;
        let r: AnnotationRecord = serde_json::from_str(&text).map_err(|e| Error::format(e.to_string()).at(&path))?;
        r.validate().map_err(|e| e.at(&path))?;
        out.push(r);
    }
    out.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    Ok(out)
}
