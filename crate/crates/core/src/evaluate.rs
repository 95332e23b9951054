//! Scores annotation records against ground-truth masks.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotate::{cost_per_image, mask_iou, match_detections, rasterize, AnnotationRecord, CostModel, DetectionCounts};
use crate::config::CostSettings;
use crate::error::{Error, Result};
use crate::imagecore::BinaryMask;
use crate::pipeline::TimingReport;
use crate::synthcell::{load_mask, read_manifest};

/// IoU a truth object must reach to count as detected.
pub const DETECTION_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEvaluation {
    pub id: String,
    /// IoU of the rasterized polygons with the truth mask.
    pub iou: f64,
    pub defective: bool,
    pub polygons: usize,
    pub detection: DetectionCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub t_inference: f64,
    pub t_revision: f64,
    pub t_tuning: f64,
    pub n_images: u64,
    pub cost_per_image: f64,
}

impl CostSummary {
    pub fn new(t_inference: f64, settings: &CostSettings, n_images: u64) -> Result<Self> {
        let model = CostModel {
            t_inference,
            t_revision: settings.t_revision,
            t_tuning: settings.t_tuning,
            n_images,
        };
        Ok(Self {
            t_inference,
            t_revision: settings.t_revision,
            t_tuning: settings.t_tuning,
            n_images,
            cost_per_image: cost_per_image(&model)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub per_image: Vec<ImageEvaluation>,
    pub mean_iou: f64,
    /// Mean IoU over images whose truth mask is non-empty.
    pub mean_iou_defective: Option<f64>,
    pub defect_free_images: usize,
    /// Defect-free images that received no polygon.
    pub defect_free_without_polygons: usize,
    pub detection: DetectionCounts,
    pub precision: f64,
    pub recall: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostSummary>,
}

impl EvaluationReport {
    /// Share of defect-free images left without polygons; 1 when there are
    /// no defect-free images.
    pub fn clean_rate(&self) -> f64 {
        if self.defect_free_images == 0 {
            1.0
        } else {
            self.defect_free_without_polygons as f64 / self.defect_free_images as f64
        }
    }

    pub fn with_cost(mut self, timing: &TimingReport, settings: &CostSettings) -> Result<Self> {
        let n = self.per_image.len().max(1) as u64;
        self.cost = Some(CostSummary::new(timing.mean_seconds_per_image, settings, n)?);
        Ok(self)
    }
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Scores records against truth masks keyed by image id. The two id sets
/// must be identical.
pub fn evaluate(records: &[AnnotationRecord], truth: &BTreeMap<String, BinaryMask>) -> Result<EvaluationReport> {
    let ids: BTreeSet<&str> = records.iter().map(|r| r.image_id.as_str()).collect();
    if ids.len() != records.len() {
        return Err(Error::validation("records", "duplicate image ids"));
    }
    let missing: Vec<&str> = truth.keys().map(String::as_str).filter(|k| !ids.contains(k)).collect();
    let extra: Vec<&str> = ids.iter().copied().filter(|k| !truth.contains_key(*k)).collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::validation(
            "record ids",
            format!("no record for {missing:?}; no truth for {extra:?}"),
        ));
    }

    let mut per_image = Vec::with_capacity(records.len());
    let mut detection = DetectionCounts::default();
    for r in records {
        let t = &truth[&r.image_id];
        if t.dims() != (r.width, r.height) {
            return Err(Error::validation(
                format!("record {}", r.image_id),
                format!("size {}x{} differs from truth {:?}", r.width, r.height, t.dims()),
            ));
        }
        let pred = rasterize(&r.polygons, r.width, r.height);
        let counts = match_detections(&r.polygons, t, DETECTION_IOU);
        detection.add(counts);
        per_image.push(ImageEvaluation {
            id: r.image_id.clone(),
            iou: mask_iou(&pred, t)?,
            defective: !t.is_empty(),
            polygons: r.polygons.len(),
            detection: counts,
        });
    }
    let clean: Vec<&ImageEvaluation> = per_image.iter().filter(|e| !e.defective).collect();
    Ok(EvaluationReport {
        mean_iou: mean(per_image.iter().map(|e| e.iou)).unwrap_or(1.0),
        mean_iou_defective: mean(per_image.iter().filter(|e| e.defective).map(|e| e.iou)),
        defect_free_images: clean.len(),
        defect_free_without_polygons: clean.iter().filter(|e| e.polygons == 0).count(),
        precision: detection.precision(),
        recall: detection.recall(),
        detection,
        per_image,
        cost: None,
    })
}

/// Loads the truth masks of a dataset directory keyed by id.
pub fn load_truth(dataset_dir: impl AsRef<Path>) -> Result<BTreeMap<String, BinaryMask>> {
    let dir = dataset_dir.as_ref();
    let manifest = read_manifest(dir)?;
    let mut out = BTreeMap::new();
    for e in manifest.entries {
        let path = dir.join(&e.mask);
        let mask = load_mask(&path).map_err(|err| err.at(&path))?;
        out.insert(e.id, mask);
    }
    Ok(out)
}
