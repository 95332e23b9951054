use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Polygon;
use crate::imagecore::BinaryMask;

/// `|a ∩ b| / |a ∪ b|`, or 1 when both masks are empty.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::argument(format!("mask dimensions differ: {:?} vs {:?}", a.dims(), b.dims())));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &q) in a.bits().iter().zip(b.bits()) {
        inter += (p && q) as usize;
        union += (p || q) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Sets every pixel whose center `(x + 0.5, y + 0.5)` lies inside or on
/// the boundary of any polygon (even-odd rule per polygon).
pub fn rasterize(polygons: &[Polygon], width: usize, height: usize) -> BinaryMask {
    let mut m = BinaryMask::empty(width, height);
    for p in polygons {
        let (x0, y0, x1, y1) = p.bounds();
        let span = |lo: f64, hi: f64, n: usize| {
            let a = (lo - 0.5).ceil().max(0.0) as usize;
            let b = ((hi - 0.5).floor() + 1.0).clamp(0.0, n as f64) as usize;
            a..b
        };
        for y in span(y0, y1, height) {
            for x in span(x0, x1, width) {
                if !m.get(x, y) && p.contains((x as f64 + 0.5, y as f64 + 0.5)) {
                    m.set(x, y, true);
                }
            }
        }
    }
    m
}

/// Inputs of the per-image annotation cost
/// `t_inference + t_revision + t_tuning / n_images`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Pipeline running time per image, seconds.
    pub t_inference: f64,
    /// Human review time per image, seconds.
    pub t_revision: f64,
    /// One-off parameter tuning time, seconds.
    pub t_tuning: f64,
    pub n_images: u64,
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("t_inference", self.t_inference),
            ("t_revision", self.t_revision),
            ("t_tuning", self.t_tuning),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::argument(format!("{name} must be a non-negative number, got {v}")));
            }
        }
        if self.n_images == 0 {
            return Err(Error::argument("n_images must be at least 1"));
        }
        Ok(())
    }
}

/// Seconds of total effort per annotated image.
pub fn cost_per_image(c: &CostModel) -> Result<f64> {
    c.validate()?;
    Ok(c.t_inference + c.t_revision + c.t_tuning / c.n_images as f64)
}

/// Object-level detection counts at an IoU threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DetectionCounts {
    pub truth_objects: usize,
    pub detected_truth: usize,
    pub predicted: usize,
    pub correct_predicted: usize,
}

impl DetectionCounts {
    pub fn add(&mut self, o: DetectionCounts) {
        self.truth_objects += o.truth_objects;
        self.detected_truth += o.detected_truth;
        self.predicted += o.predicted;
        self.correct_predicted += o.correct_predicted;
    }

    /// Detected truth objects over all truth objects; 1 when there are none.
    pub fn recall(&self) -> f64 {
        if self.truth_objects == 0 {
            1.0
        } else {
            self.detected_truth as f64 / self.truth_objects as f64
        }
    }

    /// Correct predictions over all predictions; 1 when there are none.
    pub fn precision(&self) -> f64 {
        if self.predicted == 0 {
            1.0
        } else {
            self.correct_predicted as f64 / self.predicted as f64
        }
    }
}

/// Matches predicted polygons to ground-truth objects (8-connected
/// components of `truth`).
///
/// A truth object is detected when the union of the predicted regions that
/// overlap it reaches `threshold` IoU with it. Busbar removal can split one
/// defect into several polygons, so a group of fragments counts as one
/// detection. A prediction is correct when it overlaps a detected object.
pub fn match_detections(predicted: &[Polygon], truth: &BinaryMask, threshold: f64) -> DetectionCounts {
    let (w, h) = truth.dims();
    let preds: Vec<BinaryMask> = predicted.iter().map(|p| rasterize(std::slice::from_ref(p), w, h)).collect();
    let objects = truth.components();
    let overlaps = |m: &BinaryMask, obj: &[(usize, usize)]| obj.iter().any(|&(x, y)| m.get(x, y));
    let mut detected = vec![false; objects.len()];
    for (k, obj) in objects.iter().enumerate() {
        let mut union = BinaryMask::empty(w, h);
        for m in preds.iter().filter(|m| overlaps(m, obj)) {
            for (i, &b) in m.bits().iter().enumerate() {
                if b {
                    union.set(i % w, i / w, true);
                }
            }
        }
        let obj_mask = {
            let mut o = BinaryMask::empty(w, h);
            obj.iter().for_each(|&(x, y)| o.set(x, y, true));
            o
        };
        detected[k] = !union.is_empty() && mask_iou(&union, &obj_mask).expect("same dimensions") >= threshold;
    }
    let correct = preds
        .iter()
        .filter(|m| objects.iter().zip(&detected).any(|(obj, &d)| d && overlaps(m, obj)))
        .count();
    DetectionCounts {
        truth_objects: objects.len(),
        detected_truth: detected.iter().filter(|&&d| d).count(),
        predicted: preds.len(),
        correct_predicted: correct,
    }
}
