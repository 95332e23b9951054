//! Annotation records, COCO and PascalVOC export, evaluation metrics and
//! the annotation cost model.

mod coco;
mod metrics;
mod record;
pub mod schema;
mod voc;

pub use coco::{bbox, coco_value, parse_coco, round6, to_coco, write_value, Category, COCO_FILE};
pub use metrics::{cost_per_image, mask_iou, match_detections, rasterize, CostModel, DetectionCounts};
pub use record::{AnnotationRecord, Status};
pub use voc::{integer_bbox, to_voc, voc_file_name, voc_polygons, POLYGON_NS, VOC_SCHEMA};
