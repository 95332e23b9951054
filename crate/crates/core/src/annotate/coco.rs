//! COCO instance-segmentation export.
//!
//! Output is byte-stable: object keys are sorted, every non-integer number
//! is written with exactly six decimals, and ids are assigned in record
//! order (images) and polygon order (annotations), starting at 1. Vertices
//! are rounded to six decimals before area and bounding box are computed,
//! so parsing an export and exporting again reproduces it exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::DateTime;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::record::{AnnotationRecord, Status};
use crate::error::{Error, Result};
use crate::geometry::{signed_area, Polygon};

pub const COCO_FILE: &str = "annotations.coco.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: u64,
    pub name: String,
    pub supercategory: String,
}

impl Category {
    /// The single class used for all polygons.
    pub fn defect() -> Self {
        Self {
            id: 1,
            name: "defect".into(),
            supercategory: "defect".into(),
        }
    }
}

pub fn round6(v: f64) -> f64 {
    let r = (v * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// `[x, y, w, h]` of a vertex list.
pub fn bbox(vertices: &[(f64, f64)]) -> [f64; 4] {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(x, y) in vertices {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    [x0, y0, x1 - x0, y1 - y0]
}

fn float(v: f64) -> Value {
    Value::from(round6(v))
}

/// Builds the COCO document. Records must have distinct image ids and
/// valid geometry; `categories` must be non-empty and polygons are filed
/// under the first one.
pub fn coco_value(records: &[AnnotationRecord], categories: &[Category]) -> Result<Value> {
    let category = categories
        .first()
        .ok_or_else(|| Error::argument("at least one category is required"))?;
    let mut seen = std::collections::HashSet::new();
    let mut images = Vec::with_capacity(records.len());
    let mut annotations = Vec::new();
    for (i, r) in records.iter().enumerate() {
        r.validate()?;
        if !seen.insert(r.image_id.as_str()) {
            return Err(Error::validation(format!("record {}", r.image_id), "duplicate image id"));
        }
        let image_id = i as u64 + 1;
        images.push(json!({
            "id": image_id,
            "file_name": r.source_path,
            "width": r.width,
            "height": r.height,
            "image_key": r.image_id,
            "status": r.status.as_str(),
        }));
        for p in &r.polygons {
            let verts: Vec<(f64, f64)> = p.vertices.iter().map(|v| (round6(v.0), round6(v.1))).collect();
            let b = bbox(&verts);
            annotations.push(json!({
                "id": annotations.len() as u64 + 1,
                "image_id": image_id,
                "category_id": category.id,
                "segmentation": [verts.iter().flat_map(|v| [float(v.0), float(v.1)]).collect::<Vec<_>>()],
                "area": float(signed_area(&verts).abs()),
                "bbox": b.iter().map(|&v| float(v)).collect::<Vec<_>>(),
                "iscrowd": 0,
            }));
        }
    }
    Ok(json!({
        "images": images,
        "annotations": annotations,
        "categories": categories,
    }))
}

/// Serialized COCO document (see module docs for the format guarantees).
pub fn to_coco(records: &[AnnotationRecord], categories: &[Category]) -> Result<String> {
    let v = coco_value(records, categories)?;
    let mut out = String::new();
    write_value(&mut out, &v, 0);
    out.push('\n');
    Ok(out)
}

/// Writes JSON with sorted keys, two-space indentation and six-decimal
/// floats. Integers stay integers.
pub fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = |out: &mut String, n: usize| out.extend(std::iter::repeat_n(' ', n));
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_u64() {
                let _ = write!(out, "{i}");
            } else if let Some(i) = n.as_i64() {
                let _ = write!(out, "{i}");
            } else {
                let f = n.as_f64().unwrap_or(0.0);
                let _ = write!(out, "{:.6}", if f == 0.0 { 0.0 } else { f });
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("strings serialize")),
        Value::Array(a) => {
            if a.is_empty() {
                out.push_str("[]");
                return;
            }
            // Flat numeric arrays stay on one line.
            if a.iter().all(Value::is_number) {
                out.push('[');
                for (i, x) in a.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_value(out, x, indent);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (i, x) in a.iter().enumerate() {
                pad(out, indent + 2);
                write_value(out, x, indent + 2);
                out.push_str(if i + 1 < a.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push(']');
        }
        Value::Object(m) => {
            if m.is_empty() {
                out.push_str("{}");
                return;
            }
            let sorted: BTreeMap<&String, &Value> = m.iter().collect();
            out.push_str("{\n");
            for (i, (k, x)) in sorted.iter().enumerate() {
                pad(out, indent + 2);
                out.push_str(&serde_json::to_string(k).expect("strings serialize"));
                out.push_str(": ");
                write_value(out, x, indent + 2);
                out.push_str(if i + 1 < sorted.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push('}');
        }
    }
}

fn field<'a>(m: &'a Map<String, Value>, key: &str, ctx: &str) -> Result<&'a Value> {
    m.get(key).ok_or_else(|| Error::format(format!("{ctx}: missing \"{key}\"")))
}

fn as_u64(v: &Value, ctx: &str) -> Result<u64> {
    v.as_u64().ok_or_else(|| Error::format(format!("{ctx}: expected a non-negative integer")))
}

fn as_obj<'a>(v: &'a Value, ctx: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| Error::format(format!("{ctx}: expected an object")))
}

/// Parsed COCO document: records (timestamps unset, version 1) and
/// categories.
pub fn parse_coco(text: &str) -> Result<(Vec<AnnotationRecord>, Vec<Category>)> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::format(format!("COCO JSON: {e}")))?;
    let doc = as_obj(&doc, "document")?;
    let categories: Vec<Category> = serde_json::from_value(field(doc, "categories", "document")?.clone())
        .map_err(|e| Error::format(format!("categories: {e}")))?;
    let arr = |key: &str| -> Result<&Vec<Value>> {
        field(doc, key, "document")?
            .as_array()
            .ok_or_else(|| Error::format(format!("\"{key}\" must be an array")))
    };

    let mut records = Vec::new();
    let mut by_id = std::collections::HashMap::new();
    for (i, img) in arr("images")?.iter().enumerate() {
        let ctx = format!("images[{i}]");
        let m = as_obj(img, &ctx)?;
        let id = as_u64(field(m, "id", &ctx)?, &ctx)?;
        let text = |k: &str| -> Result<String> {
            field(m, k, &ctx)?
                .as_str()
                .map(str::to_owned)
                .ok_or_else(|| Error::format(format!("{ctx}.{k}: expected a string")))
        };
        let status: Status = text("status")?.parse()?;
        let mut r = AnnotationRecord::silver(
            text("image_key")?,
            text("file_name")?,
            as_u64(field(m, "width", &ctx)?, &ctx)? as usize,
            as_u64(field(m, "height", &ctx)?, &ctx)? as usize,
            vec![],
            vec![],
            DateTime::UNIX_EPOCH,
        );
        r.status = status;
        by_id.insert(id, records.len());
        records.push(r);
    }
    for (i, ann) in arr("annotations")?.iter().enumerate() {
        let ctx = format!("annotations[{i}]");
        let m = as_obj(ann, &ctx)?;
        let image = as_u64(field(m, "image_id", &ctx)?, &ctx)?;
        let slot = *by_id
            .get(&image)
            .ok_or_else(|| Error::format(format!("{ctx}: unknown image_id {image}")))?;
        let seg = field(m, "segmentation", &ctx)?
            .as_array()
            .and_then(|s| s.first())
            .and_then(Value::as_array)
            .ok_or_else(|| Error::format(format!("{ctx}: segmentation must be a list of polygons")))?;
        let coords: Vec<f64> = seg
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| Error::format(format!("{ctx}: non-numeric coordinate"))))
            .collect::<Result<_>>()?;
        if coords.len() % 2 != 0 {
            return Err(Error::format(format!("{ctx}: odd coordinate count")));
        }
        let verts = coords.chunks_exact(2).map(|c| (c[0], c[1])).collect();
        records[slot].polygons.push(Polygon::new(verts).map_err(|e| Error::format(format!("{ctx}: {e}")))?);
    }
    Ok((records, categories))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, polys: Vec<Polygon>) -> AnnotationRecord {
        AnnotationRecord::silver(id, format!("{id}.png"), 64, 48, polys, vec![], DateTime::UNIX_EPOCH)
    }

    fn square(x: f64, y: f64, s: f64) -> Polygon {
        Polygon::new(vec![(x, y), (x + s, y), (x + s, y + s), (x, y + s)]).unwrap()
    }

    #[test]
    fn empty_export() {
        let v: Value = serde_json::from_str(&to_coco(&[], &[Category::defect()]).unwrap()).unwrap();
        assert_eq!(v["images"], json!([]));
        assert_eq!(v["annotations"], json!([]));
    }

    #[test]
    fn unit_square_bbox_and_area() {
        let text = to_coco(&[rec("a", vec![square(10.0, 10.0, 1.0)])], &[Category::defect()]).unwrap();
        assert!(text.contains("[10.000000, 10.000000, 1.000000, 1.000000]"), "{text}");
        let v: Value = serde_json::from_str(&text).unwrap();
        let a = &v["annotations"][0];
        assert_eq!(a["area"], json!(1.0));
        assert_eq!(a["iscrowd"], json!(0));
        assert_eq!(a["category_id"], json!(1));
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let odd = Polygon::new(vec![(1.1234567, 2.0), (30.25, 2.5), (12.0, 40.333333333)]).unwrap();
        let recs = vec![
            rec("b", vec![square(3.5, 4.5, 6.0), odd]),
            rec("a", vec![]),
            rec("c", vec![square(0.0, 0.0, 2.0)]),
        ];
        let cats = [Category::defect()];
        let first = to_coco(&recs, &cats).unwrap();
        assert_eq!(first, to_coco(&recs, &cats).unwrap());
        let (back, cats2) = parse_coco(&first).unwrap();
        assert_eq!(cats2, cats);
        assert_eq!(back.iter().map(|r| r.image_id.as_str()).collect::<Vec<_>>(), ["b", "a", "c"]);
        assert_eq!(to_coco(&back, &cats2).unwrap(), first);
    }

    #[test]
    fn keys_are_sorted() {
        let text = to_coco(&[rec("a", vec![square(1.0, 1.0, 1.0)])], &[Category::defect()]).unwrap();
        let pos = |k: &str| text.find(&format!("\"{k}\"")).unwrap();
        assert!(pos("annotations") < pos("categories") && pos("categories") < pos("images"));
        assert!(pos("area") < pos("bbox") && pos("bbox") < pos("category_id"));
    }

    #[test]
    fn out_of_bounds_and_duplicates_rejected() {
        let err = to_coco(&[rec("zz", vec![square(63.5, 1.0, 1.0)])], &[Category::defect()]).unwrap_err();
        assert!(matches!(err, Error::Validation { ref subject, .. } if subject.contains("zz")));
        assert!(to_coco(&[rec("a", vec![]), rec("a", vec![])], &[Category::defect()]).is_err());
    }

    #[test]
    fn bbox_bounds_polygon_tightly() {
        let p = Polygon::new(vec![(2.0, 3.0), (9.5, 4.0), (5.0, 11.25)]).unwrap();
        assert_eq!(bbox(&p.vertices), [2.0, 3.0, 7.5, 8.25]);
    }
}
