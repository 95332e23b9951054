//! PascalVOC export, one XML document per image.
//!
//! VOC has no polygon type, so each object carries its bounding box plus an
//! `elseg:polygon` element in a separate namespace that standard VOC readers
//! skip.

use std::fmt::Write as _;

use super::coco::round6;
use super::record::AnnotationRecord;
use crate::error::Result;
use crate::geometry::Polygon;

pub const POLYGON_NS: &str = "urn:elseg:polygon:1";

/// The schema VOC output is validated against.
pub const VOC_SCHEMA: &str = include_str!("../../schema/voc.xsd");

/// Integer envelope of a polygon: `(xmin, ymin, xmax, ymax)` with the
/// minimum rounded down and the maximum rounded up.
pub fn integer_bbox(p: &Polygon) -> (u64, u64, u64, u64) {
    let (x0, y0, x1, y1) = p.bounds();
    (
        x0.floor().max(0.0) as u64,
        y0.floor().max(0.0) as u64,
        x1.ceil().max(0.0) as u64,
        y1.ceil().max(0.0) as u64,
    )
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// File name for a record's VOC document: `<image-stem>.xml`.
pub fn voc_file_name(record: &AnnotationRecord) -> String {
    let stem = std::path::Path::new(&record.source_path)
        .file_stem()
        .and_then(|s| s.to_str())
        .filter(|s| !s.is_empty())
        .unwrap_or(&record.image_id);
    format!("{stem}.xml")
}

pub fn to_voc(record: &AnnotationRecord, folder: &str, class_name: &str) -> Result<String> {
    record.validate()?;
    let file_name = std::path::Path::new(&record.source_path)
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or(&record.source_path);
    let mut x = String::new();
    let _ = writeln!(x, "<?xml version=\"1.0\" encoding=\"UTF-8\"?>");
    let _ = writeln!(x, "<annotation xmlns:elseg=\"{POLYGON_NS}\">");
    let _ = writeln!(x, "  <folder>{}</folder>", escape(folder));
    let _ = writeln!(x, "  <filename>{}</filename>", escape(file_name));
    let _ = writeln!(x, "  <path>{}</path>", escape(&record.source_path));
    let _ = writeln!(x, "  <source>\n    <database>elseg</database>\n  </source>");
    let _ = writeln!(
        x,
        "  <size>\n    <width>{}</width>\n    <height>{}</height>\n    <depth>1</depth>\n  </size>",
        record.width, record.height
    );
    let _ = writeln!(x, "  <segmented>1</segmented>");
    for p in &record.polygons {
        let (x0, y0, x1, y1) = integer_bbox(p);
        let _ = writeln!(x, "  <object>");
        let _ = writeln!(x, "    <name>{}</name>", escape(class_name));
        let _ = writeln!(x, "    <pose>Unspecified</pose>\n    <truncated>0</truncated>\n    <difficult>0</difficult>");
        let _ = writeln!(
            x,
            "    <bndbox>\n      <xmin>{x0}</xmin>\n      <ymin>{y0}</ymin>\n      <xmax>{x1}</xmax>\n      <ymax>{y1}</ymax>\n    </bndbox>"
        );
        let _ = writeln!(x, "    <elseg:polygon>");
        for v in &p.vertices {
            let _ = writeln!(x, "      <elseg:pt x=\"{:.6}\" y=\"{:.6}\"/>", round6(v.0), round6(v.1));
        }
        let _ = writeln!(x, "    </elseg:polygon>");
        let _ = writeln!(x, "  </object>");
    }
    x.push_str("</annotation>\n");
    Ok(x)
}

/// Reads the polygon extension back out of a VOC document.
pub fn voc_polygons(xml: &str) -> Result<Vec<Vec<(f64, f64)>>> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| crate::Error::format(format!("VOC XML: {e}")))?;
    let mut out = Vec::new();
    for poly in doc.descendants().filter(|n| n.has_tag_name((POLYGON_NS, "polygon"))) {
        let mut verts = Vec::new();
        for pt in poly.children().filter(|n| n.has_tag_name((POLYGON_NS, "pt"))) {
            let coord = |k: &str| -> Result<f64> {
                pt.attribute(k)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| crate::Error::format(format!("polygon point lacks a numeric {k}")))
            };
            verts.push((coord("x")?, coord("y")?));
        }
        out.push(verts);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::schema::validate_xml;
    use super::*;
    use chrono::DateTime;

    fn record() -> AnnotationRecord {
        let a = Polygon::new(vec![(2.5, 3.5), (10.5, 3.5), (6.0, 9.25)]).unwrap();
        let b = Polygon::new(vec![(20.0, 20.0), (30.0, 20.0), (30.0, 30.0), (20.0, 30.0)]).unwrap();
        AnnotationRecord::silver("cell_7", "imgs/cell_7.png", 64, 48, vec![a, b], vec![], DateTime::UNIX_EPOCH)
    }

    #[test]
    fn two_polygons_two_objects() {
        let xml = to_voc(&record(), "imgs", "defect").unwrap();
        let doc = roxmltree::Document::parse(&xml).unwrap();
        assert_eq!(doc.descendants().filter(|n| n.has_tag_name("object")).count(), 2);
        assert_eq!(voc_polygons(&xml).unwrap()[0], vec![(2.5, 3.5), (10.5, 3.5), (6.0, 9.25)]);
        assert_eq!(voc_file_name(&record()), "cell_7.xml");
    }

    #[test]
    fn bbox_is_integer_envelope() {
        let r = record();
        assert_eq!(integer_bbox(&r.polygons[0]), (2, 3, 11, 10));
        assert_eq!(integer_bbox(&r.polygons[1]), (20, 20, 30, 30));
        let xml = to_voc(&r, "imgs", "defect").unwrap();
        assert!(xml.contains("<xmin>2</xmin>") && xml.contains("<ymax>10</ymax>"));
    }

    #[test]
    fn validates_against_bundled_schema() {
        validate_xml(&to_voc(&record(), "imgs", "defect").unwrap(), VOC_SCHEMA).unwrap();
        let mut empty = record();
        empty.polygons.clear();
        validate_xml(&to_voc(&empty, "f", "defect").unwrap(), VOC_SCHEMA).unwrap();
    }

    #[test]
    fn escapes_markup() {
        let mut r = record();
        r.source_path = "a&b<c>.png".into();
        let xml = to_voc(&r, "x\"y", "defect").unwrap();
        validate_xml(&xml, VOC_SCHEMA).unwrap();
        assert!(xml.contains("a&amp;b&lt;c&gt;.png"));
    }
}
