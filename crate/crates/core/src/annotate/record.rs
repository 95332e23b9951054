use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::cluster::Point;
use crate::error::{Error, Result};
use crate::geometry::Polygon;

/// Review state. Machine output starts as silver; a reviewer promotes it to
/// gold or rejects it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Silver,
    Gold,
    Rejected,
}

impl Status {
    /// Legal moves: silver → gold, silver → rejected, gold → gold.
    pub fn can_become(self, next: Status) -> bool {
        matches!(
            (self, next),
            (Status::Silver, Status::Gold) | (Status::Silver, Status::Rejected) | (Status::Gold, Status::Gold)
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Silver => "silver",
            Status::Gold => "gold",
            Status::Rejected => "rejected",
        }
    }
}

impl std::str::FromStr for Status {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "silver" => Ok(Status::Silver),
            "gold" => Ok(Status::Gold),
            "rejected" => Ok(Status::Rejected),
            other => Err(Error::argument(format!("unknown status {other:?}"))),
        }
    }
}

/// Annotations for one cell image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image_id: String,
    pub source_path: String,
    pub width: usize,
    pub height: usize,
    pub polygons: Vec<Polygon>,
    /// Clusters too small or too thin for a polygon, kept as point lists.
    #[serde(default)]
    pub degenerate: Vec<Vec<Point>>,
    pub status: Status,
    #[serde(default)]
    pub reviewer_note: String,
    pub version: u64,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl AnnotationRecord {
    /// Fresh machine-generated record at version 1.
    pub fn silver(
        image_id: impl Into<String>,
        source_path: impl Into<String>,
        width: usize,
        height: usize,
        polygons: Vec<Polygon>,
        degenerate: Vec<Vec<Point>>,
        now: DateTime<Utc>,
    ) -> Self {
        Self {
            image_id: image_id.into(),
            source_path: source_path.into(),
            width,
            height,
            polygons,
            degenerate,
            status: Status::Silver,
            reviewer_note: String::new(),
            version: 1,
            created_at: now,
            updated_at: now,
        }
    }

    fn invalid(&self, reason: impl Into<String>) -> Error {
        Error::validation(format!("record {}", self.image_id), reason)
    }

    /// Every polygon has at least 3 finite vertices inside
    /// `[0, width] × [0, height]`.
    pub fn validate(&self) -> Result<()> {
        if self.image_id.is_empty() {
            return Err(self.invalid("empty image id"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(self.invalid("zero image dimension"));
        }
        let (w, h) = (self.width as f64, self.height as f64);
        for (i, p) in self.polygons.iter().enumerate() {
            if p.vertices.len() < 3 {
                return Err(self.invalid(format!("polygon {i} has fewer than 3 vertices")));
            }
            if let Some(v) = p
                .vertices
                .iter()
                .find(|v| !(v.0.is_finite() && v.1.is_finite() && (0.0..=w).contains(&v.0) && (0.0..=h).contains(&v.1)))
            {
                return Err(self.invalid(format!(
                    "polygon {i} vertex ({}, {}) lies outside the {}x{} image",
                    v.0, v.1, self.width, self.height
                )));
            }
        }
        Ok(())
    }

    /// Applies a review decision. Replacement polygons, when given, become
    /// the record's geometry; a rejection keeps them for the audit trail.
    pub fn apply_decision(
        &mut self,
        next: Status,
        polygons: Option<Vec<Polygon>>,
        note: Option<String>,
        now: DateTime<Utc>,
    ) -> Result<()> {
        if !self.status.can_become(next) {
            return Err(self.invalid(format!(
                "status cannot change from {} to {}",
                self.status.as_str(),
                next.as_str()
            )));
        }
        let mut updated = self.clone();
        if let Some(p) = polygons {
            updated.polygons = p;
        }
        if let Some(n) = note {
            updated.reviewer_note = n;
        }
        updated.validate()?;
        updated.status = next;
        updated.version += 1;
        updated.updated_at = now;
        *self = updated;
        Ok(())
    }
}
