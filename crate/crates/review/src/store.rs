//! On-disk record store with optimistic versioning and an append-only audit
//! log.
//!
//! Layout under the root directory:
//!
//! ```text
//! index.json          image id -> image and record file
//! records/<id>.json   current record, replaced by write-then-rename
//! images/<id>.png     reviewed image
//! audit.jsonl         one entry per import or decision, full record included
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use chrono::{DateTime, TimeDelta, Utc};
use elseg_core::annotate::{AnnotationRecord, Status};
use elseg_core::geometry::Polygon;
use elseg_core::imagecore::load_grayscale;
use log::{info, warn};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ReviewError};

pub const INDEX_FILE: &str = "index.json";
pub const AUDIT_FILE: &str = "audit.jsonl";
pub const RECORDS_DIR: &str = "records";
pub const IMAGES_DIR: &str = "images";

const PNG_MAGIC: &[u8] = &[0x89, b'P', b'N', b'G'];

/// Paths relative to the store root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub image: String,
    pub record: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct IndexFile {
    entries: BTreeMap<String, IndexEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditKind {
    Import,
    Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: u64,
    pub at: DateTime<Utc>,
    pub kind: AuditKind,
    pub image_id: String,
    /// Seconds from the last fetch of the record to this decision.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revision_seconds: Option<f64>,
    pub record: AnnotationRecord,
}

/// A reviewer's verdict on one record.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub expected_version: u64,
    pub status: Status,
    /// Replacement geometry; `None` keeps the current polygons.
    pub polygons: Option<Vec<Polygon>>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoreStats {
    pub total: usize,
    pub silver: usize,
    pub gold: usize,
    pub rejected: usize,
    pub decisions: usize,
    /// Mean fetch-to-decision time over decisions that followed a fetch.
    pub mean_revision_seconds: Option<f64>,
}

struct Slot {
    entry: IndexEntry,
    /// Serializes writers of this record.
    write: Mutex<()>,
    current: RwLock<Arc<AnnotationRecord>>,
    fetched: Mutex<Option<Instant>>,
}

struct AuditLog {
    file: File,
    next_seq: u64,
    last_at: DateTime<Utc>,
    revision_seconds: Vec<f64>,
    decisions: usize,
}

impl AuditLog {
    /// Appends an entry stamped strictly after the previous one.
    fn append(&mut self, path: &Path, kind: AuditKind, record: &AnnotationRecord, revision_seconds: Option<f64>) -> Result<()> {
        let now = Utc::now();
        let at = if now > self.last_at { now } else { self.last_at + TimeDelta::microseconds(1) };
        let entry = AuditEntry {
            seq: self.next_seq,
            at,
            kind,
            image_id: record.image_id.clone(),
            revision_seconds,
            record: record.clone(),
        };
        let mut line = serde_json::to_string(&entry).expect("audit entry serializes");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|e| ReviewError::io(path, e))?;
        self.next_seq += 1;
        self.last_at = at;
        if kind == AuditKind::Decision {
            self.decisions += 1;
            self.revision_seconds.extend(revision_seconds);
        }
        Ok(())
    }
}

pub struct ReviewStore {
    root: PathBuf,
    slots: BTreeMap<String, Slot>,
    audit: Mutex<AuditLog>,
}

/// Ids double as file names.
fn check_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(ReviewError::Invalid(format!("image id {id:?} is not usable as a file name")))
    }
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = File::create(&tmp).map_err(|e| ReviewError::io(&tmp, e))?;
    f.write_all(contents)
        .and_then(|_| f.sync_all())
        .map_err(|e| ReviewError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| ReviewError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("store documents serialize");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| ReviewError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| ReviewError::corrupt(path, e))
}

/// Copies a PNG verbatim; anything else readable as grayscale is re-encoded.
fn import_image(src: &Path, dest: &Path) -> Result<()> {
    let bytes = fs::read(src).map_err(|e| ReviewError::io(src, e))?;
    if bytes.starts_with(PNG_MAGIC) {
        return write_atomic(dest, &bytes);
    }
    let img = load_grayscale(src)?;
    img.save_png(dest, 255.0)?;
    Ok(())
}

/// Reads the audit log and returns the latest record per image id, checking
/// that sequence numbers and timestamps strictly increase.
pub fn replay_audit(root: impl AsRef<Path>) -> Result<BTreeMap<String, AnnotationRecord>> {
    Ok(read_audit(&root.as_ref().join(AUDIT_FILE))?
        .into_iter()
        .map(|e| (e.image_id, e.record))
        .collect())
}

pub fn read_audit(path: &Path) -> Result<Vec<AuditEntry>> {
    let f = File::open(path).map_err(|e| ReviewError::io(path, e))?;
    let mut out: Vec<AuditEntry> = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| ReviewError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let e: AuditEntry = serde_json::from_str(&line).map_err(|e| ReviewError::corrupt(path, format!("line {}: {e}", n + 1)))?;
        if let Some(prev) = out.last() {
            if e.seq <= prev.seq || e.at <= prev.at {
                return Err(ReviewError::corrupt(path, format!("line {} is out of order", n + 1)));
            }
        }
        out.push(e);
    }
    Ok(out)
}

impl ReviewStore {
    /// Creates a store in `root` from records and the images they annotate.
    /// The directory must not already hold a store.
    pub fn create(root: impl AsRef<Path>, items: Vec<(AnnotationRecord, PathBuf)>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        if root.join(INDEX_FILE).exists() {
            return Err(ReviewError::Invalid(format!("{} already holds a review store", root.display())));
        }
        for dir in [root.join(RECORDS_DIR), root.join(IMAGES_DIR)] {
            fs::create_dir_all(&dir).map_err(|e| ReviewError::io(&dir, e))?;
        }
        let mut index = IndexFile::default();
        for (record, _) in &items {
            check_id(&record.image_id)?;
            record.validate()?;
            if index.entries.contains_key(&record.image_id) {
                return Err(ReviewError::Invalid(format!("duplicate image id {:?}", record.image_id)));
            }
            let entry = IndexEntry {
                image: format!("{IMAGES_DIR}/{}.png", record.image_id),
                record: format!("{RECORDS_DIR}/{}.json", record.image_id),
            };
            index.entries.insert(record.image_id.clone(), entry);
        }
        let audit_path = root.join(AUDIT_FILE);
        File::create(&audit_path).map_err(|e| ReviewError::io(&audit_path, e))?;
        for (record, image) in &items {
            let entry = &index.entries[&record.image_id];
            import_image(image, &root.join(&entry.image))?;
            write_json(&root.join(&entry.record), record)?;
        }
        write_json(&root.join(INDEX_FILE), &index)?;

        let store = Self::open(&root)?;
        {
            let mut audit = store.audit.lock();
            for (record, _) in &items {
                audit.append(&audit_path, AuditKind::Import, record, None)?;
            }
        }
        info!("created review store at {} with {} records", root.display(), items.len());
        Ok(store)
    }

    /// Opens an existing store, checking that every index entry has its
    /// image and record.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let index: IndexFile = read_json(&root.join(INDEX_FILE))?;
        let mut slots = BTreeMap::new();
        for (id, entry) in index.entries {
            let image = root.join(&entry.image);
            if !image.is_file() {
                return Err(ReviewError::corrupt(&image, format!("image for {id:?} is missing")));
            }
            let record_path = root.join(&entry.record);
            let record: AnnotationRecord = read_json(&record_path)?;
            if record.image_id != id {
                return Err(ReviewError::corrupt(&record_path, format!("holds record {:?}", record.image_id)));
            }
            record.validate()?;
            slots.insert(
                id,
                Slot {
                    entry,
                    write: Mutex::new(()),
                    current: RwLock::new(Arc::new(record)),
                    fetched: Mutex::new(None),
                },
            );
        }

        let audit_path = root.join(AUDIT_FILE);
        let entries = if audit_path.exists() { read_audit(&audit_path)? } else { Vec::new() };
        let replayed: BTreeMap<&str, &AnnotationRecord> = entries.iter().map(|e| (e.image_id.as_str(), &e.record)).collect();
        for (id, slot) in &slots {
            if replayed.get(id.as_str()).is_some_and(|r| **r != **slot.current.read()) {
                warn!("audit log and record file disagree for {id}; the record file wins");
            }
        }
        let decisions: Vec<&AuditEntry> = entries.iter().filter(|e| e.kind == AuditKind::Decision).collect();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&audit_path)
            .map_err(|e| ReviewError::io(&audit_path, e))?;
        let audit = AuditLog {
            file,
            next_seq: entries.last().map_or(0, |e| e.seq + 1),
            last_at: entries.last().map_or(DateTime::UNIX_EPOCH, |e| e.at),
            revision_seconds: decisions.iter().filter_map(|e| e.revision_seconds).collect(),
            decisions: decisions.len(),
        };
        Ok(Self {
            root,
            slots,
            audit: Mutex::new(audit),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.slots.keys().map(String::as_str)
    }

    fn slot(&self, id: &str) -> Result<&Slot> {
        self.slots.get(id).ok_or_else(|| ReviewError::NotFound(format!("record {id:?}")))
    }

    /// Current committed record.
    pub fn get(&self, id: &str) -> Result<Arc<AnnotationRecord>> {
        Ok(self.slot(id)?.current.read().clone())
    }

    /// Like [`get`](Self::get), and starts the revision clock for `id`.
    pub fn fetch(&self, id: &str) -> Result<Arc<AnnotationRecord>> {
        let slot = self.slot(id)?;
        *slot.fetched.lock() = Some(Instant::now());
        Ok(slot.current.read().clone())
    }

    pub fn image_path(&self, id: &str) -> Result<PathBuf> {
        Ok(self.root.join(&self.slot(id)?.entry.image))
    }

    /// Snapshot of all current records in id order.
    pub fn records(&self) -> Vec<AnnotationRecord> {
        self.slots.values().map(|s| (**s.current.read()).clone()).collect()
    }

    /// Applies a decision if `expected_version` is still current.
    pub fn record_decision(&self, id: &str, decision: Decision) -> Result<AnnotationRecord> {
        let slot = self.slot(id)?;
        let _writer = slot.write.lock();
        let current = slot.current.read().clone();
        if current.version != decision.expected_version {
            return Err(ReviewError::Conflict {
                id: id.to_owned(),
                expected: decision.expected_version,
                current: current.version,
            });
        }
        let mut next = (*current).clone();
        next.apply_decision(decision.status, decision.polygons, decision.note, Utc::now())
            .map_err(|e| ReviewError::Invalid(e.to_string()))?;
        write_json(&self.root.join(&slot.entry.record), &next)?;
        let revision_seconds = slot.fetched.lock().take().map(|t| t.elapsed().as_secs_f64());
        self.audit
            .lock()
            .append(&self.root.join(AUDIT_FILE), AuditKind::Decision, &next, revision_seconds)?;
        *slot.current.write() = Arc::new(next.clone());
        Ok(next)
    }

    pub fn stats(&self) -> StoreStats {
        let mut s = StoreStats {
            total: self.slots.len(),
            silver: 0,
            gold: 0,
            rejected: 0,
            decisions: 0,
            mean_revision_seconds: None,
        };
        for slot in self.slots.values() {
            match slot.current.read().status {
                Status::Silver => s.silver += 1,
                Status::Gold => s.gold += 1,
                Status::Rejected => s.rejected += 1,
            }
        }
        let audit = self.audit.lock();
        s.decisions = audit.decisions;
        if !audit.revision_seconds.is_empty() {
            s.mean_revision_seconds = Some(audit.revision_seconds.iter().sum::<f64>() / audit.revision_seconds.len() as f64);
        }
        s
    }
}
