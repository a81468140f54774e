//! On-disk layout: one append-only `journal.jsonl` holding every change event
//! with its full payload, plus periodic `snapshot-<seq>.json` files. A store
//! reloads by reading the newest snapshot and replaying journal entries with a
//! higher seq_no; the journal itself is never truncated, so the change feed
//! can always be replayed from cursor 0.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::types::{ChangeEvent, DatasetAspect, EntityRecord, LineageEdge};
use super::StoreError;
use crate::urn::Urn;

const JOURNAL_FILE: &str = "journal.jsonl";
const SNAPSHOT_EVERY: u64 = 100;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct JournalEntry {
    pub event: ChangeEvent,
    pub payload: JournalPayload,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op")]
#[allow(clippy::large_enum_variant)]
pub(crate) enum JournalPayload {
    /// Post-state of the entity after a create or update.
    Entity {
        record: EntityRecord,
        aspect: Option<DatasetAspect>,
    },
    Lineage {
        edge: LineageEdge,
    },
    Delete,
}

#[derive(Serialize, Deserialize)]
struct SnapshotFile {
    last_seq: u64,
    entities: Vec<SnapshotEntity>,
    lineage: Vec<LineageEdge>,
}

#[derive(Serialize, Deserialize)]
struct SnapshotEntity {
    record: EntityRecord,
    aspect: Option<DatasetAspect>,
}

pub(crate) struct LoadedSnapshot {
    pub last_seq: u64,
    pub entities: BTreeMap<Urn, EntityRecord>,
    pub aspects: HashMap<Urn, DatasetAspect>,
    pub lineage: Vec<LineageEdge>,
}

pub(crate) struct Journal {
    dir: PathBuf,
    writer: BufWriter<File>,
    appends_since_snapshot: u64,
}

fn io_err(context: &str, err: impl std::fmt::Display) -> StoreError {
    StoreError::Persistence(format!("{context}: {err}"))
}

impl Journal {
    pub fn open(dir: &Path) -> Result<Journal, StoreError> {
        fs::create_dir_all(dir).map_err(|e| io_err("create store dir", e))?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join(JOURNAL_FILE))
            .map_err(|e| io_err("open journal", e))?;
        Ok(Journal {
            dir: dir.to_path_buf(),
            writer: BufWriter::new(file),
            appends_since_snapshot: 0,
        })
    }

    pub fn append(&mut self, entry: &JournalEntry) -> Result<(), StoreError> {
        let line = serde_json::to_string(entry).map_err(|e| io_err("encode journal entry", e))?;
        writeln!(self.writer, "{line}").map_err(|e| io_err("append journal", e))?;
        self.writer.flush().map_err(|e| io_err("flush journal", e))?;
        self.appends_since_snapshot += 1;
        Ok(())
    }

    pub fn due_for_snapshot(&self) -> bool {
        self.appends_since_snapshot >= SNAPSHOT_EVERY
    }

    pub fn write_snapshot(
        &mut self,
        last_seq: u64,
        entities: &BTreeMap<Urn, EntityRecord>,
        aspects: &HashMap<Urn, DatasetAspect>,
        lineage: &[LineageEdge],
    ) -> Result<(), StoreError> {
        let file = SnapshotFile {
            last_seq,
            entities: entities
                .values()
                .map(|record| SnapshotEntity {
                    record: record.clone(),
                    aspect: aspects.get(&record.urn).cloned(),
                })
                .collect(),
            lineage: lineage.to_vec(),
        };
        let body = serde_json::to_string(&file).map_err(|e| io_err("encode snapshot", e))?;
        let tmp = self.dir.join(format!(".snapshot-{last_seq}.tmp"));
        let path = self.dir.join(format!("snapshot-{last_seq:020}.json"));
        fs::write(&tmp, body).map_err(|e| io_err("write snapshot", e))?;
        fs::rename(&tmp, &path).map_err(|e| io_err("publish snapshot", e))?;
        self.appends_since_snapshot = 0;
        Ok(())
    }

    pub fn load_latest_snapshot(&mut self) -> Result<Option<LoadedSnapshot>, StoreError> {
        let mut latest: Option<PathBuf> = None;
        for entry in fs::read_dir(&self.dir).map_err(|e| io_err("list store dir", e))? {
            let entry = entry.map_err(|e| io_err("list store dir", e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.starts_with("snapshot-") && name.ends_with(".json") {
                match latest {
                    // zero-padded seq keeps name order == numeric order
                    Some(ref prev) if prev.file_name().unwrap().to_string_lossy().as_ref() >= name.as_str() => {}
                    _ => latest = Some(entry.path()),
                }
            }
        }
        let Some(path) = latest else {
            return Ok(None);
        };
        let body = fs::read_to_string(&path).map_err(|e| io_err("read snapshot", e))?;
        let file: SnapshotFile =
            serde_json::from_str(&body).map_err(|e| io_err("parse snapshot", e))?;
        let mut entities = BTreeMap::new();
        let mut aspects = HashMap::new();
        for e in file.entities {
            if let Some(aspect) = e.aspect {
                aspects.insert(e.record.urn.clone(), aspect);
            }
            entities.insert(e.record.urn.clone(), e.record);
        }
        Ok(Some(LoadedSnapshot {
            last_seq: file.last_seq,
            entities,
            aspects,
            lineage: file.lineage,
        }))
    }

    /// Every journal entry in order. A torn final line (interrupted append) is
    /// dropped; corruption anywhere else is an error.
    pub fn read_entries(&mut self) -> Result<Vec<JournalEntry>, StoreError> {
        let path = self.dir.join(JOURNAL_FILE);
        let file = File::open(&path).map_err(|e| io_err("open journal", e))?;
        let reader = BufReader::new(file);
        let mut entries = Vec::new();
        let mut pending_error: Option<String> = None;
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| io_err("read journal", e))?;
            if line.trim().is_empty() {
                continue;
            }
            if let Some(err) = pending_error.take() {
                return Err(StoreError::Persistence(format!(
                    "journal corrupt before line {}: {err}",
                    idx + 1
                )));
            }
            match serde_json::from_str::<JournalEntry>(&line) {
                Ok(entry) => entries.push(entry),
                Err(e) => pending_error = Some(e.to_string()),
            }
        }
        Ok(entries)
    }
}
