//! File-backed record store.
//!
//! Layout under the store directory:
//!
//! ```text
//! manifest.tsv                      identifier, datestamp, A|D, record path
//! records/<stem>.xml                archival OJS article, galleys by href
//! galleys/<stem>/<filename>         galley payloads
//! .lock                             held by the single writer
//! ```
//!
//! `<stem>` is the identifier with unsafe characters replaced, followed by a
//! short hash of the full identifier so that distinct identifiers never share
//! files.
//!
//! Every change is committed by one atomic rename of the manifest. New files
//! are first written next to their destination with a `.new` suffix; the
//! committed manifest lists them in `#pending` lines (to be promoted) and
//! files to delete in `#remove` lines. Once those steps are done the manifest
//! is rewritten without the journal lines. Opening a store finishes any
//! journal left behind and deletes uncommitted `.new` files, so an
//! interrupted write leaves either the old state or the new one.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::ops::Deref;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::ArticleRecord;
use crate::oai::{parse_datestamp, Datestamp, RecordHeader};
use crate::ojs::{emit_ojs_with, parse_ojs, GalleyPayloads, OjsDocument, OjsEmitOptions, OjsError, OjsProfile};

const MANIFEST: &str = "manifest.tsv";
const MANIFEST_TMP: &str = "manifest.tsv.tmp";
const LOCK: &str = ".lock";
const NEW_SUFFIX: &str = ".new";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store write failed: {0}")]
    StoreWrite(String),
    #[error("store read failed: {0}")]
    StoreRead(String),
    #[error("manifest line {line}: {reason}")]
    CorruptManifest { line: usize, reason: String },
    #[error("identifier {0:?} is empty or contains tabs or line breaks")]
    BadIdentifier(String),
    #[error("record `{identifier}` has two galleys named `{filename}`")]
    DuplicateGalley { identifier: String, filename: String },
    #[error(transparent)]
    Record(#[from] OjsError),
    #[error("injected fault at write step {0}")]
    InjectedFault(usize),
}

fn write_err(path: &Path, e: io::Error) -> StoreError {
    StoreError::StoreWrite(format!("{}: {e}", path.display()))
}

fn read_err(path: &Path, e: io::Error) -> StoreError {
    StoreError::StoreRead(format!("{}: {e}", path.display()))
}

/// Source of datestamps for records written without an explicit one.
pub trait Clock: Send + Sync + fmt::Debug {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// A clock that only moves when told to.
#[derive(Debug)]
pub struct FixedClock(Mutex<DateTime<Utc>>);

impl FixedClock {
    pub fn new(at: DateTime<Utc>) -> Self {
        FixedClock(Mutex::new(at))
    }

    pub fn set(&self, at: DateTime<Utc>) {
        *self.0.lock().unwrap() = at;
    }

    pub fn advance(&self, secs: i64) {
        *self.0.lock().unwrap() += chrono::Duration::seconds(secs);
    }
}

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock().unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpsertOutcome {
    Added,
    Updated,
    Unchanged,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub datestamp: Datestamp,
    pub deleted: bool,
    /// Relative to the store directory. Kept for tombstones even though the
    /// file is gone.
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StoreManifest {
    pub entries: BTreeMap<String, ManifestEntry>,
    pub watermark: Option<Datestamp>,
    pending: Vec<String>,
    remove: Vec<String>,
}

impl StoreManifest {
    pub fn parse(text: &str) -> Result<StoreManifest, StoreError> {
        let mut m = StoreManifest::default();
        for (idx, line) in text.lines().enumerate() {
            let corrupt = |reason: &str| StoreError::CorruptManifest {
                line: idx + 1,
                reason: reason.to_string(),
            };
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            match fields.as_slice() {
                ["#watermark", ds] => {
                    m.watermark = Some(parse_datestamp(ds).map_err(|_| corrupt("bad watermark"))?)
                }
                ["#pending", path] => m.pending.push(path.to_string()),
                ["#remove", path] => m.remove.push(path.to_string()),
                [id, ds, flag, path] if !id.starts_with('#') => {
                    let deleted = match *flag {
                        "A" => false,
                        "D" => true,
                        _ => return Err(corrupt("status must be A or D")),
                    };
                    let datestamp = parse_datestamp(ds).map_err(|_| corrupt("bad datestamp"))?;
                    let entry = ManifestEntry {
                        datestamp,
                        deleted,
                        file: path.to_string(),
                    };
                    if m.entries.insert(id.to_string(), entry).is_some() {
                        return Err(corrupt("duplicate identifier"));
                    }
                }
                _ => return Err(corrupt("expected identifier, datestamp, A|D, path")),
            }
        }
        Ok(m)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        if let Some(w) = &self.watermark {
            out.push_str(&format!("#watermark\t{w}\n"));
        }
        for p in &self.pending {
            out.push_str(&format!("#pending\t{p}\n"));
        }
        for p in &self.remove {
            out.push_str(&format!("#remove\t{p}\n"));
        }
        for (id, e) in &self.entries {
            let flag = if e.deleted { "D" } else { "A" };
            out.push_str(&format!("{id}\t{}\t{flag}\t{}\n", e.datestamp, e.file));
        }
        out
    }

    pub fn header(&self, identifier: &str) -> Option<RecordHeader> {
        self.entries.get(identifier).map(|e| RecordHeader {
            identifier: identifier.to_string(),
            datestamp: e.datestamp,
            set_specs: Vec::new(),
            deleted: e.deleted,
        })
    }

    fn has_journal(&self) -> bool {
        !self.pending.is_empty() || !self.remove.is_empty()
    }
}

/// Safe file stem for an identifier.
pub fn file_stem(identifier: &str) -> String {
    let mut stem: String = identifier
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .take(64)
        .collect();
    let digest = Sha256::digest(identifier.as_bytes());
    stem.push('-');
    stem.push_str(&hex::encode(&digest[..4]));
    stem
}

/// Read-only view of a store as of one manifest read. Takes no lock.
#[derive(Debug, Clone)]
pub struct StoreSnapshot {
    root: PathBuf,
    manifest: StoreManifest,
}

impl StoreSnapshot {
    pub fn load(dir: impl AsRef<Path>) -> Result<StoreSnapshot, StoreError> {
        let root = dir.as_ref().to_path_buf();
        let path = root.join(MANIFEST);
        let manifest = match fs::read_to_string(&path) {
            Ok(text) => StoreManifest::parse(&text)?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => StoreManifest::default(),
            Err(e) => return Err(read_err(&path, e)),
        };
        Ok(StoreSnapshot { root, manifest })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &StoreManifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.manifest.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.entries.is_empty()
    }

    pub fn watermark(&self) -> Option<Datestamp> {
        self.manifest.watermark
    }

    pub fn header(&self, identifier: &str) -> Option<RecordHeader> {
        self.manifest.header(identifier)
    }

    /// Every header, tombstones included, ordered by (datestamp, identifier).
    pub fn headers(&self) -> Vec<RecordHeader> {
        self.list(None, None)
    }

    /// Headers whose datestamp lies in the inclusive window. A day-granularity
    /// `until` covers the whole day.
    pub fn list(&self, from: Option<Datestamp>, until: Option<Datestamp>) -> Vec<RecordHeader> {
        let mut out: Vec<RecordHeader> = self
            .manifest
            .entries
            .iter()
            .filter(|(_, e)| {
                let t = e.datestamp.instant();
                from.is_none_or(|f| t >= f.instant()) && until.is_none_or(|u| t <= u.upper_instant())
            })
            .map(|(id, _)| self.manifest.header(id).unwrap())
            .collect();
        out.sort_by(|a, b| {
            (a.datestamp.instant(), &a.identifier).cmp(&(b.datestamp.instant(), &b.identifier))
        });
        out
    }

    pub fn earliest_datestamp(&self) -> Option<Datestamp> {
        self.manifest.entries.values().map(|e| e.datestamp).min()
    }

    pub fn latest_datestamp(&self) -> Option<Datestamp> {
        self.manifest.entries.values().map(|e| e.datestamp).max()
    }

    /// The stored record with galley payloads loaded; `None` for unknown
    /// identifiers and tombstones.
    pub fn get(&self, identifier: &str) -> Result<Option<ArticleRecord>, StoreError> {
        let Some(entry) = self.manifest.entries.get(identifier) else {
            return Ok(None);
        };
        if entry.deleted {
            return Ok(None);
        }
        let bytes = self.read(&entry.file)?;
        let mut doc = parse_ojs(&bytes)?;
        let mut record = doc
            .records
            .pop()
            .ok_or_else(|| StoreError::StoreRead(format!("{}: no article", entry.file)))?;
        let stem = file_stem(identifier);
        for g in &mut record.galleys {
            g.payload = self.read(&format!("galleys/{stem}/{}", g.filename))?;
        }
        Ok(Some(record))
    }

    fn read(&self, rel: &str) -> Result<Vec<u8>, StoreError> {
        // A writer may be between its commit and the promotion of new files.
        if self.manifest.pending.iter().any(|p| p == rel) {
            let staged = self.root.join(format!("{rel}{NEW_SUFFIX}"));
            if let Ok(bytes) = fs::read(&staged) {
                return Ok(bytes);
            }
        }
        let path = self.root.join(rel);
        fs::read(&path).map_err(|e| read_err(&path, e))
    }

    /// Consistency problems, if any: missing or unreadable record files, stray
    /// staging files, leftover journal lines.
    pub fn self_check(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.manifest.has_journal() {
            problems.push("manifest carries an unfinished journal".to_string());
        }
        if self.root.join(MANIFEST_TMP).exists() {
            problems.push(format!("stray {MANIFEST_TMP}"));
        }
        for (id, e) in &self.manifest.entries {
            if e.deleted {
                if self.root.join(&e.file).exists() {
                    problems.push(format!("tombstone `{id}` still has {}", e.file));
                }
                continue;
            }
            match self.get(id) {
                Ok(Some(r)) if r.identifier == *id => {}
                Ok(_) => problems.push(format!("{} does not hold `{id}`", e.file)),
                Err(err) => problems.push(format!("`{id}`: {err}")),
            }
        }
        for file in walk(&self.root) {
            let rel = file.strip_prefix(&self.root).unwrap_or(&file).to_string_lossy().into_owned();
            if rel.ends_with(NEW_SUFFIX) {
                problems.push(format!("stray staging file {rel}"));
            }
        }
        problems
    }
}

fn walk(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for sub in ["records", "galleys"] {
        let mut stack = vec![root.join(sub)];
        while let Some(dir) = stack.pop() {
            let Ok(rd) = fs::read_dir(&dir) else { continue };
            for entry in rd.flatten() {
                let p = entry.path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    out.push(p);
                }
            }
        }
    }
    out.sort();
    out
}

/// Crash simulation for tests: the write step with this 1-based number fails,
/// optionally after writing part of its data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultPlan {
    pub fail_at_step: usize,
    pub partial_write: bool,
}

/// The single writer of a store directory.
#[derive(Debug)]
pub struct Store {
    snap: StoreSnapshot,
    clock: Arc<dyn Clock>,
    _lock: File,
    faults: Option<FaultPlan>,
    steps: usize,
}

impl Deref for Store {
    type Target = StoreSnapshot;

    fn deref(&self) -> &StoreSnapshot {
        &self.snap
    }
}

impl Store {
    pub fn open(dir: impl AsRef<Path>) -> Result<Store, StoreError> {
        Store::open_with_clock(dir, Arc::new(SystemClock))
    }

    /// Opens (creating if needed) the store, waiting for any other writer to
    /// finish, and completes an interrupted write.
    pub fn open_with_clock(dir: impl AsRef<Path>, clock: Arc<dyn Clock>) -> Result<Store, StoreError> {
        let root = dir.as_ref().to_path_buf();
        for sub in ["records", "galleys"] {
            let p = root.join(sub);
            fs::create_dir_all(&p).map_err(|e| write_err(&p, e))?;
        }
        let lock_path = root.join(LOCK);
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&lock_path)
            .map_err(|e| write_err(&lock_path, e))?;
        lock.lock().map_err(|e| write_err(&lock_path, e))?;
        let snap = StoreSnapshot::load(&root)?;
        let mut store = Store {
            snap,
            clock,
            _lock: lock,
            faults: None,
            steps: 0,
        };
        store.recover()?;
        Ok(store)
    }

    #[cfg(any(test, feature = "testkit"))]
    pub fn set_fault_plan(&mut self, plan: Option<FaultPlan>) {
        self.faults = plan;
        self.steps = 0;
    }

    /// Number of write steps performed since the fault plan was last set.
    pub fn write_steps(&self) -> usize {
        self.steps
    }

    pub fn snapshot(&self) -> StoreSnapshot {
        self.snap.clone()
    }

    fn recover(&mut self) -> Result<(), StoreError> {
        let root = self.snap.root.clone();
        let tmp = root.join(MANIFEST_TMP);
        if tmp.exists() {
            fs::remove_file(&tmp).map_err(|e| write_err(&tmp, e))?;
        }
        let pending: BTreeSet<String> = self.snap.manifest.pending.iter().cloned().collect();
        for rel in &pending {
            let staged = root.join(format!("{rel}{NEW_SUFFIX}"));
            if staged.exists() {
                let dest = root.join(rel);
                fs::rename(&staged, &dest).map_err(|e| write_err(&dest, e))?;
            }
        }
        for rel in self.snap.manifest.remove.clone() {
            remove_if_present(&root.join(rel))?;
        }
        for file in walk(&root) {
            if file.to_string_lossy().ends_with(NEW_SUFFIX) {
                remove_if_present(&file)?;
            }
        }
        // Galley directories of records that were never committed.
        let live: BTreeSet<String> = self
            .snap
            .manifest
            .entries
            .iter()
            .filter(|(_, e)| !e.deleted)
            .map(|(id, _)| file_stem(id))
            .collect();
        if let Ok(rd) = fs::read_dir(root.join("galleys")) {
            for entry in rd.flatten() {
                let name = entry.file_name().to_string_lossy().into_owned();
                if !live.contains(&name) {
                    fs::remove_dir_all(entry.path()).map_err(|e| write_err(&entry.path(), e))?;
                }
            }
        }
        let records: BTreeSet<String> = self
            .snap
            .manifest
            .entries
            .values()
            .filter(|e| !e.deleted)
            .map(|e| e.file.clone())
            .collect();
        for file in walk(&root) {
            let rel = file.strip_prefix(&root).unwrap().to_string_lossy().replace('\\', "/");
            if rel.starts_with("records/") && !records.contains(&rel) {
                remove_if_present(&file)?;
            }
        }
        if self.snap.manifest.has_journal() {
            self.snap.manifest.pending.clear();
            self.snap.manifest.remove.clear();
            let m = self.snap.manifest.clone();
            self.write_manifest(&m)?;
        }
        Ok(())
    }

    fn step(&mut self) -> Result<Option<bool>, StoreError> {
        self.steps += 1;
        Ok(match self.faults {
            Some(p) if p.fail_at_step == self.steps => Some(p.partial_write),
            _ => None,
        })
    }

    fn write_file(&mut self, path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
        let fault = self.step()?;
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| write_err(parent, e))?;
        }
        let mut f = File::create(path).map_err(|e| write_err(path, e))?;
        if let Some(partial) = fault {
            if partial {
                f.write_all(&bytes[..bytes.len() / 2]).map_err(|e| write_err(path, e))?;
            }
            return Err(StoreError::InjectedFault(self.steps));
        }
        f.write_all(bytes).map_err(|e| write_err(path, e))?;
        f.sync_all().map_err(|e| write_err(path, e))
    }

    fn rename(&mut self, from: &Path, to: &Path) -> Result<(), StoreError> {
        if self.step()?.is_some() {
            return Err(StoreError::InjectedFault(self.steps));
        }
        fs::rename(from, to).map_err(|e| write_err(to, e))
    }

    fn remove(&mut self, path: &Path) -> Result<(), StoreError> {
        if self.step()?.is_some() {
            return Err(StoreError::InjectedFault(self.steps));
        }
        remove_if_present(path)
    }

    fn write_manifest(&mut self, m: &StoreManifest) -> Result<(), StoreError> {
        let tmp = self.snap.root.join(MANIFEST_TMP);
        let dest = self.snap.root.join(MANIFEST);
        self.write_file(&tmp, m.render().as_bytes())?;
        self.rename(&tmp, &dest)?;
        if let Ok(dir) = File::open(&self.snap.root) {
            let _ = dir.sync_all();
        }
        Ok(())
    }

    /// Commits `next` with a journal, carries the journal out, then clears it.
    fn commit(&mut self, mut next: StoreManifest, pending: Vec<String>, remove: Vec<String>) -> Result<(), StoreError> {
        next.pending = pending.clone();
        next.remove = remove.clone();
        self.write_manifest(&next)?;
        let root = self.snap.root.clone();
        for rel in &pending {
            self.rename(&root.join(format!("{rel}{NEW_SUFFIX}")), &root.join(rel))?;
        }
        for rel in &remove {
            self.remove(&root.join(rel))?;
        }
        next.pending.clear();
        next.remove.clear();
        if !pending.is_empty() || !remove.is_empty() {
            self.write_manifest(&next)?;
        }
        self.snap.manifest = next;
        Ok(())
    }

    fn next_datestamp(&self, previous: Option<Datestamp>) -> Datestamp {
        let now = Datestamp::second(self.clock.now());
        match previous {
            Some(p) if now <= p.with_granularity(crate::oai::Granularity::Second) => {
                Datestamp::second(p.upper_instant()).plus_seconds(1)
            }
            _ => now,
        }
    }

    /// Inserts or replaces a record, stamping it from the clock. Content-equal
    /// records are left alone.
    pub fn upsert(&mut self, record: &ArticleRecord) -> Result<UpsertOutcome, StoreError> {
        self.upsert_inner(record, None)
    }

    /// Like [`Store::upsert`] but with the datestamp given, as when mirroring
    /// another repository.
    pub fn upsert_at(&mut self, record: &ArticleRecord, datestamp: Datestamp) -> Result<UpsertOutcome, StoreError> {
        self.upsert_inner(record, Some(datestamp))
    }

    fn upsert_inner(&mut self, record: &ArticleRecord, datestamp: Option<Datestamp>) -> Result<UpsertOutcome, StoreError> {
        let id = record.identifier.as_str();
        if id.is_empty() || id.contains(['\t', '\n', '\r']) {
            return Err(StoreError::BadIdentifier(id.to_string()));
        }
        if record.deleted {
            self.mark_deleted_inner(id, datestamp)?;
            return Ok(UpsertOutcome::Updated);
        }
        let mut names = BTreeSet::new();
        for g in &record.galleys {
            if !names.insert(g.filename.as_str()) {
                return Err(StoreError::DuplicateGalley {
                    identifier: id.to_string(),
                    filename: g.filename.clone(),
                });
            }
        }
        let existing = self.snap.manifest.entries.get(id).cloned();
        if let Some(e) = &existing {
            if !e.deleted && datestamp.is_none_or(|d| d == e.datestamp) && self.snap.get(id)?.as_ref() == Some(record) {
                return Ok(UpsertOutcome::Unchanged);
            }
        }
        let options = OjsEmitOptions {
            profile: OjsProfile::Archival,
            galleys: GalleyPayloads::Href,
        };
        let xml = emit_ojs_with(&OjsDocument::single(record.clone()), options)?;

        let stem = file_stem(id);
        let record_rel = format!("records/{stem}.xml");
        let mut pending = Vec::new();
        for g in &record.galleys {
            let rel = format!("galleys/{stem}/{}", g.filename);
            let staged = self.snap.root.join(format!("{rel}{NEW_SUFFIX}"));
            self.write_file(&staged, &g.payload)?;
            pending.push(rel);
        }
        let staged = self.snap.root.join(format!("{record_rel}{NEW_SUFFIX}"));
        self.write_file(&staged, &xml)?;
        pending.push(record_rel.clone());

        let mut remove = Vec::new();
        if let Ok(rd) = fs::read_dir(self.snap.root.join("galleys").join(&stem)) {
            let mut stale: Vec<String> = rd
                .flatten()
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .filter(|n| !n.ends_with(NEW_SUFFIX) && !names.contains(n.as_str()))
                .map(|n| format!("galleys/{stem}/{n}"))
                .collect();
            stale.sort();
            remove.extend(stale);
        }

        let stamp = datestamp.unwrap_or_else(|| self.next_datestamp(existing.as_ref().map(|e| e.datestamp)));
        let mut next = self.snap.manifest.clone();
        next.entries.insert(
            id.to_string(),
            ManifestEntry {
                datestamp: stamp,
                deleted: false,
                file: record_rel,
            },
        );
        self.commit(next, pending, remove)?;
        Ok(if existing.is_some() {
            UpsertOutcome::Updated
        } else {
            UpsertOutcome::Added
        })
    }

    /// Replaces the record with a tombstone. Unknown identifiers get a
    /// tombstone too. Returns false when the record was already deleted.
    pub fn mark_deleted(&mut self, identifier: &str) -> Result<bool, StoreError> {
        self.mark_deleted_inner(identifier, None)
    }

    pub fn mark_deleted_at(&mut self, identifier: &str, datestamp: Datestamp) -> Result<bool, StoreError> {
        self.mark_deleted_inner(identifier, Some(datestamp))
    }

    fn mark_deleted_inner(&mut self, identifier: &str, datestamp: Option<Datestamp>) -> Result<bool, StoreError> {
        if identifier.is_empty() || identifier.contains(['\t', '\n', '\r']) {
            return Err(StoreError::BadIdentifier(identifier.to_string()));
        }
        let existing = self.snap.manifest.entries.get(identifier).cloned();
        if existing.as_ref().is_some_and(|e| e.deleted) && datestamp.is_none_or(|d| Some(d) == existing.as_ref().map(|e| e.datestamp)) {
            return Ok(false);
        }
        let stem = file_stem(identifier);
        let file = format!("records/{stem}.xml");
        let mut remove = Vec::new();
        if existing.as_ref().is_some_and(|e| !e.deleted) {
            remove.push(file.clone());
            if let Ok(rd) = fs::read_dir(self.snap.root.join("galleys").join(&stem)) {
                let mut names: Vec<String> = rd
                    .flatten()
                    .map(|e| format!("galleys/{stem}/{}", e.file_name().to_string_lossy()))
                    .collect();
                names.sort();
                remove.extend(names);
            }
        }
        let stamp = datestamp.unwrap_or_else(|| self.next_datestamp(existing.as_ref().map(|e| e.datestamp)));
        let mut next = self.snap.manifest.clone();
        next.entries.insert(
            identifier.to_string(),
            ManifestEntry {
                datestamp: stamp,
                deleted: true,
                file,
            },
        );
        self.commit(next, Vec::new(), remove)?;
        let dir = self.snap.root.join("galleys").join(&stem);
        let _ = fs::remove_dir(dir);
        Ok(true)
    }

    /// Raises the harvest watermark; never lowers it.
    pub fn advance_watermark(&mut self, to: Datestamp) -> Result<(), StoreError> {
        if self.snap.manifest.watermark.is_some_and(|w| w >= to) {
            return Ok(());
        }
        let mut next = self.snap.manifest.clone();
        next.watermark = Some(to);
        self.commit(next, Vec::new(), Vec::new())
    }
}

fn remove_if_present(path: &Path) -> Result<(), StoreError> {
    match fs::remove_file(path) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(()),
        Err(e) => Err(write_err(path, e)),
    }
}
