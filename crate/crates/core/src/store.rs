//! File-per-document persistence keyed by content digest, with
//! compare-and-swap revisions for concurrent signature appends.
//!
//! Layout under the root directory:
//! - `<id>.mrd.json`: the serialized document, exactly as handed to `put`/`update`.
//! - `<id>.rev`: `{"revision":n,"documentDigest":"<hex>"}` for that file.
//!
//! Both files are replaced by write-temporary-then-rename. The document is
//! renamed first; if a crash lands between the two renames the revision
//! file's digest no longer matches and the revision is read as one higher.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;
use thiserror::Error;

use crate::document::{
    canonicalize, digest, is_lower_hex, parse_document, serialize_document, Digest, DocumentError,
    MachineReadableDocument, DOCUMENT_EXTENSION,
};

const REVISION_EXTENSION: &str = ".rev";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown document `{0}`")]
    UnknownDocument(String),
    #[error("revision conflict: expected {expected}, current {current}")]
    RevisionConflict { expected: u64, current: u64 },
    #[error("update is not append-only: {0}")]
    NotAppendOnly(String),
    #[error("document content does not match id `{0}`")]
    ContentMismatch(String),
    #[error("document `{0}` already exists")]
    DocumentExists(String),
    #[error("stored document is malformed: {0}")]
    Malformed(#[from] DocumentError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Hex digest of the canonical content. Signatures do not affect it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DocumentId(String);

impl DocumentId {
    pub fn of(doc: &MachineReadableDocument) -> Result<Self, DocumentError> {
        Ok(DocumentId(digest(&canonicalize(&doc.content)?).to_hex()))
    }

    pub fn parse(text: &str) -> Option<Self> {
        (text.len() == 64 && is_lower_hex(text)).then(|| DocumentId(text.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DocumentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StoreRevision {
    pub document_id: DocumentId,
    pub revision: u64,
    /// Digest of the full serialized document file.
    pub document_digest: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StoreEntry {
    pub document_id: DocumentId,
    pub doc_type: String,
    pub signature_count: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct RevisionFile {
    revision: u64,
    document_digest: Digest,
}

pub struct FileStore {
    root: PathBuf,
    locks: Mutex<HashMap<DocumentId, Arc<Mutex<()>>>>,
}

impl FileStore {
    /// Opens (creating if needed) a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(FileStore {
            root,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn doc_path(&self, id: &DocumentId) -> PathBuf {
        self.root.join(format!("{id}{DOCUMENT_EXTENSION}"))
    }

    fn rev_path(&self, id: &DocumentId) -> PathBuf {
        self.root.join(format!("{id}{REVISION_EXTENSION}"))
    }

    fn lock_for(&self, id: &DocumentId) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().expect("lock table poisoned");
        locks.entry(id.clone()).or_default().clone()
    }

    fn write_atomic(&self, path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
        let mut tmp = NamedTempFile::new_in(&self.root)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| e.error)?;
        Ok(())
    }

    fn write_revision(&self, id: &DocumentId, revision: u64, document_digest: Digest) -> Result<(), StoreError> {
        let bytes = serde_json::to_vec(&RevisionFile {
            revision,
            document_digest,
        })
        .expect("revision serializes");
        self.write_atomic(&self.rev_path(id), &bytes)
    }

    /// Reads the current bytes and revision. Caller holds the document lock.
    fn read_locked(&self, id: &DocumentId) -> Result<(Vec<u8>, StoreRevision), StoreError> {
        let bytes = match fs::read(self.doc_path(id)) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(StoreError::UnknownDocument(id.to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        let document_digest = digest(&bytes);
        let revision = match fs::read(self.rev_path(id)) {
            Ok(raw) => {
                let rev: RevisionFile = serde_json::from_slice(&raw)
                    .map_err(|e| DocumentError::Malformed(format!("revision file: {e}")))?;
                if rev.document_digest == document_digest {
                    rev.revision
                } else {
                    rev.revision + 1
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => 1,
            Err(e) => return Err(e.into()),
        };
        Ok((
            bytes,
            StoreRevision {
                document_id: id.clone(),
                revision,
                document_digest,
            },
        ))
    }

    /// Stores a new document at revision 1. Storing identical bytes again is a no-op.
    pub fn put(&self, doc: &MachineReadableDocument) -> Result<(DocumentId, StoreRevision), StoreError> {
        doc.check()?;
        let id = DocumentId::of(doc)?;
        let bytes = serialize_document(doc);
        let lock = self.lock_for(&id);
        let _guard = lock.lock().expect("document lock poisoned");
        match self.read_locked(&id) {
            Ok((existing, rev)) if existing == bytes => return Ok((id, rev)),
            Ok(_) => return Err(StoreError::DocumentExists(id.to_string())),
            Err(StoreError::UnknownDocument(_)) => {}
            Err(e) => return Err(e),
        }
        let document_digest = digest(&bytes);
        self.write_atomic(&self.doc_path(&id), &bytes)?;
        self.write_revision(&id, 1, document_digest)?;
        Ok((
            id.clone(),
            StoreRevision {
                document_id: id,
                revision: 1,
                document_digest,
            },
        ))
    }

    /// Replaces the stored document if `expected_revision` is current and the
    /// new document only appends signatures.
    pub fn update(
        &self,
        id: &DocumentId,
        expected_revision: u64,
        doc: &MachineReadableDocument,
    ) -> Result<StoreRevision, StoreError> {
        doc.check()?;
        let lock = self.lock_for(id);
        let _guard = lock.lock().expect("document lock poisoned");
        let (current_bytes, current) = self.read_locked(id)?;
        if current.revision != expected_revision {
            return Err(StoreError::RevisionConflict {
                expected: expected_revision,
                current: current.revision,
            });
        }
        if &DocumentId::of(doc)? != id {
            return Err(StoreError::ContentMismatch(id.to_string()));
        }
        let stored = parse_document(&current_bytes)?;
        check_append_only(&stored, doc)?;

        let bytes = serialize_document(doc);
        let document_digest = digest(&bytes);
        let revision = current.revision + 1;
        self.write_atomic(&self.doc_path(id), &bytes)?;
        self.write_revision(id, revision, document_digest)?;
        Ok(StoreRevision {
            document_id: id.clone(),
            revision,
            document_digest,
        })
    }

    /// The stored file bytes and their revision.
    pub fn get_bytes(&self, id: &DocumentId) -> Result<(Vec<u8>, StoreRevision), StoreError> {
        let lock = self.lock_for(id);
        let _guard = lock.lock().expect("document lock poisoned");
        self.read_locked(id)
    }

    pub fn get(&self, id: &DocumentId) -> Result<(MachineReadableDocument, StoreRevision), StoreError> {
        let (bytes, rev) = self.get_bytes(id)?;
        Ok((parse_document(&bytes)?, rev))
    }

    /// Every stored document, sorted by id.
    pub fn list(&self) -> Result<Vec<StoreEntry>, StoreError> {
        let mut ids: Vec<DocumentId> = fs::read_dir(&self.root)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                DocumentId::parse(name.strip_suffix(DOCUMENT_EXTENSION)?)
            })
            .collect();
        ids.sort();
        ids.into_iter()
            .map(|id| {
                let (doc, _) = self.get(&id)?;
                Ok(StoreEntry {
                    document_id: id,
                    doc_type: doc.meta.doc_type.clone(),
                    signature_count: doc.signature_count(),
                })
            })
            .collect()
    }
}

fn check_append_only(stored: &MachineReadableDocument, next: &MachineReadableDocument) -> Result<(), StoreError> {
    let fail = |msg: &str| Err(StoreError::NotAppendOnly(msg.to_owned()));
    if stored.meta != next.meta {
        return fail("metadata changed");
    }
    if stored.extractor_signature != next.extractor_signature {
        return fail("extractor signature changed");
    }
    if next.validator_signatures.len() <= stored.validator_signatures.len() {
        return fail("no signature appended");
    }
    if stored
        .validator_signatures
        .iter()
        .zip(&next.validator_signatures)
        .any(|(a, b)| a != b)
    {
        return fail("existing signature changed or dropped");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::Timestamp;
    use crate::document::{ContentMap, Metadata};
    use crate::extraction::sign_content;
    use crate::pki::{issue_certificate, KeyPair};
    use crate::validation::{add_signature, Endorsement};

    fn t0() -> Timestamp {
        Timestamp::parse("2026-01-01T00:00:00Z").unwrap()
    }

    fn doc(name: &str) -> MachineReadableDocument {
        let key = KeyPair::from_seed([1; 32]);
        let cert = issue_certificate(&key, "E", "e@x", 10, t0()).unwrap();
        sign_content(
            Metadata::new("id", "t", t0()),
            ContentMap::new().with("name", name),
            &key,
            &cert,
            t0(),
        )
        .unwrap()
    }

    fn endorse(d: &MachineReadableDocument, seed: u8) -> MachineReadableDocument {
        let key = KeyPair::from_seed([seed; 32]);
        let cert = issue_certificate(&key, "V", "v@x", 10, t0()).unwrap();
        add_signature(d, &key, &cert, Endorsement::content_all(), t0()).unwrap()
    }

    #[test]
    fn put_get_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = FileStore::open(dir.path()).unwrap();
        let d = doc("A");
        let (id, rev) = store.put(&d).unwrap();
        assert_eq!(rev.revision, 1);
        let (bytes, rev2) = store.get_bytes(&id).unwrap();
        assert_eq!(bytes, serialize_document(&d));
        assert_eq!(rev2, rev);
        assert_eq!(store.get(&id).unwrap().0, d);
        // idempotent for identical bytes
        assert_eq!(store.put(&d).unwrap().1.revision, 1);
    }

    #[test]
    fn same_content_different_signatures_share_id() {
        let dir = tempfile::tempdir().unwrap();
        let store = FileStore::open(dir.path()).unwrap();
        let d = doc("A");
        let e = endorse(&d, 2);
        assert_eq!(DocumentId::of(&d).unwrap(), DocumentId::of(&e).unwrap());
        let (id, _) = store.put(&d).unwrap();
        assert!(matches!(store.put(&e), Err(StoreError::DocumentExists(_))));
        assert_eq!(store.update(&id, 1, &e).unwrap().revision, 2);
    }

    #[test]
    fn update_rules() {
        let dir = tempfile::tempdir().unwrap();
        let store = FileStore::open(dir.path()).unwrap();
        let d = doc("A");
        let (id, _) = store.put(&d).unwrap();
        let e1 = endorse(&d, 2);
        assert!(matches!(store.update(&id, 1, &d), Err(StoreError::NotAppendOnly(_))));
        assert_eq!(store.update(&id, 1, &e1).unwrap().revision, 2);
        let e2 = endorse(&e1, 3);
        assert!(matches!(
            store.update(&id, 1, &e2),
            Err(StoreError::RevisionConflict {
                expected: 1,
                current: 2
            })
        ));
        // dropping an existing signature
        let skip = endorse(&d, 3);
        let skip = endorse(&skip, 4);
        assert!(matches!(store.update(&id, 2, &skip), Err(StoreError::NotAppendOnly(_))));
        assert!(matches!(
            store.update(&id, 2, &endorse(&doc("B"), 2)),
            Err(StoreError::ContentMismatch(_))
        ));
        let missing = DocumentId::parse(&"0".repeat(64)).unwrap();
        assert!(matches!(
            store.update(&missing, 1, &e2),
            Err(StoreError::UnknownDocument(_))
        ));
        assert!(matches!(store.get(&missing), Err(StoreError::UnknownDocument(_))));
        assert_eq!(store.update(&id, 2, &e2).unwrap().revision, 3);
    }

    #[test]
    fn list_is_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let store = FileStore::open(dir.path()).unwrap();
        for name in ["A", "B", "C"] {
            store.put(&doc(name)).unwrap();
        }
        let entries = store.list().unwrap();
        assert_eq!(entries.len(), 3);
        assert!(entries.windows(2).all(|w| w[0].document_id < w[1].document_id));
        assert!(entries.iter().all(|e| e.signature_count == 1 && e.doc_type == "id"));
    }

    #[test]
    fn interrupted_update_reads_as_next_revision() {
        let dir = tempfile::tempdir().unwrap();
        let store = FileStore::open(dir.path()).unwrap();
        let d = doc("A");
        let (id, _) = store.put(&d).unwrap();
        // simulate a crash after the document rename but before the revision rename
        fs::write(store.doc_path(&id), serialize_document(&endorse(&d, 2))).unwrap();
        assert_eq!(store.get(&id).unwrap().1.revision, 2);
    }

    #[test]
    fn concurrent_updates_single_winner() {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(FileStore::open(dir.path()).unwrap());
        let d = doc("A");
        let (id, _) = store.put(&d).unwrap();
        let handles: Vec<_> = (0..8u8)
            .map(|i| {
                let store = store.clone();
                let next = endorse(&d, 10 + i);
                let id = id.clone();
                std::thread::spawn(move || store.update(&id, 1, &next).is_ok())
            })
            .collect();
        let winners = handles.into_iter().map(|h| h.join().unwrap()).filter(|w| *w).count();
        assert_eq!(winners, 1);
        assert_eq!(store.get(&id).unwrap().1.revision, 2);
    }
}
