//! The machine-readable document: key-value content, its canonical byte form,
//! content digests and the JSON wire format that carries the signature chain.

use std::collections::btree_map::{self, BTreeMap};
use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::de::{self, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::validation::{EndorsementKind, SignatureRecord};

/// Maximum number of nested map levels in a [`ContentMap`], counting the root.
pub const MAX_DEPTH: usize = 8;

pub const PROTOCOL_VERSION: &str = "1.0";

/// Extension used for serialized documents on disk.
pub const DOCUMENT_EXTENSION: &str = ".mrd.json";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DocumentError {
    #[error("invalid content: {0}")]
    InvalidContent(String),
    #[error("unknown content path `{0}`")]
    UnknownPath(String),
    #[error("malformed document: {0}")]
    Malformed(String),
}

/// A content value: either a text leaf or a nested map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContentValue {
    Text(String),
    Map(ContentMap),
}

impl ContentValue {
    fn leaf_count(&self) -> usize {
        match self {
            ContentValue::Text(_) => 1,
            ContentValue::Map(map) => map.leaf_count(),
        }
    }
}

impl From<&str> for ContentValue {
    fn from(text: &str) -> Self {
        ContentValue::Text(text.to_owned())
    }
}

impl From<String> for ContentValue {
    fn from(text: String) -> Self {
        ContentValue::Text(text)
    }
}

impl From<ContentMap> for ContentValue {
    fn from(map: ContentMap) -> Self {
        ContentValue::Map(map)
    }
}

/// Key-value document content, ordered by key.
///
/// Keys are non-empty and never contain `.`, so dotted paths address entries
/// unambiguously. `BTreeMap<String, _>` orders by UTF-8 bytes, which is the
/// same as ordering by Unicode code point.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ContentMap {
    entries: BTreeMap<String, ContentValue>,
}

pub fn check_key(key: &str) -> Result<(), DocumentError> {
    if key.is_empty() {
        return Err(DocumentError::InvalidContent("empty key".into()));
    }
    if key.contains('.') {
        return Err(DocumentError::InvalidContent(format!("key `{key}` contains `.`")));
    }
    Ok(())
}

fn split_path(path: &str) -> Result<Vec<&str>, DocumentError> {
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(DocumentError::UnknownPath(path.to_owned()));
    }
    Ok(segments)
}

impl ContentMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a single entry. Fails on an invalid key or a key that is already present.
    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<ContentValue>) -> Result<(), DocumentError> {
        let key = key.into();
        check_key(&key)?;
        match self.entries.entry(key) {
            btree_map::Entry::Occupied(e) => Err(DocumentError::InvalidContent(format!("duplicate key `{}`", e.key()))),
            btree_map::Entry::Vacant(e) => {
                e.insert(value.into());
                Ok(())
            }
        }
    }

    /// Builder-style [`insert`](Self::insert) for tests and fixtures.
    pub fn with(mut self, key: &str, value: impl Into<ContentValue>) -> Self {
        self.insert(key, value).expect("valid content entry");
        self
    }

    /// Sets a text leaf at a dotted path, creating intermediate maps.
    pub fn insert_path(&mut self, path: &str, value: impl Into<String>) -> Result<(), DocumentError> {
        let segments = split_path(path).map_err(|_| DocumentError::InvalidContent(format!("invalid path `{path}`")))?;
        let (last, parents) = segments.split_last().expect("split yields one segment");
        let mut cursor = self;
        for seg in parents {
            check_key(seg)?;
            let slot = cursor
                .entries
                .entry((*seg).to_owned())
                .or_insert_with(|| ContentValue::Map(ContentMap::new()));
            cursor = match slot {
                ContentValue::Map(map) => map,
                ContentValue::Text(_) => {
                    return Err(DocumentError::InvalidContent(format!(
                        "path `{path}` passes through a text value"
                    )))
                }
            };
        }
        cursor.insert(*last, value.into())
    }

    pub fn get(&self, key: &str) -> Option<&ContentValue> {
        self.entries.get(key)
    }

    /// Resolves a dotted path to a leaf or sub-map.
    pub fn get_path(&self, path: &str) -> Option<&ContentValue> {
        let segments = split_path(path).ok()?;
        let (first, rest) = segments.split_first()?;
        let mut value = self.entries.get(*first)?;
        for seg in rest {
            match value {
                ContentValue::Map(map) => value = map.entries.get(*seg)?,
                ContentValue::Text(_) => return None,
            }
        }
        Some(value)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ContentValue)> {
        self.entries.iter()
    }

    pub fn keys(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn leaf_count(&self) -> usize {
        self.entries.values().map(ContentValue::leaf_count).sum()
    }

    /// Number of map levels, counting this one.
    pub fn depth(&self) -> usize {
        1 + self
            .entries
            .values()
            .filter_map(|v| match v {
                ContentValue::Map(m) => Some(m.depth()),
                ContentValue::Text(_) => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// All text leaves as `(dotted path, value)`, in canonical order.
    pub fn leaves(&self) -> Vec<(String, &str)> {
        let mut out = Vec::new();
        self.collect_leaves("", &mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a str)>) {
        for (key, value) in &self.entries {
            let path = if prefix.is_empty() {
                key.clone()
            } else {
                format!("{prefix}.{key}")
            };
            match value {
                ContentValue::Text(text) => out.push((path, text)),
                ContentValue::Map(map) => map.collect_leaves(&path, out),
            }
        }
    }

    /// Checks the structural invariants: valid keys and bounded depth.
    pub fn validate(&self) -> Result<(), DocumentError> {
        self.validate_at(1)
    }

    fn validate_at(&self, level: usize) -> Result<(), DocumentError> {
        if level > MAX_DEPTH {
            return Err(DocumentError::InvalidContent(format!(
                "nesting deeper than {MAX_DEPTH} levels"
            )));
        }
        for (key, value) in &self.entries {
            check_key(key)?;
            if let ContentValue::Map(map) = value {
                map.validate_at(level + 1)?;
            }
        }
        Ok(())
    }

    /// Parses JSON into content, rejecting non-string leaves and duplicate keys.
    pub fn from_json(bytes: &[u8]) -> Result<Self, DocumentError> {
        let map: ContentMap =
            serde_json::from_slice(bytes).map_err(|e| DocumentError::InvalidContent(e.to_string()))?;
        map.validate()?;
        Ok(map)
    }

    /// Mutable access to a leaf, used by tamper tests and tooling.
    pub fn get_path_mut(&mut self, path: &str) -> Option<&mut ContentValue> {
        let segments = split_path(path).ok()?;
        let (first, rest) = segments.split_first()?;
        let mut value = self.entries.get_mut(*first)?;
        for seg in rest {
            match value {
                ContentValue::Map(map) => value = map.entries.get_mut(*seg)?,
                ContentValue::Text(_) => return None,
            }
        }
        Some(value)
    }
}

impl Serialize for ContentMap {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_map(self.entries.iter())
    }
}

impl Serialize for ContentValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            ContentValue::Text(text) => serializer.serialize_str(text),
            ContentValue::Map(map) => map.serialize(serializer),
        }
    }
}

impl<'de> Deserialize<'de> for ContentMap {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        deserializer.deserialize_map(ContentMapVisitor)
    }
}

impl<'de> Deserialize<'de> for ContentValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        deserializer.deserialize_any(ContentValueVisitor)
    }
}

struct ContentMapVisitor;

impl<'de> Visitor<'de> for ContentMapVisitor {
    type Value = ContentMap;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("an object of string or object values")
    }

    fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<ContentMap, A::Error> {
        let mut map = ContentMap::new();
        while let Some(key) = access.next_key::<String>()? {
            let value: ContentValue = access.next_value()?;
            map.insert(key, value).map_err(de::Error::custom)?;
        }
        Ok(map)
    }
}

struct ContentValueVisitor;

impl<'de> Visitor<'de> for ContentValueVisitor {
    type Value = ContentValue;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a string or an object")
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<ContentValue, E> {
        Ok(ContentValue::Text(v.to_owned()))
    }

    fn visit_string<E: de::Error>(self, v: String) -> Result<ContentValue, E> {
        Ok(ContentValue::Text(v))
    }

    fn visit_map<A: MapAccess<'de>>(self, access: A) -> Result<ContentValue, A::Error> {
        ContentMapVisitor.visit_map(access).map(ContentValue::Map)
    }
}

/// Appends `text` as a JSON string literal. Only `"`, `\` and U+0000..U+001F
/// are escaped; control characters always use the `\u00xx` form.
pub(crate) fn write_canonical_str(out: &mut Vec<u8>, text: &str) {
    out.push(b'"');
    for ch in text.chars() {
        match ch {
            '"' => out.extend_from_slice(b"\\\""),
            '\\' => out.extend_from_slice(b"\\\\"),
            c if (c as u32) < 0x20 => {
                out.extend_from_slice(format!("\\u{:04x}", c as u32).as_bytes());
            }
            c => {
                let mut buf = [0u8; 4];
                out.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
            }
        }
    }
    out.push(b'"');
}

fn write_canonical_map(out: &mut Vec<u8>, map: &ContentMap) {
    out.push(b'{');
    for (i, (key, value)) in map.entries.iter().enumerate() {
        if i > 0 {
            out.push(b',');
        }
        write_canonical_str(out, key);
        out.push(b':');
        match value {
            ContentValue::Text(text) => write_canonical_str(out, text),
            ContentValue::Map(inner) => write_canonical_map(out, inner),
        }
    }
    out.push(b'}');
}

/// Deterministic byte form of `content`; signatures bind to these bytes.
pub fn canonicalize(content: &ContentMap) -> Result<Vec<u8>, DocumentError> {
    content.validate()?;
    let mut out = Vec::with_capacity(64);
    write_canonical_map(&mut out, content);
    Ok(out)
}

/// A SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest([u8; 32]);

impl Digest {
    pub fn of(bytes: &[u8]) -> Self {
        Digest(Sha256::digest(bytes).into())
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Accepts exactly 64 lowercase hex characters.
    pub fn from_hex(text: &str) -> Option<Self> {
        if text.len() != 64 || !is_lower_hex(text) {
            return None;
        }
        let mut bytes = [0u8; 32];
        hex::decode_to_slice(text, &mut bytes).ok()?;
        Some(Digest(bytes))
    }
}

pub(crate) fn is_lower_hex(text: &str) -> bool {
    text.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Digest::from_hex(&text).ok_or_else(|| de::Error::custom("expected 64 lowercase hex characters"))
    }
}

pub fn digest(bytes: &[u8]) -> Digest {
    Digest::of(bytes)
}

/// Selects the entries addressed by `paths` (dotted), keeping their nesting.
pub fn sub_map<'a, I>(content: &ContentMap, paths: I) -> Result<ContentMap, DocumentError>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut out = ContentMap::new();
    for path in paths {
        let value = content
            .get_path(path)
            .ok_or_else(|| DocumentError::UnknownPath(path.to_owned()))?;
        let segments = split_path(path)?;
        place(&mut out, &segments, value);
    }
    Ok(out)
}

fn place(target: &mut ContentMap, segments: &[&str], value: &ContentValue) {
    let (first, rest) = segments.split_first().expect("non-empty path");
    if rest.is_empty() {
        target.entries.insert((*first).to_owned(), value.clone());
        return;
    }
    let slot = target
        .entries
        .entry((*first).to_owned())
        .or_insert_with(|| ContentValue::Map(ContentMap::new()));
    // A sibling path may already have copied the whole sub-map; its contents
    // come from the same source, so descending into it is harmless.
    if let ContentValue::Map(inner) = slot {
        place(inner, rest, value);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Metadata {
    pub doc_type: String,
    pub template_id: String,
    pub created_at: Timestamp,
    pub protocol_version: String,
}

impl Metadata {
    pub fn new(doc_type: impl Into<String>, template_id: impl Into<String>, created_at: Timestamp) -> Self {
        Metadata {
            doc_type: doc_type.into(),
            template_id: template_id.into(),
            created_at,
            protocol_version: PROTOCOL_VERSION.to_owned(),
        }
    }
}

/// Extracted content plus the extractor's signature and the validators'
/// signatures, in append order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct MachineReadableDocument {
    pub meta: Metadata,
    pub content: ContentMap,
    pub extractor_signature: SignatureRecord,
    pub validator_signatures: Vec<SignatureRecord>,
}

impl MachineReadableDocument {
    /// Extractor record first, then validators in append order.
    pub fn records(&self) -> impl Iterator<Item = &SignatureRecord> {
        std::iter::once(&self.extractor_signature).chain(self.validator_signatures.iter())
    }

    pub fn signature_count(&self) -> usize {
        1 + self.validator_signatures.len()
    }

    pub fn find_record(&self, sig_id: &str) -> Option<(usize, &SignatureRecord)> {
        self.records().enumerate().find(|(_, r)| r.sig_id == sig_id)
    }

    /// Checks every invariant the wire format cannot express on its own.
    pub fn check(&self) -> Result<(), DocumentError> {
        let malformed = |msg: String| Err(DocumentError::Malformed(msg));
        if self.meta.protocol_version != PROTOCOL_VERSION {
            return malformed(format!("unsupported protocolVersion `{}`", self.meta.protocol_version));
        }
        self.content
            .validate()
            .map_err(|e| DocumentError::Malformed(e.to_string()))?;
        if self.content.leaf_count() == 0 {
            return malformed("content has no leaves".into());
        }
        let extractor = &self.extractor_signature;
        if !extractor.endorsement.is_extractor_attestation() {
            return malformed("extractor record must endorse CONTENT/ALL".into());
        }
        let mut seen: HashSet<&str> = HashSet::new();
        for (ordinal, record) in self.records().enumerate() {
            let expected = record.expected_sig_id(ordinal);
            if record.sig_id != expected {
                return malformed(format!(
                    "sigId `{}` does not match signer fingerprint and ordinal {ordinal}",
                    record.sig_id
                ));
            }
            record
                .endorsement
                .check_shape()
                .map_err(|e| DocumentError::Malformed(e.to_string()))?;
            if let Some(targets) = &record.endorsement.signature_targets {
                for target in targets {
                    if !seen.contains(target.as_str()) {
                        return malformed(format!(
                            "record `{}` targets `{target}` which is not an earlier signature",
                            record.sig_id
                        ));
                    }
                }
            }
            if !seen.insert(&record.sig_id) {
                return malformed(format!("duplicate sigId `{}`", record.sig_id));
            }
        }
        Ok(())
    }

    /// Leaf paths a record's endorsement covers, after expanding ALL.
    /// Returns `None` for SIGNATURE-only records and for paths that no longer resolve.
    pub fn endorsed_leaves(&self, record: &SignatureRecord) -> Option<BTreeSet<String>> {
        match record.endorsement.kind {
            EndorsementKind::Signature => None,
            EndorsementKind::Content | EndorsementKind::Both => {
                let selected = match record.endorsement.content_keys.as_ref()?.paths() {
                    None => self.content.clone(),
                    Some(paths) => sub_map(&self.content, paths.iter().map(String::as_str)).ok()?,
                };
                Some(selected.leaves().into_iter().map(|(p, _)| p).collect())
            }
        }
    }
}

pub fn parse_document(bytes: &[u8]) -> Result<MachineReadableDocument, DocumentError> {
    let doc: MachineReadableDocument =
        serde_json::from_slice(bytes).map_err(|e| DocumentError::Malformed(e.to_string()))?;
    doc.check()?;
    Ok(doc)
}

/// Pretty JSON with fields in wire order and content keys sorted, newline-terminated.
pub fn serialize_document(doc: &MachineReadableDocument) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(doc).expect("document serialization is infallible");
    out.push(b'\n');
    out
}
