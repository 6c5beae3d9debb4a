//! Signature records, endorsements and chain verification.
//!
//! The extractor record signs the canonical content bytes directly. Every
//! validator record signs an endorsement payload that binds the digest of the
//! endorsed content and/or the digests of earlier records' signature bytes, so
//! tampering with content or swapping an earlier signature invalidates the
//! endorsement. Validity then propagates forward along SIGNATURE targets.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::document::{
    canonicalize, check_key, digest, sub_map, write_canonical_str, ContentMap, Digest, DocumentError,
    MachineReadableDocument,
};
use crate::pki::{fingerprint, sign_bytes, verify_signature, Certificate, KeyPair, SignatureValue, TrustAnchors};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ValidationError {
    #[error("unknown content path `{0}`")]
    UnknownPath(String),
    #[error("unknown signature target `{0}`")]
    UnknownTarget(String),
    #[error("invalid endorsement: {0}")]
    InvalidEndorsement(String),
    #[error("signature does not verify over the endorsement payload")]
    BadSignature,
    #[error("malformed document: {0}")]
    Malformed(String),
}

impl From<DocumentError> for ValidationError {
    fn from(err: DocumentError) -> Self {
        match err {
            DocumentError::UnknownPath(p) => ValidationError::UnknownPath(p),
            other => ValidationError::Malformed(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EndorsementKind {
    Content,
    Signature,
    Both,
}

impl EndorsementKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EndorsementKind::Content => "CONTENT",
            EndorsementKind::Signature => "SIGNATURE",
            EndorsementKind::Both => "BOTH",
        }
    }

    pub fn covers_content(&self) -> bool {
        matches!(self, EndorsementKind::Content | EndorsementKind::Both)
    }

    pub fn covers_signatures(&self) -> bool {
        matches!(self, EndorsementKind::Signature | EndorsementKind::Both)
    }
}

/// Which content an endorsement covers: everything, or a set of dotted paths.
/// Serialized as the string `"ALL"` or an array of paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContentSelection {
    All,
    Paths(BTreeSet<String>),
}

impl ContentSelection {
    pub fn paths(&self) -> Option<&BTreeSet<String>> {
        match self {
            ContentSelection::All => None,
            ContentSelection::Paths(p) => Some(p),
        }
    }

    /// The endorsed part of `content`.
    pub fn select(&self, content: &ContentMap) -> Result<ContentMap, DocumentError> {
        match self {
            ContentSelection::All => Ok(content.clone()),
            ContentSelection::Paths(paths) => sub_map(content, paths.iter().map(String::as_str)),
        }
    }
}

impl Serialize for ContentSelection {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            ContentSelection::All => serializer.serialize_str("ALL"),
            ContentSelection::Paths(paths) => paths.serialize(serializer),
        }
    }
}

impl<'de> Deserialize<'de> for ContentSelection {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Wire {
            Marker(String),
            Paths(Vec<String>),
        }
        match Wire::deserialize(deserializer)? {
            Wire::Marker(m) if m == "ALL" => Ok(ContentSelection::All),
            Wire::Marker(m) => Err(de::Error::custom(format!(
                "expected \"ALL\" or a list of paths, got \"{m}\""
            ))),
            Wire::Paths(paths) => {
                let set: BTreeSet<String> = paths.iter().cloned().collect();
                if set.len() != paths.len() {
                    return Err(de::Error::custom("duplicate content path"));
                }
                Ok(ContentSelection::Paths(set))
            }
        }
    }
}

/// The declared scope of a signature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Endorsement {
    pub kind: EndorsementKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_keys: Option<ContentSelection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature_targets: Option<Vec<String>>,
}

impl Endorsement {
    pub fn content_all() -> Self {
        Endorsement {
            kind: EndorsementKind::Content,
            content_keys: Some(ContentSelection::All),
            signature_targets: None,
        }
    }

    pub fn content_paths<I, S>(paths: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Endorsement {
            kind: EndorsementKind::Content,
            content_keys: Some(ContentSelection::Paths(paths.into_iter().map(Into::into).collect())),
            signature_targets: None,
        }
    }

    pub fn signature<I, S>(targets: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Endorsement {
            kind: EndorsementKind::Signature,
            content_keys: None,
            signature_targets: Some(targets.into_iter().map(Into::into).collect()),
        }
    }

    pub fn both<I, S>(selection: ContentSelection, targets: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Endorsement {
            kind: EndorsementKind::Both,
            content_keys: Some(selection),
            signature_targets: Some(targets.into_iter().map(Into::into).collect()),
        }
    }

    pub fn is_extractor_attestation(&self) -> bool {
        *self == Endorsement::content_all()
    }

    pub fn targets(&self) -> &[String] {
        self.signature_targets.as_deref().unwrap_or(&[])
    }

    /// Field presence matches the kind; path and target lists are non-empty and well-formed.
    pub fn check_shape(&self) -> Result<(), ValidationError> {
        let invalid = |msg: &str| Err(ValidationError::InvalidEndorsement(msg.to_owned()));
        match (self.kind.covers_content(), &self.content_keys) {
            (true, None) => return invalid("contentKeys required for CONTENT and BOTH"),
            (false, Some(_)) => return invalid("contentKeys not allowed for SIGNATURE"),
            (true, Some(ContentSelection::Paths(paths))) => {
                if paths.is_empty() {
                    return invalid("contentKeys must not be empty");
                }
                for path in paths {
                    if path.split('.').any(|seg| check_key(seg).is_err()) {
                        return Err(ValidationError::UnknownPath(path.clone()));
                    }
                }
            }
            _ => {}
        }
        match (self.kind.covers_signatures(), &self.signature_targets) {
            (true, None) => invalid("signatureTargets required for SIGNATURE and BOTH"),
            (true, Some(t)) if t.is_empty() => invalid("signatureTargets must not be empty"),
            (false, Some(_)) => invalid("signatureTargets not allowed for CONTENT"),
            _ => Ok(()),
        }
    }
}

/// One signer's attestation, embedded in the document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SignatureRecord {
    pub sig_id: String,
    pub signer_cert: Certificate,
    pub endorsement: Endorsement,
    pub payload_digest: Digest,
    pub signature: SignatureValue,
    pub signed_at: Timestamp,
}

impl SignatureRecord {
    pub fn signer_fingerprint(&self) -> String {
        fingerprint(&self.signer_cert)
    }

    pub fn expected_sig_id(&self, ordinal: usize) -> String {
        sig_id_for(&self.signer_cert, ordinal)
    }
}

pub fn sig_id_for(cert: &Certificate, ordinal: usize) -> String {
    format!("{}#{}", fingerprint(cert), ordinal)
}

/// The bytes an extractor signs: the canonical content.
pub fn extractor_payload(content: &ContentMap) -> Result<Vec<u8>, ValidationError> {
    Ok(canonicalize(content)?)
}

/// Builds the validator payload against `content` and the records that
/// precede the new one.
fn payload_against(
    content: &ContentMap,
    earlier: &[&SignatureRecord],
    endorsement: &Endorsement,
) -> Result<Vec<u8>, ValidationError> {
    endorsement.check_shape()?;
    let mut out = Vec::with_capacity(128);
    out.push(b'{');
    if let Some(selection) = &endorsement.content_keys {
        let selected = selection.select(content)?;
        out.extend_from_slice(b"\"contentDigest\":");
        write_canonical_str(&mut out, &digest(&canonicalize(&selected)?).to_hex());
        out.push(b',');
    }
    if let Some(targets) = &endorsement.signature_targets {
        out.extend_from_slice(b"\"targets\":[");
        for (i, target) in targets.iter().enumerate() {
            let record = earlier
                .iter()
                .find(|r| &r.sig_id == target)
                .ok_or_else(|| ValidationError::UnknownTarget(target.clone()))?;
            if i > 0 {
                out.push(b',');
            }
            out.extend_from_slice(b"{\"sigId\":");
            write_canonical_str(&mut out, target);
            out.extend_from_slice(b",\"signatureDigest\":");
            write_canonical_str(&mut out, &digest(&record.signature.bytes).to_hex());
            out.push(b'}');
        }
        out.extend_from_slice(b"],");
    }
    out.extend_from_slice(b"\"kind\":");
    write_canonical_str(&mut out, endorsement.kind.as_str());
    out.push(b'}');
    Ok(out)
}

/// The bytes a validator signs to add `endorsement` to `doc`.
///
/// `{"contentDigest":…,"targets":[{"sigId":…,"signatureDigest":…}],"kind":…}`,
/// with `contentDigest` present for CONTENT/BOTH and `targets` for SIGNATURE/BOTH.
pub fn endorsement_payload(
    doc: &MachineReadableDocument,
    endorsement: &Endorsement,
) -> Result<Vec<u8>, ValidationError> {
    let records: Vec<&SignatureRecord> = doc.records().collect();
    payload_against(&doc.content, &records, endorsement)
}

/// Assembles the record a signature would occupy if appended now.
pub fn build_record(
    doc: &MachineReadableDocument,
    cert: &Certificate,
    endorsement: Endorsement,
    signature: SignatureValue,
    signed_at: Timestamp,
) -> Result<SignatureRecord, ValidationError> {
    let payload = endorsement_payload(doc, &endorsement)?;
    Ok(SignatureRecord {
        sig_id: sig_id_for(cert, doc.signature_count()),
        signer_cert: cert.clone(),
        endorsement,
        payload_digest: digest(&payload),
        signature,
        signed_at,
    })
}

/// Signs `endorsement` with `key` and returns the extended document.
pub fn add_signature(
    doc: &MachineReadableDocument,
    key: &KeyPair,
    cert: &Certificate,
    endorsement: Endorsement,
    signed_at: Timestamp,
) -> Result<MachineReadableDocument, ValidationError> {
    doc.check()?;
    let payload = endorsement_payload(doc, &endorsement)?;
    let signature = sign_bytes(key, &payload);
    let record = build_record(doc, cert, endorsement, signature, signed_at)?;
    let mut next = doc.clone();
    next.validator_signatures.push(record);
    Ok(next)
}

/// Appends a signature produced elsewhere after checking it over the
/// recomputed payload, the certificate and its validity at `now`.
pub fn append_signed(
    doc: &MachineReadableDocument,
    cert: &Certificate,
    endorsement: Endorsement,
    signature: SignatureValue,
    signed_at: Timestamp,
    now: Timestamp,
) -> Result<MachineReadableDocument, ValidationError> {
    doc.check()?;
    let payload = endorsement_payload(doc, &endorsement)?;
    if !crate::pki::verify_bytes(cert, &payload, &signature, now) {
        return Err(ValidationError::BadSignature);
    }
    let record = build_record(doc, cert, endorsement, signature, signed_at)?;
    let mut next = doc.clone();
    next.validator_signatures.push(record);
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SignatureStatus {
    pub sig_id: String,
    pub crypto_valid: bool,
    pub effectively_valid: bool,
    pub trusted: bool,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VerificationReport {
    /// One entry per record, in chain order.
    pub per_signature: Vec<SignatureStatus>,
    pub chain_order_valid: bool,
}

impl VerificationReport {
    pub fn status(&self, sig_id: &str) -> Option<&SignatureStatus> {
        self.per_signature.iter().find(|s| s.sig_id == sig_id)
    }

    pub fn all_effectively_valid(&self) -> bool {
        self.chain_order_valid && self.per_signature.iter().all(|s| s.effectively_valid)
    }
}

pub const REASON_OK: &str = "ok";
pub const REASON_UNTRUSTED: &str = "untrusted signer";

/// Evaluates every record in chain order.
///
/// `cryptoValid`: the signature verifies over the recomputed payload and the
/// certificate is self-consistent and current at `now`.
/// `effectivelyValid`: additionally the record sits correctly in the chain,
/// its stored payload digest matches, and every SIGNATURE target is itself
/// effectively valid. Trust is reported, never folded into validity.
pub fn verify_chain(
    doc: &MachineReadableDocument,
    trust: &TrustAnchors,
    now: Timestamp,
) -> Result<VerificationReport, ValidationError> {
    if doc.meta.protocol_version != crate::document::PROTOCOL_VERSION {
        return Err(ValidationError::Malformed(format!(
            "unsupported protocolVersion `{}`",
            doc.meta.protocol_version
        )));
    }
    doc.content
        .validate()
        .map_err(|e| ValidationError::Malformed(e.to_string()))?;

    let records: Vec<&SignatureRecord> = doc.records().collect();
    let mut effective: HashMap<&str, bool> = HashMap::new();
    let mut seen: HashSet<&str> = HashSet::new();
    let mut chain_order_valid = true;
    let mut per_signature = Vec::with_capacity(records.len());

    for (ordinal, record) in records.iter().enumerate() {
        let mut order_problem = None;
        if record.sig_id != record.expected_sig_id(ordinal) {
            order_problem = Some("sigId does not match signer and position".to_owned());
        } else if seen.contains(record.sig_id.as_str()) {
            order_problem = Some("duplicate sigId".to_owned());
        } else if ordinal == 0 && !record.endorsement.is_extractor_attestation() {
            order_problem = Some("extractor record must endorse CONTENT/ALL".to_owned());
        } else if let Some(t) = record.endorsement.targets().iter().find(|t| !seen.contains(t.as_str())) {
            order_problem = Some(format!("target `{t}` is not an earlier signature"));
        }
        if order_problem.is_some() {
            chain_order_valid = false;
        }
        seen.insert(&record.sig_id);

        let payload = if ordinal == 0 {
            extractor_payload(&doc.content)
        } else {
            payload_against(&doc.content, &records[..ordinal], &record.endorsement)
        };

        let cert = &record.signer_cert;
        let (crypto_valid, mut reason) = match &payload {
            Err(ValidationError::UnknownPath(p)) => (false, format!("endorsed content `{p}` missing")),
            Err(ValidationError::UnknownTarget(t)) => (false, format!("unknown target `{t}`")),
            Err(e) => (false, e.to_string()),
            Ok(_) if !cert.is_self_consistent() => (false, "certificate self-signature invalid".to_owned()),
            Ok(_) if !cert.is_current(now) => (false, "certificate not valid at verification time".to_owned()),
            Ok(bytes) if !verify_signature(cert, bytes, &record.signature) => {
                (false, "signature does not verify".to_owned())
            }
            Ok(_) => (true, REASON_OK.to_owned()),
        };

        let mut effectively_valid = crypto_valid;
        if let Some(problem) = order_problem {
            effectively_valid = false;
            if crypto_valid {
                reason = problem;
            }
        } else if effectively_valid {
            let bytes = payload.as_ref().expect("crypto-valid records have a payload");
            if digest(bytes) != record.payload_digest {
                effectively_valid = false;
                reason = "payload digest mismatch".to_owned();
            } else if let Some(t) = record
                .endorsement
                .targets()
                .iter()
                .find(|t| !effective.get(t.as_str()).copied().unwrap_or(false))
            {
                effectively_valid = false;
                reason = format!("target `{t}` is not effectively valid");
            }
        }

        let trusted = trust.contains(&record.signer_fingerprint());
        if effectively_valid && !trusted {
            reason = REASON_UNTRUSTED.to_owned();
        }
        effective.insert(&record.sig_id, effectively_valid);
        per_signature.push(SignatureStatus {
            sig_id: record.sig_id.clone(),
            crypto_valid,
            effectively_valid,
            trusted,
            reason,
        });
    }

    Ok(VerificationReport {
        per_signature,
        chain_order_valid,
    })
}

/// One row of the signature listing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SignatureSummary {
    pub sig_id: String,
    pub role: String,
    pub signer_name: String,
    pub signer_email: String,
    pub fingerprint: String,
    pub kind: EndorsementKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub content_keys: Option<ContentSelection>,
    pub targets: Vec<String>,
    pub signed_at: Timestamp,
    pub not_before: Timestamp,
    pub not_after: Timestamp,
    pub crypto_valid: bool,
    pub effectively_valid: bool,
    pub trusted: bool,
    pub reason: String,
}

pub fn list_signatures(doc: &MachineReadableDocument, report: &VerificationReport) -> Vec<SignatureSummary> {
    doc.records()
        .enumerate()
        .map(|(ordinal, record)| {
            let status = report.status(&record.sig_id);
            SignatureSummary {
                sig_id: record.sig_id.clone(),
                role: if ordinal == 0 { "extractor" } else { "validator" }.to_owned(),
                signer_name: record.signer_cert.subject_name.clone(),
                signer_email: record.signer_cert.subject_email.clone(),
                fingerprint: record.signer_fingerprint(),
                kind: record.endorsement.kind,
                content_keys: record.endorsement.content_keys.clone(),
                targets: record.endorsement.targets().to_vec(),
                signed_at: record.signed_at,
                not_before: record.signer_cert.not_before,
                not_after: record.signer_cert.not_after,
                crypto_valid: status.is_some_and(|s| s.crypto_valid),
                effectively_valid: status.is_some_and(|s| s.effectively_valid),
                trusted: status.is_some_and(|s| s.trusted),
                reason: status.map_or_else(|| "not in report".to_owned(), |s| s.reason.clone()),
            }
        })
        .collect()
}
