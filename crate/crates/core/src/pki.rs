//! Identities: Ed25519 key pairs, self-signed certificates, trust anchors and
//! the raw sign/verify primitives every signature in a document uses.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use ed25519_dalek::{Signer as _, SigningKey, VerifyingKey};
use rand_core::{CryptoRng, RngCore};
use serde::de::{self, Deserializer};
use serde::ser::{SerializeStruct, Serializer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::document::{canonicalize, digest, ContentMap};

pub const ALGORITHM: &str = "Ed25519";

#[derive(Debug, Error)]
pub enum PkiError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed key or certificate: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An Ed25519 signing key and its verification key.
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
}

impl KeyPair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        KeyPair {
            signing: SigningKey::generate(rng),
        }
    }

    pub fn from_seed(seed: [u8; 32]) -> Self {
        KeyPair {
            signing: SigningKey::from_bytes(&seed),
        }
    }

    pub fn seed(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn public_key(&self) -> [u8; 32] {
        self.signing.verifying_key().to_bytes()
    }

    pub fn to_base64(&self) -> String {
        BASE64.encode(self.seed())
    }

    pub fn from_base64(text: &str) -> Result<Self, PkiError> {
        let raw = BASE64
            .decode(text.trim())
            .map_err(|e| PkiError::Format(format!("private key: {e}")))?;
        let seed: [u8; 32] = raw
            .try_into()
            .map_err(|_| PkiError::Format("private key seed must be 32 bytes".into()))?;
        Ok(KeyPair::from_seed(seed))
    }

    /// Writes the base64 seed; owner-only permissions on Unix.
    pub fn save(&self, path: &Path) -> Result<(), PkiError> {
        let mut options = fs::OpenOptions::new();
        options.write(true).create_new(true);
        #[cfg(unix)]
        {
            use std::os::unix::fs::OpenOptionsExt;
            options.mode(0o600);
        }
        let mut file = options.open(path)?;
        writeln!(file, "{}", self.to_base64())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PkiError> {
        KeyPair::from_base64(&fs::read_to_string(path)?)
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("public_key", &BASE64.encode(self.public_key()))
            .finish_non_exhaustive()
    }
}

/// A signature together with the algorithm that produced it.
///
/// Wire form: `{"algorithm":"Ed25519","value":"<base64>"}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureValue {
    pub algorithm: String,
    pub bytes: Vec<u8>,
}

impl SignatureValue {
    pub fn to_base64(&self) -> String {
        BASE64.encode(&self.bytes)
    }
}

impl Serialize for SignatureValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("SignatureValue", 2)?;
        s.serialize_field("algorithm", &self.algorithm)?;
        s.serialize_field("value", &self.to_base64())?;
        s.end()
    }
}

impl<'de> Deserialize<'de> for SignatureValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Wire {
            algorithm: String,
            value: String,
        }
        let wire = Wire::deserialize(deserializer)?;
        let bytes = BASE64.decode(&wire.value).map_err(de::Error::custom)?;
        Ok(SignatureValue {
            algorithm: wire.algorithm,
            bytes,
        })
    }
}

mod base64_bytes {
    use super::*;

    pub fn serialize<S: Serializer>(bytes: &[u8], serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&BASE64.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(deserializer)?;
        BASE64.decode(text).map_err(de::Error::custom)
    }
}

/// A certificate signed by the key it certifies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Certificate {
    pub subject_name: String,
    pub subject_email: String,
    #[serde(with = "base64_bytes")]
    pub public_key: Vec<u8>,
    pub not_before: Timestamp,
    pub not_after: Timestamp,
    #[serde(with = "base64_bytes")]
    pub self_signature: Vec<u8>,
}

impl Certificate {
    /// The bytes covered by the self-signature and the fingerprint: every field
    /// except `selfSignature`, canonicalized.
    pub fn canonical_body(&self) -> Vec<u8> {
        let body = ContentMap::new()
            .with("subjectName", self.subject_name.as_str())
            .with("subjectEmail", self.subject_email.as_str())
            .with("publicKey", BASE64.encode(&self.public_key))
            .with("notBefore", self.not_before.to_string())
            .with("notAfter", self.not_after.to_string());
        canonicalize(&body).expect("certificate body is valid content")
    }

    fn verifying_key(&self) -> Option<VerifyingKey> {
        let raw: [u8; 32] = self.public_key.as_slice().try_into().ok()?;
        VerifyingKey::from_bytes(&raw).ok()
    }

    /// The self-signature verifies and the validity window is well-formed.
    pub fn is_self_consistent(&self) -> bool {
        self.not_before < self.not_after && verify_raw(self, &self.canonical_body(), &self.self_signature)
    }

    pub fn is_current(&self, now: Timestamp) -> bool {
        self.not_before <= now && now <= self.not_after
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("certificate serializes");
        text.push('\n');
        text
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, PkiError> {
        serde_json::from_slice(bytes).map_err(|e| PkiError::Format(format!("certificate: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, PkiError> {
        Certificate::from_json(&fs::read(path)?)
    }
}

/// Issues a self-signed certificate for an existing key.
pub fn issue_certificate(
    key: &KeyPair,
    subject_name: &str,
    subject_email: &str,
    validity_days: u32,
    now: Timestamp,
) -> Result<Certificate, PkiError> {
    if subject_name.trim().is_empty() {
        return Err(PkiError::InvalidArgument("subject name must not be empty".into()));
    }
    if validity_days == 0 {
        return Err(PkiError::InvalidArgument("validity must be at least one day".into()));
    }
    let mut cert = Certificate {
        subject_name: subject_name.to_owned(),
        subject_email: subject_email.to_owned(),
        public_key: key.public_key().to_vec(),
        not_before: now,
        not_after: now.plus_days(i64::from(validity_days)),
        self_signature: Vec::new(),
    };
    cert.self_signature = key.signing.sign(&cert.canonical_body()).to_bytes().to_vec();
    Ok(cert)
}

/// Generates a fresh key pair and its self-signed certificate.
pub fn generate_identity<R: RngCore + CryptoRng>(
    subject_name: &str,
    subject_email: &str,
    validity_days: u32,
    now: Timestamp,
    rng: &mut R,
) -> Result<(KeyPair, Certificate), PkiError> {
    let key = KeyPair::generate(rng);
    let cert = issue_certificate(&key, subject_name, subject_email, validity_days, now)?;
    Ok((key, cert))
}

pub fn sign_bytes(key: &KeyPair, payload: &[u8]) -> SignatureValue {
    SignatureValue {
        algorithm: ALGORITHM.to_owned(),
        bytes: key.signing.sign(payload).to_bytes().to_vec(),
    }
}

fn verify_raw(cert: &Certificate, payload: &[u8], signature: &[u8]) -> bool {
    let Some(key) = cert.verifying_key() else {
        return false;
    };
    let Ok(signature) = ed25519_dalek::Signature::from_slice(signature) else {
        return false;
    };
    key.verify_strict(payload, &signature).is_ok()
}

/// Checks only the signature over `payload` under the certificate's key.
pub fn verify_signature(cert: &Certificate, payload: &[u8], sig: &SignatureValue) -> bool {
    sig.algorithm == ALGORITHM && verify_raw(cert, payload, &sig.bytes)
}

/// Full check: signature, certificate self-signature and validity window at `now`.
pub fn verify_bytes(cert: &Certificate, payload: &[u8], sig: &SignatureValue, now: Timestamp) -> bool {
    verify_signature(cert, payload, sig) && cert.is_self_consistent() && cert.is_current(now)
}

/// Lowercase hex SHA-256 of the certificate's canonical body.
pub fn fingerprint(cert: &Certificate) -> String {
    digest(&cert.canonical_body()).to_hex()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustAnchor {
    pub fingerprint: String,
    pub label: String,
}

/// The certificate fingerprints a relying party has chosen to trust.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrustAnchors {
    anchors: Vec<TrustAnchor>,
    index: BTreeSet<String>,
}

impl TrustAnchors {
    pub fn new(anchors: Vec<TrustAnchor>) -> Self {
        let index = anchors.iter().map(|a| a.fingerprint.clone()).collect();
        TrustAnchors { anchors, index }
    }

    pub fn from_fingerprints<I, S>(fingerprints: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        TrustAnchors::new(
            fingerprints
                .into_iter()
                .map(|f| TrustAnchor {
                    fingerprint: f.into(),
                    label: String::new(),
                })
                .collect(),
        )
    }

    pub fn contains(&self, fingerprint: &str) -> bool {
        self.index.contains(fingerprint)
    }

    pub fn anchors(&self) -> &[TrustAnchor] {
        &self.anchors
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, PkiError> {
        let anchors: Vec<TrustAnchor> =
            serde_json::from_slice(bytes).map_err(|e| PkiError::Format(format!("trust anchors: {e}")))?;
        Ok(TrustAnchors::new(anchors))
    }

    pub fn load(path: &Path) -> Result<Self, PkiError> {
        TrustAnchors::from_json(&fs::read(path)?)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(&self.anchors).expect("anchors serialize");
        text.push('\n');
        text
    }
}
