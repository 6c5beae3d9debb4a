//! Document verification built on chained digital signatures.
//!
//! An extractor turns a document's text into key-value [`document::ContentMap`]
//! content and signs it; validators append endorsements over content, earlier
//! signatures, or both; a relying party verifies the chain and scores it.

pub mod api;
pub mod clock;
pub mod document;
pub mod extraction;
pub mod pki;
pub mod scoring;
pub mod store;
pub mod validation;

pub use clock::{Clock, FixedClock, SystemClock, Timestamp};
pub use document::{
    canonicalize, digest, parse_document, serialize_document, sub_map, ContentMap, ContentValue, Digest, DocumentError,
    MachineReadableDocument, Metadata,
};
pub use extraction::{
    apply_template, extract_and_sign, load_templates, ExtractionError, RawDocumentText, Template, TemplateRegistry,
};
pub use pki::{
    fingerprint, generate_identity, sign_bytes, verify_bytes, Certificate, KeyPair, PkiError, SignatureValue,
    TrustAnchors,
};
pub use scoring::{
    confidence, correlate, normalize_value, ConfidenceScore, CorrelationFlag, CorrelationScore, ScoreWeights,
    ScoringError,
};
pub use store::{DocumentId, FileStore, StoreError, StoreRevision};
pub use validation::{
    add_signature, endorsement_payload, list_signatures, verify_chain, ContentSelection, Endorsement, EndorsementKind,
    SignatureRecord, ValidationError, VerificationReport,
};
