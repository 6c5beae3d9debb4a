//! Request and response bodies of the `/v1` HTTP interface, shared by the
//! service and its clients.

use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;
use crate::document::MachineReadableDocument;
use crate::pki::{Certificate, SignatureValue};
use crate::scoring::{ConfidenceScore, CorrelationScore};
use crate::store::DocumentId;
use crate::validation::{Endorsement, SignatureSummary, VerificationReport};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExtractRequest {
    pub text: String,
    pub template_id: String,
    #[serde(default)]
    pub doc_type: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StoredDocument {
    pub document_id: DocumentId,
    pub revision: u64,
    pub signature_count: usize,
    pub document: MachineReadableDocument,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct UploadRequest {
    pub document: MachineReadableDocument,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AppendSignatureRequest {
    pub signer_certificate: Certificate,
    pub endorsement: Endorsement,
    pub signature: SignatureValue,
    pub signed_at: Timestamp,
    pub expected_revision: u64,
}

/// Signature table for one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SignatureListing {
    pub document_id: DocumentId,
    pub chain_order_valid: bool,
    pub all_effectively_valid: bool,
    pub signatures: Vec<SignatureSummary>,
}

impl SignatureListing {
    pub fn new(document_id: DocumentId, report: &VerificationReport, signatures: Vec<SignatureSummary>) -> Self {
        SignatureListing {
            document_id,
            chain_order_valid: report.chain_order_valid,
            all_effectively_valid: report.all_effectively_valid(),
            signatures,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ConfidenceRequest {
    pub document_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DocumentConfidence {
    pub document_id: DocumentId,
    #[serde(flatten)]
    pub score: ConfidenceScore,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CorrelationRequest {
    pub document_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DocumentSetCorrelation {
    pub document_ids: Vec<DocumentId>,
    #[serde(flatten)]
    pub score: CorrelationScore,
}

/// Error body: `{"code": "...", "message": "..."}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}
