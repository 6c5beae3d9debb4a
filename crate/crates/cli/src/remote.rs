//! Blocking client for a running `/v1` service.

use idstack_core::api::{
    AppendSignatureRequest, ConfidenceRequest, CorrelationRequest, DocumentConfidence, DocumentSetCorrelation,
    ErrorBody, SignatureListing, StoredDocument, UploadRequest,
};
use idstack_core::{DocumentId, MachineReadableDocument};
use reqwest::blocking::{Client, RequestBuilder};
use serde::de::DeserializeOwned;

use crate::error::CliError;

pub struct Remote {
    base: String,
    http: Client,
}

impl Remote {
    pub fn new(base: &str) -> Self {
        Remote {
            base: base.trim_end_matches('/').to_owned(),
            http: Client::new(),
        }
    }

    fn send<T: DeserializeOwned>(&self, request: RequestBuilder) -> Result<T, CliError> {
        let response = request
            .send()
            .map_err(|e| CliError::Io(format!("request to {} failed: {e}", self.base)))?;
        let status = response.status();
        let body = response
            .bytes()
            .map_err(|e| CliError::Io(format!("reading response: {e}")))?;
        if status.is_success() {
            return serde_json::from_slice(&body).map_err(|e| CliError::Io(format!("unexpected response: {e}")));
        }
        let message = match serde_json::from_slice::<ErrorBody>(&body) {
            Ok(err) => format!("{}: {}", err.code, err.message),
            Err(_) => format!("HTTP {status}"),
        };
        if status.is_server_error() {
            Err(CliError::Io(message))
        } else {
            Err(CliError::Domain(message))
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub fn upload(&self, document: &MachineReadableDocument) -> Result<StoredDocument, CliError> {
        let body = UploadRequest {
            document: document.clone(),
        };
        self.send(self.http.post(self.url("/v1/documents")).json(&body))
    }

    pub fn document(&self, id: &DocumentId) -> Result<StoredDocument, CliError> {
        self.send(self.http.get(self.url(&format!("/v1/documents/{id}"))))
    }

    pub fn append(&self, id: &DocumentId, request: &AppendSignatureRequest) -> Result<StoredDocument, CliError> {
        self.send(
            self.http
                .post(self.url(&format!("/v1/documents/{id}/signatures")))
                .json(request),
        )
    }

    pub fn signatures(&self, id: &DocumentId) -> Result<SignatureListing, CliError> {
        self.send(self.http.get(self.url(&format!("/v1/documents/{id}/signatures"))))
    }

    pub fn confidence(&self, id: &DocumentId) -> Result<DocumentConfidence, CliError> {
        let body = ConfidenceRequest {
            document_id: id.to_string(),
        };
        self.send(self.http.post(self.url("/v1/score/confidence")).json(&body))
    }

    pub fn correlation(&self, ids: &[DocumentId]) -> Result<DocumentSetCorrelation, CliError> {
        let body = CorrelationRequest {
            document_ids: ids.iter().map(ToString::to_string).collect(),
        };
        self.send(self.http.post(self.url("/v1/score/correlation")).json(&body))
    }
}
