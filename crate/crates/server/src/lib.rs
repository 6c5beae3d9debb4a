//! The `/v1` HTTP/JSON service over extraction, signature chains and scoring.
//!
//! Validators sign on their own machines and submit signatures; the server
//! only ever holds the optional hosted-extractor key.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use idstack_core::api::{
    AppendSignatureRequest, ConfidenceRequest, CorrelationRequest, DocumentConfidence, DocumentSetCorrelation,
    ExtractRequest, SignatureListing, StoredDocument, UploadRequest,
};
use idstack_core::clock::{Clock, SystemClock};
use idstack_core::store::StoreEntry;
use idstack_core::validation::append_signed;
use idstack_core::{
    confidence, correlate, extract_and_sign, list_signatures, load_templates, verify_chain, Certificate, DocumentId,
    ExtractionError, FileStore, KeyPair, MachineReadableDocument, RawDocumentText, ScoreWeights, ScoringError,
    StoreError, TemplateRegistry, TrustAnchors, ValidationError,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

mod error;

pub use error::{ApiError, ErrorCode};

/// On-disk service configuration. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen_address: String,
    pub store_root: PathBuf,
    pub template_dir: PathBuf,
    pub trust_anchor_file: PathBuf,
    #[serde(default)]
    pub weights_file: Option<PathBuf>,
    #[serde(default)]
    pub server_key_file: Option<PathBuf>,
    #[serde(default)]
    pub server_cert_file: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let mut config: ServiceConfig =
            serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut config.store_root);
        resolve(&mut config.template_dir);
        resolve(&mut config.trust_anchor_file);
        for p in [
            &mut config.weights_file,
            &mut config.server_key_file,
            &mut config.server_cert_file,
        ]
        .into_iter()
        .flatten()
        {
            resolve(p);
        }
        Ok(config)
    }
}

/// Everything a request handler needs. Read-only apart from the store.
pub struct AppState {
    pub store: FileStore,
    pub templates: TemplateRegistry,
    pub trust: TrustAnchors,
    pub weights: ScoreWeights,
    pub extractor: Option<(KeyPair, Certificate)>,
    pub clock: Box<dyn Clock>,
}

impl AppState {
    /// Loads every configured file; any missing path fails startup.
    pub fn from_config(config: &ServiceConfig, clock: Box<dyn Clock>) -> anyhow::Result<Self> {
        for (name, path) in [
            ("storeRoot", Some(&config.store_root)),
            ("templateDir", Some(&config.template_dir)),
            ("trustAnchorFile", Some(&config.trust_anchor_file)),
            ("weightsFile", config.weights_file.as_ref()),
            ("serverKeyFile", config.server_key_file.as_ref()),
            ("serverCertFile", config.server_cert_file.as_ref()),
        ] {
            if let Some(path) = path {
                if !path.exists() {
                    bail!("{name} {} does not exist", path.display());
                }
            }
        }
        let extractor = match (&config.server_key_file, &config.server_cert_file) {
            (Some(key), Some(cert)) => Some((KeyPair::load(key)?, Certificate::load(cert)?)),
            (None, None) => None,
            _ => bail!("serverKeyFile and serverCertFile must be configured together"),
        };
        let weights = match &config.weights_file {
            Some(path) => ScoreWeights::load_or_default(path)?,
            None => ScoreWeights::default(),
        };
        Ok(AppState {
            store: FileStore::open(&config.store_root)?,
            templates: load_templates(&config.template_dir)?,
            trust: TrustAnchors::load(&config.trust_anchor_file)?,
            weights,
            extractor,
            clock,
        })
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/extract", post(extract))
        .route("/v1/documents", get(list_documents).post(upload_document))
        .route("/v1/documents/{id}", get(get_document))
        .route(
            "/v1/documents/{id}/signatures",
            get(get_signatures).post(append_signature),
        )
        .route("/v1/score/confidence", post(score_confidence))
        .route("/v1/score/correlation", post(score_correlation))
        .fallback(|| async { ApiError::new(ErrorCode::NotFound, "no such endpoint") })
        .with_state(state)
}

/// Binds and serves until ctrl-c.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(ErrorCode::MalformedRequest, e.to_string()))
}

fn parse_id(raw: &str) -> Result<DocumentId, ApiError> {
    DocumentId::parse(raw).ok_or_else(|| ApiError::new(ErrorCode::UnknownDocument, format!("unknown document `{raw}`")))
}

fn load(state: &AppState, raw: &str) -> Result<(DocumentId, MachineReadableDocument, u64), ApiError> {
    let id = parse_id(raw)?;
    let (doc, rev) = state.store.get(&id)?;
    Ok((id, doc, rev.revision))
}

fn stored(id: DocumentId, revision: u64, document: MachineReadableDocument) -> StoredDocument {
    StoredDocument {
        document_id: id,
        revision,
        signature_count: document.signature_count(),
        document,
    }
}

async fn extract(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: ExtractRequest = parse_body(&body)?;
    let template = state.templates.get(&req.template_id).ok_or_else(|| {
        ApiError::new(
            ErrorCode::TemplateUnknown,
            format!("unknown template `{}`", req.template_id),
        )
    })?;
    let (key, cert) = state
        .extractor
        .as_ref()
        .ok_or_else(|| ApiError::new(ErrorCode::NoExtractorKey, "server has no extractor key configured"))?;
    let doc = extract_and_sign(
        &RawDocumentText::new(&req.text),
        template,
        key,
        cert,
        req.doc_type.as_deref(),
        state.clock.now(),
    )?;
    let (id, rev) = state.store.put(&doc)?;
    Ok((StatusCode::CREATED, Json(stored(id, rev.revision, doc))).into_response())
}

async fn upload_document(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: UploadRequest = parse_body(&body)?;
    let doc = req.document;
    doc.check()?;
    let report = verify_chain(&doc, &state.trust, state.clock.now())?;
    if let Some(bad) = report.per_signature.iter().find(|s| !s.crypto_valid) {
        return Err(ApiError::new(
            ErrorCode::BadSignature,
            format!("signature `{}` rejected: {}", bad.sig_id, bad.reason),
        ));
    }
    let (id, rev) = state.store.put(&doc)?;
    Ok((StatusCode::CREATED, Json(stored(id, rev.revision, doc))).into_response())
}

async fn list_documents(State(state): State<Arc<AppState>>) -> Result<Json<Vec<StoreEntry>>, ApiError> {
    Ok(Json(state.store.list()?))
}

async fn get_document(
    State(state): State<Arc<AppState>>,
    UrlPath(raw): UrlPath<String>,
) -> Result<Json<StoredDocument>, ApiError> {
    let (id, doc, revision) = load(&state, &raw)?;
    Ok(Json(stored(id, revision, doc)))
}

async fn get_signatures(
    State(state): State<Arc<AppState>>,
    UrlPath(raw): UrlPath<String>,
) -> Result<Json<SignatureListing>, ApiError> {
    let (id, doc, _) = load(&state, &raw)?;
    let report = verify_chain(&doc, &state.trust, state.clock.now())?;
    let rows = list_signatures(&doc, &report);
    Ok(Json(SignatureListing::new(id, &report, rows)))
}

async fn append_signature(
    State(state): State<Arc<AppState>>,
    UrlPath(raw): UrlPath<String>,
    body: Bytes,
) -> Result<Json<StoredDocument>, ApiError> {
    let (id, doc, current) = load(&state, &raw)?;
    let req: AppendSignatureRequest = parse_body(&body)?;
    // a stale client learns about the conflict before its signature is judged
    if req.expected_revision != current {
        return Err(StoreError::RevisionConflict {
            expected: req.expected_revision,
            current,
        }
        .into());
    }
    let next = append_signed(
        &doc,
        &req.signer_certificate,
        req.endorsement,
        req.signature,
        req.signed_at,
        state.clock.now(),
    )?;
    let rev = state.store.update(&id, req.expected_revision, &next)?;
    Ok(Json(stored(id, rev.revision, next)))
}

async fn score_confidence(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> Result<Json<DocumentConfidence>, ApiError> {
    let req: ConfidenceRequest = parse_body(&body)?;
    let (id, doc, _) = load(&state, &req.document_id)?;
    let report = verify_chain(&doc, &state.trust, state.clock.now())?;
    let score = confidence(&doc, &report, &state.trust, &state.weights)?;
    Ok(Json(DocumentConfidence { document_id: id, score }))
}

async fn score_correlation(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> Result<Json<DocumentSetCorrelation>, ApiError> {
    let req: CorrelationRequest = parse_body(&body)?;
    if req.document_ids.len() < 2 {
        return Err(ScoringError::TooFewDocuments(req.document_ids.len()).into());
    }
    let mut ids = Vec::with_capacity(req.document_ids.len());
    let mut docs = Vec::with_capacity(req.document_ids.len());
    for raw in &req.document_ids {
        let (id, doc, _) = load(&state, raw)?;
        ids.push(id);
        docs.push(doc);
    }
    let score = correlate(&docs)?;
    Ok(Json(DocumentSetCorrelation {
        document_ids: ids,
        score,
    }))
}

impl From<ExtractionError> for ApiError {
    fn from(err: ExtractionError) -> Self {
        let code = match &err {
            ExtractionError::RequiredFieldMissing(_) => ErrorCode::RequiredFieldMissing,
            ExtractionError::EmptyResult => ErrorCode::EmptyResult,
            ExtractionError::Signing(e) => return e.clone().into(),
            _ => ErrorCode::Internal,
        };
        ApiError::new(code, err.to_string())
    }
}

impl From<ValidationError> for ApiError {
    fn from(err: ValidationError) -> Self {
        let code = match &err {
            ValidationError::UnknownPath(_) => ErrorCode::UnknownPath,
            ValidationError::UnknownTarget(_) => ErrorCode::UnknownTarget,
            ValidationError::InvalidEndorsement(_) => ErrorCode::InvalidEndorsement,
            ValidationError::BadSignature => ErrorCode::BadSignature,
            ValidationError::Malformed(_) => ErrorCode::MalformedDocument,
        };
        ApiError::new(code, err.to_string())
    }
}

impl From<idstack_core::DocumentError> for ApiError {
    fn from(err: idstack_core::DocumentError) -> Self {
        ApiError::new(ErrorCode::MalformedDocument, err.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(err: StoreError) -> Self {
        let code = match &err {
            StoreError::UnknownDocument(_) => ErrorCode::UnknownDocument,
            StoreError::RevisionConflict { .. } => ErrorCode::RevisionConflict,
            StoreError::NotAppendOnly(_) => ErrorCode::NotAppendOnly,
            StoreError::DocumentExists(_) => ErrorCode::DocumentExists,
            StoreError::ContentMismatch(_) | StoreError::Malformed(_) => ErrorCode::MalformedDocument,
            StoreError::Io(_) => ErrorCode::Internal,
        };
        ApiError::new(code, err.to_string())
    }
}

impl From<ScoringError> for ApiError {
    fn from(err: ScoringError) -> Self {
        let code = match &err {
            ScoringError::TooFewDocuments(_) => ErrorCode::TooFewDocuments,
            _ => ErrorCode::Internal,
        };
        ApiError::new(code, err.to_string())
    }
}

/// Default clock for the binary: `IDSTACK_CLOCK` if set, otherwise system time.
pub fn clock_from_env() -> anyhow::Result<Box<dyn Clock>> {
    match std::env::var("IDSTACK_CLOCK") {
        Ok(text) => {
            let ts = idstack_core::Timestamp::parse(&text).context("IDSTACK_CLOCK is not RFC 3339")?;
            Ok(Box::new(idstack_core::FixedClock(ts)))
        }
        Err(_) => Ok(Box::new(SystemClock)),
    }
}
