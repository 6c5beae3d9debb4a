use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use idstack_core::api::ErrorBody;

/// The closed set of machine-readable error codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    MalformedRequest,
    MalformedDocument,
    TemplateUnknown,
    RequiredFieldMissing,
    EmptyResult,
    InvalidEndorsement,
    BadSignature,
    TooFewDocuments,
    UnknownDocument,
    NotFound,
    NoExtractorKey,
    RevisionConflict,
    DocumentExists,
    NotAppendOnly,
    UnknownTarget,
    UnknownPath,
    Internal,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 17] = [
        ErrorCode::MalformedRequest,
        ErrorCode::MalformedDocument,
        ErrorCode::TemplateUnknown,
        ErrorCode::RequiredFieldMissing,
        ErrorCode::EmptyResult,
        ErrorCode::InvalidEndorsement,
        ErrorCode::BadSignature,
        ErrorCode::TooFewDocuments,
        ErrorCode::UnknownDocument,
        ErrorCode::NotFound,
        ErrorCode::NoExtractorKey,
        ErrorCode::RevisionConflict,
        ErrorCode::DocumentExists,
        ErrorCode::NotAppendOnly,
        ErrorCode::UnknownTarget,
        ErrorCode::UnknownPath,
        ErrorCode::Internal,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorCode::MalformedRequest => "MALFORMED_REQUEST",
            ErrorCode::MalformedDocument => "MALFORMED_DOCUMENT",
            ErrorCode::TemplateUnknown => "TEMPLATE_UNKNOWN",
            ErrorCode::RequiredFieldMissing => "REQUIRED_FIELD_MISSING",
            ErrorCode::EmptyResult => "EMPTY_RESULT",
            ErrorCode::InvalidEndorsement => "INVALID_ENDORSEMENT",
            ErrorCode::BadSignature => "BAD_SIGNATURE",
            ErrorCode::TooFewDocuments => "TOO_FEW_DOCUMENTS",
            ErrorCode::UnknownDocument => "UNKNOWN_DOCUMENT",
            ErrorCode::NotFound => "NOT_FOUND",
            ErrorCode::NoExtractorKey => "NO_EXTRACTOR_KEY",
            ErrorCode::RevisionConflict => "REVISION_CONFLICT",
            ErrorCode::DocumentExists => "DOCUMENT_EXISTS",
            ErrorCode::NotAppendOnly => "NOT_APPEND_ONLY",
            ErrorCode::UnknownTarget => "UNKNOWN_TARGET",
            ErrorCode::UnknownPath => "UNKNOWN_PATH",
            ErrorCode::Internal => "INTERNAL",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ErrorCode::MalformedRequest
            | ErrorCode::MalformedDocument
            | ErrorCode::TemplateUnknown
            | ErrorCode::RequiredFieldMissing
            | ErrorCode::EmptyResult
            | ErrorCode::InvalidEndorsement
            | ErrorCode::BadSignature
            | ErrorCode::TooFewDocuments => StatusCode::BAD_REQUEST,
            ErrorCode::UnknownDocument | ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::NoExtractorKey
            | ErrorCode::RevisionConflict
            | ErrorCode::DocumentExists
            | ErrorCode::NotAppendOnly => StatusCode::CONFLICT,
            ErrorCode::UnknownTarget | ErrorCode::UnknownPath => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            code,
            message: message.into(),
        }
    }

    pub fn http_status(&self) -> StatusCode {
        self.code.status()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.code == ErrorCode::Internal {
            tracing::error!("{}", self.message);
        }
        let body = ErrorBody {
            code: self.code.as_str().to_owned(),
            message: self.message,
        };
        (self.code.status(), Json(body)).into_response()
    }
}
