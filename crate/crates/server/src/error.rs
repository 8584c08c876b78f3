use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use stormnet_core::gateway::ApiError;

/// An [`ApiError`] on its way out as an HTTP response.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error(transparent)]
pub struct HttpError(#[from] pub ApiError);

#[derive(Serialize)]
struct Body<'a> {
    error: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    line: Option<usize>,
}

impl HttpError {
    pub fn bad_request(message: impl Into<String>) -> Self {
        HttpError(ApiError::BadRequest { line: None, message: message.into() })
    }
}

impl IntoResponse for HttpError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let (error, line) = match &self.0 {
            ApiError::Unauthorized => ("unauthorized", None),
            ApiError::BadRequest { line, .. } => ("bad_request", *line),
            ApiError::NotFound(_) => ("not_found", None),
            ApiError::Unprocessable(_) => ("unprocessable", None),
        };
        let body = Json(Body { error, message: self.0.to_string(), line });
        if status == StatusCode::UNAUTHORIZED {
            (status, [(header::WWW_AUTHENTICATE, "Basic realm=\"stormnet\"")], body).into_response()
        } else {
            (status, body).into_response()
        }
    }
}
