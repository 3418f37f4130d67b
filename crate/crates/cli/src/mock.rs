//! File-driven stand-ins for the verifier and assessor.
//!
//! The verifier reports the subject missing when the image file stem contains
//! `absent`. The assessor returns the text of `<image>.response.txt` when that
//! sidecar exists and a plain normal verdict otherwise.

use std::fs;
use std::path::Path;

use arteval_core::gateway::{GatewayError, Port, PortRequest, PortResponse};
use arteval_core::parser::wrap_response;
use arteval_core::LabelSet;

#[derive(Debug, Default)]
pub struct MockVerifier;

impl Port for MockVerifier {
    fn call(&self, req: &PortRequest) -> Result<PortResponse, GatewayError> {
        match req {
            PortRequest::Verify { image, .. } => {
                let stem = Path::new(image)
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or_default();
                Ok(PortResponse::Verify {
                    present: !stem.contains("absent"),
                })
            }
            other => Err(GatewayError::Unscripted {
                task: other.task(),
                key: other.script_key().to_string(),
            }),
        }
    }
}

#[derive(Debug, Default)]
pub struct MockAssessor;

impl Port for MockAssessor {
    fn call(&self, req: &PortRequest) -> Result<PortResponse, GatewayError> {
        match req {
            PortRequest::Assess { image, .. } => {
                let sidecar = format!("{image}.response.txt");
                let text = match fs::read_to_string(&sidecar) {
                    Ok(t) => t,
                    Err(_) => wrap_response("No visible artifacts.", &LabelSet::normal())
                        .expect("normal verdict renders"),
                };
                Ok(PortResponse::Assess { text })
            }
            other => Err(GatewayError::Unscripted {
                task: other.task(),
                key: other.script_key().to_string(),
            }),
        }
    }
}
