//! HTTP client for the wire protocol.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use log::{debug, warn};
use posegen_core::DepthMap;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use super::wire::{self, API_VERSION};
use super::{
    Backend, Depth2ImgOutput, GatewayError, GatewayResult, GenerationRequest, HmrResult, ImageBuffer, Latents,
    SegmentationResult,
};

/// Largest response body accepted.
const MAX_BODY: u64 = 256 << 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub attempts: u32,
    /// Delay before the second attempt; doubles after each failure.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn delay_before(&self, attempt: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(attempt.saturating_sub(2))
    }
}

pub struct HttpBackend {
    base_url: String,
    agent: ureq::Agent,
    retry: RetryPolicy,
    body_joints: Option<usize>,
    next_id: AtomicU64,
}

enum Attempt {
    Retry(String),
    Fatal(GatewayError),
}

impl HttpBackend {
    /// `base_url` is e.g. `http://127.0.0.1:8000`; a trailing slash is fine.
    pub fn new(base_url: &str) -> GatewayResult<Self> {
        let base_url = base_url.trim_end_matches('/').to_string();
        if !(base_url.starts_with("http://") || base_url.starts_with("https://")) {
            return Err(GatewayError::InvalidRequest(format!(
                "backend URL must start with http:// or https://, got `{base_url}`"
            )));
        }
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(600)))
            .build()
            .into();
        Ok(Self {
            base_url,
            agent,
            retry: RetryPolicy::default(),
            body_joints: None,
            next_id: AtomicU64::new(1),
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Body-joint count used to infer the layout of `theta` when a response
    /// omits `pose_convention`.
    pub fn with_body_joints(mut self, n: usize) -> Self {
        self.body_joints = Some(n);
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn request_id(&self) -> String {
        format!("req-{}", self.next_id.fetch_add(1, Ordering::Relaxed))
    }

    fn once(&self, path: &str, body: Option<&str>) -> Result<Value, Attempt> {
        let url = format!("{}{path}", self.base_url);
        let result = match body {
            Some(b) => self
                .agent
                .post(&url)
                .header("content-type", "application/json")
                .send(b),
            None => self.agent.get(&url).call(),
        };
        let mut resp = result.map_err(|e| Attempt::Retry(format!("{url}: {e}")))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .with_config()
            .limit(MAX_BODY)
            .read_to_string()
            .map_err(|e| Attempt::Retry(format!("{url}: reading body: {e}")))?;
        if status == 429 || status >= 500 {
            return Err(Attempt::Retry(format!("{url}: HTTP {status}: {}", error_message(&text))));
        }
        if status >= 400 {
            let msg = format!("{url}: HTTP {status}: {}", error_message(&text));
            let err = match error_code(&text).as_deref() {
                Some("version_mismatch") => GatewayError::Protocol(msg),
                _ => GatewayError::InvalidRequest(msg),
            };
            return Err(Attempt::Fatal(err));
        }
        serde_json::from_str(&text).map_err(|e| Attempt::Fatal(GatewayError::Protocol(format!("{url}: {e}"))))
    }

    fn call(&self, path: &str, body: Option<&str>) -> GatewayResult<Value> {
        let mut last = String::new();
        for attempt in 1..=self.retry.attempts.max(1) {
            if attempt > 1 {
                let d = self.retry.delay_before(attempt);
                warn!("retrying {path} in {d:?} (attempt {attempt}): {last}");
                std::thread::sleep(d);
            }
            match self.once(path, body) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(m)) => last = m,
            }
        }
        Err(GatewayError::Unavailable {
            attempts: self.retry.attempts.max(1),
            message: last,
        })
    }

    /// POSTs `req`, checks the echoed envelope and decodes the response.
    fn post<Q: Serialize, R: DeserializeOwned>(
        &self,
        path: &str,
        request_id: &str,
        seed: Option<u64>,
        req: &Q,
    ) -> GatewayResult<R> {
        let body = serde_json::to_string(req).map_err(|e| GatewayError::InvalidRequest(e.to_string()))?;
        debug!("POST {path} {request_id}");
        let v = self.call(path, Some(&body))?;
        check_envelope(&v, request_id, seed)?;
        serde_json::from_value(v).map_err(|e| GatewayError::Protocol(format!("{path}: {e}")))
    }
}

fn error_code(text: &str) -> Option<String> {
    let v: Value = serde_json::from_str(text).ok()?;
    v.pointer("/error/code")?.as_str().map(str::to_string)
}

fn error_message(text: &str) -> String {
    serde_json::from_str::<Value>(text)
        .ok()
        .and_then(|v| v.pointer("/error/message").and_then(Value::as_str).map(str::to_string))
        .unwrap_or_else(|| text.chars().take(200).collect())
}

/// Checks `api_version`, `request_id` and `seed` echoes.
pub fn check_envelope(v: &Value, request_id: &str, seed: Option<u64>) -> GatewayResult<()> {
    let version = v.get("api_version").and_then(Value::as_str).unwrap_or("");
    wire::check_version(version)?;
    let got_id = v.get("request_id").and_then(Value::as_str);
    if got_id != Some(request_id) {
        return Err(GatewayError::Protocol(format!(
            "response request_id {got_id:?} does not echo `{request_id}`"
        )));
    }
    if v.get("model_id").and_then(Value::as_str).is_none() {
        return Err(GatewayError::Protocol("response lacks model_id".into()));
    }
    let got_seed = v.get("seed").and_then(Value::as_u64);
    if got_seed != seed {
        return Err(GatewayError::Protocol(format!(
            "response seed {got_seed:?} does not echo {seed:?}"
        )));
    }
    Ok(())
}

impl Backend for HttpBackend {
    fn model_id(&self) -> GatewayResult<String> {
        let v = self.call(wire::PATH_HEALTH, None)?;
        let h: wire::HealthResponse =
            serde_json::from_value(v).map_err(|e| GatewayError::Protocol(format!("health: {e}")))?;
        wire::check_version(&h.api_version)?;
        Ok(h.model_id)
    }

    fn txt2img(&self, req: &GenerationRequest) -> GatewayResult<ImageBuffer> {
        req.validate()?;
        let id = self.request_id();
        let r: wire::ImageResponse =
            self.post(wire::PATH_TXT2IMG, &id, Some(req.seed), &wire::txt2img_request(req, &id))?;
        let img = wire::image_from_wire(&r.image)?;
        if (img.width, img.height) != (req.width, req.height) {
            return Err(GatewayError::Protocol(format!(
                "txt2img returned {}x{}, requested {}x{}",
                img.width, img.height, req.width, req.height
            )));
        }
        Ok(img)
    }

    fn encode_latents(&self, img: &ImageBuffer, seed: Option<u64>) -> GatewayResult<Latents> {
        let id = self.request_id();
        let q = wire::ImageRequest {
            api_version: API_VERSION.into(),
            request_id: id.clone(),
            seed,
            image: wire::image_to_wire(img),
        };
        let r: wire::EncodeResponse = self.post(wire::PATH_ENCODE, &id, seed, &q)?;
        wire::latents_from_wire(&r.latents)
    }

    fn depth2img(&self, z: &Latents, depth: &DepthMap, req: &GenerationRequest) -> GatewayResult<Depth2ImgOutput> {
        let id = self.request_id();
        let q = wire::depth2img_request(z, depth, req, &id);
        let r: wire::Depth2ImgResponse = self.post(wire::PATH_DEPTH2IMG, &id, Some(req.seed), &q)?;
        Ok(Depth2ImgOutput {
            image: wire::image_from_wire(&r.image)?,
            latent_checksum: r.latent_checksum,
        })
    }

    fn hmr(&self, img: &ImageBuffer, seed: Option<u64>) -> GatewayResult<HmrResult> {
        let id = self.request_id();
        let q = wire::ImageRequest {
            api_version: API_VERSION.into(),
            request_id: id.clone(),
            seed,
            image: wire::image_to_wire(img),
        };
        let r: wire::HmrResponse = self.post(wire::PATH_HMR, &id, seed, &q)?;
        wire::hmr_from_wire(&r.people, self.body_joints, (img.width, img.height))
    }

    fn segment(&self, img: &ImageBuffer, seed: Option<u64>) -> GatewayResult<SegmentationResult> {
        let id = self.request_id();
        let q = wire::ImageRequest {
            api_version: API_VERSION.into(),
            request_id: id.clone(),
            seed,
            image: wire::image_to_wire(img),
        };
        let r: wire::SegmentResponse = self.post(wire::PATH_SEGMENT, &id, seed, &q)?;
        wire::segmentation_from_wire(&r.instances, (img.width, img.height))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay_before(2), Duration::from_secs(1));
        assert_eq!(p.delay_before(3), Duration::from_secs(2));
    }

    #[test]
    fn envelope_checks() {
        let ok = json!({"api_version": "1", "request_id": "r", "model_id": "m", "seed": 5});
        assert!(check_envelope(&ok, "r", Some(5)).is_ok());
        assert!(check_envelope(&ok, "x", Some(5)).is_err());
        assert!(check_envelope(&ok, "r", Some(6)).is_err());
        assert!(check_envelope(&ok, "r", None).is_err());
        let v2 = json!({"api_version": "2", "request_id": "r", "model_id": "m", "seed": 5});
        assert!(check_envelope(&v2, "r", Some(5)).is_err());
        let no_seed = json!({"api_version": "1", "request_id": "r", "model_id": "m", "seed": null});
        assert!(check_envelope(&no_seed, "r", None).is_ok());
    }

    #[test]
    fn rejects_non_http_urls() {
        assert!(HttpBackend::new("ftp://x").is_err());
        assert_eq!(HttpBackend::new("http://h:1/").unwrap().base_url(), "http://h:1");
    }
}
