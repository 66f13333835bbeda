//! HTTP clients for OpenAI-compatible chat and image endpoints.
//!
//! Only constructed when a run asks for live mode explicitly; keys come from
//! the environment and are never written to manifests.

use std::time::Duration;

use base64::Engine;
use image::RgbImage;
use serde_json::{json, Value};

use super::client::{ClientError, ImageGenClient, ImageRequest, TextGenClient, TextRequest};
use super::DatagenError;

pub const TEXT_API_KEY_ENV: &str = "EMO3D_TEXT_API_KEY";
pub const IMAGE_API_KEY_ENV: &str = "EMO3D_IMAGE_API_KEY";

fn api_key(var: &str) -> Result<String, DatagenError> {
    match std::env::var(var) {
        Ok(k) if !k.trim().is_empty() => Ok(k.trim().to_string()),
        _ => Err(DatagenError::Config(format!("live mode needs the {var} environment variable"))),
    }
}

fn agent() -> ureq::Agent {
    ureq::AgentBuilder::new().timeout(Duration::from_secs(120)).build()
}

fn post(agent: &ureq::Agent, url: &str, key: &str, body: Value) -> Result<Value, ClientError> {
    let response = agent.post(url).set("Authorization", &format!("Bearer {key}")).send_json(body);
    match response {
        Ok(r) => r.into_json().map_err(|e| ClientError::transient(format!("unreadable response from {url}: {e}"))),
        Err(ureq::Error::Status(code, r)) => {
            let detail = r.into_string().unwrap_or_default();
            let message = format!("{url} returned {code}: {}", detail.chars().take(300).collect::<String>());
            Err(if code == 429 || code >= 500 {
                ClientError::transient(message)
            } else {
                ClientError::permanent(message)
            })
        }
        Err(e) => Err(ClientError::transient(format!("{url}: {e}"))),
    }
}

/// Chat-completions text generator.
pub struct LiveTextClient {
    id: String,
    url: String,
    model: String,
    temperature: f64,
    key: String,
    agent: ureq::Agent,
}

impl LiveTextClient {
    /// `endpoint` is the API base, e.g. `https://api.openai.com/v1`.
    pub fn from_env(endpoint: &str, model: &str, temperature: f64) -> Result<Self, DatagenError> {
        let key = api_key(TEXT_API_KEY_ENV)?;
        let base = endpoint.trim_end_matches('/');
        Ok(Self {
            id: format!("live:{base}/{model}@t{temperature}"),
            url: format!("{base}/chat/completions"),
            model: model.to_string(),
            temperature,
            key,
            agent: agent(),
        })
    }
}

impl TextGenClient for LiveTextClient {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &TextRequest) -> Result<String, ClientError> {
        let body = json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{"role": "user", "content": request.prompt}],
        });
        let reply = post(&self.agent, &self.url, &self.key, body)?;
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ClientError::permanent(format!("no message content in reply: {reply}")))
    }
}

/// Image-generation client returning base64 PNGs.
pub struct LiveImageClient {
    id: String,
    url: String,
    model: String,
    size: String,
    key: String,
    agent: ureq::Agent,
}

impl LiveImageClient {
    pub fn from_env(endpoint: &str, model: &str, size: &str) -> Result<Self, DatagenError> {
        let key = api_key(IMAGE_API_KEY_ENV)?;
        let base = endpoint.trim_end_matches('/');
        Ok(Self {
            id: format!("live:{base}/{model}@{size}"),
            url: format!("{base}/images/generations"),
            model: model.to_string(),
            size: size.to_string(),
            key,
            agent: agent(),
        })
    }
}

impl ImageGenClient for LiveImageClient {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, request: &ImageRequest) -> Result<RgbImage, ClientError> {
        let body = json!({
            "model": self.model,
            "prompt": request.prompt,
            "n": 1,
            "size": self.size,
            "response_format": "b64_json",
        });
        let reply = post(&self.agent, &self.url, &self.key, body)?;
        let b64 = reply["data"][0]["b64_json"]
            .as_str()
            .ok_or_else(|| ClientError::permanent("no b64_json image in reply".to_string()))?;
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(b64)
            .map_err(|e| ClientError::permanent(format!("bad base64 image: {e}")))?;
        image::load_from_memory(&bytes)
            .map(|img| img.to_rgb8())
            .map_err(|e| ClientError::permanent(format!("undecodable image: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_key_is_a_config_error() {
        // Unique variable name so parallel tests cannot interfere.
        assert!(
            matches!(api_key("EMO3D_TEST_UNSET_KEY_1b7c"), Err(DatagenError::Config(m)) if m.contains("EMO3D_TEST_UNSET_KEY_1b7c"))
        );
    }

    #[test]
    fn unreachable_endpoint_is_transient() {
        let err = post(&agent(), "http://127.0.0.1:9/v1/chat/completions", "k", json!({})).unwrap_err();
        assert!(err.retryable);
    }
}
