//! Text and image generator interfaces plus the wrappers shared by all implementations.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use image::{ImageFormat, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::templates::{Template, DESCRIBE_TEMPLATE, DISTRIBUTION_TEMPLATE};
use super::DatagenError;
use crate::blendshape::BlendshapeVector;
use crate::embeddings::cache::hex;
use crate::emotion::EmotionClass;
use crate::renderer::{stamp_pixel_code, FaceRenderer, RenderConfig, RigRenderer, BACKGROUND};
use crate::synthetic::{class_signature, guess_class, peaked_distribution, synthetic_description};

/// A failed call to an external generator.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message}")]
pub struct ClientError {
    pub message: String,
    /// Whether trying again might succeed (rate limits, timeouts, 5xx).
    pub retryable: bool,
}

impl ClientError {
    pub fn transient(message: impl Into<String>) -> Self {
        Self { message: message.into(), retryable: true }
    }

    pub fn permanent(message: impl Into<String>) -> Self {
        Self { message: message.into(), retryable: false }
    }
}

/// A rendered prompt together with what it was rendered from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextRequest {
    pub template: String,
    pub template_sha256: String,
    pub vars: BTreeMap<String, String>,
    pub prompt: String,
}

impl TextRequest {
    pub fn new(template: &Template, vars: BTreeMap<String, String>) -> Self {
        Self {
            template: template.name.clone(),
            template_sha256: template.sha256(),
            prompt: template.render(&vars),
            vars,
        }
    }

    pub fn var(&self, name: &str) -> Option<&str> {
        self.vars.get(name).map(String::as_str)
    }

    /// Cache key over the client, the template and its inputs.
    pub fn cache_key(&self, client: &str) -> String {
        let canonical = serde_json::json!({
            "client": client,
            "template": self.template,
            "template_sha256": self.template_sha256,
            "vars": self.vars,
        });
        hex(&Sha256::digest(canonical.to_string().as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRequest {
    pub prompt: String,
    /// Distinguishes several images for the same prompt.
    pub variant: u32,
}

impl ImageRequest {
    pub fn cache_key(&self, client: &str) -> String {
        let canonical = serde_json::json!({"client": client, "prompt": self.prompt, "variant": self.variant});
        hex(&Sha256::digest(canonical.to_string().as_bytes()))
    }
}

pub trait TextGenClient: Send + Sync {
    /// Identifier recorded in dataset manifests.
    fn id(&self) -> &str;
    fn complete(&self, request: &TextRequest) -> Result<String, ClientError>;
}

pub trait ImageGenClient: Send + Sync {
    fn id(&self) -> &str;
    fn generate(&self, request: &ImageRequest) -> Result<RgbImage, ClientError>;
}

impl<T: TextGenClient + ?Sized> TextGenClient for Arc<T> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn complete(&self, request: &TextRequest) -> Result<String, ClientError> {
        (**self).complete(request)
    }
}

impl<T: ImageGenClient + ?Sized> ImageGenClient for Arc<T> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn generate(&self, request: &ImageRequest) -> Result<RgbImage, ClientError> {
        (**self).generate(request)
    }
}

/// How hard to try before giving up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    /// Calls per request, including the first.
    pub max_attempts: usize,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    /// Extra description requests allowed per class to replace duplicates.
    pub duplicate_cap: usize,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, initial_backoff_ms: 500, max_backoff_ms: 8000, duplicate_cap: 20 }
    }
}

impl RetryPolicy {
    /// Retries without sleeping; for tests and offline clients.
    pub fn immediate(max_attempts: usize) -> Self {
        Self { max_attempts, initial_backoff_ms: 0, max_backoff_ms: 0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        if self.max_attempts == 0 {
            return Err(DatagenError::Config("max_attempts must be at least 1".into()));
        }
        Ok(())
    }

    /// Calls `f` until it succeeds, fails permanently or runs out of attempts.
    pub fn run<T>(&self, client: &str, mut f: impl FnMut() -> Result<T, ClientError>) -> Result<T, DatagenError> {
        let mut backoff = self.initial_backoff_ms;
        let mut attempt = 0;
        loop {
            attempt += 1;
            match f() {
                Ok(v) => return Ok(v),
                Err(e) if e.retryable && attempt < self.max_attempts => {
                    log::warn!("{client}: attempt {attempt} failed ({e}); retrying");
                    if backoff > 0 {
                        std::thread::sleep(Duration::from_millis(backoff));
                    }
                    backoff = (backoff * 2).min(self.max_backoff_ms);
                }
                Err(e) => {
                    return Err(DatagenError::Client {
                        client: client.to_string(),
                        attempts: attempt,
                        message: e.message,
                    })
                }
            }
        }
    }
}

/// Token bucket shared by every thread calling one client.
#[derive(Debug)]
pub struct TokenBucket {
    capacity: f64,
    per_second: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(capacity: f64, per_second: f64) -> Result<Self, DatagenError> {
        if !(capacity >= 1.0 && per_second > 0.0 && per_second.is_finite()) {
            return Err(DatagenError::Config(format!("bad rate limit: capacity {capacity}, rate {per_second}/s")));
        }
        Ok(Self { capacity, per_second, state: Mutex::new((capacity, Instant::now())) })
    }

    /// Blocks until a token is available and takes it.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut s = self.state.lock().expect("bucket lock poisoned");
                let now = Instant::now();
                s.0 = (s.0 + now.duration_since(s.1).as_secs_f64() * self.per_second).min(self.capacity);
                s.1 = now;
                if s.0 >= 1.0 {
                    s.0 -= 1.0;
                    return;
                }
                (1.0 - s.0) / self.per_second
            };
            std::thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

/// Applies a [`TokenBucket`] in front of a client.
pub struct RateLimited<C> {
    inner: C,
    bucket: TokenBucket,
}

impl<C> RateLimited<C> {
    pub fn new(inner: C, bucket: TokenBucket) -> Self {
        Self { inner, bucket }
    }
}

impl<C: TextGenClient> TextGenClient for RateLimited<C> {
    fn id(&self) -> &str {
        self.inner.id()
    }
    fn complete(&self, request: &TextRequest) -> Result<String, ClientError> {
        self.bucket.acquire();
        self.inner.complete(request)
    }
}

impl<C: ImageGenClient> ImageGenClient for RateLimited<C> {
    fn id(&self) -> &str {
        self.inner.id()
    }
    fn generate(&self, request: &ImageRequest) -> Result<RgbImage, ClientError> {
        self.bucket.acquire();
        self.inner.generate(request)
    }
}

fn write_atomic(path: &Path, bytes: &[u8], lock: &Mutex<()>) -> std::io::Result<()> {
    let _guard = lock.lock().expect("cache lock poisoned");
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

fn read_optional(path: &Path) -> Result<Option<Vec<u8>>, ClientError> {
    match fs::read(path) {
        Ok(b) => Ok(Some(b)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(ClientError::permanent(format!("cache read {}: {e}", path.display()))),
    }
}

pub(crate) fn encode_png(image: &RgbImage) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    image.write_to(&mut buf, ImageFormat::Png).expect("in-memory PNG encoding");
    buf.into_inner()
}

#[derive(Serialize, Deserialize)]
struct CachedText {
    client: String,
    request: TextRequest,
    response: String,
}

/// Read-through response cache: `<dir>/text/<key>.json`.
pub struct CachedTextClient<C> {
    inner: C,
    dir: PathBuf,
    write_lock: Mutex<()>,
    hits: AtomicUsize,
}

impl<C: TextGenClient> CachedTextClient<C> {
    pub fn new(inner: C, dir: impl Into<PathBuf>) -> Self {
        Self { inner, dir: dir.into(), write_lock: Mutex::new(()), hits: AtomicUsize::new(0) }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    fn path(&self, request: &TextRequest) -> PathBuf {
        self.dir.join("text").join(format!("{}.json", request.cache_key(self.inner.id())))
    }
}

impl<C: TextGenClient> TextGenClient for CachedTextClient<C> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, request: &TextRequest) -> Result<String, ClientError> {
        let path = self.path(request);
        if let Some(bytes) = read_optional(&path)? {
            let entry: CachedText = serde_json::from_slice(&bytes)
                .map_err(|e| ClientError::permanent(format!("corrupt cache entry {}: {e}", path.display())))?;
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(entry.response);
        }
        let response = self.inner.complete(request)?;
        let entry = CachedText { client: self.inner.id().to_string(), request: request.clone(), response };
        let bytes = serde_json::to_vec_pretty(&entry).expect("cache entry serializes");
        write_atomic(&path, &bytes, &self.write_lock)
            .map_err(|e| ClientError::permanent(format!("cache write {}: {e}", path.display())))?;
        Ok(entry.response)
    }
}

/// Read-through image cache: `<dir>/image/<key>.png`.
pub struct CachedImageClient<C> {
    inner: C,
    dir: PathBuf,
    write_lock: Mutex<()>,
    hits: AtomicUsize,
}

impl<C: ImageGenClient> CachedImageClient<C> {
    pub fn new(inner: C, dir: impl Into<PathBuf>) -> Self {
        Self { inner, dir: dir.into(), write_lock: Mutex::new(()), hits: AtomicUsize::new(0) }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }
}

impl<C: ImageGenClient> ImageGenClient for CachedImageClient<C> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn generate(&self, request: &ImageRequest) -> Result<RgbImage, ClientError> {
        let path = self.dir.join("image").join(format!("{}.png", request.cache_key(self.inner.id())));
        if let Some(bytes) = read_optional(&path)? {
            let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png)
                .map_err(|e| ClientError::permanent(format!("corrupt cached image {}: {e}", path.display())))?;
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(img.to_rgb8());
        }
        let img = self.inner.generate(request)?;
        write_atomic(&path, &encode_png(&img), &self.write_lock)
            .map_err(|e| ClientError::permanent(format!("cache write {}: {e}", path.display())))?;
        Ok(img)
    }
}

type TextFn = dyn Fn(&TextRequest, usize) -> Result<String, ClientError> + Send + Sync;

/// Answers from a closure, canned list or recorded table; counts calls.
pub struct StubTextClient {
    id: String,
    respond: Box<TextFn>,
    calls: AtomicUsize,
}

impl StubTextClient {
    /// `f` receives the request and the zero-based call number.
    pub fn from_fn(
        id: &str,
        f: impl Fn(&TextRequest, usize) -> Result<String, ClientError> + Send + Sync + 'static,
    ) -> Self {
        Self { id: id.to_string(), respond: Box::new(f), calls: AtomicUsize::new(0) }
    }

    /// Returns `responses` in order, cycling when exhausted.
    pub fn canned(id: &str, responses: Vec<String>) -> Self {
        assert!(!responses.is_empty(), "canned client needs at least one response");
        Self::from_fn(id, move |_, i| Ok(responses[i % responses.len()].clone()))
    }

    /// Looks responses up by exact prompt; unknown prompts fail permanently.
    pub fn recorded(id: &str, responses: HashMap<String, String>) -> Self {
        Self::from_fn(id, move |req, _| {
            responses
                .get(&req.prompt)
                .cloned()
                .ok_or_else(|| ClientError::permanent(format!("no recorded response for {:?}", req.prompt)))
        })
    }

    /// Fails every call with a retryable error.
    pub fn failing(id: &str, message: &str) -> Self {
        let message = message.to_string();
        Self::from_fn(id, move |_, _| Err(ClientError::transient(message.clone())))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl TextGenClient for StubTextClient {
    fn id(&self) -> &str {
        &self.id
    }
    fn complete(&self, request: &TextRequest) -> Result<String, ClientError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        (self.respond)(request, n)
    }
}

type ImageFn = dyn Fn(&ImageRequest, usize) -> Result<RgbImage, ClientError> + Send + Sync;

pub struct StubImageClient {
    id: String,
    respond: Box<ImageFn>,
    calls: AtomicUsize,
}

impl StubImageClient {
    pub fn from_fn(
        id: &str,
        f: impl Fn(&ImageRequest, usize) -> Result<RgbImage, ClientError> + Send + Sync + 'static,
    ) -> Self {
        Self { id: id.to_string(), respond: Box::new(f), calls: AtomicUsize::new(0) }
    }

    pub fn failing(id: &str, message: &str) -> Self {
        let message = message.to_string();
        Self::from_fn(id, move |_, _| Err(ClientError::transient(message.clone())))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ImageGenClient for StubImageClient {
    fn id(&self) -> &str {
        &self.id
    }
    fn generate(&self, request: &ImageRequest) -> Result<RgbImage, ClientError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        (self.respond)(request, n)
    }
}

fn rng_for(parts: &[&[u8]]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Offline text generator built on the synthetic corpus vocabulary.
///
/// Output depends only on the seed, the template name and its inputs, so a
/// run is reproducible without any cache.
#[derive(Debug, Clone)]
pub struct SyntheticTextClient {
    id: String,
    seed: u64,
}

impl SyntheticTextClient {
    pub fn new(seed: u64) -> Self {
        Self { id: format!("synthetic-text-v1/seed-{seed}"), seed }
    }
}

impl TextGenClient for SyntheticTextClient {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &TextRequest) -> Result<String, ClientError> {
        let seed = self.seed.to_le_bytes();
        match request.template.as_str() {
            DESCRIBE_TEMPLATE => {
                let emotion = request.var("emotion").unwrap_or_default();
                let class: EmotionClass =
                    emotion.parse().map_err(|_| ClientError::permanent(format!("unknown emotion {emotion:?}")))?;
                let n = request.var("n").unwrap_or_default();
                let mut rng = rng_for(&[&seed, b"describe", emotion.as_bytes(), n.as_bytes()]);
                Ok(synthetic_description(class, &mut rng))
            }
            DISTRIBUTION_TEMPLATE => {
                let text = request.var("text").unwrap_or_default();
                let class = guess_class(text).unwrap_or(EmotionClass::Neutral);
                let mut rng = rng_for(&[&seed, b"distribution", text.as_bytes()]);
                let d = peaked_distribution(class, &mut rng);
                Ok(d.values().iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", "))
            }
            other => Err(ClientError::permanent(format!("synthetic client has no answer for template {other:?}"))),
        }
    }
}

/// Offline image generator: a rig render of the class signature the prompt suggests.
///
/// The weights are also stamped into the first pixel row so that
/// [`super::PixelCodeTracker`] recovers them exactly. Prompts with no
/// recognizable class produce an empty frame with no face.
pub struct SyntheticImageClient {
    id: String,
    seed: u64,
    renderer: RigRenderer,
}

impl SyntheticImageClient {
    pub fn new(seed: u64, config: RenderConfig) -> Result<Self, DatagenError> {
        let renderer = RigRenderer::new(Arc::new(crate::renderer::FaceRig::canonical()), config)
            .map_err(|e| DatagenError::Config(e.to_string()))?;
        stamp_pixel_code(&mut RgbImage::new(config.width, config.height), &BlendshapeVector::zeros())
            .map_err(|e| DatagenError::Config(e.to_string()))?;
        Ok(Self { id: format!("synthetic-image-v1/seed-{seed}/{}x{}", config.width, config.height), seed, renderer })
    }
}

impl ImageGenClient for SyntheticImageClient {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, request: &ImageRequest) -> Result<RgbImage, ClientError> {
        let cfg = self.renderer.config();
        let Some(class) = guess_class(&request.prompt) else {
            return Ok(RgbImage::from_pixel(cfg.width, cfg.height, Rgb(BACKGROUND)));
        };
        let mut rng = rng_for(&[&self.seed.to_le_bytes(), request.prompt.as_bytes(), &request.variant.to_le_bytes()]);
        let weights: Vec<f64> =
            class_signature(class).weights().iter().map(|w| (w + rng.gen_range(-0.04..0.04)).clamp(0.0, 1.0)).collect();
        let weights = BlendshapeVector::new(&weights).expect("clamped weights");
        let mut img = self.renderer.render(&weights).map_err(|e| ClientError::permanent(e.to_string()))?;
        stamp_pixel_code(&mut img, &weights).map_err(|e| ClientError::permanent(e.to_string()))?;
        Ok(img)
    }
}
