use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use image::RgbImage;

use super::{image_digest, text_digest, Embedding, EmbeddingError, ImageEncoder, TextEncoder};

/// Overrides the default cache location.
pub const CACHE_DIR_ENV: &str = "EMO3D_CACHE_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Text,
    Image,
}

impl Modality {
    fn dir(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Image => "image",
        }
    }
}

/// Content-addressed store: `<root>/<backend>/<modality>/<sha256>.vec`,
/// each file a little-endian `f32` array.
#[derive(Debug)]
pub struct EmbeddingCache {
    root: PathBuf,
    write_lock: Mutex<()>,
}

impl EmbeddingCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into(), write_lock: Mutex::new(()) }
    }

    /// Uses `$EMO3D_CACHE_DIR` when set, else `fallback`.
    pub fn from_env_or(fallback: impl Into<PathBuf>) -> Self {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(dir) if !dir.is_empty() => Self::new(PathBuf::from(dir)),
            _ => Self::new(fallback),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, backend: &str, modality: Modality, digest: &[u8; 32]) -> PathBuf {
        let safe: String = backend
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
            .collect();
        self.root.join(safe).join(modality.dir()).join(format!("{}.vec", hex(digest)))
    }

    pub fn load(
        &self,
        backend: &str,
        modality: Modality,
        digest: &[u8; 32],
    ) -> Result<Option<Embedding>, EmbeddingError> {
        let path = self.path_for(backend, modality, digest);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(EmbeddingError::Cache(format!("{}: {e}", path.display()))),
        };
        if bytes.len() % 4 != 0 {
            return Err(EmbeddingError::Cache(format!("{}: truncated vector file", path.display())));
        }
        Ok(Some(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect()))
    }

    pub fn store(&self, backend: &str, modality: Modality, digest: &[u8; 32], v: &[f32]) -> Result<(), EmbeddingError> {
        let path = self.path_for(backend, modality, digest);
        let err = |e: std::io::Error| EmbeddingError::Cache(format!("{}: {e}", path.display()));
        let _guard = self.write_lock.lock().expect("cache lock poisoned");
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(err)?;
        }
        let tmp = path.with_extension("vec.tmp");
        {
            let mut f = fs::File::create(&tmp).map_err(err)?;
            let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
            f.write_all(&bytes).map_err(err)?;
        }
        fs::rename(&tmp, &path).map_err(err)
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Wraps an encoder with a read-through [`EmbeddingCache`].
pub struct CachedBackend<B> {
    inner: B,
    cache: EmbeddingCache,
}

impl<B> CachedBackend<B> {
    pub fn new(inner: B, cache: EmbeddingCache) -> Self {
        Self { inner, cache }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: TextEncoder> TextEncoder for CachedBackend<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed_text(&self, text: &str) -> Result<Embedding, EmbeddingError> {
        let digest = text_digest(text);
        if let Some(v) = self.cache.load(self.inner.name(), Modality::Text, &digest)? {
            return Ok(v);
        }
        let v = self.inner.embed_text(text)?;
        self.cache.store(self.inner.name(), Modality::Text, &digest, &v)?;
        Ok(v)
    }
}

impl<B: TextEncoder + ImageEncoder> ImageEncoder for CachedBackend<B> {
    fn embed_image(&self, image: &RgbImage) -> Result<Embedding, EmbeddingError> {
        let digest = image_digest(image);
        if let Some(v) = self.cache.load(self.inner.name(), Modality::Image, &digest)? {
            return Ok(v);
        }
        let v = self.inner.embed_image(image)?;
        self.cache.store(self.inner.name(), Modality::Image, &digest, &v)?;
        Ok(v)
    }
}
