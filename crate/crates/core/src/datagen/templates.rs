use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::DatagenError;
use crate::embeddings::cache::hex;

pub const DESCRIBE_TEMPLATE: &str = "describe";
pub const DISTRIBUTION_TEMPLATE: &str = "distribution";

const DESCRIBE_DEFAULT: &str = include_str!("../../templates/describe.txt");
const DISTRIBUTION_DEFAULT: &str = include_str!("../../templates/distribution.txt");

/// A prompt with `{name}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub name: String,
    pub text: String,
}

impl Template {
    pub fn new(name: &str, text: &str, required: &[&str]) -> Result<Self, DatagenError> {
        for var in required {
            if !text.contains(&format!("{{{var}}}")) {
                return Err(DatagenError::Config(format!("template {name} lacks the {{{var}}} placeholder")));
            }
        }
        Ok(Self { name: name.to_string(), text: text.to_string() })
    }

    pub fn sha256(&self) -> String {
        hex(&Sha256::digest(self.text.as_bytes()))
    }

    pub fn render(&self, vars: &BTreeMap<String, String>) -> String {
        let mut out = self.text.clone();
        for (k, v) in vars {
            out = out.replace(&format!("{{{k}}}"), v);
        }
        out.trim_end().to_string()
    }
}

/// The two prompts the pipeline sends to the text generator.
///
/// Defaults ship with the crate as editable text files; a directory holding
/// `describe.txt` and/or `distribution.txt` overrides them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub describe: Template,
    pub distribution: Template,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            describe: Template::new(DESCRIBE_TEMPLATE, DESCRIBE_DEFAULT, &["emotion", "n"]).expect("bundled template"),
            distribution: Template::new(DISTRIBUTION_TEMPLATE, DISTRIBUTION_DEFAULT, &["text"])
                .expect("bundled template"),
        }
    }
}

impl PromptTemplates {
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, DatagenError> {
        let dir = dir.as_ref();
        let read = |file: &str, fallback: &str| -> Result<String, DatagenError> {
            let path = dir.join(file);
            match std::fs::read_to_string(&path) {
                Ok(s) => Ok(s),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(fallback.to_string()),
                Err(e) => Err(DatagenError::io(path, e)),
            }
        };
        Ok(Self {
            describe: Template::new(DESCRIBE_TEMPLATE, &read("describe.txt", DESCRIBE_DEFAULT)?, &["emotion", "n"])?,
            distribution: Template::new(
                DISTRIBUTION_TEMPLATE,
                &read("distribution.txt", DISTRIBUTION_DEFAULT)?,
                &["text"],
            )?,
        })
    }

    pub fn hashes(&self) -> BTreeMap<String, String> {
        [&self.describe, &self.distribution].iter().map(|t| (t.name.clone(), t.sha256())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_templates_render() {
        let t = PromptTemplates::default();
        let vars = BTreeMap::from([("text".to_string(), "A calm face.".to_string())]);
        let p = t.distribution.render(&vars);
        assert!(p.contains("A calm face."));
        assert!(!p.contains("{text}"));
        assert_eq!(t.hashes().len(), 2);
    }

    #[test]
    fn missing_placeholder_is_rejected() {
        assert!(matches!(Template::new("describe", "no slots", &["emotion"]), Err(DatagenError::Config(_))));
    }

    #[test]
    fn directory_overrides_one_template() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("describe.txt"), "Say {emotion} #{n}").unwrap();
        let t = PromptTemplates::load_dir(dir.path()).unwrap();
        assert_eq!(t.describe.text, "Say {emotion} #{n}");
        assert_eq!(t.distribution, PromptTemplates::default().distribution);
        assert_ne!(t.hashes(), PromptTemplates::default().hashes());
    }
}
