use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use emo3d::datagen::{
    build_triads, nearest_words, primitive_face_items, run_pipeline, BlendshapeTracker, BuildConfig, CachedImageClient,
    CachedTextClient, CommandTracker, EmotionLexicon, ImageGenClient, LiveImageClient, LiveTextClient, PipelineConfig,
    PixelCodeTracker, PromptTemplates, RateLimited, SyntheticImageClient, SyntheticTextClient, TextGenClient,
    TokenBucket,
};
use emo3d::renderer::RenderConfig;
use emo3d::EmotionClass;
use serde::{Deserialize, Serialize};

use crate::config::flag;
use crate::error::CliError;
use crate::manifest::{write_file, RunManifest, RUN_MANIFEST};
use crate::Globals;

#[derive(Debug, Args)]
pub struct DatagenArgs {
    /// Output directory for dataset.jsonl, images/ and the manifests.
    #[arg(long)]
    out: PathBuf,
    /// Descriptions requested per emotion class.
    #[arg(long)]
    per_class: Option<usize>,
    /// Comma-separated subset of classes.
    #[arg(long, value_delimiter = ',')]
    classes: Option<Vec<EmotionClass>>,
    #[arg(long)]
    images_per_text: Option<u32>,
    /// Directory overriding the bundled describe.txt / distribution.txt prompts.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// `pixel-code` (reads synthetic faces) or `command:<program> [args...]`.
    #[arg(long)]
    tracker: Option<String>,
    /// Side of the offline synthetic face images.
    #[arg(long)]
    render_size: Option<u32>,
    /// Call the HTTP generation APIs; keys come from the environment.
    #[arg(long)]
    live: bool,
    #[arg(long)]
    text_endpoint: Option<String>,
    #[arg(long)]
    text_model: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    image_endpoint: Option<String>,
    #[arg(long)]
    image_model: Option<String>,
    /// Requested image size for the live image API, e.g. 1024x1024.
    #[arg(long)]
    image_size: Option<String>,
    /// Live requests per second across all workers.
    #[arg(long)]
    rate: Option<f64>,
    /// Word emotion lexicon (TSV) for primitive faces and nearest-word queries.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Build primitive emotion faces for these lexicon words instead of generating descriptions.
    #[arg(long, value_delimiter = ',', requires = "lexicon")]
    words: Option<Vec<String>>,
    /// Only list the lexicon words closest to this one (writes nearest.json).
    #[arg(long, requires = "lexicon", conflicts_with = "words")]
    nearest: Option<String>,
    /// Number of neighbours for --nearest.
    #[arg(long, default_value_t = 10)]
    k: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatagenOptions {
    pub per_class: usize,
    pub classes: Vec<EmotionClass>,
    pub build: BuildConfig,
    pub templates: Option<PathBuf>,
    pub tracker: String,
    pub render_size: u32,
    pub live: bool,
    pub text_endpoint: String,
    pub text_model: String,
    pub temperature: f64,
    pub image_endpoint: String,
    pub image_model: String,
    pub image_size: String,
    pub rate: Option<f64>,
}

impl Default for DatagenOptions {
    fn default() -> Self {
        let pipeline = PipelineConfig::default();
        Self {
            per_class: pipeline.per_class,
            classes: pipeline.classes,
            build: pipeline.build,
            templates: None,
            tracker: "pixel-code".into(),
            render_size: 128,
            live: false,
            text_endpoint: "https://api.openai.com/v1".into(),
            text_model: "gpt-3.5-turbo".into(),
            temperature: 1.0,
            image_endpoint: "https://api.openai.com/v1".into(),
            image_model: "dall-e-3".into(),
            image_size: "1024x1024".into(),
            rate: None,
        }
    }
}

fn tracker(spec: &str) -> Result<Box<dyn BlendshapeTracker>, CliError> {
    if spec == "pixel-code" {
        return Ok(Box::new(PixelCodeTracker));
    }
    let rest = spec.strip_prefix("command:").ok_or_else(|| {
        CliError::Usage(format!("unknown tracker {spec:?}; expected pixel-code or command:<program>"))
    })?;
    let mut parts = rest.split_whitespace().map(str::to_string);
    let program = parts.next().ok_or_else(|| CliError::Usage("command: tracker needs a program".into()))?;
    Ok(Box::new(CommandTracker::spawn(&program, &parts.collect::<Vec<_>>())?))
}

type Clients = (Arc<dyn TextGenClient>, Arc<dyn ImageGenClient>);

fn clients(opts: &DatagenOptions, seed: u64, cache_dir: Option<&Path>) -> Result<Clients, CliError> {
    let (mut text, mut image): Clients = if opts.live {
        (
            Arc::new(LiveTextClient::from_env(&opts.text_endpoint, &opts.text_model, opts.temperature)?),
            Arc::new(LiveImageClient::from_env(&opts.image_endpoint, &opts.image_model, &opts.image_size)?),
        )
    } else {
        let size = RenderConfig { width: opts.render_size, height: opts.render_size };
        (Arc::new(SyntheticTextClient::new(seed)), Arc::new(SyntheticImageClient::new(seed, size)?))
    };
    if let Some(rate) = opts.rate {
        let bucket = || TokenBucket::new(rate.max(1.0), rate);
        text = Arc::new(RateLimited::new(text, bucket()?));
        image = Arc::new(RateLimited::new(image, bucket()?));
    }
    if let Some(dir) = cache_dir {
        let dir = dir.join("datagen");
        text = Arc::new(CachedTextClient::new(text, &dir));
        image = Arc::new(CachedImageClient::new(image, &dir));
    }
    Ok((text, image))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn run(args: DatagenArgs, globals: &Globals) -> Result<(), CliError> {
    let mut opts: DatagenOptions = globals.config.section("datagen")?;
    flag(&mut opts.per_class, args.per_class);
    flag(&mut opts.classes, args.classes);
    flag(&mut opts.build.images_per_text, args.images_per_text);
    flag(&mut opts.templates, args.templates.map(Some));
    flag(&mut opts.tracker, args.tracker);
    flag(&mut opts.render_size, args.render_size);
    flag(&mut opts.text_endpoint, args.text_endpoint);
    flag(&mut opts.text_model, args.text_model);
    flag(&mut opts.temperature, args.temperature);
    flag(&mut opts.image_endpoint, args.image_endpoint);
    flag(&mut opts.image_model, args.image_model);
    flag(&mut opts.image_size, args.image_size);
    flag(&mut opts.rate, args.rate.map(Some));
    opts.live |= args.live;
    if opts.live && opts.tracker == "pixel-code" {
        return Err(CliError::Usage("live images need a real face tracker: pass --tracker command:<program>".into()));
    }

    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let mut manifest = RunManifest::new("datagen", globals.seed, &opts);

    let lexicon = match &args.lexicon {
        Some(path) => {
            manifest.input(path)?;
            Some(EmotionLexicon::load(path)?)
        }
        None => None,
    };
    if let (Some(lex), Some(word)) = (&lexicon, &args.nearest) {
        let near: Vec<serde_json::Value> = nearest_words(lex, word, args.k)?
            .into_iter()
            .map(|(w, s)| serde_json::json!({ "word": w, "similarity": s }))
            .collect();
        let path = args.out.join("nearest.json");
        write_json(&path, &serde_json::json!({ "query": word, "k": args.k, "neighbours": near }))?;
        manifest.output(&path);
        return manifest.write(&args.out.join(RUN_MANIFEST));
    }

    let (text, image) = clients(&opts, globals.seed, globals.cache_dir.as_deref())?;
    let tracker = tracker(&opts.tracker)?;
    let report = match (&lexicon, &args.words) {
        (Some(lex), Some(words)) => {
            let words: Vec<&str> = words.iter().map(String::as_str).collect();
            let items = primitive_face_items(lex, &words)?;
            build_triads(&items, image.as_ref(), tracker.as_ref(), &args.out, &opts.build)?
        }
        _ => {
            let templates = match &opts.templates {
                Some(dir) => PromptTemplates::load_dir(dir)?,
                None => PromptTemplates::default(),
            };
            let config =
                PipelineConfig { per_class: opts.per_class, classes: opts.classes.clone(), build: opts.build.clone() };
            run_pipeline(text.as_ref(), image.as_ref(), tracker.as_ref(), &templates, &config, &args.out)?
        }
    };
    let c = &report.manifest.counts;
    log::info!("{} triads (train {}, val {}, test {}), {} skipped", c.triads, c.train, c.val, c.test, c.skipped);
    manifest.output(&report.dataset_path);
    manifest.output(&report.manifest_path);
    manifest.write(&args.out.join(RUN_MANIFEST))
}
