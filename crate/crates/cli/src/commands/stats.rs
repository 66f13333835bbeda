use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use emo3d::analysis::{compute_stats, frequent_words, DatasetStats};
use emo3d::EmotionClass;
use serde::Serialize;

use super::load_recorded;
use crate::error::CliError;
use crate::manifest::{resolve_target, write_file, RunManifest};
use crate::Globals;

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// JSON path, or a directory for stats.json.
    #[arg(long)]
    out: PathBuf,
    /// Most frequent non-stopwords listed per class.
    #[arg(long, default_value_t = 10)]
    top_words: usize,
}

#[derive(Serialize)]
struct StatsFile {
    #[serde(flatten)]
    stats: DatasetStats,
    frequent_words: BTreeMap<String, Vec<(String, usize)>>,
}

pub fn run(args: StatsArgs, globals: &Globals) -> Result<(), CliError> {
    let target = resolve_target(&args.out, "stats.json")?;
    let mut manifest = RunManifest::new("stats", globals.seed, serde_json::json!({ "top_words": args.top_words }));
    let triads = load_recorded(&args.dataset, &mut manifest)?;
    let stats = compute_stats(&triads)?;
    let mut words = BTreeMap::new();
    for class in EmotionClass::ALL {
        if stats.class(class).num_triads > 0 {
            words.insert(class.name().to_string(), frequent_words(&triads, class, args.top_words)?);
        }
    }
    let mut text = serde_json::to_string_pretty(&StatsFile { stats, frequent_words: words }).expect("stats serialize");
    text.push('\n');
    write_file(&target.file, text.as_bytes())?;
    manifest.output(&target.file);
    manifest.write(&target.manifest)
}
