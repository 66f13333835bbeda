use std::path::PathBuf;

use clap::Args;
use emo3d::dataset::{load_examples, split_counts};
use emo3d::Split;
use serde::Serialize;

use super::{image_root, load_recorded};
use crate::error::CliError;
use crate::manifest::{resolve_target, write_file, RunManifest};
use crate::Globals;

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Root for relative image paths; defaults to the dataset's directory.
    #[arg(long)]
    images: Option<PathBuf>,
    /// Decode every referenced image, not just check that it exists.
    #[arg(long)]
    decode_images: bool,
    /// Also write the summary and a run manifest here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Summary {
    total: usize,
    train: usize,
    val: usize,
    test: usize,
    with_image: usize,
}

pub fn run(args: ValidateArgs, globals: &Globals) -> Result<(), CliError> {
    let mut manifest =
        RunManifest::new("validate", globals.seed, serde_json::json!({ "decode_images": args.decode_images }));
    let triads = load_recorded(&args.dataset, &mut manifest)?;
    let root = image_root(&args.dataset, args.images.as_deref());
    let mut with_image = 0;
    for t in &triads {
        if let Some(rel) = &t.image_path {
            with_image += 1;
            let path = root.join(rel);
            if !path.is_file() {
                return Err(CliError::Data(format!("record {:?}: image {} not found", t.id, path.display())));
            }
        }
    }
    if args.decode_images {
        load_examples(&triads, Some(&root))?;
    }
    let counts = split_counts(&triads);
    let get = |s: Split| counts.get(&s).copied().unwrap_or(0);
    let summary = Summary {
        total: triads.len(),
        train: get(Split::Train),
        val: get(Split::Val),
        test: get(Split::Test),
        with_image,
    };
    println!("train {}", summary.train);
    println!("val {}", summary.val);
    println!("test {}", summary.test);
    println!("total {}", summary.total);
    if let Some(out) = &args.out {
        let target = resolve_target(out, "validation.json")?;
        let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        text.push('\n');
        write_file(&target.file, text.as_bytes())?;
        manifest.output(&target.file);
        manifest.write(&target.manifest)?;
    }
    Ok(())
}
