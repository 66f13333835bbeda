use std::path::{Path, PathBuf};

use clap::Args;
use emo3d::blendshape::channel_index;
use emo3d::{BlendshapeVector, NUM_BLENDSHAPES};
use serde_json::Value;

use crate::backends::{load_rig, renderer, CANONICAL};
use crate::error::CliError;
use crate::manifest::{resolve_target, write_file, RunManifest, RUN_MANIFEST};
use crate::Globals;

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// JSON file: an array of 52 weights or an object of channel name to weight.
    #[arg(long)]
    blendshapes: Option<PathBuf>,
    /// Rig directory, or `canonical` for the built-in rig.
    #[arg(long, default_value = CANONICAL)]
    rig: String,
    /// Image side in pixels.
    #[arg(long, default_value_t = 224)]
    size: u32,
    /// PNG path, or a directory for face.png.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the selected rig as an editable rig directory.
    #[arg(long)]
    export_rig: Option<PathBuf>,
}

/// Reads weights from either JSON shape. Channels missing from an object are zero.
pub fn read_blendshapes(path: &Path) -> Result<BlendshapeVector, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let bad = |m: String| CliError::Data(format!("{}: {m}", path.display()));
    let value: Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let weights: Vec<f64> = match value {
        Value::Array(items) => items
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| bad(format!("non-numeric weight {v}"))))
            .collect::<Result<_, _>>()?,
        Value::Object(map) => {
            let mut w = vec![0.0; NUM_BLENDSHAPES];
            for (name, v) in &map {
                let i = channel_index(name).ok_or_else(|| bad(format!("unknown channel {name:?}")))?;
                w[i] = v.as_f64().ok_or_else(|| bad(format!("non-numeric weight for {name}")))?;
            }
            w
        }
        _ => return Err(bad("expected an array or an object".into())),
    };
    BlendshapeVector::new(&weights).map_err(|e| bad(e.to_string()))
}

pub fn run(args: RenderArgs, globals: &Globals) -> Result<(), CliError> {
    if args.blendshapes.is_none() && args.export_rig.is_none() {
        return Err(CliError::Usage("render needs --blendshapes (with --out) or --export-rig".into()));
    }
    let resolved = serde_json::json!({ "rig": args.rig, "size": args.size });
    let mut manifest = RunManifest::new("render", globals.seed, resolved);

    if let Some(dir) = &args.export_rig {
        let rig = load_rig(&args.rig)?;
        rig.save_dir(dir)?;
        log::info!("wrote rig {} to {}", rig.name, dir.display());
        manifest.rig = Some(rig.name);
        manifest.output(dir);
        if args.blendshapes.is_none() {
            return manifest.write(&dir.join(RUN_MANIFEST));
        }
    }

    let input = args.blendshapes.expect("checked above");
    let out = args.out.ok_or_else(|| CliError::Usage("render --blendshapes needs --out".into()))?;
    let target = resolve_target(&out, "face.png")?;
    let weights = read_blendshapes(&input)?;
    manifest.input(&input)?;
    let face = renderer("rig", &args.rig, args.size)?;
    manifest.rig = Some(face.name().to_string());
    let image = face.render(&weights)?;
    let mut png = Vec::new();
    image
        .write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)
        .map_err(|e| CliError::Data(format!("cannot encode PNG: {e}")))?;
    write_file(&target.file, &png)?;
    manifest.output(&target.file);
    manifest.write(&target.manifest)
}
