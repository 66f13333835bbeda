use std::path::{Path, PathBuf};

use clap::Args;
use emo3d::dataset::filter_split;
use emo3d::math::DEFAULT_KL_EPS;
use emo3d::metric::{evaluate_emo3d, evaluate_mse, select_prompt_bank, write_report_csv, DEFAULT_BANK_SIZE, DEFAULT_K};
use emo3d::models::{load_model, read_manifest, FegModel, LookupModel};
use emo3d::synthetic::plant_rendered;
use emo3d::Split;
use serde::{Deserialize, Serialize};

use super::load_recorded;
use crate::backends::{checkpoint_encoder, joint_backend, renderer, CANONICAL};
use crate::config::flag;
use crate::error::CliError;
use crate::manifest::{resolve_target, write_file, RunManifest};
use crate::Globals;

pub const ORACLE: &str = "oracle";

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// A checkpoint directory, or `oracle` for the ground-truth lookup model.
    #[arg(long)]
    model: String,
    #[arg(long)]
    dataset: PathBuf,
    /// Report CSV path, or a directory for report.csv.
    #[arg(long)]
    out: PathBuf,
    /// Rig directory, or `canonical` for the built-in rig.
    #[arg(long)]
    rig: Option<String>,
    /// `rig` (default) or `pixel-code`.
    #[arg(long)]
    renderer: Option<String>,
    /// Render size in pixels (square).
    #[arg(long)]
    size: Option<u32>,
    /// Joint text-image backend used for retrieval.
    #[arg(long)]
    backend: Option<String>,
    /// Sentence encoder for language-model checkpoints.
    #[arg(long)]
    encoder: Option<String>,
    /// With the mock backend, make each test face embed like its description.
    #[arg(long)]
    plant: bool,
    #[arg(long)]
    k: Option<usize>,
    /// Prompt bank size.
    #[arg(long)]
    n: Option<usize>,
    /// KL smoothing constant.
    #[arg(long)]
    eps: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub rig: String,
    pub renderer: String,
    pub size: u32,
    pub backend: String,
    pub encoder: Option<String>,
    pub plant: bool,
    pub k: usize,
    pub n: usize,
    pub eps: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            rig: CANONICAL.into(),
            renderer: "rig".into(),
            size: 224,
            backend: "mock".into(),
            encoder: None,
            plant: false,
            k: DEFAULT_K,
            n: DEFAULT_BANK_SIZE,
            eps: DEFAULT_KL_EPS,
        }
    }
}

pub fn run(args: EvalArgs, globals: &Globals) -> Result<(), CliError> {
    let mut opts: EvalOptions = globals.config.section("eval")?;
    flag(&mut opts.rig, args.rig);
    flag(&mut opts.renderer, args.renderer);
    flag(&mut opts.size, args.size);
    flag(&mut opts.backend, args.backend);
    flag(&mut opts.encoder, args.encoder.map(Some));
    flag(&mut opts.k, args.k);
    flag(&mut opts.n, args.n);
    flag(&mut opts.eps, args.eps);
    opts.plant |= args.plant;

    let target = resolve_target(&args.out, "report.csv")?;
    let mut manifest = RunManifest::new("eval", globals.seed, &opts);
    let triads = load_recorded(&args.dataset, &mut manifest)?;
    let test = filter_split(&triads, Split::Test);
    if test.is_empty() {
        return Err(CliError::Data(format!("{} has no test split", args.dataset.display())));
    }
    let cache = globals.cache_dir.as_deref();
    let joint = joint_backend(&opts.backend, cache)?;
    let face = renderer(&opts.renderer, &opts.rig, opts.size)?;
    if opts.plant {
        let mock = joint.mock.as_ref().ok_or_else(|| CliError::Usage("--plant needs the mock backend".into()))?;
        plant_rendered(mock, face.as_ref(), test.iter().map(|t| (&t.blendshapes, t.text.as_str())))?;
    }

    let model: Box<dyn FegModel> = if args.model == ORACLE {
        Box::new(LookupModel::from_pairs(ORACLE, test.iter().map(|t| (t.text.clone(), t.blendshapes.clone()))))
    } else {
        let dir = Path::new(&args.model);
        let checkpoint = read_manifest(dir)?;
        let encoder = checkpoint_encoder(&checkpoint, opts.encoder.as_deref(), &joint, cache)?;
        manifest.input(&dir.join("manifest.json"))?;
        manifest.input(&dir.join(&checkpoint.weights_file))?;
        Box::new(load_model(dir, encoder)?)
    };

    let bank = select_prompt_bank(&triads, opts.n, globals.seed, joint.backend.as_ref())?;
    let mut result = evaluate_emo3d(model.as_ref(), &bank, face.as_ref(), joint.backend.as_ref(), opts.k, opts.eps)?;
    result.mean_mse = match evaluate_mse(model.as_ref(), &test) {
        Ok(m) => Some(m),
        Err(e) => {
            log::warn!("MSE not reported: {e}");
            None
        }
    };
    log::info!(
        "{}: Emo3D {:.4} over {} prompts ({} failed), k = {}",
        model.name(),
        result.mean_emo3d,
        result.per_prompt.len(),
        result.failures(),
        opts.k
    );
    manifest.backend = Some(result.backend_name.clone());
    manifest.rig = Some(result.rig_name.clone());

    let mut csv = Vec::new();
    write_report_csv(&mut csv, &[result.to_row(model.name())])?;
    write_file(&target.file, &csv)?;
    manifest.output(&target.file);
    let scores = target.file.with_extension("scores.json");
    let mut text = serde_json::to_string_pretty(&result).expect("result serializes");
    text.push('\n');
    write_file(&scores, text.as_bytes())?;
    manifest.output(&scores);
    manifest.write(&target.manifest)
}
