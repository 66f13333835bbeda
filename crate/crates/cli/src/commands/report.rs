use std::path::PathBuf;

use clap::Args;
use emo3d::metric::{format_table, rank_rows, read_report_csv, write_report_csv};

use crate::error::CliError;
use crate::manifest::{resolve_target, write_file, RunManifest};
use crate::Globals;

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report CSVs written by `eval`.
    #[arg(long = "input", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Table path, or a directory for report.txt and the merged report.csv.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: ReportArgs, globals: &Globals) -> Result<(), CliError> {
    let target = resolve_target(&args.out, "report.txt")?;
    let merged = target.file.with_extension("csv");
    if merged == target.file {
        return Err(CliError::Usage("report --out names the table; use a .txt path or a directory".into()));
    }
    let mut manifest = RunManifest::new("report", globals.seed, serde_json::json!({}));
    let mut rows = Vec::new();
    for path in &args.inputs {
        let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
        rows.extend(read_report_csv(file).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?);
        manifest.input(path)?;
    }
    let mut backends: Vec<&str> = rows.iter().map(|r| r.backend.as_str()).collect();
    backends.sort_unstable();
    backends.dedup();
    if backends.len() > 1 {
        log::warn!("rows come from different backends ({}); scores are not comparable", backends.join(", "));
    }
    let table = format_table(&rows)?;
    write_file(&target.file, table.as_bytes())?;
    manifest.output(&target.file);
    let mut csv = Vec::new();
    write_report_csv(&mut csv, &rank_rows(&rows)?)?;
    write_file(&merged, &csv)?;
    manifest.output(&merged);
    manifest.write(&target.manifest)?;
    print!("{table}");
    Ok(())
}
