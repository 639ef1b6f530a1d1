mod learn;
mod pipeline;

use std::path::{Path, PathBuf};

use gridscreen::imageio;
use gridscreen::score::load_labels;
use gridscreen::train::Example;
use ndarray::Array2;

pub use learn::{eval, score, synth, train};
pub use pipeline::{autolabel, extract, stitch};

use crate::error::CliError;

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))
}

fn load_png(path: &Path) -> Result<Array2<f32>, CliError> {
    imageio::load_gray(path).map_err(|source| CliError::Image { path: path.to_path_buf(), source })
}

/// `(id, path)` for every `.png` in `dir`, sorted by id.
fn list_pngs(dir: &Path) -> Result<Vec<(String, PathBuf)>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(CliError::io(format!("reading {}", dir.display())))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(CliError::io(dir.display().to_string()))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// One example per manifest row, image from `<data>/<id>.png`.
fn load_dataset(data: &Path, labels: Option<&Path>) -> Result<(Vec<Example>, PathBuf), CliError> {
    let manifest = labels.map(Path::to_path_buf).unwrap_or_else(|| data.join("labels.csv"));
    let records = load_labels(&manifest)?;
    if records.is_empty() {
        return Err(CliError::Data(format!("{} lists no samples", manifest.display())));
    }
    let examples = records
        .into_iter()
        .map(|r| {
            let image = load_png(&data.join(format!("{}.png", r.id)))?;
            Ok(Example { id: r.id, image, scores: r.scores })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok((examples, manifest))
}
