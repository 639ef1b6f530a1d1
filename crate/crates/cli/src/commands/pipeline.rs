use gridscreen::autolabel::{auto_scores, CannyParams};
use gridscreen::extract::extract_squares;
use gridscreen::montage::{load_stage_manifest, stitch as stitch_montage};
use gridscreen::mrc::{read_mrc, write_mrc, Mode};
use gridscreen::score::{load_labels, write_labels, LabelRecord};
use gridscreen::{imageio, Attribute, ExtractConfig, MrcVolume, SquareImage};
use serde::Serialize;

use super::{create_dir, list_pngs, load_png};
use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::{AutolabelArgs, ExtractArgs, StitchArgs};

pub fn stitch(args: &StitchArgs, mut manifest: RunManifest) -> Result<(), CliError> {
    let positions = load_stage_manifest(&args.manifest)?;
    let montage = stitch_montage(&positions, args.rows, args.cols)?;
    create_dir(&args.out)?;

    let image_path = args.out.join("montage.mrc");
    write_mrc(&MrcVolume::from_plane(montage.image.view(), Mode::Float32), &image_path, Mode::Float32)?;
    let placements_path = args.out.join("placements.json");
    std::fs::write(&placements_path, montage.placements_json()).map_err(CliError::io(placements_path.display().to_string()))?;

    manifest.inputs.push(args.manifest.clone());
    manifest.inputs.extend(positions.iter().map(|p| p.tile.clone()));
    manifest.outputs = vec![image_path, placements_path];
    manifest.write(&args.out)?;
    println!(
        "stitched {} tiles into a {}x{} montage ({} empty cells)",
        positions.len(),
        montage.rows,
        montage.cols,
        montage.empty_cells.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct SquareEntry<'a> {
    id: String,
    center: (usize, usize),
    ncc_score: f32,
    source_grid: &'a str,
}

pub fn extract(args: &ExtractArgs, mut manifest: RunManifest) -> Result<(), CliError> {
    let volume = read_mrc(&args.montage)?;
    let plane = volume.plane(0)?;
    let grid = args
        .grid_id
        .clone()
        .or_else(|| args.montage.file_stem().and_then(|s| s.to_str()).map(str::to_string))
        .unwrap_or_else(|| "grid".into());
    let cfg = ExtractConfig {
        side: args.side,
        template_side: args.template_side,
        threshold: args.threshold,
        min_separation: args.min_separation,
        max_count: args.max_count,
    };
    let squares: Vec<SquareImage> = extract_squares(plane, &cfg, &grid)?;
    create_dir(&args.out)?;

    let mut index = Vec::with_capacity(squares.len());
    for (k, sq) in squares.iter().enumerate() {
        let id = format!("{grid}_sq{k:03}");
        let path = args.out.join(format!("{id}.png"));
        imageio::save_gray16(&path, sq.pixels.view()).map_err(|source| CliError::Image { path: path.clone(), source })?;
        manifest.outputs.push(path);
        index.push(SquareEntry { id, center: sq.center, ncc_score: sq.ncc_score, source_grid: &sq.source_grid });
    }
    let index_path = args.out.join("squares.json");
    std::fs::write(&index_path, serde_json::to_string_pretty(&index)?).map_err(CliError::io(index_path.display().to_string()))?;

    manifest.inputs.push(args.montage.clone());
    manifest.outputs.push(index_path);
    manifest.write(&args.out)?;
    println!("extracted {} squares", squares.len());
    Ok(())
}

pub fn autolabel(args: &AutolabelArgs, mut manifest: RunManifest) -> Result<(), CliError> {
    let params = CannyParams { sigma: args.sigma, low: args.low, high: args.high };
    let manual = match &args.manual {
        Some(path) => {
            manifest.inputs.push(path.clone());
            load_labels(path)?
        }
        None => Vec::new(),
    };
    let pngs = list_pngs(&args.squares)?;
    if pngs.is_empty() {
        return Err(CliError::Data(format!("no PNG squares in {}", args.squares.display())));
    }

    let mut records = Vec::with_capacity(pngs.len());
    for (id, path) in &pngs {
        let mut scores = auto_scores(&SquareImage::from_pixels(load_png(path)?), &params);
        if let Some(m) = manual.iter().find(|r| &r.id == id) {
            for attr in [Attribute::Cracking, Attribute::Contamination, Attribute::Overall] {
                scores.set(attr, m.scores.get(attr));
            }
        }
        records.push(LabelRecord { id: id.clone(), scores });
    }
    create_dir(&args.out)?;
    let labels_path = args.out.join("labels.csv");
    write_labels(&labels_path, &records)?;

    manifest.inputs.push(args.squares.clone());
    manifest.outputs.push(labels_path);
    manifest.write(&args.out)?;
    println!("labeled {} squares", records.len());
    Ok(())
}
