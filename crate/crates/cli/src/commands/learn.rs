use std::path::Path;

use gridscreen::model::{stack_images, Model, ModelConfig};
use gridscreen::score::{write_labels, LabelRecord, MAX_SCORE};
use gridscreen::synth::{generate_corpus, write_corpus, CorpusRanges};
use gridscreen::train::{mae_report, predict, run_files, run_training_from, Architecture, Example, TrainConfig};
use gridscreen::{imageio, ScoreVector};
use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{create_dir, list_pngs, load_dataset, load_png};
use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::{EvalArgs, ScoreArgs, SynthArgs, TrainArgs};

const SCORE_BATCH: usize = 8;

pub fn synth(args: &SynthArgs, mut manifest: RunManifest) -> Result<(), CliError> {
    let ranges = CorpusRanges {
        max_crack_count: args.max_crack_count,
        max_crack_width_px: args.max_crack_width,
        max_coverage: args.max_coverage,
        max_noise_sigma: args.max_noise,
    };
    let samples = generate_corpus(args.n, args.size, args.seed, args.label_fraction, &ranges)?;
    let labels = write_corpus(&args.out, &samples)?;
    manifest.seed = Some(args.seed);
    manifest.outputs = vec![labels, args.out.join("truth.csv")];
    manifest.write(&args.out)?;
    println!("wrote {} synthetic squares to {}", samples.len(), args.out.display());
    Ok(())
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct ConfigFile {
    model: Option<ModelConfig>,
    train: Option<TrainConfig>,
}

fn read_config(path: &Path) -> Result<ConfigFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path.display().to_string()))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn train_config(args: &TrainArgs, base: Option<TrainConfig>) -> TrainConfig {
    let mut c = base.unwrap_or_default();
    if let Some(a) = args.arch {
        c.architecture = a.into();
    }
    if let Some(m) = args.mode {
        c.supervision = m.into();
    }
    c.labeled_count = args.labeled.unwrap_or(c.labeled_count);
    c.unlabeled_count = args.unlabeled.unwrap_or(c.unlabeled_count);
    c.epochs = args.epochs.unwrap_or(c.epochs);
    c.batch_size = args.batch_size.unwrap_or(c.batch_size);
    c.adam.lr = args.lr.unwrap_or(c.adam.lr);
    c.seed = args.seed.unwrap_or(c.seed);
    c.test_fraction = args.test_fraction.unwrap_or(c.test_fraction);
    c
}

pub fn train(args: &TrainArgs, mut manifest: RunManifest) -> Result<(), CliError> {
    let file = match &args.config {
        Some(path) => read_config(path)?,
        None => ConfigFile::default(),
    };
    let config = train_config(args, file.train);
    let (examples, labels) = load_dataset(&args.data, args.labels.as_deref())?;
    let side = examples[0].image.nrows();

    let model = match &args.init {
        Some(path) => {
            manifest.inputs.push(path.clone());
            Model::load(path)?
        }
        None => {
            let mut mc = file.model.unwrap_or_default();
            mc.input_size = side;
            mc.feature_channels = args.channels.unwrap_or(mc.feature_channels);
            Model::new(mc, config.seed)?
        }
    };
    if model.config.input_size != side {
        return Err(CliError::Usage(format!("checkpoint expects {0}x{0} images, data is {side}x{side}", model.config.input_size)));
    }

    create_dir(&args.run_dir)?;
    let result = run_training_from(model, &examples, config, Some(&args.run_dir))?;

    manifest.config = args.config.clone();
    manifest.seed = Some(config.seed);
    manifest.inputs.extend([args.data.clone(), labels]);
    manifest.outputs = [run_files::CONFIG, run_files::LOSSES, run_files::MODEL, run_files::MAE]
        .iter()
        .map(|f| args.run_dir.join(f))
        .collect();
    manifest.write(&args.run_dir)?;
    println!("trained {} epochs; test overall MAE {:.4}", result.losses.len(), result.mae.overall);
    Ok(())
}

/// Input blended half and half with a blue-to-red rendering of `attention`.
fn overlay(image: ArrayView2<f32>, attention: ArrayView2<f32>) -> [Array2<f32>; 3] {
    let mix = |color: fn(f32) -> f32| ndarray::Zip::from(image).and(attention).map_collect(|&i, &a| 0.5 * i + 0.5 * color(a));
    [mix(|a| a), mix(|_| 0.0), mix(|a| 1.0 - a)]
}

#[derive(Serialize)]
struct ScoreRow {
    id: String,
    scores: [f32; 5],
}

pub fn score(args: &ScoreArgs, mut manifest: RunManifest) -> Result<(), CliError> {
    let model = Model::load(&args.checkpoint)?;
    let pngs = list_pngs(&args.squares)?;
    if pngs.is_empty() {
        return Err(CliError::Data(format!("no PNG squares in {}", args.squares.display())));
    }
    create_dir(&args.out)?;

    let mut records = Vec::with_capacity(pngs.len());
    for chunk in pngs.chunks(SCORE_BATCH) {
        let images = chunk.iter().map(|(_, p)| load_png(p)).collect::<Result<Vec<_>, _>>()?;
        let views: Vec<ArrayView2<f32>> = images.iter().map(|i| i.view()).collect();
        let batch = stack_images(&views)?;
        let out = model.forward(&batch)?;
        for (i, (id, _)) in chunk.iter().enumerate() {
            let attrs = match args.arch {
                crate::ArchArg::Full => out.fusion_attrs.row(i).to_vec(),
                crate::ArchArg::Primary => out.primary_attrs.row(i).to_vec(),
            };
            let overall = match args.arch {
                crate::ArchArg::Full => out.fusion_overall[i],
                crate::ArchArg::Primary => out.primary_overall[i],
            };
            let s = [attrs[0], attrs[1], attrs[2], attrs[3], overall].map(|v| v.clamp(0.0, MAX_SCORE));
            records.push(LabelRecord { id: id.clone(), scores: ScoreVector::full(s) });

            for (slot, name) in ["cracking", "contamination"].iter().enumerate() {
                let att = out.attention[slot].index_axis(Axis(0), i);
                let [r, g, b] = overlay(views[i], att);
                let path = args.out.join(format!("{id}_{name}.png"));
                imageio::save_rgb(&path, [r.view(), g.view(), b.view()]).map_err(|source| CliError::Image { path, source })?;
            }
        }
    }
    let scores_path = args.out.join("scores.csv");
    write_labels(&scores_path, &records)?;
    let rows: Vec<ScoreRow> = records.iter().map(|r| ScoreRow { id: r.id.clone(), scores: r.scores.0.map(|v| v.unwrap_or(0.0)) }).collect();
    let json_path = args.out.join("scores.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&rows)?).map_err(CliError::io(json_path.display().to_string()))?;

    manifest.inputs = vec![args.checkpoint.clone(), args.squares.clone()];
    manifest.outputs = vec![scores_path, json_path];
    manifest.write(&args.out)?;
    println!("scored {} squares", records.len());
    Ok(())
}

pub fn eval(args: &EvalArgs, mut manifest: RunManifest) -> Result<(), CliError> {
    let model = Model::load(&args.checkpoint)?;
    let (examples, labels) = load_dataset(&args.data, args.labels.as_deref())?;
    let labeled: Vec<Example> = examples.into_iter().filter(|e| !e.scores.is_unlabeled()).collect();
    if labeled.is_empty() {
        return Err(CliError::Data(format!("{} has no labeled rows", labels.display())));
    }
    let architecture: Architecture = args.arch.into();
    let preds = predict(&model, &labeled, architecture, SCORE_BATCH)?;
    let truth: Vec<ScoreVector> = labeled.iter().map(|e| e.scores).collect();
    let report = mae_report(&preds, &truth)?;

    create_dir(&args.out)?;
    let path = args.out.join(run_files::MAE);
    std::fs::write(&path, serde_json::to_string_pretty(&report)?).map_err(CliError::io(path.display().to_string()))?;
    manifest.inputs = vec![args.checkpoint.clone(), args.data.clone(), labels];
    manifest.outputs = vec![path];
    manifest.write(&args.out)?;
    println!("overall MAE {:.4} over {} samples", report.overall, report.count);
    Ok(())
}
