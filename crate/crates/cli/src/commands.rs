use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use gaitworks_core::classifier::{
    cross_dataset_eval, cross_validate, evaluate, file_size, load_model, make_folds, predict_batch, save_model,
    split_by_subject, train, GaitModel, ModelConfig, Network, Sample, TrainConfig, PROTOCOL_SUBJECTS,
};
use gaitworks_core::explain::{
    feature_map, feature_map_png, grad_cam, gray_png, last_conv_block, overlay_png, saliency, DEFAULT_OVERLAY_ALPHA,
};
use gaitworks_core::gait_repr::{
    cycle_energy, cycle_records, energy_file, load_pose, load_samples, mask_file, resample_grid,
    sequence_energy_image, CycleRecord, EnergyImage, EnergyKind, PipelineInput, SilhouetteSequence, ENERGY_SIZE,
};
use gaitworks_core::silhouette::{segment_sequence, BinaryMask, ColorFrame};
use gaitworks_core::synthkit::{generate_dataset, DatasetOptions};
use gaitworks_core::{GaitClass, Representation};
use gaitworks_service::ingest::frame_key;

use crate::args::*;
use crate::error::{CliError, Result};

/// What a subcommand produced: a JSON document and its human rendering.
pub struct Report {
    pub json: Value,
    pub text: String,
}

impl Report {
    fn new(json: Value, text: impl Into<String>) -> Self {
        Self { json, text: text.into() }
    }
}

/// Numbered `.ext` files of a directory in frame order. When some of them start
/// with `prefix`, only those are taken, so a dataset sequence directory holding
/// frames, masks and poses side by side can be used directly.
fn files_with_ext(dir: &Path, ext: &str, prefix: &str) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .flatten()
        .map(|e| e.path())
        .filter(|p| {
            p.is_file()
                && p.extension().is_some_and(|x| x.eq_ignore_ascii_case(ext))
                && !p.file_stem().is_some_and(|s| s.eq_ignore_ascii_case("background"))
        })
        .collect();
    let name = |p: &PathBuf| p.file_name().unwrap_or_default().to_string_lossy().into_owned();
    if files.iter().any(|p| name(p).starts_with(prefix)) {
        files.retain(|p| name(p).starts_with(prefix));
    }
    files.sort_by_cached_key(|p| frame_key(&p.file_name().unwrap_or_default().to_string_lossy()));
    if files.is_empty() {
        return Err(CliError::data(format!("{} holds no .{ext} files", dir.display())));
    }
    Ok(files)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn positive_fps(fps: f64) -> Result<f64> {
    if fps > 0.0 && fps.is_finite() {
        Ok(fps)
    } else {
        Err(CliError::usage(format!("--fps must be positive, got {fps}")))
    }
}

pub fn segment(a: &SegmentArgs) -> Result<Report> {
    let files = files_with_ext(&a.frames, "png", "frame_")?;
    let frames = files
        .iter()
        .enumerate()
        .map(|(i, p)| ColorFrame::load(p, i).map_err(|e| CliError::at(p, e)))
        .collect::<Result<Vec<_>>>()?;
    let background = a
        .background
        .as_ref()
        .map(|p| ColorFrame::load(p, 0).map_err(|e| CliError::at(p, e)))
        .transpose()?;
    let masks = segment_sequence(&frames, background.as_ref())?;
    create_dir(&a.out)?;
    let mut empty = 0;
    for (i, m) in masks.iter().enumerate() {
        m.save(a.out.join(mask_file(i)))?;
        empty += usize::from(m.is_empty());
    }
    Ok(Report::new(
        json!({ "frames": frames.len(), "empty_masks": empty, "out": a.out }),
        format!("wrote {} masks to {} ({empty} empty)", masks.len(), a.out.display()),
    ))
}

fn load_masks(dir: &Path, fps: f64) -> Result<SilhouetteSequence> {
    let masks = files_with_ext(dir, "png", "mask_")?
        .iter()
        .map(|p| BinaryMask::load(p).map_err(|e| CliError::at(p, e)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SilhouetteSequence::new(masks, positive_fps(fps)?, None)?)
}

#[derive(Serialize, serde::Deserialize)]
struct CycleFile {
    fps: f64,
    frames: usize,
    cycles: Vec<CycleRecord>,
}

fn cycle_text(cycles: &[CycleRecord]) -> String {
    let mut s = format!("{} complete cycle(s)\n", cycles.len());
    for c in cycles {
        let _ = writeln!(s, "  cycle {}: frames {}..={} ({} kept)", c.index, c.start_frame, c.end_frame, c.frames.len());
    }
    s.trim_end().to_string()
}

pub fn cycles(a: &CyclesArgs) -> Result<Report> {
    let seq = load_masks(&a.masks, a.fps)?;
    let file = CycleFile {
        fps: a.fps,
        frames: seq.len(),
        cycles: cycle_records(&seq)?,
    };
    if let Some(out) = &a.out {
        write_json(out, &file)?;
    }
    let text = cycle_text(&file.cycles);
    Ok(Report::new(serde_json::to_value(&file)?, text))
}

fn energy_images(input: &PipelineInput, source: &CycleSource) -> Result<Vec<EnergyImage>> {
    if source.whole_sequence {
        return Ok(vec![sequence_energy_image(input)?]);
    }
    let records = match &source.cycles {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            serde_json::from_str::<CycleFile>(&text)
                .map_err(|e| CliError::at(path, e.into()))?
                .cycles
        }
        None => cycle_records(&input.masks)?,
    };
    if records.is_empty() {
        return Err(CliError::data("no complete gait cycle found"));
    }
    Ok(records
        .iter()
        .map(|r| cycle_energy(input, r))
        .collect::<std::result::Result<Vec<_>, _>>()?)
}

fn write_energy(images: &[EnergyImage], kind: EnergyKind, out: &Path) -> Result<Report> {
    create_dir(out)?;
    let mut written = Vec::new();
    for (i, img) in images.iter().enumerate() {
        let path = out.join(energy_file(kind, i));
        img.save(&path)?;
        written.push(json!({ "path": path, "provenance": img.provenance }));
    }
    Ok(Report::new(
        json!({ "kind": kind, "images": written }),
        format!("wrote {} {kind:?} image(s) to {}", images.len(), out.display()).to_lowercase(),
    ))
}

pub fn gei(a: &GeiArgs) -> Result<Report> {
    let input = PipelineInput::silhouettes(load_masks(&a.masks, a.source.fps)?);
    write_energy(&energy_images(&input, &a.source)?, EnergyKind::Gei, &a.out)
}

pub fn sei(a: &SeiArgs) -> Result<Report> {
    let poses = files_with_ext(&a.poses, "json", "pose_")?
        .iter()
        .map(|p| load_pose(p).map_err(|e| CliError::at(p, e)))
        .collect::<Result<Vec<_>>>()?;
    if a.width == 0 || a.height == 0 {
        return Err(CliError::usage("--width and --height must be positive"));
    }
    let input = PipelineInput::poses(&poses, a.width, a.height, positive_fps(a.source.fps)?, None)?;
    write_energy(&energy_images(&input, &a.source)?, EnergyKind::Sei, &a.out)
}

pub fn synth(a: &SynthArgs, seed: u64) -> Result<Report> {
    let opts = DatasetOptions {
        n_subjects: a.subjects,
        seqs_per_class: a.seqs_per_class,
        seed,
        fps: a.fps,
        cycles_per_sequence: a.cycles,
        jitter: a.jitter,
        noise_sigma: a.noise,
        write_frames: a.frames,
        write_energy: a.energy,
        first_subject: a.first_subject,
        ..DatasetOptions::default()
    };
    let (manifest, _) = generate_dataset(&a.out, &opts)?;
    Ok(Report::new(
        json!({ "out": a.out, "sequences": manifest.sequences.len(), "subjects": manifest.subjects() }),
        format!(
            "wrote {} sequences of {} subjects to {}",
            manifest.sequences.len(),
            manifest.subjects().len(),
            a.out.display()
        ),
    ))
}

fn resize_samples(samples: &mut [Sample], side: usize) {
    if side != ENERGY_SIZE {
        for s in samples {
            s.pixels = resample_grid(&s.pixels, ENERGY_SIZE, ENERGY_SIZE, side, side);
        }
    }
}

fn dataset_samples(dir: &Path, t: &TrainingOptions) -> Result<Vec<Sample>> {
    let rep: Representation = t.representation.into();
    let mut samples = load_samples(dir, rep.into())?;
    resize_samples(&mut samples, t.input_size);
    Ok(samples)
}

fn model_config(t: &TrainingOptions) -> Result<ModelConfig> {
    if t.input_size < 32 || t.input_size > ENERGY_SIZE {
        return Err(CliError::usage(format!(
            "--input-size must lie in 32..={ENERGY_SIZE}, got {}",
            t.input_size
        )));
    }
    let c = ModelConfig::with_input(t.input_size, t.input_size);
    c.shapes()?;
    Ok(c)
}

fn train_config(t: &TrainingOptions, seed: u64) -> Result<TrainConfig> {
    let c = TrainConfig {
        learning_rate: t.learning_rate,
        batch_size: t.batch_size,
        max_epochs: t.epochs,
        patience: t.patience,
        min_delta: t.min_delta,
        seed,
        ..TrainConfig::default()
    };
    c.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(c)
}

pub fn train_cmd(a: &TrainArgs, seed: u64) -> Result<Report> {
    let model_cfg = model_config(&a.training)?;
    let cfg = train_config(&a.training, seed)?;
    let samples = dataset_samples(&a.dataset, &a.training)?;
    let (train_set, test_set) = split_by_subject(&samples, &a.holdout)?;
    if !a.holdout.is_empty() && test_set.is_empty() {
        return Err(CliError::data(format!("no samples for held-out subjects {:?}", a.holdout)));
    }
    let mut net = Network::build(model_cfg, seed)?;
    let report = train(&mut net, &train_set, &cfg)?;
    let model = GaitModel::new(a.training.representation.into(), net);
    save_model(&model, &a.out)?;
    if let Some(h) = &a.history {
        let mut csv = String::from("epoch,loss,accuracy\n");
        for e in &report.history {
            let _ = writeln!(csv, "{},{},{}", e.epoch, e.loss, e.accuracy);
        }
        write_bytes(h, csv.as_bytes())?;
    }
    let last = report.history.last().copied();
    let held_out = if test_set.is_empty() {
        None
    } else {
        Some(evaluate(&model.network, &test_set)?)
    };
    let mut text = format!(
        "trained {} epochs on {} samples: loss {:.4}, train accuracy {:.3}\nmodel written to {}",
        report.history.len(),
        train_set.len(),
        last.map_or(f64::NAN, |e| e.loss),
        last.map_or(f64::NAN, |e| e.accuracy),
        a.out.display()
    );
    if let Some(ev) = &held_out {
        let _ = write!(text, "\nheld-out accuracy {:.3} on {} samples", ev.metrics.accuracy, test_set.len());
    }
    Ok(Report::new(
        json!({
            "model": a.out,
            "train_samples": train_set.len(),
            "epochs": report.history.len(),
            "stopped_early": report.stopped_early,
            "final": last,
            "held_out": held_out.map(|e| json!({ "samples": test_set.len(), "metrics": e.metrics })),
        }),
        text,
    ))
}

pub fn crossval(a: &CrossvalArgs, seed: u64) -> Result<Report> {
    let plan = make_folds(PROTOCOL_SUBJECTS)?;
    if a.folds_only {
        let mut text = String::new();
        for (k, f) in plan.folds.iter().enumerate() {
            let _ = writeln!(text, "fold {:>2}: S{} S{} S{}", k + 1, f[0], f[1], f[2]);
        }
        return Ok(Report::new(json!({ "folds": plan.folds }), text.trim_end()));
    }
    let dataset = a.dataset.as_ref().expect("clap requires --dataset");
    let model_cfg = model_config(&a.training)?;
    let cfg = train_config(&a.training, seed)?;
    let samples = dataset_samples(dataset, &a.training)?;
    let report = cross_validate(&samples, &model_cfg, &cfg, &plan)?;
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    let mut text = String::new();
    for f in &report.folds {
        let _ = writeln!(
            text,
            "fold {:>2} (test {:?}): accuracy {:.3} on {} samples",
            f.fold, f.test_subjects, f.metrics.accuracy, f.test_samples
        );
    }
    let _ = write!(text, "mean accuracy {:.3}", report.mean_accuracy);
    Ok(Report::new(serde_json::to_value(&report)?, text))
}

pub fn crossdataset(a: &CrossdatasetArgs, seed: u64) -> Result<Report> {
    let model_cfg = model_config(&a.training)?;
    let cfg = train_config(&a.training, seed)?;
    let train_set = dataset_samples(&a.train, &a.training)?;
    let test_set = dataset_samples(&a.test, &a.training)?;
    let (net, report) = cross_dataset_eval(&train_set, &test_set, &model_cfg, &cfg, a.dedupe_repeats)?;
    if let Some(path) = &a.model_out {
        save_model(&GaitModel::new(a.training.representation.into(), net), path)?;
    }
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    let text = format!(
        "trained on {} samples, tested on {}: accuracy {:.3}",
        report.train_samples, report.test_samples, report.metrics.accuracy
    );
    Ok(Report::new(serde_json::to_value(&report)?, text))
}

fn open_model(path: &Path) -> Result<GaitModel> {
    load_model(path).map_err(|e| CliError::at(path, e))
}

fn open_energy(path: &Path, model: &GaitModel) -> Result<EnergyImage> {
    EnergyImage::load(model.representation.into(), path).map_err(|e| CliError::at(path, e))
}

pub fn predict(a: &PredictArgs) -> Result<Report> {
    let model = open_model(&a.model)?;
    let images = a
        .images
        .iter()
        .map(|p| open_energy(p, &model))
        .collect::<Result<Vec<_>>>()?;
    let pixels: Vec<Vec<f32>> = images
        .iter()
        .map(|e| gaitworks_service::model_pixels(&model, e))
        .collect();
    let refs: Vec<&[f32]> = pixels.iter().map(Vec::as_slice).collect();
    let preds = predict_batch(&model.network, &refs)?;
    let mut text = String::new();
    let list: Vec<Value> = a
        .images
        .iter()
        .zip(&preds)
        .map(|(path, p)| {
            let _ = writeln!(text, "{}: {} ({:.1}%)", path.display(), p.label, 100.0 * p.probabilities[p.label.index()]);
            json!({
                "image": path,
                "label": p.label.to_string(),
                "probabilities": p.probabilities,
            })
        })
        .collect();
    Ok(Report::new(
        json!({ "class_names": GaitClass::names(), "predictions": list }),
        text.trim_end(),
    ))
}

pub fn explain(a: &ExplainArgs) -> Result<Report> {
    let model = open_model(&a.model)?;
    let energy = open_energy(&a.image, &model)?;
    let pixels = gaitworks_service::model_pixels(&model, &energy);
    let net = &model.network;
    let blocks = net.conv_blocks();
    if let Some(l) = a.layer.filter(|&l| l >= blocks.len()) {
        return Err(CliError::usage(format!("--layer {l} out of range 0..{}", blocks.len())));
    }
    let heat = match a.method {
        ExplainMethod::Saliency => saliency(net, &pixels, a.target_class)?,
        ExplainMethod::Gradcam => {
            let block = match a.layer {
                Some(l) => l,
                None => last_conv_block(net)?,
            };
            grad_cam(net, &pixels, block, a.target_class)?
        }
    };
    let heat = if heat.width == ENERGY_SIZE {
        heat
    } else {
        gaitworks_core::explain::HeatMap {
            values: resample_grid(&heat.values, heat.width, heat.height, ENERGY_SIZE, ENERGY_SIZE),
            width: ENERGY_SIZE,
            height: ENERGY_SIZE,
            ..heat
        }
    };
    create_dir(&a.out)?;
    let overlay_path = a.out.join("overlay.png");
    let heatmap_path = a.out.join("heatmap.png");
    write_bytes(&overlay_path, &overlay_png(energy.data(), &heat, DEFAULT_OVERLAY_ALPHA)?)?;
    write_bytes(&heatmap_path, &gray_png(&heat.values, heat.width, heat.height)?)?;
    let mut fm_path = None;
    if let Some((layer, channel)) = a.feature_map {
        let block = blocks
            .get(layer)
            .ok_or_else(|| CliError::usage(format!("feature-map layer {layer} out of range 0..{}", blocks.len())))?;
        if channel >= block.channels {
            return Err(CliError::usage(format!(
                "feature-map channel {channel} out of range 0..{}",
                block.channels
            )));
        }
        let map = feature_map(net, &pixels, layer, channel)?;
        let p = a.out.join(format!("feature_map_{layer}_{channel}.png"));
        write_bytes(&p, &feature_map_png(&map)?)?;
        fm_path = Some(p);
    }
    let class = GaitClass::names()[heat.target_class];
    Ok(Report::new(
        json!({
            "method": heat.method,
            "layer": heat.source_layer,
            "target_class": heat.target_class,
            "target_class_name": class,
            "lower_half_mass": heat.lower_half_mass(),
            "overlay": overlay_path,
            "heatmap": heatmap_path,
            "feature_map": fm_path,
        }),
        format!(
            "{:?} for class {class}: lower-half mass {:.3}; wrote {}",
            heat.method,
            heat.lower_half_mass(),
            overlay_path.display()
        )
        .to_lowercase(),
    ))
}

pub fn model_info(a: &ModelInfoArgs, seed: u64) -> Result<Report> {
    let model = match &a.model {
        Some(p) => open_model(p)?,
        None => GaitModel::new(Representation::Gei, Network::build(ModelConfig::default(), seed)?),
    };
    let net = &model.network;
    let table = net.config().parameter_table()?;
    let bytes = file_size(&model)?;
    let mut text = format!(
        "{:<5} {:<10} {:<16} {:>12} {:>8}\n",
        "layer", "kind", "output", "learnable", "running"
    );
    for l in &table {
        let _ = writeln!(
            text,
            "{:<5} {:<10} {:<16} {:>12} {:>8}",
            l.index,
            format!("{:?}", l.kind),
            format!("{:?}", l.output_shape),
            l.learnable,
            l.running
        );
    }
    let _ = write!(
        text,
        "total parameters {} ({} learnable + {} running statistics)\nfile size {} bytes ({:.2} MB)",
        net.parameter_count(),
        net.learnable_count(),
        net.running_stat_count(),
        bytes,
        bytes as f64 / 1e6
    );
    Ok(Report::new(
        json!({
            "representation": model.representation,
            "input_shape": net.config().input_shape,
            "total_parameters": net.parameter_count(),
            "learnable_parameters": net.learnable_count(),
            "running_statistics": net.running_stat_count(),
            "file_size_bytes": bytes,
            "file_size_mb": bytes as f64 / 1e6,
            "layers": table,
        }),
        text,
    ))
}

pub fn serve(a: &ServeArgs) -> Result<Report> {
    let mut config = gaitworks_service::Config::from_env()?;
    if let Some(p) = a.port {
        config.port = p;
    }
    if let Some(h) = a.host {
        config.host = h;
    }
    if a.model_gei.is_some() {
        config.model_gei = a.model_gei.clone();
    }
    if a.model_sei.is_some() {
        config.model_sei = a.model_sei.clone();
    }
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::internal(format!("async runtime: {e}")))?;
    runtime.block_on(gaitworks_service::serve(config))?;
    Ok(Report::new(json!({ "status": "stopped" }), "server stopped"))
}
