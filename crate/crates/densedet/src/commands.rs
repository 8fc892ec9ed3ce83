//! Implementations behind the CLI subcommands. Each command is
//! deterministic given (config, seed) and writes a `config_echo.toml`
//! alongside its outputs.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::checkpoint::{load_checkpoint, parse_checkpoint, save_checkpoint};
use crate::config::RunConfig;
use crate::data::manifest::{load_manifest, write_manifest, Manifest, ManifestEntry};
use crate::data::format::{write_features, write_labels};
use crate::data::synthetic::{generate_synthetic, parse_spec, SyntheticSpec};
use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::gradsuite::{gradient_suite, GradcheckRow};
use crate::metrics::{evaluate, MetricsReport, VideoPredictions};
use crate::net::{CoarseWiring, Model, PositionalEncoding};
use crate::loss::LossVariant;
use crate::train::{infer_full_sequence, StepRecord, Trainer};

fn ensure_dir(dir: &Path) -> Result<()> {
    Ok(std::fs::create_dir_all(dir)?)
}

fn write_echo(out_dir: &Path, cfg: &RunConfig) -> Result<()> {
    Ok(std::fs::write(out_dir.join("config_echo.toml"), cfg.to_toml())?)
}

/// Resolves the configured manifest path relative to the config file's
/// directory.
pub fn resolve_manifest(cfg: &RunConfig, config_dir: &Path) -> Result<PathBuf> {
    let rel = cfg
        .data
        .manifest
        .as_ref()
        .ok_or_else(|| Error::Config("the [data] section names no manifest".into()))?;
    Ok(config_dir.join(rel))
}

fn check_dataset_matches(cfg: &RunConfig, dataset: &Dataset) -> Result<()> {
    if dataset.videos.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }
    if dataset.d != cfg.network.d_in {
        return Err(Error::Config(format!(
            "dataset feature dim {} does not match configured d_in {}",
            dataset.d, cfg.network.d_in
        )));
    }
    if dataset.c != cfg.network.classes {
        return Err(Error::Config(format!(
            "dataset has {} classes, configuration expects {}",
            dataset.c, cfg.network.classes
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct GenDataEcho<'a> {
    seed: u64,
    spec: &'a SyntheticSpec,
}

/// Generates a synthetic corpus into `out_dir` and returns the manifest path.
pub fn cmd_gen_data(spec_path: &Path, out_dir: &Path, seed: u64) -> Result<PathBuf> {
    let spec = parse_spec(&std::fs::read_to_string(spec_path)?)?;
    let corpus = generate_synthetic(&spec, seed)?;
    ensure_dir(out_dir)?;
    let mut entries = Vec::with_capacity(corpus.videos.len());
    for video in &corpus.videos {
        let feat_name = format!("{}.dadf", video.id);
        let label_name = format!("{}.dadl", video.id);
        write_features(&out_dir.join(&feat_name), &video.features)?;
        write_labels(&out_dir.join(&label_name), &video.labels)?;
        entries.push(ManifestEntry {
            id: video.id.clone(),
            features: feat_name,
            labels: label_name,
            split: video.split,
        });
    }
    let manifest_path = out_dir.join("manifest.toml");
    write_manifest(&manifest_path, &Manifest { version: 1, videos: entries })?;
    let echo = toml::to_string_pretty(&GenDataEcho { seed, spec: &spec })
        .map_err(|e| Error::Config(format!("echo serialization: {e}")))?;
    std::fs::write(out_dir.join("config_echo.toml"), echo)?;
    Ok(manifest_path)
}

pub struct TrainOutputs {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub steps: usize,
    pub final_core_loss: f64,
    pub resumed: bool,
}

/// Trains per the run configuration. An existing checkpoint in `out_dir`
/// continues training when its embedded network configuration matches, and
/// is refused otherwise.
pub fn cmd_train(cfg: &RunConfig, config_dir: &Path, out_dir: &Path) -> Result<TrainOutputs> {
    let dataset = load_manifest(&resolve_manifest(cfg, config_dir)?)?;
    check_dataset_matches(cfg, &dataset)?;
    ensure_dir(out_dir)?;

    let ckpt_path = out_dir.join("checkpoint.dadc");
    let mut resumed = false;
    let model = if ckpt_path.exists() {
        let bytes = std::fs::read(&ckpt_path)?;
        let (stored_cfg, _) = parse_checkpoint(&bytes)?;
        if stored_cfg != cfg.network {
            return Err(Error::Config(
                "existing checkpoint was trained with a different network configuration; \
                 refusing to resume (use a fresh --out directory)"
                    .into(),
            ));
        }
        resumed = true;
        load_checkpoint(&ckpt_path)?
    } else {
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.train.seed);
        Model::new(cfg.network.clone(), &mut rng)?
    };

    let mut trainer = Trainer::new(model, cfg.train.clone(), cfg.loss.clone())?;
    let log_path = out_dir.join("train_log.jsonl");
    let mut log = std::io::BufWriter::new(std::fs::File::create(&log_path)?);
    let mut write_record = |record: &StepRecord| {
        let line = serde_json::to_string(record).expect("record serialization");
        let _ = writeln!(log, "{line}");
    };
    let records = trainer.run(&dataset, &mut write_record)?;
    drop(log);

    save_checkpoint(&ckpt_path, &trainer.model)?;
    write_echo(out_dir, cfg)?;
    Ok(TrainOutputs {
        checkpoint: ckpt_path,
        log: log_path,
        steps: records.len(),
        final_core_loss: records.last().map(|r| r.core_loss).unwrap_or(f64::NAN),
        resumed,
    })
}

/// Full-sequence inference over one split, pooled into a metrics report.
pub fn evaluate_split(
    model: &Model<f32>,
    dataset: &Dataset,
    split: Split,
    taus: &[usize],
    threshold: f64,
) -> Result<MetricsReport> {
    let mut videos = Vec::new();
    for video in dataset.split(split) {
        let scores = infer_full_sequence(model, &video.features)?;
        videos.push(VideoPredictions::new(
            video.features.t,
            model.cfg.classes,
            scores.into_iter().map(f64::from).collect(),
            video.labels.data.clone(),
        )?);
    }
    if videos.is_empty() {
        return Err(Error::Metrics(format!("no videos in the {split:?} split")));
    }
    evaluate(&videos, taus, threshold)
}

/// Evaluates a checkpoint and writes text + JSON reports.
pub fn cmd_eval(
    cfg: &RunConfig,
    config_dir: &Path,
    checkpoint: &Path,
    manifest_override: Option<&Path>,
    split: Split,
    out_dir: &Path,
) -> Result<MetricsReport> {
    let model = load_checkpoint(checkpoint)?;
    let manifest_path = match manifest_override {
        Some(p) => p.to_path_buf(),
        None => resolve_manifest(cfg, config_dir)?,
    };
    let dataset = load_manifest(&manifest_path)?;
    if dataset.d != model.cfg.d_in || dataset.c != model.cfg.classes {
        return Err(Error::Config(format!(
            "dataset ({}, {}) does not match the checkpoint's network ({}, {})",
            dataset.d, dataset.c, model.cfg.d_in, model.cfg.classes
        )));
    }
    let report = evaluate_split(&model, &dataset, split, &cfg.eval.taus, cfg.eval.threshold)?;
    ensure_dir(out_dir)?;
    std::fs::write(out_dir.join("metrics.txt"), report.render_text())?;
    std::fs::write(out_dir.join("metrics.json"), report.to_json())?;
    write_echo(out_dir, cfg)?;
    Ok(report)
}

/// Runs the gradient suite with the configured structural switches.
pub fn cmd_gradcheck(cfg: &RunConfig, seed: u64) -> Result<Vec<GradcheckRow>> {
    gradient_suite(&cfg.network, seed)
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub held_out_map: f64,
    pub train_map: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationTable {
    pub axis: String,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn render_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "ablation axis: {}", self.axis);
        let _ = writeln!(out, "{:<28} {:>12} {:>12} {:>8}", "variant", "held_out_mAP", "train_mAP", "steps");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<28} {:>12.4} {:>12.4} {:>8}",
                r.variant, r.held_out_map, r.train_map, r.steps
            );
        }
        out
    }
}

/// Variants for one ablation axis, as deltas on a base configuration.
pub fn ablation_variants(cfg: &RunConfig, axis: &str) -> Result<Vec<(String, RunConfig)>> {
    let mut variants = Vec::new();
    match axis {
        "branches" => {
            for f in 1..=4usize {
                let mut v = cfg.clone();
                v.network.branches = f;
                variants.push((format!("F={f}"), v));
            }
        }
        "modules" => {
            for (fine, coarse) in [(true, true), (true, false), (false, true), (false, false)] {
                let mut v = cfg.clone();
                v.network.fine_enabled = fine;
                v.network.coarse_enabled = coarse;
                if !fine && !coarse {
                    // raw-token probe: the classifier reads d_in features, so
                    // the assistant copy has no matching shape
                    v.network.assistant_enabled = false;
                }
                variants.push((format!("fine={fine} coarse={coarse}"), v));
            }
        }
        "structure" => {
            for (name, wiring) in [
                ("non_hierarchical", CoarseWiring::NonHierarchical),
                ("hierarchical", CoarseWiring::Hierarchical),
            ] {
                let mut v = cfg.clone();
                v.network.coarse_wiring = wiring;
                variants.push((name.to_string(), v));
            }
        }
        "assistant" => {
            for enabled in [true, false] {
                let mut v = cfg.clone();
                v.network.assistant_enabled = enabled;
                variants.push((format!("assistant={enabled}"), v));
            }
        }
        "positional" => {
            for (name, mode) in [
                ("none", PositionalEncoding::None),
                ("absolute", PositionalEncoding::Absolute),
                ("relative", PositionalEncoding::Relative),
            ] {
                let mut v = cfg.clone();
                v.network.positional = mode;
                variants.push((name.to_string(), v));
            }
        }
        "loss" => {
            for (name, variant) in
                [("asymmetric", LossVariant::Asymmetric), ("bce", LossVariant::Bce)]
            {
                let mut v = cfg.clone();
                v.loss.variant = variant;
                variants.push((name.to_string(), v));
            }
        }
        other => {
            return Err(Error::Config(format!(
                "unknown ablation axis `{other}` (expected branches, modules, structure, \
                 assistant, positional, or loss)"
            )))
        }
    }
    for (_, v) in &variants {
        v.validate()?;
    }
    Ok(variants)
}

/// Trains one configuration from scratch and reports train/test mAP.
pub fn train_and_score(cfg: &RunConfig, dataset: &Dataset) -> Result<(f64, f64, usize)> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.train.seed);
    let model = Model::new(cfg.network.clone(), &mut rng)?;
    let mut trainer = Trainer::new(model, cfg.train.clone(), cfg.loss.clone())?;
    let records = trainer.run(dataset, |_| {})?;
    let train =
        evaluate_split(&trainer.model, dataset, Split::Train, &[], cfg.eval.threshold)?;
    let test = evaluate_split(&trainer.model, dataset, Split::Test, &[], cfg.eval.threshold)?;
    Ok((train.per_frame_map, test.per_frame_map, records.len()))
}

/// Runs every variant of an axis sequentially on the same dataset and seed.
pub fn cmd_ablate(cfg: &RunConfig, config_dir: &Path, axis: &str, out_dir: &Path) -> Result<AblationTable> {
    let dataset = load_manifest(&resolve_manifest(cfg, config_dir)?)?;
    check_dataset_matches(cfg, &dataset)?;
    let variants = ablation_variants(cfg, axis)?;
    let mut rows = Vec::new();
    for (name, variant) in variants {
        let (train_map, held_out_map, steps) = train_and_score(&variant, &dataset)?;
        rows.push(AblationRow { variant: name, held_out_map, train_map, steps });
    }
    let table = AblationTable { axis: axis.to_string(), rows };
    ensure_dir(out_dir)?;
    std::fs::write(out_dir.join(format!("ablation_{axis}.txt")), table.render_text())?;
    std::fs::write(
        out_dir.join(format!("ablation_{axis}.json")),
        serde_json::to_string_pretty(&table).expect("table serialization"),
    )?;
    write_echo(out_dir, cfg)?;
    Ok(table)
}
