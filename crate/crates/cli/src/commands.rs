use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use gglink_core::graph::{load_graph_remapped, load_graph_with, DirectedGraph, LoadOptions};
use gglink_core::harness::{export_properties, run_cv, write_properties_csv, CvOptions};
use gglink_core::report::pct2;
use gglink_core::sampling::{split_edges, EdgeSplit};
use gglink_core::training::{
    evaluate, train_with_observer, Checkpoint, DecoderChoice, TrainConfig,
};
use gglink_core::DecoderKind;

use crate::args::{CrossvalArgs, EvalArgs, HyperArgs, InputArgs, SplitArgs, TrainArgs};
use crate::manifest::{dir_files, ManifestBuilder};

/// Rejected command-line input that is not a library error.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let json = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, json).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn input_paths(input: &InputArgs) -> Vec<PathBuf> {
    std::iter::once(input.edges.clone())
        .chain(input.features.clone())
        .collect()
}

fn load_input(input: &InputArgs, out_dir: &Path) -> Result<DirectedGraph> {
    let features = input.features.as_deref();
    let graph = if input.remap_ids {
        let map_path = out_dir.join("id_map.csv");
        load_graph_remapped(&input.edges, features, &map_path, input.precision.into())?.0
    } else {
        let opts = LoadOptions {
            precision: input.precision.into(),
            ..LoadOptions::default()
        };
        load_graph_with(&input.edges, features, &opts)?
    };
    log::info!(
        "loaded {} nodes, {} edges, {} features",
        graph.num_nodes(),
        graph.num_edges(),
        if graph.features().is_identity() {
            "identity".to_string()
        } else {
            graph.feature_dim().to_string()
        }
    );
    Ok(graph)
}

/// Defaults, then the config file, then explicit flags.
pub fn resolve_config(hyper: &HyperArgs) -> Result<TrainConfig> {
    let mut cfg = match &hyper.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?
        }
        None => TrainConfig::default(),
    };
    hyper.apply(&mut cfg);
    cfg.validate()?;
    if cfg.decoder == DecoderChoice::Symmetric {
        log::warn!("the symmetric decoder is direction-blind: score(u, v) == score(v, u)");
    }
    Ok(cfg)
}

pub fn split(a: &SplitArgs) -> Result<()> {
    let manifest = ManifestBuilder::start("split", &input_paths(&a.input))?;
    create_dir(&a.out)?;
    let graph = load_input(&a.input, &a.out)?;
    let split = split_edges(&graph, a.val, a.test, a.seed)?;
    split.save(&a.out)?;
    let c = split.counts();
    log::info!(
        "split: {} train, {}+{} val, {}+{} test edges",
        c.train,
        c.val_pos,
        c.val_neg,
        c.test_pos,
        c.test_neg
    );
    manifest.finish(
        split.meta(),
        &dir_files(&a.out, &["manifest.json"])?,
        &a.out.join("manifest.json"),
    )
}

fn log_epochs(every: usize) -> impl FnMut(&gglink_core::training::EpochRecord) {
    move |r| {
        if every > 0 && r.epoch % every == 0 {
            log::info!(
                "epoch {:>4}: loss {:.6}, val AUC {:.2}, val AP {:.2}",
                r.epoch,
                r.train_loss,
                100.0 * r.val_auc,
                100.0 * r.val_ap
            );
        }
    }
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let cfg = resolve_config(&a.hyper)?;
    let mut inputs = dir_files(&a.split, &["manifest.json"])?;
    inputs.extend(a.hyper.config.clone());
    let manifest = ManifestBuilder::start("train", &inputs)?;
    let split = EdgeSplit::load(&a.split)?;
    create_dir(&a.out)?;

    let (params, report) = train_with_observer(&split, &cfg, &mut log_epochs(a.hyper.log_every))?;
    log::info!(
        "best epoch {} of {}; test AUC {:.2}, AP {:.2}",
        report.best_epoch,
        report.stopped_epoch,
        100.0 * report.test.auc,
        100.0 * report.test.ap
    );
    let ckpt_path = a.out.join("checkpoint.json");
    let report_path = a.out.join("report.json");
    Checkpoint::new(params, &cfg).save(&ckpt_path)?;
    fs::write(&report_path, report.to_json()? + "\n")
        .with_context(|| format!("writing {}", report_path.display()))?;
    manifest.finish(
        &cfg,
        &[ckpt_path, report_path],
        &a.out.join("manifest.json"),
    )
}

#[derive(Serialize)]
struct EvalOutput {
    decoder: DecoderKind,
    test_pos: usize,
    test_neg: usize,
    #[serde(serialize_with = "pct2")]
    auc: f64,
    #[serde(serialize_with = "pct2")]
    ap: f64,
    tie_seed: u64,
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    if let Some(choice) = a.decoder {
        let requested = TrainConfig {
            decoder: choice,
            ..TrainConfig::default()
        }
        .decoder_kind();
        if requested.name() != ckpt.decoder.name() {
            return Err(UsageError(format!(
                "checkpoint was trained with the {} decoder; refusing to score with {}",
                ckpt.decoder.name(),
                requested.name()
            ))
            .into());
        }
    }
    let split = EdgeSplit::load(&a.split)?;
    let ctx = ckpt.context(&split.train_graph)?;
    let m = evaluate(
        &ctx,
        &ckpt.params,
        ckpt.decoder,
        &split.test_pos,
        &split.test_neg,
        ckpt.tie_seed,
    )?;
    let out = EvalOutput {
        decoder: ckpt.decoder,
        test_pos: split.test_pos.len(),
        test_neg: split.test_neg.len(),
        auc: m.auc,
        ap: m.ap,
        tie_seed: ckpt.tie_seed,
    };
    match &a.out {
        Some(path) => write_json(path, &out),
        None => {
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(())
        }
    }
}

pub fn crossval(a: &CrossvalArgs) -> Result<()> {
    let cfg = resolve_config(&a.hyper)?;
    let mut inputs = input_paths(&a.input);
    inputs.extend(a.hyper.config.clone());
    let manifest = ManifestBuilder::start("crossval", &inputs)?;
    create_dir(&a.out)?;
    let graph = load_input(&a.input, &a.out)?;
    let dataset = a.dataset.clone().unwrap_or_else(|| {
        a.input
            .edges
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "graph".into())
    });
    let opts = CvOptions {
        folds: a.folds,
        base_seed: cfg.seed,
        val_frac: a.val,
        test_frac: a.test,
        dataset,
    };
    let experiment = run_cv(&graph, &cfg, &opts)?;
    println!("{}", experiment.summary());

    let exp_path = a.out.join("experiment.json");
    let props_path = a.out.join("properties.csv");
    fs::write(&exp_path, experiment.to_json()? + "\n")
        .with_context(|| format!("writing {}", exp_path.display()))?;
    let file = fs::File::create(&props_path)
        .with_context(|| format!("writing {}", props_path.display()))?;
    write_properties_csv(&export_properties(std::slice::from_ref(&experiment)), file)?;
    manifest.finish(&cfg, &[exp_path, props_path], &a.out.join("manifest.json"))
}
