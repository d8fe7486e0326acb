//! Resampled cross-validation and the per-experiment property table.

use std::io::Write;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::metrics::{fold_stats, format_pct, FoldStats};
use crate::report::{pct2, round_to};
use crate::sampling::{split_edges, SplitCounts, DEFAULT_TEST_FRAC, DEFAULT_VAL_FRAC};
use crate::training::{train, TrainConfig, TrainReport};

pub const EXPERIMENT_FORMAT_VERSION: u32 = 1;

pub const PROPERTIES_HEADER: [&str; 9] = [
    "dataset", "nodes", "edges", "features", "model", "auc_mean", "auc_std", "ap_mean", "ap_std",
];

#[derive(Debug, Clone, PartialEq)]
pub struct CvOptions {
    pub folds: usize,
    pub base_seed: u64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub dataset: String,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            folds: 5,
            base_seed: 0,
            val_frac: DEFAULT_VAL_FRAC,
            test_frac: DEFAULT_TEST_FRAC,
            dataset: "graph".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldResult {
    pub fold: usize,
    pub seed: u64,
    pub counts: SplitCounts,
    pub report: TrainReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Experiment {
    pub format_version: u32,
    pub dataset: String,
    pub model: String,
    pub num_nodes: usize,
    pub num_edges: usize,
    /// Attribute columns; 0 for graphs that fall back to identity features.
    pub num_features: usize,
    pub config: TrainConfig,
    pub val_frac: f64,
    pub test_frac: f64,
    pub base_seed: u64,
    pub fold_seeds: Vec<u64>,
    pub folds: Vec<FoldResult>,
    #[serde(serialize_with = "pct_stats")]
    pub auc: FoldStats,
    #[serde(serialize_with = "pct_stats")]
    pub ap: FoldStats,
}

fn pct_stats<S: Serializer>(stats: &FoldStats, s: S) -> std::result::Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct Pct {
        #[serde(serialize_with = "pct2")]
        mean: f64,
        #[serde(serialize_with = "pct2")]
        std: f64,
        count: usize,
        degenerate: bool,
        display: String,
    }
    Pct {
        mean: stats.mean,
        std: stats.std,
        count: stats.count,
        degenerate: stats.degenerate,
        display: format_pct(stats),
    }
    .serialize(s)
}

impl Experiment {
    pub fn test_aucs(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.report.test.auc).collect()
    }

    pub fn test_aps(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.report.test.ap).collect()
    }

    /// `AUC mean ± std, AP mean ± std` in percent.
    pub fn summary(&self) -> String {
        format!("AUC {}, AP {}", format_pct(&self.auc), format_pct(&self.ap))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::format("experiment", e))
    }
}

/// Identifier such as `sage-gravity`.
pub fn model_id(cfg: &TrainConfig) -> String {
    format!("{}-{}", cfg.encoder, cfg.decoder_kind().name())
}

/// Fold `i` splits and trains with seed `base_seed + i`; every fold draws an
/// independent split, so test sets of different folds may overlap.
pub fn run_cv(g: &DirectedGraph, cfg: &TrainConfig, opts: &CvOptions) -> Result<Experiment> {
    if opts.folds == 0 {
        return Err(Error::invalid("folds must be at least 1"));
    }
    cfg.validate()?;
    let fold_seeds: Vec<u64> = (0..opts.folds as u64)
        .map(|i| opts.base_seed.wrapping_add(i))
        .collect();
    let folds = fold_seeds
        .par_iter()
        .enumerate()
        .map(|(fold, &seed)| {
            let split = split_edges(g, opts.val_frac, opts.test_frac, seed)?;
            let fold_cfg = TrainConfig {
                seed,
                ..cfg.clone()
            };
            let (_, report) = train(&split, &fold_cfg)?;
            log::info!(
                "fold {} (seed {seed}): test AUC {:.2}, AP {:.2}",
                fold + 1,
                100.0 * report.test.auc,
                100.0 * report.test.ap
            );
            Ok(FoldResult {
                fold,
                seed,
                counts: split.counts(),
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let aucs: Vec<f64> = folds.iter().map(|f| f.report.test.auc).collect();
    let aps: Vec<f64> = folds.iter().map(|f| f.report.test.ap).collect();
    Ok(Experiment {
        format_version: EXPERIMENT_FORMAT_VERSION,
        dataset: opts.dataset.clone(),
        model: model_id(cfg),
        num_nodes: g.num_nodes(),
        num_edges: g.num_edges(),
        num_features: if g.features().is_identity() {
            0
        } else {
            g.feature_dim()
        },
        config: TrainConfig {
            seed: opts.base_seed,
            ..cfg.clone()
        },
        val_frac: opts.val_frac,
        test_frac: opts.test_frac,
        base_seed: opts.base_seed,
        fold_seeds,
        folds,
        auc: fold_stats(&aucs)?,
        ap: fold_stats(&aps)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyRow {
    pub dataset: String,
    pub nodes: usize,
    pub edges: usize,
    pub features: usize,
    pub model: String,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub ap_mean: f64,
    pub ap_std: f64,
}

impl PropertyRow {
    /// Metrics in percent, rounded to two decimals.
    pub fn from_experiment(e: &Experiment) -> Self {
        let pct = |x: f64| round_to(100.0 * x, 2);
        PropertyRow {
            dataset: e.dataset.clone(),
            nodes: e.num_nodes,
            edges: e.num_edges,
            features: e.num_features,
            model: e.model.clone(),
            auc_mean: pct(e.auc.mean),
            auc_std: pct(e.auc.std),
            ap_mean: pct(e.ap.mean),
            ap_std: pct(e.ap.std),
        }
    }
}

pub fn export_properties(experiments: &[Experiment]) -> Vec<PropertyRow> {
    experiments
        .iter()
        .map(PropertyRow::from_experiment)
        .collect()
}

/// Writes the rows as CSV; the header is always present.
pub fn write_properties_csv<W: Write>(rows: &[PropertyRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    let csv_err = |e: csv::Error| Error::format("properties table", e);
    w.write_record(PROPERTIES_HEADER).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::format("properties table", e))
}
