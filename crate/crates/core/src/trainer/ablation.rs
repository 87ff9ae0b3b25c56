//! Ablation variants and the graph-operator sweep, trained with a shared
//! seed and data so rows are directly comparable.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kgstore::KnowledgeGraph;
use crate::lescmodel::{Ablation, GcnVariant};
use crate::scoring::{ClaimEncoderParams, EmbeddingTable};

use super::metrics::EvalReport;
use super::{train, CorpusSplit, TrainConfig, TrainedModel};

/// One comparison-table row (the serializable part of a run).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub report: EvalReport,
}

/// A full run: the row plus the trained model, kept so downstream analyses
/// (attention HSIC, bucket gaps) don't retrain.
pub struct AblationRun {
    pub variant: String,
    pub report: EvalReport,
    pub trained: TrainedModel,
}

impl AblationRun {
    pub fn row(&self) -> AblationRow {
        AblationRow {
            variant: self.variant.clone(),
            report: self.report.clone(),
        }
    }
}

fn run_one(
    kg: &KnowledgeGraph,
    emb: &EmbeddingTable,
    encoder: Option<&ClaimEncoderParams>,
    split: &CorpusSplit,
    cfg: &TrainConfig,
    name: String,
) -> Result<AblationRun> {
    let (trained, _) = train(kg, emb, encoder, &split.train, &split.valid, cfg)?;
    let report = trained.evaluate(kg, &split.test)?;
    Ok(AblationRun {
        variant: name,
        report,
        trained,
    })
}

/// Trains and evaluates each ablation variant with shared data and seed.
/// Runs are independent, so they execute in parallel; the output order is
/// the order of `variants`.
pub fn run_ablation(
    kg: &KnowledgeGraph,
    emb: &EmbeddingTable,
    encoder: Option<&ClaimEncoderParams>,
    split: &CorpusSplit,
    variants: &[Ablation],
    base: &TrainConfig,
) -> Result<Vec<AblationRun>> {
    variants
        .par_iter()
        .map(|&ablation| {
            let cfg = TrainConfig { ablation, ..base.clone() };
            run_one(kg, emb, encoder, split, &cfg, ablation.name().to_string())
        })
        .collect()
}

/// The graph-operator study: swaps the GCN operator among
/// {A, A², A+A², fully connected} with everything else shared.
pub fn run_graph_variants(
    kg: &KnowledgeGraph,
    emb: &EmbeddingTable,
    encoder: Option<&ClaimEncoderParams>,
    split: &CorpusSplit,
    variants: &[GcnVariant],
    base: &TrainConfig,
) -> Result<Vec<AblationRun>> {
    variants
        .par_iter()
        .map(|&gcn_variant| {
            let mut cfg = base.clone();
            cfg.shape.gcn_variant = gcn_variant;
            run_one(kg, emb, encoder, split, &cfg, gcn_variant.name().to_string())
        })
        .collect()
}
