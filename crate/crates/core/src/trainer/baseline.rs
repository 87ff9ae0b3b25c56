//! Min-aggregation TransE baseline: each claim is scored individually by a
//! TransE model trained on the knowledge graph, and the statement score is
//! the minimum (or mean) of its claim scores.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::claimgen::Statement;
use crate::error::{LescError, Result};
use crate::kgstore::{KnowledgeGraph, Triple};
use crate::scoring::EmbeddingTable;

use super::metrics::{calibrate_threshold, evaluate_scores, EvalReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Aggregation {
    #[serde(rename = "min")]
    Min,
    #[serde(rename = "mean")]
    Mean,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransEConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub margin: f64,
    pub seed: u64,
    pub aggregation: Aggregation,
}

impl Default for TransEConfig {
    fn default() -> Self {
        TransEConfig {
            dim: 18,
            epochs: 100,
            learning_rate: 0.01,
            margin: 1.0,
            seed: 0,
            aggregation: Aggregation::Min,
        }
    }
}

/// TransE embeddings with unit-norm entities.
pub struct TransEModel {
    emb: EmbeddingTable,
    aggregation: Aggregation,
}

impl TransEModel {
    /// Claim plausibility: −‖h + r − t‖₂ (higher is more plausible).
    pub fn claim_score(&self, t: &Triple) -> f64 {
        let h = self.emb.entity(t.head);
        let r = self.emb.relation(t.relation);
        let tl = self.emb.entity(t.tail);
        let sq: f64 = h
            .iter()
            .zip(r)
            .zip(tl)
            .map(|((&a, &b), &c)| {
                let d = a + b - c;
                d * d
            })
            .sum();
        -sq.sqrt()
    }

    pub fn statement_score(&self, s: &Statement) -> f64 {
        let scores = s.claims.iter().map(|c| self.claim_score(c));
        match self.aggregation {
            Aggregation::Min => scores.fold(f64::INFINITY, f64::min),
            Aggregation::Mean => {
                let v: Vec<f64> = scores.collect();
                v.iter().sum::<f64>() / v.len() as f64
            }
        }
    }
}

/// Margin-ranking TransE training over the graph's triples.
pub fn train_transe(kg: &KnowledgeGraph, cfg: &TransEConfig) -> Result<TransEModel> {
    if kg.n_triples() == 0 {
        return Err(LescError::EmptyGraph);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut emb = EmbeddingTable::init_uniform(kg.n_entities(), kg.n_relations(), cfg.dim, &mut rng);
    normalize_entities(&mut emb);
    normalize_relations(&mut emb);

    let d = cfg.dim;
    let mut triples: Vec<Triple> = kg.triples().to_vec();
    for _ in 0..cfg.epochs {
        triples.shuffle(&mut rng);
        for i in 0..triples.len() {
            let pos = triples[i];
            let neg = kg.corrupt_triple(&pos, &mut rng)?;
            let (pd, pdiff) = distance(&emb, &pos);
            let (nd, ndiff) = distance(&emb, &neg);
            if cfg.margin + pd - nd <= 0.0 {
                continue;
            }
            // d‖v‖/dv = v/‖v‖; move the positive closer, the negative apart.
            let lr = cfg.learning_rate;
            for j in 0..d {
                let gp = if pd > 1e-10 { pdiff[j] / pd } else { 0.0 };
                let gn = if nd > 1e-10 { ndiff[j] / nd } else { 0.0 };
                emb.entity_mut(pos.head)[j] -= lr * gp;
                emb.relation_mut(pos.relation)[j] -= lr * gp;
                emb.entity_mut(pos.tail)[j] += lr * gp;
                emb.entity_mut(neg.head)[j] += lr * gn;
                emb.relation_mut(neg.relation)[j] += lr * gn;
                emb.entity_mut(neg.tail)[j] -= lr * gn;
            }
            for e in [pos.head, pos.tail, neg.head, neg.tail] {
                normalize_row(emb.entity_mut(e));
            }
        }
    }
    if !emb.all_finite() {
        return Err(LescError::NonFiniteLoss("TransE training".into()));
    }
    Ok(TransEModel {
        emb,
        aggregation: cfg.aggregation,
    })
}

fn distance(emb: &EmbeddingTable, t: &Triple) -> (f64, Vec<f64>) {
    let h = emb.entity(t.head);
    let r = emb.relation(t.relation);
    let tl = emb.entity(t.tail);
    let diff: Vec<f64> = h
        .iter()
        .zip(r)
        .zip(tl)
        .map(|((&a, &b), &c)| a + b - c)
        .collect();
    let norm = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
    (norm, diff)
}

fn normalize_row(row: &mut [f64]) {
    let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1e-12 {
        row.iter_mut().for_each(|x| *x /= norm);
    }
}

fn normalize_entities(emb: &mut EmbeddingTable) {
    for e in 0..emb.n_entities() as u32 {
        normalize_row(emb.entity_mut(e));
    }
}

fn normalize_relations(emb: &mut EmbeddingTable) {
    for r in 0..emb.n_relations() as u32 {
        normalize_row(emb.relation_mut(r));
    }
}

/// Trains TransE on the graph, calibrates the decision threshold on the
/// validation split, and reports metrics on the test split.
pub fn baseline_min_transe(
    kg: &KnowledgeGraph,
    valid: &[Statement],
    test: &[Statement],
    cfg: &TransEConfig,
) -> Result<(EvalReport, TransEModel)> {
    let model = train_transe(kg, cfg)?;
    let valid_scores: Vec<f64> = valid.iter().map(|s| model.statement_score(s)).collect();
    let valid_labels: Vec<bool> = valid.iter().map(|s| s.label).collect();
    let threshold = calibrate_threshold(&valid_scores, &valid_labels)?;

    let test_scores: Vec<f64> = test.iter().map(|s| model.statement_score(s)).collect();
    let test_labels: Vec<bool> = test.iter().map(|s| s.label).collect();
    let counts: Vec<usize> = test.iter().map(|s| s.n_claims()).collect();
    let report = evaluate_scores(&test_scores, &test_labels, &counts, threshold, true)?;
    Ok((report, model))
}
