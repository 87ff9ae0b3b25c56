//! End-to-end training with AdaGrad, threshold calibration, evaluation,
//! the Dual-TransE-style baseline and the ablation harness.

pub mod ablation;
pub mod adagrad;
pub mod baseline;
pub mod metrics;

pub use ablation::{run_ablation, run_graph_variants, AblationRow, AblationRun};
pub use adagrad::AdaGrad;
pub use baseline::{baseline_min_transe, train_transe, Aggregation, TransEConfig, TransEModel};
pub use metrics::{calibrate_threshold, evaluate_scores, roc_auc, EvalReport};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::claimgen::Statement;
use crate::error::{LescError, Result};
use crate::kgstore::KnowledgeGraph;
use crate::lescmodel::{Ablation, LescModel, LossConfig, ModelShape, Session};
use crate::scoring::{ClaimEncoderParams, EmbeddingTable};

const DIVERGENCE_LIMIT: f64 = 1e6;

/// Hyperparameters of one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_coeff: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub use_claim_labels: bool,
    /// Early-stop patience on validation accuracy.
    pub patience: usize,
    pub f1_positive_true: bool,
    pub seed: u64,
    pub ablation: Ablation,
    pub shape: ModelShape,
}

impl TrainConfig {
    pub fn new(dim: usize) -> Self {
        TrainConfig {
            batch_size: 100,
            learning_rate: 0.001,
            epochs: 50,
            l2_coeff: 1e-5,
            lambda1: 1.0,
            lambda2: 0.1,
            use_claim_labels: true,
            patience: 5,
            f1_positive_true: true,
            seed: 0,
            ablation: Ablation::Full,
            shape: ModelShape::new(dim),
        }
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            use_claim_labels: self.use_claim_labels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(LescError::InvalidConfig("batch_size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(LescError::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.l2_coeff < 0.0 {
            return Err(LescError::InvalidConfig("l2_coeff must be nonnegative".into()));
        }
        self.shape.validate()?;
        self.loss_config().validate()
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub valid_accuracy: f64,
    pub wall_ms: u64,
}

/// Train/valid/test partition of a generated corpus.
#[derive(Debug, Clone)]
pub struct CorpusSplit {
    pub train: Vec<Statement>,
    pub valid: Vec<Statement>,
    pub test: Vec<Statement>,
}

/// A trained verifier plus its calibrated decision threshold.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: LescModel,
    pub threshold: f64,
}

impl TrainedModel {
    pub fn evaluate(&self, kg: &KnowledgeGraph, stmts: &[Statement]) -> Result<EvalReport> {
        evaluate(kg, &self.model, self.threshold, stmts, true)
    }
}

/// Minimizes the Eq.-13 loss plus L2 over shuffled mini-batches with
/// AdaGrad, fine-tuning the embeddings together with the model parameters.
/// Early-stops on validation accuracy and returns the best-epoch snapshot.
/// Deterministic given (corpus, seed, config).
pub fn train(
    kg: &KnowledgeGraph,
    emb: &EmbeddingTable,
    encoder: Option<&ClaimEncoderParams>,
    train_set: &[Statement],
    valid_set: &[Statement],
    cfg: &TrainConfig,
) -> Result<(TrainedModel, Vec<EpochRecord>)> {
    cfg.validate()?;
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(LescError::EmptySplit);
    }
    let mut model = LescModel::init(emb, cfg.shape, cfg.ablation, encoder, cfg.seed)?;
    let layout = model.layout.clone();
    let mut flat = std::mem::take(&mut model.flat);
    let loss_cfg = cfg.loss_config();

    let mut session = Session::new(kg, &layout, cfg.shape, cfg.ablation);
    let mut opt = AdaGrad::new(layout.total(), cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut grad_buf = vec![0.0; layout.total()];

    let valid_labels: Vec<bool> = valid_set.iter().map(|s| s.label).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Vec<f64>, f64)> = None; // (accuracy, flat, threshold)
    let mut stale_epochs = 0;

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            session.begin(&flat);
            let mut terms = Vec::with_capacity(batch.len());
            for &i in batch {
                let (l, _) = session.loss(&train_set[i], &loss_cfg)?;
                terms.push(l);
            }
            let root = session.mean_of(&terms);
            let batch_loss = session.value(root);
            if !batch_loss.is_finite() {
                return Err(LescError::NonFiniteLoss(format!("epoch {epoch}")));
            }
            if batch_loss > DIVERGENCE_LIMIT {
                return Err(LescError::Diverged { loss: batch_loss });
            }
            loss_sum += batch_loss * batch.len() as f64;

            let grad = session.backward(root);
            grad_buf.copy_from_slice(grad);
            for (g, &p) in grad_buf.iter_mut().zip(flat.iter()) {
                *g += 2.0 * cfg.l2_coeff * p;
            }
            opt.step(&mut flat, &grad_buf)
                .map_err(|idx| LescError::NonFiniteGradient { param: layout.param_name(idx) })?;
        }
        let mean_loss = loss_sum / train_set.len() as f64;

        let valid_scores = score_split(&mut session, &flat, valid_set)?;
        let threshold = calibrate_threshold(&valid_scores, &valid_labels)?;
        let valid_accuracy = metrics::accuracy_at(&valid_scores, &valid_labels, threshold);
        log.push(EpochRecord {
            epoch,
            mean_loss,
            valid_accuracy,
            wall_ms: started.elapsed().as_millis() as u64,
        });

        let improved = best.as_ref().map(|(acc, _, _)| valid_accuracy > *acc).unwrap_or(true);
        if improved {
            best = Some((valid_accuracy, flat.clone(), threshold));
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= cfg.patience {
                break;
            }
        }
    }

    let threshold = match best {
        Some((_, best_flat, threshold)) => {
            flat = best_flat;
            threshold
        }
        None => {
            // Zero-epoch run: calibrate on the initialization.
            let valid_scores = score_split(&mut session, &flat, valid_set)?;
            calibrate_threshold(&valid_scores, &valid_labels)?
        }
    };
    drop(session);
    model.flat = flat;
    Ok((TrainedModel { model, threshold }, log))
}

fn score_split(session: &mut Session, flat: &[f64], stmts: &[Statement]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(stmts.len());
    for chunk in stmts.chunks(128) {
        session.begin(flat);
        for s in chunk {
            let sv = session.forward(s)?;
            out.push(session.value(sv.s_y));
        }
    }
    Ok(out)
}

/// Scores a split with a trained model and reports metrics at `threshold`.
pub fn evaluate(
    kg: &KnowledgeGraph,
    model: &LescModel,
    threshold: f64,
    stmts: &[Statement],
    f1_positive_true: bool,
) -> Result<EvalReport> {
    if stmts.is_empty() {
        return Err(LescError::EmptySplit);
    }
    let traces = model.score_statements(kg, stmts)?;
    let scores: Vec<f64> = traces.iter().map(|t| t.s_y).collect();
    let labels: Vec<bool> = stmts.iter().map(|s| s.label).collect();
    let counts: Vec<usize> = stmts.iter().map(|s| s.n_claims()).collect();
    evaluate_scores(&scores, &labels, &counts, threshold, f1_positive_true)
}

/// Mean per-statement HSIC of the head attention scores over a split,
/// the quantity the λ₂ term drives down during training.
pub fn mean_attention_hsic(kg: &KnowledgeGraph, model: &LescModel, stmts: &[Statement]) -> Result<f64> {
    if stmts.is_empty() {
        return Err(LescError::EmptySplit);
    }
    let traces = model.score_statements(kg, stmts)?;
    Ok(traces.iter().map(|t| t.hsic).sum::<f64>() / traces.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::claimgen::{generate_corpus, split_corpus, GenerateConfig};
    use crate::scoring::{pretrain_embeddings, PretrainConfig};
    use crate::synth::reference_kg;

    fn tiny_setup(seed: u64, count: usize) -> (KnowledgeGraph, EmbeddingTable, CorpusSplit) {
        let kg = reference_kg(seed);
        let emb = pretrain_embeddings(
            &kg,
            &PretrainConfig {
                dim: 6,
                epochs: 5,
                seed,
                ..PretrainConfig::default()
            },
        )
        .unwrap()
        .table;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let corpus = generate_corpus(
            &kg,
            &GenerateConfig {
                count,
                ..GenerateConfig::default()
            },
            &mut rng,
        )
        .unwrap();
        let (train, valid, test) = split_corpus(corpus, (0.7, 0.15, 0.15), &mut rng).unwrap();
        (kg, emb, CorpusSplit { train, valid, test })
    }

    fn quick_cfg(seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: 6,
            batch_size: 32,
            learning_rate: 0.02,
            seed,
            ..TrainConfig::new(6)
        }
    }

    #[test]
    fn training_loss_decreases() {
        let (kg, emb, split) = tiny_setup(1, 240);
        let (_, log) = train(&kg, &emb, None, &split.train, &split.valid, &quick_cfg(1)).unwrap();
        assert!(log.len() >= 2);
        assert!(
            log.last().unwrap().mean_loss < log[0].mean_loss,
            "loss failed to decrease: {:?}",
            log.iter().map(|r| r.mean_loss).collect::<Vec<_>>()
        );
    }

    #[test]
    fn training_is_deterministic() {
        let (kg, emb, split) = tiny_setup(2, 120);
        let cfg = TrainConfig {
            epochs: 3,
            ..quick_cfg(2)
        };
        let (a, log_a) = train(&kg, &emb, None, &split.train, &split.valid, &cfg).unwrap();
        let (b, log_b) = train(&kg, &emb, None, &split.train, &split.valid, &cfg).unwrap();
        assert_eq!(a.model.flat, b.model.flat);
        assert_eq!(a.threshold, b.threshold);
        let metrics_a: Vec<(f64, f64)> = log_a.iter().map(|r| (r.mean_loss, r.valid_accuracy)).collect();
        let metrics_b: Vec<(f64, f64)> = log_b.iter().map(|r| (r.mean_loss, r.valid_accuracy)).collect();
        assert_eq!(metrics_a, metrics_b);
    }

    #[test]
    fn absurd_learning_rate_aborts() {
        let (kg, emb, split) = tiny_setup(3, 80);
        let cfg = TrainConfig {
            learning_rate: 3e4,
            epochs: 30,
            ..quick_cfg(3)
        };
        let err = train(&kg, &emb, None, &split.train, &split.valid, &cfg).unwrap_err();
        assert!(
            matches!(
                err,
                LescError::Diverged { .. } | LescError::NonFiniteLoss(_) | LescError::NonFiniteGradient { .. }
            ),
            "unexpected error: {err}"
        );
    }

    #[test]
    fn no_hsic_variant_has_exactly_zero_lambda2_contribution() {
        let (kg, emb, split) = tiny_setup(4, 60);
        let stmts = &split.train[..16];
        let loss_on = LossConfig { lambda2: 0.7, ..LossConfig::default() };
        let loss_off = LossConfig { lambda2: 0.0, ..LossConfig::default() };

        let no_ld = LescModel::init(&emb, ModelShape::new(6), Ablation::NoHsic, None, 4).unwrap();
        let (_, g_variant) = no_ld.total_loss_with_grad(&kg, stmts, &loss_on).unwrap();
        let full = LescModel::init(&emb, ModelShape::new(6), Ablation::Full, None, 4).unwrap();
        let (_, g_reference) = full.total_loss_with_grad(&kg, stmts, &loss_off).unwrap();
        assert_eq!(g_variant, g_reference, "no_Ld must equal the λ₂=0 gradient bit-for-bit");
    }

    #[test]
    fn no_enhancement_variant_leaves_enhancement_parameters_untouched() {
        let (kg, emb, split) = tiny_setup(5, 60);
        let stmts = &split.train[..16];
        let model = LescModel::init(&emb, ModelShape::new(6), Ablation::NoEnhancement, None, 5).unwrap();
        let (_, grad) = model.total_loss_with_grad(&kg, stmts, &LossConfig::default()).unwrap();
        for (name, range) in model.layout.segments() {
            if matches!(name, "omega" | "w_h" | "w_t") {
                assert!(
                    grad[range].iter().all(|&g| g == 0.0),
                    "{name} must receive no gradient under no_LE"
                );
            }
        }
    }

    #[test]
    fn evaluation_reports_buckets_over_the_test_split() {
        let (kg, emb, split) = tiny_setup(6, 150);
        let (trained, _) = train(&kg, &emb, None, &split.train, &split.valid, &quick_cfg(6)).unwrap();
        let report = trained.evaluate(&kg, &split.test).unwrap();
        assert!(report.accuracy >= 0.0 && report.accuracy <= 1.0);
        assert!(report.f1 >= 0.0 && report.f1 <= 1.0);
        let total: usize = report.per_claim_count.values().map(|b| b.count).sum();
        assert_eq!(total, split.test.len());
        assert!(evaluate(&kg, &trained.model, trained.threshold, &[], true).is_err());
    }
}
