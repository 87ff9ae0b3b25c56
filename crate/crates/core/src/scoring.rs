//! Embedding tables, the DistMult triple scorer, the convolutional claim
//! encoder, and their pretraining loops.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::sigmoid;
use crate::error::{LescError, Result};
use crate::kgstore::{EntityId, KnowledgeGraph, RelationId, Triple};
use crate::trainer::adagrad::AdaGrad;

pub const DEFAULT_DIM: usize = 18;

/// Dense real vectors for every entity and relation, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    n_entities: usize,
    n_relations: usize,
    entity_vecs: Vec<f64>,
    relation_vecs: Vec<f64>,
}

impl EmbeddingTable {
    /// Uniform initialization in [-6/√d, +6/√d].
    pub fn init_uniform(n_entities: usize, n_relations: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let bound = 6.0 / (dim as f64).sqrt();
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n * dim).map(|_| rng.random_range(-bound..bound)).collect()
        };
        EmbeddingTable {
            dim,
            n_entities,
            n_relations,
            entity_vecs: draw(n_entities),
            relation_vecs: draw(n_relations),
        }
    }

    pub fn from_flat(
        dim: usize,
        n_entities: usize,
        n_relations: usize,
        entity_vecs: Vec<f64>,
        relation_vecs: Vec<f64>,
    ) -> Result<Self> {
        if entity_vecs.len() != n_entities * dim {
            return Err(LescError::DimMismatch {
                expected: n_entities * dim,
                got: entity_vecs.len(),
            });
        }
        if relation_vecs.len() != n_relations * dim {
            return Err(LescError::DimMismatch {
                expected: n_relations * dim,
                got: relation_vecs.len(),
            });
        }
        Ok(EmbeddingTable {
            dim,
            n_entities,
            n_relations,
            entity_vecs,
            relation_vecs,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_entities(&self) -> usize {
        self.n_entities
    }

    pub fn n_relations(&self) -> usize {
        self.n_relations
    }

    pub fn entity(&self, e: EntityId) -> &[f64] {
        let i = e as usize * self.dim;
        &self.entity_vecs[i..i + self.dim]
    }

    pub fn relation(&self, r: RelationId) -> &[f64] {
        let i = r as usize * self.dim;
        &self.relation_vecs[i..i + self.dim]
    }

    pub fn entity_mut(&mut self, e: EntityId) -> &mut [f64] {
        let i = e as usize * self.dim;
        &mut self.entity_vecs[i..i + self.dim]
    }

    pub fn relation_mut(&mut self, r: RelationId) -> &mut [f64] {
        let i = r as usize * self.dim;
        &mut self.relation_vecs[i..i + self.dim]
    }

    pub fn entity_data(&self) -> &[f64] {
        &self.entity_vecs
    }

    pub fn relation_data(&self) -> &[f64] {
        &self.relation_vecs
    }

    pub fn all_finite(&self) -> bool {
        self.entity_vecs.iter().chain(&self.relation_vecs).all(|v| v.is_finite())
    }

    /// Content hash used to tie checkpoints to the exact table they were
    /// trained with.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(self.dim.to_le_bytes());
        for v in self.entity_vecs.iter().chain(&self.relation_vecs) {
            hasher.update(v.to_le_bytes());
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Writes the table as a versioned JSON checkpoint carrying the
    /// vocabulary hash for compatibility checking.
    pub fn save(&self, path: impl AsRef<Path>, vocab_hash: &str) -> Result<()> {
        let record = EmbeddingRecord {
            version: 1,
            dim: self.dim,
            n_entities: self.n_entities,
            n_relations: self.n_relations,
            vocab_hash: vocab_hash.to_string(),
            entity_vecs: self.entity_vecs.clone(),
            relation_vecs: self.relation_vecs.clone(),
        };
        let out = BufWriter::new(File::create(path)?);
        serde_json::to_writer(out, &record)?;
        Ok(())
    }

    /// Loads a checkpoint, verifying the vocabulary hash when one is given.
    pub fn load(path: impl AsRef<Path>, expected_vocab_hash: Option<&str>) -> Result<(Self, String)> {
        let record: EmbeddingRecord = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if record.version != 1 {
            return Err(LescError::UnsupportedVersion(record.version));
        }
        if let Some(expected) = expected_vocab_hash {
            if record.vocab_hash != expected {
                return Err(LescError::VocabMismatch {
                    expected: expected.to_string(),
                    got: record.vocab_hash,
                });
            }
        }
        let table = EmbeddingTable::from_flat(
            record.dim,
            record.n_entities,
            record.n_relations,
            record.entity_vecs,
            record.relation_vecs,
        )?;
        Ok((table, record.vocab_hash))
    }
}

#[derive(Serialize, Deserialize)]
struct EmbeddingRecord {
    version: u32,
    dim: usize,
    n_entities: usize,
    n_relations: usize,
    vocab_hash: String,
    entity_vecs: Vec<f64>,
    relation_vecs: Vec<f64>,
}

/// DistMult plausibility: Σⱼ hⱼ·rⱼ·tⱼ. Evaluated as (h·t)·r per component
/// so the head/tail symmetry holds bit-exactly.
pub fn distmult_score(h: &[f64], r: &[f64], t: &[f64]) -> Result<f64> {
    check_dims(&[h, r, t])?;
    Ok(h.iter().zip(r).zip(t).map(|((&a, &b), &c)| (a * c) * b).sum())
}

/// Gradient of [`distmult_score`] with respect to all three vectors.
pub fn distmult_grad(h: &[f64], r: &[f64], t: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    check_dims(&[h, r, t])?;
    let d = h.len();
    let mut gh = vec![0.0; d];
    let mut gr = vec![0.0; d];
    let mut gt = vec![0.0; d];
    for j in 0..d {
        gh[j] = r[j] * t[j];
        gr[j] = h[j] * t[j];
        gt[j] = h[j] * r[j];
    }
    Ok((gh, gr, gt))
}

/// Convolutional claim encoder: a length-3 filter slid over the rows of
/// [h; r; t] plus a shared bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimEncoderParams {
    pub filter: [f64; 3],
    pub bias: f64,
}

impl ClaimEncoderParams {
    /// Pass-through start used when pretraining is skipped: every output
    /// component sums its claim components.
    pub fn identity_like() -> Self {
        ClaimEncoderParams {
            filter: [1.0, 1.0, 1.0],
            bias: 0.0,
        }
    }
}

/// v(j) = ReLU(ω₁·hⱼ + ω₂·rⱼ + ω₃·tⱼ + b); output is elementwise nonnegative
/// and always has the dimension of its inputs.
pub fn encode_claim(h: &[f64], r: &[f64], t: &[f64], p: &ClaimEncoderParams) -> Result<Vec<f64>> {
    check_dims(&[h, r, t])?;
    Ok((0..h.len())
        .map(|j| (p.filter[0] * h[j] + p.filter[1] * r[j] + p.filter[2] * t[j] + p.bias).max(0.0))
        .collect())
}

/// Backward pass of [`encode_claim`] given the upstream gradient on v.
/// Returns gradients on (h, r, t, filter, bias).
#[allow(clippy::type_complexity)]
pub fn encode_claim_backward(
    h: &[f64],
    r: &[f64],
    t: &[f64],
    p: &ClaimEncoderParams,
    upstream: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, [f64; 3], f64)> {
    check_dims(&[h, r, t, upstream])?;
    let d = h.len();
    let mut gh = vec![0.0; d];
    let mut gr = vec![0.0; d];
    let mut gt = vec![0.0; d];
    let mut gf = [0.0; 3];
    let mut gb = 0.0;
    for j in 0..d {
        let pre = p.filter[0] * h[j] + p.filter[1] * r[j] + p.filter[2] * t[j] + p.bias;
        if pre <= 0.0 {
            continue;
        }
        let u = upstream[j];
        gh[j] = u * p.filter[0];
        gr[j] = u * p.filter[1];
        gt[j] = u * p.filter[2];
        gf[0] += u * h[j];
        gf[1] += u * r[j];
        gf[2] += u * t[j];
        gb += u;
    }
    Ok((gh, gr, gt, gf, gb))
}

fn check_dims(vecs: &[&[f64]]) -> Result<()> {
    let d = vecs[0].len();
    for v in &vecs[1..] {
        if v.len() != d {
            return Err(LescError::DimMismatch { expected: d, got: v.len() });
        }
    }
    Ok(())
}

/// Settings shared by the embedding and claim-encoder pretraining loops.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    /// Corrupted triples per observed triple.
    pub negatives: usize,
    /// Fraction of triples kept out of training, e.g. for AUC checks.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            dim: DEFAULT_DIM,
            epochs: 60,
            learning_rate: 0.1,
            l2: 1e-5,
            negatives: 1,
            holdout_fraction: 0.0,
            seed: 0,
        }
    }
}

pub struct PretrainOutcome {
    pub table: EmbeddingTable,
    /// Mean logistic loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Triples excluded from training (empty unless holdout_fraction > 0).
    pub holdout: Vec<Triple>,
}

/// Pretrains DistMult embeddings with the logistic loss over observed
/// triples (y = +1) and corrupted ones (y = -1), L2-regularized, AdaGrad.
pub fn pretrain_embeddings(kg: &KnowledgeGraph, cfg: &PretrainConfig) -> Result<PretrainOutcome> {
    if kg.n_triples() == 0 {
        return Err(LescError::EmptyGraph);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut table = EmbeddingTable::init_uniform(kg.n_entities(), kg.n_relations(), cfg.dim, &mut rng);

    let mut order: Vec<usize> = (0..kg.n_triples()).collect();
    order.shuffle(&mut rng);
    let n_hold = (kg.n_triples() as f64 * cfg.holdout_fraction).round() as usize;
    let holdout: Vec<Triple> = order[..n_hold].iter().map(|&i| kg.triples()[i]).collect();
    let mut train: Vec<Triple> = order[n_hold..].iter().map(|&i| kg.triples()[i]).collect();
    if train.is_empty() {
        return Err(LescError::InvalidConfig("holdout leaves no training triples".into()));
    }

    let d = cfg.dim;
    let ent_len = kg.n_entities() * d;
    let mut opt = AdaGrad::new(ent_len + kg.n_relations() * d, cfg.learning_rate);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut grad = vec![0.0; 3 * d];

    for epoch in 0..cfg.epochs {
        train.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for i in 0..train.len() {
            let pos = train[i];
            for neg_idx in 0..=cfg.negatives {
                let (triple, y) = if neg_idx == 0 {
                    (pos, 1.0)
                } else {
                    (kg.corrupt_triple(&pos, &mut rng)?, -1.0)
                };
                let l = distmult_logistic_step(&mut table, &mut opt, ent_len, &triple, y, cfg.l2, &mut grad)?;
                loss_sum += l;
                loss_count += 1;
            }
        }
        let mean = loss_sum / loss_count as f64;
        if !mean.is_finite() {
            return Err(LescError::NonFiniteLoss(format!("pretraining epoch {epoch}")));
        }
        epoch_losses.push(mean);
    }
    Ok(PretrainOutcome {
        table,
        epoch_losses,
        holdout,
    })
}

fn distmult_logistic_step(
    table: &mut EmbeddingTable,
    opt: &mut AdaGrad,
    ent_len: usize,
    triple: &Triple,
    y: f64,
    l2: f64,
    grad: &mut [f64],
) -> Result<f64> {
    let d = table.dim();
    let s = distmult_score(table.entity(triple.head), table.relation(triple.relation), table.entity(triple.tail))?;
    let loss = crate::autodiff::softplus(-y * s);
    let g = -y * sigmoid(-y * s);
    {
        let (h, r, t) = (
            table.entity(triple.head),
            table.relation(triple.relation),
            table.entity(triple.tail),
        );
        for j in 0..d {
            grad[j] = g * r[j] * t[j] + 2.0 * l2 * h[j];
            grad[d + j] = g * h[j] * t[j] + 2.0 * l2 * r[j];
            grad[2 * d + j] = g * h[j] * r[j] + 2.0 * l2 * t[j];
        }
    }
    let head_off = triple.head as usize * d;
    let rel_off = ent_len + triple.relation as usize * d;
    let tail_off = triple.tail as usize * d;
    let map_err = |i: usize| LescError::NonFiniteGradient {
        param: format!("embedding coordinate {i}"),
    };
    opt.step_at(head_off, table.entity_mut(triple.head), &grad[..d]).map_err(map_err)?;
    opt.step_at(rel_off, table.relation_mut(triple.relation), &grad[d..2 * d]).map_err(map_err)?;
    opt.step_at(tail_off, table.entity_mut(triple.tail), &grad[2 * d..]).map_err(map_err)?;
    Ok(loss)
}

/// Pretrains the claim encoder: a triple is scored by `w·encode_claim(h,r,t)`
/// with an auxiliary weight vector `w`, trained with the same logistic loss
/// and negative sampling; `w` is discarded afterwards.
pub fn pretrain_claim_encoder(
    kg: &KnowledgeGraph,
    emb: &EmbeddingTable,
    cfg: &PretrainConfig,
) -> Result<(ClaimEncoderParams, Vec<f64>)> {
    if kg.n_triples() == 0 {
        return Err(LescError::EmptyGraph);
    }
    let d = emb.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut params = ClaimEncoderParams::identity_like();
    let bound = 6.0 / (d as f64).sqrt();
    let mut w: Vec<f64> = (0..d).map(|_| rng.random_range(-bound..bound)).collect();

    // Flat layout: filter(3) | bias(1) | w(d).
    let mut opt = AdaGrad::new(4 + d, cfg.learning_rate);
    let mut train: Vec<Triple> = kg.triples().to_vec();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        train.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut count = 0usize;
        for i in 0..train.len() {
            let pos = train[i];
            for neg_idx in 0..=cfg.negatives {
                let (triple, y) = if neg_idx == 0 {
                    (pos, 1.0)
                } else {
                    (kg.corrupt_triple(&pos, &mut rng)?, -1.0)
                };
                let h = emb.entity(triple.head);
                let r = emb.relation(triple.relation);
                let t = emb.entity(triple.tail);
                let v = encode_claim(h, r, t, &params)?;
                let s: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
                loss_sum += crate::autodiff::softplus(-y * s);
                count += 1;

                let g = -y * sigmoid(-y * s);
                let upstream: Vec<f64> = w.iter().map(|&wj| g * wj).collect();
                let (_, _, _, gf, gb) = encode_claim_backward(h, r, t, &params, &upstream)?;
                let mut gw: Vec<f64> = v.iter().map(|&vj| g * vj).collect();
                for (gwj, wj) in gw.iter_mut().zip(&w) {
                    *gwj += 2.0 * cfg.l2 * wj;
                }
                let mut packed = [gf[0], gf[1], gf[2], gb];
                let map_err = |i: usize| LescError::NonFiniteGradient {
                    param: format!("claim encoder coordinate {i}"),
                };
                opt.step_at(0, &mut params.filter, &packed[..3]).map_err(map_err)?;
                let mut bias = [params.bias];
                packed[0] = gb;
                opt.step_at(3, &mut bias, &packed[..1]).map_err(map_err)?;
                params.bias = bias[0];
                opt.step_at(4, &mut w, &gw).map_err(map_err)?;
            }
        }
        let mean = loss_sum / count as f64;
        if !mean.is_finite() {
            return Err(LescError::NonFiniteLoss(format!("claim encoder epoch {epoch}")));
        }
        epoch_losses.push(mean);
    }
    Ok((params, epoch_losses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::reference_kg;

    #[test]
    fn distmult_matches_hand_computations() {
        assert_eq!(distmult_score(&[1.0, 0.0], &[1.0, 1.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(distmult_score(&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]).unwrap(), 63.0);
    }

    #[test]
    fn distmult_is_symmetric_in_head_and_tail() {
        let h = [0.3, -1.2, 0.7];
        let r = [1.5, 0.2, -0.4];
        let t = [-0.8, 0.9, 2.0];
        assert_eq!(
            distmult_score(&h, &r, &t).unwrap(),
            distmult_score(&t, &r, &h).unwrap()
        );
    }

    #[test]
    fn distmult_is_trilinear() {
        let h = [0.3, -1.2];
        let r = [1.5, 0.2];
        let t = [-0.8, 0.9];
        let scaled: Vec<f64> = h.iter().map(|x| 2.5 * x).collect();
        let a = distmult_score(&scaled, &r, &t).unwrap();
        let b = 2.5 * distmult_score(&h, &r, &t).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        assert!(distmult_score(&[1.0], &[1.0, 2.0], &[1.0]).is_err());
        assert!(encode_claim(&[1.0], &[1.0], &[1.0, 2.0], &ClaimEncoderParams::identity_like()).is_err());
    }

    #[test]
    fn encoder_matches_hand_computations() {
        let p = ClaimEncoderParams { filter: [1.0, 0.0, 0.0], bias: 0.0 };
        assert_eq!(
            encode_claim(&[2.0, -3.0], &[9.0, 9.0], &[9.0, 9.0], &p).unwrap(),
            vec![2.0, 0.0]
        );
        let p = ClaimEncoderParams { filter: [0.0, 0.0, 0.0], bias: 1.0 };
        assert_eq!(
            encode_claim(&[2.0, -3.0], &[1.0, 1.0], &[0.5, 0.5], &p).unwrap(),
            vec![1.0, 1.0]
        );
    }

    #[test]
    fn encoder_output_is_nonnegative_with_input_dimension() {
        let p = ClaimEncoderParams { filter: [0.4, -1.2, 0.9], bias: -0.1 };
        for d in [1usize, 3, 18] {
            let h: Vec<f64> = (0..d).map(|i| (i as f64) - 2.0).collect();
            let r: Vec<f64> = (0..d).map(|i| 0.5 - (i as f64)).collect();
            let t: Vec<f64> = (0..d).map(|i| ((i * 7 % 5) as f64) - 2.0).collect();
            let v = encode_claim(&h, &r, &t, &p).unwrap();
            assert_eq!(v.len(), d);
            assert!(v.iter().all(|&x| x >= 0.0));
        }
    }

    /// Central finite differences for the scoring primitives (d = 6).
    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let d = 6;
        let eps = 1e-4;
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        for _ in 0..20 {
            let (h, r, t) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
            let (gh, gr, gt) = distmult_grad(&h, &r, &t).unwrap();
            for j in 0..d {
                for (vec, g) in [(&h, &gh), (&r, &gr), (&t, &gt)] {
                    let mut hi = vec.to_vec();
                    let mut lo = vec.to_vec();
                    hi[j] += eps;
                    lo[j] -= eps;
                    let (a, b) = if std::ptr::eq(vec, &h) {
                        (distmult_score(&hi, &r, &t), distmult_score(&lo, &r, &t))
                    } else if std::ptr::eq(vec, &r) {
                        (distmult_score(&h, &hi, &t), distmult_score(&h, &lo, &t))
                    } else {
                        (distmult_score(&h, &r, &hi), distmult_score(&h, &r, &lo))
                    };
                    let numeric = (a.unwrap() - b.unwrap()) / (2.0 * eps);
                    let analytic = g[j];
                    let denom = analytic.abs().max(numeric.abs()).max(1e-3);
                    assert!(((analytic - numeric) / denom).abs() < 1e-4);
                }
            }

            // Claim encoder: loss = Σ upstreamⱼ·vⱼ, check filter + bias grads.
            let p = ClaimEncoderParams { filter: [0.7, -0.3, 0.5], bias: 0.2 };
            let upstream = draw(&mut rng);
            let f = |p: &ClaimEncoderParams| -> f64 {
                encode_claim(&h, &r, &t, p)
                    .unwrap()
                    .iter()
                    .zip(&upstream)
                    .map(|(a, b)| a * b)
                    .sum()
            };
            let (_, _, _, gf, gb) = encode_claim_backward(&h, &r, &t, &p, &upstream).unwrap();
            for c in 0..3 {
                let mut hi = p.clone();
                let mut lo = p.clone();
                hi.filter[c] += eps;
                lo.filter[c] -= eps;
                let numeric = (f(&hi) - f(&lo)) / (2.0 * eps);
                let denom = gf[c].abs().max(numeric.abs()).max(1e-3);
                assert!(((gf[c] - numeric) / denom).abs() < 1e-4);
            }
            let mut hi = p.clone();
            let mut lo = p.clone();
            hi.bias += eps;
            lo.bias -= eps;
            let numeric = (f(&hi) - f(&lo)) / (2.0 * eps);
            let denom = gb.abs().max(numeric.abs()).max(1e-3);
            assert!(((gb - numeric) / denom).abs() < 1e-4);
        }
    }

    #[test]
    fn zero_epochs_returns_the_initialization() {
        let kg = reference_kg(0);
        let cfg = PretrainConfig {
            epochs: 0,
            seed: 5,
            ..PretrainConfig::default()
        };
        let out = pretrain_embeddings(&kg, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fresh = EmbeddingTable::init_uniform(kg.n_entities(), kg.n_relations(), cfg.dim, &mut rng);
        assert_eq!(out.table, fresh);
        assert!(out.epoch_losses.is_empty());
    }

    #[test]
    fn pretraining_loss_decreases_and_separates_holdout() {
        let kg = reference_kg(1);
        let cfg = PretrainConfig {
            epochs: 20,
            holdout_fraction: 0.1,
            seed: 3,
            ..PretrainConfig::default()
        };
        let out = pretrain_embeddings(&kg, &cfg).unwrap();
        assert!(out.epoch_losses.last().unwrap() < &out.epoch_losses[0]);
        assert!(out.table.all_finite());
        assert_eq!(out.holdout.len(), 200);

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let score = |t: &Triple| {
            distmult_score(out.table.entity(t.head), out.table.relation(t.relation), out.table.entity(t.tail)).unwrap()
        };
        let mean_true: f64 =
            out.holdout.iter().map(|t| score(t)).sum::<f64>() / out.holdout.len() as f64;
        let mean_corrupt: f64 = out
            .holdout
            .iter()
            .map(|t| score(&kg.corrupt_triple(t, &mut rng).unwrap()))
            .sum::<f64>()
            / out.holdout.len() as f64;
        assert!(
            mean_true > mean_corrupt,
            "held-out true triples must outscore corruptions: {mean_true} vs {mean_corrupt}"
        );
    }

    #[test]
    fn claim_encoder_pretraining_improves_separation() {
        let kg = reference_kg(2);
        let emb_cfg = PretrainConfig {
            epochs: 15,
            seed: 7,
            ..PretrainConfig::default()
        };
        let emb = pretrain_embeddings(&kg, &emb_cfg).unwrap().table;
        let enc_cfg = PretrainConfig {
            epochs: 10,
            seed: 7,
            ..PretrainConfig::default()
        };
        let (params, losses) = pretrain_claim_encoder(&kg, &emb, &enc_cfg).unwrap();
        assert!(losses.last().unwrap() < &losses[0], "loss must decrease");
        assert!(params.filter.iter().all(|f| f.is_finite()) && params.bias.is_finite());
    }

    #[test]
    fn embedding_checkpoint_round_trips_and_checks_vocab() {
        let kg = reference_kg(3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let table = EmbeddingTable::init_uniform(kg.n_entities(), kg.n_relations(), 6, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.json");
        table.save(&path, &kg.vocab_hash()).unwrap();

        let (loaded, hash) = EmbeddingTable::load(&path, Some(&kg.vocab_hash())).unwrap();
        assert_eq!(loaded, table);
        assert_eq!(hash, kg.vocab_hash());
        assert!(matches!(
            EmbeddingTable::load(&path, Some("deadbeef")),
            Err(LescError::VocabMismatch { .. })
        ));
    }
}
