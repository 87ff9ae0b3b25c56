use lesc_core::claimgen::{generate_corpus, split_corpus, GenerateConfig, WalkConfig};
use lesc_core::lescmodel::{Ablation, GcnVariant};
use lesc_core::scoring::{pretrain_embeddings, PretrainConfig};
use lesc_core::synth::reference_kg;
use lesc_core::trainer::{mean_attention_hsic, run_ablation, run_graph_variants, train, CorpusSplit, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn setup(seed: u64) -> (lesc_core::kgstore::KnowledgeGraph, lesc_core::scoring::EmbeddingTable, CorpusSplit) {
    let kg = reference_kg(0);
    let gen_cfg = GenerateConfig {
        count: 5000, neg_fraction: 0.5, composition_fraction: 0.5, corruptions: 1,
        walk: WalkConfig { min_steps: 1, max_steps: 3, min_walks: 1, max_walks: 3, ..WalkConfig::default() },
    };
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let corpus = generate_corpus(&kg, &gen_cfg, &mut rng).unwrap();
    let (tr, va, te) = split_corpus(corpus, (0.8, 0.1, 0.1), &mut rng).unwrap();
    let emb = pretrain_embeddings(&kg, &PretrainConfig { dim: 18, epochs: 40, seed, ..PretrainConfig::default() }).unwrap().table;
    (kg, emb, CorpusSplit { train: tr, valid: va, test: te })
}

#[test]
#[ignore]
fn ablation_probe() {
    let (kg, emb, split) = setup(0);
    let base = TrainConfig { epochs: 15, patience: 5, learning_rate: 0.02, seed: 0, ..TrainConfig::new(18) };
    let t = Instant::now();
    let runs = run_ablation(&kg, &emb, None, &split, &Ablation::all().as_slice(), &base).unwrap();
    for r in &runs {
        println!("{:<12} acc {:.3} f1 {:.3}", r.variant, r.report.accuracy, r.report.f1);
    }
    println!("ablation time {:?}", t.elapsed());

    let t = Instant::now();
    let graphs = run_graph_variants(&kg, &emb, None, &split,
        &[GcnVariant::PlainPlusSquared, GcnVariant::Plain, GcnVariant::Squared, GcnVariant::FullyConnected], &base).unwrap();
    for r in &graphs {
        println!("gcn {:<6} acc {:.3}", r.variant, r.report.accuracy);
    }
    println!("graph time {:?}", t.elapsed());

    // HSIC effect: full (lambda2=0.1) vs lambda2=0.
    for seed in [0u64, 1, 2] {
        let cfg_on = TrainConfig { seed, ..base.clone() };
        let cfg_off = TrainConfig { lambda2: 0.0, seed, ..base.clone() };
        let (m_on, _) = train(&kg, &emb, None, &split.train, &split.valid, &cfg_on).unwrap();
        let (m_off, _) = train(&kg, &emb, None, &split.train, &split.valid, &cfg_off).unwrap();
        let h_on = mean_attention_hsic(&kg, &m_on.model, &split.test).unwrap();
        let h_off = mean_attention_hsic(&kg, &m_off.model, &split.test).unwrap();
        println!("seed {seed}: hsic(l2=0.1) {h_on:.5} vs hsic(l2=0) {h_off:.5} -> lower: {}", h_on < h_off);
    }
}
