use lesc_core::claimgen::{generate_corpus, split_corpus, GenerateConfig, WalkConfig};
use lesc_core::scoring::{pretrain_embeddings, PretrainConfig};
use lesc_core::synth::reference_kg;
use lesc_core::trainer::{mean_attention_hsic, train, CorpusSplit, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
#[ignore]
fn hsic_lever() {
    let kg = reference_kg(0);
    let gen_cfg = GenerateConfig {
        count: 5000, neg_fraction: 0.5, composition_fraction: 0.5, corruptions: 1,
        walk: WalkConfig { min_steps: 1, max_steps: 4, min_walks: 1, max_walks: 2, ..WalkConfig::default() },
    };
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let corpus = generate_corpus(&kg, &gen_cfg, &mut rng).unwrap();
    let (tr, va, te) = split_corpus(corpus, (0.8, 0.1, 0.1), &mut rng).unwrap();
    let split = CorpusSplit { train: tr, valid: va, test: te };
    let emb = pretrain_embeddings(&kg, &PretrainConfig { dim: 18, epochs: 40, seed: 0, ..PretrainConfig::default() }).unwrap().table;

    for seed in [0u64, 1, 2] {
        for lambda2 in [0.0, 0.1] {
            let cfg = TrainConfig { epochs: 30, patience: 30, learning_rate: 0.02, lambda2, seed, ..TrainConfig::new(18) };
            let (m, log) = train(&kg, &emb, None, &split.train, &split.valid, &cfg).unwrap();
            let h = mean_attention_hsic(&kg, &m.model, &split.test).unwrap();
            println!("seed {seed} lambda2={lambda2}: mean_hsic {h:.6} epochs {} ", log.len());
        }
    }
}
