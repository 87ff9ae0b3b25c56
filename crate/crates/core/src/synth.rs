//! Deterministic synthetic knowledge graphs for tests and benchmarks.
//!
//! Entities are partitioned into groups and every relation maps a head's
//! group to a fixed target group, so the graph carries learnable type
//! structure: embedding models can separate real edges from random
//! corruptions, while absent-but-type-consistent edges remain hard
//! negatives. Every entity is guaranteed at least one outgoing edge so
//! random walks never start at a dead end.

use std::collections::HashSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{LescError, Result};
use crate::kgstore::KnowledgeGraph;

#[derive(Debug, Clone)]
pub struct SynthKgConfig {
    pub n_entities: usize,
    pub n_relations: usize,
    pub n_triples: usize,
    pub n_groups: usize,
    pub seed: u64,
}

impl Default for SynthKgConfig {
    fn default() -> Self {
        SynthKgConfig {
            n_entities: 200,
            n_relations: 10,
            n_triples: 2_000,
            n_groups: 20,
            seed: 0,
        }
    }
}

/// The 200-entity / 10-relation / 2,000-triple graph used throughout the
/// test suite.
pub fn reference_kg(seed: u64) -> KnowledgeGraph {
    synthetic_kg(&SynthKgConfig {
        seed,
        ..SynthKgConfig::default()
    })
    .expect("reference config is valid")
}

pub fn synthetic_kg(cfg: &SynthKgConfig) -> Result<KnowledgeGraph> {
    if cfg.n_entities == 0 || cfg.n_relations == 0 || cfg.n_groups == 0 {
        return Err(LescError::InvalidConfig("synthetic KG sizes must be positive".into()));
    }
    if cfg.n_triples < cfg.n_entities {
        return Err(LescError::InvalidConfig(
            "need at least one triple per entity to keep the graph walkable".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // Relation 0 stays within-group; the rest map to a random target group.
    let shifts: Vec<usize> = (0..cfg.n_relations)
        .map(|r| if r == 0 { 0 } else { rng.random_range(0..cfg.n_groups) })
        .collect();

    let group_of = |e: usize| e % cfg.n_groups;
    let members_of = |g: usize| -> Vec<usize> {
        (0..cfg.n_entities).filter(|e| e % cfg.n_groups == g).collect()
    };
    let groups: Vec<Vec<usize>> = (0..cfg.n_groups).map(members_of).collect();

    let mut seen = HashSet::new();
    let mut triples: Vec<(usize, usize, usize)> = Vec::with_capacity(cfg.n_triples);

    // One guaranteed outgoing edge per entity, in entity order, so the
    // vocabulary ids are dense and every walk seed is usable.
    for head in 0..cfg.n_entities {
        let rel = head % cfg.n_relations;
        let target = &groups[(group_of(head) + shifts[rel]) % cfg.n_groups];
        let mut tail = target[rng.random_range(0..target.len())];
        let mut guard = 0;
        while !seen.insert((head, rel, tail)) {
            tail = target[rng.random_range(0..target.len())];
            guard += 1;
            if guard > 100 {
                break;
            }
        }
        triples.push((head, rel, tail));
    }

    let mut attempts = 0usize;
    let budget = cfg.n_triples.saturating_mul(100);
    while triples.len() < cfg.n_triples {
        attempts += 1;
        if attempts > budget {
            return Err(LescError::InvalidConfig(
                "could not sample enough distinct triples; graph too dense".into(),
            ));
        }
        let rel = rng.random_range(0..cfg.n_relations);
        let head = rng.random_range(0..cfg.n_entities);
        let target = &groups[(group_of(head) + shifts[rel]) % cfg.n_groups];
        let tail = target[rng.random_range(0..target.len())];
        if seen.insert((head, rel, tail)) {
            triples.push((head, rel, tail));
        }
    }

    let width = (cfg.n_entities as f64).log10().ceil().max(1.0) as usize;
    let named: Vec<(String, String, String)> = triples
        .into_iter()
        .map(|(h, r, t)| {
            (
                format!("e{h:0width$}"),
                format!("r{r}"),
                format!("e{t:0width$}"),
            )
        })
        .collect();
    KnowledgeGraph::from_named_triples(named)
}
