//! Synthesizes labeled multi-claim statements by random walks over a
//! knowledge graph, produces negative statements by claim corruption, and
//! splits corpora for training.
//!
//! Corpus files are JSON-lines: one statement per line with keys `id`,
//! `claims` (array of `[head, relation, tail]` name triples), `label` (0/1)
//! and `claim_labels` (array of 0/1).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LescError, Result};
use crate::kgstore::{EntityId, KnowledgeGraph, Triple};

/// An ordered list of triple claims verified as a whole. A statement is true
/// only if every claim is true.
#[derive(Debug, Clone, PartialEq)]
pub struct Statement {
    pub id: String,
    pub claims: Vec<Triple>,
    pub label: bool,
    /// Per-claim truth labels. Empty when unknown (e.g. prediction inputs).
    pub claim_labels: Vec<bool>,
}

impl Statement {
    pub fn n_claims(&self) -> usize {
        self.claims.len()
    }

    /// Checks the structural invariants: at least one claim, label arrays in
    /// sync, and statement label consistent with the claim labels.
    pub fn validate(&self) -> Result<()> {
        if self.claims.is_empty() {
            return Err(LescError::EmptyStatement);
        }
        if self.claim_labels.is_empty() {
            return Ok(());
        }
        if self.claim_labels.len() != self.claims.len() {
            return Err(LescError::InvalidConfig(format!(
                "statement {}: {} claims but {} claim labels",
                self.id,
                self.claims.len(),
                self.claim_labels.len()
            )));
        }
        let all_true = self.claim_labels.iter().all(|&l| l);
        if self.label && !all_true {
            return Err(LescError::InvalidConfig(format!(
                "statement {}: true label with a false claim",
                self.id
            )));
        }
        if !self.label && all_true {
            return Err(LescError::InvalidConfig(format!(
                "statement {}: false label without any false claim",
                self.id
            )));
        }
        Ok(())
    }
}

/// Bounds for the random-walk generator: one to four steps per walk and one
/// to three walks per statement by default.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WalkConfig {
    pub min_steps: usize,
    pub max_steps: usize,
    pub min_walks: usize,
    pub max_walks: usize,
    pub max_claims: usize,
    /// Walk seeds; defaults to every entity in the graph.
    pub seed_entities: Option<Vec<EntityId>>,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            min_steps: 1,
            max_steps: 4,
            min_walks: 1,
            max_walks: 3,
            max_claims: 12,
            seed_entities: None,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_steps == 0 || self.min_steps > self.max_steps {
            return Err(LescError::InvalidConfig("need 1 <= min_steps <= max_steps".into()));
        }
        if self.min_walks == 0 || self.min_walks > self.max_walks {
            return Err(LescError::InvalidConfig("need 1 <= min_walks <= max_walks".into()));
        }
        if self.max_claims == 0 {
            return Err(LescError::InvalidConfig("max_claims must be positive".into()));
        }
        Ok(())
    }
}

const SEED_RETRIES: usize = 64;

/// Samples a true statement: the first walk starts at a seed entity, later
/// walks restart from an entity already visited so the claims share
/// entities. Dead ends truncate a walk; a statement is retried until it has
/// at least one claim.
pub fn sample_statement(
    kg: &KnowledgeGraph,
    cfg: &WalkConfig,
    rng: &mut impl Rng,
) -> Result<Statement> {
    cfg.validate()?;
    if kg.n_entities() == 0 {
        return Err(LescError::EmptyGraph);
    }

    for _ in 0..SEED_RETRIES {
        let seed = match &cfg.seed_entities {
            Some(seeds) if seeds.is_empty() => {
                return Err(LescError::InvalidConfig("seed_entities is empty".into()))
            }
            Some(seeds) => seeds[rng.random_range(0..seeds.len())],
            None => rng.random_range(0..kg.n_entities() as u32),
        };
        if kg.neighbors(seed)?.is_empty() {
            continue;
        }

        let walk_count = rng.random_range(cfg.min_walks..=cfg.max_walks);
        let mut claims: Vec<Triple> = Vec::new();
        let mut visited: Vec<EntityId> = vec![seed];

        'walks: for w in 0..walk_count {
            if claims.len() >= cfg.max_claims {
                break;
            }
            let start = if w == 0 {
                seed
            } else {
                // Restart from a visited entity that still has outgoing edges.
                let usable: Vec<EntityId> = visited
                    .iter()
                    .copied()
                    .filter(|&e| !kg.neighbors(e).map(|n| n.is_empty()).unwrap_or(true))
                    .collect();
                if usable.is_empty() {
                    break 'walks;
                }
                usable[rng.random_range(0..usable.len())]
            };
            let steps = rng.random_range(cfg.min_steps..=cfg.max_steps);
            let mut cur = start;
            for _ in 0..steps {
                if claims.len() >= cfg.max_claims {
                    break;
                }
                let nbrs = kg.neighbors(cur)?;
                if nbrs.is_empty() {
                    break; // dead end: truncate this walk
                }
                let (rel, tail) = nbrs[rng.random_range(0..nbrs.len())];
                claims.push(Triple::new(cur, rel, tail));
                if !visited.contains(&tail) {
                    visited.push(tail);
                }
                cur = tail;
            }
        }

        if claims.is_empty() {
            continue;
        }
        let n = claims.len();
        return Ok(Statement {
            id: String::new(),
            claims,
            label: true,
            claim_labels: vec![true; n],
        });
    }
    Err(LescError::WalkFailed(format!(
        "no usable walk seed after {SEED_RETRIES} attempts"
    )))
}

/// Negates a true statement by corrupting exactly one uniformly chosen claim.
pub fn negate_statement(
    kg: &KnowledgeGraph,
    s: &Statement,
    rng: &mut impl Rng,
) -> Result<Statement> {
    negate_statement_multi(kg, s, 1, rng)
}

/// Negates a true statement by corrupting `count` distinct claims.
pub fn negate_statement_multi(
    kg: &KnowledgeGraph,
    s: &Statement,
    count: usize,
    rng: &mut impl Rng,
) -> Result<Statement> {
    if !s.label {
        return Err(LescError::InvalidConfig("can only negate a true statement".into()));
    }
    let n = s.claims.len();
    if count == 0 || count > n {
        return Err(LescError::InvalidConfig(format!(
            "corruption count {count} out of range for {n} claims"
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(rng);
    indices.truncate(count);

    let mut out = s.clone();
    out.label = false;
    out.claim_labels = vec![true; n];
    for i in indices {
        out.claims[i] = kg.corrupt_triple(&s.claims[i], rng)?;
        out.claim_labels[i] = false;
    }
    Ok(out)
}

/// Negates a true statement with an implicit-composition corruption: a
/// two-step chain `(a, r1, b), (b, r2, c)` among the claims is collapsed to
/// the shortcut `(a, r2, c)`, which replaces the chain's second claim when
/// that shortcut is absent from the graph. The corrupted claim keeps both of
/// its entities adjacent to the rest of the statement, making it much harder
/// for per-claim scorers than a uniform corruption.
///
/// Falls back to [`negate_statement`] when the statement has no usable chain.
pub fn negate_statement_composition(
    kg: &KnowledgeGraph,
    s: &Statement,
    rng: &mut impl Rng,
) -> Result<Statement> {
    if !s.label {
        return Err(LescError::InvalidConfig("can only negate a true statement".into()));
    }
    let mut candidates: Vec<(usize, Triple)> = Vec::new();
    for i in 0..s.claims.len() {
        for j in 0..s.claims.len() {
            if i == j || s.claims[i].tail != s.claims[j].head {
                continue;
            }
            let shortcut = Triple::new(s.claims[i].head, s.claims[j].relation, s.claims[j].tail);
            if !kg.contains(&shortcut) {
                candidates.push((j, shortcut));
            }
        }
    }
    if candidates.is_empty() {
        return negate_statement(kg, s, rng);
    }
    let (j, shortcut) = candidates[rng.random_range(0..candidates.len())];
    let mut out = s.clone();
    out.label = false;
    out.claims[j] = shortcut;
    out.claim_labels = vec![true; s.claims.len()];
    out.claim_labels[j] = false;
    Ok(out)
}

/// Corpus-level generation settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub count: usize,
    /// Fraction of statements negated (Bernoulli per statement).
    pub neg_fraction: f64,
    /// Fraction of negatives that use the implicit-composition corruption.
    pub composition_fraction: f64,
    /// Corrupted claims per plain negative.
    pub corruptions: usize,
    pub walk: WalkConfig,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            count: 1000,
            neg_fraction: 0.5,
            composition_fraction: 0.5,
            corruptions: 1,
            walk: WalkConfig::default(),
        }
    }
}

/// Generates a corpus of `cfg.count` statements with sequential ids.
/// Deterministic given (kg, cfg, rng seed).
pub fn generate_corpus(
    kg: &KnowledgeGraph,
    cfg: &GenerateConfig,
    rng: &mut impl Rng,
) -> Result<Vec<Statement>> {
    if !(0.0..=1.0).contains(&cfg.neg_fraction) || !(0.0..=1.0).contains(&cfg.composition_fraction) {
        return Err(LescError::InvalidConfig("fractions must lie in [0, 1]".into()));
    }
    let mut out = Vec::with_capacity(cfg.count);
    for i in 0..cfg.count {
        let mut s = sample_statement(kg, &cfg.walk, rng)?;
        if rng.random_bool(cfg.neg_fraction) {
            s = if rng.random_bool(cfg.composition_fraction) {
                negate_statement_composition(kg, &s, rng)?
            } else {
                negate_statement_multi(kg, &s, cfg.corruptions.min(s.claims.len()), rng)?
            };
        }
        s.id = format!("s{i:06}");
        out.push(s);
    }
    Ok(out)
}

/// Shuffles and partitions a corpus into train/valid/test with sizes within
/// one statement of the exact proportions (largest-remainder rounding).
pub fn split_corpus(
    mut statements: Vec<Statement>,
    ratios: (f64, f64, f64),
    rng: &mut impl Rng,
) -> Result<(Vec<Statement>, Vec<Statement>, Vec<Statement>)> {
    let (a, b, c) = ratios;
    if a <= 0.0 || b <= 0.0 || c <= 0.0 {
        return Err(LescError::InvalidConfig("split ratios must be positive".into()));
    }
    if (a + b + c - 1.0).abs() > 1e-9 {
        return Err(LescError::InvalidConfig("split ratios must sum to 1".into()));
    }
    if statements.len() < 3 {
        return Err(LescError::CorpusTooSmall(statements.len()));
    }
    statements.shuffle(rng);

    let n = statements.len();
    let raw = [a * n as f64, b * n as f64, c * n as f64];
    let mut sizes: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&x, &y| {
        let fx = raw[x] - raw[x].floor();
        let fy = raw[y] - raw[y].floor();
        fy.partial_cmp(&fx).unwrap().then(x.cmp(&y))
    });
    let mut leftover = n - sizes.iter().sum::<usize>();
    for &i in &order {
        if leftover == 0 {
            break;
        }
        sizes[i] += 1;
        leftover -= 1;
    }

    let test = statements.split_off(sizes[0] + sizes[1]);
    let valid = statements.split_off(sizes[0]);
    Ok((statements, valid, test))
}

#[derive(Serialize, Deserialize)]
struct StatementRecord {
    id: String,
    claims: Vec<[String; 3]>,
    label: u8,
    #[serde(default)]
    claim_labels: Vec<u8>,
}

/// Writes a corpus as JSON-lines keyed by vocabulary names.
pub fn write_corpus(kg: &KnowledgeGraph, statements: &[Statement], path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for s in statements {
        let record = StatementRecord {
            id: s.id.clone(),
            claims: s
                .claims
                .iter()
                .map(|t| {
                    [
                        kg.entity_name(t.head).to_string(),
                        kg.relation_name(t.relation).to_string(),
                        kg.entity_name(t.tail).to_string(),
                    ]
                })
                .collect(),
            label: s.label as u8,
            claim_labels: s.claim_labels.iter().map(|&l| l as u8).collect(),
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a JSON-lines corpus, resolving names against the graph vocabularies
/// and validating the label invariants.
pub fn read_corpus(kg: &KnowledgeGraph, path: impl AsRef<Path>) -> Result<Vec<Statement>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: StatementRecord = serde_json::from_str(&line).map_err(|e| LescError::Parse {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        let statement = statement_from_record(kg, record)?;
        statement.validate()?;
        out.push(statement);
    }
    Ok(out)
}

/// Parses a single statement object (the `predict` input format).
pub fn statement_from_json(kg: &KnowledgeGraph, text: &str) -> Result<Statement> {
    let record: StatementRecord = serde_json::from_str(text)?;
    let statement = statement_from_record(kg, record)?;
    if statement.claims.is_empty() {
        return Err(LescError::EmptyStatement);
    }
    Ok(statement)
}

fn statement_from_record(kg: &KnowledgeGraph, record: StatementRecord) -> Result<Statement> {
    let claims = record
        .claims
        .iter()
        .map(|[h, r, t]| kg.resolve(h, r, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(Statement {
        id: record.id,
        claims,
        label: record.label != 0,
        claim_labels: record.claim_labels.iter().map(|&l| l != 0).collect(),
    })
}
