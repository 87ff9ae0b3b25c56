//! Knowledge graph storage: vocabularies, triples, attribute-neighbor index,
//! and triple corruption for negative sampling.
//!
//! Triple files are UTF-8 with one `head⟨TAB⟩relation⟨TAB⟩tail` per line;
//! lines starting with `#` are ignored. The same format covers FB15K-style
//! benchmark dumps and synthetic graphs.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{LescError, Result};

pub type EntityId = u32;
pub type RelationId = u32;

/// A (head, relation, tail) assertion, all ids resolved against one graph's
/// vocabularies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Triple { head, relation, tail }
    }
}

const MAX_CORRUPTION_ATTEMPTS: usize = 100;

/// Immutable after load; safe to share across worker threads.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entities: Vec<String>,
    relations: Vec<String>,
    entity_ids: HashMap<String, EntityId>,
    relation_ids: HashMap<String, RelationId>,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
    neighbor_index: Vec<Vec<(RelationId, EntityId)>>,
}

impl KnowledgeGraph {
    /// Loads a TAB-separated triple file. Vocabulary ids are assigned in
    /// first-appearance order; duplicate triples are dropped.
    pub fn load_triples(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path)?;
        Self::from_reader(BufReader::new(file))
    }

    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        let mut builder = Builder::default();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
                return Err(LescError::Parse {
                    line: idx + 1,
                    msg: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            builder.push(fields[0], fields[1], fields[2]);
        }
        builder.finish()
    }

    /// Builds a graph directly from named triples (tests, synthetic graphs).
    pub fn from_named_triples<S: AsRef<str>>(triples: impl IntoIterator<Item = (S, S, S)>) -> Result<Self> {
        let mut builder = Builder::default();
        for (h, r, t) in triples {
            builder.push(h.as_ref(), r.as_ref(), t.as_ref());
        }
        builder.finish()
    }

    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn n_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn n_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn relations(&self) -> &[String] {
        &self.relations
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entity_ids.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relation_ids.get(name).copied()
    }

    pub fn entity_name(&self, id: EntityId) -> &str {
        &self.entities[id as usize]
    }

    pub fn relation_name(&self, id: RelationId) -> &str {
        &self.relations[id as usize]
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triple_set.contains(t)
    }

    /// Attribute neighbors of `e`: the (relation, tail) pairs of triples
    /// headed at `e`, in triple insertion order. Empty for sink entities.
    pub fn neighbors(&self, e: EntityId) -> Result<&[(RelationId, EntityId)]> {
        self.neighbor_index
            .get(e as usize)
            .map(Vec::as_slice)
            .ok_or_else(|| LescError::UnknownEntity(format!("id {e}")))
    }

    /// Replaces the head or the tail (fair coin) with a uniformly drawn
    /// entity until the result is absent from the graph. Fails once the
    /// retry budget is exhausted, which only happens on near-complete graphs.
    pub fn corrupt_triple(&self, t: &Triple, rng: &mut impl Rng) -> Result<Triple> {
        if self.entities.is_empty() {
            return Err(LescError::EmptyGraph);
        }
        let n = self.entities.len() as u32;
        for _ in 0..MAX_CORRUPTION_ATTEMPTS {
            let mut candidate = *t;
            let replacement = rng.random_range(0..n);
            if rng.random_bool(0.5) {
                if replacement == t.head {
                    continue;
                }
                candidate.head = replacement;
            } else {
                if replacement == t.tail {
                    continue;
                }
                candidate.tail = replacement;
            }
            if !self.contains(&candidate) {
                return Ok(candidate);
            }
        }
        Err(LescError::CorruptionExhausted(MAX_CORRUPTION_ATTEMPTS))
    }

    /// Writes the graph back as a triple file (insertion order), so a
    /// load/write/load round trip preserves vocabularies and triples.
    pub fn write_triples(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for t in &self.triples {
            writeln!(
                out,
                "{}\t{}\t{}",
                self.entity_name(t.head),
                self.relation_name(t.relation),
                self.entity_name(t.tail)
            )?;
        }
        out.flush()?;
        Ok(())
    }

    /// Hash over both vocabularies, used to detect stale embedding or
    /// checkpoint artifacts.
    pub fn vocab_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for name in &self.entities {
            hasher.update(name.as_bytes());
            hasher.update([0x1e]);
        }
        hasher.update([0x1f]);
        for name in &self.relations {
            hasher.update(name.as_bytes());
            hasher.update([0x1e]);
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Resolves a named triple against the vocabularies.
    pub fn resolve(&self, head: &str, relation: &str, tail: &str) -> Result<Triple> {
        let head = self
            .entity_id(head)
            .ok_or_else(|| LescError::UnknownEntity(head.to_string()))?;
        let relation = self
            .relation_id(relation)
            .ok_or_else(|| LescError::UnknownRelation(relation.to_string()))?;
        let tail = self
            .entity_id(tail)
            .ok_or_else(|| LescError::UnknownEntity(tail.to_string()))?;
        Ok(Triple::new(head, relation, tail))
    }
}

#[derive(Default)]
struct Builder {
    entities: Vec<String>,
    relations: Vec<String>,
    entity_ids: HashMap<String, EntityId>,
    relation_ids: HashMap<String, RelationId>,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
}

impl Builder {
    fn intern_entity(&mut self, name: &str) -> EntityId {
        if let Some(&id) = self.entity_ids.get(name) {
            return id;
        }
        let id = self.entities.len() as EntityId;
        self.entities.push(name.to_string());
        self.entity_ids.insert(name.to_string(), id);
        id
    }

    fn intern_relation(&mut self, name: &str) -> RelationId {
        if let Some(&id) = self.relation_ids.get(name) {
            return id;
        }
        let id = self.relations.len() as RelationId;
        self.relations.push(name.to_string());
        self.relation_ids.insert(name.to_string(), id);
        id
    }

    fn push(&mut self, head: &str, relation: &str, tail: &str) {
        let triple = Triple {
            head: self.intern_entity(head),
            relation: self.intern_relation(relation),
            tail: self.intern_entity(tail),
        };
        if self.triple_set.insert(triple) {
            self.triples.push(triple);
        }
    }

    fn finish(self) -> Result<KnowledgeGraph> {
        if self.triples.is_empty() {
            return Err(LescError::EmptyGraph);
        }
        let mut neighbor_index = vec![Vec::new(); self.entities.len()];
        for t in &self.triples {
            neighbor_index[t.head as usize].push((t.relation, t.tail));
        }
        Ok(KnowledgeGraph {
            entities: self.entities,
            relations: self.relations,
            entity_ids: self.entity_ids,
            relation_ids: self.relation_ids,
            triples: self.triples,
            triple_set: self.triple_set,
            neighbor_index,
        })
    }
}
