//! Bags of sentences, the JSONL corpus format, mention representations,
//! expl-eval tuples and the synthetic corpus generator.
//!
//! A corpus file holds one bag per line:
//!
//! ```json
//! {"bag_id":0,"entity_i":3,"entity_j":7,"fget_i":0,"fget_j":1,"relations":[2],
//!  "sentences":[{"tokens":[12,40,5,9],"mention_i":[1,2],"mention_j":[3,4],
//!                "relevance_label":true,"rationale_for":[2]}]}
//! ```
//!
//! Mention spans are half-open token ranges `[start, end)`. All ids are
//! 0-based.

mod bags;
mod expl_eval;
mod repr;
mod synth;

pub use bags::{build_bags, SentenceRecord};
pub use expl_eval::{build_expl_eval, ExplEvalTuple};
pub use repr::{apply_repr_mode, fget_token, replace_mentions, EncodedSentence, ReprMode};
pub use synth::{generate_synthetic_corpus, GenConfig, SyntheticCorpus};

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type TokenId = u32;
pub type RelationId = usize;
pub type EntityId = usize;
pub type FgetId = usize;
pub type BagId = u64;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("bag {bag_id}: {reason}")]
    Invalid { bag_id: BagId, reason: String },
    #[error("unknown FGET id {0}")]
    UnknownFget(FgetId),
    #[error("invalid generator config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// Half-open token range `[start, end)` of an entity mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span(pub usize, pub usize);

impl Span {
    pub fn start(self) -> usize {
        self.0
    }

    pub fn end(self) -> usize {
        self.1
    }

    pub fn len(self) -> usize {
        self.1.saturating_sub(self.0)
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }

    pub fn contains(self, idx: usize) -> bool {
        idx >= self.0 && idx < self.1
    }

    fn overlaps(self, other: Span) -> bool {
        self.0 < other.1 && other.0 < self.1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<TokenId>,
    pub mention_i: Span,
    pub mention_j: Span,
    /// Whether the sentence expresses any relation at all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance_label: Option<bool>,
    /// Relations this sentence is an annotated rationale for. `Some(vec![])`
    /// marks an annotated sentence that supports none of the bag's relations;
    /// `None` means unannotated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale_for: Option<Vec<RelationId>>,
}

impl Sentence {
    pub fn is_rationale_for(&self, k: RelationId) -> bool {
        self.rationale_for.as_ref().is_some_and(|r| r.contains(&k))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bag {
    pub bag_id: BagId,
    pub entity_i: EntityId,
    pub entity_j: EntityId,
    pub fget_i: FgetId,
    pub fget_j: FgetId,
    /// Knowledge-base relations for the entity pair; empty for negative bags.
    pub relations: Vec<RelationId>,
    pub sentences: Vec<Sentence>,
}

impl Bag {
    pub fn is_positive(&self) -> bool {
        !self.relations.is_empty()
    }

    pub fn has_relation(&self, k: RelationId) -> bool {
        self.relations.contains(&k)
    }

    pub fn fget_pair(&self) -> (FgetId, FgetId) {
        (self.fget_i, self.fget_j)
    }

    pub fn entities(&self) -> (EntityId, EntityId) {
        (self.entity_i, self.entity_j)
    }

    /// Sorts and deduplicates relation lists, then checks bag invariants.
    pub fn normalize_and_validate(&mut self) -> Result<()> {
        self.relations.sort_unstable();
        self.relations.dedup();
        let invalid = |reason: String| CorpusError::Invalid {
            bag_id: self.bag_id,
            reason,
        };
        if self.sentences.is_empty() {
            return Err(invalid("bag has no sentences".into()));
        }
        for (n, s) in self.sentences.iter_mut().enumerate() {
            let len = s.tokens.len();
            for (name, span) in [("mention_i", s.mention_i), ("mention_j", s.mention_j)] {
                if span.is_empty() || span.end() > len {
                    return Err(invalid(format!(
                        "sentence {n}: {name} span [{}, {}) out of bounds for {len} tokens",
                        span.start(),
                        span.end()
                    )));
                }
            }
            if s.mention_i.overlaps(s.mention_j) {
                return Err(invalid(format!("sentence {n}: mention spans overlap")));
            }
            if let Some(r) = s.rationale_for.as_mut() {
                r.sort_unstable();
                r.dedup();
                if let Some(k) = r.iter().find(|k| !self.relations.contains(k)) {
                    return Err(invalid(format!(
                        "sentence {n}: rationale for relation {k} not in bag relations"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Id ranges a model must cover. Token ids below `vocab_size` are words;
/// FGET tokens occupy `vocab_size..vocab_size + num_fget`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Inventory {
    pub vocab_size: usize,
    pub num_fget: usize,
    pub num_relations: usize,
    pub num_entities: usize,
}

impl Inventory {
    pub fn from_bags(bags: &[Bag]) -> Self {
        let mut inv = Inventory::default();
        for b in bags {
            inv.num_entities = inv.num_entities.max(b.entity_i.max(b.entity_j) + 1);
            inv.num_fget = inv.num_fget.max(b.fget_i.max(b.fget_j) + 1);
            if let Some(&k) = b.relations.iter().max() {
                inv.num_relations = inv.num_relations.max(k + 1);
            }
            for s in &b.sentences {
                if let Some(&t) = s.tokens.iter().max() {
                    inv.vocab_size = inv.vocab_size.max(t as usize + 1);
                }
            }
        }
        inv
    }

    /// Field-wise maximum.
    pub fn union(self, other: Inventory) -> Self {
        Inventory {
            vocab_size: self.vocab_size.max(other.vocab_size),
            num_fget: self.num_fget.max(other.num_fget),
            num_relations: self.num_relations.max(other.num_relations),
            num_entities: self.num_entities.max(other.num_entities),
        }
    }

    /// True when every id in `bags` fits inside this inventory.
    pub fn covers(&self, bags: &[Bag]) -> bool {
        let other = Inventory::from_bags(bags);
        self.union(other) == *self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub bags: Vec<Bag>,
    pub inventory: Inventory,
}

/// Parses JSONL from any reader, validating every bag.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Corpus> {
    let mut bags = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| CorpusError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut bag: Bag = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        bag.normalize_and_validate()?;
        if !seen.insert(bag.bag_id) {
            return Err(CorpusError::Invalid {
                bag_id: bag.bag_id,
                reason: "duplicate bag_id".into(),
            });
        }
        bags.push(bag);
    }
    let inventory = Inventory::from_bags(&bags);
    Ok(Corpus { bags, inventory })
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_corpus(BufReader::new(file))
}

pub fn write_corpus_to<W: Write>(mut w: W, bags: &[Bag]) -> std::io::Result<()> {
    for bag in bags {
        serde_json::to_writer(&mut w, bag)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_corpus(path: &Path, bags: &[Bag]) -> Result<()> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_corpus_to(BufWriter::new(file), bags).map_err(io_err)
}
