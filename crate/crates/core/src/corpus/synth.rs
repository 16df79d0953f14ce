//! Synthetic corpora with a planted, learnable signal.
//!
//! Vocabulary layout for `K` relations and `E` entities:
//!
//! | ids                     | use                                          |
//! |-------------------------|----------------------------------------------|
//! | `0 .. 2K`               | trigger bigram of relation `k`: `2k, 2k + 1` |
//! | `2K .. 4K`              | unseen paraphrase bigrams (test split only)  |
//! | `4K .. 4K + E`          | one mention token per entity                 |
//! | `4K + E .. vocab_size`  | filler words                                 |
//!
//! A rationale sentence for `k` contains both mentions and `k`'s bigram; an
//! irrelevant sentence contains both mentions and filler only. Entity `e` has
//! FGET type `e % num_fget`, and relation `k` links entities of types
//! `(k / 2, k / 2 + 1) mod num_fget`, so pairs of relations share a type
//! signature and can only be told apart by the text.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Bag, CorpusError, Inventory, RelationId, Result, Sentence, Span, TokenId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub num_relations: usize,
    pub vocab_size: usize,
    pub num_fget: usize,
    pub num_entities: usize,
    pub train_bags: usize,
    pub test_bags: usize,
    /// Fraction of bags with no relation.
    pub negative_bag_rate: f64,
    pub min_sentences: usize,
    pub max_sentences: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// Per-sentence probability that a sentence of a positive bag carries no
    /// evidence. Every labeled relation still gets at least one rationale.
    pub irrelevant_rate: f64,
    /// Probability that a positive bag carries a second relation sharing the
    /// first one's type signature.
    pub multi_label_rate: f64,
    /// Probability that a test rationale uses its relation's paraphrase
    /// bigram, which never occurs in training.
    pub unseen_trigger_rate: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            num_relations: 5,
            vocab_size: 2000,
            num_fget: 6,
            num_entities: 600,
            train_bags: 4000,
            test_bags: 800,
            negative_bag_rate: 0.5,
            min_sentences: 1,
            max_sentences: 5,
            min_tokens: 8,
            max_tokens: 16,
            irrelevant_rate: 0.4,
            multi_label_rate: 0.1,
            unseen_trigger_rate: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub train: Vec<Bag>,
    pub test: Vec<Bag>,
    pub inventory: Inventory,
}

const MIN_FILLER: usize = 8;

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(CorpusError::Config(m.to_string()));
        if self.num_relations == 0 {
            return fail("num_relations must be positive");
        }
        if self.num_fget == 0 {
            return fail("num_fget must be positive");
        }
        if self.num_entities < 2 * self.num_fget {
            return fail("num_entities must be at least 2 * num_fget");
        }
        if self.vocab_size < self.filler_start() + MIN_FILLER {
            return fail(&format!(
                "vocab_size must be at least {}",
                self.filler_start() + MIN_FILLER
            ));
        }
        if self.min_sentences == 0 || self.min_sentences > self.max_sentences {
            return fail("need 1 <= min_sentences <= max_sentences");
        }
        if self.min_tokens < 4 || self.min_tokens > self.max_tokens {
            return fail("need 4 <= min_tokens <= max_tokens");
        }
        for (name, rate) in [
            ("negative_bag_rate", self.negative_bag_rate),
            ("irrelevant_rate", self.irrelevant_rate),
            ("multi_label_rate", self.multi_label_rate),
            ("unseen_trigger_rate", self.unseen_trigger_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return fail(&format!("{name} must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn inventory(&self) -> Inventory {
        Inventory {
            vocab_size: self.vocab_size,
            num_fget: self.num_fget,
            num_relations: self.num_relations,
            num_entities: self.num_entities,
        }
    }

    pub fn trigger(&self, k: RelationId) -> [TokenId; 2] {
        [(2 * k) as TokenId, (2 * k + 1) as TokenId]
    }

    pub fn unseen_trigger(&self, k: RelationId) -> [TokenId; 2] {
        let base = 2 * self.num_relations + 2 * k;
        [base as TokenId, (base + 1) as TokenId]
    }

    pub fn mention_token(&self, entity: usize) -> TokenId {
        (4 * self.num_relations + entity) as TokenId
    }

    fn filler_start(&self) -> usize {
        4 * self.num_relations + self.num_entities
    }

    pub fn type_signature(&self, k: RelationId) -> (usize, usize) {
        ((k / 2) % self.num_fget, (k / 2 + 1) % self.num_fget)
    }

    pub fn entity_type(&self, entity: usize) -> usize {
        entity % self.num_fget
    }
}

#[derive(Clone, Copy)]
enum Role {
    Rationale(RelationId),
    Irrelevant,
}

struct Generator<'a> {
    cfg: &'a GenConfig,
    rng: ChaCha8Rng,
    used_pairs: HashSet<(usize, usize)>,
    next_id: u64,
}

impl Generator<'_> {
    fn entity_of_type(&mut self, t: usize) -> usize {
        let per_type = (self.cfg.num_entities - t).div_ceil(self.cfg.num_fget);
        t + self.cfg.num_fget * self.rng.gen_range(0..per_type)
    }

    fn fresh_pair(&mut self, types: Option<(usize, usize)>) -> Result<(usize, usize)> {
        for _ in 0..10_000 {
            let (a, b) = match types {
                Some((ti, tj)) => (self.entity_of_type(ti), self.entity_of_type(tj)),
                None => (
                    self.rng.gen_range(0..self.cfg.num_entities),
                    self.rng.gen_range(0..self.cfg.num_entities),
                ),
            };
            if a != b && self.used_pairs.insert((a, b)) {
                return Ok((a, b));
            }
        }
        Err(CorpusError::Config(
            "ran out of distinct entity pairs; raise num_entities".into(),
        ))
    }

    fn filler(&mut self) -> TokenId {
        self.rng.gen_range(self.cfg.filler_start()..self.cfg.vocab_size) as TokenId
    }

    fn sentence(&mut self, pair: (usize, usize), role: Role, test_split: bool) -> Sentence {
        let len = self.rng.gen_range(self.cfg.min_tokens..=self.cfg.max_tokens);
        let mut tokens: Vec<TokenId> = (0..len).map(|_| self.filler()).collect();
        let mut free: Vec<usize> = (0..len).collect();
        let rationale_for = match role {
            Role::Rationale(k) => {
                let start = self.rng.gen_range(0..len - 1);
                let unseen = test_split && self.rng.gen_bool(self.cfg.unseen_trigger_rate);
                let bigram = if unseen {
                    self.cfg.unseen_trigger(k)
                } else {
                    self.cfg.trigger(k)
                };
                tokens[start] = bigram[0];
                tokens[start + 1] = bigram[1];
                free.retain(|&p| p != start && p != start + 1);
                vec![k]
            }
            Role::Irrelevant => vec![],
        };
        free.shuffle(&mut self.rng);
        let (pi, pj) = (free[0], free[1]);
        tokens[pi] = self.cfg.mention_token(pair.0);
        tokens[pj] = self.cfg.mention_token(pair.1);
        Sentence {
            tokens,
            mention_i: Span(pi, pi + 1),
            mention_j: Span(pj, pj + 1),
            relevance_label: Some(!rationale_for.is_empty()),
            rationale_for: Some(rationale_for),
        }
    }

    fn bag(&mut self, test_split: bool) -> Result<Bag> {
        let cfg = self.cfg;
        let negative = self.rng.gen_bool(cfg.negative_bag_rate);
        let mut relations = Vec::new();
        let pair = if negative {
            self.fresh_pair(None)?
        } else {
            let k = self.rng.gen_range(0..cfg.num_relations);
            relations.push(k);
            if self.rng.gen_bool(cfg.multi_label_rate) {
                let sig = cfg.type_signature(k);
                let partners: Vec<usize> = (0..cfg.num_relations)
                    .filter(|&o| o != k && cfg.type_signature(o) == sig)
                    .collect();
                if let Some(&o) = partners.choose(&mut self.rng) {
                    relations.push(o);
                }
            }
            relations.sort_unstable();
            self.fresh_pair(Some(cfg.type_signature(k)))?
        };

        let n = self
            .rng
            .gen_range(cfg.min_sentences..=cfg.max_sentences)
            .max(relations.len());
        let mut roles: Vec<Role> = relations.iter().map(|&k| Role::Rationale(k)).collect();
        while roles.len() < n {
            let role = if negative || self.rng.gen_bool(cfg.irrelevant_rate) {
                Role::Irrelevant
            } else {
                Role::Rationale(*relations.choose(&mut self.rng).expect("positive bag"))
            };
            roles.push(role);
        }
        if negative {
            roles.truncate(n);
        }
        roles.shuffle(&mut self.rng);
        let sentences = roles
            .into_iter()
            .map(|role| self.sentence(pair, role, test_split))
            .collect();

        let bag_id = self.next_id;
        self.next_id += 1;
        Ok(Bag {
            bag_id,
            entity_i: pair.0,
            entity_j: pair.1,
            fget_i: cfg.entity_type(pair.0),
            fget_j: cfg.entity_type(pair.1),
            relations,
            sentences,
        })
    }
}

/// Generates train and test splits. Bag ids are unique across both splits
/// and the output is a pure function of `(config, seed)`.
pub fn generate_synthetic_corpus(config: &GenConfig, seed: u64) -> Result<SyntheticCorpus> {
    config.validate()?;
    let mut gen = Generator {
        cfg: config,
        rng: ChaCha8Rng::seed_from_u64(seed),
        used_pairs: HashSet::new(),
        next_id: 0,
    };
    let train = (0..config.train_bags)
        .map(|_| gen.bag(false))
        .collect::<Result<Vec<_>>>()?;
    let test = (0..config.test_bags)
        .map(|_| gen.bag(true))
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticCorpus {
        train,
        test,
        inventory: config.inventory(),
    })
}
