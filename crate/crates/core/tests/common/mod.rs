#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use relex::corpus::{Inventory, ReprMode};
use relex::encoder::EncoderConfig;
use relex::models::{ModelConfig, ModelKind};

pub fn tiny_config(kind: ModelKind, fusion: bool) -> ModelConfig {
    let inventory = Inventory {
        vocab_size: 12,
        num_fget: 2,
        num_relations: 3,
        num_entities: 4,
    };
    let mut c = ModelConfig::new(kind, ReprMode::Raw, fusion, inventory);
    c.entity_dim = 3;
    c.encoder = EncoderConfig {
        word_dim: 4,
        position_dim: 2,
        widths: vec![2, 3],
        channels: 3,
        init_std: 0.5,
        ..EncoderConfig::default()
    };
    c
}

pub fn random_encodings(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}
