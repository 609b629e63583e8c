#![allow(dead_code)]

use privml_core::data::{gaussian_blobs, BlobConfig, Dataset};
use privml_core::nn::ModelSpec;
use privml_federation::TrainConfig;

pub fn blobs(examples: usize, dim: usize, seed: u64) -> Dataset {
    gaussian_blobs(&BlobConfig {
        examples,
        dim,
        classes: 2,
        separation: 2.5,
        seed,
    })
    .unwrap()
}

pub fn shards(ds: &Dataset, parts: usize) -> Vec<(u32, Dataset)> {
    ds.shard(parts).into_iter().enumerate().map(|(i, s)| (i as u32, s)).collect()
}

pub fn small_config(dataset_size: usize, chunk_examples: usize) -> TrainConfig {
    TrainConfig {
        spec: ModelSpec::mlp(6, &[8], 2),
        epochs: 2,
        dataset_size,
        chunk_examples,
        learning_rate: 0.5,
        clip_bound: 1.0,
        epsilon: 4.0,
        delta: 1e-5,
        dp: true,
        oblivious: true,
        seed: 11,
        micro_batch: None,
        timeout_seconds: 30.0,
        scrub_magnitude: 1e-10,
    }
}
