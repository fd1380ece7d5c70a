//! Paired, window-shuffled training streams.
//!
//! Both members of a pair see the same underlying example sequence, fixed by
//! the pair's data seed. The sequence is cut into windows of `z * s`
//! examples and each model permutes every window with its own shuffle seed,
//! so the two members train on the same multiset in different orders.
//! Windows are generated lazily; at most one window is held in memory.

use std::sync::Arc;

use rand::seq::SliceRandom;

use crate::datagen::{Example, Truth};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, derived_stream, Purpose, StreamRng};

pub const DEFAULT_BATCH: usize = 32;
pub const DESK_EXAMPLES: u64 = 1 << 20;
pub const FULL_EXAMPLES: u64 = 1 << 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamConfig {
    pub total_examples: u64,
    pub batch_size: usize,
    /// Window size in mini-batches is `2^log2_z`.
    pub log2_z: u32,
    pub master_seed: u64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            total_examples: DESK_EXAMPLES,
            batch_size: DEFAULT_BATCH,
            log2_z: 0,
            master_seed: 0,
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_examples == 0 {
            return Err(Error::invalid("stream.examples", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("stream.batch_size", "must be positive"));
        }
        if self.log2_z > 40 {
            return Err(Error::invalid("stream.log2_z", "at most 40"));
        }
        Ok(())
    }

    pub fn window_batches(&self) -> u64 {
        1u64 << self.log2_z
    }

    /// Examples per shuffling window, `z * s`.
    pub fn window_len(&self) -> u64 {
        self.window_batches().saturating_mul(self.batch_size as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InitMode {
    Identical,
    Distinct,
}

impl InitMode {
    pub fn as_str(self) -> &'static str {
        match self {
            InitMode::Identical => "identical",
            InitMode::Distinct => "distinct",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "identical" => Some(InitMode::Identical),
            "distinct" => Some(InitMode::Distinct),
            _ => None,
        }
    }
}

/// Every seed one pair needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PairSeeds {
    pub data_seed: u64,
    pub init_seed_a: u64,
    pub init_seed_b: u64,
    pub shuffle_seed_a: u64,
    pub shuffle_seed_b: u64,
    pub emul_seed_a: u64,
    pub emul_seed_b: u64,
}

pub fn derive_pair_seeds(master_seed: u64, pair_index: u64, init_mode: InitMode) -> PairSeeds {
    let d = |p| derive_seed(master_seed, p, pair_index);
    let init_seed_a = d(Purpose::InitA);
    PairSeeds {
        data_seed: d(Purpose::Data),
        init_seed_a,
        init_seed_b: match init_mode {
            InitMode::Identical => init_seed_a,
            InitMode::Distinct => d(Purpose::InitB),
        },
        shuffle_seed_a: d(Purpose::ShuffleA),
        shuffle_seed_b: d(Purpose::ShuffleB),
        emul_seed_a: d(Purpose::EmulA),
        emul_seed_b: d(Purpose::EmulB),
    }
}

/// Uniform random permutation of `0..window_len` for one window.
pub fn permutation_for_window(shuffle_seed: u64, window_index: u64, window_len: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..window_len).collect();
    if window_len > 1 {
        let mut rng = derived_stream(shuffle_seed, Purpose::Window, window_index);
        perm.shuffle(&mut rng);
    }
    perm
}

/// Source of the common example sequence for a data seed.
pub fn example_rng(data_seed: u64) -> StreamRng {
    derived_stream(data_seed, Purpose::Examples, 0)
}

/// Iterator over the mini-batches one model receives.
///
/// With `z = 1` the window is a single mini-batch whose membership is fixed,
/// and it is delivered in sequence order; ordering inside a mini-batch is
/// only perturbed by the trainer's accumulation-order emulation.
pub struct WindowedStream {
    cfg: StreamConfig,
    truth: Arc<Truth>,
    rng: StreamRng,
    shuffle_seed: u64,
    produced: u64,
    window_index: u64,
    window: Vec<Example>,
    cursor: usize,
}

impl WindowedStream {
    pub fn new(cfg: StreamConfig, data_seed: u64, shuffle_seed: u64, truth: Arc<Truth>) -> Self {
        WindowedStream {
            cfg,
            truth,
            rng: example_rng(data_seed),
            shuffle_seed,
            produced: 0,
            window_index: 0,
            window: Vec::new(),
            cursor: 0,
        }
    }

    fn refill(&mut self) -> bool {
        let remaining = self.cfg.total_examples - self.produced;
        if remaining == 0 {
            return false;
        }
        let len = self.cfg.window_len().min(remaining) as usize;
        let mut fresh = Vec::with_capacity(len);
        for _ in 0..len {
            fresh.push(self.truth.sample_example(&mut self.rng));
        }
        self.window = if self.cfg.log2_z == 0 {
            fresh
        } else {
            permutation_for_window(self.shuffle_seed, self.window_index, len)
                .into_iter()
                .map(|i| fresh[i])
                .collect()
        };
        self.produced += len as u64;
        self.window_index += 1;
        self.cursor = 0;
        true
    }

    pub fn windows_started(&self) -> u64 {
        self.window_index
    }
}

impl Iterator for WindowedStream {
    type Item = Vec<Example>;

    fn next(&mut self) -> Option<Vec<Example>> {
        if self.cursor >= self.window.len() && !self.refill() {
            return None;
        }
        let end = (self.cursor + self.cfg.batch_size).min(self.window.len());
        let batch = self.window[self.cursor..end].to_vec();
        self.cursor = end;
        Some(batch)
    }
}

pub fn windowed_stream(
    cfg: StreamConfig,
    data_seed: u64,
    shuffle_seed: u64,
    truth: Arc<Truth>,
) -> WindowedStream {
    WindowedStream::new(cfg, data_seed, shuffle_seed, truth)
}
