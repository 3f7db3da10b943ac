//! Numeric defaults and the run configuration that every output is keyed by.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Every numeric default of the command line, in one place.
pub mod defaults {
    /// Quasi-momentum grid size (power of two).
    pub const GRID: usize = 1024;
    /// Imaginary shift of the grid for `jost`.
    pub const DELTA: f64 = 0.0;
    /// Sites added on each side of the coin support for `jost` tables.
    pub const WINDOW_MARGIN: i64 = 2;
    /// Seed of the ChaCha8 stream behind random initial states.
    pub const SEED: u64 = 20_240_917;
    /// Random initial states are supported on `[-RANDOM_RADIUS, RANDOM_RADIUS]`.
    pub const RANDOM_RADIUS: i64 = 8;
    /// Largest time of the default decay schedule.
    pub const TMAX: usize = 2842;
    /// Tolerance on `| |t|^2 + |r|^2 - 1 |` before `scattering` exits with 3.
    pub const UNITARITY_TOL: f64 = 1e-8;
    /// Default cache directory, relative to the working directory.
    pub const CACHE_DIR: &str = ".qwalk-cache";
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// What a run depends on. Output paths, thread counts and logging do not
/// change results and are left out.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    pub version: &'static str,
    pub seed: u64,
    /// Canonical form of the profile or input document, if any.
    pub input: Option<Value>,
    pub knobs: BTreeMap<&'static str, Value>,
}

impl RunConfig {
    pub fn new(command: &'static str, seed: u64) -> Self {
        RunConfig {
            command,
            version: VERSION,
            seed,
            input: None,
            knobs: BTreeMap::new(),
        }
    }

    pub fn input(mut self, v: Value) -> Self {
        self.input = Some(v);
        self
    }

    pub fn knob(mut self, name: &'static str, v: impl Serialize) -> Self {
        self.knobs
            .insert(name, serde_json::to_value(v).expect("plain data"));
        self
    }

    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("plain data"))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_order_independent_and_sensitive() {
        let a = RunConfig::new("jost", 1)
            .knob("grid", 64)
            .knob("delta", 0.0);
        let b = RunConfig::new("jost", 1)
            .knob("delta", 0.0)
            .knob("grid", 64);
        assert_eq!(a.hash(), b.hash());
        assert_ne!(
            a.hash(),
            RunConfig::new("jost", 2)
                .knob("grid", 64)
                .knob("delta", 0.0)
                .hash()
        );
        assert_ne!(
            a.hash(),
            RunConfig::new("jost", 1)
                .knob("grid", 128)
                .knob("delta", 0.0)
                .hash()
        );
        assert_eq!(a.hash().len(), 64);
    }
}
