#![allow(dead_code)]

use std::path::PathBuf;

use dentalscan::weights::{load_raw_tensor, load_weights, write_weights};
use dentalscan::zoo::{synthetic_weights, Architecture};
use dentalscan::{Tensor, WeightStore};
use sha2::{Digest, Sha256};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub struct Fixtures {
    pub seed: u64,
    pub inputs: Vec<Tensor>,
    manifest: serde_json::Value,
}

impl Fixtures {
    pub fn load() -> Fixtures {
        let dir = fixtures_dir();
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
        let count = manifest["count"].as_u64().unwrap() as usize;
        let inputs = (0..count)
            .map(|i| load_raw_tensor(dir.join(format!("inputs/input_{i}.tkrt"))).unwrap())
            .collect();
        Fixtures {
            seed: manifest["seed"].as_u64().unwrap(),
            inputs,
            manifest,
        }
    }

    pub fn weights_sha256(&self, arch: Architecture) -> String {
        self.manifest["architectures"][arch.id()]["weights_sha256"]
            .as_str()
            .unwrap()
            .to_string()
    }

    /// `(features N x 1000, logits N x 2)` recorded by the reference framework.
    pub fn expected(&self, arch: Architecture) -> (Tensor, Tensor) {
        let store = load_weights(fixtures_dir().join(format!("{}.expected.tkws", arch.id()))).unwrap();
        (
            store.require("features").unwrap().clone(),
            store.require("logits").unwrap().clone(),
        )
    }

    pub fn weights(&self, arch: Architecture) -> WeightStore {
        synthetic_weights(arch, self.seed).unwrap()
    }
}

pub fn sha256_of_store(store: &WeightStore) -> String {
    let mut bytes = Vec::new();
    write_weights(store, &mut bytes).unwrap();
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}
