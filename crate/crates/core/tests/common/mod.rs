#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use fegap_core::data::PairedGapObservation;
use fegap_core::normal::inverse_normal_cdf;
use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn uniform(&mut self) -> f64 {
        ((self.0.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    pub fn normal(&mut self) -> f64 {
        inverse_normal_cdf(self.uniform()).unwrap()
    }

    /// Intercept plus `k - 1` standard-normal columns.
    pub fn design(&mut self, n: usize, k: usize) -> DMatrix<f64> {
        let mut x = DMatrix::from_element(n, k, 1.0);
        for j in 1..k {
            for i in 0..n {
                x[(i, j)] = self.normal();
            }
        }
        x
    }

    pub fn vector(&mut self, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| self.normal())
    }
}

pub fn obs(id: &str, g1: f64, g2: f64) -> PairedGapObservation {
    PairedGapObservation {
        garage_id: id.to_string(),
        row: 0,
        gap: [g1, g2],
        diff: [0.0, 0.0],
        fields: BTreeMap::new(),
    }
}
