//! Per-product feedback counters shared by the learners.
//!
//! A product receives feedback in a round when it sits at or above the last
//! examined position. Every examined product gets a 0-reward sample except a
//! clicked product, which gets a 1. Means are kept as integer numerator and
//! count so that replaying a log reproduces them exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Observation, Ranking};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickStats {
    clicks: Vec<u64>,
    counts: Vec<u64>,
}

impl ClickStats {
    pub fn new(n: usize) -> Self {
        ClickStats {
            clicks: vec![0; n],
            counts: vec![0; n],
        }
    }

    /// Builds counters from explicit click numerators and feedback counts.
    pub fn from_parts(clicks: Vec<u64>, counts: Vec<u64>) -> Result<Self> {
        if clicks.len() != counts.len() {
            return Err(Error::LengthMismatch {
                expected: counts.len(),
                got: clicks.len(),
            });
        }
        if let Some(i) = (0..counts.len()).find(|&i| clicks[i] > counts[i]) {
            return Err(Error::InvalidInstance(format!(
                "product {i} has more clicks ({}) than feedback ({})",
                clicks[i], counts[i]
            )));
        }
        Ok(ClickStats { clicks, counts })
    }

    pub fn n(&self) -> usize {
        self.counts.len()
    }

    /// Feedback count (eta) of a product.
    pub fn count(&self, product: usize) -> u64 {
        self.counts[product]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn clicks(&self, product: usize) -> u64 {
        self.clicks[product]
    }

    pub fn all_clicks(&self) -> &[u64] {
        &self.clicks
    }

    /// Empirical click rate, 0 before any feedback.
    pub fn mean(&self, product: usize) -> f64 {
        match self.counts[product] {
            0 => 0.0,
            c => self.clicks[product] as f64 / c as f64,
        }
    }

    /// Credits feedback for `obs` and returns the examined products, top first.
    pub fn record<'r>(&mut self, ranking: &'r Ranking, obs: &Observation) -> Result<&'r [usize]> {
        obs.validate(ranking)?;
        let examined = &ranking.as_slice()[..=obs.exit_position];
        for &product in examined {
            self.counts[product] += 1;
        }
        if let Some(product) = obs.clicked {
            self.clicks[product] += 1;
        }
        Ok(examined)
    }
}
