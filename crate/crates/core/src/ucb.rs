//! Cascade UCB baseline: rank products by optimistic index, highest first.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::ClickStats;
use crate::model::{Observation, Ranking};

/// How the exploration bonus is computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum UcbWindow {
    /// Textbook UCB: `sqrt(ln T / eta)`.
    Theorem,
    /// `sqrt(ln(2nT/delta) / eta) + budget / eta`.
    Study {
        delta: f64,
        #[serde(default)]
        budget: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UcbConfig {
    pub horizon: u64,
    pub window: UcbWindow,
}

impl UcbConfig {
    pub fn theorem(horizon: u64) -> Self {
        UcbConfig {
            horizon,
            window: UcbWindow::Theorem,
        }
    }

    pub fn study(horizon: u64, delta: f64) -> Self {
        UcbConfig {
            horizon,
            window: UcbWindow::Study { delta, budget: 0.0 },
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if let UcbWindow::Study { delta, budget } = self.window {
            if !(delta > 0.0 && delta.is_finite()) {
                return Err(Error::config("window.delta", format!("must be positive, got {delta}")));
            }
            if !(budget >= 0.0 && budget.is_finite()) {
                return Err(Error::config(
                    "window.budget",
                    format!("must be non-negative, got {budget}"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Ucb {
    config: UcbConfig,
    log_term: f64,
    budget: f64,
    stats: ClickStats,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UcbSnapshot {
    pub clicks: Vec<u64>,
    pub eta: Vec<u64>,
}

impl Ucb {
    pub fn new(n: usize, config: UcbConfig) -> Result<Self> {
        config.validate()?;
        let horizon = config.horizon.max(1) as f64;
        let (log_term, budget) = match config.window {
            UcbWindow::Theorem => (horizon.ln(), 0.0),
            UcbWindow::Study { delta, budget } => ((2.0 * n as f64 * horizon / delta).ln(), budget),
        };
        Ok(Ucb {
            config,
            log_term,
            budget,
            stats: ClickStats::new(n),
        })
    }

    pub fn n(&self) -> usize {
        self.stats.n()
    }

    pub fn config(&self) -> &UcbConfig {
        &self.config
    }

    pub fn stats(&self) -> &ClickStats {
        &self.stats
    }

    /// Optimistic index; `+inf` until the product has feedback.
    pub fn index(&self, product: usize) -> f64 {
        match self.stats.count(product) {
            0 => f64::INFINITY,
            eta => {
                let eta = eta as f64;
                self.stats.mean(product) + (self.log_term / eta).sqrt() + self.budget / eta
            }
        }
    }

    pub fn select(&self) -> Ranking {
        let indices: Vec<f64> = (0..self.n()).map(|i| self.index(i)).collect();
        rank_by_index(&indices)
    }

    pub fn update(&mut self, ranking: &Ranking, obs: &Observation) -> Result<()> {
        if ranking.len() != self.n() {
            return Err(Error::LengthMismatch {
                expected: self.n(),
                got: ranking.len(),
            });
        }
        self.stats.record(ranking, obs)?;
        Ok(())
    }

    pub fn with_stats(mut self, stats: ClickStats) -> Result<Self> {
        if stats.n() != self.n() {
            return Err(Error::LengthMismatch {
                expected: self.n(),
                got: stats.n(),
            });
        }
        self.stats = stats;
        Ok(self)
    }

    pub fn snapshot(&self) -> UcbSnapshot {
        UcbSnapshot {
            clicks: self.stats.all_clicks().to_vec(),
            eta: self.stats.counts().to_vec(),
        }
    }
}

/// Sorts products by index descending, ties to the smaller id.
pub fn rank_by_index(indices: &[f64]) -> Ranking {
    let mut perm: Vec<usize> = (0..indices.len()).collect();
    perm.sort_by(|&a, &b| indices[b].total_cmp(&indices[a]).then(a.cmp(&b)));
    Ranking::from_perm_unchecked(perm)
}
