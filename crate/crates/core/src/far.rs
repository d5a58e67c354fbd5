//! Fake-aware ranking (FAR).
//!
//! FAR knows the fakeness budget `F` and widens every confidence window by an
//! additive `F / eta` term. An edge `(i, j)` is added once the upper end of
//! product `i`'s window does not exceed the lower end of product `j`'s.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::ClickStats;
use crate::model::{Observation, Ranking};
use crate::order_graph::OrderGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FarConfig {
    pub horizon: u64,
    /// Known fakeness budget `F`.
    pub budget: u64,
    /// Confidence parameter; `None` means `1 / (n T)`.
    #[serde(default)]
    pub delta: Option<f64>,
    /// Multiplier on `F` inside the window.
    #[serde(default = "default_budget_coef")]
    pub budget_coef: f64,
}

fn default_budget_coef() -> f64 {
    1.0
}

impl FarConfig {
    pub fn new(horizon: u64, budget: u64) -> Self {
        FarConfig {
            horizon,
            budget,
            delta: None,
            budget_coef: 1.0,
        }
    }

    pub fn resolved_delta(&self, n: usize) -> f64 {
        self.delta
            .unwrap_or_else(|| 1.0 / (n as f64 * self.horizon.max(1) as f64))
    }

    /// `ln(2 n T / delta)`, the numerator of the stochastic window term.
    pub fn log_term(&self, n: usize) -> f64 {
        (2.0 * n as f64 * self.horizon.max(1) as f64 / self.resolved_delta(n)).ln()
    }

    pub fn effective_budget(&self) -> f64 {
        self.budget_coef * self.budget as f64
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if let Some(delta) = self.delta {
            if !(delta > 0.0 && delta.is_finite()) {
                return Err(Error::config("delta", format!("must be positive, got {delta}")));
            }
        }
        if !(self.budget_coef >= 0.0 && self.budget_coef.is_finite()) {
            return Err(Error::config(
                "budget_coef",
                format!("must be non-negative, got {}", self.budget_coef),
            ));
        }
        Ok(())
    }
}

/// Window width shared by the FAR edge test:
/// `sqrt(log_term / eta) + budget / eta`, or `max(1, sqrt(log_term) + budget)`
/// before any feedback.
pub fn far_window_width(log_term: f64, budget: f64, eta: u64) -> f64 {
    if eta == 0 {
        return (log_term.sqrt() + budget).max(1.0);
    }
    let eta = eta as f64;
    (log_term / eta).sqrt() + budget / eta
}

#[derive(Debug, Clone)]
pub struct Far {
    config: FarConfig,
    log_term: f64,
    budget: f64,
    stats: ClickStats,
    graph: OrderGraph,
}

/// Serializable view of a FAR learner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FarSnapshot {
    pub clicks: Vec<u64>,
    pub eta: Vec<u64>,
    pub edges: Vec<(usize, usize)>,
}

impl Far {
    pub fn new(n: usize, config: FarConfig) -> Result<Self> {
        config.validate()?;
        Ok(Far {
            log_term: config.log_term(n),
            budget: config.effective_budget(),
            config,
            stats: ClickStats::new(n),
            graph: OrderGraph::new(n),
        })
    }

    pub fn n(&self) -> usize {
        self.stats.n()
    }

    pub fn config(&self) -> &FarConfig {
        &self.config
    }

    pub fn stats(&self) -> &ClickStats {
        &self.stats
    }

    pub fn graph(&self) -> &OrderGraph {
        &self.graph
    }

    pub fn window(&self, product: usize) -> f64 {
        far_window_width(self.log_term, self.budget, self.stats.count(product))
    }

    pub fn select(&self) -> Ranking {
        self.graph
            .rank_select(self.stats.counts())
            .expect("eta always matches graph size")
            .ranking
    }

    /// Credits the round's feedback and adds every edge that became certain.
    /// Returns the new edges.
    pub fn update(&mut self, ranking: &Ranking, obs: &Observation) -> Result<Vec<(usize, usize)>> {
        if ranking.len() != self.n() {
            return Err(Error::LengthMismatch {
                expected: self.n(),
                got: ranking.len(),
            });
        }
        let examined = self.stats.record(ranking, obs)?;
        // Pairs whose endpoints were not touched keep their previous verdict.
        let mut added = Vec::new();
        for &a in examined {
            for b in 0..self.n() {
                if b == a || self.stats.count(b) == 0 {
                    continue;
                }
                for (i, j) in [(a, b), (b, a)] {
                    if !self.graph.contains(i, j) && self.dominates(j, i) {
                        self.graph.add_edge(i, j)?;
                        added.push((i, j));
                    }
                }
            }
        }
        Ok(added)
    }

    /// Edge condition for `(i, j)`: upper end of `i` at most the lower end of `j`.
    fn dominates(&self, j: usize, i: usize) -> bool {
        let upper_i = self.stats.mean(i) + self.window(i);
        let lower_j = self.stats.mean(j) - self.window(j);
        upper_i <= lower_j
    }

    /// Evaluates the edge condition on every ordered pair with feedback and
    /// adds the qualifying edges. Returns the edges that were missing.
    pub fn scan_all_pairs(&mut self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut added = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i == j || self.stats.count(i) == 0 || self.stats.count(j) == 0 {
                    continue;
                }
                if !self.graph.contains(i, j) && self.dominates(j, i) {
                    self.graph.add_edge(i, j).expect("distinct in-range products");
                    added.push((i, j));
                }
            }
        }
        added
    }

    /// Replaces the feedback counters, leaving the graph as is.
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

    pub fn snapshot(&self) -> FarSnapshot {
        FarSnapshot {
            clicks: self.stats.all_clicks().to_vec(),
            eta: self.stats.counts().to_vec(),
            edges: self.graph.edges(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Instance;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_product_config(budget: u64) -> FarConfig {
        FarConfig {
            horizon: 100,
            budget,
            delta: Some(1.0 / 200.0),
            budget_coef: 1.0,
        }
    }

    #[test]
    fn window_before_feedback() {
        let far = Far::new(2, two_product_config(3)).unwrap();
        let expected = (80_000f64.ln().sqrt() + 3.0).max(1.0);
        assert_eq!(far.window(0), expected);
        // tiny log term still gives width at least one
        assert_eq!(far_window_width(0.01, 0.0, 0), 1.0);
    }

    #[test]
    fn window_with_feedback() {
        // sqrt(ln(2 * 2 * 100 * 200) / 1e4)
        let base = far_window_width(80_000f64.ln(), 0.0, 10_000);
        assert!((base - 0.033_600_270_703_754_8).abs() < 1e-12, "{base}");
        let widened = far_window_width(80_000f64.ln(), 100.0, 10_000);
        assert!((widened - base - 0.01).abs() < 1e-12);
        let far = Far::new(2, two_product_config(0)).unwrap();
        assert!((far.config().log_term(2) - 80_000f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn default_delta_is_one_over_n_t() {
        let cfg = FarConfig::new(1000, 0);
        assert_eq!(cfg.resolved_delta(4), 1.0 / 4000.0);
        assert!((cfg.log_term(4) - (2.0 * 4.0 * 1000.0 * 4000.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn fresh_state_ranks_by_id() {
        let far = Far::new(4, FarConfig::new(10, 0)).unwrap();
        assert_eq!(far.select(), Ranking::identity(4));
    }

    #[test]
    fn fully_ordered_graph_forces_ranking() {
        let mut far = Far::new(3, FarConfig::new(10, 0)).unwrap();
        far.graph.add_edge(0, 2).unwrap();
        far.graph.add_edge(1, 0).unwrap();
        assert_eq!(far.select().as_slice(), &[2, 0, 1]);
    }

    #[test]
    fn worked_example_state() {
        let mut far = Far::new(6, FarConfig::new(10, 0)).unwrap();
        for (i, j) in [(0, 1), (2, 0), (4, 2), (5, 2)] {
            far.graph.add_edge(i, j).unwrap();
        }
        let eta = [20, 15, 15, 10, 1, 10];
        let clicks = vec![0; 6];
        far = far
            .with_stats(ClickStats::from_parts(clicks, eta.to_vec()).unwrap())
            .unwrap();
        assert_eq!(far.select().as_slice(), &[3, 1, 0, 2, 4, 5]);
    }

    #[test]
    fn first_round_click_at_top() {
        let mut far = Far::new(3, FarConfig::new(10, 0)).unwrap();
        let r = far.select();
        far.update(&r, &Observation::click(r.product_at(0), 0)).unwrap();
        assert_eq!(far.stats().counts(), &[1, 0, 0]);
        assert_eq!(far.stats().mean(0), 1.0);
    }

    #[test]
    fn no_click_exit_at_second_position() {
        let mut far = Far::new(3, FarConfig::new(10, 0)).unwrap();
        let r = far.select();
        far.update(&r, &Observation::exit(1)).unwrap();
        assert_eq!(far.stats().counts(), &[1, 1, 0]);
        assert_eq!(far.stats().mean(0), 0.0);
        assert_eq!(far.stats().mean(1), 0.0);
    }

    #[test]
    fn separated_means_add_the_correct_edge() {
        let stats = ClickStats::from_parts(vec![9_000, 1_000], vec![10_000, 10_000]).unwrap();
        let mut far = Far::new(2, two_product_config(0))
            .unwrap()
            .with_stats(stats)
            .unwrap();
        // 0.1 + 0.0336 <= 0.9 - 0.0336: product 2 (index 1) is dominated
        assert_eq!(far.scan_all_pairs(), vec![(1, 0)]);
        assert!(far.graph().contains(1, 0));
    }

    #[test]
    fn large_budget_blocks_the_edge() {
        let stats = ClickStats::from_parts(vec![9_000, 1_000], vec![10_000, 10_000]).unwrap();
        let mut far = Far::new(2, two_product_config(4_000))
            .unwrap()
            .with_stats(stats)
            .unwrap();
        assert!(far.scan_all_pairs().is_empty());
    }

    #[test]
    fn corrupt_observation_is_rejected() {
        let mut far = Far::new(2, FarConfig::new(10, 0)).unwrap();
        let r = Ranking::identity(2);
        assert!(matches!(
            far.update(&r, &Observation::click(1, 0)),
            Err(Error::CorruptObservation(_))
        ));
    }

    #[test]
    fn incremental_edges_match_full_scan_every_round() {
        let inst = Instance::new(vec![0.6, 0.15, 0.4, 0.3], vec![0.1, 0.2, 0.1]).unwrap();
        let mut far = Far::new(4, FarConfig::new(5_000, 0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5_000 {
            let r = far.select();
            let obs = inst.sample_session(&r, &mut rng);
            far.update(&r, &obs).unwrap();
            let mut shadow = far.clone();
            assert!(shadow.scan_all_pairs().is_empty());
        }
        assert!(far.graph().edge_count() > 0);
    }
}
