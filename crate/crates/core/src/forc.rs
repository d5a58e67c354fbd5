//! Fake-oblivious ranking with cross-learning (FORC).
//!
//! FORC runs `L` learners ("levels") side by side. Each round samples one
//! level, level `l >= 2` with probability `2^-l` and level 1 with the rest, so
//! higher levels see few fake users. Information crosses levels both ways:
//!
//! - upward, the cross-learned statistics of level `l` add the raw samples of
//!   every lower level at weight `2^-l`;
//! - downward, an edge inferred at level `l` is copied into every lower
//!   graph that is still alive.
//!
//! A graph that becomes cyclic is eliminated together with all graphs below it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::ClickStats;
use crate::model::{Observation, Ranking};
use crate::order_graph::OrderGraph;

/// Window shape used for the per-level edge test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcWindow {
    /// `sqrt(1.5 ln(4nT/delta) / m) + (ln(2L/delta) + 4) / m`, `m = max(eta_hat, 1)`.
    Theory,
    /// `sqrt(ln(2nT/delta) / m) + budget_coef * ln(2L/delta) / m`.
    Study {
        #[serde(default = "default_study_coef")]
        budget_coef: f64,
    },
}

fn default_study_coef() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcConfig {
    pub horizon: u64,
    /// Confidence parameter; `None` means `1 / (n^3 T)`.
    #[serde(default)]
    pub delta: Option<f64>,
    /// Level count; `None` means `ceil(log2 T)`, at least 1.
    #[serde(default)]
    pub levels: Option<usize>,
    #[serde(default = "default_window")]
    pub window: ForcWindow,
}

fn default_window() -> ForcWindow {
    ForcWindow::Theory
}

impl ForcConfig {
    pub fn new(horizon: u64) -> Self {
        ForcConfig {
            horizon,
            delta: None,
            levels: None,
            window: ForcWindow::Theory,
        }
    }

    pub fn resolved_delta(&self, n: usize) -> f64 {
        self.delta
            .unwrap_or_else(|| 1.0 / ((n as f64).powi(3) * self.horizon.max(1) as f64))
    }

    pub fn resolved_levels(&self) -> usize {
        self.levels.unwrap_or_else(|| default_levels(self.horizon))
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if let Some(delta) = self.delta {
            if !(delta > 0.0 && delta.is_finite()) {
                return Err(Error::config("delta", format!("must be positive, got {delta}")));
            }
        }
        match self.levels {
            Some(0) => return Err(Error::config("levels", "at least one level is required")),
            Some(l) if l > 60 => return Err(Error::config("levels", format!("{l} levels is too many"))),
            _ => {}
        }
        if let ForcWindow::Study { budget_coef } = self.window {
            if !(budget_coef >= 0.0 && budget_coef.is_finite()) {
                return Err(Error::config(
                    "window.budget_coef",
                    format!("must be non-negative, got {budget_coef}"),
                ));
            }
        }
        Ok(())
    }
}

/// `ceil(log2 T)`, never below 1.
pub fn default_levels(horizon: u64) -> usize {
    if horizon <= 2 {
        1
    } else {
        (64 - (horizon - 1).leading_zeros()) as usize
    }
}

/// Probability of sampling `level` (1-based) out of `levels`.
pub fn level_probability(level: usize, levels: usize) -> f64 {
    assert!((1..=levels).contains(&level));
    if level == 1 {
        1.0 - (2..=levels).map(|l| 0.5f64.powi(l as i32)).sum::<f64>()
    } else {
        0.5f64.powi(level as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct WindowParams {
    sqrt_scale: f64,
    additive: f64,
}

impl WindowParams {
    fn width(&self, hat_eta: f64) -> f64 {
        let m = hat_eta.max(1.0);
        (self.sqrt_scale / m).sqrt() + self.additive / m
    }
}

#[derive(Debug, Clone)]
struct Level {
    stats: ClickStats,
    /// `2^l * eta_hat`, an integer.
    hat_count_scaled: Vec<u128>,
    /// `2^l * eta_hat * r_hat`, an integer.
    hat_clicks_scaled: Vec<u128>,
    graph: OrderGraph,
    eliminated: bool,
}

/// Ranking decision for one round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForcDecision {
    pub sampled: usize,
    /// Level whose graph drove the ranking; `None` when every level from
    /// `sampled` upward is eliminated and an empty graph was used.
    pub effective: Option<usize>,
    pub ranking: Ranking,
    pub arbitrary: bool,
}

/// What an update changed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ForcUpdate {
    /// `(level, i, j)` for every edge newly present in a graph.
    pub new_edges: Vec<(usize, usize, usize)>,
    /// Levels eliminated by this update.
    pub eliminated: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSnapshot {
    pub level: usize,
    pub clicks: Vec<u64>,
    pub eta: Vec<u64>,
    pub hat_eta: Vec<f64>,
    pub hat_reward: Vec<f64>,
    pub edges: Vec<(usize, usize)>,
    pub eliminated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcSnapshot {
    pub levels: Vec<LevelSnapshot>,
}

#[derive(Debug, Clone)]
pub struct Forc {
    n: usize,
    config: ForcConfig,
    window: WindowParams,
    levels: Vec<Level>,
}

impl Forc {
    pub fn new(n: usize, config: ForcConfig) -> Result<Self> {
        config.validate()?;
        let level_count = config.resolved_levels();
        let delta = config.resolved_delta(n);
        let horizon = config.horizon.max(1) as f64;
        let nf = n as f64;
        let budget_log = (2.0 * level_count as f64 / delta).ln();
        let window = match config.window {
            ForcWindow::Theory => WindowParams {
                sqrt_scale: 1.5 * (4.0 * nf * horizon / delta).ln(),
                additive: budget_log + 4.0,
            },
            ForcWindow::Study { budget_coef } => WindowParams {
                sqrt_scale: (2.0 * nf * horizon / delta).ln(),
                additive: budget_coef * budget_log,
            },
        };
        let levels = (0..level_count)
            .map(|_| Level {
                stats: ClickStats::new(n),
                hat_count_scaled: vec![0; n],
                hat_clicks_scaled: vec![0; n],
                graph: OrderGraph::new(n),
                eliminated: false,
            })
            .collect();
        Ok(Forc {
            n,
            config,
            window,
            levels,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn config(&self) -> &ForcConfig {
        &self.config
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    fn level(&self, level: usize) -> &Level {
        &self.levels[level - 1]
    }

    pub fn stats(&self, level: usize) -> &ClickStats {
        &self.level(level).stats
    }

    pub fn graph(&self, level: usize) -> &OrderGraph {
        &self.level(level).graph
    }

    pub fn is_eliminated(&self, level: usize) -> bool {
        self.level(level).eliminated
    }

    /// Cross-learned feedback count of `product` at `level`.
    pub fn hat_eta(&self, level: usize, product: usize) -> f64 {
        self.level(level).hat_count_scaled[product] as f64 / scale(level) as f64
    }

    /// Cross-learned mean reward of `product` at `level`, 0 before feedback.
    pub fn hat_reward(&self, level: usize, product: usize) -> f64 {
        let lv = self.level(level);
        match lv.hat_count_scaled[product] {
            0 => 0.0,
            c => lv.hat_clicks_scaled[product] as f64 / c as f64,
        }
    }

    /// Window width of `product` at `level`.
    pub fn window(&self, level: usize, product: usize) -> f64 {
        self.window.width(self.hat_eta(level, product))
    }

    /// Window width as a function of the cross-learned count alone.
    pub fn window_for(&self, hat_eta: f64) -> f64 {
        self.window.width(hat_eta)
    }

    pub fn sample_level<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut cumulative = 0.0;
        for level in 2..=self.level_count() {
            cumulative += 0.5f64.powi(level as i32);
            if u < cumulative {
                return level;
            }
        }
        1
    }

    /// Smallest live level at or above `sampled`.
    pub fn effective_level(&self, sampled: usize) -> Option<usize> {
        (sampled..=self.level_count()).find(|&l| !self.is_eliminated(l))
    }

    /// Ranks with the effective level's graph, breaking ties by the sampled
    /// level's own feedback counts.
    pub fn select_at(&self, sampled: usize) -> ForcDecision {
        assert!(
            (1..=self.level_count()).contains(&sampled),
            "level {sampled} outside 1..={}",
            self.level_count()
        );
        let eta = self.stats(sampled).counts();
        let effective = self.effective_level(sampled);
        let selection = match effective {
            Some(level) => self.graph(level).rank_select(eta),
            None => OrderGraph::new(self.n).rank_select(eta),
        }
        .expect("eta always matches graph size");
        ForcDecision {
            sampled,
            effective,
            ranking: selection.ranking,
            arbitrary: selection.arbitrary,
        }
    }

    pub fn update(&mut self, sampled: usize, ranking: &Ranking, obs: &Observation) -> Result<ForcUpdate> {
        if !(1..=self.level_count()).contains(&sampled) {
            return Err(Error::CorruptObservation(format!(
                "level {sampled} outside 1..={}",
                self.level_count()
            )));
        }
        if ranking.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: ranking.len(),
            });
        }
        // Eliminated levels still collect samples.
        let examined = self.levels[sampled - 1].stats.record(ranking, obs)?.to_vec();
        for &product in &examined {
            self.refresh_cross_learning(sampled, product);
        }

        let mut update = ForcUpdate::default();
        let mut touched = vec![false; self.levels.len()];
        for level in sampled..=self.level_count() {
            if self.is_eliminated(level) {
                continue;
            }
            for &a in &examined {
                for b in 0..self.n {
                    if b == a || self.level(level).hat_count_scaled[b] == 0 {
                        continue;
                    }
                    for (i, j) in [(a, b), (b, a)] {
                        if self.graph(level).contains(i, j) || !self.separated(level, i, j) {
                            continue;
                        }
                        self.propagate_edge(level, i, j, &mut update, &mut touched)?;
                    }
                }
            }
        }
        update.eliminated = self.eliminate_cyclic(&touched);
        Ok(update)
    }

    /// Recomputes the cross-learned statistics of `product` for levels
    /// `from..=L` from the raw per-level counters.
    fn refresh_cross_learning(&mut self, from: usize, product: usize) {
        let mut lower_count: u128 = 0;
        let mut lower_clicks: u128 = 0;
        for level in 1..=self.levels.len() {
            let lv = &mut self.levels[level - 1];
            let count = lv.stats.count(product) as u128;
            let clicks = lv.stats.clicks(product) as u128;
            if level >= from {
                lv.hat_count_scaled[product] = lower_count + scale(level) * count;
                lv.hat_clicks_scaled[product] = lower_clicks + scale(level) * clicks;
            }
            lower_count += count;
            lower_clicks += clicks;
        }
    }

    /// Strict edge test at `level`: upper end of `i` below lower end of `j`.
    fn separated(&self, level: usize, i: usize, j: usize) -> bool {
        let upper_i = self.hat_reward(level, i) + self.window(level, i);
        let lower_j = self.hat_reward(level, j) - self.window(level, j);
        upper_i < lower_j
    }

    fn propagate_edge(
        &mut self,
        origin: usize,
        i: usize,
        j: usize,
        update: &mut ForcUpdate,
        touched: &mut [bool],
    ) -> Result<()> {
        for level in 1..=origin {
            let lv = &mut self.levels[level - 1];
            if lv.eliminated {
                continue;
            }
            if lv.graph.add_edge(i, j)? {
                update.new_edges.push((level, i, j));
                touched[level - 1] = true;
            }
        }
        Ok(())
    }

    fn eliminate_cyclic(&mut self, touched: &[bool]) -> Vec<usize> {
        let top = (1..=self.levels.len())
            .rev()
            .find(|&l| touched[l - 1] && self.graph(l).has_cycle());
        let Some(top) = top else {
            return Vec::new();
        };
        let mut eliminated = Vec::new();
        for level in 1..=top {
            let lv = &mut self.levels[level - 1];
            if !lv.eliminated {
                lv.eliminated = true;
                eliminated.push(level);
            }
        }
        eliminated
    }

    pub fn snapshot(&self) -> ForcSnapshot {
        ForcSnapshot {
            levels: (1..=self.level_count())
                .map(|level| {
                    let lv = self.level(level);
                    LevelSnapshot {
                        level,
                        clicks: lv.stats.all_clicks().to_vec(),
                        eta: lv.stats.counts().to_vec(),
                        hat_eta: (0..self.n).map(|i| self.hat_eta(level, i)).collect(),
                        hat_reward: (0..self.n).map(|i| self.hat_reward(level, i)).collect(),
                        edges: lv.graph.edges(),
                        eliminated: lv.eliminated,
                    }
                })
                .collect(),
        }
    }
}

fn scale(level: usize) -> u128 {
    1u128 << level
}
