//! Round loop, regret accounting and replications.
//!
//! Regret is measured as pseudo-regret: every real round adds the analytic gap
//! between the optimal ranking's engagement and the displayed ranking's. Fake
//! rounds add nothing. Realized click counts are tracked alongside.
//!
//! Each replication `rep` runs with seed `base_seed + rep`. The seed keys a
//! ChaCha8 generator and independent streams are split off it with
//! `set_stream`: stream 0 drives real customers, stream 1 the learner, stream 2
//! the adversary and stream 3 per-replication instance generation. Every
//! algorithm in a replication sees the same streams.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::BudgetedAdversary;
use crate::config::{ExperimentConfig, InstanceSpec};
use crate::error::{Error, Result};
use crate::far::Far;
use crate::forc::Forc;
use crate::model::{Instance, Observation, Ranking};
use crate::ucb::Ucb;

pub const STREAM_CUSTOMERS: u64 = 0;
pub const STREAM_LEARNER: u64 = 1;
pub const STREAM_ADVERSARY: u64 = 2;
pub const STREAM_INSTANCE: u64 = 3;

/// Generator for one stream of one replication seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed of replication `rep`.
pub fn rep_seed(base_seed: u64, rep: usize) -> u64 {
    base_seed.wrapping_add(rep as u64)
}

/// A ranking learner driven by the round loop.
pub trait Learner: Send {
    fn name(&self) -> &str;

    fn select(&mut self, rng: &mut dyn RngCore) -> Ranking;

    fn update(&mut self, ranking: &Ranking, obs: &Observation) -> Result<()>;

    /// Level sampled in the latest `select`, for multi-level learners.
    fn level(&self) -> Option<usize> {
        None
    }

    fn snapshot(&self) -> serde_json::Value;
}

impl Learner for Far {
    fn name(&self) -> &str {
        "far"
    }

    fn select(&mut self, _rng: &mut dyn RngCore) -> Ranking {
        Far::select(self)
    }

    fn update(&mut self, ranking: &Ranking, obs: &Observation) -> Result<()> {
        Far::update(self, ranking, obs).map(drop)
    }

    fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(Far::snapshot(self)).expect("snapshot serializes")
    }
}

impl Learner for Ucb {
    fn name(&self) -> &str {
        "ucb"
    }

    fn select(&mut self, _rng: &mut dyn RngCore) -> Ranking {
        Ucb::select(self)
    }

    fn update(&mut self, ranking: &Ranking, obs: &Observation) -> Result<()> {
        Ucb::update(self, ranking, obs)
    }

    fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(Ucb::snapshot(self)).expect("snapshot serializes")
    }
}

/// FORC behind the [`Learner`] interface: remembers the level it sampled for
/// the following update.
#[derive(Debug, Clone)]
pub struct ForcLearner {
    pub forc: Forc,
    pending: Option<usize>,
}

impl ForcLearner {
    pub fn new(forc: Forc) -> Self {
        ForcLearner { forc, pending: None }
    }
}

impl Learner for ForcLearner {
    fn name(&self) -> &str {
        "forc"
    }

    fn select(&mut self, rng: &mut dyn RngCore) -> Ranking {
        let level = self.forc.sample_level(rng);
        self.pending = Some(level);
        self.forc.select_at(level).ranking
    }

    fn update(&mut self, ranking: &Ranking, obs: &Observation) -> Result<()> {
        let level = self
            .pending
            .ok_or_else(|| Error::CorruptObservation("update without a preceding select".into()))?;
        self.forc.update(level, ranking, obs).map(drop)
    }

    fn level(&self) -> Option<usize> {
        self.pending
    }

    fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self.forc.snapshot()).expect("snapshot serializes")
    }
}

/// Always plays the optimal ranking.
#[derive(Debug, Clone)]
pub struct Clairvoyant {
    ranking: Ranking,
}

impl Clairvoyant {
    pub fn new(instance: &Instance) -> Self {
        Clairvoyant {
            ranking: instance.optimal_ranking(),
        }
    }
}

impl Learner for Clairvoyant {
    fn name(&self) -> &str {
        "clairvoyant"
    }

    fn select(&mut self, _rng: &mut dyn RngCore) -> Ranking {
        self.ranking.clone()
    }

    fn update(&mut self, ranking: &Ranking, obs: &Observation) -> Result<()> {
        obs.validate(ranking)
    }

    fn snapshot(&self) -> serde_json::Value {
        serde_json::json!({ "ranking": self.ranking })
    }
}

/// Cumulative series sampled at checkpoint rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub checkpoints: Vec<u64>,
    pub cum_regret: Vec<f64>,
    pub cum_real_clicks: Vec<u64>,
    pub cum_fake_rounds: Vec<u64>,
    pub cum_total_clicks: Vec<u64>,
    /// Fakeness budget the run was played under.
    pub budget: u64,
}

impl RegretTrace {
    fn with_capacity(len: usize, budget: u64) -> Self {
        RegretTrace {
            checkpoints: Vec::with_capacity(len),
            cum_regret: Vec::with_capacity(len),
            cum_real_clicks: Vec::with_capacity(len),
            cum_fake_rounds: Vec::with_capacity(len),
            cum_total_clicks: Vec::with_capacity(len),
            budget,
        }
    }

    pub fn len(&self) -> usize {
        self.checkpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checkpoints.is_empty()
    }

    pub fn final_regret(&self) -> f64 {
        self.cum_regret.last().copied().unwrap_or(0.0)
    }

    /// Cumulative regret at the last checkpoint not after `t` (0 before any).
    pub fn regret_at(&self, t: u64) -> f64 {
        match self.checkpoints.partition_point(|&c| c <= t) {
            0 => 0.0,
            k => self.cum_regret[k - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub algo: String,
    pub rep: usize,
    pub seed: u64,
    pub trace: RegretTrace,
    /// Final learner state.
    pub snapshot: serde_json::Value,
}

/// Everything that happened in one round, handed to episode observers.
#[derive(Debug, Clone, Copy)]
pub struct RoundEvent<'a> {
    pub t: u64,
    pub level: Option<usize>,
    pub ranking: &'a Ranking,
    pub fake: bool,
    pub observation: &'a Observation,
    pub regret: f64,
}

/// Outcome of [`fake_accounting_check`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccountingCheck {
    pub passed: bool,
    pub diagnostics: Vec<String>,
}

/// Fake rounds never exceed the budget, and fake clicks (total minus real)
/// never exceed fake rounds.
pub fn fake_accounting_check(trace: &RegretTrace) -> AccountingCheck {
    let mut diagnostics = Vec::new();
    for k in 0..trace.len() {
        let t = trace.checkpoints[k];
        let fake_rounds = trace.cum_fake_rounds[k];
        if fake_rounds > trace.budget {
            diagnostics.push(format!(
                "t={t}: {fake_rounds} fake rounds exceed budget {}",
                trace.budget
            ));
        }
        let (total, real) = (trace.cum_total_clicks[k], trace.cum_real_clicks[k]);
        if total < real {
            diagnostics.push(format!("t={t}: total clicks {total} below real clicks {real}"));
        } else if total - real > fake_rounds {
            diagnostics.push(format!(
                "t={t}: {} fake clicks exceed {fake_rounds} fake rounds",
                total - real
            ));
        }
    }
    AccountingCheck {
        passed: diagnostics.is_empty(),
        diagnostics,
    }
}

/// `count` evenly spaced rounds in `1..=horizon`, always ending at `horizon`.
pub fn default_checkpoints(horizon: u64, count: usize) -> Vec<u64> {
    if horizon == 0 {
        return Vec::new();
    }
    let count = count.max(1) as u128;
    let mut points: Vec<u64> = (1..=count)
        .map(|k| (k * horizon as u128).div_ceil(count) as u64)
        .filter(|&t| t >= 1)
        .collect();
    points.push(horizon);
    points.dedup();
    points
}

fn check_checkpoints(checkpoints: &[u64], horizon: u64) -> Result<()> {
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("checkpoints", "must be strictly increasing"));
    }
    if let Some(&bad) = checkpoints.iter().find(|&&t| t == 0 || t > horizon) {
        return Err(Error::config(
            "checkpoints",
            format!("round {bad} outside 1..={horizon}"),
        ));
    }
    Ok(())
}

pub fn run_episode(
    instance: &Instance,
    learner: &mut dyn Learner,
    adversary: &mut BudgetedAdversary,
    horizon: u64,
    seed: u64,
    checkpoints: &[u64],
) -> Result<RunResult> {
    run_episode_observed(instance, learner, adversary, horizon, seed, checkpoints, &mut |_| {})
}

/// [`run_episode`] with a callback invoked after every round.
pub fn run_episode_observed(
    instance: &Instance,
    learner: &mut dyn Learner,
    adversary: &mut BudgetedAdversary,
    horizon: u64,
    seed: u64,
    checkpoints: &[u64],
    observer: &mut dyn FnMut(&RoundEvent<'_>),
) -> Result<RunResult> {
    check_checkpoints(checkpoints, horizon)?;
    let mut customer_rng = stream_rng(seed, STREAM_CUSTOMERS);
    let mut learner_rng = stream_rng(seed, STREAM_LEARNER);
    let mut adversary_rng = stream_rng(seed, STREAM_ADVERSARY);

    let best = instance.expected_engagement(&instance.optimal_ranking());
    let mut trace = RegretTrace::with_capacity(checkpoints.len(), adversary.budget());
    let mut next_checkpoint = checkpoints.iter().peekable();

    let mut regret = 0.0;
    let (mut real_clicks, mut fake_rounds, mut total_clicks) = (0u64, 0u64, 0u64);
    for t in 1..=horizon {
        let ranking = learner.select(&mut learner_rng);
        let action = adversary.act(t, &ranking, &mut adversary_rng)?;
        let (obs, increment) = match action.observation() {
            Some(obs) => {
                fake_rounds += 1;
                (obs, 0.0)
            }
            None => {
                let obs = instance.sample_session(&ranking, &mut customer_rng);
                if obs.clicked.is_some() {
                    real_clicks += 1;
                }
                let gap = (best - instance.expected_engagement(&ranking)).max(0.0);
                debug_assert!(gap <= best);
                (obs, gap)
            }
        };
        if obs.clicked.is_some() {
            total_clicks += 1;
        }
        regret += increment;
        learner.update(&ranking, &obs)?;
        if fake_rounds > adversary.budget() {
            return Err(Error::Budget(format!(
                "round {t}: {fake_rounds} fake rounds exceed budget {}",
                adversary.budget()
            )));
        }
        observer(&RoundEvent {
            t,
            level: learner.level(),
            ranking: &ranking,
            fake: action.fake,
            observation: &obs,
            regret: increment,
        });
        if next_checkpoint.next_if_eq(&&t).is_some() {
            trace.checkpoints.push(t);
            trace.cum_regret.push(regret);
            trace.cum_real_clicks.push(real_clicks);
            trace.cum_fake_rounds.push(fake_rounds);
            trace.cum_total_clicks.push(total_clicks);
        }
    }
    Ok(RunResult {
        algo: learner.name().to_string(),
        rep: 0,
        seed,
        trace,
        snapshot: learner.snapshot(),
    })
}

/// Per-checkpoint mean and empirical 2.5% / 97.5% quantiles across reps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedSeries {
    pub algo: String,
    pub checkpoints: Vec<u64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Groups runs by algorithm and summarises regret at each checkpoint.
pub fn aggregate(runs: &[RunResult]) -> Vec<AggregatedSeries> {
    let mut groups: BTreeMap<&str, Vec<&RunResult>> = BTreeMap::new();
    for run in runs {
        groups.entry(run.algo.as_str()).or_default().push(run);
    }
    groups
        .into_iter()
        .map(|(algo, runs)| {
            let checkpoints = runs[0].trace.checkpoints.clone();
            let reps = runs.len() as f64;
            let mut series = AggregatedSeries {
                algo: algo.to_string(),
                checkpoints: checkpoints.clone(),
                mean: Vec::with_capacity(checkpoints.len()),
                lower: Vec::with_capacity(checkpoints.len()),
                upper: Vec::with_capacity(checkpoints.len()),
            };
            for k in 0..checkpoints.len() {
                let mut column: Vec<f64> = runs.iter().map(|r| r.trace.cum_regret[k]).collect();
                column.sort_by(f64::total_cmp);
                series.mean.push(column.iter().sum::<f64>() / reps);
                series.lower.push(quantile(&column, 0.025));
                series.upper.push(quantile(&column, 0.975));
            }
            series
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ReplicationOutput {
    /// Sorted by `(algo, rep)`.
    pub runs: Vec<RunResult>,
    pub series: Vec<AggregatedSeries>,
}

/// Instance used by replication `rep`.
pub fn instance_for_rep(config: &ExperimentConfig, rep: usize) -> Result<Instance> {
    match &config.instance {
        InstanceSpec::Explicit(instance) => Ok(instance.clone()),
        InstanceSpec::Generated(gen) => {
            let seed = if gen.per_rep {
                rep_seed(config.base_seed, rep)
            } else {
                config.base_seed
            };
            gen.generate(&mut stream_rng(seed, STREAM_INSTANCE))
        }
    }
}

/// Runs one replication of one configured algorithm.
pub fn run_single(config: &ExperimentConfig, algo_index: usize, rep: usize) -> Result<RunResult> {
    let spec = &config.algorithms[algo_index];
    let instance = instance_for_rep(config, rep)?;
    let horizon = config.horizon;
    let mut adversary = config.adversary.build(instance.n(), horizon)?;
    let mut learner = spec.build(&instance, horizon, adversary.budget())?;
    let checkpoints = config.checkpoint_rounds();
    let seed = rep_seed(config.base_seed, rep);
    let mut run = run_episode(
        &instance,
        learner.as_mut(),
        &mut adversary,
        horizon,
        seed,
        &checkpoints,
    )?;
    run.algo = spec.label().to_string();
    run.rep = rep;
    Ok(run)
}

/// Runs every algorithm for every replication in parallel. Results do not
/// depend on scheduling.
pub fn run_replications(config: &ExperimentConfig) -> Result<ReplicationOutput> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> = (0..config.algorithms.len())
        .flat_map(|a| (0..config.reps).map(move |rep| (a, rep)))
        .collect();
    let mut runs = jobs
        .par_iter()
        .map(|&(a, rep)| run_single(config, a, rep))
        .collect::<Result<Vec<_>>>()?;
    runs.sort_by(|x, y| x.algo.cmp(&y.algo).then(x.rep.cmp(&y.rep)));
    let series = aggregate(&runs);
    Ok(ReplicationOutput { runs, series })
}
