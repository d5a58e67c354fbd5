//! Experiment configuration and the built-in scenario registry.
//!
//! Configs are JSON. Product ids are 0-based and instances list products in
//! any order; generated instances are labelled best-first.

use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{BoostAttack, BudgetedAdversary, NullPolicy, UcbAttack};
use crate::error::{Error, Result};
use crate::far::{Far, FarConfig};
use crate::forc::{Forc, ForcConfig, ForcWindow};
use crate::harness::{default_checkpoints, Clairvoyant, ForcLearner, Learner};
use crate::model::Instance;
use crate::ucb::{Ucb, UcbConfig, UcbWindow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceSpec {
    Explicit(Instance),
    Generated(GeneratorSpec),
}

/// Random instance: `n` click probabilities uniform on `[mu_low, mu_high]`
/// conditioned on pairwise gaps of at least `min_gap`, labelled in decreasing
/// order of click probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub n: usize,
    pub mu_low: f64,
    pub mu_high: f64,
    #[serde(default)]
    pub min_gap: f64,
    /// Customers never look past this many positions. `None` means exit
    /// probabilities are all zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention_depth: Option<usize>,
    /// Draw a fresh instance for every replication.
    #[serde(default)]
    pub per_rep: bool,
}

impl GeneratorSpec {
    fn validate(&self) -> Result<()> {
        let path = |f: &str| format!("instance.generated.{f}");
        if self.n == 0 {
            return Err(Error::config(path("n"), "at least one product is required"));
        }
        if !(self.mu_low > 0.0 && self.mu_low < self.mu_high && self.mu_high < 1.0) {
            return Err(Error::config(
                path("mu_low"),
                format!(
                    "need 0 < mu_low < mu_high < 1, got [{}, {}]",
                    self.mu_low, self.mu_high
                ),
            ));
        }
        if !(self.min_gap >= 0.0 && self.min_gap.is_finite()) {
            return Err(Error::config(path("min_gap"), "must be non-negative"));
        }
        if (self.n - 1) as f64 * self.min_gap > self.mu_high - self.mu_low {
            return Err(Error::config(
                path("min_gap"),
                format!(
                    "{} products with gap {} do not fit in [{}, {}]",
                    self.n, self.min_gap, self.mu_low, self.mu_high
                ),
            ));
        }
        if let Some(k) = self.attention_depth {
            if k == 0 || k > self.n {
                return Err(Error::config(
                    path("attention_depth"),
                    format!("must be in 1..={}, got {k}", self.n),
                ));
            }
        }
        Ok(())
    }

    /// Exit probabilities: certain exit after position `attention_depth`,
    /// none elsewhere.
    pub fn exit_probabilities(&self) -> Vec<f64> {
        let mut q = vec![0.0; self.n - 1];
        if let Some(k) = self.attention_depth {
            if k < self.n {
                q[k - 1] = 1.0;
            }
        }
        q
    }

    /// Sorted uniforms on the shrunken range `[0, span - (n-1) gap]`, spread by
    /// adding `k * gap` to the `k`-th smallest. This is exactly the uniform
    /// distribution conditioned on the gap constraint.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Instance> {
        self.validate()?;
        let slack = self.mu_high - self.mu_low - (self.n - 1) as f64 * self.min_gap;
        let mut draws: Vec<f64> = (0..self.n).map(|_| rng.gen::<f64>() * slack).collect();
        draws.sort_by(f64::total_cmp);
        let mut mu: Vec<f64> = draws
            .iter()
            .enumerate()
            .map(|(k, u)| self.mu_low + u + k as f64 * self.min_gap)
            .collect();
        mu.reverse();
        Instance::new(mu, self.exit_probabilities())
    }
}

fn default_ucb_window() -> UcbWindow {
    UcbWindow::Theorem
}

fn default_forc_window() -> ForcWindow {
    ForcWindow::Theory
}

fn default_budget_coef() -> f64 {
    1.0
}

fn is_one(x: &f64) -> bool {
    *x == 1.0
}

/// One learner to run, with its knobs. Horizon and `n` come from the
/// experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgoSpec {
    Ucb {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        #[serde(default = "default_ucb_window")]
        window: UcbWindow,
    },
    Far {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        /// Budget FAR is told about; `None` means the adversary's true budget.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        budget: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta: Option<f64>,
        #[serde(default = "default_budget_coef", skip_serializing_if = "is_one")]
        budget_coef: f64,
    },
    Forc {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        levels: Option<usize>,
        #[serde(default = "default_forc_window")]
        window: ForcWindow,
    },
    Clairvoyant {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
}

impl AlgoSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            AlgoSpec::Ucb { .. } => "ucb",
            AlgoSpec::Far { .. } => "far",
            AlgoSpec::Forc { .. } => "forc",
            AlgoSpec::Clairvoyant { .. } => "clairvoyant",
        }
    }

    /// Name used in output; defaults to the kind.
    pub fn label(&self) -> &str {
        let label = match self {
            AlgoSpec::Ucb { label, .. }
            | AlgoSpec::Far { label, .. }
            | AlgoSpec::Forc { label, .. }
            | AlgoSpec::Clairvoyant { label } => label,
        };
        label.as_deref().unwrap_or(self.kind())
    }

    fn far_config(horizon: u64, adversary_budget: u64, budget: Option<u64>, delta: Option<f64>, budget_coef: f64) -> FarConfig {
        FarConfig {
            horizon,
            budget: budget.unwrap_or(adversary_budget),
            delta,
            budget_coef,
        }
    }

    pub fn build(&self, instance: &Instance, horizon: u64, adversary_budget: u64) -> Result<Box<dyn Learner>> {
        let n = instance.n();
        Ok(match self {
            AlgoSpec::Ucb { window, .. } => Box::new(Ucb::new(
                n,
                UcbConfig {
                    horizon,
                    window: *window,
                },
            )?),
            AlgoSpec::Far {
                budget,
                delta,
                budget_coef,
                ..
            } => Box::new(Far::new(
                n,
                Self::far_config(horizon, adversary_budget, *budget, *delta, *budget_coef),
            )?),
            AlgoSpec::Forc {
                delta,
                levels,
                window,
                ..
            } => Box::new(ForcLearner::new(Forc::new(
                n,
                ForcConfig {
                    horizon,
                    delta: *delta,
                    levels: *levels,
                    window: *window,
                },
            )?)),
            AlgoSpec::Clairvoyant { .. } => Box::new(Clairvoyant::new(instance)),
        })
    }

    fn validate(&self, horizon: u64) -> Result<()> {
        match self {
            AlgoSpec::Ucb { window, .. } => UcbConfig {
                horizon,
                window: *window,
            }
            .validate(),
            AlgoSpec::Far {
                budget,
                delta,
                budget_coef,
                ..
            } => Self::far_config(horizon, 0, *budget, *delta, *budget_coef).validate(),
            AlgoSpec::Forc {
                delta,
                levels,
                window,
                ..
            } => ForcConfig {
                horizon,
                delta: *delta,
                levels: *levels,
                window: *window,
            }
            .validate(),
            AlgoSpec::Clairvoyant { .. } => Ok(()),
        }
    }
}

/// Fakeness budget, fixed or `ceil(sqrt_coef * sqrt(T))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BudgetSpec {
    Fixed(u64),
    SqrtHorizon { sqrt_coef: f64 },
}

impl BudgetSpec {
    pub fn resolve(&self, horizon: u64) -> u64 {
        match *self {
            BudgetSpec::Fixed(f) => f,
            BudgetSpec::SqrtHorizon { sqrt_coef } => (sqrt_coef * (horizon as f64).sqrt()).ceil() as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AdversarySpec {
    #[default]
    Null,
    UcbAttack {
        /// `None` means `4 ceil(ln T)^2`, what the attack spends.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        budget: Option<u64>,
    },
    Boost {
        promoted: Vec<usize>,
        depth: usize,
        fake_prob: f64,
        budget: BudgetSpec,
    },
}

impl AdversarySpec {
    pub fn budget(&self, horizon: u64) -> u64 {
        match self {
            AdversarySpec::Null => 0,
            AdversarySpec::UcbAttack { budget } => budget.unwrap_or_else(|| UcbAttack::budget(horizon)),
            AdversarySpec::Boost { budget, .. } => budget.resolve(horizon),
        }
    }

    pub fn build(&self, n: usize, horizon: u64) -> Result<BudgetedAdversary> {
        let budget = self.budget(horizon);
        Ok(match self {
            AdversarySpec::Null => BudgetedAdversary::new(Box::new(NullPolicy), 0),
            AdversarySpec::UcbAttack { .. } => {
                BudgetedAdversary::new(Box::new(UcbAttack::new(n, horizon)?), budget)
            }
            AdversarySpec::Boost {
                promoted,
                depth,
                fake_prob,
                ..
            } => {
                if let Some(&p) = promoted.iter().find(|&&p| p >= n) {
                    return Err(Error::InvalidAdversary(format!(
                        "promoted product {p} out of range for {n} products"
                    )));
                }
                BudgetedAdversary::new(Box::new(BoostAttack::new(promoted.iter().copied(), *depth, *fake_prob)?), budget)
            }
        })
    }
}

fn default_scenario_name() -> String {
    "custom".to_string()
}

fn default_reps() -> usize {
    1
}

fn default_checkpoint_count() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Written to the `scenario` CSV column.
    #[serde(default = "default_scenario_name")]
    pub scenario: String,
    pub instance: InstanceSpec,
    pub algorithms: Vec<AlgoSpec>,
    #[serde(default)]
    pub adversary: AdversarySpec,
    pub horizon: u64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Number of evenly spaced checkpoints; the horizon is always included.
    #[serde(default = "default_checkpoint_count")]
    pub checkpoints: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn at_path(err: Error, prefix: &str) -> Error {
    match err {
        Error::Config { path, message } => Error::Config {
            path: format!("{prefix}.{path}"),
            message,
        },
        Error::InvalidAdversary(message) | Error::InvalidInstance(message) => Error::Config {
            path: prefix.to_string(),
            message,
        },
        other => other,
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn n(&self) -> usize {
        match &self.instance {
            InstanceSpec::Explicit(instance) => instance.n(),
            InstanceSpec::Generated(gen) => gen.n,
        }
    }

    pub fn checkpoint_rounds(&self) -> Vec<u64> {
        default_checkpoints(self.horizon, self.checkpoints)
    }

    pub fn validate(&self) -> Result<()> {
        if let InstanceSpec::Generated(gen) = &self.instance {
            gen.validate()?;
        }
        if self.reps == 0 {
            return Err(Error::config("reps", "at least one replication is required"));
        }
        if self.checkpoints == 0 {
            return Err(Error::config("checkpoints", "at least one checkpoint is required"));
        }
        if self.algorithms.is_empty() {
            return Err(Error::config("algorithms", "at least one algorithm is required"));
        }
        for (k, algo) in self.algorithms.iter().enumerate() {
            algo.validate(self.horizon)
                .map_err(|e| at_path(e, &format!("algorithms[{k}]")))?;
            if let Some(prev) = self.algorithms[..k].iter().position(|a| a.label() == algo.label()) {
                return Err(Error::config(
                    format!("algorithms[{k}].label"),
                    format!("`{}` already used by algorithms[{prev}]", algo.label()),
                ));
            }
        }
        self.adversary
            .build(self.n(), self.horizon)
            .map_err(|e| at_path(e, "adversary"))?;
        Ok(())
    }

    /// Keeps only the algorithms whose label or kind is listed.
    pub fn retain_algorithms(&mut self, names: &[String]) -> Result<()> {
        if names.is_empty() {
            return Ok(());
        }
        if let Some(unknown) = names
            .iter()
            .find(|name| !self.algorithms.iter().any(|a| a.label() == *name || a.kind() == *name))
        {
            let available: Vec<&str> = self.algorithms.iter().map(AlgoSpec::label).collect();
            return Err(Error::config(
                "algorithms",
                format!("no algorithm `{unknown}` (available: {})", available.join(", ")),
            ));
        }
        self.algorithms
            .retain(|a| names.iter().any(|name| a.label() == name || a.kind() == name));
        Ok(())
    }
}

/// Built-in scenarios with one-line descriptions.
pub const SCENARIOS: &[(&str, &str)] = &[
    (
        "thm3-ucb-attack",
        "two products, mu=(0.999999, 0.5), q=(1): scripted attack that traps cascade UCB",
    ),
    (
        "sec6-study",
        "n=10 random instance, attention depth 4, boost attack on the 6th and 7th best products",
    ),
    (
        "clean-n5",
        "n=5 random instance with gap 0.1 and no fake users",
    ),
];

pub fn list_scenarios() -> &'static [(&'static str, &'static str)] {
    SCENARIOS
}

pub fn scenario(name: &str) -> Result<ExperimentConfig> {
    match name {
        "thm3-ucb-attack" => Ok(thm3_ucb_attack()),
        "sec6-study" => Ok(sec6_study()),
        "clean-n5" => Ok(clean_n5()),
        _ => Err(Error::UnknownScenario {
            name: name.to_string(),
            available: SCENARIOS.iter().map(|(n, _)| n.to_string()).collect(),
        }),
    }
}

fn thm3_ucb_attack() -> ExperimentConfig {
    ExperimentConfig {
        scenario: "thm3-ucb-attack".into(),
        instance: InstanceSpec::Explicit(
            Instance::new(vec![0.999_999, 0.5], vec![1.0]).expect("valid instance"),
        ),
        algorithms: vec![
            AlgoSpec::Ucb {
                label: None,
                window: UcbWindow::Theorem,
            },
            AlgoSpec::Far {
                label: None,
                budget: None,
                delta: None,
                budget_coef: 1.0,
            },
            AlgoSpec::Forc {
                label: None,
                delta: None,
                levels: None,
                window: ForcWindow::Theory,
            },
        ],
        adversary: AdversarySpec::UcbAttack { budget: None },
        horizon: 100_000,
        reps: 20,
        base_seed: 0,
        checkpoints: 200,
        output: None,
    }
}

fn sec6_study() -> ExperimentConfig {
    let delta = 0.02;
    ExperimentConfig {
        scenario: "sec6-study".into(),
        instance: InstanceSpec::Generated(GeneratorSpec {
            n: 10,
            mu_low: 0.02,
            mu_high: 0.3,
            min_gap: 0.02,
            attention_depth: Some(4),
            per_rep: true,
        }),
        algorithms: vec![
            AlgoSpec::Ucb {
                label: None,
                window: UcbWindow::Study { delta, budget: 0.0 },
            },
            AlgoSpec::Far {
                label: None,
                budget: None,
                delta: Some(delta),
                budget_coef: 0.5,
            },
            AlgoSpec::Forc {
                label: None,
                delta: Some(delta),
                levels: None,
                window: ForcWindow::Study { budget_coef: 0.5 },
            },
        ],
        adversary: AdversarySpec::Boost {
            promoted: vec![5, 6],
            depth: 4,
            fake_prob: 0.75,
            budget: BudgetSpec::SqrtHorizon { sqrt_coef: 14.0 },
        },
        horizon: 200_000,
        reps: 20,
        base_seed: 0,
        checkpoints: 200,
        output: None,
    }
}

fn clean_n5() -> ExperimentConfig {
    ExperimentConfig {
        scenario: "clean-n5".into(),
        instance: InstanceSpec::Generated(GeneratorSpec {
            n: 5,
            mu_low: 0.02,
            mu_high: 0.5,
            min_gap: 0.1,
            attention_depth: None,
            per_rep: true,
        }),
        algorithms: vec![
            AlgoSpec::Far {
                label: None,
                budget: None,
                delta: None,
                budget_coef: 1.0,
            },
            AlgoSpec::Forc {
                label: None,
                delta: None,
                levels: None,
                window: ForcWindow::Theory,
            },
        ],
        adversary: AdversarySpec::Null,
        horizon: 50_000,
        reps: 50,
        base_seed: 0,
        checkpoints: 200,
        output: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scenarios_round_trip() {
        for (name, _) in list_scenarios() {
            let config = scenario(name).unwrap();
            config.validate().unwrap();
            let back = ExperimentConfig::from_json(&config.to_json()).unwrap();
            assert_eq!(back, config, "{name}");
        }
    }

    #[test]
    fn unknown_scenario_lists_alternatives() {
        let err = scenario("nope").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("thm3-ucb-attack") && msg.contains("sec6-study"), "{msg}");
        assert!(err.is_validation());
    }

    #[test]
    fn horizon_dependent_budgets() {
        let thm3 = scenario("thm3-ucb-attack").unwrap();
        assert_eq!(thm3.adversary.budget(100_000), 576);
        let sec6 = scenario("sec6-study").unwrap();
        assert_eq!(sec6.adversary.budget(200_000), 6261);
        assert_eq!(sec6.adversary.budget(10_000), 1400);
    }

    #[test]
    fn minimal_json_uses_defaults() {
        let text = r#"{
            "instance": {"explicit": {"mu": [0.5, 0.25], "q": [0.0]}},
            "algorithms": [{"kind": "far"}, {"kind": "ucb", "label": "ucb-study",
                            "window": {"mode": "study", "delta": 0.1}}],
            "horizon": 100
        }"#;
        let config = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(config.reps, 1);
        assert_eq!(config.checkpoints, 200);
        assert_eq!(config.adversary, AdversarySpec::Null);
        assert_eq!(config.algorithms[1].label(), "ucb-study");
        assert_eq!(config.scenario, "custom");
    }

    #[test]
    fn validation_errors_name_the_field() {
        let mut config = scenario("sec6-study").unwrap();
        config.algorithms[1] = AlgoSpec::Far {
            label: None,
            budget: None,
            delta: Some(-1.0),
            budget_coef: 0.5,
        };
        match config.validate().unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "algorithms[1].delta"),
            e => panic!("unexpected {e}"),
        }

        let text = r#"{"instance": {"generated": {"n": 20, "mu_low": 0.1, "mu_high": 0.3, "min_gap": 0.02}},
                       "algorithms": [{"kind": "far"}], "horizon": 10}"#;
        match ExperimentConfig::from_json(text).unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "instance.generated.min_gap"),
            e => panic!("unexpected {e}"),
        }

        let text = r#"{"instance": {"explicit": {"mu": [0.5, 0.25, 0.1], "q": [0.0, 0.0]}},
                       "algorithms": [{"kind": "far"}], "horizon": 10,
                       "adversary": {"kind": "ucb_attack"}}"#;
        match ExperimentConfig::from_json(text).unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "adversary"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{"instance": {"explicit": {"mu": [0.5], "q": []}},
                       "algorithms": [{"kind": "far", "budgett": 3}], "horizon": 10}"#;
        assert!(ExperimentConfig::from_json(text).is_err());
    }

    #[test]
    fn duplicate_labels_are_rejected() {
        let mut config = scenario("clean-n5").unwrap();
        config.algorithms.push(AlgoSpec::Far {
            label: None,
            budget: Some(3),
            delta: None,
            budget_coef: 1.0,
        });
        assert!(config.validate().is_err());
    }

    #[test]
    fn algorithm_filter() {
        let mut config = scenario("thm3-ucb-attack").unwrap();
        config.retain_algorithms(&["far".into(), "forc".into()]).unwrap();
        let labels: Vec<&str> = config.algorithms.iter().map(AlgoSpec::label).collect();
        assert_eq!(labels, ["far", "forc"]);
        assert!(config.retain_algorithms(&["ts".into()]).is_err());
    }

    #[test]
    fn generated_instances_respect_constraints() {
        let gen = GeneratorSpec {
            n: 10,
            mu_low: 0.02,
            mu_high: 0.3,
            min_gap: 0.02,
            attention_depth: Some(4),
            per_rep: true,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let inst = gen.generate(&mut rng).unwrap();
            let mu = inst.mu();
            assert!(mu.windows(2).all(|w| w[0] - w[1] >= 0.02 - 1e-12));
            assert!(mu.iter().all(|&m| (0.02..=0.3).contains(&m)));
            assert_eq!(inst.q(), &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn generator_matches_rejection_sampling_in_distribution() {
        // conditional mean of the top value, compared against rejection sampling
        let gen = GeneratorSpec {
            n: 3,
            mu_low: 0.1,
            mu_high: 0.5,
            min_gap: 0.1,
            attention_depth: None,
            per_rep: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws = 40_000;
        let direct: f64 = (0..draws)
            .map(|_| gen.generate(&mut rng).unwrap().mu()[0])
            .sum::<f64>()
            / draws as f64;
        let mut accepted = Vec::new();
        while accepted.len() < draws {
            let mut mu: Vec<f64> = (0..3).map(|_| rng.gen_range(0.1..0.5)).collect();
            mu.sort_by(|a, b| b.total_cmp(a));
            if mu.windows(2).all(|w| w[0] - w[1] >= 0.1) {
                accepted.push(mu[0]);
            }
        }
        let rejection = accepted.iter().sum::<f64>() / draws as f64;
        assert!((direct - rejection).abs() < 0.003, "{direct} vs {rejection}");
    }
}
