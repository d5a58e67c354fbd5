//! Fake-user policies.
//!
//! A policy decides, each round and after seeing the displayed ranking,
//! whether the customer is fake and what a fake customer does. Policies are
//! wrapped in a [`BudgetedAdversary`] that enforces the fakeness budget.

use std::collections::BTreeSet;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Observation, Ranking};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryAction {
    pub fake: bool,
    pub clicked: Option<usize>,
    pub exit_position: usize,
}

impl AdversaryAction {
    /// The round goes to a real customer.
    pub fn real() -> Self {
        AdversaryAction {
            fake: false,
            clicked: None,
            exit_position: 0,
        }
    }

    pub fn fake_click(product: usize, position: usize) -> Self {
        AdversaryAction {
            fake: true,
            clicked: Some(product),
            exit_position: position,
        }
    }

    pub fn fake_exit(position: usize) -> Self {
        AdversaryAction {
            fake: true,
            clicked: None,
            exit_position: position,
        }
    }

    /// Observation produced by a fake action; `None` for a real round.
    pub fn observation(&self) -> Option<Observation> {
        self.fake.then_some(Observation {
            clicked: self.clicked,
            exit_position: self.exit_position,
        })
    }

    /// A fake action must look like a customer walking `ranking`.
    pub fn validate(&self, ranking: &Ranking) -> Result<()> {
        if let Some(obs) = self.observation() {
            obs.validate(ranking)
                .map_err(|e| Error::InvalidAdversary(format!("illegal fake action: {e}")))?;
        }
        Ok(())
    }
}

/// A fake-user policy. `round` is 1-based.
pub trait FakePolicy: Send {
    fn name(&self) -> &str;

    fn act(&mut self, round: u64, ranking: &Ranking, rng: &mut dyn RngCore) -> AdversaryAction;
}

/// Never fakes a round.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullPolicy;

impl FakePolicy for NullPolicy {
    fn name(&self) -> &str {
        "null"
    }

    fn act(&mut self, _round: u64, _ranking: &Ranking, _rng: &mut dyn RngCore) -> AdversaryAction {
        AdversaryAction::real()
    }
}

/// Three-phase attack on two-product UCB.
///
/// Phase 1 withholds every click, phase 2 clicks product 1 (the worse one)
/// whenever it is on top and otherwise withholds, phase 3 leaves the market to
/// real customers. Withheld rounds exit at the top position.
#[derive(Debug, Clone)]
pub struct UcbAttack {
    phase_len: u64,
}

impl UcbAttack {
    pub fn new(n: usize, horizon: u64) -> Result<Self> {
        if n != 2 {
            return Err(Error::InvalidAdversary(format!(
                "the UCB attack needs exactly two products, got {n}"
            )));
        }
        Ok(UcbAttack {
            phase_len: 2 * log_sq(horizon),
        })
    }

    pub fn phase_len(&self) -> u64 {
        self.phase_len
    }

    /// Fake rounds the attack spends over the whole horizon.
    pub fn budget(horizon: u64) -> u64 {
        4 * log_sq(horizon)
    }
}

/// `ceil(ln T)^2`.
fn log_sq(horizon: u64) -> u64 {
    let l = (horizon.max(1) as f64).ln().ceil() as u64;
    l * l
}

impl FakePolicy for UcbAttack {
    fn name(&self) -> &str {
        "ucb_attack"
    }

    fn act(&mut self, round: u64, ranking: &Ranking, _rng: &mut dyn RngCore) -> AdversaryAction {
        const BOOSTED: usize = 1;
        if round <= self.phase_len {
            AdversaryAction::fake_exit(0)
        } else if round <= 2 * self.phase_len {
            if ranking.product_at(0) == BOOSTED {
                AdversaryAction::fake_click(BOOSTED, 0)
            } else {
                AdversaryAction::fake_exit(0)
            }
        } else {
            AdversaryAction::real()
        }
    }
}

/// Promotes a set of products while budget lasts.
///
/// Each round is fake with probability `fake_prob`. A fake customer examines
/// at most `depth` positions: it clicks the highest promoted product shown
/// there, or leaves at position `depth` without clicking.
#[derive(Debug, Clone)]
pub struct BoostAttack {
    promoted: BTreeSet<usize>,
    depth: usize,
    fake_prob: f64,
}

impl BoostAttack {
    pub fn new(promoted: impl IntoIterator<Item = usize>, depth: usize, fake_prob: f64) -> Result<Self> {
        let promoted: BTreeSet<usize> = promoted.into_iter().collect();
        if promoted.is_empty() {
            return Err(Error::InvalidAdversary("promoted set must not be empty".into()));
        }
        if depth == 0 {
            return Err(Error::InvalidAdversary("attention depth must be positive".into()));
        }
        if !(0.0..=1.0).contains(&fake_prob) {
            return Err(Error::InvalidAdversary(format!(
                "fake probability {fake_prob} outside [0, 1]"
            )));
        }
        Ok(BoostAttack {
            promoted,
            depth,
            fake_prob,
        })
    }
}

impl FakePolicy for BoostAttack {
    fn name(&self) -> &str {
        "boost"
    }

    fn act(&mut self, _round: u64, ranking: &Ranking, rng: &mut dyn RngCore) -> AdversaryAction {
        if !rng.gen_bool(self.fake_prob) {
            return AdversaryAction::real();
        }
        let depth = self.depth.min(ranking.len());
        ranking.as_slice()[..depth]
            .iter()
            .position(|p| self.promoted.contains(p))
            .map(|pos| AdversaryAction::fake_click(ranking.product_at(pos), pos))
            .unwrap_or(AdversaryAction::fake_exit(depth - 1))
    }
}

/// Enforces the fakeness budget around any policy and checks action legality.
pub struct BudgetedAdversary {
    policy: Box<dyn FakePolicy>,
    budget: u64,
    spent: u64,
}

impl BudgetedAdversary {
    pub fn new(policy: Box<dyn FakePolicy>, budget: u64) -> Self {
        BudgetedAdversary {
            policy,
            budget,
            spent: 0,
        }
    }

    pub fn null() -> Self {
        Self::new(Box::new(NullPolicy), 0)
    }

    pub fn name(&self) -> &str {
        self.policy.name()
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn spent(&self) -> u64 {
        self.spent
    }

    pub fn remaining(&self) -> u64 {
        self.budget - self.spent
    }

    pub fn act(&mut self, round: u64, ranking: &Ranking, rng: &mut dyn RngCore) -> Result<AdversaryAction> {
        if self.spent >= self.budget {
            return Ok(AdversaryAction::real());
        }
        let action = self.policy.act(round, ranking, rng);
        action.validate(ranking)?;
        if action.fake {
            self.spent += 1;
        }
        Ok(action)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn null_policy_never_fakes() {
        let mut adv = BudgetedAdversary::null();
        let r = Ranking::identity(3);
        let mut rng = rng();
        for t in 1..=100 {
            assert!(!adv.act(t, &r, &mut rng).unwrap().fake);
        }
        assert_eq!(adv.spent(), 0);
    }

    #[test]
    fn zero_budget_silences_any_policy() {
        let mut adv = BudgetedAdversary::new(Box::new(BoostAttack::new([0], 2, 1.0).unwrap()), 0);
        let r = Ranking::identity(3);
        let mut rng = rng();
        assert!((1..=50).all(|t| !adv.act(t, &r, &mut rng).unwrap().fake));
    }

    #[test]
    fn ucb_attack_phases() {
        let horizon = 100_000;
        // ceil(ln 1e5) = 12
        assert_eq!(UcbAttack::budget(horizon), 576);
        let mut attack = UcbAttack::new(2, horizon).unwrap();
        let phase = attack.phase_len();
        assert_eq!(phase, 288);
        let mut rng = rng();
        let top_one = Ranking::identity(2);
        let top_two = Ranking::new(vec![1, 0]).unwrap();
        assert_eq!(attack.act(1, &top_one, &mut rng), AdversaryAction::fake_exit(0));
        assert_eq!(attack.act(phase, &top_two, &mut rng), AdversaryAction::fake_exit(0));
        assert_eq!(attack.act(phase + 5, &top_two, &mut rng), AdversaryAction::fake_click(1, 0));
        assert_eq!(attack.act(phase + 5, &top_one, &mut rng), AdversaryAction::fake_exit(0));
        assert!(!attack.act(2 * phase + 1, &top_two, &mut rng).fake);
    }

    #[test]
    fn ucb_attack_requires_two_products() {
        assert!(matches!(UcbAttack::new(3, 100), Err(Error::InvalidAdversary(_))));
    }

    #[test]
    fn ucb_attack_spends_exactly_its_budget() {
        let horizon = 1_000;
        let budget = UcbAttack::budget(horizon);
        let mut adv = BudgetedAdversary::new(Box::new(UcbAttack::new(2, horizon).unwrap()), budget);
        let mut rng = rng();
        let r = Ranking::identity(2);
        for t in 1..=horizon {
            adv.act(t, &r, &mut rng).unwrap();
            assert_eq!(adv.spent(), t.min(budget));
        }
    }

    #[test]
    fn boost_clicks_highest_promoted_in_view() {
        let mut attack = BoostAttack::new([5, 6], 4, 1.0).unwrap();
        let mut rng = rng();
        let r = Ranking::new(vec![0, 1, 5, 2, 6, 3, 4, 7, 8, 9]).unwrap();
        assert_eq!(attack.act(1, &r, &mut rng), AdversaryAction::fake_click(5, 2));
        let r = Ranking::new(vec![0, 6, 5, 2, 1, 3, 4, 7, 8, 9]).unwrap();
        assert_eq!(attack.act(1, &r, &mut rng), AdversaryAction::fake_click(6, 1));
    }

    #[test]
    fn boost_withholds_when_promoted_out_of_view() {
        let mut attack = BoostAttack::new([5, 6], 4, 1.0).unwrap();
        let mut rng = rng();
        let r = Ranking::identity(10);
        assert_eq!(attack.act(1, &r, &mut rng), AdversaryAction::fake_exit(3));
    }

    #[test]
    fn boost_depth_is_clipped_to_ranking() {
        let mut attack = BoostAttack::new([9], 4, 1.0).unwrap();
        let mut rng = rng();
        assert_eq!(attack.act(1, &Ranking::identity(2), &mut rng), AdversaryAction::fake_exit(1));
    }

    #[test]
    fn boost_respects_budget_and_probability() {
        let budget = 300;
        let mut adv = BudgetedAdversary::new(Box::new(BoostAttack::new([1], 2, 0.75).unwrap()), budget);
        let mut rng = rng();
        let r = Ranking::identity(4);
        let mut fakes_in_first_100 = 0;
        for t in 1..=2_000 {
            let a = adv.act(t, &r, &mut rng).unwrap();
            if t <= 100 && a.fake {
                fakes_in_first_100 += 1;
            }
            assert!(adv.spent() <= budget);
        }
        assert_eq!(adv.spent(), budget);
        // binomial(100, 0.75): mean 75, sd 4.3
        assert!((60..=90).contains(&fakes_in_first_100));
    }

    #[test]
    fn illegal_actions_are_rejected() {
        struct Liar;
        impl FakePolicy for Liar {
            fn name(&self) -> &str {
                "liar"
            }
            fn act(&mut self, _: u64, _: &Ranking, _: &mut dyn RngCore) -> AdversaryAction {
                AdversaryAction::fake_click(1, 0)
            }
        }
        let mut adv = BudgetedAdversary::new(Box::new(Liar), 5);
        let mut rng = rng();
        assert!(adv.act(1, &Ranking::identity(2), &mut rng).is_err());
    }

    #[test]
    fn invalid_boost_parameters() {
        assert!(BoostAttack::new([], 4, 0.5).is_err());
        assert!(BoostAttack::new([1], 0, 0.5).is_err());
        assert!(BoostAttack::new([1], 4, 1.5).is_err());
    }
}
