//! Cascade click model: ground-truth instance, rankings and customer sessions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground-truth market: per-product click probabilities and per-position exit
/// probabilities.
///
/// `q[p]` is the probability that a customer who did not click at position `p`
/// leaves. There is no exit probability for the last position; a customer who
/// reaches it without clicking always leaves there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceRepr", into = "InstanceRepr")]
pub struct Instance {
    mu: Vec<f64>,
    q: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct InstanceRepr {
    mu: Vec<f64>,
    q: Vec<f64>,
}

impl TryFrom<InstanceRepr> for Instance {
    type Error = Error;

    fn try_from(repr: InstanceRepr) -> Result<Self> {
        Instance::new(repr.mu, repr.q)
    }
}

impl From<Instance> for InstanceRepr {
    fn from(instance: Instance) -> Self {
        InstanceRepr {
            mu: instance.mu,
            q: instance.q,
        }
    }
}

impl Instance {
    pub fn new(mu: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        let n = mu.len();
        if n == 0 {
            return Err(Error::InvalidInstance("at least one product is required".into()));
        }
        if let Some((i, m)) = mu
            .iter()
            .enumerate()
            .find(|(_, m)| !(m.is_finite() && **m > 0.0 && **m < 1.0))
        {
            return Err(Error::InvalidInstance(format!(
                "mu[{i}] = {m} is outside the open interval (0, 1)"
            )));
        }
        if q.len() != n - 1 {
            return Err(Error::InvalidInstance(format!(
                "q must have n - 1 = {} entries, got {}",
                n - 1,
                q.len()
            )));
        }
        if let Some((p, v)) = q
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(Error::InvalidInstance(format!("q[{p}] = {v} is outside [0, 1]")));
        }
        // Exact comparison: ties make the optimal ranking ambiguous.
        let mut sorted = mu.clone();
        sorted.sort_by(f64::total_cmp);
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidInstance(format!(
                "click probabilities must be distinct, {} appears twice",
                w[0]
            )));
        }
        Ok(Instance { mu, q })
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// Reward gap `mu[j] - mu[i]`.
    pub fn gap(&self, j: usize, i: usize) -> f64 {
        self.mu[j] - self.mu[i]
    }

    pub fn max_mu(&self) -> f64 {
        self.mu.iter().copied().fold(f64::MIN, f64::max)
    }

    /// Products sorted by click probability, best first.
    pub fn optimal_ranking(&self) -> Ranking {
        let mut perm: Vec<usize> = (0..self.n()).collect();
        perm.sort_by(|&a, &b| self.mu[b].total_cmp(&self.mu[a]));
        Ranking::from_perm_unchecked(perm)
    }

    /// Probability that a real customer clicks some product under `ranking`.
    pub fn expected_engagement(&self, ranking: &Ranking) -> f64 {
        assert_eq!(ranking.len(), self.n(), "ranking size does not match instance");
        let mut reach = 1.0;
        let mut total = 0.0;
        for (p, &product) in ranking.as_slice().iter().enumerate() {
            let mu = self.mu[product];
            total += reach * mu;
            reach *= 1.0 - mu;
            if let Some(q) = self.q.get(p) {
                reach *= 1.0 - q;
            }
        }
        total
    }

    /// Simulates one real customer walking down `ranking`.
    ///
    /// Each examined position consumes one uniform draw for the click and, if
    /// there is no click and the position is not last, one for the exit.
    pub fn sample_session<R: Rng + ?Sized>(&self, ranking: &Ranking, rng: &mut R) -> Observation {
        assert_eq!(ranking.len(), self.n(), "ranking size does not match instance");
        let last = self.n() - 1;
        for (p, &product) in ranking.as_slice().iter().enumerate() {
            if rng.gen::<f64>() < self.mu[product] {
                return Observation::click(product, p);
            }
            if p < last && rng.gen::<f64>() < self.q[p] {
                return Observation::exit(p);
            }
        }
        Observation::exit(last)
    }
}

/// A permutation of products over positions. `product_at(p)` is the product in
/// position `p`; `position_of(i)` is its inverse.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ranking {
    perm: Vec<usize>,
    inverse: Vec<usize>,
}

impl Ranking {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let n = perm.len();
        let mut seen = vec![false; n];
        for &product in &perm {
            if product >= n {
                return Err(Error::InvalidRanking(format!(
                    "product {product} out of range for {n} positions"
                )));
            }
            if std::mem::replace(&mut seen[product], true) {
                return Err(Error::InvalidRanking(format!("product {product} appears twice")));
            }
        }
        Ok(Self::from_perm_unchecked(perm))
    }

    pub(crate) fn from_perm_unchecked(perm: Vec<usize>) -> Self {
        let mut inverse = vec![0; perm.len()];
        for (p, &product) in perm.iter().enumerate() {
            inverse[product] = p;
        }
        Ranking { perm, inverse }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_perm_unchecked((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn product_at(&self, position: usize) -> usize {
        self.perm[position]
    }

    pub fn position_of(&self, product: usize) -> usize {
        self.inverse[product]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.perm
    }
}

impl Serialize for Ranking {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.perm.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Ranking {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let perm = Vec::<usize>::deserialize(deserializer)?;
        Ranking::new(perm).map_err(serde::de::Error::custom)
    }
}

/// What the platform sees after a round: the clicked product, if any, and the
/// last examined position. A click always ends the session at the clicked
/// product's position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub clicked: Option<usize>,
    pub exit_position: usize,
}

impl Observation {
    pub fn click(product: usize, position: usize) -> Self {
        Observation {
            clicked: Some(product),
            exit_position: position,
        }
    }

    pub fn exit(position: usize) -> Self {
        Observation {
            clicked: None,
            exit_position: position,
        }
    }

    /// Checks that the observation could have been produced under `ranking`.
    pub fn validate(&self, ranking: &Ranking) -> Result<()> {
        let n = ranking.len();
        if self.exit_position >= n {
            return Err(Error::CorruptObservation(format!(
                "exit position {} beyond last position {}",
                self.exit_position,
                n.saturating_sub(1)
            )));
        }
        if let Some(product) = self.clicked {
            if product >= n {
                return Err(Error::CorruptObservation(format!(
                    "clicked product {product} is not displayed"
                )));
            }
            let shown = ranking.position_of(product);
            if shown != self.exit_position {
                return Err(Error::CorruptObservation(format!(
                    "product {product} shown at position {shown} but exit recorded at {}",
                    self.exit_position
                )));
            }
        }
        Ok(())
    }
}
