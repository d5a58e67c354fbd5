//! Product-ordering graph.
//!
//! An edge `(i, j)` records the inference that product `j` dominates product
//! `i`. Ranking selection fills positions top-down with a product that has no
//! outgoing edge to the products still unplaced, preferring the one with the
//! least feedback.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Ranking;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderGraph {
    n: usize,
    adjacency: Vec<bool>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
    edge_count: usize,
}

/// Result of [`OrderGraph::rank_select`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub ranking: Ranking,
    /// Set when the graph had a cycle and the identity ranking was returned.
    pub arbitrary: bool,
}

impl OrderGraph {
    pub fn new(n: usize) -> Self {
        OrderGraph {
            n,
            adjacency: vec![false; n * n],
            out_edges: vec![Vec::new(); n],
            in_edges: vec![Vec::new(); n],
            edge_count: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && self.adjacency[i * self.n + j]
    }

    /// Adds edge `(i, j)`. Returns whether the edge is new.
    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<bool> {
        for product in [i, j] {
            if product >= self.n {
                return Err(Error::ProductOutOfRange { product, n: self.n });
            }
        }
        if i == j {
            return Err(Error::SelfLoop(i));
        }
        let slot = &mut self.adjacency[i * self.n + j];
        if *slot {
            return Ok(false);
        }
        *slot = true;
        self.out_edges[i].push(j);
        self.in_edges[j].push(i);
        self.edge_count += 1;
        Ok(true)
    }

    /// All edges in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .out_edges
            .iter()
            .enumerate()
            .flat_map(|(i, outs)| outs.iter().map(move |&j| (i, j)))
            .collect();
        edges.sort_unstable();
        edges
    }

    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out_edges[i]
    }

    /// Iterative three-colour depth-first search.
    pub fn has_cycle(&self) -> bool {
        #[derive(Clone, Copy, PartialEq)]
        enum Colour {
            White,
            Grey,
            Black,
        }
        let mut colour = vec![Colour::White; self.n];
        let mut stack: Vec<(usize, usize)> = Vec::new();
        for root in 0..self.n {
            if colour[root] != Colour::White {
                continue;
            }
            colour[root] = Colour::Grey;
            stack.push((root, 0));
            while let Some((node, next)) = stack.last_mut() {
                let node = *node;
                if let Some(&target) = self.out_edges[node].get(*next) {
                    *next += 1;
                    match colour[target] {
                        Colour::Grey => return true,
                        Colour::White => {
                            colour[target] = Colour::Grey;
                            stack.push((target, 0));
                        }
                        Colour::Black => {}
                    }
                } else {
                    colour[node] = Colour::Black;
                    stack.pop();
                }
            }
        }
        false
    }

    /// Graph-driven ranking selection.
    ///
    /// Positions are filled top-down; each step takes, among the unplaced
    /// products with no edge to another unplaced product, the one with the
    /// smallest `(eta, id)`. A cyclic graph yields the identity ranking with
    /// the `arbitrary` flag set. The graph itself is not modified.
    pub fn rank_select(&self, eta: &[u64]) -> Result<Selection> {
        if eta.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: eta.len(),
            });
        }
        let mut pending_out: Vec<usize> = self.out_edges.iter().map(Vec::len).collect();
        let mut free: BinaryHeap<Reverse<(u64, usize)>> = pending_out
            .iter()
            .enumerate()
            .filter(|(_, &d)| d == 0)
            .map(|(i, _)| Reverse((eta[i], i)))
            .collect();
        let mut perm = Vec::with_capacity(self.n);
        while let Some(Reverse((_, product))) = free.pop() {
            perm.push(product);
            for &k in &self.in_edges[product] {
                pending_out[k] -= 1;
                if pending_out[k] == 0 {
                    free.push(Reverse((eta[k], k)));
                }
            }
        }
        if perm.len() < self.n {
            // Products left over all sit on or behind a cycle.
            return Ok(Selection {
                ranking: Ranking::identity(self.n),
                arbitrary: true,
            });
        }
        Ok(Selection {
            ranking: Ranking::from_perm_unchecked(perm),
            arbitrary: false,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl Serialize for OrderGraph {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        GraphRepr {
            n: self.n,
            edges: self.edges(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for OrderGraph {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = GraphRepr::deserialize(deserializer)?;
        let mut graph = OrderGraph::new(repr.n);
        for (i, j) in repr.edges {
            graph.add_edge(i, j).map_err(serde::de::Error::custom)?;
        }
        Ok(graph)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn graph(n: usize, edges: &[(usize, usize)]) -> OrderGraph {
        let mut g = OrderGraph::new(n);
        for &(i, j) in edges {
            g.add_edge(i, j).unwrap();
        }
        g
    }

    /// Cycle oracle: a cycle exists iff some node reaches itself in the
    /// transitive closure (Floyd-Warshall style).
    fn has_cycle_by_closure(g: &OrderGraph) -> bool {
        let n = g.n();
        let mut reach = vec![vec![false; n]; n];
        for (i, j) in g.edges() {
            reach[i][j] = true;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if reach[i][k] && reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
        (0..n).any(|i| reach[i][i])
    }

    /// Step-scan oracle: rescans all remaining products at each position.
    fn rank_by_scan(g: &OrderGraph, eta: &[u64]) -> Vec<usize> {
        let n = g.n();
        let mut remaining: Vec<usize> = (0..n).collect();
        let mut out = Vec::new();
        while !remaining.is_empty() {
            let pick = remaining
                .iter()
                .copied()
                .filter(|&i| !remaining.iter().any(|&j| g.contains(i, j)))
                .min_by_key(|&i| (eta[i], i))
                .expect("acyclic graph always has a free node");
            out.push(pick);
            remaining.retain(|&x| x != pick);
        }
        out
    }

    fn random_dag(rng: &mut ChaCha8Rng, n: usize) -> OrderGraph {
        // Edges only point from later to earlier in a random order.
        let mut order: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), rng);
        let density = rng.gen_range(0.0..1.0);
        let mut g = OrderGraph::new(n);
        for a in 0..n {
            for b in 0..a {
                if rng.gen_bool(density) {
                    g.add_edge(order[a], order[b]).unwrap();
                }
            }
        }
        g
    }

    #[test]
    fn add_edge_examples() {
        let mut g = OrderGraph::new(3);
        assert!(g.add_edge(1, 0).unwrap());
        assert!(!g.add_edge(1, 0).unwrap());
        assert_eq!(g.edges(), vec![(1, 0)]);
        assert!(matches!(g.add_edge(2, 2), Err(Error::SelfLoop(2))));
        assert!(!g.has_cycle());
        g.add_edge(0, 1).unwrap();
        assert!(g.has_cycle());
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn cycle_examples() {
        assert!(!graph(3, &[(0, 1), (1, 2)]).has_cycle());
        assert!(graph(2, &[(0, 1), (1, 0)]).has_cycle());
        assert!(graph(4, &[(0, 1), (1, 2), (2, 3), (3, 1)]).has_cycle());
    }

    #[test]
    fn random_dags_have_no_cycle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let n = rng.gen_range(1..=8);
            let g = random_dag(&mut rng, n);
            assert!(!g.has_cycle());
            assert!(!has_cycle_by_closure(&g));
        }
    }

    #[test]
    fn cycle_detection_matches_closure_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let n = rng.gen_range(2..=7);
            let mut g = OrderGraph::new(n);
            let edges = rng.gen_range(0..n * 2);
            for _ in 0..edges {
                let i = rng.gen_range(0..n);
                let j = rng.gen_range(0..n);
                if i != j {
                    g.add_edge(i, j).unwrap();
                }
            }
            assert_eq!(g.has_cycle(), has_cycle_by_closure(&g));
        }
    }

    #[test]
    fn empty_graph_ranks_by_eta() {
        let sel = OrderGraph::new(3).rank_select(&[3, 1, 2]).unwrap();
        assert_eq!(sel.ranking.as_slice(), &[1, 2, 0]);
        assert!(!sel.arbitrary);
    }

    #[test]
    fn worked_example_with_six_products() {
        // 1-based edges {(1,2),(3,1),(5,3),(6,3)}, eta = (20,15,15,10,1,10)
        let g = graph(6, &[(0, 1), (2, 0), (4, 2), (5, 2)]);
        let eta = [20, 15, 15, 10, 1, 10];
        let sel = g.rank_select(&eta).unwrap();
        let one_based: Vec<usize> = sel.ranking.as_slice().iter().map(|p| p + 1).collect();
        assert_eq!(one_based, vec![4, 2, 1, 3, 5, 6]);
        assert_eq!(rank_by_scan(&g, &eta), sel.ranking.as_slice());
    }

    #[test]
    fn cyclic_graph_returns_flagged_identity() {
        let g = graph(2, &[(0, 1), (1, 0)]);
        let sel = g.rank_select(&[5, 0]).unwrap();
        assert_eq!(sel.ranking, Ranking::identity(2));
        assert!(sel.arbitrary);
    }

    #[test]
    fn eta_length_is_checked() {
        assert!(matches!(
            OrderGraph::new(3).rank_select(&[0, 0]),
            Err(Error::LengthMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn rank_select_matches_scan_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..2000 {
            let n = rng.gen_range(1..=5);
            let g = random_dag(&mut rng, n);
            let eta: Vec<u64> = (0..n).map(|_| rng.gen_range(0..4)).collect();
            let sel = g.rank_select(&eta).unwrap();
            assert!(!sel.arbitrary);
            assert_eq!(sel.ranking.as_slice(), rank_by_scan(&g, &eta).as_slice());
        }
    }

    #[test]
    fn json_round_trip_uses_sorted_edges() {
        let g = graph(3, &[(2, 0), (1, 0)]);
        let json = serde_json::to_string(&g).unwrap();
        assert_eq!(json, r#"{"n":3,"edges":[[1,0],[2,0]]}"#);
        let back: OrderGraph = serde_json::from_str(&json).unwrap();
        assert_eq!(back.edges(), g.edges());
    }

    proptest! {
        #[test]
        fn acyclic_output_respects_every_edge(
            seed in any::<u64>(),
            n in 1usize..9,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_dag(&mut rng, n);
            let eta: Vec<u64> = (0..n).map(|_| rng.gen_range(0..10)).collect();
            let sel = g.rank_select(&eta).unwrap();
            for (i, j) in g.edges() {
                prop_assert!(sel.ranking.position_of(j) < sel.ranking.position_of(i));
            }
            prop_assert_eq!(&sel, &g.rank_select(&eta).unwrap());
        }

        #[test]
        fn first_pick_has_minimal_eta_among_free(
            seed in any::<u64>(),
            n in 1usize..9,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_dag(&mut rng, n);
            let eta: Vec<u64> = (0..n).map(|_| rng.gen_range(0..10)).collect();
            let first = g.rank_select(&eta).unwrap().ranking.product_at(0);
            let best = (0..n)
                .filter(|&i| g.out_neighbors(i).is_empty())
                .min_by_key(|&i| (eta[i], i))
                .unwrap();
            prop_assert_eq!(first, best);
        }
    }
}
