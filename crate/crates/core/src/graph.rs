//! Undirected friendship graph in compressed sparse row form.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::{UserId, UserRecord};

/// Symmetric, loop-free adjacency over dense user ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SocialGraph {
    offsets: Vec<usize>,
    neighbors: Vec<UserId>,
}

impl SocialGraph {
    /// Build from `(u, v)` pairs over `n_users` nodes. One-sided pairs are
    /// closed symmetrically; self-loops and duplicates are dropped.
    pub fn from_pairs(n_users: usize, pairs: impl IntoIterator<Item = (UserId, UserId)>) -> Self {
        let mut directed: Vec<(UserId, UserId)> = Vec::new();
        for (u, v) in pairs {
            if u != v {
                directed.push((u, v));
                directed.push((v, u));
            }
        }
        directed.sort_unstable();
        directed.dedup();

        // symmetric, so the largest source id is the largest id overall
        let n = directed.last().map_or(0, |&(u, _)| u as usize + 1).max(n_users);
        let mut offsets = vec![0usize; n + 1];
        for &(u, _) in &directed {
            offsets[u as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let neighbors = directed.into_iter().map(|(_, v)| v).collect();
        SocialGraph { offsets, neighbors }
    }

    pub fn n_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    /// Sorted neighbor list; empty for unknown ids.
    pub fn neighbors(&self, u: UserId) -> &[UserId] {
        let u = u as usize;
        if u + 1 >= self.offsets.len() {
            return &[];
        }
        &self.neighbors[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn degree(&self, u: UserId) -> usize {
        self.neighbors(u).len()
    }

    pub fn are_friends(&self, u: UserId, v: UserId) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Each undirected edge once, as `(min, max)`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (UserId, UserId)> + '_ {
        (0..self.n_nodes() as UserId).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    /// Debug export: one `u v` line per undirected edge.
    pub fn write_edge_list(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        for (u, v) in self.edges() {
            writeln!(w, "{u} {v}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Friendship graph from user records. Friends that have no record of their
/// own remain as nodes and keep the degree their mentions give them.
pub fn build_graph(n_users: usize, users: &[Option<UserRecord>]) -> SocialGraph {
    let pairs = users
        .iter()
        .flatten()
        .flat_map(|u| u.friends.iter().map(move |&f| (u.user_id, f)));
    SocialGraph::from_pairs(n_users, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use std::collections::BTreeSet;

    fn user(id: UserId, friends: &[UserId]) -> Option<UserRecord> {
        Some(UserRecord {
            user_id: id,
            friends: friends.to_vec(),
            review_count: 0,
            average_stars: None,
            yelping_since: None,
            fans: 0,
            elite_years: 0,
        })
    }

    #[test]
    fn one_sided_friendship_is_closed() {
        let g = build_graph(2, &[user(0, &[1]), user(1, &[])]);
        assert!(g.are_friends(0, 1));
        assert!(g.are_friends(1, 0));
        assert_eq!(g.n_edges(), 1);
    }

    #[test]
    fn self_loop_dropped() {
        let g = build_graph(1, &[user(0, &[0])]);
        assert!(!g.are_friends(0, 0));
        assert_eq!(g.degree(0), 0);
    }

    #[test]
    fn unknown_ids_are_not_friends() {
        let g = build_graph(2, &[user(0, &[1])]);
        assert!(!g.are_friends(0, 99));
        assert!(!g.are_friends(99, 0));
        assert_eq!(g.degree(42), 0);
    }

    #[test]
    fn friend_without_record_keeps_degree() {
        let g = build_graph(3, &[user(0, &[2]), None, None]);
        assert_eq!(g.degree(2), 1);
        assert!(g.are_friends(2, 0));
    }

    fn random_users(seed: u64, n: u32, p: f64) -> (Vec<Option<UserRecord>>, BTreeSet<(u32, u32)>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut lists = vec![Vec::new(); n as usize];
        let mut edges = BTreeSet::new();
        for u in 0..n {
            for v in 0..n {
                // each side lists independently; the union defines the edge set
                if u != v && rng.gen_bool(p) {
                    lists[u as usize].push(v);
                    edges.insert((u.min(v), u.max(v)));
                }
            }
        }
        let users = lists
            .into_iter()
            .enumerate()
            .map(|(i, f)| user(i as u32, &f))
            .collect();
        (users, edges)
    }

    #[test]
    fn handshake_lemma_on_random_graphs() {
        for seed in 0..5 {
            let (users, edges) = random_users(seed, 100, 0.03);
            let g = build_graph(100, &users);
            let degree_sum: usize = (0..100).map(|u| g.degree(u)).sum();
            assert_eq!(degree_sum, 2 * edges.len());
            assert_eq!(g.n_edges(), edges.len());
        }
    }

    #[test]
    fn are_friends_matches_edge_set_exhaustively() {
        let (users, edges) = random_users(9, 100, 0.05);
        let g = build_graph(100, &users);
        for u in 0..100 {
            for v in 0..100 {
                let expected = edges.contains(&(u.min(v), u.max(v))) && u != v;
                assert_eq!(g.are_friends(u, v), expected, "pair ({u},{v})");
                assert_eq!(g.are_friends(u, v), g.are_friends(v, u));
            }
        }
    }

    #[test]
    fn neighbor_lists_sorted_and_unique() {
        let g = SocialGraph::from_pairs(4, [(0, 3), (3, 0), (0, 1), (2, 0), (0, 1)]);
        assert_eq!(g.neighbors(0), &[1, 2, 3]);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (0, 2), (0, 3)]);
    }
}
