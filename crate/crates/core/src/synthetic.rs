//! Synthetic Yelp-format datasets with known influence edges.
//!
//! Activity starts from seed events (a random user acting on a random
//! business) and spreads along friendships: every friend of an actor that has
//! not yet acted on the business follows with `influence_probability`, a few
//! days later or occasionally on the same day. Every propagation step is
//! recorded as a ground-truth edge.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::graph::{build_graph, SocialGraph};
use crate::ingest::{ingest_from_memory, DatasetPaths, Event, IngestResult};

const CITIES: [&str; 6] = ["Las Vegas", "Phoenix", "Charlotte", "Pittsburgh", "Madison", "Edinburgh"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FriendTopology {
    /// Each unordered pair is friends with probability `friendship_density`.
    Random,
    /// Users split into disjoint paths of `length` consecutive ids.
    Chains { length: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub users: usize,
    pub businesses: usize,
    pub events: usize,
    pub friendship_density: f64,
    pub influence_probability: f64,
    pub cities: usize,
    pub topology: FriendTopology,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            users: 50,
            businesses: 10,
            events: 200,
            friendship_density: 0.1,
            influence_probability: 0.3,
            cities: 2,
            topology: FriendTopology::Random,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthEdge {
    pub business: String,
    pub src: String,
    pub dst: String,
}

/// The four JSON-lines files as strings, plus the propagation record.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub business: String,
    pub user: String,
    pub review: String,
    pub tip: String,
    pub truth_edges: Vec<TruthEdge>,
}

impl SyntheticDataset {
    /// Writes `business.json`, `user.json`, `review.json`, `tip.json` and
    /// `ground_truth_edges.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<DatasetPaths> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = DatasetPaths::in_dir(dir);
        for (path, body) in [
            (&paths.business, &self.business),
            (&paths.user, &self.user),
            (&paths.review, &self.review),
            (&paths.tip, &self.tip),
        ] {
            std::fs::write(path, body).map_err(|e| Error::io(path, e))?;
        }
        let truth = dir.join("ground_truth_edges.csv");
        let mut w = csv::Writer::from_path(&truth)?;
        w.write_record(["business_id", "src_user_id", "dst_user_id"])?;
        for e in &self.truth_edges {
            w.write_record([&e.business, &e.src, &e.dst])?;
        }
        w.flush().map_err(|e| Error::io(&truth, e))?;
        Ok(paths)
    }

    pub fn ingest(&self) -> Result<IngestResult> {
        ingest_from_memory(&self.business, &self.user, &self.review, &self.tip)
    }
}

fn user_key(i: usize) -> String {
    format!("u{i:05}")
}

fn business_key(i: usize) -> String {
    format!("b{i:04}")
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> SyntheticDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_users = cfg.users.max(1);
    let n_businesses = cfg.businesses.max(1);
    let n_cities = cfg.cities.clamp(1, CITIES.len());

    // friendships; some are listed by one side only
    let mut lists: Vec<Vec<usize>> = vec![Vec::new(); n_users];
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n_users];
    let mut befriend = |a: usize, b: usize, rng: &mut ChaCha8Rng| {
        adjacency[a].push(b);
        adjacency[b].push(a);
        match rng.gen_range(0..4) {
            0 => lists[a].push(b),
            1 => lists[b].push(a),
            _ => {
                lists[a].push(b);
                lists[b].push(a);
            }
        }
    };
    let mut chain_heads = Vec::new();
    match cfg.topology {
        FriendTopology::Random => {
            for a in 0..n_users {
                for b in a + 1..n_users {
                    if rng.gen_bool(cfg.friendship_density.clamp(0.0, 1.0)) {
                        befriend(a, b, &mut rng);
                    }
                }
            }
        }
        FriendTopology::Chains { length } => {
            let length = length.max(1);
            for a in 0..n_users {
                if a % length == 0 {
                    chain_heads.push(a);
                } else {
                    befriend(a - 1, a, &mut rng);
                }
            }
        }
    }

    let mut business = String::new();
    const CATEGORIES: [&str; 4] = ["Restaurants", "Bars", "Coffee & Tea", "Nightlife"];
    for b in 0..n_businesses {
        let categories = CATEGORIES[..rng.gen_range(1..=4)].join(", ");
        let line = json!({
            "business_id": business_key(b),
            "name": format!("Business {b}"),
            "city": CITIES[b % n_cities],
            "stars": rng.gen_range(2..=10) as f64 / 2.0,
            "review_count": rng.gen_range(3..400),
            "categories": categories,
            "is_open": rng.gen_range(0..5).min(1),
        });
        writeln!(business, "{line}").unwrap();
    }

    let mut user = String::new();
    for (u, friends) in lists.iter().enumerate() {
        // a few users exist only as friends or authors
        if rng.gen_bool(0.05) {
            continue;
        }
        let since = NaiveDate::from_ymd_opt(2005, 1, 1).unwrap() + Days::new(rng.gen_range(0..1500));
        let elite: Vec<String> = (0..rng.gen_range(0..3)).map(|i| (2010 + i).to_string()).collect();
        let line = json!({
            "user_id": user_key(u),
            "name": format!("User {u}"),
            "friends": friends.iter().map(|&f| user_key(f)).collect::<Vec<_>>().join(", "),
            "review_count": rng.gen_range(0..300),
            "average_stars": (rng.gen_range(10..=50) as f64) / 10.0,
            "yelping_since": since.format("%Y-%m-%d").to_string(),
            "fans": rng.gen_range(0..20),
            "elite": elite.join(","),
        });
        writeln!(user, "{line}").unwrap();
    }

    let start = NaiveDate::from_ymd_opt(2009, 1, 1).unwrap();
    let mut review = String::new();
    let mut tip = String::new();
    let mut truth_edges = Vec::new();
    let mut acted: Vec<HashSet<usize>> = vec![HashSet::new(); n_businesses];
    let mut emitted = 0usize;
    let mut review_no = 0usize;

    let mut emit = |u: usize, b: usize, date: NaiveDate, rng: &mut ChaCha8Rng| {
        let text = "x".repeat(rng.gen_range(0..400));
        let date = format!("{} {:02}:{:02}:00", date.format("%Y-%m-%d"), rng.gen_range(0..24), rng.gen_range(0..60));
        if rng.gen_bool(0.25) {
            let line = json!({
                "user_id": user_key(u),
                "business_id": business_key(b),
                "date": date,
                "text": text,
                "likes": rng.gen_range(0..4),
            });
            writeln!(tip, "{line}").unwrap();
        } else {
            review_no += 1;
            let line = json!({
                "review_id": format!("r{review_no:07}"),
                "user_id": user_key(u),
                "business_id": business_key(b),
                "stars": rng.gen_range(1..=5),
                "date": date,
                "text": text,
                "useful": rng.gen_range(0..5),
                "funny": rng.gen_range(0..3),
                "cool": rng.gen_range(0..3),
            });
            writeln!(review, "{line}").unwrap();
        }
    };

    while emitted < cfg.events {
        let seed_user = if chain_heads.is_empty() {
            rng.gen_range(0..n_users)
        } else {
            *chain_heads.choose(&mut rng).unwrap()
        };
        let b = rng.gen_range(0..n_businesses);
        let date = start + Days::new(rng.gen_range(0..5 * 365));
        emit(seed_user, b, date, &mut rng);
        emitted += 1;
        acted[b].insert(seed_user);

        let mut frontier = VecDeque::from([(seed_user, date)]);
        while let Some((u, d)) = frontier.pop_front() {
            for &f in &adjacency[u] {
                if emitted >= cfg.events {
                    break;
                }
                if acted[b].contains(&f) || !rng.gen_bool(cfg.influence_probability.clamp(0.0, 1.0)) {
                    continue;
                }
                let lag = if rng.gen_bool(0.1) { 0 } else { rng.gen_range(1..=21) };
                let fd = d + Days::new(lag);
                emit(f, b, fd, &mut rng);
                emitted += 1;
                acted[b].insert(f);
                truth_edges.push(TruthEdge {
                    business: business_key(b),
                    src: user_key(u),
                    dst: user_key(f),
                });
                frontier.push_back((f, fd));
            }
        }
    }

    SyntheticDataset {
        business,
        user,
        review,
        tip,
        truth_edges,
    }
}

/// Generated events and friendship graph, skipping the file round trip.
pub fn generate_events(cfg: &SyntheticConfig) -> (BTreeMap<String, Vec<Event>>, SocialGraph) {
    let data = generate_synthetic(cfg)
        .ingest()
        .expect("synthetic data always ingests");
    let graph = build_graph(data.n_users(), &data.users);
    (data.events, graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ingest_dataset;

    #[test]
    fn parses_with_zero_drops() {
        let cfg = SyntheticConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let paths = generate_synthetic(&cfg).write_to(dir.path()).unwrap();
        let data = ingest_dataset(&paths).unwrap();
        assert_eq!(data.n_events(), 200);
        for c in [data.drops.business, data.drops.user, data.drops.review, data.drops.tip] {
            assert_eq!(c.dropped(), 0, "{c:?}");
            assert_eq!(c.retained, c.lines);
        }
        assert!(dir.path().join("ground_truth_edges.csv").is_file());
    }

    #[test]
    fn deterministic_in_seed() {
        let cfg = SyntheticConfig::default();
        let a = generate_synthetic(&cfg);
        let b = generate_synthetic(&cfg);
        assert_eq!(a.review, b.review);
        assert_eq!(a.truth_edges, b.truth_edges);
        let c = generate_synthetic(&SyntheticConfig { seed: 8, ..cfg });
        assert_ne!(a.review, c.review);
    }

    #[test]
    fn zero_influence_records_no_truth_edges() {
        let cfg = SyntheticConfig {
            influence_probability: 0.0,
            ..SyntheticConfig::default()
        };
        assert!(generate_synthetic(&cfg).truth_edges.is_empty());
    }
}
