//! Per-business influence cascades.
//!
//! For one business every participating user is collapsed to their first
//! event. A directed edge `u -> v` joins friends `u` and `v` when `u` acted
//! strictly earlier than `v` (and within the optional window). Friends acting
//! on the same day get edges in both directions. Cascades are the weakly
//! connected components of that graph with at least two nodes.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::census::Digraph;
use crate::error::{Error, Result};
use crate::graph::SocialGraph;
use crate::ingest::{BusinessId, Event, EventKind, UserId};

/// `(city, business, component index)`; ordered field by field.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CascadeId {
    pub city: String,
    pub business: BusinessId,
    pub component: u32,
}

impl fmt::Display for CascadeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.city, self.business, self.component)
    }
}

impl FromStr for CascadeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidData(format!("malformed cascade id `{s}`"));
        let mut parts = s.rsplitn(3, '/');
        let component = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        let business = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        let city = parts.next().ok_or_else(bad)?.to_string();
        Ok(CascadeId {
            city,
            business,
            component,
        })
    }
}

impl Serialize for CascadeId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CascadeId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CascadeNode {
    pub user: UserId,
    pub date: NaiveDate,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cascade {
    pub id: CascadeId,
    /// Sorted by (date, user).
    pub nodes: Vec<CascadeNode>,
    /// Sorted lexicographically by (src, dst) user id.
    pub edges: Vec<(UserId, UserId)>,
}

impl Cascade {
    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    pub fn business(&self) -> BusinessId {
        self.id.business
    }

    pub fn city(&self) -> &str {
        &self.id.city
    }

    /// Structure only, with nodes numbered by their position in `nodes`.
    pub fn to_digraph(&self) -> Digraph {
        let index: HashMap<UserId, u32> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.user, i as u32))
            .collect();
        Digraph::new(
            self.nodes.len(),
            self.edges.iter().map(|(s, d)| (index[s], index[d])),
        )
    }
}

#[derive(Serialize, Deserialize)]
struct CascadeLine {
    cascade_id: CascadeId,
    city: String,
    business_id: BusinessId,
    nodes: Vec<CascadeNode>,
    edges: Vec<(UserId, UserId)>,
}

/// One cascade per line, cities in key order, cascades in id order.
pub fn write_cascades(path: &Path, cascades: &BTreeMap<String, Vec<Cascade>>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for c in cascades.values().flatten() {
        let line = CascadeLine {
            cascade_id: c.id.clone(),
            city: c.id.city.clone(),
            business_id: c.id.business,
            nodes: c.nodes.clone(),
            edges: c.edges.clone(),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_cascades(path: &Path) -> Result<BTreeMap<String, Vec<Cascade>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out: BTreeMap<String, Vec<Cascade>> = BTreeMap::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CascadeLine = serde_json::from_str(&line)?;
        out.entry(rec.city).or_default().push(Cascade {
            id: rec.cascade_id,
            nodes: rec.nodes,
            edges: rec.edges,
        });
    }
    Ok(out)
}

/// Build the cascades of every city. `events` must be sorted by
/// (business, date, user), as [`crate::ingest::ingest_dataset`] leaves them.
pub fn build_cascades(
    events: &BTreeMap<String, Vec<Event>>,
    graph: &SocialGraph,
    window_days: Option<u32>,
) -> BTreeMap<String, Vec<Cascade>> {
    events
        .iter()
        .map(|(city, evs)| (city.clone(), build_city(city, evs, graph, window_days)))
        .collect()
}

pub fn build_city(
    city: &str,
    events: &[Event],
    graph: &SocialGraph,
    window_days: Option<u32>,
) -> Vec<Cascade> {
    business_groups(events)
        .par_iter()
        .flat_map_iter(|group| build_business(city, group, graph, window_days, EdgeScan::Auto))
        .collect()
}

/// Contiguous runs of equal business id.
fn business_groups(events: &[Event]) -> Vec<&[Event]> {
    events
        .chunk_by(|a, b| a.business == b.business)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum EdgeScan {
    /// Pick whichever of the other two touches fewer pairs.
    Auto,
    /// Walk each participant's friend list.
    Neighbors,
    /// Test every pair of participants.
    Pairs,
}

/// First event of each user, in (date, user) order.
fn first_events(events: &[Event]) -> Vec<CascadeNode> {
    let mut seen = HashSet::new();
    let mut nodes: Vec<CascadeNode> = events
        .iter()
        .filter(|e| seen.insert(e.user))
        .map(|e| CascadeNode {
            user: e.user,
            date: e.date,
            kind: e.kind,
        })
        .collect();
    nodes.sort_by_key(|n| (n.date, n.user));
    nodes
}

fn qualifies(earlier: &CascadeNode, later: &CascadeNode, window_days: Option<u32>) -> bool {
    let gap = (later.date - earlier.date).num_days();
    gap >= 0 && window_days.is_none_or(|w| gap <= w as i64)
}

pub(crate) fn build_business(
    city: &str,
    events: &[Event],
    graph: &SocialGraph,
    window_days: Option<u32>,
    scan: EdgeScan,
) -> Vec<Cascade> {
    let Some(first) = events.first() else {
        return Vec::new();
    };
    let business = first.business;
    let nodes = first_events(events);
    if nodes.len() < 2 {
        return Vec::new();
    }

    let scan = match scan {
        EdgeScan::Auto => {
            let degree_sum: usize = nodes.iter().map(|n| graph.degree(n.user)).sum();
            if degree_sum < nodes.len() * nodes.len() {
                EdgeScan::Neighbors
            } else {
                EdgeScan::Pairs
            }
        }
        s => s,
    };

    // local edges i -> j; same-day friends produce both directions
    let mut local_edges: Vec<(usize, usize)> = Vec::new();
    match scan {
        EdgeScan::Neighbors => {
            let index: HashMap<UserId, usize> =
                nodes.iter().enumerate().map(|(i, n)| (n.user, i)).collect();
            for (i, u) in nodes.iter().enumerate() {
                for f in graph.neighbors(u.user) {
                    if let Some(&j) = index.get(f) {
                        if qualifies(u, &nodes[j], window_days) {
                            local_edges.push((i, j));
                        }
                    }
                }
            }
        }
        EdgeScan::Pairs | EdgeScan::Auto => {
            for (i, u) in nodes.iter().enumerate() {
                for (j, v) in nodes.iter().enumerate() {
                    if i != j && graph.are_friends(u.user, v.user) && qualifies(u, v, window_days) {
                        local_edges.push((i, j));
                    }
                }
            }
        }
    }
    if local_edges.is_empty() {
        return Vec::new();
    }

    let mut dsu = DisjointSet::new(nodes.len());
    for &(i, j) in &local_edges {
        dsu.union(i, j);
    }

    // components ordered by their earliest node
    let mut component_of_root: HashMap<usize, usize> = HashMap::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for i in 0..nodes.len() {
        let root = dsu.find(i);
        let c = *component_of_root.entry(root).or_insert_with(|| {
            members.push(Vec::new());
            members.len() - 1
        });
        members[c].push(i);
    }
    let mut comp_edges: Vec<Vec<(UserId, UserId)>> = vec![Vec::new(); members.len()];
    for &(i, j) in &local_edges {
        let c = component_of_root[&dsu.find(i)];
        comp_edges[c].push((nodes[i].user, nodes[j].user));
    }

    let mut out = Vec::new();
    for (members, mut edges) in members.into_iter().zip(comp_edges) {
        if members.len() < 2 {
            continue;
        }
        edges.sort_unstable();
        out.push(Cascade {
            id: CascadeId {
                city: city.to_string(),
                business,
                component: out.len() as u32,
            },
            nodes: members.into_iter().map(|i| nodes[i]).collect(),
            edges,
        });
    }
    out
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        match self.rank[a].cmp(&self.rank[b]) {
            std::cmp::Ordering::Less => self.parent[a] = b,
            std::cmp::Ordering::Greater => self.parent[b] = a,
            std::cmp::Ordering::Equal => {
                self.parent[b] = a;
                self.rank[a] += 1;
            }
        }
    }
}

/// `⌈p/100 · n⌉`-th smallest value (1-based) of an ascending slice.
pub fn nearest_rank(sorted: &[usize], percentile: f64) -> Option<usize> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len();
    let rank = (percentile * n as f64 / 100.0).ceil() as usize;
    Some(sorted[rank.clamp(1, n) - 1])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub city: String,
    pub cascade_count: usize,
    pub p50: usize,
    pub p75: usize,
    pub p90: usize,
    pub p99: usize,
    pub max: usize,
}

/// Size percentiles (nearest rank) per city; cities without cascades get zeros.
pub fn cascade_summary(cascades: &BTreeMap<String, Vec<Cascade>>) -> Vec<SummaryRow> {
    cascades
        .iter()
        .map(|(city, list)| {
            let mut sizes: Vec<usize> = list.iter().map(Cascade::size).collect();
            sizes.sort_unstable();
            let p = |q| nearest_rank(&sizes, q).unwrap_or(0);
            SummaryRow {
                city: city.clone(),
                cascade_count: sizes.len(),
                p50: p(50.0),
                p75: p(75.0),
                p90: p(90.0),
                p99: p(99.0),
                max: sizes.last().copied().unwrap_or(0),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{SyntheticConfig, generate_events};

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2015, 3, d).unwrap()
    }

    fn event(user: UserId, business: BusinessId, d: u32) -> Event {
        Event {
            user,
            business,
            date: day(d),
            kind: EventKind::Review,
            stars: Some(4),
            text_len: 10,
            useful: 0,
            funny: 0,
            cool: 0,
            likes: 0,
        }
    }

    fn city_of(events: Vec<Event>) -> BTreeMap<String, Vec<Event>> {
        let mut events = events;
        events.sort_by_key(|e| (e.business, e.date, e.user, e.kind));
        BTreeMap::from([("x".to_string(), events)])
    }

    #[test]
    fn two_friends_make_g1() {
        let g = SocialGraph::from_pairs(2, [(0, 1)]);
        let out = build_cascades(&city_of(vec![event(0, 0, 1), event(1, 0, 3)]), &g, None);
        let cs = &out["x"];
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].edges, vec![(0, 1)]);
        assert_eq!(cs[0].size(), 2);
    }

    #[test]
    fn same_day_friends_are_reciprocal() {
        let g = SocialGraph::from_pairs(2, [(0, 1)]);
        let out = build_cascades(&city_of(vec![event(0, 0, 5), event(1, 0, 5)]), &g, None);
        assert_eq!(out["x"][0].edges, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn isolated_reviewer_discarded() {
        let g = SocialGraph::from_pairs(3, [(0, 1)]);
        let out = build_cascades(
            &city_of(vec![event(0, 0, 1), event(1, 0, 2), event(2, 0, 2)]),
            &g,
            None,
        );
        let cs = &out["x"];
        assert_eq!(cs.len(), 1);
        let users: Vec<_> = cs[0].nodes.iter().map(|n| n.user).collect();
        assert_eq!(users, vec![0, 1]);
    }

    #[test]
    fn first_event_collapse() {
        let g = SocialGraph::from_pairs(2, [(0, 1)]);
        // user 0 reviews twice; only day 4 counts, so 1 (day 2) influences 0
        let out = build_cascades(
            &city_of(vec![event(0, 0, 4), event(1, 0, 2), event(0, 0, 9)]),
            &g,
            None,
        );
        let c = &out["x"][0];
        assert_eq!(c.size(), 2);
        assert_eq!(c.edges, vec![(1, 0)]);
    }

    #[test]
    fn window_drops_late_edges() {
        let g = SocialGraph::from_pairs(3, [(0, 1), (0, 2)]);
        let evs = city_of(vec![event(0, 0, 1), event(1, 0, 3), event(2, 0, 20)]);
        assert_eq!(build_cascades(&evs, &g, None)["x"][0].edges.len(), 2);
        let windowed = build_cascades(&evs, &g, Some(5));
        assert_eq!(windowed["x"][0].edges, vec![(0, 1)]);
    }

    #[test]
    fn single_user_business_has_no_cascade() {
        let g = SocialGraph::from_pairs(2, [(0, 1)]);
        let out = build_cascades(&city_of(vec![event(0, 0, 1), event(1, 1, 2)]), &g, None);
        assert!(out["x"].is_empty());
    }

    #[test]
    fn components_are_split_and_indexed() {
        let g = SocialGraph::from_pairs(4, [(0, 1), (2, 3)]);
        let out = build_cascades(
            &city_of(vec![event(2, 7, 1), event(3, 7, 2), event(0, 7, 3), event(1, 7, 4)]),
            &g,
            None,
        );
        let cs = &out["x"];
        assert_eq!(cs.len(), 2);
        assert_eq!(cs[0].id.component, 0);
        assert_eq!(cs[0].edges, vec![(2, 3)]);
        assert_eq!(cs[1].edges, vec![(0, 1)]);
    }

    #[test]
    fn neighbor_and_pair_scans_agree() {
        for seed in 0..20 {
            let cfg = SyntheticConfig {
                users: 40,
                businesses: 6,
                events: 160,
                friendship_density: 0.15,
                seed,
                ..SyntheticConfig::default()
            };
            let (events, graph) = generate_events(&cfg);
            for (city, evs) in &events {
                for group in business_groups(evs) {
                    for window in [None, Some(30)] {
                        let a = build_business(city, group, &graph, window, EdgeScan::Neighbors);
                        let b = build_business(city, group, &graph, window, EdgeScan::Pairs);
                        assert_eq!(a, b);
                    }
                }
            }
        }
    }

    #[test]
    fn cascade_id_round_trip() {
        let id = CascadeId {
            city: "las vegas/nv".into(),
            business: 12,
            component: 3,
        };
        assert_eq!(id.to_string(), "las vegas/nv/12/3");
        assert_eq!(id.to_string().parse::<CascadeId>().unwrap(), id);
        assert!("nope".parse::<CascadeId>().is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let g = SocialGraph::from_pairs(3, [(0, 1), (1, 2)]);
        let evs = city_of(vec![event(0, 0, 1), event(1, 0, 2), event(2, 0, 2)]);
        let cascades = build_cascades(&evs, &g, None);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        write_cascades(&path, &cascades).unwrap();
        assert_eq!(read_cascades(&path).unwrap(), cascades);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(r#"{"cascade_id":"x/0/0","city":"x","business_id":0,"nodes":[{"user":0,"date":"2015-03-01","kind":"review"}"#));
    }

    #[test]
    fn nearest_rank_examples() {
        assert_eq!(nearest_rank(&[2, 2, 2, 10], 90.0), Some(10));
        assert_eq!(nearest_rank(&[5], 90.0), Some(5));
        assert_eq!(nearest_rank(&[2, 2, 2, 2, 2, 2, 2, 2, 2, 20], 90.0), Some(2));
        assert_eq!(nearest_rank(&[], 90.0), None);
    }

    #[test]
    fn summary_rows() {
        let g = SocialGraph::from_pairs(2, [(0, 1)]);
        let mut cascades = build_cascades(&city_of(vec![event(0, 0, 1), event(1, 0, 3)]), &g, None);
        cascades.insert("empty".into(), Vec::new());
        let rows = cascade_summary(&cascades);
        assert_eq!(rows[0].city, "empty");
        assert_eq!(rows[0].cascade_count, 0);
        assert_eq!(rows[0].p90, 0);
        assert_eq!((rows[1].p90, rows[1].max), (2, 2));
    }
}
