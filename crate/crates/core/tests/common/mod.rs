//! Brute-force reference implementations shared by the integration tests.
//! None of them call the library code they are compared against.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use cascade_core::cascade::Cascade;
use cascade_core::ingest::{Event, EventKind, IngestResult, UserRecord};
use chrono::{Datelike, NaiveDate};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Symmetric friend sets from the raw friend lists, self loops dropped.
pub fn friend_sets(n_users: usize, users: &[Option<UserRecord>]) -> Vec<BTreeSet<u32>> {
    let mut sets = vec![BTreeSet::new(); n_users];
    for u in users.iter().flatten() {
        for &f in &u.friends {
            if f != u.user_id {
                sets[u.user_id as usize].insert(f);
                sets[f as usize].insert(u.user_id);
            }
        }
    }
    sets
}

/// One cascade as (sorted users, sorted edges).
pub type Component = (Vec<u32>, Vec<(u32, u32)>);

/// Cascades per (city, business), found by testing every ordered user pair.
pub fn oracle_cascades(
    events: &BTreeMap<String, Vec<Event>>,
    friends: &[BTreeSet<u32>],
) -> BTreeMap<(String, u32), BTreeSet<Component>> {
    let mut out = BTreeMap::new();
    for (city, evs) in events {
        let mut first: BTreeMap<u32, BTreeMap<u32, (NaiveDate, EventKind)>> = BTreeMap::new();
        for e in evs {
            let slot = first.entry(e.business).or_default().entry(e.user).or_insert((e.date, e.kind));
            if (e.date, e.kind) < *slot {
                *slot = (e.date, e.kind);
            }
        }
        for (business, users) in first {
            let list: Vec<(u32, NaiveDate)> = users.iter().map(|(&u, &(d, _))| (u, d)).collect();
            let mut edges = Vec::new();
            for &(u, du) in &list {
                for &(v, dv) in &list {
                    if u != v && friends[u as usize].contains(&v) && du <= dv {
                        edges.push((u, v));
                    }
                }
            }
            // components by repeated flooding
            let mut label: HashMap<u32, u32> = list.iter().map(|&(u, _)| (u, u)).collect();
            loop {
                let mut changed = false;
                for &(a, b) in &edges {
                    let m = label[&a].min(label[&b]);
                    for x in [a, b] {
                        if label[&x] != m {
                            label.insert(x, m);
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            let mut comps: BTreeMap<u32, Component> = BTreeMap::new();
            for &(u, _) in &list {
                comps.entry(label[&u]).or_default().0.push(u);
            }
            for &(a, b) in &edges {
                comps.get_mut(&label[&a]).unwrap().1.push((a, b));
            }
            let set: BTreeSet<Component> = comps
                .into_values()
                .filter(|(nodes, _)| nodes.len() >= 2)
                .map(|(mut n, mut e)| {
                    n.sort_unstable();
                    e.sort_unstable();
                    (n, e)
                })
                .collect();
            if !set.is_empty() {
                out.insert((city.clone(), business), set);
            }
        }
    }
    out
}

pub fn as_component(c: &Cascade) -> Component {
    let mut nodes: Vec<u32> = c.nodes.iter().map(|n| n.user).collect();
    nodes.sort_unstable();
    let mut edges = c.edges.clone();
    edges.sort_unstable();
    (nodes, edges)
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn max(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x)))).unwrap_or(0.0)
}

/// The 30 prefix features, recomputed directly from the ingested tables.
pub fn oracle_features(
    cascade: &Cascade,
    k: usize,
    data: &IngestResult,
    friends: &[BTreeSet<u32>],
) -> [f64; 30] {
    let city = cascade.id.city.as_str();
    let business = cascade.id.business;
    let city_events = &data.events[city];
    let stars: Vec<f64> = city_events.iter().filter_map(|e| e.stars.map(f64::from)).collect();
    let city_mean = if stars.is_empty() { 3.0 } else { mean(&stars) };
    let prefix = &cascade.nodes[..k];
    let first_event = |user: u32| {
        city_events
            .iter()
            .filter(|e| e.business == business && e.user == user)
            .min_by_key(|e| (e.date, e.kind))
    };
    let degree = |u: u32| (friends.get(u as usize).map_or(0, BTreeSet::len) as f64).ln_1p();

    // (review_count_log1p, avg_stars, age_days, fans_log1p, elite)
    let user = |u: u32, on: NaiveDate| -> [f64; 5] {
        match data.users.get(u as usize).and_then(|r| r.as_ref()) {
            None => [0.0, city_mean, 0.0, 0.0, 0.0],
            Some(r) => [
                (r.review_count as f64).ln_1p(),
                r.average_stars.unwrap_or(city_mean),
                r.yelping_since.map_or(0.0, |s| ((on - s).num_days() as f64).max(0.0)),
                (r.fans as f64).ln_1p(),
                r.elite_years as f64,
            ],
        }
    };
    // (stars, text_len_log1p, votes, is_tip)
    let event = |u: u32, kind: EventKind| -> [f64; 4] {
        let tip = if kind == EventKind::Tip { 1.0 } else { 0.0 };
        match first_event(u) {
            None => [city_mean, 0.0, 0.0, tip],
            Some(e) => [
                e.stars.map_or(city_mean, f64::from),
                (e.text_len as f64).ln_1p(),
                (e.useful + e.funny + e.cool + e.likes) as f64,
                tip,
            ],
        }
    };

    let mut v = [0.0; 30];
    match data.businesses.get(business as usize) {
        Some(b) => {
            v[0] = b.stars;
            v[1] = (b.review_count as f64).ln_1p();
            v[2] = b.category_count as f64;
            v[3] = if b.is_open { 1.0 } else { 0.0 };
        }
        None => v[0] = city_mean,
    }

    let root = prefix[0];
    let r = user(root.user, root.date);
    v[4] = degree(root.user);
    v[5..10].copy_from_slice(&r);

    let rest = &prefix[1..];
    let col = |f: &dyn Fn(&cascade_core::cascade::CascadeNode) -> f64| rest.iter().map(f).collect::<Vec<f64>>();
    let degs = col(&|n| degree(n.user));
    let rcs = col(&|n| user(n.user, n.date)[0]);
    v[10] = mean(&degs);
    v[11] = max(&degs);
    v[12] = mean(&rcs);
    v[13] = max(&rcs);
    v[14] = mean(&col(&|n| user(n.user, n.date)[1]));
    v[15] = mean(&col(&|n| user(n.user, n.date)[3]));
    v[16] = mean(&col(&|n| user(n.user, n.date)[4]));
    v[17] = mean(&col(&|n| if friends[root.user as usize].contains(&n.user) { 1.0 } else { 0.0 }));

    let re = event(root.user, root.kind);
    v[18..22].copy_from_slice(&re);
    v[22] = root.date.weekday().num_days_from_monday() as f64;

    v[23] = mean(&col(&|n| event(n.user, n.kind)[0]));
    v[24] = mean(&col(&|n| event(n.user, n.kind)[1]));
    v[25] = mean(&col(&|n| event(n.user, n.kind)[2]));
    v[26] = mean(&col(&|n| event(n.user, n.kind)[3]));

    let gaps: Vec<f64> = (1..k).map(|i| (prefix[i].date - prefix[i - 1].date).num_days() as f64).collect();
    v[27] = mean(&gaps);
    v[28] = max(&gaps);
    v[29] = (prefix[k - 1].date - root.date).num_days() as f64;
    v
}

/// Smallest adjacency bitmask over all relabelings; equal exactly for
/// isomorphic digraphs.
pub fn canonical_form(n: usize, edges: &[(u32, u32)]) -> u64 {
    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![Vec::new()];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for at in 0..=p.len() {
                let mut q = p.clone();
                q.insert(at, n - 1);
                out.push(q);
            }
        }
        out
    }
    permutations(n)
        .into_iter()
        .map(|p| {
            edges
                .iter()
                .fold(0u64, |m, &(s, d)| m | 1 << (p[s as usize] * n + p[d as usize]))
        })
        .min()
        .unwrap()
}

/// Every digraph without self loops on `n` labeled nodes that is weakly
/// connected.
pub fn connected_digraphs(n: usize) -> Vec<Vec<(u32, u32)>> {
    let arcs: Vec<(u32, u32)> = (0..n as u32)
        .flat_map(|s| (0..n as u32).filter(move |&d| d != s).map(move |d| (s, d)))
        .collect();
    (0u64..1 << arcs.len())
        .map(|mask| {
            arcs.iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &a)| a)
                .collect::<Vec<_>>()
        })
        .filter(|edges| {
            let mut reach = vec![false; n];
            reach[0] = true;
            for _ in 0..n {
                for &(s, d) in edges {
                    if reach[s as usize] || reach[d as usize] {
                        reach[s as usize] = true;
                        reach[d as usize] = true;
                    }
                }
            }
            reach.iter().all(|&r| r)
        })
        .collect()
}

/// `U / (n+ n-)`, with tied pairs counted one half.
pub fn mann_whitney_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Nearest-rank percentile from a full sort, in integer arithmetic.
pub fn percentile_by_sort(values: &[usize], pct: usize) -> usize {
    let mut v = values.to_vec();
    v.sort();
    let rank = (pct * v.len()).div_ceil(100).max(1);
    v[rank - 1]
}

pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    let v: f64 = rng.gen();
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

/// SHA-256 of every file under `dir`, keyed by relative path.
pub fn hash_tree(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let digest = Sha256::digest(std::fs::read(&path).unwrap());
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, format!("{digest:x}"));
            }
        }
    }
    out
}

/// Whether some friend graph and some day assignment produce exactly these
/// arcs under the cascade rule: friends `u`, `v` give `u -> v` when
/// `u` acted no later than `v`.
pub fn is_cascade_realizable(n: usize, edges: &[(u32, u32)]) -> bool {
    let arcs: BTreeSet<(u32, u32)> = edges.iter().copied().collect();
    let mut days = vec![0usize; n];
    loop {
        let induced: BTreeSet<(u32, u32)> = arcs
            .iter()
            .flat_map(|&(s, d)| [(s, d), (d, s)])
            .filter(|&(s, d)| days[s as usize] <= days[d as usize])
            .collect();
        if induced == arcs {
            return true;
        }
        // next assignment in base n
        let mut i = 0;
        while i < n && days[i] == n - 1 {
            days[i] = 0;
            i += 1;
        }
        if i == n {
            return false;
        }
        days[i] += 1;
    }
}
