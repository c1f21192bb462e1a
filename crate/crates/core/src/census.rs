//! Frequent cascade topologies.
//!
//! Cascades are bucketed by a cheap isomorphism invariant, the
//! [`TopologySignature`]: node count, edge count and the sorted in- and
//! out-degree sequences. Isomorphic graphs always share a signature but the
//! converse fails from four nodes on, so [`bucket_purity`] re-checks buckets
//! with an exact backtracking matcher.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{Cascade, CascadeId};

/// Simple directed graph (no self-loops, no parallel edges) on `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Digraph {
    n: usize,
    out: Vec<Vec<u32>>,
    inn: Vec<Vec<u32>>,
}

impl Digraph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut out = vec![Vec::new(); n];
        let mut inn = vec![Vec::new(); n];
        for (s, d) in edges {
            assert!((s as usize) < n && (d as usize) < n, "edge ({s},{d}) outside 0..{n}");
            if s != d {
                out[s as usize].push(d);
                inn[d as usize].push(s);
            }
        }
        for list in out.iter_mut().chain(inn.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        Digraph { n, out, inn }
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    pub fn has_edge(&self, s: u32, d: u32) -> bool {
        self.out[s as usize].binary_search(&d).is_ok()
    }

    pub fn out_degree(&self, v: u32) -> usize {
        self.out[v as usize].len()
    }

    pub fn in_degree(&self, v: u32) -> usize {
        self.inn[v as usize].len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(s, ds)| ds.iter().map(move |&d| (s as u32, d)))
    }

    /// Same graph with node `v` renamed to `perm[v]`.
    pub fn relabel(&self, perm: &[u32]) -> Digraph {
        assert_eq!(perm.len(), self.n);
        Digraph::new(self.n, self.edges().map(|(s, d)| (perm[s as usize], perm[d as usize])))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TopologySignature {
    pub n: usize,
    pub m: usize,
    /// Nondecreasing.
    pub in_seq: Vec<u32>,
    /// Nondecreasing.
    pub out_seq: Vec<u32>,
}

fn join(seq: &[u32]) -> String {
    seq.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
}

impl TopologySignature {
    pub fn of(g: &Digraph) -> Self {
        let mut in_seq: Vec<u32> = (0..g.n as u32).map(|v| g.in_degree(v) as u32).collect();
        let mut out_seq: Vec<u32> = (0..g.n as u32).map(|v| g.out_degree(v) as u32).collect();
        in_seq.sort_unstable();
        out_seq.sort_unstable();
        TopologySignature {
            n: g.n,
            m: g.n_edges(),
            in_seq,
            out_seq,
        }
    }

    /// Canonical ASCII key `n|m|in,seq|out,seq`.
    pub fn key(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for TopologySignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}|{}|{}", self.n, self.m, join(&self.in_seq), join(&self.out_seq))
    }
}

pub fn signature(cascade: &Cascade) -> TopologySignature {
    TopologySignature::of(&cascade.to_digraph())
}

/// Graph exceeded the node cap of an exact check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TooLarge {
    pub nodes: usize,
    pub cap: usize,
}

/// Exact directed-graph isomorphism by backtracking.
///
/// Nodes of `a` are matched in an order that keeps each new node adjacent to
/// an already matched one where possible; candidates in `b` must have the
/// same degree profile (own in/out degree plus the sorted degrees of in- and
/// out-neighbors) and agree on every edge to matched nodes.
pub fn is_isomorphic(a: &Digraph, b: &Digraph, node_cap: usize) -> Result<bool, TooLarge> {
    for g in [a, b] {
        if g.n > node_cap {
            return Err(TooLarge {
                nodes: g.n,
                cap: node_cap,
            });
        }
    }
    if a.n != b.n || a.n_edges() != b.n_edges() {
        return Ok(false);
    }
    let pa = profiles(a);
    let pb = profiles(b);
    let mut sa = pa.clone();
    let mut sb = pb.clone();
    sa.sort();
    sb.sort();
    if sa != sb {
        return Ok(false);
    }

    let order = match_order(a);
    let mut mapping = vec![u32::MAX; a.n];
    let mut used = vec![false; b.n];
    Ok(extend(a, b, &pa, &pb, &order, 0, &mut mapping, &mut used))
}

type Profile = (usize, usize, Vec<(usize, usize)>, Vec<(usize, usize)>);

fn profiles(g: &Digraph) -> Vec<Profile> {
    let deg = |v: u32| (g.in_degree(v), g.out_degree(v));
    (0..g.n as u32)
        .map(|v| {
            let mut outs: Vec<_> = g.out[v as usize].iter().map(|&w| deg(w)).collect();
            let mut ins: Vec<_> = g.inn[v as usize].iter().map(|&w| deg(w)).collect();
            outs.sort_unstable();
            ins.sort_unstable();
            (g.in_degree(v), g.out_degree(v), outs, ins)
        })
        .collect()
}

/// Highest-degree node first, then repeatedly the unmatched node with the
/// most links into the matched set.
fn match_order(g: &Digraph) -> Vec<u32> {
    let mut placed = vec![false; g.n];
    let mut order = Vec::with_capacity(g.n);
    let total = |v: u32| g.in_degree(v) + g.out_degree(v);
    while order.len() < g.n {
        let next = (0..g.n as u32)
            .filter(|&v| !placed[v as usize])
            .max_by_key(|&v| {
                let links = g.out[v as usize]
                    .iter()
                    .chain(&g.inn[v as usize])
                    .filter(|&&w| placed[w as usize])
                    .count();
                (links, total(v), std::cmp::Reverse(v))
            })
            .unwrap();
        placed[next as usize] = true;
        order.push(next);
    }
    order
}

#[allow(clippy::too_many_arguments)]
fn extend(
    a: &Digraph,
    b: &Digraph,
    pa: &[Profile],
    pb: &[Profile],
    order: &[u32],
    depth: usize,
    mapping: &mut [u32],
    used: &mut [bool],
) -> bool {
    let Some(&v) = order.get(depth) else {
        return true;
    };
    for w in 0..b.n as u32 {
        if used[w as usize] || pa[v as usize] != pb[w as usize] {
            continue;
        }
        let consistent = order[..depth].iter().all(|&u| {
            let mu = mapping[u as usize];
            a.has_edge(u, v) == b.has_edge(mu, w) && a.has_edge(v, u) == b.has_edge(w, mu)
        });
        if !consistent {
            continue;
        }
        mapping[v as usize] = w;
        used[w as usize] = true;
        if extend(a, b, pa, pb, order, depth + 1, mapping, used) {
            return true;
        }
        used[w as usize] = false;
        mapping[v as usize] = u32::MAX;
    }
    false
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusRow {
    pub rank: usize,
    pub signature: TopologySignature,
    /// Member with the smallest cascade id.
    pub representative: CascadeId,
    pub count: usize,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityCensus {
    pub total: usize,
    pub rows: Vec<CensusRow>,
}

/// Per city, rows ranked by descending count (ties by signature key).
pub type CensusTable = BTreeMap<String, CityCensus>;

struct Bucket {
    signature: TopologySignature,
    count: usize,
    representative: CascadeId,
    members: Vec<usize>,
}

fn buckets(cascades: &[Cascade]) -> Vec<(String, Bucket)> {
    let signatures: Vec<TopologySignature> = cascades.par_iter().map(signature).collect();
    let mut map: HashMap<String, Bucket> = HashMap::new();
    for (i, (c, sig)) in cascades.iter().zip(signatures).enumerate() {
        let key = sig.key();
        let bucket = map.entry(key).or_insert_with(|| Bucket {
            signature: sig,
            count: 0,
            representative: c.id.clone(),
            members: Vec::new(),
        });
        bucket.count += 1;
        bucket.members.push(i);
        if c.id < bucket.representative {
            bucket.representative = c.id.clone();
        }
    }
    let mut out: Vec<(String, Bucket)> = map.into_iter().collect();
    out.sort_by(|(ka, a), (kb, b)| b.count.cmp(&a.count).then_with(|| ka.cmp(kb)));
    out
}

/// Top `max_rank` topologies per city.
pub fn census(cascades: &BTreeMap<String, Vec<Cascade>>, max_rank: usize) -> CensusTable {
    cascades
        .iter()
        .map(|(city, list)| {
            let total = list.len();
            let rows = buckets(list)
                .into_iter()
                .take(max_rank)
                .enumerate()
                .map(|(i, (_, b))| CensusRow {
                    rank: i + 1,
                    signature: b.signature,
                    representative: b.representative,
                    count: b.count,
                    share: b.count as f64 / total as f64,
                })
                .collect();
            (city.clone(), CityCensus { total, rows })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurityRow {
    pub city: String,
    pub signature: TopologySignature,
    pub representative: CascadeId,
    pub bucket_size: usize,
    /// Members compared against the representative (including itself).
    pub checked: usize,
    pub isomorphic: usize,
    /// `None` when the representative exceeds the node cap.
    pub purity: Option<f64>,
}

/// Fraction of sampled bucket members exactly isomorphic to the bucket
/// representative. At most `max_samples` members per bucket are checked,
/// spread evenly over the bucket in cascade-id order.
pub fn bucket_purity(
    cascades: &BTreeMap<String, Vec<Cascade>>,
    node_cap: usize,
    max_samples: usize,
) -> Vec<PurityRow> {
    let mut rows = Vec::new();
    for (city, list) in cascades {
        for (_, b) in buckets(list) {
            let mut members = b.members.clone();
            members.sort_by(|&x, &y| list[x].id.cmp(&list[y].id));
            let sampled: Vec<usize> = if members.len() <= max_samples.max(1) {
                members
            } else {
                let k = max_samples.max(1);
                (0..k).map(|i| members[i * members.len() / k]).collect()
            };
            let rep = list
                .iter()
                .find(|c| c.id == b.representative)
                .expect("representative is a member")
                .to_digraph();
            let (checked, isomorphic, purity) = if rep.n_nodes() > node_cap {
                (0, 0, None)
            } else {
                let hits: usize = sampled
                    .par_iter()
                    .map(|&i| {
                        usize::from(is_isomorphic(&rep, &list[i].to_digraph(), node_cap) == Ok(true))
                    })
                    .sum();
                (sampled.len(), hits, Some(hits as f64 / sampled.len() as f64))
            };
            rows.push(PurityRow {
                city: city.clone(),
                signature: b.signature,
                representative: b.representative,
                bucket_size: b.count,
                checked,
                isomorphic,
                purity,
            });
        }
    }
    rows
}
