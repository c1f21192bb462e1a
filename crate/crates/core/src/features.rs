//! Cascade labels and prefix features.
//!
//! A cascade is `Long` when its size exceeds its city's nearest-rank
//! percentile of cascade sizes. Features describe only the first `k` nodes
//! (by date, then user id) so a predictor sees what was known when the
//! cascade reached `k` users.
//!
//! The 30 features fall into five blocks: the business, the root user, the
//! other prefix users, the root's event, and the other prefix events.

use std::collections::{BTreeMap, HashMap};

use chrono::Datelike;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cascade::{nearest_rank, Cascade, CascadeId};
use crate::error::{Error, Result};
use crate::graph::SocialGraph;
use crate::ingest::{BusinessId, BusinessRecord, Event, EventKind, UserId, UserRecord};
use crate::rng::substream_seed;
use crate::scalar::{log1p_count, Scalar};

pub const N_FEATURES: usize = 30;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    // business
    "biz_stars",
    "biz_review_count_log1p",
    "biz_category_count",
    "biz_is_open",
    // root node
    "root_degree_log1p",
    "root_review_count_log1p",
    "root_avg_stars",
    "root_account_age_days",
    "root_fans_log1p",
    "root_elite_years",
    // non-root nodes
    "nonroot_mean_degree_log1p",
    "nonroot_max_degree_log1p",
    "nonroot_mean_review_count_log1p",
    "nonroot_max_review_count_log1p",
    "nonroot_mean_avg_stars",
    "nonroot_mean_fans_log1p",
    "nonroot_mean_elite_years",
    "nonroot_root_friend_fraction",
    // root event
    "root_stars",
    "root_text_len_log1p",
    "root_votes_total",
    "root_is_tip",
    "root_event_weekday",
    // non-root events
    "nonroot_mean_stars",
    "nonroot_mean_text_len_log1p",
    "nonroot_mean_votes",
    "nonroot_tip_fraction",
    "prefix_mean_gap_days",
    "prefix_max_gap_days",
    "prefix_span_days",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureBlock {
    Business,
    RootNode,
    NonRootNode,
    RootEvent,
    NonRootEvent,
}

impl FeatureBlock {
    pub fn of(feature: usize) -> FeatureBlock {
        match feature {
            0..=3 => FeatureBlock::Business,
            4..=9 => FeatureBlock::RootNode,
            10..=17 => FeatureBlock::NonRootNode,
            18..=22 => FeatureBlock::RootEvent,
            _ => FeatureBlock::NonRootEvent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Prefix length in nodes.
    pub k: usize,
    /// Labeling percentile.
    pub percentile: f64,
    /// Cities with fewer eligible Long cascades are excluded.
    pub min_big_cascades: usize,
    pub balance_seed: u64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            k: 5,
            percentile: 90.0,
            min_big_cascades: 50,
            balance_seed: 0,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("k must be at least 2, got {}", self.k)));
        }
        if !(self.percentile > 50.0 && self.percentile < 100.0) {
            return Err(Error::Config(format!(
                "percentile must lie in (50, 100), got {}",
                self.percentile
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Long,
    Short,
}

impl Label {
    pub fn is_long(self) -> bool {
        self == Label::Long
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Long => "long",
            Label::Short => "short",
        }
    }
}

/// Eligible cascades of one city, as indices into its cascade list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CityLabels {
    pub threshold: usize,
    pub long: Vec<usize>,
    pub short: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedCity {
    pub city: String,
    pub threshold: usize,
    pub long_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labeling {
    pub cities: BTreeMap<String, CityLabels>,
    pub excluded: Vec<ExcludedCity>,
}

/// Label every cascade with at least `k` nodes. Cities with fewer than
/// `min_big_cascades` eligible Long cascades are excluded and reported.
pub fn label_cascades(cascades: &BTreeMap<String, Vec<Cascade>>, cfg: &FeatureConfig) -> Labeling {
    let mut cities = BTreeMap::new();
    let mut excluded = Vec::new();
    for (city, list) in cascades {
        let mut sizes: Vec<usize> = list.iter().map(Cascade::size).collect();
        sizes.sort_unstable();
        let threshold = nearest_rank(&sizes, cfg.percentile).unwrap_or(0);
        let (mut long, mut short) = (Vec::new(), Vec::new());
        for (i, c) in list.iter().enumerate() {
            if c.size() < cfg.k {
                continue;
            }
            if c.size() > threshold {
                long.push(i);
            } else {
                short.push(i);
            }
        }
        if long.len() < cfg.min_big_cascades.max(1) {
            excluded.push(ExcludedCity {
                city: city.clone(),
                threshold,
                long_count: long.len(),
            });
        } else {
            cities.insert(city.clone(), CityLabels { threshold, long, short });
        }
    }
    Labeling { cities, excluded }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalancedSet {
    pub long: Vec<usize>,
    pub short: Vec<usize>,
}

/// Downsample the majority class of each city uniformly without replacement
/// so both classes have equal size. Indices come back ascending.
pub fn balance(labeling: &Labeling, cfg: &FeatureConfig) -> BTreeMap<String, BalancedSet> {
    labeling
        .cities
        .iter()
        .map(|(city, labels)| {
            let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(cfg.balance_seed, city));
            let n = labels.long.len().min(labels.short.len());
            let mut pick = |pool: &[usize]| -> Vec<usize> {
                let mut out: Vec<usize> = rand::seq::index::sample(&mut rng, pool.len(), n)
                    .into_iter()
                    .map(|i| pool[i])
                    .collect();
                out.sort_unstable();
                out
            };
            let long = pick(&labels.long);
            let short = pick(&labels.short);
            (city.clone(), BalancedSet { long, short })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// extraction
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector<F>(pub [F; N_FEATURES]);

impl<F: Scalar> FeatureVector<F> {
    pub fn get(&self, name: &str) -> Option<F> {
        FEATURE_NAMES.iter().position(|n| *n == name).map(|i| self.0[i])
    }

    pub fn as_slice(&self) -> &[F] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample<F> {
    pub cascade_id: CascadeId,
    pub city: String,
    pub features: FeatureVector<F>,
    pub label: Label,
}

/// First event of each (business, user) pair.
#[derive(Debug, Default)]
pub struct EventIndex<'a> {
    first: HashMap<(BusinessId, UserId), &'a Event>,
}

impl<'a> EventIndex<'a> {
    /// `events` sorted by (business, date, user), as ingest leaves them.
    pub fn new(events: impl IntoIterator<Item = &'a Event>) -> Self {
        let mut first = HashMap::new();
        for e in events {
            first.entry((e.business, e.user)).or_insert(e);
        }
        EventIndex { first }
    }

    pub fn get(&self, business: BusinessId, user: UserId) -> Option<&'a Event> {
        self.first.get(&(business, user)).copied()
    }
}

/// Mean review star rating of a city's events; 3.0 when there are none.
pub fn mean_review_stars(events: &[Event]) -> f64 {
    let (sum, n) = events
        .iter()
        .filter_map(|e| e.stars)
        .fold((0u64, 0u64), |(s, n), x| (s + x as u64, n + 1));
    if n == 0 {
        3.0
    } else {
        sum as f64 / n as f64
    }
}

/// Read-only attribute tables for one city.
pub struct FeatureContext<'a> {
    pub users: &'a [Option<UserRecord>],
    pub businesses: &'a [BusinessRecord],
    pub graph: &'a SocialGraph,
    pub events: &'a EventIndex<'a>,
    /// Used for absent star ratings.
    pub city_mean_stars: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extraction<F> {
    pub features: FeatureVector<F>,
    /// Number of values filled in by imputation.
    pub imputed: u32,
}

struct Acc<F> {
    sum: F,
    max: F,
    n: usize,
}

impl<F: Scalar> Acc<F> {
    fn new() -> Self {
        Acc {
            sum: F::zero(),
            max: F::neg_infinity(),
            n: 0,
        }
    }

    fn push(&mut self, x: F) {
        self.sum = self.sum + x;
        self.max = self.max.max(x);
        self.n += 1;
    }

    fn mean(&self) -> F {
        if self.n == 0 {
            F::zero()
        } else {
            self.sum / F::from_count(self.n)
        }
    }

    fn max(&self) -> F {
        if self.n == 0 {
            F::zero()
        } else {
            self.max
        }
    }
}

/// Feature vector of the first `k` nodes of `cascade`. Nodes past position
/// `k` are never read.
pub fn extract_features<F: Scalar>(
    cascade: &Cascade,
    k: usize,
    ctx: &FeatureContext<'_>,
) -> Result<Extraction<F>> {
    if k < 2 || cascade.size() < k {
        return Err(Error::InvalidData(format!(
            "cascade {} has {} nodes, prefix needs {k}",
            cascade.id,
            cascade.size()
        )));
    }
    let prefix = &cascade.nodes[..k];
    let business = cascade.business();
    let mean_stars = F::lit(ctx.city_mean_stars);
    let mut imputed = 0u32;
    let mut v = [F::zero(); N_FEATURES];

    match ctx.businesses.get(business as usize) {
        Some(b) => {
            v[0] = F::lit(b.stars);
            v[1] = log1p_count(b.review_count as u64);
            v[2] = F::lit(b.category_count as f64);
            v[3] = if b.is_open { F::one() } else { F::zero() };
        }
        None => {
            v[0] = mean_stars;
            imputed += 4;
        }
    }

    // user attributes; absent values are counted and imputed
    let mut user_attrs = |user: UserId, on: chrono::NaiveDate| -> [F; 5] {
        match ctx.users.get(user as usize).and_then(Option::as_ref) {
            Some(u) => {
                let avg = match u.average_stars {
                    Some(s) => F::lit(s),
                    None => {
                        imputed += 1;
                        mean_stars
                    }
                };
                let age = match u.yelping_since {
                    Some(since) => F::lit((on - since).num_days().max(0) as f64),
                    None => {
                        imputed += 1;
                        F::zero()
                    }
                };
                [
                    log1p_count(u.review_count as u64),
                    avg,
                    age,
                    log1p_count(u.fans as u64),
                    F::lit(u.elite_years as f64),
                ]
            }
            None => {
                imputed += 5;
                [F::zero(), mean_stars, F::zero(), F::zero(), F::zero()]
            }
        }
    };

    let root = prefix[0];
    let [review_count, avg, age, fans, elite] = user_attrs(root.user, root.date);
    v[4] = log1p_count(ctx.graph.degree(root.user) as u64);
    v[5] = review_count;
    v[6] = avg;
    v[7] = age;
    v[8] = fans;
    v[9] = elite;

    let (mut degree, mut reviews) = (Acc::new(), Acc::new());
    let (mut avg_stars, mut fans, mut elite, mut root_friends) =
        (Acc::new(), Acc::new(), Acc::new(), Acc::new());
    for node in &prefix[1..] {
        let [rc, avg, _, f, e] = user_attrs(node.user, node.date);
        degree.push(log1p_count(ctx.graph.degree(node.user) as u64));
        reviews.push(rc);
        avg_stars.push(avg);
        fans.push(f);
        elite.push(e);
        root_friends.push(if ctx.graph.are_friends(root.user, node.user) {
            F::one()
        } else {
            F::zero()
        });
    }
    v[10] = degree.mean();
    v[11] = degree.max();
    v[12] = reviews.mean();
    v[13] = reviews.max();
    v[14] = avg_stars.mean();
    v[15] = fans.mean();
    v[16] = elite.mean();
    v[17] = root_friends.mean();

    // event attributes: (stars, log1p text length, votes, is tip)
    let mut event_attrs = |node: &crate::cascade::CascadeNode| -> [F; 4] {
        let is_tip = if node.kind == EventKind::Tip { F::one() } else { F::zero() };
        match ctx.events.get(business, node.user) {
            Some(e) => {
                let stars = match e.stars {
                    Some(s) => F::lit(s as f64),
                    None => {
                        imputed += 1;
                        mean_stars
                    }
                };
                [stars, log1p_count(e.text_len as u64), F::lit(e.votes() as f64), is_tip]
            }
            None => {
                imputed += 3;
                [mean_stars, F::zero(), F::zero(), is_tip]
            }
        }
    };

    let [stars, text, votes, is_tip] = event_attrs(&root);
    v[18] = stars;
    v[19] = text;
    v[20] = votes;
    v[21] = is_tip;
    v[22] = F::lit(root.date.weekday().num_days_from_monday() as f64);

    let (mut stars, mut text, mut votes, mut tips) = (Acc::new(), Acc::new(), Acc::new(), Acc::new());
    for node in &prefix[1..] {
        let [s, t, vo, tip] = event_attrs(node);
        stars.push(s);
        text.push(t);
        votes.push(vo);
        tips.push(tip);
    }
    v[23] = stars.mean();
    v[24] = text.mean();
    v[25] = votes.mean();
    v[26] = tips.mean();

    let mut gaps = Acc::new();
    for w in prefix.windows(2) {
        gaps.push(F::lit((w[1].date - w[0].date).num_days() as f64));
    }
    v[27] = gaps.mean();
    v[28] = gaps.max();
    v[29] = F::lit((prefix[k - 1].date - root.date).num_days() as f64);

    Ok(Extraction {
        features: FeatureVector(v),
        imputed,
    })
}
