//! Stage runner behind the `cascades` binary.
//!
//! Every stage reads its inputs from and writes its outputs to one cache
//! directory, so stages can run separately or all at once:
//!
//! | stage            | needs                 | writes                                        |
//! |------------------|-----------------------|-----------------------------------------------|
//! | `ingest`         | dataset files         | `ingest.bin`, `drops.csv`, `yearly_activity.csv` |
//! | `build-cascades` | `ingest`              | `cascades.jsonl`                              |
//! | `summary`        | `build-cascades`      | `summary.csv`, `distribution.csv`             |
//! | `census`         | `build-cascades`      | `census.csv`                                  |
//! | `purity`         | `build-cascades`      | `purity.csv`                                  |
//! | `fit`            | `build-cascades`      | `fit.csv`                                     |
//! | `longest`        | `build-cascades`      | `longest.csv`                                 |
//! | `export-dot`     | `build-cascades`      | `dot/*.dot`                                   |
//! | `features`       | `ingest`, `build-cascades` | `labels.csv`, `features.csv`             |
//! | `train`          | `features`            | `models.json`, `importance.csv`               |
//! | `evaluate`       | `features`            | `eval.json`, `eval.csv`, `accuracy.csv`, `roc.csv` |
//!
//! Outputs are a pure function of the inputs and the configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use serde::Serialize;
use serde_json::json;

use crate::cascade::{build_cascades, cascade_summary, read_cascades, write_cascades, Cascade, CascadeId};
use crate::census::{bucket_purity, census};
use crate::error::{Error, Result};
use crate::features::{
    balance, extract_features, label_cascades, mean_review_stars, EventIndex, FeatureConfig, FeatureContext,
    FeatureVector, Label, LabeledExample, FEATURE_NAMES, N_FEATURES,
};
use crate::graph::build_graph;
use crate::ingest::{ingest_dataset, yearly_activity_counts, DatasetPaths, FileCounts, IngestResult};
use crate::learner::{
    evaluate, feature_importance, train_gbdt, train_logreg, Dataset, EvalReport, GbdtParams, LogRegParams, ModelSpec,
};
use crate::rng::substream_seed;
use crate::stats::{ccdf_tail_slope, export_dot, fit_power_law, longest_cascades, size_distribution, FitMethod};

pub const SCHEMA_VERSION: u32 = 1;

pub const STAGES: [&str; 11] = [
    "ingest",
    "build-cascades",
    "summary",
    "census",
    "purity",
    "fit",
    "longest",
    "export-dot",
    "features",
    "train",
    "evaluate",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data_dir: Option<PathBuf>,
    pub business_file: Option<PathBuf>,
    pub user_file: Option<PathBuf>,
    pub review_file: Option<PathBuf>,
    pub tip_file: Option<PathBuf>,
    pub cache_dir: PathBuf,
    pub window_days: Option<u32>,
    pub max_rank: usize,
    pub node_cap: usize,
    pub purity_samples: usize,
    pub fit_method: FitMethod,
    pub top_longest: usize,
    pub dot_ids: Vec<CascadeId>,
    pub k: usize,
    pub percentile: f64,
    pub min_big_cascades: usize,
    pub folds: usize,
    pub logreg: LogRegParams<f64>,
    pub gbdt: GbdtParams<f64>,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let features = FeatureConfig::default();
        RunConfig {
            data_dir: None,
            business_file: None,
            user_file: None,
            review_file: None,
            tip_file: None,
            cache_dir: PathBuf::from("cascade-cache"),
            window_days: None,
            max_rank: 10,
            node_cap: 10,
            purity_samples: 50,
            fit_method: FitMethod::Exact,
            top_longest: 3,
            dot_ids: Vec::new(),
            k: features.k,
            percentile: features.percentile,
            min_big_cascades: features.min_big_cascades,
            folds: 5,
            logreg: LogRegParams::default(),
            gbdt: GbdtParams::default(),
            seed: 0,
            workers: 0,
        }
    }
}

/// `(key, description)` for every configuration key, in file order.
pub const CONFIG_KEYS: [(&str, &str); 26] = [
    ("data_dir", "directory holding business.json, user.json, review.json, tip.json"),
    ("business_file", "business file (overrides data_dir)"),
    ("user_file", "user file (overrides data_dir)"),
    ("review_file", "review file (overrides data_dir)"),
    ("tip_file", "tip file (overrides data_dir)"),
    ("cache_dir", "stage output directory"),
    ("window_days", "max days between influencer and influenced events; `none` for no limit"),
    ("max_rank", "topologies kept per city in the census"),
    ("node_cap", "largest cascade checked by exact isomorphism"),
    ("purity_samples", "bucket members checked per census bucket"),
    ("fit_method", "power-law estimator: exact or approximate"),
    ("top_longest", "longest cascades reported per city"),
    ("dot_ids", "comma-separated cascade ids for export-dot; empty exports the longest"),
    ("k", "prefix length in nodes seen by the predictor"),
    ("percentile", "size percentile separating long from short cascades"),
    ("min_big_cascades", "cities with fewer eligible long cascades are excluded"),
    ("folds", "cross-validation folds"),
    ("logreg_l1", "logistic regression L1 weight"),
    ("logreg_l2", "logistic regression L2 weight"),
    ("logreg_epochs", "logistic regression iteration cap"),
    ("gbdt_trees", "boosting rounds"),
    ("gbdt_depth", "maximum tree depth"),
    ("gbdt_learning_rate", "shrinkage applied to every tree"),
    ("gbdt_min_leaf", "minimum rows on each side of a split"),
    ("seed", "global random seed"),
    ("workers", "worker threads; 0 uses every core"),
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "data_dir" => self.data_dir = opt_path(value),
            "business_file" => self.business_file = opt_path(value),
            "user_file" => self.user_file = opt_path(value),
            "review_file" => self.review_file = opt_path(value),
            "tip_file" => self.tip_file = opt_path(value),
            "cache_dir" => {
                if value.is_empty() {
                    return Err(Error::Config("cache_dir may not be empty".into()));
                }
                self.cache_dir = PathBuf::from(value)
            }
            "window_days" => {
                self.window_days = match value {
                    "" | "none" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "max_rank" => self.max_rank = parse(key, value)?,
            "node_cap" => self.node_cap = parse(key, value)?,
            "purity_samples" => self.purity_samples = parse(key, value)?,
            "fit_method" => {
                self.fit_method = match value {
                    "exact" => FitMethod::Exact,
                    "approximate" => FitMethod::Approximate,
                    _ => return Err(Error::Config(format!("fit_method must be exact or approximate, got `{value}`"))),
                }
            }
            "top_longest" => self.top_longest = parse(key, value)?,
            "dot_ids" => {
                self.dot_ids = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse(key, s))
                    .collect::<Result<_>>()?
            }
            "k" => self.k = parse(key, value)?,
            "percentile" => self.percentile = parse(key, value)?,
            "min_big_cascades" => self.min_big_cascades = parse(key, value)?,
            "folds" => self.folds = parse(key, value)?,
            "logreg_l1" => self.logreg.l1 = parse(key, value)?,
            "logreg_l2" => self.logreg.l2 = parse(key, value)?,
            "logreg_epochs" => self.logreg.epochs = parse(key, value)?,
            "gbdt_trees" => self.gbdt.n_trees = parse(key, value)?,
            "gbdt_depth" => self.gbdt.max_depth = parse(key, value)?,
            "gbdt_learning_rate" => self.gbdt.learning_rate = parse(key, value)?,
            "gbdt_min_leaf" => self.gbdt.min_leaf = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown configuration key `{other}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "data_dir" => show_path(&self.data_dir),
            "business_file" => show_path(&self.business_file),
            "user_file" => show_path(&self.user_file),
            "review_file" => show_path(&self.review_file),
            "tip_file" => show_path(&self.tip_file),
            "cache_dir" => self.cache_dir.display().to_string(),
            "window_days" => self.window_days.map_or("none".into(), |d| d.to_string()),
            "max_rank" => self.max_rank.to_string(),
            "node_cap" => self.node_cap.to_string(),
            "purity_samples" => self.purity_samples.to_string(),
            "fit_method" => match self.fit_method {
                FitMethod::Exact => "exact".into(),
                FitMethod::Approximate => "approximate".into(),
            },
            "top_longest" => self.top_longest.to_string(),
            "dot_ids" => self.dot_ids.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","),
            "k" => self.k.to_string(),
            "percentile" => self.percentile.to_string(),
            "min_big_cascades" => self.min_big_cascades.to_string(),
            "folds" => self.folds.to_string(),
            "logreg_l1" => self.logreg.l1.to_string(),
            "logreg_l2" => self.logreg.l2.to_string(),
            "logreg_epochs" => self.logreg.epochs.to_string(),
            "gbdt_trees" => self.gbdt.n_trees.to_string(),
            "gbdt_depth" => self.gbdt.max_depth.to_string(),
            "gbdt_learning_rate" => self.gbdt.learning_rate.to_string(),
            "gbdt_min_leaf" => self.gbdt.min_leaf.to_string(),
            "seed" => self.seed.to_string(),
            "workers" => self.workers.to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", no + 1)))?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// The configuration as `key = value` lines, readable by [`Self::apply_text`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, _) in CONFIG_KEYS {
            writeln!(out, "{key} = {}", self.get(key).unwrap()).unwrap();
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.feature_config().validate()?;
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        if self.max_rank == 0 {
            return Err(Error::Config("max_rank must be positive".into()));
        }
        if !(self.gbdt.learning_rate > 0.0 && self.gbdt.learning_rate <= 1.0) {
            return Err(Error::Config("gbdt_learning_rate must lie in (0, 1]".into()));
        }
        if self.gbdt.max_depth == 0 {
            return Err(Error::Config("gbdt_depth must be positive".into()));
        }
        if self.logreg.l1 < 0.0 || self.logreg.l2 < 0.0 {
            return Err(Error::Config("logreg_l1 and logreg_l2 must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn dataset_paths(&self) -> Result<DatasetPaths> {
        let base = self.data_dir.as_ref().map(DatasetPaths::in_dir);
        let pick = |explicit: &Option<PathBuf>, from_dir: Option<&PathBuf>, name: &str| {
            explicit
                .clone()
                .or_else(|| from_dir.cloned())
                .ok_or_else(|| Error::Config(format!("no path for the {name} file: set data_dir or {name}_file")))
        };
        Ok(DatasetPaths {
            business: pick(&self.business_file, base.as_ref().map(|b| &b.business), "business")?,
            user: pick(&self.user_file, base.as_ref().map(|b| &b.user), "user")?,
            review: pick(&self.review_file, base.as_ref().map(|b| &b.review), "review")?,
            tip: pick(&self.tip_file, base.as_ref().map(|b| &b.tip), "tip")?,
        })
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            k: self.k,
            percentile: self.percentile,
            min_big_cascades: self.min_big_cascades,
            balance_seed: substream_seed(self.seed, "balance"),
        }
    }

    fn cache(&self, name: &str) -> PathBuf {
        self.cache_dir.join(name)
    }
}

/// Runs one stage, or every stage in dependency order for `all`, inside a
/// thread pool of `config.workers` threads.
pub fn run_subcommand(name: &str, config: &RunConfig) -> Result<()> {
    config.validate()?;
    if name != "all" && !STAGES.contains(&name) {
        return Err(Error::Config(format!(
            "unknown stage `{name}`; expected one of {} or all",
            STAGES.join(", ")
        )));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        fs::create_dir_all(&config.cache_dir).map_err(|e| Error::io(&config.cache_dir, e))?;
        if name == "all" {
            config.dataset_paths()?;
            for stage in STAGES {
                run_stage(stage, config)?;
            }
            Ok(())
        } else {
            run_stage(name, config)
        }
    })
}

fn run_stage(name: &str, cfg: &RunConfig) -> Result<()> {
    info!("stage {name}");
    match name {
        "ingest" => stage_ingest(cfg),
        "build-cascades" => stage_build(cfg),
        "summary" => stage_summary(cfg),
        "census" => stage_census(cfg),
        "purity" => stage_purity(cfg),
        "fit" => stage_fit(cfg),
        "longest" => stage_longest(cfg),
        "export-dot" => stage_export_dot(cfg),
        "features" => stage_features(cfg),
        "train" => stage_train(cfg),
        "evaluate" => stage_evaluate(cfg),
        _ => unreachable!("stage names are checked by run_subcommand"),
    }
}

// ---------------------------------------------------------------------------
// cache access
// ---------------------------------------------------------------------------

fn require(cfg: &RunConfig, file: &str, stage: &'static str) -> Result<PathBuf> {
    let path = cfg.cache(file);
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::MissingStage { stage, path })
    }
}

fn load_ingest(cfg: &RunConfig) -> Result<IngestResult> {
    IngestResult::read_cache(&require(cfg, "ingest.bin", "ingest")?)
}

fn load_cascades(cfg: &RunConfig) -> Result<BTreeMap<String, Vec<Cascade>>> {
    read_cascades(&require(cfg, "cascades.jsonl", "build-cascades")?)
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// stages
// ---------------------------------------------------------------------------

fn stage_ingest(cfg: &RunConfig) -> Result<()> {
    let data = ingest_dataset(&cfg.dataset_paths()?)?;
    data.write_cache(&cfg.cache("ingest.bin"))?;
    let d = &data.drops;
    let count_row = |file: &str, c: &FileCounts| {
        vec![
            file.to_string(),
            c.lines.to_string(),
            c.retained.to_string(),
            c.malformed.to_string(),
            c.invalid.to_string(),
            c.empty_city.to_string(),
            c.unknown_business.to_string(),
            c.duplicate.to_string(),
        ]
    };
    write_csv(
        &cfg.cache("drops.csv"),
        &["file", "lines", "retained", "malformed", "invalid", "empty_city", "unknown_business", "duplicate"],
        [
            count_row("business", &d.business),
            count_row("user", &d.user),
            count_row("review", &d.review),
            count_row("tip", &d.tip),
        ],
    )?;
    let years = yearly_activity_counts(data.events.values().flatten());
    write_csv(
        &cfg.cache("yearly_activity.csv"),
        &["year", "reviews", "tips"],
        years
            .iter()
            .map(|y| vec![y.year.to_string(), y.reviews.to_string(), y.tips.to_string()]),
    )?;
    info!(
        "ingested {} events, {} users, {} businesses in {} cities",
        data.n_events(),
        data.n_users(),
        data.businesses.len(),
        data.events.len()
    );
    Ok(())
}

fn stage_build(cfg: &RunConfig) -> Result<()> {
    let data = load_ingest(cfg)?;
    let graph = build_graph(data.n_users(), &data.users);
    let cascades = build_cascades(&data.events, &graph, cfg.window_days);
    info!(
        "{} cascades over {} friendships",
        cascades.values().map(Vec::len).sum::<usize>(),
        graph.n_edges()
    );
    write_cascades(&cfg.cache("cascades.jsonl"), &cascades)
}

fn stage_summary(cfg: &RunConfig) -> Result<()> {
    let cascades = load_cascades(cfg)?;
    write_csv(
        &cfg.cache("summary.csv"),
        &["city", "cascades", "p50", "p75", "p90", "p99", "max"],
        cascade_summary(&cascades).into_iter().map(|r| {
            vec![
                r.city,
                r.cascade_count.to_string(),
                r.p50.to_string(),
                r.p75.to_string(),
                r.p90.to_string(),
                r.p99.to_string(),
                r.max.to_string(),
            ]
        }),
    )?;
    let dist = size_distribution(&cascades);
    write_csv(
        &cfg.cache("distribution.csv"),
        &["city", "size", "count", "ccdf"],
        dist.iter().flat_map(|(city, rows)| {
            rows.iter()
                .map(move |r| vec![city.clone(), r.size.to_string(), r.count.to_string(), r.ccdf.to_string()])
        }),
    )
}

fn join_seq(seq: &[u32]) -> String {
    seq.iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
}

fn stage_census(cfg: &RunConfig) -> Result<()> {
    let table = census(&load_cascades(cfg)?, cfg.max_rank);
    write_csv(
        &cfg.cache("census.csv"),
        &["city", "rank", "nodes", "edges", "in_degrees", "out_degrees", "count", "share", "representative"],
        table.iter().flat_map(|(city, c)| {
            c.rows.iter().map(move |r| {
                vec![
                    city.clone(),
                    r.rank.to_string(),
                    r.signature.n.to_string(),
                    r.signature.m.to_string(),
                    join_seq(&r.signature.in_seq),
                    join_seq(&r.signature.out_seq),
                    r.count.to_string(),
                    r.share.to_string(),
                    r.representative.to_string(),
                ]
            })
        }),
    )
}

fn stage_purity(cfg: &RunConfig) -> Result<()> {
    let rows = bucket_purity(&load_cascades(cfg)?, cfg.node_cap, cfg.purity_samples);
    write_csv(
        &cfg.cache("purity.csv"),
        &["city", "signature", "representative", "bucket_size", "checked", "isomorphic", "purity"],
        rows.into_iter().map(|r| {
            vec![
                r.city,
                r.signature.key(),
                r.representative.to_string(),
                r.bucket_size.to_string(),
                r.checked.to_string(),
                r.isomorphic.to_string(),
                r.purity.map(|p| p.to_string()).unwrap_or_default(),
            ]
        }),
    )
}

fn stage_fit(cfg: &RunConfig) -> Result<()> {
    let cascades = load_cascades(cfg)?;
    let dist = size_distribution(&cascades);
    let mut rows = Vec::new();
    for (city, list) in &cascades {
        let sizes: Vec<u64> = list.iter().map(|c| c.size() as u64).collect();
        let mut row = vec![city.clone(), sizes.len().to_string()];
        match fit_power_law::<f64>(&sizes, cfg.fit_method) {
            Ok(fit) => {
                let slope = ccdf_tail_slope(&dist[city], fit.xmin as usize);
                row.extend([
                    fit.alpha.to_string(),
                    fit.exponent().to_string(),
                    fit.xmin.to_string(),
                    fit.ks_statistic.to_string(),
                    fit.n_tail.to_string(),
                    slope.map(|s| s.to_string()).unwrap_or_default(),
                    "ok".to_string(),
                ]);
            }
            Err(e) => {
                warn!("{city}: {e}");
                row.extend(std::iter::repeat_n(String::new(), 6));
                row.push(e.to_string());
            }
        }
        rows.push(row);
    }
    write_csv(
        &cfg.cache("fit.csv"),
        &["city", "cascades", "alpha", "exponent", "xmin", "ks", "n_tail", "ccdf_slope", "status"],
        rows,
    )
}

fn stage_longest(cfg: &RunConfig) -> Result<()> {
    let cascades = load_cascades(cfg)?;
    let longest = longest_cascades(&cascades, cfg.top_longest);
    write_csv(
        &cfg.cache("longest.csv"),
        &["city", "rank", "cascade_id", "nodes", "edges", "first_date", "last_date"],
        longest.iter().flat_map(|(city, list)| {
            list.iter().enumerate().map(move |(i, c)| {
                vec![
                    city.clone(),
                    (i + 1).to_string(),
                    c.id.to_string(),
                    c.size().to_string(),
                    c.edges.len().to_string(),
                    c.nodes.first().map(|n| n.date.to_string()).unwrap_or_default(),
                    c.nodes.iter().map(|n| n.date).max().map(|d| d.to_string()).unwrap_or_default(),
                ]
            })
        }),
    )
}

fn file_stem(id: &CascadeId) -> String {
    let city: String = id
        .city
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    format!("{city}_{}_{}", id.business, id.component)
}

fn stage_export_dot(cfg: &RunConfig) -> Result<()> {
    let cascades = load_cascades(cfg)?;
    let dir = cfg.cache("dot");
    if dir.is_dir() {
        fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let chosen: Vec<&Cascade> = if cfg.dot_ids.is_empty() {
        longest_cascades(&cascades, cfg.top_longest)
            .into_values()
            .flatten()
            .collect()
    } else {
        cfg.dot_ids
            .iter()
            .map(|id| {
                cascades
                    .get(&id.city)
                    .and_then(|list| list.iter().find(|c| &c.id == id))
                    .ok_or_else(|| Error::Config(format!("no cascade with id `{id}`")))
            })
            .collect::<Result<_>>()?
    };
    for c in chosen {
        let path = dir.join(format!("{}.dot", file_stem(&c.id)));
        fs::write(&path, export_dot(c)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn stage_features(cfg: &RunConfig) -> Result<()> {
    let data = load_ingest(cfg)?;
    let cascades = load_cascades(cfg)?;
    let fcfg = cfg.feature_config();
    let labeling = label_cascades(&cascades, &fcfg);
    let balanced = balance(&labeling, &fcfg);
    let graph = build_graph(data.n_users(), &data.users);

    let mut label_rows = Vec::new();
    let mut feature_rows = Vec::new();
    for (city, set) in &balanced {
        let events = &data.events[city];
        let index = EventIndex::new(events);
        let ctx = FeatureContext {
            users: &data.users,
            businesses: &data.businesses,
            graph: &graph,
            events: &index,
            city_mean_stars: mean_review_stars(events),
        };
        let mut chosen: Vec<(usize, Label)> = set
            .long
            .iter()
            .map(|&i| (i, Label::Long))
            .chain(set.short.iter().map(|&i| (i, Label::Short)))
            .collect();
        chosen.sort_unstable_by_key(|&(i, _)| i);
        let mut imputed = 0u64;
        for (i, label) in chosen {
            let c = &cascades[city][i];
            let x = extract_features::<f64>(c, fcfg.k, &ctx)?;
            imputed += x.imputed as u64;
            let mut row = vec![c.id.to_string(), city.clone(), label.as_str().to_string()];
            row.extend(x.features.0.iter().map(f64::to_string));
            feature_rows.push(row);
        }
        let labels = &labeling.cities[city];
        label_rows.push(vec![
            city.clone(),
            "included".to_string(),
            labels.threshold.to_string(),
            labels.long.len().to_string(),
            labels.short.len().to_string(),
            set.long.len().to_string(),
            imputed.to_string(),
        ]);
    }
    for ex in &labeling.excluded {
        warn!(
            "excluding {}: {} long cascades, fewer than {}",
            ex.city, ex.long_count, fcfg.min_big_cascades
        );
        label_rows.push(vec![
            ex.city.clone(),
            "excluded".to_string(),
            ex.threshold.to_string(),
            ex.long_count.to_string(),
            String::new(),
            "0".to_string(),
            "0".to_string(),
        ]);
    }
    label_rows.sort();
    write_csv(
        &cfg.cache("labels.csv"),
        &["city", "status", "threshold", "long", "short", "per_class", "imputed_values"],
        label_rows,
    )?;
    let mut header = vec!["cascade_id", "city", "label"];
    header.extend(FEATURE_NAMES);
    write_csv(&cfg.cache("features.csv"), &header, feature_rows)
}

/// Labeled feature rows per city, as written by the `features` stage.
pub fn read_features(path: &Path) -> Result<BTreeMap<String, Vec<LabeledExample<f64>>>> {
    let mut r = csv::Reader::from_path(path)?;
    let bad = |msg: String| Error::BadCache {
        path: path.to_path_buf(),
        reason: msg,
    };
    let header = r.headers()?.clone();
    if header.len() != N_FEATURES + 3 || header.iter().skip(3).ne(FEATURE_NAMES) {
        return Err(bad("unexpected header".into()));
    }
    let mut out: BTreeMap<String, Vec<LabeledExample<f64>>> = BTreeMap::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let cascade_id: CascadeId = rec[0].parse().map_err(|_| bad(format!("row {}: bad cascade id", line + 1)))?;
        let label = match &rec[2] {
            "long" => Label::Long,
            "short" => Label::Short,
            other => return Err(bad(format!("row {}: bad label `{other}`", line + 1))),
        };
        let mut features = [0.0; N_FEATURES];
        for (slot, field) in features.iter_mut().zip(rec.iter().skip(3)) {
            *slot = field
                .parse()
                .map_err(|_| bad(format!("row {}: bad value `{field}`", line + 1)))?;
        }
        out.entry(rec[1].to_string()).or_default().push(LabeledExample {
            cascade_id,
            city: rec[1].to_string(),
            features: FeatureVector(features),
            label,
        });
    }
    Ok(out)
}

fn to_dataset(examples: &[LabeledExample<f64>]) -> Result<Dataset<f64>> {
    let rows: Vec<&[f64]> = examples.iter().map(|e| e.features.as_slice()).collect();
    Dataset::from_rows(&rows, examples.iter().map(|e| e.label.is_long()).collect())
}

fn load_features(cfg: &RunConfig) -> Result<BTreeMap<String, Vec<LabeledExample<f64>>>> {
    read_features(&require(cfg, "features.csv", "features")?)
}

fn stage_train(cfg: &RunConfig) -> Result<()> {
    let mut models = serde_json::Map::new();
    let mut rows = Vec::new();
    for (city, examples) in load_features(cfg)? {
        let data = to_dataset(&examples)?;
        let gbdt = train_gbdt(&data, &cfg.gbdt)?;
        let logreg = train_logreg(&data, &cfg.logreg)?;
        for s in feature_importance(&gbdt, &FEATURE_NAMES).iter().enumerate() {
            let (rank, s) = s;
            rows.push(vec![
                city.clone(),
                (rank + 1).to_string(),
                s.name.clone(),
                s.level_score.to_string(),
                s.gain_score.to_string(),
            ]);
        }
        models.insert(city, json!({ "gbdt": gbdt, "logreg": logreg }));
    }
    write_json(
        &cfg.cache("models.json"),
        &json!({ "schema_version": SCHEMA_VERSION, "cities": models }),
    )?;
    write_csv(
        &cfg.cache("importance.csv"),
        &["city", "rank", "feature", "level_score", "gain_score"],
        rows,
    )
}

fn stage_evaluate(cfg: &RunConfig) -> Result<()> {
    let cv_seed = substream_seed(cfg.seed, "cv");
    let specs = [ModelSpec::Gbdt(cfg.gbdt), ModelSpec::LogReg(cfg.logreg)];
    let mut reports: Vec<EvalReport<f64>> = Vec::new();
    let mut skipped = Vec::new();
    for (city, examples) in load_features(cfg)? {
        let data = to_dataset(&examples)?;
        for spec in &specs {
            match evaluate(&data, spec, cfg.folds, cv_seed, &city, &FEATURE_NAMES) {
                Ok(r) => reports.push(r),
                Err(e @ Error::TooFewExamples { .. }) => {
                    warn!("{e}");
                    skipped.push(json!({ "city": city, "model": spec.name(), "reason": e.to_string() }));
                }
                Err(e) => return Err(e),
            }
        }
    }
    write_json(
        &cfg.cache("eval.json"),
        &json!({ "schema_version": SCHEMA_VERSION, "folds": cfg.folds, "reports": reports, "skipped": skipped }),
    )?;
    write_csv(
        &cfg.cache("eval.csv"),
        &["city", "model", "examples", "mean_accuracy", "auc"],
        reports.iter().map(|r| {
            vec![
                r.city.clone(),
                r.model.clone(),
                r.n_examples.to_string(),
                r.mean_accuracy.to_string(),
                r.auc.to_string(),
            ]
        }),
    )?;
    write_csv(
        &cfg.cache("accuracy.csv"),
        &["city", "model", "fold", "accuracy"],
        reports.iter().flat_map(|r| {
            r.fold_accuracies
                .iter()
                .enumerate()
                .map(|(f, a)| vec![r.city.clone(), r.model.clone(), (f + 1).to_string(), a.to_string()])
        }),
    )?;
    write_csv(
        &cfg.cache("roc.csv"),
        &["city", "model", "fpr", "tpr", "threshold"],
        reports.iter().flat_map(|r| {
            r.roc.iter().map(|p| {
                vec![
                    r.city.clone(),
                    r.model.clone(),
                    p.fpr.to_string(),
                    p.tpr.to_string(),
                    p.threshold.to_string(),
                ]
            })
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_text_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# comment\nseed = 9\nwindow_days = 30\n\nfit_method = approximate\ngbdt_trees=7 # inline\n")
            .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.window_days, Some(30));
        assert_eq!(cfg.gbdt.n_trees, 7);
        let mut again = RunConfig::default();
        again.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn every_key_is_readable_and_writable() {
        let cfg = RunConfig::default();
        for (key, _) in CONFIG_KEYS {
            let v = cfg.get(key).unwrap();
            RunConfig::default().set(key, &v).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }

    #[test]
    fn bad_config_is_a_config_error() {
        let mut cfg = RunConfig::default();
        for text in ["nonsense", "seed = x", "colour = red", "fit_method = guess"] {
            let err = cfg.apply_text(text).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{text}: {err}");
        }
        cfg.k = 1;
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 1);
    }

    #[test]
    fn missing_stage_names_the_prerequisite() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            cache_dir: dir.path().to_path_buf(),
            ..RunConfig::default()
        };
        let err = run_subcommand("census", &cfg).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("build-cascades"));
        let err = run_subcommand("train", &cfg).unwrap_err();
        assert!(err.to_string().contains("`features`"));
    }

    #[test]
    fn ingest_without_paths_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            cache_dir: dir.path().to_path_buf(),
            ..RunConfig::default()
        };
        assert_eq!(run_subcommand("ingest", &cfg).unwrap_err().exit_code(), 1);
        assert_eq!(run_subcommand("bogus", &cfg).unwrap_err().exit_code(), 1);
    }
}
