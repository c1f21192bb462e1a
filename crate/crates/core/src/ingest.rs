//! Yelp dataset ingestion.
//!
//! Reads the business, user, review and tip JSON-lines files, interns string
//! ids to dense integers and partitions events by normalized city.
//!
//! Interning is deterministic: ids are assigned in sorted order of the raw
//! string keys, so the same files always produce the same numbering no matter
//! how their lines are ordered.
//!
//! # Cache layout
//!
//! [`IngestResult::write_cache`] writes:
//!
//! | offset | size | content                                   |
//! |--------|------|-------------------------------------------|
//! | 0      | 8    | magic `b"YCASCADE"`                        |
//! | 8      | 4    | format version, little-endian `u32`        |
//! | 12     | 8    | payload length in bytes, little-endian `u64` |
//! | 20     | n    | bincode (v1, fixint, little-endian) payload |

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub type UserId = u32;
pub type BusinessId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Review,
    Tip,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Review => "review",
            EventKind::Tip => "tip",
        }
    }
}

/// One review or tip.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub user: UserId,
    pub business: BusinessId,
    pub date: NaiveDate,
    pub kind: EventKind,
    /// Absent for tips.
    pub stars: Option<u8>,
    /// Length of the text in characters.
    pub text_len: u32,
    pub useful: u32,
    pub funny: u32,
    pub cool: u32,
    /// Tip likes; 0 for reviews.
    pub likes: u32,
}

impl Event {
    pub fn votes(&self) -> u64 {
        self.useful as u64 + self.funny as u64 + self.cool as u64 + self.likes as u64
    }

    fn sort_key(&self) -> (BusinessId, NaiveDate, UserId, EventKind) {
        (self.business, self.date, self.user, self.kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: UserId,
    pub friends: Vec<UserId>,
    pub review_count: u32,
    pub average_stars: Option<f64>,
    pub yelping_since: Option<NaiveDate>,
    pub fans: u32,
    pub elite_years: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusinessRecord {
    pub business_id: BusinessId,
    pub city: String,
    pub stars: f64,
    pub review_count: u32,
    pub category_count: u32,
    pub is_open: bool,
}

/// Per-file line accounting. `retained` plus every drop reason equals `lines`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileCounts {
    pub lines: u64,
    pub retained: u64,
    /// Not a JSON object, or a required field has the wrong type.
    pub malformed: u64,
    /// Well-formed but violates a value constraint (bad date, stars out of range).
    pub invalid: u64,
    /// Business records whose city normalizes to the empty string.
    pub empty_city: u64,
    /// Events referencing a business that was not retained.
    pub unknown_business: u64,
    /// Repeated user or business ids; the first occurrence wins.
    pub duplicate: u64,
}

impl FileCounts {
    pub fn dropped(&self) -> u64 {
        self.malformed + self.invalid + self.empty_city + self.unknown_business + self.duplicate
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropCounts {
    pub business: FileCounts,
    pub user: FileCounts,
    pub review: FileCounts,
    pub tip: FileCounts,
}

#[derive(Debug, Clone)]
pub struct DatasetPaths {
    pub business: PathBuf,
    pub user: PathBuf,
    pub review: PathBuf,
    pub tip: PathBuf,
}

impl DatasetPaths {
    /// Standard Yelp file names inside `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        DatasetPaths {
            business: dir.join("business.json"),
            user: dir.join("user.json"),
            review: dir.join("review.json"),
            tip: dir.join("tip.json"),
        }
    }

    fn all(&self) -> [&Path; 4] {
        [&self.business, &self.user, &self.review, &self.tip]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestResult {
    /// Events per normalized city, sorted by (business, date, user, kind).
    pub events: BTreeMap<String, Vec<Event>>,
    /// Indexed by [`UserId`]; `None` for ids only seen as friends or event authors.
    pub users: Vec<Option<UserRecord>>,
    pub user_keys: Vec<String>,
    /// Indexed by [`BusinessId`].
    pub businesses: Vec<BusinessRecord>,
    pub business_keys: Vec<String>,
    pub drops: DropCounts,
}

const CACHE_MAGIC: &[u8; 8] = b"YCASCADE";
const CACHE_VERSION: u32 = 1;

impl IngestResult {
    pub fn n_users(&self) -> usize {
        self.user_keys.len()
    }

    pub fn n_events(&self) -> usize {
        self.events.values().map(Vec::len).sum()
    }

    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let payload = bincode::serialize(self).map_err(|e| Error::Serde(e.to_string()))?;
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
            w.write_all(CACHE_MAGIC)?;
            w.write_all(&CACHE_VERSION.to_le_bytes())?;
            w.write_all(&(payload.len() as u64).to_le_bytes())?;
            w.write_all(&payload)?;
            w.flush()
        };
        write(&mut w).map_err(|e| Error::io(path, e))
    }

    pub fn read_cache(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let bad = |reason: &str| Error::BadCache {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        if bytes.len() < 20 || &bytes[..8] != CACHE_MAGIC {
            return Err(bad("missing magic header"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CACHE_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        if bytes.len() - 20 != len {
            return Err(bad("payload length mismatch"));
        }
        bincode::deserialize(&bytes[20..]).map_err(|e| bad(&e.to_string()))
    }
}

/// Trim, lowercase and collapse internal whitespace runs.
pub fn normalize_city(raw: &str) -> String {
    raw.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Yelp dates come as `YYYY-MM-DD` or `YYYY-MM-DD HH:MM:SS`.
pub fn parse_day(raw: &str) -> Option<NaiveDate> {
    let day = raw.trim().get(..10)?;
    NaiveDate::parse_from_str(day, "%Y-%m-%d").ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct YearCount {
    pub year: i32,
    pub reviews: u64,
    pub tips: u64,
}

/// Reviews and tips per calendar year, ascending by year.
pub fn yearly_activity_counts<'a>(events: impl IntoIterator<Item = &'a Event>) -> Vec<YearCount> {
    let mut by_year: BTreeMap<i32, (u64, u64)> = BTreeMap::new();
    for e in events {
        let slot = by_year.entry(e.date.year()).or_default();
        match e.kind {
            EventKind::Review => slot.0 += 1,
            EventKind::Tip => slot.1 += 1,
        }
    }
    by_year
        .into_iter()
        .map(|(year, (reviews, tips))| YearCount {
            year,
            reviews,
            tips,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// raw line parsing
// ---------------------------------------------------------------------------

enum Parsed<T> {
    Ok(T),
    Malformed,
    Invalid,
}

struct RawBusiness {
    key: String,
    city: String,
    stars: f64,
    review_count: u32,
    category_count: u32,
    is_open: bool,
}

struct RawUser {
    key: String,
    friends: Vec<String>,
    review_count: u32,
    average_stars: Option<f64>,
    yelping_since: Option<NaiveDate>,
    fans: u32,
    elite_years: u32,
}

struct RawEvent {
    user: String,
    business: String,
    date: NaiveDate,
    kind: EventKind,
    stars: Option<u8>,
    text_len: u32,
    useful: u32,
    funny: u32,
    cool: u32,
    likes: u32,
}

fn get_str<'a>(obj: &'a serde_json::Map<String, Value>, key: &str) -> Option<&'a str> {
    obj.get(key)?.as_str()
}

/// Optional count field: absent or null is 0, anything non-numeric is malformed.
fn get_count(obj: &serde_json::Map<String, Value>, key: &str) -> Option<u32> {
    match obj.get(key) {
        None | Some(Value::Null) => Some(0),
        Some(v) => {
            let f = v.as_f64()?;
            (f >= 0.0).then(|| f.min(u32::MAX as f64) as u32)
        }
    }
}

/// Yelp encodes lists either as JSON arrays or as comma-separated strings,
/// with the literal "None" for empty.
fn get_list(obj: &serde_json::Map<String, Value>, key: &str) -> Option<Vec<String>> {
    match obj.get(key) {
        None | Some(Value::Null) => Some(Vec::new()),
        Some(Value::Array(items)) => Some(
            items
                .iter()
                .filter_map(|v| match v {
                    Value::String(s) => Some(s.trim().to_string()),
                    Value::Number(n) => Some(n.to_string()),
                    _ => None,
                })
                .filter(|s| !s.is_empty())
                .collect(),
        ),
        Some(Value::String(s)) => {
            if s.trim() == "None" {
                return Some(Vec::new());
            }
            Some(
                s.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect(),
            )
        }
        Some(_) => None,
    }
}

fn parse_object(line: &str) -> Option<serde_json::Map<String, Value>> {
    match serde_json::from_str::<Value>(line) {
        Ok(Value::Object(obj)) => Some(obj),
        _ => None,
    }
}

fn parse_business(line: &str) -> Parsed<RawBusiness> {
    let Some(obj) = parse_object(line) else {
        return Parsed::Malformed;
    };
    let (Some(key), Some(city)) = (get_str(&obj, "business_id"), get_str(&obj, "city")) else {
        return Parsed::Malformed;
    };
    let stars = match obj.get("stars") {
        None | Some(Value::Null) => None,
        Some(v) => match v.as_f64() {
            Some(s) => Some(s),
            None => return Parsed::Malformed,
        },
    };
    let (Some(review_count), Some(categories)) =
        (get_count(&obj, "review_count"), get_list(&obj, "categories"))
    else {
        return Parsed::Malformed;
    };
    let is_open = match obj.get("is_open") {
        None | Some(Value::Null) => true,
        Some(Value::Bool(b)) => *b,
        Some(v) => match v.as_i64() {
            Some(i) => i != 0,
            None => return Parsed::Malformed,
        },
    };
    let stars = stars.unwrap_or(3.0);
    if !(1.0..=5.0).contains(&stars) {
        return Parsed::Invalid;
    }
    Parsed::Ok(RawBusiness {
        key: key.to_string(),
        city: city.to_string(),
        stars,
        review_count,
        category_count: categories.len() as u32,
        is_open,
    })
}

fn parse_user(line: &str) -> Parsed<RawUser> {
    let Some(obj) = parse_object(line) else {
        return Parsed::Malformed;
    };
    let Some(key) = get_str(&obj, "user_id") else {
        return Parsed::Malformed;
    };
    let (Some(friends), Some(elite), Some(review_count), Some(fans)) = (
        get_list(&obj, "friends"),
        get_list(&obj, "elite"),
        get_count(&obj, "review_count"),
        get_count(&obj, "fans"),
    ) else {
        return Parsed::Malformed;
    };
    let average_stars = match obj.get("average_stars") {
        None | Some(Value::Null) => None,
        Some(v) => match v.as_f64() {
            Some(s) if (1.0..=5.0).contains(&s) => Some(s),
            // Users with no reviews report 0.0; treat as absent.
            Some(_) => None,
            None => return Parsed::Malformed,
        },
    };
    let yelping_since = match obj.get("yelping_since") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => match parse_day(s).or_else(|| parse_month(s)) {
            Some(d) => Some(d),
            None => return Parsed::Invalid,
        },
        Some(_) => return Parsed::Malformed,
    };
    Parsed::Ok(RawUser {
        key: key.to_string(),
        friends,
        review_count,
        average_stars,
        yelping_since,
        fans,
        elite_years: elite.len() as u32,
    })
}

/// Early dataset rounds give `yelping_since` as `YYYY-MM`.
fn parse_month(raw: &str) -> Option<NaiveDate> {
    let raw = raw.trim();
    NaiveDate::parse_from_str(&format!("{raw}-01"), "%Y-%m-%d").ok()
}

fn parse_event(line: &str, kind: EventKind) -> Parsed<RawEvent> {
    let Some(obj) = parse_object(line) else {
        return Parsed::Malformed;
    };
    let (Some(user), Some(business), Some(date)) = (
        get_str(&obj, "user_id"),
        get_str(&obj, "business_id"),
        get_str(&obj, "date"),
    ) else {
        return Parsed::Malformed;
    };
    let text_len = match obj.get("text") {
        None | Some(Value::Null) => 0,
        Some(Value::String(s)) => s.chars().count() as u32,
        Some(_) => return Parsed::Malformed,
    };
    let (Some(useful), Some(funny), Some(cool), Some(likes)) = (
        get_count(&obj, "useful"),
        get_count(&obj, "funny"),
        get_count(&obj, "cool"),
        match kind {
            EventKind::Tip => get_count(&obj, "likes"),
            EventKind::Review => Some(0),
        },
    ) else {
        return Parsed::Malformed;
    };
    let stars = match kind {
        EventKind::Tip => None,
        EventKind::Review => match obj.get("stars") {
            None | Some(Value::Null) => None,
            Some(v) => match v.as_f64() {
                Some(s) if s.fract() == 0.0 && (1.0..=5.0).contains(&s) => Some(s as u8),
                Some(_) => return Parsed::Invalid,
                None => return Parsed::Malformed,
            },
        },
    };
    let Some(date) = parse_day(date) else {
        return Parsed::Invalid;
    };
    let (useful, funny, cool, likes) = match kind {
        EventKind::Review => (useful, funny, cool, 0),
        EventKind::Tip => (0, 0, 0, likes),
    };
    Parsed::Ok(RawEvent {
        user: user.to_string(),
        business: business.to_string(),
        date,
        kind,
        stars,
        text_len,
        useful,
        funny,
        cool,
        likes,
    })
}

/// Parse every line of `reader`, returning retained records and line counts.
fn parse_lines<T>(
    mut reader: impl BufRead,
    path: &Path,
    parse: impl Fn(&str) -> Parsed<T>,
) -> Result<(Vec<T>, FileCounts)> {
    let mut counts = FileCounts::default();
    let mut out = Vec::new();
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = reader
            .read_until(b'\n', &mut buf)
            .map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        counts.lines += 1;
        let parsed = match std::str::from_utf8(&buf) {
            Ok(line) => parse(line.trim_end_matches(['\n', '\r'])),
            Err(_) => Parsed::Malformed,
        };
        match parsed {
            Parsed::Ok(v) => out.push(v),
            Parsed::Malformed => counts.malformed += 1,
            Parsed::Invalid => counts.invalid += 1,
        }
    }
    Ok((out, counts))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::with_capacity(1 << 20, file))
}

/// Sorted, deduplicated key list and its inverse map.
fn intern<'a>(keys: impl Iterator<Item = &'a str>) -> (Vec<String>, HashMap<String, u32>) {
    let mut sorted: Vec<&str> = keys.collect();
    sorted.sort_unstable();
    sorted.dedup();
    let keys: Vec<String> = sorted.into_iter().map(str::to_string).collect();
    let index = keys
        .iter()
        .enumerate()
        .map(|(i, k)| (k.clone(), i as u32))
        .collect();
    (keys, index)
}

/// Parse the four dataset files into interned, city-partitioned tables.
pub fn ingest_dataset(paths: &DatasetPaths) -> Result<IngestResult> {
    for p in paths.all() {
        if !p.is_file() {
            return Err(Error::MissingFile(p.to_path_buf()));
        }
    }
    let parsed = std::thread::scope(|s| {
        let b = s.spawn(|| parse_lines(open(&paths.business)?, &paths.business, parse_business));
        let u = s.spawn(|| parse_lines(open(&paths.user)?, &paths.user, parse_user));
        let r = s.spawn(|| {
            parse_lines(open(&paths.review)?, &paths.review, |l| {
                parse_event(l, EventKind::Review)
            })
        });
        let t = s.spawn(|| {
            parse_lines(open(&paths.tip)?, &paths.tip, |l| parse_event(l, EventKind::Tip))
        });
        (
            b.join().expect("business parser panicked"),
            u.join().expect("user parser panicked"),
            r.join().expect("review parser panicked"),
            t.join().expect("tip parser panicked"),
        )
    });
    merge(parsed, &paths.business)
}

/// Same as [`ingest_dataset`] over in-memory file contents.
pub fn ingest_from_memory(business: &str, user: &str, review: &str, tip: &str) -> Result<IngestResult> {
    let mem = Path::new("<memory>");
    let parsed = (
        parse_lines(business.as_bytes(), mem, parse_business),
        parse_lines(user.as_bytes(), mem, parse_user),
        parse_lines(review.as_bytes(), mem, |l| parse_event(l, EventKind::Review)),
        parse_lines(tip.as_bytes(), mem, |l| parse_event(l, EventKind::Tip)),
    );
    merge(parsed, mem)
}

type ParsedFile<T> = Result<(Vec<T>, FileCounts)>;

fn merge(
    (businesses, users, reviews, tips): (
        ParsedFile<RawBusiness>,
        ParsedFile<RawUser>,
        ParsedFile<RawEvent>,
        ParsedFile<RawEvent>,
    ),
    business_path: &Path,
) -> Result<IngestResult> {
    let (raw_businesses, mut business_counts) = businesses?;
    let (raw_users, mut user_counts) = users?;
    let (raw_reviews, mut review_counts) = reviews?;
    let (raw_tips, mut tip_counts) = tips?;

    // Businesses: drop empty cities and duplicate ids, then intern.
    let mut seen_business: HashMap<&str, ()> = HashMap::new();
    let mut kept_businesses: Vec<(&RawBusiness, String)> = Vec::new();
    for b in &raw_businesses {
        let city = normalize_city(&b.city);
        if city.is_empty() {
            business_counts.empty_city += 1;
        } else if seen_business.insert(&b.key, ()).is_some() {
            business_counts.duplicate += 1;
        } else {
            kept_businesses.push((b, city));
        }
    }
    business_counts.retained = kept_businesses.len() as u64;
    if kept_businesses.is_empty() {
        return Err(Error::NoBusinesses(business_path.to_path_buf()));
    }
    let (business_keys, business_index) =
        intern(kept_businesses.iter().map(|(b, _)| b.key.as_str()));
    let mut businesses: Vec<Option<BusinessRecord>> = vec![None; business_keys.len()];
    for (b, city) in kept_businesses {
        let id = business_index[&b.key];
        businesses[id as usize] = Some(BusinessRecord {
            business_id: id,
            city,
            stars: b.stars,
            review_count: b.review_count,
            category_count: b.category_count,
            is_open: b.is_open,
        });
    }
    let businesses: Vec<BusinessRecord> = businesses.into_iter().map(Option::unwrap).collect();

    // Users: the id space covers user records, friends and event authors.
    let mut seen_user: HashMap<&str, ()> = HashMap::new();
    let mut kept_users: Vec<&RawUser> = Vec::new();
    for u in &raw_users {
        if seen_user.insert(&u.key, ()).is_some() {
            user_counts.duplicate += 1;
        } else {
            kept_users.push(u);
        }
    }
    user_counts.retained = kept_users.len() as u64;

    let retain_event = |e: &RawEvent| business_index.contains_key(&e.business);
    let user_key_iter = kept_users
        .iter()
        .flat_map(|u| std::iter::once(u.key.as_str()).chain(u.friends.iter().map(String::as_str)))
        .chain(
            raw_reviews
                .iter()
                .chain(raw_tips.iter())
                .filter(|e| retain_event(e))
                .map(|e| e.user.as_str()),
        );
    let (user_keys, user_index) = intern(user_key_iter);

    let mut users: Vec<Option<UserRecord>> = vec![None; user_keys.len()];
    for u in kept_users {
        let id = user_index[&u.key];
        let mut friends: Vec<UserId> = u
            .friends
            .iter()
            .map(|f| user_index[f])
            .filter(|&f| f != id)
            .collect();
        friends.sort_unstable();
        friends.dedup();
        users[id as usize] = Some(UserRecord {
            user_id: id,
            friends,
            review_count: u.review_count,
            average_stars: u.average_stars,
            yelping_since: u.yelping_since,
            fans: u.fans,
            elite_years: u.elite_years,
        });
    }

    let mut events: BTreeMap<String, Vec<Event>> = BTreeMap::new();
    for (raw, counts) in [(&raw_reviews, &mut review_counts), (&raw_tips, &mut tip_counts)] {
        for e in raw {
            let Some(&business) = business_index.get(&e.business) else {
                counts.unknown_business += 1;
                continue;
            };
            counts.retained += 1;
            let city = &businesses[business as usize].city;
            events.entry(city.clone()).or_default().push(Event {
                user: user_index[&e.user],
                business,
                date: e.date,
                kind: e.kind,
                stars: e.stars,
                text_len: e.text_len,
                useful: e.useful,
                funny: e.funny,
                cool: e.cool,
                likes: e.likes,
            });
        }
    }
    for list in events.values_mut() {
        list.sort_by_key(Event::sort_key);
    }

    let drops = DropCounts {
        business: business_counts,
        user: user_counts,
        review: review_counts,
        tip: tip_counts,
    };
    for (name, c) in [
        ("business", &drops.business),
        ("user", &drops.user),
        ("review", &drops.review),
        ("tip", &drops.tip),
    ] {
        if c.malformed > 0 {
            warn!("{name}: skipped {} malformed lines", c.malformed);
        }
        info!("{name}: {} lines, {} retained, {} dropped", c.lines, c.retained, c.dropped());
    }

    Ok(IngestResult {
        events,
        users,
        user_keys,
        businesses,
        business_keys,
        drops,
    })
}
