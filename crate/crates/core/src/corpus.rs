//! User archives: loading, validation, local-time conversion and tokenization.
//!
//! The archive format is JSON lines, one post per line:
//!
//! ```text
//! {"id":"t1","user_id":"u1","text":"...","created_at_utc":"2016-05-01T03:00:00Z","utc_offset_minutes":-300}
//! ```
//!
//! `utc_offset_minutes` may be `null` or absent. Unknown keys are ignored.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use chrono::{DateTime, Duration, NaiveDateTime, SubsecRound, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest accepted |UTC offset|, in minutes.
pub const MAX_UTC_OFFSET_MINUTES: i32 = 14 * 60;

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

static URL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(?:https?://|www\.)\S+").unwrap());
static MENTION_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"@(\w+)").unwrap());
static TOKEN_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[\p{Alphabetic}\p{N}]+(?:'[\p{Alphabetic}\p{N}]+)*").unwrap());

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|t| t.with_timezone(&Utc).trunc_subsecs(0))
        .map_err(|e| Error::arg(format!("bad timestamp {s:?}: {e}")))
}

/// A single timestamped post.
#[derive(Clone, Debug, PartialEq)]
pub struct Tweet {
    pub id: String,
    pub author_id: String,
    pub text: String,
    pub created_at_utc: DateTime<Utc>,
    pub utc_offset_minutes: Option<i32>,
    has_url: bool,
    mentions: Vec<String>,
}

impl Tweet {
    pub fn new(
        id: impl Into<String>,
        author_id: impl Into<String>,
        text: impl Into<String>,
        created_at_utc: DateTime<Utc>,
        utc_offset_minutes: Option<i32>,
    ) -> Result<Self> {
        if let Some(off) = utc_offset_minutes {
            if off.abs() > MAX_UTC_OFFSET_MINUTES {
                return Err(Error::arg(format!("utc offset {off} out of range")));
            }
        }
        let text = text.into();
        Ok(Tweet {
            id: id.into(),
            author_id: author_id.into(),
            has_url: URL_RE.is_match(&text),
            mentions: extract_mentions(&text),
            text,
            created_at_utc: created_at_utc.trunc_subsecs(0),
            utc_offset_minutes,
        })
    }

    pub fn has_url(&self) -> bool {
        self.has_url
    }

    /// Lowercased handles mentioned in the text, in order of appearance.
    pub fn mentions(&self) -> &[String] {
        &self.mentions
    }

    pub fn tokens(&self) -> Vec<String> {
        tokenize(&self.text)
    }
}

fn extract_mentions(text: &str) -> Vec<String> {
    let without_urls = URL_RE.replace_all(text, " ");
    MENTION_RE
        .captures_iter(&without_urls)
        .map(|c| c[1].to_lowercase())
        .collect()
}

/// Whether a local time came from a known offset or fell back to UTC.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeSource {
    Exact,
    UtcFallback,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LocalTime {
    pub local: NaiveDateTime,
    pub source: TimeSource,
}

pub fn to_local_time(t: &Tweet) -> LocalTime {
    match t.utc_offset_minutes {
        Some(off) => LocalTime {
            local: (t.created_at_utc + Duration::minutes(off as i64)).naive_utc(),
            source: TimeSource::Exact,
        },
        None => LocalTime {
            local: t.created_at_utc.naive_utc(),
            source: TimeSource::UtcFallback,
        },
    }
}

/// Lowercased word tokens. URLs and @handles are dropped, `#` is stripped from
/// hashtags, and a token is a run of letters/digits with inner apostrophes.
pub fn tokenize(text: &str) -> Vec<String> {
    let text = text.replace('\u{2019}', "'");
    let no_urls = URL_RE.replace_all(&text, " ");
    let lowered = MENTION_RE.replace_all(&no_urls, " ").to_lowercase();
    TOKEN_RE
        .find_iter(&lowered)
        .map(|m| m.as_str().to_string())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Bipolar,
    Regular,
    Unlabeled,
}

impl std::fmt::Display for Group {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Group::Bipolar => "bipolar",
            Group::Regular => "regular",
            Group::Unlabeled => "unlabeled",
        })
    }
}

impl std::str::FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "bipolar" => Ok(Group::Bipolar),
            "regular" => Ok(Group::Regular),
            "unlabeled" => Ok(Group::Unlabeled),
            other => Err(Error::arg(format!("unknown group {other:?}"))),
        }
    }
}

/// One user's archive with cohort assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct UserRecord {
    user_id: String,
    group: Group,
    diagnosis_time: Option<DateTime<Utc>>,
    tweets: Vec<Tweet>,
}

impl UserRecord {
    /// Builds an unlabeled user; tweets are sorted by time (stable on ties).
    pub fn new(user_id: impl Into<String>, mut tweets: Vec<Tweet>) -> Self {
        tweets.sort_by_key(|t| t.created_at_utc);
        UserRecord {
            user_id: user_id.into(),
            group: Group::Unlabeled,
            diagnosis_time: None,
            tweets,
        }
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn group(&self) -> Group {
        self.group
    }

    pub fn diagnosis_time(&self) -> Option<DateTime<Utc>> {
        self.diagnosis_time
    }

    pub fn tweets(&self) -> &[Tweet] {
        &self.tweets
    }

    pub fn first_tweet_time(&self) -> Option<DateTime<Utc>> {
        self.tweets.first().map(|t| t.created_at_utc)
    }

    pub fn last_tweet_time(&self) -> Option<DateTime<Utc>> {
        self.tweets.last().map(|t| t.created_at_utc)
    }

    pub fn set_bipolar(&mut self, tau: DateTime<Utc>) {
        self.group = Group::Bipolar;
        self.diagnosis_time = Some(tau);
    }

    pub fn set_regular(&mut self) {
        self.group = Group::Regular;
        self.diagnosis_time = None;
    }

    pub fn set_unlabeled(&mut self) {
        self.group = Group::Unlabeled;
        self.diagnosis_time = None;
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub source: PathBuf,
    pub loaded_at: DateTime<Utc>,
}

/// All users keyed by id. Immutable once built; transforms return new corpora.
#[derive(Clone, Debug, Default)]
pub struct Corpus {
    users: BTreeMap<String, UserRecord>,
    pub provenance: Option<Provenance>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.users == other.users
    }
}

impl Corpus {
    /// Builds a corpus, checking id uniqueness and author consistency.
    pub fn from_users(users: impl IntoIterator<Item = UserRecord>) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut tweet_ids = HashSet::new();
        for u in users {
            for t in &u.tweets {
                if t.author_id != u.user_id {
                    return Err(Error::arg(format!(
                        "tweet {} authored by {} stored under user {}",
                        t.id, t.author_id, u.user_id
                    )));
                }
                if !tweet_ids.insert(t.id.clone()) {
                    return Err(Error::arg(format!("duplicate tweet id {}", t.id)));
                }
            }
            let id = u.user_id.clone();
            if map.insert(id.clone(), u).is_some() {
                return Err(Error::arg(format!("duplicate user id {id}")));
            }
        }
        Ok(Corpus {
            users: map,
            provenance: None,
        })
    }

    pub fn users(&self) -> impl Iterator<Item = &UserRecord> {
        self.users.values()
    }

    pub fn user(&self, id: &str) -> Option<&UserRecord> {
        self.users.get(id)
    }

    pub(crate) fn user_mut(&mut self, id: &str) -> Option<&mut UserRecord> {
        self.users.get_mut(id)
    }

    pub fn user_ids(&self) -> impl Iterator<Item = &str> {
        self.users.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn tweet_count(&self) -> usize {
        self.users.values().map(|u| u.tweets.len()).sum()
    }

    pub fn users_in(&self, group: Group) -> impl Iterator<Item = &UserRecord> {
        self.users.values().filter(move |u| u.group == group)
    }

    /// Keeps the users for which `keep` is true.
    pub fn retain(&self, mut keep: impl FnMut(&UserRecord) -> bool) -> Corpus {
        Corpus {
            users: self
                .users
                .iter()
                .filter(|(_, u)| keep(u))
                .map(|(k, u)| (k.clone(), u.clone()))
                .collect(),
            provenance: self.provenance.clone(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ArchiveRecord {
    id: String,
    user_id: String,
    text: String,
    created_at_utc: String,
    #[serde(default)]
    utc_offset_minutes: Option<i32>,
}

/// Counts and warnings produced while reading an archive.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub loaded: usize,
    /// (1-based line number, reason)
    pub skipped: Vec<(usize, String)>,
    /// (1-based line number, tweet id) of duplicates that were dropped.
    pub duplicates: Vec<(usize, String)>,
    pub warnings: Vec<String>,
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<(Corpus, LoadReport)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let (mut corpus, report) = read_corpus(BufReader::new(file), path)?;
    corpus.provenance = Some(Provenance {
        source: path.to_path_buf(),
        loaded_at: Utc::now(),
    });
    Ok((corpus, report))
}

pub fn read_corpus(reader: impl BufRead, source: &Path) -> Result<(Corpus, LoadReport)> {
    let mut report = LoadReport::default();
    let mut seen = HashSet::new();
    let mut by_user: BTreeMap<String, Vec<Tweet>> = BTreeMap::new();

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let tweet = match parse_record(&line) {
            Ok(t) => t,
            Err(reason) => {
                log::warn!("{}:{lineno}: skipping malformed record: {reason}", source.display());
                report.skipped.push((lineno, reason));
                continue;
            }
        };
        if !seen.insert(tweet.id.clone()) {
            log::warn!("{}:{lineno}: duplicate tweet id {}, keeping first", source.display(), tweet.id);
            report.duplicates.push((lineno, tweet.id));
            continue;
        }
        report.loaded += 1;
        by_user.entry(tweet.author_id.clone()).or_default().push(tweet);
    }

    if report.loaded == 0 {
        log::warn!("{}: empty corpus", source.display());
        report.warnings.push("empty corpus".to_string());
    }

    let corpus = Corpus::from_users(by_user.into_iter().map(|(id, tw)| UserRecord::new(id, tw)))?;
    Ok((corpus, report))
}

fn parse_record(line: &str) -> std::result::Result<Tweet, String> {
    let rec: ArchiveRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if rec.id.is_empty() || rec.user_id.is_empty() {
        return Err("empty id or user_id".into());
    }
    let ts = parse_timestamp(&rec.created_at_utc).map_err(|e| e.to_string())?;
    Tweet::new(rec.id, rec.user_id, rec.text, ts, rec.utc_offset_minutes).map_err(|e| e.to_string())
}

/// Writes the corpus as JSON lines, users in id order, tweets chronological.
pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_corpus_to(corpus, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_corpus_to(corpus: &Corpus, w: &mut impl Write) -> std::io::Result<()> {
    for user in corpus.users() {
        for t in user.tweets() {
            let rec = ArchiveRecord {
                id: t.id.clone(),
                user_id: t.author_id.clone(),
                text: t.text.clone(),
                created_at_utc: format_timestamp(&t.created_at_utc),
                utc_offset_minutes: t.utc_offset_minutes,
            };
            serde_json::to_writer(&mut *w, &rec)?;
            w.write_all(b"\n")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn ts(s: &str) -> DateTime<Utc> {
        parse_timestamp(s).unwrap()
    }

    fn load_str(s: &str) -> (Corpus, LoadReport) {
        read_corpus(s.as_bytes(), Path::new("mem")).unwrap()
    }

    #[test]
    fn loads_three_lines_two_users() {
        let data = r#"{"id":"1","user_id":"a","text":"hi","created_at_utc":"2016-01-02T00:00:00Z","utc_offset_minutes":null}
{"id":"2","user_id":"b","text":"yo","created_at_utc":"2016-01-01T00:00:00Z"}
{"id":"3","user_id":"a","text":"earlier","created_at_utc":"2016-01-01T00:00:00Z","utc_offset_minutes":60,"lang":"en"}
"#;
        let (c, r) = load_str(data);
        assert_eq!(c.len(), 2);
        assert_eq!(c.tweet_count(), 3);
        assert_eq!(r.loaded, 3);
        let a = c.user("a").unwrap();
        assert_eq!(a.tweets()[0].id, "3");
        assert_eq!(a.tweets()[1].id, "1");
    }

    #[test]
    fn empty_file_warns() {
        let (c, r) = load_str("");
        assert!(c.is_empty());
        assert_eq!(r.warnings, vec!["empty corpus".to_string()]);
    }

    #[test]
    fn malformed_line_is_skipped_with_line_number() {
        let data = "{\"id\":\"1\",\"user_id\":\"a\",\"text\":\"x\",\"created_at_utc\":\"2016-01-01T00:00:00Z\"}\n{not json\n";
        let (c, r) = load_str(data);
        assert_eq!(c.tweet_count(), 1);
        assert_eq!(r.skipped.len(), 1);
        assert_eq!(r.skipped[0].0, 2);
    }

    #[test]
    fn bad_offset_and_timestamp_are_skipped() {
        let data = r#"{"id":"1","user_id":"a","text":"x","created_at_utc":"yesterday"}
{"id":"2","user_id":"a","text":"x","created_at_utc":"2016-01-01T00:00:00Z","utc_offset_minutes":900}
"#;
        let (_, r) = load_str(data);
        assert_eq!(r.skipped.iter().map(|s| s.0).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn duplicate_id_keeps_first() {
        let data = r#"{"id":"1","user_id":"a","text":"first","created_at_utc":"2016-01-01T00:00:00Z"}
{"id":"1","user_id":"a","text":"second","created_at_utc":"2016-01-02T00:00:00Z"}
"#;
        let (c, r) = load_str(data);
        assert_eq!(c.tweet_count(), 1);
        assert_eq!(c.user("a").unwrap().tweets()[0].text, "first");
        assert_eq!(r.duplicates, vec![(2, "1".to_string())]);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_corpus("/nonexistent/archive.jsonl").unwrap_err();
        assert_eq!(err.kind(), "io");
    }

    #[test]
    fn local_time_with_negative_offset() {
        let t = Tweet::new("1", "a", "", ts("2016-05-01T03:00:00Z"), Some(-300)).unwrap();
        let lt = to_local_time(&t);
        assert_eq!(lt.source, TimeSource::Exact);
        assert_eq!(
            lt.local,
            Utc.with_ymd_and_hms(2016, 4, 30, 22, 0, 0).unwrap().naive_utc()
        );
    }

    #[test]
    fn local_time_zero_offset_and_fallback() {
        let at = ts("2016-05-01T03:00:00Z");
        let zero = Tweet::new("1", "a", "", at, Some(0)).unwrap();
        assert_eq!(to_local_time(&zero).local, at.naive_utc());
        assert_eq!(to_local_time(&zero).source, TimeSource::Exact);
        let none = Tweet::new("2", "a", "", at, None).unwrap();
        assert_eq!(to_local_time(&none).local, at.naive_utc());
        assert_eq!(to_local_time(&none).source, TimeSource::UtcFallback);
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("I was Diagnosed!"), vec!["i", "was", "diagnosed"]);
        assert_eq!(
            tokenize("so sad https://t.co/x @bob #tired"),
            vec!["so", "sad", "tired"]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("I don't know"), vec!["i", "don't", "know"]);
    }

    #[test]
    fn derived_fields() {
        let t = Tweet::new("1", "a", "hey @Bob and @amy_2 see www.x.com", ts("2016-01-01T00:00:00Z"), None)
            .unwrap();
        assert!(t.has_url());
        assert_eq!(t.mentions(), &["bob".to_string(), "amy_2".to_string()]);
        let plain = Tweet::new("2", "a", "no links", ts("2016-01-01T00:00:00Z"), None).unwrap();
        assert!(!plain.has_url());
        assert!(plain.mentions().is_empty());
    }

    #[test]
    fn round_trip_through_archive() {
        let data = r#"{"id":"1","user_id":"a","text":"hi \"there\" @x","created_at_utc":"2016-01-02T00:00:00Z","utc_offset_minutes":-120}
{"id":"2","user_id":"b","text":"yo ünïcode","created_at_utc":"2016-01-01T00:00:00Z"}
"#;
        let (c, _) = load_str(data);
        let mut buf = Vec::new();
        write_corpus_to(&c, &mut buf).unwrap();
        let (c2, _) = read_corpus(buf.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(c, c2);
    }

    proptest! {
        #[test]
        fn tokenize_is_idempotent_on_joined_output(s in "\\PC{0,80}") {
            let once = tokenize(&s);
            let twice = tokenize(&once.join(" "));
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn local_time_preserves_order_for_shared_offset(a in 0i64..2_000_000_000, b in 0i64..2_000_000_000, off in -840i32..=840) {
            let ta = Tweet::new("a", "u", "", Utc.timestamp_opt(a, 0).unwrap(), Some(off)).unwrap();
            let tb = Tweet::new("b", "u", "", Utc.timestamp_opt(b, 0).unwrap(), Some(off)).unwrap();
            prop_assert_eq!(a.cmp(&b), to_local_time(&ta).local.cmp(&to_local_time(&tb).local));
        }
    }
}
