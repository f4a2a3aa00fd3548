//! Offline cohort construction: keyword search for diagnosis statements,
//! time-keyword shortlisting for manual review, label ingestion and the
//! language/activity filters.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::{format_timestamp, parse_timestamp, tokenize, Corpus, Group, Tweet};
use crate::error::{Error, Result};

/// Users need strictly more than this many tweets to stay in the cohort.
pub const MIN_ACTIVE_TWEETS: usize = 100;
/// Users whose share of URL or non-English tweets exceeds this are dropped.
pub const MAX_NOISY_FRACTION: f64 = 0.5;
/// A tweet is treated as English when at least this share of its non-space
/// characters is basic Latin.
pub const ENGLISH_LATIN_SHARE: f64 = 0.8;

pub const DEFAULT_TIME_KEYWORDS: &str = include_str!("../data/time_keywords.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatchMode {
    AllRequired,
    AnyRequired,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeywordFilter {
    keys: BTreeSet<String>,
    mode: MatchMode,
}

impl KeywordFilter {
    pub fn new<I, S>(keys: I, mode: MatchMode) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = BTreeSet::new();
        for k in keys {
            let k = k.as_ref();
            if tokenize(k) != [k] {
                return Err(Error::arg(format!(
                    "keyword {k:?} must be a single lowercase token"
                )));
            }
            set.insert(k.to_string());
        }
        if set.is_empty() {
            return Err(Error::arg("keyword set is empty"));
        }
        Ok(KeywordFilter { keys: set, mode })
    }

    pub fn keys(&self) -> &BTreeSet<String> {
        &self.keys
    }

    pub fn mode(&self) -> MatchMode {
        self.mode
    }

    pub fn matches(&self, tweet: &Tweet) -> bool {
        let tokens = tweet.tokens();
        let vocab: HashSet<&str> = tokens.iter().map(String::as_str).collect();
        match self.mode {
            MatchMode::AllRequired => self.keys.iter().all(|k| vocab.contains(k.as_str())),
            MatchMode::AnyRequired => self.keys.iter().any(|k| vocab.contains(k.as_str())),
        }
    }
}

/// Tweets whose unigram set contains every key of an all-required filter.
pub fn minimum_keyword_search<'a>(corpus: &'a Corpus, filter: &KeywordFilter) -> Result<Vec<&'a Tweet>> {
    if filter.mode != MatchMode::AllRequired {
        return Err(Error::arg("minimum keyword search needs an all-required filter"));
    }
    Ok(corpus
        .users()
        .flat_map(|u| u.tweets())
        .filter(|t| filter.matches(t))
        .collect())
}

/// Keeps candidates that share at least one token with `time_keys`.
pub fn time_keyword_filter<'a, S: AsRef<str>>(
    candidates: &[&'a Tweet],
    time_keys: &[S],
) -> Result<Vec<&'a Tweet>> {
    let filter = KeywordFilter::new(time_keys.iter().map(|s| s.as_ref()), MatchMode::AnyRequired)?;
    Ok(candidates.iter().copied().filter(|t| filter.matches(t)).collect())
}

/// Parses a keyword list: one word per line, `#` comments.
pub fn parse_keyword_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn default_time_keywords() -> Vec<String> {
    parse_keyword_list(DEFAULT_TIME_KEYWORDS)
}

#[derive(Debug, Serialize, Deserialize)]
struct ReviewRow {
    user_id: String,
    tweet_id: String,
    created_at_utc: String,
    text: String,
}

/// Writes the manual-review worklist (`user_id,tweet_id,created_at_utc,text`).
pub fn write_review_worklist(tweets: &[&Tweet], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    for t in tweets {
        w.serialize(ReviewRow {
            user_id: t.author_id.clone(),
            tweet_id: t.id.clone(),
            created_at_utc: format_timestamp(&t.created_at_utc),
            text: t.text.clone(),
        })?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
    Ok(())
}

/// A manually assigned diagnosis time, resolved to the first day of the month.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiagnosisLabel {
    pub user_id: String,
    pub tau: DateTime<Utc>,
    pub evidence_tweet_id: String,
}

impl DiagnosisLabel {
    pub fn new(user_id: impl Into<String>, year: i32, month: u32, evidence_tweet_id: impl Into<String>) -> Result<Self> {
        let tau = Utc
            .with_ymd_and_hms(year, month, 1, 0, 0, 0)
            .single()
            .ok_or_else(|| Error::arg(format!("invalid diagnosis month {year}-{month}")))?;
        Ok(DiagnosisLabel {
            user_id: user_id.into(),
            tau,
            evidence_tweet_id: evidence_tweet_id.into(),
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelRow {
    user_id: String,
    tau_year: i32,
    tau_month: u32,
    evidence_tweet_id: String,
}

/// Reads a label file (`user_id,tau_year,tau_month,evidence_tweet_id`).
/// Rows that fail to parse are reported with their 1-based data row number.
pub fn read_labels(path: impl AsRef<Path>) -> Result<(Vec<DiagnosisLabel>, Vec<(usize, String)>)> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let mut labels = Vec::new();
    let mut bad = Vec::new();
    for (i, row) in rdr.deserialize::<LabelRow>().enumerate() {
        match row.map_err(Error::from).and_then(|r| {
            DiagnosisLabel::new(r.user_id, r.tau_year, r.tau_month, r.evidence_tweet_id)
        }) {
            Ok(l) => labels.push(l),
            Err(e) => bad.push((i + 1, e.to_string())),
        }
    }
    Ok((labels, bad))
}

pub fn write_labels(labels: &[DiagnosisLabel], path: impl AsRef<Path>) -> Result<()> {
    use chrono::Datelike;
    let mut w = csv::Writer::from_path(path.as_ref())?;
    for l in labels {
        w.serialize(LabelRow {
            user_id: l.user_id.clone(),
            tau_year: l.tau.year(),
            tau_month: l.tau.month(),
            evidence_tweet_id: l.evidence_tweet_id.clone(),
        })?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabelReport {
    pub applied: usize,
    /// (0-based label index, user id, reason)
    pub rejected: Vec<(usize, String, String)>,
    pub conflicts: Vec<String>,
}

pub fn apply_diagnosis_labels(corpus: &Corpus, labels: &[DiagnosisLabel]) -> (Corpus, LabelReport) {
    let mut out = corpus.clone();
    let mut report = LabelReport::default();
    let mut labelled: HashSet<&str> = HashSet::new();

    for (i, label) in labels.iter().enumerate() {
        let reject = |report: &mut LabelReport, reason: String| {
            log::warn!("label row {i} for {}: {reason}", label.user_id);
            report.rejected.push((i, label.user_id.clone(), reason));
        };
        if labelled.contains(label.user_id.as_str()) {
            let msg = format!("duplicate label for {}, keeping the first", label.user_id);
            log::warn!("{msg}");
            report.conflicts.push(msg);
            continue;
        }
        let Some(user) = out.user_mut(&label.user_id) else {
            reject(&mut report, "unknown user".into());
            continue;
        };
        if user.group() == Group::Regular {
            reject(&mut report, "user already in the regular cohort".into());
            continue;
        }
        let Some(evidence) = user.tweets().iter().find(|t| t.id == label.evidence_tweet_id) else {
            reject(&mut report, format!("evidence tweet {} not found", label.evidence_tweet_id));
            continue;
        };
        if label.tau > evidence.created_at_utc {
            reject(&mut report, "diagnosis time after evidence tweet".into());
            continue;
        }
        user.set_bipolar(label.tau);
        labelled.insert(&label.user_id);
        report.applied += 1;
    }
    (out, report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RemovalReason {
    TooFewTweets,
    NonEnglishOrLinks,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FilterReport {
    pub kept: usize,
    pub removed: Vec<(String, RemovalReason)>,
}

pub fn fails_english(text: &str) -> bool {
    let (mut total, mut latin) = (0usize, 0usize);
    for c in text.chars().filter(|c| !c.is_whitespace()) {
        total += 1;
        if c.is_ascii() {
            latin += 1;
        }
    }
    total > 0 && (latin as f64) < ENGLISH_LATIN_SHARE * total as f64
}

pub fn language_activity_filter(corpus: &Corpus) -> (Corpus, FilterReport) {
    let mut report = FilterReport::default();
    let filtered = corpus.retain(|u| {
        let n = u.tweets().len();
        let reason = if n <= MIN_ACTIVE_TWEETS {
            Some(RemovalReason::TooFewTweets)
        } else {
            let noisy = u
                .tweets()
                .iter()
                .filter(|t| t.has_url() || fails_english(&t.text))
                .count();
            (noisy as f64 / n as f64 > MAX_NOISY_FRACTION).then_some(RemovalReason::NonEnglishOrLinks)
        };
        match reason {
            Some(r) => {
                report.removed.push((u.user_id().to_string(), r));
                false
            }
            None => {
                report.kept += 1;
                true
            }
        }
    });
    (filtered, report)
}

/// Marks unlabeled users as regular. Fails if any listed user is bipolar;
/// unknown ids are reported and skipped.
pub fn mark_regular_cohort<S: AsRef<str>>(corpus: &Corpus, user_ids: &[S]) -> Result<(Corpus, Vec<String>)> {
    let mut out = corpus.clone();
    let mut unknown = Vec::new();
    for id in user_ids {
        let id = id.as_ref();
        match out.user_mut(id) {
            None => {
                log::warn!("cannot mark {id} as regular: unknown user");
                unknown.push(id.to_string());
            }
            Some(u) if u.group() == Group::Bipolar => {
                return Err(Error::arg(format!(
                    "user {id} is bipolar; cohorts must be disjoint"
                )));
            }
            Some(u) => u.set_regular(),
        }
    }
    Ok((out, unknown))
}

#[derive(Debug, Serialize, Deserialize)]
struct CohortRow {
    user_id: String,
    group: Group,
    tau: String,
}

/// Persists cohort membership (`user_id,group,tau`) for every user.
pub fn write_cohort(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    for u in corpus.users() {
        w.serialize(CohortRow {
            user_id: u.user_id().to_string(),
            group: u.group(),
            tau: u.diagnosis_time().map(|t| format_timestamp(&t)).unwrap_or_default(),
        })?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
    Ok(())
}

/// Applies a cohort file to a corpus. Users absent from the file stay
/// unlabeled; rows naming unknown users are errors.
pub fn apply_cohort_file(corpus: &Corpus, path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let mut out = corpus.clone();
    let mut rdr = csv::Reader::from_path(path)?;
    for (i, row) in rdr.deserialize::<CohortRow>().enumerate() {
        let row = row?;
        let user = out
            .user_mut(&row.user_id)
            .ok_or_else(|| Error::UnknownUser(row.user_id.clone()))?;
        match row.group {
            Group::Bipolar => {
                let tau = parse_timestamp(&row.tau)
                    .map_err(|e| Error::parse(path, i + 2, e.to_string()))?;
                user.set_bipolar(tau);
            }
            Group::Regular => user.set_regular(),
            Group::Unlabeled => user.set_unlabeled(),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::UserRecord;
    use chrono::Duration;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2016, 6, 15, 12, 0, 0).unwrap()
    }

    fn tweet(id: &str, user: &str, text: &str, at: DateTime<Utc>) -> Tweet {
        Tweet::new(id, user, text, at, None).unwrap()
    }

    fn diag() -> KeywordFilter {
        KeywordFilter::new(["diagnosed", "bipolar"], MatchMode::AllRequired).unwrap()
    }

    fn user_with(id: &str, texts: &[&str]) -> UserRecord {
        let tweets = texts
            .iter()
            .enumerate()
            .map(|(i, s)| tweet(&format!("{id}-{i}"), id, s, t0() + Duration::hours(i as i64)))
            .collect();
        UserRecord::new(id, tweets)
    }

    #[test]
    fn keyword_search_examples() {
        let f = diag();
        assert!(f.matches(&tweet("1", "u", "I was diagnosed with bipolar today", t0())));
        assert!(!f.matches(&tweet("2", "u", "diagnosed with depression", t0())));
        assert!(f.matches(&tweet("3", "u", "Bipolar? I was DIAGNOSED.", t0())));
    }

    #[test]
    fn empty_or_multiword_keys_rejected() {
        assert!(KeywordFilter::new(Vec::<String>::new(), MatchMode::AllRequired).is_err());
        assert!(KeywordFilter::new(["Bipolar"], MatchMode::AllRequired).is_err());
        assert!(KeywordFilter::new(["two words"], MatchMode::AllRequired).is_err());
        let any = KeywordFilter::new(["x"], MatchMode::AnyRequired).unwrap();
        assert!(minimum_keyword_search(&Corpus::default(), &any).is_err());
    }

    #[test]
    fn time_keyword_examples() {
        let keys = ["today", "last", "months", "year"];
        let a = tweet("1", "u", "diagnosed bipolar last year this month", t0());
        let b = tweet("2", "u", "diagnosed bipolar, rough day", t0());
        let c = tweet("3", "u", "diagnosed bipolar 3 months ago", t0());
        let kept = time_keyword_filter(&[&a, &b, &c], &keys).unwrap();
        assert_eq!(kept.iter().map(|t| t.id.as_str()).collect::<Vec<_>>(), vec!["1", "3"]);
        assert!(time_keyword_filter(&[&a], &Vec::<String>::new()).is_err());
    }

    #[test]
    fn default_time_keywords_loaded() {
        let k = default_time_keywords();
        assert_eq!(k.len(), 9);
        assert!(k.contains(&"ago".to_string()));
    }

    fn three_users() -> Corpus {
        Corpus::from_users([
            user_with("a", &["I was diagnosed with bipolar this month"]),
            user_with("b", &["hello"]),
            user_with("c", &["hi"]),
        ])
        .unwrap()
    }

    #[test]
    fn apply_one_label() {
        let c = three_users();
        let l = DiagnosisLabel::new("a", 2016, 6, "a-0").unwrap();
        let (out, rep) = apply_diagnosis_labels(&c, &[l]);
        assert_eq!(rep.applied, 1);
        assert_eq!(out.users_in(Group::Bipolar).count(), 1);
        assert_eq!(
            out.user("a").unwrap().diagnosis_time(),
            Some(Utc.with_ymd_and_hms(2016, 6, 1, 0, 0, 0).unwrap())
        );
    }

    #[test]
    fn label_after_evidence_rejected() {
        let c = three_users();
        let l = DiagnosisLabel::new("a", 2016, 7, "a-0").unwrap();
        let (out, rep) = apply_diagnosis_labels(&c, &[l]);
        assert_eq!(rep.applied, 0);
        assert_eq!(rep.rejected.len(), 1);
        assert_eq!(out.users_in(Group::Bipolar).count(), 0);
    }

    #[test]
    fn duplicate_labels_keep_first() {
        let c = three_users();
        let l1 = DiagnosisLabel::new("a", 2016, 5, "a-0").unwrap();
        let l2 = DiagnosisLabel::new("a", 2016, 6, "a-0").unwrap();
        let (out, rep) = apply_diagnosis_labels(&c, &[l1, l2]);
        assert_eq!(rep.applied, 1);
        assert_eq!(rep.conflicts.len(), 1);
        assert_eq!(
            out.user("a").unwrap().diagnosis_time(),
            Some(Utc.with_ymd_and_hms(2016, 5, 1, 0, 0, 0).unwrap())
        );
    }

    #[test]
    fn unknown_user_label_row_skipped() {
        let c = three_users();
        let l = DiagnosisLabel::new("zz", 2016, 5, "x").unwrap();
        let (_, rep) = apply_diagnosis_labels(&c, &[l]);
        assert_eq!(rep.rejected[0].1, "zz");
    }

    fn active_user(id: &str, n: usize, n_url: usize) -> UserRecord {
        let tweets = (0..n)
            .map(|i| {
                let text = if i < n_url { "look https://t.co/abc" } else { "plain english words" };
                tweet(&format!("{id}-{i}"), id, text, t0() + Duration::hours(i as i64))
            })
            .collect();
        UserRecord::new(id, tweets)
    }

    #[test]
    fn language_activity_examples() {
        let c = Corpus::from_users([
            active_user("links", 200, 120),
            active_user("exactly100", 100, 0),
            active_user("ok", 150, 0),
        ])
        .unwrap();
        let (out, rep) = language_activity_filter(&c);
        assert_eq!(out.user_ids().collect::<Vec<_>>(), vec!["ok"]);
        assert!(rep.removed.contains(&("links".into(), RemovalReason::NonEnglishOrLinks)));
        assert!(rep.removed.contains(&("exactly100".into(), RemovalReason::TooFewTweets)));
        let (again, _) = language_activity_filter(&out);
        assert_eq!(again, out);
    }

    #[test]
    fn english_heuristic() {
        assert!(!fails_english("hello there!"));
        assert!(fails_english("こんにちは世界"));
        assert!(!fails_english("café au lait ok"));
        assert!(!fails_english("   "));
    }

    #[test]
    fn mark_regular_examples() {
        let c = Corpus::from_users((0..5).map(|i| user_with(&format!("u{i}"), &["hi"]))).unwrap();
        let ids: Vec<String> = (0..5).map(|i| format!("u{i}")).collect();
        let (out, unknown) = mark_regular_cohort(&c, &ids).unwrap();
        assert!(unknown.is_empty());
        assert_eq!(out.users_in(Group::Regular).count(), 5);

        let (_, unknown) = mark_regular_cohort(&c, &["nope"]).unwrap();
        assert_eq!(unknown, vec!["nope".to_string()]);

        let (labelled, _) = apply_diagnosis_labels(
            &three_users(),
            &[DiagnosisLabel::new("a", 2016, 6, "a-0").unwrap()],
        );
        assert!(mark_regular_cohort(&labelled, &["a"]).is_err());
        let (both, _) = mark_regular_cohort(&labelled, &["b", "c"]).unwrap();
        let bip: HashSet<_> = both.users_in(Group::Bipolar).map(|u| u.user_id()).collect();
        let reg: HashSet<_> = both.users_in(Group::Regular).map(|u| u.user_id()).collect();
        assert!(bip.is_disjoint(&reg));
    }

    #[test]
    fn cohort_and_label_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let labels = vec![DiagnosisLabel::new("a", 2016, 6, "a-0").unwrap()];
        write_labels(&labels, dir.path().join("labels.csv")).unwrap();
        let (back, bad) = read_labels(dir.path().join("labels.csv")).unwrap();
        assert_eq!(back, labels);
        assert!(bad.is_empty());

        let (c, _) = apply_diagnosis_labels(&three_users(), &labels);
        let (c, _) = mark_regular_cohort(&c, &["b"]).unwrap();
        write_cohort(&c, dir.path().join("cohort.csv")).unwrap();
        let restored = apply_cohort_file(&three_users(), dir.path().join("cohort.csv")).unwrap();
        assert_eq!(restored, c);
    }

    #[test]
    fn review_worklist_has_header() {
        let dir = tempfile::tempdir().unwrap();
        let t = tweet("1", "u", "diagnosed, bipolar \"today\"", t0());
        let p = dir.path().join("review.csv");
        write_review_worklist(&[&t], &p).unwrap();
        let s = std::fs::read_to_string(p).unwrap();
        assert!(s.starts_with("user_id,tweet_id,created_at_utc,text\n"));
        assert!(s.contains("2016-06-15T12:00:00Z"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        const WORDS: &[&str] = &["diagnosed", "bipolar", "today", "sad", "happy", "month"];

        proptest! {
            #[test]
            fn search_is_monotone_in_keys(
                texts in prop::collection::vec(prop::collection::vec(0usize..6, 0..8), 1..20),
                small in prop::collection::btree_set(0usize..6, 1..3),
                extra in prop::collection::btree_set(0usize..6, 0..3),
            ) {
                let tweets: Vec<Tweet> = texts.iter().enumerate().map(|(i, ws)| {
                    let s: Vec<&str> = ws.iter().map(|&w| WORDS[w]).collect();
                    tweet(&i.to_string(), "u", &s.join(" "), t0())
                }).collect();
                let c = Corpus::from_users([UserRecord::new("u", tweets)]).unwrap();
                let phi: Vec<&str> = small.iter().map(|&w| WORDS[w]).collect();
                let phi2: Vec<&str> = small.union(&extra).map(|&w| WORDS[w]).collect();
                let loose: HashSet<_> = minimum_keyword_search(&c, &KeywordFilter::new(&phi, MatchMode::AllRequired).unwrap())
                    .unwrap().into_iter().map(|t| t.id.clone()).collect();
                let strict: HashSet<_> = minimum_keyword_search(&c, &KeywordFilter::new(&phi2, MatchMode::AllRequired).unwrap())
                    .unwrap().into_iter().map(|t| t.id.clone()).collect();
                prop_assert!(strict.is_subset(&loose));
            }
        }
    }
}
