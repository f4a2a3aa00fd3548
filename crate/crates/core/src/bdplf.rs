//! Pattern-of-life features (21 dims): age/gender, mood polarity, emotions,
//! social activity, late-night posting and tweet-rate difference.
//!
//! Vector layout, in order:
//!
//! | block | dims | names |
//! |-------|------|-------|
//! | AG    | 2    | age, gender |
//! | Pol   | 5    | pos_ratio, neg_ratio, pos_combo, neg_combo, flips_ratio |
//! | Emot  | 8    | joy, surprise, anticipation, trust, sadness, disgust, anger, fear |
//! | Soc   | 4    | tweeting_frequency, mention_ratio, frequent_mentions, unique_mentions |
//! | LT    | 1    | late_tweet_frequency |
//! | TRD   | 1    | tweet_rate_difference |
//!
//! "Combo" is the longest run of one polarity in the tweet sequence with
//! neutral tweets removed, divided by the number of non-neutral tweets.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use chrono::{Duration, Timelike};

use crate::corpus::to_local_time;
use crate::error::{Error, Result};
use crate::textfeat::CategoryLexicon;
use crate::windows::{duration_days, PeriodSlice};

pub const AG_NAMES: [&str; 2] = ["ag_age", "ag_gender"];
pub const POL_NAMES: [&str; 5] = [
    "pol_pos_ratio",
    "pol_neg_ratio",
    "pol_pos_combo",
    "pol_neg_combo",
    "pol_flips_ratio",
];
pub const EMOTIONS: [&str; 8] = [
    "joy",
    "surprise",
    "anticipation",
    "trust",
    "sadness",
    "disgust",
    "anger",
    "fear",
];
pub const EMOT_NAMES: [&str; 8] = [
    "emot_joy",
    "emot_surprise",
    "emot_anticipation",
    "emot_trust",
    "emot_sadness",
    "emot_disgust",
    "emot_anger",
    "emot_fear",
];
pub const SOC_NAMES: [&str; 4] = [
    "soc_tweeting_frequency",
    "soc_mention_ratio",
    "soc_frequent_mentions",
    "soc_unique_mentions",
];
pub const LT_NAME: &str = "lt_late_tweet_frequency";
pub const TRD_NAME: &str = "trd_tweet_rate_difference";
pub const BDPLF_DIMS: usize = 21;

/// Local hours counted as late: `[0, LATE_END_HOUR)`.
pub const LATE_END_HOUR: u32 = 6;
pub const DEFAULT_TRD_SEGMENT_DAYS: i64 = 7;

pub fn bdplf_names() -> Vec<&'static str> {
    AG_NAMES
        .iter()
        .chain(&POL_NAMES)
        .chain(&EMOT_NAMES)
        .chain(&SOC_NAMES)
        .chain([&LT_NAME, &TRD_NAME])
        .copied()
        .collect()
}

/// Word weights with an optional intercept row (`_intercept<TAB>value`).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightedLexicon {
    weights: HashMap<String, f64>,
    pub intercept: f64,
}

impl WeightedLexicon {
    pub fn from_pairs<I, S>(pairs: I, intercept: f64) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        WeightedLexicon {
            weights: pairs.into_iter().map(|(w, x)| (w.into(), x)).collect(),
            intercept,
        }
    }

    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let mut lex = WeightedLexicon::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, value) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(source, i + 1, "expected word<TAB>weight"))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::parse(source, i + 1, format!("bad weight {value:?}")))?;
            if !value.is_finite() {
                return Err(Error::parse(source, i + 1, "weight must be finite"));
            }
            let word = word.trim();
            if word == "_intercept" {
                lex.intercept = value;
            } else if word.chars().any(char::is_uppercase) || word.is_empty() {
                return Err(Error::parse(source, i + 1, format!("word {word:?} must be lowercase")));
            } else {
                lex.weights.insert(word.to_string(), value);
            }
        }
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn weight(&self, word: &str) -> f64 {
        self.weights.get(word).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
}

/// Labels each tweet by the sign of its summed token weights; scores within
/// `[-band, band]` are neutral.
pub fn label_polarity(slice: &PeriodSlice<'_>, lex: &WeightedLexicon, band: f64) -> Vec<Polarity> {
    slice
        .tokens()
        .iter()
        .map(|toks| {
            let score: f64 = toks.iter().map(|t| lex.weight(t)).sum();
            if score > band {
                Polarity::Positive
            } else if score < -band {
                Polarity::Negative
            } else {
                Polarity::Neutral
            }
        })
        .collect()
}

fn longest_run(seq: &[Polarity], which: Polarity) -> usize {
    let mut best = 0;
    let mut cur = 0;
    for &p in seq {
        if p == which {
            cur += 1;
            best = best.max(cur);
        } else {
            cur = 0;
        }
    }
    best
}

pub fn polarity_features(labels: &[Polarity]) -> [f64; 5] {
    if labels.is_empty() {
        return [0.0; 5];
    }
    let n = labels.len() as f64;
    let pos = labels.iter().filter(|&&p| p == Polarity::Positive).count();
    let neg = labels.iter().filter(|&&p| p == Polarity::Negative).count();
    let polar: Vec<Polarity> = labels.iter().copied().filter(|&p| p != Polarity::Neutral).collect();
    let m = polar.len();
    let (pos_combo, neg_combo) = if m == 0 {
        (0.0, 0.0)
    } else {
        (
            longest_run(&polar, Polarity::Positive) as f64 / m as f64,
            longest_run(&polar, Polarity::Negative) as f64 / m as f64,
        )
    };
    let flips = if m < 2 {
        0.0
    } else {
        polar.windows(2).filter(|w| w[0] != w[1]).count() as f64 / (m - 1) as f64
    };
    [pos as f64 / n, neg as f64 / n, pos_combo, neg_combo, flips]
}

/// How emotion counts are normalized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EmotionCountMode {
    /// Divide by the number of emotion-labeled tweets (scores sum to 1).
    #[default]
    LabeledTweets,
    /// Divide by the number of emotion categories (8).
    Categories,
}

/// A category lexicon holding exactly the eight basic emotions.
#[derive(Clone, Debug, PartialEq)]
pub struct EmotionLexicon {
    lexicon: CategoryLexicon,
    /// For each entry of [`EMOTIONS`], its category index in `lexicon`.
    order: [usize; 8],
}

impl EmotionLexicon {
    pub fn new(lexicon: CategoryLexicon) -> Result<Self> {
        if lexicon.len() != EMOTIONS.len() {
            return Err(Error::arg(format!(
                "emotion lexicon must have exactly 8 categories, found {}",
                lexicon.len()
            )));
        }
        let mut order = [0; 8];
        for (slot, name) in order.iter_mut().zip(EMOTIONS) {
            *slot = lexicon
                .categories()
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::arg(format!("emotion lexicon lacks category {name:?}")))?;
        }
        Ok(EmotionLexicon { lexicon, order })
    }

    /// Dominant emotion of a token list; none on zero hits or a tie.
    pub fn dominant(&self, tokens: &[String]) -> Option<usize> {
        let hits = self.lexicon.hit_counts(tokens.iter().map(String::as_str));
        let per_emotion: Vec<usize> = self.order.iter().map(|&i| hits[i]).collect();
        let max = *per_emotion.iter().max()?;
        if max == 0 || per_emotion.iter().filter(|&&h| h == max).count() > 1 {
            return None;
        }
        per_emotion.iter().position(|&h| h == max)
    }
}

pub fn emotion_scores(slice: &PeriodSlice<'_>, lex: &EmotionLexicon, mode: EmotionCountMode) -> [f64; 8] {
    let mut counts = [0usize; 8];
    for toks in slice.tokens() {
        if let Some(e) = lex.dominant(toks) {
            counts[e] += 1;
        }
    }
    let labeled: usize = counts.iter().sum();
    if labeled == 0 {
        return [0.0; 8];
    }
    let denom = match mode {
        EmotionCountMode::LabeledTweets => labeled as f64,
        EmotionCountMode::Categories => EMOTIONS.len() as f64,
    };
    counts.map(|c| c as f64 / denom)
}

pub fn social_features(slice: &PeriodSlice<'_>) -> [f64; 4] {
    let days = slice.length_days();
    let n = slice.len();
    let freq = if days > 0.0 { n as f64 / days } else { 0.0 };
    if n == 0 {
        return [freq, 0.0, 0.0, 0.0];
    }
    let with_mention = slice.tweets().iter().filter(|t| !t.mentions().is_empty()).count();
    let mut per_handle: HashMap<&str, usize> = HashMap::new();
    for t in slice.tweets() {
        for m in t.mentions() {
            *per_handle.entry(m.as_str()).or_insert(0) += 1;
        }
    }
    let total: usize = per_handle.values().sum();
    if total == 0 {
        return [freq, 0.0, 0.0, 0.0];
    }
    let top = per_handle.values().copied().max().unwrap_or(0);
    [
        freq,
        with_mention as f64 / n as f64,
        top as f64 / total as f64,
        per_handle.len() as f64 / total as f64,
    ]
}

/// Tweets posted between local midnight and 06:00, per day of window.
pub fn late_tweet_frequency(slice: &PeriodSlice<'_>) -> f64 {
    let days = slice.length_days();
    if days <= 0.0 {
        return 0.0;
    }
    let late = slice
        .tweets()
        .iter()
        .filter(|t| to_local_time(t).local.hour() < LATE_END_HOUR)
        .count();
    late as f64 / days
}

/// Splits the window into consecutive `segment`-long pieces starting at the
/// window start (the last piece may be shorter) and returns the max minus min
/// of tweets per day over the pieces.
pub fn tweet_rate_difference(slice: &PeriodSlice<'_>, segment: Duration) -> f64 {
    let rates = segment_rates(slice, segment);
    if rates.len() < 2 {
        return 0.0;
    }
    let max = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

/// Tweets per day in each segment of the window.
pub fn segment_rates(slice: &PeriodSlice<'_>, segment: Duration) -> Vec<f64> {
    let total = slice.length.num_seconds();
    let seg = segment.num_seconds();
    if total <= 0 || seg <= 0 {
        return Vec::new();
    }
    let n_segments = ((total + seg - 1) / seg) as usize;
    let mut counts = vec![0usize; n_segments];
    let start = slice.start();
    for t in slice.tweets() {
        let offset = (t.created_at_utc - start).num_seconds();
        let idx = ((offset / seg) as usize).min(n_segments - 1);
        counts[idx] += 1;
    }
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let len = seg.min(total - i as i64 * seg);
            c as f64 / duration_days(Duration::seconds(len))
        })
        .collect()
}

/// Age and gender as `intercept + sum(relative frequency * weight)`. A
/// missing lexicon yields its prior.
#[derive(Clone, Debug, PartialEq)]
pub struct AgeGenderModel {
    pub age: Option<WeightedLexicon>,
    pub gender: Option<WeightedLexicon>,
    pub age_prior: f64,
    pub gender_prior: f64,
}

impl Default for AgeGenderModel {
    fn default() -> Self {
        AgeGenderModel {
            age: None,
            gender: None,
            age_prior: 25.0,
            gender_prior: 0.0,
        }
    }
}

fn linear_score(slice: &PeriodSlice<'_>, lex: &WeightedLexicon) -> f64 {
    let total = slice.token_count();
    if total == 0 {
        return lex.intercept;
    }
    let weighted: f64 = slice.all_tokens().map(|t| lex.weight(t)).sum();
    lex.intercept + weighted / total as f64
}

pub fn age_gender(slice: &PeriodSlice<'_>, model: &AgeGenderModel) -> [f64; 2] {
    [
        model.age.as_ref().map_or(model.age_prior, |l| linear_score(slice, l)),
        model.gender.as_ref().map_or(model.gender_prior, |l| linear_score(slice, l)),
    ]
}

/// Configured extractor for the full 21-dim vector.
#[derive(Clone, Debug)]
pub struct BdplfExtractor {
    pub sentiment: WeightedLexicon,
    pub emotions: EmotionLexicon,
    pub age_gender: AgeGenderModel,
    pub neutral_band: f64,
    pub emotion_mode: EmotionCountMode,
    pub trd_segment: Duration,
}

impl BdplfExtractor {
    pub fn ag(&self, slice: &PeriodSlice<'_>) -> [f64; 2] {
        age_gender(slice, &self.age_gender)
    }

    pub fn pol(&self, slice: &PeriodSlice<'_>) -> [f64; 5] {
        polarity_features(&label_polarity(slice, &self.sentiment, self.neutral_band))
    }

    pub fn emot(&self, slice: &PeriodSlice<'_>) -> [f64; 8] {
        emotion_scores(slice, &self.emotions, self.emotion_mode)
    }

    pub fn soc(&self, slice: &PeriodSlice<'_>) -> [f64; 4] {
        social_features(slice)
    }

    pub fn lt(&self, slice: &PeriodSlice<'_>) -> f64 {
        late_tweet_frequency(slice)
    }

    pub fn trd(&self, slice: &PeriodSlice<'_>) -> f64 {
        tweet_rate_difference(slice, self.trd_segment)
    }

    pub fn bdplf_vector(&self, slice: &PeriodSlice<'_>) -> Vec<f64> {
        let mut v = Vec::with_capacity(BDPLF_DIMS);
        v.extend(self.ag(slice));
        v.extend(self.pol(slice));
        v.extend(self.emot(slice));
        v.extend(self.soc(slice));
        v.push(self.lt(slice));
        v.push(self.trd(slice));
        v
    }
}

/// Distinct handles across a slice; exposed for reporting.
pub fn distinct_mentions<'a>(slice: &PeriodSlice<'a>) -> HashSet<&'a str> {
    slice
        .tweets()
        .iter()
        .flat_map(|t| t.mentions())
        .map(String::as_str)
        .collect()
}
