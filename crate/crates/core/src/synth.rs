//! Synthetic cohorts with onset behavior injected before the diagnosis time.
//!
//! Each user posts as a Poisson process with an hour-of-day profile in local
//! time and a per-user activity multiplier. Tweet polarity follows a mood
//! chain; filler words are occasionally swapped for long, articulation-heavy
//! words. Inside `[tau - onset_days, tau]` bipolar users flip mood more
//! often, post more at night, use more high-energy words and post more.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::DiagnosisLabel;
use crate::corpus::{Corpus, Tweet, UserRecord};
use crate::error::{Error, Result};

pub const NEUTRAL_WORDS: &[&str] = &[
    "i", "you", "the", "a", "to", "and", "is", "it", "my", "this", "that", "so", "just", "going", "with", "for",
    "on", "at", "in", "of", "have", "get", "got", "was", "are", "be", "me", "we", "what", "when", "today",
    "tonight", "work", "home", "coffee", "dinner", "lunch", "morning", "time", "day", "week", "people", "friend",
    "friends", "phone", "car", "bus", "walk", "house", "school", "class", "game", "music", "movie", "watch",
    "read", "book", "weather", "rain", "sun", "cat", "dog", "food", "eat", "sleep", "need", "want", "think",
    "know", "really", "still", "back", "new", "now", "later", "maybe", "some", "very", "like", "one", "two",
    "out", "up", "down", "tea", "office", "train", "city", "street", "water", "shop", "bed", "night", "call",
    "text", "room", "show", "news", "team", "kids", "family", "mom", "dad", "sister", "brother", "lol",
    "gonna", "yeah", "okay", "cute",
];

pub const POSITIVE_WORDS: &[&str] = &[
    "good", "great", "happy", "love", "nice", "fun", "glad", "awesome", "excited", "wonderful", "beautiful",
    "best", "thanks", "enjoy", "smile", "laugh", "proud", "hope", "trust", "joy", "celebrate",
];

pub const NEGATIVE_WORDS: &[&str] = &[
    "sad", "bad", "tired", "hate", "awful", "lonely", "cry", "hurt", "angry", "mad", "sick", "worst", "afraid",
    "scared", "worried", "upset", "miserable", "pain", "alone", "stress", "annoyed", "disgusted", "terrible",
    "gross", "panic", "anxious",
];

pub const ENERGY_WORDS: &[&str] = &[
    "extraordinary", "spectacular", "incredible", "unstoppable", "screaming", "electrifying", "tremendous",
    "magnificent", "overwhelming", "unbelievable", "exhilarating", "revolutionary", "phenomenal", "adrenaline",
    "absolutely", "conversation", "celebrating", "brainstorming", "creativity", "energetic", "enthusiastic",
    "accomplishment", "productivity", "inspiration",
];

/// Relative posting intensity per local hour.
const HOUR_PROFILE: [f64; 24] = [
    0.3, 0.2, 0.15, 0.1, 0.1, 0.15, 0.4, 0.8, 1.0, 1.0, 1.0, 1.1, 1.2, 1.1, 1.0, 1.0, 1.1, 1.2, 1.4, 1.5, 1.5,
    1.4, 1.0, 0.6,
];

const UTC_OFFSETS: [i32; 8] = [-480, -420, -360, -300, -240, 0, 60, 600];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_bipolar: usize,
    pub n_regular: usize,
    pub span_days: i64,
    /// Mean tweets per day before the per-user multiplier.
    pub base_rate: f64,
    /// Per-user activity multipliers are drawn uniformly from this range.
    pub activity_range: (f64, f64),
    pub onset_days: i64,
    pub p_neutral: f64,
    pub p_flip: f64,
    pub p_energy: f64,
    pub p_mention: f64,
    pub p_url: f64,
    pub p_no_offset: f64,
    pub flip_multiplier: f64,
    pub late_multiplier: f64,
    pub energy_bias: f64,
    pub rate_surge: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_bipolar: 100,
            n_regular: 100,
            span_days: 400,
            base_rate: 3.0,
            activity_range: (0.5, 2.0),
            onset_days: 60,
            p_neutral: 0.4,
            p_flip: 0.12,
            p_energy: 0.02,
            p_mention: 0.15,
            p_url: 0.03,
            p_no_offset: 0.2,
            flip_multiplier: 2.0,
            late_multiplier: 2.0,
            energy_bias: 2.0,
            rate_surge: 1.4,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("p_neutral", self.p_neutral),
            ("p_flip", self.p_flip),
            ("p_energy", self.p_energy),
            ("p_mention", self.p_mention),
            ("p_url", self.p_url),
            ("p_no_offset", self.p_no_offset),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::arg(format!("{name} must lie in [0, 1]")));
            }
        }
        for (name, m) in [
            ("flip_multiplier", self.flip_multiplier),
            ("late_multiplier", self.late_multiplier),
            ("energy_bias", self.energy_bias),
            ("rate_surge", self.rate_surge),
        ] {
            if !(m >= 1.0 && m.is_finite()) {
                return Err(Error::arg(format!("{name} must be >= 1")));
            }
        }
        if (self.p_flip * self.flip_multiplier) > 1.0 || (self.p_energy * self.energy_bias) > 1.0 {
            return Err(Error::arg("onset-scaled probabilities must stay <= 1"));
        }
        if self.span_days < 1 || self.onset_days < 0 || self.onset_days > self.span_days {
            return Err(Error::arg("need 0 <= onset_days <= span_days and span_days >= 1"));
        }
        let (lo, hi) = self.activity_range;
        if !(self.base_rate > 0.0 && lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::arg("base_rate and activity range must be positive"));
        }
        Ok(())
    }
}

/// End of the generated span; also the diagnosis time of every bipolar user.
pub fn span_end() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2016, 6, 1, 0, 0, 0).unwrap()
}

#[derive(Clone, Debug)]
pub struct SynthCohort {
    /// Groups and diagnosis times already applied.
    pub corpus: Corpus,
    pub labels: Vec<DiagnosisLabel>,
    pub regular_ids: Vec<String>,
    pub tau: DateTime<Utc>,
}

#[derive(Clone, Copy, PartialEq)]
enum Mood {
    Pos,
    Neg,
}

struct UserSpec {
    id: String,
    bipolar: bool,
    stream: u64,
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCohort> {
    cfg.validate()?;
    let tau = span_end();
    let specs: Vec<UserSpec> = (0..cfg.n_bipolar)
        .map(|i| UserSpec {
            id: format!("bd{:04}", i + 1),
            bipolar: true,
            stream: i as u64,
        })
        .chain((0..cfg.n_regular).map(|i| UserSpec {
            id: format!("rg{:04}", i + 1),
            bipolar: false,
            stream: (cfg.n_bipolar + i) as u64,
        }))
        .collect();
    let users = specs
        .par_iter()
        .map(|s| generate_user(cfg, s, tau))
        .collect::<Result<Vec<_>>>()?;
    let mut labels = Vec::new();
    let mut regular_ids = Vec::new();
    let mut records = Vec::new();
    for (spec, (mut rec, evidence)) in specs.iter().zip(users) {
        if spec.bipolar {
            rec.set_bipolar(tau);
            use chrono::Datelike;
            labels.push(DiagnosisLabel::new(&spec.id, tau.year(), tau.month(), evidence.unwrap_or_default())?);
        } else {
            rec.set_regular();
            regular_ids.push(spec.id.clone());
        }
        records.push(rec);
    }
    Ok(SynthCohort {
        corpus: Corpus::from_users(records)?,
        labels,
        regular_ids,
        tau,
    })
}

fn generate_user(cfg: &SynthConfig, spec: &UserSpec, tau: DateTime<Utc>) -> Result<(UserRecord, Option<String>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(spec.stream);
    let activity = rng.random_range(cfg.activity_range.0..=cfg.activity_range.1);
    let offset = if rng.random_bool(cfg.p_no_offset) {
        None
    } else {
        Some(*UTC_OFFSETS.choose(&mut rng).unwrap())
    };
    let shift = Duration::minutes(offset.unwrap_or(0) as i64);
    let friends: Vec<String> = (0..rng.random_range(3..=15)).map(|k| format!("@pal{}_{k}", spec.id)).collect();
    let profile_total: f64 = HOUR_PROFILE.iter().sum();
    let start = tau - Duration::days(cfg.span_days);
    let onset_start = tau - Duration::days(cfg.onset_days);
    let in_onset = |t: DateTime<Utc>| spec.bipolar && t >= onset_start && t <= tau;

    // arrivals, hour by hour in local time
    let mut times = Vec::new();
    let local_start = start + shift;
    for day in 0..cfg.span_days {
        for (h, weight) in HOUR_PROFILE.iter().enumerate() {
            let hour_start = local_start + Duration::days(day) + Duration::hours(h as i64) - shift;
            let mut lambda = cfg.base_rate * activity * weight / profile_total;
            if in_onset(hour_start) {
                lambda *= cfg.rate_surge;
                if h < 6 {
                    lambda *= cfg.late_multiplier;
                }
            }
            let n = Poisson::new(lambda).map_err(|e| Error::arg(e.to_string()))?.sample(&mut rng) as usize;
            for _ in 0..n {
                let t = hour_start + Duration::seconds(rng.random_range(0..3600));
                if t >= start && t <= tau {
                    times.push(t);
                }
            }
        }
    }
    times.sort();

    let mut mood = if rng.random_bool(0.5) { Mood::Pos } else { Mood::Neg };
    let mut tweets = Vec::with_capacity(times.len() + 1);
    for (i, &t) in times.iter().enumerate() {
        let onset = in_onset(t);
        let p_flip = cfg.p_flip * if onset { cfg.flip_multiplier } else { 1.0 };
        let p_energy = cfg.p_energy * if onset { cfg.energy_bias } else { 1.0 };
        let polar = !rng.random_bool(cfg.p_neutral);
        if polar && rng.random_bool(p_flip) {
            mood = if mood == Mood::Pos { Mood::Neg } else { Mood::Pos };
        }
        let len = rng.random_range(4..=11);
        let mut words: Vec<String> = (0..len)
            .map(|_| {
                let pool = if rng.random_bool(p_energy) { ENERGY_WORDS } else { NEUTRAL_WORDS };
                pool.choose(&mut rng).unwrap().to_string()
            })
            .collect();
        if polar {
            let pool = if mood == Mood::Pos { POSITIVE_WORDS } else { NEGATIVE_WORDS };
            let at = rng.random_range(0..=words.len());
            words.insert(at, pool.choose(&mut rng).unwrap().to_string());
        }
        if rng.random_bool(cfg.p_mention) {
            words.insert(0, friends.choose(&mut rng).unwrap().clone());
        }
        if rng.random_bool(cfg.p_url) {
            words.push(format!("https://t.co/{}{i}", spec.id));
        }
        tweets.push(Tweet::new(format!("{}-{:06}", spec.id, i + 1), &spec.id, words.join(" "), t, offset)?);
    }
    let mut evidence = None;
    if spec.bipolar {
        let id = format!("{}-diag", spec.id);
        let text = "i was diagnosed with bipolar disorder last month";
        tweets.push(Tweet::new(&id, &spec.id, text, tau + Duration::days(3), offset)?);
        evidence = Some(id);
    }
    Ok((UserRecord::new(&spec.id, tweets), evidence))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::write_corpus_to;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            n_bipolar: 3,
            n_regular: 3,
            span_days: 90,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_bytes() {
        let a = generate(&small(5)).unwrap();
        let b = generate(&small(5)).unwrap();
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        write_corpus_to(&a.corpus, &mut ba).unwrap();
        write_corpus_to(&b.corpus, &mut bb).unwrap();
        assert_eq!(ba, bb);
        let c = generate(&small(6)).unwrap();
        let mut bc = Vec::new();
        write_corpus_to(&c.corpus, &mut bc).unwrap();
        assert_ne!(ba, bc);
    }

    #[test]
    fn no_bipolar_users() {
        let cfg = SynthConfig { n_bipolar: 0, ..small(1) };
        let c = generate(&cfg).unwrap();
        assert!(c.labels.is_empty());
        assert_eq!(c.corpus.len(), 3);
        assert!(c.corpus.users().all(|u| u.group() == crate::corpus::Group::Regular));
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(generate(&SynthConfig { flip_multiplier: 0.5, ..small(1) }).is_err());
        assert!(generate(&SynthConfig { onset_days: 500, ..small(1) }).is_err());
    }

    #[test]
    fn labels_point_at_diagnosis_tweets() {
        let c = generate(&small(2)).unwrap();
        for l in &c.labels {
            let u = c.corpus.user(&l.user_id).unwrap();
            assert_eq!(u.diagnosis_time(), Some(c.tau));
            assert!(u.tweets().iter().any(|t| t.id == l.evidence_tweet_id));
        }
    }

    #[test]
    fn all_vocabulary_is_pronounceable() {
        let m = crate::resources::energy_model().unwrap();
        for w in NEUTRAL_WORDS.iter().chain(POSITIVE_WORDS).chain(NEGATIVE_WORDS).chain(ENERGY_WORDS) {
            assert!(m.lexicon.get(w).is_some(), "{w}");
        }
    }
}
