//! Analysis windows over a user's timeline: the onset window that ends at the
//! diagnosis time and week-stepped sliding windows for onset timelines.

use chrono::{DateTime, Duration, Utc};

use crate::corpus::{Group, Tweet, UserRecord};
use crate::error::{Error, Result};

/// Months are fixed 30-day blocks.
pub const DAYS_PER_MONTH: i64 = 30;
pub const ALPHA_PRESET_MONTHS: [u32; 5] = [2, 3, 6, 9, 12];
pub const DEFAULT_STEP_DAYS: i64 = 7;

pub fn months(n: u32) -> Duration {
    Duration::days(n as i64 * DAYS_PER_MONTH)
}

pub fn duration_days(d: Duration) -> f64 {
    d.num_seconds() as f64 / 86_400.0
}

/// Tweets of one user falling in the closed interval `[end - length, end]`,
/// with their tokens.
#[derive(Clone, Debug)]
pub struct PeriodSlice<'a> {
    pub user_id: &'a str,
    pub end: DateTime<Utc>,
    pub length: Duration,
    tweets: &'a [Tweet],
    tokens: Vec<Vec<String>>,
}

impl<'a> PeriodSlice<'a> {
    /// Selects the tweets of `tweets` (sorted ascending) inside the window.
    pub fn new(user_id: &'a str, tweets: &'a [Tweet], end: DateTime<Utc>, length: Duration) -> Self {
        let start = end - length;
        let lo = tweets.partition_point(|t| t.created_at_utc < start);
        let hi = tweets.partition_point(|t| t.created_at_utc <= end);
        let tweets = &tweets[lo..hi.max(lo)];
        PeriodSlice {
            user_id,
            end,
            length,
            tokens: tweets.iter().map(Tweet::tokens).collect(),
            tweets,
        }
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.end - self.length
    }

    pub fn length_days(&self) -> f64 {
        duration_days(self.length)
    }

    pub fn tweets(&self) -> &'a [Tweet] {
        self.tweets
    }

    /// Per-tweet token lists, aligned with [`tweets`](Self::tweets).
    pub fn tokens(&self) -> &[Vec<String>] {
        &self.tokens
    }

    pub fn all_tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().flatten().map(String::as_str)
    }

    pub fn token_count(&self) -> usize {
        self.tokens.iter().map(Vec::len).sum()
    }

    pub fn len(&self) -> usize {
        self.tweets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tweets.is_empty()
    }
}

fn check_positive(d: Duration, what: &str) -> Result<()> {
    if d <= Duration::zero() {
        return Err(Error::arg(format!("{what} must be positive")));
    }
    Ok(())
}

/// The training window: ending at the diagnosis time for bipolar users and at
/// the last tweet otherwise. An empty slice is returned as such; callers skip it.
pub fn onset_window(user: &UserRecord, alpha: Duration) -> Result<PeriodSlice<'_>> {
    check_positive(alpha, "window length")?;
    let end = match user.group() {
        Group::Bipolar => user
            .diagnosis_time()
            .ok_or_else(|| Error::MissingDiagnosisTime(user.user_id().to_string()))?,
        Group::Regular | Group::Unlabeled => user
            .last_tweet_time()
            .ok_or_else(|| Error::NoTweets(user.user_id().to_string()))?,
    };
    Ok(PeriodSlice::new(user.user_id(), user.tweets(), end, alpha))
}

/// End times of the sliding windows in ascending order. The newest window ends
/// at the last tweet; windows step back by `step` until one starts at or before
/// the first tweet.
pub fn sliding_window_ends(first: DateTime<Utc>, last: DateTime<Utc>, alpha: Duration, step: Duration) -> Vec<DateTime<Utc>> {
    let mut ends = vec![last];
    let mut end = last;
    while end - alpha > first {
        end -= step;
        ends.push(end);
    }
    ends.reverse();
    ends
}

pub fn slide_windows(user: &UserRecord, alpha: Duration, step: Duration) -> Result<Vec<PeriodSlice<'_>>> {
    check_positive(alpha, "window length")?;
    check_positive(step, "step")?;
    let (Some(first), Some(last)) = (user.first_tweet_time(), user.last_tweet_time()) else {
        return Err(Error::NoTweets(user.user_id().to_string()));
    };
    Ok(sliding_window_ends(first, last, alpha, step)
        .into_iter()
        .map(|end| PeriodSlice::new(user.user_id(), user.tweets(), end, alpha))
        .collect())
}
