//! Word-level features: unigram/bigram tf-idf with per-term Euclidean
//! normalization across users, and category-lexicon ratios.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::windows::PeriodSlice;

pub const DEFAULT_VOCAB_CAP: usize = 1000;

/// Unigram and bigram occurrence counts of a slice. Bigrams do not cross
/// tweet boundaries and are keyed as `"first second"`.
pub fn ngram_counts(slice: &PeriodSlice<'_>) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for toks in slice.tokens() {
        for t in toks {
            *counts.entry(t.clone()).or_insert(0) += 1;
        }
        for pair in toks.windows(2) {
            *counts.entry(format!("{} {}", pair[0], pair[1])).or_insert(0) += 1;
        }
    }
    counts
}

/// Terms ranked by document frequency over users.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    terms: Vec<String>,
    df: Vec<usize>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_ranked(ranked: Vec<(String, usize)>) -> Self {
        let (terms, df): (Vec<_>, Vec<_>) = ranked.into_iter().unzip();
        let mut v = Vocabulary {
            terms,
            df,
            index: HashMap::new(),
        };
        v.rebuild_index();
        v
    }

    fn rebuild_index(&mut self) {
        self.index = self.terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn df(&self, term: &str) -> Option<usize> {
        self.index.get(term).map(|&i| self.df[i])
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, usize)> {
        self.terms.iter().map(String::as_str).zip(self.df.iter().copied())
    }
}

/// Top `cap` n-grams by number of slices containing them, ties broken
/// lexicographically.
pub fn build_vocabulary(slices: &[PeriodSlice<'_>], cap: usize) -> Result<Vocabulary> {
    if slices.iter().all(|s| s.token_count() == 0) {
        return Err(Error::arg("cannot build a vocabulary from empty slices"));
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for s in slices {
        for term in ngram_counts(s).into_keys() {
            *df.entry(term).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = df.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(cap);
    Ok(Vocabulary::from_ranked(ranked))
}

/// Raw tf-idf: `freq * ln(K / (1 + df))` for every vocabulary term.
pub fn tfidf_vector(slice: &PeriodSlice<'_>, vocab: &Vocabulary, population: usize) -> Result<Vec<f64>> {
    if population < 1 {
        return Err(Error::arg("population size K must be at least 1"));
    }
    let counts = ngram_counts(slice);
    let k = population as f64;
    Ok(vocab
        .entries()
        .map(|(term, df)| {
            let freq = counts.get(term).copied().unwrap_or(0) as f64;
            freq * (k / (1.0 + df as f64)).ln()
        })
        .collect())
}

/// Euclidean norm of every column across all rows.
pub fn column_norms(matrix: &[Vec<f64>]) -> Vec<f64> {
    let dims = matrix.first().map_or(0, Vec::len);
    (0..dims)
        .map(|j| matrix.iter().map(|row| row[j] * row[j]).sum::<f64>().sqrt())
        .collect()
}

/// Divides each entry by its column norm; zero columns stay zero.
pub fn apply_column_norms(row: &[f64], norms: &[f64]) -> Vec<f64> {
    row.iter()
        .zip(norms)
        .map(|(&x, &n)| if n > 0.0 { x / n } else { 0.0 })
        .collect()
}

pub fn normalize_tfidf(matrix: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let norms = column_norms(matrix);
    matrix.iter().map(|r| apply_column_norms(r, &norms)).collect()
}

/// Everything needed to featurize a new slice against a fitted population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TfidfState {
    pub vocabulary: Vocabulary,
    pub population: usize,
    pub norms: Vec<f64>,
}

impl TfidfState {
    /// Builds the vocabulary over `slices` and returns the normalized rows.
    pub fn fit(slices: &[PeriodSlice<'_>], cap: usize) -> Result<(Self, Vec<Vec<f64>>)> {
        let vocabulary = build_vocabulary(slices, cap)?;
        let population = slices.len();
        let raw = slices
            .iter()
            .map(|s| tfidf_vector(s, &vocabulary, population))
            .collect::<Result<Vec<_>>>()?;
        let norms = column_norms(&raw);
        let rows = raw.iter().map(|r| apply_column_norms(r, &norms)).collect();
        Ok((
            TfidfState {
                vocabulary,
                population,
                norms,
            },
            rows,
        ))
    }

    pub fn transform(&self, slice: &PeriodSlice<'_>) -> Result<Vec<f64>> {
        let raw = tfidf_vector(slice, &self.vocabulary, self.population)?;
        Ok(apply_column_norms(&raw, &self.norms))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut s: TfidfState = serde_json::from_reader(std::io::BufReader::new(f))?;
        s.vocabulary.rebuild_index();
        if s.norms.len() != s.vocabulary.len() {
            return Err(Error::Schema("tf-idf norms do not match vocabulary".into()));
        }
        Ok(s)
    }
}

/// Word categories with exact and `prefix*` patterns.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoryLexicon {
    names: Vec<String>,
    exact: Vec<HashSet<String>>,
    prefixes: Vec<Vec<String>>,
}

impl CategoryLexicon {
    /// Parses `category<TAB>pattern` rows after a header line. Categories keep
    /// their order of first appearance. `#` lines are comments.
    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let mut lex = CategoryLexicon {
            names: Vec::new(),
            exact: Vec::new(),
            prefixes: Vec::new(),
        };
        let mut header_seen = false;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                header_seen = true;
                if line.trim() != "category\tpattern" {
                    return Err(Error::parse(source, i + 1, "expected header \"category<TAB>pattern\""));
                }
                continue;
            }
            let (cat, pat) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(source, i + 1, "expected category<TAB>pattern"))?;
            let (cat, pat) = (cat.trim(), pat.trim());
            if cat.is_empty() || pat.is_empty() || pat == "*" {
                return Err(Error::parse(source, i + 1, "empty category or pattern"));
            }
            if pat.chars().any(char::is_uppercase) {
                return Err(Error::parse(source, i + 1, format!("pattern {pat:?} is not lowercase")));
            }
            let idx = match lex.names.iter().position(|n| n == cat) {
                Some(i) => i,
                None => {
                    lex.names.push(cat.to_string());
                    lex.exact.push(HashSet::new());
                    lex.prefixes.push(Vec::new());
                    lex.names.len() - 1
                }
            };
            match pat.strip_suffix('*') {
                Some(prefix) => lex.prefixes[idx].push(prefix.to_string()),
                None => {
                    lex.exact[idx].insert(pat.to_string());
                }
            }
        }
        if lex.names.is_empty() {
            return Err(Error::parse(source, 0, "lexicon defines no categories"));
        }
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn categories(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn matches(&self, category: usize, token: &str) -> bool {
        self.exact[category].contains(token) || self.prefixes[category].iter().any(|p| token.starts_with(p.as_str()))
    }

    /// Number of tokens in `tokens` matching each category.
    pub fn hit_counts<'t>(&self, tokens: impl IntoIterator<Item = &'t str>) -> Vec<usize> {
        let mut hits = vec![0; self.len()];
        for tok in tokens {
            for (c, h) in hits.iter_mut().enumerate() {
                if self.matches(c, tok) {
                    *h += 1;
                }
            }
        }
        hits
    }
}

/// Category ratios. With `per_tweet` set, the token ratio is further divided
/// by the number of tweets in the slice.
pub fn category_scores(slice: &PeriodSlice<'_>, lex: &CategoryLexicon, per_tweet: bool) -> Vec<f64> {
    let total = slice.token_count();
    if total == 0 {
        log::warn!("slice for {} has no tokens; category scores are zero", slice.user_id);
        return vec![0.0; lex.len()];
    }
    let n_tweets = slice.len() as f64;
    lex.hit_counts(slice.all_tokens())
        .into_iter()
        .map(|h| {
            let ratio = h as f64 / total as f64;
            if per_tweet {
                ratio / n_tweets
            } else {
                ratio
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Tweet;
    use chrono::{DateTime, Duration, TimeZone, Utc};
    use proptest::prelude::*;

    fn end() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2016, 6, 1, 0, 0, 0).unwrap()
    }

    fn tweets(user: &str, texts: &[&str]) -> Vec<Tweet> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Tweet::new(format!("{user}{i}"), user, *t, end() - Duration::hours(i as i64 + 1), None).unwrap())
            .rev()
            .collect()
    }

    fn slice<'a>(user: &'a str, tw: &'a [Tweet]) -> PeriodSlice<'a> {
        PeriodSlice::new(user, tw, end(), Duration::days(60))
    }

    fn toy_lexicon() -> CategoryLexicon {
        CategoryLexicon::parse("category\tpattern\nnegemo\tsad\nnegemo\tbad\nposemo\thapp*\n", Path::new("t")).unwrap()
    }

    /// Brute-force document frequency over user slices for one n-gram.
    fn brute_df(slices: &[Vec<Vec<String>>], term: &str) -> usize {
        slices
            .iter()
            .filter(|user| {
                user.iter().any(|toks| {
                    toks.iter().any(|t| t == term)
                        || toks.windows(2).any(|w| format!("{} {}", w[0], w[1]) == term)
                })
            })
            .count()
    }

    #[test]
    fn df_counts_users() {
        let a = tweets("a", &["so sad", "sad again"]);
        let b = tweets("b", &["sad"]);
        let v = build_vocabulary(&[slice("a", &a), slice("b", &b)], 100).unwrap();
        assert_eq!(v.df("sad"), Some(2));
    }

    #[test]
    fn cap_keeps_max_df_term() {
        let a = tweets("a", &["x y"]);
        let b = tweets("b", &["x"]);
        let v = build_vocabulary(&[slice("a", &a), slice("b", &b)], 1).unwrap();
        assert_eq!(v.terms(), &["x".to_string()]);
    }

    #[test]
    fn bigram_df_is_presence_per_user() {
        let a = tweets("a", &["i feel sad", "feel sad feel sad"]);
        let b = tweets("b", &["feel fine"]);
        let c = tweets("c", &["feel sad"]);
        let slices = [slice("a", &a), slice("b", &b), slice("c", &c)];
        let v = build_vocabulary(&slices, 1000).unwrap();
        let toks: Vec<Vec<Vec<String>>> = slices.iter().map(|s| s.tokens().to_vec()).collect();
        for (term, df) in v.entries() {
            assert_eq!(df, brute_df(&toks, term), "{term}");
        }
        assert_eq!(v.df("feel sad"), Some(2));
        assert_eq!(v.df("sad feel"), Some(1));
    }

    #[test]
    fn vocabulary_order_is_df_then_lexicographic() {
        let a = tweets("a", &["b a c"]);
        let b = tweets("b", &["c b"]);
        let v = build_vocabulary(&[slice("a", &a), slice("b", &b)], 100).unwrap();
        assert_eq!(&v.terms()[..4], &["b", "c", "a", "a c"]);
    }

    #[test]
    fn empty_slices_error() {
        let a = tweets("a", &["!!!"]);
        assert!(build_vocabulary(&[slice("a", &a)], 10).is_err());
    }

    #[test]
    fn tfidf_hand_values() {
        // freq 3, K = 4, df = 2 -> 3 ln(4/3)
        let a = tweets("a", &["w w w"]);
        let b = tweets("b", &["w"]);
        let c = tweets("c", &["z"]);
        let d = tweets("d", &["z"]);
        let slices = [slice("a", &a), slice("b", &b), slice("c", &c), slice("d", &d)];
        let v = build_vocabulary(&slices, 100).unwrap();
        let row = tfidf_vector(&slices[0], &v, 4).unwrap();
        let i = v.terms().iter().position(|t| t == "w").unwrap();
        assert!((row[i] - 0.863_046_217_355_082_4).abs() < 1e-12);
        let iz = v.terms().iter().position(|t| t == "z").unwrap();
        assert_eq!(row[iz], 0.0);
        assert!(tfidf_vector(&slices[0], &v, 0).is_err());
    }

    #[test]
    fn tfidf_df_edges() {
        // df = K - 1 -> zero; df = K -> negative.
        let a = tweets("a", &["p q"]);
        let b = tweets("b", &["p q"]);
        let c = tweets("c", &["p"]);
        let slices = [slice("a", &a), slice("b", &b), slice("c", &c)];
        let v = build_vocabulary(&slices, 100).unwrap();
        let row = tfidf_vector(&slices[0], &v, 3).unwrap();
        let ip = v.terms().iter().position(|t| t == "p").unwrap();
        let iq = v.terms().iter().position(|t| t == "q").unwrap();
        assert!(row[ip] < 0.0);
        assert_eq!(row[iq], 0.0);
    }

    #[test]
    fn normalization_examples() {
        let out = normalize_tfidf(&[vec![3.0], vec![4.0]]);
        assert!((out[0][0] - 0.6).abs() < 1e-15);
        assert!((out[1][0] - 0.8).abs() < 1e-15);
        let single = normalize_tfidf(&[vec![2.5, -0.7, 0.0]]);
        assert_eq!(single[0], vec![1.0, -1.0, 0.0]);
        let zero = normalize_tfidf(&[vec![0.0], vec![0.0]]);
        assert_eq!(zero, vec![vec![0.0], vec![0.0]]);
    }

    #[test]
    fn category_score_literal_arithmetic() {
        // 10 tokens, 2 negemo hits, 5 tweets -> (2/10)/5
        let a = tweets("a", &["sad one", "two three", "bad four", "five six", "seven eight"]);
        let s = slice("a", &a);
        let lex = toy_lexicon();
        let scores = category_scores(&s, &lex, true);
        assert!((scores[0] - 0.04).abs() < 1e-15);
        assert_eq!(scores[1], 0.0);
        let single = category_scores(&s, &lex, false);
        assert!((single[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn prefix_pattern_matches() {
        let lex = toy_lexicon();
        assert!(lex.matches(1, "happy"));
        assert!(lex.matches(1, "happiness"));
        assert!(!lex.matches(1, "hap"));
    }

    #[test]
    fn zero_token_slice_gives_zero_vector() {
        let a = tweets("a", &["!!", "??"]);
        assert_eq!(category_scores(&slice("a", &a), &toy_lexicon(), true), vec![0.0, 0.0]);
    }

    #[test]
    fn lexicon_parse_errors() {
        let p = Path::new("lex");
        assert!(CategoryLexicon::parse("nope\n", p).is_err());
        assert!(CategoryLexicon::parse("category\tpattern\n", p).is_err());
        assert!(CategoryLexicon::parse("category\tpattern\nposemo happy\n", p).is_err());
        assert!(CategoryLexicon::parse("category\tpattern\nposemo\tHappy\n", p).is_err());
    }

    #[test]
    fn tfidf_state_round_trips() {
        let a = tweets("a", &["so sad today"]);
        let b = tweets("b", &["happy today"]);
        let slices = [slice("a", &a), slice("b", &b)];
        let (state, rows) = TfidfState::fit(&slices, 50).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tfidf.json");
        state.save(&p).unwrap();
        let back = TfidfState::load(&p).unwrap();
        assert_eq!(back, state);
        assert_eq!(back.transform(&slices[1]).unwrap(), rows[1]);
    }

    proptest! {
        #[test]
        fn tfidf_sign_follows_df(texts in prop::collection::vec(prop::collection::vec(0usize..6, 1..6), 1..6)) {
            const W: &[&str] = &["a", "b", "c", "d", "e", "f"];
            let owned: Vec<Vec<Tweet>> = texts.iter().enumerate().map(|(u, ws)| {
                let s: Vec<&str> = ws.iter().map(|&i| W[i]).collect();
                tweets(&format!("u{u}"), &[&s.join(" ")])
            }).collect();
            let ids: Vec<String> = (0..owned.len()).map(|u| format!("u{u}")).collect();
            let slices: Vec<PeriodSlice> = owned.iter().zip(&ids).map(|(t, id)| slice(id, t)).collect();
            let k = slices.len();
            let v = build_vocabulary(&slices, 1000).unwrap();
            for s in &slices {
                let row = tfidf_vector(s, &v, k).unwrap();
                let counts = ngram_counts(s);
                for ((term, df), x) in v.entries().zip(&row) {
                    if counts.get(term).copied().unwrap_or(0) == 0 { prop_assert_eq!(*x, 0.0); continue; }
                    if df + 1 < k { prop_assert!(*x > 0.0); }
                    else if df + 1 == k { prop_assert_eq!(*x, 0.0); }
                    else { prop_assert!(*x < 0.0); }
                }
            }
            let norm = normalize_tfidf(&slices.iter().map(|s| tfidf_vector(s, &v, k).unwrap()).collect::<Vec<_>>());
            for n in column_norms(&norm) {
                prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-9);
            }
        }
    }
}
