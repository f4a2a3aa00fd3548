//! Energy of words: ARPAbet dictionary to IPA, per-phoneme articulatory
//! features grouped into 8 categories, and per-user energy.

use std::collections::HashMap;
use std::ops::{Add, AddAssign};
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::windows::PeriodSlice;

/// The 19 retained articulatory features.
pub const FEATURES: [&str; 19] = [
    "anterior",
    "back",
    "approximant",
    "high",
    "mid",
    "low",
    "continuant",
    "labial",
    "fricative",
    "stop",
    "coronal",
    "dental",
    "retroflex",
    "nasal",
    "glottal",
    "velar",
    "vowel",
    "round",
    "tense",
];

pub const CATEGORIES: [&str; 8] = ["OC", "MO", "Obs", "TP", "Res", "Vow", "Rou", "Ten"];
pub const PHON_NAMES: [&str; 8] = [
    "phon_oc",
    "phon_mo",
    "phon_obs",
    "phon_tp",
    "phon_res",
    "phon_vow",
    "phon_rou",
    "phon_ten",
];

/// Two-dim lexical summary used by the text-only variants: share of tokens
/// found in the pronunciation lexicon and mean phonemes per found token.
pub const PHON_AUX_NAMES: [&str; 2] = ["phonx_coverage", "phonx_phonemes_per_word"];

/// Category of each entry in [`FEATURES`].
const FEATURE_CATEGORY: [usize; 19] = [0, 0, 0, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 4, 4, 4, 5, 6, 7];

fn feature_index(name: &str) -> Option<usize> {
    FEATURES.iter().position(|f| *f == name)
}

/// Scores in category order OC, MO, Obs, TP, Res, Vow, Rou, Ten.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyVector(pub [f64; 8]);

impl EnergyVector {
    pub fn zero() -> Self {
        EnergyVector([0.0; 8])
    }

    pub fn scale(self, k: f64) -> Self {
        EnergyVector(self.0.map(|x| x * k))
    }
}

impl Add for EnergyVector {
    type Output = EnergyVector;

    fn add(mut self, rhs: EnergyVector) -> EnergyVector {
        self += rhs;
        self
    }
}

impl AddAssign for EnergyVector {
    fn add_assign(&mut self, rhs: EnergyVector) {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a += b;
        }
    }
}

/// Phoneme to active-feature bitmask.
#[derive(Clone, Debug, PartialEq)]
pub struct PhonemeFeatureTable {
    features: HashMap<String, u32>,
}

impl PhonemeFeatureTable {
    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let mut features = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (phoneme, list) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(source, i + 1, "expected phoneme<TAB>features"))?;
            let mut mask = 0u32;
            for f in list.split(',').map(str::trim).filter(|f| !f.is_empty()) {
                let idx = feature_index(f)
                    .ok_or_else(|| Error::parse(source, i + 1, format!("unknown feature {f:?}")))?;
                mask |= 1 << idx;
            }
            if mask == 0 {
                return Err(Error::parse(source, i + 1, format!("phoneme {phoneme:?} has no features")));
            }
            if features.insert(phoneme.trim().to_string(), mask).is_some() {
                return Err(Error::parse(source, i + 1, format!("duplicate phoneme {phoneme:?}")));
            }
        }
        Ok(PhonemeFeatureTable { features })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn contains(&self, phoneme: &str) -> bool {
        self.features.contains_key(phoneme)
    }

    pub fn phonemes(&self) -> impl Iterator<Item = &str> {
        self.features.keys().map(String::as_str)
    }

    /// Names of the features active for `phoneme`.
    pub fn active(&self, phoneme: &str) -> Result<Vec<&'static str>> {
        let mask = self.mask(phoneme)?;
        Ok((0..FEATURES.len()).filter(|i| mask & (1 << i) != 0).map(|i| FEATURES[i]).collect())
    }

    fn mask(&self, phoneme: &str) -> Result<u32> {
        self.features
            .get(phoneme)
            .copied()
            .ok_or_else(|| Error::UnknownPhoneme(phoneme.to_string()))
    }
}

/// One non-negative score per feature.
#[derive(Clone, Debug, PartialEq)]
pub struct DifficultyWeights([f64; 19]);

impl Default for DifficultyWeights {
    fn default() -> Self {
        DifficultyWeights([1.0; 19])
    }
}

impl DifficultyWeights {
    pub fn new(weights: [f64; 19]) -> Result<Self> {
        if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::arg(format!("weight for {} must be finite and >= 0", FEATURES[i])));
        }
        Ok(DifficultyWeights(weights))
    }

    /// Parses `feature=value` lines; features not listed keep weight 1.0.
    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let mut w = [1.0; 19];
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(source, i + 1, "expected feature=value"))?;
            let idx = feature_index(name.trim())
                .ok_or_else(|| Error::parse(source, i + 1, format!("unknown feature {:?}", name.trim())))?;
            w[idx] = value
                .trim()
                .parse()
                .map_err(|_| Error::parse(source, i + 1, format!("bad weight {value:?}")))?;
        }
        Self::new(w)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn get(&self, feature: &str) -> Option<f64> {
        feature_index(feature).map(|i| self.0[i])
    }

    pub fn values(&self) -> &[f64; 19] {
        &self.0
    }

    pub fn scale(&self, k: f64) -> Result<Self> {
        Self::new(self.0.map(|w| w * k))
    }
}

/// Lowercase word to IPA phoneme sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct PronunciationLexicon {
    entries: HashMap<String, Vec<String>>,
}

/// Parses an ARPAbet to IPA mapping (`ARPA<TAB>ipa ipa ...`).
pub fn parse_arpabet_map(text: &str, source: &Path) -> Result<HashMap<String, Vec<String>>> {
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (arpa, ipa) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(source, i + 1, "expected ARPA<TAB>ipa"))?;
        let seq: Vec<String> = ipa.split_whitespace().map(String::from).collect();
        if seq.is_empty() {
            return Err(Error::parse(source, i + 1, "empty IPA sequence"));
        }
        map.insert(arpa.trim().to_string(), seq);
    }
    Ok(map)
}

impl PronunciationLexicon {
    pub fn from_entries<I, S>(entries: I, table: &PhonemeFeatureTable) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<String>)>,
        S: Into<String>,
    {
        let mut map = HashMap::new();
        for (word, phonemes) in entries {
            let word = word.into();
            if let Some(p) = phonemes.iter().find(|p| !table.contains(p)) {
                return Err(Error::UnknownPhoneme(format!("{p} (in {word:?})")));
            }
            map.insert(word, phonemes);
        }
        Ok(PronunciationLexicon { entries: map })
    }

    /// Reads a `WORD  PH1 PH2` dictionary. Lines starting with `;;;` are
    /// comments, stress digits are dropped and alternate pronunciations
    /// (`WORD(1)`) are skipped.
    pub fn parse_arpabet(
        text: &str,
        source: &Path,
        arpabet: &HashMap<String, Vec<String>>,
        table: &PhonemeFeatureTable,
    ) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with(";;;") {
                continue;
            }
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            if word.ends_with(')') {
                continue;
            }
            let mut phonemes = Vec::new();
            for ph in parts {
                let bare = ph.trim_end_matches(|c: char| c.is_ascii_digit());
                let ipa = arpabet
                    .get(bare)
                    .ok_or_else(|| Error::parse(source, i + 1, format!("unknown ARPAbet symbol {ph:?}")))?;
                phonemes.extend(ipa.iter().cloned());
            }
            if phonemes.is_empty() {
                return Err(Error::parse(source, i + 1, format!("no phonemes for {word:?}")));
            }
            entries.push((word.to_lowercase(), phonemes));
        }
        Self::from_entries(entries, table)
    }

    pub fn load(
        path: impl AsRef<Path>,
        arpabet: &HashMap<String, Vec<String>>,
        table: &PhonemeFeatureTable,
    ) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_arpabet(&text, path, arpabet, table)
    }

    pub fn get(&self, word: &str) -> Option<&[String]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Coverage {
    pub known: usize,
    pub oov: usize,
}

impl Coverage {
    pub fn total(&self) -> usize {
        self.known + self.oov
    }

    /// Fraction of tokens transcribed; 1.0 when there were no tokens.
    pub fn fraction(&self) -> f64 {
        if self.total() == 0 {
            1.0
        } else {
            self.known as f64 / self.total() as f64
        }
    }
}

impl AddAssign for Coverage {
    fn add_assign(&mut self, rhs: Coverage) {
        self.known += rhs.known;
        self.oov += rhs.oov;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transcription<'a> {
    Phonemes(&'a [String]),
    OutOfVocabulary,
}

pub fn ipa_transcribe<'a>(word: &str, lex: &'a PronunciationLexicon, coverage: &mut Coverage) -> Transcription<'a> {
    match lex.get(word) {
        Some(p) => {
            coverage.known += 1;
            Transcription::Phonemes(p)
        }
        None => {
            coverage.oov += 1;
            Transcription::OutOfVocabulary
        }
    }
}

pub fn phoneme_pf(p: &str, table: &PhonemeFeatureTable, weights: &DifficultyWeights) -> Result<EnergyVector> {
    let mask = table.mask(p)?;
    let mut v = [0.0; 8];
    for (i, w) in weights.0.iter().enumerate() {
        if mask & (1 << i) != 0 {
            v[FEATURE_CATEGORY[i]] += w;
        }
    }
    Ok(EnergyVector(v))
}

pub fn pf_score<S: AsRef<str>>(
    phonemes: &[S],
    table: &PhonemeFeatureTable,
    weights: &DifficultyWeights,
) -> Result<EnergyVector> {
    phonemes
        .iter()
        .try_fold(EnergyVector::zero(), |acc, p| Ok(acc + phoneme_pf(p.as_ref(), table, weights)?))
}

/// Lexicon, feature table and weights bundled for scoring.
#[derive(Clone, Debug)]
pub struct EnergyModel {
    pub lexicon: PronunciationLexicon,
    pub table: PhonemeFeatureTable,
    pub weights: DifficultyWeights,
    cache: HashMap<String, EnergyVector>,
}

impl EnergyModel {
    /// Precomputes the energy of every lexicon word.
    pub fn new(lexicon: PronunciationLexicon, table: PhonemeFeatureTable, weights: DifficultyWeights) -> Result<Self> {
        let cache = lexicon
            .entries
            .iter()
            .map(|(w, p)| Ok((w.clone(), pf_score(p, &table, &weights)?)))
            .collect::<Result<_>>()?;
        Ok(EnergyModel {
            lexicon,
            table,
            weights,
            cache,
        })
    }

    /// Energy of one word; OOV words score zero and are counted.
    pub fn word_energy(&self, word: &str, coverage: &mut Coverage) -> EnergyVector {
        match self.cache.get(word) {
            Some(v) => {
                coverage.known += 1;
                *v
            }
            None => {
                coverage.oov += 1;
                EnergyVector::zero()
            }
        }
    }

    /// Mean word energy over all token occurrences, OOV tokens included in
    /// the denominator.
    pub fn user_energy_tokens<'t>(&self, tokens: impl IntoIterator<Item = &'t str>) -> (EnergyVector, Coverage) {
        let mut coverage = Coverage::default();
        let mut sum = EnergyVector::zero();
        for t in tokens {
            sum += self.word_energy(t, &mut coverage);
        }
        if coverage.total() == 0 {
            return (sum, coverage);
        }
        (sum.scale(1.0 / coverage.total() as f64), coverage)
    }

    /// `[coverage, phonemes per transcribed token]`; zeros without tokens.
    pub fn lexical_summary<'t>(&self, tokens: impl IntoIterator<Item = &'t str>) -> [f64; 2] {
        let (mut known, mut total, mut phonemes) = (0usize, 0usize, 0usize);
        for t in tokens {
            total += 1;
            if let Some(p) = self.lexicon.get(t) {
                known += 1;
                phonemes += p.len();
            }
        }
        if known == 0 {
            return [0.0; 2];
        }
        [known as f64 / total as f64, phonemes as f64 / known as f64]
    }

    pub fn user_energy(&self, slice: &PeriodSlice<'_>) -> (EnergyVector, Coverage) {
        let (v, cov) = self.user_energy_tokens(slice.all_tokens());
        if cov.total() == 0 && !slice.is_empty() {
            warn!("user {}: no tokens in window, energy set to zero", slice.user_id);
        }
        (v, cov)
    }
}

/// Free-function form of [`EnergyModel::word_energy`] without the cache.
pub fn word_energy(
    word: &str,
    lex: &PronunciationLexicon,
    table: &PhonemeFeatureTable,
    weights: &DifficultyWeights,
    coverage: &mut Coverage,
) -> Result<EnergyVector> {
    match ipa_transcribe(word, lex, coverage) {
        Transcription::Phonemes(p) => pf_score(p, table, weights),
        Transcription::OutOfVocabulary => Ok(EnergyVector::zero()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resources;
    use proptest::prelude::*;

    fn model() -> EnergyModel {
        resources::energy_model().unwrap()
    }

    #[test]
    fn folder_transcription() {
        let m = model();
        let mut cov = Coverage::default();
        let t = ipa_transcribe("folder", &m.lexicon, &mut cov);
        let expected: Vec<String> = ["f", "oʊ", "l", "d", "ə", "r"].map(String::from).to_vec();
        assert_eq!(t, Transcription::Phonemes(&expected));
        assert_eq!(cov, Coverage { known: 1, oov: 0 });
    }

    #[test]
    fn oov_is_counted() {
        let m = model();
        let mut cov = Coverage::default();
        assert_eq!(ipa_transcribe("xqzt", &m.lexicon, &mut cov), Transcription::OutOfVocabulary);
        assert_eq!(cov.oov, 1);
        assert_eq!(m.word_energy("xqzt", &mut cov), EnergyVector::zero());
        assert_eq!(cov.oov, 2);
    }

    #[test]
    fn ou_vector() {
        let m = model();
        let v = phoneme_pf("oʊ", &m.table, &DifficultyWeights::default()).unwrap();
        assert_eq!(v.0, [1.0, 2.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let doubled = phoneme_pf("oʊ", &m.table, &DifficultyWeights::default().scale(2.0).unwrap()).unwrap();
        assert_eq!(doubled, v.scale(2.0));
    }

    #[test]
    fn unknown_phoneme_errors() {
        let m = model();
        let err = phoneme_pf("qq", &m.table, &m.weights).unwrap_err();
        assert!(err.to_string().contains("qq"));
    }

    #[test]
    fn folder_energy_matches_per_phoneme_sum() {
        let m = model();
        let mut oracle = [0.0; 8];
        for p in ["f", "oʊ", "l", "d", "ə", "r"] {
            for f in m.table.active(p).unwrap() {
                let i = FEATURES.iter().position(|x| *x == f).unwrap();
                oracle[FEATURE_CATEGORY[i]] += 1.0;
            }
        }
        let mut cov = Coverage::default();
        assert_eq!(m.word_energy("folder", &mut cov).0, oracle);
        let free = word_energy("folder", &m.lexicon, &m.table, &m.weights, &mut cov).unwrap();
        assert_eq!(free.0, oracle);
    }

    #[test]
    fn user_energy_examples() {
        let m = model();
        let mut cov = Coverage::default();
        let folder = m.word_energy("folder", &mut cov);
        let (eu, c) = m.user_energy_tokens(["folder"; 4]);
        assert_eq!(eu, folder);
        assert_eq!(c.fraction(), 1.0);
        let (half, c) = m.user_energy_tokens(["folder", "xqzt", "folder", "zzqv"]);
        assert_eq!(half, folder.scale(0.5));
        assert_eq!(c.fraction(), 0.5);
        let (zero, _) = m.user_energy_tokens(std::iter::empty());
        assert_eq!(zero, EnergyVector::zero());
    }

    #[test]
    fn lexical_summary_values() {
        let m = model();
        assert_eq!(m.lexical_summary(["folder", "xqzt"]), [0.5, 6.0]);
        assert_eq!(m.lexical_summary(["xqzt"]), [0.0, 0.0]);
    }

    #[test]
    fn weights_file_parse() {
        let w = DifficultyWeights::parse("stop=2.5\n# c\n", Path::new("w")).unwrap();
        assert_eq!(w.get("stop"), Some(2.5));
        assert_eq!(w.get("vowel"), Some(1.0));
        assert!(DifficultyWeights::parse("voiced=1\n", Path::new("w")).is_err());
        assert!(DifficultyWeights::parse("stop=-1\n", Path::new("w")).is_err());
    }

    #[test]
    fn bundled_lexicon_is_closed_over_table() {
        let m = model();
        for w in m.lexicon.words() {
            for p in m.lexicon.get(w).unwrap() {
                assert!(m.table.contains(p), "{w}: {p}");
            }
        }
    }

    proptest! {
        #[test]
        fn non_negative_under_default_weights(idx in prop::collection::vec(0usize..40, 0..30)) {
            let m = model();
            let mut inv: Vec<&str> = m.table.phonemes().collect();
            inv.sort();
            let seq: Vec<&str> = idx.iter().map(|&i| inv[i % inv.len()]).collect();
            let v = pf_score(&seq, &m.table, &m.weights).unwrap();
            prop_assert!(v.0.iter().all(|&x| x >= 0.0));
        }
    }
}
