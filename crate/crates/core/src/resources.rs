//! Bundled toy lexica, pronunciation subset and phonology tables.

use std::collections::HashMap;
use std::path::Path;

use crate::bdplf::{EmotionLexicon, WeightedLexicon};
use crate::error::Result;
use crate::phonology::{
    parse_arpabet_map, DifficultyWeights, EnergyModel, PhonemeFeatureTable, PronunciationLexicon,
};
use crate::textfeat::CategoryLexicon;

pub const LIWC: &str = include_str!("../data/liwc_toy.tsv");
pub const EMOTIONS: &str = include_str!("../data/emotion_toy.tsv");
pub const SENTIMENT: &str = include_str!("../data/sentiment_toy.tsv");
pub const AGE: &str = include_str!("../data/age_toy.tsv");
pub const GENDER: &str = include_str!("../data/gender_toy.tsv");
pub const PRONUNCIATIONS: &str = include_str!("../data/pronunciations.dict");
pub const ARPABET_IPA: &str = include_str!("../data/arpabet_ipa.tsv");
pub const ESPE_FEATURES: &str = include_str!("../data/espe_features.tsv");
pub const DIFFICULTY_WEIGHTS: &str = include_str!("../data/difficulty_weights.txt");

fn src(name: &str) -> &Path {
    Path::new(name)
}

pub fn liwc_lexicon() -> Result<CategoryLexicon> {
    CategoryLexicon::parse(LIWC, src("<bundled liwc_toy.tsv>"))
}

pub fn emotion_lexicon() -> Result<EmotionLexicon> {
    EmotionLexicon::new(CategoryLexicon::parse(EMOTIONS, src("<bundled emotion_toy.tsv>"))?)
}

pub fn sentiment_lexicon() -> Result<WeightedLexicon> {
    WeightedLexicon::parse(SENTIMENT, src("<bundled sentiment_toy.tsv>"))
}

pub fn age_lexicon() -> Result<WeightedLexicon> {
    WeightedLexicon::parse(AGE, src("<bundled age_toy.tsv>"))
}

pub fn gender_lexicon() -> Result<WeightedLexicon> {
    WeightedLexicon::parse(GENDER, src("<bundled gender_toy.tsv>"))
}

pub fn feature_table() -> Result<PhonemeFeatureTable> {
    PhonemeFeatureTable::parse(ESPE_FEATURES, src("<bundled espe_features.tsv>"))
}

pub fn arpabet_map() -> Result<HashMap<String, Vec<String>>> {
    parse_arpabet_map(ARPABET_IPA, src("<bundled arpabet_ipa.tsv>"))
}

pub fn difficulty_weights() -> Result<DifficultyWeights> {
    DifficultyWeights::parse(DIFFICULTY_WEIGHTS, src("<bundled difficulty_weights.txt>"))
}

pub fn pronunciation_lexicon(table: &PhonemeFeatureTable) -> Result<PronunciationLexicon> {
    PronunciationLexicon::parse_arpabet(PRONUNCIATIONS, src("<bundled pronunciations.dict>"), &arpabet_map()?, table)
}

pub fn energy_model() -> Result<EnergyModel> {
    let table = feature_table()?;
    let lexicon = pronunciation_lexicon(&table)?;
    EnergyModel::new(lexicon, table, difficulty_weights()?)
}
