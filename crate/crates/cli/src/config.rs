//! Pipeline configuration: a TOML file with sections, overridden by flags.

use std::path::{Path, PathBuf};

use bdonset::bdplf::{AgeGenderModel, BdplfExtractor, EmotionCountMode, EmotionLexicon, WeightedLexicon};
use bdonset::features::{FeatureConfig, FeatureExtractor};
use bdonset::forest::{ForestParams, MaxFeatures};
use bdonset::phonology::{parse_arpabet_map, DifficultyWeights, EnergyModel, PhonemeFeatureTable, PronunciationLexicon};
use bdonset::prodrome::ProdromeBounds;
use bdonset::resources;
use bdonset::synth::SynthConfig;
use bdonset::textfeat::{CategoryLexicon, DEFAULT_VOCAB_CAP};
use bdonset::windows::ALPHA_PRESET_MONTHS;
use chrono::Duration;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CONFIG_ENV: &str = "BDONSET_CONFIG";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub paths: Paths,
    pub windows: WindowsConfig,
    pub features: FeaturesConfig,
    pub forest: ForestConfig,
    pub cv: CvConfig,
    pub prodrome: ProdromeBounds,
    pub synth: SynthConfig,
}

/// Input and output locations. Lexicon entries left unset use the bundled
/// resources.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub regular: Option<PathBuf>,
    pub cohort: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub time_keywords: Option<PathBuf>,
    pub liwc: Option<PathBuf>,
    pub emotions: Option<PathBuf>,
    pub sentiment: Option<PathBuf>,
    pub age: Option<PathBuf>,
    pub gender: Option<PathBuf>,
    pub pronunciations: Option<PathBuf>,
    pub arpabet: Option<PathBuf>,
    pub phoneme_features: Option<PathBuf>,
    pub weights: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowsConfig {
    /// Window length in 30-day months for single-window commands.
    pub alpha_months: u32,
    /// Lengths featurized and reported.
    pub alphas: Vec<u32>,
    pub step_days: i64,
}

impl Default for WindowsConfig {
    fn default() -> Self {
        WindowsConfig {
            alpha_months: 2,
            alphas: ALPHA_PRESET_MONTHS.to_vec(),
            step_days: 7,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmotionMode {
    #[default]
    Labeled,
    Categories,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesConfig {
    pub neutral_band: f64,
    pub emotion_mode: EmotionMode,
    pub liwc_per_tweet: bool,
    pub trd_segment_days: i64,
    pub vocab_cap: usize,
    /// Use fixed priors instead of the age/gender lexica.
    pub age_gender_priors_only: bool,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        FeaturesConfig {
            neutral_band: 0.0,
            emotion_mode: EmotionMode::Labeled,
            liwc_per_tweet: true,
            trd_segment_days: 7,
            vocab_cap: DEFAULT_VOCAB_CAP,
            age_gender_priors_only: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// 0 means unlimited.
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// "sqrt", "all" or a count.
    pub max_features: String,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: 0,
            min_samples_leaf: 1,
            max_features: "sqrt".into(),
        }
    }
}

impl ForestConfig {
    pub fn params(&self) -> Result<ForestParams, CliError> {
        let max_features = match self.max_features.as_str() {
            "sqrt" => MaxFeatures::Sqrt,
            "all" => MaxFeatures::All,
            n => MaxFeatures::Fixed(
                n.parse()
                    .map_err(|_| CliError::Config(format!("forest.max_features: bad value {n:?}")))?,
            ),
        };
        let p = ForestParams {
            n_trees: self.n_trees,
            max_depth: (self.max_depth > 0).then_some(self.max_depth),
            min_samples_leaf: self.min_samples_leaf,
            max_features,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub k: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig { k: 10 }
    }
}

impl PipelineConfig {
    /// Reads `path`, or the file named by `BDONSET_CONFIG`, or defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(PipelineConfig::default());
        };
        if !path.exists() {
            return Err(CliError::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| bdonset::Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).unwrap_or_default()
    }

    /// Checks value ranges and that every configured input file exists.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut errors = Vec::new();
        let p = &self.paths;
        for (name, path) in [
            ("paths.time_keywords", &p.time_keywords),
            ("paths.liwc", &p.liwc),
            ("paths.emotions", &p.emotions),
            ("paths.sentiment", &p.sentiment),
            ("paths.age", &p.age),
            ("paths.gender", &p.gender),
            ("paths.pronunciations", &p.pronunciations),
            ("paths.arpabet", &p.arpabet),
            ("paths.phoneme_features", &p.phoneme_features),
            ("paths.weights", &p.weights),
        ] {
            if let Some(path) = path {
                if !path.exists() {
                    errors.push(format!("{name}: {} does not exist", path.display()));
                }
            }
        }
        if self.windows.alpha_months == 0 || self.windows.alphas.contains(&0) {
            errors.push("windows: alpha must be at least one month".into());
        }
        if self.windows.step_days < 1 {
            errors.push("windows.step_days must be at least 1".into());
        }
        if self.features.trd_segment_days < 1 {
            errors.push("features.trd_segment_days must be at least 1".into());
        }
        if !self.features.neutral_band.is_finite() || self.features.neutral_band < 0.0 {
            errors.push("features.neutral_band must be finite and >= 0".into());
        }
        if self.features.vocab_cap == 0 {
            errors.push("features.vocab_cap must be at least 1".into());
        }
        if self.cv.k < 2 {
            errors.push("cv.k must be at least 2".into());
        }
        if let Err(e) = self.forest.params() {
            errors.push(e.to_string());
        }
        if let Err(e) = self.prodrome.validate() {
            errors.push(e.to_string());
        }
        if let Err(e) = self.synth.validate() {
            errors.push(format!("synth: {e}"));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(errors.join("; ")))
        }
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            neutral_band: self.features.neutral_band,
            emotion_mode: match self.features.emotion_mode {
                EmotionMode::Labeled => EmotionCountMode::LabeledTweets,
                EmotionMode::Categories => EmotionCountMode::Categories,
            },
            trd_segment: Duration::days(self.features.trd_segment_days),
            liwc_per_tweet: self.features.liwc_per_tweet,
            vocab_cap: self.features.vocab_cap,
        }
    }

    /// Extractor from configured lexica, falling back to bundled ones.
    pub fn extractor(&self) -> Result<FeatureExtractor, CliError> {
        let fc = self.feature_config();
        let p = &self.paths;
        let weighted = |path: &Option<PathBuf>, bundled: fn() -> bdonset::Result<WeightedLexicon>| match path {
            Some(path) => WeightedLexicon::load(path),
            None => bundled(),
        };
        let age_gender = if self.features.age_gender_priors_only {
            log::warn!("age/gender lexica disabled; using priors");
            AgeGenderModel::default()
        } else {
            AgeGenderModel {
                age: Some(weighted(&p.age, resources::age_lexicon)?),
                gender: Some(weighted(&p.gender, resources::gender_lexicon)?),
                ..Default::default()
            }
        };
        let emotions = match &p.emotions {
            Some(path) => EmotionLexicon::new(CategoryLexicon::load(path)?)?,
            None => resources::emotion_lexicon()?,
        };
        let liwc = match &p.liwc {
            Some(path) => CategoryLexicon::load(path)?,
            None => resources::liwc_lexicon()?,
        };
        let table = match &p.phoneme_features {
            Some(path) => PhonemeFeatureTable::load(path)?,
            None => resources::feature_table()?,
        };
        let arpabet = match &p.arpabet {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| bdonset::Error::io(path, e))?;
                parse_arpabet_map(&text, path)?
            }
            None => resources::arpabet_map()?,
        };
        let lexicon = match &p.pronunciations {
            Some(path) => PronunciationLexicon::load(path, &arpabet, &table)?,
            None => resources::pronunciation_lexicon(&table)?,
        };
        let weights = match &p.weights {
            Some(path) => DifficultyWeights::load(path)?,
            None => resources::difficulty_weights()?,
        };
        Ok(FeatureExtractor {
            bdplf: BdplfExtractor {
                sentiment: weighted(&p.sentiment, resources::sentiment_lexicon)?,
                emotions,
                age_gender,
                neutral_band: fc.neutral_band,
                emotion_mode: fc.emotion_mode,
                trd_segment: fc.trd_segment,
            },
            liwc,
            liwc_per_tweet: fc.liwc_per_tweet,
            energy: EnergyModel::new(lexicon, table, weights)?,
            vocab_cap: fc.vocab_cap,
        })
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Config("--seed is required (or set `seed` in the config file)".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = PipelineConfig::default();
        let back: PipelineConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        cfg.validate().unwrap();
    }

    #[test]
    fn sections_parse() {
        let cfg: PipelineConfig = toml::from_str(
            "seed = 4\n[windows]\nalpha_months = 3\n[prodrome]\nlower = 0.2\nupper = 0.8\nclear_below_lower = true\n[forest]\nmax_features = \"5\"\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(4));
        assert_eq!(cfg.windows.alpha_months, 3);
        assert!(cfg.prodrome.clear_below_lower);
        assert_eq!(cfg.forest.params().unwrap().max_features, MaxFeatures::Fixed(5));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<PipelineConfig>("[windows]\nalfa = 2\n").is_err());
    }

    #[test]
    fn validation_enumerates_errors() {
        let mut cfg = PipelineConfig::default();
        cfg.cv.k = 1;
        cfg.windows.step_days = 0;
        cfg.paths.liwc = Some("/nonexistent/liwc.tsv".into());
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("cv.k") && msg.contains("step_days") && msg.contains("paths.liwc"));
    }
}
