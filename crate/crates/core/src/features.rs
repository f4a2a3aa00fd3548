//! Feature families, model variants and per-window featurization.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use chrono::Duration;
use log::{info, warn};
use rayon::prelude::*;

use crate::bdplf::{self, AgeGenderModel, BdplfExtractor, EmotionCountMode};
use crate::corpus::{Corpus, Group};
use crate::dataset::{Dataset, Row};
use crate::error::{Error, Result};
use crate::phonology::{Coverage, EnergyModel, PHON_AUX_NAMES, PHON_NAMES};
use crate::resources;
use crate::textfeat::{category_scores, CategoryLexicon, TfidfState, DEFAULT_VOCAB_CAP};
use crate::windows::{onset_window, PeriodSlice};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Tfidf,
    Liwc,
    Ag,
    Pol,
    Emot,
    Soc,
    Lt,
    Trd,
    Phon,
    /// Lexical phonology summary, paired with Phon in the text-only variants.
    PhonAux,
}

impl Family {
    pub const ALL: [Family; 10] = [
        Family::Tfidf,
        Family::Liwc,
        Family::Ag,
        Family::Pol,
        Family::Emot,
        Family::Soc,
        Family::Lt,
        Family::Trd,
        Family::Phon,
        Family::PhonAux,
    ];

    /// Column-name prefix, including the trailing underscore.
    pub fn prefix(self) -> &'static str {
        match self {
            Family::Tfidf => "tfidf_",
            Family::Liwc => "liwc_",
            Family::Ag => "ag_",
            Family::Pol => "pol_",
            Family::Emot => "emot_",
            Family::Soc => "soc_",
            Family::Lt => "lt_",
            Family::Trd => "trd_",
            Family::Phon => "phon_",
            Family::PhonAux => "phonx_",
        }
    }

    pub fn of_column(name: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| name.starts_with(f.prefix()))
    }
}

/// A named feature set as used in the precision grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Variant {
    pub name: &'static str,
    pub families: &'static [Family],
}

use Family::*;

const PLF: [Family; 4] = [Ag, Pol, Emot, Soc];

pub const VARIANTS: &[Variant] = &[
    Variant { name: "CLF", families: &[Tfidf] },
    Variant { name: "LIWC", families: &[Liwc] },
    Variant { name: "PLF", families: &PLF },
    Variant { name: "LT+PLF", families: &[Lt, Ag, Pol, Emot, Soc] },
    Variant { name: "TRD+PLF", families: &[Trd, Ag, Pol, Emot, Soc] },
    Variant { name: "BDPLF", families: &[Ag, Pol, Emot, Soc, Lt, Trd] },
    Variant { name: "Phon", families: &[Phon] },
    Variant { name: "Phon+PLF", families: &[Phon, Ag, Pol, Emot, Soc] },
    Variant { name: "Phon+LT+PLF", families: &[Phon, Lt, Ag, Pol, Emot, Soc] },
    Variant { name: "Phon+TRD+PLF", families: &[Phon, Trd, Ag, Pol, Emot, Soc] },
    Variant { name: "Phon+BDPLF", families: &[Phon, Ag, Pol, Emot, Soc, Lt, Trd] },
    Variant { name: "Emot+AG", families: &[Emot, Ag] },
    Variant { name: "Emot+Phon", families: &[Emot, Phon, PhonAux] },
    Variant { name: "Emot+AG+Phon", families: &[Emot, Ag, Phon, PhonAux] },
];

impl Variant {
    /// Columns of `schema` belonging to this variant, grouped by family in
    /// the variant's order.
    pub fn columns(&self, schema: &[String]) -> Vec<String> {
        self.families
            .iter()
            .flat_map(|&f| schema.iter().filter(move |c| Family::of_column(c) == Some(f)))
            .cloned()
            .collect()
    }

    pub fn select(&self, data: &Dataset) -> Result<Dataset> {
        let cols = self.columns(data.schema());
        if cols.is_empty() {
            return Err(Error::Schema(format!("dataset has no columns for variant {}", self.name)));
        }
        data.select(&cols)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name)
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VARIANTS
            .iter()
            .find(|v| v.name.eq_ignore_ascii_case(s))
            .copied()
            .ok_or_else(|| {
                let names: Vec<_> = VARIANTS.iter().map(|v| v.name).collect();
                Error::arg(format!("unknown variant {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

/// Knobs shared by the extractors.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureConfig {
    pub neutral_band: f64,
    pub emotion_mode: EmotionCountMode,
    pub trd_segment: Duration,
    /// Divide category ratios by the tweet count as well as the token count.
    pub liwc_per_tweet: bool,
    pub vocab_cap: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            neutral_band: 0.0,
            emotion_mode: EmotionCountMode::default(),
            trd_segment: Duration::days(bdplf::DEFAULT_TRD_SEGMENT_DAYS),
            liwc_per_tweet: true,
            vocab_cap: DEFAULT_VOCAB_CAP,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FeatureExtractor {
    pub bdplf: BdplfExtractor,
    pub liwc: CategoryLexicon,
    pub liwc_per_tweet: bool,
    pub energy: EnergyModel,
    pub vocab_cap: usize,
}

impl FeatureExtractor {
    /// Extractor over the bundled lexica and tables.
    pub fn bundled(cfg: &FeatureConfig) -> Result<Self> {
        Ok(FeatureExtractor {
            bdplf: BdplfExtractor {
                sentiment: resources::sentiment_lexicon()?,
                emotions: resources::emotion_lexicon()?,
                age_gender: AgeGenderModel {
                    age: Some(resources::age_lexicon()?),
                    gender: Some(resources::gender_lexicon()?),
                    ..Default::default()
                },
                neutral_band: cfg.neutral_band,
                emotion_mode: cfg.emotion_mode,
                trd_segment: cfg.trd_segment,
            },
            liwc: resources::liwc_lexicon()?,
            liwc_per_tweet: cfg.liwc_per_tweet,
            energy: resources::energy_model()?,
            vocab_cap: cfg.vocab_cap,
        })
    }

    pub fn family_columns(&self, family: Family, tfidf: Option<&TfidfState>) -> Vec<String> {
        let named = |names: &[&str]| names.iter().map(|s| s.to_string()).collect();
        match family {
            Tfidf => tfidf
                .map(|t| t.vocabulary.terms().iter().map(|w| format!("tfidf_{w}")).collect())
                .unwrap_or_default(),
            Liwc => self.liwc.categories().iter().map(|c| format!("liwc_{c}")).collect(),
            Ag => named(&bdplf::AG_NAMES),
            Pol => named(&bdplf::POL_NAMES),
            Emot => named(&bdplf::EMOT_NAMES),
            Soc => named(&bdplf::SOC_NAMES),
            Lt => named(&[bdplf::LT_NAME]),
            Trd => named(&[bdplf::TRD_NAME]),
            Phon => named(&PHON_NAMES),
            PhonAux => named(&PHON_AUX_NAMES),
        }
    }

    pub fn columns(&self, families: &[Family], tfidf: Option<&TfidfState>) -> Vec<String> {
        families.iter().flat_map(|&f| self.family_columns(f, tfidf)).collect()
    }

    pub fn extract_family(
        &self,
        family: Family,
        slice: &PeriodSlice<'_>,
        tfidf: Option<&TfidfState>,
        coverage: &mut Coverage,
    ) -> Result<Vec<f64>> {
        Ok(match family {
            Tfidf => tfidf
                .ok_or_else(|| Error::arg("tf-idf features need a fitted vocabulary"))?
                .transform(slice)?,
            Liwc => category_scores(slice, &self.liwc, self.liwc_per_tweet),
            Ag => self.bdplf.ag(slice).to_vec(),
            Pol => self.bdplf.pol(slice).to_vec(),
            Emot => self.bdplf.emot(slice).to_vec(),
            Soc => self.bdplf.soc(slice).to_vec(),
            Lt => vec![self.bdplf.lt(slice)],
            Trd => vec![self.bdplf.trd(slice)],
            Phon => {
                let (v, cov) = self.energy.user_energy(slice);
                *coverage += cov;
                v.0.to_vec()
            }
            PhonAux => self.energy.lexical_summary(slice.all_tokens()).to_vec(),
        })
    }

    pub fn extract(&self, families: &[Family], slice: &PeriodSlice<'_>, tfidf: Option<&TfidfState>) -> Result<Vec<f64>> {
        let mut cov = Coverage::default();
        let mut v = Vec::new();
        for &f in families {
            v.extend(self.extract_family(f, slice, tfidf, &mut cov)?);
        }
        Ok(v)
    }

    /// Values for the named columns, computing only the families they use.
    pub fn extract_columns(&self, schema: &[String], slice: &PeriodSlice<'_>, tfidf: Option<&TfidfState>) -> Result<Vec<f64>> {
        let mut families: Vec<Family> = schema
            .iter()
            .map(|c| Family::of_column(c).ok_or_else(|| Error::Schema(format!("unknown column {c:?}"))))
            .collect::<Result<_>>()?;
        families.sort();
        families.dedup();
        let names = self.columns(&families, tfidf);
        let values = self.extract(&families, slice, tfidf)?;
        let by_name: HashMap<&str, f64> = names.iter().map(String::as_str).zip(values).collect();
        schema
            .iter()
            .map(|c| {
                by_name
                    .get(c.as_str())
                    .copied()
                    .ok_or_else(|| Error::Schema(format!("extractor cannot produce column {c:?}")))
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct Featurized {
    /// All families for every labeled user with a non-empty onset window.
    pub dataset: Dataset,
    pub tfidf: TfidfState,
    pub skipped_empty: Vec<String>,
    pub coverage: Coverage,
}

/// Builds the onset-window feature table for bipolar (label 1) and regular
/// (label 0) users. Unlabeled users are ignored.
pub fn featurize(corpus: &Corpus, alpha: Duration, extractor: &FeatureExtractor) -> Result<Featurized> {
    let mut slices = Vec::new();
    let mut labels = Vec::new();
    let mut skipped_empty = Vec::new();
    for u in corpus.users() {
        let label = match u.group() {
            Group::Bipolar => true,
            Group::Regular => false,
            Group::Unlabeled => continue,
        };
        let s = onset_window(u, alpha)?;
        if s.is_empty() {
            warn!("user {}: onset window is empty, skipped", u.user_id());
            skipped_empty.push(u.user_id().to_string());
            continue;
        }
        slices.push(s);
        labels.push(label);
    }
    if slices.is_empty() {
        return Err(Error::arg("no labeled users with tweets in the window"));
    }
    let (tfidf, tfidf_rows) = TfidfState::fit(&slices, extractor.vocab_cap)?;
    let others: Vec<Family> = Family::ALL.into_iter().filter(|&f| f != Tfidf).collect();
    let extracted = slices
        .par_iter()
        .map(|s| {
            let mut cov = Coverage::default();
            let mut v = Vec::new();
            for &f in &others {
                v.extend(extractor.extract_family(f, s, None, &mut cov)?);
            }
            Ok((v, cov))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut schema = extractor.family_columns(Tfidf, Some(&tfidf));
    schema.extend(extractor.columns(&others, None));
    let mut coverage = Coverage::default();
    let rows = slices
        .iter()
        .zip(labels)
        .zip(tfidf_rows)
        .zip(extracted)
        .map(|(((s, label), mut values), (rest, cov))| {
            coverage += cov;
            values.extend(rest);
            Row {
                user_id: s.user_id.to_string(),
                label,
                values,
            }
        })
        .collect();
    info!(
        "featurized {} users ({} skipped), phonology coverage {:.3}",
        slices.len(),
        skipped_empty.len(),
        coverage.fraction()
    );
    Ok(Featurized {
        dataset: Dataset::new(schema, rows)?,
        tfidf,
        skipped_empty,
        coverage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(name: &str) -> usize {
        let ex = FeatureExtractor::bundled(&FeatureConfig::default()).unwrap();
        let v: Variant = name.parse().unwrap();
        ex.columns(v.families, None).len()
    }

    #[test]
    fn variant_dimensions() {
        assert_eq!(dims("BDPLF"), 21);
        assert_eq!(dims("PLF"), 19);
        assert_eq!(dims("Phon"), 8);
        assert_eq!(dims("Phon+BDPLF"), 29);
        assert_eq!(dims("Emot+AG+Phon"), 20);
        assert_eq!(dims("LT+PLF"), 20);
        assert_eq!(dims("Emot+AG"), 10);
        assert_eq!(dims("Emot+Phon"), 18);
        assert_eq!(dims("Phon+PLF"), 27);
        assert_eq!(dims("Phon+TRD+PLF"), 28);
    }

    #[test]
    fn column_family_lookup() {
        assert_eq!(Family::of_column("tfidf_so sad"), Some(Tfidf));
        assert_eq!(Family::of_column("phon_oc"), Some(Phon));
        assert_eq!(Family::of_column("nope"), None);
        assert!("nope".parse::<Variant>().is_err());
        assert_eq!("phon+bdplf".parse::<Variant>().unwrap().name, "Phon+BDPLF");
    }

    #[test]
    fn variant_names_unique() {
        let mut names: Vec<_> = VARIANTS.iter().map(|v| v.name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), VARIANTS.len());
    }
}
