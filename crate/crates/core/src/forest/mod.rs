//! Deterministic random forest with probability output.
//!
//! Tree `i` draws its bootstrap sample and split candidates from
//! `ChaCha8Rng::seed_from_u64(seed)` switched to stream `i`, so the model
//! depends only on the data, the parameters and the seed.

mod cv;
mod tree;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub use cv::{cross_validate, permuted_labels, stratified_folds, CvReport, FoldMetrics};
pub use tree::{Node, Tree};

pub const MODEL_FORMAT: &str = "bdonset-forest";
pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    /// `ceil(sqrt(d))` over the non-constant training columns.
    Sqrt,
    All,
    Fixed(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            max_features: MaxFeatures::Sqrt,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::arg("n_trees must be at least 1"));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::arg("min_samples_leaf must be at least 1"));
        }
        if self.max_depth == Some(0) {
            return Err(Error::arg("max_depth must be at least 1"));
        }
        if self.max_features == MaxFeatures::Fixed(0) {
            return Err(Error::arg("max_features must be at least 1"));
        }
        Ok(())
    }

    fn mtry(&self, informative: usize) -> usize {
        match self.max_features {
            MaxFeatures::Sqrt => (informative as f64).sqrt().ceil() as usize,
            MaxFeatures::All => informative,
            MaxFeatures::Fixed(k) => k.min(informative),
        }
        .max(1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub format: String,
    pub version: u32,
    pub schema: Vec<String>,
    pub params: ForestParams,
    pub seed: u64,
    pub trees: Vec<Tree>,
}

pub fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

pub fn train(data: &Dataset, params: &ForestParams, seed: u64) -> Result<ForestModel> {
    params.validate()?;
    let (neg, pos) = data.class_counts();
    if data.len() < 2 || neg == 0 || pos == 0 {
        return Err(Error::arg(format!(
            "training needs both classes (got {pos} onset, {neg} regular rows)"
        )));
    }
    let x: Vec<Vec<f64>> = data.rows().iter().map(|r| r.values.clone()).collect();
    let y = data.labels();
    let n = x.len();
    let informative: Vec<usize> = (0..data.dims())
        .filter(|&f| x.iter().any(|r| r[f] != x[0][f]))
        .collect();
    let grow = tree::GrowParams {
        mtry: params.mtry(informative.len()),
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
    };
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = tree_rng(seed, i);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            tree::grow(&x, &y, idx, &informative, &grow, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        schema: data.schema().to_vec(),
        params: *params,
        seed,
        trees,
    })
}

impl ForestModel {
    /// Fraction of trees voting onset.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.schema.len() {
            return Err(Error::Schema(format!(
                "feature vector has {} values, model expects {}",
                x.len(),
                self.schema.len()
            )));
        }
        let votes = self.trees.iter().filter(|t| t.vote(x)).count();
        Ok(votes as f64 / self.trees.len() as f64)
    }

    /// Probabilities for every row; the dataset schema must equal the model's.
    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.check_schema(data.schema())?;
        data.rows().par_iter().map(|r| self.predict_proba(&r.values)).collect()
    }

    pub fn check_schema(&self, schema: &[String]) -> Result<()> {
        if schema != self.schema.as_slice() {
            let missing = self.schema.iter().find(|c| !schema.contains(c));
            return Err(Error::Schema(match missing {
                Some(c) => format!("input lacks model column {c:?}"),
                None => "input columns differ from the model schema".to_string(),
            }));
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.format != MODEL_FORMAT || self.version != MODEL_VERSION {
            return Err(Error::Schema(format!(
                "unsupported model format {} v{}",
                self.format, self.version
            )));
        }
        if self.trees.is_empty() {
            return Err(Error::Schema("model has no trees".into()));
        }
        for t in &self.trees {
            let n = t.nodes.len();
            for node in &t.nodes {
                match node {
                    Node::Split { feature, left, right, .. } => {
                        if *feature >= self.schema.len() || *left >= n || *right >= n {
                            return Err(Error::Schema("tree references a missing feature or node".into()));
                        }
                    }
                    Node::Leaf { .. } => {}
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: ForestModel = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Row;

    pub(crate) fn separable(n: usize) -> Dataset {
        let rows = (0..n)
            .map(|i| {
                let label = i % 2 == 0;
                let base = if label { 5.0 } else { 0.0 };
                Row {
                    user_id: format!("u{i}"),
                    label,
                    values: vec![base + (i as f64) * 0.01, (i * 7 % 13) as f64],
                }
            })
            .collect();
        Dataset::new(vec!["a".into(), "b".into()], rows).unwrap()
    }

    #[test]
    fn separable_fits_training_set() {
        let d = separable(20);
        let m = train(&d, &ForestParams::default(), 7).unwrap();
        let p = m.predict_dataset(&d).unwrap();
        for (r, p) in d.rows().iter().zip(p) {
            assert_eq!(p >= 0.5, r.label);
            if r.label {
                assert!(p >= 0.9);
            }
        }
    }

    #[test]
    fn same_seed_same_model() {
        let d = separable(30);
        let a = train(&d, &ForestParams::default(), 3).unwrap();
        let b = train(&d, &ForestParams::default(), 3).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn single_tree_is_binary() {
        let d = separable(20);
        let p = ForestParams { n_trees: 1, ..Default::default() };
        let m = train(&d, &p, 1).unwrap();
        for r in d.rows() {
            let q = m.predict_proba(&r.values).unwrap();
            assert!(q == 0.0 || q == 1.0);
        }
    }

    #[test]
    fn single_class_rejected() {
        let d = separable(20);
        let only: Vec<usize> = (0..20).step_by(2).collect();
        assert!(train(&d.subset(&only), &ForestParams::default(), 1).is_err());
    }

    #[test]
    fn schema_mismatch_rejected() {
        let m = train(&separable(10), &ForestParams::default(), 1).unwrap();
        assert!(m.predict_proba(&[1.0]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = train(&separable(20), &ForestParams::default(), 9).unwrap();
        let back = ForestModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(ForestModel::from_json(&m.to_json().unwrap().replace(MODEL_FORMAT, "x")).is_err());
    }
}
