//! Risk models: logistic regression (plain and penalized), random forest and
//! gradient boosting, all producing scores in `[0, 1]`.
//!
//! Every fitted model records the feature schema it was trained on and refuses to
//! score matrices with a different column layout. Models serialize to a versioned
//! JSON document that can be reloaded for auditing without retraining.

mod binning;
mod boosting;
mod forest;
mod linear;
mod matrix;
mod params;
mod tree;

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSchema;

pub use binning::{BinnedMatrix, MAX_BINS};
pub use boosting::{train_gbm, GbmTrace};
pub use forest::train_rf;
pub use linear::{
    standardize, train_lr, train_plr, LinearModel, LogisticObjective, LrOptions, Standardizer,
};
pub use matrix::Matrix;
pub use params::{
    GbmParams, HyperParams, MaxFeatures, Method, Penalty, PlrParams, RfParams, GBM_LEARNING_RATE,
    GBM_MAX_DEPTH, GBM_MAX_FEATURES, GBM_N_ESTIMATORS, GBM_SUBSAMPLE, PLR_C, PLR_PENALTIES,
    RF_MAX_FEATURES, RF_MIN_SAMPLES_LEAF, RF_N_ESTIMATORS,
};
pub use tree::Tree;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Borrowed training inputs.
#[derive(Clone, Copy, Debug)]
pub struct TrainingSet<'a> {
    pub x: &'a Matrix,
    pub y: &'a [bool],
    pub schema: &'a FeatureSchema,
}

impl<'a> TrainingSet<'a> {
    pub fn new(x: &'a Matrix, y: &'a [bool], schema: &'a FeatureSchema) -> Result<Self> {
        if x.n_rows() != y.len() {
            return Err(Error::Invalid(format!(
                "{} rows but {} labels",
                x.n_rows(),
                y.len()
            )));
        }
        if x.n_cols() != schema.len() {
            return Err(Error::Invalid(format!(
                "{} columns but schema lists {} features",
                x.n_cols(),
                schema.len()
            )));
        }
        if x.n_rows() == 0 {
            return Err(Error::Invalid("empty training set".into()));
        }
        Ok(TrainingSet { x, y, schema })
    }

    pub fn base_rate(&self) -> f64 {
        self.y.iter().filter(|&&v| v).count() as f64 / self.y.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    Linear(LinearModel),
    Forest {
        trees: Vec<Tree>,
    },
    Boosted {
        init_log_odds: f64,
        learning_rate: f64,
        trees: Vec<Tree>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub method: Method,
    pub hyper_params: HyperParams,
    pub seed: u64,
    pub n_rows: usize,
    pub schema_hash: String,
    pub feature_names: Vec<String>,
    /// Non-fatal fitting problems, e.g. non-convergence or separation.
    pub warnings: Vec<String>,
    pub params: ModelParams,
}

impl TrainedModel {
    fn new(
        data: &TrainingSet<'_>,
        hyper_params: HyperParams,
        seed: u64,
        warnings: Vec<String>,
        params: ModelParams,
    ) -> Self {
        TrainedModel {
            format_version: MODEL_FORMAT_VERSION,
            method: hyper_params.method(),
            hyper_params,
            seed,
            n_rows: data.x.n_rows(),
            schema_hash: data.schema.hash(),
            feature_names: data.schema.names().map(str::to_owned).collect(),
            warnings,
            params,
        }
    }

    pub fn schema(&self) -> FeatureSchema {
        FeatureSchema::from_names(self.feature_names.iter().cloned())
    }

    fn check_schema(&self, schema: &FeatureSchema) -> Result<()> {
        if schema.hash() == self.schema_hash {
            return Ok(());
        }
        self.schema().check_matches(schema)
    }

    /// Raw score of one row, before any clamping.
    fn score_row(&self, row: &[f64]) -> f64 {
        match &self.params {
            ModelParams::Linear(m) => sigmoid(m.linear_predictor(row)),
            ModelParams::Forest { trees } => {
                trees.iter().map(|t| t.predict(row)).sum::<f64>() / trees.len() as f64
            }
            ModelParams::Boosted {
                init_log_odds,
                learning_rate,
                trees,
            } => {
                let f = trees.iter().fold(*init_log_odds, |acc, t| {
                    acc + learning_rate * t.predict(row)
                });
                sigmoid(f)
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn write_json<W: Write>(&self, output: W) -> Result<()> {
        serde_json::to_writer(output, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(input: R) -> Result<Self> {
        let model: TrainedModel = serde_json::from_reader(input)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Invalid(format!(
                "unsupported model format version {}",
                model.format_version
            )));
        }
        if model.schema().hash() != model.schema_hash {
            return Err(Error::Invalid(
                "model schema hash does not match its feature names".into(),
            ));
        }
        Ok(model)
    }
}

/// Scores every row of `x`. Fails, naming the first differing column, when
/// `schema` is not the schema the model was trained on.
pub fn predict_risk(model: &TrainedModel, x: &Matrix, schema: &FeatureSchema) -> Result<Vec<f64>> {
    model.check_schema(schema)?;
    if x.n_cols() != model.feature_names.len() {
        return Err(Error::Invalid(format!(
            "matrix has {} columns, model expects {}",
            x.n_cols(),
            model.feature_names.len()
        )));
    }
    let scores: Vec<f64> = (0..x.n_rows())
        .map(|i| model.score_row(x.row(i)).clamp(0.0, 1.0))
        .collect();
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Numeric(format!("non-finite score for row {i}")));
    }
    Ok(scores)
}

/// Fits the model family selected by `hp`.
pub fn train(hp: &HyperParams, data: &TrainingSet<'_>, seed: u64) -> Result<TrainedModel> {
    hp.validate()?;
    match hp {
        HyperParams::Lr => train_lr(data, &LrOptions::default()),
        HyperParams::Plr(p) => train_plr(data, p.penalty, p.c, &LrOptions::default()),
        HyperParams::Rf(p) => train_rf(data, p, seed),
        HyperParams::Gbm(p) => train_gbm(data, p, seed).map(|(m, _)| m),
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Independent random stream `stream` derived from `seed`.
pub(crate) fn sub_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
