use rand::seq::index;

use super::tree::{grow, Criterion, GrowParams, Stats};
use super::{
    sigmoid, sub_rng, BinnedMatrix, GbmParams, HyperParams, ModelParams, TrainedModel, TrainingSet,
};
use crate::error::Result;

/// Mean binomial deviance on the training rows after each stage; entry 0 is the
/// constant initial model.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GbmTrace {
    pub train_deviance: Vec<f64>,
}

fn mean_deviance(f: &[f64], y: &[bool]) -> f64 {
    let total: f64 = f
        .iter()
        .zip(y)
        .map(|(&f, &y)| {
            // -2 log-likelihood, written stably in terms of the log-odds.
            let softplus = f.max(0.0) + (-f.abs()).exp().ln_1p();
            2.0 * (softplus - if y { f } else { 0.0 })
        })
        .sum();
    total / f.len() as f64
}

/// Gradient boosting with logistic deviance. Each stage fits a depth-bounded
/// regression tree to the residuals `y - p` on a row subsample, sets leaf values
/// by one Newton step `Σ(y - p) / Σ p(1 - p)`, and adds the tree scaled by the
/// learning rate. Stage `m` draws its randomness from stream `m` of `seed`.
pub fn train_gbm(
    data: &TrainingSet<'_>,
    hp: &GbmParams,
    seed: u64,
) -> Result<(TrainedModel, GbmTrace)> {
    let hyper = HyperParams::Gbm(*hp);
    hyper.validate()?;
    let bins = BinnedMatrix::new(data.x);
    let n = data.y.len();
    let rate = data.base_rate().clamp(1e-10, 1.0 - 1e-10);
    let init = (rate / (1.0 - rate)).ln();
    let params = GrowParams {
        criterion: Criterion::Variance,
        max_depth: hp.max_depth,
        min_leaf: 1.0,
        n_candidates: hp.max_features.count(data.x.n_cols()),
    };
    let in_bag = ((hp.subsample * n as f64).floor() as usize).clamp(1, n);

    let mut f = vec![init; n];
    let mut trace = GbmTrace {
        train_deviance: vec![mean_deviance(&f, data.y)],
    };
    let mut trees = Vec::with_capacity(hp.n_estimators);
    let mut stats = vec![Stats::default(); n];
    for m in 0..hp.n_estimators {
        let mut rng = sub_rng(seed, m as u64);
        for ((s, &fi), &y) in stats.iter_mut().zip(&f).zip(data.y) {
            let p = sigmoid(fi);
            *s = Stats {
                w: 1.0,
                s1: f64::from(u8::from(y)) - p,
                s2: p * (1.0 - p),
            };
        }
        let mut rows: Vec<u32> = if in_bag < n {
            let mut idx: Vec<u32> = index::sample(&mut rng, n, in_bag)
                .into_iter()
                .map(|i| i as u32)
                .collect();
            idx.sort_unstable();
            idx
        } else {
            (0..n as u32).collect()
        };
        let tree = grow(&bins, &mut rows, &stats, &params, &mut rng);
        for (i, fi) in f.iter_mut().enumerate() {
            *fi += hp.learning_rate * tree.predict(data.x.row(i));
        }
        trace.train_deviance.push(mean_deviance(&f, data.y));
        trees.push(tree);
    }
    let model = TrainedModel::new(
        data,
        hyper,
        seed,
        Vec::new(),
        ModelParams::Boosted {
            init_log_odds: init,
            learning_rate: hp.learning_rate,
            trees,
        },
    );
    Ok((model, trace))
}
