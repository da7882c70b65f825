use rand::Rng;
use rayon::prelude::*;

use super::tree::{grow, Criterion, GrowParams, Stats};
use super::{sub_rng, BinnedMatrix, HyperParams, ModelParams, RfParams, TrainedModel, TrainingSet};
use crate::error::Result;

/// Random forest of unpruned Gini trees, each grown on its own bootstrap
/// resample. Tree `t` draws all its randomness from stream `t` of `seed`, so the
/// forest does not depend on how trees are scheduled across threads.
pub fn train_rf(data: &TrainingSet<'_>, hp: &RfParams, seed: u64) -> Result<TrainedModel> {
    let hyper = HyperParams::Rf(*hp);
    hyper.validate()?;
    let bins = BinnedMatrix::new(data.x);
    let n = data.y.len();
    let params = GrowParams {
        criterion: Criterion::Gini,
        max_depth: usize::MAX,
        min_leaf: hp.min_samples_leaf as f64,
        n_candidates: hp.max_features.count(data.x.n_cols()),
    };
    let trees = (0..hp.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = sub_rng(seed, t as u64);
            let mut counts = vec![0u32; n];
            for _ in 0..n {
                counts[rng.random_range(0..n)] += 1;
            }
            let stats: Vec<Stats> = counts
                .iter()
                .zip(data.y)
                .map(|(&c, &y)| Stats {
                    w: c as f64,
                    s1: if y { c as f64 } else { 0.0 },
                    s2: 0.0,
                })
                .collect();
            let mut rows: Vec<u32> = (0..n as u32).filter(|&i| counts[i as usize] > 0).collect();
            grow(&bins, &mut rows, &stats, &params, &mut rng)
        })
        .collect();
    Ok(TrainedModel::new(
        data,
        hyper,
        seed,
        Vec::new(),
        ModelParams::Forest { trees },
    ))
}
