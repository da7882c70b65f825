//! Trains the four model families on synthetic spells from 2010-2015 and
//! scores the 2016 spells.

use ltu_profiling::cv::{subsample_per_year, Dataset};
use ltu_profiling::episode_store::{build_spells, CensorWindow, DEFAULT_GAP_TOLERANCE_DAYS};
use ltu_profiling::features::{EpisodeTable, FeatureBuilder, FeatureConfig};
use ltu_profiling::metrics::{pr_auc, roc_auc};
use ltu_profiling::models::{
    predict_risk, train, GbmParams, HyperParams, MaxFeatures, Penalty, PlrParams, RfParams,
};
use ltu_profiling::synth::{self, SynthConfig};

fn main() -> ltu_profiling::Result<()> {
    let cfg = SynthConfig {
        n_persons: 8000,
        calibration_persons: 4000,
        seed: 2,
        ..SynthConfig::default()
    };
    let data = synth::generate(&cfg)?;
    let spells = CensorWindow::for_years(2010, 2016, cfg.observed_until())
        .apply(build_spells(&data.records, DEFAULT_GAP_TOLERANCE_DAYS)?)?;
    let builder = FeatureBuilder::new(FeatureConfig::default())?;
    let table = EpisodeTable::new(
        builder.schema().clone(),
        builder.build_rows(&data.persons, &data.records, &spells)?,
    )?;

    let all = Dataset::from_table(&table);
    let history = all.select(&all.rows_where(|y| y < 2016));
    let fit = history.select(&subsample_per_year(&history.years, 1000, 7)?);
    let eval = all.select(&all.rows_where(|y| y == 2016));
    println!(
        "{} training rows, {} evaluation rows",
        fit.len(),
        eval.len()
    );

    let models = [
        HyperParams::Lr,
        HyperParams::Plr(PlrParams {
            penalty: Penalty::L1,
            c: 0.1,
        }),
        HyperParams::Rf(RfParams {
            max_features: MaxFeatures::Sqrt,
            min_samples_leaf: 5,
            n_estimators: 200,
        }),
        HyperParams::Gbm(GbmParams {
            max_depth: 3,
            max_features: MaxFeatures::Sqrt,
            n_estimators: 250,
            learning_rate: 0.05,
            subsample: 0.8,
        }),
    ];
    for hp in models {
        let model = train(&hp, &fit.training_set()?, 7)?;
        let risk = predict_risk(&model, &eval.x, &eval.schema)?;
        println!(
            "{:<4} ROC-AUC {:.3}  PR-AUC {:.3}  {}",
            model.method.as_str(),
            roc_auc(&risk, &eval.y)?.unwrap(),
            pr_auc(&risk, &eval.y)?.unwrap(),
            model.warnings.join("; ")
        );
    }
    Ok(())
}
