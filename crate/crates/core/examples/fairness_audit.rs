//! Audits GBM predictions for group and individual fairness on a synthetic
//! population where non-German job seekers without a diploma have compressed
//! careers, so their risk concentrates in the middle of the score range.

use ltu_profiling::cv::{subsample_per_year, Dataset};
use ltu_profiling::episode_store::{build_spells, CensorWindow, DEFAULT_GAP_TOLERANCE_DAYS};
use ltu_profiling::fairness::{FairnessReport, NeighborIndex, ProtectedGroup};
use ltu_profiling::features::{EpisodeTable, FeatureBuilder, FeatureConfig};
use ltu_profiling::models::{predict_risk, train, GbmParams, HyperParams, MaxFeatures};
use ltu_profiling::policy::{classify, Policy};
use ltu_profiling::synth::{self, SynthConfig};

fn main() -> ltu_profiling::Result<()> {
    let cfg = SynthConfig {
        n_persons: 10_000,
        calibration_persons: 5000,
        seed: 4,
        ..SynthConfig::default()
    }
    .with_skew(0.7);
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
    let fit = history.select(&subsample_per_year(&history.years, 1500, 1)?);
    let hp = HyperParams::Gbm(GbmParams {
        max_depth: 3,
        max_features: MaxFeatures::Sqrt,
        n_estimators: 250,
        learning_rate: 0.05,
        subsample: 0.8,
    });
    let model = train(&hp, &fit.training_set()?, 1)?;

    let eval = table.filter_years(|y| y == 2016);
    let x = eval.matrix();
    let risk = predict_risk(&model, &x, &eval.schema)?;
    let neighbors = NeighborIndex::build(&x, 5, true)?;
    let (s, high_education) = (eval.protected(), eval.high_education());

    println!("{} evaluation spells\n", eval.len());
    println!("policy  group               SPD     cSPD   consistency");
    for policy in Policy::standard() {
        let y_hat = classify(&risk, &policy)?;
        let report = FairnessReport::compute(
            "GBM",
            &policy.name,
            "2010-2015",
            &y_hat,
            &s,
            &high_education,
            &neighbors,
        )?;
        for g in ProtectedGroup::ALL {
            let r = report.group(g);
            println!(
                "{:<6}  {:<18} {:>7}  {:>7}  {:.3}",
                policy.name,
                g.as_str(),
                format!("{:+.3}", r.spd.unwrap()),
                format!("{:+.3}", r.cspd.unwrap()),
                report.consistency
            );
        }
    }
    Ok(())
}
