//! Sweeps the selected top fraction from 5% to 100% and prints precision,
//! recall and group parity at each cut-off.

use ltu_profiling::cv::{subsample_per_year, Dataset};
use ltu_profiling::episode_store::{build_spells, CensorWindow, DEFAULT_GAP_TOLERANCE_DAYS};
use ltu_profiling::features::{EpisodeTable, FeatureBuilder, FeatureConfig};
use ltu_profiling::metrics::{fraction_grid, threshold_sweep};
use ltu_profiling::models::{predict_risk, train, HyperParams, Penalty, PlrParams};
use ltu_profiling::synth::{self, SynthConfig};

fn main() -> ltu_profiling::Result<()> {
    let cfg = SynthConfig {
        n_persons: 6000,
        calibration_persons: 3000,
        seed: 5,
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
    let fit = history.select(&subsample_per_year(&history.years, 1000, 1)?);
    let model = train(
        &HyperParams::Plr(PlrParams {
            penalty: Penalty::L1,
            c: 0.1,
        }),
        &fit.training_set()?,
        1,
    )?;

    let eval = table.filter_years(|y| y == 2016);
    let risk = predict_risk(&model, &eval.matrix(), &eval.schema)?;
    let rows = threshold_sweep(
        &risk,
        &eval.labels(),
        &eval.protected(),
        &fraction_grid(0.05),
    )?;
    println!("top    threshold  precision  recall  spd_female  spd_non_german");
    for r in rows {
        println!(
            "{:>4.0}%  {:.4}     {:.3}      {:.3}   {:>+.3}      {:>+.3}",
            r.fraction * 100.0,
            r.threshold,
            r.precision,
            r.recall.unwrap(),
            r.spd[0].unwrap(),
            r.spd[1].unwrap()
        );
    }
    Ok(())
}
