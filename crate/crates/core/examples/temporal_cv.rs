//! Expanding-window cross-validation over a PLR grid: each fold trains on the
//! years before its test year, and the cell with the best mean AUC wins.

use ltu_profiling::cv::{grid_search, make_folds, subsample_per_year, write_grid_report, Dataset};
use ltu_profiling::episode_store::{build_spells, CensorWindow, DEFAULT_GAP_TOLERANCE_DAYS};
use ltu_profiling::features::{EpisodeTable, FeatureBuilder, FeatureConfig};
use ltu_profiling::models::{HyperParams, Method, Penalty, PlrParams};
use ltu_profiling::synth::{self, SynthConfig};

fn main() -> ltu_profiling::Result<()> {
    let cfg = SynthConfig {
        n_persons: 5000,
        calibration_persons: 3000,
        seed: 3,
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
    let data = history.select(&subsample_per_year(&history.years, 600, 1)?);
    let folds = make_folds(&data.years, 2010, 2015)?;
    for f in &folds {
        println!("fit {:?} -> test {}", f.fit_years, f.test_year);
    }

    let grid: Vec<HyperParams> = [Penalty::L1, Penalty::L2]
        .into_iter()
        .flat_map(|penalty| {
            [0.001, 0.01, 0.1, 1.0].map(|c| HyperParams::Plr(PlrParams { penalty, c }))
        })
        .collect();
    let search = grid_search(Method::Plr, &grid, &data, &folds, 1)?;
    println!("\nselected {}\n", search.best.label());
    write_grid_report(std::io::stdout().lock(), &[search])?;
    Ok(())
}
