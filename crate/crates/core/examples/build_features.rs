//! Builds per-spell feature rows from a small synthetic corpus and lists the
//! feature schema by group.

use std::collections::BTreeMap;

use ltu_profiling::episode_store::{build_spells, CensorWindow, DEFAULT_GAP_TOLERANCE_DAYS};
use ltu_profiling::features::{EpisodeTable, FeatureBuilder, FeatureConfig};
use ltu_profiling::synth::{self, SynthConfig};

fn main() -> ltu_profiling::Result<()> {
    let cfg = SynthConfig {
        n_persons: 1000,
        calibration_persons: 1000,
        seed: 1,
        ..SynthConfig::default()
    };
    let data = synth::generate(&cfg)?;
    let spells = build_spells(&data.records, DEFAULT_GAP_TOLERANCE_DAYS)?;
    let window = CensorWindow::for_years(cfg.first_year, cfg.last_year, cfg.observed_until());
    let spells = window.apply(spells)?;

    let builder = FeatureBuilder::new(FeatureConfig::default())?;
    let table = EpisodeTable::new(
        builder.schema().clone(),
        builder.build_rows(&data.persons, &data.records, &spells)?,
    )?;
    println!("{} spells, {} features", table.len(), table.schema.len());

    let mut groups: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for f in &table.schema.features {
        groups
            .entry(format!("{:?}", f.group))
            .or_default()
            .push(&f.name);
    }
    for (group, names) in groups {
        println!("\n{group} ({}):", names.len());
        for chunk in names.chunks(4) {
            println!("  {}", chunk.join(", "));
        }
    }

    let row = &table.rows[0];
    println!(
        "\nfirst row: spell {} ({}), LTU {}",
        row.spell_id, row.year, row.y
    );
    for (name, v) in table
        .schema
        .names()
        .zip(&row.x)
        .filter(|(_, v)| **v != 0.0)
        .take(12)
    {
        println!("  {name} = {v:.4}");
    }
    Ok(())
}
