//! Generates a calibrated synthetic record corpus and prints its summary.
//!
//! ```text
//! cargo run --release --example synthesize_population -- [n_persons] [out_dir]
//! ```

use ltu_profiling::synth::{self, SynthConfig};

fn main() -> ltu_profiling::Result<()> {
    let mut args = std::env::args().skip(1);
    let n_persons = args
        .next()
        .map_or(5000, |s| s.parse().expect("n_persons is a number"));
    let cfg = SynthConfig {
        n_persons,
        calibration_persons: n_persons.min(5000),
        seed: 42,
        ..SynthConfig::default()
    };
    let data = synth::generate(&cfg)?;
    let s = &data.summary;
    println!(
        "{} persons, {} records, {} window episodes, LTU rate {:.3} (target {}), intercept {:.3}",
        s.n_persons, s.n_records, s.episodes, s.ltu_rate, cfg.target_ltu_rate, s.intercept
    );
    println!("year  episodes  ltu    female  non_german  ng_male  ng_female");
    for y in &s.by_year {
        println!(
            "{}  {:>8}  {:.3}  {:.3}   {:.3}       {:.3}    {:.3}",
            y.year,
            y.episodes,
            y.ltu_rate,
            y.female,
            y.non_german,
            y.non_german_male,
            y.non_german_female
        );
    }
    if let Some(dir) = args.next() {
        synth::write_dataset(dir.as_ref(), &data)?;
        println!("corpus written to {dir}");
    }
    Ok(())
}
