//! Runs the full audit (ingest, label, features, tune, train, report, sweep)
//! on a synthetic population and prints the combined report.
//!
//! ```text
//! cargo run --release --example end_to_end_audit -- [out_dir]
//! ```

use ltu_profiling::models::{
    GbmParams, HyperParams, MaxFeatures, Method, Penalty, PlrParams, RfParams,
};
use ltu_profiling::pipeline::{self, DataSource, MethodConfig, RunConfig};
use ltu_profiling::synth::SynthConfig;

fn main() -> ltu_profiling::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "audit-example".into());
    let cfg = RunConfig {
        data: DataSource::Synthetic(SynthConfig {
            n_persons: 8000,
            calibration_persons: 4000,
            seed: 6,
            ..SynthConfig::default()
        }),
        per_year_sample: 1000,
        methods: vec![
            MethodConfig::default_grid(Method::Lr),
            MethodConfig {
                method: Method::Plr,
                grid: Some(vec![
                    HyperParams::Plr(PlrParams {
                        penalty: Penalty::L1,
                        c: 0.01,
                    }),
                    HyperParams::Plr(PlrParams {
                        penalty: Penalty::L1,
                        c: 0.1,
                    }),
                ]),
            },
            MethodConfig {
                method: Method::Rf,
                grid: Some(vec![HyperParams::Rf(RfParams {
                    max_features: MaxFeatures::Sqrt,
                    min_samples_leaf: 5,
                    n_estimators: 100,
                })]),
            },
            MethodConfig {
                method: Method::Gbm,
                grid: Some(vec![HyperParams::Gbm(GbmParams {
                    max_depth: 3,
                    max_features: MaxFeatures::Sqrt,
                    n_estimators: 250,
                    learning_rate: 0.05,
                    subsample: 0.8,
                })]),
            },
        ],
        allow_off_grid: true,
        seed: Some(1),
        output_dir: out.into(),
        ..RunConfig::default()
    };
    let report = pipeline::run(&cfg)?;
    println!(
        "config {}  seed {}",
        report.provenance.config_hash, report.provenance.seed
    );
    println!(
        "model       policy  training    ROC-AUC  precision  recall  SPD non-German  consistency"
    );
    let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
    for r in &report.rows {
        println!(
            "{:<11} {:<7} {:<11} {:<8} {:<10} {:<7} {:<15} {}",
            r.model,
            r.policy,
            r.training_data,
            f(r.roc_auc),
            f(r.precision),
            f(r.recall),
            f(r.spd_nonger),
            f(r.consistency)
        );
    }
    println!("\nbundle written to {}", cfg.output_dir.display());
    Ok(())
}
