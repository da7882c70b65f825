//! Small, fast run configurations shared by the integration tests.

#![allow(dead_code)]

use std::path::Path;

use ltu_profiling::models::{
    GbmParams, HyperParams, MaxFeatures, Method, Penalty, PlrParams, RfParams,
};
use ltu_profiling::pipeline::{DataSource, MethodConfig, RunConfig};
use ltu_profiling::synth::SynthConfig;

pub fn small_synth() -> SynthConfig {
    SynthConfig {
        n_persons: 2500,
        calibration_persons: 1500,
        seed: 5,
        ..SynthConfig::default()
    }
}

pub fn small_config(output_dir: &Path) -> RunConfig {
    RunConfig {
        data: DataSource::Synthetic(small_synth()),
        per_year_sample: 300,
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
                        penalty: Penalty::L2,
                        c: 0.1,
                    }),
                ]),
            },
            MethodConfig {
                method: Method::Rf,
                grid: Some(vec![HyperParams::Rf(RfParams {
                    max_features: MaxFeatures::Sqrt,
                    min_samples_leaf: 5,
                    n_estimators: 20,
                })]),
            },
            MethodConfig {
                method: Method::Gbm,
                grid: Some(vec![HyperParams::Gbm(GbmParams {
                    max_depth: 3,
                    max_features: MaxFeatures::Sqrt,
                    n_estimators: 30,
                    learning_rate: 0.05,
                    subsample: 0.8,
                })]),
            },
        ],
        allow_off_grid: true,
        seed: Some(11),
        output_dir: output_dir.to_path_buf(),
        ..RunConfig::default()
    }
}

/// Writes `cfg` as JSON next to its output directory and returns the path.
pub fn write_config(cfg: &RunConfig, path: &Path) -> std::path::PathBuf {
    let mut value = serde_json::to_value(cfg).unwrap();
    value["output_dir"] = serde_json::Value::String(cfg.output_dir.display().to_string());
    std::fs::write(path, serde_json::to_vec_pretty(&value).unwrap()).unwrap();
    path.to_path_buf()
}
