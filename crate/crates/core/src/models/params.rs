use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "LR")]
    Lr,
    #[serde(rename = "PLR")]
    Plr,
    #[serde(rename = "RF")]
    Rf,
    #[serde(rename = "GBM")]
    Gbm,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Lr, Method::Plr, Method::Rf, Method::Gbm];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Lr => "LR",
            Method::Plr => "PLR",
            Method::Rf => "RF",
            Method::Gbm => "GBM",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    L1,
    L2,
}

impl Penalty {
    pub fn as_str(self) -> &'static str {
        match self {
            Penalty::L1 => "l1",
            Penalty::L2 => "l2",
        }
    }
}

/// Number of candidate features drawn at each split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    Log2,
    /// Every feature; not part of the tuning grid.
    All,
}

impl MaxFeatures {
    pub fn as_str(self) -> &'static str {
        match self {
            MaxFeatures::Sqrt => "sqrt",
            MaxFeatures::Log2 => "log2",
            MaxFeatures::All => "all",
        }
    }

    pub fn count(self, n_features: usize) -> usize {
        let p = n_features as f64;
        let m = match self {
            MaxFeatures::Sqrt => p.sqrt().floor() as usize,
            MaxFeatures::Log2 => p.log2().floor() as usize,
            MaxFeatures::All => n_features,
        };
        m.clamp(1, n_features.max(1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlrParams {
    pub penalty: Penalty,
    /// Inverse penalty strength.
    pub c: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RfParams {
    pub max_features: MaxFeatures,
    pub min_samples_leaf: usize,
    pub n_estimators: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbmParams {
    pub max_depth: usize,
    pub max_features: MaxFeatures,
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub subsample: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method")]
pub enum HyperParams {
    #[serde(rename = "LR")]
    Lr,
    #[serde(rename = "PLR")]
    Plr(PlrParams),
    #[serde(rename = "RF")]
    Rf(RfParams),
    #[serde(rename = "GBM")]
    Gbm(GbmParams),
}

pub const PLR_PENALTIES: [Penalty; 2] = [Penalty::L1, Penalty::L2];
pub const PLR_C: [f64; 7] = [0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0];
pub const RF_MAX_FEATURES: [MaxFeatures; 2] = [MaxFeatures::Sqrt, MaxFeatures::Log2];
pub const RF_MIN_SAMPLES_LEAF: [usize; 3] = [1, 5, 10];
pub const RF_N_ESTIMATORS: [usize; 2] = [500, 750];
pub const GBM_MAX_DEPTH: [usize; 3] = [3, 5, 7];
pub const GBM_MAX_FEATURES: [MaxFeatures; 2] = [MaxFeatures::Sqrt, MaxFeatures::Log2];
pub const GBM_N_ESTIMATORS: [usize; 3] = [250, 500, 750];
pub const GBM_LEARNING_RATE: [f64; 3] = [0.01, 0.025, 0.05];
pub const GBM_SUBSAMPLE: [f64; 2] = [0.6, 0.8];

impl HyperParams {
    pub fn method(&self) -> Method {
        match self {
            HyperParams::Lr => Method::Lr,
            HyperParams::Plr(_) => Method::Plr,
            HyperParams::Rf(_) => Method::Rf,
            HyperParams::Gbm(_) => Method::Gbm,
        }
    }

    /// The full tuning grid of `method` in canonical order: nested loops over the
    /// fields in declaration order, first field outermost. LR has no grid.
    pub fn grid(method: Method) -> Vec<HyperParams> {
        let mut out = Vec::new();
        match method {
            Method::Lr => {}
            Method::Plr => {
                for penalty in PLR_PENALTIES {
                    for c in PLR_C {
                        out.push(HyperParams::Plr(PlrParams { penalty, c }));
                    }
                }
            }
            Method::Rf => {
                for max_features in RF_MAX_FEATURES {
                    for min_samples_leaf in RF_MIN_SAMPLES_LEAF {
                        for n_estimators in RF_N_ESTIMATORS {
                            out.push(HyperParams::Rf(RfParams {
                                max_features,
                                min_samples_leaf,
                                n_estimators,
                            }));
                        }
                    }
                }
            }
            Method::Gbm => {
                for max_depth in GBM_MAX_DEPTH {
                    for max_features in GBM_MAX_FEATURES {
                        for n_estimators in GBM_N_ESTIMATORS {
                            for learning_rate in GBM_LEARNING_RATE {
                                for subsample in GBM_SUBSAMPLE {
                                    out.push(HyperParams::Gbm(GbmParams {
                                        max_depth,
                                        max_features,
                                        n_estimators,
                                        learning_rate,
                                        subsample,
                                    }));
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Structural validity, independent of the tuning grid.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match self {
            HyperParams::Lr => Ok(()),
            HyperParams::Plr(p) => {
                if !(p.c > 0.0) || !p.c.is_finite() {
                    return bad(format!("PLR c must be positive and finite, got {}", p.c));
                }
                Ok(())
            }
            HyperParams::Rf(p) => {
                if p.n_estimators == 0 {
                    return bad("RF needs at least one tree".into());
                }
                if p.min_samples_leaf == 0 {
                    return bad("RF min_samples_leaf must be at least 1".into());
                }
                Ok(())
            }
            HyperParams::Gbm(p) => {
                if !(p.learning_rate > 0.0) || !p.learning_rate.is_finite() {
                    return bad(format!(
                        "GBM learning_rate must be positive, got {}",
                        p.learning_rate
                    ));
                }
                if !(p.subsample > 0.0 && p.subsample <= 1.0) {
                    return bad(format!(
                        "GBM subsample must be in (0, 1], got {}",
                        p.subsample
                    ));
                }
                if p.max_depth == 0 {
                    return bad("GBM max_depth must be at least 1".into());
                }
                Ok(())
            }
        }
    }

    pub fn is_on_grid(&self) -> bool {
        match self {
            HyperParams::Lr => true,
            HyperParams::Plr(p) => PLR_C.contains(&p.c),
            HyperParams::Rf(p) => {
                RF_MAX_FEATURES.contains(&p.max_features)
                    && RF_MIN_SAMPLES_LEAF.contains(&p.min_samples_leaf)
                    && RF_N_ESTIMATORS.contains(&p.n_estimators)
            }
            HyperParams::Gbm(p) => {
                GBM_MAX_DEPTH.contains(&p.max_depth)
                    && GBM_MAX_FEATURES.contains(&p.max_features)
                    && GBM_N_ESTIMATORS.contains(&p.n_estimators)
                    && GBM_LEARNING_RATE.contains(&p.learning_rate)
                    && GBM_SUBSAMPLE.contains(&p.subsample)
            }
        }
    }

    /// Validates and, unless `allow_off_grid`, requires grid membership.
    pub fn check(&self, allow_off_grid: bool) -> Result<()> {
        self.validate()?;
        if !allow_off_grid && !self.is_on_grid() {
            return Err(Error::Config(format!(
                "{} is outside the tuning grid; set allow_off_grid to use it",
                self.label()
            )));
        }
        Ok(())
    }

    /// Field names and values, in canonical order, for report columns.
    pub fn fields(&self) -> Vec<(&'static str, String)> {
        match self {
            HyperParams::Lr => Vec::new(),
            HyperParams::Plr(p) => vec![
                ("penalty", p.penalty.as_str().into()),
                ("c", p.c.to_string()),
            ],
            HyperParams::Rf(p) => vec![
                ("max_features", p.max_features.as_str().into()),
                ("min_samples_leaf", p.min_samples_leaf.to_string()),
                ("n_estimators", p.n_estimators.to_string()),
            ],
            HyperParams::Gbm(p) => vec![
                ("max_depth", p.max_depth.to_string()),
                ("max_features", p.max_features.as_str().into()),
                ("n_estimators", p.n_estimators.to_string()),
                ("learning_rate", p.learning_rate.to_string()),
                ("subsample", p.subsample.to_string()),
            ],
        }
    }

    /// Compact `key=value` description, e.g. `PLR(penalty=l1;c=0.1)`.
    pub fn label(&self) -> String {
        let fields: Vec<String> = self
            .fields()
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        if fields.is_empty() {
            self.method().to_string()
        } else {
            format!("{}({})", self.method(), fields.join(";"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        assert_eq!(HyperParams::grid(Method::Lr).len(), 0);
        assert_eq!(HyperParams::grid(Method::Plr).len(), 14);
        assert_eq!(HyperParams::grid(Method::Rf).len(), 12);
        assert_eq!(HyperParams::grid(Method::Gbm).len(), 108);
        for m in Method::ALL {
            assert!(HyperParams::grid(m).iter().all(|h| h.check(false).is_ok()));
        }
    }

    #[test]
    fn off_grid_needs_override() {
        let hp = HyperParams::Plr(PlrParams {
            penalty: Penalty::L1,
            c: 3.0,
        });
        assert!(hp.check(false).is_err());
        assert!(hp.check(true).is_ok());
        let bad = HyperParams::Plr(PlrParams {
            penalty: Penalty::L1,
            c: 0.0,
        });
        assert!(bad.check(true).is_err());
        let gbm = HyperParams::Gbm(GbmParams {
            max_depth: 3,
            max_features: MaxFeatures::Sqrt,
            n_estimators: 250,
            learning_rate: -0.1,
            subsample: 0.8,
        });
        assert!(gbm.check(true).is_err());
    }

    #[test]
    fn max_features_counts() {
        assert_eq!(MaxFeatures::Sqrt.count(146), 12);
        assert_eq!(MaxFeatures::Log2.count(146), 7);
        assert_eq!(MaxFeatures::Sqrt.count(2), 1);
        assert_eq!(MaxFeatures::Log2.count(1), 1);
        assert_eq!(MaxFeatures::All.count(5), 5);
    }

    #[test]
    fn json_round_trip_and_label() {
        let hp = HyperParams::grid(Method::Gbm)[5];
        let s = serde_json::to_string(&hp).unwrap();
        assert!(s.contains("\"method\":\"GBM\""));
        let back: HyperParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, hp);
        assert_eq!(
            HyperParams::grid(Method::Plr)[0].label(),
            "PLR(penalty=l1;c=0.001)"
        );
    }
}
