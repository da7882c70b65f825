//! Expanding-window temporal cross-validation, per-year training subsamples and
//! final refits on full or restricted training histories.

use std::io::Write;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{EpisodeTable, FeatureSchema};
use crate::metrics::{roc_auc, Metric};
use crate::models::{
    predict_risk, sub_rng, train, HyperParams, Matrix, Method, TrainedModel, TrainingSet,
};

/// Feature matrix with labels and the year of each row.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub x: Matrix,
    pub y: Vec<bool>,
    pub years: Vec<i32>,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, x: Matrix, y: Vec<bool>, years: Vec<i32>) -> Result<Self> {
        if x.n_rows() != y.len() || y.len() != years.len() || x.n_cols() != schema.len() {
            return Err(Error::Invalid("dataset columns differ in length".into()));
        }
        Ok(Dataset {
            schema,
            x,
            y,
            years,
        })
    }

    pub fn from_table(table: &EpisodeTable) -> Self {
        Dataset {
            schema: table.schema.clone(),
            x: table.matrix(),
            y: table.labels(),
            years: table.row_years(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            x: self.x.select_rows(rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            years: rows.iter().map(|&i| self.years[i]).collect(),
        }
    }

    pub fn rows_where(&self, keep: impl Fn(i32) -> bool) -> Vec<usize> {
        (0..self.len()).filter(|&i| keep(self.years[i])).collect()
    }

    pub fn training_set(&self) -> Result<TrainingSet<'_>> {
        TrainingSet::new(&self.x, &self.y, &self.schema)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalFold {
    /// Contiguous, ascending.
    pub fit_years: Vec<i32>,
    pub test_year: i32,
}

/// Folds `{first → first+1}, {first..first+1 → first+2}, …, {first..last-1 → last}`.
/// Every year of the range must have rows.
pub fn make_folds(years: &[i32], first_year: i32, last_year: i32) -> Result<Vec<TemporalFold>> {
    if last_year <= first_year {
        return Err(Error::Config(format!(
            "temporal folds need at least two years, got {first_year}..={last_year}"
        )));
    }
    if let Some(missing) = (first_year..=last_year).find(|y| !years.contains(y)) {
        return Err(Error::Invalid(format!("no rows for year {missing}")));
    }
    Ok((first_year + 1..=last_year)
        .map(|test_year| TemporalFold {
            fit_years: (first_year..test_year).collect(),
            test_year,
        })
        .collect())
}

/// Uniform sample without replacement of at most `n_per_year` rows from every
/// year; years with fewer rows keep all. Returns ascending row indices. Each
/// year's draw uses its own random stream, so it does not depend on other years.
pub fn subsample_per_year(years: &[i32], n_per_year: usize, seed: u64) -> Result<Vec<usize>> {
    if n_per_year == 0 {
        return Err(Error::Config(
            "per-year sample size must be positive".into(),
        ));
    }
    let mut distinct: Vec<i32> = years.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let mut out = Vec::new();
    for year in distinct {
        let rows: Vec<usize> = (0..years.len()).filter(|&i| years[i] == year).collect();
        if rows.len() <= n_per_year {
            out.extend(rows);
        } else {
            let mut rng = sub_rng(seed, year as u64);
            out.extend(
                index::sample(&mut rng, rows.len(), n_per_year)
                    .into_iter()
                    .map(|k| rows[k]),
            );
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Fit and test rows of one fold. Fails if any fit row is not strictly before
/// the test year.
pub fn fold_rows(data: &Dataset, fold: &TemporalFold) -> Result<(Vec<usize>, Vec<usize>)> {
    let fit = data.rows_where(|y| fold.fit_years.contains(&y));
    let test = data.rows_where(|y| y == fold.test_year);
    if let Some(&i) = fit.iter().find(|&&i| data.years[i] >= fold.test_year) {
        return Err(Error::Invalid(format!(
            "temporal leakage: fit row {i} from {} in fold testing {}",
            data.years[i], fold.test_year
        )));
    }
    Ok((fit, test))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridResult {
    pub hp: HyperParams,
    /// Test-year ROC-AUC per fold; undefined for single-class test years.
    pub fold_aucs: Vec<Metric>,
    /// Mean over the defined fold values.
    pub mean_auc: Metric,
    pub selected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridSearch {
    pub method: Method,
    pub folds: Vec<TemporalFold>,
    pub results: Vec<GridResult>,
    pub best: HyperParams,
    pub warnings: Vec<String>,
}

/// Trains every grid cell on every fold and picks the cell with the highest mean
/// test AUC; ties go to the earlier cell. LR has no grid and skips the search.
pub fn grid_search(
    method: Method,
    grid: &[HyperParams],
    data: &Dataset,
    folds: &[TemporalFold],
    seed: u64,
) -> Result<GridSearch> {
    if method == Method::Lr {
        return Ok(GridSearch {
            method,
            folds: folds.to_vec(),
            results: Vec::new(),
            best: HyperParams::Lr,
            warnings: Vec::new(),
        });
    }
    if grid.is_empty() {
        return Err(Error::Config(format!("empty tuning grid for {method}")));
    }
    if let Some(hp) = grid.iter().find(|hp| hp.method() != method) {
        return Err(Error::Config(format!(
            "grid for {method} contains {}",
            hp.label()
        )));
    }
    if folds.is_empty() {
        return Err(Error::Config("grid search needs at least one fold".into()));
    }
    let mut split = Vec::with_capacity(folds.len());
    let mut warnings = Vec::new();
    for fold in folds {
        let (fit, test) = fold_rows(data, fold)?;
        if fit.is_empty() || test.is_empty() {
            return Err(Error::Invalid(format!(
                "fold testing {} has no rows",
                fold.test_year
            )));
        }
        let test_y: Vec<bool> = test.iter().map(|&i| data.y[i]).collect();
        if test_y.iter().all(|&v| v == test_y[0]) {
            warnings.push(format!(
                "test year {} has a single class; its AUC is excluded",
                fold.test_year
            ));
        }
        split.push((data.select(&fit), data.x.select_rows(&test), test_y));
    }

    let tasks: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|c| (0..folds.len()).map(move |f| (c, f)))
        .collect();
    let aucs: Vec<Metric> = tasks
        .par_iter()
        .map(|&(c, f)| {
            let (fit, test_x, test_y) = &split[f];
            let model = train(&grid[c], &fit.training_set()?, seed)?;
            let scores = predict_risk(&model, test_x, &data.schema)?;
            roc_auc(&scores, test_y)
        })
        .collect::<Result<_>>()?;

    let mut results: Vec<GridResult> = grid
        .iter()
        .enumerate()
        .map(|(c, hp)| {
            let fold_aucs = aucs[c * folds.len()..(c + 1) * folds.len()].to_vec();
            let defined: Vec<f64> = fold_aucs.iter().filter_map(|m| m.value()).collect();
            let mean_auc = if defined.is_empty() {
                Metric::Undefined("no fold with both classes")
            } else {
                Metric::Value(defined.iter().sum::<f64>() / defined.len() as f64)
            };
            GridResult {
                hp: *hp,
                fold_aucs,
                mean_auc,
                selected: false,
            }
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (c, r) in results.iter().enumerate() {
        if let Some(m) = r.mean_auc.value() {
            if best.is_none_or(|(_, b)| m > b) {
                best = Some((c, m));
            }
        }
    }
    let Some((best_idx, _)) = best else {
        return Err(Error::Invalid(format!(
            "no grid cell for {method} has a defined AUC"
        )));
    };
    results[best_idx].selected = true;
    Ok(GridSearch {
        method,
        folds: folds.to_vec(),
        best: grid[best_idx],
        results,
        warnings,
    })
}

/// Which training years a final model sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum History {
    /// Every training year.
    Full,
    /// Only the most recent training year.
    LastYearOnly,
}

impl History {
    pub const ALL: [History; 2] = [History::Full, History::LastYearOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            History::Full => "full",
            History::LastYearOnly => "last_year_only",
        }
    }
}

impl std::str::FromStr for History {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        History::ALL
            .into_iter()
            .find(|h| h.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown training history `{s}`")))
    }
}

/// Trains `hp` on all of `data` or on its latest year only.
pub fn fit_final(
    hp: &HyperParams,
    data: &Dataset,
    history: History,
    seed: u64,
) -> Result<TrainedModel> {
    let Some(&last) = data.years.iter().max() else {
        return Err(Error::Invalid("no training rows".into()));
    };
    match history {
        History::Full => train(hp, &data.training_set()?, seed),
        History::LastYearOnly => {
            let subset = data.select(&data.rows_where(|y| y == last));
            train(hp, &subset.training_set()?, seed)
        }
    }
}

/// Writes one row per grid cell: method, parameters, AUC per test year, mean,
/// and whether the cell was selected.
pub fn write_grid_report<W: Write>(output: W, searches: &[GridSearch]) -> Result<()> {
    let mut test_years: Vec<i32> = searches
        .iter()
        .flat_map(|s| s.folds.iter().map(|f| f.test_year))
        .collect();
    test_years.sort_unstable();
    test_years.dedup();
    let mut w = csv::Writer::from_writer(output);
    let mut header = vec!["method".to_string(), "params".to_string()];
    header.extend(test_years.iter().map(|y| format!("auc_{y}")));
    header.extend(["mean_auc".to_string(), "selected".to_string()]);
    w.write_record(&header)?;
    for s in searches {
        for r in &s.results {
            let params: Vec<String> =
                r.hp.fields()
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect();
            let mut rec = vec![s.method.to_string(), params.join(";")];
            for y in &test_years {
                let v = s
                    .folds
                    .iter()
                    .position(|f| f.test_year == *y)
                    .map_or_else(|| "NA".to_string(), |i| r.fold_aucs[i].to_string());
                rec.push(v);
            }
            rec.push(r.mean_auc.to_string());
            rec.push(if r.selected { "1" } else { "0" }.to_string());
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io("<grid report>", e))?;
    Ok(())
}
