//! Config-driven audit pipeline.
//!
//! Stages hand off through files in one output directory:
//!
//! | stage      | reads                          | writes                                   |
//! |------------|--------------------------------|------------------------------------------|
//! | `ingest`   | synthetic config or CSV inputs | `data/*`                                 |
//! | `label`    | `data/`                        | `spells.csv`                             |
//! | `features` | `data/`, `spells.csv`          | `schema.json`, `features.csv`, `prevalence.csv` |
//! | `tune`     | features                       | `grid_report.csv`, `selected.json`       |
//! | `train`    | features, `selected.json`      | `models/*.json`                          |
//! | `report`   | features, models               | scores, classifications, performance, fairness, histograms, report |
//! | `sweep`    | features, models               | `sweeps.csv`                             |
//!
//! [`run`] executes all stages into a staging directory and moves it into place
//! only when every stage succeeded.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cv::{
    fit_final, grid_search, make_folds, subsample_per_year, Dataset, GridSearch, History,
};
use crate::episode_store::{
    assemble_persons, build_spells, read_observations, read_persons, read_records, read_spells,
    write_observations, write_persons, write_records, write_spells, CensorWindow, PersonStatic,
    RawRecord, DEFAULT_GAP_TOLERANCE_DAYS, MOVES_HEADER, N_EDUCATION_LEVELS, N_SCHOOL_LEVELS,
    N_STATES, OBSERVATION_HEADER,
};
use crate::error::{Error, Result, StageExt};
use crate::fairness::{
    group_prevalence_table, write_prevalence, FairnessReport, NeighborIndex, ProtectedGroup,
    OBSERVED_OUTCOME,
};
use crate::features::{
    read_rows, read_schema, write_rows, write_schema, EpisodeTable, FeatureBuilder, FeatureConfig,
    ProtectedAttributes,
};
use crate::metrics::{fraction_grid, threshold_sweep, write_sweep, Metric, PerfReport};
use crate::models::{predict_risk, HyperParams, Method, TrainedModel};
use crate::policy::{classify, Policy};
use crate::synth::{self, SynthConfig};

pub const DATA_DIR: &str = "data";
pub const INGEST_SUMMARY_FILE: &str = "ingest_summary.json";
pub const SPELLS_FILE: &str = "spells.csv";
pub const SCHEMA_FILE: &str = "schema.json";
pub const FEATURES_FILE: &str = "features.csv";
pub const PREVALENCE_FILE: &str = "prevalence.csv";
pub const GRID_REPORT_FILE: &str = "grid_report.csv";
pub const SELECTED_FILE: &str = "selected.json";
pub const MODELS_DIR: &str = "models";
pub const SCORES_FILE: &str = "scores.csv";
pub const CLASSIFICATIONS_FILE: &str = "classifications.csv";
pub const PERFORMANCE_FILE: &str = "performance.csv";
pub const FAIRNESS_FILE: &str = "fairness.csv";
pub const HISTOGRAMS_FILE: &str = "histograms.csv";
pub const REPORT_CSV_FILE: &str = "report.csv";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const SWEEPS_FILE: &str = "sweeps.csv";
pub const RUN_CONFIG_FILE: &str = "run_config.json";

/// Where the records come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SynthConfig),
    Files {
        records: PathBuf,
        persons: PathBuf,
        #[serde(default)]
        education: Option<PathBuf>,
        #[serde(default)]
        school: Option<PathBuf>,
        #[serde(default)]
        moves: Option<PathBuf>,
        /// Drop malformed rows instead of failing.
        #[serde(default)]
        lenient: bool,
    },
}

/// A method and its tuning grid; no grid means the full default grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<HyperParams>>,
}

impl MethodConfig {
    pub fn default_grid(method: Method) -> Self {
        MethodConfig { method, grid: None }
    }

    pub fn grid(&self) -> Vec<HyperParams> {
        match (&self.grid, self.method) {
            (_, Method::Lr) => vec![HyperParams::Lr],
            (Some(g), _) => g.clone(),
            (None, m) => HyperParams::grid(m),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: DataSource,
    /// First year of the sampling window; training covers `first_year..eval_year`.
    pub first_year: i32,
    pub eval_year: i32,
    pub per_year_sample: usize,
    pub methods: Vec<MethodConfig>,
    pub histories: Vec<History>,
    pub policies: Vec<Policy>,
    pub features: FeatureConfig,
    pub gap_tolerance_days: i64,
    pub n_neighbors: usize,
    pub sweep_step: f64,
    pub histogram_bins: usize,
    pub allow_off_grid: bool,
    pub seed: Option<u64>,
    /// Not part of the run's identity: excluded from the config hash and from
    /// the copy stored with the outputs.
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataSource::Synthetic(SynthConfig::default()),
            first_year: 2010,
            eval_year: 2016,
            per_year_sample: 20_000,
            methods: Method::ALL
                .into_iter()
                .map(MethodConfig::default_grid)
                .collect(),
            histories: History::ALL.to_vec(),
            policies: Policy::standard(),
            features: FeatureConfig::default(),
            gap_tolerance_days: DEFAULT_GAP_TOLERANCE_DAYS,
            n_neighbors: 5,
            sweep_step: 0.01,
            histogram_bins: 20,
            allow_off_grid: false,
            seed: None,
            output_dir: PathBuf::from("audit-out"),
        }
    }
}

impl RunConfig {
    pub fn read_json(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("a seed is required".into()))
    }

    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        if self.eval_year <= self.first_year + 1 {
            return Err(Error::Config(format!(
                "evaluation year {} leaves fewer than two training years after {}",
                self.eval_year, self.first_year
            )));
        }
        if self.per_year_sample == 0 {
            return Err(Error::Config("per_year_sample must be positive".into()));
        }
        if self.methods.is_empty() || self.histories.is_empty() || self.policies.is_empty() {
            return Err(Error::Config(
                "methods, histories and policies must be non-empty".into(),
            ));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].iter().any(|o| o.method == m.method) {
                return Err(Error::Config(format!("method {} listed twice", m.method)));
            }
            let grid = m.grid();
            if grid.is_empty() {
                return Err(Error::Config(format!("empty grid for {}", m.method)));
            }
            for hp in &grid {
                if hp.method() != m.method {
                    return Err(Error::Config(format!(
                        "grid for {} contains {}",
                        m.method,
                        hp.label()
                    )));
                }
                hp.check(self.allow_off_grid)?;
            }
        }
        for p in &self.policies {
            p.validate()?;
        }
        if self.n_neighbors == 0 {
            return Err(Error::Config("n_neighbors must be positive".into()));
        }
        if !(self.sweep_step > 0.0 && self.sweep_step <= 1.0) {
            return Err(Error::Config("sweep_step must lie in (0, 1]".into()));
        }
        if self.histogram_bins == 0 {
            return Err(Error::Config("histogram_bins must be positive".into()));
        }
        if let DataSource::Synthetic(s) = &self.data {
            if s.first_year > self.first_year || s.last_year < self.eval_year {
                return Err(Error::Config(format!(
                    "synthetic years {}..={} do not cover {}..={}",
                    s.first_year, s.last_year, self.first_year, self.eval_year
                )));
            }
        }
        self.features.validate()
    }

    /// SHA-256 of the canonical JSON form, output directory excluded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    fn training_years(&self) -> std::ops::Range<i32> {
        self.first_year..self.eval_year
    }

    /// Label of the training data a history refers to, e.g. `2010-2015` or `2015`.
    pub fn training_label(&self, history: History) -> String {
        let last = self.eval_year - 1;
        match history {
            History::Full => format!("{}-{last}", self.first_year),
            History::LastYearOnly => last.to_string(),
        }
    }
}

/// Identifies the run on every report row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn of(cfg: &RunConfig) -> Result<Self> {
        Ok(Provenance {
            config_hash: cfg.hash(),
            seed: cfg.seed()?,
        })
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes `bytes` to `path`, creating parent directories.
fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Prepends `config_hash` and `seed` columns to every row of a CSV document.
fn with_provenance(csv_doc: &[u8], prov: &Provenance) -> Result<Vec<u8>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(csv_doc);
    let mut w = csv::Writer::from_writer(Vec::new());
    let seed = prov.seed.to_string();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let lead: [&str; 2] = if i == 0 {
            ["config_hash", "seed"]
        } else {
            [&prov.config_hash, &seed]
        };
        w.write_record(lead.iter().copied().chain(rec.iter()))?;
    }
    w.into_inner()
        .map_err(|e| Error::io("<report buffer>", e.into_error()))
}

/// Tracks files a stage writes so they can be removed if the stage fails.
struct Outputs {
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new() -> Self {
        Outputs {
            written: Vec::new(),
        }
    }

    fn write(&mut self, path: PathBuf, bytes: &[u8]) -> Result<()> {
        self.written.push(path.clone());
        write_file(&path, bytes)
    }

    fn cleanup(&self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
    }
}

/// Runs a stage body, tagging its errors and removing its partial outputs on failure.
fn stage<T>(name: &'static str, body: impl FnOnce(&mut Outputs) -> Result<T>) -> Result<T> {
    let mut out = Outputs::new();
    let result = body(&mut out).stage(name);
    if result.is_err() {
        out.cleanup();
    }
    result
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub n_persons: usize,
    pub n_records: usize,
    pub rejected_rows: usize,
    /// Last day covered by the records.
    pub observed_until: NaiveDate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<synth::SynthSummary>,
}

fn data_path(dir: &Path, file: &str) -> PathBuf {
    dir.join(DATA_DIR).join(file)
}

fn read_strict<T>(
    ingested: crate::episode_store::Ingested<T>,
    path: &Path,
    lenient: bool,
    rejected: &mut usize,
) -> Result<Vec<T>> {
    if lenient {
        for r in &ingested.rejections {
            log::warn!("{}: line {} dropped: {}", path.display(), r.line, r.reason);
        }
        *rejected += ingested.rejections.len();
        Ok(ingested.rows)
    } else {
        ingested.into_strict().map_err(|e| match e {
            Error::Line { line, message } => {
                Error::Invalid(format!("{}:{line}: {message}", path.display()))
            }
            other => other,
        })
    }
}

fn load_files(
    records: &Path,
    persons: &Path,
    education: Option<&Path>,
    school: Option<&Path>,
    moves: Option<&Path>,
    lenient: bool,
) -> Result<(Vec<PersonStatic>, Vec<RawRecord>, usize)> {
    let mut rejected = 0;
    let recs = read_strict(
        read_records(open(records)?)?,
        records,
        lenient,
        &mut rejected,
    )?;
    let rows = read_strict(
        read_persons(open(persons)?)?,
        persons,
        lenient,
        &mut rejected,
    )?;
    let mut obs = |path: Option<&Path>, header: &str, levels: u8| -> Result<Vec<_>> {
        match path {
            Some(p) => read_strict(
                read_observations(open(p)?, header, levels)?,
                p,
                lenient,
                &mut rejected,
            ),
            None => Ok(Vec::new()),
        }
    };
    let education = obs(education, OBSERVATION_HEADER, N_EDUCATION_LEVELS)?;
    let school = obs(school, OBSERVATION_HEADER, N_SCHOOL_LEVELS)?;
    let moves = obs(moves, MOVES_HEADER, N_STATES)?;
    let persons = assemble_persons(rows, education, school, moves)?;
    Ok((persons, recs, rejected))
}

fn write_corpus(
    out: &mut Outputs,
    dir: &Path,
    persons: &[PersonStatic],
    records: &[RawRecord],
) -> Result<()> {
    out.write(
        data_path(dir, synth::RECORDS_FILE),
        &csv_bytes(|b| write_records(b, records))?,
    )?;
    out.write(
        data_path(dir, synth::PERSONS_FILE),
        &csv_bytes(|b| write_persons(b, persons))?,
    )?;
    let obs = |pick: fn(&PersonStatic) -> &Vec<(NaiveDate, u8)>| {
        persons
            .iter()
            .flat_map(move |p| pick(p).iter().map(move |(d, v)| (&p.person_id, *d, *v)))
    };
    out.write(
        data_path(dir, synth::EDUCATION_FILE),
        &csv_bytes(|b| write_observations(b, OBSERVATION_HEADER, obs(|p| &p.education)))?,
    )?;
    out.write(
        data_path(dir, synth::SCHOOL_FILE),
        &csv_bytes(|b| write_observations(b, OBSERVATION_HEADER, obs(|p| &p.school)))?,
    )?;
    out.write(
        data_path(dir, synth::MOVES_FILE),
        &csv_bytes(|b| write_observations(b, MOVES_HEADER, obs(|p| &p.moves)))?,
    )?;
    Ok(())
}

/// Generates or reads the record corpus and stores a normalized copy under `data/`.
pub fn ingest(cfg: &RunConfig, dir: &Path) -> Result<IngestSummary> {
    stage("ingest", |out| {
        cfg.validate()?;
        let (persons, records, rejected, observed_until, synthetic) = match &cfg.data {
            DataSource::Synthetic(s) => {
                let data = synth::generate(s)?;
                (
                    data.persons,
                    data.records,
                    0,
                    s.observed_until(),
                    Some(data.summary),
                )
            }
            DataSource::Files {
                records,
                persons,
                education,
                school,
                moves,
                lenient,
            } => {
                let (p, r, rejected) = load_files(
                    records,
                    persons,
                    education.as_deref(),
                    school.as_deref(),
                    moves.as_deref(),
                    *lenient,
                )?;
                let until = r.iter().map(|r| r.end_date).max().ok_or_else(|| {
                    Error::Invalid(format!("{} holds no records", records.display()))
                })?;
                (p, r, rejected, until, None)
            }
        };
        write_corpus(out, dir, &persons, &records)?;
        let summary = IngestSummary {
            n_persons: persons.len(),
            n_records: records.len(),
            rejected_rows: rejected,
            observed_until,
            synthetic,
        };
        out.write(
            data_path(dir, INGEST_SUMMARY_FILE),
            &serde_json::to_vec_pretty(&summary)?,
        )?;
        Ok(summary)
    })
}

fn read_ingest_summary(dir: &Path) -> Result<IngestSummary> {
    Ok(serde_json::from_reader(open(&data_path(
        dir,
        INGEST_SUMMARY_FILE,
    ))?)?)
}

fn read_corpus(dir: &Path) -> Result<(Vec<PersonStatic>, Vec<RawRecord>)> {
    let (persons, records, _) = load_files(
        &data_path(dir, synth::RECORDS_FILE),
        &data_path(dir, synth::PERSONS_FILE),
        Some(&data_path(dir, synth::EDUCATION_FILE)),
        Some(&data_path(dir, synth::SCHOOL_FILE)),
        Some(&data_path(dir, synth::MOVES_FILE)),
        false,
    )?;
    Ok((persons, records))
}

/// Merges records into spells and keeps the labeled spells of the window.
pub fn label(cfg: &RunConfig, dir: &Path) -> Result<usize> {
    stage("label", |out| {
        cfg.validate()?;
        let summary = read_ingest_summary(dir)?;
        let path = data_path(dir, synth::RECORDS_FILE);
        let records = read_records(open(&path)?)?.into_strict()?;
        let spells = build_spells(&records, cfg.gap_tolerance_days)?;
        let window = CensorWindow::for_years(cfg.first_year, cfg.eval_year, summary.observed_until);
        let kept = window.apply(spells)?;
        out.write(
            dir.join(SPELLS_FILE),
            &csv_bytes(|b| write_spells(b, &kept))?,
        )?;
        Ok(kept.len())
    })
}

/// Builds one feature row per spell, plus the observed group-prevalence table.
pub fn features(cfg: &RunConfig, dir: &Path) -> Result<usize> {
    stage("features", |out| {
        cfg.validate()?;
        let (persons, records) = read_corpus(dir)?;
        let spells = read_spells(open(&dir.join(SPELLS_FILE))?)?;
        let builder = FeatureBuilder::new(cfg.features.clone())?;
        let rows = builder.build_rows(&persons, &records, &spells)?;
        let table = EpisodeTable::new(builder.schema().clone(), rows)?;
        out.write(
            dir.join(SCHEMA_FILE),
            &csv_bytes(|b| write_schema(b, &table.schema))?,
        )?;
        out.write(
            dir.join(FEATURES_FILE),
            &csv_bytes(|b| write_rows(b, &table.schema, &table.rows))?,
        )?;
        let prevalence =
            group_prevalence_table(&table.row_years(), &table.protected(), &table.labels())?;
        let prov = Provenance::of(cfg)?;
        out.write(
            dir.join(PREVALENCE_FILE),
            &with_provenance(&csv_bytes(|b| write_prevalence(b, &prevalence))?, &prov)?,
        )?;
        Ok(table.len())
    })
}

fn read_table(dir: &Path) -> Result<EpisodeTable> {
    let schema = read_schema(open(&dir.join(SCHEMA_FILE))?)?;
    let rows = read_rows(open(&dir.join(FEATURES_FILE))?, &schema)?;
    EpisodeTable::new(schema, rows)
}

/// Training rows of the window, subsampled per year.
fn training_data(cfg: &RunConfig, table: &EpisodeTable) -> Result<Dataset> {
    let years = cfg.training_years();
    let train = table.filter_years(|y| years.contains(&y));
    let data = Dataset::from_table(&train);
    let keep = subsample_per_year(&data.years, cfg.per_year_sample, cfg.seed()?)?;
    Ok(data.select(&keep))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub method: Method,
    pub hyper_params: HyperParams,
}

/// Temporal cross-validation over each method's grid.
pub fn tune(cfg: &RunConfig, dir: &Path) -> Result<Vec<GridSearch>> {
    stage("tune", |out| {
        cfg.validate()?;
        let seed = cfg.seed()?;
        let table = read_table(dir)?;
        let data = training_data(cfg, &table)?;
        let folds = make_folds(&data.years, cfg.first_year, cfg.eval_year - 1)?;
        let mut searches = Vec::new();
        for m in &cfg.methods {
            log::info!("tuning {}", m.method);
            let search = grid_search(m.method, &m.grid(), &data, &folds, seed)?;
            for w in &search.warnings {
                log::warn!("{}: {w}", m.method);
            }
            searches.push(search);
        }
        let prov = Provenance::of(cfg)?;
        out.write(
            dir.join(GRID_REPORT_FILE),
            &with_provenance(
                &csv_bytes(|b| crate::cv::write_grid_report(b, &searches))?,
                &prov,
            )?,
        )?;
        let selected: Vec<Selection> = searches
            .iter()
            .map(|s| Selection {
                method: s.method,
                hyper_params: s.best,
            })
            .collect();
        out.write(
            dir.join(SELECTED_FILE),
            &serde_json::to_vec_pretty(&selected)?,
        )?;
        Ok(searches)
    })
}

pub fn model_path(dir: &Path, method: Method, history: History) -> PathBuf {
    dir.join(MODELS_DIR)
        .join(format!("{method}_{}.json", history.as_str()))
}

fn read_selection(cfg: &RunConfig, dir: &Path) -> Result<Vec<Selection>> {
    let selected: Vec<Selection> = serde_json::from_reader(open(&dir.join(SELECTED_FILE))?)?;
    cfg.methods
        .iter()
        .map(|m| {
            selected
                .iter()
                .find(|s| s.method == m.method)
                .cloned()
                .ok_or_else(|| Error::Invalid(format!("no tuned parameters for {}", m.method)))
        })
        .collect()
}

/// Re-trains each method's selected parameters on every training history.
pub fn train(cfg: &RunConfig, dir: &Path) -> Result<usize> {
    stage("train", |out| {
        cfg.validate()?;
        let seed = cfg.seed()?;
        let table = read_table(dir)?;
        let data = training_data(cfg, &table)?;
        let mut n = 0;
        for sel in read_selection(cfg, dir)? {
            for &history in &cfg.histories {
                log::info!(
                    "training {} on {}",
                    sel.hyper_params.label(),
                    history.as_str()
                );
                let model = fit_final(&sel.hyper_params, &data, history, seed)?;
                for w in &model.warnings {
                    log::warn!("{} ({}): {w}", sel.method, history.as_str());
                }
                out.write(
                    model_path(dir, sel.method, history),
                    model.to_json()?.as_bytes(),
                )?;
                n += 1;
            }
        }
        Ok(n)
    })
}

/// Evaluation-year rows and the scores of every trained model on them.
struct Scored {
    table: EpisodeTable,
    /// `(method, history, scores)` in configuration order.
    scores: Vec<(Method, History, Vec<f64>)>,
}

fn score_eval_year(cfg: &RunConfig, dir: &Path) -> Result<Scored> {
    let table = read_table(dir)?.filter_years(|y| y == cfg.eval_year);
    if table.is_empty() {
        return Err(Error::Invalid(format!(
            "no episodes in evaluation year {}",
            cfg.eval_year
        )));
    }
    let x = table.matrix();
    let mut scores = Vec::new();
    for m in &cfg.methods {
        for &history in &cfg.histories {
            let path = model_path(dir, m.method, history);
            let model = TrainedModel::read_json(open(&path)?)?;
            if model.method != m.method {
                return Err(Error::Invalid(format!(
                    "{} holds a {} model",
                    path.display(),
                    model.method
                )));
            }
            scores.push((m.method, history, predict_risk(&model, &x, &table.schema)?));
        }
    }
    Ok(Scored { table, scores })
}

/// One row of the combined report: performance and fairness of a model under a
/// policy. Undefined metrics are empty in CSV and `null` in JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub config_hash: String,
    pub seed: u64,
    pub model: String,
    pub policy: String,
    pub training_data: String,
    pub n: usize,
    pub k: usize,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub roc_auc: Option<f64>,
    pub pr_auc: Option<f64>,
    pub spd_female: Option<f64>,
    pub spd_nonger: Option<f64>,
    pub spd_nonger_m: Option<f64>,
    pub spd_nonger_f: Option<f64>,
    pub cspd_female: Option<f64>,
    pub cspd_nonger: Option<f64>,
    pub cspd_nonger_m: Option<f64>,
    pub cspd_nonger_f: Option<f64>,
    pub consistency: Option<f64>,
}

impl ReportRow {
    fn new(
        prov: &Provenance,
        perf: Option<&PerfReport>,
        fair: &FairnessReport,
        training_data: &str,
    ) -> Self {
        let g = |grp: ProtectedGroup| fair.group(grp);
        ReportRow {
            config_hash: prov.config_hash.clone(),
            seed: prov.seed,
            model: fair.model.clone(),
            policy: fair.policy.clone(),
            training_data: training_data.into(),
            n: fair.groups[0].n_unprivileged + fair.groups[0].n_privileged,
            k: perf.map_or(0, |p| p.k),
            accuracy: perf.map(|p| p.accuracy),
            precision: perf.and_then(|p| p.precision.value()),
            recall: perf.and_then(|p| p.recall.value()),
            f1: perf.and_then(|p| p.f1.value()),
            roc_auc: perf.and_then(|p| p.roc_auc.value()),
            pr_auc: perf.and_then(|p| p.pr_auc.value()),
            spd_female: g(ProtectedGroup::Female).spd.value(),
            spd_nonger: g(ProtectedGroup::NonGerman).spd.value(),
            spd_nonger_m: g(ProtectedGroup::NonGermanMale).spd.value(),
            spd_nonger_f: g(ProtectedGroup::NonGermanFemale).spd.value(),
            cspd_female: g(ProtectedGroup::Female).cspd.value(),
            cspd_nonger: g(ProtectedGroup::NonGerman).cspd.value(),
            cspd_nonger_m: g(ProtectedGroup::NonGermanMale).cspd.value(),
            cspd_nonger_f: g(ProtectedGroup::NonGermanFemale).cspd.value(),
            consistency: Some(fair.consistency),
        }
    }
}

/// Everything the `report` stage computes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub provenance: Provenance,
    /// Observed outcome first, then model × policy × history in configuration order.
    pub rows: Vec<ReportRow>,
    pub performance: Vec<(String, String, String, PerfReport)>,
    pub fairness: Vec<(String, FairnessReport)>,
}

impl AuditReport {
    /// Row for `model` under `policy` trained on `training_data`.
    pub fn row(&self, model: &str, policy: &str, training_data: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.policy == policy && r.training_data == training_data)
    }
}

fn metric_str(m: Metric) -> String {
    m.to_string()
}

pub const PERFORMANCE_HEADER: [&str; 11] = [
    "model",
    "policy",
    "training_data",
    "n",
    "k",
    "accuracy",
    "precision",
    "recall",
    "f1",
    "roc_auc",
    "pr_auc",
];

pub const FAIRNESS_HEADER: [&str; 12] = [
    "model",
    "policy",
    "training_data",
    "spd_female",
    "spd_nonger",
    "spd_nonger_m",
    "spd_nonger_f",
    "cspd_female",
    "cspd_nonger",
    "cspd_nonger_m",
    "cspd_nonger_f",
    "consistency",
];

fn write_performance(rows: &[(String, String, String, PerfReport)]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(PERFORMANCE_HEADER)?;
    for (model, policy, training, p) in rows {
        w.write_record([
            model.clone(),
            policy.clone(),
            training.clone(),
            p.n.to_string(),
            p.k.to_string(),
            p.accuracy.to_string(),
            metric_str(p.precision),
            metric_str(p.recall),
            metric_str(p.f1),
            metric_str(p.roc_auc),
            metric_str(p.pr_auc),
        ])?;
    }
    w.into_inner()
        .map_err(|e| Error::io("<performance>", e.into_error()))
}

fn write_fairness(rows: &[(String, FairnessReport)]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(FAIRNESS_HEADER)?;
    for (training, f) in rows {
        let mut rec = vec![f.model.clone(), f.policy.clone(), training.clone()];
        rec.extend(
            ProtectedGroup::ALL
                .iter()
                .map(|&g| metric_str(f.group(g).spd)),
        );
        rec.extend(
            ProtectedGroup::ALL
                .iter()
                .map(|&g| metric_str(f.group(g).cspd)),
        );
        rec.push(f.consistency.to_string());
        w.write_record(&rec)?;
    }
    w.into_inner()
        .map_err(|e| Error::io("<fairness>", e.into_error()))
}

/// Groups the score histograms are split by.
const HISTOGRAM_GROUPS: [(&str, fn(&ProtectedAttributes) -> bool); 4] = [
    ("female", |s| s.female),
    ("male", |s| !s.female),
    ("non_german", |s| s.non_german),
    ("german", |s| !s.non_german),
];

fn write_histograms(
    cfg: &RunConfig,
    scored: &Scored,
    s: &[ProtectedAttributes],
) -> Result<Vec<u8>> {
    let bins = cfg.histogram_bins;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "model",
        "training_data",
        "group",
        "bin_lower",
        "bin_upper",
        "count",
        "share",
    ])?;
    for (method, history, scores) in &scored.scores {
        for (name, member) in HISTOGRAM_GROUPS {
            let mut counts = vec![0usize; bins];
            let mut total = 0usize;
            for (r, a) in scores.iter().zip(s) {
                if member(a) {
                    counts[((r * bins as f64) as usize).min(bins - 1)] += 1;
                    total += 1;
                }
            }
            for (b, c) in counts.iter().enumerate() {
                let share = if total > 0 {
                    Metric::Value(*c as f64 / total as f64)
                } else {
                    Metric::Undefined("empty group")
                };
                w.write_record([
                    method.to_string(),
                    cfg.training_label(*history),
                    name.to_string(),
                    (b as f64 / bins as f64).to_string(),
                    ((b + 1) as f64 / bins as f64).to_string(),
                    c.to_string(),
                    share.to_string(),
                ])?;
            }
        }
    }
    w.into_inner()
        .map_err(|e| Error::io("<histograms>", e.into_error()))
}

fn compute_report(cfg: &RunConfig, scored: &Scored) -> Result<AuditReport> {
    let prov = Provenance::of(cfg)?;
    let table = &scored.table;
    let y = table.labels();
    let s = table.protected();
    let high_ed = table.high_education();
    let neighbors = NeighborIndex::build(&table.matrix(), cfg.n_neighbors, true)?;

    let mut rows = Vec::new();
    let mut performance = Vec::new();
    let mut fairness = Vec::new();
    let observed = FairnessReport::compute(OBSERVED_OUTCOME, "", "", &y, &s, &high_ed, &neighbors)?;
    rows.push(ReportRow::new(&prov, None, &observed, ""));
    fairness.push((String::new(), observed));

    for m in &cfg.methods {
        for policy in &cfg.policies {
            for &history in &cfg.histories {
                let scores = &scored
                    .scores
                    .iter()
                    .find(|(mm, h, _)| *mm == m.method && *h == history)
                    .expect("every model was scored")
                    .2;
                let training = cfg.training_label(history);
                let y_hat = classify(scores, policy)?;
                let perf = PerfReport::compute(scores, &y, &y_hat)?;
                let fair = FairnessReport::compute(
                    m.method.as_str(),
                    &policy.name,
                    history.as_str(),
                    &y_hat,
                    &s,
                    &high_ed,
                    &neighbors,
                )?;
                rows.push(ReportRow::new(&prov, Some(&perf), &fair, &training));
                performance.push((
                    m.method.to_string(),
                    policy.name.clone(),
                    training.clone(),
                    perf,
                ));
                fairness.push((training, fair));
            }
        }
    }
    Ok(AuditReport {
        provenance: prov,
        rows,
        performance,
        fairness,
    })
}

pub fn report_csv(rows: &[ReportRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner()
        .map_err(|e| Error::io("<report>", e.into_error()))
}

pub fn report_json(rows: &[ReportRow]) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(rows)?;
    v.push(b'\n');
    Ok(v)
}

/// Scores the evaluation year, classifies under every policy and writes the
/// performance, fairness, histogram and combined reports.
pub fn report(cfg: &RunConfig, dir: &Path) -> Result<AuditReport> {
    stage("report", |out| {
        cfg.validate()?;
        let scored = score_eval_year(cfg, dir)?;
        let audit = compute_report(cfg, &scored)?;
        let prov = &audit.provenance;
        let table = &scored.table;
        let s = table.protected();

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["spell_id", "model", "training_data", "score"])?;
        for (method, history, scores) in &scored.scores {
            let label = cfg.training_label(*history);
            for (row, r) in table.rows.iter().zip(scores) {
                w.write_record([&row.spell_id, method.as_str(), &label, &r.to_string()])?;
            }
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::io("<scores>", e.into_error()))?;
        out.write(dir.join(SCORES_FILE), &with_provenance(&bytes, prov)?)?;

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "spell_id",
            "model",
            "training_data",
            "policy",
            "score",
            "y_hat",
        ])?;
        for (method, history, scores) in &scored.scores {
            let label = cfg.training_label(*history);
            for policy in &cfg.policies {
                let y_hat = classify(scores, policy)?;
                for ((row, r), yh) in table.rows.iter().zip(scores).zip(&y_hat) {
                    w.write_record([
                        row.spell_id.as_str(),
                        method.as_str(),
                        &label,
                        &policy.name,
                        &r.to_string(),
                        if *yh { "1" } else { "0" },
                    ])?;
                }
            }
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::io("<classifications>", e.into_error()))?;
        out.write(
            dir.join(CLASSIFICATIONS_FILE),
            &with_provenance(&bytes, prov)?,
        )?;

        out.write(
            dir.join(PERFORMANCE_FILE),
            &with_provenance(&write_performance(&audit.performance)?, prov)?,
        )?;
        out.write(
            dir.join(FAIRNESS_FILE),
            &with_provenance(&write_fairness(&audit.fairness)?, prov)?,
        )?;
        out.write(
            dir.join(HISTOGRAMS_FILE),
            &with_provenance(&write_histograms(cfg, &scored, &s)?, prov)?,
        )?;
        out.write(dir.join(REPORT_CSV_FILE), &report_csv(&audit.rows)?)?;
        out.write(dir.join(REPORT_JSON_FILE), &report_json(&audit.rows)?)?;
        Ok(audit)
    })
}

/// Precision, recall, F1 and group SPDs over a grid of top-fraction cut-offs for
/// every model.
pub fn sweep(cfg: &RunConfig, dir: &Path) -> Result<usize> {
    stage("sweep", |out| {
        cfg.validate()?;
        let scored = score_eval_year(cfg, dir)?;
        let y = scored.table.labels();
        let s = scored.table.protected();
        let fractions = fraction_grid(cfg.sweep_step);
        let mut doc = Vec::new();
        let mut n = 0;
        for (i, (method, history, scores)) in scored.scores.iter().enumerate() {
            let rows = threshold_sweep(scores, &y, &s, &fractions)?;
            n += rows.len();
            let part = csv_bytes(|b| write_sweep(b, &rows))?;
            let mut r = csv::ReaderBuilder::new()
                .has_headers(false)
                .from_reader(part.as_slice());
            let mut w = csv::Writer::from_writer(Vec::new());
            for (j, rec) in r.records().enumerate() {
                let rec = rec?;
                if j == 0 && i > 0 {
                    continue;
                }
                let lead = if j == 0 {
                    ["model".to_string(), "training_data".to_string()]
                } else {
                    [method.to_string(), cfg.training_label(*history)]
                };
                w.write_record(lead.iter().map(String::as_str).chain(rec.iter()))?;
            }
            doc.extend(
                w.into_inner()
                    .map_err(|e| Error::io("<sweep>", e.into_error()))?,
            );
        }
        out.write(
            dir.join(SWEEPS_FILE),
            &with_provenance(&doc, &Provenance::of(cfg)?)?,
        )?;
        Ok(n)
    })
}

/// Runs every stage into `cfg.output_dir`.
///
/// Work happens in a sibling staging directory that replaces the output
/// directory only after all stages succeed; on failure it is removed. An
/// existing output directory is only replaced when it holds a previous bundle.
pub fn run(cfg: &RunConfig) -> Result<AuditReport> {
    cfg.validate().stage("config")?;
    let target = &cfg.output_dir;
    if target.exists() && !target.join(RUN_CONFIG_FILE).exists() {
        let empty = fs::read_dir(target)
            .map_err(|e| Error::io(target, e))?
            .next()
            .is_none();
        if !empty {
            return Err(Error::Config(format!(
                "output directory {} exists and does not hold a previous audit",
                target.display()
            )));
        }
    }
    let mut staging = target.clone().into_os_string();
    staging.push(".partial");
    let staging = PathBuf::from(staging);
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;

    let result = (|| {
        write_file(
            &staging.join(RUN_CONFIG_FILE),
            &serde_json::to_vec_pretty(cfg)?,
        )?;
        ingest(cfg, &staging)?;
        label(cfg, &staging)?;
        features(cfg, &staging)?;
        tune(cfg, &staging)?;
        train(cfg, &staging)?;
        let audit = report(cfg, &staging)?;
        sweep(cfg, &staging)?;
        Ok(audit)
    })();
    match result {
        Ok(audit) => {
            if target.exists() {
                fs::remove_dir_all(target).map_err(|e| Error::io(target, e))?;
            }
            fs::rename(&staging, target).map_err(|e| Error::io(target, e))?;
            Ok(audit)
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

/// Relative paths and contents of every file in a bundle, sorted by path.
pub fn bundle_files(dir: &Path) -> Result<Vec<(PathBuf, Vec<u8>)>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) -> Result<()> {
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
                out.push((
                    path.strip_prefix(root).expect("inside root").to_path_buf(),
                    bytes,
                ));
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_mandatory() {
        let cfg = RunConfig::default();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = RunConfig {
            seed: Some(1),
            ..RunConfig::default()
        };
        cfg.validate().unwrap();
    }

    #[test]
    fn eval_year_must_follow_training_years() {
        let cfg = RunConfig {
            seed: Some(1),
            eval_year: 2011,
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = RunConfig {
            seed: Some(1),
            ..RunConfig::default()
        };
        let b = RunConfig {
            output_dir: "elsewhere".into(),
            ..a.clone()
        };
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig {
            seed: Some(2),
            ..a.clone()
        };
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn off_grid_parameters_need_opt_in() {
        let mut cfg = RunConfig {
            seed: Some(1),
            methods: vec![MethodConfig {
                method: Method::Plr,
                grid: Some(vec![HyperParams::Plr(crate::models::PlrParams {
                    penalty: crate::models::Penalty::L1,
                    c: 0.5,
                })]),
            }],
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.allow_off_grid = true;
        cfg.validate().unwrap();
    }

    #[test]
    fn provenance_columns() {
        let prov = Provenance {
            config_hash: "abc".into(),
            seed: 9,
        };
        let out = with_provenance(b"a,b\n1,2\n", &prov).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "config_hash,seed,a,b\nabc,9,1,2\n"
        );
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = RunConfig {
            seed: Some(3),
            ..RunConfig::default()
        };
        let json = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.hash(), cfg.hash());
    }
}
