//! Synthetic administrative labor-market records with a known LTU mechanism.
//!
//! Each person gets a focal unemployment spell inside the sampling window and a
//! biography of employment, unemployment, program and benefit records around it.
//! Whether a spell lasts over a year is drawn at its start from a logistic model
//! over quantities the feature builder can recover from the records, plus an
//! unobserved career-instability term. The intercept can be calibrated so that
//! the realized LTU share among window episodes hits a target.

mod career;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::episode_store::{
    sort_records, write_observations, write_persons, write_records, Gender, Nationality, PersonId,
    PersonStatic, RawRecord, MOVES_HEADER, OBSERVATION_HEADER,
};
use crate::error::{Error, Result};
use crate::features::DeflatorTable;

/// Shares of protected groups among persons whose focal spell falls in a year.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupPrevalence {
    pub female: f64,
    pub non_german: f64,
    /// Share of women among non-German persons.
    pub female_among_non_german: f64,
}

impl Default for GroupPrevalence {
    fn default() -> Self {
        GroupPrevalence {
            female: 0.425,
            non_german: 0.205,
            female_among_non_german: 0.075 / 0.205,
        }
    }
}

impl GroupPrevalence {
    /// Share of women among German persons implied by the other shares.
    pub fn female_among_german(&self) -> f64 {
        (self.female - self.non_german * self.female_among_non_german) / (1.0 - self.non_german)
    }

    pub(crate) fn female_probability(&self, non_german: bool) -> f64 {
        if non_german {
            self.female_among_non_german
        } else {
            self.female_among_german()
        }
    }

    fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.female)
            || !unit(self.female_among_non_german)
            || !(0.0..1.0).contains(&self.non_german)
        {
            return Err(Error::Config(format!(
                "group shares outside [0, 1]: {self:?}"
            )));
        }
        let g = self.female_among_german();
        if !unit(g) {
            return Err(Error::Config(format!(
                "group shares are inconsistent: they imply a female share of {g:.3} among Germans"
            )));
        }
        Ok(())
    }
}

/// Coefficients of the log-odds that a spell becomes long-term.
///
/// Age enters as `a = (age - 40) / 10`; log wages are centered at 4.5.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiskModel {
    /// Replaced by the calibrated value when calibration is on.
    pub intercept: f64,
    pub age: f64,
    pub age_sq: f64,
    /// Unemployment days before entry divided by age in days.
    pub unemployment_scaled: f64,
    /// Number of earlier unemployment records, capped at 6.
    pub unemployment_count: f64,
    /// Employment days before entry divided by age in days.
    pub employment_scaled: f64,
    /// Real daily wage of the last job, log scale.
    pub log_wage: f64,
    /// Applied instead of the wage term when there is no last wage.
    pub no_wage: f64,
    pub part_time: f64,
    pub high_education: f64,
    /// More than two years since the last job, or never employed.
    pub long_since_employment: f64,
    /// Long-term benefit receipt six weeks before entry.
    pub long_term_benefit: f64,
    /// Aged 50 or over and more than two years since the last job.
    pub older_and_detached: f64,
    /// Long-term benefits before entry together with more than 10% of life unemployed.
    pub benefit_and_history: f64,
    /// Real daily wage of the last job below 45.
    pub low_wage: f64,
    /// Weight of the unobserved career-instability term.
    pub latent: f64,
    pub noise_sd: f64,
}

impl Default for RiskModel {
    fn default() -> Self {
        RiskModel {
            intercept: -2.0,
            age: 0.35,
            age_sq: 0.6,
            unemployment_scaled: 2.5,
            unemployment_count: 0.15,
            employment_scaled: -1.0,
            log_wage: -0.6,
            no_wage: 0.4,
            part_time: 0.2,
            high_education: -0.5,
            long_since_employment: 0.7,
            long_term_benefit: 0.6,
            older_and_detached: 4.0,
            benefit_and_history: 3.0,
            low_wage: 2.4,
            latent: 0.5,
            noise_sd: 0.0,
        }
    }
}

/// Mean shift of the career-instability term by group.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupShift {
    pub non_german: f64,
    pub female: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_persons: usize,
    /// First and last year of the sampling window. Records run until the end of
    /// the year after `last_year`.
    pub first_year: i32,
    pub last_year: i32,
    /// Years of biography simulated before `first_year`.
    pub history_years: i32,
    /// Relative number of focal spells per window year; empty means uniform.
    pub year_weights: Vec<f64>,
    pub prevalence: GroupPrevalence,
    /// Per-year overrides of `prevalence`.
    pub prevalence_by_year: BTreeMap<i32, GroupPrevalence>,
    pub target_ltu_rate: f64,
    pub calibrate_intercept: bool,
    /// Persons simulated per calibration step (at most `n_persons`).
    pub calibration_persons: usize,
    pub risk: RiskModel,
    pub group_shift: GroupShift,
    /// Compresses age and career instability of non-German persons without a
    /// high school diploma towards their group means. 0 leaves them untouched.
    pub skew: f64,
    pub deflator: DeflatorTable,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_persons: 10_000,
            first_year: 2010,
            last_year: 2016,
            history_years: 10,
            year_weights: Vec::new(),
            prevalence: GroupPrevalence::default(),
            prevalence_by_year: BTreeMap::new(),
            target_ltu_rate: 0.152,
            calibrate_intercept: true,
            calibration_persons: 30_000,
            risk: RiskModel::default(),
            group_shift: GroupShift::default(),
            skew: 0.0,
            deflator: DeflatorTable::default(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// The same population with the skew mechanism switched on.
    pub fn with_skew(mut self, skew: f64) -> Self {
        self.skew = skew;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_persons == 0 {
            return Err(Error::Config("n_persons must be positive".into()));
        }
        if self.first_year > self.last_year {
            return Err(Error::Config(format!(
                "first_year {} after last_year {}",
                self.first_year, self.last_year
            )));
        }
        if self.history_years < 0 {
            return Err(Error::Config("history_years must be non-negative".into()));
        }
        let n_years = (self.last_year - self.first_year + 1) as usize;
        if !self.year_weights.is_empty()
            && (self.year_weights.len() != n_years
                || self.year_weights.iter().any(|w| !(*w >= 0.0))
                || self.year_weights.iter().sum::<f64>() <= 0.0)
        {
            return Err(Error::Config(format!(
                "year_weights needs {n_years} non-negative weights with a positive sum"
            )));
        }
        self.prevalence.validate()?;
        for (year, p) in &self.prevalence_by_year {
            p.validate()
                .map_err(|e| Error::Config(format!("prevalence for {year}: {e}")))?;
        }
        if !(self.target_ltu_rate > 0.0 && self.target_ltu_rate < 1.0) {
            return Err(Error::Config("target_ltu_rate must lie in (0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.skew) {
            return Err(Error::Config("skew must lie in [0, 1]".into()));
        }
        if !(self.risk.noise_sd >= 0.0) {
            return Err(Error::Config("noise_sd must be non-negative".into()));
        }
        for y in self.first_year - self.history_years..=self.last_year + 1 {
            self.deflator
                .lookup(y)
                .map_err(|_| Error::Config(format!("deflator has no index for {y}")))?;
        }
        Ok(())
    }

    pub(crate) fn year_weights(&self) -> Vec<f64> {
        if self.year_weights.is_empty() {
            vec![1.0; (self.last_year - self.first_year + 1) as usize]
        } else {
            self.year_weights.clone()
        }
    }

    pub(crate) fn prevalence_for(&self, year: i32) -> GroupPrevalence {
        self.prevalence_by_year
            .get(&year)
            .copied()
            .unwrap_or(self.prevalence)
    }

    /// Last day covered by the generated records.
    pub fn observed_until(&self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.last_year + 1, 12, 31).expect("valid year")
    }

    fn in_window(&self, date: NaiveDate) -> bool {
        (self.first_year..=self.last_year).contains(&date.year())
    }
}

/// An unemployment spell as generated, before any record processing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthSpell {
    pub person_id: PersonId,
    pub start_date: NaiveDate,
    /// Clipped to the end of observation.
    pub end_date: NaiveDate,
    pub y_ltu: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YearSummary {
    pub year: i32,
    pub episodes: usize,
    pub ltu_rate: f64,
    pub female: f64,
    pub non_german: f64,
    pub non_german_male: f64,
    pub non_german_female: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub seed: u64,
    pub n_persons: usize,
    pub n_records: usize,
    pub intercept: f64,
    pub calibrated: bool,
    /// Spells starting inside the sampling window.
    pub episodes: usize,
    pub ltu_rate: f64,
    pub by_year: Vec<YearSummary>,
}

#[derive(Clone, Debug)]
pub struct SynthData {
    pub persons: Vec<PersonStatic>,
    /// Sorted by person, then start date.
    pub records: Vec<RawRecord>,
    pub truth: Vec<TruthSpell>,
    pub summary: SynthSummary,
}

fn simulate_range(cfg: &SynthConfig, intercept: f64, n: usize) -> Vec<career::PersonOutcome> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| career::simulate_person(cfg, intercept, &cfg.deflator, i))
        .collect()
}

fn window_ltu_rate(cfg: &SynthConfig, people: &[career::PersonOutcome]) -> f64 {
    let (mut n, mut ltu) = (0usize, 0usize);
    for s in people.iter().flat_map(|p| &p.truth) {
        if cfg.in_window(s.start_date) {
            n += 1;
            ltu += usize::from(s.y_ltu);
        }
    }
    ltu as f64 / n.max(1) as f64
}

/// Realized LTU share among window episodes of the first `n` persons.
pub fn ltu_rate_for_intercept(cfg: &SynthConfig, intercept: f64, n: usize) -> f64 {
    window_ltu_rate(cfg, &simulate_range(cfg, intercept, n.min(cfg.n_persons)))
}

const INTERCEPT_BOUNDS: (f64, f64) = (-15.0, 15.0);

/// Finds the intercept whose realized LTU share matches the target, by bisection.
///
/// Every step re-simulates the same persons with the same random streams, so the
/// realized share is a non-decreasing step function of the intercept.
pub fn calibrate_intercept(cfg: &SynthConfig) -> Result<f64> {
    let n = cfg.calibration_persons.clamp(1, cfg.n_persons);
    let target = cfg.target_ltu_rate;
    let (mut lo, mut hi) = INTERCEPT_BOUNDS;
    let (r_lo, r_hi) = (
        ltu_rate_for_intercept(cfg, lo, n),
        ltu_rate_for_intercept(cfg, hi, n),
    );
    if !(r_lo <= target && target <= r_hi) {
        return Err(Error::Config(format!(
            "LTU rate {target} unreachable: intercepts in [{lo}, {hi}] give rates [{r_lo:.4}, {r_hi:.4}]"
        )));
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let r = ltu_rate_for_intercept(cfg, mid, n);
        if (r - target).abs() < 1e-4 {
            return Ok(mid);
        }
        if r < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn summarize(
    cfg: &SynthConfig,
    intercept: f64,
    persons: &[PersonStatic],
    n_records: usize,
    truth: &[TruthSpell],
) -> SynthSummary {
    let by_id: BTreeMap<&PersonId, &PersonStatic> =
        persons.iter().map(|p| (&p.person_id, p)).collect();
    let mut years: BTreeMap<i32, [usize; 6]> = BTreeMap::new();
    for s in truth.iter().filter(|s| cfg.in_window(s.start_date)) {
        let p = by_id[&s.person_id];
        let female = p.gender == Gender::Female;
        let ng = p.nationality == Nationality::NonGerman;
        let c = years.entry(s.start_date.year()).or_default();
        c[0] += 1;
        c[1] += usize::from(s.y_ltu);
        c[2] += usize::from(female);
        c[3] += usize::from(ng);
        c[4] += usize::from(ng && !female);
        c[5] += usize::from(ng && female);
    }
    let share = |a: usize, n: usize| a as f64 / n.max(1) as f64;
    let by_year: Vec<YearSummary> = years
        .iter()
        .map(|(&year, c)| YearSummary {
            year,
            episodes: c[0],
            ltu_rate: share(c[1], c[0]),
            female: share(c[2], c[0]),
            non_german: share(c[3], c[0]),
            non_german_male: share(c[4], c[0]),
            non_german_female: share(c[5], c[0]),
        })
        .collect();
    let episodes: usize = by_year.iter().map(|y| y.episodes).sum();
    let ltu: usize = years.values().map(|c| c[1]).sum();
    SynthSummary {
        seed: cfg.seed,
        n_persons: persons.len(),
        n_records,
        intercept,
        calibrated: cfg.calibrate_intercept,
        episodes,
        ltu_rate: share(ltu, episodes),
        by_year,
    }
}

/// Generates the population. Output depends only on the configuration.
pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let intercept = if cfg.calibrate_intercept {
        calibrate_intercept(cfg)?
    } else {
        cfg.risk.intercept
    };
    log::info!(
        "simulating {} persons with intercept {intercept:.4}",
        cfg.n_persons
    );
    let people = simulate_range(cfg, intercept, cfg.n_persons);
    let mut persons = Vec::with_capacity(people.len());
    let mut records = Vec::new();
    let mut truth = Vec::new();
    for p in people {
        persons.push(p.person);
        records.extend(p.records);
        truth.extend(p.truth);
    }
    sort_records(&mut records);
    truth.sort_by(|a, b| (&a.person_id, a.start_date).cmp(&(&b.person_id, b.start_date)));
    let summary = summarize(cfg, intercept, &persons, records.len(), &truth);
    Ok(SynthData {
        persons,
        records,
        truth,
        summary,
    })
}

pub const RECORDS_FILE: &str = "records.csv";
pub const PERSONS_FILE: &str = "persons.csv";
pub const EDUCATION_FILE: &str = "education.csv";
pub const SCHOOL_FILE: &str = "school.csv";
pub const MOVES_FILE: &str = "moves.csv";
pub const SUMMARY_FILE: &str = "synth_summary.json";

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes records, person attributes, observation files and the summary to `dir`.
pub fn write_dataset(dir: &Path, data: &SynthData) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_records(create(&dir.join(RECORDS_FILE))?, &data.records)?;
    write_persons(create(&dir.join(PERSONS_FILE))?, &data.persons)?;
    let obs = |pick: fn(&PersonStatic) -> &Vec<(NaiveDate, u8)>| {
        data.persons
            .iter()
            .flat_map(move |p| pick(p).iter().map(move |(d, v)| (&p.person_id, *d, *v)))
    };
    write_observations(
        create(&dir.join(EDUCATION_FILE))?,
        OBSERVATION_HEADER,
        obs(|p| &p.education),
    )?;
    write_observations(
        create(&dir.join(SCHOOL_FILE))?,
        OBSERVATION_HEADER,
        obs(|p| &p.school),
    )?;
    write_observations(
        create(&dir.join(MOVES_FILE))?,
        MOVES_HEADER,
        obs(|p| &p.moves),
    )?;
    let path = dir.join(SUMMARY_FILE);
    serde_json::to_writer_pretty(create(&path)?, &data.summary)?;
    Ok(())
}
