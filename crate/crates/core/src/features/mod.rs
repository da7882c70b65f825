//! Prediction rows: one per unemployment spell, built only from what is known at
//! spell entry.
//!
//! Three feature groups are produced: socio-demographics, aggregates over the labor
//! market history, and attributes of the last job. Categorical predictors are
//! expanded to indicators with an explicit missing indicator. Gender and nationality
//! never enter the feature vector; they travel separately as [`ProtectedAttributes`].

mod aggregates;
mod io;

use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::episode_store::{
    Gender, Nationality, PersonId, PersonStatic, RawRecord, UnemploymentSpell, N_EDUCATION_LEVELS,
    N_INDUSTRIES, N_SCHOOL_LEVELS, N_SKILL_LEVELS, N_STATES,
};
use crate::error::{Error, Result};

pub use aggregates::{
    history_aggregates, last_job_features, sociodemo_features, HistoryAggregates, LastJob,
    SocioDemographics, TypeAggregate, HISTORY_TYPES, SIX_WEEK_TYPES,
};
pub use io::{read_rows, read_schema, write_rows, write_schema, ROW_META_COLUMNS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    Sociodemographics,
    LaborMarketHistory,
    LastJob,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Real,
    Count,
    Indicator,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub group: FeatureGroup,
}

/// Ordered column description of a feature matrix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureSpec>,
}

impl FeatureSchema {
    pub fn from_names<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        FeatureSchema {
            features: names
                .into_iter()
                .map(|n| FeatureSpec {
                    name: n.into(),
                    kind: FeatureKind::Real,
                    group: FeatureGroup::LaborMarketHistory,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// SHA-256 over the newline-joined column names.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for n in self.names() {
            h.update(n.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    /// Errors on the first column whose name differs from `other`.
    pub fn check_matches(&self, other: &FeatureSchema) -> Result<()> {
        let n = self.len().max(other.len());
        for i in 0..n {
            let a = self
                .features
                .get(i)
                .map(|f| f.name.as_str())
                .unwrap_or("<none>");
            let b = other
                .features
                .get(i)
                .map(|f| f.name.as_str())
                .unwrap_or("<none>");
            if a != b {
                return Err(Error::SchemaMismatch {
                    index: i,
                    expected: a.to_string(),
                    found: b.to_string(),
                });
            }
        }
        Ok(())
    }
}

/// Year-indexed price index used to deflate wages to `base_year` prices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeflatorTable {
    pub base_year: i32,
    pub index: BTreeMap<i32, f64>,
}

impl DeflatorTable {
    /// Constant annual inflation around `base_year` (index 100 there).
    pub fn constant_rate(base_year: i32, rate: f64, years: std::ops::RangeInclusive<i32>) -> Self {
        DeflatorTable {
            base_year,
            index: years
                .map(|y| (y, 100.0 * (1.0 + rate).powi(y - base_year)))
                .collect(),
        }
    }

    pub fn lookup(&self, year: i32) -> Result<f64> {
        self.index
            .get(&year)
            .copied()
            .ok_or_else(|| Error::Config(format!("no deflator index for year {year}")))
    }

    /// Converts a nominal amount observed in `year` to base-year prices.
    pub fn deflate(&self, nominal: f64, year: i32) -> Result<f64> {
        Ok(nominal * self.lookup(self.base_year)? / self.lookup(year)?)
    }
}

impl Default for DeflatorTable {
    fn default() -> Self {
        DeflatorTable::constant_rate(2010, 0.015, 1960..=2040)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub sociodemographics: bool,
    pub history: bool,
    pub last_job: bool,
    /// Per-industry total employment durations (14 extra columns).
    pub industry_durations: bool,
    /// Offset of the "status before unemployment" flags.
    pub status_offset_days: i64,
    /// Upper bounds of the days-since buckets; one more open bucket follows.
    pub since_employment_cuts: Vec<i64>,
    pub since_unemployment_cuts: Vec<i64>,
    pub deflator: DeflatorTable,
    /// Lowest school level counted as a high school diploma.
    pub high_school_level: u8,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            sociodemographics: true,
            history: true,
            last_job: true,
            industry_durations: false,
            status_offset_days: 42,
            since_employment_cuts: vec![180, 365, 730],
            since_unemployment_cuts: vec![180, 365, 730],
            deflator: DeflatorTable::default(),
            high_school_level: 5,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        for cuts in [&self.since_employment_cuts, &self.since_unemployment_cuts] {
            if cuts.windows(2).any(|w| w[0] >= w[1]) || cuts.iter().any(|&c| c < 0) {
                return Err(Error::Config(
                    "bucket cut points must be non-negative and strictly increasing".into(),
                ));
            }
        }
        if self.status_offset_days < 1 {
            return Err(Error::Config(
                "status offset must be at least one day".into(),
            ));
        }
        if self.high_school_level >= N_SCHOOL_LEVELS {
            return Err(Error::Config("high_school_level out of range".into()));
        }
        if !(self.sociodemographics || self.history || self.last_job) {
            return Err(Error::Config(
                "at least one feature group must be enabled".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProtectedAttributes {
    pub female: bool,
    pub non_german: bool,
}

impl ProtectedAttributes {
    pub fn of(person: &PersonStatic) -> Self {
        ProtectedAttributes {
            female: person.gender == Gender::Female,
            non_german: person.nationality == Nationality::NonGerman,
        }
    }

    pub fn non_german_female(&self) -> bool {
        self.non_german && self.female
    }

    pub fn non_german_male(&self) -> bool {
        self.non_german && !self.female
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub person_id: PersonId,
    pub spell_id: String,
    pub year: i32,
    pub x: Vec<f64>,
    pub s: ProtectedAttributes,
    pub y: bool,
    pub high_education: bool,
}

/// Writes values, and optionally their names, in one fixed order.
struct Emitter<'a> {
    values: &'a mut Vec<f64>,
    specs: Option<&'a mut Vec<FeatureSpec>>,
    group: FeatureGroup,
}

impl Emitter<'_> {
    fn put(&mut self, name: impl FnOnce() -> String, kind: FeatureKind, value: f64) {
        if let Some(specs) = self.specs.as_deref_mut() {
            specs.push(FeatureSpec {
                name: name(),
                kind,
                group: self.group,
            });
        }
        self.values.push(value);
    }

    fn real(&mut self, name: &str, v: f64) {
        self.put(|| name.to_string(), FeatureKind::Real, v);
    }

    fn count(&mut self, name: &str, v: f64) {
        self.put(|| name.to_string(), FeatureKind::Count, v);
    }

    fn flag(&mut self, name: &str, v: bool) {
        self.put(
            || name.to_string(),
            FeatureKind::Indicator,
            f64::from(u8::from(v)),
        );
    }

    /// One indicator per level plus a trailing missing indicator.
    fn one_hot(&mut self, prefix: &str, n_levels: u8, value: Option<u8>) {
        for level in 0..n_levels {
            self.put(
                || format!("{prefix}_{level}"),
                FeatureKind::Indicator,
                f64::from(u8::from(value == Some(level))),
            );
        }
        self.flag(&format!("{prefix}_missing"), value.is_none());
    }

    /// Value/missing pair; a missing value is encoded as the neutral 0.
    fn tri(&mut self, name: &str, value: crate::episode_store::TriState) {
        self.flag(name, value.is_yes());
        self.flag(&format!("{name}_missing"), value.is_missing());
    }

    /// Days-since buckets: one indicator per cut, one open bucket, plus "never".
    fn bucket(&mut self, prefix: &str, cuts: &[i64], days: Option<i64>) {
        let idx = days.map(|d| cuts.iter().position(|&c| d <= c).unwrap_or(cuts.len()));
        for b in 0..=cuts.len() {
            self.put(
                || {
                    if b < cuts.len() {
                        format!("{prefix}_le_{}", cuts[b])
                    } else {
                        format!("{prefix}_gt_{}", cuts[cuts.len() - 1])
                    }
                },
                FeatureKind::Indicator,
                f64::from(u8::from(idx == Some(b))),
            );
        }
        self.flag(&format!("{prefix}_never"), days.is_none());
    }
}

/// Everything a prediction row is computed from.
struct RowInputs {
    socio: SocioDemographics,
    history: HistoryAggregates,
    last_job: LastJob,
}

/// Turns spells plus person histories into prediction rows under a fixed schema.
#[derive(Clone, Debug)]
pub struct FeatureBuilder {
    config: FeatureConfig,
    schema: FeatureSchema,
}

impl FeatureBuilder {
    pub fn new(config: FeatureConfig) -> Result<Self> {
        config.validate()?;
        let mut specs = Vec::new();
        let mut values = Vec::new();
        let dummy = RowInputs {
            socio: SocioDemographics::default(),
            history: HistoryAggregates::empty(),
            last_job: LastJob::default(),
        };
        emit_row(&config, &dummy, &mut values, Some(&mut specs));
        Ok(FeatureBuilder {
            config,
            schema: FeatureSchema { features: specs },
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    /// Builds the row for `spell` from the person's static attributes and records.
    ///
    /// Only records starting before the spell contribute, and their end dates are
    /// clipped to the day before entry.
    pub fn build_row(
        &self,
        person: &PersonStatic,
        history: &[RawRecord],
        spell: &UnemploymentSpell,
    ) -> Result<EpisodeRow> {
        if spell.person_id != person.person_id {
            return Err(Error::Invalid(format!(
                "spell {} does not belong to person {}",
                spell.spell_id, person.person_id
            )));
        }
        if let Some(r) = history.iter().find(|r| r.person_id != person.person_id) {
            return Err(Error::Invalid(format!(
                "history of {} contains a record of {}",
                person.person_id, r.person_id
            )));
        }
        let as_of = spell.start_date;
        let prior = prior_records(history, as_of);
        let socio = sociodemo_features(person, as_of);
        if socio.age_years <= 0 {
            return Err(Error::Invalid(format!(
                "person {} has non-positive age at {as_of}",
                person.person_id
            )));
        }
        let inputs = RowInputs {
            history: history_aggregates(&prior, as_of, socio.age_years, &self.config),
            last_job: last_job_features(&prior, as_of, &self.config.deflator)?,
            socio,
        };
        let mut x = Vec::with_capacity(self.schema.len());
        emit_row(&self.config, &inputs, &mut x, None);
        debug_assert_eq!(x.len(), self.schema.len());
        Ok(EpisodeRow {
            person_id: person.person_id.clone(),
            spell_id: spell.spell_id.clone(),
            year: spell.year,
            x,
            s: ProtectedAttributes::of(person),
            y: spell.y_ltu,
            high_education: inputs
                .socio
                .school
                .is_some_and(|lvl| lvl >= self.config.high_school_level),
        })
    }

    /// Builds rows for every spell. Records must be sorted by person; the output
    /// follows the order of `spells`.
    pub fn build_rows(
        &self,
        persons: &[PersonStatic],
        records: &[RawRecord],
        spells: &[UnemploymentSpell],
    ) -> Result<Vec<EpisodeRow>> {
        let by_person: HashMap<&PersonId, &PersonStatic> =
            persons.iter().map(|p| (&p.person_id, p)).collect();
        let histories: HashMap<&PersonId, &[RawRecord]> =
            crate::episode_store::group_by_person(records)
                .into_iter()
                .map(|g| (&g[0].person_id, g))
                .collect();
        spells
            .par_iter()
            .map(|spell| {
                let person = by_person.get(&spell.person_id).ok_or_else(|| {
                    Error::Invalid(format!("no person attributes for {}", spell.person_id))
                })?;
                let history = histories.get(&spell.person_id).copied().unwrap_or(&[]);
                self.build_row(person, history, spell)
            })
            .collect()
    }
}

/// Records that started before `as_of`, with end dates clipped to `as_of - 1`.
pub fn prior_records(history: &[RawRecord], as_of: NaiveDate) -> Vec<RawRecord> {
    let last = as_of.pred_opt().expect("date after minimum");
    let mut out: Vec<RawRecord> = history
        .iter()
        .filter(|r| r.start_date < as_of)
        .map(|r| {
            let mut r = r.clone();
            if r.end_date > last {
                r.end_date = last;
            }
            r
        })
        .collect();
    out.sort_by(|a, b| {
        (a.start_date, a.end_date, a.record_type).cmp(&(b.start_date, b.end_date, b.record_type))
    });
    out
}

fn emit_row(
    cfg: &FeatureConfig,
    inputs: &RowInputs,
    values: &mut Vec<f64>,
    mut specs: Option<&mut Vec<FeatureSpec>>,
) {
    if cfg.sociodemographics {
        let mut e = Emitter {
            values: &mut *values,
            specs: specs.as_deref_mut(),
            group: FeatureGroup::Sociodemographics,
        };
        let s = &inputs.socio;
        e.real("age", f64::from(s.age_years));
        e.one_hot("education", N_EDUCATION_LEVELS, s.education);
        e.one_hot("school", N_SCHOOL_LEVELS, s.school);
        e.one_hot("state", N_STATES, s.state);
        e.count("n_moves", s.n_moves as f64);
    }
    if cfg.history {
        let mut e = Emitter {
            values: &mut *values,
            specs: specs.as_deref_mut(),
            group: FeatureGroup::LaborMarketHistory,
        };
        let h = &inputs.history;
        for (ty, agg) in HISTORY_TYPES.iter().zip(&h.per_type) {
            let t = ty.as_str();
            e.count(&format!("{t}_count"), agg.count as f64);
            e.real(&format!("{t}_total_days"), agg.total_days as f64);
            e.real(&format!("{t}_mean_days"), agg.mean_days);
            e.flag(&format!("{t}_mean_missing"), agg.count == 0);
            e.real(&format!("{t}_total_scaled"), agg.total_scaled);
        }
        for (ty, active) in SIX_WEEK_TYPES.iter().zip(&h.status_before) {
            e.flag(&format!("status_before_{}", ty.as_str()), *active);
        }
        e.flag("status_before_no_info", h.status_before_none);
        for (name, days) in [
            ("part_time", h.part_time_days),
            ("fixed_term", h.fixed_term_days),
            ("temp_work", h.temp_work_days),
            ("more_than_one_job", h.multi_job_days),
        ] {
            e.real(&format!("{name}_total_days"), days as f64);
            e.real(
                &format!("{name}_total_scaled"),
                aggregates::scale_by_age(days, inputs.socio.age_years),
            );
        }
        e.one_hot("industry_most", N_INDUSTRIES, h.industry_most);
        if cfg.industry_durations {
            for (i, days) in h.industry_days.iter().enumerate() {
                e.real(&format!("industry_days_{i}"), *days as f64);
            }
        }
        e.bucket(
            "since_employment",
            &cfg.since_employment_cuts,
            h.days_since_employment,
        );
        e.bucket(
            "since_unemployment",
            &cfg.since_unemployment_cuts,
            h.days_since_unemployment,
        );
        e.one_hot("max_skill", N_SKILL_LEVELS, h.max_skill);
    }
    if cfg.last_job {
        let mut e = Emitter {
            values: &mut *values,
            specs: specs.as_deref_mut(),
            group: FeatureGroup::LastJob,
        };
        let j = &inputs.last_job;
        e.flag("last_job_none", !j.present);
        e.real("last_job_duration", j.duration_days as f64);
        e.real("last_job_wage", j.real_wage.unwrap_or(0.0));
        e.flag("last_job_wage_missing", j.real_wage.is_none());
        e.tri("last_job_more_than_one_job", j.more_than_one_job);
        e.tri("last_job_part_time", j.part_time);
        e.tri("last_job_fixed_term", j.fixed_term);
        e.tri("last_job_temp_work", j.temp_work);
        e.one_hot("last_job_skill", N_SKILL_LEVELS, j.skill_level);
        e.one_hot("last_job_industry", N_INDUSTRIES, j.industry);
    }
}

/// Column-oriented view of a set of rows, the unit models train and predict on.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeTable {
    pub schema: FeatureSchema,
    pub rows: Vec<EpisodeRow>,
}

impl EpisodeTable {
    pub fn new(schema: FeatureSchema, rows: Vec<EpisodeRow>) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| r.x.len() != schema.len()) {
            return Err(Error::Invalid(format!(
                "row {} has {} features, schema has {}",
                r.spell_id,
                r.x.len(),
                schema.len()
            )));
        }
        Ok(EpisodeTable { schema, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn matrix(&self) -> crate::models::Matrix {
        crate::models::Matrix::from_rows(self.schema.len(), self.rows.iter().map(|r| &r.x[..]))
    }

    pub fn labels(&self) -> Vec<bool> {
        self.rows.iter().map(|r| r.y).collect()
    }

    pub fn protected(&self) -> Vec<ProtectedAttributes> {
        self.rows.iter().map(|r| r.s).collect()
    }

    pub fn high_education(&self) -> Vec<bool> {
        self.rows.iter().map(|r| r.high_education).collect()
    }

    /// Year of each row.
    pub fn row_years(&self) -> Vec<i32> {
        self.rows.iter().map(|r| r.year).collect()
    }

    /// Distinct years, ascending.
    pub fn years(&self) -> Vec<i32> {
        let mut ys: Vec<i32> = self.rows.iter().map(|r| r.year).collect();
        ys.sort_unstable();
        ys.dedup();
        ys
    }

    /// Rows whose year satisfies `keep`, in their original order.
    pub fn filter_years(&self, keep: impl Fn(i32) -> bool) -> EpisodeTable {
        EpisodeTable {
            schema: self.schema.clone(),
            rows: self.rows.iter().filter(|r| keep(r.year)).cloned().collect(),
        }
    }

    pub fn select(&self, indices: &[usize]) -> EpisodeTable {
        EpisodeTable {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}
