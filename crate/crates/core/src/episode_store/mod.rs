//! Longitudinal labor-market records and the unemployment spells derived from them.
//!
//! Raw records are dated, possibly overlapping episodes of one person. Unemployment
//! spells are built by fusing unemployment-family records whose interruptions are
//! no longer than the gap tolerance (six weeks by default), and a spell is labeled
//! long-term unemployed when it lasts more than 365 days.

mod io;
mod spells;

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    assemble_persons, read_observations, read_persons, read_records, read_spells,
    write_observations, write_persons, write_records, write_spells, Ingested, Observation,
    PersonRow, Rejection, MOVES_HEADER, OBSERVATION_HEADER, PERSONS_HEADER, RECORDS_HEADER,
    SPELLS_HEADER,
};
pub use spells::{
    build_spells, label_ltu, merge_unemployment_spells, qualifying_intervals, CensorWindow,
    UnemploymentSpell, DEFAULT_GAP_TOLERANCE_DAYS, DEFAULT_HORIZON_DAYS, LTU_THRESHOLD_DAYS,
};

pub const N_INDUSTRIES: u8 = 14;
pub const N_SKILL_LEVELS: u8 = 4;
pub const N_EDUCATION_LEVELS: u8 = 6;
pub const N_SCHOOL_LEVELS: u8 = 7;
pub const N_STATES: u8 = 16;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PersonId(pub String);

impl fmt::Display for PersonId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PersonId {
    fn from(s: &str) -> Self {
        PersonId(s.to_owned())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordType {
    Employment,
    Unemployment,
    /// Registered as job seeking while not unemployed.
    JobSeeking,
    BenefitShortTerm,
    BenefitLongTerm,
    ProgramParticipation,
    SubsidizedEmployment,
}

impl RecordType {
    pub const ALL: [RecordType; 7] = [
        RecordType::Employment,
        RecordType::Unemployment,
        RecordType::JobSeeking,
        RecordType::BenefitShortTerm,
        RecordType::BenefitLongTerm,
        RecordType::ProgramParticipation,
        RecordType::SubsidizedEmployment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RecordType::Employment => "employment",
            RecordType::Unemployment => "unemployment",
            RecordType::JobSeeking => "job_seeking",
            RecordType::BenefitShortTerm => "benefit_short_term",
            RecordType::BenefitLongTerm => "benefit_long_term",
            RecordType::ProgramParticipation => "program_participation",
            RecordType::SubsidizedEmployment => "subsidized_employment",
        }
    }

    /// Record types that may carry job attributes (wage, industry, ...).
    pub fn is_employment_family(self) -> bool {
        matches!(
            self,
            RecordType::Employment | RecordType::SubsidizedEmployment
        )
    }
}

impl fmt::Display for RecordType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RecordType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        RecordType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown record_type `{s}`"))
    }
}

/// Yes / no / not recorded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TriState {
    Yes,
    No,
    #[default]
    Missing,
}

impl TriState {
    pub fn from_bool(b: bool) -> Self {
        if b {
            TriState::Yes
        } else {
            TriState::No
        }
    }

    pub fn is_missing(self) -> bool {
        self == TriState::Missing
    }

    pub fn is_yes(self) -> bool {
        self == TriState::Yes
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordAttrs {
    /// Nominal daily wage.
    pub daily_wage: Option<f64>,
    pub industry: Option<u8>,
    pub part_time: TriState,
    pub fixed_term: TriState,
    pub temp_work: TriState,
    pub skill_level: Option<u8>,
    pub more_than_one_job: Option<bool>,
}

impl RecordAttrs {
    pub fn is_empty(&self) -> bool {
        *self == RecordAttrs::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub person_id: PersonId,
    pub record_type: RecordType,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub attrs: RecordAttrs,
}

impl RawRecord {
    pub fn new(
        person_id: impl Into<PersonId>,
        record_type: RecordType,
        start_date: NaiveDate,
        end_date: NaiveDate,
    ) -> Self {
        RawRecord {
            person_id: person_id.into(),
            record_type,
            start_date,
            end_date,
            attrs: RecordAttrs::default(),
        }
    }

    /// Inclusive length in days.
    pub fn duration_days(&self) -> i64 {
        (self.end_date - self.start_date).num_days() + 1
    }

    pub fn covers(&self, date: NaiveDate) -> bool {
        self.start_date <= date && date <= self.end_date
    }

    pub fn overlaps(&self, other: &RawRecord) -> bool {
        self.start_date <= other.end_date && other.start_date <= self.end_date
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.start_date > self.end_date {
            return Err(format!(
                "start_date {} is after end_date {}",
                self.start_date, self.end_date
            ));
        }
        let a = &self.attrs;
        if !self.record_type.is_employment_family() && !a.is_empty() {
            return Err(format!(
                "job attributes are only allowed on employment records, not `{}`",
                self.record_type
            ));
        }
        if let Some(w) = a.daily_wage {
            if !w.is_finite() || w < 0.0 {
                return Err(format!("daily_wage must be a non-negative number, got {w}"));
            }
        }
        if let Some(i) = a.industry {
            if i >= N_INDUSTRIES {
                return Err(format!("industry {i} out of range 0..{N_INDUSTRIES}"));
            }
        }
        if let Some(s) = a.skill_level {
            if s >= N_SKILL_LEVELS {
                return Err(format!("skill_level {s} out of range 0..{N_SKILL_LEVELS}"));
            }
        }
        Ok(())
    }
}

impl From<String> for PersonId {
    fn from(s: String) -> Self {
        PersonId(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Male,
    Female,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nationality {
    German,
    NonGerman,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
        }
    }
}

impl Nationality {
    pub fn as_str(self) -> &'static str {
        match self {
            Nationality::German => "german",
            Nationality::NonGerman => "non_german",
        }
    }
}

impl FromStr for Gender {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "male" => Ok(Gender::Male),
            "female" => Ok(Gender::Female),
            other => Err(format!("unknown gender `{other}`")),
        }
    }
}

impl FromStr for Nationality {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "german" => Ok(Nationality::German),
            "non_german" => Ok(Nationality::NonGerman),
            other => Err(format!("unknown nationality `{other}`")),
        }
    }
}

/// Time-invariant attributes of a person plus dated observations of education,
/// schooling and residence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersonStatic {
    pub person_id: PersonId,
    pub birth_year: i32,
    pub gender: Gender,
    pub nationality: Nationality,
    /// `(date, level)` with levels ordered `0..N_EDUCATION_LEVELS`.
    pub education: Vec<(NaiveDate, u8)>,
    /// `(date, level)` with levels ordered `0..N_SCHOOL_LEVELS`.
    pub school: Vec<(NaiveDate, u8)>,
    /// `(date, state)` of each change of residence.
    pub moves: Vec<(NaiveDate, u8)>,
}

impl PersonStatic {
    pub fn new(
        person_id: impl Into<PersonId>,
        birth_year: i32,
        gender: Gender,
        nationality: Nationality,
    ) -> Self {
        PersonStatic {
            person_id: person_id.into(),
            birth_year,
            gender,
            nationality,
            education: Vec::new(),
            school: Vec::new(),
            moves: Vec::new(),
        }
    }
}

/// Groups records (already sorted by person) into per-person slices.
pub fn group_by_person(records: &[RawRecord]) -> Vec<&[RawRecord]> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=records.len() {
        if i == records.len() || records[i].person_id != records[start].person_id {
            if i > start {
                out.push(&records[start..i]);
            }
            start = i;
        }
    }
    out
}

/// Sorts records by `(person_id, start_date)`, breaking ties by end date and type
/// so the order is total.
pub fn sort_records(records: &mut [RawRecord]) {
    records.sort_by(|a, b| {
        (&a.person_id, a.start_date, a.end_date, a.record_type).cmp(&(
            &b.person_id,
            b.start_date,
            b.end_date,
            b.record_type,
        ))
    });
}

pub(crate) fn parse_date(s: &str) -> std::result::Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| format!("malformed date `{s}`: {e}"))
}

pub(crate) fn ensure_sorted_by_person(records: &[RawRecord]) -> Result<()> {
    if records.windows(2).any(|w| w[0].person_id > w[1].person_id) {
        return Err(Error::Invalid(
            "records must be sorted by person_id".to_string(),
        ));
    }
    Ok(())
}
