use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{ensure_sorted_by_person, group_by_person, PersonId, RawRecord, RecordType};
use crate::error::{Error, Result};

/// Interruptions of up to six weeks do not break an unemployment spell.
pub const DEFAULT_GAP_TOLERANCE_DAYS: i64 = 42;
/// A spell is long-term when it lasts strictly longer than this.
pub const LTU_THRESHOLD_DAYS: i64 = 365;
/// Lookahead needed past the sampling window to label every spell.
pub const DEFAULT_HORIZON_DAYS: i64 = 365;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnemploymentSpell {
    pub person_id: PersonId,
    /// `{person_id}-{n}`, numbered from 1 in chronological order.
    pub spell_id: String,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub duration_days: i64,
    pub y_ltu: bool,
    pub year: i32,
}

pub fn label_ltu(duration_days: i64) -> bool {
    duration_days > LTU_THRESHOLD_DAYS
}

/// Date intervals that count as unemployment: unemployment records, and
/// job-seeking records that run in parallel with a program participation.
pub fn qualifying_intervals(records: &[RawRecord]) -> Vec<(NaiveDate, NaiveDate)> {
    let programs: Vec<&RawRecord> = records
        .iter()
        .filter(|r| r.record_type == RecordType::ProgramParticipation)
        .collect();
    let mut out: Vec<(NaiveDate, NaiveDate)> = records
        .iter()
        .filter(|r| match r.record_type {
            RecordType::Unemployment => true,
            RecordType::JobSeeking => programs.iter().any(|p| p.overlaps(r)),
            _ => false,
        })
        .map(|r| (r.start_date, r.end_date))
        .collect();
    out.sort();
    out
}

/// Fuses one person's unemployment-family records into spells.
///
/// Two intervals belong to the same spell when the number of uncovered days
/// between them is at most `gap_tolerance_days`; overlapping or adjacent
/// intervals always fuse. Input order does not matter.
pub fn merge_unemployment_spells(
    records: &[RawRecord],
    gap_tolerance_days: i64,
) -> Result<Vec<UnemploymentSpell>> {
    let Some(first) = records.first() else {
        return Ok(Vec::new());
    };
    if let Some(other) = records.iter().find(|r| r.person_id != first.person_id) {
        return Err(Error::Invalid(format!(
            "records of `{}` and `{}` passed to a single-person merge",
            first.person_id, other.person_id
        )));
    }
    if gap_tolerance_days < 0 {
        return Err(Error::Config("gap tolerance must be non-negative".into()));
    }
    let mut fused: Vec<(NaiveDate, NaiveDate)> = Vec::new();
    for (start, end) in qualifying_intervals(records) {
        match fused.last_mut() {
            Some((_, cur_end)) if (start - *cur_end).num_days() - 1 <= gap_tolerance_days => {
                if end > *cur_end {
                    *cur_end = end;
                }
            }
            _ => fused.push((start, end)),
        }
    }
    Ok(fused
        .into_iter()
        .enumerate()
        .map(|(i, (start_date, end_date))| {
            let duration_days = (end_date - start_date).num_days() + 1;
            UnemploymentSpell {
                person_id: first.person_id.clone(),
                spell_id: format!("{}-{}", first.person_id, i + 1),
                start_date,
                end_date,
                duration_days,
                y_ltu: label_ltu(duration_days),
                year: start_date.year(),
            }
        })
        .collect())
}

/// Merges spells for a whole corpus sorted by person.
pub fn build_spells(
    records: &[RawRecord],
    gap_tolerance_days: i64,
) -> Result<Vec<UnemploymentSpell>> {
    ensure_sorted_by_person(records)?;
    let mut out = Vec::new();
    for group in group_by_person(records) {
        out.extend(merge_unemployment_spells(group, gap_tolerance_days)?);
    }
    Ok(out)
}

/// Sampling window for prediction instances plus the labeling lookahead.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CensorWindow {
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
    pub horizon_days: i64,
    /// Last day covered by the record corpus.
    pub observed_until: NaiveDate,
}

impl CensorWindow {
    /// Window covering whole calendar years, with the corpus observed until the end
    /// of the year after `last_year`.
    pub fn for_years(first_year: i32, last_year: i32, observed_until: NaiveDate) -> Self {
        CensorWindow {
            window_start: NaiveDate::from_ymd_opt(first_year, 1, 1).expect("valid year"),
            window_end: NaiveDate::from_ymd_opt(last_year, 12, 31).expect("valid year"),
            horizon_days: DEFAULT_HORIZON_DAYS,
            observed_until,
        }
    }

    /// Keeps spells starting inside the window.
    ///
    /// Fails when the corpus stops before `window_end + horizon_days`, and when a
    /// kept spell runs into the end of the corpus without already being long-term.
    pub fn apply(&self, spells: Vec<UnemploymentSpell>) -> Result<Vec<UnemploymentSpell>> {
        if self.window_start > self.window_end {
            return Err(Error::Config(format!(
                "window start {} after window end {}",
                self.window_start, self.window_end
            )));
        }
        let required = self.window_end + Duration::days(self.horizon_days);
        if self.observed_until < required {
            return Err(Error::HorizonShortfall {
                observed_until: self.observed_until,
                required,
                shortfall_days: (required - self.observed_until).num_days(),
            });
        }
        let mut kept = Vec::new();
        for s in spells {
            if s.start_date < self.window_start || s.start_date > self.window_end {
                continue;
            }
            if s.end_date >= self.observed_until && !s.y_ltu {
                return Err(Error::RightCensored {
                    spell_id: s.spell_id,
                    end_date: s.end_date,
                    duration_days: s.duration_days,
                });
            }
            kept.push(s);
        }
        Ok(kept)
    }
}
