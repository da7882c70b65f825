use chrono::{Datelike, Duration, NaiveDate};

use super::{DeflatorTable, FeatureConfig};
use crate::episode_store::{PersonStatic, RawRecord, RecordType, TriState, N_INDUSTRIES};
use crate::error::Result;

/// Record types aggregated into count / total / mean / scaled features, in column order.
pub const HISTORY_TYPES: [RecordType; 7] = [
    RecordType::Employment,
    RecordType::Unemployment,
    RecordType::JobSeeking,
    RecordType::BenefitShortTerm,
    RecordType::BenefitLongTerm,
    RecordType::ProgramParticipation,
    RecordType::SubsidizedEmployment,
];

/// Record types checked for activity shortly before entry, in column order.
pub const SIX_WEEK_TYPES: [RecordType; 7] = [
    RecordType::Employment,
    RecordType::BenefitLongTerm,
    RecordType::BenefitShortTerm,
    RecordType::SubsidizedEmployment,
    RecordType::JobSeeking,
    RecordType::ProgramParticipation,
    RecordType::Unemployment,
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SocioDemographics {
    pub age_years: i32,
    /// Highest education level observed up to the reference date.
    pub education: Option<u8>,
    /// Highest school level observed up to the reference date.
    pub school: Option<u8>,
    /// Most recent state of residence.
    pub state: Option<u8>,
    pub n_moves: usize,
}

pub fn sociodemo_features(person: &PersonStatic, as_of: NaiveDate) -> SocioDemographics {
    let highest = |obs: &[(NaiveDate, u8)]| {
        obs.iter()
            .filter(|(d, _)| *d <= as_of)
            .map(|&(_, lvl)| lvl)
            .max()
    };
    let mut moves: Vec<&(NaiveDate, u8)> =
        person.moves.iter().filter(|(d, _)| *d <= as_of).collect();
    moves.sort_by_key(|(d, _)| *d);
    SocioDemographics {
        age_years: as_of.year() - person.birth_year,
        education: highest(&person.education),
        school: highest(&person.school),
        state: moves.last().map(|&&(_, s)| s),
        n_moves: moves.len(),
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TypeAggregate {
    pub count: usize,
    pub total_days: i64,
    /// 0 when `count == 0` (the missing indicator carries that case).
    pub mean_days: f64,
    /// Total days divided by the age in days.
    pub total_scaled: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistoryAggregates {
    /// Indexed like [`HISTORY_TYPES`].
    pub per_type: Vec<TypeAggregate>,
    /// Indexed like [`SIX_WEEK_TYPES`].
    pub status_before: Vec<bool>,
    pub status_before_none: bool,
    pub part_time_days: i64,
    pub fixed_term_days: i64,
    pub temp_work_days: i64,
    pub multi_job_days: i64,
    pub industry_days: Vec<i64>,
    /// Industry with the most employment days (lowest index on ties).
    pub industry_most: Option<u8>,
    pub days_since_employment: Option<i64>,
    pub days_since_unemployment: Option<i64>,
    pub max_skill: Option<u8>,
}

impl HistoryAggregates {
    pub fn empty() -> Self {
        HistoryAggregates {
            per_type: vec![TypeAggregate::default(); HISTORY_TYPES.len()],
            status_before: vec![false; SIX_WEEK_TYPES.len()],
            status_before_none: true,
            part_time_days: 0,
            fixed_term_days: 0,
            temp_work_days: 0,
            multi_job_days: 0,
            industry_days: vec![0; N_INDUSTRIES as usize],
            industry_most: None,
            days_since_employment: None,
            days_since_unemployment: None,
            max_skill: None,
        }
    }
}

pub(crate) fn scale_by_age(days: i64, age_years: i32) -> f64 {
    if age_years <= 0 {
        return 0.0;
    }
    days as f64 / (f64::from(age_years) * 365.25)
}

/// The part of `r` observed before `as_of`, as `(start, clipped_end)`.
fn observed(r: &RawRecord, as_of: NaiveDate) -> Option<(NaiveDate, NaiveDate)> {
    if r.start_date >= as_of {
        return None;
    }
    let last = as_of - Duration::days(1);
    Some((r.start_date, r.end_date.min(last)))
}

fn days(span: (NaiveDate, NaiveDate)) -> i64 {
    (span.1 - span.0).num_days() + 1
}

pub fn history_aggregates(
    records: &[RawRecord],
    as_of: NaiveDate,
    age_years: i32,
    cfg: &FeatureConfig,
) -> HistoryAggregates {
    let mut out = HistoryAggregates::empty();
    let probe = as_of - Duration::days(cfg.status_offset_days);
    let mut last_employment_end: Option<NaiveDate> = None;
    let mut last_unemployment_end: Option<NaiveDate> = None;

    for r in records {
        let Some(span) = observed(r, as_of) else {
            continue;
        };
        let d = days(span);
        if let Some(i) = HISTORY_TYPES.iter().position(|t| *t == r.record_type) {
            let agg = &mut out.per_type[i];
            agg.count += 1;
            agg.total_days += d;
        }
        if span.0 <= probe && probe <= span.1 {
            if let Some(i) = SIX_WEEK_TYPES.iter().position(|t| *t == r.record_type) {
                out.status_before[i] = true;
            }
        }
        if r.record_type.is_employment_family() {
            let a = &r.attrs;
            if a.part_time.is_yes() {
                out.part_time_days += d;
            }
            if a.fixed_term.is_yes() {
                out.fixed_term_days += d;
            }
            if a.temp_work.is_yes() {
                out.temp_work_days += d;
            }
            if a.more_than_one_job == Some(true) {
                out.multi_job_days += d;
            }
            if let Some(ind) = a.industry {
                out.industry_days[usize::from(ind)] += d;
            }
            if let Some(s) = a.skill_level {
                out.max_skill = out.max_skill.max(Some(s));
            }
            last_employment_end = last_employment_end.max(Some(span.1));
        }
        if r.record_type == RecordType::Unemployment {
            last_unemployment_end = last_unemployment_end.max(Some(span.1));
        }
    }

    for agg in &mut out.per_type {
        if agg.count > 0 {
            agg.mean_days = agg.total_days as f64 / agg.count as f64;
        }
        agg.total_scaled = scale_by_age(agg.total_days, age_years);
    }
    out.status_before_none = !out.status_before.iter().any(|&b| b);
    out.industry_most = out
        .industry_days
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > 0)
        // max_by_key keeps the last maximum; reverse so the lowest index wins ties
        .rev()
        .max_by_key(|(_, &d)| d)
        .map(|(i, _)| i as u8);
    out.days_since_employment = last_employment_end.map(|e| (as_of - e).num_days());
    out.days_since_unemployment = last_unemployment_end.map(|e| (as_of - e).num_days());
    out
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LastJob {
    pub present: bool,
    pub duration_days: i64,
    /// Daily wage in base-year prices.
    pub real_wage: Option<f64>,
    pub more_than_one_job: TriState,
    pub part_time: TriState,
    pub fixed_term: TriState,
    pub temp_work: TriState,
    pub skill_level: Option<u8>,
    pub industry: Option<u8>,
}

/// Attributes of the most recent employment record before `as_of` (latest end,
/// then latest start). Wages are deflated with the index of the job's start year.
pub fn last_job_features(
    records: &[RawRecord],
    as_of: NaiveDate,
    deflator: &DeflatorTable,
) -> Result<LastJob> {
    let last = records
        .iter()
        .filter(|r| r.record_type.is_employment_family())
        .filter_map(|r| observed(r, as_of).map(|span| (span, r)))
        .max_by_key(|((start, end), _)| (*end, *start));
    let Some((span, r)) = last else {
        return Ok(LastJob::default());
    };
    let a = &r.attrs;
    let real_wage = match a.daily_wage {
        Some(w) => Some(deflator.deflate(w, r.start_date.year())?),
        None => None,
    };
    Ok(LastJob {
        present: true,
        duration_days: days(span),
        real_wage,
        more_than_one_job: match a.more_than_one_job {
            Some(b) => TriState::from_bool(b),
            None => TriState::Missing,
        },
        part_time: a.part_time,
        fixed_term: a.fixed_term,
        temp_work: a.temp_work,
        skill_level: a.skill_level,
        industry: a.industry,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode_store::{Gender, Nationality};

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn rec(ty: RecordType, s: NaiveDate, e: NaiveDate) -> RawRecord {
        RawRecord::new("p", ty, s, e)
    }

    #[test]
    fn highest_education_wins() {
        let mut p = PersonStatic::new("p", 1980, Gender::Male, Nationality::German);
        p.education = vec![(d(2011, 1, 1), 2), (d(2013, 1, 1), 4), (d(2014, 1, 1), 3)];
        assert_eq!(sociodemo_features(&p, d(2015, 3, 1)).education, Some(4));
        assert_eq!(sociodemo_features(&p, d(2012, 3, 1)).education, Some(2));
        assert_eq!(sociodemo_features(&p, d(2010, 3, 1)).education, None);
    }

    #[test]
    fn state_is_most_recent_and_moves_counted() {
        let mut p = PersonStatic::new("p", 1980, Gender::Male, Nationality::German);
        p.moves = vec![(d(2005, 1, 1), 3), (d(2012, 1, 1), 7), (d(2016, 1, 1), 1)];
        let s = sociodemo_features(&p, d(2015, 1, 1));
        assert_eq!(s.state, Some(7));
        assert_eq!(s.n_moves, 2);
        assert_eq!(s.age_years, 35);
    }

    #[test]
    fn empty_history_has_zero_aggregates() {
        let h = history_aggregates(&[], d(2015, 1, 1), 40, &FeatureConfig::default());
        for agg in &h.per_type {
            assert_eq!(agg.count, 0);
            assert_eq!(agg.total_days, 0);
            assert_eq!(agg.mean_days, 0.0);
        }
        assert!(h.status_before_none);
        assert_eq!(h.industry_most, None);
    }

    #[test]
    fn status_six_weeks_before() {
        let entry = d(2015, 6, 1);
        let probe = entry - Duration::days(42);
        let emp = rec(RecordType::Employment, probe, probe);
        let h = history_aggregates(&[emp], entry, 40, &FeatureConfig::default());
        assert!(h.status_before[0]);
        assert!(!h.status_before_none);
        let emp = rec(
            RecordType::Employment,
            probe + Duration::days(1),
            entry - Duration::days(1),
        );
        let h = history_aggregates(&[emp], entry, 40, &FeatureConfig::default());
        assert!(!h.status_before[0]);
        assert!(h.status_before_none);
    }

    #[test]
    fn scaled_total() {
        // 730 days of job seeking at age 40.
        let js = rec(RecordType::JobSeeking, d(2010, 1, 1), d(2011, 12, 31));
        assert_eq!(js.duration_days(), 730);
        let h = history_aggregates(&[js], d(2014, 1, 1), 40, &FeatureConfig::default());
        let agg = &h.per_type[2];
        assert_eq!(agg.total_days, 730);
        assert_eq!(agg.total_scaled, 730.0 / (40.0 * 365.25));
    }

    #[test]
    fn records_are_clipped_at_entry() {
        let emp = rec(RecordType::Employment, d(2014, 1, 1), d(2016, 1, 1));
        let h = history_aggregates(&[emp], d(2014, 1, 11), 40, &FeatureConfig::default());
        assert_eq!(h.per_type[0].total_days, 10);
        assert_eq!(h.days_since_employment, Some(1));
    }

    #[test]
    fn industry_ties_go_to_lowest_index() {
        let mut a = rec(RecordType::Employment, d(2010, 1, 1), d(2010, 1, 10));
        a.attrs.industry = Some(5);
        let mut b = rec(RecordType::Employment, d(2011, 1, 1), d(2011, 1, 10));
        b.attrs.industry = Some(2);
        let h = history_aggregates(&[a, b], d(2014, 1, 1), 40, &FeatureConfig::default());
        assert_eq!(h.industry_most, Some(2));
    }

    #[test]
    fn deflated_wage_of_later_job() {
        let table = DeflatorTable {
            base_year: 2010,
            index: [(2010, 100.0), (2012, 105.0)].into_iter().collect(),
        };
        let mut early = rec(RecordType::Employment, d(2010, 1, 1), d(2010, 6, 30));
        early.attrs.daily_wage = Some(100.0);
        let mut late = rec(RecordType::Employment, d(2012, 1, 1), d(2012, 6, 30));
        late.attrs.daily_wage = Some(100.0);
        late.attrs.part_time = TriState::Yes;
        let j = last_job_features(&[late.clone(), early.clone()], d(2013, 1, 1), &table).unwrap();
        assert!(j.present);
        assert_eq!(j.part_time, TriState::Yes);
        assert!((j.real_wage.unwrap() - 95.238_095_238_095_24).abs() < 1e-9);
        let j = last_job_features(&[early], d(2013, 1, 1), &table).unwrap();
        assert_eq!(j.real_wage, Some(100.0));
    }

    #[test]
    fn missing_deflator_year_is_an_error() {
        let table = DeflatorTable {
            base_year: 2010,
            index: [(2010, 100.0)].into_iter().collect(),
        };
        let mut job = rec(RecordType::Employment, d(2012, 1, 1), d(2012, 6, 30));
        job.attrs.daily_wage = Some(80.0);
        assert!(last_job_features(&[job], d(2013, 1, 1), &table).is_err());
    }
}
