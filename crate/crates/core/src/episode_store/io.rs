//! CSV readers and writers for records, person attributes and spells.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDate;

use super::{
    parse_date, sort_records, Gender, Nationality, PersonId, PersonStatic, RawRecord, RecordAttrs,
    RecordType, TriState, UnemploymentSpell,
};
use crate::error::{Error, Result};

pub const RECORDS_HEADER: &str = "person_id,record_type,start_date,end_date,daily_wage,industry,part_time,fixed_term,temp_work,skill_level,more_than_one_job";
pub const PERSONS_HEADER: &str = "person_id,birth_year,gender,nationality";
/// Header of the long-format education and school files.
pub const OBSERVATION_HEADER: &str = "person_id,date,level";
pub const MOVES_HEADER: &str = "person_id,date,state";
pub const SPELLS_HEADER: &str = "person_id,spell_id,start_date,end_date,duration_days,y_ltu,year";

/// A row that could not be turned into a value, addressed by its 1-based line number.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rejection {
    pub line: u64,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct Ingested<T> {
    pub rows: Vec<T>,
    pub rejections: Vec<Rejection>,
}

impl<T> Ingested<T> {
    pub fn into_strict(self) -> Result<Vec<T>> {
        match self.rejections.into_iter().next() {
            None => Ok(self.rows),
            Some(r) => Err(Error::Line {
                line: r.line,
                message: r.reason,
            }),
        }
    }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input)
}

fn writer<W: Write>(output: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(output)
}

/// Reads all rows, checking the header and handing each data row to `parse`.
fn ingest<R: Read, T>(
    input: R,
    header: &str,
    mut parse: impl FnMut(&csv::StringRecord) -> std::result::Result<T, String>,
) -> Result<Ingested<T>> {
    let mut rdr = reader(input);
    let mut rows = Vec::new();
    let mut rejections = Vec::new();
    let mut iter = rdr.records();
    let found = match iter.next() {
        Some(rec) => rec?.iter().collect::<Vec<_>>().join(","),
        None => String::new(),
    };
    let found = found.trim_start_matches('\u{feff}').to_string();
    if found != header {
        return Err(Error::Header {
            expected: header.to_string(),
            found,
        });
    }
    let n_fields = header.split(',').count();
    for rec in iter {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != n_fields {
            rejections.push(Rejection {
                line,
                reason: format!("expected {n_fields} fields, found {}", rec.len()),
            });
            continue;
        }
        match parse(&rec) {
            Ok(v) => rows.push(v),
            Err(reason) => rejections.push(Rejection { line, reason }),
        }
    }
    Ok(Ingested { rows, rejections })
}

fn opt<T: std::str::FromStr>(s: &str, name: &str) -> std::result::Result<Option<T>, String> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| format!("malformed {name} `{s}`"))
}

fn tri(s: &str, name: &str) -> std::result::Result<TriState, String> {
    match s {
        "" => Ok(TriState::Missing),
        "1" => Ok(TriState::Yes),
        "0" => Ok(TriState::No),
        other => Err(format!(
            "malformed {name} `{other}` (expected 1, 0 or empty)"
        )),
    }
}

fn tri_str(t: TriState) -> &'static str {
    match t {
        TriState::Yes => "1",
        TriState::No => "0",
        TriState::Missing => "",
    }
}

fn opt_str<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn parse_record(rec: &csv::StringRecord) -> std::result::Result<RawRecord, String> {
    let person_id = rec[0].to_string();
    if person_id.is_empty() {
        return Err("empty person_id".to_string());
    }
    let record_type: RecordType = rec[1].parse()?;
    let start_date = parse_date(&rec[2])?;
    let end_date = parse_date(&rec[3])?;
    let more_than_one_job = match &rec[10] {
        "" => None,
        "1" => Some(true),
        "0" => Some(false),
        other => return Err(format!("malformed more_than_one_job `{other}`")),
    };
    let record = RawRecord {
        person_id: PersonId(person_id),
        record_type,
        start_date,
        end_date,
        attrs: RecordAttrs {
            daily_wage: opt(&rec[4], "daily_wage")?,
            industry: opt(&rec[5], "industry")?,
            part_time: tri(&rec[6], "part_time")?,
            fixed_term: tri(&rec[7], "fixed_term")?,
            temp_work: tri(&rec[8], "temp_work")?,
            skill_level: opt(&rec[9], "skill_level")?,
            more_than_one_job,
        },
    };
    record.validate()?;
    Ok(record)
}

/// Parses a record CSV. Valid rows come back sorted by `(person_id, start_date)`;
/// invalid rows are reported with their line number.
pub fn read_records<R: Read>(input: R) -> Result<Ingested<RawRecord>> {
    let mut out = ingest(input, RECORDS_HEADER, parse_record)?;
    sort_records(&mut out.rows);
    Ok(out)
}

pub fn write_records<W: Write>(output: W, records: &[RawRecord]) -> Result<()> {
    let mut w = writer(output);
    w.write_record(RECORDS_HEADER.split(','))?;
    for r in records {
        let a = &r.attrs;
        w.write_record([
            r.person_id.0.as_str(),
            r.record_type.as_str(),
            &r.start_date.to_string(),
            &r.end_date.to_string(),
            &opt_str(a.daily_wage),
            &opt_str(a.industry),
            tri_str(a.part_time),
            tri_str(a.fixed_term),
            tri_str(a.temp_work),
            &opt_str(a.skill_level),
            match a.more_than_one_job {
                None => "",
                Some(true) => "1",
                Some(false) => "0",
            },
        ])?;
    }
    w.flush().map_err(|e| Error::io("<records>", e))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PersonRow {
    pub person_id: PersonId,
    pub birth_year: i32,
    pub gender: Gender,
    pub nationality: Nationality,
}

pub fn read_persons<R: Read>(input: R) -> Result<Ingested<PersonRow>> {
    let mut out = ingest(input, PERSONS_HEADER, |rec| {
        if rec[0].is_empty() {
            return Err("empty person_id".to_string());
        }
        Ok(PersonRow {
            person_id: PersonId(rec[0].to_string()),
            birth_year: rec[1]
                .parse()
                .map_err(|_| format!("malformed birth_year `{}`", &rec[1]))?,
            gender: rec[2].parse()?,
            nationality: rec[3].parse()?,
        })
    })?;
    out.rows.sort_by(|a, b| a.person_id.cmp(&b.person_id));
    Ok(out)
}

pub fn write_persons<W: Write>(output: W, persons: &[PersonStatic]) -> Result<()> {
    let mut w = writer(output);
    w.write_record(PERSONS_HEADER.split(','))?;
    for p in persons {
        w.write_record([
            p.person_id.0.as_str(),
            &p.birth_year.to_string(),
            p.gender.as_str(),
            p.nationality.as_str(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<persons>", e))?;
    Ok(())
}

/// One dated categorical observation from a long-format file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Observation {
    pub person_id: PersonId,
    pub date: NaiveDate,
    pub value: u8,
}

/// Reads a long-format observation file (`header` is one of [`OBSERVATION_HEADER`]
/// or [`MOVES_HEADER`]); values must lie in `0..n_levels`.
pub fn read_observations<R: Read>(
    input: R,
    header: &str,
    n_levels: u8,
) -> Result<Ingested<Observation>> {
    ingest(input, header, |rec| {
        if rec[0].is_empty() {
            return Err("empty person_id".to_string());
        }
        let value: u8 = rec[2]
            .parse()
            .map_err(|_| format!("malformed value `{}`", &rec[2]))?;
        if value >= n_levels {
            return Err(format!("value {value} out of range 0..{n_levels}"));
        }
        Ok(Observation {
            person_id: PersonId(rec[0].to_string()),
            date: parse_date(&rec[1])?,
            value,
        })
    })
}

pub fn write_observations<'a, W: Write>(
    output: W,
    header: &str,
    rows: impl IntoIterator<Item = (&'a PersonId, NaiveDate, u8)>,
) -> Result<()> {
    let mut w = writer(output);
    w.write_record(header.split(','))?;
    for (pid, date, v) in rows {
        w.write_record([pid.0.as_str(), &date.to_string(), &v.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<observations>", e))?;
    Ok(())
}

/// Joins person rows with their dated observations. Observations are sorted by date.
pub fn assemble_persons(
    persons: Vec<PersonRow>,
    education: Vec<Observation>,
    school: Vec<Observation>,
    moves: Vec<Observation>,
) -> Result<Vec<PersonStatic>> {
    let mut map: BTreeMap<PersonId, PersonStatic> = BTreeMap::new();
    for p in persons {
        let id = p.person_id.clone();
        let prev = map.insert(
            id.clone(),
            PersonStatic::new(p.person_id, p.birth_year, p.gender, p.nationality),
        );
        if prev.is_some() {
            return Err(Error::Invalid(format!("duplicate person `{id}`")));
        }
    }
    let mut attach = |obs: Vec<Observation>,
                      pick: fn(&mut PersonStatic) -> &mut Vec<(NaiveDate, u8)>|
     -> Result<()> {
        for o in obs {
            let p = map.get_mut(&o.person_id).ok_or_else(|| {
                Error::Invalid(format!("observation for unknown person `{}`", o.person_id))
            })?;
            pick(p).push((o.date, o.value));
        }
        Ok(())
    };
    attach(education, |p| &mut p.education)?;
    attach(school, |p| &mut p.school)?;
    attach(moves, |p| &mut p.moves)?;
    let mut out: Vec<PersonStatic> = map.into_values().collect();
    for p in &mut out {
        p.education.sort();
        p.school.sort();
        p.moves.sort();
    }
    Ok(out)
}

pub fn write_spells<W: Write>(output: W, spells: &[UnemploymentSpell]) -> Result<()> {
    let mut w = writer(output);
    w.write_record(SPELLS_HEADER.split(','))?;
    for s in spells {
        w.write_record([
            s.person_id.0.as_str(),
            s.spell_id.as_str(),
            &s.start_date.to_string(),
            &s.end_date.to_string(),
            &s.duration_days.to_string(),
            if s.y_ltu { "1" } else { "0" },
            &s.year.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<spells>", e))?;
    Ok(())
}

pub fn read_spells<R: Read>(input: R) -> Result<Vec<UnemploymentSpell>> {
    let parsed = ingest(input, SPELLS_HEADER, |rec| {
        let start_date = parse_date(&rec[2])?;
        let end_date = parse_date(&rec[3])?;
        let duration_days: i64 = rec[4]
            .parse()
            .map_err(|_| format!("malformed duration_days `{}`", &rec[4]))?;
        if duration_days != (end_date - start_date).num_days() + 1 {
            return Err("duration_days inconsistent with dates".to_string());
        }
        let y_ltu = match &rec[5] {
            "1" => true,
            "0" => false,
            other => return Err(format!("malformed y_ltu `{other}`")),
        };
        Ok(UnemploymentSpell {
            person_id: PersonId(rec[0].to_string()),
            spell_id: rec[1].to_string(),
            start_date,
            end_date,
            duration_days,
            y_ltu,
            year: rec[6]
                .parse()
                .map_err(|_| format!("malformed year `{}`", &rec[6]))?,
        })
    })?;
    parsed.into_strict()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        parse_date(s).unwrap()
    }

    #[test]
    fn three_valid_lines() {
        let csv = format!(
            "{RECORDS_HEADER}\n\
             a,employment,2010-01-01,2010-06-30,85.5,3,0,1,,2,0\n\
             a,unemployment,2010-07-01,2010-12-31,,,,,,,\n\
             b,benefit_long_term,2011-01-01,2011-03-01,,,,,,,\n"
        );
        let got = read_records(csv.as_bytes()).unwrap();
        assert_eq!(got.rows.len(), 3);
        assert!(got.rejections.is_empty());
        assert_eq!(got.rows[0].attrs.daily_wage, Some(85.5));
        assert_eq!(got.rows[0].attrs.temp_work, TriState::Missing);
        assert_eq!(got.rows[0].attrs.fixed_term, TriState::Yes);
    }

    #[test]
    fn rejections_name_the_line() {
        let csv = format!(
            "{RECORDS_HEADER}\n\
             a,unemployment,2010-07-01,2010-06-30,,,,,,,\n\
             a,holiday,2010-07-01,2010-07-30,,,,,,,\n\
             a,unemployment,2010-13-01,2010-07-30,,,,,,,\n\
             a,unemployment,2010-01-01,2010-07-30,50,,,,,,\n\
             a,unemployment,2011-01-01,2011-07-30,,,,,,,\n"
        );
        let got = read_records(csv.as_bytes()).unwrap();
        assert_eq!(got.rows.len(), 1);
        let lines: Vec<u64> = got.rejections.iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![2, 3, 4, 5]);
        assert!(got.rejections[0].reason.contains("after end_date"));
        assert!(got.rejections[1].reason.contains("unknown record_type"));
        assert!(got.rejections[2].reason.contains("malformed date"));
    }

    #[test]
    fn header_mismatch_is_file_level() {
        let csv = "person,record_type\nx,y\n";
        assert!(matches!(
            read_records(csv.as_bytes()),
            Err(Error::Header { .. })
        ));
    }

    #[test]
    fn output_is_sorted() {
        let csv = format!(
            "{RECORDS_HEADER}\n\
             b,unemployment,2010-01-01,2010-01-31,,,,,,,\n\
             a,unemployment,2012-01-01,2012-01-31,,,,,,,\n\
             a,unemployment,2011-01-01,2011-01-31,,,,,,,\n"
        );
        let got = read_records(csv.as_bytes()).unwrap().rows;
        assert_eq!(got[0].start_date, d("2011-01-01"));
        assert_eq!(got[1].start_date, d("2012-01-01"));
        assert_eq!(got[2].person_id.0, "b");
    }

    #[test]
    fn persons_are_assembled_with_sorted_observations() {
        let persons = read_persons(
            format!("{PERSONS_HEADER}\np1,1980,female,non_german\np2,1975,male,german\n")
                .as_bytes(),
        )
        .unwrap()
        .into_strict()
        .unwrap();
        let edu = read_observations(
            format!("{OBSERVATION_HEADER}\np1,2013-01-01,4\np1,2011-01-01,2\n").as_bytes(),
            OBSERVATION_HEADER,
            6,
        )
        .unwrap()
        .into_strict()
        .unwrap();
        let out = assemble_persons(persons, edu, vec![], vec![]).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(
            out[0].education,
            vec![(d("2011-01-01"), 2), (d("2013-01-01"), 4)]
        );
        assert_eq!(out[0].gender, Gender::Female);
        assert_eq!(out[0].nationality, Nationality::NonGerman);
    }

    #[test]
    fn out_of_range_level_is_rejected() {
        let got = read_observations(
            format!("{OBSERVATION_HEADER}\np1,2013-01-01,9\n").as_bytes(),
            OBSERVATION_HEADER,
            6,
        )
        .unwrap();
        assert_eq!(got.rejections.len(), 1);
        assert_eq!(got.rejections[0].line, 2);
    }
}
