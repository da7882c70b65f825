//! Fuses unemployment-family records into spells and labels long-term
//! unemployment, showing the six-week gap rule and job seeking during a program.

use chrono::NaiveDate;
use ltu_profiling::episode_store::{
    merge_unemployment_spells, RawRecord, RecordType, DEFAULT_GAP_TOLERANCE_DAYS,
};

fn date(s: &str) -> NaiveDate {
    s.parse().expect("ISO date")
}

fn record(kind: RecordType, start: &str, end: &str) -> RawRecord {
    RawRecord::new("P0000001", kind, date(start), date(end))
}

fn main() -> ltu_profiling::Result<()> {
    let records = vec![
        record(RecordType::Employment, "2009-01-01", "2011-02-28"),
        // 42 uncovered days between these two: one spell.
        record(RecordType::Unemployment, "2011-03-01", "2011-06-30"),
        record(RecordType::Unemployment, "2011-08-12", "2011-12-31"),
        // Job seeking counts while a program runs in parallel.
        record(RecordType::ProgramParticipation, "2012-01-10", "2012-04-30"),
        record(RecordType::JobSeeking, "2012-01-01", "2012-05-15"),
        record(RecordType::Employment, "2012-06-01", "2013-12-31"),
        // 43 uncovered days: two spells.
        record(RecordType::Unemployment, "2014-01-01", "2014-02-28"),
        record(RecordType::Unemployment, "2014-04-13", "2014-05-31"),
    ];
    for s in merge_unemployment_spells(&records, DEFAULT_GAP_TOLERANCE_DAYS)? {
        println!(
            "{}  {} .. {}  {:>4} days  {}",
            s.spell_id,
            s.start_date,
            s.end_date,
            s.duration_days,
            if s.y_ltu { "long-term" } else { "short-term" }
        );
    }
    Ok(())
}
