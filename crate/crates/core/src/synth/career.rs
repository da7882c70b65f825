//! Simulation of one person's labor-market biography.

use chrono::{Datelike, Duration, NaiveDate};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp, LogNormal, Normal, Poisson};

use super::{SynthConfig, TruthSpell};
use crate::episode_store::{
    Gender, Nationality, PersonId, PersonStatic, RawRecord, RecordAttrs, RecordType, TriState,
    N_INDUSTRIES, N_SKILL_LEVELS, N_STATES,
};
use crate::features::DeflatorTable;
use crate::models::{sigmoid, sub_rng};

/// Distribution of the highest school level; levels 5 and 6 count as high education.
const SCHOOL_PROBS: [f64; 7] = [0.04, 0.08, 0.30, 0.18, 0.10, 0.20, 0.10];
const HIGH_SCHOOL_LEVEL: u8 = 5;

pub(crate) struct PersonOutcome {
    pub person: PersonStatic,
    pub records: Vec<RawRecord>,
    pub truth: Vec<TruthSpell>,
}

fn day(d: NaiveDate, n: i64) -> NaiveDate {
    d + Duration::days(n)
}

fn jan1(year: i32) -> NaiveDate {
    NaiveDate::from_ymd_opt(year, 1, 1).expect("valid year")
}

fn pick_weighted(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn tri(rng: &mut ChaCha8Rng, p_yes: f64, p_missing: f64) -> TriState {
    if rng.random::<f64>() < p_missing {
        TriState::Missing
    } else {
        TriState::from_bool(rng.random::<f64>() < p_yes)
    }
}

/// Risk-relevant state of a biography at a given date, measured the same way the
/// feature builder measures it.
struct CareerState {
    age: f64,
    unemployment_scaled: f64,
    unemployment_records: f64,
    employment_scaled: f64,
    last_log_wage: Option<f64>,
    last_part_time: bool,
    days_since_employment: Option<i64>,
    long_term_benefit_before: bool,
}

struct Sim<'a> {
    cfg: &'a SynthConfig,
    intercept: f64,
    deflator: &'a DeflatorTable,
    rng: ChaCha8Rng,
    pid: PersonId,
    birth_year: i32,
    school: u8,
    latent: f64,
    obs_end: NaiveDate,
    records: Vec<RawRecord>,
    truth: Vec<TruthSpell>,
    next_is_subsidized: bool,
}

impl Sim<'_> {
    fn push(&mut self, kind: RecordType, start: NaiveDate, end: NaiveDate) -> usize {
        let end = end.min(self.obs_end);
        debug_assert!(start <= end);
        self.records
            .push(RawRecord::new(self.pid.clone(), kind, start, end));
        self.records.len() - 1
    }

    fn state_at(&self, as_of: NaiveDate) -> CareerState {
        let age = f64::from(as_of.year() - self.birth_year);
        let age_days = age * 365.25;
        let mut unemp_days = 0i64;
        let mut unemp_records = 0usize;
        let mut emp_days = 0i64;
        let mut last_job: Option<(NaiveDate, NaiveDate, usize)> = None;
        let mut ltb = false;
        let six_weeks = day(as_of, -42);
        let limit = day(as_of, -1);
        for (i, r) in self.records.iter().enumerate() {
            if r.start_date >= as_of {
                continue;
            }
            let end = r.end_date.min(limit);
            let days = (end - r.start_date).num_days() + 1;
            match r.record_type {
                RecordType::Unemployment => {
                    unemp_days += days;
                    unemp_records += 1;
                }
                t if t.is_employment_family() => {
                    emp_days += days;
                    if last_job.is_none_or(|(e, s, _)| (end, r.start_date) > (e, s)) {
                        last_job = Some((end, r.start_date, i));
                    }
                }
                RecordType::BenefitLongTerm => {
                    ltb |= r.covers(six_weeks);
                }
                _ => {}
            }
        }
        let (last_log_wage, last_part_time, days_since_employment) = match last_job {
            Some((end, _, i)) => {
                let r = &self.records[i];
                let wage = r.attrs.daily_wage.and_then(|w| {
                    self.deflator
                        .deflate(w, r.start_date.year())
                        .ok()
                        .filter(|v| *v > 0.0)
                        .map(f64::ln)
                });
                (
                    wage,
                    r.attrs.part_time.is_yes(),
                    Some((as_of - end).num_days()),
                )
            }
            None => (None, false, None),
        };
        CareerState {
            age,
            unemployment_scaled: unemp_days as f64 / age_days,
            unemployment_records: unemp_records as f64,
            employment_scaled: emp_days as f64 / age_days,
            last_log_wage,
            last_part_time,
            days_since_employment,
            long_term_benefit_before: ltb,
        }
    }

    /// Log-odds that an unemployment spell starting at `start` lasts over a year.
    fn risk(&mut self, start: NaiveDate) -> f64 {
        let s = self.state_at(start);
        let r = &self.cfg.risk;
        let a = (s.age - 40.0) / 10.0;
        let detached = s.days_since_employment.is_none_or(|d| d > 730);
        let mut z = self.intercept
            + r.age * a
            + r.age_sq * a * a
            + r.unemployment_scaled * s.unemployment_scaled
            + r.unemployment_count * s.unemployment_records.min(6.0)
            + r.employment_scaled * s.employment_scaled
            + r.part_time * f64::from(u8::from(s.last_part_time))
            + r.high_education * f64::from(u8::from(self.school >= HIGH_SCHOOL_LEVEL))
            + r.long_since_employment * f64::from(u8::from(detached))
            + r.long_term_benefit * f64::from(u8::from(s.long_term_benefit_before))
            + r.older_and_detached * f64::from(u8::from(s.age >= 50.0 && detached))
            + r.benefit_and_history
                * f64::from(u8::from(
                    s.long_term_benefit_before && s.unemployment_scaled > 0.1,
                ))
            + r.low_wage * f64::from(u8::from(s.last_log_wage.is_some_and(|w| w < 45f64.ln())))
            + r.latent * self.latent;
        z += match s.last_log_wage {
            Some(w) => r.log_wage * (w - 4.5),
            None => r.no_wage,
        };
        if r.noise_sd > 0.0 {
            z += Normal::new(0.0, r.noise_sd)
                .expect("valid sd")
                .sample(&mut self.rng);
        }
        z
    }

    /// Draws the long-term outcome and the duration of a spell starting at `start`.
    fn draw_spell(&mut self, start: NaiveDate) -> (bool, i64) {
        let z = self.risk(start);
        let ltu = self.rng.random::<f64>() < sigmoid(z);
        let duration = if ltu {
            let extra: f64 = Exp::new(1.0 / 300.0)
                .expect("valid rate")
                .sample(&mut self.rng);
            366 + (extra as i64).min(2500)
        } else {
            let b: f64 = Beta::new(1.3, 2.2)
                .expect("valid shape")
                .sample(&mut self.rng);
            14 + (b * 351.0) as i64
        };
        (ltu, duration)
    }

    fn employment(&mut self, start: NaiveDate, end: NaiveDate) {
        let kind = if std::mem::take(&mut self.next_is_subsidized) {
            RecordType::SubsidizedEmployment
        } else {
            RecordType::Employment
        };
        let i = self.push(kind, start, end);
        let c = self.latent;
        let rng = &mut self.rng;
        let log_real = 4.2 + 0.1 * f64::from(self.school) - 0.2 * c
            + Normal::new(0.0, 0.3).expect("valid sd").sample(rng);
        let nominal = log_real.exp() * self.deflator.lookup(start.year()).unwrap_or(1.0)
            / self.deflator.lookup(self.deflator.base_year).unwrap_or(1.0);
        let skill = ((f64::from(self.school) / 2.0 + rng.random_range(-1.0..1.0)).round())
            .clamp(0.0, f64::from(N_SKILL_LEVELS - 1)) as u8;
        let attrs = RecordAttrs {
            daily_wage: if rng.random::<f64>() < 0.03 {
                None
            } else {
                Some((nominal * 100.0).round() / 100.0)
            },
            industry: Some(rng.random_range(0..N_INDUSTRIES)),
            part_time: tri(rng, sigmoid(-1.3 + 0.6 * c), 0.05),
            fixed_term: tri(rng, sigmoid(-1.0 + 0.5 * c), 0.05),
            temp_work: tri(rng, sigmoid(-2.0 + 0.5 * c), 0.05),
            skill_level: if rng.random::<f64>() < 0.05 {
                None
            } else {
                Some(skill)
            },
            more_than_one_job: Some(rng.random::<f64>() < 0.05),
        };
        self.records[i].attrs = attrs;
        // Registered job search towards the end of a longer job.
        let len = (self.records[i].end_date - start).num_days() + 1;
        if len > 200 && self.rng.random::<f64>() < 0.15 {
            let end = self.records[i].end_date;
            self.push(RecordType::JobSeeking, day(end, -60), end);
        }
    }

    fn employment_days_before(&self, date: NaiveDate, window: i64) -> i64 {
        let from = day(date, -window);
        self.records
            .iter()
            .filter(|r| {
                r.record_type.is_employment_family() && r.end_date >= from && r.start_date < date
            })
            .map(|r| (r.end_date.min(day(date, -1)) - r.start_date.max(from)).num_days() + 1)
            .sum()
    }

    /// Records one unemployment spell `[s, e]`, possibly interrupted by a program
    /// or a short uncovered gap, together with its benefit receipt.
    fn unemployment_spell(&mut self, s: NaiveDate, e: NaiveDate, ltu: bool) {
        let eligible_short_term = self.employment_days_before(s, 730) >= 360;
        let d = (e - s).num_days() + 1;
        let r: f64 = self.rng.random();
        if d >= 120 && r < 0.25 {
            let ps = day(s, 30 + self.rng.random_range(0..d / 3));
            let room = (e - ps).num_days() - 10;
            let len = self.rng.random_range(30..=room.clamp(30, 180));
            let pe = day(ps, len - 1).min(day(e, -1));
            self.push(RecordType::Unemployment, s, day(ps, -1));
            self.push(RecordType::ProgramParticipation, ps, pe);
            self.push(RecordType::JobSeeking, ps, pe);
            self.push(RecordType::Unemployment, day(pe, 1), e);
        } else if d >= 90 && r < 0.40 {
            let m = day(s, 20 + self.rng.random_range(0..d - 70));
            let gap = self.rng.random_range(1..=42i64).min((e - m).num_days() - 2);
            self.push(RecordType::Unemployment, s, m);
            if self.rng.random::<f64>() < 0.5 {
                self.employment(day(m, 1), day(m, gap));
            }
            self.push(RecordType::Unemployment, day(m, gap + 1), e);
        } else {
            self.push(RecordType::Unemployment, s, e);
        }
        let long_term_until = if eligible_short_term {
            let short_end = day(s, 364).min(e);
            self.push(RecordType::BenefitShortTerm, s, short_end);
            if e > short_end {
                self.push(RecordType::BenefitLongTerm, day(short_end, 1), e);
                Some(e)
            } else {
                None
            }
        } else if self.rng.random::<f64>() < 0.8 {
            self.push(RecordType::BenefitLongTerm, s, e);
            Some(e)
        } else {
            None
        };
        // Long-term benefits often continue as a top-up after the spell.
        if long_term_until.is_some() && e < self.obs_end && self.rng.random::<f64>() < 0.4 {
            let extra = self.rng.random_range(30..400);
            self.push(RecordType::BenefitLongTerm, day(e, 1), day(e, extra));
        }
        self.truth.push(TruthSpell {
            person_id: self.pid.clone(),
            start_date: s,
            end_date: e.min(self.obs_end),
            y_ltu: ltu,
        });
        self.next_is_subsidized = self.rng.random::<f64>() < 0.1;
    }

    fn employment_length(&mut self) -> i64 {
        let median = 700.0 * (-0.4 * self.latent).exp();
        let l: f64 = LogNormal::new(median.ln(), 0.9)
            .expect("valid sd")
            .sample(&mut self.rng);
        (l as i64).clamp(60, 8000)
    }

    fn p_unemployment(&self) -> f64 {
        sigmoid(-0.6 + 0.8 * self.latent)
    }
}

/// Simulates person `index`. All randomness comes from stream `index` of the
/// configured seed.
pub(crate) fn simulate_person(
    cfg: &SynthConfig,
    intercept: f64,
    deflator: &DeflatorTable,
    index: u64,
) -> PersonOutcome {
    let mut rng = sub_rng(cfg.seed, index);
    let years: Vec<i32> = (cfg.first_year..=cfg.last_year).collect();
    let focal_year = years[pick_weighted(&mut rng, &cfg.year_weights())];
    let prev = cfg.prevalence_for(focal_year);
    let non_german = rng.random::<f64>() < prev.non_german;
    let female = rng.random::<f64>() < prev.female_probability(non_german);
    let school = pick_weighted(&mut rng, &SCHOOL_PROBS) as u8;
    let high_ed = school >= HIGH_SCHOOL_LEVEL;
    let skewed = non_german && !high_ed;
    let shrink = if skewed { 1.0 - cfg.skew } else { 1.0 };

    let b: f64 = Beta::new(2.0, 2.4).expect("valid shape").sample(&mut rng);
    let age = 19.0 + (b * 46.0).floor();
    let age = (40.0 + (age - 40.0) * shrink).round().clamp(19.0, 64.0) as i32;
    let mean = -0.25 * (f64::from(school) - 3.0)
        + cfg.group_shift.non_german * f64::from(u8::from(non_german))
        + cfg.group_shift.female * f64::from(u8::from(female));
    let noise: f64 = Normal::new(0.0, 1.0).expect("valid sd").sample(&mut rng);
    let latent = mean + noise * shrink;

    let birth_year = focal_year - age;
    let pid = PersonId(format!("P{index:07}"));
    let mut person = PersonStatic::new(
        pid.clone(),
        birth_year,
        if female { Gender::Female } else { Gender::Male },
        if non_german {
            Nationality::NonGerman
        } else {
            Nationality::German
        },
    );
    let year_days = i64::from(if NaiveDate::from_ymd_opt(focal_year, 2, 29).is_some() {
        366
    } else {
        365
    });
    let focal_start = day(jan1(focal_year), rng.random_range(0..year_days));
    let obs_end = NaiveDate::from_ymd_opt(cfg.last_year + 1, 12, 31).expect("valid year");

    let study = if high_ed { rng.random_range(0..5) } else { 0 };
    let career_start = jan1(birth_year + 18 + study)
        .max(jan1(cfg.first_year - cfg.history_years))
        .min(focal_start);

    person.school.push((jan1(birth_year + 16), school));
    let education = (i32::from(school) - 1 + rng.random_range(-1..=1)).clamp(0, 5) as u8;
    person
        .education
        .push((jan1(birth_year + 20 + study), education));
    let mut state = rng.random_range(0..N_STATES);
    person.moves.push((jan1(birth_year + 16), state));
    let career_years = f64::from((obs_end.year() - career_start.year()).max(1));
    let n_moves: f64 = Poisson::new(0.03 * career_years + 1e-9)
        .expect("valid mean")
        .sample(&mut rng);
    let span = (obs_end - career_start).num_days().max(1);
    let mut move_dates: Vec<NaiveDate> = (0..n_moves as usize)
        .map(|_| day(career_start, rng.random_range(0..span)))
        .collect();
    move_dates.sort();
    for d in move_dates {
        state = (state + rng.random_range(1..N_STATES)) % N_STATES;
        person.moves.push((d, state));
    }

    let mut sim = Sim {
        cfg,
        intercept,
        deflator,
        rng,
        pid,
        birth_year,
        school,
        latent,
        obs_end,
        records: Vec::new(),
        truth: Vec::new(),
        next_is_subsidized: false,
    };

    // Biography up to the focal spell. Earlier spells end more than six weeks
    // before the focal spell so they never fuse with it.
    let mut t = career_start;
    let latest_prior_end = day(focal_start, -44);
    while t < latest_prior_end {
        let len = sim.employment_length();
        let end = day(t, len - 1);
        if end >= day(focal_start, -1) {
            let end = day(focal_start, -1 - sim.rng.random_range(0..30));
            if end >= t {
                sim.employment(t, end);
            }
            break;
        }
        sim.employment(t, end);
        t = day(end, 1);
        let u: f64 = sim.rng.random();
        let p_u = sim.p_unemployment();
        if u < p_u {
            let s = day(t, sim.rng.random_range(0..14));
            let (ltu, d) = sim.draw_spell(s);
            let e = day(s, d - 1);
            if e >= latest_prior_end {
                break;
            }
            sim.unemployment_spell(s, e, ltu);
            t = day(e, 1 + sim.rng.random_range(0..20));
        } else if u < p_u + 0.08 {
            t = day(t, sim.rng.random_range(60..700));
        } else {
            t = day(t, sim.rng.random_range(0..20));
        }
    }

    let (ltu, d) = sim.draw_spell(focal_start);
    let focal_end = day(focal_start, d - 1).min(obs_end);
    sim.unemployment_spell(focal_start, focal_end, ltu);

    // Employed until the end of observation; no further unemployment.
    let mut t = day(focal_end, 1 + sim.rng.random_range(0..30));
    while t <= obs_end {
        let len = sim.employment_length();
        let end = day(t, len - 1).min(obs_end);
        sim.employment(t, end);
        t = day(end, 1 + sim.rng.random_range(0..20));
    }

    PersonOutcome {
        person,
        records: sim.records,
        truth: sim.truth,
    }
}
