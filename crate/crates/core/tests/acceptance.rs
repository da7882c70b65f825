//! Acceptance checks. Each criterion prints one `PASS` or `FAIL` line; the
//! process exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ltu_profiling::cv::{
    fold_rows, grid_search, make_folds, subsample_per_year, Dataset, TemporalFold,
};
use ltu_profiling::episode_store::{merge_unemployment_spells, RawRecord, RecordType};
use ltu_profiling::fairness::{conditional_spd, consistency, min_max_scale, spd, NeighborIndex};
use ltu_profiling::features::FeatureSchema;
use ltu_profiling::metrics::{accuracy, f1, pr_auc, precision_at_k, recall_at_k, roc_auc, Metric};
use ltu_profiling::models::{
    predict_risk, train, train_gbm, train_lr, train_plr, GbmParams, HyperParams, LogisticObjective,
    LrOptions, Matrix, MaxFeatures, ModelParams, Penalty, PlrParams, RfParams, TrainedModel,
    TrainingSet, PLR_C,
};
use ltu_profiling::pipeline::{self, DataSource, MethodConfig, RunConfig};
use ltu_profiling::policy::{classify, Policy};
use ltu_profiling::synth::{self, SynthConfig};

type Check = Result<(), String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn labels(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<bool> {
    (0..n).map(|_| rng.random_bool(p)).collect()
}

fn schema(p: usize) -> FeatureSchema {
    FeatureSchema::from_names((0..p).map(|j| format!("x{j}")))
}

fn coefficients(m: &TrainedModel) -> Vec<f64> {
    match &m.params {
        ModelParams::Linear(l) => std::iter::once(l.intercept)
            .chain(l.coefficients.iter().copied())
            .collect(),
        _ => panic!("not a linear model"),
    }
}

// Metric oracles

fn pairwise_auc(scores: &[f64], y: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..y.len() {
        for j in 0..y.len() {
            if y[i] && !y[j] {
                den += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

fn sorted_desc(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    order
}

fn rank_by_rank_ap(scores: &[f64], y: &[bool]) -> f64 {
    let order = sorted_desc(scores);
    let mut hits = 0.0;
    let mut total = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if y[i] {
            hits += 1.0;
            total += hits / (rank + 1) as f64;
        }
    }
    total / hits
}

fn metric_oracles() -> Check {
    let mut r = rng(1);
    for inst in 0..200 {
        let n = r.random_range(2..300);
        let rate = r.random_range(0.05..0.6);
        let y = labels(&mut r, n, rate);
        if y.iter().all(|&v| v == y[0]) {
            continue;
        }
        // Every fourth instance has heavily tied scores.
        let scores: Vec<f64> = if inst % 4 == 0 {
            (0..n).map(|_| f64::from(r.random_range(0..5u8))).collect()
        } else {
            (0..n).map(|_| r.random::<f64>()).collect()
        };
        let auc = roc_auc(&scores, &y).map_err(fail)?.unwrap();
        let oracle = pairwise_auc(&scores, &y);
        ensure((auc - oracle).abs() <= 1e-12, || {
            format!("instance {inst}: AUC {auc} vs pairwise {oracle}")
        })?;

        if inst % 4 != 0 {
            let ap = pr_auc(&scores, &y).map_err(fail)?.unwrap();
            let oracle = rank_by_rank_ap(&scores, &y);
            ensure((ap - oracle).abs() <= 1e-12, || {
                format!("instance {inst}: AP {ap} vs {oracle}")
            })?;
        }

        let k = r.random_range(1..=n);
        let top = &sorted_desc(&scores)[..k];
        let y_hat: Vec<bool> = (0..n).map(|i| top.contains(&i)).collect();
        let tp = (0..n).filter(|&i| y_hat[i] && y[i]).count() as f64;
        let fp = (0..n).filter(|&i| y_hat[i] && !y[i]).count() as f64;
        let fn_ = (0..n).filter(|&i| !y_hat[i] && y[i]).count() as f64;
        let tn = n as f64 - tp - fp - fn_;
        let p = precision_at_k(&scores, &y, k).map_err(fail)?;
        let rec = recall_at_k(&scores, &y, k).map_err(fail)?.unwrap();
        ensure(p == tp / (tp + fp), || {
            format!("instance {inst}: precision@{k} {p}")
        })?;
        ensure(rec == tp / (tp + fn_), || {
            format!("instance {inst}: recall@{k} {rec}")
        })?;
        let acc = accuracy(&y_hat, &y).map_err(fail)?;
        ensure((acc - (tp + tn) / n as f64).abs() <= 1e-15, || {
            format!("instance {inst}: accuracy {acc}")
        })?;
        let f = f1(Metric::Value(p), Metric::Value(rec));
        let oracle = if tp == 0.0 {
            0.0
        } else {
            2.0 * tp / (2.0 * tp + fp + fn_)
        };
        ensure((f.unwrap() - oracle).abs() <= 1e-12, || {
            format!("instance {inst}: F1 {f:?} vs {oracle}")
        })?;
    }
    Ok(())
}

// Fairness oracles

fn direct_rate_gap(y_hat: &[bool], group: &[bool], cond: &[bool]) -> f64 {
    let rate = |want: bool| {
        let rows: Vec<usize> = (0..y_hat.len())
            .filter(|&i| cond[i] && group[i] == want)
            .collect();
        rows.iter().filter(|&&i| y_hat[i]).count() as f64 / rows.len() as f64
    };
    rate(true) - rate(false)
}

fn brute_force_consistency(x: &Matrix, y_hat: &[bool], k: usize) -> (Vec<Vec<usize>>, f64) {
    let x = min_max_scale(x);
    let n = x.n_rows();
    let mut all = Vec::with_capacity(n);
    let mut total = 0.0;
    for i in 0..n {
        let mut d: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let dist: f64 = x
                    .row(i)
                    .iter()
                    .zip(x.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (dist, j)
            })
            .collect();
        d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let nn: Vec<usize> = d[..k].iter().map(|&(_, j)| j).collect();
        let mean = nn.iter().filter(|&&j| y_hat[j]).count() as f64 / k as f64;
        total += (f64::from(u8::from(y_hat[i])) - mean).abs();
        all.push(nn);
    }
    (all, 1.0 - total / n as f64)
}

fn fairness_oracles() -> Check {
    let mut r = rng(2);
    for inst in 0..50 {
        let n = r.random_range(20..500);
        let y_hat = labels(&mut r, n, 0.3);
        let group = labels(&mut r, n, 0.4);
        let cond = labels(&mut r, n, 0.5);
        let all = vec![true; n];
        let s = spd(&y_hat, &group).map_err(fail)?.unwrap();
        let c = conditional_spd(&y_hat, &group, &cond)
            .map_err(fail)?
            .unwrap();
        ensure(
            (s - direct_rate_gap(&y_hat, &group, &all)).abs() <= 1e-15,
            || format!("instance {inst}: SPD {s}"),
        )?;
        ensure(
            (c - direct_rate_gap(&y_hat, &group, &cond)).abs() <= 1e-15,
            || format!("instance {inst}: cSPD {c}"),
        )?;
    }

    // Six points on a line, two neighbors each:
    //   0 → {1, 2}, 1 → {0, 2}, 3 → {1, 0}, 7 → {8, 3}, 8 → {7, 3}, 20 → {8, 7}.
    // With ŷ = 1 1 0 0 1 0 the absolute deviations are ½ ½ 1 ½ 1 ½, so 1 − 4/6.
    let x = Matrix::new(6, 1, vec![0.0, 1.0, 3.0, 7.0, 8.0, 20.0]);
    let y_hat = [true, true, false, false, true, false];
    let idx = NeighborIndex::build(&x, 2, false).map_err(fail)?;
    let expect: [[u32; 2]; 6] = [[1, 2], [0, 2], [1, 0], [4, 2], [3, 2], [4, 3]];
    for (i, e) in expect.iter().enumerate() {
        ensure(idx.neighbors(i) == e, || {
            format!("fixture neighbors of {i}: {:?}", idx.neighbors(i))
        })?;
    }
    let c = idx.consistency(&y_hat).map_err(fail)?;
    ensure(c == 1.0 - 4.0 / 6.0, || format!("fixture consistency {c}"))?;
    let c = consistency(&y_hat, &x, 2).map_err(fail)?;
    ensure(c == 1.0 - 4.0 / 6.0, || {
        format!("scaled fixture consistency {c}")
    })?;

    let (n, p, k) = (500, 4, 5);
    let x = Matrix::new(n, p, (0..n * p).map(|_| r.random::<f64>() * 10.0).collect());
    let y_hat = labels(&mut r, n, 0.3);
    let idx = NeighborIndex::build(&x, k, true).map_err(fail)?;
    let (nn, oracle) = brute_force_consistency(&x, &y_hat, k);
    for (i, expect) in nn.iter().enumerate() {
        let got: Vec<usize> = idx.neighbors(i).iter().map(|&j| j as usize).collect();
        ensure(&got == expect, || {
            format!("row {i}: neighbors {got:?} vs {expect:?}")
        })?;
    }
    let c = idx.consistency(&y_hat).map_err(fail)?;
    ensure(c == oracle, || format!("n=500 consistency {c} vs {oracle}"))
}

// Labeling

fn day(base: NaiveDate, d: i64) -> NaiveDate {
    base + Duration::days(d)
}

/// Spells from a day-by-day calendar of qualifying days: runs of qualifying
/// days separated by at most `gap` non-qualifying days form one spell.
fn calendar_spells(records: &[RawRecord], base: NaiveDate, span: i64, gap: i64) -> Vec<(i64, i64)> {
    let programs: Vec<&RawRecord> = records
        .iter()
        .filter(|r| r.record_type == RecordType::ProgramParticipation)
        .collect();
    let mut cal = vec![false; span as usize];
    for rec in records {
        let counts = match rec.record_type {
            RecordType::Unemployment => true,
            RecordType::JobSeeking => programs
                .iter()
                .any(|p| p.start_date <= rec.end_date && rec.start_date <= p.end_date),
            _ => false,
        };
        if counts {
            let (a, b) = (
                (rec.start_date - base).num_days(),
                (rec.end_date - base).num_days(),
            );
            for d in a..=b {
                cal[d as usize] = true;
            }
        }
    }
    let mut spells: Vec<(i64, i64)> = Vec::new();
    let mut d = 0i64;
    while d < span {
        if !cal[d as usize] {
            d += 1;
            continue;
        }
        let start = d;
        while d < span && cal[d as usize] {
            d += 1;
        }
        let end = d - 1;
        match spells.last_mut() {
            Some(last) if start - last.1 - 1 <= gap => last.1 = end,
            _ => spells.push((start, end)),
        }
    }
    spells
}

fn labeling() -> Check {
    let base = NaiveDate::from_ymd_opt(2008, 1, 1).unwrap();
    let span = 3000i64;
    let types = [
        RecordType::Employment,
        RecordType::Unemployment,
        RecordType::Unemployment,
        RecordType::JobSeeking,
        RecordType::JobSeeking,
        RecordType::ProgramParticipation,
        RecordType::BenefitLongTerm,
    ];
    let mut r = rng(3);
    for person in 0..1000 {
        let id = format!("P{person:04}");
        let n = r.random_range(0..12);
        let mut records: Vec<RawRecord> = (0..n)
            .map(|_| {
                let start = r.random_range(0..span - 1);
                // Mix of short records with gaps near the tolerance and long ones.
                let len = if r.random_bool(0.7) {
                    r.random_range(1..120)
                } else {
                    r.random_range(1..700)
                };
                let end = (start + len - 1).min(span - 1);
                let t = types[r.random_range(0..types.len())];
                RawRecord::new(id.as_str(), t, day(base, start), day(base, end))
            })
            .collect();
        records.sort_by_key(|rec| rec.start_date);
        let got = merge_unemployment_spells(&records, 42).map_err(fail)?;
        let expect = calendar_spells(&records, base, span, 42);
        ensure(got.len() == expect.len(), || {
            format!("person {person}: {} spells vs {}", got.len(), expect.len())
        })?;
        for (s, &(a, b)) in got.iter().zip(&expect) {
            let duration = b - a + 1;
            let ok = s.start_date == day(base, a)
                && s.end_date == day(base, b)
                && s.duration_days == duration
                && s.y_ltu == (duration > 365);
            ensure(ok, || {
                format!("person {person}: {s:?} vs calendar days {a}..={b}")
            })?;
        }
    }

    let unemp =
        |a: i64, b: i64| RawRecord::new("B", RecordType::Unemployment, day(base, a), day(base, b));
    for (gap, spells) in [(42, 1), (43, 2)] {
        let got = merge_unemployment_spells(&[unemp(0, 99), unemp(100 + gap, 199 + gap)], 42)
            .map_err(fail)?;
        ensure(got.len() == spells, || {
            format!("{gap}-day gap gave {} spells", got.len())
        })?;
    }
    for (duration, ltu) in [(365, false), (366, true)] {
        let got = merge_unemployment_spells(&[unemp(0, duration - 1)], 42).map_err(fail)?;
        ensure(
            got[0].duration_days == duration && got[0].y_ltu == ltu,
            || format!("{duration}-day spell: {:?}", got[0]),
        )?;
    }
    Ok(())
}

// Policies

fn policy_cardinalities() -> Check {
    let mut r = rng(4);
    let mut scores: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
    for i in (1..scores.len()).rev() {
        scores.swap(i, r.random_range(0..=i));
    }
    let count = |p: &Policy| classify(&scores, p).map(|v| v.iter().filter(|&&b| b).count());
    for (p, want) in [
        (Policy::p1a(), 100),
        (Policy::p1b(), 250),
        (Policy::p2(), 500),
    ] {
        let got = count(&p).map_err(fail)?;
        ensure(got == want, || {
            format!("{} selected {got}, want {want}", p.name)
        })?;
    }
    let p1b = classify(&scores, &Policy::p1b()).map_err(fail)?;
    let p2 = classify(&scores, &Policy::p2()).map_err(fail)?;
    ensure((0..1000).all(|i| !(p1b[i] && p2[i])), || {
        "P1b and P2 overlap".into()
    })?;
    let min_p1b = (0..1000)
        .filter(|&i| p1b[i])
        .map(|i| scores[i])
        .fold(f64::INFINITY, f64::min);
    let max_p2 = (0..1000)
        .filter(|&i| p2[i])
        .map(|i| scores[i])
        .fold(f64::NEG_INFINITY, f64::max);
    ensure(max_p2 < min_p1b, || {
        format!("P2 reaches {max_p2}, P1b starts at {min_p1b}")
    })
}

// Optimizers

fn logistic_fixture(seed: u64, n: usize, beta: &[f64]) -> (Matrix, Vec<bool>) {
    let mut r = rng(seed);
    let p = beta.len();
    let x: Vec<f64> = (0..n * p).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
    let y = (0..n)
        .map(|i| {
            let eta: f64 = (0..p).map(|j| beta[j] * x[i * p + j]).sum();
            r.random_bool(1.0 / (1.0 + (-eta).exp()))
        })
        .collect();
    (Matrix::new(n, p, x), y)
}

fn optimizers() -> Check {
    let (x, y) = logistic_fixture(5, 200, &[1.5, -1.0, 0.5, 0.0, 2.0]);
    let mut r = rng(6);
    for penalty in [None, Some((Penalty::L2, 0.7)), Some((Penalty::L1, 0.7))] {
        let obj = LogisticObjective::new(&x, &y, penalty);
        for point in 0..10 {
            let theta: Vec<f64> = (0..obj.n_params())
                .map(|_| r.random::<f64>() * 4.0 - 2.0)
                .collect();
            let g = obj.gradient(&theta);
            let h = 1e-5;
            let fd: Vec<f64> = (0..theta.len())
                .map(|j| {
                    let (mut a, mut b) = (theta.clone(), theta.clone());
                    a[j] += h;
                    b[j] -= h;
                    (obj.value(&a) - obj.value(&b)) / (2.0 * h)
                })
                .collect();
            let err: f64 = g
                .iter()
                .zip(&fd)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let norm: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt();
            ensure(err / norm < 1e-5, || {
                format!(
                    "{penalty:?} point {point}: relative gradient error {}",
                    err / norm
                )
            })?;
        }
    }

    let beta = [2.0, -1.5, 1.0, 0.6, 0.3, 0.0, 0.0, 0.0, 0.0, 0.0];
    let (x, y) = logistic_fixture(7, 400, &beta);
    let s = schema(beta.len());
    let data = TrainingSet::new(&x, &y, &s).map_err(fail)?;
    let mut last = 0;
    for c in PLR_C {
        let m = train_plr(&data, Penalty::L1, c, &LrOptions::default()).map_err(fail)?;
        let nonzero = coefficients(&m)[1..].iter().filter(|b| **b != 0.0).count();
        ensure(nonzero >= last, || {
            format!("l1 path: {nonzero} nonzero at c={c}, {last} before")
        })?;
        last = nonzero;
    }
    ensure(last == beta.len(), || {
        format!("l1 path ends with {last} nonzero")
    })?;

    let (x, y) = logistic_fixture(8, 50, &[1.0, -0.8, 0.5]);
    let s = schema(3);
    let data = TrainingSet::new(&x, &y, &s).map_err(fail)?;
    let lr = coefficients(&train_lr(&data, &LrOptions::default()).map_err(fail)?);
    for penalty in [Penalty::L1, Penalty::L2] {
        let plr =
            coefficients(&train_plr(&data, penalty, 1000.0, &LrOptions::default()).map_err(fail)?);
        let gap = lr
            .iter()
            .zip(&plr)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        ensure(gap < 1e-3, || {
            format!("{penalty:?} c=1000 differs from LR by {gap}: {plr:?} vs {lr:?}")
        })?;
    }
    Ok(())
}

// Ensembles

fn xor_fixture(seed: u64, n: usize) -> (Matrix, Vec<bool>) {
    let mut r = rng(seed);
    let mut x = Vec::with_capacity(n * 4);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: [f64; 4] = std::array::from_fn(|_| r.random::<f64>() * 2.0 - 1.0);
        y.push((row[0] > 0.0) != (row[1] > 0.0));
        x.extend(row);
    }
    (Matrix::new(n, 4, x), y)
}

fn model_bytes(hp: &HyperParams, data: &TrainingSet<'_>, threads: usize) -> Result<String, String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(fail)?;
    pool.install(|| train(hp, data, 99))
        .and_then(|m| m.to_json())
        .map_err(fail)
}

fn ensembles() -> Check {
    let (x, y) = logistic_fixture(9, 600, &[1.0, -1.0, 0.5, 0.0]);
    let s = schema(4);
    let data = TrainingSet::new(&x, &y, &s).map_err(fail)?;
    let hp = GbmParams {
        max_depth: 3,
        max_features: MaxFeatures::Sqrt,
        n_estimators: 100,
        learning_rate: 0.1,
        subsample: 1.0,
    };
    let (_, trace) = train_gbm(&data, &hp, 1).map_err(fail)?;
    let d = &trace.train_deviance;
    ensure(d.windows(2).all(|w| w[1] <= w[0] + 1e-12), || {
        format!("deviance increases: {d:?}")
    })?;

    let (m, _) = train_gbm(
        &data,
        &GbmParams {
            n_estimators: 0,
            ..hp
        },
        1,
    )
    .map_err(fail)?;
    let base = y.iter().filter(|&&v| v).count() as f64 / y.len() as f64;
    let p = predict_risk(&m, &x, &s).map_err(fail)?;
    ensure(p.iter().all(|v| (v - base).abs() < 1e-12), || {
        format!("0-tree GBM predicts {} for base rate {base}", p[0])
    })?;

    let (x, y) = xor_fixture(10, 2000);
    let (tx, ty) = xor_fixture(11, 2000);
    let data = TrainingSet::new(&x, &y, &s).map_err(fail)?;
    let auc = |hp: &HyperParams| -> Result<f64, String> {
        let m = train(hp, &data, 3).map_err(fail)?;
        Ok(roc_auc(&predict_risk(&m, &tx, &s).map_err(fail)?, &ty)
            .map_err(fail)?
            .unwrap())
    };
    let rf = HyperParams::Rf(RfParams {
        max_features: MaxFeatures::Sqrt,
        min_samples_leaf: 5,
        n_estimators: 100,
    });
    let gbm = HyperParams::Gbm(GbmParams {
        max_depth: 3,
        max_features: MaxFeatures::Sqrt,
        n_estimators: 200,
        learning_rate: 0.1,
        subsample: 0.8,
    });
    let lr = auc(&HyperParams::Lr)?;
    for (name, hp) in [("RF", rf), ("GBM", gbm)] {
        let a = auc(&hp)?;
        ensure(a - lr >= 0.25, || format!("XOR: {name} AUC {a} vs LR {lr}"))?;
    }

    let (x, y) = logistic_fixture(12, 800, &[1.0, -1.0, 0.5, 0.0]);
    let data = TrainingSet::new(&x, &y, &s).map_err(fail)?;
    for hp in [rf, gbm] {
        let one = model_bytes(&hp, &data, 1)?;
        for threads in [4, 8] {
            let other = model_bytes(&hp, &data, threads)?;
            ensure(one == other, || {
                format!("{} differs between 1 and {threads} threads", hp.label())
            })?;
        }
    }
    Ok(())
}

// Temporal cross-validation

fn temporal_cv() -> Check {
    let years: Vec<i32> = (2010..=2015).collect();
    let folds = make_folds(&years, 2010, 2015).map_err(fail)?;
    ensure(folds.len() == 5, || format!("{} folds", folds.len()))?;
    for (i, f) in folds.iter().enumerate() {
        let want = TemporalFold {
            fit_years: (2010..=2010 + i as i32).collect(),
            test_year: 2011 + i as i32,
        };
        ensure(*f == want, || format!("fold {i}: {f:?}"))?;
    }

    // x0 drives the outcome early on and x1 later; strong penalties flatten
    // the fit, so the cells differ in how well they track the drift.
    let mut r = rng(13);
    let (mut x, mut y, mut yr) = (Vec::new(), Vec::new(), Vec::new());
    for year in 2010..=2015 {
        let w = f64::from(year - 2010) / 5.0;
        for _ in 0..300 {
            let row: [f64; 3] = std::array::from_fn(|_| r.random::<f64>() * 2.0 - 1.0);
            let eta = 3.0 * (1.0 - w) * row[0] + 3.0 * w * row[1] + 0.3 * row[2];
            y.push(r.random_bool(1.0 / (1.0 + (-eta).exp())));
            x.extend(row);
            yr.push(year);
        }
    }
    let data = Dataset::new(schema(3), Matrix::new(y.len(), 3, x), y, yr).map_err(fail)?;
    let grid: Vec<HyperParams> = [
        (Penalty::L1, 0.001),
        (Penalty::L1, 0.003),
        (Penalty::L1, 0.01),
        (Penalty::L2, 0.0001),
        (Penalty::L2, 1.0),
    ]
    .into_iter()
    .map(|(penalty, c)| HyperParams::Plr(PlrParams { penalty, c }))
    .collect();
    let search = grid_search(grid[0].method(), &grid, &data, &folds, 1).map_err(fail)?;
    let mut means = Vec::new();
    for hp in &grid {
        let mut total = 0.0;
        for f in &folds {
            let (fit, test) = fold_rows(&data, f).map_err(fail)?;
            let fit = data.select(&fit);
            let test = data.select(&test);
            let m = train(hp, &fit.training_set().map_err(fail)?, 1).map_err(fail)?;
            total += roc_auc(
                &predict_risk(&m, &test.x, &data.schema).map_err(fail)?,
                &test.y,
            )
            .map_err(fail)?
            .unwrap();
        }
        means.push(total / folds.len() as f64);
    }
    let best = (0..grid.len()).fold(0, |b, c| if means[c] > means[b] { c } else { b });
    ensure(search.best == grid[best], || {
        format!("selected {} but means are {means:?}", search.best.label())
    })?;
    let distinct = means.iter().any(|m| (m - means[best]).abs() > 1e-3);
    ensure(distinct, || {
        format!("drift scenario does not separate the cells: {means:?}")
    })?;

    for config in 0..100 {
        let first = r.random_range(2000..2015);
        let last = first + r.random_range(1..8);
        let mut yrs = Vec::new();
        for year in first..=last {
            yrs.extend(std::iter::repeat_n(year, r.random_range(1..60)));
        }
        for i in (1..yrs.len()).rev() {
            yrs.swap(i, r.random_range(0..=i));
        }
        let keep = subsample_per_year(&yrs, r.random_range(1..40), config).map_err(fail)?;
        let sub: Vec<i32> = keep.iter().map(|&i| yrs[i]).collect();
        let n = sub.len();
        let ds = Dataset::new(schema(1), Matrix::zeros(n, 1), vec![false; n], sub).map_err(fail)?;
        for f in make_folds(&ds.years, first, last).map_err(fail)? {
            let (fit, test) = fold_rows(&ds, &f).map_err(|e| format!("config {config}: {e}"))?;
            let ok = fit.iter().all(|&i| ds.years[i] < f.test_year)
                && test.iter().all(|&i| ds.years[i] == f.test_year);
            ensure(ok, || {
                format!("config {config}: fold testing {} mixes years", f.test_year)
            })?;
        }
    }
    Ok(())
}

// Qualitative patterns on synthetic data

fn qualitative_config(dir: &Path) -> RunConfig {
    let synth = SynthConfig {
        n_persons: 75_000,
        calibration_persons: 20_000,
        seed: 7,
        ..SynthConfig::default()
    }
    .with_skew(0.7);
    let plr = |c| {
        HyperParams::Plr(PlrParams {
            penalty: Penalty::L1,
            c,
        })
    };
    RunConfig {
        data: DataSource::Synthetic(synth),
        per_year_sample: 1500,
        methods: vec![
            MethodConfig::default_grid(ltu_profiling::models::Method::Lr),
            MethodConfig {
                method: ltu_profiling::models::Method::Plr,
                grid: Some(vec![plr(0.01), plr(0.1)]),
            },
            MethodConfig {
                method: ltu_profiling::models::Method::Rf,
                grid: Some(vec![HyperParams::Rf(RfParams {
                    max_features: MaxFeatures::Sqrt,
                    min_samples_leaf: 5,
                    n_estimators: 100,
                })]),
            },
            MethodConfig {
                method: ltu_profiling::models::Method::Gbm,
                grid: Some(vec![HyperParams::Gbm(GbmParams {
                    max_depth: 3,
                    max_features: MaxFeatures::Sqrt,
                    n_estimators: 250,
                    learning_rate: 0.05,
                    subsample: 0.8,
                })]),
            },
        ],
        allow_off_grid: true,
        seed: Some(1),
        output_dir: dir.join("qualitative"),
        ..RunConfig::default()
    }
}

fn qualitative() -> Check {
    let dir = tempfile::tempdir().map_err(fail)?;
    let report = pipeline::run(&qualitative_config(dir.path())).map_err(fail)?;
    let history = "2010-2015";
    let row = |model: &str, policy: &str| {
        report
            .row(model, policy, history)
            .ok_or_else(|| format!("no row for {model} {policy}"))
    };
    let get = |v: Option<f64>, what: &str| v.ok_or_else(|| format!("{what} undefined"));
    let mut notes = Vec::new();

    let auc = |m: &str| -> Result<f64, String> { get(row(m, "P1a")?.roc_auc, "AUC") };
    let (lr, plr, gbm) = (auc("LR")?, auc("PLR")?, auc("GBM")?);
    println!(
        "    AUC LR {lr:.4} PLR {plr:.4} RF {:.4} GBM {gbm:.4}",
        auc("RF")?
    );
    if !(gbm >= plr && plr > lr && gbm - lr >= 0.02) {
        notes.push(format!("(a) ordering LR {lr:.4} PLR {plr:.4} GBM {gbm:.4}"));
    }

    for m in ["LR", "PLR", "RF", "GBM"] {
        let (a, b) = (row(m, "P1a")?, row(m, "P1b")?);
        let (ra, rb) = (get(a.recall, "recall")?, get(b.recall, "recall")?);
        let (pa, pb) = (
            get(a.precision, "precision")?,
            get(b.precision, "precision")?,
        );
        if !(rb > ra && pb < pa) {
            notes.push(format!(
                "(b) {m}: recall {ra:.3}→{rb:.3}, precision {pa:.3}→{pb:.3}"
            ));
        }
        let mut line = format!("    {m:<3}");
        for p in ["P1a", "P1b", "P2"] {
            let r = row(m, p)?;
            let s = get(r.spd_nonger, "SPD")?;
            let c = get(r.cspd_nonger, "cSPD")?;
            line += &format!(
                " | {p} SPD {s:+.3} cSPD {c:+.3} cons {:.3}",
                get(r.consistency, "consistency")?
            );
            let sign_ok = if p == "P2" { s > 0.0 } else { s < 0.0 };
            if !sign_ok {
                notes.push(format!("(c) {m} {p}: non-German SPD {s:+.4}"));
            }
            if c.abs() >= s.abs() {
                notes.push(format!("(d) {m} {p}: |cSPD| {c:+.4} vs |SPD| {s:+.4}"));
            }
        }
        println!("{line}");
        let (c1, c2) = (
            get(row(m, "P1a")?.consistency, "consistency")?,
            get(row(m, "P2")?.consistency, "consistency")?,
        );
        if c2 >= c1 {
            notes.push(format!("(e) {m}: consistency P2 {c2:.4} vs P1a {c1:.4}"));
        }
    }
    ensure(notes.is_empty(), || notes.join("; "))
}

fn calibration() -> Check {
    let cfg = SynthConfig {
        n_persons: 75_000,
        calibration_persons: 20_000,
        seed: 21,
        ..SynthConfig::default()
    };
    let s = synth::generate(&cfg).map_err(fail)?.summary;
    let y2016 = s
        .by_year
        .iter()
        .find(|y| y.year == 2016)
        .ok_or("no 2016 episodes")?;
    println!(
        "    {} episodes, LTU rate {:.4}; 2016: female {:.4} non-German {:.4} (male {:.4}, female {:.4})",
        s.episodes, s.ltu_rate, y2016.female, y2016.non_german, y2016.non_german_male, y2016.non_german_female
    );
    let mut notes = Vec::new();
    let checks = [
        ("LTU rate", s.ltu_rate, 0.152),
        ("female", y2016.female, 0.425),
        ("non-German", y2016.non_german, 0.205),
        ("non-German male", y2016.non_german_male, 0.124),
        ("non-German female", y2016.non_german_female, 0.075),
    ];
    for (what, got, want) in checks {
        if (got - want).abs() > 0.01 {
            notes.push(format!("{what} {got:.4} vs {want}"));
        }
    }
    ensure(notes.is_empty(), || notes.join("; "))
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(fail)?;
    let synth = SynthConfig {
        n_persons: 4000,
        calibration_persons: 2000,
        seed: 3,
        ..SynthConfig::default()
    };
    let mut cfg = qualitative_config(dir.path());
    cfg.data = DataSource::Synthetic(synth);
    cfg.per_year_sample = 600;
    let mut bundles = Vec::new();
    for (run, threads) in [("a", 1), ("b", 4)] {
        cfg.output_dir = dir.path().join(run);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(fail)?;
        pool.install(|| pipeline::run(&cfg)).map_err(fail)?;
        bundles.push(pipeline::bundle_files(&cfg.output_dir).map_err(fail)?);
    }
    ensure(bundles[0].len() > 10, || {
        format!("bundle has {} files", bundles[0].len())
    })?;
    ensure(bundles[0].len() == bundles[1].len(), || {
        "bundles list different files".into()
    })?;
    for ((pa, a), (pb, b)) in bundles[0].iter().zip(&bundles[1]) {
        ensure(pa == pb && a == b, || format!("{} differs", pa.display()))?;
    }
    Ok(())
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("metric oracles", metric_oracles),
        ("fairness oracles", fairness_oracles),
        ("LTU labeling", labeling),
        ("policy cardinalities", policy_cardinalities),
        ("optimizer correctness", optimizers),
        ("ensemble correctness", ensembles),
        ("temporal cross-validation", temporal_cv),
        ("qualitative patterns", qualitative),
        ("calibration", calibration),
        ("end-to-end determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(()) => println!("PASS {name} ({secs:.1}s)"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
