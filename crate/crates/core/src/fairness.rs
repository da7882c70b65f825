//! Group fairness (statistical parity, conditional on high education) and
//! individual fairness (k-nearest-neighbor consistency) of class predictions.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::ProtectedAttributes;
use crate::metrics::Metric;
use crate::models::Matrix;

/// Unprivileged group definitions; everyone outside the group is the
/// comparison group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtectedGroup {
    /// Women vs. men.
    Female,
    /// Non-German vs. German nationals.
    NonGerman,
    /// Non-German men vs. everyone else.
    NonGermanMale,
    /// Non-German women vs. everyone else.
    NonGermanFemale,
}

impl ProtectedGroup {
    pub const ALL: [ProtectedGroup; 4] = [
        ProtectedGroup::Female,
        ProtectedGroup::NonGerman,
        ProtectedGroup::NonGermanMale,
        ProtectedGroup::NonGermanFemale,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtectedGroup::Female => "female",
            ProtectedGroup::NonGerman => "non_german",
            ProtectedGroup::NonGermanMale => "non_german_male",
            ProtectedGroup::NonGermanFemale => "non_german_female",
        }
    }

    pub fn contains(self, s: &ProtectedAttributes) -> bool {
        match self {
            ProtectedGroup::Female => s.female,
            ProtectedGroup::NonGerman => s.non_german,
            ProtectedGroup::NonGermanMale => s.non_german_male(),
            ProtectedGroup::NonGermanFemale => s.non_german_female(),
        }
    }

    pub fn members(self, s: &[ProtectedAttributes]) -> Vec<bool> {
        s.iter().map(|a| self.contains(a)).collect()
    }
}

fn positive_rate(y_hat: &[bool], keep: impl Fn(usize) -> bool) -> (usize, Metric) {
    let mut n = 0usize;
    let mut pos = 0usize;
    for (i, &v) in y_hat.iter().enumerate() {
        if keep(i) {
            n += 1;
            pos += usize::from(v);
        }
    }
    let rate = if n > 0 {
        Metric::Value(pos as f64 / n as f64)
    } else {
        Metric::Undefined("empty group")
    };
    (n, rate)
}

/// `Pr(Ŷ=1 | unprivileged) − Pr(Ŷ=1 | privileged)`, where `unprivileged[i]` marks
/// group membership. Negative values mean the unprivileged group is selected
/// less often.
pub fn spd(y_hat: &[bool], unprivileged: &[bool]) -> Result<Metric> {
    conditional_spd(y_hat, unprivileged, &vec![true; y_hat.len()])
}

/// SPD restricted to rows with `cond[i]`.
pub fn conditional_spd(y_hat: &[bool], unprivileged: &[bool], cond: &[bool]) -> Result<Metric> {
    if y_hat.len() != unprivileged.len() || y_hat.len() != cond.len() {
        return Err(Error::Invalid("SPD inputs differ in length".into()));
    }
    let (_, u) = positive_rate(y_hat, |i| cond[i] && unprivileged[i]);
    let (_, p) = positive_rate(y_hat, |i| cond[i] && !unprivileged[i]);
    Ok(match (u, p) {
        (Metric::Value(u), Metric::Value(p)) => Metric::Value(u - p),
        (Metric::Undefined(_), _) => Metric::Undefined("unprivileged group is empty"),
        (_, Metric::Undefined(_)) => Metric::Undefined("privileged group is empty"),
    })
}

/// Exact `k` nearest neighbors of every row (self excluded, Euclidean distance,
/// ties by lowest row index). Built once per feature matrix and reused for every
/// prediction vector audited on it.
#[derive(Clone, Debug)]
pub struct NeighborIndex {
    k: usize,
    neighbors: Vec<u32>,
}

/// Rescales every column to `[0, 1]`; constant columns become 0.
pub fn min_max_scale(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for j in 0..x.n_cols() {
        let col = x.column(j);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        for (i, v) in col.iter().enumerate() {
            out.row_mut(i)[j] = if range > 0.0 { (v - lo) / range } else { 0.0 };
        }
    }
    out
}

impl NeighborIndex {
    /// `scaled` applies min-max scaling before measuring distances.
    pub fn build(x: &Matrix, k: usize, scaled: bool) -> Result<Self> {
        let n = x.n_rows();
        if k == 0 || n <= k {
            return Err(Error::Invalid(format!(
                "need more than {k} rows for {k} neighbors, got {n}"
            )));
        }
        let scaled_x;
        let x = if scaled {
            scaled_x = min_max_scale(x);
            &scaled_x
        } else {
            x
        };
        let neighbors: Vec<u32> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let xi = x.row(i);
                // Sorted ascending by (distance, index); at most k entries.
                let mut best: Vec<(f64, u32)> = Vec::with_capacity(k + 1);
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let d: f64 = xi
                        .iter()
                        .zip(x.row(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    if best.len() == k && d >= best[k - 1].0 {
                        continue;
                    }
                    let pos = best.partition_point(|&(bd, _)| bd <= d);
                    best.insert(pos, (d, j as u32));
                    best.truncate(k);
                }
                best.into_iter().map(|(_, j)| j)
            })
            .collect();
        Ok(NeighborIndex { k, neighbors })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.neighbors.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }

    /// `1 − mean_i |ŷ_i − mean of ŷ over the neighbors of i|`.
    pub fn consistency(&self, y_hat: &[bool]) -> Result<f64> {
        if y_hat.len() != self.len() {
            return Err(Error::Invalid(format!(
                "{} predictions for a neighbor index over {} rows",
                y_hat.len(),
                self.len()
            )));
        }
        let k = self.k as f64;
        let total: f64 = (0..y_hat.len())
            .map(|i| {
                let mean = self
                    .neighbors(i)
                    .iter()
                    .filter(|&&j| y_hat[j as usize])
                    .count() as f64
                    / k;
                (f64::from(u8::from(y_hat[i])) - mean).abs()
            })
            .sum();
        Ok(1.0 - total / y_hat.len() as f64)
    }
}

/// Consistency of `y_hat` on `x` with min-max scaled features.
pub fn consistency(y_hat: &[bool], x: &Matrix, n_neighbors: usize) -> Result<f64> {
    NeighborIndex::build(x, n_neighbors, true)?.consistency(y_hat)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupFairness {
    pub group: ProtectedGroup,
    pub spd: Metric,
    /// SPD among rows where `condition` holds.
    pub cspd: Metric,
    pub condition: String,
    pub n_unprivileged: usize,
    pub n_privileged: usize,
    pub rate_unprivileged: Metric,
    pub rate_privileged: Metric,
}

/// Fairness of one prediction vector: a model under a policy and training history.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FairnessReport {
    pub model: String,
    pub policy: String,
    pub history: String,
    pub groups: Vec<GroupFairness>,
    pub consistency: f64,
}

pub const OBSERVED_OUTCOME: &str = "Observed Y";
pub const HIGH_EDUCATION: &str = "high_education";

impl FairnessReport {
    pub fn compute(
        model: &str,
        policy: &str,
        history: &str,
        y_hat: &[bool],
        s: &[ProtectedAttributes],
        high_education: &[bool],
        neighbors: &NeighborIndex,
    ) -> Result<Self> {
        if s.len() != y_hat.len() || high_education.len() != y_hat.len() {
            return Err(Error::Invalid("fairness inputs differ in length".into()));
        }
        let mut groups = Vec::with_capacity(4);
        for g in ProtectedGroup::ALL {
            let m = g.members(s);
            let (n_unprivileged, rate_unprivileged) = positive_rate(y_hat, |i| m[i]);
            let (n_privileged, rate_privileged) = positive_rate(y_hat, |i| !m[i]);
            groups.push(GroupFairness {
                group: g,
                spd: spd(y_hat, &m)?,
                cspd: conditional_spd(y_hat, &m, high_education)?,
                condition: HIGH_EDUCATION.into(),
                n_unprivileged,
                n_privileged,
                rate_unprivileged,
                rate_privileged,
            });
        }
        Ok(FairnessReport {
            model: model.into(),
            policy: policy.into(),
            history: history.into(),
            groups,
            consistency: neighbors.consistency(y_hat)?,
        })
    }

    pub fn group(&self, g: ProtectedGroup) -> &GroupFairness {
        self.groups
            .iter()
            .find(|r| r.group == g)
            .expect("every report covers all groups")
    }
}

/// Share of each protected group within a set of rows.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrevalenceRow {
    pub year: i32,
    /// `overall`, `ltu` or `no_ltu`.
    pub subset: &'static str,
    pub n: usize,
    pub female: Metric,
    pub non_german: Metric,
    pub non_german_male: Metric,
    pub non_german_female: Metric,
}

/// Per year: group shares overall, among rows with `outcome` true and among rows
/// with `outcome` false. `outcome` may be observed labels or predictions.
pub fn group_prevalence_table(
    years: &[i32],
    s: &[ProtectedAttributes],
    outcome: &[bool],
) -> Result<Vec<PrevalenceRow>> {
    if years.len() != s.len() || s.len() != outcome.len() {
        return Err(Error::Invalid("prevalence inputs differ in length".into()));
    }
    let mut distinct: Vec<i32> = years.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let mut out = Vec::new();
    for year in distinct {
        for (subset, filter) in [
            ("overall", None),
            ("ltu", Some(true)),
            ("no_ltu", Some(false)),
        ] {
            let rows: Vec<&ProtectedAttributes> = (0..years.len())
                .filter(|&i| years[i] == year && filter.is_none_or(|f| outcome[i] == f))
                .map(|i| &s[i])
                .collect();
            let n = rows.len();
            let share = |g: ProtectedGroup| {
                let c = rows.iter().filter(|a| g.contains(a)).count();
                if n > 0 {
                    Metric::Value(c as f64 / n as f64)
                } else {
                    Metric::Undefined("no rows")
                }
            };
            out.push(PrevalenceRow {
                year,
                subset,
                n,
                female: share(ProtectedGroup::Female),
                non_german: share(ProtectedGroup::NonGerman),
                non_german_male: share(ProtectedGroup::NonGermanMale),
                non_german_female: share(ProtectedGroup::NonGermanFemale),
            });
        }
    }
    Ok(out)
}

pub fn write_prevalence<W: Write>(output: W, rows: &[PrevalenceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record([
        "year",
        "subset",
        "n",
        "female",
        "non_german",
        "non_german_male",
        "non_german_female",
    ])?;
    for r in rows {
        w.write_record([
            r.year.to_string(),
            r.subset.to_string(),
            r.n.to_string(),
            r.female.to_string(),
            r.non_german.to_string(),
            r.non_german_male.to_string(),
            r.non_german_female.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<prevalence output>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attrs(female: bool, non_german: bool) -> ProtectedAttributes {
        ProtectedAttributes { female, non_german }
    }

    #[test]
    fn spd_formula_and_antisymmetry() {
        // Unprivileged: 3 of 10 selected; privileged: 1 of 10.
        let mut y_hat = vec![false; 20];
        let unpriv: Vec<bool> = (0..20).map(|i| i < 10).collect();
        for i in [0, 1, 2, 10] {
            y_hat[i] = true;
        }
        let v = spd(&y_hat, &unpriv).unwrap().unwrap();
        assert!((v - 0.2).abs() < 1e-15);
        let flipped: Vec<bool> = unpriv.iter().map(|v| !v).collect();
        assert_eq!(spd(&y_hat, &flipped).unwrap().unwrap(), -v);
        assert!(!spd(&y_hat, &[true; 20]).unwrap().is_defined());
    }

    #[test]
    fn conditional_spd_isolates_stratum() {
        // Disparity only among the low-educated.
        let unpriv = [true, true, false, false, true, true, false, false];
        let cond = [true, true, true, true, false, false, false, false];
        let y_hat = [true, false, true, false, false, false, true, true];
        assert_eq!(
            conditional_spd(&y_hat, &unpriv, &cond).unwrap(),
            Metric::Value(0.0)
        );
        assert_eq!(spd(&y_hat, &unpriv).unwrap(), Metric::Value(0.25 - 0.75));
        assert_eq!(
            conditional_spd(&y_hat, &unpriv, &[true; 8]).unwrap(),
            spd(&y_hat, &unpriv).unwrap()
        );
    }

    #[test]
    fn two_clusters_are_consistent() {
        let x = Matrix::new(
            6,
            2,
            vec![0.0, 0.0, 0.1, 0.0, 0.0, 0.1, 5.0, 5.0, 5.1, 5.0, 5.0, 5.1],
        );
        let idx = NeighborIndex::build(&x, 2, false).unwrap();
        assert_eq!(idx.neighbors(0), &[1, 2]);
        let y = [true, true, true, false, false, false];
        assert_eq!(idx.consistency(&y).unwrap(), 1.0);
        // Flip row 0: it deviates by 1, rows 1 and 2 by 1/2 each.
        let y = [false, true, true, false, false, false];
        assert!((idx.consistency(&y).unwrap() - (1.0 - 2.0 / 6.0)).abs() < 1e-15);
    }

    #[test]
    fn neighbor_ties_take_lowest_index() {
        let x = Matrix::new(4, 1, vec![0.0, 1.0, -1.0, 1.0]);
        let idx = NeighborIndex::build(&x, 2, false).unwrap();
        assert_eq!(idx.neighbors(0), &[1, 2]);
        assert_eq!(idx.neighbors(1), &[3, 0]);
        assert!(NeighborIndex::build(&x, 4, false).is_err());
    }

    #[test]
    fn prevalence_rows() {
        let years = [2016, 2016, 2016, 2015];
        let s = [
            attrs(true, true),
            attrs(false, true),
            attrs(true, false),
            attrs(false, false),
        ];
        let y = [true, false, false, false];
        let t = group_prevalence_table(&years, &s, &y).unwrap();
        assert_eq!(t.len(), 6);
        let overall16 = t
            .iter()
            .find(|r| r.year == 2016 && r.subset == "overall")
            .unwrap();
        assert_eq!(overall16.n, 3);
        assert!((overall16.female.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let ltu15 = t
            .iter()
            .find(|r| r.year == 2015 && r.subset == "ltu")
            .unwrap();
        assert!(!ltu15.female.is_defined());
        let total: usize = t
            .iter()
            .filter(|r| r.subset == "overall")
            .map(|r| r.n)
            .sum();
        assert_eq!(total, 4);
    }
}
