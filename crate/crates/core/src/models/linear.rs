//! Logistic regression by damped Newton iterations. The ℓ2-penalized variant
//! uses the same iterations; the ℓ1 variant uses proximal Newton with a
//! coordinate-descent inner solver.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    sigmoid, HyperParams, Matrix, ModelParams, Penalty, PlrParams, TrainedModel, TrainingSet,
};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LinearModel {
    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(row)
                .map(|(b, x)| b * x)
                .sum::<f64>()
    }
}

#[derive(Clone, Debug)]
pub struct LrOptions {
    pub max_iter: usize,
    /// Convergence threshold on the largest parameter update.
    pub tol: f64,
}

impl Default for LrOptions {
    fn default() -> Self {
        LrOptions {
            max_iter: 100,
            tol: 1e-10,
        }
    }
}

/// Column means and population standard deviations. Constant columns get scale 0
/// and are left out of penalized fits.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Standardized copy of `x`, stored column by column.
pub fn standardize(x: &Matrix) -> (Standardizer, Vec<Vec<f64>>) {
    let n = x.n_rows() as f64;
    let mut mean = Vec::with_capacity(x.n_cols());
    let mut scale = Vec::with_capacity(x.n_cols());
    let mut cols = Vec::with_capacity(x.n_cols());
    for j in 0..x.n_cols() {
        let mut col = x.column(j);
        let m = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        let sd = var.sqrt();
        let s = if sd > 1e-12 * (1.0 + m.abs()) {
            sd
        } else {
            0.0
        };
        for v in &mut col {
            *v = if s > 0.0 { (*v - m) / s } else { 0.0 };
        }
        mean.push(m);
        scale.push(s);
        cols.push(col);
    }
    (Standardizer { mean, scale }, cols)
}

fn transpose(x: &Matrix) -> Vec<Vec<f64>> {
    (0..x.n_cols()).map(|j| x.column(j)).collect()
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Summed logistic loss plus an optional penalty on the non-intercept
/// coefficients. Parameter vectors hold the intercept first.
#[derive(Clone, Debug)]
pub struct LogisticObjective {
    cols: Vec<Vec<f64>>,
    y: Vec<f64>,
    penalty: Option<(Penalty, f64)>,
}

impl LogisticObjective {
    /// `penalty` carries the penalty kind and its multiplier `1/c`.
    pub fn new(x: &Matrix, y: &[bool], penalty: Option<(Penalty, f64)>) -> Self {
        Self::from_columns(transpose(x), y, penalty)
    }

    fn from_columns(cols: Vec<Vec<f64>>, y: &[bool], penalty: Option<(Penalty, f64)>) -> Self {
        LogisticObjective {
            cols,
            y: y.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect(),
            penalty,
        }
    }

    pub fn n_params(&self) -> usize {
        self.cols.len() + 1
    }

    fn eta(&self, theta: &[f64]) -> Vec<f64> {
        let mut eta = vec![theta[0]; self.y.len()];
        for (col, &b) in self.cols.iter().zip(&theta[1..]) {
            if b != 0.0 {
                for (e, x) in eta.iter_mut().zip(col) {
                    *e += b * x;
                }
            }
        }
        eta
    }

    fn loss_from_eta(&self, eta: &[f64]) -> f64 {
        eta.iter()
            .zip(&self.y)
            .map(|(&e, &y)| softplus(e) - y * e)
            .sum()
    }

    fn penalty_value(&self, beta: &[f64]) -> f64 {
        match self.penalty {
            None => 0.0,
            Some((Penalty::L1, lambda)) => lambda * beta.iter().map(|b| b.abs()).sum::<f64>(),
            Some((Penalty::L2, lambda)) => lambda * beta.iter().map(|b| b * b).sum::<f64>(),
        }
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        self.loss_from_eta(&self.eta(theta)) + self.penalty_value(&theta[1..])
    }

    /// Gradient; for the ℓ1 penalty the subgradient 0 is used at exact zeros.
    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let resid: Vec<f64> = self
            .eta(theta)
            .iter()
            .zip(&self.y)
            .map(|(&e, &y)| sigmoid(e) - y)
            .collect();
        let mut g = Vec::with_capacity(self.n_params());
        g.push(resid.iter().sum());
        for (col, &b) in self.cols.iter().zip(&theta[1..]) {
            let d: f64 = col.iter().zip(&resid).map(|(x, r)| x * r).sum();
            let pen = match self.penalty {
                None => 0.0,
                Some((Penalty::L1, lambda)) if b != 0.0 => lambda * b.signum(),
                Some((Penalty::L1, _)) => 0.0,
                Some((Penalty::L2, lambda)) => 2.0 * lambda * b,
            };
            g.push(d + pen);
        }
        g
    }
}

fn initial_intercept(y: &[bool]) -> f64 {
    let rate = y.iter().filter(|&&v| v).count() as f64 / y.len() as f64;
    let rate = rate.clamp(1e-10, 1.0 - 1e-10);
    (rate / (1.0 - rate)).ln()
}

/// Solves `(h + delta I) d = g`, growing `delta` until the factorization succeeds.
fn damped_solve(h: DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
    let n = h.nrows();
    let scale = (0..n).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
    let mut delta = 1e-12 * scale;
    for _ in 0..12 {
        let mut damped = h.clone();
        for i in 0..n {
            damped[(i, i)] += delta;
        }
        if let Some(chol) = damped.cholesky() {
            let d = chol.solve(g);
            if d.iter().all(|v| v.is_finite()) {
                return Ok(d);
            }
        }
        delta *= 100.0;
    }
    Err(Error::Numeric(
        "Newton system could not be factorized".into(),
    ))
}

struct NewtonFit {
    theta: Vec<f64>,
    converged: bool,
    separated: bool,
}

/// Damped Newton iterations on a smooth objective: no penalty or ℓ2.
fn newton(obj: &LogisticObjective, mut theta: Vec<f64>, opts: &LrOptions) -> Result<NewtonFit> {
    let n = obj.y.len() as f64;
    let k = obj.n_params();
    let ridge = match obj.penalty {
        None => 0.0,
        Some((Penalty::L2, lambda)) => 2.0 * lambda,
        Some((Penalty::L1, _)) => unreachable!("the ℓ1 objective is not smooth"),
    };
    let mut f = obj.value(&theta);
    let mut converged = false;
    let mut separated = false;
    for _ in 0..opts.max_iter {
        let eta = obj.eta(&theta);
        let p: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let w: Vec<f64> = p.iter().map(|p| p * (1.0 - p)).collect();
        let resid: Vec<f64> = p.iter().zip(&obj.y).map(|(p, y)| p - y).collect();

        let mut g = DVector::zeros(k);
        g[0] = resid.iter().sum();
        for (j, col) in obj.cols.iter().enumerate() {
            g[j + 1] =
                col.iter().zip(&resid).map(|(x, r)| x * r).sum::<f64>() + ridge * theta[j + 1];
        }
        let mut h = DMatrix::zeros(k, k);
        h[(0, 0)] = w.iter().sum();
        for a in 0..k - 1 {
            let wa: Vec<f64> = obj.cols[a].iter().zip(&w).map(|(x, w)| x * w).collect();
            h[(0, a + 1)] = wa.iter().sum();
            h[(a + 1, 0)] = h[(0, a + 1)];
            for b in a..k - 1 {
                let v: f64 = wa.iter().zip(&obj.cols[b]).map(|(x, y)| x * y).sum();
                h[(a + 1, b + 1)] = v;
                h[(b + 1, a + 1)] = v;
            }
            h[(a + 1, a + 1)] += ridge;
        }
        let d = damped_solve(h, &g)?;
        let slope: f64 = g.dot(&d);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = theta
                .iter()
                .zip(d.iter())
                .map(|(th, d)| th - t * d)
                .collect();
            let fc = obj.value(&cand);
            if fc.is_finite() && fc <= f - 1e-4 * t * slope.max(0.0) {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc)) = accepted else {
            // No descent left at machine precision.
            converged = true;
            break;
        };
        let step = t * d.amax();
        theta = cand;
        f = fc;
        if step < opts.tol * (1.0 + theta.iter().fold(0.0f64, |m, v| m.max(v.abs()))) {
            converged = true;
            break;
        }
        if ridge == 0.0 && f < 1e-9 * n {
            separated = true;
            break;
        }
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("logistic regression diverged".into()));
    }
    Ok(NewtonFit {
        theta,
        converged,
        separated,
    })
}

/// Unpenalized maximum-likelihood logistic regression with intercept.
pub fn train_lr(data: &TrainingSet<'_>, opts: &LrOptions) -> Result<TrainedModel> {
    let obj = LogisticObjective::new(data.x, data.y, None);
    let mut theta = vec![0.0; obj.n_params()];
    theta[0] = initial_intercept(data.y);
    let fit = newton(&obj, theta, opts)?;
    let mut warnings = Vec::new();
    if fit.separated {
        warnings.push("perfect separation: training data fitted exactly".to_string());
    } else if !fit.converged {
        let diverging: Vec<&str> = data
            .schema
            .names()
            .zip(&fit.theta[1..])
            .filter(|(_, b)| b.abs() > 10.0)
            .map(|(name, _)| name)
            .collect();
        let mut msg = format!("did not converge in {} iterations", opts.max_iter);
        if !diverging.is_empty() {
            msg.push_str(&format!(
                "; coefficients of {} are diverging (quasi-separation)",
                diverging.join(", ")
            ));
        }
        warnings.push(msg);
    }
    let model = LinearModel {
        intercept: fit.theta[0],
        coefficients: fit.theta[1..].to_vec(),
    };
    Ok(TrainedModel::new(
        data,
        HyperParams::Lr,
        0,
        warnings,
        ModelParams::Linear(model),
    ))
}

/// Minimizes summed logistic loss + `(1/c)·‖β‖₁` or `(1/c)·‖β‖₂²` over
/// standardized features; the intercept is not penalized.
pub fn train_plr(
    data: &TrainingSet<'_>,
    penalty: Penalty,
    c: f64,
    opts: &LrOptions,
) -> Result<TrainedModel> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::Config(format!(
            "PLR c must be positive and finite, got {c}"
        )));
    }
    let lambda = 1.0 / c;
    let (std, cols) = standardize(data.x);
    let obj = LogisticObjective::from_columns(cols, data.y, Some((penalty, lambda)));
    let p = obj.cols.len();
    let usable: Vec<usize> = (0..p).filter(|&j| std.scale[j] > 0.0).collect();

    let mut theta = vec![0.0; p + 1];
    theta[0] = initial_intercept(data.y);
    let (theta, converged) = match penalty {
        Penalty::L2 => {
            let fit = newton(&obj, theta, opts)?;
            (fit.theta, fit.converged)
        }
        Penalty::L1 => proximal_newton_l1(&obj, theta, lambda, &usable, opts),
    };
    let mut warnings = Vec::new();
    if !converged {
        warnings.push(format!("did not converge in {} iterations", opts.max_iter));
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "penalized logistic regression diverged".into(),
        ));
    }
    let mut intercept = theta[0];
    let mut coefficients = vec![0.0; p];
    for &j in &usable {
        let b = theta[j + 1];
        if b != 0.0 {
            coefficients[j] = b / std.scale[j];
            intercept -= coefficients[j] * std.mean[j];
        }
    }
    Ok(TrainedModel::new(
        data,
        HyperParams::Plr(PlrParams { penalty, c }),
        0,
        warnings,
        ModelParams::Linear(LinearModel {
            intercept,
            coefficients,
        }),
    ))
}

/// Proximal Newton for the ℓ1 objective: each outer step minimizes the penalized
/// quadratic model by coordinate descent, then backtracks on the true objective.
fn proximal_newton_l1(
    obj: &LogisticObjective,
    mut theta: Vec<f64>,
    lambda: f64,
    usable: &[usize],
    opts: &LrOptions,
) -> (Vec<f64>, bool) {
    let n = obj.y.len();
    let p = obj.cols.len();
    let mut f = obj.value(&theta);
    let mut converged = false;
    let inner_tol = 1e-13 * n as f64;
    for _ in 0..opts.max_iter {
        let eta = obj.eta(&theta);
        let mut w = Vec::with_capacity(n);
        let mut r = Vec::with_capacity(n);
        for (e, y) in eta.iter().zip(&obj.y) {
            let pr = sigmoid(*e);
            let wi = (pr * (1.0 - pr)).max(1e-10);
            w.push(wi);
            r.push((y - pr) / wi);
        }
        let sum_w: f64 = w.iter().sum();
        let denom: Vec<f64> = (0..p)
            .map(|j| obj.cols[j].iter().zip(&w).map(|(x, w)| w * x * x).sum())
            .collect();

        // Coordinate descent on the weighted least-squares model around theta.
        let mut cand = theta.clone();
        let mut full_pass = true;
        for _ in 0..10_000 {
            let mut max_change = 0.0f64;
            let delta = r.iter().zip(&w).map(|(r, w)| r * w).sum::<f64>() / sum_w;
            cand[0] += delta;
            for ri in &mut r {
                *ri -= delta;
            }
            max_change = max_change.max(delta * delta * sum_w);
            for &j in usable {
                let old = cand[j + 1];
                if !full_pass && old == 0.0 {
                    continue;
                }
                let col = &obj.cols[j];
                let dj = denom[j];
                let g: f64 = col
                    .iter()
                    .zip(&r)
                    .zip(&w)
                    .map(|((x, r), w)| w * x * r)
                    .sum::<f64>()
                    + dj * old;
                let new = soft_threshold(g, lambda) / dj;
                if new != old {
                    let diff = new - old;
                    for (ri, x) in r.iter_mut().zip(col) {
                        *ri -= diff * x;
                    }
                    cand[j + 1] = new;
                    max_change = max_change.max(diff * diff * dj);
                }
            }
            if max_change < inner_tol {
                if full_pass {
                    break;
                }
                full_pass = true;
            } else {
                full_pass = false;
            }
        }

        let dir: Vec<f64> = cand.iter().zip(&theta).map(|(c, t)| c - t).collect();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = theta.iter().zip(&dir).map(|(th, d)| th + t * d).collect();
            let ft = obj.value(&trial);
            if ft.is_finite() && ft <= f + 1e-12 * f.abs() {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((trial, ft)) = accepted else {
            converged = true;
            break;
        };
        let step = t * dir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let decrease = f - ft;
        theta = trial;
        f = ft;
        if step < opts.tol * (1.0 + theta.iter().fold(0.0f64, |m, v| m.max(v.abs())))
            || decrease <= 1e-13 * (1.0 + f.abs())
        {
            converged = true;
            break;
        }
    }
    (theta, converged)
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}
