//! Ridge-penalized Cox proportional hazards with Breslow ties.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::spec::{FeatureVector, Interaction, ModelSpec};
use crate::error::{Error, Result};
use crate::stats::{normal_quantile, two_sided_normal_p};

/// Ridge parameter used when none is tuned.
pub const DEFAULT_RIDGE: f64 = 3e-5;

/// Row-major design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub n: usize,
    pub p: usize,
    pub data: Vec<f64>,
}

impl Design {
    pub fn new(n: usize, p: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * p, "design shape mismatch");
        Design { n, p, data }
    }

    pub fn from_rows(rows: &[Vec<f64>], p: usize) -> Self {
        let mut data = Vec::with_capacity(rows.len() * p);
        for r in rows {
            assert_eq!(r.len(), p, "ragged design row");
            data.extend_from_slice(r);
        }
        Design::new(rows.len(), p, data)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }
}

/// Penalized Breslow partial log-likelihood and its first two derivatives.
#[derive(Debug, Clone)]
pub struct CoxDerivatives {
    /// Unpenalized partial log-likelihood.
    pub loglik: f64,
    /// `loglik - lambda * |beta|^2 / 2`.
    pub penalized: f64,
    /// Gradient of the penalized objective.
    pub gradient: Vec<f64>,
    /// Hessian of the penalized objective, row-major `p x p`.
    pub hessian: Vec<f64>,
}

/// Event-time groups in descending time order.
fn descending_groups(times: &[f64]) -> (Vec<usize>, Vec<(usize, usize)>) {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]).then(a.cmp(&b)));
    let mut groups = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let t = times[order[start]];
        let mut end = start + 1;
        while end < order.len() && times[order[end]] == t {
            end += 1;
        }
        groups.push((start, end));
        start = end;
    }
    (order, groups)
}

pub fn linear_predictors(x: &Design, beta: &[f64]) -> Vec<f64> {
    (0..x.n)
        .map(|i| x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum())
        .collect()
}

/// Evaluates the penalized partial likelihood with Breslow's handling of
/// ties: every event in a tied group shares the group's full risk set.
pub fn cox_derivatives(
    x: &Design,
    times: &[f64],
    events: &[bool],
    beta: &[f64],
    lambda: f64,
) -> CoxDerivatives {
    let p = x.p;
    let eta = linear_predictors(x, beta);
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0);
    let (order, groups) = descending_groups(times);

    let mut s0 = 0.0;
    let mut s1 = vec![0.0; p];
    let mut s2 = vec![0.0; p * p];
    let mut loglik = 0.0;
    let mut grad = vec![0.0; p];
    let mut hess = vec![0.0; p * p];

    for &(start, end) in &groups {
        let mut d = 0usize;
        for &i in &order[start..end] {
            let w = (eta[i] - shift).exp();
            let xi = x.row(i);
            s0 += w;
            for a in 0..p {
                let wa = w * xi[a];
                s1[a] += wa;
                for b in 0..=a {
                    s2[a * p + b] += wa * xi[b];
                }
            }
            if events[i] {
                d += 1;
                loglik += eta[i];
                for a in 0..p {
                    grad[a] += xi[a];
                }
            }
        }
        if d == 0 {
            continue;
        }
        let df = d as f64;
        loglik -= df * (s0.ln() + shift);
        for a in 0..p {
            let ma = s1[a] / s0;
            grad[a] -= df * ma;
            for b in 0..=a {
                let mb = s1[b] / s0;
                hess[a * p + b] -= df * (s2[a * p + b] / s0 - ma * mb);
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            hess[b * p + a] = hess[a * p + b];
        }
    }

    let norm2: f64 = beta.iter().map(|b| b * b).sum();
    for a in 0..p {
        grad[a] -= lambda * beta[a];
        hess[a * p + a] -= lambda;
    }
    CoxDerivatives {
        loglik,
        penalized: loglik - 0.5 * lambda * norm2,
        gradient: grad,
        hessian: hess,
    }
}

/// Unpenalized partial log-likelihood only.
pub fn partial_loglik(x: &Design, times: &[f64], events: &[bool], beta: &[f64]) -> f64 {
    cox_derivatives(x, times, events, beta, 0.0).loglik
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoxOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the largest coefficient change.
    pub tolerance: f64,
    pub max_halvings: usize,
}

impl Default for CoxOptions {
    fn default() -> Self {
        CoxOptions {
            max_iterations: 100,
            tolerance: 1e-9,
            max_halvings: 40,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoxSolution {
    pub beta: Vec<f64>,
    /// Inverse of the penalized information, row-major `p x p`. Rows and
    /// columns of all-zero design columns are zero.
    pub covariance: Vec<f64>,
    pub loglik: f64,
    pub penalized: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Penalized log-likelihood after each accepted step.
    pub trace: Vec<f64>,
}

fn solve_spd(a: DMatrix<f64>, b: DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Some(ch.solve(&b));
    }
    a.lu().solve(&b)
}

fn invert_spd(a: DMatrix<f64>) -> Option<DMatrix<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Some(ch.inverse());
    }
    a.try_inverse()
}

/// Newton-Raphson with step halving on the penalized partial likelihood.
///
/// Columns that are identically zero carry no information and are held at
/// zero, so constant covariates get an exact zero coefficient even without
/// a penalty.
pub fn newton_cox(
    x: &Design,
    times: &[f64],
    events: &[bool],
    lambda: f64,
    opts: &CoxOptions,
) -> Result<CoxSolution> {
    if times.len() != x.n || events.len() != x.n {
        return Err(Error::invalid("times, events and design rows differ in length"));
    }
    if !events.iter().any(|&e| e) {
        return Err(Error::invalid("cannot fit a Cox model without events"));
    }
    if !(lambda >= 0.0) {
        return Err(Error::invalid("ridge lambda must be non-negative"));
    }
    if x.data.iter().chain(times).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in Cox inputs"));
    }
    let p = x.p;
    let active: Vec<usize> = (0..p)
        .filter(|&j| (0..x.n).any(|i| x.data[i * p + j] != 0.0))
        .collect();
    let k = active.len();

    let mut beta = vec![0.0; p];
    let mut cur = cox_derivatives(x, times, events, &beta, lambda);
    let mut trace = vec![cur.penalized];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations && k > 0 {
        iterations += 1;
        let info = DMatrix::from_fn(k, k, |a, b| -cur.hessian[active[a] * p + active[b]]);
        let g = DVector::from_fn(k, |a, _| cur.gradient[active[a]]);
        let step = solve_spd(info, g).ok_or_else(|| {
            Error::numerical(format!(
                "singular information matrix at iteration {iterations}; trace {trace:?}"
            ))
        })?;

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let mut cand = beta.clone();
            for (a, &j) in active.iter().enumerate() {
                cand[j] += scale * step[a];
            }
            let next = cox_derivatives(x, times, events, &cand, lambda);
            if next.penalized.is_finite() && next.penalized >= cur.penalized - 1e-12 * cur.penalized.abs() {
                accepted = Some((cand, next));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, next)) = accepted else {
            if !cur.penalized.is_finite() {
                return Err(Error::numerical(format!(
                    "non-finite partial likelihood; trace {trace:?}"
                )));
            }
            // No ascent direction left at machine precision.
            converged = true;
            break;
        };
        let max_change = active
            .iter()
            .map(|&j| (cand[j] - beta[j]).abs())
            .fold(0.0, f64::max);
        beta = cand;
        cur = next;
        trace.push(cur.penalized);
        if !cur.penalized.is_finite() || beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::numerical(format!(
                "non-finite partial likelihood; trace {trace:?}"
            )));
        }
        if max_change < opts.tolerance {
            converged = true;
            break;
        }
    }
    if k == 0 {
        converged = true;
    }

    let mut covariance = vec![0.0; p * p];
    if k > 0 {
        let info = DMatrix::from_fn(k, k, |a, b| -cur.hessian[active[a] * p + active[b]]);
        let inv = invert_spd(info)
            .ok_or_else(|| Error::numerical("information matrix is not invertible at the optimum"))?;
        for (a, &i) in active.iter().enumerate() {
            for (b, &j) in active.iter().enumerate() {
                covariance[i * p + j] = 0.5 * (inv[(a, b)] + inv[(b, a)]);
            }
        }
    }

    Ok(CoxSolution {
        beta,
        covariance,
        loglik: cur.loglik,
        penalized: cur.penalized,
        iterations,
        converged,
        trace,
    })
}

/// Cumulative baseline hazard as a right-continuous step function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineHazard {
    /// Distinct event times, ascending.
    pub times: Vec<f64>,
    /// Cumulative hazard just after each event time.
    pub cumhaz: Vec<f64>,
}

impl BaselineHazard {
    /// Breslow estimator given fitted linear predictors.
    pub fn breslow(times: &[f64], events: &[bool], eta: &[f64]) -> Self {
        let (order, groups) = descending_groups(times);
        let mut s0 = 0.0;
        let mut jumps = Vec::new();
        for &(start, end) in &groups {
            let mut d = 0usize;
            for &i in &order[start..end] {
                s0 += eta[i].exp();
                d += usize::from(events[i]);
            }
            if d > 0 {
                jumps.push((times[order[start]], d as f64 / s0));
            }
        }
        jumps.reverse();
        let mut acc = 0.0;
        let mut out = BaselineHazard {
            times: Vec::with_capacity(jumps.len()),
            cumhaz: Vec::with_capacity(jumps.len()),
        };
        for (t, h) in jumps {
            acc += h;
            out.times.push(t);
            out.cumhaz.push(acc);
        }
        out
    }

    pub fn at(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s <= t) {
            0 => 0.0,
            k => self.cumhaz[k - 1],
        }
    }
}

/// Standardization statistics for one base covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// All training values were 0 or 1.
    pub binary: bool,
}

impl ColumnScale {
    pub fn z(&self, v: f64) -> f64 {
        if self.sd > 0.0 {
            (v - self.mean) / self.sd
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    pub spec: ModelSpec,
    pub scaler: Vec<ColumnScale>,
    pub design_names: Vec<String>,
    pub beta: Vec<f64>,
    /// Row-major `p x p`.
    pub covariance: Vec<f64>,
    pub baseline: BaselineHazard,
    pub ridge_lambda: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Unpenalized training partial log-likelihood at the optimum.
    pub loglik: f64,
    /// Longest training follow-up, years.
    pub max_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskScore {
    pub subject_id: String,
    pub linear_predictor: f64,
    pub risk: f64,
    /// The horizon exceeded the training follow-up, so the last baseline
    /// step was carried forward.
    pub extrapolated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazardRatio {
    pub hr: f64,
    pub lo: f64,
    pub hi: f64,
    /// True when reported per unit change of a 0/1 covariate rather than
    /// per standard deviation.
    pub per_unit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldResult {
    pub z: f64,
    pub p_value: f64,
    pub degenerate: bool,
}

fn scaler_for(spec: &ModelSpec, rows: &[&[f64]]) -> Vec<ColumnScale> {
    spec.covariates
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            ColumnScale {
                name: name.clone(),
                mean: crate::stats::mean(&col),
                sd: crate::stats::sample_sd(&col),
                binary: col.iter().all(|&v| v == 0.0 || v == 1.0),
            }
        })
        .collect()
}

fn check_names(spec: &ModelSpec, fv: &FeatureVector) -> Result<()> {
    if fv.names != spec.covariates {
        return Err(Error::invalid(format!(
            "feature vector for {} does not match model {} covariates",
            fv.subject_id, spec.name
        )));
    }
    Ok(())
}

/// Fits a Cox model on raw feature vectors.
///
/// Every base covariate is standardized with the training mean and sample
/// SD; interaction columns are products of standardized covariates and are
/// not rescaled again. `times` are in years.
pub fn fit_cox(
    spec: &ModelSpec,
    features: &[FeatureVector],
    times: &[f64],
    events: &[bool],
    lambda: f64,
) -> Result<CoxFit> {
    fit_cox_with(spec, features, times, events, lambda, &CoxOptions::default())
}

pub fn fit_cox_with(
    spec: &ModelSpec,
    features: &[FeatureVector],
    times: &[f64],
    events: &[bool],
    lambda: f64,
    opts: &CoxOptions,
) -> Result<CoxFit> {
    spec.validate()?;
    if spec.is_threshold_rule() {
        return Err(Error::invalid(format!("{} is a threshold rule and has no Cox fit", spec.name)));
    }
    if features.is_empty() {
        return Err(Error::invalid("no training rows"));
    }
    for fv in features {
        check_names(spec, fv)?;
    }
    let raw: Vec<&[f64]> = features.iter().map(|f| f.values.as_slice()).collect();
    let mut fit = CoxFit {
        spec: spec.clone(),
        scaler: scaler_for(spec, &raw),
        design_names: spec.design_names(),
        beta: Vec::new(),
        covariance: Vec::new(),
        baseline: BaselineHazard {
            times: vec![],
            cumhaz: vec![],
        },
        ridge_lambda: lambda,
        converged: false,
        iterations: 0,
        loglik: f64::NAN,
        max_time: times.iter().copied().fold(0.0, f64::max),
    };
    let design = fit.design(features)?;
    let sol = newton_cox(&design, times, events, lambda, opts)?;
    let eta = linear_predictors(&design, &sol.beta);
    fit.baseline = BaselineHazard::breslow(times, events, &eta);
    fit.beta = sol.beta;
    fit.covariance = sol.covariance;
    fit.converged = sol.converged;
    fit.iterations = sol.iterations;
    fit.loglik = sol.loglik;
    Ok(fit)
}

impl CoxFit {
    pub fn p(&self) -> usize {
        self.design_names.len()
    }

    /// Standardized design row including interaction columns.
    pub fn expand(&self, raw: &[f64]) -> Vec<f64> {
        let mut z: Vec<f64> = self.scaler.iter().zip(raw).map(|(s, &v)| s.z(v)).collect();
        for it in &self.spec.interactions {
            let a = self.index_of(&it.covariate).expect("validated");
            let b = self.index_of(&it.with).expect("validated");
            z.push(z[a] * z[b]);
        }
        z
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.scaler.iter().position(|s| s.name == name)
    }

    pub fn design(&self, features: &[FeatureVector]) -> Result<Design> {
        let mut data = Vec::with_capacity(features.len() * self.p());
        for fv in features {
            check_names(&self.spec, fv)?;
            data.extend(self.expand(&fv.values));
        }
        Ok(Design::new(features.len(), self.p(), data))
    }

    pub fn linear_predictor(&self, fv: &FeatureVector) -> Result<f64> {
        check_names(&self.spec, fv)?;
        Ok(self.expand(&fv.values).iter().zip(&self.beta).map(|(a, b)| a * b).sum())
    }

    /// Absolute risk `1 - exp(-H0(horizon) exp(eta))`, horizon in years.
    pub fn predict_risk(&self, fv: &FeatureVector, horizon: f64) -> Result<RiskScore> {
        let eta = self.linear_predictor(fv)?;
        Ok(RiskScore {
            subject_id: fv.subject_id.clone(),
            linear_predictor: eta,
            risk: self.risk_from_eta(eta, horizon),
            extrapolated: horizon > self.max_time,
        })
    }

    pub fn risk_from_eta(&self, eta: f64, horizon: f64) -> f64 {
        let h0 = self.baseline.at(horizon);
        -(-h0 * eta.exp()).exp_m1()
    }

    /// Unpenalized partial log-likelihood of held-out data at the fitted
    /// coefficients.
    pub fn partial_loglik(&self, features: &[FeatureVector], times: &[f64], events: &[bool]) -> Result<f64> {
        let x = self.design(features)?;
        Ok(partial_loglik(&x, times, events, &self.beta))
    }

    /// Hazard ratio at a reference age, with a 95% delta-method interval.
    ///
    /// Continuous covariates are reported per training SD; 0/1 covariates
    /// per unit change.
    pub fn hazard_ratio_at_age(&self, covariate: &str, reference_age: f64) -> Result<HazardRatio> {
        let j = self
            .index_of(covariate)
            .ok_or_else(|| Error::invalid(format!("unknown covariate {covariate}")))?;
        let p = self.p();
        let mut c = vec![0.0; p];
        c[j] = 1.0;
        for (k, it) in self.spec.interactions.iter().enumerate() {
            let col = self.scaler.len() + k;
            let other = if it.covariate == covariate {
                &it.with
            } else if it.with == covariate {
                &it.covariate
            } else {
                continue;
            };
            if other == "age" {
                let age = &self.scaler[self.index_of("age").expect("validated")];
                c[col] = age.z(reference_age);
            }
        }
        let scale = &self.scaler[j];
        let per_unit = scale.binary;
        if per_unit && scale.sd > 0.0 {
            for v in &mut c {
                *v /= scale.sd;
            }
        }
        let log_hr: f64 = c.iter().zip(&self.beta).map(|(a, b)| a * b).sum();
        let mut var = 0.0;
        for a in 0..p {
            for b in 0..p {
                var += c[a] * self.covariance[a * p + b] * c[b];
            }
        }
        let half = normal_quantile(0.975) * var.max(0.0).sqrt();
        Ok(HazardRatio {
            hr: log_hr.exp(),
            lo: (log_hr - half).exp(),
            hi: (log_hr + half).exp(),
            per_unit,
        })
    }

    /// Two-sided Wald p-values per design coefficient.
    pub fn wald_pvalues(&self) -> Vec<WaldResult> {
        let p = self.p();
        (0..p)
            .map(|k| {
                let var = self.covariance[k * p + k];
                if !(var > 0.0) {
                    return WaldResult {
                        z: 0.0,
                        p_value: 1.0,
                        degenerate: true,
                    };
                }
                let z = self.beta[k] / var.sqrt();
                WaldResult {
                    z,
                    p_value: two_sided_normal_p(z),
                    degenerate: false,
                }
            })
            .collect()
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.design_names.iter().position(|n| n == name).map(|k| self.beta[k])
    }
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

impl CoxFit {
    /// Self-describing text form. Floats use shortest round-trip notation,
    /// so `parse_text(to_text(fit)) == fit`.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# cox fit v1\n");
        s += &format!("model {}\n", self.spec.name);
        s += &format!(
            "kind {}\n",
            self.spec.kind.map(|k| k.name()).unwrap_or("custom")
        );
        s += &format!("covariates {}\n", self.spec.covariates.join(" "));
        s += &format!(
            "interactions {}\n",
            self.spec
                .interactions
                .iter()
                .map(Interaction::name)
                .collect::<Vec<_>>()
                .join(" ")
        );
        s += &format!("lambda {}\n", self.ridge_lambda);
        s += &format!("converged {}\n", self.converged);
        s += &format!("iterations {}\n", self.iterations);
        s += &format!("loglik {}\n", self.loglik);
        s += &format!("max_time {}\n", self.max_time);
        for c in &self.scaler {
            s += &format!("scale {} {} {} {}\n", c.name, c.mean, c.sd, c.binary);
        }
        for (n, b) in self.design_names.iter().zip(&self.beta) {
            s += &format!("beta {n} {b}\n");
        }
        let p = self.p();
        for r in 0..p {
            s += &format!("cov {}\n", join(&self.covariance[r * p..(r + 1) * p]));
        }
        for (t, h) in self.baseline.times.iter().zip(&self.baseline.cumhaz) {
            s += &format!("h0 {t} {h}\n");
        }
        s
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::invalid(format!("cox fit line {line}: {msg}"));
        let num = |line: usize, v: &str| -> Result<f64> {
            v.parse::<f64>().map_err(|_| bad(line, &format!("bad number {v:?}")))
        };
        let mut name = None;
        let mut kind = None;
        let mut covariates = Vec::new();
        let mut interactions = Vec::new();
        let mut fit = CoxFit {
            spec: ModelSpec {
                name: String::new(),
                kind: None,
                covariates: vec![],
                interactions: vec![],
            },
            scaler: vec![],
            design_names: vec![],
            beta: vec![],
            covariance: vec![],
            baseline: BaselineHazard {
                times: vec![],
                cumhaz: vec![],
            },
            ridge_lambda: 0.0,
            converged: false,
            iterations: 0,
            loglik: f64::NAN,
            max_time: 0.0,
        };
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let (key, rest) = raw.split_once(' ').unwrap_or((raw, ""));
            let parts: Vec<&str> = rest.split_whitespace().collect();
            match key {
                "model" => name = Some(rest.trim().to_string()),
                "kind" => {
                    kind = match rest.trim() {
                        "custom" => None,
                        k => Some(k.parse().map_err(|_| bad(ln, "unknown model kind"))?),
                    }
                }
                "covariates" => covariates = parts.iter().map(|s| s.to_string()).collect(),
                "interactions" => {
                    for it in &parts {
                        let (a, b) = it.split_once(':').ok_or_else(|| bad(ln, "bad interaction"))?;
                        interactions.push(Interaction {
                            covariate: a.to_string(),
                            with: b.to_string(),
                        });
                    }
                }
                "lambda" => fit.ridge_lambda = num(ln, rest.trim())?,
                "converged" => {
                    fit.converged = rest.trim().parse().map_err(|_| bad(ln, "bad flag"))?
                }
                "iterations" => {
                    fit.iterations = rest.trim().parse().map_err(|_| bad(ln, "bad count"))?
                }
                "loglik" => fit.loglik = num(ln, rest.trim())?,
                "max_time" => fit.max_time = num(ln, rest.trim())?,
                "scale" => {
                    let [n, m, sd, b] = parts[..] else {
                        return Err(bad(ln, "scale needs 4 fields"));
                    };
                    fit.scaler.push(ColumnScale {
                        name: n.to_string(),
                        mean: num(ln, m)?,
                        sd: num(ln, sd)?,
                        binary: b.parse().map_err(|_| bad(ln, "bad flag"))?,
                    });
                }
                "beta" => {
                    let [n, v] = parts[..] else {
                        return Err(bad(ln, "beta needs 2 fields"));
                    };
                    fit.design_names.push(n.to_string());
                    fit.beta.push(num(ln, v)?);
                }
                "cov" => {
                    for v in &parts {
                        fit.covariance.push(num(ln, v)?);
                    }
                }
                "h0" => {
                    let [t, h] = parts[..] else {
                        return Err(bad(ln, "h0 needs 2 fields"));
                    };
                    fit.baseline.times.push(num(ln, t)?);
                    fit.baseline.cumhaz.push(num(ln, h)?);
                }
                other => return Err(bad(ln, &format!("unknown key {other}"))),
            }
        }
        fit.spec = ModelSpec {
            name: name.ok_or_else(|| Error::invalid("cox fit without model name"))?,
            kind,
            covariates,
            interactions,
        };
        fit.spec.validate()?;
        let p = fit.p();
        if fit.design_names != fit.spec.design_names()
            || fit.scaler.len() != fit.spec.covariates.len()
            || fit.covariance.len() != p * p
        {
            return Err(Error::invalid("cox fit file is inconsistent with its model"));
        }
        Ok(fit)
    }
}

/// Writes `subject_id,eta,risk10`.
pub fn write_risk_csv<W: std::io::Write>(w: W, scores: &[RiskScore]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["subject_id", "eta", "risk10"])?;
    for s in scores {
        out.write_record([
            s.subject_id.clone(),
            s.linear_predictor.to_string(),
            s.risk.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("risk csv", e))?;
    Ok(())
}
