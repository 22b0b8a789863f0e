//! Per-model evaluation bundle on a held-out cohort.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::calibration::{calibration, CalibrationTable, ObservedRate};
use super::classification::{
    binary_confusion, binary_outcome, enrichment, match_operating_point, nri_categorical, nri_category_free,
    Confusion, Enrichment, Nri, OperatingTarget, OutcomeStatus, ENRICHMENT_FRACTIONS,
};
use super::concordance::harrell_c;
use super::curves::{km_curve, log_rank};
use super::resampling::{bootstrap_ci, perm_test_cstat, wald_one_sided, PermutationMode};
use crate::cohort::CohortRow;
use crate::error::{Error, Result};
use crate::rng::keyed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub horizon_years: f64,
    pub reference: String,
    /// Non-inferiority margin in absolute units.
    pub margin: f64,
    pub bootstrap_iterations: usize,
    pub permutation_iterations: usize,
    pub seed: u64,
    pub alpha: f64,
    pub calibration_bins: usize,
    /// Subgroups smaller than this use quintiles for calibration.
    pub small_subgroup_cutoff: usize,
    pub observed_rate: ObservedRate,
    pub fixed_risk_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            horizon_years: 10.0,
            reference: "office_refit_who".into(),
            margin: 0.025,
            bootstrap_iterations: 1000,
            permutation_iterations: 1000,
            seed: 0,
            alpha: 0.05,
            calibration_bins: 10,
            small_subgroup_cutoff: 1000,
            observed_rate: ObservedRate::KaplanMeier,
            fixed_risk_threshold: 0.10,
        }
    }
}

/// Predicted ten-year risks for one model, aligned with the evaluation
/// rows. `None` marks subjects the model cannot score.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelScores {
    pub name: String,
    pub risks: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    MatchSpecificity,
    MatchSensitivity,
    FixedRisk,
}

pub const THRESHOLD_MODES: [ThresholdMode; 3] = [
    ThresholdMode::MatchSpecificity,
    ThresholdMode::MatchSensitivity,
    ThresholdMode::FixedRisk,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRule {
    pub n: usize,
    pub sensitivity: f64,
    pub sensitivity_ci: (f64, f64),
    pub specificity: f64,
    pub specificity_ci: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub mode: ThresholdMode,
    pub threshold: f64,
    pub confusion: Confusion,
    pub nri: Option<Nri>,
    pub nri_ci: Option<(f64, f64)>,
    pub delta_sensitivity: Option<f64>,
    pub p_sensitivity: Option<f64>,
    pub delta_specificity: Option<f64>,
    pub p_specificity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmGroup {
    pub mode: ThresholdMode,
    pub group: String,
    pub n: usize,
    pub steps: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupTest {
    pub mode: ThresholdMode,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: String,
    pub n: usize,
    pub n_paired: usize,
    pub c_statistic: f64,
    pub c_ci: (f64, f64),
    pub delta_vs_reference: f64,
    pub p_noninferiority: f64,
    pub p_superiority: f64,
    pub cfnri: f64,
    pub cfnri_event: f64,
    pub cfnri_nonevent: f64,
    pub cfnri_ci: Option<(f64, f64)>,
    /// Two-category NRI at the thresholds matching the reference rule's
    /// specificity.
    pub nri: f64,
    /// Sensitivity at the threshold matching the reference rule's
    /// specificity.
    pub sensitivity: f64,
    pub sensitivity_ci: (f64, f64),
    /// Specificity at the threshold matching the reference rule's
    /// sensitivity.
    pub specificity: f64,
    pub specificity_ci: (f64, f64),
    pub calibration_slope: Option<f64>,
    pub calibration_slope_ci: Option<(f64, f64)>,
    pub calibration_mace: f64,
    pub calibration: CalibrationTable,
    pub mean_predicted_risk: f64,
    pub operating_points: Vec<OperatingPoint>,
    pub km_curves: Vec<KmGroup>,
    pub log_rank: Vec<GroupTest>,
    pub enrichment: Vec<Enrichment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupModel {
    pub model: String,
    pub n: usize,
    pub c_statistic: Option<f64>,
    pub sensitivity: Option<f64>,
    pub sensitivity_ci: Option<(f64, f64)>,
    pub specificity: Option<f64>,
    pub specificity_ci: Option<(f64, f64)>,
    pub mean_predicted_risk: f64,
    pub calibration_bins: usize,
    pub calibration_slope: Option<f64>,
    pub calibration_mace: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupReport {
    pub name: String,
    pub n: usize,
    pub skipped: bool,
    pub models: Vec<SubgroupModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub horizon_years: f64,
    pub n_subjects: usize,
    pub reference: String,
    pub margin: f64,
    pub seed: u64,
    pub sbp140: ReferenceRule,
    pub models: Vec<ModelReport>,
    pub subgroups: Vec<SubgroupReport>,
}

/// A named subset of the evaluation rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subgroup {
    All,
    Smoker,
    NonSmoker,
    AgeBelow55,
    Age55AndOver,
    Female,
    Male,
    Hba1cAtMost48,
    Hba1cAbove48,
    Hypertension,
    NoHypertension,
}

pub const STANDARD_SUBGROUPS: [Subgroup; 10] = [
    Subgroup::Smoker,
    Subgroup::NonSmoker,
    Subgroup::AgeBelow55,
    Subgroup::Age55AndOver,
    Subgroup::Female,
    Subgroup::Male,
    Subgroup::Hba1cAtMost48,
    Subgroup::Hba1cAbove48,
    Subgroup::Hypertension,
    Subgroup::NoHypertension,
];

impl Subgroup {
    pub fn name(self) -> &'static str {
        match self {
            Subgroup::All => "all",
            Subgroup::Smoker => "smoker",
            Subgroup::NonSmoker => "non_smoker",
            Subgroup::AgeBelow55 => "age_below_55",
            Subgroup::Age55AndOver => "age_55_and_over",
            Subgroup::Female => "female",
            Subgroup::Male => "male",
            Subgroup::Hba1cAtMost48 => "hba1c_at_most_48",
            Subgroup::Hba1cAbove48 => "hba1c_above_48",
            Subgroup::Hypertension => "hypertension",
            Subgroup::NoHypertension => "no_hypertension",
        }
    }

    /// Rows lacking the defining attribute belong to neither half.
    pub fn contains(self, r: &CohortRow) -> bool {
        let flag = |v: Option<bool>, want: bool| v == Some(want);
        match self {
            Subgroup::All => true,
            Subgroup::Smoker => flag(r.smoker, true),
            Subgroup::NonSmoker => flag(r.smoker, false),
            Subgroup::AgeBelow55 => r.age.is_some_and(|a| a < 55.0),
            Subgroup::Age55AndOver => r.age.is_some_and(|a| a >= 55.0),
            Subgroup::Female => flag(r.sex, true),
            Subgroup::Male => flag(r.sex, false),
            Subgroup::Hba1cAtMost48 => r.hba1c.is_some_and(|h| h <= 48.0),
            Subgroup::Hba1cAbove48 => r.hba1c.is_some_and(|h| h > 48.0),
            Subgroup::Hypertension => flag(r.hypertension, true),
            Subgroup::NoHypertension => flag(r.hypertension, false),
        }
    }
}

/// Ties a model's scores to subject positions.
struct View {
    idx: Vec<usize>,
    risk: Vec<f64>,
    times: Vec<f64>,
    events: Vec<bool>,
    outcome: Vec<OutcomeStatus>,
}

impl View {
    fn new(idx: Vec<usize>, risks: &[Option<f64>], times: &[f64], events: &[bool], outcome: &[OutcomeStatus]) -> Self {
        View {
            risk: idx.iter().map(|&i| risks[i].expect("present")).collect(),
            times: idx.iter().map(|&i| times[i]).collect(),
            events: idx.iter().map(|&i| events[i]).collect(),
            outcome: idx.iter().map(|&i| outcome[i]).collect(),
            idx,
        }
    }
}

fn pick<T: Copy>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i]).collect()
}

fn sub_seed(seed: u64, model: usize, tag: u64) -> u64 {
    keyed(&[seed, model as u64, tag]).random()
}

/// Fixed thresholds a model uses everywhere, including subgroups.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub match_specificity: f64,
    pub match_sensitivity: f64,
    pub fixed_risk: f64,
}

impl Thresholds {
    pub fn get(&self, mode: ThresholdMode) -> f64 {
        match mode {
            ThresholdMode::MatchSpecificity => self.match_specificity,
            ThresholdMode::MatchSensitivity => self.match_sensitivity,
            ThresholdMode::FixedRisk => self.fixed_risk,
        }
    }
}

pub fn sbp140_rule(rows: &[CohortRow], outcome: &[OutcomeStatus], alpha: f64) -> Result<ReferenceRule> {
    let idx: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].sbp.is_some()).collect();
    let scores: Vec<f64> = idx
        .iter()
        .map(|&i| f64::from(u8::from(rows[i].sbp.expect("present") >= 140.0)))
        .collect();
    let c = binary_confusion(&scores, 0.5, &pick(outcome, &idx), alpha)?;
    Ok(ReferenceRule {
        n: idx.len(),
        sensitivity: c.sensitivity,
        sensitivity_ci: c.sensitivity_ci,
        specificity: c.specificity,
        specificity_ci: c.specificity_ci,
    })
}

fn thresholds_for(v: &View, rule: &ReferenceRule, cfg: &EvalConfig) -> Result<Thresholds> {
    Ok(Thresholds {
        match_specificity: match_operating_point(
            &v.risk,
            &v.outcome,
            OperatingTarget::MatchSpecificity(rule.specificity),
        )?,
        match_sensitivity: match_operating_point(
            &v.risk,
            &v.outcome,
            OperatingTarget::MatchSensitivity(rule.sensitivity),
        )?,
        fixed_risk: cfg.fixed_risk_threshold,
    })
}

fn present(s: &ModelScores) -> Vec<usize> {
    (0..s.risks.len()).filter(|&i| s.risks[i].is_some()).collect()
}

/// Evaluates every model on the rows of a held-out split.
pub fn evaluate_models(rows: &[CohortRow], models: &[ModelScores], cfg: &EvalConfig) -> Result<EvalReport> {
    if rows.is_empty() {
        return Err(Error::invalid("empty evaluation split"));
    }
    for m in models {
        if m.risks.len() != rows.len() {
            return Err(Error::invalid(format!("scores for {} do not match the evaluation rows", m.name)));
        }
    }
    let reference = models
        .iter()
        .position(|m| m.name == cfg.reference)
        .ok_or_else(|| Error::invalid(format!("reference model {} not among the models", cfg.reference)))?;
    let times: Vec<f64> = rows.iter().map(CohortRow::followup_years).collect();
    let events: Vec<bool> = rows.iter().map(|r| r.event).collect();
    let outcome = binary_outcome(&times, &events, cfg.horizon_years);
    let rule = sbp140_rule(rows, &outcome, cfg.alpha)?;

    let views: Vec<View> = models
        .iter()
        .map(|m| View::new(present(m), &m.risks, &times, &events, &outcome))
        .collect();
    let thresholds: Vec<Thresholds> = views
        .iter()
        .map(|v| thresholds_for(v, &rule, cfg))
        .collect::<Result<_>>()?;

    let mut reports = Vec::with_capacity(models.len());
    for (m, model) in models.iter().enumerate() {
        reports.push(model_report(
            m,
            model,
            &models[reference],
            &views[m],
            &thresholds[m],
            &thresholds[reference],
            &times,
            &events,
            &outcome,
            cfg,
        )?);
    }

    let subgroups = STANDARD_SUBGROUPS
        .iter()
        .map(|&g| subgroup_report(rows, models, &thresholds, g, cfg))
        .collect::<Result<_>>()?;

    Ok(EvalReport {
        horizon_years: cfg.horizon_years,
        n_subjects: rows.len(),
        reference: cfg.reference.clone(),
        margin: cfg.margin,
        seed: cfg.seed,
        sbp140: rule,
        models: reports,
        subgroups,
    })
}

#[allow(clippy::too_many_arguments)]
fn model_report(
    m: usize,
    model: &ModelScores,
    reference: &ModelScores,
    v: &View,
    thr: &Thresholds,
    ref_thr: &Thresholds,
    times: &[f64],
    events: &[bool],
    outcome: &[OutcomeStatus],
    cfg: &EvalConfig,
) -> Result<ModelReport> {
    let name = &model.name;
    let c_boot = bootstrap_ci(
        v.risk.len(),
        |b| harrell_c(&pick(&v.risk, b), &pick(&v.times, b), &pick(&v.events, b)),
        cfg.bootstrap_iterations,
        sub_seed(cfg.seed, m, 1),
    )?;

    // Paired comparisons against the reference on subjects both can score.
    let paired: Vec<usize> = v.idx.iter().copied().filter(|&i| reference.risks[i].is_some()).collect();
    if paired.is_empty() {
        return Err(Error::invalid(format!("{name} shares no subjects with the reference")));
    }
    let new: Vec<f64> = paired.iter().map(|&i| model.risks[i].expect("present")).collect();
    let old: Vec<f64> = paired.iter().map(|&i| reference.risks[i].expect("present")).collect();
    let pt = pick(times, &paired);
    let pe = pick(events, &paired);
    let po = pick(outcome, &paired);

    let ni = perm_test_cstat(
        &new,
        &old,
        &pt,
        &pe,
        cfg.margin,
        PermutationMode::Noninferiority,
        cfg.permutation_iterations,
        sub_seed(cfg.seed, m, 2),
    )?;
    let sup = perm_test_cstat(
        &new,
        &old,
        &pt,
        &pe,
        0.0,
        PermutationMode::Superiority,
        cfg.permutation_iterations,
        sub_seed(cfg.seed, m, 2),
    )?;
    let cf = nri_category_free(&new, &old, &po)?;
    let cf_boot = bootstrap_ci(
        paired.len(),
        |b| Ok(nri_category_free(&pick(&new, b), &pick(&old, b), &pick(&po, b))?.nri),
        cfg.bootstrap_iterations,
        sub_seed(cfg.seed, m, 3),
    )?;

    let mut operating_points = Vec::new();
    for (k, mode) in THRESHOLD_MODES.into_iter().enumerate() {
        let (t_new, t_old) = (thr.get(mode), ref_thr.get(mode));
        let confusion = binary_confusion(&v.risk, t_new, &v.outcome, cfg.alpha)?;
        let nri = nri_categorical(&new, &old, t_new, t_old, &po).ok();
        let nri_ci = bootstrap_ci(
            paired.len(),
            |b| Ok(nri_categorical(&pick(&new, b), &pick(&old, b), t_new, t_old, &pick(&po, b))?.nri),
            cfg.bootstrap_iterations,
            sub_seed(cfg.seed, m, 10 + k as u64),
        )
        .ok()
        .map(|c| (c.lo, c.hi));
        let deltas = |b: &[usize]| -> Result<(f64, f64)> {
            let o = pick(&po, b);
            let a = binary_confusion(&pick(&new, b), t_new, &o, cfg.alpha)?;
            let r = binary_confusion(&pick(&old, b), t_old, &o, cfg.alpha)?;
            Ok((a.sensitivity - r.sensitivity, a.specificity - r.specificity))
        };
        let all: Vec<usize> = (0..paired.len()).collect();
        let (mut ds, mut ps, mut dp, mut pp) = (None, None, None, None);
        if let Ok((d_sens, d_spec)) = deltas(&all) {
            let seed = sub_seed(cfg.seed, m, 20 + k as u64);
            let se_sens = bootstrap_ci(paired.len(), |b| deltas(b).map(|d| d.0), cfg.bootstrap_iterations, seed);
            let se_spec = bootstrap_ci(paired.len(), |b| deltas(b).map(|d| d.1), cfg.bootstrap_iterations, seed);
            ds = Some(d_sens);
            dp = Some(d_spec);
            ps = se_sens.ok().map(|b| wald_one_sided(d_sens, b.se, cfg.margin).p_value);
            pp = se_spec.ok().map(|b| wald_one_sided(d_spec, b.se, cfg.margin).p_value);
        }
        operating_points.push(OperatingPoint {
            mode,
            threshold: t_new,
            confusion,
            nri,
            nri_ci,
            delta_sensitivity: ds,
            p_sensitivity: ps,
            delta_specificity: dp,
            p_specificity: pp,
        });
    }

    let cal = calibration(
        &v.risk,
        &v.times,
        &v.events,
        cfg.horizon_years,
        cfg.calibration_bins,
        cfg.observed_rate,
    )?;
    let slope_ci = bootstrap_ci(
        v.risk.len(),
        |b| {
            calibration(
                &pick(&v.risk, b),
                &pick(&v.times, b),
                &pick(&v.events, b),
                cfg.horizon_years,
                cfg.calibration_bins,
                cfg.observed_rate,
            )?
            .slope
            .ok_or_else(|| Error::numerical("degenerate calibration"))
        },
        cfg.bootstrap_iterations,
        sub_seed(cfg.seed, m, 4),
    )
    .ok()
    .map(|c| (c.lo, c.hi));

    let mut km_curves = Vec::new();
    let mut log_ranks = Vec::new();
    for mode in THRESHOLD_MODES {
        let t = thr.get(mode);
        let (hi, lo): (Vec<usize>, Vec<usize>) = (0..v.risk.len()).partition(|&i| v.risk[i] >= t);
        for (group, members) in [("high", &hi), ("low", &lo)] {
            let km = km_curve(&pick(&v.times, members), &pick(&v.events, members));
            km_curves.push(KmGroup {
                mode,
                group: group.to_string(),
                n: members.len(),
                steps: km.event_steps(),
            });
        }
        if let Ok(lr) = log_rank(
            (&pick(&v.times, &hi), &pick(&v.events, &hi)),
            (&pick(&v.times, &lo), &pick(&v.events, &lo)),
        ) {
            log_ranks.push(GroupTest {
                mode,
                statistic: lr.statistic,
                p_value: lr.p_value,
            });
        }
    }

    let at_spec = &operating_points[0].confusion;
    let at_sens = &operating_points[1].confusion;
    Ok(ModelReport {
        model: name.clone(),
        n: v.risk.len(),
        n_paired: paired.len(),
        c_statistic: c_boot.point,
        c_ci: (c_boot.lo, c_boot.hi),
        delta_vs_reference: ni.statistic,
        p_noninferiority: ni.p_value,
        p_superiority: sup.p_value,
        cfnri: cf.nri,
        cfnri_event: cf.event,
        cfnri_nonevent: cf.nonevent,
        cfnri_ci: Some((cf_boot.lo, cf_boot.hi)),
        nri: operating_points[0].nri.map_or(f64::NAN, |n| n.nri),
        sensitivity: at_spec.sensitivity,
        sensitivity_ci: at_spec.sensitivity_ci,
        specificity: at_sens.specificity,
        specificity_ci: at_sens.specificity_ci,
        calibration_slope: cal.slope,
        calibration_slope_ci: slope_ci,
        calibration_mace: cal.mean_abs_error,
        mean_predicted_risk: v.risk.iter().sum::<f64>() / v.risk.len() as f64,
        calibration: cal,
        operating_points,
        km_curves,
        log_rank: log_ranks,
        enrichment: enrichment(&v.risk, &v.outcome, &ENRICHMENT_FRACTIONS)?,
    })
}

/// C-statistic, sensitivity and specificity at the global thresholds,
/// mean risk and calibration within one subgroup. Sensitivity and
/// specificity both use the threshold matching the reference rule's
/// specificity.
pub fn subgroup_report(
    rows: &[CohortRow],
    models: &[ModelScores],
    thresholds: &[Thresholds],
    group: Subgroup,
    cfg: &EvalConfig,
) -> Result<SubgroupReport> {
    if thresholds.len() != models.len() {
        return Err(Error::invalid("one threshold set per model is required"));
    }
    let members: Vec<usize> = (0..rows.len()).filter(|&i| group.contains(&rows[i])).collect();
    let mut out = SubgroupReport {
        name: group.name().to_string(),
        n: members.len(),
        skipped: members.is_empty(),
        models: Vec::new(),
    };
    if out.skipped {
        return Ok(out);
    }
    let times: Vec<f64> = rows.iter().map(CohortRow::followup_years).collect();
    let events: Vec<bool> = rows.iter().map(|r| r.event).collect();
    let outcome = binary_outcome(&times, &events, cfg.horizon_years);
    let bins = if members.len() < cfg.small_subgroup_cutoff {
        5
    } else {
        cfg.calibration_bins
    };
    for (model, thr) in models.iter().zip(thresholds) {
        let idx: Vec<usize> = members.iter().copied().filter(|&i| model.risks[i].is_some()).collect();
        let v = View::new(idx, &model.risks, &times, &events, &outcome);
        if v.risk.is_empty() {
            continue;
        }
        let conf = binary_confusion(&v.risk, thr.match_specificity, &v.outcome, cfg.alpha).ok();
        let cal = calibration(&v.risk, &v.times, &v.events, cfg.horizon_years, bins, cfg.observed_rate).ok();
        out.models.push(SubgroupModel {
            model: model.name.clone(),
            n: v.risk.len(),
            c_statistic: harrell_c(&v.risk, &v.times, &v.events).ok(),
            sensitivity: conf.map(|c| c.sensitivity),
            sensitivity_ci: conf.map(|c| c.sensitivity_ci),
            specificity: conf.map(|c| c.specificity),
            specificity_ci: conf.map(|c| c.specificity_ci),
            mean_predicted_risk: v.risk.iter().sum::<f64>() / v.risk.len() as f64,
            calibration_bins: bins,
            calibration_slope: cal.as_ref().and_then(|c| c.slope),
            calibration_mace: cal.map(|c| c.mean_abs_error),
        });
    }
    Ok(out)
}

/// Global thresholds for each model, as used by [`evaluate_models`].
pub fn model_thresholds(rows: &[CohortRow], models: &[ModelScores], cfg: &EvalConfig) -> Result<Vec<Thresholds>> {
    let times: Vec<f64> = rows.iter().map(CohortRow::followup_years).collect();
    let events: Vec<bool> = rows.iter().map(|r| r.event).collect();
    let outcome = binary_outcome(&times, &events, cfg.horizon_years);
    let rule = sbp140_rule(rows, &outcome, cfg.alpha)?;
    models
        .iter()
        .map(|m| thresholds_for(&View::new(present(m), &m.risks, &times, &events, &outcome), &rule, cfg))
        .collect()
}
