//! File-based pipeline: simulate, train, fit, evaluate and report.
//!
//! Every stage reads its inputs from and writes its outputs to the run's
//! output directory, so stages can be rerun independently. Outputs are
//! written atomically and depend only on the configuration and seeds.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{
    apply_inclusion, generate_synthetic, load_cohort, split_by_site, CohortRow, ColumnMap, ExclusionLog, Split,
    SplitAssignment, Splits, SyntheticSpec, WaveformStore,
};
use crate::encoder::{
    read_weights, train, write_weights, AgeScale, Encoder, EncoderConfig, PcaModel, ProxyTargets, TrainingLog,
    TuneSet,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_models, EvalConfig, EvalReport, ModelScores, ObservedRate};
use crate::signal::{extract_morphology, resample_linear, MorphologyFeatures, Waveform};
use crate::survival::{
    build_features, fit_cox, write_risk_csv, CoxFit, FeatureVector, ModelKind, ModelSpec, PpgInputs, RiskScore,
    DLS_FEATURES,
};

pub const COHORT_FILE: &str = "cohort.csv";
pub const WAVEFORM_FILE: &str = "waveforms.txt";
pub const TRUTH_FILE: &str = "truth.json";
pub const WEIGHTS_FILE: &str = "encoder.weights";
pub const PCA_FILE: &str = "pca.csv";
pub const TRAINING_LOG_FILE: &str = "training_log.csv";
pub const REPORT_FILE: &str = "report.json";

/// Evaluation settings other than the reference model and margin, which
/// live at the top level of [`RunConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationSettings {
    pub horizon_years: f64,
    pub bootstrap_iterations: usize,
    pub permutation_iterations: usize,
    pub seed: u64,
    pub alpha: f64,
    pub calibration_bins: usize,
    pub small_subgroup_cutoff: usize,
    pub observed_rate: ObservedRate,
    pub fixed_risk_threshold: f64,
}

impl Default for EvaluationSettings {
    fn default() -> Self {
        let d = EvalConfig::default();
        EvaluationSettings {
            horizon_years: d.horizon_years,
            bootstrap_iterations: d.bootstrap_iterations,
            permutation_iterations: d.permutation_iterations,
            seed: d.seed,
            alpha: d.alpha,
            calibration_bins: d.calibration_bins,
            small_subgroup_cutoff: d.small_subgroup_cutoff,
            observed_rate: d.observed_rate,
            fixed_risk_threshold: d.fixed_risk_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    /// Defaults to `<out_dir>/cohort.csv`.
    pub cohort_path: Option<PathBuf>,
    /// Defaults to `<out_dir>/waveforms.txt`.
    pub waveform_path: Option<PathBuf>,
    pub columns: ColumnMap,
    pub simulation: SyntheticSpec,
    pub splits: SplitAssignment,
    pub encoder: EncoderConfig,
    pub ridge_grid: Vec<f64>,
    pub models: Vec<String>,
    pub reference: String,
    pub margin: f64,
    pub evaluation: EvaluationSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        let simulation = SyntheticSpec {
            n_subjects: 4000,
            true_coefficients: [
                ("age", 0.6),
                ("sex", -0.3),
                ("smoker", 0.3),
                ("bmi", 0.1),
                ("sbp", 0.3),
                ("vascular", 0.5),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
            ..SyntheticSpec::default()
        };
        let splits = simulation
            .sites
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let split = match i {
                    0..=4 => Split::Train,
                    5 => Split::Tune,
                    _ => Split::Test,
                };
                (s.clone(), split)
            })
            .collect();
        let encoder = EncoderConfig {
            epochs: 20,
            learning_rate: 1e-3,
            ..EncoderConfig::default()
        };
        RunConfig {
            out_dir: PathBuf::from("ppgrisk-out"),
            cohort_path: None,
            waveform_path: None,
            columns: ColumnMap::default(),
            simulation,
            splits,
            encoder,
            ridge_grid: vec![1e-5, 3e-5, 1e-4],
            models: [
                ModelKind::Metadata,
                ModelKind::OfficeRefitWho,
                ModelKind::LabRefitWho,
                ModelKind::MetadataPpgMorph,
                ModelKind::Dls,
                ModelKind::DlsPlus,
                ModelKind::DlsPlusPlus,
            ]
            .iter()
            .map(|k| k.name().to_string())
            .collect(),
            reference: ModelKind::OfficeRefitWho.name().into(),
            margin: 0.025,
            evaluation: EvaluationSettings::default(),
        }
    }
}

/// Command-line overrides applied on top of a loaded configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub models: Option<Vec<String>>,
    pub margin: Option<f64>,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// `seed` replaces the simulation, encoder and evaluation seeds.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.simulation.seed = seed;
            self.encoder.seed = seed;
            self.evaluation.seed = seed;
        }
        if let Some(out) = &o.out_dir {
            self.out_dir = out.clone();
        }
        if let Some(models) = &o.models {
            self.models = models.clone();
        }
        if let Some(m) = o.margin {
            self.margin = m;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::invalid("no models selected"));
        }
        for m in &self.models {
            ModelSpec::by_name(m)?;
        }
        if !self.models.contains(&self.reference) {
            return Err(Error::invalid(format!(
                "reference model {} is not in the model list",
                self.reference
            )));
        }
        if ModelSpec::by_name(&self.reference)?.is_threshold_rule() {
            return Err(Error::invalid("the reference must be a fitted model"));
        }
        if !(self.margin >= 0.0) || !self.margin.is_finite() {
            return Err(Error::invalid("margin must be a non-negative number"));
        }
        if self.ridge_grid.is_empty() || self.ridge_grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(Error::invalid("ridge_grid needs at least one non-negative value"));
        }
        if !(self.evaluation.horizon_years > 0.0) {
            return Err(Error::invalid("horizon_years must be positive"));
        }
        self.encoder.validate()
    }

    pub fn cohort_path(&self) -> PathBuf {
        self.cohort_path.clone().unwrap_or_else(|| self.out_dir.join(COHORT_FILE))
    }

    pub fn waveform_path(&self) -> PathBuf {
        self.waveform_path.clone().unwrap_or_else(|| self.out_dir.join(WAVEFORM_FILE))
    }

    pub fn fit_path(&self, model: &str) -> PathBuf {
        self.out_dir.join("fits").join(format!("{model}.cox"))
    }

    pub fn eval_config(&self) -> EvalConfig {
        let e = &self.evaluation;
        EvalConfig {
            horizon_years: e.horizon_years,
            reference: self.reference.clone(),
            margin: self.margin,
            bootstrap_iterations: e.bootstrap_iterations,
            permutation_iterations: e.permutation_iterations,
            seed: e.seed,
            alpha: e.alpha,
            calibration_bins: e.calibration_bins,
            small_subgroup_cutoff: e.small_subgroup_cutoff,
            observed_rate: e.observed_rate,
            fixed_risk_threshold: e.fixed_risk_threshold,
        }
    }

    fn specs(&self) -> Result<Vec<ModelSpec>> {
        self.models.iter().map(|m| ModelSpec::by_name(m)).collect()
    }
}

/// Writes through a sibling temporary file and a rename so readers never
/// see a partial file.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTruth {
    pub n_subjects: usize,
    pub seed: u64,
    pub baseline_rate: f64,
    pub coefficients: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSummary {
    pub n_subjects: usize,
    pub n_events: usize,
    pub cohort_path: PathBuf,
    pub waveform_path: PathBuf,
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulateSummary> {
    let cohort = generate_synthetic(&cfg.simulation)?;
    let mut csv = Vec::new();
    crate::cohort::write_cohort(&mut csv, &cohort.rows)?;
    let cohort_path = cfg.cohort_path();
    write_atomic(&cohort_path, &csv)?;

    let waveform_path = cfg.waveform_path();
    let mut waves = Vec::new();
    cohort
        .waveforms
        .write(&mut waves)
        .map_err(|e| Error::io(&waveform_path, e))?;
    write_atomic(&waveform_path, &waves)?;

    let truth = SimulationTruth {
        n_subjects: cohort.rows.len(),
        seed: cfg.simulation.seed,
        baseline_rate: cohort.baseline_rate,
        coefficients: cohort.truth.clone(),
    };
    write_atomic(cfg.out_dir.join(TRUTH_FILE), serde_json::to_string_pretty(&truth)?.as_bytes())?;
    Ok(SimulateSummary {
        n_subjects: cohort.rows.len(),
        n_events: cohort.rows.iter().filter(|r| r.event).count(),
        cohort_path,
        waveform_path,
    })
}

/// Cohort rows with the inclusion rules applied and split by site.
#[derive(Debug, Clone)]
pub struct LoadedCohort {
    pub all: Vec<CohortRow>,
    pub included: Splits,
    pub exclusions: ExclusionLog,
}

pub fn load_run_cohort(cfg: &RunConfig) -> Result<LoadedCohort> {
    let path = cfg.cohort_path();
    if !path.exists() {
        return Err(Error::Dependency(format!(
            "cohort file {} not found; run simulate first",
            path.display()
        )));
    }
    let all = load_cohort(&path, &cfg.columns)?;
    let (kept, exclusions) = apply_inclusion(&all);
    let included = split_by_site(&kept, &cfg.splits)?;
    Ok(LoadedCohort {
        all,
        included,
        exclusions,
    })
}

fn load_waveforms(cfg: &RunConfig, needed_by: &str) -> Result<WaveformStore> {
    let path = cfg.waveform_path();
    if !path.exists() {
        return Err(Error::Dependency(format!(
            "{needed_by} needs the waveform store {}; run simulate first",
            path.display()
        )));
    }
    WaveformStore::load(&path)
}

fn encoder_input(store: &WaveformStore, row: &CohortRow, len: usize) -> Option<Result<Waveform>> {
    let w = store.get(row.waveform_key())?;
    Some(if w.len() == len { Ok(w) } else { resample_linear(&w, len) })
}

/// Morphology for one subject; extraction failures leave the subject
/// without morphology features.
fn morphology(store: &WaveformStore, row: &CohortRow) -> Option<MorphologyFeatures> {
    let w = store.get(row.waveform_key())?;
    extract_morphology(&w, row.height.unwrap_or(1.0)).ok()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub n_train: usize,
    pub n_tune: usize,
    pub log: TrainingLog,
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.encoder.validate()?;
    let store = load_waveforms(cfg, "training")?;
    let cohort = load_run_cohort(cfg)?;
    let len = cfg.encoder.input_length;

    // The encoder learns from all train-site subjects with a waveform; the
    // proxy tasks do not need follow-up or complete covariates.
    let train_rows: Vec<&CohortRow> = cohort
        .all
        .iter()
        .filter(|r| cfg.splits.get(&r.site) == Some(&Split::Train))
        .filter(|r| store.get(r.waveform_key()).is_some())
        .collect();
    if train_rows.is_empty() {
        return Err(Error::invalid("train split has no subjects with waveforms"));
    }
    let owned: Vec<CohortRow> = train_rows.iter().map(|r| (*r).clone()).collect();
    let age = AgeScale::from_rows(&owned)?;
    let prepared: Vec<(Waveform, ProxyTargets)> = train_rows
        .par_iter()
        .map(|r| {
            let w = encoder_input(&store, r, len).expect("filtered above")?;
            let notch = morphology(&store, r).map(|m| !m.notch_absent);
            Ok((w, ProxyTargets::from_row(r, notch, age)))
        })
        .collect::<Result<_>>()?;
    let (waves, targets): (Vec<_>, Vec<_>) = prepared.into_iter().filter(|(_, t)| t.present() > 0).unzip();

    let tune_rows: Vec<&CohortRow> = cohort
        .included
        .tune
        .iter()
        .filter(|r| store.get(r.waveform_key()).is_some())
        .collect();
    if tune_rows.is_empty() {
        return Err(Error::invalid("tune split has no included subjects with waveforms"));
    }
    let tune = TuneSet {
        waveforms: tune_rows
            .iter()
            .map(|r| encoder_input(&store, r, len).expect("filtered above"))
            .collect::<Result<_>>()?,
        times: tune_rows.iter().map(|r| r.followup_years()).collect(),
        events: tune_rows.iter().map(|r| r.event).collect(),
    };

    let (enc, log) = train(&cfg.encoder, &waves, &targets, &tune)?;
    let emb: Vec<Vec<f64>> = waves.par_iter().map(|w| enc.embed(w)).collect::<Result<_>>()?;
    let pca = crate::encoder::fit_pca(&emb)?;

    let mut weights = Vec::new();
    write_weights(&mut weights, &enc).map_err(|e| Error::io(cfg.out_dir.join(WEIGHTS_FILE), e))?;
    write_atomic(cfg.out_dir.join(WEIGHTS_FILE), &weights)?;
    write_atomic(cfg.out_dir.join(PCA_FILE), pca.to_csv().as_bytes())?;
    write_atomic(cfg.out_dir.join(TRAINING_LOG_FILE), log.to_csv().as_bytes())?;
    Ok(TrainSummary {
        n_train: waves.len(),
        n_tune: tune.waveforms.len(),
        log,
    })
}

fn load_encoder(cfg: &RunConfig, model: &str) -> Result<(Encoder, PcaModel)> {
    let wpath = cfg.out_dir.join(WEIGHTS_FILE);
    let ppath = cfg.out_dir.join(PCA_FILE);
    if !wpath.exists() || !ppath.exists() {
        return Err(Error::Dependency(format!(
            "{model} needs the trained encoder ({} not found); run train first",
            wpath.display()
        )));
    }
    let f = fs::File::open(&wpath).map_err(|e| Error::io(&wpath, e))?;
    let enc = read_weights(BufReader::new(f))?;
    let text = fs::read_to_string(&ppath).map_err(|e| Error::io(&ppath, e))?;
    Ok((enc, PcaModel::from_csv(&text)?))
}

/// Waveform-derived inputs for a set of rows, computed only when a model
/// needs them.
#[derive(Debug, Clone, Default)]
pub struct PpgFeatures {
    pub morphology: Vec<Option<MorphologyFeatures>>,
    pub dls: Vec<Option<[f64; DLS_FEATURES]>>,
}

impl PpgFeatures {
    pub fn inputs(&self, i: usize) -> PpgInputs<'_> {
        PpgInputs {
            morphology: self.morphology.get(i).and_then(Option::as_ref),
            dls: self.dls.get(i).and_then(Option::as_ref),
        }
    }
}

pub fn ppg_features(cfg: &RunConfig, specs: &[ModelSpec], rows: &[CohortRow]) -> Result<PpgFeatures> {
    let needs = |f: fn(ModelKind) -> bool| specs.iter().find(|s| s.kind.is_some_and(f));
    let mut out = PpgFeatures::default();
    if let Some(s) = needs(ModelKind::needs_morphology) {
        let store = load_waveforms(cfg, &s.name)?;
        out.morphology = rows.par_iter().map(|r| morphology(&store, r)).collect();
    }
    if let Some(s) = needs(ModelKind::needs_encoder) {
        let (enc, pca) = load_encoder(cfg, &s.name)?;
        let store = load_waveforms(cfg, &s.name)?;
        let len = enc.arch.input_length;
        out.dls = rows
            .par_iter()
            .map(|r| match encoder_input(&store, r, len) {
                None => Ok(None),
                Some(w) => Ok(Some(pca.project5(&enc.embed(&w?)?)?)),
            })
            .collect::<Result<_>>()?;
    }
    Ok(out)
}

/// Feature vectors per row; rows missing a covariate map to `None`.
pub fn model_features(spec: &ModelSpec, rows: &[CohortRow], ppg: &PpgFeatures) -> Result<Vec<Option<FeatureVector>>> {
    rows.iter()
        .enumerate()
        .map(|(i, r)| match build_features(spec, r, &ppg.inputs(i)) {
            Ok(fv) => Ok(Some(fv)),
            Err(Error::MissingCovariate(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

fn complete(features: Vec<Option<FeatureVector>>, rows: &[CohortRow]) -> (Vec<FeatureVector>, Vec<f64>, Vec<bool>) {
    let mut fv = Vec::new();
    let mut times = Vec::new();
    let mut events = Vec::new();
    for (f, r) in features.into_iter().zip(rows) {
        if let Some(f) = f {
            fv.push(f);
            times.push(r.followup_years());
            events.push(r.event);
        }
    }
    (fv, times, events)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub model: String,
    pub lambda: f64,
    pub n_train: usize,
    pub n_train_events: usize,
    pub n_tune: usize,
    pub tune_partial_loglik: f64,
    pub converged: bool,
}

/// Fits every Cox model on the train split, choosing the ridge penalty by
/// tune-set partial log-likelihood. Threshold rules are skipped.
pub fn cmd_fit(cfg: &RunConfig) -> Result<Vec<FitSummary>> {
    cfg.validate()?;
    let specs: Vec<ModelSpec> = cfg.specs()?.into_iter().filter(|s| !s.is_threshold_rule()).collect();
    let cohort = load_run_cohort(cfg)?;
    let train_rows = &cohort.included.train;
    let tune_rows = &cohort.included.tune;
    let ppg_train = ppg_features(cfg, &specs, train_rows)?;
    let ppg_tune = ppg_features(cfg, &specs, tune_rows)?;

    let mut summaries = Vec::with_capacity(specs.len());
    for spec in &specs {
        let (fv, times, events) = complete(model_features(spec, train_rows, &ppg_train)?, train_rows);
        let (tfv, ttimes, tevents) = complete(model_features(spec, tune_rows, &ppg_tune)?, tune_rows);
        if fv.is_empty() {
            return Err(Error::invalid(format!("{}: no complete train rows", spec.name)));
        }
        if tfv.is_empty() {
            return Err(Error::invalid(format!("{}: no complete tune rows", spec.name)));
        }
        let mut best: Option<(f64, CoxFit)> = None;
        for &lambda in &cfg.ridge_grid {
            let fit = fit_cox(spec, &fv, &times, &events, lambda)?;
            let ll = fit.partial_loglik(&tfv, &ttimes, &tevents)?;
            if best.as_ref().is_none_or(|(b, _)| ll > *b) {
                best = Some((ll, fit));
            }
        }
        let (ll, fit) = best.expect("ridge grid is non-empty");
        write_atomic(cfg.fit_path(&spec.name), fit.to_text().as_bytes())?;
        summaries.push(FitSummary {
            model: spec.name.clone(),
            lambda: fit.ridge_lambda,
            n_train: fv.len(),
            n_train_events: events.iter().filter(|&&e| e).count(),
            n_tune: tfv.len(),
            tune_partial_loglik: ll,
            converged: fit.converged,
        });
    }
    Ok(summaries)
}

/// Per-model risk rows for subjects the model could score.
pub type RiskTable = (String, Vec<RiskScore>);

/// Ten-year risk per test row for each fitted model.
pub fn score_models(cfg: &RunConfig, rows: &[CohortRow]) -> Result<(Vec<ModelScores>, Vec<RiskTable>)> {
    let specs: Vec<ModelSpec> = cfg.specs()?.into_iter().filter(|s| !s.is_threshold_rule()).collect();
    let fits: Vec<CoxFit> = specs
        .iter()
        .map(|s| {
            let path = cfg.fit_path(&s.name);
            if !path.exists() {
                return Err(Error::Dependency(format!(
                    "no fitted model for {} ({}); run fit first",
                    s.name,
                    path.display()
                )));
            }
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            CoxFit::parse_text(&text)
        })
        .collect::<Result<_>>()?;
    let ppg = ppg_features(cfg, &specs, rows)?;
    let horizon = cfg.evaluation.horizon_years;
    let mut scores = Vec::with_capacity(fits.len());
    let mut risk_tables = Vec::with_capacity(fits.len());
    for fit in &fits {
        let feats = model_features(&fit.spec, rows, &ppg)?;
        let mut risks = Vec::with_capacity(rows.len());
        let mut table = Vec::new();
        for f in &feats {
            match f {
                Some(fv) => {
                    let r = fit.predict_risk(fv, horizon)?;
                    risks.push(Some(r.risk));
                    table.push(r);
                }
                None => risks.push(None),
            }
        }
        scores.push(ModelScores {
            name: fit.spec.name.clone(),
            risks,
        });
        risk_tables.push((fit.spec.name.clone(), table));
    }
    Ok((scores, risk_tables))
}

/// Evaluates every fitted model on the test split only.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let cohort = load_run_cohort(cfg)?;
    let test = &cohort.included.test;
    if test.is_empty() {
        return Err(Error::invalid("test split has no included subjects"));
    }
    let (scores, risk_tables) = score_models(cfg, test)?;
    let report = evaluate_models(test, &scores, &cfg.eval_config())?;

    write_atomic(cfg.out_dir.join(REPORT_FILE), serde_json::to_string_pretty(&report)?.as_bytes())?;
    write_atomic(cfg.out_dir.join("calibration.csv"), calibration_csv(&report).as_bytes())?;
    write_atomic(cfg.out_dir.join("km.csv"), km_csv(&report).as_bytes())?;
    for (name, table) in &risk_tables {
        let mut buf = Vec::new();
        write_risk_csv(&mut buf, table)?;
        write_atomic(cfg.out_dir.join("risks").join(format!("{name}.csv")), &buf)?;
    }
    Ok(report)
}

pub fn calibration_csv(report: &EvalReport) -> String {
    let mut s = String::from("model,bin,count,min_score,max_score,mean_predicted,observed\n");
    for m in &report.models {
        for (i, b) in m.calibration.bins.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                m.model,
                i + 1,
                b.count,
                b.min_score,
                b.max_score,
                b.mean_predicted,
                b.observed
            );
        }
    }
    s
}

pub fn km_csv(report: &EvalReport) -> String {
    let mut s = String::from("model,mode,group,time,survival\n");
    for m in &report.models {
        for g in &m.km_curves {
            let mode = serde_json::to_value(g.mode).ok();
            let mode = mode.as_ref().and_then(|v| v.as_str()).unwrap_or("");
            for (t, surv) in &g.steps {
                let _ = writeln!(s, "{},{},{},{},{}", m.model, mode, g.group, t, surv);
            }
        }
    }
    s
}

pub fn load_report(cfg: &RunConfig) -> Result<EvalReport> {
    let path = cfg.out_dir.join(REPORT_FILE);
    if !path.exists() {
        return Err(Error::Dependency(format!(
            "{} not found; run evaluate first",
            path.display()
        )));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn pct(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

fn pct_ci(v: f64, ci: (f64, f64)) -> String {
    format!("{} ({}-{})", pct(v), pct(ci.0), pct(ci.1))
}

fn opt3(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into())
}

/// Plain-text summary tables; percentages carry one decimal.
pub fn render_report(r: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{}-year risk evaluation: {} subjects, reference {}, margin {}",
        r.horizon_years,
        r.n_subjects,
        r.reference,
        pct(r.margin)
    );
    let _ = writeln!(
        s,
        "SBP >= 140 rule: sensitivity {}%, specificity {}%\n",
        pct_ci(r.sbp140.sensitivity, r.sbp140.sensitivity_ci),
        pct_ci(r.sbp140.specificity, r.sbp140.specificity_ci)
    );
    let _ = writeln!(
        s,
        "{:<20} {:>6} {:>22} {:>8} {:>8} {:>8} {:>22} {:>22} {:>7} {:>7}",
        "model", "n", "C (95% CI) %", "dC %", "p_ni", "p_sup", "sensitivity %", "specificity %", "slope", "mace %"
    );
    for m in &r.models {
        let _ = writeln!(
            s,
            "{:<20} {:>6} {:>22} {:>8} {:>8.4} {:>8.4} {:>22} {:>22} {:>7} {:>7}",
            m.model,
            m.n,
            pct_ci(m.c_statistic, m.c_ci),
            pct(m.delta_vs_reference),
            m.p_noninferiority,
            m.p_superiority,
            pct_ci(m.sensitivity, m.sensitivity_ci),
            pct_ci(m.specificity, m.specificity_ci),
            opt3(m.calibration_slope),
            pct(m.calibration_mace),
        );
    }
    let _ = writeln!(s, "\nReclassification and enrichment");
    let _ = writeln!(
        s,
        "{:<20} {:>8} {:>8} {:>8} {:>8} {:>10} {:>10} {:>10}",
        "model", "nri %", "cfnri %", "event %", "nonev %", "top20 x", "top10 x", "top5 x"
    );
    for m in &r.models {
        let fold = |i: usize| m.enrichment.get(i).map(|e| format!("{:.2}", e.fold)).unwrap_or_default();
        let _ = writeln!(
            s,
            "{:<20} {:>8} {:>8} {:>8} {:>8} {:>10} {:>10} {:>10}",
            m.model,
            pct(m.nri),
            pct(m.cfnri),
            pct(m.cfnri_event),
            pct(m.cfnri_nonevent),
            fold(0),
            fold(1),
            fold(2)
        );
    }
    let _ = writeln!(s, "\nSubgroups (C statistic %)");
    for g in &r.subgroups {
        let mut line = format!("{:<16} n={:<7}", g.name, g.n);
        if g.skipped {
            line += " skipped";
        } else {
            for m in &g.models {
                line += &format!(
                    " {}={}",
                    m.model,
                    m.c_statistic.map(pct).unwrap_or_else(|| "-".into())
                );
            }
        }
        let _ = writeln!(s, "{line}");
    }
    s
}

pub fn cmd_report(cfg: &RunConfig) -> Result<String> {
    let report = load_report(cfg)?;
    let text = render_report(&report);
    write_atomic(cfg.out_dir.join("report.txt"), text.as_bytes())?;
    Ok(text)
}
