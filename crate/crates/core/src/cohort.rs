//! Cohort data model, CSV ingestion, inclusion rules, geographic splits,
//! composite outcome construction and the synthetic cohort generator.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, stream};
use crate::signal::{self, Waveform};
use crate::stats::sigmoid;

pub const DAYS_PER_YEAR: f64 = 365.25;

/// Column order of the cohort CSV.
pub const COHORT_COLUMNS: [&str; 16] = [
    "subject_id",
    "site",
    "age",
    "sex",
    "smoker",
    "height",
    "bmi",
    "sbp",
    "total_cholesterol",
    "glucose",
    "hba1c",
    "hypertension",
    "prior_mi_or_stroke",
    "followup_days",
    "event",
    "ppg_hr",
];

const MANDATORY: [&str; 7] = [
    "subject_id",
    "site",
    "age",
    "sex",
    "smoker",
    "followup_days",
    "event",
];

/// One participant at their first visit.
///
/// `sex` is the female flag and `smoker` the ever-smoker flag. Event and
/// censoring times are days since the baseline visit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRow {
    pub subject_id: String,
    pub site: String,
    pub age: Option<f64>,
    pub sex: Option<bool>,
    pub smoker: Option<bool>,
    pub height: Option<f64>,
    pub bmi: Option<f64>,
    pub sbp: Option<f64>,
    pub total_cholesterol: Option<f64>,
    pub glucose: Option<f64>,
    pub hba1c: Option<f64>,
    pub hypertension: Option<bool>,
    pub prior_mi_or_stroke: bool,
    pub followup_days: f64,
    pub event: bool,
    /// Waveform store key; `None` means the subject id is the key.
    pub ppg_ref: Option<String>,
    pub ppg_hr: Option<f64>,
}

impl CohortRow {
    pub fn waveform_key(&self) -> &str {
        self.ppg_ref.as_deref().unwrap_or(&self.subject_id)
    }

    pub fn followup_years(&self) -> f64 {
        self.followup_days / DAYS_PER_YEAR
    }
}

/// Maps logical cohort fields to CSV header names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub columns: BTreeMap<String, String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            columns: COHORT_COLUMNS
                .iter()
                .map(|c| (c.to_string(), c.to_string()))
                .collect(),
        }
    }
}

impl ColumnMap {
    fn header_for<'a>(&'a self, field: &'a str) -> &'a str {
        self.columns.get(field).map(String::as_str).unwrap_or(field)
    }
}

pub fn load_cohort(path: impl AsRef<Path>, schema: &ColumnMap) -> Result<Vec<CohortRow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_cohort(file, schema)
}

pub fn read_cohort<R: Read>(reader: R, schema: &ColumnMap) -> Result<Vec<CohortRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for field in COHORT_COLUMNS.iter().copied().chain(["ppg_ref"]) {
        let name = schema.header_for(field);
        if let Some(pos) = headers.iter().position(|h| h == name) {
            index.insert(field, pos);
        } else if MANDATORY.contains(&field) {
            return Err(Error::MissingColumn(name.to_string()));
        }
    }

    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row_no = i + 1;
        let cell = |field: &str| -> Option<&str> {
            index
                .get(field)
                .and_then(|&p| record.get(p))
                .filter(|s| !s.is_empty() && !s.eq_ignore_ascii_case("na"))
        };
        let err = |field: &str, msg: String| Error::Parse {
            row: row_no,
            column: schema.header_for(field).to_string(),
            message: msg,
        };
        let num = |field: &str| -> Result<Option<f64>> {
            match cell(field) {
                None => Ok(None),
                Some(s) => match s.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(Some(v)),
                    _ => Err(err(field, format!("\"{s}\" is not a number"))),
                },
            }
        };
        let flag = |field: &str| -> Result<Option<bool>> {
            match cell(field) {
                None => Ok(None),
                Some("1") | Some("true") | Some("TRUE") | Some("True") => Ok(Some(true)),
                Some("0") | Some("false") | Some("FALSE") | Some("False") => Ok(Some(false)),
                Some(s) => Err(err(field, format!("\"{s}\" is not a binary flag"))),
            }
        };
        let positive = |field: &str| -> Result<Option<f64>> {
            match num(field)? {
                Some(v) if v <= 0.0 => Err(err(field, format!("{v} must be positive"))),
                v => Ok(v),
            }
        };

        let subject_id = cell("subject_id")
            .ok_or_else(|| err("subject_id", "empty subject_id".into()))?
            .to_string();
        if !seen.insert(subject_id.clone()) {
            return Err(Error::DuplicateSubject(subject_id));
        }
        let site = cell("site")
            .ok_or_else(|| err("site", "empty site".into()))?
            .to_string();
        let followup_days =
            num("followup_days")?.ok_or_else(|| err("followup_days", "missing value".into()))?;
        if followup_days < 0.0 {
            return Err(err("followup_days", "must be >= 0".into()));
        }
        let event = flag("event")?.ok_or_else(|| err("event", "missing value".into()))?;

        rows.push(CohortRow {
            subject_id,
            site,
            age: positive("age")?,
            sex: flag("sex")?,
            smoker: flag("smoker")?,
            height: positive("height")?,
            bmi: positive("bmi")?,
            sbp: positive("sbp")?,
            total_cholesterol: num("total_cholesterol")?,
            glucose: num("glucose")?,
            hba1c: num("hba1c")?,
            hypertension: flag("hypertension")?,
            prior_mi_or_stroke: flag("prior_mi_or_stroke")?.unwrap_or(false),
            followup_days,
            event,
            ppg_ref: cell("ppg_ref").map(str::to_string),
            ppg_hr: num("ppg_hr")?,
        });
    }
    Ok(rows)
}

pub fn write_cohort<W: Write>(writer: W, rows: &[CohortRow]) -> Result<()> {
    fn num(v: Option<f64>) -> String {
        v.map(|x| x.to_string()).unwrap_or_else(|| "NA".into())
    }
    fn flag(v: Option<bool>) -> String {
        v.map(|b| u8::from(b).to_string()).unwrap_or_else(|| "NA".into())
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COHORT_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.subject_id.clone(),
            r.site.clone(),
            num(r.age),
            flag(r.sex),
            flag(r.smoker),
            num(r.height),
            num(r.bmi),
            num(r.sbp),
            num(r.total_cholesterol),
            num(r.glucose),
            num(r.hba1c),
            flag(r.hypertension),
            flag(Some(r.prior_mi_or_stroke)),
            r.followup_days.to_string(),
            flag(Some(r.event)),
            num(r.ppg_hr),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<cohort csv>", e))?;
    Ok(())
}

/// Subject-keyed collection of equal-length waveforms.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WaveformStore {
    length: usize,
    sample_period: f64,
    keys: Vec<String>,
    index: HashMap<String, usize>,
    waves: Vec<Vec<f64>>,
}

impl WaveformStore {
    /// Stored pulses are taken to span one second, so the sample period is
    /// `1 / length`.
    pub fn new(length: usize) -> Self {
        WaveformStore {
            length,
            sample_period: 1.0 / length as f64,
            ..Default::default()
        }
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn insert(&mut self, key: impl Into<String>, samples: Vec<f64>) -> Result<()> {
        let key = key.into();
        if samples.len() != self.length {
            return Err(Error::invalid(format!(
                "waveform for {key} has {} samples, store length is {}",
                samples.len(),
                self.length
            )));
        }
        if self.index.contains_key(&key) {
            return Err(Error::DuplicateSubject(key));
        }
        self.index.insert(key.clone(), self.keys.len());
        self.keys.push(key);
        self.waves.push(samples);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<Waveform> {
        self.index
            .get(key)
            .map(|&i| Waveform::new(self.waves[i].clone(), self.sample_period))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.keys.iter().map(String::as_str)
    }

    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::invalid("empty waveform store"))?
            .map_err(|e| Error::io("<waveform store>", e))?;
        let length: usize = first
            .trim()
            .strip_prefix("#length=")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::invalid("waveform store must start with #length=L"))?;
        let mut store = WaveformStore::new(length);
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io("<waveform store>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let key = parts.next().unwrap_or_default().trim().to_string();
            let samples = parts
                .enumerate()
                .map(|(j, s)| {
                    s.trim().parse::<f64>().map_err(|_| Error::Parse {
                        row: i + 1,
                        column: format!("s_{j}"),
                        message: format!("\"{s}\" is not a number"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            store.insert(key, samples)?;
        }
        Ok(store)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(file)
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "#length={}", self.length)?;
        for (key, wave) in self.keys.iter().zip(&self.waves) {
            write!(w, "{key}")?;
            for v in wave {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionLog {
    pub age: usize,
    pub prior_event: usize,
    pub missing_core: usize,
    pub missing_bmi_sbp: usize,
}

impl ExclusionLog {
    pub fn total(&self) -> usize {
        self.age + self.prior_event + self.missing_core + self.missing_bmi_sbp
    }
}

/// Applies the inclusion rules in a fixed order; each excluded row is
/// attributed to the first rule it fails.
pub fn apply_inclusion(rows: &[CohortRow]) -> (Vec<CohortRow>, ExclusionLog) {
    let mut log = ExclusionLog::default();
    let mut kept = Vec::with_capacity(rows.len());
    for r in rows {
        if r.age.is_some_and(|a| !(40.0..=74.0).contains(&a)) {
            log.age += 1;
        } else if r.prior_mi_or_stroke {
            log.prior_event += 1;
        } else if r.age.is_none() || r.sex.is_none() || r.smoker.is_none() {
            log.missing_core += 1;
        } else if r.bmi.is_none() || r.sbp.is_none() {
            log.missing_bmi_sbp += 1;
        } else {
            kept.push(r.clone());
        }
    }
    (kept, log)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Tune,
    Test,
}

/// Site to split mapping. A `BTreeMap` keeps each site in exactly one split.
pub type SplitAssignment = BTreeMap<String, Split>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<CohortRow>,
    pub tune: Vec<CohortRow>,
    pub test: Vec<CohortRow>,
}

pub fn split_by_site(rows: &[CohortRow], assignment: &SplitAssignment) -> Result<Splits> {
    let mut out = Splits::default();
    for r in rows {
        let split = assignment
            .get(&r.site)
            .ok_or_else(|| Error::UnknownSite(r.site.clone()))?;
        match split {
            Split::Train => out.train.push(r.clone()),
            Split::Tune => out.tune.push(r.clone()),
            Split::Test => out.test.push(r.clone()),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventSource {
    Mi,
    Stroke,
    CvdDeath,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub subject_id: String,
    pub source: EventSource,
    /// Days since the baseline visit.
    pub day: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaceOutcome {
    pub subject_id: String,
    pub earliest_day: Option<f64>,
    pub event: bool,
}

/// Composite outcome: the earliest record across all sources.
pub fn build_mace_outcome(subjects: &[String], records: &[EventRecord]) -> Result<Vec<MaceOutcome>> {
    let mut earliest: HashMap<&str, f64> = HashMap::new();
    let known: HashSet<&str> = subjects.iter().map(String::as_str).collect();
    for rec in records {
        if !known.contains(rec.subject_id.as_str()) {
            return Err(Error::invalid(format!(
                "event record for unknown subject {}",
                rec.subject_id
            )));
        }
        if rec.day < 0.0 || !rec.day.is_finite() {
            return Err(Error::invalid(format!(
                "event for {} on day {} precedes the baseline visit",
                rec.subject_id, rec.day
            )));
        }
        let e = earliest.entry(rec.subject_id.as_str()).or_insert(rec.day);
        *e = e.min(rec.day);
    }
    Ok(subjects
        .iter()
        .map(|s| {
            let day = earliest.get(s.as_str()).copied();
            MaceOutcome {
                subject_id: s.clone(),
                earliest_day: day,
                event: day.is_some(),
            }
        })
        .collect())
}

/// Names accepted in `SyntheticSpec::true_coefficients`.
pub const TRUTH_COVARIATES: [&str; 6] = ["age", "sex", "smoker", "bmi", "sbp", "vascular"];

/// Population mean and SD used to standardize each truth covariate.
/// `vascular` is the subject-specific component of the vascular latent,
/// already standard normal.
pub fn truth_scaling(name: &str) -> Option<(f64, f64)> {
    Some(match name {
        "age" => (57.0, 34.0 / 12f64.sqrt()),
        "sex" => (0.5, 0.5),
        "smoker" => (0.4, 0.24f64.sqrt()),
        "bmi" => (27.0, 4.0),
        "sbp" => (137.0, 18.0),
        "vascular" => (0.0, 1.0),
        _ => return None,
    })
}

/// Weights of age and SBP in the vascular latent that shapes waveforms.
pub const LATENT_AGE_WEIGHT: f64 = 0.5;
pub const LATENT_SBP_WEIGHT: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_subjects: usize,
    /// Log hazard ratios per standardized covariate (see `TRUTH_COVARIATES`).
    pub true_coefficients: BTreeMap<String, f64>,
    /// Exponential baseline hazard, events per year.
    pub baseline_rate: f64,
    /// Administrative end of follow-up, years.
    pub censor_horizon: f64,
    /// Intensity of exponential drop-out, per year.
    pub censor_rate: f64,
    pub seed: u64,
    pub sites: Vec<String>,
    pub waveform_length: usize,
    pub prior_event_rate: f64,
    pub lab_missing_rate: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_subjects: 1000,
            true_coefficients: BTreeMap::new(),
            baseline_rate: 0.01,
            censor_horizon: 12.0,
            censor_rate: 0.02,
            seed: 0,
            sites: (1..=8).map(|i| format!("site{i:02}")).collect(),
            waveform_length: signal::CANONICAL_LENGTH,
            prior_event_rate: 0.03,
            lab_missing_rate: 0.1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 {
            return Err(Error::invalid("n_subjects must be at least 1"));
        }
        if !(self.baseline_rate > 0.0) {
            return Err(Error::invalid("baseline_rate must be positive"));
        }
        if !(self.censor_horizon > 0.0) {
            return Err(Error::invalid("censor_horizon must be positive"));
        }
        if !(self.censor_rate >= 0.0) {
            return Err(Error::invalid("censor_rate must be non-negative"));
        }
        if self.sites.is_empty() {
            return Err(Error::invalid("at least one site is required"));
        }
        if self.waveform_length < 32 {
            return Err(Error::invalid("waveform_length must be at least 32"));
        }
        for k in self.true_coefficients.keys() {
            if truth_scaling(k).is_none() {
                return Err(Error::invalid(format!("unknown truth covariate {k}")));
            }
        }
        Ok(())
    }
}

/// Ground truth the generator used for one subject.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectTruth {
    pub linear_predictor: f64,
    pub vascular: f64,
    pub latent: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub rows: Vec<CohortRow>,
    pub waveforms: WaveformStore,
    pub truth: BTreeMap<String, f64>,
    pub subjects: Vec<SubjectTruth>,
    pub baseline_rate: f64,
}

impl SyntheticCohort {
    /// Generator-true probability of an event within `years`.
    pub fn true_risk(&self, index: usize, years: f64) -> f64 {
        let eta = self.subjects[index].linear_predictor;
        1.0 - (-self.baseline_rate * years * eta.exp()).exp()
    }
}

/// Draws a synthetic cohort.
///
/// Covariates: age ~ U[40, 74]; female ~ Bernoulli(0.5); ever-smoker ~
/// Bernoulli(0.4); height ~ N(163, 6.5) for women and N(176, 7) for men;
/// BMI ~ N(27, 4) clipped at 12; SBP ~ N(137, 18) clipped at 70; total
/// cholesterol ~ N(5.7, 1.1), glucose ~ N(5.1, 1.0) and HbA1c ~ N(36, 6),
/// each clipped at a floor and independently missing with
/// `lab_missing_rate`; hypertension ~ Bernoulli(sigmoid((SBP - 140) / 8));
/// prior MI/stroke ~ Bernoulli(`prior_event_rate`); PPG heart rate ~
/// N(70, 10) clipped at 35.
///
/// The vascular latent is `0.5 z_age + 0.3 z_sbp + u` with `u ~ N(0, 1)`
/// and shapes the waveform through [`signal::synth_pulse`]. The linear
/// predictor is the truth vector dotted with covariates standardized by
/// [`truth_scaling`], where `vascular` refers to `u`. Event times follow an
/// exponential baseline hazard by inverse-transform sampling.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCohort> {
    spec.validate()?;
    let len = spec.waveform_length;
    let drawn: Vec<(CohortRow, SubjectTruth, Vec<f64>)> = (0..spec.n_subjects)
        .into_par_iter()
        .map(|i| draw_subject(spec, i as u64))
        .collect::<Result<_>>()?;

    let mut waveforms = WaveformStore::new(len);
    let mut rows = Vec::with_capacity(drawn.len());
    let mut subjects = Vec::with_capacity(drawn.len());
    for (row, truth, wave) in drawn {
        waveforms.insert(row.subject_id.clone(), wave)?;
        rows.push(row);
        subjects.push(truth);
    }
    Ok(SyntheticCohort {
        rows,
        waveforms,
        truth: spec.true_coefficients.clone(),
        subjects,
        baseline_rate: spec.baseline_rate,
    })
}

fn draw_subject(spec: &SyntheticSpec, i: u64) -> Result<(CohortRow, SubjectTruth, Vec<f64>)> {
    let mut cov = rng::keyed(&[spec.seed, i, stream::COVARIATES]);
    let normal = |rng: &mut rand_chacha::ChaCha8Rng, mean: f64, sd: f64| -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        mean + sd * z
    };
    let age = 40.0 + 34.0 * cov.random::<f64>();
    let female = cov.random::<f64>() < 0.5;
    let smoker = cov.random::<f64>() < 0.4;
    let height = if female {
        normal(&mut cov, 163.0, 6.5)
    } else {
        normal(&mut cov, 176.0, 7.0)
    };
    let bmi = normal(&mut cov, 27.0, 4.0).max(12.0);
    let sbp = normal(&mut cov, 137.0, 18.0).max(70.0);
    let mut lab = |mean: f64, sd: f64, floor: f64| {
        let v = normal(&mut cov, mean, sd).max(floor);
        let missing = cov.random::<f64>() < spec.lab_missing_rate;
        (!missing).then_some(v)
    };
    let total_cholesterol = lab(5.7, 1.1, 2.0);
    let glucose = lab(5.1, 1.0, 2.5);
    let hba1c = lab(36.0, 6.0, 20.0);
    let hypertension = cov.random::<f64>() < sigmoid((sbp - 140.0) / 8.0);
    let prior = cov.random::<f64>() < spec.prior_event_rate;
    let ppg_hr = normal(&mut cov, 70.0, 10.0).max(35.0);
    let vascular: f64 = StandardNormal.sample(&mut cov);

    let z = |name: &str, raw: f64| {
        let (m, s) = truth_scaling(name).expect("known covariate");
        (raw - m) / s
    };
    let raw_of = |name: &str| match name {
        "age" => age,
        "sex" => f64::from(u8::from(female)),
        "smoker" => f64::from(u8::from(smoker)),
        "bmi" => bmi,
        "sbp" => sbp,
        _ => vascular,
    };
    let eta: f64 = spec
        .true_coefficients
        .iter()
        .map(|(k, b)| b * z(k, raw_of(k)))
        .sum();
    let latent = LATENT_AGE_WEIGHT * z("age", age) + LATENT_SBP_WEIGHT * z("sbp", sbp) + vascular;

    let mut ev = rng::keyed(&[spec.seed, i, stream::EVENT_TIME]);
    let u: f64 = 1.0 - ev.random::<f64>();
    let event_time = -u.ln() / (spec.baseline_rate * eta.exp());
    let mut cens = rng::keyed(&[spec.seed, i, stream::CENSORING]);
    let dropout = if spec.censor_rate > 0.0 {
        Exp::new(spec.censor_rate)
            .map_err(|e| Error::invalid(e.to_string()))?
            .sample(&mut cens)
    } else {
        f64::INFINITY
    };
    let censor_time = spec.censor_horizon.min(dropout);
    let event = event_time <= censor_time;
    let followup = event_time.min(censor_time);

    let site_idx = rng::keyed(&[spec.seed, i, stream::SITE]).random_range(0..spec.sites.len());
    let wave_seed: u64 = rng::keyed(&[spec.seed, i, stream::WAVEFORM]).random();
    let wave = signal::synth_pulse(latent, spec.waveform_length, wave_seed)?;

    let row = CohortRow {
        subject_id: format!("S{i:06}"),
        site: spec.sites[site_idx].clone(),
        age: Some(age),
        sex: Some(female),
        smoker: Some(smoker),
        height: Some(height),
        bmi: Some(bmi),
        sbp: Some(sbp),
        total_cholesterol,
        glucose,
        hba1c,
        hypertension: Some(hypertension),
        prior_mi_or_stroke: prior,
        followup_days: followup * DAYS_PER_YEAR,
        event,
        ppg_ref: None,
        ppg_hr: Some(ppg_hr),
    };
    let truth = SubjectTruth {
        linear_predictor: eta,
        vascular,
        latent,
    };
    Ok((row, truth, wave.samples))
}
