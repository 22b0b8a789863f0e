//! Model definitions and feature construction for every comparison model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cohort::CohortRow;
use crate::error::{Error, Result};
use crate::signal::MorphologyFeatures;

/// Number of PCA-derived waveform features fed to the survival model.
pub const DLS_FEATURES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Metadata,
    OfficeRefitWho,
    LabRefitWho,
    MetadataPpgMorph,
    Dls,
    DlsPlus,
    DlsPlusPlus,
    Full,
    Sbp140,
    SmokingOnly,
    OfficeNoSmoking,
    DlsNoSmoking,
}

impl ModelKind {
    pub const ALL: [ModelKind; 12] = [
        ModelKind::Metadata,
        ModelKind::OfficeRefitWho,
        ModelKind::LabRefitWho,
        ModelKind::MetadataPpgMorph,
        ModelKind::Dls,
        ModelKind::DlsPlus,
        ModelKind::DlsPlusPlus,
        ModelKind::Full,
        ModelKind::Sbp140,
        ModelKind::SmokingOnly,
        ModelKind::OfficeNoSmoking,
        ModelKind::DlsNoSmoking,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Metadata => "metadata",
            ModelKind::OfficeRefitWho => "office_refit_who",
            ModelKind::LabRefitWho => "lab_refit_who",
            ModelKind::MetadataPpgMorph => "metadata_ppg_morph",
            ModelKind::Dls => "dls",
            ModelKind::DlsPlus => "dls_plus",
            ModelKind::DlsPlusPlus => "dls_plus_plus",
            ModelKind::Full => "full",
            ModelKind::Sbp140 => "sbp140",
            ModelKind::SmokingOnly => "smoking_only",
            ModelKind::OfficeNoSmoking => "office_no_smoking",
            ModelKind::DlsNoSmoking => "dls_no_smoking",
        }
    }

    /// Whether the model consumes encoder-derived waveform features.
    pub fn needs_encoder(self) -> bool {
        matches!(
            self,
            ModelKind::Dls | ModelKind::DlsPlus | ModelKind::DlsPlusPlus | ModelKind::DlsNoSmoking
        )
    }

    pub fn needs_morphology(self) -> bool {
        self == ModelKind::MetadataPpgMorph
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown model {s}")))
    }
}

/// Product term between two declared covariates, built on the standardized
/// scale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub covariate: String,
    pub with: String,
}

impl Interaction {
    pub fn with_age(covariate: &str) -> Self {
        Interaction {
            covariate: covariate.to_string(),
            with: "age".to_string(),
        }
    }

    pub fn name(&self) -> String {
        format!("{}:{}", self.covariate, self.with)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub kind: Option<ModelKind>,
    pub covariates: Vec<String>,
    pub interactions: Vec<Interaction>,
}

const META: [&str; 4] = ["age", "sex", "male_smoker", "female_smoker"];
const PPG: [&str; 6] = ["ppg_1", "ppg_2", "ppg_3", "ppg_4", "ppg_5", "ppg_hr"];
const MORPH: [&str; 7] = [
    "ri",
    "dt_s",
    "peak_idx",
    "notch_idx",
    "notch_absent",
    "si_mps",
    "ppg_hr",
];

impl ModelSpec {
    pub fn builtin(kind: ModelKind) -> Self {
        let cat = |parts: &[&[&str]]| -> Vec<String> {
            parts.iter().flat_map(|p| p.iter().map(|s| s.to_string())).collect()
        };
        let inter = |names: &[&str]| names.iter().map(|n| Interaction::with_age(n)).collect();
        let (covariates, interactions) = match kind {
            ModelKind::Metadata => (cat(&[&META]), inter(&["male_smoker"])),
            ModelKind::OfficeRefitWho => (
                cat(&[&META, &["bmi", "sbp"]]),
                inter(&["male_smoker", "bmi", "sbp"]),
            ),
            ModelKind::LabRefitWho => (
                cat(&[&META, &["total_cholesterol", "glucose"]]),
                inter(&["male_smoker", "total_cholesterol", "glucose"]),
            ),
            ModelKind::MetadataPpgMorph => (cat(&[&META, &MORPH]), inter(&["male_smoker"])),
            ModelKind::Dls => (cat(&[&META, &PPG]), inter(&["male_smoker"])),
            ModelKind::DlsPlus => (
                cat(&[&META, &PPG, &["bmi"]]),
                inter(&["male_smoker", "bmi"]),
            ),
            ModelKind::DlsPlusPlus => (
                cat(&[&META, &PPG, &["bmi", "sbp"]]),
                inter(&["male_smoker", "bmi", "sbp"]),
            ),
            ModelKind::Full => (
                cat(&[
                    &META,
                    &["bmi", "sbp", "total_cholesterol", "glucose", "hba1c", "hypertension"],
                ]),
                inter(&["male_smoker", "bmi", "sbp", "total_cholesterol", "glucose"]),
            ),
            ModelKind::Sbp140 => (cat(&[&["sbp"]]), Vec::new()),
            ModelKind::SmokingOnly => (cat(&[&["smoker"]]), Vec::new()),
            ModelKind::OfficeNoSmoking => (
                cat(&[&["age", "sex", "bmi", "sbp"]]),
                inter(&["bmi", "sbp"]),
            ),
            ModelKind::DlsNoSmoking => (cat(&[&["age", "sex"], &PPG]), Vec::new()),
        };
        ModelSpec {
            name: kind.name().to_string(),
            kind: Some(kind),
            covariates,
            interactions,
        }
    }

    /// A user-defined covariate set. Covariate names must be ones
    /// [`build_features`] knows how to resolve.
    pub fn custom(
        name: impl Into<String>,
        covariates: Vec<String>,
        interactions: Vec<Interaction>,
    ) -> Result<Self> {
        let spec = ModelSpec {
            name: name.into(),
            kind: None,
            covariates,
            interactions,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn by_name(name: &str) -> Result<Self> {
        Ok(Self::builtin(name.parse()?))
    }

    pub fn validate(&self) -> Result<()> {
        for it in &self.interactions {
            for c in [&it.covariate, &it.with] {
                if !self.covariates.contains(c) {
                    return Err(Error::invalid(format!(
                        "interaction {} references undeclared covariate {c}",
                        it.name()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Pure threshold rule without a Cox fit.
    pub fn is_threshold_rule(&self) -> bool {
        self.kind == Some(ModelKind::Sbp140)
    }

    /// Column names of the expanded design: base covariates then interactions.
    pub fn design_names(&self) -> Vec<String> {
        self.covariates
            .iter()
            .cloned()
            .chain(self.interactions.iter().map(Interaction::name))
            .collect()
    }
}

/// Raw (unscaled) covariate values for one subject under one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub subject_id: String,
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

/// Waveform-derived inputs for one subject, when available.
#[derive(Debug, Clone, Copy, Default)]
pub struct PpgInputs<'a> {
    pub morphology: Option<&'a MorphologyFeatures>,
    pub dls: Option<&'a [f64; DLS_FEATURES]>,
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn resolve(name: &str, row: &CohortRow, ppg: &PpgInputs<'_>) -> Option<f64> {
    let morph = ppg.morphology;
    match name {
        "age" => row.age,
        "sex" => row.sex.map(flag),
        "smoker" => row.smoker.map(flag),
        "male_smoker" => Some(flag(!row.sex? && row.smoker?)),
        "female_smoker" => Some(flag(row.sex? && row.smoker?)),
        "height" => row.height,
        "bmi" => row.bmi,
        "sbp" => row.sbp,
        "total_cholesterol" => row.total_cholesterol,
        "glucose" => row.glucose,
        "hba1c" => row.hba1c,
        "hypertension" => row.hypertension.map(flag),
        "ppg_hr" => row.ppg_hr,
        "ri" => morph?.reflection_index,
        "dt_s" => morph?.peak_to_peak_time,
        "peak_idx" => Some(morph?.peak_position as f64),
        "notch_idx" => morph?.notch_position.map(|v| v as f64),
        "shoulder_idx" => morph?.shoulder_position.map(|v| v as f64),
        "notch_absent" => Some(flag(morph?.notch_absent)),
        "si_mps" => morph?.stiffness_index,
        other => {
            let k: usize = other.strip_prefix("ppg_")?.parse().ok()?;
            (1..=DLS_FEATURES).contains(&k).then(|| ppg.dls.map(|d| d[k - 1]))?
        }
    }
}

/// Resolves the model's base covariates for one row.
///
/// Sex and smoking enter as a female flag plus separate male-smoker and
/// female-smoker indicators. Interactions are not included here: they are
/// formed on the standardized scale by the fitted model.
pub fn build_features(spec: &ModelSpec, row: &CohortRow, ppg: &PpgInputs<'_>) -> Result<FeatureVector> {
    let mut values = Vec::with_capacity(spec.covariates.len());
    let mut missing = Vec::new();
    for name in &spec.covariates {
        match resolve(name, row, ppg) {
            Some(v) if v.is_finite() => values.push(v),
            _ => missing.push(name.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingCovariate(missing));
    }
    Ok(FeatureVector {
        subject_id: row.subject_id.clone(),
        names: spec.covariates.clone(),
        values,
    })
}

/// SBP-140 rule: 1 when systolic pressure is at least 140 mmHg.
pub fn sbp140_score(row: &CohortRow) -> Result<f64> {
    let sbp = row
        .sbp
        .ok_or_else(|| Error::MissingCovariate(vec!["sbp".into()]))?;
    Ok(flag(sbp >= 140.0))
}
