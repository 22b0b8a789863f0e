//! Proxy prediction tasks and the multitask loss.

use serde::{Deserialize, Serialize};

use crate::cohort::CohortRow;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification,
    Regression,
}

pub const NUM_TASKS: usize = 9;

/// Head order of the network.
pub const TASKS: [(&str, TaskKind); NUM_TASKS] = [
    ("sex", TaskKind::Classification),
    ("age", TaskKind::Regression),
    ("bmi_over_33", TaskKind::Classification),
    ("hypertension", TaskKind::Classification),
    ("hba1c_over_48", TaskKind::Classification),
    ("cholesterol_over_7_16", TaskKind::Classification),
    ("sbp_over_160", TaskKind::Classification),
    ("prior_mace", TaskKind::Classification),
    ("notch_present", TaskKind::Classification),
];

/// Train-split mean and SD used to standardize the age target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeScale {
    pub mean: f64,
    pub sd: f64,
}

impl AgeScale {
    pub fn from_rows(rows: &[CohortRow]) -> Result<Self> {
        let ages: Vec<f64> = rows.iter().filter_map(|r| r.age).collect();
        if ages.len() < 2 {
            return Err(Error::invalid("need at least two ages to standardize the age target"));
        }
        let sd = crate::stats::sample_sd(&ages);
        Ok(AgeScale {
            mean: crate::stats::mean(&ages),
            sd: if sd > 0.0 { sd } else { 1.0 },
        })
    }
}

/// Per-subject labels; `None` drops the task from that subject's loss.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProxyTargets {
    pub values: [Option<f64>; NUM_TASKS],
}

impl ProxyTargets {
    pub fn from_row(row: &CohortRow, notch_present: Option<bool>, age: AgeScale) -> Self {
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        let over = |v: Option<f64>, cut: f64| v.map(|v| flag(v > cut));
        ProxyTargets {
            values: [
                row.sex.map(flag),
                row.age.map(|a| (a - age.mean) / age.sd),
                over(row.bmi, 33.0),
                row.hypertension.map(flag),
                over(row.hba1c, 48.0),
                over(row.total_cholesterol, 7.16),
                over(row.sbp, 160.0),
                Some(flag(row.prior_mi_or_stroke)),
                notch_present.map(flag),
            ],
        }
    }

    pub fn present(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean over present tasks of binary cross-entropy on logits or squared
/// error on the standardized age. Returns the total, per-task losses, and
/// the derivative of the total with respect to each head output.
pub fn multitask_loss(
    heads: &[f64],
    targets: &ProxyTargets,
) -> Result<(f64, [Option<f64>; NUM_TASKS], [f64; NUM_TASKS])> {
    if heads.len() != NUM_TASKS {
        return Err(Error::invalid(format!("expected {NUM_TASKS} head outputs, got {}", heads.len())));
    }
    let n = targets.present();
    if n == 0 {
        return Err(Error::invalid("no proxy targets present"));
    }
    let mut per = [None; NUM_TASKS];
    let mut grad = [0.0; NUM_TASKS];
    let mut total = 0.0;
    for (k, (&z, y)) in heads.iter().zip(&targets.values).enumerate() {
        let Some(y) = *y else { continue };
        let (loss, d) = match TASKS[k].1 {
            TaskKind::Classification => (softplus(z) - y * z, crate::stats::sigmoid(z) - y),
            TaskKind::Regression => ((z - y) * (z - y), 2.0 * (z - y)),
        };
        per[k] = Some(loss);
        total += loss;
        grad[k] = d / n as f64;
    }
    Ok((total / n as f64, per, grad))
}
